use koopctl_core::edmd::{fit_lifted_model, AssembleOptions};
use koopctl_core::systems::{
    closed_loop_simulate, generate_training_data, input_field_samples, invariant_measure_histogram,
    simulate_unforced, uniform_initial_conditions, ControlAffineSystem, Henon, Rect, VanDerPol,
};
use koopctl_core::{DVector, Dictionary, LiftedBilinearModel};

fn vdp_model() -> LiftedBilinearModel {
    let system = VanDerPol::default();
    let x0 = uniform_initial_conditions(5, &[(-3.0, 3.0), (-3.0, 3.0)], 4);
    let data = generate_training_data(&system, &x0, 300).unwrap().data;
    let dict = Dictionary::new(2, 3, false).unwrap();
    let g = input_field_samples(&system, &data);
    fit_lifted_model(&data, &dict, &g, AssembleOptions::default()).unwrap().0
}

#[test]
fn zero_gain_reproduces_unforced_run() {
    let system = VanDerPol::default();
    let model = vdp_model();
    let x0 = [0.4, -1.1];
    let open = simulate_unforced(&system, &x0, 400).unwrap();
    let closed = closed_loop_simulate(&system, &model, &DVector::zeros(model.dim()), &x0, 400, None)
        .unwrap();
    assert_eq!(open.states, closed.states);
    assert!(closed.check_consistency(&system).is_none());
}

#[test]
fn van_der_pol_origin_is_invariant_under_any_gain() {
    let system = VanDerPol::default();
    let model = vdp_model();
    let k = DVector::from_fn(model.dim(), |i, _| (i as f64) - 2.0);
    let run = closed_loop_simulate(&system, &model, &k, &[0.0, 0.0], 50, None).unwrap();
    assert!(run.states.iter().all(|x| x == &vec![0.0, 0.0]));
}

#[test]
fn van_der_pol_settles_on_limit_cycle() {
    let system = VanDerPol::default();
    let run = simulate_unforced(&system, &[0.1, 0.0], 5000).unwrap();
    let tail_max = run.states[4000..]
        .iter()
        .map(|x| x[0].hypot(x[1]))
        .fold(0.0, f64::max);
    // the cycle has amplitude about 2 in x
    assert!(tail_max > 1.9 && tail_max < 3.0, "{tail_max}");
}

#[test]
fn henon_attractor_mass_stays_in_box() {
    let system = Henon::default();
    assert_eq!(system.state_dim(), 2);
    let bounds = Rect {
        x_min: -1.5,
        x_max: 1.5,
        y_min: -0.45,
        y_max: 0.45,
    };
    let h = invariant_measure_histogram(&system, &[0.0, 0.0], 200_000, 100, (60, 40), bounds).unwrap();
    assert!(h.overflow < 0.01);
    assert!((h.in_bounds_mass() + h.overflow - 1.0).abs() < 1e-12);
    assert!(h.occupied_cells() > 50);
}
