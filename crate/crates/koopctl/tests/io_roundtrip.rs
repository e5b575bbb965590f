use koopctl::io::{
    read_model, read_timeseries_csv, render_svg, write_model, write_timeseries_csv, ModelFile,
    PlotStyle, Provenance, Series, SynthesisFile,
};
use koopctl::pipeline::{fit, InputField, Plant};
use koopctl_core::synthesis::{SynthesisResult, SynthesisStatus};
use koopctl_core::systems::{
    generate_training_data, simulate_unforced, uniform_initial_conditions, Trajectory, VanDerPol,
};
use koopctl_core::{DMatrix, DVector};
use proptest::prelude::*;

fn vdp_training(dir: &std::path::Path) -> std::path::PathBuf {
    let sys = VanDerPol::default();
    let x0 = uniform_initial_conditions(4, &[(-3.0, 3.0), (-3.0, 3.0)], 11);
    let data = generate_training_data(&sys, &x0, 300).unwrap();
    let path = dir.join("data.csv");
    write_timeseries_csv(&path, &data.trajectories).unwrap();
    path
}

#[test]
fn simulated_trajectory_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let traj = simulate_unforced(&VanDerPol::default(), &[0.123_456_789_012_345_68, -2.0 / 3.0], 500).unwrap();
    let path = dir.path().join("t.csv");
    write_timeseries_csv(&path, std::slice::from_ref(&traj)).unwrap();
    let back = read_timeseries_csv(&path).unwrap();
    assert_eq!(back.trajectories, vec![traj]);
}

#[test]
fn multi_trajectory_file_has_no_cross_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let path = vdp_training(dir.path());
    let ts = read_timeseries_csv(&path).unwrap();
    assert_eq!(ts.trajectories.len(), 4);
    let data = ts.snapshots().unwrap();
    assert_eq!(data.len(), 4 * 300);
    assert_eq!(ts.time_step().unwrap(), Some(0.01));
    // every pair is one integrator step
    let sys = VanDerPol::default();
    for m in 0..data.len() {
        let next = koopctl_core::systems::ControlAffineSystem::step(&sys, &data.state(m), 0.0).unwrap();
        assert_eq!(next, vec![data.y()[(m, 0)], data.y()[(m, 1)]]);
    }
}

#[test]
fn fitted_vdp_model_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let data_path = vdp_training(dir.path());
    let ts = read_timeseries_csv(&data_path).unwrap();
    let fitted = fit(&ts, &data_path, 5, true, &InputField::Plant(Plant::VanDerPol(Default::default()))).unwrap();
    assert_eq!(fitted.dictionary_size, 21);
    assert_eq!(fitted.model.dim(), 20);
    let path = dir.path().join("model.json");
    write_model(&path, &fitted.file).unwrap();
    let back = read_model(&path).unwrap();
    assert_eq!(back, fitted.file);
    let model = back.to_model().unwrap();
    assert_eq!(model, fitted.model);
}

#[test]
fn two_series_figure() {
    let traj = simulate_unforced(&VanDerPol::default(), &[1.0, 0.0], 200).unwrap();
    let s = |label: &str, t: &Trajectory| Series {
        label: label.into(),
        points: t.states.iter().map(|x| (x[0], x[1])).collect(),
    };
    let svg = render_svg(&[s("open loop", &traj), s("closed loop", &traj)], &PlotStyle::default()).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.contains("open loop") && svg.contains("closed loop"));
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(
        rows in prop::collection::vec(prop::collection::vec(finite(), 3), 2..20),
        inputs in prop::collection::vec(finite(), 19),
        forced in any::<bool>(),
        dt in prop::option::of(1e-4..1.0f64),
    ) {
        let n = rows.len();
        let traj = Trajectory {
            states: rows,
            inputs: forced.then(|| inputs[..n - 1].to_vec()),
            dt,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_timeseries_csv(&path, std::slice::from_ref(&traj)).unwrap();
        let back = read_timeseries_csv(&path).unwrap();
        let got = &back.trajectories[0];
        prop_assert_eq!(&got.states, &traj.states);
        prop_assert_eq!(&got.inputs, &traj.inputs);
        // the time column stores t·dt, so the step is recovered to rounding
        match (got.dt, dt) {
            (Some(a), Some(b)) => prop_assert!((a - b).abs() <= 1e-15 * b.max(1.0)),
            (None, None) => {}
            (a, b) => prop_assert!(false, "dt {:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn synthesis_file_round_trip(
        n in 1usize..5,
        vals in prop::collection::vec(finite(), 40),
        status in 0usize..4,
    ) {
        let status = [SynthesisStatus::Optimal, SynthesisStatus::Feasible, SynthesisStatus::Infeasible, SynthesisStatus::Unbounded][status];
        let r = SynthesisResult {
            q: DMatrix::from_fn(n, n, |i, j| vals[i * n + j]),
            y: DVector::from_fn(n, |i, _| vals[20 + i]),
            k: DVector::from_fn(n, |i, _| vals[30 + i]),
            epsilon: vals[35].abs(),
            theta: vals[36],
            objective: vals[37],
            lmi_max_eigenvalue: vals[38],
            status,
            iterations: n,
        };
        let text = serde_json::to_string(&SynthesisFile::from(&r)).unwrap();
        let back: SynthesisFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back.to_result().unwrap(), r);
    }

    #[test]
    fn model_file_round_trip(vals in prop::collection::vec(finite(), 64)) {
        use koopctl::io::{DictionarySpec, MatrixData, Residuals};
        let m = |off: usize, r: usize, c: usize| MatrixData { rows: r, cols: c, data: vals[off..off + r * c].to_vec() };
        let dict = koopctl_core::Dictionary::new(1, 2, false).unwrap();
        let file = ModelFile {
            format_version: 1,
            dictionary: DictionarySpec::from_dictionary(&dict),
            a: m(0, 2, 2),
            b: m(4, 2, 2),
            c: m(8, 1, 2),
            w: m(10, 2, 2),
            eigenvalues: vec![[vals[14], 0.0], [vals[15], 0.0]],
            removed_direction: None,
            provenance: Provenance {
                data_sha256: "ab".into(),
                fit_timestamp: Some(vals[16].abs() as u64),
                residuals: Residuals {
                    regression: vals[17],
                    eigen: vals[18],
                    transform_condition: vals[19],
                    input_fit: vals[20],
                    reconstruction: vals[21],
                    rank_g: 2,
                },
            },
        };
        let text = serde_json::to_string_pretty(&file).unwrap();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, file);
    }
}
