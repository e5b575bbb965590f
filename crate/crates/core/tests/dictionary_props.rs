use koopctl_core::Dictionary;
use proptest::prelude::*;

fn central_difference(dict: &Dictionary, x: &[f64], j: usize, h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[j] += h;
    xm[j] -= h;
    let fp = dict.evaluate(&xp).unwrap();
    let fm = dict.evaluate(&xm).unwrap();
    fp.iter().zip(fm.iter()).map(|(a, b)| (a - b) / (2.0 * h)).collect()
}

/// Monomial value by repeated multiplication.
fn monomial(x: &[f64], exps: &[u32]) -> f64 {
    let mut v = 1.0;
    for (xi, &e) in x.iter().zip(exps) {
        for _ in 0..e {
            v *= xi;
        }
    }
    v
}

proptest! {
    #[test]
    fn jacobian_matches_central_differences(
        d in 1usize..=3,
        degree in 1u32..=5,
        raw in proptest::collection::vec(-1.5f64..1.5, 3),
    ) {
        let dict = Dictionary::new(d, degree, true).unwrap();
        let x = &raw[..d];
        let jac = dict.jacobian(x).unwrap();
        for j in 0..d {
            let fd = central_difference(&dict, x, j, 1e-5);
            for (i, v) in fd.iter().enumerate() {
                let scale = 1.0 + v.abs();
                prop_assert!((jac[(i, j)] - v).abs() <= 1e-6 * scale,
                    "entry ({i},{j}): {} vs {}", jac[(i, j)], v);
            }
        }
    }

    #[test]
    fn evaluation_is_deterministic_and_matches_monomials(
        d in 1usize..=3,
        degree in 1u32..=4,
        constant in any::<bool>(),
        raw in proptest::collection::vec(-2.0f64..2.0, 3),
    ) {
        let dict = Dictionary::new(d, degree, constant).unwrap();
        let x = &raw[..d];
        let phi = dict.evaluate(x).unwrap();
        prop_assert_eq!(&phi, &dict.evaluate(x).unwrap());
        for (i, idx) in dict.indices().iter().enumerate() {
            let expected = monomial(x, idx.exponents());
            prop_assert!((phi[i] - expected).abs() <= 1e-14 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn monomials_are_homogeneous(
        d in 1usize..=3,
        degree in 1u32..=5,
        c in -3.0f64..3.0,
        raw in proptest::collection::vec(-1.0f64..1.0, 3),
    ) {
        let dict = Dictionary::new(d, degree, false).unwrap();
        let x = &raw[..d];
        let cx: Vec<f64> = x.iter().map(|v| c * v).collect();
        let phi = dict.evaluate(x).unwrap();
        let phi_c = dict.evaluate(&cx).unwrap();
        for (i, idx) in dict.indices().iter().enumerate() {
            let expected = c.powi(idx.degree() as i32) * phi[i];
            prop_assert!((phi_c[i] - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }
}

#[test]
fn jacobian_on_hundred_points_per_configuration() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for d in 1..=3 {
        for degree in 1..=5 {
            let dict = Dictionary::new(d, degree, true).unwrap();
            for _ in 0..100 {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                let jac = dict.jacobian(&x).unwrap();
                for j in 0..d {
                    let fd = central_difference(&dict, &x, j, 1e-5);
                    for (i, v) in fd.iter().enumerate() {
                        worst = worst.max((jac[(i, j)] - v).abs());
                    }
                }
            }
        }
    }
    assert!(worst <= 1e-6, "worst deviation {worst}");
}
