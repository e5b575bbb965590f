//! Sample-level check of the quadratic control Lyapunov function.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClfReport {
    pub num_samples: usize,
    pub max_delta_v: f64,
    /// Fraction of samples with `ΔV < 0`.
    pub fraction_negative: f64,
    /// Largest `ΔV + (1 − θ) V` over the samples.
    pub max_violation: f64,
    pub tolerance: f64,
    /// `max_violation ≤ tolerance`.
    pub pass: bool,
}

impl ClfReport {
    pub fn all_negative(&self) -> bool {
        self.fraction_negative == 1.0
    }
}

/// `n` points uniformly distributed in `{z : zᵀ Q⁻¹ z ≤ 1}`, none equal to 0.
pub fn sample_ellipsoid(q: &DMatrix<f64>, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let n = q.nrows();
    let chol = Cholesky::new(q.clone())
        .ok_or_else(|| Error::InvalidArgument("Q is not positive definite".into()))?;
    let l = chol.l();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let g = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let norm = g.norm();
        let r: f64 = rng.random();
        if norm == 0.0 || r == 0.0 {
            continue;
        }
        let w = g * (libm::pow(r, 1.0 / n as f64) / norm);
        out.push(&l * w);
    }
    Ok(out)
}

/// Evaluates `ΔV = z⁺ᵀ Q⁻¹ z⁺ − zᵀ Q⁻¹ z` with `z⁺ = Az + (kᵀz) Bz` on
/// seeded samples of the ellipsoid.
#[allow(clippy::too_many_arguments)]
pub fn verify_clf(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    k: &DVector<f64>,
    theta: f64,
    num_samples: usize,
    seed: u64,
    tolerance: f64,
) -> Result<ClfReport> {
    let n = q.nrows();
    for (m, ctx) in [(a, "A"), (b, "B"), (q, "Q")] {
        if m.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context: ctx,
                expected: n,
                found: m.nrows(),
            });
        }
    }
    if k.len() != n {
        return Err(Error::DimensionMismatch {
            context: "gain",
            expected: n,
            found: k.len(),
        });
    }
    if num_samples == 0 {
        return Err(Error::InvalidArgument("num_samples must be positive".into()));
    }
    let chol = Cholesky::new(q.clone())
        .ok_or_else(|| Error::InvalidArgument("Q is not positive definite".into()))?;
    let level = |z: &DVector<f64>| -> f64 {
        chol.l_dirty()
            .solve_lower_triangular(z)
            .map_or(f64::INFINITY, |w| w.norm_squared())
    };
    let samples = sample_ellipsoid(q, num_samples, seed)?;
    let mut max_delta_v = f64::NEG_INFINITY;
    let mut max_violation = f64::NEG_INFINITY;
    let mut negative = 0usize;
    for z in &samples {
        let u = k.dot(z);
        let next = a * z + (b * z) * u;
        let v = level(z);
        let dv = level(&next) - v;
        if dv < 0.0 {
            negative += 1;
        }
        max_delta_v = max_delta_v.max(dv);
        max_violation = max_violation.max(dv + (1.0 - theta) * v);
    }
    Ok(ClfReport {
        num_samples,
        max_delta_v,
        fraction_negative: negative as f64 / num_samples as f64,
        max_violation,
        tolerance,
        pass: max_violation <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_lie_in_ellipsoid_and_avoid_origin() {
        let q = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let p = q.clone().try_inverse().unwrap();
        let s = sample_ellipsoid(&q, 2000, 7).unwrap();
        assert!(s.iter().all(|z| {
            let v = (z.transpose() * &p * z)[0];
            v <= 1.0 + 1e-12 && v > 0.0
        }));
        assert_eq!(s, sample_ellipsoid(&q, 2000, 7).unwrap());
    }

    #[test]
    fn contraction_passes() {
        let a = DMatrix::from_diagonal_element(2, 2, 0.5);
        let b = DMatrix::zeros(2, 2);
        let q = DMatrix::identity(2, 2);
        let r = verify_clf(&a, &b, &q, &DVector::zeros(2), 0.5, 1000, 1, 1e-9).unwrap();
        assert!(r.pass && r.all_negative());
        assert!(r.max_violation <= 0.0);
    }

    #[test]
    fn unstable_direction_fails() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(alloc::vec![2.0, 0.5]));
        let b = DMatrix::zeros(2, 2);
        let q = DMatrix::identity(2, 2);
        let r = verify_clf(&a, &b, &q, &DVector::zeros(2), 0.5, 1000, 1, 1e-9).unwrap();
        assert!(!r.pass);
        assert!(r.max_delta_v > 0.0);
        assert!(r.fraction_negative < 1.0);
    }

    #[test]
    fn bilinear_feedback_term_is_used() {
        // z⁺ = z (0.9 + k z): k = 0 contracts, k = 0.5 expands near z = 1
        let a = DMatrix::from_element(1, 1, 0.9);
        let one = DMatrix::identity(1, 1);
        let zero = DVector::zeros(1);
        let r = verify_clf(&a, &one, &one, &zero, 0.99, 500, 3, 0.0).unwrap();
        assert!(r.pass && r.all_negative());
        let k = DVector::from_element(1, 0.5);
        let r = verify_clf(&a, &one, &one, &k, 0.99, 500, 3, 0.0).unwrap();
        assert!(!r.pass && r.max_delta_v > 0.0);
    }
}
