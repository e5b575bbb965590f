use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::max_symmetric_eigenvalue;

/// Assembles the `(3n + 1) × (3n + 1)` stabilization block matrix
///
/// ```text
/// [ −θQ    0     y      Q Aᵀ ]
/// [  0    −εQ    0      Q Bᵀ ]
/// [  yᵀ    0   −1/ε      0   ]
/// [ A Q   B Q    0      −Q   ]
/// ```
///
/// whose negative semidefiniteness certifies the feedback `k = Q⁻¹ y`.
/// Symmetric by construction: every off-diagonal block is written together
/// with its transpose.
pub fn build_stabilization_lmi(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    y: &DVector<f64>,
    epsilon: f64,
    theta: f64,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    for (context, m) in [("A", a), ("B", b), ("Q", q)] {
        if m.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found: if m.nrows() != n { m.nrows() } else { m.ncols() },
            });
        }
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "y",
            expected: n,
            found: y.len(),
        });
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let size = 3 * n + 1;
    let mut s = DMatrix::zeros(size, size);
    let (r1, r2, r3, r4) = (0, n, 2 * n, 2 * n + 1);

    s.view_mut((r1, r1), (n, n)).copy_from(&(q * -theta));
    s.view_mut((r2, r2), (n, n)).copy_from(&(q * -epsilon));
    s[(r3, r3)] = -1.0 / epsilon;
    s.view_mut((r4, r4), (n, n)).copy_from(&(-q));
    let aq = a * q;
    let bq = b * q;
    s.view_mut((r4, r1), (n, n)).copy_from(&aq);
    s.view_mut((r1, r4), (n, n)).copy_from(&aq.transpose());
    s.view_mut((r4, r2), (n, n)).copy_from(&bq);
    s.view_mut((r2, r4), (n, n)).copy_from(&bq.transpose());
    for i in 0..n {
        s[(r1 + i, r3)] = y[i];
        s[(r3, r1 + i)] = y[i];
    }
    Ok(s)
}

/// Outcome of the multiplier search for the robust inequality
/// `G + M δ Nᵀ + N δᵀ Mᵀ ≺ 0` over `δᵀ P δ ≤ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PetersenCheck {
    pub feasible: bool,
    /// First grid multiplier making the block matrix negative definite.
    pub epsilon: Option<f64>,
    /// Largest eigenvalue of the block matrix at the witness (or the best
    /// grid point when infeasible).
    pub max_eigenvalue: f64,
}

/// Multipliers tried by [`petersen_check`]: 10 per decade over `[1e-6, 1e6]`.
pub fn petersen_grid() -> Vec<f64> {
    (0..=120).map(|k| libm::pow(10.0, -6.0 + k as f64 / 10.0)).collect()
}

/// `[[G, M, N], [Mᵀ, −εP, 0], [Nᵀ, 0, −1/ε]]`.
pub fn petersen_block(
    g: &DMatrix<f64>,
    m: &DMatrix<f64>,
    n_vec: &DVector<f64>,
    p: &DMatrix<f64>,
    epsilon: f64,
) -> DMatrix<f64> {
    let n = g.nrows();
    let q = p.nrows();
    let size = n + q + 1;
    let mut s = DMatrix::zeros(size, size);
    s.view_mut((0, 0), (n, n)).copy_from(g);
    s.view_mut((0, n), (n, q)).copy_from(m);
    s.view_mut((n, 0), (q, n)).copy_from(&m.transpose());
    s.view_mut((n, n), (q, q)).copy_from(&(p * -epsilon));
    for i in 0..n {
        s[(i, n + q)] = n_vec[i];
        s[(n + q, i)] = n_vec[i];
    }
    s[(n + q, n + q)] = -1.0 / epsilon;
    s
}

/// Searches the logarithmic multiplier grid for a negative-definite
/// [`petersen_block`].
pub fn petersen_check(
    g: &DMatrix<f64>,
    m: &DMatrix<f64>,
    n_vec: &DVector<f64>,
    p: &DMatrix<f64>,
) -> Result<PetersenCheck> {
    let n = g.nrows();
    let q = p.nrows();
    if !g.is_square() || m.shape() != (n, q) || n_vec.len() != n || !p.is_square() {
        return Err(Error::DimensionMismatch {
            context: "petersen_check",
            expected: n,
            found: m.nrows(),
        });
    }
    let mut best = f64::INFINITY;
    for eps in petersen_grid() {
        let lam = max_symmetric_eigenvalue(&petersen_block(g, m, n_vec, p, eps));
        if lam < 0.0 {
            return Ok(PetersenCheck {
                feasible: true,
                epsilon: Some(eps),
                max_eigenvalue: lam,
            });
        }
        best = best.min(lam);
    }
    Ok(PetersenCheck {
        feasible: false,
        epsilon: None,
        max_eigenvalue: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_block_matches_substitution() {
        let (a, b, q, y, eps, th) = (0.7, -1.3, 2.0, 0.4, 0.5, 0.25);
        let s = build_stabilization_lmi(
            &DMatrix::from_element(1, 1, a),
            &DMatrix::from_element(1, 1, b),
            &DMatrix::from_element(1, 1, q),
            &DVector::from_element(1, y),
            eps,
            th,
        )
        .unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                -th * q, 0.0, y, q * a,
                0.0, -eps * q, 0.0, q * b,
                y, 0.0, -1.0 / eps, 0.0,
                a * q, b * q, 0.0, -q,
            ],
        );
        assert_eq!(s, expected);
    }

    #[test]
    fn zero_q_and_y_leave_only_the_scalar_entry() {
        let n = 3;
        let s = build_stabilization_lmi(
            &DMatrix::identity(n, n),
            &DMatrix::identity(n, n),
            &DMatrix::zeros(n, n),
            &DVector::zeros(n),
            0.1,
            0.5,
        )
        .unwrap();
        for i in 0..s.nrows() {
            for j in 0..s.ncols() {
                let expected = if i == 2 * n && j == 2 * n { -10.0 } else { 0.0 };
                assert_eq!(s[(i, j)], expected);
            }
        }
        assert_eq!(max_symmetric_eigenvalue(&s), 0.0);
    }

    #[test]
    fn lmi_dimension_checks() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let i3 = DMatrix::<f64>::identity(3, 3);
        assert!(build_stabilization_lmi(&i2, &i3, &i2, &DVector::zeros(2), 1.0, 0.5).is_err());
        assert!(build_stabilization_lmi(&i2, &i2, &i2, &DVector::zeros(3), 1.0, 0.5).is_err());
        assert!(build_stabilization_lmi(&i2, &i2, &i2, &DVector::zeros(2), 0.0, 0.5).is_err());
    }

    #[test]
    fn petersen_trivial_cases() {
        let n = 2;
        let g = -DMatrix::<f64>::identity(n, n);
        let m = DMatrix::zeros(n, 1);
        let nv = DVector::zeros(n);
        let p = DMatrix::from_element(1, 1, 1.0);
        let r = petersen_check(&g, &m, &nv, &p).unwrap();
        assert!(r.feasible);
        assert_eq!(r.epsilon, Some(1e-6));

        let r = petersen_check(&DMatrix::identity(n, n), &m, &nv, &p).unwrap();
        assert!(!r.feasible);
        assert!(r.max_eigenvalue >= 1.0 - 1e-12);
    }
}
