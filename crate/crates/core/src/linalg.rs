//! Dense linear-algebra helpers shared by the fitting, analysis and synthesis
//! modules.

use alloc::vec::Vec;
use core::cmp::Ordering;

use nalgebra::{Cholesky, ComplexField, DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

pub use nalgebra::Complex;

/// Relative singular-value cutoff used by every pseudoinverse.
pub const PINV_RTOL: f64 = 1e-10;

/// Eigenvalues with `|Im λ| <= REAL_EIG_TOL * (1 + |λ|)` are treated as real.
pub const REAL_EIG_TOL: f64 = 1e-10;

const CLUSTER_TOL: f64 = 1e-8;
const DEFECT_TOL: f64 = 1e-6;

/// Moore-Penrose pseudoinverse; singular values below `rtol * σ_max` are
/// treated as zero.
pub fn pseudo_inverse(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    if m.is_empty() {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let cutoff = rtol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(m.ncols(), m.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            // out += v_k u_kᵀ / s
            out.ger(1.0 / s, &v_t.row(k).transpose(), &u.column(k), 1.0);
        }
    }
    out
}

/// Minimum-norm solution `X` of `min ‖target − X · regressor‖_F`.
///
/// `target` is `p × M`, `regressor` is `n × M`; the result is `p × n`.
pub fn right_least_squares(target: &DMatrix<f64>, regressor: &DMatrix<f64>) -> DMatrix<f64> {
    target * pseudo_inverse(regressor, PINV_RTOL)
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Number of singular values above `rtol * σ_max`.
pub fn numeric_rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let sv = singular_values(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rtol * smax).count()
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

pub fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Solves `Q x = b` for symmetric positive-definite `Q`.
pub fn spd_solve(q: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if q.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "spd_solve",
            expected: q.nrows(),
            found: b.len(),
        });
    }
    let chol = Cholesky::new(q.clone()).ok_or_else(|| {
        Error::InvalidArgument("matrix is not symmetric positive definite".into())
    })?;
    Ok(chol.solve(b))
}

/// `|z|` without relying on `std` float intrinsics.
pub fn modulus(z: Complex<f64>) -> f64 {
    libm::hypot(z.re, z.im)
}

pub fn is_real_eigenvalue(lambda: Complex<f64>) -> bool {
    lambda.im.abs() <= REAL_EIG_TOL * (1.0 + modulus(lambda))
}

/// Eigenvalues and right eigenvectors of a real matrix, ordered by
/// decreasing modulus (ties: decreasing real part) with every complex
/// eigenvalue of positive imaginary part immediately followed by its
/// conjugate. Conjugate columns of `vectors` are exact conjugates.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<Complex<f64>>,
    pub vectors: DMatrix<Complex<f64>>,
}

impl EigenDecomposition {
    /// `max_j ‖K v_j − λ_j v_j‖`.
    pub fn residual(&self, k: &DMatrix<f64>) -> f64 {
        let kc = k.map(|x| Complex::new(x, 0.0));
        let mut worst = 0.0f64;
        for (j, &lambda) in self.values.iter().enumerate() {
            let v = self.vectors.column(j);
            let r = &kc * v - v * lambda;
            worst = worst.max(r.norm());
        }
        worst
    }
}

fn modulus_order(a: &Complex<f64>, b: &Complex<f64>) -> Ordering {
    modulus(*b)
        .total_cmp(&modulus(*a))
        .then(b.re.total_cmp(&a.re))
        .then(b.im.total_cmp(&a.im))
}

/// Computes the ordered eigen-decomposition of `k`; rejects defective input.
pub fn eigen_decomposition(k: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "eigen_decomposition",
            expected: n,
            found: k.ncols(),
        });
    }
    if k.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            context: "eigen_decomposition",
            row: 0,
        });
    }
    let schur = Schur::try_new(k.clone(), f64::EPSILON, 100 * n.max(10)).ok_or(
        Error::EigenFailure {
            condition: condition_number(k),
        },
    )?;
    let raw = schur.complex_eigenvalues();

    // Representatives: real eigenvalues (imaginary part zeroed) and the
    // upper-half-plane member of each conjugate pair.
    let mut reals = Vec::new();
    let mut upper = Vec::new();
    let mut lower = 0usize;
    for &lambda in raw.iter() {
        if is_real_eigenvalue(lambda) {
            reals.push(Complex::new(lambda.re, 0.0));
        } else if lambda.im > 0.0 {
            upper.push(lambda);
        } else {
            lower += 1;
        }
    }
    if lower != upper.len() {
        return Err(Error::DanglingComplexEigenvalue { index: n });
    }

    let mut reps: Vec<Complex<f64>> = reals.into_iter().chain(upper).collect();
    reps.sort_by(modulus_order);

    let scale = 1.0 + k.norm();
    let mut values = Vec::with_capacity(n);
    let mut vectors = DMatrix::<Complex<f64>>::zeros(n, n);
    let mut assigned = alloc::vec![false; reps.len()];
    let mut basis: Vec<Option<DVector<Complex<f64>>>> = alloc::vec![None; reps.len()];

    for i in 0..reps.len() {
        if assigned[i] {
            continue;
        }
        let cluster: Vec<usize> = (i..reps.len())
            .filter(|&j| {
                !assigned[j] && modulus(reps[j] - reps[i]) <= CLUSTER_TOL * (1.0 + modulus(reps[i]))
            })
            .collect();
        let m = cluster.len();
        let center = cluster.iter().map(|&j| reps[j]).sum::<Complex<f64>>() / m as f64;
        let null = null_vectors(k, center, m, scale)?;
        for (slot, &j) in cluster.iter().enumerate() {
            assigned[j] = true;
            basis[j] = Some(null[slot].clone());
        }
    }

    let mut col = 0;
    for (lambda, v) in reps.iter().zip(basis) {
        let v = v.expect("every representative assigned");
        if lambda.im == 0.0 {
            values.push(*lambda);
            vectors.set_column(col, &v);
            col += 1;
        } else {
            values.push(*lambda);
            values.push(lambda.conj());
            vectors.set_column(col, &v);
            vectors.set_column(col + 1, &v.map(|c| c.conj()));
            col += 2;
        }
    }
    debug_assert_eq!(col, n);
    Ok(EigenDecomposition { values, vectors })
}

/// `m` orthonormal vectors spanning the numerical null space of `K − λI`.
fn null_vectors(
    k: &DMatrix<f64>,
    lambda: Complex<f64>,
    m: usize,
    scale: f64,
) -> Result<Vec<DVector<Complex<f64>>>> {
    let n = k.nrows();
    let mut out = Vec::with_capacity(m);
    if lambda.im == 0.0 {
        let shifted = k - DMatrix::identity(n, n) * lambda.re;
        let svd = shifted.svd(false, true);
        check_defect(&svd.singular_values, m, scale, lambda)?;
        let v_t = svd.v_t.expect("v_t requested");
        for r in (n - m)..n {
            let v: DVector<f64> = v_t.row(r).transpose();
            out.push(normalize_real(v).map(|x| Complex::new(x, 0.0)));
        }
    } else {
        let shifted = k.map(|x| Complex::new(x, 0.0)) - DMatrix::identity(n, n) * lambda;
        let svd = shifted.svd(false, true);
        check_defect(&svd.singular_values, m, scale, lambda)?;
        let v_t = svd.v_t.expect("v_t requested");
        for r in (n - m)..n {
            let v: DVector<Complex<f64>> = v_t.row(r).adjoint();
            out.push(normalize_complex(v));
        }
    }
    Ok(out)
}

fn check_defect(sv: &DVector<f64>, m: usize, scale: f64, lambda: Complex<f64>) -> Result<()> {
    let n = sv.len();
    if sv[n - m] > DEFECT_TOL * scale {
        return Err(Error::Defective {
            eigenvalue: (lambda.re, lambda.im),
            multiplicity: m,
        });
    }
    Ok(())
}

fn dominant_index<T>(v: &[T], modulus: impl Fn(&T) -> f64) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if modulus(x) > modulus(&v[best]) * (1.0 + 1e-12) {
            best = i;
        }
    }
    best
}

fn normalize_real(v: DVector<f64>) -> DVector<f64> {
    let v = v.normalize();
    let i = dominant_index(v.as_slice(), |x| x.abs());
    if v[i] < 0.0 {
        -v
    } else {
        v
    }
}

fn normalize_complex(v: DVector<Complex<f64>>) -> DVector<Complex<f64>> {
    let norm = v.norm();
    let i = dominant_index(v.as_slice(), |x| modulus(*x));
    let phase = v[i] / Complex::new(modulus(v[i]), 0.0);
    v.map(|x| x / phase / Complex::new(norm, 0.0))
}
