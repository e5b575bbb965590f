//! Extended dynamic mode decomposition and the real bilinear lift.
//!
//! The fitted operator `K` solves `min ‖G K − A‖_F` with the Gram matrices
//! accumulated over snapshot pairs, so a dictionary row vector propagates as
//! `Φ(y)ᵀ ≈ Φ(x)ᵀ K` and the right eigenvectors `v_j` of `K` give
//! eigenfunctions `h_j = v_jᵀ Φ`. Synthesis works in the real coordinates
//! `z = W Φ(x)` built from those eigenvectors, where the drift is the real
//! block-diagonal matrix returned by [`real_block_a`] and `W Kᵀ W⁻¹ = A`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::linalg::{
    self, condition_number, eigen_decomposition, is_real_eigenvalue, right_least_squares,
    Complex, EigenDecomposition,
};

/// `W` is rejected above this 2-norm condition number.
pub const MAX_TRANSFORM_CONDITION: f64 = 1e12;

/// Relative residual above which the input-field fit is flagged.
pub const INPUT_FIT_WARNING: f64 = 0.1;

/// Eigenvalue and spread tolerances used to detect the constant direction.
pub const CONSTANT_EIGENVALUE_TOL: f64 = 1e-6;
pub const CONSTANT_SPREAD_TOL: f64 = 1e-8;

/// Paired states `x_m` and successors `y_m = T(x_m)`, one pair per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotData {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl SnapshotData {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(Error::InvalidArgument(alloc::format!(
                "snapshot matrices differ in shape: {:?} vs {:?}",
                x.shape(),
                y.shape()
            )));
        }
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidArgument("snapshot data is empty".into()));
        }
        for m in 0..x.nrows() {
            if x.row(m).iter().chain(y.row(m).iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "snapshot data",
                    row: m,
                });
            }
        }
        Ok(Self { x, y })
    }

    /// Builds the data set from `(x, y)` pairs of equal dimension.
    pub fn from_pairs(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let d = pairs.first().map(|p| p.0.len()).unwrap_or(0);
        if pairs.iter().any(|(a, b)| a.len() != d || b.len() != d) {
            return Err(Error::InvalidArgument("snapshot pairs differ in dimension".into()));
        }
        let x = DMatrix::from_fn(pairs.len(), d, |m, j| pairs[m].0[j]);
        let y = DMatrix::from_fn(pairs.len(), d, |m, j| pairs[m].1[j]);
        Self::new(x, y)
    }

    /// Stacks several data sets; no pair spans two sources.
    pub fn concat(parts: &[SnapshotData]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no snapshot data to concatenate".into()))?;
        let d = first.state_dim();
        let total: usize = parts.iter().map(SnapshotData::len).sum();
        let mut x = DMatrix::zeros(total, d);
        let mut y = DMatrix::zeros(total, d);
        let mut row = 0;
        for part in parts {
            if part.state_dim() != d {
                return Err(Error::DimensionMismatch {
                    context: "snapshot concatenation",
                    expected: d,
                    found: part.state_dim(),
                });
            }
            x.rows_mut(row, part.len()).copy_from(&part.x);
            y.rows_mut(row, part.len()).copy_from(&part.y);
            row += part.len();
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Number of pairs `M`.
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn state(&self, m: usize) -> Vec<f64> {
        self.x.row(m).iter().copied().collect()
    }
}

/// Lifts every row of `states` (`M × d`) into a column of the `n × M` result.
pub fn lift_columns(dict: &Dictionary, states: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if states.ncols() != dict.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "lift",
            expected: dict.state_dim(),
            found: states.ncols(),
        });
    }
    let mut out = DMatrix::zeros(dict.len(), states.nrows());
    let mut x = alloc::vec![0.0; states.ncols()];
    for m in 0..states.nrows() {
        for (j, xj) in x.iter_mut().enumerate() {
            *xj = states[(m, j)];
        }
        let phi = dict.evaluate(&x)?;
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "lifted snapshot",
                row: m,
            });
        }
        out.set_column(m, &phi);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrices {
    /// `(1/M) Σ Φ(x_m) Φ(x_m)ᵀ`, exactly symmetric.
    pub g: DMatrix<f64>,
    /// `(1/M) Σ Φ(x_m) Φ(y_m)ᵀ`.
    pub a: DMatrix<f64>,
}

pub fn build_gram_matrices(data: &SnapshotData, dict: &Dictionary) -> Result<GramMatrices> {
    let px = lift_columns(dict, data.x())?;
    let py = lift_columns(dict, data.y())?;
    let inv_m = 1.0 / data.len() as f64;
    let g = (&px * px.transpose()) * inv_m;
    let g = (&g + g.transpose()) * 0.5;
    let a = (&px * py.transpose()) * inv_m;
    Ok(GramMatrices { g, a })
}

/// Finite-dimensional Koopman approximation with its eigen-decomposition.
#[derive(Debug, Clone)]
pub struct KoopmanApproximation {
    pub k: DMatrix<f64>,
    pub eigen: EigenDecomposition,
    pub gram: GramMatrices,
    pub dictionary: Dictionary,
}

impl KoopmanApproximation {
    pub fn eigenvalues(&self) -> &[Complex<f64>] {
        &self.eigen.values
    }
}

/// `K = G† A` followed by an ordered eigen-decomposition.
pub fn fit_koopman(data: &SnapshotData, dict: &Dictionary) -> Result<KoopmanApproximation> {
    let gram = build_gram_matrices(data, dict)?;
    let k = linalg::pseudo_inverse(&gram.g, linalg::PINV_RTOL) * &gram.a;
    let eigen = eigen_decomposition(&k)?;
    Ok(KoopmanApproximation {
        k,
        eigen,
        gram,
        dictionary: dict.clone(),
    })
}

fn is_conjugate(a: Complex<f64>, b: Complex<f64>) -> bool {
    linalg::modulus(a.conj() - b) <= linalg::REAL_EIG_TOL * (1.0 + linalg::modulus(a))
}

/// Real block-diagonal drift: `λ` for real eigenvalues and
/// `|λ|·[[cos∠λ, sin∠λ], [−sin∠λ, cos∠λ]]` for each adjacent conjugate pair.
pub fn real_block_a(eigenvalues: &[Complex<f64>]) -> Result<DMatrix<f64>> {
    let n = eigenvalues.len();
    let mut a = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let lambda = eigenvalues[i];
        if is_real_eigenvalue(lambda) {
            a[(i, i)] = lambda.re;
            i += 1;
            continue;
        }
        if i + 1 >= n || !is_conjugate(lambda, eigenvalues[i + 1]) {
            return Err(Error::DanglingComplexEigenvalue { index: i });
        }
        // r·(cos φ, sin φ) = (Re λ, Im λ)
        a[(i, i)] = lambda.re;
        a[(i, i + 1)] = lambda.im;
        a[(i + 1, i)] = -lambda.im;
        a[(i + 1, i + 1)] = lambda.re;
        i += 2;
    }
    Ok(a)
}

/// Map from dictionary coordinates to real eigenfunction coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTransform {
    pub w: DMatrix<f64>,
    pub condition: f64,
}

/// Rows `Re v_jᵀ` for real eigenvalues and `2 Re v_jᵀ`, `−2 Im v_jᵀ` for
/// each conjugate pair.
pub fn real_eigen_transform(eigen: &EigenDecomposition) -> Result<RealTransform> {
    let n = eigen.values.len();
    let mut w = DMatrix::zeros(n, eigen.vectors.nrows());
    let mut i = 0;
    while i < n {
        let lambda = eigen.values[i];
        let v = eigen.vectors.column(i);
        if is_real_eigenvalue(lambda) {
            for (j, c) in v.iter().enumerate() {
                w[(i, j)] = c.re;
            }
            i += 1;
            continue;
        }
        if i + 1 >= n || !is_conjugate(lambda, eigen.values[i + 1]) {
            return Err(Error::DanglingComplexEigenvalue { index: i });
        }
        for (j, c) in v.iter().enumerate() {
            w[(i, j)] = 2.0 * c.re;
            w[(i + 1, j)] = -2.0 * c.im;
        }
        i += 2;
    }
    let condition = condition_number(&w);
    if !(condition <= MAX_TRANSFORM_CONDITION) {
        return Err(Error::IllConditioned {
            what: "eigen-coordinate transform",
            condition,
        });
    }
    Ok(RealTransform { w, condition })
}

/// Least-squares `C` with `x_m ≈ C W Φ(x_m)`.
pub fn fit_projection_c(
    data: &SnapshotData,
    dict: &Dictionary,
    w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    check_transform(dict, w)?;
    let z = w * lift_columns(dict, data.x())?;
    Ok(right_least_squares(&data.x().transpose(), &z))
}

/// Result of the input-field regression.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFit {
    pub b: DMatrix<f64>,
    /// `‖T − B Z‖_F / ‖T‖_F`, zero when the target vanishes.
    pub relative_residual: f64,
}

impl InputFit {
    /// True when the derivative directions are poorly represented in the span
    /// of the dictionary.
    pub fn span_assumption_violated(&self) -> bool {
        self.relative_residual > INPUT_FIT_WARNING
    }
}

/// Least-squares `B` with `W ∂Φ/∂x(x_m) g(x_m) ≈ B W Φ(x_m)`.
///
/// `g_samples` holds `g(x_m)` in row `m`.
pub fn fit_lifted_b(
    data: &SnapshotData,
    dict: &Dictionary,
    w: &DMatrix<f64>,
    g_samples: &DMatrix<f64>,
) -> Result<InputFit> {
    check_transform(dict, w)?;
    if g_samples.shape() != data.x().shape() {
        return Err(Error::DimensionMismatch {
            context: "input field samples",
            expected: data.len(),
            found: g_samples.nrows(),
        });
    }
    let phi = lift_columns(dict, data.x())?;
    let mut target = DMatrix::zeros(dict.len(), data.len());
    for m in 0..data.len() {
        let x = data.state(m);
        let g = g_samples.row(m).transpose();
        target.set_column(m, &(dict.jacobian(&x)? * g));
    }
    let target = w * target;
    let z = w * phi;
    let b = right_least_squares(&target, &z);
    let scale = target.norm();
    let relative_residual = if scale == 0.0 {
        0.0
    } else {
        (&target - &b * &z).norm() / scale
    };
    Ok(InputFit {
        b,
        relative_residual,
    })
}

fn check_transform(dict: &Dictionary, w: &DMatrix<f64>) -> Result<()> {
    if w.nrows() != dict.len() || w.ncols() != dict.len() {
        return Err(Error::DimensionMismatch {
            context: "eigen-coordinate transform",
            expected: dict.len(),
            found: w.ncols(),
        });
    }
    Ok(())
}

/// The lifted bilinear system `z⁺ = A z + u B z`, `x = C z`, `z = W Φ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedBilinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub dictionary: Dictionary,
    /// Eigenvalues matching the diagonal blocks of `a`.
    pub eigenvalues: Vec<Complex<f64>>,
    /// Position (in the full eigen-ordering) of the removed constant direction.
    pub removed_direction: Option<usize>,
}

impl LiftedBilinearModel {
    /// Lifted dimension `n`.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.c.nrows()
    }

    /// `z = W Φ(x)`.
    pub fn lift(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(&self.w * self.dictionary.evaluate(x)?)
    }

    /// `x = C z`.
    pub fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.c * z
    }

    /// `A z + u B z`.
    pub fn step(&self, z: &DVector<f64>, u: f64) -> DVector<f64> {
        &self.a * z + (&self.b * z) * u
    }

    /// Checks matrix shapes against each other and the dictionary.
    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        let checks = [
            ("A columns", n, self.a.ncols()),
            ("B rows", n, self.b.nrows()),
            ("B columns", n, self.b.ncols()),
            ("C columns", n, self.c.ncols()),
            ("C rows", self.dictionary.state_dim(), self.c.nrows()),
            ("W rows", n, self.w.nrows()),
            ("W columns", self.dictionary.len(), self.w.ncols()),
            ("eigenvalues", n, self.eigenvalues.len()),
        ];
        for (context, expected, found) in checks {
            if expected != found {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    found,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssembleOptions {
    /// Drop the constant eigen-direction when the dictionary has a constant.
    pub remove_constant: bool,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            remove_constant: true,
        }
    }
}

/// Packages the fitted matrices, removing the constant eigen-direction when
/// the dictionary contains the constant monomial and removal is enabled.
///
/// The constant direction is the unique real eigenvalue with
/// `|λ − 1| ≤ 1e-6` whose eigenfunction has standard deviation at most
/// `1e-8` over the training states.
pub fn assemble_model(
    koopman: &KoopmanApproximation,
    w: &DMatrix<f64>,
    c: &DMatrix<f64>,
    b: &DMatrix<f64>,
    data: &SnapshotData,
    options: AssembleOptions,
) -> Result<LiftedBilinearModel> {
    let dict = &koopman.dictionary;
    let n = dict.len();
    for (context, m) in [("W", w), ("B", b)] {
        if m.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                found: m.nrows(),
            });
        }
    }
    if c.shape() != (dict.state_dim(), n) {
        return Err(Error::DimensionMismatch {
            context: "C",
            expected: n,
            found: c.ncols(),
        });
    }
    let a = real_block_a(koopman.eigenvalues())?;
    let eigenvalues = koopman.eigenvalues().to_vec();

    let removed = if dict.include_constant() && options.remove_constant {
        Some(constant_direction(koopman, w, data)?)
    } else {
        None
    };

    let model = match removed {
        None => LiftedBilinearModel {
            a,
            b: b.clone(),
            c: c.clone(),
            w: w.clone(),
            dictionary: dict.clone(),
            eigenvalues,
            removed_direction: None,
        },
        Some(r) => {
            let mut eigenvalues = eigenvalues;
            eigenvalues.remove(r);
            LiftedBilinearModel {
                a: a.remove_row(r).remove_column(r),
                b: b.clone().remove_row(r).remove_column(r),
                c: c.clone().remove_column(r),
                w: w.clone().remove_row(r),
                dictionary: dict.clone(),
                eigenvalues,
                removed_direction: Some(r),
            }
        }
    };
    model.validate()?;
    Ok(model)
}

fn constant_direction(
    koopman: &KoopmanApproximation,
    w: &DMatrix<f64>,
    data: &SnapshotData,
) -> Result<usize> {
    let phi = lift_columns(&koopman.dictionary, data.x())?;
    let m = phi.ncols() as f64;
    let mut candidates = Vec::new();
    for (i, &lambda) in koopman.eigenvalues().iter().enumerate() {
        if !is_real_eigenvalue(lambda) || (lambda.re - 1.0).abs() > CONSTANT_EIGENVALUE_TOL {
            continue;
        }
        let h = w.row(i) * &phi;
        let mean = h.sum() / m;
        let var = h.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        if libm::sqrt(var) <= CONSTANT_SPREAD_TOL {
            candidates.push(i);
        }
    }
    match candidates.len() {
        0 => Err(Error::NoConstantDirection),
        1 => Ok(candidates[0]),
        _ => Err(Error::AmbiguousConstantDirection { candidates }),
    }
}

/// Residuals gathered while fitting a model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    /// `‖Φ(X)ᵀ K − Φ(Y)ᵀ‖_F / ‖Φ(Y)‖_F`.
    pub regression_residual: f64,
    /// `max_j ‖K v_j − λ_j v_j‖`.
    pub eigen_residual: f64,
    pub transform_condition: f64,
    pub input_fit_residual: f64,
    /// `max_m ‖x_m − C W Φ(x_m)‖`.
    pub reconstruction_error: f64,
    pub rank_g: usize,
}

impl FitDiagnostics {
    pub fn input_span_violated(&self) -> bool {
        self.input_fit_residual > INPUT_FIT_WARNING
    }
}

/// Runs the whole fit: operator, transform, projection, input matrix and
/// packaging.
pub fn fit_lifted_model(
    data: &SnapshotData,
    dict: &Dictionary,
    g_samples: &DMatrix<f64>,
    options: AssembleOptions,
) -> Result<(LiftedBilinearModel, KoopmanApproximation, FitDiagnostics)> {
    let koopman = fit_koopman(data, dict)?;
    let transform = real_eigen_transform(&koopman.eigen)?;
    let c = fit_projection_c(data, dict, &transform.w)?;
    let input = fit_lifted_b(data, dict, &transform.w, g_samples)?;
    let model = assemble_model(&koopman, &transform.w, &c, &input.b, data, options)?;

    let px = lift_columns(dict, data.x())?;
    let py = lift_columns(dict, data.y())?;
    let regression_residual = {
        let scale = py.norm();
        let r = (px.transpose() * &koopman.k - py.transpose()).norm();
        if scale == 0.0 {
            r
        } else {
            r / scale
        }
    };
    let recon = &model.c * (&model.w * &px) - data.x().transpose();
    let reconstruction_error = recon
        .column_iter()
        .map(|col| col.norm())
        .fold(0.0, f64::max);
    let diagnostics = FitDiagnostics {
        regression_residual,
        eigen_residual: koopman.eigen.residual(&koopman.k),
        transform_condition: transform.condition,
        input_fit_residual: input.relative_residual,
        reconstruction_error,
        rank_g: linalg::numeric_rank(&koopman.gram.g, linalg::PINV_RTOL),
    };
    Ok((model, koopman, diagnostics))
}
