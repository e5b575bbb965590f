//! Log-barrier interior-point method for small determinant-maximization
//! problems
//!
//! ```text
//! maximize   cᵀx + log det L(x)
//! subject to F_k(x) ≻ 0,  |x_i| < R
//! ```
//!
//! with every `L`, `F_k` affine in `x`. Each centering step maximizes
//! `t·(cᵀx + log det L(x)) + Σ log det F_k(x) + Σ log(R ∓ x_i)` by damped
//! Newton iterations; `t` then grows geometrically until the barrier gap
//! `(Σ dim F_k + 2m) / t` is below tolerance.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Structured part `Σ_k U_k Q V_kᵀ` of an affine matrix, where the symmetric
/// `n × n` matrix `Q` is packed row by row (upper triangle) into the leading
/// variables. The sum must be symmetric for symmetric `Q`.
#[derive(Debug, Clone)]
pub(crate) struct Congruence {
    pub n: usize,
    pub u: Vec<DMatrix<f64>>,
    pub v: Vec<DMatrix<f64>>,
}

impl Congruence {
    pub fn q_vars(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    /// `(a, b)` index pairs with `E_p = Σ e_a e_bᵀ` for every packed entry.
    fn entry_pairs(&self) -> Vec<Vec<(usize, usize)>> {
        let mut out = Vec::with_capacity(self.q_vars());
        for i in 0..self.n {
            for j in i..self.n {
                if i == j {
                    out.push(alloc::vec![(i, i)]);
                } else {
                    out.push(alloc::vec![(i, j), (j, i)]);
                }
            }
        }
        out
    }

    fn coefficient(&self, pairs: &[(usize, usize)]) -> DMatrix<f64> {
        let dim = self.u[0].nrows();
        let mut out = DMatrix::zeros(dim, dim);
        for (u, v) in self.u.iter().zip(&self.v) {
            for &(a, b) in pairs {
                out.ger(1.0, &u.column(a), &v.column(b), 1.0);
            }
        }
        out
    }
}

/// `F(x) = F₀ + Σ x_i F_i`, symmetric.
#[derive(Debug, Clone)]
pub(crate) struct AffineMatrix {
    pub constant: DMatrix<f64>,
    pub coefficients: Vec<DMatrix<f64>>,
    nonzero: Vec<bool>,
    structure: Option<Congruence>,
}

impl AffineMatrix {
    pub fn new(constant: DMatrix<f64>, coefficients: Vec<DMatrix<f64>>) -> Self {
        let nonzero = coefficients
            .iter()
            .map(|c| c.iter().any(|&v| v != 0.0))
            .collect();
        Self {
            constant,
            coefficients,
            nonzero,
            structure: None,
        }
    }

    /// Leading variables enter through `congruence`, the remaining ones
    /// through the dense matrices `rest`.
    pub fn structured(
        constant: DMatrix<f64>,
        congruence: Congruence,
        rest: Vec<DMatrix<f64>>,
    ) -> Self {
        let mut coefficients: Vec<DMatrix<f64>> = congruence
            .entry_pairs()
            .iter()
            .map(|pairs| congruence.coefficient(pairs))
            .collect();
        coefficients.extend(rest);
        let mut out = Self::new(constant, coefficients);
        out.structure = Some(congruence);
        out
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (i, c) in self.coefficients.iter().enumerate() {
            if self.nonzero[i] && x[i] != 0.0 {
                out += c * x[i];
            }
        }
        out
    }

    /// Adds a new trailing variable with coefficient `c`.
    pub fn with_extra_variable(&self, c: DMatrix<f64>) -> Self {
        let mut out = self.clone();
        out.nonzero.push(c.iter().any(|&v| v != 0.0));
        out.coefficients.push(c);
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct MaxDetProblem {
    pub linear: DVector<f64>,
    pub log_det: Option<AffineMatrix>,
    pub constraints: Vec<AffineMatrix>,
    /// Symmetric bound on every variable.
    pub variable_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Settings {
    pub initial_t: f64,
    pub growth: f64,
    pub newton_tolerance: f64,
    pub gap_tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Termination {
    Converged,
    /// The caller's stop predicate fired.
    Stopped,
    IterationLimit,
    /// The iterate norm crossed the divergence threshold.
    Diverged,
    /// The duality bound proved the optimum of `cᵀx` below the caller's
    /// threshold.
    BoundBelow,
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub termination: Termination,
}

struct Terms {
    value: f64,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// `log det F(x)` with gradient and Hessian, or `None` outside the domain.
///
/// With `S = F⁻¹`, `∂_i log det F = tr(S F_i)` and
/// `∂²_ij log det F = −tr(S F_i S F_j)`.
fn log_det_terms(f: &AffineMatrix, x: &DVector<f64>, want_derivatives: bool) -> Option<Terms> {
    let m = x.len();
    let value = f.eval(x);
    let chol = Cholesky::new(value)?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>();
    if !log_det.is_finite() {
        return None;
    }
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    if want_derivatives {
        let s = chol.inverse();
        let first_dense = f.structure.as_ref().map_or(0, Congruence::q_vars);
        if let Some(c) = &f.structure {
            structured_terms(c, &s, &mut grad, &mut hess);
        }
        let dense: Vec<usize> = (first_dense..m).filter(|&i| f.nonzero[i]).collect();
        for (pos, &i) in dense.iter().enumerate() {
            let fi = &f.coefficients[i];
            grad[i] = s.dot(fi);
            let mi = &s * fi * &s;
            for &j in &dense[pos..] {
                let h = -mi.dot(&f.coefficients[j]);
                hess[(i, j)] = h;
                hess[(j, i)] = h;
            }
            if let Some(c) = &f.structure {
                // −tr(F_p M_i) = −Σ_k Σ_(a,b) (V_kᵀ M_i U_k)[b, a]
                let projected: Vec<DMatrix<f64>> = c
                    .u
                    .iter()
                    .zip(&c.v)
                    .map(|(u, v)| v.transpose() * &mi * u)
                    .collect();
                for (p, pairs) in c.entry_pairs().iter().enumerate() {
                    let h: f64 = projected
                        .iter()
                        .map(|y| pairs.iter().map(|&(a, b)| y[(b, a)]).sum::<f64>())
                        .sum();
                    hess[(p, i)] = -h;
                    hess[(i, p)] = -h;
                }
            }
        }
    }
    Some(Terms {
        value: log_det,
        grad,
        hess,
    })
}

/// Gradient and Hessian over the packed `Q` variables.
///
/// With `X_kl = V_kᵀ S U_l`, `tr(S F_p S F_q) = Σ_kl tr(E_p X_kl E_q X_lk)`,
/// and `tr(e_a e_bᵀ X e_c e_dᵀ Y) = X[b, c] Y[d, a]`, so every Hessian entry
/// is a sum of entries of `T[(b, c), (d, a)] = Σ_kl X_kl[b, c] X_lk[d, a]`.
fn structured_terms(
    c: &Congruence,
    s: &DMatrix<f64>,
    grad: &mut DVector<f64>,
    hess: &mut DMatrix<f64>,
) {
    let n = c.n;
    let terms = c.u.len();
    let su: Vec<DMatrix<f64>> = c.u.iter().map(|u| s * u).collect();
    let mut x = Vec::with_capacity(terms * terms);
    for v in &c.v {
        for sul in &su {
            x.push(v.transpose() * sul);
        }
    }
    let block = |k: usize, l: usize| &x[k * terms + l];
    let pairs = c.entry_pairs();
    for (p, pp) in pairs.iter().enumerate() {
        grad[p] = (0..terms)
            .map(|k| pp.iter().map(|&(a, b)| block(k, k)[(b, a)]).sum::<f64>())
            .sum();
    }
    let mut left = DMatrix::zeros(n * n, terms * terms);
    let mut right = DMatrix::zeros(terms * terms, n * n);
    for k in 0..terms {
        for l in 0..terms {
            let col = k * terms + l;
            let (xkl, xlk) = (block(k, l), block(l, k));
            for r in 0..n {
                for q in 0..n {
                    left[(r * n + q, col)] = xkl[(r, q)];
                    right[(col, r * n + q)] = xlk[(r, q)];
                }
            }
        }
    }
    let t = left * right;
    for (p, pp) in pairs.iter().enumerate() {
        for (q, qq) in pairs.iter().enumerate().skip(p) {
            let mut h = 0.0;
            for &(a, b) in pp {
                for &(cc, d) in qq {
                    h += t[(b * n + cc, d * n + a)];
                }
            }
            hess[(p, q)] = -h;
            hess[(q, p)] = -h;
        }
    }
}

fn barrier_terms(
    problem: &MaxDetProblem,
    t: f64,
    x: &DVector<f64>,
    want_derivatives: bool,
) -> Option<Terms> {
    let m = x.len();
    let mut value = t * problem.linear.dot(x);
    let mut grad = &problem.linear * t;
    let mut hess = DMatrix::zeros(m, m);
    if let Some(ld) = &problem.log_det {
        let terms = log_det_terms(ld, x, want_derivatives)?;
        value += t * terms.value;
        grad += terms.grad * t;
        hess += terms.hess * t;
    }
    for f in &problem.constraints {
        let terms = log_det_terms(f, x, want_derivatives)?;
        value += terms.value;
        grad += terms.grad;
        hess += terms.hess;
    }
    if let Some(r) = problem.variable_bound {
        for i in 0..m {
            let (up, down) = (r - x[i], r + x[i]);
            if !(up > 0.0 && down > 0.0) {
                return None;
            }
            value += libm::log(up) + libm::log(down);
            grad[i] += 1.0 / down - 1.0 / up;
            hess[(i, i)] -= 1.0 / (up * up) + 1.0 / (down * down);
        }
    }
    if !value.is_finite() {
        return None;
    }
    Some(Terms { value, grad, hess })
}

/// Newton direction for the concave barrier; falls back to a regularized
/// system when the Hessian is numerically singular.
fn newton_direction(terms: &Terms) -> Option<DVector<f64>> {
    let neg = -&terms.hess;
    if let Some(chol) = Cholesky::new(neg.clone()) {
        let dx = chol.solve(&terms.grad);
        if dx.iter().all(|v| v.is_finite()) {
            return Some(dx);
        }
    }
    let scale = neg.diagonal().amax().max(1.0);
    let mut reg = neg;
    for i in 0..reg.nrows() {
        reg[(i, i)] += 1e-10 * scale;
    }
    let dx = Cholesky::new(reg)?.solve(&terms.grad);
    dx.iter().all(|v| v.is_finite()).then_some(dx)
}

/// Runs the barrier method from the strictly feasible `x0`.
///
/// `stop` is checked after every Newton step; `divergence` aborts once the
/// iterate norm exceeds it. For problems without a log-det term,
/// `abandon_below` ends the run once the centered point certifies
/// `max cᵀx < abandon_below`.
pub(crate) fn solve(
    problem: &MaxDetProblem,
    x0: DVector<f64>,
    settings: &Settings,
    mut stop: impl FnMut(&DVector<f64>) -> bool,
    divergence: Option<f64>,
    abandon_below: Option<f64>,
) -> Result<Solution> {
    let m = x0.len();
    let barrier_dim: usize = problem.constraints.iter().map(AffineMatrix::dim).sum::<usize>()
        + problem.variable_bound.map_or(0, |_| 2 * m);
    let mut x = x0;
    if barrier_terms(problem, settings.initial_t, &x, false).is_none() {
        return Err(Error::SolverFailure {
            reason: "initial point is not strictly feasible".into(),
            iterations: 0,
            max_eigenvalue: f64::NAN,
        });
    }
    let mut t = settings.initial_t;
    let mut iterations = 0;
    loop {
        // centering
        loop {
            if iterations >= settings.max_iterations {
                return Ok(Solution {
                    x,
                    iterations,
                    termination: Termination::IterationLimit,
                });
            }
            let terms = barrier_terms(problem, t, &x, true).ok_or_else(|| Error::SolverFailure {
                reason: "iterate left the barrier domain".into(),
                iterations,
                max_eigenvalue: f64::NAN,
            })?;
            let dx = newton_direction(&terms).ok_or_else(|| Error::SolverFailure {
                reason: "singular Newton system".into(),
                iterations,
                max_eigenvalue: f64::NAN,
            })?;
            let decrement = terms.grad.dot(&dx);
            if decrement / 2.0 <= settings.newton_tolerance {
                break;
            }
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-14 {
                let candidate = &x + &dx * step;
                if candidate == x {
                    break;
                }
                if let Some(next) = barrier_terms(problem, t, &candidate, false) {
                    if next.value >= terms.value + 0.01 * step * decrement {
                        x = candidate;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            iterations += 1;
            if !accepted {
                // no progress possible at this precision
                break;
            }
            if stop(&x) {
                return Ok(Solution {
                    x,
                    iterations,
                    termination: Termination::Stopped,
                });
            }
            if divergence.is_some_and(|limit| x.norm() > limit) {
                return Ok(Solution {
                    x,
                    iterations,
                    termination: Termination::Diverged,
                });
            }
        }
        let gap = barrier_dim as f64 / t;
        if problem.log_det.is_none()
            && abandon_below.is_some_and(|bound| problem.linear.dot(&x) + gap < bound)
        {
            return Ok(Solution {
                x,
                iterations,
                termination: Termination::BoundBelow,
            });
        }
        if gap <= settings.gap_tolerance {
            return Ok(Solution {
                x,
                iterations,
                termination: Termination::Converged,
            });
        }
        t *= settings.growth;
    }
}
