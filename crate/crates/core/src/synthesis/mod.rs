//! Quadratic stabilization of the lifted bilinear system.
//!
//! For a fixed multiplier `ε` the stabilization inequality
//! [`build_stabilization_lmi`]` ⪯ 0` is affine in `(Q, y)`, so the ellipsoid
//! volume `log det Q` is maximized by a log-barrier interior-point method
//! after a phase-one search for a strictly feasible point. The multiplier is
//! scanned over a grid and the best grid point is returned.
//!
//! When `(Q, 0)` is feasible the inequality stays feasible along the ray
//! `Q → cQ` and the volume is unbounded; the solver reports
//! [`SynthesisStatus::Unbounded`] with a zero gain in that case.

mod barrier;
mod clf;
mod lmi;

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{max_symmetric_eigenvalue, min_symmetric_eigenvalue, spd_solve};
use barrier::{AffineMatrix, Congruence, MaxDetProblem, Settings, Termination};

pub use clf::{sample_ellipsoid, verify_clf, ClfReport};
pub use lmi::{build_stabilization_lmi, petersen_block, petersen_check, petersen_grid, PetersenCheck};

/// Solver iterates keep the block matrix below `−STRICT_MARGIN · I`.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Phase one stops once this much slack is available.
const PHASE_ONE_TARGET: f64 = 1e-6;

/// Scale factors probed along the ray `Q → cQ`.
const RAY_SCALES: [f64; 4] = [1.0, 1e2, 1e4, 1e6];

/// Iterate-norm growth that counts as unbounded in phase two.
const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParameters {
    pub initial_t: f64,
    pub growth: f64,
    /// Newton decrement threshold `λ²/2` for centering.
    pub newton_tolerance: f64,
    /// Stop when the barrier gap (total constraint dimension over `t`) is
    /// below this.
    pub gap_tolerance: f64,
}

impl Default for BarrierParameters {
    fn default() -> Self {
        Self {
            initial_t: 1.0,
            growth: 10.0,
            newton_tolerance: 1e-9,
            gap_tolerance: 1e-8,
        }
    }
}

/// Optional bounds `Q ⪯ q_max I`, `‖y‖ ≤ y_max` that make the volume bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariableBox {
    pub q_max: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Contraction parameter in `(0, 1)`.
    pub theta: f64,
    pub epsilon_grid: Vec<f64>,
    /// Largest admissible eigenvalue of the block matrix at a solution.
    pub lmi_tolerance: f64,
    /// Newton iterations allowed per phase and grid point.
    pub max_iterations: usize,
    pub barrier: BarrierParameters,
    pub bounds: Option<VariableBox>,
}

impl SynthesisConfig {
    /// 13 logarithmically spaced values from `1e-3` to `1e1`.
    pub fn default_epsilon_grid() -> Vec<f64> {
        (0..13)
            .map(|k| libm::pow(10.0, -3.0 + 4.0 * k as f64 / 12.0))
            .collect()
    }

    /// `θ = 0.001`, `ε = 0.01`.
    pub fn reference_benchmark() -> Self {
        Self {
            theta: 0.001,
            epsilon_grid: alloc::vec![0.01],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidArgument("theta must lie in (0, 1)".into()));
        }
        if self.epsilon_grid.is_empty() {
            return Err(Error::InvalidArgument("epsilon grid is empty".into()));
        }
        if self.epsilon_grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument("epsilon values must be positive".into()));
        }
        if !(self.lmi_tolerance >= 0.0) {
            return Err(Error::InvalidArgument("lmi_tolerance must be non-negative".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be positive".into()));
        }
        let b = &self.barrier;
        if !(b.initial_t > 0.0 && b.growth > 1.0 && b.newton_tolerance > 0.0 && b.gap_tolerance > 0.0)
        {
            return Err(Error::InvalidArgument("invalid barrier parameters".into()));
        }
        if let Some(bx) = self.bounds {
            if !(bx.q_max > 0.0 && bx.y_max > 0.0) {
                return Err(Error::InvalidArgument("variable bounds must be positive".into()));
            }
        }
        Ok(())
    }

    fn settings(&self) -> Settings {
        Settings {
            initial_t: self.barrier.initial_t,
            growth: self.barrier.growth,
            newton_tolerance: self.barrier.newton_tolerance,
            gap_tolerance: self.barrier.gap_tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            epsilon_grid: Self::default_epsilon_grid(),
            lmi_tolerance: 1e-7,
            max_iterations: 500,
            barrier: BarrierParameters::default(),
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisStatus {
    Optimal,
    /// Feasible but stopped before the gap tolerance was met.
    Feasible,
    Infeasible,
    Unbounded,
}

impl SynthesisStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SynthesisStatus::Optimal => "optimal",
            SynthesisStatus::Feasible => "feasible",
            SynthesisStatus::Infeasible => "infeasible",
            SynthesisStatus::Unbounded => "unbounded",
        }
    }

    pub fn has_certificate(self) -> bool {
        matches!(self, SynthesisStatus::Optimal | SynthesisStatus::Feasible)
    }
}

impl core::str::FromStr for SynthesisStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => Ok(Self::Optimal),
            "feasible" => Ok(Self::Feasible),
            "infeasible" => Ok(Self::Infeasible),
            "unbounded" => Ok(Self::Unbounded),
            other => Err(Error::InvalidArgument(alloc::format!("unknown status `{other}`"))),
        }
    }
}

/// `(Q, y, k)` with the multiplier used and the certificate value.
///
/// For `Unbounded`, `q` is a feasible point on the unbounded ray and
/// `y = k = 0`. For `Infeasible`, `q`, `y` are the last phase-one iterate and
/// `objective` is `−∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub q: DMatrix<f64>,
    pub y: DVector<f64>,
    pub k: DVector<f64>,
    pub epsilon: f64,
    pub theta: f64,
    /// `log det Q`.
    pub objective: f64,
    /// Largest eigenvalue of the block matrix at `(Q, y)`.
    pub lmi_max_eigenvalue: f64,
    pub status: SynthesisStatus,
    pub iterations: usize,
}

impl SynthesisResult {
    /// Stabilizability ellipsoid `{z : zᵀ Q⁻¹ z ≤ 1}`.
    pub fn ellipsoid(&self) -> Result<EllipsoidCertificate> {
        EllipsoidCertificate::new(&self.q)
    }
}

/// `{z : zᵀ P z ≤ 1}` with `P = Q⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidCertificate {
    pub q_inverse: DMatrix<f64>,
    /// Lower Cholesky factor of `Q`.
    l: DMatrix<f64>,
}

impl EllipsoidCertificate {
    pub fn new(q: &DMatrix<f64>) -> Result<Self> {
        let chol_q = Cholesky::new(q.clone())
            .ok_or_else(|| Error::InvalidArgument("Q is not positive definite".into()))?;
        let q_inverse = chol_q.inverse();
        let q_inverse = (&q_inverse + q_inverse.transpose()) * 0.5;
        Ok(Self {
            q_inverse,
            l: chol_q.l(),
        })
    }

    /// `zᵀ Q⁻¹ z`.
    pub fn level(&self, z: &DVector<f64>) -> f64 {
        let w = self
            .l
            .solve_lower_triangular(z)
            .unwrap_or_else(|| DVector::from_element(z.len(), f64::INFINITY));
        w.norm_squared()
    }

    pub fn contains(&self, z: &DVector<f64>) -> bool {
        self.level(z) <= 1.0
    }
}

/// `k = Q⁻¹ y` by Cholesky; only for results carrying a certificate.
pub fn extract_gain(result: &SynthesisResult) -> Result<DVector<f64>> {
    if !result.status.has_certificate() {
        return Err(Error::NoGain {
            status: result.status.as_str(),
        });
    }
    spd_solve(&result.q, &result.y)
}

fn check_pair(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if !a.is_square() || b.shape() != (n, n) || n == 0 {
        return Err(Error::DimensionMismatch {
            context: "synthesis matrices",
            expected: n,
            found: b.nrows(),
        });
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "synthesis matrices",
            row: 0,
        });
    }
    Ok(n)
}

/// Decision variables: the upper triangle of `Q` row by row, then `y`.
struct Layout {
    n: usize,
}

impl Layout {
    fn q_vars(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    fn len(&self) -> usize {
        self.q_vars() + self.n
    }

    fn pack(&self, q: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.len());
        let mut p = 0;
        for i in 0..self.n {
            for j in i..self.n {
                x[p] = q[(i, j)];
                p += 1;
            }
        }
        x.rows_mut(p, self.n).copy_from(y);
        x
    }

    fn unpack(&self, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n;
        let mut q = DMatrix::zeros(n, n);
        let mut p = 0;
        for i in 0..n {
            for j in i..n {
                q[(i, j)] = x[p];
                q[(j, i)] = x[p];
                p += 1;
            }
        }
        (q, x.rows(p, n).into_owned())
    }
}

/// Affine pieces of one fixed-`ε` subproblem; every constraint is `≻ 0`.
struct Subproblem<'a> {
    a: &'a DMatrix<f64>,
    b: &'a DMatrix<f64>,
    epsilon: f64,
    theta: f64,
    layout: Layout,
    constraints: Vec<AffineMatrix>,
    log_det: AffineMatrix,
}

impl<'a> Subproblem<'a> {
    fn new(
        a: &'a DMatrix<f64>,
        b: &'a DMatrix<f64>,
        epsilon: f64,
        theta: f64,
        bounds: Option<VariableBox>,
    ) -> Result<Self> {
        let n = a.nrows();
        let layout = Layout { n };
        let zero_q = DMatrix::zeros(n, n);
        let zero_y = DVector::zeros(n);
        let s0 = build_stabilization_lmi(a, b, &zero_q, &zero_y, epsilon, theta)?;
        let size = s0.nrows();

        // −S(Q, y) − δI ≻ 0, with Q entering through block congruences
        let select = |offset: usize, m: &DMatrix<f64>| {
            let mut out = DMatrix::zeros(size, n);
            out.rows_mut(offset, n).copy_from(m);
            out
        };
        let id = DMatrix::identity(n, n);
        let (j1, j2, j4) = (select(0, &id), select(n, &id), select(2 * n + 1, &id));
        let (j4a, j4b) = (select(2 * n + 1, a), select(2 * n + 1, b));
        let congruence = Congruence {
            n,
            u: alloc::vec![
                &j1 * theta,
                &j2 * epsilon,
                j4.clone(),
                -&j1,
                -&j4a,
                -&j2,
                -&j4b,
            ],
            v: alloc::vec![j1.clone(), j2.clone(), j4, j4a, j1, j4b, j2],
        };
        let mut y_coefficients = Vec::with_capacity(n);
        for j in 0..n {
            let mut y = DVector::zeros(n);
            y[j] = 1.0;
            let s = build_stabilization_lmi(a, b, &zero_q, &y, epsilon, theta)?;
            y_coefficients.push(-(s - &s0));
        }
        let lmi = AffineMatrix::structured(
            -&s0 - DMatrix::identity(size, size) * STRICT_MARGIN,
            congruence,
            y_coefficients,
        );
        let mut constraints = alloc::vec![lmi];
        let zeros = |k: usize, dim: usize| (0..k).map(|_| DMatrix::zeros(dim, dim)).collect();

        if let Some(bx) = bounds {
            // q_max I − Q ≻ 0
            let congruence = Congruence {
                n,
                u: alloc::vec![-&id],
                v: alloc::vec![id.clone()],
            };
            constraints.push(AffineMatrix::structured(&id * bx.q_max, congruence, zeros(n, n)));
            // [[y_max, yᵀ], [y, y_max I]] ≻ 0
            let mut coeffs: Vec<DMatrix<f64>> = zeros(layout.q_vars(), n + 1);
            for j in 0..n {
                let mut e = DMatrix::zeros(n + 1, n + 1);
                e[(0, j + 1)] = 1.0;
                e[(j + 1, 0)] = 1.0;
                coeffs.push(e);
            }
            constraints.push(AffineMatrix::new(
                DMatrix::identity(n + 1, n + 1) * bx.y_max,
                coeffs,
            ));
        }

        let congruence = Congruence {
            n,
            u: alloc::vec![id.clone()],
            v: alloc::vec![id],
        };
        let log_det = AffineMatrix::structured(DMatrix::zeros(n, n), congruence, zeros(n, n));

        Ok(Self {
            a,
            b,
            epsilon,
            theta,
            layout,
            constraints,
            log_det,
        })
    }

    fn lmi_max_eigenvalue(&self, q: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
        build_stabilization_lmi(self.a, self.b, q, y, self.epsilon, self.theta)
            .map(|s| max_symmetric_eigenvalue(&s))
            .unwrap_or(f64::INFINITY)
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        self.constraints
            .iter()
            .all(|f| Cholesky::new(f.eval(x)).is_some())
    }

    /// Minimizes a common slack `s` with `F_k(x) + s I ≻ 0`; returns the
    /// point and its slack.
    fn phase_one(
        &self,
        config: &SynthesisConfig,
        start_q: f64,
    ) -> Result<(DVector<f64>, f64, usize)> {
        let n = self.layout.n;
        let x0 = self.layout.pack(&(DMatrix::identity(n, n) * start_q), &DVector::zeros(n));
        let worst = self
            .constraints
            .iter()
            .map(|f| -min_symmetric_eigenvalue(&f.eval(&x0)))
            .fold(f64::NEG_INFINITY, f64::max);
        let s0 = worst.max(0.0) + 1.0;
        let constraints: Vec<AffineMatrix> = self
            .constraints
            .iter()
            .map(|f| f.with_extra_variable(DMatrix::identity(f.dim(), f.dim())))
            .collect();
        let m = self.layout.len();
        let mut linear = DVector::zeros(m + 1);
        linear[m] = -1.0;
        let bound = 1e8 * start_q.max(s0).max(1.0);
        let problem = MaxDetProblem {
            linear,
            log_det: None,
            constraints,
            variable_bound: Some(bound),
        };
        let mut start = DVector::zeros(m + 1);
        start.rows_mut(0, m).copy_from(&x0);
        start[m] = s0;
        let sol = barrier::solve(
            &problem,
            start,
            &config.settings(),
            |x| x[m] < -PHASE_ONE_TARGET,
            None,
            Some(PHASE_ONE_TARGET),
        )?;
        let slack = sol.x[m];
        Ok((sol.x.rows(0, m).into_owned(), slack, sol.iterations))
    }

    fn result(
        &self,
        q: DMatrix<f64>,
        y: DVector<f64>,
        status: SynthesisStatus,
        iterations: usize,
    ) -> Result<SynthesisResult> {
        let lmi_max_eigenvalue = self.lmi_max_eigenvalue(&q, &y);
        let (k, objective) = match status {
            SynthesisStatus::Infeasible => (DVector::zeros(self.layout.n), f64::NEG_INFINITY),
            _ => {
                let chol = Cholesky::new(q.clone()).ok_or_else(|| Error::SolverFailure {
                    reason: "returned Q is not positive definite".into(),
                    iterations,
                    max_eigenvalue: lmi_max_eigenvalue,
                })?;
                let log_det =
                    2.0 * chol.l_dirty().diagonal().iter().map(|d| libm::log(*d)).sum::<f64>();
                (chol.solve(&y), log_det)
            }
        };
        Ok(SynthesisResult {
            q,
            y,
            k,
            epsilon: self.epsilon,
            theta: self.theta,
            objective,
            lmi_max_eigenvalue,
            status,
            iterations,
        })
    }
}

/// Strictly feasible point for one multiplier, if any.
fn feasible_point(
    sub: &Subproblem<'_>,
    config: &SynthesisConfig,
) -> Result<(Option<DVector<f64>>, DVector<f64>, usize)> {
    let start_q = config.bounds.map_or(1.0, |bx| 0.5 * bx.q_max);
    let (x, slack, iterations) = sub.phase_one(config, start_q)?;
    let found = slack < 0.0 && sub.strictly_feasible(&x);
    Ok((found.then(|| x.clone()), x, iterations))
}

/// Maximizes `log det Q` for a single multiplier `ε`.
pub fn solve_fixed_epsilon(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    epsilon: f64,
    config: &SynthesisConfig,
) -> Result<SynthesisResult> {
    config.validate()?;
    check_pair(a, b)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let sub = Subproblem::new(a, b, epsilon, config.theta, config.bounds)?;
    let (found, last, phase_one_iterations) = feasible_point(&sub, config)?;
    let Some(x1) = found else {
        let (q, y) = sub.layout.unpack(&last);
        return sub.result(q, y, SynthesisStatus::Infeasible, phase_one_iterations);
    };
    let (q1, _) = sub.layout.unpack(&x1);
    let n = sub.layout.n;

    if config.bounds.is_none() {
        let zero = DVector::zeros(n);
        let on_ray = RAY_SCALES
            .iter()
            .all(|&c| sub.lmi_max_eigenvalue(&(&q1 * c), &zero) <= -STRICT_MARGIN);
        if on_ray {
            return sub.result(q1, zero, SynthesisStatus::Unbounded, phase_one_iterations);
        }
    }

    let problem = MaxDetProblem {
        linear: DVector::zeros(sub.layout.len()),
        log_det: Some(sub.log_det.clone()),
        constraints: sub.constraints.clone(),
        variable_bound: None,
    };
    let divergence = config
        .bounds
        .is_none()
        .then(|| DIVERGENCE_FACTOR * x1.norm().max(1.0));
    let sol = barrier::solve(&problem, x1, &config.settings(), |_| false, divergence, None)?;
    let iterations = phase_one_iterations + sol.iterations;
    let (q, y) = sub.layout.unpack(&sol.x);
    let status = match sol.termination {
        Termination::Converged => SynthesisStatus::Optimal,
        Termination::Diverged => {
            let (q, _) = sub.layout.unpack(&sol.x);
            return sub.result(q, DVector::zeros(n), SynthesisStatus::Unbounded, iterations);
        }
        Termination::IterationLimit | Termination::Stopped | Termination::BoundBelow => {
            SynthesisStatus::Feasible
        }
    };
    let result = sub.result(q, y, status, iterations)?;
    if result.lmi_max_eigenvalue > config.lmi_tolerance {
        return Err(Error::SolverFailure {
            reason: "solution violates the LMI tolerance".into(),
            iterations,
            max_eigenvalue: result.lmi_max_eigenvalue,
        });
    }
    Ok(result)
}

fn rank(r: &SynthesisResult) -> (u8, f64) {
    match r.status {
        SynthesisStatus::Unbounded => (2, 0.0),
        SynthesisStatus::Optimal | SynthesisStatus::Feasible => (1, r.objective),
        SynthesisStatus::Infeasible => (0, -r.lmi_max_eigenvalue),
    }
}

/// Solves every grid multiplier and keeps the best: unbounded beats bounded,
/// then larger `log det Q`; ties go to the smaller `ε`.
pub fn solve_detmax(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    config: &SynthesisConfig,
) -> Result<SynthesisResult> {
    config.validate()?;
    check_pair(a, b)?;
    let mut grid = config.epsilon_grid.clone();
    grid.sort_by(f64::total_cmp);
    let mut best: Option<SynthesisResult> = None;
    for eps in grid {
        let r = solve_fixed_epsilon(a, b, eps, config)?;
        let better = match &best {
            None => true,
            Some(cur) => {
                let (rc, oc) = rank(cur);
                let (rn, on) = rank(&r);
                rn > rc || (rn == rc && on > oc)
            }
        };
        if better {
            best = Some(r);
        }
    }
    Ok(best.expect("grid is non-empty"))
}

/// True when some grid multiplier admits a strictly feasible `(Q, y)`.
///
/// Only the largest multiplier is tested: the scalar block contributes
/// `ε·yyᵀ ⪰ 0` after a Schur complement, so a feasible `(Q, y)` at `ε` makes
/// `(Q, 0)` feasible at every `ε' ≥ ε`.
pub fn is_feasible(a: &DMatrix<f64>, b: &DMatrix<f64>, config: &SynthesisConfig) -> Result<bool> {
    config.validate()?;
    check_pair(a, b)?;
    let eps = config
        .epsilon_grid
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let sub = Subproblem::new(a, b, eps, config.theta, config.bounds)?;
    Ok(feasible_point(&sub, config)?.0.is_some())
}

/// Spectral radius of a real matrix.
fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| libm::hypot(z.re, z.im))
        .fold(0.0, f64::max)
}

/// Smallest `θ ≥ config.theta` (to a relative resolution of 5% in `1 − θ`)
/// for which the inequality is feasible on the configured grid, or `None`
/// when even `θ = 1 − 1e-9` is infeasible. Feasibility is monotone in `θ`
/// and requires `θ > ρ(A)²` (the `(1, 4)` corner gives `AQAᵀ ≺ θQ`).
pub fn nearest_feasible_theta(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    config: &SynthesisConfig,
) -> Result<Option<f64>> {
    config.validate()?;
    check_pair(a, b)?;
    let feasible_at = |log_gap: f64| {
        let theta = 1.0 - libm::exp(log_gap);
        is_feasible(a, b, &SynthesisConfig {
            theta,
            ..config.clone()
        })
    };
    let floor = libm::log(1e-9);
    let rho = spectral_radius(a);
    let rho2 = rho * rho;
    let start = libm::log(1.0 - config.theta);
    if rho2 < config.theta && is_feasible(a, b, config)? {
        return Ok(Some(config.theta));
    }
    // bracket on log(1 − θ), halving the gap below the necessary bound
    let mut infeasible = if rho2 < 1.0 {
        start.min(libm::log(1.0 - rho2))
    } else {
        return Ok(None);
    };
    let mut feasible = infeasible;
    loop {
        feasible = (feasible - core::f64::consts::LN_2).max(floor);
        if feasible_at(feasible)? {
            break;
        }
        if feasible <= floor {
            return Ok(None);
        }
        infeasible = feasible;
    }
    while infeasible - feasible > libm::log(1.05) {
        let mid = 0.5 * (infeasible + feasible);
        if feasible_at(mid)? {
            feasible = mid;
        } else {
            infeasible = mid;
        }
    }
    Ok(Some(1.0 - libm::exp(feasible)))
}
