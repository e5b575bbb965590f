//! Benchmark dynamics, data generation and closed-loop simulation.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::edmd::{LiftedBilinearModel, SnapshotData};
use crate::error::{Error, Result};

/// Discrete-time control-affine dynamics `x⁺ = T(x) + g(x) u` (exactly or to
/// first order in `u`).
pub trait ControlAffineSystem {
    fn state_dim(&self) -> usize;

    /// One step of the controlled map with the input held over the step.
    fn step(&self, x: &[f64], u: f64) -> Result<Vec<f64>>;

    /// Input direction `g(x)` of the discrete-time map.
    fn input_field(&self, x: &[f64]) -> Vec<f64>;

    /// Sampling period for sampled continuous-time plants.
    fn time_step(&self) -> Option<f64> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanDerPolParams {
    pub mu: f64,
    pub dt: f64,
}

impl VanDerPolParams {
    pub const MAX_DT: f64 = 0.1;

    pub fn new(mu: f64, dt: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::InvalidArgument("mu must be finite and non-negative".into()));
        }
        if !(dt > 0.0 && dt <= Self::MAX_DT) {
            return Err(Error::InvalidArgument("dt must lie in (0, 0.1]".into()));
        }
        Ok(Self { mu, dt })
    }
}

impl Default for VanDerPolParams {
    fn default() -> Self {
        Self { mu: 1.0, dt: 0.01 }
    }
}

fn vdp_field(x: [f64; 2], u: f64, mu: f64) -> [f64; 2] {
    [x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0] + u]
}

/// One classical RK4 step of `ẋ = y, ẏ = μ(1 − x²)y − x + u` with `u` held
/// constant over the step.
pub fn vdp_step(x: [f64; 2], u: f64, params: &VanDerPolParams) -> Result<[f64; 2]> {
    let h = params.dt;
    let mu = params.mu;
    let add = |a: [f64; 2], k: [f64; 2], s: f64| [a[0] + s * k[0], a[1] + s * k[1]];
    let k1 = vdp_field(x, u, mu);
    let k2 = vdp_field(add(x, k1, 0.5 * h), u, mu);
    let k3 = vdp_field(add(x, k2, 0.5 * h), u, mu);
    let k4 = vdp_field(add(x, k3, h), u, mu);
    let next = [
        x[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ];
    if next.iter().all(|v| v.is_finite()) {
        Ok(next)
    } else {
        Err(Error::BlowUp { step: 0 })
    }
}

/// Sampled Van der Pol oscillator. The discrete input direction is `dt·(0, 1)`,
/// the first-order effect of a held input over one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VanDerPol {
    pub params: VanDerPolParams,
}

impl ControlAffineSystem for VanDerPol {
    fn state_dim(&self) -> usize {
        2
    }

    fn step(&self, x: &[f64], u: f64) -> Result<Vec<f64>> {
        let next = vdp_step([x[0], x[1]], u, &self.params)?;
        Ok(next.to_vec())
    }

    fn input_field(&self, _x: &[f64]) -> Vec<f64> {
        alloc::vec![0.0, self.params.dt]
    }

    fn time_step(&self) -> Option<f64> {
        Some(self.params.dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HenonParams {
    pub a: f64,
    pub b: f64,
}

impl Default for HenonParams {
    fn default() -> Self {
        Self { a: 1.4, b: 0.3 }
    }
}

/// `(1 − a x² + y, b x + u)`.
pub fn henon_step(x: [f64; 2], u: f64, params: &HenonParams) -> [f64; 2] {
    [1.0 - params.a * x[0] * x[0] + x[1], params.b * x[0] + u]
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Henon {
    pub params: HenonParams,
}

impl ControlAffineSystem for Henon {
    fn state_dim(&self) -> usize {
        2
    }

    fn step(&self, x: &[f64], u: f64) -> Result<Vec<f64>> {
        let next = henon_step([x[0], x[1]], u, &self.params);
        if next.iter().all(|v| v.is_finite()) {
            Ok(next.to_vec())
        } else {
            Err(Error::BlowUp { step: 0 })
        }
    }

    fn input_field(&self, _x: &[f64]) -> Vec<f64> {
        alloc::vec![0.0, 1.0]
    }
}

/// `g(x_m)` in row `m` for every snapshot state, as expected by the input
/// matrix regression.
pub fn input_field_samples<S: ControlAffineSystem + ?Sized>(
    system: &S,
    data: &SnapshotData,
) -> DMatrix<f64> {
    let d = system.state_dim();
    let mut g = DMatrix::zeros(data.len(), d);
    for m in 0..data.len() {
        let row = system.input_field(&data.state(m));
        for (j, v) in row.into_iter().enumerate() {
            g[(m, j)] = v;
        }
    }
    g
}

/// States `x_0 … x_N` and, for forced runs, the inputs `u_0 … u_{N−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    /// `None` for unforced data.
    pub inputs: Option<Vec<f64>>,
    pub dt: Option<f64>,
}

impl Trajectory {
    /// Number of transitions `N`.
    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Time stamp of row `t` (the step index for maps).
    pub fn time(&self, t: usize) -> f64 {
        match self.dt {
            Some(dt) => t as f64 * dt,
            None => t as f64,
        }
    }

    pub fn input(&self, t: usize) -> f64 {
        self.inputs.as_ref().map_or(0.0, |u| u[t])
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().map_or(&[], Vec::as_slice)
    }

    /// Consecutive pairs `(x_t, x_{t+1})`.
    pub fn to_snapshots(&self) -> Result<SnapshotData> {
        let m = self.steps();
        let d = self.state_dim();
        let x = DMatrix::from_fn(m, d, |t, j| self.states[t][j]);
        let y = DMatrix::from_fn(m, d, |t, j| self.states[t + 1][j]);
        SnapshotData::new(x, y)
    }

    /// Re-applies the step function and reports the first row that differs.
    pub fn check_consistency<S: ControlAffineSystem + ?Sized>(&self, system: &S) -> Option<usize> {
        for t in 0..self.steps() {
            match system.step(&self.states[t], self.input(t)) {
                Ok(next) if next == self.states[t + 1] => {}
                _ => return Some(t),
            }
        }
        None
    }
}

/// Unforced trajectory of `steps` transitions; blow-up reports the step index.
pub fn simulate_unforced<S: ControlAffineSystem + ?Sized>(
    system: &S,
    x0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    check_state(system, x0)?;
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.to_vec());
    for t in 0..steps {
        let next = system
            .step(&states[t], 0.0)
            .map_err(|_| Error::BlowUp { step: t })?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        inputs: None,
        dt: system.time_step(),
    })
}

fn check_state<S: ControlAffineSystem + ?Sized>(system: &S, x: &[f64]) -> Result<()> {
    if x.len() != system.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "initial state",
            expected: system.state_dim(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "initial state",
            row: 0,
        });
    }
    Ok(())
}

/// A trajectory cut short by blow-up during data generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Truncation {
    pub trajectory: usize,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub data: SnapshotData,
    pub trajectories: Vec<Trajectory>,
    pub truncated: Vec<Truncation>,
}

/// Concatenates `(x_t, x_{t+1})` pairs of unforced runs from every initial
/// state. A run that blows up keeps the pairs produced before the blow-up.
pub fn generate_training_data<S: ControlAffineSystem + ?Sized>(
    system: &S,
    x0_list: &[Vec<f64>],
    steps_per_trajectory: usize,
) -> Result<TrainingData> {
    if x0_list.is_empty() {
        return Err(Error::InvalidArgument("no initial conditions".into()));
    }
    if steps_per_trajectory == 0 {
        return Err(Error::InvalidArgument("steps_per_trajectory must be at least 1".into()));
    }
    let mut trajectories = Vec::with_capacity(x0_list.len());
    let mut truncated = Vec::new();
    for (i, x0) in x0_list.iter().enumerate() {
        check_state(system, x0)?;
        let mut states = Vec::with_capacity(steps_per_trajectory + 1);
        states.push(x0.clone());
        for t in 0..steps_per_trajectory {
            match system.step(&states[t], 0.0) {
                Ok(next) => states.push(next),
                Err(_) => {
                    truncated.push(Truncation {
                        trajectory: i,
                        step: t,
                    });
                    break;
                }
            }
        }
        trajectories.push(Trajectory {
            states,
            inputs: None,
            dt: system.time_step(),
        });
    }
    let parts: Vec<SnapshotData> = trajectories
        .iter()
        .filter(|t| t.steps() > 0)
        .map(Trajectory::to_snapshots)
        .collect::<Result<_>>()?;
    let data = SnapshotData::concat(&parts)?;
    Ok(TrainingData {
        data,
        trajectories,
        truncated,
    })
}

/// Simulates the plant under `u_t = kᵀ W Φ(x_t)`, optionally clamped.
pub fn closed_loop_simulate<S: ControlAffineSystem + ?Sized>(
    system: &S,
    model: &LiftedBilinearModel,
    k: &DVector<f64>,
    x0: &[f64],
    steps: usize,
    u_bounds: Option<(f64, f64)>,
) -> Result<Trajectory> {
    check_state(system, x0)?;
    if model.state_dim() != system.state_dim() {
        return Err(Error::DimensionMismatch {
            context: "model state dimension",
            expected: system.state_dim(),
            found: model.state_dim(),
        });
    }
    if k.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            context: "feedback gain",
            expected: model.dim(),
            found: k.len(),
        });
    }
    if let Some((lo, hi)) = u_bounds {
        if !(lo <= hi) {
            return Err(Error::InvalidArgument("input bounds are inverted".into()));
        }
    }
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    states.push(x0.to_vec());
    for t in 0..steps {
        let z = model.lift(&states[t])?;
        let mut u = k.dot(&z);
        if let Some((lo, hi)) = u_bounds {
            u = u.clamp(lo, hi);
        }
        if !u.is_finite() {
            return Err(Error::BlowUp { step: t });
        }
        let next = system
            .step(&states[t], u)
            .map_err(|_| Error::BlowUp { step: t })?;
        inputs.push(u);
        states.push(next);
    }
    Ok(Trajectory {
        states,
        inputs: Some(inputs),
        dt: system.time_step(),
    })
}

/// Axis-aligned rectangle `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Normalized occupancy of a 2-D trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram2d {
    pub nx: usize,
    pub ny: usize,
    pub bounds: Rect,
    /// Row-major mass, `mass[iy * nx + ix]`.
    pub mass: Vec<f64>,
    /// Fraction of points outside `bounds`.
    pub overflow: f64,
    pub samples: usize,
}

impl Histogram2d {
    pub fn cell(&self, ix: usize, iy: usize) -> f64 {
        self.mass[iy * self.nx + ix]
    }

    pub fn in_bounds_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn occupied_cells(&self) -> usize {
        self.mass.iter().filter(|&&m| m > 0.0).count()
    }
}

/// Histogram of the unforced trajectory after `burn_in` steps; the last
/// `steps − burn_in` states are binned.
pub fn invariant_measure_histogram<S: ControlAffineSystem + ?Sized>(
    system: &S,
    x0: &[f64],
    steps: usize,
    burn_in: usize,
    bins: (usize, usize),
    bounds: Rect,
) -> Result<Histogram2d> {
    if system.state_dim() != 2 {
        return Err(Error::InvalidArgument("histograms need a planar system".into()));
    }
    if steps <= burn_in {
        return Err(Error::InvalidArgument("steps must exceed burn_in".into()));
    }
    let (nx, ny) = bins;
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("bin counts must be positive".into()));
    }
    if !(bounds.x_min < bounds.x_max && bounds.y_min < bounds.y_max) {
        return Err(Error::InvalidArgument("histogram bounds are empty".into()));
    }
    check_state(system, x0)?;
    let mut counts = alloc::vec![0u64; nx * ny];
    let mut outside = 0u64;
    let mut x = x0.to_vec();
    for t in 0..steps {
        x = system.step(&x, 0.0).map_err(|_| Error::BlowUp { step: t })?;
        if t < burn_in {
            continue;
        }
        if bounds.contains(x[0], x[1]) {
            let fx = (x[0] - bounds.x_min) / (bounds.x_max - bounds.x_min);
            let fy = (x[1] - bounds.y_min) / (bounds.y_max - bounds.y_min);
            let ix = ((fx * nx as f64) as usize).min(nx - 1);
            let iy = ((fy * ny as f64) as usize).min(ny - 1);
            counts[iy * nx + ix] += 1;
        } else {
            outside += 1;
        }
    }
    let total = (steps - burn_in) as f64;
    Ok(Histogram2d {
        nx,
        ny,
        bounds,
        mass: counts.iter().map(|&c| c as f64 / total).collect(),
        overflow: outside as f64 / total,
        samples: steps - burn_in,
    })
}

/// `count` points drawn uniformly from a box, one `[lo, hi]` per coordinate.
pub fn uniform_initial_conditions(count: usize, ranges: &[(f64, f64)], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            ranges
                .iter()
                .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn vdp_origin_is_fixed() {
        let p = VanDerPolParams::default();
        assert_eq!(vdp_step([0.0, 0.0], 0.0, &p).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn vdp_params_validated() {
        assert!(VanDerPolParams::new(1.0, 0.2).is_err());
        assert!(VanDerPolParams::new(-1.0, 0.01).is_err());
        assert!(VanDerPolParams::new(1.0, 0.0).is_err());
        assert!(VanDerPolParams::new(0.0, 0.1).is_ok());
    }

    #[test]
    fn harmonic_energy_drift() {
        let p = VanDerPolParams { mu: 0.0, dt: 0.01 };
        let x = vdp_step([1.0, 0.0], 0.0, &p).unwrap();
        let energy = x[0] * x[0] + x[1] * x[1];
        assert!((energy - 1.0).abs() <= 1e-8);
        // exact rotation by dt
        assert!((x[0] - libm::cos(0.01)).abs() < 1e-10);
        assert!((x[1] + libm::sin(0.01)).abs() < 1e-10);
    }

    #[test]
    fn vdp_matches_refined_integration() {
        let p = VanDerPolParams::default();
        let fine = VanDerPolParams {
            mu: 1.0,
            dt: p.dt / 100.0,
        };
        for &x0 in &[[1.3, -0.4], [-2.0, 2.5], [0.1, 0.05]] {
            let coarse = vdp_step(x0, 0.0, &p).unwrap();
            let mut x = x0;
            for _ in 0..100 {
                x = vdp_step(x, 0.0, &fine).unwrap();
            }
            assert!((coarse[0] - x[0]).abs() < 1e-7 && (coarse[1] - x[1]).abs() < 1e-7);
        }
    }

    #[test]
    fn vdp_blow_up_is_reported() {
        let p = VanDerPolParams { mu: 1.0, dt: 0.1 };
        assert_eq!(
            vdp_step([1e200, 1e200], 0.0, &p),
            Err(Error::BlowUp { step: 0 })
        );
    }

    #[test]
    fn henon_examples() {
        let p = HenonParams::default();
        assert_eq!(henon_step([0.0, 0.0], 0.0, &p), [1.0, 0.0]);
        let x = henon_step([1.0, 0.0], 0.0, &p);
        assert!((x[0] + 0.4).abs() < 1e-15 && (x[1] - 0.3).abs() < 1e-15);
        let x0 = [0.7, -0.2];
        assert_eq!(henon_step(x0, -p.b * x0[0], &p)[1], 0.0);
    }

    #[test]
    fn training_counts() {
        let vdp = VanDerPol::default();
        let data = generate_training_data(&vdp, &[vec![1.0, 0.5]], 1000).unwrap();
        assert_eq!(data.data.len(), 1000);
        let henon = Henon::default();
        let data = generate_training_data(&henon, &[vec![0.0, 0.0]], 10_000).unwrap();
        assert_eq!(data.data.len(), 10_000);
        let x0s = uniform_initial_conditions(7, &[(-1.0, 1.0), (-1.0, 1.0)], 1);
        let data = generate_training_data(&vdp, &x0s, 1).unwrap();
        assert_eq!(data.data.len(), 7);
    }

    #[test]
    fn training_truncates_blow_up() {
        let henon = Henon::default();
        // escapes to infinity within a few hundred steps
        let data = generate_training_data(&henon, &[vec![0.0, 0.0], vec![3.0, 3.0]], 2000).unwrap();
        assert_eq!(data.truncated.len(), 1);
        assert_eq!(data.truncated[0].trajectory, 1);
        assert_eq!(data.data.len(), 2000 + data.truncated[0].step);
    }

    #[test]
    fn training_pairs_are_consecutive() {
        let henon = Henon::default();
        let data = generate_training_data(&henon, &[vec![0.1, 0.0], vec![-0.1, 0.1]], 5).unwrap();
        assert_eq!(data.data.len(), 10);
        for m in 0..data.data.len() {
            let x = data.data.state(m);
            let y: Vec<f64> = data.data.y().row(m).iter().copied().collect();
            assert_eq!(henon.step(&x, 0.0).unwrap(), y);
        }
        for t in &data.trajectories {
            assert_eq!(t.check_consistency(&henon), None);
        }
    }

    #[test]
    fn histogram_single_point() {
        let henon = Henon::default();
        let r = Rect {
            x_min: -2.0,
            x_max: 2.0,
            y_min: -1.0,
            y_max: 1.0,
        };
        let h = invariant_measure_histogram(&henon, &[0.0, 0.0], 11, 10, (20, 20), r).unwrap();
        assert_eq!(h.occupied_cells(), 1);
        assert_eq!(h.samples, 1);
        assert!((h.in_bounds_mass() + h.overflow - 1.0).abs() < 1e-12);
        assert!(invariant_measure_histogram(&henon, &[0.0, 0.0], 10, 10, (2, 2), r).is_err());
    }

    #[test]
    fn uniform_points_reproducible() {
        let a = uniform_initial_conditions(5, &[(-3.0, 3.0), (0.0, 1.0)], 42);
        let b = uniform_initial_conditions(5, &[(-3.0, 3.0), (0.0, 1.0)], 42);
        assert_eq!(a, b);
        for p in &a {
            assert!(p[0] >= -3.0 && p[0] < 3.0 && p[1] >= 0.0 && p[1] < 1.0);
        }
    }
}
