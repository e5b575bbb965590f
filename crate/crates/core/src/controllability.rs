//! Sampled accessibility-rank certificates for bilinear lifts.
//!
//! For `z⁺ = A z + u B z` the input field is `θ(z) = B z` and iterated
//! brackets with the drift `f(z) = A z` are linear fields `[[B, A], A…] z`.
//! The lift has no additive input channel, so the accessibility matrix at `z`
//! is made of the columns `B z, [B, A] z, [[B, A], A] z, …`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::edmd::LiftedBilinearModel;
use crate::error::{Error, Result};
use crate::linalg;

/// Singular values above `RANK_TOL · σ_max` count towards the rank.
pub const RANK_TOL: f64 = 1e-8;

/// `[B, [B, A], [[B, A], A], …]`, truncated at `n + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketChain {
    pub matrices: Vec<DMatrix<f64>>,
}

impl BracketChain {
    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }
}

/// Builds the bracket chain; entry `k + 1` is `M_k A − A M_k`.
pub fn bracket_chain(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<BracketChain> {
    let n = a.nrows();
    if !a.is_square() || b.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            context: "bracket_chain",
            expected: n,
            found: if a.is_square() { b.nrows() } else { a.ncols() },
        });
    }
    let mut matrices = Vec::with_capacity(n + 1);
    matrices.push(b.clone());
    for k in 0..n {
        let prev = &matrices[k];
        let next = prev * a - a * prev;
        matrices.push(next);
    }
    Ok(BracketChain { matrices })
}

/// Columns `M_k z` for every chain entry.
pub fn accessibility_matrix(chain: &BracketChain, z: &DVector<f64>) -> Result<DMatrix<f64>> {
    let n = chain.dim();
    if z.len() != n {
        return Err(Error::DimensionMismatch {
            context: "accessibility_matrix",
            expected: n,
            found: z.len(),
        });
    }
    let mut q = DMatrix::zeros(n, chain.matrices.len());
    for (k, m) in chain.matrices.iter().enumerate() {
        q.set_column(k, &(m * z));
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSample {
    pub z: DVector<f64>,
    pub rank: usize,
}

/// Sampled controllability certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessibilityReport {
    pub n: usize,
    pub rank_tolerance: f64,
    pub samples: Vec<RankSample>,
    /// Full rank at every sample.
    pub certified: bool,
}

impl AccessibilityReport {
    pub fn min_rank(&self) -> usize {
        self.samples.iter().map(|s| s.rank).min().unwrap_or(0)
    }
}

/// Rank of the accessibility matrix at points drawn uniformly on the sphere
/// of the given radius. Deterministic for a fixed seed.
pub fn controllability_report_for(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    num_samples: usize,
    seed: u64,
    radius: f64,
) -> Result<AccessibilityReport> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument("num_samples must be at least 1".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument("radius must be positive and finite".into()));
    }
    let chain = bracket_chain(a, b)?;
    let n = chain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(num_samples);
    for _ in 0..num_samples {
        let z = sphere_point(&mut rng, n, radius);
        let q = accessibility_matrix(&chain, &z)?;
        let rank = linalg::numeric_rank(&q, RANK_TOL);
        samples.push(RankSample { z, rank });
    }
    let certified = n > 0 && samples.iter().all(|s| s.rank == n);
    Ok(AccessibilityReport {
        n,
        rank_tolerance: RANK_TOL,
        samples,
        certified,
    })
}

/// [`controllability_report_for`] on the drift and input matrices of a model.
pub fn controllability_report(
    model: &LiftedBilinearModel,
    num_samples: usize,
    seed: u64,
    radius: f64,
) -> Result<AccessibilityReport> {
    controllability_report_for(&model.a, &model.b, num_samples, seed, radius)
}

fn sphere_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(rng) });
        let norm = v.norm();
        // excludes the origin
        if norm > 1e-12 {
            return v * (radius / norm);
        }
    }
}
