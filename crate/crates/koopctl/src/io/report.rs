//! JSON reports for controllability, synthesis and CLF checks.

use std::str::FromStr;

use koopctl_core::controllability::{AccessibilityReport, RankSample};
use koopctl_core::synthesis::{ClfReport, SynthesisResult, SynthesisStatus};
use koopctl_core::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{IoError, IoResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSampleFile {
    pub z: Vec<f64>,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllabilityFile {
    pub n: usize,
    pub certified: bool,
    pub rank_tolerance: f64,
    pub samples: Vec<RankSampleFile>,
}

impl From<&AccessibilityReport> for ControllabilityFile {
    fn from(r: &AccessibilityReport) -> Self {
        Self {
            n: r.n,
            certified: r.certified,
            rank_tolerance: r.rank_tolerance,
            samples: r
                .samples
                .iter()
                .map(|s| RankSampleFile {
                    z: s.z.iter().copied().collect(),
                    rank: s.rank,
                })
                .collect(),
        }
    }
}

impl ControllabilityFile {
    pub fn to_report(&self) -> AccessibilityReport {
        AccessibilityReport {
            n: self.n,
            rank_tolerance: self.rank_tolerance,
            samples: self
                .samples
                .iter()
                .map(|s| RankSample {
                    z: DVector::from_vec(s.z.clone()),
                    rank: s.rank,
                })
                .collect(),
            certified: self.certified,
        }
    }
}

/// Synthesis result. `objective` is `null` when no certificate exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisFile {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub k: Vec<f64>,
    pub epsilon: f64,
    pub theta: f64,
    pub objective: Option<f64>,
    pub lmi_max_eigenvalue: f64,
    pub status: String,
    pub iterations: usize,
}

impl From<&SynthesisResult> for SynthesisFile {
    fn from(r: &SynthesisResult) -> Self {
        Self {
            q: r.q.row_iter().map(|row| row.iter().copied().collect()).collect(),
            y: r.y.iter().copied().collect(),
            k: r.k.iter().copied().collect(),
            epsilon: r.epsilon,
            theta: r.theta,
            objective: r.objective.is_finite().then_some(r.objective),
            lmi_max_eigenvalue: r.lmi_max_eigenvalue,
            status: r.status.as_str().into(),
            iterations: r.iterations,
        }
    }
}

impl SynthesisFile {
    pub fn status(&self) -> IoResult<SynthesisStatus> {
        Ok(SynthesisStatus::from_str(&self.status)?)
    }

    pub fn to_result(&self) -> IoResult<SynthesisResult> {
        let n = self.q.len();
        if self.q.iter().any(|row| row.len() != n) {
            return Err(IoError::Inconsistent("Q is not square".into()));
        }
        if self.y.len() != n || self.k.len() != n {
            return Err(IoError::Inconsistent("y and k must match the size of Q".into()));
        }
        Ok(SynthesisResult {
            q: DMatrix::from_fn(n, n, |i, j| self.q[i][j]),
            y: DVector::from_vec(self.y.clone()),
            k: DVector::from_vec(self.k.clone()),
            epsilon: self.epsilon,
            theta: self.theta,
            objective: self.objective.unwrap_or(f64::NEG_INFINITY),
            lmi_max_eigenvalue: self.lmi_max_eigenvalue,
            status: self.status()?,
            iterations: self.iterations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClfFile {
    pub num_samples: usize,
    pub max_delta_v: f64,
    pub fraction_negative: f64,
    pub max_violation: f64,
    pub tolerance: f64,
    pub all_negative: bool,
    pub pass: bool,
}

impl From<&ClfReport> for ClfFile {
    fn from(r: &ClfReport) -> Self {
        Self {
            num_samples: r.num_samples,
            max_delta_v: r.max_delta_v,
            fraction_negative: r.fraction_negative,
            max_violation: r.max_violation,
            tolerance: r.tolerance,
            all_negative: r.all_negative(),
            pass: r.pass,
        }
    }
}
