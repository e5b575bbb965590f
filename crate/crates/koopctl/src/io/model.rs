//! Versioned JSON model file.

use std::path::Path;

use koopctl_core::edmd::FitDiagnostics;
use koopctl_core::{DMatrix, Dictionary, LiftedBilinearModel, MultiIndex};
use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::{read_file, IoError, IoResult};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionarySpec {
    pub state_dim: usize,
    pub max_degree: u32,
    pub include_constant: bool,
    pub indices: Vec<Vec<u32>>,
}

impl DictionarySpec {
    pub fn from_dictionary(dict: &Dictionary) -> Self {
        Self {
            state_dim: dict.state_dim(),
            max_degree: dict.max_degree(),
            include_constant: dict.include_constant(),
            indices: dict.indices().iter().map(|m| m.0.clone()).collect(),
        }
    }

    pub fn to_dictionary(&self) -> IoResult<Dictionary> {
        Ok(Dictionary::from_indices(
            self.state_dim,
            self.max_degree,
            self.include_constant,
            self.indices.iter().cloned().map(MultiIndex).collect(),
        )?)
    }
}

/// Row-major matrix with an explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixData {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix(&self, name: &str) -> IoResult<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(IoError::Inconsistent(format!(
                "matrix {name} declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub regression: f64,
    pub eigen: f64,
    pub transform_condition: f64,
    pub input_fit: f64,
    pub reconstruction: f64,
    pub rank_g: usize,
}

impl From<&FitDiagnostics> for Residuals {
    fn from(d: &FitDiagnostics) -> Self {
        Self {
            regression: d.regression_residual,
            eigen: d.eigen_residual,
            transform_condition: d.transform_condition,
            input_fit: d.input_fit_residual,
            reconstruction: d.reconstruction_error,
            rank_g: d.rank_g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the training data file.
    pub data_sha256: String,
    /// Seconds since the epoch from `SOURCE_DATE_EPOCH`, if set.
    pub fit_timestamp: Option<u64>,
    pub residuals: Residuals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u64,
    pub dictionary: DictionarySpec,
    #[serde(rename = "A")]
    pub a: MatrixData,
    #[serde(rename = "B")]
    pub b: MatrixData,
    #[serde(rename = "C")]
    pub c: MatrixData,
    #[serde(rename = "W")]
    pub w: MatrixData,
    /// `[re, im]` pairs.
    pub eigenvalues: Vec<[f64; 2]>,
    pub removed_direction: Option<usize>,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn new(model: &LiftedBilinearModel, provenance: Provenance) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dictionary: DictionarySpec::from_dictionary(&model.dictionary),
            a: MatrixData::from_matrix(&model.a),
            b: MatrixData::from_matrix(&model.b),
            c: MatrixData::from_matrix(&model.c),
            w: MatrixData::from_matrix(&model.w),
            eigenvalues: model.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            removed_direction: model.removed_direction,
            provenance,
        }
    }

    pub fn to_model(&self) -> IoResult<LiftedBilinearModel> {
        let model = LiftedBilinearModel {
            a: self.a.to_matrix("A")?,
            b: self.b.to_matrix("B")?,
            c: self.c.to_matrix("C")?,
            w: self.w.to_matrix("W")?,
            dictionary: self.dictionary.to_dictionary()?,
            eigenvalues: self
                .eigenvalues
                .iter()
                .map(|&[re, im]| Complex::new(re, im))
                .collect(),
            removed_direction: self.removed_direction,
        };
        model.validate()?;
        Ok(model)
    }
}

pub fn write_model(path: &Path, model: &ModelFile) -> IoResult<()> {
    super::write_json(path, model)
}

/// Reads and validates a model file; the version is checked before the
/// remaining fields so that future layouts report a version error.
pub fn read_model(path: &Path) -> IoResult<ModelFile> {
    parse_model(&read_file(path)?)
}

pub(crate) fn parse_model(text: &str) -> IoResult<ModelFile> {
    #[derive(Deserialize)]
    struct Version {
        format_version: u64,
    }
    let v: Version = serde_json::from_str(text)?;
    if v.format_version != FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion {
            found: v.format_version,
            expected: FORMAT_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_str(text)?;
    file.to_model()?;
    Ok(file)
}
