//! JSON run configuration. Every field is optional; values present in the
//! file take precedence over command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_file, IoError, IoResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// `vdp` or `henon`.
    pub name: Option<String>,
    pub mu: Option<f64>,
    pub dt: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DictionaryConfig {
    pub degree: Option<u32>,
    pub constant: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub theta: Option<f64>,
    pub eps_grid: Option<Vec<f64>>,
    /// `[q_max, y_max]`.
    pub bounds: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub steps: Option<usize>,
    pub runs: Option<usize>,
    pub training_trajectories: Option<usize>,
    pub training_steps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub dictionary: DictionaryConfig,
    pub synthesis: SynthesisSection,
    pub simulation: SimulationConfig,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// Training data for `fit`, relative to the config file.
    pub data: Option<PathBuf>,
}

impl RunConfig {
    /// Loads a config and resolves its paths against the file's directory.
    pub fn load(path: &Path) -> IoResult<Self> {
        let mut cfg: RunConfig = serde_json::from_str(&read_file(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(data) = cfg.data.take() {
            let data = base.join(data);
            if !data.is_file() {
                return Err(IoError::Inconsistent(format!(
                    "config data file {} does not exist",
                    data.display()
                )));
            }
            cfg.data = Some(data);
        }
        if let Some(out) = cfg.out_dir.take() {
            cfg.out_dir = Some(base.join(out));
        }
        if let Some(name) = &cfg.system.name {
            if name != "vdp" && name != "henon" {
                return Err(IoError::Inconsistent(format!("unknown system `{name}`")));
            }
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_path_resolution() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "t,x1,u\n0,1,\n").unwrap();
        let cfg = RunConfig {
            system: SystemConfig {
                name: Some("henon".into()),
                a: Some(1.4),
                ..Default::default()
            },
            seed: Some(7),
            data: Some("d.csv".into()),
            ..Default::default()
        };
        let path = dir.path().join("run.json");
        super::super::write_json(&path, &cfg).unwrap();
        let back = RunConfig::load(&path).unwrap();
        assert_eq!(back.seed, Some(7));
        assert_eq!(back.data.as_deref(), Some(dir.path().join("d.csv").as_path()));
    }

    #[test]
    fn missing_data_and_unknown_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"data": "nope.csv"}"#).unwrap();
        assert!(RunConfig::load(&path).is_err());
        std::fs::write(&path, r#"{"sead": 1}"#).unwrap();
        assert!(matches!(RunConfig::load(&path), Err(IoError::Json { .. })));
    }
}
