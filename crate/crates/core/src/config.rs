//! Experiment configuration files.
//!
//! ```toml
//! [lattice]
//! ell = 4
//! L = 4
//!
//! [model]
//! J = 1.0
//! lambda = 0.1
//! v_shells = [{ r2 = 2, v = 1.0 }]
//!
//! [run]
//! betas = [0.2, 0.44, 0.7]
//!
//! [output]
//! format = "json"
//! path = "lemma1.json"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{InteractionSpec, Shell};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub ell: Option<usize>,
    #[serde(rename = "L")]
    pub big_l: Option<usize>,
    pub ell_list: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellEntry {
    pub r2: u32,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(rename = "J", default = "unit")]
    pub j: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub v_shells: Vec<ShellEntry>,
}

fn unit() -> f64 {
    1.0
}

impl Default for ModelBlock {
    fn default() -> Self {
        ModelBlock { j: 1.0, lambda: 0.0, v_shells: Vec::new() }
    }
}

impl ModelBlock {
    /// Builds the interaction; an empty shell list with nonzero `lambda`
    /// means the diagonal shell with `v = 1`.
    pub fn interaction(&self) -> Result<InteractionSpec> {
        let shells = if self.v_shells.is_empty() && self.lambda != 0.0 {
            vec![Shell { r2: 2, v: 1.0 }]
        } else {
            self.v_shells.iter().map(|s| Shell { r2: s.r2, v: s.v }).collect()
        };
        InteractionSpec::new(self.j, self.lambda, shells)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    pub beta: Option<f64>,
    pub betas: Option<Vec<f64>>,
    pub t: Option<f64>,
    pub mode: Option<String>,
    pub extrapolation_order: Option<usize>,
    pub widths: Option<Vec<usize>>,
    pub bracket: Option<[f64; 2]>,
    pub convention: Option<String>,
    pub h_range: Option<[i32; 2]>,
    pub checks: Option<Vec<String>>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default)]
    pub format: OutputFormat,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub lattice: LatticeBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub run: RunBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks that hold for every subcommand.
    pub fn validate(&self) -> Result<()> {
        let even = |n: usize, what: &str| {
            if n < 2 || n % 2 != 0 {
                Err(Error::Config(format!("{what} must be even and at least 2, got {n}")))
            } else {
                Ok(())
            }
        };
        if let Some(l) = self.lattice.ell {
            even(l, "ell")?;
        }
        if let Some(l) = self.lattice.big_l {
            even(l, "L")?;
        }
        if let Some(list) = &self.lattice.ell_list {
            if list.is_empty() {
                return Err(Error::Config("ell_list is empty".into()));
            }
            for &l in list {
                even(l, "ell_list entry")?;
            }
        }
        if self.model.lambda < 0.0 {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.model.lambda)));
        }
        self.model.interaction().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(b) = self.run.bracket {
            if !(b[0] < b[1]) {
                return Err(Error::Config(format!("bracket must be increasing, got {b:?}")));
            }
        }
        if let Some([lo, hi]) = self.run.h_range {
            if lo > hi || hi > 0 {
                return Err(Error::Config(format!("h_range must satisfy lo <= hi <= 0, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn require_ell(&self) -> Result<usize> {
        self.lattice.ell.ok_or_else(|| Error::Config("missing lattice.ell".into()))
    }

    pub fn require_big_l(&self) -> Result<usize> {
        self.lattice.big_l.ok_or_else(|| Error::Config("missing lattice.L".into()))
    }

    pub fn require_ell_list(&self) -> Result<Vec<usize>> {
        self.lattice.ell_list.clone().ok_or_else(|| Error::Config("missing lattice.ell_list".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[lattice]
ell = 4
L = 6

[model]
J = 1.0
lambda = 0.1
v_shells = [{ r2 = 2, v = 1.0 }]

[run]
betas = [0.2, 0.44]

[output]
format = "csv"
path = "out.csv"
"#;

    #[test]
    fn parses_sample() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.lattice.big_l, Some(6));
        assert_eq!(cfg.output.format, OutputFormat::Csv);
        assert_eq!(cfg.run.betas.as_deref(), Some(&[0.2, 0.44][..]));
        assert!(!cfg.model.interaction().unwrap().is_nearest_neighbour());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(ExperimentConfig::parse("[lattice]\nell = 4\ncolour = 3\n").is_err());
        assert!(ExperimentConfig::parse("[extras]\nx = 1\n").is_err());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::parse("[lattice]\nell = 5\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nlambda = -0.1\n").is_err());
        assert!(ExperimentConfig::parse("[run]\nh_range = [0, -3]\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nv_shells = [{ r2 = 3, v = 1.0 }]\nlambda = 0.1\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn empty_config_is_nearest_neighbour() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert!(cfg.model.interaction().unwrap().is_nearest_neighbour());
    }
}
