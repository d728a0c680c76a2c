//! TOML experiment configuration.
//!
//! ```toml
//! [problem]
//! family = "cos_affine"   # cos_zero | cos_affine | exp_affine | cos_sine
//! d = 1
//! T = 1.0
//! a = 0.3
//! b = 0.1
//!
//! [method]
//! n = 2
//! M = 2
//! seed = 7
//! replications = 100
//!
//! [study]
//! n_list = [2, 3, 4]
//! d_list = [1, 5, 10]
//!
//! [output]
//! directory = "out"
//! formats = ["csv", "json"]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{builtin_problem, BsdeProblem, Family, ProblemParams};
use crate::randomness::MasterSeed;

pub const DEFAULT_BUDGET: u64 = 1_000_000_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub family: Family,
    #[serde(default = "one")]
    pub d: usize,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "V0", default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
}

fn one() -> usize {
    1
}

impl ProblemSection {
    pub fn params(&self) -> ProblemParams {
        ProblemParams {
            horizon: self.horizon,
            a: self.a,
            b: self.b,
            c: self.c.clone(),
            rho: self.rho,
            beta: self.beta,
            v0: self.v0,
        }
    }

    pub fn build(&self) -> Result<BsdeProblem> {
        self.build_with_dim(self.d)
    }

    pub fn build_with_dim(&self, d: usize) -> Result<BsdeProblem> {
        builtin_problem(self.family, d, &self.params())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    #[serde(default = "two")]
    pub n: u32,
    #[serde(rename = "M", default = "two")]
    pub m: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "hundred")]
    pub replications: usize,
    /// Operation budget; the command line flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

fn two() -> u32 {
    2
}

fn hundred() -> usize {
    100
}

impl Default for MethodSection {
    fn default() -> Self {
        MethodSection {
            n: 2,
            m: 2,
            seed: 0,
            replications: 100,
            budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "default_n_list")]
    pub n_list: Vec<u32>,
    #[serde(default = "default_d_list")]
    pub d_list: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default = "four")]
    pub n_max: u32,
    #[serde(rename = "M_max", default = "four")]
    pub m_max: u32,
}

fn default_n_list() -> Vec<u32> {
    vec![1, 2, 3]
}

fn default_d_list() -> Vec<usize> {
    vec![1, 5, 10]
}

fn four() -> u32 {
    4
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            n_list: default_n_list(),
            d_list: default_d_list(),
            epsilon: None,
            n_max: 4,
            m_max: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_dir(),
            formats: default_formats(),
        }
    }
}

impl OutputSection {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub method: MethodSection,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn seed(&self) -> MasterSeed {
        MasterSeed(self.method.seed)
    }

    pub fn check(&self) -> Result<()> {
        if self.method.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        if self.method.m == 0 {
            return Err(invalid("M", "must be at least 1"));
        }
        if self.study.n_list.contains(&0) {
            return Err(invalid("n_list", "levels must be at least 1"));
        }
        if self.study.d_list.contains(&0) {
            return Err(invalid("d_list", "dimensions must be at least 1"));
        }
        if self.output.formats.is_empty() {
            return Err(invalid("formats", "need at least one output format"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_doc_example() {
        let text = r#"
[problem]
family = "cos_affine"
d = 1
T = 1.0
a = 0.3
b = 0.1

[method]
n = 2
M = 2
seed = 7
replications = 100

[study]
n_list = [2, 3, 4]
d_list = [1, 5, 10]

[output]
directory = "out"
formats = ["csv", "json"]
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.problem.family, Family::CosAffine);
        assert_eq!(cfg.method.m, 2);
        assert_eq!(cfg.study.n_list, vec![2, 3, 4]);
        assert!(cfg.output.wants(Format::Json));
        let p = cfg.problem.build().unwrap();
        assert_eq!(p.driver.affine(), Some((0.3, 0.1)));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(
            ExperimentConfig::from_toml("[problem]\nfamily = \"nope\"\n"),
            Err(Error::Config(_))
        ));
        assert!(ExperimentConfig::from_toml("[problem]\nfamily = \"cos_zero\"\nextra = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[problem]\nfamily = \"cos_zero\"\n[method]\nreplications = 0\n").is_err());
        let cfg = ExperimentConfig::from_toml("[problem]\nfamily = \"cos_zero\"\n").unwrap();
        assert_eq!(cfg.method.replications, 100);
    }
}
