use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::spc::SpcConfig;
use crate::workbench::moons::{DEFAULT_MOONS_NOISE, DEFAULT_MOONS_SAMPLES, DEFAULT_MOONS_SEED};

pub const REPORT_FORMAT: &str = "spc-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    TwoMoons {
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Dense matrix file, columns are samples; labels from the companion file.
    File { path: PathBuf },
}

fn default_samples() -> usize {
    DEFAULT_MOONS_SAMPLES
}

fn default_noise() -> f64 {
    DEFAULT_MOONS_NOISE
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::TwoMoons {
            samples: DEFAULT_MOONS_SAMPLES,
            noise: DEFAULT_MOONS_NOISE,
            seed: DEFAULT_MOONS_SEED,
        }
    }
}

/// One kernel function or the twelve-kernel standard bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum KernelChoice {
    Single(KernelSpec),
    Bank,
}

impl fmt::Display for KernelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelChoice::Single(s) => write!(f, "{s}"),
            KernelChoice::Bank => f.write_str("bank"),
        }
    }
}

impl FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim() == "bank" {
            Ok(KernelChoice::Bank)
        } else {
            s.parse().map(KernelChoice::Single)
        }
    }
}

impl TryFrom<String> for KernelChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<KernelChoice> for String {
    fn from(k: KernelChoice) -> String {
        k.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Spc,
    Mspc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Spc => "spc",
            Method::Mspc => "mspc",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricToggles {
    pub accuracy: bool,
    pub nmi: bool,
    pub purity: bool,
    /// Also score a k-means partition of the raw data.
    pub kmeans_baseline: bool,
}

impl Default for MetricToggles {
    fn default() -> Self {
        Self {
            accuracy: true,
            nmi: true,
            purity: true,
            kmeans_baseline: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_format")]
    pub format: String,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_kernel")]
    pub kernel: KernelChoice,
    /// Min-max normalize a single kernel; bank kernels are always normalized.
    #[serde(default = "default_true")]
    pub normalize_kernel: bool,
    /// Where outputs go; nothing is written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetSource,
    #[serde(default = "default_spc")]
    pub spc: SpcConfig,
    #[serde(default)]
    pub metrics: MetricToggles,
}

fn default_format() -> String {
    REPORT_FORMAT.to_string()
}

fn default_method() -> Method {
    Method::Spc
}

fn default_kernel() -> KernelChoice {
    KernelChoice::Single(KernelSpec::Gaussian { t: 10.0 })
}

fn default_true() -> bool {
    true
}

fn default_spc() -> SpcConfig {
    SpcConfig::new(2, 2.0, 0.1, 10.0).with_adapt_beta(true)
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            format: default_format(),
            method: default_method(),
            kernel: default_kernel(),
            normalize_kernel: true,
            out: None,
            dataset: DatasetSource::default(),
            spc: default_spc(),
            metrics: MetricToggles::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_col(text, s.start))
                .unwrap_or((1, 1));
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Report(e.to_string()))
    }

    /// Structural checks that need no data.
    pub fn validate(&self) -> Result<()> {
        if self.format != REPORT_FORMAT {
            return Err(Error::InvalidConfig(format!(
                "unsupported report format `{}`, expected `{REPORT_FORMAT}`",
                self.format
            )));
        }
        if let (Method::Spc, KernelChoice::Bank) = (self.method, self.kernel) {
            return Err(Error::InvalidConfig("the kernel bank needs method `mspc`".into()));
        }
        if let KernelChoice::Single(spec) = self.kernel {
            spec.validate()?;
        }
        if let DatasetSource::File { path } = &self.dataset {
            if !path.exists() {
                return Err(Error::InvalidConfig(format!("dataset file {} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}
