use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workbench::config::{ExperimentConfig, Method, REPORT_FORMAT};

/// Rounds to the 6 fractional digits used for reported metrics.
pub fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scores {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelWeights {
    pub kernels: Vec<String>,
    pub values: Vec<f64>,
    pub sqrt_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    pub objective: Vec<f64>,
    pub relative_change: Vec<f64>,
    pub beta: Vec<f64>,
    pub zero_eigenvalues: Vec<usize>,
}

/// Wall-clock measurements; the only nondeterministic part of a report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timings {
    pub kernel_secs: f64,
    pub solve_secs: f64,
    pub total_secs: f64,
    pub iteration_secs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub format: String,
    pub method: Method,
    pub samples: usize,
    pub features: usize,
    pub iterations: usize,
    pub converged: bool,
    pub component_count: usize,
    pub final_beta: f64,
    pub config: ExperimentConfig,
    /// Present only when ground-truth labels were available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Scores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Scores>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<KernelWeights>,
    pub trace: TraceSection,
    pub timings: Timings,
}

impl RunReport {
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let report: RunReport = toml::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
        if report.format != REPORT_FORMAT {
            return Err(Error::Report(format!(
                "unsupported report format `{}`, expected `{REPORT_FORMAT}`",
                report.format
            )));
        }
        Ok(report)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::workbench::io::write_atomic(path, self.to_toml_string()?.as_bytes())
    }

    /// The report with timings zeroed, for determinism comparisons.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: Timings::default(),
            ..self.clone()
        }
    }
}
