use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use workload_forge::diffusion::TrainConfig;
use workload_forge::gbdt::GbdtConfig;
use workload_forge::mock::MockProfile;
use workload_forge::smote::DEFAULT_K;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Smote,
    Ddpm,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Smote => "smote",
            ModelKind::Ddpm => "ddpm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    pub n: usize,
    pub seed: u64,
    pub profile: MockProfile,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self { n: 100_000, seed: 7, profile: MockProfile::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub workdir: PathBuf,
    /// Raw job trace read by `ingest` (CSV or JSON lines).
    pub trace: Option<PathBuf>,
    /// Site catalog JSON; required when the trace is raw.
    pub catalog: Option<PathBuf>,
    pub model: ModelKind,
    pub split_fraction: f64,
    pub split_seed: u64,
    pub malformed_tolerance: f64,
    pub smote_k: usize,
    pub ddpm: TrainConfig,
    pub gbdt: GbdtConfig,
    /// Rows to synthesize; `None` matches the training table.
    pub generate_n: Option<usize>,
    pub generate_seed: u64,
    pub mock: MockConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("work"),
            trace: None,
            catalog: None,
            model: ModelKind::Smote,
            split_fraction: 0.8,
            split_seed: 0,
            malformed_tolerance: 0.01,
            smote_k: DEFAULT_K,
            ddpm: TrainConfig::default(),
            gbdt: GbdtConfig::desk(),
            generate_n: None,
            generate_seed: 0,
            mock: MockConfig::default(),
        }
    }
}

impl PipelineConfig {
    /// Defaults overlaid with the JSON file at `path`, if any.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return usage(format!("split_fraction must be in (0, 1), got {}", self.split_fraction));
        }
        if !(0.0..=1.0).contains(&self.malformed_tolerance) {
            return usage(format!("malformed_tolerance must be in [0, 1], got {}", self.malformed_tolerance));
        }
        if self.smote_k == 0 {
            return usage("smote_k must be at least 1".into());
        }
        if self.generate_n == Some(0) || self.mock.n == 0 {
            return usage("row counts must be at least 1".into());
        }
        self.ddpm.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.gbdt.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.mock.profile.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
