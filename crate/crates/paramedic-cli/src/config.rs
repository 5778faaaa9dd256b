//! Harness configuration: one TOML file, overridable per key from the
//! command line. Precedence is flags > file > defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use paramedic::advisor::{Advisor, AdvisorConfig, BackendKind, MockMode};
use paramedic::anomaly::DetectorConfig;
use paramedic::paramdb::ParamRegistry;
use paramedic::repair::OrchestratorConfig;
use paramedic::sim::SimConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Registry JSON path; the built-in registry when absent.
    pub registry: Option<PathBuf>,
    /// Every run writes under `<output_dir>/<run-id>/`.
    pub output_dir: PathBuf,
    /// Vehicle link for `run`: `sim`, `subprocess`, or `tcp://host:port`.
    pub link: String,
    /// Virtual-time speedup when serving the wire protocol (1 = real time).
    pub wire_time_scale: f64,
    /// Default worker count for `bench`.
    pub parallelism: usize,
    pub detector: DetectorConfig,
    pub orchestrator: OrchestratorConfig,
    pub advisor: AdvisorConfig,
    pub sim: SimConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            registry: None,
            output_dir: PathBuf::from("runs"),
            link: "sim".to_string(),
            wire_time_scale: 20.0,
            parallelism: 8,
            detector: DetectorConfig::default(),
            orchestrator: OrchestratorConfig::default(),
            advisor: AdvisorConfig::default(),
            sim: SimConfig::default(),
        }
    }
}

impl HarnessConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("cannot parse config file {}", path.display()))
            }
        }
    }

    pub fn load_registry(&self) -> Result<ParamRegistry> {
        match &self.registry {
            None => Ok(ParamRegistry::builtin().clone()),
            Some(path) => ParamRegistry::load(path)
                .with_context(|| format!("cannot load registry {}", path.display())),
        }
    }

    pub fn build_advisor(&self, registry: Arc<ParamRegistry>) -> Result<Advisor> {
        let faults = Arc::new(self.sim.fault_table.clone());
        self.advisor
            .build(registry, faults)
            .context("cannot build the advisor backend")
    }

    /// Map the `--advisor` selector onto backend and mock mode.
    pub fn select_advisor(&mut self, selector: AdvisorSelector) {
        match selector {
            AdvisorSelector::MockOptimal => {
                self.advisor.backend = BackendKind::Mock;
                self.advisor.mock_mode = MockMode::Optimal;
            }
            AdvisorSelector::MockPartial => {
                self.advisor.backend = BackendKind::Mock;
                self.advisor.mock_mode = MockMode::Partial;
            }
            AdvisorSelector::MockNoop => {
                self.advisor.backend = BackendKind::Mock;
                self.advisor.mock_mode = MockMode::Noop;
            }
            AdvisorSelector::Remote => {
                self.advisor.backend = BackendKind::Remote;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AdvisorSelector {
    MockOptimal,
    MockPartial,
    MockNoop,
    Remote,
}

/// Ensure the fault table matches the registry early, so misconfigurations
/// fail with a diagnostic instead of deep in a mission.
pub fn check_config(config: &HarnessConfig, registry: &ParamRegistry) -> Result<()> {
    config
        .detector
        .check()
        .map_err(anyhow::Error::msg)
        .context("invalid [detector] section")?;
    config
        .orchestrator
        .check()
        .map_err(anyhow::Error::msg)
        .context("invalid [orchestrator] section")?;
    config
        .sim
        .check(registry)
        .map_err(anyhow::Error::msg)
        .context("invalid [sim] section")?;
    Ok(())
}
