//! Deterministic rule-table oracle: the desk-scale stand-in for a live
//! language model. Answers from the simulator's fault table, so acceptance
//! never depends on a proprietary endpoint.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{AdvisorBackend, BackendError, RepairPrompt};
use crate::anomaly::AnomalyType;
use crate::paramdb::{clamp_quantize, ParamRegistry, ParamSet};
use crate::sim::fault::FaultTable;

/// How the mock answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    /// Known-good values for the parameters linked to the anomaly class.
    Optimal,
    /// Each linked parameter moves halfway toward its known-good value
    /// (quantized), so repairs converge over multiple cycles.
    Partial,
    /// Echoes the current values: a repair that changes nothing.
    Noop,
}

impl std::fmt::Display for MockMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MockMode::Optimal => "optimal",
            MockMode::Partial => "partial",
            MockMode::Noop => "noop",
        })
    }
}

/// Produce the JSON completion the mock backend would return: the fault
/// table's parameters for `anomaly`, valued per `mode`.
pub fn mock_oracle(
    anomaly: AnomalyType,
    current: &ParamSet,
    registry: &ParamRegistry,
    faults: &FaultTable,
    mode: MockMode,
) -> String {
    let mut parameters = Vec::new();
    for name in faults.params_for_class(anomaly) {
        let entry = faults.get(name).expect("listed name exists");
        let Some(spec) = registry.get(name) else {
            continue;
        };
        let current_value = current.get(name).unwrap_or(spec.default);
        let value = match mode {
            MockMode::Optimal => entry.optimal,
            MockMode::Partial => clamp_quantize(
                entry.optimal + (current_value - entry.optimal) / 2.0,
                spec.min,
                spec.max,
                spec.step,
            ),
            MockMode::Noop => current_value,
        };
        parameters.push(json!({ "name": name, "value": value }));
    }
    json!({
        "parameters": parameters,
        "reasoning": format!("{mode} rule-table response for {anomaly}"),
    })
    .to_string()
}

/// [`AdvisorBackend`] wrapper around [`mock_oracle`]. Answers from the
/// structured half of the prompt; never touches the network.
pub struct MockBackend {
    mode: MockMode,
    registry: Arc<ParamRegistry>,
    faults: Arc<FaultTable>,
}

impl MockBackend {
    pub fn new(mode: MockMode, registry: Arc<ParamRegistry>, faults: Arc<FaultTable>) -> Self {
        Self { mode, registry, faults }
    }
}

impl AdvisorBackend for MockBackend {
    fn complete(&self, prompt: &RepairPrompt) -> Result<String, BackendError> {
        Ok(mock_oracle(
            prompt.anomaly,
            &prompt.params_snapshot,
            &self.registry,
            &self.faults,
            self.mode,
        ))
    }

    fn label(&self) -> String {
        format!("mock-{}", self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (&'static ParamRegistry, &'static FaultTable) {
        (ParamRegistry::builtin(), FaultTable::builtin())
    }

    #[test]
    fn optimal_restores_degraded_thrust_params() {
        let (registry, faults) = setup();
        let mut current = registry.defaults();
        current.set("MOT_SPIN_MIN", 0.4);
        current.set("PSC_ACCZ_P", 1.3);
        let raw = mock_oracle(AnomalyType::ThrustLoss, &current, registry, faults, MockMode::Optimal);
        let advice = super::super::parse_response(&raw, registry, false).unwrap();
        assert_eq!(advice.updates.get("MOT_SPIN_MIN"), Some(0.12));
        assert_eq!(advice.updates.get("PSC_ACCZ_P"), Some(0.5));
    }

    #[test]
    fn noop_echoes_current_values() {
        let (registry, faults) = setup();
        let mut current = registry.defaults();
        current.set("ATC_RAT_RLL_P", 0.3);
        let raw = mock_oracle(AnomalyType::Deviation, &current, registry, faults, MockMode::Noop);
        let advice = super::super::parse_response(&raw, registry, false).unwrap();
        assert_eq!(advice.updates.get("ATC_RAT_RLL_P"), Some(0.3));
    }

    #[test]
    fn optimal_is_a_fixed_point_at_the_optimum() {
        let (registry, faults) = setup();
        let current = registry.defaults();
        let raw = mock_oracle(AnomalyType::Deviation, &current, registry, faults, MockMode::Optimal);
        let advice = super::super::parse_response(&raw, registry, false).unwrap();
        for (name, value) in advice.updates.iter() {
            assert_eq!(Some(value), current.get(name), "{name}");
        }
    }

    #[test]
    fn partial_halves_the_distance_to_optimal() {
        let (registry, faults) = setup();
        let mut current = registry.defaults();
        current.set("ATC_RAT_RLL_P", 0.335); // 0.2 above the 0.135 optimum
        let raw = mock_oracle(AnomalyType::Deviation, &current, registry, faults, MockMode::Partial);
        let advice = super::super::parse_response(&raw, registry, false).unwrap();
        let halved = advice.updates.get("ATC_RAT_RLL_P").unwrap();
        assert!((halved - 0.235).abs() < 1e-12, "{halved}");
    }

    #[test]
    fn mock_is_deterministic() {
        let (registry, faults) = setup();
        let current = registry.defaults();
        let a = mock_oracle(AnomalyType::Timeout, &current, registry, faults, MockMode::Partial);
        let b = mock_oracle(AnomalyType::Timeout, &current, registry, faults, MockMode::Partial);
        assert_eq!(a, b);
    }
}
