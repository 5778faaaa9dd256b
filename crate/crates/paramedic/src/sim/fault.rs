//! The simulator's fault model: which parameters destabilize which part of
//! the dynamics, how far from their known-good values they have to drift
//! before the effect switches on, and how severity is measured.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::anomaly::AnomalyType;
use crate::geom::Real;
use crate::paramdb::{ParamRegistry, ParamSet};
use crate::Scalar;

/// Dimensionless distance of `value` from `optimal`, normalized by a quarter
/// of the recommended range: 0 at the optimum, 1.0 a quarter-range away,
/// >= 2 at a range extreme when the optimum is centered.
pub fn severity<T: Real>(value: T, optimal: T, min: T, max: T) -> T {
    (value - optimal).abs() / (T::c(0.25) * (max - min))
}

/// One fault-linked parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEntry {
    /// The simulator's known-good value for this parameter.
    pub optimal: Scalar,
    /// Which anomaly class this parameter destabilizes.
    pub class: AnomalyType,
    /// Severity at which the fault effect switches on (1.0 for most classes;
    /// 2.0 for the crash tier).
    pub onset: Scalar,
}

/// Mapping from parameter name to its fault behavior. Parameters absent from
/// the table never destabilize the simulator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultTable {
    entries: BTreeMap<String, FaultEntry>,
}

impl FaultTable {
    pub fn new(entries: BTreeMap<String, FaultEntry>) -> Self {
        Self { entries }
    }

    /// The table shipped with the simulator: two parameters per anomaly
    /// class, with optima equal to the registry defaults.
    pub fn builtin() -> &'static FaultTable {
        static BUILTIN: OnceLock<FaultTable> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            let mut entries = BTreeMap::new();
            let mut add = |name: &str, optimal: Scalar, class: AnomalyType, onset: Scalar| {
                entries.insert(name.to_string(), FaultEntry { optimal, class, onset });
            };
            add("ATC_RAT_RLL_P", 0.135, AnomalyType::Deviation, 1.0);
            add("ATC_RAT_PIT_P", 0.135, AnomalyType::Deviation, 1.0);
            add("MOT_SPIN_MIN", 0.12, AnomalyType::ThrustLoss, 1.0);
            add("PSC_ACCZ_P", 0.5, AnomalyType::ThrustLoss, 1.0);
            add("WPNAV_SPEED", 450.0, AnomalyType::Timeout, 1.0);
            add("LOIT_SPEED", 420.0, AnomalyType::Timeout, 1.0);
            add("PSC_POSZ_P", 1.2, AnomalyType::Crash, 2.0);
            add("ATC_THR_MIX_MAX", 0.6, AnomalyType::Crash, 2.0);
            FaultTable::new(entries)
        })
    }

    pub fn get(&self, name: &str) -> Option<&FaultEntry> {
        self.entries.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FaultEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parameter names linked to `class`, in lexicographic order.
    pub fn params_for_class(&self, class: AnomalyType) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, e)| e.class == class)
            .map(|(name, _)| name.as_str())
            .collect()
    }

    /// Every fault parameter must exist in the registry and its optimum must
    /// sit inside the recommended range.
    pub fn check_against(&self, registry: &ParamRegistry) -> Result<(), String> {
        for (name, entry) in &self.entries {
            let Some(spec) = registry.get(name) else {
                return Err(format!("fault table parameter {name:?} is not in the registry"));
            };
            if entry.optimal < spec.min || entry.optimal > spec.max {
                return Err(format!(
                    "fault table optimum for {name:?} ({}) is outside [{}, {}]",
                    entry.optimal, spec.min, spec.max
                ));
            }
            if entry.onset <= 0.0 {
                return Err(format!("fault table onset for {name:?} must be positive"));
            }
        }
        Ok(())
    }

    /// Severity of one entry under the given parameter values (registry
    /// default when the set does not name the parameter).
    pub fn entry_severity(
        &self,
        name: &str,
        entry: &FaultEntry,
        params: &ParamSet,
        registry: &ParamRegistry,
    ) -> Scalar {
        let spec = registry
            .get(name)
            .unwrap_or_else(|| panic!("fault param {name} missing from registry"));
        let value = params.get(name).unwrap_or(spec.default);
        severity(value, entry.optimal, spec.min, spec.max)
    }

    /// Class severity is the maximum severity over the class's members.
    pub fn class_severity(
        &self,
        class: AnomalyType,
        params: &ParamSet,
        registry: &ParamRegistry,
    ) -> Scalar {
        self.entries
            .iter()
            .filter(|(_, e)| e.class == class)
            .map(|(name, e)| self.entry_severity(name, e, params, registry))
            .fold(0.0, Scalar::max)
    }

    /// True when the class effect is switched on (severity at or past onset).
    pub fn class_active(
        &self,
        class: AnomalyType,
        params: &ParamSet,
        registry: &ParamRegistry,
    ) -> bool {
        let onset = self
            .entries
            .values()
            .filter(|e| e.class == class)
            .map(|e| e.onset)
            .fold(Scalar::INFINITY, Scalar::min);
        onset.is_finite() && self.class_severity(class, params, registry) >= onset
    }
}
