//! Parameter metadata registry: recommended ranges, step sizes and defaults
//! for every configuration parameter the harness is allowed to touch, plus
//! validation and the prompt fragment rendering.
//!
//! The registry file is a JSON array of spec objects; see `data/registry.json`
//! for the shipped set.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::geom::Real;
use crate::Scalar;

/// Metadata for one configuration parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub min: Scalar,
    pub max: Scalar,
    pub step: Scalar,
    pub default: Scalar,
    #[serde(default)]
    pub description: String,
}

impl ParamSpec {
    pub fn range(&self) -> Scalar {
        self.max - self.min
    }
}

/// Registry load failure, naming the offending entry.
#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("registry file is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("duplicate parameter name {name:?}")]
    Duplicate { name: String },
    #[error("parameter {name:?} has min {min} > max {max}")]
    InvertedRange { name: String, min: Scalar, max: Scalar },
    #[error("parameter {name:?} has non-positive step {step}")]
    BadStep { name: String, step: Scalar },
    #[error("parameter {name:?} default {default} outside [{min}, {max}]")]
    DefaultOutOfRange {
        name: String,
        default: Scalar,
        min: Scalar,
        max: Scalar,
    },
    #[error("parameter {name:?} has a non-finite bound, step or default")]
    NonFinite { name: String },
    #[error("cannot read registry file: {0}")]
    Io(#[from] std::io::Error),
}

/// One reason a [`ParamSet`] fails validation. Violations are data, not
/// faults: [`ParamRegistry::violations`] collects all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    Unknown { name: String },
    OutOfRange { name: String, value: Scalar, min: Scalar, max: Scalar },
    NonFinite { name: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Unknown { name } => write!(f, "unknown parameter {name:?}"),
            Violation::OutOfRange { name, value, min, max } => {
                write!(f, "{name}={value} outside recommended range [{min}, {max}]")
            }
            Violation::NonFinite { name } => write!(f, "{name} has a non-finite value"),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub struct ValidationError {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid parameter set: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// A named set of parameter values. Iteration order is always lexicographic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet(BTreeMap<String, Scalar>);

impl ParamSet {
    pub fn new() -> Self {
        Self(BTreeMap::new())
    }

    pub fn set(&mut self, name: impl Into<String>, value: Scalar) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<Scalar> {
        self.0.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Scalar)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Map union with `updates` taking precedence; `self` is untouched.
    pub fn merged(&self, updates: &ParamSet) -> ParamSet {
        let mut out = self.clone();
        for (name, value) in updates.iter() {
            out.set(name, value);
        }
        out
    }
}

impl FromIterator<(String, Scalar)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (String, Scalar)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<'a> FromIterator<(&'a str, Scalar)> for ParamSet {
    fn from_iter<I: IntoIterator<Item = (&'a str, Scalar)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

/// Clamp `value` into `[min, max]`, then round to the nearest multiple of
/// `step` anchored at `min` (ties away from zero), then clamp again so the
/// quantized value can never leave the range. Idempotent.
pub fn clamp_quantize<T: Real>(value: T, min: T, max: T, step: T) -> T {
    let clamped = value.min(max).max(min);
    let k = ((clamped - min) / step).round();
    let quantized = min + k * step;
    quantized.min(max).max(min)
}

/// Immutable registry of [`ParamSpec`]s, keyed and ordered by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamRegistry {
    specs: BTreeMap<String, ParamSpec>,
}

impl ParamRegistry {
    /// Parse a registry from JSON text. An empty (or whitespace-only) file is
    /// a valid empty registry.
    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let entries: Vec<ParamSpec> = serde_json::from_str(text)?;
        let mut specs = BTreeMap::new();
        for spec in entries {
            if !(spec.min.is_finite()
                && spec.max.is_finite()
                && spec.step.is_finite()
                && spec.default.is_finite())
            {
                return Err(SchemaError::NonFinite { name: spec.name });
            }
            if spec.min > spec.max {
                return Err(SchemaError::InvertedRange {
                    name: spec.name,
                    min: spec.min,
                    max: spec.max,
                });
            }
            if spec.step <= 0.0 {
                return Err(SchemaError::BadStep { name: spec.name, step: spec.step });
            }
            if spec.default < spec.min || spec.default > spec.max {
                return Err(SchemaError::DefaultOutOfRange {
                    name: spec.name,
                    default: spec.default,
                    min: spec.min,
                    max: spec.max,
                });
            }
            if specs.insert(spec.name.clone(), spec.clone()).is_some() {
                return Err(SchemaError::Duplicate { name: spec.name });
            }
        }
        Ok(Self { specs })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The registry shipped with the crate (`data/registry.json`).
    pub fn builtin() -> &'static ParamRegistry {
        static BUILTIN: OnceLock<ParamRegistry> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            ParamRegistry::from_json(include_str!("../data/registry.json"))
                .expect("shipped registry is well-formed")
        })
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.specs.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Specs in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = &ParamSpec> {
        self.specs.values()
    }

    /// Every parameter at its registry default.
    pub fn defaults(&self) -> ParamSet {
        self.specs
            .values()
            .map(|s| (s.name.clone(), s.default))
            .collect()
    }

    /// All violations in `params`: unknown names, non-finite and out-of-range
    /// values. Empty means the set is valid.
    pub fn violations(&self, params: &ParamSet) -> Vec<Violation> {
        let mut out = Vec::new();
        for (name, value) in params.iter() {
            let Some(spec) = self.specs.get(name) else {
                out.push(Violation::Unknown { name: name.to_string() });
                continue;
            };
            if !value.is_finite() {
                out.push(Violation::NonFinite { name: name.to_string() });
            } else if value < spec.min || value > spec.max {
                out.push(Violation::OutOfRange {
                    name: name.to_string(),
                    value,
                    min: spec.min,
                    max: spec.max,
                });
            }
        }
        out
    }

    pub fn validate(&self, params: &ParamSet) -> Result<(), ValidationError> {
        let violations = self.violations(params);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { violations })
        }
    }

    /// Clamp every value into its recommended range and snap it to the step
    /// grid anchored at the range minimum. Unknown names are an error.
    pub fn clamp_and_quantize(&self, params: &ParamSet) -> Result<ParamSet, ValidationError> {
        let unknown: Vec<Violation> = params
            .iter()
            .filter(|(name, _)| !self.contains(name))
            .map(|(name, _)| Violation::Unknown { name: name.to_string() })
            .collect();
        if !unknown.is_empty() {
            return Err(ValidationError { violations: unknown });
        }
        Ok(params
            .iter()
            .map(|(name, value)| {
                let spec = &self.specs[name];
                (
                    name.to_string(),
                    clamp_quantize(value, spec.min, spec.max, spec.step),
                )
            })
            .collect())
    }

    /// The parameter block substituted into repair prompts: one line per
    /// registry parameter in lexicographic order, `\n`-terminated. Parameters
    /// missing from `current` are shown at their defaults.
    pub fn render_param_info(&self, current: &ParamSet) -> String {
        let mut out = String::new();
        for spec in self.specs.values() {
            let value = current.get(&spec.name).unwrap_or(spec.default);
            out.push_str(&format!(
                "{}: range=[{}, {}], step={}, current={}\n",
                spec.name, spec.min, spec.max, spec.step, value
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(name: &str, min: f64, max: f64, step: f64, default: f64) -> String {
        format!(
            r#"{{"name":"{name}","min":{min},"max":{max},"step":{step},"default":{default},"description":"x"}}"#
        )
    }

    #[test]
    fn shipped_registry_loads_with_twenty_entries() {
        let reg = ParamRegistry::builtin();
        assert_eq!(reg.len(), 20);
        assert!(reg.contains("ATC_RAT_RLL_P"));
    }

    #[test]
    fn inverted_range_is_a_schema_error() {
        let json = format!("[{}]", spec("X", 4.5, 0.5, 0.1, 1.0));
        match ParamRegistry::from_json(&json) {
            Err(SchemaError::InvertedRange { name, .. }) => assert_eq!(name, "X"),
            other => panic!("expected InvertedRange, got {other:?}"),
        }
    }

    #[test]
    fn bad_step_and_duplicate_are_schema_errors() {
        let json = format!("[{}]", spec("X", 0.0, 1.0, 0.0, 0.5));
        assert!(matches!(
            ParamRegistry::from_json(&json),
            Err(SchemaError::BadStep { .. })
        ));
        let json = format!("[{},{}]", spec("X", 0.0, 1.0, 0.1, 0.5), spec("X", 0.0, 1.0, 0.1, 0.5));
        assert!(matches!(
            ParamRegistry::from_json(&json),
            Err(SchemaError::Duplicate { .. })
        ));
    }

    #[test]
    fn empty_file_is_an_empty_registry() {
        let reg = ParamRegistry::from_json("").unwrap();
        assert!(reg.is_empty());
        let reg = ParamRegistry::from_json("  \n").unwrap();
        assert!(reg.is_empty());
        assert!(reg.validate(&ParamSet::new()).is_ok());
    }

    #[test]
    fn validate_flags_unknown_and_out_of_range() {
        let reg = ParamRegistry::builtin();
        let ok: ParamSet = [("ATC_RAT_RLL_P", 0.135)].into_iter().collect();
        assert!(reg.validate(&ok).is_ok());

        let spec = reg.get("ATC_RAT_RLL_P").unwrap();
        let over: ParamSet = [("ATC_RAT_RLL_P", spec.max + spec.step)].into_iter().collect();
        let violations = reg.violations(&over);
        assert!(matches!(violations.as_slice(), [Violation::OutOfRange { .. }]));

        let unknown: ParamSet = [("FOO_BAR", 1.0)].into_iter().collect();
        let violations = reg.violations(&unknown);
        assert!(matches!(violations.as_slice(), [Violation::Unknown { .. }]));
    }

    #[test]
    fn quantize_rounds_to_nearest_step_anchored_at_min() {
        // Nearest-multiple oracle: 0.1337 / 0.005 = 26.74 -> 27 steps -> 0.135.
        assert_eq!(clamp_quantize(0.1337, 0.0, 1.0, 0.005), 0.135);
        // Fixed point at max.
        assert_eq!(clamp_quantize(1.0, 0.0, 1.0, 0.005), 1.0);
        // Clamp from far above.
        assert_eq!(clamp_quantize(99.0, 0.0, 1.0, 0.005), 1.0);
    }

    #[test]
    fn quantize_ties_round_half_away_from_zero() {
        // 0.25 / 0.5 = 0.5 exactly -> rounds to 1 step -> 0.5.
        assert_eq!(clamp_quantize(0.25, 0.0, 1.0, 0.5), 0.5);
    }

    #[test]
    fn clamp_and_quantize_rejects_unknown_names() {
        let reg = ParamRegistry::builtin();
        let set: ParamSet = [("NOPE", 1.0)].into_iter().collect();
        assert!(reg.clamp_and_quantize(&set).is_err());
    }

    #[test]
    fn render_single_param_line_format() {
        let json = format!("[{}]", spec("WPNAV_SPEED", 50.0, 1650.0, 10.0, 450.0));
        let reg = ParamRegistry::from_json(&json).unwrap();
        let rendered = reg.render_param_info(&reg.defaults());
        assert_eq!(rendered, "WPNAV_SPEED: range=[50, 1650], step=10, current=450\n");
    }

    #[test]
    fn render_orders_lexicographically_regardless_of_insertion() {
        let json = format!(
            "[{},{}]",
            spec("ZULU", 0.0, 1.0, 0.1, 0.5),
            spec("ALPHA", 0.0, 1.0, 0.1, 0.5)
        );
        let reg = ParamRegistry::from_json(&json).unwrap();
        let rendered = reg.render_param_info(&ParamSet::new());
        let first = rendered.lines().next().unwrap();
        assert!(first.starts_with("ALPHA:"));
    }

    #[test]
    fn render_matches_golden_fragment() {
        let reg = ParamRegistry::builtin();
        let rendered = reg.render_param_info(&reg.defaults());
        let golden = include_str!("../data/golden/param_info_default.txt");
        assert_eq!(rendered, golden);
    }

    #[test]
    fn render_is_pure() {
        let reg = ParamRegistry::builtin();
        let current = reg.defaults();
        assert_eq!(reg.render_param_info(&current), reg.render_param_info(&current));
    }

    #[test]
    fn merged_prefers_updates() {
        let a: ParamSet = [("a", 1.0), ("b", 2.0)].into_iter().collect();
        let b: ParamSet = [("b", 3.0)].into_iter().collect();
        let m = a.merged(&b);
        assert_eq!(m.get("a"), Some(1.0));
        assert_eq!(m.get("b"), Some(3.0));
        assert_eq!(a.get("b"), Some(2.0));
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent(value in -1e4f64..1e4, min in -100.0f64..100.0, width in 1e-3f64..200.0, step in 1e-4f64..10.0) {
            let max = min + width;
            let once = clamp_quantize(value, min, max, step);
            let twice = clamp_quantize(once, min, max, step);
            prop_assert_eq!(once.to_bits(), twice.to_bits());
        }

        #[test]
        fn quantized_values_always_validate(value in -10.0f64..10.0) {
            let reg = ParamRegistry::builtin();
            let raw: ParamSet = reg.iter().map(|s| (s.name.clone(), value)).collect();
            let q = reg.clamp_and_quantize(&raw).unwrap();
            prop_assert!(reg.validate(&q).is_ok());
        }
    }
}
