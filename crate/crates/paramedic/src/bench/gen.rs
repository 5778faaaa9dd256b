//! Deterministic generator for the shipped 200-case misconfiguration suite.
//!
//! Composition (severity = quarter-range multiples away from the optimum,
//! always toward the far range end, quantized to the parameter's step grid):
//!
//! * 24 benign singles — every fault parameter at severities 0.4/0.6/0.8,
//!   below every onset: missions pass untouched;
//! * 72 active singles — the six non-crash fault parameters at twelve
//!   severities from 1.1 to 2.5;
//! * 4 sub-onset crash singles — crash-class parameters at 1.2/1.6 (the
//!   crash tier starts at 2.0, so these are benign in effect);
//! * 4 terminal crash singles — crash-class parameters at 2.2/2.5: the
//!   vehicle is lost before any repair can be serviced;
//! * 96 two-fault combinations over the non-crash class pairs.
//!
//! The checked-in `data/suite_standard.jsonl` is exactly this generator's
//! output; a test keeps them in lockstep.

use std::collections::BTreeMap;

use crate::anomaly::AnomalyType;
use crate::paramdb::{clamp_quantize, ParamRegistry, ParamSet};
use crate::sim::fault::FaultTable;
use crate::sim::square_demo_plan;

use super::{BenchCase, Suite};

const BENIGN_SEVERITIES: [f64; 3] = [0.4, 0.6, 0.8];
const ACTIVE_SEVERITIES: [f64; 12] =
    [1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 2.0, 2.2, 2.35, 2.5];
const CRASH_QUIET_SEVERITIES: [f64; 2] = [1.2, 1.6];
const CRASH_TERMINAL_SEVERITIES: [f64; 2] = [2.2, 2.5];
const DOUBLE_SEVERITY_PAIRS: [(f64, f64); 8] = [
    (1.2, 1.2),
    (1.2, 1.6),
    (1.6, 1.2),
    (1.6, 1.6),
    (1.2, 2.5),
    (2.5, 1.2),
    (2.5, 2.5),
    (1.6, 2.2),
];

fn class_slug(class: AnomalyType) -> &'static str {
    match class {
        AnomalyType::Deviation => "deviation",
        AnomalyType::ThrustLoss => "thrust_loss",
        AnomalyType::Timeout => "timeout",
        AnomalyType::Crash => "crash",
    }
}

/// The quantized parameter value sitting `severity` quarter-ranges from the
/// optimum, toward the far end of the recommended range.
pub fn value_at_severity(registry: &ParamRegistry, faults: &FaultTable, name: &str, severity: f64) -> f64 {
    let spec = registry.get(name).expect("fault parameter is registered");
    let entry = faults.get(name).expect("parameter is in the fault table");
    let head_up = spec.max - entry.optimal;
    let head_down = entry.optimal - spec.min;
    let direction = if head_up >= head_down { 1.0 } else { -1.0 };
    let raw = entry.optimal + direction * severity * 0.25 * spec.range();
    clamp_quantize(raw, spec.min, spec.max, spec.step)
}

/// Generate the standard 200-case suite over the square demo plan.
pub fn generate_standard_suite(registry: &ParamRegistry, faults: &FaultTable) -> Suite {
    let mut plans = BTreeMap::new();
    plans.insert("square".to_string(), square_demo_plan());

    let value = |name: &str, severity: f64| value_at_severity(registry, faults, name, severity);
    let mut cases: Vec<BenchCase> = Vec::new();
    let mut push = |case_id: String, overrides: ParamSet| {
        cases.push(BenchCase { case_id, overrides, plan_id: "square".to_string() });
    };

    let by_class = |class: AnomalyType| faults.params_for_class(class);
    let non_crash_classes =
        [AnomalyType::Deviation, AnomalyType::ThrustLoss, AnomalyType::Timeout];

    // Benign singles: every fault parameter, sub-onset.
    for (name, entry) in faults.iter() {
        for sev in BENIGN_SEVERITIES {
            push(
                format!("benign-{}-{}-s{}", class_slug(entry.class), name, sev),
                [(name.to_string(), value(name, sev))].into_iter().collect(),
            );
        }
    }

    // Active singles on the non-crash classes.
    for class in non_crash_classes {
        for name in by_class(class) {
            for sev in ACTIVE_SEVERITIES {
                push(
                    format!("single-{}-{}-s{}", class_slug(class), name, sev),
                    [(name.to_string(), value(name, sev))].into_iter().collect(),
                );
            }
        }
    }

    // Crash-class parameters below their 2.0 onset: benign in effect.
    for name in by_class(AnomalyType::Crash) {
        for sev in CRASH_QUIET_SEVERITIES {
            push(
                format!("benign-crash-{}-s{}", name, sev),
                [(name.to_string(), value(name, sev))].into_iter().collect(),
            );
        }
    }

    // Terminal crash cases.
    for name in by_class(AnomalyType::Crash) {
        for sev in CRASH_TERMINAL_SEVERITIES {
            push(
                format!("crashterm-{}-s{}", name, sev),
                [(name.to_string(), value(name, sev))].into_iter().collect(),
            );
        }
    }

    // Two-fault combinations across distinct non-crash classes.
    for (i, &class_a) in non_crash_classes.iter().enumerate() {
        for &class_b in &non_crash_classes[i + 1..] {
            for name_a in by_class(class_a) {
                for name_b in by_class(class_b) {
                    for (sev_a, sev_b) in DOUBLE_SEVERITY_PAIRS {
                        push(
                            format!(
                                "double-{}+{}-{}+{}-s{}x{}",
                                class_slug(class_a),
                                class_slug(class_b),
                                name_a,
                                name_b,
                                sev_a,
                                sev_b
                            ),
                            [
                                (name_a.to_string(), value(name_a, sev_a)),
                                (name_b.to_string(), value(name_b, sev_b)),
                            ]
                            .into_iter()
                            .collect(),
                        );
                    }
                }
            }
        }
    }

    Suite { plans, cases }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fault::severity;

    fn suite() -> Suite {
        generate_standard_suite(ParamRegistry::builtin(), FaultTable::builtin())
    }

    #[test]
    fn standard_suite_has_exactly_200_unique_cases() {
        let suite = suite();
        assert_eq!(suite.cases.len(), 200);
        let ids: std::collections::BTreeSet<_> =
            suite.cases.iter().map(|c| c.case_id.as_str()).collect();
        assert_eq!(ids.len(), 200);
        let benign = suite.cases.iter().filter(|c| c.case_id.starts_with("benign-")).count();
        let single = suite.cases.iter().filter(|c| c.case_id.starts_with("single-")).count();
        let term = suite.cases.iter().filter(|c| c.case_id.starts_with("crashterm-")).count();
        let double = suite.cases.iter().filter(|c| c.case_id.starts_with("double-")).count();
        assert_eq!((benign, single, term, double), (28, 72, 4, 96));
    }

    #[test]
    fn generated_values_keep_their_intended_severity_band() {
        let registry = ParamRegistry::builtin();
        let faults = FaultTable::builtin();
        for case in suite().cases {
            for (name, value) in case.overrides.iter() {
                let spec = registry.get(name).unwrap();
                let entry = faults.get(name).unwrap();
                let sev = severity(value, entry.optimal, spec.min, spec.max);
                if case.case_id.starts_with("benign-") {
                    assert!(sev < entry.onset, "{}: sev {sev}", case.case_id);
                } else {
                    assert!(sev >= 1.05, "{}: sev {sev}", case.case_id);
                }
                if case.case_id.starts_with("crashterm-") {
                    assert!(sev >= 2.1, "{}: sev {sev}", case.case_id);
                }
            }
        }
    }

    #[test]
    fn generated_suite_validates_and_matches_the_checked_in_file() {
        let suite = suite();
        let jsonl = crate::bench::suite_to_jsonl(&suite);
        let parsed = crate::bench::parse_suite(&jsonl, ParamRegistry::builtin()).unwrap();
        assert_eq!(parsed, suite);
        let shipped = include_str!("../../data/suite_standard.jsonl");
        assert_eq!(jsonl, shipped, "regenerate data/suite_standard.jsonl");
    }
}
