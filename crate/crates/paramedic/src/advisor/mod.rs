//! The repair advisor: builds the corrective-configuration prompt, queries a
//! pluggable backend (deterministic mock oracle or a remote chat-completion
//! endpoint) with retries, and parses the JSON advice out of the completion.

pub mod mock;
pub mod remote;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::anomaly::AnomalyType;
use crate::paramdb::{ParamRegistry, ParamSet};
use crate::sim::fault::FaultTable;
use crate::Scalar;

pub use mock::{mock_oracle, MockBackend, MockMode};
pub use remote::RemoteBackend;

/// A fully rendered repair prompt plus the structured inputs it was rendered
/// from (the mock backend answers from the structured half; remote backends
/// send the text).
#[derive(Debug, Clone, PartialEq)]
pub struct RepairPrompt {
    pub text: String,
    pub anomaly: AnomalyType,
    pub params_snapshot: ParamSet,
}

/// Sanitized corrective advice: updates are known registry names with
/// finite, in-range, step-quantized values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairAdvice {
    pub updates: ParamSet,
    pub rationale: String,
}

impl RepairAdvice {
    /// Log placeholder for a repair cycle whose advice never materialized
    /// (parse failure, rejection, backend unavailable).
    pub fn empty_sentinel(reason: impl Into<String>) -> Self {
        Self { updates: ParamSet::new(), rationale: reason.into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AdvisorError {
    /// Misconfiguration detected before any network activity.
    #[error("advisor configuration error: {0}")]
    Config(String),
    /// All attempts failed at the transport level.
    #[error("advisor unavailable after {attempts} attempts: {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    /// No JSON object found in the completion.
    #[error("no JSON object found in advisor response: {0}")]
    Parse(String),
    /// JSON found, but it carries no usable parameter updates. Distinct from
    /// `Parse` so the orchestrator can account the attempt precisely.
    #[error("advisor response rejected: {0}")]
    Rejected(String),
}

/// Transport-level backend failure; always retried.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct BackendError(pub String);

/// One completion per call; implementations must be shareable across
/// concurrent missions.
pub trait AdvisorBackend: Send + Sync {
    fn complete(&self, prompt: &RepairPrompt) -> Result<String, BackendError>;
    /// Short backend label for logs and audit records.
    fn label(&self) -> String;
}

/// Which backend the harness talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Remote,
}

/// Advisor configuration. `Remote` requires `endpoint` and `api_key_env`;
/// the credential itself lives only in that environment variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvisorConfig {
    pub backend: BackendKind,
    /// Rule table the mock backend answers from.
    pub mock_mode: MockMode,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub api_key_env: Option<String>,
    /// Per-attempt timeout, seconds.
    pub timeout_s: Scalar,
    /// Retries after the first attempt, on transport failure.
    pub max_retries: u32,
    pub temperature: Scalar,
    /// Reject out-of-range advised values instead of clamping them.
    pub strict_advice: bool,
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            mock_mode: MockMode::Optimal,
            endpoint: None,
            model_name: "mock-oracle".to_string(),
            api_key_env: None,
            timeout_s: 30.0,
            max_retries: 2,
            temperature: 0.0,
            strict_advice: false,
        }
    }
}

impl AdvisorConfig {
    pub fn check(&self) -> Result<(), AdvisorError> {
        if !self.timeout_s.is_finite() || self.timeout_s <= 0.0 {
            return Err(AdvisorError::Config("timeout_s must be positive".into()));
        }
        if self.backend == BackendKind::Remote {
            if self.endpoint.is_none() {
                return Err(AdvisorError::Config("remote backend requires an endpoint".into()));
            }
            if self.api_key_env.is_none() {
                return Err(AdvisorError::Config(
                    "remote backend requires api_key_env naming the credential variable".into(),
                ));
            }
        }
        Ok(())
    }

    /// Build the advisor. For the remote backend this reads the credential
    /// from the named environment variable and fails fast if it is missing —
    /// before any network activity.
    pub fn build(
        &self,
        registry: Arc<ParamRegistry>,
        faults: Arc<FaultTable>,
    ) -> Result<Advisor, AdvisorError> {
        self.check()?;
        let backend: Box<dyn AdvisorBackend> = match self.backend {
            BackendKind::Mock => {
                Box::new(MockBackend::new(self.mock_mode, registry, faults))
            }
            BackendKind::Remote => Box::new(RemoteBackend::new(
                self.endpoint.clone().expect("checked above"),
                self.model_name.clone(),
                self.api_key_env.as_deref().expect("checked above"),
                Duration::from_secs_f64(self.timeout_s),
                self.temperature,
            )?),
        };
        Ok(Advisor {
            backend,
            max_retries: self.max_retries,
            backoff_base: Duration::from_secs(1),
            strict_advice: self.strict_advice,
        })
    }
}

/// A backend plus its retry policy.
pub struct Advisor {
    backend: Box<dyn AdvisorBackend>,
    max_retries: u32,
    backoff_base: Duration,
    strict_advice: bool,
}

impl Advisor {
    pub fn new(backend: Box<dyn AdvisorBackend>, max_retries: u32) -> Self {
        Self {
            backend,
            max_retries,
            backoff_base: Duration::from_secs(1),
            strict_advice: false,
        }
    }

    /// Exponential backoff base between attempts (1 s unless overridden).
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn with_strict_advice(mut self, strict: bool) -> Self {
        self.strict_advice = strict;
        self
    }

    pub fn strict_advice(&self) -> bool {
        self.strict_advice
    }

    pub fn backend_label(&self) -> String {
        self.backend.label()
    }

    /// Raw completion text, retrying transport failures with exponential
    /// backoff: attempt k (zero-based) sleeps `backoff_base * 2^(k-1)` first.
    pub fn query(&self, prompt: &RepairPrompt) -> Result<String, AdvisorError> {
        let attempts_allowed = self.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts_allowed {
            if attempt > 0 {
                let backoff = self.backoff_base * 2u32.pow(attempt - 1);
                std::thread::sleep(backoff);
            }
            match self.backend.complete(prompt) {
                Ok(raw) => return Ok(raw),
                Err(BackendError(message)) => {
                    log::warn!("advisor attempt {} failed: {message}", attempt + 1);
                    last_error = message;
                }
            }
        }
        Err(AdvisorError::Unavailable { attempts: attempts_allowed, last_error })
    }
}

/// Static prompt template; `{error_type}` and `{param_info_str}` are the two
/// substitution points.
const PROMPT_TEMPLATE: &str = "You are an expert in flight-control software configuration. A drone \
flying an autonomous waypoint mission has just exhibited abnormal flight behavior, and its \
configuration is suspected to be the cause.\n\
\n\
Detected anomaly type: {error_type}\n\
\n\
The current configuration parameters are listed below, one per line, each with its officially \
recommended range and step size:\n\
\n\
{param_info_str}\n\
Identify which of these parameters most likely caused the detected anomaly and propose corrected \
values that restore stable flight. Every proposed value must lie within the recommended range and \
on the step grid. Reply with a single JSON object and nothing else, in exactly this form:\n\
\n\
{\"parameters\": [{\"name\": \"PARAM_NAME\", \"value\": 0.0}], \"reasoning\": \"one short sentence\"}\n";

/// Render the repair prompt for `anomaly` given the current configuration.
/// Deterministic: identical inputs produce identical bytes.
pub fn build_prompt(
    anomaly: AnomalyType,
    current: &ParamSet,
    registry: &ParamRegistry,
) -> RepairPrompt {
    let param_info = registry.render_param_info(current);
    let text = PROMPT_TEMPLATE
        .replacen("{error_type}", &anomaly.to_string(), 1)
        .replacen("{param_info_str}", &param_info, 1);
    RepairPrompt { text, anomaly, params_snapshot: current.clone() }
}

/// Byte range (inclusive) of the first balanced `{...}` region at or after
/// `from`, skipping string contents and escapes.
fn find_balanced_object(raw: &str, from: usize) -> Option<(usize, usize)> {
    let mut depth = 0usize;
    let mut start = None;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in raw[from..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '"' if depth > 0 => in_string = true,
            '{' => {
                if depth == 0 {
                    start = Some(from + i);
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    return Some((start.unwrap(), from + i));
                }
            }
            _ => {}
        }
    }
    None
}

/// The first region of `raw` that parses as a JSON object. Balanced-looking
/// regions that are not valid JSON (brace noise in prose) are skipped.
fn first_json_object(raw: &str) -> Option<serde_json::Value> {
    let mut from = 0;
    while let Some((start, end)) = find_balanced_object(raw, from) {
        if let Ok(value) = serde_json::from_str::<serde_json::Value>(&raw[start..=end]) {
            return Some(value);
        }
        from = start + 1;
    }
    None
}

/// Parse a completion into sanitized [`RepairAdvice`].
///
/// The first JSON object found in `raw` (completions often wrap it in prose
/// or code fences) must carry a `parameters` array of `{name, value}` pairs.
/// Unknown names are dropped with a warning; surviving values are clamped
/// into range and quantized to the step grid — unless `strict` is set, in
/// which case an out-of-range value rejects the whole response.
pub fn parse_response(
    raw: &str,
    registry: &ParamRegistry,
    strict: bool,
) -> Result<RepairAdvice, AdvisorError> {
    let json_text = match serde_json::from_str::<serde_json::Value>(raw.trim()) {
        Ok(value) if value.is_object() => value,
        _ => first_json_object(raw)
            .ok_or_else(|| AdvisorError::Parse("no JSON object in response".into()))?,
    };

    let Some(parameters) = json_text.get("parameters").and_then(|p| p.as_array()) else {
        return Err(AdvisorError::Rejected("missing `parameters` array".into()));
    };
    if parameters.is_empty() {
        return Err(AdvisorError::Rejected("`parameters` array is empty".into()));
    }

    let mut updates = ParamSet::new();
    for item in parameters {
        let Some(name) = item.get("name").and_then(|n| n.as_str()) else {
            log::warn!("dropping advice entry without a name: {item}");
            continue;
        };
        let value = match item.get("value") {
            Some(v) if v.is_number() => v.as_f64(),
            Some(serde_json::Value::String(s)) => s.trim().parse::<Scalar>().ok(),
            _ => None,
        };
        let Some(value) = value.filter(|v| v.is_finite()) else {
            log::warn!("dropping advice for {name}: value is not a finite number");
            continue;
        };
        let Some(spec) = registry.get(name) else {
            log::warn!("dropping advice for unknown parameter {name:?}");
            continue;
        };
        if strict && (value < spec.min || value > spec.max) {
            return Err(AdvisorError::Rejected(format!(
                "{name}={value} outside [{}, {}] with strict advice enabled",
                spec.min, spec.max
            )));
        }
        updates.set(name, crate::paramdb::clamp_quantize(value, spec.min, spec.max, spec.step));
    }

    if updates.is_empty() {
        return Err(AdvisorError::Rejected(
            "no usable parameter updates after sanitization".into(),
        ));
    }
    let rationale = json_text
        .get("reasoning")
        .and_then(|r| r.as_str())
        .unwrap_or("")
        .to_string();
    Ok(RepairAdvice { updates, rationale })
}

/// One advisor exchange, written to the per-mission JSONL audit log. The
/// credential is never part of this record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    /// Wall-clock seconds since the Unix epoch when the query started.
    pub wall_time_unix: f64,
    /// Virtual mission time of the triggering anomaly.
    pub mission_t: Scalar,
    pub anomaly: AnomalyType,
    pub backend: String,
    pub prompt: String,
    pub raw_response: Option<String>,
    pub advice: Option<RepairAdvice>,
    pub error: Option<String>,
}
