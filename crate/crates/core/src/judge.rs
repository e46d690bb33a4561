//! Judge prompts and verdict parsing.
//!
//! An external model scores each valid continuation against the real
//! second half: an overall 0-100 similarity, five sub-dimension scores,
//! quoted difference evidence, and a four-element framing analysis
//! (problem definition, causal interpretation, moral evaluation,
//! treatment recommendation). This module builds the judge prompt from
//! a versioned template, drives the call with bounded re-asks on
//! malformed output, and parses responses defensively.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::format::{render_contract, FormatProfile};
use crate::genclient::{BackendError, ChatBackend, ChatRequest};
use crate::jsonx::extract_json_object;

/// Versioned judge prompt skeleton; referenced by hash in every
/// persisted verdict.
pub const JUDGE_PROMPT_TEMPLATE: &str = include_str!("../assets/judge_prompt_v1.txt");

pub const JUDGE_SYSTEM_PROMPT: &str = "You are a rigorous film-script evaluation expert. \
Compare the generated continuation against the reference second half, score strictly, \
ground every judgment in the two texts, and output only the requested JSON object.";

const SCORE_KEYS: [&str; 6] = [
    "overall_similarity_0_100",
    "plot_event_alignment",
    "character_consistency",
    "tone_style_match",
    "format_match",
    "ending_closure",
];

const MAX_DIFF_EVIDENCE: usize = 10;
const MAX_ATTRIBUTION_CHARS: usize = 2000;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("no JSON object found in judge response")]
    NoJson,
    #[error("judge response JSON is invalid: {0}")]
    BadJson(serde_json::Error),
    #[error("judge response is not a JSON object")]
    NotAnObject,
    #[error("score {key} = {value} outside [0, 100]")]
    Range { key: String, value: f64 },
    #[error("score key {key:?} missing or not a number")]
    Schema { key: String },
    #[error("judge call failed: {0}")]
    Backend(#[from] BackendError),
    #[error("no parseable verdict after {attempts} attempts: {reason}")]
    GaveUp {
        attempts: u32,
        reason: String,
        raw: String,
    },
}

/// The six 0-100 scores of one verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScores {
    pub overall_similarity_0_100: u8,
    pub plot_event_alignment: u8,
    pub character_consistency: u8,
    pub tone_style_match: u8,
    pub format_match: u8,
    pub ending_closure: u8,
}

impl JudgeScores {
    fn get(&self, key: &str) -> u8 {
        match key {
            "overall_similarity_0_100" => self.overall_similarity_0_100,
            "plot_event_alignment" => self.plot_event_alignment,
            "character_consistency" => self.character_consistency,
            "tone_style_match" => self.tone_style_match,
            "format_match" => self.format_match,
            "ending_closure" => self.ending_closure,
            _ => unreachable!("unknown score key {key}"),
        }
    }

    fn set(&mut self, key: &str, value: u8) {
        match key {
            "overall_similarity_0_100" => self.overall_similarity_0_100 = value,
            "plot_event_alignment" => self.plot_event_alignment = value,
            "character_consistency" => self.character_consistency = value,
            "tone_style_match" => self.tone_style_match = value,
            "format_match" => self.format_match = value,
            "ending_closure" => self.ending_closure = value,
            _ => unreachable!("unknown score key {key}"),
        }
    }

    /// (key, value) pairs in schema order; handy for metric loops.
    pub fn entries(&self) -> Vec<(&'static str, u8)> {
        SCORE_KEYS.iter().map(|k| (*k, self.get(k))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DiffEvidence {
    #[serde(default)]
    pub reference_quote: String,
    #[serde(default)]
    pub generated_quote: String,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MechanismAttribution {
    #[serde(default)]
    pub problem_definition: String,
    #[serde(default)]
    pub causal_interpretation: String,
    #[serde(default)]
    pub moral_evaluation: String,
    #[serde(default)]
    pub treatment_recommendation: String,
}

/// One parsed judge verdict. `raw` keeps the judge's original response
/// for audit; it is stored in verdicts.jsonl but never compared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    #[serde(flatten)]
    pub scores: JudgeScores,
    #[serde(default)]
    pub diff_evidence: Vec<DiffEvidence>,
    #[serde(default)]
    pub mechanism_attribution: MechanismAttribution,
    #[serde(default)]
    pub raw: String,
}

/// Options for [`judge_sample`]. Judge calls default to temperature 0
/// so repeated runs stay comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeOptions {
    pub temperature: f64,
    /// Per-text character budget before head+tail truncation.
    pub max_chars_each: usize,
    /// Re-asks after a malformed response.
    pub max_reasks: u32,
    pub max_output_tokens: u32,
}

impl Default for JudgeOptions {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_chars_each: 12_000,
            max_reasks: 2,
            max_output_tokens: 2000,
        }
    }
}

/// Hex SHA-256 of the prompt template, recorded with each verdict so a
/// report always names the exact prompt that produced it.
pub fn prompt_template_hash() -> String {
    let digest = Sha256::digest(JUDGE_PROMPT_TEMPLATE.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Head+tail truncation: keeps roughly 60% of the budget from the
/// start and 40% from the end, with an explicit omission marker.
fn truncate_head_tail(text: &str, budget: usize) -> String {
    let total = text.chars().count();
    if total <= budget || budget == 0 {
        return text.to_string();
    }
    let head_n = budget * 6 / 10;
    let tail_n = budget - head_n;
    let head: String = text.chars().take(head_n).collect();
    let tail: String = {
        let skip = total - tail_n;
        text.chars().skip(skip).collect()
    };
    let omitted = total - head_n - tail_n;
    format!("{head}\n[... {omitted} characters omitted ...]\n{tail}")
}

/// Builds the judge (system, user) messages from the versioned
/// template. Oversized texts are head+tail truncated to the budget and
/// the omission is marked inline.
pub fn build_judge_prompt(
    reference: &str,
    generated: &str,
    profile: &FormatProfile,
    options: &JudgeOptions,
) -> (String, String) {
    let user = JUDGE_PROMPT_TEMPLATE
        .replace("{{PROFILE}}", render_contract(profile).trim_end())
        .replace(
            "{{REFERENCE}}",
            &truncate_head_tail(reference, options.max_chars_each),
        )
        .replace(
            "{{GENERATED}}",
            &truncate_head_tail(generated, options.max_chars_each),
        );
    (JUDGE_SYSTEM_PROMPT.to_string(), user)
}

fn cap_chars(s: &str, n: usize) -> String {
    if s.chars().count() <= n {
        s.to_string()
    } else {
        s.chars().take(n).collect()
    }
}

/// Parses a judge response: finds the first JSON object (prose and
/// code fences around it are fine), validates the six score keys, and
/// normalizes evidence and attribution. Never panics on arbitrary
/// input.
pub fn parse_verdict(response: &str) -> Result<JudgeVerdict, JudgeError> {
    let block = extract_json_object(response).ok_or(JudgeError::NoJson)?;
    let value: serde_json::Value = serde_json::from_str(block).map_err(JudgeError::BadJson)?;
    let obj = value.as_object().ok_or(JudgeError::NotAnObject)?;

    let mut scores = JudgeScores {
        overall_similarity_0_100: 0,
        plot_event_alignment: 0,
        character_consistency: 0,
        tone_style_match: 0,
        format_match: 0,
        ending_closure: 0,
    };
    for key in SCORE_KEYS {
        let number = obj
            .get(key)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| JudgeError::Schema {
                key: key.to_string(),
            })?;
        if !(0.0..=100.0).contains(&number) {
            return Err(JudgeError::Range {
                key: key.to_string(),
                value: number,
            });
        }
        // integers expected; fractional scores round half-up
        scores.set(key, (number + 0.5).floor() as u8);
    }

    let diff_evidence = obj
        .get("diff_evidence")
        .and_then(serde_json::Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|item| serde_json::from_value::<DiffEvidence>(item.clone()).ok())
                .take(MAX_DIFF_EVIDENCE)
                .collect()
        })
        .unwrap_or_default();

    let mut mechanism_attribution = obj
        .get("mechanism_attribution")
        .map(|v| serde_json::from_value::<MechanismAttribution>(v.clone()).unwrap_or_default())
        .unwrap_or_default();
    for field in [
        &mut mechanism_attribution.problem_definition,
        &mut mechanism_attribution.causal_interpretation,
        &mut mechanism_attribution.moral_evaluation,
        &mut mechanism_attribution.treatment_recommendation,
    ] {
        *field = cap_chars(field, MAX_ATTRIBUTION_CHARS);
    }

    Ok(JudgeVerdict {
        scores,
        diff_evidence,
        mechanism_attribution,
        raw: response.to_string(),
    })
}

/// Serializes the verdict body (scores, evidence, attribution) in the
/// response schema; [`parse_verdict`] of the result reproduces the
/// verdict up to `raw`.
pub fn body_json(verdict: &JudgeVerdict) -> String {
    let mut value = serde_json::to_value(verdict).expect("verdict serializes");
    value.as_object_mut().map(|o| o.remove("raw"));
    value.to_string()
}

/// Calls the judge backend, re-asking up to `max_reasks` times when the
/// response fails to parse. Backend failures propagate immediately so
/// the caller can record a judge-stage failure without touching the
/// sample's generation validity.
pub fn judge_sample(
    reference: &str,
    generated: &str,
    profile: &FormatProfile,
    backend: &dyn ChatBackend,
    options: &JudgeOptions,
) -> Result<JudgeVerdict, JudgeError> {
    let (system, base_user) = build_judge_prompt(reference, generated, profile, options);
    let mut last_error: Option<JudgeError> = None;
    let mut last_raw = String::new();
    let attempts = options.max_reasks + 1;
    for attempt in 0..attempts {
        let user = if attempt == 0 {
            base_user.clone()
        } else {
            format!(
                "{base_user}\n\nReminder: your previous reply was not parseable. Respond with \
                exactly one JSON object in the specified schema, with no code fences and no \
                text outside the object."
            )
        };
        let raw = backend.complete(&ChatRequest {
            system: system.clone(),
            user,
            temperature: options.temperature,
            max_output_tokens: options.max_output_tokens,
        })?;
        match parse_verdict(&raw) {
            Ok(verdict) => return Ok(verdict),
            Err(e) => {
                last_raw = raw;
                last_error = Some(e);
            }
        }
    }
    Err(JudgeError::GaveUp {
        attempts,
        reason: last_error
            .map(|e| e.to_string())
            .unwrap_or_else(|| "no attempts made".to_string()),
        raw: last_raw,
    })
}
