//! Prompt assembly, the chunked continuation loop, and sample
//! validity.
//!
//! Long continuations exceed a single completion's output budget, so a
//! sample is produced by a loop of chunk requests: each call asks for
//! 3,500-6,500 characters and passes the last 4,000 characters of the
//! accumulated continuation as context, stopping once the cumulative
//! length reaches the target minimum (60% of the first half), with a
//! hard ceiling of 10 calls. Each chunk answers with a JSON envelope
//! `{"continuation": "..."}`; the loop unwraps and concatenates. After
//! the loop the sample is classified into the validity taxonomy used
//! for reporting (length window, meta-discourse, parse and API
//! failures).

mod backend;

pub use backend::{
    BackendError, ChatBackend, ChatRequest, HttpBackend, HttpBackendConfig, MockBackend,
};

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonx::extract_json_object;

/// Fixed screenwriter persona sent as the system message of every
/// generation call.
pub const SYSTEM_PROMPT: &str = "You are a senior film screenwriter and script formatting editor. \
Your sole task is: strictly following the Format Contract of the input script \"Part I\", \
directly continue the subsequent plot \"Part II\". You must output JSON conforming to \
requirements and provide no additional explanation.";

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generation config: {0}")]
    BadConfig(String),
    #[error("upper text is empty")]
    EmptyUpper,
    #[error("bad generation envelope: {0}")]
    BadEnvelope(String),
    #[error("theoretical sample count {theoretical} is zero or below the valid count {valid}")]
    BadTheoretical { theoretical: usize, valid: usize },
}

/// Knobs of the chunked generation loop. Ratios are relative to the
/// first-half character count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub chunk_min_chars: usize,
    pub chunk_max_chars: usize,
    pub tail_context_chars: usize,
    pub max_calls: u32,
    pub temperature: f64,
    pub samples_per_film: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            min_ratio: 0.6,
            max_ratio: 0.9,
            chunk_min_chars: 3500,
            chunk_max_chars: 6500,
            tail_context_chars: 4000,
            max_calls: 10,
            temperature: 0.7,
            samples_per_film: 3,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        if !(self.min_ratio > 0.0 && self.min_ratio < self.max_ratio && self.max_ratio <= 1.0) {
            return Err(GenError::BadConfig(format!(
                "need 0 < min_ratio < max_ratio <= 1, got {} / {}",
                self.min_ratio, self.max_ratio
            )));
        }
        if self.chunk_min_chars > self.chunk_max_chars {
            return Err(GenError::BadConfig(format!(
                "chunk_min_chars {} exceeds chunk_max_chars {}",
                self.chunk_min_chars, self.chunk_max_chars
            )));
        }
        if self.max_calls < 1 {
            return Err(GenError::BadConfig("max_calls must be at least 1".into()));
        }
        Ok(())
    }
}

/// Validity taxonomy of a finished sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Validity {
    Valid,
    TooShort,
    TooLong,
    MetaDiscourse,
    ParseFailure,
    ApiTimeout,
    ApiModeration,
    ApiOther,
}

/// Outcome of one chunk call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkStatus {
    Ok,
    ParseFailure,
    Timeout,
    Moderation,
    Http(u16),
    Transport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub call: u32,
    pub chars: usize,
    pub status: ChunkStatus,
}

/// One continuation attempt, as persisted to samples.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub model_id: String,
    pub film_id: String,
    pub sample_idx: u32,
    pub text: String,
    pub chunk_trace: Vec<ChunkRecord>,
    pub validity: Validity,
}

/// Identity of the sample being generated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleKey {
    pub model_id: String,
    pub film_id: String,
    pub sample_idx: u32,
}

fn char_count(s: &str) -> usize {
    s.chars().count()
}

/// Last `n` characters of a text (whole text when shorter).
fn tail_chars(text: &str, n: usize) -> &str {
    let total = char_count(text);
    if total <= n {
        return text;
    }
    let skip = total - n;
    match text.char_indices().nth(skip) {
        Some((byte, _)) => &text[byte..],
        None => text,
    }
}

/// Target continuation length window: (floor(min_ratio x L_up),
/// floor(max_ratio x L_up)). A tiny epsilon absorbs float dust so
/// exact products like 0.6 x 19835 floor to the true integer.
pub fn target_range(l_up: usize, config: &GenerationConfig) -> Result<(usize, usize), GenError> {
    if l_up == 0 {
        return Err(GenError::EmptyUpper);
    }
    let lo = (config.min_ratio * l_up as f64 + 1e-9).floor() as usize;
    let hi = (config.max_ratio * l_up as f64 + 1e-9).floor() as usize;
    Ok((lo, hi))
}

/// Builds the system and first user message. The user message embeds
/// the contract verbatim, the full first half between context
/// delimiters, and the five hard constraints with the numeric length
/// window rendered from the config.
pub fn build_prompts(upper: &str, contract: &str, config: &GenerationConfig) -> (String, String) {
    let l_up = char_count(upper);
    let (min_len, max_len) = target_range(l_up.max(1), config).expect("positive length");
    let min_pct = (config.min_ratio * 100.0).round() as u32;
    let max_pct = (config.max_ratio * 100.0).round() as u32;
    let user = format!(
        "Format Contract:\n{contract}\n\
        Part I of the script:\n<<<CONTEXT\n{upper}\nCONTEXT>>>\n\n\
        Hard constraints:\n\
        1. Format hard constraint: follow the Format Contract above item by item.\n\
        2. Continuity hard constraint: continue the existing character settings, relationships, and unresolved conflicts.\n\
        3. Narrative hard constraint: maintain the genre atmosphere and linguistic style of Part I.\n\
        4. Boundary hard constraint: no meta-discourse of any kind; never announce or describe what you are doing.\n\
        5. Length constraint: the complete continuation must total {min_pct}%-{max_pct}% of Part I's {l_up} characters, i.e. {min_len}-{max_len} characters across all segments.\n\n\
        Write the next segment of Part II now. Output a single JSON object of the form \
        {{\"continuation\": \"<script text>\"}} and nothing else."
    );
    (SYSTEM_PROMPT.to_string(), user)
}

/// User message for calls after the first: the tail of what has been
/// generated so far plus the per-chunk budget.
fn continuation_prompt(
    contract: &str,
    tail: &str,
    chunk_lo: usize,
    chunk_hi: usize,
    remaining_min: usize,
) -> String {
    format!(
        "Format Contract:\n{contract}\n\
        The continuation so far ends with:\n<<<TAIL\n{tail}\nTAIL>>>\n\n\
        Continue Part II seamlessly from that exact point. Do not repeat the tail. \
        Produce {chunk_lo}-{chunk_hi} characters in this segment; at least {remaining_min} \
        characters of story remain overall. Keep every Format Contract rule in force. \
        Output a single JSON object of the form {{\"continuation\": \"<script text>\"}} \
        and nothing else."
    )
}

/// Unwraps the per-chunk JSON envelope `{"continuation": "..."}`.
pub fn parse_envelope(raw: &str) -> Result<String, GenError> {
    let block = extract_json_object(raw)
        .ok_or_else(|| GenError::BadEnvelope("no JSON object in response".to_string()))?;
    let value: serde_json::Value = serde_json::from_str(block)
        .map_err(|e| GenError::BadEnvelope(format!("unparseable JSON: {e}")))?;
    match value.get("continuation") {
        Some(serde_json::Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(GenError::BadEnvelope(
            "continuation field is not a string".to_string(),
        )),
        None => Err(GenError::BadEnvelope(
            "continuation field missing".to_string(),
        )),
    }
}

/// Wraps chunk text in the envelope; the inverse of [`parse_envelope`].
pub fn wrap_envelope(text: &str) -> String {
    serde_json::json!({ "continuation": text }).to_string()
}

fn map_backend_error(e: &BackendError) -> (ChunkStatus, Validity) {
    match e {
        BackendError::Timeout => (ChunkStatus::Timeout, Validity::ApiTimeout),
        BackendError::Http { status: 524, .. } => (ChunkStatus::Timeout, Validity::ApiTimeout),
        BackendError::Http { status: 400, .. } => {
            (ChunkStatus::Moderation, Validity::ApiModeration)
        }
        BackendError::Http { status, .. } => (ChunkStatus::Http(*status), Validity::ApiOther),
        BackendError::Transport(_) => (ChunkStatus::Transport, Validity::ApiOther),
    }
}

/// Runs the chunked generation loop for one sample. Backend failures
/// are not errors: the partial text is retained and the failure shows
/// up as the sample's validity. The returned validity uses the default
/// meta-discourse blacklist; re-run [`classify_validity`] to apply a
/// custom one.
pub fn continue_script(
    key: &SampleKey,
    upper: &str,
    contract: &str,
    backend: &dyn ChatBackend,
    config: &GenerationConfig,
) -> Result<GenerationSample, GenError> {
    config.validate()?;
    let l_up = char_count(upper);
    let (min_len, max_len) = target_range(l_up, config)?;
    let (system, first_user) = build_prompts(upper, contract, config);

    let mut text = String::new();
    let mut trace: Vec<ChunkRecord> = Vec::new();

    for call in 1..=config.max_calls {
        let acc = char_count(&text);
        if call > 1 {
            if acc >= min_len {
                break;
            }
            // another minimum-size chunk would overshoot the ceiling
            if acc + config.chunk_min_chars > max_len {
                break;
            }
        }
        let remaining = max_len.saturating_sub(acc).max(1);
        let chunk_hi = config.chunk_max_chars.min(remaining);
        let chunk_lo = config.chunk_min_chars.min(chunk_hi);
        let user = if call == 1 {
            first_user.clone()
        } else {
            continuation_prompt(
                contract,
                tail_chars(&text, config.tail_context_chars),
                chunk_lo,
                chunk_hi,
                min_len.saturating_sub(acc),
            )
        };
        let request = ChatRequest {
            system: system.clone(),
            user,
            temperature: config.temperature,
            // output budget heuristic: roughly two characters per token
            // for the CJK-heavy scripts this pipeline targets
            max_output_tokens: ((chunk_hi / 2).max(32)) as u32,
        };
        match backend.complete(&request) {
            Ok(raw) => match parse_envelope(&raw) {
                Ok(chunk) => {
                    trace.push(ChunkRecord {
                        call,
                        chars: char_count(&chunk),
                        status: ChunkStatus::Ok,
                    });
                    text.push_str(&chunk);
                }
                Err(_) => {
                    trace.push(ChunkRecord {
                        call,
                        chars: 0,
                        status: ChunkStatus::ParseFailure,
                    });
                    break;
                }
            },
            Err(e) => {
                let (status, _) = map_backend_error(&e);
                trace.push(ChunkRecord {
                    call,
                    chars: 0,
                    status,
                });
                break;
            }
        }
    }

    let mut sample = GenerationSample {
        model_id: key.model_id.clone(),
        film_id: key.film_id.clone(),
        sample_idx: key.sample_idx,
        text,
        chunk_trace: trace,
        validity: Validity::Valid,
    };
    sample.validity = classify_validity(&sample, l_up, config, &default_blacklist());
    Ok(sample)
}

/// Classifies a finished sample. Check order: API failure carried in
/// the chunk trace, then envelope parse failure, then the length
/// window, then meta-discourse; anything left is valid.
pub fn classify_validity(
    sample: &GenerationSample,
    l_up: usize,
    config: &GenerationConfig,
    blacklist: &[String],
) -> Validity {
    for record in &sample.chunk_trace {
        match record.status {
            ChunkStatus::Timeout => return Validity::ApiTimeout,
            ChunkStatus::Moderation => return Validity::ApiModeration,
            ChunkStatus::Http(_) | ChunkStatus::Transport => return Validity::ApiOther,
            ChunkStatus::Ok | ChunkStatus::ParseFailure => {}
        }
    }
    if sample
        .chunk_trace
        .iter()
        .any(|r| r.status == ChunkStatus::ParseFailure)
    {
        return Validity::ParseFailure;
    }
    let Ok((min_len, max_len)) = target_range(l_up, config) else {
        return Validity::TooShort;
    };
    let n = char_count(&sample.text);
    if n < min_len {
        return Validity::TooShort;
    }
    if n > max_len {
        return Validity::TooLong;
    }
    if has_meta_discourse(&sample.text, blacklist) {
        return Validity::MetaDiscourse;
    }
    Validity::Valid
}

/// Case-insensitive substring match of any blacklist phrase against
/// the first and last 200 characters of the text.
pub fn has_meta_discourse(text: &str, blacklist: &[String]) -> bool {
    const WINDOW: usize = 200;
    let head: String = text.chars().take(WINDOW).collect::<String>().to_lowercase();
    let tail = tail_chars(text, WINDOW).to_lowercase();
    blacklist.iter().any(|phrase| {
        let p = phrase.to_lowercase();
        !p.is_empty() && (head.contains(&p) || tail.contains(&p))
    })
}

/// Built-in meta-discourse phrase list.
pub fn default_blacklist() -> Vec<String> {
    include_str!("../../assets/meta_blacklist.txt")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// Valid samples over the theoretical sample count.
pub fn validity_rate(samples: &[GenerationSample], theoretical: usize) -> Result<f64, GenError> {
    let valid = samples
        .iter()
        .filter(|s| s.validity == Validity::Valid)
        .count();
    if theoretical == 0 || theoretical < valid {
        return Err(GenError::BadTheoretical { theoretical, valid });
    }
    Ok(valid as f64 / theoretical as f64)
}

/// Simple blocking rate limiter: enforces a minimum interval between
/// `acquire` returns across threads.
pub struct RateLimiter {
    min_interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    /// `per_minute` <= 0 disables limiting.
    pub fn new(per_minute: f64) -> Self {
        let min_interval = if per_minute > 0.0 {
            Duration::from_secs_f64(60.0 / per_minute)
        } else {
            Duration::ZERO
        };
        Self {
            min_interval,
            last: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < self.min_interval {
                std::thread::sleep(self.min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }
}
