//! Offline deterministic backends. Both derive every output from a
//! SHA-256 of (seed, request body), so results do not depend on call
//! order, thread scheduling, or wall clock, and a rerun of the same
//! run id reproduces each artifact byte for byte.
//!
//! The generation mock honors the requested token budget (two chars
//! per token, mirroring the budget heuristic on the caller's side) and
//! weaves slices of the prompt's own context payload into a bank of
//! stock script lines, so samples stay length-valid and share enough
//! vocabulary with the reference half for lexical metrics to move.

use coda_core::genclient::{wrap_envelope, BackendError, ChatBackend, ChatRequest};
use sha2::{Digest, Sha256};

pub struct MockGenBackend {
    seed: u64,
}

pub struct MockJudgeBackend {
    seed: u64,
}

fn digest(seed: u64, payload: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(payload.as_bytes());
    h.finalize().into()
}

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let from = text.find(open)? + open.len();
    let until = text[from..].find(close)? + from;
    Some(&text[from..until])
}

const GEN_LINES: &[&str] = &[
    "韩江雪: 这条线不能断，天亮之前必须有人守在码头。",
    "(他把旧照片翻过来，背面是一行褪色的编号)",
    "老周: 你以为躲进仓库就安稳了？他们认得你的车。",
    "雨点敲在铁皮顶棚上，像有人在远处数着拍子。",
    "MARA: Hold the line until the generator cycles back.",
    "The corridor lights flicker twice, then steady.",
    "沈一禾: 把账本收好，剩下的事交给我。",
    "(窗外传来汽笛声，长短交替了三次)",
    "DOYLE: The manifest says twelve crates. I count eleven.",
    "她抬头看钟，指针停在差一刻四点。",
];

impl MockGenBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl ChatBackend for MockGenBackend {
    fn name(&self) -> &str {
        "mock-gen"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let budget = (request.max_output_tokens as usize) * 2;
        let h = digest(self.seed, &request.user);
        let payload = between(&request.user, "<<<CONTEXT\n", "\nCONTEXT>>>")
            .or_else(|| between(&request.user, "<<<TAIL\n", "\nTAIL>>>"))
            .unwrap_or("");
        let source: Vec<char> = payload.chars().collect();

        let mut out = String::new();
        let mut written = 0usize;
        let mut line_idx = h[0] as usize;
        let mut borrow_pos = if source.is_empty() {
            0
        } else {
            u64::from_le_bytes(h[1..9].try_into().unwrap()) as usize % source.len()
        };
        let mut step = 0usize;
        while written < budget {
            let line = GEN_LINES[line_idx % GEN_LINES.len()];
            out.push_str(line);
            out.push('\n');
            written += line.chars().count() + 1;
            line_idx += 1;

            if step % 3 == 2 && !source.is_empty() {
                let take = 80 + (h[step % 32] as usize % 120);
                for j in 0..take {
                    out.push(source[(borrow_pos + j) % source.len()]);
                }
                out.push('\n');
                written += take + 1;
                borrow_pos = (borrow_pos + take * 7) % source.len();
            }
            if step % 4 == 1 {
                out.push('\n');
                written += 1;
            }
            step += 1;
        }
        let clipped: String = out.chars().take(budget).collect();
        Ok(wrap_envelope(&clipped))
    }
}

impl MockJudgeBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

const PROBLEM_FRAMES: &[&str] = &[
    "The continuation treats the unresolved handoff as the central problem.",
    "The continuation frames the missing evidence as the story's core obstacle.",
    "The continuation centers the strained alliance between the leads.",
];

const CAUSAL_READS: &[&str] = &[
    "Events are driven by the earlier betrayal rather than by chance.",
    "The outcome follows from the protagonist's earlier concealment.",
    "Pressure from the outside party explains the escalation.",
];

const MORAL_READS: &[&str] = &[
    "Loyalty is weighed above institutional duty.",
    "Personal survival is treated as excusable under pressure.",
    "The text withholds blame and lets both sides stand.",
];

const TREATMENTS: &[&str] = &[
    "Resolution is sought through confession and a staged exchange.",
    "The leads pursue a quiet settlement instead of confrontation.",
    "A third party is recruited to arbitrate the final handoff.",
];

impl ChatBackend for MockJudgeBackend {
    fn name(&self) -> &str {
        "mock-judge"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let h = digest(self.seed, &request.user);
        let span = |i: usize, lo: u8, width: u8| lo + h[i] % width;
        let pick = |i: usize, table: &[&str]| table[h[i] as usize % table.len()].to_string();
        let verdict = serde_json::json!({
            "overall_similarity_0_100": span(0, 35, 54),
            "plot_event_alignment": span(1, 30, 64),
            "character_consistency": span(2, 40, 56),
            "tone_style_match": span(3, 38, 58),
            "format_match": span(4, 55, 44),
            "ending_closure": span(5, 25, 70),
            "diff_evidence": [
                {
                    "reference_quote": "the reference resolves the handoff on the platform",
                    "generated_quote": "the continuation moves the exchange to the warehouse",
                    "note": "location of the climactic exchange differs"
                }
            ],
            "mechanism_attribution": {
                "problem_definition": pick(6, PROBLEM_FRAMES),
                "causal_interpretation": pick(7, CAUSAL_READS),
                "moral_evaluation": pick(8, MORAL_READS),
                "treatment_recommendation": pick(9, TREATMENTS)
            }
        });
        Ok(verdict.to_string())
    }
}
