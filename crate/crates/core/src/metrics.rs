//! Lexical and structural scoring of continuations against their
//! reference half: ROUGE-L over tokens, structural similarity over
//! format feature vectors, and the weighted composite score.

use std::sync::OnceLock;

use jieba_rs::Jieba;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::StructuralFeatures;

/// Smoothing term in the structural-similarity denominator.
pub const STRUCT_SIM_EPSILON: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{name} = {value} is outside the allowed range [{lo}, {hi}]")]
    OutOfRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("composite weights must sum to 1.0 (got {sum})")]
    BadWeights { sum: f64 },
}

/// Tokenization mode, recorded in score outputs for reproducibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerMode {
    /// Dictionary-based CJK word segmentation (embedded dictionary
    /// snapshot, so results are stable across runs and machines).
    #[default]
    CjkWords,
    /// One token per CJK character; contiguous ASCII alphanumeric runs
    /// are kept whole.
    Chars,
}

fn segmenter() -> &'static Jieba {
    static JIEBA: OnceLock<Jieba> = OnceLock::new();
    JIEBA.get_or_init(Jieba::new)
}

/// Splits text into tokens under the given mode. Pure and deterministic;
/// whitespace never yields tokens.
pub fn tokenize(text: &str, mode: TokenizerMode) -> Vec<String> {
    match mode {
        TokenizerMode::CjkWords => segmenter()
            .cut(text, false)
            .into_iter()
            .map(|t| t.word)
            .filter(|w| !w.chars().all(char::is_whitespace))
            .map(str::to_owned)
            .collect(),
        TokenizerMode::Chars => {
            let mut tokens = Vec::new();
            let mut run = String::new();
            for ch in text.chars() {
                if ch.is_ascii_alphanumeric() {
                    run.push(ch);
                } else {
                    if !run.is_empty() {
                        tokens.push(std::mem::take(&mut run));
                    }
                    if !ch.is_whitespace() {
                        tokens.push(ch.to_string());
                    }
                }
            }
            if !run.is_empty() {
                tokens.push(run);
            }
            tokens
        }
    }
}

/// Exact longest-common-subsequence length via the standard DP with two
/// rolling rows, so memory stays linear in the shorter input.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // Iterate over the longer sequence, keep rows sized by the shorter.
    let (outer, inner) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let mut prev = vec![0usize; inner.len() + 1];
    let mut cur = vec![0usize; inner.len() + 1];
    for x in outer {
        for (j, y) in inner.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[inner.len()]
}

/// ROUGE-L precision/recall/F1 for one generated-vs-reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing, default)]
    pub lcs_len: usize,
}

/// ROUGE-L over token lists: P = LCS/|gen|, R = LCS/|ref|,
/// F1 = 2PR/(P+R). An empty side yields the defined-zero conventions.
pub fn rouge_l(gen: &[String], reference: &[String]) -> RougeScore {
    let lcs = lcs_length(gen, reference);
    let precision = if gen.is_empty() {
        0.0
    } else {
        lcs as f64 / gen.len() as f64
    };
    let recall = if reference.is_empty() {
        0.0
    } else {
        lcs as f64 / reference.len() as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    RougeScore {
        precision,
        recall,
        f1,
        lcs_len: lcs,
    }
}

/// Structural similarity between two feature vectors:
/// `1 − Σ|f_gen − f_ref| / (Σ|f_ref| + ε)`, clamped below at 0.
///
/// Identical vectors give exactly 1.0 (the numerator is exactly zero).
/// The clamp handles the all-zero-reference degenerate case, where the
/// raw formula is unbounded below.
pub fn structural_similarity(gen_f: &StructuralFeatures, ref_f: &StructuralFeatures) -> f64 {
    let g = gen_f.as_array();
    let r = ref_f.as_array();
    let num: f64 = g.iter().zip(&r).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = r.iter().map(|y| y.abs()).sum::<f64>() + STRUCT_SIM_EPSILON;
    (1.0 - num / den).max(0.0)
}

/// Weights of the composite score. The defaults weight the lexical
/// metric at 0.4 and the structural and judge components at 0.3 each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeights {
    pub w_rouge: f64,
    pub w_struct: f64,
    pub w_overall: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        Self {
            w_rouge: 0.4,
            w_struct: 0.3,
            w_overall: 0.3,
        }
    }
}

impl CompositeWeights {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let sum = self.w_rouge + self.w_struct + self.w_overall;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MetricsError::BadWeights { sum });
        }
        Ok(())
    }
}

/// Composite score: `w_rouge·F1 + w_struct·S + w_overall·(overall/100)`.
/// Linear and monotone non-decreasing in each argument.
pub fn composite(
    rouge_f1: f64,
    struct_sim: f64,
    overall_0_100: f64,
    weights: &CompositeWeights,
) -> Result<f64, MetricsError> {
    weights.validate()?;
    check_range("rouge_f1", rouge_f1, 0.0, 1.0)?;
    check_range("struct_sim", struct_sim, 0.0, 1.0)?;
    check_range("overall_0_100", overall_0_100, 0.0, 100.0)?;
    Ok(weights.w_rouge * rouge_f1
        + weights.w_struct * struct_sim
        + weights.w_overall * overall_0_100 / 100.0)
}

fn check_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), MetricsError> {
    if !value.is_finite() || value < lo || value > hi {
        return Err(MetricsError::OutOfRange {
            name,
            value,
            lo,
            hi,
        });
    }
    Ok(())
}

/// Per-sample metric record, one line of `scores.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCard {
    pub model_id: String,
    pub film_id: String,
    pub sample_idx: u32,
    pub rouge: RougeScore,
    pub features: StructuralFeatures,
    pub struct_sim: f64,
    /// Filled once a judge verdict for the sample is available.
    pub composite: Option<f64>,
    pub tokenizer_mode: TokenizerMode,
}
