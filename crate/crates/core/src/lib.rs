//! Core library for benchmarking script continuation with chat models.
//!
//! The pipeline stages, from raw text to statistics:
//!
//! 1. [`corpus`]: clean raw script files, split each at its content
//!    midpoint into an upper (conditioning) and lower (reference) half,
//!    and maintain a JSONL index of the resulting records.
//! 2. [`format`]: detect a script's formatting conventions as a
//!    [`format::FormatProfile`], render them as a natural-language
//!    contract for prompts, and extract structural feature vectors.
//! 3. [`genclient`]: build continuation prompts, drive the chunked
//!    generation loop against a pluggable chat backend, and classify
//!    sample validity.
//! 4. [`metrics`]: ROUGE-L, structural similarity, and the composite
//!    score for each sample against its reference half.
//! 5. [`judge`]: structured judge verdicts: prompt construction,
//!    response parsing, and score validation.
//! 6. [`stats`]: paired alignment across two models, descriptive
//!    statistics, paired t-tests, Cohen's d, confidence intervals, and
//!    Shapiro-Wilk normality checks.

pub mod corpus;
pub mod format;
pub mod genclient;
mod jsonx;
pub mod judge;
pub mod metrics;
pub mod stats;
