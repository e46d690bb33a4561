//! Corpus ingestion: decoding and cleanup of raw script files, the
//! upper/lower split, quality filtering, and the JSONL dataset index.
//!
//! Cleaning is conservative and idempotent: decode (UTF-8 by default,
//! or a declared legacy encoding), strip a leading BOM, normalize line
//! endings to LF, and drop lines matching configurable noise patterns
//! such as page numbers or transcriber banners. The split places the
//! cut at the blank-line boundary nearest the requested character
//! fraction so both halves keep whole lines, and the two halves always
//! concatenate back to the input.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default minimum characters per half for a script to be kept.
pub const DEFAULT_MIN_HALF_CHARS: usize = 1000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("input is not valid {encoding}: undecodable byte near offset {offset}")]
    Encoding { encoding: String, offset: usize },
    #[error("unknown encoding label {0:?}")]
    UnknownEncoding(String),
    #[error("bad noise pattern {pattern:?}: {source}")]
    BadNoisePattern {
        pattern: String,
        source: regex::Error,
    },
    #[error("cannot split empty text")]
    EmptyText,
    #[error("split ratio {0} outside (0, 1)")]
    BadRatio(f64),
    #[error("duplicate film_id {0:?}")]
    DuplicateFilm(String),
    #[error("index line {line}: {source}")]
    BadIndexLine {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One script in the dataset index. Paths are stored as written (the
/// pipeline uses run-relative paths) and the character counts are
/// recomputable from the files they point at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilmRecord {
    pub film_id: String,
    pub title: String,
    pub year: Option<u32>,
    pub genre: Option<String>,
    pub upper_path: String,
    pub lower_path: String,
    pub upper_chars: usize,
    pub lower_chars: usize,
    pub profile_path: String,
    pub contract_path: String,
}

/// Options for [`clean_text`].
#[derive(Debug, Clone)]
pub struct CleanOptions {
    /// Encoding label (as understood by WHATWG labels, e.g. "gbk",
    /// "big5"). `None` means strict UTF-8.
    pub declared_encoding: Option<String>,
    /// Full-line regexes; a line matching any of them is dropped.
    pub noise_patterns: Vec<String>,
}

impl Default for CleanOptions {
    fn default() -> Self {
        Self {
            declared_encoding: None,
            noise_patterns: vec![
                // dash-wrapped page numbers: "- 12 -"
                r"^\s*-+\s*\d+\s*-+\s*$".to_string(),
                r"^\s*(?i:page)\s+\d+\s*$".to_string(),
                r"^\s*第\s*\d+\s*页\s*$".to_string(),
                // transcriber/download banners
                r"^\s*(?i:downloaded from|transcribed by)\b.*$".to_string(),
            ],
        }
    }
}

fn decode(raw: &[u8], declared: Option<&str>) -> Result<String, CorpusError> {
    let Some(label) = declared else {
        return match std::str::from_utf8(raw) {
            Ok(s) => Ok(s.to_string()),
            Err(e) => Err(CorpusError::Encoding {
                encoding: "utf-8".to_string(),
                offset: e.valid_up_to(),
            }),
        };
    };
    let enc = encoding_rs::Encoding::for_label(label.as_bytes())
        .ok_or_else(|| CorpusError::UnknownEncoding(label.to_string()))?;
    let mut decoder = enc.new_decoder_without_bom_handling();
    let cap = decoder
        .max_utf8_buffer_length_without_replacement(raw.len())
        .unwrap_or(raw.len() * 4);
    let mut out = String::with_capacity(cap);
    let (result, bytes_read) = decoder.decode_to_string_without_replacement(raw, &mut out, true);
    match result {
        encoding_rs::DecoderResult::InputEmpty => Ok(out),
        encoding_rs::DecoderResult::Malformed(bad, _) => Err(CorpusError::Encoding {
            encoding: enc.name().to_ascii_lowercase(),
            offset: bytes_read.saturating_sub(bad as usize),
        }),
        encoding_rs::DecoderResult::OutputFull => unreachable!("output buffer was presized"),
    }
}

/// Decodes and normalizes raw script bytes: BOM stripped, line endings
/// to LF, noise lines removed. Idempotent on its own output.
pub fn clean_text(raw: &[u8], opts: &CleanOptions) -> Result<String, CorpusError> {
    let noise: Vec<Regex> = opts
        .noise_patterns
        .iter()
        .map(|p| {
            Regex::new(p).map_err(|source| CorpusError::BadNoisePattern {
                pattern: p.clone(),
                source,
            })
        })
        .collect::<Result<_, _>>()?;

    let decoded = decode(raw, opts.declared_encoding.as_deref())?;
    let decoded = decoded.strip_prefix('\u{feff}').unwrap_or(&decoded);
    let unified = decoded.replace("\r\n", "\n").replace('\r', "\n");

    let mut out = String::with_capacity(unified.len());
    for line in unified.split_inclusive('\n') {
        let body = line.strip_suffix('\n').unwrap_or(line);
        if noise.iter().any(|re| re.is_match(body)) {
            continue;
        }
        out.push_str(line);
    }
    Ok(out)
}

fn char_count(s: &str) -> usize {
    s.chars().count()
}

/// Splits text at the blank-line boundary nearest to `ratio` of its
/// characters, falling back to the nearest line break and finally to
/// the raw character index. The halves always concatenate back to the
/// input.
pub fn split_halves(text: &str, ratio: f64) -> Result<(&str, &str), CorpusError> {
    if text.is_empty() {
        return Err(CorpusError::EmptyText);
    }
    if !(ratio > 0.0 && ratio < 1.0) || !ratio.is_finite() {
        return Err(CorpusError::BadRatio(ratio));
    }
    let total = char_count(text);
    let target = ratio * total as f64;

    // candidate split points at line starts (char index, byte index);
    // blank candidates start a blank line, so the cut never bisects
    // content
    let mut blank_candidates: Vec<(usize, usize)> = Vec::new();
    let mut line_candidates: Vec<(usize, usize)> = Vec::new();
    let mut chars_seen = 0usize;
    let mut bytes_seen = 0usize;
    for line in text.split_inclusive('\n') {
        if bytes_seen > 0 {
            line_candidates.push((chars_seen, bytes_seen));
            if line.trim().is_empty() {
                blank_candidates.push((chars_seen, bytes_seen));
            }
        }
        chars_seen += char_count(line);
        bytes_seen += line.len();
    }

    let nearest = |cands: &[(usize, usize)]| -> Option<usize> {
        // candidates are ascending, so min_by keeps the lower index on ties
        cands
            .iter()
            .min_by(|a, b| {
                let da = (a.0 as f64 - target).abs();
                let db = (b.0 as f64 - target).abs();
                da.partial_cmp(&db).unwrap()
            })
            .map(|&(_, byte)| byte)
    };

    let byte_split = nearest(&blank_candidates)
        .or_else(|| nearest(&line_candidates))
        .unwrap_or_else(|| {
            // single line: cut at the raw character index, clamped so
            // both halves are non-empty
            let k = (target.round() as usize).clamp(1, total.saturating_sub(1).max(1));
            text.char_indices()
                .nth(k)
                .map(|(b, _)| b)
                .unwrap_or(text.len())
        });

    Ok(text.split_at(byte_split))
}

/// Outcome of [`quality_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityDecision {
    Keep,
    Drop(DropReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// A half is empty (or whitespace only).
    Incomplete,
    /// A half is below the minimum character count.
    TooShort,
}

/// Re-reads both half files of a record and decides keep/drop. A half
/// that is empty or whitespace-only means the script is incomplete;
/// one below `min_chars` is too short to evaluate. Missing files are
/// I/O errors, not drops.
pub fn quality_filter(
    record: &FilmRecord,
    base: &Path,
    min_chars: usize,
) -> Result<QualityDecision, CorpusError> {
    let mut decision = QualityDecision::Keep;
    for path in [&record.upper_path, &record.lower_path] {
        let text = fs::read_to_string(base.join(path))?;
        if text.trim().is_empty() {
            return Ok(QualityDecision::Drop(DropReason::Incomplete));
        }
        if char_count(&text) < min_chars {
            decision = QualityDecision::Drop(DropReason::TooShort);
        }
    }
    Ok(decision)
}

/// Serializes records as JSONL sorted by film_id. Duplicate ids are an
/// error; an empty record list writes an empty file.
pub fn build_index(records: &[FilmRecord], path: &Path) -> Result<(), CorpusError> {
    let mut sorted: Vec<&FilmRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.film_id.cmp(&b.film_id));
    for pair in sorted.windows(2) {
        if pair[0].film_id == pair[1].film_id {
            return Err(CorpusError::DuplicateFilm(pair[0].film_id.clone()));
        }
    }
    let mut file = fs::File::create(path)?;
    for record in sorted {
        let line = serde_json::to_string(record).expect("film record serializes");
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads an index file back into records, preserving file order.
pub fn parse_index(path: &Path) -> Result<Vec<FilmRecord>, CorpusError> {
    let data = fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|source| CorpusError::BadIndexLine {
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(id: &str, upper: &str, lower: &str) -> FilmRecord {
        FilmRecord {
            film_id: id.to_string(),
            title: format!("Title {id}"),
            year: Some(2015),
            genre: Some("drama".to_string()),
            upper_path: upper.to_string(),
            lower_path: lower.to_string(),
            upper_chars: 0,
            lower_chars: 0,
            profile_path: format!("profiles/{id}.json"),
            contract_path: format!("contracts/{id}.txt"),
        }
    }

    #[test]
    fn clean_normalizes_newlines() {
        let out = clean_text(b"A\r\nB\rC", &CleanOptions::default()).unwrap();
        assert_eq!(out, "A\nB\nC");
    }

    #[test]
    fn clean_strips_bom() {
        let out = clean_text(b"\xef\xbb\xbfhello", &CleanOptions::default()).unwrap();
        assert_eq!(out, "hello");
    }

    #[test]
    fn clean_is_idempotent() {
        let raw = "\u{feff}line one\r\n- 3 -\r\nline two\r\n".as_bytes();
        let once = clean_text(raw, &CleanOptions::default()).unwrap();
        let twice = clean_text(once.as_bytes(), &CleanOptions::default()).unwrap();
        assert_eq!(once, twice);
        assert_eq!(once, "line one\nline two\n");
    }

    #[test]
    fn clean_passes_clean_text_through() {
        let text = "Scene 1\nWei: hello.\n";
        let out = clean_text(text.as_bytes(), &CleanOptions::default()).unwrap();
        assert_eq!(out, text);
    }

    #[test]
    fn clean_drops_noise_lines() {
        let opts = CleanOptions {
            noise_patterns: vec![r"^===.*===$".to_string()],
            ..CleanOptions::default()
        };
        let out = clean_text(b"keep\n=== watermark ===\nalso keep", &opts).unwrap();
        assert_eq!(out, "keep\nalso keep");
    }

    #[test]
    fn clean_keeps_bare_numbered_scene_lines() {
        // dash-wrapped page numbers go, bare numbered scene markers stay
        let out = clean_text(b"12.\n- 12 -\nPage 3\ntext", &CleanOptions::default()).unwrap();
        assert_eq!(out, "12.\ntext");
    }

    #[test]
    fn clean_reports_bad_utf8_offset() {
        let err = clean_text(b"ab\xffcd", &CleanOptions::default()).unwrap_err();
        match err {
            CorpusError::Encoding { encoding, offset } => {
                assert_eq!(encoding, "utf-8");
                assert_eq!(offset, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn clean_decodes_declared_gbk() {
        // "你好" in GBK
        let raw = b"\xc4\xe3\xba\xc3";
        let opts = CleanOptions {
            declared_encoding: Some("gbk".to_string()),
            ..CleanOptions::default()
        };
        assert_eq!(clean_text(raw, &opts).unwrap(), "你好");
    }

    #[test]
    fn clean_rejects_unknown_encoding() {
        let opts = CleanOptions {
            declared_encoding: Some("not-a-codec".to_string()),
            ..CleanOptions::default()
        };
        assert!(matches!(
            clean_text(b"x", &opts),
            Err(CorpusError::UnknownEncoding(_))
        ));
    }

    #[test]
    fn split_at_exact_blank_midpoint() {
        // 10 chars, blank line starting at char 5
        let (upper, lower) = split_halves("abcd\n\nefgh", 0.5).unwrap();
        assert_eq!(upper, "abcd\n");
        assert_eq!(lower, "\nefgh");
        assert_eq!(upper.chars().count(), 5);
        assert_eq!(lower.chars().count(), 5);
    }

    #[test]
    fn split_falls_back_to_line_break() {
        let text = "first line here\nsecond line here";
        let (upper, lower) = split_halves(text, 0.5).unwrap();
        assert_eq!(upper, "first line here\n");
        assert_eq!(lower, "second line here");
    }

    #[test]
    fn split_single_line_uses_char_index() {
        let (upper, lower) = split_halves("abcdefghij", 0.5).unwrap();
        assert_eq!(upper, "abcde");
        assert_eq!(lower, "fghij");
    }

    #[test]
    fn split_multibyte_concat_identity() {
        let text = "第一场 夜\n全文开始。\n\n第二场 晨\n后半段落。";
        let (upper, lower) = split_halves(text, 0.5).unwrap();
        assert_eq!(format!("{upper}{lower}"), text);
        assert!(upper.chars().count() > 0 && lower.chars().count() > 0);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        assert!(matches!(split_halves("", 0.5), Err(CorpusError::EmptyText)));
        assert!(matches!(
            split_halves("abc", 0.0),
            Err(CorpusError::BadRatio(_))
        ));
        assert!(matches!(
            split_halves("abc", 1.0),
            Err(CorpusError::BadRatio(_))
        ));
    }

    #[test]
    fn split_prefers_nearest_blank() {
        // blanks at char 2 and char 12; ratio 0.5 of 16 chars targets 8
        let text = "a\n\nbcdefgh\n\nijk";
        let (upper, lower) = split_halves(text, 0.5).unwrap();
        assert_eq!(format!("{upper}{lower}"), text);
        assert_eq!(upper, "a\n\nbcdefgh\n");
    }

    #[test]
    fn quality_keeps_full_halves() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("u.txt"), "锅".repeat(21_322)).unwrap();
        fs::write(dir.path().join("l.txt"), "盖".repeat(17_078)).unwrap();
        let r = record("f1", "u.txt", "l.txt");
        let d = quality_filter(&r, dir.path(), DEFAULT_MIN_HALF_CHARS).unwrap();
        assert_eq!(d, QualityDecision::Keep);
    }

    #[test]
    fn quality_drops_empty_lower() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("u.txt"), "x".repeat(2000)).unwrap();
        fs::write(dir.path().join("l.txt"), "  \n").unwrap();
        let r = record("f1", "u.txt", "l.txt");
        let d = quality_filter(&r, dir.path(), DEFAULT_MIN_HALF_CHARS).unwrap();
        assert_eq!(d, QualityDecision::Drop(DropReason::Incomplete));
    }

    #[test]
    fn quality_drops_short_upper() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("u.txt"), "x".repeat(500)).unwrap();
        fs::write(dir.path().join("l.txt"), "y".repeat(2000)).unwrap();
        let r = record("f1", "u.txt", "l.txt");
        let d = quality_filter(&r, dir.path(), DEFAULT_MIN_HALF_CHARS).unwrap();
        assert_eq!(d, QualityDecision::Drop(DropReason::TooShort));
    }

    #[test]
    fn quality_missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let r = record("f1", "absent.txt", "also-absent.txt");
        assert!(matches!(
            quality_filter(&r, dir.path(), DEFAULT_MIN_HALF_CHARS),
            Err(CorpusError::Io(_))
        ));
    }

    #[test]
    fn index_round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        let records = vec![
            record("f2", "u2.txt", "l2.txt"),
            record("f1", "u1.txt", "l1.txt"),
        ];
        build_index(&records, &path).unwrap();
        let back = parse_index(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].film_id, "f1");
        assert_eq!(back[1].film_id, "f2");
        assert_eq!(back[1], records[0]);
    }

    #[test]
    fn index_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        let records = vec![record("f1", "a", "b"), record("f1", "c", "d")];
        assert!(matches!(
            build_index(&records, &path),
            Err(CorpusError::DuplicateFilm(_))
        ));
    }

    #[test]
    fn index_empty_ok() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.jsonl");
        build_index(&[], &path).unwrap();
        assert_eq!(parse_index(&path).unwrap(), Vec::<FilmRecord>::new());
    }

    proptest! {
        #[test]
        fn prop_split_concat_identity(
            lines in prop::collection::vec("[a-z 场景一二三]{0,12}", 1..30),
            ratio in 0.05f64..0.95,
        ) {
            let text = lines.join("\n");
            prop_assume!(!text.is_empty());
            let (upper, lower) = split_halves(&text, ratio).unwrap();
            prop_assert_eq!(format!("{upper}{lower}"), text);
        }

        #[test]
        fn prop_clean_idempotent(body in "[a-zA-Z0-9 .:\\-\r\n]{0,200}") {
            let opts = CleanOptions::default();
            if let Ok(once) = clean_text(body.as_bytes(), &opts) {
                let twice = clean_text(once.as_bytes(), &opts).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
