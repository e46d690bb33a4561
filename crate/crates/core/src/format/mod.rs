//! Script format conventions: detection, natural-language contracts,
//! and structural feature extraction.
//!
//! A [`FormatProfile`] records how a script marks scene headers,
//! dialogue, stage directions, blank lines, and emphasis. Detection is
//! regex/heuristic based and entirely deterministic: the same text
//! always yields the same profile. [`render_contract`] turns a profile
//! into the plain-language instruction block embedded in generation
//! prompts, and [`extract_features`] produces the five-component
//! feature vector consumed by the structural-similarity metric.

mod synth;

pub use synth::{supported_profiles, synthesize_script};

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Minimum matching lines for a style to win the per-category vote.
const MIN_STYLE_LINES: usize = 3;
/// Minimum share of non-blank lines for a style to win.
const MIN_STYLE_SHARE: f64 = 0.02;
/// Blank-line ratio below which the policy is single-newline.
const SINGLE_BLANK_MAX: f64 = 0.05;
/// Blank-line ratio above which the policy is double-newline.
const DOUBLE_BLANK_MIN: f64 = 0.25;
/// Stored example lines per category.
const MAX_EXAMPLES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SceneHeaderStyle {
    /// `**3**, Location, Time`
    NumberBold,
    /// `3. Location, Time, Interior`
    NumberDotMeta,
    /// `Scene 3` / `第3场`
    SceneWord,
    /// A bare numbered line such as `12.`
    NumberedPlain,
    Other,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DialogueMarker {
    /// `Role: spoken line`
    RoleColon,
    /// Speaker name on its own line, spoken line underneath.
    RoleNewline,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StageDirectionMarker {
    /// Lines prefixed with `Δ` (or `△`).
    Triangle,
    /// Lines prefixed with `▲`.
    BlackTriangle,
    /// Full lines enclosed in parentheses.
    Paren,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BlanklinePolicy {
    SingleNewline,
    DoubleNewline,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EmphasisStyle {
    /// Paired `**` markers on content lines.
    MarkdownBold,
    None,
}

/// Sample lines captured during detection, persisted in the profile
/// JSON under `examples`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ProfileExamples {
    pub scene_headers: Vec<String>,
    pub dialogues: Vec<String>,
}

/// Detected formatting conventions of one script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatProfile {
    pub scene_header_style: SceneHeaderStyle,
    pub dialogue_marker: DialogueMarker,
    pub stage_direction_marker: StageDirectionMarker,
    pub blankline_policy: BlanklinePolicy,
    pub emphasis_style: EmphasisStyle,
    #[serde(default)]
    pub examples: ProfileExamples,
}

impl FormatProfile {
    /// Profile with nothing detected: every category at its none/other
    /// value and no stored examples.
    pub fn none() -> Self {
        Self {
            scene_header_style: SceneHeaderStyle::None,
            dialogue_marker: DialogueMarker::Other,
            stage_direction_marker: StageDirectionMarker::None,
            blankline_policy: BlanklinePolicy::SingleNewline,
            emphasis_style: EmphasisStyle::None,
            examples: ProfileExamples::default(),
        }
    }
}

/// Five structural features of a text, the `f_k` vector behind the
/// structural-similarity metric. The four ratios are line-class counts
/// over total lines; `bold_density` is paired-`**` occurrences per line.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StructuralFeatures {
    pub scene_ratio: f64,
    pub dialogue_ratio: f64,
    pub blank_ratio: f64,
    pub stage_ratio: f64,
    pub bold_density: f64,
}

impl StructuralFeatures {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.scene_ratio,
            self.dialogue_ratio,
            self.blank_ratio,
            self.stage_ratio,
            self.bold_density,
        ]
    }
}

/// Primary class of a single line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineClass {
    SceneHeader,
    Dialogue,
    StageDirection,
    Blank,
    Other,
}

/// Classification result: one primary class plus the orthogonal
/// bold-carrier flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LineLabel {
    pub class: LineClass,
    pub bold_carrier: bool,
}

struct Detectors {
    number_bold: Regex,
    number_dot_meta: Regex,
    numbered_plain: Regex,
    scene_word: Regex,
    triangle: Regex,
    black_triangle: Regex,
    paren: Regex,
    role_colon: Regex,
    bold_pair: Regex,
}

fn detectors() -> &'static Detectors {
    static D: OnceLock<Detectors> = OnceLock::new();
    D.get_or_init(|| Detectors {
        number_bold: Regex::new(r"^\s*\*\*\d+\*\*").unwrap(),
        number_dot_meta: Regex::new(r"^\s*\d+\s*[.、]\s*\S").unwrap(),
        numbered_plain: Regex::new(r"^\s*\d+\s*[.,、]?\s*$").unwrap(),
        scene_word: Regex::new(r"^\s*(?:(?i:scene)\s+\S|场景\s*\S|第\s*\S{1,6}\s*[场幕])").unwrap(),
        triangle: Regex::new(r"^\s*[Δ△]").unwrap(),
        black_triangle: Regex::new(r"^\s*▲").unwrap(),
        paren: Regex::new(r"^\s*[(（][^()（）]*[)）]\s*$").unwrap(),
        role_colon: Regex::new(r"^\s*([^\s:：][^:：]{0,23})[:：]\s*\S").unwrap(),
        bold_pair: Regex::new(r"\*\*[^*\n]+\*\*").unwrap(),
    })
}

fn is_blank(line: &str) -> bool {
    line.trim().is_empty()
}

fn scene_style_of(line: &str) -> Option<SceneHeaderStyle> {
    let d = detectors();
    if d.number_bold.is_match(line) {
        Some(SceneHeaderStyle::NumberBold)
    } else if d.number_dot_meta.is_match(line) {
        Some(SceneHeaderStyle::NumberDotMeta)
    } else if d.numbered_plain.is_match(line) {
        Some(SceneHeaderStyle::NumberedPlain)
    } else if d.scene_word.is_match(line) {
        Some(SceneHeaderStyle::SceneWord)
    } else {
        None
    }
}

fn matches_scene_style(line: &str, style: SceneHeaderStyle) -> bool {
    let d = detectors();
    match style {
        SceneHeaderStyle::NumberBold => d.number_bold.is_match(line),
        SceneHeaderStyle::NumberDotMeta => d.number_dot_meta.is_match(line),
        SceneHeaderStyle::NumberedPlain => d.numbered_plain.is_match(line),
        SceneHeaderStyle::SceneWord => d.scene_word.is_match(line),
        SceneHeaderStyle::Other | SceneHeaderStyle::None => false,
    }
}

fn stage_marker_of(line: &str) -> Option<StageDirectionMarker> {
    let d = detectors();
    if d.triangle.is_match(line) {
        Some(StageDirectionMarker::Triangle)
    } else if d.black_triangle.is_match(line) {
        Some(StageDirectionMarker::BlackTriangle)
    } else if d.paren.is_match(line) {
        Some(StageDirectionMarker::Paren)
    } else {
        None
    }
}

fn matches_stage_marker(line: &str, marker: StageDirectionMarker) -> bool {
    let d = detectors();
    match marker {
        StageDirectionMarker::Triangle => d.triangle.is_match(line),
        StageDirectionMarker::BlackTriangle => d.black_triangle.is_match(line),
        StageDirectionMarker::Paren => d.paren.is_match(line),
        StageDirectionMarker::None => false,
    }
}

fn is_role_colon(line: &str) -> bool {
    let d = detectors();
    match d.role_colon.captures(line) {
        Some(caps) => {
            let name = caps.get(1).map(|m| m.as_str().trim()).unwrap_or("");
            // a bare number before a colon is a timestamp or heading, not a speaker
            !name.chars().all(|c| c.is_ascii_digit())
        }
        None => false,
    }
}

/// A line that plausibly carries only a speaker name: short, purely
/// name-charset, no sentence punctuation.
fn is_name_like(line: &str) -> bool {
    let t = line.trim();
    if t.is_empty() || t.chars().count() > 24 {
        return false;
    }
    t.chars()
        .all(|c| c.is_alphabetic() || matches!(c, ' ' | '·' | '\'' | '-'))
}

fn bold_carrier(line: &str) -> bool {
    detectors().bold_pair.is_match(line)
}

/// Classifies a single physical line (no line feed inside).
///
/// Priority: scene header > stage direction > dialogue > blank > other.
/// With a profile hint only the hinted detectors are active, so feature
/// extraction for a generated text and its reference stays symmetric.
/// Without a hint every known style can match; name-only dialogue lines
/// (the role-newline convention) need the hint, since a lone line gives
/// no lookahead.
pub fn classify_line(line: &str, profile_hint: Option<&FormatProfile>) -> LineLabel {
    let bold = bold_carrier(line);
    let class = classify_class(line, profile_hint);
    LineLabel {
        class,
        bold_carrier: bold,
    }
}

fn classify_class(line: &str, hint: Option<&FormatProfile>) -> LineClass {
    let scene = match hint {
        Some(p) => matches_scene_style(line, p.scene_header_style),
        None => scene_style_of(line).is_some(),
    };
    if scene {
        return LineClass::SceneHeader;
    }
    let stage = match hint {
        Some(p) => matches_stage_marker(line, p.stage_direction_marker),
        None => stage_marker_of(line).is_some(),
    };
    if stage {
        return LineClass::StageDirection;
    }
    let dialogue = match hint {
        Some(p) => match p.dialogue_marker {
            DialogueMarker::RoleColon => is_role_colon(line),
            DialogueMarker::RoleNewline => is_name_like(line),
            DialogueMarker::Other => false,
        },
        None => is_role_colon(line),
    };
    if dialogue {
        return LineClass::Dialogue;
    }
    if is_blank(line) {
        return LineClass::Blank;
    }
    LineClass::Other
}

/// Detects the format profile of a text by majority vote over its
/// classified lines. A style wins its category only with at least
/// [`MIN_STYLE_LINES`] matching lines and [`MIN_STYLE_SHARE`] of the
/// non-blank lines; otherwise the category falls back to its
/// none/other value. Degenerate inputs yield an all-none profile.
pub fn detect_profile(text: &str) -> FormatProfile {
    let lines: Vec<&str> = text.lines().collect();
    let total = lines.len();
    if total == 0 {
        return FormatProfile::none();
    }

    let mut scene_votes: Vec<(SceneHeaderStyle, usize)> = vec![
        (SceneHeaderStyle::NumberBold, 0),
        (SceneHeaderStyle::NumberDotMeta, 0),
        (SceneHeaderStyle::NumberedPlain, 0),
        (SceneHeaderStyle::SceneWord, 0),
    ];
    let mut stage_votes: Vec<(StageDirectionMarker, usize)> = vec![
        (StageDirectionMarker::Triangle, 0),
        (StageDirectionMarker::BlackTriangle, 0),
        (StageDirectionMarker::Paren, 0),
    ];
    let mut role_colon_votes = 0usize;
    let mut role_newline_votes = 0usize;
    let mut blank_lines = 0usize;
    let mut bold_content_lines = 0usize;

    let mut scene_examples: Vec<(SceneHeaderStyle, &str)> = Vec::new();
    let mut colon_examples: Vec<&str> = Vec::new();
    let mut name_examples: Vec<&str> = Vec::new();

    for (i, line) in lines.iter().enumerate() {
        if is_blank(line) {
            blank_lines += 1;
            continue;
        }
        if let Some(style) = scene_style_of(line) {
            for (s, n) in scene_votes.iter_mut() {
                if *s == style {
                    *n += 1;
                }
            }
            scene_examples.push((style, line));
            continue;
        }
        // emphasis counts bold pairs on content lines only, so bold
        // scene numbering does not masquerade as body emphasis
        if bold_carrier(line) {
            bold_content_lines += 1;
        }
        if let Some(marker) = stage_marker_of(line) {
            for (m, n) in stage_votes.iter_mut() {
                if *m == marker {
                    *n += 1;
                }
            }
            continue;
        }
        if is_role_colon(line) {
            role_colon_votes += 1;
            colon_examples.push(line);
            continue;
        }
        if is_name_like(line) {
            if let Some(next) = lines.get(i + 1) {
                if !is_blank(next) && !is_name_like(next) {
                    role_newline_votes += 1;
                    name_examples.push(line);
                }
            }
        }
    }

    let non_blank = total - blank_lines;
    let wins = |n: usize| {
        n >= MIN_STYLE_LINES && non_blank > 0 && n as f64 / non_blank as f64 >= MIN_STYLE_SHARE
    };

    scene_votes.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    let scene_header_style = match scene_votes.first() {
        Some(&(style, n)) if wins(n) => style,
        _ => SceneHeaderStyle::None,
    };

    stage_votes.sort_by_key(|&(_, n)| std::cmp::Reverse(n));
    let stage_direction_marker = match stage_votes.first() {
        Some(&(marker, n)) if wins(n) => marker,
        _ => StageDirectionMarker::None,
    };

    let dialogue_marker = if wins(role_colon_votes) && role_colon_votes >= role_newline_votes {
        DialogueMarker::RoleColon
    } else if wins(role_newline_votes) {
        DialogueMarker::RoleNewline
    } else {
        DialogueMarker::Other
    };

    let blank_ratio = blank_lines as f64 / total as f64;
    let blankline_policy = if blank_ratio < SINGLE_BLANK_MAX {
        BlanklinePolicy::SingleNewline
    } else if blank_ratio > DOUBLE_BLANK_MIN {
        BlanklinePolicy::DoubleNewline
    } else {
        BlanklinePolicy::Mixed
    };

    let emphasis_style = if wins(bold_content_lines) {
        EmphasisStyle::MarkdownBold
    } else {
        EmphasisStyle::None
    };

    let scene_headers = scene_examples
        .iter()
        .filter(|(s, _)| *s == scene_header_style)
        .take(MAX_EXAMPLES)
        .map(|(_, l)| l.to_string())
        .collect();
    let dialogues = match dialogue_marker {
        DialogueMarker::RoleColon => colon_examples
            .iter()
            .take(MAX_EXAMPLES)
            .map(|l| l.to_string())
            .collect(),
        DialogueMarker::RoleNewline => name_examples
            .iter()
            .take(MAX_EXAMPLES)
            .map(|l| l.to_string())
            .collect(),
        DialogueMarker::Other => Vec::new(),
    };

    FormatProfile {
        scene_header_style,
        dialogue_marker,
        stage_direction_marker,
        blankline_policy,
        emphasis_style,
        examples: ProfileExamples {
            scene_headers,
            dialogues,
        },
    }
}

/// Renders a profile as the plain-language contract block embedded in
/// generation prompts. Deterministic: the same profile always yields a
/// byte-identical contract, and distinct profiles yield distinct text.
pub fn render_contract(profile: &FormatProfile) -> String {
    let mut out = String::from("Format Contract: reproduce every convention below exactly.\n");

    out.push_str("- Scene headers: ");
    out.push_str(match profile.scene_header_style {
        SceneHeaderStyle::NumberBold => {
            "mark each scene with a bold-numbered header line like \"**3**, Location, Time\"."
        }
        SceneHeaderStyle::NumberDotMeta => {
            "number each scene header with a dot and metadata, like \"3. Location, Time, Interior\"."
        }
        SceneHeaderStyle::SceneWord => "introduce each scene with a \"Scene N\" header line.",
        SceneHeaderStyle::NumberedPlain => {
            "mark scene boundaries with a bare numbered line such as \"12.\"."
        }
        SceneHeaderStyle::Other => {
            "scene headers follow an idiosyncratic style; imitate the sample lines given below."
        }
        SceneHeaderStyle::None => "do not insert special scene header lines.",
    });
    out.push('\n');

    out.push_str("- Dialogue: ");
    out.push_str(match profile.dialogue_marker {
        DialogueMarker::RoleColon => {
            "write dialogue as \"Role: line\", with the speaker name, a colon, then the spoken line."
        }
        DialogueMarker::RoleNewline => {
            "put the speaker name alone on its own line, with the spoken line on the next line."
        }
        DialogueMarker::Other => {
            "dialogue marking is irregular; follow the layout of the surrounding text."
        }
    });
    out.push('\n');

    out.push_str("- Stage directions: ");
    out.push_str(match profile.stage_direction_marker {
        StageDirectionMarker::Triangle => "prefix each stage direction line with \"Δ \".",
        StageDirectionMarker::BlackTriangle => "prefix each stage direction line with \"▲ \".",
        StageDirectionMarker::Paren => {
            "write each stage direction as a full line enclosed in parentheses."
        }
        StageDirectionMarker::None => {
            "no dedicated stage direction marker; keep action in plain prose lines."
        }
    });
    out.push('\n');

    out.push_str("- Blank lines: ");
    out.push_str(match profile.blankline_policy {
        BlanklinePolicy::SingleNewline => {
            "separate lines with single newlines; do not insert blank lines between them."
        }
        BlanklinePolicy::DoubleNewline => "leave one blank line between blocks.",
        BlanklinePolicy::Mixed => "blank-line spacing is mixed; vary it as the text does.",
    });
    out.push('\n');

    out.push_str("- Emphasis: ");
    out.push_str(match profile.emphasis_style {
        EmphasisStyle::MarkdownBold => "use paired ** markers for emphasis where the text does.",
        EmphasisStyle::None => "do not use ** emphasis markers.",
    });
    out.push('\n');

    let mut sample_lines = Vec::new();
    for line in profile.examples.scene_headers.iter().take(2) {
        sample_lines.push(format!("  scene header: {line}"));
    }
    for line in profile.examples.dialogues.iter().take(2) {
        sample_lines.push(format!("  dialogue: {line}"));
    }
    if !sample_lines.is_empty() {
        out.push_str("Sample lines from the source script:\n");
        for l in &sample_lines {
            out.push_str(l);
            out.push('\n');
        }
    }
    out
}

/// Extracts the five structural features of a text, using the profile
/// to pick the active detectors. Empty text yields the all-zero vector.
///
/// Each line contributes to exactly one ratio class. Under the
/// role-newline convention only the speaker-name line counts as
/// dialogue; the spoken line beneath it stays in the other class.
pub fn extract_features(text: &str, profile: &FormatProfile) -> StructuralFeatures {
    let lines: Vec<&str> = text.lines().collect();
    let total = lines.len();
    if total == 0 {
        return StructuralFeatures::default();
    }

    let mut scene = 0usize;
    let mut dialogue = 0usize;
    let mut blank = 0usize;
    let mut stage = 0usize;
    let mut bold_pairs = 0usize;

    let d = detectors();
    for (i, line) in lines.iter().enumerate() {
        bold_pairs += d.bold_pair.find_iter(line).count();
        let label = classify_line(line, Some(profile));
        match label.class {
            LineClass::SceneHeader => scene += 1,
            LineClass::StageDirection => stage += 1,
            LineClass::Dialogue => {
                // role-newline needs the next line to actually carry speech
                if profile.dialogue_marker == DialogueMarker::RoleNewline {
                    match lines.get(i + 1) {
                        Some(next) if !is_blank(next) && !is_name_like(next) => dialogue += 1,
                        _ => {}
                    }
                } else {
                    dialogue += 1;
                }
            }
            LineClass::Blank => blank += 1,
            LineClass::Other => {}
        }
    }

    let n = total as f64;
    StructuralFeatures {
        scene_ratio: scene as f64 / n,
        dialogue_ratio: dialogue as f64 / n,
        blank_ratio: blank as f64 / n,
        stage_ratio: stage as f64 / n,
        bold_density: bold_pairs as f64 / n,
    }
}
