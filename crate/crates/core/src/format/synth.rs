//! Synthetic script generation for profile round-trip testing.
//!
//! [`synthesize_script`] renders a script that exhibits exactly the
//! conventions of a given [`FormatProfile`]; [`supported_profiles`]
//! enumerates the full grid of actively detectable profiles. Together
//! they back the detect(synthesize(p)) == p round-trip check.

use super::{
    BlanklinePolicy, DialogueMarker, EmphasisStyle, FormatProfile, ProfileExamples,
    SceneHeaderStyle, StageDirectionMarker,
};

const ROLES: [&str; 4] = ["Lin Hai", "Mother Xu", "Qin Lan", "Old Wei"];

const SPEECHES: [&str; 6] = [
    "The ledger was already open when I arrived, I swear it.",
    "You keep saying that, but the gate was bolted from inside.",
    "Give me until dawn and I will bring the seal back.",
    "Nobody crosses the old bridge after the third bell.",
    "If the letter is real, the magistrate knew all along.",
    "Put the lantern down and listen to me carefully.",
];

const ACTIONS: [&str; 4] = [
    "He pushes the door open and steps into the rain.",
    "She folds the letter and hides it in her sleeve.",
    "The candle gutters; shadows jump along the wall.",
    "A horse whinnies somewhere beyond the courtyard wall.",
];

const EMPHASIS_LINES: [&str; 3] = [
    "The **bronze mirror** on the table has cracked.",
    "Someone has taken the **jade tally** from its case.",
    "Only the **night watch** knows the second password.",
];

const PLAIN_LINES: [&str; 3] = [
    "Rain keeps falling over the tiled roofs.",
    "The market noise fades as the lamps go out.",
    "Far off, the river bells begin to toll.",
];

fn scene_header(style: SceneHeaderStyle, idx: usize) -> Option<String> {
    let places = ["Courtyard", "Tea House", "River Pier", "Archive Hall"];
    let place = places[idx % places.len()];
    match style {
        SceneHeaderStyle::NumberBold => Some(format!("**{}**, {}, Night", idx + 1, place)),
        SceneHeaderStyle::NumberDotMeta => Some(format!("{}. {}, Night, Interior", idx + 1, place)),
        SceneHeaderStyle::SceneWord => Some(format!("Scene {} {}", idx + 1, place)),
        SceneHeaderStyle::NumberedPlain => Some(format!("{}.", idx + 1)),
        SceneHeaderStyle::Other | SceneHeaderStyle::None => None,
    }
}

fn stage_line(marker: StageDirectionMarker, idx: usize) -> Option<String> {
    let action = ACTIONS[idx % ACTIONS.len()];
    match marker {
        StageDirectionMarker::Triangle => Some(format!("Δ {action}")),
        StageDirectionMarker::BlackTriangle => Some(format!("▲ {action}")),
        StageDirectionMarker::Paren => Some(format!("({action})")),
        StageDirectionMarker::None => None,
    }
}

/// Renders a synthetic script exhibiting exactly the conventions of
/// `profile`, at least `min_lines` physical lines long. `seed_offset`
/// rotates the canned phrase tables so distinct offsets give distinct
/// texts with the same profile.
pub fn synthesize_script(profile: &FormatProfile, min_lines: usize, seed_offset: usize) -> String {
    // a block is the unit separated by blank lines under the
    // double-newline policy; role-newline dialogue keeps name and
    // speech adjacent inside one block
    let mut blocks: Vec<String> = Vec::new();
    let mut line_count = 0usize;
    let mut unit = 0usize;

    while line_count < min_lines.max(1) {
        let idx = unit + seed_offset;
        if let Some(h) = scene_header(profile.scene_header_style, idx) {
            line_count += 1;
            blocks.push(h);
        }
        if let Some(s) = stage_line(profile.stage_direction_marker, idx) {
            line_count += 1;
            blocks.push(s);
        }
        for turn in 0..3 {
            let role = ROLES[(idx + turn) % ROLES.len()];
            let speech = SPEECHES[(idx * 3 + turn) % SPEECHES.len()];
            match profile.dialogue_marker {
                DialogueMarker::RoleColon => {
                    line_count += 1;
                    blocks.push(format!("{role}: {speech}"));
                }
                DialogueMarker::RoleNewline => {
                    line_count += 2;
                    blocks.push(format!("{role}\n{speech}"));
                }
                DialogueMarker::Other => {
                    line_count += 1;
                    blocks.push(PLAIN_LINES[(idx + turn) % PLAIN_LINES.len()].to_string());
                }
            }
        }
        if profile.emphasis_style == EmphasisStyle::MarkdownBold {
            line_count += 1;
            blocks.push(EMPHASIS_LINES[idx % EMPHASIS_LINES.len()].to_string());
        }
        unit += 1;
    }

    match profile.blankline_policy {
        BlanklinePolicy::SingleNewline => blocks.join("\n"),
        BlanklinePolicy::DoubleNewline => blocks.join("\n\n"),
        BlanklinePolicy::Mixed => {
            // alternate separators so the blank ratio lands between the
            // single and double thresholds
            let mut out = String::new();
            for (i, b) in blocks.iter().enumerate() {
                if i > 0 {
                    out.push_str(if i % 4 == 0 { "\n\n" } else { "\n" });
                }
                out.push_str(b);
            }
            out
        }
    }
}

/// The grid of profiles the detector can actively recognize: every
/// combination of concrete scene header style (or none), the two
/// dialogue conventions, every stage marker (or none), the single and
/// double blank-line policies, and both emphasis settings.
pub fn supported_profiles() -> Vec<FormatProfile> {
    let scenes = [
        SceneHeaderStyle::NumberBold,
        SceneHeaderStyle::NumberDotMeta,
        SceneHeaderStyle::SceneWord,
        SceneHeaderStyle::NumberedPlain,
        SceneHeaderStyle::None,
    ];
    let dialogues = [DialogueMarker::RoleColon, DialogueMarker::RoleNewline];
    let stages = [
        StageDirectionMarker::Triangle,
        StageDirectionMarker::BlackTriangle,
        StageDirectionMarker::Paren,
        StageDirectionMarker::None,
    ];
    let blanks = [
        BlanklinePolicy::SingleNewline,
        BlanklinePolicy::DoubleNewline,
    ];
    let emphases = [EmphasisStyle::MarkdownBold, EmphasisStyle::None];

    let mut out = Vec::new();
    for &scene in &scenes {
        for &dialogue in &dialogues {
            for &stage in &stages {
                for &blank in &blanks {
                    for &emphasis in &emphases {
                        out.push(FormatProfile {
                            scene_header_style: scene,
                            dialogue_marker: dialogue,
                            stage_direction_marker: stage,
                            blankline_policy: blank,
                            emphasis_style: emphasis,
                            examples: ProfileExamples::default(),
                        });
                    }
                }
            }
        }
    }
    out
}
