//! Acceptance suite for the core library. Each test covers one numbered
//! criterion and prints a single PASS/FAIL line (visible with
//! `cargo test --test acceptance -- --nocapture`). Criterion 9, the
//! end-to-end offline smoke run, lives in the CLI crate next to the
//! binary it drives.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use coda_core::format::{
    detect_profile, supported_profiles, synthesize_script, FormatProfile, StructuralFeatures,
};
use coda_core::genclient::{
    classify_validity, continue_script, default_blacklist, wrap_envelope, BackendError,
    ChunkRecord, ChunkStatus, GenerationConfig, GenerationSample, MockBackend, SampleKey, Validity,
};
use coda_core::metrics::{composite, lcs_length, rouge_l, structural_similarity, CompositeWeights};
use coda_core::stats::{
    align_pairs, cohens_d, confidence_interval_z, effect_band, paired_ttest, percent_cell,
    shapiro_wilk, EffectBand, SampleMetrics,
};

fn verdict(criterion: &str, ok: bool) {
    println!(
        "acceptance {}: {}",
        criterion,
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "acceptance criterion failed: {criterion}");
}

/// xorshift64, enough randomness for fuzz inputs without a dependency.
struct Rng(u64);

impl Rng {
    fn next(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }
}

#[test]
fn criterion_1_composite_anchor_values() {
    let w = CompositeWeights::default();
    // boundary arithmetic lands within 1e-9 of the 5e-5 budget, so the
    // comparison carries that slack explicitly
    let tol = 5.0e-5 + 1e-9;
    let a = composite(0.2114, 0.9299, 44.79, &w).unwrap();
    let b = composite(0.2230, 0.7473, 25.72, &w).unwrap();
    let ok = (a - 0.4979).abs() <= tol && (b - 0.3906).abs() <= tol;
    verdict("1 composite anchor values", ok);
}

#[test]
fn criterion_2_effect_band_fidelity() {
    let reported = [
        (-0.43, EffectBand::Small),
        (0.46, EffectBand::Small),
        (1.04, EffectBand::Large),
        (0.84, EffectBand::Large),
    ];
    let mut ok = reported.iter().all(|(d, band)| effect_band(*d) == *band);

    // step boundaries, probed from both sides at 1e-9
    let edges = [
        (0.2, EffectBand::Negligible, EffectBand::Small),
        (0.5, EffectBand::Small, EffectBand::Medium),
        (0.8, EffectBand::Medium, EffectBand::Large),
    ];
    for (edge, below, at) in edges {
        for sign in [1.0, -1.0] {
            ok &= effect_band(sign * (edge - 1e-9)) == below;
            ok &= effect_band(sign * edge) == at;
            ok &= effect_band(sign * (edge + 1e-9)) == at;
        }
    }
    verdict("2 effect band fidelity", ok);
}

/// Longest subsequence of `a` that also appears in `b`, by enumerating
/// every subsequence of `a`. Greedy two-pointer matching is exact for a
/// fixed candidate, so the maximum over all masks is the LCS.
fn lcs_exhaustive(a: &[u8], b: &[u8]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1u32 << a.len()) {
        let mut bi = 0;
        let mut len = 0;
        let mut feasible = true;
        for (i, tok) in a.iter().enumerate() {
            if mask & (1 << i) == 0 {
                continue;
            }
            while bi < b.len() && b[bi] != *tok {
                bi += 1;
            }
            if bi == b.len() {
                feasible = false;
                break;
            }
            bi += 1;
            len += 1;
        }
        if feasible && len > best {
            best = len;
        }
    }
    best
}

#[test]
fn criterion_3_lcs_matches_exhaustive_oracle() {
    let start = Instant::now();
    let mut rng = Rng(0x5eed_0003);
    let mut ok = true;
    for _ in 0..1000 {
        let la = rng.below(13) as usize;
        let lb = rng.below(13) as usize;
        // alphabet of four symbols keeps overlaps frequent
        let a: Vec<u8> = (0..la).map(|_| rng.below(4) as u8).collect();
        let b: Vec<u8> = (0..lb).map(|_| rng.below(4) as u8).collect();
        ok &= lcs_length(&a, &b) == lcs_exhaustive(&a, &b);
    }

    let toks = |ws: &[&str]| -> Vec<String> { ws.iter().map(|s| s.to_string()).collect() };
    let same = toks(&["甲", "乙", "丙", "丁"]);
    let identity = rouge_l(&same, &same);
    ok &= identity.precision == 1.0 && identity.recall == 1.0 && identity.f1 == 1.0;
    let disjoint = rouge_l(&toks(&["a", "b"]), &toks(&["c", "d"]));
    ok &= disjoint.precision == 0.0 && disjoint.recall == 0.0 && disjoint.f1 == 0.0;

    ok &= start.elapsed() < Duration::from_secs(5);
    verdict("3 lcs exhaustive oracle", ok);
}

#[test]
fn criterion_4_structural_similarity_properties() {
    let start = Instant::now();
    let mut rng = Rng(0x5eed_0004);
    let rand_features = |rng: &mut Rng, scale: f64| StructuralFeatures {
        scene_ratio: rng.unit() * scale,
        dialogue_ratio: rng.unit() * scale,
        blank_ratio: rng.unit() * scale,
        stage_ratio: rng.unit() * scale,
        bold_density: rng.unit() * scale,
    };

    let mut ok = true;
    for _ in 0..500 {
        let f = rand_features(&mut rng, 1.0);
        ok &= structural_similarity(&f, &f) == 1.0;
    }
    for _ in 0..500 {
        let g = rand_features(&mut rng, 1.5);
        let r = rand_features(&mut rng, 1.5);
        let s = structural_similarity(&g, &r);
        ok &= (0.0..=1.0).contains(&s);
    }

    let zero = StructuralFeatures {
        scene_ratio: 0.0,
        dialogue_ratio: 0.0,
        blank_ratio: 0.0,
        stage_ratio: 0.0,
        bold_density: 0.0,
    };
    ok &= structural_similarity(&zero, &zero) == 1.0;
    let off = StructuralFeatures {
        scene_ratio: 0.3,
        ..zero
    };
    ok &= structural_similarity(&off, &zero) == 0.0;

    // Σ|diff| = 0.2 against Σ|ref| = 0.8
    let reference = StructuralFeatures {
        scene_ratio: 0.2,
        dialogue_ratio: 0.2,
        blank_ratio: 0.2,
        stage_ratio: 0.2,
        bold_density: 0.0,
    };
    let generated = StructuralFeatures {
        scene_ratio: 0.25,
        dialogue_ratio: 0.25,
        blank_ratio: 0.25,
        stage_ratio: 0.25,
        bold_density: 0.0,
    };
    ok &= (structural_similarity(&generated, &reference) - 0.750).abs() <= 1e-3;

    ok &= start.elapsed() < Duration::from_secs(1);
    verdict("4 structural similarity properties", ok);
}

#[test]
fn criterion_5_profile_round_trip() {
    let start = Instant::now();
    let grid = supported_profiles();
    let mut ok = grid.len() >= 60;
    let same_conventions = |a: &FormatProfile, b: &FormatProfile| {
        a.scene_header_style == b.scene_header_style
            && a.dialogue_marker == b.dialogue_marker
            && a.stage_direction_marker == b.stage_direction_marker
            && a.blankline_policy == b.blankline_policy
            && a.emphasis_style == b.emphasis_style
    };
    for profile in &grid {
        let script = synthesize_script(profile, 60, 0);
        let recovered = detect_profile(&script);
        ok &= same_conventions(profile, &recovered);
    }
    ok &= start.elapsed() < Duration::from_secs(5);
    verdict("5 profile round trip", ok);
}

fn chunk_of(ch: char, chars: usize) -> String {
    std::iter::repeat_n(ch, chars).collect()
}

fn extract_delimited<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let from = text.find(open)? + open.len();
    let until = text[from..].find(close)? + from;
    Some(&text[from..until])
}

fn run_scripted(
    upper: &str,
    script: Vec<Result<String, BackendError>>,
) -> (GenerationSample, MockBackend) {
    let backend = MockBackend::scripted(script);
    let key = SampleKey {
        model_id: "mock".into(),
        film_id: "film".into(),
        sample_idx: 0,
    };
    let config = GenerationConfig::default();
    let sample = continue_script(&key, upper, "contract", &backend, &config).unwrap();
    (sample, backend)
}

#[test]
fn criterion_6_chunk_loop_state_machine() {
    let start = Instant::now();
    let mut ok = true;

    // (a) 4,000-char chunks against a 20,000-char first half stop after
    // exactly three calls, and (c) every continuation call carries the
    // last 4,000 accumulated chars as context
    let upper = chunk_of('上', 20_000);
    let chunks = [
        chunk_of('一', 4_000),
        chunk_of('二', 4_000),
        chunk_of('三', 4_000),
    ];
    let script: Vec<_> = chunks
        .iter()
        .map(|c| Ok(wrap_envelope(c)))
        .chain(std::iter::once(Ok(wrap_envelope("unreachable"))))
        .collect();
    let (sample, backend) = run_scripted(&upper, script);
    ok &= sample.chunk_trace.len() == 3;
    ok &= sample.validity == Validity::Valid;
    let requests = backend.requests();
    ok &= requests.len() == 3;
    ok &= extract_delimited(&requests[0].user, "<<<CONTEXT\n", "\nCONTEXT>>>")
        == Some(upper.as_str());
    ok &=
        extract_delimited(&requests[1].user, "<<<TAIL\n", "\nTAIL>>>") == Some(chunks[0].as_str());
    ok &=
        extract_delimited(&requests[2].user, "<<<TAIL\n", "\nTAIL>>>") == Some(chunks[1].as_str());

    // (b) the loop never exceeds ten calls even when the target minimum
    // stays out of reach
    let dribble: Vec<_> = (0..15)
        .map(|_| Ok(wrap_envelope(&chunk_of('点', 500))))
        .collect();
    let (sample, _) = run_scripted(&upper, dribble);
    ok &= sample.chunk_trace.len() == 10;
    ok &= sample.validity == Validity::TooShort;

    // (d) validity taxonomy
    let meta_upper = chunk_of('上', 10_000); // window: 6,000-9,000 chars
    let mut meta_text = String::from("Here is the continuation of the script: ");
    meta_text.push_str(&chunk_of('戏', 6_500));
    let (sample, _) = run_scripted(&meta_upper, vec![Ok(wrap_envelope(&meta_text))]);
    ok &= sample.validity == Validity::MetaDiscourse;

    let fail_cases: Vec<(Result<String, BackendError>, Validity)> = vec![
        (
            Err(BackendError::Http {
                status: 524,
                message: "origin timeout".into(),
            }),
            Validity::ApiTimeout,
        ),
        (Err(BackendError::Timeout), Validity::ApiTimeout),
        (
            Err(BackendError::Http {
                status: 400,
                message: "content policy".into(),
            }),
            Validity::ApiModeration,
        ),
        (
            Err(BackendError::Http {
                status: 503,
                message: "unavailable".into(),
            }),
            Validity::ApiOther,
        ),
        (
            Err(BackendError::Transport("connection reset".into())),
            Validity::ApiOther,
        ),
        (Ok("no envelope here".into()), Validity::ParseFailure),
    ];
    for (response, expected) in fail_cases {
        let (sample, _) = run_scripted(&meta_upper, vec![response]);
        ok &= sample.validity == expected;
    }

    // overshoot guard: 5,800 accumulated plus a minimum chunk would pass
    // 9,000, so the loop stops and the sample is short
    let near: Vec<_> = (0..2)
        .map(|_| Ok(wrap_envelope(&chunk_of('近', 5_800))))
        .collect();
    let (sample, _) = run_scripted(&meta_upper, near);
    ok &= sample.chunk_trace.len() == 1;
    ok &= sample.validity == Validity::TooShort;

    // length window boundaries via direct classification
    let config = GenerationConfig::default();
    let blacklist = default_blacklist();
    let classify_len = |chars: usize| {
        let sample = GenerationSample {
            model_id: "mock".into(),
            film_id: "film".into(),
            sample_idx: 0,
            text: chunk_of('戏', chars),
            chunk_trace: vec![ChunkRecord {
                call: 1,
                chars,
                status: ChunkStatus::Ok,
            }],
            validity: Validity::Valid,
        };
        classify_validity(&sample, 10_000, &config, &blacklist)
    };
    ok &= classify_len(5_999) == Validity::TooShort;
    ok &= classify_len(6_000) == Validity::Valid;
    ok &= classify_len(9_000) == Validity::Valid;
    ok &= classify_len(9_001) == Validity::TooLong;

    ok &= start.elapsed() < Duration::from_secs(2);
    verdict("6 chunk loop state machine", ok);
}

#[test]
fn criterion_7_statistics_oracle() {
    let mut ok = true;

    let base = [1.0, 2.0, 3.0];
    ok &= cohens_d(&base).unwrap() == 2.0;
    let t = paired_ttest(&base).unwrap();
    ok &= (t.t - 3.4641).abs() <= 1e-3;
    let (lo, hi) = confidence_interval_z(&base).unwrap();
    ok &= (lo - 0.8684).abs() <= 1e-3 && (hi - 3.1316).abs() <= 1e-3;

    // frozen oracle vectors: (diffs, t, p, d), checked at 1e-3 relative
    let t_fixtures: [(&[f64], f64, f64, f64); 5] = [
        (&[1.0, 2.0, 3.0], 3.464101615, 0.07417990023, 2.0),
        (
            &[0.5, -0.25, 1.75, 0.0, 2.5, -1.0, 0.75],
            1.341176792,
            0.2283999258,
            0.5069171793,
        ),
        (
            &[3.2, 2.9, 3.7, 3.1, 2.8, 3.3, 3.0, 3.5, 2.6, 3.4],
            29.516841,
            2.8706602e-10,
            9.334044688,
        ),
        (
            &[
                0.01, -0.02, 0.03, 0.005, -0.015, 0.025, -0.005, 0.02, -0.01, 0.015, 0.0, 0.01,
            ],
            1.181818182,
            0.2621966624,
            0.3411615227,
        ),
        (
            &[-1.5, -2.0, -0.5, -1.0, -2.5, -1.75, -0.25, -1.25],
            -5.032769329,
            0.001508668711,
            -1.77935266,
        ),
    ];
    let close =
        |actual: f64, expected: f64| (actual - expected).abs() <= 1e-3 * expected.abs().max(1.0);
    for (diffs, t_exp, p_exp, d_exp) in t_fixtures {
        let t = paired_ttest(diffs).unwrap();
        ok &= close(t.t, t_exp) && close(t.p, p_exp);
        ok &= close(cohens_d(diffs).unwrap(), d_exp);
    }

    // frozen oracle vectors: (sample, W, p)
    let sw_fixtures: [(&[f64], f64, f64); 3] = [
        (
            &[
                0.05, 0.0974, 0.1447, 0.1921, 0.2395, 0.2868, 0.3342, 0.3816, 0.4289, 0.4763,
                0.5237, 0.5711, 0.6184, 0.6658, 0.7132, 0.7605, 0.8079, 0.8553, 0.9026, 0.95,
            ],
            0.9603675849,
            0.5512188632,
        ),
        (
            &[
                1.8572, 0.4191, 0.6742, 0.1552, 0.3862, 0.2582, 0.6921, 1.2461, 1.7234, 1.0482,
                0.438, 1.212,
            ],
            0.9129451339,
            0.23268525,
        ),
        (
            &[0.1, -0.5, 0.3, 1.2, -0.8, 0.4, -0.2, 0.9],
            0.9797971854,
            0.9618936149,
        ),
    ];
    for (xs, w_exp, p_exp) in sw_fixtures {
        let r = shapiro_wilk(xs).unwrap();
        ok &= close(r.w, w_exp) && close(r.p_value, p_exp);
    }
    ok &= shapiro_wilk(&[1.0, 2.5, 3.1])
        .map(|r| close(r.w, 0.9423076923))
        .unwrap_or(false);

    // constant shift of both columns: integer data keeps the
    // cancellation exact, so every statistic matches bitwise
    let col_a = [12.0, 7.0, 19.0, 4.0, 15.0, 9.0];
    let col_b = [10.0, 8.0, 13.0, 5.0, 11.0, 6.0];
    let diffs: Vec<f64> = col_a.iter().zip(&col_b).map(|(a, b)| a - b).collect();
    let shifted: Vec<f64> = col_a
        .iter()
        .zip(&col_b)
        .map(|(a, b)| (a + 100.0) - (b + 100.0))
        .collect();
    let t1 = paired_ttest(&diffs).unwrap();
    let t2 = paired_ttest(&shifted).unwrap();
    ok &= t1.t == t2.t && t1.p == t2.p;
    ok &= cohens_d(&diffs).unwrap() == cohens_d(&shifted).unwrap();

    // swapping the columns negates the differences, flipping t and d
    let swapped: Vec<f64> = diffs.iter().map(|d| -d).collect();
    let t3 = paired_ttest(&swapped).unwrap();
    ok &= t3.t == -t1.t && t3.p == t1.p;
    ok &= cohens_d(&swapped).unwrap() == -cohens_d(&diffs).unwrap();

    verdict("7 statistics oracle", ok);
}

#[test]
fn criterion_8_pairing_semantics() {
    let sample = |film: u32, valid: bool| {
        let mut metrics = BTreeMap::new();
        metrics.insert("overall".to_string(), film as f64);
        SampleMetrics {
            film_id: format!("f{film:03}"),
            sample_idx: 0,
            valid,
            judged: valid,
            metrics,
        }
    };
    // 159 shared keys; side A drops films 0-1, side B drops films 2-14,
    // leaving 144 keys where both sides are usable
    let a: Vec<_> = (0..159).map(|film| sample(film, film >= 2)).collect();
    let b: Vec<_> = (0..159)
        .map(|film| sample(film, !(2..15).contains(&film)))
        .collect();
    let valid_a = a.iter().filter(|s| s.valid).count();
    let valid_b = b.iter().filter(|s| s.valid).count();

    let pairs = align_pairs(&a, &b).unwrap();
    let mut ok = valid_a == 157 && valid_b == 146;
    ok &= pairs.len() == 144;
    ok &= percent_cell(valid_a, 159) == "98.7%";
    ok &= percent_cell(valid_b, 159) == "91.8%";

    // disjoint and identical key sets
    let left: Vec<_> = (0..5).map(|film| sample(film, true)).collect();
    let right: Vec<_> = (5..10).map(|film| sample(film, true)).collect();
    ok &= align_pairs(&left, &right).unwrap().is_empty();
    ok &= align_pairs(&left, &left).unwrap().len() == 5;

    verdict("8 pairing semantics", ok);
}
