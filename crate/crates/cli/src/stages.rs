//! The seven pipeline stages behind the subcommands. Every stage is
//! gated on its upstream stage through the manifest, skips itself when
//! already complete (unless forced), and rewrites its artifact sorted
//! by key so reruns are byte-stable.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use coda_core::corpus::{self, CleanOptions, CorpusError, DropReason, FilmRecord, QualityDecision};
use coda_core::format::{detect_profile, extract_features, render_contract, FormatProfile};
use coda_core::genclient::{
    classify_validity, continue_script, default_blacklist, GenerationSample, RateLimiter,
    SampleKey, Validity,
};
use coda_core::judge::{judge_sample, prompt_template_hash, JudgeError, JudgeVerdict};
use coda_core::metrics::{composite, rouge_l, structural_similarity, tokenize, ScoreCard};
use coda_core::stats::{
    align_pairs, descriptives, paired_comparison, percent_cell, Descriptives, PairedTestResult,
    SampleMetrics,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{build_gen_backend, build_judge_backend, RunConfig};
use crate::errors::CliError;
use crate::io;
use crate::manifest::RunManifest;
use crate::report;

pub struct Ctx {
    pub config: RunConfig,
    pub run_dir: PathBuf,
    pub force: bool,
    pub workers: usize,
    pub rate_limit: Option<f64>,
}

/// One verdict row of verdicts-<model>.jsonl. The verdict fields are
/// flattened in, so each line carries the six scores at top level next
/// to the keys identifying the sample and the prompt template version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub model_id: String,
    pub film_id: String,
    pub sample_idx: u32,
    pub judge_id: String,
    pub prompt_template_hash: String,
    #[serde(flatten)]
    pub verdict: JudgeVerdict,
}

/// Paired-test metrics, in report order.
const PAIRED_METRICS: [&str; 4] = ["rouge_f1", "struct_sim", "overall", "composite"];

// stage ordering used to invalidate downstream completion flags when
// an upstream stage actually reruns
fn stage_rank(base: &str) -> u8 {
    match base {
        "ingest" => 0,
        "profile" => 1,
        "generate" => 2,
        "judge" => 3,
        "score" => 4,
        "stats" => 5,
        _ => 6,
    }
}

fn split_stage(key: &str) -> (&str, Option<&str>) {
    match key.split_once(':') {
        Some((base, model)) => (base, Some(model)),
        None => (key, None),
    }
}

fn invalidate_downstream(manifest: &mut RunManifest, stage: &str) {
    let (base, model) = split_stage(stage);
    let rank = stage_rank(base);
    let keys: Vec<String> = manifest.stages.keys().cloned().collect();
    for key in keys {
        let (kb, km) = split_stage(&key);
        if stage_rank(kb) <= rank {
            continue;
        }
        // a model-scoped stage only invalidates its own model's chain;
        // unscoped stages (stats, report) join both, so they always go
        let same_chain = match (model, km) {
            (Some(m), Some(k)) => m == k,
            _ => true,
        };
        if same_chain {
            manifest.stages.insert(key, false);
        }
    }
}

/// Runs `each` over the jobs across `workers` threads, feeding every
/// result through `sink` on the coordinating thread as it arrives.
/// Returns results in job order.
fn run_parallel<J, R>(
    jobs: &[J],
    workers: usize,
    each: impl Fn(&J) -> R + Sync,
    mut sink: impl FnMut(&R) -> Result<(), CliError>,
) -> Result<Vec<R>, CliError>
where
    J: Sync,
    R: Send,
{
    if jobs.is_empty() {
        return Ok(Vec::new());
    }
    let threads = workers.clamp(1, jobs.len());
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, R)>();
    let mut slots: Vec<Option<R>> = (0..jobs.len()).map(|_| None).collect();
    let mut sink_err: Option<CliError> = None;

    std::thread::scope(|scope| {
        for _ in 0..threads {
            let tx = tx.clone();
            let next = &next;
            let each = &each;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() {
                    break;
                }
                if tx.send((i, each(&jobs[i]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        while let Ok((i, result)) = rx.recv() {
            if sink_err.is_none() {
                if let Err(e) = sink(&result) {
                    sink_err = Some(e);
                }
            }
            slots[i] = Some(result);
        }
    });

    if let Some(e) = sink_err {
        return Err(e);
    }
    Ok(slots
        .into_iter()
        .map(|s| s.expect("every job delivers a result"))
        .collect())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

fn corpus_err(e: CorpusError) -> CliError {
    CliError::other(e.to_string())
}

fn index_path(run_dir: &Path) -> PathBuf {
    run_dir.join("index.jsonl")
}

fn samples_path(run_dir: &Path, model: &str) -> PathBuf {
    run_dir.join(format!("samples-{model}.jsonl"))
}

fn scores_path(run_dir: &Path, model: &str) -> PathBuf {
    run_dir.join(format!("scores-{model}.jsonl"))
}

fn verdicts_path(run_dir: &Path, model: &str) -> PathBuf {
    run_dir.join(format!("verdicts-{model}.jsonl"))
}

fn load_index(run_dir: &Path) -> Result<Vec<FilmRecord>, CliError> {
    corpus::parse_index(&index_path(run_dir)).map_err(corpus_err)
}

fn read_film_file(run_dir: &Path, rel: &str) -> Result<String, CliError> {
    io::read_to_string(&run_dir.join(rel))
}

fn load_profile(run_dir: &Path, record: &FilmRecord) -> Result<FormatProfile, CliError> {
    io::read_pretty_json(&run_dir.join(&record.profile_path))
}

fn merged_blacklist(config: &RunConfig) -> Result<Vec<String>, CliError> {
    let mut list = default_blacklist();
    if let Some(path) = &config.blacklist_path {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            CliError::config(format!("cannot read blacklist {}: {e}", path.display()))
        })?;
        list.extend(
            raw.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string),
        );
    }
    Ok(list)
}

// ---------------------------------------------------------------- ingest

fn parse_stem(stem: &str) -> (String, Option<u32>, Option<String>) {
    let parts: Vec<&str> = stem.split("__").collect();
    let title = parts[0].replace('_', " ");
    let year = parts.get(1).and_then(|y| y.parse().ok());
    let genre = parts.get(2).map(|g| g.replace('_', " "));
    (title, year, genre)
}

fn film_id_from(title_part: &str) -> String {
    let mut id = String::new();
    for c in title_part.chars() {
        if c.is_ascii_alphanumeric() {
            id.push(c.to_ascii_lowercase());
        } else if c.is_alphanumeric() {
            id.push(c);
        } else if !id.ends_with('_') && !id.is_empty() {
            id.push('_');
        }
    }
    id.trim_end_matches('_').to_string()
}

pub fn ingest(ctx: &Ctx) -> Result<(), CliError> {
    let run_dir = &ctx.run_dir;
    let mut manifest = RunManifest::load_or_create(run_dir, &ctx.config)?;
    if manifest.is_done("ingest") && !ctx.force {
        info!("ingest already complete; use --force to redo");
        return Ok(());
    }
    invalidate_downstream(&mut manifest, "ingest");
    manifest.save(run_dir)?;

    let dir = &ctx.config.corpus_dir;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::config(format!("cannot read corpus dir {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| !n.starts_with('.'))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::config(format!(
            "corpus directory {} contains no files",
            dir.display()
        )));
    }

    std::fs::create_dir_all(run_dir.join("films"))
        .map_err(|e| CliError::other(format!("cannot create films dir: {e}")))?;

    let clean_opts = CleanOptions {
        declared_encoding: ctx.config.encoding.clone(),
        ..CleanOptions::default()
    };
    let mut records: Vec<FilmRecord> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut dropped = 0usize;
    for path in &files {
        let display = path.display();
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let (title, year, genre) = parse_stem(stem);
        let film_id = film_id_from(&title);
        if film_id.is_empty() {
            warn!("skipping {display}: stem yields an empty film id");
            dropped += 1;
            continue;
        }
        if !seen.insert(film_id.clone()) {
            return Err(CliError::config(format!(
                "duplicate film id `{film_id}` from {display}"
            )));
        }
        let raw = std::fs::read(path)
            .map_err(|e| CliError::other(format!("cannot read {display}: {e}")))?;
        let cleaned = match corpus::clean_text(&raw, &clean_opts) {
            Ok(t) => t,
            Err(e) => {
                warn!("skipping {display}: {e}");
                dropped += 1;
                continue;
            }
        };
        let (upper, lower) = match corpus::split_halves(&cleaned, ctx.config.split_ratio) {
            Ok(pair) => pair,
            Err(e) => {
                warn!("skipping {display}: {e}");
                dropped += 1;
                continue;
            }
        };
        let record = FilmRecord {
            film_id: film_id.clone(),
            title,
            year,
            genre,
            upper_path: format!("films/{film_id}.upper.txt"),
            lower_path: format!("films/{film_id}.lower.txt"),
            upper_chars: upper.chars().count(),
            lower_chars: lower.chars().count(),
            profile_path: format!("profiles/{film_id}.json"),
            contract_path: format!("contracts/{film_id}.txt"),
        };
        io::write_atomic(&run_dir.join(&record.upper_path), upper.as_bytes())?;
        io::write_atomic(&run_dir.join(&record.lower_path), lower.as_bytes())?;
        match corpus::quality_filter(&record, run_dir, ctx.config.min_half_chars)
            .map_err(corpus_err)?
        {
            QualityDecision::Keep => records.push(record),
            QualityDecision::Drop(reason) => {
                let why = match reason {
                    DropReason::Incomplete => "incomplete (an empty half)",
                    DropReason::TooShort => "a half below the character floor",
                };
                info!("dropped {film_id}: {why}");
                dropped += 1;
            }
        }
    }
    if records.is_empty() {
        return Err(CliError::config(format!(
            "no films survived ingest from {} ({} dropped)",
            dir.display(),
            dropped
        )));
    }

    corpus::build_index(&records, &index_path(run_dir)).map_err(corpus_err)?;
    let index_bytes = std::fs::read(index_path(run_dir))
        .map_err(|e| CliError::other(format!("cannot reread index: {e}")))?;
    manifest.index_sha256 = Some(sha256_hex(&index_bytes));

    let mean = |xs: &[usize]| xs.iter().sum::<usize>() as f64 / xs.len() as f64;
    let uppers: Vec<usize> = records.iter().map(|r| r.upper_chars).collect();
    let lowers: Vec<usize> = records.iter().map(|r| r.lower_chars).collect();
    println!("corpus summary");
    println!("  films indexed: {} (dropped: {dropped})", records.len());
    println!(
        "  upper chars: mean {:.1}, min {}, max {}",
        mean(&uppers),
        uppers.iter().min().unwrap(),
        uppers.iter().max().unwrap()
    );
    println!(
        "  lower chars: mean {:.1}, min {}, max {}",
        mean(&lowers),
        lowers.iter().min().unwrap(),
        lowers.iter().max().unwrap()
    );

    manifest.mark_done("ingest");
    manifest.save(run_dir)
}

// --------------------------------------------------------------- profile

pub fn profile(ctx: &Ctx) -> Result<(), CliError> {
    let run_dir = &ctx.run_dir;
    let mut manifest = RunManifest::load_or_create(run_dir, &ctx.config)?;
    manifest.require("profile", "ingest")?;
    if manifest.is_done("profile") && !ctx.force {
        info!("profile already complete; use --force to redo");
        return Ok(());
    }
    invalidate_downstream(&mut manifest, "profile");
    manifest.save(run_dir)?;

    for sub in ["profiles", "contracts"] {
        std::fs::create_dir_all(run_dir.join(sub))
            .map_err(|e| CliError::other(format!("cannot create {sub} dir: {e}")))?;
    }
    let records = load_index(run_dir)?;
    for record in &records {
        let upper = read_film_file(run_dir, &record.upper_path)?;
        let profile = detect_profile(&upper);
        io::write_pretty_json(&run_dir.join(&record.profile_path), &profile)?;
        let contract = render_contract(&profile);
        io::write_atomic(&run_dir.join(&record.contract_path), contract.as_bytes())?;
        info!(
            "profiled {}: scene={:?} dialogue={:?} stage={:?} blanks={:?} emphasis={:?}",
            record.film_id,
            profile.scene_header_style,
            profile.dialogue_marker,
            profile.stage_direction_marker,
            profile.blankline_policy,
            profile.emphasis_style
        );
    }
    println!("profiled {} films", records.len());
    manifest.mark_done("profile");
    manifest.save(run_dir)
}

// -------------------------------------------------------------- generate

fn is_api_failure(v: Validity) -> bool {
    matches!(
        v,
        Validity::ApiTimeout | Validity::ApiModeration | Validity::ApiOther
    )
}

pub fn generate(ctx: &Ctx, model_id: &str) -> Result<(), CliError> {
    let run_dir = &ctx.run_dir;
    let entry = ctx.config.model(model_id)?.clone();
    let mut manifest = RunManifest::load_or_create(run_dir, &ctx.config)?;
    let stage = format!("generate:{model_id}");
    manifest.require(&stage, "profile")?;
    if manifest.is_done(&stage) && !ctx.force {
        info!("generate for `{model_id}` already complete; use --force to redo");
        return Ok(());
    }
    invalidate_downstream(&mut manifest, &stage);
    manifest.save(run_dir)?;

    let records = load_index(run_dir)?;
    let path = samples_path(run_dir, model_id);
    if ctx.force && path.exists() {
        std::fs::remove_file(&path)
            .map_err(|e| CliError::other(format!("cannot clear {}: {e}", path.display())))?;
    }
    let mut existing: BTreeMap<(String, u32), GenerationSample> = BTreeMap::new();
    if path.exists() {
        for sample in io::load_jsonl::<GenerationSample>(&path)? {
            existing.insert((sample.film_id.clone(), sample.sample_idx), sample);
        }
    }

    // per-film prompt inputs, loaded once
    let mut inputs: BTreeMap<String, (String, String)> = BTreeMap::new();
    for record in &records {
        let upper = read_film_file(run_dir, &record.upper_path)?;
        let contract = read_film_file(run_dir, &record.contract_path)?;
        inputs.insert(record.film_id.clone(), (upper, contract));
    }

    let mut jobs: Vec<(String, u32)> = Vec::new();
    for record in &records {
        for idx in 0..ctx.config.samples_per_film {
            if !existing.contains_key(&(record.film_id.clone(), idx)) {
                jobs.push((record.film_id.clone(), idx));
            }
        }
    }
    info!(
        "generate `{model_id}`: {} of {} samples to run",
        jobs.len(),
        records.len() as u64 * u64::from(ctx.config.samples_per_film)
    );

    let backend = build_gen_backend(&entry)?;
    let limiter = ctx.rate_limit.map(RateLimiter::new);
    let blacklist = merged_blacklist(&ctx.config)?;
    let reclassify = ctx.config.blacklist_path.is_some();
    let gen_config = &ctx.config.generation;

    let results = run_parallel(
        &jobs,
        ctx.workers,
        |(film_id, idx)| -> Result<GenerationSample, CliError> {
            if let Some(l) = &limiter {
                l.acquire();
            }
            let (upper, contract) = &inputs[film_id];
            let key = SampleKey {
                model_id: model_id.to_string(),
                film_id: film_id.clone(),
                sample_idx: *idx,
            };
            let mut sample = continue_script(&key, upper, contract, backend.as_ref(), gen_config)
                .map_err(|e| CliError::other(format!("{film_id}#{idx}: {e}")))?;
            if reclassify {
                sample.validity =
                    classify_validity(&sample, upper.chars().count(), gen_config, &blacklist);
            }
            Ok(sample)
        },
        |result| match result {
            Ok(sample) => io::append_jsonl(&path, sample),
            Err(_) => Ok(()),
        },
    )?;

    let mut api_failures = 0usize;
    for result in results {
        let sample = result?;
        if is_api_failure(sample.validity) {
            api_failures += 1;
        }
        existing.insert((sample.film_id.clone(), sample.sample_idx), sample);
    }
    if !jobs.is_empty() && api_failures == jobs.len() {
        return Err(CliError::Transport(format!(
            "all {} generation requests against `{model_id}` failed; check the endpoint and key",
            jobs.len()
        )));
    }

    let rows: Vec<GenerationSample> = existing.into_values().collect();
    io::write_jsonl(&path, &rows)?;

    let theoretical = records.len() * ctx.config.samples_per_film as usize;
    let valid = rows
        .iter()
        .filter(|s| s.validity == Validity::Valid)
        .count();
    let mut by_class: BTreeMap<String, usize> = BTreeMap::new();
    for s in &rows {
        let label = serde_json::to_value(s.validity)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_else(|| format!("{:?}", s.validity));
        *by_class.entry(label).or_insert(0) += 1;
    }
    println!(
        "generated {} samples for `{model_id}`: {valid} valid of {theoretical} ({})",
        rows.len(),
        percent_cell(valid, theoretical)
    );
    for (label, n) in &by_class {
        println!("  {label}: {n}");
    }

    manifest.mark_done(&stage);
    manifest.save(run_dir)
}

// ----------------------------------------------------------------- judge

enum JudgeOutcome {
    Verdict(Box<VerdictRecord>),
    Failed { api: bool },
}

pub fn judge(ctx: &Ctx, model_id: &str) -> Result<(), CliError> {
    let run_dir = &ctx.run_dir;
    ctx.config.model(model_id)?;
    let mut manifest = RunManifest::load_or_create(run_dir, &ctx.config)?;
    let stage = format!("judge:{model_id}");
    manifest.require(&stage, &format!("generate:{model_id}"))?;
    if manifest.is_done(&stage) && !ctx.force {
        info!("judge for `{model_id}` already complete; use --force to redo");
        return Ok(());
    }
    invalidate_downstream(&mut manifest, &stage);
    manifest.save(run_dir)?;

    let records = load_index(run_dir)?;
    let samples: Vec<GenerationSample> = io::load_jsonl(&samples_path(run_dir, model_id))?;
    let path = verdicts_path(run_dir, model_id);
    if ctx.force && path.exists() {
        std::fs::remove_file(&path)
            .map_err(|e| CliError::other(format!("cannot clear {}: {e}", path.display())))?;
    }
    let mut existing: BTreeMap<(String, u32), VerdictRecord> = BTreeMap::new();
    if path.exists() {
        for record in io::load_jsonl::<VerdictRecord>(&path)? {
            existing.insert((record.film_id.clone(), record.sample_idx), record);
        }
    }

    let mut film_inputs: BTreeMap<String, (String, FormatProfile)> = BTreeMap::new();
    for record in &records {
        let lower = read_film_file(run_dir, &record.lower_path)?;
        let profile = load_profile(run_dir, record)?;
        film_inputs.insert(record.film_id.clone(), (lower, profile));
    }

    let jobs: Vec<&GenerationSample> = samples
        .iter()
        .filter(|s| s.validity == Validity::Valid)
        .filter(|s| !existing.contains_key(&(s.film_id.clone(), s.sample_idx)))
        .collect();
    info!("judge `{model_id}`: {} samples to score", jobs.len());

    let backend = build_judge_backend(&ctx.config.judge)?;
    let limiter = ctx.rate_limit.map(RateLimiter::new);
    let options = ctx.config.judge.options.clone();
    let template_hash = prompt_template_hash();
    let judge_id = ctx.config.judge.id.clone();

    let results = run_parallel(
        &jobs,
        ctx.workers,
        |sample| {
            if let Some(l) = &limiter {
                l.acquire();
            }
            let Some((lower, profile)) = film_inputs.get(&sample.film_id) else {
                warn!(
                    "sample {}#{} has no indexed film",
                    sample.film_id, sample.sample_idx
                );
                return JudgeOutcome::Failed { api: false };
            };
            match judge_sample(lower, &sample.text, profile, backend.as_ref(), &options) {
                Ok(verdict) => JudgeOutcome::Verdict(Box::new(VerdictRecord {
                    model_id: sample.model_id.clone(),
                    film_id: sample.film_id.clone(),
                    sample_idx: sample.sample_idx,
                    judge_id: judge_id.clone(),
                    prompt_template_hash: template_hash.clone(),
                    verdict,
                })),
                Err(JudgeError::Backend(e)) => {
                    warn!(
                        "judge call failed for {}#{}: {e}",
                        sample.film_id, sample.sample_idx
                    );
                    JudgeOutcome::Failed { api: true }
                }
                Err(e) => {
                    warn!(
                        "judge gave no usable verdict for {}#{}: {e}",
                        sample.film_id, sample.sample_idx
                    );
                    JudgeOutcome::Failed { api: false }
                }
            }
        },
        |outcome| match outcome {
            JudgeOutcome::Verdict(record) => io::append_jsonl(&path, record.as_ref()),
            JudgeOutcome::Failed { .. } => Ok(()),
        },
    )?;

    let mut api_failures = 0usize;
    let mut failed = 0usize;
    for outcome in results {
        match outcome {
            JudgeOutcome::Verdict(record) => {
                existing.insert((record.film_id.clone(), record.sample_idx), *record);
            }
            JudgeOutcome::Failed { api } => {
                failed += 1;
                if api {
                    api_failures += 1;
                }
            }
        }
    }
    if !jobs.is_empty() && api_failures == jobs.len() {
        return Err(CliError::Transport(format!(
            "all {} judge requests failed; check the endpoint and key",
            jobs.len()
        )));
    }

    let rows: Vec<VerdictRecord> = existing.into_values().collect();
    io::write_jsonl(&path, &rows)?;
    println!(
        "judged {} samples for `{model_id}` ({} new failures left unjudged)",
        rows.len(),
        failed
    );

    manifest.mark_done(&stage);
    manifest.save(run_dir)
}

// ----------------------------------------------------------------- score

pub fn score(ctx: &Ctx, model_id: &str) -> Result<(), CliError> {
    let run_dir = &ctx.run_dir;
    ctx.config.model(model_id)?;
    let mut manifest = RunManifest::load_or_create(run_dir, &ctx.config)?;
    let stage = format!("score:{model_id}");
    manifest.require(&stage, &format!("generate:{model_id}"))?;
    if manifest.is_done(&stage) && !ctx.force {
        info!("score for `{model_id}` already complete; use --force to redo");
        return Ok(());
    }
    invalidate_downstream(&mut manifest, &stage);
    manifest.save(run_dir)?;

    let records = load_index(run_dir)?;
    let samples: Vec<GenerationSample> = io::load_jsonl(&samples_path(run_dir, model_id))?;

    // verdicts are optional here; when present they fill the composite
    let verdict_overall: BTreeMap<(String, u32), f64> = {
        let path = verdicts_path(run_dir, model_id);
        if path.exists() {
            io::load_jsonl::<VerdictRecord>(&path)?
                .into_iter()
                .map(|r| {
                    (
                        (r.film_id, r.sample_idx),
                        f64::from(r.verdict.scores.overall_similarity_0_100),
                    )
                })
                .collect()
        } else {
            BTreeMap::new()
        }
    };

    struct FilmSide {
        profile: FormatProfile,
        ref_tokens: Vec<String>,
        ref_features: coda_core::format::StructuralFeatures,
    }
    let mut films: BTreeMap<String, FilmSide> = BTreeMap::new();
    for record in &records {
        let lower = read_film_file(run_dir, &record.lower_path)?;
        let profile = load_profile(run_dir, record)?;
        let ref_tokens = tokenize(&lower, ctx.config.tokenizer);
        let ref_features = extract_features(&lower, &profile);
        films.insert(
            record.film_id.clone(),
            FilmSide {
                profile,
                ref_tokens,
                ref_features,
            },
        );
    }

    let mut rows: Vec<ScoreCard> = Vec::new();
    let mut skipped = 0usize;
    for sample in &samples {
        if sample.validity != Validity::Valid {
            skipped += 1;
            continue;
        }
        let Some(film) = films.get(&sample.film_id) else {
            warn!(
                "sample {}#{} has no indexed film",
                sample.film_id, sample.sample_idx
            );
            continue;
        };
        let gen_tokens = tokenize(&sample.text, ctx.config.tokenizer);
        let rouge = rouge_l(&gen_tokens, &film.ref_tokens);
        let features = extract_features(&sample.text, &film.profile);
        let struct_sim = structural_similarity(&features, &film.ref_features);
        let composite_score = verdict_overall
            .get(&(sample.film_id.clone(), sample.sample_idx))
            .map(|overall| composite(rouge.f1, struct_sim, *overall, &ctx.config.weights))
            .transpose()
            .map_err(|e| CliError::other(format!("composite: {e}")))?;
        rows.push(ScoreCard {
            model_id: sample.model_id.clone(),
            film_id: sample.film_id.clone(),
            sample_idx: sample.sample_idx,
            rouge,
            features,
            struct_sim,
            composite: composite_score,
            tokenizer_mode: ctx.config.tokenizer,
        });
    }
    rows.sort_by(|a, b| (&a.film_id, a.sample_idx).cmp(&(&b.film_id, b.sample_idx)));
    io::write_jsonl(&scores_path(run_dir, model_id), &rows)?;
    println!(
        "scored {} samples for `{model_id}` ({} invalid skipped)",
        rows.len(),
        skipped
    );

    manifest.mark_done(&stage);
    manifest.save(run_dir)
}

// ----------------------------------------------------------------- stats

/// Joins one model's stage files into per-sample metric records.
fn load_side(ctx: &Ctx, model_id: &str) -> Result<Vec<SampleMetrics>, CliError> {
    let run_dir = &ctx.run_dir;
    let samples: Vec<GenerationSample> = io::load_jsonl(&samples_path(run_dir, model_id))?;
    let scores: BTreeMap<(String, u32), ScoreCard> =
        io::load_jsonl::<ScoreCard>(&scores_path(run_dir, model_id))?
            .into_iter()
            .map(|s| ((s.film_id.clone(), s.sample_idx), s))
            .collect();
    let verdicts: BTreeMap<(String, u32), VerdictRecord> =
        io::load_jsonl::<VerdictRecord>(&verdicts_path(run_dir, model_id))?
            .into_iter()
            .map(|r| ((r.film_id.clone(), r.sample_idx), r))
            .collect();

    let mut side = Vec::with_capacity(samples.len());
    for sample in &samples {
        let key = (sample.film_id.clone(), sample.sample_idx);
        let mut metrics: BTreeMap<String, f64> = BTreeMap::new();
        let score = scores.get(&key);
        if let Some(s) = score {
            metrics.insert("rouge_f1".into(), s.rouge.f1);
            metrics.insert("struct_sim".into(), s.struct_sim);
        }
        if let Some(v) = verdicts.get(&key) {
            let overall = f64::from(v.verdict.scores.overall_similarity_0_100);
            metrics.insert("overall".into(), overall);
            for (name, value) in v.verdict.scores.entries() {
                if name != "overall_similarity_0_100" {
                    metrics.insert(name.to_string(), f64::from(value));
                }
            }
            if let Some(s) = score {
                let c = composite(s.rouge.f1, s.struct_sim, overall, &ctx.config.weights)
                    .map_err(|e| CliError::other(format!("composite: {e}")))?;
                metrics.insert("composite".into(), c);
            }
        }
        side.push(SampleMetrics {
            film_id: sample.film_id.clone(),
            sample_idx: sample.sample_idx,
            valid: sample.validity == Validity::Valid,
            judged: verdicts.contains_key(&key),
            metrics,
        });
    }
    Ok(side)
}

fn resolve_pair(
    config: &RunConfig,
    model_a: Option<&str>,
    model_b: Option<&str>,
) -> Result<(String, String), CliError> {
    let (a, b) = match (model_a, model_b) {
        (Some(a), Some(b)) => (a.to_string(), b.to_string()),
        (None, None) => {
            if config.models.len() < 2 {
                return Err(CliError::config(
                    "stats needs two models; the config lists fewer (use --model-a/--model-b)",
                ));
            }
            (config.models[0].id.clone(), config.models[1].id.clone())
        }
        _ => {
            return Err(CliError::config(
                "pass both --model-a and --model-b, or neither",
            ));
        }
    };
    config.model(&a)?;
    config.model(&b)?;
    if a == b {
        return Err(CliError::config("stats needs two distinct models"));
    }
    Ok((a, b))
}

pub fn stats(ctx: &Ctx, model_a: Option<&str>, model_b: Option<&str>) -> Result<(), CliError> {
    let run_dir = &ctx.run_dir;
    let (a, b) = resolve_pair(&ctx.config, model_a, model_b)?;
    let mut manifest = RunManifest::load_or_create(run_dir, &ctx.config)?;
    for model in [&a, &b] {
        manifest.require("stats", &format!("score:{model}"))?;
        manifest.require("stats", &format!("judge:{model}"))?;
    }
    if manifest.is_done("stats") && !ctx.force {
        info!("stats already complete; use --force to redo");
        return Ok(());
    }
    invalidate_downstream(&mut manifest, "stats");
    manifest.save(run_dir)?;

    let side_a = load_side(ctx, &a)?;
    let side_b = load_side(ctx, &b)?;
    let pairs = align_pairs(&side_a, &side_b).map_err(|e| CliError::other(e.to_string()))?;

    let mut results: Vec<PairedTestResult> = Vec::new();
    if pairs.is_empty() {
        warn!("no overlapping valid judged pairs between `{a}` and `{b}`; writing an empty report");
    } else {
        for metric in PAIRED_METRICS {
            match paired_comparison(&pairs, metric) {
                Ok(result) => results.push(result),
                Err(e) => warn!("skipping metric {metric}: {e}"),
            }
        }
    }
    io::write_pretty_json(&run_dir.join("stats_report.json"), &results)?;

    let mut all_descriptives: BTreeMap<String, BTreeMap<String, Descriptives>> = BTreeMap::new();
    for (model, side) in [(&a, &side_a), (&b, &side_b)] {
        let mut per_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for s in side.iter().filter(|s| s.valid && s.judged) {
            for (k, v) in &s.metrics {
                per_metric.entry(k.clone()).or_default().push(*v);
            }
        }
        let mut out = BTreeMap::new();
        for (k, values) in per_metric {
            match descriptives(&values) {
                Ok(d) => {
                    out.insert(k, d);
                }
                Err(e) => warn!("descriptives for {model}/{k}: {e}"),
            }
        }
        all_descriptives.insert(model.clone(), out);
    }
    io::write_pretty_json(&run_dir.join("descriptives.json"), &all_descriptives)?;

    println!("paired samples: {}", pairs.len());
    for r in &results {
        println!(
            "  {}: diff {:+.4} (t {:.3}, p {}, d {:+.3} {})",
            r.metric_name,
            r.mean_diff,
            r.t_stat,
            report::fmt_p(r.p_value),
            r.cohens_d,
            r.band
        );
    }

    manifest.stats_pair = Some((a, b));
    manifest.mark_done("stats");
    manifest.save(run_dir)
}

// ---------------------------------------------------------------- report

pub fn emit_report(ctx: &Ctx) -> Result<(), CliError> {
    let run_dir = &ctx.run_dir;
    let mut manifest = RunManifest::load_or_create(run_dir, &ctx.config)?;
    manifest.require("report", "stats")?;
    if manifest.is_done("report") && !ctx.force {
        info!("report already complete; use --force to redo");
        return Ok(());
    }
    let (a, b) = manifest
        .stats_pair
        .clone()
        .ok_or_else(|| CliError::other("manifest records no stats pair"))?;

    let films = load_index(run_dir)?;
    let mut samples = BTreeMap::new();
    let mut sides = BTreeMap::new();
    for model in [&a, &b] {
        samples.insert(
            model.clone(),
            io::load_jsonl::<GenerationSample>(&samples_path(run_dir, model))?,
        );
        sides.insert(model.clone(), load_side(ctx, model)?);
    }
    let stats: Vec<PairedTestResult> = io::read_pretty_json(&run_dir.join("stats_report.json"))?;
    let descriptives: BTreeMap<String, BTreeMap<String, Descriptives>> =
        io::read_pretty_json(&run_dir.join("descriptives.json"))?;

    let inputs = report::ReportInputs {
        run_id: manifest.run_id.clone(),
        model_a: a,
        model_b: b,
        samples_per_film: ctx.config.samples_per_film,
        films,
        samples,
        sides,
        stats,
        descriptives,
    };
    report::emit(run_dir, &inputs)?;
    println!("report written to {}", run_dir.join("report.md").display());

    manifest.mark_done("report");
    manifest.save(run_dir)
}
