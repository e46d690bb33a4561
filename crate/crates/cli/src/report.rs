//! Renders report.md plus the CSV companions under tables/ (formatted
//! like the report cells) and plots/ (full-precision values meant for
//! plotting scripts). Everything here is recomputed from the stage
//! files, never from state carried in memory between stages.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use coda_core::corpus::FilmRecord;
use coda_core::genclient::{GenerationSample, Validity};
use coda_core::stats::{align_pairs, percent_cell, Descriptives, PairedTestResult, SampleMetrics};

use crate::errors::CliError;
use crate::io;

pub struct ReportInputs {
    pub run_id: String,
    pub model_a: String,
    pub model_b: String,
    pub samples_per_film: u32,
    pub films: Vec<FilmRecord>,
    pub samples: BTreeMap<String, Vec<GenerationSample>>,
    pub sides: BTreeMap<String, Vec<SampleMetrics>>,
    pub stats: Vec<PairedTestResult>,
    pub descriptives: BTreeMap<String, BTreeMap<String, Descriptives>>,
}

const VALIDITY_CLASSES: [(Validity, &str); 8] = [
    (Validity::Valid, "VALID"),
    (Validity::TooShort, "TOO_SHORT"),
    (Validity::TooLong, "TOO_LONG"),
    (Validity::MetaDiscourse, "META_DISCOURSE"),
    (Validity::ParseFailure, "PARSE_FAILURE"),
    (Validity::ApiTimeout, "API_TIMEOUT"),
    (Validity::ApiModeration, "API_MODERATION"),
    (Validity::ApiOther, "API_OTHER"),
];

const METRIC_ORDER: [&str; 9] = [
    "rouge_f1",
    "struct_sim",
    "overall",
    "plot_event_alignment",
    "character_consistency",
    "tone_style_match",
    "format_match",
    "ending_closure",
    "composite",
];

pub fn metric_label(name: &str) -> &str {
    match name {
        "rouge_f1" => "ROUGE-L F1",
        "struct_sim" => "Structural similarity",
        "overall" => "Overall score",
        "composite" => "Composite",
        "plot_event_alignment" => "Plot alignment",
        "character_consistency" => "Character consistency",
        "tone_style_match" => "Tone and style",
        "format_match" => "Format match",
        "ending_closure" => "Ending closure",
        other => other,
    }
}

/// Judge scores live on a 0 to 100 scale and print with 2 decimals;
/// everything else lives in [0, 1] and prints with 4.
fn is_score_scale(name: &str) -> bool {
    matches!(
        name,
        "overall"
            | "plot_event_alignment"
            | "character_consistency"
            | "tone_style_match"
            | "format_match"
            | "ending_closure"
    )
}

fn fmt_value(name: &str, v: f64) -> String {
    if is_score_scale(name) {
        format!("{v:.2}")
    } else {
        format!("{v:.4}")
    }
}

fn fmt_signed(name: &str, v: f64) -> String {
    if is_score_scale(name) {
        format!("{v:+.2}")
    } else {
        format!("{v:+.4}")
    }
}

pub fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

const EMPTY_CELL: &str = "—";

fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n < 2 {
        0.0
    } else {
        let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
        (ss / (n - 1) as f64).sqrt()
    };
    Some((mean, sd))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Quadrant of a paired difference: x is the lexical diff, y the judge
/// diff. Points on an axis fall toward the lower quadrant.
pub fn quadrant_of(x: f64, y: f64) -> &'static str {
    match (x > 0.0, y > 0.0) {
        (true, true) => "QI",
        (false, true) => "QII",
        (false, false) => "QIII",
        (true, false) => "QIV",
    }
}

fn md_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(
        out,
        "|{}|",
        header.iter().map(|_| " --- ").collect::<Vec<_>>().join("|")
    );
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    let _ = writeln!(out);
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    io::write_atomic(path, out.as_bytes())
}

struct MetricTable {
    rows: Vec<Vec<String>>,
    csv_rows: Vec<Vec<String>>,
}

fn metric_means(inputs: &ReportInputs, judged_only: bool) -> MetricTable {
    let mut rows = Vec::new();
    let mut csv_rows = Vec::new();
    for metric in METRIC_ORDER {
        let mut cells = vec![metric_label(metric).to_string()];
        let mut present = false;
        for model in [&inputs.model_a, &inputs.model_b] {
            let values: Vec<f64> = inputs.sides[model]
                .iter()
                .filter(|s| s.valid && (!judged_only || s.judged))
                .filter_map(|s| s.metrics.get(metric).copied())
                .collect();
            match mean_sd(&values) {
                Some((mean, sd)) => {
                    present = true;
                    cells.push(format!(
                        "{} ± {} (n={})",
                        fmt_value(metric, mean),
                        fmt_value(metric, sd),
                        values.len()
                    ));
                    csv_rows.push(vec![
                        metric.to_string(),
                        model.clone(),
                        values.len().to_string(),
                        fmt_value(metric, mean),
                        fmt_value(metric, sd),
                    ]);
                }
                None => cells.push(EMPTY_CELL.to_string()),
            }
        }
        if present {
            rows.push(cells);
        }
    }
    MetricTable { rows, csv_rows }
}

pub fn emit(run_dir: &Path, inputs: &ReportInputs) -> Result<(), CliError> {
    for sub in ["tables", "plots"] {
        std::fs::create_dir_all(run_dir.join(sub))
            .map_err(|e| CliError::other(format!("cannot create {sub} dir: {e}")))?;
    }
    let a = &inputs.model_a;
    let b = &inputs.model_b;
    let pairs = align_pairs(&inputs.sides[a], &inputs.sides[b])
        .map_err(|e| CliError::other(e.to_string()))?;

    let mut md = String::new();
    let _ = writeln!(
        md,
        "# Script continuation evaluation: run `{}`",
        inputs.run_id
    );
    let _ = writeln!(md);
    let _ = writeln!(
        md,
        "Models compared: `{a}` vs `{b}` over {} films, {} sample(s) per film. \
         Differences are `{a}` minus `{b}`.",
        inputs.films.len(),
        inputs.samples_per_film
    );
    let _ = writeln!(md);

    // ---- sample counts and validity --------------------------------
    let _ = writeln!(md, "## Samples and validity");
    let _ = writeln!(md);
    let mut validity_rows = Vec::new();
    let mut validity_csv = Vec::new();
    for model in [a, b] {
        let rows = &inputs.samples[model];
        let total = rows.len();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for sample in rows {
            let label = VALIDITY_CLASSES
                .iter()
                .find(|(v, _)| *v == sample.validity)
                .map(|(_, l)| *l)
                .unwrap_or("VALID");
            *counts.entry(label).or_insert(0) += 1;
        }
        let valid = counts.get("VALID").copied().unwrap_or(0);
        let judged = inputs.sides[model].iter().filter(|s| s.judged).count();
        validity_rows.push(vec![
            format!("`{model}`"),
            total.to_string(),
            valid.to_string(),
            percent_cell(valid, total),
            judged.to_string(),
            percent_cell(judged, total),
        ]);
        let mut csv_row = vec![
            model.clone(),
            total.to_string(),
            valid.to_string(),
            percent_cell(valid, total),
            judged.to_string(),
            percent_cell(judged, total),
        ];
        for (_, label) in &VALIDITY_CLASSES[1..] {
            csv_row.push(counts.get(label).copied().unwrap_or(0).to_string());
        }
        validity_csv.push(csv_row);
    }
    md_table(
        &mut md,
        &[
            "Model",
            "Samples",
            "Valid",
            "Validity rate",
            "Judged",
            "Judged rate",
        ],
        &validity_rows,
    );

    let mut class_rows = Vec::new();
    for model in [a, b] {
        let rows = &inputs.samples[model];
        let mut cells = vec![format!("`{model}`")];
        for (class, _) in &VALIDITY_CLASSES {
            let n = rows.iter().filter(|s| s.validity == *class).count();
            cells.push(if n == 0 {
                EMPTY_CELL.to_string()
            } else {
                n.to_string()
            });
        }
        class_rows.push(cells);
    }
    let mut class_header = vec!["Model"];
    for (_, label) in &VALIDITY_CLASSES {
        class_header.push(label);
    }
    md_table(&mut md, &class_header, &class_rows);
    let _ = writeln!(
        md,
        "Paired samples (valid and judged on both sides): {}",
        pairs.len()
    );
    let _ = writeln!(md);
    write_csv(
        &run_dir.join("tables/validity.csv"),
        &[
            "model",
            "samples",
            "valid",
            "validity_rate",
            "judged",
            "judged_rate",
            "too_short",
            "too_long",
            "meta_discourse",
            "parse_failure",
            "api_timeout",
            "api_moderation",
            "api_other",
        ],
        &validity_csv,
    )?;

    // ---- metric means ----------------------------------------------
    let _ = writeln!(md, "## Metric means");
    let _ = writeln!(md);
    let _ = writeln!(md, "Over all valid samples:");
    let _ = writeln!(md);
    let all_valid = metric_means(inputs, false);
    md_table(
        &mut md,
        &["Metric", &format!("`{a}`"), &format!("`{b}`")],
        &all_valid.rows,
    );
    let _ = writeln!(md, "Over valid samples with a judge verdict:");
    let _ = writeln!(md);
    let judged = metric_means(inputs, true);
    md_table(
        &mut md,
        &["Metric", &format!("`{a}`"), &format!("`{b}`")],
        &judged.rows,
    );
    write_csv(
        &run_dir.join("tables/metrics_valid.csv"),
        &["metric", "model", "n", "mean", "sd"],
        &all_valid.csv_rows,
    )?;
    write_csv(
        &run_dir.join("tables/metrics_judged.csv"),
        &["metric", "model", "n", "mean", "sd"],
        &judged.csv_rows,
    )?;

    // ---- paired comparison -----------------------------------------
    let _ = writeln!(md, "## Paired comparison");
    let _ = writeln!(md);
    if inputs.stats.is_empty() {
        let _ = writeln!(md, "No paired samples were available; no tests were run.");
        let _ = writeln!(md);
    }
    let mut paired_rows = Vec::new();
    let mut paired_csv = Vec::new();
    let mut normality_rows = Vec::new();
    for r in &inputs.stats {
        let name = r.metric_name.as_str();
        paired_rows.push(vec![
            metric_label(name).to_string(),
            r.n_pairs.to_string(),
            fmt_value(name, r.mean_a),
            fmt_value(name, r.mean_b),
            format!(
                "{} [{}, {}]",
                fmt_signed(name, r.mean_diff),
                fmt_signed(name, r.ci_low),
                fmt_signed(name, r.ci_high)
            ),
            format!("{:.3}", r.t_stat),
            fmt_p(r.p_value),
            format!("{:+.3}", r.cohens_d),
            r.band.to_string(),
        ]);
        normality_rows.push(vec![
            metric_label(name).to_string(),
            r.shapiro_w
                .map(|w| format!("{w:.4}"))
                .unwrap_or_else(|| EMPTY_CELL.to_string()),
            r.shapiro_p
                .map(fmt_p)
                .unwrap_or_else(|| EMPTY_CELL.to_string()),
            format!(
                "[{}, {}]",
                fmt_signed(name, r.ci_t_low),
                fmt_signed(name, r.ci_t_high)
            ),
        ]);
        paired_csv.push(vec![
            name.to_string(),
            r.n_pairs.to_string(),
            fmt_value(name, r.mean_a),
            fmt_value(name, r.mean_b),
            fmt_signed(name, r.mean_diff),
            fmt_signed(name, r.ci_low),
            fmt_signed(name, r.ci_high),
            fmt_signed(name, r.ci_t_low),
            fmt_signed(name, r.ci_t_high),
            format!("{:.3}", r.t_stat),
            fmt_p(r.p_value),
            format!("{:+.3}", r.cohens_d),
            r.band.to_string(),
            r.shapiro_w.map(|w| format!("{w:.4}")).unwrap_or_default(),
            r.shapiro_p.map(fmt_p).unwrap_or_default(),
        ]);
    }
    if !paired_rows.is_empty() {
        md_table(
            &mut md,
            &[
                "Metric",
                "Pairs",
                &format!("`{a}` mean"),
                &format!("`{b}` mean"),
                "Diff [95% CI]",
                "t",
                "p",
                "Cohen's d",
                "Band",
            ],
            &paired_rows,
        );
        let _ = writeln!(
            md,
            "Normality of the paired differences, with the t-based interval \
             shown for comparison against the normal-approximation interval above:"
        );
        let _ = writeln!(md);
        md_table(
            &mut md,
            &["Metric", "Shapiro-Wilk W", "p", "Diff [95% t-CI]"],
            &normality_rows,
        );
    }
    write_csv(
        &run_dir.join("tables/paired_tests.csv"),
        &[
            "metric",
            "n_pairs",
            "mean_a",
            "mean_b",
            "mean_diff",
            "ci_low",
            "ci_high",
            "ci_t_low",
            "ci_t_high",
            "t_stat",
            "p_value",
            "cohens_d",
            "band",
            "shapiro_w",
            "shapiro_p",
        ],
        &paired_csv,
    )?;

    // ---- composite spread ------------------------------------------
    let _ = writeln!(md, "## Composite score spread");
    let _ = writeln!(md);
    let mut spread_rows = Vec::new();
    let mut spread_csv = Vec::new();
    for model in [a, b] {
        let Some(d) = inputs
            .descriptives
            .get(model)
            .and_then(|m| m.get("composite"))
        else {
            continue;
        };
        let cv_cell =
            d.cv.map(|cv| format!("{cv:.1}%"))
                .unwrap_or_else(|| EMPTY_CELL.to_string());
        spread_rows.push(vec![
            format!("`{model}`"),
            d.n.to_string(),
            format!("{:.4}", d.mean),
            format!("{:.4}", d.sd),
            format!("{:.4}", d.min),
            format!("{:.4}", d.max),
            format!("{:.4}", d.iqr),
            cv_cell.clone(),
        ]);
        spread_csv.push(vec![
            model.clone(),
            d.n.to_string(),
            format!("{:.4}", d.mean),
            format!("{:.4}", d.sd),
            format!("{:.4}", d.min),
            format!("{:.4}", d.max),
            format!("{:.4}", d.iqr),
            d.cv.map(|cv| format!("{cv:.1}%")).unwrap_or_default(),
        ]);
    }
    if spread_rows.is_empty() {
        let _ = writeln!(md, "No composite scores were available.");
        let _ = writeln!(md);
    } else {
        md_table(
            &mut md,
            &["Model", "n", "Mean", "SD", "Min", "Max", "IQR", "CV"],
            &spread_rows,
        );
    }
    write_csv(
        &run_dir.join("tables/composite_descriptives.csv"),
        &["model", "n", "mean", "sd", "min", "max", "iqr", "cv_pct"],
        &spread_csv,
    )?;

    let _ = writeln!(
        md,
        "CSV copies of these tables live under `tables/`; `plots/` holds \
         full-precision series for plotting."
    );
    io::write_atomic(&run_dir.join("report.md"), md.as_bytes())?;

    // ---- plots ------------------------------------------------------
    let forest: Vec<Vec<String>> = inputs
        .stats
        .iter()
        .map(|r| {
            vec![
                r.metric_name.clone(),
                r.cohens_d.to_string(),
                r.ci_low.to_string(),
                r.ci_high.to_string(),
                r.band.to_string(),
            ]
        })
        .collect();
    write_csv(
        &run_dir.join("plots/forest.csv"),
        &["metric", "cohens_d", "diff_ci_low", "diff_ci_high", "band"],
        &forest,
    )?;

    let mut scatter = Vec::new();
    let mut corr = Vec::new();
    for model in [a, b] {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in inputs.sides[model].iter().filter(|s| s.valid && s.judged) {
            let (Some(x), Some(y)) = (s.metrics.get("rouge_f1"), s.metrics.get("overall")) else {
                continue;
            };
            scatter.push(vec![
                model.clone(),
                s.film_id.clone(),
                s.sample_idx.to_string(),
                x.to_string(),
                y.to_string(),
            ]);
            xs.push(*x);
            ys.push(*y);
        }
        corr.push(vec![
            model.clone(),
            xs.len().to_string(),
            pearson(&xs, &ys).map(|r| r.to_string()).unwrap_or_default(),
        ]);
    }
    write_csv(
        &run_dir.join("plots/scatter.csv"),
        &["model", "film_id", "sample_idx", "rouge_f1", "overall"],
        &scatter,
    )?;
    write_csv(
        &run_dir.join("plots/scatter_corr.csv"),
        &["model", "n", "pearson_r"],
        &corr,
    )?;

    let mut quadrant_rows = Vec::new();
    let mut quadrant_counts: BTreeMap<&str, usize> =
        [("QI", 0), ("QII", 0), ("QIII", 0), ("QIV", 0)].into();
    for (pa, pb) in &pairs {
        let (Some(xa), Some(xb)) = (pa.metrics.get("rouge_f1"), pb.metrics.get("rouge_f1")) else {
            continue;
        };
        let (Some(ya), Some(yb)) = (pa.metrics.get("overall"), pb.metrics.get("overall")) else {
            continue;
        };
        let dx = xa - xb;
        let dy = ya - yb;
        let q = quadrant_of(dx, dy);
        *quadrant_counts.get_mut(q).unwrap() += 1;
        quadrant_rows.push(vec![
            pa.film_id.clone(),
            pa.sample_idx.to_string(),
            dx.to_string(),
            dy.to_string(),
            q.to_string(),
        ]);
    }
    write_csv(
        &run_dir.join("plots/quadrants.csv"),
        &[
            "film_id",
            "sample_idx",
            "diff_rouge_f1",
            "diff_overall",
            "quadrant",
        ],
        &quadrant_rows,
    )?;
    let count_rows: Vec<Vec<String>> = ["QI", "QII", "QIII", "QIV"]
        .iter()
        .map(|q| vec![q.to_string(), quadrant_counts[q].to_string()])
        .collect();
    write_csv(
        &run_dir.join("plots/quadrant_counts.csv"),
        &["quadrant", "count"],
        &count_rows,
    )?;

    let mut per_film: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (pa, pb) in &pairs {
        let (Some(sa), Some(sb)) = (pa.metrics.get("struct_sim"), pb.metrics.get("struct_sim"))
        else {
            continue;
        };
        let slot = per_film.entry(pa.film_id.as_str()).or_default();
        slot.0.push(*sa);
        slot.1.push(*sb);
    }
    let mut film_rows: Vec<(String, f64, f64, f64)> = per_film
        .into_iter()
        .map(|(film, (xs, ys))| {
            let ma = xs.iter().sum::<f64>() / xs.len() as f64;
            let mb = ys.iter().sum::<f64>() / ys.len() as f64;
            (film.to_string(), ma, mb, ma - mb)
        })
        .collect();
    film_rows.sort_by(|x, y| {
        y.3.abs()
            .partial_cmp(&x.3.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| x.0.cmp(&y.0))
    });
    let film_csv: Vec<Vec<String>> = film_rows
        .into_iter()
        .map(|(film, ma, mb, diff)| vec![film, ma.to_string(), mb.to_string(), diff.to_string()])
        .collect();
    write_csv(
        &run_dir.join("plots/perfilm.csv"),
        &["film_id", "struct_sim_a", "struct_sim_b", "diff"],
        &film_csv,
    )?;

    Ok(())
}
