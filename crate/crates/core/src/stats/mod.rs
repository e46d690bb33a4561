//! Paired model comparison: descriptive statistics, paired t-tests,
//! effect sizes, confidence intervals, and a normality check.
//!
//! Samples from two models are aligned by (film, sample index) and
//! compared only where both sides produced a valid, judged sample, so
//! every test is a true paired design. Differences are always computed
//! as side A minus side B.

mod shapiro;

pub use shapiro::{shapiro_wilk, ShapiroWilk};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// z multiplier for the reported 95% confidence interval.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least {required} samples, got {actual}")]
    TooFewSamples { required: usize, actual: usize },
    #[error("at most {max} samples supported, got {actual}")]
    TooManySamples { max: usize, actual: usize },
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("zero variance: all values are identical")]
    ZeroVariance,
    #[error("duplicate sample key {film_id}#{sample_idx}")]
    DuplicateSample { film_id: String, sample_idx: u32 },
    #[error("metric {metric:?} missing for {film_id}#{sample_idx}")]
    MissingMetric {
        metric: String,
        film_id: String,
        sample_idx: u32,
    },
}

/// Summary statistics of one metric across samples. `cv` is the
/// coefficient of variation as a percentage, absent when the mean is
/// zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptives {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub iqr: f64,
    pub cv: Option<f64>,
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for n = 1.
fn sample_sd(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean_of(xs);
    let ss = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>();
    (ss / (n - 1) as f64).sqrt()
}

/// Linear-interpolation quantile on sorted data (the convention R and
/// numpy use by default).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Computes descriptive statistics. Errors on an empty slice or
/// non-finite values.
pub fn descriptives(xs: &[f64]) -> Result<Descriptives, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::TooFewSamples {
            required: 1,
            actual: 0,
        });
    }
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = mean_of(xs);
    let sd = sample_sd(xs);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let cv = if mean == 0.0 {
        None
    } else {
        Some(sd / mean.abs() * 100.0)
    };
    Ok(Descriptives {
        n: xs.len(),
        mean,
        sd,
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        iqr,
        cv,
    })
}

/// Cohen's d for paired data: mean of the differences over their
/// sample standard deviation.
pub fn cohens_d(diffs: &[f64]) -> Result<f64, StatsError> {
    if diffs.len() < 2 {
        return Err(StatsError::TooFewSamples {
            required: 2,
            actual: diffs.len(),
        });
    }
    let sd = sample_sd(diffs);
    if sd == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok(mean_of(diffs) / sd)
}

/// Effect size band for |d|, thresholds at 0.2 / 0.5 / 0.8 with each
/// threshold value falling in the higher band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EffectBand {
    Negligible,
    Small,
    Medium,
    Large,
}

impl std::fmt::Display for EffectBand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EffectBand::Negligible => "Negligible",
            EffectBand::Small => "Small",
            EffectBand::Medium => "Medium",
            EffectBand::Large => "Large",
        })
    }
}

pub fn effect_band(d: f64) -> EffectBand {
    let a = d.abs();
    if a < 0.2 {
        EffectBand::Negligible
    } else if a < 0.5 {
        EffectBand::Small
    } else if a < 0.8 {
        EffectBand::Medium
    } else {
        EffectBand::Large
    }
}

/// Paired t-test outcome on a difference vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

/// Two-sided paired t-test on the differences: t = mean / (sd / sqrt n)
/// with n - 1 degrees of freedom.
pub fn paired_ttest(diffs: &[f64]) -> Result<PairedTTest, StatsError> {
    let n = diffs.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples {
            required: 2,
            actual: n,
        });
    }
    if diffs.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let sd = sample_sd(diffs);
    if sd == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let t = mean_of(diffs) / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).unwrap();
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(PairedTTest { t, df: n - 1, p })
}

fn standard_error(diffs: &[f64]) -> Result<(f64, f64), StatsError> {
    let n = diffs.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples {
            required: 2,
            actual: n,
        });
    }
    Ok((mean_of(diffs), sample_sd(diffs) / (n as f64).sqrt()))
}

/// 95% confidence interval for the mean difference with the fixed
/// z = 1.96 multiplier.
pub fn confidence_interval_z(diffs: &[f64]) -> Result<(f64, f64), StatsError> {
    let (m, se) = standard_error(diffs)?;
    Ok((m - Z_95 * se, m + Z_95 * se))
}

/// 95% confidence interval using the exact t critical value for n - 1
/// degrees of freedom; wider than the z interval for small n.
pub fn confidence_interval_t(diffs: &[f64]) -> Result<(f64, f64), StatsError> {
    let (m, se) = standard_error(diffs)?;
    let dist = StudentsT::new(0.0, 1.0, (diffs.len() - 1) as f64).unwrap();
    let crit = dist.inverse_cdf(0.975);
    Ok((m - crit * se, m + crit * se))
}

/// Per-sample metric values for one model, the alignment unit for
/// paired comparison. Only samples with `valid && judged` enter the
/// pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub film_id: String,
    pub sample_idx: u32,
    pub valid: bool,
    pub judged: bool,
    pub metrics: BTreeMap<String, f64>,
}

fn keyed(side: &[SampleMetrics]) -> Result<BTreeMap<(&str, u32), &SampleMetrics>, StatsError> {
    let mut map = BTreeMap::new();
    for s in side.iter().filter(|s| s.valid && s.judged) {
        if map.insert((s.film_id.as_str(), s.sample_idx), s).is_some() {
            return Err(StatsError::DuplicateSample {
                film_id: s.film_id.clone(),
                sample_idx: s.sample_idx,
            });
        }
    }
    Ok(map)
}

/// Inner-joins two models' samples on (film_id, sample_idx), keeping
/// only keys where both sides are valid and judged. The result is
/// sorted by key. Duplicate keys on either side are an error.
pub fn align_pairs<'a>(
    a: &'a [SampleMetrics],
    b: &'a [SampleMetrics],
) -> Result<Vec<(&'a SampleMetrics, &'a SampleMetrics)>, StatsError> {
    let ka = keyed(a)?;
    let kb = keyed(b)?;
    Ok(ka
        .iter()
        .filter_map(|(key, va)| kb.get(key).map(|vb| (*va, *vb)))
        .collect())
}

/// Full paired comparison of one metric, as serialized into the stats
/// report. The z-based interval (`ci_low`, `ci_high`) is the headline
/// one; the t-based interval is kept alongside for small-n reading.
/// Shapiro-Wilk fields are absent when the difference vector is outside
/// the testable range or constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTestResult {
    pub metric_name: String,
    pub n_pairs: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_t_low: f64,
    pub ci_t_high: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub cohens_d: f64,
    pub band: EffectBand,
    pub shapiro_w: Option<f64>,
    pub shapiro_p: Option<f64>,
}

/// Runs the paired analysis of `metric_name` over aligned pairs,
/// differencing A minus B.
pub fn paired_comparison(
    pairs: &[(&SampleMetrics, &SampleMetrics)],
    metric_name: &str,
) -> Result<PairedTestResult, StatsError> {
    let mut a_vals = Vec::with_capacity(pairs.len());
    let mut b_vals = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let fetch = |s: &SampleMetrics| {
            s.metrics
                .get(metric_name)
                .copied()
                .ok_or_else(|| StatsError::MissingMetric {
                    metric: metric_name.to_string(),
                    film_id: s.film_id.clone(),
                    sample_idx: s.sample_idx,
                })
        };
        a_vals.push(fetch(a)?);
        b_vals.push(fetch(b)?);
    }
    let diffs: Vec<f64> = a_vals.iter().zip(&b_vals).map(|(x, y)| x - y).collect();

    let test = paired_ttest(&diffs)?;
    let (ci_low, ci_high) = confidence_interval_z(&diffs)?;
    let (ci_t_low, ci_t_high) = confidence_interval_t(&diffs)?;
    let d = cohens_d(&diffs)?;
    let (shapiro_w, shapiro_p) = match shapiro_wilk(&diffs) {
        Ok(s) => (Some(s.w), Some(s.p_value)),
        Err(_) => (None, None),
    };

    Ok(PairedTestResult {
        metric_name: metric_name.to_string(),
        n_pairs: pairs.len(),
        mean_a: mean_of(&a_vals),
        mean_b: mean_of(&b_vals),
        mean_diff: mean_of(&diffs),
        sd_diff: sample_sd(&diffs),
        ci_low,
        ci_high,
        ci_t_low,
        ci_t_high,
        t_stat: test.t,
        p_value: test.p,
        cohens_d: d,
        band: effect_band(d),
        shapiro_w,
        shapiro_p,
    })
}

/// Formats a count over a total as a one-decimal percentage cell;
/// an em-dash-free placeholder when the total is zero.
pub fn percent_cell(count: usize, total: usize) -> String {
    if total == 0 {
        "n/a".to_string()
    } else {
        format!("{:.1}%", 100.0 * count as f64 / total as f64)
    }
}
