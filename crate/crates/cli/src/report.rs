//! Summary metrics, the stdout table, and CSV artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use uavbeam::{Error, Result};

use crate::experiment::{EpisodeMeta, EpisodeRecord, SCHEMES};

pub const TRAJECTORY_HEADER: &str =
    "k,x_true,y_true,x_pred_lrnet,y_pred_lrnet,err_lrnet_m,x_pred_kalman,y_pred_kalman,err_kalman_m";
pub const RATE_HEADER: &str = "k,range_m,rate_genie,rate_lrnet,rate_kalman";
pub const SUMMARY_HEADER: &str = "scheme,mean_rate,rate_std,mean_err_m,median_err_m,max_err_m,rate_ratio";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSummary {
    /// Over every slot, warm-up included.
    pub mean_rate: f64,
    /// Population (1/n) standard deviation of the per-slot rate.
    pub rate_std: f64,
    /// Location errors over post-warm-up slots only.
    pub mean_error: f64,
    pub median_error: f64,
    pub max_error: f64,
    /// `mean_rate / genie mean_rate`.
    pub rate_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryMetrics {
    pub genie: SchemeSummary,
    pub lrnet: SchemeSummary,
    pub kalman: SchemeSummary,
    pub slots: usize,
    pub scored_slots: usize,
    pub episodes: Vec<EpisodeMeta>,
}

impl SummaryMetrics {
    pub fn scheme(&self, index: usize) -> &SchemeSummary {
        match index {
            0 => &self.genie,
            1 => &self.lrnet,
            _ => &self.kalman,
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Midpoint median; `values` must be non-empty and NaN-free.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Aggregates records (from one or many episodes) per scheme.
pub fn summarize(records: &[EpisodeRecord]) -> Result<SummaryMetrics> {
    if records.is_empty() {
        return Err(Error::Domain("no records to summarize".into()));
    }
    let genie_rates: Vec<f64> = records.iter().map(|r| r.genie.rate).collect();
    let genie_mean = mean(&genie_rates);
    let scored: Vec<&EpisodeRecord> = records.iter().filter(|r| !r.warm_up).collect();
    let per_scheme = |s: usize| {
        let rates: Vec<f64> = records.iter().map(|r| r.scheme(s).rate).collect();
        let errors: Vec<f64> = scored.iter().map(|r| r.error(s)).collect();
        let mean_rate = mean(&rates);
        let (mean_error, median_error, max_error) = if errors.is_empty() {
            (0.0, 0.0, 0.0)
        } else {
            (
                mean(&errors),
                median(&errors),
                errors.iter().fold(0.0f64, |a, &b| a.max(b)),
            )
        };
        SchemeSummary {
            mean_rate,
            rate_std: std_dev(&rates),
            mean_error,
            median_error,
            max_error,
            rate_ratio: if genie_mean > 0.0 { mean_rate / genie_mean } else { 1.0 },
        }
    };
    Ok(SummaryMetrics {
        genie: per_scheme(0),
        lrnet: per_scheme(1),
        kalman: per_scheme(2),
        slots: records.len(),
        scored_slots: scored.len(),
        episodes: Vec::new(),
    })
}

/// Decimal rendering with nine significant digits.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_finite() { "0".into() } else { v.to_string() };
    }
    let magnitude = v.abs().log10().floor() as i32;
    if magnitude > 8 {
        let unit = 10f64.powi(magnitude - 8);
        return format!("{:.0}", (v / unit).round() * unit);
    }
    let mut decimals = (8 - magnitude).max(0) as usize;
    let mut s = format!("{v:.decimals$}");
    // rounding may carry into a new leading digit (9.9999999996 → 10.00000000)
    if count_significant(&s) > 9 && decimals > 0 {
        decimals -= 1;
        s = format!("{v:.decimals$}");
    }
    s
}

fn count_significant(s: &str) -> usize {
    s.chars().filter(char::is_ascii_digit).skip_while(|&c| c == '0').count()
}

fn check_finite(values: &[f64], what: &str, k: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {what} value at slot {k}")))
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| sig9(v)).collect::<Vec<_>>().join(",")
}

pub fn trajectory_csv(records: &[EpisodeRecord]) -> Result<String> {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for r in records {
        let (t, l, k) = (r.true_location, r.lrnet.predicted, r.kalman.predicted);
        let row = [t.x, t.y, l.x, l.y, r.error(1), k.x, k.y, r.error(2)];
        check_finite(&row, "trajectory", r.k)?;
        writeln!(out, "{},{}", r.k, join(&row)).expect("string write");
    }
    Ok(out)
}

pub fn rate_csv(records: &[EpisodeRecord]) -> Result<String> {
    let mut out = String::from(RATE_HEADER);
    out.push('\n');
    for r in records {
        let row = [r.range, r.genie.rate, r.lrnet.rate, r.kalman.rate];
        check_finite(&row, "rate", r.k)?;
        writeln!(out, "{},{}", r.k, join(&row)).expect("string write");
    }
    Ok(out)
}

pub fn summary_csv(metrics: &SummaryMetrics) -> Result<String> {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (i, name) in SCHEMES.iter().enumerate() {
        let s = metrics.scheme(i);
        let row = [
            s.mean_rate,
            s.rate_std,
            s.mean_error,
            s.median_error,
            s.max_error,
            s.rate_ratio,
        ];
        check_finite(&row, "summary", 0)?;
        writeln!(out, "{name},{}", join(&row)).expect("string write");
    }
    Ok(out)
}

pub fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Human-readable summary for stdout.
pub fn format_table(metrics: &SummaryMetrics) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "# {} slots ({} scored after warm-up); rate std is the population (1/n) std-dev",
        metrics.slots, metrics.scored_slots
    )
    .unwrap();
    for e in &metrics.episodes {
        writeln!(out, "# episode {} seed {} config {}", e.index, e.seed, e.config_hash).unwrap();
    }
    writeln!(
        out,
        "{:<8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "scheme", "mean_rate", "rate_std", "mean_err_m", "median_err_m", "max_err_m", "rate_ratio"
    )
    .unwrap();
    for (i, name) in SCHEMES.iter().enumerate() {
        let s = metrics.scheme(i);
        writeln!(
            out,
            "{:<8} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            name, s.mean_rate, s.rate_std, s.mean_error, s.median_error, s.max_error, s.rate_ratio
        )
        .unwrap();
    }
    out
}
