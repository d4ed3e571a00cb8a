use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::engine::RunResult;
use crate::error::{Error, Result};
use crate::metrics::moving_average;

use super::runner::CaseReport;

pub const RUN_HEADER: &str =
    "iteration,pu1_reward,pu2_reward,su_mean_reward,pu1_level,pu2_level,m1,m2,kl_mean";
pub const PLOT_HEADER: &str = "iteration,pu1_reward,pu2_reward,total_pu_reward,su_mean_reward,kl_mean";
/// Smoothing window of the plot files.
pub const PLOT_WINDOW: usize = 50;

pub fn run_file_name(num_sus: usize, channels_per_pu: usize, seed: u64) -> String {
    format!("run_{num_sus}_{channels_per_pu}_{seed}.csv")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_finite(label: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(Error::invalid(format!("non-finite {label} value {v}"))),
        None => Ok(()),
    }
}

/// Writes the per-iteration log of one run; returns the file path.
pub fn write_run_csv(dir: &Path, run: &RunResult) -> Result<PathBuf> {
    let cfg = &run.config;
    let mut out = String::with_capacity(64 * (run.records.len() + 1));
    out.push_str(RUN_HEADER);
    out.push('\n');
    for r in &run.records {
        ensure_finite(
            "iteration",
            &[r.pu1_reward, r.pu2_reward, r.mean_su_reward, r.kl_mean],
        )?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.iteration,
            r.pu1_reward,
            r.pu2_reward,
            r.mean_su_reward,
            r.pu1_level,
            r.pu2_level,
            r.sale_counts.0,
            r.sale_counts.1,
            r.kl_mean
        )
        .expect("writing to a String cannot fail");
    }
    let path = dir.join(run_file_name(cfg.num_sus, cfg.channels_per_pu, cfg.seed));
    write_file(&path, &out)?;
    Ok(path)
}

/// Seed-averaged curves of one grid point, smoothed with a trailing window
/// of [`PLOT_WINDOW`]. All runs must have the same length.
pub fn write_plotdata(dir: &Path, runs: &[RunResult]) -> Result<PathBuf> {
    let first = runs
        .first()
        .ok_or_else(|| Error::invalid("no runs to plot"))?;
    let len = first.records.len();
    if runs.iter().any(|r| r.records.len() != len) {
        return Err(Error::invalid("runs of one grid point differ in length"));
    }
    let n = runs.len() as f64;
    let seed_mean = |f: fn(&crate::engine::IterationRecord) -> f64| -> Vec<f64> {
        (0..len)
            .map(|i| runs.iter().map(|r| f(&r.records[i])).sum::<f64>() / n)
            .collect()
    };
    let columns = [
        moving_average(&seed_mean(|r| r.pu1_reward), PLOT_WINDOW),
        moving_average(&seed_mean(|r| r.pu2_reward), PLOT_WINDOW),
        moving_average(&seed_mean(|r| r.total_pu_reward), PLOT_WINDOW),
        moving_average(&seed_mean(|r| r.mean_su_reward), PLOT_WINDOW),
        moving_average(&seed_mean(|r| r.kl_mean), PLOT_WINDOW),
    ];
    for c in &columns {
        ensure_finite("plot", c)?;
    }
    let mut out = String::new();
    out.push_str(PLOT_HEADER);
    out.push('\n');
    for i in 0..len {
        write!(out, "{}", first.records[i].iteration).expect("infallible");
        for c in &columns {
            write!(out, ",{}", c[i]).expect("infallible");
        }
        out.push('\n');
    }
    let cfg = &first.config;
    let path = dir.join(format!("plotdata_{}_{}.csv", cfg.num_sus, cfg.channels_per_pu));
    write_file(&path, &out)?;
    Ok(path)
}

pub fn write_summary(dir: &Path, report: &CaseReport) -> Result<PathBuf> {
    for s in &report.summaries {
        for stat in [s.pu1, s.pu2, s.su, s.total_pu] {
            ensure_finite("summary", &[stat.mean, stat.std])?;
        }
    }
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    write_file(&path, &text)?;
    Ok(path)
}

pub fn read_summary(path: &Path) -> Result<CaseReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
