//! Divergence, smoothing and cross-seed summaries.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::RunResult;
use crate::error::{Error, Result};
use crate::market::DemandDistribution;

/// `sum_i p_i ln(p_i / q_i)` in nats, with `0 ln(0 / q) = 0`.
pub fn relative_entropy(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid(format!(
            "distributions have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::invalid(format!(
                "estimate is zero at index {i} where the reference has mass {pi}"
            )));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total)
}

/// KL divergence of the estimate from the true demand, in nats.
pub fn kl_divergence(true_d: &DemandDistribution, est_d: &DemandDistribution) -> Result<f64> {
    relative_entropy(true_d.weights(), est_d.weights())
}

/// Trailing mean over up to `window` points; early entries average whatever
/// history exists.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "moving average window must be at least 1");
    (0..series.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            let slice = &series[start..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        if values.is_empty() {
            return Stat::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat {
            mean,
            std: var.sqrt(),
        }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} ± {:.2}", self.mean, self.std)
    }
}

/// Tail-averaged rewards of one `(M, C)` cell across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub case: String,
    pub num_sus: usize,
    pub channels_per_pu: usize,
    pub pu1: Stat,
    pub pu2: Stat,
    pub su: Stat,
    pub total_pu: Stat,
    /// Mean convergence iteration over the runs that converged.
    pub mean_converged_at: Option<f64>,
    pub converged_runs: usize,
    pub seeds: Vec<u64>,
}

impl RunSummary {
    pub const TABLE_HEADER: &'static str = "CASE\tC\tPU1\tPU2\tSUs";

    /// One tab-separated row matching [`RunSummary::TABLE_HEADER`].
    pub fn table_row(&self) -> String {
        format!(
            "{} (M={})\t{}\t{}\t{}\t{}",
            self.case, self.num_sus, self.channels_per_pu, self.pu1, self.pu2, self.su
        )
    }
}

/// Aggregates runs that share every setting except the seed.
pub fn aggregate_runs(case: &str, results: &[RunResult]) -> Result<RunSummary> {
    let first = results
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate zero runs"))?;
    let reference = crate::market::MarketConfig {
        seed: 0,
        ..first.config.clone()
    };
    for r in results {
        let cfg = crate::market::MarketConfig {
            seed: 0,
            ..r.config.clone()
        };
        if cfg != reference {
            return Err(Error::invalid(format!(
                "run with seed {} differs from seed {} beyond the seed",
                r.config.seed, first.config.seed
            )));
        }
    }
    let column = |f: fn(&RunResult) -> f64| Stat::of(&results.iter().map(f).collect::<Vec<_>>());
    let converged: Vec<f64> = results
        .iter()
        .filter_map(|r| r.converged_at.map(|c| c as f64))
        .collect();
    Ok(RunSummary {
        case: case.to_string(),
        num_sus: reference.num_sus,
        channels_per_pu: reference.channels_per_pu,
        pu1: column(|r| r.final_means.pu1),
        pu2: column(|r| r.final_means.pu2),
        su: column(|r| r.final_means.su),
        total_pu: column(|r| r.final_means.total_pu()),
        mean_converged_at: (!converged.is_empty())
            .then(|| converged.iter().sum::<f64>() / converged.len() as f64),
        converged_runs: converged.len(),
        seeds: results.iter().map(|r| r.config.seed).collect(),
    })
}
