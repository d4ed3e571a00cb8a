use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_episode, RunResult};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_runs, RunSummary};

use super::config::ExperimentSpec;
use super::output::{write_plotdata, write_run_csv, write_summary};

/// A `(M, C, seed)` cell that did not produce a usable run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub num_sus: usize,
    pub channels_per_pu: usize,
    pub seed: u64,
    pub error: String,
}

/// Contents of a case's `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: String,
    pub iterations: usize,
    pub summaries: Vec<RunSummary>,
    pub failures: Vec<CellFailure>,
}

impl CaseReport {
    pub fn is_success(&self) -> bool {
        self.failures.is_empty()
    }
}

fn run_cell(spec: &ExperimentSpec, m: usize, c: usize, seed: u64) -> Result<RunResult> {
    let run = run_episode(&spec.cell_config(m, c, seed))?;
    let finite = run.records.iter().all(|r| {
        [r.pu1_reward, r.pu2_reward, r.total_pu_reward, r.mean_su_reward, r.kl_mean]
            .iter()
            .all(|v| v.is_finite())
    });
    if !finite {
        return Err(Error::invalid("run produced a non-finite value"));
    }
    Ok(run)
}

/// Runs every `(M, C, seed)` cell of `spec`, aggregates each grid point and
/// writes run logs, plot data and `summary.json` into `spec.output_dir`.
///
/// A failing cell is recorded in the report and does not stop the others.
/// Output is identical for identical specs regardless of `jobs`.
pub fn run_case(spec: &ExperimentSpec) -> Result<CaseReport> {
    spec.validate()?;
    let dir = &spec.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let cells: Vec<(usize, usize, u64)> = spec
        .grid
        .iter()
        .flat_map(|&(m, c)| spec.seeds.iter().map(move |&s| (m, c, s)))
        .collect();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = spec.jobs {
        pool = pool.num_threads(jobs);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<RunResult>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, c, s)| run_cell(spec, m, c, s))
            .collect()
    });

    let mut report = CaseReport {
        case: spec.case_id.clone(),
        iterations: spec.base.max_iterations,
        summaries: Vec::new(),
        failures: Vec::new(),
    };
    let mut outcomes = outcomes.into_iter();
    for &(m, c) in &spec.grid {
        let mut runs = Vec::with_capacity(spec.seeds.len());
        for &seed in &spec.seeds {
            match outcomes.next().expect("one outcome per cell") {
                Ok(run) => runs.push(run),
                Err(e) => report.failures.push(CellFailure {
                    num_sus: m,
                    channels_per_pu: c,
                    seed,
                    error: e.to_string(),
                }),
            }
        }
        if runs.is_empty() {
            continue;
        }
        for run in &runs {
            write_run_csv(dir, run)?;
        }
        write_plotdata(dir, &runs)?;
        report.summaries.push(aggregate_runs(&spec.case_id, &runs)?);
    }
    write_summary(dir, &report)?;
    Ok(report)
}
