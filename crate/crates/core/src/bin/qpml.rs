use std::process::ExitCode;

use clap::Parser;
use qpml::harness::{parse_config, run_case, Args};
use qpml::RunSummary;

fn main() -> ExitCode {
    let args = Args::parse();
    let spec = match parse_config(&args) {
        Ok(spec) => spec,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    eprintln!(
        "running {} ({} grid points x {} seeds, {} iterations) into {}",
        spec.case_id,
        spec.grid.len(),
        spec.seeds.len(),
        spec.base.max_iterations,
        spec.output_dir.display()
    );
    let report = match run_case(&spec) {
        Ok(report) => report,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    println!("{}", RunSummary::TABLE_HEADER);
    for s in &report.summaries {
        println!("{}", s.table_row());
    }
    for f in &report.failures {
        eprintln!(
            "failed: M={} C={} seed={}: {}",
            f.num_sus, f.channels_per_pu, f.seed, f.error
        );
    }
    if report.is_success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
