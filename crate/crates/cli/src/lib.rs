//! Config-driven runner for the jumpsmooth estimators and checks.
//!
//! A config declares a model, named box sets, named functionals and a list
//! of checks. [`run`] executes the checks in declaration order and returns a
//! [`Report`] plus any plot tables.

pub mod bundled;
pub mod checks;
pub mod config;
pub mod report;

use std::time::Instant;

use jumpsmooth::parallel::map_indexed;

pub use config::{load, load_bytes, CheckKind, CheckSpec, Diagnostic, Experiment};
pub use report::{Format, Manifest, Record, Report, Table};

pub struct RunOutput {
    pub report: Report,
    /// `(check name, table)` pairs in declaration order.
    pub tables: Vec<(String, Table)>,
    /// Wall time per check in seconds; kept out of the report.
    pub timings: Vec<(String, f64)>,
}

/// Run every check. With `parallel_checks` the checks themselves fan out
/// over the worker pool; each has its own seed, so results do not change.
pub fn run(exp: &Experiment, parallel_checks: bool) -> RunOutput {
    let one = |i: usize| {
        let start = Instant::now();
        let out = checks::run_check(exp, &exp.checks[i]);
        (out, start.elapsed().as_secs_f64())
    };
    let outcomes: Vec<_> =
        if parallel_checks { map_indexed(exp.checks.len(), one) } else { (0..exp.checks.len()).map(one).collect() };
    let mut records = Vec::new();
    let mut tables = Vec::new();
    let mut timings = Vec::new();
    for (out, secs) in outcomes {
        let name = out.record.check.clone();
        tables.extend(out.tables.into_iter().map(|t| (name.clone(), t)));
        timings.push((name, secs));
        records.push(out.record);
    }
    let passed = records.iter().filter(|r| r.pass).count();
    let manifest = Manifest {
        config_sha256: exp.config_sha256.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: exp.seed,
        checks: records.len(),
        passed,
        all_pass: passed == records.len(),
    };
    RunOutput { report: Report { manifest, records }, tables, timings }
}
