//! Acceptance suite. Runs with a custom harness so that every criterion
//! prints its own PASS/FAIL line; exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use ardnet::experiment::{run_experiment, run_query_comparison, ExperimentConfig, ExperimentSummary, Preset};
use ardnet::sampler::{adapt_delta, delta_multiplier};
use ardnet::validate::{
    example2_grid, example2_posterior_equality, example2_sufficiency, kernel_detailed_balance, mf_bound_violation,
    separable_exact_error, separable_mf_error, stationary_tv,
};

const SEED: u64 = 20240;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> ardnet::Result<Outcome> {
    Ok(Outcome {
        passed,
        detail: detail.into(),
    })
}

fn separable_exactness() -> ardnet::Result<Outcome> {
    let mf = separable_mf_error(SEED)?;
    let exact = separable_exact_error(SEED)?;
    outcome(
        mf.passed && exact.passed,
        format!("mean-field err {:.2e} (< 1e-8), exact err {:.2e} (< 1e-10)", mf.measured, exact.measured),
    )
}

fn bound_sign() -> ardnet::Result<Outcome> {
    let c = mf_bound_violation()?;
    outcome(c.passed, format!("max(log c_mf - log c_exact) = {:.2e} (< 1e-9)", c.measured))
}

fn stationary_fidelity() -> ardnet::Result<Outcome> {
    let c = stationary_tv(SEED, 1_000_000)?;
    outcome(c.passed, format!("TV = {:.4} (< 0.02) over 1e6 sweeps", c.measured))
}

fn sufficiency() -> ardnet::Result<Outcome> {
    let points = example2_grid()?.len();
    let var = example2_sufficiency()?;
    let eq = example2_posterior_equality()?;
    outcome(
        points >= 25 && var.passed && eq.passed,
        format!(
            "{points} grid points, variation {:.2e} (< 1e-10), posterior diff {:.2e} (< 1e-9)",
            var.measured, eq.measured
        ),
    )
}

fn detailed_balance() -> ardnet::Result<Outcome> {
    let db = kernel_detailed_balance(SEED, 200)?;
    outcome(db.mf_proposal < 1e-9, format!("max residual {:.2e} (< 1e-9) over 200 pairs", db.mf_proposal))
}

fn delta_table() -> ardnet::Result<Outcome> {
    let table = [
        (0.9, 0.98),
        (0.5 + 1e-12, 0.98),
        (0.5, 0.99),
        (0.3, 0.99),
        (0.18 + 1e-12, 0.99),
        (0.18, 1.0),
        (0.05, 1.0),
        (0.01 + 1e-12, 1.0),
        (0.01, 1.005),
        (0.005, 1.005),
        (0.003 + 1e-12, 1.005),
        (0.003, 1.01),
        (0.0, 1.01),
    ];
    let bad: Vec<_> = table.iter().filter(|(r, m)| delta_multiplier(*r) != *m).collect();
    let examples = adapt_delta(2.0, 0.6) == 1.96 && adapt_delta(2.0, 0.05) == 2.0 && adapt_delta(2.0, 0.001) == 2.02;
    outcome(
        bad.is_empty() && examples,
        format!("{} rates checked, mismatches {:?}", table.len(), bad),
    )
}

fn free_coords(s: &ExperimentSummary) -> Vec<(usize, String)> {
    s.pooled
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.fixed)
        .map(|(k, c)| (k, c.name.clone()))
        .collect()
}

fn design1_recovery() -> ardnet::Result<Outcome> {
    let mut cfg = ExperimentConfig::desk(Preset::Design1);
    cfg.replications = Some(4);
    cfg.seed = SEED;
    let report = run_experiment(&cfg, None)?;
    let s = &report.summary;
    let k = 1;
    let mut covered = 0;
    let mut lines = Vec::new();
    for r in &s.replications {
        match (&r.error, r.coordinates.get(k)) {
            (None, Some(c)) => {
                covered += usize::from(c.covers_truth());
                lines.push(format!("({:.3}, {:.3}) mean {:.3}", c.ci_lo, c.ci_hi, c.mean));
            }
            (e, _) => lines.push(format!("failed: {}", e.as_deref().unwrap_or("missing"))),
        }
    }
    let mean = s.pooled[k].mean;
    outcome(
        covered >= 3 && mean > -2.0 && mean < 0.0,
        format!("covers -1 in {covered}/4, pooled mean {mean:.3}; {}", lines.join("; ")),
    )
}

fn design2_behaviour() -> ardnet::Result<Outcome> {
    let mut cfg = ExperimentConfig::desk(Preset::Design2);
    cfg.replications = Some(4);
    cfg.seed = SEED;
    let dir = tempfile::tempdir()?;
    let sets = ["design2-benchmark".to_string(), "design2-augmented".to_string()];
    let reports = run_query_comparison(&cfg, &sets, Some(dir.path()))?;
    let table = fs::read_to_string(dir.path().join("table1.md"))?;
    println!("{table}");

    let mut ok = !table.trim().is_empty();
    let mut detail = Vec::new();
    for (name, report) in sets.iter().zip(&reports) {
        let s = &report.summary;
        for (k, coord) in free_coords(s) {
            let covered = s
                .replications
                .iter()
                .filter(|r| r.coordinates.get(k).is_some_and(|c| c.covers_truth()))
                .count();
            ok &= covered >= 3;
            detail.push(format!("{name} {coord} covers {covered}/4"));
        }
        for r in &s.replications {
            let cells: Vec<String> = r
                .coordinates
                .iter()
                .filter(|c| !c.fixed)
                .map(|c| format!("{} ({:.2}, {:.2})", c.name, c.ci_lo, c.ci_hi))
                .collect();
            println!("    {name} rep {}: {}", r.index, cells.join(", "));
        }
    }
    // gamma_1 is the last coordinate; compare widths replication by replication.
    let g = reports[0].summary.pooled.len() - 1;
    let narrower = reports[0]
        .summary
        .replications
        .iter()
        .zip(&reports[1].summary.replications)
        .filter(|(b, a)| match (b.coordinates.get(g), a.coordinates.get(g)) {
            (Some(b), Some(a)) => a.width() <= b.width(),
            _ => false,
        })
        .count();
    ok &= narrower >= 3;
    detail.push(format!("augmented gamma CI no wider in {narrower}/4"));
    outcome(ok, detail.join("; "))
}

fn same_files(a: &Path, b: &Path, files: &[&str]) -> ardnet::Result<Vec<String>> {
    let mut differ = Vec::new();
    for f in files {
        if fs::read(a.join(f))? != fs::read(b.join(f))? {
            differ.push(f.to_string());
        }
    }
    Ok(differ)
}

fn determinism() -> ardnet::Result<Outcome> {
    let mut differ = Vec::new();
    for preset in [Preset::Design1, Preset::Design2] {
        let mut cfg = ExperimentConfig::desk(preset);
        cfg.replications = Some(1);
        cfg.seed = SEED;
        let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
        run_experiment(&cfg, Some(a.path()))?;
        run_experiment(&cfg, Some(b.path()))?;
        let files = ["summary.json", "ci_table.md", "rep_0/trace.csv", "rep_0/plot_data.csv", "rep_0/truth.json"];
        differ.extend(
            same_files(a.path(), b.path(), &files)?
                .into_iter()
                .map(|f| format!("{}:{f}", preset.name())),
        );
    }
    outcome(differ.is_empty(), format!("differing artifacts: {differ:?}"))
}

type Criterion = (&'static str, fn() -> ardnet::Result<Outcome>, Duration);

fn main() {
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let criteria: [Criterion; 9] = [
        ("separable exactness", separable_exactness, Duration::from_secs(10)),
        ("mean-field bound sign", bound_sign, minutes(1)),
        ("stationary-law fidelity", stationary_fidelity, minutes(2)),
        ("sufficiency and posterior equality", sufficiency, minutes(1)),
        ("kernel detailed balance", detailed_balance, minutes(1)),
        ("tolerance schedule table", delta_table, Duration::from_secs(1)),
        ("design 1 desk-scale recovery", design1_recovery, minutes(10)),
        ("design 2 desk-scale behaviour", design2_behaviour, minutes(20)),
        ("determinism", determinism, minutes(20)),
    ];
    let mut failed = Vec::new();
    for (k, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && elapsed <= *budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let verdict = if passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {} {verdict}: {name} [{:.2}s, budget {}s] {detail}",
            k + 1,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if !passed {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
