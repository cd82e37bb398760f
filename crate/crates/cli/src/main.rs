use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use ardnet::ard::{ArdVector, BoundQuerySet, Norm};
use ardnet::dynamics::{sample_network, SweepConfig};
use ardnet::experiment::{resolve_query_set, run_experiment, run_query_comparison, ExperimentConfig, Preset, Study};
use ardnet::meanfield::{solve_payoffs, MeanFieldOptions};
use ardnet::oracle::{ExactLaw, MAX_EXACT_N};
use ardnet::sampler::{credible_interval, run_chain, write_trace_csv, TraceFilter};
use ardnet::validate::{oracle_validate, Suite};
use ardnet::{BoundModel, Network, Theta};
use clap::{Args, Parser, Subcommand};

/// Bayesian estimation of network formation models from aggregate
/// relational data.
#[derive(Parser)]
#[command(name = "ardnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a network from the stationary law by Glauber sweeps.
    SimulateNetwork {
        #[command(flatten)]
        study: StudyArgs,
        /// Comma-separated parameter vector; the preset's truth by default.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        #[arg(long, default_value_t = 200)]
        sweeps: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Answer the query set for a network (JSON from simulate-network).
    ComputeArd {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean-field log normalizing constant (and the exact value for n <= 5).
    Meanfield {
        #[command(flatten)]
        study: StudyArgs,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the posterior given observed ARD (JSON from compute-ard).
    Estimate {
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long)]
        psi0: PathBuf,
        /// Output directory for trace.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-check modules against exhaustive enumeration on small networks.
    OracleValidate {
        /// stationary, meanfield, sufficiency, kernel or all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, compute ARD and estimate, once per replication.
    RunExperiment {
        #[command(flatten)]
        study: StudyArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long)]
        replications: Option<usize>,
        /// Use the short 30 x 50 schedule unless overridden.
        #[arg(long)]
        desk: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a preset query set as JSON.
    ExportQueries {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct StudyArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    /// Query-set preset name or JSON file; several comma-separated names
    /// are compared side by side by run-experiment.
    #[arg(long, value_delimiter = ',')]
    queries: Option<Vec<String>>,
    /// CSV with header `id,<attr>,...`.
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// Nodes for synthetic ages.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SamplerArgs {
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    delta0: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    norm: Option<Norm>,
}

impl StudyArgs {
    fn config(&self, desk: bool) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None if desk => ExperimentConfig::desk(self.preset.unwrap_or_default()),
            None => ExperimentConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.preset = p;
        }
        if let Some(q) = &self.queries {
            cfg.query_set = q.first().cloned();
        }
        if let Some(c) = &self.covariates {
            cfg.covariates = Some(c.clone());
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

impl SamplerArgs {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        let s = &mut cfg.sampler;
        if let Some(v) = self.rounds {
            s.rounds = v;
        }
        if let Some(v) = self.draws {
            s.draws_per_round = v;
        }
        if let Some(v) = self.delta0 {
            s.delta0 = Some(v);
        }
        if let Some(v) = self.sweeps {
            s.sweeps_per_proposal = v;
        }
        if let Some(v) = self.norm {
            s.norm = v;
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display())),
        None => stdout(&format!("{text}\n")),
    }
}

/// Writes to stdout, treating a closed pipe as success.
fn stdout(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn theta_or_truth(study: &Study, theta: &Option<Vec<f64>>) -> anyhow::Result<Theta> {
    let flat = theta.clone().unwrap_or_else(|| study.theta_true.clone());
    Ok(Theta::from_flat(&study.model, &flat)?)
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    SuiteFailed,
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    match cli.command {
        Command::SimulateNetwork { study, theta, sweeps, out } => {
            let cfg = study.config(false)?;
            let s = cfg.resolve()?;
            let theta = theta_or_truth(&s, &theta)?;
            let g = sample_network(&s.x, &s.model, &theta, &SweepConfig::new(sweeps, cfg.seed))?;
            emit(out.as_deref(), &serde_json::to_string_pretty(&g)?)?;
        }
        Command::ComputeArd { study, network, out } => {
            let s = study.config(false)?.resolve()?;
            let g: Network = serde_json::from_str(&fs::read_to_string(&network)?)?;
            if g.n() != s.x.n() {
                bail!(ardnet::Error::Validation(format!(
                    "network has {} nodes, covariates have {}",
                    g.n(),
                    s.x.n()
                )));
            }
            let psi = BoundQuerySet::new(&s.queries, &s.x)?.compute(&g);
            emit(out.as_deref(), &serde_json::to_string(&psi)?)?;
        }
        Command::Meanfield { study, theta, out } => {
            let s = study.config(false)?.resolve()?;
            let theta = theta_or_truth(&s, &theta)?;
            let payoffs = BoundModel::new(&s.model, &s.x)?.payoffs(&theta)?;
            let st = solve_payoffs(&payoffs, &MeanFieldOptions::default())?;
            let exact = if s.x.n() <= MAX_EXACT_N {
                Some(ExactLaw::new(&payoffs)?.log_c())
            } else {
                None
            };
            let report = serde_json::json!({
                "theta": theta.to_flat(),
                "log_c_mf": st.bound,
                "phi_mf": st.phi_mf,
                "converged": st.converged,
                "iterations": st.iterations,
                "log_c_exact": exact,
            });
            emit(out.as_deref(), &serde_json::to_string_pretty(&report)?)?;
        }
        Command::Estimate { study, sampler, psi0, out } => {
            let mut cfg = study.config(false)?;
            sampler.apply(&mut cfg);
            let s = cfg.resolve()?;
            let psi0: ArdVector = serde_json::from_str(&fs::read_to_string(&psi0)?)?;
            let mut sc = s.sampler.clone();
            sc.rng_seed = cfg.seed;
            let chain = run_chain(&psi0, &s.x, &s.model, &s.queries, &sc)?;
            let filter = TraceFilter {
                burn_in_rounds: sc.burn_in(),
                drop_rounds: if cfg.drop_flagged_rounds {
                    chain.flagged_rounds.clone()
                } else {
                    Vec::new()
                },
                feasible_only: true,
            };
            let ci = credible_interval(&chain.records, cfg.credible_level, &filter)?;
            fs::create_dir_all(&out)?;
            write_trace_csv(fs::File::create(out.join("trace.csv"))?, &chain.records)?;
            let coords: Vec<_> = s
                .coordinate_names
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    serde_json::json!({
                        "name": name, "mean": ci.mean[k], "ci_lo": ci.lo[k], "ci_hi": ci.hi[k], "level": ci.level,
                    })
                })
                .collect();
            let summary = serde_json::json!({
                "config": cfg,
                "seed": cfg.seed,
                "coordinates": coords,
                "round_acceptance": chain.round_acceptance,
                "dropped_rounds": ci.dropped_rounds,
                "delta0": chain.delta0,
                "meanfield_failures": chain.meanfield_failures,
                "first_feasible_iter": chain.first_feasible_iter,
            });
            fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        }
        Command::OracleValidate { suite, seed, out } => {
            let suites: Vec<Suite> = if suite == "all" {
                Suite::ALL.to_vec()
            } else {
                vec![suite.parse()?]
            };
            let reports = suites
                .into_iter()
                .map(|s| oracle_validate(s, seed))
                .collect::<ardnet::Result<Vec<_>>>()?;
            let passed = reports.iter().all(|r| r.passed);
            emit(out.as_deref(), &serde_json::to_string_pretty(&reports)?)?;
            if !passed {
                return Ok(Status::SuiteFailed);
            }
        }
        Command::RunExperiment {
            study,
            sampler,
            replications,
            desk,
            out,
        } => {
            let mut cfg = study.config(desk)?;
            sampler.apply(&mut cfg);
            if replications.is_some() {
                cfg.replications = replications;
            }
            match study.queries.as_deref() {
                Some(list) if list.len() > 1 => {
                    let reports = run_query_comparison(&cfg, list, Some(&out))?;
                    for (name, r) in list.iter().zip(&reports) {
                        log::info!("{name}: {} replications", r.summary.replications.len());
                    }
                    stdout(&fs::read_to_string(out.join("table1.md"))?)?;
                }
                _ => {
                    let report = run_experiment(&cfg, Some(&out))?;
                    stdout(&fs::read_to_string(out.join("ci_table.md"))?)?;
                    if report.summary.succeeded().next().is_none() {
                        bail!("every replication failed; see {}", out.join("manifest.json").display());
                    }
                }
            }
        }
        Command::ExportQueries { name, out } => {
            let qs = resolve_query_set(&name)?;
            emit(out.as_deref(), &qs.to_json())?;
        }
    }
    Ok(Status::Ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::SuiteFailed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_input_error(&e) { 1 } else { 2 })
        }
    }
}

/// Bad configuration, malformed or missing input files.
fn is_input_error(e: &anyhow::Error) -> bool {
    let missing = |io: &std::io::Error| io.kind() == std::io::ErrorKind::NotFound;
    match e.downcast_ref::<ardnet::Error>() {
        Some(ardnet::Error::Io(io)) => missing(io),
        Some(err) => err.is_input_error(),
        None => e.downcast_ref::<serde_json::Error>().is_some() || e.downcast_ref::<std::io::Error>().is_some_and(missing),
    }
}
