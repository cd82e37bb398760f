//! Covariate files, experiment presets and simulation studies.
//!
//! A study runs three stages per replication: simulate a ground-truth
//! network at `theta_true`, compute its ARD, then sample the posterior from
//! the ARD alone. Replications run in parallel and write their own files.

use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ard::{builtin_query_set, ArdQuery, ArdQuerySet, ArdVector, BoundQuerySet, Comparison, Direction, Predicate};
use crate::dynamics::{sample_network, SweepConfig};
use crate::error::{Error, Result};
use crate::model::{CovariateTable, Network, PairFeature, Theta, UtilityModel};
use crate::sampler::{credible_interval, run_chain, write_trace_csv, BoxPrior, ChainOutput, CoordPrior, SamplerConfig, TraceFilter};

/// Seed of the synthetic age table used when no covariate file is given.
pub const SYNTHETIC_AGE_SEED: u64 = 1806;

/// Integer ages uniform on `[18, 80]`.
pub fn synthetic_ages(n: usize, seed: u64) -> Result<CovariateTable> {
    if n < 2 {
        return Err(Error::validation("need n >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ages = (0..n).map(|_| rng.random_range(18..=80) as f64).collect();
    CovariateTable::new(n).with_attribute("age", ages)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            msg: match kind {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("expected {expected_len} fields, found {len}")
                }
                other => format!("{other:?}"),
            },
        },
    }
}

/// Parses `id,<attr1>,<attr2>,...`; rows become nodes in file order.
pub fn read_covariates<R: Read>(reader: R) -> Result<CovariateTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Parse {
            line: 1,
            msg: "missing header row".into(),
        });
    }
    if &header[0] != "id" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("first column must be `id`, found `{}`", &header[0]),
        });
    }
    if header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "no attribute columns".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    let mut ids = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if !ids.insert(rec[0].to_string()) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate id `{}`", &rec[0]),
            });
        }
        for (k, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("non-numeric value `{cell}` in column `{}`", names[k]),
            })?;
            columns[k].push(v);
        }
    }
    let n = ids.len();
    if n == 0 {
        return Err(Error::Parse {
            line: 2,
            msg: "no data rows".into(),
        });
    }
    let mut table = CovariateTable::new(n);
    for (name, col) in names.iter().zip(columns) {
        table.insert(name, col)?;
    }
    Ok(table)
}

pub fn load_covariates(path: &Path) -> Result<CovariateTable> {
    read_covariates(fs::File::open(path)?)
}

/// Writes the table with ids `0..n`.
pub fn write_covariates<W: Write>(writer: W, x: &CovariateTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string()];
    header.extend(x.names().iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    let cols: Vec<&[f64]> = x.names().iter().map(|n| x.get(n)).collect::<Result<_>>()?;
    for i in 0..x.n() {
        let mut row = vec![i.to_string()];
        row.extend(cols.iter().map(|c| c[i].to_string()));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Four nodes with wealth 600, 500, 200, 100.
pub fn example2_covariates() -> CovariateTable {
    CovariateTable::new(4)
        .with_attribute("wealth", vec![600.0, 500.0, 200.0, 100.0])
        .expect("four values")
}

/// Link value `theta_0 + theta_1 * [j is i's nearest neighbour in wealth]`.
/// On these four wealth levels the nearest neighbour is exactly the other
/// node in the same 400-wide wealth band.
pub fn example2_model() -> UtilityModel {
    UtilityModel {
        direct_features: vec![PairFeature::Constant, PairFeature::same_bin("wealth", 400.0)],
        ..Default::default()
    }
}

/// Out-degree, in-degree, and out-links to wealth above 400.
pub fn example2_queries() -> ArdQuerySet {
    ArdQuerySet::new(vec![
        ArdQuery::new("out_total", Direction::Outbound, Predicate::AlwaysTrue),
        ArdQuery::new("in_total", Direction::Inbound, Predicate::AlwaysTrue),
        ArdQuery::new(
            "out_wealth_gt400",
            Direction::Outbound,
            Predicate::AlterAttrThreshold {
                attr: "wealth".into(),
                op: Comparison::Gt,
                value: 400.0,
            },
        ),
    ])
    .expect("preset is valid")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `5 + theta |age_i - age_j|`, constant pinned at 5.
    #[default]
    Design1,
    /// `beta_0 + beta_1 |age_i - age_j| / 20` plus reciprocity `gamma_1`,
    /// `beta_0` pinned at 1.
    Design2,
    /// The four-node wealth example.
    Example2,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Design1, Preset::Design2, Preset::Example2];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Design1 => "design1",
            Preset::Design2 => "design2",
            Preset::Example2 => "example2",
        }
    }

    pub fn model(self) -> UtilityModel {
        match self {
            Preset::Design1 => UtilityModel {
                direct_features: vec![PairFeature::Constant, PairFeature::abs_diff("age", 1.0)],
                ..Default::default()
            },
            Preset::Design2 => UtilityModel {
                direct_features: vec![PairFeature::Constant, PairFeature::abs_diff("age", 20.0)],
                mutual_features: vec![PairFeature::Constant],
                ..Default::default()
            },
            Preset::Example2 => example2_model(),
        }
    }

    pub fn theta_true(self) -> Vec<f64> {
        match self {
            Preset::Design1 => vec![5.0, -1.0],
            Preset::Design2 => vec![1.0, -1.0, 0.1],
            Preset::Example2 => vec![-1.0, 1.0],
        }
    }

    pub fn query_set(self) -> &'static str {
        match self {
            Preset::Design1 => "design1",
            Preset::Design2 => "design2-benchmark",
            Preset::Example2 => "example2",
        }
    }

    pub fn prior(self) -> BoxPrior {
        let u = |lo, hi| CoordPrior::Uniform { lo, hi };
        let coords = match self {
            Preset::Design1 => vec![CoordPrior::Fixed { value: 5.0 }, u(-3.0, 1.0)],
            Preset::Design2 => vec![CoordPrior::Fixed { value: 1.0 }, u(-3.0, 3.0), u(-3.0, 3.0)],
            Preset::Example2 => vec![u(-3.0, 3.0), u(-3.0, 3.0)],
        };
        BoxPrior { coords }
    }

    pub fn theta_step(self) -> Vec<f64> {
        match self {
            Preset::Design1 => vec![0.0, 0.1],
            Preset::Design2 => vec![0.0, 0.3, 0.3],
            Preset::Example2 => vec![0.3, 0.3],
        }
    }

    pub fn delta0_scale(self) -> f64 {
        0.3
    }

    pub fn replications(self) -> usize {
        match self {
            Preset::Design2 => 4,
            _ => 1,
        }
    }

    /// Fixed covariates, if the preset has them.
    pub fn covariates(self) -> Option<CovariateTable> {
        match self {
            Preset::Example2 => Some(example2_covariates()),
            _ => None,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown preset `{s}` (design1, design2, example2)")))
    }
}

/// Named query set or a JSON file.
pub fn resolve_query_set(name: &str) -> Result<ArdQuerySet> {
    if name == "example2" {
        return Ok(example2_queries());
    }
    if let Some(qs) = builtin_query_set(name) {
        return Ok(qs);
    }
    let path = Path::new(name);
    if path.exists() {
        return ArdQuerySet::from_json(&fs::read_to_string(path)?);
    }
    Err(Error::validation(format!(
        "query set `{name}` is neither a preset (design1, design2-benchmark, design2-augmented, example2) nor a file"
    )))
}

/// A simulation study. Unset fields fall back to the preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// Replaces the preset's model.
    pub model: Option<UtilityModel>,
    /// JSON file holding a model; used when `model` is unset.
    pub model_file: Option<PathBuf>,
    pub theta_true: Option<Vec<f64>>,
    /// Preset name or path to a query-set JSON file.
    pub query_set: Option<String>,
    /// Covariate CSV; synthetic ages when absent.
    pub covariates: Option<PathBuf>,
    /// Number of nodes for synthetic ages.
    pub n: usize,
    pub covariate_seed: u64,
    /// Prior and step fall back to the preset when left empty.
    pub sampler: SamplerConfig,
    pub replications: Option<usize>,
    pub seed: u64,
    /// Glauber sweeps used to draw each ground-truth network.
    pub truth_sweeps: usize,
    pub credible_level: f64,
    /// Leave out rounds whose tolerance update hit the guard.
    pub drop_flagged_rounds: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: Preset::Design1,
            model: None,
            model_file: None,
            theta_true: None,
            query_set: None,
            covariates: None,
            n: 15,
            covariate_seed: SYNTHETIC_AGE_SEED,
            sampler: SamplerConfig::default(),
            replications: None,
            seed: 0,
            truth_sweeps: 200,
            credible_level: 0.9,
            drop_flagged_rounds: true,
        }
    }
}

impl ExperimentConfig {
    pub fn for_preset(preset: Preset) -> Self {
        ExperimentConfig {
            preset,
            ..Default::default()
        }
    }

    /// Preset with the short schedule used for quick runs: 30 rounds of 50.
    pub fn desk(preset: Preset) -> Self {
        let mut cfg = Self::for_preset(preset);
        cfg.sampler.rounds = 30;
        cfg.sampler.draws_per_round = 50;
        cfg
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn resolve(&self) -> Result<Study> {
        let model = match (&self.model, &self.model_file) {
            (Some(m), _) => m.clone(),
            (None, Some(path)) => serde_json::from_str(&fs::read_to_string(path)?)?,
            (None, None) => self.preset.model(),
        };
        let custom_model = self.model.is_some() || self.model_file.is_some();
        let dim = model.dim();
        let theta_true = match &self.theta_true {
            Some(t) => t.clone(),
            None if custom_model => return Err(Error::validation("a custom model needs theta_true")),
            None => self.preset.theta_true(),
        };
        if theta_true.len() != dim {
            return Err(Error::validation(format!(
                "theta_true has {} entries, model has {dim}",
                theta_true.len()
            )));
        }
        let query_name = self.query_set.clone().unwrap_or_else(|| self.preset.query_set().to_string());
        let queries = resolve_query_set(&query_name)?;
        let x = match (&self.covariates, self.preset.covariates()) {
            (Some(path), _) => load_covariates(path)?,
            (None, Some(x)) => x,
            (None, None) => synthetic_ages(self.n, self.covariate_seed)?,
        };
        let mut sampler = self.sampler.clone();
        if sampler.prior.coords.is_empty() {
            if custom_model {
                return Err(Error::validation("a custom model needs sampler.prior"));
            }
            sampler.prior = self.preset.prior();
        }
        if sampler.theta_step.is_empty() {
            sampler.theta_step = if custom_model { vec![0.1; dim] } else { self.preset.theta_step() };
        }
        if sampler.delta0.is_none() && sampler.delta0_scale.is_none() {
            sampler.delta0_scale = Some(self.preset.delta0_scale());
        }
        sampler.validate(dim)?;
        let replications = self.replications.unwrap_or(self.preset.replications());
        if replications == 0 {
            return Err(Error::validation("replications must be >= 1"));
        }
        if !(self.credible_level > 0.0 && self.credible_level < 1.0) {
            return Err(Error::validation("credible_level must lie in (0, 1)"));
        }
        if self.truth_sweeps == 0 {
            return Err(Error::validation("truth_sweeps must be >= 1"));
        }
        Ok(Study {
            coordinate_names: model.coordinate_names(),
            model,
            theta_true,
            query_name,
            queries,
            x,
            sampler,
            replications,
        })
    }
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug)]
pub struct Study {
    pub model: UtilityModel,
    pub coordinate_names: Vec<String>,
    pub theta_true: Vec<f64>,
    pub query_name: String,
    pub queries: ArdQuerySet,
    pub x: CovariateTable,
    pub sampler: SamplerConfig,
    pub replications: usize,
}

/// Independent seed for stream `stream` of replication `index`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream((stream << 32) | index);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordSummary {
    pub name: String,
    pub truth: f64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub level: f64,
    pub fixed: bool,
}

impl CoordSummary {
    pub fn covers_truth(&self) -> bool {
        self.ci_lo <= self.truth && self.truth <= self.ci_hi
    }

    pub fn width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub index: usize,
    pub truth_seed: u64,
    pub chain_seed: u64,
    pub error: Option<String>,
    pub truth_links: usize,
    pub psi0_norm: f64,
    pub delta0: f64,
    pub final_delta: f64,
    pub coordinates: Vec<CoordSummary>,
    pub round_acceptance: Vec<f64>,
    pub dropped_rounds: Vec<usize>,
    pub meanfield_failures: usize,
    pub first_feasible_iter: Option<usize>,
    pub draws: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub query_set: String,
    pub n: usize,
    pub level: f64,
    /// Replication-averaged means and interval endpoints.
    pub pooled: Vec<CoordSummary>,
    pub replications: Vec<ReplicationSummary>,
}

impl ExperimentSummary {
    pub fn succeeded(&self) -> impl Iterator<Item = &ReplicationSummary> {
        self.replications.iter().filter(|r| r.error.is_none())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Summary plus the full chain output of each replication.
#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub summary: ExperimentSummary,
    pub chains: Vec<Option<ChainOutput>>,
}

struct Replication {
    truth_seed: u64,
    chain_seed: u64,
    truth: Option<(Network, ArdVector)>,
    outcome: Result<(ChainOutput, Vec<CoordSummary>, Vec<usize>, usize)>,
}

fn run_replication(cfg: &ExperimentConfig, study: &Study, index: usize) -> Replication {
    let truth_seed = derive_seed(cfg.seed, 1, index as u64);
    let chain_seed = derive_seed(cfg.seed, 2, index as u64);
    let mut rep = Replication {
        truth_seed,
        chain_seed,
        truth: None,
        outcome: Err(Error::validation("not run")),
    };
    let truth = (|| -> Result<(Network, ArdVector)> {
        let theta = Theta::from_flat(&study.model, &study.theta_true)?;
        let g0 = sample_network(&study.x, &study.model, &theta, &SweepConfig::new(cfg.truth_sweeps, truth_seed))?;
        let psi0 = BoundQuerySet::new(&study.queries, &study.x)?.compute(&g0);
        Ok((g0, psi0))
    })();
    let (g0, psi0) = match truth {
        Ok(t) => t,
        Err(e) => {
            rep.outcome = Err(e);
            return rep;
        }
    };
    rep.truth = Some((g0, psi0.clone()));
    rep.outcome = (|| {
        let mut sampler = study.sampler.clone();
        sampler.rng_seed = chain_seed;
        sampler.chain = index;
        let out = run_chain(&psi0, &study.x, &study.model, &study.queries, &sampler)?;
        let filter = TraceFilter {
            burn_in_rounds: sampler.burn_in(),
            drop_rounds: if cfg.drop_flagged_rounds {
                out.flagged_rounds.clone()
            } else {
                Vec::new()
            },
            feasible_only: true,
        };
        let ci = credible_interval(&out.records, cfg.credible_level, &filter)?;
        let coords = study
            .coordinate_names
            .iter()
            .enumerate()
            .map(|(k, name)| CoordSummary {
                name: name.clone(),
                truth: study.theta_true[k],
                mean: ci.mean[k],
                ci_lo: ci.lo[k],
                ci_hi: ci.hi[k],
                level: ci.level,
                fixed: matches!(sampler.prior.coords[k], CoordPrior::Fixed { .. }),
            })
            .collect();
        Ok((out, coords, ci.dropped_rounds, ci.draws))
    })();
    rep
}

fn pooled(study: &Study, reps: &[&ReplicationSummary], level: f64) -> Vec<CoordSummary> {
    if reps.is_empty() {
        return Vec::new();
    }
    let m = reps.len() as f64;
    study
        .coordinate_names
        .iter()
        .enumerate()
        .map(|(k, name)| CoordSummary {
            name: name.clone(),
            truth: study.theta_true[k],
            mean: reps.iter().map(|r| r.coordinates[k].mean).sum::<f64>() / m,
            ci_lo: reps.iter().map(|r| r.coordinates[k].ci_lo).sum::<f64>() / m,
            ci_hi: reps.iter().map(|r| r.coordinates[k].ci_hi).sum::<f64>() / m,
            level,
            fixed: reps[0].coordinates[k].fixed,
        })
        .collect()
}

fn write_plot_data(path: &Path, out: &ChainOutput) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let dim = out.final_theta.len();
    let mut header = vec!["iter".to_string(), "round".to_string()];
    header.extend((0..dim).map(|k| format!("theta_{k}")));
    header.extend(["delta".to_string(), "ard_distance".to_string(), "feasible".to_string()]);
    w.write_record(&header).map_err(csv_error)?;
    for r in &out.records {
        let mut row = vec![r.iter.to_string(), r.round.to_string()];
        row.extend(r.theta.iter().map(f64::to_string));
        row.push(r.delta.to_string());
        row.push(r.ard_distance.to_string());
        row.push(u8::from(r.feasible).to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TruthFile<'a> {
    network: &'a Network,
    psi0: &'a ArdVector,
}

#[derive(Serialize)]
struct Manifest {
    created_unix: u64,
    version: &'static str,
    query_set: String,
    replications: Vec<ManifestEntry>,
    files: Vec<String>,
}

#[derive(Serialize)]
struct ManifestEntry {
    index: usize,
    status: &'static str,
    error: Option<String>,
}

/// Runs every replication (in parallel) and, when `out_dir` is given,
/// writes per-replication `trace.csv`, `plot_data.csv` and `truth.json`,
/// plus `summary.json`, `ci_table.md` and `manifest.json`. A failed
/// replication is recorded in the summary and manifest; the others are kept.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    let study = cfg.resolve()?;
    let reps: Vec<Replication> = (0..study.replications)
        .into_par_iter()
        .map(|r| run_replication(cfg, &study, r))
        .collect();

    let mut summaries = Vec::new();
    let mut chains = Vec::new();
    for (index, rep) in reps.iter().enumerate() {
        let (links, psi_norm) = rep.truth.as_ref().map_or((0, 0.0), |(g, psi)| {
            (g.link_count(), study.sampler.norm.of(psi.values.iter().map(|&v| v as f64)))
        });
        let mut s = ReplicationSummary {
            index,
            truth_seed: rep.truth_seed,
            chain_seed: rep.chain_seed,
            error: None,
            truth_links: links,
            psi0_norm: psi_norm,
            delta0: 0.0,
            final_delta: 0.0,
            coordinates: Vec::new(),
            round_acceptance: Vec::new(),
            dropped_rounds: Vec::new(),
            meanfield_failures: 0,
            first_feasible_iter: None,
            draws: 0,
        };
        match &rep.outcome {
            Ok((out, coords, dropped, draws)) => {
                s.delta0 = out.delta0;
                s.final_delta = out.records.last().map_or(out.delta0, |r| r.delta);
                s.coordinates = coords.clone();
                s.round_acceptance = out.round_acceptance.clone();
                s.dropped_rounds = dropped.clone();
                s.meanfield_failures = out.meanfield_failures;
                s.first_feasible_iter = out.first_feasible_iter;
                s.draws = *draws;
                chains.push(Some(out.clone()));
            }
            Err(e) => {
                log::error!("replication {index} failed: {e}");
                s.error = Some(e.to_string());
                chains.push(None);
            }
        }
        summaries.push(s);
    }
    let ok: Vec<&ReplicationSummary> = summaries.iter().filter(|s| s.error.is_none()).collect();
    let summary = ExperimentSummary {
        config: cfg.clone(),
        seed: cfg.seed,
        query_set: study.query_name.clone(),
        n: study.x.n(),
        level: cfg.credible_level,
        pooled: pooled(&study, &ok, cfg.credible_level),
        replications: summaries,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (index, rep) in reps.iter().enumerate() {
            let sub = dir.join(format!("rep_{index}"));
            fs::create_dir_all(&sub)?;
            if let Some((g, psi)) = &rep.truth {
                let text = serde_json::to_string_pretty(&TruthFile { network: g, psi0: psi })?;
                fs::write(sub.join("truth.json"), text)?;
                files.push(format!("rep_{index}/truth.json"));
            }
            if let Ok((out, ..)) = &rep.outcome {
                write_trace_csv(fs::File::create(sub.join("trace.csv"))?, &out.records)?;
                write_plot_data(&sub.join("plot_data.csv"), out)?;
                files.push(format!("rep_{index}/trace.csv"));
                files.push(format!("rep_{index}/plot_data.csv"));
            }
        }
        fs::write(dir.join("summary.json"), summary.to_json())?;
        fs::write(dir.join("ci_table.md"), ci_table(&[(study.query_name.as_str(), &summary)]))?;
        files.extend(["summary.json".to_string(), "ci_table.md".to_string()]);
        let manifest = Manifest {
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            version: env!("CARGO_PKG_VERSION"),
            query_set: study.query_name.clone(),
            replications: summary
                .replications
                .iter()
                .map(|r| ManifestEntry {
                    index: r.index,
                    status: if r.error.is_none() { "ok" } else { "failed" },
                    error: r.error.clone(),
                })
                .collect(),
            files,
        };
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(ExperimentReport { summary, chains })
}

/// Markdown table with one row per study and one column per free
/// coordinate: the replication-averaged interval.
pub fn ci_table(rows: &[(&str, &ExperimentSummary)]) -> String {
    let Some((_, first)) = rows.first() else {
        return String::new();
    };
    let free: Vec<&CoordSummary> = first.pooled.iter().filter(|c| !c.fixed).collect();
    let pct = (first.level * 100.0).round();
    let mut s = String::from("| Query set |");
    for c in &free {
        s.push_str(&format!(" {} {pct}% CI |", c.name));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(free.len()));
    s.push('\n');
    for (label, summary) in rows {
        s.push_str(&format!("| {label} |"));
        for c in summary.pooled.iter().filter(|c| !c.fixed) {
            s.push_str(&format!(" ({:.4}, {:.4}) |", c.ci_lo, c.ci_hi));
        }
        s.push('\n');
    }
    s
}

/// Runs the same study once per query set, each into `out_dir/<name>/`,
/// and writes `out_dir/table1.md` comparing the averaged intervals.
pub fn run_query_comparison(
    cfg: &ExperimentConfig,
    query_sets: &[String],
    out_dir: Option<&Path>,
) -> Result<Vec<ExperimentReport>> {
    let mut reports = Vec::new();
    for name in query_sets {
        let mut c = cfg.clone();
        c.query_set = Some(name.clone());
        let sub = out_dir.map(|d| d.join(sanitize(name)));
        reports.push(run_experiment(&c, sub.as_deref())?);
    }
    if let Some(dir) = out_dir {
        let rows: Vec<(&str, &ExperimentSummary)> = query_sets
            .iter()
            .map(String::as_str)
            .zip(reports.iter().map(|r| &r.summary))
            .collect();
        fs::write(dir.join("table1.md"), ci_table(&rows))?;
    }
    Ok(reports)
}

fn sanitize(name: &str) -> String {
    let stem = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    stem.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
