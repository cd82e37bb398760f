//! Joint Metropolis–Hastings over `(theta, g)` given observed ARD.
//!
//! Each iteration proposes `theta'` by a reflected Gaussian random walk and a
//! network `g'` by Glauber dynamics at the *current* `theta`, then accepts
//! with probability `min(1, r)` where
//!
//! ```text
//! log r = [Q(g'; theta') - Q(g; theta)] + [Q(g; theta') - Q(g'; theta)]
//!       + 2 [log c_MF(theta) - log c_MF(theta')]
//! ```
//!
//! when both networks lie within `delta` of the observed ARD. A current
//! state outside the tolerance accepts any proposal (`r = inf`) so the chain
//! can reach the feasible region; a feasible state never moves to an
//! infeasible one. The tolerance is rescaled after every round according to
//! the round's acceptance rate.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ard::{ArdQuerySet, ArdVector, BoundQuerySet, Norm};
use crate::dynamics::Glauber;
use crate::error::{Error, Result};
use crate::meanfield::{LogConstant, MeanFieldCache, MeanFieldOptions};
use crate::oracle::log_c_dyadic;
use crate::model::{BoundModel, CovariateTable, Network, UtilityModel};

/// Prior on one coordinate of the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CoordPrior {
    Uniform { lo: f64, hi: f64 },
    /// Held at a known value and never proposed.
    Fixed { value: f64 },
}

/// Independent box-uniform prior (with optional pinned coordinates).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoxPrior {
    pub coords: Vec<CoordPrior>,
}

impl BoxPrior {
    pub fn uniform(bounds: &[(f64, f64)]) -> Self {
        BoxPrior {
            coords: bounds.iter().map(|&(lo, hi)| CoordPrior::Uniform { lo, hi }).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.coords.len() != dim {
            return Err(Error::validation(format!(
                "prior has {} coordinates, model has {dim}",
                self.coords.len()
            )));
        }
        for c in &self.coords {
            match *c {
                CoordPrior::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                    return Err(Error::validation(format!("uniform prior needs finite lo < hi, got [{lo}, {hi}]")));
                }
                CoordPrior::Fixed { value } if !value.is_finite() => {
                    return Err(Error::validation("fixed prior value must be finite"));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.coords.len()
            && self.coords.iter().zip(theta).all(|(c, &t)| match *c {
                CoordPrior::Uniform { lo, hi } => (lo..=hi).contains(&t),
                CoordPrior::Fixed { value } => t == value,
            })
    }

    /// Log density with respect to Lebesgue measure on the free coordinates.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.contains(theta) {
            return f64::NEG_INFINITY;
        }
        self.coords
            .iter()
            .map(|c| match *c {
                CoordPrior::Uniform { lo, hi } => -(hi - lo).ln(),
                CoordPrior::Fixed { .. } => 0.0,
            })
            .sum()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.coords
            .iter()
            .map(|c| match *c {
                CoordPrior::Uniform { lo, hi } => 0.5 * (lo + hi),
                CoordPrior::Fixed { value } => value,
            })
            .collect()
    }

    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.coords.len())
            .filter(|&k| matches!(self.coords[k], CoordPrior::Uniform { .. }))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaGuard {
    pub min_delta: f64,
    pub max_delta: f64,
}

/// Source of the `log c(theta)` terms in the acceptance ratio.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalizer {
    /// Mean-field lower bound (the estimator's defining approximation).
    #[default]
    MeanField,
    /// Exact dyad-factorized constant; only for models without indirect
    /// terms. Useful as a reference run.
    ExactDyadic,
}

/// Starting point of the Glauber run that produces `g'`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphProposal {
    /// Continue from the current network.
    #[default]
    WarmStart,
    /// Restart from the empty network every iteration.
    Fresh,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub rounds: usize,
    pub draws_per_round: usize,
    /// Random-walk scale per coordinate (ignored for fixed coordinates).
    pub theta_step: Vec<f64>,
    pub prior: BoxPrior,
    /// Starting parameter; the prior midpoint when absent.
    pub theta_init: Option<Vec<f64>>,
    /// Initial tolerance; `delta0_scale * ||psi0||` when absent.
    pub delta0: Option<f64>,
    /// Defaults to 0.1.
    pub delta0_scale: Option<f64>,
    pub norm: Norm,
    pub sweeps_per_proposal: usize,
    pub rng_seed: u64,
    /// Defaults to the first 20% of rounds.
    pub burn_in_rounds: Option<usize>,
    /// Defaults to `[1e-6, 10 * delta0]`.
    pub delta_guard: Option<DeltaGuard>,
    pub graph_proposal: GraphProposal,
    pub normalizer: Normalizer,
    /// Abort when no state within tolerance has been reached after this many
    /// iterations; the whole run when absent.
    pub feasibility_budget: Option<usize>,
    pub meanfield: MeanFieldOptions,
    /// Chain label written to the trace.
    pub chain: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            rounds: 150,
            draws_per_round: 200,
            theta_step: Vec::new(),
            prior: BoxPrior::default(),
            theta_init: None,
            delta0: None,
            delta0_scale: None,
            norm: Norm::L2,
            sweeps_per_proposal: 3,
            rng_seed: 0,
            burn_in_rounds: None,
            delta_guard: None,
            graph_proposal: GraphProposal::WarmStart,
            normalizer: Normalizer::MeanField,
            feasibility_budget: None,
            meanfield: MeanFieldOptions::default(),
            chain: 0,
        }
    }
}

impl SamplerConfig {
    pub fn new(prior: BoxPrior, theta_step: Vec<f64>) -> Self {
        SamplerConfig {
            prior,
            theta_step,
            ..Default::default()
        }
    }

    pub fn total_iterations(&self) -> usize {
        self.rounds * self.draws_per_round
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in_rounds.unwrap_or(self.rounds / 5)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.rounds == 0 || self.draws_per_round == 0 {
            return Err(Error::validation("rounds and draws_per_round must be >= 1"));
        }
        if self.sweeps_per_proposal == 0 {
            return Err(Error::validation("sweeps_per_proposal must be >= 1"));
        }
        self.prior.validate(dim)?;
        if self.theta_step.len() != dim {
            return Err(Error::validation(format!(
                "theta_step has {} entries, model has {dim}",
                self.theta_step.len()
            )));
        }
        for k in self.prior.free_indices() {
            if !(self.theta_step[k] > 0.0 && self.theta_step[k].is_finite()) {
                return Err(Error::validation(format!("theta_step[{k}] must be > 0")));
            }
        }
        if let Some(init) = &self.theta_init {
            if !self.prior.contains(init) {
                return Err(Error::validation("theta_init lies outside the prior support"));
            }
        }
        if let Some(d) = self.delta0 {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::validation("delta0 must be > 0"));
            }
        }
        if let Some(s) = self.delta0_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::validation("delta0_scale must be > 0"));
            }
        }
        if let Some(g) = self.delta_guard {
            if !(g.min_delta > 0.0 && g.min_delta <= g.max_delta) {
                return Err(Error::validation("delta guard needs 0 < min_delta <= max_delta"));
            }
        }
        self.meanfield.validate()
    }
}

/// Reflects `x` into `[lo, hi]` (repeatedly, as a billiard).
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let w = hi - lo;
    let y = (x - lo).rem_euclid(2.0 * w);
    lo + if y > w { 2.0 * w - y } else { y }
}

/// Symmetric Gaussian random walk on the free coordinates, reflected at the
/// prior box.
pub fn propose_theta<R: Rng + ?Sized>(theta: &[f64], step: &[f64], prior: &BoxPrior, rng: &mut R) -> Vec<f64> {
    theta
        .iter()
        .zip(step)
        .zip(&prior.coords)
        .map(|((&t, &s), c)| match *c {
            CoordPrior::Uniform { lo, hi } => {
                let z: f64 = rng.sample(StandardNormal);
                reflect(t + s * z, lo, hi)
            }
            CoordPrior::Fixed { value } => value,
        })
        .collect()
}

/// Log density of [`propose_theta`] moving `from -> to`; symmetric in its
/// two arguments.
pub fn proposal_log_density(from: &[f64], to: &[f64], step: &[f64], prior: &BoxPrior) -> f64 {
    let mut total = 0.0;
    for (k, c) in prior.coords.iter().enumerate() {
        match *c {
            CoordPrior::Fixed { value } => {
                if from[k] != value || to[k] != value {
                    return f64::NEG_INFINITY;
                }
            }
            CoordPrior::Uniform { lo, hi } => {
                let (x, y, s, w) = (from[k], to[k], step[k], hi - lo);
                let phi = |d: f64| (-0.5 * (d / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
                let reach = ((10.0 * s) / (2.0 * w)).ceil() as i64 + 1;
                let dens: f64 = (-reach..=reach)
                    .map(|k| {
                        let shift = 2.0 * k as f64 * w;
                        phi(y + shift - x) + phi(2.0 * lo - y + shift - x)
                    })
                    .sum();
                total += dens.ln();
            }
        }
    }
    total
}

/// Multiplier applied to `delta` after a round with the given acceptance
/// rate.
pub fn delta_multiplier(accept_rate: f64) -> f64 {
    if accept_rate > 0.50 {
        0.98
    } else if accept_rate > 0.18 {
        0.99
    } else if accept_rate > 0.01 {
        1.0
    } else if accept_rate > 0.003 {
        1.005
    } else {
        1.01
    }
}

pub fn adapt_delta(delta: f64, accept_rate: f64) -> f64 {
    delta * delta_multiplier(accept_rate)
}

/// Ingredients of the acceptance ratio for a move `(theta, g) -> (theta', g')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatioTerms {
    /// `Q(g'; theta')`
    pub q_prop_at_prop: f64,
    /// `Q(g; theta)`
    pub q_cur_at_cur: f64,
    /// `Q(g; theta')`
    pub q_cur_at_prop: f64,
    /// `Q(g'; theta)`
    pub q_prop_at_cur: f64,
    pub log_c_cur: f64,
    pub log_c_prop: f64,
    pub log_prior_cur: f64,
    pub log_prior_prop: f64,
    pub cur_feasible: bool,
    pub prop_feasible: bool,
}

/// Log of the acceptance ratio; `+inf` while the current state is outside
/// the tolerance, `-inf` for infeasible or out-of-support proposals. The
/// random-walk proposal ratio is one and is omitted.
pub fn mh_log_ratio(t: &RatioTerms) -> f64 {
    if t.log_prior_prop == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if !t.cur_feasible {
        return f64::INFINITY;
    }
    if !t.prop_feasible {
        return f64::NEG_INFINITY;
    }
    (t.log_prior_prop - t.log_prior_cur)
        + (t.q_prop_at_prop - t.q_cur_at_cur)
        + (t.q_cur_at_prop - t.q_prop_at_cur)
        + 2.0 * (t.log_c_cur - t.log_c_prop)
}

/// Result of [`ArdPosterior::log_ratio`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRatio {
    pub value: f64,
    /// The mean-field solver did not converge; the move must be rejected.
    pub meanfield_failed: bool,
}

/// The mean-field, tolerance-relaxed posterior over `(theta, g)` for one
/// observed ARD vector.
#[derive(Clone, Debug)]
pub struct ArdPosterior {
    bound: BoundModel,
    queries: BoundQuerySet,
    psi0: ArdVector,
    prior: BoxPrior,
    norm: Norm,
    normalizer: Normalizer,
}

impl ArdPosterior {
    pub fn new(
        psi0: &ArdVector,
        x: &CovariateTable,
        model: &UtilityModel,
        qs: &ArdQuerySet,
        prior: &BoxPrior,
        norm: Norm,
    ) -> Result<Self> {
        psi0.validate()?;
        if psi0.respondents != x.n() || psi0.questions != qs.len() {
            return Err(Error::validation(format!(
                "observed ARD is {} x {}, expected {} respondents x {} questions",
                psi0.respondents,
                psi0.questions,
                x.n(),
                qs.len()
            )));
        }
        prior.validate(model.dim())?;
        Ok(ArdPosterior {
            bound: BoundModel::new(model, x)?,
            queries: BoundQuerySet::new(qs, x)?,
            psi0: psi0.clone(),
            prior: prior.clone(),
            norm,
            normalizer: Normalizer::MeanField,
        })
    }

    pub fn with_normalizer(mut self, normalizer: Normalizer) -> Result<Self> {
        if normalizer == Normalizer::ExactDyadic && !self.bound.model().indirect_features.is_empty() {
            return Err(Error::validation("exact-dyadic normalizer needs a model without indirect features"));
        }
        self.normalizer = normalizer;
        Ok(self)
    }

    pub fn bound_model(&self) -> &BoundModel {
        &self.bound
    }

    pub fn psi0(&self) -> &ArdVector {
        &self.psi0
    }

    pub fn prior(&self) -> &BoxPrior {
        &self.prior
    }

    pub fn distance(&self, g: &Network) -> f64 {
        let psi = self.queries.compute(g);
        self.norm
            .of(psi.values.iter().zip(&self.psi0.values).map(|(&a, &b)| a as f64 - b as f64))
    }

    /// Log acceptance ratio for `(theta, g) -> (theta', g')` at tolerance
    /// `delta`; mean-field constants come from `cache`.
    pub fn log_ratio(
        &self,
        cur: (&[f64], &Network),
        prop: (&[f64], &Network),
        delta: f64,
        cache: &mut MeanFieldCache,
    ) -> Result<LogRatio> {
        let log_prior_prop = self.prior.log_density(prop.0);
        let cur_feasible = self.distance(cur.1) <= delta;
        let prop_feasible = self.distance(prop.1) <= delta;
        let mut terms = RatioTerms {
            q_prop_at_prop: 0.0,
            q_cur_at_cur: 0.0,
            q_cur_at_prop: 0.0,
            q_prop_at_cur: 0.0,
            log_c_cur: 0.0,
            log_c_prop: 0.0,
            log_prior_cur: self.prior.log_density(cur.0),
            log_prior_prop,
            cur_feasible,
            prop_feasible,
        };
        if log_prior_prop == f64::NEG_INFINITY || !cur_feasible || !prop_feasible {
            return Ok(LogRatio {
                value: mh_log_ratio(&terms),
                meanfield_failed: false,
            });
        }
        let p_cur = self.bound.payoffs_flat(cur.0)?;
        let p_prop = self.bound.payoffs_flat(prop.0)?;
        let (lc_cur, lc_prop) = match self.normalizer {
            Normalizer::MeanField => {
                let a = cache.get_or_compute(&self.bound, cur.0)?;
                let b = cache.get_or_compute(&self.bound, prop.0)?;
                if !(a.converged && b.converged) {
                    return Ok(LogRatio {
                        value: f64::NEG_INFINITY,
                        meanfield_failed: true,
                    });
                }
                (a.value, b.value)
            }
            Normalizer::ExactDyadic => (log_c_dyadic(&p_cur)?, log_c_dyadic(&p_prop)?),
        };
        terms.q_prop_at_prop = p_prop.potential(prop.1);
        terms.q_cur_at_cur = p_cur.potential(cur.1);
        terms.q_cur_at_prop = p_prop.potential(cur.1);
        terms.q_prop_at_cur = p_cur.potential(prop.1);
        terms.log_c_cur = lc_cur;
        terms.log_c_prop = lc_prop;
        Ok(LogRatio {
            value: mh_log_ratio(&terms),
            meanfield_failed: false,
        })
    }
}

/// Free-function form of [`ArdPosterior::log_ratio`].
pub fn acceptance_log_ratio(
    posterior: &ArdPosterior,
    cur: (&[f64], &Network),
    prop: (&[f64], &Network),
    delta: f64,
    cache: &mut MeanFieldCache,
) -> Result<LogRatio> {
    posterior.log_ratio(cur, prop, delta, cache)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub chain: usize,
    pub round: usize,
    pub iter: usize,
    pub theta: Vec<f64>,
    pub delta: f64,
    pub accepted: bool,
    pub ard_distance: f64,
    /// Whether the state lies within the tolerance in force.
    pub feasible: bool,
    pub log_c_mf_current: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub records: Vec<TraceRecord>,
    pub final_theta: Vec<f64>,
    pub final_network: Network,
    pub delta0: f64,
    /// Tolerance in force during each round.
    pub round_delta: Vec<f64>,
    pub round_acceptance: Vec<f64>,
    /// Rounds whose tolerance update hit the guard.
    pub flagged_rounds: Vec<usize>,
    pub meanfield_failures: usize,
    pub first_feasible_iter: Option<usize>,
}

/// Outcome of a single transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub log_ratio: f64,
    /// The move started from a state within tolerance.
    pub from_feasible: bool,
    pub meanfield_failed: bool,
}

/// Chain state plus everything needed to advance it.
#[derive(Clone, Debug)]
pub struct Chain {
    posterior: ArdPosterior,
    theta: Vec<f64>,
    network: Network,
    distance: f64,
    delta: f64,
    cache: MeanFieldCache,
    rng: ChaCha8Rng,
}

impl Chain {
    pub fn new(posterior: ArdPosterior, theta: Vec<f64>, network: Network, delta: f64, opts: MeanFieldOptions, seed: u64) -> Self {
        let distance = posterior.distance(&network);
        Chain {
            posterior,
            theta,
            network,
            distance,
            delta,
            cache: MeanFieldCache::new(opts),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn set_delta(&mut self, delta: f64) {
        self.delta = delta;
    }

    pub fn is_feasible(&self) -> bool {
        self.distance <= self.delta
    }

    pub fn posterior(&self) -> &ArdPosterior {
        &self.posterior
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// `log c_MF` at the current parameter, if it has been computed.
    pub fn current_log_c(&mut self) -> Option<f64> {
        self.cache
            .get_or_compute(self.posterior.bound_model(), &self.theta)
            .ok()
            .map(|v: LogConstant| v.value)
    }

    /// Metropolis–Hastings decision for an externally generated proposal.
    pub fn step_with(&mut self, theta_prop: Vec<f64>, g_prop: Network) -> Result<StepOutcome> {
        let from_feasible = self.is_feasible();
        let lr = self.posterior.log_ratio(
            (&self.theta, &self.network),
            (&theta_prop, &g_prop),
            self.delta,
            &mut self.cache,
        )?;
        let accepted = !lr.meanfield_failed
            && (lr.value >= 0.0 || (lr.value > f64::NEG_INFINITY && self.rng.random::<f64>() < lr.value.exp()));
        if accepted {
            self.distance = self.posterior.distance(&g_prop);
            self.theta = theta_prop;
            self.network = g_prop;
        }
        Ok(StepOutcome {
            accepted,
            log_ratio: lr.value,
            from_feasible,
            meanfield_failed: lr.meanfield_failed,
        })
    }
}

/// Runs the adaptive-tolerance chain; one trace record per iteration.
pub fn run_chain(
    psi0: &ArdVector,
    x: &CovariateTable,
    model: &UtilityModel,
    qs: &ArdQuerySet,
    cfg: &SamplerConfig,
) -> Result<ChainOutput> {
    let dim = model.dim();
    cfg.validate(dim)?;
    let posterior = ArdPosterior::new(psi0, x, model, qs, &cfg.prior, cfg.norm)?.with_normalizer(cfg.normalizer)?;
    let delta0 = match cfg.delta0 {
        Some(d) => d,
        None => {
            let d = cfg.delta0_scale.unwrap_or(0.1) * cfg.norm.of(psi0.values.iter().map(|&v| v as f64));
            if d > 0.0 {
                d
            } else {
                return Err(Error::validation("observed ARD is all zero; supply delta0 explicitly"));
            }
        }
    };
    let guard = cfg.delta_guard.unwrap_or(DeltaGuard {
        min_delta: 1e-6,
        max_delta: 10.0 * delta0,
    });
    let theta0 = cfg.theta_init.clone().unwrap_or_else(|| cfg.prior.midpoint());
    let n = x.n();
    let mut chain = Chain::new(posterior, theta0, Network::empty(n)?, delta0, cfg.meanfield.clone(), cfg.rng_seed);
    let mut glauber = Glauber::new(n);
    let budget = cfg.feasibility_budget.unwrap_or(cfg.total_iterations());

    let mut records = Vec::with_capacity(cfg.total_iterations());
    let mut round_delta = Vec::with_capacity(cfg.rounds);
    let mut round_acceptance = Vec::with_capacity(cfg.rounds);
    let mut flagged_rounds = Vec::new();
    let mut meanfield_failures = 0;
    let mut first_feasible_iter = chain.is_feasible().then_some(0);
    let mut iter = 0usize;

    for round in 0..cfg.rounds {
        round_delta.push(chain.delta());
        let (mut attempts, mut accepted_feasible) = (0usize, 0usize);
        for _ in 0..cfg.draws_per_round {
            let theta_cur = chain.theta().to_vec();
            let theta_prop = propose_theta(&theta_cur, &cfg.theta_step, &cfg.prior, chain.rng());
            let mut g_prop = match cfg.graph_proposal {
                GraphProposal::WarmStart => chain.network().clone(),
                GraphProposal::Fresh => Network::empty(n)?,
            };
            let payoffs = chain.posterior().bound_model().payoffs_flat(&theta_cur)?;
            {
                let rng = &mut chain.rng;
                for _ in 0..cfg.sweeps_per_proposal {
                    glauber.sweep(&mut g_prop, &payoffs, rng);
                }
            }
            let out = chain.step_with(theta_prop, g_prop)?;
            if out.meanfield_failed {
                meanfield_failures += 1;
                log::warn!("chain {}: mean-field did not converge at iteration {iter}; proposal rejected", cfg.chain);
            }
            if out.from_feasible {
                attempts += 1;
                accepted_feasible += usize::from(out.accepted);
            }
            let feasible = chain.is_feasible();
            if feasible && first_feasible_iter.is_none() {
                first_feasible_iter = Some(iter);
            }
            let log_c = if feasible { chain.current_log_c() } else { None };
            records.push(TraceRecord {
                chain: cfg.chain,
                round,
                iter,
                theta: chain.theta().to_vec(),
                delta: chain.delta(),
                accepted: out.accepted,
                ard_distance: chain.distance(),
                feasible,
                log_c_mf_current: log_c,
            });
            iter += 1;
            if first_feasible_iter.is_none() && iter >= budget {
                return Err(Error::NoFeasibleState {
                    iterations: iter,
                    delta: chain.delta(),
                });
            }
        }
        let rate = if attempts == 0 {
            0.0
        } else {
            accepted_feasible as f64 / attempts as f64
        };
        round_acceptance.push(rate);
        let mut next = adapt_delta(chain.delta(), rate);
        if next < guard.min_delta || next > guard.max_delta {
            log::warn!(
                "chain {}: tolerance {next} left [{}, {}] after round {round}; clamped",
                cfg.chain,
                guard.min_delta,
                guard.max_delta
            );
            next = next.clamp(guard.min_delta, guard.max_delta);
            flagged_rounds.push(round);
        }
        // A feasible state stays feasible across the tolerance update.
        if chain.is_feasible() {
            next = next.max(chain.distance());
        }
        chain.set_delta(next);
    }
    if first_feasible_iter.is_none() {
        return Err(Error::NoFeasibleState {
            iterations: iter,
            delta: chain.delta(),
        });
    }
    Ok(ChainOutput {
        records,
        final_theta: chain.theta().to_vec(),
        final_network: chain.network().clone(),
        delta0,
        round_delta,
        round_acceptance,
        flagged_rounds,
        meanfield_failures,
        first_feasible_iter,
    })
}

/// Equal-tailed credible intervals and means per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CredibleInterval {
    pub level: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub mean: Vec<f64>,
    pub draws: usize,
    pub dropped_rounds: Vec<usize>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (k, frac) = (h.floor() as usize, h - h.floor());
    if k + 1 < sorted.len() {
        sorted[k] + frac * (sorted[k + 1] - sorted[k])
    } else {
        sorted[k]
    }
}

/// Which records enter the interval.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceFilter {
    pub burn_in_rounds: usize,
    /// Rounds excluded outright (e.g. those flagged by the tolerance guard).
    pub drop_rounds: Vec<usize>,
    /// Skip records whose state lies outside the tolerance.
    pub feasible_only: bool,
}

/// Interval from post-burn-in chain states.
pub fn credible_interval(records: &[TraceRecord], level: f64, filter: &TraceFilter) -> Result<CredibleInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation("credible level must lie in (0, 1)"));
    }
    let kept: Vec<&TraceRecord> = records
        .iter()
        .filter(|r| r.round >= filter.burn_in_rounds)
        .filter(|r| !filter.drop_rounds.contains(&r.round))
        .filter(|r| !filter.feasible_only || r.feasible)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyTrace("no records left after burn-in and filtering".into()));
    }
    let dim = kept[0].theta.len();
    let tail = (1.0 - level) / 2.0;
    let (mut lo, mut hi, mut mean) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..dim {
        let mut xs: Vec<f64> = kept.iter().map(|r| r.theta[k]).collect();
        xs.sort_by(f64::total_cmp);
        lo.push(quantile_sorted(&xs, tail));
        hi.push(quantile_sorted(&xs, 1.0 - tail));
        mean.push(xs.iter().sum::<f64>() / xs.len() as f64);
    }
    let mut dropped_rounds = filter.drop_rounds.clone();
    dropped_rounds.sort_unstable();
    Ok(CredibleInterval {
        level,
        lo,
        hi,
        mean,
        draws: kept.len(),
        dropped_rounds,
    })
}

/// Writes `chain,round,iter,theta_0..theta_{k-1},delta,accepted,ard_distance`.
pub fn write_trace_csv<W: Write>(w: W, records: &[TraceRecord]) -> Result<()> {
    let dim = records.first().map_or(0, |r| r.theta.len());
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["chain".into(), "round".into(), "iter".into()];
    header.extend((0..dim).map(|k| format!("theta_{k}")));
    header.extend(["delta".into(), "accepted".into(), "ard_distance".into()]);
    out.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row = vec![r.chain.to_string(), r.round.to_string(), r.iter.to_string()];
        row.extend(r.theta.iter().map(f64::to_string));
        row.push(r.delta.to_string());
        row.push(u8::from(r.accepted).to_string());
        row.push(r.ard_distance.to_string());
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line: 0,
            msg: format!("{other:?}"),
        },
    }
}
