//! Cross-module checks against the exhaustive oracle on small networks.
//!
//! Each suite returns an [`OracleReport`] listing measured errors next to
//! their tolerances. Checks marked non-gating are diagnostics: they are
//! reported but do not affect `passed`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ard::{design2_benchmark_queries, ArdQuerySet, BoundQuerySet, Norm};
use crate::dynamics::Glauber;
use crate::error::{Error, Result};
use crate::experiment::{example2_covariates, example2_model, example2_queries};
use crate::meanfield::{log_c_mf, MeanFieldCache, MeanFieldOptions};
use crate::model::{BoundModel, CovariateTable, Network, PairFeature, Theta, UtilityModel};
use crate::numeric::softplus;
use crate::oracle::{exact_posterior_on_grid, sufficiency_variation, ArdPartition, ExactLaw, Observation, ThetaGrid};
use crate::sampler::{proposal_log_density, ArdPosterior, BoxPrior, Chain};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Stationary,
    Meanfield,
    Sufficiency,
    Kernel,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Stationary, Suite::Meanfield, Suite::Sufficiency, Suite::Kernel];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Stationary => "stationary",
            Suite::Meanfield => "meanfield",
            Suite::Sufficiency => "sufficiency",
            Suite::Kernel => "kernel",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown suite `{s}` (stationary, meanfield, sufficiency, kernel)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub gating: bool,
}

impl Check {
    fn below(name: &str, measured: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            measured,
            tolerance,
            passed: measured < tolerance,
            gating: true,
        }
    }

    fn diagnostic(mut self) -> Self {
        self.gating = false;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub suite: Suite,
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl OracleReport {
    fn new(suite: Suite, seed: u64, checks: Vec<Check>) -> Self {
        OracleReport {
            suite,
            seed,
            passed: checks.iter().all(|c| c.passed || !c.gating),
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub fn oracle_validate(suite: Suite, seed: u64) -> Result<OracleReport> {
    let checks = match suite {
        Suite::Stationary => vec![stationary_tv(seed, 1_000_000)?],
        Suite::Meanfield => vec![separable_mf_error(seed)?, separable_exact_error(seed)?, mf_bound_violation()?],
        Suite::Sufficiency => vec![example2_sufficiency()?, example2_posterior_equality()?],
        Suite::Kernel => {
            let db = kernel_detailed_balance(seed, 200)?;
            let ext = kernel_frequencies(seed, 200_000, true)?;
            vec![
                Check::below("detailed_balance_mf_proposal", db.mf_proposal, 1e-9),
                Check::below("detailed_balance_true_proposal", db.true_proposal, 1e-9),
                Check::below("kernel_tv_separable", kernel_frequencies(seed, 200_000, false)?.derived, 0.05),
                Check::below("kernel_tv_externalities", ext.derived, 0.05).diagnostic(),
                Check::below("kernel_tv_externalities_vs_meanfield_posterior", ext.meanfield_posterior, 0.05).diagnostic(),
            ]
        }
    };
    Ok(OracleReport::new(suite, seed, checks))
}

/// Up to five nodes with distinct ages.
pub fn small_covariates(n: usize) -> CovariateTable {
    let ages = [21.0, 30.0, 52.0, 33.0, 47.0];
    CovariateTable::new(n)
        .with_attribute("age", ages[..n].to_vec())
        .expect("n <= 5")
}

/// Direct (constant, scaled age difference), reciprocity and indirect terms.
pub fn full_model() -> UtilityModel {
    UtilityModel {
        direct_features: vec![PairFeature::Constant, PairFeature::abs_diff("age", 20.0)],
        mutual_features: vec![PairFeature::Constant],
        indirect_features: vec![PairFeature::Constant],
    }
}

pub fn separable_model() -> UtilityModel {
    UtilityModel {
        direct_features: vec![PairFeature::Constant, PairFeature::abs_diff("age", 20.0)],
        ..Default::default()
    }
}

fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Total variation between `samples` consecutive Glauber sweeps and the
/// exact law, n = 3, full model.
pub fn stationary_tv(seed: u64, samples: usize) -> Result<Check> {
    let x = small_covariates(3);
    let model = full_model();
    let theta = Theta::new(vec![0.3, -1.0], vec![0.5], vec![-0.4]);
    let payoffs = BoundModel::new(&model, &x)?.payoffs(&theta)?;
    let exact = ExactLaw::new(&payoffs)?.probabilities();
    let mut counts = vec![0u64; exact.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Network::empty(3)?;
    let mut glauber = Glauber::new(3);
    for _ in 0..100 {
        glauber.sweep(&mut g, &payoffs, &mut rng);
    }
    for _ in 0..samples {
        glauber.sweep(&mut g, &payoffs, &mut rng);
        counts[g.to_mask() as usize] += 1;
    }
    let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / samples as f64).collect();
    Ok(Check::below("glauber_tv", tv(&emp, &exact), 0.02))
}

fn random_separable(rng: &mut ChaCha8Rng) -> Result<(CovariateTable, UtilityModel, Theta, f64)> {
    let n = if rng.random::<bool>() { 3 } else { 4 };
    let ages: Vec<f64> = (0..n).map(|_| rng.random_range(18.0..80.0)).collect();
    let x = CovariateTable::new(n).with_attribute("age", ages)?;
    let model = separable_model();
    let theta = Theta::new(vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)], vec![], vec![]);
    let payoffs = BoundModel::new(&model, &x)?.payoffs(&theta)?;
    let closed: f64 = crate::model::ordered_pairs(n).map(|(i, j)| softplus(payoffs.u(i, j))).sum();
    Ok((x, model, theta, closed))
}

/// Worst `|log c_MF - sum log(1 + e^u)|` over 20 random separable models.
pub fn separable_mf_error(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (x, model, theta, closed) = random_separable(&mut rng)?;
        let mf = log_c_mf(&x, &model, &theta, &MeanFieldOptions::default())?;
        worst = worst.max((mf.value - closed).abs());
    }
    Ok(Check::below("separable_meanfield_error", worst, 1e-8))
}

/// Same models, exhaustive `log c` against the closed form.
pub fn separable_exact_error(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (x, model, theta, closed) = random_separable(&mut rng)?;
        let exact = ExactLaw::from_model(&x, &model, &theta)?.log_c();
        worst = worst.max((exact - closed).abs());
    }
    Ok(Check::below("separable_exact_error", worst, 1e-10))
}

/// Largest `log c_MF - log c` on a 5 x 5 grid of (reciprocity, indirect)
/// coefficients at n = 4; must not exceed round-off.
pub fn mf_bound_violation() -> Result<Check> {
    let x = small_covariates(4);
    let model = full_model();
    let bound = BoundModel::new(&model, &x)?;
    let mut worst = f64::NEG_INFINITY;
    for g1 in ThetaGrid::linspace(-1.0, 1.0, 5) {
        for g2 in ThetaGrid::linspace(-1.0, 1.0, 5) {
            let payoffs = bound.payoffs_flat(&[1.0, -1.0, g1, g2])?;
            let exact = ExactLaw::new(&payoffs)?.log_c();
            let mf = crate::meanfield::solve_payoffs(&payoffs, &MeanFieldOptions::default())?;
            worst = worst.max(mf.bound - exact);
        }
    }
    Ok(Check::below("meanfield_bound_excess", worst, 1e-9))
}

/// Grid with `theta_1 > theta_0`: 9 x 9 points on `[-2, 2]^2`, 36 kept.
pub fn example2_grid() -> Result<ThetaGrid> {
    let axis = ThetaGrid::linspace(-2.0, 2.0, 9);
    ThetaGrid::cartesian(vec![axis.clone(), axis])?.retain(|t| t[1] > t[0])
}

pub fn example2_sufficiency() -> Result<Check> {
    let v = sufficiency_variation(&example2_queries(), &example2_covariates(), &example2_model(), &example2_grid()?)?;
    Ok(Check::below("example2_sufficiency_variation", v, 1e-10))
}

/// Largest difference between the grid posterior given the ARD and given
/// the full network, over every network on four nodes.
pub fn example2_posterior_equality() -> Result<Check> {
    let x = example2_covariates();
    let model = example2_model();
    let qs = example2_queries();
    let grid = example2_grid()?;
    let flat = |_: &[f64]| 1.0;
    let bq = BoundQuerySet::new(&qs, &x)?;
    let mut worst = 0.0f64;
    // Every 37th mask covers all cells' typical members without 4096 grid solves.
    for mask in (0u64..1 << 12).step_by(37) {
        let g = Network::from_mask(4, mask)?;
        let psi = bq.compute(&g);
        let from_ard = exact_posterior_on_grid(&Observation::Ard { psi0: &psi, queries: &qs }, &x, &model, &grid, &flat)?;
        let from_net = exact_posterior_on_grid(&Observation::Network(&g), &x, &model, &grid, &flat)?;
        for (a, b) in from_ard.iter().zip(&from_net) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(Check::below("example2_posterior_equality", worst, 1e-9))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetailedBalance {
    /// Residual with `g'` drawn from `exp(Q - log c_MF)`, target `p^MF`.
    pub mf_proposal: f64,
    /// Residual with `g'` drawn from the exact law and the target the kernel
    /// actually leaves invariant, `exp(Q) c / c_MF^2`.
    pub true_proposal: f64,
}

fn kernel_setup() -> (CovariateTable, UtilityModel, ArdQuerySet, BoxPrior) {
    let prior = BoxPrior::uniform(&[(-1.0, 1.0), (-2.0, 0.0), (-1.0, 1.0), (-0.5, 0.5)]);
    (small_covariates(3), full_model(), design2_benchmark_queries(), prior)
}

/// Largest `|log p(a) K(a -> b) - log p(b) K(b -> a)|` over `pairs` random
/// pairs of states in the same ARD cell (strict matching, n = 3).
pub fn kernel_detailed_balance(seed: u64, pairs: usize) -> Result<DetailedBalance> {
    let (x, model, qs, prior) = kernel_setup();
    let bound = BoundModel::new(&model, &x)?;
    let partition = ArdPartition::new(&qs, &x)?;
    let mut cells: HashMap<u32, Vec<u64>> = HashMap::new();
    for (mask, &c) in partition.cell_of.iter().enumerate() {
        cells.entry(c).or_default().push(mask as u64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = MeanFieldCache::new(MeanFieldOptions::default());
    let step = [0.4, 0.4, 0.4, 0.4];
    let (mut worst_mf, mut worst_true) = (0.0f64, 0.0f64);
    let free: Vec<(f64, f64)> = prior
        .coords
        .iter()
        .map(|c| match *c {
            crate::sampler::CoordPrior::Uniform { lo, hi } => (lo, hi),
            crate::sampler::CoordPrior::Fixed { value } => (value, value),
        })
        .collect();
    for _ in 0..pairs {
        let obs = rng.random_range(0..1u64 << 6);
        let cell = &cells[&partition.cell_of[obs as usize]];
        let psi0 = partition.cells[partition.cell_of[obs as usize] as usize].clone();
        let post = ArdPosterior::new(&psi0, &x, &model, &qs, &prior, Norm::L2)?;
        let draw_theta = |rng: &mut ChaCha8Rng| -> Vec<f64> { free.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect() };
        let (ta, tb) = (draw_theta(&mut rng), draw_theta(&mut rng));
        let ga = Network::from_mask(3, cell[rng.random_range(0..cell.len())])?;
        let gb = Network::from_mask(3, cell[rng.random_range(0..cell.len())])?;
        let (pa, pb) = (bound.payoffs_flat(&ta)?, bound.payoffs_flat(&tb)?);
        let (lcm_a, lcm_b) = (cache.get_or_compute(&bound, &ta)?.value, cache.get_or_compute(&bound, &tb)?.value);
        let (lc_a, lc_b) = (ExactLaw::new(&pa)?.log_c(), ExactLaw::new(&pb)?.log_c());
        let fwd = post.log_ratio((&ta, &ga), (&tb, &gb), 0.0, &mut cache)?;
        let bwd = post.log_ratio((&tb, &gb), (&ta, &ga), 0.0, &mut cache)?;
        if fwd.meanfield_failed || bwd.meanfield_failed {
            return Err(Error::validation("mean-field failed on the kernel test instance"));
        }
        let q_ab = proposal_log_density(&ta, &tb, &step, &prior);
        let q_ba = proposal_log_density(&tb, &ta, &step, &prior);
        let (qa, qb) = (pa.potential(&ga), pb.potential(&gb));
        let (qb_at_a, qa_at_b) = (pa.potential(&gb), pb.potential(&ga));
        // Proof form: proposal exp(Q - log c_MF), target exp(Q - log c_MF).
        let lhs = (qa - lcm_a) + q_ab + (qb_at_a - lcm_a) + fwd.value.min(0.0);
        let rhs = (qb - lcm_b) + q_ba + (qa_at_b - lcm_b) + bwd.value.min(0.0);
        worst_mf = worst_mf.max((lhs - rhs).abs());
        // Realizable form: exact proposal, target exp(Q) c / c_MF^2.
        let lhs = (qa + lc_a - 2.0 * lcm_a) + q_ab + (qb_at_a - lc_a) + fwd.value.min(0.0);
        let rhs = (qb + lc_b - 2.0 * lcm_b) + q_ba + (qa_at_b - lc_b) + bwd.value.min(0.0);
        worst_true = worst_true.max((lhs - rhs).abs());
    }
    Ok(DetailedBalance {
        mf_proposal: worst_mf,
        true_proposal: worst_true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelTv {
    /// Against `exp(Q) c / c_MF^2`, the law the kernel leaves invariant.
    pub derived: f64,
    /// Against the mean-field posterior `exp(Q) / c_MF`.
    pub meanfield_posterior: f64,
}

/// Empirical joint law of a long chain on a two-point parameter set with
/// exact network proposals, strict matching, n = 3. For the separable model
/// the two references coincide.
pub fn kernel_frequencies(seed: u64, steps: usize, externalities: bool) -> Result<KernelTv> {
    let x = small_covariates(3);
    let qs = design2_benchmark_queries();
    let (model, points) = if externalities {
        (full_model(), [vec![0.5, -1.0, 0.6, -0.3], vec![-0.5, -0.5, -0.4, 0.3]])
    } else {
        (separable_model(), [vec![0.5, -1.0], vec![-0.5, 0.2]])
    };
    let dim = points[0].len();
    let prior = BoxPrior::uniform(&vec![(-2.0, 2.0); dim]);
    let bound = BoundModel::new(&model, &x)?;
    let mut laws = Vec::new();
    let mut weights = Vec::new();
    let mut mf_weights = Vec::new();
    let opts = MeanFieldOptions::default();
    for p in &points {
        let payoffs = bound.payoffs_flat(p)?;
        let law = ExactLaw::new(&payoffs)?;
        let mf = crate::meanfield::solve_payoffs(&payoffs, &opts)?;
        weights.push(law.log_c() - 2.0 * mf.bound);
        mf_weights.push(-mf.bound);
        laws.push(law);
    }
    // Observed ARD from a network in a cell with several members.
    let partition = ArdPartition::new(&qs, &x)?;
    let obs: u64 = 0b010110;
    let cell_id = partition.cell_of[obs as usize];
    let psi0 = partition.cells[cell_id as usize].clone();
    let members: Vec<u64> = (0..1u64 << 6).filter(|&m| partition.cell_of[m as usize] == cell_id).collect();

    let post = ArdPosterior::new(&psi0, &x, &model, &qs, &prior, Norm::L2)?;
    let mut chain = Chain::new(post, points[0].clone(), Network::from_mask(3, obs)?, 0.0, opts, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut counts: HashMap<(usize, u64), u64> = HashMap::new();
    let mut at = 0usize;
    for _ in 0..steps {
        let g_prop = laws[at].sample(&mut rng);
        let out = chain.step_with(points[1 - at].clone(), g_prop)?;
        if out.accepted {
            at = 1 - at;
        }
        *counts.entry((at, chain.network().to_mask())).or_default() += 1;
    }
    let emp_and_ref = |w: &[f64]| -> f64 {
        let mut log_ref = Vec::new();
        let mut keys = Vec::new();
        for (k, law) in laws.iter().enumerate() {
            for &m in &members {
                log_ref.push(law.log_potential(m) + w[k]);
                keys.push((k, m));
            }
        }
        let z = crate::numeric::log_sum_exp(log_ref.iter().copied());
        let reference: Vec<f64> = log_ref.iter().map(|l| (l - z).exp()).collect();
        let emp: Vec<f64> = keys
            .iter()
            .map(|k| counts.get(k).copied().unwrap_or(0) as f64 / steps as f64)
            .collect();
        tv(&emp, &reference)
    };
    Ok(KernelTv {
        derived: emp_and_ref(&weights),
        meanfield_posterior: emp_and_ref(&mf_weights),
    })
}
