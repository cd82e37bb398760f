//! Mean-field approximation of the log normalizing constant.
//!
//! For any product-Bernoulli law `q` with link probabilities `mu`,
//!
//! ```text
//! log c(X; theta) >= E_q[Q(g)] + H(q)
//! ```
//!
//! The solver maximizes the right-hand side by damped coordinate ascent:
//! since the expected potential is affine in each single `mu_ij`, the
//! coordinate optimum is `logistic(dE/dmu_ij)`, and every damped move toward
//! it increases the bound.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ordered_pairs, BoundModel, CovariateTable, Payoffs, Theta, UtilityModel};
use crate::numeric::logistic;

/// Link probabilities are kept inside `[MU_EPS, 1 - MU_EPS]`.
pub const MU_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanFieldOptions {
    /// Optional starting `mu` (row-major `n x n`) for the first restart;
    /// `0.5` everywhere otherwise.
    pub init: Option<Vec<f64>>,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    /// Seed for the random restarts.
    pub seed: u64,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        MeanFieldOptions {
            init: None,
            damping: 0.5,
            tol: 1e-8,
            max_iter: 10_000,
            restarts: 3,
            seed: 0x6d66,
        }
    }
}

impl MeanFieldOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::validation("mean-field tol must be > 0"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::validation("mean-field damping must lie in (0, 1]"));
        }
        if self.restarts == 0 {
            return Err(Error::validation("mean-field restarts must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub n: usize,
    /// Row-major `n x n`; the diagonal is unused and stored as zero.
    pub mu: Vec<f64>,
    /// `E_q[Q] + H(q)`, i.e. `log c^MF`.
    pub bound: f64,
    /// `bound / n^2`.
    pub phi_mf: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// `log c^MF` together with the solver's convergence flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogConstant {
    pub value: f64,
    pub converged: bool,
}

#[inline]
fn clamp_mu(x: f64) -> f64 {
    x.clamp(MU_EPS, 1.0 - MU_EPS)
}

/// `E_q[Q(g)]` for the product law with probabilities `mu` (unscaled).
pub fn expected_potential(mu: &[f64], payoffs: &Payoffs) -> f64 {
    let n = payoffs.n();
    assert_eq!(mu.len(), n * n, "mu must be n x n");
    let mut total = 0.0;
    for (i, j) in ordered_pairs(n) {
        let mij = mu[i * n + j];
        if mij == 0.0 {
            continue;
        }
        let mut term = payoffs.u(i, j);
        if payoffs.has_mutual() {
            term += mu[j * n + i] * payoffs.m(i, j);
        }
        if payoffs.has_indirect() {
            for k in 0..n {
                if k != i && k != j {
                    term += mu[j * n + k] * payoffs.v(i, k);
                }
            }
        }
        total += mij * term;
    }
    total
}

/// Entropy of the product law: one Bernoulli per ordered pair.
pub fn entropy(mu: &[f64], n: usize) -> f64 {
    assert_eq!(mu.len(), n * n, "mu must be n x n");
    ordered_pairs(n)
        .map(|(i, j)| {
            let p = clamp_mu(mu[i * n + j]);
            -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
        })
        .sum()
}

/// The lower bound `E_q[Q] + H(q)`.
pub fn bound_value(mu: &[f64], payoffs: &Payoffs) -> f64 {
    expected_potential(mu, payoffs) + entropy(mu, payoffs.n())
}

/// `d E_q[Q] / d mu_ij`.
pub fn coordinate_gradient(mu: &[f64], payoffs: &Payoffs, i: usize, j: usize) -> f64 {
    let n = payoffs.n();
    let mut d = payoffs.u(i, j);
    if payoffs.has_mutual() {
        d += 2.0 * payoffs.m(i, j) * mu[j * n + i];
    }
    if payoffs.has_indirect() {
        for k in 0..n {
            if k != i && k != j {
                d += payoffs.v(i, k) * mu[j * n + k] + payoffs.v(k, j) * mu[k * n + i];
            }
        }
    }
    d
}

struct Run {
    mu: Vec<f64>,
    bound: f64,
    converged: bool,
    iterations: usize,
}

fn ascend(payoffs: &Payoffs, mut mu: Vec<f64>, opts: &MeanFieldOptions) -> Run {
    let n = payoffs.n();
    let pairs: Vec<_> = ordered_pairs(n).collect();
    let mut damping = opts.damping;
    let mut bound = bound_value(&mu, payoffs);
    for it in 1..=opts.max_iter {
        let before = mu.clone();
        let mut max_step = 0.0f64;
        for &(i, j) in &pairs {
            let target = logistic(coordinate_gradient(&mu, payoffs, i, j));
            let cur = mu[i * n + j];
            let next = clamp_mu((1.0 - damping) * cur + damping * target);
            max_step = max_step.max((next - cur).abs());
            mu[i * n + j] = next;
        }
        let next_bound = bound_value(&mu, payoffs);
        if next_bound < bound - 1e-12 * bound.abs().max(1.0) {
            // Only reachable through round-off; retry the sweep more cautiously.
            log::warn!("mean-field bound decreased at iteration {it}; halving damping to {}", damping / 2.0);
            mu = before;
            damping /= 2.0;
            if damping < 1e-6 {
                return Run {
                    mu,
                    bound,
                    converged: false,
                    iterations: it,
                };
            }
            continue;
        }
        bound = next_bound;
        if max_step < opts.tol {
            return Run {
                mu,
                bound,
                converged: true,
                iterations: it,
            };
        }
    }
    Run {
        mu,
        bound,
        converged: false,
        iterations: opts.max_iter,
    }
}

/// Maximizes the mean-field bound over `mu`, keeping the best of
/// `opts.restarts` starts (the first at `0.5` or `opts.init`, the rest
/// uniform random). Separable payoffs have a concave bound, so a single
/// start is used for them.
pub fn solve_payoffs(payoffs: &Payoffs, opts: &MeanFieldOptions) -> Result<MeanFieldState> {
    opts.validate()?;
    let n = payoffs.n();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let restarts = if payoffs.is_separable() { 1 } else { opts.restarts };
    let mut best: Option<Run> = None;
    for r in 0..restarts {
        let mut mu = vec![0.0; n * n];
        match (&opts.init, r) {
            (Some(init), 0) => {
                if init.len() != n * n {
                    return Err(Error::validation("mean-field init must be n x n"));
                }
                for (i, j) in ordered_pairs(n) {
                    mu[i * n + j] = clamp_mu(init[i * n + j]);
                }
            }
            (None, 0) => ordered_pairs(n).for_each(|(i, j)| mu[i * n + j] = 0.5),
            _ => ordered_pairs(n).for_each(|(i, j)| mu[i * n + j] = clamp_mu(rng.random::<f64>())),
        }
        let run = ascend(payoffs, mu, opts);
        if best.as_ref().is_none_or(|b| run.bound > b.bound) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    Ok(MeanFieldState {
        n,
        phi_mf: best.bound / (n * n) as f64,
        mu: best.mu,
        bound: best.bound,
        converged: best.converged,
        iterations: best.iterations,
    })
}

pub fn fixed_point_solve(
    x: &CovariateTable,
    model: &UtilityModel,
    theta: &Theta,
    opts: &MeanFieldOptions,
) -> Result<MeanFieldState> {
    solve_payoffs(&BoundModel::new(model, x)?.payoffs(theta)?, opts)
}

/// `log c^MF(X; theta) = n^2 phi^MF`.
pub fn log_c_mf(
    x: &CovariateTable,
    model: &UtilityModel,
    theta: &Theta,
    opts: &MeanFieldOptions,
) -> Result<LogConstant> {
    let st = fixed_point_solve(x, model, theta, opts)?;
    Ok(LogConstant {
        value: st.bound,
        converged: st.converged,
    })
}

/// Memoizes `log c^MF` by the exact bit pattern of the flat parameter vector.
#[derive(Clone, Debug)]
pub struct MeanFieldCache {
    opts: MeanFieldOptions,
    entries: HashMap<Vec<u64>, LogConstant>,
    hits: usize,
}

impl MeanFieldCache {
    pub fn new(opts: MeanFieldOptions) -> Self {
        MeanFieldCache {
            opts,
            entries: HashMap::new(),
            hits: 0,
        }
    }

    pub fn options(&self) -> &MeanFieldOptions {
        &self.opts
    }

    pub fn get_or_compute(&mut self, bound: &BoundModel, theta: &[f64]) -> Result<LogConstant> {
        let key: Vec<u64> = theta.iter().map(|x| x.to_bits()).collect();
        if let Some(&v) = self.entries.get(&key) {
            self.hits += 1;
            return Ok(v);
        }
        let st = solve_payoffs(&bound.payoffs_flat(theta)?, &self.opts)?;
        let v = LogConstant {
            value: st.bound,
            converged: st.converged,
        };
        self.entries.insert(key, v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn hits(&self) -> usize {
        self.hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Network, PairFeature};
    use crate::numeric::softplus;

    fn const_payoffs(n: usize, a: f64, b: f64, c: f64) -> Payoffs {
        let mut u = vec![0.0; n * n];
        let mut m = vec![0.0; n * n];
        let mut v = vec![0.0; n * n];
        for (i, j) in ordered_pairs(n) {
            u[i * n + j] = a;
            m[i * n + j] = b;
            v[i * n + j] = c;
        }
        Payoffs::from_matrices(n, u, m, v).unwrap()
    }

    fn half(n: usize) -> Vec<f64> {
        let mut mu = vec![0.0; n * n];
        ordered_pairs(n).for_each(|(i, j)| mu[i * n + j] = 0.5);
        mu
    }

    #[test]
    fn expected_potential_hand_count() {
        // 6 ordered pairs and 6 ordered triples at n = 3.
        let (a, b, c) = (0.7, -1.3, 2.1);
        let p = const_payoffs(3, a, b, c);
        let got = expected_potential(&half(3), &p);
        let want = 6.0 * 0.5 * a + 6.0 * 0.25 * b + 6.0 * 0.25 * c;
        assert!((got - want).abs() < 1e-14);
        assert_eq!(expected_potential(&half(3), &const_payoffs(3, 0.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn expected_potential_of_degenerate_law_is_potential() {
        let p = const_payoffs(4, 0.3, -0.4, 0.25);
        let g = Network::from_edges(4, &[(0, 1), (1, 0), (1, 2), (2, 3), (3, 1), (0, 3)]).unwrap();
        let mut mu = vec![0.0; 16];
        for (i, j) in g.edges() {
            mu[i * 4 + j] = 1.0;
        }
        assert!((expected_potential(&mu, &p) - p.potential(&g)).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&half(3), 3) - 6.0 * 2f64.ln()).abs() < 1e-14);
        let mu = vec![0.0, 0.25, 0.5, 0.0];
        let want = (0.25 * 4f64.ln() + 0.75 * (4.0f64 / 3.0).ln()) + 2f64.ln();
        assert!((entropy(&mu, 2) - want).abs() < 1e-14);
        let extreme = vec![0.0, 1.0, 0.0, 0.0];
        let h = entropy(&extreme, 2);
        assert!((0.0..1e-9).contains(&h));
    }

    #[test]
    fn separable_fixed_point_is_logistic() {
        let n = 4;
        let x = CovariateTable::new(n)
            .with_attribute("age", vec![20.0, 31.0, 45.0, 60.0])
            .unwrap();
        let model = UtilityModel {
            direct_features: vec![PairFeature::Constant, PairFeature::abs_diff("age", 10.0)],
            ..Default::default()
        };
        let theta = Theta::new(vec![0.5, -0.7], vec![], vec![]);
        let st = fixed_point_solve(&x, &model, &theta, &MeanFieldOptions::default()).unwrap();
        assert!(st.converged);
        let p = BoundModel::new(&model, &x).unwrap().payoffs(&theta).unwrap();
        let mut closed = 0.0;
        for (i, j) in ordered_pairs(n) {
            assert!((st.mu[i * n + j] - logistic(p.u(i, j))).abs() < 1e-7);
            closed += softplus(p.u(i, j));
        }
        assert!((st.bound - closed).abs() < 1e-8);
        assert_eq!(st.phi_mf, st.bound / 16.0);
    }

    #[test]
    fn zero_theta_gives_log2_per_pair() {
        let n = 5;
        let p = const_payoffs(n, 0.0, 0.0, 0.0);
        let st = solve_payoffs(&p, &MeanFieldOptions::default()).unwrap();
        assert!(st.mu.iter().enumerate().all(|(k, &m)| k % (n + 1) == 0 || m == 0.5));
        assert!((st.bound - 20.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ascent_is_monotone() {
        let p = const_payoffs(5, -1.0, 0.8, 0.3);
        let opts = MeanFieldOptions::default();
        let mut mu = half(5);
        let mut prev = bound_value(&mu, &p);
        for _ in 0..50 {
            let run = ascend(&p, mu.clone(), &MeanFieldOptions { max_iter: 1, ..opts.clone() });
            assert!(run.bound >= prev - 1e-12, "{} < {prev}", run.bound);
            prev = run.bound;
            mu = run.mu;
        }
    }

    #[test]
    fn options_validation() {
        let p = const_payoffs(3, 0.0, 0.0, 0.0);
        for bad in [
            MeanFieldOptions { tol: 0.0, ..Default::default() },
            MeanFieldOptions { damping: 0.0, ..Default::default() },
            MeanFieldOptions { damping: 1.5, ..Default::default() },
            MeanFieldOptions { restarts: 0, ..Default::default() },
        ] {
            assert!(solve_payoffs(&p, &bad).is_err());
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let p = const_payoffs(4, -0.5, 1.0, 0.4);
        let opts = MeanFieldOptions { max_iter: 1, ..Default::default() };
        let st = solve_payoffs(&p, &opts).unwrap();
        assert!(!st.converged);
        assert!(st.bound.is_finite());
    }

    #[test]
    fn cache_hits_on_identical_theta() {
        let x = CovariateTable::new(3).with_attribute("age", vec![1.0, 2.0, 3.0]).unwrap();
        let model = UtilityModel {
            direct_features: vec![PairFeature::Constant],
            ..Default::default()
        };
        let bm = BoundModel::new(&model, &x).unwrap();
        let mut cache = MeanFieldCache::new(MeanFieldOptions::default());
        let a = cache.get_or_compute(&bm, &[0.3]).unwrap();
        let b = cache.get_or_compute(&bm, &[0.3]).unwrap();
        assert_eq!(a, b);
        assert_eq!((cache.len(), cache.hits()), (1, 1));
    }
}
