//! Exhaustive enumeration over all `2^{n(n-1)}` directed networks.
//!
//! Every quantity here is exact up to floating point: the normalizing
//! constant, the stationary law, the ARD likelihood, grid posteriors and the
//! sufficiency check. Limited to `n <= 5` (about one million networks).

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ard::{ArdQuerySet, ArdVector, BoundQuerySet};
use crate::error::{Error, Result};
use crate::model::{ordered_pairs, BoundModel, CovariateTable, Network, Payoffs, Theta, UtilityModel};
use crate::numeric::{log_sum_exp, LogSumExp};

pub const MAX_EXACT_N: usize = 5;

fn check_capacity(n: usize) -> Result<()> {
    if n > MAX_EXACT_N {
        return Err(Error::Capacity { n, max: MAX_EXACT_N });
    }
    if n < 2 {
        return Err(Error::validation("need n >= 2"));
    }
    Ok(())
}

/// Visits every network once in Gray-code order, passing the network, its
/// bit mask (see [`Network::from_mask`]) and its potential. Consecutive
/// networks differ in one link, so each potential is an O(n) update.
pub fn for_each_network(payoffs: &Payoffs, mut visit: impl FnMut(&Network, u64, f64)) -> Result<()> {
    let n = payoffs.n();
    check_capacity(n)?;
    let pairs: Vec<_> = ordered_pairs(n).collect();
    let total: u64 = 1 << pairs.len();
    let mut g = Network::empty(n)?;
    let mut mask = 0u64;
    let mut q = 0.0;
    visit(&g, mask, q);
    for k in 1..total {
        let b = k.trailing_zeros() as usize;
        let (i, j) = pairs[b];
        let d = payoffs.delta(&g, i, j);
        if g.has_link(i, j) {
            q -= d;
        } else {
            q += d;
        }
        g.toggle(i, j);
        mask ^= 1 << b;
        visit(&g, mask, q);
    }
    Ok(())
}

/// The stationary law `pi(g) = exp(Q(g)) / c` tabulated by network mask.
#[derive(Clone, Debug)]
pub struct ExactLaw {
    n: usize,
    log_q: Vec<f64>,
    log_c: f64,
    cdf: Vec<f64>,
}

impl ExactLaw {
    pub fn new(payoffs: &Payoffs) -> Result<Self> {
        let n = payoffs.n();
        check_capacity(n)?;
        let mut log_q = vec![0.0; 1 << (n * (n - 1))];
        let mut acc = LogSumExp::default();
        for_each_network(payoffs, |_, mask, q| {
            log_q[mask as usize] = q;
            acc.add(q);
        })?;
        Ok(ExactLaw {
            n,
            log_q,
            log_c: acc.value(),
            cdf: Vec::new(),
        })
    }

    pub fn from_model(x: &CovariateTable, model: &UtilityModel, theta: &Theta) -> Result<Self> {
        check_capacity(x.n())?;
        ExactLaw::new(&BoundModel::new(model, x)?.payoffs(theta)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn log_c(&self) -> f64 {
        self.log_c
    }

    pub fn states(&self) -> usize {
        self.log_q.len()
    }

    pub fn log_potential(&self, mask: u64) -> f64 {
        self.log_q[mask as usize]
    }

    pub fn log_prob_mask(&self, mask: u64) -> f64 {
        self.log_q[mask as usize] - self.log_c
    }

    pub fn prob(&self, g: &Network) -> f64 {
        self.log_prob_mask(g.to_mask()).exp()
    }

    /// Probabilities of every network, indexed by mask.
    pub fn probabilities(&self) -> Vec<f64> {
        self.log_q.iter().map(|&q| (q - self.log_c).exp()).collect()
    }

    /// Draws an exact sample by inverse-CDF lookup.
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Network {
        if self.cdf.is_empty() {
            let mut acc = 0.0;
            self.cdf = self
                .log_q
                .iter()
                .map(|&q| {
                    acc += (q - self.log_c).exp();
                    acc
                })
                .collect();
        }
        let u = rng.random::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        Network::from_mask(self.n, k as u64).expect("n >= 2")
    }
}

/// `log c(X; theta)` by exhaustive log-sum-exp.
pub fn log_c_exact(x: &CovariateTable, model: &UtilityModel, theta: &Theta) -> Result<f64> {
    Ok(ExactLaw::from_model(x, model, theta)?.log_c())
}

pub fn exact_pi(g: &Network, x: &CovariateTable, model: &UtilityModel, theta: &Theta) -> Result<f64> {
    if g.n() != x.n() {
        return Err(Error::validation("network size does not match covariates"));
    }
    Ok(ExactLaw::from_model(x, model, theta)?.prob(g))
}

/// Exact `log c` for any `n` when the model has no indirect term. The
/// potential then splits into independent dyads `{i, j}`, each with four
/// states: none, `i -> j`, `j -> i`, both.
pub fn log_c_dyadic(payoffs: &Payoffs) -> Result<f64> {
    if payoffs.has_indirect() {
        return Err(Error::Domain("dyadic normalizer needs a model without indirect terms".into()));
    }
    let n = payoffs.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (payoffs.u(i, j), payoffs.u(j, i));
            let both = a + b + payoffs.m(i, j) + payoffs.m(j, i);
            total += log_sum_exp([0.0, a, b, both]);
        }
    }
    Ok(total)
}

/// Cell index of every network in the partition induced by the ARD map, plus
/// the ARD value of each cell.
#[derive(Clone, Debug)]
pub struct ArdPartition {
    pub cell_of: Vec<u32>,
    pub cells: Vec<ArdVector>,
}

impl ArdPartition {
    pub fn new(qs: &ArdQuerySet, x: &CovariateTable) -> Result<Self> {
        let n = x.n();
        check_capacity(n)?;
        let bound = BoundQuerySet::new(qs, x)?;
        let total = 1usize << (n * (n - 1));
        let mut cell_of = vec![0u32; total];
        let mut index: HashMap<ArdVector, u32> = HashMap::new();
        let mut cells = Vec::new();
        for (mask, cell) in cell_of.iter_mut().enumerate() {
            let psi = bound.compute(&Network::from_mask(n, mask as u64)?);
            *cell = *index.entry(psi.clone()).or_insert_with(|| {
                cells.push(psi);
                (cells.len() - 1) as u32
            });
        }
        Ok(ArdPartition { cell_of, cells })
    }

    pub fn cell_index(&self, psi: &ArdVector) -> Option<usize> {
        self.cells.iter().position(|c| c == psi)
    }

    /// `log L(t; theta)` for every cell `t`.
    pub fn log_likelihoods(&self, law: &ExactLaw) -> Vec<f64> {
        let mut acc = vec![LogSumExp::default(); self.cells.len()];
        for (mask, &c) in self.cell_of.iter().enumerate() {
            acc[c as usize].add(law.log_prob_mask(mask as u64));
        }
        acc.iter().map(LogSumExp::value).collect()
    }
}

/// `L(psi0; theta) = sum_g 1{psi(g) = psi0} pi(g)`; zero for an empty cell.
pub fn exact_ard_likelihood(
    psi0: &ArdVector,
    x: &CovariateTable,
    model: &UtilityModel,
    theta: &Theta,
    qs: &ArdQuerySet,
) -> Result<f64> {
    let law = ExactLaw::from_model(x, model, theta)?;
    let bound = BoundQuerySet::new(qs, x)?;
    let mut acc = LogSumExp::default();
    for mask in 0..law.states() as u64 {
        if bound.compute(&Network::from_mask(x.n(), mask)?) == *psi0 {
            acc.add(law.log_prob_mask(mask));
        }
    }
    Ok(acc.value().exp())
}

/// Cartesian grid of flat parameter vectors, optionally filtered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub axes: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
}

impl ThetaGrid {
    /// Row-major product of the axes (last axis varies fastest).
    pub fn cartesian(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(Vec::is_empty) {
            return Err(Error::validation("grid axes must be non-empty"));
        }
        if axes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::validation("grid values must be finite"));
        }
        let mut points = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        Ok(ThetaGrid { axes, points })
    }

    /// `n` evenly spaced values on `[lo, hi]`.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    /// Keeps only the points satisfying `keep`.
    pub fn retain(mut self, keep: impl Fn(&[f64]) -> bool) -> Result<Self> {
        self.points.retain(|p| keep(p));
        if self.points.is_empty() {
            return Err(Error::validation("grid filter removed every point"));
        }
        Ok(self)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// What was observed: the ARD answers or the full network.
#[derive(Clone, Debug)]
pub enum Observation<'a> {
    Ard { psi0: &'a ArdVector, queries: &'a ArdQuerySet },
    Network(&'a Network),
}

/// Grid posterior: weight `prior(theta) * L(obs; theta)` per grid point,
/// normalized to sum to one.
pub fn exact_posterior_on_grid(
    obs: &Observation<'_>,
    x: &CovariateTable,
    model: &UtilityModel,
    grid: &ThetaGrid,
    prior: &dyn Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    check_capacity(x.n())?;
    let bound = BoundModel::new(model, x)?;
    let (partition, cell, mask) = match obs {
        Observation::Ard { psi0, queries } => {
            let part = ArdPartition::new(queries, x)?;
            let cell = part.cell_index(psi0);
            (Some(part), cell, 0)
        }
        Observation::Network(g) => {
            if g.n() != x.n() {
                return Err(Error::validation("network size does not match covariates"));
            }
            (None, None, g.to_mask())
        }
    };
    let mut log_w = Vec::with_capacity(grid.len());
    for point in grid.points() {
        let p0 = prior(point);
        if !(p0 > 0.0) {
            log_w.push(f64::NEG_INFINITY);
            continue;
        }
        let law = ExactLaw::new(&bound.payoffs_flat(point)?)?;
        let log_lik = match (&partition, cell) {
            (Some(part), Some(c)) => part.log_likelihoods(&law)[c],
            (Some(_), None) => f64::NEG_INFINITY,
            (None, _) => law.log_prob_mask(mask),
        };
        log_w.push(p0.ln() + log_lik);
    }
    let norm = log_sum_exp(log_w.iter().copied());
    if norm == f64::NEG_INFINITY {
        return Err(Error::DegenerateEvidence);
    }
    Ok(log_w.into_iter().map(|w| (w - norm).exp()).collect())
}

/// `max_{g, theta, theta'} |P[g | psi(g); theta] - P[g | psi(g); theta']|`
/// over the grid. Zero (up to round-off) certifies that the ARD map is
/// sufficient for theta on the grid.
pub fn sufficiency_variation(
    qs: &ArdQuerySet,
    x: &CovariateTable,
    model: &UtilityModel,
    grid: &ThetaGrid,
) -> Result<f64> {
    let part = ArdPartition::new(qs, x)?;
    let bound = BoundModel::new(model, x)?;
    let states = part.cell_of.len();
    let mut lo = vec![f64::INFINITY; states];
    let mut hi = vec![f64::NEG_INFINITY; states];
    for point in grid.points() {
        let law = ExactLaw::new(&bound.payoffs_flat(point)?)?;
        let cell_ll = part.log_likelihoods(&law);
        for (mask, &c) in part.cell_of.iter().enumerate() {
            let cond = (law.log_prob_mask(mask as u64) - cell_ll[c as usize]).exp();
            lo[mask] = lo[mask].min(cond);
            hi[mask] = hi[mask].max(cond);
        }
    }
    Ok(lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max))
}
