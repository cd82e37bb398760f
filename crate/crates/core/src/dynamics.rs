//! Heat-bath (Glauber) link dynamics whose stationary law is the Gibbs
//! distribution `pi(g) ∝ exp(Q(g))`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ordered_pairs, BoundModel, CovariateTable, Network, Payoffs, Theta, UtilityModel};
use crate::numeric::logistic;

/// Starting network for [`sample_network`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialNetwork {
    Empty,
    Given(Network),
    /// Each ordered pair linked independently with probability `p`.
    Random(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub sweeps: usize,
    pub init: InitialNetwork,
    pub rng_seed: u64,
}

impl SweepConfig {
    pub fn new(sweeps: usize, rng_seed: u64) -> Self {
        SweepConfig {
            sweeps,
            init: InitialNetwork::Empty,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::validation("sweeps must be >= 1"));
        }
        if let InitialNetwork::Random(p) = self.init {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("random init probability {p} not in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Reusable Glauber sampler; holds the scan order buffer.
#[derive(Clone, Debug)]
pub struct Glauber {
    pairs: Vec<(usize, usize)>,
}

impl Glauber {
    pub fn new(n: usize) -> Self {
        Glauber {
            pairs: ordered_pairs(n).collect(),
        }
    }

    /// One sweep: every ordered pair visited once in a fresh random order and
    /// resampled from its conditional law given the rest of the network.
    pub fn sweep<R: Rng + ?Sized>(&mut self, g: &mut Network, payoffs: &Payoffs, rng: &mut R) {
        debug_assert_eq!(g.n(), payoffs.n());
        self.pairs.shuffle(rng);
        for &(i, j) in &self.pairs {
            let p = logistic(payoffs.delta(g, i, j));
            g.set_link(i, j, rng.random::<f64>() < p);
        }
    }
}

/// One Glauber sweep over all `n(n-1)` ordered pairs.
pub fn glauber_sweep<R: Rng + ?Sized>(g: &mut Network, payoffs: &Payoffs, rng: &mut R) {
    Glauber::new(g.n()).sweep(g, payoffs, rng);
}

/// Runs `cfg.sweeps` sweeps from `cfg.init`; deterministic given the seed.
pub fn sample_network(
    x: &CovariateTable,
    model: &UtilityModel,
    theta: &Theta,
    cfg: &SweepConfig,
) -> Result<Network> {
    cfg.validate()?;
    let payoffs = BoundModel::new(model, x)?.payoffs(theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let n = x.n();
    let mut g = match &cfg.init {
        InitialNetwork::Empty => Network::empty(n)?,
        InitialNetwork::Given(g0) => {
            if g0.n() != n {
                return Err(Error::validation("initial network size does not match covariates"));
            }
            g0.clone()
        }
        InitialNetwork::Random(p) => {
            let mut g = Network::empty(n)?;
            for (i, j) in ordered_pairs(n) {
                g.set_link(i, j, rng.random::<f64>() < *p);
            }
            g
        }
    };
    let mut glauber = Glauber::new(n);
    for _ in 0..cfg.sweeps {
        glauber.sweep(&mut g, &payoffs, &mut rng);
    }
    Ok(g)
}
