use ardnet::dynamics::{sample_network, Glauber, SweepConfig};
use ardnet::meanfield::{bound_value, coordinate_gradient, solve_payoffs, MeanFieldOptions};
use ardnet::numeric::logistic;
use ardnet::oracle::{log_c_exact, ExactLaw};
use ardnet::validate::{full_model, small_covariates};
use ardnet::{BoundModel, Network, Payoffs, Theta};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_payoffs(n: usize, rng: &mut impl Rng, scale: f64) -> Payoffs {
    let mut mat = || {
        let mut m = vec![0.0; n * n];
        for (i, j) in ardnet::model::ordered_pairs(n) {
            m[i * n + j] = rng.random_range(-scale..scale);
        }
        m
    };
    let u = mat();
    let mut m = mat();
    for i in 0..n {
        for j in 0..i {
            m[i * n + j] = m[j * n + i];
        }
    }
    let mut v = mat();
    v.iter_mut().for_each(|x| *x *= 0.5);
    Payoffs::from_matrices(n, u, m, v).unwrap()
}

#[test]
fn single_pair_kernel_is_reversible() {
    // pi(g0) P(g0 -> g1) = pi(g1) P(g1 -> g0) for the heat-bath update of one pair.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_payoffs(3, &mut rng, 1.5);
    let law = ExactLaw::new(&p).unwrap();
    let mut worst = 0.0f64;
    for mask in 0..64u64 {
        let g0 = Network::from_mask(3, mask).unwrap();
        for (i, j) in ardnet::model::ordered_pairs(3) {
            let mut g1 = g0.clone();
            g1.toggle(i, j);
            let on = logistic(p.delta(&g0, i, j));
            let to = |g: &Network| if g.has_link(i, j) { on } else { 1.0 - on };
            let lhs = law.prob(&g0) * to(&g1);
            let rhs = law.prob(&g1) * to(&g0);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn separable_marginals_are_logistic() {
    let x = small_covariates(4);
    let model = ardnet::validate::separable_model();
    let theta = Theta::from_flat(&model, &[0.4, -0.8]).unwrap();
    let p = BoundModel::new(&model, &x).unwrap().payoffs(&theta).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut g = Network::empty(4).unwrap();
    let mut glauber = Glauber::new(4);
    let mut counts = [0usize; 16];
    let samples = 20_000;
    for _ in 0..samples {
        glauber.sweep(&mut g, &p, &mut rng);
        for (i, j) in g.edges() {
            counts[i * 4 + j] += 1;
        }
    }
    for (i, j) in ardnet::model::ordered_pairs(4) {
        let freq = counts[i * 4 + j] as f64 / samples as f64;
        assert!((freq - logistic(p.u(i, j))).abs() < 0.02, "{i}{j}: {freq}");
    }
}

#[test]
fn tv_shrinks_with_more_samples() {
    let x = small_covariates(3);
    let model = full_model();
    let theta = Theta::from_flat(&model, &[0.3, -1.0, 0.5, -0.4]).unwrap();
    let p = BoundModel::new(&model, &x).unwrap().payoffs(&theta).unwrap();
    let probs = ExactLaw::new(&p).unwrap().probabilities();
    let tv = |thin: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(thin as u64);
        let mut g = Network::empty(3).unwrap();
        let mut glauber = Glauber::new(3);
        let mut counts = vec![0usize; 64];
        let samples = 40_000;
        for _ in 0..samples {
            for _ in 0..thin {
                glauber.sweep(&mut g, &p, &mut rng);
            }
            counts[g.to_mask() as usize] += 1;
        }
        0.5 * probs
            .iter()
            .zip(&counts)
            .map(|(q, &c)| (q - c as f64 / samples as f64).abs())
            .sum::<f64>()
    };
    let (t1, t4, t16) = (tv(1), tv(4), tv(16));
    assert!(t16 < 0.02 && t4 < 0.02 && t1 < 0.03, "{t1} {t4} {t16}");
    assert!(t16 <= t1 + 0.005, "{t1} {t16}");
}

#[test]
fn sample_network_is_deterministic() {
    let x = small_covariates(5);
    let model = full_model();
    let theta = Theta::from_flat(&model, &[0.1, -0.5, 0.8, 0.2]).unwrap();
    let a = sample_network(&x, &model, &theta, &SweepConfig::new(25, 3)).unwrap();
    let b = sample_network(&x, &model, &theta, &SweepConfig::new(25, 3)).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn meanfield_bound_is_below_exact(seed in any::<u64>(), n in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_payoffs(n, &mut rng, 2.0);
        let mf = solve_payoffs(&p, &MeanFieldOptions::default()).unwrap();
        let exact = ExactLaw::new(&p).unwrap().log_c();
        prop_assert!(mf.bound <= exact + 1e-9, "{} > {}", mf.bound, exact);
    }

    #[test]
    fn separable_bound_is_exact(seed in any::<u64>(), n in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u: Vec<f64> = (0..n * n).map(|k| if k % (n + 1) == 0 { 0.0 } else { rng.random_range(-4.0..4.0) }).collect();
        let closed: f64 = ardnet::model::ordered_pairs(n).map(|(i, j)| ardnet::numeric::softplus(u[i * n + j])).sum();
        let p = Payoffs::from_matrices(n, u, vec![0.0; n * n], vec![0.0; n * n]).unwrap();
        let mf = solve_payoffs(&p, &MeanFieldOptions::default()).unwrap();
        prop_assert!((mf.bound - closed).abs() < 1e-8);
    }

    /// logit(mu_ij) at the fixed point is the derivative of E_q[Q]; check
    /// the derivative against central differences of the whole bound.
    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), n in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_payoffs(n, &mut rng, 1.5);
        let mut mu = vec![0.0; n * n];
        for (i, j) in ardnet::model::ordered_pairs(n) {
            mu[i * n + j] = rng.random_range(0.1..0.9);
        }
        let h = 1e-6;
        for (i, j) in ardnet::model::ordered_pairs(n) {
            let k = i * n + j;
            let m0 = mu[k];
            let analytic = coordinate_gradient(&mu, &p, i, j) - (m0 / (1.0 - m0)).ln();
            mu[k] = m0 + h;
            let up = bound_value(&mu, &p);
            mu[k] = m0 - h;
            let down = bound_value(&mu, &p);
            mu[k] = m0;
            let fd = (up - down) / (2.0 * h);
            prop_assert!((fd - analytic).abs() < 1e-6, "{fd} vs {analytic}");
        }
    }
}

#[test]
fn meanfield_gap_on_design_features() {
    let x = small_covariates(4);
    let model = full_model();
    for g1 in [-1.0, 0.0, 1.0] {
        for g2 in [-1.0, 0.0, 1.0] {
            let theta = Theta::from_flat(&model, &[1.0, -1.0, g1, g2]).unwrap();
            let mf = ardnet::meanfield::log_c_mf(&x, &model, &theta, &MeanFieldOptions::default()).unwrap();
            let exact = log_c_exact(&x, &model, &theta).unwrap();
            assert!(mf.converged);
            assert!(exact - mf.value >= -1e-9, "gap {}", exact - mf.value);
        }
    }
}
