use ardnet::ard::{
    builtin_query_sets, compute_ard, design1_queries, ArdQuery, ArdQuerySet, BoundQuerySet, Comparison, Direction,
    Predicate,
};
use ardnet::experiment::{example2_covariates, load_covariates, synthetic_ages, write_covariates};
use ardnet::oracle::{exact_ard_likelihood, exact_pi, ArdPartition, ExactLaw};
use ardnet::validate::{full_model, small_covariates};
use ardnet::{BoundModel, CovariateTable, Network, Theta};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_law_sums_to_one(t in prop::collection::vec(-2.0f64..2.0, 4)) {
        let x = small_covariates(3);
        let model = full_model();
        let theta = Theta::from_flat(&model, &t).unwrap();
        let total: f64 = (0..64u64)
            .map(|m| exact_pi(&Network::from_mask(3, m).unwrap(), &x, &model, &theta).unwrap())
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ard_likelihood_sums_to_one_over_cells(t in prop::collection::vec(-2.0f64..2.0, 4)) {
        let x = small_covariates(3);
        let model = full_model();
        let p = BoundModel::new(&model, &x).unwrap().payoffs_flat(&t).unwrap();
        let part = ArdPartition::new(&ardnet::ard::design2_benchmark_queries(), &x).unwrap();
        let total: f64 = part.log_likelihoods(&ExactLaw::new(&p).unwrap()).iter().map(|l| l.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn adding_a_link_never_lowers_a_count(mask in 0u64..(1 << 20), i in 0usize..5, j in 0usize..5) {
        prop_assume!(i != j);
        let x = CovariateTable::new(5).with_attribute("age", vec![19.0, 24.0, 37.0, 45.0, 61.0]).unwrap();
        let mut g = Network::from_mask(5, mask).unwrap();
        g.set_link(i, j, false);
        for (_, qs) in builtin_query_sets() {
            let b = BoundQuerySet::new(&qs, &x).unwrap();
            let before = b.compute(&g);
            let mut h = g.clone();
            h.set_link(i, j, true);
            let after = b.compute(&h);
            prop_assert!(before.values.iter().zip(&after.values).all(|(a, b)| b >= a));
        }
    }
}

#[test]
fn log_c_matches_naive_summation() {
    let x = small_covariates(3);
    let model = full_model();
    let p = BoundModel::new(&model, &x).unwrap().payoffs_flat(&[0.7, -1.3, 0.4, 0.9]).unwrap();
    let naive: f64 = (0..64u64).map(|m| p.potential(&Network::from_mask(3, m).unwrap()).exp()).sum();
    assert!((ExactLaw::new(&p).unwrap().log_c() - naive.ln()).abs() < 1e-12);
}

#[test]
fn degree_profile_likelihood_counts_networks() {
    // theta = 0: every network has probability 1/64, so L(psi) = |cell| / 64.
    let x = small_covariates(3);
    let qs = ArdQuerySet::new(vec![ArdQuery::new("out", Direction::Outbound, Predicate::AlwaysTrue)]).unwrap();
    let model = full_model();
    let theta = Theta::zeros(&model);
    let part = ArdPartition::new(&qs, &x).unwrap();
    for cell in &part.cells {
        let size = part.cell_of.iter().filter(|&&c| part.cells[c as usize] == *cell).count();
        let lik = exact_ard_likelihood(cell, &x, &model, &theta, &qs).unwrap();
        assert!((lik - size as f64 / 64.0).abs() < 1e-12);
    }
    // Out-degree profile (2, 0, 1): C(2,2) C(2,0) C(2,1) = 2 networks.
    let mut g = Network::empty(3).unwrap();
    g.set_link(0, 1, true);
    g.set_link(0, 2, true);
    g.set_link(2, 0, true);
    let psi = compute_ard(&g, &x, &qs).unwrap();
    let lik = exact_ard_likelihood(&psi, &x, &model, &theta, &qs).unwrap();
    assert!((lik - 2.0 / 64.0).abs() < 1e-12);
}

#[test]
fn example2_rich_alter_counts() {
    let x = example2_covariates();
    let qs = ArdQuerySet::new(vec![ArdQuery::new(
        "rich",
        Direction::Outbound,
        Predicate::AlterAttrThreshold {
            attr: "wealth".into(),
            op: Comparison::Gt,
            value: 400.0,
        },
    )])
    .unwrap();
    let psi = compute_ard(&Network::complete(4).unwrap(), &x, &qs).unwrap();
    assert_eq!(psi.values, vec![1, 1, 2, 2]);
}

#[test]
fn design1_totals_equal_sum_of_age_bins() {
    let qs = design1_queries();
    let names: Vec<&str> = qs.queries().iter().map(|q| q.name.as_str()).collect();
    let idx = |name: &str| names.iter().position(|&n| n == name).unwrap();
    for seed in 0..5 {
        let x = synthetic_ages(15, seed).unwrap();
        let model = ardnet::experiment::Preset::Design1.model();
        let theta = Theta::from_flat(&model, &[5.0, -0.2]).unwrap();
        let g = ardnet::dynamics::sample_network(&x, &model, &theta, &ardnet::dynamics::SweepConfig::new(20, seed))
            .unwrap();
        let psi = compute_ard(&g, &x, &qs).unwrap();
        for r in 0..15 {
            for dir in ["in", "out"] {
                let total = psi.answer(r, idx(&format!("{dir}_total")));
                let bins: u32 = ["age_lt25", "age_25_45", "age_ge45"]
                    .iter()
                    .map(|b| psi.answer(r, idx(&format!("{dir}_{b}"))))
                    .sum();
                assert_eq!(total, bins);
            }
        }
    }
}

#[test]
fn query_sets_round_trip_through_json() {
    for (_, qs) in builtin_query_sets() {
        assert_eq!(ArdQuerySet::from_json(&qs.to_json()).unwrap(), qs);
    }
}

#[test]
fn covariates_round_trip_through_csv() {
    let x = synthetic_ages(30, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    write_covariates(std::fs::File::create(&path).unwrap(), &x).unwrap();
    let back = load_covariates(&path).unwrap();
    assert_eq!(back.n(), 30);
    assert_eq!(back.get("age").unwrap(), x.get("age").unwrap());
}
