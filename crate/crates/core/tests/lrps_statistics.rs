mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use snowball_ns::lrps::{live_covariance, mcmc_walk, ProposalState};
use snowball_ns::point::Point;

#[test]
fn restricted_linear_prior_is_uniform_above_threshold() {
    let l_min = 0.5f64.ln();
    let mut prop = ProposalState::new(1, 1.0, 0.5);
    prop.scale = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws: Vec<f64> = (0..10_000)
        .map(|_| {
            let u0 = rng.random_range(0.5..1.0);
            let seed = Point::evaluate(&common::Linear, vec![u0], 0).unwrap();
            let w = mcmc_walk(&seed, l_min, 100, &prop, &common::Linear, &mut rng).unwrap();
            assert!(w.point.logl > l_min);
            w.point.theta[0]
        })
        .collect();
    let d = common::ks_statistic(&draws, |x| ((x - 0.5) / 0.5).clamp(0.0, 1.0));
    let p = common::ks_p_value(d, draws.len());
    assert!(p > 0.01, "KS D = {d}, p = {p}");
}

#[test]
fn ks_oracle_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let xs: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
    let d = common::ks_statistic(&xs, |x| x);
    assert!(common::ks_p_value(d, xs.len()) > 0.01);
    let skewed: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let d = common::ks_statistic(&skewed, |x| x);
    assert!(common::ks_p_value(d, xs.len()) < 1e-6);
}

#[test]
fn constraint_holds_in_randomized_trials() {
    let g = snowball_ns::problems::Gaussian::new(
        2,
        0.3,
        snowball_ns::problems::BoxPrior::new(-3.0, 3.0).unwrap(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut prop = ProposalState::new(2, 1.0, 0.5);
    for _ in 0..100_000 {
        let u: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
        let seed = Point::evaluate(&g, u, 0).unwrap();
        let l_min = seed.logl - rng.random::<f64>() * 2.0 - f64::MIN_POSITIVE;
        prop.scale = rng.random_range(0.01..5.0);
        let m = rng.random_range(1..4);
        let w = mcmc_walk(&seed, l_min, m, &prop, &g, &mut rng).unwrap();
        assert!(w.point.logl > l_min);
    }
}

#[test]
fn covariance_is_stable_under_small_extensions() {
    let (k, d) = (1000usize, 3usize);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut within = 0;
    for _ in 0..100 {
        let mut live: Vec<Point> = (0..k)
            .map(|i| Point {
                u: (0..d).map(|_| rng.random()).collect(),
                theta: vec![0.0; d],
                logl: 0.0,
                origin_id: i as u64,
            })
            .collect();
        let before = live_covariance(&live).unwrap().covariance();
        live.extend((0..k / 10).map(|i| Point {
            u: (0..d).map(|_| rng.random()).collect(),
            theta: vec![0.0; d],
            logl: 0.0,
            origin_id: (k + i) as u64,
        }));
        let after = live_covariance(&live).unwrap().covariance();
        let max_change = (&after - &before).abs().max();
        if max_change <= 1.0 / (k as f64).sqrt() {
            within += 1;
        }
    }
    assert!(within >= 95, "{within}/100 trials within 1/sqrt(K)");
}
