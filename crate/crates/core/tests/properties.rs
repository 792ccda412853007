mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use resilient_gd::aggregation::{cge_filter, sum_fastest, GarSpec};
use resilient_gd::bounds::{bound_deterministic, convexity_gamma, lipschitz_mu};
use resilient_gd::engine::{run, NoiseModel, RunConfig, StepSchedule, StragglerModel};
use resilient_gd::redundancy::compute_epsilon;
use resilient_gd::{AgentRoster, BoxDomain, FaultKind, RegressionProblem};

fn vec2(range: f64) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-range..range, 2).prop_map(DVector::from_vec)
}

fn short_run(f: usize, r: usize, seed: u64) -> RunConfig {
    let roster = AgentRoster::new(10, f, r, FaultKind::RandomGaussian { std: 200.0 }).unwrap();
    let mut cfg = RunConfig::new(RegressionProblem::bundled_fixture(), roster);
    cfg.iterations = 40;
    cfg.seed = seed;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_central_difference(agent in 0usize..10, x in vec2(50.0)) {
        let p = RegressionProblem::bundled_fixture();
        let g = p.gradient(agent, &x).unwrap();
        for j in 0..2 {
            let h = 1e-5;
            let (mut hi, mut lo) = (x.clone(), x.clone());
            hi[j] += h;
            lo[j] -= h;
            let fd = (p.aggregate_cost(&[agent], &hi).unwrap() - p.aggregate_cost(&[agent], &lo).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1.0), "{} vs {}", fd, g[j]);
        }
    }

    #[test]
    fn cost_is_additive_over_disjoint_sets(split in 1usize..9, x in vec2(20.0)) {
        let p = RegressionProblem::bundled_fixture();
        let left: Vec<usize> = (0..split).collect();
        let right: Vec<usize> = (split..10).collect();
        let all: Vec<usize> = (0..10).collect();
        let sum = p.aggregate_cost(&left, &x).unwrap() + p.aggregate_cost(&right, &x).unwrap();
        prop_assert!((p.aggregate_cost(&all, &x).unwrap() - sum).abs() <= 1e-9 * sum.max(1.0));
    }

    #[test]
    fn minimizer_ignores_subset_order(seed in 0u64..1000, rot in 0usize..5) {
        let agents = common::random_agents(seed, 5, 2);
        let p = common::to_problem(&agents);
        let mut s: Vec<usize> = (0..5).collect();
        let x = p.least_squares_min(&s).unwrap();
        s.rotate_left(rot);
        s.reverse();
        prop_assert!((p.least_squares_min(&s).unwrap() - x).norm() < 1e-12);
    }

    #[test]
    fn minimizer_invariant_under_data_scaling(seed in 0u64..1000, scale in 0.1f64..10.0) {
        let p = common::to_problem(&common::random_agents(seed, 4, 2));
        let all = [0, 1, 2, 3];
        let x = p.least_squares_min(&all).unwrap();
        let y = p.scaled(scale).least_squares_min(&all).unwrap();
        prop_assert!((x - y).norm() < 1e-10);
        let mu = lipschitz_mu(&p).unwrap();
        prop_assert!((lipschitz_mu(&p.scaled(scale)).unwrap() - mu * scale * scale).abs() < 1e-9 * mu * scale * scale);
    }

    #[test]
    fn gamma_never_exceeds_mu(seed in 0u64..10_000, n in 3usize..8) {
        let p = common::to_problem(&common::random_agents(seed, n, 2));
        for f in 0..=(n - 1) / 2 {
            prop_assert!(convexity_gamma(&p, f).unwrap() <= lipschitz_mu(&p).unwrap());
        }
    }

    #[test]
    fn cge_zero_faults_is_sum(grads in prop::collection::vec(vec2(100.0), 1..8)) {
        prop_assert_eq!(cge_filter(&grads, 0).unwrap(), sum_fastest(&grads, grads.len()).unwrap());
    }

    #[test]
    fn cge_drops_largest(grads in prop::collection::vec(vec2(100.0), 2..8), f in 0usize..7) {
        let m = grads.len();
        prop_assume!(f < m);
        let got = cge_filter(&grads, f).unwrap();
        // brute force: among all (m−f)-subsets, the kept one has the
        // smallest sorted norm profile
        let mut best: Option<(Vec<f64>, DVector<f64>)> = None;
        for subset in common::choose(&(0..m).collect::<Vec<_>>(), m - f) {
            let mut norms: Vec<f64> = subset.iter().map(|&i| grads[i].norm()).collect();
            norms.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let total: DVector<f64> = subset.iter().map(|&i| grads[i].clone()).sum();
            if best.as_ref().is_none_or(|(b, _)| norms < *b) {
                best = Some((norms, total));
            }
        }
        prop_assert!((got - best.unwrap().1).norm() <= 1e-9);
    }

    #[test]
    fn projection_idempotent_and_nonexpansive(x in vec2(3000.0), y in vec2(3000.0), half in 1.0f64..2000.0) {
        let w = BoxDomain::hypercube(2, half).unwrap();
        let (px, py) = (w.project(&x), w.project(&y));
        prop_assert!(w.contains(&px));
        prop_assert_eq!(w.project(&px), px.clone());
        prop_assert!((px - py).norm() <= (x - y).norm() + 1e-9);
    }

    #[test]
    fn redundancy_monotone_in_r(seed in 0u64..1000, n in 5usize..8) {
        let p = common::to_problem(&common::random_agents(seed, n, 2));
        let e0 = compute_epsilon(&p, 1, 0).unwrap().epsilon;
        let e1 = compute_epsilon(&p, 1, 1).unwrap().epsilon;
        prop_assert!(e0 <= e1);
    }

    #[test]
    fn radius_monotone(
        eps in 0.0f64..1.0,
        gamma in 0.5f64..2.0,
        f in 1usize..3,
        r in 0usize..2,
    ) {
        let (n, mu) = (40, 2.0);
        let base = bound_deterministic(n, f, r, mu, gamma, eps);
        prop_assume!(base.is_ok());
        let d = base.unwrap().radius;
        prop_assert!(bound_deterministic(n, f, r, mu, gamma, eps * 1.5).unwrap().radius >= d);
        if let Ok(b) = bound_deterministic(n, f + 1, r, mu, gamma, eps) { prop_assert!(b.radius >= d); }
        if let Ok(b) = bound_deterministic(n, f, r + 1, mu, gamma, eps) { prop_assert!(b.radius >= d); }
        if let Ok(b) = bound_deterministic(n, f, r, mu * 1.1, gamma, eps) { prop_assert!(b.radius >= d); }
        let g_up = (gamma * 1.05).min(mu);
        prop_assert!(bound_deterministic(n, f, r, mu, g_up, eps).unwrap().radius <= d + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn iterates_stay_in_domain(seed in any::<u64>(), f in 0usize..3, r in 0usize..3, half in 0.5f64..5.0) {
        let mut cfg = short_run(f, r, seed);
        cfg.domain = BoxDomain::hypercube(2, half).unwrap();
        cfg.stragglers = StragglerModel::RoundRobin;
        let traj = run(&cfg).unwrap();
        prop_assert_eq!(traj.rows.len(), 41);
        for row in &traj.rows {
            prop_assert!(row.x.iter().all(|v| v.abs() <= half));
        }
    }

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), f in 0usize..3, r in 0usize..3) {
        let mut cfg = short_run(f, r, seed);
        cfg.noise = NoiseModel::Gaussian { sigma: 1.0 };
        prop_assert_eq!(run(&cfg).unwrap(), run(&cfg).unwrap());
    }

    #[test]
    fn zero_sigma_is_noise_free(seed in any::<u64>(), r in 0usize..3) {
        let cfg = short_run(0, r, seed);
        let mut quiet = cfg.clone();
        quiet.noise = NoiseModel::Gaussian { sigma: 0.0 };
        prop_assert_eq!(run(&cfg).unwrap(), run(&quiet).unwrap());
    }

    #[test]
    fn stale_without_window_is_plain_sum(seed in any::<u64>(), r in 0usize..4, model in 0usize..3) {
        let mut a = short_run(0, r, seed);
        a.stragglers = match model {
            0 => StragglerModel::fixed_last(10, r),
            1 => StragglerModel::UniformRandom,
            _ => StragglerModel::RoundRobin,
        };
        a.schedule = StepSchedule::Constant { eta: 0.02 };
        let mut b = a.clone();
        b.gar = GarSpec::StaleSum { tau: 0 };
        prop_assert_eq!(run(&a).unwrap(), run(&b).unwrap());
    }
}
