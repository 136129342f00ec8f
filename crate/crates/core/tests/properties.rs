use agefl_core::age_dp::{age_epsilon, laplace_inverse_cdf, plan_from_deltas, required_classic_eps, NoiseMode, PrivacyRequirement};
use agefl_core::bound::{evaluate_bound, f_se, BoundOptions, FseMode, SubExpParams};
use agefl_core::markov::cyclic_chain;
use agefl_core::scheduler::argmin_first;
use agefl_core::sim::BaselineStats;
use agefl_core::{ClientSpec, MarkovChain, Matrix, Schedule};
use proptest::prelude::*;

fn wh() -> Vec<f64> {
    vec![20.0, 50.0, 100.0, 200.0]
}

fn dist4() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..1.0, 4).prop_filter_map("mass", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-3).then(|| v.iter().map(|x| x / s).collect())
    })
}

fn stochastic4() -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(dist4(), 4).prop_map(|rows| Matrix::from_rows(&rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn privacy_roundtrip(eps_bar in 1e-3f64..5.0, delta in 1e-6f64..=1.0) {
        let eps_c = required_classic_eps(eps_bar, delta).unwrap();
        prop_assert!(eps_c >= eps_bar - 1e-12);
        let back = age_epsilon(eps_c, delta).unwrap();
        prop_assert!((back - eps_bar).abs() <= 1e-12 * eps_bar.max(1.0));
    }

    #[test]
    fn aging_never_increases_epsilon(eps_c in 0.0f64..20.0, delta in 0.0f64..=1.0) {
        prop_assert!(age_epsilon(eps_c, delta).unwrap() <= eps_c + 1e-12);
    }

    #[test]
    fn aging_is_monotone_in_delta(eps_c in 0.0f64..10.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(age_epsilon(eps_c, lo).unwrap() <= age_epsilon(eps_c, hi).unwrap());
    }

    #[test]
    fn laplace_quantile_is_odd_and_monotone(u in 1e-9f64..0.5, eta in 1e-3f64..100.0) {
        let a = laplace_inverse_cdf(u, eta);
        let b = laplace_inverse_cdf(1.0 - u, eta);
        prop_assert!((a + b).abs() <= 1e-9 * eta.max(1.0) * a.abs().max(1.0));
        prop_assert!(a <= laplace_inverse_cdf(u + 1e-3, eta));
    }

    #[test]
    fn marginals_stay_distributions(p in stochastic4(), start in dist4(), t in 0u32..40) {
        let chain = MarkovChain::new(wh(), p, start).unwrap();
        let mu = chain.marginal_at(t);
        prop_assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(mu.iter().all(|&x| x >= -1e-15));
    }

    #[test]
    fn delta_in_unit_interval_and_mi_bounded(p in stochastic4(), start in dist4(), t in 0u32..20) {
        let chain = MarkovChain::new(wh(), p, start).unwrap();
        let d = chain.delta_exact(t).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&d));
        let s = chain.delta_spectral_bound(t).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        let mi = chain.mutual_information_age(t);
        prop_assert!(mi >= -1e-12 && mi <= chain.collection_entropy() + 1e-12);
    }

    #[test]
    fn mi_non_increasing_in_gap(p in stochastic4(), start in dist4()) {
        let chain = MarkovChain::new(wh(), p, start).unwrap();
        let mut prev = chain.mutual_information_age(0);
        for g in 1..24 {
            let cur = chain.mutual_information_age(g);
            prop_assert!(cur <= prev + 1e-12, "gap {} {} > {}", g, cur, prev);
            prev = cur;
        }
    }

    // cyclic chains are circulant, hence normal, so the spectral estimate
    // must dominate the exact value
    #[test]
    fn spectral_dominates_exact_for_cyclic_chains(q in 0.01f64..0.99, t in 1u32..32) {
        let chain = cyclic_chain(4, q, wh()).unwrap();
        prop_assert!(chain.delta_spectral_bound(t).unwrap() >= chain.delta_exact(t).unwrap() - 1e-9);
    }

    #[test]
    fn f_se_monotone(nu in 1e-3f64..50.0, a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let p = SubExpParams::new(nu, nu).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for mode in [FseMode::Paper, FseMode::Canonical] {
            prop_assert!(f_se(lo, p, mode).unwrap() <= f_se(hi, p, mode).unwrap());
        }
    }

    #[test]
    fn f_se_grows_with_noise(mi in 0.0f64..5.0, a in 1e-3f64..50.0, b in 1e-3f64..50.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for mode in [FseMode::Paper, FseMode::Canonical] {
            let x = f_se(mi, SubExpParams::new(lo, lo).unwrap(), mode).unwrap();
            let y = f_se(mi, SubExpParams::new(hi, hi).unwrap(), mode).unwrap();
            prop_assert!(x <= y * (1.0 + 1e-12));
        }
    }

    #[test]
    fn bound_symmetric_under_client_permutation(
        qs in proptest::collection::vec(0.05f64..0.95, 3),
        t_c in proptest::collection::vec(1u32..=12, 3),
        eps in 0.1f64..4.0,
    ) {
        let chains: Vec<(MarkovChain, usize)> = qs.iter().map(|&q| (cyclic_chain(4, q, wh()).unwrap(), 100)).collect();
        let clients = ClientSpec::from_chains(chains).unwrap();
        let s = Schedule::new(t_c.clone(), 12).unwrap();
        let deltas: Vec<f64> = clients.iter().zip(s.gaps()).map(|(c, g)| c.chain.delta_spectral_bound(g).unwrap()).collect();
        let req = PrivacyRequirement::new(eps).unwrap();
        let base = BaselineStats { e_pop_risk_w: 3.0, e_emp_loss_wstar: 1.0, e_pop_risk_wstar: 2.0 };
        let plan = plan_from_deltas(&clients, &deltas, req, NoiseMode::Adaptive).unwrap();
        let a = evaluate_bound(&clients, &s, &plan, &base, BoundOptions::default()).unwrap().total;

        let perm = [2usize, 0, 1];
        let pc: Vec<ClientSpec> = perm.iter().map(|&i| clients[i].clone()).collect();
        let ps = Schedule::new(perm.iter().map(|&i| t_c[i]).collect(), 12).unwrap();
        let pd: Vec<f64> = perm.iter().map(|&i| deltas[i]).collect();
        let pplan = plan_from_deltas(&pc, &pd, req, NoiseMode::Adaptive).unwrap();
        let b = evaluate_bound(&pc, &ps, &pplan, &base, BoundOptions::default()).unwrap().total;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn older_data_never_raises_gen_term_at_fixed_noise(q in 0.05f64..0.95, t in 2u32..=12) {
        let clients = ClientSpec::from_chains(vec![(cyclic_chain(4, q, wh()).unwrap().with_collection_dist(vec![0.8, 0.2, 0.0, 0.0]).unwrap(), 100)]).unwrap();
        let base = BaselineStats { e_pop_risk_w: 0.0, e_emp_loss_wstar: 0.0, e_pop_risk_wstar: 0.0 };
        let gen = |tc: u32| {
            let s = Schedule::new(vec![tc], 12).unwrap();
            let plan = agefl_core::age_dp::NoisePlan::fixed_scale(&clients, &[1.0], 1.8).unwrap();
            evaluate_bound(&clients, &s, &plan, &base, BoundOptions::default()).unwrap().gen_term
        };
        prop_assert!(gen(t - 1) <= gen(t) + 1e-12);
    }

    #[test]
    fn argmin_invariant_under_shift(scores in proptest::collection::vec(-1e3f64..1e3, 1..60), c in -1e3f64..1e3) {
        let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
        let a = argmin_first(&scores).unwrap();
        let b = argmin_first(&shifted).unwrap();
        // rounding may merge near-ties; the pick must still be a minimizer
        prop_assert!((shifted[a] - shifted[b]).abs() <= 1e-9);
        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(scores[a], min);
    }
}
