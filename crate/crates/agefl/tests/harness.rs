use std::path::PathBuf;

use agefl::harness::{bound_report, parse_schedule, per_client_loss_curve, run_sweep, schedule, write_sweep_csv, SWEEP_HEADER};
use agefl::{load_config, parse_config, ExperimentConfig};
use agefl_core::age_dp::NoiseMode;
use agefl_core::scheduler::SchemeId;

fn paper() -> ExperimentConfig {
    load_config(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/paper.cfg")).unwrap()
}

fn quick(trials: usize) -> ExperimentConfig {
    let mut c = paper();
    c.trials = trials;
    c
}

#[test]
fn bundled_config_has_the_three_client_setup() {
    let c = paper();
    assert_eq!(c.clients.len(), 3);
    assert_eq!(c.t_agg, 12);
    assert_eq!(c.trials, 1000);
    assert_eq!(c.eps_bar_grid, vec![0.25, 0.5, 1.0, 2.0, 4.0]);
    assert_eq!(c.schemes, SchemeId::ALL.to_vec());
    let dists = [[0.8, 0.2, 0.0, 0.0], [0.0, 0.1, 0.5, 0.4], [0.2, 0.3, 0.5, 0.0]];
    for ((client, q), d) in c.clients.iter().zip([0.1, 0.3, 0.6]).zip(dists) {
        assert_eq!(client.n_samples, 100);
        assert_eq!(client.chain.state_values(), &[20.0, 50.0, 100.0, 200.0]);
        assert_eq!(client.chain.collection_dist(), &d);
        let p = client.chain.transition();
        assert!((p.get(0, 0) - (1.0 - q)).abs() < 1e-15 && (p.get(0, 1) - q).abs() < 1e-15);
        assert!((p.get(3, 0) - q).abs() < 1e-15);
        assert!((client.sensitivity - 1.8).abs() < 1e-12);
        assert!((client.weight - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn sweep_has_one_row_per_point_and_a_fixed_header() {
    let cfg = quick(30);
    let rows = run_sweep(&cfg).unwrap();
    assert_eq!(rows.len(), 30);
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), SWEEP_HEADER.join(","));
    assert_eq!(lines.count(), 30);
    for r in &rows {
        let v = r.outcome.as_ref().unwrap();
        assert!(v.achieved_eps_bar <= r.eps_bar + 1e-9);
        for x in [v.mean_loss_diff, v.std_err, v.mean_noise_power, v.bound_total, v.achieved_eps_bar] {
            assert!(x.is_finite());
        }
    }
    // rerunning gives the same bytes
    let mut again = Vec::new();
    write_sweep_csv(&run_sweep(&cfg).unwrap(), &mut again).unwrap();
    assert_eq!(text.as_bytes(), &again[..]);
}

#[test]
fn refusals_become_error_rows() {
    let mut cfg = quick(5);
    cfg.schedule_cap = 100;
    cfg.eps_bar_grid = vec![1.0];
    let rows = run_sweep(&cfg).unwrap();
    for r in &rows {
        match r.scheme {
            SchemeId::RandomConstant | SchemeId::RandomAdaptive => assert!(r.outcome.is_ok()),
            _ => assert!(r.outcome.as_ref().unwrap_err().contains("1728")),
        }
    }
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().contains("error: "));
}

#[test]
fn bound_report_matches_the_chosen_score() {
    let cfg = quick(60);
    let run = schedule(&cfg, SchemeId::ProposedAdaptive, 1.0).unwrap();
    let report = bound_report(&cfg, &run.choice.schedule, 1.0, NoiseMode::Adaptive).unwrap();
    assert_eq!(report.breakdown.total, run.choice.score);
    let b = &report.breakdown;
    assert_eq!(b.total, b.gen_term + b.baseline_term + b.noise_term);
}

#[test]
fn freshest_schedule_reports_full_aging_factor() {
    let cfg = quick(20);
    let s = parse_schedule("12,12,12", 12).unwrap();
    let r = bound_report(&cfg, &s, 1.0, NoiseMode::Adaptive).unwrap();
    for e in &r.plan.entries {
        assert_eq!(e.delta, 1.0);
        assert!((e.eta - 1.8).abs() < 1e-12);
    }
    assert!(parse_schedule("12,x,3", 12).is_err());
    assert!(parse_schedule("13,1,1", 12).is_err());
}

#[test]
fn curve_covers_every_collection_time() {
    let cfg = quick(50);
    let c = per_client_loss_curve(&cfg, 2, 1.0).unwrap();
    assert_eq!(c.iter().map(|p| p.t_c).collect::<Vec<_>>(), (1..=12).collect::<Vec<_>>());
    assert!(per_client_loss_curve(&cfg, 0, 1.0).is_err());
    assert!(per_client_loss_curve(&cfg, 4, 1.0).is_err());
}

#[test]
fn frozen_client_gives_a_flat_curve() {
    let text = r#"
seed = 3
t_agg = 6
trials = 400
eps_bar_grid = [1.0]

[[clients]]
q = 0.0
collection_dist = [0.25, 0.25, 0.25, 0.25]
n_samples = 50
state_values = [20, 50, 100, 200]

[[clients]]
q = 0.3
collection_dist = [0.25, 0.25, 0.25, 0.25]
n_samples = 50
state_values = [20, 50, 100, 200]
"#;
    let cfg = parse_config(text).unwrap();
    let c = per_client_loss_curve(&cfg, 1, 1.0).unwrap();
    // a frozen chain never forgets, so aging buys nothing and data never goes stale
    for p in &c[1..] {
        let d = (p.summary.mean - c[0].summary.mean).abs();
        assert!(d <= 3.0 * (p.summary.std_err.powi(2) + c[0].summary.std_err.powi(2)).sqrt(), "{d}");
    }
}

#[test]
fn paper_sweep_orderings() {
    let cfg = paper();
    let rows = run_sweep(&cfg).unwrap();
    let get = |s: SchemeId, e: f64| rows.iter().find(|r| r.scheme == s && r.eps_bar == e).unwrap().outcome.clone().unwrap();
    let within = |a: &agefl::harness::RowValues, b: &agefl::harness::RowValues| {
        a.mean_loss_diff <= b.mean_loss_diff + 2.0 * (a.std_err.powi(2) + b.std_err.powi(2)).sqrt()
    };
    for &e in &cfg.eps_bar_grid {
        assert!(within(&get(SchemeId::ProposedAdaptive, e), &get(SchemeId::RandomConstant, e)), "eps {e}");
        assert!(within(&get(SchemeId::ProposedAdaptive, e), &get(SchemeId::ProposedConstant, e)), "eps {e}");
    }
    for e in [0.5, 1.0, 2.0] {
        let best = get(SchemeId::OptimalAdaptive, e);
        for s in SchemeId::ALL {
            assert!(within(&best, &get(s, e)), "eps {e} vs {s}");
        }
    }
}
