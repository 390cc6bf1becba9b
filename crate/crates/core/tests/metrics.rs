use coolsim_core::control::{run_episode, RandomController};
use coolsim_core::env::Environment;
use coolsim_core::metrics::{carbon_footprint, d_blade, spearman, summarize, Intensity, MetricConfig};
use coolsim_core::topology::SystemTopology;
use coolsim_core::trace::{synthetic_trace, SyntheticTraceSpec};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| proptest::collection::vec(proptest::collection::vec(0.0f64..60.0, c), r))
}

proptest! {
    #[test]
    fn d_blade_bounded_and_permutation_invariant(m in matrix(), seed in any::<u64>()) {
        let cfg = MetricConfig::default();
        let d = d_blade(&m, &cfg).unwrap();
        prop_assert!((0.0..=100.0).contains(&d));
        let cols = m[0].len();
        let shift = (seed as usize) % cols;
        let permuted: Vec<Vec<f64>> = m.iter().map(|r| {
            let mut r = r.clone();
            r.rotate_left(shift);
            r.reverse();
            r
        }).collect();
        prop_assert_eq!(d, d_blade(&permuted, &cfg).unwrap());
        let inside = m.iter().flatten().filter(|t| **t > 20.0 && **t < 40.0).count();
        prop_assert!((d - 100.0 * inside as f64 / (m.len() * cols) as f64).abs() < 1e-9);
    }

    #[test]
    fn carbon_linear_and_additive(
        a in proptest::collection::vec(0.0f64..1e6, 2..50),
        k in 0.0f64..5.0,
        c in 0.0f64..1.0,
    ) {
        let b: Vec<f64> = a.iter().rev().cloned().collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let scaled: Vec<f64> = a.iter().map(|x| k * x).collect();
        let f = |p: &[f64]| carbon_footprint(p, Intensity::Constant(c), 60.0).unwrap();
        let tol = 1e-9 * (1.0 + f(&sum).abs());
        prop_assert!((f(&sum) - f(&a) - f(&b)).abs() <= tol);
        prop_assert!((f(&scaled) - k * f(&a)).abs() <= 1e-9 * (1.0 + f(&scaled).abs()));
        let series = vec![c; a.len()];
        let g = carbon_footprint(&a, Intensity::Series(&series), 60.0).unwrap();
        prop_assert!((g - f(&a)).abs() <= 1e-12 * (1.0 + g.abs()));
    }

    #[test]
    fn spearman_invariant_under_monotone_maps(x in proptest::collection::vec(-10.0f64..10.0, 3..30)) {
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let r = spearman(&x, &y).unwrap();
        if x.iter().any(|v| *v != x[0]) {
            prop_assert!((r - 1.0).abs() < 1e-12);
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            prop_assert!((spearman(&x, &neg).unwrap() + 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_power_carbon_closed_form() {
    let p = vec![50_000.0; 201];
    let t = carbon_footprint(&p, Intensity::Constant(0.4), 60.0).unwrap();
    // 50 kW for 200 minutes at 0.4 kg/kWh.
    let expected = 50.0 * (200.0 / 60.0) * 0.4 / 1000.0;
    assert!((t - expected).abs() < 1e-12);
}

#[test]
fn summary_matches_streaming_oracle() {
    let topo = SystemTopology::with_counts(1, 2, 2, 3);
    let trace = synthetic_trace(2, 3, &SyntheticTraceSpec::default(), 7);
    let mut env = Environment::new(topo.clone(), trace).unwrap();
    let cfg = MetricConfig::default();
    let logs: Vec<_> = (0..2)
        .map(|e| run_episode(&mut env, &mut RandomController::new(&topo, e), 100 + e).unwrap())
        .collect();
    let s = summarize(&logs, &cfg).unwrap();

    let (mut n, mut inside, mut cells, mut ct_kw, mut it_kw) = (0usize, 0usize, 0usize, 0.0, 0.0);
    let (mut cab_total, mut tower_total) = (0.0, 0.0);
    for log in &logs {
        for o in log.iter().filter(|o| o.info.step > 0) {
            n += 1;
            for t in o.info.blade_temps_c.iter().flatten() {
                cells += 1;
                if *t > cfg.lower_t && *t < cfg.upper_t {
                    inside += 1;
                }
            }
            ct_kw += o.info.cell_power_w.iter().flatten().sum::<f64>() / 1000.0;
            it_kw += o.info.cabinet_heat_w.iter().sum::<f64>() / 1000.0;
            cab_total += o.blade_rewards.iter().sum::<f64>() / o.blade_rewards.len() as f64;
            tower_total += o.ct_rewards.iter().sum::<f64>() / o.ct_rewards.len() as f64;
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + b.abs());
    assert_eq!(s.steps, n);
    assert_eq!(s.episodes, 2);
    assert!(close(s.d_blade_avg, 100.0 * inside as f64 / cells as f64));
    assert!(close(s.ct_avg_power_kw, ct_kw / n as f64));
    assert!(close(s.it_avg_cooling_power_kw, it_kw / n as f64));
    assert!(close(s.avg_episode_reward_per_cabinet, cab_total / 2.0));
    assert!(close(s.avg_episode_reward_per_tower, tower_total / 2.0));
    assert!(s.carbon_total_cooling_t >= s.carbon_tower_t);
}
