use coolsim_core::control::run_episode;
use coolsim_core::env::Environment;
use coolsim_core::trace::{synthetic_trace, SyntheticTraceSpec};
use coolsim_core::SystemTopology;
use coolsim_rl::distill::*;
use coolsim_rl::ppo::PpoConfig;
use coolsim_rl::train::Agents;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn point(obs: Vec<f64>, action: Vec<f64>, weight: f64) -> ExperiencePoint {
    ExperiencePoint {
        obs,
        action,
        weight,
        flagged: false,
    }
}

fn within_3_sigma(count: usize, n: usize, p: f64) -> bool {
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - n as f64 * p).abs() <= 3.0 * sigma
}

#[test]
fn equal_weights_resample_uniformly() {
    let d: Vec<_> = (0..4).map(|i| point(vec![i as f64], vec![0.0], 2.5)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let r = resample(&d, &mut rng, n).unwrap();
    for i in 0..4 {
        let c = r.iter().filter(|p| p.obs[0] == i as f64).count();
        assert!(within_3_sigma(c, n, 0.25), "{i}: {c}");
    }
}

#[test]
fn weights_one_three_give_three_quarters() {
    let d = vec![point(vec![0.0], vec![0.0], 1.0), point(vec![1.0], vec![0.0], 3.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 100_000;
    let r = resample(&d, &mut rng, n).unwrap();
    let c = r.iter().filter(|p| p.obs[0] == 1.0).count();
    assert!(within_3_sigma(c, n, 0.75), "{c}");
}

#[test]
fn degenerate_mass_and_zero_weights() {
    let d = vec![
        point(vec![0.0], vec![0.0], 0.0),
        point(vec![1.0], vec![0.0], 1.0),
        point(vec![2.0], vec![0.0], 0.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    assert!(resample(&d, &mut rng, 1000).unwrap().iter().all(|p| p.obs[0] == 1.0));
    let zero: Vec<_> = d.iter().map(|p| point(p.obs.clone(), vec![0.0], 0.0)).collect();
    assert!(resample(&zero, &mut rng, 10).is_err());
}

/// Exhaustive scan of every midpoint threshold on one feature.
fn brute_force_gini_split(x: &[f64], y: &[usize]) -> f64 {
    let mut xs: Vec<f64> = x.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let gini = |idx: &[usize]| {
        let n = idx.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let k = 1 + y.iter().max().unwrap();
        let mut c = vec![0.0; k];
        idx.iter().for_each(|&i| c[y[i]] += 1.0);
        n - c.iter().map(|v| v * v).sum::<f64>() / n
    };
    let mut best = (f64::INFINITY, 0.0);
    for w in xs.windows(2) {
        let t = 0.5 * (w[0] + w[1]);
        let l: Vec<usize> = (0..x.len()).filter(|&i| x[i] <= t).collect();
        let r: Vec<usize> = (0..x.len()).filter(|&i| x[i] > t).collect();
        let imp = gini(&l) + gini(&r);
        if imp < best.0 {
            best = (imp, t);
        }
    }
    best.1
}

#[test]
fn separable_data_splits_between_classes() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
    let y: Vec<usize> = xs.iter().map(|&x| (x > 0.5) as usize).collect();
    let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
    let t = fit_classification_tree(&x, &y, &vec![1.0; 200], 2, &TreeParams::default()).unwrap();
    let max_left = xs.iter().cloned().filter(|v| *v <= 0.5).fold(f64::MIN, f64::max);
    let min_right = xs.iter().cloned().filter(|v| *v > 0.5).fold(f64::MAX, f64::min);
    match &t.root {
        TreeNode::Internal { threshold, left, right, .. } => {
            assert!(*threshold > max_left && *threshold <= min_right);
            assert_eq!(**left, TreeNode::Leaf { value: vec![0.0] });
            assert_eq!(**right, TreeNode::Leaf { value: vec![1.0] });
            assert_eq!(*threshold, brute_force_gini_split(&xs, &y));
        }
        _ => panic!("expected one split"),
    }
}

#[test]
fn piecewise_constant_target_recovered_at_depth_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<f64> = (0..300).map(|_| rng.random_range(-2.0..2.0)).collect();
    let f = |x: f64| if x <= 0.3 { vec![-1.5, 2.0] } else { vec![4.0, 0.5] };
    let x: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v, rng.random::<f64>()]).collect();
    let y: Vec<Vec<f64>> = xs.iter().map(|&v| f(v)).collect();
    let t = fit_regression_tree(&x, &y, &vec![1.0; 300], false, &TreeParams { max_depth: 1, min_leaf: 1 }).unwrap();
    assert_eq!(t.root.complexity().depth, 1);
    for (xi, yi) in x.iter().zip(&y) {
        assert_eq!(tree_predict(&t, xi).unwrap(), yi.as_slice());
    }
}

#[test]
fn valve_leaves_lie_on_the_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let y: Vec<Vec<f64>> = (0..400)
        .map(|_| {
            let v: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = v.iter().sum();
            v.iter().map(|a| a / s).collect()
        })
        .collect();
    let t = fit_regression_tree(&x, &y, &vec![1.0; 400], true, &TreeParams { max_depth: 6, min_leaf: 3 }).unwrap();
    fn check(n: &TreeNode) {
        match n {
            TreeNode::Leaf { value } => assert!((value.iter().sum::<f64>() - 1.0).abs() <= 1e-9),
            TreeNode::Internal { left, right, .. } => {
                check(left);
                check(right);
            }
        }
    }
    check(&t.root);
}

/// Piecewise-linear oracle on the unit square.
fn oracle(x: &[f64]) -> f64 {
    if x[0] < 0.4 {
        2.0 * x[0] - x[1]
    } else if x[1] < 0.6 {
        1.5 - 0.5 * x[0] + 2.0 * x[1]
    } else {
        3.0 * x[1] - x[0]
    }
}

#[test]
fn piecewise_linear_oracle_is_fitted_at_depth_eight() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let train: Vec<Vec<f64>> = (0..5000).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let y: Vec<Vec<f64>> = train.iter().map(|x| vec![oracle(x)]).collect();
    let t = fit_regression_tree(&train, &y, &vec![1.0; 5000], false, &TreeParams { max_depth: 8, min_leaf: 5 }).unwrap();
    assert!(t.root.complexity().depth <= 8);
    let test: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let pred: Vec<Vec<f64>> = test.iter().map(|x| tree_predict(&t, x).unwrap().to_vec()).collect();
    let truth: Vec<Vec<f64>> = test.iter().map(|x| vec![oracle(x)]).collect();
    let (r2, _) = r2_mae(&pred, &truth).unwrap();
    assert!(r2[0] >= 0.95, "{}", r2[0]);
}

/// A right-leaning comb: node `k` tests `x0 <= k + 0.5`, its left leaf is `k`.
fn comb(depth: usize) -> Tree {
    let mut node = TreeNode::Leaf { value: vec![depth as f64] };
    for k in (0..depth).rev() {
        node = TreeNode::Internal {
            feature: 0,
            threshold: k as f64 + 0.5,
            left: Box::new(TreeNode::Leaf { value: vec![k as f64] }),
            right: Box::new(node),
        };
    }
    Tree {
        kind: TreeKind::Regression,
        features: 1,
        outputs: 1,
        simplex: false,
        root: node,
    }
}

#[test]
fn depth_seventeen_descent_matches_golden_trace() {
    let t = comb(17);
    assert_eq!(t.root.complexity(), Complexity { nodes: 35, leaves: 18, depth: 17 });
    // x = 7: right at 0.5 .. 6.5, left at 7.5.
    let path = descent_path(&t, &[7.0]).unwrap();
    let golden: Vec<(usize, f64, bool)> = (0..8).map(|k| (0, k as f64 + 0.5, k == 7)).collect();
    assert_eq!(path, golden);
    assert_eq!(tree_predict(&t, &[7.0]).unwrap(), &[7.0]);
    assert_eq!(tree_predict(&t, &[7.5]).unwrap(), &[7.0]);
    assert_eq!(tree_predict(&t, &[99.0]).unwrap(), &[17.0]);
    assert_eq!(descent_path(&t, &[99.0]).unwrap().len(), 17);
}

#[test]
fn tree_json_and_outline() {
    let t = comb(3);
    let json = serde_json::to_string(&t).unwrap();
    let back: Tree = serde_json::from_str(&json).unwrap();
    assert_eq!(back, t);
    let text = outline(&t, &["temp".to_string()]);
    assert!(text.starts_with("temp <= 0.500000\n|   -> [0.0000]\n"));
    assert_eq!(text.lines().count(), 3 * 2 + 4);
}

#[test]
fn reporter_r2_matches_single_pass_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let truth: Vec<Vec<f64>> = (0..500).map(|_| vec![rng.random_range(-3.0..3.0), rng.random::<f64>()]).collect();
    let pred: Vec<Vec<f64>> = truth.iter().map(|t| t.iter().map(|v| v + 0.3 * rng.random::<f64>()).collect()).collect();
    let (r2, mae) = r2_mae(&pred, &truth).unwrap();
    for j in 0..2 {
        // Single pass: sums of t, t^2 and squared residuals.
        let (mut s, mut s2, mut res, mut abs) = (0.0, 0.0, 0.0, 0.0);
        for (p, t) in pred.iter().zip(&truth) {
            s += t[j];
            s2 += t[j] * t[j];
            res += (p[j] - t[j]).powi(2);
            abs += (p[j] - t[j]).abs();
        }
        let n = truth.len() as f64;
        let ss_tot = s2 - s * s / n;
        assert!((r2[j] - (1.0 - res / ss_tot)).abs() < 1e-9);
        assert!((mae[j] - abs / n).abs() < 1e-12);
    }
    let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64]).collect();
    let y: Vec<Vec<f64>> = (0..50).map(|i| vec![(i % 7) as f64]).collect();
    let leaf = fit_regression_tree(&x, &y, &vec![1.0; 50], false, &TreeParams { max_depth: 0, min_leaf: 1 }).unwrap();
    let p: Vec<Vec<f64>> = x.iter().map(|v| tree_predict(&leaf, v).unwrap().to_vec()).collect();
    assert!(r2_mae(&p, &y).unwrap().0[0].abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn deeper_trees_never_raise_training_impurity(seed in any::<u64>(), classify in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 120;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
        let labels: Vec<usize> = x.iter().map(|r| ((r[0] + 0.3 * r[1] + 0.2 * rng.random::<f64>()) * 3.0) as usize % 3).collect();
        let y: Vec<Vec<f64>> = if classify {
            labels.iter().map(|&c| vec![c as f64]).collect()
        } else {
            x.iter().map(|r| vec![(5.0 * r[0]).sin() + r[2] * r[1]]).collect()
        };
        let mut last = f64::INFINITY;
        for depth in 0..8 {
            let p = TreeParams { max_depth: depth, min_leaf: 2 };
            let t = if classify {
                fit_classification_tree(&x, &labels, &w, 3, &p).unwrap()
            } else {
                fit_regression_tree(&x, &y, &w, false, &p).unwrap()
            };
            let imp = training_impurity(&t, &x, &y, &w).unwrap();
            prop_assert!(imp <= last + 1e-9);
            last = imp;
        }
    }

    #[test]
    fn resampled_points_come_from_the_source(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d: Vec<_> = (0..n).map(|i| point(vec![i as f64], vec![0.0], rng.random_range(0.0..2.0))).collect();
        prop_assume!(d.iter().any(|p| p.weight > 0.0));
        for p in resample(&d, &mut rng, 200).unwrap() {
            prop_assert!(d.contains(&p));
            prop_assert!(p.weight > 0.0);
        }
    }
}

fn small_env() -> Environment {
    let topo = SystemTopology::with_counts(1, 1, 2, 3);
    let trace = synthetic_trace(2, 3, &SyntheticTraceSpec::default(), 3);
    Environment::new(topo, trace).unwrap()
}

#[test]
fn collection_counts_determinism_and_weights() {
    let mut env = small_env();
    let topo = env.topology().clone();
    let agents = Agents::new(&topo, &PpoConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
    let d = collect_experience(&agents, &mut env, 1, 0.1, 5).unwrap();
    assert_eq!(d.blade.len(), 400);
    assert_eq!(d.tower.len(), 200);
    assert!(d.blade.iter().chain(&d.tower).all(|p| p.weight >= 0.0 && p.weight.is_finite()));
    assert_eq!(collect_experience(&agents, &mut env, 1, 0.1, 5).unwrap(), d);
}

#[test]
fn distilled_policy_runs_and_reports() {
    let mut env = small_env();
    let topo = env.topology().clone();
    let agents = Agents::new(&topo, &PpoConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
    let d = collect_experience(&agents, &mut env, 2, 0.1, 5).unwrap();
    let cfg = DistillConfig::default();
    let p = fit_distilled(&d, &topo, &cfg, 3).unwrap();
    assert_eq!(fit_distilled(&d, &topo, &cfg, 3).unwrap(), p);
    assert_eq!(p.cdu.outputs, 2);
    assert_eq!(p.valves.outputs, 3);
    assert_eq!(p.tower.kind, TreeKind::Classification);
    let rep = fidelity_report(&p, Weighting::Viper, &d, &mut env, 1, 11).unwrap();
    assert_eq!(rep.cdu.r2.len(), 2);
    assert!(rep.cdu.r2.iter().chain(&rep.valves.r2).all(|r| *r <= 1.0));
    assert_eq!(rep.cdu.complexity, p.cdu.root.complexity());
    let mut ctrl = TreeController::new(p, "viper");
    let log = run_episode(&mut env, &mut ctrl, 1).unwrap();
    assert_eq!(log.len(), 201);
}
