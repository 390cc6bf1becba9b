use coolsim_core::control::run_episode;
use coolsim_core::env::Environment;
use coolsim_core::trace::{synthetic_trace, SyntheticTraceSpec};
use coolsim_core::SystemTopology;
use coolsim_rl::ppo::{PpoConfig, RolloutBuffer};
use coolsim_rl::train::{
    decide, read_log_csv, route, train_centralized, write_log_csv, Agents, Checkpoint, PolicyController,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn env(towers: usize, cabinets: usize, b: usize) -> Environment {
    let topo = SystemTopology::with_counts(towers, 1, cabinets, b);
    let trace = synthetic_trace(cabinets, b, &SyntheticTraceSpec::default(), 3);
    Environment::new(topo, trace).unwrap()
}

fn quick(total: usize, interval: usize) -> PpoConfig {
    let mut c = PpoConfig::default();
    c.total_timesteps = total;
    c.update_interval = interval;
    c.blade.k_epochs = 2;
    c.tower.k_epochs = 2;
    c
}

#[test]
fn one_step_routes_one_entry_per_unit() {
    let mut e = env(2, 3, 2);
    let topo = e.topology().clone();
    let cfg = PpoConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let agents = Agents::new(&topo, &cfg, &mut rng);
    let first = e.reset(5).unwrap();
    let dec = decide(&agents, &first, 0.5, &mut rng).unwrap();
    let (cabs, towers) = dec.command();
    let next = e.step(&cabs, &towers).unwrap();
    let mut blade: Vec<RolloutBuffer> = (0..3).map(RolloutBuffer::new).collect();
    let mut tower: Vec<RolloutBuffer> = (0..2).map(RolloutBuffer::new).collect();
    route(&dec, &next, &cfg, &mut blade, &mut tower);
    assert!(blade.iter().all(|b| b.len() == 1 && b.consistent()));
    assert!(tower.iter().all(|b| b.len() == 1 && b.consistent()));
    for (c, b) in blade.iter().enumerate() {
        assert_eq!(b.obs[0], agents.blade_scaler.apply(&first.blade_obs[c]).unwrap());
        assert_eq!(b.rewards[0], next.blade_rewards[c] * cfg.blade.reward_scale);
    }
    for (t, b) in tower.iter().enumerate() {
        assert_eq!(b.obs[0], agents.tower_scaler.apply(&first.ct_obs[t]).unwrap());
    }
}

#[test]
fn update_records_count_and_sample_sizes() {
    let mut e = env(1, 3, 2);
    let out = train_centralized(&mut e, &quick(1000, 300), 4, |_, _| Ok(())).unwrap();
    let updates: Vec<_> = out.log.iter().filter(|r| r.is_update()).collect();
    assert_eq!(updates.len(), 4);
    assert_eq!(updates.iter().map(|r| r.blade_samples.unwrap()).collect::<Vec<_>>(), vec![900, 900, 900, 300]);
    assert_eq!(updates.iter().map(|r| r.ct_samples.unwrap()).collect::<Vec<_>>(), vec![300, 300, 300, 100]);
    // 1000 steps hold 5 full 200-step episodes.
    assert_eq!(out.log.iter().filter(|r| r.is_episode()).count(), 5);
    assert_eq!(out.env_steps, 1000);
}

#[test]
fn identical_seeds_give_identical_training() {
    let run = || {
        let mut e = env(1, 2, 3);
        train_centralized(&mut e, &quick(450, 200), 9, |_, _| Ok(())).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(write_log_csv(&a.log), write_log_csv(&b.log));
    assert_eq!(a.agents, b.agents);
    let mut e = env(1, 2, 3);
    let c = train_centralized(&mut e, &quick(450, 200), 10, |_, _| Ok(())).unwrap();
    assert_ne!(a.agents, c.agents);
}

#[test]
fn log_and_checkpoint_round_trip() {
    let mut e = env(1, 2, 3);
    let cfg = quick(250, 128);
    let out = train_centralized(&mut e, &cfg, 1, |_, _| Ok(())).unwrap();
    let csv = write_log_csv(&out.log);
    assert!(csv.starts_with("kind,"));
    assert_eq!(read_log_csv(&csv).unwrap(), out.log);
    let topo = e.topology().clone();
    let ck = out.checkpoint(&topo, &cfg, 1);
    let back = Checkpoint::from_json(&ck.to_json()).unwrap();
    assert_eq!(back, ck);
    back.check(&topo).unwrap();
    let mut p1 = PolicyController::modal(back.agents.clone());
    let mut p2 = PolicyController::modal(out.agents.clone());
    let l1 = run_episode(&mut e, &mut p1, 2).unwrap();
    let l2 = run_episode(&mut e, &mut p2, 2).unwrap();
    assert_eq!(l1, l2);
}

#[test]
fn checkpoint_shape_mismatch_is_reported() {
    let mut e = env(1, 2, 3);
    let cfg = quick(10, 10);
    let out = train_centralized(&mut e, &cfg, 1, |_, _| Ok(())).unwrap();
    let ck = out.checkpoint(e.topology(), &cfg, 1);
    let other = SystemTopology::with_counts(1, 1, 2, 4);
    let err = ck.check(&other).unwrap_err().to_string();
    assert!(err.contains("blade groups"), "{err}");
    assert!(Checkpoint::from_json("{\"version\": 1}").is_err());
}

#[test]
fn std_decays_once_per_finished_episode() {
    let mut e = env(1, 1, 2);
    let out = train_centralized(&mut e, &quick(600, 600), 2, |_, _| Ok(())).unwrap();
    assert!((out.action_std - (0.6 - 3.0 * 5e-4)).abs() < 1e-12);
}
