use coolsim_core::baseline::{coolant_trim_respond, ct_trim_respond, BaselineController, TrimRespondParams};
use coolsim_core::control::{run_episode, Controller, RandomController};
use coolsim_core::env::{clamp_lwt, project_valves, scale_action, Environment, OBS_T_MAX, OBS_T_MIN};
use coolsim_core::psychro::KELVIN;
use coolsim_core::topology::{parse_topology, validate_topology, SystemTopology};
use coolsim_core::tower::TowerParams;
use coolsim_core::trace::{synthetic_trace, SyntheticTraceSpec};
use proptest::prelude::*;

fn env(topo: SystemTopology) -> Environment {
    let trace = synthetic_trace(topo.num_cabinets, topo.blade_groups_per_cabinet, &SyntheticTraceSpec::default(), 7);
    Environment::new(topo, trace).unwrap()
}

#[test]
fn episodes_replay_bit_for_bit() {
    let topo = SystemTopology::with_counts(1, 2, 2, 3);
    let mut a = env(topo.clone());
    let mut b = env(topo.clone());
    let la = run_episode(&mut a, &mut RandomController::new(&topo, 5), 11).unwrap();
    let lb = run_episode(&mut b, &mut RandomController::new(&topo, 5), 11).unwrap();
    assert_eq!(la, lb);
    assert_eq!(la.len(), topo.timing.steps_per_episode() + 1);
    assert!(la.last().unwrap().done);
    assert!(la[..la.len() - 1].iter().all(|o| !o.done));
}

#[test]
fn rewards_and_observations_agree_with_info() {
    let topo = SystemTopology::with_counts(2, 2, 3, 2);
    let mut e = env(topo.clone());
    let log = run_episode(&mut e, &mut RandomController::new(&topo, 3), 4).unwrap();
    for o in log.iter().skip(1) {
        assert_eq!(o.blade_obs.len(), topo.num_cabinets);
        assert_eq!(o.ct_obs.len(), topo.num_towers);
        for (i, temps) in o.info.blade_temps_c.iter().enumerate() {
            let r: f64 = -temps.iter().sum::<f64>();
            assert!((o.blade_rewards[i] - r).abs() <= 1e-9 * r.abs());
            let obs = &o.blade_obs[i];
            assert_eq!(obs.len(), 2 * topo.blade_groups_per_cabinet);
            for (j, t) in temps.iter().enumerate() {
                assert_eq!(obs[j], (t + KELVIN).clamp(OBS_T_MIN, OBS_T_MAX));
                assert_eq!(obs[topo.blade_groups_per_cabinet + j], o.info.blade_loads_w[i][j]);
            }
        }
        for (k, cells) in o.info.cell_power_w.iter().enumerate() {
            let r = -cells.iter().sum::<f64>() / 1000.0;
            assert!((o.ct_rewards[k] - r).abs() <= 1e-9 * r.abs().max(1.0));
            let obs = &o.ct_obs[k];
            assert_eq!(obs.len(), topo.cells_per_tower + topo.num_towers + 1);
            assert_eq!(*obs.last().unwrap(), o.info.t_owb);
        }
        for v in &o.info.valves {
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let lwt_lo = o.info.t_owb - KELVIN + topo.tower.min_approach;
        for s in &o.info.tower_setpoint_c {
            assert!(*s >= lwt_lo - 1e-9 && (*s <= topo.tower.lwt_max + 1e-9 || (*s - lwt_lo).abs() < 1e-9));
        }
    }
}

#[test]
fn baseline_keeps_setpoints_in_windows() {
    let topo = SystemTopology::with_counts(1, 2, 2, 3);
    let p = TrimRespondParams::default();
    let mut e = env(topo.clone());
    let mut ctrl = BaselineController::new(&topo, p).unwrap();
    let mut o = e.reset(9).unwrap();
    while !o.done {
        let cmd = ctrl.act(&o).unwrap();
        let st = ctrl.state().unwrap();
        assert!((p.coolant_min..=p.coolant_max).contains(&st.coolant_setpoint));
        let t_owb_c = o.info.t_owb - KELVIN;
        assert!(st.lwt_setpoint >= t_owb_c + topo.tower.min_approach - 1e-9);
        o = e.apply(&cmd).unwrap();
    }
}

#[test]
fn topology_round_trips_through_json() {
    for t in [SystemTopology::with_counts(1, 1, 2, 3), SystemTopology::with_counts(2, 2, 5, 3)] {
        assert!(validate_topology(&t).is_empty());
        let back = parse_topology(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.fingerprint(), t.fingerprint());
    }
    let mut bad = SystemTopology::with_counts(1, 1, 2, 3);
    bad.num_cabinets = 0;
    assert!(!validate_topology(&bad).is_empty());
    assert!(parse_topology(&bad.to_json()).is_err());
}

proptest! {
    #[test]
    fn scaled_actions_stay_in_range(raw in -5.0f64..5.0, lo in -10.0f64..10.0, w in 0.1f64..20.0) {
        let (v, clamped) = scale_action(raw, lo, lo + w);
        prop_assert!(v >= lo - 1e-12 && v <= lo + w + 1e-12);
        prop_assert_eq!(clamped, raw.abs() > 1.0);
    }

    #[test]
    fn projected_valves_on_simplex(raw in proptest::collection::vec(-2.0f64..2.0, 1..8)) {
        let v = project_valves(&raw);
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(v.iter().all(|x| *x > 0.0 && *x <= 1.0));
    }

    #[test]
    fn coolant_setpoint_stays_clamped(sp in 10.0f64..40.0, n in 0u32..20) {
        let p = TrimRespondParams::default();
        let s = coolant_trim_respond(sp, n, &p);
        prop_assert!((p.coolant_min..=p.coolant_max).contains(&s));
    }

    #[test]
    fn lwt_setpoint_stays_clamped(
        sp in 10.0f64..40.0,
        latched in any::<bool>(),
        t_owb in 5.0f64..28.0,
        coolant in 18.0f64..30.0,
    ) {
        let p = TrimRespondParams::default();
        let tower = TowerParams::default();
        let (s, _) = ct_trim_respond(sp, latched, t_owb, coolant, &p, &tower);
        prop_assert!(s >= t_owb + tower.min_approach - 1e-12);
        prop_assert!(s <= tower.lwt_max.max(t_owb + tower.min_approach) + 1e-12);
    }

    #[test]
    fn latch_has_hysteresis(coolant in 18.0f64..30.0, latched in any::<bool>()) {
        let p = TrimRespondParams::default();
        let tower = TowerParams::default();
        let (_, l) = ct_trim_respond(25.0, latched, 15.0, coolant, &p, &tower);
        if coolant < 1.05 * p.coolant_min {
            prop_assert!(l);
        } else if coolant > 1.15 * p.coolant_min {
            prop_assert!(!l);
        } else {
            prop_assert_eq!(l, latched);
        }
    }

    #[test]
    fn lwt_window_clamp(sp in 0.0f64..50.0, t_owb_c in 0.0f64..30.0) {
        let topo = SystemTopology::with_counts(1, 1, 1, 1);
        let s = clamp_lwt(sp, &topo, t_owb_c + KELVIN);
        let lo = t_owb_c + topo.tower.min_approach;
        prop_assert!(s >= lo - 1e-12);
        if lo <= topo.tower.lwt_max {
            prop_assert!(s <= topo.tower.lwt_max + 1e-12);
        }
    }
}
