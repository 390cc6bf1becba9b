use coolsim_rl::nn::Adam;
use coolsim_rl::policy::{Critic, DiscreteActor, MultiHeadActor};
use coolsim_rl::ppo::{gradient_agreement, ppo_update, AgentHyper, Batch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hyper() -> AgentHyper {
    AgentHyper {
        ent_coef: 0.05,
        vf_coef: 0.7,
        actor_hidden: vec![6, 5],
        critic_hidden: vec![5, 4],
        ..AgentHyper::blade()
    }
}

fn blade_batch(actor: &MultiHeadActor, rng: &mut ChaCha8Rng, n: usize, obs_dim: usize, std: f64) -> Batch {
    let mut b = Batch::default();
    for _ in 0..n {
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let s = actor.sample(&obs, std, rng).unwrap();
        b.actions.push(s.action());
        // Shift stored log-probabilities so ratios straddle the clip band.
        b.logprobs.push(s.logprob + rng.random_range(-0.4..0.4));
        b.advantages.push(rng.random_range(-2.0..2.0));
        b.returns.push(rng.random_range(-1.0..1.0));
        b.obs.push(obs);
        b.units.push(0);
    }
    b
}

#[test]
fn multi_head_loss_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let h = hyper();
    let valves = 3;
    let actor = MultiHeadActor::new(2 * valves, &h.actor_hidden, valves, &mut rng);
    let critic = Critic::new(2 * valves, &h.critic_hidden, &mut rng);
    let mut actor = actor;
    // Larger head weights so both heads carry non-trivial gradients.
    actor.params.iter_mut().for_each(|p| *p *= 3.0);
    let batch = blade_batch(&actor, &mut rng, 24, 2 * valves, 0.4);
    let (ok, total) = gradient_agreement(&actor, &critic, &batch, &h, 0.4, 1e-6, 1e-3, 1e-6);
    assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total}");
}

#[test]
fn discrete_loss_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = hyper();
    let actor = DiscreteActor::new(5, &h.actor_hidden, 3, &mut rng);
    let critic = Critic::new(5, &h.critic_hidden, &mut rng);
    let mut b = Batch::default();
    for _ in 0..24 {
        let obs: Vec<f64> = (0..5).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (a, lp) = actor.sample(&obs, &mut rng).unwrap();
        b.actions.push(vec![a as f64]);
        b.logprobs.push(lp + rng.random_range(-0.4..0.4));
        b.advantages.push(rng.random_range(-2.0..2.0));
        b.returns.push(rng.random_range(-1.0..1.0));
        b.obs.push(obs);
        b.units.push(0);
    }
    let (ok, total) = gradient_agreement(&actor, &critic, &b, &h, 0.0, 1e-6, 1e-3, 1e-6);
    assert!(ok as f64 >= 0.95 * total as f64, "{ok}/{total}");
}

#[test]
fn update_raises_probability_of_advantaged_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = AgentHyper {
        k_epochs: 10,
        ent_coef: 0.0,
        ..hyper()
    };
    let mut actor = DiscreteActor::new(2, &h.actor_hidden, 3, &mut rng);
    let mut critic = Critic::new(2, &h.critic_hidden, &mut rng);
    let obs = vec![0.3, -0.2];
    let before = actor.probs(&obs).unwrap();
    let mut b = Batch::default();
    for k in 0..60 {
        let a = k % 3;
        b.obs.push(obs.clone());
        b.actions.push(vec![a as f64]);
        b.logprobs.push(before[a].ln());
        b.advantages.push(if a == 2 { 1.0 } else { -0.5 });
        b.returns.push(0.0);
        b.units.push(0);
    }
    let mut oa = Adam::new(actor.params.len(), 1e-2);
    let mut oc = Adam::new(critic.params.len(), 1e-2);
    ppo_update(&mut actor, &mut critic, &mut oa, &mut oc, &b, &h, 0.0, &mut rng).unwrap();
    let after = actor.probs(&obs).unwrap();
    assert!(after[2] > before[2] + 0.05, "{before:?} -> {after:?}");
}

fn single(actor: &DiscreteActor, obs: &[f64], action: usize, ratio: f64, adv: f64) -> Batch {
    let p = actor.probs(obs).unwrap();
    Batch {
        obs: vec![obs.to_vec()],
        actions: vec![vec![action as f64]],
        logprobs: vec![p[action].ln() - ratio.ln()],
        advantages: vec![adv],
        returns: vec![0.0],
        units: vec![0],
    }
}

#[test]
fn clipped_branch_has_no_surrogate_gradient() {
    use coolsim_rl::nn::MlpCache;
    use coolsim_rl::policy::DiscreteScratch;
    use coolsim_rl::ppo::minibatch_loss;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = AgentHyper { ent_coef: 0.0, ..hyper() };
    let actor = DiscreteActor::new(3, &[5], 3, &mut rng);
    let critic = Critic::new(3, &[4], &mut rng);
    let obs = [0.3, -0.8, 0.5];
    let mut scratch = (DiscreteScratch::default(), MlpCache::default());

    let b = single(&actor, &obs, 1, 1.5, 2.0);
    let mut ga = vec![0.0; actor.params.len()];
    let mut gc = vec![0.0; critic.params.len()];
    let st = minibatch_loss(&actor, &critic, &b, &[0], &h, 0.0, Some((&mut ga, &mut gc)), &mut scratch);
    assert!(ga.iter().all(|g| *g == 0.0));
    assert!((st.policy + 1.2 * 2.0).abs() < 1e-12);
    assert_eq!(st.clip_fraction, 1.0);

    // Ratio one: the surrogate gradient is -A * grad log p.
    let b = single(&actor, &obs, 1, 1.0, 2.0);
    ga.iter_mut().for_each(|g| *g = 0.0);
    minibatch_loss(&actor, &critic, &b, &[0], &h, 0.0, Some((&mut ga, &mut gc)), &mut scratch);
    let mut glp = vec![0.0; actor.params.len()];
    actor.evaluate(&obs, 1, Some((1.0, 0.0, &mut glp)), &mut DiscreteScratch::default());
    for (a, g) in ga.iter().zip(&glp) {
        assert!((a + 2.0 * g).abs() < 1e-12);
    }
}
