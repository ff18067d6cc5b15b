use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use pixelcatch::env::{env_rng, BatchEnv, EnvConfig, Variant, CRITIC_OBS_DIM, CRITIC_STEP_DIM};
use pixelcatch::marl::*;
use pixelcatch::oracle::InterceptionOracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_cfg(seed: u64) -> TrainerConfig<f64> {
    TrainerConfig {
        num_envs: 2,
        horizon: 8,
        minibatches: 2,
        epochs: 2,
        hidden: vec![32, 16],
        total_steps: 3 * 16,
        eval_interval: 0,
        seed,
        ..TrainerConfig::default()
    }
}

fn env_cfg(variant: Variant) -> EnvConfig<f64> {
    EnvConfig {
        variant,
        ..EnvConfig::default()
    }
}

fn hash_params(xs: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for x in xs {
        x.to_bits().hash(&mut h);
    }
    h.finish()
}

fn agent_hash(a: &Agent<f64>) -> u64 {
    let mut all = a.policy.params().to_vec();
    all.extend_from_slice(&a.head.log_std);
    all.extend_from_slice(a.critic.params());
    hash_params(&all)
}

#[test]
fn gae_matches_discounted_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let gamma = 0.99;
    for _ in 0..1000 {
        let n_envs = rng.random_range(1..=4);
        let steps = rng.random_range(1..=40);
        let n = n_envs * steps;
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let (adv, ret) = compute_gae(&rewards, &vec![0.0; n], &dones, &vec![0.0; n_envs], n_envs, gamma, 1.0).unwrap();
        for e in 0..n_envs {
            for t in 0..steps {
                let mut g = 0.0;
                let mut disc = 1.0;
                for k in t..steps {
                    let i = k * n_envs + e;
                    g += disc * rewards[i];
                    disc *= gamma;
                    if dones[i] {
                        break;
                    }
                }
                let i = t * n_envs + e;
                assert!((adv[i] - g).abs() < 1e-9, "{} vs {g}", adv[i]);
                assert_eq!(adv[i], ret[i]);
            }
        }
    }
}

#[test]
fn normalized_advantages_have_unit_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let n = rng.random_range(2..300);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let mut a: Vec<f64> = (0..n).map(|_| scale * rng.random_range(-1.0..5.0)).collect();
        normalize_advantages(&mut a);
        let mean = a.iter().sum::<f64>() / n as f64;
        let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-6);
    }
}

/// Toy policy: unit-variance Gaussian with a single mean parameter.
fn toy_logp(theta: f64, a: f64) -> f64 {
    -0.5 * (a - theta).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = 0.2;
    let mut checked = 0;
    while checked < 200 {
        let n = rng.random_range(1..8);
        let theta_old: f64 = rng.random_range(-1.0..1.0);
        let theta = theta_old + rng.random_range(-0.3..0.3);
        let actions: Vec<f64> = (0..n).map(|_| theta_old + rng.random_range(-1.5..1.5)).collect();
        let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let old: Vec<f64> = actions.iter().map(|&a| toy_logp(theta_old, a)).collect();
        let objective = |th: f64| {
            let lp: Vec<f64> = actions.iter().map(|&a| toy_logp(th, a)).collect();
            clipped_surrogate(&lp, &old, &adv, eps).unwrap().objective
        };
        // Skip instances sitting on a clip boundary, where the objective has a kink.
        let near_kink = actions.iter().zip(&old).any(|(&a, &o)| {
            let r = (toy_logp(theta, a) - o).exp();
            (r - (1.0 - eps)).abs() < 1e-3 || (r - (1.0 + eps)).abs() < 1e-3
        });
        if near_kink {
            continue;
        }
        let lp: Vec<f64> = actions.iter().map(|&a| toy_logp(theta, a)).collect();
        let s = clipped_surrogate(&lp, &old, &adv, eps).unwrap();
        let analytic: f64 = s.grad_log_prob.iter().zip(&actions).map(|(g, &a)| g * (a - theta)).sum();
        let h = 1e-6;
        let numeric = (objective(theta + h) - objective(theta - h)) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        assert!(rel < 1e-4 || (analytic - numeric).abs() < 1e-9, "{analytic} vs {numeric}");
        checked += 1;
    }
}

fn finalized_rollout(seed: u64) -> (Vec<Agent<f64>>, Rollout<f64>, TrainerConfig<f64>) {
    let cfg = small_cfg(seed);
    let t = Trainer::new(cfg.clone(), env_cfg(Variant::Proposed)).unwrap();
    let agents = t.agents().to_vec();
    let mut env = BatchEnv::new(t.env_config(), cfg.num_envs, seed).unwrap();
    let mut rng = env_rng(seed, 99);
    let mut r = collect_rollouts(&agents, &mut env, cfg.horizon, true, &mut rng).unwrap();
    for b in &mut r.buffers {
        b.finalize(cfg.gamma, cfg.gae_lambda).unwrap();
    }
    (agents, r, cfg)
}

#[test]
fn zero_epochs_change_nothing() {
    let (agents, r, mut cfg) = finalized_rollout(1);
    cfg.epochs = 0;
    let mut a = agents[0].clone();
    let stats = ppo_update(&mut a, &r.buffers[0], &cfg, &mut env_rng(0, 0)).unwrap();
    assert_eq!(a, agents[0]);
    assert_eq!(stats.minibatches, 0);
}

#[test]
fn first_minibatch_has_unit_ratio() {
    let (agents, r, mut cfg) = finalized_rollout(2);
    cfg.epochs = 1;
    cfg.minibatches = 1;
    for (agent, buf) in agents.iter().zip(&r.buffers) {
        let mut a = agent.clone();
        let s = ppo_update(&mut a, buf, &cfg, &mut env_rng(0, 0)).unwrap();
        assert_eq!(s.clip_fraction, 0.0);
        assert!(s.approx_kl.abs() < 1e-12);
        // Normalized advantages average to zero, and so does the surrogate.
        assert!(s.policy_loss.abs() < 1e-9);
        assert_ne!(agent_hash(&a), agent_hash(agent));
    }
}

#[test]
fn agents_update_independently() {
    let (agents, r, cfg) = finalized_rollout(3);
    let (arm0, hand0) = (agent_hash(&agents[0]), agent_hash(&agents[1]));
    let mut hand = agents[1].clone();
    ppo_update(&mut hand, &r.buffers[1], &cfg, &mut env_rng(0, 0)).unwrap();
    assert_eq!(agent_hash(&agents[0]), arm0);
    assert_ne!(agent_hash(&hand), hand0);

    // A full iteration moves each agent exactly as its own update would.
    let mut t = Trainer::new(cfg.clone(), env_cfg(Variant::Proposed)).unwrap();
    let before = t.agents().to_vec();
    t.iterate().unwrap();
    for (b, a) in before.iter().zip(t.agents()) {
        assert_ne!(agent_hash(b), agent_hash(a));
        assert_eq!(b.role(), a.role());
    }
}

#[test]
fn ppo_rejects_unfinalized_and_mismatched_buffers() {
    let (agents, r, cfg) = finalized_rollout(4);
    let mut raw = r.buffers[0].clone();
    raw.advantages.clear();
    let mut a = agents[0].clone();
    assert!(ppo_update(&mut a, &raw, &cfg, &mut env_rng(0, 0)).is_err());
    assert!(ppo_update(&mut a, &r.buffers[1], &cfg, &mut env_rng(0, 0)).is_err());
}

#[test]
fn minimal_rollout_and_synchronized_buffers() {
    let cfg = TrainerConfig {
        num_envs: 1,
        horizon: 1,
        minibatches: 1,
        ..small_cfg(0)
    };
    let t = Trainer::new(cfg.clone(), env_cfg(Variant::Proposed)).unwrap();
    let mut env = BatchEnv::new(t.env_config(), 1, 0).unwrap();
    let r = collect_rollouts(t.agents(), &mut env, 1, true, &mut env_rng(0, 0)).unwrap();
    assert_eq!(r.buffers.len(), 2);
    assert!(r.buffers.iter().all(|b| b.len() == 1));
    assert_eq!(r.buffers[0].dones, r.buffers[1].dones);

    let mut env = BatchEnv::new(t.env_config(), 3, 1).unwrap();
    let r = collect_rollouts(t.agents(), &mut env, 100, true, &mut env_rng(0, 1)).unwrap();
    let (arm, hand) = (&r.buffers[0], &r.buffers[1]);
    arm.validate().unwrap();
    hand.validate().unwrap();
    assert_eq!(arm.len(), hand.len());
    assert_eq!(arm.dones, hand.dones);
    assert_eq!(arm.critic_observations, hand.critic_observations);
    assert_eq!(arm.dones.iter().filter(|&&d| d).count(), r.finished.len());
    assert!(!r.finished.is_empty());
    assert_eq!((arm.obs_dim, hand.obs_dim, arm.action_dim, hand.action_dim), (50, 78, 6, 13));
}

#[test]
fn rollouts_are_deterministic() {
    let (_, a, _) = finalized_rollout(7);
    let (_, b, _) = finalized_rollout(7);
    assert_eq!(a, b);
    let (_, c, _) = finalized_rollout(8);
    assert_ne!(a.buffers[0].actions, c.buffers[0].actions);
}

#[test]
fn critic_mask_changes_values_not_actions() {
    let cfg = small_cfg(9);
    let t = Trainer::new(cfg.clone(), env_cfg(Variant::Proposed)).unwrap();
    let run = |privileged: bool| {
        let mut env = BatchEnv::new(t.env_config(), cfg.num_envs, 9).unwrap();
        let mut r = collect_rollouts(t.agents(), &mut env, cfg.horizon, privileged, &mut env_rng(9, 0)).unwrap();
        for b in &mut r.buffers {
            b.finalize(cfg.gamma, cfg.gae_lambda).unwrap();
        }
        r
    };
    let full = run(true);
    let masked = run(false);
    for (f, m) in full.buffers.iter().zip(&masked.buffers) {
        assert_eq!(f.actions, m.actions);
        assert_eq!(f.observations, m.observations);
        assert_eq!(f.rewards, m.rewards);
        assert_ne!(f.critic_observations, m.critic_observations);
        assert_ne!(f.values, m.values);
        for row in m.critic_observations.chunks_exact(CRITIC_OBS_DIM) {
            assert!(row[CRITIC_STEP_DIM - 3..CRITIC_STEP_DIM].iter().all(|&x| x == 0.0));
            assert!(row[CRITIC_OBS_DIM - 3..].iter().all(|&x| x == 0.0));
        }
    }
    let mut ucfg = cfg.clone();
    ucfg.epochs = 1;
    ucfg.minibatches = 1;
    let mut a = t.agents()[0].clone();
    let sf = ppo_update(&mut a, &full.buffers[0], &ucfg, &mut env_rng(0, 0)).unwrap();
    let mut a = t.agents()[0].clone();
    let sm = ppo_update(&mut a, &masked.buffers[0], &ucfg, &mut env_rng(0, 0)).unwrap();
    assert_ne!(sf.value_loss, sm.value_loss);
}

#[test]
fn smoke_runs_emit_one_row_per_iteration() {
    let mut rows = Vec::new();
    let t = train_mappo(small_cfg(0), env_cfg(Variant::Proposed), |_, o| {
        rows.push(o.row);
        Ok(())
    })
    .unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows.iter().map(|r| r.iteration).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert_eq!(rows[2].env_steps, 48);
    assert_eq!(t.agents().len(), 2);

    let mut n = 0;
    let t = train_single_agent(small_cfg(0), env_cfg(Variant::SaRl), |_, o| {
        assert_eq!(o.stats.len(), 1);
        n += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(n, 3);
    let a = &t.agents()[0];
    assert_eq!((a.role(), a.spec.obs_dim, a.spec.action_dim), (AgentRole::Unified, 128, 19));

    assert!(train_mappo(small_cfg(0), env_cfg(Variant::SaRl), |_, _| Ok(())).is_err());
    assert!(train_single_agent(small_cfg(0), env_cfg(Variant::OnlyWh), |_, _| Ok(())).is_err());
}

#[test]
fn training_is_deterministic() {
    let rows = |seed| {
        let mut rows = Vec::new();
        train_mappo(small_cfg(seed), env_cfg(Variant::Proposed), |_, o| {
            rows.push(o.row);
            Ok(())
        })
        .unwrap();
        let mut out = Vec::new();
        write_metrics(&mut out, &rows).unwrap();
        out
    };
    let a = rows(5);
    assert_eq!(a, rows(5));
    assert_ne!(a, rows(6));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn evaluation_ignores_critics() {
    let t = Trainer::new(small_cfg(0), env_cfg(Variant::Proposed)).unwrap();
    let mut garbage = t.agents().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for a in &mut garbage {
        a.critic.params_mut().iter_mut().for_each(|p| *p = rng.random_range(-1e6..1e6));
    }
    let cfg = t.env_config();
    let base = evaluate(cfg, &mut DeterministicTeam { agents: t.agents() }, 5, 1).unwrap();
    let junk = evaluate(cfg, &mut DeterministicTeam { agents: &garbage }, 5, 1).unwrap();
    assert_eq!(base, junk);
}

#[test]
fn evaluation_rates() {
    let cfg = env_cfg(Variant::Proposed);
    let ev = evaluate(&cfg, &mut RandomPolicy { rng: ChaCha8Rng::seed_from_u64(0) }, 40, 2).unwrap();
    assert_eq!(ev.episodes.len(), 40);
    assert!(ev.success_rate <= ev.tracking_rate);
    assert!(ev.mean_length > 0.0 && ev.mean_length <= 90.0);
    assert!(evaluate(&cfg, &mut RandomPolicy { rng: ChaCha8Rng::seed_from_u64(0) }, 0, 2).is_err());

    let a = evaluate(&cfg, &mut InterceptionOracle::default(), 20, 3).unwrap();
    let b = evaluate(&cfg, &mut InterceptionOracle::default(), 20, 3).unwrap();
    assert_eq!(a, b);
    assert!(a.tracking_rate >= 80.0);
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let cfg = TrainerConfig {
        total_steps: 5 * 16,
        ..small_cfg(12)
    };
    let mut t = Trainer::new(cfg, env_cfg(Variant::Proposed)).unwrap();
    t.iterate().unwrap();
    t.iterate().unwrap();
    let mut bytes = Vec::new();
    t.save(&mut bytes).unwrap();
    let mut r = Trainer::<f64>::load(bytes.as_slice()).unwrap();
    assert_eq!(r.agents(), t.agents());
    let ea = t.evaluate(3, 4).unwrap();
    let eb = r.evaluate(3, 4).unwrap();
    assert_eq!(ea, eb);

    let obs = BatchEnv::new(t.env_config(), 1, 0).unwrap().observations()[0].clone();
    let x = obs.arm.clone();
    let ma = t.agents()[0].mean_actions(&x, 1).unwrap();
    let mb = r.agents()[0].mean_actions(&x, 1).unwrap();
    assert!(ma.iter().zip(&mb).all(|(a, b)| a.to_bits() == b.to_bits()));

    // Continuing from the checkpoint matches the uninterrupted run.
    let mut rows_t = Vec::new();
    run_training(&mut t, |_, o| {
        rows_t.push(o.row);
        Ok(())
    })
    .unwrap();
    let mut rows_r = Vec::new();
    run_training(&mut r, |_, o| {
        rows_r.push(o.row);
        Ok(())
    })
    .unwrap();
    assert_eq!(rows_t.len(), 3);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_metrics(&mut ca, &rows_t).unwrap();
    write_metrics(&mut cb, &rows_r).unwrap();
    assert_eq!(ca, cb);

    let mut bad = String::from_utf8(bytes).unwrap();
    bad = bad.replacen("\"trainer\"", "\"agent\"", 1);
    assert!(Trainer::<f64>::load(bad.as_bytes()).is_err());
}

#[test]
fn config_validation() {
    let ok = TrainerConfig::<f64>::default();
    ok.validate().unwrap();
    assert_eq!((ok.gamma, ok.clip_epsilon, ok.kl_threshold), (0.99, 0.2, 0.016));
    for bad in [
        TrainerConfig { gamma: 0.0, ..ok.clone() },
        TrainerConfig { gamma: 1.5, ..ok.clone() },
        TrainerConfig { clip_epsilon: 0.0, ..ok.clone() },
        TrainerConfig { minibatches: 0, ..ok.clone() },
        TrainerConfig { num_envs: 0, ..ok.clone() },
        TrainerConfig { hidden: vec![], ..ok.clone() },
    ] {
        assert!(bad.validate().is_err());
        assert!(Trainer::new(bad, env_cfg(Variant::Proposed)).is_err());
    }
}

#[test]
fn single_precision_training() {
    let cfg = TrainerConfig::<f32> {
        num_envs: 2,
        horizon: 8,
        minibatches: 2,
        hidden: vec![16],
        total_steps: 32,
        eval_interval: 1,
        eval_episodes: 1,
        ..TrainerConfig::default()
    };
    let env = EnvConfig::<f32>::default();
    let mut snaps = 0;
    train_mappo(cfg, env, |_, o| {
        assert!(o.row.lr_arm > 0.0 && o.row.approx_kl_arm.is_finite());
        snaps += usize::from(o.snapshot.is_some());
        Ok(())
    })
    .unwrap();
    assert_eq!(snaps, 2);
}
