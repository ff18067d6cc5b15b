//! End-to-end acceptance checks, one line per criterion.
//!
//! Criterion 8 trains twelve full-budget runs, which takes hours on a
//! desktop CPU. By default it is reported as skipped. Pass
//! `--include-ignored` to train the runs here, or point `PIXELCATCH_TREND_DIR`
//! at the output of `scripts/trend.sh` to check finished runs.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pixelcatch::env::*;
use pixelcatch::geometry::{Quat, Vec3};
use pixelcatch::marl::*;
use pixelcatch::nn::{mlp_backward, mlp_forward, Mlp, MlpSpec};
use pixelcatch::oracle::InterceptionOracle;
use pixelcatch::sim::sysid::{excitation_target, simulate_joint, sysid_fit, GainScales, TrajectoryPair};
use pixelcatch::sim::{step_object, JointChainModel, ObjectState, GRAVITY};
use pixelcatch::vision::*;
use pixelcatch_cli::artifact::*;
use pixelcatch_cli::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((a - b).abs() <= tol, || format!("{what}: {a} != {b} (tol {tol:e})"))
}

// ---------------------------------------------------------------- 1

fn formula_exactness() -> Check {
    let cfg = RewardConfig::<f64>::default();
    let none = EventFlags::default();

    let flags = EventFlags { succ: true, app: true, ..none };
    let a = [0.1f64.sqrt(), 0.0, 0.0, 0.0, 0.0, 0.0];
    close(arm_reward(0.05, &flags, &a, &cfg).0, 10.139, 1e-9, "arm reward, success and approach")?;
    let flags = EventFlags { drop: true, coll: true, ..none };
    close(arm_reward(0.0, &flags, &[0.0; 6], &cfg).0, -10.01, 1e-9, "arm reward, drop and collision")?;

    let flags = EventFlags { succ: true, ..none };
    close(hand_reward(0.05, &[0.05; 4], &flags, &[0.0; 13], &cfg).0, 10.05, 1e-9, "hand reward, success")?;
    let flags = EventFlags { drop: true, ..none };
    close(hand_reward(0.0, &[0.0; 4], &flags, &[0.0; 13], &cfg).0, -5.0, 1e-9, "hand reward, drop")?;

    let x = |v: f64| Vec3::new(v, 0.0, 0.0);
    let o = Vec3::zero();
    close(compute_r_dist(x(1.0), o, x(0.6), o), 0.4, 1e-9, "approaching distance reward")?;
    close(compute_r_dist(x(0.5), o, x(0.8), o), -0.3, 1e-9, "receding distance reward")?;

    let cam = CameraModel::look_at(600.0, 600.0, 640.0, 480.0, Vec3::zero(), x(1.0)).map_err(|e| e.to_string())?;
    let cur = BoundingBox { u_min: 335.0, v_min: 225.0, u_max: 365.0, v_max: 255.0 };
    let prev = BoundingBox { u_min: 328.0, v_min: 238.0, u_max: 352.0, v_max: 262.0 };
    let f = extract_pixel_features(&cur, &prev, &cam, FeatureScaling::Normalized).to_array();
    let expect = [0.546875, 0.5, 0.015625, -10.0 / 480.0, 0.009375, 0.0125];
    for (i, (a, b)) in f.iter().zip(expect).enumerate() {
        close(*a, b, 1e-9, &format!("pixel feature {i}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let flags = EventFlags {
            succ: rng.random(),
            drop: rng.random(),
            app: rng.random(),
            coll: rng.random(),
        };
        let rd = rng.random_range(-1.0..1.0);
        let fingers: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let act: Vec<f64> = (0..13).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (ra, ba) = arm_reward(rd, &flags, &act[..6], &cfg);
        let (rh, bh) = hand_reward(rd, &fingers, &flags, &act, &cfg);
        let (ru, bu) = unified_reward(&ba, &bh);
        for (r, b) in [(ra, ba), (rh, bh), (ru, bu)] {
            worst = worst.max((b.sum_terms() - r).abs()).max((b.total - r).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("breakdown sums differ by {worst:e}"))?;
    Ok(format!("hand examples exact, 10000 breakdown sums within {worst:.1e}"))
}

// ---------------------------------------------------------------- 2

fn mlp_fd_error(rng: &mut ChaCha8Rng) -> Result<f64, String> {
    let depth = rng.random_range(1..=3);
    let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=32)).collect();
    let spec = MlpSpec::new(rng.random_range(1..=10), rng.random_range(1..=5)).with_hidden(&hidden);
    let mut net = Mlp::<f64>::new(spec.clone(), rng).map_err(|e| e.to_string())?;
    for p in net.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let batch = rng.random_range(1..=3);
    let x: Vec<f64> = (0..batch * spec.input).map(|_| rng.random_range(-2.0..2.0)).collect();
    let c: Vec<f64> = (0..batch * spec.output).map(|_| rng.random_range(-1.0..1.0)).collect();
    let forward = |net: &Mlp<f64>| if batch == 1 { mlp_forward(net, &x) } else { net.forward(&x, batch) };
    let loss = |net: &Mlp<f64>| -> f64 {
        let (y, _) = forward(net).unwrap();
        y.iter().zip(&c).map(|(y, c)| y * c).sum()
    };
    let (_, cache) = forward(&net).map_err(|e| e.to_string())?;
    let g = mlp_backward(&net, &cache, &c).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..spec.parameter_count() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = loss(&net);
        net.params_mut()[i] = orig - h;
        let down = loss(&net);
        net.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let scale = numeric.abs().max(g.params[i].abs());
        // Gradients that vanish to rounding level have no meaningful relative error.
        if scale > 1e-7 {
            worst = worst.max((numeric - g.params[i]).abs() / scale);
        }
    }
    Ok(worst)
}

fn toy_logp(theta: f64, a: f64) -> f64 {
    -0.5 * (a - theta).powi(2) - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn surrogate_fd_error(rng: &mut ChaCha8Rng) -> Option<f64> {
    let eps = 0.2;
    let n = rng.random_range(1..8);
    let theta_old: f64 = rng.random_range(-1.0..1.0);
    let theta = theta_old + rng.random_range(-0.3..0.3);
    let actions: Vec<f64> = (0..n).map(|_| theta_old + rng.random_range(-1.5..1.5)).collect();
    let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let old: Vec<f64> = actions.iter().map(|&a| toy_logp(theta_old, a)).collect();
    let lp = |th: f64| -> Vec<f64> { actions.iter().map(|&a| toy_logp(th, a)).collect() };
    let kink = lp(theta).iter().zip(&old).any(|(l, o)| {
        let r = (l - o).exp();
        (r - 1.0 + eps).abs() < 1e-3 || (r - 1.0 - eps).abs() < 1e-3
    });
    if kink {
        return None;
    }
    let s = clipped_surrogate(&lp(theta), &old, &adv, eps).ok()?;
    let analytic: f64 = s.grad_log_prob.iter().zip(&actions).map(|(g, &a)| g * (a - theta)).sum();
    let h = 1e-6;
    let f = |th: f64| clipped_surrogate(&lp(th), &old, &adv, eps).unwrap().objective;
    let numeric = (f(theta + h) - f(theta - h)) / (2.0 * h);
    let scale = analytic.abs().max(numeric.abs());
    Some(if scale < 1e-9 { 0.0 } else { (analytic - numeric).abs() / scale })
}

fn gradient_fidelity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mlp_worst: f64 = 0.0;
    for _ in 0..100 {
        mlp_worst = mlp_worst.max(mlp_fd_error(&mut rng)?);
    }
    let mut sur_worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 100 {
        if let Some(e) = surrogate_fd_error(&mut rng) {
            sur_worst = sur_worst.max(e);
            checked += 1;
        }
    }
    ensure(mlp_worst < 1e-4 && sur_worst < 1e-4, || {
        format!("relative error mlp {mlp_worst:.2e}, surrogate {sur_worst:.2e}")
    })?;
    Ok(format!(
        "100 networks (worst {mlp_worst:.1e}), 100 surrogate instances (worst {sur_worst:.1e})"
    ))
}

// ---------------------------------------------------------------- 3

fn gae_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gamma = 0.99;
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n_envs = rng.random_range(1..=4);
        let steps = rng.random_range(1..=50);
        let n = n_envs * steps;
        let rewards: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.random_bool(0.1)).collect();
        let (adv, _) = compute_gae(&rewards, &vec![0.0; n], &dones, &vec![0.0; n_envs], n_envs, gamma, 1.0)
            .map_err(|e| e.to_string())?;
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
                worst = worst.max((adv[t * n_envs + e] - g).abs());
            }
        }
    }
    // The two-step hand recursion with lambda below one.
    let (adv, _) =
        compute_gae(&[1.0, 1.0], &[0.5, 0.5], &[false, false], &[0.0], 1, 0.99, 0.95).map_err(|e| e.to_string())?;
    close(adv[0], 1.46525, 1e-9, "two-step advantage")?;
    close(adv[1], 0.5, 1e-9, "last advantage")?;
    ensure(worst <= 1e-9, || format!("GAE differs from discounted sums by {worst:e}"))?;
    Ok(format!("1000 sequences within {worst:.1e} of discounted sums"))
}

// ---------------------------------------------------------------- 4

fn brute_force_box(cam: &CameraModel<f64>, obj: &ObjectState<f64>) -> Option<[f64; 4]> {
    let r = obj.orientation.to_matrix();
    let rc = cam.world_to_camera.rotation.to_matrix();
    let t = cam.world_to_camera.translation;
    let h = obj.half_extents;
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for sx in [-h.x, h.x] {
        for sy in [-h.y, h.y] {
            for sz in [-h.z, h.z] {
                let l = [sx, sy, sz];
                let w: [f64; 3] = std::array::from_fn(|i| {
                    obj.position.to_array()[i] + (0..3).map(|j| r[i][j] * l[j]).sum::<f64>()
                });
                let c: [f64; 3] = std::array::from_fn(|i| t.to_array()[i] + (0..3).map(|j| rc[i][j] * w[j]).sum::<f64>());
                if c[2] <= 1e-6 {
                    return None;
                }
                let u = cam.fx * c[0] / c[2] + cam.cx;
                let v = cam.fy * c[1] / c[2] + cam.cy;
                b = [b[0].min(u), b[1].min(v), b[2].max(u), b[3].max(v)];
            }
        }
    }
    Some(b)
}

fn random_unit_quat(rng: &mut ChaCha8Rng) -> Quat<f64> {
    let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Quat::from_axis_angle(axis, rng.random_range(-3.0..3.0))
}

fn geometry_oracles() -> Check {
    let e = |e: pixelcatch::Error| e.to_string();
    let cam = CameraModel::look_at(600.0, 600.0, 640.0, 480.0, Vec3::zero(), Vec3::new(1.0, 0.0, 0.0)).map_err(e)?;
    // camera-frame (0.1, 0, 2) is world (2, -0.1, 0) for this camera
    let (u, v) = project_point(&cam, Vec3::new(2.0, -0.1, 0.0)).map_err(e)?;
    close(u, 350.0, 1e-9, "u")?;
    close(v, 240.0, 1e-9, "v")?;
    for depth in [0.5, 2.0, 17.0] {
        let (u, v) = project_point(&cam, Vec3::new(depth, 0.0, 0.0)).map_err(e)?;
        close(u, 320.0, 1e-9, "principal u")?;
        close(v, 240.0, 1e-9, "principal v")?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut compared = 0;
    while compared < 1000 {
        let eye = Vec3::new(rng.random_range(-1.0..0.0), rng.random_range(-0.5..0.5), rng.random_range(1.0..3.0));
        let target = Vec3::new(rng.random_range(1.0..2.0), rng.random_range(-0.5..0.5), rng.random_range(0.8..1.5));
        let cam = CameraModel::look_at(500.0, 520.0, 640.0, 480.0, eye, target).map_err(e)?;
        let obj = ObjectState {
            position: target + Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)),
            orientation: random_unit_quat(&mut rng),
            linear_velocity: Vec3::zero(),
            angular_velocity: Vec3::zero(),
            mass: 0.1,
            restitution: 0.0,
            half_extents: Vec3::new(rng.random_range(0.01..0.1), rng.random_range(0.01..0.1), rng.random_range(0.01..0.1)),
        };
        let Some(b) = brute_force_box(&cam, &obj) else { continue };
        if b[0] < 0.0 || b[1] < 0.0 || b[2] > 640.0 || b[3] > 480.0 {
            continue;
        }
        let got = object_bounding_box(&cam, &obj).map_err(e)?;
        for (x, y) in [got.u_min, got.v_min, got.u_max, got.v_max].iter().zip(b) {
            close(*x, y, 1e-9, "box corner")?;
        }
        compared += 1;
    }

    let dt = 1.0 / 120.0;
    let o = ObjectState {
        position: Vec3::new(1.0, 0.5, 3.0),
        orientation: Quat::identity(),
        linear_velocity: Vec3::new(0.3, -0.2, 2.0),
        angular_velocity: Vec3::zero(),
        mass: 0.1,
        restitution: 0.5,
        half_extents: Vec3::new(0.03, 0.03, 0.03),
    };
    let mut s = o.clone();
    for n in 1..=60usize {
        s = step_object(&s, dt, 0.0);
        let nf = n as f64;
        let p0 = o.position.to_array();
        let v0 = o.linear_velocity.to_array();
        let p = s.position.to_array();
        for i in 0..3 {
            let g = if i == 2 { GRAVITY } else { 0.0 };
            let expect = p0[i] + nf * dt * v0[i] - dt * dt * g * nf * (nf + 1.0) / 2.0;
            close(p[i], expect, 1e-9, "free flight")?;
        }
    }
    let mut rest = o.clone();
    rest.position = Vec3::new(1.0, 0.5, 2.0);
    rest.linear_velocity = Vec3::zero();
    let one = step_object(&rest, dt, 0.81);
    close(one.linear_velocity.z, -0.08175, 1e-12, "one-step velocity")?;
    close(one.position.z - 2.0, -6.8125e-4, 1e-12, "one-step drop")?;
    Ok("projection cases exact, 1000 boxes match the 8-corner oracle, 60-step free flight exact".into())
}

// ---------------------------------------------------------------- 5

fn tiny_train_config(dir: &Path) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::new(Variant::Proposed);
    cfg.total_steps = 3 * cfg.trainer.steps_per_iteration();
    cfg.trainer.eval_interval = 0;
    cfg.seed = 5;
    cfg.output_dir = dir.to_path_buf();
    let cfg = cfg.resolved();
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn determinism() -> Check {
    let s = |e: anyhow::Error| format!("{e:#}");
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut metrics = Vec::new();
    let mut reports = Vec::new();
    for d in &dirs {
        let cfg = tiny_train_config(d.path())?;
        let summary = cmd_train(&cfg, &TrainOptions { resume: false }).map_err(s)?;
        ensure(summary.iterations == 3, || format!("{} iterations", summary.iterations))?;
        metrics.push(std::fs::read(d.path().join(METRICS_FILE)).map_err(|e| e.to_string())?);
        let mut bytes = Vec::new();
        for policy in [PolicySource::Trained, PolicySource::Random, PolicySource::Oracle] {
            let opts = EvalOptions {
                episodes: 10,
                seed: 7,
                policy,
                checkpoint: None,
            };
            cmd_evaluate(&cfg, &opts).map_err(s)?;
            bytes.push(std::fs::read(d.path().join(REPORT_FILE)).map_err(|e| e.to_string())?);
        }
        reports.push(bytes);
    }
    ensure(metrics[0] == metrics[1], || "metrics CSVs differ".into())?;
    ensure(reports[0] == reports[1], || "evaluation reports differ".into())?;
    let rows = metrics[0].iter().filter(|&&b| b == b'\n').count();
    Ok(format!("3-iteration metrics ({rows} lines) and 3 evaluation reports bit-identical"))
}

// ---------------------------------------------------------------- 6

fn task_solvability() -> Check {
    let cfg = EnvConfig::<f64>::default();
    let ev = evaluate(&cfg, &mut InterceptionOracle::default(), 300, 6).map_err(|e| e.to_string())?;
    let line = format!("oracle T.R. {:.1}% S.R. {:.1}% over 300 throws", ev.tracking_rate, ev.success_rate);
    ensure(ev.tracking_rate >= 90.0, || line.clone())?;
    Ok(line)
}

// ---------------------------------------------------------------- 7

fn sysid_worst_error(noise: f64, seed: u64) -> Result<f64, String> {
    let model = JointChainModel::<f64>::tabletop();
    let joints: Vec<_> = model.arm.iter().chain(&model.hand).cloned().collect();
    let dt = 1.0 / 120.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_dist = Normal::new(0.0, noise.max(1e-300)).map_err(|e| e.to_string())?;
    let mut truth = BTreeMap::new();
    truth.insert(0, (1.1, 0.9));
    for _ in 0..5 {
        let j = rng.random_range(1..joints.len());
        truth.insert(j, (rng.random_range(0.6..1.6), rng.random_range(0.6..1.6)));
    }
    let mut recorded = Vec::new();
    for (&j, &(ks, kd)) in &truth {
        let mut spec = joints[j].clone();
        spec.stiffness *= ks;
        spec.damping *= kd;
        for phase in [0.0, 0.41, 0.77] {
            let target = excitation_target(360, dt, phase);
            let mut measured = simulate_joint(&spec, 0.0, &target, dt);
            if noise > 0.0 {
                measured.iter_mut().for_each(|q| *q += noise_dist.sample(&mut rng));
            }
            recorded.push(TrajectoryPair { joint: j, target, measured });
        }
    }
    let report = sysid_fit(&joints, &recorded, &BTreeMap::<usize, GainScales<f64>>::new(), dt).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for fit in &report.fits {
        let (ks, kd) = truth[&fit.joint];
        worst = worst.max((fit.scales.stiffness / ks - 1.0).abs()).max((fit.scales.damping / kd - 1.0).abs());
    }
    Ok(worst)
}

fn sysid_recovery() -> Check {
    let clean = sysid_worst_error(0.0, 7)?;
    let noisy = sysid_worst_error(0.01, 8)?;
    let line = format!(
        "worst relative error {:.2}% noiseless, {:.2}% at 0.01 rad noise",
        100.0 * clean,
        100.0 * noisy
    );
    ensure(clean < 0.05 && noisy < 0.10, || line.clone())?;
    Ok(line)
}

// ---------------------------------------------------------------- 8

const TREND_VARIANTS: [Variant; 4] = [Variant::Proposed, Variant::WoPf, Variant::OnlyWh, Variant::SaRl];
const TREND_SEEDS: [u64; 3] = [0, 1, 2];
const TREND_EPISODES: usize = 300;
const TREND_EPISODE_SEED: u64 = 1000;

fn trend_config(variant: Variant, seed: u64, dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(variant);
    cfg.seed = seed;
    cfg.output_dir = dir.join(format!("{variant}-s{seed}"));
    cfg.resolved()
}

/// Mean T.R. and S.R. per variant, from finished runs or by training them.
fn trend_reports(root: &Path, train: bool) -> Result<HashMap<Variant, Vec<EvaluationReport>>, String> {
    let s = |e: anyhow::Error| format!("{e:#}");
    let mut out: HashMap<Variant, Vec<EvaluationReport>> = HashMap::new();
    for seed in TREND_SEEDS {
        for v in TREND_VARIANTS {
            let cfg = trend_config(v, seed, root);
            let report = if train {
                cmd_train(&cfg, &TrainOptions { resume: false }).map_err(s)?;
                let opts = EvalOptions {
                    episodes: TREND_EPISODES,
                    seed: TREND_EPISODE_SEED,
                    policy: PolicySource::Trained,
                    checkpoint: None,
                };
                cmd_evaluate(&cfg, &opts).map_err(s)?
            } else {
                // The stamp ties the report to the default budget for this variant and seed.
                read_stamped(&cfg.output_dir.join(REPORT_FILE), "evaluation", &cfg.fingerprint()).map_err(s)?
            };
            ensure(
                report.trials == TREND_EPISODES && report.seed == TREND_EPISODE_SEED && report.policy == PolicySource::Trained,
                || format!("{v} seed {seed}: report is not a {TREND_EPISODES}-episode trained evaluation"),
            )?;
            out.entry(v).or_default().push(report);
        }
    }
    Ok(out)
}

fn arm_reward_trend(root: &Path) -> Result<String, String> {
    let mut rising = 0;
    for seed in TREND_SEEDS {
        let cfg = trend_config(Variant::Proposed, seed, root);
        let rows = read_metrics_csv(&cfg.output_dir.join(METRICS_FILE), &cfg.fingerprint()).map_err(|e| format!("{e:#}"))?;
        let finite: Vec<f64> = rows.iter().map(|r| r.mean_reward_arm).filter(|x| x.is_finite()).collect();
        let k = (finite.len() / 10).max(1);
        let head = finite.iter().take(k).sum::<f64>() / k as f64;
        let tail = finite.iter().rev().take(k).sum::<f64>() / k as f64;
        if tail > head {
            rising += 1;
        }
    }
    Ok(format!("arm reward rose in {rising}/{} proposed seeds", TREND_SEEDS.len()))
}

fn trend_reproduction(mode: &TrendMode) -> Check {
    let (root, train, _keep) = match mode {
        TrendMode::Skip => unreachable!(),
        TrendMode::Existing(p) => (p.clone(), false, None),
        TrendMode::Train => {
            let d = tempfile::tempdir().map_err(|e| e.to_string())?;
            (d.path().to_path_buf(), true, Some(d))
        }
    };
    let reports = trend_reports(&root, train)?;
    let mean = |v: Variant, f: fn(&EvaluationReport) -> f64| {
        let r = &reports[&v];
        r.iter().map(f).sum::<f64>() / r.len() as f64
    };
    let tr = |v| mean(v, |r| r.tracking_rate);
    let sr = |v| mean(v, |r| r.success_rate);
    let line = format!(
        "T.R. proposed {:.1} / wo-pf {:.1} / only-wh {:.1}; S.R. proposed {:.1} / sa-rl {:.1}; {}",
        tr(Variant::Proposed),
        tr(Variant::WoPf),
        tr(Variant::OnlyWh),
        sr(Variant::Proposed),
        sr(Variant::SaRl),
        arm_reward_trend(&root)?,
    );
    let ok = tr(Variant::Proposed) > tr(Variant::WoPf) + 20.0
        && tr(Variant::Proposed) > tr(Variant::OnlyWh) + 20.0
        && sr(Variant::Proposed) > sr(Variant::SaRl);
    ensure(ok, || line.clone())?;
    Ok(line)
}

// ---------------------------------------------------------------- 9

fn frame(rng: &mut ChaCha8Rng, p_object: Vec3<f64>) -> Frame<f64> {
    let mut r = || rng.random_range(-1.0..1.0);
    Frame {
        features: PixelFeatures {
            cx: r(),
            cy: r(),
            dcx: r(),
            dcy: r(),
            dw: r(),
            dh: r(),
        },
        box_size: (r().abs(), r().abs()),
        pose_eef: std::array::from_fn(|_| r()),
        q_arm: std::array::from_fn(|_| r()),
        a_arm: std::array::from_fn(|_| r()),
        q_hand: std::array::from_fn(|_| r()),
        a_hand: std::array::from_fn(|_| r()),
        p_object,
        initial_object: Vec3::new(2.5, 0.1, 1.2),
    }
}

fn privileged_isolation() -> Check {
    let e = |e: pixelcatch::Error| e.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut cases = 0;
    for variant in [Variant::Proposed, Variant::SaRl] {
        let tc = TrainerConfig::<f64> {
            hidden: vec![64, 32],
            policy_output_gain: 1.0,
            ..TrainerConfig::default()
        };
        let env_cfg = EnvConfig { variant, ..EnvConfig::default() };
        let trainer = Trainer::new(tc, env_cfg.clone()).map_err(e)?;
        let env = CatchEnv::new(env_cfg, 0).map_err(e)?;
        let mut team = DeterministicTeam { agents: trainer.agents() };
        for _ in 0..50 {
            let seed: u64 = rng.random();
            let base_p = Vec3::new(1.5, 0.1, 1.3);
            let moved_p = base_p + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let mut r1 = ChaCha8Rng::seed_from_u64(seed);
            let mut r2 = ChaCha8Rng::seed_from_u64(seed);
            let a: [Frame<f64>; 2] = [frame(&mut r1, base_p), frame(&mut r1, base_p)];
            let b: [Frame<f64>; 2] = [frame(&mut r2, moved_p), frame(&mut r2, moved_p)];
            let oa = assemble_observations(&a, variant);
            let ob = assemble_observations(&b, variant);
            ensure(oa.critic != ob.critic, || "critic observation ignores the object position".into())?;
            ensure(oa.arm == ob.arm && oa.hand == ob.hand, || "policy observation depends on the object position".into())?;
            let (aa, ha) = team.act(&env, &oa).map_err(e)?;
            let (ab, hb) = team.act(&env, &ob).map_err(e)?;
            ensure(aa == ab && ha == hb, || "evaluation actions depend on the object position".into())?;
            // The check has teeth: moving the box does change the actions.
            let mut c = b.clone();
            c[1].features.cx += 0.25;
            let (ac, _) = team.act(&env, &assemble_observations(&c, variant)).map_err(e)?;
            ensure(ac != ab, || "actions ignore the box features".into())?;
            cases += 1;
        }
    }
    Ok(format!("{cases} perturbations change only the critic input"))
}

// ---------------------------------------------------------------- runner

enum TrendMode {
    Skip,
    Existing(std::path::PathBuf),
    Train,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let trend = match std::env::var_os("PIXELCATCH_TREND_DIR") {
        Some(p) => TrendMode::Existing(p.into()),
        None if args.iter().any(|a| a == "--include-ignored" || a == "--ignored") => TrendMode::Train,
        None => TrendMode::Skip,
    };
    let skip_trend = matches!(trend, TrendMode::Skip);
    let trend_limit = match trend {
        TrendMode::Train => Duration::from_secs(12 * 90 * 60),
        _ => Duration::from_secs(60),
    };

    type Criterion = (u32, &'static str, Duration, Box<dyn Fn() -> Check>);
    let criteria: Vec<Criterion> = vec![
        (1, "formula exactness", Duration::from_secs(5), Box::new(formula_exactness)),
        (2, "gradient fidelity", Duration::from_secs(60), Box::new(gradient_fidelity)),
        (3, "GAE oracle", Duration::from_secs(5), Box::new(gae_oracle)),
        (4, "geometry oracles", Duration::from_secs(60), Box::new(geometry_oracles)),
        (5, "determinism", Duration::from_secs(120), Box::new(determinism)),
        (6, "task solvability", Duration::from_secs(60), Box::new(task_solvability)),
        (7, "sysid recovery", Duration::from_secs(120), Box::new(sysid_recovery)),
        (8, "trend reproduction", trend_limit, Box::new(move || trend_reproduction(&trend))),
        (9, "privileged isolation", Duration::from_secs(60), Box::new(privileged_isolation)),
    ];

    let mut failed = 0;
    for (n, name, limit, run) in &criteria {
        if *n == 8 && skip_trend {
            println!(
                "criterion {n} {name}: SKIPPED (hours of training; rerun with --include-ignored, \
                 or set PIXELCATCH_TREND_DIR to the output of scripts/trend.sh)"
            );
            continue;
        }
        let start = Instant::now();
        let result = run();
        let took = start.elapsed();
        match result {
            Ok(detail) if took <= *limit => println!("criterion {n} {name}: PASS ({detail}; {took:.1?})"),
            Ok(detail) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL (over the {limit:?} limit: {detail}; {took:.1?})");
            }
            Err(why) => {
                failed += 1;
                println!("criterion {n} {name}: FAIL ({why}; {took:.1?})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
