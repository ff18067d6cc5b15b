//! Fits per-joint stiffness and damping scales so that simulated PD tracking
//! reproduces recorded joint trajectories.
//!
//! Each recorded trajectory is replayed through [`step_joints`] starting from
//! the first measured position at rest. The fit minimizes the mean squared
//! position error: coordinate descent over a log-spaced grid of scales, then
//! a shrinking pattern search in log-space.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{step_joints, JointSpec, JointState};

/// One recorded joint trajectory, sampled at the physics rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPair<T: Real> {
    /// Index into the concatenated arm + hand joint list.
    pub joint: usize,
    pub target: Vec<T>,
    pub measured: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GainScales<T: Real> {
    pub stiffness: T,
    pub damping: T,
}

impl<T: Real> Default for GainScales<T> {
    fn default() -> Self {
        Self {
            stiffness: T::one(),
            damping: T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct JointFit<T: Real> {
    pub joint: usize,
    pub scales: GainScales<T>,
    pub mse: T,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SysidReport<T: Real> {
    pub fits: Vec<JointFit<T>>,
    /// Sample-weighted mean squared error over every trajectory.
    pub residual: T,
}

/// Grid half-width in eighth-octaves: scales from 1/4x to 4x of the guess.
const GRID_STEPS: i32 = 16;
const GRID_RESOLUTION: f64 = 8.0;
const DESCENT_ROUNDS: usize = 3;
const REFINE_ITERATIONS: usize = 400;

/// Replays `target` through the PD model from `q0` at rest.
pub fn simulate_joint<T: Real>(joint: &JointSpec<T>, q0: T, target: &[T], dt: T) -> Vec<T> {
    let mut state = JointState::at_rest(vec![q0]);
    let mut out = Vec::with_capacity(target.len());
    out.push(q0);
    let specs = std::slice::from_ref(joint);
    for &t in &target[..target.len().saturating_sub(1)] {
        // targets are checked finite up front
        state = step_joints(&state, &[t], specs, dt).expect("finite single-joint step");
        out.push(state.positions[0]);
    }
    out
}

fn scaled<T: Real>(joint: &JointSpec<T>, s: GainScales<T>) -> JointSpec<T> {
    let mut j = joint.clone();
    j.stiffness *= s.stiffness;
    j.damping *= s.damping;
    j
}

/// Sum of squared errors and sample count over `trajs` for one joint.
pub fn trajectory_sse<T: Real>(
    joint: &JointSpec<T>,
    scales: GainScales<T>,
    trajs: &[&TrajectoryPair<T>],
    dt: T,
) -> (T, usize) {
    let j = scaled(joint, scales);
    let mut sse = T::zero();
    let mut n = 0;
    for tr in trajs {
        let sim = simulate_joint(&j, tr.measured[0], &tr.target, dt);
        for (a, b) in sim.iter().zip(&tr.measured) {
            sse += (*a - *b) * (*a - *b);
        }
        n += sim.len();
    }
    (sse, n)
}

fn fit_joint<T: Real>(
    joint: &JointSpec<T>,
    trajs: &[&TrajectoryPair<T>],
    init: GainScales<T>,
    dt: T,
) -> (GainScales<T>, T) {
    let cost = |ls: [f64; 2]| -> f64 {
        let s = GainScales {
            stiffness: T::of(ls[0].exp()),
            damping: T::of(ls[1].exp()),
        };
        let (sse, n) = trajectory_sse(joint, s, trajs, dt);
        let mse = sse.as_f64() / n as f64;
        if mse.is_finite() {
            mse
        } else {
            f64::INFINITY
        }
    };
    let center = [init.stiffness.as_f64().ln(), init.damping.as_f64().ln()];
    let step = std::f64::consts::LN_2 / GRID_RESOLUTION;
    let mut x = center;
    let mut fx = cost(x);
    for _ in 0..DESCENT_ROUNDS {
        for axis in 0..2 {
            for i in -GRID_STEPS..=GRID_STEPS {
                let mut y = x;
                y[axis] = center[axis] + step * i as f64;
                let fy = cost(y);
                if fy < fx {
                    x = y;
                    fx = fy;
                }
            }
        }
    }
    let mut h = step;
    for _ in 0..REFINE_ITERATIONS {
        if h < 1e-9 {
            break;
        }
        let mut improved = false;
        for axis in 0..2 {
            for dir in [1.0, -1.0] {
                let mut y = x;
                y[axis] += dir * h;
                let fy = cost(y);
                if fy < fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (
        GainScales {
            stiffness: T::of(x[0].exp()),
            damping: T::of(x[1].exp()),
        },
        T::of(fx),
    )
}

/// Fits gain scales for every joint that has at least one trajectory.
///
/// `joints` is the concatenated arm + hand joint list the trajectory indices
/// refer to; `init` supplies per-joint starting guesses (default 1.0).
pub fn sysid_fit<T: Real>(
    joints: &[JointSpec<T>],
    recorded: &[TrajectoryPair<T>],
    init: &BTreeMap<usize, GainScales<T>>,
    dt: T,
) -> Result<SysidReport<T>> {
    if recorded.is_empty() {
        return Err(Error::Sysid("no trajectories to fit".into()));
    }
    let mut by_joint: BTreeMap<usize, Vec<&TrajectoryPair<T>>> = BTreeMap::new();
    for tr in recorded {
        if tr.joint >= joints.len() {
            return Err(Error::Sysid(format!("joint index {} out of range", tr.joint)));
        }
        if tr.target.len() != tr.measured.len() || tr.target.is_empty() {
            return Err(Error::Sysid(format!(
                "joint {}: target and measured lengths differ or are empty",
                tr.joint
            )));
        }
        if tr.target.iter().chain(&tr.measured).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sysid trajectory"));
        }
        by_joint.entry(tr.joint).or_default().push(tr);
    }
    let mut fits = Vec::with_capacity(by_joint.len());
    let mut total_sse = 0.0;
    let mut total_n = 0usize;
    for (&joint, trajs) in &by_joint {
        let guess = init.get(&joint).copied().unwrap_or_default();
        let (scales, mse) = fit_joint(&joints[joint], trajs, guess, dt);
        let samples: usize = trajs.iter().map(|t| t.measured.len()).sum();
        total_sse += mse.as_f64() * samples as f64;
        total_n += samples;
        fits.push(JointFit {
            joint,
            scales,
            mse,
            samples,
        });
    }
    Ok(SysidReport {
        fits,
        residual: T::of(total_sse / total_n as f64),
    })
}

/// A step-and-sine excitation that exercises both stiffness and damping.
pub fn excitation_target<T: Real>(len: usize, dt: T, phase: f64) -> Vec<T> {
    let dt = dt.as_f64();
    (0..len)
        .map(|i| {
            let t = i as f64 * dt;
            let step = if (t * 1.5 + phase).fract() < 0.5 { 0.4 } else { -0.3 };
            T::of(step + 0.15 * (7.0 * t + phase).sin())
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    t: f64,
    joint: usize,
    target: f64,
    measured: f64,
}

/// Reads `t,joint,target,measured` rows. A new trajectory starts whenever
/// the joint changes or time does not advance.
pub fn read_trajectories_csv<T: Real, R: Read>(reader: R) -> Result<Vec<TrajectoryPair<T>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Csv { row: 1, msg: e.to_string() })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "joint", "target", "measured"] {
        return Err(Error::Csv {
            row: 1,
            msg: format!("expected header t,joint,target,measured, found {:?}", headers),
        });
    }
    let mut out: Vec<TrajectoryPair<T>> = Vec::new();
    let mut last: Option<(usize, f64)> = None;
    for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Csv { row, msg: e.to_string() })?;
        if !(rec.t.is_finite() && rec.target.is_finite() && rec.measured.is_finite()) {
            return Err(Error::Csv {
                row,
                msg: "non-finite value".into(),
            });
        }
        let continues = matches!(last, Some((j, t)) if j == rec.joint && rec.t > t);
        if !continues {
            out.push(TrajectoryPair {
                joint: rec.joint,
                target: Vec::new(),
                measured: Vec::new(),
            });
        }
        let cur = out.last_mut().expect("pushed above");
        cur.target.push(T::of(rec.target));
        cur.measured.push(T::of(rec.measured));
        last = Some((rec.joint, rec.t));
    }
    if out.is_empty() {
        return Err(Error::Csv {
            row: 1,
            msg: "no trajectory rows".into(),
        });
    }
    Ok(out)
}

pub fn write_trajectories_csv<T: Real, W: Write>(
    writer: W,
    trajs: &[TrajectoryPair<T>],
    dt: T,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for tr in trajs {
        for (i, (t, m)) in tr.target.iter().zip(&tr.measured).enumerate() {
            w.serialize(CsvRow {
                t: i as f64 * dt.as_f64(),
                joint: tr.joint,
                target: t.as_f64(),
                measured: m.as_f64(),
            })
            .map_err(|e| Error::Csv { row: i + 2, msg: e.to_string() })?;
        }
    }
    w.flush()?;
    Ok(())
}
