//! Gradient-based planning through the simulator: billiards and two throwing
//! tasks. Decisions are small real vectors mapped onto an initial state;
//! gradients are central finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{fd_gradient, AdamW};
use crate::model::{PhysParams, State, SystemSpec, Trajectory};
use crate::sim::{simulate, SimOptions, SCHEMA_VERSION};
use crate::systems::{billiards, throw, Preset, SamplerConfig, THROW_RADIUS};

/// Objective charged when a rollout fails.
pub const FAILED_OBJECTIVE: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Decision `[vx, vy]` of the cue ball; the object ball should sit on
    /// the target at the last step.
    Billiards,
    /// Decision `[vx, vy, s]` with `s` the rim speed of the spin; the disk
    /// centre should sit on the target at the last step.
    ThrowHit,
    /// Decision `[s]`, launch velocity fixed; the disk centre should stay on
    /// the vertical line `x = target[0]` over the second half of the horizon.
    ThrowVertical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanTask {
    pub kind: TaskKind,
    pub horizon: usize,
    pub target: Vec<f64>,
    /// State the decision is written into.
    pub base: State,
}

fn fixed_state(p: &Preset) -> State {
    match &p.sampler {
        SamplerConfig::Fixed { state } => state.clone(),
        _ => unreachable!("planning presets use a fixed state"),
    }
}

impl PlanTask {
    pub fn billiards() -> Self {
        PlanTask {
            kind: TaskKind::Billiards,
            horizon: 256,
            target: vec![1.5, 1.0],
            base: fixed_state(&billiards()),
        }
    }

    pub fn throw_hit() -> Self {
        PlanTask {
            kind: TaskKind::ThrowHit,
            horizon: 100,
            target: vec![1.2, 0.5],
            base: fixed_state(&throw()),
        }
    }

    pub fn throw_vertical() -> Self {
        PlanTask {
            kind: TaskKind::ThrowVertical,
            horizon: 150,
            target: vec![0.45],
            base: fixed_state(&throw()),
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "billiards" => Ok(Self::billiards()),
            "throw_hit" => Ok(Self::throw_hit()),
            "throw_vertical" => Ok(Self::throw_vertical()),
            _ => Err(Error::InvalidConfig(format!(
                "unknown task {name:?}; expected billiards, throw_hit or throw_vertical"
            ))),
        }
    }

    pub fn preset(&self) -> Preset {
        match self.kind {
            TaskKind::Billiards => billiards(),
            TaskKind::ThrowHit | TaskKind::ThrowVertical => throw(),
        }
    }

    pub fn n_decision(&self) -> usize {
        match self.kind {
            TaskKind::Billiards => 2,
            TaskKind::ThrowHit => 3,
            TaskKind::ThrowVertical => 1,
        }
    }

    /// The decision that reproduces the base state's velocities.
    pub fn default_decision(&self) -> Vec<f64> {
        match self.kind {
            TaskKind::Billiards => self.base.v[0..2].to_vec(),
            TaskKind::ThrowHit => vec![self.base.v[0], self.base.v[1], 0.0],
            TaskKind::ThrowVertical => vec![0.0],
        }
    }

    /// Initial state for `decision`.
    pub fn apply(&self, decision: &[f64]) -> Result<State> {
        if decision.len() != self.n_decision() {
            return Err(Error::ShapeMismatch(format!(
                "task takes {} decision variables, got {}",
                self.n_decision(),
                decision.len()
            )));
        }
        let mut s = self.base.clone();
        match self.kind {
            TaskKind::Billiards => s.v[0..2].copy_from_slice(decision),
            TaskKind::ThrowHit => set_disk_velocity(&mut s, [decision[0], decision[1]], decision[2]),
            TaskKind::ThrowVertical => {
                let vc = [self.base.v[0], self.base.v[1]];
                set_disk_velocity(&mut s, vc, decision[0]);
            }
        }
        Ok(s)
    }
}

/// Rigid velocity of the disk: centre velocity `vc` and spin with rim speed
/// `rim` (counter-clockwise positive).
fn set_disk_velocity(s: &mut State, vc: [f64; 2], rim: f64) {
    let omega = rim / THROW_RADIUS;
    let c = [s.x[0], s.x[1]];
    for p in 0..3 {
        let u = [s.x[2 * p] - c[0], s.x[2 * p + 1] - c[1]];
        s.v[2 * p] = vc[0] - omega * u[1];
        s.v[2 * p + 1] = vc[1] + omega * u[0];
    }
}

/// Simulates the task horizon from the state `decision` sets up.
pub fn rollout(task: &PlanTask, decision: &[f64], spec: &SystemSpec, params: &PhysParams, sim: &SimOptions) -> Result<Trajectory> {
    let s0 = task.apply(decision)?;
    let opts = SimOptions {
        n_steps: task.horizon,
        ..*sim
    };
    simulate(spec, params, &s0, &opts)
}

/// Task objective for `decision` under `params`.
pub fn plan_objective(task: &PlanTask, decision: &[f64], spec: &SystemSpec, params: &PhysParams, sim: &SimOptions) -> Result<f64> {
    let traj = rollout(task, decision, spec, params, sim)?;
    let last = traj.states.last().expect("rollout has states");
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    Ok(match task.kind {
        TaskKind::Billiards => sq(&last.x[2..4], &task.target),
        TaskKind::ThrowHit => sq(&last.x[0..2], &task.target),
        TaskKind::ThrowVertical => traj.states[task.horizon / 2..]
            .iter()
            .map(|s| (s.x[0] - task.target[0]).powi(2))
            .sum(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    pub iters: usize,
    pub lr: f64,
    pub sim: SimOptions,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            iters: 200,
            lr: 1e-2,
            sim: SimOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub schema_version: u32,
    pub task: PlanTask,
    pub decision: Vec<f64>,
    pub loss: f64,
    /// Objective at each iterate, then its running minimum.
    pub losses: Vec<f64>,
    pub best_so_far: Vec<f64>,
}

/// Adam descent on the decision from `init`; returns the best iterate seen.
pub fn plan(task: &PlanTask, params: &PhysParams, init: &[f64], opts: &PlanOptions) -> Result<PlanReport> {
    if opts.iters == 0 {
        return Err(Error::InvalidConfig("planning needs at least one iteration".into()));
    }
    let preset = task.preset();
    let spec = &preset.spec;
    params.validate(spec)?;
    let objective = |d: &[f64]| plan_objective(task, d, spec, params, &opts.sim).unwrap_or(FAILED_OBJECTIVE);
    let mut decision = init.to_vec();
    task.apply(&decision)?;
    let mut adam = AdamW::new(decision.len(), opts.lr, 0.0);
    let mut best = (f64::INFINITY, decision.clone());
    let mut losses = Vec::with_capacity(opts.iters + 1);
    let mut best_so_far = Vec::with_capacity(opts.iters + 1);
    for it in 0..=opts.iters {
        let loss = objective(&decision);
        if loss < best.0 {
            best = (loss, decision.clone());
        }
        losses.push(loss);
        best_so_far.push(best.0);
        if it == opts.iters {
            break;
        }
        let grad = fd_gradient(&decision, objective);
        adam.step(&mut decision, &grad);
    }
    Ok(PlanReport {
        schema_version: SCHEMA_VERSION,
        task: task.clone(),
        decision: best.1,
        loss: best.0,
        losses,
        best_so_far,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decision_round_trip() {
        for t in [PlanTask::billiards(), PlanTask::throw_hit(), PlanTask::throw_vertical()] {
            let s = t.apply(&t.default_decision()).unwrap();
            assert_eq!(s, t.base, "{:?}", t.kind);
            assert!(t.apply(&[]).is_err());
        }
    }

    #[test]
    fn spin_is_rigid() {
        let t = PlanTask::throw_hit();
        let s = t.apply(&[0.3, -0.2, 0.5]).unwrap();
        // tip velocities relative to the centre are perpendicular to the offset
        for p in 1..3 {
            let u = [s.x[2 * p] - s.x[0], s.x[2 * p + 1] - s.x[1]];
            let w = [s.v[2 * p] - s.v[0], s.v[2 * p + 1] - s.v[1]];
            assert!((u[0] * w[0] + u[1] * w[1]).abs() < 1e-15);
            assert!(((w[0] * w[0] + w[1] * w[1]).sqrt() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn objective_is_zero_on_target() {
        let t = PlanTask::billiards();
        let p = t.preset();
        let mut sim_t = t.clone();
        // cue ball held still, target on the resting object ball
        sim_t.target = t.base.x[2..4].to_vec();
        let f = plan_objective(&sim_t, &[0.0, 0.0], &p.spec, &p.params, &SimOptions::default()).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn optimal_start_never_gets_worse() {
        let mut t = PlanTask::billiards();
        t.target = t.base.x[2..4].to_vec();
        let p = t.preset();
        let opts = PlanOptions { iters: 5, ..Default::default() };
        let r = plan(&t, &p.params, &[0.0, 0.0], &opts).unwrap();
        assert_eq!(r.loss, 0.0);
        assert!(r.best_so_far.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn unknown_task_is_rejected() {
        assert!(PlanTask::by_name("golf").is_err());
        assert_eq!(PlanTask::by_name("Throw-Hit").unwrap().kind, TaskKind::ThrowHit);
    }
}
