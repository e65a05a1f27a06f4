//! Time stepping: smooth integration interleaved with contact resolution,
//! plus dataset generation from sampled rollouts.

use serde::{Deserialize, Serialize};

use crate::contact::{contact_step, ContactOptions};
use crate::dynamics::{constraints, Dynamics, DynamicsMode};
use crate::error::{Error, Result};
use crate::linalg::inf_norm;
use crate::model::{PhysParams, State, StepEvent, SystemSpec, Trajectory, TrajectoryMeta};
use crate::rng::{seeded_rng, uniform, SimRng};
use crate::systems::{detect_contacts, sample_initial_condition, Preset};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub dt: f64,
    pub n_steps: usize,
    pub mode: DynamicsMode,
    pub contact: ContactOptions,
    /// Pull states back onto the constraint manifold after every step.
    /// Off by default; the dynamics keep constraints on their own.
    pub project_constraints: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            dt: 0.01,
            n_steps: 100,
            mode: DynamicsMode::default(),
            contact: ContactOptions::default(),
            project_constraints: false,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
        }
        if let crate::contact::ContactVariant::Cmr { epsilon } = self.contact.variant {
            if !(epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::InvalidConfig(format!("CMr needs ε > 0, got {epsilon}")));
            }
        }
        Ok(())
    }
}

/// Rolls `state0` forward `opts.n_steps` steps. Each step integrates the
/// smooth dynamics, detects contacts at the new positions and, if any are
/// active, replaces the velocity by the post-impact one.
pub fn simulate(spec: &SystemSpec, params: &PhysParams, state0: &State, opts: &SimOptions) -> Result<Trajectory> {
    opts.validate()?;
    params.validate(spec)?;
    // the compensation target divides by the step, so keep the spec in sync
    let local;
    let spec = if spec.dt == opts.dt {
        spec
    } else {
        local = SystemSpec {
            dt: opts.dt,
            ..spec.clone()
        };
        &local
    };
    let dynamics = Dynamics::new(spec, params, opts.mode)?;
    let mut states = Vec::with_capacity(opts.n_steps + 1);
    let mut events = Vec::with_capacity(opts.n_steps + 1);
    events.push(StepEvent {
        contacts: 0,
        max_penetration: detect_contacts(spec, &state0.x).max_penetration(),
    });
    states.push(state0.clone());
    let mut s = state0.clone();
    for step in 1..=opts.n_steps {
        let advance = || -> Result<(State, StepEvent)> {
            let mut next = dynamics.rk4_step(&s, opts.dt)?;
            let contacts = detect_contacts(spec, &next.x);
            if !contacts.is_empty() {
                next = contact_step(spec, params, &dynamics.mass, &next, &contacts, &opts.contact)?;
            }
            if opts.project_constraints {
                dynamics.project_to_manifold(&mut next.x, &mut next.v)?;
            }
            if !next.is_finite() {
                return Err(Error::Simulation {
                    step,
                    source: Box::new(Error::InvalidConfig("state became non-finite".into())),
                });
            }
            let event = StepEvent {
                contacts: contacts.len(),
                max_penetration: contacts.max_penetration(),
            };
            Ok((next, event))
        };
        let (next, event) = advance().map_err(|e| e.at_step(step))?;
        states.push(next.clone());
        events.push(event);
        s = next;
    }
    Ok(Trajectory {
        states,
        events,
        meta: TrajectoryMeta {
            seed: None,
            spec_hash: spec.content_hash(),
        },
    })
}

/// Total energy of every recorded state.
pub fn energies(spec: &SystemSpec, params: &PhysParams, traj: &Trajectory) -> Result<Vec<f64>> {
    let d = Dynamics::new(spec, params, DynamicsMode::default())?;
    Ok(traj.states.iter().map(|s| d.energy(s)).collect())
}

/// `‖Φ(x)‖∞` of every recorded state.
pub fn constraint_residuals(spec: &SystemSpec, traj: &Trajectory) -> Vec<f64> {
    traj.states
        .iter()
        .map(|s| inf_norm(constraints(spec, &s.x).as_slice()))
        .collect()
}

/// One training window: consecutive states starting at time `t0`. Each
/// state is stored as `[x, v]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub t0: f64,
    pub states: Vec<(Vec<f64>, Vec<f64>)>,
    pub has_collision: bool,
}

impl Chunk {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize, dt: f64) -> State {
        let (x, v) = &self.states[i];
        State::new(x.clone(), v.clone(), self.t0 + i as f64 * dt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetOptions {
    pub n_traj: usize,
    pub chunk_len: usize,
    pub rollout_steps: usize,
    pub sim: SimOptions,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            n_traj: 200,
            chunk_len: 5,
            rollout_steps: 100,
            sim: SimOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema_version: u32,
    /// The generating system, including its ground-truth parameters.
    pub preset: Preset,
    pub seed: u64,
    pub options: DatasetOptions,
    pub chunks: Vec<Chunk>,
}

impl Dataset {
    pub fn collision_fraction(&self) -> f64 {
        let n = self.chunks.iter().filter(|c| c.has_collision).count();
        n as f64 / self.chunks.len().max(1) as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: Dataset = serde_json::from_str(text)?;
        if d.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "dataset schema {} is not supported (expected {SCHEMA_VERSION})",
                d.schema_version
            )));
        }
        d.preset.validate()?;
        let len = d.options.chunk_len;
        let dim = d.preset.spec.dim();
        for c in &d.chunks {
            if c.len() != len || c.states.iter().any(|(x, v)| x.len() != dim || v.len() != dim) {
                return Err(Error::ShapeMismatch(format!("chunk shape does not match {len} states of dimension {dim}")));
            }
        }
        Ok(d)
    }

    /// Adds independent `N(0, σ²)` noise to every stored coordinate.
    pub fn add_noise(&mut self, sigma: f64, rng: &mut SimRng) {
        for c in &mut self.chunks {
            for (x, v) in &mut c.states {
                for a in x.iter_mut().chain(v.iter_mut()) {
                    *a += sigma * crate::rng::normal(rng);
                }
            }
        }
    }
}

/// Seed of rollout `index` under dataset seed `seed`.
pub fn rollout_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// Picks one window of `len` states whose first state is contact free.
/// Even-indexed rollouts prefer a window containing a collision, odd ones
/// a window without; if the preferred kind is missing the other is used.
fn pick_window(traj: &Trajectory, len: usize, index: usize, rng: &mut SimRng) -> Option<(usize, bool)> {
    let n = traj.len();
    if n < len {
        return None;
    }
    let mut hit = vec![];
    let mut calm = vec![];
    for s in 0..=(n - len) {
        if traj.events[s].contacts > 0 || traj.events[s].max_penetration > 0.0 {
            continue;
        }
        if traj.events[s + 1..s + len].iter().any(|e| e.contacts > 0) {
            hit.push(s);
        } else {
            calm.push(s);
        }
    }
    let (first, second, flag) = if index % 2 == 0 {
        (&hit, &calm, true)
    } else {
        (&calm, &hit, false)
    };
    let (pool, flag) = if first.is_empty() { (second, !flag) } else { (first, flag) };
    if pool.is_empty() {
        return None;
    }
    let k = ((uniform(rng, 0.0, 1.0) * pool.len() as f64) as usize).min(pool.len() - 1);
    Some((pool[k], flag))
}

fn generate_chunk(preset: &Preset, opts: &DatasetOptions, seed: u64, index: usize) -> Result<Chunk> {
    let mut rng = seeded_rng(rollout_seed(seed, index));
    let s0 = sample_initial_condition(preset, &mut rng)?;
    let sim = SimOptions {
        n_steps: opts.rollout_steps,
        ..opts.sim
    };
    let traj = simulate(&preset.spec, &preset.params, &s0, &sim)?;
    let (start, has_collision) = pick_window(&traj, opts.chunk_len, index, &mut rng).ok_or_else(|| Error::SamplingExhausted {
        attempts: 1,
        reason: format!("rollout {index} has no contact-free window of {} states", opts.chunk_len),
    })?;
    let window = &traj.states[start..start + opts.chunk_len];
    Ok(Chunk {
        t0: window[0].t,
        states: window.iter().map(|s| (s.x.clone(), s.v.clone())).collect(),
        has_collision,
    })
}

/// Simulates `opts.n_traj` sampled rollouts and keeps one window from each.
/// Rollout `i` draws from its own generator seeded with
/// [`rollout_seed`], so the result does not depend on scheduling.
pub fn generate_dataset(preset: &Preset, opts: &DatasetOptions, seed: u64) -> Result<Dataset> {
    preset.validate()?;
    opts.sim.validate()?;
    if opts.n_traj == 0 || opts.chunk_len < 2 || opts.rollout_steps + 1 < opts.chunk_len {
        return Err(Error::InvalidConfig(
            "need n_traj ≥ 1, chunk_len ≥ 2 and rollouts at least one chunk long".into(),
        ));
    }
    let chunks = map_indices(opts.n_traj, |i| generate_chunk(preset, opts, seed, i))?;
    Ok(Dataset {
        schema_version: SCHEMA_VERSION,
        preset: preset.clone(),
        seed,
        options: *opts,
        chunks,
    })
}

/// Evaluates `f(0..n)` (in parallel when enabled) and returns results in
/// index order.
pub(crate) fn map_indices<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{bp5, bp5_elastic, cp3, cp3_elastic};

    #[test]
    fn free_flight_is_straight() {
        let p = bp5_elastic();
        let x = vec![0.2, 0.2, 0.5, 0.5, 0.8, 0.8, 0.2, 0.8, 0.8, 0.2];
        let v = vec![0.1, 0.0, 0.0, 0.1, -0.1, 0.0, 0.0, -0.1, 0.05, 0.05];
        let opts = SimOptions {
            n_steps: 50,
            ..Default::default()
        };
        let t = simulate(&p.spec, &p.params, &State::new(x.clone(), v.clone(), 0.0), &opts).unwrap();
        let last = t.states.last().unwrap();
        for i in 0..10 {
            assert!((last.x[i] - (x[i] + 0.5 * v[i])).abs() < 1e-12);
            assert_eq!(last.v[i], v[i]);
        }
        assert!(t.check_times(0.01));
        assert!(t.events.iter().all(|e| e.contacts == 0));
    }

    #[test]
    fn elastic_wall_bounce_keeps_energy() {
        let p = bp5_elastic();
        let x = vec![0.85, 0.5, 0.3, 0.2, 0.3, 0.8, 0.6, 0.2, 0.6, 0.8];
        let mut v = vec![0.0; 10];
        v[0] = 1.0;
        let opts = SimOptions {
            n_steps: 20,
            ..Default::default()
        };
        let t = simulate(&p.spec, &p.params, &State::new(x, v, 0.0), &opts).unwrap();
        assert!(t.events.iter().any(|e| e.contacts > 0));
        let last = t.states.last().unwrap();
        assert!((last.v[0] + 1.0).abs() < 1e-5);
        assert!(last.x[0] < 0.9);
    }

    #[test]
    fn dataset_shape_and_determinism() {
        let p = cp3();
        let opts = DatasetOptions {
            n_traj: 10,
            ..Default::default()
        };
        let a = generate_dataset(&p, &opts, 11).unwrap();
        assert_eq!(a.chunks.len(), 10);
        for c in &a.chunks {
            assert_eq!(c.len(), 5);
            assert!(detect_contacts(&p.spec, &c.states[0].0).is_empty());
        }
        let b = generate_dataset(&p, &opts, 11).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let back = Dataset::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn bp5_collision_balance() {
        let opts = DatasetOptions {
            n_traj: 60,
            ..Default::default()
        };
        let d = generate_dataset(&bp5(), &opts, 5).unwrap();
        let f = d.collision_fraction();
        assert!((0.3..=0.7).contains(&f), "{f}");
    }

    #[test]
    fn chain_drift_over_long_rollout() {
        let p = cp3_elastic();
        let s0 = sample_initial_condition(&p, &mut seeded_rng(2)).unwrap();
        for mode in [DynamicsMode::Lagrangian, DynamicsMode::Hamiltonian] {
            let opts = SimOptions {
                n_steps: 500,
                mode,
                ..Default::default()
            };
            let t = simulate(&p.spec, &p.params, &s0, &opts).unwrap();
            let r = constraint_residuals(&p.spec, &t);
            let e = energies(&p.spec, &p.params, &t).unwrap();
            let drift = e.iter().map(|a| (a - e[0]).abs()).fold(0.0, f64::max) / e[0].abs().max(1.0);
            eprintln!("{mode:?}: max ‖Φ‖∞ {:e}, energy drift {:e}", r.iter().cloned().fold(0.0, f64::max), drift);
        }
    }

    #[test]
    fn bad_options_rejected() {
        let p = cp3();
        let s0 = sample_initial_condition(&p, &mut seeded_rng(0)).unwrap();
        let opts = SimOptions {
            dt: 0.0,
            ..Default::default()
        };
        assert!(matches!(simulate(&p.spec, &p.params, &s0, &opts), Err(Error::InvalidConfig(_))));
    }
}
