//! System identification: masses, contact properties and potential
//! constants are fitted by rolling out the simulator on short windows and
//! descending a finite-difference gradient of the L1 trajectory error.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::dynamics::{constraint_jacobian, constraints, Dynamics};
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Vector};
use crate::model::{PhysParams, State, SystemSpec};
use crate::rng::{normal, seeded_rng};
use crate::sim::{map_indices, simulate, Dataset, SimOptions, SCHEMA_VERSION};

/// Loss charged for a window whose rollout failed.
pub const FAILED_CHUNK_LOSS: f64 = 1e6;

/// Where each physical quantity lives inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub n_masses: usize,
    pub n_classes: usize,
    pub n_constants: usize,
}

impl ParamLayout {
    pub fn for_spec(spec: &SystemSpec) -> Self {
        ParamLayout {
            n_masses: spec.bodies.len(),
            n_classes: spec.contact_classes.len(),
            n_constants: spec.potential.n_constants(),
        }
    }

    pub fn len(&self) -> usize {
        self.n_masses + 2 * self.n_classes + self.n_constants
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mu_range(&self) -> std::ops::Range<usize> {
        self.n_masses..self.n_masses + self.n_classes
    }

    pub fn e_range(&self) -> std::ops::Range<usize> {
        let s = self.n_masses + self.n_classes;
        s..s + self.n_classes
    }

    pub fn constant_range(&self) -> std::ops::Range<usize> {
        let s = self.n_masses + 2 * self.n_classes;
        s..s + self.n_constants
    }

    /// Contact class of component `i`, if it is a μ or e_P entry.
    fn contact_class(&self, i: usize) -> Option<usize> {
        if self.mu_range().contains(&i) {
            Some(i - self.n_masses)
        } else if self.e_range().contains(&i) {
            Some(i - self.n_masses - self.n_classes)
        } else {
            None
        }
    }
}

pub fn hard_sigmoid(x: f64) -> f64 {
    (0.25 * x + 0.5).clamp(0.0, 1.0)
}

/// Maps any finite parameter vector to valid physical parameters.
pub fn decode(theta: &[f64], layout: &ParamLayout) -> PhysParams {
    PhysParams {
        masses: theta[..layout.n_masses].iter().map(|t| t.exp()).collect(),
        mu: theta[layout.mu_range()].iter().map(|t| t.max(0.0)).collect(),
        e_p: theta[layout.e_range()].iter().map(|&t| hard_sigmoid(t)).collect(),
        potential_constants: theta[layout.constant_range()].iter().map(|t| t.exp()).collect(),
    }
}

/// Inverse of [`decode`] on its range (e_P = 0 and 1 map to the saturation
/// points −2 and 2).
pub fn encode(params: &PhysParams) -> Vec<f64> {
    params
        .masses
        .iter()
        .map(|m| m.ln())
        .chain(params.mu.iter().copied())
        .chain(params.e_p.iter().map(|e| 4.0 * (e - 0.5)))
        .chain(params.potential_constants.iter().map(|c| c.ln()))
        .collect()
}

/// Starting point: unit masses and constants, μ = 0.1, e_P = 0.5, each
/// entry perturbed by `N(0, noise²)`.
pub fn initial_theta(layout: &ParamLayout, seed: u64, noise: f64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    let mut theta = vec![0.0; layout.len()];
    for i in layout.mu_range() {
        theta[i] = 0.1;
    }
    for t in theta.iter_mut() {
        *t += noise * normal(&mut rng);
    }
    theta
}

/// Per-window outcome of one loss evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossEval {
    pub total: f64,
    pub per_chunk: Vec<f64>,
    /// `‖pred − true‖₁ / (‖true‖₁ + 1e-12)` per window.
    pub relative: Vec<f64>,
    /// Contact classes touched by each window's rollout.
    pub touched: Vec<Vec<bool>>,
    /// Hash of each window's contact events (step and candidate).
    pub signatures: Vec<Option<u64>>,
    pub failed: usize,
}

impl LossEval {
    pub fn mean_relative(&self) -> f64 {
        self.relative.iter().sum::<f64>() / self.relative.len().max(1) as f64
    }
}

/// Constraint residual above which a stored state counts as off the
/// manifold (noisy data) rather than carrying the simulator's own drift.
pub const OFF_MANIFOLD: f64 = 1e-5;

/// Rollout of one window under `params`: the first stored state is pulled
/// onto the constraint manifold when it is off it, then simulated for the
/// remaining steps.
pub fn predict_chunk(spec: &SystemSpec, params: &PhysParams, first: &State, steps: usize, sim: &SimOptions) -> Result<(Vec<State>, Rollout)> {
    let mut s0 = first.clone();
    if spec.n_constraints() > 0 {
        let phi = inf_norm(constraints(spec, &s0.x).as_slice());
        let jv = constraint_jacobian(spec, &s0.x) * Vector::from_column_slice(&s0.v);
        if phi > OFF_MANIFOLD || inf_norm(jv.as_slice()) > OFF_MANIFOLD {
            Dynamics::new(spec, params, sim.mode)?.project_to_manifold(&mut s0.x, &mut s0.v)?;
        }
    }
    let opts = SimOptions { n_steps: steps, ..*sim };
    let traj = simulate(spec, params, &s0, &opts)?;
    let mut touched = vec![false; spec.contact_classes.len()];
    let mut hasher = DefaultHasher::new();
    for s in 1..traj.states.len() {
        if traj.events[s].contacts > 0 {
            // recover the classes from detection at the pre-impulse positions
            for c in crate::systems::detect_contacts(spec, &traj.states[s].x).contacts {
                touched[c.class] = true;
                (s, c.candidate).hash(&mut hasher);
            }
        }
    }
    Ok((traj.states, Rollout { touched, signature: hasher.finish() }))
}

/// Contact bookkeeping of one predicted window.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub touched: Vec<bool>,
    pub signature: u64,
}

struct ChunkLoss {
    loss: f64,
    relative: f64,
    touched: Vec<bool>,
    signature: Option<u64>,
}

fn chunk_loss(spec: &SystemSpec, params: &PhysParams, data: &Dataset, k: usize, sim: &SimOptions) -> ChunkLoss {
    let chunk = &data.chunks[k];
    let dt = sim.dt;
    let n_classes = spec.contact_classes.len();
    match predict_chunk(spec, params, &chunk.state(0, dt), chunk.len() - 1, sim) {
        Ok((pred, roll)) => {
            let mut err = 0.0;
            let mut norm = 0.0;
            for (i, p) in pred.iter().enumerate().skip(1) {
                let (x, v) = &chunk.states[i];
                for (a, b) in p.x.iter().zip(x).chain(p.v.iter().zip(v)) {
                    err += (a - b).abs();
                    norm += b.abs();
                }
            }
            ChunkLoss {
                loss: err,
                relative: err / (norm + 1e-12),
                touched: roll.touched,
                signature: Some(roll.signature),
            }
        }
        Err(_) => ChunkLoss {
            loss: FAILED_CHUNK_LOSS,
            relative: f64::INFINITY,
            touched: vec![true; n_classes],
            signature: None,
        },
    }
}

/// Summed L1 error over all windows, steps and coordinates (positions and
/// velocities) under `params`.
pub fn trajectory_loss_params(params: &PhysParams, data: &Dataset, sim: &SimOptions) -> LossEval {
    let spec = &data.preset.spec;
    let mut out = LossEval {
        total: 0.0,
        per_chunk: Vec::with_capacity(data.chunks.len()),
        relative: Vec::with_capacity(data.chunks.len()),
        touched: Vec::with_capacity(data.chunks.len()),
        signatures: Vec::with_capacity(data.chunks.len()),
        failed: 0,
    };
    if params.validate(spec).is_err() {
        out.total = FAILED_CHUNK_LOSS * data.chunks.len() as f64;
        out.failed = data.chunks.len();
        return out;
    }
    for k in 0..data.chunks.len() {
        let c = chunk_loss(spec, params, data, k, sim);
        out.total += c.loss;
        out.per_chunk.push(c.loss);
        out.relative.push(c.relative);
        out.touched.push(c.touched);
        out.signatures.push(c.signature);
        out.failed += usize::from(c.signature.is_none());
    }
    out
}

pub fn trajectory_loss(theta: &[f64], data: &Dataset, sim: &SimOptions) -> LossEval {
    let layout = ParamLayout::for_spec(&data.preset.spec);
    trajectory_loss_params(&decode(theta, &layout), data, sim)
}

/// Step used for component `i` of a central difference.
pub fn fd_step(theta_i: f64) -> f64 {
    1e-5 * (1.0 + theta_i.abs())
}

/// Central finite-difference gradient; components are independent and
/// evaluated in parallel when enabled.
pub fn fd_gradient(theta: &[f64], loss: impl Fn(&[f64]) -> f64 + Sync + Send) -> Vec<f64> {
    map_indices(theta.len(), |i| {
        let h = fd_step(theta[i]);
        let mut p = theta.to_vec();
        let mut m = theta.to_vec();
        p[i] += h;
        m[i] -= h;
        Ok((loss(&p) - loss(&m)) / (2.0 * h))
    })
    .expect("finite differences do not fail")
}

/// Gradient of [`trajectory_loss`] by central differences, taken window by
/// window on the base rollout's contact-event sequence.
///
/// A window whose perturbed rollout hits a different event sequence (a
/// contact appearing or vanishing at another step) would add a jump of
/// order `Δloss / h` to the difference. That side is dropped: the window
/// uses the one-sided difference on the matching side, or contributes
/// nothing when neither side matches. This is the derivative of the smooth
/// piece the base point lies on, which is what differentiating through a
/// fixed contact sequence yields. A μ or e_P entry only re-simulates the
/// windows whose rollout touched that contact class; the others do not
/// depend on it.
pub fn loss_gradient(theta: &[f64], base: &LossEval, data: &Dataset, sim: &SimOptions) -> Vec<f64> {
    let spec = &data.preset.spec;
    let layout = ParamLayout::for_spec(spec);
    map_indices(theta.len(), |i| {
        let h = fd_step(theta[i]);
        let mut p = theta.to_vec();
        let mut m = theta.to_vec();
        p[i] += h;
        m[i] -= h;
        let (pp, pm) = (decode(&p, &layout), decode(&m, &layout));
        if pp.validate(spec).is_err() || pm.validate(spec).is_err() {
            return Ok(0.0);
        }
        let mut g = 0.0;
        for k in 0..data.chunks.len() {
            if let Some(c) = layout.contact_class(i) {
                if !base.touched[k][c] {
                    continue;
                }
            }
            let Some(sig) = base.signatures[k] else { continue };
            let up = chunk_loss(spec, &pp, data, k, sim);
            let down = chunk_loss(spec, &pm, data, k, sim);
            let l0 = base.per_chunk[k];
            g += match (up.signature == Some(sig), down.signature == Some(sig)) {
                (true, true) => (up.loss - down.loss) / (2.0 * h),
                (true, false) => (up.loss - l0) / h,
                (false, true) => (l0 - down.loss) / h,
                (false, false) => 0.0,
            };
        }
        Ok(g)
    })
    .expect("finite differences do not fail")
}

/// Adam with decoupled weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(n: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            theta[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * theta[i]);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Standard deviation of the perturbation applied to the initial guess.
    pub init_noise: f64,
    /// Stop when the loss improved by less than `early_stop_tol` over the
    /// last `early_stop_window` epochs.
    pub early_stop_window: usize,
    pub early_stop_tol: f64,
    pub sim: SimOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            epochs: 3000,
            lr: 1e-3,
            weight_decay: 0.0,
            init_noise: 0.01,
            early_stop_window: 50,
            early_stop_tol: 1e-10,
            sim: SimOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub preset: String,
    pub epochs_run: usize,
    pub final_loss: f64,
    /// Loss and mean relative window error before each update.
    pub losses: Vec<f64>,
    pub relative_errors: Vec<f64>,
    pub theta: Vec<f64>,
    pub params: PhysParams,
    /// `m_i / m_1`.
    pub mass_ratios: Vec<f64>,
}

pub fn mass_ratios(params: &PhysParams) -> Vec<f64> {
    params.masses.iter().map(|m| m / params.masses[0]).collect()
}

/// Full-batch descent from [`initial_theta`]. `progress` sees every epoch's
/// index and loss.
pub fn fit_with_progress(data: &Dataset, init_seed: u64, opts: &FitOptions, mut progress: impl FnMut(usize, f64)) -> Result<FitReport> {
    if data.chunks.is_empty() {
        return Err(Error::InvalidConfig("dataset has no chunks".into()));
    }
    opts.sim.validate()?;
    let layout = ParamLayout::for_spec(&data.preset.spec);
    let mut theta = initial_theta(&layout, init_seed, opts.init_noise);
    let mut adam = AdamW::new(theta.len(), opts.lr, opts.weight_decay);
    let mut losses = vec![];
    let mut rel = vec![];
    let mut best = (f64::INFINITY, theta.clone());
    for epoch in 0..opts.epochs {
        let base = trajectory_loss(&theta, data, &opts.sim);
        progress(epoch, base.total);
        losses.push(base.total);
        rel.push(base.mean_relative());
        if base.total < best.0 {
            best = (base.total, theta.clone());
        }
        let w = opts.early_stop_window;
        if w > 0 && losses.len() > w && losses[losses.len() - 1 - w] - base.total < opts.early_stop_tol {
            break;
        }
        let grad = loss_gradient(&theta, &base, data, &opts.sim);
        adam.step(&mut theta, &grad);
    }
    let final_eval = trajectory_loss(&theta, data, &opts.sim);
    if final_eval.total < best.0 {
        best = (final_eval.total, theta.clone());
    }
    let params = decode(&best.1, &layout);
    Ok(FitReport {
        schema_version: SCHEMA_VERSION,
        preset: data.preset.name.clone(),
        epochs_run: losses.len(),
        final_loss: best.0,
        losses,
        relative_errors: rel,
        mass_ratios: mass_ratios(&params),
        theta: best.1,
        params,
    })
}

pub fn fit(data: &Dataset, init_seed: u64, opts: &FitOptions) -> Result<FitReport> {
    fit_with_progress(data, init_seed, opts, |_, _| {})
}

/// Learned against true value for one contact class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class: String,
    pub mu_learned: f64,
    pub mu_true: f64,
    pub e_learned: f64,
    pub e_true: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub preset: String,
    pub classes: Vec<ClassSummary>,
    pub mass_ratios_learned: Vec<f64>,
    pub mass_ratios_true: Vec<f64>,
    pub mean_relative_error: f64,
    pub relative_errors: Vec<f64>,
}

/// Compares `params` with the truth stored in `held_out` and measures the
/// relative window error on it.
pub fn evaluate(params: &PhysParams, held_out: &Dataset, sim: &SimOptions) -> Result<EvalReport> {
    let spec = &held_out.preset.spec;
    params.validate(spec)?;
    let truth = &held_out.preset.params;
    let loss = trajectory_loss_params(params, held_out, sim);
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        preset: held_out.preset.name.clone(),
        classes: spec
            .contact_classes
            .iter()
            .enumerate()
            .map(|(i, c)| ClassSummary {
                class: c.name.clone(),
                mu_learned: params.mu[i],
                mu_true: truth.mu[i],
                e_learned: params.e_p[i],
                e_true: truth.e_p[i],
            })
            .collect(),
        mass_ratios_learned: mass_ratios(params),
        mass_ratios_true: mass_ratios(truth),
        mean_relative_error: loss.mean_relative(),
        relative_errors: loss.relative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_dataset, DatasetOptions};
    use crate::systems::{bp5, cp3};

    fn small(p: crate::systems::Preset, n: usize) -> Dataset {
        let opts = DatasetOptions {
            n_traj: n,
            ..Default::default()
        };
        generate_dataset(&p, &opts, 3).unwrap()
    }

    #[test]
    fn decoder_examples() {
        let layout = ParamLayout {
            n_masses: 1,
            n_classes: 1,
            n_constants: 1,
        };
        let p = decode(&[0.0, -1.0, 0.0, 0.0], &layout);
        assert_eq!(p.masses, vec![1.0]);
        assert_eq!(p.mu, vec![0.0]);
        assert_eq!(p.e_p, vec![0.5]);
        assert_eq!(p.potential_constants, vec![1.0]);
        assert_eq!(decode(&[0.0, 0.3, 10.0, 0.0], &layout).e_p, vec![1.0]);
        assert_eq!(decode(&[0.0, 0.3, -10.0, 0.0], &layout).e_p, vec![0.0]);
    }

    #[test]
    fn encode_inverts_decode() {
        let p = cp3().params;
        let layout = ParamLayout::for_spec(&cp3().spec);
        let q = decode(&encode(&p), &layout);
        for (a, b) in q.masses.iter().zip(&p.masses) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(q.mu, p.mu);
        assert_eq!(q.e_p, p.e_p);
        assert!((q.potential_constants[0] - 9.8).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn decoder_range(theta in proptest::collection::vec(-64.0f64..64.0, 6)) {
            let layout = ParamLayout { n_masses: 2, n_classes: 1, n_constants: 2 };
            let p = decode(&theta, &layout);
            proptest::prop_assert!(p.mu[0] >= 0.0);
            proptest::prop_assert!((0.0..=1.0).contains(&p.e_p[0]));
            proptest::prop_assert!(p.masses.iter().all(|m| *m > 0.0));
        }
    }

    #[test]
    fn fd_gradient_examples() {
        let theta = [0.3, -1.2, 2.0];
        let g = fd_gradient(&theta, |t| t.iter().map(|a| a * a).sum());
        for (gi, ti) in g.iter().zip(&theta) {
            assert!((gi - 2.0 * ti).abs() < 1e-9);
        }
        assert_eq!(fd_gradient(&theta, |_| 4.0), vec![0.0; 3]);
    }

    #[test]
    fn adam_examples() {
        let mut a = AdamW::new(2, 1e-3, 0.0);
        let mut theta = vec![1.0, -1.0];
        a.step(&mut theta, &[0.0, 0.0]);
        assert_eq!(theta, vec![1.0, -1.0]);
        let mut a = AdamW::new(2, 1e-3, 0.0);
        a.step(&mut theta, &[5.0, -0.01]);
        // bias-corrected first step is lr · g/|g|
        assert!((theta[0] - (1.0 - 1e-3)).abs() < 1e-8);
        assert!((theta[1] - (-1.0 + 1e-3)).abs() < 1e-6);
        let mut a = AdamW::new(1, 1e-3, 0.0);
        let mut x = vec![0.0];
        for _ in 0..2000 {
            let g = [2.0 * (x[0] - 0.7)];
            a.step(&mut x, &g);
        }
        assert!((x[0] - 0.7).abs() <= 1e-3, "{}", x[0]);
    }

    #[test]
    fn loss_vanishes_at_truth() {
        let d = small(cp3(), 10);
        let theta = encode(&d.preset.params);
        let sim = SimOptions::default();
        let l = trajectory_loss(&theta, &d, &sim);
        let entries = d.chunks.len() * 4 * 12;
        assert!(l.total <= 1e-8 * entries as f64, "{}", l.total);
        assert!(l.relative.iter().all(|r| *r <= 1e-8));
        assert_eq!(l.failed, 0);
    }

    #[test]
    fn perturbed_mass_raises_loss() {
        let d = small(bp5(), 20);
        let sim = SimOptions::default();
        let truth = encode(&d.preset.params);
        let mut worse = truth.clone();
        worse[2] += 0.1f64.ln_1p();
        assert!(trajectory_loss(&worse, &d, &sim).total > trajectory_loss(&truth, &d, &sim).total);
    }

    #[test]
    fn selective_gradient_matches_plain_differences() {
        let d = small(cp3(), 12);
        let sim = SimOptions::default();
        let theta = initial_theta(&ParamLayout::for_spec(&d.preset.spec), 0, 0.01);
        let base = trajectory_loss(&theta, &d, &sim);
        let fast = loss_gradient(&theta, &base, &d, &sim);
        let plain = fd_gradient(&theta, |t| trajectory_loss(t, &d, &sim).total);
        for (a, b) in fast.iter().zip(&plain) {
            assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn mass_gradient_matches_secant_fit() {
        let d = small(bp5(), 8);
        let sim = SimOptions::default();
        let theta = {
            let mut t = encode(&d.preset.params);
            t[1] += 0.05;
            t
        };
        let g = fd_gradient(&theta, |t| trajectory_loss(t, &d, &sim).total)[1];
        // least-squares slope through five points around θ₁
        let h = 1e-4;
        let pts: Vec<(f64, f64)> = (-2..=2)
            .map(|k| {
                let mut t = theta.clone();
                t[1] += k as f64 * h;
                (k as f64 * h, trajectory_loss(&t, &d, &sim).total)
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 5.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 5.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((g - slope).abs() <= 1e-3 * slope.abs(), "{g} vs {slope}");
    }
}
