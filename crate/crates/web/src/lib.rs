//! WebAssembly bindings for the browser demo. Every function returns a JSON
//! scene: body geometry, walls, links and one position vector per frame.

use diffcontact::model::{BodyKind, CandidateKind, EqualityConstraint, PhysParams, SystemSpec, Trajectory};
use diffcontact::plan::{plan, rollout, PlanOptions, PlanTask};
use diffcontact::rng::seeded_rng;
use diffcontact::sim::{energies, simulate, SimOptions};
use diffcontact::systems::{preset, sample_initial_condition, PRESET_NAMES};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Body {
    radius: f64,
    com: usize,
    /// First axis tip of an extended body, drawn to show its rotation.
    tip: Option<usize>,
}

#[derive(Serialize)]
struct Scene {
    name: String,
    dt: f64,
    bodies: Vec<Body>,
    /// `(normal, offset)` of each half-space wall.
    walls: Vec<(Vec<f64>, f64)>,
    /// Point pairs joined by a rod; an anchor is encoded as `None`.
    links: Vec<(Option<usize>, usize, Option<Vec<f64>>)>,
    frames: Vec<Vec<f64>>,
    energy: Vec<f64>,
    /// Planner output; empty for plain simulations.
    decision: Vec<f64>,
    losses: Vec<f64>,
}

fn scene(spec: &SystemSpec, params: &PhysParams, traj: &Trajectory) -> Result<Scene, JsValue> {
    let mut walls = vec![];
    for c in &spec.contact_candidates {
        if let CandidateKind::BodyPlane { normal, offset, .. } = &c.kind {
            if !walls.iter().any(|(n, o): &(Vec<f64>, f64)| n == normal && o == offset) {
                walls.push((normal.clone(), *offset));
            }
        }
    }
    let links = spec
        .equality_constraints
        .iter()
        .map(|c| match c {
            EqualityConstraint::Distance { a, b, .. } => (Some(*a), *b, None),
            EqualityConstraint::Anchor { point, anchor, .. } => (None, *point, Some(anchor.clone())),
        })
        .collect();
    Ok(Scene {
        name: spec.name.clone(),
        dt: spec.dt,
        bodies: spec
            .bodies
            .iter()
            .map(|b| Body {
                radius: b.radius,
                com: b.com(),
                tip: match b.kind {
                    BodyKind::Extended { .. } => b.points.get(1).copied(),
                    BodyKind::Point => None,
                },
            })
            .collect(),
        walls,
        links,
        frames: traj.states.iter().map(|s| s.x.clone()).collect(),
        energy: energies(spec, params, traj).map_err(err)?,
        decision: vec![],
        losses: vec![],
    })
}

fn err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json(s: &Scene) -> Result<String, JsValue> {
    serde_json::to_string(s).map_err(err)
}

/// Names of the planar presets, as a JSON array.
#[wasm_bindgen]
pub fn planar_presets() -> String {
    let names: Vec<&str> = PRESET_NAMES
        .iter()
        .copied()
        .filter(|n| preset(n).is_ok_and(|p| p.spec.ambient_dim == 2))
        .collect();
    serde_json::to_string(&names).unwrap_or_default()
}

/// Simulates `steps` steps of a preset from the initial condition drawn with
/// `seed`. Negative `mu` or `restitution` keeps the preset's values;
/// otherwise they replace every class's coefficient.
#[wasm_bindgen]
pub fn simulate_preset(name: &str, seed: u32, steps: u32, mu: f64, restitution: f64) -> Result<String, JsValue> {
    let p = preset(name).map_err(err)?;
    let mut params = p.params.clone();
    if mu >= 0.0 {
        params.mu.iter_mut().for_each(|m| *m = mu);
    }
    if restitution >= 0.0 {
        params.e_p.iter_mut().for_each(|e| *e = restitution.min(1.0));
    }
    let s0 = sample_initial_condition(&p, &mut seeded_rng(seed as u64)).map_err(err)?;
    let opts = SimOptions {
        dt: p.spec.dt,
        n_steps: steps as usize,
        ..Default::default()
    };
    let traj = simulate(&p.spec, &params, &s0, &opts).map_err(err)?;
    to_json(&scene(&p.spec, &params, &traj)?)
}

/// Plans the cue ball velocity that leaves the object ball at `(tx, ty)`
/// and returns the resulting shot.
#[wasm_bindgen]
pub fn plan_billiards(tx: f64, ty: f64, iters: u32) -> Result<String, JsValue> {
    let mut task = PlanTask::billiards();
    task.target = vec![tx, ty];
    let p = task.preset();
    let opts = PlanOptions {
        iters: iters.max(1) as usize,
        ..Default::default()
    };
    let report = plan(&task, &p.params, &task.default_decision(), &opts).map_err(err)?;
    let traj = rollout(&task, &report.decision, &p.spec, &p.params, &opts.sim).map_err(err)?;
    let mut s = scene(&p.spec, &p.params, &traj)?;
    s.decision = report.decision;
    s.losses = report.losses;
    to_json(&s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_list_skips_the_gyroscope() {
        let names: Vec<String> = serde_json::from_str(&planar_presets()).unwrap();
        assert!(names.contains(&"BP5".to_string()));
        assert!(!names.iter().any(|n| n.starts_with("Gyro")));
    }

    #[test]
    fn scene_has_one_frame_per_state() {
        let s: serde_json::Value = serde_json::from_str(&simulate_preset("CP3", 1, 20, -1.0, -1.0).unwrap()).unwrap();
        assert_eq!(s["frames"].as_array().unwrap().len(), 21);
        assert_eq!(s["bodies"].as_array().unwrap().len(), 3);
        assert_eq!(s["links"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn plan_reports_losses() {
        let s: serde_json::Value = serde_json::from_str(&plan_billiards(1.5, 1.0, 2).unwrap()).unwrap();
        assert_eq!(s["losses"].as_array().unwrap().len(), 3);
        assert_eq!(s["decision"].as_array().unwrap().len(), 2);
    }
}
