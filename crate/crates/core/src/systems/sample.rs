use std::f64::consts::PI;

use super::{detect_contacts, Preset, SamplerConfig};
use crate::dynamics::{constraint_jacobian, constraints, Dynamics, DynamicsMode};
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Vector};
use crate::model::{BodyKind, State};
use crate::rng::{normal, uniform, SimRng};

pub const MAX_ATTEMPTS: usize = 10_000;

/// Tolerance on `‖Φ‖∞` and `‖J_E v‖∞` for an accepted initial state.
pub const MANIFOLD_TOLERANCE: f64 = 1e-10;

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn draw_box(p: &Preset, rng: &mut SimRng, lo: f64, hi: f64, max_speed: f64, max_spin: f64) -> Result<State> {
    let spec = &p.spec;
    if spec.ambient_dim != 2 {
        return Err(Error::InvalidConfig("box sampler is 2D only".into()));
    }
    let mut x = vec![0.0; spec.dim()];
    let mut v = vec![0.0; spec.dim()];
    for b in &spec.bodies {
        let c = [uniform(rng, lo + b.radius, hi - b.radius), uniform(rng, lo + b.radius, hi - b.radius)];
        let heading = uniform(rng, 0.0, 2.0 * PI);
        let speed = uniform(rng, 0.0, max_speed);
        let vc = [speed * heading.cos(), speed * heading.sin()];
        let p0 = b.points[0];
        x[2 * p0..2 * p0 + 2].copy_from_slice(&c);
        v[2 * p0..2 * p0 + 2].copy_from_slice(&vc);
        if let BodyKind::Extended { .. } = b.kind {
            let th = uniform(rng, 0.0, 2.0 * PI);
            let om = uniform(rng, -max_spin, max_spin);
            for (k, &tip) in b.points[1..].iter().enumerate() {
                let ang = th + k as f64 * PI / 2.0;
                let u = [ang.cos(), ang.sin()];
                x[2 * tip] = c[0] + u[0];
                x[2 * tip + 1] = c[1] + u[1];
                v[2 * tip] = vc[0] - om * u[1];
                v[2 * tip + 1] = vc[1] + om * u[0];
            }
        }
    }
    Ok(State::new(x, v, 0.0))
}

fn draw_chain(rng: &mut SimRng, anchor: &[f64], lengths: &[f64], max_angle: f64, max_w: f64) -> State {
    let mut x = vec![];
    let mut v = vec![];
    let (mut p, mut q) = ([anchor[0], anchor[1]], [0.0, 0.0]);
    for &l in lengths {
        let th = uniform(rng, -max_angle, max_angle);
        let w = uniform(rng, -max_w, max_w);
        p = [p[0] + l * th.sin(), p[1] - l * th.cos()];
        q = [q[0] + l * w * th.cos(), q[1] + l * w * th.sin()];
        x.extend(p);
        v.extend(q);
    }
    State::new(x, v, 0.0)
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

#[allow(clippy::too_many_arguments)]
fn draw_gyroscope(
    p: &Preset,
    rng: &mut SimRng,
    pivot: &[f64],
    tether: f64,
    max_swing: f64,
    max_speed: f64,
    spin: [f64; 2],
    max_transverse: f64,
) -> State {
    let swing = uniform(rng, 0.0, max_swing);
    let phi = uniform(rng, 0.0, 2.0 * PI);
    let e = [swing.sin() * phi.cos(), swing.sin() * phi.sin(), -swing.cos()];
    let com: [f64; 3] = std::array::from_fn(|k| pivot[k] + tether * e[k]);
    // centre velocity tangent to the tether sphere
    let raw = [normal(rng), normal(rng), normal(rng)];
    let along = raw[0] * e[0] + raw[1] * e[1] + raw[2] * e[2];
    let dir = unit(std::array::from_fn(|k| raw[k] - along * e[k]));
    let speed = uniform(rng, 0.0, max_speed);
    // uniformly random orientation
    let axis = unit([normal(rng), normal(rng), normal(rng)]);
    let helper = if axis[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u1 = unit(cross(axis, helper));
    let u2 = cross(axis, u1);
    let ws = uniform(rng, spin[0], spin[1]);
    let (w1, w2) = (uniform(rng, -max_transverse, max_transverse), uniform(rng, -max_transverse, max_transverse));
    let omega: [f64; 3] = std::array::from_fn(|k| ws * axis[k] + w1 * u1[k] + w2 * u2[k]);
    let pts = &p.spec.bodies[0].points;
    let mut x = vec![0.0; p.spec.dim()];
    let mut v = vec![0.0; p.spec.dim()];
    for k in 0..3 {
        x[3 * pts[0] + k] = com[k];
        v[3 * pts[0] + k] = speed * dir[k];
    }
    for (j, u) in [u1, u2, axis].iter().enumerate() {
        let tip = pts[j + 1];
        let vel = cross(omega, *u);
        for k in 0..3 {
            x[3 * tip + k] = com[k] + u[k];
            v[3 * tip + k] = speed * dir[k] + vel[k];
        }
    }
    State::new(x, v, 0.0)
}

fn draw_rope(rng: &mut SimRng, n: usize, l0: f64, max_turn: f64, jitter: f64, sigma: f64) -> State {
    let mut x = vec![uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)];
    let mut heading = uniform(rng, 0.0, 2.0 * PI);
    for i in 1..n {
        if i > 1 {
            heading += uniform(rng, -max_turn, max_turn);
        }
        let l = l0 * (1.0 + uniform(rng, -jitter, jitter));
        let (px, py) = (x[2 * i - 2], x[2 * i - 1]);
        x.push(px + l * heading.cos());
        x.push(py + l * heading.sin());
    }
    let drift = [sigma * normal(rng), sigma * normal(rng)];
    let v = (0..2 * n).map(|k| drift[k % 2] + sigma * normal(rng)).collect();
    State::new(x, v, 0.0)
}

fn draw(p: &Preset, rng: &mut SimRng) -> Result<State> {
    match &p.sampler {
        SamplerConfig::Box { lo, hi, max_speed, max_spin } => draw_box(p, rng, *lo, *hi, *max_speed, *max_spin),
        SamplerConfig::Chain {
            anchor,
            lengths,
            max_angle,
            max_angular_speed,
        } => Ok(draw_chain(rng, anchor, lengths, *max_angle, *max_angular_speed)),
        SamplerConfig::Gyroscope {
            pivot,
            tether,
            max_swing,
            max_speed,
            spin,
            max_transverse,
        } => Ok(draw_gyroscope(
            p,
            rng,
            pivot,
            *tether,
            *max_swing,
            *max_speed,
            *spin,
            *max_transverse,
        )),
        SamplerConfig::Rope {
            rest_length,
            max_turn,
            stretch_jitter,
            velocity_sigma,
        } => Ok(draw_rope(
            rng,
            p.spec.n_points,
            *rest_length,
            *max_turn,
            *stretch_jitter,
            *velocity_sigma,
        )),
        SamplerConfig::Fixed { state } => Ok(state.clone()),
    }
}

/// Draws a contact-free initial state on the constraint manifold. The
/// result depends only on the preset and the generator state.
pub fn sample_initial_condition(p: &Preset, rng: &mut SimRng) -> Result<State> {
    let dynamics = Dynamics::new(&p.spec, &p.params, DynamicsMode::Lagrangian)?;
    let mut last = String::from("no attempt made");
    for _ in 0..MAX_ATTEMPTS {
        let mut s = draw(p, rng)?;
        if let Err(e) = dynamics.project_to_manifold(&mut s.x, &mut s.v) {
            last = e.to_string();
            continue;
        }
        let phi = constraints(&p.spec, &s.x);
        let jv = constraint_jacobian(&p.spec, &s.x) * Vector::from_column_slice(&s.v);
        if inf_norm(phi.as_slice()) > MANIFOLD_TOLERANCE || inf_norm(jv.as_slice()) > MANIFOLD_TOLERANCE {
            last = "constraint residual above tolerance".into();
            continue;
        }
        let contacts = detect_contacts(&p.spec, &s.x);
        if !contacts.is_empty() {
            last = format!("{} active contacts", contacts.len());
            if matches!(p.sampler, SamplerConfig::Fixed { .. }) {
                break;
            }
            continue;
        }
        return Ok(s);
    }
    Err(Error::SamplingExhausted {
        attempts: MAX_ATTEMPTS,
        reason: last,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use crate::systems::{build_preset, rope, PRESET_NAMES};

    #[test]
    fn samples_are_contact_free_and_on_manifold() {
        for name in PRESET_NAMES {
            let p = build_preset(name).unwrap();
            let mut rng = seeded_rng(7);
            for _ in 0..20 {
                let s = sample_initial_condition(&p, &mut rng).unwrap();
                assert!(detect_contacts(&p.spec, &s.x).is_empty(), "{name}");
                let phi = constraints(&p.spec, &s.x);
                assert!(inf_norm(phi.as_slice()) <= MANIFOLD_TOLERANCE, "{name}");
                let jv = constraint_jacobian(&p.spec, &s.x) * Vector::from_column_slice(&s.v);
                assert!(inf_norm(jv.as_slice()) <= MANIFOLD_TOLERANCE, "{name}");
            }
        }
    }

    #[test]
    fn deterministic_by_seed() {
        let p = build_preset("BD5").unwrap();
        let a = sample_initial_condition(&p, &mut seeded_rng(3)).unwrap();
        let b = sample_initial_condition(&p, &mut seeded_rng(3)).unwrap();
        let c = sample_initial_condition(&p, &mut seeded_rng(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn long_rope_samples() {
        let p = rope(200).unwrap();
        let s = sample_initial_condition(&p, &mut seeded_rng(1)).unwrap();
        assert_eq!(s.x.len(), 400);
    }

    #[test]
    fn impossible_box_is_reported() {
        let mut p = build_preset("BP5-e").unwrap();
        p.sampler = SamplerConfig::Box {
            lo: 0.0,
            hi: 0.25,
            max_speed: 1.0,
            max_spin: 0.0,
        };
        assert!(matches!(
            sample_initial_condition(&p, &mut seeded_rng(0)),
            Err(Error::SamplingExhausted { .. })
        ));
    }
}
