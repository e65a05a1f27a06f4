//! Static system descriptions, physical parameters, states and trajectories.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Coordinates and velocities of every point at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn new(x: Vec<f64>, v: Vec<f64>, t: f64) -> Self {
        State { x, v, t }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.v).all(|a| a.is_finite()) && self.t.is_finite()
    }

    /// `ambient`-dimensional position of point `i`.
    pub fn point<'a>(&'a self, i: usize, ambient: usize) -> &'a [f64] {
        &self.x[i * ambient..(i + 1) * ambient]
    }
}

/// How a body's mass is spread over its representation points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BodyKind {
    /// A single point carrying all of the mass.
    Point,
    /// A rigid body tracked by its centre of mass plus one unit axis tip per
    /// ambient dimension. `second_moments[j]` is `∫ρ a_j² / m`, the mass
    /// second moment along body axis `j` per unit mass.
    Extended { second_moments: Vec<f64> },
}

/// Collision geometry of a body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Circle (2D) or ball (3D) of the body radius around the first point.
    Round,
    /// Thin 3D disk of the body radius whose normal is body axis `axis`.
    Disk { axis: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyDescriptor {
    pub name: String,
    /// Indices of the points representing this body; the first one is the
    /// centre of mass.
    pub points: Vec<usize>,
    pub kind: BodyKind,
    pub shape: Shape,
    /// Geometry radius (m).
    pub radius: f64,
}

impl BodyDescriptor {
    pub fn com(&self) -> usize {
        self.points[0]
    }
}

/// Holonomic constraint expressed as a squared distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EqualityConstraint {
    /// `‖x_a − x_b‖² − length² = 0`
    Distance { a: usize, b: usize, length: f64 },
    /// `‖x_point − anchor‖² − length² = 0` for a fixed anchor.
    Anchor {
        point: usize,
        anchor: Vec<f64>,
        length: f64,
    },
}

/// A pair/plane/limit that may become an active contact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CandidateKind {
    /// Two bodies colliding with each other.
    BodyPair { a: usize, b: usize },
    /// A body against the half-space `normal · p ≥ offset`.
    BodyPlane {
        body: usize,
        normal: Vec<f64>,
        offset: f64,
    },
    /// Segment length between points `a` and `b` confined to
    /// `[min_ratio, max_ratio] · rest_length`.
    Stretch {
        a: usize,
        b: usize,
        rest_length: f64,
        min_ratio: f64,
        max_ratio: f64,
    },
    /// Turning angle at point `b` of the polyline `a → b → c` bounded by
    /// `max_angle` radians (2D only).
    Bend {
        a: usize,
        b: usize,
        c: usize,
        max_angle: f64,
    },
}

impl CandidateKind {
    pub fn is_limit(&self) -> bool {
        matches!(self, CandidateKind::Stretch { .. } | CandidateKind::Bend { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactCandidate {
    pub kind: CandidateKind,
    /// Index into [`SystemSpec::contact_classes`]; selects μ and e_P.
    pub class: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactClass {
    pub name: String,
    /// Number of steps over which penetration is removed.
    pub compensation_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    pub rest_length: f64,
}

/// Analytic potential family. Constants live in
/// [`PhysParams::potential_constants`]: gravity first (if enabled), then the
/// spring stiffness (if any springs exist).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub gravity: bool,
    #[serde(default)]
    pub springs: Vec<Spring>,
}

impl PotentialSpec {
    pub fn gravity_index(&self) -> Option<usize> {
        self.gravity.then_some(0)
    }

    pub fn stiffness_index(&self) -> Option<usize> {
        (!self.springs.is_empty()).then_some(usize::from(self.gravity))
    }

    pub fn n_constants(&self) -> usize {
        usize::from(self.gravity) + usize::from(!self.springs.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub name: String,
    /// 2 or 3.
    pub ambient_dim: usize,
    pub n_points: usize,
    pub bodies: Vec<BodyDescriptor>,
    pub equality_constraints: Vec<EqualityConstraint>,
    pub contact_candidates: Vec<ContactCandidate>,
    pub contact_classes: Vec<ContactClass>,
    pub potential: PotentialSpec,
    /// Integrator step (s).
    pub dt: f64,
}

impl SystemSpec {
    /// Coordinate dimension `D`.
    pub fn dim(&self) -> usize {
        self.n_points * self.ambient_dim
    }

    pub fn n_constraints(&self) -> usize {
        self.equality_constraints.len()
    }

    /// Stable content hash used to tag trajectories and datasets.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("{}: {m}", self.name)));
        if !(self.ambient_dim == 2 || self.ambient_dim == 3) {
            return bad(format!("ambient dimension {} not in {{2, 3}}", self.ambient_dim));
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive".into());
        }
        let d = self.dim();
        if self.n_constraints() >= d.max(1) {
            return bad(format!("{} constraints for {} coordinates", self.n_constraints(), d));
        }
        let mut owner = vec![None; self.n_points];
        for (bi, body) in self.bodies.iter().enumerate() {
            if body.points.is_empty() {
                return bad(format!("body {bi} has no points"));
            }
            for &p in &body.points {
                if p >= self.n_points {
                    return bad(format!("body {bi} references point {p}"));
                }
                if owner[p].replace(bi).is_some() {
                    return bad(format!("point {p} belongs to two bodies"));
                }
            }
            match &body.kind {
                BodyKind::Point if body.points.len() != 1 => {
                    return bad(format!("point body {bi} must have one point"))
                }
                BodyKind::Extended { second_moments }
                    if second_moments.len() != body.points.len() - 1
                        || body.points.len() != self.ambient_dim + 1
                        || second_moments.iter().any(|s| !(*s > 0.0)) =>
                {
                    return bad(format!("extended body {bi} is malformed"))
                }
                _ => {}
            }
            if let Shape::Disk { axis } = body.shape {
                if self.ambient_dim != 3 || axis >= self.ambient_dim || body.points.len() != 4 {
                    return bad(format!("disk shape on body {bi} needs a 3D extended body"));
                }
            }
        }
        if owner.iter().any(Option::is_none) {
            return bad("every point must belong to a body".into());
        }
        for c in &self.equality_constraints {
            let ok = match c {
                EqualityConstraint::Distance { a, b, length } => {
                    *a < self.n_points && *b < self.n_points && a != b && *length > 0.0
                }
                EqualityConstraint::Anchor { point, anchor, length } => {
                    *point < self.n_points && anchor.len() == self.ambient_dim && *length > 0.0
                }
            };
            if !ok {
                return bad(format!("invalid equality constraint {c:?}"));
            }
        }
        for (ci, c) in self.contact_candidates.iter().enumerate() {
            if c.class >= self.contact_classes.len() {
                return bad(format!("candidate {ci} uses unknown class {}", c.class));
            }
            let nb = self.bodies.len();
            let np = self.n_points;
            let ok = match &c.kind {
                CandidateKind::BodyPair { a, b } => *a < nb && *b < nb && a != b,
                CandidateKind::BodyPlane { body, normal, .. } => {
                    let n2: f64 = normal.iter().map(|x| x * x).sum();
                    *body < nb && normal.len() == self.ambient_dim && (n2 - 1.0).abs() < 1e-9
                }
                CandidateKind::Stretch { a, b, min_ratio, max_ratio, rest_length } => {
                    *a < np && *b < np && min_ratio < max_ratio && *rest_length > 0.0
                }
                CandidateKind::Bend { a, b, c, max_angle } => {
                    *a < np && *b < np && *c < np && self.ambient_dim == 2 && *max_angle > 0.0
                }
            };
            if !ok {
                return bad(format!("invalid contact candidate {ci}"));
            }
        }
        Ok(())
    }
}

/// Physical parameters: per-body masses, per-class friction and restitution,
/// and the potential constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub masses: Vec<f64>,
    pub mu: Vec<f64>,
    pub e_p: Vec<f64>,
    pub potential_constants: Vec<f64>,
}

impl PhysParams {
    pub fn validate(&self, spec: &SystemSpec) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.masses.len() != spec.bodies.len() {
            return bad("one mass per body required");
        }
        if self.mu.len() != spec.contact_classes.len() || self.e_p.len() != spec.contact_classes.len() {
            return bad("one (mu, e_p) pair per contact class required");
        }
        if self.potential_constants.len() != spec.potential.n_constants() {
            return bad("potential constant count does not match the potential");
        }
        if self.masses.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return bad("masses must be positive");
        }
        if self.mu.iter().any(|m| !(*m >= 0.0)) {
            return bad("friction coefficients must be nonnegative");
        }
        if self.e_p.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return bad("restitution coefficients must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn gravity(&self, spec: &SystemSpec) -> f64 {
        spec.potential
            .gravity_index()
            .map_or(0.0, |i| self.potential_constants[i])
    }

    pub fn stiffness(&self, spec: &SystemSpec) -> f64 {
        spec.potential
            .stiffness_index()
            .map_or(0.0, |i| self.potential_constants[i])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: Option<u64>,
    pub spec_hash: String,
}

/// Per recorded state: how many contacts were resolved and the deepest
/// penetration seen by collision detection at that state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub contacts: usize,
    pub max_penetration: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub events: Vec<StepEvent>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Checks strictly increasing, uniformly spaced times.
    pub fn check_times(&self, dt: f64) -> bool {
        self.states.windows(2).all(|w| {
            let step = w[1].t - w[0].t;
            step > 0.0 && (step - dt).abs() <= 1e-9 * dt.max(1.0) * (1.0 + w[1].t.abs())
        })
    }
}
