//! Benchmark systems: bouncing point masses, bouncing disks, chained
//! pendulums over the ground, a gyroscope near a wall and a rope, plus the
//! scenes used by the planning tasks.

mod detect;
mod sample;

use serde::{Deserialize, Serialize};

pub use detect::detect_contacts;
pub use sample::sample_initial_condition;

use crate::error::{Error, Result};
use crate::model::{
    BodyDescriptor, BodyKind, CandidateKind, ContactCandidate, ContactClass, EqualityConstraint, PhysParams,
    PotentialSpec, Shape, Spring, State, SystemSpec,
};

/// How random initial conditions are drawn for a preset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SamplerConfig {
    /// Bodies placed uniformly inside an axis-aligned box.
    Box {
        lo: f64,
        hi: f64,
        max_speed: f64,
        max_spin: f64,
    },
    /// Chain hanging from `anchor`; each link's angle from the downward
    /// vertical is uniform in `±max_angle`.
    Chain {
        anchor: Vec<f64>,
        lengths: Vec<f64>,
        max_angle: f64,
        max_angular_speed: f64,
    },
    /// Spinning disk whose centre swings on a tether below `pivot`: swing
    /// angle from the downward vertical up to `max_swing`, centre speed up
    /// to `max_speed`, spin about the symmetry axis in `spin` and transverse
    /// angular velocity components up to `max_transverse`.
    Gyroscope {
        pivot: Vec<f64>,
        tether: f64,
        max_swing: f64,
        max_speed: f64,
        spin: [f64; 2],
        max_transverse: f64,
    },
    /// Polyline with jittered segment lengths and turning angles.
    Rope {
        rest_length: f64,
        max_turn: f64,
        stretch_jitter: f64,
        velocity_sigma: f64,
    },
    /// A fixed state (planning scenes).
    Fixed { state: State },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub spec: SystemSpec,
    pub params: PhysParams,
    pub sampler: SamplerConfig,
}

impl Preset {
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.params.validate(&self.spec)
    }
}

pub const GRAVITY: f64 = 9.8;
pub const DT: f64 = 0.01;

/// Steps over which penetration is pushed out, for every contact class.
/// A one-step horizon makes inelastic contacts bounce, and on elastic
/// contacts it can ask for a separation speed above the rebound (glancing
/// pair impacts), which adds energy.
pub const COMPENSATION_STEPS: usize = 4;

fn class(name: &str) -> ContactClass {
    ContactClass {
        name: name.into(),
        compensation_steps: COMPENSATION_STEPS,
    }
}

fn point_body(name: String, point: usize, radius: f64) -> BodyDescriptor {
    BodyDescriptor {
        name,
        points: vec![point],
        kind: BodyKind::Point,
        shape: Shape::Round,
        radius,
    }
}

/// Rigidity constraints among a centre point and unit axis tips.
fn rigid_constraints(points: &[usize]) -> Vec<EqualityConstraint> {
    let mut out = vec![];
    for &tip in &points[1..] {
        out.push(EqualityConstraint::Distance {
            a: points[0],
            b: tip,
            length: 1.0,
        });
    }
    for i in 1..points.len() {
        for j in (i + 1)..points.len() {
            out.push(EqualityConstraint::Distance {
                a: points[i],
                b: points[j],
                length: std::f64::consts::SQRT_2,
            });
        }
    }
    out
}

fn box_walls(body: usize, lo: f64, hi: f64, class: usize) -> Vec<ContactCandidate> {
    let planes = [
        (vec![1.0, 0.0], lo),
        (vec![-1.0, 0.0], -hi),
        (vec![0.0, 1.0], lo),
        (vec![0.0, -1.0], -hi),
    ];
    planes
        .into_iter()
        .map(|(normal, offset)| ContactCandidate {
            kind: CandidateKind::BodyPlane { body, normal, offset },
            class,
        })
        .collect()
}

fn all_pairs(n: usize, class: usize) -> Vec<ContactCandidate> {
    let mut out = vec![];
    for a in 0..n {
        for b in (a + 1)..n {
            out.push(ContactCandidate {
                kind: CandidateKind::BodyPair { a, b },
                class,
            });
        }
    }
    out
}

/// Point masses bouncing inside the unit box without gravity. `classes`
/// is `(ball–ball, ball–wall)`; pass the same index twice for one class.
fn bouncing_points(name: &str, masses: &[f64], radii: &[f64], classes: Vec<(ContactClass, f64, f64)>, pair_class: usize, wall_class: usize) -> Preset {
    let n = masses.len();
    let mut candidates = all_pairs(n, pair_class);
    for b in 0..n {
        candidates.extend(box_walls(b, 0.0, 1.0, wall_class));
    }
    let spec = SystemSpec {
        name: name.into(),
        ambient_dim: 2,
        n_points: n,
        bodies: (0..n).map(|i| point_body(format!("ball{}", i + 1), i, radii[i])).collect(),
        equality_constraints: vec![],
        contact_candidates: candidates,
        contact_classes: classes.iter().map(|c| c.0.clone()).collect(),
        potential: PotentialSpec::default(),
        dt: DT,
    };
    let params = PhysParams {
        masses: masses.to_vec(),
        mu: classes.iter().map(|c| c.1).collect(),
        e_p: classes.iter().map(|c| c.2).collect(),
        potential_constants: vec![],
    };
    Preset {
        name: name.into(),
        description: String::new(),
        spec,
        params,
        sampler: SamplerConfig::Box {
            lo: 0.0,
            hi: 1.0,
            max_speed: 1.0,
            max_spin: 0.0,
        },
    }
}

pub fn bp5_elastic() -> Preset {
    let mut p = bouncing_points("BP5-e", &[1.0; 5], &[0.1; 5], vec![(class("contact"), 0.0, 1.0)], 0, 0);
    p.description = "Five identical point masses in a unit box; elastic, frictionless contacts.".into();
    p
}

/// Radii drawn once from a seeded uniform generator on [0.06, 0.14] and
/// frozen.
pub const BP5_RADII: [f64; 5] = [0.0731, 0.1162, 0.0894, 0.1287, 0.1035];

pub fn bp5() -> Preset {
    let mut p = bouncing_points(
        "BP5",
        &[1.0, 2.0, 6.0, 8.0, 10.0],
        &BP5_RADII,
        vec![(class("ball-ball"), 0.1, 0.9), (class("ball-wall"), 0.2, 0.7)],
        0,
        1,
    );
    p.description = "Five heterogeneous point masses in a unit box; ball-ball and ball-wall contacts differ.".into();
    p
}

/// Disk radii and masses of the bouncing-disk preset.
pub const BD5_RADII: [f64; 5] = [0.085, 0.11, 0.095, 0.12, 0.1];
pub const BD5_MASSES: [f64; 5] = [1.0, 1.8, 1.3, 2.4, 1.6];

pub fn bd5() -> Preset {
    let n = 5;
    let mut bodies = vec![];
    let mut eq = vec![];
    for i in 0..n {
        let pts = vec![3 * i, 3 * i + 1, 3 * i + 2];
        let r = BD5_RADII[i];
        eq.extend(rigid_constraints(&pts));
        bodies.push(BodyDescriptor {
            name: format!("disk{}", i + 1),
            points: pts,
            kind: BodyKind::Extended {
                second_moments: vec![r * r / 4.0, r * r / 4.0],
            },
            shape: Shape::Round,
            radius: r,
        });
    }
    let mut candidates = all_pairs(n, 0);
    for b in 0..n {
        candidates.extend(box_walls(b, 0.0, 1.0, 1));
    }
    let spec = SystemSpec {
        name: "BD5".into(),
        ambient_dim: 2,
        n_points: 3 * n,
        bodies,
        equality_constraints: eq,
        contact_candidates: candidates,
        contact_classes: vec![class("disk-disk"), class("disk-wall")],
        potential: PotentialSpec::default(),
        dt: DT,
    };
    let params = PhysParams {
        masses: BD5_MASSES.to_vec(),
        mu: vec![0.15, 0.3],
        e_p: vec![0.8, 0.6],
        potential_constants: vec![],
    };
    Preset {
        name: "BD5".into(),
        description: "Five rotating disks in a unit box with frictional contacts.".into(),
        spec,
        params,
        sampler: SamplerConfig::Box {
            lo: 0.0,
            hi: 1.0,
            max_speed: 1.0,
            max_spin: 6.0,
        },
    }
}

/// Joint radii of the chained pendulum; only the last one meets the ground.
pub const CP3_RADII: [f64; 3] = [0.1, 0.15, 0.2];
pub const CP3_GROUND: f64 = -2.5;

pub const CHAIN_MAX_ANGLE: f64 = 1.0;
pub const CHAIN_MAX_ANGULAR_SPEED: f64 = 1.0;

fn chain(name: &str, masses: [f64; 3], mu: f64, e: f64) -> Preset {
    let n = 3;
    let mut eq = vec![EqualityConstraint::Anchor {
        point: 0,
        anchor: vec![0.0, 0.0],
        length: 1.0,
    }];
    for i in 1..n {
        eq.push(EqualityConstraint::Distance {
            a: i - 1,
            b: i,
            length: 1.0,
        });
    }
    let spec = SystemSpec {
        name: name.into(),
        ambient_dim: 2,
        n_points: n,
        bodies: (0..n).map(|i| point_body(format!("joint{}", i + 1), i, CP3_RADII[i])).collect(),
        equality_constraints: eq,
        contact_candidates: vec![ContactCandidate {
            kind: CandidateKind::BodyPlane {
                body: n - 1,
                normal: vec![0.0, 1.0],
                offset: CP3_GROUND,
            },
            class: 0,
        }],
        contact_classes: vec![class("ground")],
        potential: PotentialSpec {
            gravity: true,
            springs: vec![],
        },
        dt: DT,
    };
    Preset {
        name: name.into(),
        description: String::new(),
        spec,
        params: PhysParams {
            masses: masses.to_vec(),
            mu: vec![mu],
            e_p: vec![e],
            potential_constants: vec![GRAVITY],
        },
        sampler: SamplerConfig::Chain {
            anchor: vec![0.0, 0.0],
            lengths: vec![1.0; n],
            max_angle: CHAIN_MAX_ANGLE,
            max_angular_speed: CHAIN_MAX_ANGULAR_SPEED,
        },
    }
}

pub fn cp3_elastic() -> Preset {
    let mut p = chain("CP3-e", [1.0, 2.0, 1.5], 0.0, 1.0);
    p.description = "Three-link pendulum whose last joint bounces elastically on the ground.".into();
    p
}

pub fn cp3() -> Preset {
    let mut p = chain("CP3", [1.0, 0.65, 0.75], 0.5, 0.0);
    p.description = "Three-link pendulum whose last joint hits frictional, inelastic ground.".into();
    p
}

pub const GYRO_RADIUS: f64 = 0.5;
pub const GYRO_AXIAL_MOMENT: f64 = 0.01;
pub const GYRO_TETHER: f64 = 1.0;
pub const GYRO_WALL: f64 = 0.5;

fn gyroscope(name: &str, mu: f64, e: f64) -> Preset {
    let pts = vec![0, 1, 2, 3];
    let mut eq = rigid_constraints(&pts);
    eq.push(EqualityConstraint::Anchor {
        point: 0,
        anchor: vec![0.0, 0.0, 0.0],
        length: GYRO_TETHER,
    });
    let r = GYRO_RADIUS;
    let spec = SystemSpec {
        name: name.into(),
        ambient_dim: 3,
        n_points: 4,
        bodies: vec![BodyDescriptor {
            name: "top".into(),
            points: pts,
            kind: BodyKind::Extended {
                second_moments: vec![r * r / 4.0, r * r / 4.0, GYRO_AXIAL_MOMENT],
            },
            shape: Shape::Disk { axis: 2 },
            radius: r,
        }],
        equality_constraints: eq,
        contact_candidates: vec![ContactCandidate {
            kind: CandidateKind::BodyPlane {
                body: 0,
                normal: vec![-1.0, 0.0, 0.0],
                offset: -GYRO_WALL,
            },
            class: 0,
        }],
        contact_classes: vec![class("wall")],
        potential: PotentialSpec {
            gravity: true,
            springs: vec![],
        },
        dt: DT,
    };
    Preset {
        name: name.into(),
        description: String::new(),
        spec,
        params: PhysParams {
            masses: vec![1.0],
            mu: vec![mu],
            e_p: vec![e],
            potential_constants: vec![GRAVITY],
        },
        sampler: SamplerConfig::Gyroscope {
            pivot: vec![0.0, 0.0, 0.0],
            tether: GYRO_TETHER,
            max_swing: 1.0,
            max_speed: 2.0,
            spin: [5.0, 10.0],
            max_transverse: 1.0,
        },
    }
}

pub fn gyro_elastic() -> Preset {
    let mut p = gyroscope("Gyro-e", 0.0, 1.0);
    p.description = "Spinning disk on a tether next to a wall; elastic, frictionless wall.".into();
    p
}

pub fn gyro() -> Preset {
    let mut p = gyroscope("Gyro", 0.1, 0.8);
    p.description = "Spinning disk on a tether next to a wall with friction and partial restitution.".into();
    p
}

pub const ROPE_STIFFNESS: f64 = 100.0;

/// Rope of `n` points (n ≥ 3) with stretch and bend limits.
pub fn rope(n: usize) -> Result<Preset> {
    if !(3..=200).contains(&n) {
        return Err(Error::InvalidConfig(format!("rope needs 3..=200 points, got {n}")));
    }
    let l0 = 1.0 / (n - 1) as f64;
    let mut candidates = vec![];
    let mut springs = vec![];
    for i in 0..n - 1 {
        springs.push(Spring {
            a: i,
            b: i + 1,
            rest_length: l0,
        });
        candidates.push(ContactCandidate {
            kind: CandidateKind::Stretch {
                a: i,
                b: i + 1,
                rest_length: l0,
                min_ratio: 0.8,
                max_ratio: 1.2,
            },
            class: 0,
        });
    }
    for i in 1..n - 1 {
        candidates.push(ContactCandidate {
            kind: CandidateKind::Bend {
                a: i - 1,
                b: i,
                c: i + 1,
                max_angle: 0.2,
            },
            class: 0,
        });
    }
    let spec = SystemSpec {
        name: "Rope".into(),
        ambient_dim: 2,
        n_points: n,
        bodies: (0..n).map(|i| point_body(format!("node{}", i + 1), i, 0.0)).collect(),
        equality_constraints: vec![],
        contact_candidates: candidates,
        contact_classes: vec![class("limit")],
        potential: PotentialSpec { gravity: true, springs },
        dt: DT,
    };
    Ok(Preset {
        name: "Rope".into(),
        description: format!("Rope of {n} nodes joined by springs with stretch and bend limits."),
        spec,
        params: PhysParams {
            masses: vec![1.0 / n as f64; n],
            mu: vec![0.0],
            e_p: vec![0.0],
            potential_constants: vec![GRAVITY, ROPE_STIFFNESS],
        },
        sampler: SamplerConfig::Rope {
            rest_length: l0,
            max_turn: 0.15,
            stretch_jitter: 0.1,
            velocity_sigma: 0.3,
        },
    })
}

pub const BILLIARD_RADIUS: f64 = 0.05;

/// Cue ball and object ball on an open table.
pub fn billiards() -> Preset {
    let mut p = bouncing_points(
        "Billiards",
        &[1.0, 1.0],
        &[BILLIARD_RADIUS; 2],
        vec![(class("ball"), 0.0, 1.0)],
        0,
        0,
    );
    p.spec.contact_candidates.retain(|c| matches!(c.kind, CandidateKind::BodyPair { .. }));
    p.description = "Cue ball and object ball on an open table.".into();
    p.sampler = SamplerConfig::Fixed {
        state: State::new(vec![0.1, 0.5, 0.5, 0.52], vec![1.0, 0.0, 0.0, 0.0], 0.0),
    };
    p
}

pub const THROW_RADIUS: f64 = 0.1;

/// A disk thrown over frictional ground.
pub fn throw() -> Preset {
    let pts = vec![0, 1, 2];
    let r = THROW_RADIUS;
    let spec = SystemSpec {
        name: "Throw".into(),
        ambient_dim: 2,
        n_points: 3,
        bodies: vec![BodyDescriptor {
            name: "disk".into(),
            points: pts.clone(),
            kind: BodyKind::Extended {
                second_moments: vec![r * r / 4.0, r * r / 4.0],
            },
            shape: Shape::Round,
            radius: r,
        }],
        equality_constraints: rigid_constraints(&pts),
        contact_candidates: vec![ContactCandidate {
            kind: CandidateKind::BodyPlane {
                body: 0,
                normal: vec![0.0, 1.0],
                offset: 0.0,
            },
            class: 0,
        }],
        contact_classes: vec![class("ground")],
        potential: PotentialSpec {
            gravity: true,
            springs: vec![],
        },
        dt: DT,
    };
    Preset {
        name: "Throw".into(),
        description: "Disk thrown onto frictional ground.".into(),
        spec,
        params: PhysParams {
            masses: vec![1.0],
            mu: vec![0.5],
            e_p: vec![0.5],
            potential_constants: vec![GRAVITY],
        },
        sampler: SamplerConfig::Fixed {
            state: State::new(vec![0.0, 1.0, 1.0, 1.0, 0.0, 2.0], vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0], 0.0),
        },
    }
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: [&str; 10] = [
    "BP5-e", "BP5", "CP3-e", "CP3", "BD5", "Rope", "Gyro-e", "Gyro", "Billiards", "Throw",
];

/// Builds a preset from code.
pub fn build_preset(name: &str) -> Result<Preset> {
    match name {
        "BP5-e" => Ok(bp5_elastic()),
        "BP5" => Ok(bp5()),
        "CP3-e" => Ok(cp3_elastic()),
        "CP3" => Ok(cp3()),
        "BD5" => Ok(bd5()),
        "Rope" => rope(10),
        "Gyro-e" => Ok(gyro_elastic()),
        "Gyro" => Ok(gyro()),
        "Billiards" => Ok(billiards()),
        "Throw" => Ok(throw()),
        _ => Err(Error::UnknownPreset {
            name: name.into(),
            available: PRESET_NAMES.join(", "),
        }),
    }
}

/// File name of a preset inside the `presets/` directory.
pub fn preset_file_name(name: &str) -> String {
    format!("{}.json", name.to_lowercase())
}

const SHIPPED: [(&str, &str); 10] = [
    ("BP5-e", include_str!("../../../../presets/bp5-e.json")),
    ("BP5", include_str!("../../../../presets/bp5.json")),
    ("CP3-e", include_str!("../../../../presets/cp3-e.json")),
    ("CP3", include_str!("../../../../presets/cp3.json")),
    ("BD5", include_str!("../../../../presets/bd5.json")),
    ("Rope", include_str!("../../../../presets/rope.json")),
    ("Gyro-e", include_str!("../../../../presets/gyro-e.json")),
    ("Gyro", include_str!("../../../../presets/gyro.json")),
    ("Billiards", include_str!("../../../../presets/billiards.json")),
    ("Throw", include_str!("../../../../presets/throw.json")),
];

/// Loads a preset from the JSON documents shipped in `presets/`.
pub fn preset(name: &str) -> Result<Preset> {
    let text = SHIPPED
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, t)| *t)
        .ok_or_else(|| Error::UnknownPreset {
            name: name.into(),
            available: PRESET_NAMES.join(", "),
        })?;
    parse_preset(text)
}

/// Parses and validates a preset JSON document.
pub fn parse_preset(text: &str) -> Result<Preset> {
    let p: Preset = serde_json::from_str(text)?;
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_dimensions() {
        let dims = |p: Preset| (p.spec.dim(), p.spec.n_constraints());
        assert_eq!(dims(bp5()), (10, 0));
        assert_eq!(dims(bp5_elastic()), (10, 0));
        assert_eq!(dims(cp3()), (6, 3));
        assert_eq!(dims(cp3_elastic()), (6, 3));
        assert_eq!(dims(bd5()), (30, 15));
        assert_eq!(dims(gyro()), (12, 7));
        assert_eq!(dims(gyro_elastic()), (12, 7));
        assert_eq!(dims(rope(200).unwrap()), (400, 0));
        assert_eq!(rope(200).unwrap().spec.contact_candidates.len(), 199 + 198);
    }

    #[test]
    fn ground_truth_contact_parameters() {
        let cp = |p: Preset| (p.params.mu[0], p.params.e_p[0]);
        assert_eq!(cp(cp3()), (0.5, 0.0));
        assert_eq!(cp(cp3_elastic()), (0.0, 1.0));
        assert_eq!(cp(gyro()), (0.1, 0.8));
        assert_eq!(cp(gyro_elastic()), (0.0, 1.0));
        assert_eq!(cp(bp5_elastic()), (0.0, 1.0));
        assert_eq!(cp(rope(10).unwrap()), (0.0, 0.0));
        let m = bp5().params.masses;
        let ratios: Vec<f64> = m[1..].iter().map(|x| x / m[0]).collect();
        assert_eq!(ratios, vec![2.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn every_builder_validates() {
        for name in PRESET_NAMES {
            build_preset(name).unwrap().validate().unwrap();
        }
        assert!(rope(2).is_err());
        assert!(matches!(build_preset("nope"), Err(Error::UnknownPreset { .. })));
    }

    #[test]
    fn shipped_files_match_builders() {
        for name in PRESET_NAMES {
            assert_eq!(preset(name).unwrap(), build_preset(name).unwrap(), "{name}: regenerate presets/");
        }
        assert_eq!(preset("cp3").unwrap().name, "CP3");
    }

    #[test]
    fn compensation_defaults() {
        assert_eq!(cp3().spec.contact_classes[0].compensation_steps, 4);
        assert_eq!(gyro().spec.contact_classes[0].compensation_steps, 4);
        assert_eq!(bp5_elastic().spec.contact_classes[0].compensation_steps, 4);
    }
}

#[cfg(test)]
mod regenerate {
    use super::*;

    /// `cargo test -p diffcontact -- --ignored regenerate_shipped_presets`
    #[test]
    #[ignore]
    fn regenerate_shipped_presets() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
        for name in PRESET_NAMES {
            let text = serde_json::to_string_pretty(&build_preset(name).unwrap()).unwrap();
            std::fs::write(dir.join(preset_file_name(name)), text + "\n").unwrap();
        }
    }
}
