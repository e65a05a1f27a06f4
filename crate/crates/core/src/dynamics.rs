//! Smooth dynamics between contacts: mass matrix, potential, holonomic
//! constraints and the two constrained vector fields, integrated with RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, inf_norm, solve_spd, Mat, Vector};
use crate::model::{BodyKind, EqualityConstraint, PhysParams, State, SystemSpec};

/// Which constrained formulation drives the smooth part of the motion.
/// The Hamiltonian form keeps both position and velocity constraints in its
/// multipliers and drifts off the manifold far less under RK4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsMode {
    Lagrangian,
    #[default]
    Hamiltonian,
}

#[derive(Clone, Debug)]
struct MassBlock {
    points: Vec<usize>,
    k: Mat,
    k_inv: Mat,
    /// Lower Cholesky factor of `k_inv`.
    l_inv: Mat,
}

/// Block-diagonal mass matrix. Each body contributes a small point-level
/// block `K` and the full block is `K ⊗ I_ambient`.
#[derive(Clone, Debug)]
pub struct MassMatrix {
    dim: usize,
    ambient: usize,
    blocks: Vec<MassBlock>,
}

/// Point-level mass block of a body with total mass `m`.
///
/// Kinetic energy of an extended body is `½m|v₀|² + ½Σ mⱼ|vⱼ − v₀|²` with
/// `mⱼ = m·sⱼ`; expanding gives the coupling terms below.
fn point_block(kind: &BodyKind, m: f64) -> Mat {
    match kind {
        BodyKind::Point => Mat::from_element(1, 1, m),
        BodyKind::Extended { second_moments } => {
            let k = second_moments.len() + 1;
            let mut b = Mat::zeros(k, k);
            b[(0, 0)] = m;
            for (j, s) in second_moments.iter().enumerate() {
                let mj = m * s;
                b[(0, 0)] += mj;
                b[(0, j + 1)] = -mj;
                b[(j + 1, 0)] = -mj;
                b[(j + 1, j + 1)] = mj;
            }
            b
        }
    }
}

impl MassMatrix {
    pub fn new(spec: &SystemSpec, params: &PhysParams) -> Result<Self> {
        if params.masses.len() != spec.bodies.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} masses for {} bodies",
                params.masses.len(),
                spec.bodies.len()
            )));
        }
        let mut blocks = Vec::with_capacity(spec.bodies.len());
        for (body, &m) in spec.bodies.iter().zip(&params.masses) {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::InvalidConfig(format!("mass of {} must be positive", body.name)));
            }
            let k = point_block(&body.kind, m);
            let kl = cholesky_spd(&k)?;
            let k_inv = solve_spd(&kl, &Mat::identity(k.nrows(), k.nrows()))?;
            let k_inv = (&k_inv + k_inv.transpose()) * 0.5;
            let l_inv = cholesky_spd(&k_inv)?;
            blocks.push(MassBlock {
                points: body.points.clone(),
                k,
                k_inv,
                l_inv,
            });
        }
        Ok(MassMatrix {
            dim: spec.dim(),
            ambient: spec.ambient_dim,
            blocks,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &Mat, pick: impl Fn(&MassBlock) -> &Mat) -> Mat {
        assert_eq!(x.nrows(), self.dim, "mass matrix applied to wrong size");
        let a = self.ambient;
        let mut out = Mat::zeros(self.dim, x.ncols());
        for block in &self.blocks {
            let p = pick(block);
            for c in 0..x.ncols() {
                for (i, &pi) in block.points.iter().enumerate() {
                    for (j, &pj) in block.points.iter().enumerate() {
                        let w = p[(i, j)];
                        if w == 0.0 {
                            continue;
                        }
                        for d in 0..a {
                            out[(pi * a + d, c)] += w * x[(pj * a + d, c)];
                        }
                    }
                }
            }
        }
        out
    }

    fn apply_vec(&self, v: &[f64], pick: impl Fn(&MassBlock) -> &Mat) -> Vector {
        let m = self.apply(&Mat::from_column_slice(v.len(), 1, v), pick);
        Vector::from_column_slice(m.as_slice())
    }

    /// `M v`
    pub fn mul_vec(&self, v: &[f64]) -> Vector {
        self.apply_vec(v, |b| &b.k)
    }

    /// `M⁻¹ v`
    pub fn solve_vec(&self, v: &[f64]) -> Vector {
        self.apply_vec(v, |b| &b.k_inv)
    }

    /// `M⁻¹ X`
    pub fn solve_mat(&self, x: &Mat) -> Mat {
        self.apply(x, |b| &b.k_inv)
    }

    /// `L X` where `M⁻¹ = L Lᵀ`.
    pub fn inv_chol_mat(&self, x: &Mat) -> Mat {
        self.apply(x, |b| &b.l_inv)
    }

    /// `Lᵀ X` where `M⁻¹ = L Lᵀ`.
    pub fn inv_chol_t_mat(&self, x: &Mat) -> Mat {
        let a = self.ambient;
        let mut out = Mat::zeros(self.dim, x.ncols());
        for block in &self.blocks {
            for c in 0..x.ncols() {
                for (i, &pi) in block.points.iter().enumerate() {
                    for (j, &pj) in block.points.iter().enumerate() {
                        let w = block.l_inv[(j, i)];
                        if w == 0.0 {
                            continue;
                        }
                        for d in 0..a {
                            out[(pi * a + d, c)] += w * x[(pj * a + d, c)];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat {
        self.apply(&Mat::identity(self.dim, self.dim), |b| &b.k)
    }

    pub fn inverse_dense(&self) -> Mat {
        self.apply(&Mat::identity(self.dim, self.dim), |b| &b.k_inv)
    }

    pub fn kinetic_energy(&self, v: &[f64]) -> f64 {
        0.5 * Vector::from_column_slice(v).dot(&self.mul_vec(v))
    }
}

/// Dense `D×D` mass matrix.
pub fn mass_matrix(spec: &SystemSpec, params: &PhysParams) -> Result<Mat> {
    Ok(MassMatrix::new(spec, params)?.to_dense())
}

fn diff(x: &[f64], a: usize, b: usize, ambient: usize) -> Vec<f64> {
    (0..ambient).map(|d| x[a * ambient + d] - x[b * ambient + d]).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn potential(spec: &SystemSpec, params: &PhysParams, x: &[f64]) -> f64 {
    let a = spec.ambient_dim;
    let mut v = 0.0;
    let g = params.gravity(spec);
    if g != 0.0 {
        for (body, m) in spec.bodies.iter().zip(&params.masses) {
            v += g * m * x[body.com() * a + a - 1];
        }
    }
    let k = params.stiffness(spec);
    for s in &spec.potential.springs {
        let ext = norm(&diff(x, s.a, s.b, a)) - s.rest_length;
        v += 0.5 * k * ext * ext;
    }
    v
}

pub fn potential_gradient(spec: &SystemSpec, params: &PhysParams, x: &[f64]) -> Vector {
    let a = spec.ambient_dim;
    let mut grad = Vector::zeros(spec.dim());
    let g = params.gravity(spec);
    if g != 0.0 {
        for (body, m) in spec.bodies.iter().zip(&params.masses) {
            grad[body.com() * a + a - 1] += g * m;
        }
    }
    let k = params.stiffness(spec);
    for s in &spec.potential.springs {
        let d = diff(x, s.a, s.b, a);
        let len = norm(&d);
        if len == 0.0 {
            continue;
        }
        let f = k * (len - s.rest_length) / len;
        for i in 0..a {
            grad[s.a * a + i] += f * d[i];
            grad[s.b * a + i] -= f * d[i];
        }
    }
    grad
}

/// Derivative of the potential with respect to each potential constant.
pub fn potential_constant_gradient(spec: &SystemSpec, params: &PhysParams, x: &[f64]) -> Vec<f64> {
    let a = spec.ambient_dim;
    let mut out = vec![0.0; spec.potential.n_constants()];
    if let Some(i) = spec.potential.gravity_index() {
        out[i] = spec
            .bodies
            .iter()
            .zip(&params.masses)
            .map(|(b, m)| m * x[b.com() * a + a - 1])
            .sum();
    }
    if let Some(i) = spec.potential.stiffness_index() {
        out[i] = spec
            .potential
            .springs
            .iter()
            .map(|s| {
                let e = norm(&diff(x, s.a, s.b, a)) - s.rest_length;
                0.5 * e * e
            })
            .sum();
    }
    out
}

/// Constraint residuals `Φ(x)`.
pub fn constraints(spec: &SystemSpec, x: &[f64]) -> Vector {
    let a = spec.ambient_dim;
    Vector::from_iterator(
        spec.n_constraints(),
        spec.equality_constraints.iter().map(|c| match c {
            EqualityConstraint::Distance { a: i, b: j, length } => {
                let d = diff(x, *i, *j, a);
                d.iter().map(|t| t * t).sum::<f64>() - length * length
            }
            EqualityConstraint::Anchor { point, anchor, length } => {
                let s: f64 = (0..a).map(|d| (x[point * a + d] - anchor[d]).powi(2)).sum();
                s - length * length
            }
        }),
    )
}

/// Constraint Jacobian `J_E = ∂Φ/∂x` (`E×D`).
pub fn constraint_jacobian(spec: &SystemSpec, x: &[f64]) -> Mat {
    let a = spec.ambient_dim;
    let mut j = Mat::zeros(spec.n_constraints(), spec.dim());
    for (r, c) in spec.equality_constraints.iter().enumerate() {
        match c {
            EqualityConstraint::Distance { a: p, b: q, .. } => {
                for d in 0..a {
                    let g = 2.0 * (x[p * a + d] - x[q * a + d]);
                    j[(r, p * a + d)] = g;
                    j[(r, q * a + d)] = -g;
                }
            }
            EqualityConstraint::Anchor { point, anchor, .. } => {
                for d in 0..a {
                    j[(r, point * a + d)] = 2.0 * (x[point * a + d] - anchor[d]);
                }
            }
        }
    }
    j
}

/// `J̇_E v`, the velocity-quadratic term of the second constraint derivative.
pub fn constraint_rate(spec: &SystemSpec, v: &[f64]) -> Vector {
    let a = spec.ambient_dim;
    Vector::from_iterator(
        spec.n_constraints(),
        spec.equality_constraints.iter().map(|c| match c {
            EqualityConstraint::Distance { a: p, b: q, .. } => {
                2.0 * diff(v, *p, *q, a).iter().map(|t| t * t).sum::<f64>()
            }
            EqualityConstraint::Anchor { point, .. } => {
                2.0 * (0..a).map(|d| v[point * a + d].powi(2)).sum::<f64>()
            }
        }),
    )
}

/// `∂(J_E v)/∂x` for fixed `v` (`E×D`).
fn constraint_velocity_jacobian(spec: &SystemSpec, v: &[f64]) -> Mat {
    let a = spec.ambient_dim;
    let mut r = Mat::zeros(spec.n_constraints(), spec.dim());
    for (row, c) in spec.equality_constraints.iter().enumerate() {
        match c {
            EqualityConstraint::Distance { a: p, b: q, .. } => {
                for d in 0..a {
                    let g = 2.0 * (v[p * a + d] - v[q * a + d]);
                    r[(row, p * a + d)] = g;
                    r[(row, q * a + d)] = -g;
                }
            }
            EqualityConstraint::Anchor { point, .. } => {
                for d in 0..a {
                    r[(row, point * a + d)] = 2.0 * v[point * a + d];
                }
            }
        }
    }
    r
}

fn singular(what: &str, e: Error) -> Error {
    Error::SingularConstraintSystem(format!("{what}: {e}"))
}

/// The smooth equations of motion for one parameter set.
#[derive(Clone, Debug)]
pub struct Dynamics<'a> {
    pub spec: &'a SystemSpec,
    pub params: &'a PhysParams,
    pub mass: MassMatrix,
    pub mode: DynamicsMode,
}

impl<'a> Dynamics<'a> {
    pub fn new(spec: &'a SystemSpec, params: &'a PhysParams, mode: DynamicsMode) -> Result<Self> {
        Ok(Dynamics {
            spec,
            params,
            mass: MassMatrix::new(spec, params)?,
            mode,
        })
    }

    /// Time derivatives `(ẋ, v̇)`.
    pub fn field(&self, x: &[f64], v: &[f64]) -> Result<(Vector, Vector)> {
        match self.mode {
            DynamicsMode::Lagrangian => self.lagrangian(x, v),
            DynamicsMode::Hamiltonian => self.hamiltonian(x, v),
        }
    }

    fn lagrangian(&self, x: &[f64], v: &[f64]) -> Result<(Vector, Vector)> {
        let grad = potential_gradient(self.spec, self.params, x);
        let minv_grad = self.mass.solve_vec(grad.as_slice());
        let xdot = Vector::from_column_slice(v);
        if self.spec.n_constraints() == 0 {
            return Ok((xdot, -minv_grad));
        }
        let je = constraint_jacobian(self.spec, x);
        let minv_jet = self.mass.solve_mat(&je.transpose());
        let s = &je * &minv_jet;
        let l = cholesky_spd(&s).map_err(|e| singular("J_E M⁻¹ J_Eᵀ", e))?;
        let rhs = &je * &minv_grad - constraint_rate(self.spec, v);
        let rhs = Mat::from_column_slice(rhs.len(), 1, rhs.as_slice());
        let lambda = solve_spd(&l, &rhs)?;
        let vdot = &minv_jet * Vector::from_column_slice(lambda.as_slice()) - minv_grad;
        Ok((xdot, vdot))
    }

    fn hamiltonian(&self, x: &[f64], v: &[f64]) -> Result<(Vector, Vector)> {
        let grad = potential_gradient(self.spec, self.params, x);
        let vv = Vector::from_column_slice(v);
        let e = self.spec.n_constraints();
        if e == 0 {
            return Ok((vv, -self.mass.solve_vec(grad.as_slice())));
        }
        let a = constraint_jacobian(self.spec, x);
        let r = constraint_velocity_jacobian(self.spec, v);
        let b = self.mass.solve_mat(&a.transpose()).transpose();
        // DΨ J DΨᵀ for DΨ = [[A, 0], [R, B]] and the canonical J.
        let mut k = Mat::zeros(2 * e, 2 * e);
        let abt = &a * b.transpose();
        let rbt = &r * b.transpose();
        k.view_mut((0, e), (e, e)).copy_from(&abt);
        k.view_mut((e, 0), (e, e)).copy_from(&(-abt.transpose()));
        k.view_mut((e, e), (e, e)).copy_from(&(&rbt - rbt.transpose()));
        let mut rhs = Vector::zeros(2 * e);
        rhs.rows_mut(0, e).copy_from(&(-(&a * &vv)));
        rhs.rows_mut(e, e).copy_from(&(-(&r * &vv - &b * &grad)));
        let lambda = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularConstraintSystem("DΨ J DΨᵀ is singular".into()))?;
        let l1 = lambda.rows(0, e).into_owned();
        let l2 = lambda.rows(e, e).into_owned();
        let xdot = &vv + b.transpose() * &l2;
        let pdot = -(&grad + a.transpose() * &l1 + r.transpose() * &l2);
        let vdot = self.mass.solve_vec(pdot.as_slice());
        Ok((xdot, vdot))
    }

    /// One classical Runge–Kutta step of the smooth dynamics.
    pub fn rk4_step(&self, state: &State, dt: f64) -> Result<State> {
        let x0 = Vector::from_column_slice(&state.x);
        let v0 = Vector::from_column_slice(&state.v);
        let (k1x, k1v) = self.field(x0.as_slice(), v0.as_slice())?;
        let x1 = &x0 + &k1x * (0.5 * dt);
        let v1 = &v0 + &k1v * (0.5 * dt);
        let (k2x, k2v) = self.field(x1.as_slice(), v1.as_slice())?;
        let x2 = &x0 + &k2x * (0.5 * dt);
        let v2 = &v0 + &k2v * (0.5 * dt);
        let (k3x, k3v) = self.field(x2.as_slice(), v2.as_slice())?;
        let x3 = &x0 + &k3x * dt;
        let v3 = &v0 + &k3v * dt;
        let (k4x, k4v) = self.field(x3.as_slice(), v3.as_slice())?;
        let x = x0 + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
        let v = v0 + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
        Ok(State::new(x.as_slice().to_vec(), v.as_slice().to_vec(), state.t + dt))
    }

    pub fn energy(&self, state: &State) -> f64 {
        self.mass.kinetic_energy(&state.v) + potential(self.spec, self.params, &state.x)
    }

    /// Pulls `x` back onto `Φ = 0` with mass-weighted Gauss–Newton steps and
    /// removes the velocity component violating `J_E v = 0`.
    pub fn project_to_manifold(&self, x: &mut [f64], v: &mut [f64]) -> Result<()> {
        if self.spec.n_constraints() == 0 {
            return Ok(());
        }
        let scale = 1.0 + inf_norm(x);
        for _ in 0..50 {
            let phi = constraints(self.spec, x);
            if inf_norm(phi.as_slice()) <= 1e-14 * scale * scale {
                break;
            }
            let je = constraint_jacobian(self.spec, x);
            let step = self.constraint_correction(&je, &phi)?;
            for (xi, s) in x.iter_mut().zip(step.iter()) {
                *xi -= s;
            }
        }
        let phi = constraints(self.spec, x);
        if inf_norm(phi.as_slice()) > 1e-9 * scale * scale {
            return Err(Error::SingularConstraintSystem(format!(
                "projection left ‖Φ‖∞ = {:e}",
                inf_norm(phi.as_slice())
            )));
        }
        let je = constraint_jacobian(self.spec, x);
        let jv = &je * Vector::from_column_slice(v);
        let step = self.constraint_correction(&je, &jv)?;
        for (vi, s) in v.iter_mut().zip(step.iter()) {
            *vi -= s;
        }
        Ok(())
    }

    /// `M⁻¹ J_Eᵀ (J_E M⁻¹ J_Eᵀ)⁻¹ r`
    fn constraint_correction(&self, je: &Mat, r: &Vector) -> Result<Vector> {
        let minv_jet = self.mass.solve_mat(&je.transpose());
        let s = je * &minv_jet;
        let l = cholesky_spd(&s).map_err(|e| singular("J_E M⁻¹ J_Eᵀ", e))?;
        let y = solve_spd(&l, &Mat::from_column_slice(r.len(), 1, r.as_slice()))?;
        Ok(minv_jet * Vector::from_column_slice(y.as_slice()))
    }
}
