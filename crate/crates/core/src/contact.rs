//! Impulse-based contact resolution: contact-space Jacobians, the inertia
//! seen by the contacts once equality constraints are accounted for, the
//! compression and restitution cone programs, and penetration compensation.

use serde::{Deserialize, Serialize};

use crate::dynamics::{constraint_jacobian, MassMatrix};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, max_abs, solve_spd, solve_spd_vec, Mat, Vector};
use crate::model::{PhysParams, State, SystemSpec};
use crate::socp::{self, ConeBlock, ConeQp, ImpulseSolution, SolverOptions};

/// One active contact at the current configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct ActiveContact {
    pub candidate: usize,
    pub class: usize,
    /// 1 for limits, the ambient dimension for frictional contacts.
    pub dim: usize,
    pub normal: Vec<f64>,
    pub tangents: Vec<Vec<f64>>,
    /// Nonnegative depth (m, or rad for bend limits).
    pub penetration: f64,
    /// `dim × D`; first row is the normal direction.
    pub jacobian_rows: Mat,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActiveContactSet {
    pub contacts: Vec<ActiveContact>,
}

impl ActiveContactSet {
    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }

    /// Contact-space dimension `C`.
    pub fn total_dim(&self) -> usize {
        self.contacts.iter().map(|c| c.dim).sum()
    }

    /// Offset of each contact's block in contact space.
    pub fn offsets(&self) -> Vec<usize> {
        let mut o = 0;
        self.contacts
            .iter()
            .map(|c| {
                let r = o;
                o += c.dim;
                r
            })
            .collect()
    }

    pub fn max_penetration(&self) -> f64 {
        self.contacts.iter().map(|c| c.penetration).fold(0.0, f64::max)
    }
}

/// Stacked `C × D` contact Jacobian.
pub fn contact_jacobian(contacts: &ActiveContactSet, dim: usize) -> Mat {
    let mut j = Mat::zeros(contacts.total_dim(), dim);
    let mut r = 0;
    for c in &contacts.contacts {
        j.view_mut((r, 0), (c.dim, dim)).copy_from(&c.jacobian_rows);
        r += c.dim;
    }
    j
}

/// Orthonormal tangents completing `normal` to a frame. In 2D the tangent
/// is the normal rotated by −90°; in 3D the first tangent comes from
/// Gram–Schmidt against the coordinate axis where the normal is smallest
/// (ties go to the lower axis).
pub fn tangent_basis(normal: &[f64]) -> Vec<Vec<f64>> {
    match normal.len() {
        2 => vec![vec![normal[1], -normal[0]]],
        3 => {
            let mut axis = 0;
            for k in 1..3 {
                if normal[k].abs() < normal[axis].abs() {
                    axis = k;
                }
            }
            let mut t1 = [0.0; 3];
            t1[axis] = 1.0;
            let dot = normal[axis];
            for k in 0..3 {
                t1[k] -= dot * normal[k];
            }
            let n1 = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
            t1.iter_mut().for_each(|a| *a /= n1);
            let t2 = [
                normal[1] * t1[2] - normal[2] * t1[1],
                normal[2] * t1[0] - normal[0] * t1[2],
                normal[0] * t1[1] - normal[1] * t1[0],
            ];
            vec![t1.to_vec(), t2.to_vec()]
        }
        _ => vec![],
    }
}

/// Rows `[n; t₁; …]` acting on the velocity `Σ wₖ v_{pₖ}` built from point
/// weights `terms`.
pub fn frictional_rows(dim: usize, ambient: usize, normal: &[f64], tangents: &[Vec<f64>], terms: &[(usize, f64)]) -> Mat {
    let mut rows = Mat::zeros(ambient, dim);
    let axes = std::iter::once(normal).chain(tangents.iter().map(|t| t.as_slice()));
    for (r, axis) in axes.enumerate() {
        for &(p, w) in terms {
            for d in 0..ambient {
                rows[(r, p * ambient + d)] += w * axis[d];
            }
        }
    }
    rows
}

/// Inverse inertia seen in contact space once equality constraints absorb
/// their share of every impulse.
#[derive(Clone, Debug)]
pub struct ContactInertia {
    /// `A = J_C M̂⁻¹ J_Cᵀ` (`C×C`).
    pub a: Mat,
    /// `B` with `BᵀB = A` (`D×C`).
    pub factor: Mat,
    /// `M̂⁻¹ J_Cᵀ` (`D×C`).
    pub minv_hat_jct: Mat,
}

/// `M̂⁻¹ = M⁻¹ − M⁻¹J_Eᵀ(J_E M⁻¹ J_Eᵀ)⁻¹J_E M⁻¹` applied to the contact
/// Jacobian. The factor is `B = (I − P) Lᵀ J_Cᵀ` with `M⁻¹ = L Lᵀ` and
/// `P = Lᵀ J_Eᵀ (J_E M⁻¹ J_Eᵀ)⁻¹ J_E L`; `A` is assembled independently
/// from the `M̂⁻¹` expression.
pub fn contact_inertia(mass: &MassMatrix, je: &Mat, jc: &Mat) -> Result<ContactInertia> {
    let d = mass.dim();
    if jc.ncols() != d || (je.nrows() > 0 && je.ncols() != d) {
        return Err(Error::ShapeMismatch(format!(
            "J_C is {}x{}, J_E is {}x{}, D = {d}",
            jc.nrows(),
            jc.ncols(),
            je.nrows(),
            je.ncols()
        )));
    }
    let jct = jc.transpose();
    let lt_jct = mass.inv_chol_t_mat(&jct);
    let minv_jct = mass.solve_mat(&jct);
    if je.nrows() == 0 {
        let a = jc * &minv_jct;
        return Ok(ContactInertia {
            a: (&a + a.transpose()) * 0.5,
            factor: lt_jct,
            minv_hat_jct: minv_jct,
        });
    }
    let jet = je.transpose();
    let lt_jet = mass.inv_chol_t_mat(&jet);
    let s = lt_jet.transpose() * &lt_jet;
    let ls = cholesky_spd(&s).map_err(|e| Error::SingularConstraintSystem(format!("J_E M⁻¹ J_Eᵀ: {e}")))?;
    let factor = &lt_jct - &lt_jet * solve_spd(&ls, &(lt_jet.transpose() * &lt_jct))?;
    let minv_jet = mass.solve_mat(&jet);
    let coupling = jc * &minv_jet;
    let a = jc * &minv_jct - &coupling * solve_spd(&ls, &coupling.transpose())?;
    let a = (&a + a.transpose()) * 0.5;
    let minv_hat_jct = &minv_jct - &minv_jet * solve_spd(&ls, &(je * &minv_jct))?;
    Ok(ContactInertia {
        a,
        factor,
        minv_hat_jct,
    })
}

/// CM solves the exact contact programs; CMr adds `εI` to `A`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContactVariant {
    Cm,
    Cmr { epsilon: f64 },
}

impl Default for ContactVariant {
    fn default() -> Self {
        ContactVariant::Cm
    }
}

impl ContactVariant {
    /// Regularizer used when CMr is chosen without an explicit ε.
    pub const DEFAULT_EPSILON: f64 = 0.01;

    pub fn epsilon(&self) -> f64 {
        match self {
            ContactVariant::Cm => 0.0,
            ContactVariant::Cmr { epsilon } => *epsilon,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactOptions {
    pub variant: ContactVariant,
    pub solver: SolverOptions,
    /// Residual (relative to `max(1, ‖f‖∞)`) still accepted when the solver
    /// hits its iteration cap.
    pub accept_residual: f64,
    /// Overrides every contact class's compensation horizon.
    pub k_steps: Option<usize>,
}

impl Default for ContactOptions {
    fn default() -> Self {
        ContactOptions {
            variant: ContactVariant::Cm,
            solver: SolverOptions::default(),
            accept_residual: 1e-7,
            k_steps: None,
        }
    }
}

fn regularized_factor(inertia: &ContactInertia, epsilon: f64) -> Result<Mat> {
    if epsilon > 0.0 {
        let c = inertia.a.nrows();
        let l = cholesky_spd(&(&inertia.a + Mat::identity(c, c) * epsilon))?;
        Ok(l.transpose())
    } else {
        Ok(inertia.factor.clone())
    }
}

fn blocks(dims: &[usize], mu: &[f64], lower: &[f64]) -> Vec<ConeBlock> {
    dims.iter()
        .zip(mu)
        .zip(lower)
        .map(|((&dim, &mu), &lower_bound)| ConeBlock {
            dim,
            mu: if dim == 1 { 0.0 } else { mu },
            lower_bound,
        })
        .collect()
}

/// Compression-phase program: `min ½fᵀ(A+εI)f + fᵀv_C⁻` over the cones.
pub fn compression_qp(inertia: &ContactInertia, v_c_minus: &[f64], dims: &[usize], mu: &[f64], epsilon: f64) -> Result<ConeQp> {
    ConeQp::new(
        regularized_factor(inertia, epsilon)?,
        Vector::from_column_slice(v_c_minus),
        blocks(dims, mu, &vec![0.0; dims.len()]),
    )
}

/// Restitution-phase program: `min ½fᵀ(A+εI)f + fᵀ(v_C^{c+} − v_C^*)`
/// with `f_{i,n} ≥ e_i f^c_{i,n}`.
#[allow(clippy::too_many_arguments)]
pub fn restitution_qp(
    inertia: &ContactInertia,
    v_c_plus: &[f64],
    f_c: &[f64],
    dims: &[usize],
    e_p: &[f64],
    mu: &[f64],
    v_c_star: &[f64],
    epsilon: f64,
) -> Result<ConeQp> {
    let mut lower = Vec::with_capacity(dims.len());
    let mut o = 0;
    for (&d, &e) in dims.iter().zip(e_p) {
        lower.push((e * f_c[o]).max(0.0));
        o += d;
    }
    let linear = Vector::from_iterator(v_c_plus.len(), v_c_plus.iter().zip(v_c_star).map(|(a, b)| a - b));
    ConeQp::new(regularized_factor(inertia, epsilon)?, linear, blocks(dims, mu, &lower))
}

pub fn solve_compression(
    inertia: &ContactInertia,
    v_c_minus: &[f64],
    dims: &[usize],
    mu: &[f64],
    epsilon: f64,
    opts: &ContactOptions,
) -> Result<ImpulseSolution> {
    let qp = compression_qp(inertia, v_c_minus, dims, mu, epsilon)?;
    socp::solve_checked(&qp, None, &opts.solver, opts.accept_residual)
}

#[allow(clippy::too_many_arguments)]
pub fn solve_restitution(
    inertia: &ContactInertia,
    v_c_plus: &[f64],
    f_c: &[f64],
    dims: &[usize],
    e_p: &[f64],
    mu: &[f64],
    v_c_star: &[f64],
    epsilon: f64,
    opts: &ContactOptions,
) -> Result<ImpulseSolution> {
    let qp = restitution_qp(inertia, v_c_plus, f_c, dims, e_p, mu, v_c_star, epsilon)?;
    socp::solve_checked(&qp, None, &opts.solver, opts.accept_residual)
}

/// Pseudo-inverse of `J_C`: `J_Cᵀ(J_C J_Cᵀ)⁻¹` when `C ≤ D`, else
/// `(J_CᵀJ_C)⁻¹J_Cᵀ`, falling back to an SVD pseudo-inverse when the Gram
/// matrix is rank deficient.
pub fn contact_pseudo_inverse(jc: &Mat) -> Mat {
    let (c, d) = jc.shape();
    let jct = jc.transpose();
    let gram_solve = if c <= d {
        cholesky_spd(&(jc * &jct))
            .and_then(|l| solve_spd(&l, &Mat::identity(c, c)))
            .map(|g| &jct * g)
    } else {
        cholesky_spd(&(&jct * jc))
            .and_then(|l| solve_spd(&l, &jct))
    };
    match gram_solve {
        Ok(p) => p,
        Err(_) => {
            let scale = max_abs(jc).max(1.0);
            jc.clone()
                .pseudo_inverse(1e-12 * scale)
                .unwrap_or_else(|_| Mat::zeros(d, c))
        }
    }
}

/// Contact-space target velocity that removes each penetration over its
/// compensation horizon, corrected so the implied coordinate velocity
/// respects the equality constraints.
pub fn target_velocity(je: &Mat, jc: &Mat, contacts: &ActiveContactSet, dt: f64, k_steps: &[usize]) -> Result<Vector> {
    let c = jc.nrows();
    let mut vd = Vector::zeros(c);
    for ((contact, &o), &k) in contacts.contacts.iter().zip(&contacts.offsets()).zip(k_steps) {
        vd[o] = contact.penetration / (k.max(1) as f64 * dt);
    }
    if vd.iter().all(|a| *a == 0.0) {
        return Ok(vd);
    }
    let mut v_star = contact_pseudo_inverse(jc) * &vd;
    if je.nrows() > 0 {
        let g = je * je.transpose();
        let l = cholesky_spd(&g).map_err(|e| Error::SingularConstraintSystem(format!("J_E J_Eᵀ: {e}")))?;
        let rhs = je * &v_star;
        let y = solve_spd(&l, &Mat::from_column_slice(rhs.len(), 1, rhs.as_slice()))?;
        v_star -= je.transpose() * Vector::from_column_slice(y.as_slice());
    }
    Ok(jc * v_star)
}

/// Removes the component of `v` that violates `J_E v = 0` with the
/// equality impulse `f_E = −(J_E M⁻¹ J_Eᵀ)⁻¹ J_E v`, i.e.
/// `v ← v − M⁻¹J_Eᵀ(J_E M⁻¹ J_Eᵀ)⁻¹J_E v`. Integration leaves a small
/// residual `J_E v` before every impact; solving the equality impulse for
/// `J_E v⁺ = 0` rather than `J_E Δv = 0` clears it.
pub fn equality_projection(mass: &MassMatrix, je: &Mat, v: &[f64]) -> Result<Vec<f64>> {
    if je.nrows() == 0 {
        return Ok(v.to_vec());
    }
    let jet = je.transpose();
    let minv_jet = mass.solve_mat(&jet);
    let s = je * &minv_jet;
    let ls = cholesky_spd(&((&s + s.transpose()) * 0.5))
        .map_err(|e| Error::SingularConstraintSystem(format!("J_E M⁻¹ J_Eᵀ: {e}")))?;
    let rate = je * Vector::from_column_slice(v);
    let dv = &minv_jet * solve_spd_vec(&ls, &rate)?;
    Ok(v.iter().zip(dv.iter()).map(|(a, b)| a - b).collect())
}

/// `v⁺ = v + M̂⁻¹ J_Cᵀ f`.
pub fn apply_impulses(inertia: &ContactInertia, v: &[f64], f_total: &[f64]) -> Vec<f64> {
    let dv = &inertia.minv_hat_jct * Vector::from_column_slice(f_total);
    v.iter().zip(dv.iter()).map(|(a, b)| a + b).collect()
}

/// Everything computed while resolving one set of contacts.
#[derive(Clone, Debug)]
pub struct ContactResolution {
    pub v_plus: Vec<f64>,
    pub compression: ImpulseSolution,
    pub restitution: ImpulseSolution,
    pub v_c_minus: Vec<f64>,
    pub v_c_star: Vec<f64>,
}

/// Compensation horizon of each contact.
pub fn compensation_steps(spec: &SystemSpec, contacts: &ActiveContactSet, opts: &ContactOptions) -> Vec<usize> {
    contacts
        .contacts
        .iter()
        .map(|c| opts.k_steps.unwrap_or(spec.contact_classes[c.class].compensation_steps))
        .collect()
}

/// Resolves all active contacts jointly: compression, then restitution with
/// penetration compensation, then the velocity jump.
pub fn resolve_contacts(
    spec: &SystemSpec,
    params: &PhysParams,
    mass: &MassMatrix,
    state: &State,
    contacts: &ActiveContactSet,
    opts: &ContactOptions,
) -> Result<ContactResolution> {
    let d = spec.dim();
    let jc = contact_jacobian(contacts, d);
    let je = constraint_jacobian(spec, &state.x);
    let inertia = contact_inertia(mass, &je, &jc)?;
    let dims: Vec<usize> = contacts.contacts.iter().map(|c| c.dim).collect();
    let mu: Vec<f64> = contacts.contacts.iter().map(|c| params.mu[c.class]).collect();
    let e_p: Vec<f64> = contacts.contacts.iter().map(|c| params.e_p[c.class]).collect();
    let eps = opts.variant.epsilon();
    let v_minus = equality_projection(mass, &je, &state.v)?;
    let v_c_minus = &jc * Vector::from_column_slice(&v_minus);
    let compression = solve_compression(&inertia, v_c_minus.as_slice(), &dims, &mu, eps, opts)?;
    let v_c_plus = &v_c_minus + &inertia.a * Vector::from_column_slice(&compression.f);
    let k = compensation_steps(spec, contacts, opts);
    let v_c_star = target_velocity(&je, &jc, contacts, spec.dt, &k)?;
    let restitution = solve_restitution(
        &inertia,
        v_c_plus.as_slice(),
        &compression.f,
        &dims,
        &e_p,
        &mu,
        v_c_star.as_slice(),
        eps,
        opts,
    )?;
    let total: Vec<f64> = compression.f.iter().zip(&restitution.f).map(|(a, b)| a + b).collect();
    let v_plus = apply_impulses(&inertia, &v_minus, &total);
    Ok(ContactResolution {
        v_plus,
        compression,
        restitution,
        v_c_minus: v_c_minus.as_slice().to_vec(),
        v_c_star: v_c_star.as_slice().to_vec(),
    })
}

/// Returns the state with contact impulses applied (positions unchanged).
pub fn contact_step(
    spec: &SystemSpec,
    params: &PhysParams,
    mass: &MassMatrix,
    state: &State,
    contacts: &ActiveContactSet,
    opts: &ContactOptions,
) -> Result<State> {
    if contacts.is_empty() {
        return Ok(state.clone());
    }
    let r = resolve_contacts(spec, params, mass, state, contacts, opts)?;
    Ok(State::new(state.x.clone(), r.v_plus, state.t))
}
