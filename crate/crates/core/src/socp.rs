//! Convex quadratic programs over products of friction cones intersected
//! with lower bounds on the normal component, solved with accelerated
//! projected gradient, plus sensitivities of the minimizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, max_eigenvalue, Mat, Vector};

/// One contact's block: `dim` components ordered normal first, feasible set
/// `{ f : μ f_n ≥ ‖f_t‖, f_n ≥ lower_bound }`. A 1-dimensional block is the
/// half-line `f_n ≥ lower_bound`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeBlock {
    pub dim: usize,
    pub mu: f64,
    pub lower_bound: f64,
}

/// `min ½ fᵀ Q f + fᵀ b` over a product of [`ConeBlock`]s, with
/// `Q = factorᵀ factor`.
#[derive(Clone, Debug)]
pub struct ConeQp {
    pub factor: Mat,
    pub quad: Mat,
    pub linear: Vector,
    pub cones: Vec<ConeBlock>,
}

impl ConeQp {
    pub fn new(factor: Mat, linear: Vector, cones: Vec<ConeBlock>) -> Result<Self> {
        let c = linear.len();
        if factor.ncols() != c {
            return Err(Error::ShapeMismatch(format!(
                "factor has {} columns, linear term {} entries",
                factor.ncols(),
                c
            )));
        }
        let total: usize = cones.iter().map(|b| b.dim).sum();
        if total != c {
            return Err(Error::ShapeMismatch(format!("cone blocks cover {total} of {c} components")));
        }
        for b in &cones {
            if b.dim == 0 || !(b.mu >= 0.0) || !(b.lower_bound >= 0.0) || !b.mu.is_finite() {
                return Err(Error::InvalidConfig(format!("invalid cone block {b:?}")));
            }
        }
        let quad = factor.transpose() * &factor;
        let quad = (&quad + quad.transpose()) * 0.5;
        Ok(ConeQp {
            factor,
            quad,
            linear,
            cones,
        })
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, f: &[f64]) -> f64 {
        let f = Vector::from_column_slice(f);
        let af = &self.factor * &f;
        0.5 * af.dot(&af) + f.dot(&self.linear)
    }

    pub fn gradient(&self, f: &[f64]) -> Vector {
        &self.quad * Vector::from_column_slice(f) + &self.linear
    }

    /// Projects every block of `y` in place.
    pub fn project(&self, y: &mut [f64]) {
        let mut o = 0;
        for b in &self.cones {
            project_cone_in_place(&mut y[o..o + b.dim], b.mu, b.lower_bound);
            o += b.dim;
        }
    }

    pub fn is_feasible(&self, f: &[f64], tol: f64) -> bool {
        let mut o = 0;
        self.cones.iter().all(|b| {
            let blk = &f[o..o + b.dim];
            o += b.dim;
            let t = blk[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
            blk[0] >= b.lower_bound - tol && b.mu * blk[0] - t >= -tol
        })
    }

    fn with_linear(&self, linear: Vector) -> ConeQp {
        ConeQp {
            factor: self.factor.clone(),
            quad: self.quad.clone(),
            linear,
            cones: self.cones.clone(),
        }
    }

    fn with_cones(&self, cones: Vec<ConeBlock>) -> ConeQp {
        ConeQp {
            factor: self.factor.clone(),
            quad: self.quad.clone(),
            linear: self.linear.clone(),
            cones,
        }
    }
}

fn project_soc(y: &mut [f64], mu: f64) {
    let n = y[0];
    let t = y[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
    if t <= mu * n {
        return;
    }
    if mu * t <= -n {
        y.iter_mut().for_each(|a| *a = 0.0);
        return;
    }
    let fn_ = (n + mu * t) / (1.0 + mu * mu);
    y[0] = fn_;
    let s = if t > 0.0 { mu * fn_ / t } else { 0.0 };
    y[1..].iter_mut().for_each(|a| *a *= s);
}

fn project_cone_in_place(y: &mut [f64], mu: f64, lb: f64) {
    if y.len() == 1 {
        y[0] = y[0].max(lb);
        return;
    }
    let n = y[0];
    let t = y[1..].iter().map(|a| a * a).sum::<f64>().sqrt();
    let (pn, scale) = if t <= mu * n {
        (n, 1.0)
    } else if mu * t <= -n {
        (0.0, 0.0)
    } else {
        let pn = (n + mu * t) / (1.0 + mu * mu);
        (pn, if t > 0.0 { mu * pn / t } else { 0.0 })
    };
    let (pn, scale) = if pn >= lb {
        (pn, scale)
    } else {
        // the bound is active: nearest point of the disk of radius μ·lb
        let r = mu * lb;
        (lb, if t > r { r / t } else { 1.0 })
    };
    y[0] = pn;
    y[1..].iter_mut().for_each(|a| *a *= scale);
}

/// Euclidean projection onto `{ μ f_n ≥ ‖f_t‖, f_n ≥ lb }` (closed form).
pub fn project_cone(y: &[f64], mu: f64, lb: f64) -> Vec<f64> {
    let mut p = y.to_vec();
    project_cone_in_place(&mut p, mu, lb);
    p
}

/// Same projection computed by alternating projections with Dykstra
/// corrections between the cone and the half-space (at most 100 sweeps,
/// stopping when an iterate moves less than `1e-12`).
pub fn project_cone_dykstra(y: &[f64], mu: f64, lb: f64) -> Vec<f64> {
    project_cone_dykstra_sweeps(y, mu, lb, 100)
}

/// [`project_cone_dykstra`] with an explicit sweep cap. The stopping test
/// also watches the correction terms: the iterate can stall for several
/// sweeps while the corrections are still moving.
pub fn project_cone_dykstra_sweeps(y: &[f64], mu: f64, lb: f64, max_sweeps: usize) -> Vec<f64> {
    let d = y.len();
    let mut x = y.to_vec();
    let mut p = vec![0.0; d];
    let mut q = vec![0.0; d];
    for _ in 0..max_sweeps {
        let old_p = p.clone();
        let old_q = q.clone();
        let mut a: Vec<f64> = x.iter().zip(&p).map(|(x, p)| x + p).collect();
        if d > 1 {
            project_soc(&mut a, mu);
        }
        for i in 0..d {
            p[i] = x[i] + p[i] - a[i];
        }
        let mut nx: Vec<f64> = a.iter().zip(&q).map(|(a, q)| a + q).collect();
        nx[0] = nx[0].max(lb);
        for i in 0..d {
            q[i] = a[i] + q[i] - nx[i];
        }
        let moved = x
            .iter()
            .zip(&nx)
            .chain(p.iter().zip(&old_p))
            .chain(q.iter().zip(&old_q))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        x = nx;
        if moved < 1e-12 {
            break;
        }
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Fixed-point residual tolerance, relative to `max(1, ‖f‖∞)`.
    pub tol: f64,
    pub max_iter: usize,
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 50_000,
            record_history: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImpulseSolution {
    pub f: Vec<f64>,
    pub iterations: usize,
    /// `‖y − Π(y − ∇(y)/L)‖∞` at the last extrapolated point.
    pub residual: f64,
    pub converged: bool,
    pub objective: f64,
    /// Objective after every iteration when requested.
    pub history: Vec<f64>,
}

/// Solves from `f = 0`.
pub fn solve(qp: &ConeQp, opts: &SolverOptions) -> ImpulseSolution {
    solve_from(qp, &vec![0.0; qp.dim()], opts)
}

/// FISTA with adaptive (gradient-based) restart, warm-started at `f0`.
pub fn solve_from(qp: &ConeQp, f0: &[f64], opts: &SolverOptions) -> ImpulseSolution {
    let n = qp.dim();
    if n == 0 {
        return ImpulseSolution {
            f: vec![],
            iterations: 0,
            residual: 0.0,
            converged: true,
            objective: 0.0,
            history: vec![],
        };
    }
    let lip = max_eigenvalue(&qp.quad).max(1e-12);
    let step = 1.0 / lip;
    let mut f = f0.to_vec();
    qp.project(&mut f);
    let mut y = f.clone();
    let mut t = 1.0_f64;
    let mut history = vec![];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut f_new = vec![0.0; n];
    let mut yv = Vector::zeros(n);
    for k in 0..opts.max_iter.max(1) {
        iterations = k + 1;
        yv.copy_from_slice(&y);
        let g = &qp.quad * &yv + &qp.linear;
        for i in 0..n {
            f_new[i] = y[i] - step * g[i];
        }
        qp.project(&mut f_new);
        residual = y.iter().zip(&f_new).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if opts.record_history {
            history.push(qp.objective(&f_new));
        }
        if residual <= opts.tol * inf_norm(&f_new).max(1.0) {
            converged = true;
            f.copy_from_slice(&f_new);
            break;
        }
        let restart: f64 = (0..n).map(|i| (y[i] - f_new[i]) * (f_new[i] - f[i])).sum();
        if restart > 0.0 {
            t = 1.0;
            y.copy_from_slice(&f_new);
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            for i in 0..n {
                y[i] = f_new[i] + beta * (f_new[i] - f[i]);
            }
            t = t_next;
        }
        f.copy_from_slice(&f_new);
    }
    let objective = qp.objective(&f);
    ImpulseSolution {
        f,
        iterations,
        residual,
        converged,
        objective,
        history,
    }
}

/// Solves and maps non-convergence to an error unless the residual is still
/// below `accept` (relative to `max(1, ‖f‖∞)`).
pub fn solve_checked(qp: &ConeQp, f0: Option<&[f64]>, opts: &SolverOptions, accept: f64) -> Result<ImpulseSolution> {
    let sol = match f0 {
        Some(f0) => solve_from(qp, f0, opts),
        None => solve(qp, opts),
    };
    if sol.converged || sol.residual <= accept * inf_norm(&sol.f).max(1.0) {
        Ok(sol)
    } else {
        Err(Error::SolverNotConverged {
            residual: sol.residual,
            iterations: sol.iterations,
        })
    }
}

/// Input with respect to which the minimizer is differentiated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityInput {
    /// The linear term `b` (one column per component).
    Linear,
    /// Each block's friction coefficient.
    Mu,
    /// Each block's normal lower bound.
    LowerBound,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivityMethod {
    #[default]
    FiniteDifference,
    /// Implicit differentiation of the KKT system on the detected active set.
    Kkt,
}

/// `∂f*/∂input` as a `C × P` matrix.
pub fn sensitivity(
    qp: &ConeQp,
    f_star: &[f64],
    input: SensitivityInput,
    method: SensitivityMethod,
) -> Result<Mat> {
    match method {
        SensitivityMethod::FiniteDifference => sensitivity_fd(qp, f_star, input),
        SensitivityMethod::Kkt => sensitivity_kkt(qp, f_star, input),
    }
}

fn inner_options() -> SolverOptions {
    SolverOptions {
        tol: 1e-13,
        max_iter: 200_000,
        record_history: false,
    }
}

fn sensitivity_fd(qp: &ConeQp, f_star: &[f64], input: SensitivityInput) -> Result<Mat> {
    let c = qp.dim();
    let opts = inner_options();
    let solve_at = |p: &ConeQp| -> Result<Vec<f64>> { Ok(solve_checked(p, Some(f_star), &opts, 1e-9)?.f) };
    let n_in = match input {
        SensitivityInput::Linear => c,
        _ => qp.cones.len(),
    };
    let mut out = Mat::zeros(c, n_in);
    for j in 0..n_in {
        let value = match input {
            SensitivityInput::Linear => qp.linear[j],
            SensitivityInput::Mu => qp.cones[j].mu,
            SensitivityInput::LowerBound => qp.cones[j].lower_bound,
        };
        let h = 1e-5 * (1.0 + value.abs());
        let build = |delta: f64| -> ConeQp {
            match input {
                SensitivityInput::Linear => {
                    let mut b = qp.linear.clone();
                    b[j] += delta;
                    qp.with_linear(b)
                }
                SensitivityInput::Mu => {
                    let mut cones = qp.cones.clone();
                    cones[j].mu += delta;
                    qp.with_cones(cones)
                }
                SensitivityInput::LowerBound => {
                    let mut cones = qp.cones.clone();
                    cones[j].lower_bound += delta;
                    qp.with_cones(cones)
                }
            }
        };
        // nonnegative inputs near zero get a forward difference
        let one_sided = input != SensitivityInput::Linear && value - h < 0.0;
        let col: Vec<f64> = if one_sided {
            let fp = solve_at(&build(h))?;
            let fp2 = solve_at(&build(2.0 * h))?;
            (0..c)
                .map(|i| (-3.0 * f_star[i] + 4.0 * fp[i] - fp2[i]) / (2.0 * h))
                .collect()
        } else {
            let fp = solve_at(&build(h))?;
            let fm = solve_at(&build(-h))?;
            (0..c).map(|i| (fp[i] - fm[i]) / (2.0 * h)).collect()
        };
        for i in 0..c {
            out[(i, j)] = col[i];
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Active {
    NormalBound(usize),
    Fix,
    Cone(usize),
}

fn degenerate(msg: String) -> Error {
    Error::DegenerateActiveSet(msg)
}

fn sensitivity_kkt(qp: &ConeQp, f: &[f64], input: SensitivityInput) -> Result<Mat> {
    let c = qp.dim();
    let g = qp.gradient(f);
    let scale = inf_norm(f).max(1.0);
    let gscale = inf_norm(g.as_slice()).max(1.0);
    let dp = 1e-8 * scale;
    let dl = 1e-8 * gscale;

    let mut rows: Vec<(Active, Vec<f64>)> = vec![];
    let mut apex_blocks = vec![];
    let mut o = 0;
    for (bi, b) in qp.cones.iter().enumerate() {
        let fnv = f[o];
        let ft = &f[o + 1..o + b.dim];
        let t = ft.iter().map(|a| a * a).sum::<f64>().sqrt();
        let unit = |k: usize| {
            let mut r = vec![0.0; c];
            r[k] = 1.0;
            r
        };
        let normal_active = fnv <= b.lower_bound + dp;
        if b.dim == 1 || b.mu == 0.0 {
            for k in 1..b.dim {
                rows.push((Active::Fix, unit(o + k)));
            }
            if normal_active {
                rows.push((Active::NormalBound(bi), unit(o)));
            }
        } else {
            let cone_active = b.mu * fnv - t <= dp;
            let cone_row = || {
                let mut r = vec![0.0; c];
                r[o] = b.mu;
                for k in 1..b.dim {
                    r[o + k] = -f[o + k] / t;
                }
                r
            };
            if normal_active && b.lower_bound <= dp {
                rows.push((Active::NormalBound(bi), unit(o)));
                for k in 1..b.dim {
                    rows.push((Active::Fix, unit(o + k)));
                }
                apex_blocks.push((bi, o, b.dim, b.mu));
            } else if cone_active && t <= dp {
                return Err(degenerate(format!("block {bi} sits at the cone apex above its bound")));
            } else {
                if normal_active {
                    rows.push((Active::NormalBound(bi), unit(o)));
                }
                if cone_active {
                    rows.push((Active::Cone(bi), cone_row()));
                }
            }
        }
        o += b.dim;
    }

    let m = rows.len();
    let gmat = Mat::from_fn(m, c, |i, j| rows[i].1[j]);
    let lambda = if m > 0 {
        let ggt = &gmat * gmat.transpose();
        ggt.lu()
            .solve(&(&gmat * &g))
            .ok_or_else(|| degenerate("active constraint gradients are dependent".into()))?
    } else {
        Vector::zeros(0)
    };
    let stationarity = gmat.transpose() * &lambda - &g;
    if inf_norm(stationarity.as_slice()) > 1e-6 * gscale {
        return Err(degenerate(format!(
            "stationarity residual {:e} on the detected active set",
            inf_norm(stationarity.as_slice())
        )));
    }
    for (k, (kind, _)) in rows.iter().enumerate() {
        let inequality = matches!(kind, Active::NormalBound(_) | Active::Cone(_));
        let is_apex_normal = matches!(kind, Active::NormalBound(bi) if apex_blocks.iter().any(|a| a.0 == *bi));
        if inequality && !is_apex_normal && lambda[k] <= dl {
            return Err(degenerate(format!("multiplier {:e} of {kind:?} is not strictly positive", lambda[k])));
        }
    }
    for &(bi, o, d, mu) in &apex_blocks {
        let gt = (1..d).map(|k| g[o + k] * g[o + k]).sum::<f64>().sqrt();
        if g[o] <= mu * gt + dl {
            return Err(degenerate(format!("block {bi} at the apex without strict dual feasibility")));
        }
    }

    let mut h = qp.quad.clone();
    let mut o = 0;
    let offsets: Vec<usize> = qp
        .cones
        .iter()
        .map(|b| {
            let r = o;
            o += b.dim;
            r
        })
        .collect();
    for (k, (kind, _)) in rows.iter().enumerate() {
        if let Active::Cone(bi) = kind {
            let o = offsets[*bi];
            let d = qp.cones[*bi].dim;
            let ft: Vec<f64> = f[o + 1..o + d].to_vec();
            let t = ft.iter().map(|a| a * a).sum::<f64>().sqrt();
            for i in 0..d - 1 {
                for j in 0..d - 1 {
                    let id = if i == j { 1.0 } else { 0.0 };
                    h[(o + 1 + i, o + 1 + j)] += lambda[k] * (id - ft[i] * ft[j] / (t * t)) / t;
                }
            }
        }
    }
    let n = c + m;
    let mut kkt = Mat::zeros(n, n);
    kkt.view_mut((0, 0), (c, c)).copy_from(&h);
    kkt.view_mut((0, c), (c, m)).copy_from(&(-gmat.transpose()));
    kkt.view_mut((c, 0), (m, c)).copy_from(&gmat);

    let n_in = match input {
        SensitivityInput::Linear => c,
        _ => qp.cones.len(),
    };
    let mut rhs = Mat::zeros(n, n_in);
    match input {
        SensitivityInput::Linear => {
            for j in 0..c {
                rhs[(j, j)] = -1.0;
            }
        }
        SensitivityInput::Mu => {
            for (bi, b) in qp.cones.iter().enumerate() {
                if b.mu == 0.0 && b.dim > 1 {
                    return Err(degenerate(format!(
                        "friction sensitivity of block {bi} at μ = 0 is one-sided"
                    )));
                }
            }
            for (k, (kind, _)) in rows.iter().enumerate() {
                if let Active::Cone(bi) = kind {
                    let o = offsets[*bi];
                    rhs[(o, *bi)] = lambda[k];
                    rhs[(c + k, *bi)] = -f[o];
                }
            }
        }
        SensitivityInput::LowerBound => {
            for (k, (kind, _)) in rows.iter().enumerate() {
                if let Active::NormalBound(bi) = kind {
                    rhs[(c + k, *bi)] = 1.0;
                }
            }
        }
    }
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| degenerate("KKT matrix is singular".into()))?;
    Ok(sol.rows(0, c).into_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cholesky_spd, max_abs};
    use crate::rng::{normal, seeded_rng, uniform};

    fn qp_from_quad(q: &Mat, b: Vec<f64>, cones: Vec<ConeBlock>) -> ConeQp {
        let l = cholesky_spd(q).unwrap();
        ConeQp::new(l.transpose(), Vector::from_vec(b), cones).unwrap()
    }

    fn block(dim: usize, mu: f64, lb: f64) -> ConeBlock {
        ConeBlock {
            dim,
            mu,
            lower_bound: lb,
        }
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_cone(&[1.0, 0.5], 1.0, 0.0), vec![1.0, 0.5]);
        assert_eq!(project_cone(&[-1.0, 0.5], 1.0, 0.0), vec![0.0, 0.0]);
        let p = project_cone(&[0.0, 3.0], 1.0, 0.0);
        assert!((p[0] - 1.5).abs() < 1e-15 && (p[1] - 1.5).abs() < 1e-15);
        assert_eq!(project_cone(&[-2.0], 0.3, 0.5), vec![0.5]);
        let p = project_cone(&[-0.5, 3.0], 0.5, 1.0);
        assert_eq!(p, vec![1.0, 0.5]);
        let p = project_cone(&[2.0, -3.0, 4.0], 0.0, 0.0);
        assert_eq!(p, vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn closed_form_matches_dykstra() {
        let mut rng = seeded_rng(5);
        for _ in 0..500 {
            let d = 1 + (uniform(&mut rng, 0.0, 3.0) as usize);
            let mu = uniform(&mut rng, 0.0, 2.0);
            let lb = if uniform(&mut rng, 0.0, 1.0) < 0.3 { 0.0 } else { uniform(&mut rng, 0.0, 2.0) };
            let y: Vec<f64> = (0..d).map(|_| 2.0 * normal(&mut rng)).collect();
            let a = project_cone(&y, mu, lb);
            let b = project_cone_dykstra_sweeps(&y, mu, lb, 1_000_000);
            let err = inf_norm(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
            assert!(err < 1e-8, "y={y:?} mu={mu} lb={lb}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn in_place_matches_allocating_projection() {
        let mut rng = seeded_rng(8);
        for _ in 0..500 {
            let d = 1 + (uniform(&mut rng, 0.0, 3.0) as usize);
            let mu = uniform(&mut rng, 0.0, 2.0);
            let lb = uniform(&mut rng, 0.0, 1.0);
            let y: Vec<f64> = (0..d).map(|_| 2.0 * normal(&mut rng)).collect();
            let mut z = y.clone();
            project_cone_in_place(&mut z, mu, lb);
            let p = project_cone(&y, mu, lb);
            assert!(z.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12), "{z:?} {p:?}");
        }
    }

    proptest::proptest! {
        #[test]
        fn projection_is_feasible_idempotent_and_optimal(
            y in proptest::collection::vec(-5.0f64..5.0, 3),
            mu in 0.0f64..2.0,
            lb in 0.0f64..1.5,
            z in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let p = project_cone(&y, mu, lb);
            let t = (p[1] * p[1] + p[2] * p[2]).sqrt();
            proptest::prop_assert!(p[0] >= lb - 1e-12);
            proptest::prop_assert!(mu * p[0] - t >= -1e-12);
            let pp = project_cone(&p, mu, lb);
            proptest::prop_assert!(p.iter().zip(&pp).all(|(a, b)| (a - b).abs() < 1e-12));
            // variational inequality against an arbitrary feasible point
            let zf = project_cone(&z, mu, lb);
            let ip: f64 = (0..3).map(|i| (y[i] - p[i]) * (zf[i] - p[i])).sum();
            proptest::prop_assert!(ip <= 1e-9);
        }
    }

    #[test]
    fn zero_problem_converges_immediately() {
        let qp = qp_from_quad(&Mat::identity(2, 2), vec![0.0, 0.0], vec![block(2, 0.5, 0.0)]);
        let s = solve(&qp, &SolverOptions::default());
        assert!(s.converged);
        assert_eq!(s.f, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 1);
    }

    #[test]
    fn unconstrained_interior_minimum() {
        // minimizer −Q⁻¹b lies inside the cone
        let q = Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let target = Vector::from_vec(vec![1.0, 0.2]);
        let b = -(&q * &target);
        let qp = qp_from_quad(&q, b.as_slice().to_vec(), vec![block(2, 0.5, 0.0)]);
        let s = solve(&qp, &SolverOptions::default());
        assert!(s.converged);
        assert!((s.f[0] - 1.0).abs() < 1e-9 && (s.f[1] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn sticking_versus_sliding() {
        // single 2D contact with identity inertia: approaching with normal
        // speed 1 and tangential speed 0.2 sticks for μ = 0.5, slides for
        // μ = 0.1
        let q = Mat::identity(2, 2);
        let stick = solve(&qp_from_quad(&q, vec![-1.0, 0.2], vec![block(2, 0.5, 0.0)]), &SolverOptions::default());
        assert!((stick.f[0] - 1.0).abs() < 1e-9 && (stick.f[1] + 0.2).abs() < 1e-9);
        let slide = solve(&qp_from_quad(&q, vec![-1.0, 0.2], vec![block(2, 0.1, 0.0)]), &SolverOptions::default());
        // with identity inertia the answer is the projection of the free
        // solution onto the cone
        let expected = project_cone(&[1.0, -0.2], 0.1, 0.0);
        assert!((slide.f[0] - expected[0]).abs() < 1e-9 && (slide.f[1] - expected[1]).abs() < 1e-9);
        assert!((slide.f[1] + 0.1 * slide.f[0]).abs() < 1e-9, "{:?}", slide.f);
    }

    #[test]
    fn restitution_example_from_bound() {
        // f_n bounded below, friction on the bound's disk
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let s = solve(&qp_from_quad(&q, vec![0.5, 0.5], vec![block(2, 0.3, 1.0)]), &SolverOptions::default());
        assert!(s.converged);
        assert!(s.f[0] >= 1.0 - 1e-12);
        assert!(qp_from_quad(&q, vec![0.5, 0.5], vec![block(2, 0.3, 1.0)]).is_feasible(&s.f, 1e-12));
    }

    fn random_qp(seed: u64, blocks: usize, dim: usize) -> ConeQp {
        let mut rng = seeded_rng(seed);
        let c = blocks * dim;
        let g = Mat::from_fn(c + 2, c, |_, _| normal(&mut rng));
        let b = Vector::from_fn(c, |_, _| normal(&mut rng));
        let cones = (0..blocks)
            .map(|_| block(dim, uniform(&mut rng, 0.1, 1.0), uniform(&mut rng, 0.0, 0.5)))
            .collect();
        ConeQp::new(g, b, cones).unwrap()
    }

    #[test]
    fn solution_satisfies_fixed_point_and_beats_perturbations() {
        for seed in 0..20 {
            let qp = random_qp(seed, 3, 3);
            let s = solve(&qp, &SolverOptions::default());
            assert!(s.converged, "seed {seed}");
            assert!(qp.is_feasible(&s.f, 1e-12));
            let mut rng = seeded_rng(1000 + seed);
            for _ in 0..50 {
                let mut z: Vec<f64> = s.f.iter().map(|a| a + 0.01 * normal(&mut rng)).collect();
                qp.project(&mut z);
                assert!(qp.objective(&z) >= s.objective - 1e-10);
            }
        }
    }

    #[test]
    fn warm_start_reaches_same_minimizer() {
        let qp = random_qp(3, 4, 2);
        let cold = solve(&qp, &SolverOptions::default());
        let warm = solve_from(&qp, &cold.f, &SolverOptions::default());
        assert!(warm.iterations <= 2);
        assert!(inf_norm(&cold.f.iter().zip(&warm.f).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-9);
    }

    #[test]
    fn history_records_objective() {
        let qp = random_qp(4, 2, 3);
        let s = solve(&qp, &SolverOptions { record_history: true, ..Default::default() });
        assert_eq!(s.history.len(), s.iterations);
        assert!((s.history.last().unwrap() - s.objective).abs() < 1e-12);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let qp = random_qp(6, 3, 3);
        let opts = SolverOptions {
            tol: 1e-16,
            max_iter: 3,
            record_history: false,
        };
        assert!(matches!(
            solve_checked(&qp, None, &opts, 1e-16),
            Err(Error::SolverNotConverged { iterations: 3, .. })
        ));
    }

    #[test]
    fn limiting_sensitivities() {
        // stick: ∂f/∂b = −Q⁻¹
        let q = Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let qp = qp_from_quad(&q, vec![-2.0, 0.1], vec![block(2, 100.0, 0.0)]);
        let s = solve(&qp, &SolverOptions::default());
        let inv = q.clone().try_inverse().unwrap();
        for method in [SensitivityMethod::Kkt, SensitivityMethod::FiniteDifference] {
            let d = sensitivity(&qp, &s.f, SensitivityInput::Linear, method).unwrap();
            assert!(max_abs(&(&d + &inv)) < 1e-6, "{method:?}: {d}");
        }
        // μ = 0: ∂f_n/∂b_n = −1/Q_nn
        let qp = qp_from_quad(&q, vec![-2.0, 0.1], vec![block(2, 0.0, 0.0)]);
        let s = solve(&qp, &SolverOptions::default());
        for method in [SensitivityMethod::Kkt, SensitivityMethod::FiniteDifference] {
            let d = sensitivity(&qp, &s.f, SensitivityInput::Linear, method).unwrap();
            assert!((d[(0, 0)] + 0.5).abs() < 1e-6, "{method:?}: {d}");
        }
    }

    #[test]
    fn kkt_and_finite_differences_agree() {
        let mut checked = 0;
        for seed in 0..40 {
            let qp = random_qp(100 + seed, 2, 3);
            let s = solve(&qp, &SolverOptions {
                tol: 1e-13,
                max_iter: 200_000,
                record_history: false,
            });
            for input in [SensitivityInput::Linear, SensitivityInput::Mu, SensitivityInput::LowerBound] {
                let kkt = match sensitivity(&qp, &s.f, input, SensitivityMethod::Kkt) {
                    Ok(k) => k,
                    Err(Error::DegenerateActiveSet(_)) => continue,
                    Err(e) => panic!("{e}"),
                };
                let fd = sensitivity(&qp, &s.f, input, SensitivityMethod::FiniteDifference).unwrap();
                let err = max_abs(&(&kkt - &fd));
                assert!(err < 1e-4 * (1.0 + max_abs(&fd)), "seed {seed} {input:?}: {err}\n{kkt}\n{fd}");
                checked += 1;
            }
        }
        assert!(checked > 60, "only {checked} nondegenerate cases");
    }
}
