//! Reference computations written independently of the library code paths
//! they check.

#![allow(dead_code)]

use diffcontact::model::{BodyKind, PhysParams, State, SystemSpec};
use nalgebra::DMatrix;

/// Brute-force minimizer of `½fᵀQf + bᵀf` over a product of 2D friction
/// cones `{ μ f_n ≥ |f_t|, f_n ≥ lb }` (component order normal, tangent).
///
/// Each block is parametrized as `(f_n, s)` with `f_t = μ f_n s`,
/// `s ∈ [−1, 1]`, which turns the feasible set into a box. A uniform grid
/// over the box picks the start of a compass search whose step halves
/// until it falls below `1e-13`.
pub struct GridOracle {
    pub q: DMatrix<f64>,
    pub b: Vec<f64>,
    /// `(μ, lower bound)` per block.
    pub blocks: Vec<(f64, f64)>,
}

impl GridOracle {
    fn objective(&self, f: &[f64]) -> f64 {
        let n = f.len();
        let mut v = 0.0;
        for i in 0..n {
            v += self.b[i] * f[i];
            for j in 0..n {
                v += 0.5 * f[i] * self.q[(i, j)] * f[j];
            }
        }
        v
    }

    fn to_impulse(&self, p: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(p.len());
        for (k, &(mu, _)) in self.blocks.iter().enumerate() {
            let fnorm = p[2 * k];
            f.push(fnorm);
            f.push(mu * fnorm * p[2 * k + 1]);
        }
        f
    }

    fn eval(&self, p: &[f64]) -> f64 {
        self.objective(&self.to_impulse(p))
    }

    /// Box bounds of the parametrization.
    fn bounds(&self) -> Vec<(f64, f64)> {
        // ½λ_min‖f‖² − ‖b‖‖f‖ > 0 beyond 2‖b‖/λ_min, so the minimizer is inside
        let lam = self.q.clone().symmetric_eigenvalues().min();
        let bn = self.b.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut out = vec![];
        for &(_, lb) in &self.blocks {
            let hi = (2.0 * bn / lam).max(lb) + lb + 1e-3;
            out.push((lb, hi));
            out.push((-1.0, 1.0));
        }
        out
    }

    pub fn solve(&self, per_axis: usize) -> Vec<f64> {
        let bounds = self.bounds();
        let n = bounds.len();
        let mut best = (f64::INFINITY, vec![0.0; n]);
        let mut idx = vec![0usize; n];
        loop {
            let p: Vec<f64> = idx
                .iter()
                .zip(&bounds)
                .map(|(&i, &(lo, hi))| lo + (hi - lo) * i as f64 / (per_axis - 1) as f64)
                .collect();
            let v = self.eval(&p);
            if v < best.0 {
                best = (v, p);
            }
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        let (mut fbest, mut p) = best;
        let mut step: Vec<f64> = bounds.iter().map(|(lo, hi)| (hi - lo) / (per_axis - 1) as f64).collect();
        // compass search over coordinate and pairwise diagonal directions
        let mut dirs: Vec<Vec<f64>> = vec![];
        for i in 0..n {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            dirs.push(d);
            for j in (i + 1)..n {
                for s in [1.0, -1.0] {
                    let mut d = vec![0.0; n];
                    d[i] = 1.0;
                    d[j] = s;
                    dirs.push(d);
                }
            }
        }
        while step.iter().cloned().fold(0.0, f64::max) > 1e-13 {
            let mut improved = false;
            for d in &dirs {
                for sign in [1.0, -1.0] {
                    let cand: Vec<f64> = (0..n)
                        .map(|i| (p[i] + sign * d[i] * step[i]).clamp(bounds[i].0, bounds[i].1))
                        .collect();
                    let v = self.eval(&cand);
                    if v < fbest {
                        fbest = v;
                        p = cand;
                        improved = true;
                    }
                }
            }
            if !improved {
                for s in step.iter_mut() {
                    *s *= 0.5;
                }
            }
        }
        self.to_impulse(&p)
    }
}

/// `½ m|ċ|² + ½ m Σ_j s_j |ȧ_j|²` per body, with `a_j` the offset of axis
/// tip `j` from the centre; point bodies keep only the first term.
pub fn kinetic_energy(spec: &SystemSpec, params: &PhysParams, s: &State) -> f64 {
    let d = spec.ambient_dim;
    let vel = |p: usize| &s.v[p * d..(p + 1) * d];
    let sq = |a: &[f64]| a.iter().map(|x| x * x).sum::<f64>();
    let mut e = 0.0;
    for (body, &m) in spec.bodies.iter().zip(&params.masses) {
        let vc = vel(body.points[0]);
        e += 0.5 * m * sq(vc);
        if let BodyKind::Extended { second_moments } = &body.kind {
            for (j, sj) in second_moments.iter().enumerate() {
                let vt = vel(body.points[j + 1]);
                let rel: Vec<f64> = vt.iter().zip(vc).map(|(a, b)| a - b).collect();
                e += 0.5 * m * sj * sq(&rel);
            }
        }
    }
    e
}

/// Gravity acts along the last ambient axis; springs are Hookean.
pub fn potential_energy(spec: &SystemSpec, params: &PhysParams, s: &State) -> f64 {
    let d = spec.ambient_dim;
    let mut e = 0.0;
    let mut k = 0;
    if spec.potential.gravity {
        let g = params.potential_constants[k];
        k += 1;
        for (body, &m) in spec.bodies.iter().zip(&params.masses) {
            e += m * g * s.x[body.points[0] * d + d - 1];
        }
    }
    if !spec.potential.springs.is_empty() {
        let stiff = params.potential_constants[k];
        for sp in &spec.potential.springs {
            let len = (0..d)
                .map(|i| (s.x[sp.a * d + i] - s.x[sp.b * d + i]).powi(2))
                .sum::<f64>()
                .sqrt();
            e += 0.5 * stiff * (len - sp.rest_length).powi(2);
        }
    }
    e
}

pub fn total_energy(spec: &SystemSpec, params: &PhysParams, s: &State) -> f64 {
    kinetic_energy(spec, params, s) + potential_energy(spec, params, s)
}
