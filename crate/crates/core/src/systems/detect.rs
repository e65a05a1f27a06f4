use crate::contact::{frictional_rows, tangent_basis, ActiveContact, ActiveContactSet};
use crate::linalg::Mat;
use crate::model::{BodyDescriptor, BodyKind, CandidateKind, Shape, SystemSpec};

fn point(x: &[f64], i: usize, n: usize) -> &[f64] {
    &x[i * n..(i + 1) * n]
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Point weights expressing the material point of `body` that currently
/// sits at `p`, so that its velocity is `Σ w v_point`.
fn material_weights(body: &BodyDescriptor, x: &[f64], n: usize, p: &[f64]) -> Vec<(usize, f64)> {
    match body.kind {
        BodyKind::Point => vec![(body.points[0], 1.0)],
        BodyKind::Extended { .. } => {
            let c = point(x, body.points[0], n);
            let o = sub(p, c);
            let mut out = vec![(body.points[0], 1.0)];
            for &tip in &body.points[1..] {
                let u = sub(point(x, tip, n), c);
                let a = dot(&o, &u) / dot(&u, &u);
                out[0].1 -= a;
                out.push((tip, a));
            }
            out
        }
    }
}

/// Point of the body surface deepest along `-normal`.
fn support_point(body: &BodyDescriptor, x: &[f64], n: usize, normal: &[f64]) -> Vec<f64> {
    let c = point(x, body.points[0], n);
    match body.shape {
        Shape::Round => c.iter().zip(normal).map(|(ci, ni)| ci - body.radius * ni).collect(),
        Shape::Disk { axis } => {
            let u = sub(point(x, body.points[axis + 1], n), c);
            let lu = norm(&u);
            let u: Vec<f64> = u.iter().map(|a| a / lu).collect();
            let nu = dot(normal, &u);
            let mut w: Vec<f64> = normal.iter().zip(&u).map(|(ni, ui)| ni - nu * ui).collect();
            let lw = norm(&w);
            if lw < 1e-9 {
                // face-on: any rim point is deepest, take the first in-plane axis
                let other = if axis == 0 { 1 } else { 0 };
                w = sub(point(x, body.points[other + 1], n), c);
                let lo = norm(&w);
                w.iter_mut().for_each(|a| *a /= lo);
            } else {
                w.iter_mut().for_each(|a| *a /= lw);
            }
            c.iter().zip(&w).map(|(ci, wi)| ci - body.radius * wi).collect()
        }
    }
}

fn limit_contact(candidate: usize, class: usize, dim: usize, penetration: f64, grad: &[(usize, Vec<f64>)], n: usize) -> ActiveContact {
    let mut rows = Mat::zeros(1, dim);
    for (p, g) in grad {
        for d in 0..n {
            rows[(0, p * n + d)] += g[d];
        }
    }
    ActiveContact {
        candidate,
        class,
        dim: 1,
        normal: vec![1.0],
        tangents: vec![],
        penetration,
        jacobian_rows: rows,
    }
}

fn frictional_contact(spec: &SystemSpec, candidate: usize, class: usize, normal: Vec<f64>, penetration: f64, terms: &[(usize, f64)]) -> ActiveContact {
    let n = spec.ambient_dim;
    let tangents = tangent_basis(&normal);
    let rows = frictional_rows(spec.dim(), n, &normal, &tangents, terms);
    ActiveContact {
        candidate,
        class,
        dim: n,
        normal,
        tangents,
        penetration,
        jacobian_rows: rows,
    }
}

/// Contacts active at positions `x`, in candidate order. A candidate is
/// active when its gap is strictly negative.
pub fn detect_contacts(spec: &SystemSpec, x: &[f64]) -> ActiveContactSet {
    let n = spec.ambient_dim;
    let dim = spec.dim();
    let mut contacts = vec![];
    for (ci, cand) in spec.contact_candidates.iter().enumerate() {
        match &cand.kind {
            CandidateKind::BodyPair { a, b } => {
                let (ba, bb) = (&spec.bodies[*a], &spec.bodies[*b]);
                let ca = point(x, ba.points[0], n);
                let cb = point(x, bb.points[0], n);
                let d = sub(ca, cb);
                let dist = norm(&d);
                let pen = ba.radius + bb.radius - dist;
                if pen <= 0.0 {
                    continue;
                }
                let normal: Vec<f64> = if dist > 0.0 {
                    d.iter().map(|a| a / dist).collect()
                } else {
                    let mut e = vec![0.0; n];
                    e[0] = 1.0;
                    e
                };
                let p: Vec<f64> = (0..n)
                    .map(|k| 0.5 * ((cb[k] + bb.radius * normal[k]) + (ca[k] - ba.radius * normal[k])))
                    .collect();
                let mut terms = material_weights(ba, x, n, &p);
                terms.extend(material_weights(bb, x, n, &p).into_iter().map(|(i, w)| (i, -w)));
                contacts.push(frictional_contact(spec, ci, cand.class, normal, pen, &terms));
            }
            CandidateKind::BodyPlane { body, normal, offset } => {
                let b = &spec.bodies[*body];
                let p = support_point(b, x, n, normal);
                let pen = offset - dot(normal, &p);
                if pen <= 0.0 {
                    continue;
                }
                let terms = material_weights(b, x, n, &p);
                contacts.push(frictional_contact(spec, ci, cand.class, normal.clone(), pen, &terms));
            }
            CandidateKind::Stretch {
                a,
                b,
                rest_length,
                min_ratio,
                max_ratio,
            } => {
                let d = sub(point(x, *a, n), point(x, *b, n));
                let s = norm(&d);
                let u: Vec<f64> = d.iter().map(|v| v / s).collect();
                let neg: Vec<f64> = u.iter().map(|v| -v).collect();
                let (hi, lo) = (max_ratio * rest_length, min_ratio * rest_length);
                if s > hi {
                    // gap hi − s grows when the points approach
                    contacts.push(limit_contact(ci, cand.class, dim, s - hi, &[(*a, neg), (*b, u)], n));
                } else if s < lo {
                    contacts.push(limit_contact(ci, cand.class, dim, lo - s, &[(*a, u), (*b, neg)], n));
                }
            }
            CandidateKind::Bend { a, b, c, max_angle } => {
                let u = sub(point(x, *b, n), point(x, *a, n));
                let w = sub(point(x, *c, n), point(x, *b, n));
                let cross = u[0] * w[1] - u[1] * w[0];
                let theta = cross.atan2(dot(&u, &w));
                if theta.abs() <= *max_angle {
                    continue;
                }
                let (uu, ww) = (dot(&u, &u), dot(&w, &w));
                let d_u = [u[1] / uu, -u[0] / uu];
                let d_w = [-w[1] / ww, w[0] / ww];
                let s = -theta.signum();
                let ga = vec![-s * d_u[0], -s * d_u[1]];
                let gb = vec![s * (d_u[0] - d_w[0]), s * (d_u[1] - d_w[1])];
                let gc = vec![s * d_w[0], s * d_w[1]];
                contacts.push(limit_contact(
                    ci,
                    cand.class,
                    dim,
                    theta.abs() - max_angle,
                    &[(*a, ga), (*b, gb), (*c, gc)],
                    n,
                ));
            }
        }
    }
    ActiveContactSet { contacts }
}
