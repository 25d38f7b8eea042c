//! Sublevel sections `{u - l < h}` of a lattice function, with `l` the tangent plane at a node.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub level: f64,
    /// Lattice node used as the base point.
    pub base: Vec<f64>,
    pub base_value: f64,
    /// Slope of the subtracted tangent plane.
    pub slope: Vec<f64>,
    /// Edge crossings of the level set.
    pub points: Vec<Vec<f64>>,
    /// Unit outward normals of the level set at the crossings.
    pub normals: Vec<Vec<f64>>,
    pub spacing: f64,
    /// Number of lattice nodes inside the section.
    pub interior_nodes: usize,
}

impl Section {
    pub fn n(&self) -> usize {
        self.base.len()
    }

    /// `max_j n_j . (x - p_j)`: nonpositive inside the tangent-halfspace polytope.
    pub fn polytope_excess(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(&self.normals)
            .map(|(p, nv)| nv.iter().zip(x.iter().zip(p)).map(|(a, (xi, pi))| a * (xi - pi)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn centroid(&self) -> Vec<f64> {
        let m = self.points.len() as f64;
        (0..self.n()).map(|a| self.points.iter().map(|p| p[a]).sum::<f64>() / m).collect()
    }
}

/// Extracts `{u - l < h}` where `l` is the tangent plane at the node nearest `x0`,
/// with central-difference slope. The level set is returned as its lattice-edge crossings.
pub fn extract_section(u: &GridFunction, x0: &[f64], h: f64) -> Result<Section> {
    if x0.len() != u.n() {
        return Err(Error::Argument(format!("base point has dimension {}, field has {}", x0.len(), u.n())));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Argument(format!("section height must be positive, got {h}")));
    }
    let i0 = u
        .nearest(x0)
        .filter(|&i| u.has_stencil(i, 1))
        .ok_or_else(|| Error::Argument(format!("base point {x0:?} is not an interior lattice node")))?;
    let slope = u.gradient(i0).expect("interior node");
    let base = u.point(i0);
    let base_value = u.values()[i0];
    let n = u.n();
    let sub = |i: usize| -> f64 {
        let x = u.point(i);
        u.values()[i] - base_value - (0..n).map(|a| slope[a] * (x[a] - base[a])).sum::<f64>()
    };
    let grad_sub = |i: usize| -> Option<Vec<f64>> { u.gradient(i).map(|g| g.iter().zip(&slope).map(|(a, b)| a - b).collect()) };

    let mut seen = vec![false; u.len()];
    let mut queue = VecDeque::from([i0]);
    seen[i0] = true;
    let mut points = Vec::new();
    let mut normals = Vec::new();
    let mut count = 0usize;
    let sp = u.spacing();
    while let Some(i) = queue.pop_front() {
        count += 1;
        let vi = sub(i);
        for a in 0..n {
            for s in [-1isize, 1] {
                let Some(j) = u.neighbor(i, a, s) else {
                    return Err(Error::Containment);
                };
                let vj = sub(j);
                if vj < h {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                    continue;
                }
                let t = (h - vi) / (vj - vi);
                let mut p = u.point(i);
                p[a] += s as f64 * t * sp;
                let g = match (grad_sub(i), grad_sub(j)) {
                    (Some(gi), Some(gj)) => gi.iter().zip(&gj).map(|(x, y)| (1.0 - t) * x + t * y).collect(),
                    (Some(gi), None) => gi,
                    (None, Some(gj)) => gj,
                    (None, None) => return Err(Error::Containment),
                };
                let norm = g.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    return Err(Error::Degenerate(format!("flat level set at {p:?}")));
                }
                points.push(p);
                normals.push(g.iter().map(|v| v / norm).collect());
            }
        }
    }
    if points.len() < n + 1 {
        return Err(Error::Rank(format!("section has only {} boundary points", points.len())));
    }
    Ok(Section {
        level: h,
        base,
        base_value,
        slope,
        points,
        normals,
        spacing: sp,
        interior_nodes: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn quadratic_section_is_a_ball() {
        let u = GridFunction::from_fn(Domain::cube(2, 1.0), 1.0 / 32.0, |x| 0.5 * (x[0] * x[0] + x[1] * x[1])).unwrap();
        let s = extract_section(&u, &[0.0, 0.0], 0.125).unwrap();
        let dev = s
            .points
            .iter()
            .map(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - 0.5).abs())
            .fold(0.0, f64::max);
        assert!(dev <= s.spacing, "{dev}");
    }

    #[test]
    fn tangent_subtraction_removes_planes() {
        let d = Domain::cube(2, 1.0);
        let u = GridFunction::from_fn(d.clone(), 0.0625, |x| 0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1])).unwrap();
        let v = GridFunction::from_fn(d, 0.0625, |x| 0.5 * (x[0] * x[0] + 4.0 * x[1] * x[1]) + 0.3 * x[0] - 0.7 * x[1] + 2.0).unwrap();
        let a = extract_section(&u, &[0.0, 0.0], 0.1).unwrap();
        let b = extract_section(&v, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(a.points.len(), b.points.len());
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((p[0] - q[0]).abs() < 1e-10 && (p[1] - q[1]).abs() < 1e-10);
        }
    }

    #[test]
    fn touching_the_boundary_is_a_containment_error() {
        let u = GridFunction::from_fn(Domain::cube(2, 1.0), 0.125, |x| 0.5 * (x[0] * x[0] + x[1] * x[1])).unwrap();
        assert!(matches!(extract_section(&u, &[0.0, 0.0], 0.6), Err(Error::Containment)));
    }
}
