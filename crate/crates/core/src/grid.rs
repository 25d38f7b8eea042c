//! Scalar fields sampled on uniform lattices over boxes and balls, with
//! central-difference derivative access and a flat binary file format.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn cube(n: usize, half: f64) -> Self {
        Domain::Box {
            lo: vec![-half; n],
            hi: vec![half; n],
        }
    }

    pub fn ball(n: usize, radius: f64) -> Self {
        Domain::Ball {
            center: vec![0.0; n],
            radius,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lo, .. } => lo.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Domain::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.len() < 2 {
                    return Err(Error::Argument("box corners must share a dimension >= 2".into()));
                }
                if lo.iter().zip(hi).any(|(a, b)| !(b > a)) {
                    return Err(Error::Argument("box needs lo < hi on every axis".into()));
                }
            }
            Domain::Ball { center, radius } => {
                if center.len() < 2 || !(*radius > 0.0) {
                    return Err(Error::Argument("ball needs dimension >= 2 and radius > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(v, (a, b))| *v >= a - 1e-12 * (1.0 + a.abs()) && *v <= b + 1e-12 * (1.0 + b.abs())),
            Domain::Ball { center, radius } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                d2.sqrt() <= radius * (1.0 + 1e-12)
            }
        }
    }

    /// Axis-aligned bounding box.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Box { lo, hi } => (lo.clone(), hi.clone()),
            Domain::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
        }
    }

    /// True when `x` is a lattice point on the domain boundary, or its
    /// neighbour along some axis at distance `h` leaves the domain.
    pub fn is_boundary_node(&self, x: &[f64], h: f64) -> bool {
        let mut y = x.to_vec();
        for a in 0..x.len() {
            for s in [-1.0, 1.0] {
                y[a] = x[a] + s * h;
                if !self.contains(&y) {
                    return true;
                }
            }
            y[a] = x[a];
        }
        false
    }
}

/// A field that can be probed at arbitrary points.
pub trait Field: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Option<f64>;
    /// Laplacian at `x`; `scale` is the local length scale of interest.
    fn laplacian_at(&self, x: &[f64], scale: f64) -> Option<f64>;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
}

/// A closed-form field with Laplacian by central differences at a step tied to the scale hint.
pub struct FnField<F> {
    pub dim: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Field for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        Some((self.f)(x))
    }

    fn laplacian_at(&self, x: &[f64], scale: f64) -> Option<f64> {
        let h = 1e-3 * scale.max(1e-12);
        let c = (self.f)(x);
        let mut y = x.to_vec();
        let mut lap = 0.0;
        for a in 0..self.dim {
            y[a] = x[a] + h;
            let p = (self.f)(&y);
            y[a] = x[a] - h;
            let m = (self.f)(&y);
            y[a] = x[a];
            lap += (p - 2.0 * c + m) / (h * h);
        }
        Some(lap)
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.lo.clone(), self.hi.clone())
    }
}

/// Scalar field on a uniform lattice. Nodes outside the domain hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    domain: Domain,
    origin: Vec<f64>,
    dims: Vec<usize>,
    strides: Vec<usize>,
    h: f64,
    mask: Vec<bool>,
    values: Vec<f64>,
}

fn strides_for(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for a in (0..dims.len().saturating_sub(1)).rev() {
        s[a] = s[a + 1] * dims[a + 1];
    }
    s
}

impl GridFunction {
    /// Empty lattice (all in-domain values zero) with spacing `h`.
    ///
    /// Box sides must be integer multiples of `h`; ball lattices are centred.
    pub fn lattice(domain: Domain, h: f64) -> Result<Self> {
        domain.validate()?;
        if !(h > 0.0) {
            return Err(Error::Argument(format!("spacing must be positive, got {h}")));
        }
        let (origin, dims) = match &domain {
            Domain::Box { lo, hi } => {
                let mut dims = Vec::with_capacity(lo.len());
                for (a, b) in lo.iter().zip(hi) {
                    let cells = ((b - a) / h).round();
                    if ((cells * h) - (b - a)).abs() > 1e-9 * (b - a) {
                        return Err(Error::Argument(format!("box side {} is not a multiple of h={h}", b - a)));
                    }
                    dims.push(cells as usize + 1);
                }
                (lo.clone(), dims)
            }
            Domain::Ball { center, radius } => {
                let cells = (2.0 * radius / h + 1e-9).floor() as usize;
                let half = cells as f64 * h / 2.0;
                (center.iter().map(|c| c - half).collect(), vec![cells + 1; center.len()])
            }
        };
        if dims.iter().any(|&d| d < 3) {
            return Err(Error::Argument("lattice needs at least 3 nodes per axis".into()));
        }
        let total: usize = dims.iter().product();
        if total > 50_000_000 {
            return Err(Error::Argument(format!("lattice of {total} nodes is too large")));
        }
        let strides = strides_for(&dims);
        let mut g = Self {
            domain,
            origin,
            dims,
            strides,
            h,
            mask: vec![true; total],
            values: vec![0.0; total],
        };
        for i in 0..total {
            let inside = g.domain.contains(&g.point(i));
            g.mask[i] = inside;
            if !inside {
                g.values[i] = f64::NAN;
            }
        }
        Ok(g)
    }

    /// Samples `f` at every in-domain node.
    pub fn from_fn(domain: Domain, h: f64, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut g = Self::lattice(domain, h)?;
        for i in 0..g.values.len() {
            if g.mask[i] {
                g.values[i] = f(&g.point(i));
            }
        }
        Ok(g)
    }

    /// New field on the same lattice.
    pub fn map_nodes(&self, f: impl Fn(usize, &[f64]) -> f64) -> Self {
        let mut g = self.clone();
        for i in 0..g.values.len() {
            if g.mask[i] {
                g.values[i] = f(i, &g.point(i));
            }
        }
        g
    }

    pub fn n(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn inside(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn upper(&self) -> Vec<f64> {
        self.origin
            .iter()
            .zip(&self.dims)
            .map(|(o, d)| o + (*d as f64 - 1.0) * self.h)
            .collect()
    }

    pub fn multi(&self, mut i: usize) -> Vec<usize> {
        let mut m = vec![0; self.n()];
        for a in 0..self.n() {
            m[a] = i / self.strides[a];
            i %= self.strides[a];
        }
        m
    }

    pub fn flat(&self, m: &[usize]) -> usize {
        m.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let mut rem = i;
        let mut x = vec![0.0; self.n()];
        for a in 0..self.n() {
            let c = rem / self.strides[a];
            rem %= self.strides[a];
            x[a] = self.origin[a] + c as f64 * self.h;
        }
        x
    }

    /// Node nearest to `x`, if it lies in the lattice.
    pub fn nearest(&self, x: &[f64]) -> Option<usize> {
        let mut m = Vec::with_capacity(self.n());
        for a in 0..self.n() {
            let c = ((x[a] - self.origin[a]) / self.h).round();
            if c < 0.0 || c >= self.dims[a] as f64 {
                return None;
            }
            m.push(c as usize);
        }
        Some(self.flat(&m))
    }

    /// Neighbour of node `i` shifted by `delta` along `axis`, if in the lattice and domain.
    pub fn neighbor(&self, i: usize, axis: usize, delta: isize) -> Option<usize> {
        let c = (i / self.strides[axis]) % self.dims[axis];
        let t = c as isize + delta;
        if t < 0 || t >= self.dims[axis] as isize {
            return None;
        }
        let j = (i as isize + delta * self.strides[axis] as isize) as usize;
        self.mask[j].then_some(j)
    }

    /// True if every node of the cube of half-width `radius` around `i` is in the domain.
    pub fn has_stencil(&self, i: usize, radius: usize) -> bool {
        if !self.mask[i] {
            return false;
        }
        let m = self.multi(i);
        let r = radius as isize;
        for a in 0..self.n() {
            let c = m[a] as isize;
            if c - r < 0 || c + r >= self.dims[a] as isize {
                return false;
            }
        }
        // both domain kinds are convex, so checking the cube corners suffices
        let n = self.n();
        for corner in 0..(1usize << n) {
            let mut j = i as isize;
            for a in 0..n {
                let s = if corner >> a & 1 == 1 { r } else { -r };
                j += s * self.strides[a] as isize;
            }
            if !self.mask[j as usize] {
                return false;
            }
        }
        true
    }

    /// True for in-domain nodes with every axis neighbour in the domain.
    pub fn is_interior(&self, i: usize) -> bool {
        self.has_stencil(i, 1)
    }

    #[inline]
    fn at(&self, i: usize, shifts: &[(usize, isize)]) -> f64 {
        let mut j = i as isize;
        for &(a, d) in shifts {
            j += d * self.strides[a] as isize;
        }
        self.values[j as usize]
    }

    pub fn gradient(&self, i: usize) -> Option<Vec<f64>> {
        if !self.has_stencil(i, 1) {
            return None;
        }
        Some(
            (0..self.n())
                .map(|a| (self.at(i, &[(a, 1)]) - self.at(i, &[(a, -1)])) / (2.0 * self.h))
                .collect(),
        )
    }

    /// Second differences without a stencil check.
    pub(crate) fn hessian_unchecked(&self, i: usize) -> DMatrix<f64> {
        let n = self.n();
        let h2 = self.h * self.h;
        let c = self.values[i];
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            m[(a, a)] = (self.at(i, &[(a, 1)]) - 2.0 * c + self.at(i, &[(a, -1)])) / h2;
            for b in (a + 1)..n {
                let v = (self.at(i, &[(a, 1), (b, 1)]) - self.at(i, &[(a, 1), (b, -1)]) - self.at(i, &[(a, -1), (b, 1)])
                    + self.at(i, &[(a, -1), (b, -1)]))
                    / (4.0 * h2);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        m
    }

    pub fn hessian(&self, i: usize) -> Option<DMatrix<f64>> {
        self.has_stencil(i, 1).then(|| self.hessian_unchecked(i))
    }

    pub fn laplacian(&self, i: usize) -> Option<f64> {
        if !self.has_stencil(i, 1) {
            return None;
        }
        let c = self.values[i];
        let h2 = self.h * self.h;
        Some(
            (0..self.n())
                .map(|a| (self.at(i, &[(a, 1)]) - 2.0 * c + self.at(i, &[(a, -1)])) / h2)
                .sum(),
        )
    }

    /// Fourth-order gradient on the radius-2 stencil.
    pub fn gradient4(&self, i: usize) -> Option<Vec<f64>> {
        if !self.has_stencil(i, 2) {
            return None;
        }
        Some((0..self.n()).map(|a| self.d1_4(i, a)).collect())
    }

    fn d1_4(&self, j: usize, a: usize) -> f64 {
        (8.0 * (self.at(j, &[(a, 1)]) - self.at(j, &[(a, -1)])) - (self.at(j, &[(a, 2)]) - self.at(j, &[(a, -2)])))
            / (12.0 * self.h)
    }

    /// Fourth-order Hessian on the radius-2 stencil.
    pub fn hessian4(&self, i: usize) -> Option<DMatrix<f64>> {
        if !self.has_stencil(i, 2) {
            return None;
        }
        let n = self.n();
        let h = self.h;
        let mut m = DMatrix::zeros(n, n);
        let shift = |a: usize, d: isize| (i as isize + d * self.strides[a] as isize) as usize;
        for a in 0..n {
            m[(a, a)] = (-self.at(i, &[(a, 2)]) + 16.0 * self.at(i, &[(a, 1)]) - 30.0 * self.values[i]
                + 16.0 * self.at(i, &[(a, -1)])
                - self.at(i, &[(a, -2)]))
                / (12.0 * h * h);
            for b in (a + 1)..n {
                let v = (8.0 * (self.d1_4(shift(a, 1), b) - self.d1_4(shift(a, -1), b))
                    - (self.d1_4(shift(a, 2), b) - self.d1_4(shift(a, -2), b)))
                    / (12.0 * h);
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        Some(m)
    }

    /// Full third-derivative tensor, flattened as `t[(a * n + b) * n + c]`.
    pub fn third(&self, i: usize) -> Option<Vec<f64>> {
        if !self.has_stencil(i, 2) {
            return None;
        }
        let n = self.n();
        let h = self.h;
        let h3 = h * h * h;
        let mut t = vec![0.0; n * n * n];
        let d2 = |j: usize, a: usize| -> f64 {
            (self.at(j, &[(a, 1)]) - 2.0 * self.values[j] + self.at(j, &[(a, -1)])) / (h * h)
        };
        let shifted = |a: usize, d: isize| -> usize { (i as isize + d * self.strides[a] as isize) as usize };
        for a in 0..n {
            for b in a..n {
                for c in b..n {
                    let v = if a == b && b == c {
                        (self.at(i, &[(a, 2)]) - 2.0 * self.at(i, &[(a, 1)]) + 2.0 * self.at(i, &[(a, -1)])
                            - self.at(i, &[(a, -2)]))
                            / (2.0 * h3)
                    } else if a == b || b == c {
                        let (rep, other) = if a == b { (a, c) } else { (b, a) };
                        (d2(shifted(other, 1), rep) - d2(shifted(other, -1), rep)) / (2.0 * h)
                    } else {
                        let mut s = 0.0;
                        for sa in [-1isize, 1] {
                            for sb in [-1isize, 1] {
                                for sc in [-1isize, 1] {
                                    s += (sa * sb * sc) as f64 * self.at(i, &[(a, sa), (b, sb), (c, sc)]);
                                }
                            }
                        }
                        s / (8.0 * h3)
                    };
                    for (p, q, r) in [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)] {
                        t[(p * n + q) * n + r] = v;
                    }
                }
            }
        }
        Some(t)
    }

    /// Multilinear interpolation of a per-node quantity; needs all cell corners in the domain.
    pub fn interpolate_with(&self, x: &[f64], node_value: impl Fn(usize) -> Option<f64>) -> Option<f64> {
        let n = self.n();
        let mut base = Vec::with_capacity(n);
        let mut frac = Vec::with_capacity(n);
        for a in 0..n {
            let t = (x[a] - self.origin[a]) / self.h;
            let last = (self.dims[a] - 1) as f64;
            if t < -1e-9 || t > last + 1e-9 {
                return None;
            }
            let t = t.clamp(0.0, last);
            let c = (t.floor() as usize).min(self.dims[a] - 2);
            base.push(c);
            frac.push(t - c as f64);
        }
        let i0 = self.flat(&base);
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut j = i0;
            for a in 0..n {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    j += self.strides[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w == 0.0 {
                continue;
            }
            if !self.mask[j] {
                return None;
            }
            acc += w * node_value(j)?;
        }
        Some(acc)
    }

    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        self.interpolate_with(x, |j| Some(self.values[j]))
    }

    /// Max of `|self - other|` over nodes in both domains.
    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a.is_finite() && b.is_finite())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Writes the binary payload to `path` and the JSON sidecar next to it.
    pub fn write(&self, path: &Path, metadata: serde_json::Value) -> Result<()> {
        let mut buf = Vec::with_capacity(8 * (1 + 3 * self.n() + 1 + self.len()));
        buf.extend_from_slice(&(self.n() as u64).to_le_bytes());
        for &d in &self.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &o in &self.origin {
            buf.extend_from_slice(&o.to_le_bytes());
        }
        for u in self.upper() {
            buf.extend_from_slice(&u.to_le_bytes());
        }
        buf.extend_from_slice(&self.h.to_le_bytes());
        for &v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        write_atomic(path, &buf)?;
        let sidecar = Sidecar {
            format: "hessq-grid".into(),
            version: 1,
            domain: self.domain.clone(),
            dims: self.dims.clone(),
            spacing: self.h,
            metadata,
        };
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        write_atomic(&sidecar_path(path), text.as_bytes())
    }

    /// Reads a grid file; the domain comes from the sidecar when present, else the header box.
    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let mut cur = 0usize;
        let mut word = || -> Result<[u8; 8]> {
            let w = bytes
                .get(cur..cur + 8)
                .ok_or_else(|| Error::Config(format!("{}: truncated grid file", path.display())))?;
            cur += 8;
            Ok(w.try_into().expect("8 bytes"))
        };
        let n = u64::from_le_bytes(word()?) as usize;
        if !(2..=8).contains(&n) {
            return Err(Error::Config(format!("{}: bad dimension {n}", path.display())));
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            dims.push(u64::from_le_bytes(word()?) as usize);
        }
        let mut lo = Vec::with_capacity(n);
        for _ in 0..n {
            lo.push(f64::from_le_bytes(word()?));
        }
        let mut hi = Vec::with_capacity(n);
        for _ in 0..n {
            hi.push(f64::from_le_bytes(word()?));
        }
        let h = f64::from_le_bytes(word()?);
        let total: usize = dims.iter().product();
        let mut values = Vec::with_capacity(total);
        for _ in 0..total {
            values.push(f64::from_le_bytes(word()?));
        }
        if word().is_ok() {
            return Err(Error::Config(format!("{}: trailing bytes in grid file", path.display())));
        }
        let domain = match std::fs::read_to_string(sidecar_path(path)) {
            Ok(text) => {
                let s: Sidecar = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: bad sidecar: {e}", path.display())))?;
                s.domain
            }
            Err(_) => Domain::Box { lo: lo.clone(), hi: hi.clone() },
        };
        let mut g = Self::lattice(domain, h)?;
        if g.dims != dims || g.origin.iter().zip(&lo).any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs())) {
            return Err(Error::Config(format!("{}: header does not match sidecar domain", path.display())));
        }
        for (i, v) in values.into_iter().enumerate() {
            if g.mask[i] {
                g.values[i] = v;
            }
        }
        Ok(g)
    }
}

impl Field for GridFunction {
    fn dim(&self) -> usize {
        self.n()
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        self.interpolate(x)
    }

    fn laplacian_at(&self, x: &[f64], _scale: f64) -> Option<f64> {
        self.interpolate_with(x, |j| self.laplacian(j))
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (self.origin.clone(), self.upper())
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: String,
    version: u32,
    domain: Domain,
    dims: Vec<usize>,
    spacing: f64,
    #[serde(default)]
    metadata: serde_json::Value,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes via a temporary file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let res = std::fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| std::fs::rename(&tmp, path));
    res.map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_shapes() {
        let g = GridFunction::lattice(Domain::cube(2, 1.0), 0.25).unwrap();
        assert_eq!(g.dims(), &[9, 9]);
        let b = GridFunction::lattice(Domain::ball(2, 1.0), 0.25).unwrap();
        assert_eq!(b.dims(), &[9, 9]);
        let corner = b.flat(&[0, 0]);
        assert!(!b.inside(corner));
        assert!(b.inside(b.flat(&[4, 0])));
        assert!(GridFunction::lattice(Domain::cube(2, 1.0), 0.3).is_err());
    }

    #[test]
    fn derivatives_exact_on_cubics() {
        let f = |x: &[f64]| x[0] * x[0] * x[1] + 0.5 * x[1] * x[1] * x[1] + x[0] * x[1] * x[2] + x[2] * x[2];
        let g = GridFunction::from_fn(Domain::cube(3, 1.0), 0.125, f).unwrap();
        let i = g.nearest(&[0.25, -0.5, 0.375]).unwrap();
        let x = g.point(i);
        let grad = g.gradient(i).unwrap();
        // central differences of a cubic carry an h^2/6 * f''' error
        let h2 = 0.125 * 0.125;
        assert!((grad[1] - (x[0] * x[0] + 1.5 * x[1] * x[1] + x[0] * x[2] + 0.5 * h2)).abs() < 1e-12);
        let hs = g.hessian(i).unwrap();
        assert!((hs[(0, 1)] - (2.0 * x[0] + x[2])).abs() < 1e-12);
        assert!((hs[(1, 1)] - 3.0 * x[1]).abs() < 1e-12);
        assert!((hs[(2, 2)] - 2.0).abs() < 1e-12);
        let t = g.third(i).unwrap();
        let at = |a: usize, b: usize, c: usize| t[(a * 3 + b) * 3 + c];
        assert!((at(0, 0, 1) - 2.0).abs() < 1e-10);
        assert!((at(1, 1, 1) - 3.0).abs() < 1e-10);
        assert!((at(0, 1, 2) - 1.0).abs() < 1e-10);
        assert!((at(2, 1, 0) - 1.0).abs() < 1e-10);
        assert!(at(2, 2, 2).abs() < 1e-10);
    }

    #[test]
    fn stencil_reach_in_ball() {
        let g = GridFunction::from_fn(Domain::ball(2, 1.0), 0.25, |x| x[0]).unwrap();
        let edge = g.flat(&[4, 0]);
        assert!(g.gradient(edge).is_none());
        assert!(g.gradient(g.flat(&[4, 4])).is_some());
        assert!(g.third(g.flat(&[4, 3])).is_some());
        assert!(g.third(g.flat(&[4, 2])).is_none());
    }

    #[test]
    fn interpolation_is_exact_for_multilinear() {
        let g = GridFunction::from_fn(Domain::cube(2, 1.0), 0.25, |x| 1.0 + 2.0 * x[0] - x[1] + 3.0 * x[0] * x[1]).unwrap();
        let v = g.interpolate(&[0.1, -0.33]).unwrap();
        assert!((v - (1.0 + 0.2 + 0.33 - 3.0 * 0.033)).abs() < 1e-13);
        assert!(g.interpolate(&[1.2, 0.0]).is_none());
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.grid");
        let g = GridFunction::from_fn(Domain::ball(2, 1.0), 0.125, |x| x[0] * x[0] - x[1]).unwrap();
        g.write(&path, serde_json::json!({"name": "test"})).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 8 * (1 + 2 + 2 + 2 + 1 + 17 * 17));
        assert_eq!(u64::from_le_bytes(bytes[0..8].try_into().unwrap()), 2);
        let back = GridFunction::read(&path).unwrap();
        assert_eq!(back.dims(), g.dims());
        assert_eq!(back.max_abs_diff(&g), 0.0);
        assert_eq!(back.domain(), g.domain());
    }
}
