//! Growth of `u - l` away from a line and the Laplacian-power integral over slab annuli.
//! Coordinates split as `x = (x', x_n)`; the line is `{x' = x0'}`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_quotient, Error, Result};
use crate::grid::Field;
use crate::sampling::gaussian;

/// `2 - 2/(n-k)`, the borderline growth rate.
pub fn critical_exponent(n: usize, k: usize) -> f64 {
    2.0 - 2.0 / (n - k) as f64
}

/// `(n-1)(n-k)/2`, the integrability exponent of the Laplacian.
pub fn laplacian_power(n: usize, k: usize) -> f64 {
    ((n - 1) * (n - k)) as f64 / 2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthOptions {
    /// Slices `x_n = x0_n + t`, `|t| <= half_height`.
    pub half_height: f64,
    pub slices: usize,
    /// Directions per sphere.
    pub directions: usize,
    /// Central-difference step for the tangent slope at `x0`.
    pub step: f64,
    pub seed: u64,
}

impl Default for GrowthOptions {
    fn default() -> Self {
        Self {
            half_height: 0.5,
            slices: 17,
            directions: 512,
            step: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub n: usize,
    pub k: usize,
    pub critical_exponent: f64,
    pub radii: Vec<f64>,
    /// `inf_{x_n} sup_{|x'| = r} (u - l)`.
    pub slice_sup: Vec<f64>,
    /// `min_{|x - x0| = r} (u - l)`, when the sphere lies inside the field.
    pub sphere_min: Vec<Option<f64>>,
    /// Least-squares slope of `log slice_sup` against `log r`.
    pub exponent: f64,
    /// Same for `sphere_min`, when it is available and positive at every radius.
    pub sphere_exponent: Option<f64>,
    /// Largest `c` with `slice_sup >= c r^{2 - 2/(n-k)}` at every radius.
    pub fitted_c: f64,
    pub margins: Vec<f64>,
    /// Radii dropped because the probe left the field's bounds.
    pub truncated: Vec<f64>,
}

/// Least-squares slope and `R^2` of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let m = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}

fn unit_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count + 2 * dim);
    for a in 0..dim {
        for s in [-1.0, 1.0] {
            let mut e = vec![0.0; dim];
            e[a] = s;
            out.push(e);
        }
    }
    while out.len() < count + 2 * dim {
        let v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

fn within(bounds: &(Vec<f64>, Vec<f64>), x0: &[f64], reach: &[f64]) -> bool {
    (0..x0.len()).all(|a| x0[a] - reach[a] >= bounds.0[a] && x0[a] + reach[a] <= bounds.1[a])
}

/// Tangent plane of `u` at `x0` by central differences.
fn tangent<F: Field + ?Sized>(u: &F, x0: &[f64], step: f64) -> Result<(f64, Vec<f64>)> {
    let missing = || Error::Argument(format!("field is undefined near {x0:?}"));
    let v0 = u.value(x0).ok_or_else(missing)?;
    let mut slope = Vec::with_capacity(x0.len());
    let mut y = x0.to_vec();
    for a in 0..x0.len() {
        y[a] = x0[a] + step;
        let p = u.value(&y).ok_or_else(missing)?;
        y[a] = x0[a] - step;
        let m = u.value(&y).ok_or_else(missing)?;
        y[a] = x0[a];
        slope.push((p - m) / (2.0 * step));
    }
    Ok((v0, slope))
}

/// Measures the growth of `u - l` at `x0`: the slice quantity `inf_{x_n} sup_{|x'| = r}` and the
/// sphere minimum, fits power laws in `r`, and compares against `c r^{2 - 2/(n-k)}`.
pub fn growth_probe<F: Field + ?Sized>(u: &F, x0: &[f64], r_list: &[f64], k: usize, opts: &GrowthOptions) -> Result<GrowthReport> {
    let n = u.dim();
    check_quotient(n, k)?;
    if x0.len() != n || opts.slices == 0 || opts.directions == 0 {
        return Err(Error::Argument("probe point dimension, slices or directions invalid".into()));
    }
    let (v0, slope) = tangent(u, x0, opts.step)?;
    let reduced = |x: &[f64]| -> Option<f64> {
        u.value(x).map(|v| v - v0 - (0..n).map(|a| slope[a] * (x[a] - x0[a])).sum::<f64>())
    };
    let bounds = u.bounds();
    let (mut radii, mut truncated) = (Vec::new(), Vec::new());
    for &r in r_list {
        let mut reach = vec![r; n];
        reach[n - 1] = opts.half_height;
        if r > 0.0 && within(&bounds, x0, &reach) {
            radii.push(r);
        } else {
            truncated.push(r);
        }
    }
    if radii.len() < 2 {
        return Err(Error::Argument(format!("need at least two radii inside the field, have {}", radii.len())));
    }
    let cross = unit_directions(n - 1, opts.directions, opts.seed);
    let full = unit_directions(n, opts.directions, opts.seed ^ 1);
    let heights: Vec<f64> = if opts.slices == 1 {
        vec![0.0]
    } else {
        (0..opts.slices)
            .map(|j| -opts.half_height + 2.0 * opts.half_height * j as f64 / (opts.slices - 1) as f64)
            .collect()
    };
    let rows: Vec<Option<(f64, Option<f64>)>> = radii
        .par_iter()
        .map(|&r| {
            let mut inf_sup = f64::INFINITY;
            for &t in &heights {
                let mut sup = f64::NEG_INFINITY;
                for d in &cross {
                    let mut x = x0.to_vec();
                    for a in 0..n - 1 {
                        x[a] += r * d[a];
                    }
                    x[n - 1] += t;
                    sup = sup.max(reduced(&x)?);
                }
                inf_sup = inf_sup.min(sup);
            }
            let mut min = None;
            if within(&bounds, x0, &vec![r; n]) {
                let mut m = f64::INFINITY;
                for d in &full {
                    let x: Vec<f64> = x0.iter().zip(d).map(|(c, e)| c + r * e).collect();
                    m = m.min(reduced(&x)?);
                }
                min = Some(m);
            }
            Some((inf_sup, min))
        })
        .collect();
    let rows: Vec<(f64, Option<f64>)> = rows
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Argument("field undefined on a probe sphere".into()))?;
    let slice_sup: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let sphere_min: Vec<Option<f64>> = rows.iter().map(|r| r.1).collect();
    if slice_sup.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Degenerate("u - l vanishes on a probe cylinder".into()));
    }
    let lr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let (exponent, _, _) = linear_fit(&lr, &slice_sup.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let sphere_exponent = sphere_min
        .iter()
        .map(|v| v.filter(|m| *m > 0.0).map(f64::ln))
        .collect::<Option<Vec<f64>>>()
        .map(|logs| linear_fit(&lr, &logs).0);
    let q = critical_exponent(n, k);
    let fitted_c = radii.iter().zip(&slice_sup).map(|(r, m)| m / r.powf(q)).fold(f64::INFINITY, f64::min);
    let margins = radii.iter().zip(&slice_sup).map(|(r, m)| m - fitted_c * r.powf(q)).collect();
    Ok(GrowthReport {
        n,
        k,
        critical_exponent: q,
        radii,
        slice_sup,
        sphere_min,
        exponent,
        sphere_exponent,
        fitted_c,
        margins,
        truncated,
    })
}

/// Area of the unit sphere in `R^d`.
pub fn sphere_area(d: usize) -> f64 {
    // 2 pi^{d/2} / Gamma(d/2), with Gamma at half-integers by recurrence
    let mut gamma = if d % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut x = if d % 2 == 0 { 1.0 } else { 0.5 };
    while x < d as f64 / 2.0 - 1e-12 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegralOptions {
    pub half_height: f64,
    /// Trapezoid nodes in `log |x'|`.
    pub radial_nodes: usize,
    pub height_nodes: usize,
    pub directions: usize,
    pub seed: u64,
}

impl Default for IntegralOptions {
    fn default() -> Self {
        Self {
            half_height: 0.5,
            radial_nodes: 65,
            height_nodes: 9,
            directions: 256,
            seed: 0,
        }
    }
}

/// `∫ (Δu)^{(n-1)(n-k)/2}` over `{r_inner < |x' - x0'| < r_outer, |x_n - x0_n| < half_height}`:
/// polar coordinates in `x'` with the trapezoid rule in `log |x'|` and in `x_n`, and the
/// direction mean over a fixed point set on the sphere. Negative Laplacians count as zero.
pub fn delta_integral<F: Field + ?Sized>(u: &F, x0: &[f64], r_inner: f64, r_outer: f64, k: usize, opts: &IntegralOptions) -> Result<f64> {
    let n = u.dim();
    check_quotient(n, k)?;
    if x0.len() != n {
        return Err(Error::Argument("probe point has the wrong dimension".into()));
    }
    if !(r_inner > 0.0 && r_outer > r_inner) || !(opts.half_height > 0.0) {
        return Err(Error::Argument(format!("annulus ({r_inner}, {r_outer}) is empty")));
    }
    if opts.radial_nodes < 2 || opts.height_nodes < 2 || opts.directions == 0 {
        return Err(Error::Argument("quadrature needs at least two radial and height nodes".into()));
    }
    let mut reach = vec![r_outer; n];
    reach[n - 1] = opts.half_height;
    if !within(&u.bounds(), x0, &reach) {
        return Err(Error::Argument("annulus leaves the field's bounds".into()));
    }
    let p = laplacian_power(n, k);
    let dirs = unit_directions(n - 1, opts.directions, opts.seed);
    let (s0, s1) = (r_inner.ln(), r_outer.ln());
    let nr = opts.radial_nodes;
    let nz = opts.height_nodes;
    let trap = |i: usize, m: usize| if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
    let ds = (s1 - s0) / (nr - 1) as f64;
    let dz = 2.0 * opts.half_height / (nz - 1) as f64;
    let shells: Vec<Option<f64>> = (0..nr)
        .into_par_iter()
        .map(|i| {
            let rho = (s0 + ds * i as f64).exp();
            let mut acc = 0.0;
            for j in 0..nz {
                let t = -opts.half_height + dz * j as f64;
                let mut mean = 0.0;
                for d in &dirs {
                    let mut x = x0.to_vec();
                    for a in 0..n - 1 {
                        x[a] += rho * d[a];
                    }
                    x[n - 1] += t;
                    mean += u.laplacian_at(&x, rho)?.max(0.0).powf(p);
                }
                acc += trap(j, nz) * dz * mean / dirs.len() as f64;
            }
            // rho^{n-2} d rho = rho^{n-1} d log rho
            Some(trap(i, nr) * ds * acc * rho.powi(n as i32 - 1))
        })
        .collect();
    let total: f64 = shells
        .into_iter()
        .sum::<Option<f64>>()
        .ok_or_else(|| Error::Argument("Laplacian undefined inside the annulus".into()))?;
    Ok(total * sphere_area(n - 1))
}
