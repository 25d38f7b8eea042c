//! Radial reduction: `u(x) = phi(|x|)` has Hessian spectrum `(phi'', phi'/r, ..., phi'/r)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_quotient, Error, Result};
use crate::grid::{Domain, GridFunction};
use crate::symcalc::{binomial, hq_value};

/// Relative denominator size below which [`radial_phi_pp`] flags ill-conditioning.
pub const CONDITIONING_WARN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialCurvature {
    pub phi_pp: f64,
    /// `(s^{n-k} - f C(n-1,k-1)) / s^{n-k}`; small values mean the step is nearly degenerate.
    pub relative_denominator: f64,
}

impl RadialCurvature {
    pub fn ill_conditioned(&self) -> bool {
        self.relative_denominator < CONDITIONING_WARN
    }
}

/// Solves `sigma_n / sigma_k (phi'', s, ..., s) = f` for `phi''`, where `s = phi'/r`.
pub fn radial_phi_pp(s: f64, r: f64, n: usize, k: usize, f: f64) -> Result<RadialCurvature> {
    check_quotient(n, k)?;
    if !(r >= 0.0) || !r.is_finite() {
        return Err(Error::Argument(format!("radius must be finite and nonnegative, got {r}")));
    }
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("phi'/r must be positive, got {s}")));
    }
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::Domain(format!("right-hand side must be positive, got {f}")));
    }
    let top = s.powi((n - k) as i32);
    let lower = if k == 0 { 0.0 } else { f * binomial(n - 1, k - 1) };
    let den = top - lower;
    if den <= 0.0 {
        return Err(Error::Degenerate(format!(
            "s^(n-k) = {top:.6e} does not exceed f C(n-1,k-1) = {lower:.6e}"
        )));
    }
    Ok(RadialCurvature {
        phi_pp: f * binomial(n - 1, k) * s / den,
        relative_denominator: den / top,
    })
}

/// Isotropic Hessian value `c` with `F(cI) = f`.
pub fn isotropic_value(n: usize, k: usize, f: f64) -> f64 {
    (f * binomial(n, k)).powf(1.0 / (n - k) as f64)
}

/// A radial solution sampled on a uniform radius grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialProfile {
    pub n: usize,
    pub k: usize,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub dphi: Vec<f64>,
    pub d2phi: Vec<f64>,
    /// Right-hand side at the nodes.
    pub f: Vec<f64>,
    /// `max |F(lambda(r)) - f(r)|` over the nodes.
    pub max_residual: f64,
    pub ill_conditioned_steps: usize,
}

impl RadialProfile {
    pub fn radius(&self) -> f64 {
        *self.r.last().expect("nonempty profile")
    }

    fn step(&self) -> f64 {
        self.r[1] - self.r[0]
    }

    fn locate(&self, r: f64) -> Option<(usize, f64)> {
        if !(r >= 0.0) || r > self.radius() * (1.0 + 1e-12) {
            return None;
        }
        let h = self.step();
        let i = ((r / h).floor() as usize).min(self.r.len() - 2);
        Some((i, (r - self.r[i]) / h))
    }

    /// `phi(r)` by cubic Hermite interpolation of `(phi, phi')`.
    pub fn value(&self, r: f64) -> Option<f64> {
        let (i, t) = self.locate(r)?;
        let h = self.step();
        let (t2, t3) = (t * t, t * t * t);
        Some(
            (2.0 * t3 - 3.0 * t2 + 1.0) * self.phi[i]
                + (t3 - 2.0 * t2 + t) * h * self.dphi[i]
                + (-2.0 * t3 + 3.0 * t2) * self.phi[i + 1]
                + (t3 - t2) * h * self.dphi[i + 1],
        )
    }

    /// `phi'(r)` by cubic Hermite interpolation of `(phi', phi'')`.
    pub fn slope(&self, r: f64) -> Option<f64> {
        let (i, t) = self.locate(r)?;
        let h = self.step();
        let (t2, t3) = (t * t, t * t * t);
        Some(
            (2.0 * t3 - 3.0 * t2 + 1.0) * self.dphi[i]
                + (t3 - 2.0 * t2 + t) * h * self.d2phi[i]
                + (-2.0 * t3 + 3.0 * t2) * self.dphi[i + 1]
                + (t3 - t2) * h * self.d2phi[i + 1],
        )
    }

    /// `phi''(r)` by linear interpolation.
    pub fn curvature(&self, r: f64) -> Option<f64> {
        let (i, t) = self.locate(r)?;
        Some((1.0 - t) * self.d2phi[i] + t * self.d2phi[i + 1])
    }

    /// Hessian spectrum `(phi'', phi'/r, ...)` at radius `r`, in no particular order.
    pub fn spectrum_at(&self, r: f64) -> Option<Vec<f64>> {
        let pp = self.curvature(r)?;
        let s = if r > 0.0 { self.slope(r)? / r } else { self.d2phi[0] };
        let mut v = vec![s; self.n];
        v[0] = pp;
        Some(v)
    }

    /// Samples `phi(|x - center|) + offset` on a lattice.
    pub fn to_grid(&self, domain: Domain, h: f64, center: &[f64], offset: f64) -> Result<GridFunction> {
        let mut g = GridFunction::lattice(domain, h)?;
        let pts: Vec<(usize, f64)> = (0..g.len())
            .filter(|&i| g.inside(i))
            .map(|i| {
                let x = g.point(i);
                let r = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                (i, r)
            })
            .collect();
        for (i, r) in pts {
            let v = self.value(r).ok_or_else(|| {
                Error::Argument(format!("lattice node at radius {r:.4} lies beyond the profile radius {:.4}", self.radius()))
            })?;
            g.values_mut()[i] = v + offset;
        }
        Ok(g)
    }
}

fn check_profile_args(n: usize, k: usize, radius: f64) -> Result<()> {
    check_quotient(n, k)?;
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Argument(format!("radius must be positive, got {radius}")));
    }
    Ok(())
}

/// `F(p, s, ..., s)` and its partial derivatives in `p` and `s`.
fn radial_quotient(n: usize, k: usize, p: f64, s: f64) -> (f64, f64, f64) {
    let a = binomial(n - 1, k);
    let b = if k == 0 { 0.0 } else { binomial(n - 1, k - 1) };
    let num = p * s.powi(n as i32 - 1);
    let den = a * s.powi(k as i32) + b * p * s.powi(k as i32 - 1);
    let d_num_p = s.powi(n as i32 - 1);
    let d_num_s = (n - 1) as f64 * p * s.powi(n as i32 - 2);
    let d_den_p = b * s.powi(k as i32 - 1);
    let d_den_s = k as f64 * a * s.powi(k as i32 - 1) + (k as f64 - 1.0) * b * p * s.powi(k as i32 - 2);
    let f = num / den;
    (f, (d_num_p - f * d_den_p) / den, (d_num_s - f * d_den_s) / den)
}

const START_TERMS: usize = 6;

/// Even-polynomial start `phi'/r = sum_j a_j r^{2j}` on `[0, r0]`, collocated at
/// Chebyshev points so the ODE holds there; `a_0` is the isotropic value at the origin.
#[allow(clippy::type_complexity)]
fn start_polynomial(
    n: usize,
    k: usize,
    f: &dyn Fn(f64) -> f64,
    r0: f64,
) -> Result<(impl Fn(f64) -> f64, impl Fn(f64) -> f64)> {
    let m = START_TERMS;
    let c = isotropic_value(n, k, f(0.0));
    // coefficients scaled by r0^{2j}, evaluated at t = r / r0
    let mut b = vec![0.0; m + 1];
    b[0] = c;
    let ts: Vec<f64> = (1..=m)
        .map(|i| 0.5 * (1.0 + ((2 * i - 1) as f64 * std::f64::consts::PI / (2 * m) as f64).cos()))
        .collect();
    let fs: Vec<f64> = ts.iter().map(|t| f(t * r0)).collect();
    let eval = |b: &[f64], t: f64| {
        let (mut s, mut p) = (0.0, 0.0);
        for (j, bj) in b.iter().enumerate() {
            let tj = t.powi(2 * j as i32);
            s += bj * tj;
            p += (2 * j + 1) as f64 * bj * tj;
        }
        (p, s)
    };
    for _ in 0..50 {
        let mut jac = nalgebra::DMatrix::<f64>::zeros(m, m);
        let mut res = nalgebra::DVector::<f64>::zeros(m);
        for (row, (&t, &fv)) in ts.iter().zip(&fs).enumerate() {
            let (p, s) = eval(&b, t);
            let (val, dp, ds) = radial_quotient(n, k, p, s);
            res[row] = val - fv;
            for j in 1..=m {
                let tj = t.powi(2 * j as i32);
                jac[(row, j - 1)] = dp * (2 * j + 1) as f64 * tj + ds * tj;
            }
        }
        let step = jac
            .lu()
            .solve(&(-&res))
            .ok_or_else(|| Error::Degenerate("singular start collocation".into()))?;
        for j in 1..=m {
            b[j] += step[j - 1];
        }
        if res.amax() <= 1e-15 * fs.iter().fold(1.0_f64, |a, v| a.max(v.abs())) || step.amax() <= 1e-16 * c {
            let b2 = b.clone();
            let slope = move |r: f64| {
                let t = r / r0;
                r * b.iter().enumerate().map(|(j, bj)| bj * t.powi(2 * j as i32)).sum::<f64>()
            };
            let value = move |r: f64| {
                let t = r / r0;
                r * r * b2.iter().enumerate().map(|(j, bj)| bj * t.powi(2 * j as i32) / (2 * j + 2) as f64).sum::<f64>()
            };
            return Ok((value, slope));
        }
    }
    Err(Error::NonConvergence("start collocation did not converge".into()))
}

/// Integrates the radial ODE with `steps` uniform RK4 steps after a polynomial start on the
/// first ten steps.
pub fn radial_solve_steps(n: usize, k: usize, f: &dyn Fn(f64) -> f64, radius: f64, steps: usize) -> Result<RadialProfile> {
    check_profile_args(n, k, radius)?;
    if steps < 20 {
        return Err(Error::Argument(format!("need at least 20 steps, got {steps}")));
    }
    let h = radius / steps as f64;
    let rs: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    let fv: Vec<f64> = rs.iter().map(|&r| f(r)).collect();
    if let Some(bad) = fv.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("right-hand side must be positive, found {bad}")));
    }
    let start = 10;
    let (phi0, dphi0) = start_polynomial(n, k, f, rs[start])?;
    let mut phi = vec![0.0; steps + 1];
    let mut dphi = vec![0.0; steps + 1];
    for i in 0..=start {
        phi[i] = phi0(rs[i]);
        dphi[i] = dphi0(rs[i]);
    }
    let mut ill = 0usize;
    let mut rhs = |r: f64, p: f64| -> Result<f64> {
        let rc = radial_phi_pp(p / r, r, n, k, f(r))?;
        if rc.ill_conditioned() {
            ill += 1;
        }
        Ok(rc.phi_pp)
    };
    for i in start..steps {
        let (r, y, p) = (rs[i], phi[i], dphi[i]);
        let k1 = rhs(r, p)?;
        let k2 = rhs(r + 0.5 * h, p + 0.5 * h * k1)?;
        let k3 = rhs(r + 0.5 * h, p + 0.5 * h * k2)?;
        let k4 = rhs(r + h, p + h * k3)?;
        // phi'' does not depend on phi, so phi follows from the RK4 quadrature of phi'
        phi[i + 1] = y + h * p + h * h / 6.0 * (k1 + k2 + k3);
        dphi[i + 1] = p + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let mut d2phi = vec![isotropic_value(n, k, fv[0]); steps + 1];
    let mut max_residual = 0.0_f64;
    for i in 1..=steps {
        let s = dphi[i] / rs[i];
        let rc = radial_phi_pp(s, rs[i], n, k, fv[i])?;
        d2phi[i] = rc.phi_pp;
        if rc.phi_pp <= 0.0 {
            return Err(Error::Degenerate(format!("profile lost convexity at r = {}", rs[i])));
        }
        let mut lam = vec![s; n];
        lam[0] = rc.phi_pp;
        max_residual = max_residual.max((hq_value(&lam, k) - fv[i]).abs());
    }
    Ok(RadialProfile {
        n,
        k,
        r: rs,
        phi,
        dphi,
        d2phi,
        f: fv,
        max_residual,
        ill_conditioned_steps: ill,
    })
}

/// Integrates the radial ODE, doubling the step count until successive profiles agree to `tol`.
pub fn radial_solve(n: usize, k: usize, f: &dyn Fn(f64) -> f64, radius: f64, tol: f64) -> Result<RadialProfile> {
    check_profile_args(n, k, radius)?;
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {tol}")));
    }
    let mut steps = 256;
    let mut prev = radial_solve_steps(n, k, f, radius, steps)?;
    while steps < (1 << 20) {
        steps *= 2;
        let next = radial_solve_steps(n, k, f, radius, steps)?;
        let diff = prev
            .phi
            .iter()
            .zip(next.phi.iter().step_by(2))
            .chain(prev.dphi.iter().zip(next.dphi.iter().step_by(2)))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if diff <= tol && next.max_residual <= tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::NonConvergence(format!("radial profile did not reach tolerance {tol}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_pp_isotropic_case() {
        let s = 3f64.sqrt();
        let rc = radial_phi_pp(s, 0.5, 3, 1, 1.0).unwrap();
        assert!((rc.phi_pp - s).abs() < 1e-14);
        assert!(!rc.ill_conditioned());
    }

    #[test]
    fn phi_pp_inverts_the_operator() {
        for (n, k) in [(2, 1), (3, 0), (3, 2), (4, 2), (5, 1)] {
            let (s, f) = (2.5, 0.9);
            let rc = radial_phi_pp(s, 1.0, n, k, f).unwrap();
            let mut lam = vec![s; n];
            lam[0] = rc.phi_pp;
            assert!((hq_value(&lam, k) - f).abs() <= 1e-14, "n={n} k={k}");
        }
    }

    #[test]
    fn phi_pp_near_degenerate() {
        let (n, k, f) = (3, 1, 1.0);
        let s = (f * binomial(n - 1, k - 1) * (1.0 + 1e-9)).powf(1.0 / (n - k) as f64);
        let rc = radial_phi_pp(s, 1.0, n, k, f).unwrap();
        assert!(rc.phi_pp.is_finite() && rc.phi_pp > 1e8);
        assert!(rc.ill_conditioned());
        let below = (f * binomial(n - 1, k - 1)).sqrt() * 0.99;
        assert!(matches!(radial_phi_pp(below, 1.0, n, k, f), Err(Error::Degenerate(_))));
    }

    #[test]
    fn constant_rhs_gives_isotropic_quadratic() {
        let p = radial_solve(3, 1, &|_| 1.0, 1.0, 1e-10).unwrap();
        let c = 3f64.sqrt();
        for (r, v) in p.r.iter().zip(&p.phi) {
            assert!((v - 0.5 * c * r * r).abs() <= 1e-10);
        }
        assert!((p.value(0.37).unwrap() - 0.5 * c * 0.37 * 0.37).abs() <= 1e-10);
    }

    #[test]
    fn variable_rhs_residual_and_convexity() {
        let p = radial_solve(4, 2, &|r| 1.0 + r * r, 1.0, 1e-9).unwrap();
        assert!(p.max_residual <= 1e-9);
        assert!(p.d2phi.iter().all(|v| *v > 0.0));
        assert!(p.dphi.iter().skip(1).zip(p.r.iter().skip(1)).all(|(d, r)| d / r > 0.0));
    }

    #[test]
    fn fourth_order_under_step_halving() {
        let f = |r: f64| 1.0 + r * r;
        let reference = radial_solve_steps(3, 1, &f, 1.0, 8192).unwrap();
        let err = |steps: usize| {
            let p = radial_solve_steps(3, 1, &f, 1.0, steps).unwrap();
            (p.phi.last().unwrap() - reference.phi.last().unwrap()).abs()
        };
        let ratio = err(40) / err(80);
        assert!((10.0..24.0).contains(&ratio), "ratio {ratio}");
    }
}
