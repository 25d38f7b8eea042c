//! Discrete Legendre transform of convex grid functions and numerical checks
//! of the dual identities relating `sigma_n / sigma_k` to `sigma_{n-k}`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_quotient, Error, Result};
use crate::grid::{Domain, GridFunction};
use crate::symcalc::{eigen_sorted, hq_derivatives, sigma_all, sigma_matrix_gradient, Spectrum};

/// Default uniform-convexity floor below which probes are skipped.
pub const DEFAULT_DELTA: f64 = 1e-3;

/// Local cubic Taylor model of a grid function at a node, with fourth-order
/// first and second derivatives.
#[derive(Clone, Debug)]
pub struct Taylor {
    pub center: Vec<f64>,
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub third: Vec<f64>,
}

impl Taylor {
    pub fn at(u: &GridFunction, i: usize) -> Option<Self> {
        let n = u.n();
        Some(Self {
            center: u.point(i),
            value: u.values()[i],
            grad: DVector::from_vec(u.gradient4(i)?),
            hess: u.hessian4(i)?,
            third: u.third(i)?,
        })
        .filter(|t| t.third.len() == n * n * n)
    }

    fn n(&self) -> usize {
        self.grad.len()
    }

    /// `T[d, d, .]` as a vector.
    fn third_dd(&self, d: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(n, |c, _| {
            let mut s = 0.0;
            for a in 0..n {
                for b in 0..n {
                    s += self.third[(a * n + b) * n + c] * d[a] * d[b];
                }
            }
            s
        })
    }

    /// `T[d, ., .]` as a matrix.
    fn third_d(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |b, c| (0..n).map(|a| self.third[(a * n + b) * n + c] * d[a]).sum())
    }

    pub fn eval(&self, d: &DVector<f64>) -> f64 {
        self.value + self.grad.dot(d) + 0.5 * d.dot(&(&self.hess * d)) + self.third_dd(d).dot(d) / 6.0
    }

    pub fn gradient(&self, d: &DVector<f64>) -> DVector<f64> {
        &self.grad + &self.hess * d + 0.5 * self.third_dd(d)
    }

    pub fn hessian(&self, d: &DVector<f64>) -> DMatrix<f64> {
        &self.hess + self.third_d(d)
    }
}

/// A convex grid function, its discrete Legendre transform, and the maximizer map.
#[derive(Clone, Debug)]
pub struct DualPair {
    pub primal: GridFunction,
    pub dual: GridFunction,
    /// Sub-grid maximizer `x(y)` per dual node, flattened with stride `n`.
    pub argmax: Vec<f64>,
    /// Primal node at which the brute-force maximum was attained.
    pub argmax_node: Vec<usize>,
    /// Dual nodes whose maximizer is interior with a full stencil and a converged polish.
    pub valid: Vec<bool>,
}

impl DualPair {
    pub fn maximizer(&self, j: usize) -> &[f64] {
        let n = self.primal.n();
        &self.argmax[j * n..(j + 1) * n]
    }

    /// True if `j` and every node within `radius` of it is valid.
    pub fn valid_stencil(&self, j: usize, radius: usize) -> bool {
        if !self.dual.has_stencil(j, radius) {
            return false;
        }
        let n = self.dual.n();
        let m = self.dual.multi(j);
        let r = radius as isize;
        let mut off = vec![-r; n];
        loop {
            let idx: Vec<usize> = m.iter().zip(&off).map(|(a, o)| (*a as isize + o) as usize).collect();
            if !self.valid[self.dual.flat(&idx)] {
                return false;
            }
            let mut a = 0;
            loop {
                if a == n {
                    return true;
                }
                off[a] += 1;
                if off[a] > r {
                    off[a] = -r;
                    a += 1;
                } else {
                    break;
                }
            }
        }
    }

    /// Hessian of `w` interpolated at `y`, using valid dual nodes only.
    pub fn dual_hessian_at(&self, y: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.dual.n();
        let mut out = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a..n {
                let v = self.dual.interpolate_with(y, |j| {
                    if !self.valid_stencil(j, 1) {
                        return None;
                    }
                    self.dual.hessian(j).map(|m| m[(a, b)])
                })?;
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        Some(out)
    }

    /// Gradient of `w` interpolated at `y`.
    pub fn dual_gradient_at(&self, y: &[f64]) -> Option<Vec<f64>> {
        grid_gradient_at(&self.dual, y, |j| self.valid_stencil(j, 1))
    }

    /// The pulled-back field `phi*(y) = phi(x(y))` on the dual lattice,
    /// evaluated with a cubic Taylor model of `phi` at the maximizer node.
    pub fn pullback(&self, phi: &GridFunction) -> Result<GridFunction> {
        if phi.dims() != self.primal.dims() || phi.spacing() != self.primal.spacing() {
            return Err(Error::Argument("pulled-back field must share the primal lattice".into()));
        }
        let n = self.primal.n();
        let vals: Vec<f64> = (0..self.dual.len())
            .into_par_iter()
            .map(|j| {
                if !self.valid[j] {
                    return f64::NAN;
                }
                let i = self.argmax_node[j];
                match Taylor::at(phi, i) {
                    Some(t) => {
                        let x = self.maximizer(j);
                        let d = DVector::from_fn(n, |a, _| x[a] - t.center[a]);
                        t.eval(&d)
                    }
                    None => f64::NAN,
                }
            })
            .collect();
        let mut g = self.dual.clone();
        for (j, v) in vals.into_iter().enumerate() {
            if g.inside(j) {
                g.values_mut()[j] = v;
            }
        }
        Ok(g)
    }
}

pub(crate) fn grid_gradient_at(g: &GridFunction, y: &[f64], ok: impl Fn(usize) -> bool) -> Option<Vec<f64>> {
    let n = g.n();
    (0..n)
        .map(|a| {
            g.interpolate_with(y, |j| {
                if !ok(j) {
                    return None;
                }
                g.gradient(j).map(|v| v[a])
            })
        })
        .collect()
}

/// Smallest Hessian eigenvalue over nodes with a full stencil, with the largest magnitude seen.
pub fn hessian_eigen_range(u: &GridFunction) -> (f64, f64) {
    (0..u.len())
        .into_par_iter()
        .filter_map(|i| u.hessian(i))
        .map(|m| {
            let (v, _) = eigen_sorted(&m);
            (v[v.len() - 1], v[0].abs().max(v[v.len() - 1].abs()))
        })
        .reduce(|| (f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)))
}

/// `w(y) = max_x (x.y - u(x))` over lattice nodes, on a uniform dual grid
/// covering the discrete gradient image with `dual_resolution` nodes along
/// its longest side, refined below the grid scale by a cubic Taylor model.
pub fn discrete_legendre(u: &GridFunction, dual_resolution: usize) -> Result<DualPair> {
    if dual_resolution < 3 {
        return Err(Error::Argument("dual resolution must be >= 3".into()));
    }
    let n = u.n();
    let (min_eig, max_abs) = hessian_eigen_range(u);
    if !min_eig.is_finite() {
        return Err(Error::Argument("grid too small for second differences".into()));
    }
    if min_eig / max_abs.max(1.0) < -0.1 {
        return Err(Error::Domain(format!("input is not convex: min Hessian eigenvalue {min_eig:.3e}")));
    }

    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for i in 0..u.len() {
        if let Some(g) = u.gradient(i) {
            for a in 0..n {
                lo[a] = lo[a].min(g[a]);
                hi[a] = hi[a].max(g[a]);
            }
        }
    }
    let side = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    if !(side > 0.0) {
        return Err(Error::Degenerate("gradient image has no extent".into()));
    }
    let hs = side / (dual_resolution - 1) as f64;
    let mut dlo = Vec::with_capacity(n);
    let mut dhi = Vec::with_capacity(n);
    for a in 0..n {
        let cells = (((hi[a] - lo[a]) / hs).ceil() as usize).max(2);
        let c = 0.5 * (lo[a] + hi[a]);
        dlo.push(c - cells as f64 * hs / 2.0);
        dhi.push(c - cells as f64 * hs / 2.0 + cells as f64 * hs);
    }
    let mut dual = GridFunction::lattice(Domain::Box { lo: dlo, hi: dhi }, hs)?;

    let nodes: Vec<(usize, Vec<f64>, f64)> = (0..u.len())
        .filter(|&i| u.inside(i))
        .map(|i| (i, u.point(i), u.values()[i]))
        .collect();
    let h = u.spacing();

    let results: Vec<(f64, usize, Vec<f64>, bool)> = (0..dual.len())
        .into_par_iter()
        .map(|j| {
            let y = dual.point(j);
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0usize;
            for (idx, (_, x, ux)) in nodes.iter().enumerate() {
                let v = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() - ux;
                if v > best {
                    best = v;
                    arg = idx;
                }
            }
            let (i, x, _) = &nodes[arg];
            match polish(u, *i, &y, h) {
                Some((val, xs)) => (best.max(val), *i, xs, true),
                None => (best, *i, x.clone(), false),
            }
        })
        .collect();

    let mut argmax = Vec::with_capacity(dual.len() * n);
    let mut argmax_node = Vec::with_capacity(dual.len());
    let mut valid = Vec::with_capacity(dual.len());
    for (j, (w, i, x, ok)) in results.into_iter().enumerate() {
        dual.values_mut()[j] = w;
        argmax.extend_from_slice(&x);
        argmax_node.push(i);
        valid.push(ok);
    }
    Ok(DualPair {
        primal: u.clone(),
        dual,
        argmax,
        argmax_node,
        valid,
    })
}

/// Maximizes `(x_i + d).y - T(d)` over small `d` by Newton's method.
fn polish(u: &GridFunction, i: usize, y: &[f64], h: f64) -> Option<(f64, Vec<f64>)> {
    let t = Taylor::at(u, i)?;
    let n = t.n();
    let yv = DVector::from_column_slice(y);
    let mut d = t.hess.clone().cholesky()?.solve(&(&yv - &t.grad));
    for _ in 0..30 {
        let r = &yv - t.gradient(&d);
        let step = t.hessian(&d).cholesky()?.solve(&r);
        d += &step;
        if step.amax() <= 1e-14 * h.max(d.amax()) {
            break;
        }
    }
    if !(d.amax() <= 1.5 * h) || !t.hessian(&d).cholesky().is_some() {
        return None;
    }
    let x: Vec<f64> = (0..n).map(|a| t.center[a] + d[a]).collect();
    let val = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() - t.eval(&d);
    Some((val, x))
}

/// Why a probe produced no residuals.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeFlag {
    OutsideStencil,
    NotUniformlyConvex,
    DualOutOfReach,
    EigenvalueGap,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualProbe {
    pub x: Vec<f64>,
    pub flag: Option<ProbeFlag>,
    /// `max |D^2w D^2u - I|`.
    pub inverse: f64,
    /// `|sigma_{n-k}(D^2w) F(D^2u) - 1|`.
    pub quotient: f64,
    /// `max_i |G^{ii} - F^{-2} F^{ii} u_ii^2|` in the eigenframe of `D^2u`, relative.
    pub dual_coefficients: f64,
    /// Frame-invariant form `|tr(G^{ij} D^2u) (F^2) - sum F^{ii} lambda_i^3|`, relative.
    pub trace: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DualResiduals {
    pub probes: Vec<DualProbe>,
    pub max_inverse: f64,
    pub max_quotient: f64,
    pub max_dual_coefficients: f64,
    pub skipped: usize,
}

struct ProbeFrame {
    node: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    lambda: Vec<f64>,
    frame: DMatrix<f64>,
    d2u: DMatrix<f64>,
}

fn probe_frame(pair: &DualPair, x: &[f64], delta: f64) -> std::result::Result<ProbeFrame, (Vec<f64>, ProbeFlag)> {
    let u = &pair.primal;
    let i = u.nearest(x).ok_or((x.to_vec(), ProbeFlag::OutsideStencil))?;
    let xs = u.point(i);
    let d2u = u.hessian(i).ok_or((xs.clone(), ProbeFlag::OutsideStencil))?;
    let y = u.gradient(i).ok_or((xs.clone(), ProbeFlag::OutsideStencil))?;
    let (lambda, frame) = eigen_sorted(&d2u);
    if lambda[lambda.len() - 1] < delta {
        return Err((xs, ProbeFlag::NotUniformlyConvex));
    }
    Ok(ProbeFrame {
        node: i,
        x: xs,
        y,
        lambda,
        frame,
        d2u,
    })
}

/// Dual residuals at each probe point (snapped to the nearest primal node).
pub fn dual_checks(pair: &DualPair, k: usize, probes: &[Vec<f64>], delta: f64) -> Result<DualResiduals> {
    let n = pair.primal.n();
    check_quotient(n, k)?;
    let out: Vec<DualProbe> = probes
        .par_iter()
        .map(|x| {
            let skip = |x: Vec<f64>, flag| DualProbe {
                x,
                flag: Some(flag),
                inverse: f64::NAN,
                quotient: f64::NAN,
                dual_coefficients: f64::NAN,
                trace: f64::NAN,
            };
            let pf = match probe_frame(pair, x, delta) {
                Ok(p) => p,
                Err((x, f)) => return skip(x, f),
            };
            let Some(d2w) = pair.dual_hessian_at(&pf.y) else {
                return skip(pf.x, ProbeFlag::DualOutOfReach);
            };
            let prod = &d2w * &pf.d2u - DMatrix::<f64>::identity(n, n);
            let inverse = prod.amax();
            let (mu, _) = eigen_sorted(&d2w);
            let g = sigma_all(&mu, n - k)[n - k];
            let hq = hq_derivatives(&Spectrum::new(pf.lambda.clone()).expect("finite"), k, None).expect("positive");
            let quotient = (g * hq.value - 1.0).abs();
            let gm = sigma_matrix_gradient(&d2w, n - k);
            let gr = pf.frame.transpose() * &gm * &pf.frame;
            let f2 = hq.value * hq.value;
            let mut coef = 0.0_f64;
            for a in 0..n {
                let expect = hq.grad[a] * pf.lambda[a] * pf.lambda[a] / f2;
                coef = coef.max((gr[(a, a)] - expect).abs() / expect.abs());
            }
            let tr_lhs = (&gm * &pf.d2u).trace() * f2;
            let tr_rhs: f64 = (0..n).map(|a| hq.grad[a] * pf.lambda[a].powi(3)).sum();
            DualProbe {
                x: pf.x,
                flag: None,
                inverse,
                quotient,
                dual_coefficients: coef,
                trace: (tr_lhs - tr_rhs).abs() / tr_rhs.abs(),
            }
        })
        .collect();
    Ok(summarize(out))
}

fn summarize(probes: Vec<DualProbe>) -> DualResiduals {
    let ok = probes.iter().filter(|p| p.flag.is_none());
    let max = |f: fn(&DualProbe) -> f64| ok.clone().map(f).fold(0.0, f64::max);
    DualResiduals {
        max_inverse: max(|p| p.inverse),
        max_quotient: max(|p| p.quotient),
        max_dual_coefficients: max(|p| p.dual_coefficients),
        skipped: probes.iter().filter(|p| p.flag.is_some()).count(),
        probes,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PushforwardProbe {
    pub x: Vec<f64>,
    pub flag: Option<ProbeFlag>,
    /// `sum F^{ii} phi_ii` against its dual expansion, relative to the largest term.
    pub second_order: f64,
    /// `sum F^{ii} phi_i^2` against `F^2 sum G^{ii} (phi*_i)^2`, relative.
    pub first_order: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PushforwardResiduals {
    pub probes: Vec<PushforwardProbe>,
    pub max_second_order: f64,
    pub max_first_order: f64,
    pub skipped: usize,
}

/// Checks the pushforward identities for `phi` at each probe, in the eigenframe of `D^2u`.
pub fn pushforward_check(
    pair: &DualPair,
    phi: &GridFunction,
    k: usize,
    probes: &[Vec<f64>],
    delta: f64,
) -> Result<PushforwardResiduals> {
    let n = pair.primal.n();
    check_quotient(n, k)?;
    let star = pair.pullback(phi)?;
    let out: Vec<PushforwardProbe> = probes
        .par_iter()
        .map(|x| {
            let skip = |x: Vec<f64>, flag| PushforwardProbe {
                x,
                flag: Some(flag),
                second_order: f64::NAN,
                first_order: f64::NAN,
            };
            let pf = match probe_frame(pair, x, delta) {
                Ok(p) => p,
                Err((x, f)) => return skip(x, f),
            };
            let l = &pf.lambda;
            if l[0] - l[1] <= 1e-6 * l[0] {
                return skip(pf.x, ProbeFlag::EigenvalueGap);
            }
            let (Some(t), Some(dphi), Some(d2phi)) =
                (pair.primal.third(pf.node), phi.gradient(pf.node), phi.hessian(pf.node))
            else {
                return skip(pf.x, ProbeFlag::OutsideStencil);
            };
            let ok = |j: usize| pair.valid_stencil(j, 1) && star.values()[j].is_finite();
            let Some(dstar) = grid_gradient_at(&star, &pf.y, ok) else {
                return skip(pf.x, ProbeFlag::DualOutOfReach);
            };
            let mut d2star = DMatrix::zeros(n, n);
            for a in 0..n {
                for b in 0..n {
                    match star.interpolate_with(&pf.y, |j| if ok(j) { star.hessian(j).map(|m| m[(a, b)]) } else { None }) {
                        Some(v) => d2star[(a, b)] = v,
                        None => return skip(pf.x, ProbeFlag::DualOutOfReach),
                    }
                }
            }
            let Some(d2w) = pair.dual_hessian_at(&pf.y) else {
                return skip(pf.x, ProbeFlag::DualOutOfReach);
            };
            let hq = hq_derivatives(&Spectrum::new(l.clone()).expect("finite"), k, None).expect("positive");
            let q = &pf.frame;
            let gr = q.transpose() * sigma_matrix_gradient(&d2w, n - k) * q;
            let phi_r = q.transpose() * DVector::from_vec(dphi);
            let d2phi_r = q.transpose() * d2phi * q;
            let star_r = q.transpose() * DVector::from_vec(dstar);
            let d2star_r = q.transpose() * d2star * q;
            let rot3 = |a: usize, b: usize, c: usize| -> f64 {
                let mut s = 0.0;
                for p in 0..n {
                    for r in 0..n {
                        for m in 0..n {
                            s += q[(p, a)] * q[(r, b)] * q[(m, c)] * t[(p * n + r) * n + m];
                        }
                    }
                }
                s
            };
            let f2 = hq.value * hq.value;
            let lhs2: f64 = (0..n).map(|a| hq.grad[a] * d2phi_r[(a, a)]).sum();
            let mut third_term = 0.0;
            for a in 0..n {
                for b in 0..n {
                    third_term += hq.grad[a] * rot3(a, a, b) * star_r[b];
                }
            }
            let dual_term: f64 = f2 * (0..n).map(|a| gr[(a, a)] * d2star_r[(a, a)]).sum::<f64>();
            let scale2 = lhs2.abs().max(third_term.abs()).max(dual_term.abs()).max(f64::MIN_POSITIVE);
            let lhs1: f64 = (0..n).map(|a| hq.grad[a] * phi_r[a] * phi_r[a]).sum();
            let rhs1: f64 = f2 * (0..n).map(|a| gr[(a, a)] * star_r[a] * star_r[a]).sum::<f64>();
            let scale1 = lhs1.abs().max(rhs1.abs()).max(f64::MIN_POSITIVE);
            PushforwardProbe {
                x: pf.x,
                flag: None,
                second_order: (lhs2 - third_term - dual_term).abs() / scale2,
                first_order: (lhs1 - rhs1).abs() / scale1,
            }
        })
        .collect();
    let ok = out.iter().filter(|p| p.flag.is_none());
    Ok(PushforwardResiduals {
        max_second_order: ok.clone().map(|p| p.second_order).fold(0.0, f64::max),
        max_first_order: ok.map(|p| p.first_order).fold(0.0, f64::max),
        skipped: out.iter().filter(|p| p.flag.is_some()).count(),
        probes: out,
    })
}

/// Worst Fenchel violation over all sampled pairs and the worst equality gap at `y = Du(x)`.
pub fn fenchel_check(pair: &DualPair) -> (f64, f64) {
    let u = &pair.primal;
    let w = &pair.dual;
    let nodes: Vec<usize> = (0..u.len()).filter(|&i| u.inside(i)).collect();
    let violation = (0..w.len())
        .into_par_iter()
        .map(|j| {
            let y = w.point(j);
            nodes
                .iter()
                .map(|&i| {
                    let x = u.point(i);
                    let v = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() - u.values()[i];
                    v - w.values()[j]
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let gap = nodes
        .par_iter()
        .filter_map(|&i| {
            let y = u.gradient(i)?;
            let wy = w.interpolate(&y)?;
            let x = u.point(i);
            let v = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() - u.values()[i];
            let ynorm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
            Some((wy - v).abs() / (1.0 + ynorm))
        })
        .reduce(|| 0.0, f64::max);
    (violation, gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(c: f64) -> GridFunction {
        GridFunction::from_fn(Domain::cube(2, 1.0), 0.0625, move |x| 0.5 * c * (x[0] * x[0] + x[1] * x[1])).unwrap()
    }

    #[test]
    fn quadratic_is_self_dual() {
        let pair = discrete_legendre(&quad(1.0), 33).unwrap();
        let w = &pair.dual;
        let mut err = 0.0_f64;
        for j in 0..w.len() {
            if pair.valid[j] {
                let y = w.point(j);
                err = err.max((w.values()[j] - 0.5 * (y[0] * y[0] + y[1] * y[1])).abs());
            }
        }
        assert!(err < 1e-12, "err {err}");
        assert!(pair.valid.iter().filter(|v| **v).count() > w.len() / 3);
    }

    #[test]
    fn scaled_quadratic_conjugate() {
        let pair = discrete_legendre(&quad(2.0), 33).unwrap();
        let w = &pair.dual;
        for j in 0..w.len() {
            if pair.valid[j] {
                let y = w.point(j);
                assert!((w.values()[j] - 0.25 * (y[0] * y[0] + y[1] * y[1])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quartic_satisfies_fenchel() {
        let u = GridFunction::from_fn(Domain::cube(2, 1.0), 0.0625, |x| {
            0.5 * (x[0] * x[0] + x[1] * x[1]) + 0.1 * x[0].powi(4)
        })
        .unwrap();
        let pair = discrete_legendre(&u, 33).unwrap();
        let (violation, gap) = fenchel_check(&pair);
        assert_eq!(violation, 0.0);
        assert!(gap <= 2.0 * 0.0625, "gap {gap}");
    }

    #[test]
    fn isotropic_quotient_identity() {
        let c = 1.7;
        let pair = discrete_legendre(&quad(c), 33).unwrap();
        let r = dual_checks(&pair, 1, &[vec![0.0, 0.0], vec![0.25, -0.125]], DEFAULT_DELTA).unwrap();
        assert_eq!(r.skipped, 0);
        assert!(r.max_quotient < 1e-10, "{}", r.max_quotient);
        assert!(r.max_inverse < 1e-10);
    }

    #[test]
    fn anisotropic_quadratic_in_three_dimensions() {
        let d = [1.0, 2.0, 3.0];
        let u = GridFunction::from_fn(Domain::cube(3, 1.0), 0.125, |x| {
            0.5 * (d[0] * x[0] * x[0] + d[1] * x[1] * x[1] + d[2] * x[2] * x[2])
        })
        .unwrap();
        let pair = discrete_legendre(&u, 17).unwrap();
        let r = dual_checks(&pair, 1, &[vec![0.0, 0.0, 0.0], vec![0.125, -0.25, 0.125]], DEFAULT_DELTA).unwrap();
        assert_eq!(r.skipped, 0);
        assert!(r.max_inverse < 0.125, "{}", r.max_inverse);
        assert!(r.max_dual_coefficients < 1e-8, "{}", r.max_dual_coefficients);
    }

    #[test]
    fn constant_phi_gives_zero_pushforward() {
        let u = GridFunction::from_fn(Domain::cube(2, 1.0), 0.0625, |x| 0.5 * x[0] * x[0] + x[1] * x[1]).unwrap();
        let pair = discrete_legendre(&u, 33).unwrap();
        let phi = u.map_nodes(|_, _| 3.0);
        let r = pushforward_check(&pair, &phi, 1, &[vec![0.125, 0.0]], DEFAULT_DELTA).unwrap();
        assert_eq!(r.skipped, 0);
        assert!(r.probes[0].second_order < 1e-12 && r.probes[0].first_order < 1e-12);
    }

    #[test]
    fn rejects_non_convex() {
        let u = GridFunction::from_fn(Domain::cube(2, 1.0), 0.125, |x| -(x[0] * x[0]) + x[1] * x[1]).unwrap();
        assert!(matches!(discrete_legendre(&u, 9), Err(Error::Domain(_))));
    }
}
