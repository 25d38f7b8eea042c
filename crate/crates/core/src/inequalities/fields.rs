//! Jacobi-type margins and the divergence-free check on sampled solutions.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::scan::{MarginReport, Witness};
use crate::error::{check_quotient, Error, Result};
use crate::grid::GridFunction;
use crate::legendre::DualPair;
use crate::symcalc::{eigen_sorted, hq_derivatives, sigma_matrix_gradient, Spectrum};

/// Default relative spectral gap below which the largest eigenvalue counts as multiple.
pub const DEFAULT_GAP: f64 = 1e-6;

/// `b = ln lambda_1(D^2 u) + K0` on nodes where `lambda_1` is simple.
#[derive(Clone, Debug)]
pub struct LogEigenField {
    pub base: GridFunction,
    /// NaN off the simple mask.
    pub b: GridFunction,
    pub k0: f64,
    pub simple_mask: Vec<bool>,
}

impl LogEigenField {
    /// Builds `b` with `K0 = max(0, -min ln lambda_1) + 1`.
    pub fn new(base: GridFunction, gap: f64) -> Result<Self> {
        let n = base.n();
        let eig: Vec<Option<(f64, f64)>> = (0..base.len())
            .into_par_iter()
            .map(|i| {
                let h = base.hessian(i)?;
                let (v, _) = eigen_sorted(&h);
                Some((v[0], v[1.min(n - 1)]))
            })
            .collect();
        let simple_mask: Vec<bool> = eig
            .iter()
            .map(|e| matches!(e, Some((l1, l2)) if *l1 > 0.0 && l1 - l2 > gap * l1))
            .collect();
        let min_log = eig
            .iter()
            .zip(&simple_mask)
            .filter(|(_, s)| **s)
            .map(|(e, _)| e.expect("masked").0.ln())
            .fold(f64::INFINITY, f64::min);
        if !min_log.is_finite() {
            return Err(Error::Degenerate("no node with a simple positive largest eigenvalue".into()));
        }
        let k0 = (-min_log).max(0.0) + 1.0;
        let b = base.map_nodes(|i, _| if simple_mask[i] { eig[i].expect("masked").0.ln() + k0 } else { f64::NAN });
        Ok(Self {
            base,
            b,
            k0,
            simple_mask,
        })
    }

    /// True if `b` is defined on the radius-`r` cube around node `i`.
    pub fn defined_around(&self, i: usize, r: usize) -> bool {
        if !self.b.has_stencil(i, r) {
            return false;
        }
        let n = self.b.n();
        let m = self.b.multi(i);
        let ri = r as isize;
        let mut off = vec![-ri; n];
        loop {
            let idx: Vec<usize> = m.iter().zip(&off).map(|(a, o)| (*a as isize + o) as usize).collect();
            if !self.b.values()[self.b.flat(&idx)].is_finite() {
                return false;
            }
            let mut a = 0;
            loop {
                if a == n {
                    return true;
                }
                off[a] += 1;
                if off[a] > ri {
                    off[a] = -ri;
                    a += 1;
                } else {
                    break;
                }
            }
        }
    }
}

/// Per-probe Jacobi quantities `(sum F^{ii} b_ii, sum F^{ii} b_i^2, |F - f|)`.
fn jacobi_terms(field: &LogEigenField, k: usize, i: usize, f: Option<&GridFunction>) -> Option<(f64, f64, f64)> {
    if !field.defined_around(i, 1) {
        return None;
    }
    let d2u = field.base.hessian(i)?;
    let (lam, q) = eigen_sorted(&d2u);
    let hq = hq_derivatives(&Spectrum::new(lam).ok()?, k, None).ok()?;
    let n = q.nrows();
    let fij = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(hq.grad.clone())) * q.transpose();
    let db = nalgebra::DVector::from_vec(field.b.gradient(i)?);
    let d2b = field.b.hessian(i)?;
    let second = (&fij * &d2b).trace();
    let first = db.dot(&(&fij * &db));
    let resid = f.and_then(|g| g.values().get(i).copied()).map(|fv| (hq.value - fv).abs()).unwrap_or(0.0);
    debug_assert_eq!(n, d2b.nrows());
    Some((second, first, resid))
}

/// `sum F^{ii} b_ii - c sum F^{ii} b_i^2 + C` at each probe, in the eigenframe of `D^2u`.
///
/// `empirical_constant` is the smallest `C` making every probe nonnegative for the given `c`;
/// `extra["max_pde_residual"]` records `|F(D^2u) - f|` at the probes when `f` is supplied.
pub fn jacobi_margin(
    field: &LogEigenField,
    f: Option<&GridFunction>,
    k: usize,
    trial_c: f64,
    trial_big_c: f64,
    probes: &[Vec<f64>],
) -> Result<MarginReport> {
    let n = field.base.n();
    check_quotient(n, k)?;
    let rows: Vec<Option<(Vec<f64>, f64, f64, f64)>> = probes
        .par_iter()
        .map(|x| {
            let i = field.base.nearest(x)?;
            if !field.simple_mask[i] {
                return None;
            }
            let (s, q, r) = jacobi_terms(field, k, i, f)?;
            Some((field.base.point(i), s - trial_c * q, (s.abs()).max(trial_c * q.abs()), r))
        })
        .collect();
    let mut report = MarginReport::empty("jacobi", n, k, 0.0);
    let mut need = 0.0_f64;
    let mut resid = 0.0_f64;
    let mut skipped = 0;
    for row in rows {
        let Some((x, raw, _scale, r)) = row else {
            skipped += 1;
            continue;
        };
        report.sample_count += 1;
        need = need.max(-raw);
        resid = resid.max(r);
        let m = raw + trial_big_c;
        if m < 0.0 {
            report.violation_count += 1;
        }
        if m < report.min_margin {
            report.min_margin = m;
            report.witness = Some(Witness::Point { x });
        }
    }
    report.empirical_constant = Some(need);
    report.extra.insert("skipped".into(), skipped as f64);
    report.extra.insert("max_pde_residual".into(), resid);
    report.extra.insert("k0".into(), field.k0);
    Ok(report)
}

/// `b*(y) = b(x(y))` on the dual lattice with `G^{ij} = sigma_{n-k}^{ij}(D^2 w)`;
/// reports `sum G^{ii} b*_ii + C` at every dual node with a full valid stencil.
pub fn dual_jacobi_margin(pair: &DualPair, field: &LogEigenField, k: usize, trial_big_c: f64) -> Result<MarginReport> {
    let n = pair.primal.n();
    check_quotient(n, k)?;
    let bstar = pair.pullback(&field.b)?;
    let w = &pair.dual;
    let rows: Vec<Option<(usize, f64)>> = (0..w.len())
        .into_par_iter()
        .map(|j| {
            if !pair.valid_stencil(j, 1) {
                return None;
            }
            for a in 0..n {
                for s in [-1, 1] {
                    let nb = bstar.neighbor(j, a, s)?;
                    if !bstar.values()[nb].is_finite() {
                        return None;
                    }
                }
            }
            if !bstar.values()[j].is_finite() {
                return None;
            }
            let d2w = w.hessian(j)?;
            let d2b = bstar.hessian(j)?;
            if d2b.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let g = sigma_matrix_gradient(&d2w, n - k);
            Some((j, (&g * &d2b).trace()))
        })
        .collect();
    let mut report = MarginReport::empty("dual-jacobi", n, k, 0.0);
    let mut need = 0.0_f64;
    for (j, v) in rows.into_iter().flatten() {
        report.sample_count += 1;
        need = need.max(-v);
        let m = v + trial_big_c;
        if m < 0.0 {
            report.violation_count += 1;
        }
        if m < report.min_margin {
            report.min_margin = m;
            report.witness = Some(Witness::Point { x: w.point(j) });
        }
    }
    report.empirical_constant = Some(need);
    Ok(report)
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct DivergenceResiduals {
    /// `max_i |sum_j d_j sigma_k^{ij}|` per probe; NaN when skipped.
    pub per_probe: Vec<f64>,
    pub max: f64,
    pub skipped: usize,
}

/// `|sum_j d_j sigma_k^{ij}(D^2 u)|` per row at each probe, by central differences of
/// the ambient-frame coefficient matrix.
pub fn divergence_residual(u: &GridFunction, k: usize, probes: &[Vec<f64>]) -> Result<DivergenceResiduals> {
    let n = u.n();
    if k == 0 || k > n {
        return Err(Error::Argument(format!("need 1 <= k <= n, got k={k}")));
    }
    let h = u.spacing();
    let per_probe: Vec<f64> = probes
        .par_iter()
        .map(|x| {
            let Some(i) = u.nearest(x).filter(|&i| u.has_stencil(i, 2)) else {
                return f64::NAN;
            };
            let coef = |j: usize| sigma_matrix_gradient(&u.hessian_unchecked(j), k);
            let mut worst = 0.0_f64;
            let shifted: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..n)
                .map(|b| {
                    (
                        coef(u.neighbor(i, b, 1).expect("stencil")),
                        coef(u.neighbor(i, b, -1).expect("stencil")),
                    )
                })
                .collect();
            for a in 0..n {
                let s: f64 = (0..n).map(|b| (shifted[b].0[(a, b)] - shifted[b].1[(a, b)]) / (2.0 * h)).sum();
                worst = worst.max(s.abs());
            }
            worst
        })
        .collect();
    let ok = per_probe.iter().filter(|v| v.is_finite());
    Ok(DivergenceResiduals {
        max: ok.clone().fold(0.0, |m, v| m.max(*v)),
        skipped: per_probe.len() - ok.count(),
        per_probe,
    })
}
