//! Shifted-data approximants `u_m` and the two-sided bound
//! `u_m >= u >= u_m + (M/2m)(|x|^2 - R^2) - 1/m`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::newton::{fitted_order, solve_nodal, SolveOptions, SolveReport};
use super::problem::NodalProblem;
use crate::error::{Error, Result};
use crate::grid::{Domain, GridFunction};
use crate::symcalc::binomial;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichRow {
    pub m: usize,
    pub converged: bool,
    /// `max (u - u_m)`; positive values violate the upper bound.
    pub upper_violation: f64,
    /// `max (v_m - u)`; positive values violate the lower bound.
    pub lower_violation: f64,
    pub sup_distance: f64,
    pub solve: SolveReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// Coefficient of the quadratic correction.
    pub big_m: f64,
    /// `R^2` in the correction, the largest squared distance from the centre.
    pub outer_radius_sq: f64,
    pub rows: Vec<SandwichRow>,
    /// Minus the log-log slope of `sup |u_m - u|` against `m`.
    pub decay_exponent: Option<f64>,
    pub partial: bool,
}

impl SandwichReport {
    pub fn max_violation(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.upper_violation.max(r.lower_violation))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `M = 1 / (p F~(I) fmin^{(p-1)/p})` with `p = n - k`, which makes
/// `F~(A + (M/m) I)^p >= f_m + 1/m` whenever `F(A) = f_m >= fmin`.
pub fn sandwich_constant(n: usize, k: usize, fmin: f64) -> f64 {
    let p = (n - k) as f64;
    let ftilde_identity = (1.0 / binomial(n, k)).powf(1.0 / p);
    1.0 / (p * ftilde_identity * fmin.powf((p - 1.0) / p))
}

fn domain_center_radius_sq(d: &Domain) -> (Vec<f64>, f64) {
    match d {
        Domain::Ball { center, radius } => (center.clone(), radius * radius),
        Domain::Box { lo, hi } => (
            lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
            lo.iter().zip(hi).map(|(a, b)| 0.25 * (b - a) * (b - a)).sum(),
        ),
    }
}

/// Solves with `f_m = f - 1/(2m)` and `g_m = g + 1/(2m)` for each `m`, and checks the
/// sandwich against `truth` on the lattice.
pub fn approximation_sandwich(
    problem: &NodalProblem,
    truth: &GridFunction,
    m_list: &[usize],
    opts: &SolveOptions,
) -> Result<SandwichReport> {
    if m_list.is_empty() || m_list.windows(2).any(|w| w[0] >= w[1]) || m_list[0] == 0 {
        return Err(Error::Argument("m_list must be positive and strictly increasing".into()));
    }
    if truth.len() != problem.lattice.len() || truth.dims() != problem.lattice.dims() {
        return Err(Error::Argument("truth does not live on the problem lattice".into()));
    }
    let fmin = problem.f_min();
    let shifted_min = fmin - 0.5 / m_list[0] as f64;
    if shifted_min <= 0.0 {
        return Err(Error::Domain(format!(
            "f_m = f - 1/(2m) is not positive for m = {} (min f = {fmin})",
            m_list[0]
        )));
    }
    let n = problem.n();
    let big_m = sandwich_constant(n, problem.k, shifted_min);
    let (center, r2) = domain_center_radius_sq(problem.lattice.domain());
    let rows: Vec<Result<SandwichRow>> = m_list
        .par_iter()
        .map(|&m| {
            let shift = 0.5 / m as f64;
            let fm: Vec<f64> = problem.f.iter().map(|v| v - shift).collect();
            let gm: Vec<f64> = problem.g.iter().map(|v| v + shift).collect();
            let pm = NodalProblem::new(problem.k, problem.lattice.clone(), fm, gm)?;
            let (um, solve) = solve_nodal(&pm, opts)?;
            let (mut upper, mut lower, mut dist) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0_f64);
            for i in (0..um.len()).filter(|&i| um.inside(i)) {
                let x = um.point(i);
                let (a, b) = (um.values()[i], truth.values()[i]);
                let d2: f64 = x.iter().zip(&center).map(|(p, c)| (p - c) * (p - c)).sum();
                let v = a + big_m / (2.0 * m as f64) * (d2 - r2) - 1.0 / m as f64;
                upper = upper.max(b - a);
                lower = lower.max(v - b);
                dist = dist.max((a - b).abs());
            }
            Ok(SandwichRow {
                m,
                converged: solve.converged,
                upper_violation: upper,
                lower_violation: lower,
                sup_distance: dist,
                solve,
            })
        })
        .collect();
    let mut out = Vec::new();
    let mut partial = false;
    for r in rows {
        match r {
            Ok(row) => {
                partial |= !row.converged;
                out.push(row);
            }
            Err(Error::Domain(e)) => return Err(Error::Domain(e)),
            Err(_) => partial = true,
        }
    }
    let good: Vec<&SandwichRow> = out.iter().filter(|r| r.converged).collect();
    let decay_exponent = (good.len() >= 2).then(|| {
        let ms: Vec<f64> = good.iter().map(|r| r.m as f64).collect();
        let ds: Vec<f64> = good.iter().map(|r| r.sup_distance).collect();
        -fitted_order(&ms, &ds)
    });
    Ok(SandwichReport {
        big_m,
        outer_radius_sq: r2,
        rows: out,
        decay_exponent,
        partial,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_makes_the_perturbed_quotient_large_enough() {
        for (n, k) in [(2, 1), (3, 1), (4, 2), (5, 1)] {
            let fmin = 0.4;
            let m = 8.0;
            let big_m = sandwich_constant(n, k, fmin);
            let c = crate::solver::radial::isotropic_value(n, k, fmin);
            let lam = vec![c + big_m / m; n];
            let v = crate::symcalc::hq_value(&lam, k);
            assert!(v >= fmin + 1.0 / m - 1e-12, "n={n} k={k}: {v}");
        }
    }

    #[test]
    fn small_m_is_rejected() {
        let p = NodalProblem::from_fns(Domain::ball(2, 0.5), 0.125, 1, |_| 0.2, |x| x[0] * x[0]).unwrap();
        let truth = p.lattice.clone();
        assert!(matches!(approximation_sandwich(&p, &truth, &[2, 4], &SolveOptions::default()), Err(Error::Domain(_))));
    }
}
