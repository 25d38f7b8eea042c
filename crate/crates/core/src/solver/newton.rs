//! Damped Newton iteration for the nodal equations `F(D^2_h u) - f = 0`.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::problem::{DirichletProblem, NodalProblem};
use super::radial::isotropic_value;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::symcalc::{eigen_sorted, hq_derivatives, hq_value, Spectrum};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub delta_floor: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            delta_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm nodal residual of the returned field.
    pub final_residual: f64,
    pub min_hessian_eigenvalue: f64,
    /// Accepted step length per iteration.
    pub damping_history: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub unknowns: usize,
    pub spacing: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_order: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

struct Layout {
    /// Unknown index of each lattice node.
    slot: Vec<Option<usize>>,
    nodes: Vec<usize>,
    /// Flat offsets of the 3^n stencil with their multi-index shifts.
    offsets: Vec<(isize, Vec<isize>)>,
}

impl Layout {
    fn new(p: &NodalProblem) -> Self {
        let g = &p.lattice;
        let mut slot = vec![None; g.len()];
        let mut nodes = Vec::new();
        for i in 0..g.len() {
            if p.is_unknown(i) {
                slot[i] = Some(nodes.len());
                nodes.push(i);
            }
        }
        let n = g.n();
        let mut offsets = Vec::new();
        let stride = |a: usize| -> isize {
            let dims = g.dims();
            dims[a + 1..].iter().product::<usize>() as isize
        };
        for code in 0..3usize.pow(n as u32) {
            let mut c = code;
            let mut shift = vec![0isize; n];
            let mut off = 0isize;
            for (a, s) in shift.iter_mut().enumerate() {
                *s = (c % 3) as isize - 1;
                c /= 3;
                off += *s * stride(a);
            }
            offsets.push((off, shift));
        }
        Self { slot, nodes, offsets }
    }
}

/// Nodal residuals `F(D^2_h u) - f` at the unknowns; `None` when some Hessian leaves the cone
/// where `sigma_k > 0`.
fn residuals(p: &NodalProblem, lay: &Layout, u: &GridFunction) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(lay.nodes.len());
    for &i in &lay.nodes {
        let (lam, _) = eigen_sorted(&u.hessian_unchecked(i));
        let v = hq_value(&lam, p.k);
        if !v.is_finite() || crate::symcalc::sigma_all(&lam, p.k)[p.k] <= 0.0 {
            return None;
        }
        out.push(v - p.f[i]);
    }
    Some(out)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Stencil weights of `sum_ab A_ab (D^2_h u)_ab` over the 3^n offsets.
fn stencil_weights(a: &DMatrix<f64>, offsets: &[(isize, Vec<isize>)], h: f64) -> Vec<f64> {
    let n = a.nrows();
    let h2 = h * h;
    offsets
        .iter()
        .map(|(_, s)| {
            let nz: Vec<usize> = (0..n).filter(|&c| s[c] != 0).collect();
            match nz.len() {
                0 => -2.0 * (0..n).map(|c| a[(c, c)]).sum::<f64>() / h2,
                1 => a[(nz[0], nz[0])] / h2,
                2 => (s[nz[0]] * s[nz[1]]) as f64 * a[(nz[0], nz[1])] / (2.0 * h2),
                _ => 0.0,
            }
        })
        .collect()
}

fn sparse_solve(size: usize, triplets: &[Triplet<usize, usize, f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(size, size, triplets)
        .map_err(|e| Error::Degenerate(format!("cannot assemble sparse system: {e:?}")))?;
    let lu = mat.sp_lu().map_err(|e| Error::Degenerate(format!("sparse LU failed: {e:?}")))?;
    let x = lu.solve(Col::from_fn(size, |i| rhs[i]));
    let out: Vec<f64> = (0..size).map(|i| x[i]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("singular linearization".into()));
    }
    Ok(out)
}

/// Discrete harmonic extension of Dirichlet data given at the non-unknown nodes.
fn harmonic_extension(lay: &Layout, lattice: &GridFunction, data: &[f64]) -> Result<Vec<f64>> {
    let n = lattice.n();
    let mut trip = Vec::new();
    let mut rhs = vec![0.0; lay.nodes.len()];
    for (row, &i) in lay.nodes.iter().enumerate() {
        trip.push(Triplet::new(row, row, -2.0 * n as f64));
        for a in 0..n {
            for s in [-1, 1] {
                let j = lattice.neighbor(i, a, s).expect("unknowns have full stencils");
                match lay.slot[j] {
                    Some(col) => trip.push(Triplet::new(row, col, 1.0)),
                    None => rhs[row] -= data[j],
                }
            }
        }
    }
    sparse_solve(lay.nodes.len(), &trip, &rhs)
}

/// Isotropic quadratic matching `f` at the domain centre, plus the least-squares affine
/// fit of the boundary mismatch, plus the harmonic extension of what remains.
fn initial_iterate(p: &NodalProblem, lay: &Layout) -> Result<GridFunction> {
    let g = &p.lattice;
    let n = g.n();
    let (lo, hi) = g.domain().bounds();
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let fc = g
        .nearest(&center)
        .filter(|&i| g.inside(i))
        .map(|i| p.f[i])
        .unwrap_or_else(|| p.f_min());
    let c = isotropic_value(n, p.k, fc);
    let quad = |x: &[f64]| 0.5 * c * x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();

    let bnodes: Vec<usize> = (0..g.len()).filter(|&i| g.inside(i) && lay.slot[i].is_none()).collect();
    let mut ata = DMatrix::<f64>::zeros(n + 1, n + 1);
    let mut atb = DVector::<f64>::zeros(n + 1);
    for &i in &bnodes {
        let x = g.point(i);
        let mut row = vec![1.0];
        row.extend(x.iter().zip(&center).map(|(a, b)| a - b));
        let r = p.g[i] - quad(&x);
        for a in 0..=n {
            atb[a] += row[a] * r;
            for b in 0..=n {
                ata[(a, b)] += row[a] * row[b];
            }
        }
    }
    let coef = ata.lu().solve(&atb).ok_or_else(|| Error::Rank("boundary nodes do not determine an affine fit".into()))?;
    let affine = |x: &[f64]| coef[0] + (0..n).map(|a| coef[a + 1] * (x[a] - center[a])).sum::<f64>();

    let mut mismatch = vec![0.0; g.len()];
    for &i in &bnodes {
        let x = g.point(i);
        mismatch[i] = p.g[i] - quad(&x) - affine(&x);
    }
    let harm = harmonic_extension(lay, g, &mismatch)?;
    let mut u = g.map_nodes(|i, x| if lay.slot[i].is_none() { p.g[i] } else { quad(x) + affine(x) });
    for (row, &i) in lay.nodes.iter().enumerate() {
        u.values_mut()[i] += harm[row];
    }
    Ok(u)
}

fn min_interior_eigenvalue(lay: &Layout, u: &GridFunction) -> f64 {
    lay.nodes
        .iter()
        .map(|&i| *eigen_sorted(&u.hessian_unchecked(i)).0.last().expect("n >= 2"))
        .fold(f64::INFINITY, f64::min)
}

/// Solves the nodal problem from the default initial iterate.
pub fn solve_nodal(p: &NodalProblem, opts: &SolveOptions) -> Result<(GridFunction, SolveReport)> {
    let lay = Layout::new(p);
    if lay.nodes.is_empty() {
        return Err(Error::Argument("lattice has no interior nodes".into()));
    }
    let u0 = initial_iterate(p, &lay)?;
    newton(p, &lay, u0, opts)
}

/// Solves the nodal problem starting from `start`, whose Dirichlet nodes are reset to `g`.
pub fn solve_nodal_from(p: &NodalProblem, start: &GridFunction, opts: &SolveOptions) -> Result<(GridFunction, SolveReport)> {
    let lay = Layout::new(p);
    if start.len() != p.lattice.len() {
        return Err(Error::Argument("start field does not match the lattice".into()));
    }
    let u0 = p.lattice.map_nodes(|i, _| if lay.slot[i].is_none() { p.g[i] } else { start.values()[i] });
    newton(p, &lay, u0, opts)
}

fn newton(p: &NodalProblem, lay: &Layout, mut u: GridFunction, opts: &SolveOptions) -> Result<(GridFunction, SolveReport)> {
    if !(opts.tol > 0.0) || !(opts.delta_floor > 0.0) || opts.max_iter == 0 {
        return Err(Error::Argument("tol, delta_floor and max_iter must be positive".into()));
    }
    let h = p.lattice.spacing();
    let size = lay.nodes.len();
    let mut report = SolveReport {
        converged: false,
        iterations: 0,
        final_residual: f64::INFINITY,
        min_hessian_eigenvalue: f64::NAN,
        damping_history: Vec::new(),
        residual_history: Vec::new(),
        unknowns: size,
        spacing: h,
        convergence_order: None,
        message: None,
    };
    let Some(mut res) = residuals(p, lay, &u) else {
        return Err(Error::Degenerate("initial iterate leaves the ellipticity cone".into()));
    };
    let mut norm = max_abs(&res);
    report.residual_history.push(norm);
    while norm > opts.tol && report.iterations < opts.max_iter {
        let mut trip = Vec::with_capacity(size * lay.offsets.len());
        for (row, &i) in lay.nodes.iter().enumerate() {
            let (lam, q) = eigen_sorted(&u.hessian_unchecked(i));
            let clamped: Vec<f64> = lam.iter().map(|v| v.max(opts.delta_floor)).collect();
            let d = hq_derivatives(&Spectrum::new(clamped)?, p.k, None)?;
            let a = &q * DMatrix::from_diagonal(&DVector::from_vec(d.grad)) * q.transpose();
            let w = stencil_weights(&a, &lay.offsets, h);
            for ((off, _), wt) in lay.offsets.iter().zip(w) {
                if wt == 0.0 {
                    continue;
                }
                if let Some(col) = lay.slot[(i as isize + off) as usize] {
                    trip.push(Triplet::new(row, col, wt));
                }
            }
        }
        let rhs: Vec<f64> = res.iter().map(|r| -r).collect();
        let step = sparse_solve(size, &trip, &rhs)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=30 {
            let mut trial = u.clone();
            for (row, &i) in lay.nodes.iter().enumerate() {
                trial.values_mut()[i] += t * step[row];
            }
            if let Some(r) = residuals(p, lay, &trial) {
                let m = max_abs(&r);
                if m < (1.0 - 1e-4 * t) * norm {
                    accepted = Some((trial, r, m));
                    break;
                }
            }
            t *= 0.5;
        }
        report.iterations += 1;
        let Some((trial, r, m)) = accepted else {
            report.message = Some(format!("line search failed after 30 halvings at residual {norm:.3e}"));
            break;
        };
        report.damping_history.push(t);
        u = trial;
        res = r;
        norm = m;
        report.residual_history.push(norm);
    }
    report.final_residual = norm;
    report.min_hessian_eigenvalue = min_interior_eigenvalue(lay, &u);
    if norm <= opts.tol {
        if report.min_hessian_eigenvalue >= opts.delta_floor / 2.0 {
            report.converged = true;
        } else {
            report.message = Some(format!(
                "converged to a field with min Hessian eigenvalue {:.3e} below delta_floor/2",
                report.min_hessian_eigenvalue
            ));
        }
    } else if report.message.is_none() {
        report.message = Some(format!("max_iter = {} reached at residual {norm:.3e}", opts.max_iter));
    }
    Ok((u, report))
}

/// Solves a JSON-described problem; grid paths resolve against `base`.
pub fn grid_solve_in(problem: &DirichletProblem, base: Option<&std::path::Path>) -> Result<(GridFunction, SolveReport)> {
    let n = problem.n;
    if !(2..=3).contains(&n) {
        return Err(Error::Argument(format!("grid solver supports n = 2 or 3, got {n}; use the radial path")));
    }
    let nodal = problem.nodal(base)?;
    let opts = SolveOptions {
        tol: problem.tol,
        max_iter: problem.max_iter,
        delta_floor: problem.delta_floor,
    };
    solve_nodal(&nodal, &opts)
}

pub fn grid_solve(problem: &DirichletProblem, tol: f64, max_iter: usize) -> Result<(GridFunction, SolveReport)> {
    let mut p = problem.clone();
    p.tol = tol;
    p.max_iter = max_iter;
    grid_solve_in(&p, None)
}

/// Least-squares slope of `ln err` against `ln h`.
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;

    #[test]
    fn quadratic_is_recovered() {
        let p = NodalProblem::from_fns(Domain::cube(2, 1.0), 0.125, 1, |_| 1.0, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        let (u, rep) = solve_nodal(&p, &SolveOptions::default()).unwrap();
        assert!(rep.converged);
        let exact = GridFunction::from_fn(Domain::cube(2, 1.0), 0.125, |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        assert!(u.max_abs_diff(&exact) < 1e-10);
    }

    #[test]
    fn anisotropic_quadratic_from_isotropic_start() {
        // D^2u = diag(4, 1): F = 4/5
        let g = |x: &[f64]| 2.0 * x[0] * x[0] + 0.5 * x[1] * x[1] + 0.3 * x[0];
        let p = NodalProblem::from_fns(Domain::cube(2, 1.0), 0.125, 1, |_| 0.8, g).unwrap();
        let (u, rep) = solve_nodal(&p, &SolveOptions::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        let exact = GridFunction::from_fn(Domain::cube(2, 1.0), 0.125, g).unwrap();
        assert!(u.max_abs_diff(&exact) < 1e-9);
    }

    #[test]
    fn iteration_cap_is_reported_not_raised() {
        let g = |x: &[f64]| 2.0 * x[0] * x[0] + 0.5 * x[1] * x[1];
        let p = NodalProblem::from_fns(Domain::cube(2, 1.0), 0.125, 1, |_| 0.8, g).unwrap();
        let opts = SolveOptions {
            max_iter: 1,
            tol: 1e-14,
            ..Default::default()
        };
        let (_, rep) = solve_nodal(&p, &opts).unwrap();
        assert!(!rep.converged);
        assert!(rep.message.is_some());
    }
}
