//! Maximum-volume inscribed ellipsoids, the radius estimate and the ellipsoid barrier.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::section::{extract_section, Section};
use crate::error::{check_quotient, Error, Result};
use crate::grid::GridFunction;
use crate::symcalc::{eigen_sorted, hq_value, sigma_all};

/// Dilation constant used for the John sandwich `E ⊂ S ⊂ C(n) E`.
pub fn john_constant(n: usize) -> f64 {
    n as f64
}

/// Allowed relative excess over `C(n)` in sampled containment.
pub const JOHN_SLACK: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    /// Descending semi-axis lengths.
    pub semi_axes: Vec<f64>,
    /// Column `i` is the direction of `semi_axes[i]`.
    pub frame: Vec<Vec<f64>>,
}

impl Ellipsoid {
    pub fn new(center: Vec<f64>, semi_axes: Vec<f64>, frame: DMatrix<f64>) -> Result<Self> {
        let n = center.len();
        if semi_axes.len() != n || frame.shape() != (n, n) {
            return Err(Error::Argument("ellipsoid parts have inconsistent dimensions".into()));
        }
        if semi_axes.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::Argument("semi-axes must be positive".into()));
        }
        if semi_axes.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Argument("semi-axes must be descending".into()));
        }
        let defect = (frame.transpose() * &frame - DMatrix::identity(n, n)).amax();
        if defect > 1e-10 {
            return Err(Error::Argument(format!("frame is not orthonormal (defect {defect:.2e})")));
        }
        Ok(Self {
            center,
            semi_axes,
            frame: (0..n).map(|c| frame.column(c).iter().copied().collect()).collect(),
        })
    }

    /// Axis-aligned ellipsoid; axes are sorted descending with the frame permuted to match.
    pub fn axis_aligned(center: Vec<f64>, axes: &[f64]) -> Result<Self> {
        let n = axes.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| axes[b].total_cmp(&axes[a]));
        let frame = DMatrix::from_fn(n, n, |r, c| if r == order[c] { 1.0 } else { 0.0 });
        Self::new(center, order.iter().map(|&i| axes[i]).collect(), frame)
    }

    pub fn n(&self) -> usize {
        self.center.len()
    }

    pub fn frame_matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |r, c| self.frame[c][r])
    }

    /// `|| diag(1/a) Q^T (x - c) ||`: at most 1 inside.
    pub fn gauge(&self, x: &[f64]) -> f64 {
        let q = self.frame_matrix();
        let d = DVector::from_iterator(self.n(), x.iter().zip(&self.center).map(|(a, b)| a - b));
        let y = q.transpose() * d;
        y.iter().zip(&self.semi_axes).map(|(v, a)| (v / a).powi(2)).sum::<f64>().sqrt()
    }

    /// Point `c + Q diag(a) y` for `y` on the unit sphere.
    pub fn boundary_point(&self, y: &[f64]) -> Vec<f64> {
        let q = self.frame_matrix();
        let v = DVector::from_iterator(self.n(), y.iter().zip(&self.semi_axes).map(|(s, a)| s * a));
        let p = q * v;
        p.iter().zip(&self.center).map(|(a, b)| a + b).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JohnEllipsoid {
    pub ellipsoid: Ellipsoid,
    /// Smallest slack of the tangent-halfspace constraints (nonnegative when inscribed).
    pub min_slack: f64,
    /// `max_j gauge(p_j)` over section boundary points.
    pub dilation: f64,
    pub john_constant: f64,
    /// `dilation <= (1 + JOHN_SLACK) C(n)`.
    pub contained_in_dilate: bool,
    pub newton_steps: usize,
}

/// Symmetric basis `E_l` with `(p, q)` index pairs, `p <= q`.
fn sym_basis(n: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for p in 0..n {
        for q in p..n {
            v.push((p, q));
        }
    }
    v
}

struct Barrier<'a> {
    n: usize,
    basis: Vec<(usize, usize)>,
    a: &'a [DVector<f64>],
    b: &'a [f64],
}

impl Barrier<'_> {
    fn unpack(&self, theta: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for (l, &(p, q)) in self.basis.iter().enumerate() {
            m[(p, q)] = theta[l];
            m[(q, p)] = theta[l];
        }
        let d = DVector::from_iterator(n, theta[self.basis.len()..].iter().copied());
        (m, d)
    }

    fn basis_times(&self, l: usize, v: &DVector<f64>) -> DVector<f64> {
        let (p, q) = self.basis[l];
        let mut out = DVector::zeros(self.n);
        out[p] += v[q];
        if p != q {
            out[q] += v[p];
        }
        out
    }

    /// `-log det B - w sum log s_j`, or `None` when infeasible.
    fn value(&self, theta: &[f64], w: f64) -> Option<f64> {
        let (bm, d) = self.unpack(theta);
        let chol = bm.clone().cholesky()?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mut acc = -logdet;
        for (aj, bj) in self.a.iter().zip(self.b) {
            let s = bj - aj.dot(&d) - (&bm * aj).norm();
            if !(s > 0.0) {
                return None;
            }
            acc -= w * s.ln();
        }
        Some(acc)
    }

    fn derivatives(&self, theta: &[f64], w: f64) -> (DVector<f64>, DMatrix<f64>, f64) {
        let (bm, d) = self.unpack(theta);
        let nb = self.basis.len();
        let dim = nb + self.n;
        let inv = bm.clone().try_inverse().expect("feasible B is invertible");
        let mut g = DVector::zeros(dim);
        let mut hm = DMatrix::zeros(dim, dim);
        let ebasis: Vec<DMatrix<f64>> = self
            .basis
            .iter()
            .map(|&(p, q)| {
                let mut e = DMatrix::zeros(self.n, self.n);
                e[(p, q)] = 1.0;
                e[(q, p)] = 1.0;
                e
            })
            .collect();
        let prods: Vec<DMatrix<f64>> = ebasis.iter().map(|e| &inv * e).collect();
        for l in 0..nb {
            g[l] -= prods[l].trace();
            for m in 0..nb {
                hm[(l, m)] += (&prods[l] * &prods[m]).trace();
            }
        }
        let mut min_slack = f64::INFINITY;
        for (aj, bj) in self.a.iter().zip(self.b) {
            let y = &bm * aj;
            let ny = y.norm();
            let s = bj - aj.dot(&d) - ny;
            min_slack = min_slack.min(s);
            let cs: Vec<DVector<f64>> = (0..nb).map(|l| self.basis_times(l, aj)).collect();
            let mut ds = DVector::zeros(dim);
            for l in 0..nb {
                ds[l] = -y.dot(&cs[l]) / ny;
            }
            for a in 0..self.n {
                ds[nb + a] = -aj[a];
            }
            g -= &ds * (w / s);
            hm += &ds * ds.transpose() * (w / (s * s));
            // second derivative of s is minus that of ||B a||
            for l in 0..nb {
                for m in 0..nb {
                    let d2 = cs[l].dot(&cs[m]) / ny - y.dot(&cs[l]) * y.dot(&cs[m]) / (ny * ny * ny);
                    hm[(l, m)] += w * d2 / s;
                }
            }
        }
        (g, hm, min_slack)
    }
}

/// Maximum-volume ellipsoid inside the polytope `{a_j . x <= b_j}` by a log-barrier
/// path with Newton steps; `a_j` must be unit vectors and `start` strictly feasible.
pub fn max_volume_inscribed(a: &[DVector<f64>], b: &[f64], start: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>, f64, usize)> {
    let n = start.len();
    if a.len() < n + 1 {
        return Err(Error::Rank(format!("need at least {} constraints, got {}", n + 1, a.len())));
    }
    let bar = Barrier {
        n,
        basis: sym_basis(n),
        a,
        b,
    };
    let d0 = DVector::from_column_slice(start);
    let r0 = a.iter().zip(b).map(|(aj, bj)| bj - aj.dot(&d0)).fold(f64::INFINITY, f64::min);
    if !(r0 > 0.0) {
        return Err(Error::Degenerate("start point is not strictly inside the polytope".into()));
    }
    let mut theta: Vec<f64> = bar.basis.iter().map(|&(p, q)| if p == q { 0.5 * r0 } else { 0.0 }).collect();
    theta.extend_from_slice(start);
    let m = a.len() as f64;
    let mut w = 1.0 / m;
    let mut steps = 0usize;
    let mut slack = 0.0;
    while w > 1e-12 / m {
        for _ in 0..100 {
            let (g, hm, s) = bar.derivatives(&theta, w);
            slack = s;
            let step = match hm.clone().cholesky() {
                Some(c) => c.solve(&(-&g)),
                None => {
                    let shift = hm.diagonal().amax().max(1.0) * 1e-8;
                    (hm + DMatrix::identity(g.len(), g.len()) * shift)
                        .lu()
                        .solve(&(-&g))
                        .ok_or_else(|| Error::Degenerate("singular barrier Hessian".into()))?
                }
            };
            let decrement = -g.dot(&step);
            if decrement < 1e-20 {
                break;
            }
            let f0 = bar.value(&theta, w).expect("iterate is feasible");
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(x, d)| x + t * d).collect();
                if let Some(f1) = bar.value(&trial, w) {
                    if f1 <= f0 - 0.25 * t * decrement {
                        theta = trial;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            steps += 1;
            if !moved || decrement < 1e-14 {
                break;
            }
        }
        w *= 0.1;
    }
    let (bm, d) = bar.unpack(&theta);
    Ok((bm, d, slack, steps))
}

/// Approximate John ellipsoid of a section from its tangent-halfspace polytope.
pub fn john_ellipsoid(section: &Section) -> Result<JohnEllipsoid> {
    let n = section.n();
    let a: Vec<DVector<f64>> = section.normals.iter().map(|v| DVector::from_column_slice(v)).collect();
    let b: Vec<f64> = a.iter().zip(&section.points).map(|(aj, p)| aj.dot(&DVector::from_column_slice(p))).collect();
    let start = section.base.clone();
    let (bm, d, slack, steps) = max_volume_inscribed(&a, &b, &start)?;
    let (axes, q) = eigen_sorted(&bm);
    if axes[n - 1] <= 1e-12 * axes[0] {
        return Err(Error::Rank("inscribed ellipsoid is flat".into()));
    }
    let ellipsoid = Ellipsoid::new(d.iter().copied().collect(), axes, q)?;
    let dilation = section.points.iter().map(|p| ellipsoid.gauge(p)).fold(0.0, f64::max);
    let c = john_constant(n);
    Ok(JohnEllipsoid {
        ellipsoid,
        min_slack: slack,
        dilation,
        john_constant: c,
        contained_in_dilate: dilation <= (1.0 + JOHN_SLACK) * c,
        newton_steps: steps,
    })
}

/// `(2h)^{(n-k)/2} - a_1 ... a_{n-k}`.
pub fn radius_margin(semi_axes: &[f64], h: f64, k: usize) -> Result<f64> {
    let n = semi_axes.len();
    check_quotient(n, k)?;
    let prod: f64 = semi_axes[..n - k].iter().product();
    Ok((2.0 * h).powf((n - k) as f64 / 2.0) - prod)
}

/// Section `{x^T H x / 2 < h}` of a positive definite quadratic: semi-axes `sqrt(2h / lambda_i)`.
pub fn quadratic_section_ellipsoid(hessian: &DMatrix<f64>, center: &[f64], h: f64) -> Result<Ellipsoid> {
    let n = hessian.nrows();
    if hessian.shape() != (n, n) || center.len() != n || !(h > 0.0) {
        return Err(Error::Argument("quadratic section needs a square Hessian, matching centre and h > 0".into()));
    }
    let (lam, q) = eigen_sorted(hessian);
    if !(lam[n - 1] > 0.0) {
        return Err(Error::Domain("Hessian is not positive definite".into()));
    }
    // ascending eigenvalues give descending axes
    let axes: Vec<f64> = lam.iter().rev().map(|l| (2.0 * h / l).sqrt()).collect();
    let frame = DMatrix::from_fn(n, n, |r, c| q[(r, n - 1 - c)]);
    Ellipsoid::new(center.to_vec(), axes, frame)
}

/// How a field solving `F = f` is brought to the frame where it is a subsolution of `F >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SubsolutionFrame {
    /// Use the field as given.
    #[default]
    AsIs,
    /// Multiply values by `mu^{-1/(n-k)}` with `mu = min F`.
    ScaleValues,
    /// Replace `u(x)` by `u(x0 + t (x - x0))` with `t = mu^{-1/(2(n-k))}`; the section
    /// height is unchanged and the axes are reported in the original coordinates.
    ScaleCoordinates,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub n: usize,
    pub k: usize,
    pub level: f64,
    pub margin: f64,
    pub bound: f64,
    pub axis_product: f64,
    pub semi_axes: Vec<f64>,
    /// Tolerance on the margin from the lattice resolution of the section.
    pub eps_geom: f64,
    pub min_quotient: f64,
    pub frame: SubsolutionFrame,
    /// Factor applied to values (`ScaleValues`) or coordinates (`ScaleCoordinates`).
    pub rescale: f64,
    pub john: JohnEllipsoid,
}

impl RadiusReport {
    pub fn passed(&self) -> bool {
        self.margin >= -self.eps_geom
    }
}

/// `eps_geom` for axes known to within one lattice spacing: the spread of the axis
/// product when each of the `n-k` largest axes moves by `spacing`.
pub fn geometric_tolerance(semi_axes: &[f64], k: usize, spacing: f64) -> f64 {
    let n = semi_axes.len();
    let prod: f64 = semi_axes[..n - k].iter().product();
    let grown: f64 = semi_axes[..n - k].iter().map(|a| a + spacing).product();
    grown - prod
}

/// Radius estimate on the section `{u - l < h}` at `x0`, after checking that `u` is a
/// subsolution of `F >= 1` (within `sub_tol`) at every interior node of the section.
pub fn radius_estimate_check(
    u: &GridFunction,
    x0: &[f64],
    h: f64,
    k: usize,
    frame: SubsolutionFrame,
    sub_tol: f64,
) -> Result<RadiusReport> {
    let n = u.n();
    check_quotient(n, k)?;
    let section = extract_section(u, x0, h)?;
    let quotients = section_quotients(u, &section, k);
    let (min_q, worst) = quotients
        .iter()
        .fold((f64::INFINITY, None), |(m, w), (x, q)| if *q < m { (*q, Some(x.clone())) } else { (m, w) });
    if !min_q.is_finite() || min_q <= 0.0 {
        return Err(Error::Precondition(format!("F(D^2u) is not positive in the section (worst node {worst:?})")));
    }
    let p = (n - k) as f64;
    let (field, rescale, height) = match frame {
        SubsolutionFrame::AsIs => {
            if min_q < 1.0 - sub_tol {
                return Err(Error::Precondition(format!(
                    "u is not a subsolution of F >= 1: F = {min_q:.6e} at {:?}",
                    worst.unwrap_or_default()
                )));
            }
            (u.clone(), 1.0, h)
        }
        SubsolutionFrame::ScaleValues => {
            let s = min_q.powf(-1.0 / p);
            let mut v = u.clone();
            v.values_mut().iter_mut().for_each(|x| *x *= s);
            (v, s, h)
        }
        SubsolutionFrame::ScaleCoordinates => (u.clone(), min_q.powf(-1.0 / (2.0 * p)), h),
    };
    let section = if matches!(frame, SubsolutionFrame::ScaleValues) {
        extract_section(&field, x0, height)?
    } else {
        section
    };
    let john = john_ellipsoid(&section)?;
    // coordinates scaled by t shrink lengths by 1/t in the normalized frame
    let axes: Vec<f64> = match frame {
        SubsolutionFrame::ScaleCoordinates => john.ellipsoid.semi_axes.iter().map(|a| a / rescale).collect(),
        _ => john.ellipsoid.semi_axes.clone(),
    };
    let spacing = match frame {
        SubsolutionFrame::ScaleCoordinates => section.spacing / rescale,
        _ => section.spacing,
    };
    let margin = radius_margin(&axes, height, k)?;
    Ok(RadiusReport {
        n,
        k,
        level: height,
        margin,
        bound: (2.0 * height).powf(p / 2.0),
        axis_product: axes[..n - k].iter().product(),
        eps_geom: geometric_tolerance(&axes, k, spacing),
        semi_axes: axes,
        min_quotient: min_q,
        frame,
        rescale,
        john,
    })
}

/// `F(D^2u)` at every lattice node inside the section that has a full stencil.
fn section_quotients(u: &GridFunction, section: &Section, k: usize) -> Vec<(Vec<f64>, f64)> {
    let n = u.n();
    (0..u.len())
        .filter(|&i| u.has_stencil(i, 1))
        .filter_map(|i| {
            let x = u.point(i);
            let v = u.values()[i] - section.base_value - (0..n).map(|a| section.slope[a] * (x[a] - section.base[a])).sum::<f64>();
            if v >= section.level {
                return None;
            }
            let (lam, _) = eigen_sorted(&u.hessian(i)?);
            Some((x, hq_value(&lam, k)))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidBarrier {
    /// `sigma_{n-k}(A)^{1/(n-k)}` with `A = diag(a_i^2)`.
    pub scale: f64,
    /// Eigenvalues of `D^2 w` in the ellipsoid frame: `scale / a_i^2`.
    pub hessian_diagonal: Vec<f64>,
    pub residual: f64,
    /// `w` at the centre, `-scale / 2`.
    pub center_value: f64,
    /// Largest `|w|` over sampled boundary points.
    pub boundary_max: f64,
    pub passed: bool,
}

/// `w = s/2 (sum (x_i - r_i)^2 / a_i^2 - 1)` in the ellipsoid frame, with the exact check
/// `F(D^2 w) = 1`.
pub fn ellipsoid_barrier(e: &Ellipsoid, k: usize) -> Result<EllipsoidBarrier> {
    let n = e.n();
    check_quotient(n, k)?;
    let sq: Vec<f64> = e.semi_axes.iter().map(|a| a * a).collect();
    let s = sigma_all(&sq, n - k)[n - k].powf(1.0 / (n - k) as f64);
    let diag: Vec<f64> = sq.iter().map(|a2| s / a2).collect();
    let residual = (hq_value(&diag, k) - 1.0).abs();
    let w = |x: &[f64]| 0.5 * s * (e.gauge(x).powi(2) - 1.0);
    let mut boundary_max = 0.0_f64;
    for a in 0..n {
        for sign in [-1.0, 1.0] {
            let mut y = vec![0.0; n];
            y[a] = sign;
            boundary_max = boundary_max.max(w(&e.boundary_point(&y)).abs());
        }
    }
    let diag_dir = vec![1.0 / (n as f64).sqrt(); n];
    boundary_max = boundary_max.max(w(&e.boundary_point(&diag_dir)).abs());
    let center_value = w(&e.center);
    Ok(EllipsoidBarrier {
        scale: s,
        hessian_diagonal: diag,
        residual,
        center_value,
        boundary_max,
        passed: residual <= 1e-12 && center_value <= 0.0 && boundary_max <= 1e-12 * s.max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::symcalc::binomial;

    #[test]
    fn barrier_hand_case() {
        let e = Ellipsoid::axis_aligned(vec![0.0; 3], &[2.0, 1.0, 1.0]).unwrap();
        let r = ellipsoid_barrier(&e, 1).unwrap();
        assert!((r.scale - 3.0).abs() < 1e-14);
        assert!(r.residual <= 1e-14);
        assert!(r.passed);
    }

    #[test]
    fn barrier_isotropic() {
        for (n, k) in [(2, 1), (4, 2), (6, 3)] {
            let e = Ellipsoid::axis_aligned(vec![0.5; n], &vec![1.0; n]).unwrap();
            let r = ellipsoid_barrier(&e, k).unwrap();
            assert!((r.scale - binomial(n, n - k).powf(1.0 / (n - k) as f64)).abs() < 1e-13);
            assert!(r.residual <= 1e-14);
        }
    }

    #[test]
    fn john_of_disc_and_ellipse() {
        let u = GridFunction::from_fn(Domain::cube(2, 1.0), 1.0 / 32.0, |x| 0.5 * (x[0] * x[0] + x[1] * x[1])).unwrap();
        let j = john_ellipsoid(&extract_section(&u, &[0.0, 0.0], 0.125).unwrap()).unwrap();
        let ax = &j.ellipsoid.semi_axes;
        assert!((ax[0] / ax[1] - 1.0).abs() < 0.01, "{ax:?}");
        assert!((ax[0] - 0.5).abs() < 0.01);
        assert!(j.min_slack >= -1e-8);
        assert!(j.contained_in_dilate);

        let u = GridFunction::from_fn(Domain::cube(2, 1.5), 1.0 / 64.0, |x| 0.5 * (x[0] * x[0] + 16.0 * x[1] * x[1])).unwrap();
        let j = john_ellipsoid(&extract_section(&u, &[0.0, 0.0], 0.5).unwrap()).unwrap();
        let ax = &j.ellipsoid.semi_axes;
        assert!((ax[0] - 1.0).abs() < 0.02 && (ax[1] - 0.25).abs() < 0.02 * 0.25, "{ax:?}");
    }

    #[test]
    fn quadratic_section_matches_closed_form() {
        let hm = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let e = quadratic_section_ellipsoid(&hm, &[0.0, 0.0], 0.1).unwrap();
        assert!((e.semi_axes[0] - 0.2f64.sqrt()).abs() < 1e-15 && (e.semi_axes[1] - 0.05f64.sqrt()).abs() < 1e-15);
        assert!((e.gauge(&[0.0, 0.05f64.sqrt()]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn radius_closed_form() {
        let (n, k, h) = (3, 1, 0.1);
        let c = binomial(n, k).powf(1.0 / (n - k) as f64);
        let a = (2.0 * h / c).sqrt();
        let m = radius_margin(&[a, a, a], h, k).unwrap();
        assert!((m - 0.2 * (1.0 - 1.0 / 3f64.sqrt())).abs() < 1e-12);
    }
}
