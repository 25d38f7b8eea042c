//! Slab barriers for strict convexity: `w >= u` on a slab `U` over a ball around a point,
//! with `F(D^2 w) <= mu`, which forces a positive lower bound on the growth of `u - l`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_quotient, Error, Result};
use crate::grid::GridFunction;
use crate::sampling::gaussian;
use crate::symcalc::{eigen_sorted, hq_value, sigma_of_matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum BarrierCase {
    /// Slab `0 < x_n < rho`; `u` is controlled on the slab faces by a Hölder bound on `Du`.
    Case1,
    /// Slab `rho1 < x_n < rho2` with tilts `a`, `b` (slice gradients at `x' = 0`) and gradient bound `c1`.
    Case2 { a: Vec<f64>, b: Vec<f64>, rho1: f64, rho2: f64, c1: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierSpec {
    pub n: usize,
    pub k: usize,
    /// Hölder exponent of `Du`.
    pub alpha: f64,
    /// Quadratic coefficient `A` in the `x'` directions.
    pub big_a: f64,
    /// Constant from Young's inequality.
    pub c0: f64,
    pub rho: f64,
    /// Lower bound for `F(D^2 u)` on the slab.
    pub mu: f64,
    /// `min_{|x|=rho} (u - l)`.
    pub lambda: f64,
    /// `sup (u - l)` over the surrounding ball.
    pub sup_u: f64,
    pub case: BarrierCase,
}

/// A named inequality `lhs <= rhs` (or `<` when strict).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub strict: bool,
    pub holds: bool,
}

impl Inequality {
    fn new(name: &str, lhs: f64, rhs: f64, strict: bool) -> Self {
        let holds = if strict { lhs < rhs } else { lhs <= rhs };
        Self {
            name: name.into(),
            lhs,
            rhs,
            strict,
            holds,
        }
    }
}

/// `C0` with `M t^{1+alpha} <= A t^2 + C0 A^{-gamma}` for all `t >= 0`, `A > 0`.
pub fn young_constant(big_m: f64, alpha: f64) -> f64 {
    let gamma = (1.0 + alpha) / (1.0 - alpha);
    0.5 * (1.0 - alpha) * big_m * (0.5 * big_m * (1.0 + alpha)).powf(gamma)
}

impl BarrierSpec {
    pub fn gamma(&self) -> f64 {
        (1.0 + self.alpha) / (1.0 - self.alpha)
    }

    fn p(&self) -> i32 {
        (self.n - self.k) as i32
    }

    /// `B = 2^{-(n-k)} A^{-(n-k-1)} mu` (case 1) or `2^{-(n-k+1)} A^{-(n-k-1)} mu` (case 2).
    pub fn big_b(&self) -> f64 {
        let e = match self.case {
            BarrierCase::Case1 => -self.p(),
            BarrierCase::Case2 { .. } => -self.p() - 1,
        };
        2f64.powi(e) * self.big_a.powi(-(self.p() - 1)) * self.mu
    }

    /// Heights of the slab faces.
    pub fn slab(&self) -> (f64, f64) {
        match self.case {
            BarrierCase::Case1 => (0.0, self.rho),
            BarrierCase::Case2 { rho1, rho2, .. } => (rho1, rho2),
        }
    }

    fn young_term(&self) -> f64 {
        self.c0 * self.big_a.powf(-self.gamma())
    }

    /// Lower bound on `lambda` the comparison implies.
    pub fn lambda_bound(&self) -> f64 {
        let a = self.big_a.powi(-(self.p() - 1)) * self.mu * self.rho * self.rho;
        match self.case {
            BarrierCase::Case1 => 2f64.powi(-(self.p() + 2)) * a,
            BarrierCase::Case2 { .. } => 2f64.powi(-(self.p() + 1)) * a / 64.0,
        }
    }

    /// Constant Hessian of `w`.
    pub fn hessian(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::from_diagonal_element(n, n, 2.0 * self.big_a);
        m[(n - 1, n - 1)] = 2.0 * self.big_b();
        if let BarrierCase::Case2 { a, b, rho1, rho2, .. } = &self.case {
            for i in 0..n - 1 {
                let t = (b[i] - a[i]) / (rho2 - rho1);
                m[(i, n - 1)] = t;
                m[(n - 1, i)] = t;
            }
        }
        m
    }

    /// `w(y)` in the frame where `x0 = 0` and `e_n` points at the minimizer of `u - l` on `|x| = rho`.
    pub fn value(&self, y: &[f64]) -> f64 {
        let n = self.n;
        let yn = y[n - 1];
        let rsq: f64 = y[..n - 1].iter().map(|v| v * v).sum();
        let base = self.big_a * rsq + self.young_term();
        let bb = self.big_b();
        match &self.case {
            BarrierCase::Case1 => base + self.lambda * yn / self.rho + bb * yn * (yn - self.rho),
            BarrierCase::Case2 { a, b, rho1, rho2, .. } => {
                let ay: f64 = a.iter().zip(y).map(|(ai, yi)| ai * yi).sum();
                let dy: f64 = a.iter().zip(b).zip(y).map(|((ai, bi), yi)| (bi - ai) * yi).sum();
                base + bb * (yn - rho1) * (yn - rho2) + (self.lambda + dy) * (yn - rho1) / (rho2 - rho1) + self.lambda + ay
            }
        }
    }

    /// Every parameter condition the construction relies on.
    pub fn conditions(&self) -> Vec<Inequality> {
        let (n, k) = (self.n as f64, self.k as f64);
        let p = self.p();
        let big_a = self.big_a;
        let rho2 = self.rho * self.rho;
        let scale = big_a.powi(-(p - 1)) * self.mu * rho2;
        let mut out = vec![
            Inequality::new("n >= 4", 4.0, n, false),
            Inequality::new("k >= 1", 1.0, k, false),
            Inequality::new("k <= n - 3", k, n - 3.0, false),
            Inequality::new("1 - 2/(n-k) < alpha", 1.0 - 2.0 / p as f64, self.alpha, true),
            Inequality::new("alpha < 1", self.alpha, 1.0, true),
            Inequality::new("0 < mu", 0.0, self.mu, true),
            Inequality::new("0 < B", 0.0, self.big_b(), true),
            Inequality::new("B <= 1", self.big_b(), 1.0, false),
        ];
        match &self.case {
            BarrierCase::Case1 => {
                out.push(Inequality::new("sup u / rho^2 + 1/4 <= A", self.sup_u / rho2 + 0.25, big_a, false));
                out.push(Inequality::new(
                    "C0 A^-gamma <= 2^-(n-k+2) A^-(n-k-1) mu rho^2 / 2",
                    self.young_term(),
                    2f64.powi(-(p + 2)) * scale / 2.0,
                    false,
                ));
            }
            BarrierCase::Case2 { a, b, rho1, rho2: r2, c1 } => {
                let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                out.push(Inequality::new("|a| <= C1", norm(a), *c1, false));
                out.push(Inequality::new("|b| <= C1", norm(b), *c1, false));
                out.push(Inequality::new("0 < rho1", 0.0, *rho1, true));
                out.push(Inequality::new("rho1 < rho/4", *rho1, self.rho / 4.0, true));
                out.push(Inequality::new("3 rho/4 < rho2", 0.75 * self.rho, *r2, true));
                out.push(Inequality::new("rho2 < rho", *r2, self.rho, true));
                out.push(Inequality::new(
                    "sup u / rho^2 + 1/4 + 3 C1 / rho <= A",
                    self.sup_u / rho2 + 0.25 + 3.0 * c1 / self.rho,
                    big_a,
                    false,
                ));
                let sk = sigma_of_matrix(&self.hessian(), self.k)[self.k];
                out.push(Inequality::new("2^(k-1) A^k <= sigma_k(D^2 w)", 2f64.powi(self.k as i32 - 1) * big_a.powi(self.k as i32), sk, false));
                out.push(Inequality::new(
                    "C0 A^-gamma < 2^-(n-k+1) A^-(n-k-1) mu rho^2 / 32",
                    self.young_term(),
                    2f64.powi(-(p + 1)) * scale / 32.0,
                    true,
                ));
            }
        }
        out
    }

    /// Precondition error naming every failed condition.
    pub fn check(&self) -> Result<()> {
        check_quotient(self.n, self.k)?;
        if let BarrierCase::Case2 { a, b, .. } = &self.case {
            if a.len() != self.n - 1 || b.len() != self.n - 1 {
                return Err(Error::Argument(format!("tilts must have length {}", self.n - 1)));
            }
        }
        let failed: Vec<String> = self
            .conditions()
            .into_iter()
            .filter(|c| !c.holds)
            .map(|c| format!("{} ({:.6e} vs {:.6e})", c.name, c.lhs, c.rhs))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::Precondition(format!("barrier conditions failed: {}", failed.join("; "))))
        }
    }

    /// `F(D^2 w)` from the exact eigenvalues of the constant Hessian.
    pub fn operator_value(&self) -> f64 {
        let (lam, _) = eigen_sorted(&self.hessian());
        hq_value(&lam, self.k)
    }
}

/// Position of the slab: base node, tangent plane and the rotation `x = x0 + Q y`
/// with `Q e_n` the direction of `min_{|x - x0| = rho} (u - l)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub x0: Vec<f64>,
    pub base_value: f64,
    pub slope: Vec<f64>,
    pub direction: Vec<f64>,
    pub rho: f64,
    pub lambda: f64,
}

impl Placement {
    /// Householder reflection taking `e_n` to `direction`.
    pub fn frame(&self) -> DMatrix<f64> {
        let n = self.x0.len();
        let mut v = DVector::from_column_slice(&self.direction) * -1.0;
        v[n - 1] += 1.0;
        let nv = v.norm_squared();
        if nv < 1e-28 {
            return DMatrix::identity(n, n);
        }
        DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / nv)
    }

    fn to_world(&self, q: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        let p = q * DVector::from_column_slice(y);
        p.iter().zip(&self.x0).map(|(a, b)| a + b).collect()
    }

    /// `u - l` at frame coordinates `y`, by multilinear interpolation.
    pub fn reduced(&self, u: &GridFunction, q: &DMatrix<f64>, y: &[f64]) -> Result<f64> {
        let x = self.to_world(q, y);
        let v = u.interpolate(&x).filter(|v| v.is_finite()).ok_or(Error::Containment)?;
        let lin: f64 = (0..x.len()).map(|a| self.slope[a] * (x[a] - self.x0[a])).sum();
        Ok(v - self.base_value - lin)
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| gaussian(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Finds `lambda = min_{|x - x0| = rho} (u - l)` by seeded direction sampling and local refinement.
pub fn barrier_placement(u: &GridFunction, x0: &[f64], rho: f64, seed: u64) -> Result<Placement> {
    let n = u.n();
    if x0.len() != n || !(rho > 0.0) {
        return Err(Error::Argument("base point dimension or radius is invalid".into()));
    }
    let i0 = u
        .nearest(x0)
        .filter(|&i| u.has_stencil(i, 1))
        .ok_or_else(|| Error::Argument(format!("base point {x0:?} is not an interior lattice node")))?;
    let mut pl = Placement {
        x0: u.point(i0),
        base_value: u.values()[i0],
        slope: u.gradient(i0).expect("interior node"),
        direction: vec![0.0; n],
        rho,
        lambda: 0.0,
    };
    let id = DMatrix::identity(n, n);
    let eval = |pl: &Placement, d: &[f64]| -> Result<f64> {
        let y: Vec<f64> = d.iter().map(|v| v * rho).collect();
        pl.reduced(u, &id, &y)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::INFINITY, vec![0.0; n]);
    for _ in 0..(1024 * n) {
        let d = unit_gaussian(&mut rng, n);
        let v = eval(&pl, &d)?;
        if v < best.0 {
            best = (v, d);
        }
    }
    let mut step = 0.1;
    let mut fails = 0;
    while step > 1e-9 {
        let trial: Vec<f64> = best.1.iter().map(|x| x + step * gaussian(&mut rng)).collect();
        let norm = trial.iter().map(|x| x * x).sum::<f64>().sqrt();
        let trial: Vec<f64> = trial.into_iter().map(|x| x / norm).collect();
        let v = eval(&pl, &trial)?;
        if v < best.0 {
            best = (v, trial);
            fails = 0;
        } else {
            fails += 1;
            if fails >= 20 {
                step *= 0.5;
                fails = 0;
            }
        }
    }
    pl.lambda = best.0;
    pl.direction = best.1;
    Ok(pl)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierKind {
    Case1,
    Case2,
}

/// Fitted barrier together with the measured quantities it was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedBarrier {
    pub spec: BarrierSpec,
    pub placement: Placement,
    /// Smallest `M` with `u - l <= M |x'|^{1+alpha}` (plus tilt and `lambda` terms) on the sampled slab faces.
    pub big_m: f64,
    /// Radius of the ball over which `sup (u - l)` and `mu` are measured.
    pub outer_radius: f64,
}

fn nodes_within<'a>(u: &'a GridFunction, x0: &[f64], r: f64) -> impl Iterator<Item = usize> + 'a {
    let x0 = x0.to_vec();
    (0..u.len()).filter(move |&i| {
        u.inside(i) && u.point(i).iter().zip(&x0).map(|(a, b)| (a - b).powi(2)).sum::<f64>() <= r * r
    })
}

fn ball_sample(rng: &mut ChaCha8Rng, dim: usize, r_lo: f64, r_hi: f64) -> Vec<f64> {
    let d = unit_gaussian(rng, dim);
    let t: f64 = rng.random::<f64>();
    let r = (r_lo.powi(dim as i32) + t * (r_hi.powi(dim as i32) - r_lo.powi(dim as i32))).powf(1.0 / dim as f64);
    d.into_iter().map(|x| x * r).collect()
}

/// `D_{y'}` of `u - l` at `(0, height)` by central differences of step `dh`.
fn slice_gradient(u: &GridFunction, pl: &Placement, q: &DMatrix<f64>, height: f64, dh: f64) -> Result<Vec<f64>> {
    let n = u.n();
    (0..n - 1)
        .map(|a| {
            let mut y = vec![0.0; n];
            y[n - 1] = height;
            y[a] = dh;
            let p = pl.reduced(u, q, &y)?;
            y[a] = -dh;
            let m = pl.reduced(u, q, &y)?;
            Ok((p - m) / (2.0 * dh))
        })
        .collect()
}

/// Builds a barrier for `u` at `x0`: measures `lambda`, `mu`, `sup u`, `M` (and the tilts
/// for case 2), then takes the smallest `A` meeting every condition.
pub fn fit_urbas_barrier(u: &GridFunction, x0: &[f64], rho: f64, alpha: f64, k: usize, kind: BarrierKind, seed: u64) -> Result<FittedBarrier> {
    let n = u.n();
    check_quotient(n, k)?;
    let pl = barrier_placement(u, x0, rho, seed)?;
    let q = pl.frame();
    let outer = 4.0 * rho;
    let h = u.spacing();
    let mu = nodes_within(u, &pl.x0, 2f64.sqrt() * rho + h)
        .filter(|&i| u.has_stencil(i, 1))
        .map(|i| {
            let (lam, _) = eigen_sorted(&u.hessian(i).expect("full stencil"));
            hq_value(&lam, k)
        })
        .fold(f64::INFINITY, f64::min);
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Precondition(format!("F(D^2u) has no positive lower bound near {:?}", pl.x0)));
    }
    let reduced_node = |i: usize| {
        let x = u.point(i);
        u.values()[i] - pl.base_value - (0..n).map(|a| pl.slope[a] * (x[a] - pl.x0[a])).sum::<f64>()
    };
    let sup_u = nodes_within(u, &pl.x0, outer).map(reduced_node).fold(f64::NEG_INFINITY, f64::max);

    let (case, heights, tilts) = match kind {
        BarrierKind::Case1 => (BarrierCase::Case1, [0.0, rho], [vec![0.0; n - 1], vec![0.0; n - 1]]),
        BarrierKind::Case2 => {
            let (r1, r2) = (rho / 8.0, 7.0 * rho / 8.0);
            let a = slice_gradient(u, &pl, &q, r1, h)?;
            let b = slice_gradient(u, &pl, &q, r2, h)?;
            let c1 = nodes_within(u, &pl.x0, 0.5 * outer)
                .filter_map(|i| u.gradient(i))
                .map(|g| g.iter().zip(&pl.slope).map(|(x, s)| (x - s).powi(2)).sum::<f64>().sqrt())
                .chain([a.iter().map(|x| x * x).sum::<f64>().sqrt(), b.iter().map(|x| x * x).sum::<f64>().sqrt()])
                .fold(0.0, f64::max);
            (
                BarrierCase::Case2 {
                    a: a.clone(),
                    b: b.clone(),
                    rho1: r1,
                    rho2: r2,
                    c1,
                },
                [r1, r2],
                [a, b],
            )
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut big_m = 1e-6_f64;
    for (face, &height) in heights.iter().enumerate() {
        let offset = if matches!(kind, BarrierKind::Case1) && face == 0 { 0.0 } else { pl.lambda };
        for _ in 0..2000 {
            let yp = ball_sample(&mut rng, n - 1, rho / 8.0, rho);
            let t = yp.iter().map(|x| x * x).sum::<f64>().sqrt();
            let tilt: f64 = tilts[face].iter().zip(&yp).map(|(a, b)| a * b).sum();
            let mut y = yp;
            y.push(height);
            let v = pl.reduced(u, &q, &y)? - offset - tilt;
            big_m = big_m.max(v / t.powf(1.0 + alpha));
        }
    }
    let c0 = young_constant(big_m, alpha);

    let mut spec = BarrierSpec {
        n,
        k,
        alpha,
        big_a: 1.0,
        c0,
        rho,
        mu,
        lambda: pl.lambda,
        sup_u,
        case,
    };
    let p = (n - k) as f64;
    let gamma = spec.gamma();
    let mut a_min = (sup_u / (rho * rho) + 0.25).max((2f64.powf(-p) * mu).powf(1.0 / (p - 1.0)));
    let young = match kind {
        BarrierKind::Case1 => c0 * 2f64.powf(p + 3.0) / (mu * rho * rho),
        BarrierKind::Case2 => c0 * 2f64.powf(p + 6.0) / (mu * rho * rho),
    };
    if gamma > p - 1.0 {
        a_min = a_min.max(young.powf(1.0 / (gamma - (p - 1.0))));
    }
    if let BarrierCase::Case2 { c1, .. } = &spec.case {
        a_min = a_min.max(sup_u / (rho * rho) + 0.25 + 3.0 * c1 / rho);
    }
    spec.big_a = a_min * (1.0 + 1e-9);
    for _ in 0..200 {
        if spec.conditions().iter().skip(3).all(|c| c.holds) {
            break;
        }
        spec.big_a *= 2.0;
    }
    spec.check()?;
    Ok(FittedBarrier {
        spec,
        placement: pl,
        big_m,
        outer_radius: outer,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierVerification {
    pub spec: BarrierSpec,
    pub conditions: Vec<Inequality>,
    /// `F(D^2 w)`, exact.
    pub operator_value: f64,
    pub operator_ok: bool,
    pub boundary_samples: usize,
    /// `max (u - w)` over sampled points of the slab boundary.
    pub boundary_excess: f64,
    pub boundary_ok: bool,
    pub interior_nodes: usize,
    /// `max (u - w)` over lattice nodes inside the slab.
    pub interior_excess: f64,
    pub interior_ok: bool,
    /// Allowance for interpolation error: `n h^2 max|D^2 u| / 8`.
    pub tolerance: f64,
    pub lambda_measured: f64,
    pub lambda_bound: f64,
    pub bound_holds: bool,
    pub passed: bool,
}

/// Verifies a barrier against `u`: exact `F(D^2 w) <= mu`, `w >= u` on sampled slab faces and at
/// lattice nodes inside the slab, and the implied lower bound on `lambda`.
pub fn urbas_barrier(spec: &BarrierSpec, u: &GridFunction, placement: &Placement, samples: usize, seed: u64) -> Result<BarrierVerification> {
    spec.check()?;
    let n = spec.n;
    if u.n() != n || placement.x0.len() != n {
        return Err(Error::Argument("barrier, field and placement dimensions differ".into()));
    }
    let q = placement.frame();
    let (lo, hi) = spec.slab();
    let rho = spec.rho;
    let h = u.spacing();
    let hess_sup = nodes_within(u, &placement.x0, 2f64.sqrt() * rho + 2.0 * h)
        .filter_map(|i| u.hessian(i))
        .map(|m| m.symmetric_eigenvalues().amax())
        .fold(0.0, f64::max);
    let tolerance = n as f64 * h * h * hess_sup / 8.0 + 1e-12;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boundary_excess = f64::NEG_INFINITY;
    for s in 0..samples {
        let y: Vec<f64> = match s % 3 {
            0 | 1 => {
                let mut y = ball_sample(&mut rng, n - 1, 0.0, rho);
                y.push(if s % 3 == 0 { lo } else { hi });
                y
            }
            _ => {
                let mut y: Vec<f64> = unit_gaussian(&mut rng, n - 1).into_iter().map(|v| v * rho).collect();
                y.push(lo + (hi - lo) * rng.random::<f64>());
                y
            }
        };
        boundary_excess = boundary_excess.max(placement.reduced(u, &q, &y)? - spec.value(&y));
    }

    let mut interior_excess = f64::NEG_INFINITY;
    let mut interior_nodes = 0;
    for i in nodes_within(u, &placement.x0, 2f64.sqrt() * rho + h) {
        let x = u.point(i);
        let d = DVector::from_iterator(n, x.iter().zip(&placement.x0).map(|(a, b)| a - b));
        let y = q.transpose() * &d;
        let rp: f64 = y.iter().take(n - 1).map(|v| v * v).sum::<f64>().sqrt();
        if rp >= rho || y[n - 1] <= lo || y[n - 1] >= hi {
            continue;
        }
        interior_nodes += 1;
        let v = u.values()[i] - placement.base_value - (0..n).map(|a| placement.slope[a] * d[a]).sum::<f64>();
        interior_excess = interior_excess.max(v - spec.value(y.as_slice()));
    }

    let operator_value = spec.operator_value();
    let operator_ok = operator_value <= spec.mu * (1.0 + 1e-12);
    let boundary_ok = boundary_excess <= tolerance;
    let interior_ok = interior_excess <= tolerance;
    let lambda_bound = spec.lambda_bound();
    let bound_holds = placement.lambda >= lambda_bound;
    Ok(BarrierVerification {
        spec: spec.clone(),
        conditions: spec.conditions(),
        operator_value,
        operator_ok,
        boundary_samples: samples,
        boundary_excess,
        boundary_ok,
        interior_nodes,
        interior_excess,
        interior_ok,
        tolerance,
        lambda_measured: placement.lambda,
        lambda_bound,
        bound_holds,
        passed: operator_ok && boundary_ok && interior_ok && bound_holds,
    })
}
