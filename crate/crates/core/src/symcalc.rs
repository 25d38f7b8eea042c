//! Elementary symmetric functions of a spectrum, their deleted-index
//! variants, and the first and second derivative blocks of `sigma_k` and of
//! the Hessian quotient `F = sigma_n / sigma_k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_nk, check_quotient, Error, Result};

/// Eigenvalues sorted in descending order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Argument(format!("spectrum needs n >= 2, got {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("spectrum has non-finite entries".into()));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn largest(&self) -> f64 {
        self.values[0]
    }

    pub fn smallest(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn scaled(&self, t: f64) -> Spectrum {
        let mut values: Vec<f64> = self.values.iter().map(|v| v * t).collect();
        if t < 0.0 {
            values.reverse();
        }
        Spectrum { values }
    }

    pub fn is_positive(&self) -> bool {
        self.smallest() > 0.0
    }
}

/// Symmetric real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() || n < 2 {
            return Err(Error::Argument(format!("need a square matrix of size >= 2, got {}x{}", m.nrows(), m.ncols())));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("matrix has non-finite entries".into()));
        }
        let scale = 1.0 + m.amax();
        for p in 0..n {
            for q in 0..p {
                if (m[(p, q)] - m[(q, p)]).abs() > 1e-12 * scale {
                    return Err(Error::Argument(format!("matrix not symmetric at ({p},{q})")));
                }
            }
        }
        Ok(Self { m })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Argument("rows of unequal length".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }
}

/// Derivatives of `sigma_k` at a diagonal point, in its eigenframe.
#[derive(Clone, Debug)]
pub struct DerivativeTensors {
    pub k: usize,
    pub value: f64,
    /// `sigma_k^{pp} = sigma_{k-1}(lambda|p)`.
    pub grad: Vec<f64>,
    /// `sigma_k^{pp,rr} = sigma_{k-2}(lambda|pr)`, zero on the diagonal.
    pub hess_diag: DMatrix<f64>,
    /// `sigma_k^{pq,qp} = -sigma_{k-2}(lambda|pq)`, zero on the diagonal.
    pub hess_off: DMatrix<f64>,
}

/// Derivatives of `F = sigma_n / sigma_k` at a diagonal point.
#[derive(Clone, Debug)]
pub struct HqDerivatives {
    pub k: usize,
    pub value: f64,
    pub sigma_k: f64,
    pub grad: Vec<f64>,
    /// `F^{pp,rr}` including the diagonal `F^{pp,pp}`.
    pub hess_diag: DMatrix<f64>,
    /// `F^{pq,qp}`, zero on the diagonal.
    pub hess_off: DMatrix<f64>,
    /// Divergence-form coefficients `H^{ii} = sigma_k F^{ii} = f sigma_k(lambda|i) / lambda_i`,
    /// with `f` the supplied point value or the computed quotient.
    pub divcoef: Vec<f64>,
}

/// Residuals of the basic sigma identities, each relative to its largest term.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityResiduals {
    pub split: f64,
    pub deleted_sum: f64,
    pub euler: f64,
    pub square_sum: f64,
    /// `sigma_{k-1}^2 - sigma_k sigma_{k-2}`, divided by the larger of the two products.
    pub newton_maclaurin: f64,
}

impl IdentityResiduals {
    pub fn max_residual(&self) -> f64 {
        self.split.max(self.deleted_sum).max(self.euler).max(self.square_sum)
    }
}

/// `sigma_k` of `values` with up to two indices skipped. Negative or oversized `k` gives 0.
pub(crate) fn sigma_skip(values: &[f64], k: isize, skip: [usize; 2]) -> f64 {
    if k < 0 {
        return 0.0;
    }
    let k = k as usize;
    if k == 0 {
        return 1.0;
    }
    let mut e = vec![0.0; k + 1];
    e[0] = 1.0;
    let mut used = 0usize;
    for (i, &x) in values.iter().enumerate() {
        if i == skip[0] || i == skip[1] {
            continue;
        }
        used += 1;
        for j in (1..=k.min(used)).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e[k]
}

/// All of `sigma_0..=sigma_kmax` of `values` in a single pass.
pub(crate) fn sigma_all(values: &[f64], kmax: usize) -> Vec<f64> {
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    for (used, &x) in values.iter().enumerate() {
        for j in (1..=kmax.min(used + 1)).rev() {
            e[j] += x * e[j - 1];
        }
    }
    e
}

const NONE: usize = usize::MAX;

/// `sigma_k` of the spectrum with the `deleted` components removed.
pub fn sigma(lambda: &Spectrum, k: usize, deleted: &[usize]) -> Result<f64> {
    let n = lambda.n();
    for (a, &i) in deleted.iter().enumerate() {
        if i >= n {
            return Err(Error::Argument(format!("deleted index {i} out of range for n={n}")));
        }
        if deleted[..a].contains(&i) {
            return Err(Error::Argument(format!("duplicate deleted index {i}")));
        }
    }
    let dim = n - deleted.len();
    if k > dim {
        return Err(Error::Argument(format!("k={k} exceeds remaining dimension {dim}")));
    }
    if deleted.len() <= 2 {
        let skip = [
            deleted.first().copied().unwrap_or(NONE),
            deleted.get(1).copied().unwrap_or(NONE),
        ];
        return Ok(sigma_skip(lambda.values(), k as isize, skip));
    }
    let kept: Vec<f64> = lambda
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| !deleted.contains(i))
        .map(|(_, &v)| v)
        .collect();
    Ok(sigma_all(&kept, k)[k])
}

/// Membership in the Garding cone: `sigma_j > 0` for `1 <= j <= k`.
pub fn in_gamma_k(lambda: &Spectrum, k: usize) -> Result<bool> {
    if k == 0 || k > lambda.n() {
        return Err(Error::Argument(format!("need 1 <= k <= n, got k={k}")));
    }
    let e = sigma_all(lambda.values(), k);
    Ok(e[1..].iter().all(|&s| s > 0.0))
}

fn rel(residual: f64, terms: &[f64]) -> f64 {
    let scale = terms.iter().fold(0.0_f64, |m, t| m.max(t.abs()));
    if scale == 0.0 {
        residual.abs()
    } else {
        residual.abs() / scale
    }
}

/// Residuals of the splitting, deleted-sum, Euler and square-sum identities,
/// plus the Newton-Maclaurin margin.
pub fn verify_sigma_identities(lambda: &Spectrum, k: usize) -> Result<IdentityResiduals> {
    let n = lambda.n();
    if k == 0 || k >= n {
        return Err(Error::Argument(format!("need 1 <= k <= n-1, got k={k}, n={n}")));
    }
    let v = lambda.values();
    let e = sigma_all(v, k + 1);
    let (sk, sk1) = (e[k], e[k + 1]);
    let ki = k as isize;

    let mut split = 0.0_f64;
    let (mut del_sum, mut del_terms) = (0.0, Vec::with_capacity(n + 1));
    let (mut euler, mut euler_terms) = (0.0, Vec::with_capacity(n + 1));
    let (mut sq, mut sq_terms) = (0.0, Vec::with_capacity(n + 2));
    for i in 0..n {
        let skm1 = sigma_skip(v, ki - 1, [i, NONE]);
        let sk_i = sigma_skip(v, ki, [i, NONE]);
        let a = v[i] * skm1;
        split = split.max(rel(a + sk_i - sk, &[a, sk_i, sk]));
        del_sum += sk_i;
        del_terms.push(sk_i);
        euler += a;
        euler_terms.push(a);
        let b = v[i] * a;
        sq += b;
        sq_terms.push(b);
    }
    let rhs_b = (n - k) as f64 * sk;
    del_terms.push(rhs_b);
    let rhs_c = k as f64 * sk;
    euler_terms.push(rhs_c);
    let p1 = e[1] * sk;
    let p2 = (k + 1) as f64 * sk1;
    sq_terms.push(p1);
    sq_terms.push(p2);

    let skm1 = e[k - 1];
    let skm2 = if k >= 2 { e[k - 2] } else { 0.0 };
    let lhs = skm1 * skm1;
    let rhs = sk * skm2;
    let nm_scale = lhs.abs().max(rhs.abs());
    let newton_maclaurin = if nm_scale == 0.0 { 0.0 } else { (lhs - rhs) / nm_scale };

    Ok(IdentityResiduals {
        split,
        deleted_sum: rel(del_sum - rhs_b, &del_terms),
        euler: rel(euler - rhs_c, &euler_terms),
        square_sum: rel(sq - (p1 - p2), &sq_terms),
        newton_maclaurin,
    })
}

/// Derivative blocks of `sigma_k`; for `k = 1` the second-order blocks vanish.
pub fn sigma_derivatives(lambda: &Spectrum, k: usize) -> Result<DerivativeTensors> {
    let n = lambda.n();
    check_nk(n, k)?;
    if k == 0 {
        return Err(Error::Argument("sigma_0 is constant; need k >= 1".into()));
    }
    let v = lambda.values();
    let ki = k as isize;
    let grad: Vec<f64> = (0..n).map(|p| sigma_skip(v, ki - 1, [p, NONE])).collect();
    let mut hess_diag = DMatrix::zeros(n, n);
    let mut hess_off = DMatrix::zeros(n, n);
    for p in 0..n {
        for r in (p + 1)..n {
            let s = sigma_skip(v, ki - 2, [p, r]);
            hess_diag[(p, r)] = s;
            hess_diag[(r, p)] = s;
            hess_off[(p, r)] = -s;
            hess_off[(r, p)] = -s;
        }
    }
    Ok(DerivativeTensors {
        k,
        value: sigma_skip(v, ki, [NONE, NONE]),
        grad,
        hess_diag,
        hess_off,
    })
}

/// Derivative blocks of `F = sigma_n / sigma_k` for a strictly positive spectrum.
pub fn hq_derivatives(lambda: &Spectrum, k: usize, f_at_point: Option<f64>) -> Result<HqDerivatives> {
    let n = lambda.n();
    check_quotient(n, k)?;
    if !lambda.is_positive() {
        return Err(Error::Domain(format!("F needs a positive spectrum, smallest = {}", lambda.smallest())));
    }
    let v = lambda.values();
    let (ni, ki) = (n as isize, k as isize);
    let sn = sigma_skip(v, ni, [NONE, NONE]);
    let sk = sigma_skip(v, ki, [NONE, NONE]);
    let f = sn / sk;

    let sn_p: Vec<f64> = (0..n).map(|p| sigma_skip(v, ni - 1, [p, NONE])).collect();
    let sk_p: Vec<f64> = (0..n).map(|p| sigma_skip(v, ki - 1, [p, NONE])).collect();
    let grad: Vec<f64> = (0..n).map(|p| sn_p[p] / sk - sn * sk_p[p] / (sk * sk)).collect();

    let sk2 = sk * sk;
    let sk3 = sk2 * sk;
    let mut hess_diag = DMatrix::zeros(n, n);
    let mut hess_off = DMatrix::zeros(n, n);
    for p in 0..n {
        hess_diag[(p, p)] = -2.0 * sn_p[p] * sk_p[p] / sk2 + 2.0 * sn * sk_p[p] * sk_p[p] / sk3;
        for r in (p + 1)..n {
            let sn_pr = sigma_skip(v, ni - 2, [p, r]);
            let sk_pr = sigma_skip(v, ki - 2, [p, r]);
            let d = sn_pr / sk - sn_p[p] * sk_p[r] / sk2 - sn_p[r] * sk_p[p] / sk2 - sn * sk_pr / sk2
                + 2.0 * sn * sk_p[p] * sk_p[r] / sk3;
            let o = -sn_pr / sk + sn * sk_pr / sk2;
            hess_diag[(p, r)] = d;
            hess_diag[(r, p)] = d;
            hess_off[(p, r)] = o;
            hess_off[(r, p)] = o;
        }
    }
    let fv = f_at_point.unwrap_or(f);
    let divcoef = (0..n).map(|i| fv * sigma_skip(v, ki, [i, NONE]) / v[i]).collect();
    Ok(HqDerivatives {
        k,
        value: f,
        sigma_k: sk,
        grad,
        hess_diag,
        hess_off,
        divcoef,
    })
}

/// `F = sigma_n / sigma_k` of a positive spectrum, without derivatives.
pub fn hq_value(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    let e = sigma_all(values, n);
    e[n] / e[k]
}

/// Eigen-decomposition `M = Q diag(lambda) Q^T` with eigenvalues descending.
pub fn eigen_descending(m: &SymMatrix) -> (Spectrum, DMatrix<f64>) {
    let (vals, q) = eigen_sorted(m.matrix());
    (Spectrum { values: vals }, q)
}

/// Symmetric eigen-decomposition of a raw matrix, sorted descending.
pub(crate) fn eigen_sorted(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let sym = 0.5 * (m + m.transpose());
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, q)
}

/// First and second derivative of `t -> G(lambda(M + tE))` at `t = 0` for a
/// spectral function with the given blocks, where `frame` diagonalizes `M`.
pub fn directional_derivatives(
    grad: &[f64],
    hess_diag: &DMatrix<f64>,
    hess_off: &DMatrix<f64>,
    frame: &DMatrix<f64>,
    direction: &DMatrix<f64>,
) -> (f64, f64) {
    let e = frame.transpose() * direction * frame;
    let n = grad.len();
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for p in 0..n {
        d1 += grad[p] * e[(p, p)];
        for q in 0..n {
            d2 += hess_diag[(p, q)] * e[(p, p)] * e[(q, q)];
            if p != q {
                d2 += hess_off[(p, q)] * e[(p, q)] * e[(p, q)];
            }
        }
    }
    (d1, d2)
}

/// Binomial coefficient as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `sigma_0..=sigma_kmax` of the eigenvalues of `m` from power traces.
pub fn sigma_of_matrix(m: &DMatrix<f64>, kmax: usize) -> Vec<f64> {
    let n = m.nrows();
    let kmax = kmax.min(n);
    let mut traces = vec![0.0; kmax + 1];
    let mut p = DMatrix::identity(n, n);
    for t in traces.iter_mut().skip(1) {
        p = &p * m;
        *t = p.trace();
    }
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    for j in 1..=kmax {
        let mut s = 0.0;
        for i in 1..=j {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            s += sign * e[j - i] * traces[i];
        }
        e[j] = s / j as f64;
    }
    e
}

/// Matrix-space gradient `sigma_k^{ij}(M) = sum_m (-1)^m sigma_{k-1-m}(M) M^m`.
pub fn sigma_matrix_gradient(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    if k == 0 {
        return DMatrix::zeros(n, n);
    }
    let e = sigma_of_matrix(m, k - 1);
    let mut out = DMatrix::zeros(n, n);
    let mut p = DMatrix::identity(n, n);
    for j in 0..k {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        out += sign * e[k - 1 - j] * &p;
        p = &p * m;
    }
    0.5 * (&out + out.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma(&spec(&[1.0, 1.0, 1.0]), 2, &[]).unwrap(), 3.0);
        assert_eq!(sigma(&spec(&[1.0, 2.0, 3.0, 4.0]), 3, &[]).unwrap(), 50.0);
        // (3,2,1) with the largest removed leaves (2,1)
        assert_eq!(sigma(&spec(&[3.0, 2.0, 1.0]), 2, &[0]).unwrap(), 2.0);
        assert_eq!(sigma(&spec(&[3.0, 2.0, 1.0]), 0, &[0, 1, 2]).unwrap(), 1.0);
        assert!(sigma(&spec(&[3.0, 2.0, 1.0]), 2, &[0, 0]).is_err());
        assert!(sigma(&spec(&[3.0, 2.0, 1.0]), 4, &[]).is_err());
        assert!(sigma(&spec(&[3.0, 2.0, 1.0]), 1, &[3]).is_err());
    }

    #[test]
    fn cone_membership() {
        assert!(in_gamma_k(&spec(&[1.0, 1.0]), 2).unwrap());
        assert!(in_gamma_k(&spec(&[2.0, -1.0]), 1).unwrap());
        assert!(!in_gamma_k(&spec(&[2.0, -1.0]), 2).unwrap());
        assert!(!in_gamma_k(&spec(&[0.0, 0.0, 0.0]), 1).unwrap());
    }

    #[test]
    fn identities_on_small_case() {
        let r = verify_sigma_identities(&spec(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert!(r.max_residual() < 1e-15);
        assert!(r.newton_maclaurin > 0.0);
        // sum lambda_i^2 sigma_1(lambda|i) = 48 = 66 - 18
        let v = [3.0, 2.0, 1.0];
        let s: f64 = (0..3).map(|i| v[i] * v[i] * sigma_skip(&v, 1, [i, NONE])).sum();
        assert_eq!(s, 48.0);
    }

    #[test]
    fn sigma_derivative_examples() {
        let d = sigma_derivatives(&spec(&[1.0, 2.0, 3.0]), 2).unwrap();
        assert_eq!(d.grad, vec![3.0, 4.0, 5.0]);
        let d = sigma_derivatives(&spec(&[3.0, 1.0]), 2).unwrap();
        assert_eq!(-d.hess_off[(0, 1)], 1.0);
        assert_eq!((d.grad[0] - d.grad[1]) / (1.0 - 3.0), 1.0);
        let d = sigma_derivatives(&spec(&[1.0; 5]), 3).unwrap();
        assert!(d.grad.iter().all(|&g| g == binomial(4, 2)));
    }

    #[test]
    fn hq_examples() {
        let d = hq_derivatives(&spec(&[1.0, 2.0, 3.0]), 1, None).unwrap();
        assert!((d.value - 1.0).abs() < 1e-15);
        // descending order puts lambda = 3 first; F^{pp} for lambda_p = 1 is 5/6
        assert!((d.grad[2] - 5.0 / 6.0).abs() < 1e-15);
        let d = hq_derivatives(&spec(&[2.0; 4]), 2, None).unwrap();
        assert!((d.value - 16.0 / (4.0 * 6.0)).abs() < 1e-14);
        assert!(d.grad.windows(2).all(|w| w[0] == w[1]));
        let lam = spec(&[5.0, 2.0, 1.0, 1.0]);
        let d = hq_derivatives(&lam, 1, None).unwrap();
        let v = lam.values();
        for p in 0..4 {
            for q in 0..4 {
                if p != q && v[p] != v[q] {
                    let lhs = -d.hess_off[(p, q)] * (v[q] - v[p]);
                    let rhs = d.grad[p] - d.grad[q];
                    assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
                }
            }
        }
        assert!(hq_derivatives(&spec(&[1.0, -1.0]), 1, None).is_err());
        assert!(hq_derivatives(&spec(&[1.0, 1.0]), 2, None).is_err());
    }

    #[test]
    fn divcoef_matches_sigma_k_times_grad() {
        let d = hq_derivatives(&spec(&[4.0, 2.5, 1.0, 0.5]), 2, None).unwrap();
        for i in 0..4 {
            assert!((d.divcoef[i] - d.sigma_k * d.grad[i]).abs() < 1e-13 * d.divcoef[i]);
        }
    }

    #[test]
    fn eigen_examples() {
        let (s, _) = eigen_descending(&SymMatrix::diagonal(&[1.0, 2.0]).unwrap());
        assert_eq!(s.values(), &[2.0, 1.0]);
        let m = SymMatrix::from_rows(&[vec![1.5, 0.5], vec![0.5, 1.5]]).unwrap();
        let (s, q) = eigen_descending(&m);
        assert!((s.values()[0] - 2.0).abs() < 1e-14 && (s.values()[1] - 1.0).abs() < 1e-14);
        let rec = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(s.values())) * q.transpose();
        assert!((rec - m.matrix()).amax() < 1e-14);
        assert!(SymMatrix::from_rows(&[vec![1.0, 0.5], vec![0.4, 1.0]]).is_err());
    }

    #[test]
    fn matrix_gradient_matches_eigenframe() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.5, 0.2, -0.1, 0.2, 1.0]);
        let (vals, q) = eigen_sorted(&m);
        for k in 1..=3 {
            let d = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                3,
                (0..3).map(|p| sigma_skip(&vals, k as isize - 1, [p, NONE])),
            ));
            let expect = &q * d * q.transpose();
            assert!((sigma_matrix_gradient(&m, k) - expect).amax() < 1e-13);
            assert!((sigma_of_matrix(&m, 3)[k] - sigma_all(&vals, 3)[k]).abs() < 1e-13);
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(6, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
    }
}
