//! Pointwise margins of the spectral concavity and comparison inequalities.

use nalgebra::DMatrix;

use crate::error::{check_quotient, Error, Result};
use crate::symcalc::{eigen_sorted, hq_derivatives, sigma_all, sigma_derivatives, sigma_skip, Spectrum};

/// A margin together with the magnitude of its largest additive term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin {
    pub value: f64,
    pub scale: f64,
}

impl Margin {
    /// Margin divided by its scale (zero when every term vanishes).
    pub fn normalized(&self) -> f64 {
        if self.scale > 0.0 {
            self.value / self.scale
        } else {
            0.0
        }
    }
}

fn check_direction(lambda: &Spectrum, xi: &[f64]) -> Result<()> {
    if xi.len() != lambda.n() {
        return Err(Error::Argument(format!("direction has length {}, expected {}", xi.len(), lambda.n())));
    }
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("direction has non-finite entries".into()));
    }
    Ok(())
}

/// Constant multiplying the right-hand side of the Zhang concavity inequality.
pub fn zhang_constant(n: usize, k: usize) -> f64 {
    1.0 + 1.0 / (4.0 * n as f64 * k as f64)
}

/// Zhang concavity margin with its term scale; see [`zhang_margin`].
pub fn zhang_terms(lambda: &Spectrum, xi: &[f64], k: usize) -> Result<Margin> {
    let n = lambda.n();
    if k <= 1 || k >= n {
        return Err(Error::Argument(format!("Zhang inequality needs 1 < k < n, got k={k}, n={n}")));
    }
    check_direction(lambda, xi)?;
    if !lambda.is_positive() {
        return Err(Error::Domain("Zhang inequality needs a positive spectrum".into()));
    }
    let d = sigma_derivatives(lambda, k)?;
    let l1 = lambda.largest();
    let mut cross = 0.0;
    let mut cross_abs = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let t = d.hess_diag[(i, j)] * xi[i] * xi[j];
                cross -= t;
                cross_abs += t.abs();
            }
        }
    }
    let lin: f64 = (0..n).map(|i| d.grad[i] * xi[i]).sum();
    let square = 2.0 * lin * lin / d.value;
    let tail: f64 = (1..n).map(|i| d.grad[i] * xi[i] * xi[i]).sum::<f64>() / l1;
    let rhs = zhang_constant(n, k) * d.grad[0] * xi[0] * xi[0] / l1;
    Ok(Margin {
        value: cross + square + tail - rhs,
        scale: cross_abs.max(square).max(tail).max(rhs),
    })
}

/// `[-sum_{i!=j} s^{ii,jj} xi_i xi_j + (2/s)(sum s^{ii} xi_i)^2 + sum_{i>1} s^{ii} xi_i^2 / l1]
///  - (1 + 1/(4nk)) s^{11} xi_1^2 / l1` for `s = sigma_k`.
pub fn zhang_margin(lambda: &Spectrum, xi: &[f64], k: usize) -> Result<f64> {
    zhang_terms(lambda, xi, k).map(|m| m.value)
}

/// Guan-Sroka margin with its term scale; see [`guan_sroka_margin`].
pub fn guan_sroka_terms(lambda: &Spectrum, xi: &[f64], k: usize, trial_c: f64) -> Result<Margin> {
    let (q, q_scale, r) = guan_sroka_parts(lambda, xi, k)?;
    let rhs = (1.0 + trial_c) * r;
    Ok(Margin {
        value: q - rhs,
        scale: q_scale.max(rhs.abs()),
    })
}

/// Returns `(Q, scale of Q's terms, F^{11} xi_1^2 / lambda_1)` where
/// `Q = -sum F^{ii,jj} xi_i xi_j + (sum F^{ii} xi_i)^2 / F`.
pub fn guan_sroka_parts(lambda: &Spectrum, xi: &[f64], k: usize) -> Result<(f64, f64, f64)> {
    let n = lambda.n();
    check_quotient(n, k)?;
    check_direction(lambda, xi)?;
    let d = hq_derivatives(lambda, k, None)?;
    let mut hess = 0.0;
    let mut hess_abs = 0.0;
    for i in 0..n {
        for j in 0..n {
            let t = d.hess_diag[(i, j)] * xi[i] * xi[j];
            hess -= t;
            hess_abs += t.abs();
        }
    }
    let lin: f64 = (0..n).map(|i| d.grad[i] * xi[i]).sum();
    let square = lin * lin / d.value;
    let r = d.grad[0] * xi[0] * xi[0] / lambda.largest();
    Ok((hess + square, hess_abs.max(square), r))
}

/// `[-sum F^{ii,jj} xi_i xi_j + (sum F^{ii} xi_i)^2 / F] - (1 + c) F^{11} xi_1^2 / lambda_1`.
pub fn guan_sroka_margin(lambda: &Spectrum, xi: &[f64], k: usize, trial_c: f64) -> Result<f64> {
    guan_sroka_terms(lambda, xi, k, trial_c).map(|m| m.value)
}

/// `(sigma_n / sigma_k)^{1/(n-k)}` of a positive semidefinite matrix, zero when singular.
pub fn f_tilde(m: &DMatrix<f64>, k: usize) -> Result<f64> {
    let n = m.nrows();
    check_quotient(n, k)?;
    let (vals, _) = eigen_sorted(m);
    let norm = vals[0].abs().max(vals[n - 1].abs());
    if vals[n - 1] < -1e-10 * norm {
        return Err(Error::Domain(format!("matrix is not positive semidefinite: eigenvalue {:.3e}", vals[n - 1])));
    }
    if vals[n - 1] <= 1e-12 * norm || norm == 0.0 {
        return Ok(0.0);
    }
    let e = sigma_all(&vals, n);
    Ok((e[n] / e[k]).powf(1.0 / (n - k) as f64))
}

/// `F~(A+B) - F~(A) - F~(B)` with scale `max(F~(A+B), F~(A), F~(B))`.
pub fn superadditivity_terms(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> Result<Margin> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::Argument("superadditivity needs two square matrices of equal size".into()));
    }
    let fa = f_tilde(a, k)?;
    let fb = f_tilde(b, k)?;
    let fab = f_tilde(&(a + b), k)?;
    Ok(Margin {
        value: fab - fa - fb,
        scale: fab.max(fa).max(fb),
    })
}

pub fn superadditivity_margin(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> Result<f64> {
    superadditivity_terms(a, b, k).map(|m| m.value)
}

/// `[C eps0 sum H^{ii} b_i^2 + (C / eps0) sigma_k] - sum |b_i sigma_l^{ii}|`
/// with `H^{ii} = f sigma_k(lambda|i) / lambda_i`.
pub fn cauchy_margin(
    lambda: &Spectrum,
    grad_b: &[f64],
    l: usize,
    k: usize,
    eps0: f64,
    trial_c: f64,
    f: f64,
) -> Result<f64> {
    let (pos, neg) = cauchy_parts(lambda, grad_b, l, k, eps0, f)?;
    Ok(trial_c * pos - neg)
}

/// Returns `(eps0 sum H^{ii} b_i^2 + sigma_k / eps0, sum |b_i sigma_l^{ii}|)`;
/// the smallest admissible constant is their ratio.
pub fn cauchy_parts(lambda: &Spectrum, grad_b: &[f64], l: usize, k: usize, eps0: f64, f: f64) -> Result<(f64, f64)> {
    let n = lambda.n();
    check_quotient(n, k)?;
    check_direction(lambda, grad_b)?;
    if l == 0 || l > k {
        return Err(Error::Argument(format!("need 1 <= l <= k, got l={l}, k={k}")));
    }
    if !(eps0 > 0.0) || !(f > 0.0) {
        return Err(Error::Argument("eps0 and f must be positive".into()));
    }
    if !lambda.is_positive() {
        return Err(Error::Domain("Cauchy margin needs a positive spectrum".into()));
    }
    let v = lambda.values();
    let sk = sigma_all(v, k)[k];
    let mut quad = 0.0;
    let mut abs = 0.0;
    for i in 0..n {
        let h = f * sigma_skip(v, k as isize, [i, usize::MAX]) / v[i];
        quad += h * grad_b[i] * grad_b[i];
        abs += (grad_b[i] * sigma_skip(v, l as isize - 1, [i, usize::MAX])).abs();
    }
    Ok((eps0 * quad + sk / eps0, abs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: &[f64]) -> Spectrum {
        Spectrum::new(v.to_vec()).unwrap()
    }

    #[test]
    fn zhang_basic_cases() {
        let l = spec(&[1e4, 1.0, 1.0, 1.0]);
        assert_eq!(zhang_margin(&l, &[0.0; 4], 2).unwrap(), 0.0);
        assert!(zhang_margin(&l, &[1.0, 0.0, 0.0, 0.0], 2).unwrap() > 0.0);
        // at the isotropic point the inequality fails for xi = e1: 3 < 3 (1 + 1/32)
        let m = zhang_margin(&spec(&[1.0; 4]), &[1.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert!((m - (3.0 - 3.0 * (1.0 + 1.0 / 32.0))).abs() < 1e-14);
        assert!(zhang_margin(&l, &[1.0, 0.0, 0.0, 0.0], 1).is_err());
        assert!(zhang_margin(&l, &[1.0, 0.0, 0.0, 0.0], 4).is_err());
    }

    #[test]
    fn guan_sroka_two_by_two() {
        // n=2, k=1, lambda=(2,1): F = 2/3, F^{11} = 1/9, F^{11,11} = -2/27,
        // so Q = 2/27 + (1/81)/(2/3) = 5/54 and the c=0 margin is Q - F^{11}/2 = 1/27
        let l = spec(&[2.0, 1.0]);
        let m = guan_sroka_margin(&l, &[1.0, 0.0], 1, 0.0).unwrap();
        let q = 2.0 / 27.0 + (1.0 / 81.0) * 1.5;
        assert!((m - (q - 1.0 / 18.0)).abs() < 1e-15);
        assert!((m - 1.0 / 27.0).abs() < 1e-15);
        assert_eq!(guan_sroka_margin(&l, &[0.0, 0.0], 1, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn superadditivity_cases() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        assert!(superadditivity_margin(&i2, &i2, 1).unwrap().abs() < 1e-15);
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0]));
        let b = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0]));
        // F~(3I) = 3/2, F~(diag(1,2)) = 2/3 each
        let m = superadditivity_margin(&a, &b, 1).unwrap();
        assert!((m - (1.5 - 4.0 / 3.0)).abs() < 1e-14);
        let neg = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, -1.0]));
        assert!(superadditivity_margin(&neg, &i2, 1).is_err());
        assert_eq!(f_tilde(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0])), 1).unwrap(), 0.0);
    }

    #[test]
    fn cauchy_zero_gradient() {
        let l = spec(&[3.0, 2.0, 1.0]);
        let m = cauchy_margin(&l, &[0.0; 3], 1, 2, 0.5, 2.0, 1.0).unwrap();
        assert!((m - 2.0 / 0.5 * 11.0).abs() < 1e-13);
        assert!(cauchy_margin(&l, &[0.0; 3], 3, 2, 0.5, 2.0, 1.0).is_err());
    }
}
