//! Acceptance suite: one line per criterion on stderr, then a single assertion over all of them.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hessq_core::experiment::{
    critical_slab, delta_log_fit, run_experiment, slab_options, ExperimentConfig, ExperimentKind, GROWTH_TOLERANCE,
    SLAB_RADII,
};
use hessq_core::geometry::{
    critical_exponent, ellipsoid_barrier, growth_probe, quadratic_section_ellipsoid, radius_estimate_check,
    radius_margin, Ellipsoid, SubsolutionFrame,
};
use hessq_core::grid::{Domain, GridFunction};
use hessq_core::inequalities::{
    estimate_constants, superadditivity_scan, zhang_scaling_residual, zhang_verify, ConstantKind,
};
use hessq_core::legendre::{discrete_legendre, dual_checks, DEFAULT_DELTA};
use hessq_core::sampling::{random_orthogonal, random_with_spectrum, run_sharded, SampleConfig};
use hessq_core::solver::{
    approximation_sandwich, fitted_order, grid_solve_in, radial_solve, solve_nodal, DataSource, DirichletProblem,
    NodalProblem, SolveOptions,
};
use hessq_core::symcalc::{
    binomial, directional_derivatives, eigen_descending, hq_derivatives, sigma, sigma_derivatives,
    verify_sigma_identities, Spectrum, SymMatrix,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn report(id: usize, name: &str, budget: Duration, run: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let o = run();
    let elapsed = t.elapsed();
    let in_budget = elapsed <= budget;
    let passed = o.passed && in_budget;
    let status = if passed { "PASS" } else { "FAIL" };
    let time = if in_budget {
        format!("{:.2} s", elapsed.as_secs_f64())
    } else {
        format!("{:.2} s, over the {} s budget", elapsed.as_secs_f64(), budget.as_secs())
    };
    let _ = writeln!(std::io::stderr(), "[{status}] {id:>2} {name}: {} ({time})", o.detail);
    passed
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

/// Sum of products over every subset of each size, by direct enumeration; also the sum of
/// absolute products as the relative scale.
fn subset_sums(v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = v.len();
    let mut sums = vec![0.0; n + 1];
    let mut abs = vec![0.0; n + 1];
    for mask in 0u32..(1 << n) {
        let p: f64 = (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| v[i]).product();
        let size = mask.count_ones() as usize;
        sums[size] += p;
        abs[size] += p.abs();
    }
    (sums, abs)
}

/// `sigma_k` of a matrix as the sum of its principal `k x k` minors.
fn principal_minors(m: &DMatrix<f64>, k: usize) -> f64 {
    let n = m.nrows();
    (0u32..(1 << n))
        .filter(|mask| mask.count_ones() as usize == k)
        .map(|mask| {
            let idx: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
            DMatrix::from_fn(k, k, |r, c| m[(idx[r], idx[c])]).determinant()
        })
        .sum()
}

fn quotient_by_minors(m: &DMatrix<f64>, k: usize) -> f64 {
    m.determinant() / principal_minors(m, k)
}

/// First and second central differences with one Richardson step.
fn central(g: impl Fn(f64) -> f64, e: f64) -> (f64, f64) {
    let d = |s: f64| {
        let (p, z, m) = (g(s), g(0.0), g(-s));
        ((p - m) / (2.0 * s), (p - 2.0 * z + m) / (s * s))
    };
    let (a1, a2) = d(e);
    let (b1, b2) = d(0.5 * e);
    ((4.0 * b1 - a1) / 3.0, (4.0 * b2 - a2) / 3.0)
}

fn sigma_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    let mut checked = 0usize;
    for n in 2..=8 {
        for _ in 0..10_000 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (sums, abs) = subset_sums(&v);
            let s = Spectrum::new(v).unwrap();
            for k in 0..=n {
                let got = sigma(&s, k, &[]).unwrap();
                let scale = abs[k].max(f64::MIN_POSITIVE);
                worst = worst.max((got - sums[k]).abs() / scale);
                checked += 1;
            }
        }
    }
    outcome(worst <= 1e-12, format!("{checked} evaluations, worst relative error {worst:.2e}"))
}

fn identity_suite() -> Outcome {
    let mut worst = 0.0_f64;
    let mut nm_min = f64::INFINITY;
    for n in 2..=6 {
        for k in 1..n {
            let cfg = SampleConfig::new(100 + (n * 10 + k) as u64, 10_000, n, k);
            let parts = run_sharded(cfg.seed, cfg.count, |rng, len| {
                let mut w = 0.0_f64;
                let mut nm = f64::INFINITY;
                for _ in 0..len {
                    let s = Spectrum::new(cfg.spectrum(rng)).unwrap();
                    let r = verify_sigma_identities(&s, k).unwrap();
                    w = w.max(r.max_residual());
                    nm = nm.min(r.newton_maclaurin);
                }
                (w, nm)
            });
            for (w, nm) in parts {
                worst = worst.max(w);
                nm_min = nm_min.min(nm);
            }
        }
    }
    outcome(
        worst <= 1e-10 && nm_min >= -1e-10,
        format!("worst identity residual {worst:.2e}, smallest Newton-Maclaurin margin {nm_min:.2e}"),
    )
}

fn derivative_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    let mut cases = 0usize;
    for i in 0..1000 {
        let n = 2 + i % 4;
        // eigenvalues in [1, 3.5] with gaps of at least 0.25
        let mut eigs: Vec<f64> = (0..n).map(|j| 1.0 + 0.5 * j as f64 + rng.random_range(0.0..0.25)).collect();
        eigs.reverse();
        let a = random_with_spectrum(&mut rng, &eigs);
        let b = {
            let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            (&g + g.transpose()) * 0.5
        };
        let (spec, frame) = eigen_descending(&SymMatrix::new(a.clone()).unwrap());
        let e = 1e-3;
        for k in 1..=n {
            let d = sigma_derivatives(&spec, k).unwrap();
            let (d1, d2) = directional_derivatives(&d.grad, &d.hess_diag, &d.hess_off, &frame, &b);
            let (f1, f2) = central(|t| principal_minors(&(&a + &b * t), k), e);
            let scale = d.value.abs().max(1.0);
            worst = worst.max((d1 - f1).abs() / scale).max((d2 - f2).abs() / scale);
            cases += 1;
        }
        for k in 0..n {
            let d = hq_derivatives(&spec, k, None).unwrap();
            let (d1, d2) = directional_derivatives(&d.grad, &d.hess_diag, &d.hess_off, &frame, &b);
            let (f1, f2) = central(|t| quotient_by_minors(&(&a + &b * t), k), e);
            let scale = d.value.abs().max(1.0);
            worst = worst.max((d1 - f1).abs() / scale).max((d2 - f2).abs() / scale);
            cases += 1;
        }
    }
    outcome(worst <= 1e-6, format!("{cases} tensor checks on 1000 matrices, worst relative error {worst:.2e}"))
}

fn zhang_inequality() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for n in 3..=5 {
        for k in 2..n {
            let est = estimate_constants(&SampleConfig::new(40, 100_000, n, k), ConstantKind::ZhangThreshold).unwrap();
            let threshold = est.empirical_constant.unwrap_or(f64::NAN);
            let ver = zhang_verify(&SampleConfig::new(41, 100_000, n, k), threshold).unwrap();
            ok &= threshold.is_finite() && ver.violation_count == 0;
            parts.push(format!("({n},{k}) {threshold:.3}/{}", ver.violation_count));
        }
    }
    // margin(t lambda) = t^{k-2} margin(lambda): every term has degree k - 2
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut scaling = 0.0_f64;
    for n in 3..=5 {
        for k in 2..n {
            let cfg = SampleConfig::new(0, 1, n, k);
            for _ in 0..1000 {
                let s = Spectrum::new(cfg.spectrum(&mut rng)).unwrap();
                let xi = cfg.direction(&mut rng);
                scaling = scaling.max(zhang_scaling_residual(&s, &xi, k, &[0.1, 0.5, 2.0, 7.0]).unwrap());
            }
        }
    }
    ok &= scaling <= 1e-12;
    outcome(
        ok,
        format!("threshold/violations on an independent seed: {}; scaling residual {scaling:.2e}", parts.join(", ")),
    )
}

fn guan_sroka() -> Outcome {
    let mut ok = true;
    let mut c_min = f64::INFINITY;
    let mut violations = 0;
    // the inequality is stated for 1 <= k < n; at k = 0 the constant is exactly zero along xi = e_1
    for n in 2..=5 {
        for k in 1..n {
            let r = estimate_constants(&SampleConfig::new(50, 100_000, n, k), ConstantKind::GuanSrokaC).unwrap();
            let c = r.empirical_constant.unwrap_or(f64::NAN);
            ok &= r.violation_count == 0 && c > 0.0;
            violations += r.violation_count;
            c_min = c_min.min(c);
        }
    }
    outcome(ok, format!("{violations} violations, smallest fitted c {c_min:.4e}"))
}

fn superadditivity() -> Outcome {
    let mut ok = true;
    let mut violations = 0;
    let mut ray = 0.0_f64;
    for n in 2..=5 {
        for k in 0..n {
            let r = superadditivity_scan(60, 10_000, n, k).unwrap();
            let dev = r.extra.get("max_ray_deviation").copied().unwrap_or(f64::NAN);
            ok &= r.violation_count == 0 && dev <= 1e-12;
            violations += r.violation_count;
            ray = ray.max(dev);
        }
    }
    outcome(ok, format!("{violations} violations, largest ray deviation {ray:.2e}"))
}

fn legendre_duality() -> Outcome {
    let f2 = |x: &[f64]| {
        0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1]) + 0.1 * x[0].powi(4) + 0.05 * x[1].powi(4) + 0.1 * x[0] * x[1]
    };
    let f3 = |x: &[f64]| {
        0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1] + 1.5 * x[2] * x[2])
            + 0.1 * x[0].powi(4)
            + 0.1 * x[0] * x[2]
            + 0.05 * x[1].powi(4)
    };
    let hs = [0.125, 0.0625, 0.03125];
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [2usize, 3] {
        let (half, probes): (f64, Vec<Vec<f64>>) = if n == 2 {
            (1.0, vec![vec![0.0, 0.0], vec![0.25, -0.125], vec![-0.375, 0.25]])
        } else {
            (0.5, vec![vec![0.0; 3], vec![0.125, -0.125, 0.125], vec![-0.125, 0.125, 0.0]])
        };
        let pairs: Vec<_> = hs
            .iter()
            .map(|&h| {
                let u = GridFunction::from_fn(Domain::cube(n, half), h, |x| if n == 2 { f2(x) } else { f3(x) }).unwrap();
                // the gradient image is about twice as wide as the 3D box, so double the dual nodes
                discrete_legendre(&u, 2 * (u.dims()[0] - 1) + 1).unwrap()
            })
            .collect();
        for k in 0..n {
            let mut inv = Vec::new();
            let mut quo = Vec::new();
            let mut skipped = 0;
            for pair in &pairs {
                let r = dual_checks(pair, k, &probes, DEFAULT_DELTA).unwrap();
                inv.push(r.max_inverse);
                quo.push(r.max_quotient);
                skipped += r.skipped;
            }
            let (oi, oq) = (fitted_order(&hs, &inv), fitted_order(&hs, &quo));
            ok &= skipped == 0 && oi >= 1.0 && oq >= 1.0;
            parts.push(format!("n={n} k={k} orders {oi:.2}/{oq:.2} skipped {skipped}"));
        }
    }
    outcome(ok, parts.join(", "))
}

fn solver_correctness() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();

    // constant f has the exact radial solution c r^2 / 2 with c^{n-k} = f C(n, k)
    let mut radial_err = 0.0_f64;
    for (n, k, f) in [(2usize, 1usize, 1.0), (3, 1, 2.0), (4, 2, 0.5), (5, 0, 1.5)] {
        let c = (f * binomial(n, k)).powf(1.0 / (n - k) as f64);
        let p = radial_solve(n, k, &|_| f, 1.0, 1e-12).unwrap();
        for (r, phi) in p.r.iter().zip(&p.phi) {
            radial_err = radial_err.max((phi - 0.5 * c * r * r).abs());
        }
    }
    ok &= radial_err <= 1e-10;
    parts.push(format!("radial quadratic error {radial_err:.2e}"));

    // manufactured quartic with D^2u = [[a, 0.1], [0.1, b]]
    let u = |x: &[f64]| 0.5 * (x[0] * x[0] + x[1] * x[1]) + 0.1 * (x[0].powi(4) + x[1].powi(4)) + 0.1 * x[0] * x[1];
    let f = |x: &[f64]| {
        let a = 1.0 + 1.2 * x[0] * x[0];
        let b = 1.0 + 1.2 * x[1] * x[1];
        (a * b - 0.01) / (a + b)
    };
    let hs = [0.125, 0.0625, 0.03125, 0.015625];
    let mut errs = Vec::new();
    for &h in &hs {
        let p = NodalProblem::from_fns(Domain::cube(2, 1.0), h, 1, f, u).unwrap();
        let (uh, rep) = solve_nodal(&p, &SolveOptions::default()).unwrap();
        ok &= rep.converged;
        errs.push(uh.max_abs_diff(&GridFunction::from_fn(Domain::cube(2, 1.0), h, u).unwrap()));
    }
    let order = fitted_order(&hs, &errs);
    let c = hs.iter().zip(&errs).map(|(h, e)| e / (h * h)).fold(0.0, f64::max);
    ok &= (1.7..=2.3).contains(&order);
    parts.push(format!("quartic order {order:.3}, C = {c:.3}"));

    // 3D grid solve against the radial profile as Dirichlet data and truth
    let fr = |r: f64| 1.0 + 0.5 * r * r;
    let prof = radial_solve(3, 1, &fr, 1.8, 1e-12).unwrap();
    let mut worst_ratio = 0.0_f64;
    for &h in &[0.25, 0.125, 0.0625] {
        let truth = prof.to_grid(Domain::cube(3, 1.0), h, &[0.0; 3], 0.0).unwrap();
        let lat = GridFunction::lattice(Domain::cube(3, 1.0), h).unwrap();
        let fv = lat.map_nodes(|_, x| fr(x.iter().map(|v| v * v).sum::<f64>().sqrt())).values().to_vec();
        let p = NodalProblem::new(1, lat, fv, truth.values().to_vec()).unwrap();
        let (uh, rep) = solve_nodal(&p, &SolveOptions::default()).unwrap();
        ok &= rep.converged;
        worst_ratio = worst_ratio.max(uh.max_abs_diff(&truth) / (5.0 * c * h * h));
    }
    ok &= worst_ratio <= 1.0;
    parts.push(format!("3D cross-check error / (5 C h^2) at most {worst_ratio:.3}"));
    outcome(ok, parts.join(", "))
}

fn ellipsoid_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0_f64;
    let mut failures = 0;
    let mut draws = 0;
    for n in 2..=6 {
        for k in 0..n {
            for _ in 0..1000 {
                let mut axes: Vec<f64> = (0..n).map(|_| rng.random_range(0.2f64.ln()..5f64.ln()).exp()).collect();
                axes.sort_by(|a, b| b.total_cmp(a));
                let center: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let e = Ellipsoid::new(center, axes, random_orthogonal(&mut rng, n)).unwrap();
                let b = ellipsoid_barrier(&e, k).unwrap();
                let q = e.frame_matrix();
                let hess = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(b.hessian_diagonal.clone())) * q.transpose();
                let residual = (quotient_by_minors(&hess, k) - 1.0).abs().max(b.residual);
                worst = worst.max(residual);
                failures += usize::from(!b.passed || residual > 1e-12);
                draws += 1;
            }
        }
    }
    outcome(failures == 0, format!("{draws} ellipsoids, {failures} failures, worst |F - 1| {worst:.2e}"))
}

fn radius_estimate() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();

    // quadratic sections: margin against sqrt(2h / mu_i) over the n - k smallest eigenvalues
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut closed = 0.0_f64;
    let mut smallest = f64::INFINITY;
    for n in 2..=5 {
        for k in 0..n {
            for _ in 0..50 {
                let eigs: Vec<f64> = (0..n).map(|_| rng.random_range(0.2f64.ln()..5f64.ln()).exp()).collect();
                let raw = random_with_spectrum(&mut rng, &eigs);
                let hm = &raw * (quotient_by_minors(&raw, k).powf(-1.0 / (n - k) as f64));
                let h = rng.random_range(0.01..1.0);
                let e = quadratic_section_ellipsoid(&hm, &vec![0.0; n], h).unwrap();
                let margin = radius_margin(&e.semi_axes, h, k).unwrap();
                let mut mu: Vec<f64> = hm.clone().symmetric_eigenvalues().iter().copied().collect();
                mu.sort_by(f64::total_cmp);
                let p = n - k;
                let expected = (2.0 * h).powf(p as f64 / 2.0) - mu[..p].iter().map(|m| (2.0 * h / m).sqrt()).product::<f64>();
                closed = closed.max((margin - expected).abs());
                smallest = smallest.min(margin);
            }
        }
    }
    let (n, k, h) = (3usize, 1usize, 0.1);
    let c = binomial(n, k).powf(1.0 / (n - k) as f64);
    let e = quadratic_section_ellipsoid(&(DMatrix::identity(n, n) * c), &[0.0; 3], h).unwrap();
    let iso = radius_margin(&e.semi_axes, h, k).unwrap();
    closed = closed.max((iso - 0.2 * (1.0 - 1.0 / 3f64.sqrt())).abs());
    ok &= closed <= 1e-10 && smallest >= -1e-12;
    parts.push(format!("closed form error {closed:.2e}, smallest quadratic margin {smallest:.2e}"));

    let cases: [(usize, usize, f64, &str, &str); 4] = [
        (2, 1, 1.0 / 32.0, "1.0", "0.5 * (x*x + 4.0*y*y) + 0.05 * x*x*x*x"),
        (2, 1, 1.0 / 32.0, "1.0 + 0.5 * (x*x + y*y)", "0.5 * (2.0*x*x + 0.5*y*y + x*y)"),
        (3, 1, 1.0 / 12.0, "1.0", "0.5 * (x*x + 2.0*y*y + 4.0*z*z)"),
        (3, 2, 1.0 / 12.0, "1.0", "0.5 * (x*x + 2.0*y*y + 4.0*z*z) + 0.1*x*y"),
    ];
    for (n, k, h, f, g) in cases {
        let p = DirichletProblem::new(Domain::cube(n, 1.0), k, h, DataSource::Expr(f.into()), DataSource::Expr(g.into()));
        let (u, rep) = grid_solve_in(&p, None).unwrap();
        match radius_estimate_check(&u, &vec![0.0; n], 0.1, k, SubsolutionFrame::ScaleValues, 1e-3) {
            Ok(r) => {
                ok &= rep.converged && r.passed();
                parts.push(format!("({n},{k}) margin {:.3e} >= -{:.1e}", r.margin, r.eps_geom));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("({n},{k}) error: {e}"));
            }
        }
    }
    outcome(ok, parts.join(", "))
}

fn growth_exponent() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, k) in [(4usize, 1usize), (5, 2)] {
        let q = critical_exponent(n, k);
        let u = critical_slab(n, k, 0.05).unwrap();
        let g = growth_probe(&u, &vec![0.0; n], &SLAB_RADII, k, &slab_options(0.05, 11)).unwrap();
        let (_, r2) = delta_log_fit(n, k, 11).unwrap();
        ok &= (g.exponent - q).abs() <= GROWTH_TOLERANCE && r2 >= 0.95;
        parts.push(format!("({n},{k}) exponent {:.3} vs {q:.3}, log fit R^2 {r2:.4}", g.exponent));
    }
    outcome(ok, parts.join(", "))
}

fn sandwich() -> Outcome {
    let h = 0.0625;
    let g = |x: &[f64]| x[0] * x[0] + x[1] * x[1];
    let p = NodalProblem::from_fns(Domain::cube(2, 1.0), h, 1, |_| 1.0, g).unwrap();
    let truth = GridFunction::from_fn(Domain::cube(2, 1.0), h, g).unwrap();
    let r = approximation_sandwich(&p, &truth, &[4, 8, 16, 32], &SolveOptions::default()).unwrap();
    // truth is quadratic, so the discrete solve carries no h^2 error and any violation above round-off counts
    let worst = r.max_violation();
    let decay = r.decay_exponent.unwrap_or(f64::NAN);
    outcome(
        !r.partial && worst <= 1e-9 && (0.9..=1.1).contains(&decay),
        format!("M = {:.3}, worst violation {worst:.2e}, decay exponent {decay:.3}", r.big_m),
    )
}

fn experiments() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for kind in [ExperimentKind::Pogorelov, ExperimentKind::HessianFloor, ExperimentKind::MeanValue, ExperimentKind::DualJacobi] {
        let r = run_experiment(&ExperimentConfig::new(kind)).unwrap();
        ok &= r.passed();
        let failed: Vec<String> = r.failed_checks().map(|c| c.name.clone()).collect();
        parts.push(if failed.is_empty() {
            format!("{} {} checks", r.id, r.checks.len())
        } else {
            format!("{} failed [{}]", r.id, failed.join("; "))
        });
    }
    outcome(ok, parts.join(", "))
}

#[test]
fn acceptance_criteria() {
    let _ = writeln!(std::io::stderr());
    let results = [
        report(1, "sigma against subset enumeration", secs(10), sigma_oracle),
        report(2, "sigma identities and Newton-Maclaurin", secs(10), identity_suite),
        report(3, "derivative tensors against finite differences", secs(30), derivative_check),
        report(4, "Zhang concavity inequality", secs(60), zhang_inequality),
        report(5, "Guan-Sroka inequality", secs(60), guan_sroka),
        report(6, "superadditivity of the normalized quotient", secs(30), superadditivity),
        report(7, "discrete Legendre duality", secs(120), legendre_duality),
        report(8, "solver correctness", secs(300), solver_correctness),
        report(9, "ellipsoid barrier identity", secs(5), ellipsoid_identity),
        report(10, "radius estimate", secs(180), radius_estimate),
        report(11, "growth exponent", secs(120), growth_exponent),
        report(12, "approximation sandwich", secs(300), sandwich),
        report(13, "estimate experiments", secs(600), experiments),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
