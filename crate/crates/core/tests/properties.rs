use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hessq_core::geometry::{ellipsoid_barrier, quadratic_section_ellipsoid, radius_margin, Ellipsoid};
use hessq_core::grid::{Domain, GridFunction};
use hessq_core::inequalities::{
    estimate_constants, guan_sroka_terms, superadditivity_terms, zhang_scaling_residual, ConstantKind,
};
use hessq_core::sampling::{random_orthogonal, random_with_spectrum, SampleConfig};
use hessq_core::symcalc::{eigen_descending, hq_derivatives, hq_value, sigma, sigma_derivatives, Spectrum, SymMatrix};

fn positive_spectrum(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    (2..=max_n).prop_flat_map(|n| prop::collection::vec(-3.0f64..3.0, n).prop_map(|v| v.iter().map(|x| x.exp()).collect()))
}

fn spectrum_and_k(max_n: usize) -> impl Strategy<Value = (Vec<f64>, usize)> {
    positive_spectrum(max_n).prop_flat_map(|v| {
        let n = v.len();
        (Just(v), 0..n)
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sigma_and_quotient_are_homogeneous((v, k) in spectrum_and_k(7), t in prop::sample::select(vec![0.5, 2.0, 10.0])) {
        let s = Spectrum::new(v.clone()).unwrap();
        let st = s.scaled(t);
        let n = v.len();
        for j in 0..=n {
            let a = sigma(&st, j, &[]).unwrap();
            let b = t.powi(j as i32) * sigma(&s, j, &[]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300), "sigma_{j}: {a} vs {b}");
        }
        let fa = hq_value(st.values(), k);
        let fb = t.powi((n - k) as i32) * hq_value(s.values(), k);
        prop_assert!((fa - fb).abs() <= 1e-12 * fa.abs().max(fb.abs()));
    }

    #[test]
    fn positive_spectra_give_signed_derivative_blocks((v, k) in spectrum_and_k(6)) {
        let s = Spectrum::new(v.clone()).unwrap();
        let n = v.len();
        for j in 1..=n {
            let d = sigma_derivatives(&s, j).unwrap();
            prop_assert!(d.grad.iter().all(|g| *g > 0.0));
            prop_assert!(d.hess_off.iter().all(|h| *h <= 0.0));
        }
        let q = hq_derivatives(&s, k, None).unwrap();
        prop_assert!(q.grad.iter().all(|g| *g > 0.0));
        for p in 0..n {
            for r in 0..n {
                if p != r {
                    prop_assert!(q.hess_off[(p, r)] < 0.0, "F^(pq,qp) = {} at ({p},{r})", q.hess_off[(p, r)]);
                }
            }
        }
    }

    #[test]
    fn decomposition_recovers_a_constructed_spectrum(v in positive_spectrum(6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_with_spectrum(&mut rng, &v);
        let (s, q) = eigen_descending(&SymMatrix::new(m.clone()).unwrap());
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in s.values().iter().zip(&sorted) {
            prop_assert!(rel(*a, *b) <= 1e-10);
        }
        let orth = (q.transpose() * &q - DMatrix::identity(v.len(), v.len())).amax();
        prop_assert!(orth <= 1e-10);
    }

    #[test]
    fn zhang_margin_is_covariant_under_scaling(v in positive_spectrum(5), seed in any::<u64>()) {
        let n = v.len();
        prop_assume!(n >= 3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = SampleConfig::new(seed, 1, n, 2);
        let xi = cfg.direction(&mut rng);
        let s = Spectrum::new(v).unwrap();
        for k in 2..n {
            prop_assert!(zhang_scaling_residual(&s, &xi, k, &[0.5, 2.0, 10.0]).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn guan_sroka_margin_at_zero_is_nonnegative((v, k) in spectrum_and_k(5), seed in any::<u64>()) {
        prop_assume!(k >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xi = SampleConfig::new(seed, 1, v.len(), k).direction(&mut rng);
        let m = guan_sroka_terms(&Spectrum::new(v).unwrap(), &xi, k, 0.0).unwrap();
        prop_assert!(m.value >= -1e-10 * m.scale.max(1.0), "margin {} scale {}", m.value, m.scale);
    }

    #[test]
    fn superadditivity_holds_and_is_tight_on_rays(
        (a, k) in spectrum_and_k(5),
        b in positive_spectrum(5),
        t in 0.1f64..10.0,
        seed in any::<u64>(),
    ) {
        let n = a.len();
        let b: Vec<f64> = (0..n).map(|i| b[i % b.len()]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ma = random_with_spectrum(&mut rng, &a);
        let mb = random_with_spectrum(&mut rng, &b);
        let m = superadditivity_terms(&ma, &mb, k).unwrap();
        prop_assert!(m.value >= -1e-12 * m.scale.max(1.0));
        let ray = superadditivity_terms(&ma, &(&ma * t), k).unwrap();
        prop_assert!(ray.value.abs() <= 1e-12 * ray.scale.max(1.0), "ray deviation {}", ray.value);
    }

    #[test]
    fn ellipsoid_barrier_has_unit_quotient(n in 2usize..=6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axes: Vec<f64> = {
            let mut a: Vec<f64> = (0..n).map(|i| 0.2 + 0.7 * i as f64 + (seed % 7) as f64 * 0.1).collect();
            a.sort_by(|x, y| y.total_cmp(x));
            a
        };
        let e = Ellipsoid::new(vec![0.0; n], axes, random_orthogonal(&mut rng, n)).unwrap();
        for k in 0..n {
            let b = ellipsoid_barrier(&e, k).unwrap();
            prop_assert!(b.passed && b.residual <= 1e-12, "k={k} residual {}", b.residual);
        }
    }

    #[test]
    fn normalized_quadratic_sections_meet_the_radius_bound(v in positive_spectrum(5), h in 0.01f64..1.0, seed in any::<u64>()) {
        let n = v.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..n {
            let m = random_with_spectrum(&mut rng, &v);
            let f = hq_value(&{
                let mut s = v.clone();
                s.sort_by(|a, b| b.total_cmp(a));
                s
            }, k);
            let hm = m * f.powf(-1.0 / (n - k) as f64);
            let e = quadratic_section_ellipsoid(&hm, &vec![0.0; n], h).unwrap();
            prop_assert!(radius_margin(&e.semi_axes, h, k).unwrap() >= -1e-12);
        }
    }
}

#[test]
fn scans_are_deterministic_under_a_fixed_seed() {
    let cfg = SampleConfig::new(17, 4000, 4, 2);
    let a = estimate_constants(&cfg, ConstantKind::GuanSrokaC).unwrap();
    let b = estimate_constants(&cfg, ConstantKind::GuanSrokaC).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn grid_files_round_trip_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.grid");
    let u = GridFunction::from_fn(Domain::cube(3, 0.5), 0.125, |x| (x[0] - 0.1).exp() + x[1] * x[2]).unwrap();
    u.write(&path, serde_json::json!({"note": "round trip"})).unwrap();
    let v = GridFunction::read(&path).unwrap();
    assert_eq!(u.dims(), v.dims());
    assert_eq!(u.spacing().to_bits(), v.spacing().to_bits());
    assert!(u.values().iter().zip(v.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
}
