use hessq_core::grid::{Domain, GridFunction};
use hessq_core::solver::{fitted_order, radial_solve, solve_nodal, NodalProblem, SolveOptions};

fn tight() -> SolveOptions {
    SolveOptions {
        tol: 1e-13,
        ..SolveOptions::default()
    }
}

#[test]
fn ordered_data_give_ordered_solutions() {
    let h = 0.0625;
    let g = |x: &[f64]| 0.5 * (x[0] * x[0] + 2.0 * x[1] * x[1]) + 0.1 * x[0] * x[1];
    // lower boundary data and larger f for the subsolution side
    let low = NodalProblem::from_fns(Domain::cube(2, 1.0), h, 1, |x| 1.2 + 0.1 * x[0], |x| g(x) - 0.05).unwrap();
    let high = NodalProblem::from_fns(Domain::cube(2, 1.0), h, 1, |x| 0.8 + 0.1 * x[0], g).unwrap();
    let (u, ru) = solve_nodal(&low, &SolveOptions::default()).unwrap();
    let (v, rv) = solve_nodal(&high, &SolveOptions::default()).unwrap();
    assert!(ru.converged && rv.converged);
    let excess = u.values().iter().zip(v.values()).map(|(a, b)| a - b).fold(f64::NEG_INFINITY, f64::max);
    assert!(excess <= 0.1 * h * h, "u - v reaches {excess}");
}

#[test]
fn coordinate_swap_commutes_with_the_solve() {
    let h = 0.125;
    let f = |x: &[f64]| 1.0 + 0.3 * x[0] * x[0] + 0.1 * x[1];
    let g = |x: &[f64]| 0.5 * (3.0 * x[0] * x[0] + x[1] * x[1]) + 0.2 * x[0];
    let swap = |x: &[f64]| vec![x[1], x[0]];
    let a = NodalProblem::from_fns(Domain::cube(2, 1.0), h, 1, f, g).unwrap();
    let b = NodalProblem::from_fns(Domain::cube(2, 1.0), h, 1, |x| f(&swap(x)), |x| g(&swap(x))).unwrap();
    let (u, _) = solve_nodal(&a, &tight()).unwrap();
    let (v, _) = solve_nodal(&b, &tight()).unwrap();
    let worst = (0..u.len())
        .map(|i| {
            let j = v.nearest(&swap(&u.point(i))).unwrap();
            (u.values()[i] - v.values()[j]).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst <= 1e-12, "swap mismatch {worst}");
}

#[test]
fn accepted_solutions_stay_convex() {
    let opts = SolveOptions::default();
    let p = NodalProblem::from_fns(
        Domain::cube(2, 1.0),
        0.0625,
        1,
        |x| 0.5 + x[0] * x[0],
        |x| 0.5 * (4.0 * x[0] * x[0] + 0.25 * x[1] * x[1]),
    )
    .unwrap();
    let (_, rep) = solve_nodal(&p, &opts).unwrap();
    assert!(rep.converged);
    assert!(rep.min_hessian_eigenvalue >= 0.5 * opts.delta_floor);
    assert!(rep.final_residual <= opts.tol);
}

#[test]
fn manufactured_monge_ampere_converges_at_second_order() {
    let u = |x: &[f64]| (0.5 * x[0] + 0.3 * x[1]).exp() + 0.5 * (x[0] * x[0] + x[1] * x[1]);
    // D^2u = I + e^s [0.25 0.15; 0.15 0.09], so det = 1 + 0.34 e^s
    let f = |x: &[f64]| 1.0 + 0.34 * (0.5 * x[0] + 0.3 * x[1]).exp();
    let hs = [0.125, 0.0625, 0.03125];
    let errs: Vec<f64> = hs
        .iter()
        .map(|&h| {
            let p = NodalProblem::from_fns(Domain::cube(2, 1.0), h, 0, f, u).unwrap();
            let (uh, _) = solve_nodal(&p, &SolveOptions::default()).unwrap();
            uh.max_abs_diff(&GridFunction::from_fn(Domain::cube(2, 1.0), h, u).unwrap())
        })
        .collect();
    let order = fitted_order(&hs, &errs);
    assert!((1.7..=2.3).contains(&order), "order {order}, errors {errs:?}");
}

#[test]
fn grid_solve_matches_the_radial_profile() {
    let fr = |r: f64| 1.0 + r * r;
    let prof = radial_solve(3, 2, &fr, 1.8, 1e-12).unwrap();
    let mut errs = Vec::new();
    let hs = [0.125, 0.0625];
    for &h in &hs {
        let truth = prof.to_grid(Domain::cube(3, 0.5), h, &[0.0; 3], 0.0).unwrap();
        let f = truth.map_nodes(|_, x| fr(x.iter().map(|v| v * v).sum::<f64>().sqrt())).values().to_vec();
        let p = NodalProblem::new(2, truth.clone(), f, truth.values().to_vec()).unwrap();
        let (uh, rep) = solve_nodal(&p, &SolveOptions::default()).unwrap();
        assert!(rep.converged);
        errs.push(uh.max_abs_diff(&truth));
    }
    assert!(errs[1] < errs[0] && errs[1] <= 0.5 * hs[1] * hs[1], "errors {errs:?}");
}
