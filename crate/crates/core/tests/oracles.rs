use mlpbsde::oracle::{
    affine_closed_form, lipschitz_gap_check, nested_mc, picard_quadrature_detailed, reference_for, OracleKind,
    PicardOptions,
};
use mlpbsde::problem::{builtin_problem, BsdeProblem, Family, ProblemParams};
use mlpbsde::quadrature::{gauss_legendre_on, normal_expectation};
use mlpbsde::MasterSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn probes(n: usize, seed: u64, horizon: f64, radius: f64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (rng.gen_range(0.0..=horizon), rng.gen_range(-radius..=radius)))
        .collect()
}

fn problem(family: Family, d: usize, a: f64, b: f64) -> BsdeProblem {
    let params = ProblemParams {
        a: Some(a),
        b: Some(b),
        ..Default::default()
    };
    builtin_problem(family, d, &params).unwrap()
}

#[test]
fn smoothing_matches_quadrature() {
    let rule = normal_expectation(200, 8.0);
    assert!((rule.integrate(f64::cos) - 0.606_530_659_712_633_4).abs() < 1e-13);
    for family in [Family::CosZero, Family::ExpAffine] {
        for d in 1..=3usize {
            let p = problem(family, d, 0.0, 0.0);
            for &(s, x0) in &[(1.0f64, 0.0f64), (0.3, 0.7), (2.0, -1.1)] {
                let x: Vec<f64> = (0..d).map(|i| x0 + 0.2 * i as f64).collect();
                // Coordinates are independent, so the d-dimensional
                // expectation factorizes into one-dimensional rules.
                let mut quad = 1.0;
                for (i, xi) in x.iter().enumerate() {
                    quad *= rule.integrate(|z| {
                        let mut y = vec![0.0; d];
                        y[i] = xi + s.sqrt() * z;
                        match family {
                            Family::ExpAffine => p.terminal.evaluate(&y),
                            _ => (xi + s.sqrt() * z).cos(),
                        }
                    });
                }
                let closed = p.terminal.gaussian_smoothing(s, &x).unwrap();
                assert!((quad - closed).abs() <= 1e-10 * closed.abs().max(1e-3), "{family} d={d}: {quad} vs {closed}");
            }
        }
    }
}

#[test]
fn closed_form_solves_the_fixed_point_equation() {
    // a = 1, b = 0, cos terminal, d = 1: substitute u into the right-hand
    // side and integrate with Gauss-Legendre x Gauss-Hermite.
    let p = problem(Family::CosAffine, 1, 1.0, 0.0);
    let u = affine_closed_form(&p).unwrap();
    assert!((u.evaluate(0.0, &[0.0]) - 0.5f64.exp()).abs() < 1e-14);
    let hermite = normal_expectation(200, 8.0);
    for &(t, x) in &[(0.0, 0.0), (0.4, 0.9), (0.8, -1.7)] {
        let gl = gauss_legendre_on(24, t, 1.0);
        let leaf = hermite.integrate(|z| (x + (1.0 - t).sqrt() * z).cos());
        let integral = gl.integrate(|s| hermite.integrate(|z| u.evaluate(s, &[x + (s - t).sqrt() * z])));
        let residual = (leaf + integral - u.evaluate(t, &[x])).abs();
        assert!(residual < 1e-8, "({t}, {x}): residual {residual}");
    }
}

#[test]
fn picard_matches_closed_form_for_affine_families() {
    for family in [Family::CosAffine, Family::ExpAffine] {
        let p = builtin_problem(family, 1, &ProblemParams::default()).unwrap();
        let exact = affine_closed_form(&p).unwrap();
        let (picard, diag) = picard_quadrature_detailed(&p, PicardOptions::default()).unwrap();
        assert!(diag.accuracy < 1e-8);
        for (t, x) in probes(20, 11, p.horizon, 2.0) {
            let gap = (picard.evaluate(t, &[x]) - exact.evaluate(t, &[x])).abs();
            assert!(gap < 1e-6, "{family} ({t}, {x}): {gap}");
        }
    }
}

#[test]
fn picard_nonlinear_fixed_point_is_self_consistent() {
    let p = builtin_problem(Family::CosSine, 1, &ProblemParams::default()).unwrap();
    let (u, diag) = picard_quadrature_detailed(&p, PicardOptions::default()).unwrap();
    assert!(diag.last_increment < 1e-8, "{diag:?}");
    let hermite = normal_expectation(200, 8.0);
    let gl = gauss_legendre_on(16, 0.0, 1.0);
    let leaf = hermite.integrate(|z| z.cos());
    // s = w^2 removes the square-root dependence at s = 0
    let integral = gl.integrate(|w| 2.0 * w * hermite.integrate(|z| u.evaluate(w * w, &[w * z]).sin()));
    let residual = (leaf + integral - u.evaluate(0.0, &[0.0])).abs();
    assert!(residual < 1e-8, "residual {residual}");
    assert_eq!(reference_for(&p).unwrap().kind(), OracleKind::PicardQuadrature);
    let p3 = builtin_problem(Family::CosSine, 3, &ProblemParams::default()).unwrap();
    assert!(reference_for(&p3).is_err());
}

#[test]
fn nested_mc_agrees_with_closed_form() {
    for (family, d) in [(Family::CosZero, 1), (Family::CosAffine, 1), (Family::CosAffine, 5), (Family::ExpAffine, 2)] {
        let p = builtin_problem(family, d, &ProblemParams::default()).unwrap();
        let exact = affine_closed_form(&p).unwrap();
        for (k, (t, x0)) in probes(5, 3 + d as u64, p.horizon, 1.0).into_iter().enumerate() {
            let x = vec![x0; d];
            let (v, se) = nested_mc(&p, t, &x, 2, 100, MasterSeed(k as u64)).unwrap();
            let u = exact.evaluate(t, &x);
            assert!((v - u).abs() <= 4.0 * se + 1e-3, "{family} d={d}: {v} +- {se} vs {u}");
        }
    }
}

#[test]
fn a_priori_bounds_hold_on_probe_grid() {
    for family in [Family::CosZero, Family::CosAffine, Family::ExpAffine] {
        for d in [1usize, 3] {
            let p = builtin_problem(family, d, &ProblemParams::default()).unwrap();
            let u = reference_for(&p).unwrap();
            let lip = p.lipschitz();
            let (a, b) = p.driver.affine().unwrap();
            for (t, x0) in probes(200, 17, p.horizon, 3.0) {
                let x = vec![x0; d];
                let value = u.evaluate(t, &x);
                let s = p.horizon - t;
                // V(x) <= V0 e^{<c,x>/beta} + V0 for the exponential family
                let v_of_x = match family {
                    Family::ExpAffine => {
                        let c_dot: f64 = 0.1 * x.iter().sum::<f64>();
                        p.lyapunov_v0 * ((c_dot / p.beta).exp() + 1.0) / 2.0
                    }
                    _ => p.lyapunov_v0,
                };
                let bound = 4.0 * (lip * s).exp() * ((p.rho * s).exp() * v_of_x).powf(p.beta);
                assert!(value.abs() <= bound, "{family}: |u| = {} > {bound}", value.abs());
                if family != Family::ExpAffine && a == 0.0 {
                    assert!(value.abs() <= 1.0 + b.abs() * p.horizon);
                }
            }
        }
    }
}

#[test]
fn solutions_have_bounded_difference_quotients() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for family in [Family::CosZero, Family::CosAffine, Family::ExpAffine] {
        let p = builtin_problem(family, 1, &ProblemParams::default()).unwrap();
        let u = reference_for(&p).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let (s, t) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let denom = f64::abs(s - t).sqrt() + f64::abs(x - y);
            if denom > 0.0 {
                worst = worst.max((u.evaluate(s, &[x]) - u.evaluate(t, &[y])).abs() / denom);
            }
        }
        assert!(worst.is_finite() && worst < 10.0, "{family}: {worst}");
    }
}

#[test]
fn second_difference_inequality() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100_000 {
        let q: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-10.0..10.0));
        assert!(lipschitz_gap_check(f64::sin, 1.0, 1.0, q[0], q[1], q[2], q[3]).holds);
        let lin = lipschitz_gap_check(|v| -1.7 * v + 3.0, 1.7, 0.0, q[0], q[1], q[2], q[3]);
        assert!((lin.lhs - lin.rhs).abs() < 1e-12);
    }
}
