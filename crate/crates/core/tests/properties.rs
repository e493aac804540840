//! Property tests for the structural invariants: exact-arithmetic exponent
//! identities, involutions, operator homogeneity, and estimator
//! consistency on synthetic power-law fields.

use nsing::exponents::{self, ProblemParams};
use nsing::halfspace::SectorGrid;
use nsing::transforms::{self, BoundaryChart, InversionSpec};
use nsing::{classify, fd};
use proptest::prelude::*;

// q bounded away from N-1: the constant solution grows like
// x^(1/(q+1-N)) and overflows f64 within ~0.1 of the endpoint
fn singular_range_params() -> impl Strategy<Value = (u32, f64)> {
    (2u32..=5).prop_flat_map(|n| {
        let nf = n as f64;
        (Just(n), (nf - 1.0 + 0.2)..(2.0 * nf - 1.02))
    })
}

proptest! {
    #[test]
    fn beta_q_bounds_and_lambda_identity((n, q) in singular_range_params()) {
        let params = ProblemParams::new(n, q).unwrap();
        let beta = exponents::beta_q(&params).unwrap();
        // beta_q > 1 strictly inside the singular range, = 1 at critical
        prop_assert!(beta > 1.0);
        let lam = exponents::lambda_sep(&params).unwrap();
        let lam_pq = exponents::lambda_pq(n as f64, q, n).unwrap();
        prop_assert!((lam - lam_pq).abs() <= 1e-12 * lam.max(1.0));
        let sc = exponents::scaling_exponent(&params).unwrap();
        prop_assert!(sc > 0.0);
        // the constant solution satisfies the spherical identity exactly
        let c = exponents::const_solution(&params).unwrap();
        let res = exponents::constant_residual(&params, c).unwrap();
        prop_assert!(res.abs() <= 1e-10 * c.powf(q));
    }

    #[test]
    fn kv_root_solves_its_quadratic(p in 1.01f64..50.0) {
        let b = exponents::kv_root(p).unwrap();
        prop_assert!(b > 0.0);
        let c = (p - 3.0) / (p - 1.0);
        let val = 3.0 * b * b + 2.0 * c * b - 1.0;
        prop_assert!(val.abs() < 1e-12);
    }

    #[test]
    fn inversion_is_involutive(
        x0 in -2.0f64..2.0,
        x1 in -2.0f64..2.0,
        x2 in 0.05f64..2.0,
    ) {
        let spec = InversionSpec::half_space_to_star_ball(3);
        let x = [x0, x1, x2];
        let y = transforms::invert(&spec, &transforms::invert(&spec, &x).unwrap()).unwrap();
        for i in 0..3 {
            prop_assert!((y[i] - x[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn reflection_is_involutive_on_tube(
        x0 in -0.4f64..0.4,
        x1 in -0.4f64..0.4,
        depth in -0.2f64..0.2,
    ) {
        let chart = BoundaryChart::parabolic(0.5, 0.3);
        let h = 0.5 * (x0 * x0 + x1 * x1);
        let x = [x0, x1, h + depth];
        let y = transforms::reflect(&chart, &x).unwrap();
        let z = transforms::reflect(&chart, &y).unwrap();
        for i in 0..3 {
            prop_assert!((z[i] - x[i]).abs() < 1e-10);
        }
        // the reflection swaps the two sides
        let side_x = transforms::signed_distance(&chart, &x).unwrap();
        let side_y = transforms::signed_distance(&chart, &y).unwrap();
        prop_assert!((side_x + side_y).abs() < 1e-10);
    }

    #[test]
    fn extended_operator_is_p_minus_1_homogeneous(
        c in prop::sample::select(vec![-2.0f64, 0.5, 3.0]),
        e0 in -1.0f64..1.0,
        e1 in -1.0f64..1.0,
        e2 in 0.1f64..1.0,
    ) {
        let chart = BoundaryChart::parabolic(0.5, 0.3);
        let p = 3.0;
        let x = [0.2, -0.1, -0.15];
        let eta = [e0, e1, e2];
        let base = transforms::extended_operator(&chart, p, &x, &eta).unwrap();
        let scaled_eta: Vec<f64> = eta.iter().map(|v| c * v).collect();
        let scaled = transforms::extended_operator(&chart, p, &x, &scaled_eta).unwrap();
        let factor = c * c.abs().powf(p - 2.0);
        for i in 0..3 {
            prop_assert!((scaled[i] - factor * base[i]).abs() <= 1e-9 * (1.0 + base[i].abs()));
        }
    }

    #[test]
    fn fit_exponent_recovers_power_laws(slope in -3.0f64..2.0, amp in 0.1f64..10.0) {
        let grid = SectorGrid::new(1e-4, 1.0, 97, 33).unwrap();
        let field = classify::synthetic::from_fn(grid, move |r, phi| {
            amp * r.powf(slope) * (1.0 + 0.5 * phi.cos())
        });
        let fitted = classify::fit_exponent(&field, (1e-3, 1e-1)).unwrap();
        prop_assert!((fitted - slope).abs() < 1e-6);
    }

    #[test]
    fn estimate_k_recovers_kernel_strength(k in 0.1f64..50.0) {
        let grid = SectorGrid::new(1e-4, 1.0, 97, 33).unwrap();
        let field = classify::synthetic::weak(grid, k);
        let est = classify::estimate_k(
            &field,
            (1e-3, 1e-1),
            &classify::ClassifySettings::default(),
        )
        .unwrap();
        prop_assert!((est.k_hat / k - 1.0).abs() < 1e-9);
        prop_assert!((est.per_decade_factor - 1.0).abs() < 1e-6);
    }
}

#[test]
fn supersolution_kernel_is_discretely_n_harmonic_in_dim_4() {
    // dimension beyond the solver range still satisfies the FD oracle
    let f = |x: &[f64]| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        x[3] / r2
    };
    let pts = vec![
        vec![0.3, 0.1, -0.2, 0.5],
        vec![-0.2, 0.4, 0.1, 0.8],
    ];
    let rep = fd::harmonic_order(&f, &pts, 4.0, 1e-3);
    assert!(rep.order >= 1.8, "order {:.2}", rep.order);
}
