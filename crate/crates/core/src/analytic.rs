//! Closed-form comparison functions: the N-harmonic supersolution
//! `k cos(phi)/r` of the half-space problem, the local subsolution ansatz
//! `w = k (1 - r^alpha) r^(-1) cos(phi)` with its full derivative stack,
//! the exact quasilinear operator value `Lw`, and the N-harmonic ball
//! kernel obtained by inversion.
//!
//! These functions seed the PDE solvers and validate the discretizations.

use crate::exponents::{ExponentError, ProblemParams};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalyticError {
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error("alpha = {alpha} out of range (0, {bound})")]
    BadAlpha { alpha: f64, bound: f64 },
    #[error("radius r = {0} outside the validity range (0, 1]")]
    BadRadius(f64),
    #[error("validity radius R = {0} outside (0, 1]")]
    BadValidityRadius(f64),
    #[error("point outside the closed ball |x|^2 + x_N <= 0")]
    OutsideStarBall,
    #[error("no admissible radius found: Lw changes sign down to R = {0:.3e}")]
    NoAdmissibleRadius(f64),
}

/// `k x_N |x|^(-2) = k cos(phi)/r`, N-harmonic in the half space, vanishing
/// on the boundary away from the origin; a supersolution of the absorbed
/// equation.
pub fn supersolution_weak(r: f64, phi: f64, k: f64) -> f64 {
    k * phi.cos() / r
}

/// Admissible perturbation bound `min{2N-1-q, 1/(N-2)}`, with the
/// convention `1/(N-2) = +inf` for N = 2.
pub fn alpha_bound(params: &ProblemParams) -> Result<f64, AnalyticError> {
    params.require_singular_range()?;
    let nf = params.nf();
    let first = 2.0 * nf - 1.0 - params.q;
    if params.n == 2 {
        Ok(first)
    } else {
        Ok(first.min(1.0 / (nf - 2.0)))
    }
}

/// Subsolution ansatz parameters: strength, perturbation exponent and the
/// radius up to which the sign `Lw <= 0` has been established.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SubsolutionSpec {
    pub k: f64,
    pub alpha: f64,
    pub r_valid: f64,
}

impl SubsolutionSpec {
    pub fn new(params: &ProblemParams, k: f64, alpha: f64) -> Result<Self, AnalyticError> {
        let bound = alpha_bound(params)?;
        if !(alpha > 0.0 && alpha < bound) {
            return Err(AnalyticError::BadAlpha { alpha, bound });
        }
        if !(k > 0.0) {
            return Err(ExponentError::BadStrength(k).into());
        }
        Ok(SubsolutionSpec {
            k,
            alpha,
            r_valid: 1.0,
        })
    }

    /// Threshold value `l_R = k (1 - R^alpha) / R`; `(w - l_R)_+` is the
    /// global subsolution used to pin the singular behaviour.
    pub fn ell(&self, r_cap: f64) -> f64 {
        self.k * (1.0 - r_cap.powf(self.alpha)) / r_cap
    }
}

/// Value and first/second derivatives of the subsolution at one point,
/// together with `P = w_r^2 + r^(-2) w_phi^2` and its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeStack {
    pub w: f64,
    pub w_r: f64,
    pub w_phi: f64,
    pub w_rr: f64,
    pub w_phiphi: f64,
    pub p: f64,
    pub p_r: f64,
    pub p_phi: f64,
}

/// Closed-form derivative stack of `w = k (1 - r^alpha) r^(-1) cos(phi)`.
pub fn subsolution_w(spec: &SubsolutionSpec, r: f64, phi: f64) -> Result<DerivativeStack, AnalyticError> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(AnalyticError::BadRadius(r));
    }
    let (k, a) = (spec.k, spec.alpha);
    let ra = r.powf(a);
    let (sin, cos) = phi.sin_cos();
    let w = k * (1.0 - ra) / r * cos;
    let w_r = -k / (r * r) * (1.0 + (a - 1.0) * ra) * cos;
    let w_phi = -k / r * (1.0 - ra) * sin;
    let w_rr = k / (r * r * r) * (2.0 - (a - 1.0) * (a - 2.0) * ra) * cos;
    let w_phiphi = -k / r * (1.0 - ra) * cos;
    let cos2 = cos * cos;
    let p = k * k / r.powi(4)
        * (1.0 + 2.0 * (a * cos2 - 1.0) * ra + ra * ra * ((a * a - 2.0 * a) * cos2 + 1.0));
    let p_r = -2.0 * k * k / r.powi(5)
        * (2.0
            + (4.0 - a) * (a * cos2 - 1.0) * ra
            + (2.0 - a) * ((a * a - 2.0 * a) * cos2 + 1.0) * ra * ra);
    let p_phi = -k * k * a * ra / r.powi(4) * (2.0 + (a - 2.0) * ra) * (2.0 * phi).sin();
    Ok(DerivativeStack {
        w,
        w_r,
        w_phi,
        w_rr,
        w_phiphi,
        p,
        p_r,
        p_phi,
    })
}

/// Exact value of `Lw = -div(|Dw|^(N-2) Dw) + w^q`, assembled from the
/// closed-form stack (p = N).
pub fn lw_exact(
    spec: &SubsolutionSpec,
    r: f64,
    phi: f64,
    params: &ProblemParams,
) -> Result<f64, AnalyticError> {
    let s = subsolution_w(spec, r, phi)?;
    let nf = params.nf();
    let q = params.q;
    let absorption = s.w.abs().powf(q - 1.0) * s.w;
    if s.p == 0.0 {
        // only at the (r=1, phi=pi/2) corner, where the flux vanishes
        return Ok(absorption);
    }
    let cot = if phi.sin().abs() < 1e-300 {
        // phi = 0 axis: cot(phi) w_phi -> w_phiphi in the Laplace-Beltrami limit
        return Ok(lw_exact_axis(spec, r, params, &s));
    } else {
        phi.cos() / phi.sin()
    };
    let lap = (nf - 1.0) / r * s.w_r
        + s.w_rr
        + (nf - 2.0) / (r * r) * cot * s.w_phi
        + s.w_phiphi / (r * r);
    let grad_coupling = s.p_r * s.w_r + s.p_phi * s.w_phi / (r * r);
    Ok(-s.p.powf((nf - 2.0) / 2.0) * lap
        - (nf - 2.0) / 2.0 * s.p.powf((nf - 4.0) / 2.0) * grad_coupling
        + absorption)
}

fn lw_exact_axis(spec: &SubsolutionSpec, r: f64, params: &ProblemParams, s: &DerivativeStack) -> f64 {
    // On the axis w_phi = 0 and cot(phi) w_phi -> w_phiphi; P_phi = 0.
    let nf = params.nf();
    let lap = (nf - 1.0) / r * s.w_r + s.w_rr + (nf - 1.0) / (r * r) * s.w_phiphi;
    let grad_coupling = s.p_r * s.w_r;
    let absorption = s.w.abs().powf(params.q - 1.0) * s.w;
    let _ = spec;
    -s.p.powf((nf - 2.0) / 2.0) * lap
        - (nf - 2.0) / 2.0 * s.p.powf((nf - 4.0) / 2.0) * grad_coupling
        + absorption
}

/// Leading-order expansion of `Lw` as r -> 0:
/// `k^(N-1) alpha [alpha + 6 - 4N + (2+alpha)(N-2) cos^2(phi)] r^(alpha-2N+1) cos(phi)
///  + k^q r^(-q) cos^q(phi)`.
///
/// The bracket follows from the exact derivative stack; at N = 2 it reduces
/// to `-alpha (2 - alpha)`, the two-dimensional Laplacian of the ansatz.
pub fn lw_expansion(
    spec: &SubsolutionSpec,
    r: f64,
    phi: f64,
    params: &ProblemParams,
) -> Result<f64, AnalyticError> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(AnalyticError::BadRadius(r));
    }
    let nf = params.nf();
    let (k, a) = (spec.k, spec.alpha);
    let cos = phi.cos();
    let bracket = a + 6.0 - 4.0 * nf + (2.0 + a) * (nf - 2.0) * cos * cos;
    Ok(k.powf(nf - 1.0) * a * bracket * r.powf(a - 2.0 * nf + 1.0) * cos
        + k.powf(params.q) * r.powf(-params.q) * cos.powf(params.q))
}

/// Report of the sign scan: the largest dyadic radius R <= 1 with
/// `Lw <= 0` on a sample of `(r, phi) in [R/100, R] x [0, pi/2]`.
#[derive(Debug, Clone, Serialize)]
pub struct SubsolutionScan {
    pub r_found: f64,
    pub lw_min: f64,
    pub lw_max: f64,
    pub samples: usize,
}

/// Establishes the validity radius of the subsolution by scanning dyadic
/// candidates; the existence of some R in (0, 1] is guaranteed for
/// admissible alpha.
pub fn find_subsolution_radius(
    spec: &SubsolutionSpec,
    params: &ProblemParams,
    grid: usize,
) -> Result<SubsolutionScan, AnalyticError> {
    params.require_singular_range()?;
    let mut r_cap = 1.0f64;
    for _ in 0..60 {
        let mut lw_min = f64::INFINITY;
        let mut lw_max = f64::NEG_INFINITY;
        let mut ok = true;
        'outer: for i in 0..grid {
            // geometric radii spanning two decades below the candidate
            let r = r_cap * (0.01f64).powf(i as f64 / (grid - 1) as f64);
            for j in 0..grid {
                let phi = std::f64::consts::FRAC_PI_2 * j as f64 / (grid - 1) as f64;
                let v = lw_exact(spec, r, phi, params)?;
                lw_min = lw_min.min(v);
                lw_max = lw_max.max(v);
                if v > 0.0 {
                    ok = false;
                    break 'outer;
                }
            }
        }
        if ok {
            return Ok(SubsolutionScan {
                r_found: r_cap,
                lw_min,
                lw_max,
                samples: grid * grid,
            });
        }
        r_cap /= 2.0;
    }
    Err(AnalyticError::NoAdmissibleRadius(r_cap))
}

/// `P_k(x) = -k (|x|^2 + x_N) / (2 |x|^2)`: N-harmonic and positive in the
/// ball `B* = {|x|^2 + x_N < 0}`, vanishing on its boundary away from 0.
pub fn ball_kernel_pk(x: &[f64], k: f64) -> Result<f64, AnalyticError> {
    let r2: f64 = x.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return Err(AnalyticError::OutsideStarBall);
    }
    let xn = *x.last().unwrap();
    if r2 + xn > 1e-12 {
        return Err(AnalyticError::OutsideStarBall);
    }
    Ok(-k * (r2 + xn) / (2.0 * r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn pp(n: u32, q: f64) -> ProblemParams {
        ProblemParams::new(n, q).unwrap()
    }

    #[test]
    fn supersolution_values() {
        assert_eq!(supersolution_weak(1.0, 0.0, 1.0), 1.0);
        let v = supersolution_weak(2.0, std::f64::consts::FRAC_PI_3, 4.0);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn supersolution_is_discretely_n_harmonic() {
        // u = k x_N |x|^{-2} as a field on R^N, N = 3
        let f = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            x[2] / r2
        };
        let pts: Vec<Vec<f64>> = vec![
            vec![0.3, 0.1, 0.5],
            vec![-0.2, 0.4, 0.8],
            vec![0.6, -0.3, 0.4],
        ];
        let rep = fd::harmonic_order(&f, &pts, 3.0, 1e-3);
        assert!(rep.order >= 1.8, "order {:.2}", rep.order);
    }

    #[test]
    fn alpha_bound_values() {
        assert_eq!(alpha_bound(&pp(2, 2.0)).unwrap(), 1.0);
        assert_eq!(alpha_bound(&pp(3, 4.0)).unwrap(), 1.0);
        assert_eq!(alpha_bound(&pp(3, 4.5)).unwrap(), 0.5);
        assert!(alpha_bound(&pp(2, 3.5)).is_err());
    }

    #[test]
    fn stack_boundary_structure() {
        let params = pp(3, 4.0);
        let spec = SubsolutionSpec::new(&params, 1.0, 0.3).unwrap();
        let s = subsolution_w(&spec, 1.0, 0.7).unwrap();
        assert!(s.w.abs() < 1e-15 && s.w_phi.abs() < 1e-15);
        let s = subsolution_w(&spec, 0.5, FRAC_PI_2).unwrap();
        // cos(pi/2) is ~6e-17 in floating point, not exactly zero
        assert!(s.w.abs() < 1e-15);
        assert!(s.w_r.abs() < 1e-15);
        assert!(subsolution_w(&spec, 1.5, 0.1).is_err());
    }

    #[test]
    fn stack_matches_finite_differences() {
        let params = pp(3, 4.0);
        let spec = SubsolutionSpec::new(&params, 1.0, 0.3).unwrap();
        let (r, phi) = (0.01, FRAC_PI_4);
        let s = subsolution_w(&spec, r, phi).unwrap();
        let w_of = |rr: f64, pp_: f64| spec.k * (1.0 - rr.powf(spec.alpha)) / rr * pp_.cos();
        let hr = r * 1e-3;
        let hp = 1e-3;
        let w_r = fd::d1(|rr| w_of(rr, phi), r, hr);
        let w_phi = fd::d1(|ph| w_of(r, ph), phi, hp);
        let w_rr = fd::d2(|rr| w_of(rr, phi), r, hr);
        let w_pp = fd::d2(|ph| w_of(r, ph), phi, hp);
        assert!((s.w_r / w_r - 1.0).abs() < 1e-6);
        assert!((s.w_phi / w_phi - 1.0).abs() < 1e-6);
        assert!((s.w_rr / w_rr - 1.0).abs() < 1e-6);
        assert!((s.w_phiphi / w_pp - 1.0).abs() < 1e-6);
        // P and its derivatives against FD-reassembled first derivatives
        let p_of = |rr: f64, pp_: f64| {
            let wr = fd::d1(|t| w_of(t, pp_), rr, rr * 1e-3);
            let wp = fd::d1(|t| w_of(rr, t), pp_, 1e-3);
            wr * wr + wp * wp / (rr * rr)
        };
        assert!((s.p / p_of(r, phi) - 1.0).abs() < 1e-6);
        let p_r = fd::d1(|rr| p_of(rr, phi), r, hr);
        let p_phi = fd::d1(|ph| p_of(r, ph), phi, hp);
        assert!((s.p_r / p_r - 1.0).abs() < 1e-6, "{} {}", s.p_r, p_r);
        assert!((s.p_phi / p_phi - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lw_exact_matches_full_fd_operator() {
        // Cartesian oracle: Lw via fd::absorption_residual on the 3-D field.
        let params = pp(3, 4.0);
        let spec = SubsolutionSpec::new(&params, 1.0, 0.3).unwrap();
        let field = |x: &[f64]| {
            let r = (x.iter().map(|v| v * v).sum::<f64>()).sqrt();
            let phi = (x[2] / r).acos();
            spec.k * (1.0 - r.powf(spec.alpha)) / r * phi.cos()
        };
        for &(r, phi) in &[(0.3, 0.6), (0.5, FRAC_PI_4), (0.7, 1.2)] {
            let x = [r * phi.sin() * 0.6, r * phi.sin() * 0.8, r * phi.cos()];
            let oracle = fd::absorption_residual(&field, &|_: &[f64]| 1.0, &x, 3.0, 4.0, 1e-4);
            let exact = lw_exact(&spec, r, phi, &params).unwrap();
            assert!(
                (exact - oracle).abs() < 1e-3 * (1.0 + exact.abs()),
                "r={r} phi={phi}: exact {exact:.6e} oracle {oracle:.6e}"
            );
        }
    }

    #[test]
    fn lw_sign_on_admissible_sample() {
        for &(n, q, alpha) in &[(2u32, 2.0, 0.5), (3, 4.0, 0.3), (2, 2.5, 0.25)] {
            let params = pp(n, q);
            let spec = SubsolutionSpec::new(&params, 1.0, alpha).unwrap();
            let scan = find_subsolution_radius(&spec, &params, 64).unwrap();
            assert!(scan.r_found > 0.0 && scan.r_found <= 1.0);
            assert!(scan.lw_max <= 0.0, "Lw max {:.3e}", scan.lw_max);
        }
    }

    #[test]
    fn expansion_ratio_converges() {
        let params = pp(3, 4.0);
        let spec = SubsolutionSpec::new(&params, 1.0, 0.3).unwrap();
        let mut prev_gap = f64::INFINITY;
        for m in 2..=6 {
            let r = 10f64.powi(-m);
            let exact = lw_exact(&spec, r, FRAC_PI_4, &params).unwrap();
            let expansion = lw_expansion(&spec, r, FRAC_PI_4, &params).unwrap();
            let gap = (exact / expansion - 1.0).abs();
            assert!(gap < prev_gap + 1e-12, "ratio gap not shrinking at r={r}");
            prev_gap = gap;
        }
        let exact = lw_exact(&spec, 1e-4, FRAC_PI_4, &params).unwrap();
        let expansion = lw_expansion(&spec, 1e-4, FRAC_PI_4, &params).unwrap();
        assert!((exact / expansion - 1.0).abs() < 0.10);
    }

    #[test]
    fn subsolution_below_supersolution() {
        let params = pp(2, 2.0);
        let spec = SubsolutionSpec::new(&params, 2.0, 0.5).unwrap();
        for i in 1..40 {
            let r = i as f64 / 40.0;
            for j in 0..20 {
                let phi = FRAC_PI_2 * j as f64 / 19.0;
                let w = subsolution_w(&spec, r, phi).unwrap().w;
                assert!(w <= supersolution_weak(r, phi, spec.k) + 1e-15);
            }
        }
    }

    #[test]
    fn ball_kernel_values() {
        let x = [0.0, 0.0, -0.5];
        assert!((ball_kernel_pk(&x, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let x = [0.0, 0.0, -1.0];
        assert!(ball_kernel_pk(&x, 3.0).unwrap().abs() < 1e-15);
        assert!(ball_kernel_pk(&[0.0, 0.0, 0.5], 1.0).is_err());
    }

    #[test]
    fn ball_kernel_is_discretely_n_harmonic() {
        let f = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            -(r2 + x[2]) / (2.0 * r2)
        };
        // interior sample points of B* in N = 3
        let pts: Vec<Vec<f64>> = vec![
            vec![0.05, 0.02, -0.5],
            vec![-0.1, 0.1, -0.6],
            vec![0.15, -0.05, -0.4],
        ];
        let rep = fd::harmonic_order(&f, &pts, 3.0, 1e-3);
        assert!(rep.order >= 1.8, "order {:.2}", rep.order);
    }
}
