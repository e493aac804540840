//! Axisymmetric reduction of the spherical profile equation on the upper
//! hemisphere, and the spherical p-harmonic spectral eigenproblem, both
//! solved by shooting from the pole with bisection on the free parameter.
//!
//! Axisymmetry: the equation and the hemisphere are rotation invariant and
//! the positive solution is unique, so it depends on the colatitude only;
//! the reduction is an ODE in `phi` on `[0, pi/2]` with a regular singular
//! point at the pole. Integration starts at `phi = h/2` from a second-order
//! Taylor seed, which avoids the 0/0 in `cot(phi) * omega'`.

use crate::exponents::{self, ExponentError, ProblemParams};
use crate::util::fmt_g17;
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ShootError {
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error("grid too coarse: need at least 11 nodes, got {0}")]
    GridTooCoarse(usize),
    #[error("non-finite profile values")]
    NonFinite,
    #[error("no sign change of the shooting map in the scanned range [{lo:.3e}, {hi:.3e}]")]
    NoBracket { lo: f64, hi: f64 },
    #[error("shooting did not converge within {0} iterations")]
    NonConvergence(usize),
}

/// Uniform colatitude grid on `[0, pi/2]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SphericalGrid {
    pub m: usize,
}

impl SphericalGrid {
    pub fn new(m: usize) -> Result<Self, ShootError> {
        if m < 11 {
            return Err(ShootError::GridTooCoarse(m));
        }
        Ok(SphericalGrid { m })
    }

    pub fn h(&self) -> f64 {
        FRAC_PI_2 / (self.m - 1) as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        if j == self.m - 1 {
            FRAC_PI_2
        } else {
            j as f64 * self.h()
        }
    }
}

/// Which profile equation is being integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileKind {
    /// Absorption profile: p = N, zeroth-order coefficient (N-1) beta^2,
    /// plus the |omega|^(q-1) omega absorption term.
    Absorption,
    /// Spectral eigenproblem: general p, no absorption,
    /// lambda = beta (beta (p-1) + p - N).
    Spectral { p: f64 },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShootSettings {
    /// Target |omega(pi/2)|.
    pub tol_boundary: f64,
    /// Bracket width tolerance on the shooting parameter (relative).
    pub tol_param: f64,
    pub max_iter: usize,
    /// RK4 substeps per grid interval.
    pub ode_steps_per_node: usize,
    /// Degenerate-gradient floor; the positive branch never reaches it.
    pub reg_eps: f64,
}

impl Default for ShootSettings {
    fn default() -> Self {
        ShootSettings {
            tol_boundary: 1e-9,
            tol_param: 1e-13,
            max_iter: 200,
            ode_steps_per_node: 4,
            reg_eps: 1e-12,
        }
    }
}

/// A spherical profile sampled on the grid.
#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    pub beta: f64,
    pub omega: Vec<f64>,
    pub omega_prime: Vec<f64>,
    pub residual_norm: f64,
    /// Pole value, the shooting parameter.
    pub lambda0: f64,
    /// How often the degenerate-gradient floor activated (0 on the
    /// positive branch).
    pub floor_hits: usize,
}

impl Profile {
    /// Cubic Hermite interpolation between grid nodes; C^1, exact at the
    /// nodes, smooth enough to feed the finite-difference oracles.
    pub fn interpolate(&self, grid: &SphericalGrid, phi: f64) -> f64 {
        let h = grid.h();
        let phi = phi.clamp(0.0, FRAC_PI_2);
        let j = ((phi / h).floor() as usize).min(grid.m - 2);
        let s = (phi - grid.phi(j)) / h;
        let (y0, y1) = (self.omega[j], self.omega[j + 1]);
        let (d0, d1) = (self.omega_prime[j] * h, self.omega_prime[j + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1
    }
}

struct Rhs {
    n: f64,
    p: f64,
    beta: f64,
    lam: f64,
    /// absorption exponent; None for the spectral equation
    q: Option<f64>,
    floor: f64,
}

impl Rhs {
    fn for_absorption(params: &ProblemParams, beta: f64, reg: f64) -> Rhs {
        let nf = params.nf();
        Rhs {
            n: nf,
            p: nf,
            beta,
            lam: (nf - 1.0) * beta * beta,
            q: Some(params.q),
            floor: reg * reg,
        }
    }

    fn for_spectral(p: f64, n: u32, beta: f64, reg: f64) -> Rhs {
        Rhs {
            n: n as f64,
            p,
            beta,
            lam: beta * (beta * (p - 1.0) + p - n as f64),
            q: None,
            floor: reg * reg,
        }
    }

    /// Second derivative away from the pole.
    fn second(&self, phi: f64, w: f64, wp: f64, floor_hits: &mut usize) -> f64 {
        let b2 = self.beta * self.beta;
        let mut q_mag = b2 * w * w + wp * wp;
        let mut denom = b2 * w * w + (self.p - 1.0) * wp * wp;
        if q_mag < self.floor {
            q_mag = self.floor;
            denom = denom.max(self.floor);
            *floor_hits += 1;
        }
        let cot = phi.cos() / phi.sin();
        let mut num =
            -self.lam * q_mag * w - (self.n - 2.0) * cot * q_mag * wp - (self.p - 2.0) * b2 * w * wp * wp;
        if let Some(q) = self.q {
            num += w.abs().powf(q - 1.0) * w * q_mag.powf((4.0 - self.p) / 2.0);
        }
        num / denom
    }

    /// Regular limit of the second derivative at the pole.
    fn pole_curvature(&self, lambda0: f64) -> f64 {
        match self.q {
            Some(q) => {
                (lambda0.abs().powf(q - 1.0) * lambda0 * (self.beta * lambda0).powf(2.0 - self.n)
                    - self.lam * lambda0)
                    / (self.n - 1.0)
            }
            None => -self.lam * lambda0 / (self.n - 1.0),
        }
    }
}

/// Second-order pole seed for the integrator: the regular value of
/// `omega''(0)` given the pole value.
pub fn startup_expansion(
    lambda0: f64,
    beta: f64,
    params: &ProblemParams,
    kind: ProfileKind,
) -> f64 {
    let rhs = match kind {
        ProfileKind::Absorption => Rhs::for_absorption(params, beta, 0.0),
        ProfileKind::Spectral { p } => Rhs::for_spectral(p, params.n, beta, 0.0),
    };
    rhs.pole_curvature(lambda0)
}

struct Trajectory {
    omega: Vec<f64>,
    omega_prime: Vec<f64>,
    /// colatitude of the first sign change, if any
    first_zero: Option<f64>,
    end_value: f64,
    floor_hits: usize,
    blew_up: bool,
}

fn integrate(rhs: &Rhs, lambda0: f64, grid: &SphericalGrid, substeps: usize) -> Trajectory {
    let m = grid.m;
    let h = grid.h();
    let cap = 1e8 * lambda0.abs().max(1.0);
    let mut omega = vec![f64::NAN; m];
    let mut omega_prime = vec![f64::NAN; m];
    omega[0] = lambda0;
    omega_prime[0] = 0.0;
    let c2 = rhs.pole_curvature(lambda0);
    // Taylor seed at phi = h/2
    let phi0 = 0.5 * h;
    let mut w = lambda0 + 0.5 * c2 * phi0 * phi0;
    let mut wp = c2 * phi0;
    let mut phi = phi0;
    let mut floor_hits = 0usize;
    let mut first_zero: Option<f64> = None;
    let mut blew_up = false;
    let step_to = |target: f64,
                       w: &mut f64,
                       wp: &mut f64,
                       phi: &mut f64,
                       fh: &mut usize,
                       fz: &mut Option<f64>,
                       blew: &mut bool| {
        let steps = substeps.max(1);
        let dt = (target - *phi) / steps as f64;
        for _ in 0..steps {
            if *blew {
                return;
            }
            let (y, yp, t) = (*w, *wp, *phi);
            let k1 = (yp, rhs.second(t, y, yp, fh));
            let k2 = (
                yp + 0.5 * dt * k1.1,
                rhs.second(t + 0.5 * dt, y + 0.5 * dt * k1.0, yp + 0.5 * dt * k1.1, fh),
            );
            let k3 = (
                yp + 0.5 * dt * k2.1,
                rhs.second(t + 0.5 * dt, y + 0.5 * dt * k2.0, yp + 0.5 * dt * k2.1, fh),
            );
            let k4 = (
                yp + dt * k3.1,
                rhs.second(t + dt, y + dt * k3.0, yp + dt * k3.1, fh),
            );
            let w_new = y + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            let wp_new = yp + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
            if !w_new.is_finite() || w_new.abs() > cap {
                *blew = true;
                return;
            }
            if fz.is_none() && w_new * y < 0.0 {
                // linear interpolation of the crossing position
                *fz = Some(t + dt * y / (y - w_new));
            }
            *w = w_new;
            *wp = wp_new;
            *phi = t + dt;
        }
        *phi = target;
    };
    for j in 1..m {
        step_to(
            grid.phi(j),
            &mut w,
            &mut wp,
            &mut phi,
            &mut floor_hits,
            &mut first_zero,
            &mut blew_up,
        );
        omega[j] = w;
        omega_prime[j] = wp;
        if blew_up {
            break;
        }
    }
    Trajectory {
        omega,
        omega_prime,
        first_zero,
        end_value: w,
        floor_hits,
        blew_up,
    }
}

/// Shooting indicator: positive when the trajectory stays positive through
/// the equator, negative when it crosses zero early; continuous through
/// the target (both branches vanish there).
fn indicator(traj: &Trajectory) -> f64 {
    if traj.blew_up {
        return 1e10;
    }
    match traj.first_zero {
        Some(phi_c) => -(FRAC_PI_2 - phi_c).max(0.0) - 1e-300,
        None => traj.end_value,
    }
}

fn bisect_parameter<F: FnMut(f64) -> f64>(
    mut s: F,
    mut lo: f64,
    mut hi: f64,
    mut s_lo: f64,
    settings: &ShootSettings,
) -> Result<f64, ShootError> {
    // invariant: sign(s(lo)) != sign(s(hi))
    let mut result = None;
    for _ in 0..settings.max_iter {
        let mid = 0.5 * (lo + hi);
        if (hi - lo) <= settings.tol_param * mid.abs().max(1.0) {
            result = Some(mid);
            break;
        }
        let s_mid = s(mid);
        if s_mid == 0.0 {
            return Ok(mid);
        }
        if (s_mid < 0.0) == (s_lo < 0.0) {
            lo = mid;
            s_lo = s_mid;
        } else {
            hi = mid;
        }
    }
    let mut x = result.ok_or(ShootError::NonConvergence(settings.max_iter))?;
    // Secant polish: the bisected parameter leaves an end value of order
    // tol_param, which the second-difference residual divides by h^2;
    // a few secant steps push it to rounding level.
    let mut x_prev = lo;
    let mut f_prev = s(x_prev);
    let mut f_x = s(x);
    for _ in 0..8 {
        if f_x == 0.0 || (f_x - f_prev) == 0.0 {
            break;
        }
        let x_next = x - f_x * (x - x_prev) / (f_x - f_prev);
        if !x_next.is_finite() || x_next <= 0.0 {
            break;
        }
        let f_next = s(x_next);
        if f_next.abs() >= f_x.abs() {
            break;
        }
        x_prev = x;
        f_prev = f_x;
        x = x_next;
        f_x = f_next;
    }
    Ok(x)
}

/// Scans a geometric parameter range for the smallest sign-change bracket
/// of the shooting map (minimal-solution tie-breaking).
fn scan_bracket<F: FnMut(f64) -> f64>(
    mut s: F,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<(f64, f64, f64), ShootError> {
    let mut prev = lo;
    let mut s_prev = s(lo);
    for i in 1..=points {
        let x = lo * (hi / lo).powf(i as f64 / points as f64);
        let s_x = s(x);
        if s_prev != 0.0 && s_x != 0.0 && (s_prev < 0.0) != (s_x < 0.0) {
            return Ok((prev, x, s_prev));
        }
        prev = x;
        s_prev = s_x;
    }
    Err(ShootError::NoBracket { lo, hi })
}

/// Positive decreasing solution of the hemisphere profile equation with
/// `beta = beta_q`, found by shooting on the pole value.
pub fn solve_profile(
    params: &ProblemParams,
    grid: &SphericalGrid,
    settings: &ShootSettings,
) -> Result<Profile, ShootError> {
    params.require_singular_range()?;
    let beta = exponents::beta_q(params)?;
    let c = exponents::const_solution(params)?;
    let rhs = Rhs::for_absorption(params, beta, settings.reg_eps);
    let shoot = |lam0: f64| indicator(&integrate(&rhs, lam0, grid, settings.ode_steps_per_node));
    let (lo, hi, s_lo) = scan_bracket(shoot, 1e-3 * c, 1e3 * c, 120)?;
    let lambda0 = bisect_parameter(shoot, lo, hi, s_lo, settings)?;
    let traj = integrate(&rhs, lambda0, grid, settings.ode_steps_per_node);
    if traj.blew_up || traj.omega.iter().any(|v| !v.is_finite()) {
        return Err(ShootError::NonFinite);
    }
    let mut omega = traj.omega;
    let mut omega_prime = traj.omega_prime;
    // Dirichlet value at the equator is exact by construction of the target.
    if omega[grid.m - 1].abs() > settings.tol_boundary.max(1e3 * settings.tol_param * c) {
        return Err(ShootError::NonConvergence(settings.max_iter));
    }
    omega[grid.m - 1] = 0.0;
    omega_prime[0] = 0.0;
    let mut profile = Profile {
        beta,
        omega,
        omega_prime,
        residual_norm: 0.0,
        lambda0,
        floor_hits: traj.floor_hits,
    };
    profile.residual_norm = residual_sup(&profile_residual(&profile, params, grid)?);
    Ok(profile)
}

/// Exponent and profile of the positive p-harmonic spectral eigenproblem
/// on the hemisphere, normalized to `phi(0) = 1` (permitted by the
/// degree-(p-1) homogeneity).
pub fn solve_spectral(
    p: f64,
    n: u32,
    grid: &SphericalGrid,
    settings: &ShootSettings,
) -> Result<(f64, Profile), ShootError> {
    if n < 2 {
        return Err(ExponentError::BadDimension(n).into());
    }
    if !(p > 1.0) {
        return Err(ExponentError::BadGradientExponent(p).into());
    }
    let shoot = |beta: f64| {
        let rhs = Rhs::for_spectral(p, n, beta, settings.reg_eps);
        indicator(&integrate(&rhs, 1.0, grid, settings.ode_steps_per_node))
    };
    // For small beta the trajectory stays positive through the equator;
    // for large beta it oscillates and crosses early. Smallest bracket =
    // fundamental positive mode.
    let (lo, hi, s_lo) = scan_bracket(shoot, 0.02, 50.0, 240)?;
    let beta = bisect_parameter(shoot, lo, hi, s_lo, settings)?;
    let rhs = Rhs::for_spectral(p, n, beta, settings.reg_eps);
    let traj = integrate(&rhs, 1.0, grid, settings.ode_steps_per_node);
    if traj.blew_up || traj.omega.iter().any(|v| !v.is_finite()) {
        return Err(ShootError::NonFinite);
    }
    let mut omega = traj.omega;
    let mut omega_prime = traj.omega_prime;
    omega[grid.m - 1] = 0.0;
    omega_prime[0] = 0.0;
    let profile = Profile {
        beta,
        omega,
        omega_prime,
        residual_norm: 0.0, // spectral residual tracked through the oracles
        lambda0: 1.0,
        floor_hits: traj.floor_hits,
    };
    Ok((beta, profile))
}

/// Pointwise discrete residual of the profile equation, centered
/// second-order differences; the singular `cot(phi) omega'` term is
/// replaced by its regular limit at the pole. The equator entry (Dirichlet
/// identity) is reported as zero.
pub fn profile_residual(
    profile: &Profile,
    params: &ProblemParams,
    grid: &SphericalGrid,
) -> Result<Vec<f64>, ShootError> {
    if grid.m < 11 {
        return Err(ShootError::GridTooCoarse(grid.m));
    }
    if profile.omega.len() != grid.m || profile.omega.iter().any(|v| !v.is_finite()) {
        return Err(ShootError::NonFinite);
    }
    params.require_supercritical_q()?;
    let nf = params.nf();
    let q = params.q;
    let beta = profile.beta;
    let lam = (nf - 1.0) * beta * beta;
    let m_exp = (nf - 2.0) / 2.0;
    let h = grid.h();
    let w = &profile.omega;
    let mut res = vec![0.0; grid.m];
    for j in 0..grid.m - 1 {
        let (wm, w0, wp_node) = if j == 0 {
            (w[1], w[0], w[1]) // symmetric ghost across the pole
        } else {
            (w[j - 1], w[j], w[j + 1])
        };
        let d1 = (wp_node - wm) / (2.0 * h);
        let d2 = (wp_node - 2.0 * w0 + wm) / (h * h);
        let q_mag = beta * beta * w0 * w0 + d1 * d1;
        let absorption = w0.abs().powf(q - 1.0) * w0;
        if q_mag == 0.0 {
            res[j] = absorption;
            continue;
        }
        let q_prime = 2.0 * beta * beta * w0 * d1 + 2.0 * d1 * d2;
        let cot_term = if j == 0 {
            (nf - 2.0) * d2
        } else {
            let phi = grid.phi(j);
            (nf - 2.0) * (phi.cos() / phi.sin()) * d1
        };
        let div = q_mag.powf(m_exp) * (d2 + cot_term) + m_exp * q_mag.powf(m_exp - 1.0) * q_prime * d1;
        res[j] = -div - lam * q_mag.powf(m_exp) * w0 + absorption;
    }
    Ok(res)
}

pub fn residual_sup(res: &[f64]) -> f64 {
    res.iter().fold(0.0f64, |a, v| a.max(v.abs()))
}

/// CSV export: `phi, omega, omega_prime`, 17 significant digits.
pub fn profile_csv(profile: &Profile, grid: &SphericalGrid) -> String {
    let mut out = String::from("phi,omega,omega_prime\n");
    for j in 0..grid.m {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_g17(grid.phi(j)),
            fmt_g17(profile.omega[j]),
            fmt_g17(profile.omega_prime[j])
        ));
    }
    out
}

/// Independent discretization of the same hemisphere problem: finite
/// differences in flux form plus a damped Newton iteration on the nodal
/// values (exact tridiagonal Jacobian for N = 2, lagged gradient factors
/// for N > 2). Shares nothing with the shooting path; used as the oracle
/// that pins the golden pole values.
pub mod collocation {
    use super::*;

    pub fn solve(
        params: &ProblemParams,
        grid: &SphericalGrid,
        max_iter: usize,
        tol: f64,
    ) -> Result<Profile, ShootError> {
        params.require_singular_range()?;
        let beta = exponents::beta_q(params)?;
        let c = exponents::const_solution(params)?;
        let nf = params.nf();
        let q = params.q;
        let lam = (nf - 1.0) * beta * beta;
        let m = grid.m;
        let h = grid.h();
        let m_exp = (nf - 2.0) / 2.0;
        // initial iterate: constant-solution amplitude tapered to the equator
        let mut w: Vec<f64> = (0..m).map(|j| c * grid.phi(j).cos()).collect();
        w[m - 1] = 0.0;

        // FV weights: integral of sin^{N-2} over each control interval
        let weight = |a: f64, b: f64| -> f64 {
            // 5-point Gauss-Legendre
            const X: [f64; 5] = [
                -0.906179845938664,
                -0.538469310105683,
                0.0,
                0.538469310105683,
                0.906179845938664,
            ];
            const W: [f64; 5] = [
                0.236926885056189,
                0.478628670499366,
                0.568888888888889,
                0.478628670499366,
                0.236926885056189,
            ];
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            let mut s = 0.0;
            for i in 0..5 {
                s += W[i] * (mid + half * X[i]).sin().powf(nf - 2.0);
            }
            s * half
        };
        let w_cell: Vec<f64> = (0..m - 1)
            .map(|j| {
                let a = if j == 0 { 0.0 } else { grid.phi(j) - 0.5 * h };
                let b = grid.phi(j) + 0.5 * h;
                weight(a, b)
            })
            .collect();
        let s_mid: Vec<f64> = (0..m - 1)
            .map(|j| (grid.phi(j) + 0.5 * h).sin().powf(nf - 2.0))
            .collect();

        for _outer in 0..max_iter {
            // lagged flux factors
            let qm_mid: Vec<f64> = (0..m - 1)
                .map(|j| {
                    let wl = w[j];
                    let wr = w[j + 1];
                    let wmid = 0.5 * (wl + wr);
                    let d = (wr - wl) / h;
                    let qv = beta * beta * wmid * wmid + d * d;
                    qv.max(1e-30).powf(m_exp)
                })
                .collect();
            let qm_node: Vec<f64> = (0..m)
                .map(|j| {
                    let d = if j == 0 {
                        0.0
                    } else if j == m - 1 {
                        (w[j] - w[j - 1]) / h
                    } else {
                        (w[j + 1] - w[j - 1]) / (2.0 * h)
                    };
                    let qv = beta * beta * w[j] * w[j] + d * d;
                    qv.max(1e-30).powf(m_exp)
                })
                .collect();
            let w_before = w.clone();
            // inner damped Newton on the absorption term, frozen factors
            for _inner in 0..max_iter {
                let unknowns = m - 1;
                let mut lower = vec![0.0; unknowns];
                let mut diag = vec![0.0; unknowns];
                let mut upper = vec![0.0; unknowns];
                let mut rhs_v = vec![0.0; unknowns];
                for j in 0..unknowns {
                    let flux_r = s_mid[j] * qm_mid[j] / h;
                    let flux_l = if j == 0 {
                        0.0
                    } else {
                        s_mid[j - 1] * qm_mid[j - 1] / h
                    };
                    let wr = if j + 1 <= m - 1 { w[j + 1] } else { 0.0 };
                    let wl = if j == 0 { w[j] } else { w[j - 1] };
                    let div = (flux_r * (wr - w[j]) - if j == 0 { 0.0 } else { flux_l * (w[j] - wl) })
                        / w_cell[j];
                    let f = -div - lam * qm_node[j] * w[j] + w[j].abs().powf(q - 1.0) * w[j];
                    rhs_v[j] = -f;
                    diag[j] = (flux_r + flux_l) / w_cell[j] - lam * qm_node[j]
                        + q * w[j].abs().powf(q - 1.0);
                    if j > 0 {
                        lower[j] = -flux_l / w_cell[j];
                    }
                    if j + 1 < unknowns {
                        upper[j] = -flux_r / w_cell[j];
                    }
                }
                let delta = thomas(&lower, &diag, &upper, &rhs_v);
                let mut step = 1.0;
                let base_norm: f64 = rhs_v.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                loop {
                    let trial: Vec<f64> = (0..unknowns).map(|j| w[j] + step * delta[j]).collect();
                    let trial_norm = residual_norm_frozen(
                        &trial, &s_mid, &qm_mid, &qm_node, &w_cell, h, lam, q, m,
                    );
                    if trial_norm <= base_norm || step < 1e-6 {
                        for j in 0..unknowns {
                            w[j] = trial[j];
                        }
                        break;
                    }
                    step *= 0.5;
                }
                let update: f64 = delta.iter().fold(0.0f64, |a, v| a.max(v.abs() * step));
                if update < tol {
                    break;
                }
            }
            let outer_change = w
                .iter()
                .zip(&w_before)
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
            if outer_change < tol || params.n == 2 {
                // N = 2 has constant flux factors: one outer pass is exact
                break;
            }
        }
        let mut omega_prime = vec![0.0; m];
        for j in 1..m - 1 {
            omega_prime[j] = (w[j + 1] - w[j - 1]) / (2.0 * h);
        }
        omega_prime[m - 1] = (w[m - 1] - w[m - 2]) / h;
        let mut profile = Profile {
            beta,
            omega: w,
            omega_prime,
            residual_norm: 0.0,
            lambda0: 0.0,
            floor_hits: 0,
        };
        profile.lambda0 = profile.omega[0];
        profile.residual_norm = residual_sup(&profile_residual(&profile, params, grid)?);
        Ok(profile)
    }

    fn residual_norm_frozen(
        w_int: &[f64],
        s_mid: &[f64],
        qm_mid: &[f64],
        qm_node: &[f64],
        w_cell: &[f64],
        h: f64,
        lam: f64,
        q: f64,
        m: usize,
    ) -> f64 {
        let unknowns = m - 1;
        let at = |j: usize| -> f64 {
            if j >= unknowns {
                0.0
            } else {
                w_int[j]
            }
        };
        let mut sup = 0.0f64;
        for j in 0..unknowns {
            let flux_r = s_mid[j] * qm_mid[j] / h * (at(j + 1) - at(j));
            let flux_l = if j == 0 {
                0.0
            } else {
                s_mid[j - 1] * qm_mid[j - 1] / h * (at(j) - at(j - 1))
            };
            let div = (flux_r - flux_l) / w_cell[j];
            let f = -div - lam * qm_node[j] * at(j) + at(j).abs().powf(q - 1.0) * at(j);
            sup = sup.max(f.abs());
        }
        sup
    }

    fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = diag.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = upper[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - lower[i] * c[i - 1];
            if i < n - 1 {
                c[i] = upper[i] / m;
            }
            d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(n: u32, q: f64) -> ProblemParams {
        ProblemParams::new(n, q).unwrap()
    }

    #[test]
    fn startup_expansion_values() {
        let params = pp(2, 2.0);
        // (1 * (2*1)^0 - 4*1)/1 = -3
        let v = startup_expansion(1.0, 2.0, &params, ProfileKind::Absorption);
        assert!((v - (-3.0)).abs() < 1e-14);
        // constant solution has zero curvature at the pole
        let c = exponents::const_solution(&params).unwrap();
        let v = startup_expansion(c, 2.0, &params, ProfileKind::Absorption);
        assert!(v.abs() < 1e-12);
        // eigen mode p = N, beta = 1: curvature -1 matches cos(phi)
        let params3 = pp(3, 4.0);
        let v = startup_expansion(1.0, 1.0, &params3, ProfileKind::Spectral { p: 3.0 });
        assert!((v - (-1.0)).abs() < 1e-14);
    }

    #[test]
    fn residual_of_constant_profile_vanishes() {
        for &(n, q) in &[(2u32, 2.0), (3, 3.5), (4, 4.2)] {
            let params = pp(n, q);
            let grid = SphericalGrid::new(101).unwrap();
            let c = exponents::const_solution(&params).unwrap();
            let beta = exponents::beta_q(&params).unwrap();
            let profile = Profile {
                beta,
                omega: vec![c; grid.m],
                omega_prime: vec![0.0; grid.m],
                residual_norm: 0.0,
                lambda0: c,
                floor_hits: 0,
            };
            let res = profile_residual(&profile, &params, &grid).unwrap();
            assert!(residual_sup(&res) <= 1e-10 * c.powf(q));
        }
    }

    #[test]
    fn residual_of_zero_profile_is_zero() {
        let params = pp(3, 4.0);
        let grid = SphericalGrid::new(51).unwrap();
        let profile = Profile {
            beta: 1.5,
            omega: vec![0.0; grid.m],
            omega_prime: vec![0.0; grid.m],
            residual_norm: 0.0,
            lambda0: 0.0,
            floor_hits: 0,
        };
        let res = profile_residual(&profile, &params, &grid).unwrap();
        assert_eq!(residual_sup(&res), 0.0);
    }

    #[test]
    fn residual_of_cosine_matches_absorption_power() {
        // omega = cos(phi), beta = 1 makes the homogeneous spherical part
        // vanish (r^{-1} cos phi is N-harmonic); the residual is cos^q.
        let params = pp(3, 4.0);
        let grid = SphericalGrid::new(401).unwrap();
        let omega: Vec<f64> = (0..grid.m).map(|j| grid.phi(j).cos()).collect();
        let profile = Profile {
            beta: 1.0,
            omega,
            omega_prime: vec![0.0; grid.m],
            residual_norm: 0.0,
            lambda0: 1.0,
            floor_hits: 0,
        };
        let res = profile_residual(&profile, &params, &grid).unwrap();
        for j in 0..grid.m - 1 {
            let expect = grid.phi(j).cos().powf(params.q);
            assert!(
                (res[j] - expect).abs() < 5e-4,
                "j={j}: {} vs {}",
                res[j],
                expect
            );
        }
        assert!((res[0] - 1.0).abs() < 5e-5);
    }

    #[test]
    fn rejects_coarse_grid() {
        assert!(SphericalGrid::new(10).is_err());
        assert!(SphericalGrid::new(11).is_ok());
    }

    #[test]
    fn profile_n2_q2_positive_decreasing() {
        let params = pp(2, 2.0);
        let grid = SphericalGrid::new(1001).unwrap();
        let profile = solve_profile(&params, &grid, &ShootSettings::default()).unwrap();
        assert_eq!(profile.floor_hits, 0);
        for j in 0..grid.m - 1 {
            assert!(profile.omega[j] > 0.0, "omega[{j}] = {}", profile.omega[j]);
        }
        for j in 1..grid.m {
            assert!(profile.omega_prime[j] < 0.0);
        }
        assert_eq!(profile.omega[grid.m - 1], 0.0);
        // below the whole-sphere constant solution
        assert!(profile.lambda0 < exponents::const_solution(&params).unwrap());
    }

    #[test]
    fn profile_matches_collocation_oracle() {
        let params = pp(2, 2.0);
        let grid = SphericalGrid::new(2001).unwrap();
        let shot = solve_profile(&params, &grid, &ShootSettings::default()).unwrap();
        let coll = collocation::solve(&params, &grid, 200, 1e-12).unwrap();
        let rel = (shot.lambda0 - coll.lambda0).abs() / shot.lambda0;
        assert!(rel < 5e-4, "shoot {} colloc {}", shot.lambda0, coll.lambda0);
    }

    #[test]
    fn profile_n3_q4_positive_decreasing_with_orders() {
        let params = pp(3, 4.0);
        let mut norms = Vec::new();
        for &m in &[251usize, 501, 1001] {
            let grid = SphericalGrid::new(m).unwrap();
            let p = solve_profile(&params, &grid, &ShootSettings::default()).unwrap();
            for j in 0..m - 1 {
                assert!(p.omega[j] > 0.0);
            }
            norms.push(p.residual_norm);
        }
        for w in norms.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                (3.2..=4.8).contains(&ratio),
                "refinement ratio {ratio:.2} (norms {norms:?})"
            );
        }
    }

    #[test]
    fn spectral_conformal_case_recovers_cosine() {
        let grid = SphericalGrid::new(2001).unwrap();
        let (beta, profile) = solve_spectral(3.0, 3, &grid, &ShootSettings::default()).unwrap();
        assert!((beta - 1.0).abs() < 1e-4, "beta = {beta}");
        let sup = (0..grid.m)
            .map(|j| (profile.omega[j] - grid.phi(j).cos()).abs())
            .fold(0.0f64, f64::max);
        assert!(sup <= 1e-4, "sup distance {sup:.2e}");
        // eigenvalue consistency: lambda = beta (beta (p-1) + p - N) = N-1
        let lambda = beta * (beta * 2.0 + 0.0);
        assert!((lambda - 2.0).abs() < 1e-3, "lambda = {lambda}");
    }

    #[test]
    fn profile_near_critical_q() {
        // close to q_c the profile is shallow; only structure is asserted
        let params = pp(2, 2.9);
        let grid = SphericalGrid::new(801).unwrap();
        let profile = solve_profile(&params, &grid, &ShootSettings::default()).unwrap();
        for j in 0..grid.m - 1 {
            assert!(profile.omega[j] > 0.0);
        }
        for j in 1..grid.m {
            assert!(profile.omega_prime[j] < 0.0);
        }
    }

    #[test]
    fn spectral_linear_case() {
        let grid = SphericalGrid::new(1201).unwrap();
        let (beta, _) = solve_spectral(2.0, 3, &grid, &ShootSettings::default()).unwrap();
        assert!((beta - 2.0).abs() < 1e-3, "beta = {beta}");
    }

    #[test]
    fn spectral_two_dimensional_case() {
        let grid = SphericalGrid::new(1201).unwrap();
        let (beta, _) = solve_spectral(3.0, 2, &grid, &ShootSettings::default()).unwrap();
        let target = exponents::kv_root(3.0).unwrap();
        assert!((beta - target).abs() < 1e-3, "beta = {beta} vs {target}");
    }

    #[test]
    fn spectral_homogeneity() {
        // scaling the pole value must not move the located exponent
        let grid = SphericalGrid::new(801).unwrap();
        let settings = ShootSettings::default();
        let (beta_ref, _) = solve_spectral(3.0, 2, &grid, &settings).unwrap();
        for &c in &[0.5, 2.0, 10.0] {
            let shoot = |beta: f64| {
                let rhs = Rhs::for_spectral(3.0, 2, beta, settings.reg_eps);
                indicator(&integrate(&rhs, c, &grid, settings.ode_steps_per_node))
            };
            let (lo, hi, s_lo) = scan_bracket(shoot, 0.02, 50.0, 240).unwrap();
            let beta_c = bisect_parameter(shoot, lo, hi, s_lo, &settings).unwrap();
            assert!(
                (beta_c - beta_ref).abs() <= 10.0 * settings.tol_param * beta_ref + 1e-12,
                "beta({c}) = {beta_c} vs {beta_ref}"
            );
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let params = pp(2, 2.0);
        let grid = SphericalGrid::new(101).unwrap();
        let profile = solve_profile(&params, &grid, &ShootSettings::default()).unwrap();
        let csv = profile_csv(&profile, &grid);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "phi,omega,omega_prime");
        assert_eq!(csv.lines().count(), grid.m + 1);
    }
}
