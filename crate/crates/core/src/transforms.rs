//! Inversion maps, boundary reflection through graph charts, odd
//! extension, and the reflected quasilinear operator, with numeric
//! verification of conformal invariance and ellipticity.
//!
//! The reflection is built on nearest-point projection onto the chart and
//! validated against its operational contract: it is involutive, fixes the
//! boundary and swaps the two sides of the tube. Jacobians are computed by
//! forward-mode dual numbers pushed through the projection iteration, not
//! by differentiating a closed curvature formula.

use crate::util::SplitMix64;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransformError {
    #[error("inversion is singular at its center")]
    AtCenter,
    #[error("sample box must avoid the inversion center")]
    BoxContainsCenter,
    #[error("nearest-point projection failed to converge at {0:?}")]
    ProjectionFailure(Vec<f64>),
    #[error("point outside the tube of width {width}: signed distance {dist}")]
    OutsideTube { dist: f64, width: f64 },
    #[error("boundary trace {0:.3e} exceeds the odd-extension tolerance")]
    BoundaryTrace(f64),
    #[error("no tube width with verified ellipticity (reached {0:.3e})")]
    EllipticityFailure(f64),
}

/// Inversion `x -> center + power (x - center)/|x - center|^2`.
#[derive(Debug, Clone, Serialize)]
pub struct InversionSpec {
    pub center: Vec<f64>,
    pub power: f64,
}

impl InversionSpec {
    pub fn new(center: Vec<f64>, power: f64) -> Self {
        InversionSpec { center, power }
    }

    /// The involution mapping the half space onto the ball
    /// `{|x|^2 + x_N < 0}`: center `(0, ..., 0, -1)`, power 1.
    pub fn half_space_to_star_ball(n: usize) -> Self {
        let mut center = vec![0.0; n];
        center[n - 1] = -1.0;
        InversionSpec { center, power: 1.0 }
    }
}

pub fn invert(spec: &InversionSpec, x: &[f64]) -> Result<Vec<f64>, TransformError> {
    let d2: f64 = x
        .iter()
        .zip(&spec.center)
        .map(|(a, c)| (a - c) * (a - c))
        .sum();
    if d2 == 0.0 {
        return Err(TransformError::AtCenter);
    }
    Ok(x.iter()
        .zip(&spec.center)
        .map(|(a, c)| c + spec.power * (a - c) / d2)
        .collect())
}

pub struct ConformalReport {
    pub coarse: f64,
    pub fine: f64,
    pub order: f64,
}

/// Discrete N-Laplacian residual of `v` composed with the inversion, at FD
/// steps `h_fd` and `h_fd/2`; for N-harmonic `v` the conformal invariance
/// in dimension N drives the residual to zero at second order.
pub fn conformal_residual<V: Fn(&[f64]) -> f64>(
    spec: &InversionSpec,
    v: V,
    sample_points: &[Vec<f64>],
    p: f64,
    h_fd: f64,
) -> Result<ConformalReport, TransformError> {
    check_center_distance(spec, sample_points, h_fd)?;
    let composed = |x: &[f64]| -> f64 {
        let y = invert(spec, x).expect("center excluded");
        v(&y)
    };
    let sup = |step: f64| -> f64 {
        sample_points
            .iter()
            .map(|x| crate::fd::p_laplacian(&composed, x, p, step).abs())
            .fold(0.0f64, f64::max)
    };
    let coarse = sup(h_fd);
    let fine = sup(h_fd / 2.0);
    Ok(ConformalReport {
        coarse,
        fine,
        order: (coarse / fine).log2(),
    })
}

/// Residual order of `-div(|Dv|^(N-2) Dv) + w(x) |v|^(q-1) v` for
/// `v = u` composed with the inversion; the natural weight is
/// `|x - center|^(-2N)`, and a constant control weight shows the weight
/// matters.
pub fn weighted_equation_check<U, W>(
    spec: &InversionSpec,
    u: U,
    weight: W,
    sample_points: &[Vec<f64>],
    n: u32,
    q: f64,
    h_fd: f64,
) -> Result<ConformalReport, TransformError>
where
    U: Fn(&[f64]) -> f64,
    W: Fn(&[f64]) -> f64,
{
    check_center_distance(spec, sample_points, h_fd)?;
    let composed = |x: &[f64]| -> f64 {
        let y = invert(spec, x).expect("center excluded");
        u(&y)
    };
    let sup = |step: f64| -> f64 {
        sample_points
            .iter()
            .map(|x| crate::fd::absorption_residual(&composed, &weight, x, n as f64, q, step).abs())
            .fold(0.0f64, f64::max)
    };
    let coarse = sup(h_fd);
    let fine = sup(h_fd / 2.0);
    Ok(ConformalReport {
        coarse,
        fine,
        order: (coarse / fine).log2(),
    })
}

/// The natural weight of the inverted absorption equation.
pub fn inversion_weight(spec: &InversionSpec, n: u32) -> impl Fn(&[f64]) -> f64 + '_ {
    move |x: &[f64]| {
        let d2: f64 = x
            .iter()
            .zip(&spec.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        d2.powf(-(n as f64))
    }
}

fn check_center_distance(
    spec: &InversionSpec,
    points: &[Vec<f64>],
    h_fd: f64,
) -> Result<(), TransformError> {
    for x in points {
        let d2: f64 = x
            .iter()
            .zip(&spec.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        if d2.sqrt() < 4.0 * h_fd {
            return Err(TransformError::BoxContainsCenter);
        }
    }
    Ok(())
}

/// Forward-mode dual number: value plus one directional derivative.
#[derive(Debug, Clone, Copy)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    fn c(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
    fn add(self, o: Self) -> Self {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
    fn sub(self, o: Self) -> Self {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
    fn mul(self, o: Self) -> Self {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
    fn div(self, o: Self) -> Self {
        Dual {
            v: self.v / o.v,
            d: (self.d * o.v - self.v * o.d) / (o.v * o.v),
        }
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual {
            v: s,
            d: if s == 0.0 { 0.0 } else { self.d / (2.0 * s) },
        }
    }
}

/// Boundary graph chart `x_N = h(x')` with `h(0) = 0`, `Dh(0) = 0`:
/// flat or a radial polynomial `c2 |x'|^2 + c3 |x'|^3 + c4 |x'|^4`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub enum ChartShape {
    Flat,
    RadialPoly { c2: f64, c3: f64, c4: f64 },
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundaryChart {
    pub shape: ChartShape,
    pub tube_width: f64,
}

impl BoundaryChart {
    pub fn flat(tube_width: f64) -> Self {
        BoundaryChart {
            shape: ChartShape::Flat,
            tube_width,
        }
    }

    pub fn parabolic(curvature: f64, tube_width: f64) -> Self {
        BoundaryChart {
            shape: ChartShape::RadialPoly {
                c2: curvature,
                c3: 0.0,
                c4: 0.0,
            },
            tube_width,
        }
    }

    pub fn h(&self, xp: &[f64]) -> f64 {
        match self.shape {
            ChartShape::Flat => 0.0,
            ChartShape::RadialPoly { c2, c3, c4 } => {
                let rho2: f64 = xp.iter().map(|v| v * v).sum();
                let rho = rho2.sqrt();
                c2 * rho2 + c3 * rho2 * rho + c4 * rho2 * rho2
            }
        }
    }

    fn grad_h(&self, xp: &[f64]) -> Vec<f64> {
        match self.shape {
            ChartShape::Flat => vec![0.0; xp.len()],
            ChartShape::RadialPoly { c2, c3, c4 } => {
                let rho2: f64 = xp.iter().map(|v| v * v).sum();
                let rho = rho2.sqrt();
                let dh_drho2 = c2 + 1.5 * c3 * rho + 2.0 * c4 * rho2;
                xp.iter().map(|v| 2.0 * v * dh_drho2).collect()
            }
        }
    }

    fn hess_h(&self, xp: &[f64]) -> Vec<Vec<f64>> {
        let d = xp.len();
        match self.shape {
            ChartShape::Flat => vec![vec![0.0; d]; d],
            ChartShape::RadialPoly { c2, c3, c4 } => {
                let rho2: f64 = xp.iter().map(|v| v * v).sum();
                let rho = rho2.sqrt();
                let f1 = c2 + 1.5 * c3 * rho + 2.0 * c4 * rho2;
                let f2 = if rho == 0.0 {
                    2.0 * c4
                } else {
                    0.75 * c3 / rho + 2.0 * c4
                };
                let mut hess = vec![vec![0.0; d]; d];
                for i in 0..d {
                    for j in 0..d {
                        hess[i][j] =
                            4.0 * xp[i] * xp[j] * f2 + if i == j { 2.0 * f1 } else { 0.0 };
                    }
                }
                hess
            }
        }
    }

    fn h_dual(&self, xp: &[Dual]) -> Dual {
        match self.shape {
            ChartShape::Flat => Dual::c(0.0),
            ChartShape::RadialPoly { c2, c3, c4 } => {
                let mut rho2 = Dual::c(0.0);
                for v in xp {
                    rho2 = rho2.add(v.mul(*v));
                }
                let rho = rho2.sqrt();
                Dual::c(c2)
                    .mul(rho2)
                    .add(Dual::c(c3).mul(rho2).mul(rho))
                    .add(Dual::c(c4).mul(rho2).mul(rho2))
            }
        }
    }

    fn grad_h_dual(&self, xp: &[Dual]) -> Vec<Dual> {
        match self.shape {
            ChartShape::Flat => vec![Dual::c(0.0); xp.len()],
            ChartShape::RadialPoly { c2, c3, c4 } => {
                let mut rho2 = Dual::c(0.0);
                for v in xp {
                    rho2 = rho2.add(v.mul(*v));
                }
                let rho = rho2.sqrt();
                let dh = Dual::c(c2)
                    .add(Dual::c(1.5 * c3).mul(rho))
                    .add(Dual::c(2.0 * c4).mul(rho2));
                xp.iter().map(|v| Dual::c(2.0).mul(*v).mul(dh)).collect()
            }
        }
    }
}

/// Nearest boundary point of `x`: damped Newton on the first-order
/// optimality of the squared distance to the graph.
pub fn project(chart: &BoundaryChart, x: &[f64]) -> Result<Vec<f64>, TransformError> {
    let n = x.len();
    let d = n - 1;
    let xp = &x[..d];
    let xn = x[n - 1];
    if chart.shape == ChartShape::Flat {
        let mut xi = x.to_vec();
        xi[n - 1] = 0.0;
        return Ok(xi);
    }
    let mut xi: Vec<f64> = xp.to_vec();
    for _ in 0..80 {
        let h = chart.h(&xi);
        let g = chart.grad_h(&xi);
        let grad: Vec<f64> = (0..d).map(|i| xi[i] - xp[i] + (h - xn) * g[i]).collect();
        let gnorm = grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gnorm < 1e-14 * (1.0 + xn.abs()) {
            break;
        }
        let hess_h = chart.hess_h(&xi);
        let mut mat = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..d {
                mat[i][j] = g[i] * g[j] + (h - xn) * hess_h[i][j] + if i == j { 1.0 } else { 0.0 };
            }
        }
        let step = solve_dense(&mut mat, &grad)
            .ok_or_else(|| TransformError::ProjectionFailure(x.to_vec()))?;
        let mut damping = 1.0;
        let mut improved = false;
        while damping >= 1e-6 {
            let trial: Vec<f64> = (0..d).map(|i| xi[i] - damping * step[i]).collect();
            let h_t = chart.h(&trial);
            let g_t = chart.grad_h(&trial);
            let gn_t = (0..d)
                .map(|i| (trial[i] - xp[i] + (h_t - xn) * g_t[i]).abs())
                .fold(0.0f64, f64::max);
            if gn_t < gnorm {
                xi = trial;
                improved = true;
                break;
            }
            damping *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let h = chart.h(&xi);
    let g = chart.grad_h(&xi);
    let gnorm = (0..d)
        .map(|i| (xi[i] - xp[i] + (h - xn) * g[i]).abs())
        .fold(0.0f64, f64::max);
    if gnorm > 1e-10 * (1.0 + xn.abs()) {
        return Err(TransformError::ProjectionFailure(x.to_vec()));
    }
    let mut out = xi;
    out.push(h);
    Ok(out)
}

/// Signed distance to the chart, positive on the domain side `x_N > h(x')`.
pub fn signed_distance(chart: &BoundaryChart, x: &[f64]) -> Result<f64, TransformError> {
    let xi = project(chart, x)?;
    let dist: f64 = x
        .iter()
        .zip(&xi)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let side = x[x.len() - 1] - chart.h(&x[..x.len() - 1]);
    Ok(if side >= 0.0 { dist } else { -dist })
}

/// Reflection through the boundary, `psi(x) = xi_x + rho_dot nu(xi_x)`
/// with the outward normal `nu = (Dh, -1)/sqrt(1+|Dh|^2)`: involutive,
/// fixes the boundary, swaps the two sides of the tube.
pub fn reflect(chart: &BoundaryChart, x: &[f64]) -> Result<Vec<f64>, TransformError> {
    let rho = signed_distance(chart, x)?;
    if rho.abs() > chart.tube_width {
        return Err(TransformError::OutsideTube {
            dist: rho,
            width: chart.tube_width,
        });
    }
    let n = x.len();
    let d = n - 1;
    let xi = project(chart, x)?;
    let g = chart.grad_h(&xi[..d]);
    let norm = (1.0 + g.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let mut out = vec![0.0; n];
    for i in 0..d {
        out[i] = xi[i] + rho * g[i] / norm;
    }
    out[n - 1] = xi[n - 1] - rho / norm;
    Ok(out)
}

/// Jacobian of the reflection by forward-mode duals (one pass per input
/// direction).
pub fn reflect_jacobian(chart: &BoundaryChart, x: &[f64]) -> Result<Vec<Vec<f64>>, TransformError> {
    let n = x.len();
    let mut jac = vec![vec![0.0; n]; n];
    for dir in 0..n {
        let xd: Vec<Dual> = (0..n)
            .map(|i| Dual {
                v: x[i],
                d: if i == dir { 1.0 } else { 0.0 },
            })
            .collect();
        let column = reflect_dual(chart, &xd)?;
        for row in 0..n {
            jac[row][dir] = column[row].d;
        }
    }
    Ok(jac)
}

fn reflect_dual(chart: &BoundaryChart, x: &[Dual]) -> Result<Vec<Dual>, TransformError> {
    let n = x.len();
    let d = n - 1;
    let x_val: Vec<f64> = x.iter().map(|v| v.v).collect();
    let xi_val = project(chart, &x_val)?;
    let mut xi: Vec<Dual> = (0..d).map(|i| Dual::c(xi_val[i])).collect();
    match chart.shape {
        ChartShape::Flat => {
            for i in 0..d {
                xi[i] = x[i];
            }
        }
        ChartShape::RadialPoly { .. } => {
            // the value part is converged; iterate the optimality map in
            // dual arithmetic with the frozen Newton matrix to converge
            // the derivative part
            let g_val = chart.grad_h(&xi_val[..d]);
            let hess_val = chart.hess_h(&xi_val[..d]);
            let h_val = xi_val[d];
            let mut mat = vec![vec![0.0; d]; d];
            for i in 0..d {
                for j in 0..d {
                    mat[i][j] = g_val[i] * g_val[j]
                        + (h_val - x_val[n - 1]) * hess_val[i][j]
                        + if i == j { 1.0 } else { 0.0 };
                }
            }
            let inv =
                invert_dense(&mat).ok_or_else(|| TransformError::ProjectionFailure(x_val.clone()))?;
            for _ in 0..50 {
                let h = chart.h_dual(&xi);
                let g = chart.grad_h_dual(&xi);
                let grad: Vec<Dual> = (0..d)
                    .map(|i| xi[i].sub(x[i]).add(h.sub(x[n - 1]).mul(g[i])))
                    .collect();
                let mut moved = 0.0f64;
                for i in 0..d {
                    let mut delta = Dual::c(0.0);
                    for j in 0..d {
                        delta = delta.add(Dual::c(inv[i][j]).mul(grad[j]));
                    }
                    xi[i] = xi[i].sub(delta);
                    moved = moved.max(delta.v.abs().max(delta.d.abs()));
                }
                if moved < 1e-15 {
                    break;
                }
            }
        }
    }
    let h = chart.h_dual(&xi);
    let g = chart.grad_h_dual(&xi);
    let mut norm2 = Dual::c(1.0);
    for v in &g {
        norm2 = norm2.add(v.mul(*v));
    }
    let norm = norm2.sqrt();
    // x = xi - rho_dot nu  =>  rho_dot = (xi - x) . nu
    let mut rho_dot = Dual::c(0.0);
    for i in 0..d {
        rho_dot = rho_dot.add(xi[i].sub(x[i]).mul(g[i].div(norm)));
    }
    rho_dot = rho_dot.add(h.sub(x[n - 1]).mul(Dual::c(-1.0).div(norm)));
    let mut out = Vec::with_capacity(n);
    for i in 0..d {
        out.push(xi[i].add(rho_dot.mul(g[i].div(norm))));
    }
    out.push(h.add(rho_dot.mul(Dual::c(-1.0).div(norm))));
    Ok(out)
}

fn solve_dense(mat: &mut [Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut b = rhs.to_vec();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if mat[row][col].abs() > mat[piv][col].abs() {
                piv = row;
            }
        }
        if mat[piv][col].abs() < 1e-300 {
            return None;
        }
        mat.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = mat[row][col] / mat[col][col];
            for k in col..n {
                mat[row][k] -= f * mat[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for k in row + 1..n {
            s -= mat[row][k] * x[k];
        }
        x[row] = s / mat[row][row];
    }
    Some(x)
}

fn invert_dense(mat: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = mat.len();
    let mut out = vec![vec![0.0; n]; n];
    for col in 0..n {
        let mut m = mat.to_vec();
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        let x = solve_dense(&mut m, &e)?;
        for row in 0..n {
            out[row][col] = x[row];
        }
    }
    Some(out)
}

fn det(mat: &[Vec<f64>]) -> f64 {
    let n = mat.len();
    let mut m = mat.to_vec();
    let mut sign = 1.0;
    let mut d = 1.0;
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if m[row][col].abs() > m[piv][col].abs() {
                piv = row;
            }
        }
        if m[piv][col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            m.swap(col, piv);
            sign = -sign;
        }
        d *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    sign * d
}

/// Odd extension across the boundary: `v` lives on the domain side of the
/// tube and (approximately) vanishes on the boundary;
/// `tilde v(x) = -v(psi(x))` on the far side.
pub fn extend_odd<'a, V: Fn(&[f64]) -> f64 + 'a>(
    chart: &'a BoundaryChart,
    v: V,
    boundary_tol: f64,
) -> impl Fn(&[f64]) -> Result<f64, TransformError> + 'a {
    move |x: &[f64]| {
        let rho = signed_distance(chart, x)?;
        if rho.abs() <= 1e-13 {
            let val = v(x);
            if val.abs() > boundary_tol {
                return Err(TransformError::BoundaryTrace(val));
            }
            return Ok(0.0);
        }
        if rho > 0.0 {
            Ok(v(x))
        } else {
            let mirrored = reflect(chart, x)?;
            Ok(-v(&mirrored))
        }
    }
}

/// Reflected flux `A(x, eta) = |det Dpsi| |Dpsi eta|^(p-2)
/// (Dpsi)^T Dpsi eta` on the far side of the tube; on the boundary and the
/// domain side it reduces exactly to the p-Laplacian flux
/// `|eta|^(p-2) eta`.
pub fn extended_operator(
    chart: &BoundaryChart,
    p: f64,
    x: &[f64],
    eta: &[f64],
) -> Result<Vec<f64>, TransformError> {
    let n = x.len();
    let eta_norm2: f64 = eta.iter().map(|v| v * v).sum();
    if eta_norm2 == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let rho = signed_distance(chart, x)?;
    if rho >= 0.0 {
        let f = eta_norm2.powf((p - 2.0) / 2.0);
        return Ok(eta.iter().map(|v| f * v).collect());
    }
    let jac = reflect_jacobian(chart, x)?;
    let b = det(&jac).abs();
    let mut m_eta = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            m_eta[i] += jac[i][j] * eta[j];
        }
    }
    let m_eta_norm2: f64 = m_eta.iter().map(|v| v * v).sum();
    let f = b * m_eta_norm2.powf((p - 2.0) / 2.0);
    let mut out = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            out[i] += f * jac[j][i] * m_eta[j];
        }
    }
    Ok(out)
}

/// Measured ellipticity constants on a sample of the outer tube; the tube
/// is halved until the chain `Gamma >= b >= gamma > 0` holds.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    /// lower Rayleigh constant
    pub gamma: f64,
    /// upper row-sum constant
    pub gamma_cap: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub width: f64,
    pub samples: usize,
}

pub fn ellipticity_scan(
    chart: &BoundaryChart,
    p: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<EllipticityReport, TransformError> {
    let mut width = chart.tube_width;
    let mut rng = SplitMix64::new(seed);
    // for each sampled eta, probe xi random, parallel and orthogonal, so
    // the sampled Rayleigh minimum is tight for the isotropic case
    let dirs: Vec<(Vec<f64>, Vec<Vec<f64>>)> = (0..16)
        .map(|_| {
            let eta: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let xi: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let eta_n2: f64 = eta.iter().map(|v| v * v).sum();
            let dot: f64 = xi.iter().zip(&eta).map(|(a, b)| a * b).sum();
            let perp: Vec<f64> = xi
                .iter()
                .zip(&eta)
                .map(|(x, e)| x - dot / eta_n2 * e)
                .collect();
            (eta.clone(), vec![xi, eta.clone(), perp])
        })
        .collect();
    for _ in 0..40 {
        let scan_chart = BoundaryChart {
            shape: chart.shape,
            tube_width: width,
        };
        let mut rng = SplitMix64::new(seed ^ 0x9e37_79b9);
        let mut gamma = f64::INFINITY;
        let mut gamma_cap = 0.0f64;
        let mut b_min = f64::INFINITY;
        let mut b_max = 0.0f64;
        for _ in 0..samples {
            let mut x = vec![0.0; n];
            for v in x.iter_mut().take(n - 1) {
                *v = rng.range(-0.5, 0.5);
            }
            let depth = rng.range(0.05 * width, 0.95 * width);
            let h = scan_chart.h(&x[..n - 1]);
            x[n - 1] = h - depth;
            let jac = match reflect_jacobian(&scan_chart, &x) {
                Ok(j) => j,
                Err(_) => continue,
            };
            let b = det(&jac).abs();
            b_min = b_min.min(b);
            b_max = b_max.max(b);
            for (eta, xis) in &dirs {
                let d_op = operator_eta_jacobian(&jac, b, p, eta);
                let eta_n2: f64 = eta.iter().map(|v| v * v).sum();
                let scale = eta_n2.powf((p - 2.0) / 2.0);
                let mut abs_sum = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        abs_sum += d_op[i][j].abs();
                    }
                }
                gamma_cap = gamma_cap.max(abs_sum / scale);
                for xi in xis {
                    let xi_n2: f64 = xi.iter().map(|v| v * v).sum();
                    if xi_n2 == 0.0 {
                        continue;
                    }
                    let mut quad = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            quad += xi[i] * d_op[i][j] * xi[j];
                        }
                    }
                    gamma = gamma.min(quad / (scale * xi_n2));
                }
            }
        }
        if gamma > 0.0
            && gamma <= gamma_cap
            && b_min >= gamma - 1e-12
            && b_max <= gamma_cap + 1e-12
        {
            return Ok(EllipticityReport {
                gamma,
                gamma_cap,
                b_min,
                b_max,
                width,
                samples,
            });
        }
        width *= 0.5;
        if width < 1e-8 {
            break;
        }
    }
    Err(TransformError::EllipticityFailure(width))
}

/// `d/d eta` of `b |M eta|^(p-2) M^T M eta`, assembled as
/// `b |M eta|^(p-4) (|M eta|^2 B + (p-2) (B eta)(B eta)^T)`, `B = M^T M`.
fn operator_eta_jacobian(jac: &[Vec<f64>], b: f64, p: f64, eta: &[f64]) -> Vec<Vec<f64>> {
    let n = eta.len();
    let mut big_b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                big_b[i][j] += jac[k][i] * jac[k][j];
            }
        }
    }
    let mut b_eta = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            b_eta[i] += big_b[i][j] * eta[j];
        }
    }
    let m_eta_n2: f64 = (0..n).map(|i| b_eta[i] * eta[i]).sum();
    let mut out = vec![vec![0.0; n]; n];
    let f = b * m_eta_n2.powf((p - 4.0) / 2.0);
    for i in 0..n {
        for j in 0..n {
            out[i][j] = f * (m_eta_n2 * big_b[i][j] + (p - 2.0) * b_eta[i] * b_eta[j]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invert_examples() {
        let spec = InversionSpec::half_space_to_star_ball(2);
        let y = invert(&spec, &[0.0, 1.0]).unwrap();
        assert!((y[0] - 0.0).abs() < 1e-15 && (y[1] + 0.5).abs() < 1e-15);
        // unit-power inversion fixes its unit sphere
        let x = [0.6, -1.8]; // |x - center| = 1
        let y = invert(&spec, &x).unwrap();
        assert!((y[0] - x[0]).abs() < 1e-14 && (y[1] - x[1]).abs() < 1e-14);
        assert!(invert(&spec, &[0.0, -1.0]).is_err());
    }

    #[test]
    fn plane_maps_to_star_ball_boundary() {
        let spec = InversionSpec::half_space_to_star_ball(3);
        let mut rng = SplitMix64::new(7);
        for _ in 0..20 {
            let x = [rng.range(-3.0, 3.0), rng.range(-3.0, 3.0), 0.0];
            let y = invert(&spec, &x).unwrap();
            let check: f64 = y.iter().map(|v| v * v).sum::<f64>() + y[2];
            assert!(check.abs() < 1e-12, "image off the ball boundary: {check:e}");
        }
    }

    #[test]
    fn inversion_involution_on_samples() {
        let spec = InversionSpec::half_space_to_star_ball(3);
        let mut rng = SplitMix64::new(11);
        for _ in 0..1000 {
            let x = [
                rng.range(-2.0, 2.0),
                rng.range(-2.0, 2.0),
                rng.range(0.1, 2.0),
            ];
            let y = invert(&spec, &invert(&spec, &x).unwrap()).unwrap();
            for i in 0..3 {
                assert!((y[i] - x[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn conformal_invariance_of_kernel() {
        let spec = InversionSpec::half_space_to_star_ball(3);
        let v = |y: &[f64]| {
            let r2: f64 = y.iter().map(|v| v * v).sum();
            y[2] / r2
        };
        let pts: Vec<Vec<f64>> = vec![
            vec![0.04, 0.02, 0.52],
            vec![-0.08, 0.06, 0.62],
            vec![0.1, -0.04, 0.45],
        ];
        let rep = conformal_residual(&spec, v, &pts, 3.0, 2e-3).unwrap();
        assert!(rep.order >= 1.8, "order {:.2}", rep.order);
        let constant = |_: &[f64]| 3.5;
        let rep_c = conformal_residual(&spec, constant, &pts, 3.0, 2e-3).unwrap();
        assert_eq!(rep_c.coarse, 0.0);
        // negative control: a smooth non-harmonic field keeps a residual
        let non_harmonic = |y: &[f64]| y.iter().map(|v| v * v).sum::<f64>();
        let rep_n = conformal_residual(&spec, non_harmonic, &pts, 3.0, 2e-3).unwrap();
        assert!(rep_n.fine.abs() > 0.1, "control must not vanish");
    }

    #[test]
    fn weighted_equation_of_inverted_separable_solution() {
        // u = r^{-beta_q} omega(phi) solves the half-space equation; its
        // inversion satisfies the weighted equation with |x - center|^{-2N}
        use crate::exponents::{self, ProblemParams};
        use crate::sphere_ode::{self, ShootSettings, SphericalGrid};
        let params = ProblemParams::new(3, 4.0).unwrap();
        let beta = exponents::beta_q(&params).unwrap();
        let sgrid = SphericalGrid::new(2001).unwrap();
        let profile =
            sphere_ode::solve_profile(&params, &sgrid, &ShootSettings::default()).unwrap();
        let u = move |y: &[f64]| {
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let phi = (y[2] / r).clamp(-1.0, 1.0).acos();
            r.powf(-beta) * profile.interpolate(&sgrid, phi)
        };
        let spec = InversionSpec::half_space_to_star_ball(3);
        // sample points inside the star ball, with margin for the stencil
        let pts: Vec<Vec<f64>> = vec![
            vec![0.05, 0.03, -0.5],
            vec![-0.08, 0.04, -0.6],
            vec![0.1, -0.06, -0.42],
        ];
        let rep = weighted_equation_check(
            &spec,
            &u,
            inversion_weight(&spec, 3),
            &pts,
            3,
            4.0,
            1e-2,
        )
        .unwrap();
        assert!(rep.order >= 1.5, "weighted residual order {:.2}", rep.order);
        // zero solution: identically zero residual
        let rep0 = weighted_equation_check(
            &spec,
            |_: &[f64]| 0.0,
            inversion_weight(&spec, 3),
            &pts,
            3,
            4.0,
            1e-2,
        )
        .unwrap();
        assert_eq!(rep0.coarse, 0.0);
        // control: the unweighted equation is NOT satisfied
        let rep1 =
            weighted_equation_check(&spec, &u, |_: &[f64]| 1.0, &pts, 3, 4.0, 1e-2).unwrap();
        assert!(
            rep1.fine.abs() > 0.5 * rep1.coarse.abs() && rep1.fine.abs() > 1e-2,
            "control residual must not vanish: coarse {:.3e} fine {:.3e}",
            rep1.coarse,
            rep1.fine
        );
    }

    #[test]
    fn flat_reflection_is_mirror() {
        let chart = BoundaryChart::flat(1.0);
        let y = reflect(&chart, &[0.3, -0.2, 0.7]).unwrap();
        assert!((y[0] - 0.3).abs() < 1e-15);
        assert!((y[1] + 0.2).abs() < 1e-15);
        assert!((y[2] + 0.7).abs() < 1e-15);
    }

    #[test]
    fn parabolic_reflection_contract() {
        let chart = BoundaryChart::parabolic(0.5, 0.4);
        // boundary points are fixed
        let xp = [0.3f64, -0.1];
        let rho2: f64 = xp.iter().map(|v| v * v).sum();
        let on_boundary = [xp[0], xp[1], 0.5 * rho2];
        let y = reflect(&chart, &on_boundary).unwrap();
        for i in 0..3 {
            assert!((y[i] - on_boundary[i]).abs() < 1e-12);
        }
        // involution on tube samples
        let mut rng = SplitMix64::new(3);
        for _ in 0..1000 {
            let xp = [rng.range(-0.4, 0.4), rng.range(-0.4, 0.4)];
            let h = 0.5 * (xp[0] * xp[0] + xp[1] * xp[1]);
            let x = [xp[0], xp[1], h + rng.range(-0.25, 0.25)];
            let y = reflect(&chart, &x).unwrap();
            let z = reflect(&chart, &y).unwrap();
            for i in 0..3 {
                assert!(
                    (z[i] - x[i]).abs() < 1e-10,
                    "involution off by {:e}",
                    (z[i] - x[i]).abs()
                );
            }
        }
        // small-depth reflection above the chart apex is tangent to the
        // flat mirror
        let delta = 1e-3;
        let y = reflect(&chart, &[0.0, 0.0, delta]).unwrap();
        assert!((y[2] + delta).abs() < 5.0 * delta * delta);
    }

    #[test]
    fn odd_extension_flat_matches_global_formula() {
        let chart = BoundaryChart::flat(1.0);
        let v = |x: &[f64]| x[2] * (1.0 + x[0] - 0.5 * x[1]);
        let ext = extend_odd(&chart, v, 1e-12);
        let below = [0.2, -0.3, -0.4];
        let expect = below[2] * (1.0 + below[0] - 0.5 * below[1]);
        assert!((ext(&below).unwrap() - expect).abs() < 1e-13);
        // the half-space kernel extends by its own global formula
        let kernel = |x: &[f64]| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            x[2] / r2
        };
        let ext_k = extend_odd(&chart, kernel, 1e-12);
        let x = [0.4, 0.1, -0.3];
        let r2: f64 = x.iter().map(|v| v * v).sum();
        assert!((ext_k(&x).unwrap() - x[2] / r2).abs() < 1e-13);
        // rejects data with a nonvanishing boundary trace
        let bad = |_: &[f64]| 1.0;
        let ext_bad = extend_odd(&chart, bad, 1e-12);
        assert!(matches!(
            ext_bad(&[0.1, 0.1, 0.0]),
            Err(TransformError::BoundaryTrace(_))
        ));
    }

    #[test]
    fn odd_extension_curved_is_continuous() {
        let chart = BoundaryChart::parabolic(0.4, 0.3);
        let v = |x: &[f64]| {
            let side = x[2] - 0.4 * (x[0] * x[0] + x[1] * x[1]);
            side * (1.0 + 0.3 * x[0])
        };
        let ext = extend_odd(&chart, v, 1e-8);
        let mut rng = SplitMix64::new(5);
        for _ in 0..50 {
            let xp = [rng.range(-0.3, 0.3), rng.range(-0.3, 0.3)];
            let h = 0.4 * (xp[0] * xp[0] + xp[1] * xp[1]);
            let d = 1e-5;
            let above = ext(&[xp[0], xp[1], h + d]).unwrap();
            let below = ext(&[xp[0], xp[1], h - d]).unwrap();
            assert!((above - below).abs() < 1e-4 * (1.0 + above.abs()));
        }
    }

    #[test]
    fn extended_operator_identity_cases() {
        let chart = BoundaryChart::flat(1.0);
        let eta = [0.3, -0.5, 0.9];
        let p = 3.4;
        let out = extended_operator(&chart, p, &[0.1, 0.2, -0.4], &eta).unwrap();
        let f = eta.iter().map(|v| v * v).sum::<f64>().powf((p - 2.0) / 2.0);
        for i in 0..3 {
            assert!((out[i] - f * eta[i]).abs() < 1e-12);
        }
        let out0 = extended_operator(&chart, p, &[0.1, 0.2, -0.4], &[0.0; 3]).unwrap();
        assert!(out0.iter().all(|v| *v == 0.0));
        // curved chart, boundary point: Dpsi is a symmetry there
        let chart = BoundaryChart::parabolic(0.5, 0.4);
        let xp = [0.2f64, 0.1];
        let x = [xp[0], xp[1], 0.5 * (xp[0] * xp[0] + xp[1] * xp[1])];
        let out_b = extended_operator(&chart, p, &x, &eta).unwrap();
        for i in 0..3 {
            assert!(
                (out_b[i] - f * eta[i]).abs() < 1e-10,
                "boundary flux off by {:e}",
                (out_b[i] - f * eta[i]).abs()
            );
        }
    }

    #[test]
    fn extended_operator_homogeneity() {
        let chart = BoundaryChart::parabolic(0.5, 0.3);
        let p = 3.0;
        let x = [0.2, -0.1, -0.15]; // outer side
        let eta = [0.4, 0.7, -0.2];
        let base = extended_operator(&chart, p, &x, &eta).unwrap();
        for &c in &[-2.0f64, 0.5, 3.0] {
            let scaled_eta: Vec<f64> = eta.iter().map(|v| c * v).collect();
            let scaled = extended_operator(&chart, p, &x, &scaled_eta).unwrap();
            let factor = c * c.abs().powf(p - 2.0);
            for i in 0..3 {
                assert!(
                    (scaled[i] - factor * base[i]).abs() < 1e-10 * (1.0 + base[i].abs()),
                    "degree p-1 homogeneity: {} vs {}",
                    scaled[i],
                    factor * base[i]
                );
            }
        }
    }

    #[test]
    fn extended_operator_flat_limit() {
        // scaling the chart h -> h(r x')/r sends the curvature to zero and
        // the operator to the p-Laplacian flux
        let p = 2.5;
        let eta = [0.5, -0.3, 0.8];
        let f = eta.iter().map(|v| v * v).sum::<f64>().powf((p - 2.0) / 2.0);
        let mut errs = Vec::new();
        for &r in &[1.0, 0.25, 0.0625] {
            let chart = BoundaryChart::parabolic(0.6 * r, 0.2);
            let x = [0.15, 0.1, -0.05];
            let out = extended_operator(&chart, p, &x, &eta).unwrap();
            let err = (0..3)
                .map(|i| (out[i] - f * eta[i]).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        // curvature scales linearly with r; two quarterings shrink the
        // error by ~16x
        assert!(errs[0] > errs[1] && errs[1] > errs[2]);
        assert!(errs[2] < 0.1 * errs[0] + 1e-12);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let chart = BoundaryChart::parabolic(0.5, 0.4);
        let x = [0.25, -0.15, -0.1];
        let jac = reflect_jacobian(&chart, &x).unwrap();
        let h = 1e-6;
        for dir in 0..3 {
            let mut xp = x;
            xp[dir] += h;
            let mut xm = x;
            xm[dir] -= h;
            let fp = reflect(&chart, &xp).unwrap();
            let fm = reflect(&chart, &xm).unwrap();
            for row in 0..3 {
                let fd = (fp[row] - fm[row]) / (2.0 * h);
                assert!(
                    (jac[row][dir] - fd).abs() < 1e-6,
                    "J[{row}][{dir}] = {} vs fd {}",
                    jac[row][dir],
                    fd
                );
            }
        }
    }

    #[test]
    fn ellipticity_scan_flat_and_curved() {
        // flat chart: the linearized flux has eigen factors {1, p-1}
        let p = 3.0;
        let flat = BoundaryChart::flat(0.5);
        let rep = ellipticity_scan(&flat, p, 3, 40, 42).unwrap();
        assert!(
            rep.gamma > 0.9 && rep.gamma <= 1.0 + 1e-9,
            "gamma {}",
            rep.gamma
        );
        assert!((rep.b_min - 1.0).abs() < 1e-12 && (rep.b_max - 1.0).abs() < 1e-12);
        assert!(rep.gamma_cap >= p - 1.0);
        let curved = BoundaryChart::parabolic(0.6, 0.2);
        let rep = ellipticity_scan(&curved, p, 3, 60, 42).unwrap();
        assert!(rep.gamma > 0.0 && rep.gamma <= rep.gamma_cap);
        assert!(rep.b_min >= rep.gamma && rep.b_max <= rep.gamma_cap);
    }

    #[test]
    fn eigenvector_quadratic_form_identity() {
        // flat chart: B = I, every eta is an eigenvector; the quadratic
        // form along eta is (p-1) b |eta|^p
        let chart = BoundaryChart::flat(0.5);
        let x = [0.1, 0.2, -0.2];
        let jac = reflect_jacobian(&chart, &x).unwrap();
        let b = det(&jac).abs();
        let p = 3.0;
        let eta = [0.0, 0.0, 2.0];
        let d_op = operator_eta_jacobian(&jac, b, p, &eta);
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += eta[i] * d_op[i][j] * eta[j];
            }
        }
        let eta_norm = 2.0f64;
        let expect = (p - 1.0) * b * eta_norm.powf(p);
        assert!((quad - expect).abs() < 1e-10 * expect.abs(), "{quad} vs {expect}");
    }
}
