//! Axisymmetric absorbed N-Laplacian on a truncated half-space sector,
//! in `(t, phi)` coordinates with `t = ln r`.
//!
//! In these coordinates the operator collapses to a clean divergence form:
//! with `G = u_t^2 + u_phi^2` and `s = sin^(N-2)(phi)`,
//!
//! `-d/dt(s G^((N-2)/2) u_t) - d/dphi(s G^((N-2)/2) u_phi)
//!      + e^(Nt) s (A |u|^(q-1) u - B) = 0`,
//!
//! which is discretized by a conservative finite-volume scheme on a uniform
//! `(t, phi)` grid. The log radius gives every power-law regime a fixed
//! number of cells per decade. The nonlinear solve is a damped Newton
//! iteration on the absorption term with the gradient factors `G^((N-2)/2)`
//! lagged between outer sweeps (for N = 2 the factors are identically one
//! and the iteration is plain Newton); linear systems are symmetric
//! positive definite and solved by Jacobi-preconditioned conjugate
//! gradients.

use crate::exponents::{ExponentError, ProblemParams};
use crate::util::fmt_g17;
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error("sector grid invalid: {0}")]
    BadGrid(String),
    #[error("solver requires p = N (got p = {0})")]
    GradientExponentNotN(f64),
    #[error("ill-posed: needs q > N-1, got q = {q} at N = {n}")]
    IllPosed { q: f64, n: u32 },
    #[error("non-finite values in the input field")]
    NonFinite,
    #[error("custom boundary data has {got} values, grid wants {want}")]
    BadBoundaryData { got: usize, want: usize },
    #[error(
        "nonlinear iteration failed to converge: last update {last_update:.3e}, \
         last damping {last_damping:.3e}, residual history {residuals:?}"
    )]
    NonConvergence {
        last_update: f64,
        last_damping: f64,
        residuals: Vec<f64>,
    },
    #[error("linear solver stalled at relative residual {0:.3e}")]
    LinearStall(f64),
    #[error("experiment precondition violated: {0}")]
    BadExperiment(String),
    #[error("csv parse error: {0}")]
    BadCsv(String),
}

/// Truncated sector `[eps, r_out] x [0, pi/2]`, uniform in `t = ln r` and
/// `phi`.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SectorGrid {
    pub eps: f64,
    pub r_out: f64,
    pub n_t: usize,
    pub n_phi: usize,
}

impl SectorGrid {
    pub fn new(eps: f64, r_out: f64, n_t: usize, n_phi: usize) -> Result<Self, SolveError> {
        if !(eps > 0.0 && eps < r_out) {
            return Err(SolveError::BadGrid(format!(
                "need 0 < eps < r_out, got eps = {eps}, r_out = {r_out}"
            )));
        }
        if n_t < 17 || n_phi < 17 {
            return Err(SolveError::BadGrid(format!(
                "need n_t, n_phi >= 17, got {n_t} x {n_phi}"
            )));
        }
        Ok(SectorGrid {
            eps,
            r_out,
            n_t,
            n_phi,
        })
    }

    pub fn ht(&self) -> f64 {
        (self.r_out.ln() - self.eps.ln()) / (self.n_t - 1) as f64
    }

    pub fn hphi(&self) -> f64 {
        FRAC_PI_2 / (self.n_phi - 1) as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        self.eps.ln() + i as f64 * self.ht()
    }

    pub fn r(&self, i: usize) -> f64 {
        self.t(i).exp()
    }

    pub fn phi(&self, j: usize) -> f64 {
        if j == self.n_phi - 1 {
            FRAC_PI_2
        } else {
            j as f64 * self.hphi()
        }
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n_phi + j
    }

    /// Doubled resolution on the same sector (node set refines).
    pub fn refined(&self) -> SectorGrid {
        SectorGrid {
            eps: self.eps,
            r_out: self.r_out,
            n_t: 2 * self.n_t - 1,
            n_phi: 2 * self.n_phi - 1,
        }
    }
}

/// Inner-arc boundary condition at `r = eps`.
#[derive(Debug, Clone, Serialize)]
pub enum BoundarySpec {
    /// Trace of the N-harmonic kernel: `u(eps, phi) = k cos(phi)/eps`.
    WeakK(f64),
    /// Arbitrary inner-arc values, one per phi node.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SolveSettings {
    pub tol_update: f64,
    pub max_newton: usize,
    pub damping: f64,
    pub reg_eps: f64,
    pub continuation_steps: usize,
    /// Cap on conjugate-gradient iterations per linear solve.
    pub max_cg: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tol_update: 1e-9,
            max_newton: 60,
            damping: 1.0,
            reg_eps: 1e-10,
            continuation_steps: 3,
            max_cg: 200_000,
        }
    }
}

/// Discrete solution on a sector grid, row-major `u[i * n_phi + j]`.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionField {
    pub grid: SectorGrid,
    pub u: Vec<f64>,
    pub bc: BoundarySpec,
    pub iters: usize,
    pub final_update_norm: f64,
    pub residual_norm: f64,
}

impl SolutionField {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.u[self.grid.idx(i, j)]
    }

    /// max over phi of u at radius r, log-interpolated between t-planes
    /// (exact on power laws).
    pub fn max_phi_at_radius(&self, r: f64) -> f64 {
        let g = &self.grid;
        let t = r.ln();
        let pos = (t - g.t(0)) / g.ht();
        let i0 = (pos.floor() as isize).clamp(0, g.n_t as isize - 2) as usize;
        let frac = (pos - i0 as f64).clamp(0.0, 1.0);
        let row_max = |i: usize| -> f64 {
            (0..g.n_phi)
                .map(|j| self.at(i, j))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let (a, b) = (row_max(i0), row_max(i0 + 1));
        if a > 0.0 && b > 0.0 {
            (a.ln() * (1.0 - frac) + b.ln() * frac).exp()
        } else {
            a * (1.0 - frac) + b * frac
        }
    }
}

/// Geometry/coefficient tables shared by residual assembly and the solver.
struct Tables {
    nf: f64,
    ht: f64,
    hphi: f64,
    /// sin^(N-2) at phi-face midpoints j+1/2, j = 0..n_phi-2
    s_face: Vec<f64>,
    /// integral of sin^(N-2) over the phi control cell of node j
    w_cell: Vec<f64>,
    /// e^(N t_i)
    exp_nt: Vec<f64>,
}

impl Tables {
    fn new(grid: &SectorGrid, nf: f64) -> Tables {
        let hphi = grid.hphi();
        let gauss = |a: f64, b: f64| -> f64 {
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
            (0..5)
                .map(|i| W[i] * (mid + half * X[i]).sin().powf(nf - 2.0))
                .sum::<f64>()
                * half
        };
        let s_face = (0..grid.n_phi - 1)
            .map(|j| (grid.phi(j) + 0.5 * hphi).sin().powf(nf - 2.0))
            .collect();
        let w_cell = (0..grid.n_phi)
            .map(|j| {
                let a = if j == 0 { 0.0 } else { grid.phi(j) - 0.5 * hphi };
                let b = if j == grid.n_phi - 1 {
                    FRAC_PI_2
                } else {
                    grid.phi(j) + 0.5 * hphi
                };
                if nf == 2.0 {
                    b - a
                } else {
                    gauss(a, b)
                }
            })
            .collect();
        let exp_nt = (0..grid.n_t).map(|i| (nf * grid.t(i)).exp()).collect();
        Tables {
            nf,
            ht: grid.ht(),
            hphi,
            s_face,
            w_cell,
            exp_nt,
        }
    }

    fn conformal(&self) -> bool {
        self.nf == 2.0
    }
}

/// Gradient-magnitude factors `(G + reg^2)^((N-2)/2)` at cell faces,
/// lagged between outer sweeps.
struct FluxFactors {
    /// t-faces (i+1/2, j), i = 0..n_t-2, j = 0..n_phi-1
    gm_t: Vec<f64>,
    /// phi-faces (i, j+1/2), i = 0..n_t-1, j = 0..n_phi-2
    gm_p: Vec<f64>,
}

fn flux_factors(grid: &SectorGrid, tab: &Tables, u: &[f64], reg: f64) -> FluxFactors {
    let (n_t, n_phi) = (grid.n_t, grid.n_phi);
    let m_exp = (tab.nf - 2.0) / 2.0;
    if tab.conformal() {
        return FluxFactors {
            gm_t: vec![1.0; (n_t - 1) * n_phi],
            gm_p: vec![1.0; n_t * (n_phi - 1)],
        };
    }
    let at = |i: usize, j: usize| u[i * n_phi + j];
    // central phi-derivative with symmetric ghost at the axis
    let dphi = |i: usize, j: usize| -> f64 {
        if j == 0 {
            0.0
        } else if j == n_phi - 1 {
            (at(i, j) - at(i, j - 1)) / tab.hphi
        } else {
            (at(i, j + 1) - at(i, j - 1)) / (2.0 * tab.hphi)
        }
    };
    let dt_c = |i: usize, j: usize| -> f64 {
        if i == 0 {
            (at(1, j) - at(0, j)) / tab.ht
        } else if i == n_t - 1 {
            (at(i, j) - at(i - 1, j)) / tab.ht
        } else {
            (at(i + 1, j) - at(i - 1, j)) / (2.0 * tab.ht)
        }
    };
    let mut gm_t = vec![0.0; (n_t - 1) * n_phi];
    for i in 0..n_t - 1 {
        for j in 0..n_phi {
            let ut = (at(i + 1, j) - at(i, j)) / tab.ht;
            let up = 0.5 * (dphi(i, j) + dphi(i + 1, j));
            let g = ut * ut + up * up + reg * reg;
            gm_t[i * n_phi + j] = g.powf(m_exp);
        }
    }
    let mut gm_p = vec![0.0; n_t * (n_phi - 1)];
    for i in 0..n_t {
        for j in 0..n_phi - 1 {
            let up = (at(i, j + 1) - at(i, j)) / tab.hphi;
            let ut = 0.5 * (dt_c(i, j) + dt_c(i, j + 1));
            let g = ut * ut + up * up + reg * reg;
            gm_p[i * (n_phi - 1) + j] = g.powf(m_exp);
        }
    }
    FluxFactors { gm_t, gm_p }
}

/// Finite-volume residual of the full nonlinear equation at every node
/// (boundary rows zero), in integrated (cell) form.
fn fv_residual(
    grid: &SectorGrid,
    tab: &Tables,
    fac: &FluxFactors,
    u: &[f64],
    a_coef: f64,
    b_coef: f64,
    q: f64,
    out: &mut [f64],
) {
    let (n_t, n_phi) = (grid.n_t, grid.n_phi);
    let at = |i: usize, j: usize| u[i * n_phi + j];
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for i in 1..n_t - 1 {
        for j in 0..n_phi - 1 {
            let ct_e = tab.w_cell[j] * fac.gm_t[i * n_phi + j] / tab.ht;
            let ct_w = tab.w_cell[j] * fac.gm_t[(i - 1) * n_phi + j] / tab.ht;
            let cp_n = tab.ht * tab.s_face[j] * fac.gm_p[i * (n_phi - 1) + j] / tab.hphi;
            let cp_s = if j == 0 {
                0.0
            } else {
                tab.ht * tab.s_face[j - 1] * fac.gm_p[i * (n_phi - 1) + j - 1] / tab.hphi
            };
            let south = if j == 0 { 0.0 } else { at(i, j) - at(i, j - 1) };
            let div = ct_e * (at(i + 1, j) - at(i, j)) - ct_w * (at(i, j) - at(i - 1, j))
                + cp_n * (at(i, j + 1) - at(i, j))
                - cp_s * south;
            let vol = tab.ht * tab.w_cell[j] * tab.exp_nt[i];
            let uij = at(i, j);
            out[i * n_phi + j] = -div + vol * (a_coef * uij.abs().powf(q - 1.0) * uij - b_coef);
        }
    }
}

/// Pointwise residual of the PDE (the finite-volume residual scaled by the
/// cell volume), second-order at interior nodes, with the axis handled by
/// the zero-flux limit. Boundary rows report zero.
pub fn assemble_residual(
    field: &SolutionField,
    params: &ProblemParams,
    grid: &SectorGrid,
) -> Result<Vec<f64>, SolveError> {
    if field.u.len() != grid.n_t * grid.n_phi || field.u.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    if params.p != params.nf() {
        return Err(SolveError::GradientExponentNotN(params.p));
    }
    let tab = Tables::new(grid, params.nf());
    let fac = flux_factors(grid, &tab, &field.u, 0.0);
    let mut fv = vec![0.0; field.u.len()];
    fv_residual(
        grid, &tab, &fac, &field.u, params.a, params.b, params.q, &mut fv,
    );
    for i in 1..grid.n_t - 1 {
        for j in 0..grid.n_phi - 1 {
            let vol = tab.ht * tab.w_cell[j] * tab.exp_nt[i];
            fv[grid.idx(i, j)] /= vol;
        }
    }
    Ok(fv)
}

struct LinearSystem<'a> {
    grid: &'a SectorGrid,
    /// face coefficients as in fv_residual
    ct: Vec<f64>,
    cp: Vec<f64>,
    /// diagonal reaction term
    react: Vec<f64>,
}

impl<'a> LinearSystem<'a> {
    fn unknowns(&self) -> usize {
        (self.grid.n_t - 2) * (self.grid.n_phi - 1)
    }

    fn uidx(&self, i: usize, j: usize) -> usize {
        (i - 1) * (self.grid.n_phi - 1) + j
    }

    fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let (n_t, n_phi) = (self.grid.n_t, self.grid.n_phi);
        let get = |i: usize, j: usize, x: &[f64]| -> f64 {
            if i == 0 || i == n_t - 1 || j == n_phi - 1 {
                0.0
            } else {
                x[(i - 1) * (n_phi - 1) + j]
            }
        };
        for i in 1..n_t - 1 {
            for j in 0..n_phi - 1 {
                let ct_e = self.ct[i * n_phi + j];
                let ct_w = self.ct[(i - 1) * n_phi + j];
                let cp_n = self.cp[i * (n_phi - 1) + j];
                let cp_s = if j == 0 {
                    0.0
                } else {
                    self.cp[i * (n_phi - 1) + j - 1]
                };
                let xc = get(i, j, x);
                let v = (ct_e + ct_w + cp_n + cp_s + self.react[i * n_phi + j]) * xc
                    - ct_e * get(i + 1, j, x)
                    - ct_w * get(i - 1, j, x)
                    - cp_n * get(i, j + 1, x)
                    - cp_s * if j == 0 { 0.0 } else { get(i, j - 1, x) };
                y[(i - 1) * (n_phi - 1) + j] = v;
            }
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let (n_t, n_phi) = (self.grid.n_t, self.grid.n_phi);
        let mut d = vec![0.0; self.unknowns()];
        for i in 1..n_t - 1 {
            for j in 0..n_phi - 1 {
                let ct_e = self.ct[i * n_phi + j];
                let ct_w = self.ct[(i - 1) * n_phi + j];
                let cp_n = self.cp[i * (n_phi - 1) + j];
                let cp_s = if j == 0 {
                    0.0
                } else {
                    self.cp[i * (n_phi - 1) + j - 1]
                };
                d[self.uidx(i, j)] = ct_e + ct_w + cp_n + cp_s + self.react[i * n_phi + j];
            }
        }
        d
    }

    /// Jacobi-preconditioned conjugate gradients.
    fn solve_pcg(&self, rhs: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>, SolveError> {
        let n = self.unknowns();
        let diag = self.diagonal();
        let mut x = vec![0.0; n];
        let mut r = rhs.to_vec();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let b_norm = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if b_norm == 0.0 {
            return Ok(x);
        }
        let mut ap = vec![0.0; n];
        for _ in 0..max_iter {
            self.matvec(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(SolveError::LinearStall(pap));
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let r_norm = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if r_norm <= tol * b_norm {
                return Ok(x);
            }
            for k in 0..n {
                z[k] = r[k] / diag[k];
            }
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        let r_norm = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        Err(SolveError::LinearStall(r_norm / b_norm))
    }
}

fn face_coefficients(grid: &SectorGrid, tab: &Tables, fac: &FluxFactors) -> (Vec<f64>, Vec<f64>) {
    let (n_t, n_phi) = (grid.n_t, grid.n_phi);
    let mut ct = vec![0.0; (n_t - 1) * n_phi];
    for i in 0..n_t - 1 {
        for j in 0..n_phi {
            ct[i * n_phi + j] = tab.w_cell[j] * fac.gm_t[i * n_phi + j] / tab.ht;
        }
    }
    let mut cp = vec![0.0; n_t * (n_phi - 1)];
    for i in 0..n_t {
        for j in 0..n_phi - 1 {
            cp[i * (n_phi - 1) + j] =
                tab.ht * tab.s_face[j] * fac.gm_p[i * (n_phi - 1) + j] / tab.hphi;
        }
    }
    (ct, cp)
}

/// Solves the sector problem with inner Dirichlet data `bc`, outer
/// homogeneous Dirichlet, `u = 0` on the equator and symmetry on the axis.
/// Initial iterate is the supersolution `k cos(phi)/r` clipped to the grid.
pub fn solve_field(
    params: &ProblemParams,
    grid: &SectorGrid,
    bc: &BoundarySpec,
    settings: &SolveSettings,
) -> Result<SolutionField, SolveError> {
    let nf = params.nf();
    if params.p != nf {
        return Err(SolveError::GradientExponentNotN(params.p));
    }
    if params.q <= nf - 1.0 {
        return Err(SolveError::IllPosed {
            q: params.q,
            n: params.n,
        });
    }
    let (n_t, n_phi) = (grid.n_t, grid.n_phi);
    let inner: Vec<f64> = match bc {
        BoundarySpec::WeakK(k) => {
            if !(*k >= 0.0) || !k.is_finite() {
                return Err(ExponentError::BadStrength(*k).into());
            }
            (0..n_phi)
                .map(|j| {
                    if j == n_phi - 1 {
                        0.0
                    } else {
                        k * grid.phi(j).cos() / grid.eps
                    }
                })
                .collect()
        }
        BoundarySpec::Custom(values) => {
            if values.len() != n_phi {
                return Err(SolveError::BadBoundaryData {
                    got: values.len(),
                    want: n_phi,
                });
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(SolveError::NonFinite);
            }
            values.clone()
        }
    };
    let tab = Tables::new(grid, nf);
    // initial iterate: the supersolution scaled to the inner data
    let mut u = vec![0.0; n_t * n_phi];
    let k_like = match bc {
        BoundarySpec::WeakK(k) => *k,
        BoundarySpec::Custom(values) => values[0] * grid.eps,
    };
    for i in 0..n_t {
        for j in 0..n_phi - 1 {
            u[grid.idx(i, j)] = if i == 0 {
                inner[j]
            } else if i == n_t - 1 {
                0.0
            } else {
                k_like * grid.phi(j).cos() / grid.r(i)
            };
        }
    }
    // zero data shortcut keeps the degenerate case exact
    if inner.iter().all(|v| *v == 0.0) {
        return Ok(SolutionField {
            grid: *grid,
            u,
            bc: bc.clone(),
            iters: 0,
            final_update_norm: 0.0,
            residual_norm: 0.0,
        });
    }

    let grad_scale = inner.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-12);
    let mut iters = 0usize;
    let mut final_update = f64::INFINITY;
    let mut last_damping = settings.damping;
    let mut residual_history: Vec<f64> = Vec::new();
    let outer_max = if tab.conformal() {
        1
    } else {
        4 * settings.max_newton
    };
    // the source bound B enters the a priori estimates only; the solve
    // path fixes B = 0
    let b_coef = 0.0;
    let mut fv = vec![0.0; u.len()];
    let mut fac = flux_factors(grid, &tab, &u, 1e-2 * grad_scale);
    for outer in 0..outer_max {
        // regularization continuation toward reg_eps
        let reg = if tab.conformal() {
            0.0
        } else {
            let k_step = outer.min(settings.continuation_steps);
            let start = 1e-2 * grad_scale;
            let factor = (settings.reg_eps / start)
                .powf(k_step as f64 / settings.continuation_steps.max(1) as f64);
            (start * factor).max(settings.reg_eps)
        };
        let fresh = flux_factors(grid, &tab, &u, reg);
        if outer <= settings.continuation_steps {
            fac = fresh;
        } else {
            // relaxed factor refresh: plain lagging alternates between two
            // branches on the degenerate diffusivity, halving the update
            // restores a linear contraction
            for (old, new) in fac.gm_t.iter_mut().zip(&fresh.gm_t) {
                *old = 0.5 * (*old + *new);
            }
            for (old, new) in fac.gm_p.iter_mut().zip(&fresh.gm_p) {
                *old = 0.5 * (*old + *new);
            }
        }
        let (ct, cp) = face_coefficients(grid, &tab, &fac);
        let u_outer_prev = u.clone();
        // damped Newton on the absorption term with frozen factors
        let mut inner_update = f64::INFINITY;
        for _ in 0..settings.max_newton {
            iters += 1;
            fv_residual(grid, &tab, &fac, &u, params.a, b_coef, params.q, &mut fv);
            let res_norm = fv.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            residual_history.push(res_norm);
            let mut react = vec![0.0; u.len()];
            for i in 1..n_t - 1 {
                for j in 0..n_phi - 1 {
                    let vol = tab.ht * tab.w_cell[j] * tab.exp_nt[i];
                    react[grid.idx(i, j)] =
                        vol * params.a * params.q * u[grid.idx(i, j)].abs().powf(params.q - 1.0);
                }
            }
            let sys = LinearSystem {
                grid,
                ct: ct.clone(),
                cp: cp.clone(),
                react,
            };
            let rhs: Vec<f64> = (1..n_t - 1)
                .flat_map(|i| (0..n_phi - 1).map(move |j| (i, j)))
                .map(|(i, j)| -fv[grid.idx(i, j)])
                .collect();
            let delta = sys.solve_pcg(&rhs, 1e-12, settings.max_cg)?;
            // line search on the frozen-factor residual
            let mut step = settings.damping;
            let mut accepted = false;
            while step >= 1e-3 {
                let mut trial = u.clone();
                for i in 1..n_t - 1 {
                    for j in 0..n_phi - 1 {
                        trial[grid.idx(i, j)] += step * delta[sys.uidx(i, j)];
                    }
                }
                fv_residual(
                    grid, &tab, &fac, &trial, params.a, b_coef, params.q, &mut fv,
                );
                let trial_norm = fv.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if trial_norm <= res_norm {
                    u = trial;
                    accepted = true;
                    last_damping = step;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // lagged-diffusivity fallback: accept the floored step and
                // let the outer sweep refresh the factors
                let step = 1e-3;
                for i in 1..n_t - 1 {
                    for j in 0..n_phi - 1 {
                        u[grid.idx(i, j)] += step * delta[sys.uidx(i, j)];
                    }
                }
                last_damping = step;
            }
            inner_update = delta
                .iter()
                .fold(0.0f64, |a, v| a.max(v.abs() * last_damping));
            if inner_update <= settings.tol_update {
                break;
            }
        }
        if tab.conformal() {
            final_update = inner_update;
            break;
        }
        // the lag converges only when refreshing the gradient factors no
        // longer moves the iterate
        let outer_change = u
            .iter()
            .zip(&u_outer_prev)
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        final_update = inner_update.max(outer_change);
        if outer > settings.continuation_steps && final_update <= settings.tol_update {
            break;
        }
    }
    if !(final_update <= settings.tol_update) {
        return Err(SolveError::NonConvergence {
            last_update: final_update,
            last_damping,
            residuals: residual_history,
        });
    }
    let mut field = SolutionField {
        grid: *grid,
        u,
        bc: bc.clone(),
        iters,
        final_update_norm: final_update,
        residual_norm: 0.0,
    };
    let res = assemble_residual(&field, params, grid)?;
    field.residual_norm = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(field)
}

/// `s_k(r) = r^(beta_q) max_phi u_k(r, .)` for an increasing strength
/// family, with the saturation verdicts of the strong-limit construction.
#[derive(Debug, Clone, Serialize)]
pub struct StrongFamilyReport {
    pub k_list: Vec<f64>,
    pub probe_r: Vec<f64>,
    /// `values[ik][ir]` = s at strength `k_list[ik]`, radius `probe_r[ir]`
    pub values: Vec<Vec<f64>>,
    pub increasing: bool,
    /// last-pair relative increment per probe radius (None for <2 entries)
    pub last_increment: Option<Vec<f64>>,
    /// relative gap of the final family member to the reference pole value
    pub omega0_gap: Option<Vec<f64>>,
}

pub fn strong_family(
    params: &ProblemParams,
    grid: &SectorGrid,
    k_list: &[f64],
    probe_r: &[f64],
    settings: &SolveSettings,
    omega0: Option<f64>,
) -> Result<(Vec<SolutionField>, StrongFamilyReport), SolveError> {
    params.require_singular_range()?;
    if k_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SolveError::BadExperiment(
            "k_list must be strictly increasing".into(),
        ));
    }
    let beta = crate::exponents::beta_q(params)?;
    let mut fields = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for &k in k_list {
        let field = solve_field(params, grid, &BoundarySpec::WeakK(k), settings)?;
        values.push(
            probe_r
                .iter()
                .map(|&r| r.powf(beta) * field.max_phi_at_radius(r))
                .collect(),
        );
        fields.push(field);
    }
    let increasing = (1..values.len())
        .all(|ik| (0..probe_r.len()).all(|ir| values[ik][ir] >= values[ik - 1][ir] - 1e-12));
    let last_increment = if values.len() >= 2 {
        let a = &values[values.len() - 2];
        let b = &values[values.len() - 1];
        Some(
            a.iter()
                .zip(b)
                .map(|(x, y)| (y - x) / x.abs().max(1e-300))
                .collect(),
        )
    } else {
        None
    };
    let omega0_gap = omega0.map(|w0| {
        values
            .last()
            .unwrap()
            .iter()
            .map(|s| (s - w0).abs() / w0)
            .collect()
    });
    let report = StrongFamilyReport {
        k_list: k_list.to_vec(),
        probe_r: probe_r.to_vec(),
        values,
        increasing,
        last_increment,
        omega0_gap,
    };
    Ok((fields, report))
}

/// Probe trend as the inner radius shrinks, the removability contrast.
#[derive(Debug, Clone, Serialize)]
pub struct RemovabilityReport {
    pub q: f64,
    pub q_c: f64,
    pub k: f64,
    pub probe_r: f64,
    pub eps_list: Vec<f64>,
    pub values: Vec<f64>,
    /// log2 of consecutive probe-value ratios (per eps halving)
    pub fit_slopes: Vec<f64>,
    /// Some(pass) above/below critical once >= 3 eps points exist
    pub verdict: Option<bool>,
}

pub fn removability_experiment(
    params: &ProblemParams,
    eps_list: &[f64],
    probe_r: f64,
    r_out: f64,
    nodes_per_decade: usize,
    n_phi: usize,
    settings: &SolveSettings,
) -> Result<RemovabilityReport, SolveError> {
    params.require_supercritical_q()?;
    let k = params.k.finite()?;
    let eps_max = eps_list.iter().cloned().fold(0.0f64, f64::max);
    if probe_r < 10.0 * eps_max {
        return Err(SolveError::BadExperiment(format!(
            "probe radius {probe_r} must be at least 10 * max(eps) = {}",
            10.0 * eps_max
        )));
    }
    if eps_list.windows(2).any(|w| w[0] <= w[1]) {
        return Err(SolveError::BadExperiment(
            "eps_list must be strictly decreasing".into(),
        ));
    }
    let q_c = crate::exponents::critical_q(params.n)?;
    let mut values = Vec::new();
    for &eps in eps_list {
        let decades = (r_out / eps).log10();
        let n_t = ((nodes_per_decade as f64 * decades).round() as usize).max(17) + 1;
        let grid = SectorGrid::new(eps, r_out, n_t, n_phi)?;
        let field = solve_field(params, &grid, &BoundarySpec::WeakK(k), settings)?;
        values.push(field.max_phi_at_radius(probe_r));
    }
    let fit_slopes: Vec<f64> = values.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let verdict = if eps_list.len() >= 3 {
        let n = values.len();
        if params.q > q_c {
            // decreasing toward zero: ratio >= 1.2 per halving on the last
            // two halvings
            Some(values[n - 3] / values[n - 2] >= 1.2 && values[n - 2] / values[n - 1] >= 1.2)
        } else if params.q < q_c {
            let rel = (values[n - 1] - values[n - 2]).abs() / values[n - 1].abs().max(1e-300);
            Some(rel <= 0.02)
        } else {
            None
        }
    } else {
        None
    };
    Ok(RemovabilityReport {
        q: params.q,
        q_c,
        k,
        probe_r,
        eps_list: eps_list.to_vec(),
        values,
        fit_slopes,
        verdict,
    })
}

/// Fitted a priori constants of the two upper bounds: the interior bound
/// `u <= (lambda/(A |x|^p))^(1/(q+1-p))` and the boundary bound
/// `u <= C rho / (A |x|^(q+1))^(1/(q+1-p))`, with the nodes attaining them.
#[derive(Debug, Clone, Serialize)]
pub struct BoundDiagnostics {
    pub lambda_hat: f64,
    pub lambda_at: (f64, f64),
    pub c_hat: f64,
    pub c_at: (f64, f64),
}

pub fn bound_diagnostics(field: &SolutionField, params: &ProblemParams) -> BoundDiagnostics {
    let g = &field.grid;
    let p = params.p;
    let qp = params.q + 1.0 - p;
    let mut lambda_hat = 0.0f64;
    let mut lambda_at = (g.r(0), 0.0);
    let mut c_hat = 0.0f64;
    let mut c_at = (g.r(0), 0.0);
    for i in 0..g.n_t {
        let r = g.r(i);
        for j in 0..g.n_phi {
            let u = field.at(i, j);
            if u <= 0.0 {
                continue;
            }
            let lam = params.a * r.powf(p) * u.powf(qp);
            if lam > lambda_hat {
                lambda_hat = lam;
                lambda_at = (r, g.phi(j));
            }
            if j < g.n_phi - 1 {
                let rho = r * g.phi(j).cos();
                let c = u * (params.a * r.powf(params.q + 1.0)).powf(1.0 / qp) / rho;
                if c > c_hat {
                    c_hat = c;
                    c_at = (r, g.phi(j));
                }
            }
        }
    }
    BoundDiagnostics {
        lambda_hat,
        lambda_at,
        c_hat,
        c_at,
    }
}

/// CSV export: `t, r, phi, u`, 17 significant digits, UTF-8.
pub fn field_csv(field: &SolutionField) -> String {
    let g = &field.grid;
    let mut out = String::from("t,r,phi,u\n");
    for i in 0..g.n_t {
        for j in 0..g.n_phi {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt_g17(g.t(i)),
                fmt_g17(g.r(i)),
                fmt_g17(g.phi(j)),
                fmt_g17(field.at(i, j))
            ));
        }
    }
    out
}

/// Parses the `t, r, phi, u` schema back into a field; validates the
/// rectangular grid.
pub fn field_from_csv(text: &str) -> Result<SolutionField, SolveError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| SolveError::BadCsv("empty file".into()))?;
    if header.trim() != "t,r,phi,u" {
        return Err(SolveError::BadCsv(format!("unexpected header {header:?}")));
    }
    let mut ts: Vec<f64> = Vec::new();
    let mut phis: Vec<f64> = Vec::new();
    let mut us: Vec<f64> = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(SolveError::BadCsv(format!(
                "line {}: want 4 columns",
                ln + 2
            )));
        }
        let parse = |s: &str| -> Result<f64, SolveError> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| SolveError::BadCsv(format!("line {}: {e}", ln + 2)))
        };
        ts.push(parse(cols[0])?);
        phis.push(parse(cols[2])?);
        us.push(parse(cols[3])?);
    }
    if us.is_empty() {
        return Err(SolveError::BadCsv("no data rows".into()));
    }
    // infer the phi count from the first repeated t value
    let n_phi = ts
        .iter()
        .position(|&t| (t - ts[0]).abs() > 1e-12)
        .unwrap_or(ts.len());
    if n_phi < 2 || us.len() % n_phi != 0 {
        return Err(SolveError::BadCsv("grid is not rectangular".into()));
    }
    let n_t = us.len() / n_phi;
    let eps = ts[0].exp();
    let r_out = ts[ts.len() - 1].exp();
    let grid = SectorGrid::new(eps, r_out, n_t, n_phi)?;
    for i in 0..n_t {
        if (ts[i * n_phi] - grid.t(i)).abs() > 1e-9 * (1.0 + grid.t(i).abs()) {
            return Err(SolveError::BadCsv("t nodes not uniform".into()));
        }
        for j in 0..n_phi {
            if (phis[i * n_phi + j] - grid.phi(j)).abs() > 1e-9 {
                return Err(SolveError::BadCsv("phi nodes not uniform".into()));
            }
        }
    }
    if us.iter().any(|v| !v.is_finite()) {
        return Err(SolveError::NonFinite);
    }
    Ok(SolutionField {
        grid,
        u: us,
        bc: BoundarySpec::Custom(vec![0.0; n_phi]),
        iters: 0,
        final_update_norm: 0.0,
        residual_norm: 0.0,
    })
}
