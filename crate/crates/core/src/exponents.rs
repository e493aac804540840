//! Closed-form exponents, critical thresholds and constant spherical
//! solutions, as exact scalar functions of the problem parameters.
//!
//! Everything here is a direct formula evaluation; these values anchor the
//! tolerances of every downstream solver, so no iteration is allowed.

use serde::Serialize;
use thiserror::Error;

/// Singularity strength `k`. The strong singularity is a genuinely
/// different object from any finite-`k` solution, so it gets a marker
/// variant instead of a float sentinel; solvers reject it unless they
/// explicitly document otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Strength {
    Finite(f64),
    Infinite,
}

impl Strength {
    pub fn finite(self) -> Result<f64, ExponentError> {
        match self {
            Strength::Finite(k) => Ok(k),
            Strength::Infinite => Err(ExponentError::InfiniteStrength),
        }
    }
}

/// Parameters of `-div(|Du|^(p-2) Du) + A |u|^(q-1) u = B` in dimension `N`.
///
/// The quasilinear solvers fix `p = N`; the spectral eigenproblem and the
/// reflected-operator scans accept general `p > 1`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProblemParams {
    pub n: u32,
    pub p: f64,
    pub q: f64,
    pub a: f64,
    pub b: f64,
    pub k: Strength,
}

#[derive(Debug, Error, PartialEq)]
pub enum ExponentError {
    #[error("dimension must satisfy N >= 2, got {0}")]
    BadDimension(u32),
    #[error("gradient exponent must satisfy p > 1, got {0}")]
    BadGradientExponent(f64),
    #[error("coefficient A must be positive, got {0}")]
    BadAbsorption(f64),
    #[error("source bound B must be nonnegative, got {0}")]
    BadSource(f64),
    #[error("strength k must be nonnegative, got {0}")]
    BadStrength(f64),
    #[error("absorption exponent out of range: need {needed}, got q = {q}")]
    QOutOfRange { q: f64, needed: &'static str },
    #[error("operation requires a finite strength k")]
    InfiniteStrength,
}

impl ProblemParams {
    /// Conformal-case parameters (`p = N`, `A = 1`, `B = 0`, `k = 1`).
    pub fn new(n: u32, q: f64) -> Result<Self, ExponentError> {
        Self::with_all(n, n as f64, q, 1.0, 0.0, Strength::Finite(1.0))
    }

    pub fn with_all(
        n: u32,
        p: f64,
        q: f64,
        a: f64,
        b: f64,
        k: Strength,
    ) -> Result<Self, ExponentError> {
        if n < 2 {
            return Err(ExponentError::BadDimension(n));
        }
        if !(p > 1.0) || !p.is_finite() {
            return Err(ExponentError::BadGradientExponent(p));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(ExponentError::BadAbsorption(a));
        }
        if !(b >= 0.0) || !b.is_finite() {
            return Err(ExponentError::BadSource(b));
        }
        if let Strength::Finite(kv) = k {
            if !(kv >= 0.0) || !kv.is_finite() {
                return Err(ExponentError::BadStrength(kv));
            }
        }
        Ok(ProblemParams { n, p, q, a, b, k })
    }

    pub fn with_strength(mut self, k: f64) -> Self {
        self.k = Strength::Finite(k);
        self
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `q > N-1`, the existence range for the spherical profile machinery.
    pub fn require_supercritical_q(&self) -> Result<(), ExponentError> {
        if self.q > self.nf() - 1.0 {
            Ok(())
        } else {
            Err(ExponentError::QOutOfRange {
                q: self.q,
                needed: "q > N-1",
            })
        }
    }

    /// `N-1 < q < 2N-1`, the range where weak and strong singularities exist.
    pub fn require_singular_range(&self) -> Result<(), ExponentError> {
        let nf = self.nf();
        if self.q > nf - 1.0 && self.q < 2.0 * nf - 1.0 {
            Ok(())
        } else {
            Err(ExponentError::QOutOfRange {
                q: self.q,
                needed: "N-1 < q < 2N-1",
            })
        }
    }

    /// `q > p-1`, the general-p absorption condition.
    pub fn require_q_above_p_minus_1(&self) -> Result<(), ExponentError> {
        if self.q > self.p - 1.0 {
            Ok(())
        } else {
            Err(ExponentError::QOutOfRange {
                q: self.q,
                needed: "q > p-1",
            })
        }
    }
}

/// Similarity exponent `beta_q = N/(q+1-N)`, defined for `q > N-1`.
pub fn beta_q(params: &ProblemParams) -> Result<f64, ExponentError> {
    params.require_supercritical_q()?;
    Ok(params.nf() / (params.q + 1.0 - params.nf()))
}

/// Critical absorption exponent `q_c = 2N-1`; singularities above it are
/// removable.
pub fn critical_q(n: u32) -> Result<f64, ExponentError> {
    if n < 2 {
        return Err(ExponentError::BadDimension(n));
    }
    Ok(2.0 * n as f64 - 1.0)
}

/// Zeroth-order coefficient `Lambda = (N-1) beta_q^2` of the spherical
/// profile equation.
pub fn lambda_sep(params: &ProblemParams) -> Result<f64, ExponentError> {
    let b = beta_q(params)?;
    Ok((params.nf() - 1.0) * b * b)
}

/// Positive constant solution `((N-1) beta_q^N)^(1/(q+1-N))` of the
/// spherical equation on the whole sphere (p = N).
pub fn const_solution(params: &ProblemParams) -> Result<f64, ExponentError> {
    params.require_supercritical_q()?;
    let nf = params.nf();
    let b = beta_q(params)?;
    Ok(((nf - 1.0) * b.powf(nf)).powf(1.0 / (params.q + 1.0 - nf)))
}

/// Residual of a constant `c` in the spherical equation:
/// `Lambda (beta^2 c^2)^((N-2)/2) c - c^q`. Vanishes exactly at
/// [`const_solution`]; used as the oracle pinning the Lambda variants.
pub fn constant_residual(params: &ProblemParams, c: f64) -> Result<f64, ExponentError> {
    let b = beta_q(params)?;
    let lam = lambda_sep(params)?;
    let q_mag = (b * b * c * c).powf((params.nf() - 2.0) / 2.0);
    Ok(lam * q_mag * c - c.abs().powf(params.q - 1.0) * c)
}

/// Positive root of `3 b^2 + 2 (p-3)/(p-1) b - 1 = 0`, the exponent of the
/// positive p-harmonic function in a two-dimensional half-plane vanishing
/// away from one boundary point.
pub fn kv_root(p: f64) -> Result<f64, ExponentError> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(ExponentError::BadGradientExponent(p));
    }
    let c = (p - 3.0) / (p - 1.0);
    // 3 b^2 + 2 c b - 1 = 0, discriminant c^2 + 3 > 0 always.
    Ok((-c + (c * c + 3.0).sqrt()) / 3.0)
}

/// Exponent `(7N - 1 + sqrt(N^2 + 12N + 12)) / (6(N-1))` of the minimal
/// sign-changing singular N-harmonic function vanishing on the equator.
pub fn beta2_sign_changing(n: u32) -> Result<f64, ExponentError> {
    if n < 2 {
        return Err(ExponentError::BadDimension(n));
    }
    let nf = n as f64;
    Ok((7.0 * nf - 1.0 + (nf * nf + 12.0 * nf + 12.0).sqrt()) / (6.0 * (nf - 1.0)))
}

/// Rescaling exponent `(2N-1-q)/(q+1-N)`: dilating a weak-singularity
/// solution by `T_r` multiplies its strength by `r` to this power.
pub fn scaling_exponent(params: &ProblemParams) -> Result<f64, ExponentError> {
    params.require_singular_range()?;
    let nf = params.nf();
    Ok((2.0 * nf - 1.0 - params.q) / (params.q + 1.0 - nf))
}

/// General-p similarity exponent `beta_{p,q} = p/(q+1-p)`.
pub fn beta_pq(p: f64, q: f64) -> Result<f64, ExponentError> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(ExponentError::BadGradientExponent(p));
    }
    if !(q > p - 1.0) {
        return Err(ExponentError::QOutOfRange {
            q,
            needed: "q > p-1",
        });
    }
    Ok(p / (q + 1.0 - p))
}

/// Zeroth-order coefficient of the general-p spherical equation,
/// `Lambda(p,q) = beta_{p,q} (q beta_{p,q} - N)`.
///
/// The value is pinned by the requirement that the constant spherical
/// solution has zero residual at `p = N`, where it reduces to
/// `(N-1) beta_q^2`; at `p = 2` it reduces to the semilinear coefficient
/// `beta_{2,q} (beta_{2,q} + 2 - N)`.
pub fn lambda_pq(p: f64, q: f64, n: u32) -> Result<f64, ExponentError> {
    if n < 2 {
        return Err(ExponentError::BadDimension(n));
    }
    let b = beta_pq(p, q)?;
    Ok(b * (q * b - n as f64))
}

/// Every closed-form exponent for one parameter point, as printed by the
/// `exponents` command.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentTable {
    pub n: u32,
    pub q: f64,
    pub p: f64,
    pub beta_q: f64,
    pub q_c: f64,
    pub lambda_sep: f64,
    pub const_solution: f64,
    /// Only inside the singular range `N-1 < q < 2N-1`.
    pub scaling_exp: Option<f64>,
    pub beta_pq: f64,
    pub lambda_pq: f64,
    pub beta2: f64,
    /// Only meaningful for N = 2.
    pub kv_root: Option<f64>,
    pub critical: bool,
}

impl ExponentTable {
    pub fn compute(params: &ProblemParams) -> Result<Self, ExponentError> {
        let q_c = critical_q(params.n)?;
        Ok(ExponentTable {
            n: params.n,
            q: params.q,
            p: params.p,
            beta_q: beta_q(params)?,
            q_c,
            lambda_sep: lambda_sep(params)?,
            const_solution: const_solution(params)?,
            scaling_exp: scaling_exponent(params).ok(),
            beta_pq: beta_pq(params.p, params.q)?,
            lambda_pq: lambda_pq(params.p, params.q, params.n)?,
            beta2: beta2_sign_changing(params.n)?,
            kv_root: if params.n == 2 {
                Some(kv_root(params.p)?)
            } else {
                None
            },
            critical: params.q == q_c,
        })
    }
}
