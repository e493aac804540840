//! Finite-difference oracles on scalar fields of R^N.
//!
//! These are the independent checks used throughout the test and
//! verification layers: given only a point sampler `f`, they estimate the
//! gradient, the Hessian and the p-Laplacian residual by central
//! differences, with O(h^2) truncation.

/// Fourth-order central first derivative of a scalar function of one
/// variable; accurate enough to validate closed-form derivative stacks to
/// 1e-6 relative without hitting roundoff.
pub fn d1<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Fourth-order central second derivative.
pub fn d2<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h)
}

/// Central-difference gradient.
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian (symmetric by construction).
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let f0 = f(x);
    let mut hess = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + h;
        let fp = f(&xp);
        xp[i] = x[i] - h;
        let fm = f(&xp);
        xp[i] = x[i];
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..n {
            xp[i] = x[i] + h;
            xp[j] = x[j] + h;
            let fpp = f(&xp);
            xp[j] = x[j] - h;
            let fpm = f(&xp);
            xp[i] = x[i] - h;
            let fmm = f(&xp);
            xp[j] = x[j] + h;
            let fmp = f(&xp);
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

/// Discrete `div(|Df|^(p-2) Df)(x)` via the expanded form
/// `|g|^(p-2) (tr H + (p-2) g^T H g / |g|^2)`,
/// with `g`, `H` central differences of step `h`.
///
/// Requires a nonvanishing gradient at `x`; callers sample away from
/// critical points.
pub fn p_laplacian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], p: f64, h: f64) -> f64 {
    let g = gradient(f, x, h);
    let hess = hessian(f, x, h);
    let g2: f64 = g.iter().map(|v| v * v).sum();
    let n = x.len();
    let mut trace = 0.0;
    let mut ghg = 0.0;
    for i in 0..n {
        trace += hess[i][i];
        for j in 0..n {
            ghg += g[i] * hess[i][j] * g[j];
        }
    }
    if g2 == 0.0 {
        // Df = 0: the flux |Df|^{p-2}Df vanishes for p > 2 and for a field
        // that is locally constant; report the degenerate value.
        return if p >= 2.0 { 0.0 } else { f64::NAN };
    }
    g2.powf((p - 2.0) / 2.0) * (trace + (p - 2.0) * ghg / g2)
}

/// Residual of `-div(|Df|^(p-2) Df) + w(x) |f|^(q-1) f` at `x`.
pub fn absorption_residual<F, W>(f: &F, weight: &W, x: &[f64], p: f64, q: f64, h: f64) -> f64
where
    F: Fn(&[f64]) -> f64,
    W: Fn(&[f64]) -> f64,
{
    let v = f(x);
    -p_laplacian(f, x, p, h) + weight(x) * v.abs().powf(q - 1.0) * v
}

/// Sup of |p_laplacian| over a sample box, at two steps h and h/2, with the
/// measured order log2(r1/r2). Used for "discretely p-harmonic" checks.
pub struct OrderReport {
    pub coarse: f64,
    pub fine: f64,
    pub order: f64,
}

pub fn harmonic_order<F: Fn(&[f64]) -> f64>(
    f: &F,
    points: &[Vec<f64>],
    p: f64,
    h: f64,
) -> OrderReport {
    let sup = |step: f64| {
        points
            .iter()
            .map(|x| p_laplacian(f, x, p, step).abs())
            .fold(0.0f64, f64::max)
    };
    let coarse = sup(h);
    let fine = sup(h / 2.0);
    OrderReport {
        coarse,
        fine,
        order: (coarse / fine).log2(),
    }
}
