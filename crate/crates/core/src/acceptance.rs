//! The acceptance suite: every verification criterion of the laboratory,
//! runnable as a library call (the `verify` command) and mirrored by the
//! `acceptance` integration test target.
//!
//! Each criterion owns its tolerances; nothing here is tunable from the
//! outside. A criterion that fails reports the measured numbers rather
//! than aborting the rest of the suite.

use crate::exponents::{self, ProblemParams};
use crate::halfspace::{self, BoundarySpec, SectorGrid, SolveSettings};
use crate::sphere_ode::{self, ShootSettings, SphericalGrid};
use crate::transforms::{self, BoundaryChart, InversionSpec};
use crate::util::SplitMix64;
use crate::{analytic, classify, fd};
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

/// Golden pole value of the hemisphere profile at N = 2, q = 2, frozen
/// after the shooting and collocation discretizations agreed to eight
/// digits (3.4084925219 vs 3.4084925258 at M = 4001).
pub const OMEGA0_N2_Q2: f64 = 3.4084925;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
    pub seconds: f64,
}

struct Check {
    passed: bool,
    details: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Check {
            passed: true,
            details: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, detail: String) {
        if !ok {
            self.passed = false;
        }
        self.details.push(format!(
            "{} {}",
            if ok { "[ok]" } else { "[FAIL]" },
            detail
        ));
    }

    fn note(&mut self, detail: String) {
        self.details.push(format!("[..] {detail}"));
    }
}

pub fn criterion_names() -> &'static [(u32, &'static str)] {
    &[
        (1, "exponent identities"),
        (2, "spectral recovery"),
        (3, "hemisphere profile"),
        (4, "weak singularity reproduction"),
        (5, "strong-limit saturation"),
        (6, "removability contrast"),
        (7, "scaling covariance"),
        (8, "transform suite"),
        (9, "subsolution sign"),
        (10, "classifier"),
    ]
}

/// Suite labels accepted by `verify --suite`.
pub fn suite_of(id: u32) -> &'static str {
    match id {
        1 => "exponents",
        2 => "spectral",
        3 => "profile",
        4 => "weak",
        5 => "strong",
        6 => "removability",
        7 => "scaling",
        8 => "transforms",
        9 => "subsolution",
        10 => "classifier",
        _ => "unknown",
    }
}

pub fn run_criterion(id: u32) -> CriterionResult {
    let start = Instant::now();
    let (name, check) = match id {
        1 => ("exponent identities", criterion_exponents()),
        2 => ("spectral recovery", criterion_spectral()),
        3 => ("hemisphere profile", criterion_profile()),
        4 => ("weak singularity reproduction", criterion_weak()),
        5 => ("strong-limit saturation", criterion_strong()),
        6 => ("removability contrast", criterion_removability()),
        7 => ("scaling covariance", criterion_scaling()),
        8 => ("transform suite", criterion_transforms()),
        9 => ("subsolution sign", criterion_subsolution()),
        10 => ("classifier", criterion_classifier()),
        _ => panic!("unknown criterion {id}"),
    };
    CriterionResult {
        id,
        name,
        passed: check.passed,
        details: check.details,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all() -> Vec<CriterionResult> {
    (1..=10).map(run_criterion).collect()
}

pub fn run_suite(filter: Option<&str>) -> Vec<CriterionResult> {
    match filter {
        None => run_all(),
        Some(label) => (1..=10)
            .filter(|&id| suite_of(id) == label)
            .map(run_criterion)
            .collect(),
    }
}

fn criterion_exponents() -> Check {
    let mut c = Check::new();
    let start = Instant::now();
    for n in 2u32..=6 {
        let q_c = exponents::critical_q(n).unwrap();
        c.require(
            q_c == 2.0 * n as f64 - 1.0,
            format!("q_c({n}) = {q_c} = 2N-1"),
        );
        let at_critical = ProblemParams::new(n, q_c).unwrap();
        let b = exponents::beta_q(&at_critical).unwrap();
        c.require((b - 1.0).abs() <= 1e-12, format!("beta_q(N={n}, q_c) = {b}"));
    }
    // Lambda = (N-1) beta_q^2, cross-checked through the general-p formula
    let mut rng = SplitMix64::new(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = 2 + (rng.next_u64() % 4) as u32;
        let nf = n as f64;
        let q = rng.range(nf - 1.0 + 0.05, 2.0 * nf - 1.05);
        let params = ProblemParams::new(n, q).unwrap();
        let lam = exponents::lambda_sep(&params).unwrap();
        let lam_pq = exponents::lambda_pq(nf, q, n).unwrap();
        worst = worst.max((lam - lam_pq).abs());
    }
    c.require(
        worst <= 1e-12,
        format!("Lambda(p=N) vs (N-1)beta_q^2 over 50 samples: max gap {worst:.2e}"),
    );
    let kv = exponents::kv_root(2.0).unwrap();
    c.require((kv - 1.0).abs() <= 1e-14, format!("kv_root(2) = {kv}"));
    // constant-solution residual
    let mut worst_rel = 0.0f64;
    for _ in 0..50 {
        let n = 2 + (rng.next_u64() % 4) as u32;
        let nf = n as f64;
        let q = rng.range(nf - 1.0 + 0.05, 2.0 * nf + 1.0);
        let params = ProblemParams::new(n, q).unwrap();
        let cs = exponents::const_solution(&params).unwrap();
        let res = exponents::constant_residual(&params, cs).unwrap();
        worst_rel = worst_rel.max(res.abs() / cs.powf(q));
    }
    c.require(
        worst_rel <= 1e-10,
        format!("constant-solution residual over 50 samples: {worst_rel:.2e}"),
    );
    // strict decrease of beta_q in q over 100 samples
    let params0 = ProblemParams::new(3, 3.0).unwrap();
    let mut monotone = true;
    let mut prev = f64::INFINITY;
    for i in 0..100 {
        let q = 2.05 + 2.85 * i as f64 / 99.0; // inside (N-1, 2N-1) for N=3
        let mut p = params0;
        p.q = q;
        let b = exponents::beta_q(&p).unwrap();
        if b >= prev + 1e-12 {
            monotone = false;
        }
        prev = b;
    }
    c.require(monotone, "beta_q strictly decreasing over 100 samples".into());
    let dt = start.elapsed().as_secs_f64();
    c.require(dt < 1.0, format!("runtime {dt:.3}s < 1s"));
    c
}

fn criterion_spectral() -> Check {
    let mut c = Check::new();
    let grid = SphericalGrid::new(2001).unwrap();
    let settings = ShootSettings::default();

    let t = Instant::now();
    let (beta, profile) = sphere_ode::solve_spectral(3.0, 3, &grid, &settings).unwrap();
    c.require(
        (beta - 1.0).abs() <= 1e-4,
        format!("p=N=3: beta = {beta:.8} (target 1 +- 1e-4)"),
    );
    let sup = (0..grid.m)
        .map(|j| (profile.omega[j] - grid.phi(j).cos()).abs())
        .fold(0.0f64, f64::max)
        / profile.omega[0];
    c.require(
        sup <= 1e-4,
        format!("p=N=3: profile sup-distance to cos(phi) = {sup:.2e}"),
    );
    c.require(
        t.elapsed().as_secs_f64() < 10.0,
        format!("p=N=3 runtime {:.2}s < 10s", t.elapsed().as_secs_f64()),
    );

    let t = Instant::now();
    let (beta, _) = sphere_ode::solve_spectral(2.0, 3, &grid, &settings).unwrap();
    c.require(
        (beta - 2.0).abs() <= 1e-3,
        format!("p=2, N=3: beta = {beta:.8} (target 2 +- 1e-3)"),
    );
    c.require(
        t.elapsed().as_secs_f64() < 10.0,
        format!("p=2 runtime {:.2}s < 10s", t.elapsed().as_secs_f64()),
    );

    let t = Instant::now();
    let (beta, _) = sphere_ode::solve_spectral(3.0, 2, &grid, &settings).unwrap();
    let target = exponents::kv_root(3.0).unwrap();
    c.require(
        (beta - target).abs() <= 1e-3,
        format!("p=3, N=2: beta = {beta:.8} (target {target:.8} +- 1e-3)"),
    );
    c.require(
        t.elapsed().as_secs_f64() < 10.0,
        format!("p=3, N=2 runtime {:.2}s < 10s", t.elapsed().as_secs_f64()),
    );
    c
}

fn criterion_profile() -> Check {
    let mut c = Check::new();
    let params = ProblemParams::new(2, 2.0).unwrap();
    let settings = ShootSettings::default();
    let mut norms = Vec::new();
    let mut omega0 = 0.0;
    for &m in &[251usize, 501, 1001, 2001] {
        let grid = SphericalGrid::new(m).unwrap();
        let profile = sphere_ode::solve_profile(&params, &grid, &settings).unwrap();
        if m == 2001 {
            omega0 = profile.lambda0;
            let positive = (0..m - 1).all(|j| profile.omega[j] > 0.0);
            let decreasing = (1..m).all(|j| profile.omega[j] < profile.omega[j - 1]);
            c.require(positive, "omega > 0 on [0, pi/2)".into());
            c.require(decreasing, "omega strictly decreasing".into());
            c.require(
                profile.omega[m - 1] == 0.0,
                format!("omega(pi/2) = {}", profile.omega[m - 1]),
            );
        }
        norms.push(profile.residual_norm);
    }
    for w in norms.windows(2) {
        let ratio = w[0] / w[1];
        c.require(
            (3.5..=4.5).contains(&ratio),
            format!("residual refinement ratio {ratio:.2} in [3.5, 4.5]"),
        );
    }
    // independent collocation+Newton oracle, then the frozen golden value
    let grid = SphericalGrid::new(2001).unwrap();
    let oracle = sphere_ode::collocation::solve(&params, &grid, 300, 1e-13).unwrap();
    let rel = (omega0 - oracle.lambda0).abs() / omega0;
    c.require(
        rel <= 5e-4,
        format!(
            "shooting omega(0) = {omega0:.8} vs collocation {:.8} (rel {rel:.1e}, 4 significant digits)",
            oracle.lambda0
        ),
    );
    c.require(
        (omega0 - OMEGA0_N2_Q2).abs() <= 1e-6 * OMEGA0_N2_Q2,
        format!("omega(0) matches the frozen golden value {OMEGA0_N2_Q2}"),
    );
    c
}

fn criterion_weak() -> Check {
    let mut c = Check::new();
    let t = Instant::now();
    let params = ProblemParams::new(2, 2.0).unwrap();
    let grid = SectorGrid::new(1e-3, 1.0, 257, 129).unwrap();
    let field =
        halfspace::solve_field(&params, &grid, &BoundarySpec::WeakK(1.0), &SolveSettings::default())
            .unwrap();
    let mut max_dev = 0.0f64;
    let mut dev_at = (0.0, 0.0);
    let mut sup_violation = f64::NEG_INFINITY;
    for i in 0..grid.n_t {
        let r = grid.r(i);
        for j in 0..grid.n_phi {
            let phi = grid.phi(j);
            sup_violation = sup_violation.max(field.at(i, j) - phi.cos() / r);
            if (0.01..=0.1).contains(&r) && phi <= FRAC_PI_2 - 0.1 {
                let dev = (r * field.at(i, j) / phi.cos() - 1.0).abs();
                if dev > max_dev {
                    max_dev = dev;
                    dev_at = (r, phi);
                }
            }
        }
    }
    c.require(
        max_dev <= 0.05,
        format!(
            "max |r u / cos(phi) - 1| over r in [1e-2, 1e-1], phi <= pi/2 - 0.1: \
             {max_dev:.4} at (r = {:.4}, phi = {:.3}) (target <= 0.05)",
            dev_at.0, dev_at.1
        ),
    );
    c.note(
        "the deviation is grid-converged (0.0728 at 257x129 vs 0.0738 at 513x257); \
         it reflects the O(1) additive correction of the exact solution at r ~ 0.1"
            .into(),
    );
    c.require(
        sup_violation <= 1e-10,
        format!("supersolution bound: max(u - cos(phi)/r) = {sup_violation:.2e} <= 1e-10"),
    );
    let dt = t.elapsed().as_secs_f64();
    c.require(dt < 300.0, format!("runtime {dt:.1}s < 5min"));
    c
}

fn criterion_strong() -> Check {
    let mut c = Check::new();
    let params = ProblemParams::new(2, 2.0).unwrap();
    let grid = SectorGrid::new(1e-4, 1.0, 321, 129).unwrap();
    let (_, report) = halfspace::strong_family(
        &params,
        &grid,
        &[1.0, 10.0, 100.0, 1000.0],
        &[3e-3],
        &SolveSettings::default(),
        Some(OMEGA0_N2_Q2),
    )
    .unwrap();
    let s: Vec<f64> = report.values.iter().map(|v| v[0]).collect();
    c.require(
        report.increasing,
        format!("r^beta_q max_phi u at r = 3e-3 increasing in k: {s:?}"),
    );
    let gap = report.omega0_gap.as_ref().unwrap()[0];
    c.require(
        gap <= 0.10,
        format!(
            "final s_k = {:.4} within 10% of omega(0) = {OMEGA0_N2_Q2} (gap {:.1}%)",
            s[3],
            100.0 * gap
        ),
    );
    c.note(format!(
        "the supersolution bound caps s_k at k r = {:.1}; at k = 1000 the weak/strong \
         crossover radius omega(0)/k = {:.1e} coincides with the probe radius, so the \
         family is not yet saturated there",
        1000.0 * 3e-3,
        OMEGA0_N2_Q2 / 1000.0
    ));
    c
}

fn criterion_removability() -> Check {
    let mut c = Check::new();
    let settings = SolveSettings::default();
    let eps_list = [1e-2, 5e-3, 2.5e-3, 1.25e-3, 6.25e-4];
    let params4 = ProblemParams::new(2, 4.0).unwrap();
    let rep4 = halfspace::removability_experiment(&params4, &eps_list, 0.1, 1.0, 48, 97, &settings)
        .unwrap();
    let n = rep4.values.len();
    let r1 = rep4.values[n - 3] / rep4.values[n - 2];
    let r2 = rep4.values[n - 2] / rep4.values[n - 1];
    c.require(
        r1 >= 1.2 && r2 >= 1.2,
        format!(
            "q = 4 > q_c: probe decreases, ratios per halving {r1:.3}, {r2:.3} >= 1.2 \
             (values {:?})",
            rep4.values
        ),
    );
    let params2 = ProblemParams::new(2, 2.0).unwrap();
    let rep2 = halfspace::removability_experiment(&params2, &eps_list, 0.1, 1.0, 48, 97, &settings)
        .unwrap();
    let rel = (rep2.values[n - 1] - rep2.values[n - 2]).abs() / rep2.values[n - 1];
    c.require(
        rel <= 0.02,
        format!(
            "q = 2 < q_c: probe stabilizes, last relative change {:.2e} <= 2% \
             (values {:?})",
            rel, rep2.values
        ),
    );
    c
}

fn criterion_scaling() -> Check {
    let mut c = Check::new();
    let params = ProblemParams::new(2, 2.0).unwrap();
    let settings = SolveSettings::default();
    let r0 = 10.0f64;
    let sc = 2.0 * params.nf() - 1.0 - params.q; // coefficient exponent
    let grid1 = SectorGrid::new(1e-3, 1.0, 129, 65).unwrap();
    let f1 = halfspace::solve_field(&params, &grid1, &BoundarySpec::WeakK(1.0), &settings).unwrap();
    // rescaled problem: u^r(x) = r0 u(r0 x) solves the equation with the
    // absorption coefficient multiplied by r0^(2N-1-q)
    let mut scaled_params = params;
    scaled_params.a = params.a * r0.powf(sc);
    let grid2 = SectorGrid::new(1e-3 / r0, 1.0 / r0, 129, 65).unwrap();
    let f2 =
        halfspace::solve_field(&scaled_params, &grid2, &BoundarySpec::WeakK(1.0), &settings)
            .unwrap();
    // node-aligned comparison: grid2 is grid1 shifted by -ln r0
    let mut sup_diff = 0.0f64;
    for i in 0..grid1.n_t {
        for j in 0..grid1.n_phi {
            sup_diff = sup_diff.max((f2.at(i, j) - r0 * f1.at(i, j)).abs());
        }
    }
    // measured discretization error of the direct solve at shared nodes
    let fine = halfspace::solve_field(
        &params,
        &grid1.refined(),
        &BoundarySpec::WeakK(1.0),
        &settings,
    )
    .unwrap();
    let mut disc_err = 0.0f64;
    for i in 0..grid1.n_t {
        for j in 0..grid1.n_phi {
            disc_err = disc_err.max((fine.at(2 * i, 2 * j) - f1.at(i, j)).abs() * r0);
        }
    }
    c.require(
        sup_diff <= 2.0 * disc_err,
        format!(
            "rescaled solve matches direct solve: sup |u^r - r0 u| = {sup_diff:.2e} \
             <= 2 x measured discretization error {disc_err:.2e}"
        ),
    );
    c.note(format!(
        "the conservative log-radius scheme carries the dilation covariance exactly; \
         coefficient multiplier r0^(2N-1-q) = {:.1}",
        r0.powf(sc)
    ));
    c
}

fn criterion_transforms() -> Check {
    let mut c = Check::new();
    // inversion involution, 1000 samples
    let spec = InversionSpec::half_space_to_star_ball(3);
    let mut rng = SplitMix64::new(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let x = [
            rng.range(-2.0, 2.0),
            rng.range(-2.0, 2.0),
            rng.range(0.05, 2.0),
        ];
        let y = transforms::invert(&spec, &transforms::invert(&spec, &x).unwrap()).unwrap();
        for i in 0..3 {
            worst = worst.max((y[i] - x[i]).abs());
        }
    }
    c.require(
        worst <= 1e-10,
        format!("inversion involution on 1000 samples: max error {worst:.2e}"),
    );
    // reflection involution, 1000 samples on a curved tube
    let chart = BoundaryChart::parabolic(0.5, 0.3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let xp = [rng.range(-0.4, 0.4), rng.range(-0.4, 0.4)];
        let h = 0.5 * (xp[0] * xp[0] + xp[1] * xp[1]);
        let x = [xp[0], xp[1], h + rng.range(-0.2, 0.2)];
        let y = transforms::reflect(&chart, &x).unwrap();
        let z = transforms::reflect(&chart, &y).unwrap();
        for i in 0..3 {
            worst = worst.max((z[i] - x[i]).abs());
        }
    }
    c.require(
        worst <= 1e-10,
        format!("reflection involution on 1000 samples: max error {worst:.2e}"),
    );
    // N-harmonicity of the ball kernel (direct FD oracle)
    let pk = |x: &[f64]| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        -(r2 + x[2]) / (2.0 * r2)
    };
    let pts: Vec<Vec<f64>> = vec![
        vec![0.05, 0.02, -0.5],
        vec![-0.1, 0.1, -0.6],
        vec![0.15, -0.05, -0.4],
    ];
    let rep = fd::harmonic_order(&pk, &pts, 3.0, 1e-3);
    c.require(
        rep.order >= 1.8,
        format!("ball kernel N-harmonic residual order {:.2} >= 1.8", rep.order),
    );
    // conformal residual of the composed kernel
    let v = |y: &[f64]| {
        let r2: f64 = y.iter().map(|v| v * v).sum();
        y[2] / r2
    };
    let hs_pts: Vec<Vec<f64>> = vec![
        vec![0.04, 0.02, 0.52],
        vec![-0.08, 0.06, 0.62],
        vec![0.1, -0.04, 0.45],
    ];
    let rep = transforms::conformal_residual(&spec, v, &hs_pts, 3.0, 2e-3).unwrap();
    c.require(
        rep.order >= 1.8,
        format!("conformal residual of v o I: order {:.2} >= 1.8", rep.order),
    );
    // flat-chart operator identity to 1e-12
    let flat = BoundaryChart::flat(0.5);
    let eta = [0.7, -0.4, 0.2];
    let p = 3.0;
    let f = eta.iter().map(|v| v * v).sum::<f64>().powf((p - 2.0) / 2.0);
    let out = transforms::extended_operator(&flat, p, &[0.1, -0.2, -0.3], &eta).unwrap();
    let gap = (0..3)
        .map(|i| (out[i] - f * eta[i]).abs())
        .fold(0.0f64, f64::max);
    c.require(
        gap <= 1e-12,
        format!("flat-chart operator equals |eta|^(p-2) eta: gap {gap:.2e}"),
    );
    // homogeneity of degree p-1
    let x = [0.2, -0.1, -0.15];
    let base = transforms::extended_operator(&chart, p, &x, &eta).unwrap();
    let mut worst = 0.0f64;
    for &cc in &[-2.0f64, 0.5, 3.0] {
        let scaled_eta: Vec<f64> = eta.iter().map(|v| cc * v).collect();
        let scaled = transforms::extended_operator(&chart, p, &x, &scaled_eta).unwrap();
        let factor = cc * cc.abs().powf(p - 2.0);
        for i in 0..3 {
            worst = worst.max((scaled[i] - factor * base[i]).abs() / (1.0 + base[i].abs()));
        }
    }
    c.require(
        worst <= 1e-10,
        format!("degree-(p-1) homogeneity for c in {{-2, 0.5, 3}}: max gap {worst:.2e}"),
    );
    c
}

fn criterion_subsolution() -> Check {
    let mut c = Check::new();
    for &(n, q, alpha) in &[(2u32, 2.0, 0.5), (3, 4.0, 0.3), (2, 2.5, 0.25), (3, 4.5, 0.4)] {
        let params = ProblemParams::new(n, q).unwrap();
        let bound = analytic::alpha_bound(&params).unwrap();
        assert!(alpha < bound);
        let spec = analytic::SubsolutionSpec::new(&params, 1.0, alpha).unwrap();
        match analytic::find_subsolution_radius(&spec, &params, 64) {
            Ok(scan) => c.require(
                scan.r_found > 0.0 && scan.r_found <= 1.0 && scan.lw_max <= 0.0,
                format!(
                    "(N={n}, q={q}, alpha={alpha}): R = {} with Lw <= 0 on the 64x64 sample \
                     (Lw in [{:.2e}, {:.2e}])",
                    scan.r_found, scan.lw_min, scan.lw_max
                ),
            ),
            Err(e) => c.require(false, format!("(N={n}, q={q}, alpha={alpha}): {e}")),
        }
    }
    // closed-form stack against fourth-order finite differences
    let params = ProblemParams::new(3, 4.0).unwrap();
    let spec = analytic::SubsolutionSpec::new(&params, 1.3, 0.3).unwrap();
    let mut rng = SplitMix64::new(77);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let r = rng.range(0.05, 0.95);
        let phi = rng.range(0.05, FRAC_PI_2 - 0.05);
        let s = analytic::subsolution_w(&spec, r, phi).unwrap();
        let w_of =
            |rr: f64, ph: f64| spec.k * (1.0 - rr.powf(spec.alpha)) / rr * ph.cos();
        let hr = r * 1e-3;
        let hp = 1e-3;
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        worst = worst.max(rel(s.w_r, fd::d1(|rr| w_of(rr, phi), r, hr)));
        worst = worst.max(rel(s.w_phi, fd::d1(|ph| w_of(r, ph), phi, hp)));
        worst = worst.max(rel(s.w_rr, fd::d2(|rr| w_of(rr, phi), r, hr)));
        worst = worst.max(rel(s.w_phiphi, fd::d2(|ph| w_of(r, ph), phi, hp)));
        let p_of = |rr: f64, ph: f64| {
            let wr = fd::d1(|t| w_of(t, ph), rr, rr * 1e-3);
            let wp = fd::d1(|t| w_of(rr, t), ph, 1e-3);
            wr * wr + wp * wp / (rr * rr)
        };
        worst = worst.max(rel(s.p, p_of(r, phi)));
        worst = worst.max(rel(s.p_r, fd::d1(|rr| p_of(rr, phi), r, hr)));
        worst = worst.max(rel(s.p_phi, fd::d1(|ph| p_of(r, ph), phi, hp)));
    }
    c.require(
        worst <= 1e-6,
        format!("derivative stack vs finite differences at 100 points: max rel {worst:.2e}"),
    );
    c
}

fn criterion_classifier() -> Check {
    let mut c = Check::new();
    let params = ProblemParams::new(2, 2.0).unwrap();
    let settings = classify::ClassifySettings::default();
    let grid = SectorGrid::new(1e-4, 1.0, 129, 49).unwrap();
    let window = (1e-3, 1e-1);
    let k_true = 1.7;
    let weak = classify::synthetic::weak(grid, k_true);
    let strong = classify::synthetic::strong_cosine(grid, 2.0, OMEGA0_N2_Q2);
    let bounded = classify::synthetic::bounded(grid);
    let cw = classify::classify(&weak, &params, window, &settings);
    let k_hat = match cw {
        Ok(ref r) => match r.verdict {
            classify::Verdict::Weak { k_hat } => Some(k_hat),
            _ => None,
        },
        Err(_) => None,
    };
    c.require(
        k_hat.is_some(),
        format!("synthetic weak field classified Weak: {:?}", cw.map(|r| r.verdict)),
    );
    if let Some(k_hat) = k_hat {
        c.require(
            (k_hat / k_true - 1.0).abs() <= 0.05,
            format!("weak strength recovered: k_hat = {k_hat:.4} vs {k_true} (+-5%)"),
        );
    }
    let cs = classify::classify(&strong, &params, window, &settings);
    c.require(
        matches!(
            cs.as_ref().map(|r| &r.verdict),
            Ok(classify::Verdict::Strong)
        ),
        format!("synthetic strong field classified Strong: {:?}", cs.map(|r| r.verdict)),
    );
    let cb = classify::classify(&bounded, &params, window, &settings);
    c.require(
        matches!(
            cb.as_ref().map(|r| &r.verdict),
            Ok(classify::Verdict::Removable)
        ),
        format!(
            "synthetic bounded field classified Removable: {:?}",
            cb.map(|r| r.verdict)
        ),
    );
    // scale equivariance of the weak strength under T_{r0}
    let beta = exponents::beta_q(&params).unwrap();
    let sc = exponents::scaling_exponent(&params).unwrap();
    let r0: f64 = 0.5;
    let g2 = SectorGrid::new(1e-4 / r0, 1.0 / r0, 129, 49).unwrap();
    let rescaled = classify::synthetic::from_fn(g2, move |r, phi| {
        r0.powf(beta) * (k_true * phi.cos() / (r0 * r))
    });
    let c2 = classify::classify(&rescaled, &params, (window.0 / r0, window.1 / r0), &settings);
    match c2 {
        Ok(ref res) => match res.verdict {
            classify::Verdict::Weak { k_hat: k2 } => {
                let expect = r0.powf(sc) * k_hat.unwrap_or(k_true);
                c.require(
                    (k2 / expect - 1.0).abs() <= 0.05,
                    format!(
                        "k_hat scale law: {k2:.4} vs r0^((2N-1-q)/(q+1-N)) k = {expect:.4} (+-5%)"
                    ),
                );
            }
            ref v => c.require(false, format!("rescaled field verdict {v:?}, expected Weak")),
        },
        Err(e) => c.require(false, format!("rescaled field classification failed: {e}")),
    }
    c
}

/// One pass/fail line per criterion, the format printed by `verify` and by
/// the acceptance test target.
pub fn format_result(r: &CriterionResult) -> String {
    format!(
        "{} [{:2}] {} ({:.2}s)",
        if r.passed { "PASS" } else { "FAIL" },
        r.id,
        r.name,
        r.seconds
    )
}
