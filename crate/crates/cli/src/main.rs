//! Command-line front end: experiment configuration, parameter sweeps,
//! result persistence, and the `verify` umbrella around the acceptance
//! suite.
//!
//! Exit codes: 0 ok, 1 computation failure, 2 usage error, 3 acceptance
//! failure. Every error path prints one machine-parsable line
//! `error[CODE]: text` to stderr.

mod config;

use clap::{Args, Parser, Subcommand};
use config::{manifest_json, parse_grid, parse_range, resolve, ConfigFile};
use nsing::exponents::{self, ExponentTable, ProblemParams};
use nsing::halfspace::{self, BoundarySpec, SectorGrid, SolveSettings};
use nsing::sphere_ode::{self, ShootSettings, SphericalGrid};
use nsing::util::fmt_g17;
use nsing::{acceptance, classify};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "nsing",
    about = "Boundary-singularity laboratory for the N-Laplacian with absorption",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default, Clone)]
struct Common {
    /// dimension N >= 2
    #[arg(long = "N")]
    n: Option<u32>,
    /// gradient exponent p (defaults to N)
    #[arg(long)]
    p: Option<f64>,
    /// absorption exponent q (sweep accepts a:b:step)
    #[arg(long)]
    q: Option<String>,
    /// absorption coefficient A > 0
    #[arg(long = "A")]
    a: Option<f64>,
    /// source bound B >= 0 (residual evaluation only)
    #[arg(long = "B")]
    b: Option<f64>,
    /// singularity strength k
    #[arg(long)]
    k: Option<f64>,
    /// inner truncation radius
    #[arg(long)]
    eps: Option<f64>,
    /// outer truncation radius
    #[arg(long = "R")]
    r_out: Option<f64>,
    /// sector grid, WxH = t-nodes x phi-nodes (profile/spectral use W)
    #[arg(long)]
    grid: Option<String>,
    /// solver update tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// output directory (data files + manifest)
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// flat key = value configuration file (flags win)
    #[arg(long)]
    config: Option<PathBuf>,
    /// concurrent sweep points
    #[arg(long)]
    jobs: Option<usize>,
    /// seed for sample-point generation in scans
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the closed-form exponent table for (N, q, p)
    Exponents(Common),
    /// Solve the hemisphere profile equation by shooting
    Profile(Common),
    /// Solve the spherical p-harmonic spectral eigenproblem
    Spectral(Common),
    /// Solve the truncated half-space sector problem
    Solve(Common),
    /// Run the shrinking-inner-radius removability experiment
    Removability(Common),
    /// Classify a stored sector field (removable / weak / strong)
    Classify {
        #[command(flatten)]
        common: Common,
        /// field CSV in the t,r,phi,u schema
        #[arg(long)]
        field: PathBuf,
        /// classification window lo:hi (defaults to [10 eps, r_out/10])
        #[arg(long)]
        window: Option<String>,
    },
    /// Sweep a parameter grid of (N, q, k, eps) points
    Sweep {
        #[command(flatten)]
        common: Common,
        /// comma-separated k list
        #[arg(long = "k-list")]
        k_list: Option<String>,
        /// comma-separated eps list
        #[arg(long = "eps-list")]
        eps_list: Option<String>,
    },
    /// Run the acceptance suite (exits 3 on any failing criterion)
    Verify {
        #[command(flatten)]
        common: Common,
        /// restrict to one suite: exponents, spectral, profile, weak,
        /// strong, removability, scaling, transforms, subsolution,
        /// classifier
        #[arg(long)]
        suite: Option<String>,
    },
}

enum CliError {
    Usage(String),
    Compute(String),
    Acceptance(String),
}

impl CliError {
    fn report(&self) -> ExitCode {
        match self {
            CliError::Usage(msg) => {
                eprintln!("error[E_USAGE]: {msg}");
                ExitCode::from(2)
            }
            CliError::Compute(msg) => {
                eprintln!("error[E_COMPUTE]: {msg}");
                ExitCode::from(1)
            }
            CliError::Acceptance(msg) => {
                eprintln!("error[E_ACCEPT]: {msg}");
                ExitCode::from(3)
            }
        }
    }
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn compute<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Compute(e.to_string())
}

/// Flags merged over the config file over the defaults.
struct Resolved {
    n: u32,
    p: f64,
    q: f64,
    q_list: Vec<f64>,
    a: f64,
    b: f64,
    k: f64,
    eps: f64,
    r_out: f64,
    grid: (usize, usize),
    tol: f64,
    out: Option<PathBuf>,
    format: String,
    jobs: usize,
    seed: u64,
}

impl Resolved {
    fn from(common: &Common) -> Result<Resolved, CliError> {
        let cfg = match &common.config {
            Some(path) => ConfigFile::load(path).map_err(usage)?,
            None => ConfigFile::default(),
        };
        let n = resolve(common.n, cfg.u64("N").map_err(usage)?.map(|v| v as u32), 2);
        let p = resolve(common.p, cfg.f64("p").map_err(usage)?, n as f64);
        let q_spec = resolve(common.q.clone(), cfg.string("q"), "2.0".into());
        let q_list = parse_range(&q_spec).map_err(usage)?;
        let q = q_list[0];
        let a = resolve(common.a, cfg.f64("A").map_err(usage)?, 1.0);
        let b = resolve(common.b, cfg.f64("B").map_err(usage)?, 0.0);
        let k = resolve(common.k, cfg.f64("k").map_err(usage)?, 1.0);
        let eps = resolve(common.eps, cfg.f64("eps").map_err(usage)?, 1e-3);
        let r_out = resolve(common.r_out, cfg.f64("R").map_err(usage)?, 1.0);
        let grid_str = resolve(common.grid.clone(), cfg.string("grid"), "129x65".into());
        let grid = parse_grid(&grid_str).map_err(usage)?;
        let tol = resolve(common.tol, cfg.f64("tol").map_err(usage)?, 1e-9);
        let out = common
            .out
            .clone()
            .or_else(|| cfg.string("out").map(PathBuf::from));
        let format = resolve(common.format.clone(), cfg.string("format"), "csv".into());
        if format != "csv" && format != "json" {
            return Err(CliError::Usage(format!(
                "format must be csv or json, got {format:?}"
            )));
        }
        let jobs = resolve(
            common.jobs,
            cfg.u64("jobs").map_err(usage)?.map(|v| v as usize),
            1,
        );
        let seed = resolve(common.seed, cfg.u64("seed").map_err(usage)?, 0);
        Ok(Resolved {
            n,
            p,
            q,
            q_list,
            a,
            b,
            k,
            eps,
            r_out,
            grid,
            tol,
            out,
            format,
            jobs,
            seed,
        })
    }

    fn single_q(&self) -> Result<f64, CliError> {
        if self.q_list.len() != 1 {
            return Err(CliError::Usage(
                "a q range is only meaningful for sweep; pass a single value".into(),
            ));
        }
        Ok(self.q)
    }

    fn params(&self) -> Result<ProblemParams, CliError> {
        self.single_q()?;
        ProblemParams::with_all(
            self.n,
            self.p,
            self.q,
            self.a,
            self.b,
            exponents::Strength::Finite(self.k),
        )
        .map_err(usage)
    }

    fn echo(&self, command: &str) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("command".into(), command.to_string());
        m.insert("N".into(), self.n.to_string());
        m.insert("p".into(), self.p.to_string());
        m.insert("q".into(), self.q.to_string());
        m.insert("A".into(), self.a.to_string());
        m.insert("B".into(), self.b.to_string());
        m.insert("k".into(), self.k.to_string());
        m.insert("eps".into(), self.eps.to_string());
        m.insert("R".into(), self.r_out.to_string());
        m.insert("grid".into(), format!("{}x{}", self.grid.0, self.grid.1));
        m.insert("tol".into(), self.tol.to_string());
        m.insert("format".into(), self.format.clone());
        m.insert("jobs".into(), self.jobs.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m
    }

    fn solve_settings(&self) -> SolveSettings {
        SolveSettings {
            tol_update: self.tol,
            ..SolveSettings::default()
        }
    }
}

fn write_outputs(
    out: &Option<PathBuf>,
    command: &str,
    resolved_echo: &BTreeMap<String, String>,
    files: &[(&str, String)],
) -> Result<(), CliError> {
    let Some(dir) = out else { return Ok(()) };
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Compute(format!("cannot create {}: {e}", dir.display())))?;
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text)
            .map_err(|e| CliError::Compute(format!("cannot write {}: {e}", path.display())))?;
    }
    // manifest with the resolved configuration; the timestamp lives here
    let manifest = manifest_json(command, resolved_echo);
    std::fs::write(dir.join("manifest.json"), manifest)
        .map_err(|e| CliError::Compute(format!("manifest: {e}")))?;
    Ok(())
}

fn cmd_exponents(common: &Common) -> Result<(), CliError> {
    let r = Resolved::from(common)?;
    let params = r.params()?;
    params.require_supercritical_q().map_err(usage)?;
    let table = ExponentTable::compute(&params).map_err(usage)?;
    println!("N = {}, q = {}, p = {}", table.n, table.q, table.p);
    println!("beta_q        = {}", table.beta_q);
    println!("q_c           = {}", table.q_c);
    println!("Lambda        = {}", table.lambda_sep);
    println!("const         = {}", table.const_solution);
    match table.scaling_exp {
        Some(sc) => println!("scaling_exp   = {sc}"),
        None => println!("scaling_exp   = (outside N-1 < q < 2N-1)"),
    }
    println!("beta_pq       = {}", table.beta_pq);
    println!("Lambda_pq     = {}", table.lambda_pq);
    println!("beta2         = {}", table.beta2);
    if let Some(kv) = table.kv_root {
        println!("kv_root       = {kv}");
    }
    if table.critical {
        println!("note: q = q_c: critical");
    }
    let json = serde_json::to_string_pretty(&table).map_err(compute)?;
    write_outputs(
        &r.out,
        "exponents",
        &r.echo("exponents"),
        &[("exponents.json", json + "\n")],
    )
}

fn cmd_profile(common: &Common) -> Result<(), CliError> {
    let r = Resolved::from(common)?;
    let params = r.params()?;
    let m = r.grid.1.max(r.grid.0);
    let grid = SphericalGrid::new(m).map_err(usage)?;
    let profile =
        sphere_ode::solve_profile(&params, &grid, &ShootSettings::default()).map_err(compute)?;
    println!(
        "profile N = {}, q = {}: beta = {}, omega(0) = {:.12}, residual = {:.3e}",
        r.n, r.q, profile.beta, profile.lambda0, profile.residual_norm
    );
    let csv = sphere_ode::profile_csv(&profile, &grid);
    let report = serde_json::json!({
        "beta": profile.beta,
        "omega0": profile.lambda0,
        "residual_norm": profile.residual_norm,
        "nodes": grid.m,
        "floor_hits": profile.floor_hits,
    });
    write_outputs(
        &r.out,
        "profile",
        &r.echo("profile"),
        &[
            ("profile.csv", csv),
            (
                "report.json",
                serde_json::to_string_pretty(&report).map_err(compute)? + "\n",
            ),
        ],
    )
}

fn cmd_spectral(common: &Common) -> Result<(), CliError> {
    let r = Resolved::from(common)?;
    let m = r.grid.1.max(r.grid.0);
    let grid = SphericalGrid::new(m).map_err(usage)?;
    let (beta, profile) =
        sphere_ode::solve_spectral(r.p, r.n, &grid, &ShootSettings::default()).map_err(compute)?;
    let lambda = beta * (beta * (r.p - 1.0) + r.p - r.n as f64);
    println!(
        "spectral p = {}, N = {}: beta = {:.10}, lambda = {:.10}",
        r.p, r.n, beta, lambda
    );
    let csv = sphere_ode::profile_csv(&profile, &grid);
    let report = serde_json::json!({
        "p": r.p,
        "N": r.n,
        "beta": beta,
        "lambda": lambda,
        "nodes": grid.m,
    });
    write_outputs(
        &r.out,
        "spectral",
        &r.echo("spectral"),
        &[
            ("profile.csv", csv),
            (
                "report.json",
                serde_json::to_string_pretty(&report).map_err(compute)? + "\n",
            ),
        ],
    )
}

fn cmd_solve(common: &Common) -> Result<(), CliError> {
    let r = Resolved::from(common)?;
    let params = r.params()?;
    let grid = SectorGrid::new(r.eps, r.r_out, r.grid.0, r.grid.1).map_err(usage)?;
    let field = halfspace::solve_field(
        &params,
        &grid,
        &BoundarySpec::WeakK(r.k),
        &r.solve_settings(),
    )
    .map_err(compute)?;
    let diag = halfspace::bound_diagnostics(&field, &params);
    println!(
        "solve N = {}, q = {}, k = {}, eps = {:.3e}, R = {}: iters = {}, update = {:.2e}, \
         residual = {:.2e}",
        r.n, r.q, r.k, r.eps, r.r_out, field.iters, field.final_update_norm, field.residual_norm
    );
    println!(
        "bounds: lambda_hat = {:.6e} at (r = {:.3e}, phi = {:.3}), c_hat = {:.6e} at \
         (r = {:.3e}, phi = {:.3})",
        diag.lambda_hat, diag.lambda_at.0, diag.lambda_at.1, diag.c_hat, diag.c_at.0, diag.c_at.1
    );
    let report = serde_json::json!({
        "params": {"N": r.n, "q": r.q, "A": r.a, "k": r.k, "eps": r.eps, "R": r.r_out},
        "iters": field.iters,
        "final_update_norm": field.final_update_norm,
        "residual_norm": field.residual_norm,
        "lambda_hat": diag.lambda_hat,
        "c_hat": diag.c_hat,
    });
    write_outputs(
        &r.out,
        "solve",
        &r.echo("solve"),
        &[
            ("field.csv", halfspace::field_csv(&field)),
            (
                "report.json",
                serde_json::to_string_pretty(&report).map_err(compute)? + "\n",
            ),
        ],
    )
}

fn cmd_removability(common: &Common) -> Result<(), CliError> {
    let r = Resolved::from(common)?;
    let params = r.params()?;
    // eps halved four times from the configured inner radius, probing at
    // R/10, resolution tied to the grid flag
    let eps_list: Vec<f64> = (0..5).map(|i| r.eps / 2f64.powi(i)).collect();
    let probe = r.r_out / 10.0;
    let per_decade = (r.grid.0 as f64 / (r.r_out / r.eps).log10()).round() as usize;
    let report = halfspace::removability_experiment(
        &params,
        &eps_list,
        probe,
        r.r_out,
        per_decade.max(16),
        r.grid.1,
        &r.solve_settings(),
    )
    .map_err(compute)?;
    println!(
        "removability N = {}, q = {} (q_c = {}): probe r = {}",
        r.n, r.q, report.q_c, probe
    );
    for (eps, value) in report.eps_list.iter().zip(&report.values) {
        println!("  eps = {:.4e}: m = {:.8e}", eps, value);
    }
    println!("  per-halving log2 ratios: {:?}", report.fit_slopes);
    match report.verdict {
        Some(true) => println!("  verdict: consistent ({})", trend_label(r.q, report.q_c)),
        Some(false) => println!("  verdict: NOT consistent ({})", trend_label(r.q, report.q_c)),
        None => println!("  verdict: none (q = q_c or too few points)"),
    }
    let json = serde_json::to_string_pretty(&report).map_err(compute)?;
    write_outputs(
        &r.out,
        "removability",
        &r.echo("removability"),
        &[("removability.json", json + "\n")],
    )
}

fn trend_label(q: f64, q_c: f64) -> &'static str {
    if q > q_c {
        "probe decays toward removability"
    } else {
        "probe stabilizes at the weak solution"
    }
}

fn cmd_classify(common: &Common, field_path: &Path, window: Option<&str>) -> Result<(), CliError> {
    let r = Resolved::from(common)?;
    let params = r.params()?;
    let text = std::fs::read_to_string(field_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", field_path.display())))?;
    let field = halfspace::field_from_csv(&text).map_err(usage)?;
    let window = match window {
        Some(spec) => {
            let (lo, hi) = spec
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("window {spec:?}: expected lo:hi")))?;
            (
                lo.parse::<f64>().map_err(usage)?,
                hi.parse::<f64>().map_err(usage)?,
            )
        }
        None => (10.0 * field.grid.eps, field.grid.r_out / 10.0),
    };
    let settings = classify::ClassifySettings::default();
    let result = classify::classify(&field, &params, window, &settings).map_err(compute)?;
    let json = serde_json::to_string_pretty(&result).map_err(compute)?;
    println!("{json}");
    write_outputs(
        &r.out,
        "classify",
        &r.echo("classify"),
        &[("classification.json", json + "\n")],
    )
}

#[derive(Debug, Clone, serde::Serialize)]
struct ResultRecord {
    experiment: usize,
    n: u32,
    q: f64,
    k: f64,
    eps: f64,
    metric: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

type PointMetrics = Vec<(&'static str, f64, f64, bool)>;

fn cmd_sweep(
    common: &Common,
    k_list: Option<&str>,
    eps_list: Option<&str>,
) -> Result<(), CliError> {
    let r = Resolved::from(common)?;
    let qs = r.q_list.clone();
    let parse_list = |s: &str| -> Result<Vec<f64>, CliError> {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(usage))
            .collect()
    };
    let ks = match k_list {
        Some(s) => parse_list(s)?,
        None => vec![r.k],
    };
    let epss = match eps_list {
        Some(s) => parse_list(s)?,
        None => vec![r.eps],
    };
    let mut points = Vec::new();
    for &q in &qs {
        for &k in &ks {
            for &eps in &epss {
                points.push((q, k, eps));
            }
        }
    }
    println!("sweep: {} points, jobs = {}", points.len(), r.jobs);
    let settings = r.solve_settings();
    let run_point = |&(q, k, eps): &(f64, f64, f64)| -> Result<PointMetrics, String> {
        let params = ProblemParams::with_all(
            r.n,
            r.n as f64,
            q,
            r.a,
            0.0,
            exponents::Strength::Finite(k),
        )
        .map_err(|e| e.to_string())?;
        let grid = SectorGrid::new(eps, r.r_out, r.grid.0, r.grid.1).map_err(|e| e.to_string())?;
        let field = halfspace::solve_field(&params, &grid, &BoundarySpec::WeakK(k), &settings)
            .map_err(|e| e.to_string())?;
        // one record per sweep point: the strength recovery error when the
        // window allows it, the convergence update otherwise
        let window = (10.0 * eps, r.r_out / 10.0);
        if window.1 / window.0 >= 10.0 {
            if let Ok(est) =
                classify::estimate_k(&field, window, &classify::ClassifySettings::default())
            {
                let rel = (est.k_hat / k - 1.0).abs();
                return Ok(vec![("k_rel_err", rel, 0.05, rel <= 0.05)]);
            }
        }
        Ok(vec![(
            "final_update_norm",
            field.final_update_norm,
            settings.tol_update,
            field.final_update_norm <= settings.tol_update,
        )])
    };
    // buffered per point, written in input order
    let results: Vec<Result<PointMetrics, String>> = if r.jobs <= 1 {
        points.iter().map(run_point).collect()
    } else {
        let mut slots: Vec<Option<Result<PointMetrics, String>>> =
            (0..points.len()).map(|_| None).collect();
        let next = std::sync::atomic::AtomicUsize::new(0);
        let shared = std::sync::Mutex::new(&mut slots);
        std::thread::scope(|scope| {
            for _ in 0..r.jobs.min(points.len()) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= points.len() {
                        break;
                    }
                    let out = run_point(&points[i]);
                    shared.lock().unwrap()[i] = Some(out);
                });
            }
        });
        slots.into_iter().map(|s| s.unwrap()).collect()
    };
    let mut records: Vec<ResultRecord> = Vec::new();
    let mut failures = 0usize;
    for (idx, ((q, k, eps), result)) in points.iter().zip(&results).enumerate() {
        match result {
            Ok(metrics) => {
                for (metric, value, tolerance, pass) in metrics {
                    records.push(ResultRecord {
                        experiment: idx,
                        n: r.n,
                        q: *q,
                        k: *k,
                        eps: *eps,
                        metric,
                        value: *value,
                        tolerance: *tolerance,
                        pass: *pass,
                    });
                }
                println!("  point {idx}: q = {q}, k = {k}, eps = {eps}: ok");
            }
            Err(e) => {
                failures += 1;
                println!("  point {idx}: q = {q}, k = {k}, eps = {eps}: FAILED ({e})");
                records.push(ResultRecord {
                    experiment: idx,
                    n: r.n,
                    q: *q,
                    k: *k,
                    eps: *eps,
                    metric: "solve_failed",
                    value: f64::NAN,
                    tolerance: f64::NAN,
                    pass: false,
                });
            }
        }
    }
    let body = if r.format == "json" {
        (
            "records.json",
            serde_json::to_string_pretty(&records).map_err(compute)? + "\n",
        )
    } else {
        let mut csv = String::from("experiment,N,q,k,eps,metric,value,tolerance,pass\n");
        for rec in &records {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                rec.experiment,
                rec.n,
                fmt_g17(rec.q),
                fmt_g17(rec.k),
                fmt_g17(rec.eps),
                rec.metric,
                fmt_g17(rec.value),
                fmt_g17(rec.tolerance),
                rec.pass
            ));
        }
        ("records.csv", csv)
    };
    println!(
        "sweep: {} records, {} failed points",
        records.len(),
        failures
    );
    write_outputs(&r.out, "sweep", &r.echo("sweep"), &[(body.0, body.1)])?;
    if failures > 0 {
        return Err(CliError::Compute(format!(
            "{failures} sweep points failed (partial records preserved)"
        )));
    }
    Ok(())
}

/// Chart syntax for scan configuration: `flat` or `poly:c2,c3,c4`.
fn parse_chart(spec: &str, tube: f64) -> Result<nsing::transforms::BoundaryChart, CliError> {
    use nsing::transforms::{BoundaryChart, ChartShape};
    if spec.trim() == "flat" {
        return Ok(BoundaryChart::flat(tube));
    }
    let body = spec
        .strip_prefix("poly:")
        .ok_or_else(|| CliError::Usage(format!("chart {spec:?}: expected flat or poly:c2,c3,c4")))?;
    let coefs: Vec<f64> = body
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(usage))
        .collect::<Result<_, _>>()?;
    if coefs.len() > 3 {
        return Err(CliError::Usage(
            "chart polynomial takes at most three coefficients (degrees 2..4)".into(),
        ));
    }
    let get = |i: usize| coefs.get(i).copied().unwrap_or(0.0);
    Ok(BoundaryChart {
        shape: ChartShape::RadialPoly {
            c2: get(0),
            c3: get(1),
            c4: get(2),
        },
        tube_width: tube,
    })
}

fn cmd_verify(common: &Common, suite: Option<&str>) -> Result<(), CliError> {
    let r = Resolved::from(common)?;
    if let Some(label) = suite {
        let known: Vec<&str> = (1..=10).map(acceptance::suite_of).collect();
        if !known.contains(&label) {
            return Err(CliError::Usage(format!(
                "unknown suite {label:?}; expected one of {known:?}"
            )));
        }
    }
    let results = acceptance::run_suite(suite);
    if results.is_empty() {
        return Err(CliError::Usage("suite filter matched no criteria".into()));
    }
    for res in &results {
        println!("{}", acceptance::format_result(res));
        for line in &res.details {
            println!("    {line}");
        }
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    let json = serde_json::to_string_pretty(&results).map_err(compute)?;
    let mut files = vec![("verify.json", json + "\n")];
    // optional chart scan: a `chart` entry in the config file triggers an
    // ellipticity scan with the configured tube, p and seed
    if let Some(path) = &common.config {
        let cfg = ConfigFile::load(path).map_err(usage)?;
        if let Some(chart_spec) = cfg.string("chart") {
            let tube = cfg.f64("tube").map_err(usage)?.unwrap_or(0.3);
            let chart = parse_chart(&chart_spec, tube)?;
            let report =
                nsing::transforms::ellipticity_scan(&chart, r.p, r.n as usize, 60, r.seed)
                    .map_err(compute)?;
            let scan_json = serde_json::to_string_pretty(&report).map_err(compute)?;
            println!("chart scan: {scan_json}");
            files.push(("scan.json", scan_json + "\n"));
        }
    }
    write_outputs(&r.out, "verify", &r.echo("verify"), &files)?;
    if !failed.is_empty() {
        return Err(CliError::Acceptance(format!("criteria {failed:?} failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Exponents(c) => cmd_exponents(c),
        Command::Profile(c) => cmd_profile(c),
        Command::Spectral(c) => cmd_spectral(c),
        Command::Solve(c) => cmd_solve(c),
        Command::Removability(c) => cmd_removability(c),
        Command::Classify {
            common,
            field,
            window,
        } => cmd_classify(common, field, window.as_deref()),
        Command::Sweep {
            common,
            k_list,
            eps_list,
        } => cmd_sweep(common, k_list.as_deref(), eps_list.as_deref()),
        Command::Verify { common, suite } => cmd_verify(common, suite.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
