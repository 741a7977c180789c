use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use pwduffing::analysis::{
    conjecture_report, find_roots, find_roots_in_samples, fit_expansion, map_ordered, nudge_off_breakpoints,
    sweep_melnikov, FitOptions, ReportTarget, RootOptions, RootReport, Spacing,
};
use pwduffing::config::{RunConfig, SystemSpec};
use pwduffing::flow::{
    displacement, harness_displacement, simulate, write_displacement_csv, DisplacementRecord, TimeDirection,
};
use pwduffing::io::fmt17;
use pwduffing::melnikov::{m1_closed_form, m1_general, m1_quadrature, m2_quadrature, EpsDerivative};
use pwduffing::{Error, PerturbedSystem, ShapeFunction, ZonePartition};

#[derive(Parser)]
#[command(name = "pwduffing", version, about = "Melnikov functions, return maps and limit-cycle search")]
struct Cli {
    /// System and run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads for grid work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for randomized property runs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct GridArgs {
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    r_count: Option<usize>,
    /// linear or log
    #[arg(long)]
    spacing: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep M1 and M2 over a radius grid; writes melnikov.csv.
    Melnikov {
        #[command(flatten)]
        grid: GridArgs,
        /// Also check M1 = 0 on this many random partitions; writes melnikov_property.csv.
        #[arg(long, default_value_t = 0)]
        property_runs: usize,
    },
    /// Measure d(h, eps) = P(h, eps) - h; writes displacement.csv.
    Displacement {
        /// Radii (default: the configured grid).
        #[arg(long, value_delimiter = ',')]
        r: Vec<f64>,
        /// Epsilons, zero allowed (default: the configured list).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        eps: Vec<f64>,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Fit d ~ c1 eps + c2 eps^2 per radius; writes fit.csv.
    Fit {
        #[arg(long, value_delimiter = ',')]
        r: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
    },
    /// Locate roots of M1, M2 or the measured displacement; writes roots.csv.
    Search {
        /// m1, m2 or d
        #[arg(long, default_value = "m1")]
        function: String,
        /// Epsilon for `--function d`.
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Integrate one trajectory; writes trajectory.csv and events.csv.
    Simulate {
        #[arg(long, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, allow_hyphen_values = true)]
        y0: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        eps: f64,
        #[arg(long, default_value_t = 2.0 * std::f64::consts::PI)]
        t_max: f64,
        /// Sample spacing (default: every accepted step).
        #[arg(long)]
        output_step: Option<f64>,
        #[arg(long)]
        backward: bool,
    },
    /// Assemble the limit-cycle evidence report; writes report.json and report.txt.
    Report {
        #[command(flatten)]
        grid: GridArgs,
        /// Epsilons for the displacement scan; a bare `--eps` gives Melnikov evidence only.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        eps: Option<Vec<f64>>,
    },
}

enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn io_fail(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("cannot write {}: {e}", path.display()))
}

fn create(out: &Path, name: &str) -> std::result::Result<(BufWriter<File>, PathBuf), Failure> {
    let path = out.join(name);
    let f = File::create(&path).map_err(|e| io_fail(&path, e))?;
    Ok((BufWriter::new(f), path))
}

fn apply_grid(cfg: &mut RunConfig, g: &GridArgs) -> CmdResult {
    if let Some(v) = g.r_min {
        cfg.grid.r_min = v;
    }
    if let Some(v) = g.r_max {
        cfg.grid.r_max = v;
    }
    if let Some(v) = g.r_count {
        cfg.grid.count = v;
    }
    if let Some(s) = &g.spacing {
        cfg.grid.spacing = match s.as_str() {
            "linear" => Spacing::Linear,
            "log" => Spacing::Log,
            other => return Err(Failure::Input(format!("--spacing must be linear or log, got {other}"))),
        };
    }
    Ok(())
}

fn family(cfg: &RunConfig, command: &str) -> std::result::Result<PerturbedSystem, Failure> {
    match &cfg.system {
        SystemSpec::Family(s) => Ok(s.clone()),
        SystemSpec::Harness(_) => Err(Failure::Input(format!("`{command}` needs a piecewise system, not a harness"))),
    }
}

fn cmd_melnikov(cfg: &RunConfig, out: &Path, property_runs: usize) -> CmdResult {
    let grid = cfg.grid.radii()?;
    match &cfg.system {
        SystemSpec::Family(system) => {
            let curve = sweep_melnikov(system, &grid, cfg.tol, cfg.jobs)?;
            let (w, path) = create(out, "melnikov.csv")?;
            curve.write_csv(w).map_err(|e| io_fail(&path, e))?;
            for s in curve.samples.iter().filter(|s| s.error.is_some()) {
                eprintln!("warning: r = {}: {}", s.r, s.error.as_deref().unwrap_or(""));
            }
            println!("max |M1| = {:.3e}", curve.max_abs_m1());
            println!("min M2   = {:.12}", curve.min_m2());
            println!("first nonvanishing order: {:?}", curve.first_nonvanishing_order);
            if curve.samples.iter().any(|s| s.error.is_some()) {
                return Err(Failure::Numerical("some Melnikov samples failed".into()));
            }
        }
        SystemSpec::Harness(h) => {
            let values = map_ordered(&grid, cfg.jobs, |&r| m1_general(h, r, cfg.tol));
            let (w, path) = create(out, "melnikov.csv")?;
            let mut w = csv::Writer::from_writer(w);
            let fail = |e: csv::Error| io_fail(&path, e);
            w.write_record(["r", "m1_general"]).map_err(fail)?;
            let mut max = 0.0f64;
            for (r, v) in grid.iter().zip(values) {
                let v = v?;
                max = max.max(v.abs());
                w.write_record([fmt17(*r), fmt17(v)]).map_err(fail)?;
            }
            w.flush().map_err(|e| io_fail(&path, e))?;
            println!("max |M1| = {max:.6e}");
        }
    }
    if property_runs > 0 {
        property_check(cfg, out, property_runs)?;
    }
    Ok(())
}

fn random_system(rng: &mut StdRng) -> PerturbedSystem {
    let n = rng.gen_range(1..=8);
    let mut a = rng.gen_range(0.05..1.0);
    let mut breakpoints = Vec::with_capacity(n);
    for _ in 0..n {
        breakpoints.push(a);
        a += rng.gen_range(0.05..1.0);
    }
    let mut alpha = rng.gen_range(-3.0..3.0);
    let mut slopes = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        slopes.push(alpha);
        alpha += rng.gen_range(0.05..2.0);
    }
    let shape = match rng.gen_range(0..3) {
        0 => ShapeFunction::Linear,
        1 => ShapeFunction::Cubic,
        _ => {
            let coeffs = (0..=5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            ShapeFunction::polynomial(coeffs).expect("finite coefficients")
        }
    };
    let partition = ZonePartition::new(breakpoints, slopes).expect("valid by construction");
    PerturbedSystem::new(partition, shape)
}

fn property_check(cfg: &RunConfig, out: &Path, runs: usize) -> CmdResult {
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let cases: Vec<(PerturbedSystem, f64)> = (0..runs)
        .map(|_| {
            let sys = random_system(&mut rng);
            let top = sys.partition.breakpoints().last().copied().unwrap_or(1.0);
            let r = rng.gen_range(0.05..top + 1.0);
            let r = nudge_off_breakpoints(&sys.partition, r).0;
            (sys, r)
        })
        .collect();
    let rows = map_ordered(&cases, cfg.jobs, |(sys, r)| {
        let cf = m1_closed_form(&sys.partition, &sys.shape, *r)?;
        let q = m1_quadrature(sys, *r, cfg.tol)?;
        Ok::<_, Error>((sys.partition.n(), *r, cf, q))
    });
    let (w, path) = create(out, "melnikov_property.csv")?;
    let mut w = csv::Writer::from_writer(w);
    let fail = |e: csv::Error| io_fail(&path, e);
    w.write_record(["run", "n", "r", "m1_closed", "pieces_abs_sum", "m1_quad"]).map_err(fail)?;
    let mut worst_rel = 0.0f64;
    let mut worst_quad = 0.0f64;
    for (k, row) in rows.into_iter().enumerate() {
        let (n, r, cf, q) = row?;
        let scale = cf.first_quarter.abs() + cf.middle_half.abs() + cf.last_quarter.abs();
        if scale > 0.0 {
            worst_rel = worst_rel.max(cf.total.abs() / scale);
        }
        worst_quad = worst_quad.max(q.abs());
        w.write_record([k.to_string(), n.to_string(), fmt17(r), fmt17(cf.total), fmt17(scale), fmt17(q)])
            .map_err(fail)?;
    }
    w.flush().map_err(|e| io_fail(&path, e))?;
    println!("property runs: {runs} (seed {})", cfg.seed);
    println!("  max |M1 closed| / sum |pieces| = {worst_rel:.3e}");
    println!("  max |M1 quadrature|            = {worst_quad:.3e}");
    Ok(())
}

fn cmd_displacement(cfg: &RunConfig, out: &Path, radii: &[f64], eps: &[f64]) -> CmdResult {
    let radii = if radii.is_empty() { cfg.grid.radii()? } else { radii.to_vec() };
    let eps = if eps.is_empty() { cfg.epsilons.clone() } else { eps.to_vec() };
    if eps.is_empty() {
        return Err(Failure::Input("no epsilons given".into()));
    }
    let pairs: Vec<(f64, f64)> = eps.iter().flat_map(|&e| radii.iter().map(move |&r| (r, e))).collect();
    let records: Vec<_> = match &cfg.system {
        SystemSpec::Family(s) => map_ordered(&pairs, cfg.jobs, |&(r, e)| displacement(s, r, e, &cfg.integration)),
        SystemSpec::Harness(h) => {
            map_ordered(&pairs, cfg.jobs, |&(r, e)| harness_displacement(h, r, e, &cfg.integration))
        }
    };
    let mut ok: Vec<DisplacementRecord> = Vec::with_capacity(records.len());
    let mut first_err = None;
    for (rec, (r, e)) in records.into_iter().zip(&pairs) {
        match rec {
            Ok(rec) => ok.push(rec),
            Err(err) => {
                eprintln!("r = {r}, eps = {e}: {err}");
                first_err.get_or_insert(err);
            }
        }
    }
    let (w, path) = create(out, "displacement.csv")?;
    write_displacement_csv(&ok, w).map_err(|e| io_fail(&path, e))?;
    if let Some(err) = first_err {
        return Err(err.into());
    }
    let min = ok.iter().map(|r| r.d).fold(f64::INFINITY, f64::min);
    println!("{} displacement samples, min d = {min:.6e}", ok.len());
    Ok(())
}

fn cmd_fit(cfg: &RunConfig, out: &Path, radii: &[f64], eps: &[f64]) -> CmdResult {
    let system = family(cfg, "fit")?;
    let radii = if radii.is_empty() { cfg.fit_radii.clone() } else { radii.to_vec() };
    let eps = if eps.is_empty() { cfg.fit_epsilons.clone() } else { eps.to_vec() };
    let opts = FitOptions {
        jobs: cfg.jobs,
        ..FitOptions::default()
    };
    let (w, path) = create(out, "fit.csv")?;
    let mut w = csv::Writer::from_writer(w);
    let fail = |e: csv::Error| io_fail(&path, e);
    w.write_record([
        "r",
        "c1",
        "c2",
        "c1_stderr",
        "c2_stderr",
        "c2_uncertainty",
        "residual_norm",
        "m2_target",
    ])
    .map_err(fail)?;
    for &r in &radii {
        let fit = fit_expansion(&system, r, &eps, &cfg.integration, &opts)?;
        println!(
            "r = {r}: c1 = {:.3e}, c2 = {:.6} (+/- {:.2e}), target {:.6}",
            fit.c1, fit.c2, fit.c2_uncertainty, fit.m2_target
        );
        w.write_record([
            fmt17(fit.r),
            fmt17(fit.c1),
            fmt17(fit.c2),
            fmt17(fit.c1_stderr),
            fmt17(fit.c2_stderr),
            fmt17(fit.c2_uncertainty),
            fmt17(fit.residual_norm),
            fmt17(fit.m2_target),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| io_fail(&path, e))?;
    Ok(())
}

fn cmd_search(cfg: &RunConfig, out: &Path, function: &str, eps: f64) -> CmdResult {
    let grid = cfg.grid.radii()?;
    let opts = RootOptions::default();
    let report: RootReport = match (&cfg.system, function) {
        (SystemSpec::Family(s), "m1") => {
            let grid: Vec<f64> = grid.iter().map(|&r| nudge_off_breakpoints(&s.partition, r).0).collect();
            find_roots(|r| m1_quadrature(s, r, cfg.tol), &grid, "M1 (quadrature)", &opts)?
        }
        (SystemSpec::Family(s), "m2") => {
            let grid: Vec<f64> = grid.iter().map(|&r| nudge_off_breakpoints(&s.partition, r).0).collect();
            find_roots(|r| m2_quadrature(s, r, cfg.tol, EpsDerivative::Analytic), &grid, "M2 (quadrature)", &opts)?
        }
        (SystemSpec::Harness(h), "m1") => find_roots(|r| m1_general(h, r, cfg.tol), &grid, "M1 (general)", &opts)?,
        (SystemSpec::Harness(_), "m2") => {
            return Err(Failure::Input("M2 is only available for piecewise systems".into()))
        }
        (_, "d") => {
            let label = format!("d(r, {eps})");
            let values: Vec<_> = match &cfg.system {
                SystemSpec::Family(s) => {
                    let grid: Vec<f64> = grid.iter().map(|&r| nudge_off_breakpoints(&s.partition, r).0).collect();
                    map_ordered(&grid, cfg.jobs, |&r| displacement(s, r, eps, &cfg.integration))
                }
                SystemSpec::Harness(h) => {
                    map_ordered(&grid, cfg.jobs, |&r| harness_displacement(h, r, eps, &cfg.integration))
                }
            };
            let records = values.into_iter().collect::<pwduffing::Result<Vec<_>>>()?;
            let xs: Vec<f64> = records.iter().map(|r| r.r).collect();
            let ys: Vec<f64> = records.iter().map(|r| r.d).collect();
            find_roots_in_samples(&xs, &ys, &label, &opts)?
        }
        (_, other) => return Err(Failure::Input(format!("--function must be m1, m2 or d, got {other}"))),
    };
    let (w, path) = create(out, "roots.csv")?;
    report.write_csv(w).map_err(|e| io_fail(&path, e))?;
    println!("{}: {} root(s)", report.function, report.roots.len());
    for r in report.roots.iter().chain(&report.suspected_even) {
        println!("  r = {:.10} ({}), derivative {:.6}", r.location, r.kind.label(), r.derivative);
    }
    for n in &report.notes {
        println!("  note: {n}");
    }
    println!("predicted limit cycles: {}", report.predicted_limit_cycles);
    Ok(())
}

fn cmd_simulate(
    cfg: &RunConfig,
    out: &Path,
    start: [f64; 2],
    eps: f64,
    t_max: f64,
    output_step: Option<f64>,
    backward: bool,
) -> CmdResult {
    let system = family(cfg, "simulate")?;
    let mut settings = cfg.integration;
    settings.output_step = output_step;
    if backward {
        settings.direction = TimeDirection::Backward;
    }
    let traj = simulate(&system, start, eps, t_max, &settings)?;
    let (w, path) = create(out, "trajectory.csv")?;
    traj.write_samples_csv(w).map_err(|e| io_fail(&path, e))?;
    let (w, path) = create(out, "events.csv")?;
    traj.write_events_csv(w).map_err(|e| io_fail(&path, e))?;
    let end = traj.final_sample().expect("nonempty trajectory");
    println!(
        "{} samples, {} events ({} crossings); end (t, x, y) = ({}, {}, {})",
        traj.samples.len(),
        traj.events.len(),
        traj.crossings().count(),
        end.t,
        end.x,
        end.y
    );
    Ok(())
}

fn cmd_report(cfg: &RunConfig, out: &Path) -> CmdResult {
    let settings = cfg.report_settings()?;
    let report = match &cfg.system {
        SystemSpec::Family(s) => conjecture_report(ReportTarget::Family(s), &settings)?,
        SystemSpec::Harness(h) => conjecture_report(ReportTarget::Harness(h), &settings)?,
    };
    let path = out.join("report.json");
    fs::write(&path, report.to_json() + "\n").map_err(|e| io_fail(&path, e))?;
    let path = out.join("report.txt");
    fs::write(&path, report.render_text()).map_err(|e| io_fail(&path, e))?;
    println!("{}", report.verdict);
    Ok(())
}

fn run(cli: Cli) -> CmdResult {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Failure::Input("--jobs must be at least 1".into()));
        }
        cfg.jobs = j;
    }
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t > 0.0) {
            return Err(Failure::Input(format!("--tol must be positive, got {t}")));
        }
        cfg.tol = t;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    fs::create_dir_all(&cli.out).map_err(|e| io_fail(&cli.out, e))?;
    let out = cli.out.as_path();
    match cli.command {
        Command::Melnikov { grid, property_runs } => {
            apply_grid(&mut cfg, &grid)?;
            cmd_melnikov(&cfg, out, property_runs)
        }
        Command::Displacement { r, eps, grid } => {
            apply_grid(&mut cfg, &grid)?;
            cmd_displacement(&cfg, out, &r, &eps)
        }
        Command::Fit { r, eps } => cmd_fit(&cfg, out, &r, &eps),
        Command::Search { function, eps, grid } => {
            apply_grid(&mut cfg, &grid)?;
            cmd_search(&cfg, out, &function, eps)
        }
        Command::Simulate {
            x0,
            y0,
            eps,
            t_max,
            output_step,
            backward,
        } => cmd_simulate(&cfg, out, [x0, y0], eps, t_max, output_step, backward),
        Command::Report { grid, eps } => {
            apply_grid(&mut cfg, &grid)?;
            if let Some(eps) = eps {
                cfg.epsilons = eps;
            }
            cmd_report(&cfg, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
