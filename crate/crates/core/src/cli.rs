//! Batch entry point.
//!
//! Exit codes: 0 all asserted checks pass, 1 configuration or input error,
//! 2 solver nonconvergence, 3 an asserted check failed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::Parser;

use crate::config::{Command, Resolved, RunConfig};
use crate::error::{Error, Result};
use crate::geometry::{geometry_constants, Background};
use crate::grid::ScalarField;
use crate::identities::{run_all, write_sweeps};
use crate::monitor::{
    check_c0, check_c1, check_commutation, eigvec_field_checks, extremal_system_residual,
    structural_report, test_quantities, write_reports, EstimateReport,
};
use crate::solver::{
    continuation_solve, integral_bound_check, solve_up_to_constant, ContinuationTrace,
};

#[derive(Debug, Parser)]
#[command(
    name = "hessquot",
    version,
    about = "σ₂/σ₁ quotient equation solver and estimate monitors"
)]
pub struct Cli {
    /// TOML run configuration
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the config
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Omit the `# generated at` line from CSV outputs
    #[arg(long)]
    pub no_timestamp: bool,
    /// Worker threads (default: rayon's choice)
    #[arg(long)]
    pub threads: Option<usize>,
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. }
        | Error::HomotopyFailure { .. }
        | Error::Admissibility { .. } => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

struct Output {
    dir: PathBuf,
    timestamp: bool,
}

impl Output {
    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let mut f = BufWriter::new(File::create(self.dir.join(name))?);
        if self.timestamp {
            let secs = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            writeln!(f, "# generated at unix time {secs}")?;
        }
        Ok(f)
    }

    fn field(&self, name: &str, u: &ScalarField) -> Result<()> {
        let mut f = BufWriter::new(File::create(self.dir.join(name))?);
        u.write_text(&mut f)?;
        f.flush()?;
        Ok(())
    }

    fn trace(&self, trace: &ContinuationTrace) -> Result<()> {
        let mut f = self.create("trace.csv")?;
        trace.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    fn reports(&self, reports: &[EstimateReport]) -> Result<()> {
        let mut f = self.create("monitor.csv")?;
        write_reports(&mut f, reports)?;
        f.flush()?;
        Ok(())
    }
}

/// Parses arguments already split by clap and runs; returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_CONFIG;
        }
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match run_config(&cli.config, cli.output.as_deref(), !cli.no_timestamp) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one configuration. `Ok(false)` means an asserted check failed.
pub fn run_config(path: &Path, output: Option<&Path>, timestamp: bool) -> Result<bool> {
    let cfg = RunConfig::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let dir = output
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let out = Output { dir, timestamp };

    if cfg.command == Command::CheckIdentities {
        if cfg.identities.samples == 0 {
            return Err(Error::config("identities.samples", "must be positive"));
        }
        std::fs::create_dir_all(&out.dir)?;
        return check_identities(&cfg, &out);
    }

    let resolved = cfg.resolve(base)?;
    std::fs::create_dir_all(&out.dir)?;
    match cfg.command {
        Command::Solve => solve(&resolved, &out, false),
        Command::VerifyEstimates => solve(&resolved, &out, true),
        Command::SolveFixedRhs => solve_fixed(&resolved, &out),
        Command::Monitor => {
            let file = cfg.monitor.solution_file.as_ref().ok_or_else(|| {
                Error::config("monitor.solution_file", "required by the monitor command")
            })?;
            let full = base.join(file);
            let reader = File::open(&full).map_err(|e| {
                Error::config("monitor.solution_file", format!("{}: {e}", full.display()))
            })?;
            let u = ScalarField::read_text(BufReader::new(reader))
                .map_err(|e| Error::config("monitor.solution_file", e.to_string()))?;
            if !u.grid().same_as(resolved.spec.g().grid()) {
                return Err(Error::config(
                    "monitor.solution_file",
                    "field grid does not match [grid]",
                ));
            }
            monitors(&u, &resolved, &out, true)
        }
        Command::CheckIdentities => unreachable!(),
    }
}

fn check_identities(cfg: &RunConfig, out: &Output) -> Result<bool> {
    let (sweeps, k) = run_all(cfg.seed, cfg.identities.samples)?;
    let mut f = out.create("identities.csv")?;
    write_sweeps(&mut f, &sweeps)?;
    f.flush()?;
    for s in &sweeps {
        println!(
            "{:<26} {}  max violation {:.3e}  tolerance {:.0e}  ({} samples)",
            s.name,
            if s.pass { "PASS" } else { "FAIL" },
            s.worst,
            s.tolerance,
            s.samples
        );
    }
    for s in &k {
        println!("eps0_max n={} k={}  {:.6e}", s.n, s.k, s.eps0_max);
    }
    Ok(sweeps.iter().all(|s| s.pass))
}

fn report_sup_error(u: &ScalarField, r: &Resolved) -> Result<()> {
    if let Some(m) = &r.manufactured {
        println!("sup_error {:.6e}", u.sup_distance(&m.u_star)?);
    }
    Ok(())
}

fn solve(r: &Resolved, out: &Output, verify: bool) -> Result<bool> {
    let (u, trace) = continuation_solve(&r.spec)?;
    out.trace(&trace)?;
    out.field("solution.txt", &u)?;
    println!(
        "solved: t = {}  steps {}  rejected {}  lambda1_max {:.6}",
        trace.final_t().unwrap_or(0.0),
        trace.records.len(),
        trace.rejected,
        trace.lambda1_max()
    );
    report_sup_error(&u, r)?;
    monitors(&u, r, out, verify)
}

fn solve_fixed(r: &Resolved, out: &Output) -> Result<bool> {
    let f = r
        .spec
        .f
        .as_ref()
        .ok_or_else(|| Error::config("rhs.f", "required by solve-fixed-rhs"))?;
    let sol = solve_up_to_constant(f, &r.spec)?;
    out.trace(&sol.trace)?;
    out.field("solution.txt", &sol.u)?;
    println!("solved: F(u) = c·f with c = {:.12e}", sol.c);
    let bg = &r.spec.background;
    let consts = geometry_constants(&bg.chi, &bg.g)?;
    let reports = vec![
        check_c0(&sol.u, bg, &consts)?,
        check_c1(&sol.u, bg, &consts)?,
    ];
    finish(&reports, out)
}

fn finish(asserted: &[EstimateReport], out: &Output) -> Result<bool> {
    for rep in asserted {
        println!("{rep}");
    }
    out.reports(asserted)?;
    Ok(asserted.iter().all(|r| r.pass))
}

/// Estimate reports on `u`. With `full`, the commutation check and the
/// eigenvalue monitors run as well; the latter are reported only.
fn monitors(u: &ScalarField, r: &Resolved, out: &Output, full: bool) -> Result<bool> {
    let spec = &r.spec;
    let bg: &Background = &spec.background;
    let consts = geometry_constants(&bg.chi, &bg.g)?;
    let mut asserted = vec![check_c0(u, bg, &consts)?, check_c1(u, bg, &consts)?];
    asserted.extend(integral_bound_check(u, spec)?.reports());
    if !full {
        return finish(&asserted, out);
    }
    asserted.push(check_commutation(u, &bg.g, &bg.conn)?);

    let tq = test_quantities(u, bg, &r.monitor)?;
    println!(
        "test_quantities: max W {:.6}  max Q {:.6} at {:?}  masked {}",
        tq.w.max(),
        tq.qtilde.max(),
        tq.argmax,
        tq.masked
    );
    let mut reported = Vec::new();
    match eigvec_field_checks(u, bg, &r.monitor) {
        Ok(e) => println!(
            "eigvec_fields: {} nodes  first {:.3e}  second {:.3e}  unit norm {:.1e}  masked {}",
            e.samples.len(),
            e.first_error,
            e.second_error,
            e.unit_norm_max,
            e.masked
        ),
        Err(Error::Unsupported(why)) => println!("eigvec_fields: skipped ({why})"),
        Err(e) => return Err(e),
    }
    match structural_report(u, bg, &r.monitor) {
        Ok(s) => match (s.empirical_c, s.location) {
            (Some(c), Some(node)) => println!(
                "structural: C = {c:.6e} at {node:?}  ({} nodes above lambda1 {:.4})",
                s.tested, s.threshold
            ),
            _ => println!(
                "structural: not applicable (no node above lambda1 {:.4})",
                s.threshold
            ),
        },
        Err(Error::Unsupported(why)) => println!("structural: skipped ({why})"),
        Err(e) => return Err(e),
    }
    match extremal_system_residual(u, tq.argmax, bg, &r.monitor) {
        Ok(x) => match x.detail {
            Some(d) => {
                println!(
                    "extremal at {:?}: residuals {:.3e} {:.3e}  merged vs direct {:.3e} {:.3e}",
                    x.node,
                    d.residuals[0],
                    d.residuals[1],
                    (d.merged[0] - d.direct[0]).abs(),
                    (d.merged[1] - d.direct[1]).abs()
                );
                reported.extend(d.bounds);
            }
            None => println!("extremal at {:?}: vacuous", x.node),
        },
        Err(Error::Unsupported(why)) => println!("extremal: skipped ({why})"),
        Err(e) => return Err(e),
    }
    for rep in &reported {
        println!("{rep}  (reported)");
    }
    let pass = asserted.iter().all(|r| r.pass);
    for rep in &asserted {
        println!("{rep}");
    }
    asserted.extend(reported);
    out.reports(&asserted)?;
    Ok(pass)
}
