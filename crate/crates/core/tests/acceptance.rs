//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hessquot::cli::run_config;
use hessquot::geometry::{geometry_constants, Background};
use hessquot::grid::{Grid, ScalarField};
use hessquot::identities::{concavity_sweep, derivative_sweep, k_concavity_sweep};
use hessquot::kernel::concavity_identity;
use hessquot::monitor::{
    check_c0, check_c1, check_commutation, eigvec_field_checks, structural_report, EstimateReport,
    MonitorConfig,
};
use hessquot::oracle::{make_manufactured, Family};
use hessquot::solver::{
    continuation_solve, continuation_solve_from, integral_bound_check, newton_solve_at_t,
    Preconditioner, ProblemSpec,
};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Converged flat runs collected for the a priori estimate checks.
#[derive(Default)]
struct FlatRuns {
    runs: Vec<(String, ProblemSpec, ScalarField)>,
}

impl FlatRuns {
    fn push(&mut self, name: impl Into<String>, spec: &ProblemSpec, u: &ScalarField) {
        self.runs.push((name.into(), spec.clone(), u.clone()));
    }
}

fn smooth_perturbation(grid: Grid, rng: &mut ChaCha8Rng, amp: f64) -> ScalarField {
    let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-amp..amp));
    ScalarField::from_fn(grid, |x, y| {
        c[0] * x.cos() + c[1] * y.sin() + c[2] * (x + y).sin() + c[3] * (2.0 * x - y).cos()
    })
}

fn c1_concavity() -> Outcome {
    let t = Instant::now();
    let [identity, _] = match concavity_sweep(SEED, 10_000) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (l, r) = concavity_identity(&[2.0, 1.0], &[1.0, 0.0]).unwrap();
    let point = (l - 2.0 / 27.0).abs() <= 1e-14 && (r - 2.0 / 27.0).abs() <= 1e-14;
    let el = t.elapsed();
    outcome(
        identity.pass && point && el < Duration::from_secs(5),
        format!(
            "10^4 draws max |lhs-rhs|/(1+|lhs|) = {:.2e} (tol 1e-10); (2,1),(1,0) -> lhs {l:.15} rhs {r:.15} vs 2/27; {:.2?}",
            identity.worst, el
        ),
    )
}

fn c2_derivatives() -> Outcome {
    let t = Instant::now();
    let [first, second] = match derivative_sweep(SEED + 1, 1_000) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let el = t.elapsed();
    outcome(
        first.pass && second.pass && el < Duration::from_secs(5),
        format!(
            "10^3 draws: F^ii rel err {:.2e} (tol 1e-6), F^ii,jj err {:.2e} (tol 1e-4); {:.2?}",
            first.worst, second.worst, el
        ),
    )
}

fn c3_bounds() -> Outcome {
    let [_, bounds] = match concavity_sweep(SEED, 10_000) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    outcome(
        bounds.pass,
        format!(
            "1/n <= sum F^ii <= 1 and F^nn >= .. >= F^11 on the 10^4 draws: worst violation {:.2e} (tol 1e-12)",
            bounds.worst
        ),
    )
}

fn c4_k_concavity() -> Outcome {
    let t = Instant::now();
    let sweeps = match k_concavity_sweep(SEED + 2, 1_000) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let el = t.elapsed();
    let pass = sweeps.iter().all(|s| s.result.pass) && el < Duration::from_secs(30);
    let worst = sweeps.iter().map(|s| s.result.worst).fold(0.0, f64::max);
    let eps: Vec<String> = sweeps
        .iter()
        .map(|s| format!("(n{},k{}) {:.3e}", s.n, s.k, s.eps0_max))
        .collect();
    outcome(
        pass,
        format!(
            "10^3 draws per (n,k): min gap {:.2e} (tol -1e-8); empirical eps0 max: {}; {:.2?}",
            -worst,
            eps.join(", "),
            el
        ),
    )
}

fn c5_manufactured(flat: &mut FlatRuns) -> Outcome {
    let t = Instant::now();
    let mut errors = Vec::new();
    for n in [64, 128] {
        let grid = Grid::standard(n).unwrap();
        let m = make_manufactured(&Family::isotropic(0.1, 0.1), grid).unwrap();
        let spec = ProblemSpec::new(m.g.clone(), m.chi.clone(), m.psi.clone()).unwrap();
        match continuation_solve(&spec) {
            Ok((u, trace)) if trace.final_t() == Some(1.0) => {
                errors.push(u.sup_distance(&m.u_star).unwrap());
                flat.push(format!("manufactured N={n}"), &spec, &u);
            }
            Ok(_) => return outcome(false, format!("N={n}: did not reach t = 1")),
            Err(e) => return outcome(false, format!("N={n}: {e}")),
        }
    }
    let el = t.elapsed();
    let ratio = errors[0] / errors[1];
    outcome(
        errors[0] <= 5e-3 && (3.2..=4.8).contains(&ratio) && el < Duration::from_secs(120),
        format!(
            "sup|u-u*| N=64 {:.3e} (tol 5e-3), N=128 {:.3e}, ratio {ratio:.3} in [3.2,4.8]; {:.2?}",
            errors[0], errors[1], el
        ),
    )
}

fn c6_uniqueness(flat: &mut FlatRuns) -> Outcome {
    let grid = Grid::standard(64).unwrap();
    let psi = ScalarField::from_fn(grid, |x, y| 0.3 * x.sin() * y.sin());
    let spec = ProblemSpec::from_background(Background::flat(grid), psi).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let pa = smooth_perturbation(grid, &mut rng, 0.02);
    let pb = smooth_perturbation(grid, &mut rng, 0.02);
    // the second run also takes a different step schedule and Krylov preconditioner
    let mut other = spec.clone();
    other.homotopy.dt_init = 0.05;
    other.homotopy.dt_max = 0.2;
    other.preconditioner = Preconditioner::Jacobi;
    let (ua, ub) = match (
        continuation_solve_from(&spec, Some(&pa)),
        continuation_solve_from(&other, Some(&pb)),
    ) {
        (Ok((a, _)), Ok((b, _))) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e.to_string()),
    };
    let paths = ua.sup_distance(&ub).unwrap();
    flat.push("uniqueness run a", &spec, &ua);
    flat.push("uniqueness run b", &spec, &ub);

    // Newton at t = 1 from a perturbed solution
    let start = ua
        .zip_with(&smooth_perturbation(grid, &mut rng, 0.01), |a, b| a + b)
        .unwrap();
    let direct = match newton_solve_at_t(&start, 1.0, &spec) {
        Ok(o) => o.u.sup_distance(&ua).unwrap(),
        Err(e) => return outcome(false, format!("newton from perturbed solution: {e}")),
    };
    outcome(
        paths <= 1e-8 && direct <= 1e-8,
        format!("N=64, psi = 0.3 sin x sin y: perturbed paths differ by {paths:.2e}, Newton restart by {direct:.2e} (tol 1e-8)"),
    )
}

fn c7_estimates(flat: &FlatRuns) -> Outcome {
    let mut worst_c0: f64 = 0.0;
    let mut worst_c1: f64 = 0.0;
    let mut failures = Vec::new();
    for (name, spec, u) in &flat.runs {
        let bg = &spec.background;
        let consts = geometry_constants(&bg.chi, &bg.g).unwrap();
        let mut reports: Vec<EstimateReport> = Vec::new();
        match (
            check_c0(u, bg, &consts),
            check_c1(u, bg, &consts),
            integral_bound_check(u, spec),
        ) {
            (Ok(a), Ok(b), Ok(c)) => {
                // bounds are the analytic π² and 2π² on the flat unit torus
                if (a.bound - PI * PI).abs() > 1e-9 || (b.bound - 2.0 * PI * PI).abs() > 1e-9 {
                    failures.push(format!("{name}: unexpected bounds {} {}", a.bound, b.bound));
                }
                worst_c0 = worst_c0.max(a.observed);
                worst_c1 = worst_c1.max(b.observed.sqrt());
                reports.push(a);
                reports.push(b);
                reports.extend(c.reports());
            }
            (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                failures.push(format!("{name}: {e}"))
            }
        }
        for r in reports.iter().filter(|r| !r.pass) {
            failures.push(format!("{name}: {r}"));
        }
    }
    outcome(
        failures.is_empty() && !flat.runs.is_empty(),
        if failures.is_empty() {
            format!(
                "{} converged flat runs: max osc {worst_c0:.3e} <= pi^2, max |grad u| {worst_c1:.3e} <= pi*sqrt2, integral bounds hold",
                flat.runs.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn c8_commutation() -> Outcome {
    let mut obs = Vec::new();
    for n in [32, 64, 128] {
        let grid = Grid::standard(n).unwrap();
        let m = make_manufactured(&Family::conformal(0.1, 0.1, 0.1), grid).unwrap();
        let bg = m.background().unwrap();
        let r = check_commutation(&m.u_star, &bg.g, &bg.conn).unwrap();
        obs.push((r.observed, r.pass));
    }
    let r1 = obs[0].0 / obs[1].0;
    let r2 = obs[1].0 / obs[2].0;
    let ok = |r: f64| (3.2..=4.8).contains(&r);
    outcome(
        ok(r1) && ok(r2) && obs.iter().all(|o| o.1),
        format!(
            "conformal family mismatch N=32/64/128: {:.3e} {:.3e} {:.3e}; ratios {r1:.3} {r2:.3} in [3.2,4.8]",
            obs[0].0, obs[1].0, obs[2].0
        ),
    )
}

fn c9_eigvec() -> Outcome {
    let cfg = MonitorConfig {
        gap_floor: 0.25,
        ..Default::default()
    };
    let mut reports = Vec::new();
    for n in [64, 128] {
        let grid = Grid::standard(n).unwrap();
        let m = make_manufactured(&Family::peaked(), grid).unwrap();
        match eigvec_field_checks(&m.u_star, &m.background().unwrap(), &cfg) {
            Ok(r) => reports.push(r),
            Err(e) => return outcome(false, e.to_string()),
        }
    }
    // compare on physical points tested at both resolutions
    let coarse: std::collections::HashSet<_> = reports[0].samples.iter().map(|s| s.node).collect();
    let fine: std::collections::HashSet<_> = reports[1].samples.iter().map(|s| s.node).collect();
    let a = reports[0].errors_where(|(i, j)| fine.contains(&(2 * i, 2 * j)));
    let b = reports[1]
        .errors_where(|(i, j)| i % 2 == 0 && j % 2 == 0 && coarse.contains(&(i / 2, j / 2)));
    let (r1, r2) = (a.0 / b.0, a.1 / b.1);
    let ok = |r: f64| (3.0..=5.0).contains(&r);
    let unit = reports.iter().map(|r| r.unit_norm_max).fold(0.0, f64::max);
    outcome(
        ok(r1) && ok(r2) && unit <= 1e-12,
        format!(
            "peaked family, gap floor 0.25: V_i err {:.3e} -> {:.3e} (ratio {r1:.3}), V_ii err {:.3e} -> {:.3e} (ratio {r2:.3}) in [3,5]; |V|=1 to {unit:.1e}",
            a.0, b.0, a.1, b.1
        ),
    )
}

fn c10_structural(flat: &mut FlatRuns) -> Outcome {
    let cfg = MonitorConfig::default();
    let mut cs = Vec::new();
    let mut l1 = Vec::new();
    for n in [32, 64, 128] {
        let grid = Grid::standard(n).unwrap();
        let m = make_manufactured(&Family::peaked(), grid).unwrap();
        let spec = ProblemSpec::new(m.g.clone(), m.chi.clone(), m.psi.clone()).unwrap();
        let (u, trace) = match continuation_solve(&spec) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("N={n}: {e}")),
        };
        flat.push(format!("peaked N={n}"), &spec, &u);
        let r = structural_report(&u, &spec.background, &cfg).unwrap();
        match r.empirical_c {
            Some(c) => cs.push(c),
            None => return outcome(false, format!("N={n}: no node passes the structural gate")),
        }
        l1.push(trace.lambda1_max());
    }
    let (lo, hi) = cs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| {
            (a.min(c), b.max(c))
        });
    // stability within a factor 2: all values in a band [m, 2m]
    let stable = lo.is_finite()
        && if lo > 0.0 {
            hi <= 2.0 * lo
        } else {
            (hi - lo) <= hi.abs().max(lo.abs())
        };
    let drift = (l1[1] - l1[2]).abs() / l1[1].max(l1[2]);
    outcome(
        stable && drift < 0.2,
        format!(
            "peaked family solved at N=32/64/128: empirical C {:.4e} {:.4e} {:.4e}; path lambda1_max {:.4} {:.4} {:.4}, 64 vs 128 drift {:.2}%",
            cs[0],
            cs[1],
            cs[2],
            l1[0],
            l1[1],
            l1[2],
            100.0 * drift
        ),
    )
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        write_config(
            dir.path(),
            "verify.toml",
            "command = \"verify-estimates\"\nseed = 7\n[grid]\nn = 32\n[metric]\nfamily = \"conformal\"\namplitude = 0.1\n[rhs]\npsi = \"0.3 sin(x) sin(y)\"\n",
        ),
        write_config(
            dir.path(),
            "ident.toml",
            "command = \"check-identities\"\nseed = 7\n[identities]\nsamples = 2000\n",
        ),
    ];
    let mut compared = 0;
    for cfg in &configs {
        let a = dir.path().join(format!("{}-a", cfg.display()));
        let b = dir.path().join(format!("{}-b", cfg.display()));
        for out in [&a, &b] {
            if let Err(e) = run_config(cfg, Some(out), false) {
                return outcome(false, format!("{}: {e}", cfg.display()));
            }
        }
        for entry in std::fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            let x = std::fs::read(a.join(&name)).unwrap();
            let y = std::fs::read(b.join(&name)).unwrap_or_default();
            if x != y {
                return outcome(
                    false,
                    format!("{} differs between runs", name.to_string_lossy()),
                );
            }
            compared += 1;
        }
    }
    outcome(
        compared >= 4,
        format!("{compared} output files byte-identical across repeated runs (timestamp disabled)"),
    )
}

fn main() {
    let mut flat = FlatRuns::default();
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut FlatRuns) -> Outcome>)> = vec![
        ("1 concavity identity", Box::new(|_| c1_concavity())),
        ("2 derivative formulas", Box::new(|_| c2_derivatives())),
        ("3 first derivative bounds", Box::new(|_| c3_bounds())),
        ("4 k-concavity weak form", Box::new(|_| c4_k_concavity())),
        ("5 manufactured recovery", Box::new(c5_manufactured)),
        ("6 uniqueness", Box::new(c6_uniqueness)),
        ("10 structural term", Box::new(c10_structural)),
        (
            "7 a priori estimates",
            Box::new(|f: &mut FlatRuns| c7_estimates(f)),
        ),
        ("8 commutation", Box::new(|_| c8_commutation())),
        ("9 eigenvector field calculus", Box::new(|_| c9_eigvec())),
        ("11 determinism", Box::new(|_| c11_determinism())),
    ];
    let mut results = Vec::new();
    for (name, f) in criteria {
        let o = f(&mut flat);
        results.push((name, o));
    }
    results.sort_by_key(|(name, _)| name.split(' ').next().unwrap().parse::<u32>().unwrap());
    for (name, o) in &results {
        println!(
            "[{}] criterion {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let results: Vec<bool> = results.iter().map(|(_, o)| o.pass).collect();
    let failed = results.iter().filter(|p| !**p).count();
    println!(
        "acceptance: {} of {} criteria pass",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
