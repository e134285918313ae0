use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::{geometry_constants, integrate};
use crate::grid::{check_grids, Differences, ScalarField};
use crate::monitor::EstimateReport;

use super::newton::{newton_with_rhs, NewtonOutcome};
use super::problem::{path_rhs, ProblemSpec};

pub const TRACE_HEADER: &str =
    "t,newton_iters,residual_sup,adm_margin,lambda1_max,osc_u,grad_sup,integral_u";

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub newton_iters: usize,
    pub residual_sup: f64,
    pub adm_margin: f64,
    pub lambda1_max: f64,
    pub osc_u: f64,
    /// `sup |∇u|_g`
    pub grad_sup: f64,
    pub integral_u: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContinuationTrace {
    pub records: Vec<TraceRecord>,
    /// Number of rejected steps (Newton failure or inadmissible corrector).
    pub rejected: usize,
}

impl ContinuationTrace {
    pub fn final_t(&self) -> Option<f64> {
        self.records.last().map(|r| r.t)
    }

    pub fn lambda1_max(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.lambda1_max)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.t,
                r.newton_iters,
                r.residual_sup,
                r.adm_margin,
                r.lambda1_max,
                r.osc_u,
                r.grad_sup,
                r.integral_u
            )?;
        }
        Ok(())
    }
}

/// `sup |∇u|_g` with centered first differences, and where it is attained.
pub fn gradient_sup(u: &ScalarField, spec: &ProblemSpec) -> (usize, f64) {
    let g = spec.g();
    let mut best = (0, 0.0);
    for p in 0..u.grid().len() {
        let ginv = g.at(p).inverse().expect("metric is SPD");
        let v = ginv.quad(u.gradient(p)).sqrt();
        if v > best.1 {
            best = (p, v);
        }
    }
    best
}

fn record(t: f64, out: &NewtonOutcome, spec: &ProblemSpec) -> Result<TraceRecord> {
    Ok(TraceRecord {
        t,
        newton_iters: out.iters,
        residual_sup: out.residual_sup,
        adm_margin: *out.margins.last().expect("starting margin is recorded"),
        lambda1_max: out.lambda1_max,
        osc_u: out.u.oscillation(),
        grad_sup: gradient_sup(&out.u, spec).1,
        integral_u: integrate(&out.u, spec.g())?,
    })
}

/// Continuation from the constant root at `t = 0` to `t = 1`.
pub fn continuation_solve(spec: &ProblemSpec) -> Result<(ScalarField, ContinuationTrace)> {
    continuation_solve_from(spec, None)
}

/// Like [`continuation_solve`], with the `t = 0` Newton solve started from
/// the constant root plus `perturbation`.
pub fn continuation_solve_from(
    spec: &ProblemSpec,
    perturbation: Option<&ScalarField>,
) -> Result<(ScalarField, ContinuationTrace)> {
    spec.validate()?;
    let (psi0, c) = spec.path_start()?;
    let grid = *spec.g().grid();
    let mut u = ScalarField::constant(grid, c);
    if let Some(p) = perturbation {
        check_grids(p.grid(), &grid)?;
        u = u.zip_with(p, |a, b| a + b)?;
    }

    let mut trace = ContinuationTrace::default();
    let start = newton_with_rhs(&u, 0.0, &path_rhs(spec, &psi0, 0.0), spec)?;
    trace.records.push(record(0.0, &start, spec)?);
    u = start.u;

    let h = spec.homotopy;
    let mut t = 0.0;
    let mut dt = h.dt_init;
    while t < 1.0 {
        let t_next = if t + dt >= 1.0 { 1.0 } else { t + dt };
        match newton_with_rhs(&u, t_next, &path_rhs(spec, &psi0, t_next), spec) {
            Ok(out) => {
                trace.records.push(record(t_next, &out, spec)?);
                u = out.u;
                t = t_next;
                dt = (2.0 * dt).min(h.dt_max);
            }
            Err(e) if e.is_recoverable() => {
                trace.rejected += 1;
                dt *= 0.5;
                if dt < h.dt_min {
                    return Err(Error::HomotopyFailure { last_t: t });
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok((u, trace))
}

#[derive(Debug, Clone)]
pub struct ConstantSolution {
    pub u: ScalarField,
    /// `c = e^{∫u vol_g}` so that `F(u) = c·f`.
    pub c: f64,
    pub trace: ContinuationTrace,
}

/// Solves `F(u) = c·f` for `u` and the constant `c > 0`.
pub fn solve_up_to_constant(f: &ScalarField, spec: &ProblemSpec) -> Result<ConstantSolution> {
    let spec = ProblemSpec {
        tolerances: spec.tolerances,
        homotopy: spec.homotopy,
        preconditioner: spec.preconditioner,
        ..ProblemSpec::fixed_rhs(spec.background.clone(), f.clone())?
    };
    let (u, trace) = continuation_solve(&spec)?;
    let c = integrate(&u, spec.g())?.exp();
    Ok(ConstantSolution { u, c, trace })
}

/// Both sides of `log min F₀ − max Ψ ≤ ∫u vol_g ≤ log max F₀ − min Ψ`.
///
/// The lower bound is stored negated so that each report reads
/// `observed ≤ bound`.
#[derive(Debug, Clone)]
pub struct IntegralBound {
    pub integral: f64,
    pub lower: EstimateReport,
    pub upper: EstimateReport,
}

impl IntegralBound {
    pub fn pass(&self) -> bool {
        self.lower.pass && self.upper.pass
    }

    pub fn reports(&self) -> [EstimateReport; 2] {
        [self.lower.clone(), self.upper.clone()]
    }
}

pub fn integral_bound_check(u: &ScalarField, spec: &ProblemSpec) -> Result<IntegralBound> {
    check_grids(u.grid(), spec.g().grid())?;
    // χ must be admissible for the bounds to make sense
    geometry_constants(spec.chi(), spec.g())?;
    let lf0 = spec.log_f0()?;
    let integral = integrate(u, spec.g())?;
    let lo = lf0.min() - spec.psi.max();
    let hi = lf0.max() - spec.psi.min();
    Ok(IntegralBound {
        integral,
        lower: EstimateReport::new("integral_lower", -lo, -integral, None),
        upper: EstimateReport::new("integral_upper", hi, integral, None),
    })
}
