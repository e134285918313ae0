use crate::error::{Error, Result};
use crate::grid::ScalarField;

use super::linear::linearize_with;
use super::problem::{path_rhs, residual_with, Pointwise, ProblemSpec};

/// Smallest damping factor tried by the line search.
pub const MIN_STEP: f64 = 1.0 / (1u64 << 20) as f64;

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub u: ScalarField,
    pub iters: usize,
    pub residual_sup: f64,
    /// Admissibility margin of the starting point and of every accepted iterate.
    pub margins: Vec<f64>,
    pub lambda1_max: f64,
    pub linear_iterations: usize,
}

/// Damped Newton iteration for `G_t(u) = 0` starting from an admissible `u0`.
pub fn newton_solve_at_t(u0: &ScalarField, t: f64, spec: &ProblemSpec) -> Result<NewtonOutcome> {
    let (psi0, _) = spec.path_start()?;
    newton_with_rhs(u0, t, &path_rhs(spec, &psi0, t), spec)
}

pub(crate) fn newton_with_rhs(
    u0: &ScalarField,
    t: f64,
    rhs: &ScalarField,
    spec: &ProblemSpec,
) -> Result<NewtonOutcome> {
    let tol = &spec.tolerances;
    let floor = tol.admissibility_floor;
    let fail = |reason: String| Error::NonConvergence { t, reason };

    let mut u = u0.clone();
    let mut pw = Pointwise::new(&u, spec)?;
    let (p, m) = pw.margin();
    if !(m > floor) {
        return Err(Error::Admissibility {
            node: u.grid().node(p),
            margin: m,
        });
    }
    let mut margins = vec![m];
    let mut r = residual_with(&u, &pw, rhs, spec)?;
    let mut sup = r.sup_norm();
    let mut linear_iterations = 0;

    for iters in 0..=spec.homotopy.max_newton {
        if sup <= tol.newton_residual_sup {
            return Ok(NewtonOutcome {
                lambda1_max: pw.lambda1_max(),
                u,
                iters,
                residual_sup: sup,
                margins,
                linear_iterations,
            });
        }
        if iters == spec.homotopy.max_newton {
            break;
        }
        let op = linearize_with(&pw, spec);
        let b: Vec<f64> = r.values().iter().map(|v| -v).collect();
        let (delta, info) = op
            .solve(&b, spec.preconditioner, tol.linear_rel)
            .map_err(|e| fail(e.to_string()))?;
        linear_iterations += info.iterations;

        let mut s = 1.0;
        let accepted = loop {
            if s < MIN_STEP {
                break None;
            }
            let vals = u
                .values()
                .iter()
                .zip(&delta)
                .map(|(a, d)| a + s * d)
                .collect();
            let trial = ScalarField::new(*u.grid(), vals)?;
            let tpw = Pointwise::new(&trial, spec)?;
            let (_, tm) = tpw.margin();
            if tm > floor {
                let tr = residual_with(&trial, &tpw, rhs, spec)?;
                let tsup = tr.sup_norm();
                if tsup < sup {
                    break Some((trial, tpw, tr, tsup, tm));
                }
            }
            s *= 0.5;
        };
        match accepted {
            Some((trial, tpw, tr, tsup, tm)) => {
                u = trial;
                pw = tpw;
                r = tr;
                sup = tsup;
                margins.push(tm);
            }
            None => return Err(fail(format!("line search exhausted at residual {sup:.3e}"))),
        }
    }
    Err(fail(format!(
        "{} iterations left residual {sup:.3e}",
        spec.homotopy.max_newton
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Background;
    use crate::grid::Grid;
    use crate::oracle::{make_manufactured, Family};
    use std::f64::consts::TAU;

    #[test]
    fn constant_mode_converges_fast() {
        let grid = Grid::standard(16).unwrap();
        let spec =
            ProblemSpec::from_background(Background::flat(grid), ScalarField::zeros(grid)).unwrap();
        let out = newton_solve_at_t(&ScalarField::zeros(grid), 0.0, &spec).unwrap();
        assert!(out.iters <= 3, "{}", out.iters);
        let c = 0.5f64.ln() / (TAU * TAU);
        assert!(out.u.values().iter().all(|&v| (v - c).abs() < 1e-12));
    }

    #[test]
    fn recovers_manufactured_from_perturbation() {
        let grid = Grid::standard(32).unwrap();
        let m = make_manufactured(&Family::isotropic(0.1, 0.1), grid).unwrap();
        let spec = ProblemSpec::new(m.g.clone(), m.chi.clone(), m.psi.clone()).unwrap();
        let start = m
            .u_star
            .zip_with(&ScalarField::from_fn(grid, |x, y| (x - y).sin()), |a, b| {
                a + 1e-3 * b
            })
            .unwrap();
        let out = newton_solve_at_t(&start, 1.0, &spec).unwrap();
        assert!(out.residual_sup <= 1e-10);
        // exact discrete solution differs from u* by the truncation error only
        assert!(out.u.sup_distance(&m.u_star).unwrap() < 2e-3);
    }

    #[test]
    fn never_accepts_inadmissible_iterates() {
        // u0 with margin 1e-6 at x = 0
        let grid = Grid::standard(32).unwrap();
        let h = grid.spacing();
        let amp = (1.0 - 1e-6) * h * h / (2.0 - 2.0 * h.cos());
        let spec =
            ProblemSpec::from_background(Background::flat(grid), ScalarField::zeros(grid)).unwrap();
        let u0 = ScalarField::from_fn(grid, |x, _| amp * x.cos());
        let m0 = Pointwise::new(&u0, &spec).unwrap().margin().1;
        assert!((m0 - 1e-6).abs() < 1e-9, "{m0}");
        let out = newton_solve_at_t(&u0, 0.5, &spec).unwrap();
        assert!(out
            .margins
            .iter()
            .all(|&m| m > spec.tolerances.admissibility_floor));
    }

    #[test]
    fn rejects_inadmissible_start() {
        let grid = Grid::standard(16).unwrap();
        let spec =
            ProblemSpec::from_background(Background::flat(grid), ScalarField::zeros(grid)).unwrap();
        let u0 = ScalarField::from_fn(grid, |x, _| 1.5 * x.cos());
        assert!(matches!(
            newton_solve_at_t(&u0, 0.0, &spec),
            Err(Error::Admissibility { .. })
        ));
    }
}
