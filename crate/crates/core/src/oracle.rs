//! Brute-force references: finite-difference derivatives of the quotient in
//! eigenvalue space and manufactured problems with known solutions.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::geometry::Background;
use crate::grid::{Grid, ScalarField, Sym2, Sym2Field};
use crate::kernel::{eigen_decompose, sigma_quotient};
use crate::trig::{Harmonic, TrigSeries};

/// Relative step of the first-derivative differences.
pub const FIRST_STEP: f64 = 1e-5;
/// Relative step of the second-derivative differences.
pub const SECOND_STEP: f64 = 1e-4;

/// Central differences of `F = σₙ/σ_k`, returned as `(∂F, ∂²F)`.
pub fn fd_quotient_oracle(lambda: &[f64], k: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = lambda.len();
    let f = |l: &[f64]| sigma_quotient(l, n, k);
    let f0 = f(lambda)?;
    let shifted = |moves: &[(usize, f64)]| {
        let mut l = lambda.to_vec();
        for &(i, d) in moves {
            l[i] += d;
        }
        f(&l)
    };

    let mut first = vec![0.0; n];
    for (i, out) in first.iter_mut().enumerate() {
        let h = FIRST_STEP * lambda[i];
        *out = (shifted(&[(i, h)])? - shifted(&[(i, -h)])?) / (2.0 * h);
    }

    let mut second = vec![vec![0.0; n]; n];
    for i in 0..n {
        let hi = SECOND_STEP * lambda[i];
        second[i][i] = (shifted(&[(i, hi)])? - 2.0 * f0 + shifted(&[(i, -hi)])?) / (hi * hi);
        for j in 0..i {
            let hj = SECOND_STEP * lambda[j];
            let v = (shifted(&[(i, hi), (j, hj)])?
                - shifted(&[(i, hi), (j, -hj)])?
                - shifted(&[(i, -hi), (j, hj)])?
                + shifted(&[(i, -hi), (j, -hj)])?)
                / (4.0 * hi * hj);
            second[i][j] = v;
            second[j][i] = v;
        }
    }
    Ok((first, second))
}

/// Central differences of `F = 1/σ₁(λ⁻¹)`.
pub fn fd_derivative_oracle(lambda: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if lambda.is_empty() {
        return Err(Error::Argument("empty eigenvalue vector".into()));
    }
    fd_quotient_oracle(lambda, lambda.len() - 1)
}

/// `F(λ) = λ₁λ₂/(λ₁ + λ₂)` of the pencil `(g, g̃)`.
pub(crate) fn pencil_quotient(g: Sym2, gt: Sym2) -> f64 {
    let e = eigen_decompose(g, gt);
    e.lambda1 * e.lambda2 / (e.lambda1 + e.lambda2)
}

/// A manufactured solution `u*`, a metric `e^{2ψ}δ` given by a series `ψ`
/// (zero for the flat torus) and `χ = chi_scale · g`.
#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub u: TrigSeries,
    pub metric: TrigSeries,
    pub chi_scale: f64,
}

impl Family {
    pub fn new(u: TrigSeries) -> Self {
        Self {
            u,
            metric: TrigSeries::zero(),
            chi_scale: 1.0,
        }
    }

    /// `a cos x + b cos y` on the flat torus.
    pub fn isotropic(a: f64, b: f64) -> Self {
        Self::new(
            TrigSeries::zero()
                .plus(a, Harmonic::cos(1), Harmonic::ONE)
                .plus(b, Harmonic::ONE, Harmonic::cos(1)),
        )
    }

    /// `a cos x + b cos 2y` on the flat torus.
    pub fn anisotropic(a: f64, b: f64) -> Self {
        Self::new(
            TrigSeries::zero()
                .plus(a, Harmonic::cos(1), Harmonic::ONE)
                .plus(b, Harmonic::ONE, Harmonic::cos(2)),
        )
    }

    /// Flat-torus family whose eigenframe rotates and whose `λ₁` climbs past
    /// twice its background value near `x = π`.
    pub fn peaked() -> Self {
        Self::new(
            TrigSeries::zero()
                .plus(0.8, Harmonic::cos(1), Harmonic::ONE)
                .plus(-0.1, Harmonic::cos(2), Harmonic::ONE)
                .plus(0.1, Harmonic::ONE, Harmonic::cos(2))
                .plus(0.05, Harmonic::sin(1), Harmonic::sin(1)),
        )
    }

    /// `a cos x + b cos y` on `g = e^{2ψ}δ` with `ψ = eps cos x cos y`.
    pub fn conformal(a: f64, b: f64, eps: f64) -> Self {
        Self {
            metric: TrigSeries::zero().plus(eps, Harmonic::cos(1), Harmonic::cos(1)),
            ..Self::isotropic(a, b)
        }
    }

    pub fn is_flat(&self) -> bool {
        self.metric.terms.iter().all(|t| t.amplitude == 0.0)
    }

    fn metric_at(&self, x: f64, y: f64) -> Sym2 {
        Sym2::scaled_identity((2.0 * self.metric.eval(x, y)).exp())
    }

    /// Exact `χ + ∇²u` at a point, using the conformal Christoffel symbols.
    fn gtilde_at(&self, u: &TrigSeries, x: f64, y: f64) -> Sym2 {
        let h = u.hessian(x, y);
        let [u1, u2] = u.grad(x, y);
        let [p1, p2] = self.metric.grad(x, y);
        let cov = Sym2::new(
            h.xx - p1 * u1 + p2 * u2,
            h.xy - p2 * u1 - p1 * u2,
            h.yy + p1 * u1 - p2 * u2,
        );
        self.chi_scale * self.metric_at(x, y) + cov
    }
}

/// Known solution of the integral-form equation at `t = 1`.
#[derive(Debug, Clone)]
pub struct ManufacturedProblem {
    pub family: Family,
    /// `u*` shifted so that `∫u* vol_g = 0`.
    pub u_series: TrigSeries,
    pub u_star: ScalarField,
    pub g: Sym2Field,
    pub chi: Sym2Field,
    /// `log F(u*) − ∫u* vol_g`, evaluated from exact derivatives.
    pub psi: ScalarField,
    /// Smallest eigenvalue of `g⁻¹(χ + ∇²u*)` over the grid nodes.
    pub margin: f64,
}

impl ManufacturedProblem {
    pub fn background(&self) -> Result<Background> {
        Background::new(self.g.clone(), self.chi.clone())
    }
}

/// Smallest margin accepted for a manufactured solution.
pub const MIN_MARGIN: f64 = 0.1;

const NORMALIZE_N: usize = 512;

pub fn make_manufactured(family: &Family, grid: Grid) -> Result<ManufacturedProblem> {
    if (grid.period() - TAU).abs() > 1e-12 {
        return Err(Error::Argument(
            "manufactured problems need period 2π".into(),
        ));
    }
    if !(family.chi_scale > 0.0) {
        return Err(Error::Argument("chi_scale must be positive".into()));
    }

    // The trapezoid rule is spectrally accurate for these integrands.
    let shift = if family.is_flat() {
        family.u.mean()
    } else {
        let (mut num, mut den) = (0.0, 0.0);
        let h = TAU / NORMALIZE_N as f64;
        for i in 0..NORMALIZE_N {
            for j in 0..NORMALIZE_N {
                let (x, y) = (i as f64 * h, j as f64 * h);
                let w = (2.0 * family.metric.eval(x, y)).exp();
                num += w * family.u.eval(x, y);
                den += w;
            }
        }
        num / den
    };
    let u_series = family.u.clone().plus(-shift, Harmonic::ONE, Harmonic::ONE);

    let g = Sym2Field::from_fn(grid, |x, y| family.metric_at(x, y));
    let chi = g.scale(family.chi_scale);
    let mut margin = f64::INFINITY;
    let mut psi = Vec::with_capacity(grid.len());
    for p in 0..grid.len() {
        let (x, y) = grid.coords(p);
        let gm = family.metric_at(x, y);
        let gt = family.gtilde_at(&u_series, x, y);
        margin = margin.min(eigen_decompose(gm, gt).lambda2);
        psi.push(pencil_quotient(gm, gt).ln());
    }
    if !(margin >= MIN_MARGIN) {
        return Err(Error::Argument(format!(
            "manufactured solution has admissibility margin {margin:.4} < {MIN_MARGIN}"
        )));
    }
    Ok(ManufacturedProblem {
        family: family.clone(),
        u_star: u_series.sample(grid),
        u_series,
        g,
        chi,
        psi: ScalarField::new(grid, psi)?,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::integrate;
    use crate::kernel::{derivatives, quotient_derivatives};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn fd_matches_closed_form_examples() {
        let (fi, fij) = fd_derivative_oracle(&[2.0, 1.0]).unwrap();
        assert!(rel(fi[0], 1.0 / 9.0) < 1e-6 && rel(fi[1], 4.0 / 9.0) < 1e-6);
        assert!((fij[0][0] + 2.0 / 27.0).abs() < 1e-4);

        let (_, fij) = fd_derivative_oracle(&[1.0, 1.0]).unwrap();
        assert!((fij[0][1] - fij[1][0]).abs() < 1e-8);

        assert!(fd_derivative_oracle(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn fd_matches_general_quotient() {
        let lambda = [3.0, 1.5, 0.7, 0.2];
        for k in 1..4 {
            let exact = quotient_derivatives(&lambda, k).unwrap();
            let (first, second) = fd_quotient_oracle(&lambda, k).unwrap();
            for i in 0..4 {
                assert!(rel(first[i], exact.grad[i]) < 1e-6);
                for j in 0..4 {
                    let scale = exact.hessian[i][j].abs().max(1e-3);
                    assert!(
                        (second[i][j] - exact.hessian[i][j]).abs() < 1e-4 * scale,
                        "k={k}"
                    );
                }
            }
        }
        let d = derivatives(&lambda).unwrap();
        let (first, _) = fd_derivative_oracle(&lambda).unwrap();
        for i in 0..4 {
            assert!(rel(first[i], d.fi[i]) < 1e-6);
        }
    }

    #[test]
    fn isotropic_example() {
        let grid = Grid::standard(32).unwrap();
        let m = make_manufactured(&Family::isotropic(0.1, 0.1), grid).unwrap();
        assert!((m.psi.values()[0] - 0.45f64.ln()).abs() < 1e-14);
        assert!((m.margin - 0.9).abs() < 1e-12);
        assert!(integrate(&m.u_star, &m.g).unwrap().abs() < 1e-13);
    }

    #[test]
    fn zero_amplitude_is_constant_problem() {
        let grid = Grid::standard(16).unwrap();
        let m = make_manufactured(&Family::isotropic(0.0, 0.0), grid).unwrap();
        assert_eq!(m.u_star.sup_norm(), 0.0);
        assert!(m
            .psi
            .values()
            .iter()
            .all(|&v| (v - 0.5f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn anisotropic_family_is_gapped() {
        let grid = Grid::standard(64).unwrap();
        let m = make_manufactured(&Family::anisotropic(0.6, 0.1), grid).unwrap();
        assert!((m.margin - 0.4).abs() < 1e-12);
        let bg = m.background().unwrap();
        let gt = bg.gtilde(&m.u_star).unwrap();
        let ratio = gt
            .values()
            .iter()
            .map(|&v| {
                let e = eigen_decompose(Sym2::IDENTITY, v);
                e.lambda1 / e.lambda2
            })
            .fold(0.0, f64::max);
        assert!(ratio >= 3.0, "{ratio}");
    }

    #[test]
    fn peaked_family_reaches_twice_background() {
        let grid = Grid::standard(64).unwrap();
        let m = make_manufactured(&Family::peaked(), grid).unwrap();
        assert!(m.margin >= 0.3);
        let gt = m.background().unwrap().gtilde(&m.u_star).unwrap();
        let top = gt
            .values()
            .iter()
            .map(|&v| eigen_decompose(Sym2::IDENTITY, v).lambda1)
            .fold(0.0, f64::max);
        assert!(top > 2.1, "{top}");
    }

    #[test]
    fn large_amplitude_rejected() {
        let grid = Grid::standard(16).unwrap();
        assert!(make_manufactured(&Family::isotropic(0.95, 0.0), grid).is_err());
        let odd = Grid::new(16, 1.0).unwrap();
        assert!(make_manufactured(&Family::isotropic(0.1, 0.1), odd).is_err());
    }

    #[test]
    fn conformal_problem_is_normalized_and_consistent() {
        let grid = Grid::standard(64).unwrap();
        let m = make_manufactured(&Family::conformal(0.1, 0.1, 0.1), grid).unwrap();
        assert!(integrate(&m.u_star, &m.g).unwrap().abs() < 1e-10);
        // discrete g̃ agrees with the exact one to O(h²)
        let gt = m.background().unwrap().gtilde(&m.u_star).unwrap();
        let err = (0..grid.len())
            .map(|p| {
                let (x, y) = grid.coords(p);
                (gt.at(p) - m.family.gtilde_at(&m.u_series, x, y)).max_abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 2e-3, "{err}");
    }
}
