//! Linearization of the residual and the Krylov solve of the Newton system.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::quadrature_weights;
use crate::grid::{Grid, ScalarField, Sym2};

use super::problem::{Pointwise, Preconditioner, ProblemSpec};

/// Coefficients of `δu ↦ Σ c·D δu − Σ_q w_q δu_q` at one node, in the order
/// `D = (Dxx, Dxy, Dyy, Dx, Dy)`.
pub type Stencil = [f64; 5];

/// The Jacobian of the discrete residual at a fixed `u`:
/// `δu ↦ (1/F) a^{rs}(∂_{rs}δu − Γ^k_{rs}∂_kδu) − ∫δu vol_g`.
#[derive(Debug, Clone)]
pub struct LinearOperator {
    grid: Grid,
    /// `a = ∂F/∂g̃` per node.
    pub tensor: Vec<Sym2>,
    pub f: Vec<f64>,
    pub coeffs: Vec<Stencil>,
    /// Quadrature weights of the nonlocal term.
    pub weights: Vec<f64>,
}

/// `∂F/∂g̃ = adj(g̃)/(det g · σ₁) − (σ₂/σ₁²) g⁻¹` for `F = σ₂/σ₁` of `g⁻¹g̃`.
///
/// Equal to `Σ F^{ii} eᵢ⊗eᵢ` with `g`-orthonormal eigenvectors, and smooth
/// across repeated eigenvalues.
pub fn quotient_gradient(g: Sym2, gt: Sym2) -> Sym2 {
    let ginv = g.inverse().expect("metric is SPD");
    let s1 = ginv.contract(&gt);
    let s2 = gt.det() / g.det();
    let adj = Sym2::new(gt.yy, -gt.xy, gt.xx);
    (1.0 / (g.det() * s1)) * adj - (s2 / (s1 * s1)) * ginv
}

pub(crate) fn linearize_with(pw: &Pointwise, spec: &ProblemSpec) -> LinearOperator {
    let g = spec.g();
    let conn = &spec.background.conn;
    let grid = *g.grid();
    let parts: Vec<(Sym2, f64, Stencil)> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let gt = pw.gtilde.at(p);
            let a = quotient_gradient(g.at(p), gt);
            let (l1, l2) = (pw.lambda1[p], pw.lambda2[p]);
            let f = l1 * l2 / (l1 + l2);
            let c = conn.gamma(p);
            let b = |k: usize| a.xx * c[k][0][0] + 2.0 * a.xy * c[k][0][1] + a.yy * c[k][1][1];
            let coeffs = [a.xx / f, 2.0 * a.xy / f, a.yy / f, -b(0) / f, -b(1) / f];
            (a, f, coeffs)
        })
        .collect();
    let mut tensor = Vec::with_capacity(parts.len());
    let mut f = Vec::with_capacity(parts.len());
    let mut coeffs = Vec::with_capacity(parts.len());
    for (a, v, c) in parts {
        tensor.push(a);
        f.push(v);
        coeffs.push(c);
    }
    LinearOperator {
        grid,
        tensor,
        f,
        coeffs,
        weights: quadrature_weights(g),
    }
}

/// Jacobian of the residual at an admissible `u`.
pub fn linearize(u: &ScalarField, spec: &ProblemSpec) -> Result<LinearOperator> {
    let pw = Pointwise::new(u, spec)?;
    pw.require_admissible(u)?;
    Ok(linearize_with(&pw, spec))
}

impl LinearOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let grid = &self.grid;
        let h = grid.spacing();
        let (h2, h4, h2x) = (h * h, 4.0 * h * h, 2.0 * h);
        let mean: f64 = self.weights.iter().zip(v).map(|(w, x)| w * x).sum();
        out.par_iter_mut().enumerate().for_each(|(p, o)| {
            let nb = grid.neighbors(p);
            let c = &self.coeffs[p];
            let dxx = (v[nb.e] - 2.0 * v[p] + v[nb.w]) / h2;
            let dyy = (v[nb.n] - 2.0 * v[p] + v[nb.s]) / h2;
            let dxy = (v[nb.ne] - v[nb.se] - v[nb.nw] + v[nb.sw]) / h4;
            let dx = (v[nb.e] - v[nb.w]) / h2x;
            let dy = (v[nb.n] - v[nb.s]) / h2x;
            *o = c[0] * dxx + c[1] * dxy + c[2] * dyy + c[3] * dx + c[4] * dy - mean;
        });
    }

    pub fn apply_field(&self, v: &ScalarField) -> ScalarField {
        let mut out = vec![0.0; v.values().len()];
        self.apply(v.values(), &mut out);
        ScalarField::from_vec_unchecked(*v.grid(), out)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let h2 = self.grid.spacing().powi(2);
        self.coeffs
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| -2.0 * (c[0] + c[2]) / h2 - w)
            .collect()
    }

    /// Solves `L x = b` to relative residual `tol` with right-preconditioned
    /// restarted GMRES.
    pub fn solve(
        &self,
        b: &[f64],
        kind: Preconditioner,
        tol: f64,
    ) -> Result<(Vec<f64>, GmresInfo)> {
        let mut x = vec![0.0; b.len()];
        let info = match kind {
            Preconditioner::Spectral => {
                let pc = SpectralPreconditioner::new(self);
                gmres(self, |r, z| pc.apply(r, z), b, &mut x, tol)?
            }
            Preconditioner::Jacobi => {
                let d = self.diagonal();
                gmres(
                    self,
                    |r, z| {
                        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&d) {
                            *zi = ri / di;
                        }
                    },
                    b,
                    &mut x,
                    tol,
                )?
            }
        };
        Ok((x, info))
    }
}

/// Exact inverse of the constant-coefficient periodic operator built from
/// the mean stencil coefficients and the total quadrature weight.
pub struct SpectralPreconditioner {
    n: usize,
    symbol: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SpectralPreconditioner {
    pub fn new(op: &LinearOperator) -> Self {
        let n = op.grid.n();
        let h = op.grid.spacing();
        let count = op.coeffs.len() as f64;
        let mut mean = [0.0; 5];
        for c in &op.coeffs {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= count;
        }
        let volume: f64 = op.weights.iter().sum();
        let mut symbol = vec![Complex64::new(0.0, 0.0); n * n];
        for a in 0..n {
            let tx = std::f64::consts::TAU * a as f64 / n as f64;
            for b in 0..n {
                let ty = std::f64::consts::TAU * b as f64 / n as f64;
                let s = if a == 0 && b == 0 {
                    Complex64::new(-volume, 0.0)
                } else {
                    let re = mean[0] * (2.0 * tx.cos() - 2.0) / (h * h)
                        - mean[1] * tx.sin() * ty.sin() / (h * h)
                        + mean[2] * (2.0 * ty.cos() - 2.0) / (h * h);
                    let im = (mean[3] * tx.sin() + mean[4] * ty.sin()) / h;
                    Complex64::new(re, im)
                };
                symbol[a * n + b] = s;
            }
        }
        let mut planner = FftPlanner::new();
        Self {
            n,
            symbol,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    fn transform(&self, data: &mut [Complex64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        // rows are contiguous (index i*n + j runs over j)
        fft.process(data);
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                column[i] = data[i * n + j];
            }
            fft.process(&mut column);
            for i in 0..n {
                data[i * n + j] = column[i];
            }
        }
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let mut data: Vec<Complex64> = r.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        for (d, s) in data.iter_mut().zip(&self.symbol) {
            *d /= s;
        }
        self.transform(&mut data, &self.inverse);
        let scale = 1.0 / (self.n * self.n) as f64;
        for (zi, d) in z.iter_mut().zip(&data) {
            *zi = d.re * scale;
        }
    }
}

pub const RESTART: usize = 50;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES with modified Gram–Schmidt and Givens rotations,
/// preconditioned on the right.
fn gmres(
    op: &LinearOperator,
    precond: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
) -> Result<GmresInfo> {
    let len = b.len();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(GmresInfo {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut iterations = 0;
    let mut r = vec![0.0; len];
    let mut w = vec![0.0; len];
    let mut z = vec![0.0; len];
    loop {
        op.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        let rel = beta / b_norm;
        if rel <= tol || iterations >= MAX_ITERATIONS {
            return if rel <= tol {
                Ok(GmresInfo {
                    iterations,
                    relative_residual: rel,
                })
            } else {
                Err(Error::NonConvergence {
                    t: f64::NAN,
                    reason: format!("GMRES stalled at relative residual {rel:.3e}"),
                })
            };
        }

        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(RESTART);
        let mut cs: Vec<f64> = Vec::with_capacity(RESTART);
        let mut sn: Vec<f64> = Vec::with_capacity(RESTART);
        let mut rhs = vec![beta];
        let mut k = 0;
        while k < RESTART && iterations < MAX_ITERATIONS {
            precond(&basis[k], &mut z);
            op.apply(&z, &mut w);
            let mut col = vec![0.0; k + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                col[i] = hij;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hij * vi;
                }
            }
            let wn = norm(&w);
            col[k + 1] = wn;
            for i in 0..k {
                let tmp = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = tmp;
            }
            let rho = col[k].hypot(col[k + 1]);
            let (c, s) = if rho == 0.0 {
                (1.0, 0.0)
            } else {
                (col[k] / rho, col[k + 1] / rho)
            };
            col[k] = rho;
            col[k + 1] = 0.0;
            cs.push(c);
            sn.push(s);
            rhs.push(-s * rhs[k]);
            rhs[k] *= c;
            hess.push(col);
            iterations += 1;
            k += 1;
            if rhs[k].abs() / b_norm <= tol || wn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / wn).collect());
        }

        // back substitution, then x += M⁻¹ V y
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = rhs[i];
            for j in i + 1..k {
                s -= hess[j][i] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut comb = vec![0.0; len];
        for (yi, v) in y.iter().zip(&basis) {
            for (ci, vi) in comb.iter_mut().zip(v) {
                *ci += yi * vi;
            }
        }
        precond(&comb, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Background;
    use crate::kernel::eigen_decompose;
    use crate::oracle::{make_manufactured, Family};
    use crate::solver::problem::residual;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn flat(n: usize) -> ProblemSpec {
        let grid = Grid::standard(n).unwrap();
        ProblemSpec::from_background(Background::flat(grid), ScalarField::zeros(grid)).unwrap()
    }

    #[test]
    fn gradient_matches_eigen_form() {
        let g = Sym2::new(1.3, 0.2, 0.8);
        for gt in [
            Sym2::new(2.0, 0.3, 0.7),
            Sym2::new(1.3, 0.2, 0.8),
            Sym2::new(0.5, -0.1, 3.0),
        ] {
            let e = eigen_decompose(g, gt);
            let (l1, l2) = (e.lambda1, e.lambda2);
            let f = l1 * l2 / (l1 + l2);
            let eig =
                (f * f / (l1 * l1)) * Sym2::outer(e.e1) + (f * f / (l2 * l2)) * Sym2::outer(e.e2);
            assert!((quotient_gradient(g, gt) - eig).max_abs() < 1e-12);
        }
    }

    #[test]
    fn flat_identity_coefficients() {
        let spec = flat(16);
        let op = linearize(&ScalarField::zeros(*spec.g().grid()), &spec).unwrap();
        assert!(op
            .tensor
            .iter()
            .all(|a| (*a - Sym2::scaled_identity(0.25)).max_abs() < 1e-15));
        assert!(op
            .coeffs
            .iter()
            .all(|c| (c[0] - 0.5).abs() < 1e-15 && c[1] == 0.0));
        let one = op.apply_field(&ScalarField::constant(*spec.g().grid(), 1.0));
        assert!(one.values().iter().all(|&v| (v + TAU * TAU).abs() < 1e-10));
    }

    fn directional_check(spec: &ProblemSpec, u: &ScalarField, seed: u64) {
        let grid = *u.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coef: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = ScalarField::from_fn(grid, |x, y| {
            coef[0] * x.cos()
                + coef[1] * (2.0 * y).sin()
                + coef[2] * (x + y).cos()
                + coef[3] * (x - 2.0 * y).sin()
                + coef[4]
                + coef[5] * x.sin() * y.cos()
        });
        let s = 1e-6;
        let up = u.zip_with(&w, |a, b| a + s * b).unwrap();
        let dn = u.zip_with(&w, |a, b| a - s * b).unwrap();
        let fd = residual(&up, 0.7, spec)
            .unwrap()
            .zip_with(&residual(&dn, 0.7, spec).unwrap(), |a, b| {
                (a - b) / (2.0 * s)
            })
            .unwrap();
        let lin = linearize(u, spec).unwrap().apply_field(&w);
        let err = fd.sup_distance(&lin).unwrap() / lin.sup_norm();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn linearization_matches_directional_differences() {
        let grid = Grid::standard(32).unwrap();
        let m = make_manufactured(&Family::anisotropic(0.6, 0.1), grid).unwrap();
        let spec = ProblemSpec::new(m.g.clone(), m.chi.clone(), m.psi.clone()).unwrap();
        directional_check(&spec, &m.u_star, 1);

        let m = make_manufactured(&Family::conformal(0.1, 0.2, 0.1), grid).unwrap();
        let spec = ProblemSpec::new(m.g.clone(), m.chi.clone(), m.psi.clone()).unwrap();
        directional_check(&spec, &m.u_star, 2);
    }

    #[test]
    fn krylov_solves_both_preconditioners() {
        let grid = Grid::standard(32).unwrap();
        let m = make_manufactured(&Family::conformal(0.2, 0.1, 0.1), grid).unwrap();
        let spec = ProblemSpec::new(m.g.clone(), m.chi.clone(), m.psi.clone()).unwrap();
        let op = linearize(&m.u_star, &spec).unwrap();
        let exact = ScalarField::from_fn(grid, |x, y| (x + 2.0 * y).sin() + 0.3);
        let b = op.apply_field(&exact);
        for kind in [Preconditioner::Spectral, Preconditioner::Jacobi] {
            let (x, info) = op.solve(b.values(), kind, 1e-11).unwrap();
            let x = ScalarField::new(grid, x).unwrap();
            assert!(x.sup_distance(&exact).unwrap() < 1e-7, "{kind:?} {info:?}");
        }
        let (_, info) = op
            .solve(b.values(), Preconditioner::Spectral, 1e-10)
            .unwrap();
        assert!(info.iterations < 60, "{info:?}");
    }

    #[test]
    fn spectral_preconditioner_inverts_constant_operator() {
        let spec = flat(16);
        let grid = *spec.g().grid();
        let op = linearize(&ScalarField::zeros(grid), &spec).unwrap();
        let pc = SpectralPreconditioner::new(&op);
        let v = ScalarField::from_fn(grid, |x, y| (3.0 * x).cos() * y.sin() + 1.0);
        let lv = op.apply_field(&v);
        let mut back = vec![0.0; grid.len()];
        pc.apply(lv.values(), &mut back);
        let back = ScalarField::new(grid, back).unwrap();
        assert!(back.sup_distance(&v).unwrap() < 1e-12);
    }
}
