//! Eigenvalue-space algebra of the positive Hessian quotient operator.
//!
//! The operator of interest is `F = σₙ/σₙ₋₁ = 1/σ₁(λ⁻¹)` acting on the
//! eigenvalues of the pencil `(g, g̃)`. Its first and second derivatives have
//! closed forms in terms of `F` and `λ`; the general quotients `σₙ/σ_k` are
//! differentiated exactly through elementary symmetric polynomials of the
//! eigenvalue vector with entries removed.

use crate::error::{Error, Node, Result};
use crate::grid::{check_grids, Sym2, Sym2Field};

/// Elementary symmetric polynomials `[σ₀, σ₁, …, σₙ]` of `lambda`.
pub fn elementary_symmetric(lambda: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; lambda.len() + 1];
    e[0] = 1.0;
    for (m, &x) in lambda.iter().enumerate() {
        for k in (1..=m + 1).rev() {
            e[k] += x * e[k - 1];
        }
    }
    e
}

/// `σ_k(λ)`, with `σ₀ = 1` and `σ_k = 0` outside `0..=n`.
pub fn sigma(lambda: &[f64], k: isize) -> f64 {
    if k < 0 || k as usize > lambda.len() {
        return 0.0;
    }
    elementary_symmetric(lambda)[k as usize]
}

fn without(lambda: &[f64], skip: &[usize]) -> Vec<f64> {
    lambda
        .iter()
        .enumerate()
        .filter(|(i, _)| !skip.contains(i))
        .map(|(_, &x)| x)
        .collect()
}

fn check_positive(lambda: &[f64]) -> Result<()> {
    if lambda.is_empty() {
        return Err(Error::Argument("empty eigenvalue vector".into()));
    }
    match lambda.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        None => Ok(()),
        Some(i) => Err(Error::Admissibility {
            node: (i, 0),
            margin: lambda[i],
        }),
    }
}

/// `σ_k(λ) / σ_l(λ)` for positive `λ`.
pub fn sigma_quotient(lambda: &[f64], k: usize, l: usize) -> Result<f64> {
    let n = lambda.len();
    if !(l < k && k <= n) {
        return Err(Error::Argument(format!(
            "need 0 <= l < k <= n, got k = {k}, l = {l}, n = {n}"
        )));
    }
    check_positive(lambda)?;
    let e = elementary_symmetric(lambda);
    Ok(e[k] / e[l])
}

/// Eigen-decomposition of the symmetric pencil `g̃ v = λ g v` with `g` SPD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenPair2D {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `g`-unit eigenvector of `lambda1`; its first nonzero component is positive.
    pub e1: [f64; 2],
    /// `g`-unit eigenvector of `lambda2`, completing a positively oriented frame.
    pub e2: [f64; 2],
    pub gap: f64,
}

impl EigenPair2D {
    pub fn lambda(&self) -> [f64; 2] {
        [self.lambda1, self.lambda2]
    }

    pub fn vector(&self, k: usize) -> [f64; 2] {
        if k == 0 {
            self.e1
        } else {
            self.e2
        }
    }
}

/// Closed-form solution of `det(g̃ − λ g) = 0`.
///
/// `g` is reduced by its Cholesky factor `L`, the symmetric matrix
/// `L⁻¹ g̃ L⁻ᵀ` is diagonalised by a Jacobi angle and the frame is mapped back
/// through `L⁻ᵀ`. When `g = δ` the reduction is exact.
pub fn eigen_decompose(g: Sym2, gtilde: Sym2) -> EigenPair2D {
    debug_assert!(g.is_spd(), "metric must be SPD: {g:?}");
    let l11 = g.xx.sqrt();
    let l21 = g.xy / l11;
    let l22 = (g.yy - l21 * l21).sqrt();
    // L⁻¹ = [[a, 0], [b, c]]
    let a = 1.0 / l11;
    let b = -l21 / (l11 * l22);
    let c = 1.0 / l22;
    let (b11, b12, b22) = if g == Sym2::IDENTITY {
        (gtilde.xx, gtilde.xy, gtilde.yy)
    } else {
        (
            a * a * gtilde.xx,
            a * (b * gtilde.xx + c * gtilde.xy),
            b * b * gtilde.xx + 2.0 * b * c * gtilde.xy + c * c * gtilde.yy,
        )
    };

    let mean = 0.5 * (b11 + b22);
    let half_diff = 0.5 * (b11 - b22);
    let radius = half_diff.hypot(b12);
    let lambda1 = mean + radius;
    let lambda2 = mean - radius;

    let (s, co) = if b12 == 0.0 {
        if b11 >= b22 {
            (0.0, 1.0)
        } else {
            (1.0, 0.0)
        }
    } else {
        (0.5 * (2.0 * b12).atan2(b11 - b22)).sin_cos()
    };
    let v1 = [co, s];
    let v2 = [-s, co];
    // L⁻ᵀ = [[a, b], [0, c]]
    let back = |v: [f64; 2]| [a * v[0] + b * v[1], c * v[1]];
    let mut e1 = back(v1);
    let mut e2 = back(v2);
    if e1[0] < 0.0 || (e1[0] == 0.0 && e1[1] < 0.0) {
        e1 = [-e1[0], -e1[1]];
        e2 = [-e2[0], -e2[1]];
    }
    EigenPair2D {
        lambda1,
        lambda2,
        e1,
        e2,
        gap: lambda1 - lambda2,
    }
}

/// `F = σₙ/σₙ₋₁` with its exact derivatives at a positive eigenvalue vector.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDerivatives {
    pub f: f64,
    /// `F^{ii} = F² / λᵢ²`
    pub fi: Vec<f64>,
    pub lambda: Vec<f64>,
    pub(crate) kappa: Vec<f64>,
}

impl KernelDerivatives {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    /// `F^{ii,jj} = 2F³/(λᵢ²λⱼ²) − 2δᵢⱼ F²/λᵢ³`
    pub fn second(&self, i: usize, j: usize) -> f64 {
        let f = self.f;
        let k = &self.kappa;
        let mut v = 2.0 * f * f * f * k[i] * k[i] * k[j] * k[j];
        if i == j {
            v -= 2.0 * f * f * k[i] * k[i] * k[i];
        }
        v
    }

    /// `(F^{ii} − F^{jj}) / (λᵢ − λⱼ) = −F²(λᵢ + λⱼ)/(λᵢ²λⱼ²)`, finite at `λᵢ = λⱼ`.
    pub fn divided_difference(&self, i: usize, j: usize) -> f64 {
        let f = self.f;
        let k = &self.kappa;
        -f * f * (self.lambda[i] + self.lambda[j]) * k[i] * k[i] * k[j] * k[j]
    }

    pub fn sum_fi(&self) -> f64 {
        self.fi.iter().sum()
    }
}

pub fn derivatives(lambda: &[f64]) -> Result<KernelDerivatives> {
    check_positive(lambda)?;
    let kappa: Vec<f64> = lambda.iter().map(|x| 1.0 / x).collect();
    let f = 1.0 / kappa.iter().sum::<f64>();
    let fi = kappa.iter().map(|k| f * f * k * k).collect();
    Ok(KernelDerivatives {
        f,
        fi,
        lambda: lambda.to_vec(),
        kappa,
    })
}

/// Both sides of the fine concavity identity for `σₙ/σₙ₋₁`:
/// `−F^{ii,jj} ξᵢ ξⱼ = 2 Σ F^{ii} ξᵢ²/λᵢ − 2 (Σ F^{ii} ξᵢ)² / F`.
pub fn concavity_identity(lambda: &[f64], xi: &[f64]) -> Result<(f64, f64)> {
    if xi.len() != lambda.len() {
        return Err(Error::Dimension(format!(
            "xi has length {}, lambda has length {}",
            xi.len(),
            lambda.len()
        )));
    }
    let d = derivatives(lambda)?;
    let n = d.n();
    let mut lhs = 0.0;
    for i in 0..n {
        for j in 0..n {
            lhs -= d.second(i, j) * xi[i] * xi[j];
        }
    }
    let weighted: f64 = (0..n).map(|i| d.fi[i] * xi[i] * xi[i] / lambda[i]).sum();
    let linear: f64 = (0..n).map(|i| d.fi[i] * xi[i]).sum();
    let rhs = 2.0 * weighted - 2.0 * linear * linear / d.f;
    Ok((lhs, rhs))
}

/// Exact derivatives of `F = σₙ/σ_k` in eigenvalue space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientDerivatives {
    pub k: usize,
    pub lambda: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    /// `(fᵢ − fⱼ)/(λᵢ − λⱼ)` for `i ≠ j`, evaluated without subtraction.
    pub divided: Vec<Vec<f64>>,
}

pub fn quotient_derivatives(lambda: &[f64], k: usize) -> Result<QuotientDerivatives> {
    let n = lambda.len();
    if k >= n {
        return Err(Error::Argument(format!("need k < n, got k = {k}, n = {n}")));
    }
    check_positive(lambda)?;
    let k = k as isize;
    let n_i = n as isize;
    let top = sigma(lambda, n_i);
    let bot = sigma(lambda, k);
    let f = top / bot;

    let top_i: Vec<f64> = (0..n)
        .map(|i| sigma(&without(lambda, &[i]), n_i - 1))
        .collect();
    let bot_i: Vec<f64> = (0..n)
        .map(|i| sigma(&without(lambda, &[i]), k - 1))
        .collect();
    let grad: Vec<f64> = (0..n)
        .map(|i| top_i[i] / bot - top * bot_i[i] / (bot * bot))
        .collect();

    let mut hessian = vec![vec![0.0; n]; n];
    let mut divided = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let (top_ij, bot_ij) = if i == j {
                (0.0, 0.0)
            } else {
                let rest = without(lambda, &[i, j]);
                (sigma(&rest, n_i - 2), sigma(&rest, k - 2))
            };
            hessian[i][j] = top_ij / bot
                - (top_i[i] * bot_i[j] + top_i[j] * bot_i[i]) / (bot * bot)
                - top * bot_ij / (bot * bot)
                + 2.0 * top * bot_i[i] * bot_i[j] / (bot * bot * bot);
            if i != j {
                // σ_m(λ|i) − σ_m(λ|j) = (λⱼ − λᵢ) σ_{m−1}(λ|ij)
                divided[i][j] = -(top_ij * bot - top * bot_ij) / (bot * bot);
            }
        }
    }
    Ok(QuotientDerivatives {
        k: k as usize,
        lambda: lambda.to_vec(),
        f,
        grad,
        hessian,
        divided,
    })
}

/// Pieces of the `σₙ/σ_k` concavity inequality so that
/// `gap(ε₀, δ₀) = lhs − rhs_base − ε₀·eps_weight − δ₀·delta_weight`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KConcavityTerms {
    /// `−F^{αβ,γη} ξ_{αβ} ξ_{γη}`
    pub lhs: f64,
    pub rhs_base: f64,
    /// `F^{11} ξ₁₁² / λ₁`
    pub eps_weight: f64,
    /// `Σ_{i≥2} F^{ii} ξ_{i1}² / λ₁`
    pub delta_weight: f64,
}

impl KConcavityTerms {
    pub fn gap(&self, eps0: f64, delta0: f64) -> f64 {
        self.lhs - self.rhs_base - eps0 * self.eps_weight - delta0 * self.delta_weight
    }

    /// Largest `ε₀` keeping the inequality true at `δ₀ = 0` for this sample.
    pub fn max_eps0(&self) -> f64 {
        if self.eps_weight > 0.0 {
            self.gap(0.0, 0.0) / self.eps_weight
        } else {
            f64::INFINITY
        }
    }
}

fn check_square(xi: &[Vec<f64>], n: usize) -> Result<()> {
    if xi.len() != n || xi.iter().any(|row| row.len() != n) {
        return Err(Error::Dimension(format!("xi must be a {n}×{n} matrix")));
    }
    Ok(())
}

pub fn k_concavity_terms(lambda: &[f64], xi: &[Vec<f64>], k: usize) -> Result<KConcavityTerms> {
    let n = lambda.len();
    check_square(xi, n)?;
    if k == 0 || k >= n {
        return Err(Error::Argument(format!(
            "need 1 <= k <= n - 1, got k = {k}, n = {n}"
        )));
    }
    if lambda.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::Argument("eigenvalues must be decreasing".into()));
    }
    let d = quotient_derivatives(lambda, k)?;
    let sym = |i: usize, j: usize| 0.5 * (xi[i][j] + xi[j][i]);

    let mut second = 0.0;
    for i in 0..n {
        for j in 0..n {
            second += d.hessian[i][j] * sym(i, i) * sym(j, j);
            if i != j {
                second += d.divided[i][j] * sym(i, j) * sym(i, j);
            }
        }
    }
    let lhs = -second;

    let fi = &d.grad;
    let l1 = lambda[0];
    let eps_weight = fi[0] * sym(0, 0) * sym(0, 0) / l1;
    let delta_weight: f64 = (1..n).map(|i| fi[i] * sym(i, 0) * sym(i, 0) / l1).sum();
    let diag_rest: f64 = (1..n)
        .map(|i| fi[i] * sym(i, i) * sym(i, i) / lambda[i])
        .sum();
    let mut cross_rest = 0.0;
    for i in 1..n {
        for j in 1..n {
            if i != j {
                cross_rest += fi[i] * sym(i, j) * sym(i, j) / lambda[j];
            }
        }
    }
    let trace: f64 = (0..n).map(|i| fi[i] * sym(i, i)).sum();
    let rhs_base = eps_weight + 0.5 * diag_rest + delta_weight + cross_rest - trace * trace / d.f;
    Ok(KConcavityTerms {
        lhs,
        rhs_base,
        eps_weight,
        delta_weight,
    })
}

/// `−F^{αβ,γη}ξξ` minus the lower bound of the `σₙ/σ_k` concavity inequality.
pub fn k_concavity_gap(
    lambda: &[f64],
    xi: &[Vec<f64>],
    k: usize,
    eps0: f64,
    delta0: f64,
) -> Result<f64> {
    Ok(k_concavity_terms(lambda, xi, k)?.gap(eps0, delta0))
}

/// Smallest eigenvalue of `g⁻¹ g̃` over the grid and where it occurs.
pub fn admissibility_margin_at(g: &Sym2Field, gtilde: &Sym2Field) -> Result<(Node, f64)> {
    check_grids(g.grid(), gtilde.grid())?;
    let mut best = (0, f64::INFINITY);
    for (p, (&gm, &gt)) in g.values().iter().zip(gtilde.values()).enumerate() {
        let l2 = eigen_decompose(gm, gt).lambda2;
        if l2 < best.1 {
            best = (p, l2);
        }
    }
    Ok((g.grid().node(best.0), best.1))
}

/// Smallest eigenvalue of `g⁻¹ g̃` over the grid; positive iff admissible.
pub fn admissibility_margin(g: &Sym2Field, gtilde: &Sym2Field) -> Result<f64> {
    Ok(admissibility_margin_at(g, gtilde)?.1)
}
