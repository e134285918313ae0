use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{integrate, quadrature_weights, Background};
use crate::grid::{check_grids, ScalarField, Sym2Field};
use crate::kernel::eigen_decompose;
use crate::oracle::pencil_quotient;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsMode {
    /// `log F(u) = ∫u vol_g + Ψ`
    IntegralForm,
    /// `F(u) = c·f` for an unknown constant `c > 0`, solved with `Ψ = log f`.
    FixedRhsUpToConstant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub newton_residual_sup: f64,
    pub linear_rel: f64,
    pub admissibility_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_residual_sup: 1e-10,
            linear_rel: 1e-10,
            admissibility_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homotopy {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_newton: usize,
}

impl Default for Homotopy {
    fn default() -> Self {
        Self {
            dt_init: 0.1,
            dt_min: 1e-4,
            dt_max: 0.5,
            max_newton: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    /// FFT inverse of the constant-coefficient operator with averaged coefficients.
    #[default]
    Spectral,
    Jacobi,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub background: Background,
    pub psi: ScalarField,
    pub rhs_mode: RhsMode,
    pub f: Option<ScalarField>,
    pub tolerances: Tolerances,
    pub homotopy: Homotopy,
    pub preconditioner: Preconditioner,
}

impl ProblemSpec {
    pub fn new(g: Sym2Field, chi: Sym2Field, psi: ScalarField) -> Result<Self> {
        check_grids(g.grid(), psi.grid())?;
        Ok(Self {
            background: Background::new(g, chi)?,
            psi,
            rhs_mode: RhsMode::IntegralForm,
            f: None,
            tolerances: Tolerances::default(),
            homotopy: Homotopy::default(),
            preconditioner: Preconditioner::default(),
        })
    }

    pub fn from_background(background: Background, psi: ScalarField) -> Result<Self> {
        check_grids(background.grid(), psi.grid())?;
        Ok(Self {
            background,
            psi,
            rhs_mode: RhsMode::IntegralForm,
            f: None,
            tolerances: Tolerances::default(),
            homotopy: Homotopy::default(),
            preconditioner: Preconditioner::default(),
        })
    }

    /// Fixed right-hand side mode: `Ψ = log f`.
    pub fn fixed_rhs(background: Background, f: ScalarField) -> Result<Self> {
        check_grids(background.grid(), f.grid())?;
        if let Some(p) = f.values().iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Argument(format!(
                "f must be positive, found {} at node {:?}",
                f.values()[p],
                f.grid().node(p)
            )));
        }
        let mut spec = Self::from_background(background, f.map(f64::ln))?;
        spec.rhs_mode = RhsMode::FixedRhsUpToConstant;
        spec.f = Some(f);
        Ok(spec)
    }

    pub fn g(&self) -> &Sym2Field {
        &self.background.g
    }

    pub fn chi(&self) -> &Sym2Field {
        &self.background.chi
    }

    pub fn validate(&self) -> Result<()> {
        let tol = &self.tolerances;
        for (key, v) in [
            ("tolerances.newton_residual_sup", tol.newton_residual_sup),
            ("tolerances.linear_rel", tol.linear_rel),
            ("tolerances.admissibility_floor", tol.admissibility_floor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        let h = &self.homotopy;
        if !(h.dt_min > 0.0) {
            return Err(Error::config("homotopy.dt_min", "must be positive"));
        }
        if h.dt_min > h.dt_init {
            return Err(Error::config(
                "homotopy.dt_min",
                format!("dt_min = {} exceeds dt_init = {}", h.dt_min, h.dt_init),
            ));
        }
        if h.dt_init > 1.0 {
            return Err(Error::config("homotopy.dt_init", "must not exceed 1"));
        }
        if h.dt_max < h.dt_init || h.dt_max > 1.0 {
            return Err(Error::config("homotopy.dt_max", "must lie in [dt_init, 1]"));
        }
        if h.max_newton == 0 {
            return Err(Error::config("homotopy.max_newton", "must be at least 1"));
        }
        if let Some(f) = &self.f {
            if f.values().iter().any(|&v| !(v > 0.0)) {
                return Err(Error::config("rhs.f", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        quadrature_weights(self.g()).iter().sum()
    }

    /// `log F₀` with `F₀ = F(λ(g⁻¹χ))`, the operator at constant `u`.
    pub fn log_f0(&self) -> Result<ScalarField> {
        let g = self.g();
        let chi = self.chi();
        let vals: Vec<f64> = g
            .values()
            .iter()
            .zip(chi.values())
            .enumerate()
            .map(|(p, (&gm, &cm))| {
                let e = eigen_decompose(gm, cm);
                if e.lambda2 > 0.0 {
                    Ok(pencil_quotient(gm, cm).ln())
                } else {
                    Err(Error::Admissibility {
                        node: g.grid().node(p),
                        margin: e.lambda2,
                    })
                }
            })
            .collect::<Result<_>>()?;
        ScalarField::new(*g.grid(), vals)
    }

    /// Start of the continuation path: `Ψ₀ = log F₀ − m` where `m` is the
    /// volume average of `log F₀`, and the constant root `c = m / V` of the
    /// `t = 0` equation. When `F₀` is constant `Ψ₀ ≡ 0`.
    pub fn path_start(&self) -> Result<(ScalarField, f64)> {
        let lf0 = self.log_f0()?;
        let vol = self.volume();
        let m = integrate(&lf0, self.g())? / vol;
        let psi0 = if lf0.oscillation() == 0.0 {
            ScalarField::zeros(*lf0.grid())
        } else {
            lf0.add_scalar(-m)
        };
        Ok((psi0, m / vol))
    }
}

/// Replaces `(χ, Ψ)` by `(χ + ∇²v, Ψ + ∫v vol_g)`. A solution `ũ` of the new
/// problem gives `u = v + ũ` for the original one.
pub fn reduce_to_positive_chi(
    chi: &Sym2Field,
    v: &ScalarField,
    psi: &ScalarField,
    g: &Sym2Field,
) -> Result<(Sym2Field, ScalarField)> {
    check_grids(chi.grid(), v.grid())?;
    check_grids(chi.grid(), psi.grid())?;
    let bg = Background::new(g.clone(), chi.clone())?;
    let chi_new = bg.gtilde(v)?;
    let (node, margin) = crate::kernel::admissibility_margin_at(g, &chi_new)?;
    if !(margin > 0.0) {
        return Err(Error::Admissibility { node, margin });
    }
    let shift = integrate(v, g)?;
    Ok((chi_new, psi.add_scalar(shift)))
}

/// Pointwise data of `g̃ = χ + ∇²u`.
pub(crate) struct Pointwise {
    pub gtilde: Sym2Field,
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
}

impl Pointwise {
    pub fn new(u: &ScalarField, spec: &ProblemSpec) -> Result<Self> {
        let gtilde = spec.background.gtilde(u)?;
        let (lambda1, lambda2) = spec
            .g()
            .values()
            .par_iter()
            .zip(gtilde.values().par_iter())
            .map(|(&gm, &gt)| {
                let e = eigen_decompose(gm, gt);
                (e.lambda1, e.lambda2)
            })
            .unzip();
        Ok(Self {
            gtilde,
            lambda1,
            lambda2,
        })
    }

    /// Smallest `λ₂` with the lowest index winning ties.
    pub fn margin(&self) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for (p, &l) in self.lambda2.iter().enumerate() {
            if l < best.1 {
                best = (p, l);
            }
        }
        best
    }

    pub fn lambda1_max(&self) -> f64 {
        self.lambda1
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn require_admissible(&self, u: &ScalarField) -> Result<()> {
        let (p, m) = self.margin();
        if m > 0.0 {
            Ok(())
        } else {
            Err(Error::Admissibility {
                node: u.grid().node(p),
                margin: m,
            })
        }
    }
}

/// Right-hand side of the path at `t`: `tΨ + (1 − t)Ψ₀`.
pub(crate) fn path_rhs(spec: &ProblemSpec, psi0: &ScalarField, t: f64) -> ScalarField {
    spec.psi
        .zip_with(psi0, |a, b| t * a + (1.0 - t) * b)
        .expect("grids checked at construction")
}

pub(crate) fn residual_with(
    u: &ScalarField,
    pw: &Pointwise,
    rhs: &ScalarField,
    spec: &ProblemSpec,
) -> Result<ScalarField> {
    pw.require_admissible(u)?;
    let total = integrate(u, spec.g())?;
    let vals = pw
        .lambda1
        .iter()
        .zip(&pw.lambda2)
        .zip(rhs.values())
        .map(|((&l1, &l2), &r)| (l1 * l2 / (l1 + l2)).ln() - total - r)
        .collect();
    Ok(ScalarField::from_vec_unchecked(*u.grid(), vals))
}

/// `G_t(u) = log F(u) − ∫u vol_g − tΨ − (1 − t)Ψ₀`.
pub fn residual(u: &ScalarField, t: f64, spec: &ProblemSpec) -> Result<ScalarField> {
    check_grids(u.grid(), spec.g().grid())?;
    let (psi0, _) = spec.path_start()?;
    let pw = Pointwise::new(u, spec)?;
    residual_with(u, &pw, &path_rhs(spec, &psi0, t), spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Sym2};
    use std::f64::consts::TAU;

    fn flat_spec(n: usize, psi: impl Fn(f64, f64) -> f64) -> ProblemSpec {
        let grid = Grid::standard(n).unwrap();
        ProblemSpec::from_background(Background::flat(grid), ScalarField::from_fn(grid, psi))
            .unwrap()
    }

    #[test]
    fn constant_residual_at_t0() {
        let spec = flat_spec(16, |_, _| 0.0);
        let c = 0.3;
        let u = ScalarField::constant(*spec.g().grid(), c);
        let r = residual(&u, 0.0, &spec).unwrap();
        let want = 0.5f64.ln() - c * TAU * TAU;
        assert!(r.values().iter().all(|&v| (v - want).abs() < 1e-12));
        let (psi0, root) = spec.path_start().unwrap();
        assert_eq!(psi0.sup_norm(), 0.0);
        assert!((root - 0.5f64.ln() / (TAU * TAU)).abs() < 1e-15);
    }

    #[test]
    fn inadmissible_residual_is_error() {
        let spec = flat_spec(16, |_, _| 0.0);
        let u = ScalarField::from_fn(*spec.g().grid(), |x, _| 2.0 * x.cos());
        assert!(matches!(
            residual(&u, 1.0, &spec),
            Err(Error::Admissibility { .. })
        ));
    }

    #[test]
    fn reduction_examples() {
        let grid = Grid::standard(32).unwrap();
        let g = Sym2Field::identity(grid);
        let psi = ScalarField::from_fn(grid, |x, y| (x + y).sin());
        let (c, p) = reduce_to_positive_chi(&g, &ScalarField::zeros(grid), &psi, &g).unwrap();
        assert_eq!((c, p), (g.clone(), psi.clone()));

        let v = ScalarField::from_fn(grid, |x, _| 0.2 * x.cos());
        let (c, p) = reduce_to_positive_chi(&g, &v, &psi, &g).unwrap();
        for q in 0..grid.len() {
            let (x, _) = grid.coords(q);
            assert!((c.at(q).xx - (1.0 - 0.2 * x.cos())).abs() < 1e-3);
        }
        assert!(p.sup_distance(&psi).unwrap() < 1e-14);

        // bump with unit integral
        let half = Sym2Field::constant(grid, Sym2::scaled_identity(0.5));
        let bump = ScalarField::from_fn(grid, |x, y| (1.0 + 0.1 * x.cos() * y.cos()) / (TAU * TAU));
        let (_, p) = reduce_to_positive_chi(&half, &bump, &psi, &g).unwrap();
        let shifted = psi.add_scalar(1.0);
        assert!(p.sup_distance(&shifted).unwrap() < 1e-14);

        let bad = ScalarField::from_fn(grid, |x, _| 3.0 * x.cos());
        assert!(matches!(
            reduce_to_positive_chi(&g, &bad, &psi, &g),
            Err(Error::Admissibility { .. })
        ));
    }

    #[test]
    fn validation_names_keys() {
        let mut spec = flat_spec(8, |_, _| 0.0);
        spec.homotopy.dt_min = 0.5;
        match spec.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "homotopy.dt_min"),
            other => panic!("{other:?}"),
        }
        let mut spec = flat_spec(8, |_, _| 0.0);
        spec.tolerances.linear_rel = 0.0;
        assert!(spec.validate().is_err());
    }
}
