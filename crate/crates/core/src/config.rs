//! Run configuration read from TOML.
//!
//! ```toml
//! command = "solve"
//! seed = 7
//! output_dir = "out"
//!
//! [grid]
//! n = 64
//!
//! [metric]
//! family = "conformal"
//! psi = "0.1 cos(x) cos(y)"
//!
//! [chi]
//! alpha = 1.0
//!
//! [rhs]
//! psi = "0.3 sin(x) sin(y)"
//! ```

use std::f64::consts::TAU;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geometry::Background;
use crate::grid::{Grid, ScalarField, Sym2Field};
use crate::monitor::MonitorConfig;
use crate::oracle::{make_manufactured, Family, ManufacturedProblem};
use crate::solver::{Homotopy, Preconditioner, ProblemSpec, Tolerances};
use crate::trig::TrigSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    SolveFixedRhs,
    VerifyEstimates,
    CheckIdentities,
    Monitor,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub metric: MetricSection,
    #[serde(default)]
    pub chi: ChiSection,
    #[serde(default)]
    pub rhs: RhsSection,
    pub manufactured: Option<ManufacturedSection>,
    #[serde(default)]
    pub tolerances: TolSection,
    #[serde(default)]
    pub homotopy: HomotopySection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub monitor: MonitorSection,
    #[serde(default)]
    pub identities: IdentitySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub period: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MetricFamily {
    #[default]
    Flat,
    Conformal,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSection {
    #[serde(default)]
    pub family: MetricFamily,
    /// `ψ` of `g = e^{2ψ}δ`; defaults to `amplitude · cos x cos y`.
    pub psi: Option<String>,
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiSection {
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    pub v0: Option<String>,
}

impl Default for ChiSection {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            v0: None,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhsSection {
    pub psi: Option<String>,
    pub psi_file: Option<PathBuf>,
    pub f: Option<String>,
    pub f_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManufacturedSection {
    /// `isotropic`, `anisotropic`, `peaked` or `custom`.
    pub family: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub u_star: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolSection {
    pub newton_residual_sup: Option<f64>,
    pub linear_rel: Option<f64>,
    pub admissibility_floor: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomotopySection {
    pub dt_init: Option<f64>,
    pub dt_min: Option<f64>,
    pub dt_max: Option<f64>,
    pub max_newton: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub preconditioner: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    pub phi_slope: Option<f64>,
    pub gap_floor: Option<f64>,
    /// Field file analysed by the `monitor` command.
    pub solution_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl Default for IdentitySection {
    fn default() -> Self {
        Self {
            samples: default_samples(),
        }
    }
}

fn default_samples() -> usize {
    10_000
}

/// Everything the commands need, resolved from a [`RunConfig`].
#[derive(Debug, Clone)]
pub struct Resolved {
    pub spec: ProblemSpec,
    pub manufactured: Option<ManufacturedProblem>,
    pub monitor: MonitorConfig,
}

fn series(key: &str, text: &str) -> Result<TrigSeries> {
    TrigSeries::parse(text).map_err(|e| Error::config(key, e.to_string()))
}

fn read_field(key: &str, path: &Path, base: &Path, grid: Grid) -> Result<ScalarField> {
    let full = base.join(path);
    let file =
        File::open(&full).map_err(|e| Error::config(key, format!("{}: {e}", full.display())))?;
    let field = ScalarField::read_text(BufReader::new(file))
        .map_err(|e| Error::config(key, e.to_string()))?;
    if !field.grid().same_as(&grid) {
        return Err(Error::config(key, "field grid does not match [grid]"));
    }
    Ok(field)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // serde names unknown keys in the message; keep it as the key
            Error::config("config", msg)
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::config("grid", "missing [grid] section"))?;
        let period = g.period.unwrap_or(TAU);
        Grid::new(g.n, period).map_err(|e| Error::config("grid.n", e.to_string()))
    }

    fn monitor_config(&self) -> Result<MonitorConfig> {
        let d = MonitorConfig::default();
        let m = MonitorConfig {
            phi_slope: self.monitor.phi_slope.unwrap_or(d.phi_slope),
            gap_floor: self.monitor.gap_floor.unwrap_or(d.gap_floor),
        };
        m.validate()?;
        Ok(m)
    }

    fn metric_series(&self) -> Result<TrigSeries> {
        match self.metric.family {
            MetricFamily::Flat => {
                if self.metric.psi.is_some() || self.metric.amplitude.is_some() {
                    return Err(Error::config(
                        "metric.family",
                        "flat metric takes no psi or amplitude",
                    ));
                }
                Ok(TrigSeries::zero())
            }
            MetricFamily::Conformal => match (&self.metric.psi, self.metric.amplitude) {
                (Some(_), Some(_)) => {
                    Err(Error::config("metric.psi", "give either psi or amplitude"))
                }
                (Some(text), None) => series("metric.psi", text),
                (None, a) => Ok(TrigSeries::parse("cos(x) cos(y)")?.scaled(a.unwrap_or(0.1))),
            },
        }
    }

    fn tolerances(&self) -> Tolerances {
        let d = Tolerances::default();
        Tolerances {
            newton_residual_sup: self
                .tolerances
                .newton_residual_sup
                .unwrap_or(d.newton_residual_sup),
            linear_rel: self.tolerances.linear_rel.unwrap_or(d.linear_rel),
            admissibility_floor: self
                .tolerances
                .admissibility_floor
                .unwrap_or(d.admissibility_floor),
        }
    }

    fn homotopy(&self) -> Homotopy {
        let d = Homotopy::default();
        Homotopy {
            dt_init: self.homotopy.dt_init.unwrap_or(d.dt_init),
            dt_min: self.homotopy.dt_min.unwrap_or(d.dt_min),
            dt_max: self.homotopy.dt_max.unwrap_or(d.dt_max),
            max_newton: self.homotopy.max_newton.unwrap_or(d.max_newton),
        }
    }

    fn preconditioner(&self) -> Result<Preconditioner> {
        match self.solver.preconditioner.as_deref() {
            None | Some("spectral") => Ok(Preconditioner::Spectral),
            Some("jacobi") => Ok(Preconditioner::Jacobi),
            Some(other) => Err(Error::config(
                "solver.preconditioner",
                format!("unknown preconditioner `{other}` (spectral | jacobi)"),
            )),
        }
    }

    fn manufactured_family(&self, m: &ManufacturedSection, metric: TrigSeries) -> Result<Family> {
        let a = m.a.unwrap_or(0.1);
        let b = m.b.unwrap_or(0.1);
        let mut fam = match m.family.as_str() {
            "isotropic" => Family::isotropic(a, b),
            "anisotropic" => Family::anisotropic(m.a.unwrap_or(0.6), m.b.unwrap_or(0.1)),
            "peaked" => Family::peaked(),
            "custom" => {
                let text = m.u_star.as_deref().ok_or_else(|| {
                    Error::config("manufactured.u_star", "required for the custom family")
                })?;
                Family::new(series("manufactured.u_star", text)?)
            }
            other => {
                return Err(Error::config(
                    "manufactured.family",
                    format!("unknown family `{other}` (isotropic | anisotropic | peaked | custom)"),
                ))
            }
        };
        if m.u_star.is_some() && m.family != "custom" {
            return Err(Error::config(
                "manufactured.u_star",
                "only used by the custom family",
            ));
        }
        fam.metric = metric;
        fam.chi_scale = self.chi.alpha;
        Ok(fam)
    }

    /// Validates every field and builds the problem. Relative file paths are
    /// resolved against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Resolved> {
        let grid = self.grid()?;
        let monitor = self.monitor_config()?;
        let metric = self.metric_series()?;
        if self.metric.family == MetricFamily::Conformal && (grid.period() - TAU).abs() > 1e-12 {
            return Err(Error::config("grid.period", "series data needs period 2π"));
        }
        if !(self.chi.alpha.is_finite()) {
            return Err(Error::config("chi.alpha", "must be finite"));
        }

        let (spec, manufactured) = if let Some(m) = &self.manufactured {
            if self.chi.beta != 0.0 || self.chi.v0.is_some() {
                return Err(Error::config(
                    "chi.beta",
                    "manufactured problems use χ = alpha·g",
                ));
            }
            if self.rhs.psi.is_some()
                || self.rhs.psi_file.is_some()
                || self.rhs.f.is_some()
                || self.rhs.f_file.is_some()
            {
                return Err(Error::config(
                    "rhs",
                    "manufactured problems compute their own right-hand side",
                ));
            }
            let fam = self.manufactured_family(m, metric)?;
            let prob = make_manufactured(&fam, grid)
                .map_err(|e| Error::config("manufactured", e.to_string()))?;
            let spec = ProblemSpec::new(prob.g.clone(), prob.chi.clone(), prob.psi.clone())?;
            (spec, Some(prob))
        } else {
            let g = Sym2Field::conformal(&metric.sample(grid));
            let mut chi = g.scale(self.chi.alpha);
            match (&self.chi.v0, self.chi.beta) {
                (Some(text), beta) => {
                    let v0 = series("chi.v0", text)?.sample(grid);
                    let flat =
                        Background::new(g.clone(), Sym2Field::constant(grid, Default::default()))?;
                    let hess = flat.gtilde(&v0)?;
                    chi = chi.add(&hess.scale(beta))?;
                }
                (None, beta) if beta != 0.0 => {
                    return Err(Error::config("chi.v0", "required when chi.beta is nonzero"));
                }
                _ => {}
            }
            let bg = Background::new(g, chi)?;
            let spec = match self.command {
                Command::SolveFixedRhs => {
                    let f = match (&self.rhs.f, &self.rhs.f_file) {
                        (Some(text), None) => series("rhs.f", text)?.sample(grid),
                        (None, Some(path)) => read_field("rhs.f_file", path, base, grid)?,
                        (Some(_), Some(_)) => {
                            return Err(Error::config("rhs.f", "give either f or f_file"))
                        }
                        (None, None) => {
                            return Err(Error::config("rhs.f", "required by solve-fixed-rhs"))
                        }
                    };
                    if let Some(p) = f.values().iter().position(|&v| !(v > 0.0)) {
                        return Err(Error::config(
                            "rhs.f",
                            format!(
                                "must be positive, found {} at node {:?}",
                                f.values()[p],
                                grid.node(p)
                            ),
                        ));
                    }
                    ProblemSpec::fixed_rhs(bg, f)?
                }
                _ => {
                    let psi = match (&self.rhs.psi, &self.rhs.psi_file) {
                        (Some(text), None) => series("rhs.psi", text)?.sample(grid),
                        (None, Some(path)) => read_field("rhs.psi_file", path, base, grid)?,
                        (Some(_), Some(_)) => {
                            return Err(Error::config("rhs.psi", "give either psi or psi_file"))
                        }
                        (None, None) => ScalarField::zeros(grid),
                    };
                    ProblemSpec::from_background(bg, psi)?
                }
            };
            (spec, None)
        };
        let mut spec = spec;
        spec.tolerances = self.tolerances();
        spec.homotopy = self.homotopy();
        spec.preconditioner = self.preconditioner()?;
        spec.validate()?;
        if self.identities.samples == 0 {
            return Err(Error::config("identities.samples", "must be positive"));
        }
        Ok(Resolved {
            spec,
            manufactured,
            monitor,
        })
    }
}
