//! Diagnostics built on the eigenframe of `g̃ = χ + ∇²u`: the test
//! quantities `W = log λ₁` and `Q̃`, derivatives of the λ₁ eigenvector
//! field, the structural term and the extremal system at the max of `Q̃`.

use crate::error::{Error, Node, Result};
use crate::geometry::Background;
use crate::grid::{check_grids, Differences, Grid, ScalarField, Sym2, View};
use crate::kernel::{eigen_decompose, EigenPair2D};

use super::estimates::gtilde;
use super::EstimateReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonitorConfig {
    /// `A = φ'` of the linear `φ(s) = A s`.
    pub phi_slope: f64,
    /// Minimum relative gap `(λ₁ − λ₂)/λ₁` at which the λ₁ eigenvector is used.
    pub gap_floor: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        Self {
            phi_slope: 1.0,
            gap_floor: 0.1,
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.phi_slope >= 0.0 && self.phi_slope.is_finite()) {
            return Err(Error::config("monitor.phi_slope", "must be non-negative"));
        }
        if !(self.gap_floor > 0.0 && self.gap_floor < 1.0) {
            return Err(Error::config("monitor.gap_floor", "must lie in (0, 1)"));
        }
        Ok(())
    }

    fn gapped(&self, e: &EigenPair2D) -> bool {
        e.gap >= self.gap_floor * e.lambda1
    }
}

/// Components of `g̃` and its per-node eigen-decomposition.
struct Spectrum {
    grid: Grid,
    comps: [Vec<f64>; 3],
    eig: Vec<EigenPair2D>,
}

impl Spectrum {
    fn new(u: &ScalarField, bg: &Background) -> Result<Self> {
        check_grids(u.grid(), bg.grid())?;
        let gt = gtilde(u, bg);
        let eig: Vec<EigenPair2D> =
            bg.g.values()
                .iter()
                .zip(gt.values())
                .map(|(&g, &t)| eigen_decompose(g, t))
                .collect();
        if let Some(p) = eig.iter().position(|e| !(e.lambda2 > 0.0)) {
            return Err(Error::Admissibility {
                node: u.grid().node(p),
                margin: eig[p].lambda2,
            });
        }
        Ok(Self {
            grid: *u.grid(),
            comps: [
                gt.values().iter().map(|m| m.xx).collect(),
                gt.values().iter().map(|m| m.xy).collect(),
                gt.values().iter().map(|m| m.yy).collect(),
            ],
            eig,
        })
    }

    /// `E_aᵀ (∂_{E_i} g̃) E_b`
    fn first(&self, p: usize, a: [f64; 2], b: [f64; 2], dir: [f64; 2]) -> f64 {
        let d: Vec<f64> = self
            .comps
            .iter()
            .map(|c| dir1(&self.grid, c, p, dir))
            .collect();
        Sym2::new(d[0], d[1], d[2]).bilinear(a, b)
    }

    /// `E_aᵀ (∂²_{E_i} g̃) E_b`
    fn second(&self, p: usize, a: [f64; 2], b: [f64; 2], dir: [f64; 2]) -> f64 {
        let d: Vec<f64> = self
            .comps
            .iter()
            .map(|c| dir2(&self.grid, c, p, dir))
            .collect();
        Sym2::new(d[0], d[1], d[2]).bilinear(a, b)
    }

    fn all_gapped(&self, p: usize, cfg: &MonitorConfig) -> bool {
        let nb = self.grid.neighbors(p);
        [nb.c, nb.e, nb.w, nb.n, nb.s, nb.ne, nb.nw, nb.se, nb.sw]
            .iter()
            .all(|&q| cfg.gapped(&self.eig[q]))
    }
}

fn dir1(grid: &Grid, data: &[f64], p: usize, a: [f64; 2]) -> f64 {
    let v = View { grid, data };
    a[0] * v.dx(p) + a[1] * v.dy(p)
}

fn dir2(grid: &Grid, data: &[f64], p: usize, a: [f64; 2]) -> f64 {
    let v = View { grid, data };
    a[0] * a[0] * v.dxx(p) + 2.0 * a[0] * a[1] * v.dxy(p) + a[1] * a[1] * v.dyy(p)
}

#[derive(Debug, Clone)]
pub struct TestQuantities {
    /// `W = log λ₁`
    pub w: ScalarField,
    /// `Q̃ = log λ₁ + A·½(∂_V u)²`, equal to `W` where the gap is too small.
    pub qtilde: ScalarField,
    pub argmax: Node,
    pub masked: usize,
}

pub fn test_quantities(
    u: &ScalarField,
    bg: &Background,
    cfg: &MonitorConfig,
) -> Result<TestQuantities> {
    cfg.validate()?;
    let spec = Spectrum::new(u, bg)?;
    let grid = *u.grid();
    let mut w = Vec::with_capacity(grid.len());
    let mut q = Vec::with_capacity(grid.len());
    let mut masked = 0;
    for (p, e) in spec.eig.iter().enumerate() {
        let wp = e.lambda1.ln();
        w.push(wp);
        if cfg.gapped(e) {
            let uv = dir1(&grid, u.values(), p, e.e1);
            q.push(wp + cfg.phi_slope * 0.5 * uv * uv);
        } else {
            masked += 1;
            q.push(wp);
        }
    }
    let qtilde = ScalarField::new(grid, q)?;
    let argmax = grid.node(qtilde.argmax().0);
    Ok(TestQuantities {
        w: ScalarField::new(grid, w)?,
        qtilde,
        argmax,
        masked,
    })
}

/// Formula and difference values of the λ₁-eigenvector derivatives at one
/// node, in the eigenframe `(E₁, E₂)` of that node. Index `i` runs over the
/// directions `E₁, E₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigvecSample {
    pub node: Node,
    /// `V²ᵢ = g̃₁₂,ᵢ/(λ₁ − λ₂)`
    pub v2_first: [f64; 2],
    pub v2_first_fd: [f64; 2],
    /// `V¹ᵢ`, zero by the unit-norm constraint
    pub v1_first_fd: [f64; 2],
    /// `V²ᵢᵢ = (2V²ᵢ g̃₂₂,ᵢ + g̃₁₂,ᵢᵢ − 2g̃₁₁,ᵢ V²ᵢ)/(λ₁ − λ₂)`
    pub v2_second: [f64; 2],
    pub v2_second_fd: [f64; 2],
    /// `V¹ᵢᵢ = −(V²ᵢ)²`
    pub v1_second: [f64; 2],
    pub v1_second_fd: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct EigvecFieldReport {
    pub samples: Vec<EigvecSample>,
    /// Max over samples of `|1 − g(V, V)|`.
    pub unit_norm_max: f64,
    pub masked: usize,
    pub first_error: f64,
    pub second_error: f64,
    /// `sup |V¹ᵢ|` from differences.
    pub v1_first_max: f64,
}

fn rel_sup(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for (formula, fd) in pairs {
        diff = diff.max((formula - fd).abs());
        scale = scale.max(fd.abs());
    }
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

impl EigvecFieldReport {
    /// Relative sup errors `(first, second)` restricted to samples accepted by `keep`.
    pub fn errors_where(&self, keep: impl Fn(Node) -> bool) -> (f64, f64) {
        let kept: Vec<&EigvecSample> = self.samples.iter().filter(|s| keep(s.node)).collect();
        let first = rel_sup(
            kept.iter()
                .flat_map(|s| (0..2).map(move |i| (s.v2_first[i], s.v2_first_fd[i]))),
        );
        let second = rel_sup(kept.iter().flat_map(|s| {
            (0..2).flat_map(move |i| {
                [
                    (s.v2_second[i], s.v2_second_fd[i]),
                    (s.v1_second[i], s.v1_second_fd[i]),
                ]
            })
        }));
        (first, second)
    }
}

fn require_flat(bg: &Background, what: &str) -> Result<()> {
    bg.require_flat(what)
}

/// Compares the closed-form derivatives of the λ₁ eigenvector field with
/// differences of the sign-aligned field. Needs the flat metric.
pub fn eigvec_field_checks(
    u: &ScalarField,
    bg: &Background,
    cfg: &MonitorConfig,
) -> Result<EigvecFieldReport> {
    require_flat(bg, "the eigenvector field check")?;
    cfg.validate()?;
    let spec = Spectrum::new(u, bg)?;
    let grid = spec.grid;
    let mut samples = Vec::new();
    let mut masked = 0;
    let mut unit_norm_max: f64 = 0.0;
    let mut scratch = [vec![0.0; grid.len()], vec![0.0; grid.len()]];
    for p in 0..grid.len() {
        if !spec.all_gapped(p, cfg) {
            masked += 1;
            continue;
        }
        let e = &spec.eig[p];
        let frame = [e.e1, e.e2];
        let gap = e.gap;
        unit_norm_max = unit_norm_max.max((1.0 - Sym2::IDENTITY.quad(e.e1)).abs());

        // components of the sign-aligned neighbour eigenvectors in this frame
        let nb = grid.neighbors(p);
        for q in [nb.c, nb.e, nb.w, nb.n, nb.s, nb.ne, nb.nw, nb.se, nb.sw] {
            let mut v = spec.eig[q].e1;
            if v[0] * e.e1[0] + v[1] * e.e1[1] < 0.0 {
                v = [-v[0], -v[1]];
            }
            for (a, s) in scratch.iter_mut().enumerate() {
                s[q] = v[0] * frame[a][0] + v[1] * frame[a][1];
            }
        }

        let mut sample = EigvecSample {
            node: grid.node(p),
            v2_first: [0.0; 2],
            v2_first_fd: [0.0; 2],
            v1_first_fd: [0.0; 2],
            v2_second: [0.0; 2],
            v2_second_fd: [0.0; 2],
            v1_second: [0.0; 2],
            v1_second_fd: [0.0; 2],
        };
        for (i, &dir) in frame.iter().enumerate() {
            let g12_i = spec.first(p, frame[0], frame[1], dir);
            let g11_i = spec.first(p, frame[0], frame[0], dir);
            let g22_i = spec.first(p, frame[1], frame[1], dir);
            let g12_ii = spec.second(p, frame[0], frame[1], dir);
            let v2_i = g12_i / gap;
            sample.v2_first[i] = v2_i;
            sample.v2_second[i] = (2.0 * v2_i * g22_i + g12_ii - 2.0 * g11_i * v2_i) / gap;
            sample.v1_second[i] = -v2_i * v2_i;
            sample.v1_first_fd[i] = dir1(&grid, &scratch[0], p, dir);
            sample.v2_first_fd[i] = dir1(&grid, &scratch[1], p, dir);
            sample.v1_second_fd[i] = dir2(&grid, &scratch[0], p, dir);
            sample.v2_second_fd[i] = dir2(&grid, &scratch[1], p, dir);
        }
        samples.push(sample);
    }
    let mut report = EigvecFieldReport {
        v1_first_max: samples
            .iter()
            .flat_map(|s| s.v1_first_fd)
            .fold(0.0, |m, v| m.max(v.abs())),
        samples,
        unit_norm_max,
        masked,
        first_error: 0.0,
        second_error: 0.0,
    };
    let (first, second) = report.errors_where(|_| true);
    report.first_error = first;
    report.second_error = second;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct StructuralReport {
    /// `max (R − L_F log λ₁)` over tested nodes, `None` when no node qualifies.
    pub empirical_c: Option<f64>,
    pub location: Option<Node>,
    /// `R − L_F log λ₁` at tested nodes.
    pub deficit: Vec<Option<f64>>,
    pub tested: usize,
    /// `λ₁` threshold: twice the median of `λ₁(g⁻¹χ)`.
    pub threshold: f64,
}

/// Empirical constant of `L_F(log λ₁) ≥ F¹¹ g̃₁₁,₁²/λ₁² − C` on nodes where
/// the gap is resolved and `λ₁` is at least twice its background median.
pub fn structural_report(
    u: &ScalarField,
    bg: &Background,
    cfg: &MonitorConfig,
) -> Result<StructuralReport> {
    require_flat(bg, "the structural report")?;
    cfg.validate()?;
    let spec = Spectrum::new(u, bg)?;
    let grid = spec.grid;
    let mut ambient: Vec<f64> =
        bg.g.values()
            .iter()
            .zip(bg.chi.values())
            .map(|(&g, &c)| eigen_decompose(g, c).lambda1)
            .collect();
    ambient.sort_by(f64::total_cmp);
    let mid = ambient.len() / 2;
    let median = if ambient.len() % 2 == 0 {
        0.5 * (ambient[mid - 1] + ambient[mid])
    } else {
        ambient[mid]
    };
    let threshold = 2.0 * median;
    let w: Vec<f64> = spec.eig.iter().map(|e| e.lambda1.ln()).collect();

    let mut deficit = vec![None; grid.len()];
    let mut best: Option<(usize, f64)> = None;
    let mut tested = 0;
    for (p, e) in spec.eig.iter().enumerate() {
        if !(e.lambda1 >= threshold && spec.all_gapped(p, cfg)) {
            continue;
        }
        tested += 1;
        let (l1, l2) = (e.lambda1, e.lambda2);
        let f = l1 * l2 / (l1 + l2);
        let fii = [f * f / (l1 * l1), f * f / (l2 * l2)];
        let frame = [e.e1, e.e2];
        let lw: f64 = (0..2).map(|i| fii[i] * dir2(&grid, &w, p, frame[i])).sum();
        let g11_1 = spec.first(p, e.e1, e.e1, e.e1);
        let r = fii[0] * g11_1 * g11_1 / (l1 * l1);
        let d = r - lw;
        deficit[p] = Some(d);
        if best.is_none_or(|(_, b)| d > b) {
            best = Some((p, d));
        }
    }
    Ok(StructuralReport {
        empirical_c: best.map(|b| b.1),
        location: best.map(|b| grid.node(b.0)),
        deficit,
        tested,
        threshold,
    })
}

/// Constant of the four derivative bounds at the max of `Q̃`. Only the
/// λ₁-power scaling of the bounds is meaningful, so this is a fixed generous
/// choice rather than a derived value.
pub const C_EXTREMAL: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct ExtremalDetail {
    pub lambda: [f64; 2],
    /// `g̃₁₁,ᵢ/λ₁ + A u₁ (V²ᵢ u₂ + δ¹ᵢ g̃₁₁ − χ₁ᵢ)` for `i = 1, 2`.
    pub residuals: [f64; 2],
    /// `(g̃₁₁,₁, g̃₁₁,₂)` from the merged extremal system.
    pub merged: [f64; 2],
    /// `(g̃₁₁,₁, g̃₁₁,₂)` from differences.
    pub direct: [f64; 2],
    /// `|g̃₁₁,₁| < C A λ₁²`, `|g̃₁₁,₂| < C A λ₁`, `|g̃₂₂,₁| < C A`, `|g̃₂₂,₂| < C`.
    pub bounds: Vec<EstimateReport>,
}

#[derive(Debug, Clone)]
pub struct ExtremalReport {
    pub node: Node,
    /// True when `λ₁ < 3λ₂` or the gap is unresolved; nothing is evaluated.
    pub vacuous: bool,
    pub detail: Option<ExtremalDetail>,
}

/// First-order conditions at a discrete maximum of `Q̃` and the derivative
/// bounds they imply. Needs the flat metric and a constant `χ`.
pub fn extremal_system_residual(
    u: &ScalarField,
    node: Node,
    bg: &Background,
    cfg: &MonitorConfig,
) -> Result<ExtremalReport> {
    require_flat(bg, "the extremal system")?;
    if !bg.chi.is_constant() {
        return Err(Error::Unsupported(
            "the extremal system needs a constant χ".into(),
        ));
    }
    let tq = test_quantities(u, bg, cfg)?;
    let grid = *u.grid();
    if node.0 >= grid.n() || node.1 >= grid.n() {
        return Err(Error::Argument(format!(
            "node {node:?} is outside the grid"
        )));
    }
    let p = grid.index(node.0 as isize, node.1 as isize);
    let nb = grid.neighbors(p);
    let qv = tq.qtilde.values();
    if [nb.e, nb.w, nb.n, nb.s, nb.ne, nb.nw, nb.se, nb.sw]
        .iter()
        .any(|&q| qv[q] > qv[p])
    {
        return Err(Error::Argument(format!(
            "node {node:?} is not a local max of Q̃"
        )));
    }

    let spec = Spectrum::new(u, bg)?;
    let e = spec.eig[p];
    let (l1, l2) = (e.lambda1, e.lambda2);
    if l1 < 3.0 * l2 || !cfg.gapped(&e) {
        return Ok(ExtremalReport {
            node,
            vacuous: true,
            detail: None,
        });
    }
    let a = cfg.phi_slope;
    let (e1, e2) = (e.e1, e.e2);
    let gap = l1 - l2;
    let chi = bg.chi.at(p);
    let (chi11, chi12) = (chi.bilinear(e1, e1), chi.bilinear(e1, e2));
    let u1 = dir1(&grid, u.values(), p, e1);
    let u2 = dir1(&grid, u.values(), p, e2);

    let g11 = [spec.first(p, e1, e1, e1), spec.first(p, e1, e1, e2)];
    let g12 = [spec.first(p, e1, e2, e1), spec.first(p, e1, e2, e2)];
    let g22 = [spec.first(p, e2, e2, e1), spec.first(p, e2, e2, e2)];
    let v2 = [g12[0] / gap, g12[1] / gap];
    let residuals = [
        g11[0] / l1 + a * u1 * (v2[0] * u2 + l1 - chi11),
        g11[1] / l1 + a * u1 * (v2[1] * u2 - chi12),
    ];

    let fvals: Vec<f64> = spec
        .eig
        .iter()
        .map(|e| e.lambda1 * e.lambda2 / (e.lambda1 + e.lambda2))
        .collect();
    let f = fvals[p];
    let f1 = dir1(&grid, &fvals, p, e1);
    let alpha = l1 * a * u1 * u2 / gap;
    let q = l2 * l2 / (l1 * l1);
    let big_p = f1 * l2 * l2 / (f * f);
    let s = l1 * a * u1 * chi12;
    let r = -l1 * a * u1 * (l1 - chi11);
    let x = (alpha * alpha * big_p - alpha * s + r) / (1.0 + alpha * alpha * q);
    let y = -alpha * (big_p - x * q) + s;

    let bounds = vec![
        EstimateReport::new("g11_1", C_EXTREMAL * a * l1 * l1, g11[0].abs(), Some(node)),
        EstimateReport::new("g11_2", C_EXTREMAL * a * l1, g11[1].abs(), Some(node)),
        EstimateReport::new("g22_1", C_EXTREMAL * a, g22[0].abs(), Some(node)),
        EstimateReport::new("g22_2", C_EXTREMAL, g22[1].abs(), Some(node)),
    ];
    Ok(ExtremalReport {
        node,
        vacuous: false,
        detail: Some(ExtremalDetail {
            lambda: [l1, l2],
            residuals,
            merged: [x, y],
            direct: g11,
            bounds,
        }),
    })
}
