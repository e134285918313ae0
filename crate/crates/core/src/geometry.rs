//! Discrete Riemannian geometry on the periodic grid.
//!
//! Christoffel symbols come from centered differences of the metric, the
//! single curvature component `R₁₂₁₂` from centered differences of the
//! Christoffel symbols. All stencils are second order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{check_grids, Differences, Grid, ScalarField, Sym2, Sym2Field};
use crate::kernel::eigen_decompose;

/// Multiplicative distortion bound of 8-neighbour graph distances relative to
/// geodesic distances, applied to graph diameters of non-isotropic metrics.
pub const GRAPH_DISTORTION: f64 = 1.09;

/// `Γ[k][i][j] = Γ^k_{ij}`
pub type Christoffel = [[[f64; 2]; 2]; 2];

#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionField {
    grid: Grid,
    gamma: Vec<Christoffel>,
    r1212: Vec<f64>,
}

impl ConnectionField {
    /// The Levi-Civita connection of a flat metric.
    pub fn flat(grid: Grid) -> Self {
        Self {
            grid,
            gamma: vec![[[[0.0; 2]; 2]; 2]; grid.len()],
            r1212: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn gamma(&self, p: usize) -> &Christoffel {
        &self.gamma[p]
    }

    /// Covariant component `R₁₂₁₂`.
    pub fn r1212(&self, p: usize) -> f64 {
        self.r1212[p]
    }

    /// Gauss curvature `K = R₁₂₁₂ / det g`.
    pub fn gauss_curvature(&self, g: &Sym2Field, p: usize) -> f64 {
        self.r1212[p] / g.at(p).det()
    }

    pub fn is_flat(&self) -> bool {
        self.r1212.iter().all(|&r| r == 0.0)
            && self
                .gamma
                .iter()
                .all(|c| c.iter().flatten().flatten().all(|&v| v == 0.0))
    }
}

struct Component<'a> {
    grid: &'a Grid,
    data: Vec<f64>,
}

impl Differences for Component<'_> {
    fn grid(&self) -> &Grid {
        self.grid
    }

    fn at(&self, p: usize) -> f64 {
        self.data[p]
    }
}

pub fn connection_from_metric(g: &Sym2Field) -> Result<ConnectionField> {
    g.check_spd()?;
    let grid = *g.grid();
    if g.is_constant() {
        return Ok(ConnectionField::flat(grid));
    }
    let comp = |a: usize, b: usize| Component {
        grid: &grid,
        data: g.values().iter().map(|m| m.entry(a, b)).collect(),
    };
    let metric = [[comp(0, 0), comp(0, 1)], [comp(1, 0), comp(1, 1)]];
    // dg[l][i][j] = ∂_l g_ij
    let deriv = |p: usize, l: usize, i: usize, j: usize| {
        if l == 0 {
            metric[i][j].dx(p)
        } else {
            metric[i][j].dy(p)
        }
    };

    let gamma: Vec<Christoffel> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let inv = g.at(p).inverse().expect("checked SPD");
            let mut out = [[[0.0; 2]; 2]; 2];
            for (k, out_k) in out.iter_mut().enumerate() {
                for i in 0..2 {
                    for j in 0..2 {
                        let mut s = 0.0;
                        for l in 0..2 {
                            s += inv.entry(k, l)
                                * (deriv(p, i, j, l) + deriv(p, j, i, l) - deriv(p, l, i, j));
                        }
                        out_k[i][j] = 0.5 * s;
                    }
                }
            }
            out
        })
        .collect();

    let gcomp = |k: usize, i: usize, j: usize| Component {
        grid: &grid,
        data: gamma.iter().map(|c| c[k][i][j]).collect(),
    };
    let g_yy = [gcomp(0, 1, 1), gcomp(1, 1, 1)];
    let g_xy = [gcomp(0, 0, 1), gcomp(1, 0, 1)];

    // R^ρ_{212} = ∂ₓΓ^ρ_{yy} − ∂ᵧΓ^ρ_{xy} + Γ^ρ_{xλ}Γ^λ_{yy} − Γ^ρ_{yλ}Γ^λ_{xy}
    let r1212 = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let c = &gamma[p];
            let mut r_up = [0.0; 2];
            for (rho, r) in r_up.iter_mut().enumerate() {
                let mut v = g_yy[rho].dx(p) - g_xy[rho].dy(p);
                for lam in 0..2 {
                    v += c[rho][0][lam] * c[lam][1][1] - c[rho][1][lam] * c[lam][0][1];
                }
                *r = v;
            }
            let m = g.at(p);
            m.xx * r_up[0] + m.xy * r_up[1]
        })
        .collect();

    Ok(ConnectionField { grid, gamma, r1212 })
}

/// `(∇²u)_{ij} = ∂ᵢ∂ⱼu − Γ^k_{ij} ∂ₖu` with compact second differences.
pub fn covariant_hessian(
    u: &ScalarField,
    g: &Sym2Field,
    conn: &ConnectionField,
) -> Result<Sym2Field> {
    check_grids(u.grid(), g.grid())?;
    check_grids(u.grid(), conn.grid())?;
    g.check_spd()?;
    Ok(covariant_hessian_unchecked(u, conn))
}

pub(crate) fn covariant_hessian_unchecked(u: &ScalarField, conn: &ConnectionField) -> Sym2Field {
    let grid = *u.grid();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let mut h = Sym2::new(u.dxx(p), u.dxy(p), u.dyy(p));
            let c = conn.gamma(p);
            let du = [u.dx(p), u.dy(p)];
            h.xx -= c[0][0][0] * du[0] + c[1][0][0] * du[1];
            h.xy -= c[0][0][1] * du[0] + c[1][0][1] * du[1];
            h.yy -= c[0][1][1] * du[0] + c[1][1][1] * du[1];
            h
        })
        .collect();
    Sym2Field::from_vec_unchecked(grid, values)
}

/// Quadrature weights `h² √det g`, one per node.
pub fn quadrature_weights(g: &Sym2Field) -> Vec<f64> {
    let h = g.grid().spacing();
    g.values().iter().map(|m| h * h * m.det().sqrt()).collect()
}

/// `∫ w vol_g` by the periodic trapezoid rule, summed in row-major order.
pub fn integrate(w: &ScalarField, g: &Sym2Field) -> Result<f64> {
    check_grids(w.grid(), g.grid())?;
    let h2 = w.grid().spacing().powi(2);
    Ok(w.values()
        .iter()
        .zip(g.values())
        .fold(0.0, |acc, (v, m)| acc + h2 * v * m.det().sqrt()))
}

pub fn volume(g: &Sym2Field) -> f64 {
    quadrature_weights(g).iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryConstants {
    /// `C(χ, g)`: smallest `C ≥ 0` with `χ ≤ C g`.
    pub c_upper: f64,
    /// `c(χ, g)`: smallest `c ≥ 0` with `−c g ≤ χ`.
    pub c_lower: f64,
    /// Upper-biased estimate of the `g`-diameter.
    pub diameter: f64,
    /// Largest shortest-path distance found on the grid graph.
    pub graph_diameter: f64,
}

pub fn geometry_constants(chi: &Sym2Field, g: &Sym2Field) -> Result<GeometryConstants> {
    check_grids(chi.grid(), g.grid())?;
    g.check_spd()?;
    let (mut top, mut bottom) = (f64::NEG_INFINITY, f64::INFINITY);
    for (&gm, &cm) in g.values().iter().zip(chi.values()) {
        let e = eigen_decompose(gm, cm);
        top = top.max(e.lambda1);
        bottom = bottom.min(e.lambda2);
    }
    let graph_diameter = graph_diameter(g);
    let first = g.at(0);
    let isotropic = g.is_constant() && first.xy == 0.0 && first.xx == first.yy;
    // For a constant multiple of δ on an even grid the extreme pair lies on a
    // grid diagonal, where graph and geodesic distances agree.
    let diameter = if isotropic {
        graph_diameter
    } else {
        GRAPH_DISTORTION * graph_diameter
    };
    Ok(GeometryConstants {
        c_upper: top.max(0.0),
        c_lower: (-bottom).max(0.0),
        diameter,
        graph_diameter,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Visit {
    dist: f64,
    node: usize,
}

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const STEPS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

fn eccentricity(g: &Sym2Field, source: usize) -> f64 {
    let grid = g.grid();
    let h = grid.spacing();
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Visit {
        dist: 0.0,
        node: source,
    });
    while let Some(Visit { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        let (i, j) = grid.node(node);
        for (di, dj) in STEPS {
            let next = grid.index(i as isize + di, j as isize + dj);
            let mid = 0.5 * (g.at(node) + g.at(next));
            let step = [di as f64 * h, dj as f64 * h];
            let nd = d + mid.quad(step).sqrt();
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(Visit {
                    dist: nd,
                    node: next,
                });
            }
        }
    }
    dist.into_iter().fold(0.0, f64::max)
}

/// Max shortest-path distance on the periodic 8-neighbour graph over a fixed
/// 4×4 lattice of source nodes. Edge lengths use the midpoint metric.
pub fn graph_diameter(g: &Sym2Field) -> f64 {
    let grid = g.grid();
    let n = grid.n();
    let sources: Vec<usize> = (0..4)
        .flat_map(|a| (0..4).map(move |b| (a, b)))
        .map(|(a, b)| grid.index((a * n / 4) as isize, (b * n / 4) as isize))
        .collect();
    sources
        .par_iter()
        .map(|&s| eccentricity(g, s))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max)
}

/// Background data shared by the solver and the monitors: metric, `χ` and
/// the Levi-Civita connection of the metric.
#[derive(Debug, Clone)]
pub struct Background {
    pub g: Sym2Field,
    pub chi: Sym2Field,
    pub conn: ConnectionField,
}

impl Background {
    pub fn new(g: Sym2Field, chi: Sym2Field) -> Result<Self> {
        check_grids(g.grid(), chi.grid())?;
        let conn = connection_from_metric(&g)?;
        Ok(Self { g, chi, conn })
    }

    pub fn flat(grid: Grid) -> Self {
        Self {
            g: Sym2Field::identity(grid),
            chi: Sym2Field::identity(grid),
            conn: ConnectionField::flat(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.g.grid()
    }

    pub fn is_flat(&self) -> bool {
        self.g.is_constant() && self.g.at(0) == Sym2::IDENTITY
    }

    /// `g̃ = χ + ∇²u`
    pub fn gtilde(&self, u: &ScalarField) -> Result<Sym2Field> {
        check_grids(u.grid(), self.grid())?;
        let hess = covariant_hessian_unchecked(u, &self.conn);
        self.chi.add(&hess)
    }

    pub fn require_flat(&self, what: &str) -> Result<()> {
        if self.is_flat() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "{what} needs the flat metric g = δ, where grid coordinates are normal"
            )))
        }
    }
}
