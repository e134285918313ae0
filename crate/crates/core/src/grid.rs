//! Periodic 2-D grids and the fields sampled on them.
//!
//! Node `(i, j)` sits at `(i h, j h)` on the torus `[0, L)²` and indices wrap
//! modulo `n`. Storage is row-major with the x index outermost, so the flat
//! index of `(i, j)` is `i * n + j`. Every reduction in the crate walks that
//! order.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Node, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    period: f64,
    spacing: f64,
}

impl Grid {
    pub fn new(n: usize, period: f64) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::Argument(format!(
                "grid needs an even node count >= 8 per axis, got {n}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Argument(format!(
                "period must be positive, got {period}"
            )));
        }
        Ok(Self {
            n,
            period,
            spacing: period / n as f64,
        })
    }

    /// Grid on the standard torus of period 2π.
    pub fn standard(n: usize) -> Result<Self> {
        Self::new(n, TAU)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat index of the node `(i, j)` after wrapping both indices.
    pub fn index(&self, i: isize, j: isize) -> usize {
        let n = self.n as isize;
        (i.rem_euclid(n) * n + j.rem_euclid(n)) as usize
    }

    pub fn node(&self, p: usize) -> Node {
        (p / self.n, p % self.n)
    }

    pub fn coords(&self, p: usize) -> (f64, f64) {
        let (i, j) = self.node(p);
        (i as f64 * self.spacing, j as f64 * self.spacing)
    }

    pub fn neighbors(&self, p: usize) -> Neighbors {
        let (i, j) = self.node(p);
        let (i, j) = (i as isize, j as isize);
        Neighbors {
            c: p,
            e: self.index(i + 1, j),
            w: self.index(i - 1, j),
            n: self.index(i, j + 1),
            s: self.index(i, j - 1),
            ne: self.index(i + 1, j + 1),
            nw: self.index(i - 1, j + 1),
            se: self.index(i + 1, j - 1),
            sw: self.index(i - 1, j - 1),
        }
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && self.period == other.period
    }
}

/// Flat indices of the 3×3 block around a node. `e` is `+x`, `n` is `+y`.
#[derive(Debug, Clone, Copy)]
pub struct Neighbors {
    pub c: usize,
    pub e: usize,
    pub w: usize,
    pub n: usize,
    pub s: usize,
    pub ne: usize,
    pub nw: usize,
    pub se: usize,
    pub sw: usize,
}

pub(crate) fn check_grids(a: &Grid, b: &Grid) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "fields live on different grids (n = {}, L = {}) and (n = {}, L = {})",
            a.n, a.period, b.n, b.period
        )))
    }
}

/// Centered second-order difference operators on a periodic grid.
///
/// `dx`/`dy` use the 2h stencil, `dxx`/`dyy` the compact three-point stencil
/// and `dxy` the four-point cross, which equals `dx ∘ dy`.
pub trait Differences {
    fn grid(&self) -> &Grid;
    fn at(&self, p: usize) -> f64;

    fn dx(&self, p: usize) -> f64 {
        let nb = self.grid().neighbors(p);
        (self.at(nb.e) - self.at(nb.w)) / (2.0 * self.grid().spacing())
    }

    fn dy(&self, p: usize) -> f64 {
        let nb = self.grid().neighbors(p);
        (self.at(nb.n) - self.at(nb.s)) / (2.0 * self.grid().spacing())
    }

    fn dxx(&self, p: usize) -> f64 {
        let nb = self.grid().neighbors(p);
        let h = self.grid().spacing();
        (self.at(nb.e) - 2.0 * self.at(nb.c) + self.at(nb.w)) / (h * h)
    }

    fn dyy(&self, p: usize) -> f64 {
        let nb = self.grid().neighbors(p);
        let h = self.grid().spacing();
        (self.at(nb.n) - 2.0 * self.at(nb.c) + self.at(nb.s)) / (h * h)
    }

    fn dxy(&self, p: usize) -> f64 {
        let nb = self.grid().neighbors(p);
        let h = self.grid().spacing();
        (self.at(nb.ne) - self.at(nb.se) - self.at(nb.nw) + self.at(nb.sw)) / (4.0 * h * h)
    }

    fn gradient(&self, p: usize) -> [f64; 2] {
        [self.dx(p), self.dy(p)]
    }
}

/// Borrowed node values on a grid, for differencing raw slices.
pub(crate) struct View<'a> {
    pub grid: &'a Grid,
    pub data: &'a [f64],
}

impl Differences for View<'_> {
    fn grid(&self) -> &Grid {
        self.grid
    }

    fn at(&self, p: usize) -> f64 {
        self.data[p]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Geometry {
                node: grid.node(p),
                msg: "non-finite sample".into(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|p| {
                let (x, y) = grid.coords(p);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n() + j]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_grids(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Largest value and its flat index; the lowest index wins ties.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, self.values[0]);
        for (p, &v) in self.values.iter().enumerate().skip(1) {
            if v > best.1 {
                best = (p, v);
            }
        }
        best
    }

    pub fn argmin(&self) -> (usize, f64) {
        let mut best = (0, self.values[0]);
        for (p, &v) in self.values.iter().enumerate().skip(1) {
            if v < best.1 {
                best = (p, v);
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.argmax().1
    }

    pub fn min(&self) -> f64 {
        self.argmin().1
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &ScalarField) -> Result<f64> {
        check_grids(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Writes the plain-text field format: a header `N L` followed by the
    /// `N²` samples in row-major order, one per line.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut buf = String::with_capacity(self.values.len() * 24);
        writeln!(buf, "{} {}", self.grid.n(), self.grid.period()).ok();
        for v in &self.values {
            writeln!(buf, "{v}").ok();
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field file".into()))??;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?;
        let period: f64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad header `{header}`")))?;
        let grid = Grid::new(n, period)?;
        let mut values = Vec::with_capacity(grid.len());
        for (k, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: `{line}` is not a number", k + 2)))?;
            values.push(v);
        }
        Self::new(grid, values)
    }
}

impl Differences for ScalarField {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn at(&self, p: usize) -> f64 {
        self.values[p]
    }
}

/// Symmetric 2×2 matrix stored as its three independent entries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, b)
    }

    pub fn scaled_identity(s: f64) -> Self {
        Self::new(s, 0.0, s)
    }

    /// `v vᵀ`
    pub fn outer(v: [f64; 2]) -> Self {
        Self::new(v[0] * v[0], v[0] * v[1], v[1] * v[1])
    }

    pub fn entry(&self, a: usize, b: usize) -> f64 {
        match (a, b) {
            (0, 0) => self.xx,
            (1, 1) => self.yy,
            _ => self.xy,
        }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(Self::new(self.yy / d, -self.xy / d, self.xx / d))
    }

    pub fn is_spd(&self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    /// `aᵀ M b`
    pub fn bilinear(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let mb = self.apply(b);
        a[0] * mb[0] + a[1] * mb[1]
    }

    pub fn quad(&self, v: [f64; 2]) -> f64 {
        self.bilinear(v, v)
    }

    /// Frobenius pairing `Σ A_rs B_rs`.
    pub fn contract(&self, other: &Sym2) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

impl Mul<Sym2> for f64 {
    type Output = Sym2;
    fn mul(self, m: Sym2) -> Sym2 {
        Sym2::new(self * m.xx, self * m.xy, self * m.yy)
    }
}

/// Symmetric (2,0) tensor sampled at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct Sym2Field {
    grid: Grid,
    values: Vec<Sym2>,
}

impl Sym2Field {
    pub fn new(grid: Grid, values: Vec<Sym2>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "expected {} tensors, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Geometry {
                node: grid.node(p),
                msg: "non-finite tensor entry".into(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: Sym2) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn identity(grid: Grid) -> Self {
        Self::constant(grid, Sym2::IDENTITY)
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> Sym2) -> Self {
        let values = (0..grid.len())
            .map(|p| {
                let (x, y) = grid.coords(p);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    /// Conformally flat metric `e^{2ψ} δ`.
    pub fn conformal(psi: &ScalarField) -> Self {
        Self {
            grid: *psi.grid(),
            values: psi
                .values()
                .iter()
                .map(|&s| Sym2::scaled_identity((2.0 * s).exp()))
                .collect(),
        }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<Sym2>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Sym2] {
        &self.values
    }

    pub fn at(&self, p: usize) -> Sym2 {
        self.values[p]
    }

    pub fn zip_with(&self, other: &Sym2Field, f: impl Fn(Sym2, Sym2) -> Sym2) -> Result<Self> {
        check_grids(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Sym2Field) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| s * v).collect(),
        }
    }

    pub fn component(&self, a: usize, b: usize) -> ScalarField {
        ScalarField::from_vec_unchecked(
            self.grid,
            self.values.iter().map(|m| m.entry(a, b)).collect(),
        )
    }

    /// Fails with the first node that is not positive definite.
    pub fn check_spd(&self) -> Result<()> {
        match self.values.iter().position(|m| !m.is_spd()) {
            None => Ok(()),
            Some(p) => Err(Error::Geometry {
                node: self.grid.node(p),
                msg: format!("metric not positive definite: {:?}", self.values[p]),
            }),
        }
    }

    /// True when every node carries the same tensor.
    pub fn is_constant(&self) -> bool {
        let first = self.values[0];
        self.values.iter().all(|m| *m == first)
    }
}
