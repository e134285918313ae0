//! Finite trigonometric series `Σ a · X(m x) · Y(n y)` with `X, Y ∈ {cos, sin}`.
//!
//! This is the expression vocabulary of configuration files and the source of
//! every manufactured solution: values and derivatives are exact, so samples
//! of a series are independent of any finite-difference stencil.
//!
//! Text form: `0.1 cos(x) + 0.1 cos(y) - 0.3 sin(x) sin(2y) + 0.5`.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField, Sym2, Sym2Field};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wave {
    Cos,
    Sin,
}

/// `cos(k t)` or `sin(k t)`; `cos(0 t)` is the constant factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Harmonic {
    pub wave: Wave,
    pub freq: u32,
}

impl Harmonic {
    pub const ONE: Harmonic = Harmonic {
        wave: Wave::Cos,
        freq: 0,
    };

    pub fn cos(freq: u32) -> Self {
        Self {
            wave: Wave::Cos,
            freq,
        }
    }

    pub fn sin(freq: u32) -> Self {
        Self {
            wave: Wave::Sin,
            freq,
        }
    }

    /// Value and first three derivatives at `t`.
    fn jet(&self, t: f64) -> [f64; 4] {
        let k = self.freq as f64;
        let (s, c) = (k * t).sin_cos();
        match self.wave {
            Wave::Cos => [c, -k * s, -k * k * c, k * k * k * s],
            Wave::Sin => [s, k * c, -k * k * s, -k * k * k * c],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub x: Harmonic,
    pub y: Harmonic,
}

impl TrigTerm {
    pub fn new(amplitude: f64, x: Harmonic, y: Harmonic) -> Self {
        Self { amplitude, x, y }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigSeries {
    pub terms: Vec<TrigTerm>,
}

impl TrigSeries {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        Self { terms }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![TrigTerm::new(c, Harmonic::ONE, Harmonic::ONE)])
    }

    pub fn plus(mut self, amplitude: f64, x: Harmonic, y: Harmonic) -> Self {
        self.terms.push(TrigTerm::new(amplitude, x, y));
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(
            self.terms
                .iter()
                .map(|t| TrigTerm::new(s * t.amplitude, t.x, t.y))
                .collect(),
        )
    }

    /// Mixed partial `∂ₓᵃ ∂ᵧᵇ` for `a, b ≤ 3`.
    pub fn partial(&self, a: usize, b: usize, x: f64, y: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amplitude * t.x.jet(x)[a] * t.y.jet(y)[b])
            .sum()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.partial(0, 0, x, y)
    }

    pub fn grad(&self, x: f64, y: f64) -> [f64; 2] {
        [self.partial(1, 0, x, y), self.partial(0, 1, x, y)]
    }

    pub fn hessian(&self, x: f64, y: f64) -> Sym2 {
        Sym2::new(
            self.partial(2, 0, x, y),
            self.partial(1, 1, x, y),
            self.partial(0, 2, x, y),
        )
    }

    /// Mean over a period square; only the constant terms survive.
    pub fn mean(&self) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.x == Harmonic::ONE && t.y == Harmonic::ONE)
            .map(|t| t.amplitude)
            .sum()
    }

    /// Samples on a grid whose period must be 2π for the series to be periodic.
    pub fn sample(&self, grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x, y| self.eval(x, y))
    }

    pub fn sample_hessian(&self, grid: Grid) -> Sym2Field {
        Sym2Field::from_fn(grid, |x, y| self.hessian(x, y))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).series()
    }
}

impl fmt::Display for TrigSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (idx, t) in self.terms.iter().enumerate() {
            let a = t.amplitude;
            if idx == 0 {
                write!(f, "{a}")?;
            } else if a < 0.0 {
                write!(f, " - {}", -a)?;
            } else {
                write!(f, " + {a}")?;
            }
            for (h, var) in [(t.x, 'x'), (t.y, 'y')] {
                if h == Harmonic::ONE {
                    continue;
                }
                let name = match h.wave {
                    Wave::Cos => "cos",
                    Wave::Sin => "sin",
                };
                if h.freq == 1 {
                    write!(f, " {name}({var})")?;
                } else {
                    write!(f, " {name}({}{var})", h.freq)?;
                }
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn err(&self, msg: &str) -> Error {
        Error::Parse(format!("{msg} at offset {} in `{}`", self.pos, self.src))
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn number(&mut self) -> Option<f64> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let mut end = 0;
        let bytes = rest.as_bytes();
        while end < bytes.len() {
            let c = bytes[end] as char;
            let exp_sign =
                (c == '+' || c == '-') && end > 0 && matches!(bytes[end - 1] as char, 'e' | 'E');
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                end += 1;
            } else {
                break;
            }
        }
        if end == 0 {
            return None;
        }
        let v = rest[..end].parse().ok()?;
        self.pos += end;
        Some(v)
    }

    fn series(&mut self) -> Result<TrigSeries> {
        let mut terms = Vec::new();
        let mut sign = if self.eat('-') {
            -1.0
        } else {
            self.eat('+');
            1.0
        };
        loop {
            let mut t = self.term()?;
            t.amplitude *= sign;
            terms.push(t);
            self.skip_ws();
            if self.peek().is_none() {
                break;
            }
            sign = if self.eat('+') {
                1.0
            } else if self.eat('-') {
                -1.0
            } else {
                return Err(self.err("expected `+` or `-`"));
            };
        }
        Ok(TrigSeries::new(terms))
    }

    fn term(&mut self) -> Result<TrigTerm> {
        let amplitude = self.number();
        let mut x = None;
        let mut y = None;
        loop {
            if amplitude.is_some() || x.is_some() || y.is_some() {
                self.eat('*');
            }
            self.skip_ws();
            let rest = &self.src[self.pos..];
            let wave = if rest.starts_with("cos") {
                Wave::Cos
            } else if rest.starts_with("sin") {
                Wave::Sin
            } else {
                break;
            };
            self.pos += 3;
            if !self.eat('(') {
                return Err(self.err("expected `(`"));
            }
            let freq = match self.number() {
                Some(k) if k >= 0.0 && k.fract() == 0.0 => k as u32,
                Some(_) => return Err(self.err("frequency must be a non-negative integer")),
                None => 1,
            };
            let slot = if self.eat('x') {
                &mut x
            } else if self.eat('y') {
                &mut y
            } else {
                return Err(self.err("expected `x` or `y`"));
            };
            if slot.is_some() {
                return Err(self.err("at most one factor per variable in a term"));
            }
            *slot = Some(Harmonic { wave, freq });
            if !self.eat(')') {
                return Err(self.err("expected `)`"));
            }
        }
        if amplitude.is_none() && x.is_none() && y.is_none() {
            return Err(self.err("expected a number or a cos/sin factor"));
        }
        Ok(TrigTerm::new(
            amplitude.unwrap_or(1.0),
            x.unwrap_or(Harmonic::ONE),
            y.unwrap_or(Harmonic::ONE),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sums_and_products() {
        let s = TrigSeries::parse("0.3 sin(x) sin(y) - 0.1*cos(2x) + 0.5").unwrap();
        assert_eq!(s.terms.len(), 3);
        assert_eq!(
            s.terms[0],
            TrigTerm::new(0.3, Harmonic::sin(1), Harmonic::sin(1))
        );
        assert_eq!(
            s.terms[1],
            TrigTerm::new(-0.1, Harmonic::cos(2), Harmonic::ONE)
        );
        assert_eq!(s.mean(), 0.5);
        let v = s.eval(1.0, 2.0);
        let want = 0.3 * 1f64.sin() * 2f64.sin() - 0.1 * 2f64.cos() + 0.5;
        assert!((v - want).abs() < 1e-15);
        assert_eq!(TrigSeries::parse("-cos(y)").unwrap().eval(0.0, 0.0), -1.0);
        assert_eq!(
            TrigSeries::parse("1e-1 cos(x)").unwrap().terms[0].amplitude,
            0.1
        );
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "",
            "cos(z)",
            "0.1 cos(x) cos(2x)",
            "tan(x)",
            "cos(1.5x)",
            "1 +",
            "cos(x",
        ] {
            assert!(TrigSeries::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn display_round_trips() {
        let s = TrigSeries::parse("0.1 cos(x) - 0.25 sin(3x) cos(2y) + 2").unwrap();
        assert_eq!(TrigSeries::parse(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn derivatives_match_differences() {
        let s = TrigSeries::parse("0.4 cos(2x) sin(y) + 0.2 sin(x) - 0.1 cos(3y)").unwrap();
        let (x, y, e) = (0.7, -1.3, 1e-5);
        let fd_x = (s.eval(x + e, y) - s.eval(x - e, y)) / (2.0 * e);
        assert!((fd_x - s.grad(x, y)[0]).abs() < 1e-9);
        let fd_xy = (s.grad(x, y + e)[0] - s.grad(x, y - e)[0]) / (2.0 * e);
        assert!((fd_xy - s.hessian(x, y).xy).abs() < 1e-9);
        let fd_xxy = (s.hessian(x, y + e).xx - s.hessian(x, y - e).xx) / (2.0 * e);
        assert!((fd_xxy - s.partial(2, 1, x, y)).abs() < 1e-8);
    }
}
