use std::fmt;
use std::io::Write;

use crate::error::{Node, Result};

pub const CSV_HEADER: &str = "name,bound,observed,margin,pass,node_i,node_j";

/// Outcome of checking `observed ≤ bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub name: String,
    pub bound: f64,
    pub observed: f64,
    pub margin: f64,
    pub pass: bool,
    pub location: Option<Node>,
}

impl EstimateReport {
    pub fn new(name: impl Into<String>, bound: f64, observed: f64, location: Option<Node>) -> Self {
        let margin = bound - observed;
        Self {
            name: name.into(),
            bound,
            observed,
            margin,
            pass: margin >= -1e-9 * (1.0 + bound.abs()),
            location,
        }
    }

    pub fn csv_row(&self) -> String {
        let (i, j) = match self.location {
            Some((i, j)) => (i.to_string(), j.to_string()),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{}",
            self.name, self.bound, self.observed, self.margin, self.pass, i, j
        )
    }
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {}  observed {:.6e}  bound {:.6e}  margin {:.3e}",
            self.name,
            if self.pass { "PASS" } else { "FAIL" },
            self.observed,
            self.bound,
            self.margin
        )?;
        if let Some((i, j)) = self.location {
            write!(f, "  at ({i}, {j})")?;
        }
        Ok(())
    }
}

pub fn write_reports<W: Write>(mut out: W, reports: &[EstimateReport]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
