//! Seeded random sweeps of the eigenvalue-space identities and inequalities.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kernel::{concavity_identity, derivatives, k_concavity_terms};
use crate::oracle::fd_derivative_oracle;

pub const LAMBDA_RANGE: (f64, f64) = (0.05, 20.0);

/// Result of one sweep: `worst` is the largest violation measure found,
/// `pass` compares it against `tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub name: String,
    pub samples: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl SweepResult {
    fn new(name: impl Into<String>, samples: usize, worst: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            samples,
            worst,
            tolerance,
            pass: worst <= tolerance,
        }
    }
}

pub const SWEEP_HEADER: &str = "name,samples,max_violation,tolerance,pass";

pub fn write_sweeps<W: Write>(mut out: W, sweeps: &[SweepResult]) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for s in sweeps {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.name, s.samples, s.worst, s.tolerance, s.pass
        )?;
    }
    Ok(())
}

fn draw_lambda(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.random_range(LAMBDA_RANGE.0..LAMBDA_RANGE.1))
        .collect()
}

fn draw_xi(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Concavity identity `|lhs − rhs| / (1 + |lhs|)` together with the
/// ordering and trace bounds of the first derivatives, over `n ∈ {2, …, 5}`.
pub fn concavity_sweep(seed: u64, samples: usize) -> Result<[SweepResult; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut identity: f64 = 0.0;
    let mut bounds: f64 = 0.0;
    for s in 0..samples {
        let n = 2 + s % 4;
        let mut lambda = draw_lambda(&mut rng, n);
        lambda.sort_by(|a, b| b.total_cmp(a));
        let xi = draw_xi(&mut rng, n);
        let (lhs, rhs) = concavity_identity(&lambda, &xi)?;
        identity = identity.max((lhs - rhs).abs() / (1.0 + lhs.abs()));

        let d = derivatives(&lambda)?;
        let sum = d.sum_fi();
        bounds = bounds.max(1.0 / n as f64 - sum).max(sum - 1.0);
        for w in d.fi.windows(2) {
            bounds = bounds.max(w[0] - w[1]);
        }
    }
    Ok([
        SweepResult::new("concavity_identity", samples, identity, 1e-10),
        SweepResult::new("first_derivative_bounds", samples, bounds.max(0.0), 1e-12),
    ])
}

/// Closed-form derivatives against central differences: relative error of
/// `F^{ii}` and error of `F^{ii,jj}` relative to the largest entry.
pub fn derivative_sweep(seed: u64, samples: usize) -> Result<[SweepResult; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    for s in 0..samples {
        let n = 2 + s % 4;
        let lambda = draw_lambda(&mut rng, n);
        let d = derivatives(&lambda)?;
        let (fi, fij) = fd_derivative_oracle(&lambda)?;
        for i in 0..n {
            first = first.max((fi[i] - d.fi[i]).abs() / d.fi[i]);
        }
        let scale = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| d.second(i, j).abs())
            .fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                second = second.max((fij[i][j] - d.second(i, j)).abs() / scale);
            }
        }
    }
    Ok([
        SweepResult::new("first_derivatives_fd", samples, first, 1e-6),
        SweepResult::new("second_derivatives_fd", samples, second, 1e-4),
    ])
}

/// Weak form of the `σₙ/σ_k` concavity inequality for one `(n, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KSweep {
    pub n: usize,
    pub k: usize,
    pub result: SweepResult,
    /// Smallest per-sample admissible `ε₀` at `δ₀ = 0`.
    pub eps0_max: f64,
}

pub fn k_concavity_sweep(seed: u64, samples: usize) -> Result<Vec<KSweep>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for n in 2..=4 {
        for k in 1..n {
            let mut worst: f64 = 0.0;
            let mut eps0_max = f64::INFINITY;
            for _ in 0..samples {
                let mut lambda = draw_lambda(&mut rng, n);
                lambda.sort_by(|a, b| b.total_cmp(a));
                let mut xi = vec![vec![0.0; n]; n];
                for i in 0..n {
                    for j in i..n {
                        let v = rng.random_range(-1.0..1.0);
                        xi[i][j] = v;
                        xi[j][i] = v;
                    }
                }
                let terms = k_concavity_terms(&lambda, &xi, k)?;
                worst = worst.max(-terms.gap(0.0, 0.0));
                eps0_max = eps0_max.min(terms.max_eps0());
            }
            out.push(KSweep {
                n,
                k,
                result: SweepResult::new(format!("k_concavity_n{n}_k{k}"), samples, worst, 1e-8),
                eps0_max,
            });
        }
    }
    Ok(out)
}

/// All sweeps with the sample counts used by the identity command.
pub fn run_all(seed: u64, samples: usize) -> Result<(Vec<SweepResult>, Vec<KSweep>)> {
    let mut all = Vec::new();
    all.extend(concavity_sweep(seed, samples)?);
    let small = samples.div_ceil(10).max(1);
    all.extend(derivative_sweep(seed.wrapping_add(1), small)?);
    let k = k_concavity_sweep(seed.wrapping_add(2), small)?;
    all.extend(k.iter().map(|s| s.result.clone()));
    Ok((all, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweeps_pass_and_are_deterministic() {
        let a = concavity_sweep(3, 400).unwrap();
        assert!(a.iter().all(|s| s.pass), "{a:?}");
        assert_eq!(a, concavity_sweep(3, 400).unwrap());
        let d = derivative_sweep(4, 100).unwrap();
        assert!(d.iter().all(|s| s.pass), "{d:?}");
        let k = k_concavity_sweep(5, 100).unwrap();
        assert_eq!(k.len(), 6);
        assert!(k.iter().all(|s| s.result.pass), "{k:?}");
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_sweeps(&mut buf, &[SweepResult::new("x", 3, 0.5, 1.0)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{SWEEP_HEADER}\nx,3,0.5,1,true\n")
        );
    }
}
