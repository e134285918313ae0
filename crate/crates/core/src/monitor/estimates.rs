use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    covariant_hessian_unchecked, Background, ConnectionField, GeometryConstants,
};
use crate::grid::{check_grids, Differences, ScalarField, Sym2Field, View};
use crate::kernel::admissibility_margin_at;

use super::EstimateReport;

/// Constant of the commutation mismatch bound `K·h²`. The conformal
/// manufactured family (amplitudes 0.1) gives mismatch/h² ≈ 0.0086 for
/// N = 32…128; the constant carries a safety factor of about 3.5.
pub const K_STENCIL: f64 = 0.03;

fn require_admissible(u: &ScalarField, bg: &Background) -> Result<()> {
    check_grids(u.grid(), bg.grid())?;
    let gt = bg.gtilde(u)?;
    let (node, margin) = admissibility_margin_at(&bg.g, &gt)?;
    if margin > 0.0 {
        Ok(())
    } else {
        Err(Error::Admissibility { node, margin })
    }
}

/// `osc(u) ≤ C(χ, g) · diam² / 2`
pub fn check_c0(
    u: &ScalarField,
    bg: &Background,
    consts: &GeometryConstants,
) -> Result<EstimateReport> {
    require_admissible(u, bg)?;
    let (p, _) = u.argmax();
    Ok(EstimateReport::new(
        "c0_oscillation",
        consts.c_upper * consts.diameter.powi(2) / 2.0,
        u.oscillation(),
        Some(u.grid().node(p)),
    ))
}

/// `|∇u|²_g ≤ (C(χ, g) · diam)²`
pub fn check_c1(
    u: &ScalarField,
    bg: &Background,
    consts: &GeometryConstants,
) -> Result<EstimateReport> {
    require_admissible(u, bg)?;
    let mut best = (0, 0.0);
    for p in 0..u.grid().len() {
        let ginv = bg.g.at(p).inverse().expect("metric is SPD");
        let v = ginv.quad(u.gradient(p));
        if v > best.1 {
            best = (p, v);
        }
    }
    Ok(EstimateReport::new(
        "c1_gradient_sq",
        (consts.c_upper * consts.diameter).powi(2),
        best.1,
        Some(u.grid().node(best.0)),
    ))
}

/// Third covariant derivatives built from composed centered differences,
/// `T[i][j][k] = ∇_k ∇_j ∇_i u`, at every node.
fn third_derivatives(
    u: &ScalarField,
    conn: &ConnectionField,
) -> (Vec<[f64; 2]>, Vec<[[[f64; 2]; 2]; 2]>) {
    let grid = *u.grid();
    let omega: Vec<[f64; 2]> = (0..grid.len()).map(|p| u.gradient(p)).collect();
    let w: [Vec<f64>; 2] = [
        omega.iter().map(|o| o[0]).collect(),
        omega.iter().map(|o| o[1]).collect(),
    ];
    let diff = |data: &[f64], p: usize, k: usize| {
        let v = View { grid: &grid, data };
        if k == 0 {
            v.dx(p)
        } else {
            v.dy(p)
        }
    };
    // H[i][j] = D_j ω_i − Γ^m_{ij} ω_m
    let hess: Vec<[[f64; 2]; 2]> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let c = conn.gamma(p);
            let mut h = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    h[i][j] =
                        diff(&w[i], p, j) - c[0][i][j] * omega[p][0] - c[1][i][j] * omega[p][1];
                }
            }
            h
        })
        .collect();
    let hc: Vec<Vec<f64>> = (0..4)
        .map(|ij| hess.iter().map(|h| h[ij / 2][ij % 2]).collect())
        .collect();
    let third = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            let c = conn.gamma(p);
            let h = &hess[p];
            let mut t = [[[0.0; 2]; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let mut v = diff(&hc[2 * i + j], p, k);
                        for m in 0..2 {
                            v -= c[m][k][i] * h[m][j] + c[m][k][j] * h[i][m];
                        }
                        t[i][j][k] = v;
                    }
                }
            }
            t
        })
        .collect();
    (omega, third)
}

/// Largest node-wise mismatch of `u_{ijk} − u_{ikj} = −K (g_{ij} u_k − g_{ik} u_j)`
/// over all index triples, and where it occurs.
pub fn commutation_mismatch(
    u: &ScalarField,
    g: &Sym2Field,
    conn: &ConnectionField,
) -> Result<(usize, f64)> {
    check_grids(u.grid(), g.grid())?;
    check_grids(u.grid(), conn.grid())?;
    let (omega, third) = third_derivatives(u, conn);
    let mut best = (0, 0.0);
    for p in 0..u.grid().len() {
        let k_gauss = conn.gauss_curvature(g, p);
        let m = g.at(p);
        let t = &third[p];
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    let curv =
                        -k_gauss * (m.entry(i, j) * omega[p][k] - m.entry(i, k) * omega[p][j]);
                    worst = worst.max((t[i][j][k] - t[i][k][j] - curv).abs());
                }
            }
        }
        if worst > best.1 {
            best = (p, worst);
        }
    }
    Ok(best)
}

pub fn check_commutation(
    u: &ScalarField,
    g: &Sym2Field,
    conn: &ConnectionField,
) -> Result<EstimateReport> {
    let (p, observed) = commutation_mismatch(u, g, conn)?;
    let h = u.grid().spacing();
    Ok(EstimateReport::new(
        "commutation",
        K_STENCIL * h * h,
        observed,
        Some(u.grid().node(p)),
    ))
}

/// Hessian used by the monitors, identical to the solver's.
pub(crate) fn gtilde(u: &ScalarField, bg: &Background) -> Sym2Field {
    let h = covariant_hessian_unchecked(u, &bg.conn);
    bg.chi.add(&h).expect("grids checked")
}
