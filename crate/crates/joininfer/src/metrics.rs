//! Cost predictors: the truth-table proxy rho, per-bag AGM bounds from the
//! fractional edge cover LP, and the ratios comparing join-based cost to
//! truth-table cost.
//!
//! Everything is computed in 64-bit floating point; these are predictors,
//! and the interesting instances do not fit in integers.

use crate::decomposition::{compute_widths, Ghd};
use crate::error::Result;
use crate::lp::fractional_cover;
use crate::model::{Pgm, VarId};

/// Sum over bags of the product of member domain sizes.
pub fn compute_rho(ghd: &Ghd, pgm: &Pgm) -> f64 {
    ghd.chi
        .iter()
        .map(|chi| chi.iter().map(|&v| pgm.cardinality(v) as f64).product::<f64>())
        .sum()
}

/// Log2 of the AGM bound of `bag`: the optimal LP objective with edge
/// weights `log2 |phi_S|`. Empty supports are clamped to size 1.
pub fn agm_log2_bag(bag: &[VarId], edges: &[(Vec<VarId>, usize)]) -> Result<f64> {
    let weighted: Vec<(Vec<VarId>, f64)> = edges
        .iter()
        .map(|(scope, size)| (scope.clone(), ((*size).max(1) as f64).log2()))
        .collect();
    Ok(fractional_cover(bag, &weighted)?.objective)
}

/// AGM bound of one bag: product of factor sizes raised to the optimal
/// fractional cover weights, i.e. `2^objective`.
pub fn agm_bound_bag(bag: &[VarId], edges: &[(Vec<VarId>, usize)]) -> Result<f64> {
    Ok(agm_log2_bag(bag, edges)?.exp2())
}

fn input_edges(pgm: &Pgm) -> Vec<(Vec<VarId>, usize)> {
    pgm.factors.iter().map(|f| (f.scope().vars().to_vec(), f.len())).collect()
}

/// Per-bag AGM log2 objectives, aligned with the GHD nodes.
pub fn per_bag_agm_log2(ghd: &Ghd, pgm: &Pgm) -> Result<Vec<f64>> {
    let edges = input_edges(pgm);
    ghd.chi.iter().map(|chi| agm_log2_bag(chi, &edges)).collect()
}

/// R_J: the summed AGM bounds over all bags divided by rho.
pub fn compute_rj(ghd: &Ghd, pgm: &Pgm) -> Result<f64> {
    let numerator: f64 = per_bag_agm_log2(ghd, pgm)?.iter().map(|o| o.exp2()).sum();
    Ok(numerator / compute_rho(ghd, pgm))
}

/// R_D: `N^fhtw / D^tw` with N the largest factor support, D the largest
/// domain, and tw the modified (max bag size) convention.
pub fn compute_rd(ghd: &Ghd, pgm: &Pgm) -> Result<f64> {
    let (tw, fhtw) = compute_widths(ghd, pgm)?;
    let n = pgm.factors.iter().map(|f| f.len()).max().unwrap_or(1).max(1) as f64;
    let d = pgm.variables.iter().map(|v| v.cardinality).max().unwrap_or(1) as f64;
    Ok(n.powf(fhtw) / d.powi(tw as i32))
}
