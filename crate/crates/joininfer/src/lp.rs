//! Fractional edge cover LP: minimize sum of weighted edge variables subject
//! to covering every bag variable at least once.
//!
//! Instances are tiny (columns = hyperedges touching one bag, rows = bag
//! variables), so a dense two-phase primal simplex with Bland's rule is
//! enough and keeps the solver dependency-free and deterministic.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::VarId;

/// Optimal solution of the covering LP for one bag.
#[derive(Debug, Clone)]
pub struct FractionalCover {
    /// Weight per input edge, aligned with the `edges` argument.
    pub weights: Vec<f64>,
    /// Optimal objective value: sum of `x_S * w_S`.
    pub objective: f64,
}

/// Solve `min Σ w_S x_S  s.t.  Σ_{S ∋ v} x_S ≥ 1 for every v in bag, x ≥ 0`.
/// Edge weights are typically `log2 |φ_S|` (AGM objective) or all ones
/// (pure fractional cover number).
pub fn fractional_cover(
    bag_vars: &[VarId],
    edges: &[(Vec<VarId>, f64)],
) -> Result<FractionalCover> {
    if bag_vars.is_empty() {
        return Ok(FractionalCover { weights: vec![0.0; edges.len()], objective: 0.0 });
    }
    for &v in bag_vars {
        if !edges.iter().any(|(e, _)| e.contains(&v)) {
            return Err(Error::UncoverableVariable(v));
        }
    }
    let rows = bag_vars.len();
    let cols = edges.len();
    let var_row: BTreeMap<VarId, usize> =
        bag_vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut a = vec![vec![0.0f64; cols]; rows];
    for (j, (edge, _)) in edges.iter().enumerate() {
        for v in edge {
            if let Some(&i) = var_row.get(v) {
                a[i][j] = 1.0;
            }
        }
    }
    let costs: Vec<f64> = edges.iter().map(|(_, w)| *w).collect();
    let x = simplex_cover(&a, &costs)?;
    let objective = x.iter().zip(&costs).map(|(xi, ci)| xi * ci).sum();
    Ok(FractionalCover { weights: x, objective })
}

/// Two-phase dense simplex specialized to `Ax ≥ 1, x ≥ 0` with `A` a 0/1
/// matrix. Columns are: structural vars, surplus vars, artificial vars.
/// Bland's rule (lowest eligible index) prevents cycling and fixes the
/// returned vertex deterministically.
fn simplex_cover(a: &[Vec<f64>], costs: &[f64]) -> Result<Vec<f64>> {
    const EPS: f64 = 1e-9;
    let rows = a.len();
    let n = costs.len();
    let surplus0 = n;
    let art0 = n + rows;
    let total = n + 2 * rows;

    // Tableau rows: [structural | surplus | artificial | rhs].
    // Initial basis: the artificial variables; Ax - s + t = 1.
    let mut tab: Vec<Vec<f64>> = (0..rows)
        .map(|i| {
            let mut row = vec![0.0; total + 1];
            row[..n].copy_from_slice(&a[i]);
            row[surplus0 + i] = -1.0;
            row[art0 + i] = 1.0;
            row[total] = 1.0;
            row
        })
        .collect();
    let mut basis: Vec<usize> = (0..rows).map(|i| art0 + i).collect();

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![0.0; total + 1];
    for row in &tab {
        for (z, &v) in phase1.iter_mut().zip(row.iter()) {
            *z += v;
        }
    }
    for z in phase1[art0..total].iter_mut() {
        *z = 0.0;
    }
    run_simplex(&mut tab, &mut basis, &mut phase1, Some(art0), EPS);
    if phase1[total] > EPS {
        return Err(Error::LpInfeasible);
    }
    // Drive any artificial still in the basis out (degenerate rows).
    for i in 0..rows {
        if basis[i] >= art0 {
            if let Some(j) = (0..art0).find(|&j| tab[i][j].abs() > EPS) {
                pivot(&mut tab, &mut basis, i, j);
            }
        }
    }

    // Phase 2: reduced costs for the real objective over the current basis.
    let mut obj = vec![0.0; total + 1];
    for (o, &c) in obj.iter_mut().zip(costs) {
        *o = -c;
    }
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            let coef = obj[b];
            if coef.abs() > 0.0 {
                for j in 0..=total {
                    obj[j] -= coef * tab[i][j];
                }
            }
        }
    }
    run_simplex(&mut tab, &mut basis, &mut obj, Some(art0), EPS);

    let mut x = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = tab[i][total];
        }
    }
    Ok(x)
}

/// Maximize the (negated-cost) objective row in place; `forbid` marks the
/// first column index that may never re-enter the basis (artificials in
/// phase 2).
fn run_simplex(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    forbid: Option<usize>,
    eps: f64,
) {
    let total = obj.len() - 1;
    loop {
        // Bland: entering column = lowest index with positive reduced cost.
        let limit = forbid.unwrap_or(total);
        let Some(enter) = (0..limit).find(|&j| obj[j] > eps) else {
            return;
        };
        // Ratio test, ties again by lowest basis index.
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for (i, row) in tab.iter().enumerate() {
            if row[enter] > eps {
                let ratio = row[total] / row[enter];
                if ratio < best - eps || (ratio < best + eps && leave.is_some_and(|l| basis[i] < basis[l]))
                {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            // Unbounded; cannot happen for a covering LP with x >= 0 and
            // nonnegative costs.
            return;
        };
        pivot_with_obj(tab, basis, obj, leave, enter);
    }
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], leave: usize, enter: usize) {
    let p = tab[leave][enter];
    for cell in tab[leave].iter_mut() {
        *cell /= p;
    }
    for i in 0..tab.len() {
        if i != leave {
            let f = tab[i][enter];
            if f != 0.0 {
                let pivot_row = std::mem::take(&mut tab[leave]);
                for (cell, &p) in tab[i].iter_mut().zip(&pivot_row) {
                    *cell -= f * p;
                }
                tab[leave] = pivot_row;
            }
        }
    }
    basis[leave] = enter;
}

fn pivot_with_obj(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    obj: &mut [f64],
    leave: usize,
    enter: usize,
) {
    pivot(tab, basis, leave, enter);
    let total = obj.len() - 1;
    let f = obj[enter];
    if f != 0.0 {
        for j in 0..=total {
            obj[j] -= f * tab[leave][j];
        }
    }
}
