//! Brute-force exact inference by full enumeration. This is the ground
//! truth the join-based engine is validated against; it is deliberately
//! simple and guarded against large models.

use crate::error::{Error, Result};
use crate::model::Pgm;
use crate::uai::Evidence;

const MAX_JOINT: f64 = 1e7;

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    /// Normalized distribution per variable, indexed by variable id.
    pub var_marginals: Vec<Vec<f64>>,
    /// Normalized dense table per factor, row-major with the last scope
    /// variable fastest.
    pub factor_marginals: Vec<Vec<f64>>,
    /// Partition function, including the model constant.
    pub z: f64,
}

/// Enumerate every joint assignment consistent with the evidence,
/// accumulate the factor product, and normalize.
pub fn brute_force_marginals(pgm: &Pgm, evidence: &Evidence) -> Result<BruteForceResult> {
    let joint = pgm.joint_size();
    if joint > MAX_JOINT {
        return Err(Error::TooLarge(joint));
    }
    for (&var, &value) in &evidence.assignments {
        if var >= pgm.num_vars() || value >= pgm.cardinality(var) {
            return Err(Error::ValueOutOfRange { var, value, card: 0 });
        }
    }
    let n = pgm.num_vars();

    // Dense lookup per factor, plus per-position strides into it.
    let mut dense: Vec<Vec<f64>> = Vec::with_capacity(pgm.factors.len());
    let mut strides: Vec<Vec<(usize, usize)>> = Vec::with_capacity(pgm.factors.len());
    for f in &pgm.factors {
        let size: usize = f.cards().iter().map(|&c| c as usize).product();
        let mut table = vec![0.0; size];
        for (tuple, prob) in f.rows() {
            let mut idx = 0usize;
            for (pos, &v) in tuple.iter().enumerate() {
                idx = idx * f.cards()[pos] as usize + v as usize;
            }
            table[idx] = prob;
        }
        dense.push(table);
        let mut st = Vec::with_capacity(f.scope().arity());
        let mut stride = 1usize;
        for pos in (0..f.scope().arity()).rev() {
            st.push((f.scope().vars()[pos], stride));
            stride *= f.cards()[pos] as usize;
        }
        st.reverse();
        strides.push(st);
    }

    let mut var_acc: Vec<Vec<f64>> =
        pgm.variables.iter().map(|v| vec![0.0; v.cardinality as usize]).collect();
    let mut fac_acc: Vec<Vec<f64>> = dense.iter().map(|t| vec![0.0; t.len()]).collect();
    let mut z = 0.0;

    // Forward mixed-radix odometer over the free variables; evidence pins
    // the rest.
    let free: Vec<usize> =
        (0..n).filter(|v| !evidence.assignments.contains_key(v)).collect();
    let mut assignment: Vec<u32> = (0..n)
        .map(|v| evidence.assignments.get(&v).copied().unwrap_or(0))
        .collect();
    let mut fidx = vec![0usize; pgm.factors.len()];
    loop {
        let mut mass = 1.0;
        for (fi, st) in strides.iter().enumerate() {
            let mut idx = 0usize;
            for &(var, stride) in st {
                idx += assignment[var] as usize * stride;
            }
            fidx[fi] = idx;
            mass *= dense[fi][idx];
            if mass == 0.0 {
                break;
            }
        }
        if mass > 0.0 {
            z += mass;
            for (var, &value) in assignment.iter().enumerate() {
                var_acc[var][value as usize] += mass;
            }
            for (fi, &idx) in fidx.iter().enumerate() {
                fac_acc[fi][idx] += mass;
            }
        }

        let mut advanced = false;
        for &v in free.iter().rev() {
            assignment[v] += 1;
            if assignment[v] < pgm.cardinality(v) {
                advanced = true;
                break;
            }
            assignment[v] = 0;
        }
        if !advanced {
            break;
        }
    }

    if z <= 0.0 {
        return Err(Error::InconsistentModel);
    }
    for acc in &mut var_acc {
        for p in acc.iter_mut() {
            *p /= z;
        }
    }
    for acc in &mut fac_acc {
        for p in acc.iter_mut() {
            *p /= z;
        }
    }
    Ok(BruteForceResult { var_marginals: var_acc, factor_marginals: fac_acc, z: z * pgm.constant })
}
