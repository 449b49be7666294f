//! Model reductions applied before inference: evidence conditioning,
//! singleton-consistency, and benchmark sparsity induction.
//!
//! Conditioning removes variables from the model and renumbers the survivors
//! densely; the kept-variable mapping is the sorted complement of the
//! assigned set, so callers can reconstruct original ids.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{make_factor, FactorScope, FactorTable, Pgm, VarId, Variable};
use crate::uai::Evidence;

/// Rewrite a factor's scope ids through a dense renumbering. The mapping is
/// monotone, so tuple order is unaffected.
fn remap_factor(f: &FactorTable, new_id: &[usize]) -> Result<FactorTable> {
    let scope = FactorScope::new(f.scope().vars().iter().map(|&v| new_id[v]).collect())?;
    Ok(FactorTable::from_sorted_parts(
        scope,
        f.cards().to_vec(),
        f.tuples().to_vec(),
        f.probs().to_vec(),
    ))
}

/// Restrict every factor to tuples matching the evidence, drop the observed
/// variables from scopes and from the model, and fold fully-observed factors
/// into the model constant.
pub fn apply_evidence(pgm: &Pgm, ev: &Evidence) -> Result<Pgm> {
    if ev.is_empty() {
        return Ok(pgm.clone());
    }
    for (&var, &value) in &ev.assignments {
        if var >= pgm.num_vars() {
            return Err(Error::ValueOutOfRange { var, value, card: 0 });
        }
        let card = pgm.cardinality(var);
        if value >= card {
            return Err(Error::ValueOutOfRange { var, value, card });
        }
    }

    // Dense renumbering of the surviving variables, in id order.
    let mut new_id = vec![usize::MAX; pgm.num_vars()];
    let mut variables = Vec::new();
    for var in &pgm.variables {
        if !ev.assignments.contains_key(&var.id) {
            new_id[var.id] = variables.len();
            variables.push(Variable { id: variables.len(), cardinality: var.cardinality });
        }
    }

    let mut constant = pgm.constant;
    let mut factors = Vec::with_capacity(pgm.factors.len());
    for (fid, f) in pgm.factors.iter().enumerate() {
        let pinned: Vec<(usize, u32)> = f
            .scope()
            .vars()
            .iter()
            .enumerate()
            .filter_map(|(pos, v)| ev.assignments.get(v).map(|&val| (pos, val)))
            .collect();
        if pinned.is_empty() {
            let remapped = remap_factor(f, &new_id)?;
            factors.push(remapped);
            continue;
        }
        let keep_pos: Vec<usize> = (0..f.scope().arity())
            .filter(|p| !pinned.iter().any(|(pp, _)| pp == p))
            .collect();
        let mut entries = Vec::new();
        for (tuple, prob) in f.rows() {
            if pinned.iter().all(|&(pos, val)| tuple[pos] == val) {
                entries.push((keep_pos.iter().map(|&p| tuple[p]).collect::<Vec<u32>>(), prob));
            }
        }
        if entries.is_empty() {
            return Err(Error::InconsistentEvidence { factor: fid });
        }
        if keep_pos.is_empty() {
            // Fully observed: a single surviving tuple, absorbed as a scalar.
            constant *= entries[0].1;
            continue;
        }
        let scope = FactorScope::new(
            keep_pos.iter().map(|&p| new_id[f.scope().vars()[p]]).collect(),
        )?;
        let cards = keep_pos.iter().map(|&p| f.cards()[p]).collect();
        factors.push(make_factor(scope, cards, entries)?);
    }

    let mut out = Pgm::new(variables, factors)?;
    out.constant = constant;
    Ok(out)
}

/// Per-variable supported value sets, intersected across all factors that
/// contain the variable. Variables in no factor are unconstrained.
fn supported_values(pgm: &Pgm) -> Vec<Option<BTreeSet<u32>>> {
    let mut supported: Vec<Option<BTreeSet<u32>>> = vec![None; pgm.num_vars()];
    for f in &pgm.factors {
        for (pos, &var) in f.scope().vars().iter().enumerate() {
            let seen: BTreeSet<u32> = f.tuples().iter().map(|t| t[pos]).collect();
            supported[var] = Some(match supported[var].take() {
                None => seen,
                Some(prev) => prev.intersection(&seen).copied().collect(),
            });
        }
    }
    supported
}

/// Fixpoint singleton-consistency reduction: any variable whose supported
/// value set across all containing factors is a single value becomes
/// evidence and is folded in; repeats until no change. Returns the reduced
/// model and the inferred assignments in the *input* model's variable ids.
pub fn singleton_consistency(pgm: &Pgm) -> Result<(Pgm, Evidence)> {
    let mut current = pgm.clone();
    // current id -> input id
    let mut origin: Vec<VarId> = (0..pgm.num_vars()).collect();
    let mut inferred = BTreeMap::new();

    loop {
        let supported = supported_values(&current);
        let mut step = Evidence::default();
        for (var, values) in supported.iter().enumerate() {
            match values {
                Some(vals) if vals.is_empty() => return Err(Error::Unsatisfiable(origin[var])),
                Some(vals) if vals.len() == 1 => {
                    step.assignments.insert(var, *vals.iter().next().unwrap());
                }
                _ => {}
            }
        }
        if step.is_empty() {
            return Ok((current, Evidence { assignments: inferred }));
        }
        for (&var, &value) in &step.assignments {
            inferred.insert(origin[var], value);
        }
        current = apply_evidence(&current, &step)?;
        origin = origin
            .iter()
            .enumerate()
            .filter(|(local, _)| !step.assignments.contains_key(local))
            .map(|(_, &orig)| orig)
            .collect();
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SparsityOptions {
    /// Probability given to a forced diagonal tuple that was absent from the
    /// input support.
    pub diagonal_epsilon: f64,
}

impl Default for SparsityOptions {
    fn default() -> Self {
        SparsityOptions { diagonal_epsilon: 1e-6 }
    }
}

/// Randomly thin each factor to `round(target * full_domain_size)` tuples,
/// always forcing the diagonal entries `(i, i, ..., i)` for
/// `i < min(scope cardinalities)` so downstream products stay nonempty.
/// Deterministic for a given seed.
pub fn induce_sparsity(pgm: &Pgm, target: f64, seed: u64, opts: SparsityOptions) -> Result<Pgm> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Invalid(format!("target sparsity {target} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factors = Vec::with_capacity(pgm.factors.len());
    for f in &pgm.factors {
        if f.scope().arity() == 0 {
            factors.push(f.clone());
            continue;
        }
        let full = f.domain_product();
        let quota = (target * full).round() as usize;

        let min_card = *f.cards().iter().min().unwrap();
        let diagonal: BTreeSet<Vec<u32>> =
            (0..min_card).map(|i| vec![i; f.scope().arity()]).collect();

        let mut kept: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        let mut pool = Vec::new();
        for (tuple, prob) in f.rows() {
            if diagonal.contains(tuple) {
                kept.insert(tuple.to_vec(), prob);
            } else {
                pool.push((tuple.to_vec(), prob));
            }
        }
        for d in &diagonal {
            kept.entry(d.clone()).or_insert(opts.diagonal_epsilon);
        }
        pool.shuffle(&mut rng);
        for (tuple, prob) in pool {
            if kept.len() >= quota {
                break;
            }
            kept.insert(tuple, prob);
        }
        factors.push(make_factor(
            f.scope().clone(),
            f.cards().to_vec(),
            kept.into_iter().collect(),
        )?);
    }
    let mut out = Pgm::new(pgm.variables.clone(), factors)?;
    out.constant = pgm.constant;
    Ok(out)
}

/// Ids of the variables kept after conditioning on `assigned`, i.e. the
/// mapping reduced-id -> original-id.
pub fn kept_variables(num_vars: usize, assigned: &Evidence) -> Vec<VarId> {
    (0..num_vars).filter(|v| !assigned.assignments.contains_key(v)).collect()
}
