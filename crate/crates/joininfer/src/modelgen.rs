//! Seeded random model generation for tests and benchmarks.
//!
//! Generated models always support the all-zeros joint assignment so the
//! partition function stays positive, with or without the generated
//! evidence (which only ever pins values to zero).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::model::{make_factor, FactorScope, FactorTable, Pgm, VarId, Variable};
use crate::uai::Evidence;

#[derive(Debug, Clone, Copy)]
pub struct GenOptions {
    pub max_vars: usize,
    pub max_cardinality: u32,
    /// Per-factor keep probability is drawn from this range.
    pub sparsity_range: (f64, f64),
    /// Cap on the joint domain size, so the brute-force oracle stays fast.
    pub max_joint_size: f64,
    /// Probability of adding loopy extra edges beyond the spanning tree.
    pub loopy: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            max_vars: 15,
            max_cardinality: 4,
            sparsity_range: (0.2, 1.0),
            max_joint_size: 2e5,
            loopy: true,
        }
    }
}

fn random_factor(
    rng: &mut ChaCha8Rng,
    vars: &[VarId],
    cards: &[u32],
    keep: f64,
) -> FactorTable {
    let size: usize = cards.iter().map(|&c| c as usize).product();
    let mut entries = Vec::new();
    for row in 0..size {
        let mut tuple = vec![0u32; vars.len()];
        let mut rest = row;
        for pos in (0..vars.len()).rev() {
            tuple[pos] = (rest % cards[pos] as usize) as u32;
            rest /= cards[pos] as usize;
        }
        // The all-zeros tuple anchors satisfiability.
        if row == 0 || rng.gen_bool(keep) {
            entries.push((tuple, rng.gen_range(0.05..1.0)));
        }
    }
    make_factor(FactorScope::new(vars.to_vec()).unwrap(), cards.to_vec(), entries).unwrap()
}

/// A random tree-ish or loopy discrete model.
pub fn random_model(seed: u64, opts: &GenOptions) -> Pgm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=opts.max_vars);
    let mut cards = Vec::with_capacity(n);
    let mut joint = 1.0f64;
    for _ in 0..n {
        let max_here = (2..=opts.max_cardinality)
            .rev()
            .find(|&c| joint * c as f64 <= opts.max_joint_size)
            .unwrap_or(2);
        let card = rng.gen_range(2..=max_here);
        joint *= card as f64;
        cards.push(card);
    }
    let variables: Vec<Variable> =
        cards.iter().enumerate().map(|(id, &cardinality)| Variable { id, cardinality }).collect();

    let keep = rng.gen_range(opts.sparsity_range.0..=opts.sparsity_range.1);
    let mut factors = Vec::new();
    // Spanning tree of pairwise factors.
    for v in 1..n {
        let u = rng.gen_range(0..v);
        factors.push(random_factor(&mut rng, &[u, v], &[cards[u], cards[v]], keep));
    }
    if opts.loopy && rng.gen_bool(0.6) {
        for _ in 0..rng.gen_range(1..=2usize) {
            let arity = rng.gen_range(2..=3.min(n));
            let mut vs: Vec<VarId> = (0..n).collect();
            vs.shuffle(&mut rng);
            vs.truncate(arity);
            vs.sort_unstable();
            let cs: Vec<u32> = vs.iter().map(|&v| cards[v]).collect();
            factors.push(random_factor(&mut rng, &vs, &cs, keep));
        }
    }
    // A few unary potentials.
    for (v, &card) in cards.iter().enumerate() {
        if rng.gen_bool(0.3) {
            factors.push(random_factor(&mut rng, &[v], &[card], 1.0));
        }
    }
    Pgm::new(variables, factors).unwrap()
}

/// Evidence compatible with the all-zeros anchor: up to `max_pins`
/// variables observed at value 0.
pub fn random_evidence(pgm: &Pgm, seed: u64, max_pins: usize) -> Evidence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut vars: Vec<usize> = (0..pgm.num_vars()).collect();
    vars.shuffle(&mut rng);
    vars.truncate(rng.gen_range(0..=max_pins.min(pgm.num_vars())));
    Evidence { assignments: vars.into_iter().map(|v| (v, 0)).collect() }
}

/// Sparse triangle over variables A=0, B=1, C=2 with `n` tuples per factor,
/// built from a star core (one hub value fanned out, quadratic under a
/// pairwise first join) plus a dense grid block (drives the true output to
/// roughly n^{3/2}). Value ranges of the two parts are disjoint. Returns
/// the factors in order AB, CA, BC plus the shared cardinality.
pub fn sparse_triangle(n: usize) -> (Vec<FactorTable>, u32) {
    let g = ((n / 2) as f64).sqrt().floor() as u32;
    let grid = (g * g) as usize;
    let star = n - grid;
    let card = (1 + star + g as usize) as u32;
    let star_vals: Vec<u32> = (1..=star as u32).collect();
    let grid_vals: Vec<u32> = (star as u32 + 1..=star as u32 + g).collect();

    let mut ab = Vec::new();
    let mut bc = Vec::new();
    let mut ca = Vec::new();
    for &s in &star_vals {
        ab.push((vec![0u32, s], 1.0));
        bc.push((vec![s, s], 1.0));
        ca.push((vec![s, 0u32], 1.0));
    }
    for &x in &grid_vals {
        for &y in &grid_vals {
            ab.push((vec![x, y], 1.0));
            bc.push((vec![x, y], 1.0));
            ca.push((vec![x, y], 1.0));
        }
    }
    let mk = |vars: [VarId; 2], entries: Vec<(Vec<u32>, f64)>| {
        make_factor(FactorScope::new(vars.to_vec()).unwrap(), vec![card, card], entries).unwrap()
    };
    (vec![mk([0, 1], ab), mk([2, 0], ca), mk([1, 2], bc)], card)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::brute_force_marginals;

    #[test]
    fn generated_models_are_satisfiable() {
        for seed in 0..20 {
            let pgm = random_model(seed, &GenOptions::default());
            assert!(pgm.joint_size() <= 2e5 * 4.0);
            let ev = random_evidence(&pgm, seed, 2);
            brute_force_marginals(&pgm, &ev).unwrap();
        }
    }
}
