//! Per-bag strategy selection: time the three product kernels on each bag's
//! pre-assigned factors and propagate the winner down the subtree. Above
//! the rho threshold the trials themselves become too expensive and the
//! choice degrades to a seeded coin flip between the two multiway modes.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::decomposition::Ghd;
use crate::error::Result;
use crate::join::{mult_fac_prod, pairwise_prod, BagQuery, JoinCtx};
use crate::model::{FactorTable, Pgm};
use crate::propagation::ProjectionCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    /// Multiway product without 01-projections.
    Multiway = 0,
    /// Multiway product with 01-projections.
    Multiway01 = 1,
    /// Pairwise left-fold product.
    Pairwise = 2,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Multiway => "multiway",
            Strategy::Multiway01 => "multiway01",
            Strategy::Pairwise => "pairwise",
        })
    }
}

/// Total assignment of a strategy to every GHD node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyMap(Vec<Strategy>);

impl StrategyMap {
    pub fn uniform(strategy: Strategy, nodes: usize) -> Self {
        StrategyMap(vec![strategy; nodes])
    }

    pub fn from_vec(strategies: Vec<Strategy>) -> Self {
        StrategyMap(strategies)
    }

    pub fn get(&self, node: usize) -> Strategy {
        self.0[node]
    }

    pub fn as_slice(&self) -> &[Strategy] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HyjarOptions {
    pub rho_threshold: f64,
    /// Trials per kernel; the median time wins.
    pub trials: usize,
    pub proj_density_threshold: f64,
    pub seed: u64,
    /// Cooperative wall-clock bound for the trial kernels.
    pub deadline: Option<Instant>,
}

impl Default for HyjarOptions {
    fn default() -> Self {
        HyjarOptions {
            rho_threshold: 1e9,
            trials: 1,
            proj_density_threshold: 0.9,
            seed: 0,
            deadline: None,
        }
    }
}

fn subtree(ghd: &Ghd, v: usize) -> Vec<usize> {
    let mut out = vec![v];
    let mut head = 0;
    while head < out.len() {
        let node = out[head];
        head += 1;
        out.extend(ghd.children(node));
    }
    out
}

fn time_kernel(
    trials: usize,
    mut run: impl FnMut() -> Result<()>,
) -> Result<std::time::Duration> {
    let mut samples = Vec::with_capacity(trials.max(1));
    for _ in 0..trials.max(1) {
        let start = Instant::now();
        run()?;
        samples.push(start.elapsed());
    }
    samples.sort_unstable();
    Ok(samples[samples.len() / 2])
}

/// Choose a strategy per node. Below the rho threshold, nodes with assigned
/// factors are visited in decreasing domain product order; each times the
/// three kernels on its assigned factors (data-structure construction
/// excluded, 01-projection tables cached for later reuse) and propagates
/// the winner to unassigned subtree nodes, with the root's choice filling
/// whatever remains. Above the threshold each node flips a seeded coin
/// between the two multiway modes; pairwise is never chosen there.
pub fn select_strategies(
    ghd: &Ghd,
    pgm: &Pgm,
    rho: f64,
    opts: &HyjarOptions,
    cache: &mut ProjectionCache,
) -> Result<StrategyMap> {
    let nodes = ghd.num_nodes();
    if rho > opts.rho_threshold {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let map = (0..nodes)
            .map(|_| if rng.gen_range(0..2u8) == 0 { Strategy::Multiway } else { Strategy::Multiway01 })
            .collect();
        return Ok(StrategyMap(map));
    }

    let mut assigned: Vec<Option<Strategy>> = vec![None; nodes];
    let mut visit: Vec<usize> = (0..nodes).filter(|&v| !ghd.alpha[v].is_empty()).collect();
    let domain_product = |v: usize| -> f64 {
        ghd.chi[v].iter().map(|&u| pgm.cardinality(u) as f64).product()
    };
    visit.sort_by(|&a, &b| {
        domain_product(b).partial_cmp(&domain_product(a)).unwrap().then(a.cmp(&b))
    });

    for &v in &visit {
        let chi = &ghd.chi[v];
        let cards: Vec<u32> = chi.iter().map(|&u| pgm.cardinality(u)).collect();
        let tables: Vec<&FactorTable> =
            ghd.alpha[v].iter().map(|&fid| &pgm.factors[fid]).collect();

        let base = BagQuery::new(chi.clone(), cards.clone(), tables.clone(), chi.clone())?;
        let projections: Vec<FactorTable> = cache.projections_for_bag(
            pgm,
            chi,
            &ghd.alpha[v],
            opts.proj_density_threshold,
        )?;
        let mut with_proj = tables.clone();
        with_proj.extend(projections.iter());
        let augmented = BagQuery::new(chi.clone(), cards.clone(), with_proj, chi.clone())?;

        let t0 = time_kernel(opts.trials, || {
            mult_fac_prod(&base, &mut JoinCtx::with_deadline(opts.deadline)).map(|_| ())
        })?;
        let t1 = time_kernel(opts.trials, || {
            mult_fac_prod(&augmented, &mut JoinCtx::with_deadline(opts.deadline)).map(|_| ())
        })?;
        let t2 = time_kernel(opts.trials, || {
            pairwise_prod(&base, &mut JoinCtx::with_deadline(opts.deadline)).map(|_| ())
        })?;

        let choice = [(t0, Strategy::Multiway), (t1, Strategy::Multiway01), (t2, Strategy::Pairwise)]
            .into_iter()
            .min_by_key(|&(t, s)| (t, s))
            .map(|(_, s)| s)
            .unwrap();
        assigned[v] = Some(choice);
        for w in subtree(ghd, v) {
            if assigned[w].is_none() {
                assigned[w] = Some(choice);
            }
        }
    }

    // Whatever is still unassigned inherits the root's choice.
    let root_choice = assigned[ghd.root].unwrap_or(Strategy::Multiway);
    let map = assigned.into_iter().map(|s| s.unwrap_or(root_choice)).collect();
    Ok(StrategyMap(map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{build_junction_tree, min_fill_order};
    use crate::model::{make_factor, FactorScope, Variable};

    fn small_model() -> Pgm {
        let variables =
            (0..2).map(|id| Variable { id, cardinality: 2 }).collect();
        let f = make_factor(
            FactorScope::new(vec![0, 1]).unwrap(),
            vec![2, 2],
            vec![(vec![0, 0], 0.3), (vec![1, 1], 0.7)],
        )
        .unwrap();
        Pgm::new(variables, vec![f]).unwrap()
    }

    #[test]
    fn single_bag_map_is_total() {
        let pgm = small_model();
        let ghd = build_junction_tree(&pgm, &min_fill_order(&pgm));
        let mut cache = ProjectionCache::new(true);
        let map =
            select_strategies(&ghd, &pgm, 4.0, &HyjarOptions::default(), &mut cache).unwrap();
        assert_eq!(map.as_slice().len(), ghd.num_nodes());
    }

    #[test]
    fn high_rho_never_pairwise_and_deterministic() {
        let pgm = small_model();
        let ghd = build_junction_tree(&pgm, &min_fill_order(&pgm));
        let opts = HyjarOptions { seed: 77, ..Default::default() };
        let mut cache = ProjectionCache::new(true);
        let a = select_strategies(&ghd, &pgm, 2e9, &opts, &mut cache).unwrap();
        let b = select_strategies(&ghd, &pgm, 2e9, &opts, &mut cache).unwrap();
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|&s| s != Strategy::Pairwise));
    }
}
