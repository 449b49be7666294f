//! Two-pass inference: upward message propagation with optional
//! 01-projections, downward correction via in-place hash products, marginal
//! extraction, and the end-to-end pipeline.
//!
//! Up messages are kept in three synchronized forms: the listing table that
//! feeds the parent's bag product, the dual index list, and a hash keyed by
//! the forward separator index that the down pass divides against. Bag
//! variable orders all follow the global elimination position, so parent
//! and child agree on separator order without re-sorting.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::{Duration, Instant};

use crate::decomposition::{build_junction_tree, compute_widths, min_fill_order, Ghd};
use crate::error::{Error, Result};
use crate::hyjar::{select_strategies, HyjarOptions, Strategy, StrategyMap};
use crate::join::{hash_product, mult_fac_prod, pairwise_prod, BagQuery, HashOp, JoinCtx, OpCounters};
use crate::metrics::{compute_rho, per_bag_agm_log2};
use crate::model::{marginalize, zero_one_projection, FactorScope, FactorTable, Pgm, VarId};
use crate::par::Executor;
use crate::preprocess::{apply_evidence, kept_variables, singleton_consistency};
use crate::storage::{encode_index, HashedFactor, IndexDirection, IndexedList, ListVariant};
use crate::uai::Evidence;

/// Cache of 01-projections keyed by `(factor id, intersection variable
/// set)`. A disabled cache recomputes every projection on demand; results
/// are identical either way.
pub struct ProjectionCache {
    enabled: bool,
    map: HashMap<(usize, Vec<VarId>), FactorTable>,
}

impl ProjectionCache {
    pub fn new(enabled: bool) -> Self {
        ProjectionCache { enabled, map: HashMap::new() }
    }

    fn intersection(factor: &FactorTable, chi_set: &BTreeSet<VarId>) -> Vec<VarId> {
        factor.scope().vars().iter().copied().filter(|v| chi_set.contains(v)).collect()
    }

    /// Precompute (and store) the projections a bag will need.
    pub fn warm(
        &mut self,
        pgm: &Pgm,
        chi: &[VarId],
        exclude: &[usize],
        threshold: f64,
    ) -> Result<()> {
        if !self.enabled {
            return Ok(());
        }
        let chi_set: BTreeSet<VarId> = chi.iter().copied().collect();
        for (fid, factor) in pgm.factors.iter().enumerate() {
            if exclude.contains(&fid) {
                continue;
            }
            let inter = Self::intersection(factor, &chi_set);
            if inter.is_empty() {
                continue;
            }
            if let std::collections::hash_map::Entry::Vacant(slot) =
                self.map.entry((fid, inter))
            {
                slot.insert(zero_one_projection(factor, &chi_set)?);
            }
        }
        let _ = threshold;
        Ok(())
    }

    /// Fetch or compute the density-filtered projections for a bag, without
    /// mutating the cache.
    pub fn collect(
        &self,
        pgm: &Pgm,
        chi: &[VarId],
        exclude: &[usize],
        threshold: f64,
    ) -> Result<Vec<FactorTable>> {
        let chi_set: BTreeSet<VarId> = chi.iter().copied().collect();
        let mut out = Vec::new();
        for (fid, factor) in pgm.factors.iter().enumerate() {
            if exclude.contains(&fid) {
                continue;
            }
            let inter = Self::intersection(factor, &chi_set);
            if inter.is_empty() {
                continue;
            }
            let proj = match self.map.get(&(fid, inter)) {
                Some(cached) => cached.clone(),
                None => zero_one_projection(factor, &chi_set)?,
            };
            // A near-full projection prunes nothing; skip it.
            if crate::model::factor_sparsity(&proj) <= threshold {
                out.push(proj);
            }
        }
        Ok(out)
    }

    /// Warm-then-collect, for callers holding the cache mutably.
    pub fn projections_for_bag(
        &mut self,
        pgm: &Pgm,
        chi: &[VarId],
        exclude: &[usize],
        threshold: f64,
    ) -> Result<Vec<FactorTable>> {
        self.warm(pgm, chi, exclude, threshold)?;
        self.collect(pgm, chi, exclude, threshold)
    }
}

/// Up message over a separator: listing table, dual index list, and the
/// forward-index hash used for division in the down pass.
pub struct UpMessage {
    pub table: FactorTable,
    pub dual: IndexedList,
    pub hash: HashedFactor,
    /// Total mass before optional renormalization.
    pub mass: f64,
}

/// Per-node state carried between the passes.
pub struct MessageStore {
    pub up: Vec<Option<UpMessage>>,
    pub bag_products: Vec<FactorTable>,
    /// Accumulated `ln(mass)` of renormalized messages; zero when message
    /// normalization is off.
    pub log_scale: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PropagationConfig {
    pub proj_density_threshold: f64,
    pub use_projection_cache: bool,
    pub normalize_messages: bool,
    pub deadline: Option<Instant>,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            proj_density_threshold: 0.9,
            use_projection_cache: true,
            normalize_messages: false,
            deadline: None,
        }
    }
}

fn check_deadline(deadline: Option<Instant>) -> Result<()> {
    if let Some(d) = deadline {
        if Instant::now() > d {
            return Err(Error::Timeout);
        }
    }
    Ok(())
}

fn scale_table(f: &FactorTable, scale: f64) -> FactorTable {
    FactorTable::from_sorted_parts(
        f.scope().clone(),
        f.cards().to_vec(),
        f.tuples().to_vec(),
        f.probs().iter().map(|p| p * scale).collect(),
    )
}

/// Leaves-to-root pass: each bag multiplies its assigned factors, incoming
/// child messages and (under strategy 1) the 01-projections of intersecting
/// outside edges, then marginalizes onto the separator towards its parent.
/// Bags within one level run independently.
pub fn join_infer_up(
    ghd: &Ghd,
    pgm: &Pgm,
    strategies: &StrategyMap,
    cfg: &PropagationConfig,
    cache: &mut ProjectionCache,
    exec: &Executor,
) -> Result<(MessageStore, Vec<OpCounters>)> {
    let nodes = ghd.num_nodes();
    let mut store = MessageStore {
        up: (0..nodes).map(|_| None).collect(),
        bag_products: vec![FactorTable::scalar(1.0); nodes],
        log_scale: 0.0,
    };
    let mut counters = vec![OpCounters::default(); nodes];

    let mut levels = ghd.levels();
    levels.reverse();
    for level in levels {
        check_deadline(cfg.deadline)?;
        for &v in &level {
            if strategies.get(v) == Strategy::Multiway01 {
                cache.warm(pgm, &ghd.chi[v], &ghd.lambda[v], cfg.proj_density_threshold)?;
            }
        }
        let cache_ref = &*cache;
        let store_ref = &store;
        let results: Vec<(usize, FactorTable, FactorTable, OpCounters)> =
            exec.try_map(level, |v| {
                let chi = ghd.chi[v].clone();
                let cards: Vec<u32> = chi.iter().map(|&u| pgm.cardinality(u)).collect();
                let strategy = strategies.get(v);

                let mut tables: Vec<&FactorTable> =
                    ghd.lambda[v].iter().map(|&fid| &pgm.factors[fid]).collect();
                for w in ghd.children(v) {
                    tables.push(&store_ref.up[w].as_ref().expect("child processed").table);
                }
                let projections = if strategy == Strategy::Multiway01 {
                    cache_ref.collect(pgm, &chi, &ghd.lambda[v], cfg.proj_density_threshold)?
                } else {
                    Vec::new()
                };
                tables.extend(projections.iter());

                let free =
                    if v == ghd.root { chi.clone() } else { ghd.separator(v) };
                let query = BagQuery::new(chi, cards, tables, free)?;
                let mut ctx = JoinCtx::with_deadline(cfg.deadline);
                let (product, marginal) = match strategy {
                    Strategy::Pairwise => pairwise_prod(&query, &mut ctx)?,
                    _ => mult_fac_prod(&query, &mut ctx)?,
                };
                Ok::<_, Error>((v, product, marginal, ctx.counters))
            })?;
        for (v, product, marginal, ops) in results {
            counters[v] = ops;
            store.bag_products[v] = product;
            if v != ghd.root {
                let mass = marginal.total_mass();
                let table = if cfg.normalize_messages && mass > 0.0 {
                    store.log_scale += mass.ln();
                    scale_table(&marginal, 1.0 / mass)
                } else {
                    marginal
                };
                let dual = IndexedList::from_factor(&table, ListVariant::Dual)?;
                let hash = HashedFactor::new(
                    IndexDirection::Forward,
                    dual.entries.iter().map(|&(fwd, _, p)| (fwd, p)),
                );
                store.up[v] = Some(UpMessage { table, dual, hash, mass });
            }
        }
    }
    Ok((store, counters))
}

/// Root-to-leaf pass: for each child, the parent's product is marginalized
/// onto the separator, divided by the child's up message (hash probe, in
/// place), and the quotient multiplied into the child's product. Each bag
/// is updated exactly once.
pub fn join_infer_down(
    ghd: &Ghd,
    store: &mut MessageStore,
    cfg: &PropagationConfig,
    exec: &Executor,
) -> Result<()> {
    let mut updated = vec![false; ghd.num_nodes()];
    updated[ghd.root] = true;
    for level in ghd.levels() {
        check_deadline(cfg.deadline)?;
        let store_ref = &*store;
        let updates: Vec<Vec<(usize, FactorTable)>> = exec.try_map(level, |v| {
            let mut out = Vec::new();
            for w in ghd.children(v) {
                let sep = ghd.separator(w);
                let sep_scope = FactorScope::new(sep.clone())?;
                let parent_product = &store_ref.bag_products[v];
                let narrowed = marginalize(parent_product, &sep_scope)?;
                let up = store_ref.up[w].as_ref().expect("up pass complete");
                let sep_cards = up.table.cards();

                let iterated: Vec<(u64, f64)> = narrowed
                    .rows()
                    .map(|(t, p)| {
                        Ok((encode_index(t, sep_cards, IndexDirection::Forward)?, p))
                    })
                    .collect::<Result<_>>()?;
                let down_entries = hash_product(&up.hash, &iterated, HashOp::Divide);
                let down_hash = HashedFactor::new(IndexDirection::Forward, down_entries);

                // In-place product of the down message into w's bag table,
                // keyed by each row's separator projection.
                let child = &store_ref.bag_products[w];
                let sep_pos: Vec<usize> = sep
                    .iter()
                    .map(|s| ghd.chi[w].iter().position(|u| u == s).expect("separator in bag"))
                    .collect();
                let mut strides = vec![0u64; sep_pos.len()];
                let mut stride = 1u64;
                for i in (0..sep_pos.len()).rev() {
                    strides[i] = stride;
                    stride *= sep_cards[i] as u64;
                }
                let mut tuples = Vec::new();
                let mut probs = Vec::new();
                for (tuple, prob) in child.rows() {
                    let key: u64 = sep_pos
                        .iter()
                        .zip(&strides)
                        .map(|(&p, &s)| tuple[p] as u64 * s)
                        .sum();
                    if let Some(h) = down_hash.get(key) {
                        tuples.push(tuple.to_vec());
                        probs.push(prob * h);
                    }
                }
                out.push((
                    w,
                    FactorTable::from_sorted_parts(
                        child.scope().clone(),
                        child.cards().to_vec(),
                        tuples,
                        probs,
                    ),
                ));
            }
            Ok::<_, Error>(out)
        })?;
        for (w, table) in updates.into_iter().flatten() {
            debug_assert!(!updated[w]);
            updated[w] = true;
            store.bag_products[w] = table;
        }
    }
    Ok(())
}

/// Calibrated marginals read off the final bag products.
pub struct Extraction {
    /// Per reduced variable id: the normalized distribution, or `None` when
    /// no bag contains the variable.
    pub var_marginals: Vec<Option<Vec<f64>>>,
    /// Per factor id: normalized dense table, row-major, last scope
    /// variable fastest.
    pub factor_marginals: Vec<Vec<f64>>,
    /// Total mass at the root.
    pub z: f64,
}

/// Read variable and factor marginals from the calibrated products. Every
/// variable is read from the lowest-id bag containing it; every factor from
/// the bag labeled with it.
pub fn extract_marginals(ghd: &Ghd, pgm: &Pgm, store: &MessageStore) -> Result<Extraction> {
    let z = store.bag_products[ghd.root].total_mass();
    if z <= 0.0 || !z.is_finite() {
        return Err(Error::InconsistentModel);
    }
    let mut var_marginals: Vec<Option<Vec<f64>>> = vec![None; pgm.num_vars()];
    for (var, slot) in var_marginals.iter_mut().enumerate() {
        let Some(bag) = (0..ghd.num_nodes()).find(|&v| ghd.chi[v].contains(&var)) else {
            continue;
        };
        let product = &store.bag_products[bag];
        let mass = product.total_mass();
        if mass <= 0.0 || !mass.is_finite() {
            return Err(Error::InconsistentModel);
        }
        let marg = marginalize(product, &FactorScope::new(vec![var])?)?;
        let mut dist = vec![0.0; pgm.cardinality(var) as usize];
        for (tuple, prob) in marg.rows() {
            dist[tuple[0] as usize] = prob / mass;
        }
        *slot = Some(dist);
    }

    let mut factor_marginals = vec![Vec::new(); pgm.factors.len()];
    for v in 0..ghd.num_nodes() {
        let product = &store.bag_products[v];
        let mass = product.total_mass();
        if !ghd.lambda[v].is_empty() && (mass <= 0.0 || !mass.is_finite()) {
            return Err(Error::InconsistentModel);
        }
        for &fid in &ghd.lambda[v] {
            let scope = pgm.factors[fid].scope().clone();
            let marg = marginalize(product, &scope)?;
            let dense = crate::uai::to_dense(&marg);
            factor_marginals[fid] = dense.into_iter().map(|p| p / mass).collect();
        }
    }
    Ok(Extraction { var_marginals, factor_marginals, z })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyChoice {
    Hyjar,
    Fixed(Strategy),
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub strategy: StrategyChoice,
    pub seed: u64,
    pub proj_density_threshold: f64,
    pub rho_threshold: f64,
    pub hyjar_trials: usize,
    pub normalize_messages: bool,
    pub use_projection_cache: bool,
    pub threads: usize,
    pub timeout: Option<Duration>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            strategy: StrategyChoice::Hyjar,
            seed: 0,
            proj_density_threshold: 0.9,
            rho_threshold: 1e9,
            hyjar_trials: 1,
            normalize_messages: false,
            use_projection_cache: true,
            threads: 1,
            timeout: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BagStat {
    pub node: usize,
    /// Bag variables in original (input model) ids.
    pub chi: Vec<usize>,
    pub domain_product: f64,
    pub agm_log2: f64,
    pub strategy: Strategy,
    pub counters: OpCounters,
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub reduced_vars: usize,
    pub reduced_factors: usize,
    pub fixed_vars: usize,
    pub tw: usize,
    pub fhtw: f64,
    pub rho: f64,
    pub r_j: f64,
    pub r_d: f64,
    pub log_z: f64,
    pub bags: Vec<BagStat>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Normalized distribution per input variable; evidence and inferred
    /// singletons come out as point masses.
    pub var_marginals: Vec<Vec<f64>>,
    /// Dense normalized marginals of the reduced model's factors.
    pub factor_marginals: Vec<Vec<f64>>,
    pub stats: RunStats,
}

/// The full pipeline: evidence conditioning, singleton consistency, GHD
/// construction, strategy selection, both passes, and extraction, mapping
/// results back onto the input model's variables.
pub fn run_inference(pgm: &Pgm, evidence: &Evidence, opts: &RunOptions) -> Result<RunOutput> {
    let deadline = opts.timeout.map(|t| Instant::now() + t);
    let exec = Executor::new(opts.threads);

    let reduced1 = apply_evidence(pgm, evidence)?;
    let kept1 = kept_variables(pgm.num_vars(), evidence);
    check_deadline(deadline)?;
    let (reduced, inferred) = singleton_consistency(&reduced1)?;
    let kept2 = kept_variables(reduced1.num_vars(), &inferred);
    check_deadline(deadline)?;

    // Original id of each reduced variable, and forced values by original id.
    let kept_final: Vec<usize> = kept2.iter().map(|&r| kept1[r]).collect();
    let mut fixed: BTreeMap<usize, u32> = evidence.assignments.clone();
    for (&local, &value) in &inferred.assignments {
        fixed.insert(kept1[local], value);
    }

    let mut stats = RunStats {
        reduced_vars: reduced.num_vars(),
        reduced_factors: reduced.factors.len(),
        fixed_vars: fixed.len(),
        ..Default::default()
    };

    let mut var_marginals: Vec<Vec<f64>> = Vec::with_capacity(pgm.num_vars());
    let uniform = |card: u32| vec![1.0 / card as f64; card as usize];
    let delta = |card: u32, value: u32| {
        let mut d = vec![0.0; card as usize];
        d[value as usize] = 1.0;
        d
    };

    if reduced.factors.is_empty() {
        for var in &pgm.variables {
            var_marginals.push(match fixed.get(&var.id) {
                Some(&value) => delta(var.cardinality, value),
                None => uniform(var.cardinality),
            });
        }
        stats.log_z = reduced.constant.ln();
        return Ok(RunOutput { var_marginals, factor_marginals: Vec::new(), stats });
    }

    let order = min_fill_order(&reduced);
    let ghd = build_junction_tree(&reduced, &order);
    check_deadline(deadline)?;

    let (tw, fhtw) = compute_widths(&ghd, &reduced)?;
    let rho = compute_rho(&ghd, &reduced);
    let agm_log2 = per_bag_agm_log2(&ghd, &reduced)?;
    stats.tw = tw;
    stats.fhtw = fhtw;
    stats.rho = rho;
    stats.r_j = agm_log2.iter().map(|o| o.exp2()).sum::<f64>() / rho;
    stats.r_d = {
        let n = reduced.factors.iter().map(|f| f.len()).max().unwrap_or(1).max(1) as f64;
        let d = reduced.variables.iter().map(|v| v.cardinality).max().unwrap_or(1) as f64;
        n.powf(fhtw) / d.powi(tw as i32)
    };

    let mut cache = ProjectionCache::new(opts.use_projection_cache);
    let strategies = match opts.strategy {
        StrategyChoice::Fixed(s) => StrategyMap::uniform(s, ghd.num_nodes()),
        StrategyChoice::Hyjar => {
            let hyjar_opts = HyjarOptions {
                rho_threshold: opts.rho_threshold,
                trials: opts.hyjar_trials,
                proj_density_threshold: opts.proj_density_threshold,
                seed: opts.seed,
                deadline,
            };
            select_strategies(&ghd, &reduced, rho, &hyjar_opts, &mut cache)?
        }
    };

    let cfg = PropagationConfig {
        proj_density_threshold: opts.proj_density_threshold,
        use_projection_cache: opts.use_projection_cache,
        normalize_messages: opts.normalize_messages,
        deadline,
    };
    let (mut store, counters) = join_infer_up(&ghd, &reduced, &strategies, &cfg, &mut cache, &exec)?;
    join_infer_down(&ghd, &mut store, &cfg, &exec)?;
    let extraction = extract_marginals(&ghd, &reduced, &store)?;

    stats.log_z = extraction.z.ln() + store.log_scale + reduced.constant.ln();
    stats.bags = (0..ghd.num_nodes())
        .map(|v| BagStat {
            node: v,
            chi: ghd.chi[v].iter().map(|&r| kept_final[r]).collect(),
            domain_product: ghd.chi[v]
                .iter()
                .map(|&u| reduced.cardinality(u) as f64)
                .product(),
            agm_log2: agm_log2[v],
            strategy: strategies.get(v),
            counters: counters[v],
        })
        .collect();

    let orig_to_reduced: BTreeMap<usize, usize> =
        kept_final.iter().enumerate().map(|(r, &orig)| (orig, r)).collect();
    for var in &pgm.variables {
        let dist = match fixed.get(&var.id) {
            Some(&value) => delta(var.cardinality, value),
            None => {
                let r = orig_to_reduced[&var.id];
                match &extraction.var_marginals[r] {
                    Some(dist) => dist.clone(),
                    None => uniform(var.cardinality),
                }
            }
        };
        var_marginals.push(dist);
    }

    Ok(RunOutput { var_marginals, factor_marginals: extraction.factor_marginals, stats })
}
