//! Bag-level product kernels.
//!
//! `mult_fac_prod` is the worst-case-optimal multiway product: a
//! backtracking, variable-at-a-time leapfrog intersection over level-order
//! tries. `pairwise_prod` is the traditional left-fold of binary products.
//! `hash_product` and `sort_merge_product` combine index-keyed lists and
//! power the downward pass.
//!
//! All kernels emit tuples in lexicographic bag order and multiply
//! probabilities in factor-list order, so different kernels produce
//! bit-identical tables on the same query.

use std::collections::HashMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::{marginalize, FactorScope, FactorTable, VarId};
use crate::storage::{build_trie, HashedFactor, LevelOrderTrie};

/// Instrumentation shared by the kernels: trie seeks, emitted tuples and
/// backtracks out of an exhausted variable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounters {
    pub seek_count: u64,
    pub emit_count: u64,
    pub backtrack_count: u64,
}

impl OpCounters {
    pub fn merge(&mut self, other: &OpCounters) {
        self.seek_count += other.seek_count;
        self.emit_count += other.emit_count;
        self.backtrack_count += other.backtrack_count;
    }
}

/// Kernel execution context: counters plus an optional cooperative deadline
/// checked periodically inside long-running loops.
#[derive(Debug, Default)]
pub struct JoinCtx {
    pub counters: OpCounters,
    pub deadline: Option<Instant>,
    ticks: u64,
}

impl JoinCtx {
    pub fn with_deadline(deadline: Option<Instant>) -> Self {
        JoinCtx { deadline, ..Default::default() }
    }

    #[inline]
    fn tick(&mut self) -> Result<()> {
        self.ticks = self.ticks.wrapping_add(1);
        if self.ticks & 0x1fff == 0 {
            if let Some(deadline) = self.deadline {
                if Instant::now() > deadline {
                    return Err(Error::Timeout);
                }
            }
        }
        Ok(())
    }
}

/// One factor prepared for a bag: its listing table and a trie over the
/// bag-consistent variable order, with each trie level mapped to its
/// position in the bag order.
pub struct QueryFactor<'a> {
    pub table: &'a FactorTable,
    pub trie: LevelOrderTrie,
    level_pos: Vec<usize>,
}

/// A bag product query: ordered bag variables, prepared factors, and the
/// free variables the result is marginalized onto.
pub struct BagQuery<'a> {
    pub bag_vars: Vec<VarId>,
    pub cards: Vec<u32>,
    pub free_vars: Vec<VarId>,
    pub factors: Vec<QueryFactor<'a>>,
}

impl<'a> BagQuery<'a> {
    /// Prepare a query. Every factor scope must lie inside `bag_vars` and
    /// `free_vars` must be a subset of `bag_vars`; tries are built over the
    /// restriction of the bag order to each scope.
    pub fn new(
        bag_vars: Vec<VarId>,
        cards: Vec<u32>,
        tables: Vec<&'a FactorTable>,
        free_vars: Vec<VarId>,
    ) -> Result<Self> {
        debug_assert_eq!(bag_vars.len(), cards.len());
        for v in &free_vars {
            if !bag_vars.contains(v) {
                return Err(Error::InconsistentOrder);
            }
        }
        let mut factors = Vec::with_capacity(tables.len());
        for table in tables {
            let order: Vec<VarId> =
                bag_vars.iter().copied().filter(|v| table.scope().contains(*v)).collect();
            if order.len() != table.scope().arity() {
                return Err(Error::InconsistentOrder);
            }
            let trie = build_trie(table, &order)?;
            let level_pos: Vec<usize> = order
                .iter()
                .map(|v| bag_vars.iter().position(|b| b == v).expect("order built from bag"))
                .collect();
            factors.push(QueryFactor { table, trie, level_pos });
        }
        Ok(BagQuery { bag_vars, cards, free_vars, factors })
    }

    fn free_scope(&self) -> FactorScope {
        FactorScope::new(self.free_vars.clone()).expect("free vars are distinct")
    }
}

struct LeapfrogState<'q, 'a> {
    query: &'q BagQuery<'a>,
    /// Per bag position, the factors containing that variable as
    /// `(factor index, trie level)`.
    participants: Vec<Vec<(usize, usize)>>,
    /// Per factor, the node path of entered levels.
    stacks: Vec<Vec<usize>>,
    bound: Vec<u32>,
    tuples: Vec<Vec<u32>>,
    probs: Vec<f64>,
}

impl<'q, 'a> LeapfrogState<'q, 'a> {
    fn child_range(&self, factor: usize, level: usize) -> std::ops::Range<usize> {
        let trie = &self.query.factors[factor].trie;
        if level == 0 {
            trie.root_range()
        } else {
            trie.child_range(level - 1, self.stacks[factor][level - 1])
        }
    }

    /// Smallest value `>= lb` present in every participant of position `k`,
    /// with the node index found in each. One aligned round over all
    /// participants certifies the match.
    fn leapfrog_next(
        &self,
        k: usize,
        lb: u32,
        ctx: &mut JoinCtx,
    ) -> Result<Option<(u32, Vec<usize>)>> {
        let mut cur = lb;
        loop {
            ctx.tick()?;
            let mut aligned = true;
            let mut nodes = Vec::with_capacity(self.participants[k].len());
            for &(fi, level) in &self.participants[k] {
                let range = self.child_range(fi, level);
                ctx.counters.seek_count += 1;
                let Some((node, value)) =
                    self.query.factors[fi].trie.seek_gallop(level, &range, cur)
                else {
                    return Ok(None);
                };
                if value > cur {
                    cur = value;
                    aligned = false;
                    break;
                }
                nodes.push(node);
            }
            if aligned {
                return Ok(Some((cur, nodes)));
            }
        }
    }

    fn emit(&mut self, ctx: &mut JoinCtx) {
        ctx.counters.emit_count += 1;
        let mut prob = 1.0;
        for (fi, qf) in self.query.factors.iter().enumerate() {
            let leaf = if qf.trie.depth() == 0 { 0 } else { *self.stacks[fi].last().unwrap() };
            prob *= qf.trie.leaf_prob(leaf);
        }
        self.tuples.push(self.bound.clone());
        self.probs.push(prob);
    }

    fn search(&mut self, k: usize, ctx: &mut JoinCtx) -> Result<()> {
        if k == self.query.bag_vars.len() {
            self.emit(ctx);
            return Ok(());
        }
        if self.participants[k].is_empty() {
            // No factor constrains this bag variable: range over its domain.
            for v in 0..self.query.cards[k] {
                ctx.tick()?;
                self.bound[k] = v;
                self.search(k + 1, ctx)?;
            }
        } else {
            let mut lb = 0u32;
            loop {
                match self.leapfrog_next(k, lb, ctx)? {
                    None => break,
                    Some((value, nodes)) => {
                        self.bound[k] = value;
                        for (&(fi, _), &node) in self.participants[k].iter().zip(&nodes) {
                            self.stacks[fi].push(node);
                        }
                        self.search(k + 1, ctx)?;
                        for &(fi, _) in &self.participants[k] {
                            self.stacks[fi].pop();
                        }
                        if value == self.query.cards[k] - 1 {
                            break;
                        }
                        lb = value + 1;
                    }
                }
            }
        }
        if k > 0 {
            ctx.counters.backtrack_count += 1;
        }
        Ok(())
    }
}

/// Worst-case-optimal multiway product: intersects the candidate values of
/// each bag variable across all containing factors, one variable at a time,
/// backtracking on exhaustion. Returns the full bag product and its
/// marginal on the free variables.
pub fn mult_fac_prod(q: &BagQuery, ctx: &mut JoinCtx) -> Result<(FactorTable, FactorTable)> {
    let scope = FactorScope::new(q.bag_vars.clone())?;
    if q.factors.iter().any(|f| f.trie.num_leaves() == 0) {
        let empty = FactorTable::from_sorted_parts(scope, q.cards.clone(), Vec::new(), Vec::new());
        let marg = marginalize(&empty, &q.free_scope())?;
        return Ok((empty, marg));
    }
    let participants = {
        let mut p: Vec<Vec<(usize, usize)>> = vec![Vec::new(); q.bag_vars.len()];
        for (fi, qf) in q.factors.iter().enumerate() {
            for (level, &pos) in qf.level_pos.iter().enumerate() {
                p[pos].push((fi, level));
            }
        }
        p
    };
    let mut state = LeapfrogState {
        query: q,
        participants,
        stacks: vec![Vec::new(); q.factors.len()],
        bound: vec![0; q.bag_vars.len()],
        tuples: Vec::new(),
        probs: Vec::new(),
    };
    state.search(0, ctx)?;
    let product =
        FactorTable::from_sorted_parts(scope, q.cards.clone(), state.tuples, state.probs);
    let marg = marginalize(&product, &q.free_scope())?;
    Ok((product, marg))
}

/// Reorder a factor's columns to `order`, re-sorting rows.
pub fn reorder_factor(f: &FactorTable, order: &[VarId]) -> Result<FactorTable> {
    marginalize(f, &FactorScope::new(order.to_vec())?)
}

/// Binary factor product: match rows on the shared variables, multiply
/// probabilities, order the union scope by bag position. Output is sorted.
pub fn binary_product(
    a: &FactorTable,
    b: &FactorTable,
    bag_pos: &HashMap<VarId, usize>,
) -> FactorTable {
    let mut union: Vec<VarId> = a.scope().vars().to_vec();
    for &v in b.scope().vars() {
        if !union.contains(&v) {
            union.push(v);
        }
    }
    union.sort_by_key(|v| bag_pos[v]);
    let scope = FactorScope::new(union.clone()).expect("union of valid scopes");

    let shared: Vec<VarId> =
        a.scope().vars().iter().copied().filter(|&v| b.scope().contains(v)).collect();
    let a_shared: Vec<usize> = shared.iter().map(|&v| a.scope().position(v).unwrap()).collect();
    let b_shared: Vec<usize> = shared.iter().map(|&v| b.scope().position(v).unwrap()).collect();

    // Where each union column comes from: (from_a, source position).
    let take: Vec<(bool, usize)> = union
        .iter()
        .map(|&v| match a.scope().position(v) {
            Some(p) => (true, p),
            None => (false, b.scope().position(v).unwrap()),
        })
        .collect();
    let cards: Vec<u32> = take
        .iter()
        .map(|&(from_a, p)| if from_a { a.cards()[p] } else { b.cards()[p] })
        .collect();

    let mut by_key: HashMap<Vec<u32>, Vec<usize>> = HashMap::new();
    for (row, tuple) in b.tuples().iter().enumerate() {
        by_key
            .entry(b_shared.iter().map(|&p| tuple[p]).collect())
            .or_default()
            .push(row);
    }

    let mut rows: Vec<(Vec<u32>, f64)> = Vec::new();
    for (ta, pa) in a.rows() {
        let key: Vec<u32> = a_shared.iter().map(|&p| ta[p]).collect();
        if let Some(matches) = by_key.get(&key) {
            for &rb in matches {
                let tb = &b.tuples()[rb];
                let merged: Vec<u32> = take
                    .iter()
                    .map(|&(from_a, p)| if from_a { ta[p] } else { tb[p] })
                    .collect();
                rows.push((merged, pa * b.probs()[rb]));
            }
        }
    }
    rows.sort_unstable_by(|x, y| x.0.cmp(&y.0));
    let (tuples, probs) = rows.into_iter().unzip();
    FactorTable::from_sorted_parts(scope, cards, tuples, probs)
}

/// Traditional pairwise product: left-fold binary products in factor-list
/// order, range over any bag variable no factor constrains, then
/// marginalize onto the free variables.
pub fn pairwise_prod(q: &BagQuery, ctx: &mut JoinCtx) -> Result<(FactorTable, FactorTable)> {
    let bag_pos: HashMap<VarId, usize> =
        q.bag_vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut product: Option<FactorTable> = None;
    for qf in &q.factors {
        ctx.tick()?;
        let reordered = reorder_factor(qf.table, qf.trie.var_order())?;
        product = Some(match product {
            None => reordered,
            Some(acc) => {
                let next = binary_product(&acc, &reordered, &bag_pos);
                ctx.counters.emit_count += next.len() as u64;
                next
            }
        });
    }
    let mut product = match product {
        Some(p) => p,
        None => {
            ctx.counters.emit_count += 1;
            FactorTable::scalar(1.0)
        }
    };
    // Expand over unconstrained bag variables.
    for (pos, &v) in q.bag_vars.iter().enumerate() {
        if !product.scope().contains(v) {
            let domain: Vec<(Vec<u32>, f64)> =
                (0..q.cards[pos]).map(|x| (vec![x], 1.0)).collect();
            let (tuples, probs) = domain.into_iter().unzip();
            let unary = FactorTable::from_sorted_parts(
                FactorScope::new(vec![v])?,
                vec![q.cards[pos]],
                tuples,
                probs,
            );
            product = binary_product(&product, &unary, &bag_pos);
        }
    }
    let full = reorder_factor(&product, &q.bag_vars)?;
    let marg = marginalize(&full, &q.free_scope())?;
    Ok((full, marg))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashOp {
    Multiply,
    Divide,
}

#[inline]
fn combine(op: HashOp, iterated: f64, hashed: f64) -> f64 {
    match op {
        HashOp::Multiply => iterated * hashed,
        HashOp::Divide => iterated / hashed,
    }
}

/// In-place style product over an index-keyed list: probe each iterated
/// entry in the hash, combine on hit, discard on miss. Output preserves the
/// iterated order; runtime is linear in the iterated length.
pub fn hash_product(
    hashed: &HashedFactor,
    iterated: &[(u64, f64)],
    op: HashOp,
) -> Vec<(u64, f64)> {
    iterated
        .iter()
        .filter_map(|&(index, prob)| hashed.get(index).map(|h| (index, combine(op, prob, h))))
        .collect()
}

/// Sort-merge counterpart of [`hash_product`]: intersect two strictly
/// sorted index lists, combining `b`'s probabilities with `a`'s (`a` plays
/// the hashed role).
pub fn sort_merge_product(
    a: &[(u64, f64)],
    b: &[(u64, f64)],
    op: HashOp,
) -> Result<Vec<(u64, f64)>> {
    for list in [a, b] {
        if list.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::UnsortedInput);
        }
    }
    let mut out = Vec::new();
    let mut i = 0;
    let mut j = 0;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push((b[j].0, combine(op, b[j].1, a[i].1)));
                i += 1;
                j += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_factor;
    use crate::storage::IndexDirection;
    use rand::prelude::*;

    fn factor(vars: &[VarId], cards: &[u32], entries: &[(&[u32], f64)]) -> FactorTable {
        make_factor(
            FactorScope::new(vars.to_vec()).unwrap(),
            cards.to_vec(),
            entries.iter().map(|(t, p)| (t.to_vec(), *p)).collect(),
        )
        .unwrap()
    }

    /// Nested-loop reference product over the full cross product of the bag
    /// domain, kept independent of the join kernels.
    fn brute_force_product(
        bag_vars: &[VarId],
        cards: &[u32],
        factors: &[&FactorTable],
    ) -> Vec<(Vec<u32>, f64)> {
        let mut out = Vec::new();
        let total: usize = cards.iter().map(|&c| c as usize).product();
        for row in 0..total {
            let mut tuple = vec![0u32; bag_vars.len()];
            let mut rest = row;
            for pos in (0..bag_vars.len()).rev() {
                tuple[pos] = (rest % cards[pos] as usize) as u32;
                rest /= cards[pos] as usize;
            }
            let mut prob = 1.0;
            let mut present = true;
            for f in factors {
                let projected: Vec<u32> = f
                    .scope()
                    .vars()
                    .iter()
                    .map(|v| tuple[bag_vars.iter().position(|b| b == v).unwrap()])
                    .collect();
                match f.tuples().iter().position(|t| *t == projected) {
                    Some(r) => prob *= f.probs()[r],
                    None => {
                        present = false;
                        break;
                    }
                }
            }
            if present {
                out.push((tuple, prob));
            }
        }
        out
    }

    fn random_factor(
        rng: &mut impl Rng,
        vars: &[VarId],
        cards: &[u32],
        density: f64,
    ) -> FactorTable {
        let size: usize = cards.iter().map(|&c| c as usize).product();
        let mut entries = Vec::new();
        for row in 0..size {
            if rng.gen_bool(density) {
                let mut tuple = vec![0u32; vars.len()];
                let mut rest = row;
                for pos in (0..vars.len()).rev() {
                    tuple[pos] = (rest % cards[pos] as usize) as u32;
                    rest /= cards[pos] as usize;
                }
                entries.push((tuple, rng.gen_range(0.01..1.0)));
            }
        }
        make_factor(FactorScope::new(vars.to_vec()).unwrap(), cards.to_vec(), entries).unwrap()
    }

    #[test]
    fn single_factor_identity_join() {
        let f = factor(&[0, 1], &[2, 2], &[(&[0, 1], 0.4), (&[1, 0], 0.6)]);
        let q = BagQuery::new(vec![0, 1], vec![2, 2], vec![&f], vec![0, 1]).unwrap();
        let mut ctx = JoinCtx::default();
        let (product, marg) = mult_fac_prod(&q, &mut ctx).unwrap();
        assert_eq!(product.tuples(), f.tuples());
        assert_eq!(product.probs(), f.probs());
        assert_eq!(marg.tuples(), f.tuples());
        assert_eq!(ctx.counters.emit_count, 2);
    }

    #[test]
    fn empty_triangle_intersection() {
        let ab = factor(&[0, 1], &[2, 2], &[(&[0, 0], 1.0)]);
        let bc = factor(&[1, 2], &[2, 2], &[(&[0, 1], 1.0)]);
        let ca = factor(&[2, 0], &[2, 2], &[(&[0, 0], 1.0)]);
        let q = BagQuery::new(vec![0, 1, 2], vec![2, 2, 2], vec![&ab, &bc, &ca], vec![0]).unwrap();
        let mut ctx = JoinCtx::default();
        let (product, _) = mult_fac_prod(&q, &mut ctx).unwrap();
        assert!(product.is_empty());
        assert_eq!(ctx.counters.emit_count, 0);
    }

    #[test]
    fn random_bags_match_nested_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        for _ in 0..50 {
            let nvars = rng.gen_range(1..=6usize);
            let bag_vars: Vec<VarId> = (0..nvars).collect();
            let cards: Vec<u32> = (0..nvars).map(|_| rng.gen_range(2..=4)).collect();
            let nfactors = rng.gen_range(1..=4usize);
            let factors: Vec<FactorTable> = (0..nfactors)
                .map(|_| {
                    let arity = rng.gen_range(1..=nvars);
                    let mut vs = bag_vars.clone();
                    vs.shuffle(&mut rng);
                    vs.truncate(arity);
                    vs.sort_unstable();
                    let cs: Vec<u32> = vs.iter().map(|&v| cards[v]).collect();
                    random_factor(&mut rng, &vs, &cs, 0.55)
                })
                .collect();
            let refs: Vec<&FactorTable> = factors.iter().collect();
            let free: Vec<VarId> =
                bag_vars.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
            let q =
                BagQuery::new(bag_vars.clone(), cards.clone(), refs.clone(), free.clone())
                    .unwrap();

            let mut ctx = JoinCtx::default();
            let (product, marg) = mult_fac_prod(&q, &mut ctx).unwrap();
            let expected = brute_force_product(&bag_vars, &cards, &refs);
            assert_eq!(product.len(), expected.len());
            for ((t, p), (et, ep)) in product.rows().zip(expected.iter()) {
                assert_eq!(t, et.as_slice());
                assert!((p - ep).abs() <= 1e-12 * ep.abs());
            }

            // Cross-kernel equivalence on the identical query.
            let mut ctx2 = JoinCtx::default();
            let (pw, pw_marg) = pairwise_prod(&q, &mut ctx2).unwrap();
            assert_eq!(pw.tuples(), product.tuples());
            for (a, b) in pw.probs().iter().zip(product.probs()) {
                assert!((a - b).abs() <= 1e-12 * b.abs());
            }
            assert_eq!(pw_marg.tuples(), marg.tuples());
            for (a, b) in pw_marg.probs().iter().zip(marg.probs()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn pairwise_single_factor_is_itself() {
        let f = factor(&[0], &[3], &[(&[0], 0.2), (&[2], 0.8)]);
        let q = BagQuery::new(vec![0], vec![3], vec![&f], vec![0]).unwrap();
        let (p, _) = pairwise_prod(&q, &mut JoinCtx::default()).unwrap();
        assert_eq!(p.tuples(), f.tuples());
        assert_eq!(p.probs(), f.probs());
    }

    #[test]
    fn pairwise_disjoint_scopes_cross_product() {
        let f = factor(&[0], &[2], &[(&[0], 0.25), (&[1], 0.75)]);
        let g = factor(&[1], &[2], &[(&[0], 0.5), (&[1], 0.5)]);
        let q = BagQuery::new(vec![0, 1], vec![2, 2], vec![&f, &g], vec![0, 1]).unwrap();
        let (p, _) = pairwise_prod(&q, &mut JoinCtx::default()).unwrap();
        assert_eq!(p.len(), 4);
        assert!((p.probs()[0] - 0.125).abs() < 1e-15);
        assert!((p.probs()[3] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn hash_product_identity_and_self_division() {
        let hashed = HashedFactor::new(
            IndexDirection::Forward,
            vec![(0u64, 1.0), (3, 1.0), (7, 1.0)],
        );
        let iterated = vec![(0u64, 0.2), (3, 0.3), (7, 0.5)];
        let out = hash_product(&hashed, &iterated, HashOp::Multiply);
        assert_eq!(out, iterated);

        let self_hash = HashedFactor::new(IndexDirection::Forward, iterated.clone());
        let out = hash_product(&self_hash, &iterated, HashOp::Divide);
        for (_, p) in out {
            assert!((p - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hash_product_discards_misses() {
        let hashed = HashedFactor::new(IndexDirection::Forward, vec![(1u64, 2.0)]);
        let iterated = vec![(0u64, 0.5), (1, 0.5)];
        let out = hash_product(&hashed, &iterated, HashOp::Multiply);
        assert_eq!(out, vec![(1, 1.0)]);
    }

    #[test]
    fn sort_merge_cases() {
        let a = vec![(0u64, 0.5), (2, 0.5)];
        let b = vec![(1u64, 0.5), (3, 0.5)];
        assert!(sort_merge_product(&a, &b, HashOp::Multiply).unwrap().is_empty());

        let sq = sort_merge_product(&a, &a, HashOp::Multiply).unwrap();
        assert_eq!(sq, vec![(0, 0.25), (2, 0.25)]);

        let unsorted = vec![(2u64, 0.1), (0, 0.2)];
        assert_eq!(
            sort_merge_product(&unsorted, &a, HashOp::Multiply).unwrap_err(),
            Error::UnsortedInput
        );
    }

    #[test]
    fn hash_and_sort_merge_agree() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(43);
        for _ in 0..200 {
            let mut keys_a: Vec<u64> = (0..rng.gen_range(1..40u64)).collect();
            keys_a.retain(|_| rng.gen_bool(0.6));
            let mut keys_b: Vec<u64> = (0..rng.gen_range(1..40u64)).collect();
            keys_b.retain(|_| rng.gen_bool(0.6));
            let a: Vec<(u64, f64)> =
                keys_a.iter().map(|&k| (k, rng.gen_range(0.01..2.0))).collect();
            let b: Vec<(u64, f64)> =
                keys_b.iter().map(|&k| (k, rng.gen_range(0.01..2.0))).collect();
            for op in [HashOp::Multiply, HashOp::Divide] {
                let hashed = HashedFactor::new(IndexDirection::Forward, a.clone());
                let via_hash = hash_product(&hashed, &b, op);
                let via_merge = sort_merge_product(&a, &b, op).unwrap();
                assert_eq!(via_hash, via_merge);
            }
        }
    }

    use crate::modelgen::sparse_triangle as adversarial_triangle;

    #[test]
    fn adversarial_triangle_separates_kernels() {
        // Multiway work stays within a fitted N^1.5 log2 N envelope while
        // the first pairwise intermediate grows quadratically.
        let mut fitted_c = 0.0;
        let mut fitted_q = 0.0;
        for (i, n) in [64usize, 256, 1024].into_iter().enumerate() {
            let (factors, card) = adversarial_triangle(n);
            let refs: Vec<&FactorTable> = factors.iter().collect();
            let q = BagQuery::new(
                vec![0, 1, 2],
                vec![card, card, card],
                refs,
                vec![0],
            )
            .unwrap();
            let mut ctx = JoinCtx::default();
            mult_fac_prod(&q, &mut ctx).unwrap();
            let work = (ctx.counters.seek_count + ctx.counters.emit_count) as f64;
            let envelope = (n as f64).powf(1.5) * (n as f64).log2();

            let bag_pos: HashMap<VarId, usize> = [(0, 0), (1, 1), (2, 2)].into_iter().collect();
            let first = binary_product(&factors[0], &factors[1], &bag_pos);
            let quad = first.len() as f64 / (n as f64 * n as f64);

            if i == 0 {
                fitted_c = work / envelope;
                fitted_q = quad;
            } else {
                assert!(work <= 2.0 * fitted_c * envelope, "n={n} work={work}");
                assert!(quad <= 2.0 * fitted_q && quad >= fitted_q / 2.0, "n={n} quad={quad}");
            }
        }
    }
}
