//! Factor representations used by the kernels: mixed-radix index encodings,
//! level-order tries, indexed lists and hashed factors.
//!
//! A level-order trie flattens the conventional multi-level trie into
//! contiguous per-level arrays in CSR style: `values[l]` holds the node
//! values of level `l` grouped by parent, and `child_start[l]` holds, per
//! node, the offset of its child range in the next level (with a trailing
//! sentinel). Leaf probabilities align with the last level.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{FactorScope, FactorTable, VarId};

pub const MAX_INDEX: u64 = i64::MAX as u64; // 2^63 - 1

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexDirection {
    /// First variable most significant.
    Forward,
    /// Last variable most significant.
    Reverse,
}

/// Product of the cardinalities, or `IndexOverflow` if it exceeds 2^63 - 1.
pub fn radix_product(cards: &[u32]) -> Result<u64> {
    let mut product: u64 = 1;
    for &c in cards {
        product = product.checked_mul(c as u64).ok_or(Error::IndexOverflow)?;
        if product > MAX_INDEX {
            return Err(Error::IndexOverflow);
        }
    }
    Ok(product)
}

/// Encode a tuple as a single mixed-radix integer.
pub fn encode_index(tuple: &[u32], cards: &[u32], direction: IndexDirection) -> Result<u64> {
    radix_product(cards)?;
    debug_assert_eq!(tuple.len(), cards.len());
    let mut index: u64 = 0;
    match direction {
        IndexDirection::Forward => {
            for (&v, &c) in tuple.iter().zip(cards) {
                index = index * c as u64 + v as u64;
            }
        }
        IndexDirection::Reverse => {
            for (&v, &c) in tuple.iter().zip(cards).rev() {
                index = index * c as u64 + v as u64;
            }
        }
    }
    Ok(index)
}

/// Exact inverse of [`encode_index`].
pub fn decode_index(mut index: u64, cards: &[u32], direction: IndexDirection) -> Vec<u32> {
    let mut tuple = vec![0u32; cards.len()];
    match direction {
        IndexDirection::Forward => {
            for pos in (0..cards.len()).rev() {
                tuple[pos] = (index % cards[pos] as u64) as u32;
                index /= cards[pos] as u64;
            }
        }
        IndexDirection::Reverse => {
            for pos in 0..cards.len() {
                tuple[pos] = (index % cards[pos] as u64) as u32;
                index /= cards[pos] as u64;
            }
        }
    }
    tuple
}

/// Multi-level trie flattened into per-level contiguous arrays.
#[derive(Debug, Clone)]
pub struct LevelOrderTrie {
    var_order: Vec<VarId>,
    cards: Vec<u32>,
    /// Node values per level, grouped by parent, strictly increasing within
    /// each parent's child range.
    values: Vec<Vec<u32>>,
    /// Per level below the last: child range starts into the next level,
    /// one entry per node plus a sentinel.
    child_start: Vec<Vec<u32>>,
    /// Probabilities aligned with the nodes of the last level; a scalar trie
    /// (zero levels) stores its single mass here.
    leaf_probs: Vec<f64>,
}

impl LevelOrderTrie {
    pub fn var_order(&self) -> &[VarId] {
        &self.var_order
    }

    pub fn cards(&self) -> &[u32] {
        &self.cards
    }

    pub fn depth(&self) -> usize {
        self.var_order.len()
    }

    pub fn num_leaves(&self) -> usize {
        self.leaf_probs.len()
    }

    pub fn leaf_prob(&self, leaf: usize) -> f64 {
        self.leaf_probs[leaf]
    }

    pub fn value(&self, level: usize, node: usize) -> u32 {
        self.values[level][node]
    }

    /// Child range of the virtual root, i.e. all nodes of level 0.
    pub fn root_range(&self) -> std::ops::Range<usize> {
        if self.values.is_empty() {
            0..0
        } else {
            0..self.values[0].len()
        }
    }

    /// Child range of `node` (a node index at `level`) in level `level + 1`.
    pub fn child_range(&self, level: usize, node: usize) -> std::ops::Range<usize> {
        let starts = &self.child_start[level];
        starts[node] as usize..starts[node + 1] as usize
    }

    /// Smallest node in `range` at `level` whose value is `>= bound`,
    /// found by exponential probing then binary search within the bracketed
    /// window. Returns the node index and its value.
    pub fn seek_gallop(
        &self,
        level: usize,
        range: &std::ops::Range<usize>,
        bound: u32,
    ) -> Option<(usize, u32)> {
        let values = &self.values[level][range.start..range.end];
        let n = values.len();
        if n == 0 || values[n - 1] < bound {
            return None;
        }
        if values[0] >= bound {
            return Some((range.start, values[0]));
        }
        // Invariant: values[lo] < bound <= values[hi].
        let mut lo = 0usize;
        let mut step = 1usize;
        while step < n && values[(lo + step).min(n - 1)] < bound {
            lo += step;
            step <<= 1;
        }
        let mut hi = (lo + step).min(n - 1);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if values[mid] < bound {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some((range.start + hi, values[hi]))
    }

    /// Enumerate all stored tuples with their probabilities, in sorted order.
    pub fn enumerate(&self) -> Vec<(Vec<u32>, f64)> {
        let mut out = Vec::with_capacity(self.num_leaves());
        if self.depth() == 0 {
            for &p in &self.leaf_probs {
                out.push((Vec::new(), p));
            }
            return out;
        }
        let mut path: Vec<(usize, std::ops::Range<usize>)> = vec![(0, self.root_range())];
        let mut tuple: Vec<u32> = Vec::with_capacity(self.depth());
        while let Some((level, range)) = path.last_mut() {
            let level = *level;
            if range.start >= range.end {
                path.pop();
                tuple.pop();
                continue;
            }
            let node = range.start;
            range.start += 1;
            tuple.push(self.values[level][node]);
            if level + 1 == self.depth() {
                out.push((tuple.clone(), self.leaf_probs[node]));
                tuple.pop();
            } else {
                path.push((level + 1, self.child_range(level, node)));
            }
        }
        out
    }
}

/// Build a level-order trie over `var_order` (a permutation of the factor
/// scope). Tuples are reordered, sorted once by their forward index under
/// the new order, then all levels are emitted in a single pass.
pub fn build_trie(factor: &FactorTable, var_order: &[VarId]) -> Result<LevelOrderTrie> {
    let perm: Vec<usize> = var_order
        .iter()
        .map(|&v| factor.scope().position(v).ok_or(Error::InconsistentOrder))
        .collect::<Result<_>>()?;
    if perm.len() != factor.scope().arity() {
        return Err(Error::InconsistentOrder);
    }
    let cards: Vec<u32> = perm.iter().map(|&p| factor.cards()[p]).collect();
    radix_product(&cards)?;

    let mut keyed: Vec<(u64, usize)> = Vec::with_capacity(factor.len());
    for (row, tuple) in factor.tuples().iter().enumerate() {
        let reordered: Vec<u32> = perm.iter().map(|&p| tuple[p]).collect();
        keyed.push((encode_index(&reordered, &cards, IndexDirection::Forward)?, row));
    }
    keyed.sort_unstable_by_key(|&(key, _)| key);
    build_trie_from_sorted_keys(factor, var_order, cards, &keyed)
}

/// Same trie, but sorted by per-tuple lexicographic comparison instead of the
/// packed integer key. Kept as the baseline side of the construction
/// benchmark; `build_trie` is the indexed fast path.
pub fn build_trie_lexsort(factor: &FactorTable, var_order: &[VarId]) -> Result<LevelOrderTrie> {
    let perm: Vec<usize> = var_order
        .iter()
        .map(|&v| factor.scope().position(v).ok_or(Error::InconsistentOrder))
        .collect::<Result<_>>()?;
    if perm.len() != factor.scope().arity() {
        return Err(Error::InconsistentOrder);
    }
    let cards: Vec<u32> = perm.iter().map(|&p| factor.cards()[p]).collect();
    radix_product(&cards)?;

    let mut rows: Vec<(Vec<u32>, usize)> = factor
        .tuples()
        .iter()
        .enumerate()
        .map(|(row, tuple)| (perm.iter().map(|&p| tuple[p]).collect(), row))
        .collect();
    rows.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let keyed: Vec<(u64, usize)> = rows
        .iter()
        .map(|(t, row)| Ok((encode_index(t, &cards, IndexDirection::Forward)?, *row)))
        .collect::<Result<_>>()?;
    build_trie_from_sorted_keys(factor, var_order, cards, &keyed)
}

fn build_trie_from_sorted_keys(
    factor: &FactorTable,
    var_order: &[VarId],
    cards: Vec<u32>,
    keyed: &[(u64, usize)],
) -> Result<LevelOrderTrie> {
    let depth = var_order.len();
    let mut values: Vec<Vec<u32>> = vec![Vec::new(); depth];
    let mut child_start: Vec<Vec<u32>> = vec![Vec::new(); depth.saturating_sub(1)];
    let mut leaf_probs: Vec<f64> = Vec::with_capacity(keyed.len());

    if depth == 0 {
        // Scalar factor: zero levels, the mass lives in the leaf slot.
        if let Some(&(_, row)) = keyed.first() {
            leaf_probs.push(factor.probs()[row]);
        }
        return Ok(LevelOrderTrie { var_order: Vec::new(), cards, values, child_start, leaf_probs });
    }

    let mut prev: Option<Vec<u32>> = None;
    for &(key, row) in keyed {
        let tuple = decode_index(key, &cards, IndexDirection::Forward);
        // First level where this tuple diverges from the previous one.
        let split = match &prev {
            None => 0,
            Some(p) => {
                let pos = p.iter().zip(&tuple).position(|(a, b)| a != b);
                pos.ok_or_else(|| Error::DuplicateTuple(tuple.clone()))?
            }
        };
        for level in split..depth {
            if level < depth - 1 {
                child_start[level].push(values[level + 1].len() as u32);
            }
            values[level].push(tuple[level]);
        }
        leaf_probs.push(factor.probs()[row]);
        prev = Some(tuple);
    }
    // Sentinels close the final child ranges.
    for level in 0..depth.saturating_sub(1) {
        child_start[level].push(values[level + 1].len() as u32);
    }
    Ok(LevelOrderTrie { var_order: var_order.to_vec(), cards, values, child_start, leaf_probs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ListVariant {
    /// `(reverse index, probability)` pairs sorted by reverse index.
    ReverseOnly,
    /// `(forward index, reverse index, probability)` triples for
    /// intermediary messages.
    Dual,
}

/// Factor stored as mixed-radix indices plus probabilities.
#[derive(Debug, Clone)]
pub struct IndexedList {
    pub variant: ListVariant,
    /// Ordered cardinalities defining the encoding.
    pub radix: Vec<u32>,
    /// `(forward, reverse, prob)`; forward is 0 for `ReverseOnly`.
    pub entries: Vec<(u64, u64, f64)>,
}

impl IndexedList {
    /// Encode a factor's rows. `ReverseOnly` lists come out sorted by
    /// reverse index; `Dual` lists keep the factor's sorted tuple order,
    /// which is forward-index order.
    pub fn from_factor(factor: &FactorTable, variant: ListVariant) -> Result<IndexedList> {
        let radix = factor.cards().to_vec();
        radix_product(&radix)?;
        let mut entries = Vec::with_capacity(factor.len());
        for (tuple, prob) in factor.rows() {
            let reverse = encode_index(tuple, &radix, IndexDirection::Reverse)?;
            let forward = match variant {
                ListVariant::ReverseOnly => 0,
                ListVariant::Dual => encode_index(tuple, &radix, IndexDirection::Forward)?,
            };
            entries.push((forward, reverse, prob));
        }
        if variant == ListVariant::ReverseOnly {
            entries.sort_unstable_by_key(|&(_, rev, _)| rev);
        }
        Ok(IndexedList { variant, radix, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Hash map from index to probability; the keyed direction is recorded so
/// both operands of a product agree on the key space.
#[derive(Debug, Clone)]
pub struct HashedFactor {
    pub direction: IndexDirection,
    map: HashMap<u64, f64>,
}

impl HashedFactor {
    pub fn new(direction: IndexDirection, entries: impl IntoIterator<Item = (u64, f64)>) -> Self {
        HashedFactor { direction, map: entries.into_iter().collect() }
    }

    pub fn get(&self, index: u64) -> Option<f64> {
        self.map.get(&index).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Rebuild the sorted listing factor that an indexed list encodes.
pub fn list_to_factor(list: &IndexedList, scope: &FactorScope) -> Result<FactorTable> {
    let mut rows: Vec<(Vec<u32>, f64)> = list
        .entries
        .iter()
        .map(|&(_, rev, prob)| (decode_index(rev, &list.radix, IndexDirection::Reverse), prob))
        .collect();
    rows.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let (tuples, probs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(FactorTable::from_sorted_parts(scope.clone(), list.radix.clone(), tuples, probs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_factor;
    use rand::prelude::*;

    fn factor(vars: &[VarId], cards: &[u32], entries: &[(&[u32], f64)]) -> FactorTable {
        make_factor(
            FactorScope::new(vars.to_vec()).unwrap(),
            cards.to_vec(),
            entries.iter().map(|(t, p)| (t.to_vec(), *p)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn encode_zero_tuple() {
        let cards = [3, 4, 5];
        assert_eq!(encode_index(&[0, 0, 0], &cards, IndexDirection::Forward).unwrap(), 0);
        assert_eq!(encode_index(&[0, 0, 0], &cards, IndexDirection::Reverse).unwrap(), 0);
    }

    #[test]
    fn encode_mixed_radix_example() {
        let cards = [2, 3];
        assert_eq!(encode_index(&[1, 0], &cards, IndexDirection::Forward).unwrap(), 3);
        assert_eq!(encode_index(&[1, 0], &cards, IndexDirection::Reverse).unwrap(), 1);
    }

    #[test]
    fn encode_decode_round_trip_forty_binary_vars() {
        let cards = vec![2u32; 40];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let tuple: Vec<u32> = (0..40).map(|_| rng.gen_range(0..2)).collect();
            for dir in [IndexDirection::Forward, IndexDirection::Reverse] {
                let idx = encode_index(&tuple, &cards, dir).unwrap();
                assert_eq!(decode_index(idx, &cards, dir), tuple);
            }
        }
    }

    #[test]
    fn reverse_equals_forward_of_reversed_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let arity = rng.gen_range(1..6usize);
            let cards: Vec<u32> = (0..arity).map(|_| rng.gen_range(2..6)).collect();
            let tuple: Vec<u32> = cards.iter().map(|&c| rng.gen_range(0..c)).collect();
            let rev = encode_index(&tuple, &cards, IndexDirection::Reverse).unwrap();
            let mut rcards = cards.clone();
            rcards.reverse();
            let mut rtuple = tuple.clone();
            rtuple.reverse();
            let fwd = encode_index(&rtuple, &rcards, IndexDirection::Forward).unwrap();
            assert_eq!(rev, fwd);
        }
    }

    #[test]
    fn overflow_detection_is_exact() {
        // 2^63 exactly exceeds the bound; 2^63 - 1 does not.
        let cards_over = vec![2u32; 63];
        assert_eq!(radix_product(&cards_over).unwrap_err(), Error::IndexOverflow);
        let mut cards_ok = vec![2u32; 62];
        assert_eq!(radix_product(&cards_ok).unwrap(), 1u64 << 62);
        cards_ok.push(1);
        assert!(radix_product(&cards_ok).is_ok());
    }

    #[test]
    fn trie_single_row() {
        let f = factor(&[0, 1, 2], &[2, 2, 2], &[(&[1, 0, 1], 0.5)]);
        let trie = build_trie(&f, &[0, 1, 2]).unwrap();
        assert_eq!(trie.num_leaves(), 1);
        assert_eq!(trie.enumerate(), vec![(vec![1, 0, 1], 0.5)]);
    }

    #[test]
    fn trie_full_table_structure() {
        let f = factor(
            &[0, 1],
            &[2, 2],
            &[(&[0, 0], 0.1), (&[0, 1], 0.2), (&[1, 0], 0.3), (&[1, 1], 0.4)],
        );
        let trie = build_trie(&f, &[0, 1]).unwrap();
        assert_eq!(trie.root_range(), 0..2);
        assert_eq!(trie.value(0, 0), 0);
        assert_eq!(trie.value(0, 1), 1);
        assert_eq!(trie.child_range(0, 0), 0..2);
        assert_eq!(trie.child_range(0, 1), 2..4);
        assert_eq!(trie.leaf_prob(3), 0.4);
    }

    #[test]
    fn trie_reordered_enumeration_matches_sorted_listing() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        for _ in 0..1000 {
            let arity = rng.gen_range(1..5usize);
            let cards: Vec<u32> = (0..arity).map(|_| rng.gen_range(2..5)).collect();
            let vars: Vec<VarId> = (0..arity).collect();
            let size: usize = cards.iter().map(|&c| c as usize).product();
            let mut entries = Vec::new();
            for row in 0..size {
                if rng.gen_bool(0.45) {
                    let mut tuple = vec![0u32; arity];
                    let mut rest = row;
                    for pos in (0..arity).rev() {
                        tuple[pos] = (rest % cards[pos] as usize) as u32;
                        rest /= cards[pos] as usize;
                    }
                    entries.push((tuple, rng.gen_range(0.01..1.0f64)));
                }
            }
            let f = make_factor(FactorScope::new(vars.clone()).unwrap(), cards.clone(), entries)
                .unwrap();
            let mut order = vars.clone();
            order.shuffle(&mut rng);
            let trie = build_trie(&f, &order).unwrap();
            let lex = build_trie_lexsort(&f, &order).unwrap();

            let perm: Vec<usize> = order.iter().map(|&v| f.scope().position(v).unwrap()).collect();
            let mut expected: Vec<(Vec<u32>, f64)> = f
                .rows()
                .map(|(t, p)| (perm.iter().map(|&i| t[i]).collect(), p))
                .collect();
            expected.sort_unstable_by(|a, b| a.0.cmp(&b.0));
            assert_eq!(trie.enumerate(), expected);
            assert_eq!(lex.enumerate(), expected);
        }
    }

    #[test]
    fn trie_rejects_inconsistent_order() {
        let f = factor(&[0, 1], &[2, 2], &[(&[0, 0], 1.0)]);
        assert_eq!(build_trie(&f, &[0, 3]).unwrap_err(), Error::InconsistentOrder);
        assert_eq!(build_trie(&f, &[0]).unwrap_err(), Error::InconsistentOrder);
    }

    #[test]
    fn seek_gallop_boundaries() {
        let f = factor(&[0], &[10], &[(&[2], 0.1), (&[5], 0.2), (&[9], 0.3)]);
        let trie = build_trie(&f, &[0]).unwrap();
        let range = trie.root_range();
        assert_eq!(trie.seek_gallop(0, &range, 0), Some((0, 2)));
        assert_eq!(trie.seek_gallop(0, &range, 2), Some((0, 2)));
        assert_eq!(trie.seek_gallop(0, &range, 3), Some((1, 5)));
        assert_eq!(trie.seek_gallop(0, &range, 10), None);
    }

    #[test]
    fn seek_gallop_matches_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let len = rng.gen_range(1..200usize);
            let mut vals: Vec<u32> =
                (0..len).map(|_| rng.gen_range(0..10_000u32)).collect();
            vals.sort_unstable();
            vals.dedup();
            let entries: Vec<(Vec<u32>, f64)> = vals.iter().map(|&v| (vec![v], 1.0)).collect();
            let f = make_factor(FactorScope::new(vec![0]).unwrap(), vec![10_000], entries)
                .unwrap();
            let trie = build_trie(&f, &[0]).unwrap();
            let range = trie.root_range();
            for _ in 0..100 {
                let bound = rng.gen_range(0..10_001u32);
                let expected = vals.iter().copied().find(|&v| v >= bound);
                assert_eq!(trie.seek_gallop(0, &range, bound).map(|(_, v)| v), expected);
            }
        }
    }

    #[test]
    fn indexed_list_variants() {
        let f = factor(&[0, 1], &[2, 3], &[(&[0, 2], 0.3), (&[1, 0], 0.5), (&[1, 2], 0.2)]);
        let rev = IndexedList::from_factor(&f, ListVariant::ReverseOnly).unwrap();
        assert!(rev.entries.windows(2).all(|w| w[0].1 < w[1].1));
        let dual = IndexedList::from_factor(&f, ListVariant::Dual).unwrap();
        for &(fwd, rv, _) in &dual.entries {
            let t = decode_index(fwd, &dual.radix, IndexDirection::Forward);
            assert_eq!(encode_index(&t, &dual.radix, IndexDirection::Reverse).unwrap(), rv);
        }
        let back = list_to_factor(&rev, f.scope()).unwrap();
        assert_eq!(back.tuples(), f.tuples());
    }

    #[test]
    fn scalar_trie() {
        let f = FactorTable::scalar(0.75);
        let trie = build_trie(&f, &[]).unwrap();
        assert_eq!(trie.depth(), 0);
        assert_eq!(trie.num_leaves(), 1);
        assert_eq!(trie.enumerate(), vec![(vec![], 0.75)]);
    }
}
