//! Domain types for variables, factors and models, plus the pure factor
//! algebra everything else is built on: marginalization and 01-projection
//! over sparse listing-representation tables.
//!
//! A factor stores only its strictly positive entries as sorted tuples.
//! All types are immutable after construction and safe to share across
//! threads.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub type VarId = usize;

/// A discrete random variable: dense id plus domain size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variable {
    pub id: VarId,
    pub cardinality: u32,
}

/// Ordered list of distinct variable ids a factor is defined over.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactorScope {
    vars: Vec<VarId>,
}

impl FactorScope {
    pub fn new(vars: Vec<VarId>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for &v in &vars {
            if !seen.insert(v) {
                return Err(Error::Invalid(format!("duplicate variable {v} in scope")));
            }
        }
        Ok(FactorScope { vars })
    }

    /// Empty scope, used by scalar factors.
    pub fn empty() -> Self {
        FactorScope { vars: Vec::new() }
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn arity(&self) -> usize {
        self.vars.len()
    }

    pub fn position(&self, var: VarId) -> Option<usize> {
        self.vars.iter().position(|&v| v == var)
    }

    pub fn contains(&self, var: VarId) -> bool {
        self.vars.contains(&var)
    }
}

/// Sparse listing representation of a factor: sorted tuples with strictly
/// positive probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorTable {
    scope: FactorScope,
    cards: Vec<u32>,
    tuples: Vec<Vec<u32>>,
    probs: Vec<f64>,
}

impl FactorTable {
    pub fn scope(&self) -> &FactorScope {
        &self.scope
    }

    /// Cardinalities aligned with the scope order.
    pub fn cards(&self) -> &[u32] {
        &self.cards
    }

    pub fn tuples(&self) -> &[Vec<u32>] {
        &self.tuples
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Support size N.
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.tuples.iter().map(|t| t.as_slice()).zip(self.probs.iter().copied())
    }

    /// Sum of all stored probabilities.
    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Full domain size of the scope as a float (may exceed u64).
    pub fn domain_product(&self) -> f64 {
        self.cards.iter().map(|&c| c as f64).product()
    }

    /// Scalar factor over the empty scope, holding a single mass value.
    pub fn scalar(value: f64) -> Self {
        FactorTable {
            scope: FactorScope::empty(),
            cards: Vec::new(),
            tuples: if value != 0.0 { vec![Vec::new()] } else { Vec::new() },
            probs: if value != 0.0 { vec![value] } else { Vec::new() },
        }
    }

    /// Construct a table from raw parts that are already sorted, deduplicated
    /// and strictly positive. Used by kernels that produce sorted output.
    pub(crate) fn from_sorted_parts(
        scope: FactorScope,
        cards: Vec<u32>,
        tuples: Vec<Vec<u32>>,
        probs: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(tuples.len(), probs.len());
        debug_assert!(tuples.windows(2).all(|w| w[0] < w[1]));
        FactorTable { scope, cards, tuples, probs }
    }
}

/// Build a factor from `(tuple, prob)` entries, enforcing the listing
/// representation: zero entries are dropped, values range-checked, tuples
/// sorted; a duplicate tuple is an error.
pub fn make_factor(
    scope: FactorScope,
    cards: Vec<u32>,
    entries: Vec<(Vec<u32>, f64)>,
) -> Result<FactorTable> {
    if cards.len() != scope.arity() {
        return Err(Error::ScopeMismatch { expected: scope.arity(), got: cards.len() });
    }
    let mut rows: Vec<(Vec<u32>, f64)> = Vec::with_capacity(entries.len());
    for (tuple, prob) in entries {
        if tuple.len() != scope.arity() {
            return Err(Error::ScopeMismatch { expected: scope.arity(), got: tuple.len() });
        }
        for (pos, &value) in tuple.iter().enumerate() {
            if value >= cards[pos] {
                return Err(Error::ValueOutOfRange {
                    var: scope.vars()[pos],
                    value,
                    card: cards[pos],
                });
            }
        }
        if prob < 0.0 {
            return Err(Error::NegativeProbability(prob));
        }
        if prob == 0.0 {
            continue;
        }
        rows.push((tuple, prob));
    }
    rows.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::DuplicateTuple(w[0].0.clone()));
        }
    }
    let (tuples, probs) = rows.into_iter().unzip();
    Ok(FactorTable { scope, cards, tuples, probs })
}

/// Support size divided by the full domain product; in (0, 1] for nonempty
/// factors.
pub fn factor_sparsity(f: &FactorTable) -> f64 {
    f.len() as f64 / f.domain_product()
}

/// Sum out every scope variable not in `keep`. `keep` may reorder the
/// retained variables and may be empty, which yields a scalar factor.
/// Probabilities of tuples with equal projection are accumulated in the
/// input's sorted row order, so the result is deterministic bit-for-bit.
pub fn marginalize(f: &FactorTable, keep: &FactorScope) -> Result<FactorTable> {
    let positions: Vec<usize> = keep
        .vars()
        .iter()
        .map(|&v| f.scope.position(v).ok_or(Error::KeepNotSubset))
        .collect::<Result<_>>()?;
    if positions.len() == f.scope.arity() && positions.iter().enumerate().all(|(i, &p)| i == p) {
        return Ok(f.clone());
    }
    let cards: Vec<u32> = positions.iter().map(|&p| f.cards[p]).collect();

    let mut acc: Vec<(Vec<u32>, f64)> = Vec::new();
    let mut index: std::collections::HashMap<Vec<u32>, usize> = std::collections::HashMap::new();
    for (tuple, prob) in f.rows() {
        let projected: Vec<u32> = positions.iter().map(|&p| tuple[p]).collect();
        match index.get(&projected) {
            Some(&slot) => acc[slot].1 += prob,
            None => {
                index.insert(projected.clone(), acc.len());
                acc.push((projected, prob));
            }
        }
    }
    acc.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let (tuples, probs) = acc.into_iter().unzip();
    Ok(FactorTable { scope: keep.clone(), cards, tuples, probs })
}

/// 01-projection of `f` onto the variable set `onto`: the support of `f`
/// projected onto `scope(f) ∩ onto`, every surviving tuple with probability
/// exactly 1.0.
pub fn zero_one_projection(f: &FactorTable, onto: &BTreeSet<VarId>) -> Result<FactorTable> {
    let positions: Vec<usize> = f
        .scope
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| onto.contains(v))
        .map(|(p, _)| p)
        .collect();
    if positions.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let scope = FactorScope::new(positions.iter().map(|&p| f.scope.vars()[p]).collect())
        .expect("projection of a valid scope is valid");
    let cards: Vec<u32> = positions.iter().map(|&p| f.cards[p]).collect();

    let mut support: BTreeSet<Vec<u32>> = BTreeSet::new();
    for (tuple, _) in f.rows() {
        support.insert(positions.iter().map(|&p| tuple[p]).collect());
    }
    let tuples: Vec<Vec<u32>> = support.into_iter().collect();
    let probs = vec![1.0; tuples.len()];
    Ok(FactorTable { scope, cards, tuples, probs })
}

/// A discrete graphical model: variables, sparse factors, and a scalar
/// constant absorbing factors whose scope was emptied by conditioning.
#[derive(Debug, Clone)]
pub struct Pgm {
    pub variables: Vec<Variable>,
    pub factors: Vec<FactorTable>,
    pub constant: f64,
}

impl Pgm {
    pub fn new(variables: Vec<Variable>, factors: Vec<FactorTable>) -> Result<Self> {
        for var in &variables {
            if var.cardinality == 0 {
                return Err(Error::Invalid(format!("variable {} has cardinality 0", var.id)));
            }
        }
        for f in &factors {
            for &v in f.scope().vars() {
                if v >= variables.len() {
                    return Err(Error::Invalid(format!("factor references unknown variable {v}")));
                }
            }
        }
        Ok(Pgm { variables, factors, constant: 1.0 })
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn cardinality(&self, var: VarId) -> u32 {
        self.variables[var].cardinality
    }

    /// Joint domain size as a float.
    pub fn joint_size(&self) -> f64 {
        self.variables.iter().map(|v| v.cardinality as f64).product()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn factor(
        vars: &[VarId],
        cards: &[u32],
        entries: &[(&[u32], f64)],
    ) -> FactorTable {
        make_factor(
            FactorScope::new(vars.to_vec()).unwrap(),
            cards.to_vec(),
            entries.iter().map(|(t, p)| (t.to_vec(), *p)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn make_factor_basic() {
        let f = factor(&[0], &[2], &[(&[0], 0.3), (&[1], 0.7)]);
        assert_eq!(f.len(), 2);
        assert_eq!(f.probs(), &[0.3, 0.7]);
    }

    #[test]
    fn make_factor_drops_zeros() {
        let f = factor(&[0], &[2], &[(&[0], 0.0), (&[1], 1.0)]);
        assert_eq!(f.len(), 1);
        assert_eq!(f.tuples(), &[vec![1]]);
    }

    #[test]
    fn make_factor_duplicate_is_error() {
        let err = make_factor(
            FactorScope::new(vec![0]).unwrap(),
            vec![2],
            vec![(vec![0], 0.5), (vec![0], 0.5)],
        )
        .unwrap_err();
        assert_eq!(err, Error::DuplicateTuple(vec![0]));
    }

    #[test]
    fn make_factor_range_and_sign_checks() {
        let scope = FactorScope::new(vec![0]).unwrap();
        assert!(matches!(
            make_factor(scope.clone(), vec![2], vec![(vec![2], 0.5)]),
            Err(Error::ValueOutOfRange { .. })
        ));
        assert!(matches!(
            make_factor(scope, vec![2], vec![(vec![0], -0.1)]),
            Err(Error::NegativeProbability(_))
        ));
    }

    #[test]
    fn sparsity_full_and_half() {
        let full = factor(
            &[0, 1],
            &[2, 2],
            &[(&[0, 0], 0.1), (&[0, 1], 0.2), (&[1, 0], 0.3), (&[1, 1], 0.4)],
        );
        assert_eq!(factor_sparsity(&full), 1.0);
        let half = factor(&[0, 1], &[2, 2], &[(&[0, 0], 0.1), (&[1, 1], 0.4)]);
        assert_eq!(factor_sparsity(&half), 0.5);
    }

    #[test]
    fn sparsity_celar_like() {
        // 44-valued pairwise factor with 387 surviving rows: 387/1936.
        let entries: Vec<(Vec<u32>, f64)> =
            (0..387).map(|i| (vec![(i / 44) as u32, (i % 44) as u32], 1.0)).collect();
        let f = make_factor(FactorScope::new(vec![0, 1]).unwrap(), vec![44, 44], entries).unwrap();
        let s = factor_sparsity(&f);
        assert!((s - 387.0 / 1936.0).abs() < 1e-12);
        assert!((s - 0.1999).abs() < 1e-4);
    }

    #[test]
    fn marginalize_symmetric() {
        let f = factor(
            &[0, 1],
            &[2, 2],
            &[(&[0, 0], 0.25), (&[0, 1], 0.25), (&[1, 0], 0.25), (&[1, 1], 0.25)],
        );
        let m = marginalize(&f, &FactorScope::new(vec![0]).unwrap()).unwrap();
        assert_eq!(m.tuples(), &[vec![0], vec![1]]);
        assert_eq!(m.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn marginalize_identity() {
        let f = factor(&[0, 1], &[2, 3], &[(&[0, 2], 0.5), (&[1, 0], 0.5)]);
        let m = marginalize(&f, &FactorScope::new(vec![0, 1]).unwrap()).unwrap();
        assert_eq!(m, f);
    }

    #[test]
    fn marginalize_brute_force_example() {
        // Expected values computed by direct summation over matching tuples.
        let f = factor(&[0, 1], &[2, 2], &[(&[0, 0], 0.1), (&[0, 1], 0.2), (&[1, 0], 0.3)]);
        let m = marginalize(&f, &FactorScope::new(vec![1]).unwrap()).unwrap();
        assert_eq!(m.tuples(), &[vec![0], vec![1]]);
        assert!((m.probs()[0] - 0.4).abs() < 1e-15);
        assert!((m.probs()[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn marginalize_not_subset() {
        let f = factor(&[0], &[2], &[(&[0], 1.0)]);
        assert_eq!(
            marginalize(&f, &FactorScope::new(vec![1]).unwrap()).unwrap_err(),
            Error::KeepNotSubset
        );
    }

    #[test]
    fn marginalize_to_scalar() {
        let f = factor(&[0], &[2], &[(&[0], 0.3), (&[1], 0.7)]);
        let m = marginalize(&f, &FactorScope::empty()).unwrap();
        assert_eq!(m.scope().arity(), 0);
        assert_eq!(m.len(), 1);
        assert!((m.probs()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_one_projection_example() {
        // Support {(0,0,0),(0,0,1),(1,1,0)} over (B,C,D) projected onto {B,C}.
        let f = factor(
            &[1, 2, 3],
            &[2, 2, 2],
            &[(&[0, 0, 0], 0.2), (&[0, 0, 1], 0.3), (&[1, 1, 0], 0.5)],
        );
        let onto: BTreeSet<VarId> = [1, 2].into_iter().collect();
        let p = zero_one_projection(&f, &onto).unwrap();
        assert_eq!(p.scope().vars(), &[1, 2]);
        assert_eq!(p.tuples(), &[vec![0, 0], vec![1, 1]]);
        assert_eq!(p.probs(), &[1.0, 1.0]);
    }

    #[test]
    fn zero_one_projection_superset_keeps_support() {
        let f = factor(&[0, 1], &[2, 2], &[(&[0, 1], 0.4), (&[1, 0], 0.6)]);
        let onto: BTreeSet<VarId> = [0, 1, 5].into_iter().collect();
        let p = zero_one_projection(&f, &onto).unwrap();
        assert_eq!(p.tuples(), f.tuples());
        assert!(p.probs().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_one_projection_dense_stays_dense() {
        let f = factor(
            &[0, 1],
            &[2, 2],
            &[(&[0, 0], 0.1), (&[0, 1], 0.2), (&[1, 0], 0.3), (&[1, 1], 0.4)],
        );
        let onto: BTreeSet<VarId> = [1].into_iter().collect();
        let p = zero_one_projection(&f, &onto).unwrap();
        assert_eq!(p.len(), 2);
        assert!((factor_sparsity(&p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_one_projection_empty_intersection() {
        let f = factor(&[0], &[2], &[(&[0], 1.0)]);
        let onto: BTreeSet<VarId> = [3].into_iter().collect();
        assert_eq!(zero_one_projection(&f, &onto).unwrap_err(), Error::EmptyIntersection);
    }

    #[test]
    fn mass_preserved_and_composition() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let cards = [2 + rng.gen_range(0..3), 2 + rng.gen_range(0..3), 2];
            let mut entries = Vec::new();
            for a in 0..cards[0] {
                for b in 0..cards[1] {
                    for c in 0..cards[2] {
                        if rng.gen_bool(0.6) {
                            entries.push((vec![a, b, c], rng.gen_range(0.01..1.0)));
                        }
                    }
                }
            }
            let f = make_factor(
                FactorScope::new(vec![0, 1, 2]).unwrap(),
                cards.to_vec(),
                entries,
            )
            .unwrap();
            let k1 = FactorScope::new(vec![0, 2]).unwrap();
            let k2 = FactorScope::new(vec![2]).unwrap();
            let m1 = marginalize(&f, &k1).unwrap();
            let total = f.total_mass();
            assert!((m1.total_mass() - total).abs() <= 1e-12 * total.abs().max(1.0));
            let twice = marginalize(&m1, &k2).unwrap();
            let once = marginalize(&f, &k2).unwrap();
            assert_eq!(twice.tuples(), once.tuples());
            for (a, b) in twice.probs().iter().zip(once.probs()) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}
