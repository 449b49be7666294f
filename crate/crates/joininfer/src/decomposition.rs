//! Hypertree decomposition: MinFill elimination ordering, junction tree
//! construction over the maximal elimination cliques, factor-to-bag
//! assignment, and the treewidth / fractional hypertree width measures.

use std::collections::BTreeSet;

use crate::error::Result;
use crate::lp::fractional_cover;
use crate::model::{Pgm, VarId};

/// Rooted decomposition. Bags are variable sets `chi`; `lambda` holds the
/// factor ids whose scope labels the bag, and `alpha` the factors assigned
/// to it for bag products. Each input factor is its own hyperedge, so
/// `lambda == alpha` by construction; both views are kept because they play
/// different roles downstream.
#[derive(Debug, Clone)]
pub struct Ghd {
    /// Parent index per node; the root maps to itself.
    pub parent: Vec<usize>,
    /// Bag variable sets, each sorted by global elimination position.
    pub chi: Vec<Vec<VarId>>,
    /// Edge labels: factor ids with scope covered by and labeling this bag.
    pub lambda: Vec<Vec<usize>>,
    /// Factor assignment: every factor id appears in exactly one bag.
    pub alpha: Vec<Vec<usize>>,
    pub root: usize,
}

impl Ghd {
    pub fn num_nodes(&self) -> usize {
        self.chi.len()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&w| w != self.root && self.parent[w] == v).collect()
    }

    /// Nodes grouped by depth, root first.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut depth = vec![0usize; self.num_nodes()];
        let mut order: Vec<usize> = vec![self.root];
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for w in self.children(v) {
                depth[w] = depth[v] + 1;
                order.push(w);
            }
        }
        let max_depth = depth.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); max_depth + 1];
        for v in order {
            levels[depth[v]].push(v);
        }
        levels
    }

    pub fn separator(&self, child: usize) -> Vec<VarId> {
        let parent_set: BTreeSet<VarId> = self.chi[self.parent[child]].iter().copied().collect();
        self.chi[child].iter().copied().filter(|v| parent_set.contains(v)).collect()
    }
}

/// Undirected primal (moral) graph of the model as adjacency sets.
fn primal_graph(pgm: &Pgm) -> Vec<BTreeSet<VarId>> {
    let mut adj = vec![BTreeSet::new(); pgm.num_vars()];
    for f in &pgm.factors {
        let vars = f.scope().vars();
        for (i, &a) in vars.iter().enumerate() {
            for &b in &vars[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    adj
}

fn fill_count(adj: &[BTreeSet<VarId>], v: VarId, alive: &[bool]) -> usize {
    let nbrs: Vec<VarId> = adj[v].iter().copied().filter(|&u| alive[u]).collect();
    let mut fills = 0;
    for (i, &a) in nbrs.iter().enumerate() {
        for &b in &nbrs[i + 1..] {
            if !adj[a].contains(&b) {
                fills += 1;
            }
        }
    }
    fills
}

/// Greedy MinFill elimination order; ties broken by lowest variable id.
pub fn min_fill_order(pgm: &Pgm) -> Vec<VarId> {
    let n = pgm.num_vars();
    let mut adj = primal_graph(pgm);
    let mut alive = vec![true; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(usize, VarId)> = None;
        for v in 0..n {
            if !alive[v] {
                continue;
            }
            let fills = fill_count(&adj, v, &alive);
            if best.is_none_or(|(bf, _)| fills < bf) {
                best = Some((fills, v));
            }
        }
        let (_, v) = best.expect("some variable is alive");
        // Eliminate: connect all remaining neighbors pairwise.
        let nbrs: Vec<VarId> = adj[v].iter().copied().filter(|&u| alive[u]).collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        alive[v] = false;
        order.push(v);
    }
    order
}

/// Build the rooted junction tree for the given elimination order.
///
/// Bags are the maximal elimination cliques; the tree is a maximum spanning
/// tree on pairwise bag intersections (Prim, ties by lowest node id), rooted
/// at the lowest-id bag containing the last-eliminated variable. Every
/// factor is assigned (both in `lambda` and `alpha`) to the lowest-id bag
/// covering its scope.
pub fn build_junction_tree(pgm: &Pgm, order: &[VarId]) -> Ghd {
    let n = pgm.num_vars();
    debug_assert_eq!(order.len(), n);
    let mut position = vec![0usize; n];
    for (pos, &v) in order.iter().enumerate() {
        position[v] = pos;
    }

    // Variables appearing in no factor have no hyperedge to cover and are
    // left out of the decomposition; inference reports them as uniform.
    let mut occurs = vec![false; n];
    for f in &pgm.factors {
        for &v in f.scope().vars() {
            occurs[v] = true;
        }
    }

    // Elimination cliques on the fill graph, in elimination order.
    let mut adj = primal_graph(pgm);
    let mut alive = vec![true; n];
    let mut cliques: Vec<BTreeSet<VarId>> = Vec::new();
    for &v in order {
        let mut clique: BTreeSet<VarId> =
            adj[v].iter().copied().filter(|&u| alive[u]).collect();
        clique.insert(v);
        let nbrs: Vec<VarId> = adj[v].iter().copied().filter(|&u| alive[u]).collect();
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        alive[v] = false;
        if occurs[v] {
            cliques.push(clique);
        }
    }

    // Keep maximal cliques, preserving elimination order for determinism.
    let mut bags: Vec<BTreeSet<VarId>> = Vec::new();
    for (i, c) in cliques.iter().enumerate() {
        let maximal = !cliques
            .iter()
            .enumerate()
            .any(|(j, other)| j != i && c.is_subset(other) && (other.len() > c.len() || j < i));
        if maximal {
            bags.push(c.clone());
        }
    }
    if bags.is_empty() {
        bags.push(BTreeSet::new());
    }
    let b = bags.len();

    // Maximum spanning tree on |chi_i ∩ chi_j| via Prim from bag 0.
    let mut in_tree = vec![false; b];
    let mut link = vec![0usize; b];
    let mut weight = vec![-1isize; b];
    in_tree[0] = true;
    for j in 1..b {
        weight[j] = bags[0].intersection(&bags[j]).count() as isize;
        link[j] = 0;
    }
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for _ in 1..b {
        let mut pick = None;
        for j in 0..b {
            if !in_tree[j] && pick.is_none_or(|p: usize| weight[j] > weight[p]) {
                pick = Some(j);
            }
        }
        let j = pick.expect("a bag remains");
        in_tree[j] = true;
        edges.push((link[j], j));
        for k in 0..b {
            if !in_tree[k] {
                let w = bags[j].intersection(&bags[k]).count() as isize;
                if w > weight[k] {
                    weight[k] = w;
                    link[k] = j;
                }
            }
        }
    }

    // Root at the lowest-id bag containing the last-eliminated covered
    // variable.
    let root = order
        .iter()
        .rev()
        .find(|&&v| occurs[v])
        .and_then(|&last| (0..b).find(|&i| bags[i].contains(&last)))
        .unwrap_or(0);
    let mut adj_bags = vec![Vec::new(); b];
    for &(u, v) in &edges {
        adj_bags[u].push(v);
        adj_bags[v].push(u);
    }
    let mut parent = vec![usize::MAX; b];
    parent[root] = root;
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        for &w in &adj_bags[v] {
            if parent[w] == usize::MAX {
                parent[w] = v;
                stack.push(w);
            }
        }
    }

    // Bag variable order: global elimination position, so parent and child
    // agree on separator order and tries never need re-sorting.
    let chi: Vec<Vec<VarId>> = bags
        .iter()
        .map(|bag| {
            let mut vars: Vec<VarId> = bag.iter().copied().collect();
            vars.sort_by_key(|&v| position[v]);
            vars
        })
        .collect();

    let mut lambda = vec![Vec::new(); b];
    let mut alpha = vec![Vec::new(); b];
    for (fid, f) in pgm.factors.iter().enumerate() {
        let scope: BTreeSet<VarId> = f.scope().vars().iter().copied().collect();
        let bag = (0..b)
            .find(|&i| scope.is_subset(&bags[i]))
            .expect("every factor scope is a clique of the fill graph");
        lambda[bag].push(fid);
        alpha[bag].push(fid);
    }

    Ghd { parent, chi, lambda, alpha, root }
}

/// Treewidth under the modified convention (max bag size, no `-1`) and
/// fractional hypertree width (max over bags of the all-ones-weight cover).
pub fn compute_widths(ghd: &Ghd, pgm: &Pgm) -> Result<(usize, f64)> {
    let tw = ghd.chi.iter().map(|c| c.len()).max().unwrap_or(0);
    let edges: Vec<(Vec<VarId>, f64)> =
        pgm.factors.iter().map(|f| (f.scope().vars().to_vec(), 1.0)).collect();
    let mut fhtw: f64 = 0.0;
    for chi in &ghd.chi {
        if chi.is_empty() {
            continue;
        }
        let cover = fractional_cover(chi, &edges)?;
        fhtw = fhtw.max(cover.objective);
    }
    Ok((tw, fhtw))
}

/// Check the decomposition properties: every factor scope covered by its
/// labeled bag, running intersection for every variable, and `alpha`
/// partitioning the factor ids. Test and stats helper.
pub fn validate_ghd(ghd: &Ghd, pgm: &Pgm) -> std::result::Result<(), String> {
    let b = ghd.num_nodes();
    let mut assigned = vec![0usize; pgm.factors.len()];
    for v in 0..b {
        let bag: BTreeSet<VarId> = ghd.chi[v].iter().copied().collect();
        for &fid in &ghd.lambda[v] {
            let scope: BTreeSet<VarId> =
                pgm.factors[fid].scope().vars().iter().copied().collect();
            if !scope.is_subset(&bag) {
                return Err(format!("factor {fid} not covered by bag {v}"));
            }
        }
        for &fid in &ghd.alpha[v] {
            assigned[fid] += 1;
        }
    }
    for (fid, &count) in assigned.iter().enumerate() {
        if count != 1 {
            return Err(format!("factor {fid} assigned to {count} bags"));
        }
    }
    // Running intersection: the bags containing each variable form a subtree.
    for var in 0..pgm.num_vars() {
        let holders: Vec<usize> =
            (0..b).filter(|&v| ghd.chi[v].contains(&var)).collect();
        if holders.len() <= 1 {
            continue;
        }
        let set: BTreeSet<usize> = holders.iter().copied().collect();
        let start = holders[0];
        let mut seen = BTreeSet::new();
        seen.insert(start);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            let mut nbrs = ghd.children(v);
            if v != ghd.root {
                nbrs.push(ghd.parent[v]);
            }
            for w in nbrs {
                if set.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        if seen.len() != holders.len() {
            return Err(format!("variable {var} violates running intersection"));
        }
    }
    Ok(())
}
