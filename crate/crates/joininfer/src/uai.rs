//! UAI-format input and output: `.uai` networks, `.uai.evid` evidence and
//! `.mar` marginal files.
//!
//! The grammar is whitespace-tokenized. Network tables are dense, row-major
//! with the *last* scope variable varying fastest; conversion to the sparse
//! listing representation drops zero entries.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{make_factor, FactorScope, Pgm, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkKind {
    Markov,
    Bayes,
}

/// Faithful in-memory image of a `.uai` file, zeros preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct UaiNetwork {
    pub kind: NetworkKind,
    pub cardinalities: Vec<u32>,
    pub scopes: Vec<Vec<usize>>,
    pub tables: Vec<Vec<f64>>,
}

/// Observed variable assignments from a `.uai.evid` file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    pub assignments: BTreeMap<usize, u32>,
}

impl Evidence {
    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

struct Tokens<'a> {
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        Tokens { iter: text.split_whitespace() }
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.iter.next().ok_or_else(|| Error::CountMismatch(format!("unexpected end of input, expected {what}")))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let tok = self.next(what)?;
        tok.parse().map_err(|_| Error::CountMismatch(format!("expected integer for {what}, got {tok:?}")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let tok = self.next(what)?;
        tok.parse().map_err(|_| Error::CountMismatch(format!("expected integer for {what}, got {tok:?}")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let tok = self.next(what)?;
        tok.parse().map_err(|_| Error::CountMismatch(format!("expected number for {what}, got {tok:?}")))
    }

    fn finished(&mut self) -> bool {
        self.iter.next().is_none()
    }
}

/// Parse a `.uai` network file.
pub fn parse_uai(text: &str) -> Result<UaiNetwork> {
    let mut toks = Tokens::new(text);
    let kind = match toks.next("header")? {
        "MARKOV" => NetworkKind::Markov,
        "BAYES" => NetworkKind::Bayes,
        other => return Err(Error::BadHeader(other.to_string())),
    };
    let n = toks.usize("variable count")?;
    let mut cardinalities = Vec::with_capacity(n);
    for i in 0..n {
        let c = toks.u32(&format!("cardinality of variable {i}"))?;
        if c == 0 {
            return Err(Error::ValueOutOfRange { var: i, value: 0, card: 0 });
        }
        cardinalities.push(c);
    }
    let m = toks.usize("factor count")?;
    let mut scopes = Vec::with_capacity(m);
    for i in 0..m {
        let arity = toks.usize(&format!("arity of factor {i}"))?;
        let mut scope = Vec::with_capacity(arity);
        for _ in 0..arity {
            let v = toks.usize("scope variable id")?;
            if v >= n {
                return Err(Error::ValueOutOfRange { var: v, value: v as u32, card: n as u32 });
            }
            scope.push(v);
        }
        scopes.push(scope);
    }
    let mut tables = Vec::with_capacity(m);
    for (i, scope) in scopes.iter().enumerate() {
        let count = toks.usize(&format!("entry count of table {i}"))?;
        let expected: usize = scope.iter().map(|&v| cardinalities[v] as usize).product();
        if count != expected {
            return Err(Error::CountMismatch(format!(
                "table {i}: declared {count} entries, scope product is {expected}"
            )));
        }
        let mut table = Vec::with_capacity(count);
        for _ in 0..count {
            table.push(toks.f64("table entry")?);
        }
        tables.push(table);
    }
    if !toks.finished() {
        return Err(Error::CountMismatch("trailing tokens after last table".into()));
    }
    Ok(UaiNetwork { kind, cardinalities, scopes, tables })
}

/// Serialize a network back to `.uai` text.
pub fn write_uai(net: &UaiNetwork) -> String {
    let mut out = String::new();
    out.push_str(match net.kind {
        NetworkKind::Markov => "MARKOV\n",
        NetworkKind::Bayes => "BAYES\n",
    });
    out.push_str(&format!("{}\n", net.cardinalities.len()));
    out.push_str(&join(net.cardinalities.iter()));
    out.push('\n');
    out.push_str(&format!("{}\n", net.scopes.len()));
    for scope in &net.scopes {
        out.push_str(&format!("{} {}\n", scope.len(), join(scope.iter())));
    }
    for table in &net.tables {
        out.push_str(&format!("\n{}\n", table.len()));
        out.push_str(&join(table.iter().map(|v| FmtProb(*v))));
        out.push('\n');
    }
    out
}

/// Parse a `.uai.evid` file: pair count, then variable/value pairs.
pub fn parse_evidence(text: &str) -> Result<Evidence> {
    let mut toks = Tokens::new(text);
    let count = toks.usize("evidence pair count")?;
    let mut assignments = BTreeMap::new();
    for _ in 0..count {
        let var = toks.usize("evidence variable")?;
        let value = toks.u32("evidence value")?;
        if assignments.insert(var, value).is_some() {
            return Err(Error::DuplicateVariable(var));
        }
    }
    if !toks.finished() {
        return Err(Error::CountMismatch("trailing tokens after evidence pairs".into()));
    }
    Ok(Evidence { assignments })
}

/// Convert a dense network to the sparse listing representation, decoding
/// row-major indices with the last scope variable fastest.
pub fn to_listing(net: &UaiNetwork) -> Result<Pgm> {
    let variables: Vec<Variable> = net
        .cardinalities
        .iter()
        .enumerate()
        .map(|(id, &cardinality)| Variable { id, cardinality })
        .collect();
    let mut factors = Vec::with_capacity(net.scopes.len());
    for (scope, table) in net.scopes.iter().zip(&net.tables) {
        let cards: Vec<u32> = scope.iter().map(|&v| net.cardinalities[v]).collect();
        let mut entries = Vec::new();
        for (row, &prob) in table.iter().enumerate() {
            if prob == 0.0 {
                continue;
            }
            let mut tuple = vec![0u32; scope.len()];
            let mut rest = row;
            for pos in (0..scope.len()).rev() {
                tuple[pos] = (rest % cards[pos] as usize) as u32;
                rest /= cards[pos] as usize;
            }
            entries.push((tuple, prob));
        }
        factors.push(make_factor(FactorScope::new(scope.clone())?, cards, entries)?);
    }
    Pgm::new(variables, factors)
}

/// Re-expand a listing factor back into a dense row-major table. Test and
/// round-trip helper.
pub fn to_dense(f: &crate::model::FactorTable) -> Vec<f64> {
    let size: usize = f.cards().iter().map(|&c| c as usize).product();
    let mut dense = vec![0.0; size];
    for (tuple, prob) in f.rows() {
        let mut idx = 0usize;
        for (pos, &v) in tuple.iter().enumerate() {
            idx = idx * f.cards()[pos] as usize + v as usize;
        }
        dense[idx] = prob;
    }
    dense
}

struct FmtProb(f64);

impl std::fmt::Display for FmtProb {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.12}", self.0)
    }
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|t| t.to_string()).collect::<Vec<_>>().join(" ")
}

/// Write per-variable marginal distributions in `.mar` layout: variable
/// count, then for each variable its cardinality followed by the values,
/// 12 decimal digits each.
pub fn write_marginals(marginals: &[Vec<f64>]) -> String {
    let mut out = format!("{}", marginals.len());
    for dist in marginals {
        out.push('\n');
        out.push_str(&dist.len().to_string());
        for &p in dist {
            out.push_str(&format!(" {}", FmtProb(p)));
        }
    }
    out.push('\n');
    out
}

/// Parse a `.mar` file produced by [`write_marginals`].
pub fn parse_marginals(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut toks = Tokens::new(text);
    let n = toks.usize("marginal count")?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let card = toks.usize("cardinality")?;
        let mut dist = Vec::with_capacity(card);
        for _ in 0..card {
            dist.push(toks.f64("marginal value")?);
        }
        out.push(dist);
    }
    if !toks.finished() {
        return Err(Error::CountMismatch("trailing tokens after marginals".into()));
    }
    Ok(out)
}
