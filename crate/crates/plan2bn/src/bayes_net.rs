//! Discrete belief networks: variables with conditional probability tables
//! over a DAG, hard/soft evidence, exact posterior inference, and DOT
//! export.
//!
//! Construction keeps the graph acyclic on every mutation. CPT rows are
//! stored row-major over parent assignments in declared parent order (first
//! parent most significant, last varies fastest), outcomes in domain order;
//! file round-trips depend on this layout and must not change it.

mod factor;
mod inference;

pub use factor::Factor;
pub use inference::{
    posterior_by_elimination, posterior_by_elimination_with, posterior_by_enumeration,
    EliminationStrategy,
};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Numeric tolerance for row normalization and posterior comparisons.
pub const TOLERANCE: f64 = 1e-9;

/// Enumeration refuses networks larger than this (joint table blowup).
pub const ENUMERATION_LIMIT: usize = 25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("variable {0} already exists")]
    DuplicateVariable(String),
    #[error("variable {0} does not exist")]
    UnknownVariable(String),
    #[error("variable {var} has no outcome {outcome}")]
    UnknownOutcome { var: String, outcome: String },
    #[error("variable {0} needs at least two outcomes")]
    DomainTooSmall(String),
    #[error("variable {var} repeats outcome {outcome}")]
    DuplicateOutcome { var: String, outcome: String },
    #[error("arc {from} -> {to} already exists")]
    DuplicateArc { from: String, to: String },
    #[error("arc {from} -> {to} would close the cycle {}", path.join(" -> "))]
    CycleIntroduced { from: String, to: String, path: Vec<String> },
    #[error("network contains a directed cycle")]
    CycleDetected,
    #[error("bad cpt for {var}: {reason}")]
    BadCpt { var: String, reason: String },
    #[error("bad evidence on {var}: {reason}")]
    BadEvidence { var: String, reason: String },
    #[error("evidence has zero probability under the network")]
    ZeroProbabilityEvidence,
    #[error("{vars} variables exceed the enumeration limit of {max}")]
    TooLargeForEnumeration { vars: usize, max: usize },
}

/// Role an arc plays in the compiled plan structure. Metadata only:
/// inference treats every arc identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcKind {
    Subaction,
    Temporal,
    Context,
    Inhibitory,
    Evidence,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub from: String,
    pub to: String,
    pub kind: ArcKind,
}

/// Conditional probability table. `rows[r][k]` is the probability of the
/// k-th domain outcome given the r-th parent assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    pub parents: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomVariable {
    pub name: String,
    pub domain: Vec<String>,
    pub cpt: Cpt,
}

impl RandomVariable {
    pub fn outcome_index(&self, outcome: &str) -> Option<usize> {
        self.domain.iter().position(|o| o == outcome)
    }
}

fn uniform_row(len: usize) -> Vec<f64> {
    vec![1.0 / len as f64; len]
}

fn check_row(var: &str, row: &[f64], domain_len: usize) -> Result<(), NetError> {
    if row.len() != domain_len {
        return Err(NetError::BadCpt {
            var: var.to_string(),
            reason: format!("row has {} entries, domain has {domain_len}", row.len()),
        });
    }
    for p in row {
        if !p.is_finite() || *p < 0.0 || *p > 1.0 {
            return Err(NetError::BadCpt {
                var: var.to_string(),
                reason: format!("entry {p} outside [0, 1]"),
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > TOLERANCE {
        return Err(NetError::BadCpt {
            var: var.to_string(),
            reason: format!("row sums to {sum}"),
        });
    }
    Ok(())
}

/// A directed acyclic network of discrete variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BeliefNetwork {
    variables: Vec<RandomVariable>,
    index: BTreeMap<String, usize>,
    arcs: Vec<Arc>,
}

impl BeliefNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn variables(&self) -> &[RandomVariable] {
        &self.variables
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn variable(&self, name: &str) -> Option<&RandomVariable> {
        self.index_of(name).map(|i| &self.variables[i])
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    /// Adds a root variable with a uniform prior.
    pub fn add_variable<S: Into<String>>(
        &mut self,
        name: S,
        domain: Vec<String>,
    ) -> Result<(), NetError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NetError::DuplicateVariable(name));
        }
        if domain.len() < 2 {
            return Err(NetError::DomainTooSmall(name));
        }
        for (i, o) in domain.iter().enumerate() {
            if domain[..i].contains(o) {
                return Err(NetError::DuplicateOutcome { var: name, outcome: o.clone() });
            }
        }
        let cpt = Cpt { parents: Vec::new(), rows: vec![uniform_row(domain.len())] };
        self.index.insert(name.clone(), self.variables.len());
        self.variables.push(RandomVariable { name, domain, cpt });
        Ok(())
    }

    /// Adds an arc and reshapes the child's CPT: the new parent is appended
    /// last (varies fastest) and every existing row is replicated across its
    /// outcomes, so posteriors are unchanged until rows are overwritten.
    pub fn add_arc(&mut self, from: &str, to: &str, kind: ArcKind) -> Result<(), NetError> {
        let Some(_) = self.index_of(from) else {
            return Err(NetError::UnknownVariable(from.to_string()));
        };
        let Some(to_idx) = self.index_of(to) else {
            return Err(NetError::UnknownVariable(to.to_string()));
        };
        if self.arcs.iter().any(|a| a.from == from && a.to == to) {
            return Err(NetError::DuplicateArc { from: from.to_string(), to: to.to_string() });
        }
        if from == to {
            return Err(NetError::CycleIntroduced {
                from: from.to_string(),
                to: to.to_string(),
                path: vec![from.to_string(), to.to_string()],
            });
        }
        if let Some(mut path) = self.directed_path(to, from) {
            let mut full = vec![from.to_string()];
            full.append(&mut path);
            return Err(NetError::CycleIntroduced {
                from: from.to_string(),
                to: to.to_string(),
                path: full,
            });
        }

        let parent_card = self.variable(from).unwrap().domain.len();
        let child = &mut self.variables[to_idx];
        child.cpt.parents.push(from.to_string());
        let mut rows = Vec::with_capacity(child.cpt.rows.len() * parent_card);
        for row in &child.cpt.rows {
            for _ in 0..parent_card {
                rows.push(row.clone());
            }
        }
        child.cpt.rows = rows;
        self.arcs.push(Arc { from: from.to_string(), to: to.to_string(), kind });
        Ok(())
    }

    /// Directed path from `start` to `goal` following arcs, if one exists.
    fn directed_path(&self, start: &str, goal: &str) -> Option<Vec<String>> {
        let mut stack = vec![vec![start.to_string()]];
        let mut seen = std::collections::BTreeSet::new();
        while let Some(path) = stack.pop() {
            let here = path.last().unwrap().clone();
            if here == goal {
                return Some(path);
            }
            if !seen.insert(here.clone()) {
                continue;
            }
            for arc in self.arcs.iter().rev() {
                if arc.from == here {
                    let mut next = path.clone();
                    next.push(arc.to.clone());
                    stack.push(next);
                }
            }
        }
        None
    }

    /// Replaces the child's whole table. Row count and shape must match the
    /// declared parents and domain.
    pub fn set_cpt_rows(&mut self, var: &str, rows: Vec<Vec<f64>>) -> Result<(), NetError> {
        let idx = self
            .index_of(var)
            .ok_or_else(|| NetError::UnknownVariable(var.to_string()))?;
        let expected = self.row_count(idx);
        if rows.len() != expected {
            return Err(NetError::BadCpt {
                var: var.to_string(),
                reason: format!("{} rows given, {expected} required", rows.len()),
            });
        }
        let domain_len = self.variables[idx].domain.len();
        for row in &rows {
            check_row(var, row, domain_len)?;
        }
        self.variables[idx].cpt.rows = rows;
        Ok(())
    }

    /// Overwrites a single row by index.
    pub fn set_cpt_row(&mut self, var: &str, row: usize, dist: Vec<f64>) -> Result<(), NetError> {
        let idx = self
            .index_of(var)
            .ok_or_else(|| NetError::UnknownVariable(var.to_string()))?;
        let count = self.variables[idx].cpt.rows.len();
        if row >= count {
            return Err(NetError::BadCpt {
                var: var.to_string(),
                reason: format!("row {row} out of range ({count} rows)"),
            });
        }
        check_row(var, &dist, self.variables[idx].domain.len())?;
        self.variables[idx].cpt.rows[row] = dist;
        Ok(())
    }

    fn row_count(&self, idx: usize) -> usize {
        self.variables[idx]
            .cpt
            .parents
            .iter()
            .map(|p| self.variable(p).map(|v| v.domain.len()).unwrap_or(0))
            .product()
    }

    /// Row index for a full parent assignment given as outcome labels in
    /// declared parent order.
    pub fn cpt_row_index(&self, var: &str, parent_outcomes: &[&str]) -> Result<usize, NetError> {
        let v = self
            .variable(var)
            .ok_or_else(|| NetError::UnknownVariable(var.to_string()))?;
        if parent_outcomes.len() != v.cpt.parents.len() {
            return Err(NetError::BadCpt {
                var: var.to_string(),
                reason: format!(
                    "{} parent outcomes given, {} parents declared",
                    parent_outcomes.len(),
                    v.cpt.parents.len()
                ),
            });
        }
        let mut row = 0usize;
        for (parent, outcome) in v.cpt.parents.iter().zip(parent_outcomes) {
            let p = self.variable(parent).expect("parents exist");
            let k = p.outcome_index(outcome).ok_or_else(|| NetError::UnknownOutcome {
                var: parent.clone(),
                outcome: outcome.to_string(),
            })?;
            row = row * p.domain.len() + k;
        }
        Ok(row)
    }

    pub fn parents(&self, var: &str) -> Vec<&str> {
        self.variable(var)
            .map(|v| v.cpt.parents.iter().map(String::as_str).collect())
            .unwrap_or_default()
    }

    pub fn children(&self, var: &str) -> Vec<&str> {
        self.arcs
            .iter()
            .filter(|a| a.from == var)
            .map(|a| a.to.as_str())
            .collect()
    }

    /// Indices in a topological order (parents before children), stable with
    /// respect to insertion order.
    pub fn topological_order(&self) -> Result<Vec<usize>, NetError> {
        let n = self.variables.len();
        let mut in_deg = vec![0usize; n];
        for arc in &self.arcs {
            in_deg[self.index_of(&arc.to).ok_or(NetError::CycleDetected)?] += 1;
        }
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|i| in_deg[*i] == 0).collect();
        while let Some(i) = ready.first().copied() {
            ready.remove(0);
            order.push(i);
            for arc in &self.arcs {
                if arc.from == self.variables[i].name {
                    let c = self.index_of(&arc.to).unwrap();
                    in_deg[c] -= 1;
                    if in_deg[c] == 0 {
                        ready.push(c);
                        ready.sort_unstable();
                    }
                }
            }
        }
        if order.len() != n {
            return Err(NetError::CycleDetected);
        }
        Ok(order)
    }

    /// Full consistency check, for networks reassembled from files.
    pub fn validate(&self) -> Result<(), NetError> {
        for (i, v) in self.variables.iter().enumerate() {
            if self.index.get(&v.name) != Some(&i) {
                return Err(NetError::DuplicateVariable(v.name.clone()));
            }
            if v.domain.len() < 2 {
                return Err(NetError::DomainTooSmall(v.name.clone()));
            }
            for (k, o) in v.domain.iter().enumerate() {
                if v.domain[..k].contains(o) {
                    return Err(NetError::DuplicateOutcome {
                        var: v.name.clone(),
                        outcome: o.clone(),
                    });
                }
            }
            for (k, p) in v.cpt.parents.iter().enumerate() {
                if self.variable(p).is_none() {
                    return Err(NetError::UnknownVariable(p.clone()));
                }
                if v.cpt.parents[..k].contains(p) {
                    return Err(NetError::DuplicateArc { from: p.clone(), to: v.name.clone() });
                }
            }
            let expected = self.row_count(i);
            if v.cpt.rows.len() != expected {
                return Err(NetError::BadCpt {
                    var: v.name.clone(),
                    reason: format!("{} rows stored, {expected} required", v.cpt.rows.len()),
                });
            }
            for row in &v.cpt.rows {
                check_row(&v.name, row, v.domain.len())?;
            }
        }
        for (k, arc) in self.arcs.iter().enumerate() {
            let child = self
                .variable(&arc.to)
                .ok_or_else(|| NetError::UnknownVariable(arc.to.clone()))?;
            if self.variable(&arc.from).is_none() {
                return Err(NetError::UnknownVariable(arc.from.clone()));
            }
            if !child.cpt.parents.contains(&arc.from) {
                return Err(NetError::BadCpt {
                    var: arc.to.clone(),
                    reason: format!("arc from {} not reflected in parents", arc.from),
                });
            }
            if self.arcs[..k].iter().any(|a| a.from == arc.from && a.to == arc.to) {
                return Err(NetError::DuplicateArc { from: arc.from.clone(), to: arc.to.clone() });
            }
        }
        for v in &self.variables {
            let arc_parents =
                self.arcs.iter().filter(|a| a.to == v.name).count();
            if arc_parents != v.cpt.parents.len() {
                return Err(NetError::BadCpt {
                    var: v.name.clone(),
                    reason: format!(
                        "{} parents declared, {arc_parents} arcs point here",
                        v.cpt.parents.len()
                    ),
                });
            }
        }
        self.topological_order()?;
        Ok(())
    }

    /// Reassembles a network from parts (file loading); fully validated.
    pub fn from_parts(variables: Vec<RandomVariable>, arcs: Vec<Arc>) -> Result<Self, NetError> {
        let mut index = BTreeMap::new();
        for (i, v) in variables.iter().enumerate() {
            if index.insert(v.name.clone(), i).is_some() {
                return Err(NetError::DuplicateVariable(v.name.clone()));
            }
        }
        let net = BeliefNetwork { variables, index, arcs };
        net.validate()?;
        Ok(net)
    }

    /// P(query | evidence) via variable elimination.
    pub fn posterior(&self, evidence: &Evidence, query: &str) -> Result<Vec<f64>, NetError> {
        posterior_by_elimination(self, evidence, query)
    }

    /// Graphviz rendering. Arc styling by kind: subaction plain solid,
    /// inhibitory dashed, temporal heavy dashed, context heavy solid,
    /// evidence dotted. Output is deterministic (insertion order).
    pub fn to_dot(&self) -> String {
        fn quote(s: &str) -> String {
            format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
        }
        let mut out = String::from("digraph plan_bn {\n");
        for v in &self.variables {
            out.push_str(&format!("  {};\n", quote(&v.name)));
        }
        for arc in &self.arcs {
            let style = match arc.kind {
                ArcKind::Subaction => "solid",
                ArcKind::Inhibitory => "dashed",
                ArcKind::Temporal => "dashed,bold",
                ArcKind::Context => "bold",
                ArcKind::Evidence => "dotted",
            };
            out.push_str(&format!(
                "  {} -> {} [style=\"{}\"];\n",
                quote(&arc.from),
                quote(&arc.to),
                style
            ));
        }
        out.push_str("}\n");
        out
    }
}

/// Observed findings to condition on: hard outcomes and soft likelihood
/// vectors. A variable carries at most one of the two.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evidence {
    hard: BTreeMap<String, String>,
    soft: BTreeMap<String, Vec<f64>>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.hard.is_empty() && self.soft.is_empty()
    }

    /// Pins `var` to `outcome`, displacing any soft likelihood on it.
    pub fn set_hard<S: Into<String>, T: Into<String>>(&mut self, var: S, outcome: T) {
        let var = var.into();
        self.soft.remove(&var);
        self.hard.insert(var, outcome.into());
    }

    /// Attaches a likelihood vector, displacing any hard outcome on `var`.
    pub fn set_soft<S: Into<String>>(&mut self, var: S, likelihood: Vec<f64>) {
        let var = var.into();
        self.hard.remove(&var);
        self.soft.insert(var, likelihood);
    }

    pub fn remove(&mut self, var: &str) {
        self.hard.remove(var);
        self.soft.remove(var);
    }

    pub fn get_hard(&self, var: &str) -> Option<&str> {
        self.hard.get(var).map(String::as_str)
    }

    pub fn get_soft(&self, var: &str) -> Option<&[f64]> {
        self.soft.get(var).map(Vec::as_slice)
    }

    pub fn hard(&self) -> impl Iterator<Item = (&String, &String)> {
        self.hard.iter()
    }

    pub fn soft(&self) -> impl Iterator<Item = (&String, &Vec<f64>)> {
        self.soft.iter()
    }

    /// Validates every entry against the network's variables and domains.
    pub fn check_against(&self, net: &BeliefNetwork) -> Result<(), NetError> {
        for (name, outcome) in &self.hard {
            let var = net
                .variable(name)
                .ok_or_else(|| NetError::UnknownVariable(name.clone()))?;
            if var.outcome_index(outcome).is_none() {
                return Err(NetError::UnknownOutcome {
                    var: name.clone(),
                    outcome: outcome.clone(),
                });
            }
        }
        for (name, lik) in &self.soft {
            let var = net
                .variable(name)
                .ok_or_else(|| NetError::UnknownVariable(name.clone()))?;
            if lik.len() != var.domain.len() {
                return Err(NetError::BadEvidence {
                    var: name.clone(),
                    reason: format!(
                        "likelihood has {} entries, domain has {}",
                        lik.len(),
                        var.domain.len()
                    ),
                });
            }
            if lik.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(NetError::BadEvidence {
                    var: name.clone(),
                    reason: "likelihood entries must be finite and non-negative".into(),
                });
            }
            if lik.iter().all(|p| *p == 0.0) {
                return Err(NetError::BadEvidence {
                    var: name.clone(),
                    reason: "likelihood is all zero".into(),
                });
            }
        }
        Ok(())
    }
}
