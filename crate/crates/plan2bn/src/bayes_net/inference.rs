//! Exact posterior inference: a brute-force enumeration oracle and variable
//! elimination. Both apply hard evidence as indicator vectors and soft
//! evidence as multiplicative likelihoods, so the two routes share one
//! semantics and can be checked against each other.

use super::factor::Factor;
use super::{BeliefNetwork, Evidence, NetError, ENUMERATION_LIMIT};

/// Elimination-order policy. `MinDegree` is the production heuristic;
/// `Reversed` exists so tests can confirm posteriors do not depend on the
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EliminationStrategy {
    #[default]
    MinDegree,
    Reversed,
}

/// Per-variable likelihood vectors: indicator rows for hard evidence,
/// caller-supplied rows for soft. `None` for unobserved variables.
fn likelihoods(net: &BeliefNetwork, evidence: &Evidence) -> Result<Vec<Option<Vec<f64>>>, NetError> {
    evidence.check_against(net)?;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; net.variables().len()];
    for (name, outcome) in evidence.hard() {
        let idx = net.index_of(name).expect("checked");
        let var = &net.variables()[idx];
        let k = var.domain.iter().position(|o| o == outcome).expect("checked");
        let mut row = vec![0.0; var.domain.len()];
        row[k] = 1.0;
        rows[idx] = Some(row);
    }
    for (name, lik) in evidence.soft() {
        let idx = net.index_of(name).expect("checked");
        rows[idx] = Some(lik.clone());
    }
    Ok(rows)
}

fn normalized(mut dist: Vec<f64>) -> Result<Vec<f64>, NetError> {
    let total: f64 = dist.iter().sum();
    if total <= 0.0 {
        return Err(NetError::ZeroProbabilityEvidence);
    }
    for p in &mut dist {
        *p /= total;
    }
    Ok(dist)
}

/// P(query | evidence) by summing the full joint. Guarded against networks
/// larger than [`ENUMERATION_LIMIT`] variables.
pub fn posterior_by_enumeration(
    net: &BeliefNetwork,
    evidence: &Evidence,
    query: &str,
) -> Result<Vec<f64>, NetError> {
    let vars = net.variables();
    if vars.len() > ENUMERATION_LIMIT {
        return Err(NetError::TooLargeForEnumeration {
            vars: vars.len(),
            max: ENUMERATION_LIMIT,
        });
    }
    let query_idx = net
        .index_of(query)
        .ok_or_else(|| NetError::UnknownVariable(query.to_string()))?;
    let weights = likelihoods(net, evidence)?;

    let cards: Vec<usize> = vars.iter().map(|v| v.domain.len()).collect();
    // Parent index lists and row strides, so the hot loop is all integers.
    let parent_idx: Vec<Vec<usize>> = vars
        .iter()
        .map(|v| {
            v.cpt
                .parents
                .iter()
                .map(|p| net.index_of(p).expect("validated parent"))
                .collect()
        })
        .collect();
    let strides: Vec<Vec<usize>> = parent_idx
        .iter()
        .map(|ps| {
            let mut s = vec![1usize; ps.len()];
            for i in (0..ps.len().saturating_sub(1)).rev() {
                s[i] = s[i + 1] * cards[ps[i + 1]];
            }
            s
        })
        .collect();

    // Hard evidence pins its variable to a single outcome in the odometer.
    let allowed: Vec<Vec<usize>> = (0..vars.len())
        .map(|i| match &weights[i] {
            Some(row) => {
                let live: Vec<usize> =
                    (0..cards[i]).filter(|k| row[*k] > 0.0).collect();
                if live.len() == 1 { live } else { (0..cards[i]).collect() }
            }
            None => (0..cards[i]).collect(),
        })
        .collect();

    let mut dist = vec![0.0; cards[query_idx]];
    let mut pos = vec![0usize; vars.len()];
    let mut assignment: Vec<usize> = allowed.iter().map(|a| a[0]).collect();
    loop {
        let mut weight = 1.0;
        for (i, var) in vars.iter().enumerate() {
            let mut row = 0usize;
            for (j, p) in parent_idx[i].iter().enumerate() {
                row += assignment[*p] * strides[i][j];
            }
            weight *= var.cpt.rows[row][assignment[i]];
            if let Some(w) = &weights[i] {
                weight *= w[assignment[i]];
            }
            if weight == 0.0 {
                break;
            }
        }
        dist[assignment[query_idx]] += weight;

        // Advance the odometer over allowed outcome lists.
        let mut i = vars.len();
        loop {
            if i == 0 {
                return normalized(dist);
            }
            i -= 1;
            pos[i] += 1;
            if pos[i] < allowed[i].len() {
                assignment[i] = allowed[i][pos[i]];
                break;
            }
            pos[i] = 0;
            assignment[i] = allowed[i][0];
        }
    }
}

/// P(query | evidence) by variable elimination with the default
/// [`EliminationStrategy::MinDegree`] order.
pub fn posterior_by_elimination(
    net: &BeliefNetwork,
    evidence: &Evidence,
    query: &str,
) -> Result<Vec<f64>, NetError> {
    posterior_by_elimination_with(net, evidence, query, EliminationStrategy::MinDegree)
}

/// Variable elimination with an explicit order policy.
pub fn posterior_by_elimination_with(
    net: &BeliefNetwork,
    evidence: &Evidence,
    query: &str,
    strategy: EliminationStrategy,
) -> Result<Vec<f64>, NetError> {
    let vars = net.variables();
    let query_idx = net
        .index_of(query)
        .ok_or_else(|| NetError::UnknownVariable(query.to_string()))?;
    let weights = likelihoods(net, evidence)?;

    let mut factors: Vec<Factor> = Vec::with_capacity(vars.len() * 2);
    for (i, _) in vars.iter().enumerate() {
        factors.push(cpt_factor(net, i));
    }
    for (i, w) in weights.iter().enumerate() {
        if let Some(row) = w {
            factors.push(Factor::unary(i, row.clone()));
        }
    }

    let order = match strategy {
        EliminationStrategy::MinDegree => None,
        EliminationStrategy::Reversed => {
            let mut names: Vec<usize> = (0..vars.len()).filter(|i| *i != query_idx).collect();
            names.sort_by(|a, b| vars[*b].name.cmp(&vars[*a].name));
            Some(names)
        }
    };

    let mut remaining: Vec<usize> = (0..vars.len()).filter(|i| *i != query_idx).collect();
    while !remaining.is_empty() {
        let victim = match &order {
            Some(fixed) => fixed[fixed.len() - remaining.len()],
            None => min_degree_pick(&remaining, &factors, vars),
        };
        remaining.retain(|v| *v != victim);

        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors
            .into_iter()
            .partition(|f| f.scope().contains(&victim));
        factors = rest;
        if touching.is_empty() {
            continue;
        }
        let mut product = touching[0].clone();
        for f in &touching[1..] {
            product = product.product(f);
        }
        factors.push(product.sum_out(victim));
    }

    let mut result = Factor::constant(1.0);
    for f in &factors {
        result = result.product(f);
    }
    debug_assert_eq!(result.scope(), &[query_idx]);
    normalized(result.values().to_vec())
}

/// Min-degree over the current factor interaction graph, ties broken by
/// variable name so the order is reproducible.
fn min_degree_pick(
    remaining: &[usize],
    factors: &[Factor],
    vars: &[super::RandomVariable],
) -> usize {
    let mut best: Option<(usize, usize)> = None;
    for &v in remaining {
        let mut neighbors: Vec<usize> = Vec::new();
        for f in factors {
            if f.scope().contains(&v) {
                for &u in f.scope() {
                    if u != v && !neighbors.contains(&u) {
                        neighbors.push(u);
                    }
                }
            }
        }
        let degree = neighbors.len();
        let better = match best {
            None => true,
            Some((bd, bv)) => {
                degree < bd || (degree == bd && vars[v].name < vars[bv].name)
            }
        };
        if better {
            best = Some((degree, v));
        }
    }
    best.expect("remaining is non-empty").1
}

/// CPT of variable `i` as a factor over sorted scope (parents and self).
fn cpt_factor(net: &BeliefNetwork, i: usize) -> Factor {
    let vars = net.variables();
    let var = &vars[i];
    let parent_idx: Vec<usize> = var
        .cpt
        .parents
        .iter()
        .map(|p| net.index_of(p).expect("validated parent"))
        .collect();

    let mut scope: Vec<usize> = parent_idx.iter().copied().chain([i]).collect();
    scope.sort_unstable();
    let cards: Vec<usize> = scope.iter().map(|v| vars[*v].domain.len()).collect();

    // Row stride per parent (declared order, first most significant), then
    // fill by walking every scope assignment.
    let mut row_strides = vec![1usize; parent_idx.len()];
    for k in (0..parent_idx.len().saturating_sub(1)).rev() {
        row_strides[k] = row_strides[k + 1] * vars[parent_idx[k + 1]].domain.len();
    }

    let size: usize = cards.iter().product();
    let mut values = Vec::with_capacity(size);
    let mut assignment = vec![0usize; scope.len()];
    for _ in 0..size {
        let lookup = |v: usize| assignment[scope.iter().position(|s| *s == v).unwrap()];
        let row: usize = parent_idx
            .iter()
            .zip(&row_strides)
            .map(|(p, s)| lookup(*p) * s)
            .sum();
        values.push(var.cpt.rows[row][lookup(i)]);
        for pos in (0..scope.len()).rev() {
            assignment[pos] += 1;
            if assignment[pos] < cards[pos] {
                break;
            }
            assignment[pos] = 0;
        }
    }
    Factor::new(scope, cards, values)
}
