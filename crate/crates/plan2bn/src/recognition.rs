//! Incremental plan recognition over a compiled network.
//!
//! A [`RecognitionSession`] holds the network, accumulates timestamped
//! observations as evidence, and after each one reports the posterior over a
//! set of tracked goal variables. Observations commit only if inference
//! succeeds, so a rejected observation leaves the session untouched, and any
//! observation can later be retracted, which replays the survivors.

use crate::bayes_net::{BeliefNetwork, Evidence, NetError, TOLERANCE};
use crate::compiler::{goal_variables, variable_role, VarRole, VariableMap};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecognitionError {
    #[error("unknown observation target {0}")]
    UnknownTarget(String),
    #[error("target {target} is ambiguous; candidates: {}", candidates.join(", "))]
    AmbiguousTarget { target: String, candidates: Vec<String> },
    #[error("observation at t={t} does not advance the clock past t={last}")]
    StaleObservation { t: u64, last: u64 },
    #[error("variable {var} already has evidence; retract it first")]
    ConflictingEvidence { var: String },
    #[error("combined likelihood for {var} is zero on every outcome")]
    VanishingLikelihood { var: String },
    #[error("no observation recorded at t={0}")]
    NoSuchObservation(u64),
    #[error("cannot track {0}: not a goal variable")]
    NotAGoal(String),
    #[error("observation line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Net(#[from] NetError),
}

/// One timestamped sensor or oracle report. Hard observations pin a variable
/// to an outcome; soft ones supply a likelihood over its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub t: u64,
    pub target: String,
    pub kind: ObservationKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObservationKind {
    Outcome(String),
    Likelihood(Vec<f64>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationDoc {
    t: u64,
    target: String,
    value: Option<String>,
    likelihood: Option<Vec<f64>>,
}

/// Parses one observation per line: `{"t": 3, "target": "find_cover",
/// "value": "Performed"}` or `{"t": 4, "target": "ev_find_cover",
/// "likelihood": [0.8, 0.2]}`. Blank lines are skipped.
pub fn parse_observation_stream(text: &str) -> Result<Vec<Observation>, RecognitionError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| RecognitionError::Parse { line: i + 1, message };
        let doc: ObservationDoc =
            serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
        let kind = match (doc.value, doc.likelihood) {
            (Some(v), None) => ObservationKind::Outcome(v),
            (None, Some(l)) => ObservationKind::Likelihood(l),
            _ => return Err(parse("need exactly one of value, likelihood".to_string())),
        };
        out.push(Observation { t: doc.t, target: doc.target, kind });
    }
    Ok(out)
}

/// Posterior over one tracked variable after an update. `delta` is the
/// change per outcome since the previous report (or since the prior, for
/// the first report).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeliefReport {
    pub var: String,
    pub outcomes: Vec<String>,
    pub probabilities: Vec<f64>,
    pub argmax: String,
    pub delta: Vec<f64>,
}

/// Renders reports as an aligned text table, one row per variable.
pub fn render_report_table(reports: &[BeliefReport]) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["variable".to_string()];
    if let Some(first) = reports.first() {
        header.extend(first.outcomes.iter().cloned());
    }
    header.push("argmax".to_string());
    rows.push(header);
    for r in reports {
        let mut row = vec![r.var.clone()];
        for (p, d) in r.probabilities.iter().zip(&r.delta) {
            row.push(format!("{p:.4} ({d:+.4})"));
        }
        row.push(r.argmax.clone());
        rows.push(row);
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c > 0 {
                line.push_str("  ");
            }
            line.push_str(cell);
            if c + 1 < row.len() {
                for _ in cell.len()..widths[c] {
                    line.push(' ');
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct RecognitionSession {
    net: BeliefNetwork,
    map: VariableMap,
    tracked: Vec<String>,
    evidence: Evidence,
    log: Vec<Observation>,
    previous: BTreeMap<String, Vec<f64>>,
}

impl RecognitionSession {
    /// Starts a session tracking the given goals, or every goal variable in
    /// the network when `tracked` is `None`. Baselines each tracked
    /// variable at its prior so the first report's delta is against that.
    pub fn new(
        net: BeliefNetwork,
        map: VariableMap,
        tracked: Option<&[String]>,
    ) -> Result<Self, RecognitionError> {
        let mut session = RecognitionSession {
            tracked: Vec::new(),
            net,
            map,
            evidence: Evidence::new(),
            log: Vec::new(),
            previous: BTreeMap::new(),
        };
        session.tracked = match tracked {
            None => goal_variables(&session.net),
            Some(targets) => {
                let mut vars = Vec::new();
                for target in targets {
                    let var = session.resolve_target(target)?;
                    if variable_role(&session.net, &var) != Some(VarRole::Goal) {
                        return Err(RecognitionError::NotAGoal(var));
                    }
                    if !vars.contains(&var) {
                        vars.push(var);
                    }
                }
                vars
            }
        };
        for var in session.tracked.clone() {
            let prior = session.net.posterior(&Evidence::new(), &var)?;
            session.previous.insert(var, prior);
        }
        Ok(session)
    }

    pub fn network(&self) -> &BeliefNetwork {
        &self.net
    }

    pub fn map(&self) -> &VariableMap {
        &self.map
    }

    pub fn tracked(&self) -> &[String] {
        &self.tracked
    }

    pub fn evidence(&self) -> &Evidence {
        &self.evidence
    }

    pub fn observations(&self) -> &[Observation] {
        &self.log
    }

    /// Maps an observation target to a variable: an exact variable name, a
    /// goal name from the plan library, or a unique final path segment such
    /// as `ev_find_cover` for `perform_bound/0/.../ev_find_cover`.
    pub fn resolve_target(&self, target: &str) -> Result<String, RecognitionError> {
        if self.net.variable(target).is_some() {
            return Ok(target.to_string());
        }
        if let Some(var) = self.map.goal_vars.get(target) {
            return Ok(var.clone());
        }
        let candidates: Vec<String> = self
            .net
            .variables()
            .iter()
            .map(|v| v.name.clone())
            .filter(|name| name.rsplit('/').next() == Some(target))
            .collect();
        match candidates.len() {
            0 => Err(RecognitionError::UnknownTarget(target.to_string())),
            1 => Ok(candidates.into_iter().next().unwrap()),
            _ => Err(RecognitionError::AmbiguousTarget {
                target: target.to_string(),
                candidates,
            }),
        }
    }

    /// Incorporates one observation and returns the refreshed posterior
    /// over the tracked variables. The observation must advance the clock
    /// and must not contradict evidence already in place; on any failure
    /// the session state is unchanged.
    pub fn observe(&mut self, obs: &Observation) -> Result<Vec<BeliefReport>, RecognitionError> {
        if let Some(last) = self.log.last() {
            if obs.t <= last.t {
                return Err(RecognitionError::StaleObservation { t: obs.t, last: last.t });
            }
        }
        let mut staged = self.evidence.clone();
        self.stage(&mut staged, obs)?;
        let reports = self.reports_for(&staged)?;
        self.evidence = staged;
        self.log.push(obs.clone());
        self.commit(&reports);
        Ok(reports)
    }

    /// Withdraws the observation made at time `t` and replays the rest.
    pub fn retract(&mut self, t: u64) -> Result<Vec<BeliefReport>, RecognitionError> {
        let idx = self
            .log
            .iter()
            .position(|o| o.t == t)
            .ok_or(RecognitionError::NoSuchObservation(t))?;
        let mut survivors = self.log.clone();
        survivors.remove(idx);
        let mut staged = Evidence::new();
        for obs in &survivors {
            self.stage(&mut staged, obs)?;
        }
        let reports = self.reports_for(&staged)?;
        self.evidence = staged;
        self.log = survivors;
        self.commit(&reports);
        Ok(reports)
    }

    /// Current posterior over the tracked variables, without changing the
    /// delta baseline.
    pub fn beliefs(&self) -> Result<Vec<BeliefReport>, RecognitionError> {
        self.reports_for(&self.evidence)
    }

    /// Tracked goals ordered by how strongly the evidence supports them:
    /// P(Active) + P(Achieved), descending, ties broken by name.
    pub fn rank_goals(&self) -> Result<Vec<(String, f64)>, RecognitionError> {
        let mut ranked = Vec::new();
        for var in &self.tracked {
            let dist = self.net.posterior(&self.evidence, var)?;
            ranked.push((var.clone(), dist[1] + dist[2]));
        }
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1).expect("posteriors are finite").then_with(|| a.0.cmp(&b.0))
        });
        Ok(ranked)
    }

    fn stage(&self, ev: &mut Evidence, obs: &Observation) -> Result<(), RecognitionError> {
        let var = self.resolve_target(&obs.target)?;
        match &obs.kind {
            ObservationKind::Outcome(value) => {
                if ev.get_hard(&var).is_some() || ev.get_soft(&var).is_some() {
                    return Err(RecognitionError::ConflictingEvidence { var });
                }
                ev.set_hard(var, value.clone());
            }
            ObservationKind::Likelihood(likelihood) => {
                if ev.get_hard(&var).is_some() {
                    return Err(RecognitionError::ConflictingEvidence { var });
                }
                let combined = match ev.get_soft(&var) {
                    Some(prev) if prev.len() == likelihood.len() => {
                        prev.iter().zip(likelihood).map(|(a, b)| a * b).collect()
                    }
                    _ => likelihood.clone(),
                };
                if combined.iter().all(|x| *x <= TOLERANCE) {
                    return Err(RecognitionError::VanishingLikelihood { var });
                }
                ev.set_soft(var, combined);
            }
        }
        ev.check_against(&self.net)?;
        Ok(())
    }

    fn reports_for(&self, ev: &Evidence) -> Result<Vec<BeliefReport>, RecognitionError> {
        let mut reports = Vec::with_capacity(self.tracked.len());
        for var in &self.tracked {
            let probabilities = self.net.posterior(ev, var)?;
            let outcomes = self.net.variable(var).expect("tracked var exists").domain.clone();
            let best = probabilities
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).expect("posteriors are finite"))
                .map(|(i, _)| i)
                .unwrap_or(0);
            let delta = match self.previous.get(var) {
                Some(prev) => probabilities.iter().zip(prev).map(|(p, q)| p - q).collect(),
                None => vec![0.0; probabilities.len()],
            };
            reports.push(BeliefReport {
                var: var.clone(),
                argmax: outcomes[best].clone(),
                outcomes,
                probabilities,
                delta,
            });
        }
        Ok(reports)
    }

    fn commit(&mut self, reports: &[BeliefReport]) {
        for r in reports {
            self.previous.insert(r.var.clone(), r.probabilities.clone());
        }
    }
}
