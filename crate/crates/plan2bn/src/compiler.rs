//! Translates a validated plan library into a belief network.
//!
//! Every KA becomes a goal variable over [Inactive, Active, Achieved]; its
//! body steps become action variables over [Performed, NotPerformed], each a
//! child of the goal variable, chained by temporal arcs; context conditions
//! become deterministic constraint variables; observable actions get noisy
//! evidence variables. Subgoals expand recursively, one fresh embedding per
//! occurrence, with path-qualified names such as
//! `perform_bound/0/moved_to_next_viapt`. When several KAs achieve the same
//! goal they are joined under an abstract goal variable; multiple top-level
//! goals are linked by soft-exclusion arcs in declaration order.
//!
//! All probabilities default to equiprobable unless a structural rule pins
//! them (context determinism, sensor noise, branch exclusivity, ordering);
//! a [`CptOverlay`] then replaces any table the caller knows better.

mod serialize;

pub use serialize::{dump_network, load_network, parse_overlay, LoadError};

use crate::bayes_net::{ArcKind, BeliefNetwork, NetError};
use crate::plan_model::{
    validate_library, Body, BodyElem, BranchKind, Ka, PlanLibrary, Step, StepKind,
    ValidationReport,
};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const GOAL_OUTCOMES: [&str; 3] = ["Inactive", "Active", "Achieved"];
pub const ACTION_OUTCOMES: [&str; 2] = ["Performed", "NotPerformed"];
pub const CONTEXT_OUTCOMES: [&str; 2] = ["True", "False"];

/// Default sensor noise for evidence variables.
pub const DEFAULT_FALSE_POSITIVE_RATE: f64 = 0.05;
pub const DEFAULT_FALSE_NEGATIVE_RATE: f64 = 0.05;

/// P(step Performed) when a temporal predecessor has not completed. Encodes
/// "later steps rarely precede earlier ones"; override via overlay.
pub const OUT_OF_ORDER_ACTION_RATE: f64 = 0.1;

/// P(Active) and P(Achieved) for a subgoal whose temporal predecessor has
/// not completed.
pub const OUT_OF_ORDER_GOAL_RATE: f64 = 0.1;

/// Fraction of a top-level goal's Active mass retained while a competing
/// goal declared earlier is Active; the remainder shifts to Inactive.
pub const COMPETING_GOAL_ACTIVE_RETENTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("library failed validation with {} error(s); first: {}",
        report.errors.len(),
        report.errors.first().map(|d| d.message.as_str()).unwrap_or("none"))]
    InvalidLibrary { report: ValidationReport },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("overlay references unknown variable {0}")]
    OverlayUnknownVariable(String),
    #[error("overlay prior for {0}: variable has parents; use rows or cpt")]
    OverlayPriorNotRoot(String),
    #[error("overlay row key '{key}' for {var}: {reason}")]
    OverlayBadRowKey { var: String, key: String, reason: String },
    #[error("overlay entry for {var}: {reason}")]
    OverlayBadEntry { var: String, reason: String },
}

/// Structure-generation switches. Everything defaults on; turning a switch
/// off removes exactly the named construct and nothing else.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompileOptions {
    pub explicit_evidence_vars: bool,
    pub temporal_arcs: bool,
    pub or_branch_inhibition: bool,
    pub top_level_inhibition: bool,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            explicit_evidence_vars: true,
            temporal_arcs: true,
            or_branch_inhibition: true,
            top_level_inhibition: true,
        }
    }
}

/// Evidence-variable noise model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        SensorModel {
            false_positive_rate: DEFAULT_FALSE_POSITIVE_RATE,
            false_negative_rate: DEFAULT_FALSE_NEGATIVE_RATE,
        }
    }
}

impl SensorModel {
    /// CPT rows for an evidence variable: by action Performed, then
    /// NotPerformed; outcomes Performed, then NotPerformed.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        vec![
            vec![1.0 - self.false_negative_rate, self.false_negative_rate],
            vec![self.false_positive_rate, 1.0 - self.false_positive_rate],
        ]
    }
}

/// Per-variable CPT replacement applied after compilation.
#[derive(Debug, Clone, PartialEq)]
pub enum OverlayEntry {
    /// Prior for a parentless variable.
    Prior(Vec<f64>),
    /// Named-row patches; the key is `parent=outcome` pairs joined by `,`
    /// in declared parent order.
    Rows(BTreeMap<String, Vec<f64>>),
    /// Whole-table replacement, row-major over parent assignments.
    Cpt(Vec<Vec<f64>>),
}

/// Caller-supplied probabilities layered over the synthesized defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CptOverlay {
    pub entries: BTreeMap<String, OverlayEntry>,
    /// When set, every evidence variable's CPT is rebuilt from these rates
    /// before per-variable entries apply.
    pub sensor_defaults: Option<SensorModel>,
}

impl CptOverlay {
    pub fn empty() -> Self {
        Self::default()
    }
}

/// Where each plan entity landed in the network.
///
/// Keys for `action_vars` and `context_vars` name the KA *instance*: the KA
/// name for a top-level KA, or the expansion-qualified goal variable name
/// (for example `perform_bound/0/moved_to_next_viapt`) for a subgoal
/// embedding. `goal_vars` covers every top-level goal and every subgoal
/// expanded exactly once; a goal expanded at several places resolves only
/// through its qualified variable names.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VariableMap {
    pub goal_vars: BTreeMap<String, String>,
    pub action_vars: BTreeMap<(String, String), String>,
    pub evidence_vars: BTreeMap<String, String>,
    pub context_vars: BTreeMap<(String, String), String>,
    pub abstract_goal_vars: BTreeMap<String, String>,
}

/// Broad role a variable plays, derived from its domain and incoming arc
/// kinds rather than stored in the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarRole {
    Goal,
    Action,
    Evidence,
    Context,
}

pub fn variable_role(net: &BeliefNetwork, name: &str) -> Option<VarRole> {
    let var = net.variable(name)?;
    for arc in net.arcs() {
        if arc.to == name {
            match arc.kind {
                ArcKind::Evidence => return Some(VarRole::Evidence),
                ArcKind::Context => return Some(VarRole::Context),
                _ => {}
            }
        }
    }
    if var.domain == GOAL_OUTCOMES {
        Some(VarRole::Goal)
    } else {
        Some(VarRole::Action)
    }
}

/// All goal-role variable names in network insertion order.
pub fn goal_variables(net: &BeliefNetwork) -> Vec<String> {
    net.variables()
        .iter()
        .filter(|v| variable_role(net, &v.name) == Some(VarRole::Goal))
        .map(|v| v.name.clone())
        .collect()
}

/// Compiles a plan library into a belief network and its variable map.
/// The library must validate cleanly; the overlay is applied last.
pub fn compile(
    lib: &PlanLibrary,
    overlay: &CptOverlay,
    opts: &CompileOptions,
) -> Result<(BeliefNetwork, VariableMap), CompileError> {
    let report = validate_library(lib);
    if !report.is_ok() {
        return Err(CompileError::InvalidLibrary { report });
    }

    let mut builder = Builder {
        lib,
        opts,
        net: BeliefNetwork::new(),
        map: VariableMap::default(),
        context_var_by_condition: BTreeMap::new(),
        soft_exclusion_pairs: BTreeSet::new(),
        goal_level_vars: BTreeMap::new(),
        abstract_vars: BTreeMap::new(),
    };

    let mut top_vars = Vec::new();
    for goal in &lib.top_level_goals {
        top_vars.push(builder.compile_top_goal(goal)?);
    }
    if opts.top_level_inhibition {
        for i in 0..top_vars.len() {
            for j in i + 1..top_vars.len() {
                builder
                    .net
                    .add_arc(&top_vars[i], &top_vars[j], ArcKind::Inhibitory)?;
                builder
                    .soft_exclusion_pairs
                    .insert((top_vars[i].clone(), top_vars[j].clone()));
            }
        }
    }

    for (goal, occurrences) in &builder.goal_level_vars {
        if occurrences.len() == 1 {
            builder.map.goal_vars.insert(goal.clone(), occurrences[0].clone());
        }
    }
    for (goal, top) in lib.top_level_goals.iter().zip(&top_vars) {
        builder.map.goal_vars.insert(goal.clone(), top.clone());
    }
    for (goal, vars) in &builder.abstract_vars {
        if vars.len() == 1 {
            builder.map.abstract_goal_vars.insert(goal.clone(), vars[0].clone());
        }
    }

    let Builder { mut net, map, soft_exclusion_pairs, .. } = builder;
    synthesize_default_cpts(&mut net, &soft_exclusion_pairs, &SensorModel::default())?;
    apply_overlay(&mut net, overlay)?;
    Ok((net, map))
}

struct Builder<'a> {
    lib: &'a PlanLibrary,
    opts: &'a CompileOptions,
    net: BeliefNetwork,
    map: VariableMap,
    context_var_by_condition: BTreeMap<String, String>,
    soft_exclusion_pairs: BTreeSet<(String, String)>,
    /// Goal name → step-or-top-level variable per expansion occurrence.
    goal_level_vars: BTreeMap<String, Vec<String>>,
    abstract_vars: BTreeMap<String, Vec<String>>,
}

/// Entry and exit variables of a compiled body, for temporal chaining.
struct BodyIo {
    entries: Vec<String>,
    exits: Vec<String>,
}

impl<'a> Builder<'a> {
    /// First free name from `preferred`, then numbered fallbacks.
    fn claim(&self, preferred: String) -> String {
        if self.net.variable(&preferred).is_none() {
            return preferred;
        }
        let mut i = 2;
        loop {
            let candidate = format!("{preferred}_{i}");
            if self.net.variable(&candidate).is_none() {
                return candidate;
            }
            i += 1;
        }
    }

    fn goal_domain() -> Vec<String> {
        GOAL_OUTCOMES.iter().map(|s| s.to_string()).collect()
    }

    fn action_domain() -> Vec<String> {
        ACTION_OUTCOMES.iter().map(|s| s.to_string()).collect()
    }

    fn compile_top_goal(&mut self, goal: &str) -> Result<String, CompileError> {
        let kas = self.lib.kas_for_goal(goal);
        let top = if kas.len() == 1 {
            self.compile_instance(kas[0], self.claim(kas[0].name.clone()), None, &[])?
        } else {
            let abs = self.claim(goal.to_string());
            self.net.add_variable(abs.clone(), Self::goal_domain())?;
            self.abstract_vars.entry(goal.to_string()).or_default().push(abs.clone());
            for ka in kas {
                self.compile_instance(ka, self.claim(ka.name.clone()), Some(abs.as_str()), &[])?;
            }
            abs
        };
        self.goal_level_vars.entry(goal.to_string()).or_default().push(top.clone());
        Ok(top)
    }

    /// Compiles one KA embedding: goal variable, context constraints, body.
    fn compile_instance(
        &mut self,
        ka: &Ka,
        name: String,
        hier_parent: Option<&str>,
        temporal_preds: &[String],
    ) -> Result<String, CompileError> {
        self.net.add_variable(name.clone(), Self::goal_domain())?;
        if let Some(parent) = hier_parent {
            self.net.add_arc(parent, &name, ArcKind::Subaction)?;
        }
        if self.opts.temporal_arcs {
            for pred in temporal_preds {
                self.net.add_arc(pred, &name, ArcKind::Temporal)?;
            }
        }

        for condition in &ka.context {
            let ctx = match self.context_var_by_condition.get(condition) {
                Some(existing) => existing.clone(),
                None => {
                    let preferred = if self.net.variable(condition).is_none() {
                        condition.clone()
                    } else {
                        format!("ctx_{condition}")
                    };
                    let ctx = self.claim(preferred);
                    self.net.add_variable(
                        ctx.clone(),
                        CONTEXT_OUTCOMES.iter().map(|s| s.to_string()).collect(),
                    )?;
                    self.context_var_by_condition.insert(condition.clone(), ctx.clone());
                    ctx
                }
            };
            self.net.add_arc(&name, &ctx, ArcKind::Context)?;
            self.map
                .context_vars
                .insert((name.clone(), condition.clone()), ctx);
        }

        let top_level = !name.contains('/');
        let mut path = Vec::new();
        self.compile_body(&ka.body, &name, top_level, &mut path, &[])?;
        Ok(name)
    }

    fn compile_body(
        &mut self,
        body: &Body,
        scope: &str,
        top_level: bool,
        path: &mut Vec<usize>,
        entry_preds: &[String],
    ) -> Result<BodyIo, CompileError> {
        let mut entries = Vec::new();
        let mut preds: Vec<String> = entry_preds.to_vec();
        for (i, elem) in body.elements.iter().enumerate() {
            path.push(i);
            let first = i == 0;
            match elem {
                BodyElem::Step(step) => {
                    let var = if step.kind == StepKind::Achieve {
                        self.expand_subgoal(&step.target, scope, path, &preds)?
                    } else {
                        self.compile_action(step, scope, top_level, path, &preds)?
                    };
                    if first {
                        entries.push(var.clone());
                    }
                    preds = vec![var];
                }
                BodyElem::Branch(branch) => {
                    let mut arm_entries: Vec<Vec<String>> = Vec::new();
                    let mut exits = Vec::new();
                    for (j, arm) in branch.branches.iter().enumerate() {
                        path.push(j);
                        let io = self.compile_body(arm, scope, top_level, path, &preds)?;
                        path.pop();
                        arm_entries.push(io.entries);
                        exits.extend(io.exits);
                    }
                    if branch.kind == BranchKind::Or && self.opts.or_branch_inhibition {
                        for a in 0..arm_entries.len() {
                            for b in a + 1..arm_entries.len() {
                                for earlier in &arm_entries[a] {
                                    for later in &arm_entries[b] {
                                        self.net.add_arc(earlier, later, ArcKind::Inhibitory)?;
                                    }
                                }
                            }
                        }
                    }
                    if first {
                        entries.extend(arm_entries.iter().flatten().cloned());
                    }
                    preds = exits;
                }
            }
            path.pop();
        }
        Ok(BodyIo { entries, exits: preds })
    }

    /// Non-achieve step: an action variable under the instance goal, with
    /// temporal chaining and an optional evidence variable.
    fn compile_action(
        &mut self,
        step: &Step,
        scope: &str,
        top_level: bool,
        path: &[usize],
        preds: &[String],
    ) -> Result<String, CompileError> {
        let preferred = if top_level {
            step.target.clone()
        } else {
            format!("{scope}/{}", step.target)
        };
        let name = if self.net.variable(&preferred).is_none() {
            preferred
        } else {
            self.claim(format!("{scope}/{}/{}", path_key(path), step.target))
        };
        self.net.add_variable(name.clone(), Self::action_domain())?;
        self.net.add_arc(scope, &name, ArcKind::Subaction)?;
        if self.opts.temporal_arcs {
            for pred in preds {
                self.net.add_arc(pred, &name, ArcKind::Temporal)?;
            }
        }
        self.map
            .action_vars
            .insert((scope.to_string(), path_key(path)), name.clone());

        if self.opts.explicit_evidence_vars {
            let preferred = if top_level {
                format!("ev_{}", step.target)
            } else {
                format!("{scope}/ev_{}", step.target)
            };
            let ev = if self.net.variable(&preferred).is_none() {
                preferred
            } else {
                self.claim(format!("{name}/ev"))
            };
            self.net.add_variable(ev.clone(), Self::action_domain())?;
            self.net.add_arc(&name, &ev, ArcKind::Evidence)?;
            self.map.evidence_vars.insert(name.clone(), ev);
        }
        Ok(name)
    }

    /// Achieve step: embeds the KA (or, for a goal with several KAs, an
    /// abstract goal variable over fresh embeddings of each).
    fn expand_subgoal(
        &mut self,
        goal: &str,
        scope: &str,
        path: &[usize],
        preds: &[String],
    ) -> Result<String, CompileError> {
        let kas = self.lib.kas_for_goal(goal);
        let base = format!("{scope}/{}", path_key(path));
        let step_var = if kas.len() == 1 {
            let name = self.claim(format!("{base}/{}", kas[0].name));
            self.compile_instance(kas[0], name, Some(scope), preds)?
        } else {
            let abs = self.claim(format!("{base}/{goal}"));
            self.net.add_variable(abs.clone(), Self::goal_domain())?;
            self.net.add_arc(scope, &abs, ArcKind::Subaction)?;
            if self.opts.temporal_arcs {
                for pred in preds {
                    self.net.add_arc(pred, &abs, ArcKind::Temporal)?;
                }
            }
            self.abstract_vars.entry(goal.to_string()).or_default().push(abs.clone());
            for ka in kas {
                let name = self.claim(format!("{abs}/{}", ka.name));
                self.compile_instance(ka, name, Some(abs.as_str()), &[])?;
            }
            abs
        };
        self.goal_level_vars.entry(goal.to_string()).or_default().push(step_var.clone());
        Ok(step_var)
    }
}

fn path_key(path: &[usize]) -> String {
    path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("/")
}

/// True for the outcome index meaning "this parent has completed".
fn done(card: usize, outcome: usize) -> bool {
    if card == 2 {
        outcome == 0 // Performed
    } else {
        outcome == 2 // Achieved
    }
}

/// True for the outcome index meaning "this parent is being pursued".
fn pursued(card: usize, outcome: usize) -> bool {
    if card == 2 {
        outcome == 0 // Performed
    } else {
        outcome == 1 || outcome == 2 // Active or Achieved
    }
}

/// Rewrites every CPT from the structural rules: sensor rows for evidence
/// variables, deterministic constraint rows for context variables, ordering
/// and exclusivity adjustments for steps and goals, equiprobability
/// elsewhere.
fn synthesize_default_cpts(
    net: &mut BeliefNetwork,
    soft_exclusion_pairs: &BTreeSet<(String, String)>,
    sensors: &SensorModel,
) -> Result<(), NetError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Role {
        Plain,
        Temporal,
        HardInhibitor,
        SoftInhibitor,
    }

    let mut tables: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for var in net.variables() {
        let incoming: BTreeMap<&str, ArcKind> = net
            .arcs()
            .iter()
            .filter(|a| a.to == var.name)
            .map(|a| (a.from.as_str(), a.kind))
            .collect();

        if incoming.values().any(|k| *k == ArcKind::Evidence) {
            tables.push((var.name.clone(), sensors.rows()));
            continue;
        }

        let parent_cards: Vec<usize> = var
            .cpt
            .parents
            .iter()
            .map(|p| net.variable(p).expect("parents exist").domain.len())
            .collect();
        let row_count: usize = parent_cards.iter().product();

        if incoming.values().any(|k| *k == ArcKind::Context) {
            // Constraint variable: True whenever any guarded goal is not
            // Inactive; otherwise unknown.
            let mut rows = Vec::with_capacity(row_count);
            let mut assignment = vec![0usize; parent_cards.len()];
            for _ in 0..row_count {
                let live = assignment.iter().any(|k| *k != 0);
                rows.push(if live { vec![1.0, 0.0] } else { vec![0.5, 0.5] });
                advance(&mut assignment, &parent_cards);
            }
            tables.push((var.name.clone(), rows));
            continue;
        }

        let roles: Vec<Role> = var
            .cpt
            .parents
            .iter()
            .map(|p| match incoming.get(p.as_str()) {
                Some(ArcKind::Temporal) => Role::Temporal,
                Some(ArcKind::Inhibitory) => {
                    if soft_exclusion_pairs.contains(&(p.clone(), var.name.clone())) {
                        Role::SoftInhibitor
                    } else {
                        Role::HardInhibitor
                    }
                }
                _ => Role::Plain,
            })
            .collect();

        let card = var.domain.len();
        let base = vec![1.0 / card as f64; card];
        let mut rows = Vec::with_capacity(row_count);
        let mut assignment = vec![0usize; parent_cards.len()];
        for _ in 0..row_count {
            let mut hard = false;
            let mut soft = false;
            let mut out_of_order = false;
            for ((role, k), pc) in roles.iter().zip(&assignment).zip(&parent_cards) {
                match role {
                    Role::HardInhibitor if pursued(*pc, *k) => hard = true,
                    Role::SoftInhibitor if *k == 1 => soft = true, // Active
                    Role::Temporal if !done(*pc, *k) => out_of_order = true,
                    _ => {}
                }
            }
            let row = if hard {
                if card == 2 {
                    vec![0.0, 1.0]
                } else {
                    vec![1.0, 0.0, 0.0]
                }
            } else {
                let mut row = if out_of_order {
                    if card == 2 {
                        vec![OUT_OF_ORDER_ACTION_RATE, 1.0 - OUT_OF_ORDER_ACTION_RATE]
                    } else {
                        vec![
                            1.0 - 2.0 * OUT_OF_ORDER_GOAL_RATE,
                            OUT_OF_ORDER_GOAL_RATE,
                            OUT_OF_ORDER_GOAL_RATE,
                        ]
                    }
                } else {
                    base.clone()
                };
                if soft && card == 3 {
                    let shifted = row[1] * (1.0 - COMPETING_GOAL_ACTIVE_RETENTION);
                    row[0] += shifted;
                    row[1] *= COMPETING_GOAL_ACTIVE_RETENTION;
                }
                row
            };
            rows.push(row);
            advance(&mut assignment, &parent_cards);
        }
        tables.push((var.name.clone(), rows));
    }

    for (name, rows) in tables {
        net.set_cpt_rows(&name, rows)?;
    }
    Ok(())
}

/// Odometer step over parent assignments, last parent fastest.
fn advance(assignment: &mut [usize], cards: &[usize]) {
    for i in (0..assignment.len()).rev() {
        assignment[i] += 1;
        if assignment[i] < cards[i] {
            return;
        }
        assignment[i] = 0;
    }
}

/// Applies an overlay to a compiled network: sensor rates first (when set),
/// then per-variable entries in name order.
pub fn apply_overlay(net: &mut BeliefNetwork, overlay: &CptOverlay) -> Result<(), CompileError> {
    if let Some(sensors) = &overlay.sensor_defaults {
        let evidence_vars: Vec<String> = net
            .arcs()
            .iter()
            .filter(|a| a.kind == ArcKind::Evidence)
            .map(|a| a.to.clone())
            .collect();
        for name in evidence_vars {
            net.set_cpt_rows(&name, sensors.rows())?;
        }
    }

    for (name, entry) in &overlay.entries {
        let var = net
            .variable(name)
            .ok_or_else(|| CompileError::OverlayUnknownVariable(name.clone()))?;
        let parents = var.cpt.parents.clone();
        match entry {
            OverlayEntry::Prior(dist) => {
                if !parents.is_empty() {
                    return Err(CompileError::OverlayPriorNotRoot(name.clone()));
                }
                net.set_cpt_rows(name, vec![dist.clone()])?;
            }
            OverlayEntry::Cpt(rows) => {
                net.set_cpt_rows(name, rows.clone())?;
            }
            OverlayEntry::Rows(patches) => {
                for (key, dist) in patches {
                    let outcomes = parse_row_key(name, key, &parents)?;
                    let refs: Vec<&str> = outcomes.iter().map(String::as_str).collect();
                    let row = net.cpt_row_index(name, &refs).map_err(|e| {
                        CompileError::OverlayBadRowKey {
                            var: name.clone(),
                            key: key.clone(),
                            reason: e.to_string(),
                        }
                    })?;
                    net.set_cpt_row(name, row, dist.clone())?;
                }
            }
        }
    }
    Ok(())
}

/// Splits `parent=outcome,parent=outcome` and checks the parents appear in
/// declared order.
fn parse_row_key(
    var: &str,
    key: &str,
    parents: &[String],
) -> Result<Vec<String>, CompileError> {
    let bad = |reason: String| CompileError::OverlayBadRowKey {
        var: var.to_string(),
        key: key.to_string(),
        reason,
    };
    let pairs: Vec<&str> = if key.is_empty() { Vec::new() } else { key.split(',').collect() };
    if pairs.len() != parents.len() {
        return Err(bad(format!(
            "{} assignments given, variable has {} parents ({})",
            pairs.len(),
            parents.len(),
            parents.join(", ")
        )));
    }
    let mut outcomes = Vec::with_capacity(pairs.len());
    for (pair, parent) in pairs.iter().zip(parents) {
        let Some((p, o)) = pair.trim().split_once('=') else {
            return Err(bad(format!("'{pair}' is not parent=outcome")));
        };
        if p.trim() != parent {
            return Err(bad(format!(
                "expected parent {parent} at this position, found {}",
                p.trim()
            )));
        }
        outcomes.push(o.trim().to_string());
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes_net::TOLERANCE;
    use crate::plan_model::parse_plan_file;
    use proptest::prelude::*;

    const BOUND_FLAT: &str = include_str!("../../../fixtures/bound_flat.plan");
    const BOUND_NESTED: &str = include_str!("../../../fixtures/bound_nested.plan");
    const HIDE_OR: &str = include_str!("../../../fixtures/hide_or.plan");
    const HIDE_AND: &str = include_str!("../../../fixtures/hide_and.plan");
    const BOUND_OVERWATCH: &str = include_str!("../../../fixtures/bound_overwatch.plan");
    const ATTACK_OR_HIDE: &str = include_str!("../../../fixtures/attack_or_hide.plan");
    const RECON: &str = include_str!("../../../fixtures/recon.plan");

    fn build_with(text: &str, opts: &CompileOptions) -> (BeliefNetwork, VariableMap) {
        let lib = parse_plan_file(text).expect("fixture parses");
        compile(&lib, &CptOverlay::empty(), opts).expect("fixture compiles")
    }

    fn build(text: &str) -> (BeliefNetwork, VariableMap) {
        build_with(text, &CompileOptions::default())
    }

    fn names(net: &BeliefNetwork) -> Vec<String> {
        let mut v: Vec<String> = net.variables().iter().map(|v| v.name.clone()).collect();
        v.sort();
        v
    }

    fn arcs_of(net: &BeliefNetwork) -> Vec<(String, String, ArcKind)> {
        let mut v: Vec<(String, String, ArcKind)> = net
            .arcs()
            .iter()
            .map(|a| (a.from.clone(), a.to.clone(), a.kind))
            .collect();
        v.sort();
        v
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TOLERANCE)
    }

    #[test]
    fn single_plan_compiles_to_expected_structure() {
        let (net, map) = build(BOUND_FLAT);
        assert_eq!(
            names(&net),
            vec![
                "enemy_detected",
                "ev_find_cover",
                "ev_move_to_viapt",
                "find_cover",
                "move_to_viapt",
                "perform_bound",
            ]
        );
        assert_eq!(
            arcs_of(&net),
            vec![
                ("find_cover".into(), "ev_find_cover".into(), ArcKind::Evidence),
                ("move_to_viapt".into(), "ev_move_to_viapt".into(), ArcKind::Evidence),
                ("move_to_viapt".into(), "find_cover".into(), ArcKind::Temporal),
                ("perform_bound".into(), "enemy_detected".into(), ArcKind::Context),
                ("perform_bound".into(), "find_cover".into(), ArcKind::Subaction),
                ("perform_bound".into(), "move_to_viapt".into(), ArcKind::Subaction),
            ] as Vec<(String, String, ArcKind)>
        );
        assert_eq!(net.variable("perform_bound").unwrap().domain, GOAL_OUTCOMES);
        assert_eq!(net.variable("find_cover").unwrap().domain, ACTION_OUTCOMES);
        assert_eq!(net.variable("enemy_detected").unwrap().domain, CONTEXT_OUTCOMES);
        assert_eq!(map.goal_vars["bound_performed"], "perform_bound");
        assert_eq!(
            map.action_vars[&("perform_bound".to_string(), "0".to_string())],
            "move_to_viapt"
        );
        assert_eq!(map.evidence_vars["find_cover"], "ev_find_cover");
        assert_eq!(
            map.context_vars[&("perform_bound".to_string(), "enemy_detected".to_string())],
            "enemy_detected"
        );
    }

    #[test]
    fn roles_derive_from_structure() {
        let (net, _) = build(BOUND_FLAT);
        assert_eq!(variable_role(&net, "perform_bound"), Some(VarRole::Goal));
        assert_eq!(variable_role(&net, "find_cover"), Some(VarRole::Action));
        assert_eq!(variable_role(&net, "ev_find_cover"), Some(VarRole::Evidence));
        assert_eq!(variable_role(&net, "enemy_detected"), Some(VarRole::Context));
        assert_eq!(goal_variables(&net), vec!["perform_bound"]);
    }

    #[test]
    fn evidence_rows_use_default_sensor_rates() {
        let (net, _) = build(BOUND_FLAT);
        let ev = net.variable("ev_find_cover").unwrap();
        assert_eq!(ev.cpt.parents, vec!["find_cover".to_string()]);
        assert!(close(&ev.cpt.rows[0], &[0.95, 0.05]));
        assert!(close(&ev.cpt.rows[1], &[0.05, 0.95]));
    }

    #[test]
    fn context_rows_pin_true_while_goal_is_live() {
        let (net, _) = build(BOUND_FLAT);
        let ctx = net.variable("enemy_detected").unwrap();
        assert_eq!(ctx.cpt.parents, vec!["perform_bound".to_string()]);
        assert!(close(&ctx.cpt.rows[0], &[0.5, 0.5])); // Inactive
        assert!(close(&ctx.cpt.rows[1], &[1.0, 0.0])); // Active
        assert!(close(&ctx.cpt.rows[2], &[1.0, 0.0])); // Achieved
    }

    #[test]
    fn temporal_rows_discount_out_of_order_steps() {
        let (net, _) = build(BOUND_FLAT);
        let fc = net.variable("find_cover").unwrap();
        assert_eq!(fc.cpt.parents, vec!["perform_bound".to_string(), "move_to_viapt".to_string()]);
        for goal_state in 0..3 {
            assert!(close(&fc.cpt.rows[goal_state * 2], &[0.5, 0.5]));
            assert!(close(
                &fc.cpt.rows[goal_state * 2 + 1],
                &[OUT_OF_ORDER_ACTION_RATE, 1.0 - OUT_OF_ORDER_ACTION_RATE]
            ));
        }
    }

    #[test]
    fn subgoal_expands_with_path_qualified_names() {
        let (net, map) = build(BOUND_NESTED);
        let expansion = "perform_bound/0/moved_to_next_viapt";
        for name in [
            expansion,
            "perform_bound/0/moved_to_next_viapt/move_toward_viapt",
            "perform_bound/0/moved_to_next_viapt/ev_move_toward_viapt",
            "perform_bound/0/moved_to_next_viapt/arrive_at_viapt",
        ] {
            assert!(net.variable(name).is_some(), "missing {name}");
        }
        assert_eq!(map.goal_vars["moved_to_next_viapt"], expansion);
        let arcs = arcs_of(&net);
        assert!(arcs.contains(&("perform_bound".into(), expansion.into(), ArcKind::Subaction)));
        assert!(arcs.contains(&(expansion.into(), "find_cover".into(), ArcKind::Temporal)));
        // Same shape below the expansion as a top-level plan would have.
        assert_eq!(variable_role(&net, expansion), Some(VarRole::Goal));
        assert!(arcs.contains(&(
            format!("{expansion}/move_toward_viapt"),
            format!("{expansion}/arrive_at_viapt"),
            ArcKind::Temporal
        )));
    }

    #[test]
    fn goal_completion_feeds_temporal_successor() {
        let (net, _) = build(BOUND_NESTED);
        let fc = net.variable("find_cover").unwrap();
        assert_eq!(
            fc.cpt.parents,
            vec!["perform_bound".to_string(), "perform_bound/0/moved_to_next_viapt".to_string()]
        );
        for goal_state in 0..3 {
            let rows = &fc.cpt.rows[goal_state * 3..goal_state * 3 + 3];
            assert!(close(&rows[0], &[0.1, 0.9])); // predecessor Inactive
            assert!(close(&rows[1], &[0.1, 0.9])); // predecessor Active
            assert!(close(&rows[2], &[0.5, 0.5])); // predecessor Achieved
        }
    }

    #[test]
    fn or_branch_adds_exactly_one_inhibitory_arc() {
        let (or_net, _) = build(HIDE_OR);
        let (and_net, _) = build(HIDE_AND);
        let or_arcs = arcs_of(&or_net);
        let and_arcs = arcs_of(&and_net);
        let inhibitory: Vec<_> = or_arcs
            .iter()
            .filter(|(_, _, k)| *k == ArcKind::Inhibitory)
            .cloned()
            .collect();
        assert_eq!(
            inhibitory,
            vec![(
                "find_concealing_foliage".to_string(),
                "find_concealing_object".to_string(),
                ArcKind::Inhibitory
            )]
        );
        let or_minus: Vec<_> = or_arcs
            .iter()
            .filter(|(_, _, k)| *k != ArcKind::Inhibitory)
            .cloned()
            .collect();
        assert_eq!(or_minus, and_arcs);
        assert_eq!(names(&or_net), names(&and_net));
    }

    #[test]
    fn inhibited_branch_head_is_pinned_off() {
        let (net, _) = build(HIDE_OR);
        let obj = net.variable("find_concealing_object").unwrap();
        assert_eq!(
            obj.cpt.parents,
            vec!["hide".to_string(), "find_concealing_foliage".to_string()]
        );
        for goal_state in 0..3 {
            assert!(close(&obj.cpt.rows[goal_state * 2], &[0.0, 1.0])); // foliage Performed
            assert!(close(&obj.cpt.rows[goal_state * 2 + 1], &[0.5, 0.5]));
        }
    }

    #[test]
    fn disabling_or_inhibition_yields_the_and_network() {
        let opts = CompileOptions { or_branch_inhibition: false, ..Default::default() };
        let (or_net, _) = build_with(HIDE_OR, &opts);
        let (and_net, _) = build(HIDE_AND);
        assert_eq!(dump_network(&or_net, &VariableMap::default()),
                   dump_network(&and_net, &VariableMap::default()));
    }

    #[test]
    fn disabling_temporal_arcs_removes_only_them() {
        let (full, _) = build(RECON);
        let opts = CompileOptions { temporal_arcs: false, ..Default::default() };
        let (bare, _) = build_with(RECON, &opts);
        let expected: Vec<_> = arcs_of(&full)
            .into_iter()
            .filter(|(_, _, k)| *k != ArcKind::Temporal)
            .collect();
        assert_eq!(arcs_of(&bare), expected);
        assert_eq!(names(&bare), names(&full));
    }

    #[test]
    fn disabling_evidence_vars_removes_them_and_their_arcs() {
        let (full, _) = build(BOUND_FLAT);
        let opts = CompileOptions { explicit_evidence_vars: false, ..Default::default() };
        let (bare, map) = build_with(BOUND_FLAT, &opts);
        assert!(map.evidence_vars.is_empty());
        let expected_names: Vec<String> = names(&full)
            .into_iter()
            .filter(|n| !n.starts_with("ev_"))
            .collect();
        assert_eq!(names(&bare), expected_names);
        assert!(arcs_of(&bare).iter().all(|(_, _, k)| *k != ArcKind::Evidence));
    }

    #[test]
    fn alternative_plans_join_under_abstract_goal() {
        let (net, map) = build(ATTACK_OR_HIDE);
        assert_eq!(map.abstract_goal_vars["deal_with_enemy"], "deal_with_enemy");
        assert_eq!(map.goal_vars["deal_with_enemy"], "deal_with_enemy");
        let arcs = arcs_of(&net);
        assert!(arcs.contains(&("deal_with_enemy".into(), "attack".into(), ArcKind::Subaction)));
        assert!(arcs.contains(&("deal_with_enemy".into(), "hide".into(), ArcKind::Subaction)));
        assert!(!arcs.iter().any(|(_, _, k)| *k == ArcKind::Inhibitory));
        // One shared constraint variable guarded by both plans.
        let ctx = net.variable("enemy_detected").unwrap();
        assert_eq!(ctx.cpt.parents, vec!["attack".to_string(), "hide".to_string()]);
        // True whenever either guard is live; unknown only when both idle.
        assert!(close(&ctx.cpt.rows[0], &[0.5, 0.5]));
        for row in 1..9 {
            assert!(close(&ctx.cpt.rows[row], &[1.0, 0.0]), "row {row}");
        }
    }

    #[test]
    fn competing_top_level_goals_get_soft_exclusion() {
        let (net, _) = build(BOUND_OVERWATCH);
        let arcs = arcs_of(&net);
        assert!(arcs.contains(&(
            "perform_bound".into(),
            "perform_overwatch".into(),
            ArcKind::Inhibitory
        )));
        let ow = net.variable("perform_overwatch").unwrap();
        assert_eq!(ow.cpt.parents, vec!["perform_bound".to_string()]);
        let third = 1.0 / 3.0;
        assert!(close(&ow.cpt.rows[0], &[third, third, third]));
        assert!(close(
            &ow.cpt.rows[1],
            &[third + 0.9 * third, 0.1 * third, third]
        ));
        assert!(close(&ow.cpt.rows[2], &[third, third, third]));
    }

    #[test]
    fn disabling_goal_inhibition_removes_only_that_arc() {
        let opts = CompileOptions { top_level_inhibition: false, ..Default::default() };
        let (net, _) = build_with(BOUND_OVERWATCH, &opts);
        assert!(arcs_of(&net).iter().all(|(_, _, k)| *k != ArcKind::Inhibitory));
        let ow = net.variable("perform_overwatch").unwrap();
        assert!(ow.cpt.parents.is_empty());
    }

    #[test]
    fn recon_library_full_inventory() {
        let (net, map) = build(RECON);
        assert_eq!(net.len(), 20);
        assert_eq!(net.arcs().len(), 24);
        assert_eq!(
            map.goal_vars,
            [
                ("bound_performed", "perform_bound"),
                ("deal_with_enemy", "deal_with_enemy"),
                ("moved_to_next_viapt", "perform_bound/0/moved_to_next_viapt"),
            ]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
        );
        let arcs = arcs_of(&net);
        assert!(arcs.contains(&(
            "perform_bound".into(),
            "deal_with_enemy".into(),
            ArcKind::Inhibitory
        )));
        assert_eq!(
            goal_variables(&net),
            vec![
                "perform_bound",
                "perform_bound/0/moved_to_next_viapt",
                "deal_with_enemy",
                "attack",
                "hide",
            ]
        );
        net.topological_order().expect("compiled networks are acyclic");
    }

    #[test]
    fn ambiguous_subgoal_is_dropped_from_goal_map() {
        let text = "\
ka main achieves !top {
  !sub
  !sub
}
ka helper achieves !sub {
  *work
}
";
        let (net, map) = build(text);
        assert!(net.variable("main/0/helper").is_some());
        assert!(net.variable("main/1/helper").is_some());
        assert!(!map.goal_vars.contains_key("sub"));
    }

    #[test]
    fn compile_rejects_recursive_library() {
        let lib = parse_plan_file("ka a achieves !g {\n  !g\n}\n").unwrap();
        let err = compile(&lib, &CptOverlay::empty(), &CompileOptions::default()).unwrap_err();
        assert!(matches!(err, CompileError::InvalidLibrary { .. }), "{err}");
    }

    #[test]
    fn compilation_is_deterministic() {
        let (n1, m1) = build(RECON);
        let (n2, m2) = build(RECON);
        assert_eq!(dump_network(&n1, &m1), dump_network(&n2, &m2));
    }

    #[test]
    fn overlay_after_compile_equals_overlay_during_compile() {
        let lib = parse_plan_file(RECON).unwrap();
        let mut overlay = CptOverlay::empty();
        overlay.sensor_defaults =
            Some(SensorModel { false_positive_rate: 0.02, false_negative_rate: 0.1 });
        overlay.entries.insert(
            "perform_bound".into(),
            OverlayEntry::Prior(vec![0.3, 0.6, 0.1]),
        );
        overlay.entries.insert(
            "enemy_detected".into(),
            OverlayEntry::Rows(
                [("attack=Inactive,hide=Inactive".to_string(), vec![0.2, 0.8])]
                    .into_iter()
                    .collect(),
            ),
        );
        let opts = CompileOptions::default();
        let (direct, map1) = compile(&lib, &overlay, &opts).unwrap();
        let (mut staged, map2) = compile(&lib, &CptOverlay::empty(), &opts).unwrap();
        apply_overlay(&mut staged, &overlay).unwrap();
        assert_eq!(dump_network(&direct, &map1), dump_network(&staged, &map2));
        assert!(close(
            &direct.variable("enemy_detected").unwrap().cpt.rows[0],
            &[0.2, 0.8]
        ));
        let ev = direct.variable("ev_find_cover").unwrap();
        assert!(close(&ev.cpt.rows[0], &[0.9, 0.1]));
        assert!(close(&ev.cpt.rows[1], &[0.02, 0.98]));
    }

    #[test]
    fn overlay_errors_are_specific() {
        let lib = parse_plan_file(BOUND_FLAT).unwrap();
        let opts = CompileOptions::default();

        let mut unknown = CptOverlay::empty();
        unknown.entries.insert("nonexistent".into(), OverlayEntry::Prior(vec![0.5, 0.5]));
        assert!(matches!(
            compile(&lib, &unknown, &opts).unwrap_err(),
            CompileError::OverlayUnknownVariable(v) if v == "nonexistent"
        ));

        let mut not_root = CptOverlay::empty();
        not_root.entries.insert("find_cover".into(), OverlayEntry::Prior(vec![0.5, 0.5]));
        assert!(matches!(
            compile(&lib, &not_root, &opts).unwrap_err(),
            CompileError::OverlayPriorNotRoot(v) if v == "find_cover"
        ));

        let mut bad_key = CptOverlay::empty();
        bad_key.entries.insert(
            "enemy_detected".into(),
            OverlayEntry::Rows(
                [("wrong_parent=Active".to_string(), vec![0.5, 0.5])].into_iter().collect(),
            ),
        );
        assert!(matches!(
            compile(&lib, &bad_key, &opts).unwrap_err(),
            CompileError::OverlayBadRowKey { .. }
        ));

        let mut bad_shape = CptOverlay::empty();
        bad_shape.entries.insert(
            "perform_bound".into(),
            OverlayEntry::Prior(vec![0.5, 0.5]),
        );
        assert!(matches!(
            compile(&lib, &bad_shape, &opts).unwrap_err(),
            CompileError::Net(NetError::BadCpt { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// For flat libraries the variable total follows directly from the
        /// shape: one goal per ka, one variable per step, one evidence
        /// variable per step, one per distinct context condition.
        #[test]
        fn variable_count_follows_shape(
            shape in proptest::collection::vec((1usize..4, 0usize..3), 1..4)
        ) {
            let mut text = String::new();
            let mut uid = 0usize;
            let mut expected = 0usize;
            for (i, (steps, conditions)) in shape.iter().enumerate() {
                text.push_str(&format!("ka plan{i} achieves !goal{i}"));
                if *conditions > 0 {
                    let conds: Vec<String> = (0..*conditions)
                        .map(|_| { uid += 1; format!("cond{uid}") })
                        .collect();
                    text.push_str(&format!(" context {}", conds.join(", ")));
                }
                text.push_str(" {\n");
                for _ in 0..*steps {
                    uid += 1;
                    text.push_str(&format!("  *act{uid}\n"));
                }
                text.push_str("}\n");
                expected += 1 + 2 * steps + conditions;
            }
            let (net, _) = build(&text);
            prop_assert_eq!(net.len(), expected);
        }
    }
}
