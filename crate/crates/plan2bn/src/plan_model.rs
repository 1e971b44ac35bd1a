//! Plan-language data model: abstract syntax for libraries of procedural
//! plans (KAs), a parser for the textual concrete syntax, a canonical
//! pretty-printer, and structural validation.
//!
//! A *KA* (knowledge area) is a named plan that achieves a goal (its
//! *purpose*) when its *context* conditions hold, by executing a *body* of
//! sequenced steps. Steps are primitive actions, subgoals to achieve, or
//! annotated actions (maintain/test/wait/assert/retract), and sequences may
//! contain AND/OR branches.
//!
//! Validation rejects recursive goal structures: a subgoal chain that leads
//! back to an ancestor goal cannot be expanded into a finite network.

mod parser;

pub use parser::{parse_plan_file, ParseError};

use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A parsed collection of KAs plus the derived list of top-level goals.
///
/// Top-level goals are the purposes that no KA body references as a subgoal,
/// in KA declaration order. They are derived during parsing rather than
/// declared in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanLibrary {
    pub kas: Vec<Ka>,
    pub top_level_goals: Vec<String>,
}

/// One plan unit: `ka <name> achieves !<purpose> [context c1, c2] { body }`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ka {
    pub name: String,
    pub purpose: String,
    pub context: Vec<String>,
    pub body: Body,
}

/// A sequence of body elements. Branch arms are themselves bodies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Body {
    pub elements: Vec<BodyElem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BodyElem {
    Step(Step),
    Branch(Branch),
}

/// An AND or OR split into two or more alternative sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub kind: BranchKind,
    pub branches: Vec<Body>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    And,
    Or,
}

/// A leaf step. Only `Achieve` steps are treated as subgoals; every other
/// kind compiles as an observable primitive action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub kind: StepKind,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Primitive,
    Achieve,
    Maintain,
    Test,
    Wait,
    Assert,
    Retract,
}

impl StepKind {
    pub fn sigil(self) -> &'static str {
        match self {
            StepKind::Primitive => "*",
            StepKind::Achieve => "!",
            StepKind::Maintain => "#",
            StepKind::Test => "?",
            StepKind::Wait => "^",
            StepKind::Assert => "->",
            StepKind::Retract => "<-",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.sigil())
    }
}

/// Machine-readable validation error codes.
pub mod codes {
    pub const RECURSION: &str = "RECURSION";
    pub const UNRESOLVED_SUBGOAL: &str = "UNRESOLVED_SUBGOAL";
    pub const DUPLICATE_CONTEXT: &str = "DUPLICATE_CONTEXT";
    pub const NO_TOP_LEVEL_GOAL: &str = "NO_TOP_LEVEL_GOAL";
    pub const EMPTY_PURPOSE: &str = "EMPTY_PURPOSE";
}

/// One validation finding. `location` names the KA (and step path, when
/// relevant) the finding refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: String,
    pub location: String,
    pub message: String,
}

/// Outcome of [`validate_library`]. An empty `errors` list means the library
/// is compilable.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Diagnostic>,
    pub warnings: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    /// JSON rendering with stable field order (errors, then warnings).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

impl PlanLibrary {
    /// All KAs whose purpose is `goal`, in declaration order.
    pub fn kas_for_goal(&self, goal: &str) -> Vec<&Ka> {
        self.kas.iter().filter(|k| k.purpose == goal).collect()
    }

    pub fn ka(&self, name: &str) -> Option<&Ka> {
        self.kas.iter().find(|k| k.name == name)
    }
}

impl Body {
    /// Depth-first walk over all leaf steps with their child-index paths.
    pub fn walk_steps<'a>(&'a self, f: &mut dyn FnMut(&[usize], &'a Step)) {
        fn go<'a>(body: &'a Body, path: &mut Vec<usize>, f: &mut dyn FnMut(&[usize], &'a Step)) {
            for (i, elem) in body.elements.iter().enumerate() {
                path.push(i);
                match elem {
                    BodyElem::Step(s) => f(path, s),
                    BodyElem::Branch(b) => {
                        for (j, arm) in b.branches.iter().enumerate() {
                            path.push(j);
                            go(arm, path, f);
                            path.pop();
                        }
                    }
                }
                path.pop();
            }
        }
        go(self, &mut Vec::new(), f);
    }

    /// Goals referenced by achieve steps anywhere in this body.
    pub fn subgoals(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk_steps(&mut |_, step| {
            if step.kind == StepKind::Achieve {
                out.push(step.target.clone());
            }
        });
        out
    }
}

/// Canonical text rendering. Parsing the output yields a library equal to
/// the input (comments are not preserved).
pub fn pretty_print(lib: &PlanLibrary) -> String {
    let mut out = String::new();
    for ka in &lib.kas {
        out.push_str(&format!("ka {} achieves !{}", ka.name, ka.purpose));
        if !ka.context.is_empty() {
            out.push_str(&format!(" context {}", ka.context.join(", ")));
        }
        out.push_str(" {\n");
        print_body(&ka.body, 1, &mut out);
        out.push_str("}\n");
    }
    out
}

fn print_body(body: &Body, depth: usize, out: &mut String) {
    let pad = "  ".repeat(depth);
    for elem in &body.elements {
        match elem {
            BodyElem::Step(step) => {
                out.push_str(&format!("{pad}{}{}\n", step.kind.sigil(), step.target));
            }
            BodyElem::Branch(branch) => {
                let kw = match branch.kind {
                    BranchKind::And => "and",
                    BranchKind::Or => "or",
                };
                out.push_str(&format!("{pad}{kw} {{\n"));
                for arm in &branch.branches {
                    out.push_str(&format!("{pad}  {{\n"));
                    print_body(arm, depth + 2, out);
                    out.push_str(&format!("{pad}  }}\n"));
                }
                out.push_str(&format!("{pad}}}\n"));
            }
        }
    }
}

/// Structural validation: unresolved subgoals, duplicate context conditions,
/// recursive goal structures, and a missing top-level goal set.
///
/// The report is deterministic for a given library; it never fails.
pub fn validate_library(lib: &PlanLibrary) -> ValidationReport {
    let mut report = ValidationReport::default();
    let purposes: BTreeSet<&str> = lib.kas.iter().map(|k| k.purpose.as_str()).collect();

    for ka in &lib.kas {
        if ka.purpose.is_empty() {
            report.errors.push(Diagnostic {
                code: codes::EMPTY_PURPOSE.into(),
                location: ka.name.clone(),
                message: format!("ka {} has an empty purpose", ka.name),
            });
        }
        let mut seen = BTreeSet::new();
        for cond in &ka.context {
            if !seen.insert(cond.as_str()) {
                report.errors.push(Diagnostic {
                    code: codes::DUPLICATE_CONTEXT.into(),
                    location: ka.name.clone(),
                    message: format!("context condition {cond} repeated in ka {}", ka.name),
                });
            }
        }
        ka.body.walk_steps(&mut |path, step| {
            if step.kind == StepKind::Achieve && !purposes.contains(step.target.as_str()) {
                report.errors.push(Diagnostic {
                    code: codes::UNRESOLVED_SUBGOAL.into(),
                    location: format!("{}:{}", ka.name, format_path(path)),
                    message: format!(
                        "subgoal !{} in ka {} is not the purpose of any ka",
                        step.target, ka.name
                    ),
                });
            }
        });
    }

    // Goal graph: goal -> subgoals reachable through any KA achieving it.
    let mut goal_edges: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for ka in &lib.kas {
        let entry = goal_edges.entry(ka.purpose.as_str()).or_default();
        for sub in ka.body.subgoals() {
            entry.insert(sub);
        }
    }
    report.errors.extend(find_goal_cycles(lib, &goal_edges));

    if lib.top_level_goals.is_empty() {
        report.errors.push(Diagnostic {
            code: codes::NO_TOP_LEVEL_GOAL.into(),
            location: "library".into(),
            message: "every goal is referenced as a subgoal; no top-level goal remains".into(),
        });
    }

    report
}

fn format_path(path: &[usize]) -> String {
    path.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(".")
}

/// DFS cycle detection over the goal graph. Each cycle is reported once,
/// with the error message naming the full cycle path.
fn find_goal_cycles(
    lib: &PlanLibrary,
    edges: &BTreeMap<&str, BTreeSet<String>>,
) -> Vec<Diagnostic> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        White,
        Grey,
        Black,
    }

    let mut marks: BTreeMap<&str, Mark> = edges.keys().map(|g| (*g, Mark::White)).collect();
    let mut diags = Vec::new();

    // Deterministic start order: first appearance in the library.
    let mut roots: Vec<&str> = Vec::new();
    for ka in &lib.kas {
        if !roots.contains(&ka.purpose.as_str()) {
            roots.push(ka.purpose.as_str());
        }
    }

    fn dfs<'a>(
        goal: &'a str,
        edges: &'a BTreeMap<&str, BTreeSet<String>>,
        marks: &mut BTreeMap<&'a str, Mark>,
        stack: &mut Vec<&'a str>,
        diags: &mut Vec<Diagnostic>,
    ) {
        marks.insert(goal, Mark::Grey);
        stack.push(goal);
        if let Some(subs) = edges.get(goal) {
            for sub in subs {
                // Subgoals without a KA are reported as UNRESOLVED_SUBGOAL.
                let Some((sub_key, _)) = edges.get_key_value(sub.as_str()) else {
                    continue;
                };
                match marks[sub_key] {
                    Mark::White => dfs(sub_key, edges, marks, stack, diags),
                    Mark::Grey => {
                        let start = stack.iter().position(|g| *g == *sub_key).unwrap();
                        let mut cycle: Vec<&str> = stack[start..].to_vec();
                        cycle.push(sub_key);
                        diags.push(Diagnostic {
                            code: codes::RECURSION.into(),
                            location: sub_key.to_string(),
                            message: format!("recursive goal structure: {}", cycle.join(" -> ")),
                        });
                    }
                    Mark::Black => {}
                }
            }
        }
        stack.pop();
        marks.insert(goal, Mark::Black);
    }

    let mut stack = Vec::new();
    for root in roots {
        if marks[root] == Mark::White {
            dfs(root, edges, &mut marks, &mut stack, &mut diags);
        }
    }
    diags
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib(text: &str) -> PlanLibrary {
        parse_plan_file(text).expect("fixture parses")
    }

    #[test]
    fn single_nonbranching_ka_parses() {
        let l = lib("ka perform_bound achieves !bound_performed {\n  *move_to_viapt\n  *find_cover\n}\n");
        assert_eq!(l.kas.len(), 1);
        let ka = &l.kas[0];
        assert_eq!(ka.name, "perform_bound");
        assert_eq!(ka.purpose, "bound_performed");
        let mut steps = Vec::new();
        ka.body.walk_steps(&mut |path, s| steps.push((path.to_vec(), s.target.clone())));
        assert_eq!(
            steps,
            vec![
                (vec![0], "move_to_viapt".to_string()),
                (vec![1], "find_cover".to_string())
            ]
        );
        assert_eq!(l.top_level_goals, vec!["bound_performed"]);
    }

    #[test]
    fn or_branch_body_shape() {
        let l = lib(
            "ka hide achieves !hidden {\n  or {\n    { *find_concealing_foliage }\n    { *find_concealing_object }\n  }\n}\n",
        );
        let body = &l.kas[0].body;
        assert_eq!(body.elements.len(), 1);
        match &body.elements[0] {
            BodyElem::Branch(b) => {
                assert_eq!(b.kind, BranchKind::Or);
                assert_eq!(b.branches.len(), 2);
                assert_eq!(b.branches[0].elements.len(), 1);
            }
            other => panic!("expected branch, got {other:?}"),
        }
    }

    #[test]
    fn empty_library_is_a_parse_error() {
        let err = parse_plan_file("# nothing here\n").unwrap_err();
        assert!(err.to_string().contains("at least one ka"), "{err}");
    }

    #[test]
    fn self_recursion_rejected() {
        let l = lib("ka a achieves !g {\n  !g\n}\n");
        let report = validate_library(&l);
        assert!(report.errors.iter().any(|d| d.code == codes::RECURSION));
        let rec = report
            .errors
            .iter()
            .find(|d| d.code == codes::RECURSION)
            .unwrap();
        assert!(rec.message.contains("g -> g"), "{}", rec.message);
    }

    #[test]
    fn mutual_recursion_rejected_with_cycle_path() {
        let l = lib(
            "ka a achieves !g1 {\n  !g2\n}\nka b achieves !g2 {\n  !g1\n}\n",
        );
        let report = validate_library(&l);
        let rec: Vec<_> = report
            .errors
            .iter()
            .filter(|d| d.code == codes::RECURSION)
            .collect();
        assert_eq!(rec.len(), 1, "one cycle reported once: {report:?}");
        assert!(rec[0].message.contains("g1 -> g2 -> g1"), "{}", rec[0].message);
    }

    #[test]
    fn unresolved_subgoal_reported() {
        let l = lib("ka a achieves !g {\n  !nonexistent\n}\n");
        let report = validate_library(&l);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].code, codes::UNRESOLVED_SUBGOAL);
    }

    #[test]
    fn duplicate_context_reported() {
        let l = lib("ka a achieves !g context c, c {\n  *x\n}\n");
        let report = validate_library(&l);
        assert!(report
            .errors
            .iter()
            .any(|d| d.code == codes::DUPLICATE_CONTEXT));
    }

    #[test]
    fn four_ka_library_validates_cleanly() {
        let l = lib(RECON_LIB);
        let report = validate_library(&l);
        assert!(report.is_ok(), "{report:?}");
        assert_eq!(
            l.top_level_goals,
            vec!["bound_performed", "deal_with_enemy"]
        );
    }

    #[test]
    fn pretty_print_round_trips() {
        for text in [RECON_LIB, "ka a achieves !g context c1, c2 {\n  #hold\n  ?probe\n  ^event\n  ->fact\n  <-fact\n  *act\n}\n"] {
            let l = lib(text);
            let printed = pretty_print(&l);
            let reparsed = parse_plan_file(&printed).expect("printed text parses");
            assert_eq!(l, reparsed, "round trip failed for:\n{printed}");
        }
    }

    pub(crate) const RECON_LIB: &str = "\
ka perform_bound achieves !bound_performed {
  !moved_to_next_viapt
  *find_cover
}
ka attack achieves !deal_with_enemy context enemy_detected {
  *move_toward_enemy
  *fire_at_enemy
}
ka hide achieves !deal_with_enemy context enemy_detected {
  or {
    { *find_concealing_foliage }
    { *find_concealing_object }
  }
}
ka moved_to_next_viapt achieves !moved_to_next_viapt {
  *move_toward_viapt
  *arrive_at_viapt
}
";
}
