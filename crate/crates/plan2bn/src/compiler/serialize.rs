//! File formats: the network JSON document (variables, arcs, variable map)
//! and the overlay file. Dumps are deterministic byte-for-byte: object keys
//! come from struct field order or sorted maps, arrays from network
//! insertion order, and floats print in shortest round-trip form.

use super::{CptOverlay, OverlayEntry, SensorModel, VariableMap};
use crate::bayes_net::{Arc, ArcKind, BeliefNetwork, Cpt, NetError, RandomVariable};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invalid network at {path}: {source}")]
    Invalid { path: String, source: NetError },
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    variables: Vec<VariableDoc>,
    arcs: Vec<ArcDoc>,
    map: MapDoc,
}

#[derive(Serialize, Deserialize)]
struct VariableDoc {
    name: String,
    domain: Vec<String>,
    parents: Vec<String>,
    cpt: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ArcDoc {
    from: String,
    to: String,
    kind: ArcKind,
}

#[derive(Serialize, Deserialize, Default)]
struct MapDoc {
    goal_vars: BTreeMap<String, String>,
    action_vars: Vec<ActionVarDoc>,
    evidence_vars: BTreeMap<String, String>,
    context_vars: Vec<ContextVarDoc>,
    abstract_goal_vars: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct ActionVarDoc {
    ka: String,
    path: String,
    var: String,
}

#[derive(Serialize, Deserialize)]
struct ContextVarDoc {
    ka: String,
    condition: String,
    var: String,
}

/// Renders a compiled network and its map as a JSON document.
pub fn dump_network(net: &BeliefNetwork, map: &VariableMap) -> String {
    let doc = NetworkDoc {
        variables: net
            .variables()
            .iter()
            .map(|v| VariableDoc {
                name: v.name.clone(),
                domain: v.domain.clone(),
                parents: v.cpt.parents.clone(),
                cpt: v.cpt.rows.clone(),
            })
            .collect(),
        arcs: net
            .arcs()
            .iter()
            .map(|a| ArcDoc { from: a.from.clone(), to: a.to.clone(), kind: a.kind })
            .collect(),
        map: MapDoc {
            goal_vars: map.goal_vars.clone(),
            action_vars: map
                .action_vars
                .iter()
                .map(|((ka, path), var)| ActionVarDoc {
                    ka: ka.clone(),
                    path: path.clone(),
                    var: var.clone(),
                })
                .collect(),
            evidence_vars: map.evidence_vars.clone(),
            context_vars: map
                .context_vars
                .iter()
                .map(|((ka, condition), var)| ContextVarDoc {
                    ka: ka.clone(),
                    condition: condition.clone(),
                    var: var.clone(),
                })
                .collect(),
            abstract_goal_vars: map.abstract_goal_vars.clone(),
        },
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("document serialization cannot fail");
    out.push('\n');
    out
}

/// Parses a network document back into a validated network and map.
/// Inverse of [`dump_network`].
pub fn load_network(doc: &str) -> Result<(BeliefNetwork, VariableMap), LoadError> {
    let mut de = serde_json::Deserializer::from_str(doc);
    let parsed: NetworkDoc = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        LoadError::Schema { path: e.path().to_string(), message: e.inner().to_string() }
    })?;

    let variables: Vec<RandomVariable> = parsed
        .variables
        .iter()
        .map(|v| RandomVariable {
            name: v.name.clone(),
            domain: v.domain.clone(),
            cpt: Cpt { parents: v.parents.clone(), rows: v.cpt.clone() },
        })
        .collect();
    let arcs: Vec<Arc> = parsed
        .arcs
        .iter()
        .map(|a| Arc { from: a.from.clone(), to: a.to.clone(), kind: a.kind })
        .collect();

    let net = BeliefNetwork::from_parts(variables, arcs).map_err(|source| {
        let path = match &source {
            NetError::BadCpt { var, .. } => parsed
                .variables
                .iter()
                .position(|v| &v.name == var)
                .map(|i| format!("variables[{i}].cpt"))
                .unwrap_or_else(|| "variables".to_string()),
            NetError::DomainTooSmall(var) | NetError::DuplicateVariable(var) => parsed
                .variables
                .iter()
                .position(|v| &v.name == var)
                .map(|i| format!("variables[{i}]"))
                .unwrap_or_else(|| "variables".to_string()),
            NetError::DuplicateArc { from, to } => parsed
                .arcs
                .iter()
                .position(|a| &a.from == from && &a.to == to)
                .map(|i| format!("arcs[{i}]"))
                .unwrap_or_else(|| "arcs".to_string()),
            NetError::CycleDetected => "arcs".to_string(),
            _ => "variables".to_string(),
        };
        LoadError::Invalid { path, source }
    })?;

    let mut map = VariableMap::default();
    let check = |var: &str, path: String| -> Result<(), LoadError> {
        if net.variable(var).is_none() {
            return Err(LoadError::Schema {
                path,
                message: format!("maps to unknown variable {var}"),
            });
        }
        Ok(())
    };
    for (goal, var) in &parsed.map.goal_vars {
        check(var, format!("map.goal_vars.{goal}"))?;
        map.goal_vars.insert(goal.clone(), var.clone());
    }
    for (i, e) in parsed.map.action_vars.iter().enumerate() {
        check(&e.var, format!("map.action_vars[{i}].var"))?;
        map.action_vars.insert((e.ka.clone(), e.path.clone()), e.var.clone());
    }
    for (action, var) in &parsed.map.evidence_vars {
        check(var, format!("map.evidence_vars.{action}"))?;
        map.evidence_vars.insert(action.clone(), var.clone());
    }
    for (i, e) in parsed.map.context_vars.iter().enumerate() {
        check(&e.var, format!("map.context_vars[{i}].var"))?;
        map.context_vars.insert((e.ka.clone(), e.condition.clone()), e.var.clone());
    }
    for (goal, var) in &parsed.map.abstract_goal_vars {
        check(var, format!("map.abstract_goal_vars.{goal}"))?;
        map.abstract_goal_vars.insert(goal.clone(), var.clone());
    }
    Ok((net, map))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverlayEntryDoc {
    prior: Option<Vec<f64>>,
    rows: Option<BTreeMap<String, Vec<f64>>>,
    cpt: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SensorDoc {
    false_positive_rate: f64,
    false_negative_rate: f64,
}

/// Parses an overlay file: a JSON object mapping variable names to
/// `{"prior": [...]}`, `{"rows": {"parent=outcome,...": [...]}}` or
/// `{"cpt": [[...]]}`. The key `sensor_defaults` is reserved for
/// `{"false_positive_rate": p, "false_negative_rate": p}`.
pub fn parse_overlay(text: &str) -> Result<CptOverlay, LoadError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: BTreeMap<String, serde_json::Value> = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| LoadError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;

    let mut overlay = CptOverlay::empty();
    for (key, value) in raw {
        if key == "sensor_defaults" {
            let doc: SensorDoc = serde_json::from_value(value).map_err(|e| LoadError::Schema {
                path: "sensor_defaults".to_string(),
                message: e.to_string(),
            })?;
            for (name, rate) in [
                ("false_positive_rate", doc.false_positive_rate),
                ("false_negative_rate", doc.false_negative_rate),
            ] {
                if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
                    return Err(LoadError::Schema {
                        path: format!("sensor_defaults.{name}"),
                        message: format!("rate {rate} outside [0, 1]"),
                    });
                }
            }
            overlay.sensor_defaults = Some(SensorModel {
                false_positive_rate: doc.false_positive_rate,
                false_negative_rate: doc.false_negative_rate,
            });
            continue;
        }
        let doc: OverlayEntryDoc = serde_json::from_value(value).map_err(|e| {
            LoadError::Schema { path: key.clone(), message: e.to_string() }
        })?;
        let entry = match (doc.prior, doc.rows, doc.cpt) {
            (Some(p), None, None) => OverlayEntry::Prior(p),
            (None, Some(r), None) => OverlayEntry::Rows(r),
            (None, None, Some(c)) => OverlayEntry::Cpt(c),
            _ => {
                return Err(LoadError::Schema {
                    path: key.clone(),
                    message: "entry needs exactly one of prior, rows, cpt".to_string(),
                })
            }
        };
        overlay.entries.insert(key, entry);
    }
    Ok(overlay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CompileOptions};
    use crate::plan_model::parse_plan_file;

    const RECON: &str = include_str!("../../../../fixtures/recon.plan");

    fn empty_map() -> &'static str {
        r#""map": {"goal_vars": {}, "action_vars": [], "evidence_vars": {}, "context_vars": [], "abstract_goal_vars": {}}"#
    }

    #[test]
    fn dump_then_load_reproduces_the_network() {
        let lib = parse_plan_file(RECON).unwrap();
        let (net, map) =
            compile(&lib, &CptOverlay::empty(), &CompileOptions::default()).unwrap();
        let text = dump_network(&net, &map);
        let (loaded_net, loaded_map) = load_network(&text).unwrap();
        assert_eq!(dump_network(&loaded_net, &loaded_map), text);
        assert_eq!(loaded_map, map);
        assert_eq!(loaded_net.arcs(), net.arcs());
    }

    #[test]
    fn schema_errors_name_the_offending_path() {
        let doc = format!(
            r#"{{"variables": [{{"name": "a", "domain": ["x", "y"], "parents": [], "cpt": [[0.5, 0.5]]}}],
                "arcs": [{{"from": "a", "to": "a", "kind": "sideways"}}], {}}}"#,
            empty_map()
        );
        let err = load_network(&doc).unwrap_err();
        match err {
            LoadError::Schema { path, .. } => {
                assert!(path.contains("arcs") && path.contains("kind"), "path was {path}");
            }
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn invalid_cpt_reports_the_variable_index() {
        let doc = format!(
            r#"{{"variables": [
                {{"name": "a", "domain": ["x", "y"], "parents": [], "cpt": [[0.5, 0.5]]}},
                {{"name": "b", "domain": ["x", "y"], "parents": [], "cpt": [[0.7, 0.6]]}}
               ], "arcs": [], {}}}"#,
            empty_map()
        );
        let err = load_network(&doc).unwrap_err();
        match err {
            LoadError::Invalid { path, source: NetError::BadCpt { var, .. } } => {
                assert_eq!(path, "variables[1].cpt");
                assert_eq!(var, "b");
            }
            other => panic!("expected invalid cpt, got {other}"),
        }
    }

    #[test]
    fn map_entries_must_name_existing_variables() {
        let doc = format!(
            r#"{{"variables": [{{"name": "a", "domain": ["x", "y"], "parents": [], "cpt": [[0.5, 0.5]]}}],
                "arcs": [], {}}}"#,
            empty_map().replace(r#""goal_vars": {}"#, r#""goal_vars": {"g": "missing"}"#)
        );
        let err = load_network(&doc).unwrap_err();
        match err {
            LoadError::Schema { path, message } => {
                assert_eq!(path, "map.goal_vars.g");
                assert!(message.contains("missing"));
            }
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn overlay_parses_all_entry_forms() {
        let overlay = parse_overlay(
            r#"{
              "sensor_defaults": {"false_positive_rate": 0.02, "false_negative_rate": 0.1},
              "root": {"prior": [0.3, 0.7]},
              "patched": {"rows": {"p=Active": [0.2, 0.8]}},
              "replaced": {"cpt": [[0.1, 0.9], [0.4, 0.6]]}
            }"#,
        )
        .unwrap();
        let sensors = overlay.sensor_defaults.unwrap();
        assert_eq!(sensors.false_positive_rate, 0.02);
        assert_eq!(sensors.false_negative_rate, 0.1);
        assert_eq!(overlay.entries["root"], OverlayEntry::Prior(vec![0.3, 0.7]));
        assert_eq!(
            overlay.entries["patched"],
            OverlayEntry::Rows([("p=Active".to_string(), vec![0.2, 0.8])].into_iter().collect())
        );
        assert_eq!(
            overlay.entries["replaced"],
            OverlayEntry::Cpt(vec![vec![0.1, 0.9], vec![0.4, 0.6]])
        );
    }

    #[test]
    fn overlay_entry_needs_exactly_one_form() {
        let err = parse_overlay(r#"{"v": {"prior": [0.5, 0.5], "cpt": [[0.5, 0.5]]}}"#)
            .unwrap_err();
        match err {
            LoadError::Schema { path, message } => {
                assert_eq!(path, "v");
                assert!(message.contains("exactly one"));
            }
            other => panic!("expected schema error, got {other}"),
        }
        assert!(parse_overlay(r#"{"v": {}}"#).is_err());
        assert!(parse_overlay(r#"{"v": {"unknown_field": 1}}"#).is_err());
    }

    #[test]
    fn overlay_sensor_rates_are_range_checked() {
        let err = parse_overlay(
            r#"{"sensor_defaults": {"false_positive_rate": 1.5, "false_negative_rate": 0.1}}"#,
        )
        .unwrap_err();
        match err {
            LoadError::Schema { path, .. } => {
                assert_eq!(path, "sensor_defaults.false_positive_rate")
            }
            other => panic!("expected schema error, got {other}"),
        }
    }
}
