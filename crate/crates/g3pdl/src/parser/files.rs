//! Versioned JSON documents for proofs (`g3pdl-proof/1`) and models
//! (`g3pdl-model/1`). Rendering is canonical (sorted keys, sorted node
//! ids, pretty-printed) and `parse ∘ render` is the identity.

use crate::kernel::{
    CyclicPreProof, DerivationNode, NodeId, NodeKind, RuleInstance, RuleName, RuleParams,
};
use crate::parser::{parse_item, parse_sequent, ParseError};
use crate::semantics::{KripkeModel, Valuation};
use crate::syntax::{Label, ProgName, PropName};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const PROOF_SCHEMA: &str = "g3pdl-proof/1";
pub const MODEL_SCHEMA: &str = "g3pdl-model/1";

#[derive(Debug, Error)]
pub enum FileError {
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema `{found}` (expected `{expected}`)")]
    BadSchema { found: String, expected: &'static str },
    #[error("no root: node {0} is not defined")]
    NoRoot(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("unknown rule name `{0}`")]
    UnknownRule(String),
    #[error("node {id}: {detail}")]
    Node { id: NodeId, detail: String },
    #[error("node {id}: {err}")]
    NodeParse { id: NodeId, err: ParseError },
    #[error("a proof containing open nodes cannot be serialized (node {0})")]
    OpenNode(NodeId),
    #[error("at least one state required")]
    NoStates,
    #[error("duplicate state `{0}`")]
    DuplicateState(String),
    #[error("unknown state `{0}` referenced by {1}")]
    UnknownState(String, String),
}

fn node_err(id: NodeId, detail: impl Into<String>) -> FileError {
    FileError::Node {
        id,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// Proof documents.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProofDoc {
    schema: String,
    nodes: Vec<NodeDoc>,
    root: NodeId,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: NodeId,
    sequent: String,
    rule: String,
    principal: Option<String>,
    params: ParamsDoc,
    premises: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    companion: Option<NodeId>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    fresh: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    via: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    from: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    to: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    cut: Option<String>,
    #[serde(skip_serializing_if = "is_false", default)]
    contract: bool,
}

/// Which parameter keys each rule accepts in a document.
fn allowed_params(rule: RuleName) -> (&'static [&'static str], bool) {
    use RuleName::*;
    // (allowed optional keys, contract allowed)
    match rule {
        Ax | Bot | WL | WR => (&[], false),
        BoxL => (&["via"], true),
        BoxR => (&["fresh"], true),
        Subst => (&["from", "to"], false),
        Cut => (&["cut"], false),
        _ => (&[], true),
    }
}

fn decode_params(id: NodeId, rule: RuleName, doc: &ParamsDoc) -> Result<RuleParams, FileError> {
    let (allowed, contract_ok) = allowed_params(rule);
    let present: Vec<(&str, &Option<String>)> = vec![
        ("fresh", &doc.fresh),
        ("via", &doc.via),
        ("from", &doc.from),
        ("to", &doc.to),
        ("cut", &doc.cut),
    ];
    for (key, value) in &present {
        if value.is_some() && !allowed.contains(key) {
            return Err(node_err(id, format!("rule {rule} does not take param `{key}`")));
        }
    }
    if doc.contract && !contract_ok {
        return Err(node_err(id, format!("rule {rule} does not take param `contract`")));
    }
    let mut params = RuleParams {
        contract: doc.contract,
        ..RuleParams::default()
    };
    if let Some(s) = &doc.fresh {
        params.fresh = Some(Label::new(s.clone()));
    }
    if let Some(s) = &doc.via {
        params.via = Some(Label::new(s.clone()));
    }
    if let Some(s) = &doc.from {
        params.from = Some(Label::new(s.clone()));
    }
    if let Some(s) = &doc.to {
        params.to = Some(Label::new(s.clone()));
    }
    if let Some(s) = &doc.cut {
        params.cut =
            Some(parse_item(s).map_err(|err| FileError::NodeParse { id, err })?);
    }
    Ok(params)
}

fn encode_params(params: &RuleParams) -> ParamsDoc {
    ParamsDoc {
        fresh: params.fresh.as_ref().map(|l| l.as_str().to_string()),
        via: params.via.as_ref().map(|l| l.as_str().to_string()),
        from: params.from.as_ref().map(|l| l.as_str().to_string()),
        to: params.to.as_ref().map(|l| l.as_str().to_string()),
        cut: params.cut.as_ref().map(|i| i.to_string()),
        contract: params.contract,
    }
}

/// Parses a `g3pdl-proof/1` document into a pre-proof. Checks structural
/// schema conditions (unique ids, known rules, defined premise/companion
/// targets) but not rule correctness — that is the kernel's job.
pub fn parse_proof(text: &str) -> Result<CyclicPreProof, FileError> {
    let doc: ProofDoc = serde_json::from_str(text)?;
    if doc.schema != PROOF_SCHEMA {
        return Err(FileError::BadSchema {
            found: doc.schema,
            expected: PROOF_SCHEMA,
        });
    }
    let mut nodes: BTreeMap<NodeId, DerivationNode> = BTreeMap::new();
    for nd in &doc.nodes {
        let id = nd.id;
        let sequent = parse_sequent(&nd.sequent)
            .map_err(|err| FileError::NodeParse { id, err })?;
        let kind = if nd.rule == "Bud" {
            if nd.principal.is_some() {
                return Err(node_err(id, "a bud carries no principal item"));
            }
            if !matches!(
                nd.params,
                ParamsDoc {
                    fresh: None,
                    via: None,
                    from: None,
                    to: None,
                    cut: None,
                    contract: false
                }
            ) {
                return Err(node_err(id, "a bud carries no params"));
            }
            if !nd.premises.is_empty() {
                return Err(node_err(id, "a bud has no premises"));
            }
            let companion = nd
                .companion
                .ok_or_else(|| node_err(id, "bud is missing its companion id"))?;
            NodeKind::Bud { companion }
        } else {
            let rule = RuleName::from_str(&nd.rule)
                .ok_or_else(|| FileError::UnknownRule(nd.rule.clone()))?;
            if nd.companion.is_some() {
                return Err(node_err(id, "only buds carry a companion id"));
            }
            if matches!(rule, RuleName::Subst | RuleName::Cut) && nd.principal.is_some() {
                return Err(node_err(id, format!("rule {rule} takes no principal item")));
            }
            let principal = match &nd.principal {
                Some(s) => {
                    Some(parse_item(s).map_err(|err| FileError::NodeParse { id, err })?)
                }
                None => None,
            };
            let params = decode_params(id, rule, &nd.params)?;
            NodeKind::Rule(RuleInstance {
                rule,
                principal,
                params,
            })
        };
        let node = DerivationNode {
            id,
            sequent,
            kind,
            premises: nd.premises.clone(),
        };
        if nodes.insert(id, node).is_some() {
            return Err(FileError::DuplicateNodeId(id));
        }
    }
    if !nodes.contains_key(&doc.root) {
        return Err(FileError::NoRoot(doc.root));
    }
    for node in nodes.values() {
        for pid in &node.premises {
            if !nodes.contains_key(pid) {
                return Err(node_err(node.id, format!("premise {pid} is not defined")));
            }
        }
        if let NodeKind::Bud { companion } = node.kind {
            if !nodes.contains_key(&companion) {
                return Err(node_err(
                    node.id,
                    format!("companion {companion} is not defined"),
                ));
            }
        }
    }
    Ok(CyclicPreProof {
        nodes,
        root: doc.root,
    })
}

/// Renders a pre-proof as a `g3pdl-proof/1` document. Open nodes have no
/// document form and are rejected.
pub fn render_proof(proof: &CyclicPreProof) -> Result<String, FileError> {
    let mut nodes = Vec::new();
    for node in proof.nodes.values() {
        let (rule, principal, params, companion) = match &node.kind {
            NodeKind::Open => return Err(FileError::OpenNode(node.id)),
            NodeKind::Bud { companion } => {
                ("Bud".to_string(), None, ParamsDoc::default(), Some(*companion))
            }
            NodeKind::Rule(r) => (
                r.rule.as_str().to_string(),
                r.principal.as_ref().map(|i| i.to_string()),
                encode_params(&r.params),
                None,
            ),
        };
        nodes.push(NodeDoc {
            id: node.id,
            sequent: node.sequent.to_string(),
            rule,
            principal,
            params,
            premises: node.premises.clone(),
            companion,
        });
    }
    let doc = ProofDoc {
        schema: PROOF_SCHEMA.to_string(),
        nodes,
        root: proof.root,
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("proof docs are serializable");
    out.push('\n');
    Ok(out)
}

// ---------------------------------------------------------------------------
// Model documents.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    schema: String,
    states: Vec<String>,
    props: BTreeMap<String, Vec<String>>,
    progs: BTreeMap<String, Vec<(String, String)>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    valuation: Option<BTreeMap<String, String>>,
}

/// Parses a `g3pdl-model/1` document into a model and, when present, a
/// label valuation.
pub fn parse_model(text: &str) -> Result<(KripkeModel, Option<Valuation>), FileError> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    if doc.schema != MODEL_SCHEMA {
        return Err(FileError::BadSchema {
            found: doc.schema,
            expected: MODEL_SCHEMA,
        });
    }
    if doc.states.is_empty() {
        return Err(FileError::NoStates);
    }
    let mut states = BTreeSet::new();
    for s in &doc.states {
        if !states.insert(s.clone()) {
            return Err(FileError::DuplicateState(s.clone()));
        }
    }
    let mut props = BTreeMap::new();
    for (name, list) in &doc.props {
        let mut set = BTreeSet::new();
        for s in list {
            if !states.contains(s) {
                return Err(FileError::UnknownState(
                    s.clone(),
                    format!("proposition `{name}`"),
                ));
            }
            set.insert(s.clone());
        }
        props.insert(PropName::new(name.clone()), set);
    }
    let mut progs = BTreeMap::new();
    for (name, list) in &doc.progs {
        let mut rel = BTreeSet::new();
        for (a, b) in list {
            for s in [a, b] {
                if !states.contains(s) {
                    return Err(FileError::UnknownState(
                        s.clone(),
                        format!("program `{name}`"),
                    ));
                }
            }
            rel.insert((a.clone(), b.clone()));
        }
        progs.insert(ProgName::new(name.clone()), rel);
    }
    let model = KripkeModel {
        states,
        props,
        progs,
    };
    let valuation = match doc.valuation {
        None => None,
        Some(map) => {
            let mut v = Valuation::new();
            for (label, state) in map {
                if !model.states.contains(&state) {
                    return Err(FileError::UnknownState(
                        state,
                        format!("valuation of `{label}`"),
                    ));
                }
                v.insert(Label::new(label), state);
            }
            Some(v)
        }
    };
    Ok((model, valuation))
}

/// Renders a model (and optional valuation) as a `g3pdl-model/1` document.
pub fn render_model(model: &KripkeModel, valuation: Option<&Valuation>) -> String {
    let doc = ModelDoc {
        schema: MODEL_SCHEMA.to_string(),
        states: model.states.iter().cloned().collect(),
        props: model
            .props
            .iter()
            .map(|(p, set)| (p.as_str().to_string(), set.iter().cloned().collect()))
            .collect(),
        progs: model
            .progs
            .iter()
            .map(|(a, rel)| (a.as_str().to_string(), rel.iter().cloned().collect()))
            .collect(),
        valuation: valuation.map(|v| {
            v.iter()
                .map(|(l, s)| (l.as_str().to_string(), s.clone()))
                .collect()
        }),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("model docs are serializable");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{check_pre_proof, ProofBuilder};
    use crate::syntax::Item;

    fn tiny_proof() -> CyclicPreProof {
        let mut b = ProofBuilder::new();
        let leaf = b.add_rule(
            parse_sequent("x: p |- x: p").unwrap(),
            RuleInstance::with_principal(RuleName::Ax, parse_item("x: p").unwrap()),
            vec![],
        );
        let root = b.add_rule(
            parse_sequent("|- x: p -> p").unwrap(),
            RuleInstance::with_principal(RuleName::ImpR, parse_item("x: p -> p").unwrap()),
            vec![leaf],
        );
        b.finish(root)
    }

    #[test]
    fn proof_round_trip() {
        let proof = tiny_proof();
        let text = render_proof(&proof).unwrap();
        let back = parse_proof(&text).unwrap();
        assert_eq!(back, proof);
        assert_eq!(check_pre_proof(&back), Ok(()));
        assert!(text.contains("\"schema\": \"g3pdl-proof/1\""));
    }

    #[test]
    fn proof_schema_violations() {
        assert!(matches!(
            parse_proof(r#"{"schema":"g3pdl-proof/2","nodes":[],"root":0}"#),
            Err(FileError::BadSchema { .. })
        ));
        // Empty node list: the root is undefined.
        assert!(matches!(
            parse_proof(r#"{"schema":"g3pdl-proof/1","nodes":[],"root":0}"#),
            Err(FileError::NoRoot(0))
        ));
        let dangling = r#"{
            "schema": "g3pdl-proof/1",
            "nodes": [
                {"id": 0, "sequent": "|- x: p", "rule": "Bud", "principal": null,
                 "params": {}, "premises": [], "companion": 5}
            ],
            "root": 0
        }"#;
        assert!(matches!(dangling_err(dangling), FileError::Node { .. }));
        let unknown_rule = r#"{
            "schema": "g3pdl-proof/1",
            "nodes": [
                {"id": 0, "sequent": "|- x: p", "rule": "Frobnicate", "principal": null,
                 "params": {}, "premises": []}
            ],
            "root": 0
        }"#;
        assert!(matches!(dangling_err(unknown_rule), FileError::UnknownRule(_)));
        let bad_param = r#"{
            "schema": "g3pdl-proof/1",
            "nodes": [
                {"id": 0, "sequent": "x: p |- x: p", "rule": "Ax", "principal": "x: p",
                 "params": {"fresh": "y"}, "premises": []}
            ],
            "root": 0
        }"#;
        assert!(matches!(dangling_err(bad_param), FileError::Node { .. }));
    }

    fn dangling_err(text: &str) -> FileError {
        parse_proof(text).unwrap_err()
    }

    #[test]
    fn open_nodes_are_not_serializable() {
        let mut b = ProofBuilder::new();
        let root = b.add_open(parse_sequent("|- x: p").unwrap());
        let proof = b.finish(root);
        assert!(matches!(render_proof(&proof), Err(FileError::OpenNode(_))));
    }

    #[test]
    fn params_round_trip_through_documents() {
        let params = RuleParams {
            fresh: Some(Label::new("y")),
            via: None,
            from: None,
            to: None,
            cut: None,
            contract: true,
        };
        let doc = encode_params(&params);
        let back = decode_params(0, RuleName::BoxR, &doc).unwrap();
        assert_eq!(back, params);
        let cut_params = RuleParams {
            cut: Some(Item::fml(Label::new("x"), crate::syntax::Formula::atom("r"))),
            ..RuleParams::default()
        };
        let doc = encode_params(&cut_params);
        let back = decode_params(0, RuleName::Cut, &doc).unwrap();
        assert_eq!(back, cut_params);
        let subst_params = RuleParams {
            from: Some(Label::new("x")),
            to: Some(Label::new("y")),
            ..RuleParams::default()
        };
        let doc = encode_params(&subst_params);
        let back = decode_params(0, RuleName::Subst, &doc).unwrap();
        assert_eq!(back, subst_params);
    }

    #[test]
    fn model_round_trip_and_errors() {
        let text = r#"{
            "schema": "g3pdl-model/1",
            "states": ["s1", "s2"],
            "props": {"p": ["s2"]},
            "progs": {"a": [["s1", "s2"]]},
            "valuation": {"x": "s1"}
        }"#;
        let (model, val) = parse_model(text).unwrap();
        assert_eq!(model.states.len(), 2);
        assert_eq!(
            model.prog_rel(&ProgName::new("a")),
            BTreeSet::from([("s1".to_string(), "s2".to_string())])
        );
        let val = val.unwrap();
        assert_eq!(val.get(&Label::new("x")), Some(&"s1".to_string()));
        let rendered = render_model(&model, Some(&val));
        let (back_m, back_v) = parse_model(&rendered).unwrap();
        assert_eq!(back_m, model);
        assert_eq!(back_v, Some(val));

        assert!(matches!(
            parse_model(r#"{"schema":"g3pdl-model/1","states":[],"props":{},"progs":{}}"#),
            Err(FileError::NoStates)
        ));
        assert!(matches!(
            parse_model(
                r#"{"schema":"g3pdl-model/1","states":["s1"],"props":{},"progs":{"a":[["s1","s9"]]}}"#
            ),
            Err(FileError::UnknownState(..))
        ));
    }
}
