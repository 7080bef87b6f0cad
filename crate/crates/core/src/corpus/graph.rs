use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::schema::{ElementKind, ResponseType, Schema};
use super::temporal::{normalize_temporal, TemporalTuple};
use crate::error::{Error, Result};

/// WordNet supersenses that mark an argument node as referring to an event.
pub const EVENTIVE_SUPERSENSES: [&str; 3] = ["noun.event", "noun.state", "noun.process"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateNode {
    pub id: String,
    #[serde(default)]
    pub span: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgumentNode {
    pub id: String,
    #[serde(default)]
    pub span: String,
    #[serde(default)]
    pub eventive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersense: Option<String>,
}

/// Predicate-to-argument semantics edge within one sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticsEdge {
    pub id: String,
    pub predicate: String,
    pub argument: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sentence {
    #[serde(default)]
    pub predicates: Vec<PredicateNode>,
    #[serde(default)]
    pub arguments: Vec<ArgumentNode>,
    #[serde(default)]
    pub edges: Vec<SemanticsEdge>,
}

/// Edge between two semantics nodes, within or across sentences. `source`
/// plays the role of e1 and `target` of e2 in relation annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentEdge {
    pub id: String,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Binary(bool),
    Index(u32),
    Tuple([f64; 4]),
}

impl Response {
    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Response::Binary(b) => Some(*b),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub element: String,
    pub property: String,
    pub annotator: String,
    pub value: Response,
    #[serde(rename = "confidence")]
    pub raw_confidence: u8,
    #[serde(skip)]
    pub ridit_confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentGraph {
    pub id: String,
    #[serde(default)]
    pub sentences: Vec<Sentence>,
    #[serde(default)]
    pub doc_edges: Vec<DocumentEdge>,
    #[serde(default)]
    pub annotations: Vec<AnnotationRecord>,
}

/// Where a node lives: sentence index and whether it is a predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeLocation {
    pub sentence: usize,
    pub kind: ElementKind,
}

impl DocumentGraph {
    /// Element kind and sentence for every element id in the document.
    pub fn element_index(&self) -> HashMap<&str, NodeLocation> {
        let mut index = HashMap::new();
        for (s, sent) in self.sentences.iter().enumerate() {
            for p in &sent.predicates {
                index.insert(
                    p.id.as_str(),
                    NodeLocation {
                        sentence: s,
                        kind: ElementKind::PredicateNode,
                    },
                );
            }
            for a in &sent.arguments {
                index.insert(
                    a.id.as_str(),
                    NodeLocation {
                        sentence: s,
                        kind: ElementKind::ArgumentNode,
                    },
                );
            }
            for e in &sent.edges {
                index.insert(
                    e.id.as_str(),
                    NodeLocation {
                        sentence: s,
                        kind: ElementKind::PredicateArgumentEdge,
                    },
                );
            }
        }
        let sentence_of = |id: &str, index: &HashMap<&str, NodeLocation>| {
            index.get(id).map(|l| l.sentence).unwrap_or(0)
        };
        for e in &self.doc_edges {
            let s = sentence_of(&e.source, &index).max(sentence_of(&e.target, &index));
            index.insert(
                e.id.as_str(),
                NodeLocation {
                    sentence: s,
                    kind: ElementKind::DocumentEdge,
                },
            );
        }
        index
    }

    pub fn predicate_count(&self) -> usize {
        self.sentences.iter().map(|s| s.predicates.len()).sum()
    }

    pub fn argument_count(&self) -> usize {
        self.sentences.iter().map(|s| s.arguments.len()).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.sentences.iter().map(|s| s.edges.len()).sum()
    }

    /// Check structural invariants and that every annotation fits the schema.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let ctx = |msg: String| Error::Consistency(format!("document `{}`: {msg}", self.id));
        let mut seen: HashSet<&str> = HashSet::new();
        let check_id = |id: &str| -> Result<()> {
            if id.is_empty() {
                Err(ctx("empty element id".into()))
            } else {
                Ok(())
            }
        };
        for sent in &self.sentences {
            for p in &sent.predicates {
                check_id(&p.id)?;
                if !seen.insert(&p.id) {
                    return Err(ctx(format!("duplicate element id `{}`", p.id)));
                }
            }
            for a in &sent.arguments {
                check_id(&a.id)?;
                if !seen.insert(&a.id) {
                    return Err(ctx(format!("duplicate element id `{}`", a.id)));
                }
                if a.eventive {
                    let ok = a
                        .supersense
                        .as_deref()
                        .is_some_and(|s| EVENTIVE_SUPERSENSES.contains(&s));
                    if !ok {
                        return Err(ctx(format!(
                            "eventive argument `{}` lacks an event supersense",
                            a.id
                        )));
                    }
                }
            }
        }
        for sent in &self.sentences {
            let preds: HashSet<&str> = sent.predicates.iter().map(|p| p.id.as_str()).collect();
            let args: HashSet<&str> = sent.arguments.iter().map(|a| a.id.as_str()).collect();
            for e in &sent.edges {
                check_id(&e.id)?;
                if !seen.insert(&e.id) {
                    return Err(ctx(format!("duplicate element id `{}`", e.id)));
                }
                if !preds.contains(e.predicate.as_str()) || !args.contains(e.argument.as_str()) {
                    return Err(ctx(format!(
                        "semantics edge `{}` must join a predicate to an argument of the same sentence",
                        e.id
                    )));
                }
            }
        }
        let index = self.element_index();
        for e in &self.doc_edges {
            check_id(&e.id)?;
            if !seen.insert(&e.id) {
                return Err(ctx(format!("duplicate element id `{}`", e.id)));
            }
            for end in [&e.source, &e.target] {
                match index.get(end.as_str()).map(|l| l.kind) {
                    Some(ElementKind::PredicateNode) | Some(ElementKind::ArgumentNode) => {}
                    _ => {
                        return Err(ctx(format!(
                            "document edge `{}` endpoint `{end}` is not a semantics node",
                            e.id
                        )))
                    }
                }
            }
            if e.source == e.target {
                return Err(ctx(format!("document edge `{}` is a self loop", e.id)));
            }
        }

        for (n, rec) in self.annotations.iter().enumerate() {
            let spec = schema.get(&rec.property).ok_or_else(|| {
                Error::Schema(format!(
                    "document `{}` annotation {n}: unknown property `{}`",
                    self.id, rec.property
                ))
            })?;
            let loc = index.get(rec.element.as_str()).ok_or_else(|| {
                Error::Schema(format!(
                    "document `{}` annotation {n}: unknown element `{}`",
                    self.id, rec.element
                ))
            })?;
            if loc.kind != spec.attaches_to {
                return Err(Error::Schema(format!(
                    "document `{}` annotation {n}: property `{}` attaches to {:?} but `{}` is a {:?}",
                    self.id, rec.property, spec.attaches_to, rec.element, loc.kind
                )));
            }
            if !(1..=5).contains(&rec.raw_confidence) {
                return Err(ctx(format!(
                    "annotation {n}: confidence {} outside 1..=5",
                    rec.raw_confidence
                )));
            }
            check_response(spec.response, &rec.value).map_err(|m| {
                Error::Schema(format!(
                    "document `{}` annotation {n} (`{}`): {m}",
                    self.id, rec.property
                ))
            })?;
        }

        // gated records need a parent record with the gating value
        let mut answers: HashMap<(&str, &str, &str), Option<bool>> = HashMap::new();
        for rec in &self.annotations {
            answers.insert(
                (&rec.element, &rec.property, &rec.annotator),
                rec.value.as_bool(),
            );
        }
        for rec in &self.annotations {
            let spec = schema.get(&rec.property).expect("checked above");
            if let Some(gate) = &spec.gate {
                let parent = answers.get(&(
                    rec.element.as_str(),
                    gate.parent.as_str(),
                    rec.annotator.as_str(),
                ));
                if parent != Some(&Some(gate.value)) {
                    return Err(ctx(format!(
                        "`{}` on `{}` by `{}` requires `{}` = {}",
                        rec.property, rec.element, rec.annotator, gate.parent, gate.value
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that every document edge spans at most `window - 1` sentences.
    pub fn check_window(&self, window: usize) -> Result<()> {
        let index = self.element_index();
        for e in &self.doc_edges {
            let a = index[e.source.as_str()].sentence;
            let b = index[e.target.as_str()].sentence;
            if a.abs_diff(b) + 1 > window {
                return Err(Error::Consistency(format!(
                    "document `{}`: edge `{}` spans sentences {a} and {b}, outside window {window}",
                    self.id, e.id
                )));
            }
        }
        Ok(())
    }
}

fn check_response(kind: ResponseType, value: &Response) -> std::result::Result<(), String> {
    match (kind, value) {
        (ResponseType::Binary, Response::Binary(_)) => Ok(()),
        (ResponseType::Categorical { k }, Response::Index(i)) if *i < k => Ok(()),
        (ResponseType::Ordinal { levels }, Response::Index(j)) if (1..=levels).contains(j) => {
            Ok(())
        }
        (ResponseType::TemporalTuple, Response::Tuple(raw)) => normalize_temporal(*raw)
            .map(|_: TemporalTuple| ())
            .map_err(|e| e.to_string()),
        (kind, value) => Err(format!(
            "value {value:?} does not fit response type {kind:?}"
        )),
    }
}
