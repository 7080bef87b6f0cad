use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of levels on the duration scale, from "effectively no time at all"
/// to "effectively forever".
pub const DURATION_LEVELS: u32 = 12;

/// Graph element kind a property attaches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    PredicateNode,
    ArgumentNode,
    PredicateArgumentEdge,
    DocumentEdge,
}

impl ElementKind {
    pub fn classification(self) -> Classification {
        match self {
            ElementKind::PredicateNode => Classification::Event,
            ElementKind::ArgumentNode => Classification::Entity,
            ElementKind::PredicateArgumentEdge => Classification::Role,
            ElementKind::DocumentEdge => Classification::Relation,
        }
    }
}

/// The four latent classifications. Each owns one property group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Event,
    Entity,
    Role,
    Relation,
}

impl Classification {
    pub const ALL: [Classification; 4] = [
        Classification::Event,
        Classification::Entity,
        Classification::Role,
        Classification::Relation,
    ];

    pub fn element_kind(self) -> ElementKind {
        match self {
            Classification::Event => ElementKind::PredicateNode,
            Classification::Entity => ElementKind::ArgumentNode,
            Classification::Role => ElementKind::PredicateArgumentEdge,
            Classification::Relation => ElementKind::DocumentEdge,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Event => "event",
            Classification::Entity => "entity",
            Classification::Role => "role",
            Classification::Relation => "relation",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Classification {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "event" => Ok(Classification::Event),
            "entity" => Ok(Classification::Entity),
            "role" => Ok(Classification::Role),
            "relation" => Ok(Classification::Relation),
            other => Err(Error::Argument(format!("unknown classification `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ResponseType {
    Binary,
    Categorical { k: u32 },
    Ordinal { levels: u32 },
    TemporalTuple,
}

/// A conditionally revealed property is asked only when the annotator gave
/// `value` for the binary `parent` property on the same element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub parent: String,
    pub value: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    pub subspace: String,
    pub attaches_to: ElementKind,
    pub response: ResponseType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<Gate>,
}

impl PropertySpec {
    pub fn classification(&self) -> Classification {
        self.attaches_to.classification()
    }
}

/// A validated, ordered list of property specifications.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    properties: Vec<PropertySpec>,
    by_name: HashMap<String, usize>,
}

impl Schema {
    pub fn new(properties: Vec<PropertySpec>) -> Result<Self> {
        let mut by_name = HashMap::with_capacity(properties.len());
        for (i, p) in properties.iter().enumerate() {
            if by_name.insert(p.name.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate property `{}`", p.name)));
            }
            match p.response {
                ResponseType::Ordinal { levels } if levels < 2 => {
                    return Err(Error::Schema(format!(
                        "ordinal property `{}` needs at least 2 levels",
                        p.name
                    )))
                }
                ResponseType::Categorical { k } if k < 2 => {
                    return Err(Error::Schema(format!(
                        "categorical property `{}` needs at least 2 categories",
                        p.name
                    )))
                }
                ResponseType::TemporalTuple if p.attaches_to != ElementKind::DocumentEdge => {
                    return Err(Error::Schema(format!(
                        "temporal property `{}` must attach to document edges",
                        p.name
                    )))
                }
                _ => {}
            }
            if p.subspace.ends_with("duration") {
                if let ResponseType::Ordinal { levels } = p.response {
                    if levels != DURATION_LEVELS {
                        return Err(Error::Schema(format!(
                            "duration property `{}` must use {DURATION_LEVELS} levels",
                            p.name
                        )));
                    }
                }
            }
        }
        for p in &properties {
            if let Some(gate) = &p.gate {
                let parent = by_name
                    .get(&gate.parent)
                    .map(|&i| &properties[i])
                    .ok_or_else(|| {
                        Error::Schema(format!(
                            "property `{}` is gated on unknown property `{}`",
                            p.name, gate.parent
                        ))
                    })?;
                if parent.attaches_to != p.attaches_to {
                    return Err(Error::Schema(format!(
                        "gate parent `{}` attaches to a different element kind than `{}`",
                        parent.name, p.name
                    )));
                }
                if parent.response != ResponseType::Binary || parent.gate.is_some() {
                    return Err(Error::Schema(format!(
                        "gate parent `{}` of `{}` must be an ungated binary property",
                        parent.name, p.name
                    )));
                }
            }
        }
        Ok(Self {
            properties,
            by_name,
        })
    }

    pub fn properties(&self) -> &[PropertySpec] {
        &self.properties
    }

    pub fn len(&self) -> usize {
        self.properties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.properties.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&PropertySpec> {
        self.index_of(name).map(|i| &self.properties[i])
    }

    /// Property indices belonging to one classification, in schema order.
    pub fn group(&self, classification: Classification) -> impl Iterator<Item = usize> + '_ {
        self.properties
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.classification() == classification)
            .map(|(i, _)| i)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let props: Vec<PropertySpec> = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::new(props)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.properties).expect("schema serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary(name: &str, kind: ElementKind) -> PropertySpec {
        PropertySpec {
            name: name.into(),
            subspace: "test".into(),
            attaches_to: kind,
            response: ResponseType::Binary,
            gate: None,
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = Schema::new(vec![
            binary("a", ElementKind::PredicateNode),
            binary("a", ElementKind::ArgumentNode),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn gate_parent_must_share_kind_and_be_binary() {
        let mut child = binary("child", ElementKind::ArgumentNode);
        child.gate = Some(Gate {
            parent: "parent".into(),
            value: true,
        });
        let err = Schema::new(vec![
            binary("parent", ElementKind::PredicateNode),
            child.clone(),
        ]);
        assert!(err.is_err());

        let mut parent = binary("parent", ElementKind::ArgumentNode);
        parent.response = ResponseType::Ordinal { levels: 3 };
        assert!(Schema::new(vec![parent, child.clone()]).is_err());

        let ok = Schema::new(vec![binary("parent", ElementKind::ArgumentNode), child]);
        assert!(ok.is_ok());
    }

    #[test]
    fn ordinal_needs_two_levels_and_duration_twelve() {
        let mut p = binary("d", ElementKind::PredicateNode);
        p.response = ResponseType::Ordinal { levels: 1 };
        assert!(Schema::new(vec![p.clone()]).is_err());
        p.subspace = "duration".into();
        p.response = ResponseType::Ordinal { levels: 5 };
        assert!(Schema::new(vec![p.clone()]).is_err());
        p.response = ResponseType::Ordinal { levels: 12 };
        assert!(Schema::new(vec![p]).is_ok());
    }

    #[test]
    fn json_round_trip() {
        let mut child = binary("child", ElementKind::PredicateNode);
        child.gate = Some(Gate {
            parent: "parent".into(),
            value: false,
        });
        let schema =
            Schema::new(vec![binary("parent", ElementKind::PredicateNode), child]).unwrap();
        let back = Schema::from_json(&schema.to_json()).unwrap();
        assert_eq!(schema, back);
    }
}
