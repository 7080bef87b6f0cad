//! Compilation of annotation records into discrete weighted observations.
//!
//! Every annotation becomes an outcome code of its property's
//! [`PropertyModel`]; conditionally revealed properties additionally yield an
//! "absent" outcome whenever the annotator's answer to the gate parent rules
//! the property out. Distinct `(property, annotator, outcome)` triples are
//! interned as keys so that likelihood tables and M-step sufficient
//! statistics are indexed by key rather than by record.

use std::collections::{BTreeMap, HashMap};

use crate::corpus::{normalize_temporal, Classification, DocumentGraph, Response, Schema};
use crate::error::{Error, Result};
use crate::likelihoods::{temporal_outcome, Family, PropertyModel};
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObsKey {
    pub property: usize,
    pub annotator: usize,
    pub outcome: usize,
}

/// A single weighted observation, pointing at an interned key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedKey {
    pub key: u32,
    pub weight: f64,
}

/// Observations grouped by element id for one document.
#[derive(Debug, Clone, Default)]
pub struct DocObservations {
    pub elements: BTreeMap<String, Vec<WeightedKey>>,
}

/// Interned keys and annotator names shared by every document compiled
/// against it.
#[derive(Debug, Clone, Default)]
pub struct ObsIndex {
    pub annotators: Vec<String>,
    annotator_ids: HashMap<String, usize>,
    pub keys: Vec<ObsKey>,
    key_ids: HashMap<ObsKey, u32>,
}

impl ObsIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn annotator_id(&mut self, name: &str) -> usize {
        if let Some(&id) = self.annotator_ids.get(name) {
            return id;
        }
        let id = self.annotators.len();
        self.annotators.push(name.to_owned());
        self.annotator_ids.insert(name.to_owned(), id);
        id
    }

    fn intern(&mut self, key: ObsKey) -> u32 {
        if let Some(&id) = self.key_ids.get(&key) {
            return id;
        }
        let id = self.keys.len() as u32;
        self.keys.push(key);
        self.key_ids.insert(key, id);
        id
    }
}

/// Outcome code of a response under `model` (without the hurdle offset).
pub fn base_outcome(family: Family, value: &Response) -> Result<usize> {
    match (family, value) {
        (Family::Binary, Response::Binary(b)) => Ok(usize::from(*b)),
        (Family::Categorical { k }, Response::Index(i)) if (*i as usize) < k => Ok(*i as usize),
        (Family::Ordinal { levels }, Response::Index(j)) if *j >= 1 && (*j as usize) <= levels => {
            Ok(*j as usize - 1)
        }
        (Family::Temporal, Response::Tuple(raw)) => {
            let t = normalize_temporal(*raw)?;
            Ok(temporal_outcome(t.lock_start, t.lock_end, t.free_order))
        }
        _ => Err(Error::Schema(format!(
            "response {value:?} does not fit family {family:?}"
        ))),
    }
}

fn weight_of(rec_conf: Option<f64>, weighting: bool) -> Result<f64> {
    if !weighting {
        return Ok(1.0);
    }
    rec_conf.ok_or_else(|| {
        Error::Consistency("confidence weighting requires ridit-scored annotations".into())
    })
}

/// Compiles one document's annotations. With `weighting`, each observation is
/// weighted by its ridit-scored confidence; otherwise by one.
pub fn compile_document(
    doc: &DocumentGraph,
    schema: &Schema,
    index: &mut ObsIndex,
    weighting: bool,
) -> Result<DocObservations> {
    let mut out = DocObservations::default();
    // (element, property, annotator) -> record position
    let mut lookup: HashMap<(&str, usize, &str), usize> = HashMap::new();
    for (i, rec) in doc.annotations.iter().enumerate() {
        let p = schema
            .index_of(&rec.property)
            .ok_or_else(|| Error::Schema(format!("unknown property `{}`", rec.property)))?;
        lookup.insert((rec.element.as_str(), p, rec.annotator.as_str()), i);
    }
    for rec in &doc.annotations {
        let p = schema.index_of(&rec.property).expect("checked above");
        let spec = &schema.properties()[p];
        let model = PropertyModel::new(Family::from(spec.response), spec.gate.is_some());
        let annotator = index.annotator_id(&rec.annotator);
        let base = base_outcome(model.family, &rec.value)?;
        let outcome = if model.gated { base + 1 } else { base };
        let key = index.intern(ObsKey {
            property: p,
            annotator,
            outcome,
        });
        let weight = weight_of(rec.ridit_confidence, weighting)?;
        out.elements
            .entry(rec.element.clone())
            .or_default()
            .push(WeightedKey { key, weight });

        // absent outcomes for gated children ruled out by this answer
        if let Response::Binary(answer) = rec.value {
            for (c, child) in schema.properties().iter().enumerate() {
                let Some(gate) = &child.gate else { continue };
                if gate.parent != spec.name || gate.value == answer {
                    continue;
                }
                if lookup.contains_key(&(rec.element.as_str(), c, rec.annotator.as_str())) {
                    return Err(Error::Consistency(format!(
                        "document `{}`: `{}` on `{}` by `{}` contradicts its gate",
                        doc.id, child.name, rec.element, rec.annotator
                    )));
                }
                let key = index.intern(ObsKey {
                    property: c,
                    annotator,
                    outcome: 0,
                });
                out.elements
                    .entry(rec.element.clone())
                    .or_default()
                    .push(WeightedKey { key, weight });
            }
        }
    }
    Ok(out)
}

/// A corpus compiled against one [`ObsIndex`].
#[derive(Debug, Clone)]
pub struct CompiledCorpus {
    pub docs: Vec<DocumentGraph>,
    pub observations: Vec<DocObservations>,
    pub index: ObsIndex,
    pub weighting: bool,
}

impl CompiledCorpus {
    pub fn new(
        docs: Vec<DocumentGraph>,
        schema: &Schema,
        mut index: ObsIndex,
        weighting: bool,
    ) -> Result<Self> {
        let observations = docs
            .iter()
            .map(|d| compile_document(d, schema, &mut index, weighting))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            docs,
            observations,
            index,
            weighting,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

/// Log-likelihood of every interned key under every type of its property's
/// classification. Row `key` starts at `offsets[key]` and has
/// `inventory.count(classification)` entries.
#[derive(Debug, Clone)]
pub struct LoglikTable {
    pub offsets: Vec<usize>,
    pub values: Vec<f64>,
}

impl LoglikTable {
    pub fn compute(index: &ObsIndex, params: &ModelParams) -> Self {
        let mut offsets = Vec::with_capacity(index.keys.len());
        let mut values = Vec::new();
        // dense intercepts per (property, annotator)
        let rho: Vec<Vec<Vec<f64>>> = params
            .properties
            .iter()
            .map(|p| index.annotators.iter().map(|a| p.rho_or_zero(a)).collect())
            .collect();
        for key in &index.keys {
            offsets.push(values.len());
            let p = &params.properties[key.property];
            let r = &rho[key.property][key.annotator];
            for mu in &p.mu {
                values.push(p.model.loglik(mu, &p.shared, r, key.outcome));
            }
        }
        Self { offsets, values }
    }

    pub fn row(&self, key: u32, k: usize) -> &[f64] {
        let o = self.offsets[key as usize];
        &self.values[o..o + k]
    }
}

/// Unary log-potential contributed by an element's observations:
/// `sum_obs weight * loglik(obs | type)` for each type.
pub fn evidence_potential(obs: &[WeightedKey], table: &LoglikTable, k: usize) -> Vec<f64> {
    let mut pot = vec![0.0; k];
    for wk in obs {
        if wk.weight == 0.0 {
            continue;
        }
        for (p, l) in pot.iter_mut().zip(table.row(wk.key, k)) {
            *p += wk.weight * l;
        }
    }
    pot
}

/// Classification of every key's property.
pub fn key_classification(index: &ObsIndex, schema: &Schema) -> Vec<Classification> {
    index
        .keys
        .iter()
        .map(|k| schema.properties()[k.property].classification())
        .collect()
}
