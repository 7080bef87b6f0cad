//! Synthetic corpora sampled from the generative story with known types.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    has_free_pair, normalize_temporal, AnnotationRecord, ArgumentNode, Classification,
    DocumentEdge, DocumentGraph, ElementKind, FreeOrder, Gate, Lock, PredicateNode, PropertySpec,
    Response, ResponseType, Schema, SemanticsEdge, Sentence, DURATION_LEVELS,
};
use crate::error::{Error, Result};
use crate::factorgraph::{pair_element_id, relation_pairs};
use crate::likelihoods::{temporal_outcome, Family};
use crate::params::{ModelParams, TypeInventory};

fn prop(
    name: &str,
    subspace: &str,
    attaches_to: ElementKind,
    response: ResponseType,
    gate: Option<(&str, bool)>,
) -> PropertySpec {
    PropertySpec {
        name: name.into(),
        subspace: subspace.into(),
        attaches_to,
        response,
        gate: gate.map(|(parent, value)| Gate {
            parent: parent.into(),
            value,
        }),
    }
}

/// A small property schema with one representative of every response
/// family and both gate directions.
pub fn default_schema() -> Schema {
    use ElementKind::*;
    use ResponseType::*;
    let dur = Ordinal {
        levels: DURATION_LEVELS,
    };
    Schema::new(vec![
        prop(
            "natural_parts",
            "event_structure",
            PredicateNode,
            Binary,
            None,
        ),
        prop("telic", "event_structure", PredicateNode, Binary, None),
        prop(
            "part_similarity",
            "event_structure",
            PredicateNode,
            Binary,
            Some(("natural_parts", true)),
        ),
        prop(
            "avg_part_duration",
            "duration",
            PredicateNode,
            dur,
            Some(("natural_parts", true)),
        ),
        prop(
            "dynamic",
            "event_structure",
            PredicateNode,
            Binary,
            Some(("natural_parts", false)),
        ),
        prop(
            "situation_duration",
            "duration",
            PredicateNode,
            dur,
            Some(("natural_parts", false)),
        ),
        prop("particular", "genericity", ArgumentNode, Binary, None),
        prop("kind", "genericity", ArgumentNode, Binary, None),
        prop("abstract", "genericity", ArgumentNode, Binary, None),
        prop(
            "volition",
            "protoroles",
            PredicateArgumentEdge,
            Binary,
            None,
        ),
        prop(
            "awareness",
            "protoroles",
            PredicateArgumentEdge,
            Binary,
            None,
        ),
        prop(
            "change_of_state",
            "protoroles",
            PredicateArgumentEdge,
            Binary,
            None,
        ),
        prop(
            "distributive",
            "distributivity",
            PredicateArgumentEdge,
            Binary,
            None,
        ),
        prop("e1_part_of_e2", "mereology", DocumentEdge, Binary, None),
        prop("e2_part_of_e1", "mereology", DocumentEdge, Binary, None),
        prop("temporal", "time", DocumentEdge, TemporalTuple, None),
    ])
    .expect("default schema is valid")
}

/// How raw confidences of synthetic records are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfidenceModel {
    Constant(u8),
    /// Probabilities of levels 1..=5.
    Levels([f64; 5]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub inventory: TypeInventory,
    /// Logit distance between the two values each type can take on a
    /// property, used when `true_params` is absent.
    pub separation: f64,
    /// Standard deviation of annotator intercepts when `true_params` is
    /// absent.
    pub annotator_sd: f64,
    /// Explicit generating parameters; covariances are used to draw the
    /// intercepts of pool annotators that have none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_params: Option<ModelParams>,
    pub annotator_pool: usize,
    pub annotators_per_item: usize,
    pub documents: usize,
    pub sentences_per_doc: usize,
    pub predicates_per_sentence: usize,
    pub arguments_per_predicate: usize,
    pub eventive_prob: f64,
    pub window: usize,
    pub seed: u64,
    pub confidence: ConfidenceModel,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            inventory: TypeInventory {
                event: 3,
                entity: 2,
                role: 2,
                relation: 2,
            },
            separation: 4.0,
            annotator_sd: 0.3,
            true_params: None,
            annotator_pool: 20,
            annotators_per_item: 3,
            documents: 100,
            sentences_per_doc: 3,
            predicates_per_sentence: 1,
            arguments_per_predicate: 2,
            eventive_prob: 0.2,
            window: 2,
            seed: 0,
            confidence: ConfidenceModel::Constant(5),
        }
    }
}

/// Latent type of one element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementLabel {
    pub document: String,
    pub element: String,
    pub classification: Classification,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Vec<DocumentGraph>,
    pub truth: Vec<ElementLabel>,
    pub params: ModelParams,
}

pub fn annotator_name(i: usize) -> String {
    format!("ann{i:03}")
}

/// Distinct discrete choice per "dimension" of a property's location,
/// used to keep types apart.
#[derive(Clone)]
enum Dim {
    Sign,
    Pick(usize),
}

fn dims_of(family: Family) -> Vec<Dim> {
    match family {
        Family::Binary | Family::Ordinal { .. } => vec![Dim::Sign],
        Family::Categorical { k } => vec![Dim::Pick(k)],
        Family::Temporal => vec![Dim::Pick(3), Dim::Pick(3), Dim::Pick(3)],
    }
}

fn write_choice(family: Family, choice: &[usize], half: f64, mu: &mut [f64]) {
    let sign = |c: usize| if c == 1 { half } else { -half };
    match family {
        Family::Binary | Family::Ordinal { .. } => mu[0] = sign(choice[0]),
        Family::Categorical { k } => {
            for (i, m) in mu.iter_mut().enumerate().take(k) {
                *m = if i == choice[0] { half } else { -half };
            }
        }
        Family::Temporal => {
            for (b, &c) in choice.iter().enumerate() {
                for i in 0..3 {
                    mu[b * 3 + i] = if i == c { half } else { -half };
                }
            }
        }
    }
}

/// Parameters whose types sit at `±separation / 2` on every property,
/// with sign patterns that differ in at least two properties between any
/// two types of a classification (when the patterns allow it). Gate
/// locations mirror the parent property. Priors are uniform.
pub fn separated_params(
    schema: &Schema,
    inventory: TypeInventory,
    separation: f64,
    seed: u64,
) -> Result<ModelParams> {
    let mut params = ModelParams::init(schema, inventory, &[], seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let half = separation / 2.0;
    for c in Classification::ALL {
        let props: Vec<usize> = schema.group(c).collect();
        let dims: Vec<(usize, Dim)> = props
            .iter()
            .flat_map(|&p| {
                let fam = params.properties[p].model.family;
                dims_of(fam).into_iter().map(move |d| (p, d))
            })
            .collect();
        if dims.is_empty() {
            continue;
        }
        let k = inventory.count(c);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            dims.iter()
                .map(|(_, d)| match d {
                    Dim::Sign => rng.gen_range(0..2),
                    Dim::Pick(n) => rng.gen_range(0..*n),
                })
                .collect()
        };
        let hamming = |a: &[usize], b: &[usize]| a.iter().zip(b).filter(|(x, y)| x != y).count();
        let mut best: Option<(usize, Vec<Vec<usize>>)> = None;
        for _ in 0..2000 {
            let pats: Vec<Vec<usize>> = (0..k).map(|_| draw(&mut rng)).collect();
            let mut min_d = usize::MAX;
            for i in 0..k {
                for j in i + 1..k {
                    min_d = min_d.min(hamming(&pats[i], &pats[j]));
                }
            }
            if best.as_ref().is_none_or(|(d, _)| min_d > *d) {
                let done = min_d >= 2;
                best = Some((min_d, pats));
                if done {
                    break;
                }
            }
        }
        let (_, pats) = best.expect("at least one draw");
        for (t, pat) in pats.iter().enumerate() {
            let mut at = 0;
            for &p in &props {
                let pp = &mut params.properties[p];
                let fam = pp.model.family;
                let n = dims_of(fam).len();
                let off = usize::from(pp.model.gated);
                write_choice(fam, &pat[at..at + n], half, &mut pp.mu[t][off..]);
                at += n;
            }
        }
    }
    tie_gates(schema, &mut params);
    Ok(params)
}

/// Sets each gated property's gate location (and intercepts) to the
/// parent's, negated for gates opened by a `false` answer.
pub fn tie_gates(schema: &Schema, params: &mut ModelParams) {
    for (c, spec) in schema.properties().iter().enumerate() {
        let Some(gate) = &spec.gate else { continue };
        let p = schema.index_of(&gate.parent).expect("validated");
        let sign = if gate.value { 1.0 } else { -1.0 };
        let parent_mu: Vec<f64> = params.properties[p]
            .mu
            .iter()
            .map(|m| sign * m[0])
            .collect();
        let parent_rho: BTreeMap<String, f64> = params.properties[p]
            .rho
            .iter()
            .map(|(a, r)| (a.clone(), sign * r[0]))
            .collect();
        let child = &mut params.properties[c];
        for (m, pm) in child.mu.iter_mut().zip(parent_mu) {
            m[0] = pm;
        }
        for (a, r) in parent_rho {
            let d = child.model.rho_dim();
            child.rho.entry(a).or_insert_with(|| vec![0.0; d])[0] = r;
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        if self.annotators_per_item > self.annotator_pool {
            return Err(Error::Argument(format!(
                "{} annotators per item exceeds the pool of {}",
                self.annotators_per_item, self.annotator_pool
            )));
        }
        if !(0.0..=1.0).contains(&self.eventive_prob) {
            return Err(Error::Argument(
                "eventive probability outside [0, 1]".into(),
            ));
        }
        if self.window == 0 {
            return Err(Error::Argument("window must be at least 1".into()));
        }
        match &self.confidence {
            ConfidenceModel::Constant(l) if !(1..=5).contains(l) => Err(Error::Argument(format!(
                "confidence level {l} outside 1..=5"
            ))),
            ConfidenceModel::Levels(p)
                if p.iter().any(|x| !(*x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 =>
            {
                Err(Error::Argument(
                    "confidence level probabilities must sum to 1".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Generating parameters with intercepts for every pool annotator.
    pub fn resolve_params(&self, schema: &Schema) -> Result<ModelParams> {
        self.check()?;
        let mut params = match &self.true_params {
            Some(p) => {
                p.check_schema(schema)?;
                p.clone()
            }
            None => {
                let mut p = separated_params(schema, self.inventory, self.separation, self.seed)?;
                for prop in &mut p.properties {
                    prop.set_isotropic_sigma(self.annotator_sd.powi(2).max(1e-12));
                }
                p
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for prop in params.properties.iter_mut() {
            let d = prop.model.rho_dim();
            let chol = prop.sigma_matrix().cholesky().ok_or_else(|| {
                Error::Parameter(format!(
                    "covariance of `{}` is not positive definite",
                    prop.name
                ))
            })?;
            let l: DMatrix<f64> = chol.l();
            for a in 0..self.annotator_pool {
                let z =
                    DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let name = annotator_name(a);
                prop.rho
                    .entry(name)
                    .or_insert_with(|| (&l * z).as_slice().to_vec());
            }
        }
        if self.true_params.is_none() {
            tie_gates(schema, &mut params);
        }
        Ok(params)
    }
}

fn categorical_draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples a base outcome of `family` at the given location.
fn draw_outcome(
    rng: &mut ChaCha8Rng,
    family: Family,
    mu: &[f64],
    shared: &[f64],
    rho: &[f64],
) -> usize {
    let outcomes = family.outcomes();
    let probs: Vec<f64> = outcomes
        .iter()
        .map(|&o| family.loglik(mu, shared, rho, o).exp())
        .collect();
    outcomes[categorical_draw(rng, &probs)]
}

/// A normalized temporal tuple realizing a temporal outcome code, with
/// interior points drawn on a grid of thousandths.
pub fn temporal_tuple(rng: &mut ChaCha8Rng, outcome: usize) -> [f64; 4] {
    let ls = Lock::ALL[outcome / 12];
    let le = Lock::ALL[(outcome / 4) % 3];
    let fo = match outcome % 4 {
        0 => None,
        i => Some(FreeOrder::ALL[i - 1]),
    };
    let mut pair = || {
        let a = rng.gen_range(1..999u32);
        let b = rng.gen_range(a + 1..1000u32);
        (a as f64 / 1000.0, b as f64 / 1000.0)
    };
    let (lo, hi) = pair();
    let mid = lo;
    // (s1, s2, e1, e2)
    let t = match (ls, le) {
        (Lock::E1, Lock::E2) => {
            let (e1, s2) = match fo.expect("free pair") {
                FreeOrder::E1Earlier => (lo, hi),
                FreeOrder::Tie => (mid, mid),
                FreeOrder::E2Earlier => (hi, lo),
            };
            [0.0, s2, e1, 1.0]
        }
        (Lock::E2, Lock::E1) => {
            let (s1, e2) = match fo.expect("free pair") {
                FreeOrder::E1Earlier => (lo, hi),
                FreeOrder::Tie => (mid, mid),
                FreeOrder::E2Earlier => (hi, lo),
            };
            [s1, 0.0, 1.0, e2]
        }
        (Lock::E1, Lock::E1) => [0.0, lo, 1.0, hi],
        (Lock::E2, Lock::E2) => [lo, 0.0, hi, 1.0],
        (Lock::Both, Lock::E1) => [0.0, 0.0, 1.0, mid],
        (Lock::Both, Lock::E2) => [0.0, 0.0, mid, 1.0],
        (Lock::E1, Lock::Both) => [0.0, mid, 1.0, 1.0],
        (Lock::E2, Lock::Both) => [mid, 0.0, 1.0, 1.0],
        (Lock::Both, Lock::Both) => [0.0, 0.0, 1.0, 1.0],
    };
    debug_assert!(has_free_pair(ls, le) == fo.is_some());
    debug_assert_eq!(
        normalize_temporal(t)
            .map(|n| temporal_outcome(n.lock_start, n.lock_end, n.free_order))
            .ok(),
        Some(outcome)
    );
    t
}

struct DocSampler<'a> {
    schema: &'a Schema,
    params: &'a ModelParams,
    config: &'a SynthConfig,
    annotators: Vec<String>,
    rng: ChaCha8Rng,
}

impl DocSampler<'_> {
    fn confidence(&mut self) -> u8 {
        match &self.config.confidence {
            ConfidenceModel::Constant(l) => *l,
            ConfidenceModel::Levels(p) => 1 + categorical_draw(&mut self.rng, p) as u8,
        }
    }

    fn annotate(
        &mut self,
        element: &str,
        c: Classification,
        label: usize,
        out: &mut Vec<AnnotationRecord>,
    ) {
        let n = self.config.annotators_per_item;
        let mut chosen = sample_indices(&mut self.rng, self.annotators.len(), n).into_vec();
        chosen.sort_unstable();
        let props: Vec<usize> = self.schema.group(c).collect();
        for a in chosen {
            let annotator = self.annotators[a].clone();
            let mut answers: HashMap<&str, bool> = HashMap::new();
            // ungated properties first so gates can read their parents
            let ordered = props
                .iter()
                .filter(|&&p| self.schema.properties()[p].gate.is_none())
                .chain(
                    props
                        .iter()
                        .filter(|&&p| self.schema.properties()[p].gate.is_some()),
                );
            for &p in ordered {
                let spec = &self.schema.properties()[p];
                if let Some(gate) = &spec.gate {
                    if answers.get(gate.parent.as_str()) != Some(&gate.value) {
                        continue;
                    }
                }
                let pp = &self.params.properties[p];
                let off = usize::from(pp.model.gated);
                let rho = pp.rho_or_zero(&annotator);
                let family = pp.model.family;
                let o = draw_outcome(
                    &mut self.rng,
                    family,
                    &pp.mu[label][off..],
                    &pp.shared,
                    &rho[off..],
                );
                let value = match family {
                    Family::Binary => {
                        answers.insert(spec.name.as_str(), o == 1);
                        Response::Binary(o == 1)
                    }
                    Family::Categorical { .. } => Response::Index(o as u32),
                    Family::Ordinal { .. } => Response::Index(o as u32 + 1),
                    Family::Temporal => Response::Tuple(temporal_tuple(&mut self.rng, o)),
                };
                let confidence = self.confidence();
                out.push(AnnotationRecord {
                    element: element.to_owned(),
                    property: spec.name.clone(),
                    annotator: annotator.clone(),
                    value,
                    raw_confidence: confidence,
                    ridit_confidence: None,
                });
            }
        }
    }

    fn sample(&mut self, doc_id: String, truth: &mut Vec<ElementLabel>) -> DocumentGraph {
        let cfg = self.config;
        let pri = &self.params.priors;
        let inv = self.params.inventory;
        let mut labels: HashMap<String, (Classification, usize)> = HashMap::new();
        let mut sentences = Vec::with_capacity(cfg.sentences_per_doc);
        let mut order: Vec<String> = Vec::new();
        for s in 0..cfg.sentences_per_doc {
            let mut sent = Sentence::default();
            for p in 0..cfg.predicates_per_sentence {
                let pid = format!("{doc_id}.s{s}.p{p}");
                let te = categorical_draw(&mut self.rng, &pri.theta_event);
                labels.insert(pid.clone(), (Classification::Event, te));
                order.push(pid.clone());
                sent.predicates.push(PredicateNode {
                    id: pid.clone(),
                    span: format!("pred{p}"),
                });
                for a in 0..cfg.arguments_per_predicate {
                    let aid = format!("{pid}.a{a}");
                    let eventive = self.rng.gen::<f64>() < cfg.eventive_prob;
                    let tn = categorical_draw(&mut self.rng, &pri.theta_entity);
                    let row = (te * inv.entity + tn) * inv.role;
                    let tr = categorical_draw(&mut self.rng, &pri.theta_role[row..row + inv.role]);
                    let eid = format!("{pid}>a{a}");
                    labels.insert(aid.clone(), (Classification::Entity, tn));
                    labels.insert(eid.clone(), (Classification::Role, tr));
                    order.push(aid.clone());
                    order.push(eid.clone());
                    sent.arguments.push(ArgumentNode {
                        id: aid.clone(),
                        span: format!("arg{a}"),
                        eventive,
                        supersense: eventive.then(|| "noun.event".to_owned()),
                    });
                    sent.edges.push(SemanticsEdge {
                        id: eid,
                        predicate: pid.clone(),
                        argument: aid,
                    });
                }
            }
            sentences.push(sent);
        }
        let mut doc = DocumentGraph {
            id: doc_id.clone(),
            sentences,
            doc_edges: Vec::new(),
            annotations: Vec::new(),
        };
        for (current, earlier) in relation_pairs(&doc, cfg.window) {
            let (_, ta) = labels[&current];
            let (kb, tb) = labels[&earlier];
            let (block, cols) = match kb {
                Classification::Event => (&pri.theta_rel_event_event, inv.event),
                _ => (&pri.theta_rel_event_entity, inv.entity),
            };
            let row = (ta * cols + tb) * inv.relation;
            let tq = categorical_draw(&mut self.rng, &block[row..row + inv.relation]);
            let id = pair_element_id(&current, &earlier);
            labels.insert(id.clone(), (Classification::Relation, tq));
            order.push(id.clone());
            doc.doc_edges.push(DocumentEdge {
                id,
                source: current,
                target: earlier,
            });
        }
        let mut records = Vec::new();
        for element in &order {
            let (c, label) = labels[element];
            self.annotate(element, c, label, &mut records);
            truth.push(ElementLabel {
                document: doc_id.clone(),
                element: element.clone(),
                classification: c,
                label,
            });
        }
        doc.annotations = records;
        doc
    }
}

/// Samples a corpus, its latent labels and the generating parameters.
/// Each document draws from its own stream of the seeded generator.
pub fn sample_corpus(schema: &Schema, config: &SynthConfig) -> Result<SynthOutput> {
    let params = config.resolve_params(schema)?;
    let annotators: Vec<String> = (0..config.annotator_pool).map(annotator_name).collect();
    let mut corpus = Vec::with_capacity(config.documents);
    let mut truth = Vec::new();
    for d in 0..config.documents {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(d as u64 + 1);
        let mut sampler = DocSampler {
            schema,
            params: &params,
            config,
            annotators: annotators.clone(),
            rng,
        };
        corpus.push(sampler.sample(format!("doc{d:04}"), &mut truth));
    }
    Ok(SynthOutput {
        corpus,
        truth,
        params,
    })
}

/// Element and annotation-category counts over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences: usize,
    pub predicates: usize,
    pub arguments: usize,
    pub edges: usize,
    pub doc_edges: usize,
    pub annotations: usize,
    /// Per property: `(category label, record count)` in category order.
    pub properties: Vec<(String, Vec<(String, usize)>)>,
}

fn category_labels(response: ResponseType) -> Vec<String> {
    match response {
        ResponseType::Binary => vec!["false".into(), "true".into()],
        ResponseType::Categorical { k } => (0..k).map(|i| format!("category {i}")).collect(),
        ResponseType::Ordinal { levels } => (1..=levels).map(|j| format!("level {j}")).collect(),
        ResponseType::TemporalTuple => {
            let name = |l: Lock| format!("{l:?}").to_lowercase();
            let mut out = Vec::new();
            for ls in Lock::ALL {
                for le in Lock::ALL {
                    out.push(format!("start {} / end {}", name(ls), name(le)));
                }
            }
            out
        }
    }
}

fn category_index(response: ResponseType, value: &Response) -> Option<usize> {
    match (response, value) {
        (ResponseType::Binary, Response::Binary(b)) => Some(usize::from(*b)),
        (ResponseType::Categorical { .. }, Response::Index(i)) => Some(*i as usize),
        (ResponseType::Ordinal { .. }, Response::Index(j)) => Some(*j as usize - 1),
        (ResponseType::TemporalTuple, Response::Tuple(raw)) => normalize_temporal(*raw)
            .ok()
            .map(|t| t.lock_start.index() * 3 + t.lock_end.index()),
        _ => None,
    }
}

pub fn corpus_stats(corpus: &[DocumentGraph], schema: &Schema) -> CorpusStats {
    let mut properties: Vec<(String, Vec<(String, usize)>)> = schema
        .properties()
        .iter()
        .map(|s| {
            (
                s.name.clone(),
                category_labels(s.response)
                    .into_iter()
                    .map(|l| (l, 0))
                    .collect(),
            )
        })
        .collect();
    let mut stats = CorpusStats {
        documents: corpus.len(),
        sentences: 0,
        predicates: 0,
        arguments: 0,
        edges: 0,
        doc_edges: 0,
        annotations: 0,
        properties: Vec::new(),
    };
    for doc in corpus {
        stats.sentences += doc.sentences.len();
        stats.predicates += doc.predicate_count();
        stats.arguments += doc.argument_count();
        stats.edges += doc.edge_count();
        stats.doc_edges += doc.doc_edges.len();
        stats.annotations += doc.annotations.len();
        for rec in &doc.annotations {
            let Some(p) = schema.index_of(&rec.property) else {
                continue;
            };
            if let Some(i) = category_index(schema.properties()[p].response, &rec.value) {
                properties[p].1[i].1 += 1;
            }
        }
    }
    stats.properties = properties;
    stats
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl CorpusStats {
    /// Count/percent table, one line per property category.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for (name, n) in [
            ("documents", self.documents),
            ("sentences", self.sentences),
            ("predicates", self.predicates),
            ("arguments", self.arguments),
            ("edges", self.edges),
            ("document edges", self.doc_edges),
            ("annotations", self.annotations),
        ] {
            let _ = writeln!(s, "{name}\t{}", thousands(n));
        }
        for (prop, cats) in &self.properties {
            let total: usize = cats.iter().map(|c| c.1).sum();
            for (label, n) in cats {
                let pct = if total > 0 {
                    100.0 * *n as f64 / total as f64
                } else {
                    0.0
                };
                let _ = writeln!(s, "{prop}\t{label}\t{} ({pct:.0}%)", thousands(*n));
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ridit_score_corpus, TemporalTuple};

    fn small() -> SynthConfig {
        SynthConfig {
            documents: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_documents() {
        let out = sample_corpus(
            &default_schema(),
            &SynthConfig {
                documents: 0,
                ..small()
            },
        )
        .unwrap();
        assert!(out.corpus.is_empty() && out.truth.is_empty());
    }

    #[test]
    fn samples_validate_and_are_deterministic() {
        let schema = default_schema();
        let a = sample_corpus(&schema, &small()).unwrap();
        let b = sample_corpus(&schema, &small()).unwrap();
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.truth, b.truth);
        for d in &a.corpus {
            d.validate(&schema).unwrap();
            d.check_window(2).unwrap();
        }
        ridit_score_corpus(a.corpus, &schema).unwrap();
    }

    #[test]
    fn single_predicate_has_no_relations() {
        let cfg = SynthConfig {
            sentences_per_doc: 1,
            eventive_prob: 0.0,
            window: 1,
            ..small()
        };
        let out = sample_corpus(&default_schema(), &cfg).unwrap();
        assert!(out.corpus.iter().all(|d| d.doc_edges.is_empty()));
        assert!(out
            .truth
            .iter()
            .all(|l| l.classification != Classification::Relation));
    }

    #[test]
    fn event_frequencies_follow_the_prior() {
        let schema = default_schema();
        let mut params =
            separated_params(&schema, TypeInventory::new(3, 1, 1, 1).unwrap(), 4.0, 1).unwrap();
        params.priors.theta_event = vec![0.5, 0.3, 0.2];
        let cfg = SynthConfig {
            inventory: params.inventory,
            true_params: Some(params),
            documents: 10_000,
            sentences_per_doc: 1,
            predicates_per_sentence: 1,
            arguments_per_predicate: 0,
            annotators_per_item: 0,
            window: 1,
            ..SynthConfig::default()
        };
        let out = sample_corpus(&schema, &cfg).unwrap();
        let mut counts = [0usize; 3];
        for l in &out.truth {
            counts[l.label] += 1;
        }
        for (c, p) in counts.iter().zip([0.5, 0.3, 0.2]) {
            assert!((*c as f64 / 10_000.0 - p).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn gated_records_follow_their_gate() {
        let out = sample_corpus(&default_schema(), &small()).unwrap();
        let mut natural: HashMap<(String, String), bool> = HashMap::new();
        for d in &out.corpus {
            for r in d
                .annotations
                .iter()
                .filter(|r| r.property == "natural_parts")
            {
                natural.insert(
                    (r.element.clone(), r.annotator.clone()),
                    r.value.as_bool().unwrap(),
                );
            }
        }
        for d in &out.corpus {
            for r in &d.annotations {
                let key = (r.element.clone(), r.annotator.clone());
                match r.property.as_str() {
                    "part_similarity" | "avg_part_duration" => assert!(natural[&key]),
                    "dynamic" | "situation_duration" => assert!(!natural[&key]),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn temporal_tuples_are_normalized() {
        let out = sample_corpus(&default_schema(), &small()).unwrap();
        let mut n = 0;
        for d in &out.corpus {
            for r in &d.annotations {
                if let Response::Tuple(raw) = r.value {
                    let t: TemporalTuple = normalize_temporal(raw).unwrap();
                    assert_eq!(t.values(), raw);
                    n += 1;
                }
            }
        }
        assert!(n > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for o in crate::likelihoods::temporal_outcomes() {
            for _ in 0..20 {
                let t = normalize_temporal(temporal_tuple(&mut rng, o)).unwrap();
                assert_eq!(temporal_outcome(t.lock_start, t.lock_end, t.free_order), o);
            }
        }
    }

    #[test]
    fn separated_patterns_differ_in_two_places() {
        let schema = default_schema();
        let inv = TypeInventory::new(3, 2, 2, 2).unwrap();
        let p = separated_params(&schema, inv, 4.0, 9).unwrap();
        let sign = |name: &str, t: usize| {
            let pp = p.property(name).unwrap();
            let off = usize::from(pp.model.gated);
            pp.mu[t][off] > 0.0
        };
        let names = [
            "natural_parts",
            "telic",
            "part_similarity",
            "avg_part_duration",
            "dynamic",
            "situation_duration",
        ];
        for a in 0..3 {
            for b in a + 1..3 {
                let d = names.iter().filter(|n| sign(n, a) != sign(n, b)).count();
                assert!(d >= 2);
            }
        }
        let np = p.property("natural_parts").unwrap();
        let ps = p.property("part_similarity").unwrap();
        let dy = p.property("dynamic").unwrap();
        for t in 0..3 {
            assert_eq!(ps.mu[t][0], np.mu[t][0]);
            assert_eq!(dy.mu[t][0], -np.mu[t][0]);
        }
    }

    #[test]
    fn stats_count_records() {
        let schema = default_schema();
        let out = sample_corpus(&schema, &small()).unwrap();
        let stats = corpus_stats(&out.corpus, &schema);
        let total: usize = stats
            .properties
            .iter()
            .flat_map(|p| p.1.iter().map(|c| c.1))
            .sum();
        assert_eq!(total, stats.annotations);
        assert_eq!(stats.predicates, 15);
        let empty = corpus_stats(&[], &schema);
        assert_eq!(empty.annotations, 0);
        assert!(empty.to_table().contains("natural_parts\ttrue\t0 (0%)"));
        assert_eq!(thousands(6903), "6,903");
    }
}
