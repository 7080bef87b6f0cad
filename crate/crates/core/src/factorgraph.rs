//! Per-document factor graphs and sum-product inference.
//!
//! Variables carry a latent type: one per predicate (event type), argument
//! (entity type), predicate-argument edge (role type), and windowed
//! predicate pair (relation type). Event and entity variables hold their
//! prior in their unary potential; role and relation variables are tied to
//! their endpoints by ternary prior factors. Annotation evidence is folded
//! into unary potentials.
//!
//! Relation pairs follow a sentence-window queue: every predicate is paired
//! with each predicate and eventive argument already enqueued from the last
//! `W` sentences (its own sentence included), except itself.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Classification, DocumentGraph, ElementKind, Schema};
use crate::error::{Error, Result};
use crate::likelihoods::logsumexp;
use crate::observe::{evidence_potential, DocObservations, LoglikTable, ObsIndex};
use crate::params::{ModelParams, PriorParams, TypeInventory};

/// Which prior table a ternary factor reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorBlock {
    /// `theta_role[event][entity][role]`, variables `(event, entity, role)`.
    Role,
    /// `theta_rel_event_event[a][b][rel]`, variables `(a, b, rel)`.
    RelEventEvent,
    /// `theta_rel_event_entity[a][b][rel]`, variables `(event a, entity b, rel)`.
    RelEventEntity,
    /// `theta_rel_event_entity[b][a][rel]`, variables `(entity a, event b, rel)`.
    RelEntityEvent,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub element: String,
    pub classification: Classification,
    pub card: usize,
    /// Log unary potential: prior (event/entity) plus weighted evidence.
    pub unary: Vec<f64>,
    /// Weighted annotation evidence alone.
    pub evidence: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Factor {
    pub block: PriorBlock,
    pub vars: [usize; 3],
    pub cards: [usize; 3],
    /// Log potential, row-major over `(vars[0], vars[1], vars[2])`.
    pub table: Vec<f64>,
}

impl Factor {
    fn label(&self, graph: &FactorGraph) -> String {
        let names: Vec<&str> = self
            .vars
            .iter()
            .map(|&v| graph.variables[v].element.as_str())
            .collect();
        format!("{:?}({})", self.block, names.join(", "))
    }
}

#[derive(Debug, Clone)]
pub struct FactorGraph {
    pub document: String,
    pub variables: Vec<Variable>,
    pub factors: Vec<Factor>,
    /// For each variable, the `(factor, slot)` pairs it participates in.
    pub neighbors: Vec<Vec<(usize, usize)>>,
}

/// Element id given to a relation variable without a document edge.
pub fn pair_element_id(current: &str, earlier: &str) -> String {
    format!("{current}~{earlier}")
}

/// Relation pairs `(current predicate, earlier predicate-or-eventive
/// argument)` for a document and window.
pub fn relation_pairs(doc: &DocumentGraph, window: usize) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    let mut queue: VecDeque<Vec<&str>> = VecDeque::new();
    for sent in &doc.sentences {
        queue.push_back(Vec::new());
        if queue.len() > window {
            queue.pop_front();
        }
        for pred in &sent.predicates {
            let current = queue.back_mut().expect("pushed above");
            if !current.contains(&pred.id.as_str()) {
                current.push(&pred.id);
            }
            for edge in sent.edges.iter().filter(|e| e.predicate == pred.id) {
                let eventive = sent
                    .arguments
                    .iter()
                    .any(|a| a.id == edge.argument && a.eventive);
                let current = queue.back_mut().expect("pushed above");
                if eventive && !current.contains(&edge.argument.as_str()) {
                    current.push(&edge.argument);
                }
            }
            for item in queue.iter().flatten() {
                if *item != pred.id {
                    pairs.push((pred.id.clone(), (*item).to_owned()));
                }
            }
        }
    }
    pairs
}

fn ln_table(p: &[f64]) -> Vec<f64> {
    p.iter().map(|v| v.ln()).collect()
}

fn transpose_block(theta: &[f64], rows: usize, cols: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; theta.len()];
    for r in 0..rows {
        for c in 0..cols {
            for q in 0..k {
                out[(c * rows + r) * k + q] = theta[(r * cols + c) * k + q].ln();
            }
        }
    }
    out
}

/// Builds the factor graph for a compiled document. `table` must be computed
/// from the same parameters as `priors` and `inventory`.
pub fn build_graph_compiled(
    doc: &DocumentGraph,
    obs: &DocObservations,
    table: &LoglikTable,
    priors: &PriorParams,
    inventory: &TypeInventory,
    window: usize,
) -> Result<FactorGraph> {
    if window == 0 {
        return Err(Error::Argument("window must be at least 1".into()));
    }
    let inv = *inventory;
    let mut variables: Vec<Variable> = Vec::new();
    let mut factors: Vec<Factor> = Vec::new();
    let mut var_of: HashMap<String, usize> = HashMap::new();

    let add_var = |variables: &mut Vec<Variable>,
                   var_of: &mut HashMap<String, usize>,
                   element: &str,
                   c: Classification|
     -> usize {
        if let Some(&v) = var_of.get(element) {
            return v;
        }
        let k = inv.count(c);
        let unary = match c {
            Classification::Event => ln_table(&priors.theta_event),
            Classification::Entity => ln_table(&priors.theta_entity),
            _ => vec![0.0; k],
        };
        variables.push(Variable {
            element: element.to_owned(),
            classification: c,
            card: k,
            unary,
            evidence: vec![0.0; k],
        });
        var_of.insert(element.to_owned(), variables.len() - 1);
        variables.len() - 1
    };

    let role_table = ln_table(&priors.theta_role);
    for sent in &doc.sentences {
        for pred in &sent.predicates {
            let ev = add_var(&mut variables, &mut var_of, &pred.id, Classification::Event);
            for edge in sent.edges.iter().filter(|e| e.predicate == pred.id) {
                let en = add_var(
                    &mut variables,
                    &mut var_of,
                    &edge.argument,
                    Classification::Entity,
                );
                let ro = add_var(&mut variables, &mut var_of, &edge.id, Classification::Role);
                factors.push(Factor {
                    block: PriorBlock::Role,
                    vars: [ev, en, ro],
                    cards: [inv.event, inv.entity, inv.role],
                    table: role_table.clone(),
                });
            }
        }
        for arg in &sent.arguments {
            add_var(&mut variables, &mut var_of, &arg.id, Classification::Entity);
        }
    }

    // relation variables, oriented by document edges where present
    let mut edge_of: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, e) in doc.doc_edges.iter().enumerate() {
        edge_of.insert((e.source.as_str(), e.target.as_str()), i);
        edge_of.insert((e.target.as_str(), e.source.as_str()), i);
    }
    let mut used_edges: HashSet<usize> = HashSet::new();
    let ee = ln_table(&priors.theta_rel_event_event);
    let en = ln_table(&priors.theta_rel_event_entity);
    let ne = transpose_block(
        &priors.theta_rel_event_entity,
        inv.event,
        inv.entity,
        inv.relation,
    );
    for (current, earlier) in relation_pairs(doc, window) {
        let (element, source, target) = match edge_of.get(&(current.as_str(), earlier.as_str())) {
            Some(&i) => {
                if !used_edges.insert(i) {
                    continue;
                }
                let e = &doc.doc_edges[i];
                (e.id.clone(), e.source.clone(), e.target.clone())
            }
            None => (pair_element_id(&current, &earlier), current, earlier),
        };
        let a = var_of[source.as_str()];
        let b = var_of[target.as_str()];
        let q = add_var(
            &mut variables,
            &mut var_of,
            &element,
            Classification::Relation,
        );
        let (block, table) = match (variables[a].classification, variables[b].classification) {
            (Classification::Event, Classification::Event) => {
                (PriorBlock::RelEventEvent, ee.clone())
            }
            (Classification::Event, Classification::Entity) => {
                (PriorBlock::RelEventEntity, en.clone())
            }
            (Classification::Entity, Classification::Event) => {
                (PriorBlock::RelEntityEvent, ne.clone())
            }
            _ => {
                return Err(Error::Construction(format!(
                    "relation `{element}` must involve a predicate"
                )))
            }
        };
        factors.push(Factor {
            block,
            vars: [a, b, q],
            cards: [variables[a].card, variables[b].card, inv.relation],
            table,
        });
    }
    if let Some(e) = doc
        .doc_edges
        .iter()
        .enumerate()
        .find(|(i, _)| !used_edges.contains(i))
        .map(|(_, e)| e)
    {
        return Err(Error::Construction(format!(
            "document `{}`: edge `{}` ({} - {}) is not a windowed relation pair",
            doc.id, e.id, e.source, e.target
        )));
    }

    for (element, keys) in &obs.elements {
        let Some(&v) = var_of.get(element.as_str()) else {
            return Err(Error::Construction(format!(
                "document `{}`: annotations on `{element}` have no latent variable",
                doc.id
            )));
        };
        let var = &mut variables[v];
        let pot = evidence_potential(keys, table, var.card);
        for ((u, e), p) in var.unary.iter_mut().zip(var.evidence.iter_mut()).zip(pot) {
            *u += p;
            *e += p;
        }
    }

    let mut neighbors = vec![Vec::new(); variables.len()];
    for (f, factor) in factors.iter().enumerate() {
        for (slot, &v) in factor.vars.iter().enumerate() {
            neighbors[v].push((f, slot));
        }
    }
    Ok(FactorGraph {
        document: doc.id.clone(),
        variables,
        factors,
        neighbors,
    })
}

/// Builds the factor graph for one document straight from annotations.
pub fn build_graph(
    doc: &DocumentGraph,
    schema: &Schema,
    params: &ModelParams,
    window: usize,
    weighting: bool,
) -> Result<FactorGraph> {
    let mut index = ObsIndex::new();
    let obs = crate::observe::compile_document(doc, schema, &mut index, weighting)?;
    let table = LoglikTable::compute(&index, params);
    build_graph_compiled(doc, &obs, &table, &params.priors, &params.inventory, window)
}

impl FactorGraph {
    pub fn variable_count(&self, c: Classification) -> usize {
        self.variables
            .iter()
            .filter(|v| v.classification == c)
            .count()
    }

    /// True when the variable-factor graph has no cycles.
    pub fn is_acyclic(&self) -> bool {
        // bipartite graph: nodes = variables + factors, edges = memberships
        let edges: usize = self.factors.len() * 3;
        let nodes = self.variables.len() + self.factors.len();
        let mut parent: Vec<usize> = (0..nodes).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                p[r] = p[p[r]];
                r = p[r];
            }
            r
        }
        let mut components = nodes;
        for (f, factor) in self.factors.iter().enumerate() {
            for &v in &factor.vars {
                let (a, b) = (
                    find(&mut parent, v),
                    find(&mut parent, self.variables.len() + f),
                );
                if a != b {
                    parent[a] = b;
                    components -= 1;
                }
            }
        }
        edges == nodes - components
    }

    /// Joint assignment count, or `None` on overflow.
    pub fn state_space(&self) -> Option<u128> {
        self.variables
            .iter()
            .try_fold(1u128, |acc, v| acc.checked_mul(v.card as u128))
    }

    /// Graph-description dump in DOT syntax, with marginals when given.
    pub fn to_dot(&self, posterior: Option<&PosteriorSet>) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "graph \"{}\" {{", self.document);
        for (i, v) in self.variables.iter().enumerate() {
            let extra = posterior
                .and_then(|p| p.variables.get(i))
                .map(|m| {
                    let probs: Vec<String> = m.probs.iter().map(|x| format!("{x:.3}")).collect();
                    format!("\\n[{}]", probs.join(" "))
                })
                .unwrap_or_default();
            let _ = writeln!(
                s,
                "  v{i} [shape=ellipse, label=\"{} : {}{extra}\"];",
                v.element, v.classification
            );
        }
        for (f, factor) in self.factors.iter().enumerate() {
            let _ = writeln!(s, "  f{f} [shape=box, label=\"{:?}\"];", factor.block);
            for v in factor.vars {
                let _ = writeln!(s, "  f{f} -- v{v};");
            }
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub max_iters: usize,
    pub damping: f64,
    pub tol: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            damping: 0.1,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableMarginal {
    pub element: String,
    pub classification: Classification,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorBelief {
    pub block: PriorBlock,
    /// Joint belief over the factor's three variables, row-major.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSet {
    pub document: String,
    pub variables: Vec<VariableMarginal>,
    pub factors: Vec<FactorBelief>,
    /// Log evidence (Bethe approximation under loopy inference).
    pub evidence: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl PosteriorSet {
    pub fn marginal(&self, element: &str) -> Option<&[f64]> {
        self.variables
            .iter()
            .find(|v| v.element == element)
            .map(|v| v.probs.as_slice())
    }
}

fn normalize_log(v: &mut [f64]) {
    let z = logsumexp(v);
    for x in v.iter_mut() {
        *x -= z;
    }
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let z = logsumexp(v);
    v.iter().map(|x| (x - z).exp()).collect()
}

fn entropy_term(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

/// Sum-product message passing with synchronous (flooding) updates, damped in
/// probability space, until the largest change in a factor-to-variable
/// message falls below `tol` or `max_iters` is reached.
pub fn loopy_bp(graph: &FactorGraph, config: &BpConfig) -> Result<PosteriorSet> {
    if !(0.0..1.0).contains(&config.damping) {
        return Err(Error::Argument(format!(
            "damping {} outside [0, 1)",
            config.damping
        )));
    }
    for v in &graph.variables {
        if v.unary.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical(format!(
                "document `{}`: non-finite potential on `{}`",
                graph.document, v.element
            )));
        }
    }
    // factor -> variable messages, log domain, normalized
    let mut f2v: Vec<[Vec<f64>; 3]> = graph
        .factors
        .iter()
        .map(|f| f.cards.map(|k| vec![-(k as f64).ln(); k]))
        .collect();
    let mut v2f: Vec<[Vec<f64>; 3]> = graph
        .factors
        .iter()
        .map(|f| f.cards.map(|k| vec![0.0; k]))
        .collect();

    let compute_v2f = |f2v: &[[Vec<f64>; 3]], v2f: &mut [[Vec<f64>; 3]]| {
        for (v, var) in graph.variables.iter().enumerate() {
            let mut total = var.unary.clone();
            for &(f, s) in &graph.neighbors[v] {
                for (t, m) in total.iter_mut().zip(&f2v[f][s]) {
                    *t += m;
                }
            }
            for &(f, s) in &graph.neighbors[v] {
                let msg = &mut v2f[f][s];
                for ((o, t), m) in msg.iter_mut().zip(&total).zip(&f2v[f][s]) {
                    *o = t - m;
                }
                normalize_log(msg);
            }
        }
    };

    let mut iterations = 0;
    let mut converged = graph.factors.is_empty();
    let mut scratch = Vec::new();
    while !converged && iterations < config.max_iters {
        iterations += 1;
        compute_v2f(&f2v, &mut v2f);
        let mut delta: f64 = 0.0;
        for (f, factor) in graph.factors.iter().enumerate() {
            let [k0, k1, k2] = factor.cards;
            for slot in 0..3 {
                let k = factor.cards[slot];
                scratch.clear();
                scratch.resize(k, f64::NEG_INFINITY);
                // logsumexp over the other two slots, accumulated per state
                let mut maxes = vec![f64::NEG_INFINITY; k];
                for a in 0..k0 {
                    for b in 0..k1 {
                        for c in 0..k2 {
                            let idx = [a, b, c];
                            let mut val = factor.table[(a * k1 + b) * k2 + c];
                            for o in 0..3 {
                                if o != slot {
                                    val += v2f[f][o][idx[o]];
                                }
                            }
                            let x = idx[slot];
                            if val > maxes[x] {
                                maxes[x] = val;
                            }
                        }
                    }
                }
                let mut sums = vec![0.0; k];
                for a in 0..k0 {
                    for b in 0..k1 {
                        for c in 0..k2 {
                            let idx = [a, b, c];
                            let mut val = factor.table[(a * k1 + b) * k2 + c];
                            for o in 0..3 {
                                if o != slot {
                                    val += v2f[f][o][idx[o]];
                                }
                            }
                            let x = idx[slot];
                            sums[x] += (val - maxes[x]).exp();
                        }
                    }
                }
                for x in 0..k {
                    scratch[x] = maxes[x] + sums[x].ln();
                }
                normalize_log(&mut scratch);
                let old = &mut f2v[f][slot];
                for (o, n) in old.iter_mut().zip(&scratch) {
                    let p_old = o.exp();
                    let p_new = (1.0 - config.damping) * n.exp() + config.damping * p_old;
                    if !p_new.is_finite() {
                        return Err(Error::Numerical(format!(
                            "document `{}`: non-finite message from factor {}",
                            graph.document,
                            factor.label(graph)
                        )));
                    }
                    delta = delta.max((p_new - p_old).abs());
                    *o = p_new.ln();
                }
                if old.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "document `{}`: message from factor {} underflowed",
                        graph.document,
                        factor.label(graph)
                    )));
                }
                normalize_log(old);
            }
        }
        converged = delta < config.tol;
    }
    compute_v2f(&f2v, &mut v2f);

    let mut marginals = Vec::with_capacity(graph.variables.len());
    let mut evidence = 0.0;
    for (v, var) in graph.variables.iter().enumerate() {
        let mut total = var.unary.clone();
        for &(f, s) in &graph.neighbors[v] {
            for (t, m) in total.iter_mut().zip(&f2v[f][s]) {
                *t += m;
            }
        }
        let b = softmax(&total);
        let degree = graph.neighbors[v].len() as f64;
        evidence += b.iter().zip(&var.unary).map(|(p, u)| p * u).sum::<f64>();
        evidence += (degree - 1.0) * entropy_term(&b);
        marginals.push(VariableMarginal {
            element: var.element.clone(),
            classification: var.classification,
            probs: b,
        });
    }
    let mut beliefs = Vec::with_capacity(graph.factors.len());
    for (f, factor) in graph.factors.iter().enumerate() {
        let [_, k1, k2] = factor.cards;
        let logits: Vec<f64> = factor
            .table
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let (a, b, c) = (i / (k1 * k2), (i / k2) % k1, i % k2);
                t + v2f[f][0][a] + v2f[f][1][b] + v2f[f][2][c]
            })
            .collect();
        let bf = softmax(&logits);
        evidence += bf
            .iter()
            .zip(&factor.table)
            .map(|(p, t)| p * t)
            .sum::<f64>();
        evidence -= entropy_term(&bf);
        beliefs.push(FactorBelief {
            block: factor.block,
            probs: bf,
        });
    }
    if !evidence.is_finite() {
        return Err(Error::Numerical(format!(
            "document `{}`: non-finite evidence",
            graph.document
        )));
    }
    Ok(PosteriorSet {
        document: graph.document.clone(),
        variables: marginals,
        factors: beliefs,
        evidence,
        converged,
        iterations,
    })
}

/// Largest joint state space [`brute_force_graph`] will enumerate.
pub const MAX_ENUMERATION: u128 = 10_000_000;

/// Exact marginals and log-evidence by enumerating every joint assignment.
pub fn brute_force_graph(graph: &FactorGraph) -> Result<PosteriorSet> {
    let size = graph
        .state_space()
        .filter(|&s| s <= MAX_ENUMERATION)
        .ok_or_else(|| {
            Error::Capacity(format!(
                "document `{}` has more than {MAX_ENUMERATION} joint assignments",
                graph.document
            ))
        })? as usize;
    let nv = graph.variables.len();
    let score = |assign: &[usize]| -> f64 {
        let mut s = 0.0;
        for (v, var) in graph.variables.iter().enumerate() {
            s += var.unary[assign[v]];
        }
        for f in &graph.factors {
            let [_, k1, k2] = f.cards;
            let [a, b, c] = f.vars.map(|v| assign[v]);
            s += f.table[(a * k1 + b) * k2 + c];
        }
        s
    };
    let advance = |assign: &mut [usize]| {
        for v in 0..nv {
            assign[v] += 1;
            if assign[v] < graph.variables[v].card {
                return;
            }
            assign[v] = 0;
        }
    };

    let mut assign = vec![0usize; nv];
    let mut max = f64::NEG_INFINITY;
    for _ in 0..size {
        max = max.max(score(&assign));
        advance(&mut assign);
    }
    let mut marg: Vec<Vec<f64>> = graph.variables.iter().map(|v| vec![0.0; v.card]).collect();
    let mut fbel: Vec<Vec<f64>> = graph
        .factors
        .iter()
        .map(|f| vec![0.0; f.table.len()])
        .collect();
    let mut total = 0.0;
    assign.iter_mut().for_each(|a| *a = 0);
    for _ in 0..size {
        let w = (score(&assign) - max).exp();
        total += w;
        for (v, m) in marg.iter_mut().enumerate() {
            m[assign[v]] += w;
        }
        for (f, b) in graph.factors.iter().zip(fbel.iter_mut()) {
            let [_, k1, k2] = f.cards;
            let [x, y, z] = f.vars.map(|v| assign[v]);
            b[(x * k1 + y) * k2 + z] += w;
        }
        advance(&mut assign);
    }
    let variables = graph
        .variables
        .iter()
        .zip(marg)
        .map(|(var, m)| VariableMarginal {
            element: var.element.clone(),
            classification: var.classification,
            probs: m.into_iter().map(|x| x / total).collect(),
        })
        .collect();
    let factors = graph
        .factors
        .iter()
        .zip(fbel)
        .map(|(f, b)| FactorBelief {
            block: f.block,
            probs: b.into_iter().map(|x| x / total).collect(),
        })
        .collect();
    Ok(PosteriorSet {
        document: graph.document.clone(),
        variables,
        factors,
        evidence: max + total.ln(),
        converged: true,
        iterations: 0,
    })
}

/// Exact inference for one document straight from annotations.
pub fn brute_force(
    doc: &DocumentGraph,
    schema: &Schema,
    params: &ModelParams,
    window: usize,
    weighting: bool,
) -> Result<PosteriorSet> {
    brute_force_graph(&build_graph(doc, schema, params, window, weighting)?)
}

/// Element kind of the variable a classification's annotations live on.
pub fn variable_kind(c: Classification) -> ElementKind {
    c.element_kind()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        AnnotationRecord, ArgumentNode, DocumentEdge, PredicateNode, Response, SemanticsEdge,
        Sentence,
    };
    use crate::synth::default_schema;

    fn sentence(preds: &[&str], args: &[(&str, bool)], edges: &[(&str, &str)]) -> Sentence {
        Sentence {
            predicates: preds
                .iter()
                .map(|p| PredicateNode {
                    id: p.to_string(),
                    span: String::new(),
                })
                .collect(),
            arguments: args
                .iter()
                .map(|(a, ev)| ArgumentNode {
                    id: a.to_string(),
                    span: String::new(),
                    eventive: *ev,
                    supersense: ev.then(|| "noun.event".to_string()),
                })
                .collect(),
            edges: edges
                .iter()
                .map(|(p, a)| SemanticsEdge {
                    id: format!("{p}>{a}"),
                    predicate: p.to_string(),
                    argument: a.to_string(),
                })
                .collect(),
        }
    }

    fn doc(sentences: Vec<Sentence>) -> DocumentGraph {
        DocumentGraph {
            id: "d".into(),
            sentences,
            doc_edges: vec![],
            annotations: vec![],
        }
    }

    fn params(inv: TypeInventory) -> ModelParams {
        ModelParams::init(&default_schema(), inv, &["a".into()], 3)
    }

    #[test]
    fn single_predicate_graph() {
        let d = doc(vec![sentence(&["p"], &[], &[])]);
        let inv = TypeInventory::new(3, 2, 2, 2).unwrap();
        let g = build_graph(&d, &default_schema(), &params(inv), 2, true).unwrap();
        assert_eq!(g.variables.len(), 1);
        assert!(g.factors.is_empty());
        let post = loopy_bp(&g, &BpConfig::default()).unwrap();
        for (p, t) in post.variables[0]
            .probs
            .iter()
            .zip(&params(inv).priors.theta_event)
        {
            assert!((p - t).abs() < 1e-12);
        }
        assert!(post.evidence.abs() < 1e-12);
    }

    #[test]
    fn window_controls_cross_sentence_pairs() {
        let d = doc(vec![
            sentence(&["p1"], &[], &[]),
            sentence(&["p2"], &[], &[]),
        ]);
        let inv = TypeInventory::new(2, 2, 2, 3).unwrap();
        let g = build_graph(&d, &default_schema(), &params(inv), 2, true).unwrap();
        assert_eq!(g.variable_count(Classification::Event), 2);
        assert_eq!(g.variable_count(Classification::Relation), 1);
        assert_eq!(g.factors.len(), 1);
        assert_eq!(g.factors[0].block, PriorBlock::RelEventEvent);

        let g1 = build_graph(&d, &default_schema(), &params(inv), 1, true).unwrap();
        assert_eq!(g1.variable_count(Classification::Relation), 0);
    }

    #[test]
    fn within_sentence_pairs_and_eventive_arguments() {
        let d = doc(vec![sentence(
            &["p1", "p2"],
            &[("a1", true), ("a2", false)],
            &[("p1", "a1"), ("p2", "a2")],
        )]);
        let pairs = relation_pairs(&d, 1);
        assert_eq!(
            pairs,
            vec![
                ("p1".to_string(), "a1".to_string()),
                ("p2".to_string(), "p1".to_string()),
                ("p2".to_string(), "a1".to_string()),
            ]
        );
    }

    #[test]
    fn document_edge_outside_window_is_rejected() {
        let mut d = doc(vec![
            sentence(&["p1"], &[], &[]),
            sentence(&["p2"], &[], &[]),
            sentence(&["p3"], &[], &[]),
        ]);
        d.doc_edges.push(DocumentEdge {
            id: "r".into(),
            source: "p3".into(),
            target: "p1".into(),
        });
        let inv = TypeInventory::new(2, 2, 2, 2).unwrap();
        let err = build_graph(&d, &default_schema(), &params(inv), 2, true).unwrap_err();
        assert!(matches!(err, Error::Construction(_)));
        assert!(build_graph(&d, &default_schema(), &params(inv), 3, true).is_ok());
    }

    #[test]
    fn annotation_without_variable_is_rejected() {
        let mut d = doc(vec![sentence(&["p1"], &[], &[])]);
        d.annotations.push(AnnotationRecord {
            element: "p1~nothing".into(),
            property: "e1_part_of_e2".into(),
            annotator: "a".into(),
            value: Response::Binary(true),
            raw_confidence: 5,
            ridit_confidence: Some(0.5),
        });
        let inv = TypeInventory::new(2, 2, 2, 2).unwrap();
        assert!(build_graph(&d, &default_schema(), &params(inv), 2, true).is_err());
    }

    #[test]
    fn acyclicity_detection() {
        let tree = doc(vec![sentence(
            &["p"],
            &[("a", false), ("b", false)],
            &[("p", "a"), ("p", "b")],
        )]);
        let inv = TypeInventory::new(2, 2, 2, 2).unwrap();
        let g = build_graph(&tree, &default_schema(), &params(inv), 1, true).unwrap();
        assert!(g.is_acyclic());
        let tri = doc(vec![sentence(&["p1", "p2", "p3"], &[], &[])]);
        let g = build_graph(&tri, &default_schema(), &params(inv), 1, true).unwrap();
        assert!(!g.is_acyclic());
    }

    #[test]
    fn bp_matches_enumeration_on_a_star() {
        let tree = doc(vec![sentence(
            &["p"],
            &[("a", false), ("b", false)],
            &[("p", "a"), ("p", "b")],
        )]);
        let inv = TypeInventory::new(3, 2, 2, 2).unwrap();
        let mut prm = params(inv);
        prm.priors.theta_event = vec![0.5, 0.3, 0.2];
        prm.priors.theta_role = (0..12)
            .map(|i| if i % 2 == 0 { 0.8 } else { 0.2 })
            .collect();
        let g = build_graph(&tree, &default_schema(), &prm, 1, true).unwrap();
        let bp = loopy_bp(
            &g,
            &BpConfig {
                max_iters: 500,
                damping: 0.0,
                tol: 1e-14,
            },
        )
        .unwrap();
        let exact = brute_force_graph(&g).unwrap();
        assert!(bp.converged);
        for (a, b) in bp.variables.iter().zip(&exact.variables) {
            for (x, y) in a.probs.iter().zip(&b.probs) {
                assert!((x - y).abs() < 1e-10);
            }
        }
        assert!((bp.evidence - exact.evidence).abs() < 1e-10);
    }

    #[test]
    fn capacity_error_on_large_state_space() {
        let preds: Vec<String> = (0..12).map(|i| format!("p{i}")).collect();
        let refs: Vec<&str> = preds.iter().map(String::as_str).collect();
        let d = doc(vec![sentence(&refs, &[], &[])]);
        let inv = TypeInventory::new(4, 2, 2, 5).unwrap();
        let g = build_graph(&d, &default_schema(), &params(inv), 1, true).unwrap();
        assert!(matches!(brute_force_graph(&g), Err(Error::Capacity(_))));
    }

    #[test]
    fn dot_dump_mentions_every_variable() {
        let d = doc(vec![sentence(&["p"], &[("a", false)], &[("p", "a")])]);
        let inv = TypeInventory::new(2, 2, 2, 2).unwrap();
        let g = build_graph(&d, &default_schema(), &params(inv), 1, true).unwrap();
        let post = loopy_bp(&g, &BpConfig::default()).unwrap();
        let dot = g.to_dot(Some(&post));
        assert!(dot.contains("p : event") && dot.contains("p>a : role"));
    }
}
