//! Post-fit analysis: type summaries, fit comparison, entropy, features.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Classification, DocumentGraph, Schema};
use crate::error::{Error, Result};
use crate::factorgraph::PosteriorSet;
use crate::likelihoods::{sigmoid, Family};
use crate::params::ModelParams;
use crate::stats::{mean, median, normalized_entropy};

/// Gate probability below which a conditional property is reported as not
/// applicable for a type.
pub const DEFAULT_NA_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SummaryCell {
    Probability(f64),
    NotApplicable,
}

/// Property probabilities at zero annotator offset, one row per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub classification: Classification,
    pub properties: Vec<String>,
    /// `cells[type][property]`.
    pub cells: Vec<Vec<SummaryCell>>,
}

/// Summaries of every classification's binary properties (plain or behind
/// a gate). A gated property shows its base probability, or N/A when the
/// type's gate probability is below `na_threshold`.
pub fn summarize_types(
    params: &ModelParams,
    schema: &Schema,
    na_threshold: f64,
) -> Result<Vec<TypeSummary>> {
    params.check_schema(schema)?;
    let mut out = Vec::new();
    for c in Classification::ALL {
        let props: Vec<_> = params
            .properties
            .iter()
            .filter(|p| p.classification == c && p.model.family == Family::Binary)
            .collect();
        let k = params.inventory.count(c);
        let cells = (0..k)
            .map(|t| {
                props
                    .iter()
                    .map(|p| {
                        let mu = &p.mu[t];
                        if p.model.gated {
                            if sigmoid(mu[0]) < na_threshold {
                                SummaryCell::NotApplicable
                            } else {
                                SummaryCell::Probability(sigmoid(mu[1]))
                            }
                        } else {
                            SummaryCell::Probability(sigmoid(mu[0]))
                        }
                    })
                    .collect()
            })
            .collect();
        out.push(TypeSummary {
            classification: c,
            properties: props.iter().map(|p| p.name.clone()).collect(),
            cells,
        });
    }
    Ok(out)
}

fn cell_text(c: &SummaryCell) -> String {
    match c {
        SummaryCell::Probability(p) => format!("{p:.4}"),
        SummaryCell::NotApplicable => "NA".into(),
    }
}

impl TypeSummary {
    /// Wide table: one row per type, one column per property.
    pub fn to_tsv(&self) -> String {
        let mut s = format!("type\t{}\n", self.properties.join("\t"));
        for (t, row) in self.cells.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(cell_text).collect();
            s.push_str(&format!("{t}\t{}\n", vals.join("\t")));
        }
        s
    }

    /// Long table for plotting: `classification, type, property, value`.
    pub fn to_long_tsv(&self) -> String {
        let mut s = String::new();
        for (t, row) in self.cells.iter().enumerate() {
            for (p, c) in self.properties.iter().zip(row) {
                s.push_str(&format!(
                    "{}\t{t}\t{p}\t{}\n",
                    self.classification,
                    cell_text(c)
                ));
            }
        }
        s
    }
}

fn marginals_of(
    posteriors: &[PosteriorSet],
    class: Classification,
) -> BTreeMap<(String, String), Vec<f64>> {
    posteriors
        .iter()
        .flat_map(|p| {
            p.variables
                .iter()
                .filter(move |v| v.classification == class)
                .map(move |v| ((p.document.clone(), v.element.clone()), v.probs.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub classification: Classification,
    /// `alignment[i]`: the B type matched to A type `i`.
    pub alignment: Vec<usize>,
    /// Row-normalized, B columns permuted by `alignment`.
    pub matrix: Vec<Vec<f64>>,
}

impl Confusion {
    pub fn to_tsv(&self) -> String {
        let k = self.matrix.len();
        let head: Vec<String> = (0..k).map(|j| format!("b{}", self.alignment[j])).collect();
        let mut s = format!("a\\b\t{}\n", head.join("\t"));
        for (i, row) in self.matrix.iter().enumerate() {
            let vals: Vec<String> = row.iter().map(|x| format!("{x:.6}")).collect();
            s.push_str(&format!("a{i}\t{}\n", vals.join("\t")));
        }
        s
    }
}

/// Expected confusion between two fits over the same elements. Entry
/// `(i, j)` is the share of A-type-`i` posterior mass that B assigns to its
/// type matched with `j`. Types are matched greedily by joint mass. A row
/// with no A mass is uniform.
pub fn confusion(
    a: &[PosteriorSet],
    b: &[PosteriorSet],
    class: Classification,
) -> Result<Confusion> {
    let ma = marginals_of(a, class);
    let mb = marginals_of(b, class);
    if ma.len() != mb.len() || ma.keys().zip(mb.keys()).any(|(x, y)| x != y) {
        return Err(Error::Argument(format!(
            "{class} elements differ between the two posterior sets ({} vs {})",
            ma.len(),
            mb.len()
        )));
    }
    let Some(first) = ma.values().next() else {
        return Err(Error::Argument(format!("no {class} elements to compare")));
    };
    let (ka, kb) = (first.len(), mb.values().next().expect("same keys").len());
    if ka != kb {
        return Err(Error::Argument(format!("type counts differ: {ka} vs {kb}")));
    }
    let k = ka;
    let mut joint = vec![vec![0.0; k]; k];
    for (key, pa) in &ma {
        let pb = &mb[key];
        for i in 0..k {
            for j in 0..k {
                joint[i][j] += pa[i] * pb[j];
            }
        }
    }
    let mut alignment = vec![usize::MAX; k];
    let mut used = vec![false; k];
    for _ in 0..k {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (i, row) in joint.iter().enumerate() {
            if alignment[i] != usize::MAX {
                continue;
            }
            for (j, &x) in row.iter().enumerate() {
                if !used[j] && x > best.2 {
                    best = (i, j, x);
                }
            }
        }
        alignment[best.0] = best.1;
        used[best.1] = true;
    }
    let matrix = joint
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                alignment.iter().map(|&j| row[j] / total).collect()
            } else {
                vec![1.0 / k as f64; k]
            }
        })
        .collect();
    Ok(Confusion {
        classification: class,
        alignment,
        matrix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyStats {
    pub elements: usize,
    pub mean: f64,
    pub median: f64,
}

/// Mean and median normalized posterior entropy of one classification.
pub fn entropy_stats(posteriors: &[PosteriorSet], class: Classification) -> Result<EntropyStats> {
    let h: Vec<f64> = posteriors
        .iter()
        .flat_map(|p| p.variables.iter())
        .filter(|v| v.classification == class)
        .map(|v| normalized_entropy(&v.probs))
        .collect();
    if h.is_empty() {
        return Err(Error::Argument(format!("no {class} elements")));
    }
    Ok(EntropyStats {
        elements: h.len(),
        mean: mean(&h),
        median: median(&h),
    })
}

/// One feature row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub document: String,
    /// Edge id for argument rows, predicate id for predicate rows.
    pub id: String,
    pub values: Vec<f64>,
    /// True when the pooled block had nothing to pool and is zero-filled.
    pub empty_pool: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTables {
    /// `[event; role; entity; max other (role, entity); mean other (role, entity)]`.
    pub arguments: Vec<FeatureRow>,
    /// `[event; max (role, entity); mean (role, entity)]` over the
    /// predicate's arguments.
    pub predicates: Vec<FeatureRow>,
    pub argument_header: Vec<String>,
    pub predicate_header: Vec<String>,
}

fn pool(blocks: &[Vec<f64>], width: usize) -> (Vec<f64>, bool) {
    if blocks.is_empty() {
        return (vec![0.0; 2 * width], true);
    }
    let mut max = vec![f64::NEG_INFINITY; width];
    let mut sum = vec![0.0; width];
    for b in blocks {
        for i in 0..width {
            max[i] = max[i].max(b[i]);
            sum[i] += b[i];
        }
    }
    max.extend(sum.iter().map(|s| s / blocks.len() as f64));
    (max, false)
}

fn header(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}

/// Posterior features for every predicate-argument edge and predicate.
/// `posteriors` must be aligned with `docs`.
pub fn export_features(
    docs: &[DocumentGraph],
    posteriors: &[PosteriorSet],
) -> Result<FeatureTables> {
    if docs.len() != posteriors.len() {
        return Err(Error::Argument(format!(
            "{} posterior sets for {} documents",
            posteriors.len(),
            docs.len()
        )));
    }
    // type counts are global; read them off the first marginal of each kind
    let width = |c: Classification| {
        posteriors
            .iter()
            .flat_map(|p| p.variables.iter())
            .find(|v| v.classification == c)
            .map_or(0, |v| v.probs.len())
    };
    let (ke, kr, kn) = (
        width(Classification::Event),
        width(Classification::Role),
        width(Classification::Entity),
    );
    let mut arguments = Vec::new();
    let mut predicates = Vec::new();
    for (doc, post) in docs.iter().zip(posteriors) {
        if doc.id != post.document {
            return Err(Error::Argument(format!(
                "posteriors for `{}` paired with document `{}`",
                post.document, doc.id
            )));
        }
        let lookup: HashMap<(&str, Classification), &[f64]> = post
            .variables
            .iter()
            .map(|v| ((v.element.as_str(), v.classification), v.probs.as_slice()))
            .collect();
        let get = |id: &str, c: Classification| -> Result<Vec<f64>> {
            lookup.get(&(id, c)).map(|p| p.to_vec()).ok_or_else(|| {
                Error::Consistency(format!(
                    "document `{}`: no {c} posterior for `{id}`",
                    doc.id
                ))
            })
        };
        for s in &doc.sentences {
            for p in &s.predicates {
                let event = get(&p.id, Classification::Event)?;
                let edges: Vec<_> = s.edges.iter().filter(|e| e.predicate == p.id).collect();
                let blocks: Vec<Vec<f64>> = edges
                    .iter()
                    .map(|e| {
                        let mut b = get(&e.id, Classification::Role)?;
                        b.extend(get(&e.argument, Classification::Entity)?);
                        Ok(b)
                    })
                    .collect::<Result<_>>()?;
                for (i, e) in edges.iter().enumerate() {
                    let others: Vec<Vec<f64>> = blocks
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .map(|(_, b)| b.clone())
                        .collect();
                    let (pooled, empty) = pool(&others, kr + kn);
                    let mut values = event.clone();
                    values.extend_from_slice(&blocks[i]);
                    values.extend(pooled);
                    arguments.push(FeatureRow {
                        document: doc.id.clone(),
                        id: e.id.clone(),
                        values,
                        empty_pool: empty,
                    });
                }
                let (pooled, empty) = pool(&blocks, kr + kn);
                let mut values = event;
                values.extend(pooled);
                predicates.push(FeatureRow {
                    document: doc.id.clone(),
                    id: p.id.clone(),
                    values,
                    empty_pool: empty,
                });
            }
        }
    }
    let pooled_header = |tag: &str| {
        let mut h = header(&format!("{tag}_role"), kr);
        h.extend(header(&format!("{tag}_entity"), kn));
        h
    };
    let mut argument_header = header("event", ke);
    argument_header.extend(header("role", kr));
    argument_header.extend(header("entity", kn));
    argument_header.extend(pooled_header("max"));
    argument_header.extend(pooled_header("mean"));
    let mut predicate_header = header("event", ke);
    predicate_header.extend(pooled_header("max"));
    predicate_header.extend(pooled_header("mean"));
    Ok(FeatureTables {
        arguments,
        predicates,
        argument_header,
        predicate_header,
    })
}

impl FeatureTables {
    fn table(header: &[String], rows: &[FeatureRow]) -> String {
        let mut s = format!("document\tid\t{}\tempty_pool\n", header.join("\t"));
        for r in rows {
            let vals: Vec<String> = r.values.iter().map(|v| format!("{v:.6}")).collect();
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.document,
                r.id,
                vals.join("\t"),
                u8::from(r.empty_pool)
            ));
        }
        s
    }

    pub fn arguments_tsv(&self) -> String {
        Self::table(&self.argument_header, &self.arguments)
    }

    pub fn predicates_tsv(&self) -> String {
        Self::table(&self.predicate_header, &self.predicates)
    }
}
