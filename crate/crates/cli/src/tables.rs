//! Tab-separated tables exchanged between subcommands.

use std::collections::HashMap;

use evinduce::corpus::{Classification, DocumentGraph};
use evinduce::factorgraph::{PosteriorSet, VariableMarginal};
use evinduce::stats::argmax;
use evinduce::synth::ElementLabel;

use crate::Failure;

pub const POSTERIOR_HEADER: &str = "document\telement\tclassification\tmap_type\tprobabilities";

/// One row per latent variable; probabilities comma-separated.
pub fn posterior_table(sets: &[PosteriorSet]) -> String {
    let mut s = format!("{POSTERIOR_HEADER}\n");
    for p in sets {
        for v in &p.variables {
            let probs: Vec<String> = v.probs.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                p.document,
                v.element,
                v.classification,
                argmax(&v.probs),
                probs.join(",")
            ));
        }
    }
    s
}

fn bad(source: &str, line: usize, msg: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{source}:{line}: {msg}"))
}

/// Parses [`posterior_table`] output. Documents keep first-seen order;
/// factor beliefs and evidence are not part of the table.
pub fn parse_posteriors(text: &str, source: &str) -> Result<Vec<PosteriorSet>, Failure> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == POSTERIOR_HEADER => {}
        _ => return Err(bad(source, 1, "missing posterior table header")),
    }
    let mut sets: Vec<PosteriorSet> = Vec::new();
    let mut at: HashMap<String, usize> = HashMap::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(bad(
                source,
                i + 1,
                format!("expected 5 fields, found {}", f.len()),
            ));
        }
        let classification: Classification = f[2].parse().map_err(|e| bad(source, i + 1, e))?;
        let probs = f[4]
            .split(',')
            .map(|x| x.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(source, i + 1, e))?;
        let doc = *at.entry(f[0].to_string()).or_insert_with(|| {
            sets.push(PosteriorSet {
                document: f[0].to_string(),
                variables: Vec::new(),
                factors: Vec::new(),
                evidence: 0.0,
                converged: true,
                iterations: 0,
            });
            sets.len() - 1
        });
        sets[doc].variables.push(VariableMarginal {
            element: f[1].to_string(),
            classification,
            probs,
        });
    }
    Ok(sets)
}

/// Posterior sets in corpus order; documents absent from the table get an
/// empty set.
pub fn align_to_corpus(mut sets: Vec<PosteriorSet>, docs: &[DocumentGraph]) -> Vec<PosteriorSet> {
    let mut by_id: HashMap<String, PosteriorSet> =
        sets.drain(..).map(|p| (p.document.clone(), p)).collect();
    docs.iter()
        .map(|d| {
            by_id.remove(&d.id).unwrap_or_else(|| PosteriorSet {
                document: d.id.clone(),
                variables: Vec::new(),
                factors: Vec::new(),
                evidence: 0.0,
                converged: true,
                iterations: 0,
            })
        })
        .collect()
}

pub fn truth_table(labels: &[ElementLabel]) -> String {
    let mut s = String::from("document\telement\tclassification\tlabel\n");
    for l in labels {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            l.document, l.element, l.classification, l.label
        ));
    }
    s
}

/// Long-format reliability rows: `item, annotator, value[, confidence]`.
/// A header row starting with `item` is skipped; an empty confidence field
/// means none.
pub fn parse_reliability(
    text: &str,
    source: &str,
) -> Result<Vec<(String, String, u32, Option<f64>)>, Failure> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() || (i == 0 && line.starts_with("item")) {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&f.len()) {
            return Err(bad(
                source,
                i + 1,
                format!("expected 3 or 4 fields, found {}", f.len()),
            ));
        }
        let value = f[2].parse::<u32>().map_err(|e| bad(source, i + 1, e))?;
        let confidence = match f.get(3) {
            Some(c) if !c.is_empty() => Some(c.parse::<f64>().map_err(|e| bad(source, i + 1, e))?),
            _ => None,
        };
        rows.push((f[0].to_string(), f[1].to_string(), value, confidence));
    }
    Ok(rows)
}
