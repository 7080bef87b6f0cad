use std::collections::{BTreeMap, HashMap};

use super::graph::DocumentGraph;
use super::schema::Schema;
use crate::error::{Error, Result};

/// Per-annotator empirical distribution over the five confidence levels.
#[derive(Debug, Clone, Default)]
pub struct ConfidenceHistogram {
    counts: [u64; 5],
}

impl ConfidenceHistogram {
    pub fn add(&mut self, level: u8) {
        self.counts[usize::from(level - 1)] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Mid-CDF ridit score of `level`: mass strictly below plus half the
    /// mass at the level.
    pub fn ridit(&self, level: u8) -> f64 {
        let total = self.total() as f64;
        let j = usize::from(level - 1);
        let below: u64 = self.counts[..j].iter().sum();
        (below as f64 + 0.5 * self.counts[j] as f64) / total
    }
}

/// Builds one histogram per annotator over that annotator's ungated records.
/// Annotators with only gated records fall back to all of their records.
pub fn confidence_histograms(
    corpus: &[DocumentGraph],
    schema: &Schema,
) -> BTreeMap<String, ConfidenceHistogram> {
    let mut ungated: BTreeMap<String, ConfidenceHistogram> = BTreeMap::new();
    let mut all: BTreeMap<String, ConfidenceHistogram> = BTreeMap::new();
    for doc in corpus {
        for rec in &doc.annotations {
            all.entry(rec.annotator.clone())
                .or_default()
                .add(rec.raw_confidence);
            let gated = schema
                .get(&rec.property)
                .is_some_and(|spec| spec.gate.is_some());
            if !gated {
                ungated
                    .entry(rec.annotator.clone())
                    .or_default()
                    .add(rec.raw_confidence);
            }
        }
    }
    for (annotator, hist) in all {
        ungated.entry(annotator).or_insert(hist);
    }
    ungated
}

/// Fills `ridit_confidence` on every record. Gated records get the mean of
/// their own score and the score of the parent record by the same annotator.
pub fn ridit_score_corpus(
    mut corpus: Vec<DocumentGraph>,
    schema: &Schema,
) -> Result<Vec<DocumentGraph>> {
    let hist = confidence_histograms(&corpus, schema);
    for doc in &mut corpus {
        for rec in &mut doc.annotations {
            let h = hist.get(&rec.annotator).ok_or_else(|| {
                Error::Consistency(format!("annotator `{}` has no records", rec.annotator))
            })?;
            rec.ridit_confidence = Some(h.ridit(rec.raw_confidence));
        }
        let own: HashMap<(String, String, String), f64> = doc
            .annotations
            .iter()
            .map(|r| {
                (
                    (r.element.clone(), r.property.clone(), r.annotator.clone()),
                    r.ridit_confidence.expect("scored above"),
                )
            })
            .collect();
        for rec in &mut doc.annotations {
            let Some(gate) = schema.get(&rec.property).and_then(|s| s.gate.as_ref()) else {
                continue;
            };
            let key = (
                rec.element.clone(),
                gate.parent.clone(),
                rec.annotator.clone(),
            );
            let parent = own.get(&key).ok_or_else(|| {
                Error::Consistency(format!(
                    "document `{}`: gated record `{}` on `{}` has no parent record",
                    doc.id, rec.property, rec.element
                ))
            })?;
            let child = rec.ridit_confidence.expect("scored above");
            rec.ridit_confidence = Some(0.5 * (child + parent));
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_level_scores_one_half() {
        let mut h = ConfidenceHistogram::default();
        for _ in 0..7 {
            h.add(5);
        }
        assert_eq!(h.ridit(5), 0.5);
    }

    #[test]
    fn mid_cdf_hand_computation() {
        // frequencies {1: 0.2, 3: 0.5, 5: 0.3}
        let mut h = ConfidenceHistogram::default();
        for (level, n) in [(1u8, 2), (3, 5), (5, 3)] {
            for _ in 0..n {
                h.add(level);
            }
        }
        assert!((h.ridit(3) - 0.45).abs() < 1e-12);
        assert!((h.ridit(1) - 0.1).abs() < 1e-12);
        assert!((h.ridit(5) - 0.85).abs() < 1e-12);
    }

    #[test]
    fn ridit_nondecreasing_in_level() {
        let mut h = ConfidenceHistogram::default();
        for level in [1u8, 2, 2, 4, 5, 5, 5] {
            h.add(level);
        }
        let scores: Vec<f64> = (1..=5).map(|l| h.ridit(l)).collect();
        assert!(scores.windows(2).all(|w| w[0] <= w[1]));
    }
}
