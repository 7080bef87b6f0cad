//! Krippendorff's alpha over sparse item-by-annotator reliability data.
//!
//! Alpha is computed from the coincidence matrix: within every item with
//! `m >= 2` values, each ordered pair of values from different annotators
//! adds `1 / (m - 1)` to its cell. Then
//! `alpha = 1 - (n - 1) * sum o_ck d(c,k) / sum n_c n_k d(c,k)`.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_temporal, DocumentGraph, Response, ResponseType, Schema};
use crate::error::{Error, Result};
use crate::likelihoods::temporal_outcome;
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Nominal,
    /// Squared cumulative-margin distance.
    Ordinal,
    /// Squared difference of level ranks.
    OrdinalRank,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Metric::Nominal => "nominal",
            Metric::Ordinal => "ordinal",
            Metric::OrdinalRank => "ordinal-rank",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Metric::Nominal),
            "ordinal" => Ok(Metric::Ordinal),
            "ordinal-rank" => Ok(Metric::OrdinalRank),
            _ => Err(Error::Argument(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub item: usize,
    pub annotator: usize,
    pub value: u32,
    pub confidence: Option<f64>,
}

/// Sparse responses, one cell per (item, annotator).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReliabilityMatrix {
    pub items: Vec<String>,
    pub annotators: Vec<String>,
    pub cells: Vec<Cell>,
}

impl ReliabilityMatrix {
    /// Builds a matrix from long-format rows. A repeated (item, annotator)
    /// pair is a consistency error.
    pub fn from_rows<I, S>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, u32, Option<f64>)>,
        S: AsRef<str>,
    {
        let mut m = Self::default();
        let mut item_ids: HashMap<String, usize> = HashMap::new();
        let mut ann_ids: HashMap<String, usize> = HashMap::new();
        let mut seen = std::collections::HashSet::new();
        for (item, ann, value, confidence) in rows {
            let (item, ann) = (item.as_ref(), ann.as_ref());
            let i = *item_ids.entry(item.to_owned()).or_insert_with(|| {
                m.items.push(item.to_owned());
                m.items.len() - 1
            });
            let a = *ann_ids.entry(ann.to_owned()).or_insert_with(|| {
                m.annotators.push(ann.to_owned());
                m.annotators.len() - 1
            });
            if !seen.insert((i, a)) {
                return Err(Error::Consistency(format!(
                    "annotator `{ann}` rated item `{item}` twice"
                )));
            }
            m.cells.push(Cell {
                item: i,
                annotator: a,
                value,
                confidence,
            });
        }
        Ok(m)
    }

    /// Responses to one property across a corpus. Items are
    /// `document/element`; binary answers map to 0/1, ordinal levels and
    /// categorical indices to themselves, temporal tuples to their outcome
    /// code. Confidences are ridit scores when present.
    pub fn from_corpus(docs: &[DocumentGraph], schema: &Schema, property: &str) -> Result<Self> {
        let spec = schema
            .properties()
            .iter()
            .find(|p| p.name == property)
            .ok_or_else(|| Error::Schema(format!("unknown property `{property}`")))?;
        let mut rows = Vec::new();
        for doc in docs {
            for rec in doc.annotations.iter().filter(|r| r.property == property) {
                let value = match (&spec.response, &rec.value) {
                    (ResponseType::Binary, Response::Binary(b)) => u32::from(*b),
                    (ResponseType::TemporalTuple, Response::Tuple(t)) => {
                        let t = normalize_temporal(*t)?;
                        temporal_outcome(t.lock_start, t.lock_end, t.free_order) as u32
                    }
                    (_, Response::Index(j)) => *j,
                    (_, v) => {
                        return Err(Error::Schema(format!(
                            "response {v:?} does not fit property `{property}`"
                        )))
                    }
                };
                rows.push((
                    format!("{}/{}", doc.id, rec.element),
                    rec.annotator.clone(),
                    value,
                    rec.ridit_confidence,
                ));
            }
        }
        Self::from_rows(rows)
    }

    /// Values of every item, in annotator order within an item.
    pub fn units(&self) -> Vec<Vec<u32>> {
        let mut by_item: BTreeMap<usize, Vec<(usize, u32)>> = BTreeMap::new();
        for c in &self.cells {
            by_item
                .entry(c.item)
                .or_default()
                .push((c.annotator, c.value));
        }
        let mut units = vec![Vec::new(); self.items.len()];
        for (i, mut vals) in by_item {
            vals.sort_unstable();
            units[i] = vals.into_iter().map(|(_, v)| v).collect();
        }
        units
    }

    /// Copy keeping only cells that satisfy `keep`.
    pub fn filter(&self, keep: impl Fn(&Cell) -> bool) -> Self {
        Self {
            items: self.items.clone(),
            annotators: self.annotators.clone(),
            cells: self.cells.iter().filter(|c| keep(c)).copied().collect(),
        }
    }

    /// Fraction of items with at least two responses.
    pub fn coverage(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        let pairable = self.units().iter().filter(|u| u.len() >= 2).count();
        pairable as f64 / self.items.len() as f64
    }
}

/// Alpha over explicit units (each a list of values from distinct
/// annotators).
pub fn alpha_of_units(units: &[Vec<u32>], metric: Metric) -> Result<f64> {
    let mut coincidence: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    let mut pairable_units = 0usize;
    for u in units {
        let m = u.len();
        if m < 2 {
            continue;
        }
        pairable_units += 1;
        let w = 1.0 / (m - 1) as f64;
        for (i, &a) in u.iter().enumerate() {
            for (j, &b) in u.iter().enumerate() {
                if i != j {
                    *coincidence.entry((a, b)).or_default() += w;
                }
            }
        }
    }
    if pairable_units < 2 {
        return Err(Error::UndefinedAgreement(format!(
            "{pairable_units} items with two or more responses; at least 2 needed"
        )));
    }
    let mut margins: BTreeMap<u32, f64> = BTreeMap::new();
    for (&(c, _), &o) in &coincidence {
        *margins.entry(c).or_default() += o;
    }
    let n: f64 = margins.values().sum();
    let values: Vec<u32> = margins.keys().copied().collect();
    let dist = distance_table(&values, &margins, metric);
    let idx: HashMap<u32, usize> = values.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    let observed: f64 = coincidence
        .iter()
        .map(|(&(c, k), &o)| o * dist[idx[&c]][idx[&k]])
        .sum();
    let mut expected = 0.0;
    for (i, c) in values.iter().enumerate() {
        for (j, k) in values.iter().enumerate() {
            expected += margins[c] * margins[k] * dist[i][j];
        }
    }
    if expected <= 0.0 {
        return Err(Error::UndefinedAgreement(
            "no expected disagreement (a single value is used)".into(),
        ));
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

/// Squared distances between the observed values (sorted ascending).
fn distance_table(values: &[u32], margins: &BTreeMap<u32, f64>, metric: Metric) -> Vec<Vec<f64>> {
    let k = values.len();
    let mut d = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            d[i][j] = match metric {
                Metric::Nominal => f64::from(u8::from(i != j)),
                Metric::OrdinalRank => {
                    let x = f64::from(values[i]) - f64::from(values[j]);
                    x * x
                }
                Metric::Ordinal => {
                    let (lo, hi) = (i.min(j), i.max(j));
                    let span: f64 = values[lo..=hi].iter().map(|v| margins[v]).sum();
                    let x = span - (margins[&values[i]] + margins[&values[j]]) / 2.0;
                    x * x
                }
            };
        }
    }
    d
}

pub fn krippendorff_alpha(data: &ReliabilityMatrix, metric: Metric) -> Result<f64> {
    alpha_of_units(&data.units(), metric)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// `None` when agreement is undefined at this threshold.
    pub alpha: Option<f64>,
    /// Fraction of items keeping at least two responses.
    pub coverage: f64,
}

/// Minimum fraction of items that must keep two or more responses for a
/// thresholded alpha to be reported.
pub const MIN_COVERAGE: f64 = 1.0 / 3.0;

/// Alpha after dropping responses with confidence at or below each
/// threshold. Threshold 0 keeps every response.
pub fn thresholded_alpha(
    data: &ReliabilityMatrix,
    thresholds: &[f64],
    metric: Metric,
) -> Result<Vec<CurvePoint>> {
    if thresholds.windows(2).any(|w| w[0] >= w[1])
        || thresholds.iter().any(|t| !(0.0..1.0).contains(t))
    {
        return Err(Error::Argument(format!(
            "thresholds {thresholds:?} must increase within [0, 1)"
        )));
    }
    if let Some(c) = data.cells.iter().find(|c| c.confidence.is_none()) {
        return Err(Error::Consistency(format!(
            "response by `{}` on `{}` has no ridit confidence",
            data.annotators[c.annotator], data.items[c.item]
        )));
    }
    thresholds
        .par_iter()
        .map(|&t| {
            let kept = if t == 0.0 {
                data.clone()
            } else {
                data.filter(|c| c.confidence.expect("checked above") > t)
            };
            let coverage = kept.coverage();
            let alpha = if coverage < MIN_COVERAGE {
                None
            } else {
                match krippendorff_alpha(&kept, metric) {
                    Ok(a) => Some(a),
                    Err(Error::UndefinedAgreement(_)) => None,
                    Err(e) => return Err(e),
                }
            };
            Ok(CurvePoint {
                threshold: t,
                alpha,
                coverage,
            })
        })
        .collect()
}

/// Percentile interval of alpha over item resamples. Resamples on which
/// alpha is undefined are skipped; it is an error if all are.
pub fn bootstrap_alpha(
    data: &ReliabilityMatrix,
    metric: Metric,
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!(
            "bootstrap needs resamples > 0 and level in (0, 1); got {resamples}, {level}"
        )));
    }
    let units: Vec<Vec<u32>> = data.units().into_iter().filter(|u| !u.is_empty()).collect();
    if units.is_empty() {
        return Err(Error::UndefinedAgreement("no responses".into()));
    }
    let n = units.len();
    let mut alphas: Vec<f64> = (0..resamples)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            let sample: Vec<Vec<u32>> =
                (0..n).map(|_| units[rng.gen_range(0..n)].clone()).collect();
            alpha_of_units(&sample, metric).ok()
        })
        .collect();
    if alphas.is_empty() {
        return Err(Error::UndefinedAgreement(
            "alpha undefined on every resample".into(),
        ));
    }
    alphas.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((
        percentile_sorted(&alphas, tail),
        percentile_sorted(&alphas, 1.0 - tail),
    ))
}

/// Alpha of each non-panel annotator together with the whole panel, in
/// annotator order. Undefined values are `None`.
pub fn pairwise_alpha_vs_panel(
    data: &ReliabilityMatrix,
    panel: &[String],
    metric: Metric,
) -> Result<Vec<(String, Option<f64>)>> {
    let ids: Vec<usize> = panel
        .iter()
        .map(|p| {
            data.annotators
                .iter()
                .position(|a| a == p)
                .ok_or_else(|| Error::Argument(format!("panel member `{p}` has no responses")))
        })
        .collect::<Result<_>>()?;
    if ids.len() < 2 {
        return Err(Error::Argument(
            "panel needs at least two annotators".into(),
        ));
    }
    let in_panel = |a: usize| ids.contains(&a);
    let panel_items: std::collections::HashSet<usize> = data
        .cells
        .iter()
        .filter(|c| in_panel(c.annotator))
        .map(|c| c.item)
        .collect();
    (0..data.annotators.len())
        .filter(|a| !in_panel(*a))
        .map(|a| {
            let sub = data.filter(|c| {
                (in_panel(c.annotator) || c.annotator == a) && panel_items.contains(&c.item)
            });
            let alpha = match krippendorff_alpha(&sub, metric) {
                Ok(v) => Some(v),
                Err(Error::UndefinedAgreement(_)) => None,
                Err(e) => return Err(e),
            };
            Ok((data.annotators[a].clone(), alpha))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[(&str, &str, u32)]) -> ReliabilityMatrix {
        ReliabilityMatrix::from_rows(rows.iter().map(|&(i, a, v)| (i, a, v, None))).unwrap()
    }

    #[test]
    fn perfect_agreement_is_one() {
        let m = matrix(&[
            ("i1", "a", 0),
            ("i1", "b", 0),
            ("i2", "a", 1),
            ("i2", "b", 1),
        ]);
        for metric in [Metric::Nominal, Metric::Ordinal, Metric::OrdinalRank] {
            assert_eq!(krippendorff_alpha(&m, metric).unwrap(), 1.0);
        }
    }

    #[test]
    fn systematic_disagreement_is_negative() {
        // o_01 = o_10 = 2, n_0 = n_1 = 2, n = 4: D_o = 1, D_e = 8 / 12
        let m = matrix(&[
            ("i1", "a", 0),
            ("i1", "b", 1),
            ("i2", "a", 1),
            ("i2", "b", 0),
        ]);
        assert!((krippendorff_alpha(&m, Metric::Nominal).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn undefined_cases() {
        let one = matrix(&[("i1", "a", 0), ("i1", "b", 0)]);
        assert!(matches!(
            krippendorff_alpha(&one, Metric::Nominal),
            Err(Error::UndefinedAgreement(_))
        ));
        let constant = matrix(&[
            ("i1", "a", 2),
            ("i1", "b", 2),
            ("i2", "a", 2),
            ("i2", "b", 2),
        ]);
        assert!(matches!(
            krippendorff_alpha(&constant, Metric::Nominal),
            Err(Error::UndefinedAgreement(_))
        ));
    }

    #[test]
    fn duplicate_cell_is_rejected() {
        let rows = [("i", "a", 0, None), ("i", "a", 1, None)];
        assert!(ReliabilityMatrix::from_rows(rows).is_err());
    }

    #[test]
    fn nominal_and_ordinal_agree_on_binary_data() {
        let m = matrix(&[
            ("i1", "a", 0),
            ("i1", "b", 1),
            ("i1", "c", 1),
            ("i2", "a", 1),
            ("i2", "b", 1),
            ("i3", "a", 0),
            ("i3", "c", 0),
            ("i3", "b", 1),
        ]);
        let n = krippendorff_alpha(&m, Metric::Nominal).unwrap();
        let o = krippendorff_alpha(&m, Metric::Ordinal).unwrap();
        assert!((n - o).abs() < 1e-12);
    }

    #[test]
    fn ordinal_distances_use_cumulative_margins() {
        let margins: BTreeMap<u32, f64> = [(1, 2.0), (2, 4.0), (4, 6.0)].into_iter().collect();
        let d = distance_table(&[1, 2, 4], &margins, Metric::Ordinal);
        // (2 + 4 + 6 - (2 + 6) / 2)^2 = 64
        assert_eq!(d[0][2], 64.0);
        assert_eq!(d[0][1], 9.0);
        assert_eq!(d[1][1], 0.0);
    }

    #[test]
    fn threshold_curve_and_coverage() {
        let rows = vec![
            ("i1", "a", 0, Some(0.9)),
            ("i1", "b", 0, Some(0.8)),
            ("i2", "a", 1, Some(0.7)),
            ("i2", "b", 1, Some(0.9)),
            ("i3", "a", 0, Some(0.1)),
            ("i3", "b", 1, Some(0.2)),
        ];
        let m = ReliabilityMatrix::from_rows(rows).unwrap();
        let curve = thresholded_alpha(&m, &[0.0, 0.5, 0.95], Metric::Nominal).unwrap();
        assert_eq!(
            curve[0].alpha,
            Some(krippendorff_alpha(&m, Metric::Nominal).unwrap())
        );
        assert_eq!(curve[1].alpha, Some(1.0));
        assert!((curve[1].coverage - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(curve[2].alpha, None);
        assert!(thresholded_alpha(&m, &[0.5, 0.2], Metric::Nominal).is_err());
    }

    #[test]
    fn panel_comparison() {
        let m = matrix(&[
            ("i1", "e1", 1),
            ("i1", "e2", 1),
            ("i1", "copy", 1),
            ("i1", "flip", 0),
            ("i2", "e1", 0),
            ("i2", "e2", 0),
            ("i2", "copy", 0),
            ("i2", "flip", 1),
        ]);
        let panel = vec!["e1".to_string(), "e2".to_string()];
        let out = pairwise_alpha_vs_panel(&m, &panel, Metric::Nominal).unwrap();
        let panel_only =
            krippendorff_alpha(&m.filter(|c| c.annotator < 2), Metric::Nominal).unwrap();
        assert_eq!(out[0], ("copy".to_string(), Some(1.0)));
        assert!(out[1].1.unwrap() < panel_only);
        let solo = matrix(&[
            ("i1", "e1", 1),
            ("i1", "e2", 1),
            ("i2", "e1", 0),
            ("i2", "e2", 0),
        ]);
        assert!(pairwise_alpha_vs_panel(&solo, &panel, Metric::Nominal)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn bootstrap_interval_contains_estimate() {
        let mut rows = Vec::new();
        for i in 0..40u32 {
            let truth = i % 3;
            rows.push((format!("i{i}"), "a".to_string(), truth, None));
            rows.push((
                format!("i{i}"),
                "b".to_string(),
                if i % 7 == 0 { (truth + 1) % 3 } else { truth },
                None,
            ));
        }
        let m = ReliabilityMatrix::from_rows(rows).unwrap();
        let a = krippendorff_alpha(&m, Metric::Nominal).unwrap();
        let (lo, hi) = bootstrap_alpha(&m, Metric::Nominal, 1000, 0.95, 3).unwrap();
        assert!(lo <= a && a <= hi, "{lo} {a} {hi}");
    }
}
