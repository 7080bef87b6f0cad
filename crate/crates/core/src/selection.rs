//! Type-count selection with flat mixtures and bootstrap intervals.
//!
//! Each classification is fitted on its own as a K-component mixture over
//! its annotated elements (no factors, no cross-classification priors),
//! using the same likelihoods and annotator intercepts as the full model.
//! Candidate counts are compared by per-item dev log evidence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Classification, DocumentGraph, Schema};
use crate::error::{Error, Result};
use crate::learning::{optimize_likelihoods, FitConfig, InitMethod};
use crate::likelihoods::logsumexp;
use crate::observe::{evidence_potential, CompiledCorpus, LoglikTable, ObsIndex, WeightedKey};
use crate::params::{ModelParams, TypeInventory};
use crate::stats::percentile_sorted;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectConfig {
    /// Likelihood optimizer, weighting, seed and initialization settings.
    pub fit: FitConfig,
    pub restarts: usize,
    pub max_iters: usize,
    /// Relative train-objective improvement below which EM stops.
    pub tol: f64,
    pub bootstrap: usize,
    pub level: f64,
}

/// Selection holds the annotator covariance at the identity and starts the
/// first restart from k-means: with a learned covariance the intercepts of
/// binary properties collapse toward zero at different rates for different
/// K, which lets a K+1 fit with one duplicated type edge out the right K on
/// dev evidence.
impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig {
                init: InitMethod::Clustered,
                fixed_sigma: Some(1.0),
                ..FitConfig::default()
            },
            restarts: 5,
            max_iters: 100,
            tol: 1e-5,
            bootstrap: 1000,
            level: 0.95,
        }
    }
}

/// Elements of one classification with their observations.
#[derive(Debug, Clone)]
pub struct Items {
    pub ids: Vec<(String, String)>,
    pub observations: Vec<Vec<WeightedKey>>,
}

impl Items {
    pub fn collect(corpus: &CompiledCorpus, schema: &Schema, class: Classification) -> Self {
        let mut ids = Vec::new();
        let mut observations = Vec::new();
        for (doc, obs) in corpus.docs.iter().zip(&corpus.observations) {
            for (element, keys) in &obs.elements {
                let Some(first) = keys.first() else { continue };
                let p = corpus.index.keys[first.key as usize].property;
                if schema.properties()[p].classification() == class {
                    ids.push((doc.id.clone(), element.clone()));
                    observations.push(keys.clone());
                }
            }
        }
        Self { ids, observations }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub classification: Classification,
    pub k: usize,
    /// Likelihood parameters; only the fitted classification is meaningful.
    pub params: ModelParams,
    pub weights: Vec<f64>,
    /// Train log-likelihood per EM iteration (without the intercept prior).
    pub train_trace: Vec<f64>,
    /// Responsibilities of train items, aligned with the train [`Items`].
    pub responsibilities: Vec<Vec<f64>>,
    /// Exact log evidence of each dev item.
    pub dev_evidence: Vec<f64>,
}

impl MixtureFit {
    pub fn train_loglik(&self) -> f64 {
        *self.train_trace.last().expect("at least one iteration")
    }
}

fn inventory_for(class: Classification, k: usize) -> Result<TypeInventory> {
    let mut c = [1usize; 4];
    c[class as usize] = k;
    TypeInventory::new(c[0], c[1], c[2], c[3])
}

/// Per-item log evidence and responsibilities under a mixture.
fn item_posteriors(
    items: &Items,
    table: &LoglikTable,
    weights: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = weights.len();
    let logw: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    items
        .observations
        .iter()
        .map(|obs| {
            let mut pot = evidence_potential(obs, table, k);
            for (p, w) in pot.iter_mut().zip(&logw) {
                *p += w;
            }
            let z = logsumexp(&pot);
            (z, pot.iter().map(|p| (p - z).exp()).collect())
        })
        .unzip()
}

struct Compiled {
    train: CompiledCorpus,
    dev: CompiledCorpus,
    train_items: Items,
    dev_items: Items,
}

fn compile(
    train: &[DocumentGraph],
    dev: &[DocumentGraph],
    schema: &Schema,
    class: Classification,
    config: &FitConfig,
) -> Result<Compiled> {
    let train = CompiledCorpus::new(
        train.to_vec(),
        schema,
        ObsIndex::new(),
        config.confidence_weighting,
    )?;
    let dev = CompiledCorpus::new(
        dev.to_vec(),
        schema,
        train.index.clone(),
        config.dev_weighted(),
    )?;
    let train_items = Items::collect(&train, schema, class);
    let dev_items = Items::collect(&dev, schema, class);
    if train_items.is_empty() {
        return Err(Error::Argument(format!(
            "no annotated {class} items to fit"
        )));
    }
    Ok(Compiled {
        train,
        dev,
        train_items,
        dev_items,
    })
}

fn mixture_once(
    data: &Compiled,
    schema: &Schema,
    class: Classification,
    k: usize,
    config: &SelectConfig,
    restart: usize,
) -> Result<MixtureFit> {
    let seed = config.fit.seed.wrapping_add(restart as u64);
    let inv = inventory_for(class, k)?;
    let mut params = ModelParams::init(schema, inv, &data.train.index.annotators, seed);
    if let Some(s) = config.fit.fixed_sigma {
        params
            .properties
            .iter_mut()
            .for_each(|q| q.set_isotropic_sigma(s));
    }
    if config.fit.init == InitMethod::Clustered && restart == 0 {
        let cfg = FitConfig {
            seed,
            ..config.fit.clone()
        };
        crate::cluster::clustered_init(&data.train, &mut params, &cfg, Some(class))?;
    }
    let mut weights = vec![1.0 / k as f64; k];
    let mut trace = Vec::new();
    let mut last_objective = f64::NEG_INFINITY;
    let index = &data.train.index;
    let items = &data.train_items;
    let mut resp;
    let mut iter = 0;
    loop {
        let table = LoglikTable::compute(index, &params);
        let (ev, r) = item_posteriors(items, &table, &weights);
        resp = r;
        let ll: f64 = ev.iter().sum();
        let objective = ll + params.rho_log_prior()?;
        if !objective.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite {class} mixture objective at iteration {iter}"
            )));
        }
        trace.push(ll);
        let gain = objective - last_objective;
        last_objective = objective;
        iter += 1;
        if iter >= config.max_iters.max(1) || gain.abs() < config.tol * objective.abs().max(1.0) {
            break;
        }
        let mut counts: Vec<Vec<f64>> = index
            .keys
            .iter()
            .map(|key| vec![0.0; inv.count(params.properties[key.property].classification)])
            .collect();
        let mut totals = vec![0.0; k];
        for (obs, r) in items.observations.iter().zip(&resp) {
            for (t, x) in totals.iter_mut().zip(r) {
                *t += x;
            }
            for wk in obs {
                for (c, x) in counts[wk.key as usize].iter_mut().zip(r) {
                    *c += wk.weight * x;
                }
            }
        }
        let n: f64 = totals.iter().sum();
        weights = totals.iter().map(|t| (t / n).max(1e-300)).collect();
        optimize_likelihoods(index, &counts, &mut params, &config.fit, Some(class))?;
    }
    let table = LoglikTable::compute(&data.dev.index, &params);
    let (dev_evidence, _) = item_posteriors(&data.dev_items, &table, &weights);
    Ok(MixtureFit {
        classification: class,
        k,
        params,
        weights,
        train_trace: trace,
        responsibilities: resp,
        dev_evidence,
    })
}

fn best_of(
    data: &Compiled,
    schema: &Schema,
    class: Classification,
    k: usize,
    config: &SelectConfig,
) -> Result<MixtureFit> {
    let fits: Vec<MixtureFit> = (0..config.restarts.max(1))
        .into_par_iter()
        .map(|r| mixture_once(data, schema, class, k, config, r))
        .collect::<Result<_>>()?;
    // first restart wins ties, so the result does not depend on scheduling
    Ok(fits
        .into_iter()
        .reduce(|a, b| {
            if b.train_loglik() > a.train_loglik() {
                b
            } else {
                a
            }
        })
        .expect("at least one restart"))
}

/// Fits a `k`-component mixture to the `class` items of `train` and scores
/// the `class` items of `dev`. Restarts run in parallel; the restart with
/// the highest train log-likelihood is kept.
pub fn fit_mixture(
    train: &[DocumentGraph],
    dev: &[DocumentGraph],
    schema: &Schema,
    class: Classification,
    k: usize,
    config: &SelectConfig,
) -> Result<MixtureFit> {
    if k < 1 {
        return Err(Error::Argument(
            "mixture needs at least one component".into(),
        ));
    }
    config.fit.validate()?;
    let data = compile(train, dev, schema, class, &config.fit)?;
    best_of(&data, schema, class, k, config)
}

/// Percentile bootstrap interval of `mean(b) - mean(a)` over resampled
/// items. Resample `r` draws from its own stream of `seed`.
pub fn bootstrap_diff_ci(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Argument(format!(
            "evidence lists have {} and {} items",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Argument("no items to resample".into()));
    }
    if resamples < 1000 {
        return Err(Error::Argument(format!(
            "{resamples} resamples; at least 1000 required"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Argument(format!(
            "interval level {level} outside (0, 1)"
        )));
    }
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let n = diff.len();
    let mut means: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64 + 1);
            (0..n).map(|_| diff[rng.gen_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    Ok((
        percentile_sorted(&means, tail),
        percentile_sorted(&means, 1.0 - tail),
    ))
}

/// Selection outcome for one classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSelection {
    pub classification: Classification,
    pub candidates: Vec<usize>,
    /// Summed dev log evidence per candidate.
    pub dev_evidence: Vec<f64>,
    pub train_loglik: Vec<f64>,
    /// Interval of the per-item dev evidence gain of each candidate over
    /// the chosen one (`[0, 0]` for the chosen one itself).
    pub intervals: Vec<(f64, f64)>,
    pub dev_items: usize,
    pub chosen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub level: f64,
    pub resamples: usize,
    pub classifications: Vec<ClassSelection>,
}

impl SelectionReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for c in &self.classifications {
            out.push_str(&format!(
                "{} (chosen K = {}, {} dev items)\n{:>4}  {:>14}  {:>14}  {:>24}\n",
                c.classification,
                c.chosen,
                c.dev_items,
                "K",
                "train loglik",
                "dev evidence",
                "gain vs chosen"
            ));
            for (i, k) in c.candidates.iter().enumerate() {
                let (lo, hi) = c.intervals[i];
                let mark = if *k == c.chosen { "*" } else { " " };
                out.push_str(&format!(
                    "{k:>3}{mark}  {:>14.3}  {:>14.3}  [{lo:>10.4}, {hi:>10.4}]\n",
                    c.train_loglik[i], c.dev_evidence[i]
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Smallest candidate `K` such that no larger candidate's interval of
/// per-item evidence gain over `K` lies strictly above zero.
pub fn smallest_reliable(
    candidates: &[usize],
    per_item: &[Vec<f64>],
    config: &SelectConfig,
) -> Result<usize> {
    for i in 0..candidates.len() {
        let mut reliable_gain = false;
        for j in i + 1..candidates.len() {
            let (lo, _) = bootstrap_diff_ci(
                &per_item[i],
                &per_item[j],
                config.bootstrap,
                config.level,
                config.fit.seed,
            )?;
            if lo > 0.0 {
                reliable_gain = true;
                break;
            }
        }
        if !reliable_gain {
            return Ok(i);
        }
    }
    unreachable!("the largest candidate has no larger rival")
}

/// Fits every candidate count for `class` and applies the smallest-K rule.
pub fn select_k(
    train: &[DocumentGraph],
    dev: &[DocumentGraph],
    schema: &Schema,
    class: Classification,
    candidates: &[usize],
    config: &SelectConfig,
) -> Result<ClassSelection> {
    if candidates.is_empty() {
        return Err(Error::Argument("no candidate type counts".into()));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) || candidates[0] < 1 {
        return Err(Error::Argument(format!(
            "candidates {candidates:?} must be positive and strictly increasing"
        )));
    }
    config.fit.validate()?;
    let data = compile(train, dev, schema, class, &config.fit)?;
    if data.dev_items.is_empty() {
        return Err(Error::Argument(format!(
            "no annotated {class} items in the dev corpus"
        )));
    }
    let fits: Vec<MixtureFit> = candidates
        .par_iter()
        .map(|&k| best_of(&data, schema, class, k, config))
        .collect::<Result<_>>()?;
    let per_item: Vec<Vec<f64>> = fits.iter().map(|f| f.dev_evidence.clone()).collect();
    let chosen = smallest_reliable(candidates, &per_item, config)?;
    let intervals = per_item
        .iter()
        .enumerate()
        .map(|(i, ev)| {
            if i == chosen {
                Ok((0.0, 0.0))
            } else {
                bootstrap_diff_ci(
                    &per_item[chosen],
                    ev,
                    config.bootstrap,
                    config.level,
                    config.fit.seed,
                )
            }
        })
        .collect::<Result<_>>()?;
    Ok(ClassSelection {
        classification: class,
        candidates: candidates.to_vec(),
        dev_evidence: per_item.iter().map(|v| v.iter().sum()).collect(),
        train_loglik: fits.iter().map(|f| f.train_loglik()).collect(),
        intervals,
        dev_items: data.dev_items.len(),
        chosen: candidates[chosen],
    })
}

/// [`select_k`] for several classifications.
pub fn select_k_all(
    train: &[DocumentGraph],
    dev: &[DocumentGraph],
    schema: &Schema,
    classes: &[Classification],
    candidates: &[usize],
    config: &SelectConfig,
) -> Result<SelectionReport> {
    let classifications = classes
        .iter()
        .map(|&c| select_k(train, dev, schema, c, candidates, config))
        .collect::<Result<_>>()?;
    Ok(SelectionReport {
        level: config.level,
        resamples: config.bootstrap,
        classifications,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_degenerate_intervals() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        assert_eq!(
            bootstrap_diff_ci(&a, &a, 1000, 0.95, 1).unwrap(),
            (0.0, 0.0)
        );
        let b: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
        let (lo, hi) = bootstrap_diff_ci(&a, &b, 1000, 0.95, 1).unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_argument_errors() {
        assert!(bootstrap_diff_ci(&[1.0], &[1.0, 2.0], 1000, 0.95, 0).is_err());
        assert!(bootstrap_diff_ci(&[1.0], &[2.0], 999, 0.95, 0).is_err());
        assert!(bootstrap_diff_ci(&[], &[], 1000, 0.95, 0).is_err());
    }

    #[test]
    fn identical_evidence_picks_smallest() {
        let ev = vec![vec![-1.0, -2.0, -0.5]; 3];
        assert_eq!(
            smallest_reliable(&[1, 2, 3], &ev, &SelectConfig::default()).unwrap(),
            0
        );
    }

    #[test]
    fn reliable_gain_moves_the_choice() {
        let base = vec![-2.0, -2.5, -1.5, -2.2];
        let better: Vec<f64> = base.iter().map(|x| x + 0.5).collect();
        let ev = vec![base.clone(), better.clone(), better];
        assert_eq!(
            smallest_reliable(&[1, 2, 3], &ev, &SelectConfig::default()).unwrap(),
            1
        );
    }
}
