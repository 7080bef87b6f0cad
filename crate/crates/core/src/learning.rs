//! Expectation-maximization over documents.
//!
//! The E-step runs belief propagation on every document's factor graph.
//! The M-step maximizes the expected complete-data log-likelihood plus the
//! annotator-intercept prior: type priors in closed form from expected
//! counts, likelihood locations and intercepts by guarded Adam ascent (one
//! independent problem per property), then each intercept covariance in
//! closed form.
//!
//! Observations are aggregated into expected counts `N[key][type]`, so the
//! M-step cost depends on the number of distinct (property, annotator,
//! outcome) keys rather than on corpus size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Classification, DocumentGraph, Schema};
use crate::error::{Error, Result};
use crate::factorgraph::{build_graph_compiled, loopy_bp, BpConfig, PosteriorSet, PriorBlock};
use crate::observe::{CompiledCorpus, DocObservations, LoglikTable, ObsIndex};
use crate::optim::{maximize, AdamConfig};
use crate::params::{normalize_counts, ModelParams, PriorParams, TypeInventory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub window: usize,
    pub max_em_iters: usize,
    pub adam: AdamConfig,
    /// Adam steps per M-step.
    pub m_steps: usize,
    pub bp: BpConfig,
    pub seed: u64,
    pub confidence_weighting: bool,
    /// Weighting of dev evidence; follows `confidence_weighting` when unset.
    pub dev_weighting: Option<bool>,
    /// Keep every intercept covariance fixed at this isotropic variance.
    pub fixed_sigma: Option<f64>,
    /// When false, annotator intercepts stay at their current values.
    pub learn_rho: bool,
    /// Stop once train evidence improves by less than this (0 disables).
    pub em_tol: f64,
    /// Independent initializations; the fit with the highest final train
    /// evidence is kept.
    pub restarts: usize,
    pub init: InitMethod,
    pub sigma_update: SigmaUpdate,
}

/// Closed-form refit of each intercept covariance after the M-step ascent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaUpdate {
    /// Second moments of the current intercepts.
    #[default]
    PlugIn,
    /// Second moments plus each intercept's Laplace posterior covariance.
    /// The plug-in rule shrinks toward the floor when annotators have few
    /// observations each.
    Laplace,
}

/// Starting point of each restart.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    /// Locations drawn from `N(0, 0.5^2)`.
    #[default]
    Random,
    /// Likelihoods fitted to k-means clusters of element response profiles.
    Clustered,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            window: 2,
            max_em_iters: 50,
            adam: AdamConfig::default(),
            m_steps: 200,
            bp: BpConfig::default(),
            seed: 0,
            confidence_weighting: true,
            dev_weighting: None,
            fixed_sigma: None,
            learn_rho: true,
            em_tol: 0.0,
            restarts: 1,
            init: InitMethod::Random,
            sigma_update: SigmaUpdate::PlugIn,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.window == 0 {
            return Err(Error::Argument("window must be at least 1".into()));
        }
        if self.fixed_sigma.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::Argument("fixed covariance must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn dev_weighted(&self) -> bool {
        self.dev_weighting.unwrap_or(self.confidence_weighting)
    }
}

/// Expected counts from one E-step.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    /// `counts[key][type]`: summed weight times posterior mass.
    pub counts: Vec<Vec<f64>>,
    pub priors: PriorParams,
}

impl SuffStats {
    fn zeros(index: &ObsIndex, key_k: &[usize], inv: &TypeInventory) -> Self {
        let z = |v: Vec<f64>| vec![0.0; v.len()];
        let u = PriorParams::uniform(inv);
        Self {
            counts: index
                .keys
                .iter()
                .zip(key_k)
                .map(|(_, &k)| vec![0.0; k])
                .collect(),
            priors: PriorParams {
                theta_event: z(u.theta_event),
                theta_entity: z(u.theta_entity),
                theta_role: z(u.theta_role),
                theta_rel_event_event: z(u.theta_rel_event_event),
                theta_rel_event_entity: z(u.theta_rel_event_entity),
            },
        }
    }

    fn add(&mut self, other: &SuffStats) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        let add = |a: &mut Vec<f64>, b: &Vec<f64>| {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        add(&mut self.priors.theta_event, &other.priors.theta_event);
        add(&mut self.priors.theta_entity, &other.priors.theta_entity);
        add(&mut self.priors.theta_role, &other.priors.theta_role);
        add(
            &mut self.priors.theta_rel_event_event,
            &other.priors.theta_rel_event_event,
        );
        add(
            &mut self.priors.theta_rel_event_entity,
            &other.priors.theta_rel_event_entity,
        );
    }
}

fn key_cards(index: &ObsIndex, params: &ModelParams) -> Vec<usize> {
    index
        .keys
        .iter()
        .map(|k| {
            params
                .inventory
                .count(params.properties[k.property].classification)
        })
        .collect()
}

/// Expected counts implied by one document's posteriors.
fn doc_stats(
    obs: &DocObservations,
    post: &PosteriorSet,
    index: &ObsIndex,
    key_k: &[usize],
    inv: &TypeInventory,
) -> Result<SuffStats> {
    let mut s = SuffStats::zeros(index, key_k, inv);
    let (ke, kn) = (inv.event, inv.entity);
    let kq = inv.relation;
    for v in &post.variables {
        match v.classification {
            Classification::Event => add_into(&mut s.priors.theta_event, &v.probs),
            Classification::Entity => add_into(&mut s.priors.theta_entity, &v.probs),
            _ => {}
        }
    }
    for f in &post.factors {
        match f.block {
            PriorBlock::Role => add_into(&mut s.priors.theta_role, &f.probs),
            PriorBlock::RelEventEvent => add_into(&mut s.priors.theta_rel_event_event, &f.probs),
            PriorBlock::RelEventEntity => add_into(&mut s.priors.theta_rel_event_entity, &f.probs),
            PriorBlock::RelEntityEvent => {
                // beliefs are [entity][event][rel]; the block is [event][entity][rel]
                for n in 0..kn {
                    for e in 0..ke {
                        for q in 0..kq {
                            s.priors.theta_rel_event_entity[(e * kn + n) * kq + q] +=
                                f.probs[(n * ke + e) * kq + q];
                        }
                    }
                }
            }
        }
    }
    for (element, keys) in &obs.elements {
        let probs = post.marginal(element).ok_or_else(|| {
            Error::Construction(format!(
                "document `{}`: no posterior for `{element}`",
                post.document
            ))
        })?;
        for wk in keys {
            if wk.weight == 0.0 {
                continue;
            }
            for (c, p) in s.counts[wk.key as usize].iter_mut().zip(probs) {
                *c += wk.weight * p;
            }
        }
    }
    Ok(s)
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Expected counts over a compiled corpus given aligned posteriors.
pub fn sufficient_stats(
    corpus: &CompiledCorpus,
    posteriors: &[PosteriorSet],
    params: &ModelParams,
) -> Result<SuffStats> {
    if posteriors.len() != corpus.len() {
        return Err(Error::Argument(format!(
            "{} posterior sets for {} documents",
            posteriors.len(),
            corpus.len()
        )));
    }
    let key_k = key_cards(&corpus.index, params);
    let mut total = SuffStats::zeros(&corpus.index, &key_k, &params.inventory);
    for (obs, post) in corpus.observations.iter().zip(posteriors) {
        total.add(&doc_stats(
            obs,
            post,
            &corpus.index,
            &key_k,
            &params.inventory,
        )?);
    }
    Ok(total)
}

/// Result of one E-step.
#[derive(Debug, Clone)]
pub struct EStep {
    pub posteriors: Vec<PosteriorSet>,
    /// Sum of per-document log evidence.
    pub evidence: f64,
    pub stats: SuffStats,
}

fn infer_docs(
    docs: &[DocumentGraph],
    observations: &[DocObservations],
    table: &LoglikTable,
    params: &ModelParams,
    config: &FitConfig,
) -> Result<Vec<PosteriorSet>> {
    docs.par_iter()
        .zip(observations.par_iter())
        .map(|(doc, obs)| {
            let g = build_graph_compiled(
                doc,
                obs,
                table,
                &params.priors,
                &params.inventory,
                config.window,
            )?;
            loopy_bp(&g, &config.bp).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("document `{}`: {m}", doc.id)),
                other => other,
            })
        })
        .collect()
}

/// Posteriors, summed log evidence and expected counts at `params`.
pub fn e_step(corpus: &CompiledCorpus, params: &ModelParams, config: &FitConfig) -> Result<EStep> {
    let table = LoglikTable::compute(&corpus.index, params);
    let posteriors = infer_docs(&corpus.docs, &corpus.observations, &table, params, config)?;
    let evidence = posteriors.iter().map(|p| p.evidence).sum();
    let stats = sufficient_stats(corpus, &posteriors, params)?;
    Ok(EStep {
        posteriors,
        evidence,
        stats,
    })
}

/// Posteriors for raw (ridit-scored) documents at `params`.
pub fn posteriors(
    docs: &[DocumentGraph],
    schema: &Schema,
    params: &ModelParams,
    config: &FitConfig,
) -> Result<Vec<PosteriorSet>> {
    params.check_schema(schema)?;
    let corpus = CompiledCorpus::new(
        docs.to_vec(),
        schema,
        ObsIndex::new(),
        config.confidence_weighting,
    )?;
    Ok(e_step(&corpus, params, config)?.posteriors)
}

/// Per-property data terms grouped by intercept slot:
/// `(rho slot, [(outcome, counts per type)])`.
type Slot = (usize, Vec<(usize, Vec<f64>)>);

struct PropertyTerms {
    property: usize,
    annotators: Vec<String>,
    terms: Vec<Slot>,
}

fn property_terms(
    index: &ObsIndex,
    counts: &[Vec<f64>],
    params: &mut ModelParams,
    only: Option<Classification>,
) -> Vec<PropertyTerms> {
    let mut out: Vec<PropertyTerms> = Vec::new();
    for (p, prop) in params.properties.iter_mut().enumerate() {
        if only.is_some_and(|c| c != prop.classification) {
            continue;
        }
        let d = prop.model.rho_dim();
        // every annotator with data gets an intercept
        for (key, c) in index.keys.iter().zip(counts) {
            if key.property == p && c.iter().any(|x| *x != 0.0) {
                prop.rho
                    .entry(index.annotators[key.annotator].clone())
                    .or_insert_with(|| vec![0.0; d]);
            }
        }
        let annotators: Vec<String> = prop.rho.keys().cloned().collect();
        let mut slots: std::collections::BTreeMap<usize, Vec<(usize, Vec<f64>)>> =
            Default::default();
        for (key, c) in index.keys.iter().zip(counts) {
            if key.property == p && c.iter().any(|x| *x != 0.0) {
                let name = &index.annotators[key.annotator];
                let slot = annotators.binary_search(name).expect("inserted above");
                slots
                    .entry(slot)
                    .or_default()
                    .push((key.outcome, c.clone()));
            }
        }
        let terms = slots.into_iter().collect();
        out.push(PropertyTerms {
            property: p,
            annotators,
            terms,
        });
    }
    out
}

/// Flattened `[mu per type, shared, rho per annotator]` layout of one
/// property's free parameters.
struct Layout {
    k: usize,
    md: usize,
    sd: usize,
    rd: usize,
    na: usize,
}

impl Layout {
    fn len(&self) -> usize {
        self.k * self.md + self.sd + self.na * self.rd
    }
}

/// Expected complete-data log-likelihood of one property plus its
/// intercept prior, with gradient.
fn property_objective(
    model: &crate::likelihoods::PropertyModel,
    lay: &Layout,
    terms: &[Slot],
    precision: Option<(&[f64], f64)>,
    x: &[f64],
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let (mu, rest) = x.split_at(lay.k * lay.md);
    let (shared, rho) = rest.split_at(lay.sd);
    let (gmu, grest) = grad.split_at_mut(lay.k * lay.md);
    let (gs, grho) = grest.split_at_mut(lay.sd);
    let mut value = 0.0;
    for (slot, outcomes) in terms {
        let r = &rho[slot * lay.rd..(slot + 1) * lay.rd];
        let gr = &mut grho[slot * lay.rd..(slot + 1) * lay.rd];
        value += model.eval_outcomes(mu, shared, r, outcomes, Some((&mut *gmu, &mut *gs, gr)));
    }
    if let Some((prec, norm)) = precision {
        let d = lay.rd;
        for a in 0..lay.na {
            let r = &rho[a * d..(a + 1) * d];
            let gr = &mut grho[a * d..(a + 1) * d];
            let mut quad = 0.0;
            for i in 0..d {
                let mut pr = 0.0;
                for j in 0..d {
                    pr += prec[i * d + j] * r[j];
                }
                quad += r[i] * pr;
                gr[i] -= pr;
            }
            value += norm - 0.5 * quad;
        }
    }
    value
}

/// Sum over annotators of the inverse negative Hessian of the penalized
/// objective in that annotator's intercept. Intercepts of different
/// annotators never share a term, so shifting coordinate `j` of every
/// intercept at once recovers column `j` of every diagonal block.
fn rho_spread(
    model: &crate::likelihoods::PropertyModel,
    lay: &Layout,
    terms: &[Slot],
    prior: (&[f64], f64),
    x: &[f64],
) -> nalgebra::DMatrix<f64> {
    const H: f64 = 1e-5;
    let d = lay.rd;
    let start = lay.k * lay.md + lay.sd;
    let mut blocks = vec![nalgebra::DMatrix::<f64>::zeros(d, d); lay.na];
    let mut xp = x.to_vec();
    let mut gp = vec![0.0; x.len()];
    let mut gm = vec![0.0; x.len()];
    for j in 0..d {
        for a in 0..lay.na {
            xp[start + a * d + j] = x[start + a * d + j] + H;
        }
        property_objective(model, lay, terms, Some(prior), &xp, &mut gp);
        for a in 0..lay.na {
            xp[start + a * d + j] = x[start + a * d + j] - H;
        }
        property_objective(model, lay, terms, Some(prior), &xp, &mut gm);
        for a in 0..lay.na {
            xp[start + a * d + j] = x[start + a * d + j];
            for i in 0..d {
                let o = start + a * d + i;
                blocks[a][(i, j)] = -(gp[o] - gm[o]) / (2.0 * H);
            }
        }
    }
    let mut total = nalgebra::DMatrix::<f64>::zeros(d, d);
    for b in blocks {
        let b = (&b + b.transpose()) * 0.5;
        // the prior alone makes the block positive definite; guard round-off
        let eig = b.symmetric_eigen();
        let inv = eig.eigenvalues.map(|l| 1.0 / l.max(1e-8));
        total += &eig.eigenvectors
            * nalgebra::DMatrix::from_diagonal(&inv)
            * eig.eigenvectors.transpose();
    }
    total
}

fn flatten(prop: &crate::params::PropertyParams, annotators: &[String]) -> Vec<f64> {
    let mut x: Vec<f64> = prop.mu.iter().flatten().copied().collect();
    x.extend_from_slice(&prop.shared);
    for a in annotators {
        x.extend_from_slice(&prop.rho[a]);
    }
    x
}

fn unflatten(
    prop: &mut crate::params::PropertyParams,
    lay: &Layout,
    annotators: &[String],
    x: &[f64],
) {
    for (t, m) in prop.mu.iter_mut().enumerate() {
        m.copy_from_slice(&x[t * lay.md..(t + 1) * lay.md]);
    }
    let off = lay.k * lay.md;
    prop.shared.copy_from_slice(&x[off..off + lay.sd]);
    let off = off + lay.sd;
    for (a, name) in annotators.iter().enumerate() {
        prop.rho
            .get_mut(name)
            .expect("flattened from this map")
            .copy_from_slice(&x[off + a * lay.rd..off + (a + 1) * lay.rd]);
    }
}

fn layout_of(prop: &crate::params::PropertyParams, na: usize) -> Layout {
    Layout {
        k: prop.mu.len(),
        md: prop.model.mu_dim(),
        sd: prop.model.shared_dim(),
        rd: prop.model.rho_dim(),
        na,
    }
}

/// Ascends every property's expected log-likelihood plus intercept prior,
/// then refits intercept covariances unless they are fixed. Properties of
/// other classifications are left alone when `only` is given.
pub fn optimize_likelihoods(
    index: &ObsIndex,
    counts: &[Vec<f64>],
    params: &mut ModelParams,
    config: &FitConfig,
    only: Option<Classification>,
) -> Result<()> {
    let groups = property_terms(index, counts, params, only);
    let updated: Vec<(usize, crate::params::PropertyParams)> = groups
        .par_iter()
        .map(|g| {
            let mut prop = params.properties[g.property].clone();
            let (precision, norm) = prop.prior_terms()?;
            let prec: Vec<f64> = precision.transpose().as_slice().to_vec();
            let lay = layout_of(&prop, g.annotators.len());
            let mut x = flatten(&prop, &g.annotators);
            debug_assert_eq!(x.len(), lay.len());
            let model = prop.model;
            let rho_start = lay.k * lay.md + lay.sd;
            maximize(&mut x, &config.adam, config.m_steps, |x, grad| {
                let v = property_objective(&model, &lay, &g.terms, Some((&prec, norm)), x, grad);
                if !config.learn_rho {
                    grad[rho_start..].iter_mut().for_each(|g| *g = 0.0);
                }
                v
            })
            .map_err(|e| Error::Numerical(format!("property `{}`: {e}", prop.name)))?;
            unflatten(&mut prop, &lay, &g.annotators, &x);
            match (config.fixed_sigma, config.sigma_update) {
                (Some(s), _) => prop.set_isotropic_sigma(s),
                (None, SigmaUpdate::PlugIn) => prop.update_sigma(),
                (None, SigmaUpdate::Laplace) => {
                    let spread = rho_spread(&model, &lay, &g.terms, (&prec, norm), &x);
                    prop.update_sigma_with(Some(&spread));
                }
            }
            Ok((g.property, prop))
        })
        .collect::<Result<_>>()?;
    for (p, prop) in updated {
        params.properties[p] = prop;
    }
    Ok(())
}

/// Gradient of the expected data log-likelihood (no intercept prior) with
/// respect to every property's flattened parameters, concatenated in
/// schema order.
pub fn data_gradient(index: &ObsIndex, counts: &[Vec<f64>], params: &ModelParams) -> Vec<f64> {
    let mut work = params.clone();
    let groups = property_terms(index, counts, &mut work, None);
    let mut out = Vec::new();
    for g in groups {
        let prop = &work.properties[g.property];
        let lay = layout_of(prop, g.annotators.len());
        let x = flatten(prop, &g.annotators);
        let mut grad = vec![0.0; x.len()];
        property_objective(&prop.model, &lay, &g.terms, None, &x, &mut grad);
        out.extend(grad);
    }
    out
}

/// Closed-form prior update from expected counts.
pub fn update_priors(stats: &PriorParams, params: &mut ModelParams) {
    let inv = params.inventory;
    let pri = &mut params.priors;
    normalize_counts(&stats.theta_event, inv.event, &mut pri.theta_event);
    normalize_counts(&stats.theta_entity, inv.entity, &mut pri.theta_entity);
    normalize_counts(&stats.theta_role, inv.role, &mut pri.theta_role);
    normalize_counts(
        &stats.theta_rel_event_event,
        inv.relation,
        &mut pri.theta_rel_event_event,
    );
    normalize_counts(
        &stats.theta_rel_event_entity,
        inv.relation,
        &mut pri.theta_rel_event_entity,
    );
}

/// One M-step from posteriors aligned with `corpus`.
pub fn m_step(
    corpus: &CompiledCorpus,
    posteriors: &[PosteriorSet],
    params: &ModelParams,
    config: &FitConfig,
) -> Result<ModelParams> {
    let stats = sufficient_stats(corpus, posteriors, params)?;
    m_step_from_stats(&corpus.index, &stats, params, config)
}

pub fn m_step_from_stats(
    index: &ObsIndex,
    stats: &SuffStats,
    params: &ModelParams,
    config: &FitConfig,
) -> Result<ModelParams> {
    let mut next = params.clone();
    update_priors(&stats.priors, &mut next);
    optimize_likelihoods(index, &stats.counts, &mut next, config, None)?;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    DevDecrease,
    MaxIters,
    Converged,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    /// Train log evidence plus intercept prior, per EM iteration.
    pub train_evidence: Vec<f64>,
    pub dev_evidence: Vec<f64>,
    /// Train-document posteriors at `params`.
    pub posteriors: Vec<PosteriorSet>,
    pub stopped_reason: StopReason,
}

/// Fits the model by EM. Each iteration evaluates train and dev evidence at
/// the current parameters; when dev evidence falls, the previous
/// parameters are returned. Restart `r` initializes from seed `seed + r`.
pub fn fit(
    train: &[DocumentGraph],
    dev: &[DocumentGraph],
    schema: &Schema,
    inventory: TypeInventory,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Argument("training corpus is empty".into()));
    }
    let (train_c, dev_c) = compile_pair(train, dev, schema, config)?;
    let mut best: Option<FitResult> = None;
    for r in 0..config.restarts.max(1) {
        let seed = config.seed.wrapping_add(r as u64);
        let mut p = ModelParams::init(schema, inventory, &train_c.index.annotators, seed);
        if let Some(s) = config.fixed_sigma {
            p.properties
                .iter_mut()
                .for_each(|q| q.set_isotropic_sigma(s));
        }
        if config.init == InitMethod::Clustered {
            let cfg = FitConfig {
                seed,
                ..config.clone()
            };
            crate::cluster::clustered_init(&train_c, &mut p, &cfg, None)?;
        }
        let result = run_em(&train_c, &dev_c, config, p)?;
        if best
            .as_ref()
            .is_none_or(|b| result.final_train_evidence() > b.final_train_evidence())
        {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn compile_pair(
    train: &[DocumentGraph],
    dev: &[DocumentGraph],
    schema: &Schema,
    config: &FitConfig,
) -> Result<(CompiledCorpus, CompiledCorpus)> {
    let train_c = CompiledCorpus::new(
        train.to_vec(),
        schema,
        ObsIndex::new(),
        config.confidence_weighting,
    )?;
    let dev_c = CompiledCorpus::new(
        dev.to_vec(),
        schema,
        train_c.index.clone(),
        config.dev_weighted(),
    )?;
    Ok((train_c, dev_c))
}

impl FitResult {
    /// Train evidence at the returned parameters.
    pub fn final_train_evidence(&self) -> f64 {
        let n = self.train_evidence.len();
        match self.stopped_reason {
            StopReason::DevDecrease => self.train_evidence[n - 2],
            _ => self.train_evidence[n - 1],
        }
    }
}

/// [`fit`] starting from parameters produced by `init` from the train
/// annotator list.
pub fn fit_from(
    train: &[DocumentGraph],
    dev: &[DocumentGraph],
    schema: &Schema,
    config: &FitConfig,
    init: impl FnOnce(&[String]) -> ModelParams,
) -> Result<FitResult> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Argument("training corpus is empty".into()));
    }
    let (train_c, dev_c) = compile_pair(train, dev, schema, config)?;
    let params = init(&train_c.index.annotators);
    params.check_schema(schema)?;
    run_em(&train_c, &dev_c, config, params)
}

fn run_em(
    train_c: &CompiledCorpus,
    dev_c: &CompiledCorpus,
    config: &FitConfig,
    mut params: ModelParams,
) -> Result<FitResult> {
    let mut train_trace = Vec::new();
    let mut dev_trace = Vec::new();
    let mut previous: Option<(ModelParams, Vec<PosteriorSet>)> = None;
    let mut reason = StopReason::MaxIters;
    let iters = config.max_em_iters.max(1);
    for i in 0..iters {
        let e = e_step(train_c, &params, config)?;
        let train_ev = e.evidence + params.rho_log_prior()?;
        let dev_ev = if dev_c.is_empty() {
            0.0
        } else {
            let table = LoglikTable::compute(&dev_c.index, &params);
            infer_docs(&dev_c.docs, &dev_c.observations, &table, &params, config)?
                .iter()
                .map(|p| p.evidence)
                .sum()
        };
        if !train_ev.is_finite() || !dev_ev.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite evidence at EM iteration {i}"
            )));
        }
        let dev_fell = dev_trace.last().is_some_and(|&d: &f64| dev_ev < d);
        let converged = train_trace.last().is_some_and(|&t: &f64| {
            config.em_tol > 0.0 && (train_ev - t).abs() < config.em_tol * t.abs().max(1.0)
        });
        train_trace.push(train_ev);
        dev_trace.push(dev_ev);
        if dev_fell {
            let (p, post) = previous.expect("a previous iterate exists");
            return Ok(FitResult {
                params: p,
                train_evidence: train_trace,
                dev_evidence: dev_trace,
                posteriors: post,
                stopped_reason: StopReason::DevDecrease,
            });
        }
        if converged || i + 1 == iters {
            if converged {
                reason = StopReason::Converged;
            }
            return Ok(FitResult {
                params,
                train_evidence: train_trace,
                dev_evidence: dev_trace,
                posteriors: e.posteriors,
                stopped_reason: reason,
            });
        }
        let next = m_step_from_stats(&train_c.index, &e.stats, &params, config)?;
        previous = Some((std::mem::replace(&mut params, next), e.posteriors));
    }
    unreachable!("loop returns on its last iteration")
}

/// Maximum a posteriori type of every variable, by document.
pub fn map_types(posteriors: &[PosteriorSet]) -> Vec<(String, String, Classification, usize)> {
    posteriors
        .iter()
        .flat_map(|p| {
            p.variables.iter().map(move |v| {
                (
                    p.document.clone(),
                    v.element.clone(),
                    v.classification,
                    crate::stats::argmax(&v.probs),
                )
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ridit_score_corpus, AnnotationRecord, PredicateNode, Response, Sentence};
    use crate::synth::default_schema;

    fn one_pred_doc(id: &str, answers: &[bool]) -> DocumentGraph {
        DocumentGraph {
            id: id.into(),
            sentences: vec![Sentence {
                predicates: vec![PredicateNode {
                    id: format!("{id}.p"),
                    span: String::new(),
                }],
                ..Sentence::default()
            }],
            doc_edges: vec![],
            annotations: answers
                .iter()
                .map(|&b| AnnotationRecord {
                    element: format!("{id}.p"),
                    property: "telic".into(),
                    annotator: "a".into(),
                    value: Response::Binary(b),
                    raw_confidence: 5,
                    ridit_confidence: None,
                })
                .collect(),
        }
    }

    #[test]
    fn empty_corpus_e_step() {
        let schema = default_schema();
        let inv = TypeInventory::new(2, 1, 1, 1).unwrap();
        let params = ModelParams::init(&schema, inv, &[], 0);
        let c = CompiledCorpus::new(vec![], &schema, ObsIndex::new(), false).unwrap();
        let e = e_step(&c, &params, &FitConfig::default()).unwrap();
        assert!(e.posteriors.is_empty());
        assert_eq!(e.evidence, 0.0);
    }

    #[test]
    fn empty_train_is_an_error() {
        let schema = default_schema();
        let inv = TypeInventory::new(2, 1, 1, 1).unwrap();
        assert!(matches!(
            fit(&[], &[], &schema, inv, &FitConfig::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn point_mass_binary_mle_is_the_logit_of_the_rate() {
        // one event type, one annotator with a fixed zero intercept
        let schema = default_schema();
        let inv = TypeInventory::new(1, 1, 1, 1).unwrap();
        let docs = vec![
            one_pred_doc("d0", &[true, true, true, false]),
            one_pred_doc("d1", &[true, false, true, true]),
        ];
        let c = CompiledCorpus::new(docs, &schema, ObsIndex::new(), false).unwrap();
        let mut params = ModelParams::init(&schema, inv, &[], 0);
        let cfg = FitConfig {
            m_steps: 3000,
            adam: AdamConfig {
                step_size: 0.05,
                ..AdamConfig::default()
            },
            learn_rho: false,
            ..FitConfig::default()
        };
        let e = e_step(&c, &params, &cfg).unwrap();
        params = m_step_from_stats(&c.index, &e.stats, &params, &cfg).unwrap();
        let mu = params.property("telic").unwrap().mu[0][0];
        assert!((mu - 3f64.ln()).abs() < 1e-3, "{mu}");
    }

    #[test]
    fn single_event_type_gives_unit_marginals() {
        let schema = default_schema();
        let out = crate::synth::sample_corpus(
            &schema,
            &crate::synth::SynthConfig {
                documents: 4,
                ..Default::default()
            },
        )
        .unwrap();
        let docs = ridit_score_corpus(out.corpus, &schema).unwrap();
        let inv = TypeInventory::new(1, 2, 2, 2).unwrap();
        let cfg = FitConfig {
            max_em_iters: 2,
            m_steps: 20,
            ..FitConfig::default()
        };
        let r = fit(&docs, &[], &schema, inv, &cfg).unwrap();
        for p in &r.posteriors {
            for v in p
                .variables
                .iter()
                .filter(|v| v.classification == Classification::Event)
            {
                assert_eq!(v.probs, vec![1.0]);
            }
        }
        assert_eq!(r.train_evidence.len(), r.dev_evidence.len());
    }
}
