//! Annotation likelihood families with annotator random intercepts.
//!
//! Every family is a mixed model: a per-type location `mu` plus a
//! per-annotator offset `rho`. Binary responses use a logistic link,
//! categorical responses a softmax, ordinal responses a cumulative logit with
//! annotator-specific cutpoints, and temporal tuples three categorical lock
//! distributions. Any family can be wrapped in a hurdle whose Bernoulli gate
//! decides whether the property applies at all.
//!
//! [`PropertyModel`] exposes all families through one flat parameter layout
//! (`mu`, `shared`, `rho`) with discrete outcome codes, which is what the
//! factor graph and the M-step consume.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{has_free_pair, FreeOrder, Lock, ResponseType, TemporalTuple};
use crate::error::{Error, Result};

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 30.0;

#[inline]
pub fn clamp_logit(x: f64) -> f64 {
    x.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

/// Derivative of [`clamp_logit`]: one inside the clamp range, zero outside.
#[inline]
fn clamp_slope(x: f64) -> f64 {
    if (-LOGIT_CLAMP..=LOGIT_CLAMP).contains(&x) {
        1.0
    } else {
        0.0
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    let x = clamp_logit(x);
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))` on the clamped logit.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    let x = clamp_logit(x);
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-softmax of clamped logits, written into `out`.
fn log_softmax_into(logits: impl Iterator<Item = f64>, out: &mut Vec<f64>) {
    out.clear();
    out.extend(logits.map(clamp_logit));
    let lse = logsumexp(out);
    for v in out.iter_mut() {
        *v -= lse;
    }
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(logits.len());
    log_softmax_into(logits.iter().copied(), &mut out);
    out
}

// ---------------------------------------------------------------------------
// Scalar families

/// `log Bern(x | logit^-1(mu + rho))`.
pub fn binary_loglik(mu: f64, rho: f64, x: bool) -> f64 {
    let z = mu + rho;
    if x {
        log_sigmoid(z)
    } else {
        log_sigmoid(-z)
    }
}

/// Derivative of [`binary_loglik`] with respect to `mu` (equal to the
/// derivative with respect to `rho`).
pub fn binary_grad(mu: f64, rho: f64, x: bool) -> f64 {
    let z = mu + rho;
    let target = if x { 1.0 } else { 0.0 };
    (target - sigmoid(z)) * clamp_slope(z)
}

fn check_same_len(mu: &[f64], rho: &[f64], x: usize) -> Result<()> {
    if mu.len() != rho.len() {
        return Err(Error::Shape(format!(
            "mu has {} entries but rho has {}",
            mu.len(),
            rho.len()
        )));
    }
    if mu.len() < 2 {
        return Err(Error::Shape(
            "categorical needs at least 2 categories".into(),
        ));
    }
    if x >= mu.len() {
        return Err(Error::Shape(format!(
            "category {x} out of range for {} categories",
            mu.len()
        )));
    }
    Ok(())
}

/// `log softmax(mu + rho)[x]`.
pub fn categorical_loglik(mu: &[f64], rho: &[f64], x: usize) -> Result<f64> {
    check_same_len(mu, rho, x)?;
    let mut ls = Vec::with_capacity(mu.len());
    log_softmax_into(mu.iter().zip(rho).map(|(m, r)| m + r), &mut ls);
    Ok(ls[x])
}

/// Gradient of [`categorical_loglik`] with respect to `mu` (equal to the
/// gradient with respect to `rho`): indicator minus softmax.
pub fn categorical_grad(mu: &[f64], rho: &[f64], x: usize) -> Result<Vec<f64>> {
    check_same_len(mu, rho, x)?;
    let mut ls = Vec::with_capacity(mu.len());
    log_softmax_into(mu.iter().zip(rho).map(|(m, r)| m + r), &mut ls);
    Ok(ls
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let ind = if i == x { 1.0 } else { 0.0 };
            (ind - l.exp()) * clamp_slope(mu[i] + rho[i])
        })
        .collect())
}

fn check_cutpoints(cutpoints: &[f64], level: u32) -> Result<()> {
    if cutpoints.is_empty() {
        return Err(Error::Parameter(
            "ordinal model needs at least one cutpoint".into(),
        ));
    }
    if cutpoints.windows(2).any(|w| !(w[0] < w[1])) || cutpoints.iter().any(|c| !c.is_finite()) {
        return Err(Error::Parameter(format!(
            "cutpoints must be finite and strictly increasing: {cutpoints:?}"
        )));
    }
    let levels = cutpoints.len() as u32 + 1;
    if level < 1 || level > levels {
        return Err(Error::Parameter(format!(
            "level {level} outside 1..={levels}"
        )));
    }
    Ok(())
}

/// Log-probability and its partial derivatives for one ordinal level under
/// `P(x <= j) = logit^-1(c_j - mu)`. Returns `(value, d/d upper, d/d lower)`
/// where upper and lower are the two cutpoint logits bracketing the level.
fn ordinal_terms(mu: f64, cutpoints: &[f64], level: u32) -> (f64, f64, f64) {
    let j = level as usize;
    let levels = cutpoints.len() + 1;
    let upper = (j < levels).then(|| cutpoints[j - 1] - mu);
    let lower = (j > 1).then(|| cutpoints[j - 2] - mu);
    match (upper, lower) {
        (Some(a), None) => (log_sigmoid(a), (1.0 - sigmoid(a)) * clamp_slope(a), 0.0),
        (None, Some(b)) => (log_sigmoid(-b), 0.0, -sigmoid(b) * clamp_slope(b)),
        (Some(a), Some(b)) => {
            // sigma(a) - sigma(b) = sigma(a) * (1 - sigma(b)) * (1 - e^(b - a)).
            // Only the sigmoid factors are clamped; the gap term uses the raw
            // difference, so a level between two far-out cutpoints keeps a
            // small positive probability.
            let (ca, cb) = (clamp_logit(a), clamp_logit(b));
            let gap = (b - a).exp();
            let one_minus = -(b - a).exp_m1();
            let value = log_sigmoid(ca) + log_sigmoid(-cb) + one_minus.ln();
            let (sa, sb) = (sigmoid(ca), sigmoid(cb));
            let g = gap / one_minus;
            let da = (1.0 - sa) * clamp_slope(a) + g;
            let db = -sb * clamp_slope(b) - g;
            (value, da, db)
        }
        (None, None) => (0.0, 0.0, 0.0),
    }
}

/// Log-probability of ordinal `level` (1-based) given location `mu` and an
/// annotator's strictly increasing cutpoints.
pub fn ordinal_loglik(mu: f64, cutpoints: &[f64], level: u32) -> Result<f64> {
    check_cutpoints(cutpoints, level)?;
    let (v, _, _) = ordinal_terms(mu, cutpoints, level);
    if !(v.is_finite()) {
        return Err(Error::Numerical(format!(
            "ordinal probability underflow at level {level}"
        )));
    }
    Ok(v)
}

/// Gradient of [`ordinal_loglik`]: derivative with respect to `mu` and with
/// respect to each cutpoint.
pub fn ordinal_grad(mu: f64, cutpoints: &[f64], level: u32) -> Result<(f64, Vec<f64>)> {
    check_cutpoints(cutpoints, level)?;
    let (_, da, db) = ordinal_terms(mu, cutpoints, level);
    let mut gc = vec![0.0; cutpoints.len()];
    let j = level as usize;
    if j < cutpoints.len() + 1 {
        gc[j - 1] += da;
    }
    if j > 1 {
        gc[j - 2] += db;
    }
    Ok((-(da + db), gc))
}

/// Annotator cutpoints from the shared log-gaps and the annotator's
/// unconstrained offsets. `rho[0]` shifts all cutpoints; `rho[k + 1]` adds to
/// log-gap `k`. With zero offsets the cutpoints have mean zero.
pub fn ordinal_cutpoints(log_gaps: &[f64], rho: &[f64]) -> Vec<f64> {
    debug_assert_eq!(rho.len(), log_gaps.len() + 1);
    let n = rho.len();
    let mut cuts = Vec::with_capacity(n);
    let mut b = 0.0;
    cuts.push(0.0);
    for (k, g) in log_gaps.iter().enumerate() {
        b += (g + rho[k + 1]).exp();
        cuts.push(b);
    }
    let mean = cuts.iter().sum::<f64>() / n as f64;
    for c in &mut cuts {
        *c += rho[0] - mean;
    }
    cuts
}

/// Back-propagates a cutpoint gradient to the log-gaps and annotator
/// offsets of [`ordinal_cutpoints`]. Both outputs are accumulated.
fn ordinal_cutpoints_backward(
    log_gaps: &[f64],
    rho: &[f64],
    grad_cuts: &[f64],
    grad_gaps: &mut [f64],
    grad_rho: &mut [f64],
) {
    let n = grad_cuts.len();
    grad_rho[0] += grad_cuts.iter().sum::<f64>();
    let total: f64 = grad_cuts.iter().sum();
    // d cut_i / d e_k = [k < i] - (n - 1 - k) / n, with e_k the k-th gap
    let mut tail = total;
    for k in 0..log_gaps.len() {
        tail -= grad_cuts[k];
        let d_gap = tail - total * (n - 1 - k) as f64 / n as f64;
        let e = (log_gaps[k] + rho[k + 1]).exp();
        grad_gaps[k] += d_gap * e;
        grad_rho[k + 1] += d_gap * e;
    }
}

// ---------------------------------------------------------------------------
// Hurdle and temporal wrappers

/// Observation for a conditionally revealed property.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HurdleOutcome<T> {
    Absent,
    Present(T),
}

/// Gate parameters for one annotator together with the base log-likelihood of
/// a present value. `absent -> log(1 - g)`, `present(v) -> log g + base(v)`.
pub fn hurdle_loglik(gate_mu: f64, gate_rho: f64, outcome: HurdleOutcome<f64>) -> f64 {
    let z = gate_mu + gate_rho;
    match outcome {
        HurdleOutcome::Absent => log_sigmoid(-z),
        HurdleOutcome::Present(base) => log_sigmoid(z) + base,
    }
}

/// Lock and free-order logits for one relation type, with per-annotator
/// offsets for each of the three distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalLockParams {
    pub mu_lock_start: [f64; 3],
    pub mu_lock_end: [f64; 3],
    pub mu_free: [f64; 3],
    pub rho: BTreeMap<String, [f64; 9]>,
}

impl TemporalLockParams {
    fn flat_mu(&self) -> [f64; 9] {
        let mut m = [0.0; 9];
        m[..3].copy_from_slice(&self.mu_lock_start);
        m[3..6].copy_from_slice(&self.mu_lock_end);
        m[6..].copy_from_slice(&self.mu_free);
        m
    }
}

/// Log-likelihood of a normalized temporal tuple: lock at the start, lock at
/// the end, and the free-point order when one event's start and the other's
/// end are both interior. Unknown annotators get zero offsets.
pub fn temporal_loglik(
    params: &TemporalLockParams,
    annotator: &str,
    obs: &TemporalTuple,
) -> Result<f64> {
    if !obs.is_normalized() {
        return Err(Error::Argument(format!(
            "temporal tuple {:?} is not normalized",
            obs.values()
        )));
    }
    let mu = params.flat_mu();
    let rho = params.rho.get(annotator).copied().unwrap_or([0.0; 9]);
    let outcome = temporal_outcome(obs.lock_start, obs.lock_end, obs.free_order);
    Ok(Family::Temporal.loglik(&mu, &[], &rho, outcome))
}

// ---------------------------------------------------------------------------
// Generic families over discrete outcome codes

/// Outcome code of a temporal observation: `lock_start * 12 + lock_end * 4 +
/// order` where `order` is 0 when no free pair exists, else 1 + the order
/// index.
pub fn temporal_outcome(lock_start: Lock, lock_end: Lock, free: Option<FreeOrder>) -> usize {
    lock_start.index() * 12 + lock_end.index() * 4 + free.map_or(0, |f| 1 + f.index())
}

pub const TEMPORAL_OUTCOMES: usize = 36;

/// Every reachable temporal outcome code.
pub fn temporal_outcomes() -> Vec<usize> {
    let mut out = Vec::new();
    for ls in Lock::ALL {
        for le in Lock::ALL {
            if has_free_pair(ls, le) {
                for f in FreeOrder::ALL {
                    out.push(temporal_outcome(ls, le, Some(f)));
                }
            } else {
                out.push(temporal_outcome(ls, le, None));
            }
        }
    }
    out
}

/// Base response family. Parameter dimensions per family:
///
/// | family        | mu | shared | rho   |
/// |---------------|----|--------|-------|
/// | binary        | 1  | 0      | 1     |
/// | categorical k | k  | 0      | k     |
/// | ordinal J     | 1  | J - 2  | J - 1 |
/// | temporal      | 9  | 0      | 9     |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Binary,
    Categorical { k: usize },
    Ordinal { levels: usize },
    Temporal,
}

impl From<ResponseType> for Family {
    fn from(r: ResponseType) -> Self {
        match r {
            ResponseType::Binary => Family::Binary,
            ResponseType::Categorical { k } => Family::Categorical { k: k as usize },
            ResponseType::Ordinal { levels } => Family::Ordinal {
                levels: levels as usize,
            },
            ResponseType::TemporalTuple => Family::Temporal,
        }
    }
}

impl Family {
    pub fn mu_dim(self) -> usize {
        match self {
            Family::Binary => 1,
            Family::Categorical { k } => k,
            Family::Ordinal { .. } => 1,
            Family::Temporal => 9,
        }
    }

    pub fn shared_dim(self) -> usize {
        match self {
            Family::Ordinal { levels } => levels - 2,
            _ => 0,
        }
    }

    pub fn rho_dim(self) -> usize {
        match self {
            Family::Binary => 1,
            Family::Categorical { k } => k,
            Family::Ordinal { levels } => levels - 1,
            Family::Temporal => 9,
        }
    }

    /// Size of the outcome code space (some codes may be unreachable).
    pub fn outcome_space(self) -> usize {
        match self {
            Family::Binary => 2,
            Family::Categorical { k } => k,
            Family::Ordinal { levels } => levels,
            Family::Temporal => TEMPORAL_OUTCOMES,
        }
    }

    pub fn outcomes(self) -> Vec<usize> {
        match self {
            Family::Temporal => temporal_outcomes(),
            f => (0..f.outcome_space()).collect(),
        }
    }

    pub fn loglik(self, mu: &[f64], shared: &[f64], rho: &[f64], outcome: usize) -> f64 {
        self.eval(mu, shared, rho, outcome, None)
    }

    /// Log-likelihood of `outcome`; when `grads` is given, `scale` times the
    /// gradient is added into `(mu, shared, rho)` gradient buffers.
    pub fn eval(
        self,
        mu: &[f64],
        shared: &[f64],
        rho: &[f64],
        outcome: usize,
        grads: Option<(f64, &mut [f64], &mut [f64], &mut [f64])>,
    ) -> f64 {
        match self {
            Family::Binary => {
                let x = outcome == 1;
                let v = binary_loglik(mu[0], rho[0], x);
                if let Some((s, gm, _, gr)) = grads {
                    let d = s * binary_grad(mu[0], rho[0], x);
                    gm[0] += d;
                    gr[0] += d;
                }
                v
            }
            Family::Categorical { .. } => {
                categorical_block(mu, rho, outcome, grads.map(|(s, gm, _, gr)| (s, gm, gr)))
            }
            Family::Ordinal { .. } => {
                let cuts = ordinal_cutpoints(shared, rho);
                let (v, da, db) = ordinal_terms(mu[0], &cuts, outcome as u32 + 1);
                if let Some((s, gm, gs, gr)) = grads {
                    let mut gc = vec![0.0; cuts.len()];
                    let j = outcome + 1;
                    if j < cuts.len() + 1 {
                        gc[j - 1] += s * da;
                    }
                    if j > 1 {
                        gc[j - 2] += s * db;
                    }
                    gm[0] -= s * (da + db);
                    ordinal_cutpoints_backward(shared, rho, &gc, gs, gr);
                }
                v
            }
            Family::Temporal => {
                let ls = outcome / 12;
                let le = (outcome / 4) % 3;
                let fo = outcome % 4;
                match grads {
                    None => {
                        let mut v = categorical_block(&mu[..3], &rho[..3], ls, None)
                            + categorical_block(&mu[3..6], &rho[3..6], le, None);
                        if fo > 0 {
                            v += categorical_block(&mu[6..], &rho[6..], fo - 1, None);
                        }
                        v
                    }
                    Some((s, gm, _, gr)) => {
                        let (gm0, gm_rest) = gm.split_at_mut(3);
                        let (gm1, gm2) = gm_rest.split_at_mut(3);
                        let (gr0, gr_rest) = gr.split_at_mut(3);
                        let (gr1, gr2) = gr_rest.split_at_mut(3);
                        let mut v = categorical_block(&mu[..3], &rho[..3], ls, Some((s, gm0, gr0)))
                            + categorical_block(&mu[3..6], &rho[3..6], le, Some((s, gm1, gr1)));
                        if fo > 0 {
                            v +=
                                categorical_block(&mu[6..], &rho[6..], fo - 1, Some((s, gm2, gr2)));
                        }
                        v
                    }
                }
            }
        }
    }
}

fn categorical_block(
    mu: &[f64],
    rho: &[f64],
    x: usize,
    grads: Option<(f64, &mut [f64], &mut [f64])>,
) -> f64 {
    let k = mu.len();
    let mut z = [0.0f64; 16];
    let mut heap;
    let logits: &mut [f64] = if k <= 16 {
        &mut z[..k]
    } else {
        heap = vec![0.0; k];
        &mut heap
    };
    for i in 0..k {
        logits[i] = clamp_logit(mu[i] + rho[i]);
    }
    let lse = logsumexp(logits);
    let v = logits[x] - lse;
    if let Some((s, gm, gr)) = grads {
        for i in 0..k {
            let ind = if i == x { 1.0 } else { 0.0 };
            let d = s * (ind - (logits[i] - lse).exp()) * clamp_slope(mu[i] + rho[i]);
            gm[i] += d;
            gr[i] += d;
        }
    }
    v
}

/// Likelihood model of one property: a base family, optionally behind a
/// hurdle gate. Gated models prepend one gate entry to both `mu` and `rho`;
/// outcome 0 is "absent" and outcome `1 + b` is base outcome `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyModel {
    pub family: Family,
    pub gated: bool,
}

impl PropertyModel {
    pub fn new(family: Family, gated: bool) -> Self {
        Self { family, gated }
    }

    fn offset(&self) -> usize {
        usize::from(self.gated)
    }

    pub fn mu_dim(&self) -> usize {
        self.family.mu_dim() + self.offset()
    }

    pub fn shared_dim(&self) -> usize {
        self.family.shared_dim()
    }

    pub fn rho_dim(&self) -> usize {
        self.family.rho_dim() + self.offset()
    }

    pub fn outcome_space(&self) -> usize {
        self.family.outcome_space() + self.offset()
    }

    /// Every reachable outcome code.
    pub fn outcomes(&self) -> Vec<usize> {
        let base = self.family.outcomes();
        if self.gated {
            std::iter::once(0)
                .chain(base.into_iter().map(|b| b + 1))
                .collect()
        } else {
            base
        }
    }

    pub fn loglik(&self, mu: &[f64], shared: &[f64], rho: &[f64], outcome: usize) -> f64 {
        self.eval(mu, shared, rho, outcome, None)
    }

    pub fn eval(
        &self,
        mu: &[f64],
        shared: &[f64],
        rho: &[f64],
        outcome: usize,
        grads: Option<(f64, &mut [f64], &mut [f64], &mut [f64])>,
    ) -> f64 {
        if !self.gated {
            return self.family.eval(mu, shared, rho, outcome, grads);
        }
        let z = mu[0] + rho[0];
        match grads {
            None => {
                if outcome == 0 {
                    hurdle_loglik(mu[0], rho[0], HurdleOutcome::Absent)
                } else {
                    let base = self.family.loglik(&mu[1..], shared, &rho[1..], outcome - 1);
                    hurdle_loglik(mu[0], rho[0], HurdleOutcome::Present(base))
                }
            }
            Some((s, gm, gs, gr)) => {
                let present = outcome != 0;
                let d = s * binary_grad(mu[0], rho[0], present);
                gm[0] += d;
                gr[0] += d;
                if present {
                    let base = self.family.eval(
                        &mu[1..],
                        shared,
                        &rho[1..],
                        outcome - 1,
                        Some((s, &mut gm[1..], gs, &mut gr[1..])),
                    );
                    log_sigmoid(z) + base
                } else {
                    log_sigmoid(-z)
                }
            }
        }
    }

    /// `sum_(x, counts) sum_t counts[t] * loglik(mu_t, x)` for one annotator
    /// over types whose locations are stacked in `mu` (blocks of `mu_dim`),
    /// adding the weighted gradients. Ordinal cutpoints are built once.
    pub fn eval_outcomes(
        &self,
        mu: &[f64],
        shared: &[f64],
        rho: &[f64],
        outcomes: &[(usize, Vec<f64>)],
        mut grads: Option<(&mut [f64], &mut [f64], &mut [f64])>,
    ) -> f64 {
        let md = self.mu_dim();
        let mut value = 0.0;
        let Family::Ordinal { .. } = self.family else {
            for (outcome, counts) in outcomes {
                for (t, &c) in counts.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    let m = &mu[t * md..(t + 1) * md];
                    value += c * match grads.as_mut() {
                        None => self.eval(m, shared, rho, *outcome, None),
                        Some((gm, gs, gr)) => self.eval(
                            m,
                            shared,
                            rho,
                            *outcome,
                            Some((c, &mut gm[t * md..(t + 1) * md], &mut **gs, &mut **gr)),
                        ),
                    };
                }
            }
            return value;
        };
        let off = self.offset();
        let base_rho = &rho[off..];
        let cuts = ordinal_cutpoints(shared, base_rho);
        let mut gc = vec![0.0; cuts.len()];
        for (outcome, counts) in outcomes {
            let present = !self.gated || *outcome != 0;
            for (t, &c) in counts.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let m = &mu[t * md..(t + 1) * md];
                if self.gated {
                    value += c * log_sigmoid(if present {
                        m[0] + rho[0]
                    } else {
                        -(m[0] + rho[0])
                    });
                    if let Some((gm, _, gr)) = grads.as_mut() {
                        let d = c * binary_grad(m[0], rho[0], present);
                        gm[t * md] += d;
                        gr[0] += d;
                    }
                }
                if !present {
                    continue;
                }
                let level = *outcome - off + 1;
                let (v, da, db) = ordinal_terms(m[off], &cuts, level as u32);
                value += c * v;
                if let Some((gm, _, _)) = grads.as_mut() {
                    if level < cuts.len() + 1 {
                        gc[level - 1] += c * da;
                    }
                    if level > 1 {
                        gc[level - 2] += c * db;
                    }
                    gm[t * md + off] -= c * (da + db);
                }
            }
        }
        if let Some((_, gs, gr)) = grads {
            ordinal_cutpoints_backward(shared, base_rho, &gc, gs, &mut gr[off..]);
        }
        value
    }

    /// Value and gradients `(mu, shared, rho)` of the log-likelihood.
    pub fn loglik_grad(
        &self,
        mu: &[f64],
        shared: &[f64],
        rho: &[f64],
        outcome: usize,
    ) -> (f64, Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut gm = vec![0.0; self.mu_dim()];
        let mut gs = vec![0.0; self.shared_dim()];
        let mut gr = vec![0.0; self.rho_dim()];
        let v = self.eval(
            mu,
            shared,
            rho,
            outcome,
            Some((1.0, &mut gm, &mut gs, &mut gr)),
        );
        (v, gm, gs, gr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn binary_examples() {
        assert!(close(binary_loglik(0.0, 0.0, true), 0.5f64.ln(), 1e-15));
        // logit^-1(1.5) = 0.817574476...
        let p = 1.0 / (1.0 + (-1.5f64).exp());
        assert!(close(binary_loglik(1.0, 0.5, true), p.ln(), 1e-14));
        assert!(close(p, 0.81757, 1e-5));
        assert!(close(binary_grad(0.0, 0.0, true), 0.5, 1e-15));
    }

    #[test]
    fn binary_normalizes() {
        for (mu, rho) in [(0.3, -2.0), (5.0, 1.0), (-7.5, 0.25)] {
            let s = binary_loglik(mu, rho, true).exp() + binary_loglik(mu, rho, false).exp();
            assert!(close(s, 1.0, 1e-12));
        }
    }

    #[test]
    fn categorical_examples() {
        let z = [0.0; 4];
        for x in 0..4 {
            assert!(close(
                categorical_loglik(&z, &z, x).unwrap(),
                0.25f64.ln(),
                1e-15
            ));
        }
        let e2 = 2f64.exp();
        let v = categorical_loglik(&[2.0, 0.0], &[0.0, 0.0], 0).unwrap();
        assert!(close(v, (e2 / (e2 + 1.0)).ln(), 1e-14));
        assert!(close(v.exp(), 0.8808, 1e-4));
        let shifted = categorical_loglik(&[7.0, 5.0], &[0.0, 0.0], 0).unwrap();
        assert!(close(v, shifted, 1e-12));
        let g = categorical_grad(&z, &z, 2).unwrap();
        assert_eq!(g, vec![-0.25, -0.25, 0.75, -0.25]);
    }

    #[test]
    fn categorical_shape_errors() {
        assert!(matches!(
            categorical_loglik(&[0.0, 0.0], &[0.0], 0),
            Err(Error::Shape(_))
        ));
        assert!(categorical_loglik(&[0.0, 0.0], &[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn ordinal_examples() {
        assert!(close(
            ordinal_loglik(0.0, &[0.0], 1).unwrap().exp(),
            0.5,
            1e-15
        ));
        assert!(close(
            ordinal_loglik(0.0, &[0.0], 2).unwrap().exp(),
            0.5,
            1e-15
        ));
        // P(x <= 2) - P(x <= 1) = logit^-1(2 - 1) - logit^-1(0 - 1)
        let s = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expect = s(1.0) - s(-1.0);
        assert!(close(expect, 0.46211715726000974, 1e-15));
        let got = ordinal_loglik(1.0, &[0.0, 2.0], 2).unwrap().exp();
        assert!(close(got, expect, 1e-14));
    }

    #[test]
    fn interior_level_beyond_the_clamp_stays_finite() {
        // both cutpoints past +30: sigma factors clamp, the gap does not
        let cuts = [-1.0, 40.0, 42.0];
        let v = ordinal_loglik(0.0, &cuts, 3).unwrap();
        let want = log_sigmoid(30.0) + log_sigmoid(-30.0) + (-(-2.0f64).exp()).ln_1p();
        assert!(close(v, want, 1e-12), "{v} vs {want}");
        let (gm, gc) = ordinal_grad(0.0, &cuts, 3).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut up = cuts;
            let mut dn = cuts;
            up[i] += h;
            dn[i] -= h;
            let fd = (ordinal_loglik(0.0, &up, 3).unwrap() - ordinal_loglik(0.0, &dn, 3).unwrap())
                / (2.0 * h);
            assert!(close(gc[i], fd, 1e-6), "cut {i}: {} vs {fd}", gc[i]);
        }
        let fd = (ordinal_loglik(h, &cuts, 3).unwrap() - ordinal_loglik(-h, &cuts, 3).unwrap())
            / (2.0 * h);
        assert!(close(gm, fd, 1e-6));
    }

    #[test]
    fn ordinal_rejects_bad_cutpoints() {
        assert!(matches!(
            ordinal_loglik(0.0, &[1.0, 1.0], 1),
            Err(Error::Parameter(_))
        ));
        assert!(ordinal_loglik(0.0, &[1.0, 0.0], 1).is_err());
        assert!(ordinal_loglik(0.0, &[0.0, 1.0], 4).is_err());
    }

    #[test]
    fn ordinal_cutpoints_are_centered_and_increasing() {
        let gaps = [0.1, -0.5, 0.3];
        let cuts = ordinal_cutpoints(&gaps, &[0.0; 4]);
        assert!(close(cuts.iter().sum::<f64>(), 0.0, 1e-12));
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        let shifted = ordinal_cutpoints(&gaps, &[1.5, 0.0, 0.0, 0.0]);
        for (a, b) in cuts.iter().zip(&shifted) {
            assert!(close(b - a, 1.5, 1e-12));
        }
    }

    #[test]
    fn hurdle_examples() {
        assert!(close(
            hurdle_loglik(0.0, 0.0, HurdleOutcome::Absent),
            0.5f64.ln(),
            1e-15
        ));
        let base = binary_loglik(0.4, -0.1, true);
        let saturated = hurdle_loglik(1e6, 0.0, HurdleOutcome::Present(base));
        assert!(close(saturated, base, 1e-12));
    }

    #[test]
    fn temporal_uniform_examples() {
        let params = TemporalLockParams {
            mu_lock_start: [0.0; 3],
            mu_lock_end: [0.0; 3],
            mu_free: [0.0; 3],
            rho: BTreeMap::new(),
        };
        let third = (1.0f64 / 3.0).ln();
        let obs = crate::corpus::normalize_temporal([0.0, 0.5, 0.5, 1.0]).unwrap();
        assert!(close(
            temporal_loglik(&params, "a", &obs).unwrap(),
            3.0 * third,
            1e-12
        ));
        let both = crate::corpus::normalize_temporal([0.0, 0.0, 1.0, 1.0]).unwrap();
        assert!(close(
            temporal_loglik(&params, "a", &both).unwrap(),
            2.0 * third,
            1e-12
        ));
    }

    #[test]
    fn temporal_rejects_unnormalized() {
        let params = TemporalLockParams {
            mu_lock_start: [0.0; 3],
            mu_lock_end: [0.0; 3],
            mu_free: [0.0; 3],
            rho: BTreeMap::new(),
        };
        let mut obs = crate::corpus::normalize_temporal([0.0, 0.5, 0.5, 1.0]).unwrap();
        obs.start1 = 0.2;
        assert!(temporal_loglik(&params, "a", &obs).is_err());
    }

    #[test]
    fn temporal_outcome_space() {
        let outs = temporal_outcomes();
        // 2 free-pair lock combinations x 3 orders + 7 others
        assert_eq!(outs.len(), 13);
        assert!(outs.iter().all(|&o| o < TEMPORAL_OUTCOMES));
    }

    #[test]
    fn batched_types_match_single_evaluations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let families = [
            Family::Binary,
            Family::Categorical { k: 3 },
            Family::Ordinal { levels: 5 },
            Family::Temporal,
        ];
        for family in families {
            for gated in [false, true] {
                let m = PropertyModel::new(family, gated);
                let k = 3;
                let (md, sd, rd) = (m.mu_dim(), m.shared_dim(), m.rho_dim());
                let mut draw =
                    |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect() };
                let mu = draw(k * md);
                let shared = draw(sd);
                let rho = draw(rd);
                let counts = [0.7, 0.0, 2.5];
                let outcomes: Vec<(usize, Vec<f64>)> = m
                    .outcomes()
                    .into_iter()
                    .enumerate()
                    .map(|(i, x)| {
                        (
                            x,
                            counts.iter().map(|c| c * (1.0 + i as f64 * 0.1)).collect(),
                        )
                    })
                    .collect();
                let (mut gm, mut gs, mut gr) = (vec![0.0; k * md], vec![0.0; sd], vec![0.0; rd]);
                let v = m.eval_outcomes(
                    &mu,
                    &shared,
                    &rho,
                    &outcomes,
                    Some((&mut gm, &mut gs, &mut gr)),
                );
                let (mut em, mut es, mut er) = (vec![0.0; k * md], vec![0.0; sd], vec![0.0; rd]);
                let mut e = 0.0;
                for (outcome, counts) in &outcomes {
                    let outcome = *outcome;
                    for (t, &c) in counts.iter().enumerate() {
                        if c != 0.0 {
                            let g = &mut em[t * md..(t + 1) * md];
                            e += c * m.eval(
                                &mu[t * md..(t + 1) * md],
                                &shared,
                                &rho,
                                outcome,
                                Some((c, g, &mut es, &mut er)),
                            );
                        }
                    }
                }
                assert!(close(v, e, 1e-10), "{family:?} {gated}");
                assert!(close(
                    v,
                    m.eval_outcomes(&mu, &shared, &rho, &outcomes, None),
                    1e-10
                ));
                for (a, b) in gm
                    .iter()
                    .chain(&gs)
                    .chain(&gr)
                    .zip(em.iter().chain(&es).chain(&er))
                {
                    assert!(close(*a, *b, 1e-10), "{family:?} {gated}");
                }
            }
        }
    }
}
