//! Model parameters: type priors, per-type property locations, annotator
//! random intercepts and their covariances. Serialized as a JSON checkpoint.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Classification, Schema};
use crate::error::{Error, Result};
use crate::likelihoods::{Family, PropertyModel};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Smallest eigenvalue allowed in an annotator covariance.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// Floor applied to prior probabilities so log-potentials stay finite.
pub const THETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeInventory {
    pub event: usize,
    pub entity: usize,
    pub role: usize,
    pub relation: usize,
}

impl TypeInventory {
    pub fn new(event: usize, entity: usize, role: usize, relation: usize) -> Result<Self> {
        let inv = Self {
            event,
            entity,
            role,
            relation,
        };
        if [event, entity, role, relation].contains(&0) {
            return Err(Error::Argument(format!(
                "type counts must be positive: {inv:?}"
            )));
        }
        Ok(inv)
    }

    pub fn count(&self, c: Classification) -> usize {
        match c {
            Classification::Event => self.event,
            Classification::Entity => self.entity,
            Classification::Role => self.role,
            Classification::Relation => self.relation,
        }
    }
}

/// Type priors. Conditional tables are flattened row-major with the
/// conditioned-on type indices first and the sampled type last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub theta_event: Vec<f64>,
    pub theta_entity: Vec<f64>,
    /// `[event][entity][role]`
    pub theta_role: Vec<f64>,
    /// `[event][event][relation]` for predicate-predicate pairs.
    pub theta_rel_event_event: Vec<f64>,
    /// `[event][entity][relation]` for predicate-argument pairs.
    pub theta_rel_event_entity: Vec<f64>,
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

impl PriorParams {
    pub fn uniform(inv: &TypeInventory) -> Self {
        let (ke, kn, kr, kq) = (inv.event, inv.entity, inv.role, inv.relation);
        Self {
            theta_event: uniform(ke),
            theta_entity: uniform(kn),
            theta_role: uniform(kr).repeat(ke * kn),
            theta_rel_event_event: uniform(kq).repeat(ke * ke),
            theta_rel_event_entity: uniform(kq).repeat(ke * kn),
        }
    }

    /// Checks shapes and that every conditional slice is a distribution.
    pub fn validate(&self, inv: &TypeInventory) -> Result<()> {
        let (ke, kn, kr, kq) = (inv.event, inv.entity, inv.role, inv.relation);
        let blocks: [(&str, &[f64], usize, usize); 5] = [
            ("theta_event", &self.theta_event, 1, ke),
            ("theta_entity", &self.theta_entity, 1, kn),
            ("theta_role", &self.theta_role, ke * kn, kr),
            (
                "theta_rel_event_event",
                &self.theta_rel_event_event,
                ke * ke,
                kq,
            ),
            (
                "theta_rel_event_entity",
                &self.theta_rel_event_entity,
                ke * kn,
                kq,
            ),
        ];
        for (name, table, rows, k) in blocks {
            if table.len() != rows * k {
                return Err(Error::Shape(format!(
                    "{name} has {} entries, expected {}",
                    table.len(),
                    rows * k
                )));
            }
            for row in table.chunks(k) {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Parameter(format!(
                        "{name} slice {row:?} is not a distribution"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Normalizes `counts` slice-wise into `table`, flooring entries at
/// [`THETA_FLOOR`]. Slices with no mass keep their previous values.
pub fn normalize_counts(counts: &[f64], k: usize, table: &mut [f64]) {
    for (row, out) in counts.chunks(k).zip(table.chunks_mut(k)) {
        let total: f64 = row.iter().sum();
        if !(total > 0.0) {
            continue;
        }
        let mut z = 0.0;
        for (o, c) in out.iter_mut().zip(row) {
            *o = (c / total).max(THETA_FLOOR);
            z += *o;
        }
        for o in out.iter_mut() {
            *o /= z;
        }
    }
}

/// Parameters of one property's likelihood across all types and annotators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyParams {
    pub name: String,
    pub classification: Classification,
    pub model: PropertyModel,
    /// `mu[type]`, each of length `model.mu_dim()`.
    pub mu: Vec<Vec<f64>>,
    /// Type-independent parameters (ordinal log-gaps).
    pub shared: Vec<f64>,
    /// Annotator random intercepts, each of length `model.rho_dim()`.
    pub rho: BTreeMap<String, Vec<f64>>,
    /// Covariance of the annotator-intercept prior, row-major
    /// `rho_dim x rho_dim`.
    pub sigma: Vec<f64>,
}

impl PropertyParams {
    pub fn rho_or_zero(&self, annotator: &str) -> Vec<f64> {
        self.rho
            .get(annotator)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.model.rho_dim()])
    }

    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        let d = self.model.rho_dim();
        DMatrix::from_row_slice(d, d, &self.sigma)
    }

    /// Precision matrix and log-normalizer `-0.5 log |2 pi Sigma|` of the
    /// annotator prior.
    pub fn prior_terms(&self) -> Result<(DMatrix<f64>, f64)> {
        let d = self.model.rho_dim();
        let sigma = self.sigma_matrix();
        let chol = sigma.clone().cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "annotator covariance of `{}` is not positive definite",
                self.name
            ))
        })?;
        let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let norm = -0.5 * (logdet + d as f64 * (2.0 * std::f64::consts::PI).ln());
        Ok((chol.inverse(), norm))
    }

    /// `sum_a log N(rho_a | 0, Sigma)`.
    pub fn rho_log_prior(&self) -> Result<f64> {
        let (precision, norm) = self.prior_terms()?;
        Ok(self
            .rho
            .values()
            .map(|r| {
                let v = DVector::from_column_slice(r);
                norm - 0.5 * (v.transpose() * &precision * &v)[(0, 0)]
            })
            .sum())
    }

    /// Maximizes the annotator prior over covariances with eigenvalues at
    /// least [`SIGMA_FLOOR`]: eigenvalues of the second-moment matrix of the
    /// current intercepts are clipped from below.
    pub fn update_sigma(&mut self) {
        self.update_sigma_with(None);
    }

    /// As [`update_sigma`](Self::update_sigma), adding `spread` (the summed
    /// posterior covariances of the intercepts) to the second moments.
    pub fn update_sigma_with(&mut self, spread: Option<&DMatrix<f64>>) {
        let d = self.model.rho_dim();
        let n = self.rho.len();
        let mut s = DMatrix::<f64>::zeros(d, d);
        if n > 0 {
            for r in self.rho.values() {
                let v = DVector::from_column_slice(r);
                s += &v * v.transpose();
            }
            if let Some(extra) = spread {
                s += extra;
            }
            s /= n as f64;
        }
        let eig = s.symmetric_eigen();
        let clipped = eig.eigenvalues.map(|l| l.max(SIGMA_FLOOR));
        let sigma =
            &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        // symmetrize to remove round-off asymmetry
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        self.sigma = sigma.transpose().as_slice().to_vec();
    }

    pub fn set_isotropic_sigma(&mut self, variance: f64) {
        let d = self.model.rho_dim();
        self.sigma = DMatrix::<f64>::identity(d, d)
            .scale(variance)
            .as_slice()
            .to_vec();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub version: u32,
    pub inventory: TypeInventory,
    pub priors: PriorParams,
    /// One entry per schema property, in schema order.
    pub properties: Vec<PropertyParams>,
}

impl ModelParams {
    /// Fresh parameters: uniform priors, zero intercepts, identity
    /// covariances, and `mu` drawn from `N(0, 0.5^2)`. Ordinal log-gaps start
    /// at zero, giving unit-spaced cutpoints.
    pub fn init(
        schema: &Schema,
        inventory: TypeInventory,
        annotators: &[String],
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.5).expect("valid normal");
        let properties = schema
            .properties()
            .iter()
            .map(|spec| {
                let model = PropertyModel::new(Family::from(spec.response), spec.gate.is_some());
                let k = inventory.count(spec.classification());
                let mu = (0..k)
                    .map(|_| {
                        (0..model.mu_dim())
                            .map(|_| normal.sample(&mut rng))
                            .collect()
                    })
                    .collect();
                let rho = annotators
                    .iter()
                    .map(|a| (a.clone(), vec![0.0; model.rho_dim()]))
                    .collect();
                let mut p = PropertyParams {
                    name: spec.name.clone(),
                    classification: spec.classification(),
                    model,
                    mu,
                    shared: vec![0.0; model.shared_dim()],
                    rho,
                    sigma: Vec::new(),
                };
                p.set_isotropic_sigma(1.0);
                p
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            inventory,
            priors: PriorParams::uniform(&inventory),
            properties,
        }
    }

    pub fn property(&self, name: &str) -> Option<&PropertyParams> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn property_mut(&mut self, name: &str) -> Option<&mut PropertyParams> {
        self.properties.iter_mut().find(|p| p.name == name)
    }

    /// Checks that the parameters line up with `schema` and are well formed.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        if self.properties.len() != schema.len() {
            return Err(Error::Schema(format!(
                "checkpoint has {} properties, schema has {}",
                self.properties.len(),
                schema.len()
            )));
        }
        self.priors.validate(&self.inventory)?;
        for (p, spec) in self.properties.iter().zip(schema.properties()) {
            let model = PropertyModel::new(Family::from(spec.response), spec.gate.is_some());
            if p.name != spec.name || p.model != model || p.classification != spec.classification()
            {
                return Err(Error::Schema(format!(
                    "checkpoint property `{}` does not match schema property `{}`",
                    p.name, spec.name
                )));
            }
            let k = self.inventory.count(p.classification);
            let d = model.rho_dim();
            let shapes_ok = p.mu.len() == k
                && p.mu.iter().all(|m| m.len() == model.mu_dim())
                && p.shared.len() == model.shared_dim()
                && p.rho.values().all(|r| r.len() == d)
                && p.sigma.len() == d * d;
            if !shapes_ok {
                return Err(Error::Shape(format!(
                    "parameters of `{}` have the wrong shape",
                    p.name
                )));
            }
            let all_finite = p.mu.iter().flatten().all(|v| v.is_finite())
                && p.shared.iter().all(|v| v.is_finite())
                && p.rho.values().flatten().all(|v| v.is_finite());
            if !all_finite {
                return Err(Error::Parameter(format!(
                    "non-finite parameter in `{}`",
                    p.name
                )));
            }
        }
        Ok(())
    }

    /// Sum of annotator-prior log densities over all properties.
    pub fn rho_log_prior(&self) -> Result<f64> {
        self.properties.iter().map(|p| p.rho_log_prior()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::default_schema;

    #[test]
    fn init_matches_schema_and_round_trips() {
        let schema = default_schema();
        let inv = TypeInventory::new(3, 2, 2, 2).unwrap();
        let params = ModelParams::init(&schema, inv, &["a".into(), "b".into()], 1);
        params.check_schema(&schema).unwrap();
        let back = ModelParams::from_json(&params.to_json()).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn zero_type_count_rejected() {
        assert!(TypeInventory::new(1, 0, 1, 1).is_err());
    }

    #[test]
    fn sigma_update_clips_eigenvalues() {
        let schema = default_schema();
        let inv = TypeInventory::new(1, 1, 1, 1).unwrap();
        let mut params = ModelParams::init(&schema, inv, &["a".into(), "b".into()], 1);
        let p = params.property_mut("telic").unwrap();
        p.rho.insert("a".into(), vec![0.5]);
        p.rho.insert("b".into(), vec![-0.5]);
        p.update_sigma();
        assert!((p.sigma[0] - 0.25).abs() < 1e-12);
        p.rho.insert("a".into(), vec![0.0]);
        p.rho.insert("b".into(), vec![0.0]);
        p.update_sigma();
        assert!((p.sigma[0] - SIGMA_FLOOR).abs() < 1e-15);
    }

    #[test]
    fn normalize_counts_keeps_empty_rows() {
        let mut table = vec![0.2, 0.8, 0.5, 0.5];
        normalize_counts(&[0.0, 0.0, 3.0, 1.0], 2, &mut table);
        assert_eq!(&table[..2], &[0.2, 0.8]);
        assert!((table[2] - 0.75).abs() < 1e-12);
    }
}
