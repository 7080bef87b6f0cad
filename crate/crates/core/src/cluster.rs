//! Data-driven starting points for EM.
//!
//! Every annotated element is summarized by its per-property empirical
//! outcome distribution (pooled over annotators); elements of each
//! classification are clustered by k-means with k-means++ seeding, and the
//! likelihood parameters are fitted once to the resulting hard assignments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::Classification;
use crate::error::Result;
use crate::learning::{optimize_likelihoods, FitConfig};
use crate::observe::CompiledCorpus;
use crate::params::ModelParams;

/// Seeded k-means++ starts tried per classification.
const KMEANS_STARTS: usize = 10;
const KMEANS_ITERS: usize = 100;

/// Result of k-means on row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(point, m)))
        .fold((0, f64::INFINITY), |b, x| if x.1 < b.1 { x } else { b })
}

fn kmeans_once(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> KMeans {
    let n = points.len();
    let mut centroids = vec![points[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    let mut assignments = vec![usize::MAX; n];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for (a, p) in assignments.iter_mut().zip(points) {
            let c = nearest(p, &centroids).0;
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (&a, p) in assignments.iter().zip(points) {
            sizes[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            // an emptied cluster keeps its old centroid
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
    }
    let inertia = assignments
        .iter()
        .zip(points)
        .map(|(&a, p)| sq_dist(p, &centroids[a]))
        .sum();
    KMeans {
        assignments,
        centroids,
        inertia,
    }
}

/// Best of several seeded k-means++ runs (lowest within-cluster sum of
/// squares). Returns `None` for an empty point set.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Option<KMeans> {
    if points.is_empty() || k == 0 {
        return None;
    }
    let mut best: Option<KMeans> = None;
    for s in 0..KMEANS_STARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64 + 1);
        let run = kmeans_once(points, k, &mut rng);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    best
}

/// Replaces the likelihood parameters of `params` (keeping priors) with a
/// fit to k-means assignments of the elements in `corpus`, optionally for
/// one classification only.
pub fn clustered_init(
    corpus: &CompiledCorpus,
    params: &mut ModelParams,
    config: &FitConfig,
    only: Option<Classification>,
) -> Result<()> {
    let index = &corpus.index;
    // feature offset of every (property, outcome)
    let mut offsets = Vec::with_capacity(params.properties.len());
    let mut dims = [0usize; 4];
    for p in &params.properties {
        let c = p.classification as usize;
        offsets.push(dims[c]);
        dims[c] += p.model.outcome_space();
    }
    // per classification: element keys and raw outcome sums
    let mut elements: [Vec<(usize, &str)>; 4] = Default::default();
    let mut sums: [Vec<Vec<f64>>; 4] = Default::default();
    for (d, obs) in corpus.observations.iter().enumerate() {
        for (id, keys) in &obs.elements {
            let Some(first) = keys.first() else { continue };
            let c =
                params.properties[index.keys[first.key as usize].property].classification as usize;
            let mut row = vec![0.0; dims[c]];
            for wk in keys {
                let key = index.keys[wk.key as usize];
                row[offsets[key.property] + key.outcome] += 1.0;
            }
            elements[c].push((d, id.as_str()));
            sums[c].push(row);
        }
    }

    let mut counts: Vec<Vec<f64>> = index
        .keys
        .iter()
        .map(|k| {
            vec![
                0.0;
                params
                    .inventory
                    .count(params.properties[k.property].classification)
            ]
        })
        .collect();
    for c in Classification::ALL {
        let ci = c as usize;
        let rows = &mut sums[ci];
        if rows.is_empty() || only.is_some_and(|o| o != c) {
            continue;
        }
        // normalize each property block; missing blocks take the column mean
        let mut present = vec![vec![false; params.properties.len()]; rows.len()];
        for (r, row) in rows.iter_mut().enumerate() {
            for (p, prop) in params.properties.iter().enumerate() {
                if prop.classification != c {
                    continue;
                }
                let block = &mut row[offsets[p]..offsets[p] + prop.model.outcome_space()];
                let total: f64 = block.iter().sum();
                if total > 0.0 {
                    block.iter_mut().for_each(|x| *x /= total);
                    present[r][p] = true;
                }
            }
        }
        for (p, prop) in params.properties.iter().enumerate() {
            if prop.classification != c {
                continue;
            }
            let width = prop.model.outcome_space();
            let seen: Vec<usize> = (0..rows.len()).filter(|&r| present[r][p]).collect();
            if seen.is_empty() || seen.len() == rows.len() {
                continue;
            }
            let mut mean = vec![0.0; width];
            for &r in &seen {
                for (m, x) in mean
                    .iter_mut()
                    .zip(&rows[r][offsets[p]..offsets[p] + width])
                {
                    *m += x / seen.len() as f64;
                }
            }
            for (r, row) in rows.iter_mut().enumerate() {
                if !present[r][p] {
                    row[offsets[p]..offsets[p] + width].copy_from_slice(&mean);
                }
            }
        }
        let k = params.inventory.count(c);
        let km = kmeans(rows, k, config.seed.wrapping_add(ci as u64)).expect("non-empty");
        let lookup: std::collections::HashMap<(usize, &str), usize> = elements[ci]
            .iter()
            .copied()
            .zip(km.assignments.iter().copied())
            .collect();
        for (d, obs) in corpus.observations.iter().enumerate() {
            for (id, keys) in &obs.elements {
                let Some(&t) = lookup.get(&(d, id.as_str())) else {
                    continue;
                };
                for wk in keys {
                    counts[wk.key as usize][t] += wk.weight;
                }
            }
        }
    }
    optimize_likelihoods(index, &counts, params, config, only)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kmeans_separates_two_blobs() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let e = i as f64 * 0.01;
            pts.push(vec![e, 0.0]);
            pts.push(vec![5.0 + e, 5.0]);
        }
        let km = kmeans(&pts, 2, 3).unwrap();
        for pair in km.assignments.chunks(2) {
            assert_ne!(pair[0], pair[1]);
        }
        assert_eq!(
            km.assignments
                .iter()
                .step_by(2)
                .collect::<std::collections::HashSet<_>>()
                .len(),
            1
        );
        // each blob: sum over i < 20 of (0.01 i - 0.095)^2 = 0.0665
        assert!((km.inertia - 0.133).abs() < 1e-9, "{}", km.inertia);
    }

    #[test]
    fn kmeans_is_deterministic_and_handles_small_inputs() {
        let pts = vec![vec![1.0], vec![1.0]];
        let a = kmeans(&pts, 3, 0).unwrap();
        assert_eq!(a, kmeans(&pts, 3, 0).unwrap());
        assert_eq!(a.inertia, 0.0);
        assert!(kmeans(&[], 2, 0).is_none());
    }
}
