//! Lloyd's K-means with k-means++ seeding, and the artery/vein labelling of
//! time-intensity curve clusters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Tic;
use crate::error::{CaveError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansParams {
    pub k: usize,
    pub max_iter: usize,
    /// Relative inertia decrease below which iteration stops early; 0 runs
    /// until the assignment is a fixed point.
    pub tol: f64,
    pub n_restarts: usize,
    pub seed: u64,
    /// Scale each curve to unit peak before clustering.
    pub normalize_tics: bool,
}

impl Default for KmeansParams {
    fn default() -> Self {
        KmeansParams {
            k: 2,
            max_iter: 100,
            tol: 0.0,
            n_restarts: 5,
            seed: 0,
            normalize_tics: false,
        }
    }
}

impl KmeansParams {
    pub fn validate(&self) -> Result<()> {
        if self.k != 2 {
            return Err(CaveError::Config(format!("artery/vein clustering needs k = 2, got {}", self.k)));
        }
        if self.max_iter < 1 || self.n_restarts < 1 {
            return Err(CaveError::Config("max_iter and n_restarts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KmeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after every update step.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[idx].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    centroids
}

fn update_centroids(points: &[Vec<f64>], assignments: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let k = centroids.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
    // re-seed empty clusters at the worst-fitted point
    for c in 0..k {
        if counts[c] == 0 {
            let far = points
                .iter()
                .zip(assignments)
                .map(|(p, &a)| sq_dist(p, &centroids[a]))
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i)
                .unwrap();
            centroids[c] = points[far].clone();
        }
    }
}

fn inertia(points: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points.iter().zip(assignments).map(|(p, &a)| sq_dist(p, &centroids[a])).sum()
}

/// One seeded Lloyd run.
pub fn lloyd(points: &[Vec<f64>], k: usize, max_iter: usize, tol: f64, rng: &mut ChaCha8Rng) -> KmeansFit {
    let mut centroids = plus_plus_init(points, k, rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        update_centroids(points, &assignments, &mut centroids);
        let current = inertia(points, &assignments, &centroids);
        history.push(current);
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
        let changed = next != assignments;
        assignments = next;
        if !changed {
            break;
        }
        if history.len() >= 2 {
            let prev = history[history.len() - 2];
            if tol > 0.0 && prev - current <= tol * prev {
                break;
            }
        }
    }
    let inertia = inertia(points, &assignments, &centroids);
    KmeansFit {
        assignments,
        centroids,
        inertia,
        history,
        iterations,
    }
}

/// Best of `n_restarts` Lloyd runs by inertia.
pub fn kmeans(points: &[Vec<f64>], k: usize, max_iter: usize, tol: f64, n_restarts: usize, seed: u64) -> KmeansFit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KmeansFit> = None;
    for _ in 0..n_restarts.max(1) {
        let fit = lloyd(points, k, max_iter, tol, &mut rng);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    best.unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvLabel {
    Artery,
    Vein,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TicClustering {
    pub labels: Vec<AvLabel>,
    pub fit: KmeansFit,
    /// Index of the cluster labelled artery.
    pub artery_cluster: usize,
    /// Time-to-peak (frame index) of each centroid.
    pub centroid_ttp: Vec<usize>,
    /// Set when all curves were identical; every pixel is labelled artery.
    pub degenerate: bool,
}

fn first_moment(c: &[f64]) -> f64 {
    let total: f64 = c.iter().map(|v| v.max(0.0)).sum();
    if total <= 0.0 {
        return f64::INFINITY;
    }
    c.iter().enumerate().map(|(t, v)| t as f64 * v.max(0.0)).sum::<f64>() / total
}

pub(crate) fn tic_features(tics: &[Tic], normalize: bool) -> Vec<Vec<f64>> {
    tics.iter()
        .map(|t| {
            let v: Vec<f64> = t.values.iter().map(|&x| x as f64).collect();
            if normalize {
                let m = v.iter().copied().fold(0.0, f64::max);
                if m > 0.0 {
                    return v.into_iter().map(|x| x / m).collect();
                }
            }
            v
        })
        .collect()
}

/// Cluster time-intensity curves into two groups; the cluster whose centroid
/// peaks earlier is labelled artery (ties broken by the centroid's temporal
/// centre of mass).
pub fn kmeans_tic(tics: &[Tic], params: &KmeansParams) -> Result<TicClustering> {
    params.validate()?;
    if tics.len() < 2 {
        return Err(CaveError::Validation(format!("need at least 2 curves, got {}", tics.len())));
    }
    let len = tics[0].values.len();
    if tics.iter().any(|t| t.values.len() != len) {
        return Err(CaveError::Validation("time-intensity curves differ in length".into()));
    }
    let points = tic_features(tics, params.normalize_tics);
    if points.iter().all(|p| p == &points[0]) {
        log::warn!("all {} time-intensity curves are identical; labelling every pixel artery", tics.len());
        return Ok(TicClustering {
            labels: vec![AvLabel::Artery; tics.len()],
            fit: KmeansFit {
                assignments: vec![0; tics.len()],
                centroids: vec![points[0].clone(), points[0].clone()],
                inertia: 0.0,
                history: vec![0.0],
                iterations: 0,
            },
            artery_cluster: 0,
            centroid_ttp: vec![0, 0],
            degenerate: true,
        });
    }
    let fit = kmeans(&points, params.k, params.max_iter, params.tol, params.n_restarts, params.seed);
    let ttp: Vec<usize> = fit
        .centroids
        .iter()
        .map(|c| crate::data::argmax(c.iter().map(|&v| v as f32)))
        .collect();
    let key = |c: usize| (ttp[c], first_moment(&fit.centroids[c]));
    let artery_cluster = if key(0).0 < key(1).0 || (key(0).0 == key(1).0 && key(0).1 <= key(1).1) {
        0
    } else {
        1
    };
    let labels = fit
        .assignments
        .iter()
        .map(|&a| if a == artery_cluster { AvLabel::Artery } else { AvLabel::Vein })
        .collect();
    Ok(TicClustering {
        labels,
        fit,
        artery_cluster,
        centroid_ttp: ttp,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn peaked(t_peak: usize, len: usize, loc: usize) -> Tic {
        Tic {
            values: Array1::from_shape_fn(len, |t| {
                let d = t as f32 - t_peak as f32;
                200.0 * (-d * d / 4.0).exp()
            }),
            location: (loc, 0),
        }
    }

    #[test]
    fn early_and_late_curves_split_perfectly() {
        let mut tics: Vec<Tic> = (0..100).map(|i| peaked(3, 15, i)).collect();
        tics.extend((100..200).map(|i| peaked(10, 15, i)));
        let out = kmeans_tic(&tics, &KmeansParams::default()).unwrap();
        assert!(!out.degenerate);
        assert!(out.labels[..100].iter().all(|&l| l == AvLabel::Artery));
        assert!(out.labels[100..].iter().all(|&l| l == AvLabel::Vein));
        assert!(out.centroid_ttp[out.artery_cluster] == 3);
    }

    #[test]
    fn two_distinct_curves_get_one_cluster_each() {
        let tics = vec![peaked(8, 12, 0), peaked(2, 12, 1)];
        let out = kmeans_tic(&tics, &KmeansParams::default()).unwrap();
        assert_eq!(out.labels, vec![AvLabel::Vein, AvLabel::Artery]);
    }

    #[test]
    fn identical_curves_are_degenerate() {
        let tics: Vec<Tic> = (0..5).map(|i| peaked(4, 10, i)).collect();
        let out = kmeans_tic(&tics, &KmeansParams::default()).unwrap();
        assert!(out.degenerate);
        assert!(out.labels.iter().all(|&l| l == AvLabel::Artery));
    }

    #[test]
    fn input_validation() {
        assert!(kmeans_tic(&[peaked(1, 5, 0)], &KmeansParams::default()).is_err());
        assert!(kmeans_tic(&[peaked(1, 5, 0), peaked(1, 6, 1)], &KmeansParams::default()).is_err());
        let p = KmeansParams { k: 3, ..Default::default() };
        assert!(kmeans_tic(&[peaked(1, 5, 0), peaked(3, 5, 1)], &p).is_err());
    }
}
