//! Lloyd's k-means on 2-D coordinates with k-means++ seeding.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
    /// Sum of squared distances after the initial and every later
    /// assignment step.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap()
    }
}

fn sq_dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

fn plus_plus_init(points: &[[f64; 2]], k: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = rng_from(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap();
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[next];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Reassigns each point to its nearest centroid, keeping the current one
/// unless another is strictly closer. Returns the objective.
fn assign(points: &[[f64; 2]], centroids: &[[f64; 2]], assignment: &mut [usize]) -> f64 {
    let mut objective = 0.0;
    for (p, a) in points.iter().zip(assignment.iter_mut()) {
        let mut best = *a;
        let mut best_d = sq_dist(p, &centroids[best]);
        for (c, centroid) in centroids.iter().enumerate() {
            let d = sq_dist(p, centroid);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        *a = best;
        objective += best_d;
    }
    objective
}

/// Moves each empty cluster onto the point farthest from its own centroid.
/// Returns true if anything changed.
fn repair_empty(points: &[[f64; 2]], centroids: &mut [[f64; 2]], assignment: &mut [usize]) -> bool {
    let k = centroids.len();
    let mut repaired = false;
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return repaired;
        };
        let far = (0..points.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&i, &j| {
                sq_dist(&points[i], &centroids[assignment[i]])
                    .total_cmp(&sq_dist(&points[j], &centroids[assignment[j]]))
                    .then(j.cmp(&i))
            })
            .expect("n >= k leaves a cluster with two members");
        centroids[empty] = points[far];
        assignment[far] = empty;
        repaired = true;
    }
}

fn objective(points: &[[f64; 2]], centroids: &[[f64; 2]], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum()
}

pub fn kmeans(points: &[[f64; 2]], params: &KMeansParams) -> Result<KMeansResult> {
    let k = params.k;
    if k == 0 || points.len() < k {
        return Err(Error::TooFewPoints {
            needed: k.max(1),
            got: points.len(),
        });
    }
    let mut centroids = plus_plus_init(points, k, params.seed);
    let mut assignment = vec![0usize; points.len()];
    assign(points, &centroids, &mut assignment);
    repair_empty(points, &mut centroids, &mut assignment);
    let mut history = vec![objective(points, &centroids, &assignment)];

    let mut iterations = 0;
    while iterations < params.max_iter {
        iterations += 1;
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let n = counts[c] as f64;
            let updated = [sums[c][0] / n, sums[c][1] / n];
            shift = shift.max(sq_dist(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        assign(points, &centroids, &mut assignment);
        repair_empty(points, &mut centroids, &mut assignment);
        history.push(objective(points, &centroids, &assignment));
        if shift < params.tol {
            break;
        }
    }

    Ok(KMeansResult {
        centroids,
        assignment,
        objective_history: history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cluster_is_the_mean() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]];
        let r = kmeans(&pts, &KMeansParams::new(1, 3)).unwrap();
        assert!(r.assignment.iter().all(|&a| a == 0));
        assert!((r.centroids[0][0] - 1.0).abs() < 1e-12);
        assert!((r.centroids[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n() {
        let pts = [[0.0, 0.0], [5.0, 1.0], [-3.0, 2.0], [1.0, -4.0]];
        let r = kmeans(&pts, &KMeansParams::new(4, 11)).unwrap();
        assert_eq!(r.objective(), 0.0);
        let mut a = r.assignment.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn too_few_points() {
        let pts = [[0.0, 0.0]];
        assert!(matches!(
            kmeans(&pts, &KMeansParams::new(2, 0)),
            Err(Error::TooFewPoints { needed: 2, got: 1 })
        ));
        assert!(kmeans(&pts, &KMeansParams::new(0, 0)).is_err());
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let pts = [[1.0, 1.0]; 6];
        let r = kmeans(&pts, &KMeansParams::new(3, 5)).unwrap();
        let mut used = r.assignment.clone();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 3);
    }
}
