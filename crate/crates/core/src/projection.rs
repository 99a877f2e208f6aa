//! Deterministic 2-D projection of embeddings (principal components) and a
//! cosine silhouette score for cluster separation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmbeddingVector, ReferencePoint, SiteRecord, Year};
use crate::vector::{dot, mean_vector, normalized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionModel {
    pub mean: EmbeddingVector,
    /// Two orthonormal directions.
    pub components: [Vec<f64>; 2],
    /// Variance along each component, non-increasing.
    pub explained_variance: [f64; 2],
    /// Trace of the covariance matrix.
    pub total_variance: f64,
}

impl ProjectionModel {
    pub fn explained_variance_ratio(&self) -> [f64; 2] {
        self.explained_variance.map(|v| v / self.total_variance)
    }

    /// `((e - mean) . c1, (e - mean) . c2)`.
    pub fn project(&self, e: &EmbeddingVector) -> Result<(f64, f64)> {
        if e.dim() != self.mean.dim() {
            return Err(Error::WrongDimension {
                expected: self.mean.dim(),
                found: e.dim(),
            });
        }
        let centered: Vec<f64> = e
            .as_slice()
            .iter()
            .zip(self.mean.as_slice())
            .map(|(x, m)| x - m)
            .collect();
        Ok((
            dot(&centered, &self.components[0]),
            dot(&centered, &self.components[1]),
        ))
    }
}

pub fn project(model: &ProjectionModel, e: &EmbeddingVector) -> Result<(f64, f64)> {
    model.project(e)
}

/// Flips `v` so its largest-magnitude entry (first on ties) is positive.
fn fix_sign(v: &mut [f64]) {
    let mut idx = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[idx].abs() {
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Top-two principal directions of the centred data.
pub fn fit_projection(embeddings: &[EmbeddingVector]) -> Result<ProjectionModel> {
    if embeddings.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: embeddings.len(),
        });
    }
    let dim = embeddings[0].dim();
    if let Some(bad) = embeddings.iter().find(|e| e.dim() != dim) {
        return Err(Error::WrongDimension {
            expected: dim,
            found: bad.dim(),
        });
    }
    if embeddings.iter().all(|e| e == &embeddings[0]) {
        return Err(Error::DegenerateData);
    }
    if dim < 2 {
        return Err(Error::InvalidConfig(
            "projection needs at least two dimensions".into(),
        ));
    }
    let n = embeddings.len();
    let mean = mean_vector(embeddings.iter().map(|e| e.as_slice()), dim).unwrap();
    let centered = DMatrix::from_fn(n, dim, |i, j| embeddings[i].as_slice()[j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let total_variance = cov.trace();
    if total_variance <= 0.0 {
        return Err(Error::DegenerateData);
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let component = |k: usize| {
        let mut v: Vec<f64> = eig.eigenvectors.column(order[k]).iter().copied().collect();
        fix_sign(&mut v);
        v
    };
    let variance = |k: usize| eig.eigenvalues[order[k]].max(0.0);

    Ok(ProjectionModel {
        mean: EmbeddingVector::new(mean, dim)?,
        components: [component(0), component(1)],
        explained_variance: [variance(0), variance(1)],
        total_variance,
    })
}

/// Anything with an id and an annual embedding series.
pub trait EmbeddingSeries {
    fn series_id(&self) -> &str;
    fn series(&self) -> &BTreeMap<Year, EmbeddingVector>;
}

impl EmbeddingSeries for ReferencePoint {
    fn series_id(&self) -> &str {
        &self.point_id
    }

    fn series(&self) -> &BTreeMap<Year, EmbeddingVector> {
        &self.embeddings
    }
}

impl EmbeddingSeries for SiteRecord {
    fn series_id(&self) -> &str {
        &self.site_id
    }

    fn series(&self) -> &BTreeMap<Year, EmbeddingVector> {
        &self.embeddings
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathRow {
    pub id: String,
    pub year: Year,
    pub x: f64,
    pub y: f64,
}

/// Projected coordinates for every year of every item, sorted by `(id, year)`.
pub fn trajectory_paths_2d<T: EmbeddingSeries + Sync>(
    items: &[T],
    model: &ProjectionModel,
) -> Result<Vec<PathRow>> {
    let mut rows = items
        .par_iter()
        .map(|item| {
            item.series()
                .iter()
                .map(|(&year, e)| {
                    let (x, y) = model.project(e)?;
                    Ok(PathRow {
                        id: item.series_id().to_string(),
                        year,
                        x,
                        y,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    rows.sort_by(|a, b| a.id.cmp(&b.id).then(a.year.cmp(&b.year)));
    Ok(rows)
}

/// Mean silhouette coefficient with cosine distance.
///
/// Points alone in their cluster score 0.
pub fn silhouette_score<L: Ord + Clone + Sync>(
    embeddings: &[EmbeddingVector],
    labels: &[L],
) -> Result<f64> {
    if embeddings.len() != labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} embeddings but {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let mut names: Vec<L> = labels.to_vec();
    names.sort();
    names.dedup();
    if names.len() < 2 {
        return Err(Error::SingleCluster);
    }
    let cluster: Vec<usize> = labels
        .iter()
        .map(|l| names.binary_search(l).unwrap())
        .collect();
    let mut sizes = vec![0usize; names.len()];
    for &c in &cluster {
        sizes[c] += 1;
    }
    let units = embeddings
        .iter()
        .map(|e| normalized(e.as_slice()))
        .collect::<Result<Vec<_>>>()?;

    let scores: Vec<f64> = (0..units.len())
        .into_par_iter()
        .map(|i| {
            let own = cluster[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; names.len()];
            for (j, u) in units.iter().enumerate() {
                if j != i {
                    sums[cluster[j]] += 1.0 - dot(&units[i], u).clamp(-1.0, 1.0);
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..names.len())
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
