use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, KMeansParams};
use crate::error::Result;
use crate::model::SiteRecord;

/// Spatial fold of every site: its k-means cluster on `(lon, lat)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
    pub centroids: Vec<[f64; 2]>,
}

impl FoldAssignment {
    pub fn fold_of(&self, site_id: &str) -> Option<usize> {
        self.assignment.get(site_id).copied()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Clusters site centroids into `k` geographic folds. Folds can be
/// unbalanced; nothing is stratified.
pub fn spatial_kfold(sites: &[SiteRecord], k: usize, seed: u64) -> Result<FoldAssignment> {
    let mut ordered: Vec<&SiteRecord> = sites.iter().collect();
    ordered.sort_by(|a, b| a.site_id.cmp(&b.site_id));
    let coords: Vec<[f64; 2]> = ordered
        .iter()
        .map(|s| [s.centroid_lon, s.centroid_lat])
        .collect();
    let result = kmeans(&coords, &KMeansParams::new(k, seed))?;
    Ok(FoldAssignment {
        k,
        assignment: ordered
            .iter()
            .zip(&result.assignment)
            .map(|(s, &f)| (s.site_id.clone(), f))
            .collect(),
        centroids: result.centroids,
    })
}
