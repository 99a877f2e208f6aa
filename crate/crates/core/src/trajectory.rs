//! Similarity trajectories of restoration sites against the secondary-forest
//! reference, improvement scores, baseline bands, grouped curves and
//! nearest-class change tracking.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EmbeddingVector, LulcClass, ReferencePoint, SiteRecord, Year};
use crate::reference::{nearest_secondary, ReferenceSet, ReferenceYearPolicy};
pub use crate::vector::cosine_similarity;

/// Which reference a trajectory is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryKind {
    Global,
    Local,
}

impl std::str::FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "global" => Ok(TrajectoryKind::Global),
            "local" => Ok(TrajectoryKind::Local),
            other => Err(Error::InvalidConfig(format!("unknown reference {other:?}"))),
        }
    }
}

/// The resolved reference of a built trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceKind {
    Global,
    Local(String),
}

impl std::fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ReferenceKind::Global => f.write_str("global"),
            ReferenceKind::Local(id) => write!(f, "local:{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub year: Year,
    /// Years since restoration start; negative before it.
    pub delta_t: i32,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub value: f64,
    /// Set when the start year is missing or there is no later sample.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTrajectory {
    pub site_id: String,
    pub reference: ReferenceKind,
    /// Sorted by year.
    pub samples: Vec<TrajectorySample>,
    pub improvement: f64,
    pub degenerate: bool,
}

impl SimilarityTrajectory {
    pub fn at_delta(&self, delta_t: i32) -> Option<f64> {
        self.samples
            .iter()
            .find(|s| s.delta_t == delta_t)
            .map(|s| s.similarity)
    }
}

/// Latest minus start-year similarity, over samples with `delta_t >= 0`.
///
/// Without a `delta_t = 0` sample the earliest non-negative sample stands in
/// and the result is flagged. With fewer than two usable samples the score
/// is 0 and flagged.
pub fn improvement_score(samples: &[TrajectorySample]) -> Improvement {
    let mut usable = samples.iter().filter(|s| s.delta_t >= 0);
    let Some(first) = usable.clone().min_by_key(|s| s.delta_t) else {
        return Improvement {
            value: 0.0,
            degenerate: true,
        };
    };
    let last = usable.by_ref().max_by_key(|s| s.delta_t).unwrap();
    if first.delta_t == last.delta_t {
        return Improvement {
            value: 0.0,
            degenerate: true,
        };
    }
    Improvement {
        value: last.similarity - first.similarity,
        degenerate: first.delta_t != 0,
    }
}

/// One sample per embedding year that has a matching reference vector.
pub fn build_trajectory(
    site: &SiteRecord,
    refset: &ReferenceSet,
    kind: TrajectoryKind,
) -> Result<SimilarityTrajectory> {
    if site.embeddings.is_empty() {
        return Err(Error::NoEmbeddings(site.site_id.clone()));
    }
    let local = match kind {
        TrajectoryKind::Global => None,
        TrajectoryKind::Local => Some(nearest_secondary(
            refset,
            site.centroid_lon,
            site.centroid_lat,
        )?),
    };
    let mut samples = Vec::with_capacity(site.embeddings.len());
    for (&year, e) in &site.embeddings {
        let reference: Option<&EmbeddingVector> = match local {
            None => refset.global_ref(year),
            Some(p) => refset.local_embedding(p, year),
        };
        if let Some(r) = reference {
            samples.push(TrajectorySample {
                year,
                delta_t: year - site.start_year,
                similarity: cosine_similarity(e, r)?,
            });
        }
    }
    let imp = improvement_score(&samples);
    Ok(SimilarityTrajectory {
        site_id: site.site_id.clone(),
        reference: match local {
            None => ReferenceKind::Global,
            Some(p) => ReferenceKind::Local(p.point_id.clone()),
        },
        samples,
        improvement: imp.value,
        degenerate: imp.degenerate,
    })
}

/// Builds trajectories for all sites, preserving input order.
pub fn build_trajectories(
    sites: &[SiteRecord],
    refset: &ReferenceSet,
    kind: TrajectoryKind,
) -> Result<Vec<SimilarityTrajectory>> {
    sites
        .par_iter()
        .map(|s| build_trajectory(s, refset, kind))
        .collect()
}

/// Mean similarity of stable primary-forest (upper) and pasture (lower)
/// points to the global reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineBand {
    pub upper: f64,
    pub lower: f64,
}

fn class_band(points: &[ReferencePoint], class: LulcClass, refset: &ReferenceSet) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in points.iter().filter(|p| p.stable_class() == Some(class)) {
        let years: Vec<Year> = match refset.policy() {
            ReferenceYearPolicy::FixedYear(y) => vec![y],
            ReferenceYearPolicy::PerYear => p.embeddings.keys().copied().collect(),
        };
        for y in years {
            if let (Some(e), Some(r)) = (p.embeddings.get(&y), refset.global_ref(y)) {
                sum += cosine_similarity(e, r)?;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::MissingBaselineClass(class));
    }
    Ok(sum / n as f64)
}

pub fn compute_baselines(points: &[ReferencePoint], refset: &ReferenceSet) -> Result<BaselineBand> {
    Ok(BaselineBand {
        upper: class_band(points, LulcClass::PrimaryForest, refset)?,
        lower: class_band(points, LulcClass::Pasture, refset)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupBy {
    StartLulc,
    Strategy,
    StartYear,
}

impl GroupBy {
    pub fn key(&self, site: &SiteRecord) -> String {
        match self {
            GroupBy::StartLulc => site
                .start_lulc
                .map_or_else(|| "Unknown".to_string(), |c| c.to_string()),
            GroupBy::Strategy => site.strategy.label().to_string(),
            GroupBy::StartYear => site.start_year.to_string(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GroupBy::StartLulc => "start_lulc",
            GroupBy::Strategy => "strategy",
            GroupBy::StartYear => "start_year",
        }
    }
}

impl std::str::FromStr for GroupBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "start_lulc" | "lulc" => Ok(GroupBy::StartLulc),
            "strategy" => Ok(GroupBy::Strategy),
            "start_year" | "year" => Ok(GroupBy::StartYear),
            other => Err(Error::InvalidConfig(format!("unknown grouping {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub group: String,
    pub delta_t: i32,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single member.
    pub sd: f64,
    pub n: usize,
}

/// Pointwise mean and sd per `(group, delta_t)`.
///
/// Values are reduced in `(group, site_id)` order. Trajectories whose site
/// is not in `sites` are ignored.
pub fn aggregate_trajectories(
    sites: &[SiteRecord],
    trajs: &[SimilarityTrajectory],
    group_by: GroupBy,
) -> Vec<AggregateRow> {
    let by_id: HashMap<&str, &SiteRecord> = sites.iter().map(|s| (s.site_id.as_str(), s)).collect();
    let mut ordered: Vec<(String, &SimilarityTrajectory)> = trajs
        .iter()
        .filter_map(|t| by_id.get(t.site_id.as_str()).map(|s| (group_by.key(s), t)))
        .collect();
    ordered.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.site_id.cmp(&b.1.site_id)));

    let mut cells: BTreeMap<(String, i32), Vec<f64>> = BTreeMap::new();
    for (group, t) in &ordered {
        for s in &t.samples {
            cells
                .entry((group.clone(), s.delta_t))
                .or_default()
                .push(s.similarity);
        }
    }
    cells
        .into_iter()
        .map(|((group, delta_t), values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let sd = if n > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            AggregateRow {
                group,
                delta_t,
                mean,
                sd,
                n,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralRow {
    pub year: Year,
    pub delta_t: i32,
    pub ndvi: f64,
    pub evi: f64,
}

/// NDVI/EVI aligned on the same `delta_t` axis as the similarity trajectory.
pub fn spectral_trajectory(site: &SiteRecord) -> Vec<SpectralRow> {
    site.spectral
        .iter()
        .map(|(&year, s)| SpectralRow {
            year,
            delta_t: year - site.start_year,
            ndvi: s.ndvi,
            evi: s.evi,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassYear {
    pub year: Year,
    pub class: LulcClass,
    pub similarity: f64,
    /// `1 - cos(e_t, e_prev)`; `None` for the first year.
    pub change_magnitude: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTransition {
    pub year: Year,
    pub from: LulcClass,
    pub to: LulcClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrajectory {
    pub site_id: String,
    pub years: Vec<ClassYear>,
    pub transitions: Vec<ClassTransition>,
}

/// Nearest class centroid per year for any annual embedding series.
pub fn classify_embedding_series(
    id: &str,
    embeddings: &BTreeMap<Year, EmbeddingVector>,
    refset: &ReferenceSet,
) -> Result<ClassTrajectory> {
    let available = refset
        .centroids_at(refset.anchor_year())
        .map_or(0, |c| c.len());
    if available < 2 {
        return Err(Error::TooFewCentroids(available));
    }
    let mut years = Vec::with_capacity(embeddings.len());
    let mut transitions = Vec::new();
    let mut prev: Option<(&EmbeddingVector, LulcClass)> = None;
    for (&year, e) in embeddings {
        let Some(centroids) = refset.centroids_at(year) else {
            continue;
        };
        let mut best: Option<(LulcClass, f64)> = None;
        // BTreeMap order is class-name order, so ties keep the first name.
        for (class, c) in centroids {
            let s = cosine_similarity(e, &c.vector)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((*class, s));
            }
        }
        let Some((class, similarity)) = best else {
            continue;
        };
        let change_magnitude = match prev {
            Some((pe, _)) => Some(1.0 - cosine_similarity(e, pe)?),
            None => None,
        };
        if let Some((_, pc)) = prev {
            if pc != class {
                transitions.push(ClassTransition {
                    year,
                    from: pc,
                    to: class,
                });
            }
        }
        years.push(ClassYear {
            year,
            class,
            similarity,
            change_magnitude,
        });
        prev = Some((e, class));
    }
    Ok(ClassTrajectory {
        site_id: id.to_string(),
        years,
        transitions,
    })
}

pub fn classify_trajectory(site: &SiteRecord, refset: &ReferenceSet) -> Result<ClassTrajectory> {
    classify_embedding_series(&site.site_id, &site.embeddings, refset)
}
