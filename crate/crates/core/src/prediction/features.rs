//! Feature vectors for the prediction tasks.
//!
//! Column order is fixed: the nine covariates in `CovariateSet::COLUMNS`
//! order, then `ndvi, evi`, then the embedding coordinates. Each feature set
//! is a subset of these blocks, concatenated in that order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::embedding_column;
use crate::model::{CovariateSet, SiteRecord, Year};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    Covariates,
    Spectral,
    CovariatesSpectral,
    Embeddings,
    EmbeddingsCovariates,
    All,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 6] = [
        FeatureSet::Covariates,
        FeatureSet::Spectral,
        FeatureSet::CovariatesSpectral,
        FeatureSet::Embeddings,
        FeatureSet::EmbeddingsCovariates,
        FeatureSet::All,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FeatureSet::Covariates => "covariates",
            FeatureSet::Spectral => "spectral",
            FeatureSet::CovariatesSpectral => "covariates_spectral",
            FeatureSet::Embeddings => "embeddings",
            FeatureSet::EmbeddingsCovariates => "embeddings_covariates",
            FeatureSet::All => "all",
        }
    }

    /// `(covariates, spectral, embeddings)` block membership.
    fn blocks(&self) -> (bool, bool, bool) {
        match self {
            FeatureSet::Covariates => (true, false, false),
            FeatureSet::Spectral => (false, true, false),
            FeatureSet::CovariatesSpectral => (true, true, false),
            FeatureSet::Embeddings => (false, false, true),
            FeatureSet::EmbeddingsCovariates => (true, false, true),
            FeatureSet::All => (true, true, true),
        }
    }

    pub fn width(&self, dim: usize) -> usize {
        let (c, s, e) = self.blocks();
        9 * c as usize + 2 * s as usize + dim * e as usize
    }

    pub fn columns(&self, dim: usize) -> Vec<String> {
        let (c, s, e) = self.blocks();
        let mut cols = Vec::with_capacity(self.width(dim));
        if c {
            cols.extend(CovariateSet::COLUMNS.iter().map(|s| s.to_string()));
        }
        if s {
            cols.extend(["ndvi".to_string(), "evi".to_string()]);
        }
        if e {
            cols.extend((0..dim).map(embedding_column));
        }
        cols
    }
}

impl std::fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', '+'], "_");
        FeatureSet::ALL
            .iter()
            .copied()
            .find(|f| f.name() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown feature set {s:?}")))
    }
}

/// Features at `year`, with `None` for each missing value.
pub fn build_features_partial(
    site: &SiteRecord,
    set: FeatureSet,
    year: Year,
    dim: usize,
) -> Vec<Option<f64>> {
    let (c, s, e) = set.blocks();
    let mut out = Vec::with_capacity(set.width(dim));
    if c {
        match site.covariates.get(&year) {
            Some(cov) => out.extend(cov.to_array().map(Some)),
            None => out.extend([None; 9]),
        }
    }
    if s {
        match site.spectral.get(&year) {
            Some(sp) => out.extend([Some(sp.ndvi), Some(sp.evi)]),
            None => out.extend([None, None]),
        }
    }
    if e {
        match site.embeddings.get(&year) {
            Some(v) => out.extend(v.as_slice().iter().map(|x| Some(*x))),
            None => out.extend(std::iter::repeat_n(None, dim)),
        }
    }
    out
}

/// Complete feature vector at `year`, or `MissingFeature`.
pub fn build_features(site: &SiteRecord, set: FeatureSet, year: Year) -> Result<Vec<f64>> {
    let (c, s, e) = set.blocks();
    let missing = |field: &str| Error::MissingFeature {
        site: site.site_id.clone(),
        field: field.to_string(),
        year,
    };
    let mut out = Vec::new();
    if c {
        let cov = site.covariates.get(&year).ok_or_else(|| missing("covariates"))?;
        out.extend(cov.to_array());
    }
    if s {
        let sp = site.spectral.get(&year).ok_or_else(|| missing("ndvi"))?;
        out.extend([sp.ndvi, sp.evi]);
    }
    if e {
        let v = site.embeddings.get(&year).ok_or_else(|| missing("embedding"))?;
        out.extend_from_slice(v.as_slice());
    }
    Ok(out)
}
