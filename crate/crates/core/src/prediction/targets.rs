use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SiteRecord, Strategy, Year};
use crate::reference::ReferenceSet;
use crate::vector::cosine_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    /// Global reference similarity `horizon` years after the feature year.
    FutureSimilarity,
    /// The site's restoration strategy.
    Strategy,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::FutureSimilarity => "future_similarity",
            Task::Strategy => "strategy",
        }
    }

    pub fn is_regression(&self) -> bool {
        matches!(self, Task::FutureSimilarity)
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "future_similarity" | "similarity" => Ok(Task::FutureSimilarity),
            "strategy" => Ok(Task::Strategy),
            other => Err(Error::InvalidConfig(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Similarity(f64),
    Strategy(Strategy),
}

/// Per-site targets plus the sites that had to be left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSet {
    pub task: Task,
    pub horizon: i32,
    /// Feature year relative to the start year (the `t0` in `t0 + horizon`).
    pub feature_offset: i32,
    pub targets: BTreeMap<String, Target>,
    pub excluded: Vec<String>,
}

impl TargetSet {
    pub fn feature_year(&self, site: &SiteRecord) -> Year {
        site.start_year + self.feature_offset
    }
}

/// Builds targets for `task`. Sites lacking the horizon year are excluded,
/// never an error.
pub fn make_targets(
    sites: &[SiteRecord],
    refset: &ReferenceSet,
    task: Task,
    horizon: i32,
    feature_offset: i32,
) -> Result<TargetSet> {
    let mut targets = BTreeMap::new();
    let mut excluded = Vec::new();
    for site in sites {
        match task {
            Task::Strategy => {
                targets.insert(site.site_id.clone(), Target::Strategy(site.strategy));
            }
            Task::FutureSimilarity => {
                let year = site.start_year + feature_offset + horizon;
                match (site.embeddings.get(&year), refset.global_ref(year)) {
                    (Some(e), Some(r)) => {
                        let s = cosine_similarity(e, r)?;
                        targets.insert(site.site_id.clone(), Target::Similarity(s));
                    }
                    _ => excluded.push(site.site_id.clone()),
                }
            }
        }
    }
    excluded.sort();
    Ok(TargetSet {
        task,
        horizon,
        feature_offset,
        targets,
        excluded,
    })
}
