use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use reftraj_core::ingest::FilterRules;
use reftraj_core::prediction::{FeatureSet, ModelKind, Task};
use reftraj_core::reference::OutlierMetric;
use reftraj_core::synthetic::{Mislabel, SynthConfig};
use reftraj_core::trajectory::{GroupBy, TrajectoryKind};
use reftraj_core::{InputPaths, LulcClass, ReferenceYearPolicy, YearWindow};

use crate::CliError;

/// Every setting a run can use. Loaded from a flat TOML file, then
/// overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: Option<usize>,
    pub input_dir: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub sites: Option<PathBuf>,
    pub spectral: Option<PathBuf>,
    pub covariates: Option<PathBuf>,
    pub reference_points: Option<PathBuf>,
    pub lulc_codes: Option<PathBuf>,
    pub output_dir: PathBuf,

    pub year_first: i32,
    pub year_last: i32,
    pub lulc_first: i32,
    pub lulc_last: i32,
    pub min_area_ha: f64,
    pub start_year_min: i32,
    pub start_year_max: i32,

    pub reference_year_policy: String,
    pub outlier_metric: String,
    pub outlier_classes: Vec<String>,
    pub top_k: usize,

    pub trajectory_reference: String,
    pub aggregate: Option<String>,

    pub projection_method: String,

    pub tasks: Vec<String>,
    pub k_folds: usize,
    pub horizon: i32,
    pub feature_offset: i32,
    pub models: Vec<String>,
    pub feature_sets: Vec<String>,
    pub n_trees: usize,
    pub impute: bool,

    pub area_bins: Vec<f64>,

    pub synth_n_sites: usize,
    pub synth_points_per_class: usize,
    pub synth_changing_per_transition: usize,
    pub synth_noise_sigma: f64,
    pub synth_dim: usize,
    /// Entries of the form `TrueClass>LabeledAs:count`.
    pub synth_mislabels: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        RunConfig {
            seed: 0,
            threads: None,
            input_dir: None,
            embeddings: None,
            sites: None,
            spectral: None,
            covariates: None,
            reference_points: None,
            lulc_codes: None,
            output_dir: PathBuf::from("out"),
            year_first: 2017,
            year_last: 2024,
            lulc_first: 2015,
            lulc_last: 2024,
            min_area_ha: 1.0,
            start_year_min: 2017,
            start_year_max: 2024,
            reference_year_policy: "fixed:2024".into(),
            outlier_metric: "cosine".into(),
            outlier_classes: Vec::new(),
            top_k: 10,
            trajectory_reference: "global".into(),
            aggregate: None,
            projection_method: "pca".into(),
            tasks: vec!["future_similarity".into(), "strategy".into()],
            k_folds: 5,
            horizon: 3,
            feature_offset: 0,
            models: Vec::new(),
            feature_sets: Vec::new(),
            n_trees: 100,
            impute: false,
            area_bins: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            synth_n_sites: synth.n_sites,
            synth_points_per_class: synth.points_per_class,
            synth_changing_per_transition: synth.changing_per_transition,
            synth_noise_sigma: synth.noise_sigma,
            synth_dim: synth.dim,
            synth_mislabels: Vec::new(),
        }
    }
}

fn parse_list<T: std::str::FromStr<Err = reftraj_core::Error>>(items: &[String]) -> Result<Vec<T>, CliError> {
    items.iter().map(|s| s.parse().map_err(CliError::from)).collect()
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// The settings that can change results: file locations and the
    /// thread cap are cleared.
    pub fn analysis_settings(&self) -> Self {
        RunConfig {
            threads: None,
            input_dir: None,
            embeddings: None,
            sites: None,
            spectral: None,
            covariates: None,
            reference_points: None,
            lulc_codes: None,
            output_dir: PathBuf::new(),
            ..self.clone()
        }
    }

    pub fn input_paths(&self) -> Result<InputPaths, CliError> {
        let base = self.input_dir.as_ref().map(InputPaths::in_dir);
        let required = |explicit: &Option<PathBuf>, fallback: Option<&PathBuf>, name: &str| {
            explicit
                .clone()
                .or_else(|| fallback.cloned())
                .ok_or_else(|| CliError::Config(format!("no path for {name}; set input_dir or {name}")))
        };
        let paths = InputPaths {
            embeddings: required(&self.embeddings, base.as_ref().map(|b| &b.embeddings), "embeddings")?,
            sites: required(&self.sites, base.as_ref().map(|b| &b.sites), "sites")?,
            spectral: self.spectral.clone().or_else(|| base.as_ref().and_then(|b| b.spectral.clone())),
            covariates: self
                .covariates
                .clone()
                .or_else(|| base.as_ref().and_then(|b| b.covariates.clone())),
            reference_points: required(
                &self.reference_points,
                base.as_ref().map(|b| &b.reference_points),
                "reference_points",
            )?,
            lulc_codes: self
                .lulc_codes
                .clone()
                .or_else(|| base.as_ref().and_then(|b| b.lulc_codes.clone())),
        };
        for p in paths.all() {
            if !p.exists() {
                return Err(CliError::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(paths)
    }

    pub fn window(&self) -> Result<YearWindow, CliError> {
        Ok(YearWindow::new(self.year_first, self.year_last)?)
    }

    pub fn lulc_window(&self) -> Result<YearWindow, CliError> {
        Ok(YearWindow::new(self.lulc_first, self.lulc_last)?)
    }

    pub fn filter_rules(&self) -> FilterRules {
        FilterRules {
            min_area_ha: self.min_area_ha,
            start_years: (self.start_year_min, self.start_year_max),
        }
    }

    pub fn policy(&self) -> Result<ReferenceYearPolicy, CliError> {
        Ok(self.reference_year_policy.parse()?)
    }

    pub fn metric(&self) -> Result<OutlierMetric, CliError> {
        Ok(self.outlier_metric.parse()?)
    }

    pub fn outlier_classes(&self) -> Result<Vec<LulcClass>, CliError> {
        parse_list(&self.outlier_classes)
    }

    pub fn trajectory_kind(&self) -> Result<TrajectoryKind, CliError> {
        Ok(self.trajectory_reference.parse()?)
    }

    pub fn group_by(&self) -> Result<Option<GroupBy>, CliError> {
        self.aggregate.as_deref().map(|g| g.parse().map_err(CliError::from)).transpose()
    }

    pub fn tasks(&self) -> Result<Vec<Task>, CliError> {
        parse_list(&self.tasks)
    }

    /// An empty list means the per-task defaults.
    pub fn models(&self) -> Result<Vec<ModelKind>, CliError> {
        parse_list(&self.models)
    }

    /// An empty list means every feature set.
    pub fn feature_sets(&self) -> Result<Vec<FeatureSet>, CliError> {
        parse_list(&self.feature_sets)
    }

    pub fn synth_config(&self) -> Result<SynthConfig, CliError> {
        let mislabels = self
            .synth_mislabels
            .iter()
            .map(|s| parse_mislabel(s))
            .collect::<Result<Vec<_>, _>>()?;
        let config = SynthConfig {
            seed: self.seed,
            dim: self.synth_dim,
            points_per_class: self.synth_points_per_class,
            changing_per_transition: self.synth_changing_per_transition,
            n_sites: self.synth_n_sites,
            noise_sigma: self.synth_noise_sigma,
            mislabels,
            ..SynthConfig::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if self.projection_method != "pca" {
            return Err(CliError::Config(format!(
                "unsupported projection method {:?}; only \"pca\" is available",
                self.projection_method
            )));
        }
        if self.area_bins.windows(2).any(|w| w[0] >= w[1]) || self.area_bins.iter().any(|b| !b.is_finite()) {
            return Err(CliError::Config("area_bins must be finite and strictly increasing".into()));
        }
        self.window()?;
        self.lulc_window()?;
        self.policy()?;
        self.metric()?;
        self.outlier_classes()?;
        self.trajectory_kind()?;
        self.group_by()?;
        self.tasks()?;
        self.models()?;
        self.feature_sets()?;
        Ok(())
    }
}

fn parse_mislabel(s: &str) -> Result<Mislabel, CliError> {
    let bad = || CliError::Config(format!("bad mislabel entry {s:?}; expected TrueClass>LabeledAs:count"));
    let (classes, count) = s.rsplit_once(':').ok_or_else(bad)?;
    let (truth, label) = classes.split_once('>').ok_or_else(bad)?;
    Ok(Mislabel {
        true_class: truth.parse()?,
        labeled_as: label.parse()?,
        count: count.trim().parse().map_err(|_| bad())?,
    })
}
