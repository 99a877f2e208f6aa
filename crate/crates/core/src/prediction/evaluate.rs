//! Spatial cross-validation of (model, feature set) combinations.

use std::hash::{DefaultHasher, Hasher};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{build_features, build_features_partial, FeatureSet};
use super::folds::FoldAssignment;
use super::forest::{train_forest_classifier, train_forest_regressor, ForestParams, Node, RandomForest};
use super::linear::{train_linear, LinearModel};
use super::logistic::{train_logistic, LogisticModel, LogisticParams, Standardizer};
use super::metrics::{accuracy, macro_f1, mae, mean_sd, r2, Metric};
use super::targets::{Target, TargetSet, Task};
use crate::error::{Error, Result};
use crate::model::{SiteRecord, DEFAULT_DIM};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Linear,
    Logistic,
    RandomForest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Linear, ModelKind::Logistic, ModelKind::RandomForest];

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Linear => "linear",
            ModelKind::Logistic => "logistic",
            ModelKind::RandomForest => "random_forest",
        }
    }

    pub fn supports(&self, task: Task) -> bool {
        match self {
            ModelKind::Linear => task.is_regression(),
            ModelKind::Logistic => !task.is_regression(),
            ModelKind::RandomForest => true,
        }
    }

    /// Linear or logistic (whichever fits the task) plus the random forest.
    pub fn defaults_for(task: Task) -> Vec<ModelKind> {
        ModelKind::ALL.into_iter().filter(|m| m.supports(task)).collect()
    }

    fn stream(&self) -> u64 {
        *self as u64
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "linear" | "ridge" => Ok(ModelKind::Linear),
            "logistic" => Ok(ModelKind::Logistic),
            "random_forest" | "forest" | "rf" => Ok(ModelKind::RandomForest),
            other => Err(Error::InvalidConfig(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub models: Vec<ModelKind>,
    pub feature_sets: Vec<FeatureSet>,
    pub seed: u64,
    /// Mean-impute missing features from training-fold statistics instead
    /// of failing with `MissingFeature`.
    pub impute: bool,
    pub ridge_lambda: f64,
    pub logistic: LogisticParams,
    pub forest: ForestParams,
}

impl EvalConfig {
    pub fn for_task(task: Task, seed: u64) -> Self {
        EvalConfig {
            models: ModelKind::defaults_for(task),
            feature_sets: FeatureSet::ALL.to_vec(),
            seed,
            impute: false,
            ridge_lambda: 1e-6,
            logistic: LogisticParams::default(),
            forest: ForestParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Vec<(Metric, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTaskResult {
    pub task: Task,
    pub model: ModelKind,
    pub feature_set: FeatureSet,
    pub per_fold: Vec<FoldMetrics>,
    pub aggregate: Vec<MetricSummary>,
    /// Folds left out because no usable test (or training) site remained.
    pub skipped_folds: Vec<usize>,
}

impl PredictionTaskResult {
    pub fn mean_of(&self, metric: Metric) -> Option<f64> {
        self.aggregate.iter().find(|m| m.metric == metric).map(|m| m.mean)
    }
}

/// Feature rows for every site that has both a target and a fold, in site
/// id order.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub site_ids: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub targets: Vec<Target>,
    pub folds: Vec<usize>,
}

pub fn design_matrix(
    sites: &[SiteRecord],
    targets: &TargetSet,
    folds: &FoldAssignment,
    set: FeatureSet,
    impute: bool,
) -> Result<DesignMatrix> {
    let dim = sites
        .iter()
        .flat_map(|s| s.embeddings.values())
        .map(|e| e.dim())
        .next()
        .unwrap_or(DEFAULT_DIM);
    let mut ordered: Vec<&SiteRecord> = sites.iter().collect();
    ordered.sort_by(|a, b| a.site_id.cmp(&b.site_id));
    let mut m = DesignMatrix {
        site_ids: Vec::new(),
        rows: Vec::new(),
        targets: Vec::new(),
        folds: Vec::new(),
    };
    for site in ordered {
        let (Some(target), Some(fold)) = (targets.targets.get(&site.site_id), folds.fold_of(&site.site_id))
        else {
            continue;
        };
        let year = targets.feature_year(site);
        let row = build_features_partial(site, set, year, dim);
        if !impute && row.iter().any(Option::is_none) {
            build_features(site, set, year)?;
        }
        m.site_ids.push(site.site_id.clone());
        m.rows.push(row);
        m.targets.push(*target);
        m.folds.push(fold);
    }
    Ok(m)
}

/// Fills gaps with per-column means of `train` (0 if a column is empty).
fn impute(train: &[&Vec<Option<f64>>], rows: &[&Vec<Option<f64>>]) -> Vec<Vec<f64>> {
    let p = train.first().or(rows.first()).map_or(0, |r| r.len());
    let mut sums = vec![0.0; p];
    let mut counts = vec![0usize; p];
    for row in train {
        for (j, v) in row.iter().enumerate() {
            if let Some(v) = v {
                sums[j] += v;
                counts[j] += 1;
            }
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    rows.iter()
        .map(|r| r.iter().zip(&means).map(|(v, m)| v.unwrap_or(*m)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Linear {
        standardizer: Standardizer,
        model: LinearModel,
    },
    Logistic(LogisticModel),
    Forest(RandomForest),
}

fn similarity(t: &Target) -> Result<f64> {
    match t {
        Target::Similarity(v) => Ok(*v),
        Target::Strategy(_) => Err(Error::InvalidConfig("expected a similarity target".into())),
    }
}

fn strategy_label(t: &Target) -> Result<usize> {
    match t {
        Target::Strategy(s) => Ok(s.index()),
        Target::Similarity(_) => Err(Error::InvalidConfig("expected a strategy target".into())),
    }
}

impl FittedModel {
    pub fn predict_value(&self, row: &[f64]) -> f64 {
        match self {
            FittedModel::Linear { standardizer, model } => model.predict(&standardizer.apply(row)),
            FittedModel::Forest(f) => f.predict_value(row),
            FittedModel::Logistic(m) => m.predict(row) as f64,
        }
    }

    pub fn predict_class(&self, row: &[f64]) -> usize {
        match self {
            FittedModel::Logistic(m) => m.predict(row),
            FittedModel::Forest(f) => f.predict_class(row),
            FittedModel::Linear { .. } => self.predict_value(row).round().max(0.0) as usize,
        }
    }

    /// Checksum over every fitted parameter.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let mut put = |v: f64| h.write_u64(v.to_bits());
        match self {
            FittedModel::Linear { standardizer, model } => {
                standardizer.mean.iter().chain(&standardizer.scale).for_each(|v| put(*v));
                put(model.intercept);
                model.weights.iter().for_each(|v| put(*v));
            }
            FittedModel::Logistic(m) => {
                m.classes.iter().for_each(|c| put(*c as f64));
                let s = &m.standardizer;
                s.mean.iter().chain(&s.scale).for_each(|v| put(*v));
                m.weights.iter().flatten().for_each(|v| put(*v));
            }
            FittedModel::Forest(f) => {
                f.classes.iter().for_each(|c| put(*c as f64));
                for node in f.trees.iter().flat_map(|t| &t.nodes) {
                    match node {
                        Node::Leaf(v) => put(*v),
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => {
                            put(*feature as f64);
                            put(*threshold);
                            put(*left as f64);
                            put(*right as f64);
                        }
                    }
                }
            }
        }
        h.finish()
    }
}

/// Trains one model on complete training rows.
pub fn fit_fold(
    task: Task,
    model: ModelKind,
    x: &[Vec<f64>],
    targets: &[Target],
    seed: u64,
    config: &EvalConfig,
) -> Result<FittedModel> {
    if !model.supports(task) {
        return Err(Error::InvalidConfig(format!("model {model} does not support task {task}")));
    }
    match model {
        ModelKind::Linear => {
            let y = targets.iter().map(similarity).collect::<Result<Vec<_>>>()?;
            let standardizer = Standardizer::fit(x);
            let z: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
            let model = train_linear(&z, &y, config.ridge_lambda)?;
            Ok(FittedModel::Linear { standardizer, model })
        }
        ModelKind::Logistic => {
            let y = targets.iter().map(strategy_label).collect::<Result<Vec<_>>>()?;
            let params = LogisticParams { seed, ..config.logistic };
            Ok(FittedModel::Logistic(train_logistic(x, &y, &params)?))
        }
        ModelKind::RandomForest => {
            let params = ForestParams { seed, ..config.forest };
            if task.is_regression() {
                let y = targets.iter().map(similarity).collect::<Result<Vec<_>>>()?;
                Ok(FittedModel::Forest(train_forest_regressor(x, &y, &params)?))
            } else {
                let y = targets.iter().map(strategy_label).collect::<Result<Vec<_>>>()?;
                Ok(FittedModel::Forest(train_forest_classifier(x, &y, &params)?))
            }
        }
    }
}

pub fn score(task: Task, model: &FittedModel, x: &[Vec<f64>], targets: &[Target]) -> Result<Vec<(Metric, f64)>> {
    if task.is_regression() {
        let truth = targets.iter().map(similarity).collect::<Result<Vec<_>>>()?;
        let pred: Vec<f64> = x.iter().map(|r| model.predict_value(r)).collect();
        Ok(vec![(Metric::R2, r2(&truth, &pred)), (Metric::Mae, mae(&truth, &pred))])
    } else {
        let truth = targets.iter().map(strategy_label).collect::<Result<Vec<_>>>()?;
        let pred: Vec<usize> = x.iter().map(|r| model.predict_class(r)).collect();
        Ok(vec![
            (Metric::Accuracy, accuracy(&truth, &pred)),
            (Metric::MacroF1, macro_f1(&truth, &pred)),
        ])
    }
}

/// Seed used for one (model, feature set, fold) cell. Independent of the
/// order in which models and sets are listed.
pub fn cell_seed(seed: u64, model: ModelKind, set: FeatureSet, fold: usize) -> u64 {
    let set_idx = FeatureSet::ALL.iter().position(|s| *s == set).unwrap() as u64;
    derive_seed(derive_seed(derive_seed(seed, model.stream()), set_idx), fold as u64)
}

/// `(x_train, y_train, x_test, y_test)`.
pub type FoldSplit = (Vec<Vec<f64>>, Vec<Target>, Vec<Vec<f64>>, Vec<Target>);

/// Complete train/test matrices for one held-out fold.
pub fn split_fold(m: &DesignMatrix, fold: usize) -> FoldSplit {
    let train: Vec<usize> = (0..m.rows.len()).filter(|&i| m.folds[i] != fold).collect();
    let test: Vec<usize> = (0..m.rows.len()).filter(|&i| m.folds[i] == fold).collect();
    let train_rows: Vec<&Vec<Option<f64>>> = train.iter().map(|&i| &m.rows[i]).collect();
    let test_rows: Vec<&Vec<Option<f64>>> = test.iter().map(|&i| &m.rows[i]).collect();
    (
        impute(&train_rows, &train_rows),
        train.iter().map(|&i| m.targets[i]).collect(),
        impute(&train_rows, &test_rows),
        test.iter().map(|&i| m.targets[i]).collect(),
    )
}

pub fn evaluate(
    sites: &[SiteRecord],
    targets: &TargetSet,
    folds: &FoldAssignment,
    config: &EvalConfig,
) -> Result<Vec<PredictionTaskResult>> {
    let task = targets.task;
    if folds.k < 2 {
        return Err(Error::InvalidConfig("cross-validation needs at least two folds".into()));
    }
    if let Some(m) = config.models.iter().find(|m| !m.supports(task)) {
        return Err(Error::InvalidConfig(format!("model {m} does not support task {task}")));
    }
    let metrics = if task.is_regression() {
        Metric::REGRESSION
    } else {
        Metric::CLASSIFICATION
    };

    let mut results = Vec::new();
    for &set in &config.feature_sets {
        let design = design_matrix(sites, targets, folds, set, config.impute)?;
        let splits: Vec<_> = (0..folds.k).map(|f| split_fold(&design, f)).collect();
        for &model in &config.models {
            let outcomes: Vec<Result<Option<FoldMetrics>>> = splits
                .par_iter()
                .enumerate()
                .map(|(fold, (xtr, ytr, xte, yte))| {
                    if xte.is_empty() || xtr.is_empty() {
                        return Ok(None);
                    }
                    let seed = cell_seed(config.seed, model, set, fold);
                    let fitted = fit_fold(task, model, xtr, ytr, seed, config)?;
                    Ok(Some(FoldMetrics {
                        fold,
                        n_train: xtr.len(),
                        n_test: xte.len(),
                        metrics: score(task, &fitted, xte, yte)?,
                    }))
                })
                .collect();
            let mut per_fold = Vec::new();
            let mut skipped_folds = Vec::new();
            for (fold, o) in outcomes.into_iter().enumerate() {
                match o? {
                    Some(fm) => per_fold.push(fm),
                    None => {
                        warn!("{}", Error::FoldTooSmall(fold));
                        skipped_folds.push(fold);
                    }
                }
            }
            if per_fold.is_empty() {
                return Err(Error::FoldTooSmall(skipped_folds.first().copied().unwrap_or(0)));
            }
            let aggregate = metrics
                .iter()
                .map(|&metric| {
                    let values: Vec<f64> = per_fold
                        .iter()
                        .filter_map(|f| f.metrics.iter().find(|(m, _)| *m == metric).map(|(_, v)| *v))
                        .collect();
                    let (mean, sd) = mean_sd(&values);
                    MetricSummary { metric, mean, sd }
                })
                .collect();
            info!("evaluated {task}/{model}/{set} over {} folds", per_fold.len());
            results.push(PredictionTaskResult {
                task,
                model,
                feature_set: set,
                per_fold,
                aggregate,
                skipped_folds,
            });
        }
    }
    Ok(results)
}
