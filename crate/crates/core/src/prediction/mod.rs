//! Prediction tasks under spatial cross-validation.

pub mod evaluate;
pub mod features;
pub mod folds;
pub mod forest;
pub mod kmeans;
pub mod linear;
pub mod logistic;
pub mod metrics;
pub mod targets;

pub use evaluate::{
    design_matrix, evaluate, fit_fold, DesignMatrix, EvalConfig, FittedModel, FoldMetrics, MetricSummary,
    ModelKind, PredictionTaskResult,
};
pub use features::{build_features, build_features_partial, FeatureSet};
pub use folds::{spatial_kfold, FoldAssignment};
pub use forest::{train_forest_classifier, train_forest_regressor, ForestMode, ForestParams, RandomForest};
pub use kmeans::{kmeans, KMeansParams, KMeansResult};
pub use linear::{train_linear, LinearModel};
pub use logistic::{train_logistic, LogisticModel, LogisticParams, Standardizer};
pub use metrics::Metric;
pub use targets::{make_targets, Target, TargetSet, Task};
