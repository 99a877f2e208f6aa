//! Reference trajectory analytics for forest-restoration monitoring.
//!
//! Annual embedding vectors of restoration sites are compared against a
//! reference embedding built from stable secondary-forest points. The crate
//! covers ingest, reference construction, similarity trajectories, 2-D
//! projection, prediction under spatial cross-validation and a synthetic
//! world generator used for verification.

pub mod error;
pub mod geo;
pub mod ingest;
pub mod model;
pub mod prediction;
pub mod projection;
pub mod reference;
pub mod rng;
pub mod synthetic;
pub mod trajectory;
pub mod vector;

pub use error::{Error, Result};
pub use ingest::{load_dataset, Dataset, IngestOptions, IngestReport, InputPaths};
pub use model::{
    CovariateSet, EmbeddingVector, LulcClass, LulcCodes, ReferencePoint, SiteRecord, SpectralSample, Stability,
    Strategy, Year, YearWindow, DEFAULT_DIM,
};
pub use reference::{build_reference_set, classify_stability, ReferenceSet, ReferenceYearPolicy};
pub use trajectory::{build_trajectory, cosine_similarity, SimilarityTrajectory};
