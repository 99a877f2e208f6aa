use std::path::PathBuf;

use crate::model::LulcClass;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("embedding has {found} values, expected {expected}")]
    WrongDimension { expected: usize, found: usize },

    #[error("embedding value at index {index} is not finite")]
    NonFinite { index: usize },

    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,

    #[error("a changing stability needs two different classes, got {0} twice")]
    SameClassTransition(LulcClass),

    #[error("invalid LULC code table: {0}")]
    InvalidCodeTable(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("missing column {0}")]
    MissingColumn(String),

    #[error("duplicate key ({id}, {year})")]
    DuplicateKey { id: String, year: i32 },

    #[error("duplicate identifier {0}")]
    DuplicateId(String),

    #[error("line {line}: unknown restoration strategy {value:?}")]
    UnknownStrategy { line: u64, value: String },

    #[error("line {line}: missing metadata field {field}")]
    MissingMetadataField { line: u64, field: String },

    #[error("missing LULC column for year {0}")]
    MissingYearColumn(i32),

    #[error("line {line}: invalid {field}: {message}")]
    InvalidValue {
        line: u64,
        field: String,
        message: String,
    },

    #[error("LULC series does not cover year {0}")]
    InsufficientSeries(i32),

    #[error("no stable secondary-forest reference points available")]
    NoSecondaryForestPoints,

    #[error("no centroid for class {0}")]
    NoCentroidForClass(LulcClass),

    #[error("site {0} has no embeddings")]
    NoEmbeddings(String),

    #[error("no stable {0} points for the baseline band")]
    MissingBaselineClass(LulcClass),

    #[error("nearest-class tracking needs at least two class centroids, found {0}")]
    TooFewCentroids(usize),

    #[error("all input points are identical")]
    DegenerateData,

    #[error("silhouette needs at least two labels")]
    SingleCluster,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("site {site}: missing {field} at year {year}")]
    MissingFeature {
        site: String,
        field: String,
        year: i32,
    },

    #[error("normal equations are singular")]
    SingularSystem,

    #[error("classifier needs at least two classes")]
    SingleClass,

    #[error("could not place class centroids with the requested separation")]
    SeparationInfeasible,

    #[error("fold {0} has no usable test sites")]
    FoldTooSmall(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable identifier of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::WrongDimension { .. } => "WrongDimension",
            Error::NonFinite { .. } => "NonFinite",
            Error::ZeroVector => "ZeroVector",
            Error::SameClassTransition(_) => "SameClassTransition",
            Error::InvalidCodeTable(_) => "InvalidCodeTable",
            Error::Io { .. } => "Io",
            Error::Parse { .. } => "Parse",
            Error::MissingColumn(_) => "MissingColumn",
            Error::DuplicateKey { .. } => "DuplicateKey",
            Error::DuplicateId(_) => "DuplicateId",
            Error::UnknownStrategy { .. } => "UnknownStrategy",
            Error::MissingMetadataField { .. } => "MissingMetadataField",
            Error::MissingYearColumn(_) => "MissingYearColumn",
            Error::InvalidValue { .. } => "InvalidValue",
            Error::InsufficientSeries(_) => "InsufficientSeries",
            Error::NoSecondaryForestPoints => "NoSecondaryForestPoints",
            Error::NoCentroidForClass(_) => "NoCentroidForClass",
            Error::NoEmbeddings(_) => "NoEmbeddings",
            Error::MissingBaselineClass(_) => "MissingBaselineClass",
            Error::TooFewCentroids(_) => "TooFewCentroids",
            Error::DegenerateData => "DegenerateData",
            Error::SingleCluster => "SingleCluster",
            Error::TooFewPoints { .. } => "TooFewPoints",
            Error::MissingFeature { .. } => "MissingFeature",
            Error::SingularSystem => "SingularSystem",
            Error::SingleClass => "SingleClass",
            Error::SeparationInfeasible => "SeparationInfeasible",
            Error::FoldTooSmall(_) => "FoldTooSmall",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
