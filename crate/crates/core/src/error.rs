use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("infeasible subspace sizes: d_x = {d_x} < M * min_per_subspace = {m} * {min_per_subspace}")]
    InfeasibleSizes {
        d_x: usize,
        m: usize,
        min_per_subspace: usize,
    },

    #[error("feature {feature} has no latent parent (zero row in the structural matrix)")]
    OrphanFeature { feature: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Jacobian column for feature {feature} is zero: the feature is locally insensitive to every latent")]
    ZeroColumn { feature: usize },

    #[error("basis is not orthonormal (max |UᵀU − I| = {deviation:.3e})")]
    NotOrthonormal { deviation: f64 },

    #[error("group {label} has no member columns")]
    EmptyGroup { label: usize },

    #[error("desk-scale only: {0}")]
    DeskScale(String),

    #[error("residual budget {t} outside the attainable interval [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("mode error: {0}")]
    Mode(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it came from.
    pub fn at_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
