use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid rank {rank} for a {d_out}x{d_in} layer")]
    InvalidRank { rank: usize, d_in: usize, d_out: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("leave-one-out estimation needs at least 3 clients, got {0}")]
    TooFewClients(usize),

    #[error("separate-matrix averaging requires equal ranks, got {0:?}")]
    HeterogeneousRanks(Vec<usize>),

    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl SimError {
    /// Short stable tag used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::InvalidRank { .. } => "invalid_rank",
            SimError::ShapeMismatch(_) => "shape_mismatch",
            SimError::InvalidWeights(_) => "invalid_weights",
            SimError::NonFinite(_) => "non_finite",
            SimError::TooFewClients(_) => "too_few_clients",
            SimError::HeterogeneousRanks(_) => "heterogeneous_ranks",
            SimError::InfeasiblePartition(_) => "infeasible_partition",
            SimError::Diverged(_) => "diverged",
            SimError::Config(_) => "config",
        }
    }
}
