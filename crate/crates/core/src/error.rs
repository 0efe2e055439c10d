use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network instance: {0}")]
    InvalidInstance(String),

    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),

    /// The desired-signal path of a link carries no power (zero beamformer,
    /// zero combiner or zero channel gain), so its rate is zero.
    #[error("degenerate signal on link {link}: desired-signal gain is zero")]
    DegenerateSignal { link: usize },

    #[error("missing {what} for node {node}")]
    MissingSignal { what: &'static str, node: usize },

    #[error("infeasible link {tx} -> {rx}: rate {rate} is not positive")]
    InfeasibleLink { tx: usize, rx: usize, rate: f64 },

    #[error("instance too large for exact enumeration: {nodes} nodes (cap {cap})")]
    TooLarge { nodes: usize, cap: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("instance format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
