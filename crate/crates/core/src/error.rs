use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("unknown link `{0}`")]
    UnknownLink(String),

    #[error("unknown user {0}")]
    UnknownUser(u32),

    #[error("non-increasing layer schedule at `{field}`")]
    NonIncreasingLayers { field: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("target layer {target} is beyond the schedule ({layers} layers)")]
    LayerOutOfRange { target: usize, layers: usize },

    #[error("zero network price")]
    ZeroPrice,

    #[error("series of length {len} is shorter than window {window}")]
    ShortSeries { len: usize, window: usize },

    #[error("knapsack oracle instance too large: {0} bids (limit {limit})", limit = crate::admission::ORACLE_LIMIT)]
    InstanceTooLarge(usize),

    #[error("non-finite {quantity} for {entity} at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        entity: String,
        quantity: &'static str,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
