use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid demand distribution: {0}")]
    InvalidDemand(String),

    #[error("order-up-to level {order_up_to} is below starting inventory {inventory}")]
    OrderBelowInventory { inventory: i64, order_up_to: i64 },

    #[error("state grid needs {needed} cells, budget is {budget}")]
    GridTooLarge { needed: usize, budget: usize },

    #[error("solve exceeded its time budget of {seconds} s")]
    TimeBudget { seconds: f64 },

    #[error("horizon {horizon} exceeds the plan enumeration limit of {limit} periods")]
    HorizonTooLong { horizon: usize, limit: usize },

    #[error("policy covers {policy} periods but the instance has {instance}")]
    HorizonMismatch { policy: usize, instance: usize },

    #[error("action table shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("gap reference value is zero")]
    ZeroReference,

    #[error("sample count must be at least 1")]
    NoSamples,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
