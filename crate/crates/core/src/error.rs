use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A survival-product factor fell outside [0, 1]; Δt is too large for the rates.
    #[error("rate clamp activated for {side} pair ({target}, {shooter}): rate*weight*dt = {product}")]
    ClampActivated { side: &'static str, target: usize, shooter: usize, product: f64 },

    #[error("integration blow-up at step {step}, attacker {agent}")]
    Blowup { step: usize, agent: usize },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("initializer could not place {placed} of {requested} agents; try a larger radius")]
    Placement { placed: usize, requested: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
