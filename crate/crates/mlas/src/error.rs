use thiserror::Error;

/// Crate-wide error type. Variants map one-to-one onto the failure classes
/// surfaced by the library's public operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("model configuration error: {0}")]
    Config(String),

    #[error("language registry error: {0}")]
    Registry(String),

    #[error("invalid language spec: {0}")]
    InvalidSpec(String),

    #[error("out-of-vocabulary character {codepoint:?} at position {position}")]
    Oov { codepoint: String, position: usize },

    #[error("generator error: {0}")]
    Generator(String),

    #[error("invalid corpus/experiment config: {0}")]
    InvalidConfig(String),

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("loss builder is not deterministic (evaluations differ: {0} vs {1})")]
    Nondeterminism(f64, f64),

    #[error("missing hypotheses for utterances: {0:?}")]
    Coverage(Vec<String>),

    #[error("checkpoint vocab fingerprint mismatch: checkpoint {checkpoint:#018x}, registry {registry:#018x}")]
    Fingerprint { checkpoint: u64, registry: u64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
