use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("invalid bounds: m = {m} must be strictly below M = {big_m}")]
    InvalidBounds { m: f64, big_m: f64 },

    #[error("non-finite model state in segment `{0}`")]
    NonFiniteModel(String),

    #[error("diverged loss: {0}")]
    DivergedLoss(f64),

    #[error("non-finite gradient entry in segment `{0}`")]
    NonFiniteGradient(String),

    #[error("unknown problem `{name}`; valid names: {}", valid.join(", "))]
    UnknownProblem { name: String, valid: Vec<String> },

    #[error("expression error at column {column}: {message}")]
    Expr { column: usize, message: String },

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse { line: usize, column: usize, message: String },

    #[error("training diverged for seed {seed}: {reason}")]
    TrainingDiverged { seed: u64, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("characteristic exits domain at x = {x}, t = {t}")]
    CharacteristicExit { x: f64, t: f64 },

    #[error("characteristic integration exceeded {0} steps")]
    StepLimit(usize),

    #[error("oracle unavailable: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Maps a TOML error onto a 1-based line and column of `text`.
    pub fn from_toml(text: &str, err: toml::de::Error) -> Self {
        let (line, column) = match err.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (line, column)
            }
            None => (0, 0),
        };
        Error::ConfigParse { line, column, message: err.message().to_string() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
