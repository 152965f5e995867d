use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },
    #[error("unsupported format_version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("node `{label}` names parent `{parent}` which is not in the taxonomy")]
    MissingParent { label: String, parent: String },
    #[error("cycle detected through `{0}`")]
    Cycle(String),
    #[error("node `{label}` has invalid malignancy `{value}`")]
    InvalidMalignancy { label: String, value: String },
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("depth {depth} out of range for path length {len}")]
    DepthOutOfRange { depth: usize, len: usize },
    #[error("empty label")]
    EmptyLabel,

    #[error("fallback sampling needs at least 2 distinct diagnoses with cases, found {0}")]
    FallbackSampling(usize),
    #[error("not enough distinct labels: need {needed}, have {available}")]
    NotEnoughLabels { needed: usize, available: usize },

    #[error("ground truth `{0}` is a root; it has no ancestors")]
    NoAncestors(String),

    #[error("invalid tag set: {0}")]
    InvalidTagSet(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("KL support violation at index {0}: q is zero where p is positive")]
    KlSupport(usize),
    #[error("item `{0}` not found")]
    UnknownItem(String),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
