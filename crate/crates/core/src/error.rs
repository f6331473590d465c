use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid label schema: {0}")]
    Schema(String),
    #[error("cannot encode label: {0}")]
    Encoding(String),
    #[error("malformed label: more than one value set in group `{group}`")]
    MalformedLabel { group: String },
    #[error("label is incomplete: group `{group}` is missing")]
    IncompleteLabel { group: String },
    #[error("label schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite value in `{0}`")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("dataset error: {0}")]
    Dataset(String),
}
