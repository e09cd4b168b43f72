use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("sample `{sample_id}`: {reason}")]
    InvalidSample { sample_id: String, reason: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: expected {expected} values, got {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("concept {concept} out of range 1..={n_concepts}")]
    ConceptOutOfRange { concept: u32, n_concepts: u32 },

    #[error("channel {channel} out of range (n_channels = {n_channels})")]
    ChannelOutOfRange { channel: usize, n_channels: usize },

    #[error("concept {concept} is absent from sample `{sample_id}`")]
    ConceptAbsent { concept: u32, sample_id: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("only one class present in {0}")]
    SingleClass(String),

    #[error("empty pool: {0}")]
    EmptyPool(String),

    #[error("k = {k} exceeds the number of distinct points ({distinct})")]
    TooManyClusters { k: usize, distinct: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no donor carries concept {concept} after {attempts} draws")]
    DonorExhausted { concept: u32, attempts: usize },

    #[error("no usable samples for concept {concept}")]
    NoUsableSamples { concept: u32 },

    #[error("imputer failed on sample `{sample_id}`: {source}")]
    Imputer {
        sample_id: String,
        #[source]
        source: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn imputer(sample_id: &str, source: Error) -> Self {
        Error::Imputer {
            sample_id: sample_id.into(),
            source: alloc::boxed::Box::new(source),
        }
    }
}
