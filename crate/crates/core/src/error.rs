use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// One of the series handed to a correlation has zero variance.
    #[error("degenerate correlation: series has zero variance")]
    DegenerateCorrelation,

    #[error("QoS `{0}` is not present in the fingerprint")]
    MissingQos(String),

    #[error("fingerprint has no coverage for QoS `{qos}` at tick {tick}")]
    FingerprintGap { qos: String, tick: u64 },

    #[error("trial experience has not been aggregated for QoS `{0}`")]
    NotAggregated(String),

    #[error("no trial observation for class {class}, QoS `{qos}` at trial tick {tick}")]
    MissingObservation { class: usize, qos: String, tick: u64 },

    #[error("fingerprint value is zero at tick {tick}; relative weight undefined")]
    ZeroFingerprint { tick: u64 },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("trace contains no data rows")]
    EmptyTrace,

    #[error("trace has {found} ticks but at least {required} are required")]
    ShortTrace { required: usize, found: usize },

    #[error("{stage} failed for provider `{provider}`: {source}")]
    Stage {
        provider: String,
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    pub(crate) fn in_stage(self, provider: &str, stage: &'static str) -> Self {
        Error::Stage { provider: provider.to_owned(), stage, source: Box::new(self) }
    }
}
