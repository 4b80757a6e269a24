use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure surfaced by the workbench. Each variant maps to a stable
/// machine-readable code (see [`Error::code`]) used by the CLI and HTTP API.
#[derive(Debug, Error)]
pub enum Error {
    // corpus store
    #[error("unknown corpus `{0}`")]
    UnknownCorpus(String),
    #[error("corpus `{0}` already exists; pass append to add documents")]
    CorpusExists(String),
    #[error("unknown assemblage `{0}`")]
    UnknownAssemblage(String),
    #[error("unknown metadata key `{0}`")]
    UnknownKey(String),
    #[error("ingest input starts with a byte-order mark")]
    BomRejected,
    #[error("invalid filter expression: {0}")]
    BadFilter(String),
    #[error("unknown checklist item `{0}`")]
    UnknownItem(String),
    #[error("invalid name `{0}`")]
    InvalidName(String),

    // preprocess
    #[error("vocabulary is empty after filtering")]
    EmptyVocabulary,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // topic engine
    #[error("document-term matrix has no tokens")]
    EmptyInput,
    #[error("number of topics {k} exceeds token total {tokens}")]
    KTooLarge { k: usize, tokens: u64 },
    #[error("topic {topic} out of range for K={k}")]
    BadTopic { topic: usize, k: usize },
    #[error("no in-vocabulary tokens to evaluate")]
    OovOnly,
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("model does not match: {0}")]
    ModelMismatch(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    // coherence
    #[error("term `{0}` has zero document frequency")]
    UnknownTerm(String),
    #[error("coherence needs at least two terms, got {0}")]
    TooFewTerms(usize),
    #[error("no K candidates supplied")]
    EmptyCandidates,

    // comparative analysis
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("zero variance in every group but group means differ")]
    DegenerateVariance,
    #[error("no dated documents in assemblage")]
    NoTimestamps,
    #[error("shared vocabulary has {shared} terms; at least {required} required")]
    TinySharedVocab { shared: usize, required: usize },
    #[error("test `{kind}` needs {expected} groups, found {found}")]
    WrongGroupCount {
        kind: &'static str,
        expected: &'static str,
        found: usize,
    },

    // interpretation
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("a coding session needs at least one coder")]
    NoCoders,
    #[error("coder `{0}` is not enrolled in this session")]
    UnknownCoder(String),
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("topics without consensus or resolution: {0:?}")]
    UnresolvedTopics(Vec<usize>),
    #[error("topic {0} assigned to more than one category")]
    CategoryOverlap(usize),
    #[error("session `{0}` is closed")]
    SessionClosed(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown feedback record `{0}`")]
    UnknownFeedback(String),
    #[error("no label set for run `{0}`")]
    UnknownLabelSet(String),

    // exports / pipeline
    #[error("project has no completed runs")]
    NoRuns,
    #[error("unknown phase `{0}`")]
    UnknownPhase(String),
    #[error("run `{0}` is not complete")]
    RunNotDone(String),
    #[error("a pipeline run is already executing")]
    RunInProgress,
    #[error("stage `{stage}` failed: {source}")]
    StageFailed {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("no project at {0}")]
    UnknownProject(PathBuf),
    #[error("project already initialised at {0}")]
    ProjectExists(PathBuf),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("artifact `{0}` is corrupt: {1}")]
    CorruptArtifact(String, String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            UnknownCorpus(_) => "UNKNOWN_CORPUS",
            CorpusExists(_) => "CORPUS_EXISTS",
            UnknownAssemblage(_) => "UNKNOWN_ASSEMBLAGE",
            UnknownKey(_) => "UNKNOWN_KEY",
            BomRejected => "BOM_REJECTED",
            BadFilter(_) => "BAD_FILTER",
            UnknownItem(_) => "UNKNOWN_ITEM",
            InvalidName(_) => "INVALID_NAME",
            EmptyVocabulary => "EMPTY_VOCABULARY",
            InvalidConfig(_) => "INVALID_CONFIG",
            EmptyInput => "EMPTY_INPUT",
            KTooLarge { .. } => "K_TOO_LARGE",
            BadTopic { .. } => "BAD_TOPIC",
            OovOnly => "OOV_ONLY",
            VocabMismatch(_) => "VOCAB_MISMATCH",
            ModelMismatch(_) => "MODEL_MISMATCH",
            InvalidDistribution(_) => "INVALID_DISTRIBUTION",
            UnknownTerm(_) => "UNKNOWN_TERM",
            TooFewTerms(_) => "TOO_FEW_TERMS",
            EmptyCandidates => "EMPTY_CANDIDATES",
            TooFewSamples(_) => "TOO_FEW_SAMPLES",
            DegenerateVariance => "DEGENERATE_VARIANCE",
            NoTimestamps => "NO_TIMESTAMPS",
            TinySharedVocab { .. } => "TINY_SHARED_VOCAB",
            WrongGroupCount { .. } => "WRONG_GROUP_COUNT",
            UnknownRun(_) => "UNKNOWN_RUN",
            NoCoders => "NO_CODERS",
            UnknownCoder(_) => "UNKNOWN_CODER",
            EmptyLabel => "EMPTY_LABEL",
            UnresolvedTopics(_) => "UNRESOLVED_TOPICS",
            CategoryOverlap(_) => "CATEGORY_OVERLAP",
            SessionClosed(_) => "SESSION_CLOSED",
            UnknownSession(_) => "UNKNOWN_SESSION",
            UnknownFeedback(_) => "UNKNOWN_FEEDBACK",
            UnknownLabelSet(_) => "UNKNOWN_LABELSET",
            NoRuns => "NO_RUNS",
            UnknownPhase(_) => "UNKNOWN_PHASE",
            RunNotDone(_) => "RUN_NOT_DONE",
            RunInProgress => "RUN_IN_PROGRESS",
            // a failed stage reports the code of its cause
            StageFailed { source, .. } => source.code(),
            UnknownProject(_) => "UNKNOWN_PROJECT",
            ProjectExists(_) => "PROJECT_EXISTS",
            PortInUse(_) => "PORT_IN_USE",
            CorruptArtifact(..) => "CORRUPT_ARTIFACT",
            Io(_) => "IO_ERROR",
            Json(_) => "JSON_ERROR",
        }
    }

    /// True for errors caused by user input rather than the environment.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Io(_) | Error::CorruptArtifact(..) => false,
            Error::StageFailed { source, .. } => source.is_user_error(),
            _ => true,
        }
    }

    pub fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::StageFailed {
            stage,
            source: Box::new(e),
        }
    }
}
