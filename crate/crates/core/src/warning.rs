use std::fmt;

/// Category of a non-fatal diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WarningKind {
    RateMismatch,
    MostlyInvalid,
    ShortTrial,
    AspectMismatch,
    EmptyInput,
    EmptyScanpath,
    CorpusShape,
    MissingStartTag,
    TruncatedPrediction,
    MethodNameNotFound,
    PredictionTooLong,
    ScreenMismatch,
}

impl WarningKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RateMismatch => "rate-mismatch",
            Self::MostlyInvalid => "mostly-invalid",
            Self::ShortTrial => "short-trial",
            Self::AspectMismatch => "aspect-mismatch",
            Self::EmptyInput => "empty-input",
            Self::EmptyScanpath => "empty-scanpath",
            Self::CorpusShape => "corpus-shape",
            Self::MissingStartTag => "missing-start-tag",
            Self::TruncatedPrediction => "truncated-prediction",
            Self::MethodNameNotFound => "method-name-not-found",
            Self::PredictionTooLong => "prediction-too-long",
            Self::ScreenMismatch => "screen-mismatch",
        }
    }
}

/// A non-fatal diagnostic. Operations return these alongside their result
/// instead of logging, so callers decide how to surface them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub kind: WarningKind,
    pub message: String,
}

impl Warning {
    pub fn new(kind: WarningKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.kind.as_str(), self.message)
    }
}
