use std::fmt;

use nasalgan::audio::AudioError;
use nasalgan::ciwgan::GanError;
use nasalgan::corpus::CorpusError;
use nasalgan::detector::DetectorError;
use nasalgan::nn::NnError;
use nasalgan::probe::ProbeError;

/// Failure classes with stable exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or parameters: exit 1.
    Usage(String),
    /// Missing, unreadable or inconsistent inputs: exit 2.
    Data(String),
    /// Non-finite values during training or evaluation: exit 3.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 1,
            Self::Data(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Data(m) => write!(f, "data error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        Self::Data(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::NonFinite(_) => Self::Numerical(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<GanError> for CliError {
    fn from(e: GanError) -> Self {
        match e {
            GanError::NonFinite { .. } => Self::Numerical(e.to_string()),
            GanError::Config(_) => Self::Usage(e.to_string()),
            GanError::Nn(n) => n.into(),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<DetectorError> for CliError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::Config(_) => Self::Usage(e.to_string()),
            DetectorError::Nn(n) => n.into(),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<ProbeError> for CliError {
    fn from(e: ProbeError) -> Self {
        match e {
            ProbeError::Config(_) | ProbeError::SameVariable(_) | ProbeError::Variable { .. } => {
                Self::Usage(e.to_string())
            }
            ProbeError::Gan(g) => g.into(),
            ProbeError::Detector(d) => d.into(),
            _ => Self::Data(e.to_string()),
        }
    }
}
