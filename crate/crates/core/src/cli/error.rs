use std::fmt;

use crate::calib::CalibError;
use crate::eval::EvalError;
use crate::framing::FramingError;
use crate::ingest::IngestError;
use crate::synth::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// `--help` or `--version` output, not a failure.
    Help,
    Input,
    Degenerate,
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Help => 0,
            ErrorKind::Internal => 1,
            ErrorKind::Input => 2,
            ErrorKind::Degenerate => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Input, message: message.into() }
    }

    pub fn degenerate(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Degenerate, message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Internal, message: message.into() }
    }

    pub(crate) fn from_clap(e: clap::Error) -> Self {
        use clap::error::ErrorKind as K;
        let kind = match e.kind() {
            K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand => ErrorKind::Help,
            _ => ErrorKind::Input,
        };
        let text = e.render().to_string();
        let message = text.strip_prefix("error: ").map(str::to_string).unwrap_or(text);
        Self { kind, message }
    }

    /// Prefixes the message with what was being read.
    pub(crate) fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::EventOutsideRecording { .. } => Self::degenerate(e.to_string()),
            _ => Self::input(e.to_string()),
        }
    }
}

impl From<CalibError> for CliError {
    fn from(e: CalibError) -> Self {
        match e {
            CalibError::DegenerateRotations { .. }
            | CalibError::AllOutliers { .. }
            | CalibError::DegenerateDirection
            | CalibError::NoConvergence { .. } => Self::degenerate(e.to_string()),
            _ => Self::input(e.to_string()),
        }
    }
}

impl From<FramingError> for CliError {
    fn from(e: FramingError) -> Self {
        match e {
            FramingError::Format(_) => Self::input(e.to_string()),
            _ => Self::degenerate(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::WaypointNotReached { .. } | EvalError::SegmentUncovered { .. } | EvalError::TooShort(_) => {
                Self::degenerate(e.to_string())
            }
            _ => Self::input(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        Self::input(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::input(e.to_string())
    }
}
