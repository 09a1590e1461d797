use std::fmt;

use leverage_trust::calibration::CalibrationError;
use leverage_trust::closed_form::ClosedFormError;
use leverage_trust::io::{ConfigError, IngestError};
use leverage_trust::phase_portrait::PhaseError;
use leverage_trust::scenario::ScenarioError;
use leverage_trust::stability::StabilityError;
use leverage_trust::trajectory::TrajectoryError;
use leverage_trust::DomainError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Domain,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Domain => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

/// A failure with the module it came from, reported as one JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub module: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, module: &'static str, message: impl fmt::Display) -> Self {
        CliError {
            kind,
            module,
            message: message.to_string(),
        }
    }

    pub fn config(message: impl fmt::Display) -> Self {
        Self::new(ErrorKind::Config, "io_cli", message)
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self::config(format!("{}: {e}", path.display()))
    }

    pub fn line(&self) -> String {
        let json = serde_json::to_string(self).expect("plain struct serialises");
        format!("error: {json}")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error in {}: {}", self.kind_str(), self.module, self.message)
    }
}

impl CliError {
    fn kind_str(&self) -> &'static str {
        match self.kind {
            ErrorKind::Config => "config",
            ErrorKind::Domain => "domain",
            ErrorKind::Numerical => "numerical",
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e)
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        Self::config(e)
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        Self::new(ErrorKind::Domain, "core_dynamics", e)
    }
}

impl From<TrajectoryError> for CliError {
    fn from(e: TrajectoryError) -> Self {
        let kind = match &e {
            TrajectoryError::InvalidConfig(_) => ErrorKind::Config,
            TrajectoryError::Domain(_) => ErrorKind::Domain,
            TrajectoryError::StepSizeUnderflow { .. } | TrajectoryError::TooManySteps { .. } => ErrorKind::Numerical,
        };
        Self::new(kind, "trajectory", e)
    }
}

impl From<ClosedFormError> for CliError {
    fn from(e: ClosedFormError) -> Self {
        match e {
            ClosedFormError::Domain(d) => d.into(),
            ClosedFormError::Trajectory(t) => t.into(),
            ClosedFormError::Quadrature(q) => Self::new(ErrorKind::Numerical, "closed_form", q),
            other => Self::new(ErrorKind::Domain, "closed_form", other),
        }
    }
}

impl From<StabilityError> for CliError {
    fn from(e: StabilityError) -> Self {
        match e {
            StabilityError::Domain(d) => d.into(),
            StabilityError::Trajectory(t) => t.into(),
            StabilityError::BadPerturbation(_) => Self::new(ErrorKind::Config, "stability", e),
        }
    }
}

impl From<PhaseError> for CliError {
    fn from(e: PhaseError) -> Self {
        match e {
            PhaseError::InvalidGrid(_) => Self::new(ErrorKind::Config, "phase_portrait", e),
            PhaseError::Domain(d) => d.into(),
            PhaseError::Trajectory(t) => t.into(),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::InvalidSchedule(_) => Self::new(ErrorKind::Config, "scenario", e),
            ScenarioError::Domain(d) => d.into(),
            ScenarioError::Segment { index, source } => {
                let inner: CliError = source.into();
                CliError {
                    message: format!("segment {index}: {}", inner.message),
                    ..inner
                }
            }
            ScenarioError::Config(t) => Self::new(ErrorKind::Config, "scenario", t),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        let kind = match &e {
            CalibrationError::InvalidSeries(_) => ErrorKind::Domain,
            CalibrationError::InvalidParams(_) | CalibrationError::InvalidChain(_) => ErrorKind::Config,
            CalibrationError::NoValidInitialisation(_)
            | CalibrationError::NoValidPath(_)
            | CalibrationError::EmptyPosterior => ErrorKind::Numerical,
        };
        Self::new(kind, "calibration", e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_line_is_json() {
        let e: CliError = DomainError::SingularTrust(1.0).into();
        let line = e.line();
        let json: serde_json::Value = serde_json::from_str(line.strip_prefix("error: ").unwrap()).unwrap();
        assert_eq!(json["kind"], "domain");
        assert_eq!(json["module"], "core_dynamics");
        assert_eq!(e.kind.exit_code(), 3);
    }

    #[test]
    fn nested_errors_keep_their_origin() {
        let e: CliError = ScenarioError::Segment {
            index: 2,
            source: TrajectoryError::StepSizeUnderflow { tau: 1.0 },
        }
        .into();
        assert_eq!(e.kind, ErrorKind::Numerical);
        assert_eq!(e.module, "trajectory");
        assert!(e.message.starts_with("segment 2: "));
    }
}
