//! Exit-code policy. Every library error is folded into one of four buckets
//! so scripts can branch on the code alone: 2 for I/O, 64 for bad
//! invocations, 65 for malformed or inconsistent inputs, 70 for numerical
//! failures inside an otherwise valid run.

use evisel::calibration::CalibrationError;
use evisel::cbvs::CbvsError;
use evisel::data::DataError;
use evisel::fdr::FdrError;
use evisel::mech::MechError;
use evisel::sim::SimError;
use std::fmt;
use std::path::Path;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Io(_) => 2,
            CliError::Data(_) => 65,
            CliError::Numeric(_) => 70,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io(format!("{}: {source}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg)
            | CliError::Io(msg)
            | CliError::Data(msg)
            | CliError::Numeric(msg) => f.write_str(msg),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> CliError {
        match e {
            DataError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MechError> for CliError {
    fn from(e: MechError) -> CliError {
        match e {
            MechError::InvalidHyper(_)
            | MechError::TooFewSamples { .. }
            | MechError::EmptyDesign
            | MechError::NotCentered { .. }
            | MechError::BadSuiteRow { .. } => CliError::Data(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> CliError {
        match e {
            CalibrationError::Io { .. } => CliError::Io(e.to_string()),
            CalibrationError::NonFinite => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CbvsError> for CliError {
    fn from(e: CbvsError) -> CliError {
        match e {
            CbvsError::UnknownAlgorithm { .. } => CliError::Usage(e.to_string()),
            CbvsError::FactorizationFailure { .. }
            | CbvsError::Divergence { .. }
            | CbvsError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<FdrError> for CliError {
    fn from(e: FdrError) -> CliError {
        match e {
            FdrError::Io { .. } => CliError::Io(e.to_string()),
            FdrError::AlphaOutOfRange { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> CliError {
        match e {
            SimError::Io { .. } => CliError::Io(e.to_string()),
            SimError::BisectionFailed { .. } | SimError::NonFinite { .. } => {
                CliError::Numeric(e.to_string())
            }
            SimError::Mech(inner) => inner.into(),
            SimError::Calibration(inner) => inner.into(),
            SimError::Cbvs(inner) => inner.into(),
            SimError::Fdr(inner) => inner.into(),
            SimError::Data(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}
