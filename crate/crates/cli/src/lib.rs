//! Experiment driver behind the `risid` binary.
//!
//! Each [`Command`] reproduces one study (a family of curves or a matrix),
//! reading a TOML config and writing CSV/JSON artifacts plus a manifest.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

use risid_core::NumericalFailure;

pub use config::{ConfigError, Settings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    PfSingle,
    PmissCorr,
    PmissM,
    PmissN,
    PfTwoM,
    PfTwoNp,
    PmissTwoM,
    PmissTwoNp,
    Tradeoff,
    Confusion,
    FiveRis,
    Theory,
    Design,
}

impl Command {
    pub const ALL: [Command; 13] = [
        Command::PfSingle,
        Command::PmissCorr,
        Command::PmissM,
        Command::PmissN,
        Command::PfTwoM,
        Command::PfTwoNp,
        Command::PmissTwoM,
        Command::PmissTwoNp,
        Command::Tradeoff,
        Command::Confusion,
        Command::FiveRis,
        Command::Theory,
        Command::Design,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::PfSingle => "pf-single",
            Command::PmissCorr => "pmiss-corr",
            Command::PmissM => "pmiss-m",
            Command::PmissN => "pmiss-n",
            Command::PfTwoM => "pf-two-m",
            Command::PfTwoNp => "pf-two-np",
            Command::PmissTwoM => "pmiss-two-m",
            Command::PmissTwoNp => "pmiss-two-np",
            Command::Tradeoff => "tradeoff",
            Command::Confusion => "confusion",
            Command::FiveRis => "five-ris",
            Command::Theory => "theory",
            Command::Design => "design",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(NumericalFailure),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<risid_core::Error> for CliError {
    fn from(e: risid_core::Error) -> Self {
        match e {
            risid_core::Error::InvalidArgument(m) => CliError::Invalid(m),
            risid_core::Error::Numerical(n) => CliError::Numerical(n),
        }
    }
}
