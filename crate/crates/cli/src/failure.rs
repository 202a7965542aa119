use std::fmt;

/// Exit status classes.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_TOLERANCE: u8 = 4;

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Numerical(anyhow::Error),
    Tolerance(Vec<String>),
}

impl Failure {
    pub fn config(msg: impl fmt::Display) -> Self {
        Self::Config(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Numerical(_) => EXIT_NUMERICAL,
            Self::Tolerance(_) => EXIT_TOLERANCE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(e) => write!(f, "configuration error: {e:#}"),
            Self::Numerical(e) => write!(f, "numerical failure: {e:#}"),
            Self::Tolerance(v) => {
                writeln!(f, "{} reproduction check(s) outside tolerance:", v.len())?;
                for line in v {
                    writeln!(f, "  {line}")?;
                }
                Ok(())
            }
        }
    }
}

impl From<contact_ve::Error> for Failure {
    fn from(e: contact_ve::Error) -> Self {
        use contact_ve::Error as E;
        match e {
            E::InvalidParameter(_) | E::InvalidWindow(_) | E::Parse(_) | E::Io(_) | E::Csv(_) => {
                Self::Config(e.into())
            }
            _ => Self::Numerical(e.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Config(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::Config(e.into())
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;
