use std::io;

use ltcas_core::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    /// An upstream stage has not produced the artifact this stage needs.
    Dependency {
        stage: &'static str,
        detail: String,
    },
    /// An artifact no longer matches the checksum recorded in the manifest.
    Tampered {
        artifact: String,
    },
    Core(CoreError),
    Io(io::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 0 success, 2 config, 3 dependency/integrity, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Dependency { .. } | CliError::Tampered { .. } => 3,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::Profile(_) => 2,
                CoreError::Format(_) | CoreError::Corruption(_) | CoreError::Pool { .. } => 3,
                CoreError::Numeric(_) | CoreError::NotPsd(_) | CoreError::Divergence { .. } => 4,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Dependency { stage, detail } => {
                write!(f, "missing dependency: run `{stage}` first ({detail})")
            }
            CliError::Tampered { artifact } => {
                write!(
                    f,
                    "artifact {artifact} does not match its recorded checksum"
                )
            }
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(CoreError::Format(e.to_string()))
    }
}
