use std::fmt;
use std::io::ErrorKind;

use medthink::Error as Core;
use medthink_annotate::Error as Annotate;

/// Process exit statuses. Each failure class has its own code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Failure = 1,
    Usage = 2,
    MissingFile = 3,
    BadConfig = 4,
    Divergence = 5,
    Dataset = 6,
    Checkpoint = 7,
    Generator = 8,
    Conflict = 9,
}

impl Exit {
    pub fn kind(self) -> &'static str {
        match self {
            Exit::Ok => "ok",
            Exit::Failure => "failure",
            Exit::Usage => "usage",
            Exit::MissingFile => "missing_file",
            Exit::BadConfig => "bad_config",
            Exit::Divergence => "divergence",
            Exit::Dataset => "dataset",
            Exit::Checkpoint => "checkpoint",
            Exit::Generator => "generator",
            Exit::Conflict => "conflict",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        Self { exit, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Exit::Usage, message)
    }

    /// The single stderr line: a JSON object with the error kind, exit code
    /// and message.
    pub fn line(&self) -> String {
        serde_json::json!({ "error": self.exit.kind(), "code": self.exit as i32, "message": self.message }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn io_exit(e: &std::io::Error) -> Exit {
    if e.kind() == ErrorKind::NotFound {
        Exit::MissingFile
    } else {
        Exit::Failure
    }
}

fn core_exit(e: &Core) -> Exit {
    match e {
        Core::Io { source, .. } => io_exit(source),
        Core::Config(_) => Exit::BadConfig,
        Core::Divergence { .. } => Exit::Divergence,
        Core::Dataset(_) | Core::Parse { .. } | Core::Geometry { .. } | Core::Length { .. } | Core::Integrity(_) => {
            Exit::Dataset
        }
        Core::Checkpoint(_) | Core::Vocabulary { .. } => Exit::Checkpoint,
        _ => Exit::Failure,
    }
}

impl From<Core> for CliError {
    fn from(e: Core) -> Self {
        CliError::new(core_exit(&e), e.to_string())
    }
}

impl From<Annotate> for CliError {
    fn from(e: Annotate) -> Self {
        let exit = match &e {
            Annotate::Core(inner) => core_exit(inner),
            Annotate::Io { source, .. } => io_exit(source),
            Annotate::Config(_) => Exit::BadConfig,
            Annotate::Generator(_) => Exit::Generator,
            Annotate::Conflict { .. } | Annotate::Busy(_) | Annotate::Unresolved { .. } => Exit::Conflict,
            Annotate::NotFound(_) | Annotate::Log { .. } | Annotate::Contract(_) => Exit::Dataset,
        };
        CliError::new(exit, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(io_exit(&e), e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
