use hrbac_core::audit::AuditError;
use hrbac_core::bench::BenchError;
use hrbac_core::gateway::GatewayError;
use hrbac_core::store::StoreError;
use thiserror::Error;

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    /// Authentication failed or the request was refused by policy.
    pub const DENIED: i32 = 1;
    /// Bad arguments, configuration or request.
    pub const USAGE: i32 = 2;
    /// Storage backend, integrity, crypto or audit failure.
    pub const FAILURE: i32 = 3;
    /// The named resource, role, user or delegation does not exist.
    pub const NOT_FOUND: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("no gateway at {0}; run `hrbac init` first")]
    NotInitialized(String),
    #[error("a gateway already exists at {0}")]
    AlreadyInitialized(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Gateway(e) => e.exit_code(),
            CliError::Usage(_)
            | CliError::Config(_)
            | CliError::NotInitialized(_)
            | CliError::AlreadyInitialized(_) => exit::USAGE,
            CliError::Io(_) | CliError::Audit(_) => exit::FAILURE,
            CliError::Store(StoreError::NotFound(_)) => exit::NOT_FOUND,
            CliError::Store(StoreError::NameInvalid(_)) => exit::USAGE,
            CliError::Store(_) => exit::FAILURE,
            CliError::Bench(e) => match e {
                BenchError::SizesNotAscending
                | BenchError::TooFewRepetitions(_)
                | BenchError::InsufficientMemory { .. }
                | BenchError::TooFewRows(_) => exit::USAGE,
                BenchError::ImpureTiming | BenchError::Crypto(_) | BenchError::Store(_) => {
                    exit::FAILURE
                }
            },
        }
    }

    /// Stable machine-readable class name.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Gateway(e) => e.code(),
            CliError::Usage(_) => "Usage",
            CliError::Config(_) => "Config",
            CliError::NotInitialized(_) => "NotInitialized",
            CliError::AlreadyInitialized(_) => "AlreadyInitialized",
            CliError::Io(_) => "Io",
            CliError::Store(StoreError::Locked) => "Locked",
            CliError::Store(_) => "BackendUnavailable",
            CliError::Audit(_) => "AuditFailure",
            CliError::Bench(_) => "Bench",
        }
    }
}
