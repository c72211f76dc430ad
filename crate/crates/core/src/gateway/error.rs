use thiserror::Error;

use crate::audit::AuditError;
use crate::crypto::CryptoError;
use crate::policy::{DecisionReason, PolicyError};
use crate::store::StoreError;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("authentication failed for {0}")]
    Unauthenticated(String),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("override access is disabled")]
    OverrideDisabled,
    #[error("override requests must carry a justification")]
    MissingJustification,
    #[error("resource not found: {0}")]
    NotFound(String),
    #[error("role {role} is not granted on {resource}")]
    NotGranted { resource: String, role: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("integrity mismatch on {0}: decrypted digest differs from recorded digest")]
    IntegrityMismatch(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

impl GatewayError {
    pub fn denied(reason: DecisionReason) -> Self {
        GatewayError::AccessDenied(reason.as_str().to_owned())
    }

    /// Short code recorded as the audit reason for a failed request.
    pub fn code(&self) -> &'static str {
        match self {
            GatewayError::Unauthenticated(_) => "BadToken",
            GatewayError::Unauthorized(_) => "Unauthorized",
            GatewayError::AccessDenied(_) => "AccessDenied",
            GatewayError::OverrideDisabled => "OverrideDisabled",
            GatewayError::MissingJustification => "MissingJustification",
            GatewayError::NotFound(_) => "NotFound",
            GatewayError::NotGranted { .. } => "NotGranted",
            GatewayError::Conflict(_) => "Conflict",
            GatewayError::InvalidRequest(_) => "InvalidRequest",
            GatewayError::IntegrityMismatch(_) => "IntegrityMismatch",
            GatewayError::Policy(e) => match e {
                PolicyError::UnknownRole(_) => "UnknownRole",
                PolicyError::UnknownUser(_) => "UnknownUser",
                PolicyError::UnknownDelegation(_) => "UnknownDelegation",
                PolicyError::CycleError { .. } => "CycleError",
                PolicyError::SodViolation { .. } => "SodViolation",
                PolicyError::ConflictExists { .. } => "ConflictExists",
                PolicyError::NotAssigned { .. } => "NotAssigned",
                PolicyError::NotHeld { .. } => "NotHeld",
                _ => "InvalidRequest",
            },
            GatewayError::Store(e) => match e {
                StoreError::NotFound(_) => "BlobMissing",
                StoreError::NameInvalid(_) => "InvalidRequest",
                _ => "BackendUnavailable",
            },
            GatewayError::Crypto(CryptoError::UnsupportedKeySize(_)) => "InvalidRequest",
            GatewayError::Crypto(_) => "CryptoFailure",
            GatewayError::Audit(_) => "AuditFailure",
        }
    }

    /// Process exit status for the command-line tool:
    /// 1 denied, 2 invalid request, 3 backend or integrity failure, 4 not found.
    pub fn exit_code(&self) -> i32 {
        match self {
            GatewayError::Unauthenticated(_)
            | GatewayError::Unauthorized(_)
            | GatewayError::AccessDenied(_)
            | GatewayError::OverrideDisabled => 1,
            GatewayError::MissingJustification
            | GatewayError::Conflict(_)
            | GatewayError::InvalidRequest(_) => 2,
            GatewayError::NotFound(_) | GatewayError::NotGranted { .. } => 4,
            GatewayError::IntegrityMismatch(_)
            | GatewayError::Crypto(_)
            | GatewayError::Audit(_) => match self {
                GatewayError::Crypto(CryptoError::UnsupportedKeySize(_)) => 2,
                _ => 3,
            },
            GatewayError::Policy(e) => match e {
                PolicyError::SodViolation { .. }
                | PolicyError::ConflictExists { .. }
                | PolicyError::NotHeld { .. } => 1,
                PolicyError::UnknownRole(_)
                | PolicyError::UnknownUser(_)
                | PolicyError::UnknownDelegation(_)
                | PolicyError::NotAssigned { .. } => 4,
                _ => 2,
            },
            GatewayError::Store(e) => match e {
                StoreError::NotFound(_) => 4,
                StoreError::NameInvalid(_) => 2,
                _ => 3,
            },
        }
    }

    /// Status code for the HTTP service.
    pub fn http_status(&self) -> u16 {
        match self {
            GatewayError::Unauthenticated(_) => 401,
            GatewayError::Unauthorized(_)
            | GatewayError::AccessDenied(_)
            | GatewayError::OverrideDisabled => 403,
            GatewayError::MissingJustification | GatewayError::InvalidRequest(_) => 400,
            GatewayError::NotFound(_) | GatewayError::NotGranted { .. } => 404,
            GatewayError::Conflict(_) => 409,
            GatewayError::IntegrityMismatch(_) => 500,
            GatewayError::Crypto(CryptoError::UnsupportedKeySize(_)) => 400,
            GatewayError::Crypto(_) | GatewayError::Audit(_) => 500,
            GatewayError::Policy(e) => match e {
                PolicyError::SodViolation { .. }
                | PolicyError::ConflictExists { .. }
                | PolicyError::CycleError { .. }
                | PolicyError::DuplicateRoleName(_)
                | PolicyError::DuplicateUser(_) => 409,
                PolicyError::NotHeld { .. } => 403,
                PolicyError::UnknownRole(_)
                | PolicyError::UnknownUser(_)
                | PolicyError::UnknownDelegation(_)
                | PolicyError::NotAssigned { .. } => 404,
                _ => 400,
            },
            GatewayError::Store(e) => match e {
                StoreError::NotFound(_) => 404,
                StoreError::NameInvalid(_) => 400,
                _ => 503,
            },
        }
    }
}
