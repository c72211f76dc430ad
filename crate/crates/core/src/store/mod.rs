//! The two storage planes.
//!
//! The public plane only ever receives sealed blobs. The private plane holds
//! the state document (policy, role keys, resource metadata, audit head) and
//! the sealed blobs of confidential resources.

mod blob;
mod private;
mod remote;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blob::{BlobStore, FsBlobStore, MemoryBlobStore};
pub use private::{
    Classification, DocumentStore, FileDocumentStore, MemoryDocumentStore, PrivateDocument,
    ResourceMeta, StagedDocument, CUSTODIAN_KEY_ID, DOCUMENT_VERSION,
};
pub use remote::{BlobServer, RemoteBlobStore};

pub const MAX_NAME_LEN: usize = 255;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid blob name {0:?}")]
    NameInvalid(String),
    #[error("blob not found: {0}")]
    NotFound(String),
    #[error("storage backend unavailable: {message}")]
    BackendUnavailable {
        message: String,
        retry_after: Option<Duration>,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("private document failed validation: {0}")]
    Validation(String),
    #[error("malformed private document: {0}")]
    Format(String),
    #[error("unsupported private document version {0}")]
    UnsupportedVersion(u64),
    #[error("private store is locked by another writer")]
    Locked,
}

impl StoreError {
    pub fn unavailable(message: impl Into<String>) -> Self {
        StoreError::BackendUnavailable {
            message: message.into(),
            retry_after: None,
        }
    }
}

/// Lowercase ASCII alphanumerics, `-` and `.`, 1 to 255 characters, and not `.` or `..`.
pub fn validate_name(name: &str) -> Result<(), StoreError> {
    let ok = !name.is_empty()
        && name.len() <= MAX_NAME_LEN
        && name != "."
        && name != ".."
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-' || b == b'.');
    if ok {
        Ok(())
    } else {
        Err(StoreError::NameInvalid(name.to_owned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Plane {
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlobRef {
    pub store: Plane,
    pub name: String,
}

/// `<resource id, lowercased>.<version>.blob`
pub fn blob_name(resource_id: &str, version: u64) -> String {
    format!("{}.{}.blob", resource_id.to_ascii_lowercase(), version)
}

pub fn put_blob(
    store: &dyn BlobStore,
    plane: Plane,
    name: &str,
    bytes: &[u8],
) -> Result<BlobRef, StoreError> {
    validate_name(name)?;
    store.put(name, bytes)?;
    Ok(BlobRef {
        store: plane,
        name: name.to_owned(),
    })
}

pub fn get_blob(store: &dyn BlobStore, name: &str) -> Result<Vec<u8>, StoreError> {
    validate_name(name)?;
    store.get(name)
}
