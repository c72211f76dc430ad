use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use super::{blob_name, BlobRef, Plane, StoreError};
use crate::audit::AuditHead;
use crate::crypto::{StoredRoleKey, WrappedKey};
use crate::policy::{Policy, PolicySnapshot, RoleId, Timestamp, UserId};

pub const DOCUMENT_VERSION: u64 = 1;

/// Key-holder id of the gateway's own escrow key pair. Never a policy role.
pub const CUSTODIAN_KEY_ID: &str = "@custodian";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Public,
    Confidential,
}

impl Classification {
    pub fn plane(self) -> Plane {
        match self {
            Classification::Public => Plane::Public,
            Classification::Confidential => Plane::Private,
        }
    }
}

impl std::str::FromStr for Classification {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "public" => Ok(Classification::Public),
            "confidential" => Ok(Classification::Confidential),
            _ => Err(format!("unknown classification {s:?}")),
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Classification::Public => "Public",
            Classification::Confidential => "Confidential",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceMeta {
    pub resource_id: String,
    pub owner: UserId,
    pub classification: Classification,
    pub blob_ref: BlobRef,
    /// Lowercase hex.
    pub plaintext_sha256: String,
    pub size_bytes: u64,
    pub version: u64,
    /// One wrapping of the data key per granted role.
    pub wrapped_keys: BTreeMap<RoleId, WrappedKey>,
    /// The same data key wrapped under the custodian key; serves owner,
    /// admin and override reads and re-wrapping when granting.
    pub custodian_key: WrappedKey,
    pub created_at: Timestamp,
}

/// Everything the private plane persists besides blobs and the audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivateDocument {
    pub version: u64,
    #[serde(flatten)]
    pub policy: PolicySnapshot,
    pub resources: Vec<ResourceMeta>,
    pub role_keys: Vec<StoredRoleKey>,
    pub audit_head: AuditHead,
}

impl Default for PrivateDocument {
    fn default() -> Self {
        Self {
            version: DOCUMENT_VERSION,
            policy: PolicySnapshot::default(),
            resources: Vec::new(),
            role_keys: Vec::new(),
            audit_head: AuditHead::default(),
        }
    }
}

fn is_valid_resource_id(id: &str) -> bool {
    let b = id.as_bytes();
    !b.is_empty()
        && b.len() <= 200
        && b[0].is_ascii_alphanumeric()
        && b.iter()
            .all(|c| c.is_ascii_alphanumeric() || *c == b'-' || *c == b'.')
}

impl PrivateDocument {
    /// Resource ids: ASCII alphanumerics, `-` and `.`, starting alphanumeric.
    /// Uniqueness is case-insensitive because blob names are lowercased.
    pub fn valid_resource_id(id: &str) -> bool {
        is_valid_resource_id(id)
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |m: String| Err(StoreError::Validation(m));
        if self.version != DOCUMENT_VERSION {
            return Err(StoreError::UnsupportedVersion(self.version));
        }
        let policy = Policy::from_snapshot(self.policy.clone())
            .map_err(|e| StoreError::Validation(e.to_string()))?;

        let mut keyed = BTreeSet::new();
        for k in &self.role_keys {
            if k.role.as_str() != CUSTODIAN_KEY_ID && policy.role(&k.role).is_err() {
                return bad(format!("key pair for unknown role {}", k.role));
            }
            if !keyed.insert(k.role.clone()) {
                return bad(format!("duplicate key pair for {}", k.role));
            }
        }
        if !self.resources.is_empty() && !keyed.contains(&RoleId::from(CUSTODIAN_KEY_ID)) {
            return bad("resources exist but no custodian key".into());
        }

        let mut ids = BTreeSet::new();
        for r in &self.resources {
            let id = &r.resource_id;
            if !is_valid_resource_id(id) {
                return bad(format!("invalid resource id {id:?}"));
            }
            if !ids.insert(id.to_ascii_lowercase()) {
                return bad(format!("duplicate resource id {id}"));
            }
            if policy.user(&r.owner).is_err() {
                return bad(format!("{id}: unknown owner {}", r.owner));
            }
            if r.blob_ref.store != r.classification.plane() {
                return bad(format!(
                    "{id}: {} resource routed to {:?} store",
                    r.classification, r.blob_ref.store
                ));
            }
            if r.version == 0 || r.blob_ref.name != blob_name(id, r.version) {
                return bad(format!(
                    "{id}: blob name does not match version {}",
                    r.version
                ));
            }
            if r.plaintext_sha256.len() != 64
                || !r
                    .plaintext_sha256
                    .bytes()
                    .all(|c| c.is_ascii_digit() || (b'a'..=b'f').contains(&c))
            {
                return bad(format!("{id}: plaintext digest is not 64 lowercase hex"));
            }
            if r.custodian_key.role.as_str() != CUSTODIAN_KEY_ID {
                return bad(format!(
                    "{id}: custodian wrapping held by {}",
                    r.custodian_key.role
                ));
            }
            for (role, wk) in &r.wrapped_keys {
                if &wk.role != role {
                    return bad(format!(
                        "{id}: wrapped key for {} filed under {role}",
                        wk.role
                    ));
                }
                if !keyed.contains(role) {
                    return bad(format!("{id}: granted role {role} has no key pair"));
                }
                if wk.key_id != r.custodian_key.key_id {
                    return bad(format!("{id}: wrapped keys disagree on data key id"));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>, StoreError> {
        self.validate()?;
        serde_json::to_vec_pretty(self).map_err(|e| StoreError::Format(e.to_string()))
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, StoreError> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| StoreError::Format(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| StoreError::Format("missing numeric version field".into()))?;
        if version != DOCUMENT_VERSION {
            return Err(StoreError::UnsupportedVersion(version));
        }
        let doc: Self =
            serde_json::from_value(value).map_err(|e| StoreError::Format(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    /// Size of the serialized document in bytes.
    pub fn encoded_len(&self) -> Result<u64, StoreError> {
        Ok(self.to_json()?.len() as u64)
    }
}

/// Persistence for the private-state document. Saves replace the whole
/// document atomically; loads see either the old or the new version.
pub trait DocumentStore: Send + Sync {
    /// Validates, then atomically replaces the stored document.
    fn save(&self, doc: &PrivateDocument) -> Result<(), StoreError>;
    /// `Ok(None)` when nothing has been saved yet.
    fn load(&self) -> Result<Option<PrivateDocument>, StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryDocumentStore {
    encoded: Mutex<Option<Vec<u8>>>,
}

impl MemoryDocumentStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl DocumentStore for MemoryDocumentStore {
    fn save(&self, doc: &PrivateDocument) -> Result<(), StoreError> {
        let bytes = doc.to_json()?;
        *self.encoded.lock().expect("poisoned") = Some(bytes);
        Ok(())
    }

    fn load(&self) -> Result<Option<PrivateDocument>, StoreError> {
        let guard = self.encoded.lock().expect("poisoned");
        guard.as_deref().map(PrivateDocument::from_json).transpose()
    }
}

/// JSON document on disk, replaced via temp file + rename. A writer holds an
/// exclusive advisory lock on `<path>.lock` for its whole lifetime.
#[derive(Debug)]
pub struct FileDocumentStore {
    path: PathBuf,
    _lock: Option<File>,
}

/// A fully written and synced temporary copy awaiting its rename.
pub struct StagedDocument {
    tmp: NamedTempFile,
    target: PathBuf,
}

impl StagedDocument {
    pub fn temp_path(&self) -> &Path {
        self.tmp.path()
    }

    pub fn commit(self) -> Result<(), StoreError> {
        self.tmp
            .persist(&self.target)
            .map_err(|e| StoreError::Io(e.error))?;
        if let Some(dir) = self.target.parent() {
            // make the rename itself durable
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
        }
        Ok(())
    }

    /// Leaves the temporary file on disk without renaming, like a crash would.
    pub fn abandon(self) -> PathBuf {
        self.tmp.into_temp_path().keep().expect("keep temp file")
    }
}

impl FileDocumentStore {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(Self::lock_path(&path))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(StoreError::Locked),
            Err(fs::TryLockError::Error(e)) => return Err(e.into()),
        }
        Ok(Self {
            path,
            _lock: Some(lock),
        })
    }

    /// For inspection only; `save` on a reader bypasses the writer lock.
    pub fn open_read_only(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            _lock: None,
        }
    }

    fn lock_path(path: &Path) -> PathBuf {
        let mut p = path.as_os_str().to_owned();
        p.push(".lock");
        PathBuf::from(p)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn stage(&self, doc: &PrivateDocument) -> Result<StagedDocument, StoreError> {
        let bytes = doc.to_json()?;
        let dir = self.path.parent().unwrap_or(Path::new("."));
        let mut tmp = tempfile::Builder::new()
            .prefix(".state-")
            .suffix(".tmp")
            .tempfile_in(dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        Ok(StagedDocument {
            tmp,
            target: self.path.clone(),
        })
    }
}

impl DocumentStore for FileDocumentStore {
    fn save(&self, doc: &PrivateDocument) -> Result<(), StoreError> {
        self.stage(doc)?.commit()
    }

    fn load(&self) -> Result<Option<PrivateDocument>, StoreError> {
        match fs::read(&self.path) {
            Ok(bytes) => PrivateDocument::from_json(&bytes).map(Some),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
