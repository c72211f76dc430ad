//! The storage gateway: authenticates actors, mediates every request through
//! the policy engine, runs data through the envelope-encryption layer, routes
//! sealed blobs to the public or private plane, and records each decision in
//! the audit log.
//!
//! Mutations run against a copy of the in-memory state. A mutation becomes
//! visible only after the private document has been saved and its audit entry
//! written; if either step fails the copy is discarded and any blob written on
//! its behalf is deleted again.

mod error;
mod policy_ops;
mod resources;
mod status;

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;

pub use error::GatewayError;
pub use policy_ops::RoleSummary;
pub use resources::{resource_aad, UploadStep};
pub use status::StatusReport;

use crate::audit::{
    AuditAction, AuditDecision, AuditEntry, AuditHead, AuditLog, AuditRecord, AuditSink,
};
use crate::crypto::{ModulusBits, RoleKeyPair, StoredRoleKey};
use crate::integrity::sha256;
use crate::policy::{ActorKind, Policy, RoleId, Timestamp, UserId, UserRecord};
use crate::store::{
    BlobStore, DocumentStore, MemoryBlobStore, MemoryDocumentStore, Plane, PrivateDocument,
    ResourceMeta, CUSTODIAN_KEY_ID,
};

/// Deployment parameters chosen by the administrator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemParams {
    pub default_modulus_bits: ModulusBits,
    pub override_enabled: bool,
    /// Where the public plane lives (directory or URL); informational.
    pub public_store: String,
    /// Where the private document lives; informational.
    pub private_store: String,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            default_modulus_bits: ModulusBits::Rsa2048,
            override_enabled: false,
            public_store: "memory".into(),
            private_store: "memory".into(),
        }
    }
}

/// Credentials and clock for one request.
#[derive(Debug, Clone)]
pub struct SessionContext {
    pub actor: UserId,
    pub token: String,
    pub now: Timestamp,
}

impl SessionContext {
    pub fn new(actor: impl Into<UserId>, token: impl Into<String>, now: Timestamp) -> Self {
        Self {
            actor: actor.into(),
            token: token.into(),
            now,
        }
    }

    /// Uses the system clock.
    pub fn at_now(actor: impl Into<UserId>, token: impl Into<String>) -> Self {
        Self::new(actor, token, unix_now())
    }
}

pub fn unix_now() -> Timestamp {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn token_digest(token: &str) -> String {
    hex::encode(sha256(token.as_bytes()))
}

pub(crate) fn new_token() -> Result<String, GatewayError> {
    let mut raw = [0u8; 32];
    rand::RngCore::try_fill_bytes(&mut rand::rngs::OsRng, &mut raw)
        .map_err(|_| crate::crypto::CryptoError::RandomnessUnavailable)?;
    Ok(hex::encode(raw))
}

/// Public blob store, private blob store and private document store.
pub struct Planes {
    pub public: Arc<dyn BlobStore>,
    pub private_blobs: Arc<dyn BlobStore>,
    pub documents: Box<dyn DocumentStore>,
}

impl Planes {
    pub fn in_memory() -> Self {
        Self {
            public: Arc::new(MemoryBlobStore::new()),
            private_blobs: Arc::new(MemoryBlobStore::new()),
            documents: Box::new(MemoryDocumentStore::new()),
        }
    }
}

#[derive(Clone)]
pub(crate) struct State {
    pub(crate) policy: Policy,
    pub(crate) resources: BTreeMap<String, ResourceMeta>,
    pub(crate) keys: BTreeMap<RoleId, Arc<RoleKeyPair>>,
    stored_keys: BTreeMap<RoleId, StoredRoleKey>,
}

impl State {
    fn from_document(doc: PrivateDocument) -> Result<Self, GatewayError> {
        doc.validate()?;
        let policy = Policy::from_snapshot(doc.policy)?;
        let mut keys = BTreeMap::new();
        let mut stored_keys = BTreeMap::new();
        for stored in doc.role_keys {
            let pair = RoleKeyPair::from_stored(&stored)?;
            keys.insert(stored.role.clone(), Arc::new(pair));
            stored_keys.insert(stored.role.clone(), stored);
        }
        let resources = doc
            .resources
            .into_iter()
            .map(|r| (r.resource_id.clone(), r))
            .collect();
        Ok(Self {
            policy,
            resources,
            keys,
            stored_keys,
        })
    }

    fn to_document(&self, audit_head: AuditHead) -> PrivateDocument {
        PrivateDocument {
            policy: self.policy.snapshot(),
            resources: self.resources.values().cloned().collect(),
            role_keys: self.stored_keys.values().cloned().collect(),
            audit_head,
            ..Default::default()
        }
    }

    pub(crate) fn add_key(&mut self, pair: RoleKeyPair) -> Result<(), GatewayError> {
        let stored = pair.to_stored()?;
        let role = pair.role().clone();
        self.keys.insert(role.clone(), Arc::new(pair));
        self.stored_keys.insert(role, stored);
        Ok(())
    }

    pub(crate) fn remove_key(&mut self, role: &RoleId) {
        self.keys.remove(role);
        self.stored_keys.remove(role);
    }

    pub(crate) fn custodian(&self) -> &RoleKeyPair {
        self.keys
            .get(&RoleId::from(CUSTODIAN_KEY_ID))
            .expect("custodian key is created when the gateway opens")
    }
}

/// Blob writes made on behalf of a pending mutation.
#[derive(Default)]
pub(crate) struct Effects {
    /// Delete these if the mutation does not commit.
    pub(crate) on_failure: Vec<(Plane, String)>,
    /// Delete these once the mutation has committed.
    pub(crate) after_commit: Vec<(Plane, String)>,
}

pub struct Gateway {
    params: RwLock<SystemParams>,
    public: Arc<dyn BlobStore>,
    private_blobs: Arc<dyn BlobStore>,
    documents: Box<dyn DocumentStore>,
    state: RwLock<State>,
    audit: Mutex<AuditLog>,
    upload_fault: Mutex<Option<UploadStep>>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("params", &*self.params.read().expect("poisoned"))
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// Loads (or initialises) the private document and checks that the audit
    /// log contains the entry the document was saved against.
    pub fn open(
        params: SystemParams,
        planes: Planes,
        audit: AuditLog,
    ) -> Result<Self, GatewayError> {
        let doc = planes.documents.load()?.unwrap_or_default();
        let head = doc.audit_head;
        if head.seq > 0 {
            let matches = audit
                .entries()
                .get(head.seq as usize - 1)
                .is_some_and(|e| e.entry_hash == head.hash);
            if !matches {
                return Err(crate::audit::AuditError::ChainBroken(head.seq).into());
            }
        }
        let mut state = State::from_document(doc)?;
        let needs_custodian = !state.keys.contains_key(&RoleId::from(CUSTODIAN_KEY_ID));
        if needs_custodian {
            let pair = RoleKeyPair::generate(CUSTODIAN_KEY_ID.into(), params.default_modulus_bits)?;
            state.add_key(pair)?;
            planes.documents.save(&state.to_document(audit.head()))?;
        }
        Ok(Self {
            params: RwLock::new(params),
            public: planes.public,
            private_blobs: planes.private_blobs,
            documents: planes.documents,
            state: RwLock::new(state),
            audit: Mutex::new(audit),
            upload_fault: Mutex::new(None),
        })
    }

    pub fn in_memory(params: SystemParams) -> Result<Self, GatewayError> {
        Self::open(params, Planes::in_memory(), AuditLog::in_memory())
    }

    /// Creates the first administrator. Only possible while no users exist.
    pub fn bootstrap_admin(&self, id: &str) -> Result<String, GatewayError> {
        let mut guard = self.write_state();
        if guard.policy.users().next().is_some() {
            return Err(GatewayError::Conflict("system already has users".into()));
        }
        let token = new_token()?;
        let mut next = guard.clone();
        next.policy
            .add_user(UserId::from(id), ActorKind::Admin, token_digest(&token))?;
        let head = self.lock_audit().head();
        self.documents.save(&next.to_document(head))?;
        *guard = next;
        Ok(token)
    }

    pub fn params(&self) -> SystemParams {
        self.params.read().expect("poisoned").clone()
    }

    pub fn public_store(&self) -> &Arc<dyn BlobStore> {
        &self.public
    }

    pub fn private_blob_store(&self) -> &Arc<dyn BlobStore> {
        &self.private_blobs
    }

    /// The document as it would be persisted now.
    pub fn document(&self) -> PrivateDocument {
        let head = self.lock_audit().head();
        self.read_state().to_document(head)
    }

    pub fn audit_entries(&self) -> Vec<AuditEntry> {
        self.lock_audit().entries().to_vec()
    }

    pub fn audit_verify(&self) -> crate::audit::ChainVerification {
        self.lock_audit().verify()
    }

    pub fn audit_query(
        &self,
        filter: &crate::audit::AuditFilter,
        limit: Option<usize>,
    ) -> Vec<AuditEntry> {
        self.lock_audit().query(filter, limit)
    }

    /// Swaps the audit log's sink, e.g. to simulate a failing disk.
    pub fn replace_audit_sink(&self, sink: Box<dyn AuditSink>) -> Box<dyn AuditSink> {
        self.lock_audit().replace_sink(sink)
    }

    /// Makes the next upload fail at `step`, as a backend fault would.
    pub fn inject_upload_fault(&self, step: UploadStep) {
        *self.upload_fault.lock().expect("poisoned") = Some(step);
    }

    // ----- internals -----

    fn read_state(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().expect("poisoned")
    }

    fn write_state(&self) -> RwLockWriteGuard<'_, State> {
        self.state.write().expect("poisoned")
    }

    fn lock_audit(&self) -> MutexGuard<'_, AuditLog> {
        self.audit.lock().expect("poisoned")
    }

    pub(crate) fn plane(&self, plane: Plane) -> &dyn BlobStore {
        match plane {
            Plane::Public => self.public.as_ref(),
            Plane::Private => self.private_blobs.as_ref(),
        }
    }

    pub(crate) fn fault(&self, step: UploadStep) -> Result<(), GatewayError> {
        let mut armed = self.upload_fault.lock().expect("poisoned");
        if *armed == Some(step) {
            *armed = None;
            return Err(crate::store::StoreError::unavailable(format!(
                "injected fault at {step:?}"
            ))
            .into());
        }
        Ok(())
    }

    fn delete_blobs(&self, blobs: &[(Plane, String)]) {
        for (plane, name) in blobs {
            // best effort: an unreferenced blob is unreachable through metadata
            let _ = self.plane(*plane).delete(name);
        }
    }

    /// Verifies the bearer token. A failure is audited as `AuthFail`.
    fn authenticate(
        &self,
        state: &State,
        ctx: &SessionContext,
    ) -> Result<UserRecord, GatewayError> {
        let presented = token_digest(&ctx.token);
        match state.policy.user(&ctx.actor) {
            Ok(user) if bool::from(user.token_digest.as_bytes().ct_eq(presented.as_bytes())) => {
                Ok(user.clone())
            }
            _ => {
                let record = AuditRecord::new(
                    ctx.now,
                    &ctx.actor,
                    AuditAction::AuthFail,
                    None,
                    AuditDecision::Deny,
                    "BadToken",
                );
                self.lock_audit().append(record)?;
                Err(GatewayError::Unauthenticated(ctx.actor.to_string()))
            }
        }
    }

    /// Audits a refused request and hands the error back. If the audit write
    /// itself fails, that failure is returned instead.
    fn deny(
        &self,
        ctx: &SessionContext,
        action: AuditAction,
        resource: Option<&str>,
        err: GatewayError,
    ) -> GatewayError {
        let reason = match &err {
            GatewayError::AccessDenied(r) => r.clone(),
            other => other.code().to_owned(),
        };
        let record = AuditRecord::new(
            ctx.now,
            &ctx.actor,
            action,
            resource,
            AuditDecision::Deny,
            reason,
        );
        match self.lock_audit().append(record) {
            Ok(_) => err,
            Err(audit_err) => audit_err.into(),
        }
    }

    /// Runs a read-only request: authenticate, evaluate, audit the outcome.
    pub(crate) fn read<T>(
        &self,
        ctx: &SessionContext,
        action: AuditAction,
        resource: Option<&str>,
        override_flag: bool,
        f: impl FnOnce(&UserRecord, &State) -> Result<(T, String), GatewayError>,
    ) -> Result<T, GatewayError> {
        let state = self.read_state();
        let user = self.authenticate(&state, ctx)?;
        match f(&user, &state) {
            Ok((value, reason)) => {
                let mut record = AuditRecord::new(
                    ctx.now,
                    &ctx.actor,
                    action,
                    resource,
                    AuditDecision::Allow,
                    reason,
                );
                if override_flag {
                    record = record.with_override();
                }
                self.lock_audit().append(record)?;
                Ok(value)
            }
            Err(e) => Err(self.deny(ctx, action, resource, e)),
        }
    }

    /// Runs a mutating request against a copy of the state and commits it.
    pub(crate) fn mutate<T>(
        &self,
        ctx: &SessionContext,
        action: AuditAction,
        resource: Option<&str>,
        f: impl FnOnce(&UserRecord, &mut State, &mut Effects) -> Result<(T, String), GatewayError>,
    ) -> Result<T, GatewayError> {
        let mut guard = self.write_state();
        let user = self.authenticate(&guard, ctx)?;
        let mut next = guard.clone();
        let mut fx = Effects::default();
        let (value, reason) = match f(&user, &mut next, &mut fx) {
            Ok(v) => v,
            Err(e) => {
                self.delete_blobs(&fx.on_failure);
                return Err(self.deny(ctx, action, resource, e));
            }
        };

        let mut audit = self.lock_audit();
        let record = AuditRecord::new(
            ctx.now,
            &ctx.actor,
            action,
            resource,
            AuditDecision::Allow,
            reason,
        );
        let entry = audit.prepare(record)?;
        let head = AuditHead {
            seq: entry.seq,
            hash: entry.entry_hash,
        };
        let saved = self
            .fault(UploadStep::CommitMetadata)
            .and_then(|()| Ok(self.documents.save(&next.to_document(head))?));
        if let Err(e) = saved {
            self.delete_blobs(&fx.on_failure);
            let record = AuditRecord::new(
                ctx.now,
                &ctx.actor,
                action,
                resource,
                AuditDecision::Deny,
                e.code(),
            );
            audit.append(record)?;
            return Err(e);
        }
        if let Err(e) = audit.commit(entry) {
            // put the previous document back so it matches the log again
            let _ = self.documents.save(&guard.to_document(audit.head()));
            self.delete_blobs(&fx.on_failure);
            return Err(e.into());
        }
        drop(audit);
        *guard = next;
        drop(guard);
        self.delete_blobs(&fx.after_commit);
        Ok(value)
    }

    pub(crate) fn set_override_enabled_param(&self, enabled: bool) {
        self.params.write().expect("poisoned").override_enabled = enabled;
    }
}

pub(crate) fn require_kind(
    user: &UserRecord,
    allowed: &[ActorKind],
    what: &str,
) -> Result<(), GatewayError> {
    if allowed.contains(&user.kind) {
        Ok(())
    } else {
        Err(GatewayError::Unauthorized(format!(
            "{} actors may not {what}",
            user.kind
        )))
    }
}
