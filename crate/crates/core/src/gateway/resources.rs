use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{require_kind, Gateway, GatewayError, SessionContext, State};
use crate::audit::AuditAction;
use crate::crypto::{unwrap_key, wrap_key, DataKey, RoleKeyPair, SealedBlob, WrappedKey};
use crate::integrity::sha256;
use crate::policy::{Action, ActorKind, DecisionReason, Permission, RoleId, UserRecord};
use crate::store::{
    blob_name, put_blob, Classification, PrivateDocument, ResourceMeta, CUSTODIAN_KEY_ID,
};

/// The stages of an upload, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UploadStep {
    GenerateKey,
    Seal,
    WrapKeys,
    StoreBlob,
    CommitMetadata,
}

impl UploadStep {
    pub const ALL: [UploadStep; 5] = [
        UploadStep::GenerateKey,
        UploadStep::Seal,
        UploadStep::WrapKeys,
        UploadStep::StoreBlob,
        UploadStep::CommitMetadata,
    ];
}

/// Associated data binding a sealed blob to its resource and version.
pub fn resource_aad(resource_id: &str, version: u64) -> Vec<u8> {
    let mut aad = resource_id.as_bytes().to_vec();
    aad.extend_from_slice(&version.to_be_bytes());
    aad
}

enum KeyPath<'a> {
    Role(&'a RoleId),
    Custodian,
}

fn custodian_id() -> RoleId {
    RoleId::from(CUSTODIAN_KEY_ID)
}

fn not_found(id: &str) -> GatewayError {
    GatewayError::NotFound(id.to_owned())
}

fn require_owner_or_admin(user: &UserRecord, meta: &ResourceMeta) -> Result<(), GatewayError> {
    if meta.owner == user.id || user.kind == ActorKind::Admin {
        Ok(())
    } else {
        Err(GatewayError::Unauthorized(format!(
            "only the owner or an administrator may manage {}",
            meta.resource_id
        )))
    }
}

fn read_permission(resource_id: &str) -> Result<Permission, GatewayError> {
    Ok(Permission::new(resource_id, Action::Read)?)
}

fn wrap_for(
    state: &State,
    dk: &DataKey,
    roles: impl IntoIterator<Item = RoleId>,
) -> Result<(BTreeMap<RoleId, WrappedKey>, WrappedKey), GatewayError> {
    let mut wrapped = BTreeMap::new();
    for role in roles {
        let pair = role_key(state, &role)?;
        wrapped.insert(role.clone(), wrap_key(dk, &role, pair.public_key())?);
    }
    let custodian = wrap_key(dk, &custodian_id(), state.custodian().public_key())?;
    Ok((wrapped, custodian))
}

fn role_key<'a>(state: &'a State, role: &RoleId) -> Result<&'a RoleKeyPair, GatewayError> {
    state.policy.role(role)?;
    state
        .keys
        .get(role)
        .map(|k| k.as_ref())
        .ok_or(GatewayError::Crypto(
            crate::crypto::CryptoError::UnwrapFailure,
        ))
}

impl Gateway {
    /// Encrypts `plaintext` under a fresh data key, wraps that key for each
    /// role in `grant_roles` (ids or names), stores the blob on the plane its
    /// classification selects and records the metadata.
    ///
    /// Uploading to an existing id replaces its content: the owner, an
    /// administrator or a holder of `Write` on the id may do so.
    pub fn upload(
        &self,
        ctx: &SessionContext,
        resource_id: &str,
        plaintext: &[u8],
        classification: Classification,
        grant_roles: &[&str],
    ) -> Result<ResourceMeta, GatewayError> {
        self.mutate(
            ctx,
            AuditAction::Upload,
            Some(resource_id),
            |user, st, fx| {
                if !PrivateDocument::valid_resource_id(resource_id) {
                    return Err(GatewayError::InvalidRequest(format!(
                        "invalid resource id {resource_id:?}"
                    )));
                }
                if grant_roles.is_empty() {
                    return Err(GatewayError::InvalidRequest(
                        "at least one role must be granted".into(),
                    ));
                }
                require_kind(user, &[ActorKind::DataOwner, ActorKind::Admin], "upload")?;
                let previous = st.resources.get(resource_id).cloned();
                match &previous {
                    None => {
                        if st
                            .resources
                            .keys()
                            .any(|k| k.eq_ignore_ascii_case(resource_id))
                        {
                            return Err(GatewayError::Conflict(format!(
                                "{resource_id} collides with an existing id"
                            )));
                        }
                    }
                    Some(old) if old.owner != user.id && user.kind != ActorKind::Admin => {
                        let d = st.policy.check_access(
                            &user.id,
                            resource_id,
                            Action::Write,
                            ctx.now,
                        )?;
                        if !d.allowed() {
                            return Err(GatewayError::denied(d.reason()));
                        }
                    }
                    Some(_) => {}
                }
                let mut roles = Vec::with_capacity(grant_roles.len());
                for r in grant_roles {
                    let id = st.policy.resolve_role(r)?.id.clone();
                    role_key(st, &id)?;
                    if !roles.contains(&id) {
                        roles.push(id);
                    }
                }
                let version = previous.as_ref().map_or(1, |m| m.version + 1);

                self.fault(UploadStep::GenerateKey)?;
                let dk = DataKey::generate()?;
                self.fault(UploadStep::Seal)?;
                let sealed = SealedBlob::seal(plaintext, &dk, &resource_aad(resource_id, version))?;
                self.fault(UploadStep::WrapKeys)?;
                let (wrapped_keys, custodian_key) = wrap_for(st, &dk, roles.iter().cloned())?;
                self.fault(UploadStep::StoreBlob)?;
                let plane = classification.plane();
                let name = blob_name(resource_id, version);
                let blob_ref = put_blob(self.plane(plane), plane, &name, &sealed.to_bytes())?;
                fx.on_failure.push((plane, name));

                if let Some(old) = &previous {
                    fx.after_commit
                        .push((old.blob_ref.store, old.blob_ref.name.clone()));
                    for role in old.wrapped_keys.keys().filter(|r| !roles.contains(r)) {
                        st.policy
                            .revoke_permission(role, &read_permission(resource_id)?)?;
                    }
                }
                for role in &roles {
                    st.policy
                        .grant_permission(role, read_permission(resource_id)?)?;
                }
                let meta = ResourceMeta {
                    resource_id: resource_id.to_owned(),
                    owner: previous
                        .as_ref()
                        .map_or_else(|| user.id.clone(), |m| m.owner.clone()),
                    classification,
                    blob_ref,
                    plaintext_sha256: hex::encode(sha256(plaintext)),
                    size_bytes: plaintext.len() as u64,
                    version,
                    wrapped_keys,
                    custodian_key,
                    created_at: previous.as_ref().map_or(ctx.now, |m| m.created_at),
                };
                st.resources.insert(resource_id.to_owned(), meta.clone());
                let reason = if previous.is_some() {
                    "Replaced"
                } else {
                    "Stored"
                };
                Ok((meta, reason.to_owned()))
            },
        )
    }

    /// Returns the plaintext if the caller owns the resource, or holds `Read`
    /// on it through a role the resource's key is wrapped for.
    pub fn download(
        &self,
        ctx: &SessionContext,
        resource_id: &str,
    ) -> Result<Vec<u8>, GatewayError> {
        self.read(
            ctx,
            AuditAction::Download,
            Some(resource_id),
            false,
            |user, st| {
                let meta = st
                    .resources
                    .get(resource_id)
                    .ok_or_else(|| not_found(resource_id))?;
                if meta.owner == user.id {
                    let plain = self.decrypt(st, meta, KeyPath::Custodian)?;
                    return Ok((plain, "Owner".to_owned()));
                }
                let d = st
                    .policy
                    .check_access(&user.id, resource_id, Action::Read, ctx.now)?;
                if !d.allowed() {
                    return Err(GatewayError::denied(d.reason()));
                }
                let effective = st.policy.effective_roles(&user.id, ctx.now)?;
                let role = meta
                    .wrapped_keys
                    .keys()
                    .find(|r| effective.contains(*r))
                    .ok_or_else(|| GatewayError::AccessDenied("NoWrappedKey".into()))?;
                let plain = self.decrypt(st, meta, KeyPath::Role(role))?;
                Ok((plain, DecisionReason::Granted.as_str().to_owned()))
            },
        )
    }

    /// Emergency read that bypasses role checks. Requires an override actor,
    /// an enabled override switch and a non-empty justification; the access is
    /// flagged in the audit log.
    pub fn override_download(
        &self,
        ctx: &SessionContext,
        resource_id: &str,
        justification: &str,
    ) -> Result<Vec<u8>, GatewayError> {
        let enabled = self.params().override_enabled;
        self.read(
            ctx,
            AuditAction::Override,
            Some(resource_id),
            true,
            |user, st| {
                require_kind(user, &[ActorKind::Override], "use override access")?;
                if !enabled {
                    return Err(GatewayError::OverrideDisabled);
                }
                if justification.trim().is_empty() {
                    return Err(GatewayError::MissingJustification);
                }
                let meta = st
                    .resources
                    .get(resource_id)
                    .ok_or_else(|| not_found(resource_id))?;
                let plain = self.decrypt(st, meta, KeyPath::Custodian)?;
                Ok((plain, format!("override: {}", justification.trim())))
            },
        )
    }

    /// Wraps the resource's data key for one more role. Idempotent.
    pub fn grant_resource_access(
        &self,
        ctx: &SessionContext,
        resource_id: &str,
        role: &str,
    ) -> Result<(), GatewayError> {
        self.mutate(ctx, AuditAction::Grant, Some(resource_id), |user, st, _| {
            let meta = st
                .resources
                .get(resource_id)
                .ok_or_else(|| not_found(resource_id))?;
            require_owner_or_admin(user, meta)?;
            let role = st.policy.resolve_role(role)?.id.clone();
            let pair = role_key(st, &role)?;
            let already = meta.wrapped_keys.contains_key(&role);
            if !already {
                let dk = unwrap_key(&meta.custodian_key, st.custodian().private_key())?;
                let wk = wrap_key(&dk, &role, pair.public_key())?;
                let meta = st.resources.get_mut(resource_id).expect("checked above");
                meta.wrapped_keys.insert(role.clone(), wk);
            }
            st.policy
                .grant_permission(&role, read_permission(resource_id)?)?;
            let reason = if already { "AlreadyGranted" } else { "Granted" };
            Ok(((), format!("{reason} {role}")))
        })
    }

    /// Removes a role's wrapped key and its `Read` permission on the resource.
    pub fn revoke_resource_access(
        &self,
        ctx: &SessionContext,
        resource_id: &str,
        role: &str,
    ) -> Result<(), GatewayError> {
        self.mutate(
            ctx,
            AuditAction::Revoke,
            Some(resource_id),
            |user, st, _| {
                let meta = st
                    .resources
                    .get(resource_id)
                    .ok_or_else(|| not_found(resource_id))?;
                require_owner_or_admin(user, meta)?;
                let role = st.policy.resolve_role(role)?.id.clone();
                if !meta.wrapped_keys.contains_key(&role) {
                    return Err(GatewayError::NotGranted {
                        resource: resource_id.to_owned(),
                        role: role.to_string(),
                    });
                }
                st.resources
                    .get_mut(resource_id)
                    .expect("checked above")
                    .wrapped_keys
                    .remove(&role);
                st.policy
                    .revoke_permission(&role, &read_permission(resource_id)?)?;
                Ok(((), format!("Revoked {role}")))
            },
        )
    }

    /// Re-encrypts the resource under a new data key and version. Previously
    /// released data keys no longer open the stored blob.
    pub fn rotate_resource_key(
        &self,
        ctx: &SessionContext,
        resource_id: &str,
    ) -> Result<ResourceMeta, GatewayError> {
        self.mutate(
            ctx,
            AuditAction::Rotate,
            Some(resource_id),
            |user, st, fx| {
                let old = st
                    .resources
                    .get(resource_id)
                    .cloned()
                    .ok_or_else(|| not_found(resource_id))?;
                require_owner_or_admin(user, &old)?;
                let plain = self.decrypt(st, &old, KeyPath::Custodian)?;
                let version = old.version + 1;
                let dk = DataKey::generate()?;
                let sealed = SealedBlob::seal(&plain, &dk, &resource_aad(resource_id, version))?;
                let (wrapped_keys, custodian_key) =
                    wrap_for(st, &dk, old.wrapped_keys.keys().cloned())?;
                let plane = old.classification.plane();
                let name = blob_name(resource_id, version);
                let blob_ref = put_blob(self.plane(plane), plane, &name, &sealed.to_bytes())?;
                fx.on_failure.push((plane, name));
                fx.after_commit
                    .push((old.blob_ref.store, old.blob_ref.name.clone()));
                let meta = ResourceMeta {
                    blob_ref,
                    version,
                    wrapped_keys,
                    custodian_key,
                    ..old
                };
                st.resources.insert(resource_id.to_owned(), meta.clone());
                Ok((meta, format!("Rotated to version {version}")))
            },
        )
    }

    /// Metadata of one resource, for its owner or an administrator.
    pub fn resource_meta(
        &self,
        ctx: &SessionContext,
        resource_id: &str,
    ) -> Result<ResourceMeta, GatewayError> {
        let st = self.read_state();
        let user = self.authenticate(&st, ctx)?;
        let meta = st
            .resources
            .get(resource_id)
            .ok_or_else(|| not_found(resource_id))?;
        require_owner_or_admin(&user, meta)?;
        Ok(meta.clone())
    }

    /// Resources the caller owns; administrators and role managers see all.
    pub fn list_resources(&self, ctx: &SessionContext) -> Result<Vec<ResourceMeta>, GatewayError> {
        let st = self.read_state();
        let user = self.authenticate(&st, ctx)?;
        let all = matches!(user.kind, ActorKind::Admin | ActorKind::RoleManager);
        Ok(st
            .resources
            .values()
            .filter(|m| all || m.owner == user.id)
            .cloned()
            .collect())
    }

    fn decrypt(
        &self,
        st: &State,
        meta: &ResourceMeta,
        path: KeyPath<'_>,
    ) -> Result<Vec<u8>, GatewayError> {
        let (wrapped, pair) = match path {
            KeyPath::Role(role) => (&meta.wrapped_keys[role], role_key(st, role)?),
            KeyPath::Custodian => (&meta.custodian_key, st.custodian()),
        };
        let dk = unwrap_key(wrapped, pair.private_key())?;
        let raw = self.plane(meta.blob_ref.store).get(&meta.blob_ref.name)?;
        let blob = SealedBlob::from_bytes(&raw)?;
        let plain = blob.open(&dk, &resource_aad(&meta.resource_id, meta.version))?;
        if hex::encode(sha256(&plain)) != meta.plaintext_sha256 {
            return Err(GatewayError::IntegrityMismatch(meta.resource_id.clone()));
        }
        Ok(plain)
    }
}
