use std::collections::BTreeSet;

use serde::Serialize;

use super::{new_token, require_kind, token_digest, Gateway, GatewayError, SessionContext, State};
use crate::audit::AuditAction;
use crate::crypto::RoleKeyPair;
use crate::policy::{
    Action, ActorKind, Decision, DelegationId, Permission, RoleId, UserId, UserRecord,
};

const ADMIN: &[ActorKind] = &[ActorKind::Admin];
const ROLE_MANAGERS: &[ActorKind] = &[ActorKind::Admin, ActorKind::RoleManager];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoleSummary {
    pub id: RoleId,
    pub name: String,
    pub level: u32,
    pub juniors: BTreeSet<RoleId>,
    pub permissions: Vec<String>,
}

fn resolve(st: &State, role: &str) -> Result<RoleId, GatewayError> {
    Ok(st.policy.resolve_role(role)?.id.clone())
}

impl Gateway {
    /// Creates a role and its key pair. `juniors` may be ids or names.
    pub fn add_role(
        &self,
        ctx: &SessionContext,
        name: &str,
        juniors: &[&str],
    ) -> Result<RoleId, GatewayError> {
        let bits = self.params().default_modulus_bits;
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ADMIN, "create roles")?;
            if name.trim().is_empty() {
                return Err(GatewayError::InvalidRequest("role name is empty".into()));
            }
            let juniors = juniors
                .iter()
                .map(|j| resolve(st, j))
                .collect::<Result<Vec<_>, _>>()?;
            let id = st.policy.add_role(name, juniors)?;
            st.add_key(RoleKeyPair::generate(id.clone(), bits)?)?;
            Ok((id.clone(), format!("add-role {id} {name}")))
        })
    }

    pub fn link_roles(
        &self,
        ctx: &SessionContext,
        senior: &str,
        junior: &str,
    ) -> Result<(), GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ADMIN, "change the hierarchy")?;
            let (s, j) = (resolve(st, senior)?, resolve(st, junior)?);
            st.policy.link_roles(&s, &j)?;
            Ok(((), format!("link {s}>{j}")))
        })
    }

    /// Returns whether the edge existed.
    pub fn unlink_roles(
        &self,
        ctx: &SessionContext,
        senior: &str,
        junior: &str,
    ) -> Result<bool, GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ADMIN, "change the hierarchy")?;
            let (s, j) = (resolve(st, senior)?, resolve(st, junior)?);
            let existed = st.policy.unlink_roles(&s, &j)?;
            Ok((existed, format!("unlink {s}>{j}")))
        })
    }

    /// Deletes a role, its key pair and every wrapped key made for it.
    pub fn remove_role(&self, ctx: &SessionContext, role: &str) -> Result<(), GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ADMIN, "remove roles")?;
            let id = resolve(st, role)?;
            st.policy.remove_role(&id)?;
            st.remove_key(&id);
            for meta in st.resources.values_mut() {
                meta.wrapped_keys.remove(&id);
            }
            Ok(((), format!("remove-role {id}")))
        })
    }

    pub fn grant_permission(
        &self,
        ctx: &SessionContext,
        role: &str,
        resource_pattern: &str,
        action: Action,
    ) -> Result<(), GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ADMIN, "grant permissions")?;
            let id = resolve(st, role)?;
            let perm = Permission::new(resource_pattern, action)?;
            st.policy.grant_permission(&id, perm)?;
            Ok(((), format!("grant {id} {action:?} {resource_pattern}")))
        })
    }

    /// Returns whether the permission was present.
    pub fn revoke_permission(
        &self,
        ctx: &SessionContext,
        role: &str,
        resource_pattern: &str,
        action: Action,
    ) -> Result<bool, GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ADMIN, "revoke permissions")?;
            let id = resolve(st, role)?;
            let perm = Permission::new(resource_pattern, action)?;
            let existed = st.policy.revoke_permission(&id, &perm)?;
            Ok((
                existed,
                format!("revoke {id} {action:?} {resource_pattern}"),
            ))
        })
    }

    /// Declares two roles mutually exclusive.
    pub fn add_sod_constraint(
        &self,
        ctx: &SessionContext,
        a: &str,
        b: &str,
    ) -> Result<(), GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ADMIN, "declare separation of duties")?;
            let (a, b) = (resolve(st, a)?, resolve(st, b)?);
            st.policy.add_sod_constraint(&a, &b)?;
            Ok(((), format!("sod {a}~{b}")))
        })
    }

    /// Registers a user and returns their bearer token. The token is not
    /// stored; only its digest is.
    pub fn add_user(
        &self,
        ctx: &SessionContext,
        id: &str,
        kind: ActorKind,
    ) -> Result<String, GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ADMIN, "register users")?;
            if id.is_empty() || id.chars().any(|c| c.is_control() || c.is_whitespace()) {
                return Err(GatewayError::InvalidRequest(format!(
                    "invalid user id {id:?}"
                )));
            }
            let token = new_token()?;
            st.policy
                .add_user(UserId::from(id), kind, token_digest(&token))?;
            Ok((token, format!("add-user {id} {kind}")))
        })
    }

    /// Issues a new token for `id`, invalidating the old one.
    pub fn reset_token(&self, ctx: &SessionContext, id: &str) -> Result<String, GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ADMIN, "reset tokens")?;
            let token = new_token()?;
            st.policy
                .set_token_digest(&UserId::from(id), token_digest(&token))?;
            Ok((token, format!("reset-token {id}")))
        })
    }

    pub fn set_override_enabled(
        &self,
        ctx: &SessionContext,
        enabled: bool,
    ) -> Result<(), GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, _, _| {
            require_kind(user, ADMIN, "configure override access")?;
            Ok(((), format!("override-enabled {enabled}")))
        })?;
        self.set_override_enabled_param(enabled);
        Ok(())
    }

    pub fn assign_role(
        &self,
        ctx: &SessionContext,
        user_id: &str,
        role: &str,
    ) -> Result<(), GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ROLE_MANAGERS, "assign roles")?;
            let id = resolve(st, role)?;
            st.policy.assign_role(&UserId::from(user_id), &id)?;
            Ok(((), format!("assign {user_id} {id}")))
        })
    }

    pub fn revoke_role(
        &self,
        ctx: &SessionContext,
        user_id: &str,
        role: &str,
    ) -> Result<(), GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            require_kind(user, ROLE_MANAGERS, "revoke roles")?;
            let id = resolve(st, role)?;
            st.policy.revoke_role(&UserId::from(user_id), &id)?;
            Ok(((), format!("unassign {user_id} {id}")))
        })
    }

    /// Lends one of the caller's directly assigned roles to `to` for `ttl_seconds`.
    pub fn delegate_role(
        &self,
        ctx: &SessionContext,
        to: &str,
        role: &str,
        ttl_seconds: u64,
    ) -> Result<DelegationId, GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            let id = resolve(st, role)?;
            let d =
                st.policy
                    .delegate_role(&user.id, &UserId::from(to), &id, ttl_seconds, ctx.now)?;
            Ok((
                d.clone(),
                format!("delegate {d} {id} to {to} for {ttl_seconds}s"),
            ))
        })
    }

    /// The delegator, an administrator or a role manager may revoke.
    pub fn revoke_delegation(&self, ctx: &SessionContext, id: &str) -> Result<(), GatewayError> {
        self.mutate(ctx, AuditAction::PolicyChange, None, |user, st, _| {
            let id = DelegationId::from(id);
            let d = st.policy.delegation(&id)?;
            if d.from_user != user.id {
                require_kind(user, ROLE_MANAGERS, "revoke another user's delegation")?;
            }
            st.policy.revoke_delegation(&id)?;
            Ok(((), format!("revoke-delegation {id}")))
        })
    }

    // ----- queries; not audited -----

    fn observer(
        &self,
        ctx: &SessionContext,
        subject: &str,
    ) -> Result<(UserRecord, UserId), GatewayError> {
        let st = self.read_state();
        let user = self.authenticate(&st, ctx)?;
        let subject = UserId::from(subject);
        if subject != user.id {
            require_kind(&user, ROLE_MANAGERS, "inspect other users")?;
        }
        Ok((user, subject))
    }

    /// The caller may ask about themselves; managers about anyone.
    pub fn effective_roles(
        &self,
        ctx: &SessionContext,
        user_id: &str,
    ) -> Result<BTreeSet<RoleId>, GatewayError> {
        let (_, subject) = self.observer(ctx, user_id)?;
        Ok(self
            .read_state()
            .policy
            .effective_roles(&subject, ctx.now)?)
    }

    pub fn check_access(
        &self,
        ctx: &SessionContext,
        user_id: &str,
        resource: &str,
        action: Action,
    ) -> Result<Decision, GatewayError> {
        let (_, subject) = self.observer(ctx, user_id)?;
        Ok(self
            .read_state()
            .policy
            .check_access(&subject, resource, action, ctx.now)?)
    }

    pub fn list_roles(&self, ctx: &SessionContext) -> Result<Vec<RoleSummary>, GatewayError> {
        let st = self.read_state();
        self.authenticate(&st, ctx)?;
        st.policy
            .roles()
            .map(|r| {
                Ok(RoleSummary {
                    id: r.id.clone(),
                    name: r.name.clone(),
                    level: st.policy.role_level(&r.id)?,
                    juniors: r.juniors.clone(),
                    permissions: r
                        .permissions
                        .iter()
                        .map(|p| format!("{:?} {}", p.action, p.resource.as_str()))
                        .collect(),
                })
            })
            .collect()
    }

    /// Users without their token digests.
    pub fn list_users(
        &self,
        ctx: &SessionContext,
    ) -> Result<Vec<(UserId, ActorKind, BTreeSet<RoleId>)>, GatewayError> {
        let st = self.read_state();
        let user = self.authenticate(&st, ctx)?;
        require_kind(&user, ROLE_MANAGERS, "list users")?;
        Ok(st
            .policy
            .users()
            .map(|u| (u.id.clone(), u.kind, u.roles.clone()))
            .collect())
    }
}
