//! Role hierarchy, permission assignment, separation of duties, delegation,
//! and the access-decision function.
//!
//! The junior relation forms a DAG: a role may have several seniors and
//! several juniors, and every mutation is cycle-checked. Seniors inherit the
//! permissions of all their transitive juniors. A role's level is the length
//! of the longest chain of seniors above it, so roots sit at level 0.
//!
//! Decisions are deny-by-default. [`Policy::check_access`] evaluates its rules
//! in a fixed order and reports the first one that fails.

mod hierarchy;
mod model;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{
    Action, ActorKind, Decision, DecisionReason, Delegation, DelegationId, Permission,
    ResourcePattern, Role, RoleId, SodConstraint, Timestamp, UserId, UserRecord,
};

use hierarchy::RoleTable;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("unknown role: {0}")]
    UnknownRole(RoleId),
    #[error("unknown user: {0}")]
    UnknownUser(UserId),
    #[error("unknown delegation: {0}")]
    UnknownDelegation(DelegationId),
    #[error("linking {senior} -> {junior} would create a cycle")]
    CycleError { senior: RoleId, junior: RoleId },
    #[error("user {user} would hold conflicting roles {role_a} and {role_b}")]
    SodViolation {
        user: UserId,
        role_a: RoleId,
        role_b: RoleId,
    },
    #[error("user {user} already holds both {role_a} and {role_b}")]
    ConflictExists {
        user: UserId,
        role_a: RoleId,
        role_b: RoleId,
    },
    #[error("user {user} is not assigned role {role}")]
    NotAssigned { user: UserId, role: RoleId },
    #[error("user {user} does not directly hold role {role}")]
    NotHeld { user: UserId, role: RoleId },
    #[error("a role may not conflict with itself: {0}")]
    InvalidConstraint(RoleId),
    #[error("invalid resource pattern {0:?}: '*' is only allowed as the final character")]
    InvalidPattern(String),
    #[error("invalid action {0:?}")]
    InvalidAction(String),
    #[error("invalid actor kind {0:?}")]
    InvalidActorKind(String),
    #[error("role name already in use: {0}")]
    DuplicateRoleName(String),
    #[error("user already exists: {0}")]
    DuplicateUser(UserId),
    #[error("delegation ttl must be positive")]
    InvalidTtl,
    #[error("invalid policy document: {0}")]
    Invalid(String),
}

/// The serialized form of a [`Policy`]. Field names match the private-store document.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySnapshot {
    pub roles: Vec<Role>,
    pub users: Vec<UserRecord>,
    pub sod: Vec<SodConstraint>,
    pub delegations: Vec<Delegation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Policy {
    roles: RoleTable,
    users: BTreeMap<UserId, UserRecord>,
    sod: BTreeSet<SodConstraint>,
    delegations: BTreeMap<DelegationId, Delegation>,
    levels: BTreeMap<RoleId, u32>,
    next_role: u64,
    next_delegation: u64,
}

fn next_counter<'a>(prefix: char, ids: impl Iterator<Item = &'a str>) -> u64 {
    ids.filter_map(|id| id.strip_prefix(prefix)?.parse::<u64>().ok())
        .max()
        .map_or(1, |n| n + 1)
}

impl Policy {
    pub fn new() -> Self {
        Self {
            next_role: 1,
            next_delegation: 1,
            ..Default::default()
        }
    }

    /// Rebuilds a policy from its serialized form, checking every invariant.
    pub fn from_snapshot(snapshot: PolicySnapshot) -> Result<Self, PolicyError> {
        let invalid = |msg: String| PolicyError::Invalid(msg);
        let mut roles = RoleTable::new();
        let mut names = BTreeSet::new();
        for role in snapshot.roles {
            if !names.insert(role.name.clone()) {
                return Err(PolicyError::DuplicateRoleName(role.name));
            }
            if roles.insert(role.id.clone(), role.clone()).is_some() {
                return Err(invalid(format!("duplicate role id {}", role.id)));
            }
        }
        for role in roles.values() {
            for j in &role.juniors {
                if !roles.contains_key(j) {
                    return Err(PolicyError::UnknownRole(j.clone()));
                }
            }
        }
        let levels = hierarchy::levels(&roles)
            .ok_or_else(|| invalid("role hierarchy has a cycle".into()))?;

        let mut users = BTreeMap::new();
        for user in snapshot.users {
            if let Some(r) = user.roles.iter().find(|r| !roles.contains_key(*r)) {
                return Err(PolicyError::UnknownRole(r.clone()));
            }
            if users.insert(user.id.clone(), user.clone()).is_some() {
                return Err(PolicyError::DuplicateUser(user.id));
            }
        }

        let mut sod = BTreeSet::new();
        for c in snapshot.sod {
            for r in [c.role_a(), c.role_b()] {
                if !roles.contains_key(r) {
                    return Err(PolicyError::UnknownRole(r.clone()));
                }
            }
            if let Some(user) = users.values().find(|u| c.violated_by(u.roles.iter())) {
                return Err(PolicyError::SodViolation {
                    user: user.id.clone(),
                    role_a: c.role_a().clone(),
                    role_b: c.role_b().clone(),
                });
            }
            sod.insert(c);
        }

        let mut delegations = BTreeMap::new();
        for d in snapshot.delegations {
            for u in [&d.from_user, &d.to_user] {
                if !users.contains_key(u) {
                    return Err(PolicyError::UnknownUser(u.clone()));
                }
            }
            if !roles.contains_key(&d.role) {
                return Err(PolicyError::UnknownRole(d.role.clone()));
            }
            if d.expires_at <= d.created_at {
                return Err(invalid(format!(
                    "delegation {} expires before creation",
                    d.id
                )));
            }
            if delegations.insert(d.id.clone(), d.clone()).is_some() {
                return Err(invalid(format!("duplicate delegation id {}", d.id)));
            }
        }

        let next_role = next_counter('r', roles.keys().map(RoleId::as_str));
        let next_delegation = next_counter('d', delegations.keys().map(DelegationId::as_str));
        Ok(Self {
            roles,
            users,
            sod,
            delegations,
            levels,
            next_role,
            next_delegation,
        })
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            roles: self.roles.values().cloned().collect(),
            users: self.users.values().cloned().collect(),
            sod: self.sod.iter().cloned().collect(),
            delegations: self.delegations.values().cloned().collect(),
        }
    }

    // ----- roles -----

    pub fn roles(&self) -> impl Iterator<Item = &Role> {
        self.roles.values()
    }

    pub fn role(&self, id: &RoleId) -> Result<&Role, PolicyError> {
        self.roles
            .get(id)
            .ok_or_else(|| PolicyError::UnknownRole(id.clone()))
    }

    /// Looks a role up by id first, then by display name.
    pub fn resolve_role(&self, id_or_name: &str) -> Result<&Role, PolicyError> {
        self.roles
            .get(&RoleId::from(id_or_name))
            .or_else(|| self.roles.values().find(|r| r.name == id_or_name))
            .ok_or_else(|| PolicyError::UnknownRole(RoleId::from(id_or_name)))
    }

    fn require_role(&self, id: &RoleId) -> Result<(), PolicyError> {
        self.role(id).map(|_| ())
    }

    pub fn add_role(
        &mut self,
        name: &str,
        juniors: impl IntoIterator<Item = RoleId>,
    ) -> Result<RoleId, PolicyError> {
        let juniors: BTreeSet<RoleId> = juniors.into_iter().collect();
        for j in &juniors {
            self.require_role(j)?;
        }
        if self.roles.values().any(|r| r.name == name) {
            return Err(PolicyError::DuplicateRoleName(name.to_owned()));
        }
        let id = RoleId::new(format!("r{}", self.next_role));
        self.next_role += 1;
        self.roles.insert(
            id.clone(),
            Role {
                id: id.clone(),
                name: name.to_owned(),
                juniors,
                permissions: BTreeSet::new(),
            },
        );
        // A fresh role has no seniors, so no edge into it can close a cycle.
        self.recompute_levels();
        Ok(id)
    }

    /// Adds the edge `senior -> junior`. Re-linking an existing edge is a no-op.
    pub fn link_roles(&mut self, senior: &RoleId, junior: &RoleId) -> Result<(), PolicyError> {
        self.require_role(senior)?;
        self.require_role(junior)?;
        if hierarchy::dominates(&self.roles, junior, senior) {
            return Err(PolicyError::CycleError {
                senior: senior.clone(),
                junior: junior.clone(),
            });
        }
        let role = self.roles.get_mut(senior).expect("checked above");
        if role.juniors.insert(junior.clone()) {
            self.recompute_levels();
        }
        Ok(())
    }

    pub fn unlink_roles(&mut self, senior: &RoleId, junior: &RoleId) -> Result<bool, PolicyError> {
        self.require_role(junior)?;
        let role = self
            .roles
            .get_mut(senior)
            .ok_or_else(|| PolicyError::UnknownRole(senior.clone()))?;
        let removed = role.juniors.remove(junior);
        if removed {
            self.recompute_levels();
        }
        Ok(removed)
    }

    /// Deletes a role along with every edge, assignment, delegation and
    /// constraint that mentions it.
    pub fn remove_role(&mut self, id: &RoleId) -> Result<Role, PolicyError> {
        let role = self
            .roles
            .remove(id)
            .ok_or_else(|| PolicyError::UnknownRole(id.clone()))?;
        for r in self.roles.values_mut() {
            r.juniors.remove(id);
        }
        for u in self.users.values_mut() {
            u.roles.remove(id);
        }
        self.delegations.retain(|_, d| &d.role != id);
        self.sod.retain(|c| !c.involves(id));
        self.recompute_levels();
        Ok(role)
    }

    fn recompute_levels(&mut self) {
        self.levels = hierarchy::levels(&self.roles).expect("junior relation is acyclic");
    }

    pub fn role_level(&self, id: &RoleId) -> Result<u32, PolicyError> {
        self.levels
            .get(id)
            .copied()
            .ok_or_else(|| PolicyError::UnknownRole(id.clone()))
    }

    /// `junior` itself plus everything below it.
    pub fn juniors_closure(&self, id: &RoleId) -> Result<BTreeSet<RoleId>, PolicyError> {
        self.require_role(id)?;
        Ok(hierarchy::closure(&self.roles, [id]))
    }

    // ----- permissions -----

    pub fn grant_permission(&mut self, role: &RoleId, perm: Permission) -> Result<(), PolicyError> {
        let r = self
            .roles
            .get_mut(role)
            .ok_or_else(|| PolicyError::UnknownRole(role.clone()))?;
        r.permissions.insert(perm);
        Ok(())
    }

    /// Returns whether the permission was present.
    pub fn revoke_permission(
        &mut self,
        role: &RoleId,
        perm: &Permission,
    ) -> Result<bool, PolicyError> {
        let r = self
            .roles
            .get_mut(role)
            .ok_or_else(|| PolicyError::UnknownRole(role.clone()))?;
        Ok(r.permissions.remove(perm))
    }

    // ----- separation of duties -----

    pub fn sod_constraints(&self) -> impl Iterator<Item = &SodConstraint> {
        self.sod.iter()
    }

    pub fn add_sod_constraint(&mut self, a: &RoleId, b: &RoleId) -> Result<(), PolicyError> {
        let constraint = SodConstraint::new(a.clone(), b.clone())?;
        self.require_role(a)?;
        self.require_role(b)?;
        if let Some(user) = self
            .users
            .values()
            .find(|u| constraint.violated_by(u.roles.iter()))
        {
            return Err(PolicyError::ConflictExists {
                user: user.id.clone(),
                role_a: constraint.role_a().clone(),
                role_b: constraint.role_b().clone(),
            });
        }
        self.sod.insert(constraint);
        Ok(())
    }

    fn first_sod_conflict<'a>(&'a self, roles: &BTreeSet<&RoleId>) -> Option<&'a SodConstraint> {
        self.sod
            .iter()
            .find(|c| roles.contains(c.role_a()) && roles.contains(c.role_b()))
    }

    // ----- users -----

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn user(&self, id: &UserId) -> Result<&UserRecord, PolicyError> {
        self.users
            .get(id)
            .ok_or_else(|| PolicyError::UnknownUser(id.clone()))
    }

    pub fn add_user(
        &mut self,
        id: UserId,
        kind: ActorKind,
        token_digest: String,
    ) -> Result<(), PolicyError> {
        if self.users.contains_key(&id) {
            return Err(PolicyError::DuplicateUser(id));
        }
        self.users.insert(
            id.clone(),
            UserRecord {
                id,
                kind,
                roles: BTreeSet::new(),
                token_digest,
            },
        );
        Ok(())
    }

    pub fn set_token_digest(&mut self, id: &UserId, digest: String) -> Result<(), PolicyError> {
        let user = self
            .users
            .get_mut(id)
            .ok_or_else(|| PolicyError::UnknownUser(id.clone()))?;
        user.token_digest = digest;
        Ok(())
    }

    pub fn assign_role(&mut self, user: &UserId, role: &RoleId) -> Result<(), PolicyError> {
        self.require_role(role)?;
        let record = self.user(user)?;
        if record.roles.contains(role) {
            return Ok(());
        }
        let mut held: BTreeSet<&RoleId> = record.roles.iter().collect();
        held.insert(role);
        if let Some(c) = self.first_sod_conflict(&held) {
            return Err(PolicyError::SodViolation {
                user: user.clone(),
                role_a: c.role_a().clone(),
                role_b: c.role_b().clone(),
            });
        }
        self.users
            .get_mut(user)
            .expect("checked above")
            .roles
            .insert(role.clone());
        Ok(())
    }

    pub fn revoke_role(&mut self, user: &UserId, role: &RoleId) -> Result<(), PolicyError> {
        let record = self
            .users
            .get_mut(user)
            .ok_or_else(|| PolicyError::UnknownUser(user.clone()))?;
        if !record.roles.remove(role) {
            return Err(PolicyError::NotAssigned {
                user: user.clone(),
                role: role.clone(),
            });
        }
        Ok(())
    }

    // ----- delegation -----

    pub fn delegations(&self) -> impl Iterator<Item = &Delegation> {
        self.delegations.values()
    }

    fn active_delegated_roles<'a>(
        &'a self,
        user: &'a UserId,
        now: Timestamp,
    ) -> impl Iterator<Item = &'a RoleId> {
        self.delegations
            .values()
            .filter(move |d| &d.to_user == user && d.is_active(now))
            .map(|d| &d.role)
    }

    /// Roles a user holds directly at `now`: assignments plus active delegations.
    fn held_roles<'a>(&'a self, user: &'a UserRecord, now: Timestamp) -> BTreeSet<&'a RoleId> {
        user.roles
            .iter()
            .chain(self.active_delegated_roles(&user.id, now))
            .collect()
    }

    /// Temporarily lends a directly assigned role. Delegated roles cannot be re-delegated.
    pub fn delegate_role(
        &mut self,
        from: &UserId,
        to: &UserId,
        role: &RoleId,
        ttl_seconds: u64,
        now: Timestamp,
    ) -> Result<DelegationId, PolicyError> {
        if ttl_seconds == 0 {
            return Err(PolicyError::InvalidTtl);
        }
        self.require_role(role)?;
        let giver = self.user(from)?;
        if !giver.roles.contains(role) {
            return Err(PolicyError::NotHeld {
                user: from.clone(),
                role: role.clone(),
            });
        }
        let receiver = self.user(to)?;
        let mut held = self.held_roles(receiver, now);
        held.insert(role);
        if let Some(c) = self.first_sod_conflict(&held) {
            return Err(PolicyError::SodViolation {
                user: to.clone(),
                role_a: c.role_a().clone(),
                role_b: c.role_b().clone(),
            });
        }
        let expires_at = now
            .checked_add(ttl_seconds)
            .ok_or(PolicyError::InvalidTtl)?;
        let id = DelegationId::new(format!("d{}", self.next_delegation));
        self.next_delegation += 1;
        self.delegations.insert(
            id.clone(),
            Delegation {
                id: id.clone(),
                from_user: from.clone(),
                to_user: to.clone(),
                role: role.clone(),
                created_at: now,
                expires_at,
                revoked: false,
            },
        );
        Ok(id)
    }

    /// Idempotent; revoking an expired delegation succeeds.
    pub fn revoke_delegation(&mut self, id: &DelegationId) -> Result<(), PolicyError> {
        let d = self
            .delegations
            .get_mut(id)
            .ok_or_else(|| PolicyError::UnknownDelegation(id.clone()))?;
        d.revoked = true;
        Ok(())
    }

    pub fn delegation(&self, id: &DelegationId) -> Result<&Delegation, PolicyError> {
        self.delegations
            .get(id)
            .ok_or_else(|| PolicyError::UnknownDelegation(id.clone()))
    }

    // ----- decisions -----

    /// Downward closure of assigned roles and roles delegated to the user that are active at `now`.
    pub fn effective_roles(
        &self,
        user: &UserId,
        now: Timestamp,
    ) -> Result<BTreeSet<RoleId>, PolicyError> {
        let record = self.user(user)?;
        Ok(hierarchy::closure(
            &self.roles,
            self.held_roles(record, now),
        ))
    }

    /// Rules, in order: `ReadOnlyActor` (end users never write), `SodViolation`
    /// (directly held roles, delegations included, form a constrained pair),
    /// `NoRole`, `NoPermission`.
    pub fn check_access(
        &self,
        user: &UserId,
        resource: &str,
        action: Action,
        now: Timestamp,
    ) -> Result<Decision, PolicyError> {
        let record = self.user(user)?;
        if record.kind == ActorKind::EndUser && action == Action::Write {
            return Ok(Decision::new(DecisionReason::ReadOnlyActor));
        }
        let held = self.held_roles(record, now);
        if self.first_sod_conflict(&held).is_some() {
            return Ok(Decision::new(DecisionReason::SodViolation));
        }
        let effective = hierarchy::closure(&self.roles, held);
        if effective.is_empty() {
            return Ok(Decision::new(DecisionReason::NoRole));
        }
        let granted = effective.iter().any(|r| {
            self.roles[r]
                .permissions
                .iter()
                .any(|p| p.matches(resource, action))
        });
        Ok(Decision::new(if granted {
            DecisionReason::Granted
        } else {
            DecisionReason::NoPermission
        }))
    }

    /// Re-checks every invariant; used before persisting.
    pub fn validate(&self) -> Result<(), PolicyError> {
        Self::from_snapshot(self.snapshot()).map(|_| ())
    }
}
