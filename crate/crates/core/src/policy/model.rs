use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::PolicyError;

/// Seconds since the Unix epoch.
pub type Timestamp = u64;

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque role identifier, allocated by the engine.
    RoleId
);
string_id!(
    /// Opaque user identifier, chosen by the administrator.
    UserId
);
string_id!(
    /// Opaque delegation identifier, allocated by the engine.
    DelegationId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    Read,
    Write,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Read => f.write_str("Read"),
            Action::Write => f.write_str("Write"),
        }
    }
}

impl std::str::FromStr for Action {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "read" => Ok(Action::Read),
            "write" => Ok(Action::Write),
            _ => Err(PolicyError::InvalidAction(s.to_owned())),
        }
    }
}

/// Actor categories. Only `DataOwner` and `Admin` may ever write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActorKind {
    Admin,
    RoleManager,
    DataOwner,
    EndUser,
    Override,
}

impl fmt::Display for ActorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ActorKind::Admin => "Admin",
            ActorKind::RoleManager => "RoleManager",
            ActorKind::DataOwner => "DataOwner",
            ActorKind::EndUser => "EndUser",
            ActorKind::Override => "Override",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ActorKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "admin" => Ok(ActorKind::Admin),
            "rolemanager" | "rolemgr" => Ok(ActorKind::RoleManager),
            "dataowner" | "owner" => Ok(ActorKind::DataOwner),
            "enduser" | "user" => Ok(ActorKind::EndUser),
            "override" => Ok(ActorKind::Override),
            _ => Err(PolicyError::InvalidActorKind(s.to_owned())),
        }
    }
}

/// A resource identifier, or a prefix pattern when it ends in `*`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ResourcePattern(String);

impl ResourcePattern {
    pub fn new(pattern: impl Into<String>) -> Result<Self, PolicyError> {
        let pattern = pattern.into();
        let body = pattern.strip_suffix('*').unwrap_or(&pattern);
        if body.contains('*') || pattern.is_empty() {
            return Err(PolicyError::InvalidPattern(pattern));
        }
        Ok(Self(pattern))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn matches(&self, resource: &str) -> bool {
        match self.0.strip_suffix('*') {
            Some(prefix) => resource.starts_with(prefix),
            None => self.0 == resource,
        }
    }
}

impl TryFrom<String> for ResourcePattern {
    type Error = PolicyError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<ResourcePattern> for String {
    fn from(value: ResourcePattern) -> Self {
        value.0
    }
}

impl fmt::Display for ResourcePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Permission {
    pub resource: ResourcePattern,
    pub action: Action,
}

impl Permission {
    pub fn new(resource: &str, action: Action) -> Result<Self, PolicyError> {
        Ok(Self {
            resource: ResourcePattern::new(resource)?,
            action,
        })
    }

    pub fn matches(&self, resource: &str, action: Action) -> bool {
        self.action == action && self.resource.matches(resource)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub id: RoleId,
    pub name: String,
    /// Roles directly subordinate to this one. Seniors inherit their permissions.
    pub juniors: BTreeSet<RoleId>,
    #[serde(default)]
    pub permissions: BTreeSet<Permission>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: UserId,
    pub kind: ActorKind,
    pub roles: BTreeSet<RoleId>,
    /// Lowercase hex SHA-256 of the bearer token.
    pub token_digest: String,
}

/// Unordered pair of mutually exclusive roles.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "SodPair", into = "SodPair")]
pub struct SodConstraint {
    role_a: RoleId,
    role_b: RoleId,
}

#[derive(Serialize, Deserialize)]
struct SodPair {
    role_a: RoleId,
    role_b: RoleId,
}

impl SodConstraint {
    pub fn new(a: RoleId, b: RoleId) -> Result<Self, PolicyError> {
        if a == b {
            return Err(PolicyError::InvalidConstraint(a));
        }
        let (role_a, role_b) = if a < b { (a, b) } else { (b, a) };
        Ok(Self { role_a, role_b })
    }

    pub fn role_a(&self) -> &RoleId {
        &self.role_a
    }

    pub fn role_b(&self) -> &RoleId {
        &self.role_b
    }

    pub fn involves(&self, role: &RoleId) -> bool {
        &self.role_a == role || &self.role_b == role
    }

    /// True when `roles` contains both ends of the pair.
    pub fn violated_by<'a>(&self, mut roles: impl Iterator<Item = &'a RoleId>) -> bool {
        let (mut a, mut b) = (false, false);
        roles.any(|r| {
            a |= r == &self.role_a;
            b |= r == &self.role_b;
            a && b
        })
    }
}

impl TryFrom<SodPair> for SodConstraint {
    type Error = PolicyError;

    fn try_from(value: SodPair) -> Result<Self, Self::Error> {
        Self::new(value.role_a, value.role_b)
    }
}

impl From<SodConstraint> for SodPair {
    fn from(value: SodConstraint) -> Self {
        Self {
            role_a: value.role_a,
            role_b: value.role_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delegation {
    pub id: DelegationId,
    pub from_user: UserId,
    pub to_user: UserId,
    pub role: RoleId,
    pub created_at: Timestamp,
    pub expires_at: Timestamp,
    pub revoked: bool,
}

impl Delegation {
    /// Active on `[created_at, expires_at)` unless revoked.
    pub fn is_active(&self, now: Timestamp) -> bool {
        !self.revoked && now < self.expires_at
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DecisionReason {
    NoRole,
    NoPermission,
    SodViolation,
    ReadOnlyActor,
    Granted,
    OverrideGranted,
}

impl DecisionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionReason::NoRole => "NoRole",
            DecisionReason::NoPermission => "NoPermission",
            DecisionReason::SodViolation => "SodViolation",
            DecisionReason::ReadOnlyActor => "ReadOnlyActor",
            DecisionReason::Granted => "Granted",
            DecisionReason::OverrideGranted => "OverrideGranted",
        }
    }
}

impl fmt::Display for DecisionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of an access check. `allowed` is derived from the reason.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Decision {
    allowed: bool,
    reason: DecisionReason,
}

impl Decision {
    pub fn new(reason: DecisionReason) -> Self {
        let allowed = matches!(
            reason,
            DecisionReason::Granted | DecisionReason::OverrideGranted
        );
        Self { allowed, reason }
    }

    pub fn allowed(&self) -> bool {
        self.allowed
    }

    pub fn reason(&self) -> DecisionReason {
        self.reason
    }
}
