use serde::Serialize;

use super::{require_kind, Gateway, GatewayError, SessionContext};
use crate::audit::{AuditAction, AuditDecision, AuditEntry, AuditFilter};
use crate::policy::{ActorKind, Timestamp};

/// Operational summary for administrators and role managers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatusReport {
    pub users: usize,
    pub roles: usize,
    pub resources: usize,
    pub active_delegations: usize,
    pub override_enabled: bool,
    pub audit_entries: usize,
    pub chain_valid: bool,
    /// Start of the window; `None` means since the first entry.
    pub window_since: Option<Timestamp>,
    pub window_decisions: usize,
    pub window_denies: usize,
    /// `window_denies / window_decisions`, or 0 for an empty window.
    pub deny_rate: f64,
    pub override_events: usize,
    pub recent: Vec<AuditEntry>,
}

impl Gateway {
    /// `window_seconds` bounds the deny-rate and override counts; `recent`
    /// caps how many of the newest audit entries are returned.
    pub fn status(
        &self,
        ctx: &SessionContext,
        window_seconds: Option<u64>,
        recent: usize,
    ) -> Result<StatusReport, GatewayError> {
        let st = self.read_state();
        let user = self.authenticate(&st, ctx)?;
        require_kind(
            &user,
            &[ActorKind::Admin, ActorKind::RoleManager],
            "view status",
        )?;
        let audit = self.lock_audit();
        let since = window_seconds.map(|w| ctx.now.saturating_sub(w));
        let in_window: Vec<&AuditEntry> = audit
            .entries()
            .iter()
            .filter(|e| since.is_none_or(|s| e.ts >= s))
            .collect();
        let denies = in_window
            .iter()
            .filter(|e| e.decision == AuditDecision::Deny)
            .count();
        let overrides = in_window
            .iter()
            .filter(|e| e.action == AuditAction::Override && e.decision == AuditDecision::Allow)
            .count();
        let entries = audit.entries();
        Ok(StatusReport {
            users: st.policy.users().count(),
            roles: st.policy.roles().count(),
            resources: st.resources.len(),
            active_delegations: st
                .policy
                .delegations()
                .filter(|d| d.is_active(ctx.now))
                .count(),
            override_enabled: self.params().override_enabled,
            audit_entries: entries.len(),
            chain_valid: audit.verify().valid,
            window_since: since,
            window_decisions: in_window.len(),
            window_denies: denies,
            deny_rate: if in_window.is_empty() {
                0.0
            } else {
                denies as f64 / in_window.len() as f64
            },
            override_events: overrides,
            recent: entries[entries.len().saturating_sub(recent)..].to_vec(),
        })
    }

    /// Filtered audit entries for administrators and role managers.
    pub fn query_audit(
        &self,
        ctx: &SessionContext,
        filter: &AuditFilter,
        limit: Option<usize>,
    ) -> Result<Vec<AuditEntry>, GatewayError> {
        let st = self.read_state();
        let user = self.authenticate(&st, ctx)?;
        require_kind(
            &user,
            &[ActorKind::Admin, ActorKind::RoleManager],
            "read the audit log",
        )?;
        Ok(self.lock_audit().query(filter, limit))
    }
}
