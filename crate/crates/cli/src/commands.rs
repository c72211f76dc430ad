use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use hrbac_core::audit::{self, AuditFilter, AuditLog};
use hrbac_core::bench::{self, BenchOptions};
use hrbac_core::crypto::ModulusBits;
use hrbac_core::gateway::{unix_now, Gateway, Planes, SessionContext, SystemParams};
use hrbac_core::integrity::{self, DigestAlgorithm};
use hrbac_core::policy::{Action, ActorKind};
use hrbac_core::service::{ApiServer, ResourceSummary};
use hrbac_core::store::{
    BlobStore, Classification, FileDocumentStore, FsBlobStore, RemoteBlobStore,
};
use serde_json::{json, Value};

use crate::args::*;
use crate::config::{Config, ConfigFile, PublicBackend};
use crate::error::{exit, CliError};

/// What a command produced, before formatting.
pub struct Output {
    pub value: Value,
    pub text: String,
    /// Bytes for standard output in text mode, in place of `text`.
    pub raw: Option<Vec<u8>>,
    pub code: i32,
}

impl Output {
    fn new(value: Value, text: impl Into<String>) -> Self {
        Self {
            value,
            text: text.into(),
            raw: None,
            code: exit::OK,
        }
    }
}

impl From<ActionArg> for Action {
    fn from(a: ActionArg) -> Self {
        match a {
            ActionArg::Read => Action::Read,
            ActionArg::Write => Action::Write,
        }
    }
}

impl From<KindArg> for ActorKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Admin => ActorKind::Admin,
            KindArg::RoleManager => ActorKind::RoleManager,
            KindArg::DataOwner => ActorKind::DataOwner,
            KindArg::EndUser => ActorKind::EndUser,
            KindArg::Override => ActorKind::Override,
        }
    }
}

impl From<ClassArg> for Classification {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Public => Classification::Public,
            ClassArg::Confidential => Classification::Confidential,
        }
    }
}

fn params(cfg: &Config) -> SystemParams {
    SystemParams {
        default_modulus_bits: cfg.default_modulus_bits,
        override_enabled: cfg.override_enabled,
        public_store: cfg.public_backend.describe(),
        private_store: cfg.private_store.display().to_string(),
    }
}

fn create_private_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(path, fs::Permissions::from_mode(0o700))?;
    }
    Ok(())
}

fn build_gateway(cfg: &Config) -> Result<Gateway, CliError> {
    let public: Arc<dyn BlobStore> = match &cfg.public_backend {
        PublicBackend::Dir(dir) => Arc::new(FsBlobStore::open(dir)?),
        PublicBackend::Url(url) => {
            let remote = RemoteBlobStore::new(url);
            if !cfg.offline {
                remote.ping()?;
            }
            Arc::new(remote)
        }
    };
    create_private_dir(&cfg.private_store)?;
    let planes = Planes {
        public,
        private_blobs: Arc::new(FsBlobStore::open(cfg.private_blob_dir())?),
        documents: Box::new(FileDocumentStore::open(cfg.document_path())?),
    };
    let audit = AuditLog::open_file(&cfg.audit_path())?;
    Ok(Gateway::open(params(cfg), planes, audit)?)
}

fn open_gateway(cfg: &Config) -> Result<Gateway, CliError> {
    if !cfg.document_path().exists() {
        return Err(CliError::NotInitialized(cfg.home.display().to_string()));
    }
    build_gateway(cfg)
}

fn session(cfg: &Config) -> Result<SessionContext, CliError> {
    match (&cfg.actor, &cfg.token) {
        (Some(actor), Some(token)) => Ok(SessionContext::new(
            actor.as_str(),
            token.as_str(),
            unix_now(),
        )),
        _ => Err(CliError::Usage(
            "this command needs --as and --token (or actor and token in the config file)".into(),
        )),
    }
}

fn ok(what: impl Into<String>) -> Output {
    let what = what.into();
    Output::new(json!({ "ok": true, "detail": what }), what)
}

pub fn parse_size(s: &str) -> Result<u64, CliError> {
    let t = s.trim();
    let upper = t.to_ascii_uppercase();
    let (digits, mult) = [
        ("KIB", 1u64 << 10),
        ("MIB", 1 << 20),
        ("GIB", 1 << 30),
        ("K", 1 << 10),
        ("M", 1 << 20),
        ("G", 1 << 30),
    ]
    .iter()
    .find_map(|(suffix, m)| upper.strip_suffix(suffix).map(|d| (d.to_owned(), *m)))
    .unwrap_or((upper.clone(), 1));
    digits
        .trim()
        .parse::<u64>()
        .ok()
        .and_then(|n| n.checked_mul(mult))
        .ok_or_else(|| CliError::Usage(format!("invalid size {s:?}")))
}

fn write_or_return(data: Vec<u8>, out: Option<&Path>, resource: &str) -> Result<Output, CliError> {
    let sha = integrity::digest(&data, DigestAlgorithm::Sha256);
    let mut value = json!({ "resource": resource, "bytes": data.len(), "sha256": sha });
    match out {
        Some(path) => {
            fs::write(path, &data)?;
            value["out"] = json!(path.display().to_string());
            let text = format!("wrote {} bytes to {}", data.len(), path.display());
            Ok(Output::new(value, text))
        }
        None => {
            value["data_hex"] = json!(hex::encode(&data));
            let mut o = Output::new(value, "");
            o.raw = Some(data);
            Ok(o)
        }
    }
}

fn summary_text(s: &ResourceSummary) -> String {
    format!(
        "{} v{} {} {} bytes owner={} roles=[{}] sha256={}",
        s.resource_id,
        s.version,
        s.classification,
        s.size_bytes,
        s.owner,
        s.granted_roles.join(","),
        s.plaintext_sha256
    )
}

pub fn init(cfg: &Config, args: &InitArgs) -> Result<Output, CliError> {
    if cfg.document_path().exists() {
        return Err(CliError::AlreadyInitialized(cfg.home.display().to_string()));
    }
    fs::create_dir_all(&cfg.home)?;
    let mut cfg = cfg.clone();
    if let Some(bits) = args.modulus_bits {
        cfg.default_modulus_bits = ModulusBits::try_from(bits).map_err(|_| {
            CliError::Config(format!("unsupported modulus size {bits}; use 1024 or 2048"))
        })?;
    }
    cfg.override_enabled = args.override_enabled;
    let gw = build_gateway(&cfg)?;
    let token = gw.bootstrap_admin(&args.admin)?;
    let file = ConfigFile {
        private_store: Some(cfg.private_store.clone()),
        public_backend: Some(cfg.public_backend.describe()),
        default_modulus_bits: Some(cfg.default_modulus_bits.bits() as u32),
        override_enabled: Some(cfg.override_enabled),
        actor: Some(args.admin.clone()),
        token: Some(token.clone()),
        format: None,
    };
    file.save(&cfg.home)?;
    let mut value = json!({
        "home": cfg.home.display().to_string(),
        "admin": args.admin,
        "token": token,
    });
    let mut text = format!(
        "initialised {}\nadmin: {}\ntoken: {}",
        cfg.home.display(),
        args.admin,
        token
    );
    if args.demo {
        let admin = SessionContext::new(args.admin.as_str(), token.as_str(), unix_now());
        let owner_token = hrbac_core::demo::load(&gw, &admin)?;
        value["demo_owner_token"] = json!(owner_token);
        let _ = write!(text, "\ndemo-owner token: {owner_token}");
    }
    Ok(Output::new(value, text))
}

pub fn admin(cfg: &Config, cmd: &AdminCmd) -> Result<Output, CliError> {
    let gw = open_gateway(cfg)?;
    let ctx = session(cfg)?;
    Ok(match cmd {
        AdminCmd::AddRole { name, juniors } => {
            let juniors: Vec<&str> = juniors.iter().map(String::as_str).collect();
            let id = gw.add_role(&ctx, name, &juniors)?;
            Output::new(json!({ "role_id": id, "name": name }), id.to_string())
        }
        AdminCmd::Link { senior, junior } => {
            gw.link_roles(&ctx, senior, junior)?;
            ok(format!("{senior} now inherits from {junior}"))
        }
        AdminCmd::Unlink { senior, junior } => {
            let existed = gw.unlink_roles(&ctx, senior, junior)?;
            Output::new(
                json!({ "ok": true, "removed": existed }),
                if existed {
                    "link removed"
                } else {
                    "no such link"
                },
            )
        }
        AdminCmd::RemoveRole { role } => {
            gw.remove_role(&ctx, role)?;
            ok(format!("removed {role}"))
        }
        AdminCmd::GrantPermission {
            role,
            resource,
            action,
        } => {
            gw.grant_permission(&ctx, role, resource, (*action).into())?;
            ok(format!("{role} may {:?} {resource}", Action::from(*action)))
        }
        AdminCmd::RevokePermission {
            role,
            resource,
            action,
        } => {
            let existed = gw.revoke_permission(&ctx, role, resource, (*action).into())?;
            Output::new(
                json!({ "ok": true, "removed": existed }),
                if existed {
                    "permission revoked"
                } else {
                    "permission was not granted"
                },
            )
        }
        AdminCmd::AddSod { role_a, role_b } => {
            gw.add_sod_constraint(&ctx, role_a, role_b)?;
            ok(format!("{role_a} and {role_b} are mutually exclusive"))
        }
        AdminCmd::AddUser { id, kind } => {
            let kind = ActorKind::from(*kind);
            let token = gw.add_user(&ctx, id, kind)?;
            Output::new(json!({ "user": id, "kind": kind, "token": token }), token)
        }
        AdminCmd::ResetToken { id } => {
            let token = gw.reset_token(&ctx, id)?;
            Output::new(json!({ "user": id, "token": token }), token)
        }
        AdminCmd::SetOverride { enabled } => {
            gw.set_override_enabled(&ctx, *enabled)?;
            let mut file = ConfigFile::load(&cfg.home)?;
            file.override_enabled = Some(*enabled);
            file.save(&cfg.home)?;
            ok(format!(
                "override access {}",
                if *enabled { "enabled" } else { "disabled" }
            ))
        }
        AdminCmd::ListRoles => {
            let roles = gw.list_roles(&ctx)?;
            let mut text = String::new();
            for r in &roles {
                let juniors: Vec<String> = r.juniors.iter().map(|j| j.to_string()).collect();
                let _ = writeln!(
                    text,
                    "{}\t{}\tlevel={}\tjuniors=[{}]\tpermissions=[{}]",
                    r.id,
                    r.name,
                    r.level,
                    juniors.join(","),
                    r.permissions.join(", ")
                );
            }
            Output::new(json!({ "roles": roles }), text.trim_end())
        }
        AdminCmd::ListUsers => {
            let users = gw.list_users(&ctx)?;
            let mut text = String::new();
            let mut rows = Vec::new();
            for (id, kind, roles) in &users {
                let roles: Vec<String> = roles.iter().map(|r| r.to_string()).collect();
                let _ = writeln!(text, "{id}\t{kind}\t[{}]", roles.join(","));
                rows.push(json!({ "id": id, "kind": kind, "roles": roles }));
            }
            Output::new(json!({ "users": rows }), text.trim_end())
        }
        AdminCmd::LoadDemo => {
            let token = hrbac_core::demo::load(&gw, &ctx)?;
            Output::new(
                json!({ "demo_owner": "demo-owner", "token": token }),
                format!("demo loaded; demo-owner token: {token}"),
            )
        }
    })
}

pub fn rolemgr(cfg: &Config, cmd: &RoleMgrCmd) -> Result<Output, CliError> {
    let gw = open_gateway(cfg)?;
    let ctx = session(cfg)?;
    Ok(match cmd {
        RoleMgrCmd::Assign { user, role } => {
            gw.assign_role(&ctx, user, role)?;
            ok(format!("{user} assigned {role}"))
        }
        RoleMgrCmd::Revoke { user, role } => {
            gw.revoke_role(&ctx, user, role)?;
            ok(format!("{user} no longer holds {role}"))
        }
        RoleMgrCmd::RevokeDelegation { id } => {
            gw.revoke_delegation(&ctx, id)?;
            ok(format!("delegation {id} revoked"))
        }
    })
}

pub fn owner(cfg: &Config, cmd: &OwnerCmd) -> Result<Output, CliError> {
    let gw = open_gateway(cfg)?;
    let ctx = session(cfg)?;
    Ok(match cmd {
        OwnerCmd::Upload {
            resource,
            file,
            classification,
            grants,
        } => {
            let data = fs::read(file)?;
            let grants: Vec<&str> = grants.iter().map(String::as_str).collect();
            let meta = gw.upload(&ctx, resource, &data, (*classification).into(), &grants)?;
            let s = ResourceSummary::from(&meta);
            Output::new(json!(s), summary_text(&s))
        }
        OwnerCmd::Grant { resource, role } => {
            gw.grant_resource_access(&ctx, resource, role)?;
            ok(format!("{role} granted on {resource}"))
        }
        OwnerCmd::Revoke { resource, role } => {
            gw.revoke_resource_access(&ctx, resource, role)?;
            ok(format!("{role} revoked on {resource}"))
        }
        OwnerCmd::Rotate { resource } => {
            let s = ResourceSummary::from(&gw.rotate_resource_key(&ctx, resource)?);
            Output::new(json!(s), summary_text(&s))
        }
        OwnerCmd::List => {
            let all: Vec<ResourceSummary> = gw
                .list_resources(&ctx)?
                .iter()
                .map(ResourceSummary::from)
                .collect();
            let text = all.iter().map(summary_text).collect::<Vec<_>>().join("\n");
            Output::new(json!({ "resources": all }), text)
        }
        OwnerCmd::Show { resource } => {
            let s = ResourceSummary::from(&gw.resource_meta(&ctx, resource)?);
            Output::new(json!(s), summary_text(&s))
        }
    })
}

pub fn user(cfg: &Config, cmd: &UserCmd) -> Result<Output, CliError> {
    let gw = open_gateway(cfg)?;
    let ctx = session(cfg)?;
    match cmd {
        UserCmd::Download { resource, out } => {
            let data = gw.download(&ctx, resource)?;
            write_or_return(data, out.as_deref(), resource)
        }
        UserCmd::Delegate { to, role, ttl } => {
            let id = gw.delegate_role(&ctx, to, role, *ttl)?;
            Ok(Output::new(
                json!({ "delegation_id": id, "to": to, "role": role, "ttl_seconds": ttl }),
                id.to_string(),
            ))
        }
        UserCmd::Roles { user } => {
            let subject = user.as_deref().unwrap_or(ctx.actor.as_str());
            let roles: Vec<String> = gw
                .effective_roles(&ctx, subject)?
                .iter()
                .map(|r| r.to_string())
                .collect();
            Ok(Output::new(
                json!({ "user": subject, "effective_roles": roles }),
                roles.join("\n"),
            ))
        }
        UserCmd::Check {
            resource,
            action,
            user,
        } => {
            let subject = user.as_deref().unwrap_or(ctx.actor.as_str());
            let d = gw.check_access(&ctx, subject, resource, (*action).into())?;
            let mut o = Output::new(
                json!({ "user": subject, "resource": resource, "allowed": d.allowed(), "reason": d.reason() }),
                format!(
                    "{} ({})",
                    if d.allowed() { "allow" } else { "deny" },
                    d.reason()
                ),
            );
            if !d.allowed() {
                o.code = exit::DENIED;
            }
            Ok(o)
        }
    }
}

pub fn override_cmd(cfg: &Config, cmd: &OverrideCmd) -> Result<Output, CliError> {
    let gw = open_gateway(cfg)?;
    let ctx = session(cfg)?;
    match cmd {
        OverrideCmd::Download {
            resource,
            reason,
            out,
        } => {
            let data = gw.override_download(&ctx, resource, reason)?;
            write_or_return(data, out.as_deref(), resource)
        }
    }
}

pub fn audit_cmd(cfg: &Config, cmd: &AuditCmd) -> Result<Output, CliError> {
    match cmd {
        AuditCmd::Verify { log } => {
            let path = log.clone().unwrap_or_else(|| cfg.audit_path());
            let v = audit::verify_file(&path)?;
            let text = match v.first_bad_seq {
                None => format!("chain intact: {} entries", v.entries),
                Some(seq) => format!("chain BROKEN at seq {seq} ({} entries)", v.entries),
            };
            let mut o = Output::new(json!(v), text);
            if !v.valid {
                o.code = exit::FAILURE;
            }
            Ok(o)
        }
        AuditCmd::Query {
            actor,
            action,
            decision,
            since,
            until,
            limit,
        } => {
            let filter = AuditFilter {
                actor: actor.as_deref().map(Into::into),
                action: action
                    .as_deref()
                    .map(str::parse)
                    .transpose()
                    .map_err(CliError::Usage)?,
                decision: decision
                    .as_deref()
                    .map(str::parse)
                    .transpose()
                    .map_err(CliError::Usage)?,
                since: *since,
                until: *until,
            };
            let gw = open_gateway(cfg)?;
            let entries = gw.query_audit(&session(cfg)?, &filter, *limit)?;
            let text = entries
                .iter()
                .map(|e| e.to_line())
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::new(json!({ "entries": entries }), text))
        }
        AuditCmd::Status { window, recent } => {
            let gw = open_gateway(cfg)?;
            let s = gw.status(&session(cfg)?, *window, *recent)?;
            let mut text = format!(
                "users {}  roles {}  resources {}  active delegations {}\n\
                 audit entries {} (chain {})\n\
                 window: {} decisions, {} denied, deny rate {:.3}, {} override reads\n\
                 override access {}",
                s.users,
                s.roles,
                s.resources,
                s.active_delegations,
                s.audit_entries,
                if s.chain_valid { "intact" } else { "BROKEN" },
                s.window_decisions,
                s.window_denies,
                s.deny_rate,
                s.override_events,
                if s.override_enabled {
                    "enabled"
                } else {
                    "disabled"
                },
            );
            for e in &s.recent {
                let _ = write!(text, "\n  {}", e.to_line());
            }
            Ok(Output::new(json!(s), text))
        }
    }
}

pub fn bench_cmd(cfg: &Config, cmd: &BenchCmd) -> Result<Output, CliError> {
    let BenchCmd::Run {
        sizes,
        from,
        to,
        reps,
        warmup,
        modulus_bits,
        csv,
    } = cmd;
    let sizes: Vec<u64> = match (from, to) {
        (Some(from), Some(to)) => {
            let (mut s, to) = (parse_size(from)?, parse_size(to)?);
            if s == 0 || s > to {
                return Err(CliError::Usage(
                    "--from must be positive and not above --to".into(),
                ));
            }
            let mut out = Vec::new();
            while s <= to {
                out.push(s);
                s *= 2;
            }
            out
        }
        _ => sizes
            .iter()
            .map(|s| parse_size(s))
            .collect::<Result<_, _>>()?,
    };
    let bits = match modulus_bits {
        Some(b) => ModulusBits::try_from(*b)
            .map_err(|_| CliError::Usage(format!("unsupported modulus size {b}")))?,
        None => cfg.default_modulus_bits,
    };
    let opts = BenchOptions {
        repetitions: *reps,
        warmup: *warmup,
        modulus_bits: bits,
        ..Default::default()
    };
    let run = bench::run_matrix_with(&sizes, &opts)?;
    let csv_text = bench::to_csv(&run.rows);
    if let Some(path) = csv {
        fs::write(path, &csv_text)?;
    }
    let mut text = format!(
        "{:>12}  {:>12}  {:>12}  {:>8}\n",
        "size_bytes", "encrypt_ms", "decrypt_ms", "ratio"
    );
    for r in &run.rows {
        let _ = writeln!(
            text,
            "{:>12}  {:>12.3}  {:>12.3}  {:>8.3}",
            r.size_bytes, r.encrypt_ms, r.decrypt_ms, r.ratio
        );
    }
    let mut value = json!({ "rows": run.rows, "timed_store_ops": run.timed_store_ops });
    let mut code = exit::OK;
    match bench::assert_trend(&run.rows) {
        Ok(t) => {
            let _ = write!(
                text,
                "trend: encrypt {:.4} ms/MiB, decrypt {:.4} ms/MiB, mean encrypt/decrypt ratio {:.3}: {}",
                t.encrypt_slope,
                t.decrypt_slope,
                t.mean_ratio,
                if t.passed { "PASS" } else { "FAIL" }
            );
            if !t.passed {
                code = exit::FAILURE;
            }
            value["trend"] = json!(t);
        }
        Err(_) => {
            let _ = write!(text, "trend: not evaluated (needs at least 3 sizes)");
            value["trend"] = Value::Null;
        }
    }
    let mut o = Output::new(value, text);
    o.code = code;
    Ok(o)
}

pub fn integrity_cmd(cmd: &IntegrityCmd) -> Result<Output, CliError> {
    match cmd {
        IntegrityCmd::Verify {
            original,
            decrypted,
        } => {
            let report = integrity::verify_roundtrip(&fs::read(original)?, &fs::read(decrypted)?);
            let mut o = Output::new(json!(report), report.to_table().trim_end());
            if !report.verdict {
                o.code = exit::FAILURE;
            }
            Ok(o)
        }
        IntegrityCmd::Digest { file, algorithm } => {
            let data = fs::read(file)?;
            let algs: Vec<DigestAlgorithm> = match algorithm {
                Some(a) => vec![a.parse().map_err(CliError::Usage)?],
                None => DigestAlgorithm::ALL.to_vec(),
            };
            let mut text = String::new();
            let mut map = serde_json::Map::new();
            for alg in algs {
                let d = integrity::digest(&data, alg);
                let _ = writeln!(text, "{}  {}", alg.name(), d);
                map.insert(alg.name().to_owned(), json!(d));
            }
            Ok(Output::new(
                json!({ "file": file.display().to_string(), "digests": map }),
                text.trim_end(),
            ))
        }
    }
}

pub fn serve(
    cfg: &Config,
    listen: &str,
    announce: &mut dyn std::io::Write,
) -> Result<Output, CliError> {
    let gw = Arc::new(open_gateway(cfg)?);
    let server = ApiServer::start(listen, gw)?;
    let _ = writeln!(announce, "listening on {}", server.url());
    let _ = announce.flush();
    server.join();
    Ok(ok("server stopped"))
}
