//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints exactly one PASS/FAIL line; the process fails if any does.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use hrbac_core::audit::{
    verify_chain, AuditAction, AuditDecision, AuditEntry, AuditLog, AuditRecord,
};
use hrbac_core::bench::{assert_trend, run_matrix};
use hrbac_core::crypto::{unwrap_key, CryptoError, DataKey, ModulusBits, RoleKeyPair, SealedBlob};
use hrbac_core::gateway::{
    resource_aad, Gateway, GatewayError, SessionContext, SystemParams, UploadStep,
};
use hrbac_core::integrity::{verify_roundtrip, DigestAlgorithm};
use hrbac_core::policy::{
    Action, ActorKind, DecisionReason, Permission, Policy, PolicyError, RoleId, UserId,
};
use hrbac_core::store::{Classification, Plane, CUSTODIAN_KEY_ID};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KIB: usize = 1024;
const MIB: usize = 1024 * 1024;

const ROUNDTRIP_FILES_PER_SIZE: usize = 20;
const ROUNDTRIP_BUDGET: Duration = Duration::from_secs(60);
const TREND_BUDGET: Duration = Duration::from_secs(300);
const TREND_REPETITIONS: usize = 5;
const ORACLE_HIERARCHIES: usize = 1000;
const ORACLE_BUDGET: Duration = Duration::from_secs(120);
/// Latency growth from 10 to 1000 roles must stay below `roles^EXPONENT`;
/// linear growth would be exponent 1.
const SCALING_EXPONENT_MAX: f64 = 0.8;
const TAMPER_TRIALS: usize = 100;
const AUDIT_LOG_LEN: usize = 100;
const AUDIT_MUTATION_TRIALS: usize = 50;
const NOW: u64 = 1_000;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("1 integrity round trip", roundtrip_integrity),
        ("2 performance trend", performance_trend),
        ("3 policy oracle equivalence", policy_oracle),
        ("4 functional scenarios", functional_scenarios),
        ("5 tamper rejection", tamper_rejection),
        ("6 audit chain", audit_chain),
        ("7 AEAD known answers", aead_known_answers),
        ("8 no partial writes", no_partial_writes),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  criterion {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name} ({secs:.1}s): {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
        .unwrap_or_else(|| "non-string panic".into())
}

// ----- shared fixtures -----

struct Org {
    gw: Gateway,
    admin: SessionContext,
}

impl Org {
    fn new(bits: ModulusBits, override_enabled: bool) -> Self {
        let gw = Gateway::in_memory(SystemParams {
            default_modulus_bits: bits,
            override_enabled,
            ..SystemParams::default()
        })
        .expect("gateway");
        let token = gw.bootstrap_admin("admin").expect("bootstrap");
        Self {
            gw,
            admin: SessionContext::new("admin", token, NOW),
        }
    }

    fn user(&self, id: &str, kind: ActorKind) -> SessionContext {
        let token = self.gw.add_user(&self.admin, id, kind).expect("add user");
        SessionContext::new(id, token, NOW)
    }

    fn role(&self, name: &str, juniors: &[&str]) -> RoleId {
        self.gw
            .add_role(&self.admin, name, juniors)
            .expect("add role")
    }

    fn assign(&self, user: &str, role: &str) {
        self.gw
            .assign_role(&self.admin, user, role)
            .expect("assign");
    }

    fn grant(&self, role: &str, pattern: &str, action: Action) {
        self.gw
            .grant_permission(&self.admin, role, pattern, action)
            .expect("grant");
    }
}

fn at(ctx: &SessionContext, now: u64) -> SessionContext {
    SessionContext::new(ctx.actor.clone(), ctx.token.clone(), now)
}

fn random_bytes(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    let mut v = vec![0u8; len];
    rng.fill_bytes(&mut v);
    v
}

fn denied_reason(err: &GatewayError) -> Option<String> {
    match err {
        GatewayError::AccessDenied(r) => Some(r.clone()),
        _ => None,
    }
}

// ----- 1 -----

fn roundtrip_integrity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let org = Org::new(ModulusBits::Rsa2048, false);
    org.role("Reader", &[]);
    let owner = org.user("owner", ActorKind::DataOwner);
    let reader = org.user("reader", ActorKind::EndUser);
    org.assign("reader", "Reader");
    let sizes = [KIB, 64 * KIB, MIB, 4 * MIB];
    let mut files = 0;
    for (si, &size) in sizes.iter().enumerate() {
        for i in 0..ROUNDTRIP_FILES_PER_SIZE {
            let id = format!("file-{si}-{i}");
            let data = random_bytes(&mut rng, size);
            let class = if i % 2 == 0 {
                Classification::Public
            } else {
                Classification::Confidential
            };
            org.gw
                .upload(&owner, &id, &data, class, &["Reader"])
                .map_err(|e| format!("upload {id}: {e}"))?;
            let back = org
                .gw
                .download(&reader, &id)
                .map_err(|e| format!("download {id}: {e}"))?;
            ensure!(back == data, "{id}: bytes differ");
            let report = verify_roundtrip(&data, &back);
            ensure!(report.verdict, "{id}: digest mismatch");
            for alg in DigestAlgorithm::ALL {
                let row = report
                    .row(alg)
                    .ok_or(format!("{id}: missing {}", alg.name()))?;
                ensure!(
                    row.matches && row.original == row.decrypted,
                    "{id}: {} differs",
                    alg.name()
                );
            }
            files += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure!(
        elapsed < ROUNDTRIP_BUDGET,
        "took {elapsed:?}, budget {ROUNDTRIP_BUDGET:?}"
    );
    Ok(format!(
        "{files}/{files} files identical under MD5, SHA-1, SHA-256, SHA-512"
    ))
}

// ----- 2 -----

fn performance_trend() -> Outcome {
    let start = Instant::now();
    let sizes: Vec<u64> = (0..=6).map(|k| (MIB as u64) << k).collect();
    let rows = run_matrix(&sizes, TREND_REPETITIONS).map_err(|e| e.to_string())?;
    let trend = assert_trend(&rows).map_err(|e| e.to_string())?;
    for r in &rows {
        println!(
            "      {:>3} MiB  encrypt {:>9.3} ms  decrypt {:>9.3} ms  ratio {:.3}",
            r.size_bytes >> 20,
            r.encrypt_ms,
            r.decrypt_ms,
            r.ratio
        );
    }
    let elapsed = start.elapsed();
    ensure!(
        trend.encrypt_slope > 0.0,
        "encrypt slope {} not positive",
        trend.encrypt_slope
    );
    ensure!(
        trend.decrypt_slope > 0.0,
        "decrypt slope {} not positive",
        trend.decrypt_slope
    );
    ensure!(trend.passed, "trend report did not pass");
    ensure!(
        elapsed < TREND_BUDGET,
        "took {elapsed:?}, budget {TREND_BUDGET:?}"
    );
    Ok(format!(
        "slopes {:.3} / {:.3} ms per MiB, mean encrypt/decrypt ratio {:.3}",
        trend.encrypt_slope, trend.decrypt_slope, trend.mean_ratio
    ))
}

// ----- 3 -----

/// Plain-data model of a policy, evaluated by exhaustive search.
#[derive(Default)]
struct Oracle {
    juniors: Vec<BTreeSet<usize>>,
    perms: Vec<Vec<(String, Action)>>,
    sod: Vec<(usize, usize)>,
    users: Vec<(ActorKind, BTreeSet<usize>)>,
    /// (to user, role, expires_at)
    delegations: Vec<(usize, usize, u64)>,
}

impl Oracle {
    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = vec![false; self.juniors.len()];
        let mut stack = vec![from];
        while let Some(r) = stack.pop() {
            if r == to {
                return true;
            }
            if !std::mem::replace(&mut seen[r], true) {
                stack.extend(self.juniors[r].iter().copied());
            }
        }
        false
    }

    fn violates(&self, held: &BTreeSet<usize>) -> bool {
        self.sod
            .iter()
            .any(|(a, b)| held.contains(a) && held.contains(b))
    }

    fn held(&self, user: usize, now: u64) -> BTreeSet<usize> {
        let mut held = self.users[user].1.clone();
        for &(to, role, exp) in &self.delegations {
            if to == user && now < exp {
                held.insert(role);
            }
        }
        held
    }

    fn effective(&self, user: usize, now: u64) -> BTreeSet<usize> {
        let held = self.held(user, now);
        (0..self.juniors.len())
            .filter(|&r| held.iter().any(|&h| self.reaches(h, r)))
            .collect()
    }

    fn decide(&self, user: usize, resource: &str, action: Action, now: u64) -> DecisionReason {
        if self.users[user].0 == ActorKind::EndUser && action == Action::Write {
            return DecisionReason::ReadOnlyActor;
        }
        if self.violates(&self.held(user, now)) {
            return DecisionReason::SodViolation;
        }
        let eff = self.effective(user, now);
        if eff.is_empty() {
            return DecisionReason::NoRole;
        }
        let granted = eff.iter().any(|&r| {
            self.perms[r].iter().any(|(p, a)| {
                *a == action
                    && match p.strip_suffix('*') {
                        Some(prefix) => resource.starts_with(prefix),
                        None => p == resource,
                    }
            })
        });
        if granted {
            DecisionReason::Granted
        } else {
            DecisionReason::NoPermission
        }
    }
}

const ORACLE_RESOURCES: [&str; 8] = [
    "doc-1", "doc-12", "doc-2", "img-1", "img-20", "log", "log-a", "x",
];
const ORACLE_PATTERNS: [&str; 11] = [
    "doc-1", "doc-12", "doc-*", "doc-1*", "img-*", "img-1", "log", "log*", "x", "*", "missing",
];
const KINDS: [ActorKind; 5] = [
    ActorKind::EndUser,
    ActorKind::DataOwner,
    ActorKind::RoleManager,
    ActorKind::Admin,
    ActorKind::Override,
];

fn rid(i: usize) -> RoleId {
    RoleId::new(format!("r{}", i + 1))
}

fn uid(i: usize) -> UserId {
    UserId::new(format!("u{i}"))
}

fn one_hierarchy(rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut p = Policy::new();
    let mut o = Oracle::default();
    let n_roles = rng.gen_range(1..=20);
    for i in 0..n_roles {
        let id = p
            .add_role(&format!("role{i}"), [])
            .map_err(|e| e.to_string())?;
        ensure!(id == rid(i), "unexpected id {id}");
        o.juniors.push(BTreeSet::new());
        o.perms.push(Vec::new());
    }
    for _ in 0..rng.gen_range(0..=40) {
        let (s, j) = (rng.gen_range(0..n_roles), rng.gen_range(0..n_roles));
        let cycle = s == j || o.reaches(j, s);
        match p.link_roles(&rid(s), &rid(j)) {
            Ok(()) if !cycle => {
                o.juniors[s].insert(j);
            }
            Err(PolicyError::CycleError { .. }) if cycle => {}
            other => return Err(format!("link {s}->{j}: got {other:?}, cycle={cycle}")),
        }
    }
    for _ in 0..rng.gen_range(0..=50) {
        let r = rng.gen_range(0..n_roles);
        let pat = ORACLE_PATTERNS[rng.gen_range(0..ORACLE_PATTERNS.len())];
        let action = if rng.gen_bool(0.6) {
            Action::Read
        } else {
            Action::Write
        };
        p.grant_permission(
            &rid(r),
            Permission::new(pat, action).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        o.perms[r].push((pat.to_owned(), action));
    }
    if n_roles >= 2 {
        for _ in 0..rng.gen_range(0..=3) {
            let a = rng.gen_range(0..n_roles);
            let b = rng.gen_range(0..n_roles);
            if a == b || o.sod.iter().any(|&c| c == (a, b) || c == (b, a)) {
                continue;
            }
            p.add_sod_constraint(&rid(a), &rid(b))
                .map_err(|e| e.to_string())?;
            o.sod.push((a, b));
        }
    }
    let n_users = rng.gen_range(1..=30);
    for u in 0..n_users {
        let kind = KINDS[rng.gen_range(0..KINDS.len())];
        p.add_user(uid(u), kind, String::new())
            .map_err(|e| e.to_string())?;
        o.users.push((kind, BTreeSet::new()));
        for _ in 0..rng.gen_range(0..=3) {
            let r = rng.gen_range(0..n_roles);
            let mut next = o.users[u].1.clone();
            next.insert(r);
            let conflict = o.violates(&next);
            match p.assign_role(&uid(u), &rid(r)) {
                Ok(()) if !conflict => o.users[u].1 = next,
                Err(PolicyError::SodViolation { .. }) if conflict => {}
                other => return Err(format!("assign {r} to u{u}: got {other:?}")),
            }
        }
    }
    for _ in 0..rng.gen_range(0..=5) {
        let (from, to) = (rng.gen_range(0..n_users), rng.gen_range(0..n_users));
        let r = rng.gen_range(0..n_roles);
        let ttl = rng.gen_range(1..=100);
        let held = o.users[from].1.contains(&r);
        let mut next = o.held(to, NOW);
        next.insert(r);
        let conflict = o.violates(&next);
        match p.delegate_role(&uid(from), &uid(to), &rid(r), ttl, NOW) {
            Ok(_) if held && !conflict => o.delegations.push((to, r, NOW + ttl)),
            Err(PolicyError::NotHeld { .. }) if !held => {}
            Err(PolicyError::SodViolation { .. }) if held && conflict => {}
            other => return Err(format!("delegate {r} u{from}->u{to}: got {other:?}")),
        }
    }
    let mut probes = 0;
    let times = [NOW, NOW + rng.gen_range(1..=100), NOW + 101];
    for u in 0..n_users {
        for &now in &times {
            let eff: BTreeSet<RoleId> = o.effective(u, now).into_iter().map(rid).collect();
            ensure!(
                p.effective_roles(&uid(u), now).map_err(|e| e.to_string())? == eff,
                "effective roles differ for u{u} at {now}"
            );
            for res in ORACLE_RESOURCES {
                for action in [Action::Read, Action::Write] {
                    let got = p
                        .check_access(&uid(u), res, action, now)
                        .map_err(|e| e.to_string())?;
                    let want = o.decide(u, res, action, now);
                    ensure!(
                        got.reason() == want,
                        "u{u} {action:?} {res} at {now}: engine {:?}, oracle {want:?}",
                        got.reason()
                    );
                    probes += 1;
                }
            }
        }
    }
    Ok(probes)
}

fn policy_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut probes = 0;
    for h in 0..ORACLE_HIERARCHIES {
        probes += one_hierarchy(&mut rng).map_err(|e| format!("hierarchy {h}: {e}"))?;
    }
    let elapsed = start.elapsed();
    ensure!(
        elapsed < ORACLE_BUDGET,
        "took {elapsed:?}, budget {ORACLE_BUDGET:?}"
    );
    Ok(format!(
        "{ORACLE_HIERARCHIES} hierarchies, {probes}/{probes} probes agree"
    ))
}

// ----- 4 -----

fn functional_scenarios() -> Outcome {
    let scenarios: [(&str, Check); 10] = [
        ("least privilege", least_privilege),
        ("separation of duties", separation_of_duties),
        ("scalability", scalability),
        ("auditing", auditing),
        ("policy management", policy_management),
        ("configuration flexibility", configuration_flexibility),
        ("delegation", delegation),
        ("hybrid cloud architecture", hybrid_cloud),
        ("role hierarchy management", role_hierarchy),
        ("operational awareness", operational_awareness),
    ];
    let mut failures = Vec::new();
    for (name, run) in scenarios {
        let result = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(format!("panicked: {}", panic_message(&p))));
        match result {
            Ok(detail) => println!("      ok    {name}: {detail}"),
            Err(why) => {
                println!("      FAIL  {name}: {why}");
                failures.push(name);
            }
        }
    }
    ensure!(
        failures.is_empty(),
        "failing scenarios: {}",
        failures.join(", ")
    );
    Ok(format!("{}/{} scenarios", scenarios.len(), scenarios.len()))
}

fn least_privilege() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, false);
    org.role("Engineer", &[]);
    org.role("Finance", &[]);
    let owner = org.user("owner", ActorKind::DataOwner);
    let eng = org.user("eng", ActorKind::EndUser);
    let idle = org.user("idle", ActorKind::EndUser);
    org.assign("eng", "Engineer");
    org.gw
        .upload(
            &owner,
            "design",
            b"d",
            Classification::Public,
            &["Engineer"],
        )
        .map_err(|e| e.to_string())?;
    org.gw
        .upload(
            &owner,
            "ledger",
            b"l",
            Classification::Confidential,
            &["Finance"],
        )
        .map_err(|e| e.to_string())?;

    ensure!(
        org.gw.download(&eng, "design").is_ok(),
        "granted read refused"
    );
    let e = org.gw.download(&eng, "ledger").unwrap_err();
    ensure!(
        denied_reason(&e).as_deref() == Some("NoPermission"),
        "ledger: {e}"
    );
    let e = org.gw.download(&idle, "design").unwrap_err();
    ensure!(
        denied_reason(&e).as_deref() == Some("NoRole"),
        "no role: {e}"
    );
    let d = org
        .gw
        .check_access(&eng, "eng", "design", Action::Write)
        .map_err(|e| e.to_string())?;
    ensure!(
        d.reason() == DecisionReason::ReadOnlyActor,
        "end user write: {:?}",
        d.reason()
    );
    // administrators manage policy but get no implicit data access
    ensure!(
        org.gw.download(&org.admin, "design").is_err(),
        "admin read data"
    );
    Ok("grant-only reads, NoRole, NoPermission, ReadOnlyActor, no admin data read".into())
}

fn separation_of_duties() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, false);
    org.role("Auditor", &[]);
    org.role("Accountant", &[]);
    org.gw
        .add_sod_constraint(&org.admin, "Auditor", "Accountant")
        .map_err(|e| e.to_string())?;
    org.user("a", ActorKind::EndUser);
    let b = org.user("b", ActorKind::EndUser);
    org.user("c", ActorKind::EndUser);
    org.assign("a", "Auditor");
    org.assign("b", "Accountant");
    org.assign("c", "Auditor");
    let e = org
        .gw
        .assign_role(&org.admin, "a", "Accountant")
        .unwrap_err();
    ensure!(
        matches!(e, GatewayError::Policy(PolicyError::SodViolation { .. })),
        "assign: {e}"
    );
    let e = org.gw.delegate_role(&b, "c", "Accountant", 60).unwrap_err();
    ensure!(
        matches!(e, GatewayError::Policy(PolicyError::SodViolation { .. })),
        "delegate: {e}"
    );
    let roles = org
        .gw
        .effective_roles(&org.admin, "a")
        .map_err(|e| e.to_string())?;
    ensure!(roles.len() == 1, "a holds {roles:?}");
    Ok("conflicting assignment and delegation both refused".into())
}

/// Median nanoseconds per decision over a 4-ary hierarchy of `n` roles in
/// which every role inherits from its parent.
fn decision_latency(n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut p = Policy::new();
    for i in 0..n {
        let juniors: Vec<RoleId> = if i == 0 {
            vec![]
        } else {
            vec![rid((i - 1) / 4)]
        };
        p.add_role(&format!("role{i}"), juniors).unwrap();
        p.grant_permission(
            &rid(i),
            Permission::new(&format!("res-{i}"), Action::Read).unwrap(),
        )
        .unwrap();
    }
    let users = 64;
    for u in 0..users {
        p.add_user(uid(u), ActorKind::EndUser, String::new())
            .unwrap();
        p.assign_role(&uid(u), &rid(rng.gen_range(0..n))).unwrap();
    }
    let probes: Vec<(UserId, String)> = (0..4096)
        .map(|_| {
            (
                uid(rng.gen_range(0..users)),
                format!("res-{}", rng.gen_range(0..n)),
            )
        })
        .collect();
    let mut batches = Vec::new();
    for round in 0..9 {
        let start = Instant::now();
        let mut granted = 0usize;
        for (u, r) in &probes {
            granted += p.check_access(u, r, Action::Read, NOW).unwrap().allowed() as usize;
        }
        std::hint::black_box(granted);
        if round > 0 {
            batches.push(start.elapsed().as_nanos() as f64 / probes.len() as f64);
        }
    }
    batches.sort_by(f64::total_cmp);
    batches[batches.len() / 2]
}

fn scalability() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let small = decision_latency(10, &mut rng);
    let large = decision_latency(1000, &mut rng);
    let exponent = (large / small).ln() / 100f64.ln();
    ensure!(
        exponent < SCALING_EXPONENT_MAX,
        "10 roles {small:.0} ns, 1000 roles {large:.0} ns: growth exponent {exponent:.2}"
    );
    Ok(format!(
        "10 roles {small:.0} ns, 1000 roles {large:.0} ns per decision, exponent {exponent:.2} < {SCALING_EXPONENT_MAX}"
    ))
}

fn auditing() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, true);
    org.role("R", &[]);
    org.role("S", &[]);
    let owner = org.user("owner", ActorKind::DataOwner);
    let reader = org.user("reader", ActorKind::EndUser);
    let ov = org.user("ov", ActorKind::Override);
    org.assign("reader", "R");
    let bad = SessionContext::new("reader", "wrong", NOW);
    let base = org.gw.audit_entries().len();

    // every mediated call, allowed or refused, must leave one entry
    let calls: Vec<(bool, Result<(), GatewayError>)> = vec![
        (
            true,
            org.gw
                .upload(&owner, "f", b"x", Classification::Public, &["R"])
                .map(drop),
        ),
        (true, org.gw.download(&reader, "f").map(drop)),
        (false, org.gw.download(&bad, "f").map(drop)),
        (false, org.gw.download(&reader, "missing").map(drop)),
        (
            false,
            org.gw
                .upload(&reader, "g", b"x", Classification::Public, &["R"])
                .map(drop),
        ),
        (true, org.gw.grant_resource_access(&owner, "f", "S")),
        (true, org.gw.revoke_resource_access(&owner, "f", "S")),
        (true, org.gw.rotate_resource_key(&owner, "f").map(drop)),
        (
            true,
            org.gw.override_download(&ov, "f", "incident 7").map(drop),
        ),
        (false, org.gw.override_download(&ov, "f", " ").map(drop)),
        (
            false,
            org.gw.override_download(&reader, "f", "curious").map(drop),
        ),
        (
            true,
            org.gw.grant_permission(&org.admin, "S", "f", Action::Read),
        ),
        (
            false,
            org.gw.grant_permission(&reader, "S", "f", Action::Read),
        ),
        (false, org.gw.add_role(&owner, "T", &[]).map(drop)),
        (true, org.gw.revoke_role(&org.admin, "reader", "R")),
        (false, org.gw.download(&reader, "f").map(drop)),
    ];
    let entries = org.gw.audit_entries();
    let new = &entries[base..];
    ensure!(
        new.len() == calls.len(),
        "{} calls, {} entries",
        calls.len(),
        new.len()
    );
    for (i, ((expect_ok, result), entry)) in calls.iter().zip(new).enumerate() {
        ensure!(result.is_ok() == *expect_ok, "call {i}: {result:?}");
        let want = if *expect_ok {
            AuditDecision::Allow
        } else {
            AuditDecision::Deny
        };
        ensure!(entry.decision == want, "call {i}: entry {entry:?}");
    }
    let flagged = new.iter().filter(|e| e.override_flag).count();
    ensure!(flagged == 1, "{flagged} override-flagged entries");
    ensure!(org.gw.audit_verify().valid, "chain invalid");
    Ok(format!(
        "{} mediated calls, {} entries, chain valid",
        calls.len(),
        new.len()
    ))
}

fn policy_management() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, false);
    org.role("Ops", &[]);
    org.user("op", ActorKind::EndUser);
    org.assign("op", "Ops");
    let check = |res: &str| -> Result<DecisionReason, String> {
        Ok(org
            .gw
            .check_access(&org.admin, "op", res, Action::Read)
            .map_err(|e| e.to_string())?
            .reason())
    };
    ensure!(
        check("runbook-1")? == DecisionReason::NoPermission,
        "granted before grant"
    );
    org.grant("Ops", "runbook-*", Action::Read);
    ensure!(
        check("runbook-1")? == DecisionReason::Granted,
        "not granted after grant"
    );
    ensure!(
        check("other")? == DecisionReason::NoPermission,
        "pattern too wide"
    );
    let removed = org
        .gw
        .revoke_permission(&org.admin, "Ops", "runbook-*", Action::Read)
        .map_err(|e| e.to_string())?;
    ensure!(removed, "revoke reported nothing removed");
    ensure!(
        check("runbook-1")? == DecisionReason::NoPermission,
        "granted after revoke"
    );
    org.gw
        .remove_role(&org.admin, "Ops")
        .map_err(|e| e.to_string())?;
    let e = org
        .gw
        .grant_permission(&org.admin, "Ops", "x", Action::Read)
        .unwrap_err();
    ensure!(
        matches!(e, GatewayError::Policy(PolicyError::UnknownRole(_))),
        "grant to removed role: {e}"
    );
    ensure!(
        check("runbook-1")? == DecisionReason::NoRole,
        "removed role still effective"
    );
    Ok("grant, revoke and role removal take effect immediately".into())
}

fn configuration_flexibility() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, false);
    org.role("A", &[]);
    org.role("B", &[]);
    let owner = org.user("owner", ActorKind::DataOwner);
    let a = org.user("a", ActorKind::EndUser);
    let b = org.user("b", ActorKind::EndUser);
    org.assign("a", "A");
    org.assign("b", "B");
    let v1 = org
        .gw
        .upload(
            &owner,
            "plan",
            b"secret plan",
            Classification::Public,
            &["A", "B"],
        )
        .map_err(|e| e.to_string())?;
    ensure!(
        org.gw.download(&b, "plan").is_ok(),
        "b cannot read before revoke"
    );
    let stale_b = v1
        .wrapped_keys
        .values()
        .find(|w| w.role.as_str() == "r2")
        .cloned()
        .ok_or("no key for B")?;

    org.gw
        .revoke_resource_access(&owner, "plan", "B")
        .map_err(|e| e.to_string())?;
    let v2 = org
        .gw
        .rotate_resource_key(&owner, "plan")
        .map_err(|e| e.to_string())?;
    ensure!(
        v2.version == v1.version + 1,
        "version {} -> {}",
        v1.version,
        v2.version
    );
    ensure!(
        v2.custodian_key.key_id != v1.custodian_key.key_id,
        "data key not replaced"
    );
    ensure!(
        org.gw.download(&a, "plan").map_err(|e| e.to_string())? == b"secret plan",
        "a lost access"
    );
    ensure!(org.gw.download(&b, "plan").is_err(), "b still reads");
    ensure!(
        org.gw.public_store().get(&v1.blob_ref.name).is_err(),
        "old blob left behind"
    );

    // a key captured before revocation does not open the rotated blob
    let doc = org.gw.document();
    let stored = doc
        .role_keys
        .iter()
        .find(|k| k.role.as_str() == "r2")
        .ok_or("no B keypair")?;
    let pair = RoleKeyPair::from_stored(stored).map_err(|e| e.to_string())?;
    let old_key = unwrap_key(&stale_b, pair.private_key()).map_err(|e| e.to_string())?;
    let blob = SealedBlob::from_bytes(
        &org.gw
            .public_store()
            .get(&v2.blob_ref.name)
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let r = blob.open(&old_key, &resource_aad("plan", v2.version));
    ensure!(
        matches!(r, Err(CryptoError::AuthFailure)),
        "stale key opened rotated blob"
    );
    Ok(format!(
        "revoked role locked out, rotated to version {}",
        v2.version
    ))
}

fn delegation() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, false);
    org.role("Lead", &[]);
    org.grant("Lead", "roadmap", Action::Read);
    let lead = org.user("lead", ActorKind::EndUser);
    org.user("temp", ActorKind::EndUser);
    org.assign("lead", "Lead");
    let ttl = 60;
    org.gw
        .delegate_role(&lead, "temp", "Lead", ttl)
        .map_err(|e| e.to_string())?;
    let reason = |now: u64| -> Result<DecisionReason, String> {
        Ok(org
            .gw
            .check_access(&at(&org.admin, now), "temp", "roadmap", Action::Read)
            .map_err(|e| e.to_string())?
            .reason())
    };
    ensure!(reason(NOW)? == DecisionReason::Granted, "inactive at start");
    ensure!(
        reason(NOW + ttl - 1)? == DecisionReason::Granted,
        "expired early"
    );
    ensure!(
        reason(NOW + ttl)? == DecisionReason::NoRole,
        "active at expiry instant"
    );
    let e = org
        .gw
        .delegate_role(&at(&lead, NOW), "temp", "Ghost", 10)
        .unwrap_err();
    ensure!(
        matches!(e, GatewayError::Policy(PolicyError::UnknownRole(_))),
        "unknown role: {e}"
    );
    Ok(format!("active on [t, t+{ttl}), gone at t+{ttl}"))
}

fn hybrid_cloud() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, false);
    org.role("R", &[]);
    let owner = org.user("owner", ActorKind::DataOwner);
    let public_marker = b"PUBLIC-MARKER-7d1f0c public brochure text ".repeat(64);
    let secret_marker = b"SECRET-MARKER-93ab44 salary table ".repeat(64);
    let p = org
        .gw
        .upload(
            &owner,
            "brochure",
            &public_marker,
            Classification::Public,
            &["R"],
        )
        .map_err(|e| e.to_string())?;
    let s = org
        .gw
        .upload(
            &owner,
            "salaries",
            &secret_marker,
            Classification::Confidential,
            &["R"],
        )
        .map_err(|e| e.to_string())?;
    ensure!(
        p.blob_ref.store == Plane::Public && s.blob_ref.store == Plane::Private,
        "wrong planes"
    );

    let public = org.gw.public_store();
    let private = org.gw.private_blob_store();
    let public_names = public.list().map_err(|e| e.to_string())?;
    let private_names = private.list().map_err(|e| e.to_string())?;
    ensure!(
        public_names == vec![p.blob_ref.name.clone()],
        "public plane holds {public_names:?}"
    );
    ensure!(
        private_names == vec![s.blob_ref.name.clone()],
        "private plane holds {private_names:?}"
    );

    let document = org.gw.document().to_json().map_err(|e| e.to_string())?;
    let audit: String = org
        .gw
        .audit_entries()
        .iter()
        .map(AuditEntry::to_line)
        .collect();
    let mut haystacks: Vec<(String, Vec<u8>)> = vec![
        ("document".into(), document.clone()),
        ("audit".into(), audit.into_bytes()),
    ];
    for n in &public_names {
        haystacks.push((
            format!("public/{n}"),
            public.get(n).map_err(|e| e.to_string())?,
        ));
    }
    for n in &private_names {
        haystacks.push((
            format!("private/{n}"),
            private.get(n).map_err(|e| e.to_string())?,
        ));
    }
    for (where_, bytes) in &haystacks {
        for needle in [&b"PUBLIC-MARKER"[..], b"SECRET-MARKER"] {
            ensure!(!contains(bytes, needle), "plaintext found in {where_}");
        }
    }
    // private key material and wrapped keys stay off the public plane
    for n in &public_names {
        let blob = public.get(n).map_err(|e| e.to_string())?;
        ensure!(
            !contains(&blob, b"PRIVATE KEY") && !contains(&blob, CUSTODIAN_KEY_ID.as_bytes()),
            "key material in public/{n}"
        );
    }
    ensure!(
        contains(&document, CUSTODIAN_KEY_ID.as_bytes()),
        "custodian key not in private document"
    );
    Ok(format!(
        "{} stores scanned, no plaintext outside the gateway",
        haystacks.len()
    ))
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

fn role_hierarchy() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, false);
    org.role("Engineer", &[]);
    org.role("Manager", &["Engineer"]);
    org.role("Director", &["Manager"]);
    let owner = org.user("owner", ActorKind::DataOwner);
    let dir = org.user("dir", ActorKind::EndUser);
    let eng = org.user("eng", ActorKind::EndUser);
    org.assign("dir", "Director");
    org.assign("eng", "Engineer");
    org.grant("Engineer", "blueprint-*", Action::Read);
    org.grant("Manager", "budget", Action::Read);
    org.gw
        .upload(
            &owner,
            "blueprint-7",
            b"s",
            Classification::Public,
            &["Engineer"],
        )
        .map_err(|e| e.to_string())?;
    org.gw
        .upload(
            &owner,
            "budget",
            b"b",
            Classification::Confidential,
            &["Manager"],
        )
        .map_err(|e| e.to_string())?;

    let eff = org
        .gw
        .effective_roles(&dir, "dir")
        .map_err(|e| e.to_string())?;
    ensure!(eff.len() == 3, "director effective roles {eff:?}");
    ensure!(
        org.gw.download(&dir, "blueprint-7").is_ok(),
        "director did not inherit engineer read"
    );
    ensure!(
        org.gw.download(&dir, "budget").is_ok(),
        "director did not inherit manager read"
    );
    ensure!(
        org.gw.download(&eng, "budget").is_err(),
        "engineer inherited upward"
    );
    let e = org
        .gw
        .link_roles(&org.admin, "Engineer", "Director")
        .unwrap_err();
    ensure!(
        matches!(e, GatewayError::Policy(PolicyError::CycleError { .. })),
        "cycle accepted: {e}"
    );
    org.gw
        .unlink_roles(&org.admin, "Director", "Manager")
        .map_err(|e| e.to_string())?;
    ensure!(
        org.gw.download(&dir, "blueprint-7").is_err(),
        "inheritance survived unlink"
    );
    Ok("three-level inheritance, no upward flow, cycles refused".into())
}

fn operational_awareness() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, true);
    org.role("R", &[]);
    let owner = org.user("owner", ActorKind::DataOwner);
    let reader = org.user("reader", ActorKind::EndUser);
    let ov = org.user("ov", ActorKind::Override);
    org.gw
        .upload(&owner, "f", b"x", Classification::Public, &["R"])
        .map_err(|e| e.to_string())?;
    for _ in 0..3 {
        let _ = org.gw.download(&reader, "f");
    }
    org.assign("reader", "R");
    org.gw.download(&reader, "f").map_err(|e| e.to_string())?;
    org.gw
        .override_download(&ov, "f", "audit drill")
        .map_err(|e| e.to_string())?;
    let _ = org
        .gw
        .download(&SessionContext::new("ghost", "t", NOW), "f");

    let s = org
        .gw
        .status(&org.admin, None, 5)
        .map_err(|e| e.to_string())?;
    let entries = org.gw.audit_entries();
    let denies = entries
        .iter()
        .filter(|e| e.decision == AuditDecision::Deny)
        .count();
    let overrides = entries
        .iter()
        .filter(|e| e.action == AuditAction::Override && e.decision == AuditDecision::Allow)
        .count();
    let users = org
        .gw
        .list_users(&org.admin)
        .map_err(|e| e.to_string())?
        .len();
    let resources = org
        .gw
        .list_resources(&org.admin)
        .map_err(|e| e.to_string())?
        .len();
    ensure!(
        s.audit_entries == entries.len(),
        "entries {} vs {}",
        s.audit_entries,
        entries.len()
    );
    ensure!(
        s.window_decisions == entries.len(),
        "decisions {}",
        s.window_decisions
    );
    ensure!(
        s.window_denies == denies && denies == 4,
        "denies {} vs {denies}",
        s.window_denies
    );
    ensure!(
        s.override_events == overrides && overrides == 1,
        "overrides {} vs {overrides}",
        s.override_events
    );
    ensure!(
        s.users == users && s.resources == resources,
        "users/resources differ"
    );
    ensure!(s.chain_valid, "chain invalid");
    ensure!(
        s.recent.as_slice() == &entries[entries.len() - 5..],
        "recent entries differ"
    );
    Ok(format!(
        "{} entries, {denies} denies, {overrides} override, matches recount",
        entries.len()
    ))
}

// ----- 5 -----

fn tamper_rejection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let org = Org::new(ModulusBits::Rsa1024, false);
    org.role("R", &[]);
    let owner = org.user("owner", ActorKind::DataOwner);
    let reader = org.user("reader", ActorKind::EndUser);
    org.assign("reader", "R");
    let data = random_bytes(&mut rng, 4 * KIB);
    let meta = org
        .gw
        .upload(&owner, "target", &data, Classification::Public, &["R"])
        .map_err(|e| e.to_string())?;
    let store = org.gw.public_store();
    let original = store.get(&meta.blob_ref.name).map_err(|e| e.to_string())?;
    let header = original.len() - data.len() - 16;
    let mut rejected = 0;
    for trial in 0..TAMPER_TRIALS {
        let mut bytes = original.clone();
        let pos = rng.gen_range(header..bytes.len());
        bytes[pos] ^= 1 << rng.gen_range(0..8);
        store
            .put(&meta.blob_ref.name, &bytes)
            .map_err(|e| e.to_string())?;
        match org.gw.download(&reader, "target") {
            Err(GatewayError::Crypto(CryptoError::AuthFailure)) => rejected += 1,
            Ok(_) => {
                return Err(format!(
                    "trial {trial}: plaintext released after flipping byte {pos}"
                ))
            }
            Err(e) => return Err(format!("trial {trial}: unexpected {e}")),
        }
    }
    store
        .put(&meta.blob_ref.name, &original)
        .map_err(|e| e.to_string())?;
    ensure!(
        org.gw
            .download(&reader, "target")
            .map_err(|e| e.to_string())?
            == data,
        "restored blob unreadable"
    );
    ensure!(rejected == TAMPER_TRIALS, "{rejected}/{TAMPER_TRIALS}");
    Ok(format!(
        "{rejected}/{TAMPER_TRIALS} AuthFailure, no plaintext released"
    ))
}

// ----- 6 -----

fn mutate_field(e: &mut AuditEntry, field: usize, rng: &mut ChaCha8Rng) -> &'static str {
    match field {
        0 => {
            e.seq += rng.gen_range(1..5);
            "seq"
        }
        1 => {
            e.ts += rng.gen_range(1..1000);
            "ts"
        }
        2 => {
            e.actor = UserId::new(format!("{}x", e.actor));
            "actor"
        }
        3 => {
            let others: Vec<AuditAction> = AuditAction::ALL
                .into_iter()
                .filter(|a| *a != e.action)
                .collect();
            e.action = others[rng.gen_range(0..others.len())];
            "action"
        }
        4 => {
            e.resource = match e.resource.take() {
                Some(r) => Some(format!("{r}-edited")),
                None => Some("planted".into()),
            };
            "resource"
        }
        5 => {
            e.decision = match e.decision {
                AuditDecision::Allow => AuditDecision::Deny,
                AuditDecision::Deny => AuditDecision::Allow,
            };
            "decision"
        }
        6 => {
            e.reason.push('!');
            "reason"
        }
        7 => {
            e.override_flag = !e.override_flag;
            "override_flag"
        }
        8 => {
            e.prev_hash[rng.gen_range(0..32)] ^= 0x80;
            "prev_hash"
        }
        _ => {
            e.entry_hash[rng.gen_range(0..32)] ^= 0x01;
            "entry_hash"
        }
    }
}

fn audit_chain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut log = AuditLog::in_memory();
    for i in 0..AUDIT_LOG_LEN {
        let action = AuditAction::ALL[i % AuditAction::ALL.len()];
        let decision = if rng.gen_bool(0.3) {
            AuditDecision::Deny
        } else {
            AuditDecision::Allow
        };
        let actor = UserId::new(format!("user{}", i % 7));
        let resource = (i % 3 != 0).then(|| format!("res-{i}"));
        let mut record = AuditRecord::new(
            NOW + i as u64,
            &actor,
            action,
            resource.as_deref(),
            decision,
            "Granted",
        );
        if action == AuditAction::Override && decision == AuditDecision::Allow {
            record = record.with_override();
        }
        log.append(record).map_err(|e| e.to_string())?;
    }
    let v = log.verify();
    ensure!(v.valid && v.entries == AUDIT_LOG_LEN, "fresh log: {v:?}");
    let mut fields = BTreeMap::new();
    let mut caught = 0;
    for trial in 0..AUDIT_MUTATION_TRIALS {
        let mut entries = log.entries().to_vec();
        let pos = rng.gen_range(0..entries.len());
        let field = mutate_field(&mut entries[pos], trial % 10, &mut rng);
        *fields.entry(field).or_insert(0) += 1;
        let v = verify_chain(&entries);
        let want = Some(pos as u64 + 1);
        ensure!(
            !v.valid && v.first_bad_seq == want,
            "trial {trial}: {field} at seq {}, got {v:?}",
            pos + 1
        );
        caught += 1;
    }
    Ok(format!("{AUDIT_LOG_LEN}-entry log valid; {caught}/{AUDIT_MUTATION_TRIALS} mutations located over {} fields", fields.len()))
}

// ----- 7 -----

/// (key, nonce, plaintext, aad, ciphertext || tag), all hex.
const AEAD_VECTORS: [(&str, &str, &str, &str, &str); 6] = [
    (
        "00000000000000000000000000000000",
        "000000000000000000000000",
        "",
        "",
        "58e2fccefa7e3061367f1d57a4e7455a",
    ),
    (
        "00000000000000000000000000000000",
        "000000000000000000000000",
        "00000000000000000000000000000000",
        "",
        "0388dace60b6a392f328c2b971b2fe78ab6e47d42cec13bdf53a67b21257bddf",
    ),
    (
        "feffe9928665731c6d6a8f9467308308",
        "cafebabefacedbaddecaf888",
        "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b391aafd255",
        "",
        "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e091473f59854d5c2af327cd64a62cf35abd2ba6fab4",
    ),
    (
        "feffe9928665731c6d6a8f9467308308",
        "cafebabefacedbaddecaf888",
        "d9313225f88406e5a55909c5aff5269a86a7a9531534f7da2e4c303d8a318a721c3c0c95956809532fcf0e2449a6b525b16aedf5aa0de657ba637b39",
        "feedfacedeadbeeffeedfacedeadbeefabaddad2",
        "42831ec2217774244b7221b784d0d49ce3aa212f2c02a4e035c17e2329aca12e21d514b25466931c7d8f6a5aac84aa051ba30b396a0aac973d58e0915bc94fbc3221a5db94fae95ae7121a47",
    ),
    (
        "000102030405060708090a0b0c0d0e0f",
        "101112131415161718191a1b",
        "",
        "00112233445566778899aabbccddeeff",
        "eaf7fb50335b324363f798ec9d41c132",
    ),
    (
        "000102030405060708090a0b0c0d0e0f",
        "101112131415161718191a1b",
        "48656c6c6f2c2067617465776179",
        "7265736f757263652d61",
        "8c4b6fc36063968876a93882a65e7f3e34a0149191e5f732c9b6c2ce0df7",
    ),
];

fn aead_known_answers() -> Outcome {
    let h = |s: &str| hex::decode(s).expect("vector hex");
    for (i, (key, nonce, pt, aad, expected)) in AEAD_VECTORS.iter().enumerate() {
        let key = DataKey::from_parts("kat", h(key).try_into().expect("16-byte key"));
        let nonce: [u8; 12] = h(nonce).try_into().expect("12-byte nonce");
        let blob = SealedBlob::seal_with_nonce(&h(pt), &key, &h(aad), nonce);
        ensure!(
            blob.body() == h(expected).as_slice(),
            "vector {i}: got {}",
            hex::encode(blob.body())
        );
        let opened = blob
            .open(&key, &h(aad))
            .map_err(|e| format!("vector {i}: {e}"))?;
        ensure!(opened == h(pt), "vector {i}: open mismatch");
        let parsed =
            SealedBlob::from_bytes(&blob.to_bytes()).map_err(|e| format!("vector {i}: {e}"))?;
        ensure!(
            parsed.body() == blob.body() && parsed.nonce() == &nonce,
            "vector {i}: container round trip"
        );
    }
    Ok(format!(
        "{}/{} vectors match",
        AEAD_VECTORS.len(),
        AEAD_VECTORS.len()
    ))
}

// ----- 8 -----

/// Every blob is referenced by metadata, and every metadata entry has its
/// blob, its custodian wrapping and one wrapping per granted role.
fn consistent(gw: &Gateway) -> Result<(), String> {
    let doc = gw.document();
    let mut referenced = HashSet::new();
    for meta in &doc.resources {
        let store = match meta.blob_ref.store {
            Plane::Public => gw.public_store(),
            Plane::Private => gw.private_blob_store(),
        };
        store
            .get(&meta.blob_ref.name)
            .map_err(|_| format!("{}: metadata without blob", meta.resource_id))?;
        ensure!(
            !meta.custodian_key.ciphertext.is_empty(),
            "{}: keyless metadata",
            meta.resource_id
        );
        ensure!(
            !meta.wrapped_keys.is_empty(),
            "{}: no role wrappings",
            meta.resource_id
        );
        referenced.insert((meta.blob_ref.store, meta.blob_ref.name.clone()));
    }
    for (plane, store) in [
        (Plane::Public, gw.public_store()),
        (Plane::Private, gw.private_blob_store()),
    ] {
        for name in store.list().map_err(|e| e.to_string())? {
            ensure!(
                referenced.contains(&(plane, name.clone())),
                "orphan blob {name} in {plane:?} plane"
            );
        }
    }
    ensure!(gw.audit_verify().valid, "audit chain broken");
    ensure!(
        doc.audit_head.seq == gw.audit_entries().len() as u64,
        "audit head out of step"
    );
    Ok(())
}

fn no_partial_writes() -> Outcome {
    let org = Org::new(ModulusBits::Rsa1024, false);
    org.role("R", &[]);
    org.role("S", &[]);
    let owner = org.user("owner", ActorKind::DataOwner);
    let reader = org.user("reader", ActorKind::EndUser);
    org.assign("reader", "R");
    org.gw
        .upload(
            &owner,
            "existing",
            b"version one",
            Classification::Confidential,
            &["R"],
        )
        .map_err(|e| e.to_string())?;
    let mut cases = 0;
    for step in UploadStep::ALL {
        for (id, class) in [
            ("fresh", Classification::Public),
            ("fresh", Classification::Confidential),
            ("existing", Classification::Public),
        ] {
            let before = org.gw.document().resources;
            let entries = org.gw.audit_entries().len();
            org.gw.inject_upload_fault(step);
            let r = org
                .gw
                .upload(&owner, id, b"replacement bytes", class, &["R", "S"]);
            ensure!(r.is_err(), "{step:?} {id}: upload succeeded despite fault");
            consistent(&org.gw).map_err(|e| format!("{step:?} {id} {class:?}: {e}"))?;
            ensure!(
                org.gw.document().resources == before,
                "{step:?} {id}: metadata changed"
            );
            let log = org.gw.audit_entries();
            ensure!(
                log.len() == entries + 1 && log[entries].decision == AuditDecision::Deny,
                "{step:?} {id}: failure not audited"
            );
            ensure!(
                org.gw
                    .download(&reader, "existing")
                    .map_err(|e| e.to_string())?
                    == b"version one",
                "{step:?}: existing resource damaged"
            );
            cases += 1;
        }
    }
    // the pipeline still works once the faults are gone
    org.gw
        .upload(&owner, "fresh", b"ok", Classification::Public, &["R"])
        .map_err(|e| e.to_string())?;
    consistent(&org.gw)?;
    Ok(format!(
        "{cases} faulted uploads across {} steps left stores consistent",
        UploadStep::ALL.len()
    ))
}
