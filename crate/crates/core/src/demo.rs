//! A small fixed organisation and document set for trying the gateway out.
//!
//! Bulk project material is public; a few short records are confidential.
//! Payloads are pseudo-random but seeded, so every load produces the same
//! bytes.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gateway::{Gateway, GatewayError, SessionContext};
use crate::policy::{Action, ActorKind};
use crate::store::Classification;

#[derive(Debug, Clone)]
pub struct DemoFile {
    pub resource_id: &'static str,
    pub classification: Classification,
    pub size: usize,
    pub grant_roles: &'static [&'static str],
}

pub const ROLES: &[(&str, &[&str])] = &[
    ("Engineer", &[]),
    ("Auditor", &[]),
    ("Accountant", &[]),
    ("Manager", &["Engineer"]),
    ("Director", &["Manager", "Auditor"]),
];

pub const FILES: &[DemoFile] = &[
    DemoFile {
        resource_id: "design-spec.pdf",
        classification: Classification::Public,
        size: 512 * 1024,
        grant_roles: &["Engineer"],
    },
    DemoFile {
        resource_id: "build-artifacts.tar",
        classification: Classification::Public,
        size: 1024 * 1024,
        grant_roles: &["Engineer"],
    },
    DemoFile {
        resource_id: "training-video.mp4",
        classification: Classification::Public,
        size: 2 * 1024 * 1024,
        grant_roles: &["Engineer", "Auditor"],
    },
    DemoFile {
        resource_id: "market-report.docx",
        classification: Classification::Public,
        size: 256 * 1024,
        grant_roles: &["Manager"],
    },
    DemoFile {
        resource_id: "salaries.csv",
        classification: Classification::Confidential,
        size: 8 * 1024,
        grant_roles: &["Director"],
    },
    DemoFile {
        resource_id: "audit-findings.txt",
        classification: Classification::Confidential,
        size: 16 * 1024,
        grant_roles: &["Auditor"],
    },
    DemoFile {
        resource_id: "ledger.xlsx",
        classification: Classification::Confidential,
        size: 32 * 1024,
        grant_roles: &["Accountant"],
    },
];

pub fn payload(file: &DemoFile) -> Vec<u8> {
    let seed = crate::integrity::sha256(file.resource_id.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    let mut bytes = vec![0u8; file.size];
    rng.fill_bytes(&mut bytes);
    bytes
}

/// Creates the demo roles, an owner `demo-owner`, and uploads [`FILES`].
/// Returns the owner's token.
pub fn load(gw: &Gateway, admin: &SessionContext) -> Result<String, GatewayError> {
    for (name, juniors) in ROLES {
        gw.add_role(admin, name, juniors)?;
    }
    gw.add_sod_constraint(admin, "Auditor", "Accountant")?;
    gw.grant_permission(admin, "Engineer", "design-*", Action::Read)?;
    let token = gw.add_user(admin, "demo-owner", ActorKind::DataOwner)?;
    let owner = SessionContext::new("demo-owner", token.clone(), admin.now);
    for f in FILES {
        gw.upload(
            &owner,
            f.resource_id,
            &payload(f),
            f.classification,
            f.grant_roles,
        )?;
    }
    Ok(token)
}
