use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Format;

#[derive(Debug, Parser)]
#[command(
    name = "hrbac",
    version,
    about = "Role-based access control storage gateway with envelope encryption"
)]
pub struct Cli {
    /// Gateway home directory.
    #[arg(long, global = true, env = "HRBAC_HOME")]
    pub home: Option<PathBuf>,
    /// Acting user id.
    #[arg(long = "as", global = true, value_name = "USER")]
    pub actor: Option<String>,
    /// Bearer token of the acting user.
    #[arg(long, global = true)]
    pub token: Option<String>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Start even if the public backend cannot be reached.
    #[arg(long, global = true)]
    pub offline: bool,
    /// Public store directory or http(s) URL.
    #[arg(long, global = true, value_name = "DIR|URL")]
    pub public_backend: Option<String>,
    /// Private store directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub private_store: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a new gateway and its first administrator.
    Init(InitArgs),
    /// Roles, permissions, users and system settings.
    #[command(subcommand)]
    Admin(AdminCmd),
    /// User-role assignment.
    #[command(subcommand, name = "rolemgr")]
    RoleMgr(RoleMgrCmd),
    /// Upload and manage owned resources.
    #[command(subcommand)]
    Owner(OwnerCmd),
    /// Read resources and inspect one's own access.
    #[command(subcommand)]
    User(UserCmd),
    /// Break-glass access.
    #[command(subcommand)]
    Override(OverrideCmd),
    /// Inspect and verify the audit log.
    #[command(subcommand)]
    Audit(AuditCmd),
    /// Encryption and decryption timing.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Compare files by digest.
    #[command(subcommand)]
    Integrity(IntegrityCmd),
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
    },
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long, default_value = "admin")]
    pub admin: String,
    /// RSA modulus for role keys: 1024 or 2048.
    #[arg(long)]
    pub modulus_bits: Option<u32>,
    #[arg(long)]
    pub override_enabled: bool,
    /// Also load the demo organisation and documents.
    #[arg(long)]
    pub demo: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ActionArg {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Admin,
    RoleManager,
    DataOwner,
    EndUser,
    Override,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ClassArg {
    Public,
    Confidential,
}

#[derive(Debug, Subcommand)]
pub enum AdminCmd {
    /// Create a role; prints its id.
    AddRole {
        #[arg(long)]
        name: String,
        /// Junior role (id or name); repeatable.
        #[arg(long = "junior")]
        juniors: Vec<String>,
    },
    /// Make SENIOR inherit JUNIOR's permissions.
    Link {
        #[arg(long)]
        senior: String,
        #[arg(long)]
        junior: String,
    },
    Unlink {
        #[arg(long)]
        senior: String,
        #[arg(long)]
        junior: String,
    },
    RemoveRole {
        #[arg(long)]
        role: String,
    },
    GrantPermission {
        #[arg(long)]
        role: String,
        /// Resource id, or a prefix ending in `*`.
        #[arg(long)]
        resource: String,
        #[arg(long, value_enum)]
        action: ActionArg,
    },
    RevokePermission {
        #[arg(long)]
        role: String,
        #[arg(long)]
        resource: String,
        #[arg(long, value_enum)]
        action: ActionArg,
    },
    /// Forbid any user from holding both roles.
    AddSod {
        #[arg(long)]
        role_a: String,
        #[arg(long)]
        role_b: String,
    },
    /// Register a user; prints their token.
    AddUser {
        #[arg(long)]
        id: String,
        #[arg(long, value_enum)]
        kind: KindArg,
    },
    ResetToken {
        #[arg(long)]
        id: String,
    },
    SetOverride {
        #[arg(long, action = clap::ArgAction::Set)]
        enabled: bool,
    },
    ListRoles,
    ListUsers,
    /// Load the demo organisation and documents.
    LoadDemo,
}

#[derive(Debug, Subcommand)]
pub enum RoleMgrCmd {
    Assign {
        #[arg(long)]
        user: String,
        #[arg(long)]
        role: String,
    },
    Revoke {
        #[arg(long)]
        user: String,
        #[arg(long)]
        role: String,
    },
    RevokeDelegation {
        #[arg(long)]
        id: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum OwnerCmd {
    Upload {
        #[arg(long)]
        resource: String,
        #[arg(long)]
        file: PathBuf,
        #[arg(long, value_enum, default_value = "public")]
        classification: ClassArg,
        /// Role allowed to read (id or name); repeatable.
        #[arg(long = "grant", required = true)]
        grants: Vec<String>,
    },
    Grant {
        #[arg(long)]
        resource: String,
        #[arg(long)]
        role: String,
    },
    Revoke {
        #[arg(long)]
        resource: String,
        #[arg(long)]
        role: String,
    },
    Rotate {
        #[arg(long)]
        resource: String,
    },
    List,
    Show {
        #[arg(long)]
        resource: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum UserCmd {
    Download {
        #[arg(long)]
        resource: String,
        /// Write here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lend one of your roles to another user for TTL seconds.
    Delegate {
        #[arg(long)]
        to: String,
        #[arg(long)]
        role: String,
        #[arg(long)]
        ttl: u64,
    },
    /// Effective roles (yours unless --user is given).
    Roles {
        #[arg(long)]
        user: Option<String>,
    },
    /// Evaluate an access decision without touching data.
    Check {
        #[arg(long)]
        resource: String,
        #[arg(long, value_enum)]
        action: ActionArg,
        #[arg(long)]
        user: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum OverrideCmd {
    Download {
        #[arg(long)]
        resource: String,
        /// Justification recorded in the audit log.
        #[arg(long)]
        reason: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum AuditCmd {
    /// Check the hash chain of a log file.
    Verify {
        /// Defaults to the gateway's own log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    Query {
        #[arg(long = "actor", id = "filter_actor")]
        actor: Option<String>,
        #[arg(long)]
        action: Option<String>,
        #[arg(long)]
        decision: Option<String>,
        /// Unix seconds, inclusive.
        #[arg(long)]
        since: Option<u64>,
        /// Unix seconds, inclusive.
        #[arg(long)]
        until: Option<u64>,
        /// Most recent N matches.
        #[arg(long)]
        limit: Option<usize>,
    },
    Status {
        /// Deny-rate window in seconds; whole log if omitted.
        #[arg(long)]
        window: Option<u64>,
        #[arg(long, default_value_t = 10)]
        recent: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    Run {
        /// Comma-separated sizes such as 64K,1M,4M.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["from", "to"])]
        sizes: Vec<String>,
        /// Smallest size of a doubling series.
        #[arg(long, requires = "to")]
        from: Option<String>,
        /// Largest size of a doubling series.
        #[arg(long, requires = "from")]
        to: Option<String>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[arg(long)]
        modulus_bits: Option<u32>,
        /// Also write the rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum IntegrityCmd {
    /// Compare an original and a decrypted file with four digests.
    Verify {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        decrypted: PathBuf,
    },
    Digest {
        #[arg(long)]
        file: PathBuf,
        /// MD5, SHA-1, SHA-256 or SHA-512; all four if omitted.
        #[arg(long)]
        algorithm: Option<String>,
    },
}
