//! Settings resolution: command-line flags, then `$HRBAC_HOME/config`, then
//! built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use hrbac_core::crypto::ModulusBits;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_FILE: &str = "config";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// On-disk form. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub private_store: Option<PathBuf>,
    /// Directory path or `http(s)://` URL.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub public_backend: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default_modulus_bits: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub override_enabled: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

impl ConfigFile {
    pub fn load(home: &Path) -> Result<Self, CliError> {
        let path = home.join(CONFIG_FILE);
        match fs::read_to_string(&path) {
            Ok(text) => toml::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(CliError::Io(e)),
        }
    }

    /// Written owner-only, since it may hold a token.
    pub fn save(&self, home: &Path) -> Result<(), CliError> {
        let text = toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        let path = home.join(CONFIG_FILE);
        fs::write(&path, text)?;
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            fs::set_permissions(&path, fs::Permissions::from_mode(0o600))?;
        }
        Ok(())
    }
}

/// Values given on the command line, before merging.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub home: Option<PathBuf>,
    pub actor: Option<String>,
    pub token: Option<String>,
    pub format: Option<Format>,
    pub public_backend: Option<String>,
    pub private_store: Option<PathBuf>,
    pub modulus_bits: Option<u32>,
    pub offline: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublicBackend {
    Dir(PathBuf),
    Url(String),
}

impl PublicBackend {
    pub fn parse(s: &str) -> Self {
        if s.starts_with("http://") || s.starts_with("https://") {
            PublicBackend::Url(s.to_owned())
        } else {
            PublicBackend::Dir(PathBuf::from(s))
        }
    }

    pub fn describe(&self) -> String {
        match self {
            PublicBackend::Dir(p) => p.display().to_string(),
            PublicBackend::Url(u) => u.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub home: PathBuf,
    pub private_store: PathBuf,
    pub public_backend: PublicBackend,
    pub default_modulus_bits: ModulusBits,
    pub override_enabled: bool,
    pub actor: Option<String>,
    pub token: Option<String>,
    pub format: Format,
    pub offline: bool,
}

fn default_home() -> PathBuf {
    std::env::var_os("HOME")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
        .join(".hrbac")
}

impl Config {
    pub fn resolve(flags: &Overrides) -> Result<Self, CliError> {
        let home = flags.home.clone().unwrap_or_else(default_home);
        let file = ConfigFile::load(&home)?;
        Self::merge(home, flags, file)
    }

    pub fn merge(home: PathBuf, flags: &Overrides, file: ConfigFile) -> Result<Self, CliError> {
        let bits = flags
            .modulus_bits
            .or(file.default_modulus_bits)
            .unwrap_or(2048);
        let default_modulus_bits = ModulusBits::try_from(bits).map_err(|_| {
            CliError::Config(format!("unsupported modulus size {bits}; use 1024 or 2048"))
        })?;
        let public_backend = flags
            .public_backend
            .clone()
            .or(file.public_backend)
            .map(|s| PublicBackend::parse(&s))
            .unwrap_or_else(|| PublicBackend::Dir(home.join("public")));
        Ok(Self {
            private_store: flags
                .private_store
                .clone()
                .or(file.private_store)
                .unwrap_or_else(|| home.join("private")),
            public_backend,
            default_modulus_bits,
            override_enabled: file.override_enabled.unwrap_or(false),
            actor: flags.actor.clone().or(file.actor),
            token: flags.token.clone().or(file.token),
            format: flags.format.or(file.format).unwrap_or_default(),
            offline: flags.offline,
            home,
        })
    }

    pub fn document_path(&self) -> PathBuf {
        self.private_store.join("state.json")
    }

    pub fn audit_path(&self) -> PathBuf {
        self.private_store.join("audit.log")
    }

    pub fn private_blob_dir(&self) -> PathBuf {
        self.private_store.join("blobs")
    }
}
