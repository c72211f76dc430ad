//! Multi-algorithm digests and original-versus-decrypted comparison.
//!
//! MD5 and SHA-1 are broken as cryptographic hashes and are reported only so
//! that the comparison covers the same four algorithms operators are used to
//! checking. SHA-256 is the digest recorded in resource metadata.

use std::fmt::{self, Write as _};

use md5::Md5;
use serde::{Deserialize, Serialize};
use sha1::Sha1;
use sha2::{Digest, Sha256, Sha512};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DigestAlgorithm {
    #[serde(rename = "MD5")]
    Md5,
    #[serde(rename = "SHA-1")]
    Sha1,
    #[serde(rename = "SHA-256")]
    Sha256,
    #[serde(rename = "SHA-512")]
    Sha512,
}

impl DigestAlgorithm {
    pub const ALL: [DigestAlgorithm; 4] = [
        DigestAlgorithm::Md5,
        DigestAlgorithm::Sha1,
        DigestAlgorithm::Sha256,
        DigestAlgorithm::Sha512,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DigestAlgorithm::Md5 => "MD5",
            DigestAlgorithm::Sha1 => "SHA-1",
            DigestAlgorithm::Sha256 => "SHA-256",
            DigestAlgorithm::Sha512 => "SHA-512",
        }
    }
}

impl fmt::Display for DigestAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DigestAlgorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "md5" => Ok(DigestAlgorithm::Md5),
            "sha1" => Ok(DigestAlgorithm::Sha1),
            "sha256" => Ok(DigestAlgorithm::Sha256),
            "sha512" => Ok(DigestAlgorithm::Sha512),
            _ => Err(format!("unknown digest algorithm {s:?}")),
        }
    }
}

/// Lowercase hex digest of `bytes`.
pub fn digest(bytes: &[u8], alg: DigestAlgorithm) -> String {
    match alg {
        DigestAlgorithm::Md5 => hex::encode(Md5::digest(bytes)),
        DigestAlgorithm::Sha1 => hex::encode(Sha1::digest(bytes)),
        DigestAlgorithm::Sha256 => hex::encode(Sha256::digest(bytes)),
        DigestAlgorithm::Sha512 => hex::encode(Sha512::digest(bytes)),
    }
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestRow {
    pub algorithm: DigestAlgorithm,
    pub original: String,
    pub decrypted: String,
    #[serde(rename = "match")]
    pub matches: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestReport {
    pub rows: Vec<DigestRow>,
    pub verdict: bool,
}

impl DigestReport {
    pub fn row(&self, alg: DigestAlgorithm) -> Option<&DigestRow> {
        self.rows.iter().find(|r| r.algorithm == alg)
    }

    /// Aligned text table, one row per algorithm followed by the verdict.
    pub fn to_table(&self) -> String {
        let alg_w = self
            .rows
            .iter()
            .map(|r| r.algorithm.name().len())
            .max()
            .unwrap_or(0)
            .max("ALGORITHM".len());
        let hex_w = self
            .rows
            .iter()
            .map(|r| r.original.len())
            .max()
            .unwrap_or(0)
            .max("ORIGINAL".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<alg_w$}  {:<hex_w$}  {:<hex_w$}  MATCH",
            "ALGORITHM", "ORIGINAL", "DECRYPTED"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<alg_w$}  {:<hex_w$}  {:<hex_w$}  {}",
                r.algorithm.name(),
                r.original,
                r.decrypted,
                if r.matches { "yes" } else { "NO" }
            );
        }
        let _ = writeln!(
            out,
            "verdict: {}",
            if self.verdict { "PASS" } else { "FAIL" }
        );
        out
    }
}

pub fn verify_roundtrip(original: &[u8], decrypted: &[u8]) -> DigestReport {
    let rows: Vec<DigestRow> = DigestAlgorithm::ALL
        .iter()
        .map(|&alg| {
            let a = digest(original, alg);
            let b = digest(decrypted, alg);
            DigestRow {
                algorithm: alg,
                matches: a == b,
                original: a,
                decrypted: b,
            }
        })
        .collect();
    let verdict = rows.iter().all(|r| r.matches);
    DigestReport { rows, verdict }
}
