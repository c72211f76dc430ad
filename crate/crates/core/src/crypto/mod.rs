//! Envelope encryption: each object is sealed with its own AES-128-GCM data
//! key, and that key is wrapped with RSA-OAEP (SHA-256) under the public key
//! of every role allowed to read the object.

mod aead;
mod keywrap;

use thiserror::Error;

pub use aead::{DataKey, SealedBlob, DATA_KEY_LEN, HEADER_LEN, NONCE_LEN, TAG_LEN};
pub use keywrap::{
    oaep_capacity, unwrap_key, wrap_key, ModulusBits, RoleKeyPair, StoredRoleKey, WrappedKey,
    WRAP_SCHEME,
};

use crate::policy::RoleId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("operating system randomness unavailable")]
    RandomnessUnavailable,
    #[error("authentication failed")]
    AuthFailure,
    #[error("malformed sealed blob: {0}")]
    Format(String),
    #[error("unsupported RSA modulus size: {0} bits")]
    UnsupportedKeySize(u32),
    #[error("RSA modulus of {0} bits cannot carry a data key")]
    KeyTooSmall(usize),
    #[error("key unwrap failed")]
    UnwrapFailure,
    #[error("key generation failed: {0}")]
    KeyGeneration(String),
    #[error("key encoding error: {0}")]
    KeyEncoding(String),
}

pub fn generate_data_key() -> Result<DataKey, CryptoError> {
    DataKey::generate()
}

pub fn seal(plaintext: &[u8], key: &DataKey, aad: &[u8]) -> Result<SealedBlob, CryptoError> {
    SealedBlob::seal(plaintext, key, aad)
}

pub fn open(blob: &SealedBlob, key: &DataKey, aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
    blob.open(key, aad)
}

pub fn generate_role_keypair(role: RoleId, modulus_bits: u32) -> Result<RoleKeyPair, CryptoError> {
    RoleKeyPair::generate(role, ModulusBits::try_from(modulus_bits)?)
}
