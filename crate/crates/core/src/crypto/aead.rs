use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Nonce};
use rand::rngs::OsRng;
use rand::RngCore;
use zeroize::Zeroizing;

use super::CryptoError;

pub const DATA_KEY_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

const MAGIC: &[u8; 4] = b"HRB1";
const FORMAT_VERSION: u8 = 1;
const ALG_AES128_GCM: u8 = 1;
/// magic, version, alg, nonce
pub const HEADER_LEN: usize = 4 + 1 + 1 + NONCE_LEN;

pub(crate) fn fill_random(buf: &mut [u8]) -> Result<(), CryptoError> {
    OsRng
        .try_fill_bytes(buf)
        .map_err(|_| CryptoError::RandomnessUnavailable)
}

/// Per-object 128-bit AES key. The secret bytes are wiped on drop.
#[derive(Clone)]
pub struct DataKey {
    key_id: String,
    bytes: Zeroizing<[u8; DATA_KEY_LEN]>,
}

impl DataKey {
    pub fn generate() -> Result<Self, CryptoError> {
        let mut id = [0u8; 16];
        fill_random(&mut id)?;
        let mut bytes = Zeroizing::new([0u8; DATA_KEY_LEN]);
        fill_random(bytes.as_mut())?;
        Ok(Self {
            key_id: format!("dk-{}", hex::encode(id)),
            bytes,
        })
    }

    pub fn from_parts(key_id: impl Into<String>, bytes: [u8; DATA_KEY_LEN]) -> Self {
        Self {
            key_id: key_id.into(),
            bytes: Zeroizing::new(bytes),
        }
    }

    pub fn key_id(&self) -> &str {
        &self.key_id
    }

    pub fn bytes(&self) -> &[u8; DATA_KEY_LEN] {
        &self.bytes
    }

    fn cipher(&self) -> Aes128Gcm {
        Aes128Gcm::new_from_slice(self.bytes.as_ref()).expect("16-byte key")
    }
}

impl std::fmt::Debug for DataKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DataKey")
            .field("key_id", &self.key_id)
            .finish_non_exhaustive()
    }
}

/// Versioned AES-128-GCM container.
///
/// Wire layout: `"HRB1" | version=1 | alg=1 | nonce[12] | ciphertext | tag[16]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SealedBlob {
    nonce: [u8; NONCE_LEN],
    body: Vec<u8>,
}

impl SealedBlob {
    /// Encrypts under a fresh random nonce.
    pub fn seal(plaintext: &[u8], key: &DataKey, aad: &[u8]) -> Result<Self, CryptoError> {
        let mut nonce = [0u8; NONCE_LEN];
        fill_random(&mut nonce)?;
        Ok(Self::seal_with_nonce(plaintext, key, aad, nonce))
    }

    /// Deterministic sealing with a caller-chosen nonce. Reusing a nonce under
    /// the same key breaks GCM entirely; this exists for known-answer testing.
    pub fn seal_with_nonce(
        plaintext: &[u8],
        key: &DataKey,
        aad: &[u8],
        nonce: [u8; NONCE_LEN],
    ) -> Self {
        let body = key
            .cipher()
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: plaintext,
                    aad,
                },
            )
            .expect("GCM encryption is infallible below 64 GiB");
        Self { nonce, body }
    }

    /// Verifies the tag, then releases the plaintext.
    pub fn open(&self, key: &DataKey, aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
        key.cipher()
            .decrypt(
                Nonce::from_slice(&self.nonce),
                Payload {
                    msg: &self.body,
                    aad,
                },
            )
            .map_err(|_| CryptoError::AuthFailure)
    }

    pub fn nonce(&self) -> &[u8; NONCE_LEN] {
        &self.nonce
    }

    /// Ciphertext followed by the 16-byte tag.
    pub fn body(&self) -> &[u8] {
        &self.body
    }

    pub fn from_parts(nonce: [u8; NONCE_LEN], body: Vec<u8>) -> Result<Self, CryptoError> {
        if body.len() < TAG_LEN {
            return Err(CryptoError::Format("body shorter than tag".into()));
        }
        Ok(Self { nonce, body })
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.body.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.push(ALG_AES128_GCM);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < HEADER_LEN {
            return Err(CryptoError::Format("truncated header".into()));
        }
        if &bytes[..4] != MAGIC {
            return Err(CryptoError::Format("bad magic".into()));
        }
        if bytes[4] != FORMAT_VERSION {
            return Err(CryptoError::Format(format!(
                "unsupported version {}",
                bytes[4]
            )));
        }
        if bytes[5] != ALG_AES128_GCM {
            return Err(CryptoError::Format(format!(
                "unsupported algorithm {}",
                bytes[5]
            )));
        }
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(&bytes[6..HEADER_LEN]);
        Self::from_parts(nonce, bytes[HEADER_LEN..].to_vec())
    }
}
