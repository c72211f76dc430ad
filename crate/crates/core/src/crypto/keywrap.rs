use rand::rngs::OsRng;
use rsa::pkcs8::{
    DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey, LineEnding,
};
use rsa::traits::PublicKeyParts;
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use zeroize::Zeroizing;

use super::aead::{DataKey, DATA_KEY_LEN};
use super::CryptoError;
use crate::policy::RoleId;

pub const WRAP_SCHEME: &str = "RSA-OAEP-SHA256";
const SHA256_LEN: usize = 32;

/// Supported RSA modulus sizes. 2048 is the default; 1024 reproduces the
/// original deployment and should not be used for new data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum ModulusBits {
    Rsa1024,
    #[default]
    Rsa2048,
}

impl ModulusBits {
    pub fn bits(self) -> usize {
        match self {
            ModulusBits::Rsa1024 => 1024,
            ModulusBits::Rsa2048 => 2048,
        }
    }
}

impl TryFrom<u32> for ModulusBits {
    type Error = CryptoError;

    fn try_from(bits: u32) -> Result<Self, Self::Error> {
        match bits {
            1024 => Ok(ModulusBits::Rsa1024),
            2048 => Ok(ModulusBits::Rsa2048),
            other => Err(CryptoError::UnsupportedKeySize(other)),
        }
    }
}

impl From<ModulusBits> for u32 {
    fn from(value: ModulusBits) -> Self {
        value.bits() as u32
    }
}

/// Largest message OAEP-SHA256 can carry under a `modulus_len`-byte key.
pub fn oaep_capacity(modulus_len: usize) -> usize {
    modulus_len.saturating_sub(2 * SHA256_LEN + 2)
}

#[derive(Clone)]
pub struct RoleKeyPair {
    role: RoleId,
    modulus_bits: ModulusBits,
    public: RsaPublicKey,
    private: RsaPrivateKey,
}

impl RoleKeyPair {
    pub fn generate(role: RoleId, modulus_bits: ModulusBits) -> Result<Self, CryptoError> {
        let private = RsaPrivateKey::new(&mut OsRng, modulus_bits.bits())
            .map_err(|e| CryptoError::KeyGeneration(e.to_string()))?;
        Ok(Self {
            role,
            modulus_bits,
            public: private.to_public_key(),
            private,
        })
    }

    pub fn role(&self) -> &RoleId {
        &self.role
    }

    pub fn modulus_bits(&self) -> ModulusBits {
        self.modulus_bits
    }

    pub fn public_key(&self) -> &RsaPublicKey {
        &self.public
    }

    pub fn private_key(&self) -> &RsaPrivateKey {
        &self.private
    }

    pub fn to_stored(&self) -> Result<StoredRoleKey, CryptoError> {
        let private_pem = self
            .private
            .to_pkcs8_pem(LineEnding::LF)
            .map_err(|e| CryptoError::KeyEncoding(e.to_string()))?;
        let public_pem = self
            .public
            .to_public_key_pem(LineEnding::LF)
            .map_err(|e| CryptoError::KeyEncoding(e.to_string()))?;
        Ok(StoredRoleKey {
            role: self.role.clone(),
            modulus_bits: self.modulus_bits,
            public_pem,
            private_pem: Zeroizing::new(private_pem.to_string()),
        })
    }

    pub fn from_stored(stored: &StoredRoleKey) -> Result<Self, CryptoError> {
        let private = RsaPrivateKey::from_pkcs8_pem(&stored.private_pem)
            .map_err(|e| CryptoError::KeyEncoding(e.to_string()))?;
        let public = RsaPublicKey::from_public_key_pem(&stored.public_pem)
            .map_err(|e| CryptoError::KeyEncoding(e.to_string()))?;
        if private.to_public_key() != public {
            return Err(CryptoError::KeyEncoding(format!(
                "public and private halves disagree for role {}",
                stored.role
            )));
        }
        if public.size() * 8 != stored.modulus_bits.bits() {
            return Err(CryptoError::KeyEncoding(format!(
                "modulus of role {} is not {} bits",
                stored.role,
                stored.modulus_bits.bits()
            )));
        }
        Ok(Self {
            role: stored.role.clone(),
            modulus_bits: stored.modulus_bits,
            public,
            private,
        })
    }
}

impl std::fmt::Debug for RoleKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RoleKeyPair")
            .field("role", &self.role)
            .field("modulus_bits", &self.modulus_bits.bits())
            .finish_non_exhaustive()
    }
}

/// PEM-encoded key pair as persisted in the private store.
#[derive(Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StoredRoleKey {
    pub role: RoleId,
    pub modulus_bits: ModulusBits,
    pub public_pem: String,
    pub private_pem: Zeroizing<String>,
}

impl std::fmt::Debug for StoredRoleKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StoredRoleKey")
            .field("role", &self.role)
            .field("modulus_bits", &self.modulus_bits)
            .finish_non_exhaustive()
    }
}

/// A data key encrypted under one role's public key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrappedKey {
    pub role: RoleId,
    pub key_id: String,
    pub scheme: String,
    #[serde(with = "hex::serde")]
    pub ciphertext: Vec<u8>,
}

pub fn wrap_key(
    dk: &DataKey,
    role: &RoleId,
    public: &RsaPublicKey,
) -> Result<WrappedKey, CryptoError> {
    let modulus_len = public.size();
    if oaep_capacity(modulus_len) < DATA_KEY_LEN {
        return Err(CryptoError::KeyTooSmall(modulus_len * 8));
    }
    let ciphertext = public
        .encrypt(&mut OsRng, Oaep::new::<Sha256>(), dk.bytes())
        .map_err(|_| CryptoError::KeyTooSmall(modulus_len * 8))?;
    Ok(WrappedKey {
        role: role.clone(),
        key_id: dk.key_id().to_owned(),
        scheme: WRAP_SCHEME.to_owned(),
        ciphertext,
    })
}

/// Every failure mode collapses into [`CryptoError::UnwrapFailure`].
pub fn unwrap_key(wk: &WrappedKey, private: &RsaPrivateKey) -> Result<DataKey, CryptoError> {
    if wk.scheme != WRAP_SCHEME || wk.ciphertext.len() != private.size() {
        return Err(CryptoError::UnwrapFailure);
    }
    let plain = Zeroizing::new(
        private
            .decrypt(Oaep::new::<Sha256>(), &wk.ciphertext)
            .map_err(|_| CryptoError::UnwrapFailure)?,
    );
    let bytes: [u8; DATA_KEY_LEN] = plain
        .as_slice()
        .try_into()
        .map_err(|_| CryptoError::UnwrapFailure)?;
    Ok(DataKey::from_parts(wk.key_id.clone(), bytes))
}
