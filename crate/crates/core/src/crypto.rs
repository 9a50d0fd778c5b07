//! Hashing and signing primitives behind a pluggable backend seam.
//!
//! The basic backend (SHA-256 + Ed25519) is the only one shipped. The
//! selective-disclosure and designated-verifier backends exist as named
//! slots so configuration can refer to them; selecting one fails with
//! [`CryptoError::UnsupportedBackend`].

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::Sha256;
use thiserror::Error;

pub const DIGEST_LEN: usize = 32;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const SEED_LEN: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("expected {expected} bytes, got {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("invalid hex: {0}")]
    Hex(String),
    #[error("invalid public key")]
    InvalidPublicKey,
    #[error("unsupported backend: {0}")]
    UnsupportedBackend(String),
}

fn fixed<const N: usize>(bytes: &[u8]) -> Result<[u8; N], CryptoError> {
    bytes.try_into().map_err(|_| CryptoError::WrongLength {
        expected: N,
        actual: bytes.len(),
    })
}

fn from_hex<const N: usize>(s: &str) -> Result<[u8; N], CryptoError> {
    let raw = hex::decode(s.trim()).map_err(|e| CryptoError::Hex(e.to_string()))?;
    fixed(&raw)
}

macro_rules! byte_newtype {
    ($name:ident, $len:expr) => {
        impl $name {
            pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
                fixed::<$len>(bytes).map(Self)
            }

            pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
                from_hex::<$len>(s).map(Self)
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }
        }

        impl AsRef<[u8]> for $name {
            fn as_ref(&self) -> &[u8] {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl FromStr for $name {
            type Err = CryptoError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::from_hex(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                Self::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

/// A 32-byte SHA-256 output.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; DIGEST_LEN]);
byte_newtype!(Digest, DIGEST_LEN);

impl Digest {
    /// Predecessor hash of the first ledger record.
    pub const ZERO: Digest = Digest([0u8; DIGEST_LEN]);
}

/// A 32-byte Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);
byte_newtype!(PublicKey, PUBLIC_KEY_LEN);

/// A 64-byte Ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);
byte_newtype!(Signature, SIGNATURE_LEN);

/// Signing key plus its public half. The secret never leaves this type
/// except through [`KeyPair::secret_bytes`] for key-file export.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn public_key(&self) -> PublicKey {
        self.public
    }

    pub fn secret_bytes(&self) -> [u8; SEED_LEN] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(self, message)
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

/// Which primitive family backs the governance layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// SHA-256 and Ed25519.
    Basic,
    /// BBS+ selective disclosure certificates.
    BbsPlus,
    /// Designated-verifier SNARK replay proofs.
    DvSnark,
}

impl FromStr for BackendKind {
    type Err = CryptoError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(Self::Basic),
            "bbs_plus" | "bbs+" => Ok(Self::BbsPlus),
            "dv_snark" => Ok(Self::DvSnark),
            other => Err(CryptoError::UnsupportedBackend(other.to_string())),
        }
    }
}

/// Primitive operations every backend must supply.
pub trait CryptoSuite: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn digest(&self, data: &[u8]) -> Digest;
    fn keypair_from_seed(&self, seed: &[u8]) -> Result<KeyPair, CryptoError>;
    fn sign(&self, key: &KeyPair, message: &[u8]) -> Signature;
    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct BasicSuite;

impl CryptoSuite for BasicSuite {
    fn kind(&self) -> BackendKind {
        BackendKind::Basic
    }

    fn digest(&self, data: &[u8]) -> Digest {
        use sha2::Digest as _;
        Digest(Sha256::digest(data).into())
    }

    fn keypair_from_seed(&self, seed: &[u8]) -> Result<KeyPair, CryptoError> {
        let seed = fixed::<SEED_LEN>(seed)?;
        let signing = SigningKey::from_bytes(&seed);
        let public = PublicKey(signing.verifying_key().to_bytes());
        Ok(KeyPair { signing, public })
    }

    fn sign(&self, key: &KeyPair, message: &[u8]) -> Signature {
        Signature(key.signing.sign(message).to_bytes())
    }

    fn verify(&self, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        let Ok(pk) = fixed::<PUBLIC_KEY_LEN>(public_key) else {
            return false;
        };
        let Ok(sig) = fixed::<SIGNATURE_LEN>(signature) else {
            return false;
        };
        let Ok(vk) = VerifyingKey::from_bytes(&pk) else {
            return false;
        };
        let sig = ed25519_dalek::Signature::from_bytes(&sig);
        vk.verify_strict(message, &sig).is_ok()
    }
}

static BASIC: BasicSuite = BasicSuite;

/// Resolve a backend. Only [`BackendKind::Basic`] is available.
pub fn suite(kind: BackendKind) -> Result<&'static dyn CryptoSuite, CryptoError> {
    match kind {
        BackendKind::Basic => Ok(&BASIC),
        BackendKind::BbsPlus => Err(CryptoError::UnsupportedBackend("bbs_plus".into())),
        BackendKind::DvSnark => Err(CryptoError::UnsupportedBackend("dv_snark".into())),
    }
}

pub fn digest(data: &[u8]) -> Digest {
    BASIC.digest(data)
}

/// Deterministic key derivation from 32 bytes of caller-supplied entropy.
pub fn generate_keypair(seed: &[u8]) -> Result<KeyPair, CryptoError> {
    BASIC.keypair_from_seed(seed)
}

/// Key generation from the operating system's entropy source.
pub fn generate_keypair_os() -> KeyPair {
    use rand::RngCore;
    let mut seed = [0u8; SEED_LEN];
    rand::rngs::OsRng.fill_bytes(&mut seed);
    BASIC
        .keypair_from_seed(&seed)
        .expect("seed has the right length")
}

pub fn sign(key: &KeyPair, message: &[u8]) -> Signature {
    BASIC.sign(key, message)
}

/// Total: malformed keys or signatures yield `false`, never an error.
pub fn verify_signature(public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
    BASIC.verify(public_key, message, signature)
}

/// Public key decompressed once for repeated verification.
#[derive(Clone, Debug)]
pub struct PreparedKey(VerifyingKey);

impl PreparedKey {
    pub fn new(key: &PublicKey) -> Option<Self> {
        VerifyingKey::from_bytes(key.as_bytes()).ok().map(Self)
    }

    pub fn verify(&self, message: &[u8], signature: &Signature) -> bool {
        let sig = ed25519_dalek::Signature::from_bytes(signature.as_bytes());
        self.0.verify_strict(message, &sig).is_ok()
    }
}
