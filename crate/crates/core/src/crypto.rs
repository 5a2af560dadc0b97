//! Signature schemes.
//!
//! Two schemes share one interface: Ed25519 for real deployments, and a keyed
//! hash (HMAC-SHA256) for simulations, where the "public key" is the MAC secret
//! itself so that a test oracle can check signatures deterministically.

use std::fmt;
use std::sync::Arc;

use ed25519_dalek::{Signer as _, Verifier as _};
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use thiserror::Error;

type HmacSha256 = Hmac<Sha256>;

const TAG_ED25519: u8 = 0x01;
const TAG_KEYED_HASH: u8 = 0x02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Ed25519,
    KeyedHash,
}

impl Scheme {
    fn tag(self) -> u8 {
        match self {
            Scheme::Ed25519 => TAG_ED25519,
            Scheme::KeyedHash => TAG_KEYED_HASH,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, KeyError> {
        match tag {
            TAG_ED25519 => Ok(Scheme::Ed25519),
            TAG_KEYED_HASH => Ok(Scheme::KeyedHash),
            other => Err(KeyError::UnknownScheme(other)),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ed25519" => Ok(Scheme::Ed25519),
            "keyed-hash" => Ok(Scheme::KeyedHash),
            _ => Err(KeyError::UnknownSchemeName(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key must be 32 bytes, got {0}")]
    Length(usize),
    #[error("bytes are not a valid Ed25519 public key")]
    InvalidPoint,
    #[error("unknown scheme tag {0:#04x}")]
    UnknownScheme(u8),
    #[error("unknown scheme name {0:?}")]
    UnknownSchemeName(String),
}

#[derive(Clone)]
pub enum SecretKey {
    Ed25519(Box<ed25519_dalek::SigningKey>),
    KeyedHash([u8; 32]),
}

impl SecretKey {
    pub fn from_bytes(scheme: Scheme, bytes: &[u8]) -> Result<Self, KeyError> {
        let seed: [u8; 32] = bytes.try_into().map_err(|_| KeyError::Length(bytes.len()))?;
        Ok(match scheme {
            Scheme::Ed25519 => SecretKey::Ed25519(Box::new(ed25519_dalek::SigningKey::from_bytes(&seed))),
            Scheme::KeyedHash => SecretKey::KeyedHash(seed),
        })
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            SecretKey::Ed25519(_) => Scheme::Ed25519,
            SecretKey::KeyedHash(_) => Scheme::KeyedHash,
        }
    }

    pub fn public_key(&self) -> PublicKey {
        match self {
            SecretKey::Ed25519(sk) => PublicKey::Ed25519(sk.verifying_key()),
            SecretKey::KeyedHash(k) => PublicKey::KeyedHash(*k),
        }
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({:?}, ..)", self.scheme())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum PublicKey {
    Ed25519(ed25519_dalek::VerifyingKey),
    KeyedHash([u8; 32]),
}

impl PublicKey {
    pub fn from_bytes(scheme: Scheme, bytes: &[u8]) -> Result<Self, KeyError> {
        let raw: [u8; 32] = bytes.try_into().map_err(|_| KeyError::Length(bytes.len()))?;
        Ok(match scheme {
            Scheme::Ed25519 => {
                PublicKey::Ed25519(ed25519_dalek::VerifyingKey::from_bytes(&raw).map_err(|_| KeyError::InvalidPoint)?)
            }
            Scheme::KeyedHash => PublicKey::KeyedHash(raw),
        })
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            PublicKey::Ed25519(_) => Scheme::Ed25519,
            PublicKey::KeyedHash(_) => Scheme::KeyedHash,
        }
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        match self {
            PublicKey::Ed25519(pk) => pk.as_bytes(),
            PublicKey::KeyedHash(k) => k,
        }
    }

    /// Scheme tag followed by the 32 key bytes.
    pub fn to_tagged_bytes(&self) -> [u8; 33] {
        let mut out = [0u8; 33];
        out[0] = self.scheme().tag();
        out[1..].copy_from_slice(self.as_bytes());
        out
    }

    pub fn from_tagged_bytes(bytes: &[u8]) -> Result<Self, KeyError> {
        match bytes.split_first() {
            Some((&tag, rest)) => Self::from_bytes(Scheme::from_tag(tag)?, rest),
            None => Err(KeyError::Length(0)),
        }
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PublicKey({:?}, {})",
            self.scheme(),
            hex::encode(&self.as_bytes()[..6])
        )
    }
}

/// Opaque signature bytes. Cheap to clone.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(Arc<[u8]>);

impl Signature {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Signature(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = &self.0;
        write!(f, "Signature({}..)", hex::encode(&b[..b.len().min(6)]))
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub sk: SecretKey,
    pub pk: PublicKey,
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(scheme: Scheme, rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(scheme, seed)
    }

    pub fn from_seed(scheme: Scheme, seed: [u8; 32]) -> Self {
        let sk = match scheme {
            Scheme::Ed25519 => SecretKey::Ed25519(Box::new(ed25519_dalek::SigningKey::from_bytes(&seed))),
            Scheme::KeyedHash => SecretKey::KeyedHash(seed),
        };
        let pk = sk.public_key();
        KeyPair { sk, pk }
    }
}

pub fn sign(sk: &SecretKey, m: &[u8]) -> Signature {
    match sk {
        SecretKey::Ed25519(sk) => Signature::from_bytes(&sk.sign(m).to_bytes()),
        SecretKey::KeyedHash(k) => {
            let mut mac = HmacSha256::new_from_slice(k).expect("HMAC accepts any key length");
            mac.update(m);
            Signature::from_bytes(&mac.finalize().into_bytes())
        }
    }
}

/// Never panics; malformed signatures verify as false.
pub fn verify(pk: &PublicKey, m: &[u8], sigma: &Signature) -> bool {
    match pk {
        PublicKey::Ed25519(pk) => {
            let Ok(raw) = <[u8; 64]>::try_from(sigma.as_bytes()) else {
                return false;
            };
            let sig = ed25519_dalek::Signature::from_bytes(&raw);
            pk.verify(m, &sig).is_ok()
        }
        PublicKey::KeyedHash(k) => {
            let mut mac = HmacSha256::new_from_slice(k).expect("HMAC accepts any key length");
            mac.update(m);
            mac.verify_slice(sigma.as_bytes()).is_ok()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SCHEMES: [Scheme; 2] = [Scheme::Ed25519, Scheme::KeyedHash];

    fn random_msg(rng: &mut ChaCha8Rng) -> Vec<u8> {
        let len = rng.gen_range(0..64);
        (0..len).map(|_| rng.gen()).collect()
    }

    #[test]
    fn sign_then_verify() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for scheme in SCHEMES {
            for _ in 0..100 {
                let kp = KeyPair::generate(scheme, &mut rng);
                let m = random_msg(&mut rng);
                assert!(verify(&kp.pk, &m, &sign(&kp.sk, &m)));
            }
        }
    }

    #[test]
    fn other_message_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for scheme in SCHEMES {
            let kp = KeyPair::generate(scheme, &mut rng);
            for _ in 0..1000 {
                let m = random_msg(&mut rng);
                let mut m2 = random_msg(&mut rng);
                if m2 == m {
                    m2.push(0);
                }
                assert!(!verify(&kp.pk, &m2, &sign(&kp.sk, &m)));
            }
        }
    }

    #[test]
    fn other_key_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for scheme in SCHEMES {
            for _ in 0..1000 {
                let a = KeyPair::generate(scheme, &mut rng);
                let b = KeyPair::generate(scheme, &mut rng);
                let m = random_msg(&mut rng);
                assert!(!verify(&b.pk, &m, &sign(&a.sk, &m)));
            }
        }
    }

    #[test]
    fn zero_and_garbage_signatures_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for scheme in SCHEMES {
            let kp = KeyPair::generate(scheme, &mut rng);
            let m = b"message";
            let len = sign(&kp.sk, m).as_bytes().len();
            assert!(!verify(&kp.pk, m, &Signature::from_bytes(&vec![0; len])));
            assert!(!verify(&kp.pk, m, &Signature::from_bytes(&[])));
            assert!(!verify(&kp.pk, m, &Signature::from_bytes(&[0xff; 200])));
        }
    }

    #[test]
    fn single_bit_flips_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for scheme in SCHEMES {
            let kp = KeyPair::generate(scheme, &mut rng);
            for _ in 0..1000 {
                let m = random_msg(&mut rng);
                let mut bytes = sign(&kp.sk, &m).as_bytes().to_vec();
                let bit = rng.gen_range(0..bytes.len() * 8);
                bytes[bit / 8] ^= 1 << (bit % 8);
                assert!(!verify(&kp.pk, &m, &Signature::from_bytes(&bytes)));
            }
        }
    }

    #[test]
    fn malformed_keys() {
        assert_eq!(
            SecretKey::from_bytes(Scheme::Ed25519, &[1; 31]).unwrap_err(),
            KeyError::Length(31)
        );
        assert_eq!(
            PublicKey::from_tagged_bytes(&[0x09; 33]).unwrap_err(),
            KeyError::UnknownScheme(0x09)
        );
        let kp = KeyPair::from_seed(Scheme::Ed25519, [7; 32]);
        let tagged = kp.pk.to_tagged_bytes();
        assert_eq!(PublicKey::from_tagged_bytes(&tagged).unwrap(), kp.pk);
    }

    #[test]
    fn keyed_hash_is_deterministic() {
        let kp = KeyPair::from_seed(Scheme::KeyedHash, [9; 32]);
        assert_eq!(sign(&kp.sk, b"abc"), sign(&kp.sk, b"abc"));
    }
}
