//! Domain types shared by every protocol module.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::codec::{encode_vote_body, CodecError, VoteBody};
use crate::crypto::{self, KeyPair, PublicKey, Scheme, SecretKey, Signature};

pub type Round = u64;
pub type SeqNum = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("resilience bound violated: n = {n} but 5*beta + 3*gamma + 1 = {needed} (beta = {beta}, gamma = {gamma})")]
    Resilience {
        n: usize,
        beta: usize,
        gamma: usize,
        needed: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("median of an empty list")]
pub struct EmptyMedian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("session identifier must be nonempty")]
pub struct EmptySessionId;

/// Element at index `⌊len/2⌋` of an ascending list.
pub fn median_of<T: Copy>(sorted: &[T]) -> Result<T, EmptyMedian> {
    sorted.get(sorted.len() / 2).copied().ok_or(EmptyMedian)
}

/// `(n, β, γ)` with the derived quorum `α = n − β − γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FaultProfile {
    n: usize,
    beta: usize,
    gamma: usize,
    alpha: usize,
}

impl FaultProfile {
    pub fn check(n: usize, beta: usize, gamma: usize) -> Result<Self, ProfileError> {
        let needed = beta
            .checked_mul(5)
            .and_then(|b| gamma.checked_mul(3).and_then(|g| b.checked_add(g)))
            .and_then(|s| s.checked_add(1))
            .unwrap_or(usize::MAX);
        if n < needed {
            return Err(ProfileError::Resilience { n, beta, gamma, needed });
        }
        Ok(FaultProfile {
            n,
            beta,
            gamma,
            alpha: n - beta - gamma,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }
}

impl<'de> Deserialize<'de> for FaultProfile {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            n: usize,
            beta: usize,
            gamma: usize,
        }
        let raw = Raw::deserialize(d)?;
        FaultProfile::check(raw.n, raw.beta, raw.gamma).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for FaultProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(n={}, beta={}, gamma={}, alpha={})",
            self.n, self.beta, self.gamma, self.alpha
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(pub u32);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

pub(crate) fn serialize_hex<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&hex::encode(bytes))
}

pub(crate) fn deserialize_hex<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let s = String::deserialize(d)?;
    hex::decode(s).map_err(serde::de::Error::custom)
}

/// An opaque transaction payload, compared by exact bytes.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tx(Arc<[u8]>);

impl Tx {
    pub fn new(bytes: impl AsRef<[u8]>) -> Self {
        Tx(bytes.as_ref().into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_heartbeat(&self) -> bool {
        heartbeat_round(self.as_bytes()).is_some()
    }
}

impl From<&[u8]> for Tx {
    fn from(b: &[u8]) -> Self {
        Tx::new(b)
    }
}

impl From<Vec<u8>> for Tx {
    fn from(b: Vec<u8>) -> Self {
        Tx(b.into())
    }
}

impl From<&str> for Tx {
    fn from(s: &str) -> Self {
        Tx::new(s.as_bytes())
    }
}

impl fmt::Debug for Tx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tx({self})")
    }
}

impl fmt::Display for Tx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = heartbeat_round(&self.0) {
            return write!(f, "HB@{r}");
        }
        match std::str::from_utf8(&self.0) {
            Ok(s) if s.chars().all(|c| c.is_ascii_graphic() || c == ' ') => write!(f, "{s:?}"),
            _ => write!(f, "0x{}", hex::encode(&self.0)),
        }
    }
}

impl Serialize for Tx {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_hex(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for Tx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        deserialize_hex(d).map(Tx::from)
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serialize_hex(self.as_bytes(), s)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        deserialize_hex(d).map(|b| Signature::from_bytes(&b))
    }
}

pub const HEARTBEAT_PREFIX: &[u8; 2] = b"HB";

/// `"HB" ‖ round` as 8 big-endian bytes.
pub fn heartbeat_tx(round: Round) -> Tx {
    let mut b = [0u8; 10];
    b[..2].copy_from_slice(HEARTBEAT_PREFIX);
    b[2..].copy_from_slice(&round.to_be_bytes());
    Tx::new(b)
}

pub fn heartbeat_round(tx: &[u8]) -> Option<Round> {
    if tx.len() != 10 || &tx[..2] != HEARTBEAT_PREFIX {
        return None;
    }
    let mut b = [0u8; 8];
    b.copy_from_slice(&tx[2..]);
    Some(Round::from_be_bytes(b))
}

/// Nonempty identifier of one protocol instance.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SessionId(Arc<[u8]>);

impl SessionId {
    pub fn new(bytes: impl AsRef<[u8]>) -> Result<Self, EmptySessionId> {
        let b = bytes.as_ref();
        if b.is_empty() {
            return Err(EmptySessionId);
        }
        Ok(SessionId(b.into()))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SessionId({})", Tx::new(&self.0))
    }
}

/// `r_max`: a finite round or `+∞`, which orders above every round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UpperRound {
    Finite(Round),
    Infinite,
}

impl UpperRound {
    pub fn finite(self) -> Option<Round> {
        match self {
            UpperRound::Finite(r) => Some(r),
            UpperRound::Infinite => None,
        }
    }
}

impl From<Round> for UpperRound {
    fn from(r: Round) -> Self {
        UpperRound::Finite(r)
    }
}

impl fmt::Display for UpperRound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UpperRound::Finite(r) => write!(f, "{r}"),
            UpperRound::Infinite => f.write_str("inf"),
        }
    }
}

/// A replica's signed statement that it saw `tx` at round `ts` as its `sn`-th vote.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vote {
    pub replica: ReplicaId,
    pub tx: Tx,
    pub ts: Round,
    pub sn: SeqNum,
    pub sigma: Signature,
}

impl Vote {
    pub fn signing_bytes(sid: &SessionId, tx: &Tx, ts: Round, sn: SeqNum) -> Result<Vec<u8>, CodecError> {
        encode_vote_body(&VoteBody {
            sid: sid.as_bytes(),
            tx: tx.as_bytes(),
            ts,
            sn,
        })
    }

    pub fn sign(
        sid: &SessionId,
        replica: ReplicaId,
        sk: &SecretKey,
        tx: Tx,
        ts: Round,
        sn: SeqNum,
    ) -> Result<Vote, CodecError> {
        let sigma = crypto::sign(sk, &Self::signing_bytes(sid, &tx, ts, sn)?);
        Ok(Vote {
            replica,
            tx,
            ts,
            sn,
            sigma,
        })
    }

    /// Same statement, ignoring the signature bytes.
    pub fn same_statement(&self, other: &Vote) -> bool {
        self.replica == other.replica && self.sn == other.sn && self.ts == other.ts && self.tx == other.tx
    }
}

/// The session identifier plus the public key of each replica, indexed by id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Committee {
    pub sid: SessionId,
    pub keys: Vec<PublicKey>,
}

impl Committee {
    pub fn new(sid: SessionId, keys: Vec<PublicKey>) -> Self {
        Committee { sid, keys }
    }

    /// Keys derived from `seed`, for simulations and tests.
    pub fn deterministic(sid: SessionId, scheme: Scheme, n: usize, seed: u64) -> (Self, Vec<SecretKey>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let pairs: Vec<KeyPair> = (0..n).map(|_| KeyPair::generate(scheme, &mut rng)).collect();
        let keys = pairs.iter().map(|p| p.pk).collect();
        let sks = pairs.into_iter().map(|p| p.sk).collect();
        (Committee { sid, keys }, sks)
    }

    pub fn n(&self) -> usize {
        self.keys.len()
    }

    pub fn replicas(&self) -> impl Iterator<Item = ReplicaId> + Clone {
        (0..self.keys.len() as u32).map(ReplicaId)
    }

    pub fn key(&self, r: ReplicaId) -> Option<&PublicKey> {
        self.keys.get(r.index())
    }

    pub fn verify_vote(&self, vote: &Vote) -> bool {
        let Some(pk) = self.key(vote.replica) else {
            return false;
        };
        match Vote::signing_bytes(&self.sid, &vote.tx, vote.ts, vote.sn) {
            Ok(m) => crypto::verify(pk, &m, &vote.sigma),
            Err(_) => false,
        }
    }
}

/// `(tx, r_min, r_max, r_conf)` as computed by one client.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransactionTrace {
    pub tx: Tx,
    pub r_min: Round,
    pub r_max: UpperRound,
    pub r_conf: Option<Round>,
}

impl TransactionTrace {
    pub fn is_confirmed(&self) -> bool {
        self.r_conf.is_some()
    }
}

/// `(T, r_perf)`. The flag records whether heartbeat transactions were kept in
/// `T`, so a verifier can recompute the trace set under the same convention.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PodData {
    pub traces: BTreeMap<Tx, TransactionTrace>,
    pub r_perf: Round,
    pub include_heartbeats: bool,
}

impl PodData {
    pub fn get(&self, tx: &Tx) -> Option<&TransactionTrace> {
        self.traces.get(tx)
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransactionTrace> {
        self.traces.values()
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }
}

/// Past-perfection certificate plus per-transaction certificates.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Certificates {
    pub c_pp: BTreeMap<ReplicaId, Vote>,
    pub c_tx: BTreeMap<Tx, BTreeMap<ReplicaId, Vote>>,
}

impl Certificates {
    pub fn votes(&self) -> impl Iterator<Item = &Vote> {
        self.c_tx.values().flat_map(|m| m.values())
    }

    pub fn vote_count(&self) -> usize {
        self.c_tx.values().map(BTreeMap::len).sum()
    }
}

/// One `read()` result: the data together with the certificates backing it.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct View {
    pub data: PodData,
    pub certs: Certificates,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn median_examples() {
        assert_eq!(median_of(&[7]), Ok(7));
        assert_eq!(median_of(&[1, 2, 3, 4]), Ok(3));
        assert_eq!(median_of(&[2, 2, 3, 4, 5, 6, 7]), Ok(4));
        assert_eq!(median_of::<u64>(&[]), Err(EmptyMedian));
    }

    #[test]
    fn median_with_infinity_last() {
        let v = [
            UpperRound::Finite(3),
            UpperRound::Finite(9),
            UpperRound::Infinite,
            UpperRound::Infinite,
        ];
        assert_eq!(median_of(&v), Ok(UpperRound::Infinite));
        assert!(UpperRound::Finite(u64::MAX) < UpperRound::Infinite);
    }

    #[test]
    fn profile_examples() {
        assert_eq!(FaultProfile::check(9, 1, 1).unwrap().alpha(), 7);
        assert_eq!(FaultProfile::check(5, 0, 1).unwrap().alpha(), 4);
        let err = FaultProfile::check(8, 1, 1).unwrap_err();
        assert_eq!(
            err,
            ProfileError::Resilience {
                n: 8,
                beta: 1,
                gamma: 1,
                needed: 9
            }
        );
        assert!(err.to_string().contains("5*beta + 3*gamma + 1"));
        assert!(FaultProfile::check(0, 0, 0).is_err());
        assert!(FaultProfile::check(10, usize::MAX, 0).is_err());
    }

    #[test]
    fn profile_deserialize_checks_bound() {
        let ok: FaultProfile = serde_json::from_str(r#"{"n":9,"beta":1,"gamma":1}"#).unwrap();
        assert_eq!(ok.alpha(), 7);
        assert!(serde_json::from_str::<FaultProfile>(r#"{"n":8,"beta":1,"gamma":1}"#).is_err());
    }

    #[test]
    fn heartbeats_are_distinct_per_round() {
        assert_ne!(heartbeat_tx(1), heartbeat_tx(2));
        assert_eq!(heartbeat_round(heartbeat_tx(77).as_bytes()), Some(77));
        assert!(heartbeat_tx(0).is_heartbeat());
        assert!(!Tx::from("HB").is_heartbeat());
        assert!(!Tx::from("payment-1").is_heartbeat());
    }

    #[test]
    fn session_id_nonempty() {
        assert_eq!(SessionId::new(b""), Err(EmptySessionId));
        assert!(SessionId::new(b"s").is_ok());
    }

    #[test]
    fn votes_verify_against_committee() {
        let sid = SessionId::new(b"sid").unwrap();
        for scheme in [Scheme::Ed25519, Scheme::KeyedHash] {
            let (committee, sks) = Committee::deterministic(sid.clone(), scheme, 3, 11);
            let v = Vote::sign(&sid, ReplicaId(1), &sks[1], Tx::from("a"), 4, 0).unwrap();
            assert!(committee.verify_vote(&v));
            let mut wrong_replica = v.clone();
            wrong_replica.replica = ReplicaId(2);
            assert!(!committee.verify_vote(&wrong_replica));
            let mut unknown = v.clone();
            unknown.replica = ReplicaId(9);
            assert!(!committee.verify_vote(&unknown));
            let mut bumped = v.clone();
            bumped.ts += 1;
            assert!(!committee.verify_vote(&bumped));
            let other_sid = Committee::new(SessionId::new(b"other").unwrap(), committee.keys.clone());
            assert!(!other_sid.verify_vote(&v));
        }
    }

    #[test]
    fn json_round_trip() {
        let sid = SessionId::new(b"sid").unwrap();
        let (_, sks) = Committee::deterministic(sid.clone(), Scheme::KeyedHash, 1, 0);
        let v = Vote::sign(&sid, ReplicaId(0), &sks[0], Tx::from("x"), 1, 2).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vote>(&s).unwrap(), v);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn median_matches_sort_then_index(mut v in proptest::collection::vec(any::<u64>(), 1..40)) {
            let mut oracle = v.clone();
            oracle.sort_unstable();
            let expected = oracle[oracle.len() / 2];
            v.sort();
            prop_assert_eq!(median_of(&v).unwrap(), expected);
        }

        #[test]
        fn profile_arithmetic(n in 0usize..200, beta in 0usize..40, gamma in 0usize..70) {
            match FaultProfile::check(n, beta, gamma) {
                Ok(p) => {
                    prop_assert_eq!(p.alpha() + p.beta() + p.gamma(), p.n());
                    prop_assert!(p.alpha() >= 4 * beta + 2 * gamma + 1);
                }
                Err(_) => prop_assert!(n < 5 * beta + 3 * gamma + 1),
            }
        }
    }
}
