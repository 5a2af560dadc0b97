//! Bid collection over a pod.
//!
//! Bidders write their bid at `t0`. A pre-appointed sequencer waits until its
//! past-perfect round exceeds `t0 + Δ`, then signs and writes back every bid it
//! holds together with its past-perfection certificate. Consumers take the
//! first such message confirmed by `t0 + 3Δ`, or give up with an empty result
//! once `t0 + 3Δ` is itself past-perfect.
//!
//! Everything written for one auction carries a sub-session prefix
//! (`len(ssid) ‖ ssid ‖ tag`) so that other pod traffic is ignored.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::client::Client;
use crate::codec::{read_vote_body, CodecError, Decoder, Encoder};
use crate::crypto::{self, PublicKey, SecretKey, Signature};
use crate::types::{ReplicaId, Round, Tx, Vote};

pub const TAG_BID: u8 = 0x01;
pub const TAG_BIDS: u8 = 0x02;
const SIGNING_DOMAIN: &[u8] = b"bidset/bids/v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BidsetConfig {
    pub t0: Round,
    pub delta: Round,
    pub ssid: Vec<u8>,
    pub sequencer_pk: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BidsetError {
    #[error("Delta must be at least 1")]
    ZeroDelta,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

impl BidsetConfig {
    pub fn new(t0: Round, delta: Round, ssid: Vec<u8>, sequencer_pk: PublicKey) -> Result<Self, BidsetError> {
        if delta == 0 {
            return Err(BidsetError::ZeroDelta);
        }
        Ok(BidsetConfig {
            t0,
            delta,
            ssid,
            sequencer_pk,
        })
    }

    /// The sequencer acts once its past-perfect round exceeds this.
    pub fn sequencer_deadline(&self) -> Round {
        self.t0 + self.delta
    }

    /// Latest admissible confirmation round of a BIDS message.
    pub fn consumer_deadline(&self) -> Round {
        self.t0 + 3 * self.delta
    }

    fn prefix(&self, tag: u8) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.bytes(&self.ssid).expect("ssid fits a length prefix").u8(tag);
        enc.finish()
    }

    fn strip<'a>(&self, tx: &'a [u8], tag: u8) -> Option<&'a [u8]> {
        tx.strip_prefix(self.prefix(tag).as_slice())
    }

    pub fn bid_tx(&self, bid: &[u8]) -> Tx {
        let mut b = self.prefix(TAG_BID);
        b.extend_from_slice(bid);
        Tx::from(b)
    }

    /// The bid carried by `tx`, if it is a bid of this session.
    pub fn parse_bid<'a>(&self, tx: &'a Tx) -> Option<&'a [u8]> {
        self.strip(tx.as_bytes(), TAG_BID)
    }

    pub fn bids_tx(&self, msg: &BidsMessage) -> Tx {
        let mut b = self.prefix(TAG_BIDS);
        b.extend_from_slice(&msg.encode_body().expect("BIDS body fits length prefixes"));
        Tx::from(b)
    }

    /// The BIDS message carried by `tx`, if it is one of this session.
    pub fn parse_bids(&self, tx: &Tx) -> Option<BidsMessage> {
        BidsMessage::decode_body(self.strip(tx.as_bytes(), TAG_BIDS)?).ok()
    }

    pub fn verify_bids(&self, msg: &BidsMessage) -> bool {
        match bids_signing_bytes(&self.ssid, &msg.bids, &msg.c_bid) {
            Ok(m) => crypto::verify(&self.sequencer_pk, &m, &msg.sigma),
            Err(_) => false,
        }
    }
}

/// `(B, C_bid, σ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct BidsMessage {
    pub bids: BTreeSet<Tx>,
    pub c_bid: BTreeMap<ReplicaId, Vote>,
    pub sigma: Signature,
}

pub(crate) fn write_vote(enc: &mut Encoder, v: &Vote, sid: &[u8]) -> Result<(), CodecError> {
    enc.u32(v.replica.0).bytes(v.sigma.as_bytes())?;
    enc.raw(&crate::codec::encode_vote_body(&crate::codec::VoteBody {
        sid,
        tx: v.tx.as_bytes(),
        ts: v.ts,
        sn: v.sn,
    })?);
    Ok(())
}

pub(crate) fn read_vote(dec: &mut Decoder<'_>) -> Result<(Vote, Vec<u8>), CodecError> {
    let replica = ReplicaId(dec.u32()?);
    let sigma = Signature::from_bytes(dec.bytes()?);
    let body = read_vote_body(dec)?;
    Ok((
        Vote {
            replica,
            tx: Tx::new(body.tx),
            ts: body.ts,
            sn: body.sn,
            sigma,
        },
        body.sid.to_vec(),
    ))
}

fn write_bids_and_cert(
    enc: &mut Encoder,
    bids: &BTreeSet<Tx>,
    c_bid: &BTreeMap<ReplicaId, Vote>,
) -> Result<(), CodecError> {
    enc.count(bids.len())?;
    for b in bids {
        enc.bytes(b.as_bytes())?;
    }
    enc.count(c_bid.len())?;
    for v in c_bid.values() {
        write_vote(enc, v, b"")?;
    }
    Ok(())
}

/// The sequencer signs the session, the sorted bids and its certificate.
pub fn bids_signing_bytes(
    ssid: &[u8],
    bids: &BTreeSet<Tx>,
    c_bid: &BTreeMap<ReplicaId, Vote>,
) -> Result<Vec<u8>, CodecError> {
    let mut enc = Encoder::new();
    enc.bytes(SIGNING_DOMAIN)?.bytes(ssid)?;
    write_bids_and_cert(&mut enc, bids, c_bid)?;
    Ok(enc.finish())
}

impl BidsMessage {
    pub fn sign(ssid: &[u8], sk: &SecretKey, bids: BTreeSet<Tx>, c_bid: BTreeMap<ReplicaId, Vote>) -> Self {
        let m = bids_signing_bytes(ssid, &bids, &c_bid).expect("BIDS body fits length prefixes");
        BidsMessage {
            sigma: crypto::sign(sk, &m),
            bids,
            c_bid,
        }
    }

    pub fn encode_body(&self) -> Result<Vec<u8>, CodecError> {
        let mut enc = Encoder::new();
        write_bids_and_cert(&mut enc, &self.bids, &self.c_bid)?;
        enc.bytes(self.sigma.as_bytes())?;
        Ok(enc.finish())
    }

    pub fn decode_body(input: &[u8]) -> Result<Self, CodecError> {
        let mut dec = Decoder::new(input);
        let mut bids = BTreeSet::new();
        for _ in 0..dec.count()? {
            if !bids.insert(Tx::new(dec.bytes()?)) {
                return Err(CodecError::Malformed("duplicate bid"));
            }
        }
        let mut c_bid = BTreeMap::new();
        for _ in 0..dec.count()? {
            let (v, _) = read_vote(&mut dec)?;
            if c_bid.insert(v.replica, v).is_some() {
                return Err(CodecError::Malformed("duplicate replica in certificate"));
            }
        }
        let sigma = Signature::from_bytes(dec.bytes()?);
        dec.finish()?;
        Ok(BidsMessage { bids, c_bid, sigma })
    }
}

pub struct Bidder;

impl Bidder {
    /// Transaction an honest bidder writes at `t0`.
    pub fn submit_bid(config: &BidsetConfig, bid: &[u8]) -> Tx {
        config.bid_tx(bid)
    }
}

/// Polled once per round against the sequencer's own pod client.
#[derive(Debug, Clone)]
pub struct Sequencer {
    config: BidsetConfig,
    sk: SecretKey,
    output: Option<(Round, BidsMessage)>,
}

impl Sequencer {
    pub fn new(config: BidsetConfig, sk: SecretKey) -> Self {
        Sequencer {
            config,
            sk,
            output: None,
        }
    }

    pub fn config(&self) -> &BidsetConfig {
        &self.config
    }

    pub fn output(&self) -> Option<&(Round, BidsMessage)> {
        self.output.as_ref()
    }

    /// Returns the BIDS transaction to write, once.
    pub fn poll(&mut self, client: &Client, now: Round) -> Option<Tx> {
        if self.output.is_some() || now < self.config.t0 {
            return None;
        }
        if client.r_perf() <= self.config.sequencer_deadline() {
            return None;
        }
        let data = client.read_data();
        let bids = data
            .traces
            .keys()
            .filter_map(|tx| self.config.parse_bid(tx).map(Tx::new))
            .collect();
        let c_bid = client.certificates().c_pp;
        let msg = BidsMessage::sign(&self.config.ssid, &self.sk, bids, c_bid);
        let tx = self.config.bids_tx(&msg);
        self.output = Some((now, msg));
        Some(tx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResultAux {
    Bids { tx: Tx, r_conf: Round, msg: BidsMessage },
    Empty { c_pp: BTreeMap<ReplicaId, Vote> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BidsetResult {
    pub bids: BTreeSet<Tx>,
    pub aux: ResultAux,
    pub round: Round,
    /// Other validly signed BIDS messages that also qualified.
    pub equivocation: Vec<BidsMessage>,
}

#[derive(Debug, Clone)]
pub struct Consumer {
    config: BidsetConfig,
    result: Option<BidsetResult>,
}

impl Consumer {
    pub fn new(config: BidsetConfig) -> Self {
        Consumer { config, result: None }
    }

    pub fn result(&self) -> Option<&BidsetResult> {
        self.result.as_ref()
    }

    /// Emits the result event at most once.
    pub fn poll(&mut self, client: &Client, now: Round) -> Option<&BidsetResult> {
        if self.result.is_some() || now < self.config.t0 {
            return None;
        }
        let data = client.read_data();
        let deadline = self.config.consumer_deadline();
        let mut qualifying: Vec<(Round, &Tx, BidsMessage)> = data
            .iter()
            .filter_map(|t| {
                let r_conf = t.r_conf.filter(|r| *r <= deadline)?;
                let msg = self.config.parse_bids(&t.tx)?;
                self.config.verify_bids(&msg).then_some((r_conf, &t.tx, msg))
            })
            .collect();
        qualifying.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut qualifying = qualifying.into_iter();
        if let Some((r_conf, tx, msg)) = qualifying.next() {
            let equivocation = qualifying.map(|(_, _, m)| m).filter(|m| *m != msg).collect();
            self.result = Some(BidsetResult {
                bids: msg.bids.clone(),
                aux: ResultAux::Bids {
                    tx: tx.clone(),
                    r_conf,
                    msg,
                },
                round: now,
                equivocation,
            });
        } else if data.r_perf > deadline {
            self.result = Some(BidsetResult {
                bids: BTreeSet::new(),
                aux: ResultAux::Empty {
                    c_pp: client.certificates().c_pp,
                },
                round: now,
                equivocation: Vec::new(),
            });
        }
        self.result.as_ref()
    }
}

fn numeric_bids(bids: &BTreeSet<Tx>) -> Vec<u64> {
    let mut v: Vec<u64> = bids
        .iter()
        .filter_map(|b| std::str::from_utf8(b.as_bytes()).ok()?.parse().ok())
        .collect();
    v.sort_unstable_by(|a, b| b.cmp(a));
    v
}

/// Highest bid, which is also the price. Bids that are not decimal integers are ignored.
pub fn first_price(bids: &BTreeSet<Tx>) -> Option<u64> {
    numeric_bids(bids).first().copied()
}

/// `(winning bid, price)` where the price is the second-highest bid, or the
/// winning bid itself when it is the only one.
pub fn second_price(bids: &BTreeSet<Tx>) -> Option<(u64, u64)> {
    let v = numeric_bids(bids);
    let winner = *v.first()?;
    Some((winner, v.get(1).copied().unwrap_or(winner)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{KeyPair, Scheme};
    use crate::types::{Committee, SessionId};

    fn config() -> (BidsetConfig, SecretKey) {
        let kp = KeyPair::from_seed(Scheme::KeyedHash, [3; 32]);
        (BidsetConfig::new(10, 4, b"auction-1".to_vec(), kp.pk).unwrap(), kp.sk)
    }

    #[test]
    fn zero_delta_rejected() {
        let (c, _) = config();
        assert_eq!(
            BidsetConfig::new(0, 0, vec![], c.sequencer_pk),
            Err(BidsetError::ZeroDelta)
        );
    }

    #[test]
    fn bid_prefix_round_trip() {
        let (c, _) = config();
        let tx = c.bid_tx(b"42");
        assert_eq!(c.parse_bid(&tx), Some(&b"42"[..]));
        let other = BidsetConfig {
            ssid: b"auction-2".to_vec(),
            ..c.clone()
        };
        assert_eq!(other.parse_bid(&tx), None);
        assert_eq!(c.parse_bids(&tx), None);
        // A session id that is a prefix of another does not match it.
        let short = BidsetConfig {
            ssid: b"auction-".to_vec(),
            ..c
        };
        assert_eq!(short.parse_bid(&tx), None);
    }

    #[test]
    fn bids_message_round_trip_and_signature() {
        let (c, sk) = config();
        let sid = SessionId::new(b"pod").unwrap();
        let (_, sks) = Committee::deterministic(sid.clone(), Scheme::KeyedHash, 2, 0);
        let v = Vote::sign(&sid, ReplicaId(1), &sks[1], Tx::from("hb"), 20, 7).unwrap();
        let msg = BidsMessage::sign(
            &c.ssid,
            &sk,
            [Tx::from("5"), Tx::from("9")].into(),
            BTreeMap::from([(ReplicaId(1), v)]),
        );
        let tx = c.bids_tx(&msg);
        let parsed = c.parse_bids(&tx).unwrap();
        assert_eq!(parsed, msg);
        assert!(c.verify_bids(&parsed));

        let mut tampered = msg.clone();
        tampered.bids.remove(&Tx::from("5"));
        assert!(!c.verify_bids(&tampered));

        let other = BidsetConfig {
            ssid: b"auction-2".to_vec(),
            ..c
        };
        assert!(!other.verify_bids(&msg));
    }

    #[test]
    fn equal_sets_encode_equally() {
        let (c, sk) = config();
        let a = BidsMessage::sign(&c.ssid, &sk, [Tx::from("b"), Tx::from("a")].into(), BTreeMap::new());
        let b = BidsMessage::sign(&c.ssid, &sk, [Tx::from("a"), Tx::from("b")].into(), BTreeMap::new());
        assert_eq!(c.bids_tx(&a), c.bids_tx(&b));
    }

    #[test]
    fn auction_helpers() {
        let bids: BTreeSet<Tx> = ["7", "12", "3", "junk"].into_iter().map(Tx::from).collect();
        assert_eq!(first_price(&bids), Some(12));
        assert_eq!(second_price(&bids), Some((12, 7)));
        let one: BTreeSet<Tx> = [Tx::from("5")].into();
        assert_eq!(second_price(&one), Some((5, 5)));
        assert_eq!(first_price(&BTreeSet::new()), None);
    }
}
