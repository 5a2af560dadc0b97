//! Identifying culpable parties after a safety violation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::bidset::{BidsMessage, BidsetConfig};
use crate::client::Evidence;
use crate::types::{median_of, Committee, FaultProfile, ReplicaId, Round, SeqNum, Tx, View, Vote};

/// Any set of votes observed in an execution. Adversarial content is legal.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Transcript {
    pub votes: Vec<Vote>,
}

impl Transcript {
    pub fn new(votes: Vec<Vote>) -> Self {
        Transcript { votes }
    }

    pub fn add_view(&mut self, view: &View) {
        self.votes.extend(view.certs.votes().cloned());
        self.votes.extend(view.certs.c_pp.values().cloned());
    }

    pub fn add_evidence<'a>(&mut self, evidence: impl IntoIterator<Item = &'a Evidence>) {
        for e in evidence {
            self.votes.extend(e.votes().into_iter().cloned());
        }
    }

    /// Union of the certificates of several views.
    pub fn from_views<'a>(views: impl IntoIterator<Item = &'a View>) -> Self {
        let mut t = Transcript::default();
        for v in views {
            t.add_view(v);
        }
        t
    }
}

/// Replicas that signed two different `(tx, ts)` statements under one sequence number.
pub fn identify<'a>(committee: &Committee, votes: impl IntoIterator<Item = &'a Vote>) -> BTreeSet<ReplicaId> {
    let mut first: HashMap<(ReplicaId, SeqNum), (&'a Tx, Round)> = HashMap::new();
    let mut culprits = BTreeSet::new();
    for v in votes {
        if culprits.contains(&v.replica) {
            continue;
        }
        if let Some((tx, ts)) = first.get(&(v.replica, v.sn)) {
            if (*tx, *ts) == (&v.tx, v.ts) || !committee.verify_vote(v) {
                continue;
            }
            culprits.insert(v.replica);
            continue;
        }
        if committee.verify_vote(v) {
            first.insert((v.replica, v.sn), (&v.tx, v.ts));
        }
    }
    culprits
}

/// `(C_tx, B, C_bid, σ)` presented against a sequencer.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SequencerEvidence {
    pub c_tx: BTreeMap<ReplicaId, Vote>,
    pub bids: BidsMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum CulpableReason {
    InvalidCertificateVote,
    PrematureCertificate,
    CensoredBid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum EvidenceDefect {
    BadSequencerSignature,
    TooFewVotes,
    MixedTransactions,
    InvalidVote,
    /// The transaction is not a bid of this session, so leaving it out of `B`
    /// is not censorship.
    NotABid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SequencerVerdict {
    Culpable(CulpableReason),
    NotCulpable,
    InvalidEvidence(EvidenceDefect),
}

impl SequencerVerdict {
    pub fn is_culpable(&self) -> bool {
        matches!(self, SequencerVerdict::Culpable(_))
    }
}

/// Past-perfect round implied by a certificate. Replicas absent from the
/// certificate count as timestamp 0, as they would for the client that built it.
pub fn certificate_r_perf(profile: &FaultProfile, n: usize, c_bid: &BTreeMap<ReplicaId, Vote>) -> Round {
    let mut timestamps: Vec<Round> = c_bid.values().map(|v| v.ts).collect();
    timestamps.resize(n.max(timestamps.len()), 0);
    timestamps.sort();
    let mut padded = vec![0; profile.beta()];
    padded.extend(timestamps);
    let take = profile.alpha().min(padded.len());
    median_of(&padded[..take]).unwrap_or(0)
}

pub fn identify_sequencer(
    committee: &Committee,
    profile: &FaultProfile,
    config: &BidsetConfig,
    evidence: &SequencerEvidence,
) -> SequencerVerdict {
    use SequencerVerdict::*;
    let msg = &evidence.bids;
    if !config.verify_bids(msg) {
        return InvalidEvidence(EvidenceDefect::BadSequencerSignature);
    }
    for (r, v) in &msg.c_bid {
        if *r != v.replica || !committee.verify_vote(v) {
            return Culpable(CulpableReason::InvalidCertificateVote);
        }
    }
    if certificate_r_perf(profile, committee.n(), &msg.c_bid) <= config.sequencer_deadline() {
        return Culpable(CulpableReason::PrematureCertificate);
    }

    if evidence.c_tx.len() < profile.alpha() {
        return InvalidEvidence(EvidenceDefect::TooFewVotes);
    }
    let tx_star = &evidence.c_tx.values().next().expect("alpha >= 1").tx;
    let mut timestamps = Vec::with_capacity(evidence.c_tx.len());
    for (r, v) in &evidence.c_tx {
        if &v.tx != tx_star {
            return InvalidEvidence(EvidenceDefect::MixedTransactions);
        }
        if *r != v.replica || !committee.verify_vote(v) {
            return InvalidEvidence(EvidenceDefect::InvalidVote);
        }
        timestamps.push(v.ts);
    }
    let Some(bid) = config.parse_bid(tx_star) else {
        return InvalidEvidence(EvidenceDefect::NotABid);
    };
    timestamps.sort();
    let r_conf = median_of(&timestamps).expect("nonempty");
    if r_conf <= config.sequencer_deadline() && !msg.bids.contains(&Tx::new(bid)) {
        return Culpable(CulpableReason::CensoredBid);
    }
    NotCulpable
}

/// Two validly signed, different BIDS messages for one session convict the sequencer.
pub fn identify_sequencer_equivocation(config: &BidsetConfig, a: &BidsMessage, b: &BidsMessage) -> bool {
    a != b && (a.bids != b.bids || a.c_bid != b.c_bid) && config.verify_bids(a) && config.verify_bids(b)
}
