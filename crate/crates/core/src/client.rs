//! The client state machine.
//!
//! Votes are checked per replica in sequence-number order. A vote is accepted
//! only if its signature verifies, its sn is the next expected one, its
//! timestamp does not go backwards, and the replica has not already voted on
//! the same transaction. Early votes wait in a bounded backlog; stale or
//! conflicting votes are kept as evidence and never applied.
//!
//! `read()` is recomputed from live state on every call.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use crate::quorum::{confirmed_round, max_possible_ts, min_possible_ts, past_perfect_round};
use crate::types::{
    Certificates, Committee, FaultProfile, PodData, ReplicaId, Round, SeqNum, TransactionTrace, Tx, View, Vote,
};

pub const DEFAULT_BACKLOG_LIMIT: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientConfig {
    /// Keep heartbeat transactions in `read()` output.
    pub include_heartbeats: bool,
    /// Out-of-order votes buffered per replica before the oldest is dropped.
    pub backlog_limit: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            include_heartbeats: false,
            backlog_limit: DEFAULT_BACKLOG_LIMIT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum RejectReason {
    BadSignature,
    StaleTimestamp { mrt: Round },
    DuplicateTimestamp { previous: Round },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteOutcome {
    /// Applied, along with `drained` votes released from the backlog.
    Accepted {
        drained: usize,
    },
    Backlogged,
    /// Already-processed sequence number; replays land here.
    Old,
    Rejected(RejectReason),
}

impl VoteOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, VoteOutcome::Accepted { .. })
    }
}

/// Misbehaviour observed by one client.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Evidence {
    /// A validly signed vote that failed the timestamp checks.
    Rejected { vote: Vote, reason: RejectReason },
    /// Two validly signed, different votes at the same sequence number.
    Equivocation { first: Vote, second: Vote },
}

impl Evidence {
    pub fn votes(&self) -> Vec<&Vote> {
        match self {
            Evidence::Rejected { vote, .. } => vec![vote],
            Evidence::Equivocation { first, second } => vec![first, second],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientStats {
    pub accepted: u64,
    pub bad_signature: u64,
    pub old: u64,
    pub rejected: u64,
    pub backlog_overflow: u64,
}

#[derive(Debug, Clone, Default)]
struct Backlog {
    votes: BTreeMap<SeqNum, Vote>,
    order: VecDeque<SeqNum>,
}

impl Backlog {
    fn len(&self) -> usize {
        self.votes.len()
    }

    fn insert(&mut self, vote: Vote) -> Option<Vote> {
        if let Some(prev) = self.votes.get(&vote.sn) {
            return (!prev.same_statement(&vote)).then(|| prev.clone());
        }
        self.order.push_back(vote.sn);
        self.votes.insert(vote.sn, vote);
        None
    }

    fn take(&mut self, sn: SeqNum) -> Option<Vote> {
        self.votes.remove(&sn)
    }

    fn drop_oldest(&mut self) {
        while let Some(sn) = self.order.pop_front() {
            if self.votes.remove(&sn).is_some() {
                return;
            }
        }
    }

    fn compact(&mut self) {
        if self.order.len() > 2 * self.votes.len() + 16 {
            let votes = &self.votes;
            self.order.retain(|sn| votes.contains_key(sn));
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    committee: Arc<Committee>,
    profile: FaultProfile,
    config: ClientConfig,
    mrt: Vec<Round>,
    next_sn: Vec<SeqNum>,
    accepted: Vec<Vec<Vote>>,
    c_tx: BTreeMap<Tx, BTreeMap<ReplicaId, Vote>>,
    backlog: Vec<Backlog>,
    evidence: Vec<Evidence>,
    stats: ClientStats,
}

impl Client {
    /// # Panics
    /// If the committee size differs from `profile.n()`.
    pub fn new(committee: Arc<Committee>, profile: FaultProfile, config: ClientConfig) -> Self {
        let n = committee.n();
        assert_eq!(n, profile.n(), "committee size must equal profile n");
        Client {
            committee,
            profile,
            config,
            mrt: vec![0; n],
            next_sn: vec![0; n],
            accepted: vec![Vec::new(); n],
            c_tx: BTreeMap::new(),
            backlog: vec![Backlog::default(); n],
            evidence: Vec::new(),
            stats: ClientStats::default(),
        }
    }

    pub fn profile(&self) -> &FaultProfile {
        &self.profile
    }

    pub fn committee(&self) -> &Arc<Committee> {
        &self.committee
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    pub fn mrt(&self) -> &[Round] {
        &self.mrt
    }

    pub fn next_sn(&self, r: ReplicaId) -> SeqNum {
        self.next_sn[r.index()]
    }

    pub fn evidence(&self) -> &[Evidence] {
        &self.evidence
    }

    pub fn stats(&self) -> ClientStats {
        self.stats
    }

    pub fn backlog_len(&self, r: ReplicaId) -> usize {
        self.backlog[r.index()].len()
    }

    /// Votes accepted from `r`, indexed by sequence number.
    pub fn accepted_votes(&self, r: ReplicaId) -> &[Vote] {
        &self.accepted[r.index()]
    }

    pub fn process_vote(&mut self, vote: Vote) -> VoteOutcome {
        if !self.committee.verify_vote(&vote) {
            self.stats.bad_signature += 1;
            return VoteOutcome::Rejected(RejectReason::BadSignature);
        }
        let r = vote.replica.index();
        let expected = self.next_sn[r];
        if vote.sn < expected {
            let prev = &self.accepted[r][vote.sn as usize];
            if !prev.same_statement(&vote) {
                self.evidence.push(Evidence::Equivocation {
                    first: prev.clone(),
                    second: vote,
                });
            }
            self.stats.old += 1;
            return VoteOutcome::Old;
        }
        if vote.sn > expected {
            self.push_backlog(vote);
            return VoteOutcome::Backlogged;
        }
        if let Err(reason) = self.apply(vote) {
            return VoteOutcome::Rejected(reason);
        }
        let mut drained = 0;
        loop {
            let next = self.next_sn[r];
            let Some(v) = self.backlog[r].take(next) else {
                break;
            };
            if self.apply(v).is_err() {
                break;
            }
            drained += 1;
        }
        self.backlog[r].compact();
        VoteOutcome::Accepted { drained }
    }

    fn push_backlog(&mut self, vote: Vote) {
        let r = vote.replica.index();
        if let Some(prev) = self.backlog[r].insert(vote.clone()) {
            self.evidence.push(Evidence::Equivocation {
                first: prev,
                second: vote,
            });
            return;
        }
        while self.backlog[r].len() > self.config.backlog_limit {
            self.backlog[r].drop_oldest();
            self.stats.backlog_overflow += 1;
        }
    }

    /// Checks 3 and 4 for a vote already known to be next in sequence.
    fn apply(&mut self, vote: Vote) -> Result<(), RejectReason> {
        let r = vote.replica.index();
        let reason = if vote.ts < self.mrt[r] {
            Some(RejectReason::StaleTimestamp { mrt: self.mrt[r] })
        } else {
            self.c_tx
                .get(&vote.tx)
                .and_then(|m| m.get(&vote.replica))
                .map(|prev| RejectReason::DuplicateTimestamp { previous: prev.ts })
        };
        if let Some(reason) = reason {
            self.stats.rejected += 1;
            self.evidence.push(Evidence::Rejected { vote, reason });
            return Err(reason);
        }
        self.stats.accepted += 1;
        self.next_sn[r] += 1;
        self.mrt[r] = vote.ts;
        self.accepted[r].push(vote.clone());
        self.c_tx.entry(vote.tx.clone()).or_default().insert(vote.replica, vote);
        Ok(())
    }

    fn timestamps(&self, votes: &BTreeMap<ReplicaId, Vote>) -> Vec<Option<Round>> {
        let mut ts = vec![None; self.profile.n()];
        for (r, v) in votes {
            ts[r.index()] = Some(v.ts);
        }
        ts
    }

    fn compute_trace(&self, tx: &Tx, votes: &BTreeMap<ReplicaId, Vote>) -> TransactionTrace {
        let ts = self.timestamps(votes);
        TransactionTrace {
            tx: tx.clone(),
            r_min: min_possible_ts(&self.profile, &ts, &self.mrt),
            r_max: max_possible_ts(&self.profile, &ts),
            r_conf: confirmed_round(&self.profile, &ts),
        }
    }

    /// Trace of a single transaction, if any vote on it was accepted.
    pub fn trace(&self, tx: &Tx) -> Option<TransactionTrace> {
        self.c_tx.get(tx).map(|votes| self.compute_trace(tx, votes))
    }

    /// Votes accepted for `tx` so far.
    pub fn vote_count(&self, tx: &Tx) -> usize {
        self.c_tx.get(tx).map_or(0, BTreeMap::len)
    }

    pub fn r_perf(&self) -> Round {
        past_perfect_round(&self.profile, &self.mrt)
    }

    /// `(T, r_perf)` without the certificates.
    pub fn read_data(&self) -> PodData {
        let traces = self
            .c_tx
            .iter()
            .filter(|(tx, _)| self.config.include_heartbeats || !tx.is_heartbeat())
            .map(|(tx, votes)| (tx.clone(), self.compute_trace(tx, votes)))
            .collect();
        PodData {
            traces,
            r_perf: self.r_perf(),
            include_heartbeats: self.config.include_heartbeats,
        }
    }

    pub fn certificates(&self) -> Certificates {
        let c_pp = self
            .accepted
            .iter()
            .filter_map(|log| log.last())
            .map(|v| (v.replica, v.clone()))
            .collect();
        Certificates {
            c_pp,
            c_tx: self.c_tx.clone(),
        }
    }

    pub fn read(&self) -> View {
        View {
            data: self.read_data(),
            certs: self.certificates(),
        }
    }
}

fn adopt(old: &TransactionTrace, new: &TransactionTrace) -> bool {
    new.r_min >= old.r_min && new.r_max <= old.r_max && new.r_conf >= old.r_conf
}

/// Combines a stored view with a newer one so that `r_perf` never drops, known
/// transactions never disappear, and trace bounds only tighten.
pub fn monotone_merge(old: &View, new: &View) -> View {
    let mut data = PodData {
        traces: BTreeMap::new(),
        r_perf: old.data.r_perf.max(new.data.r_perf),
        include_heartbeats: new.data.include_heartbeats,
    };
    let mut c_tx = BTreeMap::new();
    let certs_for = |view: &View, tx: &Tx| view.certs.c_tx.get(tx).cloned();
    for (tx, old_trace) in &old.data.traces {
        let (trace, certs) = match new.data.traces.get(tx) {
            Some(new_trace) if adopt(old_trace, new_trace) => (new_trace, certs_for(new, tx)),
            _ => (old_trace, certs_for(old, tx)),
        };
        data.traces.insert(tx.clone(), trace.clone());
        if let Some(c) = certs {
            c_tx.insert(tx.clone(), c);
        }
    }
    for (tx, new_trace) in &new.data.traces {
        if !old.data.traces.contains_key(tx) {
            data.traces.insert(tx.clone(), new_trace.clone());
            if let Some(c) = certs_for(new, tx) {
                c_tx.insert(tx.clone(), c);
            }
        }
    }
    let c_pp = if new.data.r_perf > old.data.r_perf {
        new.certs.c_pp.clone()
    } else {
        old.certs.c_pp.clone()
    };
    View {
        data,
        certs: Certificates { c_pp, c_tx },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Scheme, SecretKey};
    use crate::types::{heartbeat_tx, SessionId, UpperRound};
    use proptest::prelude::*;

    struct Fixture {
        sid: SessionId,
        sks: Vec<SecretKey>,
        client: Client,
    }

    impl Fixture {
        fn new(n: usize, beta: usize, gamma: usize) -> Self {
            let sid = SessionId::new(b"client-test").unwrap();
            let (committee, sks) = Committee::deterministic(sid.clone(), Scheme::KeyedHash, n, 5);
            let profile = FaultProfile::check(n, beta, gamma).unwrap();
            let client = Client::new(Arc::new(committee), profile, ClientConfig::default());
            Fixture { sid, sks, client }
        }

        fn vote(&self, r: u32, tx: &str, ts: Round, sn: SeqNum) -> Vote {
            Vote::sign(&self.sid, ReplicaId(r), &self.sks[r as usize], Tx::from(tx), ts, sn).unwrap()
        }
    }

    #[test]
    fn first_vote_accepted() {
        let mut f = Fixture::new(5, 0, 1);
        let v = f.vote(0, "tx", 5, 0);
        assert!(f.client.process_vote(v).is_accepted());
        assert_eq!(f.client.mrt()[0], 5);
        assert_eq!(f.client.next_sn(ReplicaId(0)), 1);
    }

    #[test]
    fn out_of_order_votes_backlog_then_drain() {
        let mut f = Fixture::new(5, 0, 1);
        let v0 = f.vote(0, "a", 1, 0);
        let v1 = f.vote(0, "b", 2, 1);
        let v2 = f.vote(0, "c", 2, 2);
        let v3 = f.vote(0, "d", 3, 3);
        assert!(f.client.process_vote(v0).is_accepted());
        assert_eq!(f.client.process_vote(v3), VoteOutcome::Backlogged);
        assert_eq!(f.client.process_vote(v2), VoteOutcome::Backlogged);
        assert_eq!(f.client.process_vote(v1), VoteOutcome::Accepted { drained: 2 });
        assert_eq!(f.client.next_sn(ReplicaId(0)), 4);
        assert_eq!(f.client.backlog_len(ReplicaId(0)), 0);
    }

    #[test]
    fn stale_timestamp_rejected_and_kept() {
        let mut f = Fixture::new(5, 0, 1);
        f.client.process_vote(f.vote(0, "a", 5, 0));
        let stale = f.vote(0, "b", 4, 1);
        assert_eq!(
            f.client.process_vote(stale.clone()),
            VoteOutcome::Rejected(RejectReason::StaleTimestamp { mrt: 5 })
        );
        assert_eq!(f.client.mrt()[0], 5);
        assert_eq!(f.client.next_sn(ReplicaId(0)), 1);
        assert_eq!(
            f.client.evidence(),
            &[Evidence::Rejected {
                vote: stale,
                reason: RejectReason::StaleTimestamp { mrt: 5 }
            }]
        );
    }

    #[test]
    fn conflicting_timestamp_rejected() {
        let mut f = Fixture::new(5, 0, 1);
        f.client.process_vote(f.vote(0, "a", 5, 0));
        let again = f.vote(0, "a", 6, 1);
        assert_eq!(
            f.client.process_vote(again),
            VoteOutcome::Rejected(RejectReason::DuplicateTimestamp { previous: 5 })
        );
        assert_eq!(f.client.certificates().c_tx[&Tx::from("a")][&ReplicaId(0)].ts, 5);
        assert_eq!(f.client.next_sn(ReplicaId(0)), 1);
    }

    #[test]
    fn bad_signature_dropped_silently() {
        let mut f = Fixture::new(5, 0, 1);
        let mut v = f.vote(0, "a", 5, 0);
        v.replica = ReplicaId(1);
        assert_eq!(
            f.client.process_vote(v),
            VoteOutcome::Rejected(RejectReason::BadSignature)
        );
        assert!(f.client.evidence().is_empty());
        assert_eq!(f.client.stats().bad_signature, 1);
    }

    #[test]
    fn replays_are_old_and_equivocations_recorded() {
        let mut f = Fixture::new(5, 0, 1);
        let v = f.vote(0, "a", 5, 0);
        f.client.process_vote(v.clone());
        assert_eq!(f.client.process_vote(v), VoteOutcome::Old);
        assert!(f.client.evidence().is_empty());
        assert_eq!(f.client.process_vote(f.vote(0, "z", 5, 0)), VoteOutcome::Old);
        assert!(matches!(f.client.evidence(), [Evidence::Equivocation { .. }]));
    }

    #[test]
    fn backlog_is_bounded() {
        let sid = SessionId::new(b"b").unwrap();
        let (committee, sks) = Committee::deterministic(sid.clone(), Scheme::KeyedHash, 5, 1);
        let profile = FaultProfile::check(5, 0, 1).unwrap();
        let config = ClientConfig {
            backlog_limit: 3,
            ..ClientConfig::default()
        };
        let mut c = Client::new(Arc::new(committee), profile, config);
        for sn in 1..=5u64 {
            let v = Vote::sign(&sid, ReplicaId(0), &sks[0], Tx::new(sn.to_be_bytes()), 1, sn).unwrap();
            assert_eq!(c.process_vote(v), VoteOutcome::Backlogged);
        }
        assert_eq!(c.backlog_len(ReplicaId(0)), 3);
        assert_eq!(c.stats().backlog_overflow, 2);
        // sn 1 and 2 were dropped, so sn 0 cannot release anything.
        let v0 = Vote::sign(&sid, ReplicaId(0), &sks[0], Tx::from("zero"), 1, 0).unwrap();
        assert_eq!(c.process_vote(v0), VoteOutcome::Accepted { drained: 0 });
    }

    #[test]
    fn fresh_client_reads_empty() {
        let f = Fixture::new(9, 1, 1);
        let view = f.client.read();
        assert!(view.data.is_empty());
        assert_eq!(view.data.r_perf, 0);
    }

    #[test]
    fn trace_set_example() {
        let mut f = Fixture::new(9, 1, 1);
        for (r, ts) in [2, 2, 3, 4, 5, 6, 7].into_iter().enumerate() {
            let v = f.vote(r as u32, "x", ts, 0);
            assert!(f.client.process_vote(v).is_accepted());
        }
        let t = f.client.trace(&Tx::from("x")).unwrap();
        assert_eq!(t.r_conf, Some(4));
        assert!(t.r_min <= 4 && UpperRound::Finite(4) <= t.r_max);
    }

    #[test]
    fn heartbeats_filtered_unless_requested() {
        let mut f = Fixture::new(5, 0, 1);
        let hb = Vote::sign(&f.sid, ReplicaId(0), &f.sks[0], heartbeat_tx(1), 1, 0).unwrap();
        f.client.process_vote(hb);
        assert!(f.client.read_data().is_empty());
        assert_eq!(f.client.certificates().c_pp.len(), 1);
        f.client.config.include_heartbeats = true;
        assert_eq!(f.client.read_data().len(), 1);
    }

    #[test]
    fn cpp_holds_latest_vote() {
        let mut f = Fixture::new(5, 0, 1);
        f.client.process_vote(f.vote(2, "a", 1, 0));
        f.client.process_vote(f.vote(2, "b", 3, 1));
        assert_eq!(f.client.certificates().c_pp[&ReplicaId(2)].sn, 1);
    }

    fn trace(tx: &str, r_min: Round, r_max: UpperRound, r_conf: Option<Round>) -> TransactionTrace {
        TransactionTrace {
            tx: Tx::from(tx),
            r_min,
            r_max,
            r_conf,
        }
    }

    fn view(r_perf: Round, traces: Vec<TransactionTrace>) -> View {
        View {
            data: PodData {
                traces: traces.into_iter().map(|t| (t.tx.clone(), t)).collect(),
                r_perf,
                include_heartbeats: false,
            },
            certs: Certificates::default(),
        }
    }

    #[test]
    fn merge_adopts_tighter_bounds() {
        let old = view(7, vec![trace("a", 2, UpperRound::Finite(9), None)]);
        let new = view(5, vec![trace("a", 3, UpperRound::Finite(8), None)]);
        let m = monotone_merge(&old, &new);
        assert_eq!(m.data.traces[&Tx::from("a")].r_min, 3);
        assert_eq!(m.data.r_perf, 7);
    }

    #[test]
    fn merge_keeps_old_when_bounds_loosen() {
        let old = view(1, vec![trace("a", 2, UpperRound::Finite(9), Some(4))]);
        let new = view(2, vec![trace("a", 1, UpperRound::Finite(8), Some(4))]);
        let m = monotone_merge(&old, &new);
        assert_eq!(m.data.traces[&Tx::from("a")], old.data.traces[&Tx::from("a")]);
        assert_eq!(m.data.r_perf, 2);
    }

    #[test]
    fn merge_keeps_confirmation() {
        let old = view(1, vec![trace("a", 2, UpperRound::Finite(9), Some(4))]);
        let new = view(2, vec![trace("a", 3, UpperRound::Finite(8), None)]);
        let m = monotone_merge(&old, &new);
        assert_eq!(m.data.traces[&Tx::from("a")].r_conf, Some(4));
    }

    fn arb_view() -> impl Strategy<Value = View> {
        let arb_trace = (0u64..20, proptest::option::of(0u64..20), proptest::option::of(0u64..20));
        (
            0u64..30,
            proptest::collection::btree_map(proptest::sample::select(vec!["a", "b", "c", "d"]), arb_trace, 0..4),
        )
            .prop_map(|(r_perf, m)| {
                view(
                    r_perf,
                    m.into_iter()
                        .map(|(tx, (lo, hi, conf))| {
                            trace(
                                tx,
                                lo,
                                hi.map_or(UpperRound::Infinite, |h| UpperRound::Finite(lo + h)),
                                conf,
                            )
                        })
                        .collect(),
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1_000))]

        #[test]
        fn merge_is_idempotent(a in arb_view(), b in arb_view()) {
            prop_assert_eq!(&monotone_merge(&a, &a), &a);
            let m = monotone_merge(&a, &b);
            prop_assert_eq!(&monotone_merge(&m, &m), &m);
            prop_assert_eq!(&monotone_merge(&m, &b), &m);
        }

        #[test]
        fn merge_is_monotone(a in arb_view(), b in arb_view()) {
            let m = monotone_merge(&a, &b);
            prop_assert!(m.data.r_perf >= a.data.r_perf);
            for (tx, t) in &a.data.traces {
                let mt = &m.data.traces[tx];
                prop_assert!(mt.r_min >= t.r_min);
                prop_assert!(mt.r_max <= t.r_max);
                prop_assert!(mt.r_conf >= t.r_conf);
            }
        }
    }
}
