//! Non-interactive validity check for a `(D, C)` pair.
//!
//! The certificates are replayed, per replica in sequence-number order,
//! through a fresh [`Client`]; `D` is valid only if it is exactly what that
//! client would output.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::client::{Client, ClientConfig, RejectReason, VoteOutcome};
use crate::types::{Certificates, Committee, FaultProfile, PodData, ReplicaId, SeqNum, View, Vote};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InvalidReason {
    BadSig,
    SnGap,
    StaleTs,
    DupTsConflict,
    TracesetMismatch,
    RperfMismatch,
    CppNotInCtx,
    CppNotMaxSn,
    /// Certificate keys disagree with the votes they index, or a replica
    /// with votes has no past-perfection entry.
    MalformedCert,
}

impl InvalidReason {
    pub fn code(self) -> &'static str {
        match self {
            InvalidReason::BadSig => "BAD_SIG",
            InvalidReason::SnGap => "SN_GAP",
            InvalidReason::StaleTs => "STALE_TS",
            InvalidReason::DupTsConflict => "DUP_TS_CONFLICT",
            InvalidReason::TracesetMismatch => "TRACESET_MISMATCH",
            InvalidReason::RperfMismatch => "RPERF_MISMATCH",
            InvalidReason::CppNotInCtx => "CPP_NOT_IN_CTX",
            InvalidReason::CppNotMaxSn => "CPP_NOT_MAX_SN",
            InvalidReason::MalformedCert => "MALFORMED_CERT",
        }
    }
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::error::Error for InvalidReason {}

pub fn valid(committee: &Arc<Committee>, profile: &FaultProfile, data: &PodData, certs: &Certificates) -> bool {
    check(committee, profile, data, certs).is_ok()
}

pub fn valid_view(committee: &Arc<Committee>, profile: &FaultProfile, view: &View) -> bool {
    valid(committee, profile, &view.data, &view.certs)
}

/// Like [`valid`], naming the first failed requirement.
pub fn check(
    committee: &Arc<Committee>,
    profile: &FaultProfile,
    data: &PodData,
    certs: &Certificates,
) -> Result<(), InvalidReason> {
    if committee.n() != profile.n() {
        return Err(InvalidReason::MalformedCert);
    }
    let mut all: Vec<&Vote> = Vec::with_capacity(certs.vote_count());
    for (tx, votes) in &certs.c_tx {
        for (r, v) in votes {
            if &v.tx != tx || *r != v.replica {
                return Err(InvalidReason::MalformedCert);
            }
            all.push(v);
        }
    }
    all.sort_by_key(|v| (v.replica, v.sn));

    let config = ClientConfig {
        include_heartbeats: data.include_heartbeats,
        ..ClientConfig::default()
    };
    let mut client = Client::new(committee.clone(), *profile, config);
    let mut max_sn: BTreeMap<ReplicaId, SeqNum> = BTreeMap::new();
    for v in &all {
        match client.process_vote((*v).clone()) {
            VoteOutcome::Accepted { .. } => {}
            VoteOutcome::Backlogged | VoteOutcome::Old => return Err(InvalidReason::SnGap),
            VoteOutcome::Rejected(RejectReason::BadSignature) => return Err(InvalidReason::BadSig),
            VoteOutcome::Rejected(RejectReason::StaleTimestamp { .. }) => return Err(InvalidReason::StaleTs),
            VoteOutcome::Rejected(RejectReason::DuplicateTimestamp { .. }) => return Err(InvalidReason::DupTsConflict),
        }
        max_sn.insert(v.replica, v.sn);
    }

    if data.traces != client.read_data().traces {
        return Err(InvalidReason::TracesetMismatch);
    }
    if data.r_perf != client.r_perf() {
        return Err(InvalidReason::RperfMismatch);
    }

    for (r, v) in &certs.c_pp {
        if *r != v.replica {
            return Err(InvalidReason::MalformedCert);
        }
        let in_ctx = certs.c_tx.get(&v.tx).and_then(|m| m.get(r)).is_some_and(|c| c == v);
        if !in_ctx {
            return Err(InvalidReason::CppNotInCtx);
        }
        if max_sn.get(r) != Some(&v.sn) {
            return Err(InvalidReason::CppNotMaxSn);
        }
    }
    if max_sn.keys().any(|r| !certs.c_pp.contains_key(r)) {
        return Err(InvalidReason::MalformedCert);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Scheme, SecretKey};
    use crate::types::{heartbeat_tx, Round, SessionId, Tx};

    struct Fixture {
        sid: SessionId,
        sks: Vec<SecretKey>,
        committee: Arc<Committee>,
        profile: FaultProfile,
    }

    fn fixture() -> Fixture {
        let sid = SessionId::new(b"validator").unwrap();
        let (committee, sks) = Committee::deterministic(sid.clone(), Scheme::KeyedHash, 5, 8);
        Fixture {
            sid,
            sks,
            committee: Arc::new(committee),
            profile: FaultProfile::check(5, 0, 1).unwrap(),
        }
    }

    impl Fixture {
        fn vote(&self, r: u32, tx: Tx, ts: Round, sn: SeqNum) -> Vote {
            Vote::sign(&self.sid, ReplicaId(r), &self.sks[r as usize], tx, ts, sn).unwrap()
        }

        fn honest_view(&self) -> View {
            let mut c = Client::new(self.committee.clone(), self.profile, ClientConfig::default());
            for r in 0..4u32 {
                c.process_vote(self.vote(r, Tx::from("a"), 1 + r as Round, 0));
                c.process_vote(self.vote(r, heartbeat_tx(5), 5, 1));
                c.process_vote(self.vote(r, Tx::from("b"), 6, 2));
            }
            c.process_vote(self.vote(4, Tx::from("a"), 2, 0));
            c.read()
        }

        fn check(&self, v: &View) -> Result<(), InvalidReason> {
            check(&self.committee, &self.profile, &v.data, &v.certs)
        }
    }

    #[test]
    fn honest_view_is_valid() {
        let f = fixture();
        let v = f.honest_view();
        assert_eq!(f.check(&v), Ok(()));
        assert!(valid_view(&f.committee, &f.profile, &View::default()));
    }

    #[test]
    fn rperf_bump_rejected() {
        let f = fixture();
        let mut v = f.honest_view();
        v.data.r_perf += 1;
        assert_eq!(f.check(&v), Err(InvalidReason::RperfMismatch));
    }

    #[test]
    fn deleted_vote_is_sn_gap() {
        let f = fixture();
        let mut v = f.honest_view();
        v.certs.c_tx.get_mut(&heartbeat_tx(5)).unwrap().remove(&ReplicaId(1));
        assert_eq!(f.check(&v), Err(InvalidReason::SnGap));
    }

    #[test]
    fn trace_edit_rejected() {
        let f = fixture();
        let mut v = f.honest_view();
        v.data.traces.get_mut(&Tx::from("a")).unwrap().r_min += 1;
        assert_eq!(f.check(&v), Err(InvalidReason::TracesetMismatch));
        let mut v = f.honest_view();
        v.data.traces.remove(&Tx::from("b"));
        assert_eq!(f.check(&v), Err(InvalidReason::TracesetMismatch));
    }

    #[test]
    fn heartbeat_flag_must_match() {
        let f = fixture();
        let mut v = f.honest_view();
        v.data.include_heartbeats = true;
        assert_eq!(f.check(&v), Err(InvalidReason::TracesetMismatch));
    }

    #[test]
    fn forged_signature_rejected() {
        let f = fixture();
        let mut v = f.honest_view();
        let slot = v
            .certs
            .c_tx
            .get_mut(&Tx::from("a"))
            .unwrap()
            .get_mut(&ReplicaId(2))
            .unwrap();
        *slot = Vote::sign(&f.sid, ReplicaId(2), &f.sks[3], slot.tx.clone(), slot.ts, slot.sn).unwrap();
        assert_eq!(f.check(&v), Err(InvalidReason::BadSig));
    }

    #[test]
    fn stale_certificate_rejected() {
        let f = fixture();
        let mut v = f.honest_view();
        let b = f.vote(0, Tx::from("b"), 0, 2);
        v.certs
            .c_tx
            .get_mut(&Tx::from("b"))
            .unwrap()
            .insert(ReplicaId(0), b.clone());
        v.certs.c_pp.insert(ReplicaId(0), b);
        assert_eq!(f.check(&v), Err(InvalidReason::StaleTs));
    }

    #[test]
    fn mis_keyed_vote_rejected() {
        let f = fixture();
        let mut v = f.honest_view();
        let moved = f.vote(4, Tx::from("a"), 2, 1);
        v.certs
            .c_tx
            .insert(Tx::from("zz"), BTreeMap::from([(ReplicaId(4), moved)]));
        assert_eq!(f.check(&v), Err(InvalidReason::MalformedCert));
    }

    #[test]
    fn cpp_checks() {
        let f = fixture();
        let mut v = f.honest_view();
        let older = v.certs.c_tx[&Tx::from("a")][&ReplicaId(1)].clone();
        v.certs.c_pp.insert(ReplicaId(1), older);
        assert_eq!(f.check(&v), Err(InvalidReason::CppNotMaxSn));

        let mut v = f.honest_view();
        let stray = f.vote(1, Tx::from("q"), 9, 3);
        v.certs.c_pp.insert(ReplicaId(1), stray);
        assert_eq!(f.check(&v), Err(InvalidReason::CppNotInCtx));

        let mut v = f.honest_view();
        v.certs.c_pp.remove(&ReplicaId(3));
        assert_eq!(f.check(&v), Err(InvalidReason::MalformedCert));
    }

    #[test]
    fn deterministic() {
        let f = fixture();
        let mut v = f.honest_view();
        v.data.r_perf = 99;
        let first = f.check(&v);
        for _ in 0..10 {
            assert_eq!(f.check(&v), first);
        }
    }
}
