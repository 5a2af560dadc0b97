//! Hand-built executions with more than β corrupt replicas, in which two
//! honest-looking clients end up with conflicting valid views.
//!
//! The corrupt set signs one log for client A and another for client B.
//! Clients keep heartbeat transactions in their views so that the
//! certificates carry complete logs.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::client::{Client, ClientConfig};
use crate::crypto::{Scheme, SecretKey};
use crate::types::{heartbeat_tx, Committee, FaultProfile, ReplicaId, Round, SessionId, Tx, View, Vote};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// A's `r_perf` exceeds B's `r_conf` for a transaction absent from A.
    PastPerfection,
    /// A's `r_max` is below B's `r_conf`.
    ConfirmationBounds,
}

#[derive(Debug, Clone)]
pub struct CraftedViolation {
    pub kind: ViolationKind,
    pub profile: FaultProfile,
    pub committee: Arc<Committee>,
    pub corrupt: BTreeSet<ReplicaId>,
    pub tx: Tx,
    pub view_a: View,
    pub view_b: View,
}

/// Transaction the conflicting views disagree on.
pub const TARGET_TX: &[u8] = b"target";

struct Signer<'a> {
    sid: &'a SessionId,
    sks: &'a [SecretKey],
}

impl Signer<'_> {
    /// Log of heartbeats `1..=hb_until`, with `tx` inserted at timestamp `at`.
    fn log(&self, r: usize, hb_until: Round, tx_at: Option<Round>) -> Vec<Vote> {
        let mut entries: Vec<(Tx, Round)> = (1..=hb_until).map(|t| (heartbeat_tx(t), t)).collect();
        if let Some(at) = tx_at {
            let pos = entries.iter().position(|(_, t)| *t >= at).unwrap_or(entries.len());
            entries.insert(pos, (Tx::new(TARGET_TX), at));
        }
        entries
            .into_iter()
            .enumerate()
            .map(|(sn, (tx, ts))| {
                Vote::sign(self.sid, ReplicaId(r as u32), &self.sks[r], tx, ts, sn as u64).expect("small vote")
            })
            .collect()
    }
}

fn client(committee: &Arc<Committee>, profile: FaultProfile) -> Client {
    let config = ClientConfig {
        include_heartbeats: true,
        ..ClientConfig::default()
    };
    Client::new(committee.clone(), profile, config)
}

fn feed(c: &mut Client, votes: impl IntoIterator<Item = Vote>) {
    for v in votes {
        c.process_vote(v);
    }
}

fn setup(profile: FaultProfile, seed: u64) -> (SessionId, Arc<Committee>, Vec<SecretKey>) {
    let sid = SessionId::new(b"crafted").expect("nonempty");
    let (committee, sks) = Committee::deterministic(sid.clone(), Scheme::KeyedHash, profile.n(), seed);
    (sid, Arc::new(committee), sks)
}

/// Corrupt `C` (β+1), honest `L` (⌊α/2⌋−β) that A hears only up to round 2,
/// honest `H` (the rest). A reaches `r_perf = 10` without the target; B
/// confirms it at round 3 from `C`, `L` and just enough of `H` voting at 11.
pub fn past_perfection(profile: FaultProfile, seed: u64) -> CraftedViolation {
    let (sid, committee, sks) = setup(profile, seed);
    let s = Signer { sid: &sid, sks: &sks };
    let (beta, alpha) = (profile.beta(), profile.alpha());
    let c_end = beta + 1;
    let l_end = c_end + alpha / 2 - beta;
    let h_needed = alpha - alpha / 2 - 1;

    let mut a = client(&committee, profile);
    let mut b = client(&committee, profile);
    for r in 0..profile.n() {
        if r < c_end {
            feed(&mut a, s.log(r, 10, None));
            feed(&mut b, s.log(r, 2, Some(3)));
        } else if r < l_end {
            let log = s.log(r, 10, Some(3));
            feed(&mut a, log[..2].to_vec());
            feed(&mut b, log[..3].to_vec());
        } else {
            let log = s.log(r, 10, Some(11));
            feed(&mut a, log[..10].to_vec());
            if r - l_end < h_needed {
                feed(&mut b, log);
            }
        }
    }
    CraftedViolation {
        kind: ViolationKind::PastPerfection,
        profile,
        committee,
        corrupt: (0..c_end as u32).map(ReplicaId).collect(),
        tx: Tx::new(TARGET_TX),
        view_a: a.read(),
        view_b: b.read(),
    }
}

/// Corrupt `C` (β+1), honest late voters `M` (α−⌊α/2⌋−β−1) that A has not
/// heard on the target, honest early voters `Lo` (the rest). A sees the
/// target at 3 from `C` and `Lo`, so `r_max = 3`; B sees `C` and `M` at 20
/// plus ⌊α/2⌋ of `Lo` at 3, so `r_conf = 20`.
pub fn confirmation_bounds(profile: FaultProfile, seed: u64) -> CraftedViolation {
    let (sid, committee, sks) = setup(profile, seed);
    let s = Signer { sid: &sid, sks: &sks };
    let (beta, alpha) = (profile.beta(), profile.alpha());
    let c_end = beta + 1;
    let m_end = c_end + (alpha - alpha / 2 - beta - 1);
    let lo_for_b = alpha / 2;

    let mut a = client(&committee, profile);
    let mut b = client(&committee, profile);
    for r in 0..profile.n() {
        if r < c_end {
            feed(&mut a, s.log(r, 2, Some(3)));
            feed(&mut b, s.log(r, 2, Some(20)));
        } else if r < m_end {
            let log = s.log(r, 19, Some(20));
            feed(&mut a, log[..2].to_vec());
            feed(&mut b, log);
        } else {
            let log = s.log(r, 2, Some(3));
            feed(&mut a, log.clone());
            if r - m_end < lo_for_b {
                feed(&mut b, log);
            }
        }
    }
    CraftedViolation {
        kind: ViolationKind::ConfirmationBounds,
        profile,
        committee,
        corrupt: (0..c_end as u32).map(ReplicaId).collect(),
        tx: Tx::new(TARGET_TX),
        view_a: a.read(),
        view_b: b.read(),
    }
}
