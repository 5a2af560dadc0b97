//! Fixtures shared by the benchmarks: a committee of honest replicas and the
//! vote streams they send to one client.

use std::sync::Arc;

use pod_core::{Client, ClientConfig, Committee, FaultProfile, Replica, ReplicaId, Scheme, SessionId, Tx, Vote};

pub struct Fixture {
    pub committee: Arc<Committee>,
    pub profile: FaultProfile,
    /// Votes in arrival order: each round, every replica's vote in turn.
    pub votes: Vec<Vote>,
}

/// `txs` writes, one per round, each followed by a heartbeat from every replica.
pub fn fixture(profile: FaultProfile, scheme: Scheme, txs: usize) -> Fixture {
    let sid = SessionId::new(b"pod-bench").expect("short sid");
    let (committee, sks) = Committee::deterministic(sid.clone(), scheme, profile.n(), 1);
    let mut replicas: Vec<Replica> = sks
        .into_iter()
        .enumerate()
        .map(|(i, sk)| Replica::new(ReplicaId(i as u32), sid.clone(), sk))
        .collect();
    for r in &mut replicas {
        r.on_connect(0);
    }
    let mut votes = Vec::new();
    for round in 1..=txs as u64 {
        let tx = Tx::new(format!("tx-{round}").as_bytes());
        for r in &mut replicas {
            votes.extend(r.on_write(tx.clone(), round).expect("fresh tx"));
        }
        for r in &mut replicas {
            votes.extend(r.on_round_end(round).expect("round advances"));
        }
    }
    Fixture {
        committee: Arc::new(committee),
        profile,
        votes,
    }
}

impl Fixture {
    pub fn client(&self) -> Client {
        Client::new(self.committee.clone(), self.profile, ClientConfig::default())
    }

    /// A client that has processed every vote.
    pub fn replayed(&self) -> Client {
        let mut c = self.client();
        for v in &self.votes {
            c.process_vote(v.clone());
        }
        c
    }
}
