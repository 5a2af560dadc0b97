//! The replica state machine.
//!
//! A replica never talks to other replicas. It stamps each new transaction with
//! its current round and the next sequence number, signs the result, appends it
//! to its log and sends it to every connected client. A client that connects
//! late gets the whole log replayed. At the end of every round the replica also
//! votes on a heartbeat transaction so that idle replicas still advance the
//! clients' view of their clock.
//!
//! The state machine is transport agnostic: methods return the votes to send
//! and the caller delivers them to [`Replica::connected_clients`].

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::codec::CodecError;
use crate::crypto::SecretKey;
use crate::types::{heartbeat_tx, ReplicaId, Round, SeqNum, SessionId, Tx, Vote};

pub type ClientId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplicaError {
    #[error("cannot sign vote: {0}")]
    Encoding(#[from] CodecError),
    #[error("clock went backwards: round {now} after a vote at round {last}")]
    ClockRegression { now: Round, last: Round },
}

#[derive(Debug, Clone)]
pub struct Replica {
    id: ReplicaId,
    sid: SessionId,
    sk: SecretKey,
    log: Vec<Vote>,
    seen: HashSet<Tx>,
    clients: BTreeSet<ClientId>,
    skip_busy_heartbeats: bool,
    last_payload_round: Option<Round>,
}

impl Replica {
    pub fn new(id: ReplicaId, sid: SessionId, sk: SecretKey) -> Self {
        Replica {
            id,
            sid,
            sk,
            log: Vec::new(),
            seen: HashSet::new(),
            clients: BTreeSet::new(),
            skip_busy_heartbeats: false,
            last_payload_round: None,
        }
    }

    /// Skip the heartbeat in rounds where a regular vote already went out.
    pub fn with_heartbeat_skip(mut self, on: bool) -> Self {
        self.skip_busy_heartbeats = on;
        self
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn log(&self) -> &[Vote] {
        &self.log
    }

    pub fn next_sn(&self) -> SeqNum {
        self.log.len() as SeqNum
    }

    pub fn connected_clients(&self) -> impl Iterator<Item = ClientId> + '_ {
        self.clients.iter().copied()
    }

    pub fn is_connected(&self, client: ClientId) -> bool {
        self.clients.contains(&client)
    }

    /// Registers the client and returns the full log for replay, in sn order.
    pub fn on_connect(&mut self, client: ClientId) -> &[Vote] {
        self.clients.insert(client);
        &self.log
    }

    pub fn on_disconnect(&mut self, client: ClientId) {
        self.clients.remove(&client);
    }

    /// Returns the new vote, or `None` for a transaction already in the log.
    pub fn on_write(&mut self, tx: Tx, now: Round) -> Result<Option<Vote>, ReplicaError> {
        if self.seen.contains(&tx) {
            return Ok(None);
        }
        let vote = self.do_vote(tx, now)?;
        self.last_payload_round = Some(now);
        Ok(Some(vote))
    }

    /// Heartbeat for `round`, unless skipped or already voted.
    pub fn on_round_end(&mut self, round: Round) -> Result<Option<Vote>, ReplicaError> {
        if self.skip_busy_heartbeats && self.last_payload_round == Some(round) {
            return Ok(None);
        }
        let tx = heartbeat_tx(round);
        if self.seen.contains(&tx) {
            return Ok(None);
        }
        self.do_vote(tx, round).map(Some)
    }

    fn do_vote(&mut self, tx: Tx, now: Round) -> Result<Vote, ReplicaError> {
        if let Some(last) = self.log.last() {
            if now < last.ts {
                return Err(ReplicaError::ClockRegression { now, last: last.ts });
            }
        }
        let vote = Vote::sign(&self.sid, self.id, &self.sk, tx.clone(), now, self.next_sn())?;
        self.seen.insert(tx);
        self.log.push(vote.clone());
        Ok(vote)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Scheme;
    use crate::types::Committee;

    fn replica() -> (Replica, Committee) {
        let sid = SessionId::new(b"test").unwrap();
        let (committee, mut sks) = Committee::deterministic(sid.clone(), Scheme::KeyedHash, 1, 3);
        (Replica::new(ReplicaId(0), sid, sks.remove(0)), committee)
    }

    #[test]
    fn fresh_connect_replays_nothing() {
        let (mut r, _) = replica();
        assert!(r.on_connect(1).is_empty());
        assert!(r.is_connected(1));
    }

    #[test]
    fn connect_after_three_writes_replays_three() {
        let (mut r, _) = replica();
        for (i, tx) in ["a", "b", "c"].into_iter().enumerate() {
            r.on_write(Tx::from(tx), i as Round).unwrap();
        }
        let replay: Vec<SeqNum> = r.on_connect(7).iter().map(|v| v.sn).collect();
        assert_eq!(replay, vec![0, 1, 2]);
    }

    #[test]
    fn duplicate_write_ignored() {
        let (mut r, _) = replica();
        assert!(r.on_write(Tx::from("t1"), 1).unwrap().is_some());
        assert!(r.on_write(Tx::from("t1"), 2).unwrap().is_none());
        assert_eq!(r.log().len(), 1);
    }

    #[test]
    fn hundred_writes_are_gapless() {
        let (mut r, _) = replica();
        for i in 0..100u64 {
            r.on_write(Tx::new(i.to_be_bytes()), i / 10).unwrap();
        }
        let sns: Vec<SeqNum> = r.log().iter().map(|v| v.sn).collect();
        assert_eq!(sns, (0..100).collect::<Vec<_>>());
        assert!(r.log().windows(2).all(|w| w[0].ts <= w[1].ts));
    }

    #[test]
    fn vote_fields_and_signature() {
        let (mut r, committee) = replica();
        let v = r.on_write(Tx::from("x"), 5).unwrap().unwrap();
        assert_eq!((v.ts, v.sn), (5, 0));
        assert!(committee.verify_vote(&v));
        let w = r.on_write(Tx::from("y"), 5).unwrap().unwrap();
        assert_eq!((w.ts, w.sn), (5, 1));
    }

    #[test]
    fn idle_rounds_emit_heartbeats() {
        let (mut r, _) = replica();
        for round in 1..=5 {
            let v = r.on_round_end(round).unwrap().unwrap();
            assert_eq!(v.ts, round);
            assert_eq!(v.tx, heartbeat_tx(round));
        }
        assert_eq!(r.log().len(), 5);
    }

    #[test]
    fn heartbeat_skip_only_when_enabled() {
        let (r, _) = replica();
        let mut skipping = r.clone().with_heartbeat_skip(true);
        skipping.on_write(Tx::from("x"), 3).unwrap();
        assert!(skipping.on_round_end(3).unwrap().is_none());
        assert!(skipping.on_round_end(4).unwrap().is_some());

        let mut plain = r;
        plain.on_write(Tx::from("x"), 3).unwrap();
        assert!(plain.on_round_end(3).unwrap().is_some());
    }

    #[test]
    fn clock_regression_is_an_error() {
        let (mut r, _) = replica();
        r.on_write(Tx::from("x"), 9).unwrap();
        assert_eq!(
            r.on_write(Tx::from("y"), 8),
            Err(ReplicaError::ClockRegression { now: 8, last: 9 })
        );
        assert_eq!(r.log().len(), 1);
    }
}
