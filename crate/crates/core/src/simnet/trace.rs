//! Event log of a simulation run, serialized one JSON record per line.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::scenario::Action;
use crate::accountability::Transcript;
use crate::frame::Frame;
use crate::replica::ClientId;
use crate::types::{ReplicaId, Round, SeqNum, SessionId, Tx};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceLevel {
    /// Actions, outputs and assertion failures only.
    #[default]
    Summary,
    /// Also every send, delivery and vote outcome, with frame bytes.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Replica(ReplicaId),
    Client(ClientId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "snake_case")]
pub enum Event {
    Send {
        round: Round,
        from: Endpoint,
        to: Endpoint,
        deliver_at: Round,
        /// Hex of the exact frame bytes.
        frame: String,
    },
    Deliver {
        round: Round,
        from: Endpoint,
        to: Endpoint,
        tag: u8,
    },
    Accept {
        round: Round,
        client: ClientId,
        replica: ReplicaId,
        sn: SeqNum,
        ts: Round,
        drained: usize,
    },
    /// Backlogged or already seen.
    Hold {
        round: Round,
        client: ClientId,
        replica: ReplicaId,
        sn: SeqNum,
        outcome: String,
    },
    Reject {
        round: Round,
        client: ClientId,
        replica: ReplicaId,
        sn: SeqNum,
        reason: String,
    },
    Action {
        round: Round,
        actor: ClientId,
        #[serde(flatten)]
        action: Action,
    },
    Publish {
        round: Round,
        client: ClientId,
        tx: Tx,
    },
    Result {
        round: Round,
        client: ClientId,
        bids: Vec<Tx>,
        empty: bool,
    },
    AssertFailed {
        round: Round,
        actor: ClientId,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trace {
    pub level: TraceLevel,
    pub events: Vec<Event>,
}

impl Trace {
    pub fn new(level: TraceLevel) -> Self {
        Trace {
            level,
            events: Vec::new(),
        }
    }

    pub fn full(&self) -> bool {
        self.level == TraceLevel::Full
    }

    pub fn push(&mut self, e: Event) {
        self.events.push(e);
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Self, serde_json::Error> {
        let events = s
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<Event>, _>>()?;
        let level = if events.iter().any(|e| matches!(e, Event::Send { .. })) {
            TraceLevel::Full
        } else {
            TraceLevel::Summary
        };
        Ok(Trace { level, events })
    }

    /// SHA-256 of the JSON-lines form.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }
}

/// Which replica-to-client vote sends to keep. `None` matches everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranscriptFilter {
    pub replicas: Option<BTreeSet<ReplicaId>>,
    pub clients: Option<BTreeSet<ClientId>>,
    pub rounds: Option<RangeInclusive<Round>>,
}

impl TranscriptFilter {
    fn matches(&self, r: ReplicaId, c: ClientId, round: Round) -> bool {
        self.replicas.as_ref().is_none_or(|s| s.contains(&r))
            && self.clients.as_ref().is_none_or(|s| s.contains(&c))
            && self.rounds.as_ref().is_none_or(|s| s.contains(&round))
    }
}

/// Votes sent from replicas to clients, decoded from the recorded frames.
/// Needs a trace recorded at [`TraceLevel::Full`].
pub fn extract_transcript(trace: &Trace, sid: &SessionId, filter: &TranscriptFilter) -> Transcript {
    let mut votes = Vec::new();
    for e in &trace.events {
        let Event::Send {
            round,
            from: Endpoint::Replica(r),
            to: Endpoint::Client(c),
            frame,
            ..
        } = e
        else {
            continue;
        };
        if !filter.matches(*r, *c, *round) {
            continue;
        }
        let Ok(bytes) = hex::decode(frame) else { continue };
        if let Ok(Frame::Vote { vote }) = Frame::decode(&bytes, sid) {
            votes.push(vote);
        }
    }
    Transcript::new(votes)
}
