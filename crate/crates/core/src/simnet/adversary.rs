//! Replica behaviours, honest and faulty, behind one event interface.
//!
//! Faulty replicas are ordinary state machines that emit votes through the same
//! frames as honest ones; the simulator gives them no extra hooks.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::SecretKey;
use crate::replica::{ClientId, Replica};
use crate::types::{heartbeat_tx, ReplicaId, Round, SessionId, Tx, Vote};

pub const DEFAULT_EQUIVOCATION_SKEW: Round = 3;

fn default_skew() -> Round {
    DEFAULT_EQUIVOCATION_SKEW
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Behavior {
    /// Runs two logs under one key. Odd-numbered clients get the second log,
    /// which starts with a phantom entry (so every sn conflicts) and stamps
    /// votes `skew` rounds early.
    EquivocateSn {
        #[serde(default = "default_skew")]
        skew: Round,
    },
    /// Honest until round `from`, then signs one vote with a timestamp below
    /// its previous one.
    StaleTs {
        #[serde(default)]
        from: Round,
    },
    /// Drops everything addressed to `targets`.
    OmitTo {
        targets: Vec<ClientId>,
    },
    OmitAll,
    /// Stops receiving and sending at `round`.
    CrashAt {
        round: Round,
    },
    /// Every outgoing message takes the full Δ.
    DelayMax,
}

impl Behavior {
    /// Counts against β rather than γ.
    pub fn is_byzantine(&self) -> bool {
        matches!(self, Behavior::EquivocateSn { .. } | Behavior::StaleTs { .. })
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Behavior::EquivocateSn { skew } => write!(f, "EQUIVOCATE_SN({skew})"),
            Behavior::StaleTs { from } => write!(f, "STALE_TS({from})"),
            Behavior::OmitTo { targets } => {
                let t: Vec<String> = targets.iter().map(u64::to_string).collect();
                write!(f, "OMIT_TO({})", t.join(" "))
            }
            Behavior::OmitAll => f.write_str("OMIT_ALL"),
            Behavior::CrashAt { round } => write!(f, "CRASH_AT({round})"),
            Behavior::DelayMax => f.write_str("DELAY_MAX"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse behaviour {0:?}")]
pub struct ParseBehaviorError(pub String);

impl FromStr for Behavior {
    type Err = ParseBehaviorError;

    /// `NAME` or `NAME(args)`, args separated by spaces or semicolons.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseBehaviorError(s.to_owned());
        let (name, args) = match s.find('(') {
            Some(i) if s.ends_with(')') => (&s[..i], &s[i + 1..s.len() - 1]),
            Some(_) => return Err(err()),
            None => (s, ""),
        };
        let nums: Vec<u64> = args
            .split([' ', ';'])
            .filter(|a| !a.is_empty())
            .map(|a| a.trim().parse().map_err(|_| err()))
            .collect::<Result<_, _>>()?;
        let one = |default: Option<u64>| match (nums.as_slice(), default) {
            ([x], _) => Ok(*x),
            ([], Some(d)) => Ok(d),
            _ => Err(err()),
        };
        Ok(match name.trim().to_ascii_uppercase().as_str() {
            "EQUIVOCATE_SN" => Behavior::EquivocateSn {
                skew: one(Some(DEFAULT_EQUIVOCATION_SKEW))?,
            },
            "STALE_TS" => Behavior::StaleTs { from: one(Some(0))? },
            "OMIT_TO" if !nums.is_empty() => Behavior::OmitTo { targets: nums },
            "OMIT_ALL" if nums.is_empty() => Behavior::OmitAll,
            "CRASH_AT" => Behavior::CrashAt { round: one(None)? },
            "DELAY_MAX" if nums.is_empty() => Behavior::DelayMax,
            _ => return Err(err()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Delay {
    Honest,
    Max,
}

#[derive(Debug, Clone)]
pub(crate) struct Out {
    pub to: ClientId,
    pub vote: Vote,
    pub delay: Delay,
}

fn broadcast(vote: Vote, clients: impl Iterator<Item = ClientId>) -> impl Iterator<Item = Out> {
    clients.map(move |to| Out {
        to,
        vote: vote.clone(),
        delay: Delay::Honest,
    })
}

/// A signing log with no honesty checks, for scripted misbehaviour.
#[derive(Debug, Clone)]
struct ScriptedLog {
    sid: SessionId,
    id: ReplicaId,
    sk: SecretKey,
    log: Vec<Vote>,
    seen: HashSet<Tx>,
    clients: BTreeSet<ClientId>,
}

impl ScriptedLog {
    fn new(sid: SessionId, id: ReplicaId, sk: SecretKey) -> Self {
        ScriptedLog {
            sid,
            id,
            sk,
            log: Vec::new(),
            seen: HashSet::new(),
            clients: BTreeSet::new(),
        }
    }

    fn last_ts(&self) -> Round {
        self.log.last().map_or(0, |v| v.ts)
    }

    fn vote(&mut self, tx: Tx, ts: Round) -> Option<Vote> {
        if !self.seen.insert(tx.clone()) {
            return None;
        }
        let sn = self.log.len() as u64;
        let v = Vote::sign(&self.sid, self.id, &self.sk, tx, ts, sn).ok()?;
        self.log.push(v.clone());
        Some(v)
    }

    fn send(&self, vote: Option<Vote>) -> Vec<Out> {
        vote.map(|v| broadcast(v, self.clients.iter().copied()).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Equivocator {
    a: ScriptedLog,
    b: ScriptedLog,
    skew: Round,
}

impl Equivocator {
    fn new(sid: SessionId, id: ReplicaId, sk: SecretKey, skew: Round) -> Self {
        let a = ScriptedLog::new(sid.clone(), id, sk.clone());
        let mut b = ScriptedLog::new(sid, id, sk);
        b.vote(Tx::new(format!("phantom/{}", id.0)), 0);
        Equivocator { a, b, skew }
    }

    fn log_for(&mut self, client: ClientId) -> &mut ScriptedLog {
        if client % 2 == 1 {
            &mut self.b
        } else {
            &mut self.a
        }
    }

    fn b_ts(&self, now: Round) -> Round {
        now.saturating_sub(self.skew).max(self.b.last_ts())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct StaleReplica {
    log: ScriptedLog,
    from: Round,
    fired: bool,
}

impl StaleReplica {
    fn stamp(&mut self, now: Round) -> Round {
        let last = self.log.last_ts();
        if !self.fired && now >= self.from && last > 0 {
            self.fired = true;
            return last - 1;
        }
        now.max(last)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum ReplicaNode {
    Honest(Replica),
    Omitting { inner: Replica, behavior: Behavior },
    Equivocating(Equivocator),
    Stale(StaleReplica),
}

impl ReplicaNode {
    pub fn new(
        id: ReplicaId,
        sid: SessionId,
        sk: SecretKey,
        behavior: Option<&Behavior>,
        heartbeat_skip: bool,
    ) -> Self {
        let honest = || Replica::new(id, sid.clone(), sk.clone()).with_heartbeat_skip(heartbeat_skip);
        match behavior {
            None => ReplicaNode::Honest(honest()),
            Some(Behavior::EquivocateSn { skew }) => {
                ReplicaNode::Equivocating(Equivocator::new(sid.clone(), id, sk.clone(), *skew))
            }
            Some(Behavior::StaleTs { from }) => ReplicaNode::Stale(StaleReplica {
                log: ScriptedLog::new(sid.clone(), id, sk.clone()),
                from: *from,
                fired: false,
            }),
            Some(b) => ReplicaNode::Omitting {
                inner: honest(),
                behavior: b.clone(),
            },
        }
    }

    /// The log of a replica that follows the protocol, omissions aside.
    pub fn protocol_log(&self) -> Option<&[Vote]> {
        match self {
            ReplicaNode::Honest(r) | ReplicaNode::Omitting { inner: r, .. } => Some(r.log()),
            _ => None,
        }
    }

    fn crashed(&self, now: Round) -> bool {
        matches!(self, ReplicaNode::Omitting { behavior: Behavior::CrashAt { round }, .. } if now >= *round)
    }

    fn filter(&self, outs: Vec<Out>) -> Vec<Out> {
        match self {
            ReplicaNode::Omitting { behavior, .. } => match behavior {
                Behavior::OmitAll => Vec::new(),
                Behavior::OmitTo { targets } => outs.into_iter().filter(|o| !targets.contains(&o.to)).collect(),
                Behavior::DelayMax => outs.into_iter().map(|o| Out { delay: Delay::Max, ..o }).collect(),
                _ => outs,
            },
            _ => outs,
        }
    }

    pub fn on_connect(&mut self, client: ClientId, now: Round) -> Vec<Out> {
        if self.crashed(now) {
            return Vec::new();
        }
        let outs = match self {
            ReplicaNode::Honest(r) | ReplicaNode::Omitting { inner: r, .. } => {
                broadcast_replay(r.on_connect(client), client)
            }
            ReplicaNode::Equivocating(e) => {
                let log = e.log_for(client);
                log.clients.insert(client);
                broadcast_replay(&log.log, client)
            }
            ReplicaNode::Stale(s) => {
                s.log.clients.insert(client);
                broadcast_replay(&s.log.log, client)
            }
        };
        self.filter(outs)
    }

    pub fn on_write(&mut self, tx: Tx, now: Round) -> Vec<Out> {
        if self.crashed(now) {
            return Vec::new();
        }
        let outs = match self {
            ReplicaNode::Honest(r) | ReplicaNode::Omitting { inner: r, .. } => match r.on_write(tx, now) {
                Ok(Some(v)) => broadcast(v, r.connected_clients()).collect(),
                _ => Vec::new(),
            },
            ReplicaNode::Equivocating(e) => {
                let ts_b = e.b_ts(now);
                let ts_a = now.max(e.a.last_ts());
                let va = e.a.vote(tx.clone(), ts_a);
                let vb = e.b.vote(tx, ts_b);
                let mut outs = e.a.send(va);
                outs.extend(e.b.send(vb));
                outs
            }
            ReplicaNode::Stale(s) => {
                let ts = s.stamp(now);
                let v = s.log.vote(tx, ts);
                s.log.send(v)
            }
        };
        self.filter(outs)
    }

    pub fn on_round_end(&mut self, now: Round) -> Vec<Out> {
        if self.crashed(now) {
            return Vec::new();
        }
        let outs = match self {
            ReplicaNode::Honest(r) | ReplicaNode::Omitting { inner: r, .. } => match r.on_round_end(now) {
                Ok(Some(v)) => broadcast(v, r.connected_clients()).collect(),
                _ => Vec::new(),
            },
            ReplicaNode::Equivocating(e) => {
                let ts_a = now.max(e.a.last_ts());
                let va = e.a.vote(heartbeat_tx(now), ts_a);
                let ts_b = e.b_ts(now);
                let vb = e.b.vote(heartbeat_tx(ts_b), ts_b);
                let mut outs = e.a.send(va);
                outs.extend(e.b.send(vb));
                outs
            }
            ReplicaNode::Stale(s) => {
                let ts = s.stamp(now);
                let v = s.log.vote(heartbeat_tx(now), ts);
                s.log.send(v)
            }
        };
        self.filter(outs)
    }
}

fn broadcast_replay(log: &[Vote], to: ClientId) -> Vec<Out> {
    log.iter()
        .map(|v| Out {
            to,
            vote: v.clone(),
            delay: Delay::Honest,
        })
        .collect()
}
