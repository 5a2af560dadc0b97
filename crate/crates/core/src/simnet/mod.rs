//! Deterministic round-based network simulator.
//!
//! A message sent in round `r` with delay `d` is delivered at the start of
//! round `r + d`. Each round runs, in order: delivery of due messages in a
//! seeded random order, scheduled actions, auction role polls, observer
//! callbacks, and every replica's end-of-round heartbeat. All traffic is
//! encoded as wire frames and decoded on delivery.

pub mod adversary;
pub mod crafted;
pub mod properties;
pub mod scenario;
pub mod sweep;
pub mod trace;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accountability::SequencerEvidence;
use crate::bidset::{BidsMessage, BidsetConfig, BidsetResult, Consumer, Sequencer};
use crate::client::{Client, ClientConfig, VoteOutcome};
use crate::crypto::{KeyPair, Scheme, SecretKey};
use crate::frame::Frame;
use crate::replica::ClientId;
use crate::types::{Committee, FaultProfile, ReplicaId, Round, SessionId, Tx, View, Vote};

pub use adversary::{Behavior, ParseBehaviorError};
use adversary::{Delay, Out, ReplicaNode};
pub use scenario::{Action, AuctionSpec, Scenario, ScheduledAction, SequencerBehavior};
pub use trace::{extract_transcript, Endpoint, Event, Trace, TraceLevel, TranscriptFilter};

pub const DEFAULT_SID: &[u8] = b"pod-sim";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("delta must be at least 1")]
    ZeroDelta,
    #[error("Delta ({big_delta}) must be at least delta ({delta})")]
    BoundBelowDelay { delta: Round, big_delta: Round },
    #[error("adversary {0} is not a committee member")]
    UnknownReplica(ReplicaId),
    #[error("{count} Byzantine behaviours exceed beta = {beta}")]
    ByzantineBudget { count: usize, beta: usize },
    #[error("{count} faulty replicas exceed beta + gamma = {budget}")]
    FaultBudget { count: usize, budget: usize },
    #[error("scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub profile: FaultProfile,
    /// Actual maximum delay δ.
    pub delta: Round,
    /// Honest delays are drawn uniformly from `[max(1, δ - jitter), δ]`.
    pub jitter: Round,
    /// Known bound Δ, used by `DELAY_MAX`.
    pub big_delta: Round,
    pub seed: u64,
    /// Rounds `0..=max_rounds` are executed.
    pub max_rounds: Round,
    pub adversaries: BTreeMap<ReplicaId, Behavior>,
    pub scheme: Scheme,
    pub heartbeat_skip: bool,
    pub trace: TraceLevel,
    pub sid: Vec<u8>,
    pub client: ClientConfig,
}

impl SimConfig {
    pub fn new(profile: FaultProfile, delta: Round, seed: u64) -> Self {
        SimConfig {
            profile,
            delta,
            jitter: 0,
            big_delta: delta,
            seed,
            max_rounds: 50,
            adversaries: BTreeMap::new(),
            scheme: Scheme::KeyedHash,
            heartbeat_skip: false,
            trace: TraceLevel::Summary,
            sid: DEFAULT_SID.to_vec(),
            client: ClientConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.delta == 0 {
            return Err(SimError::ZeroDelta);
        }
        if self.big_delta < self.delta {
            return Err(SimError::BoundBelowDelay {
                delta: self.delta,
                big_delta: self.big_delta,
            });
        }
        if self.sid.is_empty() {
            return Err(SimError::Scenario("empty session id".into()));
        }
        if let Some(r) = self.adversaries.keys().find(|r| r.index() >= self.profile.n()) {
            return Err(SimError::UnknownReplica(*r));
        }
        let byz = self.adversaries.values().filter(|b| b.is_byzantine()).count();
        if byz > self.profile.beta() {
            return Err(SimError::ByzantineBudget {
                count: byz,
                beta: self.profile.beta(),
            });
        }
        let budget = self.profile.beta() + self.profile.gamma();
        if self.adversaries.len() > budget {
            return Err(SimError::FaultBudget {
                count: self.adversaries.len(),
                budget,
            });
        }
        Ok(())
    }

    pub fn byzantine(&self) -> BTreeSet<ReplicaId> {
        self.adversaries
            .iter()
            .filter(|(_, b)| b.is_byzantine())
            .map(|(r, _)| *r)
            .collect()
    }

    fn delay_range(&self) -> (Round, Round) {
        (self.delta.saturating_sub(self.jitter).max(1), self.delta)
    }
}

/// Callbacks into a running simulation.
pub trait Observer {
    fn on_write(&mut self, _round: Round, _client: ClientId, _tx: &Tx) {}
    /// Called once per round for every connected client, after actions and
    /// role polls.
    fn observe(&mut self, _round: Round, _client: ClientId, _state: &Client) {}
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteRecord {
    pub round: Round,
    pub client: ClientId,
    pub tx: Tx,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadRecord {
    pub round: Round,
    pub client: ClientId,
    pub view: View,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionFailure {
    pub round: Round,
    pub actor: ClientId,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeliveryStats {
    pub messages: u64,
    pub max_delay: Round,
    /// Deliveries later than their assigned delay, or assigned delays above Δ.
    pub bound_violations: u64,
}

#[derive(Debug, Clone)]
pub struct AuctionOutcome {
    pub config: BidsetConfig,
    pub sequencer: Option<(ClientId, SequencerBehavior)>,
    /// `(round, client, bid payload)`.
    pub bids: Vec<(Round, ClientId, Tx)>,
    /// Every BIDS message the sequencer wrote.
    pub published: Vec<(Round, BidsMessage)>,
    pub results: BTreeMap<ClientId, BidsetResult>,
}

impl AuctionOutcome {
    /// Evidence against the sequencer for leaving `bid` out, built from the
    /// certificate of `bid` in `client`'s final view.
    pub fn censorship_evidence(&self, client: &Client, bid: &[u8]) -> Option<SequencerEvidence> {
        let (_, msg) = self.published.first()?;
        let c_tx = client.certificates().c_tx.remove(&self.config.bid_tx(bid))?;
        Some(SequencerEvidence {
            c_tx,
            bids: msg.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub committee: Arc<Committee>,
    pub trace: Trace,
    pub writes: Vec<WriteRecord>,
    pub reads: Vec<ReadRecord>,
    pub failures: Vec<AssertionFailure>,
    pub auction: Option<AuctionOutcome>,
    pub clients: BTreeMap<ClientId, Client>,
    /// Logs of replicas that follow the protocol (honest and omitting).
    pub protocol_logs: BTreeMap<ReplicaId, Vec<Vote>>,
    pub delivery: DeliveryStats,
}

impl SimOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Every vote any client accepted or held as evidence.
    pub fn observed_votes(&self) -> Vec<Vote> {
        let mut out = Vec::new();
        for c in self.clients.values() {
            for r in c.committee().replicas() {
                out.extend(c.accepted_votes(r).iter().cloned());
            }
            for e in c.evidence() {
                out.extend(e.votes().into_iter().cloned());
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Envelope {
    from: Endpoint,
    to: Endpoint,
    sent: Round,
    delay: Round,
    bytes: Vec<u8>,
}

struct SeqRole {
    behavior: SequencerBehavior,
    seq: Sequencer,
    sk: SecretKey,
}

struct ClientNode {
    client: Client,
    connected: bool,
    sequencer: Option<SeqRole>,
    consumer: Option<Consumer>,
}

/// Key of the auction sequencer in a run with this seed.
pub fn sequencer_keypair(scheme: Scheme, seed: u64) -> KeyPair {
    let mut h = Sha256::new();
    h.update(b"sequencer");
    h.update(seed.to_be_bytes());
    KeyPair::from_seed(scheme, h.finalize().into())
}

pub struct Simulator {
    config: SimConfig,
    sid: SessionId,
    committee: Arc<Committee>,
    replicas: Vec<ReplicaNode>,
    clients: BTreeMap<ClientId, ClientNode>,
    actions: BTreeMap<Round, Vec<ScheduledAction>>,
    inflight: BTreeMap<Round, Vec<Envelope>>,
    rng: ChaCha20Rng,
    trace: Trace,
    writes: Vec<WriteRecord>,
    reads: Vec<ReadRecord>,
    failures: Vec<AssertionFailure>,
    auction: Option<(AuctionOutcome, SecretKey)>,
    delivery: DeliveryStats,
}

impl Simulator {
    pub fn new(config: SimConfig, scenario: &Scenario) -> Result<Self, SimError> {
        config.validate()?;
        let sid = SessionId::new(&config.sid).map_err(|_| SimError::Scenario("empty session id".into()))?;
        let (committee, sks) = Committee::deterministic(sid.clone(), config.scheme, config.profile.n(), config.seed);
        let committee = Arc::new(committee);
        let replicas = sks
            .into_iter()
            .enumerate()
            .map(|(i, sk)| {
                let id = ReplicaId(i as u32);
                ReplicaNode::new(id, sid.clone(), sk, config.adversaries.get(&id), config.heartbeat_skip)
            })
            .collect();

        let late: BTreeSet<ClientId> = scenario.late_clients.iter().copied().collect();
        if let Some(c) = late.iter().find(|c| **c >= scenario.clients) {
            return Err(SimError::Scenario(format!("late client {c} does not exist")));
        }
        let mut actions: BTreeMap<Round, Vec<ScheduledAction>> = BTreeMap::new();
        for a in &scenario.actions {
            if a.actor >= scenario.clients {
                return Err(SimError::Scenario(format!("actor {} does not exist", a.actor)));
            }
            if matches!(
                a.action,
                Action::SubmitBid { .. } | Action::RunAuction { .. } | Action::ReadResult
            ) && scenario.auction.is_none()
            {
                return Err(SimError::Scenario("auction action without an auction section".into()));
            }
            actions.entry(a.round).or_default().push(a.clone());
        }

        let auction = match &scenario.auction {
            Some(spec) => {
                let kp = sequencer_keypair(config.scheme, config.seed);
                let cfg = BidsetConfig::new(spec.t0, spec.big_delta, spec.ssid.as_bytes().to_vec(), kp.pk)
                    .map_err(|e| SimError::Scenario(e.to_string()))?;
                Some((
                    AuctionOutcome {
                        config: cfg,
                        sequencer: None,
                        bids: Vec::new(),
                        published: Vec::new(),
                        results: BTreeMap::new(),
                    },
                    kp.sk,
                ))
            }
            None => None,
        };

        let mut sim = Simulator {
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            trace: Trace::new(config.trace),
            sid,
            committee,
            replicas,
            clients: BTreeMap::new(),
            actions,
            inflight: BTreeMap::new(),
            writes: Vec::new(),
            reads: Vec::new(),
            failures: Vec::new(),
            auction,
            delivery: DeliveryStats::default(),
            config,
        };
        for id in 0..scenario.clients {
            let client = Client::new(sim.committee.clone(), sim.config.profile, sim.config.client);
            sim.clients.insert(
                id,
                ClientNode {
                    client,
                    connected: false,
                    sequencer: None,
                    consumer: None,
                },
            );
        }
        // Initial clients are connected before the first round.
        for id in (0..scenario.clients).filter(|c| !late.contains(c)) {
            sim.clients.get_mut(&id).expect("exists").connected = true;
            for r in 0..sim.replicas.len() {
                let outs = sim.replicas[r].on_connect(id, 0);
                sim.send_votes(ReplicaId(r as u32), outs, 0);
            }
        }
        Ok(sim)
    }

    pub fn committee(&self) -> &Arc<Committee> {
        &self.committee
    }

    pub fn run(mut self, observer: &mut dyn Observer) -> SimOutcome {
        for round in 0..=self.config.max_rounds {
            self.deliver(round);
            self.fire_actions(round, observer);
            self.poll_roles(round, observer);
            for (id, node) in &self.clients {
                if node.connected {
                    observer.observe(round, *id, &node.client);
                }
            }
            for r in 0..self.replicas.len() {
                let outs = self.replicas[r].on_round_end(round);
                self.send_votes(ReplicaId(r as u32), outs, round);
            }
        }
        self.finish()
    }

    fn finish(self) -> SimOutcome {
        let protocol_logs = self
            .replicas
            .iter()
            .enumerate()
            .filter_map(|(i, r)| Some((ReplicaId(i as u32), r.protocol_log()?.to_vec())))
            .collect();
        SimOutcome {
            committee: self.committee,
            trace: self.trace,
            writes: self.writes,
            reads: self.reads,
            failures: self.failures,
            auction: self.auction.map(|(a, _)| a),
            clients: self.clients.into_iter().map(|(id, n)| (id, n.client)).collect(),
            protocol_logs,
            delivery: self.delivery,
        }
    }

    fn draw_delay(&mut self, kind: Delay) -> Round {
        match kind {
            Delay::Max => self.config.big_delta,
            Delay::Honest => {
                let (lo, hi) = self.config.delay_range();
                self.rng.gen_range(lo..=hi)
            }
        }
    }

    fn post(&mut self, from: Endpoint, to: Endpoint, frame: &Frame, delay: Round, now: Round) {
        let bytes = frame.encode(&self.sid).expect("simulated frames fit");
        let deliver_at = now + delay;
        if self.trace.full() {
            self.trace.push(Event::Send {
                round: now,
                from,
                to,
                deliver_at,
                frame: hex::encode(&bytes),
            });
        }
        self.inflight.entry(deliver_at).or_default().push(Envelope {
            from,
            to,
            sent: now,
            delay,
            bytes,
        });
    }

    fn send_votes(&mut self, from: ReplicaId, outs: Vec<Out>, now: Round) {
        for out in outs {
            let delay = self.draw_delay(out.delay);
            self.post(
                Endpoint::Replica(from),
                Endpoint::Client(out.to),
                &Frame::Vote { vote: out.vote },
                delay,
                now,
            );
        }
    }

    fn send_to_replicas(&mut self, client: ClientId, frame: Frame, now: Round) {
        for r in 0..self.replicas.len() {
            let delay = self.draw_delay(Delay::Honest);
            self.post(
                Endpoint::Client(client),
                Endpoint::Replica(ReplicaId(r as u32)),
                &frame,
                delay,
                now,
            );
        }
    }

    fn write(&mut self, client: ClientId, tx: Tx, now: Round, observer: &mut dyn Observer) {
        observer.on_write(now, client, &tx);
        self.writes.push(WriteRecord {
            round: now,
            client,
            tx: tx.clone(),
        });
        self.send_to_replicas(client, Frame::Write { tx }, now);
    }

    fn deliver(&mut self, round: Round) {
        let Some(mut due) = self.inflight.remove(&round) else {
            return;
        };
        due.shuffle(&mut self.rng);
        for env in due {
            self.delivery.messages += 1;
            self.delivery.max_delay = self.delivery.max_delay.max(env.delay);
            if env.sent + env.delay != round || env.delay > self.config.big_delta {
                self.delivery.bound_violations += 1;
            }
            let frame = match Frame::decode(&env.bytes, &self.sid) {
                Ok(f) => f,
                Err(_) => continue,
            };
            if self.trace.full() {
                self.trace.push(Event::Deliver {
                    round,
                    from: env.from,
                    to: env.to,
                    tag: frame.tag(),
                });
            }
            match (env.to, frame) {
                (Endpoint::Replica(r), Frame::Connect { client }) => {
                    let outs = self.replicas[r.index()].on_connect(client, round);
                    self.send_votes(r, outs, round);
                }
                (Endpoint::Replica(r), Frame::Write { tx }) => {
                    let outs = self.replicas[r.index()].on_write(tx, round);
                    self.send_votes(r, outs, round);
                }
                (Endpoint::Client(c), Frame::Vote { vote }) => self.client_receives(c, vote, round),
                _ => {}
            }
        }
    }

    fn client_receives(&mut self, c: ClientId, vote: Vote, round: Round) {
        let Some(node) = self.clients.get_mut(&c) else { return };
        let (replica, sn, ts) = (vote.replica, vote.sn, vote.ts);
        let outcome = node.client.process_vote(vote);
        if !self.trace.full() {
            return;
        }
        let ev = match outcome {
            VoteOutcome::Accepted { drained } => Event::Accept {
                round,
                client: c,
                replica,
                sn,
                ts,
                drained,
            },
            VoteOutcome::Backlogged => Event::Hold {
                round,
                client: c,
                replica,
                sn,
                outcome: "backlogged".into(),
            },
            VoteOutcome::Old => Event::Hold {
                round,
                client: c,
                replica,
                sn,
                outcome: "old".into(),
            },
            VoteOutcome::Rejected(reason) => Event::Reject {
                round,
                client: c,
                replica,
                sn,
                reason: format!("{reason:?}"),
            },
        };
        self.trace.push(ev);
    }

    fn fire_actions(&mut self, round: Round, observer: &mut dyn Observer) {
        let Some(actions) = self.actions.remove(&round) else {
            return;
        };
        for a in actions {
            self.trace.push(Event::Action {
                round,
                actor: a.actor,
                action: a.action.clone(),
            });
            let actor = a.actor;
            match a.action {
                Action::Write { tx } => self.write(actor, Tx::new(tx.as_bytes()), round, observer),
                Action::Read => {
                    let view = self.clients[&actor].client.read();
                    self.reads.push(ReadRecord {
                        round,
                        client: actor,
                        view,
                    });
                }
                Action::Connect => {
                    let node = self.clients.get_mut(&actor).expect("validated");
                    if !node.connected {
                        node.connected = true;
                        self.send_to_replicas(actor, Frame::Connect { client: actor }, round);
                    }
                }
                Action::SubmitBid { bid } => {
                    let (auction, _) = self.auction.as_mut().expect("validated");
                    let tx = auction.config.bid_tx(bid.as_bytes());
                    auction.bids.push((round, actor, Tx::new(bid.as_bytes())));
                    self.write(actor, tx, round, observer);
                }
                Action::RunAuction { sequencer } => {
                    let (auction, sk) = self.auction.as_mut().expect("validated");
                    auction.sequencer = Some((actor, sequencer.clone()));
                    let role = SeqRole {
                        behavior: sequencer,
                        seq: Sequencer::new(auction.config.clone(), sk.clone()),
                        sk: sk.clone(),
                    };
                    self.clients.get_mut(&actor).expect("validated").sequencer = Some(role);
                }
                Action::ReadResult => {
                    let (auction, _) = self.auction.as_ref().expect("validated");
                    let consumer = Consumer::new(auction.config.clone());
                    self.clients.get_mut(&actor).expect("validated").consumer = Some(consumer);
                }
                Action::AssertConfirmed { tx } => {
                    let confirmed = self.clients[&actor]
                        .client
                        .trace(&Tx::new(tx.as_bytes()))
                        .is_some_and(|t| t.is_confirmed());
                    if !confirmed {
                        self.fail(round, actor, format!("{tx:?} is not confirmed"));
                    }
                }
                Action::AssertPastPerfect { round: target } => {
                    let r_perf = self.clients[&actor].client.r_perf();
                    if r_perf < target {
                        self.fail(round, actor, format!("r_perf {r_perf} < {target}"));
                    }
                }
            }
        }
    }

    fn fail(&mut self, round: Round, actor: ClientId, message: String) {
        self.trace.push(Event::AssertFailed {
            round,
            actor,
            message: message.clone(),
        });
        self.failures.push(AssertionFailure { round, actor, message });
    }

    fn poll_roles(&mut self, round: Round, observer: &mut dyn Observer) {
        if self.auction.is_none() {
            return;
        }
        let ids: Vec<ClientId> = self.clients.keys().copied().collect();
        for id in ids {
            let mut to_write = Vec::new();
            {
                let node = self.clients.get_mut(&id).expect("exists");
                if let Some(role) = node.sequencer.as_mut() {
                    to_write = sequencer_step(role, &node.client, round);
                }
                if let Some(consumer) = node.consumer.as_mut() {
                    let fresh = consumer.result().is_none();
                    if let (true, Some(res)) = (fresh, consumer.poll(&node.client, round)) {
                        let res = res.clone();
                        self.trace.push(Event::Result {
                            round,
                            client: id,
                            bids: res.bids.iter().cloned().collect(),
                            empty: matches!(res.aux, crate::bidset::ResultAux::Empty { .. }),
                        });
                        self.auction.as_mut().expect("checked").0.results.insert(id, res);
                    }
                }
            }
            for msg in to_write {
                let (auction, _) = self.auction.as_mut().expect("checked");
                let tx = auction.config.bids_tx(&msg);
                auction.published.push((round, msg));
                self.trace.push(Event::Publish {
                    round,
                    client: id,
                    tx: tx.clone(),
                });
                self.write(id, tx, round, observer);
            }
        }
    }
}

fn sequencer_step(role: &mut SeqRole, client: &Client, round: Round) -> Vec<BidsMessage> {
    if role.behavior == SequencerBehavior::Silent {
        return Vec::new();
    }
    if role.seq.poll(client, round).is_none() {
        return Vec::new();
    }
    let (_, honest) = role.seq.output().expect("just published").clone();
    let ssid = role_ssid(role);
    match &role.behavior {
        SequencerBehavior::Honest | SequencerBehavior::Silent => vec![honest],
        SequencerBehavior::Censor { bid } => {
            let mut bids = honest.bids.clone();
            bids.remove(&Tx::new(bid.as_bytes()));
            vec![BidsMessage::sign(&ssid, &role.sk, bids, honest.c_bid)]
        }
        SequencerBehavior::Equivocate => {
            let mut bids = honest.bids.clone();
            match bids.iter().next_back().cloned() {
                Some(top) => bids.remove(&top),
                None => bids.insert(Tx::new(b"0")),
            };
            let other = BidsMessage::sign(&ssid, &role.sk, bids, honest.c_bid.clone());
            vec![honest, other]
        }
    }
}

fn role_ssid(role: &SeqRole) -> Vec<u8> {
    role.seq.config().ssid.clone()
}

/// Runs `scenario` under `config` without an observer.
pub fn run(config: SimConfig, scenario: &Scenario) -> Result<SimOutcome, SimError> {
    Ok(Simulator::new(config, scenario)?.run(&mut ()))
}

/// Runs with an observer attached.
pub fn run_observed(
    config: SimConfig,
    scenario: &Scenario,
    observer: &mut dyn Observer,
) -> Result<SimOutcome, SimError> {
    Ok(Simulator::new(config, scenario)?.run(observer))
}
