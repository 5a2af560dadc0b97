//! Randomized runs under a fault budget, each checked by [`PropertyChecker`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::properties::{PropertyChecker, PropertyReport};
use super::{run_observed, Behavior, Scenario, SimConfig, SimError, TraceLevel};
use crate::types::{FaultProfile, ReplicaId, Round};

/// Which behaviours a sweep may assign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum AdversaryPool {
    /// `EQUIVOCATE_SN` and `STALE_TS` for Byzantine slots, `OMIT_ALL` for omission slots.
    #[default]
    Standard,
    /// Adds `OMIT_TO`, `CRASH_AT` and `DELAY_MAX` (with Δ = 2δ).
    Extended,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepParams {
    pub delta: Round,
    pub clients: u64,
    pub max_writes: usize,
    pub pool: AdversaryPool,
    pub validity_every: Round,
}

impl SweepParams {
    pub fn new(delta: Round) -> Self {
        SweepParams {
            delta,
            clients: 3,
            max_writes: 6,
            pool: AdversaryPool::Standard,
            validity_every: 10,
        }
    }

    pub fn horizon(&self) -> Round {
        8 * self.delta + 10
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub seed: u64,
    pub n: usize,
    pub beta: usize,
    pub gamma: usize,
    pub delta: Round,
    pub adversaries: Vec<(ReplicaId, String)>,
    pub writes: usize,
    pub report: PropertyReport,
}

fn draw_byzantine(rng: &mut ChaCha20Rng, horizon: Round) -> Behavior {
    if rng.gen_bool(0.5) {
        Behavior::EquivocateSn {
            skew: rng.gen_range(1..=3),
        }
    } else {
        Behavior::StaleTs {
            from: rng.gen_range(0..=horizon / 2),
        }
    }
}

fn draw_omission(rng: &mut ChaCha20Rng, pool: AdversaryPool, clients: u64, horizon: Round) -> Behavior {
    if pool != AdversaryPool::Extended {
        return Behavior::OmitAll;
    }
    match rng.gen_range(0..4) {
        0 => Behavior::OmitAll,
        1 => Behavior::OmitTo {
            targets: vec![rng.gen_range(0..clients.max(1))],
        },
        2 => Behavior::CrashAt {
            round: rng.gen_range(0..=horizon),
        },
        _ => Behavior::DelayMax,
    }
}

/// The configuration and scenario of one sweep case. Deterministic in `seed`.
pub fn random_case(profile: FaultProfile, params: &SweepParams, seed: u64) -> (SimConfig, Scenario) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let delta = params.delta;
    let horizon = params.horizon();
    let mut config = SimConfig::new(profile, delta, seed);
    config.jitter = delta - 1;
    config.max_rounds = horizon;
    config.trace = TraceLevel::Summary;
    if params.pool == AdversaryPool::Extended {
        config.big_delta = 2 * delta;
        config.heartbeat_skip = rng.gen_bool(0.5);
    }

    if params.pool != AdversaryPool::None {
        let mut ids: Vec<ReplicaId> = (0..profile.n() as u32).map(ReplicaId).collect();
        ids.shuffle(&mut rng);
        let byz = rng.gen_range(0..=profile.beta());
        let omit = rng.gen_range(0..=profile.beta() + profile.gamma() - byz);
        for (i, id) in ids.into_iter().take(byz + omit).enumerate() {
            let b = if i < byz {
                draw_byzantine(&mut rng, horizon)
            } else {
                draw_omission(&mut rng, params.pool, params.clients, horizon)
            };
            config.adversaries.insert(id, b);
        }
    }

    let mut scenario = Scenario::new(params.clients);
    let last_write = horizon - 2 * delta - 1;
    let writes = rng.gen_range(1..=params.max_writes.max(1));
    for i in 0..writes {
        let round = rng.gen_range(1..=last_write);
        let actor = rng.gen_range(0..params.clients);
        scenario = scenario.write(round, actor, format!("tx-{seed}-{i}"));
    }
    (config, scenario)
}

pub fn run_case(profile: FaultProfile, params: &SweepParams, seed: u64) -> Result<CaseReport, SimError> {
    let (config, scenario) = random_case(profile, params, seed);
    let byzantine = config.byzantine();
    let adversaries = config.adversaries.iter().map(|(r, b)| (*r, b.to_string())).collect();
    let mut checker = PropertyChecker::new(params.delta, config.max_rounds, params.validity_every);
    let outcome = run_observed(config, &scenario, &mut checker)?;
    let report = checker.finish(&outcome, &byzantine);
    Ok(CaseReport {
        seed,
        n: profile.n(),
        beta: profile.beta(),
        gamma: profile.gamma(),
        delta: params.delta,
        adversaries,
        writes: outcome.writes.len(),
        report,
    })
}
