//! Online checks of the pod guarantees over a simulation run.
//!
//! Pairwise safety is checked through per-transaction aggregates: the
//! largest `r_min`, smallest `r_max` and extreme `r_conf` over every honest view,
//! and the largest `r_perf` of any honest view that lacked the transaction.
//! A pair of views violates a safety property exactly when these aggregates do.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{Observer, SimOutcome};
use crate::accountability::identify;
use crate::client::Client;
use crate::replica::ClientId;
use crate::types::{ReplicaId, Round, TransactionTrace, Tx, UpperRound};
use crate::validator;

const MAX_EXAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub round: Round,
    pub client: Option<ClientId>,
    pub tx: Option<Tx>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Check {
    pub checked: u64,
    pub violations: u64,
    pub examples: Vec<Violation>,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.violations == 0
    }

    fn pass(&mut self) {
        self.checked += 1;
    }

    fn fail(&mut self, v: Violation) {
        self.checked += 1;
        self.violations += 1;
        if self.examples.len() < MAX_EXAMPLES {
            self.examples.push(v);
        }
    }

    fn test(&mut self, ok: bool, v: impl FnOnce() -> Violation) {
        if ok {
            self.pass()
        } else {
            self.fail(v())
        }
    }

    pub fn merge(&mut self, other: &Check) {
        self.checked += other.checked;
        self.violations += other.violations;
        let room = MAX_EXAMPLES.saturating_sub(self.examples.len());
        self.examples.extend(other.examples.iter().take(room).cloned());
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PropertyReport {
    pub confirmation_within: Check,
    pub past_perfection_within: Check,
    pub past_perfection_safety: Check,
    pub confirmation_bounds: Check,
    pub timeliness: Check,
    pub monotonicity: Check,
    pub validity: Check,
    pub no_framing: Check,
    pub replica_logs: Check,
    pub delivery_bound: Check,
}

impl PropertyReport {
    pub fn checks(&self) -> [(&'static str, &Check); 10] {
        [
            ("confirmation_within", &self.confirmation_within),
            ("past_perfection_within", &self.past_perfection_within),
            ("past_perfection_safety", &self.past_perfection_safety),
            ("confirmation_bounds", &self.confirmation_bounds),
            ("timeliness", &self.timeliness),
            ("monotonicity", &self.monotonicity),
            ("validity", &self.validity),
            ("no_framing", &self.no_framing),
            ("replica_logs", &self.replica_logs),
            ("delivery_bound", &self.delivery_bound),
        ]
    }

    pub fn passed(&self) -> bool {
        self.checks().iter().all(|(_, c)| c.ok())
    }

    pub fn merge(&mut self, o: &PropertyReport) {
        self.confirmation_within.merge(&o.confirmation_within);
        self.past_perfection_within.merge(&o.past_perfection_within);
        self.past_perfection_safety.merge(&o.past_perfection_safety);
        self.confirmation_bounds.merge(&o.confirmation_bounds);
        self.timeliness.merge(&o.timeliness);
        self.monotonicity.merge(&o.monotonicity);
        self.validity.merge(&o.validity);
        self.no_framing.merge(&o.no_framing);
        self.replica_logs.merge(&o.replica_logs);
        self.delivery_bound.merge(&o.delivery_bound);
    }
}

#[derive(Debug, Clone)]
struct Aggregate {
    max_r_min: Round,
    min_r_max: UpperRound,
    min_r_conf: Option<Round>,
    max_r_conf: Option<Round>,
}

#[derive(Debug, Clone)]
struct LastView {
    r_perf: Round,
    traces: BTreeMap<Tx, TransactionTrace>,
}

#[derive(Debug, Clone)]
pub struct PropertyChecker {
    delta: Round,
    max_rounds: Round,
    /// Check `valid()` on views at multiples of this round (and the last round). 0 disables.
    validity_every: Round,
    writes: BTreeMap<Tx, Round>,
    first_seen: BTreeMap<ClientId, Round>,
    last: BTreeMap<ClientId, LastView>,
    max_r_perf: Round,
    lacking: BTreeMap<Tx, Round>,
    aggregates: BTreeMap<Tx, Aggregate>,
    report: PropertyReport,
}

impl PropertyChecker {
    pub fn new(delta: Round, max_rounds: Round, validity_every: Round) -> Self {
        PropertyChecker {
            delta,
            max_rounds,
            validity_every,
            writes: BTreeMap::new(),
            first_seen: BTreeMap::new(),
            last: BTreeMap::new(),
            max_r_perf: 0,
            lacking: BTreeMap::new(),
            aggregates: BTreeMap::new(),
            report: PropertyReport::default(),
        }
    }

    fn check_liveness(&mut self, round: Round, c: ClientId, traces: &BTreeMap<Tx, TransactionTrace>, r_perf: Round) {
        // Clients that joined late have not seen the earlier traffic.
        if self.first_seen.get(&c) != Some(&0) {
            return;
        }
        let delta = self.delta;
        for (tx, r) in &self.writes {
            if r + 2 * delta > round {
                continue;
            }
            let confirmed = traces.get(tx).is_some_and(TransactionTrace::is_confirmed);
            self.report.confirmation_within.test(confirmed, || Violation {
                round,
                client: Some(c),
                tx: Some(tx.clone()),
                detail: format!("written at {r}, unconfirmed at {round}"),
            });
        }
        if round >= delta {
            self.report
                .past_perfection_within
                .test(r_perf + delta >= round, || Violation {
                    round,
                    client: Some(c),
                    tx: None,
                    detail: format!("r_perf {r_perf} < {round} - {delta}"),
                });
        }
    }

    fn check_timeliness(&mut self, round: Round, c: ClientId, traces: &BTreeMap<Tx, TransactionTrace>) {
        let delta = self.delta;
        for (tx, r) in &self.writes {
            let Some(t) = traces.get(tx) else { continue };
            let within = |x: Round| *r < x && x <= r + delta;
            if let Some(rc) = t.r_conf {
                self.report.timeliness.test(within(rc), || Violation {
                    round,
                    client: Some(c),
                    tx: Some(tx.clone()),
                    detail: format!("written at {r}, r_conf {rc}"),
                });
            }
            // Bounds are tight only once every honest vote can have arrived.
            if round >= r + 2 * delta {
                let ok = match t.r_max {
                    UpperRound::Finite(m) => within(m) && m.saturating_sub(t.r_min) < delta,
                    UpperRound::Infinite => false,
                };
                self.report.timeliness.test(ok, || Violation {
                    round,
                    client: Some(c),
                    tx: Some(tx.clone()),
                    detail: format!("written at {r}, r_min {} r_max {}", t.r_min, t.r_max),
                });
            }
        }
    }

    fn check_monotonicity(
        &mut self,
        round: Round,
        c: ClientId,
        traces: &BTreeMap<Tx, TransactionTrace>,
        r_perf: Round,
    ) {
        let Some(prev) = self.last.get(&c) else { return };
        let mut bad: Vec<String> = Vec::new();
        if r_perf < prev.r_perf {
            bad.push(format!("r_perf {} -> {r_perf}", prev.r_perf));
        }
        for (tx, old) in &prev.traces {
            match traces.get(tx) {
                None => bad.push(format!("{tx} disappeared")),
                Some(new) => {
                    if new.r_min < old.r_min || new.r_max > old.r_max || (old.r_conf.is_some() && new.r_conf.is_none())
                    {
                        bad.push(format!(
                            "{tx}: ({}, {}, {:?}) -> ({}, {}, {:?})",
                            old.r_min, old.r_max, old.r_conf, new.r_min, new.r_max, new.r_conf
                        ));
                    }
                }
            }
        }
        let ok = bad.is_empty();
        self.report.monotonicity.test(ok, || Violation {
            round,
            client: Some(c),
            tx: None,
            detail: bad.join("; "),
        });
    }

    fn aggregate(&mut self, traces: &BTreeMap<Tx, TransactionTrace>, r_perf: Round) {
        for (tx, t) in traces {
            if !self.lacking.contains_key(tx) {
                // Every earlier view, of any client, lacked it.
                self.lacking.insert(tx.clone(), self.max_r_perf);
            }
            let a = self.aggregates.entry(tx.clone()).or_insert(Aggregate {
                max_r_min: 0,
                min_r_max: UpperRound::Infinite,
                min_r_conf: None,
                max_r_conf: None,
            });
            a.max_r_min = a.max_r_min.max(t.r_min);
            a.min_r_max = a.min_r_max.min(t.r_max);
            if let Some(rc) = t.r_conf {
                a.min_r_conf = Some(a.min_r_conf.map_or(rc, |m| m.min(rc)));
                a.max_r_conf = Some(a.max_r_conf.map_or(rc, |m| m.max(rc)));
            }
        }
        for (tx, l) in self.lacking.iter_mut() {
            if !traces.contains_key(tx) {
                *l = (*l).max(r_perf);
            }
        }
        self.max_r_perf = self.max_r_perf.max(r_perf);
    }

    fn check_validity(&mut self, round: Round, c: ClientId, client: &Client) {
        let view = client.read();
        let res = validator::check(client.committee(), client.profile(), &view.data, &view.certs);
        self.report.validity.test(res.is_ok(), || Violation {
            round,
            client: Some(c),
            tx: None,
            detail: format!("{res:?}"),
        });
    }

    /// Completes the report with the end-of-run checks.
    pub fn finish(mut self, outcome: &SimOutcome, byzantine: &BTreeSet<ReplicaId>) -> PropertyReport {
        let end = self.max_rounds;
        for (tx, a) in &self.aggregates {
            let lacking = self.lacking.get(tx).copied().unwrap_or(0);
            let pp_ok = a.min_r_conf.is_none_or(|rc| rc >= lacking);
            self.report.past_perfection_safety.test(pp_ok, || Violation {
                round: end,
                client: None,
                tx: Some(tx.clone()),
                detail: format!(
                    "confirmed at {:?} but absent from a view with r_perf {lacking}",
                    a.min_r_conf
                ),
            });
            let lo_ok = a.min_r_conf.is_none_or(|rc| a.max_r_min <= rc);
            let hi_ok = a.max_r_conf.is_none_or(|rc| UpperRound::Finite(rc) <= a.min_r_max);
            self.report.confirmation_bounds.test(lo_ok && hi_ok, || Violation {
                round: end,
                client: None,
                tx: Some(tx.clone()),
                detail: format!(
                    "r_min up to {}, r_max down to {}, r_conf in {:?}..{:?}",
                    a.max_r_min, a.min_r_max, a.min_r_conf, a.max_r_conf
                ),
            });
        }

        let mut votes = outcome.observed_votes();
        for c in outcome.clients.values() {
            let certs = c.certificates();
            votes.extend(certs.votes().cloned());
            votes.extend(certs.c_pp.into_values());
        }
        let named = identify(&outcome.committee, &votes);
        let framed: Vec<ReplicaId> = named.difference(byzantine).copied().collect();
        self.report.no_framing.test(framed.is_empty(), || Violation {
            round: end,
            client: None,
            tx: None,
            detail: format!("honest replicas identified: {framed:?}"),
        });

        for (r, log) in &outcome.protocol_logs {
            let gapless = log.iter().enumerate().all(|(i, v)| v.sn == i as u64);
            let ordered = log.windows(2).all(|w| w[0].ts <= w[1].ts);
            let unique = log.iter().map(|v| &v.tx).collect::<BTreeSet<_>>().len() == log.len();
            self.report
                .replica_logs
                .test(gapless && ordered && unique, || Violation {
                    round: end,
                    client: None,
                    tx: None,
                    detail: format!("{r}: gapless {gapless}, ordered {ordered}, unique {unique}"),
                });
        }

        let d = outcome.delivery;
        self.report.delivery_bound.test(d.bound_violations == 0, || Violation {
            round: end,
            client: None,
            tx: None,
            detail: format!("{} late deliveries, max delay {}", d.bound_violations, d.max_delay),
        });
        self.report
    }
}

impl Observer for PropertyChecker {
    fn on_write(&mut self, round: Round, _client: ClientId, tx: &Tx) {
        self.writes.entry(tx.clone()).or_insert(round);
    }

    fn observe(&mut self, round: Round, c: ClientId, client: &Client) {
        self.first_seen.entry(c).or_insert(round);
        let data = client.read_data();
        self.check_liveness(round, c, &data.traces, data.r_perf);
        self.check_timeliness(round, c, &data.traces);
        self.check_monotonicity(round, c, &data.traces, data.r_perf);
        self.aggregate(&data.traces, data.r_perf);
        let sample = self.validity_every > 0 && (round % self.validity_every == 0 || round == self.max_rounds);
        if sample {
            self.check_validity(round, c, client);
        }
        self.last.insert(
            c,
            LastView {
                r_perf: data.r_perf,
                traces: data.traces,
            },
        );
    }
}
