//! Single-point corruptions of a view, for exercising the validator.
//!
//! Each mutation changes exactly one field or entry and is chosen so that the
//! result differs from the input in a way `valid()` must notice.

use rand::seq::IteratorRandom;
use rand::Rng;

use crate::types::{Round, TransactionTrace, Tx, UpperRound, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MutationKind {
    RPerf,
    RMin,
    RMax,
    RConf,
    DropTrace,
    AddTrace,
    HeartbeatFlag,
    DropVote,
    VoteTimestamp,
    VoteSeqNum,
    SwapSignature,
    DropCpp,
    StaleCpp,
}

pub const ALL_KINDS: [MutationKind; 13] = [
    MutationKind::RPerf,
    MutationKind::RMin,
    MutationKind::RMax,
    MutationKind::RConf,
    MutationKind::DropTrace,
    MutationKind::AddTrace,
    MutationKind::HeartbeatFlag,
    MutationKind::DropVote,
    MutationKind::VoteTimestamp,
    MutationKind::VoteSeqNum,
    MutationKind::SwapSignature,
    MutationKind::DropCpp,
    MutationKind::StaleCpp,
];

fn nudge(x: Round, rng: &mut impl Rng) -> Round {
    if x == 0 || rng.gen_bool(0.5) {
        x + 1
    } else {
        x - 1
    }
}

fn pick_trace<'a>(v: &'a mut View, rng: &mut impl Rng) -> Option<&'a mut TransactionTrace> {
    v.data.traces.values_mut().choose(rng)
}

/// Applies `kind` to a copy of `view`. `None` if the view has nothing to mutate
/// of that kind.
pub fn apply(view: &View, kind: MutationKind, rng: &mut impl Rng) -> Option<View> {
    let mut v = view.clone();
    match kind {
        MutationKind::RPerf => v.data.r_perf = nudge(v.data.r_perf, rng),
        MutationKind::RMin => {
            let t = pick_trace(&mut v, rng)?;
            t.r_min = nudge(t.r_min, rng);
        }
        MutationKind::RMax => {
            let t = pick_trace(&mut v, rng)?;
            t.r_max = match t.r_max {
                UpperRound::Infinite => UpperRound::Finite(t.r_min),
                UpperRound::Finite(_) if rng.gen_bool(0.3) => UpperRound::Infinite,
                UpperRound::Finite(m) => UpperRound::Finite(nudge(m, rng)),
            };
        }
        MutationKind::RConf => {
            let t = pick_trace(&mut v, rng)?;
            t.r_conf = match t.r_conf {
                None => Some(t.r_min),
                Some(_) if rng.gen_bool(0.3) => None,
                Some(c) => Some(nudge(c, rng)),
            };
        }
        MutationKind::DropTrace => {
            let tx = v.data.traces.keys().choose(rng)?.clone();
            v.data.traces.remove(&tx);
        }
        MutationKind::AddTrace => {
            let tx = Tx::new(format!("injected-{}", rng.gen::<u32>()));
            let r = v.data.r_perf;
            v.data.traces.insert(
                tx.clone(),
                TransactionTrace {
                    tx,
                    r_min: r,
                    r_max: UpperRound::Finite(r + 1),
                    r_conf: Some(r),
                },
            );
        }
        MutationKind::HeartbeatFlag => {
            // Only observable when the certificates hold heartbeats.
            if !v.certs.c_tx.keys().any(Tx::is_heartbeat) {
                return None;
            }
            v.data.include_heartbeats = !v.data.include_heartbeats;
        }
        MutationKind::DropVote => {
            let (tx, r) = v
                .certs
                .c_tx
                .iter()
                .flat_map(|(tx, m)| m.keys().map(move |r| (tx.clone(), *r)))
                .choose(rng)?;
            let m = v.certs.c_tx.get_mut(&tx).expect("chosen");
            m.remove(&r);
            if m.is_empty() {
                v.certs.c_tx.remove(&tx);
            }
        }
        MutationKind::VoteTimestamp | MutationKind::VoteSeqNum => {
            let vote = v.certs.c_tx.values_mut().flat_map(|m| m.values_mut()).choose(rng)?;
            if kind == MutationKind::VoteTimestamp {
                vote.ts = nudge(vote.ts, rng);
            } else {
                vote.sn = nudge(vote.sn, rng);
            }
        }
        MutationKind::SwapSignature => {
            let sigmas: Vec<_> = v.certs.votes().map(|x| x.sigma.clone()).collect();
            let vote = v.certs.c_tx.values_mut().flat_map(|m| m.values_mut()).choose(rng)?;
            let other = sigmas.into_iter().filter(|s| *s != vote.sigma).choose(rng)?;
            vote.sigma = other;
        }
        MutationKind::DropCpp => {
            let r = *v.certs.c_pp.keys().choose(rng)?;
            v.certs.c_pp.remove(&r);
        }
        MutationKind::StaleCpp => {
            let (r, last) = v.certs.c_pp.iter().filter(|(_, x)| x.sn > 0).choose(rng)?;
            let (r, sn) = (*r, last.sn);
            let earlier = v.certs.votes().find(|x| x.replica == r && x.sn + 1 == sn)?.clone();
            v.certs.c_pp.insert(r, earlier);
        }
    }
    (v != *view).then_some(v)
}

/// A random applicable mutation.
pub fn mutate(view: &View, rng: &mut impl Rng) -> Option<(MutationKind, View)> {
    let mut kinds = ALL_KINDS;
    for i in (1..kinds.len()).rev() {
        kinds.swap(i, rng.gen_range(0..=i));
    }
    kinds.into_iter().find_map(|k| apply(view, k, rng).map(|v| (k, v)))
}
