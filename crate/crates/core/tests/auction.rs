use std::collections::BTreeSet;

use pod_core::accountability::{identify_sequencer, identify_sequencer_equivocation, CulpableReason, SequencerVerdict};
use pod_core::bidset::{second_price, ResultAux};
use pod_core::simnet::{run, AuctionOutcome, Scenario, SequencerBehavior, SimConfig, SimOutcome};
use pod_core::{FaultProfile, Round, Tx};

const T0: Round = 10;

fn auction(delta: Round, big_delta: Round, seq: SequencerBehavior, seed: u64) -> (SimOutcome, AuctionOutcome) {
    auction_with_jitter(delta, big_delta, delta - 1, seq, seed)
}

fn auction_with_jitter(
    delta: Round,
    big_delta: Round,
    jitter: Round,
    seq: SequencerBehavior,
    seed: u64,
) -> (SimOutcome, AuctionOutcome) {
    let p = FaultProfile::check(9, 1, 1).unwrap();
    let mut cfg = SimConfig::new(p, delta, seed);
    cfg.big_delta = big_delta;
    cfg.jitter = jitter;
    cfg.max_rounds = T0 + 3 * big_delta + 4 * delta + 5;
    let sc = Scenario::auction(4, T0, big_delta, &[(1, "5"), (2, "9"), (3, "7")], seq);
    let out = run(cfg, &sc).unwrap();
    let a = out.auction.clone().unwrap();
    (out, a)
}

fn bids(xs: &[&str]) -> BTreeSet<Tx> {
    xs.iter().map(Tx::new).collect()
}

#[test]
fn honest_sequencer_gives_an_agreed_complete_set() {
    for (d, bd) in [(1, 2), (2, 3), (1, 5), (3, 4)] {
        for seed in 0..5 {
            let (_, a) = auction(d, bd, SequencerBehavior::Honest, seed);
            assert_eq!(a.results.len(), 4);
            for r in a.results.values() {
                assert_eq!(r.bids, bids(&["5", "9", "7"]), "d={d} D={bd}");
                assert!(matches!(r.aux, ResultAux::Bids { .. }));
                // The sequencer's past-perfect round passes t0 + Δ one round
                // after t0 + Δ + δ, which delays every later step by one.
                assert!(r.round <= T0 + bd + 3 * d + 1, "d={d} D={bd}: {}", r.round);
                assert!(r.equivocation.is_empty());
            }
            assert_eq!(second_price(&a.results[&0].bids), Some((9, 7)));
        }
    }
}

#[test]
fn delay_equal_to_bound_yields_agreed_empty_set() {
    // Every message takes exactly Δ: the bid set is confirmed at t0 + 3Δ + 1,
    // one round past the consumers' deadline.
    for d in 1..=3 {
        let (_, a) = auction_with_jitter(d, d, 0, SequencerBehavior::Honest, 1);
        let (_, msg) = &a.published[0];
        assert_eq!(msg.bids.len(), 3);
        for r in a.results.values() {
            assert!(r.bids.is_empty());
            assert!(r.round <= T0 + 3 * d + d + 1);
        }
    }
}

#[test]
fn silent_sequencer_times_out_with_empty_set() {
    for (d, bd) in [(1, 1), (1, 3), (2, 4)] {
        let (_, a) = auction(d, bd, SequencerBehavior::Silent, 2);
        assert!(a.published.is_empty());
        for r in a.results.values() {
            assert!(r.bids.is_empty());
            assert!(matches!(r.aux, ResultAux::Empty { .. }));
            assert_eq!(r.round, T0 + 3 * bd + d + 1, "d={d} D={bd}");
        }
    }
}

#[test]
fn censoring_sequencer_is_culpable() {
    let (out, a) = auction(1, 3, SequencerBehavior::Censor { bid: "9".into() }, 3);
    for r in a.results.values() {
        assert_eq!(r.bids, bids(&["5", "7"]));
    }
    let p = *out.clients[&0].profile();
    for (id, client) in &out.clients {
        let ev = a
            .censorship_evidence(client, b"9")
            .unwrap_or_else(|| panic!("client {id}"));
        assert_eq!(
            identify_sequencer(&out.committee, &p, &a.config, &ev),
            SequencerVerdict::Culpable(CulpableReason::CensoredBid)
        );
    }
}

#[test]
fn honest_sequencer_is_not_culpable() {
    let (out, a) = auction(1, 3, SequencerBehavior::Honest, 3);
    let p = *out.clients[&0].profile();
    for bid in ["5", "9", "7"] {
        let ev = a.censorship_evidence(&out.clients[&2], bid.as_bytes()).unwrap();
        assert_eq!(
            identify_sequencer(&out.committee, &p, &a.config, &ev),
            SequencerVerdict::NotCulpable
        );
    }
}

#[test]
fn equivocating_sequencer_is_caught_and_consumers_agree() {
    let (_, a) = auction(1, 3, SequencerBehavior::Equivocate, 4);
    assert_eq!(a.published.len(), 2);
    assert!(identify_sequencer_equivocation(
        &a.config,
        &a.published[0].1,
        &a.published[1].1
    ));
    let first = &a.results[&0];
    for r in a.results.values() {
        assert_eq!(r.bids, first.bids);
        assert_eq!(r.equivocation.len(), 1);
    }
}
