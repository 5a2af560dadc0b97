//! Timestamp aggregation shared by clients and verifiers.
//!
//! Each function is written the way the client algorithm states it (fill,
//! sort, pad, take a median) rather than as a single index lookup; the index
//! shortcuts are kept in the tests as an independent oracle.

use crate::types::{median_of, FaultProfile, Round, UpperRound};

/// Lowest round the transaction could still be confirmed at.
///
/// `timestamps[i]` is replica `i`'s vote on the transaction, if received.
/// Missing replicas are assumed to vote at their most recent timestamp, and up
/// to β of the received votes are assumed to be lies in the low direction.
pub fn min_possible_ts(profile: &FaultProfile, timestamps: &[Option<Round>], mrt: &[Round]) -> Round {
    debug_assert_eq!(timestamps.len(), profile.n());
    debug_assert_eq!(mrt.len(), profile.n());
    let mut filled: Vec<Round> = timestamps.iter().zip(mrt).map(|(ts, m)| ts.unwrap_or(*m)).collect();
    filled.sort();
    let mut padded = vec![0; profile.beta()];
    padded.extend(filled);
    median_of(&padded[..profile.alpha()]).expect("alpha >= 1")
}

/// Highest round the transaction could still be confirmed at.
pub fn max_possible_ts(profile: &FaultProfile, timestamps: &[Option<Round>]) -> UpperRound {
    debug_assert_eq!(timestamps.len(), profile.n());
    let mut filled: Vec<UpperRound> = timestamps
        .iter()
        .map(|ts| ts.map_or(UpperRound::Infinite, UpperRound::Finite))
        .collect();
    filled.sort();
    filled.extend(std::iter::repeat_n(UpperRound::Infinite, profile.beta()));
    median_of(&filled[filled.len() - profile.alpha()..]).expect("alpha >= 1")
}

/// Median of all received timestamps once at least α have arrived.
pub fn confirmed_round(profile: &FaultProfile, timestamps: &[Option<Round>]) -> Option<Round> {
    let mut received: Vec<Round> = timestamps.iter().flatten().copied().collect();
    if received.len() < profile.alpha() {
        return None;
    }
    received.sort();
    median_of(&received).ok()
}

/// Every transaction that can ever be confirmed below this round is already known.
pub fn past_perfect_round(profile: &FaultProfile, mrt: &[Round]) -> Round {
    debug_assert_eq!(mrt.len(), profile.n());
    let mut sorted = mrt.to_vec();
    sorted.sort();
    let mut padded = vec![0; profile.beta()];
    padded.extend(sorted);
    median_of(&padded[..profile.alpha()]).expect("alpha >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Closed-form index shortcuts over the n filled-and-sorted values.
    fn oracle_min(p: &FaultProfile, ts: &[Option<Round>], mrt: &[Round]) -> Round {
        let mut v: Vec<Round> = ts.iter().zip(mrt).map(|(t, m)| t.unwrap_or(*m)).collect();
        v.sort_unstable();
        v[p.alpha() / 2 - p.beta()]
    }

    fn oracle_max(p: &FaultProfile, ts: &[Option<Round>]) -> UpperRound {
        let mut v: Vec<Round> = ts.iter().map(|t| t.unwrap_or(Round::MAX)).collect();
        v.sort_unstable();
        let idx = p.n() - p.alpha() + p.alpha() / 2 + p.beta();
        if idx >= v.len() || ts.iter().filter(|t| t.is_some()).count() <= idx {
            UpperRound::Infinite
        } else {
            UpperRound::Finite(v[idx])
        }
    }

    fn oracle_perf(p: &FaultProfile, mrt: &[Round]) -> Round {
        let mut v = mrt.to_vec();
        v.sort_unstable();
        v[p.alpha() / 2 - p.beta()]
    }

    fn profile(n: usize, b: usize, g: usize) -> FaultProfile {
        FaultProfile::check(n, b, g).unwrap()
    }

    #[test]
    fn min_examples() {
        let p = profile(5, 0, 1);
        let ts = [Some(3), Some(5), Some(7), Some(9), None];
        assert_eq!(min_possible_ts(&p, &ts, &[9, 9, 9, 9, 4]), 5);

        let p = profile(9, 1, 1);
        let mut ts: Vec<Option<Round>> = (1..=8).map(Some).collect();
        ts.push(None);
        assert_eq!(min_possible_ts(&p, &ts, &[20, 20, 20, 20, 20, 20, 20, 20, 9]), 3);

        assert_eq!(min_possible_ts(&p, &[Some(6); 9], &[6; 9]), 6);
    }

    #[test]
    fn max_examples() {
        let p = profile(5, 0, 1);
        let ts = [Some(3), Some(5), Some(7), Some(9), None];
        assert_eq!(max_possible_ts(&p, &ts), UpperRound::Finite(9));
        assert_eq!(
            max_possible_ts(&p, &[Some(3), Some(5), None, None, None]),
            UpperRound::Infinite
        );
        assert_eq!(max_possible_ts(&profile(9, 1, 1), &[Some(4); 9]), UpperRound::Finite(4));
    }

    #[test]
    fn confirmation_examples() {
        let p = profile(9, 1, 1);
        let ts = [
            Some(2),
            Some(2),
            Some(3),
            Some(4),
            Some(5),
            Some(6),
            Some(7),
            None,
            None,
        ];
        assert_eq!(confirmed_round(&p, &ts), Some(4));
        let short = [Some(2), Some(2), Some(3), Some(4), Some(5), Some(6), None, None, None];
        assert_eq!(confirmed_round(&p, &short), None);
    }

    #[test]
    fn past_perfect_examples() {
        assert_eq!(past_perfect_round(&profile(9, 1, 1), &[0; 9]), 0);
        let mrt: Vec<Round> = (10..=18).rev().collect();
        assert_eq!(past_perfect_round(&profile(9, 1, 1), &mrt), 12);
    }

    fn instance() -> impl Strategy<Value = (FaultProfile, Vec<Option<Round>>, Vec<Round>)> {
        prop_oneof![
            Just(profile(5, 0, 1)),
            Just(profile(9, 1, 1)),
            Just(profile(13, 2, 0)),
            Just(profile(7, 0, 2)),
        ]
        .prop_flat_map(|p| {
            let n = p.n();
            (
                Just(p),
                proptest::collection::vec(proptest::option::of(0u64..50), n),
                proptest::collection::vec(0u64..50, n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn index_formulas_agree((p, ts, mrt) in instance()) {
            prop_assert_eq!(min_possible_ts(&p, &ts, &mrt), oracle_min(&p, &ts, &mrt));
            prop_assert_eq!(max_possible_ts(&p, &ts), oracle_max(&p, &ts));
            prop_assert_eq!(past_perfect_round(&p, &mrt), oracle_perf(&p, &mrt));
        }

        #[test]
        fn confirmed_lies_within_bounds((p, ts, mrt) in instance()) {
            // Honest clients only hold votes no newer than the sender's mrt.
            let mrt: Vec<Round> = ts.iter().zip(&mrt).map(|(t, m)| t.map_or(*m, |t| t.max(*m))).collect();
            if let Some(conf) = confirmed_round(&p, &ts) {
                prop_assert!(min_possible_ts(&p, &ts, &mrt) <= conf);
                prop_assert!(UpperRound::Finite(conf) <= max_possible_ts(&p, &ts));
            }
        }
    }
}
