use std::collections::BTreeMap;

use pod_core::mutation::{apply, mutate, MutationKind, ALL_KINDS};
use pod_core::simnet::run;
use pod_core::simnet::sweep::{random_case, SweepParams};
use pod_core::{valid_view, FaultProfile, View};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn honest_views(count: usize) -> Vec<(std::sync::Arc<pod_core::Committee>, FaultProfile, View)> {
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < count {
        let p = [(5, 0, 1), (9, 1, 1), (7, 0, 2)][seed as usize % 3];
        let p = FaultProfile::check(p.0, p.1, p.2).unwrap();
        let mut params = SweepParams::new(1 + seed % 2);
        params.max_writes = 3;
        let (mut cfg, sc) = random_case(p, &params, seed);
        cfg.max_rounds = 14;
        cfg.client.include_heartbeats = seed % 5 == 0;
        let o = run(cfg, &sc).unwrap();
        for c in o.clients.values() {
            out.push((o.committee.clone(), p, c.read()));
        }
        seed += 1;
    }
    out.truncate(count);
    out
}

#[test]
fn every_single_mutation_is_rejected() {
    let views = honest_views(1000);
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let mut by_kind: BTreeMap<MutationKind, usize> = BTreeMap::new();
    for (i, (committee, p, view)) in views.iter().enumerate() {
        assert!(valid_view(committee, p, view), "honest view {i}");
        let (kind, bad) = mutate(view, &mut rng).expect("some mutation applies");
        assert_ne!(&bad, view);
        assert!(!valid_view(committee, p, &bad), "view {i} survived {kind:?}");
        *by_kind.entry(kind).or_default() += 1;
    }
    assert!(by_kind.len() >= 10, "{by_kind:?}");
}

#[test]
fn each_kind_is_rejected_where_applicable() {
    let views = honest_views(60);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    for kind in ALL_KINDS {
        let mut applied = 0;
        for (committee, p, view) in &views {
            if let Some(bad) = apply(view, kind, &mut rng) {
                applied += 1;
                assert!(!valid_view(committee, p, &bad), "{kind:?}");
            }
        }
        assert!(applied > 0, "{kind:?} never applied");
    }
}
