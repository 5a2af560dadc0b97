use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use pod_bench::fixture;
use pod_core::{valid_view, FaultProfile, ReplicaId, Scheme, SessionId, Tx, Vote};

fn sign_verify(c: &mut Criterion) {
    let mut g = c.benchmark_group("vote");
    for scheme in [Scheme::Ed25519, Scheme::KeyedHash] {
        let f = fixture(FaultProfile::check(4, 0, 1).unwrap(), scheme, 1);
        let sid = SessionId::new(b"pod-bench").unwrap();
        let (_, sks) = pod_core::Committee::deterministic(sid.clone(), scheme, 4, 1);
        g.bench_function(BenchmarkId::new("sign", format!("{scheme:?}")), |b| {
            b.iter(|| Vote::sign(&sid, ReplicaId(0), &sks[0], Tx::from("t"), 7, 3).unwrap())
        });
        let vote = f.votes[0].clone();
        g.bench_function(BenchmarkId::new("verify", format!("{scheme:?}")), |b| {
            b.iter(|| assert!(f.committee.verify_vote(&vote)))
        });
    }
    g.finish();
}

fn client(c: &mut Criterion) {
    let mut g = c.benchmark_group("client");
    for n in [4, 16, 64] {
        let p = FaultProfile::check(n, 0, (n - 1) / 3).unwrap();
        let f = fixture(p, Scheme::Ed25519, 20);
        g.throughput(Throughput::Elements(f.votes.len() as u64));
        g.bench_function(BenchmarkId::new("process_votes", n), |b| {
            b.iter_batched(
                || f.client(),
                |mut client| {
                    for v in &f.votes {
                        client.process_vote(v.clone());
                    }
                    client
                },
                BatchSize::SmallInput,
            )
        });
        let client = f.replayed();
        g.bench_function(BenchmarkId::new("read", n), |b| b.iter(|| client.read()));
        let view = client.read();
        g.bench_function(BenchmarkId::new("validate_view", n), |b| {
            b.iter(|| assert!(valid_view(&f.committee, &p, &view)))
        });
    }
    g.finish();
}

criterion_group!(benches, sign_verify, client);
criterion_main!(benches);
