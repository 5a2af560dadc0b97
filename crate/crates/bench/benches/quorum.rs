use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pod_core::quorum::{max_possible_ts, min_possible_ts, past_perfect_round};
use pod_core::{FaultProfile, Round};

fn quorum(c: &mut Criterion) {
    let mut g = c.benchmark_group("quorum");
    for n in [16, 100, 1000] {
        let p = FaultProfile::check(n, (n - 1) / 5, 0).unwrap();
        let mrt: Vec<Round> = (0..n as u64).map(|i| 100 + (i * 37) % 50).collect();
        let ts: Vec<Option<Round>> = mrt.iter().map(|m| (m % 7 != 0).then_some(m - 10)).collect();
        g.bench_function(BenchmarkId::new("min_possible_ts", n), |b| {
            b.iter(|| min_possible_ts(&p, &ts, &mrt))
        });
        g.bench_function(BenchmarkId::new("max_possible_ts", n), |b| {
            b.iter(|| max_possible_ts(&p, &ts))
        });
        g.bench_function(BenchmarkId::new("past_perfect_round", n), |b| {
            b.iter(|| past_perfect_round(&p, &mrt))
        });
    }
    g.finish();
}

criterion_group!(benches, quorum);
criterion_main!(benches);
