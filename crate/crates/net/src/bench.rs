//! Write-to-confirmation latency over loopback sockets.

use std::fmt;
use std::io;
use std::net::{Ipv4Addr, SocketAddr};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use pod_core::{Committee, FaultProfile, ProfileError, Replica, ReplicaId, Scheme, SessionId, Tx};
use serde::Serialize;
use tokio::time::Instant;

use crate::client::{NetClient, NetClientConfig};
use crate::clock::{Clock, MillisClock};
use crate::server::{serve_replica, ReplicaHandle, ServerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchProfile {
    /// `β = 0`, `γ = ⌊(n−1)/3⌋`.
    Omission,
    /// `β = ⌊(n−1)/5⌋`, `γ = 0`.
    Byzantine,
}

impl BenchProfile {
    pub fn profile(self, n: usize) -> Result<FaultProfile, ProfileError> {
        let f = n.saturating_sub(1);
        match self {
            BenchProfile::Omission => FaultProfile::check(n, 0, f / 3),
            BenchProfile::Byzantine => FaultProfile::check(n, f / 5, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BenchProfile::Omission => "omission",
            BenchProfile::Byzantine => "byzantine",
        }
    }
}

impl fmt::Display for BenchProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "omission" => Ok(BenchProfile::Omission),
            "byzantine" => Ok(BenchProfile::Byzantine),
            other => Err(format!("unknown profile {other:?} (expected omission or byzantine)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LatencyOptions {
    pub txs: usize,
    /// Per-transaction wait before the sample counts as failed.
    pub timeout: Duration,
    pub heartbeat: Duration,
    /// Emulated one-way delay of the fastest link, applied by both ends.
    pub link_delay: Duration,
    /// Link delays are spread evenly over `[link_delay, link_delay + delay_spread]`
    /// across replicas, like a committee spread over several regions.
    pub delay_spread: Duration,
    /// Replica `i` listens on `base_port + i`; ephemeral ports otherwise.
    pub base_port: Option<u16>,
    pub scheme: Scheme,
    /// Leave the `β + γ` highest-numbered replicas down.
    pub faulty_down: bool,
    pub seed: u64,
}

impl Default for LatencyOptions {
    fn default() -> Self {
        LatencyOptions {
            txs: 100,
            timeout: Duration::from_secs(5),
            heartbeat: Duration::from_millis(50),
            link_delay: Duration::ZERO,
            delay_spread: Duration::ZERO,
            base_port: None,
            scheme: Scheme::Ed25519,
            faulty_down: false,
            seed: 0,
        }
    }
}

impl LatencyOptions {
    /// One-way delay of the link to each of `n` replicas.
    pub fn link_delays(&self, n: usize) -> Vec<Duration> {
        (0..n)
            .map(|i| self.link_delay + self.delay_spread.mul_f64((i as f64 + 0.5) / n as f64))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencySummary {
    pub ok: usize,
    pub failed: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub ci95_lo_ms: f64,
    pub ci95_hi_ms: f64,
}

#[derive(Debug, Clone)]
pub struct LatencyRun {
    pub n: usize,
    pub profile: BenchProfile,
    pub fault: FaultProfile,
    /// `None` marks a transaction that timed out.
    pub samples: Vec<Option<Duration>>,
    pub summary: LatencySummary,
}

/// Mean, nearest-rank percentiles and a normal-approximation 95% interval
/// over the successful samples.
pub fn summarize(samples: &[Option<Duration>]) -> LatencySummary {
    let mut ms: Vec<f64> = samples.iter().flatten().map(|d| d.as_secs_f64() * 1e3).collect();
    ms.sort_by(f64::total_cmp);
    let k = ms.len();
    let failed = samples.len() - k;
    if k == 0 {
        return LatencySummary {
            ok: 0,
            failed,
            mean_ms: f64::NAN,
            p50_ms: f64::NAN,
            p95_ms: f64::NAN,
            ci95_lo_ms: f64::NAN,
            ci95_hi_ms: f64::NAN,
        };
    }
    let mean = ms.iter().sum::<f64>() / k as f64;
    let var = if k > 1 {
        ms.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64
    } else {
        0.0
    };
    let half = 1.96 * (var / k as f64).sqrt();
    let rank = |p: f64| ms[((p * k as f64).ceil() as usize).clamp(1, k) - 1];
    LatencySummary {
        ok: k,
        failed,
        mean_ms: mean,
        p50_ms: rank(0.50),
        p95_ms: rank(0.95),
        ci95_lo_ms: mean - half,
        ci95_hi_ms: mean + half,
    }
}

/// A loopback committee with one connected client.
pub struct Cluster {
    pub committee: Arc<Committee>,
    pub fault: FaultProfile,
    pub replicas: Vec<Option<ReplicaHandle>>,
    pub addrs: Vec<SocketAddr>,
    pub link_delays: Vec<Duration>,
}

impl Cluster {
    pub async fn start(n: usize, profile: BenchProfile, opts: &LatencyOptions) -> io::Result<Cluster> {
        let fault = profile
            .profile(n)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
        let sid = SessionId::new(b"pod-bench").expect("non-empty");
        let (committee, sks) = Committee::deterministic(sid.clone(), opts.scheme, n, opts.seed);
        let clock: Arc<dyn Clock> = Arc::new(MillisClock::new());
        let down = if opts.faulty_down {
            fault.beta() + fault.gamma()
        } else {
            0
        };
        let link_delays = opts.link_delays(n);
        let mut replicas = Vec::with_capacity(n);
        let mut addrs = Vec::with_capacity(n);
        for (i, sk) in sks.into_iter().enumerate() {
            let port = opts.base_port.map_or(0, |b| b.wrapping_add(i as u16));
            let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
            if i >= n - down {
                // Reserve an address nobody listens on.
                let l = std::net::TcpListener::bind(addr)?;
                addrs.push(l.local_addr()?);
                replicas.push(None);
                continue;
            }
            let replica = Replica::new(ReplicaId(i as u32), sid.clone(), sk);
            let config = ServerConfig {
                heartbeat: Some(opts.heartbeat),
                link_delay: link_delays[i],
                ..ServerConfig::default()
            };
            let h = serve_replica(addr, replica, sid.clone(), clock.clone(), config).await?;
            addrs.push(h.addr());
            replicas.push(Some(h));
        }
        Ok(Cluster {
            committee: Arc::new(committee),
            fault,
            replicas,
            addrs,
            link_delays,
        })
    }

    /// Connects a client; its links get the cluster's delays unless set.
    pub async fn client(&self, mut config: NetClientConfig) -> io::Result<NetClient> {
        if config.link_delays.is_empty() {
            config.link_delays = self.link_delays.clone();
        }
        NetClient::connect(&self.addrs, self.committee.clone(), self.fault, config).await
    }
}

/// Writes `opts.txs` transactions one after another and times each until the
/// client sees it confirmed.
pub async fn measure_latency(n: usize, profile: BenchProfile, opts: &LatencyOptions) -> io::Result<LatencyRun> {
    let cluster = Cluster::start(n, profile, opts).await?;
    let client = cluster
        .client(NetClientConfig {
            reconnect: false,
            ..NetClientConfig::default()
        })
        .await?;
    // Start measuring once the client has heard a heartbeat from a quorum.
    let _ = client.wait_for(opts.timeout, |c| (c.r_perf() > 0).then_some(())).await;
    let mut samples = Vec::with_capacity(opts.txs);
    for i in 0..opts.txs {
        let tx = Tx::new(format!("bench-{n}-{i}"));
        let start = Instant::now();
        client.write(&tx);
        samples.push(client.wait_confirmed(&tx, opts.timeout).await.map(|t| t - start));
    }
    let summary = summarize(&samples);
    Ok(LatencyRun {
        n,
        profile,
        fault: cluster.fault,
        samples,
        summary,
    })
}
