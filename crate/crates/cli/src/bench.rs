use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, ValueEnum};
use pod_core::Scheme;
use pod_net::bench::{measure_latency, BenchProfile, LatencyOptions, LatencyRun};
use serde::{Deserialize, Serialize};

use crate::report::{PropertyLine, RunReport};
use crate::{log_dir, CliError};

/// Bumped whenever a column is added, removed or reinterpreted.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Largest allowed spread of mean latency across committee sizes, relative to the smallest mean.
pub const FLATNESS_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileChoice {
    Omission,
    Byzantine,
    Both,
}

impl ProfileChoice {
    fn profiles(self) -> Vec<BenchProfile> {
        match self {
            ProfileChoice::Omission => vec![BenchProfile::Omission],
            ProfileChoice::Byzantine => vec![BenchProfile::Byzantine],
            ProfileChoice::Both => vec![BenchProfile::Omission, BenchProfile::Byzantine],
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Committee sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [15, 50, 100])]
    pub n: Vec<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub profile: ProfileChoice,
    /// Transactions written per run.
    #[arg(long, default_value_t = 200)]
    pub txs: usize,
    /// First port; each run takes `n` consecutive ports after the previous run's.
    #[arg(long)]
    pub listen_base_port: Option<u16>,
    /// Emulated one-way link delay added by every sender.
    #[arg(long, default_value_t = 0)]
    pub link_delay_ms: u64,
    /// Spread link delays over `[link, link + spread]` across replicas.
    #[arg(long, default_value_t = 0)]
    pub delay_spread_ms: u64,
    #[arg(long, default_value_t = 50)]
    pub heartbeat_ms: u64,
    #[arg(long, default_value_t = 5000)]
    pub timeout_ms: u64,
    /// CSV output path. Defaults to `bench.csv` under the log directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub schema_version: u32,
    pub n: usize,
    pub profile: String,
    pub beta: usize,
    pub gamma: usize,
    pub alpha: usize,
    pub txs: usize,
    pub ok: usize,
    pub failed: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub ci95_lo_ms: f64,
    pub ci95_hi_ms: f64,
    pub link_delay_ms: u64,
    pub delay_spread_ms: u64,
}

fn ms3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

impl BenchRow {
    pub fn from_run(run: &LatencyRun, link_delay_ms: u64, delay_spread_ms: u64) -> Self {
        let s = &run.summary;
        BenchRow {
            schema_version: CSV_SCHEMA_VERSION,
            n: run.n,
            profile: run.profile.name().to_owned(),
            beta: run.fault.beta(),
            gamma: run.fault.gamma(),
            alpha: run.fault.alpha(),
            txs: run.samples.len(),
            ok: s.ok,
            failed: s.failed,
            mean_ms: ms3(s.mean_ms),
            p50_ms: ms3(s.p50_ms),
            p95_ms: ms3(s.p95_ms),
            ci95_lo_ms: ms3(s.ci95_lo_ms),
            ci95_hi_ms: ms3(s.ci95_hi_ms),
            link_delay_ms,
            delay_spread_ms,
        }
    }
}

pub fn write_csv(rows: &[BenchRow], w: impl Write) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv(r: impl std::io::Read) -> csv::Result<Vec<BenchRow>> {
    csv::Reader::from_reader(r).deserialize().collect()
}

/// `(max − min) / min` of mean latency over the rows of one profile.
pub fn spread(rows: &[BenchRow], profile: &str) -> Option<f64> {
    let means: Vec<f64> = rows
        .iter()
        .filter(|r| r.profile == profile)
        .map(|r| r.mean_ms)
        .collect();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (means.len() >= 2 && lo > 0.0).then(|| (hi - lo) / lo)
}

/// Shape checks over a finished set of rows.
pub fn shape_checks(rows: &[BenchRow]) -> Vec<PropertyLine> {
    let mut out = vec![PropertyLine::flag(
        "all_confirmed",
        rows.iter().all(|r| r.failed == 0),
        0,
        rows.iter()
            .find(|r| r.failed > 0)
            .map(|r| format!("n={} {}: {} timed out", r.n, r.profile, r.failed)),
    )];
    for profile in ["omission", "byzantine"] {
        if let Some(s) = spread(rows, profile) {
            out.push(PropertyLine::flag(
                &format!("flat_in_n_{profile}"),
                s < FLATNESS_TOLERANCE,
                0,
                Some(format!("mean latency spread {:.1}%", s * 100.0)),
            ));
        }
    }
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    for n in ns {
        let mean = |p: &str| rows.iter().find(|r| r.n == n && r.profile == p).map(|r| r.mean_ms);
        if let (Some(o), Some(b)) = (mean("omission"), mean("byzantine")) {
            out.push(PropertyLine::flag(
                &format!("omission_not_slower_n{n}"),
                o <= b,
                0,
                Some(format!("omission {o:.3} ms > byzantine {b:.3} ms")),
            ));
        }
    }
    out
}

pub fn measure(a: &BenchArgs) -> Result<Vec<BenchRow>, CliError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Config(format!("runtime: {e}")))?;
    let mut rows = Vec::new();
    let mut next_port = a.listen_base_port;
    for &n in &a.n {
        for profile in a.profile.profiles() {
            profile.profile(n).map_err(CliError::config)?;
            let opts = LatencyOptions {
                txs: a.txs,
                timeout: Duration::from_millis(a.timeout_ms),
                heartbeat: Duration::from_millis(a.heartbeat_ms.max(1)),
                link_delay: Duration::from_millis(a.link_delay_ms),
                delay_spread: Duration::from_millis(a.delay_spread_ms),
                base_port: next_port,
                scheme: Scheme::Ed25519,
                faulty_down: false,
                seed: n as u64,
            };
            next_port = next_port.and_then(|p| p.checked_add(n as u16));
            let run = rt
                .block_on(measure_latency(n, profile, &opts))
                .map_err(|e| CliError::Config(format!("startup failed for n={n}: {e}")))?;
            rows.push(BenchRow::from_run(&run, a.link_delay_ms, a.delay_spread_ms));
        }
    }
    Ok(rows)
}

pub fn run(a: &BenchArgs) -> Result<RunReport, CliError> {
    if a.n.is_empty() || a.txs == 0 {
        return Err(CliError::Config(
            "need at least one committee size and one transaction".into(),
        ));
    }
    let rows = measure(a)?;
    let mut report = RunReport::new(
        "bench",
        serde_json::json!({
            "n": a.n,
            "profile": a.profile,
            "txs": a.txs,
            "listen_base_port": a.listen_base_port,
            "link_delay_ms": a.link_delay_ms,
            "delay_spread_ms": a.delay_spread_ms,
            "heartbeat_ms": a.heartbeat_ms,
            "timeout_ms": a.timeout_ms,
        }),
    );
    report.properties = shape_checks(&rows);
    let path = match &a.out {
        Some(p) => Some(p.clone()),
        None => log_dir()?.map(|d| d.join("bench.csv")),
    };
    if let Some(path) = path {
        let f = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_csv(&rows, f).map_err(|e| CliError::Input {
            path: path.clone(),
            message: e.to_string(),
        })?;
        report.outputs.push(path);
    }
    report.latency = rows;
    Ok(report)
}
