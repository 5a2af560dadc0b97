use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use pod_core::accountability::Transcript;
use pod_core::serialize::{Context, Document, PodFile};
use pod_core::simnet::properties::{Check, PropertyChecker, PropertyReport};
use pod_core::simnet::sweep::{random_case, run_case, AdversaryPool, SweepParams};
use pod_core::simnet::{run_observed, Behavior, Scenario, TraceLevel};
use pod_core::{ReplicaId, Round};
use rayon::prelude::*;
use serde::Serialize;

use crate::report::{PropertyLine, RunReport};
use crate::{log_dir, write_file, CliError, ProfileArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    Standard,
    Extended,
    None,
}

impl From<Pool> for AdversaryPool {
    fn from(p: Pool) -> Self {
        match p {
            Pool::Standard => AdversaryPool::Standard,
            Pool::Extended => AdversaryPool::Extended,
            Pool::None => AdversaryPool::None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Maximum message delay in rounds.
    #[arg(long, default_value_t = 3)]
    pub delta: Round,
    /// Honest delays fall in [δ − jitter, δ]. Defaults to δ − 1.
    #[arg(long, conflicts_with = "sweep_seeds")]
    pub jitter: Option<Round>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Last round to run. Defaults to 8δ + 10.
    #[arg(long, conflicts_with = "sweep_seeds")]
    pub rounds: Option<Round>,
    /// JSON scenario replacing the randomly drawn writes.
    #[arg(long, conflicts_with = "sweep_seeds")]
    pub scenario: Option<PathBuf>,
    /// Fixed adversaries, e.g. `4=EQUIVOCATE_SN(3),7=OMIT_ALL`, or `none`.
    #[arg(long, conflicts_with = "sweep_seeds")]
    pub adversaries: Option<String>,
    /// Run this many consecutive seeds starting at `--seed`.
    #[arg(long)]
    pub sweep_seeds: Option<u64>,
    /// Behaviours drawn for random adversaries.
    #[arg(long, value_enum, default_value = "standard")]
    pub pool: Pool,
    #[arg(long, default_value_t = 3)]
    pub clients: u64,
    #[arg(long, default_value_t = 6)]
    pub max_writes: usize,
    /// Check validity of every honest read every this many rounds.
    #[arg(long, default_value_t = 10)]
    pub validity_every: Round,
}

pub fn parse_adversaries(s: &str) -> Result<BTreeMap<ReplicaId, Behavior>, CliError> {
    let mut out = BTreeMap::new();
    if s.trim().eq_ignore_ascii_case("none") {
        return Ok(out);
    }
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        let (id, b) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("adversary {item:?} is not of the form ID=BEHAVIOR")))?;
        let id: u32 = id
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad replica id in {item:?}")))?;
        let b: Behavior = b.parse().map_err(CliError::config)?;
        if out.insert(ReplicaId(id), b).is_some() {
            return Err(CliError::Config(format!("replica {id} listed twice")));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct RunEcho {
    n: usize,
    beta: usize,
    gamma: usize,
    delta: Round,
    jitter: Round,
    big_delta: Round,
    seed: u64,
    rounds: Round,
    heartbeat_skip: bool,
    clients: u64,
    adversaries: BTreeMap<u32, String>,
    scenario: Option<PathBuf>,
}

#[derive(Serialize)]
struct SweepEcho {
    n: usize,
    beta: usize,
    gamma: usize,
    delta: Round,
    first_seed: u64,
    seeds: u64,
    pool: Pool,
    clients: u64,
    max_writes: usize,
}

fn params(a: &SimulateArgs) -> SweepParams {
    SweepParams {
        delta: a.delta,
        clients: a.clients,
        max_writes: a.max_writes,
        pool: a.pool.into(),
        validity_every: a.validity_every.max(1),
    }
}

pub fn run(a: &SimulateArgs) -> Result<RunReport, CliError> {
    if a.delta == 0 {
        return Err(CliError::Config("delta must be at least 1".into()));
    }
    match a.sweep_seeds {
        Some(k) => sweep(a, k),
        None => single(a),
    }
}

fn single(a: &SimulateArgs) -> Result<RunReport, CliError> {
    let profile = a.profile.profile()?;
    let (mut config, mut scenario) = random_case(profile, &params(a), a.seed);
    if let Some(path) = &a.scenario {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        scenario = Scenario::from_json(&text).map_err(|e| CliError::Input {
            path: path.clone(),
            message: e.to_string(),
        })?;
    }
    if let Some(s) = &a.adversaries {
        config.adversaries = parse_adversaries(s)?;
    }
    if let Some(j) = a.jitter {
        config.jitter = j;
    }
    if let Some(r) = a.rounds {
        config.max_rounds = r;
    }
    let dir = log_dir()?;
    if dir.is_some() {
        config.trace = TraceLevel::Full;
    }
    config.validate().map_err(CliError::config)?;

    let mut report = RunReport::new(
        "simulate",
        RunEcho {
            n: profile.n(),
            beta: profile.beta(),
            gamma: profile.gamma(),
            delta: config.delta,
            jitter: config.jitter,
            big_delta: config.big_delta,
            seed: a.seed,
            rounds: config.max_rounds,
            heartbeat_skip: config.heartbeat_skip,
            clients: scenario.clients,
            adversaries: config.adversaries.iter().map(|(r, b)| (r.0, b.to_string())).collect(),
            scenario: a.scenario.clone(),
        },
    );
    let byzantine = config.byzantine();
    let mut checker = PropertyChecker::new(config.delta, config.max_rounds, a.validity_every.max(1));
    let outcome = run_observed(config, &scenario, &mut checker).map_err(CliError::config)?;
    let props = checker.finish(&outcome, &byzantine);
    report.add_properties(&props, a.seed);
    report.properties.push(PropertyLine::flag(
        "scenario_assertions",
        outcome.passed(),
        a.seed,
        outcome
            .failures
            .first()
            .map(|f| format!("round {}: {}", f.round, f.message)),
    ));
    report.details = serde_json::json!({
        "writes": outcome.writes.len(),
        "reads": outcome.reads.len(),
        "messages": outcome.delivery.messages,
        "trace_digest": outcome.trace.digest(),
    });

    if let Some(dir) = dir {
        let seed = a.seed;
        report.outputs.push(write_file(
            dir.join(format!("trace-{seed}.jsonl")),
            outcome.trace.to_jsonl().as_bytes(),
        )?);
        let context = Context {
            committee: (*outcome.committee).clone(),
            profile,
        };
        let transcript = PodFile {
            context: context.clone(),
            document: Document::Transcript(Transcript::new(outcome.observed_votes())),
        };
        report.outputs.push(write_file(
            dir.join(format!("transcript-{seed}.pod")),
            &transcript.encode().map_err(CliError::config)?,
        )?);
        for (id, client) in &outcome.clients {
            let file = PodFile {
                context: context.clone(),
                document: Document::View(client.read()),
            };
            report.outputs.push(write_file(
                dir.join(format!("view-{seed}-client{id}.pod")),
                &file.encode().map_err(CliError::config)?,
            )?);
        }
        report.outputs.push(write_file(
            dir.join(format!("report-{seed}.json")),
            report.to_json().as_bytes(),
        )?);
    }
    Ok(report)
}

/// Sums the checks of every case, keeping the first failing seed per property.
pub fn aggregate(cases: &[(u64, PropertyReport)]) -> Vec<PropertyLine> {
    let Some((_, first)) = cases.first() else {
        return Vec::new();
    };
    first
        .checks()
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let mut total = Check::default();
            let mut line: Option<PropertyLine> = None;
            for (seed, r) in cases {
                let c = r.checks()[i].1;
                total.merge(c);
                if !c.ok() && line.is_none() {
                    line = Some(PropertyLine::from_check(name, c, *seed));
                }
            }
            let mut l = line.unwrap_or_else(|| PropertyLine::from_check(name, &total, 0));
            l.checked = total.checked;
            l.violations = total.violations;
            l
        })
        .collect()
}

fn sweep(a: &SimulateArgs, k: u64) -> Result<RunReport, CliError> {
    let profile = a.profile.profile()?;
    let p = params(a);
    let cases = (a.seed..a.seed.saturating_add(k))
        .into_par_iter()
        .map(|s| run_case(profile, &p, s).map(|c| (s, c.report)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::config)?;
    let mut report = RunReport::new(
        "simulate",
        SweepEcho {
            n: profile.n(),
            beta: profile.beta(),
            gamma: profile.gamma(),
            delta: a.delta,
            first_seed: a.seed,
            seeds: k,
            pool: a.pool,
            clients: a.clients,
            max_writes: a.max_writes,
        },
    );
    report.properties = aggregate(&cases);
    let failing: Vec<u64> = cases
        .iter()
        .filter(|(_, r)| !r.passed())
        .map(|(s, _)| *s)
        .take(20)
        .collect();
    report.details = serde_json::json!({
        "cases": cases.len(),
        "passed_cases": cases.iter().filter(|(_, r)| r.passed()).count(),
        "failing_seeds": failing,
    });
    if let Some(dir) = log_dir()? {
        report.outputs.push(write_file(
            dir.join(format!("sweep-{}-{k}.json", a.seed)),
            report.to_json().as_bytes(),
        )?);
    }
    Ok(report)
}
