use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use pod_core::accountability::{identify_sequencer, identify_sequencer_equivocation, SequencerVerdict};
use pod_core::serialize::{Context, Document, PodFile};
use pod_core::simnet::{self, Scenario, SequencerBehavior, SimConfig};
use pod_core::{Round, Tx};
use serde::Serialize;

use crate::report::{PropertyLine, RunReport};
use crate::{log_dir, write_file, CliError, ProfileArgs};

#[derive(Debug, Clone, Args)]
pub struct AuctionArgs {
    #[command(flatten)]
    pub profile: ProfileArgs,
    /// Actual maximum message delay δ.
    #[arg(long, default_value_t = 1)]
    pub delta: Round,
    /// Honest delays fall in [δ − jitter, δ]. Defaults to δ − 1.
    #[arg(long)]
    pub jitter: Option<Round>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Round at which bids are submitted.
    #[arg(long, default_value_t = 10)]
    pub t0: Round,
    /// Known delay bound Δ used by the auction.
    #[arg(long = "Delta", default_value_t = 3)]
    pub big_delta: Round,
    /// Bids, one bidder each, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = ["5".to_owned(), "9".to_owned(), "7".to_owned()])]
    pub bids: Vec<String>,
    /// honest, silent, equivocate or censor:<bid>.
    #[arg(long, default_value = "honest")]
    pub sequencer: SequencerBehavior,
    /// Where to write the evidence against a censoring sequencer.
    #[arg(long)]
    pub evidence_out: Option<PathBuf>,
}

#[derive(Serialize)]
struct ConsumerLine {
    client: u64,
    round: Round,
    bids: Vec<String>,
    empty_by_timeout: bool,
    other_bid_sets: usize,
}

fn text(tx: &Tx) -> String {
    String::from_utf8_lossy(tx.as_bytes()).into_owned()
}

pub fn run(a: &AuctionArgs) -> Result<RunReport, CliError> {
    let profile = a.profile.profile()?;
    if a.bids.is_empty() {
        return Err(CliError::Config("at least one bid is required".into()));
    }
    if let SequencerBehavior::Censor { bid } = &a.sequencer {
        if !a.bids.contains(bid) {
            return Err(CliError::Config(format!("censored bid {bid:?} is not among the bids")));
        }
    }
    let mut cfg = SimConfig::new(profile, a.delta, a.seed);
    cfg.big_delta = a.big_delta;
    cfg.jitter = a.jitter.unwrap_or(a.delta.saturating_sub(1));
    cfg.max_rounds = a.t0 + 3 * a.big_delta + 4 * a.delta + 5;
    cfg.validate().map_err(CliError::config)?;
    let bidders: Vec<(u64, &str)> = a
        .bids
        .iter()
        .enumerate()
        .map(|(i, b)| (i as u64 + 1, b.as_str()))
        .collect();
    let clients = bidders.len() as u64 + 1;
    let scenario = Scenario::auction(clients, a.t0, a.big_delta, &bidders, a.sequencer.clone());
    let outcome = simnet::run(cfg, &scenario).map_err(CliError::config)?;
    let auction = outcome.auction.clone().expect("auction scenario");

    let honest_bound = a.t0 + a.big_delta + 3 * a.delta;
    let silent_bound = a.t0 + 3 * a.big_delta + a.delta;
    let mut report = RunReport::new(
        "auction",
        serde_json::json!({
            "n": profile.n(), "beta": profile.beta(), "gamma": profile.gamma(),
            "delta": a.delta, "jitter": a.jitter.unwrap_or(a.delta.saturating_sub(1)),
            "seed": a.seed, "t0": a.t0, "Delta": a.big_delta,
            "bids": a.bids, "sequencer": a.sequencer.to_string(),
        }),
    );
    let seed = a.seed;
    let results = &auction.results;
    let last = results.values().map(|r| r.round).max();
    let first = results.values().next();
    report.properties.push(PropertyLine::flag(
        "all_consumers_terminated",
        results.len() as u64 == clients,
        seed,
        Some(format!("{} of {clients} consumers produced a result", results.len())),
    ));
    report.properties.push(PropertyLine::flag(
        "consumers_agree",
        results.values().all(|r| Some(&r.bids) == first.map(|f| &f.bids)),
        seed,
        None,
    ));
    let all_bids: BTreeSet<Tx> = a.bids.iter().map(Tx::new).collect();
    let mut verdicts = Vec::new();
    match &a.sequencer {
        SequencerBehavior::Honest => {
            report.properties.push(PropertyLine::flag(
                "contains_all_bids",
                results.values().all(|r| r.bids == all_bids),
                seed,
                first.map(|f| format!("result holds {} of {} bids", f.bids.len(), all_bids.len())),
            ));
            report.properties.push(PropertyLine::flag(
                "terminated_by_t0+Delta+3delta",
                last.is_some_and(|r| r <= honest_bound),
                seed,
                last.map(|r| format!("last result at round {r}, bound {honest_bound}")),
            ));
            let client = &outcome.clients[&1];
            let clean = a.bids.iter().all(|b| {
                auction.censorship_evidence(client, b.as_bytes()).is_some_and(|ev| {
                    let v = identify_sequencer(&outcome.committee, &profile, &auction.config, &ev);
                    verdicts.push((b.clone(), v));
                    !v.is_culpable()
                })
            });
            report
                .properties
                .push(PropertyLine::flag("honest_sequencer_not_culpable", clean, seed, None));
        }
        SequencerBehavior::Silent => {
            report.properties.push(PropertyLine::flag(
                "empty_result",
                results.values().all(|r| r.bids.is_empty()),
                seed,
                None,
            ));
            report.properties.push(PropertyLine::flag(
                "terminated_by_t0+3Delta+delta",
                last.is_some_and(|r| r <= silent_bound),
                seed,
                last.map(|r| format!("last result at round {r}, bound {silent_bound}")),
            ));
        }
        SequencerBehavior::Censor { bid } => {
            let mut evidence = None;
            let all = outcome.clients.values().all(|c| {
                auction.censorship_evidence(c, bid.as_bytes()).is_some_and(|ev| {
                    let v = identify_sequencer(&outcome.committee, &profile, &auction.config, &ev);
                    verdicts.push((bid.clone(), v));
                    evidence.get_or_insert(ev);
                    v.is_culpable()
                })
            });
            report
                .properties
                .push(PropertyLine::flag("censorship_identified", all, seed, None));
            let path = match &a.evidence_out {
                Some(p) => Some(p.clone()),
                None => log_dir()?.map(|d| d.join(format!("sequencer-evidence-{seed}.pod"))),
            };
            if let (Some(path), Some(evidence)) = (path, evidence) {
                let file = PodFile {
                    context: Context {
                        committee: (*outcome.committee).clone(),
                        profile,
                    },
                    document: Document::SequencerEvidence {
                        config: auction.config.clone(),
                        evidence,
                    },
                };
                report
                    .outputs
                    .push(write_file(path, &file.encode().map_err(CliError::config)?)?);
            }
        }
        SequencerBehavior::Equivocate => {
            let caught = auction.published.len() >= 2
                && identify_sequencer_equivocation(&auction.config, &auction.published[0].1, &auction.published[1].1);
            report
                .properties
                .push(PropertyLine::flag("equivocation_identified", caught, seed, None));
        }
    }

    let consumers: Vec<ConsumerLine> = results
        .iter()
        .map(|(c, r)| ConsumerLine {
            client: *c,
            round: r.round,
            bids: r.bids.iter().map(text).collect(),
            empty_by_timeout: matches!(r.aux, pod_core::bidset::ResultAux::Empty { .. }),
            other_bid_sets: r.equivocation.len(),
        })
        .collect();
    report.details = serde_json::json!({
        "consumers": consumers,
        "published_rounds": auction.published.iter().map(|(r, _)| *r).collect::<Vec<_>>(),
        "honest_bound": honest_bound,
        "silent_bound": silent_bound,
        "verdicts": verdicts.iter().map(|(b, v)| serde_json::json!({"bid": b, "verdict": verdict_text(v)})).collect::<Vec<_>>(),
    });
    Ok(report)
}

pub fn verdict_text(v: &SequencerVerdict) -> String {
    match v {
        SequencerVerdict::Culpable(r) => format!("CULPABLE {r:?}"),
        SequencerVerdict::NotCulpable => "NOT_CULPABLE".into(),
        SequencerVerdict::InvalidEvidence(d) => format!("INVALID_EVIDENCE {d:?}"),
    }
}
