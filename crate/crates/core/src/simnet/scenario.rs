//! Timed scripts of client actions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::replica::ClientId;
use crate::types::Round;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequencerBehavior {
    Honest,
    /// Leaves the given bid out of `B`.
    Censor {
        bid: String,
    },
    /// Never publishes.
    Silent,
    /// Publishes two different signed bid sets.
    Equivocate,
}

impl fmt::Display for SequencerBehavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SequencerBehavior::Honest => f.write_str("honest"),
            SequencerBehavior::Censor { bid } => write!(f, "censor:{bid}"),
            SequencerBehavior::Silent => f.write_str("silent"),
            SequencerBehavior::Equivocate => f.write_str("equivocate"),
        }
    }
}

impl FromStr for SequencerBehavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "honest" => Ok(SequencerBehavior::Honest),
            "silent" => Ok(SequencerBehavior::Silent),
            "equivocate" => Ok(SequencerBehavior::Equivocate),
            _ => match s.strip_prefix("censor:") {
                Some(bid) if !bid.is_empty() => Ok(SequencerBehavior::Censor { bid: bid.to_owned() }),
                _ => Err(format!("unknown sequencer behaviour {s:?}")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// Sends `tx` (UTF-8) to every replica.
    Write {
        tx: String,
    },
    /// Records a snapshot of the actor's view in the outcome.
    Read,
    /// Connects a client listed in `late_clients`.
    Connect,
    SubmitBid {
        bid: String,
    },
    /// The actor becomes the auction's sequencer from this round on.
    RunAuction {
        #[serde(default = "honest")]
        sequencer: SequencerBehavior,
    },
    /// The actor starts waiting for the auction result.
    ReadResult,
    AssertConfirmed {
        tx: String,
    },
    AssertPastPerfect {
        round: Round,
    },
}

fn honest() -> SequencerBehavior {
    SequencerBehavior::Honest
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledAction {
    pub round: Round,
    pub actor: ClientId,
    #[serde(flatten)]
    pub action: Action,
}

/// Parameters of the single auction a scenario may run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuctionSpec {
    pub t0: Round,
    /// The bound Δ the auction parties assume.
    pub big_delta: Round,
    #[serde(default = "default_ssid")]
    pub ssid: String,
}

fn default_ssid() -> String {
    "auction".to_owned()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scenario {
    /// Clients `0..clients` exist; all but `late_clients` connect at round 0.
    pub clients: u64,
    #[serde(default)]
    pub late_clients: Vec<ClientId>,
    #[serde(default)]
    pub auction: Option<AuctionSpec>,
    #[serde(default)]
    pub actions: Vec<ScheduledAction>,
}

impl Scenario {
    pub fn new(clients: u64) -> Self {
        Scenario {
            clients,
            ..Scenario::default()
        }
    }

    pub fn at(mut self, round: Round, actor: ClientId, action: Action) -> Self {
        self.actions.push(ScheduledAction { round, actor, action });
        self
    }

    pub fn write(self, round: Round, actor: ClientId, tx: impl Into<String>) -> Self {
        self.at(round, actor, Action::Write { tx: tx.into() })
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// One standard auction: every bidder bids at `t0`, client 0 sequences,
    /// every client consumes.
    pub fn auction(
        clients: u64,
        t0: Round,
        big_delta: Round,
        bids: &[(ClientId, &str)],
        sequencer: SequencerBehavior,
    ) -> Self {
        let mut s = Scenario::new(clients);
        s.auction = Some(AuctionSpec {
            t0,
            big_delta,
            ssid: default_ssid(),
        });
        s = s.at(t0, 0, Action::RunAuction { sequencer });
        for c in 0..clients {
            s = s.at(t0, c, Action::ReadResult);
        }
        for (c, bid) in bids {
            s = s.at(t0, *c, Action::SubmitBid { bid: (*bid).to_owned() });
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let s = Scenario::new(2)
            .write(3, 0, "x")
            .at(4, 1, Action::AssertConfirmed { tx: "x".into() })
            .at(
                5,
                0,
                Action::RunAuction {
                    sequencer: SequencerBehavior::Censor { bid: "7".into() },
                },
            );
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn parses_flat_action_records() {
        let s = Scenario::from_json(
            r#"{"clients":1,"actions":[{"round":2,"actor":0,"action":"write","tx":"a"},
                {"round":9,"actor":0,"action":"run_auction"}]}"#,
        )
        .unwrap();
        assert_eq!(s.actions[0].action, Action::Write { tx: "a".into() });
        assert_eq!(
            s.actions[1].action,
            Action::RunAuction {
                sequencer: SequencerBehavior::Honest
            }
        );
    }

    #[test]
    fn sequencer_behaviour_strings() {
        for s in ["honest", "silent", "equivocate", "censor:12"] {
            assert_eq!(s.parse::<SequencerBehavior>().unwrap().to_string(), s);
        }
        assert!("censor:".parse::<SequencerBehavior>().is_err());
        assert!("lazy".parse::<SequencerBehavior>().is_err());
    }
}
