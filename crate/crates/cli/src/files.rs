use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use pod_core::accountability;
use pod_core::bidset::BidsetConfig;
use pod_core::serialize::{Document, PodFile};
use pod_core::validator::check;
use pod_core::Round;

use crate::auction::verdict_text;
use crate::{CliError, EXIT_OK, EXIT_VIOLATION};

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub transcript: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IdentifySequencerArgs {
    #[arg(long)]
    pub evidence: PathBuf,
    /// Overrides the auction start recorded in the file.
    #[arg(long)]
    pub t0: Option<Round>,
    /// Overrides the delay bound Δ recorded in the file.
    #[arg(long)]
    pub delta: Option<Round>,
}

pub fn load(path: &Path) -> Result<PodFile, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    PodFile::decode(&bytes).map_err(|e| CliError::Input {
        path: path.to_owned(),
        message: e.to_string(),
    })
}

fn wrong_kind(path: &Path, want: &str) -> CliError {
    CliError::Input {
        path: path.to_owned(),
        message: format!("expected a {want} file"),
    }
}

/// Prints `VALID` or the reason code on stderr.
pub fn verify(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<u8, CliError> {
    let file = load(&a.input)?;
    let Document::View(view) = file.document else {
        return Err(wrong_kind(&a.input, "view"));
    };
    let committee = Arc::new(file.context.committee);
    match check(&committee, &file.context.profile, &view.data, &view.certs) {
        Ok(()) => {
            let _ = writeln!(out, "VALID");
            Ok(EXIT_OK)
        }
        Err(reason) => {
            let _ = writeln!(err, "INVALID {}", reason.code());
            Ok(EXIT_VIOLATION)
        }
    }
}

/// Prints one culpable replica id per line.
pub fn identify(a: &IdentifyArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let file = load(&a.transcript)?;
    let Document::Transcript(t) = file.document else {
        return Err(wrong_kind(&a.transcript, "transcript"));
    };
    for r in accountability::identify(&file.context.committee, &t.votes) {
        let _ = writeln!(out, "{}", r.0);
    }
    Ok(EXIT_OK)
}

pub fn identify_sequencer(a: &IdentifySequencerArgs, out: &mut dyn Write) -> Result<u8, CliError> {
    let file = load(&a.evidence)?;
    let Document::SequencerEvidence { config, evidence } = file.document else {
        return Err(wrong_kind(&a.evidence, "sequencer evidence"));
    };
    let config = BidsetConfig::new(
        a.t0.unwrap_or(config.t0),
        a.delta.unwrap_or(config.delta),
        config.ssid,
        config.sequencer_pk,
    )
    .map_err(CliError::config)?;
    let v = accountability::identify_sequencer(&file.context.committee, &file.context.profile, &config, &evidence);
    let _ = writeln!(out, "{}", verdict_text(&v));
    Ok(EXIT_OK)
}
