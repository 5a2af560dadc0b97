//! Versioned binary files for views, transcripts and sequencer evidence.
//!
//! Layout: `"PODF" ‖ version ‖ kind ‖ context ‖ document`, using the same
//! length-prefixed big-endian fields as the vote encoding. The context carries
//! everything a verifier needs besides the document: the session id, the
//! committee keys and the fault profile.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::accountability::{SequencerEvidence, Transcript};
use crate::bidset::{read_vote, write_vote, BidsMessage, BidsetConfig, BidsetError};
use crate::codec::{CodecError, Decoder, Encoder};
use crate::crypto::{KeyError, PublicKey};
use crate::types::{
    Certificates, Committee, FaultProfile, PodData, ProfileError, ReplicaId, Round, SessionId, TransactionTrace, Tx,
    UpperRound, View, Vote,
};

pub const MAGIC: &[u8; 4] = b"PODF";
pub const FORMAT_VERSION: u8 = 1;

const KIND_VIEW: u8 = 1;
const KIND_TRANSCRIPT: u8 = 2;
const KIND_SEQUENCER_EVIDENCE: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FileError {
    #[error("not a pod file")]
    Magic,
    #[error("unsupported format version {0}")]
    Version(u8),
    #[error("unknown document kind {0}")]
    Kind(u8),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Bidset(#[from] BidsetError),
    #[error("profile has n = {profile} but the committee has {committee} keys")]
    CommitteeSize { profile: usize, committee: usize },
    #[error("vote signed for another session")]
    ForeignVote,
    #[error("{0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    pub committee: Committee,
    pub profile: FaultProfile,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Document {
    View(View),
    Transcript(Transcript),
    SequencerEvidence {
        config: BidsetConfig,
        evidence: SequencerEvidence,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PodFile {
    pub context: Context,
    pub document: Document,
}

fn write_context(enc: &mut Encoder, ctx: &Context) -> Result<(), CodecError> {
    enc.bytes(ctx.committee.sid.as_bytes())?;
    enc.u32(ctx.profile.n() as u32)
        .u32(ctx.profile.beta() as u32)
        .u32(ctx.profile.gamma() as u32);
    enc.count(ctx.committee.keys.len())?;
    for k in &ctx.committee.keys {
        enc.raw(&k.to_tagged_bytes());
    }
    Ok(())
}

fn read_context(dec: &mut Decoder<'_>) -> Result<Context, FileError> {
    let sid = SessionId::new(dec.bytes()?).map_err(|_| FileError::Malformed("empty session id"))?;
    let (n, beta, gamma) = (dec.u32()? as usize, dec.u32()? as usize, dec.u32()? as usize);
    let profile = FaultProfile::check(n, beta, gamma)?;
    let count = dec.count()?;
    let mut keys = Vec::with_capacity(count);
    for _ in 0..count {
        keys.push(read_key(dec)?);
    }
    if keys.len() != n {
        return Err(FileError::CommitteeSize {
            profile: n,
            committee: keys.len(),
        });
    }
    Ok(Context {
        committee: Committee::new(sid, keys),
        profile,
    })
}

fn read_key(dec: &mut Decoder<'_>) -> Result<PublicKey, FileError> {
    let mut tagged = [0u8; 33];
    for b in tagged.iter_mut() {
        *b = dec.u8()?;
    }
    Ok(PublicKey::from_tagged_bytes(&tagged)?)
}

fn write_votes<'a>(
    enc: &mut Encoder,
    votes: impl ExactSizeIterator<Item = &'a Vote>,
    sid: &SessionId,
) -> Result<(), CodecError> {
    enc.count(votes.len())?;
    for v in votes {
        write_vote(enc, v, sid.as_bytes())?;
    }
    Ok(())
}

fn read_votes(dec: &mut Decoder<'_>, sid: &SessionId) -> Result<Vec<Vote>, FileError> {
    let count = dec.count()?;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let (v, vsid) = read_vote(dec)?;
        if vsid != sid.as_bytes() {
            return Err(FileError::ForeignVote);
        }
        out.push(v);
    }
    Ok(out)
}

fn by_replica(votes: Vec<Vote>) -> Result<BTreeMap<ReplicaId, Vote>, FileError> {
    let mut m = BTreeMap::new();
    for v in votes {
        if m.insert(v.replica, v).is_some() {
            return Err(FileError::Malformed("two votes from one replica in a certificate"));
        }
    }
    Ok(m)
}

fn write_opt(enc: &mut Encoder, v: Option<Round>) {
    match v {
        Some(r) => enc.u8(1).u64(r),
        None => enc.u8(0),
    };
}

fn read_opt(dec: &mut Decoder<'_>) -> Result<Option<Round>, FileError> {
    match dec.u8()? {
        0 => Ok(None),
        1 => Ok(Some(dec.u64()?)),
        _ => Err(FileError::Malformed("bad option flag")),
    }
}

fn write_view(enc: &mut Encoder, view: &View, sid: &SessionId) -> Result<(), CodecError> {
    let d = &view.data;
    enc.u8(d.include_heartbeats as u8).u64(d.r_perf);
    enc.count(d.traces.len())?;
    for t in d.traces.values() {
        enc.bytes(t.tx.as_bytes())?.u64(t.r_min);
        write_opt(enc, t.r_max.finite());
        write_opt(enc, t.r_conf);
    }
    write_votes(enc, view.certs.c_pp.values(), sid)?;
    enc.count(view.certs.c_tx.len())?;
    for (tx, votes) in &view.certs.c_tx {
        enc.bytes(tx.as_bytes())?;
        write_votes(enc, votes.values(), sid)?;
    }
    Ok(())
}

fn read_view(dec: &mut Decoder<'_>, sid: &SessionId) -> Result<View, FileError> {
    let include_heartbeats = match dec.u8()? {
        0 => false,
        1 => true,
        _ => return Err(FileError::Malformed("bad heartbeat flag")),
    };
    let r_perf = dec.u64()?;
    let mut traces = BTreeMap::new();
    for _ in 0..dec.count()? {
        let tx = Tx::new(dec.bytes()?);
        let r_min = dec.u64()?;
        let r_max = read_opt(dec)?.map_or(UpperRound::Infinite, UpperRound::Finite);
        let r_conf = read_opt(dec)?;
        let t = TransactionTrace {
            tx: tx.clone(),
            r_min,
            r_max,
            r_conf,
        };
        if traces.insert(tx, t).is_some() {
            return Err(FileError::Malformed("duplicate trace"));
        }
    }
    let c_pp = by_replica(read_votes(dec, sid)?)?;
    let mut c_tx = BTreeMap::new();
    for _ in 0..dec.count()? {
        let tx = Tx::new(dec.bytes()?);
        let votes = by_replica(read_votes(dec, sid)?)?;
        if c_tx.insert(tx, votes).is_some() {
            return Err(FileError::Malformed("duplicate certificate"));
        }
    }
    Ok(View {
        data: PodData {
            traces,
            r_perf,
            include_heartbeats,
        },
        certs: Certificates { c_pp, c_tx },
    })
}

impl PodFile {
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        let sid = &self.context.committee.sid;
        let mut enc = Encoder::new();
        enc.raw(MAGIC).u8(FORMAT_VERSION);
        match &self.document {
            Document::View(_) => enc.u8(KIND_VIEW),
            Document::Transcript(_) => enc.u8(KIND_TRANSCRIPT),
            Document::SequencerEvidence { .. } => enc.u8(KIND_SEQUENCER_EVIDENCE),
        };
        write_context(&mut enc, &self.context)?;
        match &self.document {
            Document::View(v) => write_view(&mut enc, v, sid)?,
            Document::Transcript(t) => write_votes(&mut enc, t.votes.iter(), sid)?,
            Document::SequencerEvidence { config, evidence } => {
                enc.u64(config.t0).u64(config.delta).bytes(&config.ssid)?;
                enc.raw(&config.sequencer_pk.to_tagged_bytes());
                write_votes(&mut enc, evidence.c_tx.values(), sid)?;
                enc.bytes(&evidence.bids.encode_body()?)?;
            }
        }
        Ok(enc.finish())
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FileError> {
        let mut dec = Decoder::new(bytes);
        let mut magic = [0u8; 4];
        for b in magic.iter_mut() {
            *b = dec.u8().map_err(|_| FileError::Magic)?;
        }
        if &magic != MAGIC {
            return Err(FileError::Magic);
        }
        let version = dec.u8()?;
        if version != FORMAT_VERSION {
            return Err(FileError::Version(version));
        }
        let kind = dec.u8()?;
        let context = read_context(&mut dec)?;
        let sid = context.committee.sid.clone();
        let document = match kind {
            KIND_VIEW => Document::View(read_view(&mut dec, &sid)?),
            KIND_TRANSCRIPT => Document::Transcript(Transcript::new(read_votes(&mut dec, &sid)?)),
            KIND_SEQUENCER_EVIDENCE => {
                let (t0, delta) = (dec.u64()?, dec.u64()?);
                let ssid = dec.bytes()?.to_vec();
                let pk = read_key(&mut dec)?;
                let config = BidsetConfig::new(t0, delta, ssid, pk)?;
                let c_tx = by_replica(read_votes(&mut dec, &sid)?)?;
                let bids = BidsMessage::decode_body(dec.bytes()?)?;
                Document::SequencerEvidence {
                    config,
                    evidence: SequencerEvidence { c_tx, bids },
                }
            }
            k => return Err(FileError::Kind(k)),
        };
        dec.finish()?;
        Ok(PodFile { context, document })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{Client, ClientConfig};
    use crate::crypto::{KeyPair, Scheme};
    use crate::types::heartbeat_tx;
    use std::sync::Arc;

    fn context(scheme: Scheme) -> (Context, Vec<crate::crypto::SecretKey>) {
        let sid = SessionId::new(b"file-test").unwrap();
        let (committee, sks) = Committee::deterministic(sid, scheme, 5, 3);
        let profile = FaultProfile::check(5, 0, 1).unwrap();
        (Context { committee, profile }, sks)
    }

    fn sample_view(ctx: &Context, sks: &[crate::crypto::SecretKey]) -> View {
        let mut c = Client::new(Arc::new(ctx.committee.clone()), ctx.profile, ClientConfig::default());
        for (i, sk) in sks.iter().enumerate() {
            let r = ReplicaId(i as u32);
            let sid = &ctx.committee.sid;
            c.process_vote(Vote::sign(sid, r, sk, heartbeat_tx(1), 1, 0).unwrap());
            if i < 4 {
                c.process_vote(Vote::sign(sid, r, sk, Tx::new("x"), 2 + i as u64, 1).unwrap());
            }
        }
        c.read()
    }

    #[test]
    fn view_round_trip() {
        for scheme in [Scheme::Ed25519, Scheme::KeyedHash] {
            let (ctx, sks) = context(scheme);
            let f = PodFile {
                document: Document::View(sample_view(&ctx, &sks)),
                context: ctx,
            };
            let bytes = f.encode().unwrap();
            assert_eq!(&bytes[..4], MAGIC);
            assert_eq!(PodFile::decode(&bytes).unwrap(), f);
        }
    }

    #[test]
    fn transcript_and_evidence_round_trip() {
        let (ctx, sks) = context(Scheme::Ed25519);
        let view = sample_view(&ctx, &sks);
        let t = PodFile {
            context: ctx.clone(),
            document: Document::Transcript(Transcript::from_views([&view])),
        };
        assert_eq!(PodFile::decode(&t.encode().unwrap()).unwrap(), t);

        let seq = KeyPair::from_seed(Scheme::Ed25519, [9; 32]);
        let config = BidsetConfig::new(4, 2, b"s".to_vec(), seq.pk).unwrap();
        let bids = BidsMessage::sign(b"s", &seq.sk, [Tx::new("1")].into(), view.certs.c_pp.clone());
        let e = PodFile {
            context: ctx,
            document: Document::SequencerEvidence {
                config,
                evidence: SequencerEvidence {
                    c_tx: view.certs.c_tx[&Tx::new("x")].clone(),
                    bids,
                },
            },
        };
        assert_eq!(PodFile::decode(&e.encode().unwrap()).unwrap(), e);
    }

    #[test]
    fn rejects_damage() {
        let (ctx, sks) = context(Scheme::KeyedHash);
        let f = PodFile {
            document: Document::View(sample_view(&ctx, &sks)),
            context: ctx,
        };
        let bytes = f.encode().unwrap();
        assert_eq!(PodFile::decode(b"nope"), Err(FileError::Magic));
        let mut v = bytes.clone();
        v[4] = 9;
        assert_eq!(PodFile::decode(&v), Err(FileError::Version(9)));
        let mut v = bytes.clone();
        v[5] = 7;
        assert_eq!(PodFile::decode(&v), Err(FileError::Kind(7)));
        let mut v = bytes.clone();
        v.push(0);
        assert!(PodFile::decode(&v).is_err());
        for cut in [6, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(PodFile::decode(&bytes[..cut]).is_err(), "{cut}");
        }
    }
}
