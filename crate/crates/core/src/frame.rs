//! Wire frames: `tag ‖ u32 BE payload length ‖ payload`.
//!
//! The simulator passes exactly these bytes between parties, and the socket
//! transport writes them to the stream unchanged.

use crate::codec::{read_vote_body, CodecError, Decoder, Encoder, VoteBody};
use crate::crypto::Signature;
use crate::types::{ReplicaId, SessionId, Tx, Vote};

pub const TAG_CONNECT: u8 = 0x01;
pub const TAG_WRITE: u8 = 0x02;
pub const TAG_VOTE: u8 = 0x03;

pub const HEADER_LEN: usize = 5;
/// Upper bound on accepted payload sizes.
pub const MAX_PAYLOAD: u32 = 16 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    /// Payload: the client's 8-byte id.
    Connect { client: u64 },
    /// Payload: the raw transaction.
    Write { tx: Tx },
    /// Payload: `u32 replica ‖ len(σ) ‖ σ ‖ vote body`.
    Vote { vote: Vote },
}

impl Frame {
    pub fn tag(&self) -> u8 {
        match self {
            Frame::Connect { .. } => TAG_CONNECT,
            Frame::Write { .. } => TAG_WRITE,
            Frame::Vote { .. } => TAG_VOTE,
        }
    }

    pub fn encode(&self, sid: &SessionId) -> Result<Vec<u8>, CodecError> {
        let mut payload = Encoder::new();
        match self {
            Frame::Connect { client } => {
                payload.u64(*client);
            }
            Frame::Write { tx } => {
                payload.raw(tx.as_bytes());
            }
            Frame::Vote { vote } => {
                payload.u32(vote.replica.0).bytes(vote.sigma.as_bytes())?;
                payload.raw(&crate::codec::encode_vote_body(&VoteBody {
                    sid: sid.as_bytes(),
                    tx: vote.tx.as_bytes(),
                    ts: vote.ts,
                    sn: vote.sn,
                })?);
            }
        }
        let payload = payload.finish();
        if payload.len() > MAX_PAYLOAD as usize {
            return Err(CodecError::Overflow(payload.len()));
        }
        let mut out = Encoder::with_capacity(HEADER_LEN + payload.len());
        out.u8(self.tag()).u32(payload.len() as u32).raw(&payload);
        Ok(out.finish())
    }

    /// Decodes one complete frame. Votes for a different session are rejected.
    pub fn decode(bytes: &[u8], sid: &SessionId) -> Result<Frame, CodecError> {
        let (tag, len) = decode_header(bytes)?;
        let payload = &bytes[HEADER_LEN.min(bytes.len())..];
        if payload.len() != len as usize {
            return Err(if payload.len() < len as usize {
                CodecError::Truncated {
                    offset: bytes.len(),
                    needed: len as usize - payload.len(),
                }
            } else {
                CodecError::Trailing(payload.len() - len as usize)
            });
        }
        Self::decode_payload(tag, payload, sid)
    }

    pub fn decode_payload(tag: u8, payload: &[u8], sid: &SessionId) -> Result<Frame, CodecError> {
        let mut dec = Decoder::new(payload);
        let frame = match tag {
            TAG_CONNECT => Frame::Connect { client: dec.u64()? },
            TAG_WRITE => Frame::Write {
                tx: Tx::new(dec.rest()),
            },
            TAG_VOTE => {
                let replica = ReplicaId(dec.u32()?);
                let sigma = Signature::from_bytes(dec.bytes()?);
                let body = read_vote_body(&mut dec)?;
                if body.sid != sid.as_bytes() {
                    return Err(CodecError::Malformed("vote for another session"));
                }
                Frame::Vote {
                    vote: Vote {
                        replica,
                        tx: Tx::new(body.tx),
                        ts: body.ts,
                        sn: body.sn,
                        sigma,
                    },
                }
            }
            other => return Err(CodecError::Tag(other)),
        };
        dec.finish()?;
        Ok(frame)
    }
}

/// Parses the 5-byte header into `(tag, payload length)`.
pub fn decode_header(bytes: &[u8]) -> Result<(u8, u32), CodecError> {
    let mut dec = Decoder::new(bytes);
    let tag = dec.u8()?;
    if !matches!(tag, TAG_CONNECT | TAG_WRITE | TAG_VOTE) {
        return Err(CodecError::Tag(tag));
    }
    let len = dec.u32()?;
    if len > MAX_PAYLOAD {
        return Err(CodecError::Malformed("frame payload too large"));
    }
    Ok((tag, len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Scheme;
    use crate::types::Committee;

    fn sid() -> SessionId {
        SessionId::new(b"A").unwrap()
    }

    #[test]
    fn connect_golden() {
        let bytes = Frame::Connect { client: 7 }.encode(&sid()).unwrap();
        assert_eq!(hex::encode(bytes), "01000000080000000000000007");
    }

    #[test]
    fn write_golden() {
        let bytes = Frame::Write { tx: Tx::from("t") }.encode(&sid()).unwrap();
        assert_eq!(hex::encode(bytes), "020000000174");
    }

    #[test]
    fn vote_golden() {
        let vote = Vote {
            replica: ReplicaId(2),
            tx: Tx::from("t"),
            ts: 1,
            sn: 2,
            sigma: Signature::from_bytes(&[0xaa, 0xbb]),
        };
        let bytes = Frame::Vote { vote }.encode(&sid()).unwrap();
        assert_eq!(
            hex::encode(&bytes),
            concat!(
                "03",
                "00000025",
                "00000002",
                "00000002aabb",
                "01000000014100000001740000000000000001",
                "0000000000000002"
            )
        );
    }

    #[test]
    fn round_trip_signed_vote() {
        let (committee, sks) = Committee::deterministic(sid(), Scheme::Ed25519, 1, 0);
        let vote = Vote::sign(&sid(), ReplicaId(0), &sks[0], Tx::from("payload"), 9, 3).unwrap();
        let frame = Frame::Vote { vote };
        let decoded = Frame::decode(&frame.encode(&sid()).unwrap(), &sid()).unwrap();
        assert_eq!(decoded, frame);
        let Frame::Vote { vote } = decoded else { unreachable!() };
        assert!(committee.verify_vote(&vote));
    }

    #[test]
    fn rejects_malformed() {
        let s = sid();
        assert_eq!(Frame::decode(&[0x09, 0, 0, 0, 0], &s), Err(CodecError::Tag(0x09)));
        assert!(matches!(
            Frame::decode(&[0x01, 0, 0, 0, 8, 1], &s),
            Err(CodecError::Truncated { .. })
        ));
        assert!(Frame::decode(&[0x01, 0, 0, 0, 1, 1], &s).is_err());
        assert!(decode_header(&[0x02, 0xff, 0xff, 0xff, 0xff]).is_err());
        let vote = Vote {
            replica: ReplicaId(0),
            tx: Tx::from("t"),
            ts: 0,
            sn: 0,
            sigma: Signature::from_bytes(&[]),
        };
        let other = Frame::Vote { vote }.encode(&SessionId::new(b"B").unwrap()).unwrap();
        assert!(Frame::decode(&other, &s).is_err());
    }
}
