//! Canonical byte encoding.
//!
//! Every signed payload and every wire message is built from three primitives:
//! a single byte, a big-endian fixed-width integer, and a byte string carried
//! as a 4-byte big-endian length prefix followed by the raw bytes. Fixed-width
//! big-endian integers make the encoding platform independent, and the length
//! prefixes make every composite encoding injective.

use thiserror::Error;

/// Version byte leading every encoded vote body.
pub const VOTE_BODY_VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("byte string of {0} bytes does not fit a 4-byte length prefix")]
    Overflow(usize),
    #[error("input truncated: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after a complete value")]
    Trailing(usize),
    #[error("unsupported version byte {0:#04x}")]
    Version(u8),
    #[error("unknown tag {0:#04x}")]
    Tag(u8),
    #[error("malformed input: {0}")]
    Malformed(&'static str),
}

/// The body a replica signs: `(sid, tx, ts, sn)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteBody<'a> {
    pub sid: &'a [u8],
    pub tx: &'a [u8],
    pub ts: u64,
    pub sn: u64,
}

/// Encodes a byte-string length as a 4-byte big-endian prefix.
pub fn encode_len(len: usize) -> Result<[u8; 4], CodecError> {
    u32::try_from(len)
        .map(u32::to_be_bytes)
        .map_err(|_| CodecError::Overflow(len))
}

/// Append-only encoder over the primitives above.
#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(cap: usize) -> Self {
        Encoder {
            buf: Vec::with_capacity(cap),
        }
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> Result<&mut Self, CodecError> {
        let len = encode_len(v.len())?;
        self.buf.extend_from_slice(&len);
        self.buf.extend_from_slice(v);
        Ok(self)
    }

    /// Length prefix for a sequence of `count` items.
    pub fn count(&mut self, count: usize) -> Result<&mut Self, CodecError> {
        let len = encode_len(count)?;
        self.buf.extend_from_slice(&len);
        Ok(self)
    }

    pub fn raw(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(v);
        self
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor-style decoder, the inverse of [`Encoder`].
#[derive(Debug, Clone)]
pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Decoder { input, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let remaining = self.input.len() - self.pos;
        if remaining < n {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: n - remaining,
            });
        }
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        let b = self.take(8)?;
        let mut arr = [0u8; 8];
        arr.copy_from_slice(b);
        Ok(u64::from_be_bytes(arr))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn count(&mut self) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        // Every item occupies at least one byte; reject counts the input cannot hold.
        if n > self.remaining() {
            return Err(CodecError::Malformed("item count exceeds input length"));
        }
        Ok(n)
    }

    pub fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.input[self.pos..];
        self.pos = self.input.len();
        out
    }

    pub fn finish(self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

/// `0x01 ‖ len(sid) ‖ sid ‖ len(tx) ‖ tx ‖ ts ‖ sn`.
pub fn encode_vote_body(body: &VoteBody<'_>) -> Result<Vec<u8>, CodecError> {
    let mut enc = Encoder::with_capacity(1 + 4 + body.sid.len() + 4 + body.tx.len() + 16);
    enc.u8(VOTE_BODY_VERSION)
        .bytes(body.sid)?
        .bytes(body.tx)?
        .u64(body.ts)
        .u64(body.sn);
    Ok(enc.finish())
}

pub fn decode_vote_body(input: &[u8]) -> Result<VoteBody<'_>, CodecError> {
    let mut dec = Decoder::new(input);
    let body = read_vote_body(&mut dec)?;
    dec.finish()?;
    Ok(body)
}

pub(crate) fn read_vote_body<'a>(dec: &mut Decoder<'a>) -> Result<VoteBody<'a>, CodecError> {
    let version = dec.u8()?;
    if version != VOTE_BODY_VERSION {
        return Err(CodecError::Version(version));
    }
    let sid = dec.bytes()?;
    let tx = dec.bytes()?;
    let ts = dec.u64()?;
    let sn = dec.u64()?;
    Ok(VoteBody { sid, tx, ts, sn })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_body_golden_bytes() {
        let bytes = encode_vote_body(&VoteBody {
            sid: b"",
            tx: b"",
            ts: 0,
            sn: 0,
        })
        .unwrap();
        let mut expected = vec![0x01];
        expected.extend_from_slice(&[0; 4 + 4 + 8 + 8]);
        assert_eq!(bytes, expected);
        assert_eq!(bytes.len(), 25);
    }

    #[test]
    fn short_body_golden_bytes() {
        let bytes = encode_vote_body(&VoteBody {
            sid: b"A",
            tx: b"t",
            ts: 1,
            sn: 2,
        })
        .unwrap();
        assert_eq!(
            hex::encode(&bytes),
            "01000000014100000001740000000000000001\
             0000000000000002"
        );
        assert_eq!(bytes.len(), 27);
    }

    #[test]
    fn length_prefix_overflow() {
        assert_eq!(encode_len(u32::MAX as usize), Ok([0xff; 4]));
        let too_long = u32::MAX as usize + 1;
        assert_eq!(encode_len(too_long), Err(CodecError::Overflow(too_long)));
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(matches!(decode_vote_body(&[]), Err(CodecError::Truncated { .. })));
        assert_eq!(decode_vote_body(&[0x02]), Err(CodecError::Version(0x02)));
        let mut ok = encode_vote_body(&VoteBody {
            sid: b"s",
            tx: b"x",
            ts: 3,
            sn: 4,
        })
        .unwrap();
        ok.push(0);
        assert_eq!(decode_vote_body(&ok), Err(CodecError::Trailing(1)));
    }

    fn body_strategy() -> impl Strategy<Value = (Vec<u8>, Vec<u8>, u64, u64)> {
        (
            proptest::collection::vec(any::<u8>(), 0..12),
            proptest::collection::vec(any::<u8>(), 0..24),
            any::<u64>(),
            any::<u64>(),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn vote_body_round_trips((sid, tx, ts, sn) in body_strategy()) {
            let body = VoteBody { sid: &sid, tx: &tx, ts, sn };
            let bytes = encode_vote_body(&body).unwrap();
            prop_assert_eq!(decode_vote_body(&bytes).unwrap(), body);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100_000))]

        #[test]
        fn vote_body_is_injective(a in body_strategy(), b in body_strategy()) {
            prop_assume!(a != b);
            let ea = encode_vote_body(&VoteBody { sid: &a.0, tx: &a.1, ts: a.2, sn: a.3 }).unwrap();
            let eb = encode_vote_body(&VoteBody { sid: &b.0, tx: &b.1, ts: b.2, sn: b.3 }).unwrap();
            prop_assert_ne!(ea, eb);
        }
    }
}
