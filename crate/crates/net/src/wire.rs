use std::io;
use std::time::Duration;

use pod_core::frame::{decode_header, Frame, HEADER_LEN};
use pod_core::SessionId;
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::sync::mpsc;
use tokio::time::Instant;

fn invalid(e: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e.to_string())
}

/// Reads one frame; `Ok(None)` on a clean end of stream.
pub(crate) async fn read_frame<R: AsyncRead + Unpin>(r: &mut R, sid: &SessionId) -> io::Result<Option<Frame>> {
    let mut header = [0u8; HEADER_LEN];
    match r.read_exact(&mut header).await {
        Ok(_) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let (tag, len) = decode_header(&header).map_err(invalid)?;
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload).await?;
    Frame::decode_payload(tag, &payload, sid).map(Some).map_err(invalid)
}

pub(crate) type Outbound = (Instant, std::sync::Arc<[u8]>);

/// Writes queued frames in order, each no earlier than `delay` after it was queued.
pub(crate) async fn write_loop<W: AsyncWrite + Unpin>(
    mut w: W,
    mut rx: mpsc::Receiver<Outbound>,
    delay: Duration,
) -> io::Result<()> {
    while let Some((queued, bytes)) = rx.recv().await {
        if !delay.is_zero() {
            tokio::time::sleep_until(queued + delay).await;
        }
        w.write_all(&bytes).await?;
        // Flush only when nothing else is immediately pending.
        if rx.is_empty() {
            w.flush().await?;
        }
    }
    w.shutdown().await
}
