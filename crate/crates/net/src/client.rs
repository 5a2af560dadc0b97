use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use pod_core::frame::Frame;
use pod_core::{Client, ClientConfig, ClientId, Committee, FaultProfile, SessionId, Tx, View};
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot, Notify};
use tokio::task::JoinHandle;
use tokio::time::Instant;

use crate::wire::{read_frame, write_loop, Outbound};

#[derive(Debug, Clone)]
pub struct NetClientConfig {
    pub id: ClientId,
    /// Extra delay on every outgoing frame.
    pub link_delay: Duration,
    /// Per-replica overrides of `link_delay`, indexed by replica id.
    pub link_delays: Vec<Duration>,
    /// Redial a replica after its connection drops.
    pub reconnect: bool,
    pub retry_interval: Duration,
    /// How long [`NetClient::connect`] waits for the first connection to each replica.
    pub connect_timeout: Duration,
    pub outbound_queue: usize,
    pub client: ClientConfig,
}

impl Default for NetClientConfig {
    fn default() -> Self {
        NetClientConfig {
            id: 0,
            link_delay: Duration::ZERO,
            link_delays: Vec::new(),
            reconnect: true,
            retry_interval: Duration::from_millis(25),
            connect_timeout: Duration::from_secs(2),
            outbound_queue: 1 << 12,
            client: ClientConfig::default(),
        }
    }
}

struct State {
    client: Client,
    /// When each non-heartbeat transaction reached α votes.
    confirmed_at: HashMap<Tx, Instant>,
}

struct Shared {
    state: Mutex<State>,
    notify: Notify,
    sid: SessionId,
}

/// A pod client connected to every replica of a committee.
pub struct NetClient {
    shared: Arc<Shared>,
    links: Vec<mpsc::Sender<Outbound>>,
    tasks: Vec<JoinHandle<()>>,
    connected: usize,
}

impl NetClient {
    /// Dials every replica; `addrs[i]` is replica `i`. Returns once every
    /// replica has been reached or has failed its first attempt.
    pub async fn connect(
        addrs: &[SocketAddr],
        committee: Arc<Committee>,
        profile: FaultProfile,
        config: NetClientConfig,
    ) -> io::Result<NetClient> {
        if addrs.len() != committee.n() {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("{} addresses for a committee of {}", addrs.len(), committee.n()),
            ));
        }
        let shared = Arc::new(Shared {
            sid: committee.sid.clone(),
            state: Mutex::new(State {
                client: Client::new(committee, profile, config.client),
                confirmed_at: HashMap::new(),
            }),
            notify: Notify::new(),
        });
        let mut links = Vec::with_capacity(addrs.len());
        let mut tasks = Vec::with_capacity(addrs.len());
        let mut first = Vec::with_capacity(addrs.len());
        for (i, &addr) in addrs.iter().enumerate() {
            let delay = config.link_delays.get(i).copied().unwrap_or(config.link_delay);
            let (tx, rx) = mpsc::channel(config.outbound_queue.max(1));
            let (ready_tx, ready_rx) = oneshot::channel();
            links.push(tx);
            first.push(ready_rx);
            tasks.push(tokio::spawn(link(
                addr,
                delay,
                shared.clone(),
                config.clone(),
                rx,
                ready_tx,
            )));
        }
        let mut connected = 0;
        for ready in first {
            if let Ok(Ok(true)) = tokio::time::timeout(config.connect_timeout, ready).await {
                connected += 1;
            }
        }
        Ok(NetClient {
            shared,
            links,
            tasks,
            connected,
        })
    }

    /// Replicas reached on the first attempt.
    pub fn initially_connected(&self) -> usize {
        self.connected
    }

    /// Sends `tx` to every replica. Replicas whose queue is full miss it.
    pub fn write(&self, tx: &Tx) -> usize {
        let bytes: Arc<[u8]> = Frame::Write { tx: tx.clone() }
            .encode(&self.shared.sid)
            .expect("transaction fits a frame")
            .into();
        let now = Instant::now();
        self.links
            .iter()
            .filter(|l| l.try_send((now, bytes.clone())).is_ok())
            .count()
    }

    pub fn read(&self) -> View {
        self.lock().client.read()
    }

    pub fn with_client<T>(&self, f: impl FnOnce(&Client) -> T) -> T {
        f(&self.lock().client)
    }

    /// Waits until `f` returns `Some`, re-evaluating after every accepted vote.
    pub async fn wait_for<T>(&self, timeout: Duration, mut f: impl FnMut(&Client) -> Option<T>) -> Option<T> {
        let deadline = Instant::now() + timeout;
        loop {
            let notified = self.shared.notify.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            if let Some(v) = f(&self.lock().client) {
                return Some(v);
            }
            if tokio::time::timeout_at(deadline, notified).await.is_err() {
                return None;
            }
        }
    }

    /// Instant at which the vote confirming `tx` was processed.
    pub async fn wait_confirmed(&self, tx: &Tx, timeout: Duration) -> Option<Instant> {
        let seen = self
            .wait_for(timeout, |c| c.trace(tx).is_some_and(|t| t.is_confirmed()).then_some(()))
            .await;
        seen.map(|()| self.lock().confirmed_at.get(tx).copied().unwrap_or_else(Instant::now))
    }

    pub fn close(&mut self) {
        for t in self.tasks.drain(..) {
            t.abort();
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.shared.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Drop for NetClient {
    fn drop(&mut self) {
        self.close();
    }
}

/// Owns the connection to one replica, redialling as configured.
async fn link(
    addr: SocketAddr,
    delay: Duration,
    shared: Arc<Shared>,
    config: NetClientConfig,
    mut outgoing: mpsc::Receiver<Outbound>,
    ready: oneshot::Sender<bool>,
) {
    let mut ready = Some(ready);
    loop {
        match TcpStream::connect(addr).await {
            Ok(stream) => {
                let _ = stream.set_nodelay(true);
                if let Some(r) = ready.take() {
                    let _ = r.send(true);
                }
                session(stream, delay, &shared, &config, &mut outgoing).await;
            }
            Err(_) => {
                if let Some(r) = ready.take() {
                    let _ = r.send(false);
                }
            }
        }
        if !config.reconnect {
            return;
        }
        // Writes issued while disconnected are lost, as on a real link.
        tokio::time::sleep(config.retry_interval).await;
        while outgoing.try_recv().is_ok() {}
    }
}

async fn session(
    stream: TcpStream,
    delay: Duration,
    shared: &Arc<Shared>,
    config: &NetClientConfig,
    outgoing: &mut mpsc::Receiver<Outbound>,
) {
    let (mut rd, wr) = stream.into_split();
    let (wtx, wrx) = mpsc::channel(config.outbound_queue.max(1));
    let mut writer = tokio::spawn(write_loop(wr, wrx, delay));
    let hello: Arc<[u8]> = Frame::Connect { client: config.id }
        .encode(&shared.sid)
        .expect("connect frame")
        .into();
    if wtx.send((Instant::now(), hello)).await.is_err() {
        return;
    }
    let reader_shared = shared.clone();
    let mut reader = tokio::spawn(async move {
        while let Ok(Some(frame)) = read_frame(&mut rd, &reader_shared.sid).await {
            if let Frame::Vote { vote } = frame {
                let accepted = {
                    let mut st = reader_shared.state.lock().unwrap_or_else(|e| e.into_inner());
                    let tx = vote.tx.clone();
                    let ok = st.client.process_vote(vote).is_accepted();
                    // Stamped here rather than when a waiter wakes, so the
                    // time does not include processing of later votes.
                    if ok
                        && !tx.is_heartbeat()
                        && !st.confirmed_at.contains_key(&tx)
                        && st.client.vote_count(&tx) >= st.client.profile().alpha()
                    {
                        st.confirmed_at.insert(tx, Instant::now());
                    }
                    ok
                };
                if accepted {
                    reader_shared.notify.notify_waiters();
                }
            }
        }
    });
    loop {
        tokio::select! {
            msg = outgoing.recv() => match msg {
                Some(m) => {
                    if wtx.try_send(m).is_err() {
                        break;
                    }
                }
                None => break,
            },
            _ = &mut reader => break,
            _ = &mut writer => break,
        }
    }
    reader.abort();
    writer.abort();
}
