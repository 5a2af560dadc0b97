use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use pod_core::frame::Frame;
use pod_core::{ClientId, Replica, SessionId, Tx, Vote};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::{JoinHandle, JoinSet};
use tokio::time::Instant;

use crate::clock::Clock;
use crate::wire::{read_frame, write_loop, Outbound};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Heartbeat period. `None` leaves heartbeats to [`ReplicaHandle::tick`].
    pub heartbeat: Option<Duration>,
    /// Frames buffered per connection before the connection is dropped.
    pub outbound_queue: usize,
    /// Extra delay on every outgoing frame, to emulate a wide-area link.
    pub link_delay: Duration,
    pub heartbeat_skip: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            heartbeat: Some(Duration::from_millis(50)),
            outbound_queue: 1 << 16,
            link_delay: Duration::ZERO,
            heartbeat_skip: false,
        }
    }
}

enum Command {
    Connect {
        client: ClientId,
        conn: u64,
        out: mpsc::Sender<Outbound>,
    },
    Write(Tx),
    Closed {
        conn: u64,
    },
    Tick(Option<oneshot::Sender<()>>),
    LogLen(oneshot::Sender<usize>),
}

struct Actor {
    replica: Replica,
    sid: SessionId,
    clock: Arc<dyn Clock>,
    encoded: Vec<Arc<[u8]>>,
    /// Current connection of each connected client.
    links: HashMap<ClientId, (u64, mpsc::Sender<Outbound>)>,
}

impl Actor {
    fn encode(&self, vote: &Vote) -> Arc<[u8]> {
        Frame::Vote { vote: vote.clone() }
            .encode(&self.sid)
            .expect("votes fit a frame")
            .into()
    }

    fn drop_client(&mut self, client: ClientId) {
        self.links.remove(&client);
        self.replica.on_disconnect(client);
    }

    fn fan_out(&mut self, vote: Option<Vote>) {
        let Some(vote) = vote else { return };
        let bytes = self.encode(&vote);
        self.encoded.push(bytes.clone());
        let now = Instant::now();
        let mut shed = Vec::new();
        for client in self.replica.connected_clients() {
            if let Some((_, out)) = self.links.get(&client) {
                if out.try_send((now, bytes.clone())).is_err() {
                    shed.push(client);
                }
            }
        }
        for c in shed {
            self.drop_client(c);
        }
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Connect { client, conn, out } => {
                let now = Instant::now();
                let replay_ok = self.encoded.iter().all(|b| out.try_send((now, b.clone())).is_ok());
                if replay_ok {
                    self.replica.on_connect(client);
                    self.links.insert(client, (conn, out));
                } else {
                    self.drop_client(client);
                }
            }
            Command::Write(tx) => {
                let vote = self.replica.on_write(tx, self.clock.now()).ok().flatten();
                self.fan_out(vote);
            }
            Command::Closed { conn } => {
                let gone: Vec<ClientId> = self
                    .links
                    .iter()
                    .filter(|(_, (c, _))| *c == conn)
                    .map(|(id, _)| *id)
                    .collect();
                for c in gone {
                    self.drop_client(c);
                }
            }
            Command::Tick(done) => {
                let vote = self.replica.on_round_end(self.clock.now()).ok().flatten();
                self.fan_out(vote);
                if let Some(d) = done {
                    let _ = d.send(());
                }
            }
            Command::LogLen(reply) => {
                let _ = reply.send(self.replica.log().len());
            }
        }
    }
}

/// A running replica. Dropping the handle stops it.
pub struct ReplicaHandle {
    addr: SocketAddr,
    cmd: mpsc::UnboundedSender<Command>,
    tasks: Vec<JoinHandle<()>>,
}

impl ReplicaHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Runs one end-of-round step at the current clock reading.
    pub async fn tick(&self) {
        let (tx, rx) = oneshot::channel();
        if self.cmd.send(Command::Tick(Some(tx))).is_ok() {
            let _ = rx.await;
        }
    }

    pub async fn log_len(&self) -> Option<usize> {
        let (tx, rx) = oneshot::channel();
        self.cmd.send(Command::LogLen(tx)).ok()?;
        rx.await.ok()
    }

    /// Stops the replica abruptly, closing its listener and every connection.
    pub fn kill(&mut self) {
        for t in self.tasks.drain(..) {
            t.abort();
        }
    }

    pub fn is_running(&self) -> bool {
        self.tasks.iter().any(|t| !t.is_finished())
    }
}

impl Drop for ReplicaHandle {
    fn drop(&mut self) {
        self.kill();
    }
}

async fn handle_conn(
    stream: TcpStream,
    conn: u64,
    sid: SessionId,
    cmd: mpsc::UnboundedSender<Command>,
    config: ServerConfig,
    writers: &mut JoinSet<()>,
) {
    let _ = stream.set_nodelay(true);
    let (mut rd, wr) = stream.into_split();
    let (out_tx, out_rx) = mpsc::channel(config.outbound_queue.max(1));
    writers.spawn(async move {
        let _ = write_loop(wr, out_rx, config.link_delay).await;
    });
    writers.spawn(async move {
        while let Ok(Some(frame)) = read_frame(&mut rd, &sid).await {
            let c = match frame {
                Frame::Connect { client } => Command::Connect {
                    client,
                    conn,
                    out: out_tx.clone(),
                },
                Frame::Write { tx } => Command::Write(tx),
                Frame::Vote { .. } => continue,
            };
            if cmd.send(c).is_err() {
                break;
            }
        }
        let _ = cmd.send(Command::Closed { conn });
    });
}

/// Binds `addr` and serves `replica` until the handle is dropped.
pub async fn serve_replica(
    addr: SocketAddr,
    replica: Replica,
    sid: SessionId,
    clock: Arc<dyn Clock>,
    config: ServerConfig,
) -> io::Result<ReplicaHandle> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let (cmd_tx, mut cmd_rx) = mpsc::unbounded_channel();
    let mut actor = Actor {
        replica: replica.with_heartbeat_skip(config.heartbeat_skip),
        sid: sid.clone(),
        clock,
        encoded: Vec::new(),
        links: HashMap::new(),
    };
    actor.encoded = actor.replica.log().iter().map(|v| actor.encode(v)).collect();
    let actor_task = tokio::spawn(async move {
        while let Some(c) = cmd_rx.recv().await {
            actor.handle(c);
        }
    });

    let accept_cmd = cmd_tx.clone();
    let accept_cfg = config.clone();
    let accept_task = tokio::spawn(async move {
        // Connection tasks live in this set and die with the accept task.
        let mut conns = JoinSet::new();
        let mut next = 0u64;
        loop {
            tokio::select! {
                accepted = listener.accept() => {
                    let Ok((stream, _)) = accepted else { continue };
                    next += 1;
                    handle_conn(stream, next, sid.clone(), accept_cmd.clone(), accept_cfg.clone(), &mut conns).await;
                }
                Some(_) = conns.join_next(), if !conns.is_empty() => {}
            }
        }
    });

    let mut tasks = vec![actor_task, accept_task];
    if let Some(period) = config.heartbeat {
        let hb_cmd = cmd_tx.clone();
        tasks.push(tokio::spawn(async move {
            let mut iv = tokio::time::interval(period);
            iv.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                iv.tick().await;
                if hb_cmd.send(Command::Tick(None)).is_err() {
                    break;
                }
            }
        }));
    }
    Ok(ReplicaHandle {
        addr,
        cmd: cmd_tx,
        tasks,
    })
}
