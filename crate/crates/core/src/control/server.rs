//! The control hub and the WebSocket acceptor.
//!
//! All control sources (WebSocket sessions, MIDI, OSC `/ctl/*`) send
//! [`ControlEvent`]s into one crossbeam channel. The hub thread resolves
//! them in arrival order and is the only producer of the engine's command
//! queue. It mirrors engine state from telemetry and fans out snapshots,
//! diffs and meters to sessions.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender, TrySendError};
use tungstenite::{Message, WebSocket};

use super::protocol::{diff, state_values, ClientMessage, MetersMessage, ServerMessage, SessionInfo, WireValue};
use super::{resolve, Command, ControlEvent};
use crate::engine::{EngineState, MeterFrame, Telemetry};
use crate::error::{Error, Result};

/// Control-plane ends of the queues to and from the audio context.
pub struct EngineLink {
    pub commands: rtrb::Producer<Command>,
    pub telemetry: rtrb::Consumer<Telemetry>,
}

/// Audio-context ends of the same queues.
pub struct EngineEnd {
    pub commands: rtrb::Consumer<Command>,
    pub telemetry: rtrb::Producer<Telemetry>,
}

impl EngineLink {
    pub fn pair(capacity: usize) -> (EngineLink, EngineEnd) {
        let (cp, cc) = rtrb::RingBuffer::new(capacity);
        let (tp, tc) = rtrb::RingBuffer::new(capacity);
        (
            EngineLink {
                commands: cp,
                telemetry: tc,
            },
            EngineEnd {
                commands: cc,
                telemetry: tp,
            },
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HubConfig {
    /// Interval between full heartbeat snapshots.
    pub heartbeat: Duration,
    /// Interval between meter frames.
    pub meter_interval: Duration,
    /// Meter frames a slow session may have queued before new ones drop.
    pub meter_queue: usize,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            heartbeat: Duration::from_millis(100),
            meter_interval: Duration::from_millis(50),
            meter_queue: 4,
        }
    }
}

type SessionId = u64;

struct SessionTx {
    state: Sender<ServerMessage>,
    meters: Sender<ServerMessage>,
}

enum HubInput {
    Event { ev: ControlEvent, reply: Option<SessionId> },
    Connect(SessionId, SessionTx),
    Disconnect(SessionId),
}

/// Cloneable handle for submitting control events to the hub.
#[derive(Clone)]
pub struct HubSender {
    tx: Sender<HubInput>,
}

impl HubSender {
    pub fn send(&self, ev: ControlEvent) {
        let _ = self.tx.send(HubInput::Event { ev, reply: None });
    }
}

pub struct ControlHub {
    tx: Sender<HubInput>,
    stop: Arc<AtomicBool>,
    next_session: Arc<AtomicU64>,
    meter_queue: usize,
    thread: Option<JoinHandle<()>>,
}

struct HubState {
    link: EngineLink,
    info: SessionInfo,
    cfg: HubConfig,
    sessions: BTreeMap<SessionId, SessionTx>,
    engine: EngineState,
    mirror: BTreeMap<String, WireValue>,
    seq: u64,
    meters: Option<MeterFrame>,
    fresh_meters: bool,
}

impl HubState {
    fn snapshot(&self) -> ServerMessage {
        let levels = self.meters.map(|m| m.levels).unwrap_or_default();
        ServerMessage::Snapshot(self.info.snapshot(self.seq, &self.engine, levels))
    }

    fn broadcast_state(&mut self, msg: &ServerMessage) {
        self.sessions.retain(|_, s| s.state.send(msg.clone()).is_ok());
    }

    fn handle(&mut self, input: HubInput) {
        match input {
            HubInput::Connect(id, tx) => {
                let _ = tx.state.send(self.snapshot());
                self.sessions.insert(id, tx);
            }
            HubInput::Disconnect(id) => {
                self.sessions.remove(&id);
            }
            HubInput::Event { ev, reply } => {
                let outcome = resolve(&ev, &self.info.registry).and_then(|r| {
                    self.link
                        .commands
                        .push(r.command)
                        .map_err(|_| Error::Control("engine command queue full".into()))
                });
                if let Err(e) = outcome {
                    log::warn!("control event from {:?} rejected: {e}", ev.source);
                    if let Some(s) = reply.and_then(|id| self.sessions.get(&id)) {
                        let _ = s.state.send(ServerMessage::Error {
                            message: e.to_string(),
                            address: Some(ev.address.clone()),
                        });
                    }
                }
            }
        }
    }

    fn drain_telemetry(&mut self) {
        while let Ok(t) = self.link.telemetry.pop() {
            match t {
                Telemetry::State(s) => {
                    self.engine = s;
                    let values = state_values(&s, &self.info.registry);
                    let changes = diff(&self.mirror, &values);
                    self.mirror = values;
                    if !changes.is_empty() {
                        self.seq += 1;
                        let msg = ServerMessage::Diff { seq: self.seq, changes };
                        self.broadcast_state(&msg);
                    }
                }
                Telemetry::Meters(m) => {
                    self.meters = Some(m);
                    self.fresh_meters = true;
                }
            }
        }
    }

    fn send_meters(&mut self) {
        let Some(m) = self.meters.filter(|_| self.fresh_meters) else {
            return;
        };
        self.fresh_meters = false;
        let msg = ServerMessage::Meters(MetersMessage::from(&m));
        self.sessions.retain(|_, s| match s.meters.try_send(msg.clone()) {
            Ok(()) | Err(TrySendError::Full(_)) => true,
            Err(TrySendError::Disconnected(_)) => false,
        });
    }
}

impl ControlHub {
    /// Start the hub thread. `initial` is the engine state at startup.
    pub fn spawn(link: EngineLink, info: SessionInfo, initial: EngineState, cfg: HubConfig) -> Self {
        let (tx, rx) = unbounded::<HubInput>();
        let stop = Arc::new(AtomicBool::new(false));
        let stop_t = stop.clone();
        let mirror = state_values(&initial, &info.registry);
        let mut st = HubState {
            link,
            info,
            cfg,
            sessions: BTreeMap::new(),
            engine: initial,
            mirror,
            seq: 0,
            meters: None,
            fresh_meters: false,
        };
        let thread = std::thread::Builder::new()
            .name("control-hub".into())
            .spawn(move || hub_loop(&mut st, rx, &stop_t))
            .expect("spawn control hub");
        Self {
            tx,
            stop,
            next_session: Arc::new(AtomicU64::new(1)),
            meter_queue: cfg.meter_queue,
            thread: Some(thread),
        }
    }

    pub fn sender(&self) -> HubSender {
        HubSender { tx: self.tx.clone() }
    }

    fn connect(&self) -> (SessionId, Receiver<ServerMessage>, Receiver<ServerMessage>) {
        let id = self.next_session.fetch_add(1, Ordering::Relaxed);
        let (state_tx, state_rx) = unbounded();
        let (meter_tx, meter_rx) = bounded(self.meter_queue);
        let _ = self.tx.send(HubInput::Connect(
            id,
            SessionTx {
                state: state_tx,
                meters: meter_tx,
            },
        ));
        (id, state_rx, meter_rx)
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ControlHub {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn hub_loop(st: &mut HubState, rx: Receiver<HubInput>, stop: &AtomicBool) {
    let mut last_heartbeat = Instant::now();
    let mut last_meters = Instant::now();
    let tick = Duration::from_millis(5);
    while !stop.load(Ordering::SeqCst) {
        match rx.recv_timeout(tick) {
            Ok(input) => {
                st.handle(input);
                while let Ok(more) = rx.try_recv() {
                    st.handle(more);
                }
            }
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => break,
        }
        st.drain_telemetry();
        let now = Instant::now();
        if now.duration_since(last_heartbeat) >= st.cfg.heartbeat {
            last_heartbeat = now;
            let snap = st.snapshot();
            st.broadcast_state(&snap);
        }
        if now.duration_since(last_meters) >= st.cfg.meter_interval {
            last_meters = now;
            st.send_meters();
        }
    }
}

/// Accepts WebSocket clients and runs one thread per session.
pub struct ControlServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl ControlServer {
    /// Bind `bind:port` (port 0 picks a free port) and start accepting.
    pub fn start(hub: &ControlHub, bind: &str, port: u16) -> Result<Self> {
        let listener = TcpListener::bind((bind, port))
            .map_err(|e| Error::Control(format!("cannot bind WebSocket port {bind}:{port}: {e}")))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::Control(e.to_string()))?;
        listener
            .set_nonblocking(true)
            .map_err(|e| Error::Control(e.to_string()))?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_t = stop.clone();
        let hub_tx = hub.tx.clone();
        let ids = hub.next_session.clone();
        let meter_queue = hub.meter_queue;
        let thread = std::thread::Builder::new()
            .name("ws-accept".into())
            .spawn(move || {
                let mut sessions = Vec::new();
                while !stop_t.load(Ordering::SeqCst) {
                    match listener.accept() {
                        Ok((stream, peer)) => {
                            let id = ids.fetch_add(1, Ordering::Relaxed);
                            let (state_tx, state_rx) = unbounded();
                            let (meter_tx, meter_rx) = bounded(meter_queue);
                            let _ = hub_tx.send(HubInput::Connect(
                                id,
                                SessionTx {
                                    state: state_tx,
                                    meters: meter_tx,
                                },
                            ));
                            let tx = hub_tx.clone();
                            let stop_s = stop_t.clone();
                            let h = std::thread::Builder::new()
                                .name(format!("ws-{peer}"))
                                .spawn(move || {
                                    if let Err(e) = run_session(stream, id, &tx, state_rx, meter_rx, &stop_s) {
                                        log::debug!("session {peer} ended: {e}");
                                    }
                                    let _ = tx.send(HubInput::Disconnect(id));
                                });
                            if let Ok(h) = h {
                                sessions.push(h);
                            }
                        }
                        Err(e) if e.kind() == ErrorKind::WouldBlock => {
                            std::thread::sleep(Duration::from_millis(10));
                        }
                        Err(e) => log::warn!("accept failed: {e}"),
                    }
                }
                for h in sessions {
                    let _ = h.join();
                }
            })
            .map_err(|e| Error::Control(e.to_string()))?;
        Ok(Self {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ControlServer {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn now_us() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}

fn run_session(
    stream: TcpStream,
    id: SessionId,
    hub: &Sender<HubInput>,
    state_rx: Receiver<ServerMessage>,
    meter_rx: Receiver<ServerMessage>,
    stop: &AtomicBool,
) -> std::result::Result<(), String> {
    stream.set_nonblocking(false).map_err(|e| e.to_string())?;
    stream.set_nodelay(true).ok();
    let mut ws: WebSocket<TcpStream> = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_mut()
        .set_read_timeout(Some(Duration::from_millis(5)))
        .map_err(|e| e.to_string())?;
    loop {
        if stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            let _ = ws.flush();
            return Ok(());
        }
        // state messages first so meters never overtake a diff
        let mut wrote = false;
        while let Ok(m) = state_rx.try_recv() {
            ws.write(Message::text(m.to_json())).map_err(|e| e.to_string())?;
            wrote = true;
        }
        if let Ok(m) = meter_rx.try_recv() {
            ws.write(Message::text(m.to_json())).map_err(|e| e.to_string())?;
            wrote = true;
        }
        if wrote {
            ws.flush().map_err(|e| e.to_string())?;
        }
        match ws.read() {
            Ok(Message::Text(t)) => match ClientMessage::parse(t.as_str()) {
                Ok(msg) => {
                    let ev = msg.into_event(now_us());
                    let _ = hub.send(HubInput::Event { ev, reply: Some(id) });
                }
                Err(message) => {
                    let err = ServerMessage::Error { message, address: None };
                    ws.send(Message::text(err.to_json())).map_err(|e| e.to_string())?;
                }
            },
            Ok(Message::Binary(_)) => {
                let err = ServerMessage::Error {
                    message: "binary frames are not supported".into(),
                    address: None,
                };
                ws.send(Message::text(err.to_json())).map_err(|e| e.to_string())?;
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.to_string()),
        }
    }
}

/// An in-process client of the hub (no socket), used by tests and tools.
pub struct LocalSession {
    pub id: u64,
    hub: Sender<HubInput>,
    pub state: Receiver<ServerMessage>,
    pub meters: Receiver<ServerMessage>,
}

impl LocalSession {
    pub fn connect(hub: &ControlHub) -> Self {
        let (id, state, meters) = hub.connect();
        Self {
            id,
            hub: hub.tx.clone(),
            state,
            meters,
        }
    }

    pub fn send_text(&self, text: &str) -> std::result::Result<(), String> {
        let msg = ClientMessage::parse(text)?;
        let _ = self.hub.send(HubInput::Event {
            ev: msg.into_event(now_us()),
            reply: Some(self.id),
        });
        Ok(())
    }
}

impl Drop for LocalSession {
    fn drop(&mut self) {
        let _ = self.hub.send(HubInput::Disconnect(self.id));
    }
}
