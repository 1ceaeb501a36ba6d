//! Engine thread, clocks and the network front end.
//!
//! One port serves both transports: a connection that opens with `GET ` is
//! upgraded to a WebSocket (one JSON object per text message), anything
//! else is read as newline-delimited JSON over plain TCP.

use std::fmt;
use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use corpus_agent_core::corpus::SAMPLE_RATE;
use tungstenite::Message;

use crate::engine::Engine;
use crate::outbox::DEFAULT_CAPACITY;
use crate::session::{ControlQueue, Session};

pub const TOKEN_ENV: &str = "CORPUS_AGENT_TOKEN";

const IDLE_WAIT: Duration = Duration::from_millis(50);
const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClockMode {
    /// Blocks are paced to the wall clock, as a sound card would.
    Device,
    /// Blocks render as fast as possible.
    #[default]
    Offline,
}

impl FromStr for ClockMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "device" => Ok(ClockMode::Device),
            "offline" => Ok(ClockMode::Offline),
            other => Err(format!("unknown clock {other}; expected device or offline")),
        }
    }
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClockMode::Device => "device",
            ClockMode::Offline => "offline",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub clock: ClockMode,
    pub token: Option<String>,
    pub seed: u64,
    pub outbox_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            clock: ClockMode::Offline,
            token: None,
            seed: 0,
            outbox_capacity: DEFAULT_CAPACITY,
        }
    }
}

impl ServerConfig {
    /// Default config with the token taken from the environment.
    pub fn from_env() -> Self {
        ServerConfig {
            token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            ..ServerConfig::default()
        }
    }
}

/// A running engine thread plus its control queue.
pub struct Service {
    queue: Arc<ControlQueue>,
    config: ServerConfig,
    next_session: AtomicU64,
    engine: Option<JoinHandle<()>>,
}

impl Service {
    pub fn start(config: ServerConfig) -> Self {
        let queue = Arc::new(ControlQueue::new());
        let q = Arc::clone(&queue);
        let (clock, seed) = (config.clock, config.seed);
        let engine = thread::Builder::new()
            .name("engine".into())
            .spawn(move || run_engine(Engine::new(seed), &q, clock))
            .expect("spawn engine thread");
        Service {
            queue,
            config,
            next_session: AtomicU64::new(1),
            engine: Some(engine),
        }
    }

    /// A new in-process session.
    pub fn session(&self) -> Session {
        let id = self.next_session.fetch_add(1, Ordering::Relaxed);
        Session::new(
            id,
            Arc::clone(&self.queue),
            self.config.token.clone(),
            self.config.outbox_capacity,
        )
    }

    pub fn shutdown(&mut self) {
        self.queue.shutdown();
        if let Some(h) = self.engine.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn run_engine(mut engine: Engine, queue: &ControlQueue, clock: ClockMode) {
    let block = Duration::from_secs_f64(corpus_agent_core::synth::BLOCK_SIZE as f64 / SAMPLE_RATE as f64);
    let mut deadline = Instant::now();
    loop {
        let commands = if engine.is_running() {
            queue.drain(engine.clock())
        } else {
            queue.wait_drain(engine.clock(), IDLE_WAIT)
        };
        for c in commands {
            engine.apply(c);
        }
        if queue.is_shutdown() {
            break;
        }
        if !engine.is_running() {
            deadline = Instant::now();
            continue;
        }
        engine.render_block();
        if clock == ClockMode::Device {
            deadline += block;
            let now = Instant::now();
            if deadline > now {
                thread::sleep(deadline - now);
            } else if now - deadline > block * 8 {
                log::warn!("engine fell behind the device clock");
                deadline = now;
            }
        }
    }
}

/// TCP + WebSocket listener on one port.
pub struct Server {
    addr: SocketAddr,
    service: Arc<Service>,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: ServerConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let service = Arc::new(Service::start(config));
        let stop = Arc::new(AtomicBool::new(false));
        let (svc, flag) = (Arc::clone(&service), Arc::clone(&stop));
        let accept = thread::Builder::new()
            .name("accept".into())
            .spawn(move || accept_loop(listener, svc, flag))?;
        log::info!("listening on {addr}");
        Ok(Server {
            addr,
            service,
            stop,
            accept: Some(accept),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn service(&self) -> &Arc<Service> {
        &self.service
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, service: Arc<Service>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                let svc = Arc::clone(&service);
                let spawned = thread::Builder::new()
                    .name(format!("conn-{peer}"))
                    .spawn(move || {
                        if let Err(e) = serve_connection(stream, &svc) {
                            log::debug!("connection {peer} ended: {e}");
                        }
                    });
                if let Err(e) = spawned {
                    log::error!("cannot spawn connection thread: {e}");
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
            Err(e) => {
                log::error!("accept failed: {e}");
                thread::sleep(POLL);
            }
        }
    }
}

/// Waits for enough bytes to tell a WebSocket upgrade from NDJSON.
fn is_websocket(stream: &TcpStream) -> io::Result<bool> {
    let mut buf = [0u8; 4];
    let start = Instant::now();
    loop {
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            return Ok(false);
        }
        if buf[0] != b'G' {
            return Ok(false);
        }
        if n == 4 {
            return Ok(&buf == b"GET ");
        }
        if start.elapsed() > Duration::from_secs(5) {
            return Ok(false);
        }
        thread::sleep(Duration::from_millis(1));
    }
}

fn serve_connection(stream: TcpStream, service: &Service) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    if is_websocket(&stream)? {
        serve_websocket(stream, service)
    } else {
        serve_tcp(stream, service)
    }
}

fn serve_tcp(stream: TcpStream, service: &Service) -> io::Result<()> {
    let mut session = service.session();
    let outbox = Arc::clone(session.outbox());
    let mut writer = stream.try_clone()?;
    let write_thread = thread::spawn(move || {
        while !outbox.is_finished() {
            if let Some(line) = outbox.pop_wait(IDLE_WAIT) {
                if writeln!(writer, "{line}").and_then(|_| writer.flush()).is_err() {
                    outbox.close();
                    break;
                }
            }
        }
        let _ = writer.shutdown(std::net::Shutdown::Write);
    });
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        match line {
            Ok(l) => session.handle_line(&l),
            Err(e) if e.kind() == ErrorKind::InvalidData => {
                session.handle_line("\u{0}");
            }
            Err(_) => break,
        }
    }
    session.disconnect();
    let _ = write_thread.join();
    Ok(())
}

fn serve_websocket(stream: TcpStream, service: &Service) -> io::Result<()> {
    let mut ws = tungstenite::accept(stream).map_err(|e| io::Error::other(e.to_string()))?;
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let mut session = service.session();
    let outbox = Arc::clone(session.outbox());
    let mut open = true;
    loop {
        if open {
            match ws.read() {
                Ok(Message::Text(text)) => {
                    for line in text.as_str().lines() {
                        session.handle_line(line);
                    }
                }
                Ok(Message::Close(_)) => {
                    open = false;
                    session.disconnect();
                }
                Ok(_) => {}
                Err(tungstenite::Error::Io(e))
                    if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
                Err(_) => {
                    session.disconnect();
                    break;
                }
            }
        } else {
            thread::sleep(POLL);
        }
        for line in outbox.drain() {
            if ws.send(Message::text(line)).is_err() {
                session.disconnect();
                return Ok(());
            }
        }
        if outbox.is_finished() {
            break;
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
    Ok(())
}
