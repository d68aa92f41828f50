//! Live simulation server: one simulation thread, per-client reader and
//! writer threads, a latest-wins command mailbox and non-blocking
//! telemetry fan-out.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use quadpose::curricula::{GridConfig, TerrainSlot, PUSH_INTERVAL_EARLY};
use quadpose::dynamics::RobotModel;
use quadpose::env::{Command6D, EnvConfig, EnvContext, EpisodeSpec};
use quadpose::rl::ActorCritic;
use quadpose::terrain::TerrainKind;
use quadpose::train::{mean_actions, Agent};

use crate::protocol::{clamp_command, parse_client_line, ClientFrame, ServerFrame, StateFrame};

/// Frames buffered per client before new frames are dropped for it.
pub const CLIENT_QUEUE: usize = 512;
pub const METRICS_EVERY: u64 = 50;
pub const SERVE_EPISODE_S: f64 = 3600.0;

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub env: EnvConfig,
    pub terrain: TerrainSlot,
    /// Control steps per wall-clock second; `None` runs unthrottled.
    pub rate_hz: Option<f64>,
    pub seed: u64,
    /// Stop after this many control steps.
    pub max_steps: Option<u64>,
}

impl ServeOptions {
    pub fn new(env: EnvConfig) -> Self {
        Self { env, terrain: TerrainSlot { kind: TerrainKind::RoughFlat, level: 0 }, rate_hz: Some(50.0), seed: 0, max_steps: None }
    }
}

#[derive(Default)]
struct Mailbox {
    latest: Mutex<Option<(Command6D, Vec<String>)>>,
}

struct Clients {
    senders: Mutex<Vec<(usize, SyncSender<String>)>>,
    connected: AtomicUsize,
}

impl Clients {
    fn broadcast(&self, line: &str) {
        let mut s = self.senders.lock().unwrap();
        s.retain(|(_, tx)| match tx.try_send(line.to_string()) {
            Ok(()) | Err(TrySendError::Full(_)) => true,
            Err(TrySendError::Disconnected(_)) => false,
        });
    }
}

pub struct Server {
    listener: TcpListener,
    addr: SocketAddr,
}

impl Server {
    pub fn bind(addr: &str) -> Result<Self, ServeError> {
        let listener = TcpListener::bind(addr).map_err(|e| match e.kind() {
            std::io::ErrorKind::AddrInUse => ServeError::PortInUse(addr.rsplit(':').next().and_then(|p| p.parse().ok()).unwrap_or(0)),
            _ => ServeError::Bind { addr: addr.to_string(), source: e },
        })?;
        let addr = listener.local_addr().map_err(|e| ServeError::Bind { addr: addr.to_string(), source: e })?;
        Ok(Self { listener, addr })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Runs the simulation until `stop` is set or `max_steps` is reached.
    pub fn run(self, policy: ActorCritic<f32>, opts: ServeOptions, stop: Arc<AtomicBool>) {
        let mailbox = Arc::new(Mailbox::default());
        let clients = Arc::new(Clients { senders: Mutex::new(Vec::new()), connected: AtomicUsize::new(0) });
        let config = EnvConfig { pushes: false, episode_length_s: SERVE_EPISODE_S, ..opts.env.clone() };
        let ctx = Arc::new(EnvContext { model: RobotModel::a1(), config });
        let control_hz = 1.0 / ctx.config.control_dt();
        let ref_h = ctx.model.reference_height;
        let acceptor = spawn_acceptor(self.listener, Arc::clone(&mailbox), Arc::clone(&clients), Arc::clone(&stop), control_hz, ref_h);

        let grid = GridConfig::default().caps;
        let spec = EpisodeSpec { slot: opts.terrain, grid, push_interval: PUSH_INTERVAL_EARLY };
        let mut agent = Agent::new(Arc::clone(&ctx), opts.seed, spec, policy.config.history_len);
        let mut command = Command6D::default();
        let mut clamped: Vec<String> = Vec::new();
        agent.env.fix_command(Some(command));
        agent.reset(spec);

        let period = opts.rate_hz.map(|hz| Duration::from_secs_f64(1.0 / hz));
        let start = Instant::now();
        let (mut step, mut resets, mut rv_sum, mut rv_n) = (0u64, 0u64, 0.0, 0u64);
        let mut had_clients = false;
        while !stop.load(Ordering::SeqCst) && opts.max_steps.is_none_or(|m| step < m) {
            let n_clients = clients.connected.load(Ordering::SeqCst);
            if let Some((c, ch)) = mailbox.latest.lock().unwrap().take() {
                command = c;
                clamped = ch;
                agent.env.set_command(command);
                agent.env.fix_command(Some(command));
            } else if had_clients && n_clients == 0 {
                command = Command6D::default();
                clamped.clear();
                agent.env.fix_command(Some(command));
            }
            had_clients = n_clients > 0;

            let act = mean_actions(&policy, &[&agent])[0];
            let out = agent.env.step(&act);
            step += 1;
            rv_sum += out.task.v;
            rv_n += 1;
            let tr = agent.env.tracking();
            let r = agent.env.robot();
            let frame = ServerFrame::State(StateFrame {
                step,
                time: step as f64 / control_hz,
                command,
                clamped: !clamped.is_empty(),
                clamped_channels: clamped.clone(),
                actual: Command6D::new(tr.vx, tr.vy, tr.wz, tr.height - ref_h, tr.pitch, tr.roll),
                base_pos: [r.base_pos.x, r.base_pos.y, r.base_pos.z],
                yaw: r.base_quat.euler_angles().2,
                episode_step: agent.env.steps(),
            });
            clients.broadcast(&frame.to_line());
            if out.info.done() {
                agent.reset(spec);
                resets += 1;
            } else {
                agent.observe(&act);
            }
            if step % METRICS_EVERY == 0 {
                let m = ServerFrame::Metrics { step, mean_rv: rv_sum / rv_n as f64, resets, clients: n_clients };
                clients.broadcast(&m.to_line());
                rv_sum = 0.0;
                rv_n = 0;
            }
            if let Some(p) = period {
                let due = start + p * step as u32;
                let now = Instant::now();
                if due > now {
                    thread::sleep(due - now);
                }
            }
        }
        stop.store(true, Ordering::SeqCst);
        clients.senders.lock().unwrap().clear();
        let _ = acceptor.join();
    }
}

fn spawn_acceptor(
    listener: TcpListener,
    mailbox: Arc<Mailbox>,
    clients: Arc<Clients>,
    stop: Arc<AtomicBool>,
    control_hz: f64,
    ref_h: f64,
) -> JoinHandle<()> {
    listener.set_nonblocking(true).expect("non-blocking listener");
    thread::spawn(move || {
        let mut next_id = 0usize;
        while !stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, peer)) => {
                    log::info!("client {peer} connected");
                    let _ = stream.set_nonblocking(false);
                    let (tx, rx) = sync_channel::<String>(CLIENT_QUEUE);
                    let _ = tx.try_send(ServerFrame::hello(control_hz).to_line());
                    let id = next_id;
                    next_id += 1;
                    clients.senders.lock().unwrap().push((id, tx.clone()));
                    clients.connected.fetch_add(1, Ordering::SeqCst);
                    let Ok(read_half) = stream.try_clone() else { continue };
                    spawn_writer(stream, rx);
                    spawn_reader(read_half, tx, id, Arc::clone(&mailbox), Arc::clone(&clients), ref_h);
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    thread::sleep(Duration::from_millis(50));
                }
            }
        }
    })
}

fn spawn_writer(mut stream: TcpStream, rx: Receiver<String>) {
    thread::spawn(move || {
        for line in rx {
            if stream.write_all(line.as_bytes()).is_err() {
                break;
            }
        }
        let _ = stream.shutdown(std::net::Shutdown::Both);
    });
}

fn spawn_reader(stream: TcpStream, tx: SyncSender<String>, id: usize, mailbox: Arc<Mailbox>, clients: Arc<Clients>, ref_h: f64) {
    thread::spawn(move || {
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            let Ok(line) = line else { break };
            if line.trim().is_empty() {
                continue;
            }
            match parse_client_line(&line) {
                Ok(ClientFrame::Command { command }) => {
                    let (c, changed) = clamp_command(&command, ref_h);
                    if !changed.is_empty() {
                        log::debug!("clamped channels {changed:?}");
                    }
                    *mailbox.latest.lock().unwrap() = Some((c, changed));
                }
                Err(msg) => {
                    let _ = tx.try_send(ServerFrame::error(msg).to_line());
                }
            }
        }
        clients.senders.lock().unwrap().retain(|(i, _)| *i != id);
        clients.connected.fetch_sub(1, Ordering::SeqCst);
        log::info!("client {id} disconnected");
    });
}
