//! The session engine: a dedicated thread that owns the [`Session`] and
//! advances it at `tick_hz`.

use crate::hub::{MetricsHub, Subscription};
use mimo_arena_core::linksim::{ConfigDelta, ConfigError, GrayImage, Session, SessionConfig, TickSnapshot};
use serde::Serialize;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

pub const SESSION_ID: &str = "session-1";
/// Engine heartbeat while paused or waiting for the next tick.
const IDLE_POLL: Duration = Duration::from_millis(5);
const LOG_EVERY_TICKS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunState {
    Running,
    Paused,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionInfo {
    pub id: &'static str,
    pub run_state: RunState,
    pub uptime_ticks: u64,
    pub config_revision: u64,
}

/// Body of `GET /v1/state`. `config` is the configuration the snapshot ran
/// under (or the initial one before the first tick).
#[derive(Debug, Clone, Serialize)]
pub struct StateView {
    pub session: SessionInfo,
    pub config: SessionConfig,
    pub snapshot: Option<Arc<TickSnapshot>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stream {stream}: session carries {n_streams}")]
pub struct UnknownStream {
    pub stream: usize,
    pub n_streams: usize,
}

struct Published {
    config: SessionConfig,
    revision: u64,
    ticks: u64,
    snapshot: Option<Arc<TickSnapshot>>,
    frames: Vec<GrayImage>,
}

struct Mailbox {
    pending: Option<(SessionConfig, u64)>,
    next_revision: u64,
}

struct Shared {
    published: RwLock<Published>,
    mailbox: Mutex<Mailbox>,
    running: AtomicBool,
    stop: AtomicBool,
    hub: MetricsHub,
}

/// Cloneable handle used by request handlers.
#[derive(Clone)]
pub struct EngineHandle {
    shared: Arc<Shared>,
}

/// Owns the engine thread; stops it on drop.
pub struct Engine {
    handle: EngineHandle,
    thread: Option<JoinHandle<()>>,
}

impl Engine {
    /// Starts the engine thread in the running state.
    pub fn spawn(config: SessionConfig, sources: Vec<GrayImage>) -> Result<Engine, ConfigError> {
        Self::spawn_with(config, sources, true)
    }

    /// Starts the engine thread; no tick runs until resumed.
    pub fn spawn_paused(config: SessionConfig, sources: Vec<GrayImage>) -> Result<Engine, ConfigError> {
        Self::spawn_with(config, sources, false)
    }

    fn spawn_with(config: SessionConfig, sources: Vec<GrayImage>, running: bool) -> Result<Engine, ConfigError> {
        let session = Session::new(config.clone(), sources)?;
        let frames = (0..config.n_streams).map(|s| session.frame(s).unwrap().clone()).collect();
        let shared = Arc::new(Shared {
            published: RwLock::new(Published {
                config,
                revision: 0,
                ticks: 0,
                snapshot: None,
                frames,
            }),
            mailbox: Mutex::new(Mailbox {
                pending: None,
                next_revision: 1,
            }),
            running: AtomicBool::new(running),
            stop: AtomicBool::new(false),
            hub: MetricsHub::new(),
        });
        let worker = shared.clone();
        let thread = std::thread::Builder::new()
            .name("session-engine".into())
            .spawn(move || run(worker, session))
            .expect("spawn engine thread");
        Ok(Engine {
            handle: EngineHandle { shared },
            thread: Some(thread),
        })
    }

    pub fn handle(&self) -> EngineHandle {
        self.handle.clone()
    }

    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.handle.shared.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        self.handle.shared.hub.close_all();
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

fn run(shared: Arc<Shared>, mut session: Session) {
    let mut next_tick = Instant::now();
    while !shared.stop.load(Ordering::Acquire) {
        if !shared.running.load(Ordering::Acquire) {
            std::thread::sleep(IDLE_POLL);
            next_tick = Instant::now();
            continue;
        }
        let now = Instant::now();
        if now < next_tick {
            std::thread::sleep((next_tick - now).min(IDLE_POLL));
            continue;
        }

        let pending = shared.mailbox.lock().unwrap().pending.take();
        if let Some((config, revision)) = pending {
            if let Err(e) = session.apply_config(config, revision) {
                // Deltas are validated on submission, so this is unreachable
                // unless validation rules diverge.
                log::error!("rejected queued config revision {revision}: {e}");
            }
        }
        let snapshot = Arc::new(session.step());
        let ticks = snapshot.tick_index + 1;
        let frames = (0..snapshot.streams.len()).map(|s| session.frame(s).unwrap().clone()).collect();
        {
            let mut p = shared.published.write().unwrap();
            p.config = snapshot.config.clone();
            p.revision = snapshot.config_revision;
            p.ticks = ticks;
            p.frames = frames;
            p.snapshot = Some(snapshot.clone());
        }
        let mut line = serde_json::to_string(&*snapshot).expect("snapshot serializes");
        line.push('\n');
        shared.hub.publish(Arc::from(line));
        if ticks.is_multiple_of(LOG_EVERY_TICKS) {
            let agg = &snapshot.aggregate;
            log::info!(
                "tick {ticks}: {} ser={:.4} nodes={:.1} subscribers={}",
                snapshot.config.detector,
                agg.ser,
                agg.mean_nodes_visited,
                shared.hub.subscriber_count()
            );
        }

        let period = Duration::from_secs_f64(1.0 / snapshot.config.tick_hz);
        next_tick += period;
        let now = Instant::now();
        if next_tick < now {
            next_tick = now;
        }
    }
}

impl EngineHandle {
    pub fn state(&self) -> StateView {
        let p = self.shared.published.read().unwrap();
        StateView {
            session: SessionInfo {
                id: SESSION_ID,
                run_state: if self.is_running() { RunState::Running } else { RunState::Paused },
                uptime_ticks: p.ticks,
                config_revision: p.revision,
            },
            config: p.config.clone(),
            snapshot: p.snapshot.clone(),
        }
    }

    /// Validates `delta` against the newest accepted configuration and
    /// queues it for the next tick boundary. Returns the merged config and
    /// the revision it will run under.
    pub fn apply_delta(&self, delta: &ConfigDelta) -> Result<(SessionConfig, u64), ConfigError> {
        let mut mb = self.shared.mailbox.lock().unwrap();
        let base = match &mb.pending {
            Some((cfg, _)) => cfg.clone(),
            None => self.shared.published.read().unwrap().config.clone(),
        };
        let merged = base.merged(delta)?;
        let revision = mb.next_revision;
        mb.next_revision += 1;
        mb.pending = Some((merged.clone(), revision));
        Ok((merged, revision))
    }

    pub fn set_running(&self, running: bool) {
        self.shared.running.store(running, Ordering::Release);
    }

    pub fn is_running(&self) -> bool {
        self.shared.running.load(Ordering::Acquire)
    }

    /// Reconstructed frame of `stream` as binary PGM.
    pub fn frame_pgm(&self, stream: usize) -> Result<Vec<u8>, UnknownStream> {
        let p = self.shared.published.read().unwrap();
        p.frames.get(stream).map(GrayImage::to_pgm).ok_or(UnknownStream {
            stream,
            n_streams: p.frames.len(),
        })
    }

    pub fn subscribe(&self) -> Subscription {
        self.shared.hub.subscribe()
    }
}
