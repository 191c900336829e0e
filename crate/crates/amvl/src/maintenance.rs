//! Background maintenance thread.
//!
//! In lockstep mode the driver calls [`Maintainer::advance`] before each
//! event; the thread runs every sweep due at or before that virtual time and
//! then acknowledges. In timer mode it sweeps on a wall-clock interval.

use std::sync::mpsc::{channel, sync_channel, RecvTimeoutError, Sender, SyncSender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::Mutex;

use crate::engine::Engine;

enum Cmd {
    Advance(f64, SyncSender<usize>),
    Stop,
}

pub struct Maintainer {
    tx: Sender<Cmd>,
    handle: Mutex<Option<JoinHandle<()>>>,
}

impl Maintainer {
    /// Sweeps at `interval, 2·interval, …` of virtual time, driven by `advance`.
    pub fn lockstep(engine: Arc<Engine>, interval: f64) -> Self {
        let (tx, rx) = channel::<Cmd>();
        let handle = std::thread::Builder::new()
            .name("maintenance".into())
            .spawn(move || {
                let mut next_due = interval;
                for cmd in rx {
                    match cmd {
                        Cmd::Advance(t, ack) => {
                            let mut n = 0;
                            while next_due <= t {
                                engine.sweep(next_due);
                                next_due += interval;
                                n += 1;
                            }
                            let _ = ack.send(n);
                        }
                        Cmd::Stop => break,
                    }
                }
            })
            .expect("spawn maintenance thread");
        Maintainer { tx, handle: Mutex::new(Some(handle)) }
    }

    /// Sweeps every `interval` of wall time at the engine clock's current reading.
    pub fn timer(engine: Arc<Engine>, interval: Duration) -> Self {
        let (tx, rx) = channel::<Cmd>();
        let handle = std::thread::Builder::new()
            .name("maintenance".into())
            .spawn(move || loop {
                match rx.recv_timeout(interval) {
                    Err(RecvTimeoutError::Timeout) => {
                        engine.sweep(engine.clock().now());
                    }
                    Ok(Cmd::Advance(_, ack)) => {
                        engine.sweep(engine.clock().now());
                        let _ = ack.send(1);
                    }
                    Ok(Cmd::Stop) | Err(RecvTimeoutError::Disconnected) => break,
                }
            })
            .expect("spawn maintenance thread");
        Maintainer { tx, handle: Mutex::new(Some(handle)) }
    }

    /// Runs every sweep due at or before `t` and waits for them. Returns the
    /// number of sweeps performed.
    pub fn advance(&self, t: f64) -> usize {
        let (ack_tx, ack_rx) = sync_channel(1);
        if self.tx.send(Cmd::Advance(t, ack_tx)).is_err() {
            return 0;
        }
        ack_rx.recv().unwrap_or(0)
    }

    pub fn stop(&self) {
        if let Some(h) = self.handle.lock().take() {
            let _ = self.tx.send(Cmd::Stop);
            let _ = h.join();
        }
    }
}

impl Drop for Maintainer {
    fn drop(&mut self) {
        self.stop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AppConfig;
    use crate::engine::EngineOptions;
    use amvl_core::{PolicyKind, VirtualClock};

    #[test]
    fn lockstep_runs_due_sweeps_once() {
        let clock = Arc::new(VirtualClock::new(0.0));
        let engine = Arc::new(Engine::new(&AppConfig::default(), EngineOptions::new(PolicyKind::Amvl, clock)).unwrap());
        let m = Maintainer::lockstep(engine.clone(), 5.0);
        assert_eq!(m.advance(4.9), 0);
        assert_eq!(m.advance(15.0), 3);
        assert_eq!(m.advance(12.0), 0);
        m.stop();
        let s = engine.summary();
        assert_eq!(s.sweeps, 3);
        assert_eq!(s.request_path_sweeps, 0);
    }
}
