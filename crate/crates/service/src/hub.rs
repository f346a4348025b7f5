//! Fan-out of tick snapshots to metric subscribers.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use tokio::sync::mpsc;

/// Snapshots a subscriber may have queued before it is dropped.
pub const BACKLOG_LIMIT: usize = 100;

/// Why a subscription ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disconnect {
    /// The subscriber fell more than [`BACKLOG_LIMIT`] snapshots behind.
    Backlog,
    /// The engine shut down.
    Closed,
}

struct Subscriber {
    tx: mpsc::Sender<Arc<str>>,
    lagged: Arc<AtomicBool>,
}

#[derive(Default)]
pub struct MetricsHub {
    subscribers: Mutex<Vec<Subscriber>>,
}

impl MetricsHub {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a subscriber; it receives every line published from now on.
    pub fn subscribe(&self) -> Subscription {
        let (tx, rx) = mpsc::channel(BACKLOG_LIMIT);
        let lagged = Arc::new(AtomicBool::new(false));
        self.subscribers.lock().unwrap().push(Subscriber {
            tx,
            lagged: lagged.clone(),
        });
        Subscription { rx, lagged }
    }

    pub fn subscriber_count(&self) -> usize {
        self.subscribers.lock().unwrap().len()
    }

    /// Queues `line` for every subscriber without blocking. Full queues are
    /// cut off and flagged as backlog disconnects.
    pub fn publish(&self, line: Arc<str>) {
        self.subscribers.lock().unwrap().retain(|s| match s.tx.try_send(line.clone()) {
            Ok(()) => true,
            Err(mpsc::error::TrySendError::Full(_)) => {
                s.lagged.store(true, Ordering::Release);
                false
            }
            Err(mpsc::error::TrySendError::Closed(_)) => false,
        });
    }

    /// Ends every subscription.
    pub fn close_all(&self) {
        self.subscribers.lock().unwrap().clear();
    }
}

pub struct Subscription {
    rx: mpsc::Receiver<Arc<str>>,
    lagged: Arc<AtomicBool>,
}

impl Subscription {
    /// Next line, or `None` once the subscription has ended and every queued
    /// line has been drained.
    pub async fn recv(&mut self) -> Option<Arc<str>> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<Arc<str>> {
        self.rx.try_recv().ok()
    }

    /// Reason the subscription ended; meaningful after `recv` returned `None`.
    pub fn disconnect_reason(&self) -> Disconnect {
        if self.lagged.load(Ordering::Acquire) {
            Disconnect::Backlog
        } else {
            Disconnect::Closed
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(i: usize) -> Arc<str> {
        Arc::from(format!("{i}\n"))
    }

    #[tokio::test]
    async fn fan_out_is_ordered_and_identical() {
        let hub = MetricsHub::new();
        let mut a = hub.subscribe();
        let mut b = hub.subscribe();
        for i in 0..50 {
            hub.publish(line(i));
        }
        hub.close_all();
        for sub in [&mut a, &mut b] {
            let mut got = Vec::new();
            while let Some(l) = sub.recv().await {
                got.push(l.to_string());
            }
            assert_eq!(got, (0..50).map(|i| format!("{i}\n")).collect::<Vec<_>>());
            assert_eq!(sub.disconnect_reason(), Disconnect::Closed);
        }
    }

    #[tokio::test]
    async fn idle_subscriber_is_dropped_after_backlog() {
        let hub = MetricsHub::new();
        let mut idle = hub.subscribe();
        let mut busy = hub.subscribe();
        for i in 0..BACKLOG_LIMIT {
            hub.publish(line(i));
            busy.recv().await.unwrap();
        }
        assert_eq!(hub.subscriber_count(), 2);
        hub.publish(line(BACKLOG_LIMIT));
        assert_eq!(hub.subscriber_count(), 1);
        let mut drained = 0;
        while idle.recv().await.is_some() {
            drained += 1;
        }
        assert_eq!(drained, BACKLOG_LIMIT);
        assert_eq!(idle.disconnect_reason(), Disconnect::Backlog);
        assert_eq!(busy.recv().await.as_deref(), Some("100\n"));
    }

    #[test]
    fn dropped_subscription_is_pruned() {
        let hub = MetricsHub::new();
        drop(hub.subscribe());
        hub.publish(line(0));
        assert_eq!(hub.subscriber_count(), 0);
    }
}
