//! Per-session outgoing message buffer.
//!
//! Responses and events share one queue so a client sees them in the order
//! they were produced. When the queue is over capacity, `viz_frame` events
//! go first, then `state_snapshot` events. Responses, `node_played`,
//! `scene_boundary` and `error` are never dropped; the queue grows instead.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use crate::protocol::EventKind;

pub const DEFAULT_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
struct Outgoing {
    kind: Option<EventKind>,
    line: String,
}

fn drop_rank(kind: Option<EventKind>) -> Option<u8> {
    match kind {
        Some(EventKind::VizFrame) => Some(0),
        Some(EventKind::StateSnapshot) => Some(1),
        _ => None,
    }
}

#[derive(Debug, Default)]
struct State {
    queue: VecDeque<Outgoing>,
    closed: bool,
    dropped: u64,
}

#[derive(Debug)]
pub struct Outbox {
    state: Mutex<State>,
    ready: Condvar,
    capacity: usize,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Outbox {
            state: Mutex::new(State::default()),
            ready: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn push_response(&self, line: String) {
        self.push(Outgoing { kind: None, line });
    }

    pub fn push_event(&self, kind: EventKind, line: String) {
        self.push(Outgoing {
            kind: Some(kind),
            line,
        });
    }

    fn push(&self, item: Outgoing) {
        let mut st = self.state.lock().unwrap();
        if st.closed {
            return;
        }
        if st.queue.len() >= self.capacity {
            if let Some(rank) = drop_rank(item.kind) {
                // make room from a lower-or-equal rank, else drop the newcomer
                match victim(&st.queue, rank) {
                    Some(i) => {
                        st.queue.remove(i);
                    }
                    None => {
                        st.dropped += 1;
                        return;
                    }
                }
            } else if let Some(i) = victim(&st.queue, u8::MAX) {
                st.queue.remove(i);
            } else {
                st.queue.push_back(item);
                self.ready.notify_all();
                return;
            }
            st.dropped += 1;
        }
        st.queue.push_back(item);
        self.ready.notify_all();
    }

    /// Next line, waiting up to `timeout`. `None` on timeout or once the
    /// outbox is closed and empty.
    pub fn pop_wait(&self, timeout: Duration) -> Option<String> {
        let mut st = self.state.lock().unwrap();
        if st.queue.is_empty() && !st.closed {
            st = self.ready.wait_timeout(st, timeout).unwrap().0;
        }
        st.queue.pop_front().map(|o| o.line)
    }

    pub fn drain(&self) -> Vec<String> {
        let mut st = self.state.lock().unwrap();
        st.queue.drain(..).map(|o| o.line).collect()
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stops accepting messages. Queued lines can still be read.
    pub fn close(&self) {
        self.state.lock().unwrap().closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().unwrap().closed
    }

    /// Closed with nothing left to deliver.
    pub fn is_finished(&self) -> bool {
        let st = self.state.lock().unwrap();
        st.closed && st.queue.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.state.lock().unwrap().dropped
    }
}

impl Default for Outbox {
    fn default() -> Self {
        Outbox::new(DEFAULT_CAPACITY)
    }
}

/// Oldest droppable entry whose rank is at most `max_rank`, preferring the
/// lowest rank.
fn victim(queue: &VecDeque<Outgoing>, max_rank: u8) -> Option<usize> {
    queue
        .iter()
        .enumerate()
        .filter_map(|(i, o)| drop_rank(o.kind).map(|r| (r, i)))
        .filter(|(r, _)| *r <= max_rank)
        .min()
        .map(|(_, i)| i)
}
