//! In-process message transport between rank workers.
//!
//! Ranks are thread groups inside one process and messages are buffered
//! vectors in per-destination mailboxes. A [`LatencyModel`] injects an
//! affine per-message cost. In [`ProgressMode::ActiveWaitOnly`] (the default)
//! nothing progresses until the receiver sits in [`Fabric::wait_all`]: each
//! receive's cost is paid there, one receive after another. In
//! [`ProgressMode::Background`] the cost runs from the moment of the send.
//!
//! Waiting blocks the calling thread rather than spinning, so the waiting
//! thread occupies no core while the cost elapses. Deadlock detection is not
//! attempted: a receive without a matching send blocks forever.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::clock;

#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum FabricError {
    #[error("rank {rank} out of range for a {nranks}-rank fabric")]
    NoSuchRank { rank: usize, nranks: usize },

    #[error("message {src}->{dst} tag {tag}: expected {expected} values, got {got}")]
    LengthMismatch {
        src: usize,
        dst: usize,
        tag: u32,
        expected: usize,
        got: usize,
    },

    #[error("handle belongs to a different fabric")]
    ForeignHandle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProgressMode {
    /// Latency elapses only inside the receiver's `wait_all`.
    #[default]
    ActiveWaitOnly,
    /// Latency elapses in real time from the send.
    Background,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LatencyModel {
    pub per_message: Duration,
    pub per_element: Duration,
    pub progress: ProgressMode,
}

impl LatencyModel {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(per_message: Duration, per_element: Duration, progress: ProgressMode) -> Self {
        LatencyModel {
            per_message,
            per_element,
            progress,
        }
    }

    /// Injected cost of one message of `len` values.
    pub fn cost(&self, len: usize) -> Duration {
        self.per_message + self.per_element * len as u32
    }
}

type Key = (usize, u32);

struct Message {
    payload: Vec<f64>,
    sent_at: Instant,
}

#[derive(Default)]
struct MailboxState {
    next_send: HashMap<Key, u64>,
    next_recv: HashMap<Key, u64>,
    messages: HashMap<(usize, u32, u64), Message>,
}

#[derive(Default)]
struct Mailbox {
    state: Mutex<MailboxState>,
    arrived: Condvar,
}

struct Inner {
    id: u64,
    model: LatencyModel,
    mailboxes: Vec<Mailbox>,
}

static NEXT_FABRIC_ID: AtomicU64 = AtomicU64::new(1);

/// Shared handle to a set of rank mailboxes. Cloning shares the mailboxes.
#[derive(Clone)]
pub struct Fabric {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Fabric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fabric")
            .field("id", &self.inner.id)
            .field("nranks", &self.nranks())
            .field("model", &self.inner.model)
            .finish()
    }
}

#[derive(Debug)]
enum HandleKind {
    Send,
    Recv {
        dst: usize,
        src: usize,
        tag: u32,
        seq: u64,
        expected_len: usize,
    },
}

/// A posted send or receive. Consumed by [`Fabric::wait_all`], so it can
/// complete only once.
#[must_use = "a posted message must be waited on"]
#[derive(Debug)]
pub struct MessageHandle {
    fabric: u64,
    kind: HandleKind,
}

impl MessageHandle {
    pub fn is_recv(&self) -> bool {
        matches!(self.kind, HandleKind::Recv { .. })
    }
}

/// Creates a fabric of `nranks` mailboxes. Values below one are treated as one.
pub fn create_fabric(nranks: usize, model: LatencyModel) -> Fabric {
    Fabric::new(nranks, model)
}

impl Fabric {
    pub fn new(nranks: usize, model: LatencyModel) -> Self {
        let nranks = nranks.max(1);
        Fabric {
            inner: Arc::new(Inner {
                id: NEXT_FABRIC_ID.fetch_add(1, Ordering::Relaxed),
                model,
                mailboxes: (0..nranks).map(|_| Mailbox::default()).collect(),
            }),
        }
    }

    pub fn nranks(&self) -> usize {
        self.inner.mailboxes.len()
    }

    pub fn model(&self) -> LatencyModel {
        self.inner.model
    }

    fn check_rank(&self, rank: usize) -> Result<(), FabricError> {
        if rank >= self.nranks() {
            return Err(FabricError::NoSuchRank {
                rank,
                nranks: self.nranks(),
            });
        }
        Ok(())
    }

    /// Deposits `payload` in `dst`'s mailbox. Sends are buffered, so the
    /// returned handle is already complete.
    pub fn post_send(
        &self,
        src: usize,
        dst: usize,
        payload: Vec<f64>,
        tag: u32,
    ) -> Result<MessageHandle, FabricError> {
        self.check_rank(src)?;
        self.check_rank(dst)?;
        let mailbox = &self.inner.mailboxes[dst];
        {
            let mut st = mailbox.state.lock().unwrap();
            let seq = st.next_send.entry((src, tag)).or_insert(0);
            let key = (src, tag, *seq);
            *seq += 1;
            st.messages.insert(
                key,
                Message {
                    payload,
                    sent_at: Instant::now(),
                },
            );
        }
        mailbox.arrived.notify_all();
        Ok(MessageHandle {
            fabric: self.inner.id,
            kind: HandleKind::Send,
        })
    }

    /// Registers a receive at `dst` for the next message from `src` with `tag`.
    /// Receives on the same `(src, dst, tag)` match sends in post order.
    pub fn post_recv(
        &self,
        dst: usize,
        src: usize,
        expected_len: usize,
        tag: u32,
    ) -> Result<MessageHandle, FabricError> {
        self.check_rank(src)?;
        self.check_rank(dst)?;
        let mut st = self.inner.mailboxes[dst].state.lock().unwrap();
        let seq = st.next_recv.entry((src, tag)).or_insert(0);
        let handle = MessageHandle {
            fabric: self.inner.id,
            kind: HandleKind::Recv {
                dst,
                src,
                tag,
                seq: *seq,
                expected_len,
            },
        };
        *seq += 1;
        Ok(handle)
    }

    /// Completes `handles` in order and returns the payload of every receive
    /// (`None` for sends).
    ///
    /// In active-wait-only mode each receive's injected cost is paid here
    /// after its message has arrived, serialized over the receives.
    pub fn wait_all(
        &self,
        handles: Vec<MessageHandle>,
    ) -> Result<Vec<Option<Vec<f64>>>, FabricError> {
        if handles.iter().any(|h| h.fabric != self.inner.id) {
            return Err(FabricError::ForeignHandle);
        }
        let model = self.inner.model;
        let mut out = Vec::with_capacity(handles.len());
        for h in handles {
            let HandleKind::Recv {
                dst,
                src,
                tag,
                seq,
                expected_len,
            } = h.kind
            else {
                out.push(None);
                continue;
            };
            let mailbox = &self.inner.mailboxes[dst];
            let msg = {
                let mut st = mailbox.state.lock().unwrap();
                loop {
                    if let Some(m) = st.messages.remove(&(src, tag, seq)) {
                        break m;
                    }
                    st = mailbox.arrived.wait(st).unwrap();
                }
            };
            let cost = model.cost(msg.payload.len());
            match model.progress {
                ProgressMode::ActiveWaitOnly => clock::sleep_for(cost),
                ProgressMode::Background => clock::sleep_until(msg.sent_at + cost),
            }
            if msg.payload.len() != expected_len {
                return Err(FabricError::LengthMismatch {
                    src,
                    dst,
                    tag,
                    expected: expected_len,
                    got: msg.payload.len(),
                });
            }
            out.push(Some(msg.payload));
        }
        Ok(out)
    }
}
