//! Deterministic discrete-event core.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is assigned when the
//! event is scheduled, so two runs that schedule the same events in the same
//! order process them identically. Every entity has a bounded inbox; going
//! over capacity is an error rather than a drop.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha1::{Digest, Sha1};
use thiserror::Error;

/// Default per-entity inbox capacity.
pub const DEFAULT_INBOX_CAPACITY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Short, stable name of a message variant, used in traces.
pub trait Payload {
    fn kind(&self) -> &'static str;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<P> {
    pub fire_at: u64,
    pub seq: u64,
    pub target: EntityId,
    pub payload: P,
}

struct Queued<P>(SimEvent<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<P> Eq for Queued<P> {}
impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<P> Ord for Queued<P> {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("inbox of {target} full ({capacity} messages) at t={time}ms")]
    BufferOverflow { target: EntityId, capacity: usize, time: u64 },
}

#[derive(Debug, Error)]
pub enum RunError<E> {
    #[error("handler for {target} failed on '{kind}' at t={time}ms: {source}")]
    Handler {
        target: EntityId,
        kind: &'static str,
        time: u64,
        #[source]
        source: E,
    },
}

/// Receives events from [`Engine::run`].
pub trait Handler<P> {
    type Error;
    fn handle(&mut self, engine: &mut Engine<P>, event: SimEvent<P>) -> Result<(), Self::Error>;
}

impl<P, E, F> Handler<P> for F
where
    F: FnMut(&mut Engine<P>, SimEvent<P>) -> Result<(), E>,
{
    type Error = E;
    fn handle(&mut self, engine: &mut Engine<P>, event: SimEvent<P>) -> Result<(), E> {
        self(engine, event)
    }
}

/// Running digest of processed events plus, optionally, the lines themselves.
#[derive(Clone)]
struct Trace {
    digest: Sha1,
    lines: Option<Vec<String>>,
}

pub struct Engine<P> {
    now: u64,
    next_seq: u64,
    queue: BinaryHeap<Queued<P>>,
    pending: HashMap<EntityId, usize>,
    capacity: usize,
    processed: u64,
    trace: Trace,
}

impl<P: Payload> Default for Engine<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: Payload> Engine<P> {
    pub fn new() -> Self {
        Self::with_capacity(DEFAULT_INBOX_CAPACITY)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Engine {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            pending: HashMap::new(),
            capacity,
            processed: 0,
            trace: Trace {
                digest: Sha1::new(),
                lines: None,
            },
        }
    }

    /// Keep every trace line in memory (see [`trace_lines`](Self::trace_lines)).
    pub fn record_trace(&mut self) {
        self.trace.lines.get_or_insert_with(Vec::new);
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn pending_for(&self, target: EntityId) -> usize {
        self.pending.get(&target).copied().unwrap_or(0)
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.queue.peek().map(|q| q.0.fire_at)
    }

    /// Enqueues `payload` for `target` at `now + delay_ms`.
    pub fn schedule(&mut self, delay_ms: i64, target: EntityId, payload: P) -> Result<u64, EngineError> {
        if delay_ms < 0 {
            return Err(EngineError::InvalidArgument(format!("negative delay {delay_ms}ms")));
        }
        let pending = self.pending.entry(target).or_insert(0);
        if *pending >= self.capacity {
            return Err(EngineError::BufferOverflow {
                target,
                capacity: self.capacity,
                time: self.now,
            });
        }
        *pending += 1;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Queued(SimEvent {
            fire_at: self.now + delay_ms as u64,
            seq,
            target,
            payload,
        }));
        Ok(seq)
    }

    fn pop(&mut self) -> SimEvent<P> {
        let ev = self.queue.pop().expect("pop on empty queue").0;
        debug_assert!(ev.fire_at >= self.now);
        self.now = ev.fire_at;
        if let Some(p) = self.pending.get_mut(&ev.target) {
            *p -= 1;
        }
        self.processed += 1;
        let line = format!("{}\t{}\t{}\t{}", ev.fire_at, ev.seq, ev.target, ev.payload.kind());
        self.trace.digest.update(line.as_bytes());
        self.trace.digest.update(b"\n");
        if let Some(lines) = &mut self.trace.lines {
            lines.push(line);
        }
        ev
    }

    /// Processes the next event, if any. Returns whether one was processed.
    pub fn step<H: Handler<P>>(&mut self, handler: &mut H) -> Result<bool, RunError<H::Error>> {
        if self.queue.is_empty() {
            return Ok(false);
        }
        let ev = self.pop();
        let (target, kind, time) = (ev.target, ev.payload.kind(), ev.fire_at);
        handler
            .handle(self, ev)
            .map_err(|source| RunError::Handler { target, kind, time, source })?;
        Ok(true)
    }

    /// Processes events in order until the queue is empty or the next event
    /// lies beyond `until_ms`, then advances the clock to `until_ms`. Returns
    /// the number of events processed.
    pub fn run<H: Handler<P>>(&mut self, until_ms: Option<u64>, handler: &mut H) -> Result<u64, RunError<H::Error>> {
        let mut count = 0;
        while let Some(t) = self.peek_time() {
            if until_ms.is_some_and(|u| t > u) {
                break;
            }
            self.step(handler)?;
            count += 1;
        }
        if let Some(u) = until_ms {
            self.now = self.now.max(u);
        }
        Ok(count)
    }

    /// Hex SHA-1 over the trace lines of every processed event.
    pub fn trace_digest(&self) -> String {
        hex::encode(self.trace.digest.clone().finalize())
    }

    pub fn trace_lines(&self) -> Option<&[String]> {
        self.trace.lines.as_deref()
    }
}

/// A named, seeded random stream. Equal `(seed, label)` pairs give equal draws.
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        let mut h = Sha1::new();
        h.update(seed.to_le_bytes());
        h.update(label.as_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 32];
        key[..20].copy_from_slice(&digest);
        RngStream {
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// A draw from `[lo, hi)`, or exactly `lo` when `lo == hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, EngineError> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(EngineError::InvalidArgument(format!("empty interval [{lo}, {hi})")));
        }
        if lo == hi {
            return Ok(lo);
        }
        Ok(self.rng.gen_range(lo..hi))
    }

    /// Integer draw from `[lo, hi]`.
    pub fn uniform_u64(&mut self, lo: u64, hi: u64) -> Result<u64, EngineError> {
        if lo > hi {
            return Err(EngineError::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(self.rng.gen_range(lo..=hi))
    }
}
