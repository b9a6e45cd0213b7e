//! Discrete-event simulation of paced flows sharing one bottleneck.
//!
//! Each flow paces segments into a finite FIFO buffer drained at the
//! bottleneck rate. A dequeued segment that completes a packet produces an ACK
//! that returns after the flow's base RTT plus a truncated-exponential noise
//! sample; its RTT feeds the owning flow's controller. Drops are reported to
//! the sender one base RTT after they happen.
//!
//! Randomness comes from ChaCha8, seeded from [`NoiseSpec::seed`] with one
//! stream per flow id, so a `(scenario, seed)` pair reproduces a trace bit for
//! bit on every platform.

mod noise;
mod queue;
mod trace;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Controller, ControllerConfig, ControllerError, RttObservation};

pub use noise::{flow_rng, sample_ack_noise, NoiseSpec};
pub use queue::{FifoLink, QueueEvent, StepOutput};
pub use trace::{read_csv, write_csv, TraceError, TraceRecord, TraceSink, TRACE_HEADER};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation needs at least one flow")]
    NoFlows,
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("invalid flow {flow_id}: {msg}")]
    InvalidFlow { flow_id: u32, msg: String },
    #[error("duplicate flow id {0}")]
    DuplicateFlow(u32),
    #[error("invalid noise spec")]
    InvalidNoise,
    #[error("flow {flow_id}: {source}")]
    Controller {
        flow_id: u32,
        #[source]
        source: ControllerError,
    },
}

/// Return path for ACKs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AckPath {
    /// Pure delay.
    #[default]
    Infinite,
    /// ACKs cross a second FIFO (rate in ACKs/s) before the return delay.
    Queue { rate: f64, capacity: u32 },
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    /// Packets/s.
    pub bottleneck_rate: f64,
    /// Packets.
    pub buffer_capacity: u32,
    /// Base RTT of the path, seconds.
    pub propagation_rtt: f64,
    #[serde(default)]
    pub ack_path: AckPath,
    /// Each packet is paced, queued and served as this many equal segments;
    /// the receiver acknowledges the last segment of every packet.
    #[serde(default = "one")]
    pub segments_per_packet: u32,
}

impl LinkSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidLink(m.to_string()));
        if !(self.bottleneck_rate > 0.0 && self.bottleneck_rate.is_finite()) {
            return bad("bottleneck_rate must be positive");
        }
        if self.buffer_capacity < 1 {
            return bad("buffer_capacity must be at least 1");
        }
        if !(self.propagation_rtt > 0.0) {
            return bad("propagation_rtt must be positive");
        }
        if self.segments_per_packet < 1 {
            return bad("segments_per_packet must be at least 1");
        }
        if let AckPath::Queue { rate, capacity } = self.ack_path {
            if !(rate > 0.0) || capacity < 1 {
                return bad("ack queue needs a positive rate and capacity");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub flow_id: u32,
    /// Propagation RTT of this flow, seconds.
    pub base_rtt: f64,
    /// Packets/s; `None` is unbounded.
    #[serde(default)]
    pub rate_cap: Option<f64>,
    /// Packets/s, must be positive so the flow keeps sending.
    pub rate_floor: f64,
    /// Starting pacing rate; defaults to the floor.
    #[serde(default)]
    pub initial_rate: Option<f64>,
    #[serde(default)]
    pub start_time: f64,
    #[serde(default)]
    pub controller: ControllerConfig,
}

impl FlowSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| {
            Err(SimError::InvalidFlow {
                flow_id: self.flow_id,
                msg: msg.to_string(),
            })
        };
        if !(self.base_rtt > 0.0) {
            return bad("base_rtt must be positive");
        }
        if !(self.rate_floor > 0.0 && self.rate_floor.is_finite()) {
            return bad("rate_floor must be positive");
        }
        if let Some(cap) = self.rate_cap {
            if !(cap >= self.rate_floor) {
                return bad("rate_cap must not be below rate_floor");
            }
        }
        if !(self.start_time >= 0.0) {
            return bad("start_time must be non-negative");
        }
        let init = self.initial_rate();
        if !(init >= self.rate_floor && init <= self.rate_cap.unwrap_or(f64::INFINITY)) {
            return bad("initial_rate must lie within [rate_floor, rate_cap]");
        }
        self.effective_controller()
            .validate()
            .map_err(|source| SimError::Controller {
                flow_id: self.flow_id,
                source,
            })
    }

    pub fn initial_rate(&self) -> f64 {
        self.initial_rate.unwrap_or(self.rate_floor)
    }

    /// The controller config with the flow's cap and floor installed as its
    /// rate bounds. A cap equal to the floor pins the rate.
    pub fn effective_controller(&self) -> ControllerConfig {
        let mut cfg = self.controller.clone();
        cfg.min_rate = self.rate_floor;
        cfg.max_rate = self.rate_cap.map(|cap| {
            if cap > self.rate_floor {
                cap
            } else {
                // Strictly above the floor keeps the config valid.
                self.rate_floor * (1.0 + f64::EPSILON)
            }
        });
        cfg
    }
}

/// Per-flow segment accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowCounters {
    pub sent: u64,
    pub lost: u64,
    /// Left the bottleneck.
    pub delivered: u64,
    pub acks: u64,
    pub acks_dropped: u64,
    /// ACKs the controller refused (non-advancing timestamps).
    pub acks_rejected: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub duration: f64,
    pub segments_per_packet: u32,
    pub flows: Vec<(u32, FlowCounters)>,
    /// Segments still waiting at the bottleneck when the run stopped.
    pub queued_at_end: u64,
    /// ACKs generated but not yet delivered when the run stopped, including
    /// any waiting in a finite ACK queue.
    pub acks_in_flight_at_end: u64,
    pub events_processed: u64,
}

impl SimSummary {
    pub fn total(&self) -> FlowCounters {
        self.flows.iter().fold(FlowCounters::default(), |mut acc, (_, c)| {
            acc.sent += c.sent;
            acc.lost += c.lost;
            acc.delivered += c.delivered;
            acc.acks += c.acks;
            acc.acks_dropped += c.acks_dropped;
            acc.acks_rejected += c.acks_rejected;
            acc
        })
    }

    pub fn loss_fraction(&self) -> f64 {
        let t = self.total();
        if t.sent == 0 {
            0.0
        } else {
            t.lost as f64 / t.sent as f64
        }
    }

    pub fn counters(&self, flow_id: u32) -> Option<FlowCounters> {
        self.flows.iter().find(|(id, _)| *id == flow_id).map(|(_, c)| *c)
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: Vec<TraceRecord>,
    pub summary: SimSummary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    flow: usize,
    sent_at: f64,
    carries_ack: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ack {
    flow: usize,
    sent_at: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EventKind {
    Send { flow: usize },
    Dequeue,
    AckDequeue,
    AckArrive(Ack),
    LossSignal { flow: usize },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed: BinaryHeap pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct FlowState {
    spec: FlowSpec,
    controller: Controller,
    rng: ChaCha8Rng,
    segments_sent: u64,
    counters: FlowCounters,
}

struct EventQueue {
    heap: BinaryHeap<Event>,
    seq: u64,
    horizon: f64,
}

impl EventQueue {
    fn push(&mut self, time: f64, kind: EventKind) {
        if time > self.horizon {
            return;
        }
        self.seq += 1;
        self.heap.push(Event {
            time,
            seq: self.seq,
            kind,
        });
    }
}

/// Runs and collects the full trace.
pub fn run_simulation(
    link: &LinkSpec,
    flows: &[FlowSpec],
    duration: f64,
    noise: &NoiseSpec,
) -> Result<SimOutput, SimError> {
    let mut trace = Vec::new();
    let summary = run_simulation_with(link, flows, duration, noise, &mut trace)?;
    Ok(SimOutput { trace, summary })
}

/// Runs and streams records into `sink`.
pub fn run_simulation_with<S: TraceSink + ?Sized>(
    link: &LinkSpec,
    flows: &[FlowSpec],
    duration: f64,
    noise: &NoiseSpec,
    sink: &mut S,
) -> Result<SimSummary, SimError> {
    if flows.is_empty() {
        return Err(SimError::NoFlows);
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(SimError::NonPositiveDuration(duration));
    }
    link.validate()?;
    if !noise.is_valid() {
        return Err(SimError::InvalidNoise);
    }
    for (i, f) in flows.iter().enumerate() {
        f.validate()?;
        if flows[..i].iter().any(|g| g.flow_id == f.flow_id) {
            return Err(SimError::DuplicateFlow(f.flow_id));
        }
    }

    let seg = link.segments_per_packet;
    let seg_f = f64::from(seg);
    let mut states = flows
        .iter()
        .map(|f| {
            let controller =
                Controller::new(f.effective_controller(), f.initial_rate(), f.base_rtt, f.start_time)
                    .map_err(|source| SimError::Controller {
                        flow_id: f.flow_id,
                        source,
                    })?;
            Ok(FlowState {
                spec: f.clone(),
                controller,
                rng: flow_rng(noise.seed, u64::from(f.flow_id)),
                segments_sent: 0,
                counters: FlowCounters::default(),
            })
        })
        .collect::<Result<Vec<_>, SimError>>()?;

    let capacity = link.buffer_capacity as usize * seg as usize;
    let mut bottleneck: FifoLink<Segment> = FifoLink::new(link.bottleneck_rate * seg_f, capacity);
    let mut ack_queue: Option<FifoLink<Ack>> = match link.ack_path {
        AckPath::Infinite => None,
        AckPath::Queue { rate, capacity } => Some(FifoLink::new(rate, capacity as usize)),
    };

    let mut events = EventQueue {
        heap: BinaryHeap::new(),
        seq: 0,
        horizon: duration,
    };
    for (i, f) in flows.iter().enumerate() {
        events.push(f.start_time, EventKind::Send { flow: i });
    }

    let mut processed = 0u64;
    let mut last_key = (f64::NEG_INFINITY, 0u64);
    let mut pending_acks = 0u64;

    while let Some(ev) = events.heap.pop() {
        debug_assert!(
            (ev.time, ev.seq) > last_key,
            "event order violated: {:?} after {:?}",
            (ev.time, ev.seq),
            last_key
        );
        last_key = (ev.time, ev.seq);
        processed += 1;
        let now = ev.time;
        match ev.kind {
            EventKind::Send { flow } => {
                let st = &mut states[flow];
                st.segments_sent += 1;
                st.counters.sent += 1;
                let segment = Segment {
                    flow,
                    sent_at: now,
                    carries_ack: st.segments_sent % u64::from(seg) == 0,
                };
                let rate = st.controller.rate();
                events.push(now + 1.0 / (rate * seg_f), EventKind::Send { flow });
                let out = bottleneck.step(now, QueueEvent::Enqueue(segment));
                if let Some(t) = out.next_dequeue {
                    events.push(t, EventKind::Dequeue);
                }
                if out.dropped.is_some() {
                    let st = &mut states[flow];
                    st.counters.lost += 1;
                    sink.record(&TraceRecord {
                        time: now,
                        flow_id: st.spec.flow_id,
                        pacing_rate: rate,
                        rtt: None,
                        queue_depth: bottleneck.len() as f64 / seg_f,
                        loss: true,
                        probe: st.controller.state().probe_phase(),
                    });
                    events.push(now + st.spec.base_rtt, EventKind::LossSignal { flow });
                }
            }
            EventKind::Dequeue => {
                let out = bottleneck.step(now, QueueEvent::Dequeue);
                if let Some(t) = out.next_dequeue {
                    events.push(t, EventKind::Dequeue);
                }
                if let Some(segment) = out.departed {
                    let st = &mut states[segment.flow];
                    st.counters.delivered += 1;
                    if segment.carries_ack {
                        let ack = Ack {
                            flow: segment.flow,
                            sent_at: segment.sent_at,
                        };
                        pending_acks += 1;
                        match ack_queue.as_mut() {
                            None => {
                                let delay = st.spec.base_rtt + sample_ack_noise(noise, st.spec.base_rtt, &mut st.rng);
                                events.push(now + delay, EventKind::AckArrive(ack));
                            }
                            Some(q) => {
                                let out = q.step(now, QueueEvent::Enqueue(ack));
                                if let Some(t) = out.next_dequeue {
                                    events.push(t, EventKind::AckDequeue);
                                }
                                if out.dropped.is_some() {
                                    pending_acks -= 1;
                                    st.counters.acks_dropped += 1;
                                }
                            }
                        }
                    }
                }
            }
            EventKind::AckDequeue => {
                let q = ack_queue.as_mut().expect("ack queue configured");
                let out = q.step(now, QueueEvent::Dequeue);
                if let Some(t) = out.next_dequeue {
                    events.push(t, EventKind::AckDequeue);
                }
                if let Some(ack) = out.departed {
                    let st = &mut states[ack.flow];
                    let delay = st.spec.base_rtt + sample_ack_noise(noise, st.spec.base_rtt, &mut st.rng);
                    events.push(now + delay, EventKind::AckArrive(ack));
                }
            }
            EventKind::AckArrive(ack) => {
                pending_acks -= 1;
                let depth = bottleneck.len() as f64 / seg_f;
                let st = &mut states[ack.flow];
                let rtt = now - ack.sent_at;
                st.counters.acks += 1;
                match st.controller.on_ack(RttObservation {
                    rtt,
                    now,
                    loss: false,
                }) {
                    Ok(decision) => sink.record(&TraceRecord {
                        time: now,
                        flow_id: st.spec.flow_id,
                        pacing_rate: decision.pacing_rate,
                        rtt: Some(rtt),
                        queue_depth: depth,
                        loss: false,
                        probe: decision.probe_phase,
                    }),
                    Err(_) => st.counters.acks_rejected += 1,
                }
            }
            EventKind::LossSignal { flow } => {
                states[flow].controller.on_loss(now);
            }
        }
    }

    let queued = bottleneck.len() as u64;
    Ok(SimSummary {
        duration,
        segments_per_packet: seg,
        flows: states
            .iter()
            .map(|s| (s.spec.flow_id, s.counters))
            .collect(),
        queued_at_end: queued,
        acks_in_flight_at_end: pending_acks,
        events_processed: processed,
    })
}
