//! Simulation core: run configuration, the event vocabulary, the shared
//! world state a protocol acts on, and the driver that executes one
//! replication from t=0 to the horizon.
//!
//! The driver owns everything cross-cutting so protocol modules stay pure
//! state machines: packet generation and admission, collision tallying,
//! trace capture, and the end-of-run conservation and capacity checks. A
//! protocol plugs in through [`Mac`] and only ever reacts to events.

use thiserror::Error;

use crate::contention::ContentionWindow;
use crate::kernel::{EventHandle, KernelError, Scheduler};
use crate::medium::{
    Frame, FrameRecord, Medium, MediumError, NodeId, PhyConfig, TxId, TxOutcome,
};
use crate::metrics::{FateConflict, PacketFate, PacketRegistry, RunMetrics};
use crate::rng::{stream_id, RngStream, StreamPurpose};
use crate::time::{SimDuration, SimTime};
use crate::traffic::{Admission, ArrivalProcess, ClassQueues, Packet, PacketId, Priority};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ProtocolKind {
    /// Banded contention windows; whole packets, DATA then ACK.
    Bop,
    /// Fragmented normal bursts with interruptible gaps; RTS/CTS entry.
    Frog,
}

impl ProtocolKind {
    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::Bop => "bop",
            ProtocolKind::Frog => "frog",
        }
    }

    pub fn parse(s: &str) -> Option<ProtocolKind> {
        match s {
            "bop" => Some(ProtocolKind::Bop),
            "frog" => Some(ProtocolKind::Frog),
            _ => None,
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// On-air sizes of every frame type, in bytes.
#[derive(Clone, Copy, Debug)]
pub struct FrameSizes {
    pub data: u32,
    pub rts: u32,
    pub cts: u32,
    pub ack: u32,
    pub sack: u32,
    pub nack: u32,
    pub ack_p_frag: u32,
    pub frag_header: u32,
}

impl Default for FrameSizes {
    fn default() -> Self {
        FrameSizes {
            data: 127,
            rts: 5,
            cts: 5,
            ack: 5,
            sack: 6,
            nack: 6,
            ack_p_frag: 8,
            frag_header: 6,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub protocol: ProtocolKind,
    /// Stations in the star, sink included; `node_count - 1` traffic sources.
    pub node_count: u32,
    pub duration: SimDuration,
    /// Initial stretch excluded from every reported measurement. Packets
    /// created before this instant still occupy queues and airtime; they are
    /// simply not counted.
    pub warmup: SimDuration,
    pub seed: u64,
    /// Mean of the exponential urgent interarrival; zero disables the class.
    pub urgent_mean: SimDuration,
    /// Period of the constant-rate normal arrivals; zero disables the class.
    pub normal_period: SimDuration,
    pub payload_bytes: u32,
    /// Payload bytes per fragment (fragmenting protocol only).
    pub frag_payload: u32,
    /// Interruptible gap between consecutive fragments.
    pub t_int: SimDuration,
    pub slot: SimDuration,
    pub urgent_window: ContentionWindow,
    pub normal_window: ContentionWindow,
    pub max_retries: u32,
    pub queue_capacity: usize,
    pub frames: FrameSizes,
    pub phy: PhyConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            protocol: ProtocolKind::Bop,
            node_count: 2,
            duration: SimDuration::from_secs(1000),
            warmup: SimDuration::ZERO,
            seed: 1,
            urgent_mean: SimDuration::from_secs(2),
            normal_period: SimDuration::from_ms(200),
            payload_bytes: 121,
            frag_payload: 16,
            t_int: SimDuration::from_us(600),
            slot: SimDuration::from_us(320),
            urgent_window: ContentionWindow::new(0, 10),
            normal_window: ContentionWindow::new(11, 20),
            max_retries: 5,
            queue_capacity: 50,
            frames: FrameSizes::default(),
            phy: PhyConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn sources(&self) -> u32 {
        self.node_count - 1
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.node_count < 2 {
            return Err("node_count must be at least 2 (one source plus the sink)".into());
        }
        if self.duration.as_ns() == 0 {
            return Err("duration must be positive".into());
        }
        if self.warmup.as_ns() >= self.duration.as_ns() {
            return Err("warmup must be shorter than the run".into());
        }
        if self.payload_bytes == 0 {
            return Err("payload_bytes must be positive".into());
        }
        if self.frag_payload < 2 || self.frag_payload > self.payload_bytes {
            return Err(format!(
                "frag_payload must be in 2..={}",
                self.payload_bytes
            ));
        }
        if self.slot.as_ns() == 0 {
            return Err("slot must be positive".into());
        }
        if self.urgent_window.hi >= self.normal_window.lo {
            return Err("contention windows must not overlap (urgent strictly below normal)".into());
        }
        if self.queue_capacity == 0 {
            return Err("queue_capacity must be positive".into());
        }
        if self.frames.frag_header + self.frag_payload > self.frames.data {
            return Err("fragment frames must not exceed the whole-data frame size".into());
        }
        // Reassembly state is a 64-bit mask per packet.
        if self.payload_bytes.div_ceil(self.frag_payload) > 64 {
            return Err("payload would split into more than 64 fragments".into());
        }
        Ok(())
    }

    pub fn window_for(&self, priority: Priority) -> ContentionWindow {
        match priority {
            Priority::Urgent => self.urgent_window,
            Priority::Normal => self.normal_window,
        }
    }

    pub fn arrival_law(&self, priority: Priority) -> ArrivalProcess {
        match priority {
            Priority::Urgent => ArrivalProcess::poisson(self.urgent_mean),
            Priority::Normal => ArrivalProcess::periodic(self.normal_period),
        }
    }
}

/// Simulator failure. `Internal` means the engine misbehaved (scheduling in
/// the past, completing unknown transmissions); `SelfCheck` means an
/// always-on invariant over the results was violated.
#[derive(Debug, Error)]
pub enum SimFault {
    #[error("internal simulator fault: {0}")]
    Internal(String),
    #[error("self-check violation: {0}")]
    SelfCheck(String),
}

impl From<KernelError> for SimFault {
    fn from(e: KernelError) -> Self {
        SimFault::Internal(e.to_string())
    }
}

impl From<MediumError> for SimFault {
    fn from(e: MediumError) -> Self {
        match e {
            MediumError::DeliveredOverlap => SimFault::SelfCheck(e.to_string()),
            _ => SimFault::Internal(e.to_string()),
        }
    }
}

impl From<FateConflict> for SimFault {
    fn from(e: FateConflict) -> Self {
        SimFault::Internal(format!(
            "packet {:?} cannot move from {:?} to {:?}",
            e.id, e.previous, e.requested
        ))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TimerKind {
    AckTimeout,
    CtsTimeout,
    SackTimeout,
    ApfTimeout,
    PauseResume,
    PauseRts,
    OwnerDecision,
}

impl TimerKind {
    pub fn label(self) -> &'static str {
        match self {
            TimerKind::AckTimeout => "ack_timeout",
            TimerKind::CtsTimeout => "cts_timeout",
            TimerKind::SackTimeout => "sack_timeout",
            TimerKind::ApfTimeout => "apf_timeout",
            TimerKind::PauseResume => "pause_resume",
            TimerKind::PauseRts => "pause_rts",
            TimerKind::OwnerDecision => "owner_decision",
        }
    }
}

/// Everything that can sit in the event queue.
#[derive(Clone, Copy, Debug)]
pub enum Action {
    Arrival { node: NodeId, priority: Priority },
    SlotTick { node: NodeId },
    TxEnd { tx: TxId },
    Timer { node: NodeId, kind: TimerKind },
}

/// One captured event, for the trace output.
#[derive(Clone, Debug)]
pub struct TraceLine {
    pub time_ns: u64,
    pub seq: u64,
    pub target: String,
    pub action: String,
}

struct TraceBuf {
    limit: u64,
    lines: Vec<TraceLine>,
}

struct NodeRngs {
    backoff: RngStream,
    urgent_arrival: RngStream,
    normal_jitter: RngStream,
    pause: RngStream,
}

impl NodeRngs {
    fn new(seed: u64, node: u32) -> Self {
        NodeRngs {
            backoff: RngStream::new(seed, stream_id(node, StreamPurpose::Backoff)),
            urgent_arrival: RngStream::new(seed, stream_id(node, StreamPurpose::UrgentArrival)),
            normal_jitter: RngStream::new(seed, stream_id(node, StreamPurpose::NormalJitter)),
            pause: RngStream::new(seed, stream_id(node, StreamPurpose::PauseRedraw)),
        }
    }

    fn get(&mut self, purpose: StreamPurpose) -> &mut RngStream {
        match purpose {
            StreamPurpose::Backoff => &mut self.backoff,
            StreamPurpose::UrgentArrival => &mut self.urgent_arrival,
            StreamPurpose::NormalJitter => &mut self.normal_jitter,
            StreamPurpose::PauseRedraw => &mut self.pause,
        }
    }
}

/// Shared state the driver and the protocol both touch.
pub struct World {
    pub cfg: SimConfig,
    pub sched: Scheduler<Action>,
    pub medium: Medium,
    pub metrics: RunMetrics,
    pub registry: PacketRegistry,
    queues: Vec<ClassQueues>,
    rngs: Vec<NodeRngs>,
    trace: Option<TraceBuf>,
    events_dispatched: u64,
}

impl World {
    fn new(cfg: SimConfig, opts: &RunOptions) -> Result<World, SimFault> {
        let mut w = World {
            sched: Scheduler::new(),
            medium: Medium::new(cfg.phy, opts.keep_frame_log),
            // Rates are over the measured window, not the whole run.
            metrics: RunMetrics::new(cfg.duration - cfg.warmup),
            registry: PacketRegistry::new(),
            queues: (0..cfg.node_count)
                .map(|_| ClassQueues::new(cfg.queue_capacity))
                .collect(),
            rngs: (0..cfg.node_count)
                .map(|n| NodeRngs::new(cfg.seed, n))
                .collect(),
            trace: opts.trace_limit.map(|limit| TraceBuf {
                limit,
                lines: Vec::new(),
            }),
            events_dispatched: 0,
            cfg,
        };
        for node in 1..w.cfg.node_count {
            for priority in Priority::ALL {
                let law = w.cfg.arrival_law(priority);
                let rng = w.rng(NodeId(node), arrival_purpose(priority));
                if let Some(gap) = law.first_gap(rng) {
                    w.sched
                        .schedule(SimTime::ZERO + gap, Action::Arrival {
                            node: NodeId(node),
                            priority,
                        })?;
                }
            }
        }
        Ok(w)
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn after(&mut self, delay: SimDuration, action: Action) -> Result<EventHandle, SimFault> {
        let at = self.sched.now() + delay;
        Ok(self.sched.schedule(at, action)?)
    }

    pub fn at(&mut self, at: SimTime, action: Action) -> Result<EventHandle, SimFault> {
        Ok(self.sched.schedule(at, action)?)
    }

    pub fn cancel(&mut self, handle: EventHandle) {
        self.sched.cancel(handle);
    }

    /// Puts a frame on air now and schedules its completion. Returns the end
    /// instant.
    pub fn transmit(&mut self, frame: Frame) -> Result<SimTime, SimFault> {
        let now = self.sched.now();
        let (tx, end) = self.medium.begin(frame, now)?;
        self.sched.schedule(end, Action::TxEnd { tx })?;
        Ok(end)
    }

    pub fn queue(&mut self, node: NodeId) -> &mut ClassQueues {
        &mut self.queues[node.0 as usize]
    }

    pub fn rng(&mut self, node: NodeId, purpose: StreamPurpose) -> &mut RngStream {
        self.rngs[node.0 as usize].get(purpose)
    }

    pub fn mark_fate(&mut self, id: PacketId, fate: PacketFate) -> Result<(), SimFault> {
        self.registry.mark(id, fate)?;
        Ok(())
    }

    /// First instant whose packets and frames count toward the report.
    pub fn measure_from(&self) -> SimTime {
        SimTime::ZERO + self.cfg.warmup
    }

    fn counted(&self, created: SimTime) -> bool {
        created >= self.measure_from()
    }

    /// Terminal success: one registry fate plus, when the packet falls in the
    /// measured window, the delivery tallies.
    pub fn deliver(&mut self, packet: &Packet, delay: SimDuration) -> Result<(), SimFault> {
        self.registry.mark(packet.id, PacketFate::Delivered)?;
        if self.counted(packet.created) {
            self.metrics
                .record_delivered(packet.priority, delay, packet.payload_bytes);
        }
        Ok(())
    }

    /// Terminal failure after exhausting retransmissions.
    pub fn drop_retry(&mut self, packet: &Packet) -> Result<(), SimFault> {
        self.registry.mark(packet.id, PacketFate::DroppedRetryLimit)?;
        if self.counted(packet.created) {
            self.metrics.record_retry_drop(packet.priority);
        }
        Ok(())
    }

    fn trace_on(&self) -> bool {
        match &self.trace {
            Some(buf) => (buf.lines.len() as u64) < buf.limit,
            None => false,
        }
    }

    fn trace_push(&mut self, time: SimTime, seq: u64, target: String, action: String) {
        if let Some(buf) = self.trace.as_mut() {
            if (buf.lines.len() as u64) < buf.limit {
                buf.lines.push(TraceLine {
                    time_ns: time.as_ns(),
                    seq,
                    target,
                    action,
                });
            }
        }
    }
}

fn arrival_purpose(priority: Priority) -> StreamPurpose {
    match priority {
        Priority::Urgent => StreamPurpose::UrgentArrival,
        Priority::Normal => StreamPurpose::NormalJitter,
    }
}

/// Protocol hooks. Implementations keep all per-node state; the driver never
/// inspects it except through `residual`.
pub trait Mac {
    /// A packet was admitted to `node`'s class queue.
    fn on_packet_queued(&mut self, w: &mut World, node: NodeId, packet: Packet)
        -> Result<(), SimFault>;
    fn on_slot_tick(&mut self, w: &mut World, node: NodeId) -> Result<(), SimFault>;
    fn on_timer(&mut self, w: &mut World, node: NodeId, kind: TimerKind) -> Result<(), SimFault>;
    /// Every frame completion, delivered or destroyed, from every station.
    fn on_tx_end(&mut self, w: &mut World, out: &TxOutcome) -> Result<(), SimFault>;
    /// The channel just went idle (dispatched after the completion handler).
    fn on_channel_idle(&mut self, w: &mut World) -> Result<(), SimFault>;
    /// Packets popped from queues and still held in protocol state, for
    /// shutdown conservation. Must exclude packets with a terminal fate.
    fn residual(&self, w: &World) -> Vec<PacketId>;
}

#[derive(Clone, Copy, Default, Debug)]
pub struct RunOptions {
    pub keep_frame_log: bool,
    /// Capture the first N dispatched events.
    pub trace_limit: Option<u64>,
}

pub struct RunOutcome {
    pub metrics: RunMetrics,
    /// Per-packet record of creation times and terminal fates, so callers can
    /// audit the aggregated tallies packet by packet.
    pub registry: PacketRegistry,
    pub events_dispatched: u64,
    /// Urgent frames that began strictly inside normal payload airtime.
    /// Always zero; re-checked by the driver at shutdown.
    pub urgent_break_ins: u64,
    pub frame_log: Option<Vec<FrameRecord>>,
    pub trace: Vec<TraceLine>,
}

/// Runs one replication of the configured protocol.
pub fn run(cfg: &SimConfig, opts: &RunOptions) -> Result<RunOutcome, SimFault> {
    assert!(
        cfg.validate().is_ok(),
        "configuration must be validated before running"
    );
    let mut w = World::new(cfg.clone(), opts)?;
    match cfg.protocol {
        ProtocolKind::Bop => {
            let mut mac = crate::bop::BopMac::new(&w.cfg);
            drive(&mut w, &mut mac)
        }
        ProtocolKind::Frog => {
            let mut mac = crate::frog::FrogMac::new(&w.cfg);
            drive(&mut w, &mut mac)
        }
    }
}

fn drive(w: &mut World, mac: &mut dyn Mac) -> Result<RunOutcome, SimFault> {
    let horizon = SimTime::ZERO + w.cfg.duration;
    while let Some((t, seq, action)) = w.sched.pop_due(horizon) {
        w.events_dispatched += 1;
        match action {
            Action::Arrival { node, priority } => {
                if w.trace_on() {
                    w.trace_push(t, seq, node.to_string(), format!("arrival {priority}"));
                }
                let packet = w.registry.register(priority, t, w.cfg.payload_bytes);
                if w.counted(t) {
                    w.metrics.record_generated(priority);
                }
                let law = w.cfg.arrival_law(priority);
                let gap = law.next_gap(w.rng(node, arrival_purpose(priority)));
                if let Some(gap) = gap {
                    w.sched
                        .schedule(t + gap, Action::Arrival { node, priority })?;
                }
                match w.queue(node).offer(packet) {
                    Admission::Queued => mac.on_packet_queued(w, node, packet)?,
                    Admission::Rejected => {
                        w.mark_fate(packet.id, PacketFate::DroppedQueueFull)?;
                        if w.counted(t) {
                            w.metrics.record_queue_drop(priority);
                        }
                    }
                }
            }
            Action::SlotTick { node } => {
                if w.trace_on() {
                    w.trace_push(t, seq, node.to_string(), "slot_tick".into());
                }
                mac.on_slot_tick(w, node)?;
            }
            Action::Timer { node, kind } => {
                if w.trace_on() {
                    w.trace_push(t, seq, node.to_string(), format!("timer {}", kind.label()));
                }
                mac.on_timer(w, node, kind)?;
            }
            Action::TxEnd { tx } => {
                let out = w.medium.complete(tx, t)?;
                if w.trace_on() {
                    let verdict = if out.delivered { "delivered" } else { "lost" };
                    w.trace_push(
                        t,
                        seq,
                        out.frame.src.to_string(),
                        format!("tx_end {} {}", out.frame.kind.label(), verdict),
                    );
                }
                if !out.delivered && w.counted(t) {
                    w.metrics.record_collision(out.frame.priority);
                }
                mac.on_tx_end(w, &out)?;
                if !w.medium.busy_at(t) {
                    mac.on_channel_idle(w)?;
                }
            }
        }
    }
    w.sched.advance_to(horizon);

    let mut residual: Vec<PacketId> = Vec::new();
    for node in 0..w.cfg.node_count {
        for packet in w.queue(NodeId(node)).drain_all() {
            residual.push(packet.id);
        }
    }
    residual.extend(mac.residual(w));
    w.registry
        .check_conservation(&w.metrics, &residual, w.measure_from())
        .map_err(SimFault::SelfCheck)?;

    let break_ins = w.medium.urgent_starts_inside_normal_data();
    if break_ins > 0 {
        return Err(SimFault::SelfCheck(format!(
            "{break_ins} urgent frames started inside normal payload airtime"
        )));
    }
    let capacity = w.medium.phy().capacity_bytes_per_sec();
    let total = w.metrics.total_throughput_bps();
    if total > capacity * (1.0 + 1e-9) {
        return Err(SimFault::SelfCheck(format!(
            "delivered throughput {total:.3} B/s exceeds channel capacity {capacity:.3} B/s"
        )));
    }

    Ok(RunOutcome {
        metrics: w.metrics.clone(),
        registry: std::mem::take(&mut w.registry),
        events_dispatched: w.events_dispatched,
        urgent_break_ins: break_ins,
        frame_log: w.medium.take_frame_log(),
        trace: w.trace.take().map(|b| b.lines).unwrap_or_default(),
    })
}
