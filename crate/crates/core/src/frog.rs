//! Fragmenting protocol: normal packets are cut into small fragments sent as
//! an exclusive burst with a fixed interruptible gap between fragments, so an
//! urgent packet never waits for more than one fragment of airtime. Urgent
//! packets use an RTS/CTS handshake both for ordinary channel access and for
//! breaking into a burst gap.
//!
//! Channel life cycle of a normal packet: contend (own window), RTS, CTS,
//! fragments separated by pauses, then a selective acknowledgment from the
//! sink when the last piece lands. During a pause, urgent contenders send an
//! RTS exactly one slot after the gap opens; a clean RTS suspends the burst
//! for one urgent transaction (CTS, DATA, ACK, then a fragment-status frame
//! to the interrupted owner), after which the reservation dissolves and
//! everyone re-contends, urgent windows first. A collided pause RTS makes
//! each loser redraw a pause counter; the owner resumes the moment the noise
//! ends. Urgent delivery is stamped when the DATA frame reaches the sink;
//! normal delivery when the fragment completing reassembly does.

use std::collections::HashMap;

use crate::contention::{Backoff, Step};
use crate::kernel::EventHandle;
use crate::medium::{Frame, FrameKind, FramePayload, NodeId, TxOutcome};
use crate::metrics::PacketFate;
use crate::rng::StreamPurpose;
use crate::sim::{Action, Mac, SimConfig, SimFault, TimerKind, World};
use crate::time::SimDuration;
use crate::traffic::{fragment_sizes, Packet, PacketId, Priority};

/// Send plan for one normal packet, surviving interruptions and
/// re-contentions until the sink has every piece.
struct BurstPlan {
    packet: Packet,
    sizes: Vec<u32>,
    /// Fragments the sender saw arrive intact (equals the sink's view).
    delivered: u64,
    retries: u32,
}

impl BurstPlan {
    fn new(packet: Packet, frag_payload: u32) -> Self {
        BurstPlan {
            packet,
            sizes: fragment_sizes(packet.payload_bytes, frag_payload),
            delivered: 0,
            retries: 0,
        }
    }

    fn total(&self) -> u16 {
        self.sizes.len() as u16
    }

    fn full_mask(total: u16) -> u64 {
        if total >= 64 {
            u64::MAX
        } else {
            (1u64 << total) - 1
        }
    }

    fn is_complete(&self) -> bool {
        self.delivered == Self::full_mask(self.total())
    }

    /// Lowest fragment index not yet confirmed.
    fn next_index(&self) -> u16 {
        debug_assert!(!self.is_complete());
        (!self.delivered).trailing_zeros() as u16
    }
}

enum Job {
    Urgent { packet: Packet, retries: u32 },
    Normal { plan: BurstPlan },
}

impl Job {
    fn priority(&self) -> Priority {
        match self {
            Job::Urgent { .. } => Priority::Urgent,
            Job::Normal { .. } => Priority::Normal,
        }
    }

    fn packet_id(&self) -> PacketId {
        match self {
            Job::Urgent { packet, .. } => packet.id,
            Job::Normal { plan } => plan.packet.id,
        }
    }
}

enum Service {
    Idle,
    Contending {
        job: Job,
        backoff: Backoff,
        tick: Option<EventHandle>,
    },
    AwaitCts {
        job: Job,
        timeout: EventHandle,
    },
    OnAirUrgent {
        packet: Packet,
        retries: u32,
    },
    AwaitAck {
        packet: Packet,
        retries: u32,
        timeout: EventHandle,
    },
    /// This node's burst is tracked globally; see [`Burst`].
    Owner,
}

impl Service {
    fn packet_id(&self) -> Option<PacketId> {
        match self {
            Service::Idle | Service::Owner => None,
            Service::Contending { job, .. } | Service::AwaitCts { job, .. } => {
                Some(job.packet_id())
            }
            Service::OnAirUrgent { packet, .. } | Service::AwaitAck { packet, .. } => {
                Some(packet.id)
            }
        }
    }
}

/// Urgent packet staged for a pause break-in. `skip` counts how many more
/// gaps to let pass before sending the RTS; ties redraw it.
struct PauseWait {
    packet: Packet,
    retries: u32,
    skip: u32,
}

struct NodeSt {
    service: Service,
    pause_wait: Option<PauseWait>,
    /// Partially-sent plan waiting to re-contend after a dissolved burst.
    parked: Option<BurstPlan>,
}

enum BurstPhase {
    FragOnAir { index: u16 },
    Paused { resume: EventHandle },
    /// Pause RTS(es) on air; outcome judged at their common end.
    RtsWindow { clean_src: Option<NodeId> },
    /// Burst suspended for an urgent transaction; waiting for the sink's
    /// fragment-status frame.
    AwaitApf { timeout: EventHandle },
    /// All known fragments sent; waiting for SACK or NACK.
    AwaitStatus { timeout: EventHandle },
}

struct Burst {
    owner: NodeId,
    plan: BurstPlan,
    phase: BurstPhase,
}

#[derive(Default)]
struct SinkSt {
    /// Reassembly masks by packet. Entries are only looked up by key, never
    /// iterated, so map order cannot influence behavior.
    rx: HashMap<PacketId, u64>,
    /// Armed when a delivered urgent DATA interrupted a live burst: after the
    /// ACK, tell this owner which fragments of this packet already arrived.
    pending_apf: Option<(NodeId, PacketId)>,
}

/// Missing-fragment report: an explicit bitmap while it fits the frame's 48
/// status bits, otherwise just the lowest missing index.
fn nack_payload(received: u64, total: u16) -> FramePayload {
    let missing = !received & BurstPlan::full_mask(total);
    if total <= 48 {
        FramePayload::MissingSet { mask: missing }
    } else {
        FramePayload::LowestMissing {
            index: missing.trailing_zeros() as u16,
        }
    }
}

pub struct FrogMac {
    nodes: Vec<NodeSt>,
    burst: Option<Burst>,
    sink: SinkSt,
}

impl FrogMac {
    pub fn new(cfg: &SimConfig) -> Self {
        FrogMac {
            nodes: (0..cfg.node_count)
                .map(|_| NodeSt {
                    service: Service::Idle,
                    pause_wait: None,
                    parked: None,
                })
                .collect(),
            burst: None,
            sink: SinkSt::default(),
        }
    }

    fn take(&mut self, node: NodeId) -> Service {
        std::mem::replace(&mut self.nodes[node.0 as usize].service, Service::Idle)
    }

    fn burst_active(&self) -> bool {
        self.burst.is_some()
    }

    fn cts_wait(&self, w: &World) -> SimDuration {
        w.medium.tx_duration(w.cfg.frames.rts)
            + w.medium.tx_duration(w.cfg.frames.cts)
            + w.cfg.slot * 2
    }

    fn serve_next(&mut self, w: &mut World, node: NodeId) -> Result<(), SimFault> {
        let i = node.0 as usize;
        match self.nodes[i].service {
            Service::Idle => {}
            // A burst owner can still stage its own urgent break-in.
            Service::Owner => {
                if self.nodes[i].pause_wait.is_none() && self.burst_active() {
                    if let Some(packet) = pop_urgent(w, node) {
                        self.nodes[i].pause_wait = Some(PauseWait {
                            packet,
                            retries: 0,
                            skip: 0,
                        });
                    }
                }
                return Ok(());
            }
            _ => return Ok(()),
        }
        if self.nodes[i].pause_wait.is_some() {
            return Ok(());
        }
        if let Some(packet) = pop_urgent(w, node) {
            if self.burst_active() {
                self.nodes[i].pause_wait = Some(PauseWait {
                    packet,
                    retries: 0,
                    skip: 0,
                });
                return Ok(());
            }
            return self.start_contention(w, node, Job::Urgent { packet, retries: 0 });
        }
        if self.burst_active() {
            return Ok(()); // normal service waits out the reservation
        }
        if let Some(plan) = self.nodes[i].parked.take() {
            return self.start_contention(w, node, Job::Normal { plan });
        }
        if let Some(packet) = w.queue(node).pop(Priority::Normal) {
            let plan = BurstPlan::new(packet, w.cfg.frag_payload);
            return self.start_contention(w, node, Job::Normal { plan });
        }
        Ok(())
    }

    fn start_contention(&mut self, w: &mut World, node: NodeId, job: Job) -> Result<(), SimFault> {
        let window = w.cfg.window_for(job.priority());
        let draw = window.draw(w.rng(node, StreamPurpose::Backoff));
        let mut backoff = Backoff::new(draw);
        match backoff.begin(w.medium.busy_at(w.now())) {
            Step::Fire => self.send_rts(w, node, job),
            Step::TickLater => {
                let tick = w.after(w.cfg.slot, Action::SlotTick { node })?;
                self.nodes[node.0 as usize].service = Service::Contending {
                    job,
                    backoff,
                    tick: Some(tick),
                };
                Ok(())
            }
            Step::Freeze => {
                self.nodes[node.0 as usize].service = Service::Contending {
                    job,
                    backoff,
                    tick: None,
                };
                Ok(())
            }
        }
    }

    fn send_rts(&mut self, w: &mut World, node: NodeId, job: Job) -> Result<(), SimFault> {
        let rts = Frame::control(
            FrameKind::Rts,
            w.cfg.frames.rts,
            node,
            NodeId::SINK,
            job.priority(),
            Some(job.packet_id()),
        );
        w.transmit(rts)?;
        let timeout = w.after(
            self.cts_wait(w),
            Action::Timer {
                node,
                kind: TimerKind::CtsTimeout,
            },
        )?;
        self.nodes[node.0 as usize].service = Service::AwaitCts { job, timeout };
        Ok(())
    }

    /// Puts the next outstanding fragment on air and tracks it in the burst.
    fn resume_frag(&mut self, w: &mut World, index: u16) -> Result<(), SimFault> {
        let b = self.burst.as_ref().expect("resume without a burst");
        let frame = Frame {
            kind: FrameKind::Frag,
            size_bytes: w.cfg.frames.frag_header + b.plan.sizes[index as usize],
            src: b.owner,
            dst: NodeId::SINK,
            priority: Priority::Normal,
            packet_id: Some(b.plan.packet.id),
            frag_index: index,
            frag_total: b.plan.total(),
            payload: FramePayload::None,
        };
        w.transmit(frame)?;
        self.burst.as_mut().unwrap().phase = BurstPhase::FragOnAir { index };
        Ok(())
    }

    /// An urgent attempt failed (no CTS, or no ACK). Retry through whichever
    /// access path currently applies, or give the packet up.
    fn urgent_attempt_failed(
        &mut self,
        w: &mut World,
        node: NodeId,
        packet: Packet,
        retries: u32,
    ) -> Result<(), SimFault> {
        if retries >= w.cfg.max_retries {
            if !w.registry.is_delivered(packet.id) {
                w.drop_retry(&packet)?;
            }
            return self.finish_service(w, node);
        }
        if self.burst_active() {
            let window = w.cfg.urgent_window;
            let skip = window.draw(w.rng(node, StreamPurpose::PauseRedraw));
            self.nodes[node.0 as usize].pause_wait = Some(PauseWait {
                packet,
                retries: retries + 1,
                skip,
            });
            self.restore_after_urgent(node);
            Ok(())
        } else {
            self.start_contention(
                w,
                node,
                Job::Urgent {
                    packet,
                    retries: retries + 1,
                },
            )
        }
    }

    /// After an urgent transaction leaves the service slot, an interrupted
    /// owner goes back to owning; anyone else goes idle.
    fn restore_after_urgent(&mut self, node: NodeId) {
        let owns = matches!(&self.burst, Some(b) if b.owner == node);
        self.nodes[node.0 as usize].service = if owns { Service::Owner } else { Service::Idle };
    }

    fn finish_service(&mut self, w: &mut World, node: NodeId) -> Result<(), SimFault> {
        self.restore_after_urgent(node);
        self.serve_next(w, node)
    }

    /// Tears down the reservation: parks the owner's leftover plan (for
    /// interrupted bursts), converts every staged break-in to an ordinary
    /// urgent contention, and wakes the gated queues. The disjoint windows
    /// then drain urgent traffic before any normal sender can win again.
    fn dissolve(&mut self, w: &mut World, park: bool) -> Result<(), SimFault> {
        let b = self.burst.take().expect("dissolve without a burst");
        let owner = b.owner;
        if matches!(self.nodes[owner.0 as usize].service, Service::Owner) {
            self.nodes[owner.0 as usize].service = Service::Idle;
        }
        debug_assert!(self.nodes[owner.0 as usize].parked.is_none());
        if park {
            self.nodes[owner.0 as usize].parked = Some(b.plan);
        }
        self.sink.pending_apf = None;
        for i in 1..self.nodes.len() {
            if let Some(pw) = self.nodes[i].pause_wait.take() {
                debug_assert!(matches!(self.nodes[i].service, Service::Idle));
                self.start_contention(
                    w,
                    NodeId(i as u32),
                    Job::Urgent {
                        packet: pw.packet,
                        retries: pw.retries,
                    },
                )?;
            }
        }
        for i in 1..self.nodes.len() {
            self.serve_next(w, NodeId(i as u32))?;
        }
        // Timer-initiated dissolutions get no completion-driven idle round,
        // so run one here; it is idempotent when the driver adds its own.
        self.on_channel_idle(w)
    }

    /// The sender's own record of the burst finished; wait for the verdict.
    fn enter_await_status(&mut self, w: &mut World) -> Result<(), SimFault> {
        let wait = w.medium.tx_duration(w.cfg.frames.sack) + w.cfg.slot * 2;
        let owner = self.burst.as_ref().unwrap().owner;
        let timeout = w.after(
            wait,
            Action::Timer {
                node: owner,
                kind: TimerKind::SackTimeout,
            },
        )?;
        self.burst.as_mut().unwrap().phase = BurstPhase::AwaitStatus { timeout };
        Ok(())
    }

    fn handle_frag_end(&mut self, w: &mut World, out: &TxOutcome) -> Result<(), SimFault> {
        let (owner, index, total, pid, packet) = {
            let b = self
                .burst
                .as_ref()
                .ok_or_else(|| SimFault::Internal("fragment completed without a burst".into()))?;
            match b.phase {
                BurstPhase::FragOnAir { index } => {
                    (b.owner, index, b.plan.total(), b.plan.packet.id, b.plan.packet)
                }
                _ => {
                    return Err(SimFault::Internal(
                        "fragment completed outside the on-air phase".into(),
                    ))
                }
            }
        };
        debug_assert_eq!(out.frame.src, owner);

        if out.delivered {
            self.burst.as_mut().unwrap().plan.delivered |= 1 << index;
            // Sink side: reassemble, then answer on the last piece.
            if w.registry.is_delivered(pid) {
                // Duplicate of a finished plan (status probe after a lost
                // SACK): just re-acknowledge.
                self.send_sack(w, owner, pid)?;
            } else {
                let mask = {
                    let entry = self.sink.rx.entry(pid).or_insert(0);
                    *entry |= 1 << index;
                    *entry
                };
                if mask == BurstPlan::full_mask(total) {
                    let delay = w.now().since(packet.created);
                    w.deliver(&packet, delay)?;
                    self.sink.rx.remove(&pid);
                    self.send_sack(w, owner, pid)?;
                } else if index == total - 1 {
                    let mut nack = Frame::control(
                        FrameKind::Nack,
                        w.cfg.frames.nack,
                        NodeId::SINK,
                        owner,
                        Priority::Normal,
                        Some(pid),
                    );
                    nack.payload = nack_payload(mask, total);
                    w.transmit(nack)?;
                }
            }
        }

        // Sender side: last known piece out means await the verdict; anything
        // else opens an interruptible gap before the next fragment.
        let plan_done = self.burst.as_ref().unwrap().plan.is_complete();
        if plan_done || index == total - 1 {
            self.enter_await_status(w)
        } else {
            let resume = w.after(
                w.cfg.t_int,
                Action::Timer {
                    node: owner,
                    kind: TimerKind::PauseResume,
                },
            )?;
            w.after(
                w.cfg.slot,
                Action::Timer {
                    node: owner,
                    kind: TimerKind::PauseRts,
                },
            )?;
            self.burst.as_mut().unwrap().phase = BurstPhase::Paused { resume };
            // One gap consumed for everyone still counting toward their RTS.
            for n in self.nodes.iter_mut() {
                if let Some(pw) = n.pause_wait.as_mut() {
                    if pw.skip > 0 {
                        pw.skip -= 1;
                    }
                }
            }
            Ok(())
        }
    }

    fn send_sack(&mut self, w: &mut World, owner: NodeId, pid: PacketId) -> Result<(), SimFault> {
        let sack = Frame::control(
            FrameKind::Sack,
            w.cfg.frames.sack,
            NodeId::SINK,
            owner,
            Priority::Normal,
            Some(pid),
        );
        w.transmit(sack)?;
        Ok(())
    }

    /// Abandoning owner: the packet is lost unless the sink actually finished
    /// it (a dead acknowledgment path is not a lost packet).
    fn abandon_burst(&mut self, w: &mut World) -> Result<(), SimFault> {
        let packet = self.burst.as_ref().unwrap().plan.packet;
        if !w.registry.is_delivered(packet.id) {
            w.drop_retry(&packet)?;
        }
        self.dissolve(w, false)
    }
}

/// Pops the urgent head if there is one.
fn pop_urgent(w: &mut World, node: NodeId) -> Option<Packet> {
    w.queue(node).pop(Priority::Urgent)
}

impl Mac for FrogMac {
    fn on_packet_queued(&mut self, w: &mut World, node: NodeId, packet: Packet)
        -> Result<(), SimFault> {
        // An urgent arrival outranks a normal contention that has not yet
        // sent anything: park the untouched plan and serve the urgent first.
        if packet.priority == Priority::Urgent {
            if matches!(
                &self.nodes[node.0 as usize].service,
                Service::Contending { job: Job::Normal { .. }, .. }
            ) {
                match self.take(node) {
                    Service::Contending {
                        job: Job::Normal { plan },
                        tick,
                        ..
                    } => {
                        if let Some(tick) = tick {
                            w.cancel(tick);
                        }
                        debug_assert!(self.nodes[node.0 as usize].parked.is_none());
                        self.nodes[node.0 as usize].parked = Some(plan);
                    }
                    _ => unreachable!(),
                }
            }
        }
        self.serve_next(w, node)
    }

    fn on_slot_tick(&mut self, w: &mut World, node: NodeId) -> Result<(), SimFault> {
        // A frame ending exactly on the tick boundary still occupied the
        // slot, so it must freeze the counter, not let it decrement.
        let busy = w.medium.busy_through(w.now());
        let step = match &mut self.nodes[node.0 as usize].service {
            Service::Contending { backoff, tick, .. } => {
                *tick = None;
                backoff.tick(busy)
            }
            _ => return Err(SimFault::Internal("slot tick outside contention".into())),
        };
        match step {
            Step::Fire => match self.take(node) {
                Service::Contending { job, .. } => self.send_rts(w, node, job),
                _ => unreachable!(),
            },
            Step::TickLater => {
                let tick = w.after(w.cfg.slot, Action::SlotTick { node })?;
                match &mut self.nodes[node.0 as usize].service {
                    Service::Contending { tick: slot, .. } => *slot = Some(tick),
                    _ => unreachable!(),
                }
                Ok(())
            }
            Step::Freeze => Ok(()),
        }
    }

    fn on_timer(&mut self, w: &mut World, node: NodeId, kind: TimerKind) -> Result<(), SimFault> {
        match kind {
            TimerKind::CtsTimeout => match self.take(node) {
                Service::AwaitCts { job, .. } => match job {
                    Job::Urgent { packet, retries } => {
                        self.urgent_attempt_failed(w, node, packet, retries)
                    }
                    Job::Normal { mut plan } => {
                        if plan.retries >= w.cfg.max_retries {
                            w.drop_retry(&plan.packet)?;
                            self.finish_service(w, node)
                        } else {
                            plan.retries += 1;
                            if self.burst_active() {
                                // Someone else won meanwhile; wait them out.
                                debug_assert!(self.nodes[node.0 as usize].parked.is_none());
                                self.nodes[node.0 as usize].parked = Some(plan);
                                Ok(())
                            } else {
                                self.start_contention(w, node, Job::Normal { plan })
                            }
                        }
                    }
                },
                _ => Err(SimFault::Internal(
                    "cts timeout fired outside await-cts".into(),
                )),
            },
            TimerKind::AckTimeout => match self.take(node) {
                Service::AwaitAck {
                    packet, retries, ..
                } => self.urgent_attempt_failed(w, node, packet, retries),
                _ => Err(SimFault::Internal(
                    "ack timeout fired outside await-ack".into(),
                )),
            },
            TimerKind::PauseResume => {
                match self.burst.as_ref().map(|b| (&b.phase, b.owner)) {
                    Some((BurstPhase::Paused { .. }, owner)) if owner == node => {}
                    _ => {
                        return Err(SimFault::Internal(
                            "pause resume fired outside a pause".into(),
                        ))
                    }
                }
                // A stray transmission can straddle the gap's end; resuming
                // is deferred rather than colliding with it blindly.
                if w.medium.busy_at(w.now()) {
                    let resume = w.after(
                        w.cfg.t_int,
                        Action::Timer {
                            node,
                            kind: TimerKind::PauseResume,
                        },
                    )?;
                    self.burst.as_mut().unwrap().phase = BurstPhase::Paused { resume };
                    return Ok(());
                }
                let index = self.burst.as_ref().unwrap().plan.next_index();
                self.resume_frag(w, index)
            }
            TimerKind::PauseRts => {
                let resume = match self.burst.as_ref().map(|b| &b.phase) {
                    Some(BurstPhase::Paused { resume }) => *resume,
                    _ => {
                        return Err(SimFault::Internal(
                            "pause rts slot fired outside a pause".into(),
                        ))
                    }
                };
                let ready: Vec<NodeId> = (1..self.nodes.len())
                    .filter(|&i| matches!(&self.nodes[i].pause_wait, Some(pw) if pw.skip == 0))
                    .map(|i| NodeId(i as u32))
                    .collect();
                if ready.is_empty() {
                    return Ok(());
                }
                w.cancel(resume);
                for contender in ready {
                    let pw = self.nodes[contender.0 as usize].pause_wait.take().unwrap();
                    // The owner itself may be breaking in; its service slot
                    // carries the urgent transaction while the burst waits.
                    self.take(contender);
                    self.send_rts(
                        w,
                        contender,
                        Job::Urgent {
                            packet: pw.packet,
                            retries: pw.retries,
                        },
                    )?;
                }
                let owner = self.burst.as_ref().unwrap().owner;
                w.after(
                    w.medium.tx_duration(w.cfg.frames.rts),
                    Action::Timer {
                        node: owner,
                        kind: TimerKind::OwnerDecision,
                    },
                )?;
                self.burst.as_mut().unwrap().phase = BurstPhase::RtsWindow { clean_src: None };
                Ok(())
            }
            TimerKind::OwnerDecision => {
                let clean = match self.burst.as_ref().map(|b| &b.phase) {
                    Some(BurstPhase::RtsWindow { clean_src }) => clean_src.is_some(),
                    _ => {
                        return Err(SimFault::Internal(
                            "owner decision fired outside an rts window".into(),
                        ))
                    }
                };
                if clean {
                    // Yield: the urgent transaction now owns the channel
                    // through CTS, DATA, ACK and the fragment-status frame.
                    let wait = w.medium.tx_duration(w.cfg.frames.cts)
                        + w.medium.tx_duration(w.cfg.frames.data)
                        + w.medium.tx_duration(w.cfg.frames.ack)
                        + w.medium.tx_duration(w.cfg.frames.ack_p_frag)
                        + w.cfg.slot * 2;
                    let timeout = w.after(
                        wait,
                        Action::Timer {
                            node,
                            kind: TimerKind::ApfTimeout,
                        },
                    )?;
                    self.burst.as_mut().unwrap().phase = BurstPhase::AwaitApf { timeout };
                    Ok(())
                } else {
                    // All RTSes collided: take the channel back immediately.
                    let index = self.burst.as_ref().unwrap().plan.next_index();
                    self.resume_frag(w, index)
                }
            }
            TimerKind::ApfTimeout => match self.burst.as_ref().map(|b| &b.phase) {
                // The interrupting transaction died somewhere; reclaim
                // nothing, just fold and re-contend with the leftovers.
                Some(BurstPhase::AwaitApf { .. }) => self.dissolve(w, true),
                _ => Err(SimFault::Internal(
                    "status-frame timeout fired outside the suspended phase".into(),
                )),
            },
            TimerKind::SackTimeout => {
                let (owner, complete, exhausted) = match self.burst.as_mut() {
                    Some(Burst {
                        owner,
                        plan,
                        phase: BurstPhase::AwaitStatus { .. },
                    }) => (*owner, plan.is_complete(), plan.retries >= w.cfg.max_retries),
                    _ => {
                        return Err(SimFault::Internal(
                            "status timeout fired outside await-status".into(),
                        ))
                    }
                };
                debug_assert_eq!(owner, node);
                if exhausted {
                    self.abandon_burst(w)
                } else {
                    let b = self.burst.as_mut().unwrap();
                    b.plan.retries += 1;
                    // Probe: resend the final-index fragment to re-solicit a
                    // verdict; reassembly is idempotent.
                    let index = if complete {
                        b.plan.total() - 1
                    } else {
                        b.plan.next_index()
                    };
                    self.resume_frag(w, index)
                }
            }
        }
    }

    fn on_tx_end(&mut self, w: &mut World, out: &TxOutcome) -> Result<(), SimFault> {
        match out.frame.kind {
            FrameKind::Rts => {
                if let Some(Burst {
                    phase: BurstPhase::RtsWindow { clean_src },
                    ..
                }) = self.burst.as_mut()
                {
                    if out.delivered {
                        *clean_src = Some(out.frame.src);
                    }
                }
                if out.delivered {
                    let cts = Frame::control(
                        FrameKind::Cts,
                        w.cfg.frames.cts,
                        NodeId::SINK,
                        out.frame.src,
                        out.frame.priority,
                        out.frame.packet_id,
                    );
                    w.transmit(cts)?;
                }
                Ok(())
            }
            FrameKind::Cts => {
                if !out.delivered {
                    return Ok(()); // requester's timeout recovers
                }
                let node = out.frame.dst;
                match self.take(node) {
                    Service::AwaitCts { job, timeout } => {
                        w.cancel(timeout);
                        match job {
                            Job::Urgent { packet, retries } => {
                                let data = Frame::control(
                                    FrameKind::Data,
                                    w.cfg.frames.data,
                                    node,
                                    NodeId::SINK,
                                    Priority::Urgent,
                                    Some(packet.id),
                                );
                                w.transmit(data)?;
                                self.nodes[node.0 as usize].service =
                                    Service::OnAirUrgent { packet, retries };
                                Ok(())
                            }
                            Job::Normal { plan } => {
                                let index = plan.next_index();
                                self.nodes[node.0 as usize].service = Service::Owner;
                                if self.burst.is_some() {
                                    return Err(SimFault::Internal(
                                        "normal grant while a burst is active".into(),
                                    ));
                                }
                                self.burst = Some(Burst {
                                    owner: node,
                                    plan,
                                    phase: BurstPhase::FragOnAir { index },
                                });
                                self.resume_frag(w, index)
                            }
                        }
                    }
                    _ => Err(SimFault::Internal(
                        "grant delivered to a node not awaiting one".into(),
                    )),
                }
            }
            FrameKind::Data => {
                let node = out.frame.src;
                match self.take(node) {
                    Service::OnAirUrgent { packet, retries } => {
                        let wait = w.medium.tx_duration(w.cfg.frames.ack) + w.cfg.slot * 2;
                        let timeout = w.after(
                            wait,
                            Action::Timer {
                                node,
                                kind: TimerKind::AckTimeout,
                            },
                        )?;
                        self.nodes[node.0 as usize].service = Service::AwaitAck {
                            packet,
                            retries,
                            timeout,
                        };
                    }
                    _ => {
                        return Err(SimFault::Internal(
                            "data completion for a node not transmitting".into(),
                        ))
                    }
                }
                if out.delivered {
                    let pid = out.frame.packet_id.expect("data frames carry packet ids");
                    if !w.registry.is_delivered(pid) {
                        let packet = *w.registry.packet(pid);
                        let delay = w.now().since(packet.created);
                        w.deliver(&packet, delay)?;
                    }
                    if let Some(b) = &self.burst {
                        if matches!(b.phase, BurstPhase::AwaitApf { .. }) {
                            self.sink.pending_apf = Some((b.owner, b.plan.packet.id));
                        }
                    }
                    let ack = Frame::control(
                        FrameKind::Ack,
                        w.cfg.frames.ack,
                        NodeId::SINK,
                        node,
                        Priority::Urgent,
                        Some(pid),
                    );
                    w.transmit(ack)?;
                }
                Ok(())
            }
            FrameKind::Ack => {
                if !out.delivered {
                    return Ok(());
                }
                let node = out.frame.dst;
                match self.take(node) {
                    Service::AwaitAck { timeout, .. } => {
                        w.cancel(timeout);
                        self.finish_service(w, node)?;
                    }
                    _ => {
                        return Err(SimFault::Internal(
                            "ack delivered to a node not awaiting one".into(),
                        ))
                    }
                }
                if let Some((owner, pid)) = self.sink.pending_apf.take() {
                    let mask = self.sink.rx.get(&pid).copied().unwrap_or(0);
                    let mut apf = Frame::control(
                        FrameKind::AckPFrag,
                        w.cfg.frames.ack_p_frag,
                        NodeId::SINK,
                        owner,
                        Priority::Normal,
                        Some(pid),
                    );
                    apf.payload = FramePayload::ReceivedSet { mask };
                    w.transmit(apf)?;
                }
                Ok(())
            }
            FrameKind::Frag => self.handle_frag_end(w, out),
            FrameKind::Sack => {
                if !out.delivered {
                    return Ok(()); // owner probes again on timeout
                }
                match self.burst.as_ref() {
                    Some(Burst {
                        owner,
                        phase: BurstPhase::AwaitStatus { timeout },
                        ..
                    }) if *owner == out.frame.dst => {
                        let timeout = *timeout;
                        w.cancel(timeout);
                        self.dissolve(w, false)
                    }
                    _ => Err(SimFault::Internal(
                        "completion verdict outside await-status".into(),
                    )),
                }
            }
            FrameKind::Nack => {
                if !out.delivered {
                    return Ok(());
                }
                match self.burst.as_ref() {
                    Some(Burst {
                        owner,
                        phase: BurstPhase::AwaitStatus { timeout },
                        ..
                    }) if *owner == out.frame.dst => {
                        let timeout = *timeout;
                        w.cancel(timeout);
                        // Feedback, not a failure: resend what is missing
                        // without touching the retry budget.
                        let index = self.burst.as_ref().unwrap().plan.next_index();
                        self.resume_frag(w, index)
                    }
                    _ => Err(SimFault::Internal(
                        "missing-fragment verdict outside await-status".into(),
                    )),
                }
            }
            FrameKind::AckPFrag => {
                if !out.delivered {
                    return Ok(()); // owner's timeout dissolves the burst
                }
                match self.burst.as_ref() {
                    Some(Burst {
                        owner,
                        phase: BurstPhase::AwaitApf { timeout },
                        ..
                    }) if *owner == out.frame.dst => {
                        let timeout = *timeout;
                        w.cancel(timeout);
                        self.dissolve(w, true)
                    }
                    _ => Err(SimFault::Internal(
                        "fragment-status frame outside the suspended phase".into(),
                    )),
                }
            }
        }
    }

    fn on_channel_idle(&mut self, w: &mut World) -> Result<(), SimFault> {
        let burst_active = self.burst_active();
        for i in 1..self.nodes.len() {
            let node = NodeId(i as u32);
            match &self.nodes[i].service {
                Service::Contending {
                    job: Job::Urgent { .. },
                    ..
                } if burst_active => {
                    // Regular urgent contention cannot proceed under a
                    // reservation; stage a pause break-in instead.
                    match self.take(node) {
                        Service::Contending {
                            job: Job::Urgent { packet, retries },
                            tick,
                            ..
                        } => {
                            if let Some(tick) = tick {
                                w.cancel(tick);
                            }
                            debug_assert!(self.nodes[i].pause_wait.is_none());
                            self.nodes[i].pause_wait = Some(PauseWait {
                                packet,
                                retries,
                                skip: 0,
                            });
                        }
                        _ => unreachable!(),
                    }
                }
                // Normal contenders sit out the reservation where they froze.
                Service::Contending {
                    job: Job::Normal { .. },
                    ..
                } if burst_active => {}
                Service::Contending { backoff, .. } if backoff.is_frozen() => {
                    let busy = w.medium.sensed_busy_before(w.now());
                    let step = match &mut self.nodes[i].service {
                        Service::Contending { backoff, .. } => backoff.resume(busy),
                        _ => unreachable!(),
                    };
                    match step {
                        Step::Fire => match self.take(node) {
                            Service::Contending { job, .. } => self.send_rts(w, node, job)?,
                            _ => unreachable!(),
                        },
                        Step::TickLater => {
                            let tick = w.after(w.cfg.slot, Action::SlotTick { node })?;
                            match &mut self.nodes[i].service {
                                Service::Contending { tick: slot, .. } => *slot = Some(tick),
                                _ => unreachable!(),
                            }
                        }
                        Step::Freeze => {}
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn residual(&self, w: &World) -> Vec<PacketId> {
        let mut ids = Vec::new();
        for n in &self.nodes {
            if let Some(id) = n.service.packet_id() {
                ids.push(id);
            }
            if let Some(pw) = &n.pause_wait {
                ids.push(pw.packet.id);
            }
            if let Some(plan) = &n.parked {
                ids.push(plan.packet.id);
            }
        }
        if let Some(b) = &self.burst {
            ids.push(b.plan.packet.id);
        }
        ids.retain(|id| w.registry.fate(*id) == PacketFate::Pending);
        ids
    }
}
