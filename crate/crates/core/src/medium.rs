//! Broadcast medium for a single-hop star network.
//!
//! Every node hears every other node; propagation delay is zero and airtime
//! is size_bytes times the per-byte time. A transmission occupies
//! `[start, end)`, start-inclusive and end-exclusive, so a frame beginning
//! exactly when another ends does not overlap it. Any overlap destroys every
//! frame involved (no capture), and collisions are the only loss mechanism.
//!
//! Three sensing queries exist on purpose: `busy_at` is the instantaneous
//! occupancy (start-inclusive) used when a node first looks at the channel;
//! `busy_through` asks whether the instant just before `t` was occupied,
//! counting frames that end exactly at `t`, and is what backoff ticks use so
//! a slot whose tail was busy never decrements the counter; and
//! `sensed_busy_before` additionally excludes frames ending exactly at `t`,
//! which is what frozen contenders use when they wake at a transmission's
//! end. None of the three see frames starting at the queried instant, which
//! is what makes two contenders whose counters expire in the same slot
//! collide instead of one of them spuriously deferring to the other.

use thiserror::Error;

use crate::time::{SimDuration, SimTime};
use crate::traffic::{PacketId, Priority};

/// Station address. The sink is node 0; sources are 1..node_count.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const SINK: NodeId = NodeId(0);

    pub fn is_sink(self) -> bool {
        self.0 == 0
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_sink() {
            write!(f, "sink")
        } else {
            write!(f, "n{}", self.0)
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Frag,
    Ack,
    Sack,
    Nack,
    AckPFrag,
}

impl FrameKind {
    pub fn label(self) -> &'static str {
        match self {
            FrameKind::Rts => "rts",
            FrameKind::Cts => "cts",
            FrameKind::Data => "data",
            FrameKind::Frag => "frag",
            FrameKind::Ack => "ack",
            FrameKind::Sack => "sack",
            FrameKind::Nack => "nack",
            FrameKind::AckPFrag => "ack_p_frag",
        }
    }
}

/// Which fragments a selective control frame names. Byte-level layouts are
/// out of scope; `size_bytes` alone drives airtime, and a 6-byte frame can
/// carry at most 48 status bits, hence the lowest-missing fallback for plans
/// with more fragments.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FramePayload {
    None,
    /// NACK: fragments still missing, as a bitmap (plans of <= 48 fragments).
    MissingSet { mask: u64 },
    /// NACK: lowest missing index (plans too large for the bitmap).
    LowestMissing { index: u16 },
    /// ACK_P_FRAG: fragments received so far.
    ReceivedSet { mask: u64 },
}

#[derive(Clone, Copy, Debug)]
pub struct Frame {
    pub kind: FrameKind,
    pub size_bytes: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub priority: Priority,
    pub packet_id: Option<PacketId>,
    pub frag_index: u16,
    pub frag_total: u16,
    pub payload: FramePayload,
}

impl Frame {
    pub fn control(
        kind: FrameKind,
        size_bytes: u32,
        src: NodeId,
        dst: NodeId,
        priority: Priority,
        packet_id: Option<PacketId>,
    ) -> Frame {
        Frame {
            kind,
            size_bytes,
            src,
            dst,
            priority,
            packet_id,
            frag_index: 0,
            frag_total: 0,
            payload: FramePayload::None,
        }
    }
}

/// Physical-layer parameters.
#[derive(Clone, Copy, Debug)]
pub struct PhyConfig {
    pub per_byte: SimDuration,
}

impl Default for PhyConfig {
    fn default() -> Self {
        PhyConfig {
            per_byte: SimDuration::from_us(32),
        }
    }
}

impl PhyConfig {
    pub fn tx_duration(&self, size_bytes: u32) -> SimDuration {
        self.per_byte * size_bytes as u64
    }

    /// Upper bound on deliverable bytes per second.
    pub fn capacity_bytes_per_sec(&self) -> f64 {
        1e9 / self.per_byte.as_ns() as f64
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TxId(u64);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MediumError {
    #[error("{src} began a transmission while its own frame was still on air")]
    SourceAlreadyTransmitting { src: NodeId },
    #[error("completion for unknown or mistimed transmission")]
    UnknownTransmission,
    #[error("two delivered frames overlapped on air; medium accounting is corrupt")]
    DeliveredOverlap,
}

struct ActiveTx {
    id: TxId,
    frame: Frame,
    start: SimTime,
    end: SimTime,
    doomed: bool,
}

/// Completed transmission as seen at its end instant.
#[derive(Clone, Copy, Debug)]
pub struct TxOutcome {
    pub frame: Frame,
    pub start: SimTime,
    pub end: SimTime,
    pub delivered: bool,
}

/// Row of the optional frame log, in completion order.
#[derive(Clone, Copy, Debug)]
pub struct FrameRecord {
    pub start: SimTime,
    pub end: SimTime,
    pub kind: FrameKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub priority: Priority,
    pub packet_id: Option<PacketId>,
    pub frag_index: u16,
    pub delivered: bool,
}

pub struct Medium {
    phy: PhyConfig,
    active: Vec<ActiveTx>,
    next_tx: u64,
    last_delivered_end: SimTime,
    /// End instant of the most recently completed frame. Completions arrive
    /// in time order, so this is the latest instant the channel is known to
    /// have been occupied up to.
    last_clear: Option<SimTime>,
    urgent_starts_inside_normal_data: u64,
    frame_log: Option<Vec<FrameRecord>>,
}

impl Medium {
    pub fn new(phy: PhyConfig, keep_frame_log: bool) -> Self {
        Medium {
            phy,
            active: Vec::new(),
            next_tx: 0,
            last_delivered_end: SimTime::ZERO,
            last_clear: None,
            urgent_starts_inside_normal_data: 0,
            frame_log: if keep_frame_log { Some(Vec::new()) } else { None },
        }
    }

    pub fn phy(&self) -> &PhyConfig {
        &self.phy
    }

    pub fn tx_duration(&self, size_bytes: u32) -> SimDuration {
        self.phy.tx_duration(size_bytes)
    }

    /// Instantaneous occupancy: busy iff some frame holds `[start, end)` with
    /// `start <= t < end`.
    pub fn busy_at(&self, t: SimTime) -> bool {
        self.active.iter().any(|a| a.start <= t && a.end > t)
    }

    /// Occupancy of the instant just before `t`: frames ending exactly at
    /// `t` count, frames starting at `t` do not. The completed-frame memory
    /// keeps a frame whose end event happened to dispatch first from being
    /// invisible to a sensing call at that same instant.
    pub fn busy_through(&self, t: SimTime) -> bool {
        self.active.iter().any(|a| a.start < t && a.end >= t) || self.last_clear == Some(t)
    }

    /// Occupancy ignoring frames that start or end exactly at `t`.
    pub fn sensed_busy_before(&self, t: SimTime) -> bool {
        self.active.iter().any(|a| a.start < t && a.end > t)
    }

    /// Starts a frame at `now`. Overlap dooms every frame involved, including
    /// frames already on air. Starting while busy is legal; starting while the
    /// same source is still on air is a protocol fault.
    pub fn begin(&mut self, frame: Frame, now: SimTime) -> Result<(TxId, SimTime), MediumError> {
        if self.active.iter().any(|a| a.frame.src == frame.src && a.end > now) {
            return Err(MediumError::SourceAlreadyTransmitting { src: frame.src });
        }
        if frame.priority == Priority::Urgent {
            let inside_normal_data = self.active.iter().any(|a| {
                matches!(a.frame.kind, FrameKind::Data | FrameKind::Frag)
                    && a.frame.priority == Priority::Normal
                    && a.start < now
                    && a.end > now
            });
            if inside_normal_data {
                self.urgent_starts_inside_normal_data += 1;
            }
        }
        let end = now + self.phy.tx_duration(frame.size_bytes);
        let mut doomed = false;
        for a in self.active.iter_mut() {
            if a.end > now {
                a.doomed = true;
                doomed = true;
            }
        }
        let id = TxId(self.next_tx);
        self.next_tx += 1;
        self.active.push(ActiveTx {
            id,
            frame,
            start: now,
            end,
            doomed,
        });
        Ok((id, end))
    }

    /// Finishes the transmission at its end instant and reports whether it was
    /// delivered intact. Delivered frames must have had the channel to
    /// themselves; that exclusivity is re-checked here as a guard on the
    /// collision bookkeeping itself.
    pub fn complete(&mut self, id: TxId, now: SimTime) -> Result<TxOutcome, MediumError> {
        let pos = self
            .active
            .iter()
            .position(|a| a.id == id)
            .ok_or(MediumError::UnknownTransmission)?;
        let tx = self.active.swap_remove(pos);
        if tx.end != now {
            return Err(MediumError::UnknownTransmission);
        }
        self.last_clear = Some(now);
        let delivered = !tx.doomed;
        if delivered {
            if tx.start < self.last_delivered_end {
                return Err(MediumError::DeliveredOverlap);
            }
            self.last_delivered_end = tx.end;
        }
        if let Some(log) = self.frame_log.as_mut() {
            log.push(FrameRecord {
                start: tx.start,
                end: tx.end,
                kind: tx.frame.kind,
                src: tx.frame.src,
                dst: tx.frame.dst,
                priority: tx.frame.priority,
                packet_id: tx.frame.packet_id,
                frag_index: tx.frame.frag_index,
                delivered,
            });
        }
        Ok(TxOutcome {
            frame: tx.frame,
            start: tx.start,
            end: tx.end,
            delivered,
        })
    }

    /// Count of urgent frames that began strictly inside the airtime of a
    /// normal payload-bearing frame (whole or fragment). Both protocols must
    /// keep this at zero: preemption may only use the gaps, never the frames.
    pub fn urgent_starts_inside_normal_data(&self) -> u64 {
        self.urgent_starts_inside_normal_data
    }

    pub fn take_frame_log(&mut self) -> Option<Vec<FrameRecord>> {
        self.frame_log.take()
    }
}
