//! Traffic model: two packet classes per source node, arrival processes,
//! payload fragmentation plans, and the bounded per-class transmit queues.

use std::collections::VecDeque;

use crate::rng::RngStream;
use crate::time::{SimDuration, SimTime};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Priority {
    Urgent,
    Normal,
}

impl Priority {
    pub const ALL: [Priority; 2] = [Priority::Urgent, Priority::Normal];

    pub fn label(self) -> &'static str {
        match self {
            Priority::Urgent => "urgent",
            Priority::Normal => "normal",
        }
    }

    /// Stable index for per-class arrays.
    pub fn index(self) -> usize {
        match self {
            Priority::Urgent => 0,
            Priority::Normal => 1,
        }
    }
}

impl std::fmt::Display for Priority {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Globally unique packet identity, assigned at generation time.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct PacketId(pub u64);

#[derive(Clone, Copy, Debug)]
pub struct Packet {
    pub id: PacketId,
    pub priority: Priority,
    pub created: SimTime,
    pub payload_bytes: u32,
}

/// Interarrival law for one packet class at one source.
#[derive(Clone, Copy, Debug)]
pub enum ArrivalProcess {
    Disabled,
    /// Exponential gaps (Poisson arrivals) with the given mean.
    Poisson { mean: SimDuration },
    /// Constant-bit-rate: fixed period, with the phase randomized once so
    /// sources do not start in lockstep. The first gap is `period - J`,
    /// `J ~ U[0, period)`, which keeps the arrival count over any whole
    /// number of periods independent of the draw.
    Periodic { period: SimDuration },
}

impl ArrivalProcess {
    pub fn poisson(mean: SimDuration) -> ArrivalProcess {
        if mean.as_ns() == 0 {
            ArrivalProcess::Disabled
        } else {
            ArrivalProcess::Poisson { mean }
        }
    }

    pub fn periodic(period: SimDuration) -> ArrivalProcess {
        if period.as_ns() == 0 {
            ArrivalProcess::Disabled
        } else {
            ArrivalProcess::Periodic { period }
        }
    }

    /// Gap from t=0 to the first arrival. `None` means the class is off.
    pub fn first_gap(&self, rng: &mut RngStream) -> Option<SimDuration> {
        match *self {
            ArrivalProcess::Disabled => None,
            ArrivalProcess::Poisson { mean } => {
                Some(SimDuration::from_ns(rng.exp_ns(mean.as_ns())))
            }
            ArrivalProcess::Periodic { period } => {
                let jitter = rng.uniform_ns(period.as_ns());
                Some(SimDuration::from_ns(period.as_ns() - jitter))
            }
        }
    }

    /// Gap between consecutive arrivals.
    pub fn next_gap(&self, rng: &mut RngStream) -> Option<SimDuration> {
        match *self {
            ArrivalProcess::Disabled => None,
            ArrivalProcess::Poisson { mean } => {
                Some(SimDuration::from_ns(rng.exp_ns(mean.as_ns())))
            }
            ArrivalProcess::Periodic { period } => Some(period),
        }
    }
}

/// Payload split for one packet: every piece carries `frag_payload` bytes
/// except possibly the last, which carries the remainder.
pub fn fragment_sizes(payload_bytes: u32, frag_payload: u32) -> Vec<u32> {
    assert!(frag_payload > 0, "fragment payload must be positive");
    let mut sizes = Vec::new();
    let mut left = payload_bytes;
    while left > frag_payload {
        sizes.push(frag_payload);
        left -= frag_payload;
    }
    sizes.push(left);
    sizes
}

pub fn fragment_count(payload_bytes: u32, frag_payload: u32) -> u16 {
    assert!(frag_payload > 0, "fragment payload must be positive");
    payload_bytes.div_ceil(frag_payload) as u16
}

/// Outcome of offering a packet to its class queue.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Admission {
    Queued,
    /// Queue full; the packet is lost at the source.
    Rejected,
}

/// Two FIFO queues, one per class, each bounded to `capacity` packets.
pub struct ClassQueues {
    queues: [VecDeque<Packet>; 2],
    capacity: usize,
}

impl ClassQueues {
    pub fn new(capacity: usize) -> Self {
        ClassQueues {
            queues: [VecDeque::new(), VecDeque::new()],
            capacity,
        }
    }

    pub fn offer(&mut self, packet: Packet) -> Admission {
        let q = &mut self.queues[packet.priority.index()];
        if q.len() >= self.capacity {
            Admission::Rejected
        } else {
            q.push_back(packet);
            Admission::Queued
        }
    }

    pub fn pop(&mut self, priority: Priority) -> Option<Packet> {
        self.queues[priority.index()].pop_front()
    }

    /// Puts a packet back at the head of its class queue. Used when service
    /// is abandoned before anything was sent; bypasses the capacity bound so
    /// an untouched packet can never be lost by the requeue itself.
    pub fn requeue_front(&mut self, packet: Packet) {
        self.queues[packet.priority.index()].push_front(packet);
    }

    pub fn len(&self, priority: Priority) -> usize {
        self.queues[priority.index()].len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }

    /// Class the node would serve next: urgent strictly outranks normal.
    pub fn head_class(&self) -> Option<Priority> {
        if !self.queues[Priority::Urgent.index()].is_empty() {
            Some(Priority::Urgent)
        } else if !self.queues[Priority::Normal.index()].is_empty() {
            Some(Priority::Normal)
        } else {
            None
        }
    }

    /// Packets still waiting at shutdown, for conservation accounting.
    pub fn drain_all(&mut self) -> Vec<Packet> {
        let mut out = Vec::new();
        for q in self.queues.iter_mut() {
            out.extend(q.drain(..));
        }
        out
    }
}
