//! Measurement: per-run tallies by packet class, a whole-run packet fate
//! registry for conservation checking, and aggregation across independent
//! replications with Student-t confidence intervals.

use crate::time::{SimDuration, SimTime};
use crate::traffic::{Packet, PacketId, Priority};

/// Counters for one packet class over one run.
#[derive(Clone, Copy, Default, Debug)]
pub struct ClassTally {
    pub generated: u64,
    pub delivered: u64,
    pub dropped_queue: u64,
    pub dropped_retry: u64,
    /// Frames of this class destroyed on air.
    pub collisions: u64,
    pub delay_ns_sum: u128,
    pub delivered_payload_bytes: u64,
}

impl ClassTally {
    pub fn dropped(&self) -> u64 {
        self.dropped_queue + self.dropped_retry
    }

    pub fn mean_delay_ns(&self) -> Option<f64> {
        if self.delivered == 0 {
            None
        } else {
            Some(self.delay_ns_sum as f64 / self.delivered as f64)
        }
    }
}

/// All measurements from one replication.
#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub duration: SimDuration,
    per_class: [ClassTally; 2],
}

impl RunMetrics {
    pub fn new(duration: SimDuration) -> Self {
        RunMetrics {
            duration,
            per_class: [ClassTally::default(); 2],
        }
    }

    pub fn class(&self, priority: Priority) -> &ClassTally {
        &self.per_class[priority.index()]
    }

    pub fn record_generated(&mut self, priority: Priority) {
        self.per_class[priority.index()].generated += 1;
    }

    pub fn record_delivered(&mut self, priority: Priority, delay: SimDuration, payload_bytes: u32) {
        let c = &mut self.per_class[priority.index()];
        c.delivered += 1;
        c.delay_ns_sum += delay.as_ns() as u128;
        c.delivered_payload_bytes += payload_bytes as u64;
    }

    pub fn record_queue_drop(&mut self, priority: Priority) {
        self.per_class[priority.index()].dropped_queue += 1;
    }

    pub fn record_retry_drop(&mut self, priority: Priority) {
        self.per_class[priority.index()].dropped_retry += 1;
    }

    pub fn record_collision(&mut self, priority: Priority) {
        self.per_class[priority.index()].collisions += 1;
    }

    /// Delivered payload rate for one class, in bytes per second.
    pub fn throughput_bps(&self, priority: Priority) -> f64 {
        let bytes = self.class(priority).delivered_payload_bytes;
        bytes as f64 * 1e9 / self.duration.as_ns() as f64
    }

    pub fn total_throughput_bps(&self) -> f64 {
        Priority::ALL
            .iter()
            .map(|&p| self.throughput_bps(p))
            .sum()
    }
}

/// Terminal state of a packet, or lack of one.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum PacketFate {
    Pending,
    Delivered,
    DroppedQueueFull,
    DroppedRetryLimit,
}

/// One entry per generated packet, indexed by `PacketId`. The registry is the
/// independent record that conservation is checked against: every packet ends
/// the run delivered, dropped, or still held somewhere that the caller can
/// enumerate. It also keeps each packet's metadata so a receiver can stamp
/// delay without the sender in the loop.
pub struct PacketRegistry {
    fates: Vec<(Packet, PacketFate)>,
}

#[derive(Debug, PartialEq, Eq)]
pub struct FateConflict {
    pub id: PacketId,
    pub previous: PacketFate,
    pub requested: PacketFate,
}

impl PacketRegistry {
    pub fn new() -> Self {
        PacketRegistry { fates: Vec::new() }
    }

    pub fn register(&mut self, priority: Priority, created: SimTime, payload_bytes: u32) -> Packet {
        let packet = Packet {
            id: PacketId(self.fates.len() as u64),
            priority,
            created,
            payload_bytes,
        };
        self.fates.push((packet, PacketFate::Pending));
        packet
    }

    pub fn packet(&self, id: PacketId) -> &Packet {
        &self.fates[id.0 as usize].0
    }

    /// Assigns a terminal fate. A packet may reach exactly one.
    pub fn mark(&mut self, id: PacketId, fate: PacketFate) -> Result<(), FateConflict> {
        assert!(fate != PacketFate::Pending, "mark requires a terminal fate");
        let slot = &mut self.fates[id.0 as usize];
        if slot.1 != PacketFate::Pending {
            return Err(FateConflict {
                id,
                previous: slot.1,
                requested: fate,
            });
        }
        slot.1 = fate;
        Ok(())
    }

    pub fn fate(&self, id: PacketId) -> PacketFate {
        self.fates[id.0 as usize].1
    }

    pub fn is_delivered(&self, id: PacketId) -> bool {
        self.fate(id) == PacketFate::Delivered
    }

    pub fn count(&self, priority: Priority, fate: PacketFate) -> u64 {
        self.fates
            .iter()
            .filter(|(p, f)| p.priority == priority && *f == fate)
            .count() as u64
    }

    pub fn total(&self) -> u64 {
        self.fates.len() as u64
    }

    /// Cross-checks the registry against the run tallies and the packets the
    /// caller found still in flight (queued or mid-service) at shutdown.
    /// Only packets created at or after `measured_from` take part, matching
    /// the tallies' warm-up exclusion. Returns a description of the first
    /// discrepancy, if any.
    pub fn check_conservation(
        &self,
        metrics: &RunMetrics,
        residual_ids: &[PacketId],
        measured_from: SimTime,
    ) -> Result<(), String> {
        let counted = |p: &Packet| p.created >= measured_from;
        let count = |priority: Priority, fate: PacketFate| {
            self.fates
                .iter()
                .filter(|(p, f)| counted(p) && p.priority == priority && *f == fate)
                .count() as u64
        };
        let mut residual_by_class = [0u64; 2];
        for id in residual_ids {
            let (packet, fate) = self.fates[id.0 as usize];
            if fate != PacketFate::Pending {
                return Err(format!(
                    "packet {:?} reported residual but has terminal fate {fate:?}",
                    id
                ));
            }
            if counted(&packet) {
                residual_by_class[packet.priority.index()] += 1;
            }
        }
        for priority in Priority::ALL {
            let tally = metrics.class(priority);
            let delivered = count(priority, PacketFate::Delivered);
            let dropped_q = count(priority, PacketFate::DroppedQueueFull);
            let dropped_r = count(priority, PacketFate::DroppedRetryLimit);
            let pending = count(priority, PacketFate::Pending);
            let generated = delivered + dropped_q + dropped_r + pending;
            if generated != tally.generated {
                return Err(format!(
                    "{priority}: registry holds {generated} packets, tally says {}",
                    tally.generated
                ));
            }
            if delivered != tally.delivered {
                return Err(format!(
                    "{priority}: registry delivered {delivered}, tally says {}",
                    tally.delivered
                ));
            }
            if dropped_q != tally.dropped_queue || dropped_r != tally.dropped_retry {
                return Err(format!(
                    "{priority}: registry drops {dropped_q}+{dropped_r}, tally says {}+{}",
                    tally.dropped_queue, tally.dropped_retry
                ));
            }
            if pending != residual_by_class[priority.index()] {
                return Err(format!(
                    "{priority}: {pending} packets unaccounted for, {} found residual",
                    residual_by_class[priority.index()]
                ));
            }
        }
        Ok(())
    }
}

impl Default for PacketRegistry {
    fn default() -> Self {
        Self::new()
    }
}

/// Two-sided 95% Student-t critical values by degrees of freedom, falling
/// back to the normal value beyond the table.
pub fn t95(df: usize) -> f64 {
    const TABLE: [f64; 10] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    ];
    if df == 0 {
        f64::NAN
    } else if df <= TABLE.len() {
        TABLE[df - 1]
    } else {
        1.960
    }
}

/// Sample mean and 95% confidence half-width. A single sample has no
/// dispersion estimate, so its half-width is `None`.
pub fn mean_and_ci95(samples: &[f64]) -> (f64, Option<f64>) {
    assert!(!samples.is_empty(), "no samples to summarize");
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = t95(n - 1) * var.sqrt() / (n as f64).sqrt();
    (mean, Some(half))
}

/// One class of one protocol configuration, aggregated over replications.
#[derive(Clone, Copy, Debug)]
pub struct ClassSummary {
    /// Mean over replications of the per-replication mean delay.
    pub mean_delay_ms: Option<f64>,
    pub delay_ci_ms: Option<f64>,
    pub throughput_bps: f64,
    pub throughput_ci_bps: Option<f64>,
    /// Event counts are summed over replications, not averaged.
    pub delivered: u64,
    pub dropped: u64,
    pub collisions: u64,
}

pub fn summarize_class(reps: &[RunMetrics], priority: Priority) -> ClassSummary {
    assert!(!reps.is_empty());
    let delay_samples: Vec<f64> = reps
        .iter()
        .filter_map(|r| r.class(priority).mean_delay_ns())
        .map(|ns| ns / 1e6)
        .collect();
    let (mean_delay_ms, delay_ci_ms) = if delay_samples.is_empty() {
        (None, None)
    } else {
        let (m, ci) = mean_and_ci95(&delay_samples);
        (Some(m), ci)
    };
    let tput_samples: Vec<f64> = reps.iter().map(|r| r.throughput_bps(priority)).collect();
    let (throughput_bps, throughput_ci_bps) = mean_and_ci95(&tput_samples);
    ClassSummary {
        mean_delay_ms,
        delay_ci_ms,
        throughput_bps,
        throughput_ci_bps,
        delivered: reps.iter().map(|r| r.class(priority).delivered).sum(),
        dropped: reps.iter().map(|r| r.class(priority).dropped()).sum(),
        collisions: reps.iter().map(|r| r.class(priority).collisions).sum(),
    }
}

/// Convenience over both classes, ordered urgent then normal.
pub fn summarize(reps: &[RunMetrics]) -> [(Priority, ClassSummary); 2] {
    [
        (Priority::Urgent, summarize_class(reps, Priority::Urgent)),
        (Priority::Normal, summarize_class(reps, Priority::Normal)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    // Oracle worked by hand: samples {1..5} have mean 3, sample variance
    // (4+1+0+1+4)/4 = 2.5, s = 1.5811388, half-width 2.776 * s / sqrt(5)
    // = 1.9629284.
    #[test]
    fn ci_half_width_matches_hand_computation() {
        let (mean, ci) = mean_and_ci95(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!((mean - 3.0).abs() < 1e-12);
        assert!((ci.unwrap() - 1.962_928_4).abs() < 1e-6);
    }

    #[test]
    fn single_sample_has_no_interval() {
        let (mean, ci) = mean_and_ci95(&[7.25]);
        assert_eq!(mean, 7.25);
        assert_eq!(ci, None);
    }

    #[test]
    fn identical_samples_give_zero_width() {
        let (mean, ci) = mean_and_ci95(&[4.0; 5]);
        assert_eq!(mean, 4.0);
        assert_eq!(ci, Some(0.0));
    }

    #[test]
    fn t_table_holds_the_standard_values() {
        assert_eq!(t95(4), 2.776);
        assert_eq!(t95(1), 12.706);
        assert_eq!(t95(9), 2.262);
        assert_eq!(t95(100), 1.960);
    }

    #[test]
    fn throughput_is_bytes_over_seconds() {
        let mut m = RunMetrics::new(SimDuration::from_secs(2));
        m.record_delivered(Priority::Normal, SimDuration::from_ms(5), 1000);
        assert_eq!(m.throughput_bps(Priority::Normal), 500.0);
        assert_eq!(m.throughput_bps(Priority::Urgent), 0.0);
        m.record_delivered(Priority::Urgent, SimDuration::from_ms(1), 121);
        assert_eq!(m.total_throughput_bps(), 500.0 + 60.5);
    }

    #[test]
    fn mean_delay_is_sum_over_count() {
        let mut m = RunMetrics::new(SimDuration::from_secs(1));
        m.record_delivered(Priority::Urgent, SimDuration::from_ms(4), 121);
        m.record_delivered(Priority::Urgent, SimDuration::from_ms(8), 121);
        m.record_delivered(Priority::Urgent, SimDuration::from_ms(6), 121);
        assert_eq!(m.class(Priority::Urgent).mean_delay_ns(), Some(6e6));
        assert_eq!(m.class(Priority::Normal).mean_delay_ns(), None);
    }

    #[test]
    fn registry_enforces_single_terminal_fate() {
        let mut reg = PacketRegistry::new();
        let id = reg.register(Priority::Urgent, SimTime::from_ns(5), 121).id;
        assert_eq!(reg.packet(id).created.as_ns(), 5);
        reg.mark(id, PacketFate::Delivered).unwrap();
        let err = reg.mark(id, PacketFate::DroppedRetryLimit).unwrap_err();
        assert_eq!(err.previous, PacketFate::Delivered);
        assert!(reg.is_delivered(id));
    }

    #[test]
    fn conservation_balances_against_tallies_and_residuals() {
        let mut reg = PacketRegistry::new();
        let mut m = RunMetrics::new(SimDuration::from_secs(1));
        let mut residual = Vec::new();
        for i in 0..10u64 {
            let id = reg.register(Priority::Normal, SimTime::ZERO, 121).id;
            m.record_generated(Priority::Normal);
            match i % 4 {
                0 | 1 => {
                    reg.mark(id, PacketFate::Delivered).unwrap();
                    m.record_delivered(Priority::Normal, SimDuration::from_ms(1), 121);
                }
                2 => {
                    reg.mark(id, PacketFate::DroppedQueueFull).unwrap();
                    m.record_queue_drop(Priority::Normal);
                }
                _ => residual.push(id),
            }
        }
        reg.check_conservation(&m, &residual, SimTime::ZERO).unwrap();
        // Losing a residual packet must be caught.
        let incomplete = &residual[1..];
        assert!(reg
            .check_conservation(&m, incomplete, SimTime::ZERO)
            .is_err());
    }

    // A measurement window that starts later simply ignores earlier packets:
    // the same books balance whether or not warm-up traffic exists.
    #[test]
    fn conservation_ignores_packets_before_the_window() {
        let mut reg = PacketRegistry::new();
        let m = RunMetrics::new(SimDuration::from_secs(1));
        // Warm-up packet: delivered but never tallied.
        let early = reg.register(Priority::Urgent, SimTime::from_ns(10), 121).id;
        reg.mark(early, PacketFate::Delivered).unwrap();
        let from = SimTime::from_ns(1_000);
        reg.check_conservation(&m, &[], from).unwrap();
        // The same fate inside the window is a discrepancy (tally never saw it).
        let late = reg.register(Priority::Urgent, SimTime::from_ns(2_000), 121).id;
        reg.mark(late, PacketFate::Delivered).unwrap();
        assert!(reg.check_conservation(&m, &[], from).is_err());
    }
}
