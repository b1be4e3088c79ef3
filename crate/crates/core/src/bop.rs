//! Whole-packet protocol: classes contend in disjoint slot bands, the winner
//! sends its packet as a single DATA frame, and the sink answers with an
//! immediate ACK. Delivery is stamped at the sender when the ACK finishes.
//!
//! The state machine is deliberately minimal: once a node pops a packet for
//! service it carries that service to completion (delivery or retry
//! exhaustion) before consulting its queues again. Urgent arrivals therefore
//! gain priority purely through the disjoint windows, never by preempting a
//! service already in progress.

use crate::contention::{Backoff, Step};
use crate::kernel::EventHandle;
use crate::medium::{Frame, FrameKind, NodeId, TxOutcome};
use crate::rng::StreamPurpose;
use crate::sim::{Action, Mac, SimConfig, SimFault, TimerKind, World};
use crate::traffic::{Packet, PacketId};

enum Service {
    Idle,
    Contending {
        packet: Packet,
        retries: u32,
        backoff: Backoff,
    },
    OnAir {
        packet: Packet,
        retries: u32,
    },
    AwaitAck {
        packet: Packet,
        retries: u32,
        timeout: EventHandle,
    },
}

impl Service {
    fn packet_id(&self) -> Option<PacketId> {
        match self {
            Service::Idle => None,
            Service::Contending { packet, .. }
            | Service::OnAir { packet, .. }
            | Service::AwaitAck { packet, .. } => Some(packet.id),
        }
    }
}

pub struct BopMac {
    nodes: Vec<Service>,
}

impl BopMac {
    pub fn new(cfg: &SimConfig) -> Self {
        BopMac {
            nodes: (0..cfg.node_count).map(|_| Service::Idle).collect(),
        }
    }

    fn take(&mut self, node: NodeId) -> Service {
        std::mem::replace(&mut self.nodes[node.0 as usize], Service::Idle)
    }

    fn serve_next(&mut self, w: &mut World, node: NodeId) -> Result<(), SimFault> {
        if !matches!(self.nodes[node.0 as usize], Service::Idle) {
            return Ok(());
        }
        let Some(class) = w.queue(node).head_class() else {
            return Ok(());
        };
        let packet = w.queue(node).pop(class).expect("head class was nonempty");
        self.start_contention(w, node, packet, 0)
    }

    fn start_contention(
        &mut self,
        w: &mut World,
        node: NodeId,
        packet: Packet,
        retries: u32,
    ) -> Result<(), SimFault> {
        let window = w.cfg.window_for(packet.priority);
        let draw = window.draw(w.rng(node, StreamPurpose::Backoff));
        let mut backoff = Backoff::new(draw);
        let busy = w.medium.busy_at(w.now());
        match backoff.begin(busy) {
            Step::Fire => self.send_data(w, node, packet, retries),
            Step::TickLater => {
                w.after(w.cfg.slot, Action::SlotTick { node })?;
                self.nodes[node.0 as usize] = Service::Contending {
                    packet,
                    retries,
                    backoff,
                };
                Ok(())
            }
            Step::Freeze => {
                self.nodes[node.0 as usize] = Service::Contending {
                    packet,
                    retries,
                    backoff,
                };
                Ok(())
            }
        }
    }

    fn send_data(
        &mut self,
        w: &mut World,
        node: NodeId,
        packet: Packet,
        retries: u32,
    ) -> Result<(), SimFault> {
        let frame = Frame::control(
            FrameKind::Data,
            w.cfg.frames.data,
            node,
            NodeId::SINK,
            packet.priority,
            Some(packet.id),
        );
        w.transmit(frame)?;
        self.nodes[node.0 as usize] = Service::OnAir { packet, retries };
        Ok(())
    }

    fn finish_service(&mut self, w: &mut World, node: NodeId) -> Result<(), SimFault> {
        self.nodes[node.0 as usize] = Service::Idle;
        self.serve_next(w, node)
    }
}

impl Mac for BopMac {
    fn on_packet_queued(&mut self, w: &mut World, node: NodeId, _packet: Packet)
        -> Result<(), SimFault> {
        // Only an idle node reacts; a busy one picks the queue up later.
        self.serve_next(w, node)
    }

    fn on_slot_tick(&mut self, w: &mut World, node: NodeId) -> Result<(), SimFault> {
        // A frame ending exactly on the tick boundary still occupied the
        // slot, so it must freeze the counter, not let it decrement.
        let busy = w.medium.busy_through(w.now());
        let step = match &mut self.nodes[node.0 as usize] {
            Service::Contending { backoff, .. } => backoff.tick(busy),
            _ => return Err(SimFault::Internal("slot tick outside contention".into())),
        };
        match step {
            Step::Fire => match self.take(node) {
                Service::Contending { packet, retries, .. } => {
                    self.send_data(w, node, packet, retries)
                }
                _ => unreachable!(),
            },
            Step::TickLater => {
                w.after(w.cfg.slot, Action::SlotTick { node })?;
                Ok(())
            }
            Step::Freeze => Ok(()),
        }
    }

    fn on_timer(&mut self, w: &mut World, node: NodeId, kind: TimerKind) -> Result<(), SimFault> {
        if kind != TimerKind::AckTimeout {
            return Err(SimFault::Internal(format!(
                "unexpected timer {} for this protocol",
                kind.label()
            )));
        }
        match self.take(node) {
            Service::AwaitAck {
                packet, retries, ..
            } => {
                if retries >= w.cfg.max_retries {
                    w.drop_retry(&packet)?;
                    self.finish_service(w, node)
                } else {
                    self.start_contention(w, node, packet, retries + 1)
                }
            }
            _ => Err(SimFault::Internal(
                "ack timeout fired outside await-ack".into(),
            )),
        }
    }

    fn on_tx_end(&mut self, w: &mut World, out: &TxOutcome) -> Result<(), SimFault> {
        match out.frame.kind {
            FrameKind::Data => {
                // Sender arms its ACK wait whether or not the frame survived;
                // a collision surfaces as the timeout.
                let node = out.frame.src;
                match self.take(node) {
                    Service::OnAir { packet, retries } => {
                        let wait = w.medium.tx_duration(w.cfg.frames.ack) + w.cfg.slot * 2;
                        let timeout = w.after(
                            wait,
                            Action::Timer {
                                node,
                                kind: TimerKind::AckTimeout,
                            },
                        )?;
                        self.nodes[node.0 as usize] = Service::AwaitAck {
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
                    let ack = Frame::control(
                        FrameKind::Ack,
                        w.cfg.frames.ack,
                        NodeId::SINK,
                        out.frame.src,
                        out.frame.priority,
                        out.frame.packet_id,
                    );
                    w.transmit(ack)?;
                }
                Ok(())
            }
            FrameKind::Ack => {
                if !out.delivered {
                    return Ok(()); // sender's timeout covers it
                }
                let node = out.frame.dst;
                match self.take(node) {
                    Service::AwaitAck {
                        packet, timeout, ..
                    } => {
                        debug_assert_eq!(Some(packet.id), out.frame.packet_id);
                        w.cancel(timeout);
                        let delay = w.now().since(packet.created);
                        w.deliver(&packet, delay)?;
                        self.finish_service(w, node)
                    }
                    _ => Err(SimFault::Internal(
                        "ack delivered to a node not awaiting one".into(),
                    )),
                }
            }
            _ => Err(SimFault::Internal(format!(
                "frame kind {} does not belong to this protocol",
                out.frame.kind.label()
            ))),
        }
    }

    fn on_channel_idle(&mut self, w: &mut World) -> Result<(), SimFault> {
        for i in 1..self.nodes.len() {
            let node = NodeId(i as u32);
            let is_frozen = matches!(
                &self.nodes[i],
                Service::Contending { backoff, .. } if backoff.is_frozen()
            );
            if !is_frozen {
                continue;
            }
            let busy = w.medium.sensed_busy_before(w.now());
            let step = match &mut self.nodes[i] {
                Service::Contending { backoff, .. } => backoff.resume(busy),
                _ => unreachable!(),
            };
            match step {
                Step::Fire => match self.take(node) {
                    Service::Contending { packet, retries, .. } => {
                        self.send_data(w, node, packet, retries)?;
                    }
                    _ => unreachable!(),
                },
                Step::TickLater => {
                    w.after(w.cfg.slot, Action::SlotTick { node })?;
                }
                Step::Freeze => {}
            }
        }
        Ok(())
    }

    fn residual(&self, _w: &World) -> Vec<PacketId> {
        self.nodes.iter().filter_map(Service::packet_id).collect()
    }
}
