//! Run observables: per-transmission records, per-link and per-path
//! counters, per-generation decode outcomes, CSV export.

use super::event::SimTime;
use super::{LinkId, Mode, NodeId};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub usize);

/// What a transmission carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    /// Uncoded source packet.
    Plain { source_index: usize },
    /// Coded packet with a unit coding vector.
    Systematic { source_index: usize },
    /// Coded packet with random nonzero coefficients.
    Redundancy,
    /// Combination formed at an intermediate node.
    Recoded,
    /// Source retransmission of a dropped plain packet.
    Retry { attempt: u32 },
}

impl PacketKind {
    pub fn label(&self) -> &'static str {
        match self {
            PacketKind::Plain { .. } => "plain",
            PacketKind::Systematic { .. } => "systematic",
            PacketKind::Redundancy => "redundancy",
            PacketKind::Recoded => "recoded",
            PacketKind::Retry { .. } => "retry",
        }
    }

    pub fn source_index(&self) -> Option<usize> {
        match self {
            PacketKind::Plain { source_index } | PacketKind::Systematic { source_index } => {
                Some(*source_index)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    Loss,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    InFlight,
    /// Reached a demand sink.
    Delivered {
        at: SimTime,
    },
    /// Consumed at an intermediate node that spawned child transmissions
    /// (multicast splits, recoding).
    Forwarded {
        at: SimTime,
    },
    Dropped {
        at: SimTime,
        reason: DropReason,
    },
}

#[derive(Debug, Clone)]
pub struct TransmissionRecord {
    pub id: TxId,
    pub flow: u32,
    pub generation: u64,
    pub kind: PacketKind,
    /// Dispatch path index at the source/encoder, when meaningful.
    pub path: Option<usize>,
    /// Latency baseline: arrival time of the generation at the source.
    pub src_time: SimTime,
    pub send_time: SimTime,
    pub outcome: Outcome,
    pub hops: u32,
}

impl TransmissionRecord {
    pub fn latency(&self) -> Option<SimTime> {
        match self.outcome {
            Outcome::Delivered { at } => Some(SimTime::from_nanos(
                at.as_nanos() - self.src_time.as_nanos(),
            )),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkCounter {
    pub sent: u64,
    pub delivered: u64,
    pub dropped_loss: u64,
    pub dropped_failure: u64,
}

/// Decode bookkeeping for one (sink, generation).
#[derive(Debug, Clone, Default)]
pub struct SinkGeneration {
    /// Source indexes received uncoded.
    pub received_plain: BTreeSet<usize>,
    /// Kinds of coded packets that reached the sink.
    pub received_kinds: Vec<PacketKind>,
    pub rank: usize,
    pub decoded_at: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceCounts {
    pub sent: u64,
    pub delivered: u64,
    pub forwarded: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

/// Everything measured during one run.
#[derive(Debug, Clone)]
pub struct Trace {
    pub mode: Mode,
    pub offered_load_pps: f64,
    pub duration_s: f64,
    pub generation_size: usize,
    pub sinks: Vec<NodeId>,
    pub transmissions: Vec<TransmissionRecord>,
    pub link_counters: Vec<LinkCounter>,
    /// Per-link sends keyed by generation; populated when the run asks for
    /// per-generation link accounting (butterfly checks).
    pub per_generation_link_sends: Option<BTreeMap<(LinkId, u64), u32>>,
    pub per_path_sends: BTreeMap<usize, u64>,
    /// (sink, generation) decode state snapshots.
    pub sink_generations: BTreeMap<(NodeId, u64), SinkGeneration>,
    /// Generation ids that were dispatched into the network.
    pub dispatched_generations: BTreeSet<u64>,
    pub events_processed: u64,
}

impl Trace {
    pub fn counts(&self) -> TraceCounts {
        let mut c = TraceCounts::default();
        for tx in &self.transmissions {
            c.sent += 1;
            match tx.outcome {
                Outcome::InFlight => c.in_flight += 1,
                Outcome::Delivered { .. } => c.delivered += 1,
                Outcome::Forwarded { .. } => c.forwarded += 1,
                Outcome::Dropped { .. } => c.dropped += 1,
            }
        }
        c
    }

    /// Conservation: every transmission is accounted for, and nothing is
    /// left in flight once the queue drains.
    pub fn conservation_holds(&self) -> bool {
        let c = self.counts();
        c.sent == c.delivered + c.forwarded + c.dropped + c.in_flight && c.in_flight == 0
    }

    pub fn link_sent(&self, link: LinkId) -> u64 {
        self.link_counters[link.0].sent
    }

    /// Per-generation sends over one link, when tracking was enabled.
    pub fn generation_link_sends(&self, link: LinkId) -> Option<BTreeMap<u64, u32>> {
        self.per_generation_link_sends.as_ref().map(|m| {
            m.iter()
                .filter(|((l, _), _)| *l == link)
                .map(|((_, g), n)| (*g, *n))
                .collect()
        })
    }

    /// Generations decoded (coded) or fully received (uncoded) at `sink`.
    pub fn generations_complete_at(&self, sink: NodeId) -> u64 {
        self.sink_generations
            .iter()
            .filter(|((node, _), sg)| {
                *node == sink
                    && (sg.decoded_at.is_some() || sg.received_plain.len() == self.generation_size)
            })
            .count() as u64
    }

    /// Generations complete at every sink.
    pub fn generations_complete(&self) -> u64 {
        self.dispatched_generations
            .iter()
            .filter(|g| {
                self.sinks.iter().all(|sink| {
                    self.sink_generations
                        .get(&(*sink, **g))
                        .map(|sg| {
                            sg.decoded_at.is_some()
                                || sg.received_plain.len() == self.generation_size
                        })
                        .unwrap_or(false)
                })
            })
            .count() as u64
    }

    pub fn generations_dispatched(&self) -> u64 {
        self.dispatched_generations.len() as u64
    }

    /// Total latency and count over sink-delivered transmissions.
    pub fn latency_sum_and_count(&self) -> (f64, u64) {
        let mut sum_ns = 0u128;
        let mut n = 0u64;
        for tx in &self.transmissions {
            if let Some(l) = tx.latency() {
                sum_ns += l.as_nanos() as u128;
                n += 1;
            }
        }
        (sum_ns as f64 / 1e9, n)
    }

    /// Mean latency over sink-delivered transmissions, seconds.
    pub fn mean_latency_s(&self) -> Option<f64> {
        let (sum, n) = self.latency_sum_and_count();
        (n > 0).then(|| sum / n as f64)
    }

    /// One row per transmission.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "id,flow,generation,kind,source_index,path,send_time_s,outcome,final_time_s,latency_s,hops\n",
        );
        for tx in &self.transmissions {
            let (outcome, final_time, latency) = match tx.outcome {
                Outcome::InFlight => ("in_flight".to_string(), String::new(), String::new()),
                Outcome::Delivered { at } => (
                    "delivered".to_string(),
                    format!("{:.9}", at.as_secs_f64()),
                    format!("{:.9}", tx.latency().unwrap().as_secs_f64()),
                ),
                Outcome::Forwarded { at } => (
                    "forwarded".to_string(),
                    format!("{:.9}", at.as_secs_f64()),
                    String::new(),
                ),
                Outcome::Dropped { at, reason } => (
                    match reason {
                        DropReason::Loss => "dropped_loss".to_string(),
                        DropReason::Failure => "dropped_failure".to_string(),
                    },
                    format!("{:.9}", at.as_secs_f64()),
                    String::new(),
                ),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.9},{},{},{},{}\n",
                tx.id.0,
                tx.flow,
                tx.generation,
                tx.kind.label(),
                tx.kind
                    .source_index()
                    .map(|i| i.to_string())
                    .unwrap_or_default(),
                tx.path.map(|p| p.to_string()).unwrap_or_default(),
                tx.send_time.as_secs_f64(),
                outcome,
                final_time,
                latency,
                tx.hops,
            ));
        }
        out
    }
}
