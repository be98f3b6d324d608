//! Seeded discrete-event packet-level simulator.
//!
//! Nodes apply controller-installed flow rules; links delay, drop and
//! deliver; everything observable ends up in a [`Trace`]. A run is a pure
//! function of (topology, rules, config, seed): event ties break FIFO by
//! insertion order and all randomness flows from per-entity ChaCha
//! streams, so identical inputs give byte-identical traces.

mod engine;
mod event;
mod trace;

pub use engine::{generate_traffic, inject_failures, run, FailureEvent, SimConfig};
pub use event::{EventKind, SimTime};
pub use trace::{DropReason, Outcome, PacketKind, Trace, TraceCounts, TransmissionRecord, TxId};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Signal propagation speed used to turn link length into delay.
pub const PROPAGATION_KM_PER_SEC: f64 = 200_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("flow {flow} demand to sink '{sink}' is not covered by the installed rules")]
    UncoveredDemand { flow: u32, sink: String },
    #[error("invalid rule set: {0}")]
    BadRule(String),
    #[error("coded mode requires an encode rule for flow {0}")]
    NoEncodeRule(u32),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
}

/// Whether a run moves coded packets or plain copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Uncoded,
    Coded,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Uncoded => write!(f, "uncoded"),
            Mode::Coded => write!(f, "coded"),
        }
    }
}

/// Traffic arrival process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficMode {
    /// Exactly floor(lambda * duration) arrivals at interval 1/lambda.
    Deterministic,
    /// Exponential interarrivals drawn from the seeded generator.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Host,
    Switch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub name: String,
    pub role: NodeRole,
}

/// Directed link with rate, loss, length and provisioned channel count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: NodeId,
    pub to: NodeId,
    /// Service rate, packets per second.
    pub capacity_pps: f64,
    pub loss_prob: f64,
    pub distance_km: f64,
    /// Provisioned channels per generation round (the butterfly bottleneck
    /// is provisioned with 2; coding uses 1 of them).
    pub transmit_slots_per_round: u32,
}

impl Link {
    /// One-hop delay: service time plus propagation.
    pub fn delay(&self) -> SimTime {
        let service = 1.0 / self.capacity_pps;
        let propagation = self.distance_km / PROPAGATION_KM_PER_SEC;
        SimTime::from_secs_f64(service + propagation)
    }
}

/// A multicast demand: `source` must deliver the flow to every sink.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demand {
    pub flow: FlowId,
    pub source: NodeId,
    pub sinks: Vec<NodeId>,
}

/// Directed graph of nodes and links plus the traffic demands.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Topology {
    nodes: Vec<NodeInfo>,
    links: Vec<Link>,
    demands: Vec<Demand>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: impl Into<String>, role: NodeRole) -> NodeId {
        self.nodes.push(NodeInfo {
            name: name.into(),
            role,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn add_host(&mut self, name: impl Into<String>) -> NodeId {
        self.add_node(name, NodeRole::Host)
    }

    pub fn add_switch(&mut self, name: impl Into<String>) -> NodeId {
        self.add_node(name, NodeRole::Switch)
    }

    pub fn add_link(&mut self, link: Link) -> Result<LinkId, SimError> {
        if link.from.0 >= self.nodes.len() || link.to.0 >= self.nodes.len() {
            return Err(SimError::InvalidTopology(format!(
                "link endpoints {:?} -> {:?} do not exist",
                link.from, link.to
            )));
        }
        if link.from == link.to {
            return Err(SimError::InvalidTopology(format!(
                "self-loop at node '{}'",
                self.node_name(link.from)
            )));
        }
        if !link.capacity_pps.is_finite() || link.capacity_pps <= 0.0 {
            return Err(SimError::InvalidTopology(
                "link capacity must be > 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&link.loss_prob) {
            return Err(SimError::InvalidTopology(format!(
                "loss probability {} outside [0, 1]",
                link.loss_prob
            )));
        }
        self.links.push(link);
        Ok(LinkId(self.links.len() - 1))
    }

    pub fn add_demand(&mut self, demand: Demand) -> Result<(), SimError> {
        for node in std::iter::once(demand.source).chain(demand.sinks.iter().copied()) {
            if node.0 >= self.nodes.len() {
                return Err(SimError::InvalidTopology(format!(
                    "demand references unknown node {node:?}"
                )));
            }
        }
        self.demands.push(demand);
        Ok(())
    }

    pub fn nodes(&self) -> &[NodeInfo] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn demands(&self) -> &[Demand] {
        &self.demands
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn node_name(&self, id: NodeId) -> &str {
        &self.nodes[id.0].name
    }

    pub fn find_node(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn find_link(&self, from: &str, to: &str) -> Option<LinkId> {
        let (from, to) = (self.find_node(from)?, self.find_node(to)?);
        self.links
            .iter()
            .position(|l| l.from == from && l.to == to)
            .map(LinkId)
    }

    pub fn out_links(&self, node: NodeId) -> impl Iterator<Item = (LinkId, &Link)> {
        self.links
            .iter()
            .enumerate()
            .filter(move |(_, l)| l.from == node)
            .map(|(i, l)| (LinkId(i), l))
    }

    /// Re-checks the structural invariants (useful after deserializing).
    pub fn validate(&self) -> Result<(), SimError> {
        let mut names = std::collections::BTreeSet::new();
        for node in &self.nodes {
            if !names.insert(node.name.as_str()) {
                return Err(SimError::InvalidTopology(format!(
                    "duplicate node name '{}'",
                    node.name
                )));
            }
        }
        for link in &self.links {
            if link.from.0 >= self.nodes.len() || link.to.0 >= self.nodes.len() {
                return Err(SimError::InvalidTopology(
                    "link endpoint out of range".into(),
                ));
            }
            if link.from == link.to {
                return Err(SimError::InvalidTopology("self-loop".into()));
            }
            if !link.capacity_pps.is_finite()
                || link.capacity_pps <= 0.0
                || !(0.0..=1.0).contains(&link.loss_prob)
            {
                return Err(SimError::InvalidTopology("bad link parameters".into()));
            }
        }
        for demand in &self.demands {
            for node in std::iter::once(demand.source).chain(demand.sinks.iter().copied()) {
                if node.0 >= self.nodes.len() {
                    return Err(SimError::InvalidTopology(
                        "demand references unknown node".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let topo: Topology = serde_json::from_str(text)
            .map_err(|e| SimError::InvalidTopology(format!("bad topology file: {e}")))?;
        topo.validate()?;
        Ok(topo)
    }
}

/// The classic coding butterfly: one source, a provisioned 2-slot
/// bottleneck between T1 and T2, two side paths, and a fan-out node G.
///
/// This is the unique small graph in which sink B2 hears {a, a xor b},
/// sink C2 hears {b, a xor b}, and coding halves the bottleneck load.
pub fn build_butterfly() -> Topology {
    let mut t = Topology::new();
    let a = t.add_host("A");
    let t1 = t.add_switch("T1");
    let t2 = t.add_switch("T2");
    let g = t.add_switch("G");
    let b2 = t.add_host("B2");
    let c2 = t.add_host("C2");
    let link = |from, to, slots| Link {
        from,
        to,
        capacity_pps: 1_000_000.0,
        loss_prob: 0.0,
        distance_km: 1.0,
        transmit_slots_per_round: slots,
    };
    t.add_link(link(a, t1, 2)).unwrap();
    t.add_link(link(t1, b2, 1)).unwrap();
    t.add_link(link(t1, c2, 1)).unwrap();
    t.add_link(link(t1, t2, 2)).unwrap(); // the bottleneck
    t.add_link(link(t2, g, 2)).unwrap();
    t.add_link(link(g, b2, 1)).unwrap();
    t.add_link(link(g, c2, 1)).unwrap();
    t.add_demand(Demand {
        flow: FlowId(0),
        source: a,
        sinks: vec![b2, c2],
    })
    .unwrap();
    t
}

/// Two link-disjoint relay paths S -> R1 -> D and S -> R2 -> D.
///
/// The configured end-to-end loss sits on the first hop of each path; the
/// second hop's length is set so the one-way path delay equals the
/// scenario's uncoded latency total, with `distance_km` as the physical
/// first-hop length.
pub fn build_two_path(params: &crate::analytic::ScenarioParams) -> Topology {
    let mut t = Topology::new();
    let s = t.add_host("S");
    let r1 = t.add_switch("R1");
    let r2 = t.add_switch("R2");
    let d = t.add_host("D");
    let capacity = 1_000_000.0;
    let service = 1.0 / capacity;
    let prop_first = params.distance_km / PROPAGATION_KM_PER_SEC;
    let remaining = (params.latency_uncoded() - 2.0 * service - prop_first).max(0.0);
    let tail_km = remaining * PROPAGATION_KM_PER_SEC;
    for relay in [r1, r2] {
        t.add_link(Link {
            from: s,
            to: relay,
            capacity_pps: capacity,
            loss_prob: params.p_loss,
            distance_km: params.distance_km,
            transmit_slots_per_round: 1,
        })
        .unwrap();
        t.add_link(Link {
            from: relay,
            to: d,
            capacity_pps: capacity,
            loss_prob: 0.0,
            distance_km: tail_km,
            transmit_slots_per_round: 1,
        })
        .unwrap();
    }
    t.add_demand(Demand {
        flow: FlowId(0),
        source: s,
        sinks: vec![d],
    })
    .unwrap();
    t
}
