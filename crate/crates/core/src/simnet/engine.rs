//! The event loop: traffic generation, per-link loss and delay, failure
//! injection, and rule-driven encode/recode/decode at nodes.

use super::event::{EventKind, EventQueue, SimTime};
use super::trace::{
    DropReason, LinkCounter, Outcome, PacketKind, SinkGeneration, Trace, TransmissionRecord, TxId,
};
use super::{LinkId, Mode, NodeId, SimError, Topology, TrafficMode};
use crate::analytic::ScenarioParams;
use crate::codec::{systematic_batch, CodedPacket, DecoderState, SourcePacket};
use crate::controller::{Action, FlowRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Per-flow generation ids are offset so they never collide across flows.
const GENERATION_STRIDE: u64 = 1 << 40;

// RNG stream layout: all entities derive independent streams from the
// master seed, so a run is a pure function of (inputs, seed).
const STREAM_FAILURES: u64 = 1;
const STREAM_TRAFFIC_BASE: u64 = 100;
const STREAM_LINK_BASE: u64 = 1_000;
const STREAM_NODE_BASE: u64 = 10_000;

/// Everything a single run needs besides topology and rules.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub params: ScenarioParams,
    pub mode: Mode,
    pub traffic: TrafficMode,
    pub duration_s: f64,
    pub seed: u64,
    /// Source retransmissions allowed per dropped plain packet (uncoded
    /// mode only; coded mode never retransmits).
    pub retransmit_limit: u32,
    /// Designated paths subjected to per-run Bernoulli failure sampling
    /// with probability `params.p_failure`. Empty disables failures.
    pub failure_paths: Vec<Vec<LinkId>>,
    /// Track per-generation sends on every link (butterfly accounting).
    pub track_generation_link_counts: bool,
}

impl SimConfig {
    pub fn new(params: ScenarioParams, mode: Mode) -> Self {
        Self {
            params,
            mode,
            traffic: TrafficMode::Deterministic,
            duration_s: 10.0,
            seed: 1,
            retransmit_limit: 1,
            failure_paths: Vec::new(),
            track_generation_link_counts: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Source packet arrival instants over `[0, duration)`.
///
/// Deterministic mode emits exactly `floor(lambda * duration)` arrivals at
/// interval `1/lambda`; Poisson mode draws exponential interarrivals from
/// the supplied generator.
pub fn generate_traffic(
    lambda: f64,
    duration_s: f64,
    mode: TrafficMode,
    rng: &mut ChaCha8Rng,
) -> Vec<SimTime> {
    if lambda <= 0.0 || duration_s <= 0.0 {
        return Vec::new();
    }
    match mode {
        TrafficMode::Deterministic => {
            let count = (lambda * duration_s).floor() as u64;
            let interval_ns = 1e9 / lambda;
            (0..count)
                .map(|i| SimTime::from_nanos((i as f64 * interval_ns).round() as u64))
                .collect()
        }
        TrafficMode::Poisson => {
            let mut out = Vec::new();
            let mut t = 0.0f64;
            loop {
                let u: f64 = rng.random();
                t += -(1.0 - u).ln() / lambda;
                if t >= duration_s {
                    break;
                }
                out.push(SimTime::from_secs_f64(t));
            }
            out
        }
    }
}

/// A scheduled link up/down transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FailureEvent {
    pub time: SimTime,
    pub link: LinkId,
    pub up: bool,
}

/// Per-run Bernoulli path failures: each designated path is independently
/// down for the whole run with probability `p_failure` (path reliability
/// is static, not a time process). Downed paths surface as t=0 toggle
/// events on their links.
pub fn inject_failures(
    paths: &[Vec<LinkId>],
    p_failure: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<FailureEvent> {
    let mut out = Vec::new();
    for path in paths {
        let down: f64 = rng.random();
        if down < p_failure {
            for &link in path {
                out.push(FailureEvent {
                    time: SimTime::ZERO,
                    link,
                    up: false,
                });
            }
        }
    }
    out
}

/// Runs one seeded simulation to drain and returns the trace.
pub fn run(topology: &Topology, rules: &[FlowRule], config: &SimConfig) -> Result<Trace, SimError> {
    topology.validate()?;
    config
        .params
        .validate()
        .map_err(|e| SimError::BadRule(e.to_string()))?;
    validate_rules(topology, rules, config)?;
    let mut engine = Engine::new(topology, rules, config)?;
    engine.prime();
    engine.drain();
    Ok(engine.finish())
}

fn validate_rules(
    topology: &Topology,
    rules: &[FlowRule],
    config: &SimConfig,
) -> Result<(), SimError> {
    for rule in rules {
        if rule.node.0 >= topology.nodes().len() {
            return Err(SimError::BadRule(format!(
                "rule at unknown node {:?}",
                rule.node
            )));
        }
        match &rule.action {
            Action::Forward { out, weight } => {
                if out.0 >= topology.links().len() {
                    return Err(SimError::BadRule("forward to unknown link".into()));
                }
                if topology.link(*out).from != rule.node {
                    return Err(SimError::BadRule(format!(
                        "forward rule at '{}' uses a link that does not start there",
                        topology.node_name(rule.node)
                    )));
                }
                if !(*weight > 0.0 && *weight <= 1.0 + 1e-9) {
                    return Err(SimError::BadRule(format!(
                        "forward weight {weight} out of range"
                    )));
                }
            }
            Action::Encode {
                outputs,
                generation_size,
                packets_per_generation,
                ..
            } => {
                if *generation_size == 0 || packets_per_generation < generation_size {
                    return Err(SimError::BadRule(
                        "encode rule needs g >= 1 and m >= g".into(),
                    ));
                }
                if outputs.len() != *packets_per_generation {
                    return Err(SimError::BadRule(
                        "encode rule must map every batch packet to an output".into(),
                    ));
                }
                for out in outputs {
                    if out.link.0 >= topology.links().len()
                        || topology.link(out.link).from != rule.node
                    {
                        return Err(SimError::BadRule("encode output link invalid".into()));
                    }
                }
            }
            Action::Recode { out } => {
                if out.0 >= topology.links().len() || topology.link(*out).from != rule.node {
                    return Err(SimError::BadRule("recode output link invalid".into()));
                }
            }
            Action::Decode => {}
        }
    }
    // Forward weights for one (node, flow, sink, index) group sum to 1.
    let mut groups: BTreeMap<(usize, u32, Option<usize>, Option<usize>), f64> = BTreeMap::new();
    for rule in rules {
        if let Action::Forward { weight, .. } = rule.action {
            *groups
                .entry((
                    rule.node.0,
                    rule.flow.0,
                    rule.sink.map(|s| s.0),
                    rule.source_index,
                ))
                .or_default() += weight;
        }
    }
    for ((node, flow, _, _), sum) in &groups {
        if (sum - 1.0).abs() > 1e-6 {
            return Err(SimError::BadRule(format!(
                "forward weights at node {node} flow {flow} sum to {sum}, expected 1"
            )));
        }
    }
    // Every demand sink must be reachable through the rule graph, and
    // coded flows need an encoder and one decoder per sink.
    for demand in topology.demands() {
        let flow_rules: Vec<&FlowRule> = rules.iter().filter(|r| r.flow == demand.flow).collect();
        if config.mode == Mode::Coded {
            if !flow_rules
                .iter()
                .any(|r| matches!(r.action, Action::Encode { .. }))
            {
                return Err(SimError::NoEncodeRule(demand.flow.0));
            }
            for sink in &demand.sinks {
                let decoders = flow_rules
                    .iter()
                    .filter(|r| r.node == *sink && matches!(r.action, Action::Decode))
                    .count();
                if decoders != 1 {
                    return Err(SimError::UncoveredDemand {
                        flow: demand.flow.0,
                        sink: topology.node_name(*sink).to_string(),
                    });
                }
            }
        }
        let mut reach = BTreeSet::new();
        let mut frontier = vec![demand.source];
        while let Some(node) = frontier.pop() {
            if !reach.insert(node) {
                continue;
            }
            for rule in &flow_rules {
                if rule.node != node {
                    continue;
                }
                match &rule.action {
                    Action::Forward { out, .. } | Action::Recode { out } => {
                        frontier.push(topology.link(*out).to);
                    }
                    Action::Encode { outputs, .. } => {
                        frontier.extend(outputs.iter().map(|o| topology.link(o.link).to));
                    }
                    Action::Decode => {}
                }
            }
        }
        for sink in &demand.sinks {
            if !reach.contains(sink) {
                return Err(SimError::UncoveredDemand {
                    flow: demand.flow.0,
                    sink: topology.node_name(*sink).to_string(),
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Payload {
    Plain(SourcePacket),
    Coded(CodedPacket),
}

#[derive(Debug, Clone)]
struct TxState {
    payload: Payload,
    sink_set: Vec<NodeId>,
    /// First link and full one-way delay of the dispatch path, for
    /// retransmission timing.
    route: Option<(LinkId, SimTime)>,
    attempt: u32,
}

struct NodeRules<'a> {
    encode: Option<&'a FlowRule>,
    recode: Option<&'a FlowRule>,
    decode: bool,
    forwards: Vec<&'a FlowRule>,
}

struct Engine<'a> {
    topology: &'a Topology,
    config: &'a SimConfig,
    queue: EventQueue,
    link_up: Vec<bool>,
    node_rules: BTreeMap<(usize, u32), NodeRules<'a>>,
    flow_generation_size: BTreeMap<u32, usize>,
    flow_field: BTreeMap<u32, crate::gf::FieldKind>,
    link_rngs: Vec<ChaCha8Rng>,
    node_rngs: Vec<ChaCha8Rng>,
    wrr: BTreeMap<(usize, u32, usize), Vec<f64>>,
    encode_buffers: BTreeMap<(usize, u32, u64), Vec<(SourcePacket, SimTime)>>,
    recode_buffers: BTreeMap<(usize, u64), Vec<CodedPacket>>,
    decoders: BTreeMap<(usize, u64), DecoderState>,
    tx_states: Vec<TxState>,
    // Trace under construction.
    records: Vec<TransmissionRecord>,
    link_counters: Vec<LinkCounter>,
    per_gen_link: Option<BTreeMap<(LinkId, u64), u32>>,
    per_path: BTreeMap<usize, u64>,
    sink_generations: BTreeMap<(NodeId, u64), SinkGeneration>,
    dispatched: BTreeSet<u64>,
    events_processed: u64,
}

impl<'a> Engine<'a> {
    fn new(
        topology: &'a Topology,
        rules: &'a [FlowRule],
        config: &'a SimConfig,
    ) -> Result<Self, SimError> {
        let mut node_rules: BTreeMap<(usize, u32), NodeRules> = BTreeMap::new();
        for rule in rules {
            let entry = node_rules
                .entry((rule.node.0, rule.flow.0))
                .or_insert_with(|| NodeRules {
                    encode: None,
                    recode: None,
                    decode: false,
                    forwards: Vec::new(),
                });
            match rule.action {
                Action::Encode { .. } => entry.encode = Some(rule),
                Action::Recode { .. } => entry.recode = Some(rule),
                Action::Decode => entry.decode = true,
                Action::Forward { .. } => entry.forwards.push(rule),
            }
        }
        // Generation size and field per flow: from the encode rule in
        // coded mode, or the widest per-index routing in uncoded mode.
        let mut flow_generation_size = BTreeMap::new();
        let mut flow_field = BTreeMap::new();
        for demand in topology.demands() {
            let flow = demand.flow.0;
            let g = match config.mode {
                Mode::Coded => {
                    let (g, field) = rules
                        .iter()
                        .find_map(|r| match &r.action {
                            Action::Encode {
                                generation_size,
                                field,
                                ..
                            } if r.flow.0 == flow => Some((*generation_size, *field)),
                            _ => None,
                        })
                        .ok_or(SimError::NoEncodeRule(flow))?;
                    flow_field.insert(flow, field);
                    g
                }
                Mode::Uncoded => rules
                    .iter()
                    .filter(|r| r.flow.0 == flow)
                    .filter_map(|r| r.source_index)
                    .max()
                    .map(|m| m + 1)
                    .unwrap_or(1),
            };
            flow_generation_size.insert(flow, g);
        }
        let link_rngs = (0..topology.links().len())
            .map(|i| stream_rng(config.seed, STREAM_LINK_BASE + i as u64))
            .collect();
        let node_rngs = (0..topology.nodes().len())
            .map(|i| stream_rng(config.seed, STREAM_NODE_BASE + i as u64))
            .collect();
        Ok(Self {
            topology,
            config,
            queue: EventQueue::new(),
            link_up: vec![true; topology.links().len()],
            node_rules,
            flow_generation_size,
            flow_field,
            link_rngs,
            node_rngs,
            wrr: BTreeMap::new(),
            encode_buffers: BTreeMap::new(),
            recode_buffers: BTreeMap::new(),
            decoders: BTreeMap::new(),
            tx_states: Vec::new(),
            records: Vec::new(),
            link_counters: vec![LinkCounter::default(); topology.links().len()],
            per_gen_link: config.track_generation_link_counts.then(BTreeMap::new),
            per_path: BTreeMap::new(),
            sink_generations: BTreeMap::new(),
            dispatched: BTreeSet::new(),
            events_processed: 0,
        })
    }

    fn prime(&mut self) {
        let mut failure_rng = stream_rng(self.config.seed, STREAM_FAILURES);
        for ev in inject_failures(
            &self.config.failure_paths,
            self.config.params.p_failure,
            &mut failure_rng,
        ) {
            self.queue.push(
                ev.time,
                EventKind::FailureToggle {
                    link: ev.link,
                    up: ev.up,
                },
            );
        }
        for (flow_idx, demand) in self.topology.demands().iter().enumerate() {
            let mut rng = stream_rng(self.config.seed, STREAM_TRAFFIC_BASE + flow_idx as u64);
            let arrivals = generate_traffic(
                self.config.params.lambda,
                self.config.duration_s,
                self.config.traffic,
                &mut rng,
            );
            for (seq, at) in arrivals.into_iter().enumerate() {
                self.queue.push(
                    at,
                    EventKind::Arrival {
                        flow: demand.flow.0,
                        packet_seq: seq as u64,
                    },
                );
            }
        }
    }

    fn drain(&mut self) {
        while let Some((now, kind)) = self.queue.pop() {
            self.events_processed += 1;
            match kind {
                EventKind::Arrival { flow, packet_seq } => self.on_arrival(now, flow, packet_seq),
                EventKind::LinkDelivery { tx, link } => self.on_delivery(now, tx, link),
                EventKind::LinkDrop { tx, link, failure } => self.on_drop(now, tx, link, failure),
                EventKind::NodeProcess { tx, node } => self.process_at_node(now, tx, node),
                EventKind::FailureToggle { link, up } => self.link_up[link.0] = up,
            }
        }
    }

    fn finish(self) -> Trace {
        let sinks: Vec<NodeId> = self
            .topology
            .demands()
            .iter()
            .flat_map(|d| d.sinks.iter().copied())
            .collect();
        let generation_size = self
            .topology
            .demands()
            .first()
            .and_then(|d| self.flow_generation_size.get(&d.flow.0).copied())
            .unwrap_or(1);
        let trace = Trace {
            mode: self.config.mode,
            offered_load_pps: self.config.params.lambda,
            duration_s: self.config.duration_s,
            generation_size,
            sinks,
            transmissions: self.records,
            link_counters: self.link_counters,
            per_generation_link_sends: self.per_gen_link,
            per_path_sends: self.per_path,
            sink_generations: self.sink_generations,
            dispatched_generations: self.dispatched,
            events_processed: self.events_processed,
        };
        debug_assert!(trace.conservation_holds());
        trace
    }

    fn flow_demand(&self, flow: u32) -> &super::Demand {
        self.topology
            .demands()
            .iter()
            .find(|d| d.flow.0 == flow)
            .expect("validated flow")
    }

    fn flow_index(&self, flow: u32) -> u64 {
        self.topology
            .demands()
            .iter()
            .position(|d| d.flow.0 == flow)
            .expect("validated flow") as u64
    }

    fn synth_payload(flow: u32, generation: u64, index: usize) -> Vec<u8> {
        let g = (generation & 0xFFFF_FFFF) as u32;
        let mut payload = g.to_le_bytes().to_vec();
        payload.extend_from_slice(&[index as u8, flow as u8, 0xC0, 0xDE]);
        payload
    }

    fn on_arrival(&mut self, now: SimTime, flow: u32, packet_seq: u64) {
        let g = self.flow_generation_size[&flow] as u64;
        let generation = self.flow_index(flow) * GENERATION_STRIDE + packet_seq / g;
        let index = (packet_seq % g) as usize;
        let packet = SourcePacket::new(
            generation,
            index,
            Self::synth_payload(flow, generation, index),
        );
        let demand = self.flow_demand(flow);
        let (source, sinks) = (demand.source, demand.sinks.clone());

        // A generation counts as dispatched once its last source packet
        // has arrived; a trailing partial generation at the traffic
        // horizon is not charged against the network.
        if index as u64 == g - 1 {
            self.dispatched.insert(generation);
        }
        match self.config.mode {
            Mode::Coded
                if self
                    .node_rules
                    .get(&(source.0, flow))
                    .is_some_and(|r| r.encode.is_some()) =>
            {
                // Encoder sits at the source: feed it directly.
                self.feed_encoder(now, source, flow, packet, now);
            }
            _ => {
                let kind = PacketKind::Plain {
                    source_index: index,
                };
                let tx = self.new_tx(
                    flow,
                    generation,
                    kind,
                    None,
                    now,
                    now,
                    Payload::Plain(packet),
                    sinks,
                );
                self.process_at_node(now, tx, source);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn new_tx(
        &mut self,
        flow: u32,
        generation: u64,
        kind: PacketKind,
        path: Option<usize>,
        src_time: SimTime,
        send_time: SimTime,
        payload: Payload,
        sink_set: Vec<NodeId>,
    ) -> TxId {
        let id = TxId(self.records.len());
        self.records.push(TransmissionRecord {
            id,
            flow,
            generation,
            kind,
            path,
            src_time,
            send_time,
            outcome: Outcome::InFlight,
            hops: 0,
        });
        self.tx_states.push(TxState {
            payload,
            sink_set,
            route: None,
            attempt: 0,
        });
        id
    }

    /// Per-path load counter; counted once per dispatch onto a path.
    fn count_path(&mut self, path: Option<usize>) {
        if let Some(p) = path {
            *self.per_path.entry(p).or_default() += 1;
        }
    }

    /// Puts a transmission on a link: loss draw, then a delivery or drop
    /// event one hop-delay later. A downed link drops immediately with the
    /// failure tag.
    fn transmit(&mut self, at: SimTime, tx: TxId, link_id: LinkId) {
        let link = self.topology.link(link_id);
        self.link_counters[link_id.0].sent += 1;
        if let Some(map) = self.per_gen_link.as_mut() {
            *map.entry((link_id, self.records[tx.0].generation))
                .or_default() += 1;
        }
        if !self.link_up[link_id.0] {
            self.queue.push(
                at,
                EventKind::LinkDrop {
                    tx,
                    link: link_id,
                    failure: true,
                },
            );
            return;
        }
        let arrive = at + link.delay();
        let lost =
            link.loss_prob > 0.0 && self.link_rngs[link_id.0].random::<f64>() < link.loss_prob;
        if lost {
            self.queue.push(
                arrive,
                EventKind::LinkDrop {
                    tx,
                    link: link_id,
                    failure: false,
                },
            );
        } else {
            self.queue
                .push(arrive, EventKind::LinkDelivery { tx, link: link_id });
        }
    }

    fn on_delivery(&mut self, now: SimTime, tx: TxId, link: LinkId) {
        self.link_counters[link.0].delivered += 1;
        self.records[tx.0].hops += 1;
        let node = self.topology.link(link).to;
        self.queue.push(now, EventKind::NodeProcess { tx, node });
    }

    fn on_drop(&mut self, now: SimTime, tx: TxId, link: LinkId, failure: bool) {
        if failure {
            self.link_counters[link.0].dropped_failure += 1;
        } else {
            self.link_counters[link.0].dropped_loss += 1;
        }
        let reason = if failure {
            DropReason::Failure
        } else {
            DropReason::Loss
        };
        self.records[tx.0].outcome = Outcome::Dropped { at: now, reason };
        // Source retransmission, uncoded only, one path round-trip after
        // the original send.
        if self.config.mode == Mode::Uncoded
            && self.tx_states[tx.0].attempt < self.config.retransmit_limit
        {
            if let Some((first_link, path_delay)) = self.tx_states[tx.0].route {
                let record = &self.records[tx.0];
                let retry_at = record.send_time + path_delay + path_delay;
                let attempt = self.tx_states[tx.0].attempt + 1;
                let retry = self.new_tx(
                    record.flow,
                    record.generation,
                    PacketKind::Retry { attempt },
                    record.path,
                    record.src_time,
                    retry_at,
                    self.tx_states[tx.0].payload.clone(),
                    self.tx_states[tx.0].sink_set.clone(),
                );
                self.tx_states[retry.0].attempt = attempt;
                self.tx_states[retry.0].route = Some((first_link, path_delay));
                self.records[retry.0].send_time = retry_at;
                self.count_path(self.records[retry.0].path);
                self.transmit(retry_at, retry, first_link);
            }
        }
    }

    /// Reconstructs the single-forward chain a packet will take from
    /// `link` toward `sink`, returning the total one-way delay.
    fn path_delay_from(
        &self,
        flow: u32,
        sink: NodeId,
        index: Option<usize>,
        link: LinkId,
    ) -> SimTime {
        let mut delay = SimTime::ZERO;
        let mut current = link;
        for _ in 0..self.topology.links().len() + 1 {
            delay = delay + self.topology.link(current).delay();
            let node = self.topology.link(current).to;
            if node == sink {
                break;
            }
            let Some(rules) = self.node_rules.get(&(node.0, flow)) else {
                break;
            };
            let group = Self::forward_group(rules, sink, index);
            match group.first() {
                Some((next, _)) if group.len() == 1 => current = *next,
                _ => break,
            }
        }
        delay
    }

    /// Most-specific forward rules for (sink, index): (link, weight) list.
    fn forward_group(rules: &NodeRules, sink: NodeId, index: Option<usize>) -> Vec<(LinkId, f64)> {
        let specificity = |r: &FlowRule| -> Option<u32> {
            let sink_score = match r.sink {
                Some(s) if s == sink => 2,
                None => 0,
                Some(_) => return None,
            };
            let idx_score = match (r.source_index, index) {
                (Some(a), Some(b)) if a == b => 1,
                (None, _) => 0,
                _ => return None,
            };
            Some(sink_score + idx_score)
        };
        let best = rules.forwards.iter().filter_map(|r| specificity(r)).max();
        let Some(best) = best else {
            return Vec::new();
        };
        rules
            .forwards
            .iter()
            .filter(|r| specificity(r) == Some(best))
            .filter_map(|r| match r.action {
                Action::Forward { out, weight } => Some((out, weight)),
                _ => None,
            })
            .collect()
    }

    /// Smooth weighted round-robin pick; deterministic and exact in the
    /// long run.
    fn wrr_pick(&mut self, key: (usize, u32, usize), weights: &[f64]) -> usize {
        let state = self
            .wrr
            .entry(key)
            .or_insert_with(|| vec![0.0; weights.len()]);
        debug_assert_eq!(state.len(), weights.len());
        let mut best = 0;
        for i in 0..state.len() {
            state[i] += weights[i];
            if state[i] > state[best] + 1e-12 {
                best = i;
            }
        }
        state[best] -= 1.0;
        best
    }

    fn feed_encoder(
        &mut self,
        now: SimTime,
        node: NodeId,
        flow: u32,
        packet: SourcePacket,
        src_time: SimTime,
    ) {
        let generation = packet.generation_id;
        let key = (node.0, flow, generation);
        let buffer = self.encode_buffers.entry(key).or_default();
        buffer.push((packet, src_time));
        let rules = &self.node_rules[&(node.0, flow)];
        let encode = rules.encode.expect("encoder present");
        let Action::Encode {
            generation_size,
            packets_per_generation,
            field,
            ref outputs,
            rotate,
        } = encode.action
        else {
            unreachable!()
        };
        if self.encode_buffers[&key].len() < generation_size {
            return;
        }
        let mut taken = self.encode_buffers.remove(&key).unwrap();
        taken.sort_by_key(|(p, _)| p.index);
        let sources: Vec<SourcePacket> = taken.iter().map(|(p, _)| p.clone()).collect();
        let src_base = taken.iter().map(|(_, t)| *t).max().unwrap_or(now);
        let batch = systematic_batch(
            &sources,
            packets_per_generation,
            field,
            &mut self.node_rngs[node.0],
        )
        .expect("validated generation");
        // Path identity of a slot = position of its link among the
        // encoder's distinct output links.
        let mut distinct_links: Vec<LinkId> = Vec::new();
        for out in outputs {
            if !distinct_links.contains(&out.link) {
                distinct_links.push(out.link);
            }
        }
        let dispatch_at = now + SimTime::from_secs_f64(self.config.params.l_coding);
        for (j, coded) in batch.into_iter().enumerate() {
            let slot = if rotate {
                (j + (generation % GENERATION_STRIDE) as usize) % outputs.len()
            } else {
                j % outputs.len()
            };
            let out = &outputs[slot];
            let path = distinct_links.iter().position(|l| *l == out.link);
            let kind = match coded.vector.unit_index() {
                Some(i) => PacketKind::Systematic { source_index: i },
                None => PacketKind::Redundancy,
            };
            let tx = self.new_tx(
                flow,
                generation,
                kind,
                path,
                src_base,
                dispatch_at,
                Payload::Coded(coded),
                out.sinks.clone(),
            );
            self.count_path(path);
            self.transmit(dispatch_at, tx, out.link);
        }
    }

    fn process_at_node(&mut self, now: SimTime, tx: TxId, node: NodeId) {
        let flow = self.records[tx.0].flow;
        let generation = self.records[tx.0].generation;
        let sink_set = self.tx_states[tx.0].sink_set.clone();
        let rules_exist = self.node_rules.contains_key(&(node.0, flow));

        // Terminal delivery when this node is one of the packet's sinks.
        if sink_set.contains(&node) {
            let is_decoder = rules_exist && self.node_rules[&(node.0, flow)].decode;
            self.records[tx.0].outcome = Outcome::Delivered { at: now };
            match (&self.tx_states[tx.0].payload, is_decoder) {
                (Payload::Coded(packet), true) => {
                    let packet = packet.clone();
                    self.sink_insert_coded(node, flow, generation, now, &packet);
                }
                (Payload::Plain(packet), _) => {
                    let index = packet.index;
                    let sg = self.sink_generations.entry((node, generation)).or_default();
                    sg.received_plain.insert(index);
                }
                (Payload::Coded(packet), false) => {
                    // Coded packet at a sink without a decode rule: keep
                    // the receive on record; it cannot be consumed.
                    let kind = match packet.vector.unit_index() {
                        Some(i) => PacketKind::Systematic { source_index: i },
                        None => PacketKind::Redundancy,
                    };
                    self.sink_generations
                        .entry((node, generation))
                        .or_default()
                        .received_kinds
                        .push(kind);
                }
            }
            let remainder: Vec<NodeId> = sink_set.iter().copied().filter(|s| *s != node).collect();
            if !remainder.is_empty() {
                self.spawn_children(now, tx, node, remainder);
            }
            return;
        }

        if !rules_exist {
            // Nowhere to go: the packet dies here. Validation prevents
            // this for covered demands.
            self.records[tx.0].outcome = Outcome::Forwarded { at: now };
            return;
        }

        // Encoder node: plain packets are consumed into the generation
        // buffer.
        if self.node_rules[&(node.0, flow)].encode.is_some() {
            if let Payload::Plain(packet) = &self.tx_states[tx.0].payload {
                let packet = packet.clone();
                let src_time = self.records[tx.0].src_time;
                self.records[tx.0].outcome = Outcome::Forwarded { at: now };
                self.feed_encoder(now, node, flow, packet, src_time);
                return;
            }
        }

        // Recode node: combine everything heard for this generation into a
        // fresh packet on the continuation link.
        if let Some(recode_rule) = self.node_rules[&(node.0, flow)].recode {
            if let Payload::Coded(packet) = &self.tx_states[tx.0].payload {
                let Action::Recode { out } = recode_rule.action else {
                    unreachable!()
                };
                let packet = packet.clone();
                self.records[tx.0].outcome = Outcome::Forwarded { at: now };
                let buffer = self.recode_buffers.entry((node.0, generation)).or_default();
                buffer.push(packet);
                let inputs = buffer.clone();
                let field = self.flow_field[&flow];
                let weights: Vec<u8> = (0..inputs.len())
                    .map(|_| field.random_nonzero(&mut self.node_rngs[node.0]))
                    .collect();
                let combined = crate::codec::recode(&inputs, &weights, field)
                    .expect("same-generation recode inputs");
                let src_time = self.records[tx.0].src_time;
                let child = self.new_tx(
                    flow,
                    generation,
                    PacketKind::Recoded,
                    self.records[tx.0].path,
                    src_time,
                    now,
                    Payload::Coded(combined),
                    sink_set,
                );
                self.transmit(now, child, out);
                return;
            }
        }

        self.spawn_children(now, tx, node, sink_set);
    }

    /// Forwards a packet toward the given sinks, continuing in place when
    /// a single out-link covers all of them and splitting into child
    /// transmissions otherwise.
    fn spawn_children(&mut self, now: SimTime, tx: TxId, node: NodeId, sinks: Vec<NodeId>) {
        let flow = self.records[tx.0].flow;
        let index = match &self.tx_states[tx.0].payload {
            Payload::Plain(p) => Some(p.index),
            Payload::Coded(_) => None,
        };
        // Resolve each sink to an out-link.
        let mut by_link: BTreeMap<LinkId, Vec<NodeId>> = BTreeMap::new();
        for sink in sinks {
            let rules = &self.node_rules[&(node.0, flow)];
            let group = Self::forward_group(rules, sink, index);
            if group.is_empty() {
                continue; // validation keeps this unreachable for demands
            }
            let link = if group.len() == 1 {
                group[0].0
            } else {
                let weights: Vec<f64> = group.iter().map(|(_, w)| *w).collect();
                let pick = self.wrr_pick((node.0, flow, sink.0), &weights);
                group[pick].0
            };
            by_link.entry(link).or_default().push(sink);
        }
        match by_link.len() {
            0 => {
                self.records[tx.0].outcome = Outcome::Forwarded { at: now };
            }
            1 => {
                let (link, covered) = by_link.into_iter().next().unwrap();
                self.tx_states[tx.0].sink_set = covered;
                // Record the dispatch route the first time the packet hits
                // a link (source dispatch), for retries and path loads.
                if self.records[tx.0].hops == 0 && self.tx_states[tx.0].route.is_none() {
                    let sink = self.tx_states[tx.0].sink_set[0];
                    let delay = self.path_delay_from(flow, sink, index, link);
                    self.tx_states[tx.0].route = Some((link, delay));
                    if self.records[tx.0].path.is_none() {
                        let path_idx = self.dispatch_path_index(node, flow, link);
                        self.records[tx.0].path = path_idx;
                        self.count_path(path_idx);
                    }
                }
                self.transmit(now, tx, link);
            }
            _ => {
                self.records[tx.0].outcome = Outcome::Forwarded { at: now };
                let record = self.records[tx.0].clone();
                for (link, covered) in by_link {
                    let child = self.new_tx(
                        flow,
                        record.generation,
                        record.kind,
                        record.path,
                        record.src_time,
                        now,
                        self.tx_states[tx.0].payload.clone(),
                        covered,
                    );
                    self.transmit(now, child, link);
                }
            }
        }
    }

    /// Path index of a source dispatch = position of the chosen link among
    /// the node's forward links for the flow, in rule order.
    fn dispatch_path_index(&self, node: NodeId, flow: u32, link: LinkId) -> Option<usize> {
        let rules = self.node_rules.get(&(node.0, flow))?;
        let mut seen = Vec::new();
        for r in &rules.forwards {
            if let Action::Forward { out, .. } = r.action {
                if !seen.contains(&out) {
                    seen.push(out);
                }
            }
        }
        seen.iter().position(|l| *l == link)
    }

    fn sink_insert_coded(
        &mut self,
        sink: NodeId,
        flow: u32,
        generation: u64,
        now: SimTime,
        packet: &CodedPacket,
    ) {
        let g = self.flow_generation_size[&flow];
        let field = self.flow_field[&flow];
        let decoder = self
            .decoders
            .entry((sink.0, generation))
            .or_insert_with(|| DecoderState::new(generation, g, field));
        decoder
            .insert(packet)
            .expect("validated coded packet inserts cleanly");
        let complete = decoder.is_complete();
        let rank = decoder.rank();
        // Debug builds verify full source recovery against the synthesized
        // payloads, end to end through every encode/recode hop.
        #[cfg(debug_assertions)]
        if complete {
            let sources = decoder.decode().expect("complete decoder");
            for (i, s) in sources.iter().enumerate() {
                debug_assert_eq!(
                    s.payload,
                    Self::synth_payload(flow, generation, i),
                    "decoded payload mismatch at {} gen {generation}\n{decoder}",
                    self.topology.node_name(sink)
                );
            }
        }
        let kind = match packet.vector.unit_index() {
            Some(i) => PacketKind::Systematic { source_index: i },
            None => PacketKind::Redundancy,
        };
        let sg = self.sink_generations.entry((sink, generation)).or_default();
        sg.received_kinds.push(kind);
        sg.rank = rank;
        if complete && sg.decoded_at.is_none() {
            sg.decoded_at = Some(now);
        }
    }
}
