//! Simulated centralized control plane.
//!
//! The controller owns a topology snapshot, computes multipath routes,
//! and installs the flow rules the data plane executes: forward with a
//! split weight, encode at the first branch node shared by all sink
//! paths, recode where paths merge, decode at sinks. Southbound is plain
//! function calls; there is no wire protocol here.

use crate::analytic::ScenarioParams;
use crate::gf::FieldKind;
use crate::simnet::{FlowId, LinkId, Mode, NodeId, Topology};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("no path from '{from}' to '{sink}'")]
    Unreachable { from: String, sink: String },
    #[error("flow {0} has no demand in the topology")]
    NoDemand(u32),
    #[error("flow {0} has no installed rules")]
    UnknownFlow(u32),
    #[error("link {0:?} is not part of the topology snapshot")]
    UnknownLink(LinkId),
    #[error("unsupported demand shape: {0}")]
    Unsupported(String),
    #[error("load stats must cover all {expected} active paths, got {actual}")]
    BadLoadStats { expected: usize, actual: usize },
}

/// One output slot of an encoder: batch packet j goes out on `link`
/// addressed to `sinks`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeOutput {
    pub link: LinkId,
    pub sinks: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Forward {
        out: LinkId,
        weight: f64,
    },
    Encode {
        generation_size: usize,
        packets_per_generation: usize,
        field: FieldKind,
        outputs: Vec<EncodeOutput>,
        /// Rotate output slots per generation (round-robin over paths).
        rotate: bool,
    },
    Recode {
        out: LinkId,
    },
    Decode,
}

impl Action {
    fn order_label(&self) -> &'static str {
        match self {
            Action::Decode => "decode",
            Action::Encode { .. } => "encode",
            Action::Forward { .. } => "forward",
            Action::Recode { .. } => "recode",
        }
    }
}

/// A controller-installed instruction at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRule {
    pub node: NodeId,
    pub flow: FlowId,
    /// Restrict to one sink of the flow (None = any).
    pub sink: Option<NodeId>,
    /// Restrict to one source index within the generation (None = any).
    pub source_index: Option<usize>,
    pub action: Action,
    pub priority: i32,
}

/// A loop-free route.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    pub links: Vec<LinkId>,
}

impl Path {
    pub fn contains_link(&self, link: LinkId) -> bool {
        self.links.contains(&link)
    }
}

/// What to install for one flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub mode: Mode,
    /// Redundancy factor: coded packets per source packet.
    pub k: u32,
    /// Source packets grouped per generation (unicast coding).
    pub generation_size: usize,
    pub field: FieldKind,
    /// Paths to request from path computation.
    pub n: u32,
    /// Uncoded split: fraction of traffic on the heaviest path.
    pub heaviest_path_fraction: f64,
}

impl FlowSpec {
    pub fn from_params(params: &ScenarioParams, mode: Mode) -> Self {
        Self {
            mode,
            k: params.k,
            generation_size: 1,
            field: FieldKind::Gf256,
            n: params.n,
            heaviest_path_fraction: params.heaviest_path_fraction,
        }
    }
}

/// Rules, designated paths and warnings produced by one install.
type InstallOutcome = (Vec<FlowRule>, Vec<Path>, Vec<String>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleUpdate {
    /// Rule set untouched (coded flows ride out failures on redundancy).
    Unchanged,
    /// Paths recomputed and rules reinstalled.
    Reinstalled,
    /// No surviving path; the flow cannot be delivered.
    Undeliverable,
}

/// Global network view plus everything installed so far.
#[derive(Debug, Clone)]
pub struct ControllerState {
    topology: Topology,
    live: Vec<bool>,
    rules: BTreeMap<u32, Vec<FlowRule>>,
    path_sets: BTreeMap<u32, Vec<Path>>,
    specs: BTreeMap<u32, FlowSpec>,
    warnings: Vec<String>,
    undeliverable: BTreeSet<u32>,
}

impl ControllerState {
    pub fn new(topology: Topology) -> Self {
        let live = vec![true; topology.links().len()];
        Self {
            topology,
            live,
            rules: BTreeMap::new(),
            path_sets: BTreeMap::new(),
            specs: BTreeMap::new(),
            warnings: Vec::new(),
            undeliverable: BTreeSet::new(),
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn rules_for(&self, flow: FlowId) -> Option<&[FlowRule]> {
        self.rules.get(&flow.0).map(|v| v.as_slice())
    }

    /// All installed rules, flattened in flow order.
    pub fn all_rules(&self) -> Vec<FlowRule> {
        self.rules.values().flatten().cloned().collect()
    }

    pub fn paths_for(&self, flow: FlowId) -> Option<&[Path]> {
        self.path_sets.get(&flow.0).map(|v| v.as_slice())
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_undeliverable(&self, flow: FlowId) -> bool {
        self.undeliverable.contains(&flow.0)
    }

    pub fn link_is_live(&self, link: LinkId) -> bool {
        self.live[link.0]
    }

    /// Installs forward/encode/recode/decode rules for a flow. Coded mode
    /// places the encoder at the first branch node shared by all sink
    /// paths (the source when paths diverge immediately) and a decoder at
    /// every sink; uncoded mode installs weighted forwards, degenerating
    /// to the single best path when the heaviest-path fraction is 1.
    pub fn install_coded_flow(
        &mut self,
        flow: FlowId,
        spec: &FlowSpec,
    ) -> Result<Vec<FlowRule>, ControllerError> {
        let demand = self
            .topology
            .demands()
            .iter()
            .find(|d| d.flow == flow)
            .cloned()
            .ok_or(ControllerError::NoDemand(flow.0))?;
        let (rules, paths, warnings) = if demand.sinks.len() == 1 {
            self.build_unicast(flow, demand.source, demand.sinks[0], spec)?
        } else {
            self.build_multicast(flow, demand.source, &demand.sinks, spec)?
        };
        self.warnings.extend(warnings);
        self.rules.insert(flow.0, rules.clone());
        self.path_sets.insert(flow.0, paths);
        self.specs.insert(flow.0, spec.clone());
        self.undeliverable.remove(&flow.0);
        Ok(rules)
    }

    fn build_unicast(
        &self,
        flow: FlowId,
        source: NodeId,
        sink: NodeId,
        spec: &FlowSpec,
    ) -> Result<InstallOutcome, ControllerError> {
        let paths = compute_paths_live(&self.topology, &self.live, source, sink, spec.n as usize)?;
        let mut warnings = Vec::new();
        let mut rules = Vec::new();
        match spec.mode {
            Mode::Coded => {
                if (paths.len() as u32) < spec.k {
                    warnings.push(format!(
                        "flow {}: {} transmissions multiplexed over {} available paths",
                        flow.0,
                        spec.k,
                        paths.len()
                    ));
                }
                let g = spec.generation_size.max(1);
                let m = spec.k as usize * g;
                let outputs = (0..m)
                    .map(|j| EncodeOutput {
                        link: paths[j % paths.len()].links[0],
                        sinks: vec![sink],
                    })
                    .collect();
                rules.push(FlowRule {
                    node: source,
                    flow,
                    sink: None,
                    source_index: None,
                    action: Action::Encode {
                        generation_size: g,
                        packets_per_generation: m,
                        field: spec.field,
                        outputs,
                        rotate: true,
                    },
                    priority: 0,
                });
                self.push_interior_forwards(&mut rules, flow, &paths, spec.mode);
                rules.push(FlowRule {
                    node: sink,
                    flow,
                    sink: Some(sink),
                    source_index: None,
                    action: Action::Decode,
                    priority: 0,
                });
            }
            Mode::Uncoded => {
                let s = paths.len();
                let fraction = spec.heaviest_path_fraction;
                let weights: Vec<f64> = if s == 1 || fraction >= 1.0 - 1e-9 {
                    std::iter::once(1.0)
                        .chain(std::iter::repeat(0.0))
                        .take(s)
                        .collect()
                } else {
                    std::iter::once(fraction)
                        .chain(std::iter::repeat_n(
                            (1.0 - fraction) / (s - 1) as f64,
                            s - 1,
                        ))
                        .collect()
                };
                for (path, weight) in paths.iter().zip(&weights) {
                    if *weight <= 0.0 {
                        continue;
                    }
                    rules.push(FlowRule {
                        node: source,
                        flow,
                        sink: Some(sink),
                        source_index: None,
                        action: Action::Forward {
                            out: path.links[0],
                            weight: *weight,
                        },
                        priority: 0,
                    });
                }
                let used: Vec<Path> = paths
                    .iter()
                    .zip(&weights)
                    .filter(|(_, w)| **w > 0.0)
                    .map(|(p, _)| p.clone())
                    .collect();
                self.push_interior_forwards(&mut rules, flow, &used, spec.mode);
            }
        }
        Ok((rules, paths, warnings))
    }

    /// Weight-1 forwards at the interior nodes of each path; a node shared
    /// by several coded paths with a single continuation becomes a recode
    /// point.
    fn push_interior_forwards(
        &self,
        rules: &mut Vec<FlowRule>,
        flow: FlowId,
        paths: &[Path],
        mode: Mode,
    ) {
        let mut next_links: BTreeMap<usize, BTreeSet<LinkId>> = BTreeMap::new();
        let mut visits: BTreeMap<usize, usize> = BTreeMap::new();
        for path in paths {
            for (i, node) in path.nodes.iter().enumerate() {
                if i == 0 || i == path.nodes.len() - 1 {
                    continue;
                }
                next_links.entry(node.0).or_default().insert(path.links[i]);
                *visits.entry(node.0).or_default() += 1;
            }
        }
        for (node, links) in next_links {
            let merge = mode == Mode::Coded && visits[&node] >= 2 && links.len() == 1;
            for link in links {
                rules.push(FlowRule {
                    node: NodeId(node),
                    flow,
                    sink: None,
                    source_index: None,
                    action: if merge {
                        Action::Recode { out: link }
                    } else {
                        Action::Forward {
                            out: link,
                            weight: 1.0,
                        }
                    },
                    priority: 0,
                });
            }
        }
    }

    /// The butterfly-style multicast install: every sink gets a private
    /// side path plus one shared path; systematic packets ride the sides
    /// and the combination rides the shared bottleneck.
    fn build_multicast(
        &self,
        flow: FlowId,
        source: NodeId,
        sinks: &[NodeId],
        spec: &FlowSpec,
    ) -> Result<InstallOutcome, ControllerError> {
        let mut sinks: Vec<NodeId> = sinks.to_vec();
        sinks.sort_by(|a, b| self.topology.node_name(*a).cmp(self.topology.node_name(*b)));
        let mut per_sink: Vec<(NodeId, Vec<Path>)> = Vec::new();
        for sink in &sinks {
            let paths = compute_paths_live(&self.topology, &self.live, source, *sink, 2)?;
            if paths.len() < 2 {
                return Err(ControllerError::Unsupported(format!(
                    "multicast needs a side and a shared path to '{}'",
                    self.topology.node_name(*sink)
                )));
            }
            per_sink.push((*sink, paths));
        }
        // First branch node shared by all sink paths: end of the common
        // node prefix (the source if paths diverge immediately).
        let mut prefix: Vec<NodeId> = per_sink[0].1[0].nodes.clone();
        for (_, paths) in &per_sink {
            for path in paths {
                let common = prefix
                    .iter()
                    .zip(&path.nodes)
                    .take_while(|(a, b)| a == b)
                    .count();
                prefix.truncate(common);
            }
        }
        let encode_node = *prefix.last().unwrap_or(&source);

        let side_of = |paths: &[Path]| -> Option<LinkId> {
            let p = &paths[0];
            let at = p.nodes.iter().position(|n| *n == encode_node)?;
            p.links.get(at).copied()
        };
        let shared_of = |paths: &[Path]| -> Option<(LinkId, Vec<(NodeId, LinkId)>)> {
            let p = &paths[1];
            let at = p.nodes.iter().position(|n| *n == encode_node)?;
            let first = *p.links.get(at)?;
            let tail = (at + 1..p.links.len())
                .map(|i| (p.nodes[i], p.links[i]))
                .collect();
            Some((first, tail))
        };

        let mut shared_link = None;
        let mut sides = Vec::new();
        let mut tails: Vec<(NodeId, Vec<(NodeId, LinkId)>)> = Vec::new();
        for (sink, paths) in &per_sink {
            let side = side_of(paths).ok_or_else(|| {
                ControllerError::Unsupported("side path does not pass the encode node".into())
            })?;
            let (first, tail) = shared_of(paths).ok_or_else(|| {
                ControllerError::Unsupported("shared path does not pass the encode node".into())
            })?;
            match shared_link {
                None => shared_link = Some(first),
                Some(existing) if existing == first => {}
                Some(_) => {
                    return Err(ControllerError::Unsupported(
                        "sink paths do not share a common bottleneck".into(),
                    ))
                }
            }
            sides.push((*sink, side));
            tails.push((*sink, tail));
        }
        let shared_link = shared_link.expect("at least one sink");
        let g = sinks.len();

        let mut rules = Vec::new();
        // Source-to-encoder feeder chain.
        if encode_node != source {
            let feeder = &per_sink[0].1[0];
            let at = feeder
                .nodes
                .iter()
                .position(|n| *n == encode_node)
                .unwrap_or(0);
            for i in 0..at {
                rules.push(FlowRule {
                    node: feeder.nodes[i],
                    flow,
                    sink: None,
                    source_index: None,
                    action: Action::Forward {
                        out: feeder.links[i],
                        weight: 1.0,
                    },
                    priority: 0,
                });
            }
        }
        match spec.mode {
            Mode::Coded => {
                let mut outputs: Vec<EncodeOutput> = sides
                    .iter()
                    .map(|(sink, link)| EncodeOutput {
                        link: *link,
                        sinks: vec![*sink],
                    })
                    .collect();
                outputs.push(EncodeOutput {
                    link: shared_link,
                    sinks: sinks.clone(),
                });
                rules.push(FlowRule {
                    node: encode_node,
                    flow,
                    sink: None,
                    source_index: None,
                    action: Action::Encode {
                        generation_size: g,
                        packets_per_generation: g + 1,
                        field: spec.field,
                        outputs,
                        rotate: false,
                    },
                    priority: 0,
                });
                for sink in &sinks {
                    rules.push(FlowRule {
                        node: *sink,
                        flow,
                        sink: Some(*sink),
                        source_index: None,
                        action: Action::Decode,
                        priority: 0,
                    });
                }
            }
            Mode::Uncoded => {
                // Source index i rides its own side to sink position i and
                // the shared path to everyone else.
                for (pos, (sink, side)) in sides.iter().enumerate() {
                    for index in 0..g {
                        let out = if index == pos { *side } else { shared_link };
                        rules.push(FlowRule {
                            node: encode_node,
                            flow,
                            sink: Some(*sink),
                            source_index: Some(index),
                            action: Action::Forward { out, weight: 1.0 },
                            priority: 10,
                        });
                    }
                }
            }
        }
        // Shared-path tails, per sink.
        for (sink, tail) in &tails {
            for (node, link) in tail {
                rules.push(FlowRule {
                    node: *node,
                    flow,
                    sink: Some(*sink),
                    source_index: None,
                    action: Action::Forward {
                        out: *link,
                        weight: 1.0,
                    },
                    priority: 5,
                });
            }
        }
        let paths = per_sink.into_iter().flat_map(|(_, p)| p).collect();
        Ok((rules, paths, Vec::new()))
    }

    /// Reacts to a dead link: uncoded flows are rerouted onto the next
    /// computed path; coded flows keep their rules bit-identical while the
    /// surviving paths still carry a decodable generation, and raise
    /// redundancy otherwise. Coded rules may still reference the dead link
    /// by design (the redundancy absorbs what that path loses).
    pub fn handle_link_down(
        &mut self,
        link: LinkId,
    ) -> Result<BTreeMap<u32, RuleUpdate>, ControllerError> {
        if link.0 >= self.topology.links().len() {
            return Err(ControllerError::UnknownLink(link));
        }
        self.live[link.0] = false;
        let flows: Vec<u32> = self.rules.keys().copied().collect();
        let mut updates = BTreeMap::new();
        for flow in flows {
            let spec = self.specs[&flow].clone();
            let paths = self.path_sets[&flow].clone();
            let affected = paths.iter().any(|p| !self.path_is_live(p));
            if !affected {
                updates.insert(flow, RuleUpdate::Unchanged);
                continue;
            }
            let survivors = paths.iter().filter(|p| self.path_is_live(p)).count();
            let update = match spec.mode {
                Mode::Coded => {
                    if survivors == 0 {
                        self.undeliverable.insert(flow);
                        RuleUpdate::Undeliverable
                    } else if spec.k as usize * survivors >= paths.len() {
                        // Surviving paths still see >= g innovative
                        // packets per generation: leave rules alone.
                        RuleUpdate::Unchanged
                    } else {
                        let mut raised = spec.clone();
                        raised.k = paths.len().div_ceil(survivors) as u32;
                        match self.install_coded_flow(FlowId(flow), &raised) {
                            Ok(_) => RuleUpdate::Reinstalled,
                            Err(_) => {
                                self.undeliverable.insert(flow);
                                RuleUpdate::Undeliverable
                            }
                        }
                    }
                }
                Mode::Uncoded => match self.install_coded_flow(FlowId(flow), &spec) {
                    Ok(_) => RuleUpdate::Reinstalled,
                    Err(_) => {
                        self.undeliverable.insert(flow);
                        RuleUpdate::Undeliverable
                    }
                },
            };
            updates.insert(flow, update);
        }
        Ok(updates)
    }

    fn path_is_live(&self, path: &Path) -> bool {
        path.links.iter().all(|l| self.live[l.0])
    }

    /// Moves the flow's source split weights halfway toward uniform based
    /// on observed per-path loads. Fixed point: lambda/n on every path.
    pub fn rebalance(&mut self, flow: FlowId, loads: &[f64]) -> Result<Vec<f64>, ControllerError> {
        let rules = self
            .rules
            .get_mut(&flow.0)
            .ok_or(ControllerError::UnknownFlow(flow.0))?;
        let demand_source = self
            .topology
            .demands()
            .iter()
            .find(|d| d.flow == flow)
            .map(|d| d.source)
            .ok_or(ControllerError::NoDemand(flow.0))?;
        let group: Vec<usize> = rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.node == demand_source && matches!(r.action, Action::Forward { .. }))
            .map(|(i, _)| i)
            .collect();
        let current: Vec<f64> = group
            .iter()
            .map(|&i| match rules[i].action {
                Action::Forward { weight, .. } => weight,
                _ => unreachable!(),
            })
            .collect();
        if group.len() <= 1 {
            return Ok(current);
        }
        if loads.len() != group.len() {
            return Err(ControllerError::BadLoadStats {
                expected: group.len(),
                actual: loads.len(),
            });
        }
        let total: f64 = loads.iter().sum();
        if total <= 0.0 {
            return Ok(current);
        }
        let uniform = 1.0 / group.len() as f64;
        let new_weights: Vec<f64> = loads
            .iter()
            .map(|l| 0.5 * (l / total) + 0.5 * uniform)
            .collect();
        for (&i, &w) in group.iter().zip(&new_weights) {
            if let Action::Forward { weight, .. } = &mut rules[i].action {
                *weight = w;
            }
        }
        Ok(new_weights)
    }
}

/// Up to `n` maximally link-disjoint loop-free paths, shortest first by
/// hop count with ties broken by the lexicographic node-name sequence.
/// Links whose removal would disconnect the pair (shared feeders,
/// bottleneck bridges) may be reused; everything else is disjoint.
pub fn compute_paths(
    topology: &Topology,
    source: NodeId,
    sink: NodeId,
    n: usize,
) -> Result<Vec<Path>, ControllerError> {
    let live = vec![true; topology.links().len()];
    compute_paths_live(topology, &live, source, sink, n)
}

fn compute_paths_live(
    topology: &Topology,
    live: &[bool],
    source: NodeId,
    sink: NodeId,
    n: usize,
) -> Result<Vec<Path>, ControllerError> {
    let mut usable: BTreeSet<usize> = (0..topology.links().len()).filter(|&i| live[i]).collect();
    let mut paths: Vec<Path> = Vec::new();
    for _ in 0..n {
        let Some(path) = shortest_path(topology, &usable, source, sink) else {
            break;
        };
        if paths.contains(&path) {
            break;
        }
        // Remove the path's links except the ones the pair cannot live
        // without.
        for link in &path.links {
            usable.remove(&link.0);
            if !reachable(topology, &usable, source, sink) {
                usable.insert(link.0);
            }
        }
        paths.push(path);
    }
    if paths.is_empty() {
        return Err(ControllerError::Unreachable {
            from: topology.node_name(source).to_string(),
            sink: topology.node_name(sink).to_string(),
        });
    }
    Ok(paths)
}

fn reachable(topology: &Topology, usable: &BTreeSet<usize>, source: NodeId, sink: NodeId) -> bool {
    let mut seen = vec![false; topology.nodes().len()];
    let mut frontier = vec![source];
    seen[source.0] = true;
    while let Some(node) = frontier.pop() {
        if node == sink {
            return true;
        }
        for &idx in usable.iter() {
            let link = &topology.links()[idx];
            if link.from == node && !seen[link.to.0] {
                seen[link.to.0] = true;
                frontier.push(link.to);
            }
        }
    }
    false
}

/// BFS shortest path with deterministic lexicographic tie-breaking: hop
/// distances to the sink first, then a forward walk that always takes the
/// smallest-named next node on some shortest path.
fn shortest_path(
    topology: &Topology,
    usable: &BTreeSet<usize>,
    source: NodeId,
    sink: NodeId,
) -> Option<Path> {
    let n = topology.nodes().len();
    let mut dist = vec![u32::MAX; n];
    dist[sink.0] = 0;
    let mut frontier = std::collections::VecDeque::from([sink]);
    while let Some(node) = frontier.pop_front() {
        for &idx in usable.iter() {
            let link = &topology.links()[idx];
            if link.to == node && dist[link.from.0] == u32::MAX {
                dist[link.from.0] = dist[node.0] + 1;
                frontier.push_back(link.from);
            }
        }
    }
    if dist[source.0] == u32::MAX {
        return None;
    }
    let mut nodes = vec![source];
    let mut links = Vec::new();
    let mut current = source;
    while current != sink {
        let mut best: Option<(&str, LinkId, NodeId)> = None;
        for &idx in usable.iter() {
            let link = &topology.links()[idx];
            if link.from != current || dist[link.to.0] != dist[current.0] - 1 {
                continue;
            }
            let name = topology.node_name(link.to);
            if best.map(|(b, _, _)| name < b).unwrap_or(true) {
                best = Some((name, LinkId(idx), link.to));
            }
        }
        let (_, link, next) = best?;
        links.push(link);
        nodes.push(next);
        current = next;
    }
    Some(Path { nodes, links })
}

/// Canonical one-rule-per-line dump for golden-file tests.
pub fn dump_rules(topology: &Topology, rules: &[FlowRule]) -> String {
    let mut sorted: Vec<&FlowRule> = rules.iter().collect();
    sorted.sort_by_key(|r| {
        (
            topology.node_name(r.node).to_string(),
            r.flow.0,
            r.sink.map(|s| topology.node_name(s).to_string()),
            r.source_index.map(|i| i as i64).unwrap_or(-1),
            r.priority,
            r.action.order_label(),
        )
    });
    let link_name = |l: LinkId| {
        format!(
            "{}->{}",
            topology.node_name(topology.link(l).from),
            topology.node_name(topology.link(l).to)
        )
    };
    let mut out = String::new();
    for rule in sorted {
        let sink = rule
            .sink
            .map(|s| topology.node_name(s).to_string())
            .unwrap_or_else(|| "*".into());
        let idx = rule
            .source_index
            .map(|i| i.to_string())
            .unwrap_or_else(|| "*".into());
        let action = match &rule.action {
            Action::Forward { out, weight } => {
                format!("forward out={} w={:.4}", link_name(*out), weight)
            }
            Action::Encode {
                generation_size,
                packets_per_generation,
                field,
                outputs,
                rotate,
            } => {
                let outs = outputs
                    .iter()
                    .map(|o| {
                        let sinks = o
                            .sinks
                            .iter()
                            .map(|s| topology.node_name(*s))
                            .collect::<Vec<_>>()
                            .join(",");
                        format!("{} sinks({sinks})", link_name(o.link))
                    })
                    .collect::<Vec<_>>()
                    .join("; ");
                format!(
                    "encode g={generation_size} m={packets_per_generation} field={field} rotate={} outputs=[{outs}]",
                    if *rotate { "yes" } else { "no" }
                )
            }
            Action::Recode { out } => format!("recode out={}", link_name(*out)),
            Action::Decode => "decode".to_string(),
        };
        out.push_str(&format!(
            "{} flow={} sink={} idx={} prio={} {}\n",
            topology.node_name(rule.node),
            rule.flow.0,
            sink,
            idx,
            rule.priority,
            action
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::CaseId;
    use crate::simnet::{build_butterfly, build_two_path};

    fn names(topology: &Topology, path: &Path) -> Vec<String> {
        path.nodes
            .iter()
            .map(|n| topology.node_name(*n).to_string())
            .collect()
    }

    #[test]
    fn butterfly_two_paths_to_each_sink() {
        let t = build_butterfly();
        let (a, b2) = (t.find_node("A").unwrap(), t.find_node("B2").unwrap());
        let paths = compute_paths(&t, a, b2, 2).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(names(&t, &paths[0]), ["A", "T1", "B2"]);
        assert_eq!(names(&t, &paths[1]), ["A", "T1", "T2", "G", "B2"]);
    }

    #[test]
    fn chain_returns_single_path() {
        let mut t = Topology::new();
        let a = t.add_host("a");
        let b = t.add_switch("b");
        let c = t.add_host("c");
        let link = |from, to| crate::simnet::Link {
            from,
            to,
            capacity_pps: 1.0,
            loss_prob: 0.0,
            distance_km: 0.0,
            transmit_slots_per_round: 1,
        };
        t.add_link(link(a, b)).unwrap();
        t.add_link(link(b, c)).unwrap();
        let paths = compute_paths(&t, a, c, 2).unwrap();
        assert_eq!(paths.len(), 1);
        let one = compute_paths(&t, a, c, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(names(&t, &one[0]), ["a", "b", "c"]);
        assert!(matches!(
            compute_paths(&t, c, a, 1),
            Err(ControllerError::Unreachable { .. })
        ));
    }

    #[test]
    fn two_path_disjoint() {
        let t = build_two_path(&CaseId::Case1.params());
        let (s, d) = (t.find_node("S").unwrap(), t.find_node("D").unwrap());
        let paths = compute_paths(&t, s, d, 2).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(names(&t, &paths[0]), ["S", "R1", "D"]);
        assert_eq!(names(&t, &paths[1]), ["S", "R2", "D"]);
        // Fully link-disjoint here.
        assert!(paths[0].links.iter().all(|l| !paths[1].links.contains(l)));
    }

    fn butterfly_state() -> (ControllerState, FlowId) {
        (ControllerState::new(build_butterfly()), FlowId(0))
    }

    #[test]
    fn butterfly_coded_rules_have_expected_roles() {
        let (mut state, flow) = butterfly_state();
        let spec = FlowSpec {
            mode: Mode::Coded,
            k: 2,
            generation_size: 2,
            field: FieldKind::Binary,
            n: 2,
            heaviest_path_fraction: 0.8,
        };
        let rules = state.install_coded_flow(flow, &spec).unwrap();
        let t = state.topology();
        let by_name = |n: &str| t.find_node(n).unwrap();
        let encode: Vec<_> = rules
            .iter()
            .filter(|r| matches!(r.action, Action::Encode { .. }))
            .collect();
        assert_eq!(encode.len(), 1);
        assert_eq!(encode[0].node, by_name("T1"));
        if let Action::Encode {
            generation_size,
            packets_per_generation,
            ref outputs,
            rotate,
            ..
        } = encode[0].action
        {
            assert_eq!(generation_size, 2);
            assert_eq!(packets_per_generation, 3);
            assert!(!rotate);
            assert_eq!(outputs[0].link, t.find_link("T1", "B2").unwrap());
            assert_eq!(outputs[1].link, t.find_link("T1", "C2").unwrap());
            assert_eq!(outputs[2].link, t.find_link("T1", "T2").unwrap());
            assert_eq!(outputs[2].sinks.len(), 2);
        }
        let decodes: Vec<_> = rules
            .iter()
            .filter(|r| matches!(r.action, Action::Decode))
            .map(|r| r.node)
            .collect();
        assert_eq!(decodes, vec![by_name("B2"), by_name("C2")]);
        // Idempotent reinstall.
        let again = state.install_coded_flow(flow, &spec).unwrap();
        assert_eq!(rules, again);
    }

    #[test]
    fn butterfly_uncoded_splits_by_source_index() {
        let (mut state, flow) = butterfly_state();
        let spec = FlowSpec {
            mode: Mode::Uncoded,
            k: 2,
            generation_size: 2,
            field: FieldKind::Binary,
            n: 2,
            heaviest_path_fraction: 0.8,
        };
        let rules = state.install_coded_flow(flow, &spec).unwrap();
        let t = state.topology();
        let t1 = t.find_node("T1").unwrap();
        let b2 = t.find_node("B2").unwrap();
        let side = t.find_link("T1", "B2").unwrap();
        let bottleneck = t.find_link("T1", "T2").unwrap();
        let find = |sink, idx| {
            rules
                .iter()
                .find(|r| r.node == t1 && r.sink == Some(sink) && r.source_index == Some(idx))
                .unwrap()
        };
        assert!(matches!(find(b2, 0).action, Action::Forward { out, .. } if out == side));
        assert!(matches!(find(b2, 1).action, Action::Forward { out, .. } if out == bottleneck));
        assert!(!rules.iter().any(|r| matches!(r.action, Action::Decode)));
    }

    #[test]
    fn unicast_uncoded_single_best_path_when_fraction_one() {
        let t = build_two_path(&CaseId::Case1.params());
        let mut state = ControllerState::new(t);
        let mut spec = FlowSpec::from_params(&CaseId::Case1.params(), Mode::Uncoded);
        spec.heaviest_path_fraction = 1.0;
        let rules = state.install_coded_flow(FlowId(0), &spec).unwrap();
        let forwards_at_source: Vec<_> = rules
            .iter()
            .filter(|r| r.node == state.topology().find_node("S").unwrap())
            .collect();
        assert_eq!(forwards_at_source.len(), 1);
        assert!(
            matches!(forwards_at_source[0].action, Action::Forward { weight, .. } if weight == 1.0)
        );
    }

    #[test]
    fn unicast_uncoded_weighted_split() {
        let t = build_two_path(&CaseId::Case1.params());
        let mut state = ControllerState::new(t);
        let spec = FlowSpec::from_params(&CaseId::Case1.params(), Mode::Uncoded);
        let rules = state.install_coded_flow(FlowId(0), &spec).unwrap();
        let s = state.topology().find_node("S").unwrap();
        let weights: Vec<f64> = rules
            .iter()
            .filter(|r| r.node == s)
            .map(|r| match r.action {
                Action::Forward { weight, .. } => weight,
                _ => panic!("expected forward"),
            })
            .collect();
        assert_eq!(weights.len(), 2);
        assert!((weights[0] - 0.8).abs() < 1e-12);
        assert!((weights[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn unicast_coded_records_multiplex_warning() {
        let t = build_two_path(&CaseId::Case1.params());
        let mut state = ControllerState::new(t);
        let mut spec = FlowSpec::from_params(&CaseId::Case1.params(), Mode::Coded);
        spec.k = 3;
        state.install_coded_flow(FlowId(0), &spec).unwrap();
        assert!(state.warnings().iter().any(|w| w.contains("multiplexed")));
    }

    #[test]
    fn link_down_reroutes_uncoded_and_leaves_coded_untouched() {
        let params = CaseId::Case1.params();
        // Uncoded: primary dies, rules land on the backup only.
        let mut state = ControllerState::new(build_two_path(&params));
        let spec = FlowSpec::from_params(&params, Mode::Uncoded);
        state.install_coded_flow(FlowId(0), &spec).unwrap();
        let dead = state.topology().find_link("S", "R1").unwrap();
        let updates = state.handle_link_down(dead).unwrap();
        assert_eq!(updates[&0], RuleUpdate::Reinstalled);
        let rules = state.rules_for(FlowId(0)).unwrap();
        for rule in rules {
            match &rule.action {
                Action::Forward { out, .. } | Action::Recode { out } => {
                    assert!(state.link_is_live(*out), "rule references dead link");
                }
                _ => {}
            }
        }
        // Coded: one of two paths dies, zero rule changes.
        let mut state = ControllerState::new(build_two_path(&params));
        let spec = FlowSpec::from_params(&params, Mode::Coded);
        let before = state.install_coded_flow(FlowId(0), &spec).unwrap();
        let dead = state.topology().find_link("S", "R1").unwrap();
        let updates = state.handle_link_down(dead).unwrap();
        assert_eq!(updates[&0], RuleUpdate::Unchanged);
        assert_eq!(state.rules_for(FlowId(0)).unwrap(), before.as_slice());
        // Both paths die: undeliverable.
        let dead2 = state.topology().find_link("S", "R2").unwrap();
        let updates = state.handle_link_down(dead2).unwrap();
        assert_eq!(updates[&0], RuleUpdate::Undeliverable);
        assert!(state.is_undeliverable(FlowId(0)));
    }

    #[test]
    fn rebalance_moves_toward_uniform_and_converges() {
        let params = CaseId::Case1.params();
        let mut state = ControllerState::new(build_two_path(&params));
        let spec = FlowSpec::from_params(&params, Mode::Uncoded);
        state.install_coded_flow(FlowId(0), &spec).unwrap();
        let w = state.rebalance(FlowId(0), &[800.0, 200.0]).unwrap();
        assert!((w[0] - 0.65).abs() < 1e-12);
        assert!((w[1] - 0.35).abs() < 1e-12);
        // Stationary load follows the weights: geometric convergence.
        let mut weights = w;
        let mut iterations = 1;
        while (weights[0] - 0.5).abs() > 1e-6 {
            let loads: Vec<f64> = weights.iter().map(|w| w * 1000.0).collect();
            weights = state.rebalance(FlowId(0), &loads).unwrap();
            iterations += 1;
            assert!(iterations <= 100, "did not converge in 100 iterations");
        }
        // Uniform input is a fixed point.
        let again = state.rebalance(FlowId(0), &[500.0, 500.0]).unwrap();
        assert!((again[0] - 0.5).abs() < 1e-12);
        // Mismatched stats are rejected.
        assert!(matches!(
            state.rebalance(FlowId(0), &[1.0]),
            Err(ControllerError::BadLoadStats { .. })
        ));
    }

    #[test]
    fn rebalance_single_path_is_noop() {
        let params = CaseId::Case1.params();
        let mut state = ControllerState::new(build_two_path(&params));
        let mut spec = FlowSpec::from_params(&params, Mode::Uncoded);
        spec.heaviest_path_fraction = 1.0;
        state.install_coded_flow(FlowId(0), &spec).unwrap();
        let w = state.rebalance(FlowId(0), &[1000.0]).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn rule_invariants_hold_after_install() {
        for mode in [Mode::Uncoded, Mode::Coded] {
            let params = CaseId::Case1.params();
            let mut state = ControllerState::new(build_two_path(&params));
            let spec = FlowSpec::from_params(&params, mode);
            let rules = state.install_coded_flow(FlowId(0), &spec).unwrap();
            let mut groups: BTreeMap<(usize, Option<usize>, Option<usize>), f64> = BTreeMap::new();
            let mut decodes = 0;
            for rule in &rules {
                match rule.action {
                    Action::Forward { weight, .. } => {
                        *groups
                            .entry((rule.node.0, rule.sink.map(|s| s.0), rule.source_index))
                            .or_default() += weight;
                    }
                    Action::Decode => decodes += 1,
                    _ => {}
                }
            }
            for sum in groups.values() {
                assert!((sum - 1.0).abs() < 1e-9, "weights sum to {sum}");
            }
            assert_eq!(decodes, usize::from(mode == Mode::Coded));
        }
    }

    #[test]
    fn butterfly_coded_dump_is_stable() {
        let (mut state, flow) = butterfly_state();
        let spec = FlowSpec {
            mode: Mode::Coded,
            k: 2,
            generation_size: 2,
            field: FieldKind::Binary,
            n: 2,
            heaviest_path_fraction: 0.8,
        };
        let rules = state.install_coded_flow(flow, &spec).unwrap();
        let dump = dump_rules(state.topology(), &rules);
        let expected = "\
A flow=0 sink=* idx=* prio=0 forward out=A->T1 w=1.0000
B2 flow=0 sink=B2 idx=* prio=0 decode
C2 flow=0 sink=C2 idx=* prio=0 decode
G flow=0 sink=B2 idx=* prio=5 forward out=G->B2 w=1.0000
G flow=0 sink=C2 idx=* prio=5 forward out=G->C2 w=1.0000
T1 flow=0 sink=* idx=* prio=0 encode g=2 m=3 field=gf2 rotate=no outputs=[T1->B2 sinks(B2); T1->C2 sinks(C2); T1->T2 sinks(B2,C2)]
T2 flow=0 sink=B2 idx=* prio=5 forward out=T2->G w=1.0000
T2 flow=0 sink=C2 idx=* prio=5 forward out=T2->G w=1.0000
";
        assert_eq!(dump, expected);
    }
}
