//! Turns a validated config into topologies, rules and runs.

use crate::config::{ScenarioConfig, TopologySelect};
use anyhow::{bail, Context, Result};
use codednet::analytic::{evaluate_scenario, AnalyticReport};
use codednet::controller::{ControllerState, FlowSpec};
use codednet::gf::FieldKind;
use codednet::harness::{collect_metrics, MetricsReport};
use codednet::simnet::{build_butterfly, build_two_path, run, Mode, SimConfig, Topology, Trace};

pub fn analytic_report(config: &ScenarioConfig) -> Result<AnalyticReport> {
    evaluate_scenario(&config.params).context("evaluating the analytic model")
}

fn flow_spec(config: &ScenarioConfig, mode: Mode) -> FlowSpec {
    match config.topology {
        // The butterfly codes a two-packet generation over GF(2): the XOR
        // combination rides the shared bottleneck.
        TopologySelect::Butterfly => FlowSpec {
            mode,
            k: config.params.k,
            generation_size: 2,
            field: FieldKind::Binary,
            n: config.params.n,
            heaviest_path_fraction: config.params.heaviest_path_fraction,
        },
        _ => FlowSpec::from_params(&config.params, mode),
    }
}

fn build_topology(config: &ScenarioConfig) -> Result<Topology> {
    Ok(match &config.topology {
        TopologySelect::Butterfly => build_butterfly(),
        TopologySelect::TwoPath => build_two_path(&config.params),
        TopologySelect::Custom(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading topology file {}", path.display()))?;
            Topology::from_json(&text).context("parsing topology file")?
        }
    })
}

/// One seeded run of the configured scenario in the given mode.
pub fn simulate(config: &ScenarioConfig, mode: Mode, seed: u64) -> Result<(MetricsReport, Trace)> {
    let topology = build_topology(config)?;
    if topology.demands().is_empty() {
        bail!("topology has no demands to route");
    }
    let mut state = ControllerState::new(topology.clone());
    let spec = flow_spec(config, mode);
    let mut rules = Vec::new();
    let mut failure_paths = Vec::new();
    for demand in topology.demands() {
        let installed = state
            .install_coded_flow(demand.flow, &spec)
            .with_context(|| format!("installing rules for flow {}", demand.flow.0))?;
        rules.extend(installed);
        if config.params.p_failure > 0.0 {
            if let Some(paths) = state.paths_for(demand.flow) {
                failure_paths.extend(paths.iter().map(|p| p.links.clone()));
            }
        }
    }
    let mut sim = SimConfig::new(config.params.clone(), mode).with_seed(seed);
    sim.traffic = config.traffic;
    sim.duration_s = config.duration_s;
    sim.retransmit_limit = config.retransmit_limit;
    sim.failure_paths = failure_paths;
    let trace = run(&topology, &rules, &sim).context("simulation run")?;
    let report = collect_metrics(&trace, config.duration_s).context("collecting metrics")?;
    Ok((report, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use codednet::analytic::CaseId;

    #[test]
    fn simulate_butterfly_from_config() {
        let mut config = ScenarioConfig::preset(CaseId::Case1);
        config.set("topology", "butterfly").unwrap();
        config.set("p_loss", "0").unwrap();
        config.set("p_failure", "0").unwrap();
        config.set("lambda", "200").unwrap();
        config.set("duration_s", "1").unwrap();
        let (report, trace) = simulate(&config, Mode::Coded, 1).unwrap();
        assert_eq!(trace.generations_complete(), 100);
        assert_eq!(report.packet_loss, 0.0);
    }

    #[test]
    fn simulate_two_path_case1() {
        let mut config = ScenarioConfig::preset(CaseId::Case1);
        config.set("duration_s", "2").unwrap();
        config.set("p_failure", "0").unwrap();
        let (report, _) = simulate(&config, Mode::Uncoded, 1).unwrap();
        assert!((report.packet_loss - 0.30).abs() < 0.04);
    }

    #[test]
    fn custom_topology_file_runs() {
        let topology = build_two_path(&CaseId::Case1.params());
        let dir = std::env::temp_dir().join("codednet-test-topo");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("two_path.json");
        std::fs::write(&path, topology.to_json()).unwrap();
        let mut config = ScenarioConfig::preset(CaseId::Case1);
        config.set("topology", path.to_str().unwrap()).unwrap();
        config.set("duration_s", "1").unwrap();
        config.validate().unwrap();
        let (report, _) = simulate(&config, Mode::Coded, 3).unwrap();
        assert!(report.counts.generations_dispatched > 0);
    }
}
