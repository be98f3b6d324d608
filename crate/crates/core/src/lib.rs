//! Network-coding performance lab for software-defined networks.
//!
//! The crate is organized around five subsystems:
//!
//! - [`gf`] / [`codec`]: finite-field arithmetic and the network-coding
//!   primitives (systematic + random linear coding over GF(2^8) or GF(2),
//!   recoding at intermediate nodes, Gaussian-elimination decoding).
//! - [`analytic`]: the closed-form metric model relating traffic load,
//!   loss, redundancy, path failures and load split to throughput,
//!   latency, packet loss, fault tolerance and load imbalance.
//! - [`simnet`]: a seeded discrete-event packet-level simulator with lossy
//!   delayed links, the butterfly multicast preset and a two-path preset.
//! - [`controller`]: a simulated centralized control plane that computes
//!   link-disjoint paths and installs forward/encode/recode/decode rules.
//! - [`harness`]: trace metrology, simulation-vs-model reconciliation and
//!   the four-case evaluation suite.

pub mod analytic;
pub mod codec;
pub mod controller;
pub mod gf;
pub mod harness;
pub mod simnet;

pub use analytic::{AnalyticReport, CaseId, MetricPair, MetricUnit, ScenarioParams};
pub use codec::{CodedPacket, CodingVector, DecoderState, SourcePacket};
pub use controller::{Action, ControllerState, FlowRule};
pub use gf::FieldKind;
pub use harness::{ComparisonPolicy, ComparisonResult, MetricsReport, SuiteReport};
pub use simnet::{Link, Mode, SimConfig, Topology, Trace, TrafficMode};
