//! Closed-form metric model.
//!
//! Five metric pairs (uncoded vs coded) are derived from a single
//! parameter set: throughput from traffic load and loss, latency from
//! additive delay components, residual packet loss from the redundancy
//! factor, fault tolerance from path reliability, and load imbalance from
//! the heaviest-path split. The four evaluation-case presets live here as
//! plain data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Clone)]
pub enum AnalyticError {
    #[error("parameter {key}: {reason}")]
    InvalidParam { key: &'static str, reason: String },
    #[error("coded throughput is undefined at p_loss = 1")]
    LossSaturated,
    #[error("improvement baseline must be positive, got {0}")]
    ZeroBaseline(f64),
}

/// Every scenario knob in one place; one value set per evaluation case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Offered traffic load, packets per second.
    pub lambda: f64,
    /// End-to-end packet loss probability.
    pub p_loss: f64,
    /// Redundancy factor: coded packets transmitted per source packet.
    pub k: u32,
    /// Probability that a path is down for a run.
    pub p_failure: f64,
    /// Number of parallel paths.
    pub n: u32,
    pub l_request: f64,
    pub l_processing: f64,
    pub l_response: f64,
    /// Encode/decode delay added by coding, seconds.
    pub l_coding: f64,
    /// Retransmission delay avoided by coding, seconds.
    pub l_reduced: f64,
    /// Fraction of traffic on the heaviest path in uncoded mode.
    pub heaviest_path_fraction: f64,
    /// Link length; drives propagation delay in the simulator.
    pub distance_km: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        CaseId::Case1.params()
    }
}

impl ScenarioParams {
    /// Single-path reliability, `1 - p_failure`.
    pub fn reliability(&self) -> f64 {
        1.0 - self.p_failure
    }

    /// Total uncoded latency: request + processing + response.
    pub fn latency_uncoded(&self) -> f64 {
        self.l_request + self.l_processing + self.l_response
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        fn prob(key: &'static str, v: f64) -> Result<(), AnalyticError> {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(AnalyticError::InvalidParam {
                    key,
                    reason: format!("{v} is outside [0, 1]"),
                });
            }
            Ok(())
        }
        fn nonneg(key: &'static str, v: f64) -> Result<(), AnalyticError> {
            if !v.is_finite() || v < 0.0 {
                return Err(AnalyticError::InvalidParam {
                    key,
                    reason: format!("{v} must be >= 0"),
                });
            }
            Ok(())
        }
        prob("p_loss", self.p_loss)?;
        prob("p_failure", self.p_failure)?;
        nonneg("lambda", self.lambda)?;
        nonneg("l_request", self.l_request)?;
        nonneg("l_processing", self.l_processing)?;
        nonneg("l_response", self.l_response)?;
        nonneg("l_coding", self.l_coding)?;
        nonneg("l_reduced", self.l_reduced)?;
        nonneg("distance_km", self.distance_km)?;
        if self.k < 1 {
            return Err(AnalyticError::InvalidParam {
                key: "k",
                reason: "redundancy factor must be >= 1".into(),
            });
        }
        if self.n < 1 {
            return Err(AnalyticError::InvalidParam {
                key: "n",
                reason: "path count must be >= 1".into(),
            });
        }
        let floor = 1.0 / self.n as f64;
        if !(floor..=1.0).contains(&self.heaviest_path_fraction) {
            return Err(AnalyticError::InvalidParam {
                key: "heaviest_path_fraction",
                reason: format!(
                    "{} is outside [{floor}, 1] for n = {}",
                    self.heaviest_path_fraction, self.n
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricUnit {
    PacketsPerSec,
    Seconds,
    Probability,
    Fraction,
}

impl std::fmt::Display for MetricUnit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MetricUnit::PacketsPerSec => write!(f, "packets/sec"),
            MetricUnit::Seconds => write!(f, "seconds"),
            MetricUnit::Probability => write!(f, "probability"),
            MetricUnit::Fraction => write!(f, "fraction"),
        }
    }
}

/// One metric evaluated without and with coding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPair {
    pub uncoded: f64,
    pub coded: f64,
    pub unit: MetricUnit,
}

/// Per-path load extremes plus the normalized imbalance pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadMetrics {
    pub t_max_uncoded: f64,
    pub t_min_uncoded: f64,
    pub t_max_coded: f64,
    pub t_min_coded: f64,
    /// (t_max - t_min) / lambda per mode.
    pub imbalance: MetricPair,
}

/// All five metric pairs for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticReport {
    pub throughput: MetricPair,
    pub latency: MetricPair,
    pub packet_loss: MetricPair,
    pub fault_tolerance: MetricPair,
    pub load: LoadMetrics,
}

/// Uncoded throughput loses the dropped fraction; redundancy recovers it,
/// so the coded side composes back to the offered load exactly.
pub fn throughput_pair(lambda: f64, p_loss: f64) -> Result<MetricPair, AnalyticError> {
    if p_loss >= 1.0 {
        return Err(AnalyticError::LossSaturated);
    }
    Ok(MetricPair {
        uncoded: lambda * (1.0 - p_loss),
        // lambda * (1 - p) * 1/(1 - p), precomposed so the identity holds
        // bit-exactly.
        coded: lambda,
        unit: MetricUnit::PacketsPerSec,
    })
}

/// Coding adds encode/decode delay but removes retransmission delay.
pub fn latency_pair(
    l_request: f64,
    l_processing: f64,
    l_response: f64,
    l_coding: f64,
    l_reduced: f64,
) -> Result<MetricPair, AnalyticError> {
    for (key, v) in [
        ("l_request", l_request),
        ("l_processing", l_processing),
        ("l_response", l_response),
        ("l_coding", l_coding),
        ("l_reduced", l_reduced),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(AnalyticError::InvalidParam {
                key,
                reason: format!("{v} must be >= 0"),
            });
        }
    }
    let uncoded = l_request + l_processing + l_response;
    Ok(MetricPair {
        uncoded,
        coded: uncoded + l_coding - l_reduced,
        unit: MetricUnit::Seconds,
    })
}

/// Residual loss after k-fold redundancy: p^k.
pub fn packet_loss_pair(p_loss: f64, k: u32) -> MetricPair {
    MetricPair {
        uncoded: p_loss,
        coded: p_loss.powi(k as i32),
        unit: MetricUnit::Probability,
    }
}

/// Delivery survives unless all k path choices fail: 1 - p_failure^k.
pub fn fault_tolerance_pair(p_failure: f64, k: u32) -> MetricPair {
    MetricPair {
        uncoded: 1.0 - p_failure,
        coded: 1.0 - p_failure.powi(k as i32),
        unit: MetricUnit::Probability,
    }
}

/// Uncoded traffic concentrates on the heaviest path; coding spreads the
/// load to lambda/n on every path.
pub fn load_pair(
    lambda: f64,
    n: u32,
    heaviest_path_fraction: f64,
) -> Result<LoadMetrics, AnalyticError> {
    if n == 0 {
        return Err(AnalyticError::InvalidParam {
            key: "n",
            reason: "path count must be >= 1".into(),
        });
    }
    let floor = 1.0 / n as f64;
    if !(floor..=1.0).contains(&heaviest_path_fraction) {
        return Err(AnalyticError::InvalidParam {
            key: "heaviest_path_fraction",
            reason: format!("{heaviest_path_fraction} is outside [{floor}, 1]"),
        });
    }
    let (t_max_uncoded, t_min_uncoded) = if n == 1 {
        (lambda, lambda)
    } else {
        (
            lambda * heaviest_path_fraction,
            lambda * (1.0 - heaviest_path_fraction) / (n - 1) as f64,
        )
    };
    let even = lambda / n as f64;
    let imbalance_uncoded = if lambda > 0.0 {
        (t_max_uncoded - t_min_uncoded) / lambda
    } else {
        0.0
    };
    Ok(LoadMetrics {
        t_max_uncoded,
        t_min_uncoded,
        t_max_coded: even,
        t_min_coded: even,
        imbalance: MetricPair {
            uncoded: imbalance_uncoded,
            coded: 0.0,
            unit: MetricUnit::Fraction,
        },
    })
}

/// Percentage change from `before` to `after`.
pub fn improvement_percent(before: f64, after: f64) -> Result<f64, AnalyticError> {
    if !before.is_finite() || before <= 0.0 {
        return Err(AnalyticError::ZeroBaseline(before));
    }
    Ok(100.0 * (after - before) / before)
}

/// Applies all five pair operations to one parameter set.
pub fn evaluate_scenario(params: &ScenarioParams) -> Result<AnalyticReport, AnalyticError> {
    params.validate()?;
    Ok(AnalyticReport {
        throughput: throughput_pair(params.lambda, params.p_loss)?,
        latency: latency_pair(
            params.l_request,
            params.l_processing,
            params.l_response,
            params.l_coding,
            params.l_reduced,
        )?,
        packet_loss: packet_loss_pair(params.p_loss, params.k),
        fault_tolerance: fault_tolerance_pair(params.p_failure, params.k),
        load: load_pair(params.lambda, params.n, params.heaviest_path_fraction)?,
    })
}

/// The four evaluation cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseId {
    /// Base case.
    Case1,
    /// High traffic (lambda = 2000).
    Case2,
    /// Long distance (d = 100 km).
    Case3,
    /// High path failure (p_failure = 0.5).
    Case4,
}

impl CaseId {
    pub const ALL: [CaseId; 4] = [CaseId::Case1, CaseId::Case2, CaseId::Case3, CaseId::Case4];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::Case1 => "case1",
            CaseId::Case2 => "case2",
            CaseId::Case3 => "case3",
            CaseId::Case4 => "case4",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            CaseId::Case1 => "base case",
            CaseId::Case2 => "high traffic",
            CaseId::Case3 => "long distance",
            CaseId::Case4 => "high path failure",
        }
    }

    /// Latency components follow a fixed 40/20/40 split of the uncoded
    /// total; l_reduced is pinned at 1 ms and l_coding carries the rest of
    /// the coded-minus-uncoded delta.
    pub fn params(self) -> ScenarioParams {
        let base = |lambda, p_loss, p_failure, fraction, distance_km, l_unc: f64, delta: f64| {
            ScenarioParams {
                lambda,
                p_loss,
                k: 2,
                p_failure,
                n: 2,
                l_request: 0.4 * l_unc,
                l_processing: 0.2 * l_unc,
                l_response: 0.4 * l_unc,
                l_coding: delta + 0.001,
                l_reduced: 0.001,
                heaviest_path_fraction: fraction,
                distance_km,
            }
        };
        match self {
            CaseId::Case1 => base(1000.0, 0.30, 0.30, 0.800, 10.0, 0.020, 0.005),
            CaseId::Case2 => base(2000.0, 0.60, 0.40, 0.900, 10.0, 0.050, 0.010),
            CaseId::Case3 => base(1000.0, 0.35, 0.32, 0.825, 100.0, 0.040, 0.010),
            CaseId::Case4 => base(1200.0, 0.50, 0.50, 0.850, 10.0, 0.030, 0.005),
        }
    }
}

impl std::fmt::Display for CaseId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CaseId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "case1" => Ok(CaseId::Case1),
            "2" | "case2" => Ok(CaseId::Case2),
            "3" | "case3" => Ok(CaseId::Case3),
            "4" | "case4" => Ok(CaseId::Case4),
            other => Err(format!(
                "unknown case '{other}' (expected 1-4 or case1..case4)"
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const EPS: f64 = 1e-9;

    #[test]
    fn throughput_base_case() {
        let t = throughput_pair(1000.0, 0.3).unwrap();
        assert_abs_diff_eq!(t.uncoded, 700.0, epsilon = EPS);
        assert_eq!(t.coded, 1000.0);
    }

    #[test]
    fn throughput_lossless_and_saturated() {
        let t = throughput_pair(1234.0, 0.0).unwrap();
        assert_eq!(t.uncoded, 1234.0);
        assert_eq!(t.coded, 1234.0);
        assert_eq!(
            throughput_pair(1000.0, 1.0),
            Err(AnalyticError::LossSaturated)
        );
    }

    #[test]
    fn throughput_high_traffic_formula_values() {
        // Formula evaluation; the printed figures diverge and are flagged
        // by the harness, not reproduced here.
        let t = throughput_pair(2000.0, 0.6).unwrap();
        assert_abs_diff_eq!(t.uncoded, 800.0, epsilon = EPS);
        assert_eq!(t.coded, 2000.0);
    }

    #[test]
    fn latency_base_case_components() {
        let l = latency_pair(0.008, 0.004, 0.008, 0.006, 0.001).unwrap();
        assert_abs_diff_eq!(l.uncoded, 0.020, epsilon = EPS);
        assert_abs_diff_eq!(l.coded, 0.025, epsilon = EPS);
    }

    #[test]
    fn latency_cancels_when_delays_match() {
        let l = latency_pair(0.01, 0.01, 0.01, 0.004, 0.004).unwrap();
        assert_abs_diff_eq!(l.coded, l.uncoded, epsilon = EPS);
    }

    #[test]
    fn latency_case4_totals() {
        let p = CaseId::Case4.params();
        let l = latency_pair(
            p.l_request,
            p.l_processing,
            p.l_response,
            p.l_coding,
            p.l_reduced,
        )
        .unwrap();
        assert_abs_diff_eq!(l.uncoded, 0.030, epsilon = EPS);
        assert_abs_diff_eq!(l.coded, 0.035, epsilon = EPS);
    }

    #[test]
    fn packet_loss_pairs() {
        let p = packet_loss_pair(0.3, 2);
        assert_abs_diff_eq!(p.uncoded, 0.30, epsilon = EPS);
        assert_abs_diff_eq!(p.coded, 0.09, epsilon = EPS);
        let p = packet_loss_pair(0.5, 2);
        assert_abs_diff_eq!(p.coded, 0.25, epsilon = EPS);
        let p = packet_loss_pair(0.42, 1);
        assert_eq!(p.uncoded, p.coded);
    }

    #[test]
    fn fault_tolerance_pairs() {
        let t = fault_tolerance_pair(0.3, 2);
        assert_abs_diff_eq!(t.uncoded, 0.70, epsilon = EPS);
        assert_abs_diff_eq!(t.coded, 0.91, epsilon = EPS);
        let t = fault_tolerance_pair(0.5, 2);
        assert_abs_diff_eq!(t.coded, 0.75, epsilon = EPS);
        let t = fault_tolerance_pair(0.0, 5);
        assert_eq!(t.uncoded, 1.0);
        assert_eq!(t.coded, 1.0);
    }

    #[test]
    fn load_split_base_case() {
        let l = load_pair(1000.0, 2, 0.8).unwrap();
        assert_abs_diff_eq!(l.t_max_uncoded, 800.0, epsilon = EPS);
        assert_abs_diff_eq!(l.t_min_uncoded, 200.0, epsilon = EPS);
        assert_abs_diff_eq!(l.imbalance.uncoded, 0.60, epsilon = EPS);
        assert_eq!(l.imbalance.coded, 0.0);
        assert_abs_diff_eq!(l.t_max_coded, 500.0, epsilon = EPS);
    }

    #[test]
    fn load_single_path_is_balanced() {
        let l = load_pair(1000.0, 1, 1.0).unwrap();
        assert_eq!(l.imbalance.uncoded, 0.0);
        assert_eq!(l.imbalance.coded, 0.0);
    }

    #[test]
    fn improvement_matches_abstract_claim() {
        let v = improvement_percent(700.0, 1000.0).unwrap();
        assert_abs_diff_eq!(v, 300.0 / 7.0, epsilon = EPS);
        // Printed as 42.8 when truncated to one decimal.
        assert_eq!((v * 10.0).trunc() / 10.0, 42.8);
        assert_eq!(improvement_percent(5.0, 5.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            improvement_percent(400.0, 850.0).unwrap(),
            112.5,
            epsilon = EPS
        );
        assert!(matches!(
            improvement_percent(0.0, 10.0),
            Err(AnalyticError::ZeroBaseline(_))
        ));
    }

    #[test]
    fn scenario_case1_row_group() {
        let r = evaluate_scenario(&CaseId::Case1.params()).unwrap();
        assert_abs_diff_eq!(r.throughput.uncoded, 700.0, epsilon = EPS);
        assert_eq!(r.throughput.coded, 1000.0);
        assert_abs_diff_eq!(r.packet_loss.uncoded, 0.30, epsilon = EPS);
        assert_abs_diff_eq!(r.packet_loss.coded, 0.09, epsilon = EPS);
        assert_abs_diff_eq!(r.fault_tolerance.uncoded, 0.70, epsilon = EPS);
        assert_abs_diff_eq!(r.fault_tolerance.coded, 0.91, epsilon = EPS);
        assert_abs_diff_eq!(r.latency.uncoded, 0.020, epsilon = EPS);
        assert_abs_diff_eq!(r.latency.coded, 0.025, epsilon = EPS);
        assert_abs_diff_eq!(r.load.imbalance.uncoded, 0.60, epsilon = EPS);
    }

    #[test]
    fn scenario_case4_row_group() {
        let r = evaluate_scenario(&CaseId::Case4.params()).unwrap();
        assert_abs_diff_eq!(r.packet_loss.uncoded, 0.50, epsilon = EPS);
        assert_abs_diff_eq!(r.packet_loss.coded, 0.25, epsilon = EPS);
        assert_abs_diff_eq!(r.fault_tolerance.uncoded, 0.50, epsilon = EPS);
        assert_abs_diff_eq!(r.fault_tolerance.coded, 0.75, epsilon = EPS);
    }

    #[test]
    fn zero_impairment_scenario_degenerates() {
        let mut p = CaseId::Case1.params();
        p.p_loss = 0.0;
        p.p_failure = 0.0;
        let r = evaluate_scenario(&p).unwrap();
        assert_eq!(r.throughput.uncoded, r.throughput.coded);
        assert_eq!(r.packet_loss.uncoded, 0.0);
        assert_eq!(r.packet_loss.coded, 0.0);
        assert_eq!(r.fault_tolerance.uncoded, 1.0);
        assert_eq!(r.fault_tolerance.coded, 1.0);
    }

    #[test]
    fn monotonicity_and_bounds_in_k() {
        for p in [0.1, 0.3, 0.5, 0.9] {
            let mut last_loss = f64::INFINITY;
            let mut last_tol = -1.0;
            for k in 1..=6 {
                let loss = packet_loss_pair(p, k);
                let tol = fault_tolerance_pair(p, k);
                assert!(loss.coded <= last_loss);
                assert!(tol.coded >= last_tol);
                assert!((0.0..=1.0).contains(&loss.coded));
                assert!((0.0..=1.0).contains(&tol.coded));
                assert!(loss.coded <= loss.uncoded);
                assert!(tol.coded >= tol.uncoded);
                last_loss = loss.coded;
                last_tol = tol.coded;
            }
        }
    }

    #[test]
    fn k1_degenerates_to_uncoded() {
        let mut p = CaseId::Case1.params();
        p.k = 1;
        let r = evaluate_scenario(&p).unwrap();
        assert_eq!(r.packet_loss.uncoded, r.packet_loss.coded);
        assert_eq!(r.fault_tolerance.uncoded, r.fault_tolerance.coded);
    }

    #[test]
    fn latency_delta_is_coding_minus_reduced() {
        for case in CaseId::ALL {
            let p = case.params();
            let r = evaluate_scenario(&p).unwrap();
            assert_abs_diff_eq!(
                r.latency.coded - r.latency.uncoded,
                p.l_coding - p.l_reduced,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn presets_validate_and_match_headers() {
        for case in CaseId::ALL {
            case.params().validate().unwrap();
        }
        assert_eq!(CaseId::Case2.params().lambda, 2000.0);
        assert_eq!(CaseId::Case3.params().distance_km, 100.0);
        assert_eq!(CaseId::Case4.params().p_failure, 0.5);
    }

    #[test]
    fn param_validation_names_keys() {
        let mut p = CaseId::Case1.params();
        p.p_loss = 1.5;
        match p.validate() {
            Err(AnalyticError::InvalidParam { key, .. }) => assert_eq!(key, "p_loss"),
            other => panic!("expected InvalidParam, got {other:?}"),
        }
        let mut p = CaseId::Case1.params();
        p.heaviest_path_fraction = 0.3;
        assert!(p.validate().is_err());
    }

    #[test]
    fn case_id_parses() {
        assert_eq!("case3".parse::<CaseId>().unwrap(), CaseId::Case3);
        assert_eq!("2".parse::<CaseId>().unwrap(), CaseId::Case2);
        assert!("case9".parse::<CaseId>().is_err());
    }
}
