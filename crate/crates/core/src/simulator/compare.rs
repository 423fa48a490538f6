use std::fmt;

use super::{simulate, Estimate, SimConfig, SimError, SimResult};
use crate::analytic::{network_metrics, ChainMetrics};

/// Relative slack added to the confidence half-width when matching an
/// analytic value, covering warmup bias and finite-horizon effects.
pub const SYSTEMATIC_ALLOWANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Waiting,
    QueueLength,
    Response,
    Utilization,
    ChainResponse,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Waiting => "W",
            Metric::QueueLength => "Q",
            Metric::Response => "T",
            Metric::Utilization => "rho",
            Metric::ChainResponse => "E[T]",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    /// Node id, or `"chain"` for the end-to-end row.
    pub node: String,
    pub metric: Metric,
    pub analytic: f64,
    pub simulated: Estimate,
    /// The analytic value is exact for this model (not an approximation).
    pub exact: bool,
    /// `None` when the simulation had no observations.
    pub pass: Option<bool>,
}

impl ComparisonRow {
    fn new(node: &str, metric: Metric, analytic: f64, simulated: Estimate, exact: bool) -> Self {
        let pass = if simulated.mean.is_nan() {
            None
        } else {
            let slack = simulated.half_width + SYSTEMATIC_ALLOWANCE * analytic.abs();
            Some((analytic - simulated.mean).abs() <= slack)
        };
        ComparisonRow { node: node.to_string(), metric, analytic, simulated, exact, pass }
    }

    pub fn relative_error(&self) -> f64 {
        (self.simulated.mean - self.analytic).abs() / self.analytic.abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub analytic: ChainMetrics,
    pub simulated: SimResult,
}

impl ComparisonReport {
    /// True when every exact, observed row matches.
    pub fn passed(&self) -> bool {
        self.rows.iter().filter(|r| r.exact).all(|r| r.pass != Some(false))
    }

    pub fn failures(&self) -> impl Iterator<Item = &ComparisonRow> {
        self.rows.iter().filter(|r| r.exact && r.pass == Some(false))
    }
}

/// Solve the network analytically, simulate it and compare.
pub fn compare(cfg: &SimConfig) -> Result<ComparisonReport, SimError> {
    let analytic = network_metrics(&cfg.spec).map_err(|e| SimError::SpecMismatch(e.to_string()))?;
    let simulated = simulate(cfg)?;
    compare_result(&analytic, &simulated)
}

/// Compare precomputed analytic metrics against a simulation of the same
/// network.
pub fn compare_result(analytic: &ChainMetrics, sim: &SimResult) -> Result<ComparisonReport, SimError> {
    let a_ids: Vec<&str> = analytic.per_node.iter().map(|n| n.id.as_str()).collect();
    let s_ids: Vec<&str> = sim.nodes.iter().map(|n| n.id.as_str()).collect();
    if a_ids != s_ids {
        return Err(SimError::SpecMismatch(format!("nodes {a_ids:?} vs {s_ids:?}")));
    }
    let mut rows = Vec::new();
    for (a, s) in analytic.per_node.iter().zip(&sim.nodes) {
        rows.push(ComparisonRow::new(&a.id, Metric::Waiting, a.mean_waiting, s.waiting, a.exact));
        rows.push(ComparisonRow::new(&a.id, Metric::QueueLength, a.mean_queue_length, s.queue_length, a.exact));
        rows.push(ComparisonRow::new(&a.id, Metric::Response, a.mean_response, s.response, a.exact));
        rows.push(ComparisonRow::new(&a.id, Metric::Utilization, a.utilization, s.utilization, a.exact));
    }
    let exact = analytic.per_node.iter().all(|n| n.exact);
    rows.push(ComparisonRow::new(
        "chain",
        Metric::ChainResponse,
        analytic.chain_response,
        sim.chain_response,
        exact,
    ));
    Ok(ComparisonReport { rows, analytic: analytic.clone(), simulated: sim.clone() })
}
