//! Seeded discrete-event simulation of a [`NetworkSpec`].
//!
//! Each replication runs single-threaded with its own random streams; the
//! replications run in parallel and are aggregated in index order, so a
//! given [`SimConfig`] always produces a bit-identical [`SimResult`].
//!
//! Measurement follows a window: a warmup prefix of the horizon is
//! discarded, time averages (queue length, utilization) are integrated over
//! the window, and per-visit figures (waiting, response) come from the jobs
//! that entered the network inside the window. Those jobs are followed to
//! completion even after the window closes, while external arrivals keep
//! coming, so late visits see a loaded system.

mod compare;
mod engine;
mod stats;

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{validate, NetworkSpec, ValidationReport};

pub use compare::{compare, compare_result, ComparisonReport, ComparisonRow, Metric, SYSTEMATIC_ALLOWANCE};
pub use stats::Estimate;

use engine::{Replication, ReplicationStats};

/// Default seed used when none is given.
pub const DEFAULT_SEED: u64 = 20_190_612;
pub const DEFAULT_WARMUP: f64 = 0.2;
pub const DEFAULT_REPLICATIONS: u32 = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum Horizon {
    /// Simulated seconds.
    Time(f64),
    /// Number of external arrival events (batches when arrivals are bulk).
    Arrivals(u64),
}

/// Service-time law at a node. `Exponential` is the default everywhere.
#[derive(Debug, Clone, PartialEq)]
pub enum ServiceDistribution {
    Exponential,
    /// Always the mean service time.
    Deterministic,
    /// Resample uniformly from these service times (seconds at nominal speed).
    Empirical(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: NetworkSpec,
    pub horizon: Horizon,
    /// Fraction of the horizon discarded before measuring, in `[0, 0.5]`.
    pub warmup: f64,
    pub replications: u32,
    pub seed: u64,
    /// Per-node service law overrides keyed by node id.
    pub service_overrides: BTreeMap<String, ServiceDistribution>,
}

impl SimConfig {
    pub fn new(spec: NetworkSpec, horizon: Horizon) -> Self {
        SimConfig {
            spec,
            horizon,
            warmup: DEFAULT_WARMUP,
            replications: DEFAULT_REPLICATIONS,
            seed: DEFAULT_SEED,
            service_overrides: BTreeMap::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replications(mut self, replications: u32) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_warmup(mut self, warmup: f64) -> Self {
        self.warmup = warmup;
        self
    }

    pub fn with_service(mut self, node: impl Into<String>, law: ServiceDistribution) -> Self {
        self.service_overrides.insert(node.into(), law);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid network:\n{0}")]
    InvalidSpec(ValidationReport),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("analytic metrics do not match the simulated network: {0}")]
    SpecMismatch(String),
    #[error("writing trace: {0}")]
    Trace(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassEstimates {
    pub class: String,
    pub waiting: Estimate,
    pub response: Estimate,
    /// Departures of this class from the node inside the measurement window.
    pub departures: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeEstimates {
    pub id: String,
    /// Mean waiting time per visit, seconds.
    pub waiting: Estimate,
    /// Mean response time per visit, seconds.
    pub response: Estimate,
    /// Time-average number waiting (not in service).
    pub queue_length: Estimate,
    /// Time-average number at the node.
    pub number: Estimate,
    pub utilization: Estimate,
    /// Arrival rate observed in the window, per second.
    pub throughput: Estimate,
    /// `queue_length - throughput * waiting`, per replication.
    pub little_residual: Estimate,
    /// Visits of measured jobs, summed over replications.
    pub visits: u64,
    pub per_class: Vec<ClassEstimates>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub nodes: Vec<NodeEstimates>,
    /// Mean time from network entry to departure of measured jobs.
    pub chain_response: Estimate,
    /// Chain response by entry class.
    pub class_response: Vec<Estimate>,
    /// External jobs generated, over all replications.
    pub arrivals: u64,
    /// Jobs that left the network, over all replications.
    pub departures: u64,
    pub seed: u64,
    pub replications: u32,
}

impl SimResult {
    pub fn node(&self, id: &str) -> Option<&NodeEstimates> {
        self.nodes.iter().find(|n| n.id == id)
    }
}

fn check_config(cfg: &SimConfig) -> Result<(), SimError> {
    let report = validate(&cfg.spec);
    if !report.is_valid() {
        return Err(SimError::InvalidSpec(report));
    }
    if !(0.0..=0.5).contains(&cfg.warmup) {
        return Err(SimError::InvalidConfig(format!("warmup {} outside [0, 0.5]", cfg.warmup)));
    }
    if cfg.replications == 0 {
        return Err(SimError::InvalidConfig("replications must be >= 1".into()));
    }
    match cfg.horizon {
        Horizon::Time(t) if !(t > 0.0 && t.is_finite()) => {
            return Err(SimError::InvalidConfig(format!("time horizon {t} must be positive")))
        }
        Horizon::Arrivals(0) => return Err(SimError::InvalidConfig("arrival horizon must be >= 1".into())),
        _ => {}
    }
    for (node, law) in &cfg.service_overrides {
        if cfg.spec.node_index(node).is_none() {
            return Err(SimError::InvalidConfig(format!("service override for unknown node '{node}'")));
        }
        if let ServiceDistribution::Empirical(samples) = law {
            if samples.is_empty() || samples.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(SimError::InvalidConfig(format!(
                    "empirical service samples for '{node}' must be nonempty and >= 0"
                )));
            }
        }
    }
    Ok(())
}

/// Run every replication and aggregate.
pub fn simulate(cfg: &SimConfig) -> Result<SimResult, SimError> {
    check_config(cfg)?;
    let reps: Vec<ReplicationStats> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| Replication::new(cfg, r).run(None).expect("no trace sink"))
        .collect();
    Ok(aggregate(cfg, &reps))
}

/// Like [`simulate`], additionally writing an event trace of replication 0
/// as `time,node,job,class,event` lines.
pub fn simulate_with_trace(cfg: &SimConfig, trace: &mut dyn Write) -> Result<SimResult, SimError> {
    check_config(cfg)?;
    let trace_err = |e: std::io::Error| SimError::Trace(e.to_string());
    writeln!(trace, "time,node,job,class,event").map_err(trace_err)?;
    let first = Replication::new(cfg, 0).run(Some(trace)).map_err(trace_err)?;
    let rest: Vec<ReplicationStats> = (1..cfg.replications)
        .into_par_iter()
        .map(|r| Replication::new(cfg, r).run(None).expect("no trace sink"))
        .collect();
    let mut reps = Vec::with_capacity(cfg.replications as usize);
    reps.push(first);
    reps.extend(rest);
    Ok(aggregate(cfg, &reps))
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

fn aggregate(cfg: &SimConfig, reps: &[ReplicationStats]) -> SimResult {
    let spec = &cfg.spec;
    let l = spec.classes.len();
    let est = |f: &dyn Fn(&ReplicationStats) -> f64| {
        Estimate::from_replications(&reps.iter().map(f).collect::<Vec<_>>())
    };

    let nodes = spec
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let servers = match node.discipline {
                crate::model::Discipline::Fcfs => f64::from(node.servers),
                crate::model::Discipline::Ps => 1.0,
            };
            let waiting = |r: &ReplicationStats| ratio(r.nodes[i].sum_waiting, r.nodes[i].visits as f64);
            let queue = |r: &ReplicationStats| {
                ratio(r.nodes[i].area_number - r.nodes[i].area_busy, r.window)
            };
            let throughput = |r: &ReplicationStats| ratio(r.nodes[i].window_arrivals as f64, r.window);
            NodeEstimates {
                id: node.id.clone(),
                waiting: est(&waiting),
                response: est(&|r| ratio(r.nodes[i].sum_response, r.nodes[i].visits as f64)),
                queue_length: est(&queue),
                number: est(&|r| ratio(r.nodes[i].area_number, r.window)),
                utilization: est(&|r| ratio(r.nodes[i].area_busy, r.window * servers)),
                throughput: est(&throughput),
                little_residual: est(&|r| {
                    let w = waiting(r);
                    queue(r) - throughput(r) * if w.is_nan() { 0.0 } else { w }
                }),
                visits: reps.iter().map(|r| r.nodes[i].visits).sum(),
                per_class: (0..l)
                    .map(|c| ClassEstimates {
                        class: spec.classes[c].id.clone(),
                        waiting: est(&|r| {
                            let s = &r.nodes[i].classes[c];
                            ratio(s.sum_waiting, s.visits as f64)
                        }),
                        response: est(&|r| {
                            let s = &r.nodes[i].classes[c];
                            ratio(s.sum_response, s.visits as f64)
                        }),
                        departures: reps.iter().map(|r| r.nodes[i].classes[c].window_departures).sum(),
                    })
                    .collect(),
            }
        })
        .collect();

    SimResult {
        nodes,
        chain_response: est(&|r| ratio(r.sum_chain, r.completed as f64)),
        class_response: (0..l)
            .map(|c| est(&|r| ratio(r.class_chain[c].0, r.class_chain[c].1 as f64)))
            .collect(),
        arrivals: reps.iter().map(|r| r.arrivals).sum(),
        departures: reps.iter().map(|r| r.departures).sum(),
        seed: cfg.seed,
        replications: cfg.replications,
    }
}
