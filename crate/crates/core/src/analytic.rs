//! Closed-form performance metrics.
//!
//! Single stations (M/M/1, M/M/m, M/G/1 via Pollaczek-Khinchin, and bulk
//! Poisson arrivals into an exponential server) and whole-chain metrics for
//! Jackson (single-class) and BCMP (multi-class FCFS/PS) networks.
//!
//! Unstable stations never produce an error from the per-node functions:
//! their waiting, queue and response figures are `f64::INFINITY`, and any
//! chain aggregate that touches them is infinite too. The strict chain
//! entry points ([`jackson_chain_metrics`], [`bcmp_chain_metrics`]) refuse
//! unstable networks instead.

use thiserror::Error;

use crate::model::{Discipline, NetworkSpec, BulkSpec};
use crate::traffic::{self, TrafficError, TrafficSolution, STABILITY_MARGIN};

/// Materialized marginal pmfs stop once this much mass is covered.
pub const PMF_MASS: f64 = 1.0 - 1e-10;
/// Hard cap on materialized pmf terms.
pub const PMF_MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticError {
    #[error("service rate must be positive, got {0}")]
    NonPositiveServiceRate(f64),
    #[error("node '{node}' is unstable (utilization {utilization})")]
    Unstable { node: String, utilization: f64 },
    #[error("Jackson metrics need a single-class network")]
    MultiClassNotSupported,
    #[error("FCFS node '{node}' has class-dependent service rates")]
    ClassMismatch { node: String },
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

/// Per-class figures at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub class: String,
    pub arrival_rate: f64,
    pub utilization: f64,
    /// Mean number of class jobs at the node, waiting or in service.
    pub mean_number: f64,
    pub mean_queue_length: f64,
    pub mean_waiting: f64,
    pub mean_response: f64,
}

/// Steady-state figures of one station. Times are per visit, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMetrics {
    pub id: String,
    pub arrival_rate: f64,
    pub utilization: f64,
    /// Mean number of jobs at the node, waiting or in service.
    pub mean_number: f64,
    /// Mean number of jobs waiting (not in service).
    pub mean_queue_length: f64,
    pub mean_waiting: f64,
    pub mean_response: f64,
    /// Mean time in service per visit.
    pub service_time: f64,
    /// `marginal_pmf[k]` = P(k jobs at the node), truncated once
    /// [`PMF_MASS`] is covered. Empty when unknown or unstable.
    pub marginal_pmf: Vec<f64>,
    pub stable: bool,
    /// False when the figures come from an approximation rather than an
    /// exact product-form (or bulk) result.
    pub exact: bool,
    pub per_class: Vec<ClassMetrics>,
}

impl NodeMetrics {
    fn unstable(arrival_rate: f64, utilization: f64, service_time: f64) -> Self {
        NodeMetrics {
            id: String::new(),
            arrival_rate,
            utilization,
            mean_number: f64::INFINITY,
            mean_queue_length: f64::INFINITY,
            mean_waiting: f64::INFINITY,
            mean_response: f64::INFINITY,
            service_time,
            marginal_pmf: Vec::new(),
            stable: false,
            exact: true,
            per_class: Vec::new(),
        }
    }

    fn with_id(mut self, id: &str) -> Self {
        self.id = id.to_string();
        self
    }
}

fn is_stable(rho: f64) -> bool {
    rho < 1.0 - STABILITY_MARGIN
}

/// Collect `term(k)` for k = 0, 1, ... until the running mass reaches
/// [`PMF_MASS`] or the cap is hit.
fn materialize(mut term: impl FnMut(usize) -> f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut mass = 0.0;
    while mass < PMF_MASS && out.len() < PMF_MAX_TERMS {
        let p = term(out.len());
        mass += p;
        out.push(p);
    }
    out
}

/// M/M/1 station.
pub fn mm1_metrics(arrival_rate: f64, service_rate: f64) -> Result<NodeMetrics, AnalyticError> {
    if !(service_rate > 0.0) {
        return Err(AnalyticError::NonPositiveServiceRate(service_rate));
    }
    let rho = arrival_rate / service_rate;
    let service_time = 1.0 / service_rate;
    if !is_stable(rho) {
        return Ok(NodeMetrics::unstable(arrival_rate, rho, service_time));
    }
    let mean_waiting = rho / (service_rate * (1.0 - rho));
    Ok(NodeMetrics {
        id: String::new(),
        arrival_rate,
        utilization: rho,
        mean_number: rho / (1.0 - rho),
        mean_queue_length: rho * rho / (1.0 - rho),
        mean_waiting,
        mean_response: 1.0 / (service_rate - arrival_rate),
        service_time,
        marginal_pmf: materialize(|k| (1.0 - rho) * rho.powi(k as i32)),
        stable: true,
        exact: true,
        per_class: Vec::new(),
    })
}

/// M/M/m station with `servers` identical servers of rate `service_rate`.
///
/// Works in the log domain so that large `m` neither overflows `a^m/m!`
/// nor underflows `pi(0)`.
pub fn mmm_metrics(arrival_rate: f64, service_rate: f64, servers: u32) -> Result<NodeMetrics, AnalyticError> {
    if !(service_rate > 0.0) {
        return Err(AnalyticError::NonPositiveServiceRate(service_rate));
    }
    let m = servers.max(1) as usize;
    let mf = m as f64;
    let offered = arrival_rate / service_rate;
    let rho = offered / mf;
    let service_time = 1.0 / service_rate;
    if !is_stable(rho) {
        return Ok(NodeMetrics::unstable(arrival_rate, rho, service_time));
    }
    if arrival_rate == 0.0 {
        return Ok(NodeMetrics {
            id: String::new(),
            arrival_rate,
            utilization: 0.0,
            mean_number: 0.0,
            mean_queue_length: 0.0,
            mean_waiting: 0.0,
            mean_response: service_time,
            service_time,
            marginal_pmf: vec![1.0],
            stable: true,
            exact: true,
            per_class: Vec::new(),
        });
    }

    // log(a^k / k!) for k = 0..=m
    let ln_a = offered.ln();
    let mut log_terms = Vec::with_capacity(m + 1);
    let mut ln_fact = 0.0;
    for k in 0..=m {
        if k > 0 {
            ln_fact += (k as f64).ln();
        }
        log_terms.push(k as f64 * ln_a - ln_fact);
    }
    let log_tail = log_terms[m] - (1.0 - rho).ln();
    let peak = log_terms[..m].iter().copied().fold(log_tail, f64::max);
    let z: f64 = log_terms[..m].iter().map(|t| (t - peak).exp()).sum::<f64>() + (log_tail - peak).exp();
    let log_norm = peak + z.ln();

    // Erlang C: probability that an arrival has to wait.
    let wait_prob = (log_tail - log_norm).exp();
    let mean_queue_length = wait_prob * rho / (1.0 - rho);
    let mean_waiting = wait_prob / (mf * service_rate - arrival_rate);
    let ln_rho = rho.ln();
    let marginal_pmf = materialize(|k| {
        if k <= m {
            (log_terms[k] - log_norm).exp()
        } else {
            (log_terms[m] + (k - m) as f64 * ln_rho - log_norm).exp()
        }
    });
    Ok(NodeMetrics {
        id: String::new(),
        arrival_rate,
        utilization: rho,
        mean_number: mean_queue_length + offered,
        mean_queue_length,
        mean_waiting,
        mean_response: mean_waiting + service_time,
        service_time,
        marginal_pmf,
        stable: true,
        exact: true,
        per_class: Vec::new(),
    })
}

/// `E[b^2]/E[b] - 1`: the extra queueing a request sees from the members of
/// its own batch, in units of half a service time.
pub fn bulk_moment_ratio(bulk: &BulkSpec) -> f64 {
    bulk.second_moment() / bulk.mean() - 1.0
}

/// Mean waiting time of an arbitrary request when batches arrive as a
/// Poisson process of rate `batch_rate` at a single exponential server.
///
/// The first term is the Poisson waiting at the job rate, the second the
/// delay added by batching; it vanishes for batches of one.
pub fn bulk_waiting(batch_rate: f64, service_rate: f64, bulk: &BulkSpec) -> Result<f64, AnalyticError> {
    if !(service_rate > 0.0) {
        return Err(AnalyticError::NonPositiveServiceRate(service_rate));
    }
    let rho = batch_rate * bulk.mean() / service_rate;
    if !is_stable(rho) {
        return Err(AnalyticError::Unstable { node: String::new(), utilization: rho });
    }
    let denom = service_rate * (1.0 - rho);
    Ok(rho / denom + bulk_moment_ratio(bulk) / (2.0 * denom))
}

/// Pollaczek-Khinchin mean waiting time of an M/G/1 queue with service-time
/// moments `mean_service` (seconds) and `second_moment` (seconds squared).
pub fn pk_waiting(arrival_rate: f64, mean_service: f64, second_moment: f64) -> Result<f64, AnalyticError> {
    let rho = arrival_rate * mean_service;
    if !is_stable(rho) {
        return Err(AnalyticError::Unstable { node: String::new(), utilization: rho });
    }
    Ok(arrival_rate * second_moment / (2.0 * (1.0 - rho)))
}

/// Whole-chain figures.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMetrics {
    pub per_node: Vec<NodeMetrics>,
    /// Visit-weighted mean time from network entry to departure.
    pub chain_response: f64,
    /// Sum of visit-weighted service times: the response time with no queueing.
    pub response_lower_bound: f64,
    /// Id of the node with the highest utilization.
    pub bottleneck: String,
    pub class_ids: Vec<String>,
    /// Chain response per entry class (one entry for single-class networks).
    pub class_response: Vec<f64>,
}

impl ChainMetrics {
    pub fn all_stable(&self) -> bool {
        self.per_node.iter().all(|n| n.stable)
    }

    pub fn node(&self, id: &str) -> Option<&NodeMetrics> {
        self.per_node.iter().find(|n| n.id == id)
    }

    fn first_unstable(&self) -> Option<&NodeMetrics> {
        self.per_node.iter().find(|n| !n.stable)
    }
}

/// Station figures for node `i` given its traffic.
fn evaluate_node(spec: &NetworkSpec, traffic: &TrafficSolution, i: usize) -> Result<NodeMetrics, AnalyticError> {
    let node = &spec.nodes[i];
    let l = spec.classes.len();
    let cap = node.capacity;
    let m = node.servers.max(1);
    let lambda_i = traffic.arrival_rates[i];
    let class_rates = &traffic.class_arrival_rates[i];

    match node.discipline {
        Discipline::Fcfs => {
            if l > 1 && node.has_class_dependent_rates() {
                return Err(AnalyticError::ClassMismatch { node: node.id.clone() });
            }
            let rate = cap * spec.rate(i, 0);
            let mut metrics = if m == 1 { mm1_metrics(lambda_i, rate)? } else { mmm_metrics(lambda_i, rate, m)? };
            // All classes share the FCFS queue and see the same wait.
            metrics.per_class = (0..l)
                .map(|c| {
                    let lc = class_rates[c];
                    ClassMetrics {
                        class: spec.classes[c].id.clone(),
                        arrival_rate: lc,
                        utilization: lc / (f64::from(m) * rate),
                        mean_number: lc * metrics.mean_response,
                        mean_queue_length: lc * metrics.mean_waiting,
                        mean_waiting: metrics.mean_waiting,
                        mean_response: metrics.mean_response,
                    }
                })
                .collect();
            Ok(metrics.with_id(&node.id))
        }
        Discipline::Ps => {
            // Egalitarian PS: the whole capacity m*c*mu is shared by resident jobs.
            let total = f64::from(m) * cap;
            let service: Vec<f64> = (0..l).map(|c| 1.0 / (total * spec.rate(i, c))).collect();
            if let Some(bad) = (0..l).map(|c| spec.rate(i, c)).find(|r| !(*r > 0.0)) {
                return Err(AnalyticError::NonPositiveServiceRate(bad));
            }
            let class_rho: Vec<f64> = (0..l).map(|c| class_rates[c] * service[c]).collect();
            let rho: f64 = class_rho.iter().sum();
            let mean_service = if lambda_i > 0.0 {
                (0..l).map(|c| class_rates[c] * service[c]).sum::<f64>() / lambda_i
            } else {
                service[0]
            };
            if !is_stable(rho) {
                let mut metrics = NodeMetrics::unstable(lambda_i, rho, mean_service).with_id(&node.id);
                metrics.per_class = (0..l)
                    .map(|c| ClassMetrics {
                        class: spec.classes[c].id.clone(),
                        arrival_rate: class_rates[c],
                        utilization: class_rho[c],
                        mean_number: f64::INFINITY,
                        mean_queue_length: f64::INFINITY,
                        mean_waiting: f64::INFINITY,
                        mean_response: f64::INFINITY,
                    })
                    .collect();
                return Ok(metrics);
            }
            let per_class: Vec<ClassMetrics> = (0..l)
                .map(|c| {
                    let response = service[c] / (1.0 - rho);
                    let waiting = response - service[c];
                    ClassMetrics {
                        class: spec.classes[c].id.clone(),
                        arrival_rate: class_rates[c],
                        utilization: class_rho[c],
                        mean_number: class_rho[c] / (1.0 - rho),
                        mean_queue_length: class_rates[c] * waiting,
                        mean_waiting: waiting,
                        mean_response: response,
                    }
                })
                .collect();
            let mean_queue_length: f64 = per_class.iter().map(|c| c.mean_queue_length).sum();
            let (mean_waiting, mean_response) = if lambda_i > 0.0 {
                (
                    mean_queue_length / lambda_i,
                    per_class.iter().map(|c| c.arrival_rate * c.mean_response).sum::<f64>() / lambda_i,
                )
            } else {
                (0.0, mean_service)
            };
            Ok(NodeMetrics {
                id: node.id.clone(),
                arrival_rate: lambda_i,
                utilization: rho,
                mean_number: rho / (1.0 - rho),
                mean_queue_length,
                mean_waiting,
                mean_response,
                service_time: mean_service,
                marginal_pmf: materialize(|k| (1.0 - rho) * rho.powi(k as i32)),
                stable: true,
                exact: true,
                per_class,
            })
        }
    }
}

/// Neumaier summation; chain sums mix terms of very different size.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        if !t.is_finite() {
            return t;
        }
        carry += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + carry
}

fn aggregate(spec: &NetworkSpec, traffic: &TrafficSolution, per_node: Vec<NodeMetrics>) -> ChainMetrics {
    let l = spec.classes.len();
    // 0 * inf must not poison the sum for nodes that are never visited.
    let weighted = |v: f64, x: f64| if v == 0.0 { 0.0 } else { v * x };
    let chain_response = compensated_sum(
        per_node.iter().zip(&traffic.visit_ratios).map(|(n, v)| weighted(*v, n.mean_response)),
    );
    let response_lower_bound = compensated_sum(
        per_node.iter().zip(&traffic.visit_ratios).map(|(n, v)| weighted(*v, n.service_time)),
    );
    let class_response = (0..l)
        .map(|c| {
            let p0 = spec.classes[c].entry_probability;
            if p0 == 0.0 {
                return 0.0;
            }
            compensated_sum(per_node.iter().enumerate().map(|(i, n)| {
                let v = traffic.class_visit_ratios[i][c];
                let t = n.per_class.get(c).map_or(n.mean_response, |pc| pc.mean_response);
                weighted(v, t)
            })) / p0
        })
        .collect();
    ChainMetrics {
        bottleneck: spec.nodes[traffic.bottleneck()].id.clone(),
        per_node,
        chain_response,
        response_lower_bound,
        class_ids: spec.classes.iter().map(|c| c.id.clone()).collect(),
        class_response,
    }
}

/// Chain metrics for any single- or multi-class network, with infinite
/// sentinels for unstable nodes. Bulk arrivals are ignored here; see
/// [`network_metrics`].
pub fn chain_metrics(spec: &NetworkSpec, traffic: &TrafficSolution) -> Result<ChainMetrics, AnalyticError> {
    let per_node = (0..spec.nodes.len())
        .map(|i| evaluate_node(spec, traffic, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(spec, traffic, per_node))
}

/// Jackson product-form metrics for a stable single-class network.
///
/// Each node uses its effective rate `c_i * mu_i`; the chain response is
/// the visit-weighted sum of per-visit response times and the lower bound is
/// `sum_i v_i / (c_i mu_i)`.
pub fn jackson_chain_metrics(spec: &NetworkSpec, traffic: &TrafficSolution) -> Result<ChainMetrics, AnalyticError> {
    if spec.is_multiclass() {
        return Err(AnalyticError::MultiClassNotSupported);
    }
    strict(chain_metrics(spec, traffic)?)
}

/// BCMP product-form metrics for a stable multi-class network of FCFS and
/// PS stations.
pub fn bcmp_chain_metrics(spec: &NetworkSpec, traffic: &TrafficSolution) -> Result<ChainMetrics, AnalyticError> {
    strict(chain_metrics(spec, traffic)?)
}

fn strict(metrics: ChainMetrics) -> Result<ChainMetrics, AnalyticError> {
    match metrics.first_unstable() {
        Some(n) => Err(AnalyticError::Unstable { node: n.id.clone(), utilization: n.utilization }),
        None => Ok(metrics),
    }
}

/// Solve the traffic equations and evaluate the chain, including the bulk
/// correction at the entry node when the network has batch arrivals.
///
/// With bulk arrivals only the entry node is exact (single server, FCFS, all
/// arrivals enter there, no internal feedback into it); downstream nodes
/// keep their Jackson figures and are flagged inexact.
pub fn network_metrics(spec: &NetworkSpec) -> Result<ChainMetrics, AnalyticError> {
    let traffic = traffic::solve(spec)?;
    let mut metrics = chain_metrics(spec, &traffic)?;
    let Some(bulk) = &spec.bulk else {
        return Ok(metrics);
    };
    let entry = spec.routing.entry.iter().position(|p| *p == 1.0);
    let eligible = entry.filter(|&e| {
        let node = &spec.nodes[e];
        node.servers == 1
            && node.discipline == Discipline::Fcfs
            && !spec.is_multiclass()
            && spec.routing.probs.iter().all(|row| row[e] == 0.0)
    });
    for n in metrics.per_node.iter_mut() {
        n.exact = false;
    }
    if let Some(e) = eligible {
        let node = &spec.nodes[e];
        let rate = node.capacity * node.service_rate;
        let target = &mut metrics.per_node[e];
        target.exact = true;
        target.marginal_pmf.clear();
        match bulk_waiting(spec.external_rate, rate, bulk) {
            Ok(w) => {
                target.mean_waiting = w;
                target.mean_response = w + 1.0 / rate;
                target.mean_queue_length = target.arrival_rate * w;
                target.mean_number = target.arrival_rate * target.mean_response;
                for pc in target.per_class.iter_mut() {
                    pc.mean_waiting = w;
                    pc.mean_response = w + 1.0 / rate;
                    pc.mean_queue_length = pc.arrival_rate * w;
                    pc.mean_number = pc.arrival_rate * pc.mean_response;
                }
            }
            Err(_) => {
                *target = NodeMetrics::unstable(target.arrival_rate, target.utilization, 1.0 / rate).with_id(&node.id);
                target.exact = true;
            }
        }
        let per_node = std::mem::take(&mut metrics.per_node);
        metrics = aggregate(spec, &traffic, per_node);
    }
    Ok(metrics)
}
