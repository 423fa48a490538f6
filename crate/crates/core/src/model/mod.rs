//! Declarative description of an open queueing network.
//!
//! A [`NetworkSpec`] is the single input shared by the traffic solver, the
//! analytic formulas and the simulator. Specs are plain data: build them
//! directly, load them from a JSON document ([`config`]), or start from a
//! preset ([`preset_cims`]).

mod bulk;
pub mod config;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use bulk::{BulkDistribution, BulkSpec};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

/// Queueing discipline of a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Discipline {
    /// First come, first served on `m` identical servers.
    Fcfs,
    /// Egalitarian processor sharing of the node's total capacity.
    Ps,
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Discipline::Fcfs => f.write_str("FCFS"),
            Discipline::Ps => f.write_str("PS"),
        }
    }
}

/// One station of the network.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    /// Nominal service rate of one server, requests/second.
    pub service_rate: f64,
    pub servers: u32,
    pub discipline: Discipline,
    /// Multiplier on the nominal service rate (allocated compute).
    pub capacity: f64,
    /// Per-class nominal service rates, keyed by class id.
    pub class_service_rates: Option<BTreeMap<String, f64>>,
}

impl NodeSpec {
    /// Single-server FCFS node with unit capacity.
    pub fn new(id: impl Into<String>, service_rate: f64) -> Self {
        NodeSpec {
            id: id.into(),
            service_rate,
            servers: 1,
            discipline: Discipline::Fcfs,
            capacity: 1.0,
            class_service_rates: None,
        }
    }

    pub fn with_servers(mut self, servers: u32) -> Self {
        self.servers = servers;
        self
    }

    pub fn with_capacity(mut self, capacity: f64) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn with_discipline(mut self, discipline: Discipline) -> Self {
        self.discipline = discipline;
        self
    }

    /// Nominal rate for jobs of `class`, falling back to the node rate.
    pub fn rate_for_class(&self, class: &str) -> f64 {
        self.class_service_rates
            .as_ref()
            .and_then(|rates| rates.get(class).copied())
            .unwrap_or(self.service_rate)
    }

    /// True when the per-class rates (if any) differ from each other or from
    /// the node rate.
    pub fn has_class_dependent_rates(&self) -> bool {
        match &self.class_service_rates {
            None => false,
            Some(rates) => {
                let mut it = rates.values();
                match it.next() {
                    None => false,
                    Some(first) => it.any(|r| r != first),
                }
            }
        }
    }
}

/// Probabilistic routing.
///
/// `probs[j][i]` is the probability that a job finishing at node `j` moves to
/// node `i`; whatever is left of row `j` is the probability of leaving the
/// network. `entry[i]` is the probability that an external arrival joins at
/// node `i`.
///
/// For multi-class networks `class_switching` optionally holds the full
/// routing over the flattened `(node, class)` index `node * L + class`. When
/// absent, routing is class-preserving and follows `probs`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingMatrix {
    pub probs: Vec<Vec<f64>>,
    pub entry: Vec<f64>,
    pub class_switching: Option<Vec<Vec<f64>>>,
}

impl RoutingMatrix {
    pub fn new(probs: Vec<Vec<f64>>, entry: Vec<f64>) -> Self {
        RoutingMatrix { probs, entry, class_switching: None }
    }

    /// All-zero routing for `n` nodes with every arrival entering at node 0.
    pub fn feed_forward(n: usize) -> Self {
        let mut entry = vec![0.0; n];
        if n > 0 {
            entry[0] = 1.0;
        }
        RoutingMatrix::new(vec![vec![0.0; n]; n], entry)
    }

    pub fn len(&self) -> usize {
        self.entry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entry.is_empty()
    }

    /// Routing over the flattened `(node, class)` index, expanding the
    /// class-preserving default when no explicit class switching is set.
    pub fn flattened(&self, classes: usize) -> Vec<Vec<f64>> {
        if let Some(full) = &self.class_switching {
            return full.clone();
        }
        let n = self.probs.len();
        let dim = n * classes;
        let mut out = vec![vec![0.0; dim]; dim];
        for j in 0..n {
            for i in 0..n {
                let p = self.probs[j][i];
                if p == 0.0 {
                    continue;
                }
                for l in 0..classes {
                    out[j * classes + l][i * classes + l] = p;
                }
            }
        }
        out
    }
}

/// A customer class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub id: String,
    /// Probability that an external arrival belongs to this class.
    pub entry_probability: f64,
}

impl ClassSpec {
    pub fn new(id: impl Into<String>, entry_probability: f64) -> Self {
        ClassSpec { id: id.into(), entry_probability }
    }
}

/// The full network model.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub nodes: Vec<NodeSpec>,
    pub routing: RoutingMatrix,
    pub classes: Vec<ClassSpec>,
    /// Rate of external arrival events, per second. With bulk arrivals each
    /// event carries a batch of jobs.
    pub external_rate: f64,
    pub bulk: Option<BulkSpec>,
}

impl NetworkSpec {
    /// Single-class network.
    pub fn new(nodes: Vec<NodeSpec>, routing: RoutingMatrix, external_rate: f64) -> Self {
        NetworkSpec {
            nodes,
            routing,
            classes: vec![ClassSpec::new("default", 1.0)],
            external_rate,
            bulk: None,
        }
    }

    /// External job rate: the event rate times the mean batch size.
    pub fn job_rate(&self) -> f64 {
        match &self.bulk {
            Some(b) => self.external_rate * b.mean(),
            None => self.external_rate,
        }
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn class_index(&self, id: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.id == id)
    }

    pub fn is_multiclass(&self) -> bool {
        self.classes.len() > 1
    }

    pub fn with_external_rate(mut self, rate: f64) -> Self {
        self.external_rate = rate;
        self
    }

    pub fn with_interarrival(self, seconds: f64) -> Self {
        self.with_external_rate(1.0 / seconds)
    }

    /// Replace every node's capacity factor, in node order.
    pub fn with_capacities(mut self, capacities: &[f64]) -> Self {
        for (node, &c) in self.nodes.iter_mut().zip(capacities) {
            node.capacity = c;
        }
        self
    }

    pub fn with_bulk(mut self, bulk: BulkSpec) -> Self {
        self.bulk = Some(bulk);
        self
    }

    /// Nominal service rate for `(node, class)` by index.
    pub fn rate(&self, node: usize, class: usize) -> f64 {
        let n = &self.nodes[node];
        if self.classes.len() == 1 {
            return n.rate_for_class(&self.classes[0].id);
        }
        n.rate_for_class(&self.classes[class].id)
    }

    /// Renormalize routing rows whose sum exceeds one only by floating-point
    /// noise (at most `1 + 1e-9`). Sums within a few ulps of one are left as
    /// they are, which keeps the operation idempotent.
    pub fn normalize(&mut self) {
        const ROUNDING: f64 = 8.0 * f64::EPSILON;
        fn fix(row: &mut [f64]) {
            let s: f64 = row.iter().sum();
            if s > 1.0 + ROUNDING && s <= 1.0 + ROW_SUM_TOLERANCE {
                row.iter_mut().for_each(|p| *p /= s);
            }
        }
        self.routing.probs.iter_mut().for_each(|r| fix(r));
        if let Some(full) = &mut self.routing.class_switching {
            full.iter_mut().for_each(|r| fix(r));
        }
        let s: f64 = self.routing.entry.iter().sum();
        if (s - 1.0).abs() <= ROW_SUM_TOLERANCE && (s - 1.0).abs() > ROUNDING {
            self.routing.entry.iter_mut().for_each(|p| *p /= s);
        }
    }
}

/// Slack allowed on probability sums before they count as violations.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Node ids of the containerized IMS chain, in node order.
pub const CIMS_NODES: [&str; 6] = ["P-CSCF", "S/I-CSCF", "SLF", "HSS1", "HSS2", "HSS3"];

/// Mean service times of the containerized IMS chain, seconds.
pub const CIMS_SERVICE_TIMES: [f64; 6] = [4e-3, 6e-3, 3e-3, 9e-3, 9e-3, 9e-3];

/// SLF routing probabilities towards HSS1..HSS3.
pub const CIMS_HSS_ROUTING: [f64; 3] = [0.2, 0.3, 0.5];

/// The containerized IMS registration chain
/// `P-CSCF -> S/I-CSCF -> SLF -> {HSS1, HSS2, HSS3}` with one external
/// arrival per second. Adjust the load with
/// [`NetworkSpec::with_external_rate`].
pub fn preset_cims() -> NetworkSpec {
    cims_with_hss_routing(CIMS_HSS_ROUTING)
}

/// The IMS chain with custom SLF routing towards the three HSS nodes.
pub fn cims_with_hss_routing(hss: [f64; 3]) -> NetworkSpec {
    let nodes = CIMS_NODES
        .iter()
        .zip(CIMS_SERVICE_TIMES)
        .map(|(id, t)| NodeSpec::new(*id, 1.0 / t))
        .collect();
    let mut routing = RoutingMatrix::feed_forward(6);
    routing.probs[0][1] = 1.0;
    routing.probs[1][2] = 1.0;
    routing.probs[2][3..6].copy_from_slice(&hss);
    NetworkSpec::new(nodes, routing, 1.0)
}

/// Shared-HSS variant of the IMS chain: one HSS serves two request classes
/// that reach it with probabilities `shares`; any remaining traffic is a third
/// class served by a separate `HSS3`. `hss_service_times` gives the per-class
/// mean service times at the shared HSS. FCFS requires them to be equal.
pub fn cims_shared_hss(
    shares: [f64; 2],
    discipline: Discipline,
    hss_service_times: [f64; 2],
) -> NetworkSpec {
    let rest = 1.0 - shares[0] - shares[1];
    let with_rest = rest > ROW_SUM_TOLERANCE;
    let mut classes = vec![ClassSpec::new("class1", shares[0]), ClassSpec::new("class2", shares[1])];
    if with_rest {
        classes.push(ClassSpec::new("other", rest));
    }
    let l = classes.len();

    let mut nodes: Vec<NodeSpec> = CIMS_NODES[..3]
        .iter()
        .zip(CIMS_SERVICE_TIMES)
        .map(|(id, t)| NodeSpec::new(*id, 1.0 / t))
        .collect();
    let mut hss = NodeSpec::new("HSS", 1.0 / CIMS_SERVICE_TIMES[3]).with_discipline(discipline);
    let mut rates = BTreeMap::new();
    rates.insert("class1".to_string(), 1.0 / hss_service_times[0]);
    rates.insert("class2".to_string(), 1.0 / hss_service_times[1]);
    if with_rest {
        rates.insert("other".to_string(), hss.service_rate);
    }
    hss.class_service_rates = Some(rates);
    nodes.push(hss);
    if with_rest {
        nodes.push(NodeSpec::new("HSS3", 1.0 / CIMS_SERVICE_TIMES[5]));
    }
    let n = nodes.len();

    let mut routing = RoutingMatrix::feed_forward(n);
    routing.probs[0][1] = 1.0;
    routing.probs[1][2] = 1.0;
    routing.probs[2][3] = shares[0] + shares[1];
    if with_rest {
        routing.probs[2][4] = rest;
    }
    let mut full = vec![vec![0.0; n * l]; n * l];
    for c in 0..l {
        full[c][l + c] = 1.0;
        full[l + c][2 * l + c] = 1.0;
    }
    full[2 * l][3 * l] = 1.0;
    full[2 * l + 1][3 * l + 1] = 1.0;
    if with_rest {
        full[2 * l + 2][4 * l + 2] = 1.0;
    }
    routing.class_switching = Some(full);

    NetworkSpec { nodes, routing, classes, external_rate: 1.0, bulk: None }
}

/// A single FCFS M/M/1 (or M^X/M/1 with `bulk`) station.
pub fn single_node(service_rate: f64, external_rate: f64) -> NetworkSpec {
    NetworkSpec::new(
        vec![NodeSpec::new("node", service_rate)],
        RoutingMatrix::feed_forward(1),
        external_rate,
    )
}
