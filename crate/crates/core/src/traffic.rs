//! Traffic (balance) equations and visit ratios.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::model::{Discipline, NetworkSpec};

/// A node counts as unstable once its utilization reaches `1 - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-9;

const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrafficError {
    #[error("routing is singular: the network is not open")]
    SingularRouting,
    #[error("FCFS node '{node}' has class-dependent service rates")]
    ClassMismatch { node: String },
    #[error("network has {classes} classes; use the multi-class solver")]
    MultiClass { classes: usize },
}

/// Per-node (and per-class) flows of an open network.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSolution {
    /// External job rate (event rate times mean batch size).
    pub external_rate: f64,
    pub arrival_rates: Vec<f64>,
    pub visit_ratios: Vec<f64>,
    /// `class_arrival_rates[i][l]`; a single column for one-class networks.
    pub class_arrival_rates: Vec<Vec<f64>>,
    pub class_visit_ratios: Vec<Vec<f64>>,
    pub utilizations: Vec<f64>,
    /// Class-`l` share of the utilization of node `i`.
    pub class_utilizations: Vec<Vec<f64>>,
    pub stable: Vec<bool>,
}

impl TrafficSolution {
    pub fn all_stable(&self) -> bool {
        self.stable.iter().all(|s| *s)
    }

    /// Index of the node with the highest utilization.
    pub fn bottleneck(&self) -> usize {
        self.utilizations
            .iter()
            .enumerate()
            .fold(0, |best, (i, r)| if *r > self.utilizations[best] { i } else { best })
    }
}

/// Solve `x = external + routing^T x` by LU with partial pivoting.
///
/// Fails with [`TrafficError::SingularRouting`] when the system is singular or
/// the solution does not reproduce the right-hand side, which is how an
/// open network is told apart from one with a closed routing cycle.
pub fn solve_balance(routing: &[Vec<f64>], external: &[f64]) -> Result<Vec<f64>, TrafficError> {
    let n = external.len();
    let a = DMatrix::from_fn(n, n, |i, j| f64::from(u8::from(i == j)) - routing[j][i]);
    let b = DVector::from_column_slice(external);
    let x = a.clone().lu().solve(&b).ok_or(TrafficError::SingularRouting)?;
    let scale = external.iter().map(|e| e.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    let residual = (&a * &x - &b).amax();
    if !x.iter().all(|v| v.is_finite()) || residual > RESIDUAL_TOLERANCE * scale {
        return Err(TrafficError::SingularRouting);
    }
    // Visit ratios are nonnegative; anything else is a numerically singular system.
    if x.iter().any(|v| *v < -RESIDUAL_TOLERANCE * scale) {
        return Err(TrafficError::SingularRouting);
    }
    Ok(x.iter().map(|v| v.max(0.0)).collect())
}

fn stable(rho: f64) -> bool {
    rho < 1.0 - STABILITY_MARGIN
}

/// Single-class traffic solution.
pub fn solve_traffic(spec: &NetworkSpec) -> Result<TrafficSolution, TrafficError> {
    if spec.classes.len() > 1 {
        return Err(TrafficError::MultiClass { classes: spec.classes.len() });
    }
    let lambda = spec.job_rate();
    let visits = solve_balance(&spec.routing.probs, &spec.routing.entry)?;
    let arrival_rates: Vec<f64> = visits.iter().map(|v| lambda * v).collect();
    let utilizations: Vec<f64> = spec
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| arrival_rates[i] / (f64::from(node.servers) * node.capacity * spec.rate(i, 0)))
        .collect();
    Ok(TrafficSolution {
        external_rate: lambda,
        class_arrival_rates: arrival_rates.iter().map(|r| vec![*r]).collect(),
        class_visit_ratios: visits.iter().map(|v| vec![*v]).collect(),
        class_utilizations: utilizations.iter().map(|r| vec![*r]).collect(),
        stable: utilizations.iter().map(|r| stable(*r)).collect(),
        arrival_rates,
        visit_ratios: visits,
        utilizations,
    })
}

/// Multi-class traffic solution over the flattened `(node, class)` index.
///
/// Utilizations follow the BCMP station rules: FCFS nodes load every class
/// at the common node rate, PS nodes at the class's own rate.
pub fn solve_traffic_multiclass(spec: &NetworkSpec) -> Result<TrafficSolution, TrafficError> {
    let n = spec.nodes.len();
    let l = spec.classes.len();
    for node in &spec.nodes {
        if node.discipline == Discipline::Fcfs && node.has_class_dependent_rates() {
            return Err(TrafficError::ClassMismatch { node: node.id.clone() });
        }
    }
    let lambda = spec.job_rate();
    let flat = spec.routing.flattened(l);
    let external: Vec<f64> = (0..n * l)
        .map(|k| spec.routing.entry[k / l] * spec.classes[k % l].entry_probability)
        .collect();
    let x = solve_balance(&flat, &external)?;

    let class_visit_ratios: Vec<Vec<f64>> = (0..n).map(|i| x[i * l..(i + 1) * l].to_vec()).collect();
    let class_arrival_rates: Vec<Vec<f64>> =
        class_visit_ratios.iter().map(|row| row.iter().map(|v| lambda * v).collect()).collect();
    let class_utilizations: Vec<Vec<f64>> = spec
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let cap = f64::from(node.servers) * node.capacity;
            (0..l)
                .map(|c| {
                    let rate = match node.discipline {
                        Discipline::Fcfs => node.service_rate,
                        Discipline::Ps => spec.rate(i, c),
                    };
                    class_arrival_rates[i][c] / (cap * rate)
                })
                .collect()
        })
        .collect();
    let utilizations: Vec<f64> = class_utilizations.iter().map(|r| r.iter().sum()).collect();
    Ok(TrafficSolution {
        external_rate: lambda,
        arrival_rates: class_arrival_rates.iter().map(|r| r.iter().sum()).collect(),
        visit_ratios: class_visit_ratios.iter().map(|r| r.iter().sum()).collect(),
        stable: utilizations.iter().map(|r| stable(*r)).collect(),
        class_arrival_rates,
        class_visit_ratios,
        class_utilizations,
        utilizations,
    })
}

/// Dispatch on the number of classes.
pub fn solve(spec: &NetworkSpec) -> Result<TrafficSolution, TrafficError> {
    if spec.is_multiclass() {
        solve_traffic_multiclass(spec)
    } else {
        solve_traffic(spec)
    }
}
