//! Benchmark fixtures shared by the criterion targets.

use chainq::model::{cims_with_hss_routing, NetworkSpec, NodeSpec, RoutingMatrix};

/// The IMS chain at `rate` registrations per second.
pub fn cims(rate: f64) -> NetworkSpec {
    cims_with_hss_routing([0.2, 0.3, 0.5]).with_external_rate(rate)
}

/// A feed-forward line of `n` identical nodes, useful for scaling runs.
pub fn tandem(n: usize, service_rate: f64, rate: f64) -> NetworkSpec {
    let nodes = (0..n).map(|i| NodeSpec::new(format!("n{i}"), service_rate)).collect();
    let mut routing = RoutingMatrix::feed_forward(n);
    for i in 0..n.saturating_sub(1) {
        routing.probs[i][i + 1] = 1.0;
    }
    NetworkSpec::new(nodes, routing, rate)
}
