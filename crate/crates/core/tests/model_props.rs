use chainq::model::config::{parse_network, render_network};
use chainq::model::{preset_cims, validate, BulkSpec, Discipline, NetworkSpec, NodeSpec, RoutingMatrix};
use proptest::prelude::*;

fn arb_network() -> impl Strategy<Value = NetworkSpec> {
    (1usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec((1e-3f64..1e4, 1u32..20, 0.1f64..10.0, any::<bool>()), n),
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, n), n),
            prop::collection::vec(0.0f64..1.0, n),
            1e-3f64..100.0,
        )
            .prop_map(|(nodes, raw, entry, rate)| {
                let nodes = nodes
                    .into_iter()
                    .enumerate()
                    .map(|(i, (mu, m, c, ps))| {
                        NodeSpec::new(format!("n{i}"), mu)
                            .with_servers(if ps { 1 } else { m })
                            .with_capacity(c)
                            .with_discipline(if ps { Discipline::Ps } else { Discipline::Fcfs })
                    })
                    .collect();
                // rows scaled to sum to at most 0.9 keep the network open
                let probs = raw
                    .iter()
                    .map(|row| {
                        let s: f64 = row.iter().sum();
                        row.iter().map(|p| if s > 0.0 { 0.9 * p / s } else { 0.0 }).collect()
                    })
                    .collect();
                let total: f64 = entry.iter().sum();
                let entry = if total > 0.0 {
                    entry.iter().map(|p| p / total).collect()
                } else {
                    let mut e = vec![0.0; entry.len()];
                    e[0] = 1.0;
                    e
                };
                // parsing renormalizes float noise in row sums; start from that form
                let mut spec = NetworkSpec::new(nodes, RoutingMatrix::new(probs, entry), rate);
                spec.normalize();
                spec
            })
    })
}

fn arb_bulk() -> impl Strategy<Value = BulkSpec> {
    prop_oneof![
        (1u32..1000).prop_map(BulkSpec::deterministic),
        (1u32..1000).prop_map(BulkSpec::uniform),
        (0.05f64..1.0).prop_map(BulkSpec::geometric),
    ]
}

proptest! {
    #[test]
    fn preset_is_valid_over_the_stable_range(frac in 1e-6f64..0.999_999) {
        // the tightest node is S/I-CSCF at 1/0.006 requests per second
        let spec = preset_cims().with_external_rate(frac / 0.006);
        prop_assert!(validate(&spec).is_valid());
    }

    #[test]
    fn render_then_parse_is_identity(spec in arb_network()) {
        let text = render_network(&spec);
        let back = parse_network(&text).unwrap();
        prop_assert_eq!(back, spec);
    }

    #[test]
    fn moments_match_pmf_summation(b in arb_bulk()) {
        let (mut m1, mut m2, mut mass) = (0.0f64, 0.0f64, 0.0f64);
        let mut k = 1u32;
        // geometric tails: stop once the remaining mass cannot move either moment
        while mass < 1.0 - 1e-17 && k < 100_000 {
            let p = b.pmf(k);
            let x = f64::from(k);
            m1 += x * p;
            m2 += x * x * p;
            mass += p;
            k += 1;
        }
        prop_assert!((b.mean() - m1).abs() <= 1e-12 * m1, "mean {} vs {}", b.mean(), m1);
        prop_assert!((b.second_moment() - m2).abs() <= 1e-12 * m2, "E[b^2] {} vs {}", b.second_moment(), m2);
    }
}
