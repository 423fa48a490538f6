//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::{Command, ExitCode};

use chainq::analytic::{bulk_moment_ratio, bulk_waiting, mmm_metrics, network_metrics, pk_waiting};
use chainq::model::{cims_shared_hss, cims_with_hss_routing, preset_cims, single_node, BulkSpec, Discipline};
use chainq::optimizer::{solve_allocation, AllocationProblem};
use chainq::simulator::{compare, simulate, Horizon, Metric, SimConfig, SimResult};
use chainq::traffic;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

/// Interarrival axis used by the figures: 1, 2, ..., 50 seconds.
fn axis() -> impl Iterator<Item = f64> {
    (1..=50).map(f64::from)
}

// Reference service times and visit ratios of the IMS chain, written out
// independently of the preset.
const TIMES: [f64; 6] = [0.004, 0.006, 0.003, 0.009, 0.009, 0.009];
const VISITS: [f64; 6] = [1.0, 1.0, 1.0, 0.2, 0.3, 0.5];

fn regime(capacity: &[f64; 6]) -> f64 {
    (0..6).map(|i| VISITS[i] * TIMES[i] / capacity[i]).sum()
}

fn criterion_1() -> Outcome {
    let m = network_metrics(&preset_cims().with_interarrival(50.0)).map_err(|e| e.to_string())?;
    let bound = m.response_lower_bound;
    check(bound == 0.022, format!("bound {bound:e} != 0.022"))?;
    // visit-weighted M/M/1 sum, sum v_i / (mu_i - v_i lambda)
    let oracle: f64 = (0..6).map(|i| VISITS[i] / (1.0 / TIMES[i] - VISITS[i] / 50.0)).sum();
    check(rel(m.chain_response, oracle) <= 1e-12, format!("E[T] {} vs oracle {oracle}", m.chain_response))?;
    let e = rel(m.chain_response, 0.022);
    check(e <= 0.005, format!("E[T](50 s) = {} off by {e:.2e}", m.chain_response))?;
    Ok(format!("bound = {bound}, E[T](1/lambda=50) = {:.6e} s ({:.3}% above)", m.chain_response, 100.0 * e))
}

fn criterion_2() -> Outcome {
    // Vectors in the expected order of chain response, largest first.
    let vectors: [[f64; 6]; 4] =
        [[1.0; 6], [1.0, 1.0, 1.0, 6.0, 5.0, 4.0], [6.0, 5.0, 4.0, 1.0, 1.0, 1.0], [3.0; 6]];
    let quoted = [0.022, 0.014965, 0.0116167, 0.0073333];
    let mut values = Vec::new();
    for (v, q) in vectors.iter().zip(quoted) {
        let spec = preset_cims().with_capacities(v).with_external_rate(1e-12);
        let m = network_metrics(&spec).map_err(|e| e.to_string())?;
        let oracle = regime(v);
        check(rel(m.response_lower_bound, oracle) <= 1e-9, format!("{v:?}: bound {} vs {oracle}", m.response_lower_bound))?;
        check(rel(m.chain_response, oracle) <= 1e-9, format!("{v:?}: E[T] {} vs {oracle}", m.chain_response))?;
        check((oracle - q).abs() <= 5e-7, format!("{v:?}: regime {oracle} vs quoted {q}"))?;
        values.push(m.chain_response * 1e3);
    }
    for t in axis() {
        let curve: Vec<f64> = vectors
            .iter()
            .map(|v| network_metrics(&preset_cims().with_capacities(v).with_interarrival(t)).map(|m| m.chain_response))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        check(curve.windows(2).all(|w| w[0] > w[1]), format!("ordering broken at 1/lambda = {t}: {curve:?}"))?;
    }
    Ok(format!(
        "regimes {:.6} > {:.6} > {:.6} > {:.6} ms; ordering holds at 50 points",
        values[0], values[1], values[2], values[3]
    ))
}

fn criterion_3() -> Outcome {
    let b = BulkSpec::uniform(100);
    let (s1, s2) = (1..=100).fold((0.0, 0.0), |(a, q), k| (a + f64::from(k), q + f64::from(k * k)));
    let ratio = bulk_moment_ratio(&b);
    check(ratio == 66.0, format!("moment ratio {ratio}"))?;
    check(s2 / s1 - 1.0 == ratio, "moment ratio disagrees with direct sums")?;

    let mu = 250.0;
    let batch_rate = 0.5 * mu / b.mean();
    let w = bulk_waiting(batch_rate, mu, &b).map_err(|e| e.to_string())?;
    check(rel(w, 67.0 / mu) <= 1e-12, format!("bulk_waiting {w} vs {}", 67.0 / mu))?;

    for (lambda, mu) in [(10.0, 250.0), (125.0, 250.0), (90.0, 111.0)] {
        let one = bulk_waiting(lambda, mu, &BulkSpec::deterministic(1)).map_err(|e| e.to_string())?;
        let pk = pk_waiting(lambda, 1.0 / mu, 2.0 / (mu * mu)).map_err(|e| e.to_string())?;
        check(rel(one, pk) <= 1e-12, format!("b=1 at lambda={lambda}: {one} vs P-K {pk}"))?;
    }

    let spec = single_node(mu, batch_rate).with_bulk(b);
    let r = simulate(&SimConfig::new(spec, Horizon::Arrivals(100_000)).with_replications(10)).map_err(|e| e.to_string())?;
    let sim = r.nodes[0].waiting;
    let e = rel(sim.mean, w);
    check(e <= 0.03, format!("DES W = {} +- {} vs {w}", sim.mean, sim.half_width))?;
    Ok(format!(
        "ratio 66, W = 67/mu = {w:.6e} s, DES {:.6e} +- {:.1e} s ({:.2}% off)",
        sim.mean,
        sim.half_width,
        100.0 * e
    ))
}

fn criterion_4() -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut misses = Vec::new();
    for t in [1.0, 2.0, 5.0, 10.0] {
        let cfg = SimConfig::new(preset_cims().with_interarrival(t), Horizon::Arrivals(1_000_000)).with_replications(10);
        let report = compare(&cfg).map_err(|e| e.to_string())?;
        for row in report.rows.iter().filter(|r| matches!(r.metric, Metric::Waiting | Metric::QueueLength)) {
            check(row.exact, format!("{} {} marked approximate", row.node, row.metric))?;
            if row.pass != Some(true) {
                let excess = (row.analytic - row.simulated.mean).abs() - row.simulated.half_width;
                misses.push(format!(
                    "1/lambda={t} {} {}: analytic {:.6e}, simulated {:.6e} +- {:.2e} ({:.2}% off, {:.2}% of analytic outside the CI)",
                    row.node,
                    row.metric,
                    row.analytic,
                    row.simulated.mean,
                    row.simulated.half_width,
                    100.0 * row.relative_error(),
                    100.0 * excess / row.analytic
                ));
            }
            checked += 1;
            worst = worst.max(row.relative_error());
        }
    }
    check(misses.is_empty(), format!("{} of {checked} not covered: {}", misses.len(), misses.join("; ")))?;
    Ok(format!("{checked} per-node E[W]/E[Q] values covered; largest relative gap {:.2}%", 100.0 * worst))
}

/// Stationary distribution of the M/M/m birth-death chain by cumulative
/// products. Truncated once the remaining tail mass is below 1e-12 of the
/// mass at or above m, so that the tiny queue of a lightly loaded
/// many-server node is resolved as accurately as its total.
fn birth_death(lambda: f64, mu: f64, m: u32) -> (f64, f64, f64) {
    let rho = lambda / (f64::from(m) * mu);
    let mut weights = vec![1.0f64];
    loop {
        let k = weights.len() as u32;
        let next = weights[k as usize - 1] * lambda / (f64::from(k.min(m)) * mu);
        weights.push(next);
        // beyond m the chain is geometric, so the tail is next * rho / (1 - rho)
        if k >= m && next * rho / (1.0 - rho) < 1e-12 * weights[m as usize..].iter().sum::<f64>() {
            break;
        }
    }
    let total: f64 = weights.iter().sum();
    let (mut l, mut lq, mut busy) = (0.0, 0.0, 0.0);
    for (k, w) in weights.iter().enumerate() {
        let (k, p) = (k as f64, w / total);
        l += k * p;
        lq += (k - f64::from(m)).max(0.0) * p;
        busy += k.min(f64::from(m)) * p;
    }
    (l, lq, busy / f64::from(m))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m: u32 = rng.random_range(1..=20);
        let mu: f64 = rng.random_range(1.0..400.0);
        let rho: f64 = rng.random_range(0.02..0.95);
        let lambda = rho * f64::from(m) * mu;
        let a = mmm_metrics(lambda, mu, m).map_err(|e| e.to_string())?;
        let (l, lq, util) = birth_death(lambda, mu, m);
        let errors = [
            rel(a.mean_number, l),
            rel(a.mean_queue_length, lq),
            rel(a.utilization, util),
            rel(a.mean_waiting, lq / lambda),
            rel(a.mean_response, l / lambda),
        ];
        let e = errors.iter().cloned().fold(0.0, f64::max);
        check(e <= 1e-9, format!("m={m} mu={mu} rho={rho}: relative error {e:e}"))?;
        worst = worst.max(e);
    }
    for t in axis() {
        let base = network_metrics(&preset_cims().with_interarrival(t)).map_err(|e| e.to_string())?;
        let mut spec = preset_cims().with_interarrival(t);
        spec.nodes[0].servers = 10;
        spec.nodes[1].servers = 10;
        let multi = network_metrics(&spec).map_err(|e| e.to_string())?;
        for id in ["P-CSCF", "S/I-CSCF"] {
            let (b, m) = (base.node(id).unwrap(), multi.node(id).unwrap());
            check(
                m.mean_waiting < b.mean_waiting && m.mean_queue_length < b.mean_queue_length,
                format!("{id} at 1/lambda={t}: m=10 W {} Q {} vs m=1 W {} Q {}", m.mean_waiting, m.mean_queue_length, b.mean_waiting, b.mean_queue_length),
            )?;
        }
    }
    Ok(format!("20 triples within {worst:.1e} of the birth-death solution; m=10 lowers W and Q at 50 points"))
}

fn criterion_6() -> Outcome {
    let spec = preset_cims().with_external_rate(1.0);
    let lambdas = traffic::solve(&spec).map_err(|e| e.to_string())?.arrival_rates;
    let capacities: Vec<f64> = spec.nodes.iter().map(|n| n.capacity).collect();
    let budget = 1000.0;
    let p = AllocationProblem::new(lambdas.clone(), capacities.clone(), budget);
    let s = solve_allocation(&p).map_err(|e| e.to_string())?;

    let used: f64 = s.service_rates.iter().zip(&capacities).map(|(m, c)| m * c).sum();
    check((used - budget).abs() <= 1e-9 * budget, format!("sum c mu = {used}"))?;
    for (m, l) in s.service_rates.iter().zip(&lambdas) {
        check((m - (l + 166.0)).abs() <= 1e-12 * m, format!("mu = {m} for lambda = {l}"))?;
    }

    // Slack s_i = c_i mu_i - lambda_i. Moving effective capacity by delta_i
    // with sum delta_i = 0 changes the objective by
    // sum_i -delta_i / (s_i (s_i + delta_i)), evaluated directly so that the
    // tiny gaps of small moves are not lost to cancellation.
    let slack: Vec<f64> =
        s.service_rates.iter().zip(&capacities).zip(&lambdas).map(|((m, c), l)| c * m - l).collect();
    let best: f64 = slack.iter().map(|x| 1.0 / x).sum();
    check(rel(best, s.objective) <= 1e-12, format!("objective {} vs {best}", s.objective))?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut evaluated, mut smallest) = (0, f64::INFINITY);
    for _ in 0..100_000 {
        let mut delta: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = delta.iter().sum::<f64>() / 6.0;
        let norm = delta.iter().map(|d| (d - mean).powi(2)).sum::<f64>().sqrt();
        let size = 10f64.powf(rng.random_range(-6.0..(slack[0].log10() + 0.3)));
        delta.iter_mut().for_each(|d| *d = (*d - mean) / norm * size);
        if slack.iter().zip(&delta).any(|(s, d)| s + d <= 0.0) {
            continue;
        }
        evaluated += 1;
        let gap: f64 = slack.iter().zip(&delta).map(|(s, d)| -d / (s * (s + d))).sum();
        check(gap > 0.0, format!("perturbation {delta:?} improves the objective by {}", -gap))?;
        smallest = smallest.min(gap);
    }
    check(evaluated > 90_000, format!("only {evaluated} feasible perturbations"))?;
    Ok(format!("mu_i = lambda_i + 166, budget met, {evaluated} feasible perturbations never beat {best:.6e} (smallest gap {smallest:.1e})"))
}

fn des(spec: chainq::model::NetworkSpec) -> Result<SimResult, String> {
    simulate(&SimConfig::new(spec, Horizon::Arrivals(200_000)).with_replications(10)).map_err(|e| e.to_string())
}

fn criterion_7() -> Outcome {
    let pairs = [(0.2, 0.3), (0.2, 0.4), (0.2, 0.5), (0.2, 0.6)];
    let splits = [(0.003, 0.006), (0.0045, 0.0045), (0.006, 0.003)];
    let err = |e: chainq::analytic::AnalyticError| e.to_string();

    for t in axis() {
        for (p1, p2) in pairs {
            let single = network_metrics(&cims_with_hss_routing([p1, p2, 1.0 - p1 - p2]).with_interarrival(t)).map_err(err)?;
            let shared = network_metrics(&cims_shared_hss([p1, p2], Discipline::Fcfs, [0.009; 2]).with_interarrival(t)).map_err(err)?;
            let hss = shared.node("HSS").unwrap();
            for (k, id) in ["HSS1", "HSS2"].iter().enumerate() {
                let d = single.node(id).unwrap().mean_waiting;
                let c = hss.per_class[k].mean_waiting;
                check(d < c, format!("{p1}/{p2} at 1/lambda={t}: dedicated {id} {d} vs shared class {} {c}", k + 1))?;
            }
        }
        let fcfs = network_metrics(&cims_shared_hss([0.3, 0.6], Discipline::Fcfs, [0.009; 2]).with_interarrival(t)).map_err(err)?;
        for (t1, t2) in splits {
            let ps = network_metrics(&cims_shared_hss([0.3, 0.6], Discipline::Ps, [t1, t2]).with_interarrival(t)).map_err(err)?;
            let (a, b) = (ps.node("HSS").unwrap().mean_waiting, fcfs.node("HSS").unwrap().mean_waiting);
            check(a < b, format!("split {t1}/{t2} at 1/lambda={t}: PS {a} vs FCFS {b}"))?;
        }
    }

    let mut runs = 0;
    for t in [1.0, 5.0] {
        for (p1, p2) in pairs {
            let single = des(cims_with_hss_routing([p1, p2, 1.0 - p1 - p2]).with_interarrival(t))?;
            let shared = des(cims_shared_hss([p1, p2], Discipline::Fcfs, [0.009; 2]).with_interarrival(t))?;
            let hss = shared.node("HSS").unwrap();
            for (k, id) in ["HSS1", "HSS2"].iter().enumerate() {
                let d = single.node(id).unwrap().waiting.mean;
                let c = hss.per_class[k].waiting.mean;
                check(d < c, format!("DES {p1}/{p2} at 1/lambda={t}: dedicated {id} {d} vs shared {c}"))?;
            }
            runs += 2;
        }
        let fcfs = des(cims_shared_hss([0.3, 0.6], Discipline::Fcfs, [0.009; 2]).with_interarrival(t))?;
        runs += 1;
        for (t1, t2) in splits {
            let ps = des(cims_shared_hss([0.3, 0.6], Discipline::Ps, [t1, t2]).with_interarrival(t))?;
            let (a, b) = (ps.node("HSS").unwrap().waiting.mean, fcfs.node("HSS").unwrap().waiting.mean);
            check(a < b, format!("DES split {t1}/{t2} at 1/lambda={t}: PS {a} vs FCFS {b}"))?;
            runs += 1;
        }
    }
    Ok(format!(
        "dedicated < shared for {} pairs and PS < FCFS for {} splits at 50 loads; {runs} simulations agree",
        pairs.len(),
        splits.len()
    ))
}

fn chainq(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_chainq"))
        .args(args)
        .env_remove("CHAINQ_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.code() == Some(0), format!("{args:?} exited {:?}", out.status.code()))?;
    Ok(out.stdout)
}

fn criterion_8() -> Outcome {
    let runs: [&[&str]; 3] = [
        &["simulate", "--preset", "cims", "--interarrival", "2", "--jobs", "20000", "--seed", "11", "--format", "csv"],
        &["simulate", "--preset", "cims-shared-ps", "--interarrival", "2", "--jobs", "20000", "--format", "json"],
        &["compare", "--preset", "cims", "--interarrival", "5", "--jobs", "20000", "--seed", "3"],
    ];
    for args in runs {
        let (a, b) = (chainq(args)?, chainq(args)?);
        check(!a.is_empty() && a == b, format!("{args:?} differs between runs"))?;
    }

    let seeds = [1u64, 2, 3, 4, 5];
    let results: Vec<SimResult> = seeds
        .iter()
        .map(|s| {
            let cfg = SimConfig::new(preset_cims().with_interarrival(2.0), Horizon::Arrivals(200_000)).with_seed(*s);
            simulate(&cfg).map_err(|e| e.to_string())
        })
        .collect::<Result<_, _>>()?;
    let mut pairs = 0;
    for i in 0..results.len() {
        for j in i + 1..results.len() {
            for (a, b) in results[i].nodes.iter().zip(&results[j].nodes) {
                for (x, y, what) in [
                    (a.waiting, b.waiting, "W"),
                    (a.queue_length, b.queue_length, "Q"),
                    (a.response, b.response, "T"),
                    (a.utilization, b.utilization, "rho"),
                ] {
                    check(x.overlaps(&y), format!("{} {what}: seeds {} and {} disjoint: {x:?} {y:?}", a.id, seeds[i], seeds[j]))?;
                    pairs += 1;
                }
            }
        }
    }
    Ok(format!("3 commands byte-identical on repeat; {pairs} seed-pair CIs overlap"))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({detail})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL ({why})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
