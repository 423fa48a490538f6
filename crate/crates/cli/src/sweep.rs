//! Parameter sweeps producing plot-ready tables.
//!
//! Scalar sweeps (`interarrival_time`, `arrival_rate`) give one row per
//! value. Vector and pair sweeps give one row per (value, interarrival time)
//! so each value traces a curve over the load axis.

use chainq::analytic::{network_metrics, ChainMetrics};
use chainq::model::{cims_shared_hss, cims_with_hss_routing, Discipline, NetworkSpec};
use clap::ValueEnum;
use rayon::prelude::*;

use crate::output::{Cell, Table, Units};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum SweepParam {
    /// Mean time between arrivals, seconds.
    InterarrivalTime,
    /// Arrival rate, per second.
    ArrivalRate,
    /// Capacity factors, one vector per value, separated by `;`.
    CapacityVector,
    /// Class shares `p1/p2` at a shared HSS versus dedicated HSS1/HSS2.
    ClassProbabilities,
    /// Per-class HSS service times `t1/t2` (seconds) under PS versus FCFS.
    ServiceSplit,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::InterarrivalTime => "interarrival_time",
            SweepParam::ArrivalRate => "arrival_rate",
            SweepParam::CapacityVector => "capacity_vector",
            SweepParam::ClassProbabilities => "class_probabilities",
            SweepParam::ServiceSplit => "service_split",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepMetric {
    #[value(name = "EQ")]
    Eq,
    #[value(name = "EW")]
    Ew,
    #[value(name = "ET")]
    Et,
    #[value(name = "rho")]
    Rho,
    #[value(name = "bound")]
    Bound,
}

pub const ALL_METRICS: [SweepMetric; 5] =
    [SweepMetric::Eq, SweepMetric::Ew, SweepMetric::Et, SweepMetric::Rho, SweepMetric::Bound];

#[derive(Debug, Clone, PartialEq)]
pub enum SweepValues {
    Scalars(Vec<f64>),
    Vectors(Vec<Vec<f64>>),
    Pairs(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: SweepValues,
    pub metrics: Vec<SweepMetric>,
    /// Load axis for vector and pair sweeps, seconds.
    pub interarrivals: Vec<f64>,
}

/// Parse `start:end:step` (inclusive) or a comma-separated list.
pub fn parse_scalars(text: &str) -> Result<Vec<f64>, String> {
    let text = text.trim();
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}"));
    let values = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(format!("range '{text}' must be start:end:step"));
        };
        let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
        if !(step > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(format!("range '{text}' needs finite bounds and a positive step"));
        }
        let n = ((b - a).abs() / step + 1e-9).floor() as usize;
        let dir = if b >= a { 1.0 } else { -1.0 };
        (0..=n).map(|k| a + dir * step * k as f64).collect()
    } else {
        text.split(',').map(parse).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err("no sweep values".into());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("sweep values must be finite".into());
    }
    let up = values.windows(2).all(|w| w[1] > w[0]);
    let down = values.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(format!("sweep values must be strictly monotone: {values:?}"));
    }
    Ok(values)
}

fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}")))
        .collect()
}

fn parse_pair(text: &str) -> Result<(f64, f64), String> {
    let (a, b) = text.split_once('/').ok_or_else(|| format!("'{text}' must look like a/b"))?;
    let p = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}"));
    Ok((p(a)?, p(b)?))
}

pub fn parse_values(param: SweepParam, text: &str) -> Result<SweepValues, String> {
    let items = || text.split(';').map(str::trim).filter(|s| !s.is_empty());
    let values = match param {
        SweepParam::InterarrivalTime | SweepParam::ArrivalRate => {
            let v = parse_scalars(text)?;
            if v.iter().any(|x| *x <= 0.0) {
                return Err("interarrival times and rates must be positive".into());
            }
            SweepValues::Scalars(v)
        }
        SweepParam::CapacityVector => SweepValues::Vectors(items().map(parse_vector).collect::<Result<_, _>>()?),
        SweepParam::ClassProbabilities | SweepParam::ServiceSplit => {
            SweepValues::Pairs(items().map(parse_pair).collect::<Result<_, _>>()?)
        }
    };
    let empty = match &values {
        SweepValues::Scalars(v) => v.is_empty(),
        SweepValues::Vectors(v) => v.is_empty(),
        SweepValues::Pairs(v) => v.is_empty(),
    };
    if empty {
        return Err("no sweep values".into());
    }
    Ok(values)
}

fn label(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn metric_columns(spec: &NetworkSpec, metrics: &[SweepMetric], units: Units) -> Vec<String> {
    let mut cols = Vec::new();
    for m in metrics {
        let name = match m {
            SweepMetric::Eq => "EQ".to_string(),
            SweepMetric::Ew => units.label("EW"),
            SweepMetric::Et => units.label("ET"),
            SweepMetric::Rho => "rho".to_string(),
            SweepMetric::Bound => continue,
        };
        cols.extend(spec.nodes.iter().map(|n| format!("{}.{name}", n.id)));
    }
    if metrics.contains(&SweepMetric::Et) {
        cols.push(format!("chain.{}", units.label("ET")));
    }
    if metrics.contains(&SweepMetric::Bound) {
        cols.push(format!("chain.{}", units.label("bound")));
    }
    cols
}

fn metric_cells(m: &ChainMetrics, metrics: &[SweepMetric], units: Units) -> Vec<Cell> {
    let s = units.scale();
    let mut cells = Vec::new();
    for metric in metrics {
        for n in &m.per_node {
            let v = match metric {
                SweepMetric::Eq => n.mean_queue_length,
                SweepMetric::Ew => n.mean_waiting * s,
                SweepMetric::Et => n.mean_response * s,
                SweepMetric::Rho => n.utilization,
                SweepMetric::Bound => break,
            };
            cells.push(Cell::Num(v));
        }
    }
    if metrics.contains(&SweepMetric::Et) {
        cells.push(Cell::Num(m.chain_response * s));
    }
    if metrics.contains(&SweepMetric::Bound) {
        cells.push(Cell::Num(m.response_lower_bound * s));
    }
    cells
}

fn evaluate(spec: &NetworkSpec) -> Result<ChainMetrics, CliError> {
    network_metrics(spec).map_err(|e| CliError::Input(e.to_string()))
}

/// Evaluate `points` in parallel, keeping input order.
fn rows<P: Sync, F>(points: &[P], f: F) -> Result<Vec<(Vec<Cell>, bool)>, CliError>
where
    F: Fn(&P) -> Result<(Vec<Cell>, bool), CliError> + Sync + Send,
{
    points.par_iter().map(f).collect()
}

/// Outcome of a sweep: the table and whether every point was stable.
pub struct SweepOutput {
    pub table: Table,
    pub all_stable: bool,
}

/// Run a sweep over `base`. The class-probability and service-split sweeps
/// build their own IMS variants and ignore `base`.
pub fn run_sweep(base: &NetworkSpec, sweep: &SweepSpec, units: Units) -> Result<SweepOutput, CliError> {
    let mut metrics: Vec<SweepMetric> = Vec::new();
    for m in &sweep.metrics {
        if !metrics.contains(m) {
            metrics.push(*m);
        }
    }
    let (columns, computed) = match (&sweep.param, &sweep.values) {
        (SweepParam::InterarrivalTime | SweepParam::ArrivalRate, SweepValues::Scalars(xs)) => {
            let mut cols = vec!["interarrival_s".to_string(), "arrival_rate".to_string()];
            cols.extend(metric_columns(base, &metrics, units));
            let by_time = sweep.param == SweepParam::InterarrivalTime;
            let computed = rows(xs, |&x| {
                let spec = if by_time { base.clone().with_interarrival(x) } else { base.clone().with_external_rate(x) };
                let m = evaluate(&spec)?;
                let (t, rate) = if by_time { (x, 1.0 / x) } else { (1.0 / x, x) };
                let mut cells = vec![Cell::Num(t), Cell::Num(rate)];
                cells.extend(metric_cells(&m, &metrics, units));
                Ok((cells, m.all_stable()))
            })?;
            (cols, computed)
        }
        (SweepParam::CapacityVector, SweepValues::Vectors(vs)) => {
            if let Some(bad) = vs.iter().find(|v| v.len() != base.nodes.len()) {
                return Err(CliError::Input(format!(
                    "capacity vector '{}' has {} entries, network has {} nodes",
                    label(bad),
                    bad.len(),
                    base.nodes.len()
                )));
            }
            let mut cols = vec!["capacity".to_string(), "interarrival_s".to_string(), "arrival_rate".to_string()];
            cols.extend(metric_columns(base, &metrics, units));
            let points: Vec<(&Vec<f64>, f64)> =
                vs.iter().flat_map(|v| sweep.interarrivals.iter().map(move |t| (v, *t))).collect();
            let computed = rows(&points, |(v, t)| {
                let spec = base.clone().with_capacities(v).with_interarrival(*t);
                let m = evaluate(&spec)?;
                let mut cells = vec![Cell::text(label(v)), Cell::Num(*t), Cell::Num(1.0 / t)];
                cells.extend(metric_cells(&m, &metrics, units));
                Ok((cells, m.all_stable()))
            })?;
            (cols, computed)
        }
        (SweepParam::ClassProbabilities, SweepValues::Pairs(ps)) => class_probabilities(ps, &sweep.interarrivals, units)?,
        (SweepParam::ServiceSplit, SweepValues::Pairs(ps)) => service_split(ps, &sweep.interarrivals, units)?,
        _ => return Err(CliError::Input("sweep values do not match the parameter".into())),
    };
    let mut table = Table::new(columns);
    let mut all_stable = true;
    for (cells, stable) in computed {
        all_stable &= stable;
        table.push(cells);
    }
    Ok(SweepOutput { table, all_stable })
}

type Computed = (Vec<String>, Vec<(Vec<Cell>, bool)>);

/// Dedicated HSS1/HSS2 (single class) against one shared FCFS HSS whose two
/// classes arrive with the same probabilities.
fn class_probabilities(pairs: &[(f64, f64)], interarrivals: &[f64], units: Units) -> Result<Computed, CliError> {
    for (p1, p2) in pairs {
        if !(*p1 > 0.0 && *p2 > 0.0 && p1 + p2 <= 1.0 + 1e-9) {
            return Err(CliError::Input(format!("class probabilities {p1}/{p2} must be positive and sum to <= 1")));
        }
    }
    let s = units.scale();
    let ew = units.label("EW");
    let cols = vec![
        "p1".to_string(),
        "p2".to_string(),
        "interarrival_s".to_string(),
        format!("dedicated.HSS1.{ew}"),
        format!("dedicated.HSS2.{ew}"),
        format!("shared.class1.{ew}"),
        format!("shared.class2.{ew}"),
        format!("dedicated.gap.{ew}"),
        format!("shared.gap.{ew}"),
    ];
    let points: Vec<((f64, f64), f64)> =
        pairs.iter().flat_map(|p| interarrivals.iter().map(move |t| (*p, *t))).collect();
    let computed = rows(&points, |&((p1, p2), t)| {
        let single = cims_with_hss_routing([p1, p2, (1.0 - p1 - p2).max(0.0)]).with_interarrival(t);
        let shared = cims_shared_hss([p1, p2], Discipline::Fcfs, [0.009; 2]).with_interarrival(t);
        let a = evaluate(&single)?;
        let b = evaluate(&shared)?;
        let d1 = a.node("HSS1").expect("preset node").mean_waiting;
        let d2 = a.node("HSS2").expect("preset node").mean_waiting;
        let hss = b.node("HSS").expect("preset node");
        let (s1, s2) = (hss.per_class[0].mean_waiting, hss.per_class[1].mean_waiting);
        let cells = vec![
            Cell::Num(p1),
            Cell::Num(p2),
            Cell::Num(t),
            Cell::Num(d1 * s),
            Cell::Num(d2 * s),
            Cell::Num(s1 * s),
            Cell::Num(s2 * s),
            Cell::Num((d2 - d1) * s),
            Cell::Num((s2 - s1) * s),
        ];
        Ok((cells, a.all_stable() && b.all_stable()))
    })?;
    Ok((cols, computed))
}

/// Shared HSS with classes 0.3/0.6: FCFS at 9 ms against PS with per-class
/// service times `t1/t2`.
fn service_split(pairs: &[(f64, f64)], interarrivals: &[f64], units: Units) -> Result<Computed, CliError> {
    for (a, b) in pairs {
        if !(*a > 0.0 && *b > 0.0) {
            return Err(CliError::Input(format!("service times {a}/{b} must be positive")));
        }
    }
    let s = units.scale();
    let ew = units.label("EW");
    let cols = vec![
        "t1_s".to_string(),
        "t2_s".to_string(),
        "interarrival_s".to_string(),
        format!("fcfs.HSS.{ew}"),
        format!("ps.HSS.{ew}"),
        format!("ps.class1.{ew}"),
        format!("ps.class2.{ew}"),
    ];
    let points: Vec<((f64, f64), f64)> =
        pairs.iter().flat_map(|p| interarrivals.iter().map(move |t| (*p, *t))).collect();
    let computed = rows(&points, |&((t1, t2), t)| {
        let fcfs = cims_shared_hss([0.3, 0.6], Discipline::Fcfs, [0.009; 2]).with_interarrival(t);
        let ps = cims_shared_hss([0.3, 0.6], Discipline::Ps, [t1, t2]).with_interarrival(t);
        let f = evaluate(&fcfs)?;
        let p = evaluate(&ps)?;
        let fh = f.node("HSS").expect("preset node");
        let ph = p.node("HSS").expect("preset node");
        let cells = vec![
            Cell::Num(t1),
            Cell::Num(t2),
            Cell::Num(t),
            Cell::Num(fh.mean_waiting * s),
            Cell::Num(ph.mean_waiting * s),
            Cell::Num(ph.per_class[0].mean_waiting * s),
            Cell::Num(ph.per_class[1].mean_waiting * s),
        ];
        Ok((cells, f.all_stable() && p.all_stable()))
    })?;
    Ok((cols, computed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_scalars("1:5:1").unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(parse_scalars("1:50:1").unwrap().len(), 50);
        assert_eq!(parse_scalars("5:1:2").unwrap(), vec![5.0, 3.0, 1.0]);
        assert_eq!(parse_scalars("1, 2,5,10").unwrap(), vec![1.0, 2.0, 5.0, 10.0]);
        assert!(parse_scalars("1,3,2").is_err());
        assert!(parse_scalars("1:5:0").is_err());
        assert!(parse_scalars("1:5").is_err());
    }

    #[test]
    fn vector_and_pair_values() {
        let v = parse_values(SweepParam::CapacityVector, "1,1,1,1,1,1; 3,3,3,3,3,3").unwrap();
        assert_eq!(v, SweepValues::Vectors(vec![vec![1.0; 6], vec![3.0; 6]]));
        let p = parse_values(SweepParam::ClassProbabilities, "0.2/0.3;0.2/0.4").unwrap();
        assert_eq!(p, SweepValues::Pairs(vec![(0.2, 0.3), (0.2, 0.4)]));
        assert!(parse_values(SweepParam::ServiceSplit, "0.003-0.006").is_err());
        assert!(parse_values(SweepParam::InterarrivalTime, "0:2:1").is_err());
    }

    proptest! {
        #[test]
        fn ranges_are_monotone_and_bounded(a in 0.1f64..100.0, len in 0.0f64..100.0, step in 0.01f64..10.0) {
            let b = a + len;
            let v = parse_scalars(&format!("{a}:{b}:{step}")).unwrap();
            prop_assert_eq!(v[0], a);
            prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
            prop_assert!(*v.last().unwrap() <= b + 1e-9 * b.abs().max(1.0));
            prop_assert!(*v.last().unwrap() + step > b - 1e-9);
        }
    }
}
