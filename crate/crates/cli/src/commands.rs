use std::fs::File;
use std::io::BufWriter;

use chainq::analytic::network_metrics;
use chainq::optimizer::{allocation_to_instances, solve_allocation, verify_allocation, AllocationProblem, VerifyOptions};
use chainq::simulator::{self, Estimate, Horizon, ServiceDistribution, SimConfig, SimResult};
use chainq::traffic;
use chainq::NetworkSpec;

use crate::input::{load_network, Preset};
use crate::output::{significant, Cell, Report, Table};
use crate::sweep::{parse_scalars, parse_values, run_sweep, SweepParam, SweepSpec};
use crate::{AnalyzeArgs, CliError, OptimizeArgs, Outcome, SimArgs, Status, SweepArgs, DEFAULT_JOBS};

fn input(e: impl ToString) -> CliError {
    CliError::Input(e.to_string())
}

pub fn analyze(args: &AnalyzeArgs) -> Result<Outcome, CliError> {
    let spec = load_network(&args.network)?;
    let m = network_metrics(&spec).map_err(input)?;
    let u = args.out.units;
    let s = u.scale();
    let lambda = spec.job_rate();

    let mut table = Table::new([
        "node".to_string(),
        "lambda".to_string(),
        "visits".to_string(),
        "rho".to_string(),
        "EQ".to_string(),
        u.label("EW"),
        u.label("ET"),
        "stable".to_string(),
    ]);
    for n in &m.per_node {
        table.push(vec![
            Cell::text(&n.id),
            Cell::Num(n.arrival_rate),
            Cell::Num(n.arrival_rate / lambda),
            Cell::Num(n.utilization),
            Cell::Num(n.mean_queue_length),
            Cell::Num(n.mean_waiting * s),
            Cell::Num(n.mean_response * s),
            Cell::Bool(n.stable),
        ]);
        if spec.is_multiclass() {
            for c in &n.per_class {
                if c.arrival_rate == 0.0 {
                    continue;
                }
                table.push(vec![
                    Cell::text(format!("{}[{}]", n.id, c.class)),
                    Cell::Num(c.arrival_rate),
                    Cell::Num(c.arrival_rate / lambda),
                    Cell::Num(c.utilization),
                    Cell::Num(c.mean_queue_length),
                    Cell::Num(c.mean_waiting * s),
                    Cell::Num(c.mean_response * s),
                    Cell::Bool(n.stable),
                ]);
            }
        }
    }
    let total_q: f64 = m.per_node.iter().map(|n| n.mean_queue_length).sum();
    table.push(vec![
        Cell::text("chain"),
        Cell::Num(lambda),
        Cell::Empty,
        Cell::Empty,
        Cell::Num(total_q),
        Cell::Empty,
        Cell::Num(m.chain_response * s),
        Cell::Bool(m.all_stable()),
    ]);
    if spec.is_multiclass() {
        for (id, t) in m.class_ids.iter().zip(&m.class_response) {
            let mut row = vec![Cell::text(format!("chain[{id}]"))];
            row.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]);
            row.push(Cell::Num(t * s));
            row.push(Cell::Bool(m.all_stable()));
            table.push(row);
        }
    }
    table.push(vec![
        Cell::text("bound"),
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        Cell::Num(m.response_lower_bound * s),
        Cell::Empty,
    ]);

    let mut report = Report::new(format!("Analytic metrics, arrival rate {} /s", spec.external_rate), table);
    report.meta("arrival_rate", spec.external_rate);
    report.meta("units", u.suffix());
    report.note(format!("bottleneck: {}", m.bottleneck));
    if spec.bulk.is_some() {
        let approx: Vec<&str> = m.per_node.iter().filter(|n| !n.exact).map(|n| n.id.as_str()).collect();
        if !approx.is_empty() {
            report.note(format!("bulk arrivals: figures for {} are Poisson approximations", approx.join(", ")));
        }
    }
    let unstable: Vec<&str> = m.per_node.iter().filter(|n| !n.stable).map(|n| n.id.as_str()).collect();
    let status = if unstable.is_empty() {
        Status::Ok
    } else {
        report.note(format!("unstable (utilization >= 1): {}", unstable.join(", ")));
        Status::Unstable
    };
    Ok(Outcome { report, status, out: args.out.clone() })
}

pub fn sweep(args: &SweepArgs) -> Result<Outcome, CliError> {
    let multiclass = matches!(args.param, SweepParam::ClassProbabilities | SweepParam::ServiceSplit);
    if multiclass && args.network.preset != Some(Preset::Cims) {
        return Err(CliError::Input(format!(
            "the {} sweep compares IMS variants; use it with --preset cims",
            args.param.name()
        )));
    }
    let base = load_network(&args.network)?;
    let spec = SweepSpec {
        param: args.param,
        values: parse_values(args.param, &args.values).map_err(|e| CliError::Input(format!("--values: {e}")))?,
        metrics: args.metrics.clone(),
        interarrivals: parse_scalars(&args.interarrivals)
            .map_err(|e| CliError::Input(format!("--interarrivals: {e}")))?,
    };
    if spec.interarrivals.iter().any(|t| *t <= 0.0) {
        return Err(CliError::Input("--interarrivals must be positive".into()));
    }
    let result = run_sweep(&base, &spec, args.out.units)?;
    let mut report = Report::new(format!("Sweep over {}", args.param.name()), result.table);
    report.meta("units", args.out.units.suffix());
    let status = if result.all_stable {
        Status::Ok
    } else {
        report.note("some sweep points are unstable; their values are reported as inf");
        Status::Unstable
    };
    Ok(Outcome { report, status, out: args.out.clone() })
}

pub fn optimize(args: &OptimizeArgs) -> Result<Outcome, CliError> {
    let spec = load_network(&args.network)?;
    let t = traffic::solve(&spec).map_err(input)?;
    let capacities: Vec<f64> = spec.nodes.iter().map(|n| n.capacity).collect();
    let problem = AllocationProblem::new(t.arrival_rates.clone(), capacities.clone(), args.budget);
    let solution = solve_allocation(&problem).map_err(|e| {
        CliError::Input(format!("{e}; the minimum feasible budget is C > {}", problem.total_arrival_rate()))
    })?;
    let base_rates: Vec<f64> = spec.nodes.iter().map(|n| n.service_rate).collect();
    let plan = allocation_to_instances(&solution, &base_rates);

    let u = args.out.units;
    let s = u.scale();
    let lambda = spec.job_rate();
    let mut table = Table::new([
        "node".to_string(),
        "lambda".to_string(),
        "capacity".to_string(),
        "mu".to_string(),
        "effective_rate".to_string(),
        "base_rate".to_string(),
        "instances".to_string(),
        "slack".to_string(),
        u.label("T"),
        u.label("vT"),
    ]);
    let mut chain = 0.0;
    for (i, node) in spec.nodes.iter().enumerate() {
        let delay = 1.0 / (solution.effective_rates[i] - t.arrival_rates[i]);
        let weighted = t.arrival_rates[i] / lambda * delay;
        chain += weighted;
        table.push(vec![
            Cell::text(&node.id),
            Cell::Num(t.arrival_rates[i]),
            Cell::Num(capacities[i]),
            Cell::Num(solution.service_rates[i]),
            Cell::Num(solution.effective_rates[i]),
            Cell::Num(base_rates[i]),
            Cell::Int(u64::from(plan.instances[i])),
            Cell::Num(plan.slack[i]),
            Cell::Num(delay * s),
            Cell::Num(weighted * s),
        ]);
    }
    table.push(vec![
        Cell::text("total"),
        Cell::Num(problem.total_arrival_rate()),
        Cell::Empty,
        Cell::Empty,
        Cell::Num(solution.effective_rates.iter().sum()),
        Cell::Empty,
        Cell::Int(plan.instances.iter().map(|k| u64::from(*k)).sum()),
        Cell::Empty,
        Cell::Num(solution.objective * s),
        Cell::Num(chain * s),
    ]);

    let mut report = Report::new(format!("Capacity allocation, budget C = {}", args.budget), table);
    report.meta("budget", args.budget);
    report.meta("surplus_per_node", solution.surplus);
    report.meta("objective_s", solution.objective);
    report.meta("chain_response_s", chain);
    report.note(format!(
        "each node gets its arrival rate plus {} /s; objective sum 1/(c mu - lambda) = {} {}",
        significant(solution.surplus, 6),
        significant(solution.objective * s, 6),
        u.suffix()
    ));
    let mut status = Status::Ok;
    if !args.no_verify {
        let options = VerifyOptions { samples: args.samples, ..VerifyOptions::default() };
        match verify_allocation(&problem, &solution, &options) {
            Ok(v) => {
                report.note(format!(
                    "verified: none of {} feasible random reallocations (seed {:#x}) lowers the objective",
                    v.evaluated, v.seed
                ));
                report.meta("verified_samples", v.evaluated as u64);
            }
            Err(e) => {
                report.note(format!("verification FAILED: {e}"));
                status = Status::CheckFailed;
            }
        }
    }
    Ok(Outcome { report, status, out: args.out.clone() })
}

fn parse_law(text: &str) -> Result<(String, ServiceDistribution), CliError> {
    let (node, law) = text
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("--service-dist '{text}' must look like NODE=LAW")))?;
    let law = match law.trim() {
        "exp" | "exponential" => ServiceDistribution::Exponential,
        "det" | "deterministic" => ServiceDistribution::Deterministic,
        other => match other.strip_prefix("empirical:") {
            Some(list) => ServiceDistribution::Empirical(
                list.split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| CliError::Input(format!("--service-dist {node}: {e}")))?,
            ),
            None => return Err(CliError::Input(format!("--service-dist {node}: unknown law '{other}'"))),
        },
    };
    Ok((node.trim().to_string(), law))
}

fn sim_config(spec: NetworkSpec, args: &SimArgs) -> Result<SimConfig, CliError> {
    let horizon = match args.time {
        Some(t) => Horizon::Time(t),
        None => Horizon::Arrivals(args.jobs.unwrap_or(DEFAULT_JOBS)),
    };
    let mut cfg = SimConfig::new(spec, horizon)
        .with_seed(args.seed)
        .with_replications(args.reps)
        .with_warmup(args.warmup);
    for text in &args.service_dist {
        let (node, law) = parse_law(text)?;
        cfg = cfg.with_service(node, law);
    }
    Ok(cfg)
}

fn run_sim(cfg: &SimConfig, args: &SimArgs) -> Result<SimResult, CliError> {
    match &args.trace {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            let r = simulator::simulate_with_trace(cfg, &mut w).map_err(input)?;
            std::io::Write::flush(&mut w).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            Ok(r)
        }
        None => simulator::simulate(cfg).map_err(input),
    }
}

fn sim_notes(report: &mut Report, cfg: &SimConfig, r: &SimResult) {
    let horizon = match cfg.horizon {
        Horizon::Time(t) => format!("{t} s"),
        Horizon::Arrivals(n) => format!("{n} arrival events"),
    };
    report.note(format!(
        "seed {}, {} replications of {horizon}, warmup {}, {} arrivals, {} departures",
        r.seed, r.replications, cfg.warmup, r.arrivals, r.departures
    ));
    report.meta("seed", r.seed);
    report.meta("replications", r.replications);
    report.meta("warmup", cfg.warmup);
    report.meta("arrivals", r.arrivals);
    report.meta("departures", r.departures);
}

fn estimate_cells(e: Estimate, scale: f64) -> [Cell; 2] {
    [Cell::Num(e.mean * scale), Cell::Num(e.half_width * scale)]
}

pub fn simulate(args: &SimArgs) -> Result<Outcome, CliError> {
    let spec = load_network(&args.network)?;
    let cfg = sim_config(spec, args)?;
    let r = run_sim(&cfg, args)?;
    let u = args.out.units;
    let s = u.scale();
    let mut table = Table::new([
        "node".to_string(),
        "rho".to_string(),
        "rho_ci".to_string(),
        "EQ".to_string(),
        "EQ_ci".to_string(),
        u.label("EW"),
        u.label("EW_ci"),
        u.label("ET"),
        u.label("ET_ci"),
        "throughput".to_string(),
    ]);
    for n in &r.nodes {
        let mut row = vec![Cell::text(&n.id)];
        row.extend(estimate_cells(n.utilization, 1.0));
        row.extend(estimate_cells(n.queue_length, 1.0));
        row.extend(estimate_cells(n.waiting, s));
        row.extend(estimate_cells(n.response, s));
        row.push(Cell::Num(n.throughput.mean));
        table.push(row);
        if cfg.spec.is_multiclass() {
            for c in n.per_class.iter().filter(|c| c.departures > 0) {
                let mut row = vec![Cell::text(format!("{}[{}]", n.id, c.class))];
                row.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]);
                row.extend(estimate_cells(c.waiting, s));
                row.extend(estimate_cells(c.response, s));
                row.push(Cell::Empty);
                table.push(row);
            }
        }
    }
    let mut chain = vec![Cell::text("chain")];
    chain.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty]);
    chain.extend(estimate_cells(r.chain_response, s));
    chain.push(Cell::Empty);
    table.push(chain);

    let mut report = Report::new("Simulated metrics (mean and 95% CI half-width)", table);
    report.meta("units", u.suffix());
    sim_notes(&mut report, &cfg, &r);
    Ok(Outcome { report, status: Status::Ok, out: args.out.clone() })
}

pub fn compare(args: &SimArgs) -> Result<Outcome, CliError> {
    let spec = load_network(&args.network)?;
    let analytic = network_metrics(&spec).map_err(input)?;
    let cfg = sim_config(spec, args)?;
    let r = run_sim(&cfg, args)?;
    let cmp = simulator::compare_result(&analytic, &r).map_err(input)?;
    let u = args.out.units;
    let mut table = Table::new(["node", "metric", "analytic", "simulated", "ci", "rel_error", "exact", "result"]);
    for row in &cmp.rows {
        let (name, scale) = match row.metric {
            simulator::Metric::Waiting => (u.label("EW"), u.scale()),
            simulator::Metric::Response => (u.label("ET"), u.scale()),
            simulator::Metric::ChainResponse => (u.label("ET"), u.scale()),
            simulator::Metric::QueueLength => ("EQ".to_string(), 1.0),
            simulator::Metric::Utilization => ("rho".to_string(), 1.0),
        };
        let result = match row.pass {
            None => "skip",
            Some(true) => "pass",
            Some(false) => "FAIL",
        };
        table.push(vec![
            Cell::text(&row.node),
            Cell::text(name),
            Cell::Num(row.analytic * scale),
            Cell::Num(row.simulated.mean * scale),
            Cell::Num(row.simulated.half_width * scale),
            Cell::Num(row.relative_error()),
            Cell::Bool(row.exact),
            Cell::text(result),
        ]);
    }
    let mut report = Report::new("Analytic vs simulated (pass: within 95% CI + 1%)", table);
    report.meta("units", u.suffix());
    sim_notes(&mut report, &cfg, &r);
    let failures = cmp.failures().count();
    let status = if cmp.passed() {
        report.note("all exact metrics agree");
        report.meta("passed", true);
        Status::Ok
    } else {
        report.note(format!("{failures} exact metric(s) disagree"));
        report.meta("passed", false);
        Status::CheckFailed
    };
    if !analytic.all_stable() {
        report.note("the network is unstable; analytic values are infinite");
    }
    for node in cfg.service_overrides.keys() {
        report.note(format!("{node}: simulated service law differs from the analytic exponential model"));
    }
    Ok(Outcome { report, status, out: args.out.clone() })
}
