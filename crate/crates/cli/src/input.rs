//! Building a [`NetworkSpec`] from a preset or config file plus flag
//! overrides.

use std::fs;
use std::path::PathBuf;

use chainq::model::config::{parse_bulk_shorthand, parse_network_unchecked, RateValue};
use chainq::model::{cims_shared_hss, preset_cims, validate, Discipline, NetworkSpec};
use clap::{Args, ValueEnum};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Six-node IMS registration chain, single class.
    Cims,
    /// IMS chain with one shared FCFS HSS serving classes 0.3/0.6.
    CimsShared,
    /// As `cims-shared` with a PS HSS and per-class service times 3 ms/6 ms.
    CimsSharedPs,
}

impl Preset {
    pub fn spec(self) -> NetworkSpec {
        match self {
            Preset::Cims => preset_cims(),
            Preset::CimsShared => cims_shared_hss([0.3, 0.6], Discipline::Fcfs, [0.009; 2]),
            Preset::CimsSharedPs => cims_shared_hss([0.3, 0.6], Discipline::Ps, [0.003, 0.006]),
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct NetworkArgs {
    /// Built-in network (bypasses any config file).
    #[arg(long, value_enum, conflicts_with = "config")]
    pub preset: Option<Preset>,
    /// JSON network description.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    /// Mean time between external arrival events, seconds.
    #[arg(long, conflicts_with = "rate")]
    pub interarrival: Option<f64>,
    /// External arrival event rate, per second.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Capacity factor per node, comma separated in node order.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub capacity: Option<Vec<f64>>,
    /// Point override, repeatable: `NODE.service_rate=250`, `NODE.service_time=0.004`,
    /// `NODE.servers=10`, `NODE.capacity=3`, `NODE.discipline=ps`,
    /// `routing.FROM.TO=0.5`, `routing.entry.NODE=1`, `arrival.rate=2`,
    /// `arrival.interarrival_time=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Batch arrivals at the entry node: `uniform:100`, `det:4`, `geom:0.2`,
    /// `empirical:0.5,0.5`.
    #[arg(long, value_name = "KIND:PARAM")]
    pub bulk: Option<String>,
}

fn number(key: &str, value: &str) -> Result<f64, CliError> {
    value.trim().parse::<f64>().map_err(|e| CliError::Input(format!("--set {key}: {e}")))
}

fn apply_set(spec: &mut NetworkSpec, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("--set '{assignment}' must look like KEY=VALUE")))?;
    let key = key.trim();
    let node_index = |spec: &NetworkSpec, id: &str| {
        spec.node_index(id).ok_or_else(|| CliError::Input(format!("--set {key}: unknown node '{id}'")))
    };
    if let Some(rest) = key.strip_prefix("routing.") {
        let (from, to) = rest
            .split_once('.')
            .ok_or_else(|| CliError::Input(format!("--set {key}: expected routing.FROM.TO")))?;
        let p = number(key, value)?;
        let j = node_index(spec, to)?;
        if from == "entry" {
            spec.routing.entry[j] = p;
        } else {
            let i = node_index(spec, from)?;
            spec.routing.probs[i][j] = p;
            if spec.routing.class_switching.is_some() {
                return Err(CliError::Input(format!(
                    "--set {key}: network uses class switching; edit class_links in a config file instead"
                )));
            }
        }
        return Ok(());
    }
    let (owner, field) =
        key.rsplit_once('.').ok_or_else(|| CliError::Input(format!("--set {key}: expected OWNER.FIELD")))?;
    if owner == "arrival" {
        match field {
            "rate" => spec.external_rate = number(key, value)?,
            "interarrival_time" => spec.external_rate = 1.0 / number(key, value)?,
            _ => return Err(CliError::Input(format!("--set {key}: unknown arrival field '{field}'"))),
        }
        return Ok(());
    }
    let i = node_index(spec, owner)?;
    let node = &mut spec.nodes[i];
    match field {
        "service_rate" => {
            let rate: RateValue = value.trim().parse().map_err(|e| CliError::Input(format!("--set {key}: {e}")))?;
            node.service_rate = rate.to_rate();
        }
        "service_time" => node.service_rate = 1.0 / number(key, value)?,
        "servers" => {
            node.servers = value.trim().parse().map_err(|e| CliError::Input(format!("--set {key}: {e}")))?;
        }
        "capacity" => node.capacity = number(key, value)?,
        "discipline" => {
            node.discipline = match value.trim().to_ascii_lowercase().as_str() {
                "fcfs" => Discipline::Fcfs,
                "ps" => Discipline::Ps,
                other => return Err(CliError::Input(format!("--set {key}: unknown discipline '{other}'"))),
            }
        }
        _ => return Err(CliError::Input(format!("--set {key}: unknown node field '{field}'"))),
    }
    Ok(())
}

/// The base network before overrides: the preset, or the parsed config.
pub fn base_network(args: &NetworkArgs) -> Result<NetworkSpec, CliError> {
    match (&args.preset, &args.config) {
        (Some(p), _) => Ok(p.spec()),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            parse_network_unchecked(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        }
        (None, None) => Err(CliError::Input("one of --preset or --config is required".into())),
    }
}

/// Base network with every flag override applied, normalized and validated.
pub fn load_network(args: &NetworkArgs) -> Result<NetworkSpec, CliError> {
    let mut spec = base_network(args)?;
    for assignment in &args.set {
        apply_set(&mut spec, assignment)?;
    }
    if let Some(t) = args.interarrival {
        if !(t > 0.0) {
            return Err(CliError::Input(format!("--interarrival must be positive, got {t}")));
        }
        spec = spec.with_interarrival(t);
    }
    if let Some(rate) = args.rate {
        spec = spec.with_external_rate(rate);
    }
    if let Some(c) = &args.capacity {
        if c.len() != spec.nodes.len() {
            return Err(CliError::Input(format!(
                "--capacity has {} values but the network has {} nodes",
                c.len(),
                spec.nodes.len()
            )));
        }
        spec = spec.with_capacities(c);
    }
    if let Some(b) = &args.bulk {
        spec = spec.with_bulk(parse_bulk_shorthand(b).map_err(|e| CliError::Input(format!("--bulk: {e}")))?);
    }
    spec.normalize();
    let report = validate(&spec);
    if !report.is_valid() {
        return Err(CliError::Input(format!("invalid network:\n{report}")));
    }
    Ok(spec)
}
