//! JSON network description files.
//!
//! ```json
//! {
//!   "nodes": [
//!     { "id": "P-CSCF", "service_time": 0.004 },
//!     { "id": "HSS", "service_rate": "time:0.009", "servers": 2,
//!       "discipline": "PS", "capacity": 1.5,
//!       "class_service_rates": { "gold": "time:0.003", "silver": 200 } }
//!   ],
//!   "routing": {
//!     "entry": { "P-CSCF": 1.0 },
//!     "links": { "P-CSCF": { "HSS": 1.0 } },
//!     "class_links": [
//!       { "from": "P-CSCF", "class": "gold", "to": "HSS", "to_class": "gold", "p": 1.0 }
//!     ]
//!   },
//!   "classes": [ { "id": "gold", "entry_probability": 0.4 },
//!                { "id": "silver", "entry_probability": 0.6 } ],
//!   "arrival": { "interarrival_time": 5.0,
//!                "bulk": { "kind": "uniform", "params": { "max": 100 } } }
//! }
//! ```
//!
//! Rates may be written as plain numbers (requests/second) or as strings
//! with a `rate:` or `time:` prefix; `time:` values are mean service times in
//! seconds and are inverted on load. `class_links`, when present, defines the
//! complete class-switching routing; otherwise routing is class-preserving.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{
    validate, BulkDistribution, BulkSpec, ClassSpec, Discipline, NetworkSpec, NodeSpec,
    RoutingMatrix, ValidationReport,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {}{message}", if path.is_empty() { String::new() } else { format!("{path}: ") })]
    Parse { line: usize, column: usize, path: String, message: String },
    #[error("{}{path}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Schema { path: String, line: Option<usize>, message: String },
    #[error("invalid network:\n{0}")]
    Invalid(ValidationReport),
}

/// A rate given either directly or as a mean time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue {
    Rate(f64),
    Time(f64),
}

impl RateValue {
    pub fn to_rate(self) -> f64 {
        match self {
            RateValue::Rate(r) => r,
            RateValue::Time(t) => 1.0 / t,
        }
    }
}

impl std::str::FromStr for RateValue {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (ctor, body): (fn(f64) -> RateValue, &str) = if let Some(rest) = s.strip_prefix("time:") {
            (RateValue::Time, rest)
        } else if let Some(rest) = s.strip_prefix("rate:") {
            (RateValue::Rate, rest)
        } else {
            (RateValue::Rate, s)
        };
        body.trim()
            .parse::<f64>()
            .map(ctor)
            .map_err(|_| format!("expected a number, 'rate:<x>' or 'time:<x>', got '{s}'"))
    }
}

impl<'de> Deserialize<'de> for RateValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match Value::deserialize(d)? {
            Value::Number(n) => n
                .as_f64()
                .map(RateValue::Rate)
                .ok_or_else(|| de::Error::custom("rate is not a finite number")),
            Value::String(s) => s.parse().map_err(de::Error::custom),
            other => Err(de::Error::custom(format!("expected number or string, got {other}"))),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    service_rate: Option<RateValue>,
    service_time: Option<f64>,
    #[serde(default = "one")]
    servers: u32,
    #[serde(default = "fcfs")]
    discipline: Discipline,
    #[serde(default = "unit")]
    capacity: f64,
    class_service_rates: Option<BTreeMap<String, RateValue>>,
}

fn one() -> u32 {
    1
}
fn unit() -> f64 {
    1.0
}
fn fcfs() -> Discipline {
    Discipline::Fcfs
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClassLink {
    from: String,
    class: String,
    to: String,
    to_class: Option<String>,
    p: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRouting {
    entry: BTreeMap<String, f64>,
    #[serde(default)]
    links: BTreeMap<String, BTreeMap<String, f64>>,
    class_links: Option<Vec<RawClassLink>>,
}

#[derive(Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawClass {
    id: String,
    entry_probability: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBulk {
    kind: String,
    #[serde(default)]
    params: Map<String, Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArrival {
    rate: Option<f64>,
    interarrival_time: Option<f64>,
    bulk: Option<RawBulk>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    nodes: Vec<RawNode>,
    routing: RawRouting,
    classes: Option<Vec<RawClass>>,
    arrival: RawArrival,
}

/// 1-based line of the first occurrence of `"needle"` in `text`.
fn locate(text: &str, needle: &str) -> Option<usize> {
    let quoted = format!("\"{needle}\"");
    text.find(&quoted).map(|pos| text[..pos].lines().count().max(1))
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, path: impl Into<String>, anchor: &str, message: impl fmt::Display) -> ConfigError {
        ConfigError::Schema { path: path.into(), line: locate(self.text, anchor), message: message.to_string() }
    }
}

/// Parse a bulk description such as `uniform:100`, `det:4`, `geom:0.2` or
/// `empirical:0.5,0.25,0.25`.
pub fn parse_bulk_shorthand(s: &str) -> Result<BulkSpec, String> {
    let (kind, arg) = s.split_once(':').ok_or_else(|| format!("bulk '{s}' must look like kind:param"))?;
    let bad = |e: &dyn fmt::Display| format!("bulk '{s}': {e}");
    let spec = match kind {
        "det" | "deterministic" => BulkSpec::deterministic(arg.parse().map_err(|e| bad(&e))?),
        "uniform" => BulkSpec::uniform(arg.parse().map_err(|e| bad(&e))?),
        "geom" | "geometric" => BulkSpec::geometric(arg.parse().map_err(|e| bad(&e))?),
        "empirical" => BulkSpec::new(BulkDistribution::Empirical(
            arg.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|e| bad(&e))?,
        )),
        other => return Err(format!("unknown bulk kind '{other}'")),
    };
    match spec.check() {
        Some(msg) => Err(msg),
        None => Ok(spec),
    }
}

fn bulk_from_raw(raw: &RawBulk, ctx: &Ctx) -> Result<BulkSpec, ConfigError> {
    let path = "arrival.bulk.params";
    let param = |key: &str| -> Result<&Value, ConfigError> {
        raw.params
            .get(key)
            .ok_or_else(|| ctx.err(format!("{path}.{key}"), "bulk", format!("missing parameter '{key}' for kind '{}'", raw.kind)))
    };
    let as_u32 = |key: &str| -> Result<u32, ConfigError> {
        param(key)?
            .as_u64()
            .and_then(|v| u32::try_from(v).ok())
            .ok_or_else(|| ctx.err(format!("{path}.{key}"), key, "expected a positive integer"))
    };
    let distribution = match raw.kind.as_str() {
        "deterministic" => BulkDistribution::Deterministic(as_u32("size")?),
        "uniform" => BulkDistribution::Uniform { max: as_u32("max")? },
        "geometric" => BulkDistribution::Geometric {
            p: param("p")?.as_f64().ok_or_else(|| ctx.err(format!("{path}.p"), "p", "expected a number"))?,
        },
        "empirical" => {
            let pmf = param("pmf")?
                .as_array()
                .and_then(|a| a.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
                .ok_or_else(|| ctx.err(format!("{path}.pmf"), "pmf", "expected an array of numbers"))?;
            BulkDistribution::Empirical(pmf)
        }
        other => {
            return Err(ctx.err(
                "arrival.bulk.kind",
                "kind",
                format!("unknown bulk kind '{other}' (deterministic, uniform, geometric, empirical)"),
            ))
        }
    };
    Ok(BulkSpec::new(distribution))
}

fn bulk_to_value(b: &BulkSpec) -> Value {
    match &b.distribution {
        BulkDistribution::Deterministic(k) => json!({"kind": "deterministic", "params": {"size": k}}),
        BulkDistribution::Uniform { max } => json!({"kind": "uniform", "params": {"max": max}}),
        BulkDistribution::Geometric { p } => json!({"kind": "geometric", "params": {"p": p}}),
        BulkDistribution::Empirical(pmf) => json!({"kind": "empirical", "params": {"pmf": pmf}}),
    }
}

/// Parse a network document without running validation.
pub fn parse_network_unchecked(text: &str) -> Result<NetworkSpec, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawNetwork = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.to_string();
        // serde_json appends the position, which is already reported
        let message = message.rsplit_once(" at line ").map_or(message.clone(), |(m, _)| m.to_string());
        ConfigError::Parse {
            line: inner.line(),
            column: inner.column(),
            path: if path == "." { String::new() } else { path },
            message,
        }
    })?;
    de.end().map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        path: String::new(),
        message: "trailing characters after the network document".into(),
    })?;
    let ctx = Ctx { text };

    let classes: Vec<ClassSpec> = match raw.classes {
        Some(cs) => cs.into_iter().map(|c| ClassSpec::new(c.id, c.entry_probability)).collect(),
        None => vec![ClassSpec::new("default", 1.0)],
    };

    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for (i, rn) in raw.nodes.into_iter().enumerate() {
        let service_rate = match (rn.service_rate, rn.service_time) {
            (Some(r), None) => r.to_rate(),
            (None, Some(t)) => 1.0 / t,
            (Some(_), Some(_)) => {
                return Err(ctx.err(
                    format!("nodes[{i}].service_rate"),
                    "service_time",
                    "give either service_rate or service_time, not both",
                ))
            }
            (None, None) => {
                return Err(ctx.err(
                    format!("nodes[{i}].service_rate"),
                    &rn.id,
                    format!("node '{}' needs service_rate or service_time", rn.id),
                ))
            }
        };
        nodes.push(NodeSpec {
            id: rn.id,
            service_rate,
            servers: rn.servers,
            discipline: rn.discipline,
            capacity: rn.capacity,
            class_service_rates: rn
                .class_service_rates
                .map(|m| m.into_iter().map(|(k, v)| (k, v.to_rate())).collect()),
        });
    }

    let n = nodes.len();
    let index = |id: &str, path: String| -> Result<usize, ConfigError> {
        nodes
            .iter()
            .position(|node| node.id == id)
            .ok_or_else(|| ctx.err(path, id, format!("unknown node '{id}'")))
    };

    let mut entry = vec![0.0; n];
    for (id, p) in &raw.routing.entry {
        entry[index(id, format!("routing.entry.{id}"))?] = *p;
    }
    let mut probs = vec![vec![0.0; n]; n];
    for (from, row) in &raw.routing.links {
        let j = index(from, format!("routing.links.{from}"))?;
        for (to, p) in row {
            let i = index(to, format!("routing.links.{from}.{to}"))?;
            probs[j][i] = *p;
        }
    }
    let class_switching = match raw.routing.class_links {
        None => None,
        Some(links) => {
            let l = classes.len();
            let class_idx = |id: &str, path: String| -> Result<usize, ConfigError> {
                classes
                    .iter()
                    .position(|c| c.id == id)
                    .ok_or_else(|| ctx.err(path, id, format!("unknown class '{id}'")))
            };
            let mut full = vec![vec![0.0; n * l]; n * l];
            for (k, link) in links.iter().enumerate() {
                let path = format!("routing.class_links[{k}]");
                let j = index(&link.from, format!("{path}.from"))?;
                let i = index(&link.to, format!("{path}.to"))?;
                let c = class_idx(&link.class, format!("{path}.class"))?;
                let r = class_idx(link.to_class.as_deref().unwrap_or(&link.class), format!("{path}.to_class"))?;
                full[j * l + c][i * l + r] = link.p;
            }
            Some(full)
        }
    };

    let external_rate = match (raw.arrival.rate, raw.arrival.interarrival_time) {
        (Some(r), None) => r,
        (None, Some(t)) => 1.0 / t,
        _ => {
            return Err(ctx.err(
                "arrival",
                "arrival",
                "give exactly one of arrival.rate or arrival.interarrival_time",
            ))
        }
    };
    let bulk = raw.arrival.bulk.as_ref().map(|b| bulk_from_raw(b, &ctx)).transpose()?;

    Ok(NetworkSpec {
        nodes,
        routing: RoutingMatrix { probs, entry, class_switching },
        classes,
        external_rate,
        bulk,
    })
}

/// Parse, normalize and validate a network document.
pub fn parse_network(text: &str) -> Result<NetworkSpec, ConfigError> {
    let mut spec = parse_network_unchecked(text)?;
    spec.normalize();
    let report = validate(&spec);
    if report.is_valid() {
        Ok(spec)
    } else {
        Err(ConfigError::Invalid(report))
    }
}

/// Render a spec as a network document that [`parse_network`] reads back
/// field for field.
pub fn render_network(spec: &NetworkSpec) -> String {
    let nodes: Vec<Value> = spec
        .nodes
        .iter()
        .map(|node| {
            let mut obj = Map::new();
            obj.insert("id".into(), json!(node.id));
            obj.insert("service_rate".into(), json!(node.service_rate));
            obj.insert("servers".into(), json!(node.servers));
            obj.insert("discipline".into(), json!(node.discipline));
            obj.insert("capacity".into(), json!(node.capacity));
            if let Some(rates) = &node.class_service_rates {
                obj.insert("class_service_rates".into(), json!(rates));
            }
            Value::Object(obj)
        })
        .collect();

    let ids: Vec<&str> = spec.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut entry = Map::new();
    for (i, p) in spec.routing.entry.iter().enumerate() {
        if *p != 0.0 {
            entry.insert(ids[i].into(), json!(p));
        }
    }
    let mut links = Map::new();
    for (j, row) in spec.routing.probs.iter().enumerate() {
        let mut out = Map::new();
        for (i, p) in row.iter().enumerate() {
            if *p != 0.0 {
                out.insert(ids[i].into(), json!(p));
            }
        }
        if !out.is_empty() {
            links.insert(ids[j].into(), Value::Object(out));
        }
    }
    let mut routing = Map::new();
    routing.insert("entry".into(), Value::Object(entry));
    routing.insert("links".into(), Value::Object(links));
    if let Some(full) = &spec.routing.class_switching {
        let l = spec.classes.len();
        let mut class_links = Vec::new();
        for (jl, row) in full.iter().enumerate() {
            for (ir, p) in row.iter().enumerate() {
                if *p != 0.0 {
                    class_links.push(json!({
                        "from": ids[jl / l],
                        "class": spec.classes[jl % l].id,
                        "to": ids[ir / l],
                        "to_class": spec.classes[ir % l].id,
                        "p": p,
                    }));
                }
            }
        }
        routing.insert("class_links".into(), Value::Array(class_links));
    }

    let classes: Vec<RawClass> = spec
        .classes
        .iter()
        .map(|c| RawClass { id: c.id.clone(), entry_probability: c.entry_probability })
        .collect();
    let mut arrival = Map::new();
    arrival.insert("rate".into(), json!(spec.external_rate));
    if let Some(b) = &spec.bulk {
        arrival.insert("bulk".into(), bulk_to_value(b));
    }

    let doc = json!({
        "nodes": nodes,
        "routing": routing,
        "classes": classes,
        "arrival": arrival,
    });
    let mut out = serde_json::to_string_pretty(&doc).expect("network documents always serialize");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{cims_shared_hss, preset_cims};

    const CIMS_TIMES: &str = r#"{
  "nodes": [
    { "id": "P-CSCF",   "service_time": 0.004 },
    { "id": "S/I-CSCF", "service_time": 0.006 },
    { "id": "SLF",      "service_rate": "time:0.003" },
    { "id": "HSS1",     "service_time": 0.009 },
    { "id": "HSS2",     "service_time": 0.009 },
    { "id": "HSS3",     "service_time": 0.009 }
  ],
  "routing": {
    "entry": { "P-CSCF": 1.0 },
    "links": {
      "P-CSCF":   { "S/I-CSCF": 1.0 },
      "S/I-CSCF": { "SLF": 1.0 },
      "SLF":      { "HSS1": 0.2, "HSS2": 0.3, "HSS3": 0.5 }
    }
  },
  "arrival": { "interarrival_time": 1.0 }
}"#;

    #[test]
    fn times_are_inverted() {
        let spec = parse_network(CIMS_TIMES).unwrap();
        let preset = preset_cims();
        for (a, b) in spec.nodes.iter().zip(&preset.nodes) {
            assert_eq!(a.id, b.id);
            assert!((a.service_rate - b.service_rate).abs() < 1e-9 * b.service_rate);
        }
        assert_eq!(spec.routing, preset.routing);
    }

    #[test]
    fn round_trip_preset_and_multiclass() {
        for spec in [
            preset_cims().with_bulk(BulkSpec::uniform(100)),
            cims_shared_hss([0.3, 0.6], Discipline::Ps, [0.003, 0.006]),
        ] {
            let back = parse_network(&render_network(&spec)).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn unknown_key_is_named_with_line() {
        let text = CIMS_TIMES.replace(
            "{ \"id\": \"SLF\",      \"service_rate\": \"time:0.003\" }",
            "{ \"id\": \"SLF\", \"service_rat\": 300 }",
        );
        let err = parse_network(&text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("service_rat"), "{msg}");
        assert!(msg.starts_with("line 5"), "{msg}");
    }

    #[test]
    fn unknown_node_in_routing() {
        let text = CIMS_TIMES.replace("\"HSS3\": 0.5", "\"HSS9\": 0.5");
        let msg = parse_network(&text).unwrap_err().to_string();
        assert!(msg.contains("routing.links.SLF.HSS9"), "{msg}");
        assert!(msg.contains("line 15"), "{msg}");
    }

    #[test]
    fn invalid_routing_is_reported() {
        let text = CIMS_TIMES.replace("\"HSS3\": 0.5", "\"HSS3\": 0.6");
        match parse_network(&text) {
            Err(ConfigError::Invalid(report)) => assert!(report.to_string().contains("row sum > 1")),
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn rate_value_prefixes() {
        assert_eq!("time:0.5".parse::<RateValue>().unwrap().to_rate(), 2.0);
        assert_eq!("rate:3".parse::<RateValue>().unwrap().to_rate(), 3.0);
        assert_eq!("4".parse::<RateValue>().unwrap().to_rate(), 4.0);
        assert!("fast".parse::<RateValue>().is_err());
    }

    #[test]
    fn bulk_shorthand() {
        assert_eq!(parse_bulk_shorthand("uniform:100").unwrap(), BulkSpec::uniform(100));
        assert_eq!(parse_bulk_shorthand("det:3").unwrap(), BulkSpec::deterministic(3));
        assert!(parse_bulk_shorthand("uniform:0").is_err());
        assert!(parse_bulk_shorthand("poisson:3").is_err());
    }
}
