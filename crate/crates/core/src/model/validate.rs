use std::fmt;

use super::{Discipline, NetworkSpec, ROW_SUM_TOLERANCE};
use crate::traffic::solve_balance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    NonPositiveServiceRate,
    NoServers,
    NonPositiveCapacity,
    NonPositiveArrivalRate,
    DuplicateId,
    DimensionMismatch,
    ProbabilityOutOfRange,
    RowSumExceedsOne,
    EntrySumNotOne,
    ClassProbabilitySum,
    NoClasses,
    UnknownClass,
    ClassRatesAtFcfs,
    ClassSwitchingSingleClass,
    InvalidBulk,
    NotOpen,
}

/// One broken invariant, located by node, row or key.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

/// Every violation found in a spec; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, location: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { kind, location: location.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

fn check_row(report: &mut ValidationReport, location: &str, row: &[f64]) -> bool {
    let mut ok = true;
    for (i, p) in row.iter().enumerate() {
        if !(0.0..=1.0).contains(p) {
            report.push(
                ViolationKind::ProbabilityOutOfRange,
                format!("{location}[{i}]"),
                format!("probability {p} outside [0, 1]"),
            );
            ok = false;
        }
    }
    let s: f64 = row.iter().sum();
    if s > 1.0 + ROW_SUM_TOLERANCE {
        report.push(ViolationKind::RowSumExceedsOne, location, format!("row sum > 1 ({s})"));
        ok = false;
    }
    ok
}

/// Check every structural invariant of `spec`. Violations are returned as
/// data; nothing here fails.
pub fn validate(spec: &NetworkSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = spec.nodes.len();
    let l = spec.classes.len();

    if !(spec.external_rate > 0.0 && spec.external_rate.is_finite()) {
        report.push(
            ViolationKind::NonPositiveArrivalRate,
            "arrival.rate",
            format!("external rate {} must be positive", spec.external_rate),
        );
    }

    for (i, node) in spec.nodes.iter().enumerate() {
        let loc = format!("node '{}'", node.id);
        if spec.nodes[..i].iter().any(|o| o.id == node.id) {
            report.push(ViolationKind::DuplicateId, &loc, "duplicate node id");
        }
        if !(node.service_rate > 0.0 && node.service_rate.is_finite()) {
            report.push(
                ViolationKind::NonPositiveServiceRate,
                &loc,
                format!("service rate {} must be positive", node.service_rate),
            );
        }
        if node.servers == 0 {
            report.push(ViolationKind::NoServers, &loc, "server count must be >= 1");
        }
        if !(node.capacity > 0.0 && node.capacity.is_finite()) {
            report.push(
                ViolationKind::NonPositiveCapacity,
                &loc,
                format!("capacity factor {} must be positive", node.capacity),
            );
        }
        if let Some(rates) = &node.class_service_rates {
            for (class, rate) in rates {
                if spec.class_index(class).is_none() {
                    report.push(ViolationKind::UnknownClass, &loc, format!("unknown class '{class}'"));
                }
                if !(*rate > 0.0 && rate.is_finite()) {
                    report.push(
                        ViolationKind::NonPositiveServiceRate,
                        &loc,
                        format!("service rate {rate} for class '{class}' must be positive"),
                    );
                }
            }
            if node.discipline == Discipline::Fcfs && node.has_class_dependent_rates() {
                report.push(
                    ViolationKind::ClassRatesAtFcfs,
                    &loc,
                    "FCFS node with class-dependent service rates",
                );
            }
        }
    }

    if l == 0 {
        report.push(ViolationKind::NoClasses, "classes", "at least one class is required");
    } else {
        for (i, class) in spec.classes.iter().enumerate() {
            if spec.classes[..i].iter().any(|o| o.id == class.id) {
                report.push(ViolationKind::DuplicateId, format!("class '{}'", class.id), "duplicate class id");
            }
            if !(0.0..=1.0).contains(&class.entry_probability) {
                report.push(
                    ViolationKind::ProbabilityOutOfRange,
                    format!("class '{}'", class.id),
                    format!("entry probability {} outside [0, 1]", class.entry_probability),
                );
            }
        }
        let s: f64 = spec.classes.iter().map(|c| c.entry_probability).sum();
        if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
            report.push(ViolationKind::ClassProbabilitySum, "classes", format!("class probabilities sum to {s}"));
        }
    }

    if let Some(bulk) = &spec.bulk {
        if let Some(msg) = bulk.check() {
            report.push(ViolationKind::InvalidBulk, "arrival.bulk", msg);
        }
    }

    // Routing shape first; openness only makes sense on a well-formed matrix.
    let routing = &spec.routing;
    let mut shape_ok = routing.entry.len() == n
        && routing.probs.len() == n
        && routing.probs.iter().all(|r| r.len() == n);
    if !shape_ok {
        report.push(
            ViolationKind::DimensionMismatch,
            "routing",
            format!("routing must be {n}x{n} with {n} entry probabilities"),
        );
    }
    if let Some(full) = &routing.class_switching {
        if l <= 1 {
            report.push(
                ViolationKind::ClassSwitchingSingleClass,
                "routing.class_links",
                "class-switching routing requires more than one class",
            );
        }
        let dim = n * l;
        if full.len() != dim || full.iter().any(|r| r.len() != dim) {
            report.push(
                ViolationKind::DimensionMismatch,
                "routing.class_links",
                format!("class-switching routing must be {dim}x{dim}"),
            );
            shape_ok = false;
        }
    }
    if !shape_ok {
        return report;
    }

    let mut rows_ok = true;
    for (j, row) in routing.probs.iter().enumerate() {
        rows_ok &= check_row(&mut report, &format!("routing row '{}'", spec.nodes[j].id), row);
    }
    if let Some(full) = &routing.class_switching {
        for (jl, row) in full.iter().enumerate() {
            let loc = format!(
                "routing row '{}'/'{}'",
                spec.nodes[jl / l].id,
                spec.classes[jl % l].id
            );
            rows_ok &= check_row(&mut report, &loc, row);
        }
    }
    if routing.entry.iter().any(|p| !(0.0..=1.0).contains(p)) {
        report.push(ViolationKind::ProbabilityOutOfRange, "routing.entry", "entry probability outside [0, 1]");
        rows_ok = false;
    }
    let s: f64 = routing.entry.iter().sum();
    if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
        report.push(ViolationKind::EntrySumNotOne, "routing.entry", format!("entry probabilities sum to {s}"));
    }

    if rows_ok && l > 0 {
        let open = if let Some(full) = &routing.class_switching {
            let ext: Vec<f64> = (0..n * l)
                .map(|k| routing.entry[k / l] * spec.classes[k % l].entry_probability)
                .collect();
            solve_balance(full, &ext).is_ok()
        } else {
            solve_balance(&routing.probs, &routing.entry).is_ok()
        };
        if !open {
            report.push(
                ViolationKind::NotOpen,
                "routing",
                "network not open: traffic equations are singular",
            );
        }
    }
    report
}
