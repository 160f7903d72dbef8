use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{MethodClass, SignalTable, StatusTable, TestSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sheet {
    Signals,
    Statuses,
    Test,
}

impl fmt::Display for Sheet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sheet::Signals => "signals",
            Sheet::Statuses => "statuses",
            Sheet::Test => "test",
        })
    }
}

/// Sheet coordinates. `row` is the 1-based data row (the header is not
/// counted), `column` the column header the cell sits under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub sheet: Sheet,
    pub row: usize,
    pub column: String,
}

impl Location {
    pub fn new(sheet: Sheet, row: usize, column: &str) -> Self {
        Self {
            sheet,
            row,
            column: column.to_string(),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} row {} column {}", self.sheet, self.row, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnknownStatus,
    UnknownSignal,
    DirectionMismatch,
    IncompleteStatus,
    UnknownMethodClass,
    DuplicatePin,
    NameCollision,
    EmptyTest,
    StepIndex,
    ZeroDwell,
}

impl ViolationKind {
    pub fn label(self) -> &'static str {
        match self {
            ViolationKind::UnknownStatus => "unknown status",
            ViolationKind::UnknownSignal => "unknown signal",
            ViolationKind::DirectionMismatch => "direction/method mismatch",
            ViolationKind::IncompleteStatus => "incomplete status",
            ViolationKind::UnknownMethodClass => "unknown method class",
            ViolationKind::DuplicatePin => "duplicate pin",
            ViolationKind::NameCollision => "name collision",
            ViolationKind::EmptyTest => "empty test",
            ViolationKind::StepIndex => "step index",
            ViolationKind::ZeroDwell => "zero dwell",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {}: {}",
            self.location,
            self.kind.label(),
            self.message
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, kind: ViolationKind, location: Location, message: String) {
        self.violations.push(Violation {
            kind,
            location,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        let n = self.violations.len();
        write!(f, "{n} violation{}", if n == 1 { "" } else { "s" })
    }
}

/// Cross-reference closure over the three sheets. Violations are collected,
/// never raised.
pub fn validate_sheets(
    signals: &SignalTable,
    statuses: &StatusTable,
    test: &TestSequence,
) -> ValidationReport {
    let mut report = ValidationReport::default();

    for (i, status) in statuses.statuses.iter().enumerate() {
        let loc = |column: &str| Location::new(Sheet::Statuses, i + 1, column);
        match status.class() {
            None => report.push(
                ViolationKind::UnknownMethodClass,
                loc("method"),
                format!(
                    "status {} uses method {}, which is neither put_* nor get_*",
                    status.status, status.method
                ),
            ),
            Some(class) if !status.is_complete() => report.push(
                ViolationKind::IncompleteStatus,
                loc(if class == MethodClass::Get {
                    "min"
                } else {
                    "nom"
                }),
                match class {
                    MethodClass::Get => {
                        format!(
                            "get-class status {} defines neither min nor max",
                            status.status
                        )
                    }
                    MethodClass::Put => {
                        format!(
                            "put-class status {} defines neither nom nor D1-D3",
                            status.status
                        )
                    }
                },
            ),
            Some(_) => {}
        }
    }

    let mut pin_owner: HashMap<&str, &str> = HashMap::new();
    let mut lowered: HashMap<String, &str> = HashMap::new();
    for (i, signal) in signals.signals.iter().enumerate() {
        let row = i + 1;
        if let Some(prev) = lowered.insert(signal.name.to_ascii_lowercase(), &signal.name) {
            report.push(
                ViolationKind::NameCollision,
                Location::new(Sheet::Signals, row, "name"),
                format!(
                    "signal {} collides with {} once lowercased",
                    signal.name, prev
                ),
            );
        }
        for pin in &signal.pins {
            if let Some(owner) = pin_owner.insert(pin, &signal.name) {
                report.push(
                    ViolationKind::DuplicatePin,
                    Location::new(Sheet::Signals, row, "pins"),
                    format!("pin {pin} of {} already belongs to {owner}", signal.name),
                );
            }
        }
        check_assignment(
            &mut report,
            statuses,
            signal.direction.expected_class(),
            &signal.name,
            &signal.initial_status,
            Location::new(Sheet::Signals, row, "initial_status"),
        );
    }

    if test.steps.is_empty() {
        report.push(
            ViolationKind::EmptyTest,
            Location::new(Sheet::Test, 1, "test step"),
            format!("test {} has no steps", test.name),
        );
    }

    let mut unknown_reported: HashSet<&str> = HashSet::new();
    for (i, step) in test.steps.iter().enumerate() {
        let row = i + 1;
        if step.index != i {
            report.push(
                ViolationKind::StepIndex,
                Location::new(Sheet::Test, row, "test step"),
                format!("expected step index {i}, found {}", step.index),
            );
        }
        if step.dt.is_zero() {
            report.push(
                ViolationKind::ZeroDwell,
                Location::new(Sheet::Test, row, "dt"),
                format!("step {} has a zero dwell time", step.index),
            );
        }
        for (signal_name, status_name) in &step.assignments {
            let loc = Location::new(Sheet::Test, row, signal_name);
            match signals.get(signal_name) {
                None => {
                    if unknown_reported.insert(signal_name) {
                        report.push(
                            ViolationKind::UnknownSignal,
                            loc,
                            format!("signal {signal_name} is not in the signal table"),
                        );
                    }
                }
                Some(signal) => check_assignment(
                    &mut report,
                    statuses,
                    signal.direction.expected_class(),
                    signal_name,
                    status_name,
                    loc,
                ),
            }
        }
    }

    report
}

fn check_assignment(
    report: &mut ValidationReport,
    statuses: &StatusTable,
    expected: MethodClass,
    signal: &str,
    status_name: &str,
    loc: Location,
) {
    let Some(status) = statuses.get(status_name) else {
        report.push(
            ViolationKind::UnknownStatus,
            loc,
            format!("status {status_name} assigned to {signal} is not defined"),
        );
        return;
    };
    if let Some(class) = status.class() {
        if class != expected {
            let (want, got) = match expected {
                MethodClass::Put => ("input", "get"),
                MethodClass::Get => ("output", "put"),
            };
            report.push(
                ViolationKind::DirectionMismatch,
                loc,
                format!(
                    "{want} signal {signal} is assigned {status_name}, a {got}-class status ({})",
                    status.method
                ),
            );
        }
    }
}
