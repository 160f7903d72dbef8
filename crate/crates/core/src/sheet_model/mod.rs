//! Domain types for the three authoring sheets: the signal table, the status
//! table and the (sparse) test sequence.

mod holds;
mod validate;

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use holds::{expand_holds, DenseSequence, DenseStep};
pub use validate::{validate_sheets, Location, Sheet, ValidationReport, Violation, ViolationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Input => "input",
            Direction::Output => "output",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "input" | "in" => Some(Direction::Input),
            "output" | "out" => Some(Direction::Output),
            _ => None,
        }
    }

    /// The method class a status assigned to a signal of this direction
    /// must have.
    pub fn expected_class(self) -> MethodClass {
        match self {
            Direction::Input => MethodClass::Put,
            Direction::Output => MethodClass::Get,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stimulus (`put_*`) or measurement (`get_*`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodClass {
    Put,
    Get,
}

impl MethodClass {
    pub fn of(method: &str) -> Option<Self> {
        if method.starts_with("put_") {
            Some(MethodClass::Put)
        } else if method.starts_with("get_") {
            Some(MethodClass::Get)
        } else {
            None
        }
    }
}

/// Normalizes a method cell such as `get u` or `Put  R` to `get_u` / `put_r`.
pub fn normalize_method(cell: &str) -> String {
    cell.split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .to_ascii_lowercase()
}

/// `true` for bit literals such as `0001B`.
pub fn is_bit_literal(s: &str) -> bool {
    s.len() >= 2 && s.ends_with('B') && s[..s.len() - 1].bytes().all(|b| b == b'0' || b == b'1')
}

/// A status-table cell value: a number, the open-circuit marker `INF`, or a
/// bit literal kept verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellValue {
    Number(f64),
    Inf,
    Bits(String),
}

impl CellValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            CellValue::Number(v) => Some(*v),
            _ => None,
        }
    }
}

/// A dwell time, stored in whole microseconds so sums never drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Dwell(u64);

impl Dwell {
    pub const MICROS_PER_SECOND: u64 = 1_000_000;

    pub fn from_micros(us: u64) -> Self {
        Dwell(us)
    }

    /// Rounds to the nearest microsecond. `None` for negative or non-finite
    /// input.
    pub fn from_secs_f64(secs: f64) -> Option<Self> {
        if !secs.is_finite() || secs < 0.0 {
            return None;
        }
        let us = (secs * Self::MICROS_PER_SECOND as f64).round();
        if us > u64::MAX as f64 {
            return None;
        }
        Some(Dwell(us as u64))
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / Self::MICROS_PER_SECOND as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl std::ops::Add for Dwell {
    type Output = Dwell;
    fn add(self, rhs: Dwell) -> Dwell {
        Dwell(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Dwell {
    fn add_assign(&mut self, rhs: Dwell) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Dwell {
    fn sum<I: Iterator<Item = Dwell>>(iter: I) -> Dwell {
        iter.fold(Dwell(0), |a, b| a + b)
    }
}

/// Decimal-point seconds without trailing zeros: `0.5`, `280`, `0.000001`.
impl fmt::Display for Dwell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / Self::MICROS_PER_SECOND;
        let frac = self.0 % Self::MICROS_PER_SECOND;
        if frac == 0 {
            write!(f, "{whole}")
        } else {
            let digits = format!("{frac:06}");
            write!(f, "{whole}.{}", digits.trim_end_matches('0'))
        }
    }
}

impl Serialize for Dwell {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_secs_f64())
    }
}

impl<'de> Deserialize<'de> for Dwell {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(d)?;
        Dwell::from_secs_f64(secs).ok_or_else(|| serde::de::Error::custom("invalid dwell"))
    }
}

/// One row of the signal table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalDef {
    pub name: String,
    pub direction: Direction,
    /// Physical DUT pins carrying this logical signal, e.g. `INT_ILL_F`,
    /// `INT_ILL_R` for `INT_ILL`.
    pub pins: Vec<String>,
    /// Status of the signal before the first test step.
    pub initial_status: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalTable {
    pub signals: Vec<SignalDef>,
}

impl SignalTable {
    pub fn new(signals: Vec<SignalDef>) -> Self {
        Self { signals }
    }

    pub fn get(&self, name: &str) -> Option<&SignalDef> {
        self.signals.iter().find(|s| s.name == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.name == name)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &SignalDef> {
        self.signals
            .iter()
            .filter(|s| s.direction == Direction::Input)
    }
}

/// One row of the status table: a named, parameterized method invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusDef {
    pub status: String,
    /// Normalized method name, e.g. `get_u`.
    pub method: String,
    /// The quantity the method targets, e.g. `u`, `r`, `data`.
    pub attribut: String,
    /// Scale variable; when set, `nom`/`min`/`max` are multipliers of it.
    pub var_x: Option<String>,
    pub nom: Option<CellValue>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub d: [Option<CellValue>; 3],
    pub unit: Option<String>,
}

impl StatusDef {
    pub fn new(status: &str, method: &str, attribut: &str) -> Self {
        Self {
            status: status.to_string(),
            method: normalize_method(method),
            attribut: attribut.to_string(),
            var_x: None,
            nom: None,
            min: None,
            max: None,
            d: [None, None, None],
            unit: None,
        }
    }

    pub fn class(&self) -> Option<MethodClass> {
        MethodClass::of(&self.method)
    }

    /// Whether the row carries enough values to be lowered into an
    /// invocation of its method class.
    pub fn is_complete(&self) -> bool {
        match self.class() {
            Some(MethodClass::Get) => self.min.is_some() || self.max.is_some(),
            Some(MethodClass::Put) => self.nom.is_some() || self.d.iter().any(Option::is_some),
            None => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusTable {
    pub statuses: Vec<StatusDef>,
}

impl StatusTable {
    pub fn new(statuses: Vec<StatusDef>) -> Self {
        Self { statuses }
    }

    pub fn get(&self, name: &str) -> Option<&StatusDef> {
        self.statuses.iter().find(|s| s.status == name)
    }
}

/// One row of a test sheet. Signals missing from `assignments` hold their
/// previous stimulus (inputs) or are not checked (outputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStep {
    pub index: usize,
    pub dt: Dwell,
    /// signal name → status name, in sheet column order.
    pub assignments: IndexMap<String, String>,
    pub remark: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSequence {
    pub name: String,
    /// Signal columns in sheet order.
    pub columns: Vec<String>,
    pub steps: Vec<TestStep>,
}

impl TestSequence {
    /// Builds a sequence whose columns are the assigned signals in
    /// first-occurrence order.
    pub fn new(name: &str, steps: Vec<TestStep>) -> Self {
        let mut columns: Vec<String> = Vec::new();
        for step in &steps {
            for signal in step.assignments.keys() {
                if !columns.contains(signal) {
                    columns.push(signal.clone());
                }
            }
        }
        Self {
            name: name.to_string(),
            columns,
            steps,
        }
    }
}

/// The interior-illumination example tables, built in code. Used by tests
/// across the crate and as a reference for sheet authors.
pub mod example {
    use super::*;

    fn signal(name: &str, direction: Direction, pins: &[&str], initial: &str) -> SignalDef {
        SignalDef {
            name: name.into(),
            direction,
            pins: pins.iter().map(|p| p.to_string()).collect(),
            initial_status: initial.into(),
        }
    }

    pub fn signals() -> SignalTable {
        use Direction::*;
        SignalTable::new(vec![
            signal("IGN_ST", Input, &["IGN_ST"], "Off"),
            signal("DS_FL", Input, &["DS_FL"], "Closed"),
            signal("DS_FR", Input, &["DS_FR"], "Closed"),
            signal("DS_RL", Input, &["DS_RL"], "Closed"),
            signal("DS_RR", Input, &["DS_RR"], "Closed"),
            signal("NIGHT", Input, &["NIGHT"], "0"),
            signal("INT_ILL", Output, &["INT_ILL_F", "INT_ILL_R"], "Lo"),
        ])
    }

    pub fn statuses() -> StatusTable {
        let num = CellValue::Number;
        let bits = |s: &str| CellValue::Bits(s.into());
        let put_can = |name: &str, data: &str| StatusDef {
            nom: Some(bits(data)),
            ..StatusDef::new(name, "put can", "data")
        };
        let put_r = |name: &str, nom: CellValue, d: [CellValue; 3]| StatusDef {
            nom: Some(nom),
            d: d.map(Some),
            ..StatusDef::new(name, "put r", "r")
        };
        let get_u = |name: &str, nom: f64, min: f64, max: f64| StatusDef {
            var_x: Some("UBATT".into()),
            nom: Some(num(nom)),
            min: Some(min),
            max: Some(max),
            ..StatusDef::new(name, "get u", "u")
        };
        StatusTable::new(vec![
            put_can("Off", "0001B"),
            put_r("Open", num(0.0), [num(0.5), num(1.0), num(2.0)]),
            put_r(
                "Closed",
                CellValue::Inf,
                [CellValue::Inf, num(5000.0), num(5000.0)],
            ),
            put_can("0", "0B"),
            put_can("1", "1B"),
            get_u("Lo", 0.0, 0.0, 0.3),
            get_u("Ho", 1.0, 0.7, 1.1),
        ])
    }

    /// Rows: (Δt seconds, [(signal, status)], remark).
    #[allow(clippy::type_complexity)]
    const ROWS: &[(f64, &[(&str, &str)], &str)] = &[
        (
            0.5,
            &[
                ("IGN_ST", "Off"),
                ("DS_FL", "Closed"),
                ("DS_FR", "Closed"),
                ("NIGHT", "0"),
                ("INT_ILL", "Lo"),
            ],
            "day: no interior",
        ),
        (
            0.5,
            &[("DS_FL", "Open"), ("INT_ILL", "Lo")],
            "illumination, if",
        ),
        (
            0.5,
            &[("DS_FL", "Closed"), ("DS_FR", "Open"), ("INT_ILL", "Lo")],
            "doors are open",
        ),
        (0.5, &[("DS_FR", "Closed"), ("INT_ILL", "Lo")], ""),
        (
            0.5,
            &[("DS_FL", "Open"), ("NIGHT", "1"), ("INT_ILL", "Ho")],
            "night: interior",
        ),
        (
            0.5,
            &[("DS_FL", "Closed"), ("INT_ILL", "Lo")],
            "illumination on,",
        ),
        (
            0.5,
            &[("DS_FR", "Open"), ("INT_ILL", "Ho")],
            "if doors are open",
        ),
        (280.0, &[("INT_ILL", "Ho")], ""),
        (25.0, &[("INT_ILL", "Lo")], "illumination"),
        (
            0.5,
            &[("DS_FR", "Closed"), ("INT_ILL", "Lo")],
            "off after 300s",
        ),
    ];

    pub fn test() -> TestSequence {
        let steps = ROWS
            .iter()
            .enumerate()
            .map(|(index, (dt, cells, remark))| TestStep {
                index,
                dt: Dwell::from_secs_f64(*dt).unwrap(),
                assignments: cells
                    .iter()
                    .map(|(s, v)| (s.to_string(), v.to_string()))
                    .collect(),
                remark: (!remark.is_empty()).then(|| remark.to_string()),
            })
            .collect();
        TestSequence::new("interior_illumination", steps)
    }
}
