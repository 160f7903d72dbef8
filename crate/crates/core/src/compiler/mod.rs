//! Binds validated sheets into method invocations and produces the portable
//! XML test script.

mod xml;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::sheet_model::{
    validate_sheets, CellValue, Direction, Dwell, Location, MethodClass, Sheet, SignalTable,
    StatusDef, StatusTable, TestSequence, ValidationReport,
};

pub use xml::{emit_xml, escape_attr};

/// Value of the `format` attribute on the script root.
pub const FORMAT_VERSION: u32 = 1;

/// A method parameter as it appears in a script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamValue {
    Number(f64),
    /// Open circuit / unbounded.
    Inf,
    /// Literal payload such as a bit string `0001B`.
    Text(String),
    /// Symbolic value resolved against the stand environment at run time.
    #[serde(with = "expr_text")]
    Expr(Expr),
}

mod expr_text {
    use crate::expr::{parse_expr, render_expr, Expr};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&render_expr(e))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Expr, D::Error> {
        let text = String::deserialize(d)?;
        parse_expr(&text).map_err(serde::de::Error::custom)
    }
}

impl From<&CellValue> for ParamValue {
    fn from(v: &CellValue) -> Self {
        match v {
            CellValue::Number(n) => ParamValue::Number(*n),
            CellValue::Inf => ParamValue::Inf,
            CellValue::Bits(b) => ParamValue::Text(b.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodInvocation {
    pub method: String,
    /// Ordered: emission order is part of the format.
    pub params: Vec<(String, ParamValue)>,
}

impl MethodInvocation {
    pub fn new(method: &str) -> Self {
        Self {
            method: method.to_string(),
            params: Vec::new(),
        }
    }

    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.params.push((name.to_string(), value));
        self
    }

    pub fn param(&self, name: &str) -> Option<&ParamValue> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn class(&self) -> Option<MethodClass> {
        MethodClass::of(&self.method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    /// Lowercase script signal name.
    pub signal: String,
    pub invocation: MethodInvocation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptSignal {
    pub name: String,
    pub direction: Direction,
    pub pins: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptHeader {
    pub name: String,
    pub dut: String,
    pub format: u32,
    /// Signal manifest: every statement refers to one of these.
    pub signals: Vec<ScriptSignal>,
}

impl ScriptHeader {
    pub fn signal(&self, name: &str) -> Option<&ScriptSignal> {
        self.signals.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptInit {
    pub settle: Dwell,
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub index: usize,
    pub dt: Dwell,
    pub remark: Option<String>,
    pub statements: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScript {
    pub header: ScriptHeader,
    pub init: ScriptInit,
    pub steps: Vec<ScriptStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Stimulus,
    Check,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("status {status}: {message}")]
pub struct LowerError {
    pub status: String,
    pub message: String,
}

/// Turns one status row into the invocation that applies (stimulus) or
/// verifies (check) it.
///
/// Get-class rows become `<attr>_max` / `<attr>_min` bounds, symbolic
/// `(k*var)` when the row names a scale variable. Put-class rows carry
/// `nom` under the attribute name, followed by `d1`..`d3` when present.
pub fn lower_status(s: &StatusDef, role: Role) -> Result<MethodInvocation, LowerError> {
    let err = |message: String| LowerError {
        status: s.status.clone(),
        message,
    };
    let class = s
        .class()
        .ok_or_else(|| err(format!("method {} is neither put_* nor get_*", s.method)))?;
    match (class, role) {
        (MethodClass::Get, Role::Stimulus) => {
            return Err(err(format!(
                "get-class method {} used as a stimulus",
                s.method
            )))
        }
        (MethodClass::Put, Role::Check) => {
            return Err(err(format!(
                "put-class method {} used as a check",
                s.method
            )))
        }
        _ => {}
    }
    let attr = s.attribut.to_ascii_lowercase();
    let mut inv = MethodInvocation::new(&s.method);
    match class {
        MethodClass::Get => {
            if s.min.is_none() && s.max.is_none() {
                return Err(err("get-class status defines neither min nor max".into()));
            }
            let var = s.var_x.as_ref().map(|v| v.to_ascii_lowercase());
            let bound = |k: f64| match &var {
                Some(v) => ParamValue::Expr(Expr::scaled(k, v)),
                None => ParamValue::Number(k),
            };
            if let Some(max) = s.max {
                inv = inv.with(&format!("{attr}_max"), bound(max));
            }
            if let Some(min) = s.min {
                inv = inv.with(&format!("{attr}_min"), bound(min));
            }
        }
        MethodClass::Put => {
            if let Some(nom) = &s.nom {
                inv = inv.with(&attr, nom.into());
            }
            for (i, d) in s.d.iter().enumerate() {
                if let Some(d) = d {
                    inv = inv.with(&format!("d{}", i + 1), d.into());
                }
            }
            if inv.params.is_empty() {
                return Err(err("put-class status defines neither nom nor D1-D3".into()));
            }
        }
    }
    Ok(inv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompileOptions {
    pub dut: String,
    /// Dwell after the initial stimuli are applied.
    pub settle: Dwell,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            dut: "dut".to_string(),
            settle: Dwell::from_micros(100_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("sheets failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("{location}: {source}")]
    Binding {
        location: Location,
        #[source]
        source: LowerError,
    },
}

/// Builds the script: initial stimuli in signal-table order, then each step's
/// explicit assignments in sheet column order. Holds are left implicit.
pub fn compile(
    signals: &SignalTable,
    statuses: &StatusTable,
    test: &TestSequence,
    options: &CompileOptions,
) -> Result<TestScript, CompileError> {
    let report = validate_sheets(signals, statuses, test);
    if !report.is_empty() {
        return Err(CompileError::Invalid(report));
    }

    let bind = |signal: &str, status: &str, location: Location| {
        let def = signals.get(signal).expect("validated signal");
        let role = match def.direction {
            Direction::Input => Role::Stimulus,
            Direction::Output => Role::Check,
        };
        let status = statuses.get(status).expect("validated status");
        lower_status(status, role)
            .map(|invocation| Statement {
                signal: signal.to_ascii_lowercase(),
                invocation,
            })
            .map_err(|source| CompileError::Binding { location, source })
    };

    let header = ScriptHeader {
        name: test.name.clone(),
        dut: options.dut.clone(),
        format: FORMAT_VERSION,
        signals: signals
            .signals
            .iter()
            .map(|s| ScriptSignal {
                name: s.name.to_ascii_lowercase(),
                direction: s.direction,
                pins: s.pins.clone(),
            })
            .collect(),
    };

    let init = signals
        .signals
        .iter()
        .enumerate()
        .filter(|(_, s)| s.direction == Direction::Input)
        .map(|(i, s)| {
            bind(
                &s.name,
                &s.initial_status,
                Location::new(Sheet::Signals, i + 1, "initial_status"),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut steps = Vec::with_capacity(test.steps.len());
    for (row, step) in test.steps.iter().enumerate() {
        let mut ordered: Vec<(&String, &String)> = step.assignments.iter().collect();
        ordered.sort_by_key(|(signal, _)| {
            test.columns
                .iter()
                .position(|c| c == *signal)
                .unwrap_or(usize::MAX)
        });
        let statements = ordered
            .into_iter()
            .map(|(signal, status)| {
                bind(signal, status, Location::new(Sheet::Test, row + 1, signal))
            })
            .collect::<Result<Vec<_>, _>>()?;
        steps.push(ScriptStep {
            index: step.index,
            dt: step.dt,
            remark: step.remark.clone(),
            statements,
        });
    }

    Ok(TestScript {
        header,
        init: ScriptInit {
            settle: options.settle,
            statements: init,
        },
        steps,
    })
}
