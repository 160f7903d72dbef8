use std::fmt::{self, Write};

use serde::{Deserialize, Serialize};

use super::allocate::{Resolved, Target};
use crate::expr::{format_number, Env};
use crate::sheet_model::Dwell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortKind {
    Allocation,
    Environment,
    Dut,
    Measurement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    /// `None` while applying the initial stimuli.
    pub step: Option<usize>,
    pub kind: AbortKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusRecord {
    pub signal: String,
    pub pin: String,
    pub method: String,
    pub params: Vec<(String, Resolved)>,
    pub target: Target,
    /// Whether the value was (re)applied to the DUT in this step.
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub signal: String,
    pub pin: String,
    pub method: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub measured: f64,
    pub target: Target,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub index: usize,
    pub dt_s: f64,
    pub start_s: f64,
    pub end_s: f64,
    pub remark: Option<String>,
    pub stimuli: Vec<StimulusRecord>,
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    /// A stimulus took a resource.
    Bound,
    /// A held stimulus changed resource.
    Moved,
    /// A resource was freed because the pin went open-circuit.
    Released,
    OpenCircuit,
    Bus,
    /// A check sampled through a resource.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: Option<usize>,
    pub pin: String,
    pub method: String,
    pub event: TraceEvent,
    pub target: Target,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps_total: usize,
    pub steps_run: usize,
    pub steps_passed: usize,
    pub checks_total: usize,
    pub checks_passed: usize,
    pub settle_us: u64,
    /// Sum of the dwell times of the steps that ran.
    pub dwell_sum_us: u64,
    /// Settle plus dwell sum: the DUT clock at the end of the run.
    pub virtual_time_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub test: String,
    pub dut: String,
    pub env: Env,
    pub verdict: Verdict,
    pub init: Vec<StimulusRecord>,
    pub steps: Vec<StepReport>,
    pub trace: Vec<TraceEntry>,
    pub summary: Summary,
    pub abort: Option<Abort>,
}

fn secs(us: u64) -> String {
    Dwell::from_micros(us).to_string()
}

impl RunReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = (usize, &CheckRecord)> {
        self.steps
            .iter()
            .flat_map(|s| s.checks.iter().map(move |c| (s.index, c)))
            .filter(|(_, c)| !c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary: one line per step, failures spelled out.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "test {} on {}", self.test, self.dut);
        for (k, v) in self.env.iter() {
            let _ = writeln!(out, "  env {k}={}", format_number(v));
        }
        for step in &self.steps {
            let _ = write!(
                out,
                "step {:>3}  t={:>8}s  dt={:>6}s  {}",
                step.index,
                format_number(step.end_s),
                format_number(step.dt_s),
                if step.passed { "ok" } else { "FAILED" }
            );
            if let Some(r) = &step.remark {
                let _ = write!(out, "  # {r}");
            }
            out.push('\n');
            for c in step.checks.iter().filter(|c| !c.passed) {
                let bound = |b: Option<f64>| b.map(format_number).unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "    {} {} on {}: measured {} not in [{}, {}]",
                    c.method,
                    c.signal,
                    c.pin,
                    format_number(c.measured),
                    bound(c.min),
                    bound(c.max)
                );
            }
        }
        if let Some(a) = &self.abort {
            let at = a.step.map_or("init".to_string(), |s| format!("step {s}"));
            let _ = writeln!(out, "aborted at {at}: {}", a.message);
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "{}: {}/{} steps passed, {}/{} checks passed, virtual time {}s (dwell {}s)",
            self.verdict,
            s.steps_passed,
            s.steps_total,
            s.checks_passed,
            s.checks_total,
            secs(s.virtual_time_us),
            secs(s.dwell_sum_us)
        );
        out
    }
}
