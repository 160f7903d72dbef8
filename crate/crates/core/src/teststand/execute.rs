use std::collections::HashMap;

use super::allocate::{allocate, Allocation, Requirement, Resolved, Target};
use super::dut::{DutModel, Stimulus};
use super::report::{
    Abort, AbortKind, CheckRecord, RunReport, StepReport, StimulusRecord, Summary, TraceEntry,
    TraceEvent, Verdict,
};
use super::StandModel;
use crate::compiler::{ParamValue, Statement};
use crate::expr::{eval_expr, Env};
use crate::script::TestPlan;
use crate::sheet_model::Dwell;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExecOptions {
    /// Sleep through each dwell in wall-clock time. Off by default: the DUT
    /// runs on a virtual clock.
    pub pace: bool,
}

fn resolve(value: &ParamValue, env: &Env) -> Result<Resolved, String> {
    Ok(match value {
        ParamValue::Number(n) => Resolved::Number(*n),
        ParamValue::Inf => Resolved::Inf,
        ParamValue::Text(t) => Resolved::Text(t.clone()),
        ParamValue::Expr(e) => Resolved::Number(eval_expr(e, env).map_err(|e| e.to_string())?),
    })
}

/// One requirement per pin of the statement's signal.
fn requirements(plan: &TestPlan, st: &Statement, env: &Env) -> Result<Vec<Requirement>, String> {
    let signal = plan
        .script
        .header
        .signal(&st.signal)
        .ok_or_else(|| format!("signal {} missing from manifest", st.signal))?;
    let params = st
        .invocation
        .params
        .iter()
        .map(|(n, v)| resolve(v, env).map(|r| (n.clone(), r)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(signal
        .pins
        .iter()
        .map(|pin| Requirement::new(&st.signal, pin, &st.invocation.method, params.clone()))
        .collect())
}

fn stimulus_of(req: &Requirement) -> Stimulus {
    let (value, aux) = match req.primary() {
        Some((name, v)) => (
            Some(v.clone()),
            req.params
                .iter()
                .filter(|(n, _)| n != name)
                .cloned()
                .collect(),
        ),
        None => (None, req.params.clone()),
    };
    Stimulus {
        method: req.method.clone(),
        value,
        aux,
    }
}

fn bound(req: &Requirement, suffix: &str) -> Option<f64> {
    req.params.iter().find_map(|(n, v)| match v {
        Resolved::Number(x) if n.ends_with(suffix) => Some(*x),
        _ => None,
    })
}

struct Run<'a> {
    plan: &'a TestPlan,
    stand: &'a StandModel,
    env: &'a Env,
    dut: &'a mut dyn DutModel,
    options: ExecOptions,
    clock: Dwell,
    held: Allocation,
    applied: HashMap<String, Requirement>,
    trace: Vec<TraceEntry>,
}

impl Run<'_> {
    fn abort(step: Option<usize>, kind: AbortKind, message: String) -> Abort {
        Abort {
            step,
            kind,
            message,
        }
    }

    fn dwell(&mut self, dt: Dwell) {
        if self.options.pace {
            std::thread::sleep(std::time::Duration::from_micros(dt.as_micros()));
        }
        self.dut.advance(dt);
        self.clock += dt;
    }

    fn collect(
        &self,
        step: Option<usize>,
        statements: &[Statement],
    ) -> Result<Vec<Requirement>, Abort> {
        let mut out = Vec::new();
        for st in statements {
            let reqs = requirements(self.plan, st, self.env)
                .map_err(|m| Self::abort(step, AbortKind::Environment, m))?;
            out.extend(reqs);
        }
        Ok(out)
    }

    /// Allocates, records trace events and applies changed stimuli.
    fn engage(
        &mut self,
        step: Option<usize>,
        reqs: &[Requirement],
    ) -> Result<(Allocation, Vec<StimulusRecord>), Abort> {
        let allocation = allocate(reqs, self.stand, &self.held)
            .map_err(|e| Self::abort(step, AbortKind::Allocation, e.to_string()))?;

        let mut records = Vec::new();
        for b in &allocation.bindings {
            let req = &b.requirement;
            if req.is_check() {
                self.trace.push(TraceEntry {
                    step,
                    pin: req.pin.clone(),
                    method: req.method.clone(),
                    event: TraceEvent::Sampled,
                    target: b.target.clone(),
                });
                continue;
            }
            let previous = self.held.target_of(&req.pin);
            if previous != Some(&b.target) {
                let event = match (&b.target, previous) {
                    (Target::Bus, _) => TraceEvent::Bus,
                    (Target::OpenCircuit, Some(Target::Resource { .. })) => TraceEvent::Released,
                    (Target::OpenCircuit, _) => TraceEvent::OpenCircuit,
                    (Target::Resource { .. }, Some(Target::Resource { .. })) => TraceEvent::Moved,
                    (Target::Resource { .. }, _) => TraceEvent::Bound,
                };
                self.trace.push(TraceEntry {
                    step,
                    pin: req.pin.clone(),
                    method: req.method.clone(),
                    event,
                    target: b.target.clone(),
                });
            }
            let changed = self.applied.get(&req.pin) != Some(req);
            if changed {
                self.dut
                    .set_input(&req.pin, &stimulus_of(req))
                    .map_err(|e| Self::abort(step, AbortKind::Dut, e.to_string()))?;
                self.applied.insert(req.pin.clone(), req.clone());
            }
            records.push(StimulusRecord {
                signal: req.signal.clone(),
                pin: req.pin.clone(),
                method: req.method.clone(),
                params: req.params.clone(),
                target: b.target.clone(),
                applied: changed,
            });
        }
        Ok((allocation, records))
    }

    fn sample(&mut self, step: usize, allocation: &Allocation) -> Result<Vec<CheckRecord>, Abort> {
        let mut out = Vec::new();
        for b in allocation
            .bindings
            .iter()
            .filter(|b| b.requirement.is_check())
        {
            let req = &b.requirement;
            if req.method != "get_u" {
                return Err(Self::abort(
                    Some(step),
                    AbortKind::Measurement,
                    format!("unsupported measurement method {}", req.method),
                ));
            }
            let measured = self
                .dut
                .read_pin(&req.pin)
                .map_err(|e| Self::abort(Some(step), AbortKind::Dut, e.to_string()))?;
            let min = bound(req, "_min");
            let max = bound(req, "_max");
            let passed = !measured.is_nan()
                && min.is_none_or(|m| m <= measured)
                && max.is_none_or(|m| measured <= m);
            out.push(CheckRecord {
                signal: req.signal.clone(),
                pin: req.pin.clone(),
                method: req.method.clone(),
                min,
                max,
                measured,
                target: b.target.clone(),
                passed,
            });
        }
        Ok(out)
    }
}

/// Runs a plan on the stand against a DUT.
///
/// Per step: allocate the effective stimuli and the checks, apply what
/// changed, advance the DUT clock by the dwell, then sample every check at
/// the end of the dwell. Failed checks do not stop the run; allocation,
/// environment and DUT errors abort it.
pub fn execute(
    plan: &TestPlan,
    stand: &StandModel,
    env: &Env,
    dut: &mut dyn DutModel,
    options: ExecOptions,
) -> RunReport {
    let mut run = Run {
        plan,
        stand,
        env,
        dut,
        options,
        clock: Dwell::default(),
        held: Allocation::default(),
        applied: HashMap::new(),
        trace: Vec::new(),
    };
    let mut report = RunReport {
        test: plan.script.header.name.clone(),
        dut: plan.script.header.dut.clone(),
        env: env.clone(),
        verdict: Verdict::Fail,
        init: Vec::new(),
        steps: Vec::new(),
        trace: Vec::new(),
        summary: Summary {
            steps_total: plan.step_count(),
            ..Summary::default()
        },
        abort: None,
    };

    let result = (|| -> Result<(), Abort> {
        let reqs = run.collect(None, &plan.script.init.statements)?;
        let (allocation, records) = run.engage(None, &reqs)?;
        run.held = allocation;
        report.init = records;
        let settle = plan.script.init.settle;
        run.dwell(settle);
        report.summary.settle_us = settle.as_micros();

        for (k, step) in plan.script.steps.iter().enumerate() {
            let mut reqs = run.collect(Some(k), &plan.stimuli[k])?;
            reqs.extend(run.collect(Some(k), &plan.checks[k])?);
            let (allocation, stimuli) = run.engage(Some(k), &reqs)?;
            let start = run.clock;
            run.dwell(step.dt);
            let checks = run.sample(k, &allocation)?;
            run.held = Allocation {
                bindings: allocation.held().cloned().collect(),
                reshuffled: allocation.reshuffled,
            };
            let passed = checks.iter().all(|c| c.passed);
            report.summary.steps_run += 1;
            report.summary.dwell_sum_us += step.dt.as_micros();
            report.summary.checks_total += checks.len();
            report.summary.checks_passed += checks.iter().filter(|c| c.passed).count();
            if passed {
                report.summary.steps_passed += 1;
            }
            report.steps.push(StepReport {
                index: step.index,
                dt_s: step.dt.as_secs_f64(),
                start_s: start.as_secs_f64(),
                end_s: run.clock.as_secs_f64(),
                remark: step.remark.clone(),
                stimuli,
                checks,
                passed,
            });
        }
        Ok(())
    })();

    report.summary.virtual_time_us = run.clock.as_micros();
    report.trace = std::mem::take(&mut run.trace);
    report.abort = result.err();
    report.verdict =
        if report.abort.is_none() && report.summary.steps_passed == report.summary.steps_total {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CompileOptions};
    use crate::sheet_model::example;
    use crate::teststand::dut::{reference_dut, ReferenceDutConfig};

    fn example_plan() -> TestPlan {
        TestPlan::from_script(
            compile(
                &example::signals(),
                &example::statuses(),
                &example::test(),
                &CompileOptions::default(),
            )
            .unwrap(),
        )
    }

    fn run_with(config: ReferenceDutConfig, env: &Env) -> RunReport {
        let mut dut = reference_dut(config);
        execute(
            &example_plan(),
            &StandModel::example(),
            env,
            &mut dut,
            ExecOptions::default(),
        )
    }

    #[test]
    fn example_passes() {
        let env = Env::new().with("ubatt", 12.0);
        let report = run_with(ReferenceDutConfig::new(12.0), &env);
        assert_eq!(report.verdict, Verdict::Pass, "{}", report.to_text());
        assert_eq!(report.summary.steps_passed, 10);
        assert_eq!(report.summary.dwell_sum_us, 309_000_000);
        assert_eq!(report.summary.virtual_time_us, 309_100_000);
        assert_eq!(report.steps[9].start_s, 308.6);
        // both lamp pins are checked in every step
        assert_eq!(report.summary.checks_total, 20);
    }

    #[test]
    fn short_timeout_fails_step_seven() {
        let env = Env::new().with("ubatt", 12.0);
        let mut config = ReferenceDutConfig::new(12.0);
        config.timeout = Dwell::from_secs_f64(250.0).unwrap();
        let report = run_with(config, &env);
        assert_eq!(report.verdict, Verdict::Fail);
        let failed: Vec<usize> = report
            .steps
            .iter()
            .filter(|s| !s.passed)
            .map(|s| s.index)
            .collect();
        assert_eq!(failed, [7]);
        assert!(report.abort.is_none());
    }

    #[test]
    fn unbound_variable_aborts() {
        let report = run_with(ReferenceDutConfig::new(12.0), &Env::new().with("vref", 5.0));
        let abort = report.abort.unwrap();
        assert_eq!(abort.kind, AbortKind::Environment);
        assert_eq!(abort.step, Some(0));
        assert!(abort.message.contains("unbound variable ubatt"));
    }

    #[test]
    fn missing_dvm_aborts_with_allocation_error() {
        let env = Env::new().with("ubatt", 12.0);
        let mut dut = reference_dut(ReferenceDutConfig::new(12.0));
        let stand = StandModel::example().without_resource("Ress1");
        let report = execute(
            &example_plan(),
            &stand,
            &env,
            &mut dut,
            ExecOptions::default(),
        );
        let abort = report.abort.unwrap();
        assert_eq!(abort.kind, AbortKind::Allocation);
        assert!(abort.message.contains("get_u"), "{}", abort.message);
        assert_eq!(report.verdict, Verdict::Fail);
    }

    #[test]
    fn trace_shows_decade_binding() {
        let env = Env::new().with("ubatt", 12.0);
        let report = run_with(ReferenceDutConfig::new(12.0), &env);
        let bound: Vec<_> = report
            .trace
            .iter()
            .filter(|t| t.event == TraceEvent::Bound)
            .map(|t| (t.step, t.pin.as_str(), t.target.to_string()))
            .collect();
        assert_eq!(bound[0], (Some(1), "DS_FL", "Ress2 via Mx1.2".to_string()));
        assert!(report
            .trace
            .iter()
            .any(|t| t.event == TraceEvent::Released && t.pin == "DS_FL"));
    }
}
