//! Resource allocation: find, for every pin-level requirement of a step, a
//! stand resource that supports the method, reaches the pin through the
//! connection matrix and covers the requested values.
//!
//! Rules enforced by both the search and [`check_allocation`]:
//!
//! * stimuli (put-class) hold their resource and connector for the whole
//!   dwell; nothing else may use that resource or any position of that
//!   connector group;
//! * checks (get-class) are sampled one after another at the end of the
//!   dwell, so several checks may share a measuring resource and a connector
//!   group, but never with a stimulus;
//! * open-circuit stimuli (`INF`) disengage the pin and use no resource;
//! * bus methods (e.g. `put_can`) go over the stand's bus interface and use
//!   no matrix resource.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::stand::{ConnectorKind, ResourceDef, StandModel};
use super::Connector;
use crate::expr::format_number;
use crate::sheet_model::MethodClass;

/// A parameter after expression evaluation. Serialized as a JSON number,
/// or a string (`"INF"` for open circuit).
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Number(f64),
    Inf,
    Text(String),
}

impl Serialize for Resolved {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Resolved::Number(n) => s.serialize_f64(*n),
            Resolved::Inf => s.serialize_str("INF"),
            Resolved::Text(t) => s.serialize_str(t),
        }
    }
}

impl<'de> Deserialize<'de> for Resolved {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Number(n) => Resolved::Number(n),
            Raw::Text(t) if t == "INF" => Resolved::Inf,
            Raw::Text(t) => Resolved::Text(t),
        })
    }
}

impl fmt::Display for Resolved {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resolved::Number(n) => f.write_str(&format_number(*n)),
            Resolved::Inf => f.write_str("INF"),
            Resolved::Text(t) => f.write_str(t),
        }
    }
}

fn is_aux_param(name: &str) -> bool {
    matches!(name, "d1" | "d2" | "d3")
}

/// One method invocation on one pin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub signal: String,
    pub pin: String,
    pub method: String,
    pub params: Vec<(String, Resolved)>,
}

impl Requirement {
    pub fn new(signal: &str, pin: &str, method: &str, params: Vec<(String, Resolved)>) -> Self {
        Self {
            signal: signal.into(),
            pin: pin.into(),
            method: method.into(),
            params,
        }
    }

    pub fn is_check(&self) -> bool {
        MethodClass::of(&self.method) == Some(MethodClass::Get)
    }

    /// The main value: the first parameter that is not auxiliary metadata.
    pub fn primary(&self) -> Option<(&str, &Resolved)> {
        self.params
            .iter()
            .find(|(n, _)| !is_aux_param(n))
            .map(|(n, v)| (n.as_str(), v))
    }

    pub fn is_open_circuit(&self) -> bool {
        !self.is_check() && matches!(self.primary(), Some((_, Resolved::Inf)))
    }

    pub fn param(&self, name: &str) -> Option<&Resolved> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} on pin {}", self.method, self.pin)?;
        if let Some((name, value)) = self.primary() {
            write!(f, " ({name}={value})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    Resource {
        resource: String,
        connector: Connector,
    },
    OpenCircuit,
    Bus,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Resource {
                resource,
                connector,
            } => write!(f, "{resource} via {connector}"),
            Target::OpenCircuit => f.write_str("open-circuit, no resource"),
            Target::Bus => f.write_str("bus, no resource"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binding {
    pub requirement: Requirement,
    pub target: Target,
}

/// Bindings in requirement order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub bindings: Vec<Binding>,
    /// Set when held stimuli could not all keep their resources.
    #[serde(default)]
    pub reshuffled: bool,
}

impl Allocation {
    /// Stimulus bindings, which persist into the next step.
    pub fn held(&self) -> impl Iterator<Item = &Binding> {
        self.bindings.iter().filter(|b| !b.requirement.is_check())
    }

    pub fn target_of(&self, pin: &str) -> Option<&Target> {
        self.held()
            .find(|b| b.requirement.pin == pin)
            .map(|b| &b.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Rejection {
    NoMethod,
    NoConnection,
    Range {
        param: String,
        value: f64,
        min: f64,
        max: f64,
    },
    ResourceBusy {
        pin: String,
    },
    GroupBusy {
        connector: Connector,
        pin: String,
    },
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::NoMethod => f.write_str("no method"),
            Rejection::NoConnection => f.write_str("no connection"),
            Rejection::Range {
                param,
                value,
                min,
                max,
            } => write!(
                f,
                "range ({param}={} outside [{}, {}])",
                format_number(*value),
                format_number(*min),
                format_number(*max)
            ),
            Rejection::ResourceBusy { pin } => write!(f, "busy (resource in use on {pin})"),
            Rejection::GroupBusy { connector, pin } => {
                write!(f, "busy (group of {connector} in use for {pin})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub struct AllocationError {
    pub requirement: Requirement,
    /// Every resource of the stand, in table order, with why it was refused.
    pub rejected: Vec<(String, Rejection)>,
}

impl fmt::Display for AllocationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "no resource for {}", self.requirement)?;
        if self.rejected.is_empty() {
            return f.write_str(": stand has no resources");
        }
        f.write_str(": ")?;
        for (i, (id, why)) in self.rejected.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{id}: {why}")?;
        }
        Ok(())
    }
}

/// Numeric parameters a resource must cover: those named after its
/// attribute, plus `<attribute>_min` / `<attribute>_max`.
fn range_violation(row: &ResourceDef, req: &Requirement) -> Option<Rejection> {
    let attr = row.attribut.to_ascii_lowercase();
    for (name, value) in &req.params {
        let relevant = *name == attr
            || name
                .strip_prefix(attr.as_str())
                .is_some_and(|rest| rest == "_min" || rest == "_max");
        if !relevant {
            continue;
        }
        if let Resolved::Number(v) = value {
            if !row.contains(*v) {
                return Some(Rejection::Range {
                    param: name.clone(),
                    value: *v,
                    min: row.min,
                    max: row.max,
                });
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy)]
struct Candidate<'a> {
    resource: &'a str,
    connector: Connector,
}

enum Plan<'a> {
    Free(Target),
    Choose(Vec<Candidate<'a>>),
}

/// Static feasibility per resource id (table order), and the candidates
/// that passed.
fn screen<'a>(
    stand: &'a StandModel,
    req: &Requirement,
) -> (Vec<Candidate<'a>>, Vec<(String, Rejection)>) {
    let mut candidates = Vec::new();
    let mut rejected = Vec::new();
    for id in stand.resources.ids() {
        let rows: Vec<&ResourceDef> = stand
            .resources
            .resources
            .iter()
            .filter(|r| r.id == id && r.method == req.method)
            .collect();
        if rows.is_empty() {
            rejected.push((id.to_string(), Rejection::NoMethod));
            continue;
        }
        let Some(connector) = stand.matrix.connector(id, &req.pin) else {
            rejected.push((id.to_string(), Rejection::NoConnection));
            continue;
        };
        let mut first_range = None;
        let mut ok = false;
        for row in rows {
            match range_violation(row, req) {
                None => ok = true,
                Some(r) => {
                    first_range.get_or_insert(r);
                }
            }
        }
        if ok {
            candidates.push(Candidate {
                resource: id,
                connector,
            });
        } else {
            rejected.push((id.to_string(), first_range.expect("some row was screened")));
        }
    }
    (candidates, rejected)
}

/// Stimulus holding the slot (pin, and connector for groups), plus the
/// number of checks sharing it.
type Slot<T> = (Option<T>, usize);

#[derive(Default)]
struct Usage<'a> {
    resources: HashMap<&'a str, Slot<&'a str>>,
    groups: HashMap<(ConnectorKind, u32), Slot<(&'a str, Connector)>>,
}

impl<'a> Usage<'a> {
    fn conflict(&self, check: bool, c: &Candidate<'a>) -> Option<Rejection> {
        if let Some((stim, checks)) = self.resources.get(c.resource) {
            if let Some(pin) = stim {
                return Some(Rejection::ResourceBusy {
                    pin: pin.to_string(),
                });
            }
            if !check && *checks > 0 {
                return Some(Rejection::ResourceBusy {
                    pin: "a check".to_string(),
                });
            }
        }
        if let Some((stim, checks)) = self.groups.get(&c.connector.group_key()) {
            if let Some((pin, connector)) = stim {
                return Some(Rejection::GroupBusy {
                    connector: *connector,
                    pin: pin.to_string(),
                });
            }
            if !check && *checks > 0 {
                return Some(Rejection::GroupBusy {
                    connector: c.connector,
                    pin: "a check".to_string(),
                });
            }
        }
        None
    }

    fn add(&mut self, check: bool, pin: &'a str, c: &Candidate<'a>) {
        let r = self.resources.entry(c.resource).or_default();
        let g = self.groups.entry(c.connector.group_key()).or_default();
        if check {
            r.1 += 1;
            g.1 += 1;
        } else {
            r.0 = Some(pin);
            g.0 = Some((pin, c.connector));
        }
    }

    fn remove(&mut self, check: bool, c: &Candidate<'a>) {
        let r = self.resources.get_mut(c.resource).expect("added");
        let g = self
            .groups
            .get_mut(&c.connector.group_key())
            .expect("added");
        if check {
            r.1 -= 1;
            g.1 -= 1;
        } else {
            r.0 = None;
            g.0 = None;
        }
    }
}

struct Search<'a, 'r> {
    reqs: &'r [Requirement],
    plans: Vec<Plan<'a>>,
    usage: Usage<'r>,
    chosen: Vec<Option<Candidate<'a>>>,
    deepest: Option<(usize, Vec<(String, Rejection)>)>,
}

impl<'a, 'r> Search<'a, 'r>
where
    'a: 'r,
{
    fn run(&mut self, k: usize) -> bool {
        if k == self.reqs.len() {
            return true;
        }
        let req = &self.reqs[k];
        let candidates = match &self.plans[k] {
            Plan::Free(_) => {
                self.chosen[k] = None;
                return self.run(k + 1);
            }
            Plan::Choose(c) => c.clone(),
        };
        let check = req.is_check();
        let mut conflicts = Vec::new();
        for c in &candidates {
            if let Some(why) = self.usage.conflict(check, c) {
                conflicts.push((c.resource.to_string(), why));
                continue;
            }
            self.usage.add(check, &req.pin, c);
            self.chosen[k] = Some(*c);
            if self.run(k + 1) {
                return true;
            }
            self.usage.remove(check, c);
            self.chosen[k] = None;
        }
        if self.deepest.as_ref().is_none_or(|(d, _)| k > *d) {
            self.deepest = Some((k, conflicts));
        }
        false
    }
}

type Outcome<'a> = (
    bool,
    Vec<Option<Candidate<'a>>>,
    Option<(usize, Vec<(String, Rejection)>)>,
);

fn attempt<'a>(reqs: &'a [Requirement], plans: Vec<Plan<'a>>) -> Outcome<'a> {
    let mut search = Search {
        reqs,
        chosen: vec![None; reqs.len()],
        plans,
        usage: Usage::default(),
        deepest: None,
    };
    let ok = search.run(0);
    (ok, search.chosen, search.deepest)
}

/// Finds a conflict-free assignment by depth-first backtracking:
/// requirements in the given order, candidates in resource-table order.
///
/// Stimuli in `held` whose pin and values are unchanged are first pinned to
/// their previous resource; only if that fails are they allowed to move,
/// and the result is flagged `reshuffled`.
pub fn allocate(
    requirements: &[Requirement],
    stand: &StandModel,
    held: &Allocation,
) -> Result<Allocation, AllocationError> {
    let mut plans = Vec::with_capacity(requirements.len());
    let mut static_rejections = Vec::with_capacity(requirements.len());
    for req in requirements {
        if stand.is_bus_method(&req.method) {
            plans.push(Plan::Free(Target::Bus));
            static_rejections.push(Vec::new());
        } else if req.is_open_circuit() {
            plans.push(Plan::Free(Target::OpenCircuit));
            static_rejections.push(Vec::new());
        } else {
            let (candidates, rejected) = screen(stand, req);
            if candidates.is_empty() {
                return Err(AllocationError {
                    requirement: req.clone(),
                    rejected,
                });
            }
            plans.push(Plan::Choose(candidates));
            static_rejections.push(rejected);
        }
    }

    let pinned: Vec<Plan> = plans
        .iter()
        .zip(requirements)
        .map(|(plan, req)| match plan {
            Plan::Choose(cands) if !req.is_check() => {
                let prev = held.held().find(|b| b.requirement == *req);
                let keep = prev.and_then(|b| match &b.target {
                    Target::Resource {
                        resource,
                        connector,
                    } => cands
                        .iter()
                        .find(|c| c.resource == resource && c.connector == *connector)
                        .copied(),
                    _ => None,
                });
                match keep {
                    Some(c) => Plan::Choose(vec![c]),
                    None => Plan::Choose(cands.clone()),
                }
            }
            Plan::Choose(c) => Plan::Choose(c.clone()),
            Plan::Free(t) => Plan::Free(t.clone()),
        })
        .collect();

    let any_pinned = pinned
        .iter()
        .zip(&plans)
        .any(|(p, q)| matches!((p, q), (Plan::Choose(a), Plan::Choose(b)) if a.len() != b.len()));

    let (mut ok, mut chosen, mut deepest) = attempt(requirements, pinned);
    let mut reshuffled = false;
    if !ok && any_pinned {
        (ok, chosen, deepest) = attempt(requirements, plans);
        reshuffled = ok;
    }

    if !ok {
        let (k, conflicts) = deepest.unwrap_or((0, Vec::new()));
        let mut rejected = static_rejections[k].clone();
        rejected.extend(conflicts);
        let order: Vec<&str> = stand.resources.ids().collect();
        rejected.sort_by_key(|(id, _)| order.iter().position(|o| o == id));
        return Err(AllocationError {
            requirement: requirements[k].clone(),
            rejected,
        });
    }

    let bindings = requirements
        .iter()
        .enumerate()
        .map(|(k, req)| {
            let target = if stand.is_bus_method(&req.method) {
                Target::Bus
            } else if req.is_open_circuit() {
                Target::OpenCircuit
            } else {
                let c = chosen[k].expect("search assigned every resource requirement");
                Target::Resource {
                    resource: c.resource.to_string(),
                    connector: c.connector,
                }
            };
            Binding {
                requirement: req.clone(),
                target,
            }
        })
        .collect();
    Ok(Allocation {
        bindings,
        reshuffled,
    })
}

/// Verifies an allocation against the stand from scratch, pair by pair.
/// Returns every violated constraint.
pub fn check_allocation(
    requirements: &[Requirement],
    stand: &StandModel,
    allocation: &Allocation,
) -> Result<(), Vec<String>> {
    let mut problems = Vec::new();
    if allocation.bindings.len() != requirements.len() {
        problems.push(format!(
            "{} bindings for {} requirements",
            allocation.bindings.len(),
            requirements.len()
        ));
        return Err(problems);
    }

    for (req, b) in requirements.iter().zip(&allocation.bindings) {
        if b.requirement != *req {
            problems.push(format!(
                "binding for {} does not match {}",
                b.requirement, req
            ));
            continue;
        }
        let bus = stand.bus_methods.contains(&req.method);
        let open = req.method.starts_with("put_")
            && req
                .params
                .iter()
                .find(|(n, _)| !matches!(n.as_str(), "d1" | "d2" | "d3"))
                .is_some_and(|(_, v)| *v == Resolved::Inf);
        match (&b.target, bus, open) {
            (Target::Bus, true, _) => {}
            (Target::OpenCircuit, false, true) => {}
            (
                Target::Resource {
                    resource,
                    connector,
                },
                false,
                false,
            ) => {
                if stand.matrix.connector(resource, &req.pin) != Some(*connector) {
                    problems.push(format!(
                        "{req}: {resource} does not reach the pin via {connector}"
                    ));
                }
                let fits = stand.resources.resources.iter().any(|row| {
                    if row.id != *resource || row.method != req.method {
                        return false;
                    }
                    let a = row.attribut.to_lowercase();
                    req.params.iter().all(|(name, v)| {
                        let bounded = name == &a
                            || name == &format!("{a}_min")
                            || name == &format!("{a}_max");
                        match v {
                            Resolved::Number(x) if bounded => row.min <= *x && *x <= row.max,
                            _ => true,
                        }
                    })
                });
                if !fits {
                    problems.push(format!("{req}: {resource} lacks the method or the range"));
                }
            }
            (t, _, _) => problems.push(format!("{req}: wrong kind of target {t}")),
        }
    }

    let engaged: Vec<(usize, &str, Connector, bool)> = allocation
        .bindings
        .iter()
        .enumerate()
        .filter_map(|(i, b)| match &b.target {
            Target::Resource {
                resource,
                connector,
            } => Some((
                i,
                resource.as_str(),
                *connector,
                b.requirement.method.starts_with("get_"),
            )),
            _ => None,
        })
        .collect();
    for (x, &(i, ra, ca, check_a)) in engaged.iter().enumerate() {
        for &(j, rb, cb, check_b) in &engaged[x + 1..] {
            if check_a && check_b {
                continue;
            }
            if ra == rb {
                problems.push(format!("bindings {i} and {j} share resource {ra}"));
            }
            if ca.kind == cb.kind && ca.group == cb.group {
                problems.push(format!(
                    "bindings {i} and {j} share connector group of {ca}"
                ));
            }
        }
    }

    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems)
    }
}
