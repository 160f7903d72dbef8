//! Interpreter side: load an XML test script into an executable plan.
//!
//! Expressions are parsed eagerly, so a script can be fully checked without
//! a stand; they are evaluated only at execution time. Methods are not
//! checked against any catalogue here: whether a stand can carry them out is
//! decided during allocation.

use std::collections::HashSet;

use indexmap::IndexMap;
use roxmltree::{Document, Node};
use thiserror::Error;

use crate::compiler::{
    MethodInvocation, ParamValue, ScriptHeader, ScriptInit, ScriptSignal, ScriptStep, Statement,
    TestScript, FORMAT_VERSION,
};
use crate::expr::parse_expr;
use crate::sheet_model::{Direction, Dwell, MethodClass};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct LoadError {
    pub line: usize,
    pub message: String,
}

/// A loaded script plus what the interpreter derives from it.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPlan {
    pub script: TestScript,
    /// Per step: every stimulus in force once the step's statements are
    /// applied (init and earlier steps carried forward), in manifest order.
    pub stimuli: Vec<Vec<Statement>>,
    /// Per step: the checks sampled at the end of its dwell.
    pub checks: Vec<Vec<Statement>>,
}

pub fn is_check(inv: &MethodInvocation) -> bool {
    inv.class() == Some(MethodClass::Get)
}

impl TestPlan {
    pub fn from_script(script: TestScript) -> Self {
        let mut stimuli = Vec::with_capacity(script.steps.len());
        let mut checks = Vec::with_capacity(script.steps.len());
        {
            let order: IndexMap<&str, usize> = script
                .header
                .signals
                .iter()
                .enumerate()
                .map(|(i, s)| (s.name.as_str(), i))
                .collect();
            let rank = |s: &Statement| order.get(s.signal.as_str()).copied().unwrap_or(usize::MAX);

            let mut active: IndexMap<String, Statement> = IndexMap::new();
            for st in &script.init.statements {
                active.insert(st.signal.clone(), st.clone());
            }
            for step in &script.steps {
                let mut step_checks = Vec::new();
                for st in &step.statements {
                    if is_check(&st.invocation) {
                        step_checks.push(st.clone());
                    } else {
                        active.insert(st.signal.clone(), st.clone());
                    }
                }
                let mut current: Vec<Statement> = active.values().cloned().collect();
                current.sort_by_key(rank);
                stimuli.push(current);
                checks.push(step_checks);
            }
        }
        Self {
            script,
            stimuli,
            checks,
        }
    }

    pub fn step_count(&self) -> usize {
        self.script.steps.len()
    }
}

struct Loader<'a> {
    doc: &'a Document<'a>,
}

impl<'a> Loader<'a> {
    fn line(&self, node: Node) -> usize {
        self.doc.text_pos_at(node.range().start).row as usize
    }

    fn err<T>(&self, node: Node, message: impl Into<String>) -> Result<T, LoadError> {
        Err(LoadError {
            line: self.line(node),
            message: message.into(),
        })
    }

    fn attr<'n>(&self, node: Node<'n, 'n>, name: &str) -> Result<&'n str, LoadError> {
        match node.attribute(name) {
            Some(v) => Ok(v),
            None => self.err(
                node,
                format!("<{}> is missing attribute {name}", node.tag_name().name()),
            ),
        }
    }

    fn only_attrs(&self, node: Node, allowed: &[&str]) -> Result<(), LoadError> {
        for a in node.attributes() {
            if !allowed.contains(&a.name()) {
                return self.err(
                    node,
                    format!(
                        "unexpected attribute {} on <{}>",
                        a.name(),
                        node.tag_name().name()
                    ),
                );
            }
        }
        Ok(())
    }

    /// Element children; stray text is a schema violation.
    fn children<'n>(&self, node: Node<'n, 'n>) -> Result<Vec<Node<'n, 'n>>, LoadError> {
        let mut out = Vec::new();
        for child in node.children() {
            if child.is_element() {
                out.push(child);
            } else if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
                return self.err(child, "unexpected text content");
            }
        }
        Ok(out)
    }

    fn dwell(&self, node: Node, name: &str, allow_zero: bool) -> Result<Dwell, LoadError> {
        let text = self.attr(node, name)?;
        let secs = parse_plain_number(text);
        match secs.and_then(Dwell::from_secs_f64) {
            Some(d) if allow_zero || (!d.is_zero() && secs.unwrap() > 0.0) => Ok(d),
            _ => self.err(node, format!("invalid {name} {text:?}")),
        }
    }

    fn header(&self, root: Node) -> Result<ScriptHeader, LoadError> {
        if root.tag_name().name() != "test" {
            return self.err(
                root,
                format!(
                    "root element must be <test>, found <{}>",
                    root.tag_name().name()
                ),
            );
        }
        self.only_attrs(root, &["name", "dut", "format"])?;
        let format = self.attr(root, "format")?;
        if format != FORMAT_VERSION.to_string() {
            return self.err(root, format!("unsupported format {format:?}"));
        }
        Ok(ScriptHeader {
            name: self.attr(root, "name")?.to_string(),
            dut: self.attr(root, "dut")?.to_string(),
            format: FORMAT_VERSION,
            signals: Vec::new(),
        })
    }

    fn signals(&self, node: Node) -> Result<Vec<ScriptSignal>, LoadError> {
        self.only_attrs(node, &[])?;
        let mut out: Vec<ScriptSignal> = Vec::new();
        for def in self.children(node)? {
            if def.tag_name().name() != "signal_def" {
                return self.err(def, format!("unknown element <{}>", def.tag_name().name()));
            }
            self.only_attrs(def, &["name", "direction", "pins"])?;
            let name = self.attr(def, "name")?;
            if out.iter().any(|s| s.name == name) {
                return self.err(def, format!("duplicate signal {name}"));
            }
            let direction = Direction::parse(self.attr(def, "direction")?)
                .map_or_else(|| self.err(def, "direction must be input or output"), Ok)?;
            let pins: Vec<String> = self
                .attr(def, "pins")?
                .split('|')
                .map(str::to_string)
                .collect();
            if pins.iter().any(|p| p.is_empty()) {
                return self.err(def, "empty pin name");
            }
            out.push(ScriptSignal {
                name: name.to_string(),
                direction,
                pins,
            });
        }
        Ok(out)
    }

    fn statements(&self, block: Node, header: &ScriptHeader) -> Result<Vec<Statement>, LoadError> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        for node in self.children(block)? {
            if node.tag_name().name() != "signal" {
                return self.err(
                    node,
                    format!("unknown element <{}>", node.tag_name().name()),
                );
            }
            self.only_attrs(node, &["name"])?;
            let signal = self.attr(node, "name")?;
            let Some(def) = header.signal(signal) else {
                return self.err(node, format!("signal {signal} is not in the manifest"));
            };
            if !seen.insert(signal) {
                return self.err(node, format!("signal {signal} appears twice in one block"));
            }
            let methods = self.children(node)?;
            let [method] = methods.as_slice() else {
                return self.err(node, "a signal statement needs exactly one method element");
            };
            if !self.children(*method)?.is_empty() {
                return self.err(*method, "method elements take no children");
            }
            let mut inv = MethodInvocation::new(method.tag_name().name());
            for a in method.attributes() {
                let value = self.param_value(*method, a.name(), a.value())?;
                inv.params.push((a.name().to_string(), value));
            }
            if let Some(class) = inv.class() {
                if class != def.direction.expected_class() {
                    return self.err(
                        *method,
                        format!(
                            "{} signal {signal} cannot take {}",
                            def.direction, inv.method
                        ),
                    );
                }
            }
            out.push(Statement {
                signal: signal.to_string(),
                invocation: inv,
            });
        }
        Ok(out)
    }

    fn param_value(&self, node: Node, name: &str, text: &str) -> Result<ParamValue, LoadError> {
        if text.starts_with('(') {
            return parse_expr(text).map(ParamValue::Expr).or_else(|e| {
                self.err(node, format!("attribute {name}: malformed expression: {e}"))
            });
        }
        if text.eq_ignore_ascii_case("inf") {
            return Ok(ParamValue::Inf);
        }
        Ok(match parse_plain_number(text) {
            Some(n) => ParamValue::Number(n),
            None => ParamValue::Text(text.to_string()),
        })
    }
}

/// Locale-free number: `[+-]digits[.digits][e[+-]digits]`.
fn parse_plain_number(text: &str) -> Option<f64> {
    let b = text.as_bytes();
    let mut i = 0;
    if matches!(b.first(), Some(b'+' | b'-')) {
        i += 1;
    }
    let start = i;
    while i < b.len() && b[i].is_ascii_digit() {
        i += 1;
    }
    if i == start {
        return None;
    }
    if i < b.len() && b[i] == b'.' {
        i += 1;
        let s = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == s {
            return None;
        }
    }
    if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
        i += 1;
        if matches!(b.get(i), Some(b'+' | b'-')) {
            i += 1;
        }
        let s = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        if i == s {
            return None;
        }
    }
    if i != b.len() {
        return None;
    }
    text.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses and validates a script, then derives the carry-forward plan.
pub fn load_script(text: &str) -> Result<TestPlan, LoadError> {
    let doc = Document::parse(text).map_err(|e| LoadError {
        line: e.pos().row as usize,
        message: format!("malformed XML: {e}"),
    })?;
    let loader = Loader { doc: &doc };
    let root = doc.root_element();
    let mut header = loader.header(root)?;

    let children = loader.children(root)?;
    let mut iter = children.into_iter().peekable();
    match iter.next() {
        Some(n) if n.tag_name().name() == "signals" => header.signals = loader.signals(n)?,
        Some(n) => return loader.err(n, "expected <signals> as the first child of <test>"),
        None => return loader.err(root, "missing <signals>"),
    }

    let mut init = ScriptInit {
        settle: Dwell::default(),
        statements: Vec::new(),
    };
    if let Some(n) = iter
        .peek()
        .copied()
        .filter(|n| n.tag_name().name() == "init")
    {
        iter.next();
        loader.only_attrs(n, &["settle"])?;
        init.settle = loader.dwell(n, "settle", true)?;
        init.statements = loader.statements(n, &header)?;
        if let Some(st) = init.statements.iter().find(|s| is_check(&s.invocation)) {
            return loader.err(
                n,
                format!(
                    "init may only apply stimuli, found {} on {}",
                    st.invocation.method, st.signal
                ),
            );
        }
    }

    let mut steps = Vec::new();
    for node in iter {
        if node.tag_name().name() != "step" {
            return loader.err(
                node,
                format!("unknown element <{}>", node.tag_name().name()),
            );
        }
        loader.only_attrs(node, &["n", "dt", "remark"])?;
        let n_text = loader.attr(node, "n")?;
        let index: usize = n_text.parse().map_or_else(
            |_| loader.err(node, format!("invalid step index {n_text:?}")),
            Ok,
        )?;
        if index != steps.len() {
            return loader.err(
                node,
                format!("non-dense step index {index}, expected {}", steps.len()),
            );
        }
        steps.push(ScriptStep {
            index,
            dt: loader.dwell(node, "dt", false)?,
            remark: node.attribute("remark").map(str::to_string),
            statements: loader.statements(node, &header)?,
        });
    }
    if steps.is_empty() {
        return loader.err(root, "script has no steps");
    }

    Ok(TestPlan::from_script(TestScript {
        header,
        init,
        steps,
    }))
}
