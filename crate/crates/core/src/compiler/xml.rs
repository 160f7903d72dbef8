use std::fmt::Write;

use super::{ParamValue, Statement, TestScript};
use crate::expr::{format_number, render_expr};

const INDENT: &str = "  ";

/// Escapes text for a double-quoted attribute. Whitespace control characters
/// are written as character references so they survive attribute-value
/// normalization.
pub fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            '\t' => out.push_str("&#9;"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn param_text(v: &ParamValue) -> String {
    match v {
        ParamValue::Number(n) => format_number(*n),
        ParamValue::Inf => "INF".to_string(),
        ParamValue::Text(t) => t.clone(),
        ParamValue::Expr(e) => {
            let text = render_expr(e);
            // scripts mark symbolic values with a leading parenthesis
            if text.starts_with('(') {
                text
            } else {
                format!("({text})")
            }
        }
    }
}

fn write_statement(out: &mut String, depth: usize, st: &Statement) {
    let ind = INDENT.repeat(depth);
    let _ = writeln!(out, "{ind}<signal name=\"{}\">", escape_attr(&st.signal));
    let _ = write!(out, "{ind}{INDENT}<{}", st.invocation.method);
    for (name, value) in &st.invocation.params {
        let _ = write!(out, " {name}=\"{}\"", escape_attr(&param_text(value)));
    }
    out.push_str(" />\n");
    let _ = writeln!(out, "{ind}</signal>");
}

fn write_block(out: &mut String, open: &str, close: &str, statements: &[Statement]) {
    if statements.is_empty() {
        let _ = writeln!(out, "{INDENT}{open} />");
        return;
    }
    let _ = writeln!(out, "{INDENT}{open}>");
    for st in statements {
        write_statement(out, 2, st);
    }
    let _ = writeln!(out, "{INDENT}</{close}>");
}

/// Serializes a script. Output is byte-stable: two-space indentation,
/// attributes in a fixed order, invocation parameters in their stored
/// order.
pub fn emit_xml(script: &TestScript) -> String {
    let h = &script.header;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        "<test name=\"{}\" dut=\"{}\" format=\"{}\">",
        escape_attr(&h.name),
        escape_attr(&h.dut),
        h.format
    );

    let _ = writeln!(out, "{INDENT}<signals>");
    for s in &h.signals {
        let _ = writeln!(
            out,
            "{INDENT}{INDENT}<signal_def name=\"{}\" direction=\"{}\" pins=\"{}\" />",
            escape_attr(&s.name),
            s.direction,
            escape_attr(&s.pins.join("|"))
        );
    }
    let _ = writeln!(out, "{INDENT}</signals>");

    write_block(
        &mut out,
        &format!("<init settle=\"{}\"", script.init.settle),
        "init",
        &script.init.statements,
    );

    for step in &script.steps {
        let mut open = format!("<step n=\"{}\" dt=\"{}\"", step.index, step.dt);
        if let Some(remark) = &step.remark {
            let _ = write!(open, " remark=\"{}\"", escape_attr(remark));
        }
        write_block(&mut out, &open, "step", &step.statements);
    }
    out.push_str("</test>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile, CompileOptions};
    use crate::sheet_model::example;

    fn example_xml() -> String {
        let script = compile(
            &example::signals(),
            &example::statuses(),
            &example::test(),
            &CompileOptions::default(),
        )
        .unwrap();
        emit_xml(&script)
    }

    #[test]
    fn contains_high_check_fragment() {
        let xml = example_xml();
        let fragment = "<signal name=\"int_ill\">\n  <get_u u_max=\"(1.1*ubatt)\" u_min=\"(0.7*ubatt)\" />\n</signal>";
        let indented: String = fragment.lines().map(|l| format!("    {l}\n")).collect();
        assert!(xml.contains(&indented), "{xml}");
    }

    #[test]
    fn closed_door_statement() {
        let xml = example_xml();
        assert!(xml.contains(
            "    <signal name=\"ds_fl\">\n      <put_r r=\"INF\" d1=\"INF\" d2=\"5000\" d3=\"5000\" />\n    </signal>\n"
        ));
    }

    #[test]
    fn header_and_steps() {
        let xml = example_xml();
        assert!(xml.starts_with(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<test name=\"interior_illumination\" dut=\"dut\" format=\"1\">\n"
        ));
        assert!(xml.contains(
            "<signal_def name=\"int_ill\" direction=\"output\" pins=\"INT_ILL_F|INT_ILL_R\" />"
        ));
        assert!(xml.contains("<init settle=\"0.1\">"));
        assert!(xml.contains("<step n=\"7\" dt=\"280\">"));
        assert!(xml.contains("<step n=\"1\" dt=\"0.5\" remark=\"illumination, if\">"));
        assert!(xml.ends_with("</test>\n"));
    }

    #[test]
    fn escaping() {
        assert_eq!(
            escape_attr("a<b & \"c\"\n"),
            "a&lt;b &amp; &quot;c&quot;&#10;"
        );
    }
}
