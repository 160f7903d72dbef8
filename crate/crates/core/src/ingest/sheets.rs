use std::collections::HashSet;

use indexmap::IndexMap;

use super::{
    cell, check_identifier, opt_cell, parse_number_cell, parse_value_cell, CsvDialect, IngestError,
    Table, PIN_SEPARATOR,
};
use crate::sheet_model::{
    normalize_method, Direction, Dwell, SignalDef, SignalTable, StatusDef, StatusTable,
    TestSequence, TestStep,
};

pub fn parse_status_sheet(text: &str, dialect: &CsvDialect) -> Result<StatusTable, IngestError> {
    let table = Table::read(text, dialect)?;
    let cols = table.columns(
        &[
            &["status"],
            &["method"],
            &["attribut", "attribute"],
            &["varx", "var"],
            &["nom"],
            &["min"],
            &["max"],
            &["d1"],
            &["d2"],
            &["d3"],
        ],
        &[&["unit"]],
    )?;
    let header = |i: usize| table.header[cols[i].unwrap()].as_str();

    let mut seen = HashSet::new();
    let mut statuses = Vec::new();
    for (line, cells) in &table.rows {
        let line = *line;
        let get = |i: usize| cell(cells, cols[i].unwrap());
        let num = |i: usize| -> Result<Option<f64>, IngestError> {
            match get(i) {
                "" => Ok(None),
                t => parse_number_cell(dialect, t, line, header(i)).map(Some),
            }
        };
        let value = |i: usize| match get(i) {
            "" => Ok(None),
            t => parse_value_cell(dialect, t, line, header(i)).map(Some),
        };

        let name = get(0);
        check_identifier(name, line, header(0))?;
        if !seen.insert(name.to_string()) {
            return Err(IngestError::new(
                line,
                header(0),
                format!("duplicate status {name}"),
            ));
        }
        let method = normalize_method(get(1));
        if method.is_empty() {
            return Err(IngestError::new(line, header(1), "empty method"));
        }
        let attribut = get(2);
        if attribut.is_empty() {
            return Err(IngestError::new(line, header(2), "empty attribut"));
        }
        statuses.push(StatusDef {
            status: name.to_string(),
            method,
            attribut: attribut.to_string(),
            var_x: Some(get(3)).filter(|v| !v.is_empty()).map(str::to_string),
            nom: value(4)?,
            min: num(5)?,
            max: num(6)?,
            d: [value(7)?, value(8)?, value(9)?],
            unit: opt_cell(cells, cols[10]).map(str::to_string),
        });
    }
    Ok(StatusTable::new(statuses))
}

/// Reads a test sheet. The first two columns are the step index and Δt; a
/// trailing `remarks` column is optional; every other column is a signal.
/// The sequence is named `test`; callers usually rename it after the file.
pub fn parse_test_sheet(text: &str, dialect: &CsvDialect) -> Result<TestSequence, IngestError> {
    let table = Table::read(text, dialect)?;
    let header = &table.header;
    if header.len() < 2 {
        return Err(IngestError::new(
            1,
            "",
            "expected at least the step and Δt columns",
        ));
    }
    let has_remarks = header.len() > 2
        && matches!(
            super::header_key(header.last().unwrap()).as_str(),
            "remarks" | "remark"
        );
    let signal_end = if has_remarks {
        header.len() - 1
    } else {
        header.len()
    };
    let columns: Vec<String> = header[2..signal_end].to_vec();
    let mut seen = HashSet::new();
    for (i, c) in columns.iter().enumerate() {
        check_identifier(c, 1, &format!("#{}", i + 3))?;
        if !seen.insert(c) {
            return Err(IngestError::new(
                1,
                c,
                format!("duplicate signal column {c}"),
            ));
        }
    }

    let mut steps = Vec::new();
    for (line, cells) in &table.rows {
        let line = *line;
        let index_text = cell(cells, 0);
        let index: usize = index_text.parse().map_err(|_| {
            IngestError::new(
                line,
                &header[0],
                format!("invalid step index {index_text:?}"),
            )
        })?;
        if index != steps.len() {
            return Err(IngestError::new(
                line,
                &header[0],
                format!("non-consecutive step index {index}"),
            ));
        }
        let dt_secs = parse_number_cell(dialect, cell(cells, 1), line, &header[1])?;
        let dt = Dwell::from_secs_f64(dt_secs)
            .filter(|d| !d.is_zero() && dt_secs > 0.0)
            .ok_or_else(|| {
                IngestError::new(
                    line,
                    &header[1],
                    format!("Δt must be positive, got {dt_secs}"),
                )
            })?;

        let mut assignments = IndexMap::new();
        for (c, name) in columns.iter().enumerate() {
            let status = cell(cells, c + 2);
            if status.is_empty() {
                continue;
            }
            check_identifier(status, line, name)?;
            assignments.insert(name.clone(), status.to_string());
        }
        let remark = has_remarks
            .then(|| cell(cells, signal_end))
            .filter(|r| !r.is_empty())
            .map(str::to_string);
        steps.push(TestStep {
            index,
            dt,
            assignments,
            remark,
        });
    }

    Ok(TestSequence {
        name: "test".to_string(),
        columns,
        steps,
    })
}

pub fn parse_signal_sheet(text: &str, dialect: &CsvDialect) -> Result<SignalTable, IngestError> {
    let table = Table::read(text, dialect)?;
    let cols = table.columns(
        &[
            &["name", "signal"],
            &["direction"],
            &["pins", "pin"],
            &["initialstatus", "initial"],
        ],
        &[],
    )?;
    let header = |i: usize| table.header[cols[i].unwrap()].as_str();

    let mut seen = HashSet::new();
    let mut signals = Vec::new();
    for (line, cells) in &table.rows {
        let line = *line;
        let get = |i: usize| cell(cells, cols[i].unwrap());
        let name = get(0);
        check_identifier(name, line, header(0))?;
        if !seen.insert(name.to_string()) {
            return Err(IngestError::new(
                line,
                header(0),
                format!("duplicate signal {name}"),
            ));
        }
        let direction = Direction::parse(get(1)).ok_or_else(|| {
            IngestError::new(
                line,
                header(1),
                format!("direction must be input or output, got {:?}", get(1)),
            )
        })?;
        let pins: Vec<String> = get(2)
            .split(PIN_SEPARATOR)
            .map(|p| p.trim().to_string())
            .collect();
        for p in &pins {
            check_identifier(p, line, header(2))?;
        }
        let initial_status = get(3);
        check_identifier(initial_status, line, header(3))?;
        signals.push(SignalDef {
            name: name.to_string(),
            direction,
            pins,
            initial_status: initial_status.to_string(),
        });
    }
    Ok(SignalTable::new(signals))
}
