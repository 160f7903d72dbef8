use super::{CsvDialect, PIN_SEPARATOR};
use crate::sheet_model::{CellValue, SignalTable, StatusTable, TestSequence};
use crate::teststand::{ConnectionMatrix, ResourceTable};

fn write_rows(dialect: &CsvDialect, rows: Vec<Vec<String>>) -> String {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(dialect.field_separator as u8)
        .flexible(true)
        .from_writer(Vec::new());
    for row in rows {
        writer.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("flush to memory")).expect("utf-8 input")
}

fn value(dialect: &CsvDialect, v: &Option<CellValue>) -> String {
    match v {
        None => String::new(),
        Some(CellValue::Inf) => "INF".to_string(),
        Some(CellValue::Bits(b)) => b.clone(),
        Some(CellValue::Number(n)) => dialect.format_number(*n),
    }
}

fn number(dialect: &CsvDialect, v: Option<f64>) -> String {
    v.map(|n| dialect.format_number(n)).unwrap_or_default()
}

pub fn write_status_sheet(table: &StatusTable, dialect: &CsvDialect) -> String {
    let header = [
        "status", "method", "attribut", "var (x)", "nom", "min", "max", "D 1", "D 2", "D 3", "unit",
    ];
    let mut rows = vec![header.iter().map(|h| h.to_string()).collect()];
    for s in &table.statuses {
        rows.push(vec![
            s.status.clone(),
            s.method.clone(),
            s.attribut.clone(),
            s.var_x.clone().unwrap_or_default(),
            value(dialect, &s.nom),
            number(dialect, s.min),
            number(dialect, s.max),
            value(dialect, &s.d[0]),
            value(dialect, &s.d[1]),
            value(dialect, &s.d[2]),
            s.unit.clone().unwrap_or_default(),
        ]);
    }
    write_rows(dialect, rows)
}

pub fn write_test_sheet(test: &TestSequence, dialect: &CsvDialect) -> String {
    let mut header = vec!["test step".to_string(), "Δt".to_string()];
    header.extend(test.columns.iter().cloned());
    header.push("remarks".to_string());
    let mut rows = vec![header];
    for step in &test.steps {
        let mut row = vec![
            step.index.to_string(),
            dialect.format_number(step.dt.as_secs_f64()),
        ];
        row.extend(
            test.columns
                .iter()
                .map(|c| step.assignments.get(c).cloned().unwrap_or_default()),
        );
        row.push(step.remark.clone().unwrap_or_default());
        rows.push(row);
    }
    write_rows(dialect, rows)
}

pub fn write_signal_sheet(table: &SignalTable, dialect: &CsvDialect) -> String {
    let mut rows = vec![["name", "direction", "pins", "initial_status"]
        .iter()
        .map(|h| h.to_string())
        .collect()];
    for s in &table.signals {
        rows.push(vec![
            s.name.clone(),
            s.direction.to_string(),
            s.pins.join(&PIN_SEPARATOR.to_string()),
            s.initial_status.clone(),
        ]);
    }
    write_rows(dialect, rows)
}

pub fn write_resource_sheet(table: &ResourceTable, dialect: &CsvDialect) -> String {
    let mut rows = vec![["Res.", "Method", "Attribut", "Min", "Max", "Unit"]
        .iter()
        .map(|h| h.to_string())
        .collect()];
    for r in &table.resources {
        rows.push(vec![
            r.id.clone(),
            r.method.clone(),
            r.attribut.clone(),
            dialect.format_number(r.min),
            dialect.format_number(r.max),
            r.unit.clone(),
        ]);
    }
    write_rows(dialect, rows)
}

pub fn write_connection_sheet(matrix: &ConnectionMatrix, dialect: &CsvDialect) -> String {
    let mut header = vec![String::new()];
    header.extend(matrix.pins.iter().cloned());
    let mut rows = vec![header];
    for r in &matrix.resources {
        let mut row = vec![r.clone()];
        row.extend(matrix.pins.iter().map(|p| {
            matrix
                .connector(r, p)
                .map(|c| c.to_string())
                .unwrap_or_default()
        }));
        rows.push(row);
    }
    write_rows(dialect, rows)
}
