use std::collections::HashSet;

use super::{cell, check_identifier, opt_cell, parse_number_cell, CsvDialect, IngestError, Table};
use crate::sheet_model::normalize_method;
use crate::teststand::{ConnectionMatrix, Connector, ResourceDef, ResourceTable};

pub fn parse_resource_sheet(
    text: &str,
    dialect: &CsvDialect,
) -> Result<ResourceTable, IngestError> {
    let table = Table::read(text, dialect)?;
    let cols = table.columns(
        &[
            &["res", "resource", "id"],
            &["method"],
            &["attribut", "attribute"],
            &["min"],
            &["max"],
        ],
        &[&["unit"]],
    )?;
    let header = |i: usize| table.header[cols[i].unwrap()].as_str();

    let mut resources = Vec::new();
    for (line, cells) in &table.rows {
        let line = *line;
        let get = |i: usize| cell(cells, cols[i].unwrap());
        check_identifier(get(0), line, header(0))?;
        let method = normalize_method(get(1));
        if method.is_empty() {
            return Err(IngestError::new(line, header(1), "empty method"));
        }
        let min = parse_number_cell(dialect, get(3), line, header(3))?;
        let max = parse_number_cell(dialect, get(4), line, header(4))?;
        if min > max {
            return Err(IngestError::new(
                line,
                header(3),
                format!("min {min} exceeds max {max}"),
            ));
        }
        resources.push(ResourceDef {
            id: get(0).to_string(),
            method,
            attribut: get(2).to_string(),
            min,
            max,
            unit: opt_cell(cells, cols[5]).unwrap_or("").to_string(),
        });
    }
    Ok(ResourceTable::new(resources))
}

/// Reads a connection matrix: the header row lists pins (its first cell is
/// ignored), each data row starts with a resource id followed by one
/// connector cell per pin. Empty cells mean "not connected".
pub fn parse_connection_sheet(
    text: &str,
    dialect: &CsvDialect,
) -> Result<ConnectionMatrix, IngestError> {
    let table = Table::read(text, dialect)?;
    let pins: Vec<String> = table.header.iter().skip(1).cloned().collect();
    let mut seen = HashSet::new();
    for (i, p) in pins.iter().enumerate() {
        check_identifier(p, 1, &format!("#{}", i + 2))?;
        if !seen.insert(p) {
            return Err(IngestError::new(1, p, format!("duplicate pin column {p}")));
        }
    }
    let first = table.header.first().cloned().unwrap_or_default();

    let mut matrix = ConnectionMatrix::new(Vec::new(), pins.clone());
    for (line, cells) in &table.rows {
        let line = *line;
        let resource = cell(cells, 0);
        check_identifier(resource, line, &first)?;
        if matrix.resources.iter().any(|r| r == resource) {
            return Err(IngestError::new(
                line,
                &first,
                format!("duplicate resource row {resource}"),
            ));
        }
        matrix.resources.push(resource.to_string());
        for (i, pin) in pins.iter().enumerate() {
            let text = cell(cells, i + 1);
            if text.is_empty() {
                continue;
            }
            let connector: Connector =
                text.parse()
                    .map_err(|e: crate::teststand::ConnectorParseError| {
                        IngestError::new(line, pin, e.to_string())
                    })?;
            matrix.connect(resource, pin, connector);
        }
    }
    Ok(matrix)
}
