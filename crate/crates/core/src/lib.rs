//! Stand-independent component testing.
//!
//! Tests are authored as three tables (signals, statuses, test steps),
//! compiled into a portable XML script, and executed by an interpreter on a
//! test stand that knows its own resources and wiring:
//!
//! ```text
//! CSV sheets ──ingest──▶ sheet_model ──compiler──▶ XML script
//!                                                     │
//!           stand CSVs + env ──▶ teststand ◀──script──┘
//!                                   │
//!                                   ▼
//!                               RunReport
//! ```

pub mod cli;
pub mod compiler;
pub mod expr;
pub mod ingest;
pub mod script;
pub mod sheet_model;
pub mod teststand;

pub use compiler::{compile, emit_xml, lower_status, CompileOptions, TestScript};
pub use expr::{eval_expr, parse_expr, render_expr, Env, Expr};
pub use ingest::CsvDialect;
pub use script::{load_script, TestPlan};
pub use sheet_model::{expand_holds, validate_sheets};
pub use teststand::{allocate, execute, StandModel};
