//! Command-line front end.
//!
//! Exit codes: 0 pass, 1 test or validation failure, 2 usage, I/O, load,
//! environment or allocation error. Diagnostics go to stderr; scripts and
//! reports go to `--out` or stdout.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::compiler::{compile, emit_xml, CompileError, CompileOptions};
use crate::expr::Env;
use crate::ingest::{
    parse_connection_sheet, parse_resource_sheet, parse_signal_sheet, parse_status_sheet,
    parse_test_sheet, CsvDialect,
};
use crate::script::load_script;
use crate::sheet_model::{validate_sheets, Dwell, SignalTable, StatusTable, TestSequence};
use crate::teststand::{build_dut, execute, DutOptions, ExecOptions, StandModel, Verdict};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "comptest",
    version,
    about = "Compile and run stand-independent component tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the signal, status and test sheets
    Check(SheetArgs),
    /// Compile the sheets into an XML test script
    Compile(CompileArgs),
    /// Execute a script on a stand against a simulated DUT
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct SheetArgs {
    #[arg(long)]
    pub signals: PathBuf,
    #[arg(long)]
    pub statuses: PathBuf,
    /// Test sheet; the test is named after the file
    #[arg(long)]
    pub test: PathBuf,
    /// CSV dialect overrides, e.g. `field=;,decimal=.`
    #[arg(long)]
    pub dialect: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    #[command(flatten)]
    pub sheets: SheetArgs,
    /// Output file; stdout if omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// DUT name written into the script header
    #[arg(long, default_value = "dut")]
    pub dut_name: String,
    /// Settling dwell after the initial stimuli, in seconds
    #[arg(long, default_value_t = 0.1)]
    pub settle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub resources: PathBuf,
    #[arg(long)]
    pub connections: PathBuf,
    /// `key=value` per line, e.g. `ubatt=12.0`
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// DUT model; defaults to the script's dut attribute
    #[arg(long)]
    pub dut: Option<String>,
    #[arg(long)]
    pub timeout_s: Option<f64>,
    #[arg(long)]
    pub door_threshold_ohm: Option<f64>,
    /// A newly opened door does not restart the lamp timer
    #[arg(long)]
    pub no_retrigger: bool,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub report: ReportFormat,
    /// Report file; stdout if omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sleep through each dwell in real time
    #[arg(long)]
    pub pace: bool,
    /// CSV dialect overrides for the stand files
    #[arg(long)]
    pub dialect: Option<String>,
}

/// A failure that maps onto an exit code.
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn error(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_ERROR,
            message: message.into(),
        }
    }
}

type Outcome = Result<i32, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn dialect(spec: Option<&str>) -> Result<CsvDialect, Failure> {
    let d = CsvDialect::default();
    match spec {
        Some(s) => d
            .with_overrides(s)
            .map_err(|e| Failure::error(e.to_string())),
        None => Ok(d),
    }
}

fn parse_file<T, E: std::fmt::Display>(
    path: &Path,
    parse: impl FnOnce(&str) -> Result<T, E>,
) -> Result<T, Failure> {
    let text = read(path)?;
    parse(&text).map_err(|e| Failure::error(format!("{}: {e}", path.display())))
}

fn load_sheets(args: &SheetArgs) -> Result<(SignalTable, StatusTable, TestSequence), Failure> {
    let d = dialect(args.dialect.as_deref())?;
    let signals = parse_file(&args.signals, |t| parse_signal_sheet(t, &d))?;
    let statuses = parse_file(&args.statuses, |t| parse_status_sheet(t, &d))?;
    let mut test = parse_file(&args.test, |t| parse_test_sheet(t, &d))?;
    if let Some(stem) = args.test.file_stem() {
        test.name = stem.to_string_lossy().into_owned();
    }
    Ok((signals, statuses, test))
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::error(format!("{}: {e}", p.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Failure::error(e.to_string())),
    }
}

fn cmd_check(args: &SheetArgs, stdout: &mut dyn Write) -> Outcome {
    let (signals, statuses, test) = load_sheets(args)?;
    let report = validate_sheets(&signals, &statuses, &test);
    emit(None, &format!("{report}\n"), stdout)?;
    Ok(if report.is_empty() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    })
}

fn cmd_compile(args: &CompileArgs, stdout: &mut dyn Write) -> Outcome {
    let (signals, statuses, test) = load_sheets(&args.sheets)?;
    let settle = Dwell::from_secs_f64(args.settle)
        .ok_or_else(|| Failure::error(format!("invalid settle time {}", args.settle)))?;
    let options = CompileOptions {
        dut: args.dut_name.clone(),
        settle,
    };
    let script = compile(&signals, &statuses, &test, &options).map_err(|e| Failure {
        code: match e {
            CompileError::Invalid(_) => EXIT_FAIL,
            CompileError::Binding { .. } => EXIT_ERROR,
        },
        message: e.to_string(),
    })?;
    emit(args.out.as_deref(), &emit_xml(&script), stdout)?;
    Ok(EXIT_PASS)
}

fn cmd_run(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Outcome {
    let plan = parse_file(&args.script, load_script)?;
    let d = dialect(args.dialect.as_deref())?;
    let resources = parse_file(&args.resources, |t| parse_resource_sheet(t, &d))?;
    let matrix = parse_file(&args.connections, |t| parse_connection_sheet(t, &d))?;
    let stand = StandModel::new(resources, matrix).map_err(|e| Failure::error(e.to_string()))?;
    let env = match &args.env {
        Some(p) => parse_file(p, Env::parse)?,
        None => Env::new(),
    };
    let name = args.dut.as_deref().unwrap_or(&plan.script.header.dut);
    let options = DutOptions {
        timeout_s: args.timeout_s,
        r_door_threshold_ohm: args.door_threshold_ohm,
        retrigger: args.no_retrigger.then_some(false),
    };
    let mut dut = build_dut(name, &options, &env).map_err(|e| Failure::error(e.to_string()))?;

    let report = execute(
        &plan,
        &stand,
        &env,
        dut.as_mut(),
        ExecOptions { pace: args.pace },
    );
    let text = match args.report {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Json => report.to_json() + "\n",
    };
    emit(args.out.as_deref(), &text, stdout)?;
    if let Some(a) = &report.abort {
        let at = a.step.map_or("init".to_string(), |s| format!("step {s}"));
        return Err(Failure::error(format!("aborted at {at}: {}", a.message)));
    }
    for (step, c) in report.failed_checks() {
        let _ = writeln!(
            stderr,
            "step {step}: {} {} on {} measured {}",
            c.method, c.signal, c.pin, c.measured
        );
    }
    Ok(match report.verdict {
        Verdict::Pass => EXIT_PASS,
        Verdict::Fail => EXIT_FAIL,
    })
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                EXIT_ERROR
            } else {
                EXIT_PASS
            };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Check(a) => cmd_check(a, stdout),
        Command::Compile(a) => cmd_compile(a, stdout),
        Command::Run(a) => cmd_run(a, stdout, stderr),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}
