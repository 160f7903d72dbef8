#![allow(dead_code)]

use std::path::PathBuf;

use comptest::compiler::{compile, emit_xml, CompileOptions};
use comptest::expr::{BinOp, Expr};
use comptest::ingest::{
    parse_connection_sheet, parse_resource_sheet, parse_signal_sheet, parse_status_sheet,
    parse_test_sheet, CsvDialect,
};
use comptest::sheet_model::{
    CellValue, Direction, Dwell, SignalDef, SignalTable, StatusDef, StatusTable, TestSequence,
    TestStep,
};
use comptest::teststand::{
    ConnectionMatrix, Connector, Requirement, Resolved, ResourceDef, ResourceTable, StandModel,
    Target,
};
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/interior_illumination")
}

pub fn fixture(name: &str) -> PathBuf {
    fixture_dir().join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub struct Sheets {
    pub signals: SignalTable,
    pub statuses: StatusTable,
    pub test: TestSequence,
}

/// The example sheets as read from the comma-decimal fixture files.
pub fn fixture_sheets() -> Sheets {
    let d = CsvDialect::default();
    let mut test = parse_test_sheet(&read_fixture("interior_illumination.csv"), &d).unwrap();
    test.name = "interior_illumination".into();
    Sheets {
        signals: parse_signal_sheet(&read_fixture("signals.csv"), &d).unwrap(),
        statuses: parse_status_sheet(&read_fixture("statuses.csv"), &d).unwrap(),
        test,
    }
}

pub fn fixture_stand() -> StandModel {
    let d = CsvDialect::default();
    StandModel::new(
        parse_resource_sheet(&read_fixture("resources.csv"), &d).unwrap(),
        parse_connection_sheet(&read_fixture("connections.csv"), &d).unwrap(),
    )
    .unwrap()
}

pub fn compile_options() -> CompileOptions {
    CompileOptions {
        dut: "interior_illumination".into(),
        ..CompileOptions::default()
    }
}

pub fn fixture_script_xml() -> String {
    let s = fixture_sheets();
    emit_xml(&compile(&s.signals, &s.statuses, &s.test, &compile_options()).unwrap())
}

// ---------------------------------------------------------------------------
// Timeline oracle for the example: replays the sheet with plain arithmetic
// and predicts which steps' lamp checks fail for a given timeout.

pub struct TimelineStep {
    pub index: usize,
    pub end_s: f64,
    pub lamp_expected_on: bool,
    /// Seconds since the last closed-to-open door transition at step end.
    pub since_open_s: Option<f64>,
}

pub fn example_timeline(settle_s: f64, timeout_s: f64) -> Vec<TimelineStep> {
    let sheets = fixture_sheets();
    let mut doors: IndexMap<String, bool> = IndexMap::new();
    let mut night = false;
    for sig in &sheets.signals.signals {
        if sig.name.starts_with("DS_") {
            doors.insert(sig.name.clone(), sig.initial_status == "Open");
        }
        if sig.name == "NIGHT" {
            night = sig.initial_status == "1";
        }
    }
    let mut t = settle_s;
    let mut opened_at: Option<f64> = None;
    let mut out = Vec::new();
    for step in &sheets.test.steps {
        for (signal, status) in &step.assignments {
            if let Some(open) = doors.get_mut(signal) {
                let now_open = status == "Open";
                if now_open && !*open {
                    opened_at = Some(t);
                }
                *open = now_open;
            }
            if signal == "NIGHT" {
                night = status == "1";
            }
        }
        let any_open = doors.values().any(|o| *o);
        if !any_open {
            opened_at = None;
        }
        t += step.dt.as_secs_f64();
        let since = opened_at.map(|o| t - o);
        let on = night && any_open && since.is_some_and(|s| s < timeout_s);
        out.push(TimelineStep {
            index: step.index,
            end_s: t,
            lamp_expected_on: on,
            since_open_s: since,
        });
    }
    out
}

/// Steps whose INT_ILL assignment (carried forward) disagrees with the
/// oracle's lamp state.
pub fn predicted_failures(timeout_s: f64) -> Vec<usize> {
    let sheets = fixture_sheets();
    let timeline = example_timeline(0.1, timeout_s);
    let mut expected = sheets
        .signals
        .get("INT_ILL")
        .unwrap()
        .initial_status
        .clone();
    let mut failures = Vec::new();
    for (step, tl) in sheets.test.steps.iter().zip(&timeline) {
        if let Some(s) = step.assignments.get("INT_ILL") {
            expected = s.clone();
        }
        if (expected == "Ho") != tl.lamp_expected_on {
            failures.push(step.index);
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Allocation oracle: exhaustive enumeration plus a pairwise checker written
// from the allocation contract.

pub const BUS_METHODS: [&str; 2] = ["put_can", "get_can"];

fn is_get(method: &str) -> bool {
    method.starts_with("get_")
}

pub fn needs_resource(req: &Requirement) -> bool {
    if BUS_METHODS.contains(&req.method.as_str()) {
        return false;
    }
    if is_get(&req.method) {
        return true;
    }
    let primary = req
        .params
        .iter()
        .find(|(n, _)| !matches!(n.as_str(), "d1" | "d2" | "d3"));
    !matches!(primary, Some((_, Resolved::Inf)))
}

/// Every (resource, connector) that could serve `req` in isolation.
pub fn options_for(stand: &StandModel, req: &Requirement) -> Vec<(String, Connector)> {
    let mut ids: Vec<&str> = Vec::new();
    for r in &stand.resources.resources {
        if !ids.contains(&r.id.as_str()) {
            ids.push(&r.id);
        }
    }
    let mut out = Vec::new();
    for id in ids {
        let Some(conn) = stand.matrix.connector(id, &req.pin) else {
            continue;
        };
        let ok = stand.resources.resources.iter().any(|row| {
            row.id == id
                && row.method == req.method
                && req.params.iter().all(|(name, v)| {
                    let attr = row.attribut.to_lowercase();
                    let relevant = *name == attr
                        || *name == format!("{attr}_min")
                        || *name == format!("{attr}_max");
                    match v {
                        Resolved::Number(x) if relevant => row.min <= *x && *x <= row.max,
                        _ => true,
                    }
                })
        });
        if ok {
            out.push((id.to_string(), conn));
        }
    }
    out
}

/// Pairwise rule: anything involving a stimulus needs its own resource and
/// its own connector group.
pub fn pair_ok(
    a: &Requirement,
    (ra, ca): &(String, Connector),
    b: &Requirement,
    (rb, cb): &(String, Connector),
) -> bool {
    if is_get(&a.method) && is_get(&b.method) {
        return true;
    }
    ra != rb && (ca.kind, ca.group) != (cb.kind, cb.group)
}

pub fn brute_force_feasible(stand: &StandModel, reqs: &[Requirement]) -> bool {
    let idx: Vec<usize> = (0..reqs.len())
        .filter(|&i| needs_resource(&reqs[i]))
        .collect();
    let options: Vec<Vec<(String, Connector)>> =
        idx.iter().map(|&i| options_for(stand, &reqs[i])).collect();
    if options.iter().any(Vec::is_empty) {
        return false;
    }
    let mut choice = vec![0usize; idx.len()];
    loop {
        let ok = (0..idx.len()).all(|x| {
            (x + 1..idx.len()).all(|y| {
                pair_ok(
                    &reqs[idx[x]],
                    &options[x][choice[x]],
                    &reqs[idx[y]],
                    &options[y][choice[y]],
                )
            })
        });
        if ok {
            return true;
        }
        // odometer increment
        let mut k = 0;
        loop {
            if k == idx.len() {
                return false;
            }
            choice[k] += 1;
            if choice[k] < options[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

/// Independent verification of an allocation result.
pub fn oracle_check(
    stand: &StandModel,
    reqs: &[Requirement],
    targets: &[Target],
) -> Result<(), String> {
    if targets.len() != reqs.len() {
        return Err("length mismatch".into());
    }
    let mut bound = Vec::new();
    for (req, t) in reqs.iter().zip(targets) {
        match t {
            Target::Bus if BUS_METHODS.contains(&req.method.as_str()) => {}
            Target::OpenCircuit
                if !BUS_METHODS.contains(&req.method.as_str()) && !needs_resource(req) => {}
            Target::Resource {
                resource,
                connector,
            } if needs_resource(req) => {
                let opt = (resource.clone(), *connector);
                if !options_for(stand, req).contains(&opt) {
                    return Err(format!("{req} cannot use {t}"));
                }
                bound.push((req, opt));
            }
            other => return Err(format!("{req} has unexpected target {other}")),
        }
    }
    for x in 0..bound.len() {
        for y in x + 1..bound.len() {
            if !pair_ok(bound[x].0, &bound[x].1, bound[y].0, &bound[y].1) {
                return Err(format!("{} conflicts with {}", bound[x].0, bound[y].0));
            }
        }
    }
    Ok(())
}

const METHODS: [(&str, &str); 3] = [("put_r", "r"), ("get_u", "u"), ("put_u", "u")];

/// A random stand with up to 5 resources and 8 pins.
pub fn random_stand(rng: &mut impl Rng) -> StandModel {
    let n_res = rng.gen_range(1..=5);
    let n_pins = rng.gen_range(1..=8);
    let pins: Vec<String> = (1..=n_pins).map(|i| format!("P{i}")).collect();
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for r in 1..=n_res {
        let id = format!("R{r}");
        for _ in 0..rng.gen_range(1..=3) {
            let (m, a) = *METHODS.choose(rng).unwrap();
            let lo = rng.gen_range(-20..=5) as f64 * 10.0;
            let hi = lo + rng.gen_range(5..=40) as f64 * 10.0;
            rows.push(ResourceDef::new(&id, m, a, lo, hi, ""));
        }
        ids.push(id);
    }
    let mut matrix = ConnectionMatrix::new(ids.clone(), pins.clone());
    for id in &ids {
        for pin in &pins {
            if rng.gen_bool(0.7) {
                let group = rng.gen_range(1..=4);
                let pos = rng.gen_range(1..=4);
                let c = if rng.gen_bool(0.5) {
                    Connector::switch(group, pos)
                } else {
                    Connector::mux(group, pos)
                };
                matrix.connect(id, pin, c);
            }
        }
    }
    StandModel::new(ResourceTable::new(rows), matrix).unwrap()
}

/// Up to 6 requirements on distinct pins of the stand.
pub fn random_requirements(rng: &mut impl Rng, stand: &StandModel) -> Vec<Requirement> {
    let mut pins = stand.matrix.pins.clone();
    pins.shuffle(rng);
    let n = rng.gen_range(1..=pins.len().min(6));
    let num = |rng: &mut dyn rand::RngCore| Resolved::Number((rng.gen_range(-15..=30) * 10) as f64);
    pins.into_iter()
        .take(n)
        .map(|pin| {
            let roll = rng.gen_range(0..10);
            let (method, params) = match roll {
                0 => (
                    "put_can",
                    vec![("data".to_string(), Resolved::Text("01B".into()))],
                ),
                1 => ("put_r", vec![("r".to_string(), Resolved::Inf)]),
                2..=4 => ("put_r", vec![("r".to_string(), num(rng))]),
                5 | 6 => ("put_u", vec![("u".to_string(), num(rng))]),
                _ => {
                    let a = num(rng);
                    let b = num(rng);
                    (
                        "get_u",
                        vec![("u_max".to_string(), a), ("u_min".to_string(), b)],
                    )
                }
            };
            Requirement::new(&pin.to_lowercase(), &pin, method, params)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random sheets, valid enough to compile.

fn pick<'a, T>(rng: &mut impl Rng, items: &'a [T]) -> &'a T {
    items.choose(rng).unwrap()
}

pub fn random_number(rng: &mut impl Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(0..1000) as f64,
        1 => rng.gen_range(-1000..1000) as f64 / 8.0,
        2 => rng.gen_range(1..100) as f64 / 10.0,
        _ => rng.gen_range(-1.0e6..1.0e6),
    }
}

fn random_value(rng: &mut impl Rng) -> CellValue {
    match rng.gen_range(0..5) {
        0 => CellValue::Inf,
        1 => {
            let bits: String = (0..rng.gen_range(1..=8))
                .map(|_| if rng.gen_bool(0.5) { '1' } else { '0' })
                .collect();
            CellValue::Bits(bits + "B")
        }
        _ => CellValue::Number(random_number(rng)),
    }
}

const REMARK_CHARS: &[u8] = b"abcdefgh ,;:\"'.()";

fn random_remark(rng: &mut impl Rng) -> Option<String> {
    if rng.gen_bool(0.4) {
        return None;
    }
    let mut s = String::from("r");
    for _ in 0..rng.gen_range(0..12) {
        s.push(*pick(rng, REMARK_CHARS) as char);
    }
    s.push('x');
    Some(s)
}

/// Signals, statuses and a test sequence that pass validation.
pub fn random_sheets(rng: &mut impl Rng) -> Sheets {
    let mut statuses = Vec::new();
    let n_put = rng.gen_range(1..=4);
    let n_get = rng.gen_range(1..=3);
    for i in 0..n_put {
        let (m, a) = *pick(rng, &[("put_r", "r"), ("put_can", "data"), ("put_u", "u")]);
        let mut s = StatusDef::new(&format!("S{i}"), m, a);
        s.nom = Some(random_value(rng));
        for d in s.d.iter_mut() {
            if rng.gen_bool(0.3) {
                *d = Some(random_value(rng));
            }
        }
        if rng.gen_bool(0.5) {
            s.unit = Some(pick(rng, &["V", "Ω", "A"]).to_string());
        }
        statuses.push(s);
    }
    for i in 0..n_get {
        let (m, a) = *pick(rng, &[("get_u", "u"), ("get_i", "i")]);
        let mut s = StatusDef::new(&format!("G{i}"), m, a);
        if rng.gen_bool(0.5) {
            s.var_x = Some(pick(rng, &["UBATT", "vref"]).to_string());
        }
        match rng.gen_range(0..3) {
            0 => s.min = Some(random_number(rng)),
            1 => s.max = Some(random_number(rng)),
            _ => {
                s.min = Some(random_number(rng));
                s.max = Some(random_number(rng));
            }
        }
        if rng.gen_bool(0.5) {
            s.nom = Some(CellValue::Number(random_number(rng)));
        }
        statuses.push(s);
    }
    let puts: Vec<String> = statuses[..n_put].iter().map(|s| s.status.clone()).collect();
    let gets: Vec<String> = statuses[n_put..].iter().map(|s| s.status.clone()).collect();

    let mut signals = Vec::new();
    let mut pin_no = 0;
    for i in 0..rng.gen_range(1..=5) {
        let output = i > 0 && rng.gen_bool(0.3);
        let pins: Vec<String> = (0..rng.gen_range(1..=3))
            .map(|_| {
                pin_no += 1;
                format!("PIN_{pin_no}")
            })
            .collect();
        signals.push(SignalDef {
            name: format!("SIG_{i}"),
            direction: if output {
                Direction::Output
            } else {
                Direction::Input
            },
            pins,
            initial_status: pick(rng, if output { &gets } else { &puts }).clone(),
        });
    }

    let columns: Vec<String> = signals
        .iter()
        .filter(|_| rng.gen_bool(0.8))
        .map(|s| s.name.clone())
        .collect();
    let steps = (0..rng.gen_range(1..=6))
        .map(|index| {
            let mut assignments = IndexMap::new();
            for c in &columns {
                if rng.gen_bool(0.5) {
                    let sig = signals.iter().find(|s| &s.name == c).unwrap();
                    let pool = match sig.direction {
                        Direction::Input => &puts,
                        Direction::Output => &gets,
                    };
                    assignments.insert(c.clone(), pick(rng, pool).clone());
                }
            }
            TestStep {
                index,
                dt: Dwell::from_micros(rng.gen_range(1..=400_000_000)),
                assignments,
                remark: random_remark(rng),
            }
        })
        .collect();
    Sheets {
        signals: SignalTable::new(signals),
        statuses: StatusTable::new(statuses),
        test: TestSequence {
            name: "test".into(),
            columns,
            steps,
        },
    }
}

// ---------------------------------------------------------------------------
// Random expressions over the grammar.

pub fn random_expr(rng: &mut impl Rng, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        return if rng.gen_bool(0.5) {
            Expr::Const(random_number(rng))
        } else {
            Expr::Var(pick(rng, &["ubatt", "vref", "x", "k_2"]).to_string())
        };
    }
    let op = *pick(rng, &[BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div]);
    let lhs = random_expr(rng, depth - 1);
    let rhs = random_expr(rng, depth - 1);
    let e = Expr::binary(op, lhs, rhs);
    if rng.gen_bool(0.2) {
        Expr::paren(e)
    } else {
        e
    }
}
