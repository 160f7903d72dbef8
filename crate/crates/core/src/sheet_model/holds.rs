use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{Direction, Dwell, SignalTable, TestSequence, TestStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseStep {
    pub index: usize,
    pub dt: Dwell,
    /// Effective status of every input signal, in signal-table order.
    pub inputs: IndexMap<String, String>,
    /// Explicit output checks of this step only, in sheet column order.
    pub checks: IndexMap<String, String>,
    pub remark: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseSequence {
    pub name: String,
    pub steps: Vec<DenseStep>,
}

impl DenseSequence {
    /// Back to sheet form with every input cell filled.
    pub fn to_sequence(&self) -> TestSequence {
        let steps = self
            .steps
            .iter()
            .map(|s| TestStep {
                index: s.index,
                dt: s.dt,
                assignments: s
                    .inputs
                    .iter()
                    .chain(s.checks.iter())
                    .map(|(k, v)| (k.clone(), v.clone()))
                    .collect(),
                remark: s.remark.clone(),
            })
            .collect();
        TestSequence::new(&self.name, steps)
    }
}

/// Expands the sparse sheet: inputs carry their latest assignment forward
/// (seeded by the initial status), outputs keep only explicit checks.
pub fn expand_holds(test: &TestSequence, signals: &SignalTable) -> DenseSequence {
    let mut current: IndexMap<String, String> = signals
        .inputs()
        .map(|s| (s.name.clone(), s.initial_status.clone()))
        .collect();

    let steps = test
        .steps
        .iter()
        .map(|step| {
            let mut checks = IndexMap::new();
            for (signal, status) in &step.assignments {
                match signals.get(signal).map(|s| s.direction) {
                    Some(Direction::Input) => {
                        current.insert(signal.clone(), status.clone());
                    }
                    Some(Direction::Output) => {
                        checks.insert(signal.clone(), status.clone());
                    }
                    None => {}
                }
            }
            DenseStep {
                index: step.index,
                dt: step.dt,
                inputs: current.clone(),
                checks,
                remark: step.remark.clone(),
            }
        })
        .collect();

    DenseSequence {
        name: test.name.clone(),
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sheet_model::{example, SignalDef};
    use proptest::prelude::*;

    #[test]
    fn step_three_holds_earlier_inputs() {
        let dense = expand_holds(&example::test(), &example::signals());
        let step3 = &dense.steps[3];
        assert_eq!(step3.inputs["IGN_ST"], "Off");
        assert_eq!(step3.inputs["DS_FL"], "Closed");
        assert_eq!(step3.inputs["DS_FR"], "Closed");
        assert_eq!(step3.inputs["NIGHT"], "0");
        assert_eq!(step3.checks.len(), 1);
        assert_eq!(step3.checks["INT_ILL"], "Lo");
    }

    #[test]
    fn full_row_is_unchanged() {
        let signals = example::signals();
        let test = example::test();
        let dense = expand_holds(&test, &signals);
        for (signal, status) in &test.steps[0].assignments {
            match signals.get(signal).unwrap().direction {
                Direction::Input => assert_eq!(&dense.steps[0].inputs[signal], status),
                Direction::Output => assert_eq!(&dense.steps[0].checks[signal], status),
            }
        }
    }

    #[test]
    fn single_assignment_carries_forward() {
        let signals = SignalTable::new(vec![SignalDef {
            name: "A".into(),
            direction: Direction::Input,
            pins: vec!["A".into()],
            initial_status: "Off".into(),
        }]);
        let dt = Dwell::from_secs_f64(1.0).unwrap();
        let steps = (0..3)
            .map(|index| TestStep {
                index,
                dt,
                assignments: if index == 0 {
                    [("A".to_string(), "On".to_string())].into_iter().collect()
                } else {
                    IndexMap::new()
                },
                remark: None,
            })
            .collect();
        let dense = expand_holds(&TestSequence::new("t", steps), &signals);
        assert!(dense.steps.iter().all(|s| s.inputs["A"] == "On"));
    }

    #[test]
    fn blank_output_cell_means_no_check() {
        let dense = expand_holds(&example::test(), &example::signals());
        // every example row fills INT_ILL; drop one and it must not be held
        let mut test = example::test();
        test.steps[8].assignments.shift_remove("INT_ILL");
        let sparse = expand_holds(&test, &example::signals());
        assert!(sparse.steps[8].checks.is_empty());
        assert_eq!(dense.steps[8].checks["INT_ILL"], "Lo");
    }

    fn arb_sequence() -> impl Strategy<Value = (SignalTable, TestSequence)> {
        let statuses = ["S0", "S1", "S2"];
        (1usize..5, 1usize..8).prop_flat_map(move |(n_sig, n_steps)| {
            let cells = proptest::collection::vec(
                proptest::collection::vec(proptest::option::of(0usize..3), n_sig + 1),
                n_steps,
            );
            (
                Just(n_sig),
                cells,
                proptest::collection::vec(0usize..3, n_sig),
            )
                .prop_map(move |(n_sig, cells, initial)| {
                    let mut defs: Vec<SignalDef> = (0..n_sig)
                        .map(|i| SignalDef {
                            name: format!("IN{i}"),
                            direction: Direction::Input,
                            pins: vec![format!("P{i}")],
                            initial_status: statuses[initial[i]].into(),
                        })
                        .collect();
                    defs.push(SignalDef {
                        name: "OUT".into(),
                        direction: Direction::Output,
                        pins: vec!["PO".into()],
                        initial_status: "S0".into(),
                    });
                    let steps = cells
                        .iter()
                        .enumerate()
                        .map(|(index, row)| TestStep {
                            index,
                            dt: Dwell::from_micros(1),
                            assignments: row
                                .iter()
                                .enumerate()
                                .filter_map(|(c, v)| {
                                    let name = if c == n_sig {
                                        "OUT".to_string()
                                    } else {
                                        format!("IN{c}")
                                    };
                                    v.map(|v| (name, statuses[v].to_string()))
                                })
                                .collect(),
                            remark: None,
                        })
                        .collect();
                    (SignalTable::new(defs), TestSequence::new("p", steps))
                })
        })
    }

    proptest! {
        #[test]
        fn effective_status_matches_backward_scan((signals, test) in arb_sequence()) {
            let dense = expand_holds(&test, &signals);
            for (k, step) in dense.steps.iter().enumerate() {
                for sig in signals.inputs() {
                    let expected = (0..=k)
                        .rev()
                        .find_map(|j| test.steps[j].assignments.get(&sig.name))
                        .unwrap_or(&sig.initial_status);
                    prop_assert_eq!(&step.inputs[&sig.name], expected);
                }
                prop_assert_eq!(step.checks.get("OUT"), test.steps[k].assignments.get("OUT"));
            }
        }

        #[test]
        fn expansion_is_idempotent((signals, test) in arb_sequence()) {
            let dense = expand_holds(&test, &signals);
            prop_assert_eq!(expand_holds(&dense.to_sequence(), &signals), dense);
        }
    }
}
