//! Simulated devices under test.

use std::collections::BTreeMap;

use thiserror::Error;

use super::allocate::Resolved;
use crate::expr::Env;
use crate::sheet_model::Dwell;

/// What a stimulus delivers to a DUT input pin.
#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub method: String,
    /// Main value: ohms for `put_r` (`Inf` = open circuit), the bit literal
    /// for `put_can`.
    pub value: Option<Resolved>,
    /// Auxiliary parameters (`d1`..`d3`), passed through uninterpreted.
    pub aux: Vec<(String, Resolved)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DutError {
    #[error("DUT has no input pin {0}")]
    UnknownInput(String),
    #[error("DUT has no output pin {0}")]
    UnknownOutput(String),
    #[error("pin {pin}: cannot apply {method}: {reason}")]
    BadStimulus {
        pin: String,
        method: String,
        reason: String,
    },
    #[error("unknown DUT model {0:?}")]
    UnknownModel(String),
    #[error("DUT configuration: {0}")]
    Config(String),
}

/// Behavioral model of a device under test. Implementations must be
/// deterministic: the same call sequence yields the same readings.
pub trait DutModel {
    fn set_input(&mut self, pin: &str, stimulus: &Stimulus) -> Result<(), DutError>;

    /// Moves virtual time forward.
    fn advance(&mut self, dt: Dwell);

    /// Voltage at an output pin, in volts.
    fn read_pin(&mut self, pin: &str) -> Result<f64, DutError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDutConfig {
    pub timeout: Dwell,
    /// Supply voltage, volts.
    pub ubatt: f64,
    /// Door switch resistance below which the door counts as open.
    pub r_door_threshold_ohm: f64,
    /// Restart the lamp timer whenever another door opens while one is
    /// already open.
    pub retrigger: bool,
}

impl ReferenceDutConfig {
    pub fn new(ubatt: f64) -> Self {
        Self {
            timeout: Dwell::from_micros(300 * Dwell::MICROS_PER_SECOND),
            ubatt,
            r_door_threshold_ohm: 100.0,
            retrigger: true,
        }
    }
}

pub const DOOR_PINS: [&str; 4] = ["DS_FL", "DS_FR", "DS_RL", "DS_RR"];
pub const LAMP_PINS: [&str; 2] = ["INT_ILL_F", "INT_ILL_R"];

/// Interior illumination controller.
///
/// At night, the lamp is lit while at least one door is open, for at most
/// `timeout` after the latest closed→open transition. Closing every door
/// clears the timer. Both lamp outputs read `ubatt` when lit and 0 V
/// otherwise.
#[derive(Debug, Clone)]
pub struct InteriorIllumination {
    config: ReferenceDutConfig,
    now: Dwell,
    ignition: String,
    night: bool,
    doors_open: [bool; 4],
    opened_at: Option<Dwell>,
    aux: BTreeMap<String, Vec<(String, Resolved)>>,
}

pub fn reference_dut(config: ReferenceDutConfig) -> InteriorIllumination {
    InteriorIllumination {
        config,
        now: Dwell::default(),
        ignition: String::new(),
        night: false,
        doors_open: [false; 4],
        opened_at: None,
        aux: BTreeMap::new(),
    }
}

fn bits_value(pin: &str, method: &str, v: Option<&Resolved>) -> Result<u64, DutError> {
    let bad = |reason: &str| DutError::BadStimulus {
        pin: pin.into(),
        method: method.into(),
        reason: reason.into(),
    };
    match v {
        Some(Resolved::Text(t)) => {
            let digits = t
                .strip_suffix('B')
                .ok_or_else(|| bad("expected a bit literal"))?;
            u64::from_str_radix(digits, 2).map_err(|_| bad("expected a bit literal"))
        }
        Some(Resolved::Number(n)) if *n == 0.0 || *n == 1.0 => Ok(*n as u64),
        _ => Err(bad("expected a bit literal")),
    }
}

impl InteriorIllumination {
    pub fn config(&self) -> &ReferenceDutConfig {
        &self.config
    }

    pub fn now(&self) -> Dwell {
        self.now
    }

    pub fn ignition(&self) -> &str {
        &self.ignition
    }

    /// Auxiliary metadata last received on a pin.
    pub fn aux(&self, pin: &str) -> Option<&[(String, Resolved)]> {
        self.aux.get(pin).map(Vec::as_slice)
    }

    pub fn lamp_on(&self) -> bool {
        let any_open = self.doors_open.iter().any(|d| *d);
        let within = self.opened_at.is_some_and(|t| {
            self.now.as_micros() - t.as_micros() < self.config.timeout.as_micros()
        });
        self.night && any_open && within
    }
}

impl DutModel for InteriorIllumination {
    fn set_input(&mut self, pin: &str, stimulus: &Stimulus) -> Result<(), DutError> {
        let bad = |reason: &str| DutError::BadStimulus {
            pin: pin.into(),
            method: stimulus.method.clone(),
            reason: reason.into(),
        };
        match pin {
            "IGN_ST" => {
                bits_value(pin, &stimulus.method, stimulus.value.as_ref())?;
                if let Some(Resolved::Text(t)) = &stimulus.value {
                    self.ignition = t.clone();
                }
            }
            "NIGHT" => {
                self.night = bits_value(pin, &stimulus.method, stimulus.value.as_ref())? != 0;
            }
            door if DOOR_PINS.contains(&door) => {
                let i = DOOR_PINS.iter().position(|d| *d == door).unwrap();
                let open = match &stimulus.value {
                    Some(Resolved::Inf) => false,
                    Some(Resolved::Number(r)) if *r >= 0.0 => *r < self.config.r_door_threshold_ohm,
                    _ => return Err(bad("expected a resistance in ohms or INF")),
                };
                let was_open = self.doors_open[i];
                let any_before = self.doors_open.iter().any(|d| *d);
                self.doors_open[i] = open;
                if open && !was_open && (self.config.retrigger || !any_before) {
                    self.opened_at = Some(self.now);
                }
                if !self.doors_open.iter().any(|d| *d) {
                    self.opened_at = None;
                }
            }
            other => return Err(DutError::UnknownInput(other.to_string())),
        }
        self.aux.insert(pin.to_string(), stimulus.aux.clone());
        Ok(())
    }

    fn advance(&mut self, dt: Dwell) {
        self.now += dt;
    }

    fn read_pin(&mut self, pin: &str) -> Result<f64, DutError> {
        if LAMP_PINS.contains(&pin) {
            Ok(if self.lamp_on() {
                self.config.ubatt
            } else {
                0.0
            })
        } else {
            Err(DutError::UnknownOutput(pin.to_string()))
        }
    }
}

/// Knobs for the built-in DUT models; unset fields keep model defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DutOptions {
    pub timeout_s: Option<f64>,
    pub r_door_threshold_ohm: Option<f64>,
    pub retrigger: Option<bool>,
}

pub const DUT_MODELS: &[&str] = &["interior_illumination"];

/// Builds a registered DUT model by name. The supply voltage comes from the
/// stand environment (`ubatt`).
pub fn build_dut(
    name: &str,
    options: &DutOptions,
    env: &Env,
) -> Result<Box<dyn DutModel>, DutError> {
    match name {
        "interior_illumination" => {
            let ubatt = env
                .get("ubatt")
                .ok_or_else(|| DutError::Config("environment does not bind ubatt".into()))?;
            let mut config = ReferenceDutConfig::new(ubatt);
            if let Some(t) = options.timeout_s {
                config.timeout = Dwell::from_secs_f64(t)
                    .ok_or_else(|| DutError::Config(format!("invalid timeout {t}")))?;
            }
            if let Some(r) = options.r_door_threshold_ohm {
                config.r_door_threshold_ohm = r;
            }
            if let Some(r) = options.retrigger {
                config.retrigger = r;
            }
            Ok(Box::new(reference_dut(config)))
        }
        other => Err(DutError::UnknownModel(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn secs(s: f64) -> Dwell {
        Dwell::from_secs_f64(s).unwrap()
    }

    fn stim(method: &str, value: Resolved) -> Stimulus {
        Stimulus {
            method: method.into(),
            value: Some(value),
            aux: Vec::new(),
        }
    }

    fn night(dut: &mut InteriorIllumination, on: bool) {
        let bits = if on { "1B" } else { "0B" };
        dut.set_input("NIGHT", &stim("put_can", Resolved::Text(bits.into())))
            .unwrap();
    }

    fn door(dut: &mut InteriorIllumination, pin: &str, ohms: Resolved) {
        dut.set_input(pin, &stim("put_r", ohms)).unwrap();
    }

    #[test]
    fn lit_at_night_with_open_door() {
        let mut dut = reference_dut(ReferenceDutConfig::new(12.0));
        night(&mut dut, true);
        door(&mut dut, "DS_FL", Resolved::Number(0.0));
        dut.advance(secs(10.0));
        assert_eq!(dut.read_pin("INT_ILL_F").unwrap(), 12.0);
        assert_eq!(dut.read_pin("INT_ILL_R").unwrap(), 12.0);
    }

    #[test]
    fn dark_by_day() {
        let mut dut = reference_dut(ReferenceDutConfig::new(12.0));
        night(&mut dut, false);
        door(&mut dut, "DS_FL", Resolved::Number(0.0));
        dut.advance(secs(1.0));
        assert_eq!(dut.read_pin("INT_ILL_F").unwrap(), 0.0);
    }

    #[test]
    fn times_out() {
        let mut dut = reference_dut(ReferenceDutConfig::new(12.0));
        night(&mut dut, true);
        door(&mut dut, "DS_FL", Resolved::Number(0.0));
        dut.advance(secs(299.999999));
        assert_eq!(dut.read_pin("INT_ILL_F").unwrap(), 12.0);
        dut.advance(secs(5.000001));
        assert_eq!(dut.read_pin("INT_ILL_F").unwrap(), 0.0);
    }

    #[test]
    fn closing_all_doors_clears_the_timer() {
        let mut dut = reference_dut(ReferenceDutConfig::new(12.0));
        night(&mut dut, true);
        door(&mut dut, "DS_FL", Resolved::Number(0.0));
        dut.advance(secs(200.0));
        door(&mut dut, "DS_FL", Resolved::Inf);
        assert!(!dut.lamp_on());
        dut.advance(secs(1.0));
        door(&mut dut, "DS_FL", Resolved::Number(0.0));
        dut.advance(secs(200.0));
        assert!(dut.lamp_on());
    }

    #[test]
    fn retrigger_policy() {
        for (retrigger, lit) in [(true, true), (false, false)] {
            let mut config = ReferenceDutConfig::new(12.0);
            config.retrigger = retrigger;
            let mut dut = reference_dut(config);
            night(&mut dut, true);
            door(&mut dut, "DS_FL", Resolved::Number(0.0));
            dut.advance(secs(200.0));
            door(&mut dut, "DS_FR", Resolved::Number(0.0));
            dut.advance(secs(200.0));
            assert_eq!(dut.lamp_on(), lit, "retrigger={retrigger}");
        }
    }

    #[test]
    fn threshold_and_open_circuit() {
        let mut dut = reference_dut(ReferenceDutConfig::new(12.0));
        night(&mut dut, true);
        door(&mut dut, "DS_RR", Resolved::Number(100.0));
        assert!(!dut.lamp_on());
        door(&mut dut, "DS_RR", Resolved::Number(99.9));
        assert!(dut.lamp_on());
        door(&mut dut, "DS_RR", Resolved::Inf);
        assert!(!dut.lamp_on());
    }

    #[test]
    fn rejects_bad_pins_and_values() {
        let mut dut = reference_dut(ReferenceDutConfig::new(12.0));
        assert!(dut.read_pin("DS_FL").is_err());
        assert!(dut
            .set_input("HORN", &stim("put_r", Resolved::Number(0.0)))
            .is_err());
        assert!(dut
            .set_input("DS_FL", &stim("put_can", Resolved::Text("1B".into())))
            .is_err());
        assert!(dut
            .set_input("NIGHT", &stim("put_r", Resolved::Number(5.0)))
            .is_err());
    }

    #[test]
    fn aux_metadata_is_recorded() {
        let mut dut = reference_dut(ReferenceDutConfig::new(12.0));
        let s = Stimulus {
            method: "put_r".into(),
            value: Some(Resolved::Inf),
            aux: vec![("d2".into(), Resolved::Number(5000.0))],
        };
        dut.set_input("DS_FL", &s).unwrap();
        assert_eq!(dut.aux("DS_FL").unwrap()[0].1, Resolved::Number(5000.0));
    }

    #[test]
    fn registry() {
        let env = Env::new().with("ubatt", 12.0);
        assert!(build_dut("interior_illumination", &DutOptions::default(), &env).is_ok());
        assert!(matches!(
            build_dut("wiper", &DutOptions::default(), &env),
            Err(DutError::UnknownModel(_))
        ));
        assert!(build_dut("interior_illumination", &DutOptions::default(), &Env::new()).is_err());
    }
}
