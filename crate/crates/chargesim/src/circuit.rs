//! Analog substrate: complex impedance of R/L/C/switch networks, voltage
//! dividers, and the 1 kHz pilot PWM semantics.
//!
//! Everything here is steady-state. A network is a composition tree of
//! elements evaluated at a single probe frequency; there is no time-domain
//! solving. Open circuits are a distinguished [`Impedance::Infinite`]
//! sentinel rather than a floating-point infinity so that equality tests
//! stay exact.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use thiserror::Error;

/// Nominal control-pilot PWM frequency.
pub const PILOT_FREQUENCY_HZ: f64 = 1000.0;

/// Duty-cycle anchors of the pilot current mapping: 50% advertises 32 A,
/// 85% advertises 51 A, and the usable duty window is [10, 85].
pub const DUTY_MIN_PERCENT: f64 = 10.0;
pub const DUTY_MAX_PERCENT: f64 = 85.0;

#[derive(Debug, Error, PartialEq)]
pub enum CircuitError {
    #[error("invalid element value: {0}")]
    InvalidElement(String),
    #[error("series/parallel composition needs at least one child")]
    EmptyComposition,
    #[error("duty cycle {0}% outside [0, 100]")]
    DutyOutOfRange(f64),
    #[error("current {0} A outside the representable pilot range")]
    CurrentOutOfRange(f64),
    #[error("duty cycle {0}% outside [0, 100]")]
    InvalidDuty(f64),
}

/// A single two-terminal element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CircuitElement {
    Resistor { ohm: f64 },
    Capacitor { farad: f64 },
    Inductor { henry: f64 },
    Switch { closed: bool },
}

impl CircuitElement {
    fn validate(&self) -> Result<(), CircuitError> {
        // NaN fails every validation too.
        match *self {
            CircuitElement::Resistor { ohm } if ohm.is_nan() || ohm < 0.0 => Err(
                CircuitError::InvalidElement(format!("resistor {ohm} ohm (needs >= 0)")),
            ),
            CircuitElement::Capacitor { farad } if farad.is_nan() || farad <= 0.0 => Err(
                CircuitError::InvalidElement(format!("capacitor {farad} F (needs > 0)")),
            ),
            CircuitElement::Inductor { henry } if henry.is_nan() || henry <= 0.0 => Err(
                CircuitError::InvalidElement(format!("inductor {henry} H (needs > 0)")),
            ),
            _ => Ok(()),
        }
    }

    fn impedance_at(&self, f: f64) -> Impedance {
        match *self {
            CircuitElement::Resistor { ohm } => Impedance::resistive(ohm),
            CircuitElement::Capacitor { farad } => {
                if f == 0.0 {
                    // DC blocks a capacitor.
                    Impedance::Infinite
                } else {
                    Impedance::finite(0.0, -1.0 / (TAU * f * farad))
                }
            }
            CircuitElement::Inductor { henry } => Impedance::finite(0.0, TAU * f * henry),
            CircuitElement::Switch { closed } => {
                if closed {
                    Impedance::finite(0.0, 0.0)
                } else {
                    Impedance::Infinite
                }
            }
        }
    }
}

/// A composition tree of elements. Series sums impedances; parallel sums
/// admittances. Evaluation is pure: same tree and frequency always yield
/// the same impedance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CircuitNetwork {
    Element(CircuitElement),
    Series(Vec<CircuitNetwork>),
    Parallel(Vec<CircuitNetwork>),
}

impl CircuitNetwork {
    pub fn resistor(ohm: f64) -> Result<Self, CircuitError> {
        let e = CircuitElement::Resistor { ohm };
        e.validate()?;
        Ok(CircuitNetwork::Element(e))
    }

    pub fn capacitor(farad: f64) -> Result<Self, CircuitError> {
        let e = CircuitElement::Capacitor { farad };
        e.validate()?;
        Ok(CircuitNetwork::Element(e))
    }

    pub fn inductor(henry: f64) -> Result<Self, CircuitError> {
        let e = CircuitElement::Inductor { henry };
        e.validate()?;
        Ok(CircuitNetwork::Element(e))
    }

    pub fn switch(closed: bool) -> Self {
        CircuitNetwork::Element(CircuitElement::Switch { closed })
    }

    /// An always-open branch; the idiom for "nothing plugged in".
    pub fn open() -> Self {
        Self::switch(false)
    }

    pub fn series(children: Vec<CircuitNetwork>) -> Result<Self, CircuitError> {
        if children.is_empty() {
            return Err(CircuitError::EmptyComposition);
        }
        Ok(CircuitNetwork::Series(children))
    }

    pub fn parallel(children: Vec<CircuitNetwork>) -> Result<Self, CircuitError> {
        if children.is_empty() {
            return Err(CircuitError::EmptyComposition);
        }
        Ok(CircuitNetwork::Parallel(children))
    }

    /// Complex impedance of the composition at probe frequency `f` (Hz).
    ///
    /// Degenerate cases never panic: an all-open parallel branch returns
    /// [`Impedance::Infinite`], a shorted parallel branch returns zero.
    pub fn impedance_at(&self, f: f64) -> Impedance {
        match self {
            CircuitNetwork::Element(e) => e.impedance_at(f),
            CircuitNetwork::Series(children) => {
                let mut total = Complex64::new(0.0, 0.0);
                for child in children {
                    match child.impedance_at(f) {
                        Impedance::Infinite => return Impedance::Infinite,
                        Impedance::Finite {
                            resistance,
                            reactance,
                        } => {
                            total += Complex64::new(resistance, reactance);
                        }
                    }
                }
                Impedance::finite(total.re, total.im)
            }
            CircuitNetwork::Parallel(children) => {
                let mut finite: Vec<Complex64> = Vec::new();
                for child in children {
                    match child.impedance_at(f) {
                        // An open branch contributes no admittance.
                        Impedance::Infinite => {}
                        Impedance::Finite {
                            resistance,
                            reactance,
                        } => {
                            let z = Complex64::new(resistance, reactance);
                            if z.norm() == 0.0 {
                                // A shorted branch dominates the whole group.
                                return Impedance::finite(0.0, 0.0);
                            }
                            finite.push(z);
                        }
                    }
                }
                match finite.len() {
                    0 => Impedance::Infinite,
                    // Avoid the reciprocal round trip when only one branch conducts.
                    1 => Impedance::finite(finite[0].re, finite[0].im),
                    _ => {
                        let y: Complex64 = finite.iter().map(|z| z.inv()).sum();
                        if y.norm() == 0.0 {
                            Impedance::Infinite
                        } else {
                            let z = y.inv();
                            Impedance::finite(z.re, z.im)
                        }
                    }
                }
            }
        }
    }

    /// DC resistance seen from the terminals, as a scalar reading.
    pub fn dc_resistance(&self) -> Resistance {
        match self.impedance_at(0.0) {
            Impedance::Infinite => Resistance::Infinite,
            z => Resistance::Ohms(z.magnitude()),
        }
    }
}

/// Complex impedance split into resistance (real) and reactance (imaginary)
/// parts, with an exact sentinel for open circuits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Impedance {
    Finite { resistance: f64, reactance: f64 },
    Infinite,
}

impl Impedance {
    pub fn finite(resistance: f64, reactance: f64) -> Self {
        Impedance::Finite {
            resistance,
            reactance,
        }
    }

    pub fn resistive(ohm: f64) -> Self {
        Impedance::Finite {
            resistance: ohm,
            reactance: 0.0,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Impedance::Infinite)
    }

    /// |Z| = sqrt(resistance^2 + reactance^2); `f64::INFINITY` for the sentinel.
    pub fn magnitude(&self) -> f64 {
        match *self {
            Impedance::Finite {
                resistance,
                reactance,
            } => resistance.hypot(reactance),
            Impedance::Infinite => f64::INFINITY,
        }
    }

    pub fn resistance(&self) -> f64 {
        match *self {
            Impedance::Finite { resistance, .. } => resistance,
            Impedance::Infinite => f64::INFINITY,
        }
    }

    pub fn reactance(&self) -> f64 {
        match *self {
            Impedance::Finite { reactance, .. } => reactance,
            Impedance::Infinite => 0.0,
        }
    }
}

/// A scalar resistance reading on a signal line: a finite value in ohms, or
/// an open line. This is what CC-port measurement logic consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resistance {
    Ohms(f64),
    Infinite,
}

impl Resistance {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Resistance::Infinite)
    }

    pub fn ohms(&self) -> Option<f64> {
        match *self {
            Resistance::Ohms(v) => Some(v),
            Resistance::Infinite => None,
        }
    }
}

impl fmt::Display for Resistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Resistance::Ohms(v) => write!(f, "{v} ohm"),
            Resistance::Infinite => write!(f, "infinite"),
        }
    }
}

// JSON form: a bare number, or the string "infinite".
impl Serialize for Resistance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Resistance::Ohms(v) => s.serialize_f64(v),
            Resistance::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl<'de> Deserialize<'de> for Resistance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(Resistance::Ohms)
                .ok_or_else(|| D::Error::custom("resistance out of f64 range")),
            serde_json::Value::String(s) if s == "infinite" => Ok(Resistance::Infinite),
            other => Err(D::Error::custom(format!(
                "expected a number of ohms or \"infinite\", got {other}"
            ))),
        }
    }
}

/// The control-pilot PWM signal: 1 kHz nominal, duty cycle in percent,
/// and the two voltage rails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotSignal {
    pub frequency_hz: f64,
    pub duty_percent: f64,
    pub high_volt: f64,
    pub low_volt: f64,
}

impl PilotSignal {
    pub fn new(
        frequency_hz: f64,
        duty_percent: f64,
        high_volt: f64,
        low_volt: f64,
    ) -> Result<Self, CircuitError> {
        if !(0.0..=100.0).contains(&duty_percent) {
            return Err(CircuitError::InvalidDuty(duty_percent));
        }
        Ok(PilotSignal {
            frequency_hz,
            duty_percent,
            high_volt,
            low_volt,
        })
    }

    /// The standard ±12 V pilot at 1 kHz with the given duty cycle.
    pub fn nominal(duty_percent: f64) -> Result<Self, CircuitError> {
        Self::new(PILOT_FREQUENCY_HZ, duty_percent, 12.0, -12.0)
    }
}

/// Current advertisement decoded from a pilot duty cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdvertisedCurrent {
    Amps(f64),
    /// Duty cycles below 10% or above 85% advertise no usable power; a
    /// vehicle treats them as an inactive or faulted pilot.
    NoPower,
}

/// Voltage at the junction of a resistive divider: `source` feeds `upper`
/// ohms in series with the `lower` network, and the reading is taken across
/// `lower` using impedance magnitudes.
///
/// An open lower network reads the full supply; a short reads zero.
pub fn divider_voltage(source: f64, upper: f64, lower: &CircuitNetwork, f: f64) -> f64 {
    match lower.impedance_at(f) {
        Impedance::Infinite => source,
        z => {
            let mag = z.magnitude();
            if mag == 0.0 {
                0.0
            } else {
                source * mag / (upper + mag)
            }
        }
    }
}

/// Maps a pilot duty cycle to the advertised charging current.
///
/// The mapping is linear through the two anchor points (50%, 32 A) and
/// (85%, 51 A) over the usable window [10, 85]; outside that window the
/// pilot advertises [`AdvertisedCurrent::NoPower`].
pub fn duty_to_current(duty_percent: f64) -> Result<AdvertisedCurrent, CircuitError> {
    if !(0.0..=100.0).contains(&duty_percent) {
        return Err(CircuitError::DutyOutOfRange(duty_percent));
    }
    if !(DUTY_MIN_PERCENT..=DUTY_MAX_PERCENT).contains(&duty_percent) {
        return Ok(AdvertisedCurrent::NoPower);
    }
    // Multiply before dividing so the anchors land exactly on 32 and 51.
    Ok(AdvertisedCurrent::Amps(
        32.0 + (duty_percent - 50.0) * 19.0 / 35.0,
    ))
}

/// Inverse of the linear segment of [`duty_to_current`].
pub fn current_to_duty(amps: f64) -> Result<f64, CircuitError> {
    let min_amps = 32.0 + (DUTY_MIN_PERCENT - 50.0) * 19.0 / 35.0;
    let max_amps = 51.0;
    if !(min_amps..=max_amps).contains(&amps) {
        return Err(CircuitError::CurrentOutOfRange(amps));
    }
    Ok(50.0 + (amps - 32.0) * 35.0 / 19.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(ohm: f64) -> CircuitNetwork {
        CircuitNetwork::resistor(ohm).unwrap()
    }

    fn assert_close(a: f64, b: f64, rel: f64) {
        let scale = a.abs().max(b.abs()).max(1e-12);
        assert!(
            (a - b).abs() / scale <= rel,
            "expected {a} close to {b} (rel {rel})"
        );
    }

    #[test]
    fn inductor_reactance_at_1khz() {
        let net = CircuitNetwork::inductor(10e-3).unwrap();
        let z = net.impedance_at(1000.0);
        assert_close(z.reactance(), 62.831_853_071_795_86, 1e-12);
        assert_eq!(z.resistance(), 0.0);
    }

    #[test]
    fn capacitor_blocks_dc() {
        let net = CircuitNetwork::capacitor(1e-6).unwrap();
        assert_eq!(net.impedance_at(0.0), Impedance::Infinite);
    }

    #[test]
    fn parallel_resistors_match_product_over_sum() {
        let net = CircuitNetwork::parallel(vec![r(2740.0), r(1300.0)]).unwrap();
        for f in [0.0, 60.0, 1000.0, 50_000.0] {
            let z = net.impedance_at(f);
            assert_close(z.magnitude(), 2740.0 * 1300.0 / 4040.0, 1e-9);
            assert_eq!(z.reactance(), 0.0);
        }
    }

    #[test]
    fn open_switch_is_infinite_everywhere() {
        let net = CircuitNetwork::open();
        for f in [0.0, 1000.0, 1e6] {
            assert!(net.impedance_at(f).is_infinite());
        }
    }

    #[test]
    fn all_open_parallel_returns_sentinel_not_panic() {
        let net =
            CircuitNetwork::parallel(vec![CircuitNetwork::open(), CircuitNetwork::open()]).unwrap();
        assert_eq!(net.impedance_at(1000.0), Impedance::Infinite);
    }

    #[test]
    fn shorted_parallel_branch_wins() {
        let net = CircuitNetwork::parallel(vec![r(470.0), CircuitNetwork::switch(true)]).unwrap();
        assert_eq!(net.impedance_at(1000.0).magnitude(), 0.0);
    }

    #[test]
    fn series_through_open_switch_is_open() {
        let net = CircuitNetwork::series(vec![r(100.0), CircuitNetwork::open()]).unwrap();
        assert!(net.impedance_at(0.0).is_infinite());
    }

    #[test]
    fn element_invariants_rejected() {
        assert!(CircuitNetwork::resistor(-1.0).is_err());
        assert!(CircuitNetwork::capacitor(0.0).is_err());
        assert!(CircuitNetwork::inductor(-2.0).is_err());
        assert_eq!(
            CircuitNetwork::series(vec![]),
            Err(CircuitError::EmptyComposition)
        );
        assert_eq!(
            CircuitNetwork::parallel(vec![]),
            Err(CircuitError::EmptyComposition)
        );
    }

    #[test]
    fn divider_examples() {
        assert_close(
            divider_voltage(12.0, 1000.0, &r(2740.0), 0.0),
            12.0 * 2740.0 / 3740.0,
            1e-12,
        );
        assert_eq!(
            divider_voltage(5.0, 330.0, &CircuitNetwork::open(), 0.0),
            5.0
        );
        assert_eq!(
            divider_voltage(5.0, 330.0, &CircuitNetwork::switch(true), 0.0),
            0.0
        );
    }

    #[test]
    fn divider_monotone_in_lower_resistance() {
        let mut last = 0.0;
        for ohm in [1.0, 10.0, 100.0, 480.0, 2740.0, 10_000.0, 1e6] {
            let v = divider_voltage(12.0, 1000.0, &r(ohm), 0.0);
            assert!(v > last, "divider not increasing at {ohm} ohm");
            last = v;
        }
    }

    #[test]
    fn duty_anchors_exact() {
        assert_eq!(duty_to_current(50.0), Ok(AdvertisedCurrent::Amps(32.0)));
        assert_eq!(duty_to_current(85.0), Ok(AdvertisedCurrent::Amps(51.0)));
        assert_eq!(duty_to_current(5.0), Ok(AdvertisedCurrent::NoPower));
        assert_eq!(duty_to_current(90.0), Ok(AdvertisedCurrent::NoPower));
        assert_eq!(
            duty_to_current(101.0),
            Err(CircuitError::DutyOutOfRange(101.0))
        );
        assert_eq!(
            duty_to_current(-1.0),
            Err(CircuitError::DutyOutOfRange(-1.0))
        );
    }

    #[test]
    fn current_mapping_inverts() {
        assert_eq!(current_to_duty(32.0), Ok(50.0));
        assert_eq!(current_to_duty(51.0), Ok(85.0));
        assert!(matches!(
            current_to_duty(60.0),
            Err(CircuitError::CurrentOutOfRange(_))
        ));
        assert!(matches!(
            current_to_duty(1.0),
            Err(CircuitError::CurrentOutOfRange(_))
        ));
    }

    #[test]
    fn duty_mapping_strictly_increasing() {
        let mut last = f64::NEG_INFINITY;
        let mut duty = DUTY_MIN_PERCENT;
        while duty <= DUTY_MAX_PERCENT {
            match duty_to_current(duty).unwrap() {
                AdvertisedCurrent::Amps(a) => {
                    assert!(a > last);
                    last = a;
                }
                AdvertisedCurrent::NoPower => panic!("in-window duty mapped to no-power"),
            }
            duty += 0.25;
        }
    }

    #[test]
    fn pilot_signal_validates_duty() {
        assert!(PilotSignal::nominal(50.0).is_ok());
        assert!(PilotSignal::nominal(100.0).is_ok());
        assert!(PilotSignal::nominal(100.1).is_err());
        assert!(PilotSignal::nominal(-0.1).is_err());
    }

    #[test]
    fn resistance_json_round_trip() {
        let open: Resistance = serde_json::from_str("\"infinite\"").unwrap();
        assert!(open.is_infinite());
        let value: Resistance = serde_json::from_str("487.5").unwrap();
        assert_eq!(value, Resistance::Ohms(487.5));
        assert_eq!(
            serde_json::to_string(&Resistance::Infinite).unwrap(),
            "\"infinite\""
        );
    }
}
