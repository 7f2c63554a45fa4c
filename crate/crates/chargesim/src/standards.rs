//! Per-standard constants and classification rules for the charging
//! confirmation (CC) and control pilot (CP) lines.
//!
//! Seven standards are modeled. Each profile pins the CC resistances the
//! vehicle expects for the gun-button unpressed/pressed states, the
//! measurement tolerance, divider constants, and two capability flags:
//! whether the inlet has an electromechanical lock, and whether the
//! connector exposes CAN wiring (S+/S-) to the gun side.

use crate::circuit::Resistance;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Vehicle-side pull-down applied on the CP line once connected (state B).
pub const CP_CONNECTED_OHM: f64 = 2740.0;
/// Extra pull-down the vehicle adds in parallel when ready to charge;
/// together with the 2.74 kohm it forms roughly 880 ohm (state C).
pub const CP_READY_PARALLEL_OHM: f64 = 1300.0;
/// Equivalent resistance of state C: 2740 || 1300.
pub const CP_CHARGING_OHM: f64 =
    CP_CONNECTED_OHM * CP_READY_PARALLEL_OHM / (CP_CONNECTED_OHM + CP_READY_PARALLEL_OHM);
/// Equivalent resistance signaling charging with forced ventilation.
pub const CP_VENTILATION_OHM: f64 = 240.0;
/// CP classification tolerance; the three CP resistances are widely spaced.
pub const CP_TOLERANCE_PERCENT: f64 = 5.0;

#[derive(Debug, Error, PartialEq)]
pub enum StandardsError {
    #[error("unknown standard id: {0:?}")]
    UnknownStandard(String),
    #[error("deviation from an expected 0 ohm to {real} ohm is undefined")]
    UndefinedDeviation { real: f64 },
}

/// The seven modeled charging standards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StandardId {
    #[serde(rename = "sae-j1772")]
    SaeJ1772,
    #[serde(rename = "ccs-i")]
    CcsI,
    #[serde(rename = "iec-61851")]
    Iec61851,
    #[serde(rename = "ccs-ii")]
    CcsII,
    #[serde(rename = "nacs")]
    Nacs,
    #[serde(rename = "gbt-20234-2")]
    Gbt20234_2,
    #[serde(rename = "gbt-20234-3")]
    Gbt20234_3,
}

impl StandardId {
    pub const ALL: [StandardId; 7] = [
        StandardId::SaeJ1772,
        StandardId::CcsI,
        StandardId::Iec61851,
        StandardId::CcsII,
        StandardId::Nacs,
        StandardId::Gbt20234_2,
        StandardId::Gbt20234_3,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StandardId::SaeJ1772 => "sae-j1772",
            StandardId::CcsI => "ccs-i",
            StandardId::Iec61851 => "iec-61851",
            StandardId::CcsII => "ccs-ii",
            StandardId::Nacs => "nacs",
            StandardId::Gbt20234_2 => "gbt-20234-2",
            StandardId::Gbt20234_3 => "gbt-20234-3",
        }
    }
}

impl fmt::Display for StandardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StandardId {
    type Err = StandardsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StandardId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| StandardsError::UnknownStandard(s.to_string()))
    }
}

/// Constants for one standard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardProfile {
    pub id: StandardId,
    /// CC resistance with the gun button at rest.
    pub unpressed_ohm: f64,
    /// CC resistance with the gun button pressed (travel switch actuated).
    pub pressed_ohm: f64,
    /// Relative acceptance window for CC classification.
    pub tolerance_percent: f64,
    /// Supply feeding the CC detection divider on the vehicle side.
    pub cc_source_volt: f64,
    pub cc_pullup_ohm: f64,
    /// Whether the inlet has an electromechanical gun lock.
    pub has_lock: bool,
    /// Whether the connector exposes CAN (S+/S-) wiring at the gun.
    pub exposes_can: bool,
    /// Supply and series resistance of the charger-side CP divider.
    pub cp_source_volt: f64,
    pub cp_upper_ohm: f64,
}

const fn profile(
    id: StandardId,
    unpressed_ohm: f64,
    pressed_ohm: f64,
    has_lock: bool,
    exposes_can: bool,
) -> StandardProfile {
    StandardProfile {
        id,
        unpressed_ohm,
        pressed_ohm,
        tolerance_percent: 6.0,
        cc_source_volt: 5.0,
        cc_pullup_ohm: 330.0,
        has_lock,
        exposes_can,
        cp_source_volt: 12.0,
        cp_upper_ohm: 1000.0,
    }
}

const PROFILES: [StandardProfile; 7] = [
    profile(StandardId::SaeJ1772, 480.0, 150.0, true, false),
    profile(StandardId::CcsI, 480.0, 150.0, true, false),
    profile(StandardId::Iec61851, 1030.0, 760.0, true, false),
    // CCS II inlets rely on the latch-free plug design; no gun lock.
    profile(StandardId::CcsII, 1030.0, 760.0, false, false),
    profile(StandardId::Nacs, 460.0, 400.0, true, true),
    profile(StandardId::Gbt20234_2, 220.0, 3520.0, true, false),
    // The DC connector reads 0 ohm at rest and exposes S+/S- CAN lines.
    profile(StandardId::Gbt20234_3, 0.0, 1000.0, true, true),
];

/// The embedded constant profile for a standard; total over all seven ids.
pub fn profile_of(id: StandardId) -> StandardProfile {
    PROFILES[StandardId::ALL.iter().position(|s| *s == id).unwrap()]
}

/// All seven profiles in declaration order.
pub fn all_profiles() -> &'static [StandardProfile; 7] {
    &PROFILES
}

/// Classification of a CC-line reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CcClass {
    /// Nothing plugged in; the line floats at the supply rail.
    Open,
    ConnectedPressed,
    ConnectedUnpressed,
    /// A short or an undefined resistance.
    Fault,
}

impl CcClass {
    pub fn is_connected(&self) -> bool {
        matches!(
            self,
            CcClass::ConnectedPressed | CcClass::ConnectedUnpressed
        )
    }
}

/// Relative closeness test with a 1 ohm floor on the denominator so the
/// GB/T DC 0 ohm expected value still gets a usable window.
fn within_tolerance(measured: f64, expected: f64, tolerance_percent: f64) -> bool {
    (measured - expected).abs() / expected.max(1.0) <= tolerance_percent / 100.0
}

/// Classifies a measured CC resistance against a profile. Total: every
/// reading maps to exactly one class.
pub fn classify_cc(measured: Resistance, profile: &StandardProfile) -> CcClass {
    let ohm = match measured {
        Resistance::Infinite => return CcClass::Open,
        Resistance::Ohms(v) => v,
    };
    if within_tolerance(ohm, profile.pressed_ohm, profile.tolerance_percent) {
        CcClass::ConnectedPressed
    } else if within_tolerance(ohm, profile.unpressed_ohm, profile.tolerance_percent) {
        CcClass::ConnectedUnpressed
    } else {
        CcClass::Fault
    }
}

/// Vehicle-observable CP states, distinguished by the equivalent pull-down
/// resistance on the pilot line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpState {
    /// Not connected; no pull-down at all.
    NotConnectedA,
    /// Connected, not yet charging: 2.74 kohm.
    ConnectedB,
    /// Charging authorized: 2740 || 1300, roughly 880 ohm.
    ChargingC,
    /// Charging with forced ventilation: 240 ohm.
    Ventilation,
    /// Short or undefined configuration.
    FaultD,
}

impl CpState {
    /// Canonical equivalent resistance the state presents on the CP line.
    /// `None` for the fault state, whose resistance is undefined.
    pub fn equivalent_resistance(&self) -> Option<Resistance> {
        match self {
            CpState::NotConnectedA => Some(Resistance::Infinite),
            CpState::ConnectedB => Some(Resistance::Ohms(CP_CONNECTED_OHM)),
            CpState::ChargingC => Some(Resistance::Ohms(CP_CHARGING_OHM)),
            CpState::Ventilation => Some(Resistance::Ohms(CP_VENTILATION_OHM)),
            CpState::FaultD => None,
        }
    }
}

/// Classifies the equivalent resistance observed on the CP line.
pub fn classify_cp(equivalent: Resistance) -> CpState {
    let ohm = match equivalent {
        Resistance::Infinite => return CpState::NotConnectedA,
        Resistance::Ohms(v) => v,
    };
    if within_tolerance(ohm, CP_CONNECTED_OHM, CP_TOLERANCE_PERCENT) {
        CpState::ConnectedB
    } else if within_tolerance(ohm, CP_CHARGING_OHM, CP_TOLERANCE_PERCENT) {
        CpState::ChargingC
    } else if within_tolerance(ohm, CP_VENTILATION_OHM, CP_TOLERANCE_PERCENT) {
        CpState::Ventilation
    } else {
        CpState::FaultD
    }
}

/// Relative deviation of a measured value from its expected value, in
/// percent, rounded to one decimal. `(0, 0)` is defined as 0; a nonzero
/// reading against an expected 0 has no defined relative deviation.
pub fn deviation_percent(expected: f64, real: f64) -> Result<f64, StandardsError> {
    if expected == 0.0 {
        return if real == 0.0 {
            Ok(0.0)
        } else {
            Err(StandardsError::UndefinedDeviation { real })
        };
    }
    let raw = (real - expected) / expected * 100.0;
    Ok((raw * 10.0).round() / 10.0)
}

/// Voltage at the vehicle's CC detection point for a given line
/// resistance: the profile's supply through its pull-up, read across the
/// line. An open line floats at the full supply.
pub fn cc_voltage(profile: &StandardProfile, line: Resistance) -> f64 {
    match line {
        Resistance::Infinite => profile.cc_source_volt,
        Resistance::Ohms(ohm) => profile.cc_source_volt * ohm / (profile.cc_pullup_ohm + ohm),
    }
}

/// Inverts the CC detection divider: the line resistance that produces a
/// given detection-point voltage. Readings at (or beyond) the supply rail
/// mean the line is open; classification always happens in the resistance
/// domain because voltage band orderings differ between standards.
pub fn cc_resistance_from_voltage(profile: &StandardProfile, volts: f64) -> Resistance {
    if volts >= profile.cc_source_volt {
        return Resistance::Infinite;
    }
    if volts <= 0.0 {
        return Resistance::Ohms(0.0);
    }
    Resistance::Ohms(profile.cc_pullup_ohm * volts / (profile.cc_source_volt - volts))
}

/// Voltage at the charger's CP detection point for a given equivalent
/// pull-down: the profile's pilot supply through its series resistor.
pub fn cp_voltage(profile: &StandardProfile, equivalent: Resistance) -> f64 {
    match equivalent {
        Resistance::Infinite => profile.cp_source_volt,
        Resistance::Ohms(ohm) => profile.cp_source_volt * ohm / (profile.cp_upper_ohm + ohm),
    }
}

/// All profiles as a JSON array, one object per standard.
pub fn profiles_json() -> String {
    // Serialization of a static table cannot fail.
    serde_json::to_string_pretty(&PROFILES).unwrap()
}
