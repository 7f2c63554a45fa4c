//! Named attack scenarios and their expected-outcome predicates.

use crate::attacker::{AttackCommand, AttackerDevice, WiringHarness, CC_ARG_OPEN};
use crate::bms::CanFrame;
use crate::session::{SessionOutcome, SimEvent, SimEventKind, TICK_MS};
use crate::standards::{profile_of, StandardId};
use serde::{Deserialize, Serialize};

/// One scripted run against one standard, with the predicates that define
/// success.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub standard: StandardId,
    #[serde(default)]
    pub wiring: WiringHarness,
    pub script: Vec<SimEvent>,
    #[serde(default)]
    pub expected: Expected,
    /// Canned CAN payload sequences for `TriggerCanPayload`, as arrays of
    /// `ID#HEXDATA` frames. Empty means the device's stock payloads.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub can_payloads: Vec<Vec<CanFrame>>,
    /// The recorded lid burst the device replays, as hex. Absent means the
    /// device's stock recording; a corrupt burst is rejected at replay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lid_burst_hex: Option<String>,
}

impl Scenario {
    /// The implanted-device configuration this scenario runs with.
    pub fn device(&self) -> Result<AttackerDevice, hex::FromHexError> {
        let mut device = AttackerDevice::default();
        if !self.can_payloads.is_empty() {
            device.can_payloads = self.can_payloads.clone();
        }
        if let Some(burst) = &self.lid_burst_hex {
            device.lid_burst = hex::decode(burst)?;
        }
        Ok(device)
    }
}

/// Outcome predicates; unset fields are not checked.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Expected {
    /// Final charger-side state label, e.g. `"session-ended"` or
    /// `"halted:cc-fault"`.
    pub final_evse: Option<String>,
    pub gun_removable: Option<bool>,
    pub min_delivered_wh: Option<f64>,
    pub max_delivered_wh: Option<f64>,
    pub lid_open: Option<bool>,
    pub bms_compromised: Option<bool>,
    pub bms_max_temp_at_least: Option<f64>,
    pub bms_max_temp_at_most: Option<f64>,
    /// Power must halt no later than this many ms after the last accepted
    /// attacker command.
    pub halted_within_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredicateResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn check(results: &mut Vec<PredicateResult>, name: &str, pass: bool, detail: String) {
    results.push(PredicateResult {
        name: name.to_string(),
        pass,
        detail,
    });
}

impl Expected {
    pub fn evaluate(&self, outcome: &SessionOutcome) -> Vec<PredicateResult> {
        let mut results = Vec::new();
        if let Some(want) = &self.final_evse {
            let got = outcome.final_evse.label();
            check(
                &mut results,
                "final-evse",
                &got == want,
                format!("{got} (want {want})"),
            );
        }
        if let Some(want) = self.gun_removable {
            check(
                &mut results,
                "gun-removable",
                outcome.gun_removable == want,
                format!("{} (want {want})", outcome.gun_removable),
            );
        }
        if let Some(min) = self.min_delivered_wh {
            check(
                &mut results,
                "min-delivered-wh",
                outcome.delivered_wh >= min,
                format!("{:.1} (want >= {min})", outcome.delivered_wh),
            );
        }
        if let Some(max) = self.max_delivered_wh {
            check(
                &mut results,
                "max-delivered-wh",
                outcome.delivered_wh <= max,
                format!("{:.1} (want <= {max})", outcome.delivered_wh),
            );
        }
        if let Some(want) = self.lid_open {
            check(
                &mut results,
                "lid-open",
                outcome.final_ev.lid_open == want,
                format!("{} (want {want})", outcome.final_ev.lid_open),
            );
        }
        if let Some(want) = self.bms_compromised {
            check(
                &mut results,
                "bms-compromised",
                outcome.bms_compromised == want,
                format!("{} (want {want})", outcome.bms_compromised),
            );
        }
        if let Some(min) = self.bms_max_temp_at_least {
            check(
                &mut results,
                "bms-max-temp-at-least",
                outcome.bms_max_temp_c >= min,
                format!("{:.2} degC (want >= {min})", outcome.bms_max_temp_c),
            );
        }
        if let Some(max) = self.bms_max_temp_at_most {
            check(
                &mut results,
                "bms-max-temp-at-most",
                outcome.bms_max_temp_c <= max,
                format!("{:.2} degC (want <= {max})", outcome.bms_max_temp_c),
            );
        }
        if let Some(limit) = self.halted_within_ms {
            let cmd_t = outcome
                .trace
                .iter()
                .filter(|r| r.kind == "command")
                .map(|r| r.t_ms)
                .next_back();
            let halt_t = outcome
                .trace
                .iter()
                .find(|r| {
                    r.kind == "evse-state"
                        && r.data
                            .get("to")
                            .and_then(|v| v.as_str())
                            .is_some_and(|s| s.starts_with("halted:"))
                })
                .map(|r| r.t_ms);
            let (pass, detail) = match (cmd_t, halt_t) {
                (Some(c), Some(h)) if h >= c => (
                    h - c <= limit,
                    format!("halted {} ms after command (want <= {limit})", h - c),
                ),
                (Some(_), Some(_)) => (false, "halt preceded the command".to_string()),
                (None, _) => (false, "no accepted attacker command in trace".to_string()),
                (_, None) => (false, "session never halted".to_string()),
            };
            check(&mut results, "halted-within-ms", pass, detail);
        }
        results
    }
}

/// `SetCcResistance` argument that pins the line at the profile's
/// unpressed value: the dedicated short switch where that value is 0 ohm.
fn pin_unpressed_arg(standard: StandardId) -> u16 {
    let unpressed = profile_of(standard).unpressed_ohm;
    if unpressed == 0.0 {
        0
    } else {
        unpressed.round() as u16
    }
}

/// `SetCcResistance` argument for a denial-of-service reading: a dead
/// short, except where 0 ohm is a legitimate reading (GB/T DC), in which
/// case the line is cut instead.
fn dos_arg(standard: StandardId) -> u16 {
    if profile_of(standard).unpressed_ohm == 0.0 {
        CC_ARG_OPEN
    } else {
        0
    }
}

fn wiring_for(standard: StandardId) -> WiringHarness {
    WiringHarness {
        // The tap can only be installed where the connector has CAN lines.
        can_tap: profile_of(standard).exposes_can,
        ..WiringHarness::default()
    }
}

fn scenario(
    name: &str,
    standard: StandardId,
    wiring: WiringHarness,
    script: Vec<SimEvent>,
    expected: Expected,
) -> Scenario {
    Scenario {
        name: name.into(),
        standard,
        wiring,
        script,
        expected,
        can_payloads: Vec::new(),
        lid_burst_hex: None,
    }
}

/// An uninterfered plug / charge one hour / stop / unplug sequence.
pub fn nominal(standard: StandardId) -> Scenario {
    let stop = 300 + 3_600_000;
    scenario(
        "nominal",
        standard,
        WiringHarness::default(),
        vec![
            SimEvent::new(0, SimEventKind::PlugIn),
            SimEvent::new(100, SimEventKind::ButtonPress),
            SimEvent::new(300, SimEventKind::ButtonRelease),
            SimEvent::new(stop, SimEventKind::UserStop),
            SimEvent::new(stop + 100, SimEventKind::ButtonPress),
            SimEvent::new(stop + 300, SimEventKind::ButtonRelease),
        ],
        Expected {
            final_evse: Some("session-ended".into()),
            gun_removable: Some(true),
            min_delivered_wh: Some(7000.0),
            max_delivered_wh: Some(7100.0),
            ..Expected::default()
        },
    )
}

/// Mid-charge, the device forces an abnormal CC reading; the pile must
/// halt within one tick.
pub fn dos_cc(standard: StandardId) -> Scenario {
    scenario(
        "dos-cc",
        standard,
        WiringHarness::default(),
        vec![
            SimEvent::new(0, SimEventKind::PlugIn),
            SimEvent::attacker(
                1000,
                &AttackCommand::SetCcResistance {
                    ohm: dos_arg(standard),
                },
            ),
            SimEvent::new(1000 + TICK_MS, SimEventKind::Tick),
        ],
        Expected {
            final_evse: Some("halted:cc-fault".into()),
            halted_within_ms: Some(TICK_MS),
            ..Expected::default()
        },
    )
}

/// Mid-charge, the device injects a 5% duty pilot; the pile reads it as an
/// inactive/fault pilot and halts.
pub fn dos_cp(standard: StandardId) -> Scenario {
    scenario(
        "dos-cp",
        standard,
        WiringHarness::default(),
        vec![
            SimEvent::new(0, SimEventKind::PlugIn),
            SimEvent::attacker(1000, &AttackCommand::SetCpDuty { centi_percent: 500 }),
            SimEvent::new(1000 + TICK_MS, SimEventKind::Tick),
        ],
        Expected {
            final_evse: Some("halted:attack-observed-duty".into()),
            halted_within_ms: Some(TICK_MS),
            ..Expected::default()
        },
    )
}

/// The device pins the CC line at the unpressed value, so the unlock
/// button sequence never shows the vehicle a pressed reading and the lock
/// never releases: the gun is trapped.
pub fn deadlock(standard: StandardId) -> Scenario {
    scenario(
        "deadlock",
        standard,
        WiringHarness::default(),
        vec![
            SimEvent::new(0, SimEventKind::PlugIn),
            SimEvent::attacker(
                1000,
                &AttackCommand::SetCcResistance {
                    ohm: pin_unpressed_arg(standard),
                },
            ),
            SimEvent::new(2000, SimEventKind::UserStop),
            SimEvent::new(2200, SimEventKind::ButtonPress),
            SimEvent::new(2400, SimEventKind::ButtonRelease),
            SimEvent::new(3000, SimEventKind::Tick),
        ],
        Expected {
            gun_removable: Some(false),
            ..Expected::default()
        },
    )
}

/// Lid replay for port access, an 85% duty override for maximum current,
/// then the CAN exploit; over a two-hour charge the compromised BMS runs
/// well past its 40 degC cutoff.
pub fn can_overheat(standard: StandardId) -> Scenario {
    scenario(
        "can-overheat",
        standard,
        wiring_for(standard),
        vec![
            SimEvent::new(0, SimEventKind::PlugIn),
            SimEvent::attacker(100, &AttackCommand::ReplayLidSignal),
            SimEvent::attacker(
                400,
                &AttackCommand::SetCpDuty {
                    centi_percent: 8500,
                },
            ),
            SimEvent::attacker(1000, &AttackCommand::TriggerCanPayload { index: 0 }),
            SimEvent::new(7_200_000, SimEventKind::Tick),
        ],
        Expected {
            lid_open: Some(true),
            bms_compromised: Some(true),
            bms_max_temp_at_least: Some(56.0),
            ..Expected::default()
        },
    )
}

pub const SCENARIO_NAMES: [&str; 5] = ["nominal", "dos-cc", "dos-cp", "deadlock", "can-overheat"];

/// Builds a library scenario by name for a standard.
pub fn built_in(name: &str, standard: StandardId) -> Option<Scenario> {
    match name {
        "nominal" => Some(nominal(standard)),
        "dos-cc" => Some(dos_cc(standard)),
        "dos-cp" => Some(dos_cp(standard)),
        "deadlock" => Some(deadlock(standard)),
        "can-overheat" => Some(can_overheat(standard)),
        _ => None,
    }
}
