//! Joint vehicle-side and charger-side state machines driven by a
//! deterministic 100 ms-tick event loop: connection detection, lock
//! engagement, pilot negotiation, charging, thermal protection,
//! termination, and the deadlock condition.

use crate::attacker::{
    decode_command, effective_cc, AttackCommand, AttackerDevice, WiringHarness, CC_ARG_OPEN,
};
use crate::bms::{BmsState, ThermalParams};
use crate::circuit::{duty_to_current, AdvertisedCurrent, CircuitNetwork, Resistance};
use crate::standards::{classify_cc, CcClass, CpState, StandardProfile};
use crate::trace::{TraceRecord, TraceSource};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Simulated tick length.
pub const TICK_MS: u64 = 100;
/// AC supply voltage used for energy accounting.
pub const CHARGE_VOLTAGE: f64 = 220.0;
/// Pilot duty the pile advertises when the attacker is not overriding it.
pub const DEFAULT_ADVERTISED_DUTY: f64 = 50.0;
/// Gun temperature at which charging must halt.
pub const GUN_CUTOFF_TEMP_C: f64 = 90.0;
/// A press must be followed by a release within this window to unlock.
pub const UNLOCK_WINDOW_MS: u64 = 2000;

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("script events must be time-ordered: {later} ms follows {earlier} ms")]
    EventOrder { earlier: u64, later: u64 },
    #[error("wiring taps CAN but {0} exposes no CAN lines at the connector")]
    CanTapUnavailable(crate::standards::StandardId),
}

/// Why the pile halted power delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaltReason {
    CcFault,
    CpFault,
    ThermalCutoff,
    UserStop,
    AttackObservedDuty,
}

impl fmt::Display for HaltReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            HaltReason::CcFault => "cc-fault",
            HaltReason::CpFault => "cp-fault",
            HaltReason::ThermalCutoff => "thermal-cutoff",
            HaltReason::UserStop => "user-stop",
            HaltReason::AttackObservedDuty => "attack-observed-duty",
        };
        f.write_str(s)
    }
}

/// Charger-side state. `Charging` is reachable only through `Handshake`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "state")]
pub enum EvseState {
    Idle,
    GunConnected,
    Handshake,
    Charging { amps: f64 },
    Halted { reason: HaltReason },
    SessionEnded,
}

impl EvseState {
    pub fn is_charging(&self) -> bool {
        matches!(self, EvseState::Charging { .. })
    }

    /// Stable label used in traces and scenario predicates, e.g.
    /// `"charging"` or `"halted:cc-fault"`.
    pub fn label(&self) -> String {
        match self {
            EvseState::Idle => "idle".into(),
            EvseState::GunConnected => "gun-connected".into(),
            EvseState::Handshake => "handshake".into(),
            EvseState::Charging { .. } => "charging".into(),
            EvseState::Halted { reason } => format!("halted:{reason}"),
            EvseState::SessionEnded => "session-ended".into(),
        }
    }
}

/// Vehicle-side observable state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvState {
    pub lock_engaged: bool,
    pub cp_state: CpState,
    pub lid_open: bool,
    pub gun_temp_c: f64,
}

impl Default for EvState {
    fn default() -> Self {
        EvState {
            lock_engaged: false,
            cp_state: CpState::NotConnectedA,
            lid_open: false,
            gun_temp_c: 25.0,
        }
    }
}

mod hex_frame {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(frame: &[u8; 4], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(frame))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 4], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = hex::decode(&text).map_err(serde::de::Error::custom)?;
        bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("command frame must be 4 bytes of hex"))
    }
}

/// What happens at a point in simulated time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SimEventKind {
    PlugIn,
    ButtonPress,
    ButtonRelease,
    UserStop,
    /// A raw 4-byte frame on the 433 MHz link; the device validates the
    /// checksum itself, so scripts can deliver corrupted frames.
    AttackerCmd {
        #[serde(with = "hex_frame")]
        frame: [u8; 4],
    },
    TempSet {
        celsius: f64,
    },
    /// No effect; extends the simulated horizon.
    Tick,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: SimEventKind,
}

impl SimEvent {
    pub fn new(t_ms: u64, kind: SimEventKind) -> Self {
        SimEvent { t_ms, kind }
    }

    pub fn attacker(t_ms: u64, cmd: &AttackCommand) -> Self {
        SimEvent::new(
            t_ms,
            SimEventKind::AttackerCmd {
                frame: crate::attacker::encode_command(cmd),
            },
        )
    }
}

/// Result of replaying a script.
#[derive(Debug, Clone, Serialize)]
pub struct SessionOutcome {
    pub final_evse: EvseState,
    pub final_ev: EvState,
    /// True exactly when the lock is disengaged at the end of the run.
    pub gun_removable: bool,
    pub delivered_wh: f64,
    pub bms_max_temp_c: f64,
    pub bms_compromised: bool,
    #[serde(skip)]
    pub trace: Vec<TraceRecord>,
}

struct PendingUnlock {
    pressed_at_ms: u64,
    saw_pressed: bool,
}

/// One charging session: a single-threaded deterministic event loop owning
/// both state machines, the implanted device, and the BMS model.
pub struct Session {
    profile: StandardProfile,
    wiring: WiringHarness,
    device: AttackerDevice,
    evse: EvseState,
    ev: EvState,
    bms: BmsState,
    thermal: ThermalParams,
    gun_present: bool,
    button_pressed: bool,
    stop_requested: bool,
    pending_unlock: Option<PendingUnlock>,
    now_ms: u64,
    delivered_wh: f64,
    bms_max_temp_c: f64,
    trace: Vec<TraceRecord>,
}

impl Session {
    pub fn new(
        profile: StandardProfile,
        wiring: WiringHarness,
        seed: u64,
    ) -> Result<Self, SessionError> {
        Self::with_device(profile, wiring, AttackerDevice::default(), seed)
    }

    /// Builds a session around a specific implanted-device configuration
    /// (custom CAN payloads, a different recorded lid burst).
    pub fn with_device(
        profile: StandardProfile,
        wiring: WiringHarness,
        device: AttackerDevice,
        seed: u64,
    ) -> Result<Self, SessionError> {
        if wiring.can_tap && !profile.exposes_can {
            return Err(SessionError::CanTapUnavailable(profile.id));
        }
        let thermal = ThermalParams::default();
        let bms = BmsState::new(thermal.ambient_c);
        let mut session = Session {
            profile,
            wiring,
            device,
            evse: EvseState::Idle,
            ev: EvState::default(),
            bms_max_temp_c: bms.temp_c,
            bms,
            thermal,
            gun_present: false,
            button_pressed: false,
            stop_requested: false,
            pending_unlock: None,
            now_ms: 0,
            delivered_wh: 0.0,
            trace: Vec::new(),
        };
        session.push(
            TraceRecord::new(0, TraceSource::Evse, "session-start")
                .with("seed", seed)
                .with("standard", profile.id.as_str()),
        );
        Ok(session)
    }

    pub fn evse_state(&self) -> EvseState {
        self.evse
    }

    pub fn ev_state(&self) -> EvState {
        self.ev
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    fn push(&mut self, record: TraceRecord) {
        self.trace.push(record);
    }

    fn record(&mut self, source: TraceSource, kind: &str) -> TraceRecord {
        TraceRecord::new(self.now_ms, source, kind)
    }

    fn gun_network(&self) -> CircuitNetwork {
        if !self.gun_present {
            return CircuitNetwork::open();
        }
        let ohm = if self.button_pressed {
            self.profile.pressed_ohm
        } else {
            self.profile.unpressed_ohm
        };
        // Profile resistances are nonnegative constants.
        CircuitNetwork::resistor(ohm).unwrap()
    }

    fn observed_cc(&self) -> (Resistance, CcClass) {
        let cc = effective_cc(&self.wiring);
        (cc, classify_cc(cc, &self.profile))
    }

    fn observed_duty(&self) -> f64 {
        self.wiring
            .cp_duty_override
            .unwrap_or(DEFAULT_ADVERTISED_DUTY)
    }

    fn set_evse(&mut self, next: EvseState) {
        if self.evse == next {
            return;
        }
        let rec = self
            .record(TraceSource::Evse, "evse-state")
            .with("from", self.evse.label())
            .with("to", next.label());
        let rec = if let EvseState::Charging { amps } = next {
            rec.with("amps", amps)
        } else {
            rec
        };
        self.push(rec);
        self.evse = next;
    }

    fn set_cp(&mut self, next: CpState) {
        if self.ev.cp_state == next {
            return;
        }
        let rec = self
            .record(TraceSource::Ev, "cp-state")
            .with("from", serde_json::to_value(self.ev.cp_state).unwrap())
            .with("to", serde_json::to_value(next).unwrap());
        self.push(rec);
        self.ev.cp_state = next;
    }

    fn set_lock(&mut self, engaged: bool) {
        if self.ev.lock_engaged == engaged {
            return;
        }
        self.ev.lock_engaged = engaged;
        let rec = self
            .record(TraceSource::Ev, "lock")
            .with("engaged", engaged);
        self.push(rec);
    }

    fn halt(&mut self, reason: HaltReason) {
        self.set_evse(EvseState::Halted { reason });
    }

    /// Applies one scripted event. State transitions triggered by the event
    /// surface on the next [`Self::evaluate`] call.
    pub fn apply(&mut self, event: &SimEvent) {
        self.now_ms = self.now_ms.max(event.t_ms);
        match event.kind {
            SimEventKind::PlugIn => {
                self.gun_present = true;
                self.button_pressed = false;
                self.wiring.genuine_cc = self.gun_network();
                self.set_cp(CpState::NotConnectedA);
                if matches!(
                    self.evse,
                    EvseState::Halted { .. } | EvseState::SessionEnded
                ) {
                    self.set_evse(EvseState::Idle);
                }
                let rec = self.record(TraceSource::Ev, "plug-in");
                self.push(rec);
            }
            SimEventKind::ButtonPress => {
                self.button_pressed = true;
                self.wiring.genuine_cc = self.gun_network();
                let (_, class) = self.observed_cc();
                let rec = self.record(TraceSource::Ev, "button-press");
                self.push(rec);
                if !self.evse.is_charging() {
                    self.pending_unlock = Some(PendingUnlock {
                        pressed_at_ms: self.now_ms,
                        saw_pressed: class == CcClass::ConnectedPressed,
                    });
                }
            }
            SimEventKind::ButtonRelease => {
                self.button_pressed = false;
                self.wiring.genuine_cc = self.gun_network();
                let rec = self.record(TraceSource::Ev, "button-release");
                self.push(rec);
                self.finish_unlock_attempt();
            }
            SimEventKind::UserStop => {
                self.stop_requested = true;
                let rec = self.record(TraceSource::Ev, "user-stop");
                self.push(rec);
            }
            SimEventKind::AttackerCmd { frame } => self.handle_attacker_frame(frame),
            SimEventKind::TempSet { celsius } => {
                self.ev.gun_temp_c = celsius;
                let rec = self
                    .record(TraceSource::Ev, "temp-set")
                    .with("celsius", celsius);
                self.push(rec);
            }
            SimEventKind::Tick => {}
        }
    }

    /// The unlock protocol: the vehicle releases the lock only when the CC
    /// line showed the pressed value at the press and shows the unpressed
    /// value at the release, with the release inside the 2 s window. A
    /// spoofed constant reading never matches both, which is exactly the
    /// deadlock condition.
    fn finish_unlock_attempt(&mut self) {
        let Some(pending) = self.pending_unlock.take() else {
            return;
        };
        if self.evse.is_charging() {
            return;
        }
        let (_, class) = self.observed_cc();
        let in_window = self.now_ms.saturating_sub(pending.pressed_at_ms) <= UNLOCK_WINDOW_MS;
        let success = in_window && pending.saw_pressed && class == CcClass::ConnectedUnpressed;
        let rec = self
            .record(TraceSource::Ev, "unlock-attempt")
            .with("success", success);
        self.push(rec);
        if success {
            self.set_lock(false);
            if self.evse
                == (EvseState::Halted {
                    reason: HaltReason::UserStop,
                })
            {
                self.set_evse(EvseState::SessionEnded);
            }
        }
    }

    fn handle_attacker_frame(&mut self, frame: [u8; 4]) {
        let cmd = match decode_command(&frame) {
            Ok(cmd) => cmd,
            Err(err) => {
                // The device silently drops bad frames; the trace keeps them.
                let rec = self
                    .record(TraceSource::Attacker, "command-rejected")
                    .with("frame", hex::encode(frame))
                    .with("reason", err.to_string());
                self.push(rec);
                return;
            }
        };
        let mut accepted = self
            .record(TraceSource::Attacker, "command")
            .with("frame", hex::encode(frame))
            .with("op", serde_json::to_value(cmd).unwrap()["op"].clone());
        match cmd {
            AttackCommand::Disarm => {
                self.wiring.attacker_cc_override = None;
                self.wiring.cp_duty_override = None;
                self.device.pot.disarm();
                self.push(accepted);
            }
            AttackCommand::SetCcResistance { ohm } => match self.device.force_cc(ohm) {
                Ok(forced) => {
                    accepted = accepted.with(
                        "forced_cc",
                        match forced {
                            Resistance::Ohms(v) => serde_json::json!(v),
                            Resistance::Infinite => serde_json::json!("infinite"),
                        },
                    );
                    if ohm == CC_ARG_OPEN {
                        accepted = accepted.with("path", "cut");
                    } else if ohm == 0 {
                        accepted = accepted.with("path", "short-switch");
                    } else {
                        accepted = accepted.with("path", "potentiometer");
                    }
                    self.wiring.attacker_cc_override = Some(forced);
                    self.push(accepted);
                }
                Err(err) => {
                    let rec = self
                        .record(TraceSource::Attacker, "command-rejected")
                        .with("frame", hex::encode(frame))
                        .with("reason", err.to_string());
                    self.push(rec);
                }
            },
            AttackCommand::SetCpDuty { centi_percent } => {
                let duty = f64::from(centi_percent) / 100.0;
                accepted = accepted.with("duty_percent", duty);
                self.wiring.cp_duty_override = Some(duty);
                self.push(accepted);
            }
            AttackCommand::TriggerCanPayload { index } => {
                let reachable = self.wiring.can_tap && self.profile.exposes_can;
                let payload = self.device.can_payloads.get(usize::from(index)).cloned();
                match (reachable, payload) {
                    (false, _) => {
                        accepted = accepted.with("effect", "no-can-access");
                        self.push(accepted);
                    }
                    (true, None) => {
                        let rec = self
                            .record(TraceSource::Attacker, "command-rejected")
                            .with("frame", hex::encode(frame))
                            .with("reason", format!("no canned payload {index}"));
                        self.push(rec);
                    }
                    (true, Some(frames)) => {
                        accepted = accepted.with("effect", "can-injected");
                        self.push(accepted);
                        let was_compromised = self.bms.compromised();
                        for can in frames {
                            let rec = self
                                .record(TraceSource::Attacker, "can-frame")
                                .with("frame", can.to_string());
                            self.push(rec);
                            self.bms.feed(&can);
                        }
                        if self.bms.compromised() && !was_compromised {
                            let rec = self
                                .record(TraceSource::Bms, "override-written")
                                .with("value", self.bms.mosfet_override);
                            self.push(rec);
                        }
                    }
                }
            }
            AttackCommand::ReplayLidSignal => {
                match crate::attacker::decode_lid_burst(&self.device.lid_burst) {
                    Ok(_) => {
                        accepted = accepted.with("burst", hex::encode(&self.device.lid_burst));
                        self.push(accepted);
                        if !self.ev.lid_open {
                            self.ev.lid_open = true;
                            // Fixed-code replay: the lid opens with no
                            // authentication step at all.
                            let rec = self
                                .record(TraceSource::Ev, "lid-open")
                                .with("via", "replay");
                            self.push(rec);
                        }
                    }
                    Err(err) => {
                        let rec = self
                            .record(TraceSource::Attacker, "command-rejected")
                            .with("frame", hex::encode(frame))
                            .with("reason", err.to_string());
                        self.push(rec);
                    }
                }
            }
        }
    }

    /// Runs one evaluation of both state machines against the currently
    /// observed CC reading, pilot duty, and temperatures.
    pub fn evaluate(&mut self) {
        let (_, cc_class) = self.observed_cc();
        let duty = self.observed_duty();

        match self.evse {
            EvseState::Idle => {
                if cc_class.is_connected() {
                    self.set_evse(EvseState::GunConnected);
                    if self.profile.has_lock {
                        self.set_lock(true);
                    }
                    self.set_cp(CpState::ConnectedB);
                }
            }
            EvseState::GunConnected => match cc_class {
                CcClass::Open => {
                    self.set_evse(EvseState::Idle);
                    self.set_cp(CpState::NotConnectedA);
                }
                CcClass::Fault => self.halt(HaltReason::CcFault),
                _ => {
                    if self.ev.cp_state == CpState::ConnectedB {
                        self.set_cp(CpState::ChargingC);
                    } else if self.ev.cp_state == CpState::ChargingC {
                        self.set_evse(EvseState::Handshake);
                    }
                }
            },
            EvseState::Handshake => {
                if !cc_class.is_connected() {
                    self.halt(HaltReason::CcFault);
                } else if self.ev.gun_temp_c >= GUN_CUTOFF_TEMP_C {
                    self.halt(HaltReason::ThermalCutoff);
                } else if let Ok(AdvertisedCurrent::Amps(amps)) = duty_to_current(duty) {
                    self.set_evse(EvseState::Charging { amps });
                    if self.profile.has_lock {
                        self.set_lock(true);
                    }
                }
                // An idle or faulted pilot keeps the handshake waiting.
            }
            EvseState::Charging { amps } => {
                if !cc_class.is_connected() {
                    // Improper insertion and impedance jumps are critical
                    // events; power stops on the next evaluation.
                    self.halt(HaltReason::CcFault);
                } else if !matches!(duty_to_current(duty), Ok(AdvertisedCurrent::Amps(_))) {
                    self.halt(HaltReason::AttackObservedDuty);
                } else if self.ev.gun_temp_c >= GUN_CUTOFF_TEMP_C {
                    self.halt(HaltReason::ThermalCutoff);
                } else if self.ev.cp_state != CpState::ChargingC {
                    self.halt(HaltReason::CpFault);
                } else if self.stop_requested {
                    self.stop_requested = false;
                    self.halt(HaltReason::UserStop);
                } else if let Ok(AdvertisedCurrent::Amps(new_amps)) = duty_to_current(duty) {
                    if new_amps != amps {
                        self.set_evse(EvseState::Charging { amps: new_amps });
                    }
                }
            }
            EvseState::Halted { .. } | EvseState::SessionEnded => {
                self.stop_requested = false;
            }
        }

        // A lock can hold only while the line reads a connected state on a
        // standard that has a lock at all.
        if self.ev.lock_engaged && (!self.profile.has_lock || !cc_class.is_connected()) {
            self.set_lock(false);
        }
    }

    /// Applies one event and evaluates the machines once: the single-step
    /// transition function.
    pub fn step(&mut self, event: &SimEvent) -> &[TraceRecord] {
        let before = self.trace.len();
        self.apply(event);
        self.evaluate();
        &self.trace[before..]
    }

    fn advance_tick(&mut self, events: &[SimEvent]) {
        for event in events {
            self.apply(event);
        }
        self.evaluate();

        let amps = match self.evse {
            EvseState::Charging { amps } => amps,
            _ => 0.0,
        };
        let mosfet_before = self.bms.mosfet_on;
        self.bms.tick(amps, TICK_MS as f64 / 1000.0, &self.thermal);
        self.bms_max_temp_c = self.bms_max_temp_c.max(self.bms.temp_c);
        if mosfet_before && !self.bms.mosfet_on {
            let temp = self.bms.temp_c;
            let rec = self
                .record(TraceSource::Bms, "mosfet-open")
                .with("temp_c", temp);
            self.push(rec);
        }
        if amps > 0.0 {
            self.delivered_wh += amps * CHARGE_VOLTAGE * (TICK_MS as f64 / 3_600_000.0);
        }
    }

    fn finish(mut self) -> SessionOutcome {
        let rec = self
            .record(TraceSource::Evse, "session-end")
            .with("bms_compromised", self.bms.compromised())
            .with("bms_max_temp_c", self.bms_max_temp_c)
            .with("delivered_wh", self.delivered_wh)
            .with("final_state", self.evse.label())
            .with("gun_removable", !self.ev.lock_engaged);
        self.push(rec);
        SessionOutcome {
            final_evse: self.evse,
            final_ev: self.ev,
            gun_removable: !self.ev.lock_engaged,
            delivered_wh: self.delivered_wh,
            bms_max_temp_c: self.bms_max_temp_c,
            bms_compromised: self.bms.compromised(),
            trace: self.trace,
        }
    }
}

/// Replays a time-ordered script. Identical inputs (including the seed)
/// produce byte-identical traces.
///
/// Events land on the first 100 ms tick at or after their timestamp; all
/// events of a tick apply before that tick's evaluation, so an injected
/// fault halts charging within one tick. The run ends when the script is
/// exhausted or the session reaches `SessionEnded`.
pub fn run_session(
    profile: StandardProfile,
    script: &[SimEvent],
    wiring: WiringHarness,
    seed: u64,
) -> Result<SessionOutcome, SessionError> {
    run_session_with_device(profile, script, wiring, AttackerDevice::default(), seed)
}

/// [`run_session`] with a custom implanted-device configuration.
pub fn run_session_with_device(
    profile: StandardProfile,
    script: &[SimEvent],
    wiring: WiringHarness,
    device: AttackerDevice,
    seed: u64,
) -> Result<SessionOutcome, SessionError> {
    for pair in script.windows(2) {
        if pair[1].t_ms < pair[0].t_ms {
            return Err(SessionError::EventOrder {
                earlier: pair[0].t_ms,
                later: pair[1].t_ms,
            });
        }
    }
    let mut session = Session::with_device(profile, wiring, device, seed)?;
    let horizon = script.last().map(|e| e.t_ms).unwrap_or(0);
    let ticks = horizon.div_ceil(TICK_MS);
    let mut cursor = 0usize;
    for tick in 0..=ticks {
        session.now_ms = tick * TICK_MS;
        let start = cursor;
        while cursor < script.len() && script[cursor].t_ms <= tick * TICK_MS {
            cursor += 1;
        }
        let events: Vec<SimEvent> = script[start..cursor].to_vec();
        session.advance_tick(&events);
        if session.evse == EvseState::SessionEnded {
            break;
        }
    }
    Ok(session.finish())
}
