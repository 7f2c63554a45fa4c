//! The implanted gun-plug device: a programmable resistor spoofing the CC
//! line, a PWM injector for the CP line, a fixed-code lid-signal replayer,
//! and canned CAN payloads, all driven by 4-byte commands received over a
//! 433 MHz link.

use crate::circuit::{CircuitNetwork, Resistance};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AttackerError {
    #[error("command frame must be exactly 4 bytes, got {0}")]
    FrameLength(usize),
    #[error("checksum mismatch: expected {expected:#04x}, got {got:#04x}")]
    Checksum { expected: u8, got: u8 },
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("target {target} ohm is outside the device range 0..={ceiling}")]
    Unreachable { target: f64, ceiling: f64 },
    #[error("sync word {0:#010x} does not fit in 26 bits")]
    SyncTooWide(u32),
    #[error("malformed lid burst: {0}")]
    MalformedBurst(String),
}

/// Sentinel argument of `SetCcResistance` meaning "cut the line".
pub const CC_ARG_OPEN: u16 = 0xFFFF;

/// A remote command for the implanted device. On the wire each command is
/// 4 bytes: opcode, 16-bit big-endian argument, and an XOR checksum over
/// the first three bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "op")]
pub enum AttackCommand {
    /// Clear every override and return the gun to genuine behavior.
    Disarm,
    /// Pin the CC line at roughly `ohm` (0 closes the short switch,
    /// 0xFFFF opens the line entirely).
    SetCcResistance { ohm: u16 },
    /// Override the observed pilot duty cycle; argument is duty x 100.
    SetCpDuty { centi_percent: u16 },
    /// Replay the canned CAN frame sequence with this index.
    TriggerCanPayload { index: u16 },
    /// Replay the recorded lid-open burst.
    ReplayLidSignal,
}

impl AttackCommand {
    fn opcode(&self) -> u8 {
        match self {
            AttackCommand::Disarm => 0x00,
            AttackCommand::SetCcResistance { .. } => 0x01,
            AttackCommand::SetCpDuty { .. } => 0x02,
            AttackCommand::TriggerCanPayload { .. } => 0x03,
            AttackCommand::ReplayLidSignal => 0x04,
        }
    }

    fn arg(&self) -> u16 {
        match *self {
            AttackCommand::Disarm | AttackCommand::ReplayLidSignal => 0,
            AttackCommand::SetCcResistance { ohm } => ohm,
            AttackCommand::SetCpDuty { centi_percent } => centi_percent,
            AttackCommand::TriggerCanPayload { index } => index,
        }
    }
}

/// Encodes a command into its 4-byte wire frame.
pub fn encode_command(cmd: &AttackCommand) -> [u8; 4] {
    let op = cmd.opcode();
    let [hi, lo] = cmd.arg().to_be_bytes();
    [op, hi, lo, op ^ hi ^ lo]
}

/// Decodes and validates a 4-byte wire frame.
pub fn decode_command(bytes: &[u8]) -> Result<AttackCommand, AttackerError> {
    let [op, hi, lo, sum]: [u8; 4] = bytes
        .try_into()
        .map_err(|_| AttackerError::FrameLength(bytes.len()))?;
    let expected = op ^ hi ^ lo;
    if sum != expected {
        return Err(AttackerError::Checksum { expected, got: sum });
    }
    let arg = u16::from_be_bytes([hi, lo]);
    match op {
        0x00 => Ok(AttackCommand::Disarm),
        0x01 => Ok(AttackCommand::SetCcResistance { ohm: arg }),
        0x02 => Ok(AttackCommand::SetCpDuty { centi_percent: arg }),
        0x03 => Ok(AttackCommand::TriggerCanPayload { index: arg }),
        0x04 => Ok(AttackCommand::ReplayLidSignal),
        other => Err(AttackerError::UnknownOpcode(other)),
    }
}

/// Behavioral model of the AD5160-class digital potentiometer wired onto
/// the CC pin. 256 wiper taps over the full-scale resistance, plus a fixed
/// wiper resistance that sets the floor; every achievable value is
/// `wiper + tap * full_scale / 256`.
///
/// The default uses the 5 kohm part: its 19.5 ohm step is fine enough to
/// land inside the 6% acceptance window of every published CC value (the
/// 10 kohm part's 39 ohm step cannot reach the 150 ohm cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgrammableResistor {
    pub full_scale_ohm: f64,
    pub taps: u16,
    pub wiper_ohm: f64,
    pub current_tap: u8,
    pub armed: bool,
}

impl Default for ProgrammableResistor {
    fn default() -> Self {
        ProgrammableResistor::new(5_000.0)
    }
}

impl ProgrammableResistor {
    pub fn new(full_scale_ohm: f64) -> Self {
        ProgrammableResistor {
            full_scale_ohm,
            taps: 256,
            wiper_ohm: 60.0,
            current_tap: 0,
            armed: false,
        }
    }

    fn step(&self) -> f64 {
        self.full_scale_ohm / f64::from(self.taps)
    }

    /// Highest programmable resistance.
    pub fn ceiling(&self) -> f64 {
        self.wiper_ohm + self.full_scale_ohm
    }

    /// Resistance at a given tap position.
    pub fn resistance_at(&self, tap: u8) -> f64 {
        self.wiper_ohm + f64::from(tap) * self.step()
    }

    /// Selects the tap closest to `target` and returns the achieved value.
    ///
    /// Targets below the wiper floor saturate at tap 0; targets above the
    /// device ceiling are rejected.
    pub fn set_cc(&mut self, target: f64) -> Result<f64, AttackerError> {
        if !(0.0..=self.ceiling()).contains(&target) {
            return Err(AttackerError::Unreachable {
                target,
                ceiling: self.ceiling(),
            });
        }
        let raw = ((target - self.wiper_ohm) / self.step()).round();
        let tap = raw.clamp(0.0, f64::from(self.taps - 1)) as u8;
        self.current_tap = tap;
        self.armed = true;
        Ok(self.resistance_at(tap))
    }

    pub fn disarm(&mut self) {
        self.armed = false;
    }
}

/// The wiring as seen from the vehicle's CC detection point: the genuine
/// gun circuit, plus whatever the implanted device is currently forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WiringHarness {
    /// The genuine gun-side CC network (open when nothing is plugged in).
    #[serde(skip, default = "CircuitNetwork::open")]
    pub genuine_cc: CircuitNetwork,
    /// When armed, the device hides the genuine circuit behind this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attacker_cc_override: Option<Resistance>,
    /// When set, the observed pilot duty cycle regardless of the pile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp_duty_override: Option<f64>,
    /// Whether the device is tapped into the connector's CAN lines.
    #[serde(default)]
    pub can_tap: bool,
}

impl Default for WiringHarness {
    fn default() -> Self {
        WiringHarness {
            genuine_cc: CircuitNetwork::open(),
            attacker_cc_override: None,
            cp_duty_override: None,
            can_tap: false,
        }
    }
}

/// The CC resistance the vehicle actually observes: the attacker override
/// when armed, otherwise the genuine gun circuit's DC resistance.
pub fn effective_cc(wiring: &WiringHarness) -> Resistance {
    match wiring.attacker_cc_override {
        Some(forced) => forced,
        None => wiring.genuine_cc.dc_resistance(),
    }
}

const LID_PACKETS: usize = 10;
const LID_SYNC_BITS: usize = 26;
const LID_PAYLOADS: usize = 3;
const LID_PAYLOAD_BITS: usize = 16;
const LID_GUARD_BITS: usize = 3;
const LID_GUARD_PATTERN: u32 = 0b101;
/// sync | (payload guard) x 3 | terminal bit = 84 bits per packet.
const LID_PACKET_BITS: usize =
    LID_SYNC_BITS + LID_PAYLOADS * (LID_PAYLOAD_BITS + LID_GUARD_BITS) + 1;
/// Ten packets pack to exactly 105 bytes.
pub const LID_BURST_BYTES: usize = LID_PACKETS * LID_PACKET_BITS / 8;

/// The fixed wireless "open lid" message: ten packets, each a 26-bit sync
/// word and three 16-bit payloads separated by 3-bit guards. Packets are
/// bit-identical except that the trailing bit of the final packet is 0,
/// marking the end of the transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LidPacketBurst {
    pub sync: u32,
    pub payloads: [u16; LID_PAYLOADS],
}

struct BitWriter {
    bytes: Vec<u8>,
    used: usize,
}

impl BitWriter {
    fn new(capacity_bytes: usize) -> Self {
        BitWriter {
            bytes: vec![0; capacity_bytes],
            used: 0,
        }
    }

    fn push(&mut self, value: u32, bits: usize) {
        for i in (0..bits).rev() {
            let bit = (value >> i) & 1;
            self.bytes[self.used / 8] |= (bit as u8) << (7 - self.used % 8);
            self.used += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    fn take(&mut self, bits: usize) -> u32 {
        let mut out = 0u32;
        for _ in 0..bits {
            let bit = (self.bytes[self.pos / 8] >> (7 - self.pos % 8)) & 1;
            out = (out << 1) | u32::from(bit);
            self.pos += 1;
        }
        out
    }
}

/// Encodes a lid burst to its 105-byte bitstream, MSB first.
pub fn encode_lid_burst(
    sync: u32,
    payloads: [u16; LID_PAYLOADS],
) -> Result<Vec<u8>, AttackerError> {
    if sync >> LID_SYNC_BITS != 0 {
        return Err(AttackerError::SyncTooWide(sync));
    }
    let mut w = BitWriter::new(LID_BURST_BYTES);
    for packet in 0..LID_PACKETS {
        w.push(sync, LID_SYNC_BITS);
        for p in payloads {
            w.push(u32::from(p), LID_PAYLOAD_BITS);
            w.push(LID_GUARD_PATTERN, LID_GUARD_BITS);
        }
        let terminal = if packet == LID_PACKETS - 1 { 0 } else { 1 };
        w.push(terminal, 1);
    }
    Ok(w.bytes)
}

/// Decodes a bitstream, validating packet count, guard placement, the
/// inter-packet identity, and the final terminal bit.
pub fn decode_lid_burst(bytes: &[u8]) -> Result<LidPacketBurst, AttackerError> {
    if bytes.len() != LID_BURST_BYTES {
        return Err(AttackerError::MalformedBurst(format!(
            "expected {} packets in {} bytes, got {} bytes",
            LID_PACKETS,
            LID_BURST_BYTES,
            bytes.len()
        )));
    }
    let mut r = BitReader { bytes, pos: 0 };
    let mut first: Option<LidPacketBurst> = None;
    for packet in 0..LID_PACKETS {
        let sync = r.take(LID_SYNC_BITS);
        let mut payloads = [0u16; LID_PAYLOADS];
        for slot in payloads.iter_mut() {
            *slot = r.take(LID_PAYLOAD_BITS) as u16;
            let guard = r.take(LID_GUARD_BITS);
            if guard != LID_GUARD_PATTERN {
                return Err(AttackerError::MalformedBurst(format!(
                    "packet {packet}: guard {guard:#05b} != {LID_GUARD_PATTERN:#05b}"
                )));
            }
        }
        let terminal = r.take(1);
        let expected_terminal = if packet == LID_PACKETS - 1 { 0 } else { 1 };
        if terminal != expected_terminal {
            return Err(AttackerError::MalformedBurst(format!(
                "packet {packet}: terminal bit {terminal}, expected {expected_terminal}"
            )));
        }
        let decoded = LidPacketBurst { sync, payloads };
        match &first {
            None => first = Some(decoded),
            Some(head) if *head != decoded => {
                return Err(AttackerError::MalformedBurst(format!(
                    "packet {packet} differs from packet 0"
                )));
            }
            Some(_) => {}
        }
    }
    Ok(first.unwrap())
}

/// Device state carried through a session: the potentiometer, the dedicated
/// short/cut switch path, the recorded lid burst, and canned CAN payloads.
#[derive(Debug, Clone)]
pub struct AttackerDevice {
    pub pot: ProgrammableResistor,
    pub lid_burst: Vec<u8>,
    pub can_payloads: Vec<Vec<crate::bms::CanFrame>>,
}

impl Default for AttackerDevice {
    fn default() -> Self {
        AttackerDevice {
            pot: ProgrammableResistor::default(),
            // A recorded burst; contents are opaque fixed-code bits.
            lid_burst: encode_lid_burst(0x2AB_CDEF, [0xBEEF, 0x1234, 0x00FF]).unwrap(),
            can_payloads: vec![
                crate::bms::overheat_exploit_frames(),
                crate::bms::benign_status_frames(),
            ],
        }
    }
}

impl AttackerDevice {
    /// Applies a `SetCcResistance` argument: 0xFFFF cuts the line, 0 closes
    /// the dedicated short switch (a potentiometer cannot reach 0 ohm), and
    /// anything else programs the potentiometer.
    pub fn force_cc(&mut self, arg: u16) -> Result<Resistance, AttackerError> {
        match arg {
            CC_ARG_OPEN => Ok(Resistance::Infinite),
            0 => Ok(Resistance::Ohms(0.0)),
            ohm => Ok(Resistance::Ohms(self.pot.set_cc(f64::from(ohm))?)),
        }
    }
}
