//! Deterministic discrete-event simulation of EV charging physical-layer
//! signaling across seven standards, with a pluggable attacker device and
//! an impedance-based dual-check countermeasure.
//!
//! The crate models the analog authentication surface of a charging
//! session — the CC line's resistance coding, the CP line's 1 kHz PWM
//! pilot — plus the electromechanical gun lock, thermal protection, a toy
//! vulnerable BMS reachable over injected CAN frames, and the implanted
//! device that spoofs all of it. Sessions replay JSON event scripts into
//! JSONL traces; identical inputs produce byte-identical traces.
//!
//! Module map:
//!
//! - [`circuit`]: complex impedance of R/L/C/switch trees, dividers, and
//!   the pilot duty-cycle current mapping.
//! - [`standards`]: per-standard constants and CC/CP classification.
//! - [`attacker`]: the device model — command codec, programmable
//!   resistor, wiring overrides, lid-burst codec.
//! - [`bms`]: the vulnerable battery controller and its thermal model.
//! - [`session`]: the joint EV/charger state machines and event loop.
//! - [`countermeasure`]: reference gun circuits and the dual check.
//! - [`harness`]: scenario library, predicates, and verification reports.
//! - [`trace`]: the JSONL record format.

pub mod attacker;
pub mod bms;
pub mod circuit;
pub mod countermeasure;
pub mod harness;
pub mod session;
pub mod standards;
pub mod trace;

#[doc(hidden)]
pub mod guide;
