//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line (visible with `cargo test --test acceptance -- --nocapture`).

use chargesim::attacker::{decode_lid_burst, encode_lid_burst};
use chargesim::bms::CUTOFF_TEMP_C;
use chargesim::circuit::{duty_to_current, AdvertisedCurrent, CircuitNetwork};
use chargesim::harness::{self, scenario};
use chargesim::session::{run_session, SimEventKind, TICK_MS};
use chargesim::standards::{classify_cp, profile_of, CpState, StandardId};
use chargesim::trace::to_jsonl;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::time::Instant;

fn report(criterion: &str, pass: bool) {
    println!("[{}] {criterion}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion failed: {criterion}");
}

#[test]
fn criterion_1_impedance_table_reproduction() {
    let start = Instant::now();
    let table = harness::verify_table1().unwrap();
    let elapsed = start.elapsed();

    let printed_sequence = [1.5, -3.3, -0.3, 1.1, 1.3, -2.5, -4.5, -0.3, 0.0, 0.3];
    let computed_sequence: Vec<f64> = table
        .cells
        .iter()
        .filter(|c| !matches!(c.standard, StandardId::CcsI | StandardId::CcsII))
        .map(|c| c.deviation)
        .collect();
    let sequence_ok = computed_sequence.len() == printed_sequence.len()
        && computed_sequence
            .iter()
            .zip(printed_sequence)
            .all(|(got, want)| (got - want).abs() <= 0.1 + 1e-12);

    report(
        &format!(
            "criterion 1: impedance table {}/14 cells, printed deviations reproduced, {:?}",
            table.passed(),
            elapsed
        ),
        table.all_pass() && sequence_ok && elapsed.as_secs_f64() < 1.0,
    );
}

#[test]
fn criterion_2_attack_matrix_reproduction() {
    let start = Instant::now();
    let matrix = harness::matrix(0);
    let elapsed = start.elapsed();

    let dos = matrix.rows.iter().filter(|r| r.dos).count();
    let pwm = matrix.rows.iter().filter(|r| r.pwm_injection).count();
    let deadlock: Vec<StandardId> = matrix
        .rows
        .iter()
        .filter(|r| !r.deadlock)
        .map(|r| r.standard)
        .collect();
    let can: Vec<StandardId> = matrix
        .rows
        .iter()
        .filter(|r| r.can_injection)
        .map(|r| r.standard)
        .collect();

    report(
        &format!(
            "criterion 2: matrix dos {dos}/7, pwm {pwm}/7, deadlock blocked on {deadlock:?}, can on {can:?}, {elapsed:?}"
        ),
        matrix.matches_expected()
            && dos == 7
            && pwm == 7
            && deadlock == vec![StandardId::CcsII]
            && can == vec![StandardId::Nacs, StandardId::Gbt20234_3]
            && elapsed.as_secs_f64() < 5.0,
    );
}

#[test]
fn criterion_3_duty_cycle_anchors() {
    let at_50 = duty_to_current(50.0).unwrap();
    let at_85 = duty_to_current(85.0).unwrap();
    let at_5 = duty_to_current(5.0).unwrap();
    report(
        &format!("criterion 3: duty 50 -> {at_50:?}, 85 -> {at_85:?}, 5 -> {at_5:?}"),
        at_50 == AdvertisedCurrent::Amps(32.0)
            && at_85 == AdvertisedCurrent::Amps(51.0)
            && at_5 == AdvertisedCurrent::NoPower,
    );
}

#[test]
fn criterion_4_cp_state_resistances() {
    let net = CircuitNetwork::parallel(vec![
        CircuitNetwork::resistor(2740.0).unwrap(),
        CircuitNetwork::resistor(1300.0).unwrap(),
    ])
    .unwrap();
    let measured = net.dc_resistance();
    let ohm = measured.ohms().unwrap();
    let class = classify_cp(measured);
    report(
        &format!("criterion 4: 2740||1300 = {ohm:.2} ohm classifies as {class:?}"),
        class == CpState::ChargingC && (ohm - 880.0).abs() / 880.0 < 0.005,
    );
}

#[test]
fn criterion_5_bms_case_study() {
    let start = Instant::now();

    // Compromised: the library scenario (lid replay, 85% duty, exploit,
    // two hours of charging) on a CAN-exposing standard.
    let compromised = scenario::can_overheat(StandardId::Nacs);
    let outcome = run_session(
        profile_of(StandardId::Nacs),
        &compromised.script,
        compromised.wiring.clone(),
        0,
    )
    .unwrap();

    // Uncompromised: the same two-hour session without the CAN trigger.
    let mut clean = scenario::can_overheat(StandardId::Nacs);
    clean
        .script
        .retain(|e| !matches!(e.kind, SimEventKind::AttackerCmd { frame } if frame[0] == 0x03));
    let clean_outcome = run_session(
        profile_of(StandardId::Nacs),
        &clean.script,
        clean.wiring.clone(),
        0,
    )
    .unwrap();

    let elapsed = start.elapsed();
    let overshoot =
        chargesim::bms::ThermalParams::default().alpha * 51.0 * (TICK_MS as f64 / 1000.0);
    report(
        &format!(
            "criterion 5: compromised peak {:.2} degC, clean peak {:.3} degC (cutoff {CUTOFF_TEMP_C} + {overshoot:.3}), {elapsed:?}",
            outcome.bms_max_temp_c, clean_outcome.bms_max_temp_c
        ),
        outcome.bms_compromised
            && (outcome.bms_max_temp_c - 56.47).abs() <= 0.5
            && !clean_outcome.bms_compromised
            && clean_outcome.bms_max_temp_c <= CUTOFF_TEMP_C + overshoot
            && elapsed.as_secs_f64() < 2.0,
    );
}

#[test]
fn criterion_6_countermeasure_rates() {
    // 1000 seeded trials per standard and button state; each trial checks
    // the genuine gun, the exact DC-matching resistor, and a random
    // resistor, giving >= 100 random spoofers per standard and 1000 seeds
    // x 7 standards x 2 states of false-positive exposure.
    let eval = harness::eval_countermeasure(1000, 0xC0FFEE).unwrap();
    report(
        &format!(
            "criterion 6: detection {:.2}% over {} spoofers, false positives {} over {} gun checks",
            eval.detection_rate_percent(),
            eval.spoofer_checks,
            eval.false_positives,
            eval.gun_checks
        ),
        eval.spoofers_detected == eval.spoofer_checks
            && eval.spoofer_checks == 28_000
            && eval.false_positives == 0
            && eval.gun_checks == 14_000,
    );
}

#[test]
fn criterion_7_trace_determinism() {
    let mut all_equal = true;
    for name in scenario::SCENARIO_NAMES {
        for standard in [StandardId::SaeJ1772, StandardId::Gbt20234_3] {
            let sc = scenario::built_in(name, standard).unwrap();
            let run = |seed| {
                let outcome =
                    run_session(profile_of(standard), &sc.script, sc.wiring.clone(), seed).unwrap();
                Sha256::digest(to_jsonl(&outcome.trace).as_bytes())
            };
            all_equal &= run(42) == run(42);
        }
    }
    report(
        "criterion 7: rerun with identical seed hashes to identical JSONL traces",
        all_equal,
    );
}

#[test]
fn criterion_8_lid_burst_codec() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut round_trips_ok = true;
    for _ in 0..1000 {
        let sync: u32 = rng.gen_range(0..(1 << 26));
        let payloads: [u16; 3] = [rng.gen(), rng.gen(), rng.gen()];
        let bytes = encode_lid_burst(sync, payloads).unwrap();
        let decoded = decode_lid_burst(&bytes).unwrap();
        round_trips_ok &= decoded.sync == sync && decoded.payloads == payloads;
    }

    let bytes = encode_lid_burst(0x155_5555, [0xAAAA, 0x5555, 0xFFFF]).unwrap();
    let nine_packets = &bytes[..bytes.len() * 9 / 10];
    let mut terminal_one = bytes.clone();
    let last = terminal_one.len() - 1;
    terminal_one[last] ^= 0x01;

    report(
        "criterion 8: lid codec 1000 round trips, truncated and terminal-bit bursts rejected",
        round_trips_ok
            && decode_lid_burst(nine_packets).is_err()
            && decode_lid_burst(&terminal_one).is_err(),
    );
}
