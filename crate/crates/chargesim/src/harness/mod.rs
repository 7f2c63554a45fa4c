//! Scenario engine and fixture verification: the named scenario library,
//! JSON scenario loading, JSONL trace emission, and the reports behind the
//! `verify-table1`, `matrix`, and `eval-countermeasure` commands.

pub mod report;
pub mod scenario;

pub use report::{
    eval_countermeasure, expected_matrix_row, matrix, verify_table1, CountermeasureReport,
    MatrixReport, MatrixRow, Table1Cell, Table1Report, REFERENCE_MEASUREMENTS,
};
pub use scenario::{built_in, Expected, PredicateResult, Scenario, SCENARIO_NAMES};

use crate::session::{run_session_with_device, SessionError, SessionOutcome};
use crate::standards::{profile_of, StandardId};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Not a library scenario and not a readable file: a usage error.
    #[error("unknown scenario {0:?}; library scenarios: {}", SCENARIO_NAMES.join(", "))]
    UnknownScenario(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario JSON in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("malformed lid burst hex in scenario: {0}")]
    BadLidBurst(#[from] hex::FromHexError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Countermeasure(#[from] crate::countermeasure::CountermeasureError),
}

/// Resolves a scenario: a library name first, then a JSON file path.
/// `standard` overrides the scenario's standard; library scripts are
/// rebuilt for it, file scripts replayed as written.
pub fn load_scenario(
    name_or_path: &str,
    standard: Option<StandardId>,
) -> Result<Scenario, HarnessError> {
    if let Some(scenario) = built_in(name_or_path, standard.unwrap_or(StandardId::SaeJ1772)) {
        return Ok(scenario);
    }
    let path = Path::new(name_or_path);
    if !path.exists() {
        return Err(HarnessError::UnknownScenario(name_or_path.to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: name_or_path.to_string(),
        source,
    })?;
    let mut scenario: Scenario =
        serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: name_or_path.to_string(),
            source,
        })?;
    if let Some(id) = standard {
        scenario.standard = id;
    }
    Ok(scenario)
}

/// Runs a scenario and evaluates its predicates.
pub fn run_scenario(
    scenario: &Scenario,
    seed: u64,
) -> Result<(SessionOutcome, Vec<PredicateResult>), HarnessError> {
    let profile = profile_of(scenario.standard);
    let outcome = run_session_with_device(
        profile,
        &scenario.script,
        scenario.wiring.clone(),
        scenario.device()?,
        seed,
    )?;
    let results = scenario.expected.evaluate(&outcome);
    Ok((outcome, results))
}
