use chargesim::harness::{self, HarnessError};
use chargesim::standards::{profiles_json, StandardId};
use chargesim::trace::to_jsonl;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_PREDICATE_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_MALFORMED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "chargesim",
    about = "EV charging physical-layer signaling simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a library scenario or a scenario JSON file.
    Run {
        /// Scenario name (nominal, dos-cc, dos-cp, deadlock, can-overheat)
        /// or a path to a scenario JSON file.
        scenario: String,
        /// Standard to run against, e.g. "gbt-20234-3".
        #[arg(long)]
        standard: Option<StandardId>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the JSONL trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Verify the spoofed-impedance calibration table (14 cells).
    VerifyTable1,
    /// Run all four attack families across all seven standards and compare
    /// against the published efficacy grid.
    Matrix {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure dual-check detection and false-positive rates.
    EvalCountermeasure {
        #[arg(long, default_value_t = 1000)]
        trials: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write one JSONL verdict-summary record per standard and state.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Print the seven supported standard ids.
    ListStandards,
    /// Export all standard profiles as a JSON document.
    ExportProfiles { file: PathBuf },
}

fn write_text(path: &PathBuf, text: &str) -> Result<(), u8> {
    std::fs::write(path, text).map_err(|err| {
        eprintln!("cannot write {}: {err}", path.display());
        EXIT_MALFORMED
    })
}

fn harness_exit(err: &HarnessError) -> u8 {
    match err {
        HarnessError::UnknownScenario(_) => EXIT_USAGE,
        _ => EXIT_MALFORMED,
    }
}

fn run(cli: Cli) -> u8 {
    match cli.command {
        Command::Run {
            scenario,
            standard,
            seed,
            trace,
        } => {
            let scenario = match harness::load_scenario(&scenario, standard) {
                Ok(s) => s,
                Err(err) => {
                    eprintln!("{err}");
                    return harness_exit(&err);
                }
            };
            let (outcome, results) = match harness::run_scenario(&scenario, seed) {
                Ok(pair) => pair,
                Err(err) => {
                    eprintln!("{err}");
                    return harness_exit(&err);
                }
            };
            if let Some(path) = trace {
                if let Err(code) = write_text(&path, &to_jsonl(&outcome.trace)) {
                    return code;
                }
            }
            println!(
                "{} on {} (seed {seed}): final state {}, gun {}, {:.1} Wh delivered",
                scenario.name,
                scenario.standard,
                outcome.final_evse.label(),
                if outcome.gun_removable {
                    "removable"
                } else {
                    "trapped"
                },
                outcome.delivered_wh
            );
            let mut all_pass = true;
            for r in &results {
                println!(
                    "  [{}] {}: {}",
                    if r.pass { "pass" } else { "FAIL" },
                    r.name,
                    r.detail
                );
                all_pass &= r.pass;
            }
            if all_pass {
                EXIT_OK
            } else {
                EXIT_PREDICATE_FAILURE
            }
        }
        Command::VerifyTable1 => match harness::verify_table1() {
            Ok(report) => {
                print!("{}", report.render());
                if report.all_pass() {
                    EXIT_OK
                } else {
                    EXIT_PREDICATE_FAILURE
                }
            }
            Err(err) => {
                eprintln!("{err}");
                EXIT_MALFORMED
            }
        },
        Command::Matrix { seed } => {
            let report = harness::matrix(seed);
            print!("{}", report.render());
            if report.matches_expected() {
                EXIT_OK
            } else {
                EXIT_PREDICATE_FAILURE
            }
        }
        Command::EvalCountermeasure {
            trials,
            seed,
            trace,
        } => {
            if trials == 0 {
                eprintln!("--trials must be at least 1");
                return EXIT_USAGE;
            }
            match harness::eval_countermeasure(trials, seed) {
                Ok(report) => {
                    if let Some(path) = trace {
                        if let Err(code) = write_text(&path, &to_jsonl(&report.trace_records())) {
                            return code;
                        }
                    }
                    print!("{}", report.render());
                    let clean = report.spoofers_detected == report.spoofer_checks
                        && report.false_positives == 0;
                    if clean {
                        EXIT_OK
                    } else {
                        EXIT_PREDICATE_FAILURE
                    }
                }
                Err(err) => {
                    eprintln!("{err}");
                    EXIT_MALFORMED
                }
            }
        }
        Command::ListStandards => {
            for id in StandardId::ALL {
                println!("{id}");
            }
            EXIT_OK
        }
        Command::ExportProfiles { file } => match write_text(&file, &profiles_json()) {
            Ok(()) => {
                println!(
                    "wrote {} profiles to {}",
                    StandardId::ALL.len(),
                    file.display()
                );
                EXIT_OK
            }
            Err(code) => code,
        },
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors by itself.
    ExitCode::from(run(Cli::parse()))
}
