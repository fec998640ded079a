//! Command-line front end for the auction engine. `run` replays a scenario
//! file through the chosen mechanism, `verify` sweeps random instances
//! looking for profitable deviations from truthful play, and `properties`
//! drives the named invariant suites. Exit codes: 0 success, 1 a violation or
//! failing suite, 2 parse error, 3 shape or usage error, 4 validation error.

mod json;
mod scenario;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use auction_core::verify::{
    run_property_suite, sweep_random_instances, DeviationGrid, PROPERTY_SUITES,
};
use auction_core::MechanismConfig;

use crate::json::to_deterministic_string;
use crate::scenario::{check, execute, Failure, MechanismName, OutcomeReport, Scenario};

#[derive(Parser)]
#[command(name = "auctions", version, about = "Common-value auction engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and print the outcome report.
    Run {
        /// Path to the scenario JSON file.
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Sweep random instances for profitable deviations from truthful play.
    Verify {
        mechanism: MechanismName,
        /// Number of random instances to draw.
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of buyers (defaults to the smallest interesting market).
        #[arg(long)]
        n: Option<usize>,
        /// Number of goods.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Run a named invariant suite, or `all`.
    Properties {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { file, format } => cmd_run(&file, format),
        Command::Verify {
            mechanism,
            count,
            seed,
            n,
            m,
        } => cmd_verify(mechanism, count, seed, n, m),
        Command::Properties { suite, seed } => cmd_properties(&suite, seed),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn cmd_run(file: &PathBuf, format: Format) -> Result<u8, Failure> {
    let text = fs::read_to_string(file)
        .map_err(|e| Failure::parse(format!("{}: {e}", file.display())))?;
    let scenario = Scenario::parse(&text)?;
    let checked = check(&scenario)?;
    let outcome = execute(&checked)?;
    let report = OutcomeReport::new(&checked, outcome);
    // Build the whole document before printing so a failure never leaves a
    // truncated report on stdout.
    let rendered = match format {
        Format::Json => {
            let value = serde_json::to_value(&report)
                .map_err(|e| Failure::validation(format!("serialize: {e}")))?;
            let mut s = to_deterministic_string(&value);
            s.push('\n');
            s
        }
        Format::Text => report.to_text(),
    };
    print!("{rendered}");
    Ok(0)
}

fn cmd_verify(
    mechanism: MechanismName,
    count: usize,
    seed: u64,
    n: Option<usize>,
    m: Option<usize>,
) -> Result<u8, Failure> {
    let (default_n, default_m) = mechanism.default_sweep_shape();
    let n = n.unwrap_or(default_n);
    let m = m.unwrap_or(default_m);
    let grid = DeviationGrid::default();
    let cfg = MechanismConfig::default();
    let report = sweep_random_instances(mechanism.core(), n, m, count, seed, &grid, &cfg)
        .map_err(Failure::from_engine)?;
    println!(
        "{}: {} instances, {} deviations, max gain {:.3e} (tolerance {:.1e})",
        mechanism.as_str(),
        report.instances_checked,
        report.deviations_checked,
        report.max_violation,
        report.epsilon
    );
    if report.passed() {
        println!("no profitable deviation found");
        return Ok(0);
    }
    // Dump the worst case as a scenario file so the violation can be replayed
    // with `run` and inspected.
    let path = format!("violation-{}.json", mechanism.as_str());
    if let Some(worst) = &report.worst_case {
        let reproducer = Scenario::from_worst_case(worst, report.epsilon);
        let value = serde_json::to_value(&reproducer)
            .map_err(|e| Failure::validation(format!("serialize: {e}")))?;
        let mut text = to_deterministic_string(&value);
        text.push('\n');
        fs::write(&path, text)
            .map_err(|e| Failure::validation(format!("write {path}: {e}")))?;
        println!(
            "violation: buyer {} gains {:.6} via {} (reproducer written to {path})",
            worst.buyer,
            worst.deviation_utility - worst.truthful_utility,
            worst.deviation
        );
    }
    Ok(1)
}

fn cmd_properties(suite: &str, seed: u64) -> Result<u8, Failure> {
    if suite != "all" && !PROPERTY_SUITES.contains(&suite) {
        return Err(Failure::shape(format!(
            "unknown suite '{suite}'; expected one of {} or all",
            PROPERTY_SUITES.join(", ")
        )));
    }
    let names: Vec<&str> = if suite == "all" {
        PROPERTY_SUITES.to_vec()
    } else {
        vec![suite]
    };
    let mut all_passed = true;
    for name in names {
        let report = run_property_suite(name, seed).map_err(Failure::from_engine)?;
        println!("suite {}: {}", report.suite, verdict(report.passed));
        for check in &report.checks {
            println!(
                "  {} [{} instances]: {} {}",
                check.name,
                check.instances,
                verdict(check.passed),
                check.detail
            );
        }
        all_passed &= report.passed;
    }
    Ok(if all_passed { 0 } else { 1 })
}

fn verdict(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "FAIL"
    }
}
