//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use screenflow_core::experiments::{
    feasibility_verdict, run_experiment_with, sweep, EventMetric, ExperimentConfig, SweepConfig,
    write_replications_csv, write_summary_csv, write_sweep_csv,
};
use screenflow_core::scenario::{Scenario, ValidatedScenario, HOURS_PER_YEAR};
use screenflow_core::tree::{expected_outcome, tree_from_scenario_with_cap};
use screenflow_core::{build_network, network::NetworkWarning};

use crate::manifest::RunManifest;

/// Failure classes mapped to process exit codes: domain/validation
/// errors exit 1, I/O errors exit 2.
#[derive(Debug)]
pub enum CliError {
    Domain(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Domain(msg) => write!(f, "error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

fn io_err<E: fmt::Display>(context: &str, err: E) -> CliError {
    CliError::Io(format!("{context}: {err}"))
}

pub fn load_scenario(path: &Path, seed_override: Option<u64>) -> Result<(Scenario, ValidatedScenario), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| io_err(&format!("reading scenario {}", path.display()), e))?;
    let mut raw = Scenario::from_json(&text)
        .map_err(|e| CliError::Domain(format!("scenario {} is malformed: {e}", path.display())))?;
    if let Some(seed) = seed_override {
        raw.master_seed = seed;
    }
    let validated = raw
        .clone()
        .validate()
        .map_err(|e| CliError::Domain(e.to_string()))?;
    Ok((raw, validated))
}

fn prepare_out_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| io_err(&format!("creating {}", out.display()), e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut file =
        fs::File::create(path).map_err(|e| io_err(&format!("creating {}", path.display()), e))?;
    file.write_all(bytes)
        .map_err(|e| io_err(&format!("writing {}", path.display()), e))
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
    write_file(&out_dir.join("manifest.json"), json.as_bytes())
}

fn experiment_config(workers: usize, confidence: f64) -> ExperimentConfig {
    ExperimentConfig { workers, confidence }
}

pub struct RunArgs {
    pub scenario: PathBuf,
    pub replications: usize,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub workers: usize,
    pub confidence: f64,
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let (_, scenario) = load_scenario(&args.scenario, args.seed)?;
    let config = experiment_config(args.workers, args.confidence);
    let result = run_experiment_with(&scenario, args.replications, &config)
        .map_err(|e| CliError::Domain(e.to_string()))?;

    prepare_out_dir(&args.out)?;
    let mut buf = Vec::new();
    write_replications_csv(&result, &mut buf).map_err(|e| io_err("rendering replications.csv", e))?;
    write_file(&args.out.join("replications.csv"), &buf)?;

    let mut buf = Vec::new();
    write_summary_csv(&result, &mut buf).map_err(|e| io_err("rendering summary.csv", e))?;
    write_file(&args.out.join("summary.csv"), &buf)?;

    let mut flags = BTreeMap::new();
    flags.insert("replications".to_string(), args.replications.to_string());
    flags.insert("workers".to_string(), args.workers.to_string());
    flags.insert("confidence".to_string(), args.confidence.to_string());
    let manifest = RunManifest::new(
        "run",
        &args.scenario,
        result.scenario_fingerprint.clone(),
        scenario.master_seed,
        flags,
    );
    write_manifest(&args.out, &manifest)?;

    println!(
        "run complete: {} replications, mean undetected {:.4}, mean annual total {:.2} GBP",
        result.replications,
        result.metrics.undetected_clandestines.mean,
        result.metrics.annual_total_cost.mean
    );
    Ok(())
}

pub struct TreeArgs {
    pub scenario: PathBuf,
    pub out: PathBuf,
    pub node_cap: usize,
    pub seed: Option<u64>,
}

pub fn cmd_tree(args: &TreeArgs) -> Result<(), CliError> {
    let (_, scenario) = load_scenario(&args.scenario, args.seed)?;
    let tree = tree_from_scenario_with_cap(&scenario, args.node_cap)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    let expectation = expected_outcome(&tree, &scenario.cost_model);

    prepare_out_dir(&args.out)?;
    write_file(&args.out.join("tree.txt"), tree.export_outline().as_bytes())?;

    // One-row expectation.csv: per-lorry figures plus annual scaling.
    let horizon = scenario.horizon_hours;
    let lorries_per_horizon = scenario.expected_arrivals();
    let annual_factor = HOURS_PER_YEAR / horizon;
    let annual_lorries = lorries_per_horizon * annual_factor;
    let annual_undetected =
        expectation.undetected_probability * tree.group_mean * annual_lorries;
    let annual_indirect = expectation.per_lorry_indirect_cost * annual_lorries;
    let annual_direct = expectation.per_lorry_direct_cost * annual_lorries
        + scenario.cost_model.fixed_cost_per_hour * HOURS_PER_YEAR;

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record([
            "undetected_probability",
            "detected_probability",
            "false_alarm_probability",
            "per_lorry_direct_gbp",
            "per_lorry_indirect_gbp",
            "per_lorry_total_gbp",
            "annual_lorries",
            "annual_undetected_clandestines",
            "annual_direct_gbp",
            "annual_indirect_gbp",
            "annual_total_gbp",
            "tree_nodes",
        ])
        .and_then(|_| {
            w.write_record([
                expectation.undetected_probability.to_string(),
                expectation.detected_probability.to_string(),
                expectation.false_alarm_probability.to_string(),
                expectation.per_lorry_direct_cost.to_string(),
                expectation.per_lorry_indirect_cost.to_string(),
                expectation.per_lorry_total_cost().to_string(),
                annual_lorries.to_string(),
                annual_undetected.to_string(),
                annual_direct.to_string(),
                annual_indirect.to_string(),
                (annual_direct + annual_indirect).to_string(),
                tree.node_count().to_string(),
            ])
        })
        .and_then(|_| w.flush().map_err(Into::into))
        .map_err(|e| io_err("rendering expectation.csv", e))?;
    }
    write_file(&args.out.join("expectation.csv"), &buf)?;

    let mut flags = BTreeMap::new();
    flags.insert("node_cap".to_string(), args.node_cap.to_string());
    let manifest = RunManifest::new(
        "tree",
        &args.scenario,
        scenario.content_hash(),
        scenario.master_seed,
        flags,
    );
    write_manifest(&args.out, &manifest)?;

    println!(
        "tree complete: {} nodes, undetected probability {:.6e}, annual undetected {:.2}",
        tree.node_count(),
        expectation.undetected_probability,
        annual_undetected
    );
    Ok(())
}

pub struct SweepArgs {
    pub scenario: PathBuf,
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub replications: usize,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub workers: usize,
    pub alpha: f64,
    pub crn: bool,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let (_, scenario) = load_scenario(&args.scenario, args.seed)?;
    if args.steps == 0 {
        return Err(CliError::Domain("--steps must be at least 1".to_string()));
    }
    if args.steps > 1 && !(args.from < args.to) {
        return Err(CliError::Domain(format!(
            "--from must be below --to for a multi-point sweep (got {} .. {})",
            args.from, args.to
        )));
    }
    let values = spaced_values(args.from, args.to, args.steps);
    let config = SweepConfig {
        experiment: experiment_config(args.workers, 0.95),
        alpha: args.alpha,
        common_random_numbers: args.crn,
    };
    let result = sweep(&scenario, &args.param, &values, args.replications, &config)
        .map_err(|e| CliError::Domain(e.to_string()))?;

    prepare_out_dir(&args.out)?;
    let mut buf = Vec::new();
    write_sweep_csv(&result, &mut buf).map_err(|e| io_err("rendering sweep.csv", e))?;
    write_file(&args.out.join("sweep.csv"), &buf)?;

    let mut flags = BTreeMap::new();
    flags.insert("param".to_string(), args.param.clone());
    flags.insert("from".to_string(), args.from.to_string());
    flags.insert("to".to_string(), args.to.to_string());
    flags.insert("steps".to_string(), args.steps.to_string());
    flags.insert("replications".to_string(), args.replications.to_string());
    flags.insert("workers".to_string(), args.workers.to_string());
    flags.insert("alpha".to_string(), args.alpha.to_string());
    flags.insert("crn".to_string(), args.crn.to_string());
    let manifest = RunManifest::new(
        "sweep",
        &args.scenario,
        scenario.content_hash(),
        scenario.master_seed,
        flags,
    );
    write_manifest(&args.out, &manifest)?;

    let consistent = result.rows.iter().filter(|r| r.agreement.is_consistent()).count();
    println!(
        "sweep complete: {} values over {}, {consistent} consistent with the tree",
        result.rows.len(),
        args.param
    );
    Ok(())
}

/// Equally spaced values inclusive of both endpoints; a single step
/// degenerates to `from`.
fn spaced_values(from: f64, to: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![from];
    }
    let delta = (to - from) / (steps - 1) as f64;
    let mut values: Vec<f64> = (0..steps).map(|i| from + delta * i as f64).collect();
    values[steps - 1] = to;
    values
}

pub struct BoundsArgs {
    pub scenario: PathBuf,
    pub epsilon: f64,
    pub confidence: f64,
    pub budget: u64,
    pub metric: EventMetric,
    pub node_cap: usize,
    pub seed: Option<u64>,
    pub out: PathBuf,
}

pub fn cmd_bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let (_, scenario) = load_scenario(&args.scenario, args.seed)?;
    let report = feasibility_verdict(
        &scenario,
        args.metric,
        args.epsilon,
        args.confidence,
        args.budget,
        args.node_cap,
    )
    .map_err(|e| CliError::Domain(e.to_string()))?;

    prepare_out_dir(&args.out)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&args.out.join("feasibility.json"), json.as_bytes())?;
    write_file(&args.out.join("feasibility.txt"), format!("{report}\n").as_bytes())?;

    let mut flags = BTreeMap::new();
    flags.insert("epsilon".to_string(), args.epsilon.to_string());
    flags.insert("confidence".to_string(), args.confidence.to_string());
    flags.insert("budget".to_string(), args.budget.to_string());
    flags.insert("metric".to_string(), args.metric.name().to_string());
    flags.insert("node_cap".to_string(), args.node_cap.to_string());
    let manifest = RunManifest::new(
        "bounds",
        &args.scenario,
        scenario.content_hash(),
        scenario.master_seed,
        flags,
    );
    write_manifest(&args.out, &manifest)?;

    // Verdicts are results, not errors: always exit 0.
    println!("{report}");
    Ok(())
}

pub fn cmd_validate(scenario_path: &Path) -> Result<(), CliError> {
    let (_, scenario) = load_scenario(scenario_path, None)?;
    let network = build_network(&scenario);
    println!("scenario OK: {}", scenario_path.display());
    println!("  content hash: {}", scenario.content_hash());
    println!("  stages: {}", scenario.stages.len());
    for warning in &network.warnings {
        match warning {
            w @ NetworkWarning::Unreachable { .. } => println!("  warning: {w}"),
        }
    }
    Ok(())
}
