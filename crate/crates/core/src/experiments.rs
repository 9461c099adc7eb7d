//! Replication orchestration, parameter sweeps, tree-vs-simulation
//! comparison, and the feasibility-bounds verdict.
//!
//! Replications are embarrassingly parallel: workers share only the
//! immutable scenario and routing network, and rows are aggregated in
//! replication-index order, so the result is bit-identical no matter
//! how many threads ran it.

use std::io;

use serde::Serialize;
use thiserror::Error;

use crate::cba::{annualize, CostBreakdown};
use crate::engine::{run_replication, EngineError, ReplicationResult};
use crate::network::build_network;
use crate::rng;
use crate::scenario::{Scenario, ValidatedScenario};
use crate::stats::{
    agreement_test, required_replications, summarize, AgreementOutcome, StatsError, SummaryStats,
};
use crate::tree::{
    expected_outcome, tree_from_scenario_with_cap, TreeError, TreeExpectation, DEFAULT_NODE_CAP,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("replication {index} failed: {source}")]
    Replication { index: usize, source: EngineError },
    #[error("UNKNOWN_PARAMETER_PATH: \"{0}\" does not name a sweepable numeric field")]
    UnknownParameterPath(String),
    #[error("VALUE_OUT_OF_RANGE: {value} at \"{path}\" leaves the scenario invalid: {detail}")]
    ValueOutOfRange { path: String, value: f64, detail: String },
    #[error("sweep values must be strictly increasing")]
    ValuesNotIncreasing,
    #[error("at least one replication is required")]
    ZeroReplications,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Execution knobs for a replication experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// Worker threads; 0 means all available cores.
    pub workers: usize,
    /// Confidence level for the summary statistics.
    pub confidence: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { workers: 0, confidence: 0.95 }
    }
}

fn effective_workers(requested: usize, jobs: usize) -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let w = if requested == 0 { available } else { requested };
    w.clamp(1, jobs.max(1))
}

/// Summary statistics per headline metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummaries {
    pub undetected_clandestines: SummaryStats,
    pub detected_clandestines: SummaryStats,
    pub total_cost: SummaryStats,
    pub annual_total_cost: SummaryStats,
}

/// R replications of one scenario, rows in replication-index order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub scenario_fingerprint: String,
    pub master_seed: u64,
    pub replications: usize,
    pub rows: Vec<ReplicationResult>,
    pub metrics: MetricSummaries,
}

impl ExperimentResult {
    /// Annualized cost breakdown of one row.
    pub fn annual_breakdown(row: &ReplicationResult) -> CostBreakdown {
        let cb = CostBreakdown {
            direct_cost: row.direct_cost,
            indirect_cost: row.indirect_cost,
            total: row.total_cost,
            horizon_hours: row.horizon_hours,
            annualization_factor: 1.0,
        };
        annualize(&cb).expect("validated horizon is positive")
    }

    pub fn undetected_samples(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.clandestines_undetected as f64)
            .collect()
    }
}

fn compute_metrics(
    rows: &[ReplicationResult],
    confidence: f64,
) -> Result<MetricSummaries, StatsError> {
    let undetected: Vec<f64> = rows.iter().map(|r| r.clandestines_undetected as f64).collect();
    let detected: Vec<f64> = rows.iter().map(|r| r.clandestines_detected as f64).collect();
    let total: Vec<f64> = rows.iter().map(|r| r.total_cost).collect();
    let annual: Vec<f64> = rows
        .iter()
        .map(|r| ExperimentResult::annual_breakdown(r).total)
        .collect();
    Ok(MetricSummaries {
        undetected_clandestines: summarize(&undetected, confidence)?,
        detected_clandestines: summarize(&detected, confidence)?,
        total_cost: summarize(&total, confidence)?,
        annual_total_cost: summarize(&annual, confidence)?,
    })
}

/// Run R replications with substream seeds derived from
/// `(master_seed, 0..R)`. Aggregation is index-ordered, so the output
/// is bit-identical for any worker count.
pub fn run_experiment(
    scenario: &ValidatedScenario,
    replications: usize,
) -> Result<ExperimentResult, ExperimentError> {
    run_experiment_with(scenario, replications, &ExperimentConfig::default())
}

pub fn run_experiment_with(
    scenario: &ValidatedScenario,
    replications: usize,
    config: &ExperimentConfig,
) -> Result<ExperimentResult, ExperimentError> {
    if replications == 0 {
        return Err(ExperimentError::ZeroReplications);
    }
    let network = build_network(scenario);
    let master = scenario.master_seed;
    let workers = effective_workers(config.workers, replications);

    let mut rows: Vec<Option<ReplicationResult>> = Vec::new();
    rows.resize_with(replications, || None);

    if workers == 1 {
        for (index, slot) in rows.iter_mut().enumerate() {
            let seed = rng::substream_seed(master, index as u64);
            let result = run_replication(&network, scenario, seed)
                .map_err(|source| ExperimentError::Replication { index, source })?;
            *slot = Some(result);
        }
    } else {
        let chunks = split_indices(replications, workers);
        let mut outputs: Vec<Result<Vec<(usize, ReplicationResult)>, ExperimentError>> =
            Vec::with_capacity(chunks.len());
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(chunks.len());
            for chunk in &chunks {
                let network = &network;
                let chunk = chunk.clone();
                handles.push(scope.spawn(move || {
                    let mut local = Vec::with_capacity(chunk.len());
                    for index in chunk {
                        let seed = rng::substream_seed(master, index as u64);
                        match run_replication(network, scenario, seed) {
                            Ok(result) => local.push((index, result)),
                            Err(source) => {
                                return Err(ExperimentError::Replication { index, source })
                            }
                        }
                    }
                    Ok(local)
                }));
            }
            for handle in handles {
                outputs.push(handle.join().expect("replication worker panicked"));
            }
        });
        for output in outputs {
            for (index, result) in output? {
                rows[index] = Some(result);
            }
        }
    }

    let rows: Vec<ReplicationResult> = rows.into_iter().map(|r| r.expect("filled")).collect();
    let metrics = compute_metrics(&rows, config.confidence)?;
    Ok(ExperimentResult {
        scenario_fingerprint: scenario.content_hash(),
        master_seed: master,
        replications,
        rows,
        metrics,
    })
}

fn split_indices(total: usize, workers: usize) -> Vec<Vec<usize>> {
    let mut chunks = vec![Vec::new(); workers];
    for index in 0..total {
        chunks[index % workers].push(index);
    }
    chunks.retain(|c| !c.is_empty());
    chunks
}

// ---------------------------------------------------------------------------
// Parameter paths
// ---------------------------------------------------------------------------

/// Set a numeric scenario field addressed by a dot path. Stages and
/// stations are addressed by name/id, never by index, so paths stay
/// valid when scenarios are edited.
///
/// Supported paths:
/// - `carrier_probability`, `soft_sided_probability`, `horizon_hours`
/// - `cost_model.<field>`
/// - `stages.<name>.check_probability`
/// - `stages.<name>.stations.<id>.tp_rate` / `.fp_rate` / `.cost_per_inspection`
/// - `stages.<name>.secondary_chain.<station id>.probability`
pub fn set_parameter(
    scenario: &mut Scenario,
    path: &str,
    value: f64,
) -> Result<(), ExperimentError> {
    let unknown = || ExperimentError::UnknownParameterPath(path.to_string());
    let parts: Vec<&str> = path.split('.').collect();
    match parts.as_slice() {
        ["carrier_probability"] => scenario.carrier_probability = value,
        ["soft_sided_probability"] => scenario.soft_sided_probability = value,
        ["horizon_hours"] => scenario.horizon_hours = value,
        ["cost_model", field] => {
            let cm = &mut scenario.cost_model;
            match *field {
                "undetected_unit_cost" => cm.undetected_unit_cost = value,
                "detection_processing_cost" => cm.detection_processing_cost = value,
                "false_alarm_cost" => cm.false_alarm_cost = value,
                "fixed_cost_per_hour" => cm.fixed_cost_per_hour = value,
                _ => return Err(unknown()),
            }
        }
        ["stages", stage, "check_probability"] => {
            let stage_idx = scenario.stage_index(stage).ok_or_else(unknown)?;
            scenario.stages[stage_idx].check_probability = value;
        }
        ["stages", stage, "stations", station, field] => {
            let stage_idx = scenario.stage_index(stage).ok_or_else(unknown)?;
            let st = scenario.stages[stage_idx]
                .station_index(station)
                .ok_or_else(unknown)?;
            let station = &mut scenario.stages[stage_idx].stations[st];
            match *field {
                "tp_rate" => station.tp_rate = value,
                "fp_rate" => station.fp_rate = value,
                "cost_per_inspection" => station.cost_per_inspection = value,
                _ => return Err(unknown()),
            }
        }
        ["stages", stage, "secondary_chain", station, "probability"] => {
            let stage_idx = scenario.stage_index(stage).ok_or_else(unknown)?;
            let link = scenario.stages[stage_idx]
                .secondary_chain
                .iter_mut()
                .find(|l| l.station == *station)
                .ok_or_else(unknown)?;
            link.probability = value;
        }
        _ => return Err(unknown()),
    }
    Ok(())
}

fn modified_scenario(
    base: &Scenario,
    path: &str,
    value: f64,
) -> Result<ValidatedScenario, ExperimentError> {
    let mut raw = base.clone();
    set_parameter(&mut raw, path, value)?;
    raw.validate().map_err(|e| ExperimentError::ValueOutOfRange {
        path: path.to_string(),
        value,
        detail: e.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Sweep execution knobs.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub experiment: ExperimentConfig,
    /// Significance level of the tree-agreement test per sweep point.
    pub alpha: f64,
    /// Common random numbers: reuse the scenario master seed for every
    /// value instead of deriving an independent one per value.
    pub common_random_numbers: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            experiment: ExperimentConfig::default(),
            alpha: 0.01,
            common_random_numbers: false,
        }
    }
}

/// One sweep point: both evaluators plus the agreement verdict.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub experiment: ExperimentResult,
    pub tree: TreeExpectation,
    /// Tree-side expectation on the simulation's scale: expected
    /// undetected clandestines per replication.
    pub tree_expected_undetected: f64,
    pub agreement: AgreementOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub parameter_path: String,
    pub rows: Vec<SweepRow>,
}

/// Run the experiment and the tree at each parameter value; the input
/// scenario is never mutated.
pub fn sweep(
    scenario: &ValidatedScenario,
    parameter_path: &str,
    values: &[f64],
    replications: usize,
    config: &SweepConfig,
) -> Result<SweepResult, ExperimentError> {
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::ValuesNotIncreasing);
    }
    let mut rows = Vec::with_capacity(values.len());
    for (value_index, &value) in values.iter().enumerate() {
        let mut modified =
            modified_scenario(scenario.as_scenario(), parameter_path, value)?.into_scenario();
        if !config.common_random_numbers {
            modified.master_seed =
                rng::child_master_seed(modified.master_seed, value_index as u64);
        }
        let modified = modified.validate().expect("re-validating a validated scenario");
        let experiment = run_experiment_with(&modified, replications, &config.experiment)?;
        let tree = tree_from_scenario_with_cap(&modified, DEFAULT_NODE_CAP)?;
        let expectation = expected_outcome(&tree, &modified.cost_model);
        let per_replication = modified.expected_arrivals()
            * expectation.undetected_probability
            * tree.group_mean;
        let agreement = agreement_test(
            &experiment.undetected_samples(),
            per_replication,
            config.alpha,
        )?;
        rows.push(SweepRow {
            value,
            experiment,
            tree: expectation,
            tree_expected_undetected: per_replication,
            agreement,
        });
    }
    Ok(SweepResult { parameter_path: parameter_path.to_string(), rows })
}

// ---------------------------------------------------------------------------
// Feasibility bounds
// ---------------------------------------------------------------------------

/// The per-lorry event whose rarity is being judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventMetric {
    /// The lorry carries clandestines (the headline infrequent event).
    Carrier,
    /// The lorry carries clandestines and slips through undetected.
    UndetectedCarrier,
    /// The lorry is caught carrying clandestines.
    Detected,
    /// A clean lorry triggers a false alarm.
    FalseAlarm,
}

impl EventMetric {
    pub fn name(self) -> &'static str {
        match self {
            EventMetric::Carrier => "carrier",
            EventMetric::UndetectedCarrier => "undetected_carrier",
            EventMetric::Detected => "detected",
            EventMetric::FalseAlarm => "false_alarm",
        }
    }

    fn probability(self, expectation: &TreeExpectation) -> f64 {
        match self {
            EventMetric::Carrier => expectation.carrier_probability(),
            EventMetric::UndetectedCarrier => expectation.undetected_probability,
            EventMetric::Detected => expectation.detected_probability,
            EventMetric::FalseAlarm => expectation.false_alarm_probability,
        }
    }
}

impl std::str::FromStr for EventMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "carrier" => Ok(EventMetric::Carrier),
            "undetected_carrier" => Ok(EventMetric::UndetectedCarrier),
            "detected" => Ok(EventMetric::Detected),
            "false_alarm" => Ok(EventMetric::FalseAlarm),
            other => Err(format!(
                "unknown metric \"{other}\" (expected carrier, undetected_carrier, detected or false_alarm)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FeasibilityVerdict {
    TreeSufficient,
    SimulationUseful,
    TooRareForBudget,
}

impl std::fmt::Display for FeasibilityVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FeasibilityVerdict::TreeSufficient => "TREE_SUFFICIENT",
            FeasibilityVerdict::SimulationUseful => "SIMULATION_USEFUL",
            FeasibilityVerdict::TooRareForBudget => "TOO_RARE_FOR_BUDGET",
        };
        f.write_str(s)
    }
}

/// Verdict on whether simulation can answer the question at all, and
/// whether it is worth more than the exact tree. Carries every input
/// so the decision is auditable and re-derivable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub metric: EventMetric,
    /// Analytic event probability from the tree.
    pub p_event: f64,
    pub epsilon: f64,
    pub confidence: f64,
    pub replication_budget: u64,
    /// `None` when the event has probability 0.
    pub required_replications: Option<u64>,
    pub tree_node_count: usize,
    pub tree_node_cap: usize,
    pub all_capacities_unbounded: bool,
    pub verdict: FeasibilityVerdict,
    pub rationale: String,
}

impl FeasibilityReport {
    /// The decision rule as a pure function of the report fields;
    /// re-evaluating a stored report reproduces its verdict.
    pub fn decide(&self) -> FeasibilityVerdict {
        match self.required_replications {
            None => FeasibilityVerdict::TooRareForBudget,
            Some(required) if required > self.replication_budget => {
                FeasibilityVerdict::TooRareForBudget
            }
            Some(_) => {
                if self.all_capacities_unbounded && self.tree_node_count <= self.tree_node_cap {
                    FeasibilityVerdict::TreeSufficient
                } else {
                    FeasibilityVerdict::SimulationUseful
                }
            }
        }
    }
}

impl std::fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "feasibility verdict: {}", self.verdict)?;
        writeln!(f, "  event metric:           {}", self.metric.name())?;
        writeln!(f, "  analytic probability:   {:.6e}", self.p_event)?;
        writeln!(f, "  relative half-width:    {}", self.epsilon)?;
        writeln!(f, "  confidence level:       {}", self.confidence)?;
        match self.required_replications {
            Some(r) => writeln!(f, "  required replications:  {r}")?,
            None => writeln!(f, "  required replications:  unbounded (probability 0)")?,
        }
        writeln!(f, "  replication budget:     {}", self.replication_budget)?;
        writeln!(f, "  tree nodes:             {} (cap {})", self.tree_node_count, self.tree_node_cap)?;
        writeln!(f, "  unbounded queues:       {}", self.all_capacities_unbounded)?;
        write!(f, "  rationale: {}", self.rationale)
    }
}

/// Judge whether plain-replication Monte Carlo is worthwhile for this
/// scenario and event, against an exact-tree alternative.
///
/// Decision rule (this artifact's operationalization of the
/// upper/lower-bounds idea): (a) if the replication count needed for a
/// +-epsilon relative confidence interval exceeds the budget, the event
/// is too rare; (b) otherwise, if every queue is unbounded (so queueing
/// cannot shift the probabilities) and the exact tree fits the node
/// cap, the tree already answers the question; (c) otherwise simulation
/// adds information the tree cannot provide.
pub fn feasibility_verdict(
    scenario: &ValidatedScenario,
    metric: EventMetric,
    epsilon: f64,
    confidence: f64,
    replication_budget: u64,
    tree_node_cap: usize,
) -> Result<FeasibilityReport, ExperimentError> {
    let tree = tree_from_scenario_with_cap(scenario, DEFAULT_NODE_CAP)?;
    let expectation = expected_outcome(&tree, &scenario.cost_model);
    let p = metric.probability(&expectation);
    let required = match required_replications(p, epsilon, confidence) {
        Ok(r) => Some(r),
        Err(StatsError::PZero) => None,
        Err(e) => return Err(e.into()),
    };
    let all_unbounded = scenario
        .stages
        .iter()
        .flat_map(|st| st.stations.iter())
        .all(|s| s.queue_capacity.is_unbounded());

    let mut report = FeasibilityReport {
        metric,
        p_event: p,
        epsilon,
        confidence,
        replication_budget,
        required_replications: required,
        tree_node_count: tree.node_count(),
        tree_node_cap,
        all_capacities_unbounded: all_unbounded,
        verdict: FeasibilityVerdict::TooRareForBudget,
        rationale: String::new(),
    };
    report.verdict = report.decide();
    report.rationale = match report.verdict {
        FeasibilityVerdict::TooRareForBudget => match required {
            None => "event impossible under model: the tree assigns it probability 0, so no \
                     finite replication budget can estimate it"
                .to_string(),
            Some(r) => format!(
                "estimating p = {p:.6e} to a +-{:.0}% relative half-width at {:.0}% confidence \
                 needs {r} replications, beyond the budget of {}",
                epsilon * 100.0,
                confidence * 100.0,
                replication_budget
            ),
        },
        FeasibilityVerdict::TreeSufficient => format!(
            "the budget covers the {} required replications, but every queue is unbounded so \
             queueing cannot shift outcome probabilities; the exact tree ({} nodes, cap {}) \
             already answers the question without sampling error",
            required.unwrap_or(0),
            report.tree_node_count,
            tree_node_cap
        ),
        FeasibilityVerdict::SimulationUseful => format!(
            "the budget covers the {} required replications and the scenario has effects the \
             per-lorry tree cannot capture ({}), so simulation adds information",
            required.unwrap_or(0),
            if all_unbounded {
                "tree larger than the node cap"
            } else {
                "finite queue capacities"
            }
        ),
    };
    Ok(report)
}

// ---------------------------------------------------------------------------
// CSV serialization
// ---------------------------------------------------------------------------

/// Fixed per-replication CSV: stable header, station columns ordered by
/// (stage, station) position in the scenario.
pub fn write_replications_csv<W: io::Write>(
    result: &ExperimentResult,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![
        "replication_index".to_string(),
        "seed".to_string(),
        "arrivals".to_string(),
        "carriers_generated".to_string(),
        "clandestines_generated".to_string(),
        "clandestines_detected".to_string(),
        "clandestines_undetected".to_string(),
        "balked_lorries".to_string(),
        "false_alarms".to_string(),
        "detected_lorries".to_string(),
        "direct_gbp".to_string(),
        "indirect_gbp".to_string(),
        "total_gbp".to_string(),
        "annual_total_gbp".to_string(),
    ];
    if let Some(first) = result.rows.first() {
        for st in &first.stations {
            let prefix = format!("{}.{}", st.stage, st.station);
            header.push(format!("{prefix}.inspections"));
            header.push(format!("{prefix}.detections"));
            header.push(format!("{prefix}.false_alarms"));
            header.push(format!("{prefix}.max_queue_len"));
            header.push(format!("{prefix}.mean_wait_hours"));
        }
    }
    w.write_record(&header)?;
    for (index, row) in result.rows.iter().enumerate() {
        let annual = ExperimentResult::annual_breakdown(row);
        let mut record = vec![
            index.to_string(),
            row.seed.to_string(),
            row.arrivals.to_string(),
            row.carriers_generated.to_string(),
            row.clandestines_generated.to_string(),
            row.clandestines_detected.to_string(),
            row.clandestines_undetected.to_string(),
            row.balked_lorries.to_string(),
            row.false_alarms.to_string(),
            row.detected_lorries.to_string(),
            row.direct_cost.to_string(),
            row.indirect_cost.to_string(),
            row.total_cost.to_string(),
            annual.total.to_string(),
        ];
        for st in &row.stations {
            record.push(st.inspections.to_string());
            record.push(st.detections.to_string());
            record.push(st.false_alarms.to_string());
            record.push(st.max_queue_len.to_string());
            record.push(st.mean_wait_hours.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-metric summary CSV.
pub fn write_summary_csv<W: io::Write>(result: &ExperimentResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "n", "mean", "sample_variance", "ci_half_width", "cv"])?;
    let rows = [
        ("undetected_clandestines", &result.metrics.undetected_clandestines),
        ("detected_clandestines", &result.metrics.detected_clandestines),
        ("total_gbp", &result.metrics.total_cost),
        ("annual_total_gbp", &result.metrics.annual_total_cost),
    ];
    for (name, s) in rows {
        w.write_record([
            name.to_string(),
            s.n.to_string(),
            s.mean.to_string(),
            s.sample_variance.to_string(),
            s.ci_half_width.map(|x| x.to_string()).unwrap_or_default(),
            s.cv.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Sweep CSV with the fixed documented header.
pub fn write_sweep_csv<W: io::Write>(sweep: &SweepResult, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["value", "sim_mean", "sim_ci_halfwidth", "tree_value", "verdict"])?;
    for row in &sweep.rows {
        let stats = &row.experiment.metrics.undetected_clandestines;
        w.write_record([
            row.value.to_string(),
            stats.mean.to_string(),
            stats.ci_half_width.map(|x| x.to_string()).unwrap_or_default(),
            row.tree_expected_undetected.to_string(),
            row.agreement.verdict.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{ArrivalSegment, QueueCapacity};

    fn small_scenario() -> Scenario {
        let mut s = Scenario::calais_default();
        s.arrival_schedule = vec![ArrivalSegment { start_hour: 0.0, rate: 5.0 }];
        s.horizon_hours = 24.0;
        s
    }

    #[test]
    fn experiment_is_deterministic_and_rerunnable() {
        let s = small_scenario().validate().unwrap();
        let a = run_experiment(&s, 10).unwrap();
        let b = run_experiment(&s, 10).unwrap();
        assert_eq!(a.replications, 10);
        assert_eq!(a.rows.len(), 10);
        assert_eq!(a, b);
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let s = small_scenario().validate().unwrap();
        let serial = run_experiment_with(
            &s,
            16,
            &ExperimentConfig { workers: 1, confidence: 0.95 },
        )
        .unwrap();
        let parallel = run_experiment_with(
            &s,
            16,
            &ExperimentConfig { workers: 8, confidence: 0.95 },
        )
        .unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(
            serde_json::to_string(&serial).unwrap(),
            serde_json::to_string(&parallel).unwrap()
        );
    }

    #[test]
    fn metrics_are_recomputable_from_rows() {
        let s = small_scenario().validate().unwrap();
        let a = run_experiment(&s, 12).unwrap();
        let recomputed = compute_metrics(&a.rows, 0.95).unwrap();
        assert_eq!(a.metrics, recomputed);
    }

    #[test]
    fn default_scenario_mean_tracks_the_tree() {
        let s = Scenario::calais_default().validate().unwrap();
        let result = run_experiment(&s, 10).unwrap();
        let tree = crate::tree::tree_from_scenario(&s).unwrap();
        let exp = expected_outcome(&tree, &s.cost_model);
        let analytic = s.expected_arrivals() * exp.undetected_probability * tree.group_mean;
        let stats = &result.metrics.undetected_clandestines;
        let se = (stats.sample_variance / stats.n as f64).sqrt();
        assert!(
            (stats.mean - analytic).abs() <= 3.0 * se.max(1.0),
            "sim mean {} vs tree {analytic}",
            stats.mean
        );
    }

    #[test]
    fn zero_carriers_mean_zero_variance_zero() {
        let mut raw = small_scenario();
        raw.carrier_probability = 0.0;
        let s = raw.validate().unwrap();
        let result = run_experiment(&s, 1000).unwrap();
        let stats = &result.metrics.undetected_clandestines;
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.sample_variance, 0.0);
    }

    #[test]
    fn set_parameter_handles_every_documented_path() {
        let mut s = small_scenario();
        set_parameter(&mut s, "carrier_probability", 0.01).unwrap();
        assert_eq!(s.carrier_probability, 0.01);
        set_parameter(&mut s, "stages.british.check_probability", 0.9).unwrap();
        assert_eq!(s.stage("british").unwrap().check_probability, 0.9);
        set_parameter(&mut s, "stages.french.stations.pmmw_fr.tp_rate", 0.7).unwrap();
        assert_eq!(s.stage("french").unwrap().station("pmmw_fr").unwrap().tp_rate, 0.7);
        set_parameter(&mut s, "stages.french.secondary_chain.co2_fr.probability", 0.4).unwrap();
        set_parameter(&mut s, "cost_model.undetected_unit_cost", 30_000.0).unwrap();
        assert_eq!(s.cost_model.undetected_unit_cost, 30_000.0);

        let err = set_parameter(&mut s, "stages.nowhere.check_probability", 0.5).unwrap_err();
        assert!(matches!(err, ExperimentError::UnknownParameterPath(_)));
        let err = set_parameter(&mut s, "frobnicate", 1.0).unwrap_err();
        assert!(matches!(err, ExperimentError::UnknownParameterPath(_)));
    }

    #[test]
    fn sweep_compares_both_evaluators_per_value() {
        // Carrier probability raised so per-replication undetected
        // counts are far from the all-zero degenerate case.
        let mut raw = small_scenario();
        raw.carrier_probability = 0.2;
        let s = raw.validate().unwrap();
        let result = sweep(
            &s,
            "stages.british.check_probability",
            &[0.0, 0.25, 0.5, 0.75, 1.0],
            10,
            &SweepConfig::default(),
        )
        .unwrap();
        assert_eq!(result.rows.len(), 5);
        for row in &result.rows {
            assert!(row.agreement.is_consistent(), "value {} inconsistent", row.value);
        }
        // check 0: zero British inspections in every replication.
        for rep in &result.rows[0].experiment.rows {
            assert_eq!(rep.stage_inspections("british"), 0);
        }
        // The tree's undetected probability strictly decreases in the
        // check probability (all tp rates are positive).
        let probs: Vec<f64> = result
            .rows
            .iter()
            .map(|r| r.tree.undetected_probability)
            .collect();
        for pair in probs.windows(2) {
            assert!(pair[1] < pair[0], "not strictly decreasing: {probs:?}");
        }
    }

    #[test]
    fn sweep_never_mutates_the_input() {
        let s = small_scenario().validate().unwrap();
        let before = s.clone();
        let _ = sweep(
            &s,
            "carrier_probability",
            &[0.001, 0.01],
            3,
            &SweepConfig::default(),
        )
        .unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn sweep_rejects_bad_inputs() {
        let s = small_scenario().validate().unwrap();
        let err = sweep(&s, "carrier_probability", &[0.5, 0.5], 2, &SweepConfig::default())
            .unwrap_err();
        assert!(matches!(err, ExperimentError::ValuesNotIncreasing));
        let err = sweep(&s, "no.such.path", &[0.1, 0.2], 2, &SweepConfig::default())
            .unwrap_err();
        assert!(matches!(err, ExperimentError::UnknownParameterPath(_)));
        let err = sweep(&s, "carrier_probability", &[0.5, 1.5], 2, &SweepConfig::default())
            .unwrap_err();
        assert!(matches!(err, ExperimentError::ValueOutOfRange { .. }));
    }

    #[test]
    fn feasibility_rule_a_tree_sufficient() {
        let mut raw = small_scenario();
        raw.carrier_probability = 0.5;
        let s = raw.validate().unwrap();
        let report =
            feasibility_verdict(&s, EventMetric::Carrier, 0.1, 0.95, 10_000, DEFAULT_NODE_CAP)
                .unwrap();
        assert_eq!(report.required_replications, Some(385));
        assert_eq!(report.verdict, FeasibilityVerdict::TreeSufficient);
        assert_eq!(report.decide(), report.verdict);
    }

    #[test]
    fn feasibility_rule_too_rare() {
        let s = Scenario::calais_default().validate().unwrap();
        let report =
            feasibility_verdict(&s, EventMetric::Carrier, 0.1, 0.95, 50_000, DEFAULT_NODE_CAP)
                .unwrap();
        assert_eq!(report.required_replications, Some(95_653));
        assert_eq!(report.verdict, FeasibilityVerdict::TooRareForBudget);
    }

    #[test]
    fn feasibility_rule_simulation_useful_with_finite_queues() {
        let mut raw = Scenario::calais_default();
        raw.stages[0].stations[0].queue_capacity = QueueCapacity::Bounded(10);
        let s = raw.validate().unwrap();
        let report =
            feasibility_verdict(&s, EventMetric::Carrier, 0.1, 0.95, 100_000, DEFAULT_NODE_CAP)
                .unwrap();
        assert_eq!(report.required_replications, Some(95_653));
        assert_eq!(report.verdict, FeasibilityVerdict::SimulationUseful);
        assert_eq!(report.decide(), report.verdict);
    }

    #[test]
    fn feasibility_probability_zero_is_forced_too_rare() {
        let mut raw = small_scenario();
        raw.carrier_probability = 0.0;
        let s = raw.validate().unwrap();
        let report =
            feasibility_verdict(&s, EventMetric::Carrier, 0.1, 0.95, 1_000_000, DEFAULT_NODE_CAP)
                .unwrap();
        assert_eq!(report.required_replications, None);
        assert_eq!(report.verdict, FeasibilityVerdict::TooRareForBudget);
        assert!(report.rationale.contains("impossible"));
    }

    #[test]
    fn csv_outputs_have_stable_headers() {
        let s = small_scenario().validate().unwrap();
        let result = run_experiment(&s, 3).unwrap();
        let mut buf = Vec::new();
        write_replications_csv(&result, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with(
            "replication_index,seed,arrivals,carriers_generated,clandestines_generated"
        ));
        assert!(header.contains("french.pmmw_fr.inspections"));
        assert!(header.contains("annual_total_gbp"));
        assert_eq!(text.lines().count(), 4);

        let mut buf = Vec::new();
        write_summary_csv(&result, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "metric,n,mean,sample_variance,ci_half_width,cv"
        );

        let sw = sweep(&s, "carrier_probability", &[0.004, 0.04], 3, &SweepConfig::default())
            .unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&sw, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "value,sim_mean,sim_ci_halfwidth,tree_value,verdict"
        );
        assert_eq!(text.lines().count(), 3);
    }
}
