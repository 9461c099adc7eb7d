//! Exact per-lorry decision (chance) tree compiled from a scenario.
//!
//! The tree enumerates every probabilistic branch a single lorry can
//! take through the screening pipeline: lorry type, carrier status,
//! per-stage check decisions, secondary-tool selections and inspection
//! outcomes. Queueing, capacity and time effects are absent by
//! construction, which is exactly what makes it the analytic baseline
//! the simulation is validated against. Expectations scale linearly to
//! N lorries because lorries are independent in the no-queue-effect
//! regime.

use serde::Serialize;
use thiserror::Error;

use crate::network::{build_network, RoutingNetwork};
use crate::scenario::{CostModel, LorryType, ValidatedScenario};

pub const DEFAULT_NODE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("TREE_TOO_LARGE: {node_count} nodes exceed the cap of {cap}; the analytic tree is impractical for this scenario")]
    TooLarge { node_count: usize, cap: usize },
}

/// Terminal outcome of one root-to-leaf path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Outcome {
    DetectedAt { stage: String, station: String },
    UndetectedExit,
    CleanExit,
    FalseAlarmExit,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Outcome::DetectedAt { stage, station } => {
                write!(f, "DETECTED_AT({station},{stage})")
            }
            Outcome::UndetectedExit => f.write_str("UNDETECTED_EXIT"),
            Outcome::CleanExit => f.write_str("CLEAN_EXIT"),
            Outcome::FalseAlarmExit => f.write_str("FALSE_ALARM_EXIT"),
        }
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub probability: f64,
    pub label: String,
    pub child: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Node {
    Chance { branches: Vec<Branch> },
    Terminal(Leaf),
}

/// A terminal node: outcome plus everything needed to cost the path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Leaf {
    pub outcome: Outcome,
    /// Flat station indices (into [`DecisionTree::stations`]) inspected
    /// along the path, in visit order.
    pub inspections: Vec<usize>,
    /// Expected clandestines detected on this path (E[group size] for
    /// detection leaves, 0 otherwise).
    pub expected_clandestines_detected: f64,
    /// Expected clandestines slipping through on this path.
    pub expected_clandestines_undetected: f64,
    pub false_alarm: bool,
}

impl Leaf {
    fn is_detection(&self) -> bool {
        matches!(self.outcome, Outcome::DetectedAt { .. })
    }
}

/// Inspection-station metadata snapshotted from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationInfo {
    pub stage_index: usize,
    pub stage_name: String,
    pub station_id: String,
    pub cost_per_inspection: f64,
}

/// Exact chance tree for a single lorry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub root: NodeId,
    pub stations: Vec<StationInfo>,
    pub stage_names: Vec<String>,
    /// Cost model in force when the tree was compiled; used for path
    /// costing unless the caller supplies another one.
    pub cost_model: CostModel,
    /// E[group size] of the source scenario.
    pub group_mean: f64,
}

impl DecisionTree {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_direct_cost(&self, leaf: &Leaf, cm: &CostModel) -> f64 {
        let inspections: f64 = leaf
            .inspections
            .iter()
            .map(|&i| self.stations[i].cost_per_inspection)
            .sum();
        let processing = if leaf.is_detection() {
            cm.detection_processing_cost
        } else {
            0.0
        };
        inspections + processing
    }

    pub fn leaf_indirect_cost(&self, leaf: &Leaf, cm: &CostModel) -> f64 {
        let undetected = leaf.expected_clandestines_undetected * cm.undetected_unit_cost;
        let false_alarm = if leaf.false_alarm { cm.false_alarm_cost } else { 0.0 };
        undetected + false_alarm
    }

    /// Structural checks: branch probabilities sum to 1 within 1e-12,
    /// children always have smaller ids than their parent (hence the
    /// graph is acyclic), and every leaf is terminal by construction.
    pub fn validate(&self) -> Result<(), String> {
        for (id, node) in self.nodes.iter().enumerate() {
            if let Node::Chance { branches } = node {
                if branches.is_empty() {
                    return Err(format!("chance node {id} has no branches"));
                }
                let total: f64 = branches.iter().map(|b| b.probability).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(format!(
                        "chance node {id} branch probabilities sum to {total}"
                    ));
                }
                for b in branches {
                    if b.child >= id {
                        return Err(format!(
                            "node {id} points forward to {}; tree must be acyclic",
                            b.child
                        ));
                    }
                    if !(0.0..=1.0).contains(&b.probability) {
                        return Err(format!(
                            "node {id} branch probability {} out of range",
                            b.probability
                        ));
                    }
                }
            }
        }
        if self.root != self.nodes.len().saturating_sub(1) {
            return Err("root must be the last node built".to_string());
        }
        Ok(())
    }

    /// Highest total per-lorry cost over all leaves: the theoretic
    /// worst case for a single lorry under this cost model.
    pub fn worst_case_cost(&self, cm: &CostModel) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Terminal(leaf) => {
                    Some(self.leaf_direct_cost(leaf, cm) + self.leaf_indirect_cost(leaf, cm))
                }
                Node::Chance { .. } => None,
            })
            .fold(0.0, f64::max)
    }

    /// Text outline export: one line per node with indent, branch
    /// probability, label and per-lorry cost at the leaves.
    pub fn export_outline(&self) -> String {
        let mut out = String::new();
        self.outline_node(self.root, 0, 1.0, "root", &mut out);
        out
    }

    fn outline_node(&self, id: NodeId, depth: usize, probability: f64, label: &str, out: &mut String) {
        use std::fmt::Write;
        let indent = "  ".repeat(depth);
        match &self.nodes[id] {
            Node::Chance { branches } => {
                writeln!(out, "{indent}p={probability:.6} {label}").unwrap();
                for b in branches {
                    self.outline_node(b.child, depth + 1, b.probability, &b.label, out);
                }
            }
            Node::Terminal(leaf) => {
                let cost = self.leaf_direct_cost(leaf, &self.cost_model)
                    + self.leaf_indirect_cost(leaf, &self.cost_model);
                writeln!(
                    out,
                    "{indent}p={probability:.6} {label} -> {} cost={cost:.2}",
                    leaf.outcome
                )
                .unwrap();
            }
        }
    }
}

/// Mean outcome of the tree: probability-weighted sums by exact
/// rollback, no sampling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeExpectation {
    pub per_lorry_direct_cost: f64,
    pub per_lorry_indirect_cost: f64,
    /// Probability a lorry exits carrying undetected clandestines.
    pub undetected_probability: f64,
    /// Probability a lorry is caught carrying clandestines (any stage).
    pub detected_probability: f64,
    pub false_alarm_probability: f64,
    /// Expected inspections per lorry, one entry per station.
    pub expected_inspections: Vec<StationExpectation>,
    /// Detection probability per stage, in stage order.
    pub detection_probability_by_stage: Vec<StageDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationExpectation {
    pub stage: String,
    pub station: String,
    pub expected_inspections: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageDetection {
    pub stage: String,
    pub detection_probability: f64,
}

impl TreeExpectation {
    pub fn per_lorry_total_cost(&self) -> f64 {
        self.per_lorry_direct_cost + self.per_lorry_indirect_cost
    }

    /// Probability the lorry is a carrier (detected or not).
    pub fn carrier_probability(&self) -> f64 {
        self.undetected_probability + self.detected_probability
    }
}

struct Builder<'a> {
    scenario: &'a ValidatedScenario,
    network: &'a RoutingNetwork,
    nodes: Vec<Node>,
    stations: Vec<StationInfo>,
    flat_index: Vec<Vec<usize>>,
    cap: usize,
    group_mean: f64,
}

impl<'a> Builder<'a> {
    fn push(&mut self, node: Node) -> Result<NodeId, TreeError> {
        if self.nodes.len() >= self.cap {
            return Err(TreeError::TooLarge { node_count: self.nodes.len() + 1, cap: self.cap });
        }
        self.nodes.push(node);
        Ok(self.nodes.len() - 1)
    }

    fn leaf(&mut self, leaf: Leaf) -> Result<NodeId, TreeError> {
        self.push(Node::Terminal(leaf))
    }

    fn chance(&mut self, branches: Vec<Branch>) -> Result<NodeId, TreeError> {
        self.push(Node::Chance { branches })
    }

    fn exit_leaf(&mut self, carrier: bool, inspections: &[usize]) -> Result<NodeId, TreeError> {
        let leaf = if carrier {
            Leaf {
                outcome: Outcome::UndetectedExit,
                inspections: inspections.to_vec(),
                expected_clandestines_detected: 0.0,
                expected_clandestines_undetected: self.group_mean,
                false_alarm: false,
            }
        } else {
            Leaf {
                outcome: Outcome::CleanExit,
                inspections: inspections.to_vec(),
                expected_clandestines_detected: 0.0,
                expected_clandestines_undetected: 0.0,
                false_alarm: false,
            }
        };
        self.leaf(leaf)
    }

    fn stage_node(
        &mut self,
        lorry_type: LorryType,
        carrier: bool,
        stage_index: usize,
        inspections: &mut Vec<usize>,
    ) -> Result<NodeId, TreeError> {
        if stage_index == self.scenario.stages.len() {
            return self.exit_leaf(carrier, inspections);
        }
        let plan = self.network.stage_plan(stage_index, lorry_type);
        let check = plan.check_probability;
        if plan.checked_branch().is_none() {
            // Nothing observable happens at this stage for this type.
            return self.stage_node(lorry_type, carrier, stage_index + 1, inspections);
        }
        let checked = self.step_node(lorry_type, carrier, stage_index, 0, inspections)?;
        let unchecked = self.stage_node(lorry_type, carrier, stage_index + 1, inspections)?;
        self.chance(vec![
            Branch {
                probability: check,
                label: format!("checked@{}", plan.stage_name),
                child: checked,
            },
            Branch {
                probability: 1.0 - check,
                label: format!("unchecked@{}", plan.stage_name),
                child: unchecked,
            },
        ])
    }

    fn step_node(
        &mut self,
        lorry_type: LorryType,
        carrier: bool,
        stage_index: usize,
        step_index: usize,
        inspections: &mut Vec<usize>,
    ) -> Result<NodeId, TreeError> {
        let plan = self.network.stage_plan(stage_index, lorry_type);
        if step_index == plan.steps.len() {
            return self.stage_node(lorry_type, carrier, stage_index + 1, inspections);
        }
        let step = plan.steps[step_index].clone();
        let visit = self.visit_node(lorry_type, carrier, stage_index, step_index, inspections)?;
        if step.is_primary {
            return Ok(visit);
        }
        let skipped =
            self.step_node(lorry_type, carrier, stage_index, step_index + 1, inspections)?;
        self.chance(vec![
            Branch {
                probability: step.selection_probability,
                label: format!("selected({})", step.station_id),
                child: visit,
            },
            Branch {
                probability: 1.0 - step.selection_probability,
                label: format!("skipped({})", step.station_id),
                child: skipped,
            },
        ])
    }

    fn visit_node(
        &mut self,
        lorry_type: LorryType,
        carrier: bool,
        stage_index: usize,
        step_index: usize,
        inspections: &mut Vec<usize>,
    ) -> Result<NodeId, TreeError> {
        let plan = self.network.stage_plan(stage_index, lorry_type);
        let step = &plan.steps[step_index];
        let station = &self.scenario.stages[stage_index].stations[step.station_index];
        let flat = self.flat_index[stage_index][step.station_index];
        let stage_name = plan.stage_name.clone();
        let station_id = step.station_id.clone();
        let tp = station.tp_rate;
        let fp = station.fp_rate;

        inspections.push(flat);
        let result = if carrier {
            let detected = self.leaf(Leaf {
                outcome: Outcome::DetectedAt {
                    stage: stage_name.clone(),
                    station: station_id.clone(),
                },
                inspections: inspections.clone(),
                expected_clandestines_detected: self.group_mean,
                expected_clandestines_undetected: 0.0,
                false_alarm: false,
            })?;
            let missed =
                self.step_node(lorry_type, carrier, stage_index, step_index + 1, inspections)?;
            self.chance(vec![
                Branch {
                    probability: tp,
                    label: format!("detected@{station_id}"),
                    child: detected,
                },
                Branch {
                    probability: 1.0 - tp,
                    label: format!("missed@{station_id}"),
                    child: missed,
                },
            ])
        } else {
            let alarm = self.leaf(Leaf {
                outcome: Outcome::FalseAlarmExit,
                inspections: inspections.clone(),
                expected_clandestines_detected: 0.0,
                expected_clandestines_undetected: 0.0,
                false_alarm: true,
            })?;
            let passed =
                self.step_node(lorry_type, carrier, stage_index, step_index + 1, inspections)?;
            self.chance(vec![
                Branch {
                    probability: fp,
                    label: format!("false_alarm@{station_id}"),
                    child: alarm,
                },
                Branch {
                    probability: 1.0 - fp,
                    label: format!("passed@{station_id}"),
                    child: passed,
                },
            ])
        };
        inspections.pop();
        result
    }
}

/// Compile a validated scenario into its exact per-lorry chance tree.
pub fn tree_from_scenario(scenario: &ValidatedScenario) -> Result<DecisionTree, TreeError> {
    tree_from_scenario_with_cap(scenario, DEFAULT_NODE_CAP)
}

/// Same as [`tree_from_scenario`] with an explicit node-count cap.
pub fn tree_from_scenario_with_cap(
    scenario: &ValidatedScenario,
    cap: usize,
) -> Result<DecisionTree, TreeError> {
    let network = build_network(scenario);
    let mut stations = Vec::new();
    let mut flat_index = Vec::new();
    for (stage_index, stage) in scenario.stages.iter().enumerate() {
        let mut row = Vec::new();
        for station in &stage.stations {
            row.push(stations.len());
            stations.push(StationInfo {
                stage_index,
                stage_name: stage.name.clone(),
                station_id: station.id.clone(),
                cost_per_inspection: station.cost_per_inspection,
            });
        }
        flat_index.push(row);
    }

    let mut builder = Builder {
        scenario,
        network: &network,
        nodes: Vec::new(),
        stations,
        flat_index,
        cap,
        group_mean: scenario.group_size.mean(),
    };

    let p_carrier = scenario.carrier_probability;
    let p_soft = scenario.soft_sided_probability;
    let mut type_children = Vec::new();
    for lorry_type in LorryType::ALL {
        let mut inspections = Vec::new();
        let carrier_child = builder.stage_node(lorry_type, true, 0, &mut inspections)?;
        let clean_child = builder.stage_node(lorry_type, false, 0, &mut inspections)?;
        let type_node = builder.chance(vec![
            Branch { probability: p_carrier, label: "carrier".to_string(), child: carrier_child },
            Branch { probability: 1.0 - p_carrier, label: "clean".to_string(), child: clean_child },
        ])?;
        type_children.push(type_node);
    }
    let root = builder.chance(vec![
        Branch { probability: p_soft, label: "soft".to_string(), child: type_children[0] },
        Branch {
            probability: 1.0 - p_soft,
            label: "hard".to_string(),
            child: type_children[1],
        },
    ])?;

    let tree = DecisionTree {
        nodes: builder.nodes,
        root,
        stations: builder.stations,
        stage_names: scenario.stages.iter().map(|s| s.name.clone()).collect(),
        cost_model: scenario.cost_model.clone(),
        group_mean: builder.group_mean,
    };
    debug_assert!(tree.validate().is_ok(), "{:?}", tree.validate());
    Ok(tree)
}

/// One root-to-leaf path with its probability and cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEntry {
    /// Branch labels from root to leaf.
    pub labels: Vec<String>,
    pub outcome: Outcome,
    pub probability: f64,
    pub direct_cost: f64,
    pub indirect_cost: f64,
}

impl PathEntry {
    pub fn total_cost(&self) -> f64 {
        self.direct_cost + self.indirect_cost
    }
}

/// Depth-first enumeration of every root-to-leaf path, in branch index
/// order. Probabilities multiply along branches and sum to 1 over the
/// whole list (within 1e-12). Costs use the tree's own cost model.
pub fn enumerate_paths(tree: &DecisionTree) -> Vec<PathEntry> {
    let mut out = Vec::new();
    let mut labels = Vec::new();
    walk_paths(tree, tree.root, 1.0, &mut labels, &mut out);
    out
}

fn walk_paths(
    tree: &DecisionTree,
    node: NodeId,
    probability: f64,
    labels: &mut Vec<String>,
    out: &mut Vec<PathEntry>,
) {
    match &tree.nodes[node] {
        Node::Chance { branches } => {
            for b in branches {
                labels.push(b.label.clone());
                walk_paths(tree, b.child, probability * b.probability, labels, out);
                labels.pop();
            }
        }
        Node::Terminal(leaf) => {
            out.push(PathEntry {
                labels: labels.clone(),
                outcome: leaf.outcome.clone(),
                probability,
                direct_cost: tree.leaf_direct_cost(leaf, &tree.cost_model),
                indirect_cost: tree.leaf_indirect_cost(leaf, &tree.cost_model),
            });
        }
    }
}

/// Exact expectation by bottom-up rollback (children have smaller ids
/// than parents, so a single ascending pass folds the whole tree).
pub fn expected_outcome(tree: &DecisionTree, cm: &CostModel) -> TreeExpectation {
    let n = tree.nodes.len();
    let mut direct = vec![0.0; n];
    let mut indirect = vec![0.0; n];
    let mut p_undetected = vec![0.0; n];
    let mut p_detected = vec![0.0; n];
    let mut p_false_alarm = vec![0.0; n];
    // Detection probability per stage and expected inspections per
    // station ride along in the same pass.
    let stage_count = tree.stage_names.len();
    let station_count = tree.stations.len();
    let mut det_stage = vec![0.0; n * stage_count.max(1)];
    let mut insp = vec![0.0; n * station_count.max(1)];

    for id in 0..n {
        match &tree.nodes[id] {
            Node::Terminal(leaf) => {
                direct[id] = tree.leaf_direct_cost(leaf, cm);
                indirect[id] = tree.leaf_indirect_cost(leaf, cm);
                match &leaf.outcome {
                    Outcome::UndetectedExit => p_undetected[id] = 1.0,
                    Outcome::DetectedAt { stage, .. } => {
                        p_detected[id] = 1.0;
                        if let Some(si) = tree.stage_names.iter().position(|s| s == stage) {
                            det_stage[id * stage_count + si] = 1.0;
                        }
                    }
                    Outcome::FalseAlarmExit => p_false_alarm[id] = 1.0,
                    Outcome::CleanExit => {}
                }
                for &station in &leaf.inspections {
                    insp[id * station_count + station] += 1.0;
                }
            }
            Node::Chance { branches } => {
                for b in branches {
                    let p = b.probability;
                    direct[id] += p * direct[b.child];
                    indirect[id] += p * indirect[b.child];
                    p_undetected[id] += p * p_undetected[b.child];
                    p_detected[id] += p * p_detected[b.child];
                    p_false_alarm[id] += p * p_false_alarm[b.child];
                    for si in 0..stage_count {
                        det_stage[id * stage_count + si] +=
                            p * det_stage[b.child * stage_count + si];
                    }
                    for st in 0..station_count {
                        insp[id * station_count + st] += p * insp[b.child * station_count + st];
                    }
                }
            }
        }
    }

    let root = tree.root;
    TreeExpectation {
        per_lorry_direct_cost: direct[root],
        per_lorry_indirect_cost: indirect[root],
        undetected_probability: p_undetected[root],
        detected_probability: p_detected[root],
        false_alarm_probability: p_false_alarm[root],
        expected_inspections: tree
            .stations
            .iter()
            .enumerate()
            .map(|(st, info)| StationExpectation {
                stage: info.stage_name.clone(),
                station: info.station_id.clone(),
                expected_inspections: insp[root * station_count + st],
            })
            .collect(),
        detection_probability_by_stage: tree
            .stage_names
            .iter()
            .enumerate()
            .map(|(si, name)| StageDetection {
                stage: name.clone(),
                detection_probability: det_stage[root * stage_count + si],
            })
            .collect(),
    }
}
