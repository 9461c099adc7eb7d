//! Per-lorry-type routing plans derived from a validated scenario.
//!
//! The same flow graph feeds both evaluators: the discrete-event engine
//! walks it with sampled randomness, the tree compiler expands it into
//! an exact chance tree.

use serde::Serialize;

use crate::scenario::{LorryType, ValidatedScenario};

/// One station visit on a checked path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathStep {
    /// Index into the stage's `stations` list.
    pub station_index: usize,
    pub station_id: String,
    /// Probability this step is taken given the lorry reached it:
    /// 1.0 for the primary, the link probability for secondary tools.
    pub selection_probability: f64,
    pub is_primary: bool,
}

/// The plan for one (stage, lorry type) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StagePlan {
    pub stage_name: String,
    pub check_probability: f64,
    /// Stations visited when the lorry is checked, in order: the
    /// type's primary (if any) followed by the applicable secondary
    /// chain. Structural — present even when `check_probability` is 0.
    pub steps: Vec<PathStep>,
}

impl StagePlan {
    /// The checked branch, or `None` when no lorry can take it
    /// (check probability zero or no applicable stations).
    pub fn checked_branch(&self) -> Option<&[PathStep]> {
        if self.check_probability > 0.0 && !self.steps.is_empty() {
            Some(&self.steps)
        } else {
            None
        }
    }
}

/// Warnings produced while building a network; none is fatal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum NetworkWarning {
    /// No lorry type can ever reach this station.
    Unreachable { stage: String, station: String },
}

impl std::fmt::Display for NetworkWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NetworkWarning::Unreachable { stage, station } => {
                write!(f, "UNREACHABLE: station \"{station}\" in stage \"{stage}\" is on no lorry type's path")
            }
        }
    }
}

/// Explicit per-lorry-type path plan per stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoutingNetwork {
    /// `plans[stage_index]` holds the soft and hard plan for that stage.
    pub plans: Vec<TypePlans>,
    pub warnings: Vec<NetworkWarning>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypePlans {
    pub soft: StagePlan,
    pub hard: StagePlan,
}

impl TypePlans {
    pub fn for_type(&self, lorry_type: LorryType) -> &StagePlan {
        match lorry_type {
            LorryType::Soft => &self.soft,
            LorryType::Hard => &self.hard,
        }
    }
}

impl RoutingNetwork {
    pub fn stage_plan(&self, stage_index: usize, lorry_type: LorryType) -> &StagePlan {
        self.plans[stage_index].for_type(lorry_type)
    }

    pub fn stage_count(&self) -> usize {
        self.plans.len()
    }
}

/// Build the explicit routing plan for every (stage, lorry type) pair.
///
/// A pure function of the scenario: equal inputs give equal plans.
pub fn build_network(scenario: &ValidatedScenario) -> RoutingNetwork {
    let mut plans = Vec::with_capacity(scenario.stages.len());
    let mut warnings = Vec::new();

    for stage in &scenario.stages {
        let mut reachable = vec![false; stage.stations.len()];
        let mut by_type = Vec::with_capacity(2);
        for lorry_type in LorryType::ALL {
            let mut steps = Vec::new();
            if let Some(primary_id) = stage.primary_station.get(&lorry_type) {
                // Validation guarantees existence and applicability.
                let idx = stage.station_index(primary_id).expect("validated ref");
                steps.push(PathStep {
                    station_index: idx,
                    station_id: primary_id.clone(),
                    selection_probability: 1.0,
                    is_primary: true,
                });
                reachable[idx] = true;
            }
            for link in &stage.secondary_chain {
                let idx = stage.station_index(&link.station).expect("validated ref");
                if !stage.stations[idx].applies_to(lorry_type) {
                    continue;
                }
                steps.push(PathStep {
                    station_index: idx,
                    station_id: link.station.clone(),
                    selection_probability: link.probability,
                    is_primary: false,
                });
                reachable[idx] = true;
            }
            by_type.push(StagePlan {
                stage_name: stage.name.clone(),
                check_probability: stage.check_probability,
                steps,
            });
        }
        let hard = by_type.pop().expect("two lorry types");
        let soft = by_type.pop().expect("two lorry types");
        plans.push(TypePlans { soft, hard });

        for (idx, station) in stage.stations.iter().enumerate() {
            if !reachable[idx] || stage.check_probability == 0.0 {
                warnings.push(NetworkWarning::Unreachable {
                    stage: stage.name.clone(),
                    station: station.id.clone(),
                });
            }
        }
    }

    RoutingNetwork { plans, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;

    #[test]
    fn default_soft_french_primary_is_pmmw() {
        let s = Scenario::calais_default().validate().unwrap();
        let net = build_network(&s);
        let plan = net.stage_plan(0, LorryType::Soft);
        let checked = plan.checked_branch().expect("french stage is checked");
        assert_eq!(checked[0].station_id, "pmmw_fr");
        assert!(checked[0].is_primary);
    }

    #[test]
    fn british_soft_plan_has_no_pmmw() {
        let s = Scenario::calais_default().validate().unwrap();
        let net = build_network(&s);
        let plan = net.stage_plan(1, LorryType::Soft);
        let checked = plan.checked_branch().expect("british stage is checked");
        assert_eq!(checked[0].station_id, "co2_uk");
        for step in checked {
            assert!(!step.station_id.contains("pmmw"), "PMMW on British side");
        }
    }

    #[test]
    fn zero_check_probability_leaves_only_the_unchecked_branch() {
        let mut s = Scenario::calais_default();
        s.stages.truncate(1);
        s.stages[0].check_probability = 0.0;
        let s = s.validate().unwrap();
        let net = build_network(&s);
        assert!(net.stage_plan(0, LorryType::Soft).checked_branch().is_none());
        assert!(net.stage_plan(0, LorryType::Hard).checked_branch().is_none());
    }

    #[test]
    fn network_is_a_pure_function_of_the_scenario() {
        let s = Scenario::calais_default().validate().unwrap();
        assert_eq!(build_network(&s), build_network(&s));
    }

    #[test]
    fn inapplicable_chain_stations_are_skipped_per_type() {
        let s = Scenario::calais_default().validate().unwrap();
        let net = build_network(&s);
        // hb_uk applies to hard lorries only; soft plan must skip it.
        let soft = net.stage_plan(1, LorryType::Soft);
        assert!(soft.steps.iter().all(|st| st.station_id != "hb_uk"));
    }

    #[test]
    fn unreached_station_is_flagged() {
        let mut s = Scenario::calais_default();
        // Drop the soft primary and the whole secondary chain of the
        // British stage: co2_uk/canine_uk/visual_uk become unreachable.
        s.stages[1].primary_station.remove(&LorryType::Soft);
        s.stages[1].secondary_chain.clear();
        let s = s.validate().unwrap();
        let net = build_network(&s);
        let unreachable: Vec<&str> = net
            .warnings
            .iter()
            .map(|w| match w {
                NetworkWarning::Unreachable { station, .. } => station.as_str(),
            })
            .collect();
        assert!(unreachable.contains(&"co2_uk"));
        assert!(unreachable.contains(&"canine_uk"));
        assert!(unreachable.contains(&"visual_uk"));
        assert!(!unreachable.contains(&"hb_uk"));
    }

    #[test]
    fn every_path_terminates() {
        // Paths are finite by construction: every plan has finitely
        // many steps and stages advance monotonically.
        let s = Scenario::calais_default().validate().unwrap();
        let net = build_network(&s);
        for plans in &net.plans {
            for lorry_type in LorryType::ALL {
                let plan = plans.for_type(lorry_type);
                assert!(plan.steps.len() <= 16);
            }
        }
        assert!(net.stage_count() == 2);
    }
}
