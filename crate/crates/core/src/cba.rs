//! Cost-benefit accounting: counts to money, annualization, and the
//! break-even inspection margin.
//!
//! Direct costs are operational (inspections, fixed operating hours,
//! detention processing); indirect costs are the price of failures,
//! chiefly undetected clandestines.

use serde::Serialize;
use thiserror::Error;

use crate::engine::ReplicationResult;
use crate::scenario::{CostModel, Scenario, HOURS_PER_YEAR};
use crate::tree::{expected_outcome, tree_from_scenario, TreeError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CbaError {
    #[error("NONPOSITIVE_HORIZON: horizon must be > 0, got {0}")]
    NonpositiveHorizon(f64),
    #[error("UNKNOWN_STAGE: no stage named \"{0}\"")]
    UnknownStage(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("scenario invalid after modification: {0}")]
    Invalid(String),
}

/// Money split of one replication (or one annualized view of it).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub direct_cost: f64,
    pub indirect_cost: f64,
    pub total: f64,
    pub horizon_hours: f64,
    /// 1.0 for raw breakdowns; 8760 / original horizon once annualized.
    pub annualization_factor: f64,
}

/// Deterministic recomputation of costs from replication counters:
/// direct = inspections x station fee + fixed hourly x horizon +
/// detected lorries x processing fee; indirect = undetected x unit
/// cost + false alarms x alarm cost.
pub fn cost_of(result: &ReplicationResult, cm: &CostModel) -> CostBreakdown {
    let inspection_cost: f64 = result
        .stations
        .iter()
        .map(|s| s.inspections as f64 * s.cost_per_inspection)
        .sum();
    let direct = inspection_cost
        + cm.fixed_cost_per_hour * result.horizon_hours
        + result.detected_lorries as f64 * cm.detection_processing_cost;
    let indirect = result.clandestines_undetected as f64 * cm.undetected_unit_cost
        + result.false_alarms as f64 * cm.false_alarm_cost;
    CostBreakdown {
        direct_cost: direct,
        indirect_cost: indirect,
        total: direct + indirect,
        horizon_hours: result.horizon_hours,
        annualization_factor: 1.0,
    }
}

/// Scale every monetary field to a full year (8,760 hours). Idempotent:
/// an already-annual breakdown has factor 8,760 / 8,760 = 1.
pub fn annualize(cb: &CostBreakdown) -> Result<CostBreakdown, CbaError> {
    if !(cb.horizon_hours > 0.0) {
        return Err(CbaError::NonpositiveHorizon(cb.horizon_hours));
    }
    let factor = HOURS_PER_YEAR / cb.horizon_hours;
    Ok(CostBreakdown {
        direct_cost: cb.direct_cost * factor,
        indirect_cost: cb.indirect_cost * factor,
        total: cb.total * factor,
        horizon_hours: HOURS_PER_YEAR,
        annualization_factor: cb.annualization_factor * factor,
    })
}

/// Expected benefit minus cost of checking one more lorry at a stage,
/// in GBP per checked lorry.
///
/// Expected per-lorry cost is affine in the stage's check probability,
/// so the margin is the difference between the c = 0 and c = 1
/// endpoints and is constant in c: (avoided indirect cost per checked
/// lorry) - (inspection cost per checked lorry). Positive means
/// checking pays for itself.
pub fn break_even_margin(
    scenario: &Scenario,
    stage_name: &str,
    cm: &CostModel,
) -> Result<f64, CbaError> {
    let stage_index = scenario
        .stage_index(stage_name)
        .ok_or_else(|| CbaError::UnknownStage(stage_name.to_string()))?;

    let at = |check: f64| -> Result<(f64, f64), CbaError> {
        let mut modified = scenario.clone();
        modified.stages[stage_index].check_probability = check;
        let validated = modified
            .validate()
            .map_err(|e| CbaError::Invalid(e.to_string()))?;
        let tree = tree_from_scenario(&validated)?;
        let exp = expected_outcome(&tree, cm);
        Ok((exp.per_lorry_direct_cost, exp.per_lorry_indirect_cost))
    };

    let (direct0, indirect0) = at(0.0)?;
    let (direct1, indirect1) = at(1.0)?;
    let avoided_indirect = indirect0 - indirect1;
    let inspection_cost = direct1 - direct0;
    Ok(avoided_indirect - inspection_cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::StationStats;
    use crate::scenario::{LorryType, QueueCapacity, Scenario, ServiceTime, Station, StationKind};

    fn empty_result() -> ReplicationResult {
        ReplicationResult {
            seed: 0,
            horizon_hours: 168.0,
            arrivals: 0,
            carriers_generated: 0,
            clandestines_generated: 0,
            clandestines_detected: 0,
            clandestines_undetected: 0,
            balked_lorries: 0,
            detected_lorries: 0,
            false_alarms: 0,
            stations: vec![],
            direct_cost: 0.0,
            indirect_cost: 0.0,
            total_cost: 0.0,
        }
    }

    #[test]
    fn zero_counters_cost_nothing() {
        let cb = cost_of(&empty_result(), &CostModel::default());
        assert_eq!(cb.total, 0.0);
        assert_eq!(cb.direct_cost, 0.0);
        assert_eq!(cb.indirect_cost, 0.0);
    }

    #[test]
    fn undetected_clandestines_cost_the_unit_price() {
        let mut r = empty_result();
        r.clandestines_undetected = 2;
        let cb = cost_of(&r, &CostModel::default());
        assert_eq!(cb.indirect_cost, 40_000.0);
        assert_eq!(cb.total, 40_000.0);
    }

    #[test]
    fn inspection_and_processing_fees_add_up() {
        let mut r = empty_result();
        r.stations.push(StationStats {
            stage: "only".to_string(),
            station: "s1".to_string(),
            inspections: 100,
            detections: 1,
            false_alarms: 0,
            max_queue_len: 0,
            mean_wait_hours: 0.0,
            cost_per_inspection: 15.0,
        });
        r.detected_lorries = 1;
        let cm = CostModel {
            undetected_unit_cost: 20_000.0,
            detection_processing_cost: 500.0,
            false_alarm_cost: 0.0,
            fixed_cost_per_hour: 0.0,
        };
        let cb = cost_of(&r, &cm);
        assert_eq!(cb.direct_cost, 100.0 * 15.0 + 500.0);
    }

    #[test]
    fn annualize_scales_by_hours_per_year() {
        let mut r = empty_result();
        r.clandestines_undetected = 2;
        r.horizon_hours = 8760.0;
        let cb = cost_of(&r, &CostModel::default());
        let annual = annualize(&cb).unwrap();
        assert_eq!(annual.total, cb.total);
        assert_eq!(annual.annualization_factor, 1.0);

        let mut weekly = cb.clone();
        weekly.horizon_hours = 168.0;
        weekly.direct_cost = 0.0;
        weekly.indirect_cost = 1000.0;
        weekly.total = 1000.0;
        let annual = annualize(&weekly).unwrap();
        assert!((annual.total - 52_142.86).abs() < 0.01, "total {}", annual.total);
        // Annualizing twice is the identity once the horizon is a year.
        let twice = annualize(&annual).unwrap();
        assert_eq!(twice.total, annual.total);
    }

    #[test]
    fn annualize_rejects_nonpositive_horizon() {
        let mut cb = cost_of(&empty_result(), &CostModel::default());
        cb.horizon_hours = 0.0;
        assert!(matches!(annualize(&cb), Err(CbaError::NonpositiveHorizon(_))));
    }

    #[test]
    fn cost_of_is_linear_in_counts_and_horizon() {
        let mut r = empty_result();
        r.clandestines_undetected = 3;
        r.false_alarms = 4;
        r.detected_lorries = 2;
        r.stations.push(StationStats {
            stage: "a".to_string(),
            station: "x".to_string(),
            inspections: 10,
            detections: 2,
            false_alarms: 4,
            max_queue_len: 1,
            mean_wait_hours: 0.1,
            cost_per_inspection: 7.0,
        });
        let cm = CostModel {
            undetected_unit_cost: 20_000.0,
            detection_processing_cost: 250.0,
            false_alarm_cost: 40.0,
            fixed_cost_per_hour: 2.5,
        };
        let base = cost_of(&r, &cm);

        let mut doubled = r.clone();
        doubled.clandestines_undetected *= 2;
        doubled.false_alarms *= 2;
        doubled.detected_lorries *= 2;
        doubled.horizon_hours *= 2.0;
        doubled.stations[0].inspections *= 2;
        let twice = cost_of(&doubled, &cm);
        assert!((twice.direct_cost - 2.0 * base.direct_cost).abs() < 1e-9);
        assert!((twice.indirect_cost - 2.0 * base.indirect_cost).abs() < 1e-9);
        assert!((twice.total - 2.0 * base.total).abs() < 1e-9);
    }

    fn margin_scenario(tp: f64, inspection_cost: f64) -> Scenario {
        let station = Station {
            id: "s1".to_string(),
            kind: StationKind::Other,
            applicable_types: vec![LorryType::Soft, LorryType::Hard],
            tp_rate: tp,
            fp_rate: 0.0,
            cost_per_inspection: inspection_cost,
            service_time: ServiceTime::Deterministic { hours: 0.01 },
            servers: 1,
            queue_capacity: QueueCapacity::Unbounded,
            note: None,
        };
        let mut primary = std::collections::BTreeMap::new();
        primary.insert(LorryType::Soft, "s1".to_string());
        primary.insert(LorryType::Hard, "s1".to_string());
        Scenario {
            notes: vec![],
            arrival_schedule: vec![crate::scenario::ArrivalSegment {
                start_hour: 0.0,
                rate: 10.0,
            }],
            horizon_hours: 24.0,
            carrier_probability: 0.004,
            group_size: Default::default(),
            soft_sided_probability: 0.5,
            stages: vec![crate::scenario::ControlStage {
                name: "gate".to_string(),
                check_probability: 0.5,
                primary_station: primary,
                secondary_chain: vec![],
                stations: vec![station],
                note: None,
            }],
            cost_model: CostModel::default(),
            master_seed: 1,
        }
    }

    #[test]
    fn break_even_margin_matches_hand_oracles() {
        // Residual carrier probability 0.004, perfect detection,
        // 20,000 GBP unit cost, 10 GBP inspection: 0.004*20000 - 10.
        let s = margin_scenario(1.0, 10.0);
        let m = break_even_margin(&s, "gate", &s.cost_model.clone()).unwrap();
        assert!((m - 70.0).abs() < 1e-9, "margin {m}");

        // 80 GBP inspections sit exactly at indifference.
        let s = margin_scenario(1.0, 80.0);
        let m = break_even_margin(&s, "gate", &s.cost_model.clone()).unwrap();
        assert!(m.abs() < 1e-9, "margin {m}");

        // Free inspections with any detection power always pay.
        let s = margin_scenario(0.3, 0.0);
        let m = break_even_margin(&s, "gate", &s.cost_model.clone()).unwrap();
        assert!(m > 0.0);
    }

    #[test]
    fn margin_sign_agrees_with_total_cost_endpoints() {
        for (tp, fee) in [(1.0, 10.0), (1.0, 80.0), (1.0, 200.0), (0.4, 25.0)] {
            let s = margin_scenario(tp, fee);
            let cm = s.cost_model.clone();
            let margin = break_even_margin(&s, "gate", &cm).unwrap();
            let total_at = |c: f64| {
                let mut m = s.clone();
                m.stages[0].check_probability = c;
                let v = m.validate().unwrap();
                let tree = tree_from_scenario(&v).unwrap();
                let e = expected_outcome(&tree, &cm);
                e.per_lorry_direct_cost + e.per_lorry_indirect_cost
            };
            let lower_at_full = total_at(1.0) < total_at(0.0);
            if margin.abs() > 1e-12 {
                assert_eq!(margin > 0.0, lower_at_full, "tp={tp} fee={fee}");
            }
        }
    }

    #[test]
    fn unknown_stage_is_reported() {
        let s = margin_scenario(1.0, 10.0);
        let err = break_even_margin(&s, "nope", &s.cost_model.clone()).unwrap_err();
        assert!(matches!(err, CbaError::UnknownStage(_)));
    }
}
