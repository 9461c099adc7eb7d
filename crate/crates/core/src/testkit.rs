//! Deterministic random-scenario generators for property tests and
//! calibration runs.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::scenario::{
    ArrivalSegment, ControlStage, CostModel, GroupSize, LorryType, QueueCapacity, Scenario,
    SecondaryLink, ServiceTime, Station, StationKind, ValidatedScenario,
};

/// Knobs for [`random_scenario`].
#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub max_stages: usize,
    pub max_stations_per_stage: usize,
    pub max_rate: f64,
    pub max_horizon_hours: f64,
    /// Probability a station gets a finite queue capacity.
    pub finite_queue_probability: f64,
    /// Carrier probability is drawn uniformly from this range.
    pub carrier_range: (f64, f64),
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            max_stages: 3,
            max_stations_per_stage: 3,
            max_rate: 12.0,
            max_horizon_hours: 48.0,
            finite_queue_probability: 0.0,
            carrier_range: (0.0, 0.3),
        }
    }
}

impl GeneratorConfig {
    /// Generator preset that mixes in finite queue capacities.
    pub fn with_finite_queues() -> Self {
        GeneratorConfig { finite_queue_probability: 0.4, ..Default::default() }
    }

    /// Preset for tree-agreement checks: carrier probability bounded
    /// away from zero so undetected counts are never degenerate.
    pub fn with_common_carriers() -> Self {
        GeneratorConfig { carrier_range: (0.05, 0.4), ..Default::default() }
    }
}

/// Generate a structurally valid random scenario from a seed.
pub fn random_scenario(seed: u64, config: &GeneratorConfig) -> ValidatedScenario {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let stage_count = rng.gen_range(1..=config.max_stages);
    let mut stages = Vec::with_capacity(stage_count);
    for stage_idx in 0..stage_count {
        let station_count = rng.gen_range(1..=config.max_stations_per_stage);
        let mut stations = Vec::with_capacity(station_count);
        for st_idx in 0..station_count {
            let applicable = match rng.gen_range(0..4u8) {
                0 => vec![LorryType::Soft],
                1 => vec![LorryType::Hard],
                _ => vec![LorryType::Soft, LorryType::Hard],
            };
            let service_time = match rng.gen_range(0..3u8) {
                0 => ServiceTime::Deterministic { hours: rng.gen_range(0.001..0.02) },
                1 => ServiceTime::Exponential { mean_hours: rng.gen_range(0.001..0.02) },
                _ => ServiceTime::Lognormal {
                    mu: rng.gen_range(-7.0..-4.5),
                    sigma: rng.gen_range(0.1..0.6),
                },
            };
            let queue_capacity = if rng.gen::<f64>() < config.finite_queue_probability {
                QueueCapacity::Bounded(rng.gen_range(1..6))
            } else {
                QueueCapacity::Unbounded
            };
            stations.push(Station {
                id: format!("st{stage_idx}_{st_idx}"),
                kind: StationKind::Other,
                applicable_types: applicable,
                tp_rate: rng.gen_range(0.0..=1.0),
                fp_rate: rng.gen_range(0.0..0.1),
                cost_per_inspection: rng.gen_range(0.0..30.0),
                service_time,
                servers: rng.gen_range(1..5),
                queue_capacity,
                note: None,
            });
        }

        // Primary per type: pick an applicable station when one exists.
        let mut primary_station = BTreeMap::new();
        for lorry_type in LorryType::ALL {
            let candidates: Vec<&Station> =
                stations.iter().filter(|s| s.applies_to(lorry_type)).collect();
            if candidates.is_empty() || rng.gen::<f64>() < 0.2 {
                continue;
            }
            let pick = candidates[rng.gen_range(0..candidates.len())];
            primary_station.insert(lorry_type, pick.id.clone());
        }
        // A random subset of the remaining stations forms the chain.
        let mut secondary_chain = Vec::new();
        for station in &stations {
            if rng.gen::<f64>() < 0.5 {
                secondary_chain.push(SecondaryLink {
                    station: station.id.clone(),
                    probability: rng.gen_range(0.0..=1.0),
                });
            }
        }
        stages.push(ControlStage {
            name: format!("stage{stage_idx}"),
            check_probability: rng.gen_range(0.0..=1.0),
            primary_station,
            secondary_chain,
            stations,
            note: None,
        });
    }

    let group_size = match rng.gen_range(0..3u8) {
        0 => GroupSize::Degenerate { value: rng.gen_range(1..4) },
        1 => GroupSize::Geometric { success_probability: rng.gen_range(0.3..1.0) },
        _ => GroupSize::Empirical {
            entries: vec![
                crate::scenario::GroupSizeEntry { value: 1, weight: rng.gen_range(0.5..3.0) },
                crate::scenario::GroupSizeEntry { value: 2, weight: rng.gen_range(0.0..1.0) },
                crate::scenario::GroupSizeEntry { value: 5, weight: rng.gen_range(0.0..0.5) },
            ],
        },
    };

    let scenario = Scenario {
        notes: vec![],
        arrival_schedule: vec![ArrivalSegment {
            start_hour: 0.0,
            rate: rng.gen_range(0.5..config.max_rate),
        }],
        horizon_hours: rng.gen_range(4.0..config.max_horizon_hours),
        carrier_probability: rng.gen_range(config.carrier_range.0..config.carrier_range.1),
        group_size,
        soft_sided_probability: rng.gen_range(0.0..=1.0),
        stages,
        cost_model: CostModel {
            undetected_unit_cost: 20_000.0,
            detection_processing_cost: rng.gen_range(0.0..500.0),
            false_alarm_cost: rng.gen_range(0.0..100.0),
            fixed_cost_per_hour: rng.gen_range(0.0..10.0),
        },
        master_seed: rng.gen(),
    };
    scenario
        .validate()
        .expect("generated scenarios are valid by construction")
}
