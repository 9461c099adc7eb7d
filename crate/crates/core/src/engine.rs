//! Discrete-event simulation of one replication.
//!
//! Lorries arrive as a nonhomogeneous Poisson process, queue at the
//! stations of their routing plan, and resolve through stochastic
//! inspection outcomes. Every probabilistic decision a lorry makes is
//! drawn by inversion from that lorry's private RNG stream in a fixed
//! structural order, so outcomes are independent of queue timing and
//! coupled runs (common random numbers) stay coupled when a single
//! rate changes. Service-time draws follow in the same private stream.
//!
//! One replication is strictly single-threaded; replications run
//! concurrently on disjoint substreams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use smallvec::SmallVec;
use thiserror::Error;

use crate::cba;
use crate::network::RoutingNetwork;
use crate::rng;
use crate::scenario::{LorryType, QueueCapacity, ValidatedScenario};

/// Hard cap on drain time as a multiple of the horizon.
pub const DEFAULT_DRAIN_CAP_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("HORIZON_OVERFLOW: drain passed {clock:.3} h, beyond {cap:.3} h ({factor}x the {horizon:.3} h horizon); the queueing network looks unstable")]
    HorizonOverflow { clock: f64, cap: f64, factor: f64, horizon: f64 },
}

/// Engine tuning knobs that are not part of the scenario.
#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub drain_cap_factor: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { drain_cap_factor: DEFAULT_DRAIN_CAP_FACTOR }
    }
}

// ---------------------------------------------------------------------------
// Event calendar
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum EventKind {
    /// A lorry enters the system.
    Arrival { lorry: usize },
    /// A station finishes inspecting a lorry.
    ServiceComplete { stage: usize, station: usize, lorry: usize },
}

#[derive(Debug, Clone)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: BinaryHeap is a max-heap, we want earliest first.
        // Ties break by insertion sequence, which keeps dequeue order
        // deterministic.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending events ordered by (time, insertion sequence).
#[derive(Debug, Default)]
pub(crate) struct EventCalendar {
    heap: BinaryHeap<Event>,
    next_seq: u64,
    clock: f64,
}

impl EventCalendar {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time >= self.clock, "event scheduled in the past");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    fn pop(&mut self) -> Option<Event> {
        let event = self.heap.pop()?;
        debug_assert!(event.time >= self.clock, "time went backwards");
        self.clock = event.time;
        Some(event)
    }

    fn clock(&self) -> f64 {
        self.clock
    }
}

// ---------------------------------------------------------------------------
// Per-replication state
// ---------------------------------------------------------------------------

/// Decision-slot layout for one lorry type: which private-uniform index
/// feeds each structural decision. The layout depends only on the
/// scenario structure, never on probabilities, so coupled runs consume
/// identical streams.
#[derive(Debug, Clone)]
struct TypeLayout {
    stages: Vec<StageLayout>,
    total_slots: usize,
}

#[derive(Debug, Clone)]
struct StageLayout {
    check_slot: usize,
    steps: Vec<StepLayout>,
}

#[derive(Debug, Clone)]
struct StepLayout {
    selection_slot: Option<usize>,
    inspection_slot: usize,
}

// Slots 0..3 hold the carrier, soft-sided and group-size uniforms;
// stage and step slots follow.
const SLOT_FIRST_STAGE: usize = 3;

fn build_layout(net: &RoutingNetwork, lorry_type: LorryType) -> TypeLayout {
    let mut next = SLOT_FIRST_STAGE;
    let mut stages = Vec::with_capacity(net.stage_count());
    for stage_index in 0..net.stage_count() {
        let plan = net.stage_plan(stage_index, lorry_type);
        let check_slot = next;
        next += 1;
        let mut steps = Vec::with_capacity(plan.steps.len());
        for step in &plan.steps {
            let selection_slot = if step.is_primary {
                None
            } else {
                let s = next;
                next += 1;
                Some(s)
            };
            let inspection_slot = next;
            next += 1;
            steps.push(StepLayout { selection_slot, inspection_slot });
        }
        stages.push(StageLayout { check_slot, steps });
    }
    TypeLayout { stages, total_slots: next }
}

#[derive(Debug)]
struct Lorry {
    rng: ChaCha12Rng,
    /// Pre-drawn uniforms, indexed by decision slot.
    decisions: SmallVec<[f64; 20]>,
    lorry_type: LorryType,
    carrier: bool,
    group: u32,
    /// Time the lorry joined the queue it is currently waiting in.
    queued_at: f64,
    stage: usize,
    step: usize,
    resolved: bool,
}

#[derive(Debug)]
struct StationState {
    servers: u32,
    busy: u32,
    capacity: QueueCapacity,
    waiting: VecDeque<usize>,
    inspections: u64,
    detections: u64,
    false_alarms: u64,
    max_queue_len: u64,
    total_wait_hours: f64,
    served: u64,
}

impl StationState {
    fn queue_full(&self) -> bool {
        match self.capacity {
            QueueCapacity::Unbounded => false,
            QueueCapacity::Bounded(cap) => self.waiting.len() as u32 >= cap,
        }
    }
}

/// Per-station counters and queue statistics of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationStats {
    pub stage: String,
    pub station: String,
    pub inspections: u64,
    pub detections: u64,
    pub false_alarms: u64,
    pub max_queue_len: u64,
    /// Mean time in queue before service over all served lorries
    /// (immediate starts count as zero wait); 0 if never served.
    pub mean_wait_hours: f64,
    /// Snapshot of the station's per-inspection fee, so costs are
    /// recomputable from the result alone.
    pub cost_per_inspection: f64,
}

/// Per-run counters and cost totals for one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationResult {
    pub seed: u64,
    pub horizon_hours: f64,
    pub arrivals: u64,
    pub carriers_generated: u64,
    pub clandestines_generated: u64,
    pub clandestines_detected: u64,
    pub clandestines_undetected: u64,
    /// Lorries that skipped a station because its queue was full.
    pub balked_lorries: u64,
    pub detected_lorries: u64,
    pub false_alarms: u64,
    pub stations: Vec<StationStats>,
    pub direct_cost: f64,
    pub indirect_cost: f64,
    pub total_cost: f64,
}

impl ReplicationResult {
    pub fn station(&self, stage: &str, station: &str) -> Option<&StationStats> {
        self.stations
            .iter()
            .find(|s| s.stage == stage && s.station == station)
    }

    /// Total inspections at one stage across its stations.
    pub fn stage_inspections(&self, stage: &str) -> u64 {
        self.stations
            .iter()
            .filter(|s| s.stage == stage)
            .map(|s| s.inspections)
            .sum()
    }
}

/// A single replication in progress. Create with [`Simulation::new`],
/// run to the horizon, then close with [`Simulation::drain_and_close`].
pub struct Simulation<'a> {
    scenario: &'a ValidatedScenario,
    network: &'a RoutingNetwork,
    config: EngineConfig,
    seed: u64,
    substream: u64,
    calendar: EventCalendar,
    layouts: [TypeLayout; 2],
    stations: Vec<Vec<StationState>>,
    lorries: Vec<Lorry>,
    arrival_rng: ChaCha12Rng,
    poisson_arrivals: bool,
    horizon: f64,
    // Counters.
    arrivals: u64,
    carriers_generated: u64,
    clandestines_generated: u64,
    clandestines_detected: u64,
    clandestines_undetected: u64,
    detected_lorries: u64,
    false_alarms: u64,
    balked_lorries: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(
        network: &'a RoutingNetwork,
        scenario: &'a ValidatedScenario,
        substream_seed: u64,
    ) -> Simulation<'a> {
        Self::with_config(network, scenario, substream_seed, EngineConfig::default())
    }

    pub fn with_config(
        network: &'a RoutingNetwork,
        scenario: &'a ValidatedScenario,
        substream_seed: u64,
        config: EngineConfig,
    ) -> Simulation<'a> {
        let mut sim = Self::empty(network, scenario, substream_seed, config);
        sim.poisson_arrivals = true;
        if let Some(t) = sim.sample_next_arrival(0.0) {
            sim.schedule_arrival(t);
        }
        sim
    }

    fn empty(
        network: &'a RoutingNetwork,
        scenario: &'a ValidatedScenario,
        substream_seed: u64,
        config: EngineConfig,
    ) -> Simulation<'a> {
        let layouts = [
            build_layout(network, LorryType::Soft),
            build_layout(network, LorryType::Hard),
        ];
        let stations = scenario
            .stages
            .iter()
            .map(|stage| {
                stage
                    .stations
                    .iter()
                    .map(|st| StationState {
                        servers: st.servers,
                        busy: 0,
                        capacity: st.queue_capacity,
                        waiting: VecDeque::new(),
                        inspections: 0,
                        detections: 0,
                        false_alarms: 0,
                        max_queue_len: 0,
                        total_wait_hours: 0.0,
                        served: 0,
                    })
                    .collect()
            })
            .collect();
        Simulation {
            scenario,
            network,
            config,
            seed: substream_seed,
            substream: substream_seed,
            calendar: EventCalendar::default(),
            layouts,
            stations,
            lorries: Vec::new(),
            arrival_rng: rng::stream_rng(substream_seed, rng::STREAM_ARRIVALS),
            poisson_arrivals: false,
            horizon: scenario.horizon_hours,
            arrivals: 0,
            carriers_generated: 0,
            clandestines_generated: 0,
            clandestines_detected: 0,
            clandestines_undetected: 0,
            detected_lorries: 0,
            false_alarms: 0,
            balked_lorries: 0,
        }
    }

    /// Deterministic variant for tests: arrivals at the given times
    /// (all strictly before the horizon) instead of Poisson.
    pub fn with_arrival_times(
        network: &'a RoutingNetwork,
        scenario: &'a ValidatedScenario,
        substream_seed: u64,
        arrival_times: &[f64],
    ) -> Simulation<'a> {
        let mut sim = Self::empty(network, scenario, substream_seed, EngineConfig::default());
        for &t in arrival_times {
            assert!(t < sim.horizon, "injected arrival at {t} is past the horizon");
            sim.schedule_arrival(t);
        }
        sim
    }

    fn schedule_arrival(&mut self, time: f64) {
        let lorry = self.materialize_lorry(time);
        self.calendar.schedule(time, EventKind::Arrival { lorry });
    }

    /// Next nonhomogeneous-Poisson arrival strictly before the horizon.
    /// Piecewise-constant rates: sample an exponential at the current
    /// segment's rate and hop to the next segment on overshoot
    /// (memorylessness makes the restart exact).
    fn sample_next_arrival(&mut self, after: f64) -> Option<f64> {
        let schedule = &self.scenario.arrival_schedule;
        let mut t = after;
        loop {
            if t >= self.horizon {
                return None;
            }
            let seg_index = match schedule.iter().rposition(|s| s.start_hour <= t) {
                Some(i) => i,
                None => return None,
            };
            let seg_end = schedule
                .get(seg_index + 1)
                .map(|s| s.start_hour)
                .unwrap_or(f64::INFINITY)
                .min(self.horizon);
            let rate = schedule[seg_index].rate;
            if rate <= 0.0 {
                if seg_end >= self.horizon {
                    return None;
                }
                t = seg_end;
                continue;
            }
            let u: f64 = self.arrival_rng.gen();
            let dt = -(1.0 - u).ln() / rate;
            let candidate = t + dt;
            if candidate < seg_end {
                return if candidate < self.horizon { Some(candidate) } else { None };
            }
            t = seg_end;
        }
    }

    /// Draw a lorry's full decision vector from its private stream.
    fn materialize_lorry(&mut self, arrival_time: f64) -> usize {
        let index = self.lorries.len();
        let mut lorry_rng = rng::lorry_rng(self.substream, index as u64);
        let u_carrier: f64 = lorry_rng.gen();
        let u_soft: f64 = lorry_rng.gen();
        let u_group: f64 = lorry_rng.gen();
        let carrier = u_carrier < self.scenario.carrier_probability;
        let lorry_type = if u_soft < self.scenario.soft_sided_probability {
            LorryType::Soft
        } else {
            LorryType::Hard
        };
        let group = if carrier { self.scenario.group_size.sample(u_group) } else { 0 };
        let layout = &self.layouts[type_index(lorry_type)];
        let mut decisions = SmallVec::with_capacity(layout.total_slots);
        decisions.push(u_carrier);
        decisions.push(u_soft);
        decisions.push(u_group);
        for _ in SLOT_FIRST_STAGE..layout.total_slots {
            decisions.push(lorry_rng.gen());
        }
        self.lorries.push(Lorry {
            rng: lorry_rng,
            decisions,
            lorry_type,
            carrier,
            group,
            queued_at: arrival_time,
            stage: 0,
            step: 0,
            resolved: false,
        });
        index
    }

    /// Advance a lorry from its current position until it parks in a
    /// queue/service or exits the system.
    fn advance(&mut self, lorry_id: usize) {
        loop {
            let (stage, step, lorry_type) = {
                let l = &self.lorries[lorry_id];
                (l.stage, l.step, l.lorry_type)
            };
            if stage == self.scenario.stages.len() {
                self.finish(lorry_id);
                return;
            }
            let layout = &self.layouts[type_index(lorry_type)];
            let stage_layout = &layout.stages[stage];
            let plan = self.network.stage_plan(stage, lorry_type);

            if step == 0 {
                // Stage entry: decide whether this stage checks the lorry.
                let checked = match plan.checked_branch() {
                    Some(_) => {
                        let u = self.lorries[lorry_id].decisions[stage_layout.check_slot];
                        u < plan.check_probability
                    }
                    None => false,
                };
                if !checked {
                    let l = &mut self.lorries[lorry_id];
                    l.stage += 1;
                    l.step = 0;
                    continue;
                }
            }
            if step >= plan.steps.len() {
                let l = &mut self.lorries[lorry_id];
                l.stage += 1;
                l.step = 0;
                continue;
            }

            let step_layout = &stage_layout.steps[step];
            let path_step = &plan.steps[step];
            if let Some(slot) = step_layout.selection_slot {
                let u = self.lorries[lorry_id].decisions[slot];
                if u >= path_step.selection_probability {
                    self.lorries[lorry_id].step += 1;
                    continue;
                }
            }

            // Station visit: balk if the waiting room is full.
            let station_index = path_step.station_index;
            let now = self.calendar.clock();
            let state = &mut self.stations[stage][station_index];
            if state.busy < state.servers {
                state.busy += 1;
                state.served += 1;
                let service = self.sample_service(lorry_id, stage, station_index);
                self.calendar.schedule(
                    now + service,
                    EventKind::ServiceComplete { stage, station: station_index, lorry: lorry_id },
                );
                return;
            }
            if state.queue_full() {
                self.balked_lorries += 1;
                self.lorries[lorry_id].step += 1;
                continue;
            }
            state.waiting.push_back(lorry_id);
            state.max_queue_len = state.max_queue_len.max(state.waiting.len() as u64);
            self.lorries[lorry_id].queued_at = now;
            return;
        }
    }

    fn sample_service(&mut self, lorry_id: usize, stage: usize, station_index: usize) -> f64 {
        let u: f64 = self.lorries[lorry_id].rng.gen();
        self.scenario.stages[stage].stations[station_index]
            .service_time
            .sample(u)
    }

    fn complete_service(&mut self, stage: usize, station_index: usize, lorry_id: usize) {
        let lorry_type = self.lorries[lorry_id].lorry_type;
        let step = self.lorries[lorry_id].step;
        let layout = &self.layouts[type_index(lorry_type)];
        let slot = layout.stages[stage].steps[step].inspection_slot;
        let u = self.lorries[lorry_id].decisions[slot];
        let station_cfg = &self.scenario.stages[stage].stations[station_index];
        let carrier = self.lorries[lorry_id].carrier;

        let state = &mut self.stations[stage][station_index];
        state.inspections += 1;
        let outcome = if carrier && u < station_cfg.tp_rate {
            state.detections += 1;
            InspectionOutcome::Detected
        } else if !carrier && u < station_cfg.fp_rate {
            state.false_alarms += 1;
            InspectionOutcome::FalseAlarm
        } else {
            InspectionOutcome::Passed
        };

        // Free the server; pull the next waiting lorry in.
        state.busy -= 1;
        let next_waiting = state.waiting.pop_front();
        if let Some(next_id) = next_waiting {
            let now = self.calendar.clock();
            let state = &mut self.stations[stage][station_index];
            state.busy += 1;
            state.total_wait_hours += now - self.lorries[next_id].queued_at;
            state.served += 1;
            let service = self.sample_service(next_id, stage, station_index);
            self.calendar.schedule(
                now + service,
                EventKind::ServiceComplete { stage, station: station_index, lorry: next_id },
            );
        }

        match outcome {
            InspectionOutcome::Detected => {
                // Clandestines removed; the lorry leaves the flow resolved.
                let group = u64::from(self.lorries[lorry_id].group);
                self.clandestines_detected += group;
                self.detected_lorries += 1;
                self.lorries[lorry_id].resolved = true;
            }
            InspectionOutcome::FalseAlarm => {
                // Full manual search finds nothing; the lorry is released
                // outside the remaining screening flow.
                self.false_alarms += 1;
                self.lorries[lorry_id].resolved = true;
            }
            InspectionOutcome::Passed => {
                self.lorries[lorry_id].step += 1;
                self.advance(lorry_id);
            }
        }
    }

    fn finish(&mut self, lorry_id: usize) {
        let l = &mut self.lorries[lorry_id];
        if !l.resolved {
            l.resolved = true;
            if l.carrier {
                self.clandestines_undetected += u64::from(l.group);
            }
        }
    }

    fn handle(&mut self, event: Event) {
        match event.kind {
            EventKind::Arrival { lorry } => {
                self.arrivals += 1;
                if self.lorries[lorry].carrier {
                    self.carriers_generated += 1;
                    self.clandestines_generated += u64::from(self.lorries[lorry].group);
                }
                if self.poisson_arrivals {
                    if let Some(t) = self.sample_next_arrival(event.time) {
                        self.schedule_arrival(t);
                    }
                }
                self.advance(lorry);
            }
            EventKind::ServiceComplete { stage, station, lorry } => {
                self.complete_service(stage, station, lorry);
            }
        }
    }

    /// Process every event up to and including the horizon.
    pub fn run_to_horizon(&mut self) {
        while let Some(event) = self.peek_time() {
            if event > self.horizon {
                break;
            }
            let event = self.calendar.pop().expect("peeked");
            self.handle(event);
        }
    }

    fn peek_time(&self) -> Option<f64> {
        self.heap_peek().map(|e| e.time)
    }

    fn heap_peek(&self) -> Option<&Event> {
        self.calendar.heap.peek()
    }

    /// Process remaining events without new arrivals and finalize the
    /// result. Fixed costs accrue over the nominal horizon only; drain
    /// time is an accounting closure, not operated time.
    pub fn drain_and_close(mut self) -> Result<ReplicationResult, EngineError> {
        let cap = self.horizon * self.config.drain_cap_factor;
        while let Some(event) = self.calendar.pop() {
            if event.time > cap {
                return Err(EngineError::HorizonOverflow {
                    clock: event.time,
                    cap,
                    factor: self.config.drain_cap_factor,
                    horizon: self.horizon,
                });
            }
            self.handle(event);
        }
        // Every materialized lorry must have resolved by now.
        debug_assert!(self.lorries.iter().all(|l| l.resolved));

        let stations = self
            .scenario
            .stages
            .iter()
            .enumerate()
            .flat_map(|(si, stage)| {
                let states = &self.stations[si];
                stage.stations.iter().enumerate().map(move |(ji, st)| {
                    let state = &states[ji];
                    StationStats {
                        stage: stage.name.clone(),
                        station: st.id.clone(),
                        inspections: state.inspections,
                        detections: state.detections,
                        false_alarms: state.false_alarms,
                        max_queue_len: state.max_queue_len,
                        mean_wait_hours: if state.served > 0 {
                            state.total_wait_hours / state.served as f64
                        } else {
                            0.0
                        },
                        cost_per_inspection: st.cost_per_inspection,
                    }
                })
            })
            .collect();

        let mut result = ReplicationResult {
            seed: self.seed,
            horizon_hours: self.horizon,
            arrivals: self.arrivals,
            carriers_generated: self.carriers_generated,
            clandestines_generated: self.clandestines_generated,
            clandestines_detected: self.clandestines_detected,
            clandestines_undetected: self.clandestines_undetected,
            balked_lorries: self.balked_lorries,
            detected_lorries: self.detected_lorries,
            false_alarms: self.false_alarms,
            stations,
            direct_cost: 0.0,
            indirect_cost: 0.0,
            total_cost: 0.0,
        };
        let breakdown = cba::cost_of(&result, &self.scenario.cost_model);
        result.direct_cost = breakdown.direct_cost;
        result.indirect_cost = breakdown.indirect_cost;
        result.total_cost = breakdown.total;
        Ok(result)
    }

    /// Current simulation clock, hours.
    pub fn clock(&self) -> f64 {
        self.calendar.clock()
    }
}

enum InspectionOutcome {
    Detected,
    FalseAlarm,
    Passed,
}

fn type_index(lorry_type: LorryType) -> usize {
    match lorry_type {
        LorryType::Soft => 0,
        LorryType::Hard => 1,
    }
}

/// Run one full replication: arrivals to the horizon, then drain.
///
/// Identical `(network, scenario, substream_seed)` inputs produce a
/// bit-identical result, independent of wall clock or thread count.
pub fn run_replication(
    network: &RoutingNetwork,
    scenario: &ValidatedScenario,
    substream_seed: u64,
) -> Result<ReplicationResult, EngineError> {
    run_replication_with_config(network, scenario, substream_seed, EngineConfig::default())
}

pub fn run_replication_with_config(
    network: &RoutingNetwork,
    scenario: &ValidatedScenario,
    substream_seed: u64,
    config: EngineConfig,
) -> Result<ReplicationResult, EngineError> {
    let mut sim = Simulation::with_config(network, scenario, substream_seed, config);
    sim.run_to_horizon();
    sim.drain_and_close()
}
