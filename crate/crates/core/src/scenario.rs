//! Declarative domain model of a screening pipeline.
//!
//! A [`Scenario`] is the single source of truth shared by the
//! discrete-event engine and the analytic decision tree: arrivals,
//! stages, stations, routing, costs and the master RNG seed. Scenario
//! files are strict JSON — unknown keys are rejected so a typo in a
//! swept parameter cannot silently become a no-op.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Lorry construction type; decides which primary sensor applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LorryType {
    Soft,
    Hard,
}

impl LorryType {
    pub const ALL: [LorryType; 2] = [LorryType::Soft, LorryType::Hard];

    pub fn name(self) -> &'static str {
        match self {
            LorryType::Soft => "soft",
            LorryType::Hard => "hard",
        }
    }
}

impl fmt::Display for LorryType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sensor technology of a station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StationKind {
    Pmmw,
    Hb,
    Co2,
    Canine,
    Visual,
    Other,
}

/// One piecewise-constant segment of the arrival schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSegment {
    /// Hour at which this rate takes effect (first segment must start at 0).
    pub start_hour: f64,
    /// Arrival rate in lorries per hour while this segment is active.
    pub rate: f64,
}

/// Distribution of clandestines per carrier lorry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroupSize {
    /// Every carrier lorry hides exactly `value` clandestines.
    Degenerate { value: u32 },
    /// Geometric on {1, 2, ...}: P(k) = (1-p)^(k-1) p with p = `success_probability`.
    Geometric { success_probability: f64 },
    /// Finite empirical distribution over positive counts.
    Empirical { entries: Vec<GroupSizeEntry> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSizeEntry {
    pub value: u32,
    pub weight: f64,
}

impl Default for GroupSize {
    fn default() -> Self {
        GroupSize::Degenerate { value: 1 }
    }
}

impl GroupSize {
    /// Expected clandestines per carrier lorry.
    pub fn mean(&self) -> f64 {
        match self {
            GroupSize::Degenerate { value } => f64::from(*value),
            GroupSize::Geometric { success_probability } => 1.0 / success_probability,
            GroupSize::Empirical { entries } => {
                let total: f64 = entries.iter().map(|e| e.weight).sum();
                entries
                    .iter()
                    .map(|e| f64::from(e.value) * e.weight)
                    .sum::<f64>()
                    / total
            }
        }
    }

    /// Sample by inversion from a single uniform in [0, 1).
    pub fn sample(&self, u: f64) -> u32 {
        match self {
            GroupSize::Degenerate { value } => *value,
            GroupSize::Geometric { success_probability } => {
                let p = *success_probability;
                if p >= 1.0 {
                    return 1;
                }
                // Inverse CDF of the geometric on {1, 2, ...}.
                let k = ((1.0 - u).ln() / (1.0 - p).ln()).ceil();
                if k.is_finite() && k >= 1.0 {
                    k as u32
                } else {
                    1
                }
            }
            GroupSize::Empirical { entries } => {
                let total: f64 = entries.iter().map(|e| e.weight).sum();
                let mut acc = 0.0;
                for e in entries {
                    acc += e.weight / total;
                    if u < acc {
                        return e.value;
                    }
                }
                entries.last().map(|e| e.value).unwrap_or(1)
            }
        }
    }
}

/// Station service-time distribution, parameters in hours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceTime {
    Deterministic { hours: f64 },
    Exponential { mean_hours: f64 },
    /// Log-normal with `mu`/`sigma` of the underlying normal (hours).
    Lognormal { mu: f64, sigma: f64 },
}

impl ServiceTime {
    /// Sample from a single uniform in (0, 1) by inversion.
    pub fn sample(&self, u: f64) -> f64 {
        // Clamp away from 0/1 so the transforms below stay finite.
        let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        match self {
            ServiceTime::Deterministic { hours } => *hours,
            ServiceTime::Exponential { mean_hours } => -mean_hours * (1.0 - u).ln(),
            ServiceTime::Lognormal { mu, sigma } => {
                (mu + sigma * crate::stats::standard_normal_quantile(u)).exp()
            }
        }
    }
}

/// Waiting-room bound of a station queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueCapacity {
    Unbounded,
    Bounded(u32),
}

impl QueueCapacity {
    pub fn is_unbounded(self) -> bool {
        matches!(self, QueueCapacity::Unbounded)
    }
}

impl Serialize for QueueCapacity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            QueueCapacity::Unbounded => serializer.serialize_str("unbounded"),
            QueueCapacity::Bounded(n) => serializer.serialize_u32(*n),
        }
    }
}

impl<'de> Deserialize<'de> for QueueCapacity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            Count(u64),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Word(w) if w == "unbounded" => Ok(QueueCapacity::Unbounded),
            Raw::Word(w) => Err(D::Error::custom(format!(
                "queue_capacity must be \"unbounded\" or a positive integer, got \"{w}\""
            ))),
            Raw::Count(n) => {
                let n = u32::try_from(n)
                    .map_err(|_| D::Error::custom("queue_capacity too large"))?;
                Ok(QueueCapacity::Bounded(n))
            }
        }
    }
}

/// One sensor/inspection resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Station {
    pub id: String,
    pub kind: StationKind,
    pub applicable_types: Vec<LorryType>,
    /// Probability of detection given an inspected carrier lorry.
    pub tp_rate: f64,
    /// Probability of a false alarm given an inspected non-carrier lorry.
    pub fp_rate: f64,
    /// GBP per inspection performed.
    pub cost_per_inspection: f64,
    pub service_time: ServiceTime,
    pub servers: u32,
    pub queue_capacity: QueueCapacity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Station {
    pub fn applies_to(&self, lorry_type: LorryType) -> bool {
        self.applicable_types.contains(&lorry_type)
    }
}

/// A secondary inspection tool and the probability it is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecondaryLink {
    pub station: String,
    pub probability: f64,
}

/// One control stage (e.g. the French or the British side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlStage {
    pub name: String,
    /// Probability an arriving lorry is checked at this stage at all.
    pub check_probability: f64,
    /// Primary sensor per lorry type; a type without an entry goes
    /// straight to the secondary chain when checked.
    pub primary_station: BTreeMap<LorryType, String>,
    /// Ordered chain applied after the primary; each link fires
    /// independently with its own probability, and the chain stops at
    /// the first detection.
    #[serde(default)]
    pub secondary_chain: Vec<SecondaryLink>,
    pub stations: Vec<Station>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ControlStage {
    pub fn station(&self, id: &str) -> Option<&Station> {
        self.stations.iter().find(|s| s.id == id)
    }

    pub fn station_index(&self, id: &str) -> Option<usize> {
        self.stations.iter().position(|s| s.id == id)
    }
}

/// Monetary model; all amounts in GBP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    /// GBP per undetected clandestine.
    pub undetected_unit_cost: f64,
    /// GBP per detected carrier lorry (detention processing).
    pub detection_processing_cost: f64,
    /// GBP per false alarm.
    pub false_alarm_cost: f64,
    /// GBP per operated hour.
    pub fixed_cost_per_hour: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            undetected_unit_cost: 20_000.0,
            detection_processing_cost: 0.0,
            false_alarm_cost: 0.0,
            fixed_cost_per_hour: 0.0,
        }
    }
}

/// Full declarative description of a screening pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Free-form documentation; assumptions are marked here.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub arrival_schedule: Vec<ArrivalSegment>,
    pub horizon_hours: f64,
    pub carrier_probability: f64,
    #[serde(default)]
    pub group_size: GroupSize,
    pub soft_sided_probability: f64,
    pub stages: Vec<ControlStage>,
    #[serde(default)]
    pub cost_model: CostModel,
    pub master_seed: u64,
}

impl Scenario {
    /// Parse a strict JSON scenario document.
    pub fn from_json(text: &str) -> Result<Scenario, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The default Calais scenario shipped with the tool.
    pub fn calais_default() -> Scenario {
        Scenario::from_json(include_str!("../../../scenarios/calais_default.json"))
            .expect("bundled default scenario parses")
    }

    pub fn stage(&self, name: &str) -> Option<&ControlStage> {
        self.stages.iter().find(|st| st.name == name)
    }

    pub fn stage_index(&self, name: &str) -> Option<usize> {
        self.stages.iter().position(|st| st.name == name)
    }

    /// Expected number of arrivals over the horizon.
    pub fn expected_arrivals(&self) -> f64 {
        let mut total = 0.0;
        for (i, seg) in self.arrival_schedule.iter().enumerate() {
            let start = seg.start_hour.min(self.horizon_hours);
            let end = self
                .arrival_schedule
                .get(i + 1)
                .map(|next| next.start_hour)
                .unwrap_or(self.horizon_hours)
                .min(self.horizon_hours);
            if end > start {
                total += seg.rate * (end - start);
            }
        }
        total
    }

    /// Content hash of the canonical JSON form (sorted keys, normalized
    /// number formatting); stable under cosmetic file edits.
    pub fn content_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("scenario serializes");
        let canonical = canonical_json(&value);
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            use fmt::Write;
            write!(out, "{byte:02x}").unwrap();
        }
        out
    }

    /// Validate every type invariant, reporting all violations at once.
    pub fn validate(self) -> Result<ValidatedScenario, ValidationErrors> {
        let mut violations = Vec::new();
        check_probability(&mut violations, self.carrier_probability, "carrier_probability");
        check_probability(
            &mut violations,
            self.soft_sided_probability,
            "soft_sided_probability",
        );

        if !(self.horizon_hours > 0.0) || !self.horizon_hours.is_finite() {
            violations.push(Violation {
                code: ViolationCode::NonpositiveHorizon,
                path: "horizon_hours".to_string(),
                detail: format!("horizon_hours must be > 0, got {}", self.horizon_hours),
            });
        }

        if self.arrival_schedule.is_empty() {
            violations.push(Violation {
                code: ViolationCode::BadSchedule,
                path: "arrival_schedule".to_string(),
                detail: "arrival schedule must have at least one segment".to_string(),
            });
        }
        let mut prev_start: Option<f64> = None;
        for (i, seg) in self.arrival_schedule.iter().enumerate() {
            let path = format!("arrival_schedule[{i}]");
            if i == 0 && seg.start_hour != 0.0 {
                violations.push(Violation {
                    code: ViolationCode::BadSchedule,
                    path: format!("{path}.start_hour"),
                    detail: format!("first segment must start at 0, got {}", seg.start_hour),
                });
            }
            if let Some(prev) = prev_start {
                if !(seg.start_hour > prev) {
                    violations.push(Violation {
                        code: ViolationCode::BadSchedule,
                        path: format!("{path}.start_hour"),
                        detail: format!(
                            "segment starts must be strictly increasing ({} after {prev})",
                            seg.start_hour
                        ),
                    });
                }
            }
            if !(seg.rate >= 0.0) || !seg.rate.is_finite() {
                violations.push(Violation {
                    code: ViolationCode::BadSchedule,
                    path: format!("{path}.rate"),
                    detail: format!("rate must be >= 0 and finite, got {}", seg.rate),
                });
            }
            prev_start = Some(seg.start_hour);
        }

        match &self.group_size {
            GroupSize::Degenerate { value } => {
                if *value == 0 {
                    violations.push(Violation {
                        code: ViolationCode::BadStation,
                        path: "group_size.value".to_string(),
                        detail: "degenerate group size must be >= 1".to_string(),
                    });
                }
            }
            GroupSize::Geometric { success_probability } => {
                if !(*success_probability > 0.0 && *success_probability <= 1.0) {
                    violations.push(Violation {
                        code: ViolationCode::ProbabilityOutOfRange,
                        path: "group_size.success_probability".to_string(),
                        detail: format!(
                            "geometric success probability must be in (0,1], got {success_probability}"
                        ),
                    });
                }
            }
            GroupSize::Empirical { entries } => {
                if entries.is_empty() {
                    violations.push(Violation {
                        code: ViolationCode::BadStation,
                        path: "group_size.entries".to_string(),
                        detail: "empirical group size needs at least one entry".to_string(),
                    });
                }
                for (i, e) in entries.iter().enumerate() {
                    if !(e.weight >= 0.0) || !e.weight.is_finite() {
                        violations.push(Violation {
                            code: ViolationCode::BadStation,
                            path: format!("group_size.entries[{i}].weight"),
                            detail: format!("weight must be >= 0, got {}", e.weight),
                        });
                    }
                    if e.value == 0 {
                        violations.push(Violation {
                            code: ViolationCode::BadStation,
                            path: format!("group_size.entries[{i}].value"),
                            detail: "group size values must be >= 1".to_string(),
                        });
                    }
                }
                if entries.iter().all(|e| e.weight <= 0.0) && !entries.is_empty() {
                    violations.push(Violation {
                        code: ViolationCode::BadStation,
                        path: "group_size.entries".to_string(),
                        detail: "empirical weights must not all be zero".to_string(),
                    });
                }
            }
        }

        if self.stages.is_empty() {
            violations.push(Violation {
                code: ViolationCode::EmptyStages,
                path: "stages".to_string(),
                detail: "at least one control stage is required".to_string(),
            });
        }
        let mut seen_stage_names = std::collections::BTreeSet::new();
        for stage in &self.stages {
            let sp = format!("stages.{}", stage.name);
            if !seen_stage_names.insert(stage.name.clone()) {
                violations.push(Violation {
                    code: ViolationCode::BadStation,
                    path: sp.clone(),
                    detail: format!("duplicate stage name \"{}\"", stage.name),
                });
            }
            check_probability(
                &mut violations,
                stage.check_probability,
                &format!("{sp}.check_probability"),
            );
            let mut seen_ids = std::collections::BTreeSet::new();
            for station in &stage.stations {
                let stp = format!("{sp}.stations.{}", station.id);
                if !seen_ids.insert(station.id.clone()) {
                    violations.push(Violation {
                        code: ViolationCode::BadStation,
                        path: stp.clone(),
                        detail: format!("duplicate station id \"{}\"", station.id),
                    });
                }
                check_probability(&mut violations, station.tp_rate, &format!("{stp}.tp_rate"));
                check_probability(&mut violations, station.fp_rate, &format!("{stp}.fp_rate"));
                if !(station.cost_per_inspection >= 0.0)
                    || !station.cost_per_inspection.is_finite()
                {
                    violations.push(Violation {
                        code: ViolationCode::NegativeCost,
                        path: format!("{stp}.cost_per_inspection"),
                        detail: format!(
                            "cost must be >= 0, got {}",
                            station.cost_per_inspection
                        ),
                    });
                }
                if station.servers < 1 {
                    violations.push(Violation {
                        code: ViolationCode::BadStation,
                        path: format!("{stp}.servers"),
                        detail: "servers must be >= 1".to_string(),
                    });
                }
                if let QueueCapacity::Bounded(0) = station.queue_capacity {
                    violations.push(Violation {
                        code: ViolationCode::BadStation,
                        path: format!("{stp}.queue_capacity"),
                        detail: "bounded queue capacity must be >= 1".to_string(),
                    });
                }
                let service_ok = match station.service_time {
                    ServiceTime::Deterministic { hours } => hours >= 0.0 && hours.is_finite(),
                    ServiceTime::Exponential { mean_hours } => {
                        mean_hours >= 0.0 && mean_hours.is_finite()
                    }
                    ServiceTime::Lognormal { mu, sigma } => {
                        mu.is_finite() && sigma.is_finite() && sigma >= 0.0
                    }
                };
                if !service_ok {
                    violations.push(Violation {
                        code: ViolationCode::BadStation,
                        path: format!("{stp}.service_time"),
                        detail: "service-time parameters must be finite and nonnegative"
                            .to_string(),
                    });
                }
            }
            for (lorry_type, id) in &stage.primary_station {
                let path = format!("{sp}.primary_station.{lorry_type}");
                match stage.station(id) {
                    None => violations.push(Violation {
                        code: ViolationCode::UnknownStationRef,
                        path,
                        detail: format!("station \"{id}\" not defined in stage \"{}\"", stage.name),
                    }),
                    Some(st) if !st.applies_to(*lorry_type) => violations.push(Violation {
                        code: ViolationCode::InapplicableStation,
                        path,
                        detail: format!(
                            "station \"{id}\" is not applicable to {lorry_type}-sided lorries"
                        ),
                    }),
                    Some(_) => {}
                }
            }
            for (i, link) in stage.secondary_chain.iter().enumerate() {
                let path = format!("{sp}.secondary_chain[{i}]");
                if stage.station(&link.station).is_none() {
                    violations.push(Violation {
                        code: ViolationCode::UnknownStationRef,
                        path: format!("{path}.station"),
                        detail: format!(
                            "station \"{}\" not defined in stage \"{}\"",
                            link.station, stage.name
                        ),
                    });
                }
                check_probability(
                    &mut violations,
                    link.probability,
                    &format!("{path}.probability"),
                );
            }
        }

        for (field, value) in [
            ("undetected_unit_cost", self.cost_model.undetected_unit_cost),
            (
                "detection_processing_cost",
                self.cost_model.detection_processing_cost,
            ),
            ("false_alarm_cost", self.cost_model.false_alarm_cost),
            ("fixed_cost_per_hour", self.cost_model.fixed_cost_per_hour),
        ] {
            if !(value >= 0.0) || !value.is_finite() {
                violations.push(Violation {
                    code: ViolationCode::NegativeCost,
                    path: format!("cost_model.{field}"),
                    detail: format!("cost must be >= 0 and finite, got {value}"),
                });
            }
        }

        if violations.is_empty() {
            Ok(ValidatedScenario(self))
        } else {
            Err(ValidationErrors { violations })
        }
    }
}

fn check_probability(violations: &mut Vec<Violation>, value: f64, path: &str) {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        violations.push(Violation {
            code: ViolationCode::ProbabilityOutOfRange,
            path: path.to_string(),
            detail: format!("probability must be in [0,1], got {value}"),
        });
    }
}

/// A scenario that passed [`Scenario::validate`]; the engine and the
/// tree compiler only accept this form. Immutable thereafter and safe
/// to share read-only across replication workers.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ValidatedScenario(Scenario);

impl ValidatedScenario {
    pub fn as_scenario(&self) -> &Scenario {
        &self.0
    }

    pub fn into_scenario(self) -> Scenario {
        self.0
    }
}

impl std::ops::Deref for ValidatedScenario {
    type Target = Scenario;

    fn deref(&self) -> &Scenario {
        &self.0
    }
}

/// Machine-readable class of a validation failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    ProbabilityOutOfRange,
    UnknownStationRef,
    NonpositiveHorizon,
    EmptyStages,
    BadSchedule,
    NegativeCost,
    BadStation,
    InapplicableStation,
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationCode::ProbabilityOutOfRange => "PROBABILITY_OUT_OF_RANGE",
            ViolationCode::UnknownStationRef => "UNKNOWN_STATION_REF",
            ViolationCode::NonpositiveHorizon => "NONPOSITIVE_HORIZON",
            ViolationCode::EmptyStages => "EMPTY_STAGES",
            ViolationCode::BadSchedule => "BAD_SCHEDULE",
            ViolationCode::NegativeCost => "NEGATIVE_COST",
            ViolationCode::BadStation => "BAD_STATION",
            ViolationCode::InapplicableStation => "INAPPLICABLE_STATION",
        };
        f.write_str(s)
    }
}

/// One invariant violation with the path of the offending field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub path: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.path, self.detail)
    }
}

/// Every violation found in one validation pass, not just the first.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ValidationErrors {
    pub violations: Vec<Violation>,
}

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario failed validation ({} problems):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

/// Render a JSON value with sorted object keys and Rust's shortest
/// round-trip float formatting; whitespace-free.
fn canonical_json(value: &serde_json::Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &serde_json::Value, out: &mut String) {
    use serde_json::Value;
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            // Normalize every number through f64 so 1 and 1.0 hash alike.
            if let Some(f) = n.as_f64() {
                use fmt::Write;
                write!(out, "{f}").unwrap();
            } else {
                use fmt::Write;
                write!(out, "{n}").unwrap();
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).unwrap());
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's default map is a BTreeMap, so iteration is
            // already key-sorted; sort again to be explicit.
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).unwrap());
                out.push(':');
                write_canonical(&map[*key], out);
            }
            out.push('}');
        }
    }
}
