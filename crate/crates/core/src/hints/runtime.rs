//! Runtime hints flowing after deployment, in both directions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FieldError, HintField, HintSet, ValidationError, MAX_AVAILABILITY_NINES, MAX_PREEMPTIBILITY_PCT};
use crate::ids::VmId;
use crate::optimizers::FrequencyLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum PreemptionPriority {
    Low,
    #[default]
    Normal,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum ScalePreference {
    PreferGrow,
    #[default]
    Neutral,
    PreferShrink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HintSource {
    InVm,
    WorkloadController,
}

/// A new value for one of the seven characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HintUpdate {
    ScaleUpDown(bool),
    ScaleOutIn(bool),
    DeployTimeMs(u64),
    AvailabilityNines(u8),
    PreemptibilityPct(u8),
    DelayToleranceMs(u64),
    RegionIndependent(bool),
}

impl HintUpdate {
    pub fn field(&self) -> HintField {
        match self {
            HintUpdate::ScaleUpDown(_) => HintField::ScaleUpDown,
            HintUpdate::ScaleOutIn(_) => HintField::ScaleOutIn,
            HintUpdate::DeployTimeMs(_) => HintField::DeployTimeMs,
            HintUpdate::AvailabilityNines(_) => HintField::AvailabilityNines,
            HintUpdate::PreemptibilityPct(_) => HintField::PreemptibilityPct,
            HintUpdate::DelayToleranceMs(_) => HintField::DelayToleranceMs,
            HintUpdate::RegionIndependent(_) => HintField::RegionIndependent,
        }
    }

    fn apply_to(&self, h: &mut HintSet) {
        match *self {
            HintUpdate::ScaleUpDown(v) => h.scale_up_down = v,
            HintUpdate::ScaleOutIn(v) => h.scale_out_in = v,
            HintUpdate::DeployTimeMs(v) => h.deploy_time_ms = v,
            HintUpdate::AvailabilityNines(v) => h.availability_nines = v,
            HintUpdate::PreemptibilityPct(v) => h.preemptibility_pct = v,
            HintUpdate::DelayToleranceMs(v) => h.delay_tolerance_ms = v,
            HintUpdate::RegionIndependent(v) => h.region_independent = v,
        }
    }
}

/// Payload of a runtime hint. Priority overrides are kinds of their own rather
/// than extra characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuntimeUpdate {
    Characteristic(HintUpdate),
    PreemptionPriority(PreemptionPriority),
    ScalePreference(ScalePreference),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum HintKind {
    Characteristic(HintField),
    PreemptionPriority,
    ScalePreference,
}

impl RuntimeUpdate {
    pub fn kind(&self) -> HintKind {
        match self {
            RuntimeUpdate::Characteristic(u) => HintKind::Characteristic(u.field()),
            RuntimeUpdate::PreemptionPriority(_) => HintKind::PreemptionPriority,
            RuntimeUpdate::ScalePreference(_) => HintKind::ScalePreference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeHint {
    pub vm_id: VmId,
    pub update: RuntimeUpdate,
    pub timestamp_ms: u64,
    pub source: HintSource,
}

impl RuntimeHint {
    pub fn new(vm_id: impl Into<VmId>, update: RuntimeUpdate, timestamp_ms: u64, source: HintSource) -> Self {
        Self { vm_id: vm_id.into(), update, timestamp_ms, source }
    }

    pub fn kind(&self) -> HintKind {
        self.update.kind()
    }

    pub fn check(&self) -> Result<(), ValidationError> {
        let err = |field: HintField, v: u8| ValidationError {
            errors: vec![FieldError { field: field.name().into(), reason: format!("{v} out of range") }],
        };
        match self.update {
            RuntimeUpdate::Characteristic(HintUpdate::AvailabilityNines(v)) if v > MAX_AVAILABILITY_NINES => {
                Err(err(HintField::AvailabilityNines, v))
            }
            RuntimeUpdate::Characteristic(HintUpdate::PreemptibilityPct(v)) if v > MAX_PREEMPTIBILITY_PCT => {
                Err(err(HintField::PreemptibilityPct, v))
            }
            _ => Ok(()),
        }
    }
}

/// Deployment hints with the latest accepted runtime overrides layered on top.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EffectiveHints {
    pub base: HintSet,
    pub overrides: BTreeMap<HintField, HintUpdate>,
    pub preemption_priority: PreemptionPriority,
    pub scale_preference: ScalePreference,
}

impl EffectiveHints {
    pub fn from_base(base: HintSet) -> Self {
        Self { base, ..Default::default() }
    }

    pub fn apply(&mut self, hint: &RuntimeHint) {
        match hint.update {
            RuntimeUpdate::Characteristic(u) => {
                self.overrides.insert(u.field(), u);
            }
            RuntimeUpdate::PreemptionPriority(p) => self.preemption_priority = p,
            RuntimeUpdate::ScalePreference(p) => self.scale_preference = p,
        }
    }

    /// The characteristic values currently in force.
    pub fn resolved(&self) -> HintSet {
        let mut h = self.base;
        for u in self.overrides.values() {
            u.apply_to(&mut h);
        }
        h
    }

    /// Replace the base, keeping runtime overrides.
    pub fn rebase(&mut self, base: HintSet) {
        self.base = base;
    }
}

/// Fold runtime hints (sorted by timestamp) over a base; last writer wins per kind.
pub fn merge(base: HintSet, runtime: &[RuntimeHint]) -> EffectiveHints {
    let mut eff = EffectiveHints::from_base(base);
    for h in runtime {
        eff.apply(h);
    }
    eff
}

/// Flap detection: at most `max_flips` value changes per (vm, kind) in any `window_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlapPolicy {
    pub max_flips: usize,
    pub window_ms: u64,
}

impl Default for FlapPolicy {
    fn default() -> Self {
        Self { max_flips: 4, window_ms: 60_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consistency {
    Accept,
    Ignore { reason: String },
}

/// Decide whether `candidate` is consistent with the accepted `history`.
///
/// The candidate is ignored when it would be the `max_flips + 1`-th change of
/// value for its (vm, kind) inside the trailing window. Hints that do not
/// change the value are never flips.
pub fn consistency_check(history: &[RuntimeHint], candidate: &RuntimeHint, policy: &FlapPolicy) -> Consistency {
    let kind = candidate.kind();
    let relevant: Vec<&RuntimeHint> =
        history.iter().filter(|h| h.vm_id == candidate.vm_id && h.kind() == kind).collect();
    let Some(last) = relevant.last() else {
        return Consistency::Accept;
    };
    if last.update == candidate.update {
        return Consistency::Accept;
    }
    let in_window = |t: u64| t + policy.window_ms > candidate.timestamp_ms;
    let flips = relevant
        .windows(2)
        .filter(|pair| pair[0].update != pair[1].update && in_window(pair[1].timestamp_ms))
        .count();
    if flips >= policy.max_flips {
        Consistency::Ignore {
            reason: format!("{} value changes within {} ms; hint ignored", flips + 1, policy.window_ms),
        }
    } else {
        Consistency::Accept
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NotificationKind {
    Eviction,
    Preemption,
    ScaleUp,
    ScaleDown,
    FrequencyChange,
    Maintenance,
    /// The platform is ignoring a runtime hint it found inconsistent.
    HintIgnored,
}

impl NotificationKind {
    /// Kinds that remove a VM and therefore carry the eviction-notice guarantee.
    pub fn is_removal(self) -> bool {
        matches!(self, NotificationKind::Eviction | NotificationKind::Preemption)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NotificationPayload {
    None,
    Cores(u32),
    Frequency(FrequencyLevel),
    Reason(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlatformNotification {
    pub vm_id: VmId,
    pub kind: NotificationKind,
    pub issued_at_ms: u64,
    pub effective_at_ms: u64,
    pub payload: NotificationPayload,
    /// Set on removals that could not honor the notice period (power emergencies).
    #[serde(default)]
    pub emergency: bool,
}

impl PlatformNotification {
    pub fn new(vm_id: impl Into<VmId>, kind: NotificationKind, issued_at_ms: u64, effective_at_ms: u64) -> Self {
        Self {
            vm_id: vm_id.into(),
            kind,
            issued_at_ms,
            effective_at_ms: effective_at_ms.max(issued_at_ms),
            payload: NotificationPayload::None,
            emergency: false,
        }
    }

    pub fn with_payload(mut self, payload: NotificationPayload) -> Self {
        self.payload = payload;
        self
    }

    pub fn notice_ms(&self) -> u64 {
        self.effective_at_ms - self.issued_at_ms
    }
}
