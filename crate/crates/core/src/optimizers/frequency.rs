//! Overclocking and underclocking decisions.
//!
//! Budgets are in boosted-core slots: one core at +1 for one interval costs
//! one slot, at +2 two slots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{FrequencyLevel, OptimizationId, ResourceClaim, ResourceKind};
use crate::arbiter::fair_share_integral;
use crate::hints::{NotificationKind, NotificationPayload, PlatformNotification, PreemptionPriority, ScalePreference};
use crate::ids::{VmId, WorkloadId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoostCandidate {
    pub vm: VmId,
    pub owner: WorkloadId,
    pub cores: u32,
    pub priority: PreemptionPriority,
    pub preference: ScalePreference,
    /// Requested step, +1 or +2.
    pub requested: FrequencyLevel,
    pub eligible: bool,
}

impl BoostCandidate {
    /// A VM asks for a boost through a high runtime priority or a grow preference.
    pub fn wants_boost(&self) -> bool {
        self.eligible
            && self.requested > FrequencyLevel::NOMINAL
            && (self.priority == PreemptionPriority::High || self.preference == ScalePreference::PreferGrow)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub claims: Vec<ResourceClaim>,
    pub notifications: Vec<PlatformNotification>,
}

/// Boost claims whose slot total fits `min(power_budget, reliability_budget)`,
/// truncated by two-level fair share when demand exceeds the budget.
pub fn overclock_decide(
    power_budget: u64,
    reliability_budget: u64,
    vms: &[BoostCandidate],
    now_ms: u64,
    first_claim_id: u64,
) -> FrequencyPlan {
    let budget = power_budget.min(reliability_budget);
    let wanting: Vec<&BoostCandidate> = vms.iter().filter(|v| v.wants_boost()).collect();
    let mut by_owner: BTreeMap<&WorkloadId, Vec<usize>> = BTreeMap::new();
    for (i, v) in wanting.iter().enumerate() {
        by_owner.entry(&v.owner).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = by_owner.into_values().collect();
    let demands: Vec<Vec<u64>> = groups
        .iter()
        .map(|g| g.iter().map(|&i| wanting[i].cores as u64 * wanting[i].requested.boost_slots()).collect())
        .collect();
    let shares = fair_share_integral(&demands, budget);
    let mut granted = vec![0u64; wanting.len()];
    for (g, s) in groups.iter().zip(shares) {
        for (&i, slots) in g.iter().zip(s) {
            granted[i] = slots;
        }
    }
    let mut plan = FrequencyPlan::default();
    for (i, v) in wanting.iter().enumerate() {
        if granted[i] == 0 {
            continue;
        }
        let claim = ResourceClaim::new(
            first_claim_id + plan.claims.len() as u64,
            OptimizationId::Overclocking,
            ResourceKind::CpuFrequency,
            granted[i],
            v.owner.clone(),
            now_ms,
        )
        .expect("granted is positive")
        .on_vm(v.vm.clone())
        .at_level(v.requested);
        plan.claims.push(claim);
        plan.notifications.push(
            PlatformNotification::new(v.vm.clone(), NotificationKind::ScaleUp, now_ms, now_ms)
                .with_payload(NotificationPayload::Frequency(v.requested)),
        );
    }
    plan
}

/// Cores one boost claim actually runs at its level.
pub fn boosted_cores(granted_slots: u64, level: FrequencyLevel) -> u64 {
    match level.boost_slots() {
        0 => 0,
        s => granted_slots / s,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnderclockCandidate {
    pub vm: VmId,
    pub owner: WorkloadId,
    pub cores: u32,
    pub util_pct: u32,
    pub current: FrequencyLevel,
    pub eligible: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnderclockSignal {
    pub idle_threshold_pct: u32,
    /// Under carbon pressure the idle threshold widens to this.
    pub carbon_threshold_pct: u32,
    pub carbon_pressure: bool,
    /// Lead between the ScaleDown notice and the change.
    pub lead_ms: u64,
}

impl Default for UnderclockSignal {
    fn default() -> Self {
        Self { idle_threshold_pct: 10, carbon_threshold_pct: 30, carbon_pressure: false, lead_ms: 1_000 }
    }
}

/// One step down for every eligible VM below the idle threshold.
pub fn underclock_decide(
    signal: &UnderclockSignal,
    vms: &[UnderclockCandidate],
    now_ms: u64,
    first_claim_id: u64,
) -> FrequencyPlan {
    let threshold = if signal.carbon_pressure { signal.carbon_threshold_pct } else { signal.idle_threshold_pct };
    let mut plan = FrequencyPlan::default();
    for v in vms.iter().filter(|v| v.eligible && v.util_pct < threshold && v.current > FrequencyLevel::MIN) {
        let level = v.current.saturating_add(-1);
        plan.notifications.push(
            PlatformNotification::new(v.vm.clone(), NotificationKind::ScaleDown, now_ms, now_ms + signal.lead_ms)
                .with_payload(NotificationPayload::Frequency(level)),
        );
        plan.claims.push(
            ResourceClaim::new(
                first_claim_id + plan.claims.len() as u64,
                OptimizationId::Underclocking,
                ResourceKind::CpuFrequency,
                v.cores.max(1) as u64,
                v.owner.clone(),
                now_ms + signal.lead_ms,
            )
            .expect("cores positive")
            .on_vm(v.vm.clone())
            .at_level(level),
        );
    }
    plan
}
