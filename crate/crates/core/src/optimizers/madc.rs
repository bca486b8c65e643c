//! Shedding power in a datacenter with reduced power availability.
//!
//! Power model: a VM draws `cores * multiplier(level)` units, a server the sum
//! over its VMs. Throttling to a lower level sheds the multiplier difference,
//! an eviction sheds everything the VM still draws.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::spot::{eviction_order, BudgetTracker, PreemptionBudget, SpotCandidate};
use super::{FrequencyLevel, OptimizationId, ResourceClaim, ResourceKind};
use crate::hints::{NotificationKind, NotificationPayload, PlatformNotification, PreemptionPriority};
use crate::ids::{VmId, WorkloadId};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MadcVm {
    pub vm: VmId,
    pub workload: WorkloadId,
    pub cores: u32,
    pub level: FrequencyLevel,
    pub priority: PreemptionPriority,
    pub created_at_ms: u64,
    /// Relaxed availability: may be throttled.
    pub madc_eligible: bool,
    /// Spot eligible: may be evicted.
    pub preemptible: bool,
}

impl MadcVm {
    pub fn power(&self) -> f64 {
        self.cores as f64 * self.level.multiplier()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MadcPlan {
    pub throttles: Vec<(VmId, FrequencyLevel)>,
    pub claims: Vec<ResourceClaim>,
    pub evictions: Vec<VmId>,
    pub notifications: Vec<PlatformNotification>,
    pub target_power: f64,
    pub shed_power: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("power plan is {remaining:.3} units short")]
pub struct Shortfall {
    pub remaining: f64,
    pub plan: MadcPlan,
}

pub struct PowerEvent<'a> {
    /// Fraction of current power to shed.
    pub severity: f64,
    pub vms: &'a [MadcVm],
    pub budgets: &'a BTreeMap<WorkloadId, PreemptionBudget>,
    pub now_ms: u64,
    /// When the reduced power takes effect.
    pub effective_at_ms: u64,
    pub notice_ms: u64,
    pub first_claim_id: u64,
}

pub fn power_event(ev: &PowerEvent<'_>) -> Result<MadcPlan, Shortfall> {
    let severity = ev.severity.clamp(0.0, 1.0);
    let total: f64 = ev.vms.iter().map(MadcVm::power).sum();
    let mut plan = MadcPlan { target_power: severity * total, ..Default::default() };
    if severity <= 0.0 {
        return Ok(plan);
    }
    let done = |p: &MadcPlan| p.shed_power + EPS >= p.target_power;

    let mut levels: Vec<FrequencyLevel> = ev.vms.iter().map(|v| v.level).collect();
    let mut order: Vec<usize> = (0..ev.vms.len()).filter(|&i| ev.vms[i].madc_eligible).collect();
    order.sort_by(|&a, &b| ev.vms[a].priority.cmp(&ev.vms[b].priority).then(ev.vms[a].vm.cmp(&ev.vms[b].vm)));
    'throttle: for step in [-1i8, -2] {
        let to = FrequencyLevel::new(step).expect("valid step");
        for &i in &order {
            if done(&plan) {
                break 'throttle;
            }
            if levels[i] > to {
                plan.shed_power += ev.vms[i].cores as f64 * (levels[i].multiplier() - to.multiplier());
                levels[i] = to;
            }
        }
    }
    for (i, v) in ev.vms.iter().enumerate() {
        if levels[i] != v.level {
            plan.throttles.push((v.vm.clone(), levels[i]));
            plan.notifications.push(
                PlatformNotification::new(v.vm.clone(), NotificationKind::ScaleDown, ev.now_ms, ev.effective_at_ms)
                    .with_payload(NotificationPayload::Frequency(levels[i])),
            );
            plan.claims.push(
                ResourceClaim::new(
                    ev.first_claim_id + plan.claims.len() as u64,
                    OptimizationId::Madc,
                    ResourceKind::CpuFrequency,
                    v.cores.max(1) as u64,
                    v.workload.clone(),
                    ev.now_ms,
                )
                .expect("positive")
                .on_vm(v.vm.clone())
                .at_level(levels[i]),
            );
        }
    }

    if !done(&plan) {
        let candidates: Vec<SpotCandidate> = ev
            .vms
            .iter()
            .map(|v| SpotCandidate {
                vm: v.vm.clone(),
                workload: v.workload.clone(),
                cores: v.cores,
                priority: v.priority,
                created_at_ms: v.created_at_ms,
                eligible: v.preemptible,
            })
            .collect();
        let mut tracker = BudgetTracker::new(ev.budgets);
        let lead = ev.effective_at_ms.saturating_sub(ev.now_ms);
        let emergency = lead < ev.notice_ms;
        for i in eviction_order(&candidates) {
            if done(&plan) {
                break;
            }
            if !tracker.try_take(&candidates[i].workload) {
                continue;
            }
            let v = &ev.vms[i];
            plan.shed_power += v.cores as f64 * levels[i].multiplier();
            plan.evictions.push(v.vm.clone());
            let mut n =
                PlatformNotification::new(v.vm.clone(), NotificationKind::Preemption, ev.now_ms, ev.effective_at_ms);
            n.emergency = emergency;
            plan.notifications.push(n);
        }
    }

    if done(&plan) {
        Ok(plan)
    } else {
        Err(Shortfall { remaining: plan.target_power - plan.shed_power, plan })
    }
}
