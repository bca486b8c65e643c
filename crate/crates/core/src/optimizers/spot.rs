//! Reclaiming cores from evictable VMs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::hints::{NotificationKind, PlatformNotification, PreemptionPriority};
use crate::ids::{VmId, WorkloadId};

/// Default eviction notice.
pub const DEFAULT_NOTICE_MS: u64 = 30_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpotCandidate {
    pub vm: VmId,
    pub workload: WorkloadId,
    pub cores: u32,
    pub priority: PreemptionPriority,
    pub created_at_ms: u64,
    /// Spot eligibility of the VM's current hints.
    pub eligible: bool,
}

/// How many of a workload's VMs may be preempted at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreemptionBudget {
    pub vm_count: u32,
    pub preemptibility_pct: u8,
    /// Preemptions already in flight.
    pub in_flight: u32,
}

impl PreemptionBudget {
    pub fn limit(&self) -> u32 {
        self.vm_count * self.preemptibility_pct as u32 / 100
    }

    pub fn available(&self) -> u32 {
        self.limit().saturating_sub(self.in_flight)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvictionPlan {
    pub evictions: Vec<VmId>,
    pub notifications: Vec<PlatformNotification>,
    pub freed_cores: u64,
    /// Cores still missing when all permitted candidates are not enough.
    pub shortfall: Option<u64>,
}

impl EvictionPlan {
    pub fn insufficient_capacity(&self) -> bool {
        self.shortfall.is_some()
    }
}

/// Eviction preference: Low before Normal before High, youngest first, then id.
pub fn eviction_order(candidates: &[SpotCandidate]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..candidates.len()).filter(|&i| candidates[i].eligible).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&candidates[a], &candidates[b]);
        x.priority.cmp(&y.priority).then(y.created_at_ms.cmp(&x.created_at_ms)).then(x.vm.cmp(&y.vm))
    });
    idx
}

/// Tracks remaining per-workload preemption allowance. Workloads without an
/// entry are unconstrained.
#[derive(Debug, Clone, Default)]
pub struct BudgetTracker {
    left: BTreeMap<WorkloadId, u32>,
}

impl BudgetTracker {
    pub fn new(budgets: &BTreeMap<WorkloadId, PreemptionBudget>) -> Self {
        Self { left: budgets.iter().map(|(w, b)| (w.clone(), b.available())).collect() }
    }

    pub fn try_take(&mut self, workload: &WorkloadId) -> bool {
        match self.left.get_mut(workload) {
            None => true,
            Some(0) => false,
            Some(n) => {
                *n -= 1;
                true
            }
        }
    }
}

/// Pick the fewest, least valuable VMs whose eviction frees `demanded` cores.
pub fn reclaim(
    demanded: u64,
    candidates: &[SpotCandidate],
    budgets: &BTreeMap<WorkloadId, PreemptionBudget>,
    now_ms: u64,
    notice_ms: u64,
) -> EvictionPlan {
    if demanded == 0 {
        return EvictionPlan::default();
    }
    let mut tracker = BudgetTracker::new(budgets);
    let mut chosen = Vec::new();
    let mut freed = 0u64;
    for i in eviction_order(candidates) {
        if freed >= demanded {
            break;
        }
        if tracker.try_take(&candidates[i].workload) {
            freed += candidates[i].cores as u64;
            chosen.push(i);
        }
    }
    if freed >= demanded {
        // Greedy can overshoot; drop VMs that turned out unnecessary, most
        // valuable first.
        let mut k = chosen.len();
        while k > 0 {
            k -= 1;
            let c = candidates[chosen[k]].cores as u64;
            if freed - c >= demanded {
                freed -= c;
                chosen.remove(k);
            }
        }
    }
    let shortfall = (freed < demanded).then(|| demanded - freed);
    let evictions: Vec<VmId> = chosen.iter().map(|&i| candidates[i].vm.clone()).collect();
    let notifications = evictions
        .iter()
        .map(|vm| PlatformNotification::new(vm.clone(), NotificationKind::Preemption, now_ms, now_ms + notice_ms))
        .collect();
    EvictionPlan { evictions, notifications, freed_cores: freed, shortfall }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PreemptionPriority::*;

    fn cand(vm: &str, wl: &str, cores: u32, p: PreemptionPriority, created: u64) -> SpotCandidate {
        SpotCandidate { vm: vm.into(), workload: wl.into(), cores, priority: p, created_at_ms: created, eligible: true }
    }

    #[test]
    fn low_priority_evicted_first() {
        let c = vec![cand("hi", "w", 8, High, 0), cand("lo", "w", 8, Low, 0)];
        let plan = reclaim(8, &c, &BTreeMap::new(), 0, DEFAULT_NOTICE_MS);
        assert_eq!(plan.evictions, vec![VmId::from("lo")]);
        assert_eq!(plan.notifications[0].notice_ms(), DEFAULT_NOTICE_MS);
    }

    #[test]
    fn zero_demand_is_empty() {
        let c = vec![cand("a", "w", 8, Low, 0)];
        assert_eq!(reclaim(0, &c, &BTreeMap::new(), 0, 1), EvictionPlan::default());
    }

    #[test]
    fn budget_caps_evictions() {
        let c: Vec<_> = (0..10).map(|i| cand(&format!("v{i}"), "w", 4, Low, i)).collect();
        let budgets = BTreeMap::from([(
            WorkloadId::from("w"),
            PreemptionBudget { vm_count: 10, preemptibility_pct: 20, in_flight: 0 },
        )]);
        let plan = reclaim(12, &c, &budgets, 0, 1);
        // floor(10 * 20%) = 2 VMs of 4 cores
        assert_eq!(plan.evictions.len(), 2);
        assert_eq!(plan.shortfall, Some(4));
    }

    #[test]
    fn youngest_first_within_class() {
        let c = vec![cand("old", "w", 2, Low, 10), cand("young", "w", 2, Low, 50)];
        assert_eq!(reclaim(2, &c, &BTreeMap::new(), 0, 1).evictions, vec![VmId::from("young")]);
    }

    #[test]
    fn overshoot_is_pruned() {
        let c = vec![cand("small", "w", 2, Low, 9), cand("big", "w", 8, Low, 1)];
        let plan = reclaim(8, &c, &BTreeMap::new(), 0, 1);
        assert_eq!(plan.evictions, vec![VmId::from("big")]);
    }

    #[test]
    fn ineligible_never_touched() {
        let mut c = vec![cand("a", "w", 8, Low, 0)];
        c[0].eligible = false;
        let plan = reclaim(4, &c, &BTreeMap::new(), 0, 1);
        assert!(plan.evictions.is_empty());
        assert_eq!(plan.shortfall, Some(4));
    }
}
