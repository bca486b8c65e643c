//! CPU and memory oversubscription.

use serde::{Deserialize, Serialize};

use crate::hints::PreemptionPriority;
use crate::ids::VmId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OversubPolicy {
    pub max_cpu_ratio: f64,
    pub max_memory_ratio: f64,
}

impl Default for OversubPolicy {
    fn default() -> Self {
        Self { max_cpu_ratio: 1.5, max_memory_ratio: 1.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub cpu: f64,
    pub memory: f64,
}

impl Ratios {
    pub const NONE: Ratios = Ratios { cpu: 1.0, memory: 1.0 };
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OversubVm {
    pub vm: VmId,
    pub eligible: bool,
    pub priority: PreemptionPriority,
    /// Cores the VM currently wants.
    pub demand_cores: u32,
}

/// Ratios a server may be packed to: the policy maximum only when every VM is eligible.
pub fn admit(vms: &[OversubVm], policy: &OversubPolicy) -> Ratios {
    if vms.iter().all(|v| v.eligible) {
        Ratios { cpu: policy.max_cpu_ratio.max(1.0), memory: policy.max_memory_ratio.max(1.0) }
    } else {
        Ratios::NONE
    }
}

/// Cores to take from each VM when demand exceeds `physical_cores`. Lowest
/// priority goes first; within a class, the biggest consumer first.
pub fn throttle(physical_cores: u32, vms: &[OversubVm]) -> Vec<(VmId, u32)> {
    let demand: u64 = vms.iter().map(|v| v.demand_cores as u64).sum();
    let mut excess = demand.saturating_sub(physical_cores as u64);
    let mut order: Vec<&OversubVm> = vms.iter().collect();
    order.sort_by(|a, b| a.priority.cmp(&b.priority).then(b.demand_cores.cmp(&a.demand_cores)).then(a.vm.cmp(&b.vm)));
    let mut out = Vec::new();
    for v in order {
        if excess == 0 {
            break;
        }
        let take = (v.demand_cores as u64).min(excess);
        if take > 0 {
            out.push((v.vm.clone(), take as u32));
            excess -= take;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vm(id: &str, eligible: bool, p: PreemptionPriority, d: u32) -> OversubVm {
        OversubVm { vm: id.into(), eligible, priority: p, demand_cores: d }
    }

    #[test]
    fn ratios_gate_on_every_vm() {
        let p = OversubPolicy::default();
        let all = [vm("a", true, PreemptionPriority::Normal, 2), vm("b", true, PreemptionPriority::Normal, 2)];
        assert_eq!(admit(&all, &p), Ratios { cpu: 1.5, memory: 1.2 });
        let one_bad = [vm("a", true, PreemptionPriority::Normal, 2), vm("b", false, PreemptionPriority::Normal, 2)];
        assert_eq!(admit(&one_bad, &p), Ratios::NONE);
    }

    #[test]
    fn least_critical_throttled_first() {
        let v = [vm("hi", true, PreemptionPriority::High, 6), vm("lo", true, PreemptionPriority::Low, 6)];
        assert_eq!(throttle(8, &v), vec![(VmId::from("lo"), 4)]);
        assert!(throttle(12, &v).is_empty());
    }
}
