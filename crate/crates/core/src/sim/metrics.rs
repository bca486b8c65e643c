use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{RegionId, WorkloadId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BillingClass {
    Regular,
    Spot,
    Harvest,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMetrics {
    pub vm_hours: BTreeMap<BillingClass, f64>,
    pub evictions: u64,
    /// Evictions that came with the full notice.
    pub evictions_with_notice: u64,
    pub emergency_evictions: u64,
    /// Evicted VMs that were high priority at the time of the notice.
    pub high_priority_evictions: u64,
    pub throttle_seconds: f64,
    /// Core-seconds of useful work, scaled by frequency.
    pub work_completed: f64,
    /// Batch only: time the last task finished.
    pub makespan_ms: Option<u64>,
    /// Batch only: makespan over the makespan of an all-regular run.
    pub slowdown: Option<f64>,
    pub requests_generated: f64,
    pub requests_completed: f64,
    pub requests_dropped: f64,
    pub cost: f64,
    pub regular_cost: f64,
    pub peak_vms: u32,
    pub min_vms: u32,
    pub rightsize_recommendations: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub workloads: BTreeMap<WorkloadId, WorkloadMetrics>,
    pub region_core_hours: BTreeMap<RegionId, f64>,
    pub event_counts: BTreeMap<String, u64>,
    pub total_cost: f64,
    /// Same VM-hours at the regular price.
    pub regular_cost: f64,
    pub notice_violations: u64,
    pub rate_limited_hints: u64,
    pub trace_digest: u32,
}

impl MetricsReport {
    pub fn evictions(&self) -> u64 {
        self.workloads.values().map(|w| w.evictions).sum()
    }

    pub fn summary(&self) -> String {
        let saved = if self.regular_cost > 0.0 { 100.0 * (1.0 - self.total_cost / self.regular_cost) } else { 0.0 };
        format!(
            "cost {:.4} vs regular {:.4} ({saved:.2}% saved), evictions {}, notice violations {}",
            self.total_cost,
            self.regular_cost,
            self.evictions(),
            self.notice_violations
        )
    }
}
