//! Sizing the pool of pre-provisioned VMs.

use serde::{Deserialize, Serialize};

use super::{OptimizationId, ResourceClaim, ResourceKind};
use crate::hints::EligibilityThresholds;
use crate::ids::WorkloadId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolDemand {
    pub workload: WorkloadId,
    pub deploy_time_ms: u64,
    /// Forecast scale-out, in VMs.
    pub forecast_vms: u32,
    pub cores_per_vm: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PoolPlan {
    pub pool_vms: u32,
    pub pool_cores: u64,
    pub claim: Option<ResourceClaim>,
}

/// Only workloads with strict deployment time keep warm VMs around.
pub fn policy(demands: &[PoolDemand], t: &EligibilityThresholds, now_ms: u64, claim_id: u64) -> PoolPlan {
    let strict: Vec<&PoolDemand> = demands.iter().filter(|d| d.deploy_time_ms < t.non_strict_deploy_ms).collect();
    let pool_vms = strict.iter().map(|d| d.forecast_vms).sum();
    let pool_cores: u64 = strict.iter().map(|d| d.forecast_vms as u64 * d.cores_per_vm as u64).sum();
    let claim = (pool_cores > 0).then(|| {
        ResourceClaim::new(claim_id, OptimizationId::NonPreProvision, ResourceKind::Capacity, pool_cores, "platform", now_ms)
            .expect("positive")
    });
    PoolPlan { pool_vms, pool_cores, claim }
}
