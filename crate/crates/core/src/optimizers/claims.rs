use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::OptimizationId;
use crate::ids::{RegionId, ServerId, VmId, WorkloadId};

/// What an optimization competes for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    /// Unallocated cores on a server.
    SpareCompute,
    /// Boosted-core slots under a server's power/reliability budget.
    CpuFrequency,
    /// Cores held for a pool (pre-provisioned VMs, scale-outs).
    Capacity,
    /// Placement in a region.
    RegionSlot,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 4] =
        [ResourceKind::SpareCompute, ResourceKind::CpuFrequency, ResourceKind::Capacity, ResourceKind::RegionSlot];

    /// Only frequency can be partially granted and continuously shared.
    pub fn compressible(self) -> bool {
        matches!(self, ResourceKind::CpuFrequency)
    }

    pub fn name(self) -> &'static str {
        match self {
            ResourceKind::SpareCompute => "spare_compute",
            ResourceKind::CpuFrequency => "cpu_frequency",
            ResourceKind::Capacity => "capacity",
            ResourceKind::RegionSlot => "region_slot",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClaimId(pub u64);

impl fmt::Display for ClaimId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Where a claim applies.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClaimScope {
    pub server: Option<ServerId>,
    pub vms: Vec<VmId>,
    pub region: Option<RegionId>,
}

impl fmt::Display for ClaimScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(s) = &self.server {
            parts.push(s.to_string());
        }
        if let Some(r) = &self.region {
            parts.push(r.to_string());
        }
        parts.extend(self.vms.iter().map(ToString::to_string));
        f.write_str(&parts.join("|"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClaimError {
    #[error("claim amount must be positive")]
    ZeroAmount,
}

/// One optimization's demand on a resource pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceClaim {
    pub id: ClaimId,
    pub optimization: OptimizationId,
    /// Lower number wins; defaults to the optimization's built-in priority.
    pub priority: u32,
    pub resource: ResourceKind,
    pub amount: u64,
    /// Workload owner, used for the owner level of fair sharing.
    pub owner: WorkloadId,
    pub scope: ClaimScope,
    pub timestamp_ms: u64,
    /// Requested frequency step, for frequency claims.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_level: Option<FrequencyLevel>,
}

impl ResourceClaim {
    pub fn new(
        id: u64,
        optimization: OptimizationId,
        resource: ResourceKind,
        amount: u64,
        owner: impl Into<WorkloadId>,
        timestamp_ms: u64,
    ) -> Result<Self, ClaimError> {
        if amount == 0 {
            return Err(ClaimError::ZeroAmount);
        }
        Ok(Self {
            id: ClaimId(id),
            optimization,
            priority: optimization.builtin_priority().unwrap_or(u32::MAX),
            resource,
            amount,
            owner: owner.into(),
            scope: ClaimScope::default(),
            timestamp_ms,
            target_level: None,
        })
    }

    pub fn with_priority(mut self, priority: u32) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_scope(mut self, scope: ClaimScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn on_vm(mut self, vm: impl Into<VmId>) -> Self {
        self.scope.vms.push(vm.into());
        self
    }

    pub fn on_server(mut self, server: impl Into<ServerId>) -> Self {
        self.scope.server = Some(server.into());
        self
    }

    pub fn at_level(mut self, level: FrequencyLevel) -> Self {
        self.target_level = Some(level);
        self
    }

    pub fn compressible(&self) -> bool {
        self.resource.compressible()
    }
}

/// Quantized CPU frequency step relative to nominal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub struct FrequencyLevel(i8);

impl FrequencyLevel {
    pub const MIN: FrequencyLevel = FrequencyLevel(-2);
    pub const MAX: FrequencyLevel = FrequencyLevel(2);
    pub const NOMINAL: FrequencyLevel = FrequencyLevel(0);

    pub fn new(level: i8) -> Option<Self> {
        (-2..=2).contains(&level).then_some(FrequencyLevel(level))
    }

    pub fn level(self) -> i8 {
        self.0
    }

    /// Multiplier on base frequency: 0.6, 0.8, 1.0, 1.15, 1.3.
    pub fn multiplier(self) -> f64 {
        match self.0 {
            -2 => 0.6,
            -1 => 0.8,
            0 => 1.0,
            1 => 1.15,
            _ => 1.3,
        }
    }

    /// Boosted-core slots one core at this level consumes per interval.
    pub fn boost_slots(self) -> u64 {
        self.0.max(0) as u64
    }

    pub fn saturating_add(self, delta: i8) -> Self {
        FrequencyLevel((self.0 + delta).clamp(-2, 2))
    }
}

impl TryFrom<i8> for FrequencyLevel {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        FrequencyLevel::new(v).ok_or_else(|| format!("frequency level {v} outside -2..=2"))
    }
}

impl From<FrequencyLevel> for i8 {
    fn from(l: FrequencyLevel) -> i8 {
        l.0
    }
}
