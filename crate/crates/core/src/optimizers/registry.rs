//! Optimization identities, priorities and the onboarding contract.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ResourceKind;

/// The on-demand baseline, the ten built-in optimizations, and onboarded extensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OptimizationId {
    OnDemand,
    Madc,
    Rightsizing,
    Oversubscription,
    AutoScaling,
    NonPreProvision,
    RegionAgnostic,
    Underclocking,
    Overclocking,
    SpotVms,
    HarvestVms,
    /// An optimization onboarded at runtime; the index is assigned by the registry.
    Extension(u16),
}

impl OptimizationId {
    /// The ten built-ins in ascending priority order.
    pub const TEN: [OptimizationId; 10] = [
        OptimizationId::Madc,
        OptimizationId::Rightsizing,
        OptimizationId::Oversubscription,
        OptimizationId::AutoScaling,
        OptimizationId::NonPreProvision,
        OptimizationId::RegionAgnostic,
        OptimizationId::Underclocking,
        OptimizationId::Overclocking,
        OptimizationId::SpotVms,
        OptimizationId::HarvestVms,
    ];

    pub fn builtin_priority(self) -> Option<u32> {
        use OptimizationId::*;
        Some(match self {
            OnDemand => 0,
            Madc => 1,
            Rightsizing => 2,
            Oversubscription => 3,
            AutoScaling => 4,
            NonPreProvision => 5,
            RegionAgnostic => 6,
            Underclocking => 7,
            Overclocking => 8,
            SpotVms => 9,
            HarvestVms => 10,
            Extension(_) => return None,
        })
    }

    pub fn name(self) -> &'static str {
        use OptimizationId::*;
        match self {
            OnDemand => "OnDemand",
            Madc => "MADC",
            Rightsizing => "Rightsizing",
            Oversubscription => "Oversubscription",
            AutoScaling => "AutoScaling",
            NonPreProvision => "NonPreProvision",
            RegionAgnostic => "RegionAgnostic",
            Underclocking => "Underclocking",
            Overclocking => "Overclocking",
            SpotVms => "SpotVMs",
            HarvestVms => "HarvestVMs",
            Extension(_) => "Extension",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        std::iter::once(OptimizationId::OnDemand).chain(Self::TEN).find(|id| id.name() == name)
    }
}

impl fmt::Display for OptimizationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizationId::Extension(n) => write!(f, "ext{n}"),
            other => f.write_str(other.name()),
        }
    }
}

impl Serialize for OptimizationId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OptimizationId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if let Some(n) = s.strip_prefix("ext").and_then(|n| n.parse().ok()) {
            return Ok(OptimizationId::Extension(n));
        }
        OptimizationId::from_name(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown optimization {s:?}")))
    }
}

/// How an optimization is priced relative to a regular VM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingRule {
    Regular,
    /// Fixed fraction of the regular price.
    Factor(f64),
    /// Pay only for VMs actually running.
    RunningVms,
    RegionPrice,
    ResizedVm,
    SpotPlusHarvested,
    RegularPlusOverclock,
}

/// Everything needed to bring an optimization into arbitration and accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationDescriptor {
    pub name: String,
    /// Resource kind names, e.g. `spare_compute`.
    pub resources: Vec<String>,
    pub priority: u32,
    /// Average owner saving as a fraction of regular cost.
    pub owner_benefit: f64,
    pub pricing: PricingRule,
    pub cost_model: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OnboardError {
    #[error("priority {0} is already taken by {1}")]
    DuplicatePriority(u32, String),
    #[error("unknown resource kind {0:?}")]
    UnknownResourceKind(String),
    #[error("optimization {0:?} is already registered")]
    DuplicateName(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub id: OptimizationId,
    pub descriptor: OptimizationDescriptor,
    pub resources: Vec<ResourceKind>,
}

/// Registered optimizations keyed by priority.
#[derive(Debug, Clone, Default)]
pub struct OptimizationRegistry {
    by_priority: BTreeMap<u32, Registration>,
    next_extension: u16,
}

impl OptimizationRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// On-demand plus the ten built-ins, each through [`onboard`](Self::onboard).
    pub fn with_builtins() -> Self {
        let mut reg = Self::new();
        for d in builtin_descriptors() {
            reg.onboard(d).expect("built-in descriptors are consistent");
        }
        reg
    }

    pub fn onboard(&mut self, descriptor: OptimizationDescriptor) -> Result<OptimizationId, OnboardError> {
        if let Some(existing) = self.by_priority.get(&descriptor.priority) {
            return Err(OnboardError::DuplicatePriority(descriptor.priority, existing.descriptor.name.clone()));
        }
        if self.by_priority.values().any(|r| r.descriptor.name == descriptor.name) {
            return Err(OnboardError::DuplicateName(descriptor.name));
        }
        let resources = descriptor
            .resources
            .iter()
            .map(|r| ResourceKind::from_name(r).ok_or_else(|| OnboardError::UnknownResourceKind(r.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let id = match OptimizationId::from_name(&descriptor.name) {
            Some(id) if id.builtin_priority() == Some(descriptor.priority) => id,
            _ => {
                let id = OptimizationId::Extension(self.next_extension);
                self.next_extension += 1;
                id
            }
        };
        self.by_priority.insert(descriptor.priority, Registration { id, descriptor, resources });
        Ok(id)
    }

    pub fn priority(&self, id: OptimizationId) -> Option<u32> {
        self.by_priority.iter().find(|(_, r)| r.id == id).map(|(p, _)| *p)
    }

    pub fn get(&self, id: OptimizationId) -> Option<&Registration> {
        self.by_priority.values().find(|r| r.id == id)
    }

    /// Registrations in ascending priority order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, &Registration)> {
        self.by_priority.iter().map(|(p, r)| (*p, r))
    }

    pub fn len(&self) -> usize {
        self.by_priority.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_priority.is_empty()
    }
}

fn builtin_descriptors() -> Vec<OptimizationDescriptor> {
    use OptimizationId::*;
    let d = |id: OptimizationId, res: &[&str], benefit: f64, pricing: PricingRule, cost: &str| OptimizationDescriptor {
        name: id.name().to_owned(),
        resources: res.iter().map(|s| s.to_string()).collect(),
        priority: id.builtin_priority().unwrap(),
        owner_benefit: benefit,
        pricing,
        cost_model: cost.to_owned(),
    };
    vec![
        d(OnDemand, &["capacity"], 0.0, PricingRule::Regular, "compute allocation"),
        d(Madc, &["cpu_frequency"], 0.40, PricingRule::Factor(0.60), "infrastructure cost"),
        d(Rightsizing, &["capacity"], 0.50, PricingRule::ResizedVm, "compute allocation"),
        d(Oversubscription, &["capacity"], 0.15, PricingRule::Factor(0.85), "compute allocation"),
        d(AutoScaling, &["capacity"], 0.19, PricingRule::RunningVms, "compute allocation"),
        d(NonPreProvision, &["spare_compute"], 0.02, PricingRule::Factor(0.98), "compute allocation"),
        d(RegionAgnostic, &["region_slot"], 0.22, PricingRule::RegionPrice, "efficient region"),
        d(Underclocking, &["cpu_frequency"], 0.01, PricingRule::Factor(0.99), "power, energy"),
        d(Overclocking, &["cpu_frequency"], 0.11, PricingRule::RegularPlusOverclock, "reliability, power/energy"),
        d(SpotVms, &["spare_compute"], 0.85, PricingRule::Factor(0.15), "compute allocation"),
        d(HarvestVms, &["spare_compute"], 0.91, PricingRule::SpotPlusHarvested, "compute allocation"),
    ]
}
