//! Which optimizations a workload's characteristics unlock.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EffectiveHints, HintSet};
use crate::optimizers::OptimizationId;

/// Observed utilization, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilStats {
    pub p95_cpu_pct: f64,
    pub p95_max_cpu_pct: f64,
    pub max_util: ResourceUtil,
}

/// Peak utilization per resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceUtil {
    pub cpu: f64,
    pub memory: f64,
    pub disk: f64,
}

impl ResourceUtil {
    pub fn max_component(&self) -> f64 {
        self.cpu.max(self.memory).max(self.disk)
    }

    pub fn uniform(pct: f64) -> Self {
        Self { cpu: pct, memory: pct, disk: pct }
    }
}

impl UtilStats {
    pub fn uniform(pct: f64) -> Self {
        Self { p95_cpu_pct: pct, p95_max_cpu_pct: pct, max_util: ResourceUtil::uniform(pct) }
    }

    pub fn check(&self) -> Result<(), String> {
        let all = [
            ("p95_cpu_pct", self.p95_cpu_pct),
            ("p95_max_cpu_pct", self.p95_max_cpu_pct),
            ("max_util.cpu", self.max_util.cpu),
            ("max_util.memory", self.max_util.memory),
            ("max_util.disk", self.max_util.disk),
        ];
        for (name, v) in all {
            if !(0.0..=100.0).contains(&v) {
                return Err(format!("{name}: {v} is not a percentage in [0, 100]"));
            }
        }
        Ok(())
    }
}

/// Coarse utilization bands with a fixed representative each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilBand {
    Low,
    Mid,
    High,
}

impl UtilBand {
    pub const ALL: [UtilBand; 3] = [UtilBand::Low, UtilBand::Mid, UtilBand::High];

    pub fn representative(self) -> UtilStats {
        match self {
            UtilBand::Low => UtilStats {
                p95_cpu_pct: 20.0,
                p95_max_cpu_pct: 35.0,
                max_util: ResourceUtil { cpu: 40.0, memory: 45.0, disk: 30.0 },
            },
            UtilBand::Mid => UtilStats {
                p95_cpu_pct: 50.0,
                p95_max_cpu_pct: 70.0,
                max_util: ResourceUtil { cpu: 70.0, memory: 60.0, disk: 40.0 },
            },
            UtilBand::High => UtilStats {
                p95_cpu_pct: 75.0,
                p95_max_cpu_pct: 85.0,
                max_util: ResourceUtil { cpu: 85.0, memory: 95.0, disk: 50.0 },
            },
        }
    }
}

/// Boundaries used by the eligibility predicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EligibilityThresholds {
    /// Preemptibility needed to count as preemptible at all.
    pub min_preemptibility_pct: u8,
    /// Availability at or below this many nines is "relaxed".
    pub relaxed_availability_nines: u8,
    /// Deploy-time hints at or above this are "not strict".
    pub non_strict_deploy_ms: u64,
    /// Delay tolerance at or above this is "delay tolerant".
    pub delay_tolerant_ms: u64,
    pub overclock_min_p95_max_cpu: f64,
    pub oversub_max_p95_cpu: f64,
    pub rightsize_down_below: f64,
    pub rightsize_up_at: f64,
}

impl Default for EligibilityThresholds {
    fn default() -> Self {
        Self {
            min_preemptibility_pct: 20,
            relaxed_availability_nines: 3,
            non_strict_deploy_ms: 60_000,
            delay_tolerant_ms: 1,
            overclock_min_p95_max_cpu: 40.0,
            oversub_max_p95_cpu: 65.0,
            rightsize_down_below: 50.0,
            rightsize_up_at: 90.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResizeDirection {
    Down,
    Up,
}

/// Rightsizing direction implied by utilization alone. Down wins when both hold,
/// which cannot happen since a component at 90% also exceeds 50%.
pub fn rightsize_direction(util: &UtilStats, t: &EligibilityThresholds) -> Option<ResizeDirection> {
    let peak = util.max_util.max_component();
    if peak < t.rightsize_down_below {
        Some(ResizeDirection::Down)
    } else if peak >= t.rightsize_up_at {
        Some(ResizeDirection::Up)
    } else {
        None
    }
}

pub fn eligibility(hints: &EffectiveHints, util: &UtilStats) -> OptSet {
    eligibility_with(&hints.resolved(), util, &EligibilityThresholds::default())
}

pub fn eligibility_with(h: &HintSet, util: &UtilStats, t: &EligibilityThresholds) -> OptSet {
    use OptimizationId::*;
    let delay_tolerant = h.delay_tolerance_ms >= t.delay_tolerant_ms;
    let relaxed = h.availability_nines <= t.relaxed_availability_nines;
    let preemptible = h.preemptibility_pct >= t.min_preemptibility_pct;

    let mut set = OptSet::empty();
    let mut put = |id, cond: bool| {
        if cond {
            set.insert(id);
        }
    };
    put(AutoScaling, h.scale_out_in && delay_tolerant);
    put(SpotVms, preemptible);
    put(HarvestVms, preemptible && h.scale_up_down && delay_tolerant);
    put(Overclocking, delay_tolerant && util.p95_max_cpu_pct > t.overclock_min_p95_max_cpu);
    put(Underclocking, preemptible && delay_tolerant);
    put(NonPreProvision, h.deploy_time_ms >= t.non_strict_deploy_ms);
    put(RegionAgnostic, h.region_independent);
    put(Oversubscription, delay_tolerant && util.p95_cpu_pct < t.oversub_max_p95_cpu);
    put(Rightsizing, relaxed && rightsize_direction(util, t).is_some());
    put(Madc, relaxed);
    set
}

/// A set of the ten built-in optimizations (on-demand excluded), as a bitmask
/// whose bit `p - 1` stands for the optimization with priority `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct OptSet(u16);

impl OptSet {
    pub const fn empty() -> Self {
        OptSet(0)
    }

    pub fn all() -> Self {
        OptimizationId::TEN.into_iter().collect()
    }

    pub fn from_bits(bits: u16) -> Self {
        OptSet(bits & 0x3ff)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    fn bit(id: OptimizationId) -> Option<u16> {
        match id.builtin_priority() {
            Some(p) if p >= 1 => Some(1 << (p - 1)),
            _ => None,
        }
    }

    pub fn insert(&mut self, id: OptimizationId) {
        if let Some(b) = Self::bit(id) {
            self.0 |= b;
        }
    }

    pub fn remove(&mut self, id: OptimizationId) {
        if let Some(b) = Self::bit(id) {
            self.0 &= !b;
        }
    }

    pub fn contains(self, id: OptimizationId) -> bool {
        Self::bit(id).is_some_and(|b| self.0 & b != 0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: OptSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: OptSet) -> OptSet {
        OptSet(self.0 | other.0)
    }

    pub fn intersection(self, other: OptSet) -> OptSet {
        OptSet(self.0 & other.0)
    }

    /// Members in ascending priority order.
    pub fn iter(self) -> impl Iterator<Item = OptimizationId> {
        OptimizationId::TEN.into_iter().filter(move |id| self.contains(*id))
    }
}

impl FromIterator<OptimizationId> for OptSet {
    fn from_iter<I: IntoIterator<Item = OptimizationId>>(iter: I) -> Self {
        let mut s = OptSet::empty();
        for id in iter {
            s.insert(id);
        }
        s
    }
}

impl fmt::Display for OptSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(|i| i.name()).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

impl Serialize for OptSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(|i| i.name()))
    }
}

impl<'de> Deserialize<'de> for OptSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        names
            .iter()
            .map(|n| {
                OptimizationId::from_name(n)
                    .filter(|id| id.builtin_priority().is_some_and(|p| p >= 1))
                    .ok_or_else(|| serde::de::Error::custom(format!("unknown optimization {n:?}")))
            })
            .collect()
    }
}
