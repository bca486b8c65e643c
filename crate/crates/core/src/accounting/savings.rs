//! Owner savings across a population, attributed per optimization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::pricing::{owner_benefit, select_compatible};
use crate::hints::{
    eligibility_with, rightsize_direction, EligibilityThresholds, HintSet, OptSet, ResizeDirection, UtilBand,
    UtilStats,
};
use crate::ids::{RegionId, WorkloadId};
use crate::optimizers::OptimizationId;
use crate::scalar::Scalar;

/// Utilization given either as a band or as explicit statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UtilSpec {
    Band(UtilBand),
    Stats(UtilStats),
}

impl UtilSpec {
    pub fn stats(&self) -> UtilStats {
        match self {
            UtilSpec::Band(b) => b.representative(),
            UtilSpec::Stats(s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadProfile {
    pub id: WorkloadId,
    pub cores: u64,
    #[serde(default)]
    pub hints: HintSet,
    pub util: UtilSpec,
    /// Region the workload runs in before any migration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_region: Option<RegionId>,
}

impl WorkloadProfile {
    /// Optimizations that lower this workload's bill. Upsizing raises it, so
    /// Rightsizing only counts when the resize goes down.
    pub fn applicable(&self, t: &EligibilityThresholds) -> OptSet {
        let util = self.util.stats();
        let mut set = eligibility_with(&self.hints, &util, t);
        if rightsize_direction(&util, t) == Some(ResizeDirection::Up) {
            set.remove(OptimizationId::Rightsizing);
        }
        set
    }

    /// The set actually priced: one member per compatibility group.
    pub fn active(&self, t: &EligibilityThresholds) -> OptSet {
        select_compatible(self.applicable(t))
    }
}

/// Owner benefit per optimization as fractions of the regular price.
#[derive(Debug, Clone, PartialEq)]
pub struct BenefitTable<S> {
    benefits: BTreeMap<OptimizationId, S>,
}

impl<S: Scalar> BenefitTable<S> {
    pub fn standard() -> Self {
        Self { benefits: OptimizationId::TEN.into_iter().map(|id| (id, owner_benefit(id))).collect() }
    }

    pub fn set(&mut self, id: OptimizationId, benefit: S) {
        self.benefits.insert(id, benefit);
    }

    pub fn get(&self, id: OptimizationId) -> S {
        self.benefits.get(&id).cloned().unwrap_or_else(S::zero)
    }

    /// Members of `set` in attribution order: decreasing benefit, ties by priority.
    pub fn attribution_order(&self, set: OptSet) -> Vec<OptimizationId> {
        let mut ids: Vec<OptimizationId> = set.iter().collect();
        ids.sort_by(|a, b| {
            self.get(*b)
                .partial_cmp(&self.get(*a))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.builtin_priority().cmp(&b.builtin_priority()))
        });
        ids
    }

    /// Fraction saved when all of `active` apply: 1 - product of (1 - b).
    pub fn combined(&self, active: OptSet) -> S {
        S::one() - active.iter().fold(S::one(), |r, id| r * (S::one() - self.get(id)))
    }

    /// Greedy split of one workload's savings, in the same units as `weight`.
    fn attribute(&self, active: OptSet, weight: S, into: &mut BTreeMap<OptimizationId, S>) {
        let mut remaining = weight;
        for id in self.attribution_order(active) {
            let part = remaining.clone() * self.get(id);
            remaining = remaining - part.clone();
            let slot = into.entry(id).or_insert_with(S::zero);
            *slot = slot.clone() + part;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution<S> {
    pub optimization: OptimizationId,
    /// Percentage points of the total regular cost.
    pub points: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsReport<S> {
    pub total_pct: S,
    /// Every built-in optimization, in attribution order.
    pub contributions: Vec<Contribution<S>>,
    pub total_cores: u64,
}

impl<S: Scalar> SavingsReport<S> {
    pub fn points(&self, id: OptimizationId) -> S {
        self.contributions.iter().find(|c| c.optimization == id).map_or_else(S::zero, |c| c.points.clone())
    }
}

pub fn savings_breakdown<S: Scalar>(
    population: &[WorkloadProfile],
    benefits: &BenefitTable<S>,
    thresholds: &EligibilityThresholds,
) -> SavingsReport<S> {
    let total_cores: u64 = population.iter().map(|w| w.cores).sum();
    let order = benefits.attribution_order(OptSet::all());
    if total_cores == 0 {
        return SavingsReport {
            total_pct: S::zero(),
            contributions: order.into_iter().map(|id| Contribution { optimization: id, points: S::zero() }).collect(),
            total_cores,
        };
    }
    let mut saved = BTreeMap::new();
    for w in population {
        benefits.attribute(w.active(thresholds), S::from_u64_exact(w.cores), &mut saved);
    }
    let scale = S::from_u64_exact(100) / S::from_u64_exact(total_cores);
    let contributions: Vec<Contribution<S>> = order
        .into_iter()
        .map(|id| Contribution {
            optimization: id,
            points: saved.get(&id).cloned().unwrap_or_else(S::zero) * scale.clone(),
        })
        .collect();
    let total_pct = contributions.iter().fold(S::zero(), |acc, c| acc + c.points.clone());
    SavingsReport { total_pct, contributions, total_cores }
}

/// Core-weighted fraction of the population in each applicable set.
pub fn applicable_distribution(
    population: &[WorkloadProfile],
    thresholds: &EligibilityThresholds,
) -> BTreeMap<OptSet, f64> {
    let total: u64 = population.iter().map(|w| w.cores).sum();
    let mut out = BTreeMap::new();
    if total == 0 {
        return out;
    }
    for w in population {
        *out.entry(w.applicable(thresholds)).or_insert(0.0) += w.cores as f64 / total as f64;
    }
    out
}
