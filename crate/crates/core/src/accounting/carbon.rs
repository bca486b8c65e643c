//! Carbon footprint: core-hours x frequency multiplier x region intensity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::savings::WorkloadProfile;
use crate::hints::{EligibilityThresholds, OptSet};
use crate::ids::RegionId;
use crate::optimizers::region::RegionEntry;
use crate::optimizers::OptimizationId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CarbonError {
    #[error("no carbon intensity for region {0}")]
    MissingIntensity(RegionId),
    #[error("region table is empty")]
    EmptyRegionTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarbonConfig {
    /// Region of workloads that do not name one.
    pub home_region: RegionId,
    /// Migrated cores go to the region at this intensity percentile.
    pub green_percentile: f64,
    /// Share of core-hours left after each VM-count-reducing optimization.
    pub rightsizing_factor: f64,
    pub autoscaling_factor: f64,
    pub oversubscription_factor: f64,
    /// Power multiplier for underclocked workloads; 1 leaves them unchanged.
    pub underclock_multiplier: f64,
}

impl Default for CarbonConfig {
    fn default() -> Self {
        Self {
            home_region: RegionId::new("home"),
            green_percentile: 10.0,
            rightsizing_factor: 0.50,
            autoscaling_factor: 0.81,
            oversubscription_factor: 0.85,
            underclock_multiplier: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonReport {
    pub baseline_g: f64,
    pub optimized_g: f64,
    pub reduction_pct: f64,
    /// Percentage points of baseline, greedy in the order applied.
    pub contributions: Vec<(OptimizationId, f64)>,
    pub green_region: RegionId,
}

/// Nearest-rank percentile of intensity over the table.
pub fn green_region(regions: &[RegionEntry], percentile: f64) -> Result<&RegionEntry, CarbonError> {
    if regions.is_empty() {
        return Err(CarbonError::EmptyRegionTable);
    }
    let mut sorted: Vec<&RegionEntry> = regions.iter().collect();
    sorted.sort_by(|a, b| a.carbon_g_per_kwh.total_cmp(&b.carbon_g_per_kwh).then(a.region_id.cmp(&b.region_id)));
    let rank = ((percentile.clamp(0.0, 100.0) / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.saturating_sub(1).min(sorted.len() - 1)])
}

/// Multiplicative carbon factors a workload's active set implies, in application order.
fn factors(active: OptSet, cfg: &CarbonConfig, migrate_ratio: f64) -> Vec<(OptimizationId, f64)> {
    use OptimizationId::*;
    let mut out = Vec::new();
    for (id, f) in [
        (RegionAgnostic, migrate_ratio),
        (Rightsizing, cfg.rightsizing_factor),
        (AutoScaling, cfg.autoscaling_factor),
        (Oversubscription, cfg.oversubscription_factor),
        (Underclocking, cfg.underclock_multiplier),
    ] {
        if active.contains(id) && f < 1.0 {
            out.push((id, f));
        }
    }
    out
}

pub fn carbon_report(
    population: &[WorkloadProfile],
    regions: &[RegionEntry],
    cfg: &CarbonConfig,
    thresholds: &EligibilityThresholds,
) -> Result<CarbonReport, CarbonError> {
    let green = green_region(regions, cfg.green_percentile)?;
    let intensity = |id: &RegionId| {
        regions
            .iter()
            .find(|r| &r.region_id == id)
            .map(|r| r.carbon_g_per_kwh)
            .ok_or_else(|| CarbonError::MissingIntensity(id.clone()))
    };
    let mut baseline = 0.0;
    let mut saved: BTreeMap<OptimizationId, f64> = BTreeMap::new();
    for w in population {
        let home = w.home_region.as_ref().unwrap_or(&cfg.home_region);
        let base = w.cores as f64 * intensity(home)?;
        baseline += base;
        let ratio = if base > 0.0 { (green.carbon_g_per_kwh / intensity(home)?).min(1.0) } else { 1.0 };
        let mut remaining = base;
        for (id, f) in factors(w.active(thresholds), cfg, ratio) {
            let cut = remaining * (1.0 - f);
            remaining -= cut;
            *saved.entry(id).or_insert(0.0) += cut;
        }
    }
    let total_saved: f64 = saved.values().sum();
    let pct = |g: f64| if baseline > 0.0 { 100.0 * g / baseline } else { 0.0 };
    let mut contributions: Vec<(OptimizationId, f64)> = saved.iter().map(|(id, g)| (*id, pct(*g))).collect();
    contributions.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(CarbonReport {
        baseline_g: baseline,
        optimized_g: baseline - total_saved,
        reduction_pct: pct(total_saved),
        contributions,
        green_region: green.region_id.clone(),
    })
}

/// Reduction for cores moved between two intensities, in percent.
pub fn migration_reduction_pct(from_g_per_kwh: f64, to_g_per_kwh: f64) -> f64 {
    100.0 * (1.0 - to_g_per_kwh / from_g_per_kwh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::savings::UtilSpec;
    use crate::hints::{conservative_default, HintSet, UtilBand};

    fn regions() -> Vec<RegionEntry> {
        vec![
            RegionEntry { region_id: "home".into(), price_factor: 1.0, carbon_g_per_kwh: 546.0 },
            RegionEntry { region_id: "green".into(), price_factor: 0.9, carbon_g_per_kwh: 267.0 },
        ]
    }

    fn w(hints: HintSet) -> WorkloadProfile {
        WorkloadProfile { id: "w".into(), cores: 10, hints, util: UtilSpec::Band(UtilBand::High), home_region: None }
    }

    #[test]
    fn migration_is_fifty_one_percent() {
        assert!((migration_reduction_pct(546.0, 267.0) - 51.1).abs() < 0.1);
        let pop = [w(HintSet { region_independent: true, ..conservative_default() })];
        let r = carbon_report(&pop, &regions(), &CarbonConfig::default(), &Default::default()).unwrap();
        assert!((r.reduction_pct - 100.0 * (1.0 - 267.0 / 546.0)).abs() < 1e-9);
        assert_eq!(r.green_region, RegionId::new("green"));
    }

    #[test]
    fn nothing_active_nothing_saved() {
        let r = carbon_report(&[w(conservative_default())], &regions(), &CarbonConfig::default(), &Default::default())
            .unwrap();
        assert_eq!(r.reduction_pct, 0.0);
        assert!(r.contributions.is_empty());
    }

    #[test]
    fn missing_region() {
        let mut p = w(conservative_default());
        p.home_region = Some("mars".into());
        assert_eq!(
            carbon_report(&[p], &regions(), &CarbonConfig::default(), &Default::default()).unwrap_err(),
            CarbonError::MissingIntensity("mars".into())
        );
    }
}
