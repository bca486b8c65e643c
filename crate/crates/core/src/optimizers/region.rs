//! Choosing a cheaper or greener region.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::RegionId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEntry {
    pub region_id: RegionId,
    /// Price multiplier against the reference region.
    pub price_factor: f64,
    pub carbon_g_per_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegionError {
    #[error("region table is empty")]
    EmptyRegionTable,
}

fn normalize(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    xs.iter().map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 }).collect()
}

/// Region minimizing `w * price + (1 - w) * carbon`, both min-max normalized
/// over the table. Ineligible workloads stay home.
pub fn place(home: &RegionId, eligible: bool, regions: &[RegionEntry], w: f64) -> Result<RegionId, RegionError> {
    if !eligible {
        return Ok(home.clone());
    }
    if regions.is_empty() {
        return Err(RegionError::EmptyRegionTable);
    }
    let w = w.clamp(0.0, 1.0);
    let price = normalize(&regions.iter().map(|r| r.price_factor).collect::<Vec<_>>());
    let carbon = normalize(&regions.iter().map(|r| r.carbon_g_per_kwh).collect::<Vec<_>>());
    let best = (0..regions.len())
        .min_by(|&a, &b| {
            let sa = w * price[a] + (1.0 - w) * carbon[a];
            let sb = w * price[b] + (1.0 - w) * carbon[b];
            sa.total_cmp(&sb).then_with(|| regions[a].region_id.cmp(&regions[b].region_id))
        })
        .expect("non-empty");
    Ok(regions[best].region_id.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(id: &str, p: f64, c: f64) -> RegionEntry {
        RegionEntry { region_id: id.into(), price_factor: p, carbon_g_per_kwh: c }
    }

    #[test]
    fn dominant_region_wins_for_any_weight() {
        let t = [r("A", 1.0, 546.0), r("B", 0.9, 267.0)];
        for w in [0.0, 0.3, 0.5, 1.0] {
            assert_eq!(place(&"A".into(), true, &t, w).unwrap(), RegionId::from("B"));
        }
    }

    #[test]
    fn gate_and_ties() {
        let t = [r("Z", 1.0, 100.0), r("M", 1.0, 500.0)];
        assert_eq!(place(&"Z".into(), false, &t, 0.5).unwrap(), RegionId::from("Z"));
        assert_eq!(place(&"Z".into(), true, &t, 1.0).unwrap(), RegionId::from("M"));
        assert_eq!(place(&"Z".into(), true, &[], 1.0), Err(RegionError::EmptyRegionTable));
    }
}
