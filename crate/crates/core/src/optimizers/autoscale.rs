//! Horizontal scaling.

use serde::{Deserialize, Serialize};

pub const DAY_MS: u64 = 24 * 3_600_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleWindow {
    /// Offsets within the day, `[start, end)`.
    pub start_ms: u64,
    pub end_ms: u64,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalingPolicy {
    Threshold { threshold_pct: f64, min: u32, max: u32 },
    Schedule { windows: Vec<ScheduleWindow>, default_count: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleAction {
    pub target: u32,
    /// Scale-out served from the pre-provisioned pool because deployment time is strict.
    pub from_pool: bool,
}

/// Next instance count. The load series is averaged; an empty series holds the count.
pub fn tick(load_pct: &[f64], policy: &ScalingPolicy, current: u32, clock_ms: u64, strict_deploy: bool) -> ScaleAction {
    let target = match policy {
        ScalingPolicy::Threshold { threshold_pct, min, max } => {
            if load_pct.is_empty() || *threshold_pct <= 0.0 {
                current
            } else {
                let util = load_pct.iter().sum::<f64>() / load_pct.len() as f64;
                // Guard against 4.0000000001 rounding up to 5.
                let raw = (current as f64 * util / threshold_pct - 1e-9).ceil().max(0.0);
                (raw as u32).clamp(*min, (*max).max(*min))
            }
        }
        ScalingPolicy::Schedule { windows, default_count } => {
            let t = clock_ms % DAY_MS;
            windows.iter().find(|w| w.start_ms <= t && t < w.end_ms).map_or(*default_count, |w| w.count)
        }
    };
    ScaleAction { target, from_pool: strict_deploy && target > current }
}
