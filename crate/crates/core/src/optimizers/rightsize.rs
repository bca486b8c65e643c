//! VM size recommendations from utilization history.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hints::{EligibilityThresholds, HintSet, ResourceUtil};

pub const DEFAULT_WINDOW_MS: u64 = 24 * 3_600_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilSample {
    pub t_ms: u64,
    pub util: ResourceUtil,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Recommendation {
    Resize { new_cores: u32 },
    NoChange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RightsizeOutcome {
    pub recommendation: Recommendation,
    /// Applied by the platform rather than only recorded for the owner.
    pub automated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("history spans {have_ms} ms, need {need_ms} ms")]
pub struct InsufficientHistory {
    pub have_ms: u64,
    pub need_ms: u64,
}

/// Recommend a new size from the most recent observation window of `history`
/// (ordered by time).
pub fn recommend(
    cores: u32,
    history: &[UtilSample],
    window_ms: u64,
    hints: &HintSet,
    t: &EligibilityThresholds,
) -> Result<RightsizeOutcome, InsufficientHistory> {
    let span = match (history.first(), history.last()) {
        (Some(a), Some(b)) => b.t_ms.saturating_sub(a.t_ms),
        _ => 0,
    };
    if history.is_empty() || span < window_ms {
        return Err(InsufficientHistory { have_ms: span, need_ms: window_ms });
    }
    let end = history.last().unwrap().t_ms;
    let peak = history
        .iter()
        .filter(|s| s.t_ms + window_ms >= end)
        .map(|s| s.util.max_component())
        .fold(0.0, f64::max);
    let recommendation = if peak < t.rightsize_down_below {
        Recommendation::Resize { new_cores: (cores / 2).max(1) }
    } else if peak >= t.rightsize_up_at {
        Recommendation::Resize { new_cores: cores.saturating_mul(2) }
    } else {
        Recommendation::NoChange
    };
    let automated = hints.preemptibility_pct >= t.min_preemptibility_pct
        && hints.availability_nines <= t.relaxed_availability_nines;
    Ok(RightsizeOutcome { recommendation, automated })
}
