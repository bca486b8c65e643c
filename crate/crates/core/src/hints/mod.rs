//! The hint vocabulary.
//!
//! A [`HintSet`] carries the seven workload characteristics. Every field has a
//! conservative default (the strictest requirement), so a workload that says
//! nothing is treated exactly like a workload that asks for everything.

mod eligibility;
mod runtime;
mod text;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use eligibility::{
    eligibility, eligibility_with, rightsize_direction, EligibilityThresholds, OptSet, ResizeDirection,
    ResourceUtil, UtilBand, UtilStats,
};
pub use runtime::{
    consistency_check, merge, Consistency, EffectiveHints, FlapPolicy, HintKind, HintSource, HintUpdate,
    NotificationKind, NotificationPayload, PlatformNotification, PreemptionPriority, RuntimeHint,
    RuntimeUpdate, ScalePreference,
};
pub use text::{parse_flat_text, to_flat_text};

pub const MAX_AVAILABILITY_NINES: u8 = 5;
pub const MAX_PREEMPTIBILITY_PCT: u8 = 100;

/// The seven characteristics a workload can declare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HintSet {
    pub scale_up_down: bool,
    pub scale_out_in: bool,
    /// Maximum tolerated VM deployment latency; 0 means immediate.
    pub deploy_time_ms: u64,
    pub availability_nines: u8,
    /// Share of the workload's VMs that may be preempted at the same time.
    pub preemptibility_pct: u8,
    /// Slack versus the workload's own deadline; 0 means delay-sensitive.
    pub delay_tolerance_ms: u64,
    pub region_independent: bool,
}

impl Default for HintSet {
    fn default() -> Self {
        conservative_default()
    }
}

/// The strictest setting of every characteristic.
pub fn conservative_default() -> HintSet {
    HintSet {
        scale_up_down: false,
        scale_out_in: false,
        deploy_time_ms: 0,
        availability_nines: MAX_AVAILABILITY_NINES,
        preemptibility_pct: 0,
        delay_tolerance_ms: 0,
        region_independent: false,
    }
}

/// Names of the seven fields, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintField {
    ScaleUpDown,
    ScaleOutIn,
    DeployTimeMs,
    AvailabilityNines,
    PreemptibilityPct,
    DelayToleranceMs,
    RegionIndependent,
}

impl HintField {
    pub const ALL: [HintField; 7] = [
        HintField::ScaleUpDown,
        HintField::ScaleOutIn,
        HintField::DeployTimeMs,
        HintField::AvailabilityNines,
        HintField::PreemptibilityPct,
        HintField::DelayToleranceMs,
        HintField::RegionIndependent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HintField::ScaleUpDown => "scale_up_down",
            HintField::ScaleOutIn => "scale_out_in",
            HintField::DeployTimeMs => "deploy_time_ms",
            HintField::AvailabilityNines => "availability_nines",
            HintField::PreemptibilityPct => "preemptibility_pct",
            HintField::DelayToleranceMs => "delay_tolerance_ms",
            HintField::RegionIndependent => "region_independent",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    fn legal_range(self) -> &'static str {
        match self {
            HintField::ScaleUpDown | HintField::ScaleOutIn | HintField::RegionIndependent => "true or false",
            HintField::DeployTimeMs | HintField::DelayToleranceMs => "an integer >= 0 (milliseconds)",
            HintField::AvailabilityNines => "an integer in 0..=5",
            HintField::PreemptibilityPct => "an integer in 0..=100",
        }
    }
}

impl fmt::Display for HintField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct FieldError {
    pub field: String,
    pub reason: String,
}

/// Every violation found in one document; nothing is accepted when this is returned.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub errors: Vec<FieldError>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.errors.iter().map(ToString::to_string).collect();
        write!(f, "invalid hints: {}", parts.join("; "))
    }
}

/// Untyped field map, as read from a document before validation.
pub type RawHints = BTreeMap<String, String>;

/// Build a [`HintSet`] from a raw field map. Missing fields take their
/// conservative default; every bad field is reported.
pub fn validate(raw: &RawHints) -> Result<HintSet, ValidationError> {
    let mut hints = conservative_default();
    let mut errors = Vec::new();
    for (key, value) in raw {
        let Some(field) = HintField::from_name(key) else {
            errors.push(FieldError { field: key.clone(), reason: "unknown hint field".into() });
            continue;
        };
        if let Err(reason) = hints.set_from_str(field, value.trim()) {
            errors.push(FieldError { field: key.clone(), reason });
        }
    }
    if errors.is_empty() {
        Ok(hints)
    } else {
        Err(ValidationError { errors })
    }
}

impl HintSet {
    /// Range check for values built directly rather than through [`validate`].
    pub fn check(&self) -> Result<(), ValidationError> {
        let mut errors = Vec::new();
        if self.availability_nines > MAX_AVAILABILITY_NINES {
            errors.push(out_of_range(HintField::AvailabilityNines, self.availability_nines as u64));
        }
        if self.preemptibility_pct > MAX_PREEMPTIBILITY_PCT {
            errors.push(out_of_range(HintField::PreemptibilityPct, self.preemptibility_pct as u64));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { errors })
        }
    }

    pub fn to_raw(&self) -> RawHints {
        HintField::ALL.iter().map(|f| (f.name().to_owned(), self.field_text(*f))).collect()
    }

    pub fn field_text(&self, field: HintField) -> String {
        match field {
            HintField::ScaleUpDown => self.scale_up_down.to_string(),
            HintField::ScaleOutIn => self.scale_out_in.to_string(),
            HintField::DeployTimeMs => self.deploy_time_ms.to_string(),
            HintField::AvailabilityNines => self.availability_nines.to_string(),
            HintField::PreemptibilityPct => self.preemptibility_pct.to_string(),
            HintField::DelayToleranceMs => self.delay_tolerance_ms.to_string(),
            HintField::RegionIndependent => self.region_independent.to_string(),
        }
    }

    fn set_from_str(&mut self, field: HintField, value: &str) -> Result<(), String> {
        let bad = || format!("{value:?} is not {}", field.legal_range());
        match field {
            HintField::ScaleUpDown => self.scale_up_down = value.parse().map_err(|_| bad())?,
            HintField::ScaleOutIn => self.scale_out_in = value.parse().map_err(|_| bad())?,
            HintField::RegionIndependent => self.region_independent = value.parse().map_err(|_| bad())?,
            HintField::DeployTimeMs => self.deploy_time_ms = value.parse().map_err(|_| bad())?,
            HintField::DelayToleranceMs => self.delay_tolerance_ms = value.parse().map_err(|_| bad())?,
            HintField::AvailabilityNines => {
                let v: u64 = value.parse().map_err(|_| bad())?;
                if v > MAX_AVAILABILITY_NINES as u64 {
                    return Err(bad());
                }
                self.availability_nines = v as u8;
            }
            HintField::PreemptibilityPct => {
                let v: u64 = value.parse().map_err(|_| bad())?;
                if v > MAX_PREEMPTIBILITY_PCT as u64 {
                    return Err(bad());
                }
                self.preemptibility_pct = v as u8;
            }
        }
        Ok(())
    }
}

fn out_of_range(field: HintField, v: u64) -> FieldError {
    FieldError { field: field.name().into(), reason: format!("{v} is not {}", field.legal_range()) }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(pairs: &[(&str, &str)]) -> RawHints {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn conservative_default_is_strictest() {
        let d = conservative_default();
        assert_eq!(d.availability_nines, 5);
        assert_eq!(d.preemptibility_pct, 0);
        assert_eq!(d.deploy_time_ms, 0);
        assert_eq!(d.delay_tolerance_ms, 0);
        assert!(!d.scale_up_down && !d.scale_out_in && !d.region_independent);
    }

    #[test]
    fn single_field_fill() {
        let h = validate(&raw(&[("preemptibility_pct", "100")])).unwrap();
        assert_eq!(h, HintSet { preemptibility_pct: 100, ..conservative_default() });
    }

    #[test]
    fn empty_input_is_conservative() {
        assert_eq!(validate(&RawHints::new()).unwrap(), conservative_default());
    }

    #[test]
    fn out_of_range_availability_is_named() {
        let err = validate(&raw(&[("availability_nines", "7")])).unwrap_err();
        assert_eq!(err.errors.len(), 1);
        assert_eq!(err.errors[0].field, "availability_nines");
        assert!(err.errors[0].reason.contains("0..=5"));
    }

    #[test]
    fn every_violation_reported_and_nothing_accepted() {
        let err = validate(&raw(&[
            ("availability_nines", "2.5"),
            ("preemptibility_pct", "101"),
            ("scale_up_down", "yes"),
            ("colour", "blue"),
            ("deploy_time_ms", "-1"),
        ]))
        .unwrap_err();
        let fields: Vec<&str> = err.errors.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["availability_nines", "colour", "deploy_time_ms", "preemptibility_pct", "scale_up_down"]);
    }

    #[test]
    fn check_catches_direct_construction() {
        let h = HintSet { preemptibility_pct: 120, ..Default::default() };
        assert!(h.check().is_err());
        assert!(conservative_default().check().is_ok());
    }
}
