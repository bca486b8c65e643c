//! Scenario description and validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::AgentConfig;
use crate::broker::RateLimitPolicy;
use crate::hints::{HintSet, OptSet, UtilBand};
use crate::ids::{RegionId, ServerId, WorkloadId};
use crate::optimizers::autoscale::ScalingPolicy;
use crate::optimizers::region::RegionEntry;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{path}: {reason}")]
pub struct ScenarioError {
    pub path: String,
    pub reason: String,
}

impl ScenarioError {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self { path: path.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub duration_ms: u64,
    #[serde(default = "default_tick")]
    pub tick_ms: u64,
    /// Optimizations the platform runs; everything else is off.
    #[serde(default)]
    pub enabled: OptSet,
    /// Whether workloads publish runtime hints or stick to deployment hints.
    #[serde(default = "yes")]
    pub runtime_hints: bool,
    #[serde(default)]
    pub parallel_agents: bool,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default = "platform_rate")]
    pub rate_limit: RateLimitPolicy,
    pub regions: Vec<RegionEntry>,
    pub servers: Vec<ServerSpec>,
    pub workloads: Vec<WorkloadSpec>,
    #[serde(default)]
    pub events: Vec<ScriptedEvent>,
}

fn default_tick() -> u64 {
    1_000
}

fn yes() -> bool {
    true
}

fn platform_rate() -> RateLimitPolicy {
    RateLimitPolicy::per_second(1_000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerSpec {
    pub id: ServerId,
    pub region_id: RegionId,
    pub cores: u32,
    /// Boosted-core slots the server's power delivery allows.
    #[serde(default)]
    pub power_budget_slots: u64,
    #[serde(default)]
    pub rack: Option<String>,
}

/// How a workload's VMs are billed; `auto` follows eligibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingClass {
    #[default]
    Auto,
    Regular,
    Spot,
    Harvest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub id: WorkloadId,
    pub region_id: RegionId,
    pub vms: u32,
    pub cores_per_vm: u32,
    #[serde(default)]
    pub hints: HintSet,
    /// Utilization band used for eligibility before any history exists.
    #[serde(default = "mid_band")]
    pub util_band: UtilBand,
    #[serde(default)]
    pub class: PricingClass,
    /// VM i is created at `i * stagger_ms`.
    #[serde(default)]
    pub stagger_ms: u64,
    pub model: ModelSpec,
}

fn mid_band() -> UtilBand {
    UtilBand::Mid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Batch(BatchParams),
    Microservices(MicroParams),
    VideoConference(ConfParams),
    /// Constant load, no runtime hints.
    Static { util_pct: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchParams {
    pub jobs: Vec<JobSpec>,
    pub start_ms: u64,
    pub checkpoint_ms: u64,
    pub restart_penalty_ms: u64,
    /// Containers older than this count as critical.
    pub critical_age_ms: u64,
}

impl Default for BatchParams {
    fn default() -> Self {
        Self {
            jobs: vec![JobSpec::default()],
            start_ms: 0,
            checkpoint_ms: 60_000,
            restart_penalty_ms: 5_000,
            critical_age_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobSpec {
    pub tasks: u32,
    pub min_duration_ms: u64,
    pub max_duration_ms: u64,
}

impl Default for JobSpec {
    fn default() -> Self {
        Self { tasks: 8, min_duration_ms: 60_000, max_duration_ms: 120_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicroParams {
    pub base_rps: f64,
    pub peak_rps: f64,
    /// Length of one diurnal cycle.
    pub day_ms: u64,
    pub pods_per_node: u32,
    pub rps_per_pod: f64,
    pub min_nodes: u32,
}

impl Default for MicroParams {
    fn default() -> Self {
        Self { base_rps: 200.0, peak_rps: 800.0, day_ms: 3_600_000, pods_per_node: 10, rps_per_pod: 50.0, min_nodes: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfParams {
    pub base_calls: f64,
    pub peak_calls: f64,
    pub day_ms: u64,
    /// Extra calls at minutes 0 and 30 of every hour.
    pub spike_calls: f64,
    pub spike_width_ms: u64,
    pub calls_per_vm: f64,
    /// Utilization above which a VM raises its priority.
    pub high_util_pct: f64,
    pub scaling: ScalingPolicy,
    pub scale_interval_ms: u64,
    pub rightsize_window_ms: u64,
}

impl Default for ConfParams {
    fn default() -> Self {
        Self {
            base_calls: 40.0,
            peak_calls: 400.0,
            day_ms: 7_200_000,
            spike_calls: 100.0,
            spike_width_ms: 120_000,
            calls_per_vm: 50.0,
            high_util_pct: 70.0,
            scaling: ScalingPolicy::Threshold { threshold_pct: 60.0, min: 1, max: 16 },
            scale_interval_ms: 60_000,
            rightsize_window_ms: 3_600_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptedEvent {
    /// On-demand customers need `cores` on a server until `until_ms`.
    CapacityCrunch {
        at_ms: u64,
        server: ServerId,
        cores: u32,
        #[serde(default)]
        until_ms: Option<u64>,
    },
    /// The server must shed `severity` of its power, effective after `lead_ms`.
    PowerEvent {
        at_ms: u64,
        server: ServerId,
        severity: f64,
        #[serde(default = "notice")]
        lead_ms: u64,
    },
}

fn notice() -> u64 {
    30_000
}

impl ScriptedEvent {
    pub fn at_ms(&self) -> u64 {
        match self {
            ScriptedEvent::CapacityCrunch { at_ms, .. } | ScriptedEvent::PowerEvent { at_ms, .. } => *at_ms,
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| {
            let path = e.span().map_or_else(|| "scenario".to_owned(), |sp| field_at(text, sp.start));
            ScenarioError::new(path, e.message().to_owned())
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |p: String, r: &str| Err(ScenarioError::new(p, r));
        if self.duration_ms == 0 {
            return err("duration_ms".into(), "must be positive");
        }
        if self.tick_ms == 0 {
            return err("tick_ms".into(), "must be positive");
        }
        if self.regions.is_empty() {
            return err("regions".into(), "at least one region is required");
        }
        if self.servers.is_empty() {
            return err("servers".into(), "at least one server is required");
        }
        for (i, r) in self.regions.iter().enumerate() {
            if self.regions[..i].iter().any(|o| o.region_id == r.region_id) {
                return err(format!("regions[{i}].region_id"), "duplicate region");
            }
            if !(r.price_factor > 0.0) || !(r.carbon_g_per_kwh >= 0.0) {
                return err(format!("regions[{i}]"), "price factor must be positive and intensity non-negative");
            }
        }
        for (i, s) in self.servers.iter().enumerate() {
            if self.servers[..i].iter().any(|o| o.id == s.id) {
                return err(format!("servers[{i}].id"), "duplicate server");
            }
            if !self.regions.iter().any(|r| r.region_id == s.region_id) {
                return err(format!("servers[{i}].region_id"), "unknown region");
            }
            if s.cores == 0 {
                return err(format!("servers[{i}].cores"), "must be positive");
            }
        }
        for (i, w) in self.workloads.iter().enumerate() {
            let p = |f: &str| format!("workloads[{i}].{f}");
            if self.workloads[..i].iter().any(|o| o.id == w.id) {
                return err(p("id"), "duplicate workload");
            }
            if !self.regions.iter().any(|r| r.region_id == w.region_id) {
                return err(p("region_id"), "home region does not exist");
            }
            if w.vms == 0 {
                return err(p("vms"), "must be at least 1");
            }
            if w.cores_per_vm == 0 {
                return err(p("cores_per_vm"), "must be at least 1");
            }
            if let Err(e) = w.hints.check() {
                let field = e.errors.first().map_or_else(String::new, |f| f.field.clone());
                return err(p(&format!("hints.{field}")), &e.to_string());
            }
            match &w.model {
                ModelSpec::Batch(b) => {
                    for (j, job) in b.jobs.iter().enumerate() {
                        if job.min_duration_ms == 0 || job.min_duration_ms > job.max_duration_ms {
                            return err(p(&format!("model.jobs[{j}]")), "need 0 < min_duration_ms <= max_duration_ms");
                        }
                    }
                }
                ModelSpec::Microservices(m) => {
                    if m.pods_per_node == 0 || !(m.rps_per_pod > 0.0) || m.day_ms == 0 {
                        return err(p("model"), "pods_per_node, rps_per_pod and day_ms must be positive");
                    }
                }
                ModelSpec::VideoConference(c) => {
                    if !(c.calls_per_vm > 0.0) || c.day_ms == 0 || c.scale_interval_ms == 0 {
                        return err(p("model"), "calls_per_vm, day_ms and scale_interval_ms must be positive");
                    }
                }
                ModelSpec::Static { util_pct } => {
                    if !(0.0..=100.0).contains(util_pct) {
                        return err(p("model.util_pct"), "must be a percentage");
                    }
                }
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            let server = match e {
                ScriptedEvent::CapacityCrunch { server, .. } | ScriptedEvent::PowerEvent { server, .. } => server,
            };
            if !self.servers.iter().any(|s| &s.id == server) {
                return err(format!("events[{i}].server"), "unknown server");
            }
            if let ScriptedEvent::PowerEvent { severity, .. } = e {
                if !(0.0..=1.0).contains(severity) {
                    return err(format!("events[{i}].severity"), "must be in [0, 1]");
                }
            }
        }
        Ok(())
    }
}

/// Best-effort dotted path of the key enclosing byte offset `at`.
fn field_at(text: &str, at: usize) -> String {
    let before = &text[..at.min(text.len())];
    let mut table = String::new();
    let mut counts: std::collections::BTreeMap<String, usize> = Default::default();
    for line in before.lines() {
        let l = line.trim();
        if let Some(name) = l.strip_prefix("[[").and_then(|r| r.strip_suffix("]]")) {
            let n = counts.entry(name.to_owned()).or_insert(0);
            table = format!("{name}[{}]", *n);
            *n += 1;
        } else if let Some(name) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            table = name.to_owned();
        }
    }
    let line = text[..at.min(text.len())].rsplit('\n').next().unwrap_or("");
    let rest = &text[at.min(text.len())..];
    let full_line = format!("{line}{}", rest.split('\n').next().unwrap_or(""));
    let key = full_line.split('=').next().unwrap_or("").trim();
    match (table.is_empty(), key.is_empty() || key.starts_with('[')) {
        (true, true) => "scenario".into(),
        (true, false) => key.into(),
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 1
duration_ms = 10000

[[regions]]
region_id = "r1"
price_factor = 1.0
carbon_g_per_kwh = 546.0

[[servers]]
id = "s1"
region_id = "r1"
cores = 16

[[workloads]]
id = "w"
region_id = "r1"
vms = 2
cores_per_vm = 4
model = { kind = "static", util_pct = 30.0 }
"#;

    #[test]
    fn minimal_parses() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.tick_ms, 1_000);
        assert!(s.runtime_hints);
    }

    #[test]
    fn bad_field_is_named() {
        let e = Scenario::from_toml(&MINIMAL.replace("vms = 2", "vms = 0")).unwrap_err();
        assert_eq!(e.path, "workloads[0].vms");
        let e = Scenario::from_toml(&MINIMAL.replace("cores = 16", "cores = \"many\"")).unwrap_err();
        assert_eq!(e.path, "servers[0].cores");
        let e = Scenario::from_toml(&MINIMAL.replace("region_id = \"r1\"\nvms", "region_id = \"r9\"\nvms")).unwrap_err();
        assert_eq!(e.path, "workloads[0].region_id");
    }
}
