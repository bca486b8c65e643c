use std::path::Path;

use wi_core::hints::OptSet;
use wi_core::sim::{self, Scenario};

fn load(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"));
    Scenario::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const ALL: [&str; 3] = ["batch", "microservices", "video_conference"];

#[test]
fn bundled_scenarios_keep_every_notice() {
    for name in ALL {
        let out = sim::run(&load(name)).unwrap();
        assert_eq!(out.metrics.notice_violations, 0, "{name}");
        assert!(out.metrics.total_cost <= out.metrics.regular_cost + 1e-9, "{name}");
    }
}

#[test]
fn nothing_enabled_costs_the_regular_price() {
    for name in ALL {
        let mut sc = load(name);
        sc.enabled = OptSet::empty();
        let m = sim::run(&sc).unwrap().metrics;
        assert!((m.total_cost - m.regular_cost).abs() < 1e-6, "{name}: {} vs {}", m.total_cost, m.regular_cost);
        assert_eq!(m.evictions(), 0, "{name}");
    }
}

#[test]
fn requests_are_served_or_dropped() {
    for name in ["microservices", "video_conference"] {
        let m = sim::run(&load(name)).unwrap().metrics;
        for (w, wm) in &m.workloads {
            let accounted = wm.requests_completed + wm.requests_dropped;
            assert!((accounted - wm.requests_generated).abs() <= 1e-6 * wm.requests_generated.max(1.0), "{name}/{w}");
        }
    }
}

#[test]
fn seeds_change_the_run_but_not_its_repeatability() {
    let mut sc = load("batch");
    let a = sim::run(&sc).unwrap();
    let b = sim::run(&sc).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.metrics.trace_digest, b.metrics.trace_digest);
    sc.seed += 1;
    let c = sim::run(&sc).unwrap();
    assert_ne!(a.metrics.trace_digest, c.metrics.trace_digest);
}

#[test]
fn replayed_log_rebuilds_the_hint_store() {
    for name in ALL {
        let out = sim::run(&load(name)).unwrap();
        let (store, damage) = wi_core::broker::replay(&out.log);
        assert!(damage.is_none(), "{name}");
        assert_eq!(store.canonical_bytes(), out.store.canonical_bytes(), "{name}");
    }
}
