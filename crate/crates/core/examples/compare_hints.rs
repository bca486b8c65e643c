//! Run a scenario with and without runtime hints and print both summaries.
//!
//! cargo run -p wi-core --example compare_hints -- scenarios/batch.toml

use wi_core::sim::{run, Scenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).ok_or("usage: compare_hints <scenario.toml>")?;
    let mut sc = Scenario::from_toml(&std::fs::read_to_string(&path)?)?;
    for hints in [true, false] {
        sc.runtime_hints = hints;
        let out = run(&sc)?;
        println!("runtime hints {}", if hints { "on" } else { "off" });
        for (id, w) in &out.metrics.workloads {
            println!(
                "  {id}: evictions {} (high priority {}), makespan {:?} ms, cost {:.3} of {:.3}",
                w.evictions, w.high_priority_evictions, w.makespan_ms, w.cost, w.regular_cost
            );
        }
    }
    Ok(())
}
