//! Event trace: one row per observable happening, in simulation order.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time_ms: u64,
    pub entity: String,
    pub event: String,
    /// Space-separated `key=value` pairs.
    pub detail: String,
}

impl TraceRow {
    /// Value of `key` in the detail column.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail.split(' ').find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn push(&mut self, time_ms: u64, entity: impl Into<String>, event: &str, detail: String) {
        self.rows.push(TraceRow { time_ms, entity: entity.into(), event: event.to_owned(), detail });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_ms,entity,event,detail\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.time_ms, quote(&r.entity), quote(&r.event), quote(&r.detail));
        }
        out
    }

    pub fn digest(&self) -> u32 {
        crc32fast::hash(self.to_csv().as_bytes())
    }

    pub fn events<'a>(&'a self, event: &'a str) -> impl Iterator<Item = &'a TraceRow> + 'a {
        self.rows.iter().filter(move |r| r.event == event)
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Notice check over a trace: every executed removal that was not flagged as
/// an emergency must come at least `notice_ms` after its notification.
/// Returns the offending (vm, notice given) pairs.
pub fn notice_violations(trace: &Trace, notice_ms: u64) -> Vec<(String, u64)> {
    let mut issued: std::collections::BTreeMap<&str, (u64, bool)> = Default::default();
    let mut bad = Vec::new();
    for r in &trace.rows {
        match r.event.as_str() {
            "notification" if matches!(r.field("kind"), Some("Preemption" | "Eviction")) => {
                let emergency = r.field("emergency") == Some("true");
                issued.entry(r.entity.as_str()).or_insert((r.time_ms, emergency));
            }
            "evicted" => match issued.get(r.entity.as_str()) {
                Some(&(t, emergency)) => {
                    if !emergency && r.time_ms < t + notice_ms {
                        bad.push((r.entity.clone(), r.time_ms - t));
                    }
                }
                None => bad.push((r.entity.clone(), 0)),
            },
            _ => {}
        }
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quotes_commas() {
        let mut t = Trace::default();
        t.push(5, "vm-1", "hint", "a=1 b=x,y".into());
        assert_eq!(t.to_csv(), "time_ms,entity,event,detail\n5,vm-1,hint,\"a=1 b=x,y\"\n");
        assert_eq!(t.rows[0].field("b"), Some("x,y"));
    }

    #[test]
    fn notice_scan() {
        let mut t = Trace::default();
        t.push(0, "v", "notification", "kind=Preemption effective=30000 emergency=false".into());
        t.push(30_000, "v", "evicted", String::new());
        t.push(0, "u", "notification", "kind=Preemption effective=10 emergency=false".into());
        t.push(10, "u", "evicted", String::new());
        assert_eq!(notice_violations(&t, 30_000), vec![("u".to_string(), 10)]);
    }
}
