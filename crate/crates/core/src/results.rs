//! Per-run results record: a small `#` header followed by one tab-separated
//! row per metric (`nodes mode seed metric value flag`).

use std::collections::BTreeMap;

use crate::metrics::{avg_delay_ms, drop_pct, nrl, pdr, throughput, Counters, Metric};
use crate::node::DropCause;
use crate::routing::message::ControlKind;
use crate::scenario::Mode;
use crate::sim::{Detection, Simulation};
use crate::time::SimTime;
use crate::trace::{header_pairs, Recount};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub value: String,
    /// `-` when the value is well defined, otherwise why it is not.
    pub flag: String,
}

fn row(name: impl Into<String>, value: impl ToString, flag: &str) -> MetricRow {
    MetricRow {
        name: name.into(),
        value: value.to_string(),
        flag: flag.to_string(),
    }
}

fn metric_row(name: &str, m: Metric) -> MetricRow {
    match m {
        Metric::Value(_) => row(name, m, "-"),
        Metric::Absent(why) => row(name, m, why),
    }
}

/// Every reported metric, derived from raw counts alone so that a trace
/// recount and the live ledger go through the same arithmetic.
pub fn metric_rows(c: &Counters, in_flight: u64, detections: u64, duration_secs: f64, payload_size: u32) -> Vec<MetricRow> {
    let mut rows = vec![
        row("sent", c.sent, "-"),
        row("received", c.received_unique, "-"),
        row("duplicates", c.duplicates, "-"),
    ];
    for cause in DropCause::ALL {
        rows.push(row(format!("dropped_{}", cause.as_str()), c.dropped(cause), "-"));
    }
    rows.push(row("dropped_total", c.total_drops(), "-"));
    rows.push(row("in_flight", in_flight, "-"));
    for kind in ControlKind::ALL {
        rows.push(row(format!("control_{}", kind.as_str().to_lowercase()), c.control_sent(kind), "-"));
    }
    rows.push(row("routing_packets", c.routing_packets(), "-"));
    let p = pdr(c);
    rows.push(row("pdr", format!("{:.6}", p.ratio), if p.vacuous { "vacuous" } else { "-" }));
    rows.push(metric_row("avg_delay_ms", avg_delay_ms(c)));
    rows.push(metric_row("nrl", nrl(c)));
    let t = throughput(c, duration_secs, payload_size);
    rows.push(row("throughput_pps", format!("{:.6}", t.packets_per_sec), "-"));
    rows.push(row("throughput_bps", format!("{:.6}", t.bytes_per_sec), "-"));
    let d = drop_pct(c);
    rows.push(row("drop_pct", format!("{:.6}", d.total_pct), "-"));
    for (cause, pct) in d.by_cause {
        rows.push(row(format!("drop_pct_{}", cause.as_str()), format!("{pct:.6}"), "-"));
    }
    rows.push(row("detections", detections, "-"));
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub node_count: u32,
    pub mode: Mode,
    pub seed: u64,
    pub duration: SimTime,
    pub payload_size: u32,
    pub attackers: Vec<NodeId>,
    pub monitors: Vec<NodeId>,
    pub counters: Counters,
    pub in_flight: u64,
    pub stale_replies: u64,
    pub detections: Vec<Detection>,
    pub discovery_failures: u64,
}

fn id_list(ids: &[NodeId]) -> String {
    ids.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

impl RunSummary {
    pub(crate) fn from_sim(sim: &Simulation) -> Self {
        let s = sim.scenario();
        RunSummary {
            node_count: s.node_count,
            mode: s.mode,
            seed: s.seed,
            duration: sim.end(),
            payload_size: s.payload_size,
            attackers: sim.attackers().to_vec(),
            monitors: sim.monitors().iter().map(|m| m.node).collect(),
            counters: sim.ledger().totals,
            in_flight: sim.ledger().in_flight,
            stale_replies: sim.ledger().stale_replies,
            detections: sim.detections().to_vec(),
            discovery_failures: sim.discovery_failures().len() as u64,
        }
    }

    pub fn pdr(&self) -> f64 {
        pdr(&self.counters).ratio
    }

    pub fn rows(&self) -> Vec<MetricRow> {
        metric_rows(
            &self.counters,
            self.in_flight,
            self.detections.len() as u64,
            self.duration.as_secs_f64(),
            self.payload_size,
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# manet-sim results\n");
        out += &format!(
            "# nodes={} mode={} seed={} duration={} payload={} stale_replies={} discovery_failures={}\n",
            self.node_count, self.mode, self.seed, self.duration, self.payload_size, self.stale_replies, self.discovery_failures
        );
        out += &format!("# attackers={} monitors={}\n", id_list(&self.attackers), id_list(&self.monitors));
        for d in &self.detections {
            out += &format!(
                "# detection time={} monitor={} subject={} handed={} confirmed={}\n",
                d.time, d.monitor, d.subject, d.handed_off, d.confirmed
            );
        }
        out += "nodes\tmode\tseed\tmetric\tvalue\tflag\n";
        for r in self.rows() {
            out += &format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                self.node_count, self.mode, self.seed, r.name, r.value, r.flag
            );
        }
        out
    }
}

/// A results record read back from text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsRecord {
    pub header: BTreeMap<String, String>,
    pub rows: Vec<MetricRow>,
}

impl ResultsRecord {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut rec = ResultsRecord::default();
        let mut seen_columns = false;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with("# detection") {
                continue;
            }
            if let Some(pairs) = header_pairs(line) {
                for (k, v) in pairs {
                    rec.header.insert(k.to_string(), v.to_string());
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if !seen_columns {
                if cols != ["nodes", "mode", "seed", "metric", "value", "flag"] {
                    return Err(format!("line {}: expected column header", n + 1));
                }
                seen_columns = true;
                continue;
            }
            let [_, _, _, name, value, flag] = cols[..] else {
                return Err(format!("line {}: expected 6 columns", n + 1));
            };
            rec.rows.push(row(name, value, flag));
        }
        if !seen_columns {
            return Err("no metric rows".into());
        }
        Ok(rec)
    }

    pub fn get(&self, metric: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.name == metric)
    }
}

/// Recomputes every metric from a trace recount and lists each row that
/// differs from the record. Empty means an exact match.
pub fn diff_recount(record: &ResultsRecord, recount: &Recount) -> Result<Vec<String>, String> {
    let duration: SimTime = recount.header_value("duration").ok_or("trace header lacks duration")?;
    let payload: u32 = recount.header_value("payload").ok_or("trace header lacks payload")?;
    let in_flight = recount.in_flight.ok_or("trace has no end line")?;
    let fresh = metric_rows(&recount.counters, in_flight, recount.detections, duration.as_secs_f64(), payload);
    let mut diffs = Vec::new();
    for r in &fresh {
        match record.get(&r.name) {
            None => diffs.push(format!("{}: missing from results (trace gives {})", r.name, r.value)),
            Some(got) if got != r => diffs.push(format!(
                "{}: results {} [{}], trace {} [{}]",
                r.name, got.value, got.flag, r.value, r.flag
            )),
            Some(_) => {}
        }
    }
    for r in &record.rows {
        if !fresh.iter().any(|f| f.name == r.name) {
            diffs.push(format!("{}: not derivable from the trace", r.name));
        }
    }
    Ok(diffs)
}
