//! Density × mode × seed sweeps and the comparison table built from them.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::{avg_delay_ms, drop_pct, nrl, pdr, throughput};
use crate::results::RunSummary;
use crate::scenario::{Mode, Scenario};
use crate::sim::{run_scenario, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub template: Scenario,
    pub node_counts: Vec<u32>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign needs at least one {0}")]
    Empty(&'static str),
    #[error("run nodes={nodes} mode={mode} seed={seed} failed")]
    Run {
        nodes: u32,
        mode: Mode,
        seed: u64,
        #[source]
        source: SimError,
    },
}

impl CampaignSpec {
    /// Every cell's scenario, in (nodes, mode, seed) order. Fails on an
    /// empty list or on a cell that does not validate.
    pub fn cells(&self) -> Result<Vec<Scenario>, CampaignError> {
        if self.node_counts.is_empty() {
            return Err(CampaignError::Empty("node count"));
        }
        if self.modes.is_empty() {
            return Err(CampaignError::Empty("mode"));
        }
        if self.seeds.is_empty() {
            return Err(CampaignError::Empty("seed"));
        }
        let mut cells = Vec::new();
        for &nodes in &self.node_counts {
            for &mode in &self.modes {
                for &seed in &self.seeds {
                    let s = Scenario {
                        node_count: nodes,
                        mode,
                        seed,
                        ..self.template.clone()
                    };
                    s.validate().map_err(|e| CampaignError::Run {
                        nodes,
                        mode,
                        seed,
                        source: e.into(),
                    })?;
                    cells.push(s);
                }
            }
        }
        Ok(cells)
    }
}

/// Runs every cell in parallel with a caller-supplied runner, returning the
/// table plus whatever extra the runner produced, in cell order.
pub fn run_campaign_with<T, F>(spec: &CampaignSpec, runner: F) -> Result<(CampaignTable, Vec<(RunSummary, T)>), CampaignError>
where
    T: Send,
    F: Fn(&Scenario) -> Result<(RunSummary, T), SimError> + Sync,
{
    let cells = spec.cells()?;
    let runs: Vec<(RunSummary, T)> = cells
        .par_iter()
        .map(|s| {
            runner(s).map_err(|source| CampaignError::Run {
                nodes: s.node_count,
                mode: s.mode,
                seed: s.seed,
                source,
            })
        })
        .collect::<Result<_, _>>()?;
    let summaries: Vec<RunSummary> = runs.iter().map(|(s, _)| s.clone()).collect();
    Ok((CampaignTable::from_runs(&summaries), runs))
}

pub fn run_campaign(spec: &CampaignSpec) -> Result<(CampaignTable, Vec<RunSummary>), CampaignError> {
    let (table, runs) = run_campaign_with(spec, |s| run_scenario(s, None).map(|r| (r, ())))?;
    Ok((table, runs.into_iter().map(|(r, _)| r).collect()))
}

/// Means over seeds for one density and mode.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRow {
    pub node_count: u32,
    pub mode: Mode,
    pub runs: usize,
    pub pdr: f64,
    /// Over runs that delivered anything.
    pub avg_delay_ms: Option<f64>,
    pub nrl: Option<f64>,
    pub routing_packets: f64,
    pub throughput_pps: f64,
    pub drop_pct: f64,
    pub sent: f64,
    pub received: f64,
    pub dropped_attacker: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CampaignTable {
    pub rows: Vec<CampaignRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "absent".to_string(), |x| format!("{x:.6}"))
}

/// One plot series file per figure: metric name, file name, accessor.
type Figure = (&'static str, fn(&CampaignRow) -> f64);

const FIGURES: [Figure; 5] = [
    ("drop", |r| r.drop_pct),
    ("pdr", |r| r.pdr),
    ("routing_load", |r| r.routing_packets),
    ("throughput", |r| r.throughput_pps),
    ("received", |r| r.received),
];

impl CampaignTable {
    /// Groups runs by (nodes, mode); rows come out sorted by density, then mode.
    pub fn from_runs(runs: &[RunSummary]) -> Self {
        let mut keys: Vec<(u32, Mode)> = runs.iter().map(|r| (r.node_count, r.mode)).collect();
        keys.sort();
        keys.dedup();
        let rows = keys
            .into_iter()
            .map(|(n, mode)| {
                let cell: Vec<&RunSummary> = runs.iter().filter(|r| r.node_count == n && r.mode == mode).collect();
                let m = |f: &dyn Fn(&RunSummary) -> f64| mean(cell.iter().map(|r| f(r))).unwrap_or(0.0);
                CampaignRow {
                    node_count: n,
                    mode,
                    runs: cell.len(),
                    pdr: m(&|r| pdr(&r.counters).ratio),
                    avg_delay_ms: mean(cell.iter().filter_map(|r| avg_delay_ms(&r.counters).value())),
                    nrl: mean(cell.iter().filter_map(|r| nrl(&r.counters).value())),
                    routing_packets: m(&|r| r.counters.routing_packets() as f64),
                    throughput_pps: m(&|r| throughput(&r.counters, r.duration.as_secs_f64(), r.payload_size).packets_per_sec),
                    drop_pct: m(&|r| drop_pct(&r.counters).total_pct),
                    sent: m(&|r| r.counters.sent as f64),
                    received: m(&|r| r.counters.received_unique as f64),
                    dropped_attacker: m(&|r| r.counters.dropped_attacker as f64),
                }
            })
            .collect();
        CampaignTable { rows }
    }

    pub fn row(&self, node_count: u32, mode: Mode) -> Option<&CampaignRow> {
        self.rows.iter().find(|r| r.node_count == node_count && r.mode == mode)
    }

    pub fn densities(&self) -> Vec<u32> {
        let mut d: Vec<u32> = self.rows.iter().map(|r| r.node_count).collect();
        d.dedup();
        d
    }

    pub fn modes(&self) -> Vec<Mode> {
        let mut m: Vec<Mode> = self.rows.iter().map(|r| r.mode).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(
            "nodes\tmode\truns\tpdr\tavg_delay_ms\tnrl\trouting_packets\tthroughput_pps\tdrop_pct\tsent\treceived\tdropped_attacker\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                r.node_count,
                r.mode,
                r.runs,
                r.pdr,
                opt(r.avg_delay_ms),
                opt(r.nrl),
                r.routing_packets,
                r.throughput_pps,
                r.drop_pct,
                r.sent,
                r.received,
                r.dropped_attacker
            );
        }
        out
    }

    /// `(file name, contents)` for each figure: one line per density, one
    /// column per mode.
    pub fn plot_files(&self) -> Vec<(String, String)> {
        let modes = self.modes();
        FIGURES
            .iter()
            .map(|(name, get)| {
                let mut text = String::from("nodes");
                for m in &modes {
                    text += &format!("\t{m}");
                }
                text.push('\n');
                for n in self.densities() {
                    text += &n.to_string();
                    for &m in &modes {
                        match self.row(n, m) {
                            Some(r) => text += &format!("\t{:.6}", get(r)),
                            None => text += "\tabsent",
                        }
                    }
                    text.push('\n');
                }
                (format!("{name}.dat"), text)
            })
            .collect()
    }

    pub fn write_plots(&self, dir: &Path) -> io::Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        self.plot_files()
            .into_iter()
            .map(|(name, text)| {
                let path = dir.join(name);
                std::fs::write(&path, text)?;
                Ok(path)
            })
            .collect()
    }
}
