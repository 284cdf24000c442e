//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::io::{self, Write};
use std::sync::{Arc, Mutex};

use manet_core::mobility::Point;
use manet_core::traffic::CbrFlow;
use manet_core::{Mode, NodeId, Scenario, SimTime};

/// A motionless world with `n` nodes and no generated traffic worth keeping.
pub fn static_scenario(n: u32, seed: u64, side: f64) -> Scenario {
    Scenario {
        node_count: n,
        width: side,
        height: side,
        v_min: 0.0,
        v_max: 0.0,
        mode: Mode::Normal,
        attacker_count: 1,
        flow_count: 1,
        seed,
        duration: 12.0,
        ..Scenario::default()
    }
}

/// Nodes `spacing` apart on a horizontal line.
pub fn line(n: usize, spacing: f64) -> Vec<Point> {
    (0..n).map(|i| Point::new(50.0 + i as f64 * spacing, 100.0)).collect()
}

/// A single packet from `src` to `dst` sent at `at` seconds.
pub fn one_shot(src: u32, dst: u32, at: f64) -> CbrFlow {
    CbrFlow {
        source: NodeId(src),
        destination: NodeId(dst),
        rate: 1.0,
        payload_size: 512,
        start: SimTime::from_secs_f64(at),
        stop: SimTime::from_secs_f64(at + 0.5),
    }
}

/// A steady flow of `rate` packets per second over `[start, stop)`.
pub fn cbr(src: u32, dst: u32, rate: f64, start: f64, stop: f64) -> CbrFlow {
    CbrFlow {
        source: NodeId(src),
        destination: NodeId(dst),
        rate,
        payload_size: 512,
        start: SimTime::from_secs_f64(start),
        stop: SimTime::from_secs_f64(stop),
    }
}

/// Hop distances from `src` in the unit-disk graph (`d^2 <= r^2`), by BFS.
pub fn bfs(positions: &[Point], range: f64, src: usize) -> Vec<Option<u32>> {
    let n = positions.len();
    let mut dist = vec![None; n];
    dist[src] = Some(0);
    let mut queue = VecDeque::from([src]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if dist[v].is_some() {
                continue;
            }
            let dx = positions[u].x - positions[v].x;
            let dy = positions[u].y - positions[v].y;
            if dx * dx + dy * dy <= range * range {
                dist[v] = Some(dist[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Clonable in-memory trace sink.
#[derive(Clone, Default)]
pub struct Capture(pub Arc<Mutex<Vec<u8>>>);

impl Capture {
    pub fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }

    pub fn boxed(&self) -> Box<dyn Write + Send> {
        Box::new(self.clone())
    }
}

impl Write for Capture {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

pub fn has_repeat(path: &[NodeId]) -> bool {
    let mut seen = std::collections::HashSet::new();
    path.iter().any(|n| !seen.insert(*n))
}
