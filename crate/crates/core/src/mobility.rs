//! Random-waypoint movement and disk-range connectivity.

use crate::rng::RngStream;
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn distance(self, other: Point) -> f64 {
        self.distance_sq(other).sqrt()
    }
}

/// The simulation area `[0, width] x [0, height]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub width: f64,
    pub height: f64,
}

impl Bounds {
    pub fn contains(&self, p: Point) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    pub fn random_point(&self, rng: &mut RngStream) -> Point {
        Point::new(rng.uniform(0.0, self.width), rng.uniform(0.0, self.height))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedRange {
    pub min: f64,
    pub max: f64,
}

impl SpeedRange {
    pub fn is_static(&self) -> bool {
        self.max <= 0.0
    }

    pub fn contains(&self, v: f64) -> bool {
        (self.min..=self.max).contains(&v)
    }
}

/// Movement state of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeKinematics {
    pub position: Point,
    pub waypoint: Point,
    pub speed: f64,
    pub pause_until: SimTime,
}

impl NodeKinematics {
    /// Uniform start position, first waypoint and speed.
    pub fn spawn(bounds: &Bounds, speeds: &SpeedRange, rng: &mut RngStream) -> Self {
        let position = bounds.random_point(rng);
        let waypoint = bounds.random_point(rng);
        let speed = rng.uniform(speeds.min, speeds.max);
        NodeKinematics {
            position,
            waypoint,
            speed,
            pause_until: SimTime::ZERO,
        }
    }

    /// A node that never moves.
    pub fn fixed(position: Point) -> Self {
        NodeKinematics {
            position,
            waypoint: position,
            speed: 0.0,
            pause_until: SimTime::ZERO,
        }
    }
}

/// Advances one node over `[now, now + dt)`.
///
/// On reaching its waypoint the node pauses for `pause`; once the pause has
/// elapsed a new uniform waypoint and speed are drawn and the node sets off.
pub fn step_waypoint(
    k: &NodeKinematics,
    now: SimTime,
    dt: SimDuration,
    bounds: &Bounds,
    speeds: &SpeedRange,
    pause: SimDuration,
    rng: &mut RngStream,
) -> NodeKinematics {
    let mut next = *k;
    if speeds.is_static() {
        return next;
    }
    let end = now + dt;
    let start = now.max(k.pause_until);
    if start >= end {
        return next;
    }
    if next.position == next.waypoint {
        next.waypoint = bounds.random_point(rng);
        next.speed = rng.uniform(speeds.min, speeds.max);
    }

    let available = (end - start).as_secs_f64();
    let remaining = next.position.distance(next.waypoint);
    let travel = next.speed * available;
    if travel >= remaining {
        next.position = next.waypoint;
        let arrival = if next.speed > 0.0 {
            start + SimDuration::from_secs_f64(remaining / next.speed)
        } else {
            start
        };
        next.pause_until = arrival + pause;
    } else {
        let f = travel / remaining;
        next.position = bounds.clamp(Point::new(
            next.position.x + (next.waypoint.x - next.position.x) * f,
            next.position.y + (next.waypoint.y - next.position.y) * f,
        ));
    }
    next
}

/// Symmetric disk-graph neighbourhoods at one instant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    matrix: Vec<bool>,
    neighbors: Vec<Vec<NodeId>>,
}

impl Adjacency {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn are_neighbors(&self, a: NodeId, b: NodeId) -> bool {
        let (a, b) = (a.index(), b.index());
        a < self.n && b < self.n && self.matrix[a * self.n + b]
    }

    /// Sorted by node id.
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.neighbors[node.index()]
    }

    /// Hop distances from `src` by breadth-first search; `None` when unreachable.
    pub fn bfs_hops(&self, src: NodeId) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.n];
        let mut queue = std::collections::VecDeque::new();
        dist[src.index()] = Some(0);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = dist[u.index()].expect("queued nodes have a distance");
            for &v in self.neighbors(u) {
                if dist[v.index()].is_none() {
                    dist[v.index()] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

/// Disk graph over `positions`: `i ~ j` iff `i != j`, both are present and
/// `distance(i, j) <= range` (boundary inclusive, compared on squared distances).
pub fn compute_adjacency(positions: &[Point], range: f64, present: Option<&[bool]>) -> Adjacency {
    let n = positions.len();
    let range_sq = range * range;
    let mut matrix = vec![false; n * n];
    let mut neighbors = vec![Vec::new(); n];
    let here = |i: usize| present.is_none_or(|p| p[i]);
    for i in 0..n {
        if !here(i) {
            continue;
        }
        for j in (i + 1)..n {
            if here(j) && positions[i].distance_sq(positions[j]) <= range_sq {
                matrix[i * n + j] = true;
                matrix[j * n + i] = true;
            }
        }
    }
    for (i, list) in neighbors.iter_mut().enumerate() {
        for j in 0..n {
            if matrix[i * n + j] {
                list.push(NodeId(j as u32));
            }
        }
    }
    Adjacency {
        n,
        matrix,
        neighbors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKind;

    const AREA: Bounds = Bounds {
        width: 800.0,
        height: 800.0,
    };

    #[test]
    fn straight_line_step() {
        let k = NodeKinematics {
            position: Point::new(0.0, 0.0),
            waypoint: Point::new(100.0, 0.0),
            speed: 10.0,
            pause_until: SimTime::ZERO,
        };
        let mut rng = RngStream::new(1, StreamKind::Mobility, 0);
        let speeds = SpeedRange { min: 3.0, max: 30.0 };
        let next = step_waypoint(
            &k,
            SimTime::ZERO,
            SimDuration::from_secs_f64(1.0),
            &AREA,
            &speeds,
            SimDuration::ZERO,
            &mut rng,
        );
        assert_eq!(next.position, Point::new(10.0, 0.0));
    }

    #[test]
    fn arrival_draws_new_waypoint() {
        let p = Point::new(400.0, 400.0);
        let k = NodeKinematics {
            position: p,
            waypoint: p,
            speed: 5.0,
            pause_until: SimTime::ZERO,
        };
        let mut rng = RngStream::new(9, StreamKind::Mobility, 0);
        let speeds = SpeedRange { min: 3.0, max: 30.0 };
        let next = step_waypoint(
            &k,
            SimTime::ZERO,
            SimDuration::from_millis(100),
            &AREA,
            &speeds,
            SimDuration::ZERO,
            &mut rng,
        );
        assert_ne!(next.waypoint, p);
        assert!(AREA.contains(next.waypoint));
        assert!(speeds.contains(next.speed));
    }

    #[test]
    fn pause_holds_position() {
        let p = Point::new(10.0, 10.0);
        let mut k = NodeKinematics::fixed(p);
        k.speed = 10.0;
        k.pause_until = SimTime::from_secs_f64(5.0);
        let mut rng = RngStream::new(2, StreamKind::Mobility, 0);
        let speeds = SpeedRange { min: 3.0, max: 30.0 };
        let next = step_waypoint(
            &k,
            SimTime::from_secs_f64(1.0),
            SimDuration::from_millis(100),
            &AREA,
            &speeds,
            SimDuration::ZERO,
            &mut rng,
        );
        assert_eq!(next, k);
    }

    #[test]
    fn ten_thousand_steps_respect_speed_and_bounds() {
        let speeds = SpeedRange { min: 3.0, max: 30.0 };
        let mut rng = RngStream::new(3, StreamKind::Mobility, 0);
        let mut k = NodeKinematics::spawn(&AREA, &speeds, &mut rng);
        let dt = SimDuration::from_millis(100);
        let mut now = SimTime::ZERO;
        let mut legs = 0;
        for _ in 0..10_000 {
            let prev = k;
            k = step_waypoint(&k, now, dt, &AREA, &speeds, SimDuration::ZERO, &mut rng);
            now += dt;
            assert!(AREA.contains(k.position), "{:?}", k.position);
            assert!(AREA.contains(k.waypoint));
            assert!(speeds.contains(k.speed), "speed {}", k.speed);
            // never faster than the drawn speed over the tick
            assert!(prev.position.distance(k.position) <= k.speed.max(prev.speed) * 0.1 + 1e-9);
            if prev.waypoint != k.waypoint {
                legs += 1;
            }
        }
        assert!(legs > 10);
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let adj = compute_adjacency(&[Point::new(0.0, 0.0), Point::new(250.0, 0.0)], 250.0, None);
        assert!(adj.are_neighbors(NodeId(0), NodeId(1)));
        let adj = compute_adjacency(&[Point::new(0.0, 0.0), Point::new(250.1, 0.0)], 250.0, None);
        assert!(!adj.are_neighbors(NodeId(0), NodeId(1)));
    }

    #[test]
    fn adjacency_matches_pairwise_oracle() {
        let mut rng = RngStream::new(11, StreamKind::Topology, 0);
        for _ in 0..20 {
            let pts: Vec<Point> = (0..20).map(|_| AREA.random_point(&mut rng)).collect();
            let adj = compute_adjacency(&pts, 250.0, None);
            for i in 0..20 {
                for j in 0..20 {
                    let want = i != j && (pts[i].x - pts[j].x).hypot(pts[i].y - pts[j].y) <= 250.0;
                    assert_eq!(adj.are_neighbors(NodeId(i as u32), NodeId(j as u32)), want);
                }
            }
        }
    }

    #[test]
    fn absent_nodes_have_no_links() {
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)];
        let adj = compute_adjacency(&pts, 250.0, Some(&[true, false, true]));
        assert_eq!(adj.neighbors(NodeId(0)), &[NodeId(2)]);
        assert!(adj.neighbors(NodeId(1)).is_empty());
    }

    #[test]
    fn bfs_on_line() {
        let pts: Vec<Point> = (0..5).map(|i| Point::new(200.0 * i as f64, 0.0)).collect();
        let adj = compute_adjacency(&pts, 250.0, None);
        let d = adj.bfs_hops(NodeId(0));
        assert_eq!(d, vec![Some(0), Some(1), Some(2), Some(3), Some(4)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn adjacency_symmetric_and_irreflexive(
                coords in proptest::collection::vec((0.0f64..800.0, 0.0f64..800.0), 1..40),
                range in 50.0f64..400.0,
            ) {
                let pts: Vec<Point> = coords.iter().map(|&(x, y)| Point::new(x, y)).collect();
                let adj = compute_adjacency(&pts, range, None);
                for i in 0..pts.len() {
                    let a = NodeId(i as u32);
                    prop_assert!(!adj.are_neighbors(a, a));
                    for j in 0..pts.len() {
                        let b = NodeId(j as u32);
                        prop_assert_eq!(adj.are_neighbors(a, b), adj.are_neighbors(b, a));
                    }
                }
            }

            #[test]
            fn steps_stay_in_bounds(seed in 0u64..1000, pause_ms in 0u64..3000) {
                let speeds = SpeedRange { min: 3.0, max: 30.0 };
                let mut rng = RngStream::new(seed, StreamKind::Mobility, 0);
                let mut k = NodeKinematics::spawn(&AREA, &speeds, &mut rng);
                let dt = SimDuration::from_millis(100);
                let mut now = SimTime::ZERO;
                for _ in 0..500 {
                    k = step_waypoint(&k, now, dt, &AREA, &speeds, SimDuration::from_millis(pause_ms), &mut rng);
                    now += dt;
                    prop_assert!(AREA.contains(k.position));
                    prop_assert!(speeds.contains(k.speed));
                }
            }
        }
    }
}
