mod common;

use std::collections::{BTreeSet, HashSet};

use common::{cbr, static_scenario, Capture};
use manet_core::{run_scenario, Mode, NodeId, Scenario, SimTime, Simulation};

/// Follows heads from `from` toward `to`; the number of hops taken, if the
/// walk arrives without revisiting a node.
fn walk(sim: &Simulation, from: NodeId, to: NodeId) -> Option<u32> {
    let mut at = from;
    let mut seen = HashSet::from([at]);
    let mut hops = 0;
    while at != to {
        let next = sim.node(at).table.get(to)?.head()?.next_hop;
        if !sim.adjacency().are_neighbors(at, next) || !seen.insert(next) {
            return None;
        }
        at = next;
        hops += 1;
    }
    Some(hops)
}

#[test]
fn settled_paths_are_sound_and_first_hop_disjoint() {
    for t in 0..20u64 {
        let n = 8 + (t % 5) as u32;
        let s = static_scenario(n, 2000 + t, 600.0);
        let flows = (0..n)
            .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| cbr(a, b, 1.0, 1.0, 3.0)))
            .collect();
        let mut sim = Simulation::builder().flows(flows).build(s).unwrap();
        sim.run_until(SimTime::from_secs_f64(4.0));
        for node in sim.nodes() {
            for e in node.table.iter().filter(|e| e.valid()) {
                let hops: BTreeSet<NodeId> = e.paths().iter().map(|p| p.next_hop).collect();
                assert_eq!(hops.len(), e.paths().len(), "topology {t}: duplicate first hop");
                let head = e.head().unwrap();
                assert_eq!(
                    walk(&sim, node.id, e.destination),
                    Some(head.hop_count),
                    "topology {t}: head walk {} -> {}",
                    node.id,
                    e.destination
                );
                for p in e.paths() {
                    let rest = walk(&sim, p.next_hop, e.destination).map(|h| h + 1);
                    assert!(
                        rest.is_some_and(|h| h <= p.hop_count),
                        "topology {t}: {} -> {} via {} claims {} hops, walk gives {rest:?}",
                        node.id,
                        e.destination,
                        p.next_hop,
                        p.hop_count
                    );
                }
            }
        }
    }
}

#[test]
fn nobody_hands_data_to_a_node_it_has_blacklisted() {
    for seed in 1..=6 {
        let s = Scenario {
            node_count: 30,
            mode: Mode::Ids,
            seed,
            duration: 60.0,
            ..Scenario::default()
        };
        let cap = Capture::default();
        run_scenario(&s, Some(cap.boxed())).unwrap();
        let mut listed: HashSet<(String, String)> = HashSet::new();
        let mut blk_lines = 0;
        for line in cap.text().lines().filter(|l| !l.starts_with('#')) {
            let c: Vec<&str> = line.split(' ').collect();
            match c[1] {
                "blk" => {
                    blk_lines += 1;
                    listed.insert((c[2].to_string(), c[3].to_string()));
                }
                "fwd" => assert!(
                    !listed.contains(&(c[2].to_string(), c[3].to_string())),
                    "seed {seed}: {line}"
                ),
                _ => {}
            }
        }
        if seed == 1 {
            assert!(blk_lines > 0);
        }
    }
}
