//! Multipath routing table.
//!
//! Each destination keeps a list of alternatives with distinct next hops,
//! sorted by `(hop_count, learned_at, next_hop)`. The head is the minimum-hop
//! path used for data; the rest are fallbacks with hop counts `>=` the head.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ids::Blacklist;
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathAlternative {
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub learned_at: SimTime,
    /// Who generated the reply (or request) this path was learned from.
    pub advertised_by: NodeId,
}

impl PathAlternative {
    fn sort_key(&self) -> (u32, SimTime, NodeId) {
        (self.hop_count, self.learned_at, self.next_hop)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("no usable path")]
pub struct NoPath;

/// Outcome of offering a freshly learned path to an entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteUpdate {
    /// The entry had no paths; this one is now the head.
    Installed,
    /// Fresher sequence number; every old path was replaced.
    Replaced,
    /// Same sequence number, new next hop.
    Added,
    /// Same sequence number and next hop, fewer hops than before.
    Improved,
    Unchanged,
    /// Older sequence number; rejected.
    Stale,
    /// Longer than what this node already advertised for the same sequence
    /// number; accepting it could close a loop.
    TooLong,
}

impl RouteUpdate {
    pub fn accepted(self) -> bool {
        !matches!(self, RouteUpdate::Stale | RouteUpdate::TooLong)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub dest_seq: u32,
    /// Node whose advertisement set `dest_seq`.
    pub seq_advertiser: NodeId,
    paths: Vec<PathAlternative>,
    /// Hop count this node has advertised for `dest_seq`, if any. Paths
    /// longer than this are refused; that ordering is what keeps routes
    /// loop-free.
    advertised: Option<u32>,
    pub expires_at: SimTime,
    /// Neighbours that have handed us data for this destination.
    pub precursors: BTreeSet<NodeId>,
}

impl RouteEntry {
    pub fn new(destination: NodeId) -> Self {
        RouteEntry {
            destination,
            dest_seq: 0,
            seq_advertiser: destination,
            paths: Vec::new(),
            advertised: None,
            expires_at: SimTime::ZERO,
            precursors: BTreeSet::new(),
        }
    }

    pub fn valid(&self) -> bool {
        !self.paths.is_empty()
    }

    pub fn paths(&self) -> &[PathAlternative] {
        &self.paths
    }

    pub fn head(&self) -> Option<&PathAlternative> {
        self.paths.first()
    }

    fn sort(&mut self) {
        self.paths.sort_by_key(PathAlternative::sort_key);
    }

    pub fn advertised(&self) -> Option<u32> {
        self.advertised
    }

    /// Applies the sequence-number freshness rules:
    /// newer `seq` replaces everything, equal `seq` adds or improves one
    /// next hop (within the advertised bound), older `seq` is rejected.
    pub fn offer(&mut self, seq: u32, alt: PathAlternative) -> RouteUpdate {
        if seq < self.dest_seq {
            return RouteUpdate::Stale;
        }
        if seq == self.dest_seq && self.advertised.is_some_and(|a| alt.hop_count > a) {
            return RouteUpdate::TooLong;
        }
        if seq > self.dest_seq || self.paths.is_empty() {
            let was_empty = self.paths.is_empty();
            if seq > self.dest_seq {
                self.advertised = None;
            }
            self.dest_seq = seq;
            self.seq_advertiser = alt.advertised_by;
            self.paths.clear();
            self.paths.push(alt);
            return if was_empty {
                RouteUpdate::Installed
            } else {
                RouteUpdate::Replaced
            };
        }
        match self.paths.iter_mut().find(|p| p.next_hop == alt.next_hop) {
            Some(existing) if alt.hop_count < existing.hop_count => {
                *existing = alt;
                self.sort();
                RouteUpdate::Improved
            }
            Some(_) => RouteUpdate::Unchanged,
            None => {
                self.paths.push(alt);
                self.sort();
                RouteUpdate::Added
            }
        }
    }

    /// Removes paths through `next_hop`; returns how many were removed.
    pub fn prune_next_hop(&mut self, next_hop: NodeId) -> usize {
        self.retain(|p| p.next_hop != next_hop)
    }

    /// Records that this node is telling neighbours it reaches the
    /// destination in `hops`. Paths longer than that are dropped.
    pub fn advertise(&mut self, hops: u32) -> usize {
        let bound = self.advertised.map_or(hops, |a| a.min(hops));
        self.advertised = Some(bound);
        self.retain(|p| p.hop_count <= bound)
    }

    /// Keeps matching paths. An entry that loses its last path bumps its
    /// sequence number, so the next discovery asks for a fresher route.
    pub fn retain(&mut self, mut keep: impl FnMut(&PathAlternative) -> bool) -> usize {
        let before = self.paths.len();
        self.paths.retain(|p| keep(p));
        if before > 0 && self.paths.is_empty() {
            self.invalidate();
        }
        before - self.paths.len()
    }

    pub fn clear_paths(&mut self) {
        self.retain(|_| false);
    }

    fn invalidate(&mut self) {
        self.dest_seq = self.dest_seq.saturating_add(1);
        self.advertised = None;
    }

    pub fn touch(&mut self, now: SimTime, lifetime: SimDuration) {
        self.expires_at = self.expires_at.max(now + lifetime);
    }
}

/// Lowest-hop alternative whose next hop is not blacklisted. Ties were
/// already broken by the entry's sort order (earliest learned, lowest id).
pub fn select_path<'a>(entry: &'a RouteEntry, blacklist: &Blacklist) -> Result<&'a PathAlternative, NoPath> {
    entry
        .paths
        .iter()
        .find(|p| !blacklist.contains(p.next_hop))
        .ok_or(NoPath)
}

/// Copy of `entry` with every blacklisted next hop removed. The surviving
/// head is the new minimum, never shorter than the old one.
pub fn filter_paths(entry: &RouteEntry, blacklist: &Blacklist) -> RouteEntry {
    let mut out = entry.clone();
    out.retain(|p| !blacklist.contains(p.next_hop));
    out
}

#[derive(Debug, Clone, Default)]
pub struct RoutingTable {
    entries: BTreeMap<NodeId, RouteEntry>,
}

impl RoutingTable {
    pub fn get(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.entries.get(&dest)
    }

    pub fn get_mut(&mut self, dest: NodeId) -> Option<&mut RouteEntry> {
        self.entries.get_mut(&dest)
    }

    pub fn entry(&mut self, dest: NodeId) -> &mut RouteEntry {
        self.entries.entry(dest).or_insert_with(|| RouteEntry::new(dest))
    }

    pub fn remove(&mut self, dest: NodeId) -> Option<RouteEntry> {
        self.entries.remove(&dest)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut RouteEntry> {
        self.entries.values_mut()
    }

    pub fn known_seq(&self, dest: NodeId) -> u32 {
        self.entries.get(&dest).map_or(0, |e| e.dest_seq)
    }

    /// Drops the paths of an entry that has gone unused past its lifetime.
    pub fn expire(&mut self, dest: NodeId, now: SimTime) {
        if let Some(e) = self.entries.get_mut(&dest) {
            if e.valid() && e.expires_at < now {
                e.clear_paths();
            }
        }
    }

    /// Unexpired path to `dest` avoiding blacklisted next hops.
    pub fn lookup(&mut self, dest: NodeId, blacklist: &Blacklist, now: SimTime) -> Result<PathAlternative, NoPath> {
        self.expire(dest, now);
        self.entries
            .get(&dest)
            .ok_or(NoPath)
            .and_then(|e| select_path(e, blacklist).copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alt(next: u32, hops: u32, at_ms: u64) -> PathAlternative {
        PathAlternative {
            next_hop: NodeId(next),
            hop_count: hops,
            learned_at: SimTime::from_micros(at_ms * 1000),
            advertised_by: NodeId(99),
        }
    }

    fn hops(e: &RouteEntry) -> Vec<(u32, u32)> {
        e.paths().iter().map(|p| (p.next_hop.0, p.hop_count)).collect()
    }

    #[test]
    fn first_install() {
        let mut e = RouteEntry::new(NodeId(5));
        assert_eq!(e.offer(1, alt(7, 3, 0)), RouteUpdate::Installed);
        assert_eq!(hops(&e), [(7, 3)]);
    }

    #[test]
    fn equal_hops_keep_earlier_head() {
        let mut e = RouteEntry::new(NodeId(5));
        e.offer(1, alt(7, 3, 0));
        assert_eq!(e.offer(1, alt(9, 3, 1)), RouteUpdate::Added);
        assert_eq!(hops(&e), [(7, 3), (9, 3)]);
    }

    #[test]
    fn fresher_sequence_purges_old_paths() {
        let mut e = RouteEntry::new(NodeId(5));
        e.offer(1, alt(7, 2, 0));
        e.offer(1, alt(8, 3, 0));
        assert_eq!(e.offer(2, alt(9, 6, 1)), RouteUpdate::Replaced);
        assert_eq!(hops(&e), [(9, 6)]);
        assert_eq!(e.dest_seq, 2);
        assert_eq!(e.offer(1, alt(7, 1, 2)), RouteUpdate::Stale);
        assert_eq!(e.dest_seq, 2);
    }

    #[test]
    fn same_next_hop_only_improves() {
        let mut e = RouteEntry::new(NodeId(5));
        e.offer(1, alt(7, 4, 0));
        assert_eq!(e.offer(1, alt(7, 5, 1)), RouteUpdate::Unchanged);
        assert_eq!(e.offer(1, alt(7, 2, 1)), RouteUpdate::Improved);
        assert_eq!(hops(&e), [(7, 2)]);
    }

    #[test]
    fn selection_skips_blacklisted() {
        let mut e = RouteEntry::new(NodeId(5));
        e.offer(1, alt(3, 4, 0));
        e.offer(1, alt(1, 2, 0));
        e.offer(1, alt(2, 3, 0));
        let mut bl = Blacklist::default();
        assert_eq!(select_path(&e, &bl).unwrap().hop_count, 2);
        bl.insert(NodeId(1), SimTime::ZERO, NodeId(50));
        assert_eq!(select_path(&e, &bl).unwrap().hop_count, 3);
        bl.insert(NodeId(2), SimTime::ZERO, NodeId(50));
        bl.insert(NodeId(3), SimTime::ZERO, NodeId(50));
        assert_eq!(select_path(&e, &bl), Err(NoPath));
    }

    #[test]
    fn ties_break_by_learned_then_id() {
        let mut e = RouteEntry::new(NodeId(5));
        e.offer(1, alt(9, 2, 5));
        e.offer(1, alt(4, 2, 5));
        e.offer(1, alt(8, 2, 1));
        assert_eq!(hops(&e), [(8, 2), (4, 2), (9, 2)]);
    }

    #[test]
    fn filter_paths_cases() {
        let mut e = RouteEntry::new(NodeId(5));
        e.offer(1, alt(13, 2, 0));
        e.offer(1, alt(8, 3, 0));
        let mut bl = Blacklist::default();
        assert_eq!(filter_paths(&e, &bl), e);
        bl.insert(NodeId(13), SimTime::ZERO, NodeId(50));
        let f = filter_paths(&e, &bl);
        assert_eq!(hops(&f), [(8, 3)]);
        assert!(f.head().unwrap().hop_count >= e.head().unwrap().hop_count);
        bl.insert(NodeId(8), SimTime::ZERO, NodeId(50));
        assert!(!filter_paths(&e, &bl).valid());
    }

    #[test]
    fn expiry_invalidates_and_bumps_sequence() {
        let mut t = RoutingTable::default();
        let e = t.entry(NodeId(5));
        e.offer(4, alt(1, 2, 0));
        e.touch(SimTime::ZERO, SimDuration::from_secs_f64(10.0));
        let bl = Blacklist::default();
        assert!(t.lookup(NodeId(5), &bl, SimTime::from_secs_f64(9.0)).is_ok());
        assert_eq!(t.lookup(NodeId(5), &bl, SimTime::from_secs_f64(10.5)), Err(NoPath));
        assert_eq!(t.known_seq(NodeId(5)), 5);
    }

    #[test]
    fn advertised_bound_refuses_longer_paths() {
        let mut e = RouteEntry::new(NodeId(5));
        e.offer(1, alt(7, 3, 0));
        e.offer(1, alt(8, 5, 0));
        assert_eq!(e.advertise(3), 1);
        assert_eq!(hops(&e), [(7, 3)]);
        assert_eq!(e.offer(1, alt(9, 4, 1)), RouteUpdate::TooLong);
        assert_eq!(e.offer(1, alt(9, 3, 1)), RouteUpdate::Added);
        // a fresher sequence number lifts the bound
        assert_eq!(e.offer(2, alt(9, 6, 2)), RouteUpdate::Replaced);
        assert_eq!(e.advertised(), None);
    }

    #[test]
    fn losing_the_last_path_bumps_sequence() {
        let mut e = RouteEntry::new(NodeId(5));
        e.offer(3, alt(7, 2, 0));
        e.advertise(2);
        e.offer(3, alt(8, 2, 0));
        e.prune_next_hop(NodeId(7));
        assert_eq!(e.dest_seq, 3);
        e.prune_next_hop(NodeId(8));
        assert_eq!((e.dest_seq, e.advertised()), (4, None));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn invariants_hold_under_any_offer_sequence(
                offers in proptest::collection::vec((0u32..4, 0u32..6, 1u32..10, 0u64..50), 1..60)
            ) {
                let mut e = RouteEntry::new(NodeId(100));
                let mut last_seq = 0;
                for (seq, next, hop, at) in offers {
                    e.offer(seq, alt(next, hop, at));
                    prop_assert!(e.dest_seq >= last_seq);
                    last_seq = e.dest_seq;
                    let p = e.paths();
                    for w in p.windows(2) {
                        prop_assert!(w[0].sort_key() <= w[1].sort_key());
                    }
                    let mut hops: Vec<_> = p.iter().map(|a| a.next_hop).collect();
                    hops.sort();
                    hops.dedup();
                    prop_assert_eq!(hops.len(), p.len());
                    prop_assert!(p.iter().all(|a| a.hop_count >= 1));
                }
            }
        }
    }
}
