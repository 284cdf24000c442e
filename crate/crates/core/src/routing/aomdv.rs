//! Protocol handlers for honest nodes. Black holes divert to `adversary`.

use crate::adversary;
use crate::node::{Action, Ctx, DropCause, NodeState, Role};
use crate::routing::message::{Alert, ControlMessage, Rerr, Rrep, Rreq};
use crate::routing::table::{PathAlternative, RouteUpdate};
use crate::time::SimTime;
use crate::traffic::DataPacket;
use crate::NodeId;

fn learned(update: RouteUpdate) -> bool {
    matches!(
        update,
        RouteUpdate::Installed | RouteUpdate::Replaced | RouteUpdate::Added | RouteUpdate::Improved
    )
}

impl NodeState {
    pub fn handle_control(&mut self, ctx: &Ctx, from: NodeId, msg: ControlMessage, out: &mut Vec<Action>) {
        if self.role == Role::Blackhole {
            adversary::blackhole_control(self, ctx, from, msg, out);
            return;
        }
        match msg {
            ControlMessage::Rreq(m) => self.handle_rreq(ctx, from, m, out),
            ControlMessage::Rrep(m) => self.handle_rrep(ctx, from, m, out),
            ControlMessage::Rerr(m) => self.handle_rerr(ctx, from, m, out),
            ControlMessage::Alert(m) => self.handle_alert(ctx, from, m, out),
        }
    }

    /// Starts (or retries) a discovery for `dest`: bumps the own sequence
    /// number, floods a request and arms the timeout.
    pub fn originate_discovery(&mut self, ctx: &Ctx, dest: NodeId, out: &mut Vec<Action>) {
        let attempt = {
            let d = self.discoveries.entry(dest).or_default();
            d.attempts += 1;
            d.attempts
        };
        self.own_seq += 1;
        let broadcast_id = self.take_broadcast_id();
        self.mark_seen(self.id, broadcast_id, 0, ctx);
        out.push(Action::Broadcast(ControlMessage::Rreq(Rreq {
            origin: self.id,
            broadcast_id,
            target: dest,
            hop_count: 0,
            origin_seq: self.own_seq,
            dest_seq: self.table.known_seq(dest),
        })));
        out.push(Action::ArmTimer {
            dest,
            attempt,
            after: ctx.params.discovery_wait(attempt),
        });
    }

    pub fn handle_rreq(&mut self, ctx: &Ctx, from: NodeId, rreq: Rreq, out: &mut Vec<Action>) {
        if self.role == Role::Blackhole {
            adversary::blackhole_rreq(self, ctx, from, rreq, out);
            return;
        }
        if rreq.origin == self.id || self.blacklist.contains(from) || self.blacklist.contains(rreq.origin) {
            return;
        }
        let hops = rreq.hop_count + 1;

        // Every copy from a distinct neighbour is a candidate reverse path.
        let entry = self.table.entry(rreq.origin);
        let update = entry.offer(
            rreq.origin_seq,
            PathAlternative {
                next_hop: from,
                hop_count: hops,
                learned_at: ctx.now,
                advertised_by: rreq.origin,
            },
        );
        if update.accepted() {
            entry.touch(ctx.now, ctx.params.active_route_lifetime);
        }
        if learned(update) {
            self.route_available(ctx, rreq.origin, out);
        }

        let first = self.mark_seen(rreq.origin, rreq.broadcast_id, hops, ctx);
        let key = (rreq.origin, rreq.broadcast_id);

        if rreq.target == self.id {
            self.own_seq = self.own_seq.max(rreq.dest_seq);
            let seen = self.seen.get_mut(&key).expect("flood was just marked");
            let answer = seen.replied.get(&from).is_none_or(|&h| hops < h);
            if answer {
                seen.replied.insert(from, hops);
                out.push(Action::Unicast(
                    from,
                    ControlMessage::Rrep(Rrep {
                        origin: rreq.origin,
                        target: self.id,
                        hop_count: 0,
                        dest_seq: self.own_seq,
                        responder: self.id,
                    }),
                ));
            }
            return;
        }

        if hops >= ctx.params.data_ttl {
            return;
        }
        // Rebroadcast the first copy, and again whenever a strictly shorter
        // copy turns up so downstream nodes learn minimum-hop reverse paths.
        let rebroadcast = if first {
            true
        } else {
            let seen = self.seen.get_mut(&key).expect("flood was seen");
            if hops < seen.best_hops {
                seen.best_hops = hops;
                true
            } else {
                false
            }
        };
        if rebroadcast {
            // An older flood than our reverse route is relayed as is; it
            // says nothing about the sequence number we hold. Otherwise we
            // advertise the route we actually have.
            let hop_count = match update {
                RouteUpdate::Stale => hops,
                u if learned(u) => hops,
                _ => self
                    .table
                    .lookup(rreq.origin, &self.blacklist, ctx.now)
                    .map_or(hops, |p| p.hop_count),
            };
            if update != RouteUpdate::Stale {
                self.table.entry(rreq.origin).advertise(hop_count);
            }
            out.push(Action::Broadcast(ControlMessage::Rreq(Rreq {
                hop_count,
                dest_seq: rreq.dest_seq.max(self.table.known_seq(rreq.target)),
                ..rreq
            })));
        }
    }

    pub fn handle_rrep(&mut self, ctx: &Ctx, from: NodeId, rrep: Rrep, out: &mut Vec<Action>) {
        if self.blacklist.contains(from) || self.blacklist.contains(rrep.responder) || rrep.target == self.id {
            return;
        }
        let hops = rrep.hop_count + 1;
        let entry = self.table.entry(rrep.target);
        let update = entry.offer(
            rrep.dest_seq,
            PathAlternative {
                next_hop: from,
                hop_count: hops,
                learned_at: ctx.now,
                advertised_by: rrep.responder,
            },
        );
        if learned(update) {
            entry.touch(ctx.now, ctx.params.active_route_lifetime);
            self.route_available(ctx, rrep.target, out);
        }
        if rrep.origin == self.id {
            return;
        }
        // Pass on what this copy taught us; if it taught nothing (another
        // origin's reply over a known path, or an older one), vouch for our
        // own best route instead.
        let (hop_count, responder) = if learned(update) {
            (hops, rrep.responder)
        } else {
            match self.table.lookup(rrep.target, &self.blacklist, ctx.now) {
                Ok(best) => (best.hop_count, best.advertised_by),
                Err(_) => {
                    out.push(Action::StaleReply);
                    return;
                }
            }
        };
        if hop_count >= ctx.params.data_ttl {
            out.push(Action::StaleReply);
            return;
        }
        let Ok(back) = self.table.lookup(rrep.origin, &self.blacklist, ctx.now) else {
            out.push(Action::StaleReply);
            return;
        };
        let e = self.table.entry(rrep.target);
        e.advertise(hop_count);
        e.precursors.insert(back.next_hop);
        let dest_seq = e.dest_seq;
        out.push(Action::Unicast(
            back.next_hop,
            ControlMessage::Rrep(Rrep {
                hop_count,
                dest_seq,
                responder,
                ..rrep
            }),
        ));
    }

    pub fn handle_rerr(&mut self, _ctx: &Ctx, from: NodeId, rerr: Rerr, out: &mut Vec<Action>) {
        if self.blacklist.contains(from) {
            return;
        }
        let mut lost = Vec::new();
        for (dest, _) in rerr.unreachable {
            if let Some(e) = self.table.get_mut(dest) {
                if e.prune_next_hop(from) > 0 && !e.valid() && !e.precursors.is_empty() {
                    e.precursors.clear();
                    lost.push((dest, e.dest_seq));
                }
            }
        }
        if !lost.is_empty() {
            out.push(Action::Broadcast(ControlMessage::Rerr(Rerr { unreachable: lost })));
        }
    }

    /// The link to `dead` failed: prune every path through it and tell
    /// precursors about destinations that became unreachable.
    pub fn handle_link_break(&mut self, _ctx: &Ctx, dead: NodeId, out: &mut Vec<Action>) {
        let mut lost = Vec::new();
        for e in self.table.iter_mut() {
            e.precursors.remove(&dead);
            if e.prune_next_hop(dead) > 0 && !e.valid() && !e.precursors.is_empty() {
                e.precursors.clear();
                lost.push((e.destination, e.dest_seq));
            }
        }
        if !lost.is_empty() {
            out.push(Action::Broadcast(ControlMessage::Rerr(Rerr { unreachable: lost })));
        }
    }

    /// Routes a data packet held by this node: deliver, hand off along the
    /// best non-blacklisted path, or park it and discover.
    pub fn forward_data(&mut self, ctx: &Ctx, pkt: DataPacket, out: &mut Vec<Action>) {
        if pkt.destination == self.id {
            out.push(Action::Deliver(pkt));
            return;
        }
        if self.role == Role::Blackhole && pkt.source != self.id {
            adversary::blackhole_data(pkt, out);
            return;
        }
        if pkt.ttl == 0 {
            out.push(Action::Drop(pkt, DropCause::Ttl));
            return;
        }
        match self.table.lookup(pkt.destination, &self.blacklist, ctx.now) {
            Ok(path) => {
                self.table
                    .entry(pkt.destination)
                    .touch(ctx.now, ctx.params.active_route_lifetime);
                out.push(Action::Handoff(path.next_hop, pkt));
            }
            Err(_) => {
                // A relay without a route tells upstream to stop using it,
                // then tries to repair locally.
                if pkt.source != self.id {
                    let dest = pkt.destination;
                    out.push(Action::Broadcast(ControlMessage::Rerr(Rerr {
                        unreachable: vec![(dest, self.table.known_seq(dest))],
                    })));
                }
                self.enqueue(ctx, pkt, out)
            }
        }
    }

    fn enqueue(&mut self, ctx: &Ctx, pkt: DataPacket, out: &mut Vec<Action>) {
        let dest = pkt.destination;
        let fresh = !self.discoveries.contains_key(&dest);
        let d = self.discoveries.entry(dest).or_default();
        if d.buffer.len() >= ctx.params.buffer_capacity {
            if let Some(old) = d.buffer.pop_front() {
                out.push(Action::Drop(old, DropCause::Buffer));
            }
        }
        if ctx.params.buffer_capacity > 0 {
            d.buffer.push_back(pkt);
        } else {
            out.push(Action::Drop(pkt, DropCause::Buffer));
        }
        if fresh {
            self.originate_discovery(ctx, dest, out);
        }
    }

    /// Flushes the discovery buffer for `dest` if a usable path now exists.
    fn route_available(&mut self, ctx: &Ctx, dest: NodeId, out: &mut Vec<Action>) {
        if !self.discoveries.contains_key(&dest) || self.table.lookup(dest, &self.blacklist, ctx.now).is_err() {
            return;
        }
        let d = self.discoveries.remove(&dest).expect("checked above");
        out.push(Action::DisarmTimer { dest });
        for pkt in d.buffer {
            self.forward_data(ctx, pkt, out);
        }
    }

    /// Discovery timer for `attempt` fired. Stale timers are ignored.
    pub fn on_discovery_timeout(&mut self, ctx: &Ctx, dest: NodeId, attempt: u32, out: &mut Vec<Action>) {
        let Some(d) = self.discoveries.get(&dest) else { return };
        if d.attempts != attempt {
            return;
        }
        if self.table.lookup(dest, &self.blacklist, ctx.now).is_ok() {
            self.route_available(ctx, dest, out);
            return;
        }
        if d.attempts < ctx.params.retry_limit {
            self.originate_discovery(ctx, dest, out);
            return;
        }
        let d = self.discoveries.remove(&dest).expect("checked above");
        out.push(Action::DiscoveryFailed { dest, attempts: d.attempts });
        for pkt in d.buffer {
            out.push(Action::Drop(pkt, DropCause::NoRoute));
        }
    }

    /// Removes `subject` from routing: paths through it, paths it advertised,
    /// and entries whose sequence number only it vouched for.
    fn purge_subject(&mut self, subject: NodeId, out: &mut Vec<Action>) {
        self.table.remove(subject);
        let mut lost = Vec::new();
        let mut forget = Vec::new();
        for e in self.table.iter_mut() {
            e.precursors.remove(&subject);
            let removed = e.retain(|p| p.next_hop != subject && p.advertised_by != subject);
            if removed > 0 && !e.valid() && !e.precursors.is_empty() {
                lost.push((e.destination, e.dest_seq));
            }
            if e.seq_advertiser == subject {
                match e.head() {
                    Some(h) => e.seq_advertiser = h.advertised_by,
                    None => forget.push(e.destination),
                }
            }
        }
        for dest in forget {
            self.table.remove(dest);
        }
        if !lost.is_empty() {
            out.push(Action::Broadcast(ControlMessage::Rerr(Rerr { unreachable: lost })));
        }
    }

    fn blacklist_subject(&mut self, now: SimTime, subject: NodeId, detector: NodeId, out: &mut Vec<Action>) -> bool {
        if subject == self.id || !self.blacklist.insert(subject, now, detector) {
            return false;
        }
        out.push(Action::Blacklisted { subject, detector });
        self.purge_subject(subject, out);
        true
    }

    /// A monitor's own detection: blacklist locally and flood an alert.
    pub fn raise_alert(&mut self, ctx: &Ctx, subject: NodeId, out: &mut Vec<Action>) -> bool {
        if !self.blacklist_subject(ctx.now, subject, self.id, out) {
            return false;
        }
        self.flood_alert(ctx, subject, out);
        true
    }

    /// Floods a fresh alert for a subject this node already lists. Monitors
    /// do this when traffic keeps reaching the subject, which means some
    /// nodes missed the earlier floods.
    pub fn reissue_alert(&mut self, ctx: &Ctx, subject: NodeId, out: &mut Vec<Action>) {
        if self.blacklist.contains(subject) {
            self.flood_alert(ctx, subject, out);
        }
    }

    fn flood_alert(&mut self, ctx: &Ctx, subject: NodeId, out: &mut Vec<Action>) {
        let broadcast_id = self.take_broadcast_id();
        self.mark_seen(self.id, broadcast_id, 0, ctx);
        out.push(Action::Broadcast(ControlMessage::Alert(Alert {
            origin: self.id,
            broadcast_id,
            subject,
        })));
    }

    /// Each alert flood is relayed once per node, whether or not the node
    /// already knew the subject.
    pub fn handle_alert(&mut self, ctx: &Ctx, _from: NodeId, alert: Alert, out: &mut Vec<Action>) {
        if alert.origin == self.id || !self.mark_seen(alert.origin, alert.broadcast_id, 0, ctx) {
            return;
        }
        self.blacklist_subject(ctx.now, alert.subject, alert.origin, out);
        if alert.subject != self.id {
            out.push(Action::Broadcast(ControlMessage::Alert(alert)));
        }
    }
}
