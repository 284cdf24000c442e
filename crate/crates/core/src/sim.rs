//! The simulated world: nodes, mobility, channel, traffic and monitors,
//! driven by one event queue.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{self, Write};

use thiserror::Error;

use crate::engine::{EventHandle, EventQueue};
use crate::ids::{AuditLedger, Handoff, Vantage, Verdict};
use crate::metrics::MetricsLedger;
use crate::mobility::{compute_adjacency, step_waypoint, Adjacency, Bounds, NodeKinematics, Point, SpeedRange};
use crate::node::{Action, Ctx, NodeState, ProtocolParams, Role};
use crate::results::RunSummary;
use crate::rng::{RngStream, StreamKind};
use crate::routing::message::{ControlKind, ControlMessage};
use crate::scenario::{ConfigError, Mode, Scenario};
use crate::time::{SimDuration, SimTime};
use crate::trace::{TraceEvent, TraceRecord, TraceWriter};
use crate::traffic::{CbrFlow, Channel, DataPacket, PacketId, Sink, SinkOutcome};
use crate::NodeId;

#[derive(Debug, Clone)]
pub enum Payload {
    Control(ControlMessage),
    Data(DataPacket),
}

#[derive(Debug, Clone)]
pub enum Event {
    MobilityTick,
    Arrival { from: NodeId, to: NodeId, payload: Payload },
    Emit { flow: u32, seq: u32 },
    DiscoveryTimeout { node: NodeId, dest: NodeId, attempt: u32 },
    AuditTick,
    MetricsTick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Detection {
    pub time: SimTime,
    pub monitor: NodeId,
    pub subject: NodeId,
    pub handed_off: u32,
    pub confirmed: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscoveryFailure {
    pub time: SimTime,
    pub node: NodeId,
    pub dest: NodeId,
    pub attempts: u32,
}

/// A data handoff to an attacker, with the distance from each monitor at
/// that instant. Recorded so detection coverage can be checked from outside.
#[derive(Debug, Clone, PartialEq)]
pub struct Sighting {
    pub time: SimTime,
    pub sender: NodeId,
    pub subject: NodeId,
    pub monitor_distances: Vec<(NodeId, f64)>,
}

#[derive(Debug, Clone)]
pub struct Monitor {
    pub node: NodeId,
    pub ledger: AuditLedger,
    /// Handoff evidence per subject at the time of the last alert flood.
    pub alerted: BTreeMap<NodeId, u32>,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace output failed: {0}")]
    Io(#[from] io::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Optional overrides for building a run, mostly for fixtures.
#[derive(Default)]
pub struct SimulationBuilder {
    positions: Option<Vec<Point>>,
    flows: Option<Vec<CbrFlow>>,
    attackers: Option<Vec<NodeId>>,
    trace: Option<Box<dyn Write + Send>>,
}

impl SimulationBuilder {
    /// Initial positions for every node (including monitors).
    pub fn positions(mut self, p: Vec<Point>) -> Self {
        self.positions = Some(p);
        self
    }

    pub fn flows(mut self, f: Vec<CbrFlow>) -> Self {
        self.flows = Some(f);
        self
    }

    pub fn attackers(mut self, a: Vec<NodeId>) -> Self {
        self.attackers = Some(a);
        self
    }

    pub fn trace(mut self, out: Box<dyn Write + Send>) -> Self {
        self.trace = Some(out);
        self
    }

    pub fn build(self, scenario: Scenario) -> Result<Simulation, SimError> {
        Simulation::build(scenario, self)
    }
}

pub struct Simulation {
    scenario: Scenario,
    params: ProtocolParams,
    end: SimTime,
    queue: EventQueue<Event>,
    nodes: Vec<NodeState>,
    kinematics: Vec<NodeKinematics>,
    mobility_rngs: Vec<RngStream>,
    join_at: Vec<SimTime>,
    present: Vec<bool>,
    positions: Vec<Point>,
    adjacency: Adjacency,
    bounds: Bounds,
    speeds: SpeedRange,
    channel: Channel,
    flows: Vec<CbrFlow>,
    sink: Sink,
    monitors: Vec<Monitor>,
    attackers: Vec<NodeId>,
    timers: HashMap<(NodeId, NodeId), EventHandle>,
    ledger: MetricsLedger,
    trace: Option<TraceWriter>,
    detections: Vec<Detection>,
    discovery_failures: Vec<DiscoveryFailure>,
    sightings: Vec<Sighting>,
    delivered_paths: Vec<(PacketId, Vec<NodeId>)>,
}

/// Draws attackers and flows from the topology and traffic streams. The
/// attacker draw happens in every mode so that flows match across modes.
fn plan(s: &Scenario) -> (Vec<NodeId>, Vec<CbrFlow>) {
    let ids: Vec<NodeId> = (0..s.node_count).map(NodeId).collect();
    let mut topo = RngStream::new(s.seed, StreamKind::Topology, 0);
    let mut drawn = topo.sample(&ids, s.attacker_count as usize);
    drawn.sort();
    let honest: Vec<NodeId> = ids.iter().copied().filter(|n| !drawn.contains(n)).collect();

    let mut traffic = RngStream::new(s.seed, StreamKind::Traffic, 0);
    let sources = traffic.sample(&honest, s.flow_count as usize);
    let stop = SimTime::from_secs_f64(s.duration);
    let flows = sources
        .into_iter()
        .map(|source| {
            let others: Vec<NodeId> = honest.iter().copied().filter(|&n| n != source).collect();
            let destination = others[traffic.index(others.len())];
            let start = SimTime::from_secs_f64(traffic.uniform(s.flow_start_min, s.flow_start_max));
            CbrFlow {
                source,
                destination,
                rate: s.cbr_rate,
                payload_size: s.payload_size,
                start,
                stop,
            }
        })
        .collect();
    let attackers = if s.mode == Mode::Normal { Vec::new() } else { drawn };
    (attackers, flows)
}

fn join_list(ids: &[NodeId]) -> String {
    ids.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        Self::build(scenario, SimulationBuilder::default())
    }

    pub fn builder() -> SimulationBuilder {
        SimulationBuilder::default()
    }

    fn build(scenario: Scenario, opts: SimulationBuilder) -> Result<Self, SimError> {
        scenario.validate()?;
        let s = &scenario;
        let total = s.total_nodes() as usize;
        let (mut attackers, mut flows) = plan(s);
        if let Some(a) = opts.attackers {
            attackers = a;
        }
        if let Some(f) = opts.flows {
            flows = f;
        }
        let bounds = Bounds {
            width: s.width,
            height: s.height,
        };
        let speeds = SpeedRange { min: s.v_min, max: s.v_max };

        let mut nodes = Vec::with_capacity(total);
        let mut kinematics = Vec::with_capacity(total);
        let mut mobility_rngs = Vec::with_capacity(total);
        for i in 0..total {
            let id = NodeId(i as u32);
            let role = if i >= s.node_count as usize {
                Role::IdsMonitor
            } else if attackers.contains(&id) {
                Role::Blackhole
            } else {
                Role::Normal
            };
            nodes.push(NodeState::new(id, role));
            let mut rng = RngStream::new(s.seed, StreamKind::Mobility, i as u32);
            let k = match &opts.positions {
                Some(p) => NodeKinematics::fixed(p[i]),
                None => NodeKinematics::spawn(&bounds, &speeds, &mut rng),
            };
            kinematics.push(k);
            mobility_rngs.push(rng);
        }

        let mut join_rng = RngStream::new(s.seed, StreamKind::Topology, 1);
        let join_at: Vec<SimTime> = (0..total)
            .map(|_| {
                if s.staggered_join {
                    SimTime::from_secs_f64(join_rng.uniform(0.0, s.join_window))
                } else {
                    SimTime::ZERO
                }
            })
            .collect();
        let present: Vec<bool> = join_at.iter().map(|&t| t == SimTime::ZERO).collect();
        let positions: Vec<Point> = kinematics.iter().map(|k| k.position).collect();
        let adjacency = compute_adjacency(&positions, s.range, Some(&present));
        let monitors = nodes
            .iter()
            .filter(|n| n.role == Role::IdsMonitor)
            .map(|n| Monitor {
                node: n.id,
                ledger: AuditLedger::default(),
                alerted: BTreeMap::new(),
            })
            .collect();
        let channel = Channel::new(
            SimDuration::from_secs_f64(s.per_hop_latency),
            SimDuration::from_secs_f64(s.jitter),
            RngStream::new(s.seed, StreamKind::Jitter, 0),
        );

        let mut sim = Simulation {
            params: s.protocol_params(),
            end: SimTime::from_secs_f64(s.duration),
            queue: EventQueue::new(),
            nodes,
            kinematics,
            mobility_rngs,
            join_at,
            present,
            positions,
            adjacency,
            bounds,
            speeds,
            channel,
            flows,
            sink: Sink::default(),
            monitors,
            attackers,
            timers: HashMap::new(),
            ledger: MetricsLedger::default(),
            trace: opts.trace.map(TraceWriter::new),
            detections: Vec::new(),
            discovery_failures: Vec::new(),
            sightings: Vec::new(),
            delivered_paths: Vec::new(),
            scenario,
        };
        sim.write_header();
        sim.schedule_initial();
        Ok(sim)
    }

    fn write_header(&mut self) {
        let Some(t) = self.trace.as_mut() else { return };
        let s = &self.scenario;
        t.header("manet-sim trace");
        t.header(&format!(
            "nodes={} total={} mode={} seed={} duration={} payload={} range={}",
            s.node_count,
            s.total_nodes(),
            s.mode,
            s.seed,
            SimTime::from_secs_f64(s.duration),
            s.payload_size,
            s.range
        ));
        let monitors: Vec<NodeId> = self.monitors.iter().map(|m| m.node).collect();
        t.header(&format!("attackers={} monitors={}", join_list(&self.attackers), join_list(&monitors)));
        let flows: Vec<String> = self
            .flows
            .iter()
            .map(|f| format!("{}>{}@{}", f.source, f.destination, f.start))
            .collect();
        t.header(&format!("flows={}", flows.join(",")));
    }

    fn schedule_initial(&mut self) {
        let s = self.scenario.clone();
        let tick = SimDuration::from_secs_f64(s.mobility_tick);
        if (!self.speeds.is_static() || s.staggered_join) && SimTime::ZERO + tick <= self.end {
            self.schedule(SimTime::ZERO + tick, Event::MobilityTick);
        }
        if !self.monitors.is_empty() && SimTime::from_secs_f64(s.audit_interval) <= self.end {
            self.schedule(SimTime::from_secs_f64(s.audit_interval), Event::AuditTick);
        }
        let metrics_at = SimTime::from_secs_f64(s.metrics_interval);
        if metrics_at < self.end {
            self.schedule(metrics_at, Event::MetricsTick);
        }
        for (i, f) in self.flows.clone().iter().enumerate() {
            let t = f.emission_time(0);
            if t < f.stop && t <= self.end {
                self.schedule(t, Event::Emit { flow: i as u32, seq: 0 });
            }
        }
    }

    /// Events past the end stay queued unprocessed; data arrivals among
    /// them still count as in flight.
    fn schedule(&mut self, at: SimTime, ev: Event) {
        self.queue.schedule(at, ev).expect("simulator never schedules into the past");
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn end(&self) -> SimTime {
        self.end
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id.index()]
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn flows(&self) -> &[CbrFlow] {
        &self.flows
    }

    pub fn attackers(&self) -> &[NodeId] {
        &self.attackers
    }

    pub fn monitors(&self) -> &[Monitor] {
        &self.monitors
    }

    pub fn ledger(&self) -> &MetricsLedger {
        &self.ledger
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn discovery_failures(&self) -> &[DiscoveryFailure] {
        &self.discovery_failures
    }

    pub fn sightings(&self) -> &[Sighting] {
        &self.sightings
    }

    /// Hop-by-hop node lists of every delivered packet.
    pub fn delivered_paths(&self) -> &[(PacketId, Vec<NodeId>)] {
        &self.delivered_paths
    }

    pub fn events_processed(&self) -> u64 {
        self.queue.processed()
    }

    /// Packets in flight counted from the world itself: data in transit on
    /// the channel plus data parked in discovery buffers.
    pub fn in_flight_structural(&self) -> u64 {
        let on_air = self
            .queue
            .pending()
            .filter(|e| matches!(e, Event::Arrival { payload: Payload::Data(_), .. }))
            .count();
        let buffered: usize = self.nodes.iter().map(NodeState::buffered).sum();
        (on_air + buffered) as u64
    }

    /// Processes every event up to `t` (capped at the scenario end).
    pub fn run_until(&mut self, t: SimTime) {
        let t = t.min(self.end);
        while let Some((now, ev)) = self.queue.pop_due(t) {
            self.dispatch(now, ev);
        }
        self.queue.advance_to(t);
    }

    pub fn run(&mut self) {
        self.run_until(self.end);
    }

    fn record(&mut self, event: TraceEvent) {
        if let Some(t) = self.trace.as_mut() {
            t.record(&TraceRecord {
                time: self.queue.now(),
                event,
            });
        }
    }

    fn dispatch(&mut self, now: SimTime, ev: Event) {
        match ev {
            Event::MobilityTick => self.mobility_tick(now),
            Event::Arrival { from, to, payload } => {
                let ctx = Ctx {
                    now,
                    params: &self.params,
                };
                let mut out = Vec::new();
                let node = &mut self.nodes[to.index()];
                match payload {
                    Payload::Control(msg) => node.handle_control(&ctx, from, msg, &mut out),
                    Payload::Data(mut pkt) => {
                        pkt.visited.push(to);
                        if pkt.destination != to {
                            node.table.entry(pkt.destination).precursors.insert(from);
                        }
                        node.forward_data(&ctx, pkt, &mut out);
                    }
                }
                self.execute(to, out);
            }
            Event::Emit { flow, seq } => self.emit(now, flow, seq),
            Event::DiscoveryTimeout { node, dest, attempt } => {
                self.timers.remove(&(node, dest));
                let ctx = Ctx {
                    now,
                    params: &self.params,
                };
                let mut out = Vec::new();
                self.nodes[node.index()].on_discovery_timeout(&ctx, dest, attempt, &mut out);
                self.execute(node, out);
            }
            Event::AuditTick => self.audit_tick(now),
            Event::MetricsTick => {
                self.ledger.snapshot(now);
                let next = now + SimDuration::from_secs_f64(self.scenario.metrics_interval);
                if next < self.end {
                    self.schedule(next, Event::MetricsTick);
                }
            }
        }
    }

    fn mobility_tick(&mut self, now: SimTime) {
        let tick = SimDuration::from_secs_f64(self.scenario.mobility_tick);
        let pause = SimDuration::from_secs_f64(self.scenario.pause);
        let from = SimTime::from_micros(now.as_micros().saturating_sub(tick.as_micros()));
        for i in 0..self.kinematics.len() {
            if !self.present[i] {
                if self.join_at[i] <= now {
                    self.present[i] = true;
                }
                continue;
            }
            self.kinematics[i] = step_waypoint(
                &self.kinematics[i],
                from,
                now - from,
                &self.bounds,
                &self.speeds,
                pause,
                &mut self.mobility_rngs[i],
            );
            self.positions[i] = self.kinematics[i].position;
        }
        self.adjacency = compute_adjacency(&self.positions, self.scenario.range, Some(&self.present));
        if now + tick <= self.end {
            self.schedule(now + tick, Event::MobilityTick);
        }
    }

    fn emit(&mut self, now: SimTime, flow: u32, seq: u32) {
        let f = self.flows[flow as usize];
        let next = f.emission_time(seq + 1);
        if next < f.stop && next <= self.end {
            self.schedule(next, Event::Emit { flow, seq: seq + 1 });
        }
        let pkt = DataPacket {
            id: PacketId { flow, seq },
            source: f.source,
            destination: f.destination,
            created_at: now,
            ttl: self.params.data_ttl,
            visited: vec![f.source],
        };
        self.ledger.record_sent();
        self.record(TraceEvent::Send {
            node: f.source,
            dest: f.destination,
            packet: pkt.id,
        });
        let ctx = Ctx {
            now,
            params: &self.params,
        };
        let mut out = Vec::new();
        self.nodes[f.source.index()].forward_data(&ctx, pkt, &mut out);
        self.execute(f.source, out);
    }

    fn audit_tick(&mut self, now: SimTime) {
        let window = SimDuration::from_secs_f64(self.scenario.confirm_window);
        let min = self.scenario.audit_min_packets;
        for mi in 0..self.monitors.len() {
            let monitor = self.monitors[mi].node;
            let verdicts = self.monitors[mi].ledger.audit(now, window, min);
            for v in verdicts {
                if v.verdict != Verdict::Mismatch {
                    continue;
                }
                let ctx = Ctx {
                    now,
                    params: &self.params,
                };
                let mut out = Vec::new();
                let node = &mut self.nodes[monitor.index()];
                if node.blacklist.contains(v.subject) {
                    // still receiving traffic: someone missed the alert
                    let last = self.monitors[mi].alerted.insert(v.subject, v.handed_off);
                    if last.is_some_and(|h| v.handed_off > h) {
                        node.reissue_alert(&ctx, v.subject, &mut out);
                        self.execute(monitor, out);
                    }
                    continue;
                }
                node.raise_alert(&ctx, v.subject, &mut out);
                self.monitors[mi].alerted.insert(v.subject, v.handed_off);
                self.detections.push(Detection {
                    time: now,
                    monitor,
                    subject: v.subject,
                    handed_off: v.handed_off,
                    confirmed: v.confirmed,
                });
                self.record(TraceEvent::Detect {
                    node: monitor,
                    subject: v.subject,
                    handed: v.handed_off,
                    confirmed: v.confirmed,
                });
                self.execute(monitor, out);
            }
        }
        let next = now + SimDuration::from_secs_f64(self.scenario.audit_interval);
        if next <= self.end {
            self.schedule(next, Event::AuditTick);
        }
    }

    fn observe_handoff(&mut self, now: SimTime, sender: NodeId, receiver: NodeId, pkt: &DataPacket) {
        if self.monitors.is_empty() {
            return;
        }
        let h = Handoff {
            packet: pkt.id,
            destination: pkt.destination,
            sender,
            sender_pos: self.positions[sender.index()],
            receiver,
            receiver_pos: self.positions[receiver.index()],
        };
        for m in &mut self.monitors {
            let vantage = Vantage {
                monitor: m.node,
                position: self.positions[m.node.index()],
                range: self.scenario.range,
                global: self.scenario.ids_global_view,
            };
            m.ledger.observe_forwarding(&vantage, &h, now);
        }
        if self.attackers.contains(&receiver) {
            let at = self.positions[receiver.index()];
            let monitor_distances = self
                .monitors
                .iter()
                .map(|m| (m.node, self.positions[m.node.index()].distance(at)))
                .collect();
            self.sightings.push(Sighting {
                time: now,
                sender,
                subject: receiver,
                monitor_distances,
            });
        }
    }

    /// Carries out handler actions for `node`, including follow-ups such as
    /// link-break handling and failover.
    fn execute(&mut self, node: NodeId, actions: Vec<Action>) {
        let mut work: VecDeque<Action> = actions.into();
        while let Some(action) = work.pop_front() {
            let now = self.queue.now();
            match action {
                Action::Broadcast(msg) => {
                    let kind = msg.kind();
                    self.ledger.totals.record_control(kind);
                    self.record(TraceEvent::Control { node, to: None, kind });
                    for (to, at) in self.channel.broadcast(node, &self.adjacency, now) {
                        self.schedule(
                            at,
                            Event::Arrival {
                                from: node,
                                to,
                                payload: Payload::Control(msg.clone()),
                            },
                        );
                    }
                }
                Action::Unicast(to, msg) => match self.channel.deliver(node, to, &self.adjacency, now) {
                    Ok(at) => {
                        let kind = msg.kind();
                        self.ledger.totals.record_control(kind);
                        self.record(TraceEvent::Control { node, to: Some(to), kind });
                        self.schedule(
                            at,
                            Event::Arrival {
                                from: node,
                                to,
                                payload: Payload::Control(msg),
                            },
                        );
                    }
                    Err(_) => {
                        if msg.kind() == ControlKind::Rrep {
                            self.ledger.stale_replies += 1;
                        }
                        self.link_break(now, node, to, &mut work);
                    }
                },
                Action::Handoff(to, mut pkt) => match self.channel.deliver(node, to, &self.adjacency, now) {
                    Ok(at) => {
                        pkt.ttl -= 1;
                        self.record(TraceEvent::Forward {
                            node,
                            next_hop: to,
                            packet: pkt.id,
                        });
                        self.observe_handoff(now, node, to, &pkt);
                        self.schedule(
                            at,
                            Event::Arrival {
                                from: node,
                                to,
                                payload: Payload::Data(pkt),
                            },
                        );
                    }
                    Err(_) => {
                        self.link_break(now, node, to, &mut work);
                        let ctx = Ctx {
                            now,
                            params: &self.params,
                        };
                        let mut out = Vec::new();
                        self.nodes[node.index()].forward_data(&ctx, pkt, &mut out);
                        work.extend(out);
                    }
                },
                Action::Deliver(pkt) => {
                    let from = if pkt.visited.len() >= 2 {
                        pkt.visited[pkt.visited.len() - 2]
                    } else {
                        node
                    };
                    match self.sink.receive(&pkt, now) {
                        SinkOutcome::Unique { delay } => {
                            self.ledger.record_delivery(delay.as_micros());
                            self.record(TraceEvent::Receive {
                                node,
                                from,
                                packet: pkt.id,
                                delay_us: delay.as_micros(),
                            });
                            self.delivered_paths.push((pkt.id, pkt.visited));
                        }
                        SinkOutcome::Duplicate => {
                            self.ledger.totals.duplicates += 1;
                            self.record(TraceEvent::Duplicate {
                                node,
                                from,
                                packet: pkt.id,
                            });
                        }
                    }
                }
                Action::Drop(pkt, cause) => {
                    self.ledger.record_drop(cause);
                    self.record(TraceEvent::Drop {
                        node,
                        packet: pkt.id,
                        cause,
                    });
                }
                Action::ArmTimer { dest, attempt, after } => {
                    if let Some(h) = self.timers.remove(&(node, dest)) {
                        self.queue.cancel(h);
                    }
                    let h = self.queue.schedule_in(after, Event::DiscoveryTimeout { node, dest, attempt });
                    self.timers.insert((node, dest), h);
                }
                Action::DisarmTimer { dest } => {
                    if let Some(h) = self.timers.remove(&(node, dest)) {
                        self.queue.cancel(h);
                    }
                }
                Action::DiscoveryFailed { dest, attempts } => {
                    self.discovery_failures.push(DiscoveryFailure {
                        time: now,
                        node,
                        dest,
                        attempts,
                    });
                    self.record(TraceEvent::DiscoveryFailed { node, dest, attempts });
                }
                Action::StaleReply => self.ledger.stale_replies += 1,
                Action::Blacklisted { subject, detector } => {
                    self.record(TraceEvent::Blacklist { node, subject, detector });
                }
            }
        }
    }

    fn link_break(&mut self, now: SimTime, node: NodeId, peer: NodeId, work: &mut VecDeque<Action>) {
        self.record(TraceEvent::LinkBreak { node, peer });
        let ctx = Ctx {
            now,
            params: &self.params,
        };
        let mut out = Vec::new();
        self.nodes[node.index()].handle_link_break(&ctx, peer, &mut out);
        work.extend(out);
    }

    /// Runs to the end if needed, closes the trace and summarises the run.
    /// Fails if the packet books do not balance.
    pub fn finish(mut self) -> Result<(RunSummary, FinishedRun), SimError> {
        self.run();
        self.ledger.snapshot(self.end);
        let in_flight = self.ledger.in_flight;
        self.record(TraceEvent::End { in_flight });
        if let Some(t) = self.trace.take() {
            t.finish()?;
        }
        let structural = self.in_flight_structural();
        if structural != in_flight {
            return Err(SimError::Invariant(format!(
                "ledger reports {in_flight} packets in flight but {structural} are in transit or buffered"
            )));
        }
        let c = &self.ledger.totals;
        if c.unaccounted() != in_flight as i64 {
            return Err(SimError::Invariant(format!(
                "conservation: sent {} != received {} + dropped {} + in flight {in_flight}",
                c.sent,
                c.received_unique,
                c.total_drops()
            )));
        }
        let summary = RunSummary::from_sim(&self);
        let blacklists = self
            .nodes
            .iter()
            .map(|n| (n.id, n.blacklist.iter().map(|(s, e)| (s, e.detected_at)).collect()))
            .collect();
        Ok((
            summary,
            FinishedRun {
                ledger: self.ledger,
                detections: self.detections,
                discovery_failures: self.discovery_failures,
                sightings: self.sightings,
                delivered_paths: self.delivered_paths,
                blacklists,
                monitors: self.monitors,
            },
        ))
    }
}

/// Everything left after a run that the summary does not carry.
#[derive(Debug, Clone)]
pub struct FinishedRun {
    pub ledger: MetricsLedger,
    pub detections: Vec<Detection>,
    pub discovery_failures: Vec<DiscoveryFailure>,
    pub sightings: Vec<Sighting>,
    pub delivered_paths: Vec<(PacketId, Vec<NodeId>)>,
    /// Per node: blacklisted subjects and when they were listed.
    pub blacklists: BTreeMap<NodeId, Vec<(NodeId, SimTime)>>,
    pub monitors: Vec<Monitor>,
}

/// One complete run, optionally streaming its trace to `trace`.
pub fn run_scenario(scenario: &Scenario, trace: Option<Box<dyn Write + Send>>) -> Result<RunSummary, SimError> {
    let mut b = Simulation::builder();
    if let Some(t) = trace {
        b = b.trace(t);
    }
    let sim = b.build(scenario.clone())?;
    Ok(sim.finish()?.0)
}
