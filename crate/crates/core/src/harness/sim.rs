//! Event loop wiring sources, controllers, the bottleneck and receivers.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_utilization, IntervalUtilization};
use super::scenario::{ControllerKind, ScenarioSpec};
use crate::error::Result;
use crate::gcc::{GccSender, RateEvent};
use crate::netmodel::{BottleneckLink, EnqueueOutcome, LinkStats};
use crate::reno::RenoSender;
use crate::scream::ScreamSender;
use crate::simcore::{EventQueue, RngStream, SimTime};
use crate::transport::{
    FeedbackInterval, FeedbackReport, MediaPacket, MediaReceiver, MediaSource, Pacer,
    ScreamFeedback,
};

const LOSS_STREAM: u64 = 0;
const RENO_TIMER: SimTime = SimTime::from_millis(200);

#[derive(Debug)]
enum Action {
    FlowStart(usize),
    FlowStop(usize),
    Frame(usize),
    SendWake(usize),
    LinkDeparture,
    Deliver(MediaPacket, u64),
    FeedbackTimer(usize),
    GccFeedback(usize, FeedbackReport),
    ScreamFeedback(usize, ScreamFeedback),
    ScreamRateTick(usize),
    RenoAck(usize, u64),
    RenoTimer(usize),
    CapacityChange,
    TraceTick,
}

#[allow(clippy::large_enum_variant)]
enum Controller {
    Gcc {
        sender: GccSender,
        source: MediaSource,
        pacer: Pacer,
        receiver: MediaReceiver,
    },
    Scream {
        sender: ScreamSender,
        source: MediaSource,
        receiver: MediaReceiver,
    },
    Reno {
        sender: RenoSender,
    },
}

/// Per-flow counters sampled on every trace tick.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowCounters {
    pub sent_bytes: u64,
    pub delivered_bytes: u64,
    pub delivered_packets: u64,
    pub owd_sum_us: u64,
    pub link_drops: u64,
}

struct Flow {
    id: u32,
    kind: ControllerKind,
    start: SimTime,
    stop: SimTime,
    active: bool,
    ctl: Controller,
    wake_at: Option<SimTime>,
    counters: FlowCounters,
    sent_window: VecDeque<(SimTime, u64)>,
    recv_window: VecDeque<(SimTime, u64)>,
    last_owd_ms: Option<f64>,
    tick_owd: (u64, u64),
    min_owd: Option<SimTime>,
    max_owd: SimTime,
}

impl Flow {
    fn target_bps(&self) -> Option<u64> {
        match &self.ctl {
            Controller::Gcc { sender, .. } => Some(sender.target_rate_bps()),
            Controller::Scream { sender, .. } => Some(sender.target_rate_bps()),
            Controller::Reno { .. } => None,
        }
    }

    fn cwnd_bytes(&self) -> Option<u64> {
        match &self.ctl {
            Controller::Gcc { .. } => None,
            Controller::Scream { sender, .. } => Some(sender.cwnd().cwnd_bytes()),
            Controller::Reno { sender } => Some(sender.cwnd_bytes()),
        }
    }
}

/// One row of a per-flow time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_ms: u64,
    pub flow_id: u32,
    pub controller: ControllerKind,
    pub target_kbps: Option<f64>,
    pub send_kbps: f64,
    pub recv_kbps: f64,
    pub owd_ms: Option<f64>,
    pub cwnd_bytes: Option<u64>,
    pub queue_backlog_bytes: u64,
    pub drops_cum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub flow_id: u32,
    pub controller: ControllerKind,
    pub start_s: f64,
    pub stop_s: f64,
    pub counters: FlowCounters,
    pub mean_owd_ms: Option<f64>,
    pub min_owd_ms: Option<f64>,
    pub max_owd_ms: Option<f64>,
    pub sender_losses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// Packets offered to the link equal delivered + dropped + queued +
    /// propagating at every tick.
    pub conservation_ok: bool,
    pub max_backlog_bytes: u64,
    pub queue_capacity_bytes: u64,
    /// Deliveries happen in strictly increasing accept order.
    pub fifo_order_ok: bool,
    pub min_owd_ms: Option<f64>,
    pub prop_delay_ms: f64,
    /// Any SCReAM flow released a packet past its window.
    pub window_violated: bool,
}

impl InvariantReport {
    pub fn all_ok(&self) -> bool {
        self.conservation_ok
            && self.fifo_order_ok
            && self.max_backlog_bytes <= self.queue_capacity_bytes
            && self.min_owd_ms.is_none_or(|m| m >= self.prop_delay_ms)
            && !self.window_violated
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub scenario: String,
    pub seed: u64,
    pub spec: ScenarioSpec,
    pub flows: Vec<FlowSummary>,
    pub trace: Vec<TraceRecord>,
    pub ticks: Vec<SimTime>,
    /// `snapshots[i][f]` holds flow `f`'s counters at `ticks[i]`.
    pub snapshots: Vec<Vec<FlowCounters>>,
    pub link: LinkStats,
    pub gcc_events: Vec<(u32, RateEvent)>,
    pub invariants: InvariantReport,
    pub events_dispatched: u64,
}

impl SimResult {
    fn tick_index(&self, t: SimTime) -> usize {
        self.ticks
            .partition_point(|x| *x < t)
            .min(self.ticks.len() - 1)
    }

    /// Counter difference over `[start, end]`, resolved to trace ticks.
    pub fn counters_between(&self, flow: usize, start: SimTime, end: SimTime) -> FlowCounters {
        let a = self.snapshots[self.tick_index(start)][flow];
        let b = self.snapshots[self.tick_index(end)][flow];
        FlowCounters {
            sent_bytes: b.sent_bytes - a.sent_bytes,
            delivered_bytes: b.delivered_bytes - a.delivered_bytes,
            delivered_packets: b.delivered_packets - a.delivered_packets,
            owd_sum_us: b.owd_sum_us - a.owd_sum_us,
            link_drops: b.link_drops - a.link_drops,
        }
    }

    pub fn delivered_rate_bps(&self, flow: usize, start: SimTime, end: SimTime) -> f64 {
        let c = self.counters_between(flow, start, end);
        c.delivered_bytes as f64 * 8.0 / (end - start).as_secs_f64()
    }

    pub fn utilization(&self, flows: &[usize], start: SimTime, end: SimTime) -> f64 {
        let bytes = flows
            .iter()
            .map(|f| self.counters_between(*f, start, end).delivered_bytes)
            .sum();
        compute_utilization(bytes, &self.spec.schedule, start, end)
    }

    pub fn mean_owd_ms(&self, flow: usize, start: SimTime, end: SimTime) -> Option<f64> {
        let c = self.counters_between(flow, start, end);
        (c.delivered_packets > 0).then(|| c.owd_sum_us as f64 / c.delivered_packets as f64 / 1e3)
    }

    pub fn all_flows(&self) -> Vec<usize> {
        (0..self.flows.len()).collect()
    }

    pub fn interval_utilization(&self) -> Vec<IntervalUtilization> {
        let mut out = Vec::new();
        for &(start, end) in &self.spec.intervals {
            let all = self.all_flows();
            let total: u64 = all
                .iter()
                .map(|f| self.counters_between(*f, start, end).delivered_bytes)
                .sum();
            out.push(IntervalUtilization {
                start_s: start.as_secs_f64(),
                end_s: end.as_secs_f64(),
                flow_id: None,
                delivered_bytes: total,
                utilization: self.utilization(&all, start, end),
                mean_owd_ms: None,
            });
            for f in all {
                let c = self.counters_between(f, start, end);
                let media = self.flows[f].controller != ControllerKind::Reno;
                out.push(IntervalUtilization {
                    start_s: start.as_secs_f64(),
                    end_s: end.as_secs_f64(),
                    flow_id: Some(self.flows[f].flow_id),
                    delivered_bytes: c.delivered_bytes,
                    utilization: self.utilization(&[f], start, end),
                    mean_owd_ms: if media {
                        self.mean_owd_ms(f, start, end)
                    } else {
                        None
                    },
                });
            }
        }
        out
    }

    /// Trace rows of one flow.
    pub fn flow_trace(&self, flow_id: u32) -> impl Iterator<Item = &TraceRecord> {
        self.trace.iter().filter(move |r| r.flow_id == flow_id)
    }
}

struct Sim<'a> {
    spec: &'a ScenarioSpec,
    q: EventQueue<Action>,
    link: BottleneckLink,
    flows: Vec<Flow>,
    trace: Vec<TraceRecord>,
    ticks: Vec<SimTime>,
    snapshots: Vec<Vec<FlowCounters>>,
    offered: u64,
    delivered: u64,
    propagating: u64,
    last_accept: Option<u64>,
    conservation_ok: bool,
    fifo_ok: bool,
    gcc_event_cursor: Vec<usize>,
    gcc_events: Vec<(u32, RateEvent)>,
}

fn make_flow(id: u32, kind: ControllerKind, spec: &ScenarioSpec) -> Flow {
    let cfg = &spec.config;
    let sc = &cfg.scenario;
    let frame = SimTime::from_millis(sc.frame_interval_ms);
    let interval = FeedbackInterval {
        min: SimTime::from_millis(sc.feedback_min_ms),
        max: SimTime::from_millis(sc.feedback_max_ms),
        target_entries: sc.feedback_target_entries,
    };
    let ctl = match kind {
        ControllerKind::Gcc => {
            let sender = GccSender::new(cfg.gcc.clone());
            let source = MediaSource::new(id, sender.target_rate_bps(), sender.min_rate_bps())
                .with_packetization(frame, sc.mtu_bytes);
            Controller::Gcc {
                sender,
                source,
                pacer: Pacer::new(),
                receiver: MediaReceiver::new(id).with_interval(interval),
            }
        }
        ControllerKind::Scream => {
            let sender = ScreamSender::new(cfg.scream.clone());
            let source = MediaSource::new(id, sender.target_rate_bps(), sender.min_rate_bps())
                .with_packetization(frame, sc.mtu_bytes);
            Controller::Scream {
                sender,
                source,
                receiver: MediaReceiver::new(id),
            }
        }
        ControllerKind::Reno => Controller::Reno {
            sender: RenoSender::new(id, cfg.reno.clone()),
        },
    };
    let f = &spec.flows[id as usize];
    Flow {
        id,
        kind,
        start: f.start,
        stop: f.stop,
        active: false,
        ctl,
        wake_at: None,
        counters: FlowCounters::default(),
        sent_window: VecDeque::new(),
        recv_window: VecDeque::new(),
        last_owd_ms: None,
        tick_owd: (0, 0),
        min_owd: None,
        max_owd: SimTime::ZERO,
    }
}

fn window_kbps(w: &mut VecDeque<(SimTime, u64)>, now: SimTime, span: SimTime) -> f64 {
    while w.front().is_some_and(|(t, _)| *t + span <= now) {
        w.pop_front();
    }
    let bytes: u64 = w.iter().map(|(_, b)| b).sum();
    bytes as f64 * 8.0 / span.as_secs_f64() / 1e3
}

impl<'a> Sim<'a> {
    fn new(spec: &'a ScenarioSpec) -> Result<Self> {
        let link = BottleneckLink::new(spec.link.clone(), RngStream::new(spec.seed, LOSS_STREAM))?;
        let flows: Vec<Flow> = spec
            .flows
            .iter()
            .enumerate()
            .map(|(i, f)| make_flow(i as u32, f.kind, spec))
            .collect();
        let n = flows.len();
        Ok(Self {
            spec,
            q: EventQueue::new(),
            link,
            flows,
            trace: Vec::new(),
            ticks: Vec::new(),
            snapshots: Vec::new(),
            offered: 0,
            delivered: 0,
            propagating: 0,
            last_accept: None,
            conservation_ok: true,
            fifo_ok: true,
            gcc_event_cursor: vec![0; n],
            gcc_events: Vec::new(),
        })
    }

    fn prime(&mut self) -> Result<()> {
        for i in 0..self.flows.len() {
            self.q.schedule(self.flows[i].start, Action::FlowStart(i))?;
            self.q.schedule(self.flows[i].stop, Action::FlowStop(i))?;
        }
        for &(t, _) in self.spec.schedule.steps().iter().skip(1) {
            self.q.schedule(t, Action::CapacityChange)?;
        }
        self.q.schedule(SimTime::ZERO, Action::TraceTick)?;
        Ok(())
    }

    fn wake(&mut self, i: usize, at: SimTime) {
        let f = &mut self.flows[i];
        if f.wake_at.is_none_or(|w| at < w) {
            f.wake_at = Some(at);
            self.q.schedule_in(at - self.q.now(), Action::SendWake(i));
        }
    }

    /// Hands a packet to the bottleneck.
    fn transmit(&mut self, i: usize, pkt: MediaPacket) {
        let now = self.q.now();
        let size = pkt.size_bytes as u64;
        let f = &mut self.flows[i];
        f.counters.sent_bytes += size;
        f.sent_window.push_back((now, size));
        self.offered += 1;
        match self.link.enqueue(pkt, now) {
            EnqueueOutcome::Accepted { departure } => {
                if let Some(at) = departure {
                    self.q.schedule_in(at - now, Action::LinkDeparture);
                }
            }
            EnqueueOutcome::DroppedOverflow | EnqueueOutcome::DroppedRandom => {
                self.flows[i].counters.link_drops += 1;
            }
        }
    }

    /// Sends whatever the flow's pacer or window allows right now.
    fn pump(&mut self, i: usize) {
        let now = self.q.now();
        if !self.flows[i].active {
            return;
        }
        let pacing = self.spec.config.scenario.gcc_pacing_factor;
        loop {
            let next = match &mut self.flows[i].ctl {
                Controller::Gcc { sender, pacer, .. } => {
                    let rate = (sender.target_rate_bps() as f64 * pacing) as u64;
                    match pacer.pace_out(rate.max(1), now) {
                        Some(p) => {
                            sender.on_packet_sent(&p);
                            Ok(p)
                        }
                        None => Err(pacer.next_send_time(now)),
                    }
                }
                Controller::Scream { sender, .. } => match sender.try_send(now) {
                    Some(p) => Ok(p),
                    None => Err(sender.next_send_time(now)),
                },
                Controller::Reno { sender } => sender.try_send(now).ok_or(None),
            };
            match next {
                Ok(p) => self.transmit(i, p),
                Err(wake) => {
                    if let Some(at) = wake.filter(|t| *t > now) {
                        self.wake(i, at);
                    }
                    break;
                }
            }
        }
    }

    fn on_deliver(&mut self, pkt: MediaPacket, accept_id: u64) {
        let now = self.q.now();
        self.propagating -= 1;
        self.delivered += 1;
        if self.last_accept.is_some_and(|a| accept_id <= a) {
            self.fifo_ok = false;
        }
        self.last_accept = Some(accept_id);

        let i = pkt.flow_id as usize;
        let size = pkt.size_bytes as u64;
        let owd = now - pkt.send_ts;
        let prop = self.spec.link.prop_delay;
        let f = &mut self.flows[i];
        f.counters.delivered_bytes += size;
        f.counters.delivered_packets += 1;
        f.counters.owd_sum_us += owd.as_micros();
        f.recv_window.push_back((now, size));
        f.tick_owd.0 += owd.as_micros();
        f.tick_owd.1 += 1;
        f.min_owd = Some(f.min_owd.map_or(owd, |m| m.min(owd)));
        f.max_owd = f.max_owd.max(owd);
        match &mut f.ctl {
            Controller::Gcc { receiver, .. } | Controller::Scream { receiver, .. } => {
                receiver.on_packet(pkt.twcc_seq, now);
            }
            Controller::Reno { .. } => {
                self.q.schedule_in(prop, Action::RenoAck(i, pkt.twcc_seq));
            }
        }
    }

    fn on_feedback_timer(&mut self, i: usize) {
        let now = self.q.now();
        let prop = self.spec.link.prop_delay;
        let scream_every = SimTime::from_millis(self.spec.config.scenario.scream_feedback_ms);
        let f = &mut self.flows[i];
        // Keep reporting briefly after the stop so the tail gets acked.
        if now > f.stop + SimTime::from_secs(1) {
            return;
        }
        let next = match &mut f.ctl {
            Controller::Gcc { receiver, .. } => {
                if let Some(r) = receiver.build_feedback(now) {
                    self.q.schedule_in(prop, Action::GccFeedback(i, r));
                }
                receiver.feedback_interval()
            }
            Controller::Scream { receiver, .. } => {
                if let Some(r) = receiver.build_scream_feedback() {
                    self.q.schedule_in(prop, Action::ScreamFeedback(i, r));
                }
                scream_every
            }
            Controller::Reno { .. } => return,
        };
        self.q.schedule_in(next, Action::FeedbackTimer(i));
    }

    fn on_trace_tick(&mut self) {
        let now = self.q.now();
        let span = SimTime::from_millis(self.spec.config.scenario.rate_window_ms);
        let backlog = self.link.queue_state().backlog_bytes;
        let stats = self.link.stats();
        let balance = stats.dropped_overflow
            + stats.dropped_random
            + self.link.queued_packets() as u64
            + self.propagating
            + self.delivered;
        if self.offered != stats.offered || balance != self.offered {
            self.conservation_ok = false;
        }
        for f in &mut self.flows {
            let send_kbps = window_kbps(&mut f.sent_window, now, span);
            let recv_kbps = window_kbps(&mut f.recv_window, now, span);
            if f.tick_owd.1 > 0 {
                f.last_owd_ms = Some(f.tick_owd.0 as f64 / f.tick_owd.1 as f64 / 1e3);
            }
            f.tick_owd = (0, 0);
            if now < f.start || now > f.stop {
                continue;
            }
            let media = f.kind != ControllerKind::Reno;
            self.trace.push(TraceRecord {
                t_ms: now.as_micros() / 1_000,
                flow_id: f.id,
                controller: f.kind,
                target_kbps: f.target_bps().map(|b| b as f64 / 1e3),
                send_kbps,
                recv_kbps,
                owd_ms: if media { f.last_owd_ms } else { None },
                cwnd_bytes: f.cwnd_bytes(),
                queue_backlog_bytes: backlog,
                drops_cum: f.counters.link_drops,
            });
        }
        self.ticks.push(now);
        self.snapshots
            .push(self.flows.iter().map(|f| f.counters).collect());
        let step = SimTime::from_millis(self.spec.config.scenario.trace_interval_ms);
        if now + step <= self.spec.duration {
            self.q.schedule_in(step, Action::TraceTick);
        }
    }

    fn collect_gcc_events(&mut self, i: usize) {
        if let Controller::Gcc { sender, .. } = &self.flows[i].ctl {
            let ev = sender.events();
            for e in &ev[self.gcc_event_cursor[i]..] {
                self.gcc_events.push((i as u32, *e));
            }
            self.gcc_event_cursor[i] = ev.len();
        }
    }

    fn handle(&mut self, action: Action) -> Result<()> {
        let now = self.q.now();
        match action {
            Action::FlowStart(i) => {
                let f = &mut self.flows[i];
                f.active = true;
                match &mut f.ctl {
                    Controller::Gcc { .. } | Controller::Scream { .. } => {
                        self.q.schedule_in(SimTime::ZERO, Action::Frame(i));
                        self.q.schedule_in(SimTime::ZERO, Action::FeedbackTimer(i));
                        if f.kind == ControllerKind::Scream {
                            let every = SimTime::from_millis(
                                self.spec.config.scream.rate_update_interval_ms,
                            );
                            self.q.schedule_in(every, Action::ScreamRateTick(i));
                        }
                    }
                    Controller::Reno { sender } => {
                        sender.start(now);
                        self.q.schedule_in(RENO_TIMER, Action::RenoTimer(i));
                        self.pump(i);
                    }
                }
            }
            Action::FlowStop(i) => self.flows[i].active = false,
            Action::Frame(i) => {
                let f = &mut self.flows[i];
                if !f.active {
                    return Ok(());
                }
                match &mut f.ctl {
                    Controller::Gcc { source, pacer, .. } => {
                        for p in source.emit_frame(now) {
                            pacer.push(p);
                        }
                        let every = source.frame_interval;
                        self.q.schedule_in(every, Action::Frame(i));
                    }
                    Controller::Scream { source, sender, .. } => {
                        sender.enqueue_frame(source.emit_frame(now), now);
                        let every = source.frame_interval;
                        self.q.schedule_in(every, Action::Frame(i));
                    }
                    Controller::Reno { .. } => unreachable!("reno has no frames"),
                }
                self.pump(i);
            }
            Action::SendWake(i) => {
                if self.flows[i].wake_at == Some(now) {
                    self.flows[i].wake_at = None;
                    self.pump(i);
                }
            }
            Action::LinkDeparture => {
                let (dep, next) = self.link.complete_head(now);
                self.propagating += 1;
                self.q.schedule_in(
                    dep.arrives_at - now,
                    Action::Deliver(dep.packet, dep.accept_id),
                );
                if let Some(at) = next {
                    self.q.schedule_in(at - now, Action::LinkDeparture);
                }
            }
            Action::Deliver(pkt, id) => self.on_deliver(pkt, id),
            Action::FeedbackTimer(i) => self.on_feedback_timer(i),
            Action::GccFeedback(i, report) => {
                if let Controller::Gcc { sender, source, .. } = &mut self.flows[i].ctl {
                    let rate = sender.on_feedback(&report, now);
                    source.set_target_rate(rate);
                }
                self.collect_gcc_events(i);
                self.pump(i);
            }
            Action::ScreamFeedback(i, fb) => {
                if let Controller::Scream { sender, .. } = &mut self.flows[i].ctl {
                    sender.on_feedback(&fb, now)?;
                }
                self.pump(i);
            }
            Action::ScreamRateTick(i) => {
                let every = SimTime::from_millis(self.spec.config.scream.rate_update_interval_ms);
                let f = &mut self.flows[i];
                if !f.active {
                    return Ok(());
                }
                if let Controller::Scream { sender, source, .. } = &mut f.ctl {
                    let rate = sender.update_rate(now);
                    source.set_target_rate(rate);
                }
                self.q.schedule_in(every, Action::ScreamRateTick(i));
            }
            Action::RenoAck(i, seq) => {
                if let Controller::Reno { sender } = &mut self.flows[i].ctl {
                    sender.on_ack(seq, now);
                }
                self.pump(i);
            }
            Action::RenoTimer(i) => {
                if !self.flows[i].active {
                    return Ok(());
                }
                if let Controller::Reno { sender } = &mut self.flows[i].ctl {
                    sender.check_timeout(now);
                }
                self.q.schedule_in(RENO_TIMER, Action::RenoTimer(i));
                self.pump(i);
            }
            Action::CapacityChange => self.link.apply_schedule(&self.spec.schedule, now),
            Action::TraceTick => self.on_trace_tick(),
        }
        Ok(())
    }

    fn finish(self) -> SimResult {
        let stats = self.link.stats();
        let mut min_owd: Option<f64> = None;
        let mut window_violated = false;
        let flows: Vec<FlowSummary> = self
            .flows
            .iter()
            .map(|f| {
                let fmin = f.min_owd.map(|t| t.as_millis_f64());
                if let Some(m) = fmin {
                    min_owd = Some(min_owd.map_or(m, |x: f64| x.min(m)));
                }
                let sender_losses = match &f.ctl {
                    Controller::Scream { sender, .. } => {
                        window_violated |= sender.window_violated();
                        sender.lost_packets()
                    }
                    Controller::Reno { sender } => sender.losses(),
                    Controller::Gcc { .. } => 0,
                };
                let c = f.counters;
                FlowSummary {
                    flow_id: f.id,
                    controller: f.kind,
                    start_s: f.start.as_secs_f64(),
                    stop_s: f.stop.as_secs_f64(),
                    counters: c,
                    mean_owd_ms: (c.delivered_packets > 0)
                        .then(|| c.owd_sum_us as f64 / c.delivered_packets as f64 / 1e3),
                    min_owd_ms: fmin,
                    max_owd_ms: f.min_owd.map(|_| f.max_owd.as_millis_f64()),
                    sender_losses,
                }
            })
            .collect();
        SimResult {
            scenario: self.spec.name.clone(),
            seed: self.spec.seed,
            spec: self.spec.clone(),
            flows,
            trace: self.trace,
            ticks: self.ticks,
            snapshots: self.snapshots,
            link: stats,
            gcc_events: self.gcc_events,
            invariants: InvariantReport {
                conservation_ok: self.conservation_ok,
                max_backlog_bytes: stats.max_backlog_bytes,
                queue_capacity_bytes: self.spec.link.queue_capacity_bytes,
                fifo_order_ok: self.fifo_ok,
                min_owd_ms: min_owd,
                prop_delay_ms: self.spec.link.prop_delay.as_millis_f64(),
                window_violated,
            },
            events_dispatched: self.q.dispatched(),
        }
    }
}

/// Runs a scenario to completion.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<SimResult> {
    spec.validate()?;
    let mut sim = Sim::new(spec)?;
    sim.prime()?;
    while let Some(ev) = sim.q.pop_until(spec.duration) {
        sim.handle(ev.action)?;
    }
    Ok(sim.finish())
}
