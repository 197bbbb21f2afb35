//! Sender-side Google congestion control driven by transport-wide feedback:
//! 5 ms packet groups, accumulated and smoothed inter-group delay variation,
//! a least-squares trendline, an adaptive-threshold overuse detector and an
//! AIMD rate controller.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::simcore::SimTime;
use crate::transport::{FeedbackReport, MediaPacket};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GccConfig {
    pub group_window_ms: f64,
    pub smoothing_coef: f64,
    pub trendline_window: usize,
    pub trendline_min_points: usize,
    pub initial_threshold_ms: f64,
    pub k_up: f64,
    pub k_down: f64,
    pub threshold_min_ms: f64,
    pub threshold_max_ms: f64,
    pub overuse_time_ms: f64,
    pub slope_gain_per_sample: f64,
    pub slope_gain_max_samples: usize,
    pub beta: f64,
    pub multiplicative_increase_per_sec: f64,
    pub multiplicative_cap_factor: f64,
    pub recv_window_ms: u64,
    pub initial_rate_bps: u64,
    pub min_rate_bps: u64,
    pub max_rate_bps: u64,
    pub mtu_bytes: u32,
    pub loss_controller: bool,
    pub loss_threshold: f64,
    /// Feedback is pooled over this long before the loss fraction is judged.
    pub loss_window_ms: u64,
}

impl Default for GccConfig {
    fn default() -> Self {
        Self {
            group_window_ms: 5.0,
            smoothing_coef: 0.9,
            trendline_window: 20,
            trendline_min_points: 2,
            initial_threshold_ms: 12.5,
            k_up: 0.01,
            k_down: 0.00018,
            threshold_min_ms: 6.0,
            threshold_max_ms: 600.0,
            overuse_time_ms: 10.0,
            slope_gain_per_sample: 4.0,
            slope_gain_max_samples: 60,
            beta: 0.85,
            multiplicative_increase_per_sec: 1.08,
            multiplicative_cap_factor: 2.0,
            recv_window_ms: 500,
            initial_rate_bps: 300_000,
            min_rate_bps: 150_000,
            max_rate_bps: 3_000_000,
            mtu_bytes: 1200,
            loss_controller: true,
            loss_threshold: 0.10,
            loss_window_ms: 1_000,
        }
    }
}

/// Packets whose send times fall within one window starting at the
/// group's first packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketGroup {
    /// Send time of the first packet.
    pub timestamp: SimTime,
    /// Arrival time of the last packet.
    pub complete_time: SimTime,
    pub size_bytes: u64,
    pub packets: u32,
}

#[derive(Debug, Clone)]
pub struct PacketGrouper {
    window: SimTime,
    current: Option<PacketGroup>,
}

impl PacketGrouper {
    pub fn new(window: SimTime) -> Self {
        Self {
            window,
            current: None,
        }
    }

    /// Adds one delivered packet. Returns the previous group once a packet
    /// outside its send window shows up.
    pub fn push(&mut self, send_ts: SimTime, arrival: SimTime, size: u32) -> Option<PacketGroup> {
        match &mut self.current {
            Some(g) if send_ts < g.timestamp + self.window => {
                g.complete_time = g.complete_time.max(arrival);
                g.size_bytes += size as u64;
                g.packets += 1;
                None
            }
            slot => slot.replace(PacketGroup {
                timestamp: send_ts,
                complete_time: arrival,
                size_bytes: size as u64,
                packets: 1,
            }),
        }
    }

    /// Feeds every delivered entry of `report` through the grouper.
    pub fn group_packets(&mut self, report: &FeedbackReport, log: &SendLog) -> Vec<PacketGroup> {
        report
            .entries
            .iter()
            .filter_map(|e| {
                let arrival = e.arrival?;
                let sent = log.get(e.seq)?;
                self.push(sent.send_ts, arrival, sent.size_bytes)
            })
            .collect()
    }
}

/// Inter-group one-way delay variation in milliseconds.
pub fn delay_variation(prev: &PacketGroup, cur: &PacketGroup) -> f64 {
    let arrival_delta =
        cur.complete_time.as_micros() as f64 - prev.complete_time.as_micros() as f64;
    let send_delta = cur.timestamp.as_micros() as f64 - prev.timestamp.as_micros() as f64;
    (arrival_delta - send_delta) / 1e3
}

/// Least-squares slope of `points`. `None` when fewer than two points or
/// all x values coincide.
pub fn least_squares_slope(points: &VecDeque<(f64, f64)>) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let x_avg = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_avg = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (num, den) = points.iter().fold((0.0, 0.0), |(num, den), (x, y)| {
        let dx = x - x_avg;
        (num + dx * (y - y_avg), den + dx * dx)
    });
    (den != 0.0).then(|| num / den)
}

#[derive(Debug, Clone)]
pub struct TrendlineState {
    pub smoothing_coef: f64,
    pub acc_delay: f64,
    pub smoothed_delay: f64,
    pub window: VecDeque<(f64, f64)>,
    pub first_complete_time: Option<SimTime>,
    max_points: usize,
    min_points: usize,
    samples: usize,
}

impl TrendlineState {
    pub fn new(smoothing_coef: f64, max_points: usize, min_points: usize) -> Self {
        assert!(max_points >= 2 && min_points >= 2 && min_points <= max_points);
        Self {
            smoothing_coef,
            acc_delay: 0.0,
            smoothed_delay: 0.0,
            window: VecDeque::with_capacity(max_points),
            first_complete_time: None,
            max_points,
            min_points,
            samples: 0,
        }
    }

    /// Number of delay samples seen so far.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Accumulates `delay_ms`, smooths it, appends the point for `group`
    /// and returns the window's slope once enough points are present.
    pub fn update(&mut self, delay_ms: f64, group: &PacketGroup) -> Option<f64> {
        self.samples += 1;
        self.acc_delay += delay_ms;
        self.smoothed_delay = self.smoothing_coef * self.smoothed_delay
            + (1.0 - self.smoothing_coef) * self.acc_delay;

        let first = *self.first_complete_time.get_or_insert(group.complete_time);
        let x = (group.complete_time.as_micros() as f64 - first.as_micros() as f64) / 1e3;
        if self.window.len() == self.max_points {
            self.window.pop_front();
        }
        self.window.push_back((x, self.smoothed_delay));

        if self.window.len() < self.min_points {
            return None;
        }
        least_squares_slope(&self.window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthUsage {
    Underuse,
    Normal,
    Overuse,
}

#[derive(Debug, Clone)]
pub struct DetectorState {
    pub threshold_gamma: f64,
    pub state: BandwidthUsage,
    /// Milliseconds spent above the threshold in the current excursion.
    pub overuse_accumulator: f64,
    overuse_count: u32,
    prev_slope: f64,
    k_up: f64,
    k_down: f64,
    gamma_min: f64,
    gamma_max: f64,
    overuse_time_ms: f64,
    gain_per_sample: f64,
    gain_max_samples: usize,
}

impl DetectorState {
    pub fn new(cfg: &GccConfig) -> Self {
        Self {
            threshold_gamma: cfg.initial_threshold_ms,
            state: BandwidthUsage::Normal,
            overuse_accumulator: 0.0,
            overuse_count: 0,
            prev_slope: 0.0,
            k_up: cfg.k_up,
            k_down: cfg.k_down,
            gamma_min: cfg.threshold_min_ms,
            gamma_max: cfg.threshold_max_ms,
            overuse_time_ms: cfg.overuse_time_ms,
            gain_per_sample: cfg.slope_gain_per_sample,
            gain_max_samples: cfg.slope_gain_max_samples,
        }
    }

    pub fn gain(&self, samples: usize) -> f64 {
        self.gain_per_sample * samples.min(self.gain_max_samples) as f64
    }

    /// Classifies `slope` (scaled by the sample-count gain) against the
    /// adaptive threshold, then adapts the threshold. `dt` is the time since
    /// the previous call, capped at 100 ms.
    pub fn detect(&mut self, slope: f64, samples: usize, dt: SimTime) -> BandwidthUsage {
        assert!(slope.is_finite(), "non-finite trendline slope");
        let dt_ms = dt.as_millis_f64().min(100.0);
        let modified = slope * self.gain(samples);

        if modified > self.threshold_gamma {
            if self.overuse_count == 0 {
                // Assume the excursion began halfway through the interval.
                self.overuse_accumulator = dt_ms / 2.0;
            } else {
                self.overuse_accumulator += dt_ms;
            }
            self.overuse_count += 1;
            if self.overuse_accumulator > self.overuse_time_ms
                && self.overuse_count > 1
                && slope >= self.prev_slope
            {
                self.overuse_accumulator = 0.0;
                self.overuse_count = 0;
                self.state = BandwidthUsage::Overuse;
            }
        } else if modified < -self.threshold_gamma {
            self.overuse_accumulator = 0.0;
            self.overuse_count = 0;
            self.state = BandwidthUsage::Underuse;
        } else {
            self.overuse_accumulator = 0.0;
            self.overuse_count = 0;
            self.state = BandwidthUsage::Normal;
        }
        self.prev_slope = slope;
        self.adapt_threshold(modified, dt_ms);
        self.state
    }

    fn adapt_threshold(&mut self, modified: f64, dt_ms: f64) {
        let k = if modified.abs() > self.threshold_gamma {
            self.k_up
        } else {
            self.k_down
        };
        self.threshold_gamma += dt_ms * k * (modified.abs() - self.threshold_gamma);
        self.threshold_gamma = self.threshold_gamma.clamp(self.gamma_min, self.gamma_max);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateRegion {
    NearMax,
    MaxUnknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ControlState {
    Hold,
    Increase,
    Decrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateAction {
    Hold,
    AdditiveIncrease,
    MultiplicativeIncrease,
    Decrease,
}

/// Running estimate of the receive rate at which overuse was detected,
/// used to decide whether the controller is still near the link capacity.
#[derive(Debug, Clone, Copy, Default)]
struct CapacityEstimate {
    mean_kbps: Option<f64>,
    var_norm: f64,
}

impl CapacityEstimate {
    const ALPHA: f64 = 0.05;

    fn update(&mut self, sample_kbps: f64) {
        let mean = match self.mean_kbps {
            None => sample_kbps,
            Some(m) => (1.0 - Self::ALPHA) * m + Self::ALPHA * sample_kbps,
        };
        let norm = mean.max(1.0);
        let err = mean - sample_kbps;
        self.var_norm =
            ((1.0 - Self::ALPHA) * self.var_norm + Self::ALPHA * err * err / norm).clamp(0.4, 2.5);
        self.mean_kbps = Some(mean);
    }

    fn std_kbps(&self) -> f64 {
        self.mean_kbps.map_or(0.0, |m| (self.var_norm * m).sqrt())
    }
}

#[derive(Debug, Clone)]
pub struct AimdState {
    rate: f64,
    pub region: RateRegion,
    pub beta: f64,
    pub recv_rate_bps: u64,
    /// Bits added per round trip while near the link maximum.
    pub additive_step: u64,
    state: ControlState,
    capacity: CapacityEstimate,
    last_update: Option<SimTime>,
    last_decrease: Option<SimTime>,
    min_rate: f64,
    max_rate: f64,
    mult_per_sec: f64,
    mult_cap: f64,
}

impl AimdState {
    pub fn new(cfg: &GccConfig) -> Self {
        Self {
            rate: cfg.initial_rate_bps as f64,
            region: RateRegion::MaxUnknown,
            beta: cfg.beta,
            recv_rate_bps: 0,
            additive_step: cfg.mtu_bytes as u64 * 8,
            state: ControlState::Hold,
            capacity: CapacityEstimate::default(),
            last_update: None,
            last_decrease: None,
            min_rate: cfg.min_rate_bps as f64,
            max_rate: cfg.max_rate_bps as f64,
            mult_per_sec: cfg.multiplicative_increase_per_sec,
            mult_cap: cfg.multiplicative_cap_factor,
        }
        .clamped()
    }

    fn clamped(mut self) -> Self {
        self.rate = self.rate.clamp(self.min_rate, self.max_rate);
        self
    }

    pub fn rate_bps(&self) -> u64 {
        self.rate.round() as u64
    }

    pub fn rate_exact(&self) -> f64 {
        self.rate
    }

    pub fn min_rate_bps(&self) -> u64 {
        self.min_rate as u64
    }

    /// Overrides the rate (used by the loss-based cap), clamped to bounds.
    pub fn set_rate(&mut self, bps: f64) {
        self.rate = bps.clamp(self.min_rate, self.max_rate);
    }

    /// Applies one detector verdict. Returns the action taken.
    pub fn aimd_update(
        &mut self,
        signal: BandwidthUsage,
        recv_rate_bps: u64,
        now: SimTime,
        rtt: SimTime,
    ) -> RateAction {
        self.recv_rate_bps = recv_rate_bps;
        let dt = self
            .last_update
            .map_or(0.0, |t| (now.saturating_sub(t)).as_secs_f64().min(1.0));
        self.last_update = Some(now);

        self.state = match (signal, self.state) {
            (BandwidthUsage::Overuse, _) => ControlState::Decrease,
            (BandwidthUsage::Underuse, _) => ControlState::Hold,
            (BandwidthUsage::Normal, ControlState::Hold) => ControlState::Increase,
            (BandwidthUsage::Normal, s) => s,
        };

        let recv_kbps = recv_rate_bps as f64 / 1e3;
        if let Some(mean) = self.capacity.mean_kbps {
            let band = 3.0 * self.capacity.std_kbps();
            if recv_kbps > mean + band {
                self.region = RateRegion::MaxUnknown;
                self.capacity = CapacityEstimate::default();
            }
        }

        let action = match self.state {
            ControlState::Hold => RateAction::Hold,
            ControlState::Increase => {
                if self.region == RateRegion::NearMax {
                    let rtt_s = rtt.as_secs_f64().max(0.01);
                    self.rate += self.additive_step as f64 * dt / rtt_s;
                    RateAction::AdditiveIncrease
                } else {
                    let grown = self.rate * self.mult_per_sec.powf(dt);
                    let cap = if recv_rate_bps > 0 {
                        (self.mult_cap * recv_rate_bps as f64).max(self.rate)
                    } else {
                        grown
                    };
                    self.rate = grown.min(cap);
                    RateAction::MultiplicativeIncrease
                }
            }
            ControlState::Decrease => {
                let interval = SimTime::from_micros(rtt.as_micros().clamp(10_000, 200_000));
                let due = self.last_decrease.is_none_or(|t| now >= t + interval);
                if due && recv_rate_bps > 0 {
                    self.rate = self.beta * recv_rate_bps as f64;
                    self.capacity.update(recv_kbps);
                    self.region = RateRegion::NearMax;
                    self.last_decrease = Some(now);
                    self.state = ControlState::Hold;
                    self.rate = self.rate.clamp(self.min_rate, self.max_rate);
                    return RateAction::Decrease;
                }
                RateAction::Hold
            }
        };
        self.rate = self.rate.clamp(self.min_rate, self.max_rate);
        action
    }
}

/// Receive rate over a sliding window of reported arrivals.
#[derive(Debug, Clone)]
pub struct RecvRateEstimator {
    window: SimTime,
    samples: VecDeque<(SimTime, u64)>,
    bytes: u64,
}

impl RecvRateEstimator {
    pub fn new(window: SimTime) -> Self {
        Self {
            window,
            samples: VecDeque::new(),
            bytes: 0,
        }
    }

    pub fn on_delivered(&mut self, arrival: SimTime, bytes: u64) {
        self.samples.push_back((arrival, bytes));
        self.bytes += bytes;
        let newest = self.samples.iter().map(|s| s.0).max().unwrap_or(arrival);
        while let Some(&(t, b)) = self.samples.front() {
            if t + self.window <= newest {
                self.samples.pop_front();
                self.bytes -= b;
            } else {
                break;
            }
        }
    }

    /// Bits per second over the window; zero when nothing was delivered.
    pub fn rate_bps(&self) -> u64 {
        self.bytes * 8 * 1_000_000 / self.window.as_micros()
    }

    pub fn estimate_recv_rate<'a>(
        &mut self,
        reports: impl IntoIterator<Item = &'a FeedbackReport>,
        log: &SendLog,
    ) -> u64 {
        for r in reports {
            for e in &r.entries {
                if let (Some(at), Some(sent)) = (e.arrival, log.get(e.seq)) {
                    self.on_delivered(at, sent.size_bytes as u64);
                }
            }
        }
        self.rate_bps()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SentPacket {
    pub send_ts: SimTime,
    pub size_bytes: u32,
}

/// Send history indexed by sequence number.
#[derive(Debug, Clone, Default)]
pub struct SendLog {
    base: u64,
    packets: VecDeque<SentPacket>,
}

impl SendLog {
    pub fn record(&mut self, pkt: &MediaPacket) {
        if self.packets.is_empty() {
            self.base = pkt.twcc_seq;
        }
        debug_assert_eq!(pkt.twcc_seq, self.base + self.packets.len() as u64);
        self.packets.push_back(SentPacket {
            send_ts: pkt.send_ts,
            size_bytes: pkt.size_bytes,
        });
    }

    pub fn get(&self, seq: u64) -> Option<SentPacket> {
        seq.checked_sub(self.base)
            .and_then(|i| self.packets.get(i as usize).copied())
    }

    /// Forgets everything below `seq`.
    pub fn prune_below(&mut self, seq: u64) {
        while self.base < seq && !self.packets.is_empty() {
            self.packets.pop_front();
            self.base += 1;
        }
    }
}

/// A rate change made by the controller, kept for post-run auditing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEvent {
    pub at: SimTime,
    pub kind: RateEventKind,
    pub recv_rate_bps: u64,
    pub rate_before: f64,
    pub rate_after: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateEventKind {
    /// Delay-based multiplicative decrease.
    Decrease,
    /// Loss-based cap.
    LossCap,
}

/// Full sender-side pipeline for one flow.
#[derive(Debug, Clone)]
pub struct GccSender {
    cfg: GccConfig,
    log: SendLog,
    grouper: PacketGrouper,
    prev_group: Option<PacketGroup>,
    trendline: TrendlineState,
    detector: DetectorState,
    aimd: AimdState,
    recv: RecvRateEstimator,
    rtt: Option<SimTime>,
    /// (lost, total, window start) of the pooled loss fraction.
    loss_pool: (usize, usize, Option<SimTime>),
    events: Vec<RateEvent>,
}

impl GccSender {
    pub fn new(cfg: GccConfig) -> Self {
        Self {
            grouper: PacketGrouper::new(SimTime::from_secs_f64(cfg.group_window_ms / 1e3)),
            prev_group: None,
            trendline: TrendlineState::new(
                cfg.smoothing_coef,
                cfg.trendline_window,
                cfg.trendline_min_points,
            ),
            detector: DetectorState::new(&cfg),
            aimd: AimdState::new(&cfg),
            recv: RecvRateEstimator::new(SimTime::from_millis(cfg.recv_window_ms)),
            log: SendLog::default(),
            rtt: None,
            loss_pool: (0, 0, None),
            events: Vec::new(),
            cfg,
        }
    }

    pub fn config(&self) -> &GccConfig {
        &self.cfg
    }

    pub fn target_rate_bps(&self) -> u64 {
        self.aimd.rate_bps()
    }

    pub fn min_rate_bps(&self) -> u64 {
        self.cfg.min_rate_bps
    }

    pub fn detector(&self) -> &DetectorState {
        &self.detector
    }

    pub fn aimd(&self) -> &AimdState {
        &self.aimd
    }

    pub fn rtt(&self) -> SimTime {
        self.rtt.unwrap_or(SimTime::from_millis(300))
    }

    pub fn events(&self) -> &[RateEvent] {
        &self.events
    }

    pub fn on_packet_sent(&mut self, pkt: &MediaPacket) {
        self.log.record(pkt);
    }

    /// Runs one feedback report through the pipeline and returns the new
    /// target rate.
    pub fn on_feedback(&mut self, report: &FeedbackReport, now: SimTime) -> u64 {
        // Round trip excluding the time the receiver held the report.
        if let Some(last) = report.entries.iter().rev().find(|e| e.arrival.is_some()) {
            if let (Some(sent), Some(arrived)) = (self.log.get(last.seq), last.arrival) {
                let sample = (arrived - sent.send_ts) + (now - report.sent_at);
                self.rtt = Some(match self.rtt {
                    None => sample,
                    Some(r) => SimTime::from_micros((r.as_micros() * 7 + sample.as_micros()) / 8),
                });
            }
        }

        for group in self.grouper.group_packets(report, &self.log) {
            if let Some(prev) = self.prev_group {
                let d = delay_variation(&prev, &group);
                if let Some(slope) = self.trendline.update(d, &group) {
                    let dt = group.complete_time.saturating_sub(prev.complete_time);
                    self.detector.detect(slope, self.trendline.samples(), dt);
                }
            }
            self.prev_group = Some(group);
        }

        let recv_rate = self.recv.estimate_recv_rate([report], &self.log);
        let before = self.aimd.rate_exact();
        let action = self
            .aimd
            .aimd_update(self.detector.state, recv_rate, now, self.rtt());
        if action == RateAction::Decrease {
            self.events.push(RateEvent {
                at: now,
                kind: RateEventKind::Decrease,
                recv_rate_bps: recv_rate,
                rate_before: before,
                rate_after: self.aimd.rate_exact(),
            });
        }

        let (lost, total, since) = &mut self.loss_pool;
        *lost += report.lost();
        *total += report.entries.len();
        let since = *since.get_or_insert(now);
        if self.cfg.loss_controller && now >= since + SimTime::from_millis(self.cfg.loss_window_ms)
        {
            let (lost, total, _) = std::mem::take(&mut self.loss_pool);
            let loss = if total > 0 {
                lost as f64 / total as f64
            } else {
                0.0
            };
            self.update_loss_cap(loss, recv_rate, now);
        }

        if let Some(first) = report.entries.first() {
            // Keep a margin for groups still open across reports.
            self.log.prune_below(first.seq.saturating_sub(64));
        }
        self.target_rate_bps()
    }

    /// Loss-based cap, judged once per pooled window: above
    /// `loss_threshold` the rate is cut by half the loss fraction.
    fn update_loss_cap(&mut self, loss: f64, recv_rate: u64, now: SimTime) {
        if loss <= self.cfg.loss_threshold {
            return;
        }
        let before = self.aimd.rate_exact();
        self.aimd.set_rate(before * (1.0 - 0.5 * loss));
        self.events.push(RateEvent {
            at: now,
            kind: RateEventKind::LossCap,
            recv_rate_bps: recv_rate,
            rate_before: before,
            rate_after: self.aimd.rate_exact(),
        });
    }
}
