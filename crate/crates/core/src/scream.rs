//! SCReAM sender: delay-target congestion window, RTP queue between the
//! encoder and the network, and a media-rate controller fed by RTP queue
//! delay, transmit rate and ack rate.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::simcore::SimTime;
use crate::transport::{MediaPacket, ScreamFeedback};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreamConfig {
    pub queue_delay_target_ms: u64,
    pub gain_up: f64,
    pub gain_down: f64,
    pub mss_bytes: u32,
    pub min_cwnd_mss: u32,
    pub initial_cwnd_bytes: u64,
    /// cwnd may not exceed this multiple of the recent peak bytes in flight.
    pub bytes_in_flight_headroom: f64,
    pub rtp_queue_delay_cap_ms: u64,
    /// Frames older than this are dropped from the RTP queue unsent.
    pub rtp_queue_discard_ms: u64,
    pub ramp_up: f64,
    pub rate_update_interval_ms: u64,
    pub rate_window_ms: u64,
    pub initial_rate_bps: u64,
    pub min_rate_bps: u64,
    pub max_rate_bps: u64,
    pub base_owd_epoch_s: u64,
    pub reorder_margin: u64,
    pub pacing_factor: f64,
}

impl Default for ScreamConfig {
    fn default() -> Self {
        Self {
            queue_delay_target_ms: 100,
            gain_up: 1.0,
            gain_down: 2.0,
            mss_bytes: 1200,
            min_cwnd_mss: 2,
            initial_cwnd_bytes: 5_000,
            bytes_in_flight_headroom: 2.0,
            rtp_queue_delay_cap_ms: 200,
            rtp_queue_discard_ms: 1_000,
            ramp_up: 1.05,
            rate_update_interval_ms: 200,
            rate_window_ms: 1_000,
            initial_rate_bps: 300_000,
            min_rate_bps: 150_000,
            max_rate_bps: 3_000_000,
            base_owd_epoch_s: 60,
            reorder_margin: 3,
            pacing_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CwndState {
    cwnd: f64,
    pub base_owd: SimTime,
    pub queue_delay_target: SimTime,
    pub gain_up: f64,
    pub gain_down: f64,
    pub mss_bytes: u32,
    pub bytes_in_flight: u64,
    pub min_cwnd: u64,
    /// Minimum of the previous epoch; `base_owd` also honours it.
    prev_epoch_min: SimTime,
    epoch_min: SimTime,
    epoch_start: SimTime,
    epoch_len: SimTime,
    headroom: f64,
    peak_in_flight: u64,
    prev_peak_in_flight: u64,
    peak_rotated_at: SimTime,
    last_loss_reaction: Option<SimTime>,
    pub queue_delay: SimTime,
}

/// What a feedback report did to the window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FeedbackOutcome {
    pub bytes_newly_acked: u64,
    pub packets_lost: u64,
    pub halved: bool,
}

impl CwndState {
    pub fn new(cfg: &ScreamConfig) -> Self {
        let min_cwnd = cfg.min_cwnd_mss as u64 * cfg.mss_bytes as u64;
        Self {
            cwnd: cfg.initial_cwnd_bytes.max(min_cwnd) as f64,
            base_owd: SimTime::MAX,
            queue_delay_target: SimTime::from_millis(cfg.queue_delay_target_ms),
            gain_up: cfg.gain_up,
            gain_down: cfg.gain_down,
            mss_bytes: cfg.mss_bytes,
            bytes_in_flight: 0,
            min_cwnd,
            prev_epoch_min: SimTime::MAX,
            epoch_min: SimTime::MAX,
            epoch_start: SimTime::ZERO,
            epoch_len: SimTime::from_secs(cfg.base_owd_epoch_s),
            headroom: cfg.bytes_in_flight_headroom,
            peak_in_flight: 0,
            prev_peak_in_flight: 0,
            peak_rotated_at: SimTime::ZERO,
            last_loss_reaction: None,
            queue_delay: SimTime::ZERO,
        }
    }

    pub fn cwnd_bytes(&self) -> u64 {
        self.cwnd as u64
    }

    pub fn cwnd_exact(&self) -> f64 {
        self.cwnd
    }

    pub fn set_cwnd(&mut self, bytes: f64) {
        self.cwnd = bytes.max(self.min_cwnd as f64);
    }

    pub fn can_transmit(&self, next_pkt_size: u32) -> bool {
        self.bytes_in_flight + next_pkt_size as u64 <= self.cwnd as u64
    }

    pub fn on_sent(&mut self, size: u32, now: SimTime) {
        self.bytes_in_flight += size as u64;
        if now >= self.peak_rotated_at + SimTime::from_secs(1) {
            self.prev_peak_in_flight = self.peak_in_flight;
            self.peak_in_flight = 0;
            self.peak_rotated_at = now;
        }
        self.peak_in_flight = self.peak_in_flight.max(self.bytes_in_flight);
    }

    /// Feeds one one-way delay sample into the base-delay tracker.
    fn observe_owd(&mut self, acked_owd: SimTime, now: SimTime) {
        if now >= self.epoch_start + self.epoch_len {
            self.prev_epoch_min = self.epoch_min;
            self.epoch_min = SimTime::MAX;
            self.epoch_start = now;
        }
        self.epoch_min = self.epoch_min.min(acked_owd);
        self.base_owd = self.epoch_min.min(self.prev_epoch_min);
        self.queue_delay = acked_owd.saturating_sub(self.base_owd);
    }

    /// Window update for one feedback: moves cwnd towards the queue delay
    /// target in proportion to the bytes newly acknowledged.
    pub fn apply_window_update(
        &mut self,
        acked_owd: SimTime,
        bytes_newly_acked: u64,
        now: SimTime,
    ) {
        self.observe_owd(acked_owd, now);
        let target = self.queue_delay_target.as_micros() as f64;
        let off_target = (target - self.queue_delay.as_micros() as f64) / target;
        let mss = self.mss_bytes as f64;
        if off_target > 0.0 {
            let limited = bytes_newly_acked.min(2 * self.mss_bytes as u64) as f64;
            let grown = self.cwnd + self.gain_up * off_target * limited * mss / self.cwnd;
            // Growth stops at a multiple of what was recently in flight.
            let peak = self.peak_in_flight.max(self.prev_peak_in_flight) as f64;
            let ceiling = (self.headroom * peak).max(self.min_cwnd as f64);
            self.cwnd = self.cwnd.max(grown.min(ceiling));
        } else {
            self.cwnd += self.gain_down * off_target * bytes_newly_acked as f64 * mss / self.cwnd;
        }
        self.cwnd = self.cwnd.max(self.min_cwnd as f64);
    }

    /// Halves the window, at most once per `rtt`.
    pub fn on_loss(&mut self, now: SimTime, rtt: SimTime) -> bool {
        if self.last_loss_reaction.is_some_and(|t| now < t + rtt) {
            return false;
        }
        self.last_loss_reaction = Some(now);
        self.cwnd = (0.5 * self.cwnd).max(self.min_cwnd as f64);
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PacketState {
    InFlight,
    Acked,
    Lost,
}

#[derive(Debug, Clone, Copy)]
struct SentRecord {
    send_ts: SimTime,
    size: u32,
    state: PacketState,
}

/// FIFO of packetized frames awaiting transmission.
#[derive(Debug, Default)]
pub struct RtpQueue {
    packets: VecDeque<(MediaPacket, SimTime)>,
    bytes: u64,
    discarded: u64,
}

impl RtpQueue {
    pub fn push(&mut self, pkt: MediaPacket, now: SimTime) {
        self.bytes += pkt.size_bytes as u64;
        self.packets.push_back((pkt, now));
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn discarded_packets(&self) -> u64 {
        self.discarded
    }

    /// Age of the head packet.
    pub fn delay(&self, now: SimTime) -> SimTime {
        self.packets
            .front()
            .map_or(SimTime::ZERO, |(_, t)| now.saturating_sub(*t))
    }

    fn peek_size(&self) -> Option<u32> {
        self.packets.front().map(|(p, _)| p.size_bytes)
    }

    fn pop(&mut self) -> Option<MediaPacket> {
        let (pkt, _) = self.packets.pop_front()?;
        self.bytes -= pkt.size_bytes as u64;
        Some(pkt)
    }

    fn discard_older_than(&mut self, now: SimTime, max_age: SimTime) {
        while self
            .packets
            .front()
            .is_some_and(|(_, t)| now.saturating_sub(*t) > max_age)
        {
            self.pop();
            self.discarded += 1;
        }
    }
}

/// Bytes per second over a trailing window.
#[derive(Debug, Clone)]
struct RateMeter {
    window: SimTime,
    samples: VecDeque<(SimTime, u64)>,
    bytes: u64,
}

impl RateMeter {
    fn new(window: SimTime) -> Self {
        Self {
            window,
            samples: VecDeque::new(),
            bytes: 0,
        }
    }

    fn add(&mut self, now: SimTime, bytes: u64) {
        self.samples.push_back((now, bytes));
        self.bytes += bytes;
    }

    fn rate_bps(&mut self, now: SimTime) -> u64 {
        while let Some(&(t, b)) = self.samples.front() {
            if t + self.window <= now {
                self.samples.pop_front();
                self.bytes -= b;
            } else {
                break;
            }
        }
        self.bytes * 8 * 1_000_000 / self.window.as_micros()
    }
}

/// Media rate law. Ramps multiplicatively while the RTP queue is short and
/// the window did not hold packets back; scales down with RTP queue delay
/// in excess of the cap.
pub fn update_media_rate(
    current_target_bps: f64,
    rtp_queue_delay: SimTime,
    cwnd_limited: bool,
    transmit_rate_bps: u64,
    ack_rate_bps: u64,
    cfg: &ScreamConfig,
) -> f64 {
    let cap = SimTime::from_millis(cfg.rtp_queue_delay_cap_ms);
    let min = cfg.min_rate_bps as f64;
    let max = cfg.max_rate_bps as f64;
    let next = if rtp_queue_delay > cap {
        let excess = cap.as_micros() as f64 / rtp_queue_delay.as_micros() as f64;
        current_target_bps.min(transmit_rate_bps as f64) * excess
    } else if !cwnd_limited && ack_rate_bps as f64 >= 0.5 * transmit_rate_bps as f64 {
        current_target_bps * cfg.ramp_up
    } else {
        current_target_bps
    };
    next.clamp(min, max)
}

#[derive(Debug)]
pub struct ScreamSender {
    cfg: ScreamConfig,
    cwnd: CwndState,
    rtp_queue: RtpQueue,
    log: VecDeque<SentRecord>,
    log_base: u64,
    next_seq: u64,
    /// First sequence number not yet acked or declared lost.
    unresolved: u64,
    target_rate: f64,
    transmit: RateMeter,
    acked: RateMeter,
    cwnd_limited: bool,
    next_pace: SimTime,
    srtt: Option<SimTime>,
    lost_packets: u64,
    max_in_flight_violation: bool,
}

impl ScreamSender {
    pub fn new(cfg: ScreamConfig) -> Self {
        let window = SimTime::from_millis(cfg.rate_window_ms);
        Self {
            cwnd: CwndState::new(&cfg),
            rtp_queue: RtpQueue::default(),
            log: VecDeque::new(),
            log_base: 0,
            next_seq: 0,
            unresolved: 0,
            target_rate: (cfg.initial_rate_bps as f64)
                .clamp(cfg.min_rate_bps as f64, cfg.max_rate_bps as f64),
            transmit: RateMeter::new(window),
            acked: RateMeter::new(window),
            cwnd_limited: false,
            next_pace: SimTime::ZERO,
            srtt: None,
            lost_packets: 0,
            max_in_flight_violation: false,
            cfg,
        }
    }

    pub fn config(&self) -> &ScreamConfig {
        &self.cfg
    }

    pub fn cwnd(&self) -> &CwndState {
        &self.cwnd
    }

    pub fn cwnd_mut(&mut self) -> &mut CwndState {
        &mut self.cwnd
    }

    pub fn rtp_queue(&self) -> &RtpQueue {
        &self.rtp_queue
    }

    pub fn target_rate_bps(&self) -> u64 {
        self.target_rate.round() as u64
    }

    pub fn min_rate_bps(&self) -> u64 {
        self.cfg.min_rate_bps
    }

    pub fn lost_packets(&self) -> u64 {
        self.lost_packets
    }

    pub fn rtt(&self) -> SimTime {
        self.srtt.unwrap_or(SimTime::from_millis(300))
    }

    /// True if a packet was ever released past the window.
    pub fn window_violated(&self) -> bool {
        self.max_in_flight_violation
    }

    pub fn enqueue_frame(&mut self, packets: Vec<MediaPacket>, now: SimTime) {
        for p in packets {
            self.rtp_queue.push(p, now);
        }
    }

    /// Releases the next packet if both the window and the pacer allow it.
    /// The returned packet carries its transport sequence number.
    pub fn try_send(&mut self, now: SimTime) -> Option<MediaPacket> {
        self.rtp_queue
            .discard_older_than(now, SimTime::from_millis(self.cfg.rtp_queue_discard_ms));
        let size = self.rtp_queue.peek_size()?;
        if !self.cwnd.can_transmit(size) {
            self.cwnd_limited = true;
            return None;
        }
        if now < self.next_pace {
            return None;
        }
        let mut pkt = self.rtp_queue.pop()?;
        pkt.twcc_seq = self.next_seq;
        pkt.send_ts = now;
        self.next_seq += 1;
        if self.log.is_empty() {
            self.log_base = pkt.twcc_seq;
        }
        self.log.push_back(SentRecord {
            send_ts: now,
            size: pkt.size_bytes,
            state: PacketState::InFlight,
        });
        self.cwnd.on_sent(pkt.size_bytes, now);
        if self.cwnd.bytes_in_flight > self.cwnd.cwnd_bytes() {
            self.max_in_flight_violation = true;
        }
        self.transmit.add(now, pkt.size_bytes as u64);
        let pace_rate = (self.target_rate * self.cfg.pacing_factor).max(1.0) as u64;
        self.next_pace = now + SimTime::transmission(pkt.size_bytes as u64, pace_rate);
        Some(pkt)
    }

    /// When the pacer will next allow a send, if a packet is waiting and the
    /// window is open.
    pub fn next_send_time(&self, now: SimTime) -> Option<SimTime> {
        let size = self.rtp_queue.peek_size()?;
        self.cwnd
            .can_transmit(size)
            .then(|| self.next_pace.max(now))
    }

    fn record(&mut self, seq: u64) -> Option<&mut SentRecord> {
        seq.checked_sub(self.log_base)
            .and_then(|i| self.log.get_mut(i as usize))
    }

    pub fn on_feedback(&mut self, fb: &ScreamFeedback, now: SimTime) -> Result<FeedbackOutcome> {
        let highest = self
            .record(fb.highest_seq)
            .map(|r| r.send_ts)
            .ok_or(SimError::UnknownSequence(fb.highest_seq))?;
        let acked_owd = fb.receive_ts.saturating_sub(highest);

        let rtt_sample = now.saturating_sub(highest);
        self.srtt = Some(match self.srtt {
            None => rtt_sample,
            Some(r) => SimTime::from_micros((r.as_micros() * 7 + rtt_sample.as_micros()) / 8),
        });

        let mut outcome = FeedbackOutcome::default();
        let acked: Vec<u64> = fb.acked_seqs().collect();
        for seq in acked {
            if let Some(rec) = self.record(seq) {
                if rec.state == PacketState::InFlight {
                    rec.state = PacketState::Acked;
                    outcome.bytes_newly_acked += rec.size as u64;
                }
            }
        }
        self.cwnd.bytes_in_flight -= outcome.bytes_newly_acked;
        self.acked.add(now, outcome.bytes_newly_acked);
        self.cwnd
            .apply_window_update(acked_owd, outcome.bytes_newly_acked, now);

        // Anything still in flight more than `reorder_margin` behind the
        // highest acknowledged packet is lost.
        let horizon = fb.highest_seq.saturating_sub(self.cfg.reorder_margin);
        while self.unresolved < horizon {
            let seq = self.unresolved;
            if let Some(rec) = self.record(seq) {
                if rec.state == PacketState::InFlight {
                    rec.state = PacketState::Lost;
                    let size = rec.size as u64;
                    self.cwnd.bytes_in_flight -= size;
                    outcome.packets_lost += 1;
                }
            }
            self.unresolved += 1;
        }
        self.lost_packets += outcome.packets_lost;
        if outcome.packets_lost > 0 {
            outcome.halved = self.cwnd.on_loss(now, self.rtt());
        }

        // Drop history nobody can reference any more.
        let keep_from = self.unresolved.min(fb.highest_seq.saturating_sub(64));
        while self.log_base < keep_from && !self.log.is_empty() {
            self.log.pop_front();
            self.log_base += 1;
        }
        Ok(outcome)
    }

    /// Periodic media-rate update; returns the new target.
    pub fn update_rate(&mut self, now: SimTime) -> u64 {
        let transmit = self.transmit.rate_bps(now);
        let ack = self.acked.rate_bps(now);
        self.target_rate = update_media_rate(
            self.target_rate,
            self.rtp_queue.delay(now),
            self.cwnd_limited,
            transmit,
            ack,
            &self.cfg,
        );
        self.cwnd_limited = false;
        self.target_rate_bps()
    }
}
