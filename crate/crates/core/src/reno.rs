//! Greedy TCP Reno bulk sender used as loss-based cross traffic: slow
//! start, congestion avoidance and once-per-RTT halving on loss. No
//! retransmissions; the receiver acknowledges every segment individually.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::simcore::SimTime;
use crate::transport::MediaPacket;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenoConfig {
    pub segment_bytes: u32,
    pub initial_cwnd: f64,
    pub initial_ssthresh: f64,
    pub dupack_threshold: u64,
    pub min_rto_ms: u64,
}

impl Default for RenoConfig {
    fn default() -> Self {
        Self {
            segment_bytes: 1200,
            initial_cwnd: 2.0,
            initial_ssthresh: 64.0,
            dupack_threshold: 3,
            min_rto_ms: 1_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenoState {
    pub cwnd_segments: f64,
    pub ssthresh_segments: f64,
    pub segment_bytes: u32,
    pub rtt_estimate: SimTime,
    pub in_flight: u64,
    last_reduction: Option<SimTime>,
}

impl RenoState {
    pub fn new(cfg: &RenoConfig) -> Self {
        Self {
            cwnd_segments: cfg.initial_cwnd.max(1.0),
            ssthresh_segments: cfg.initial_ssthresh.max(2.0),
            segment_bytes: cfg.segment_bytes,
            rtt_estimate: SimTime::from_millis(200),
            in_flight: 0,
            last_reduction: None,
        }
    }

    pub fn in_slow_start(&self) -> bool {
        self.cwnd_segments < self.ssthresh_segments
    }

    /// One segment per ack in slow start, `n / cwnd` in congestion
    /// avoidance (about one segment per round trip).
    pub fn on_ack(&mut self, newly_acked_segments: u64) {
        let n = newly_acked_segments as f64;
        if self.in_slow_start() {
            self.cwnd_segments += n;
        } else {
            self.cwnd_segments += n / self.cwnd_segments;
        }
    }

    /// Halves the window unless a reduction already happened within the
    /// last round trip.
    pub fn on_loss(&mut self, now: SimTime) -> bool {
        if self
            .last_reduction
            .is_some_and(|t| now < t + self.rtt_estimate)
        {
            return false;
        }
        self.last_reduction = Some(now);
        self.ssthresh_segments = (self.cwnd_segments / 2.0).max(2.0);
        self.cwnd_segments = self.ssthresh_segments;
        true
    }

    pub fn on_timeout(&mut self, now: SimTime) {
        self.last_reduction = Some(now);
        self.ssthresh_segments = (self.cwnd_segments / 2.0).max(2.0);
        self.cwnd_segments = 1.0;
    }
}

#[derive(Debug)]
pub struct RenoSender {
    pub flow_id: u32,
    cfg: RenoConfig,
    state: RenoState,
    next_seq: u64,
    outstanding: BTreeMap<u64, SimTime>,
    highest_acked: Option<u64>,
    srtt: Option<SimTime>,
    last_progress: SimTime,
    losses: u64,
    reductions: u64,
}

impl RenoSender {
    pub fn new(flow_id: u32, cfg: RenoConfig) -> Self {
        Self {
            flow_id,
            state: RenoState::new(&cfg),
            cfg,
            next_seq: 0,
            outstanding: BTreeMap::new(),
            highest_acked: None,
            srtt: None,
            last_progress: SimTime::ZERO,
            losses: 0,
            reductions: 0,
        }
    }

    pub fn state(&self) -> &RenoState {
        &self.state
    }

    pub fn cwnd_bytes(&self) -> u64 {
        (self.state.cwnd_segments * self.cfg.segment_bytes as f64) as u64
    }

    pub fn losses(&self) -> u64 {
        self.losses
    }

    pub fn reductions(&self) -> u64 {
        self.reductions
    }

    pub fn start(&mut self, now: SimTime) {
        self.last_progress = now;
    }

    /// Next segment if the window has room.
    pub fn try_send(&mut self, now: SimTime) -> Option<MediaPacket> {
        if (self.state.in_flight as f64) + 1.0 > self.state.cwnd_segments.floor() {
            return None;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.outstanding.insert(seq, now);
        self.state.in_flight += 1;
        Some(MediaPacket::new(
            self.flow_id,
            seq,
            self.cfg.segment_bytes,
            now,
        ))
    }

    /// Handles the acknowledgement of `seq`. Segments `dupack_threshold` or
    /// more behind the newest ack are declared lost.
    pub fn on_ack(&mut self, seq: u64, now: SimTime) {
        let Some(sent) = self.outstanding.remove(&seq) else {
            return;
        };
        self.state.in_flight -= 1;
        self.last_progress = now;
        let sample = now - sent;
        let srtt = match self.srtt {
            None => sample,
            Some(r) => SimTime::from_micros((r.as_micros() * 7 + sample.as_micros()) / 8),
        };
        self.srtt = Some(srtt);
        self.state.rtt_estimate = srtt;
        self.highest_acked = Some(self.highest_acked.map_or(seq, |h| h.max(seq)));

        let horizon = self
            .highest_acked
            .unwrap_or(0)
            .saturating_sub(self.cfg.dupack_threshold - 1);
        let lost: Vec<u64> = self.outstanding.range(..horizon).map(|(s, _)| *s).collect();
        for s in &lost {
            self.outstanding.remove(s);
            self.state.in_flight -= 1;
        }
        self.losses += lost.len() as u64;

        if !lost.is_empty() {
            if self.state.on_loss(now) {
                self.reductions += 1;
            }
        } else {
            self.state.on_ack(1);
        }
    }

    fn rto(&self) -> SimTime {
        let min = SimTime::from_millis(self.cfg.min_rto_ms);
        self.srtt
            .map_or(min, |r| SimTime::from_micros(r.as_micros() * 2).max(min))
    }

    /// Fires the retransmission-timeout surrogate when nothing has been
    /// acknowledged for an RTO: everything outstanding is written off.
    pub fn check_timeout(&mut self, now: SimTime) -> bool {
        if self.outstanding.is_empty() || now < self.last_progress + self.rto() {
            return false;
        }
        self.losses += self.outstanding.len() as u64;
        self.outstanding.clear();
        self.state.in_flight = 0;
        self.state.on_timeout(now);
        self.reductions += 1;
        self.last_progress = now;
        true
    }
}
