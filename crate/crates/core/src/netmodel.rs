//! Point-to-point bottleneck: drop-tail byte-bounded FIFO, serialization at
//! the current capacity, fixed propagation delay and Bernoulli loss.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::simcore::{RngStream, SimTime};
use crate::transport::MediaPacket;

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub capacity_bps: u64,
    pub prop_delay: SimTime,
    pub queue_capacity_bytes: u64,
    pub loss_rate: f64,
}

impl LinkConfig {
    /// Sizes the buffer as `buffer_ms` worth of bytes at `capacity_bps`.
    pub fn with_buffer_time(
        capacity_bps: u64,
        prop_delay: SimTime,
        buffer_ms: u64,
        loss_rate: f64,
    ) -> Self {
        Self {
            capacity_bps,
            prop_delay,
            queue_capacity_bytes: buffer_ms * capacity_bps / 8000,
            loss_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity_bps == 0 {
            return Err(SimError::Config("link capacity must be positive".into()));
        }
        if self.queue_capacity_bytes == 0 {
            return Err(SimError::Config("queue capacity must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.loss_rate) {
            return Err(SimError::Config(format!(
                "loss rate {} outside [0, 1]",
                self.loss_rate
            )));
        }
        Ok(())
    }
}

impl Default for LinkConfig {
    /// 2 Mbps, 100 ms one-way, 300 ms of buffering, lossless.
    fn default() -> Self {
        Self::with_buffer_time(2_000_000, SimTime::from_millis(100), 300, 0.0)
    }
}

/// Piecewise-constant capacity over time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandwidthSchedule {
    steps: Vec<(SimTime, u64)>,
}

impl BandwidthSchedule {
    pub fn new(steps: Vec<(SimTime, u64)>) -> Result<Self> {
        match steps.first() {
            None => return Err(SimError::Config("empty bandwidth schedule".into())),
            Some((t, _)) if *t != SimTime::ZERO => {
                return Err(SimError::Config(
                    "bandwidth schedule must start at t=0".into(),
                ))
            }
            _ => {}
        }
        if steps.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(SimError::Config(
                "bandwidth schedule times must be strictly increasing".into(),
            ));
        }
        if steps.iter().any(|(_, bps)| *bps == 0) {
            return Err(SimError::Config(
                "scheduled capacity must be positive".into(),
            ));
        }
        Ok(Self { steps })
    }

    pub fn constant(capacity_bps: u64) -> Self {
        Self {
            steps: vec![(SimTime::ZERO, capacity_bps)],
        }
    }

    /// Capacity changes every `period`, cycling through `rates`.
    pub fn staircase(period: SimTime, rates: &[u64]) -> Result<Self> {
        let steps = rates
            .iter()
            .enumerate()
            .map(|(i, r)| (SimTime::from_micros(period.as_micros() * i as u64), *r))
            .collect();
        Self::new(steps)
    }

    pub fn steps(&self) -> &[(SimTime, u64)] {
        &self.steps
    }

    pub fn max_capacity(&self) -> u64 {
        self.steps.iter().map(|s| s.1).max().unwrap_or(0)
    }

    pub fn capacity_at(&self, t: SimTime) -> u64 {
        let idx = self.steps.partition_point(|(at, _)| *at <= t);
        self.steps[idx.saturating_sub(1)].1
    }

    /// Bits the link could carry over `[start, end)`.
    pub fn integrate_bits(&self, start: SimTime, end: SimTime) -> f64 {
        if end <= start {
            return 0.0;
        }
        let mut total = 0.0;
        for (i, (at, bps)) in self.steps.iter().enumerate() {
            let seg_end = self.steps.get(i + 1).map_or(SimTime::MAX, |s| s.0);
            let lo = (*at).max(start);
            let hi = seg_end.min(end);
            if hi > lo {
                total += *bps as f64 * (hi - lo).as_secs_f64();
            }
        }
        total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    /// Accepted. `departure` is set when the packet went straight into
    /// service and its serialization completes at that time.
    Accepted {
        departure: Option<SimTime>,
    },
    DroppedOverflow,
    DroppedRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueueState {
    pub backlog_bytes: u64,
    pub head_departure: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub offered: u64,
    pub accepted: u64,
    pub dropped_overflow: u64,
    pub dropped_random: u64,
    pub departed: u64,
    pub max_backlog_bytes: u64,
}

/// A packet leaving the serializer, tagged with its accept order.
#[derive(Debug, Clone)]
pub struct Departure {
    pub packet: MediaPacket,
    pub accept_id: u64,
    pub arrives_at: SimTime,
}

#[derive(Debug)]
pub struct BottleneckLink {
    config: LinkConfig,
    queue: VecDeque<(MediaPacket, u64)>,
    backlog_bytes: u64,
    head_departure: Option<SimTime>,
    loss: RngStream,
    stats: LinkStats,
}

impl BottleneckLink {
    pub fn new(config: LinkConfig, loss: RngStream) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            queue: VecDeque::new(),
            backlog_bytes: 0,
            head_departure: None,
            loss,
            stats: LinkStats::default(),
        })
    }

    pub fn config(&self) -> &LinkConfig {
        &self.config
    }

    pub fn capacity_bps(&self) -> u64 {
        self.config.capacity_bps
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    pub fn queue_state(&self) -> QueueState {
        QueueState {
            backlog_bytes: self.backlog_bytes,
            head_departure: self.head_departure,
        }
    }

    pub fn queued_packets(&self) -> usize {
        self.queue.len()
    }

    pub fn enqueue(&mut self, pkt: MediaPacket, now: SimTime) -> EnqueueOutcome {
        assert!(pkt.size_bytes > 0, "zero-sized packet");
        self.stats.offered += 1;
        // Always draw so the loss stream does not depend on queue state.
        let draw = self.loss.next_uniform();
        if draw < self.config.loss_rate {
            self.stats.dropped_random += 1;
            return EnqueueOutcome::DroppedRandom;
        }
        let size = pkt.size_bytes as u64;
        if self.backlog_bytes + size > self.config.queue_capacity_bytes {
            self.stats.dropped_overflow += 1;
            return EnqueueOutcome::DroppedOverflow;
        }
        let accept_id = self.stats.accepted;
        self.stats.accepted += 1;
        self.backlog_bytes += size;
        assert!(self.backlog_bytes <= self.config.queue_capacity_bytes);
        self.stats.max_backlog_bytes = self.stats.max_backlog_bytes.max(self.backlog_bytes);
        self.queue.push_back((pkt, accept_id));

        let departure = if self.head_departure.is_none() {
            let at = now + SimTime::transmission(size, self.config.capacity_bps);
            self.head_departure = Some(at);
            Some(at)
        } else {
            None
        };
        EnqueueOutcome::Accepted { departure }
    }

    /// Finishes serializing the head packet. Returns it with its arrival
    /// time at the far end and, if more packets wait, the next departure.
    pub fn complete_head(&mut self, now: SimTime) -> (Departure, Option<SimTime>) {
        debug_assert_eq!(self.head_departure, Some(now));
        let (packet, accept_id) = self.queue.pop_front().expect("departure from empty link");
        self.backlog_bytes -= packet.size_bytes as u64;
        self.stats.departed += 1;
        self.head_departure = self.queue.front().map(|(next, _)| {
            now + SimTime::transmission(next.size_bytes as u64, self.config.capacity_bps)
        });
        let dep = Departure {
            packet,
            accept_id,
            arrives_at: now + self.config.prop_delay,
        };
        (dep, self.head_departure)
    }

    /// Switches to the capacity in force at `now`. The packet in service
    /// keeps its already-scheduled departure.
    pub fn apply_schedule(&mut self, sched: &BandwidthSchedule, now: SimTime) {
        self.config.capacity_bps = sched.capacity_at(now);
    }
}
