//! Media endpoints: perfect-encoder source, pacer, and the receive side
//! that produces transport-wide feedback (GCC) and ack-vector feedback
//! (SCReAM).

use std::collections::{BTreeMap, VecDeque};

use crate::error::{Result, SimError};
use crate::simcore::SimTime;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediaPacket {
    pub flow_id: u32,
    /// Per-flow transport-wide sequence number, starting at 0.
    pub twcc_seq: u64,
    pub size_bytes: u32,
    pub send_ts: SimTime,
    pub arrival_ts: Option<SimTime>,
}

impl MediaPacket {
    pub fn new(flow_id: u32, twcc_seq: u64, size_bytes: u32, send_ts: SimTime) -> Self {
        Self {
            flow_id,
            twcc_seq,
            size_bytes,
            send_ts,
            arrival_ts: None,
        }
    }

    pub fn one_way_delay(&self) -> Result<SimTime> {
        match self.arrival_ts {
            Some(at) => Ok(at - self.send_ts),
            None => Err(SimError::NotDelivered {
                flow_id: self.flow_id,
                seq: self.twcc_seq,
            }),
        }
    }
}

/// One row of a transport-wide feedback report. `arrival == None` marks
/// the packet as lost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackEntry {
    pub seq: u64,
    pub arrival: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeedbackReport {
    pub flow_id: u32,
    pub entries: Vec<FeedbackEntry>,
    pub sent_at: SimTime,
}

impl FeedbackReport {
    pub fn lost(&self) -> usize {
        self.entries.iter().filter(|e| e.arrival.is_none()).count()
    }

    pub fn loss_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.lost() as f64 / self.entries.len() as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScreamFeedback {
    pub flow_id: u32,
    pub highest_seq: u64,
    /// Bit `k` set means packet `highest_seq - 1 - k` was received.
    pub ack_vector: u64,
    pub receive_ts: SimTime,
}

impl ScreamFeedback {
    /// Sequence numbers this report acknowledges, newest first.
    pub fn acked_seqs(&self) -> impl Iterator<Item = u64> + '_ {
        std::iter::once(self.highest_seq).chain(
            (0..64u64)
                .filter(|&k| self.ack_vector >> k & 1 == 1 && self.highest_seq > k)
                .map(|k| self.highest_seq - 1 - k),
        )
    }
}

/// Encoder whose output rate follows the target exactly, one frame per
/// `frame_interval`, packetized into at most `mtu_bytes` pieces.
#[derive(Debug, Clone)]
pub struct MediaSource {
    pub flow_id: u32,
    pub target_rate_bps: u64,
    pub min_rate_bps: u64,
    pub frame_interval: SimTime,
    pub mtu_bytes: u32,
    next_seq: u64,
    carry_bits: u64,
    emitted_bytes: u64,
}

impl MediaSource {
    pub fn new(flow_id: u32, target_rate_bps: u64, min_rate_bps: u64) -> Self {
        Self {
            flow_id,
            target_rate_bps,
            min_rate_bps,
            frame_interval: SimTime::from_millis(20),
            mtu_bytes: 1200,
            next_seq: 0,
            carry_bits: 0,
            emitted_bytes: 0,
        }
    }

    pub fn with_packetization(mut self, frame_interval: SimTime, mtu_bytes: u32) -> Self {
        self.frame_interval = frame_interval;
        self.mtu_bytes = mtu_bytes;
        self
    }

    pub fn set_target_rate(&mut self, bps: u64) {
        self.target_rate_bps = bps;
    }

    pub fn emitted_bytes(&self) -> u64 {
        self.emitted_bytes
    }

    /// Sequence numbers handed out so far.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// Produces one frame at `now`. Sub-byte remainders carry over so the
    /// long-run output matches the target rate.
    pub fn emit_frame(&mut self, now: SimTime) -> Vec<MediaPacket> {
        let rate = self.target_rate_bps.max(self.min_rate_bps);
        let bits = rate * self.frame_interval.as_micros() / 1_000_000 + self.carry_bits;
        let frame_bytes = (bits / 8).max(1);
        self.carry_bits = bits.saturating_sub(frame_bytes * 8);
        self.emitted_bytes += frame_bytes;

        let mtu = self.mtu_bytes as u64;
        let count = frame_bytes.div_ceil(mtu);
        (0..count)
            .map(|i| {
                let size = if i + 1 == count {
                    frame_bytes - mtu * (count - 1)
                } else {
                    mtu
                };
                let seq = self.next_seq;
                self.next_seq += 1;
                MediaPacket::new(self.flow_id, seq, size as u32, now)
            })
            .collect()
    }
}

/// Spreads frame bursts out at `pacing_rate_bps`.
#[derive(Debug, Default)]
pub struct Pacer {
    queue: VecDeque<MediaPacket>,
    bytes: u64,
    next_send: SimTime,
}

impl Pacer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pkt: MediaPacket) {
        self.bytes += pkt.size_bytes as u64;
        self.queue.push_back(pkt);
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn backlog_bytes(&self) -> u64 {
        self.bytes
    }

    pub fn peek(&self) -> Option<&MediaPacket> {
        self.queue.front()
    }

    /// Earliest time the head packet may leave.
    pub fn next_send_time(&self, now: SimTime) -> Option<SimTime> {
        self.queue.front().map(|_| self.next_send.max(now))
    }

    /// Releases the head packet if its slot has come, stamping `send_ts`.
    /// The following slot opens `size * 8 / pacing_rate_bps` later.
    pub fn pace_out(&mut self, pacing_rate_bps: u64, now: SimTime) -> Option<MediaPacket> {
        assert!(pacing_rate_bps > 0, "pacing rate must be positive");
        if now < self.next_send {
            return None;
        }
        let mut pkt = self.queue.pop_front()?;
        self.bytes -= pkt.size_bytes as u64;
        pkt.send_ts = now;
        self.next_send = now + SimTime::transmission(pkt.size_bytes as u64, pacing_rate_bps);
        Some(pkt)
    }
}

/// Adaptive feedback cadence: aim for `target_entries` per report at the
/// current receive rate, clamped to `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackInterval {
    pub min: SimTime,
    pub max: SimTime,
    pub target_entries: f64,
}

impl Default for FeedbackInterval {
    fn default() -> Self {
        Self {
            min: SimTime::from_millis(50),
            max: SimTime::from_millis(250),
            target_entries: 20.0,
        }
    }
}

impl FeedbackInterval {
    pub fn for_packet_rate(&self, packets_per_sec: f64) -> SimTime {
        if packets_per_sec <= 0.0 {
            return self.max;
        }
        SimTime::from_secs_f64(self.target_entries / packets_per_sec)
            .max(self.min)
            .min(self.max)
    }
}

/// Receive side of a media flow. Keeps the arrival log needed for both
/// feedback formats.
#[derive(Debug)]
pub struct MediaReceiver {
    flow_id: u32,
    /// Arrivals not yet covered by a transport-wide report.
    pending: BTreeMap<u64, SimTime>,
    next_report_seq: u64,
    highest_seq: Option<u64>,
    highest_arrival: SimTime,
    /// Bit `k` set means `highest_seq - 1 - k` arrived.
    history: u64,
    scream_dirty: bool,
    recent: VecDeque<SimTime>,
    interval: FeedbackInterval,
}

impl MediaReceiver {
    pub fn new(flow_id: u32) -> Self {
        Self::starting_at(flow_id, 0)
    }

    /// Receiver whose first expected sequence number is `first_seq`.
    pub fn starting_at(flow_id: u32, first_seq: u64) -> Self {
        Self {
            flow_id,
            pending: BTreeMap::new(),
            next_report_seq: first_seq,
            highest_seq: None,
            highest_arrival: SimTime::ZERO,
            history: 0,
            scream_dirty: false,
            recent: VecDeque::new(),
            interval: FeedbackInterval::default(),
        }
    }

    pub fn with_interval(mut self, interval: FeedbackInterval) -> Self {
        self.interval = interval;
        self
    }

    pub fn on_packet(&mut self, seq: u64, arrival: SimTime) {
        if seq >= self.next_report_seq {
            self.pending.insert(seq, arrival);
        }
        match self.highest_seq {
            None => {
                self.highest_seq = Some(seq);
                self.highest_arrival = arrival;
            }
            Some(h) if seq > h => {
                let shift = seq - h;
                // The old highest becomes bit `shift - 1`.
                self.history = if shift > 64 {
                    0
                } else {
                    let shifted = if shift == 64 {
                        0
                    } else {
                        self.history << shift
                    };
                    shifted | 1 << (shift - 1)
                };
                self.highest_seq = Some(seq);
                self.highest_arrival = arrival;
            }
            Some(h) if seq < h && h - seq <= 64 => {
                self.history |= 1 << (h - seq - 1);
            }
            _ => {}
        }
        self.scream_dirty = true;

        self.recent.push_back(arrival);
        while self
            .recent
            .front()
            .is_some_and(|t| *t + SimTime::from_secs(1) <= arrival)
        {
            self.recent.pop_front();
        }
    }

    /// Time until the next transport-wide report.
    pub fn feedback_interval(&self) -> SimTime {
        self.interval.for_packet_rate(self.recent.len() as f64)
    }

    /// Builds a report covering every sequence number since the previous
    /// report up to the highest received, marking gaps lost. The path is
    /// FIFO so a gap below the highest arrival can never fill in later.
    pub fn build_feedback(&mut self, now: SimTime) -> Option<FeedbackReport> {
        let highest = self.highest_seq?;
        if highest < self.next_report_seq {
            return None;
        }
        let entries = (self.next_report_seq..=highest)
            .map(|seq| FeedbackEntry {
                seq,
                arrival: self.pending.remove(&seq),
            })
            .collect();
        self.next_report_seq = highest + 1;
        Some(FeedbackReport {
            flow_id: self.flow_id,
            entries,
            sent_at: now,
        })
    }

    pub fn build_scream_feedback(&mut self) -> Option<ScreamFeedback> {
        if !self.scream_dirty {
            return None;
        }
        self.scream_dirty = false;
        Some(ScreamFeedback {
            flow_id: self.flow_id,
            highest_seq: self.highest_seq?,
            ack_vector: self.history,
            receive_ts: self.highest_arrival,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_megabit_frame_splits_into_five() {
        let mut src = MediaSource::new(0, 2_000_000, 150_000);
        let pkts = src.emit_frame(SimTime::ZERO);
        let sizes: Vec<u32> = pkts.iter().map(|p| p.size_bytes).collect();
        assert_eq!(sizes, vec![1200, 1200, 1200, 1200, 200]);
        assert_eq!(
            pkts.iter().map(|p| p.twcc_seq).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn min_rate_floor() {
        let mut src = MediaSource::new(0, 0, 150_000);
        let pkts = src.emit_frame(SimTime::ZERO);
        assert!(!pkts.is_empty());
        let total: u32 = pkts.iter().map(|p| p.size_bytes).sum();
        assert_eq!(total, 375);
    }

    #[test]
    fn constant_rate_emits_expected_bytes() {
        let mut src = MediaSource::new(0, 1_000_000, 150_000);
        let mut t = SimTime::ZERO;
        while t < SimTime::from_secs(10) {
            src.emit_frame(t);
            t += src.frame_interval;
        }
        let frame = 1_000_000 / 8 / 50;
        assert!((src.emitted_bytes() as i64 - 1_250_000).abs() <= frame);
    }

    #[test]
    fn one_way_delay_of_dropped_packet_fails() {
        let p = MediaPacket::new(3, 9, 100, SimTime::ZERO);
        assert!(matches!(
            p.one_way_delay(),
            Err(SimError::NotDelivered { flow_id: 3, seq: 9 })
        ));
    }

    #[test]
    fn gap_is_reported_lost() {
        let mut rx = MediaReceiver::starting_at(0, 1);
        for s in [1, 2, 4] {
            rx.on_packet(s, SimTime::from_millis(s));
        }
        let rep = rx.build_feedback(SimTime::from_millis(10)).unwrap();
        let seqs: Vec<(u64, bool)> = rep
            .entries
            .iter()
            .map(|e| (e.seq, e.arrival.is_some()))
            .collect();
        assert_eq!(seqs, vec![(1, true), (2, true), (3, false), (4, true)]);
        assert!(rx.build_feedback(SimTime::from_millis(20)).is_none());
    }

    #[test]
    fn reports_are_contiguous() {
        let mut rx = MediaReceiver::new(0);
        rx.on_packet(0, SimTime::ZERO);
        rx.on_packet(1, SimTime::ZERO);
        let a = rx.build_feedback(SimTime::ZERO).unwrap();
        rx.on_packet(4, SimTime::ZERO);
        let b = rx.build_feedback(SimTime::ZERO).unwrap();
        assert_eq!(a.entries.last().unwrap().seq + 1, b.entries[0].seq);
        assert_eq!(b.lost(), 2);
    }

    #[test]
    fn scream_vector_for_run() {
        let mut rx = MediaReceiver::new(0);
        for s in 10..=20 {
            rx.on_packet(s, SimTime::from_millis(s));
        }
        let fb = rx.build_scream_feedback().unwrap();
        assert_eq!(fb.highest_seq, 20);
        assert_eq!(fb.ack_vector, 0b11_1111_1111);
        assert_eq!(fb.receive_ts, SimTime::from_millis(20));
        assert!(rx.build_scream_feedback().is_none());
    }

    #[test]
    fn scream_vector_gap() {
        let mut rx = MediaReceiver::new(0);
        for s in [17, 18, 20] {
            rx.on_packet(s, SimTime::ZERO);
        }
        let fb = rx.build_scream_feedback().unwrap();
        assert_eq!(fb.ack_vector & 1, 0);
        assert_eq!(fb.ack_vector & 0b110, 0b110);
        let acked: Vec<u64> = fb.acked_seqs().collect();
        assert_eq!(acked, vec![20, 18, 17]);
    }

    #[test]
    fn pacer_gaps() {
        let mut p = Pacer::new();
        for i in 0..5 {
            p.push(MediaPacket::new(0, i, 1200, SimTime::ZERO));
        }
        let mut t = SimTime::ZERO;
        let mut sends = Vec::new();
        while let Some(next) = p.next_send_time(t) {
            t = next;
            let pkt = p.pace_out(2_400_000, t).unwrap();
            sends.push(pkt.send_ts.as_micros());
        }
        assert_eq!(sends, vec![0, 4_000, 8_000, 12_000, 16_000]);
    }

    #[test]
    fn feedback_interval_clamps() {
        let fi = FeedbackInterval::default();
        assert_eq!(fi.for_packet_rate(0.0), SimTime::from_millis(250));
        assert_eq!(fi.for_packet_rate(200.0), SimTime::from_millis(100));
        assert_eq!(fi.for_packet_rate(10_000.0), SimTime::from_millis(50));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use std::collections::BTreeSet;

        proptest! {
            // Ack vector must match a recomputation from the raw receive log.
            #[test]
            fn ack_vector_matches_log(received in proptest::collection::btree_set(0u64..300, 1..200)) {
                let mut rx = MediaReceiver::new(0);
                for s in &received {
                    rx.on_packet(*s, SimTime::ZERO);
                }
                let fb = rx.build_scream_feedback().unwrap();
                let highest = *received.iter().max().unwrap();
                prop_assert_eq!(fb.highest_seq, highest);
                let mut expected = 0u64;
                for k in 0..64u64 {
                    if highest > k && received.contains(&(highest - 1 - k)) {
                        expected |= 1 << k;
                    }
                }
                prop_assert_eq!(fb.ack_vector, expected);
            }

            // Union of all reports covers every sequence number exactly once.
            #[test]
            fn feedback_complete(received in proptest::collection::btree_set(0u64..300, 1..200),
                                 cuts in proptest::collection::vec(0usize..200, 0..10)) {
                let mut rx = MediaReceiver::new(0);
                let cuts: BTreeSet<usize> = cuts.into_iter().collect();
                let mut covered = Vec::new();
                for (i, s) in received.iter().enumerate() {
                    rx.on_packet(*s, SimTime::from_micros(*s));
                    if cuts.contains(&i) {
                        if let Some(r) = rx.build_feedback(SimTime::ZERO) {
                            covered.extend(r.entries);
                        }
                    }
                }
                if let Some(r) = rx.build_feedback(SimTime::ZERO) {
                    covered.extend(r.entries);
                }
                let highest = *received.iter().max().unwrap();
                prop_assert_eq!(covered.len() as u64, highest + 1);
                for (i, e) in covered.iter().enumerate() {
                    prop_assert_eq!(e.seq, i as u64);
                    prop_assert_eq!(e.arrival.is_some(), received.contains(&e.seq));
                }
            }
        }
    }
}
