//! Discrete-event engine: integer microsecond clock, `(fire_at, seq)`
//! ordered event queue and seeded random streams.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Microseconds since simulation start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond; negative input saturates at zero.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e6).round().max(0.0) as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    /// Time needed to clock `bytes` onto a link running at `rate_bps`,
    /// rounded up to the next microsecond.
    pub fn transmission(bytes: u64, rate_bps: u64) -> SimTime {
        assert!(rate_bps > 0, "transmission time at zero rate");
        let bits = bytes as u128 * 8 * 1_000_000;
        SimTime(bits.div_ceil(rate_bps as u128) as u64)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("SimTime subtraction underflow"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// A scheduled action. Dispatch order is `(fire_at, seq)`.
#[derive(Debug, Clone)]
pub struct Event<A> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub action: A,
}

impl<A> PartialEq for Event<A> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<A> Eq for Event<A> {}

impl<A> PartialOrd for Event<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Event<A> {
    // Reversed so the std max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

/// Event queue with a monotone clock.
#[derive(Debug)]
pub struct EventQueue<A> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Event<A>>,
    dispatched: u64,
}

impl<A> Default for EventQueue<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> EventQueue<A> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Number of events popped so far.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Schedules `action` at the absolute time `fire_at`.
    pub fn schedule(&mut self, fire_at: SimTime, action: A) -> Result<u64, SimError> {
        if fire_at < self.now {
            return Err(SimError::ScheduleInPast {
                at: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event {
            fire_at,
            seq,
            action,
        });
        Ok(seq)
    }

    /// Schedules `action` at `now + delay`; cannot fail.
    pub fn schedule_in(&mut self, delay: SimTime, action: A) -> u64 {
        let at = self.now + delay;
        self.schedule(at, action).expect("relative schedule")
    }

    /// Pops the next event if it fires at or before `end`, advancing the clock.
    pub fn pop_until(&mut self, end: SimTime) -> Option<Event<A>> {
        if self.heap.peek().is_some_and(|e| e.fire_at <= end) {
            let ev = self.heap.pop()?;
            debug_assert!(ev.fire_at >= self.now);
            self.now = ev.fire_at;
            self.dispatched += 1;
            Some(ev)
        } else {
            None
        }
    }

    /// Dispatches every event with `fire_at <= end` through `handler`, then
    /// sets the clock to `end`. The handler may schedule further events.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F)
    where
        F: FnMut(&mut Self, Event<A>),
    {
        while let Some(ev) = self.pop_until(end) {
            handler(self, ev);
        }
        if end > self.now {
            self.now = end;
        }
    }
}

/// Independent deterministic random stream keyed by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw in `[0, 1)`.
    pub fn next_uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(q: &mut EventQueue<&'static str>, end: SimTime) -> Vec<(u64, &'static str)> {
        let mut out = Vec::new();
        q.run_until(end, |_, ev| out.push((ev.fire_at.as_micros(), ev.action)));
        out
    }

    #[test]
    fn dispatches_in_time_order() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_micros(5), "five").unwrap();
        q.schedule(SimTime::from_micros(3), "three").unwrap();
        assert_eq!(
            drain(&mut q, SimTime::from_secs(1)),
            vec![(3, "three"), (5, "five")]
        );
    }

    #[test]
    fn ties_break_by_insertion() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_micros(7), "A").unwrap();
        q.schedule(SimTime::from_micros(7), "B").unwrap();
        assert_eq!(
            drain(&mut q, SimTime::from_secs(1)),
            vec![(7, "A"), (7, "B")]
        );
    }

    #[test]
    fn scheduling_in_the_past_fails() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.run_until(SimTime::from_micros(10), |_, _| {});
        let err = q.schedule(SimTime::from_micros(9), ()).unwrap_err();
        assert!(matches!(err, SimError::ScheduleInPast { .. }));
    }

    #[test]
    fn empty_run_advances_clock() {
        let mut q: EventQueue<()> = EventQueue::new();
        q.run_until(SimTime::from_secs(200), |_, _| {});
        assert_eq!(q.now(), SimTime::from_secs(200));
    }

    #[test]
    fn later_events_stay_queued() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::from_secs(150), "late").unwrap();
        assert!(drain(&mut q, SimTime::from_secs(100)).is_empty());
        assert_eq!(q.now(), SimTime::from_secs(100));
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn handler_can_chain_events() {
        let mut q = EventQueue::new();
        q.schedule(SimTime::ZERO, 0u32).unwrap();
        let mut seen = Vec::new();
        q.run_until(SimTime::from_millis(10), |q, ev| {
            seen.push(ev.fire_at.as_micros());
            if ev.action < 3 {
                q.schedule_in(SimTime::from_millis(2), ev.action + 1);
            }
        });
        assert_eq!(seen, vec![0, 2_000, 4_000, 6_000]);
    }

    #[test]
    fn transmission_time() {
        assert_eq!(
            SimTime::transmission(1000, 2_000_000),
            SimTime::from_millis(4)
        );
        assert_eq!(
            SimTime::transmission(1000, 500_000),
            SimTime::from_millis(16)
        );
        // 9600 bits at 3 Mbps is 3200 us exactly; 1 byte at 3 Mbps rounds up.
        assert_eq!(SimTime::transmission(1, 3_000_000), SimTime::from_micros(3));
    }

    #[test]
    fn rng_streams_replay() {
        let mut a = RngStream::new(42, 7);
        let mut b = RngStream::new(42, 7);
        for _ in 0..1000 {
            assert_eq!(a.next_uniform().to_bits(), b.next_uniform().to_bits());
        }
    }

    #[test]
    fn rng_mean_is_half() {
        let mut s = RngStream::new(1, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let u = s.next_uniform();
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn rng_streams_differ() {
        let mut a = RngStream::new(9, 1);
        let mut b = RngStream::new(9, 2);
        let differs = (0..100).any(|_| a.next_uniform() != b.next_uniform());
        assert!(differs);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dispatch_is_lexicographic(times in proptest::collection::vec(0u64..50, 1..64)) {
                let mut q = EventQueue::new();
                for (i, t) in times.iter().enumerate() {
                    q.schedule(SimTime::from_micros(*t), i).unwrap();
                }
                let mut order = Vec::new();
                q.run_until(SimTime::from_micros(100), |_, ev| order.push((ev.fire_at, ev.seq)));
                prop_assert_eq!(order.len(), times.len());
                for w in order.windows(2) {
                    prop_assert!(w[0] < w[1]);
                }
            }
        }
    }
}
