//! Small hand-built simulations of the link and transport pieces.

use rmcat_core::gcc::{GccConfig, GccSender, PacketGrouper, SendLog};
use rmcat_core::netmodel::{BandwidthSchedule, BottleneckLink, EnqueueOutcome, LinkConfig};
use rmcat_core::simcore::{EventQueue, RngStream};
use rmcat_core::transport::{FeedbackInterval, MediaPacket, MediaReceiver, MediaSource, Pacer};
use rmcat_core::SimTime;

fn ms(v: u64) -> SimTime {
    SimTime::from_millis(v)
}

#[derive(Debug)]
enum Ev {
    Offer,
    Departure,
    Arrive(MediaPacket),
    Capacity,
}

struct LinkRun {
    owds: Vec<(SimTime, SimTime)>,
    delivered: Vec<(SimTime, u64)>,
    overflow: u64,
    max_backlog: u64,
}

/// Offers `size`-byte packets every `gap` until `until`, through a link
/// following `sched`.
fn drive_link(sched: &BandwidthSchedule, size: u32, gap: SimTime, until: SimTime) -> LinkRun {
    let cfg = LinkConfig {
        capacity_bps: sched.capacity_at(SimTime::ZERO),
        ..Default::default()
    };
    let mut link = BottleneckLink::new(cfg, RngStream::new(1, 0)).unwrap();
    let mut q = EventQueue::new();
    q.schedule(SimTime::ZERO, Ev::Offer).unwrap();
    for &(t, _) in sched.steps().iter().skip(1) {
        q.schedule(t, Ev::Capacity).unwrap();
    }
    let mut out = LinkRun {
        owds: Vec::new(),
        delivered: Vec::new(),
        overflow: 0,
        max_backlog: 0,
    };
    let mut seq = 0;
    while let Some(ev) = q.pop_until(until + SimTime::from_secs(1)) {
        let now = q.now();
        match ev.action {
            Ev::Offer => {
                if now >= until {
                    continue;
                }
                match link.enqueue(MediaPacket::new(0, seq, size, now), now) {
                    EnqueueOutcome::Accepted {
                        departure: Some(at),
                    } => {
                        q.schedule(at, Ev::Departure).unwrap();
                    }
                    EnqueueOutcome::DroppedOverflow => out.overflow += 1,
                    _ => {}
                }
                out.max_backlog = out.max_backlog.max(link.queue_state().backlog_bytes);
                seq += 1;
                q.schedule_in(gap, Ev::Offer);
            }
            Ev::Departure => {
                let (dep, next) = link.complete_head(now);
                q.schedule(dep.arrives_at, Ev::Arrive(dep.packet)).unwrap();
                if let Some(at) = next {
                    q.schedule(at, Ev::Departure).unwrap();
                }
            }
            Ev::Arrive(p) => {
                out.owds.push((p.send_ts, now - p.send_ts));
                out.delivered.push((now, p.size_bytes as u64));
            }
            Ev::Capacity => link.apply_schedule(sched, now),
        }
    }
    out
}

#[test]
fn full_buffer_bounds_owd_near_404ms() {
    // 2.4 Mbps offered into 2 Mbps: the queue fills and stays full.
    let sched = BandwidthSchedule::constant(2_000_000);
    let run = drive_link(
        &sched,
        1200,
        SimTime::from_micros(4_000),
        SimTime::from_secs(10),
    );
    assert!(run.overflow > 0);
    assert!(run.max_backlog <= 75_000);
    let max = run.owds.iter().map(|(_, d)| *d).max().unwrap();
    // 300 ms of buffer + 100 ms propagation + one 4.8 ms serialization.
    let bound = ms(400) + SimTime::transmission(1200, 2_000_000);
    assert!(max <= bound, "max owd {max}");
    assert!(max >= ms(395), "max owd {max}");
}

#[test]
fn burst_fills_to_cap_and_last_packet_waits() {
    let mut link = BottleneckLink::new(LinkConfig::default(), RngStream::new(1, 0)).unwrap();
    let mut accepted = 0;
    for seq in 0..70 {
        let p = MediaPacket::new(0, seq, 1200, SimTime::ZERO);
        if matches!(
            link.enqueue(p, SimTime::ZERO),
            EnqueueOutcome::Accepted { .. }
        ) {
            accepted += 1;
        }
    }
    // 62 x 1200 = 74,400 B fits under 75,000; the 63rd does not.
    assert_eq!(accepted, 62);
    let mut now = link.queue_state().head_departure.unwrap();
    let last = loop {
        let (dep, next) = link.complete_head(now);
        match next {
            Some(t) => now = t,
            None => break dep.arrives_at,
        }
    };
    // 62 serializations of 4.8 ms, then propagation.
    assert_eq!(last, ms(100) + SimTime::from_micros(62 * 4_800));
}

#[test]
fn staircase_ceiling_tracks_capacity() {
    let sched = BandwidthSchedule::staircase(
        SimTime::from_secs(20),
        &[2_000_000, 1_000_000, 500_000, 1_000_000, 2_000_000],
    )
    .unwrap();
    // Offer 3 Mbps throughout so the link is always saturated.
    let run = drive_link(
        &sched,
        1200,
        SimTime::from_micros(3_200),
        SimTime::from_secs(100),
    );
    for k in 0..5u64 {
        // Departures lag arrivals by the propagation delay.
        let start = SimTime::from_secs(20 * k) + ms(100);
        let end = start + SimTime::from_secs(20);
        let bytes: u64 = run
            .delivered
            .iter()
            .filter(|(t, _)| *t >= start && *t < end)
            .map(|(_, b)| b)
            .sum();
        let cap_bits = sched.integrate_bits(start - ms(100), end - ms(100));
        let slack_bits = 2.0 * 1200.0 * 8.0;
        assert!(
            (bytes as f64 * 8.0 - cap_bits).abs() <= slack_bits,
            "interval {k}: {} vs {cap_bits}",
            bytes * 8
        );
    }
}

#[test]
fn feedback_entry_count_at_200_pps() {
    let interval = FeedbackInterval {
        min: ms(100),
        max: ms(100),
        target_entries: 20.0,
    };
    let mut rx = MediaReceiver::new(0).with_interval(interval);
    let mut counts = Vec::new();
    let mut next_report = ms(100);
    for seq in 0..2_000u64 {
        let t = SimTime::from_micros(seq * 5_000);
        while t >= next_report {
            if let Some(r) = rx.build_feedback(next_report) {
                counts.push(r.entries.len());
            }
            next_report += rx.feedback_interval();
        }
        rx.on_packet(seq, t);
    }
    assert!(counts.len() > 90);
    assert!(counts[1..].iter().all(|c| *c == 20), "{counts:?}");
}

#[test]
fn pacer_backlog_bounded_at_1_1x() {
    let mut src = MediaSource::new(0, 1_000_000, 150_000);
    let mut pacer = Pacer::new();
    let rate = 1_100_000;
    let mut max_backlog = 0;
    let mut now = SimTime::ZERO;
    let end = SimTime::from_secs(10);
    let mut next_frame = SimTime::ZERO;
    while now < end {
        if now >= next_frame {
            for p in src.emit_frame(now) {
                pacer.push(p);
            }
            next_frame += src.frame_interval;
        }
        while pacer.pace_out(rate, now).is_some() {}
        max_backlog = max_backlog.max(pacer.backlog_bytes());
        now += SimTime::from_micros(100);
    }
    // Never more than about one frame (2,500 B) waits.
    assert!(max_backlog <= 2_500, "backlog {max_backlog}");
}

#[test]
fn paced_frame_groups_match_brute_force() {
    let mut src = MediaSource::new(0, 2_000_000, 150_000);
    let mut pacer = Pacer::new();
    for p in src.emit_frame(SimTime::ZERO) {
        pacer.push(p);
    }
    // 1200 B at 2.4 Mbps: one packet every 4 ms.
    let mut sent = Vec::new();
    let mut now = SimTime::ZERO;
    while !pacer.is_empty() {
        if let Some(p) = pacer.pace_out(2_400_000, now) {
            sent.push(p);
        }
        now += SimTime::from_micros(500);
    }
    let gaps: Vec<u64> = sent
        .windows(2)
        .map(|w| (w[1].send_ts - w[0].send_ts).as_micros())
        .collect();
    assert_eq!(gaps, vec![4_000; 4]);

    let mut grouper = PacketGrouper::new(ms(5));
    let mut groups = Vec::new();
    for p in &sent {
        groups.extend(grouper.push(p.send_ts, p.send_ts + ms(100), p.size_bytes));
    }
    // Flush the open group with a packet far in the future.
    groups.extend(grouper.push(SimTime::from_secs(1), SimTime::from_secs(1), 1));

    // Oracle: a group opens at its first packet and takes every packet
    // sent strictly less than 5 ms later.
    let mut oracle: Vec<Vec<u64>> = Vec::new();
    let mut anchor = None;
    for p in &sent {
        let t = p.send_ts.as_micros();
        match anchor {
            Some(a) if t < a + 5_000 => oracle.last_mut().unwrap().push(t),
            _ => {
                anchor = Some(t);
                oracle.push(vec![t]);
            }
        }
    }
    assert!(groups.len() >= 3);
    assert_eq!(groups.len(), oracle.len());
    for (g, o) in groups.iter().zip(&oracle) {
        assert_eq!(g.timestamp.as_micros(), o[0]);
        assert_eq!(g.packets as usize, o.len());
    }
}

#[test]
fn cbr_receive_rate_estimate() {
    // 1 Mbps: 1250 B every 10 ms, reported every 100 ms, no queueing.
    let mut s = GccSender::new(GccConfig::default());
    let mut rx = MediaReceiver::new(0);
    let mut estimates = Vec::new();
    let mut log = SendLog::default();
    for seq in 0..1_000u64 {
        let t = ms(seq * 10);
        let p = MediaPacket::new(0, seq, 1250, t);
        s.on_packet_sent(&p);
        log.record(&p);
        rx.on_packet(seq, t + ms(100));
        if seq % 10 == 9 {
            let now = t + ms(100);
            let report = rx.build_feedback(now).unwrap();
            s.on_feedback(&report, now + ms(100));
            estimates.push(s.aimd().recv_rate_bps);
        }
    }
    for e in &estimates[5..] {
        let err = (*e as f64 - 1_000_000.0).abs() / 1_000_000.0;
        assert!(err <= 0.05, "estimate {e}");
    }
}
