//! Event ordering and the optional per-event log.

use std::cmp::Ordering;
use std::io::{self, BufRead, Write};

use super::aoi::aoi_integral_segment;

/// Kinds of scheduled events, in tie-break priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    /// A packet is generated at a source.
    Generation,
    /// A transmission or idle-lock completes; a decision epoch follows.
    ChannelFree,
    /// A waiting policy asked to be consulted again at this time.
    Wakeup,
}

/// A scheduled event. Ordered by `(time, kind, sequence)`, so generations win
/// ties against channel-free events and a packet born exactly at a decision
/// epoch is visible to the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
    pub source: Option<usize>,
    pub sequence: u64,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.sequence.cmp(&other.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// What a log record describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogKind {
    Generation,
    /// A generated packet accepted by the marking rule.
    Mark,
    TransmitStart,
    Delivery,
    IdleLockStart,
    IdleLockEnd,
}

impl LogKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::Generation => "generation",
            LogKind::Mark => "mark",
            LogKind::TransmitStart => "transmit_start",
            LogKind::Delivery => "delivery",
            LogKind::IdleLockStart => "idle_lock_start",
            LogKind::IdleLockEnd => "idle_lock_end",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "generation" => LogKind::Generation,
            "mark" => LogKind::Mark,
            "transmit_start" => LogKind::TransmitStart,
            "delivery" => LogKind::Delivery,
            "idle_lock_start" => LogKind::IdleLockStart,
            "idle_lock_end" => LogKind::IdleLockEnd,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub kind: LogKind,
    pub source: usize,
    pub generation_time: Option<f64>,
    /// AoI of `source` right after the event.
    pub age_after: f64,
}

pub const LOG_HEADER: &str = "time,kind,source,generation_time,age_after";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes the log as CSV. Floats use the shortest round-trip representation,
/// so [`read_event_log`] recovers every value exactly.
pub fn write_event_log<W: Write>(records: &[LogRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.time,
            r.kind.as_str(),
            r.source,
            opt(r.generation_time),
            r.age_after
        )?;
    }
    Ok(())
}

pub fn read_event_log<R: BufRead>(input: R) -> io::Result<Vec<LogRecord>> {
    let bad = |line: usize, msg: &str| io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"));
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != LOG_HEADER {
                return Err(bad(1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(i + 1, "expected 5 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "bad number"));
        records.push(LogRecord {
            time: num(f[0])?,
            kind: LogKind::parse(f[1]).ok_or_else(|| bad(i + 1, "bad kind"))?,
            source: f[2].parse().map_err(|_| bad(i + 1, "bad source"))?,
            generation_time: if f[3].is_empty() { None } else { Some(num(f[3])?) },
            age_after: num(f[4])?,
        });
    }
    Ok(records)
}

/// Recomputes each source's AAoI over `[0, horizon]` from the delivery
/// records alone.
pub fn replay_aaoi(records: &[LogRecord], n_sources: usize, horizon: f64) -> Vec<f64> {
    let mut state = vec![(0.0f64, 0.0f64, 0.0f64); n_sources]; // (integral, last_time, age)
    for r in records.iter().filter(|r| r.kind == LogKind::Delivery) {
        let (integral, last, age) = &mut state[r.source];
        *integral += aoi_integral_segment(*age, r.time - *last);
        *age = r.age_after;
        *last = r.time;
    }
    state
        .into_iter()
        .map(|(integral, last, age)| (integral + aoi_integral_segment(age, horizon - last)) / horizon)
        .collect()
}
