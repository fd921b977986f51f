//! Closed time intervals and the union measure used for filming-time bookkeeping.

use serde::{Deserialize, Serialize};

/// A closed span of mission time, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeInterval {
    pub start: f64,
    pub end: f64,
}

impl TimeInterval {
    /// Builds an interval, swapping the endpoints if they are reversed.
    pub fn new(start: f64, end: f64) -> Self {
        if start <= end {
            Self { start, end }
        } else {
            Self { start: end, end: start }
        }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn intersect(&self, other: &TimeInterval) -> Option<TimeInterval> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(TimeInterval { start, end })
    }

    pub fn overlap(&self, other: &TimeInterval) -> f64 {
        self.intersect(other).map_or(0.0, |i| i.length())
    }
}

/// Sorts and merges overlapping or touching intervals.
pub fn merge(intervals: &[TimeInterval]) -> Vec<TimeInterval> {
    let mut sorted: Vec<TimeInterval> = intervals.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    let mut out: Vec<TimeInterval> = Vec::with_capacity(sorted.len());
    for iv in sorted {
        match out.last_mut() {
            Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
            _ => out.push(iv),
        }
    }
    out
}

/// Total measure of the union of `intervals`; overlaps are counted once.
pub fn union_length(intervals: &[TimeInterval]) -> f64 {
    merge(intervals).iter().map(TimeInterval::length).fold(0.0, |a, b| a + b)
}

/// Measure of `span` not covered by `covered`.
pub fn uncovered_length(span: &TimeInterval, covered: &[TimeInterval]) -> f64 {
    let inside: Vec<TimeInterval> = covered.iter().filter_map(|c| c.intersect(span)).collect();
    (span.length() - union_length(&inside)).max(0.0)
}

/// `span` minus the union of `covered`, as sorted disjoint pieces (zero-length pieces dropped).
pub fn subtract(span: &TimeInterval, covered: &[TimeInterval]) -> Vec<TimeInterval> {
    let mut out = Vec::new();
    let mut cursor = span.start;
    for c in merge(covered) {
        if c.end <= cursor {
            continue;
        }
        if c.start >= span.end {
            break;
        }
        if c.start > cursor {
            out.push(TimeInterval { start: cursor, end: c.start.min(span.end) });
        }
        cursor = cursor.max(c.end);
        if cursor >= span.end {
            break;
        }
    }
    if cursor < span.end {
        out.push(TimeInterval { start: cursor, end: span.end });
    }
    out
}
