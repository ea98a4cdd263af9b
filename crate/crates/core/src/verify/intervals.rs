use alloc::vec::Vec;

use super::VerifyError;
use crate::model::{Level, Time};
use crate::sim::{EventKind, Trace};

/// `[start, end)` during which the system stayed at `level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LInterval {
    pub start: Time,
    pub end: Time,
    pub level: Level,
}

/// Partition of `[0, horizon]` into ℓ-intervals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LIntervalSet {
    pub intervals: Vec<LInterval>,
}

impl LIntervalSet {
    pub fn horizon(&self) -> Time {
        self.intervals.last().map_or(0, |i| i.end)
    }

    /// Interval in force at `t`; a change at `t` belongs to the new interval.
    pub fn at(&self, t: Time) -> &LInterval {
        let idx = self.intervals.partition_point(|i| i.start <= t);
        &self.intervals[idx.max(1) - 1]
    }

    pub fn level_at(&self, t: Time) -> Level {
        self.at(t).level
    }
}

/// Splits the trace at every level change. The system starts at level 1;
/// several changes at one instant yield a single boundary.
pub fn compute_l_intervals(trace: &Trace) -> Result<LIntervalSet, VerifyError> {
    let horizon = trace
        .horizon()
        .ok_or(VerifyError::malformed(0, "trace does not end with End"))?;
    let mut intervals = Vec::new();
    let mut start = 0;
    let mut level = 1;
    let mut last = 0;
    for e in trace.iter() {
        if e.time < last {
            return Err(VerifyError::malformed(e.time, "event times decrease"));
        }
        last = e.time;
        let to = match e.kind {
            EventKind::BudgetExceeded { to, .. } => to,
            EventKind::ReEnabled { target, .. } => target,
            _ => continue,
        };
        if to == level {
            continue;
        }
        if e.time > start {
            intervals.push(LInterval {
                start,
                end: e.time,
                level,
            });
            start = e.time;
        }
        level = to;
    }
    intervals.push(LInterval {
        start,
        end: horizon.max(start),
        level,
    });
    // a zero-length leftover at the start collapses into the next interval
    let mut merged: Vec<LInterval> = Vec::with_capacity(intervals.len());
    for i in intervals {
        match merged.last_mut() {
            Some(prev) if prev.level == i.level => prev.end = i.end,
            _ => merged.push(i),
        }
    }
    Ok(LIntervalSet { intervals: merged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TaskId;
    use alloc::vec;

    fn imcr(trace: &mut Trace, t: Time, to: Level) {
        trace.push(
            t,
            to,
            EventKind::BudgetExceeded {
                task: TaskId(1),
                k: 1,
                from: to - 1,
                to,
            },
        );
    }

    #[test]
    fn no_mode_events_single_interval() {
        let mut tr = Trace::new();
        tr.push(40, 1, EventKind::End);
        let s = compute_l_intervals(&tr).unwrap();
        assert_eq!(s.intervals, vec![LInterval { start: 0, end: 40, level: 1 }]);
    }

    #[test]
    fn imcr_splits() {
        let mut tr = Trace::new();
        imcr(&mut tr, 7, 2);
        tr.push(40, 2, EventKind::End);
        let s = compute_l_intervals(&tr).unwrap();
        assert_eq!(
            s.intervals,
            vec![
                LInterval { start: 0, end: 7, level: 1 },
                LInterval { start: 7, end: 40, level: 2 }
            ]
        );
        assert_eq!(s.level_at(6), 1);
        assert_eq!(s.level_at(7), 2);
        assert_eq!(s.level_at(40), 2);
    }

    #[test]
    fn imcr_then_reenable() {
        let mut tr = Trace::new();
        imcr(&mut tr, 7, 2);
        tr.push(
            30,
            1,
            EventKind::ReEnabled {
                target: 1,
                tasks: vec![TaskId(2)],
            },
        );
        tr.push(50, 1, EventKind::End);
        let s = compute_l_intervals(&tr).unwrap();
        assert_eq!(s.intervals.len(), 3);
        assert_eq!(s.intervals[2], LInterval { start: 30, end: 50, level: 1 });
    }

    #[test]
    fn same_instant_changes_collapse() {
        let mut tr = Trace::new();
        imcr(&mut tr, 5, 2);
        imcr(&mut tr, 5, 3);
        tr.push(9, 3, EventKind::End);
        let s = compute_l_intervals(&tr).unwrap();
        assert_eq!(
            s.intervals,
            vec![
                LInterval { start: 0, end: 5, level: 1 },
                LInterval { start: 5, end: 9, level: 3 }
            ]
        );
    }

    #[test]
    fn change_at_zero() {
        let mut tr = Trace::new();
        imcr(&mut tr, 0, 2);
        tr.push(9, 2, EventKind::End);
        let s = compute_l_intervals(&tr).unwrap();
        assert_eq!(s.intervals, vec![LInterval { start: 0, end: 9, level: 2 }]);
    }

    #[test]
    fn malformed() {
        let tr = Trace::new();
        assert!(compute_l_intervals(&tr).is_err());
        let mut tr = Trace::new();
        tr.push(5, 1, EventKind::Idle { proc: 0, from: 0 });
        tr.push(3, 1, EventKind::End);
        assert!(compute_l_intervals(&tr).is_err());
    }
}
