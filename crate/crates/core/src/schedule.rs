//! Named, contiguous evaluation periods over the stream.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::timebase::HourStamp;
use crate::{Error, Result};

/// One half-open period `[start, end)` of the evaluation timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub name: String,
    pub start: HourStamp,
    pub end: HourStamp,
}

/// Ordered, contiguous, non-overlapping named periods with unique names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSchedule {
    periods: Vec<Period>,
}

impl PeriodSchedule {
    pub fn new(periods: Vec<Period>) -> Result<Self> {
        if periods.is_empty() {
            return Err(Error::Schedule("no periods".to_string()));
        }
        for p in &periods {
            if p.end <= p.start {
                return Err(Error::Schedule(format!(
                    "period '{}' is empty or reversed ({}..{})",
                    p.name, p.start, p.end
                )));
            }
        }
        for pair in periods.windows(2) {
            if pair[1].start != pair[0].end {
                return Err(Error::Schedule(format!(
                    "periods '{}' and '{}' are not contiguous",
                    pair[0].name, pair[1].name
                )));
            }
        }
        for (i, a) in periods.iter().enumerate() {
            if periods[i + 1..].iter().any(|b| b.name == a.name) {
                return Err(Error::Schedule(format!("duplicate period name '{}'", a.name)));
            }
        }
        Ok(Self { periods })
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn names(&self) -> Vec<String> {
        self.periods.iter().map(|p| p.name.clone()).collect()
    }

    pub fn start(&self) -> HourStamp {
        self.periods[0].start
    }

    pub fn end(&self) -> HourStamp {
        self.periods[self.periods.len() - 1].end
    }

    /// Index of the period containing hour `t`, if any.
    pub fn period_index_of(&self, t: HourStamp) -> Option<usize> {
        self.periods.iter().position(|p| p.start <= t && t < p.end)
    }

    /// Restrict to `[start, end)`, dropping periods that fall outside.
    pub fn clipped(&self, start: HourStamp, end: HourStamp) -> Result<Self> {
        let clipped: Vec<Period> = self
            .periods
            .iter()
            .filter_map(|p| {
                let s = p.start.max(start);
                let e = p.end.min(end);
                (s < e).then(|| Period { name: p.name.clone(), start: s, end: e })
            })
            .collect();
        if clipped.is_empty() {
            return Err(Error::Schedule(format!(
                "schedule does not intersect {start}..{end}"
            )));
        }
        Self::new(clipped)
    }
}

/// The five-period Melbourne lockdown timeline clipped to a stream range:
/// PLD, LD1 (from 2020-03-23), IL1 (from 2020-05-30), LD2 (from 2020-08-02),
/// IL2 (from 2020-10-27 until the stream ends).
pub fn default_melbourne_schedule(
    stream_start: HourStamp,
    stream_end: HourStamp,
) -> Result<PeriodSchedule> {
    if stream_end <= stream_start {
        return Err(Error::Schedule("stream range is empty".to_string()));
    }
    let b = [
        HourStamp::from_ymd_hour(2020, 3, 23, 0)?,
        HourStamp::from_ymd_hour(2020, 5, 30, 0)?,
        HourStamp::from_ymd_hour(2020, 8, 2, 0)?,
        HourStamp::from_ymd_hour(2020, 10, 27, 0)?,
    ];
    // Open-ended first and last periods, then clip to the stream.
    let lo = stream_start.min(b[0].offset(-1));
    let hi = stream_end.max(b[3].offset(1));
    let full = PeriodSchedule::new(alloc::vec![
        Period { name: "PLD".to_string(), start: lo, end: b[0] },
        Period { name: "LD1".to_string(), start: b[0], end: b[1] },
        Period { name: "IL1".to_string(), start: b[1], end: b[2] },
        Period { name: "LD2".to_string(), start: b[2], end: b[3] },
        Period { name: "IL2".to_string(), start: b[3], end: hi },
    ])?;
    full.clipped(stream_start, stream_end)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(y: i32, m: u32, d: u32) -> HourStamp {
        HourStamp::from_ymd_hour(y, m, d, 0).unwrap()
    }

    #[test]
    fn melbourne_five_periods() {
        let s = default_melbourne_schedule(h(2019, 1, 1), h(2020, 12, 31)).unwrap();
        assert_eq!(s.names(), ["PLD", "LD1", "IL1", "LD2", "IL2"]);
        let ld2 = &s.periods()[3];
        assert_eq!(ld2.start, h(2020, 8, 2));
        assert_eq!(ld2.end, h(2020, 10, 27));
        assert_eq!(s.end(), h(2020, 12, 31));
    }

    #[test]
    fn melbourne_clips_to_prefix_and_suffix() {
        let pre = default_melbourne_schedule(h(2019, 1, 1), h(2020, 2, 1)).unwrap();
        assert_eq!(pre.names(), ["PLD"]);

        let later = default_melbourne_schedule(h(2020, 6, 1), h(2020, 12, 1)).unwrap();
        assert_eq!(later.names(), ["IL1", "LD2", "IL2"]);
    }

    #[test]
    fn melbourne_empty_stream_errors() {
        assert!(default_melbourne_schedule(h(2020, 1, 1), h(2020, 1, 1)).is_err());
    }

    #[test]
    fn schedule_rejects_gaps_overlaps_and_duplicates() {
        let gap = PeriodSchedule::new(alloc::vec![
            Period { name: "a".into(), start: HourStamp(0), end: HourStamp(5) },
            Period { name: "b".into(), start: HourStamp(6), end: HourStamp(9) },
        ]);
        assert!(gap.is_err());
        let dup = PeriodSchedule::new(alloc::vec![
            Period { name: "a".into(), start: HourStamp(0), end: HourStamp(5) },
            Period { name: "a".into(), start: HourStamp(5), end: HourStamp(9) },
        ]);
        assert!(dup.is_err());
    }

    #[test]
    fn period_lookup() {
        let s = PeriodSchedule::new(alloc::vec![
            Period { name: "a".into(), start: HourStamp(0), end: HourStamp(5) },
            Period { name: "b".into(), start: HourStamp(5), end: HourStamp(9) },
        ])
        .unwrap();
        assert_eq!(s.period_index_of(HourStamp(0)), Some(0));
        assert_eq!(s.period_index_of(HourStamp(5)), Some(1));
        assert_eq!(s.period_index_of(HourStamp(9)), None);
    }
}
