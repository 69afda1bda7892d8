//! Simulated time and the year-less syslog timestamp used by CMIS logs.

use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MICROS_PER_SECOND: u64 = 1_000_000;
pub const MICROS_PER_DAY: u64 = 86_400 * MICROS_PER_SECOND;

const MONTHS: [&str; 12] = [
    "Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec",
];
// Syslog carries no year; day arithmetic assumes a non-leap year.
const DAYS_IN_MONTH: [u16; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid syslog timestamp")]
pub struct TimestampError;

/// Microseconds elapsed on a simulated clock since the simulation epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> SimTime {
        SimTime(secs_to_micros(secs))
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        micros_to_secs(self.0)
    }

    pub fn saturating_add_micros(self, micros: u64) -> SimTime {
        SimTime(self.0.saturating_add(micros))
    }

    pub fn micros_since(self, earlier: SimTime) -> u64 {
        self.0.saturating_sub(earlier.0)
    }
}

/// Round seconds to whole microseconds, the resolution of every log line.
pub fn secs_to_micros(secs: f64) -> u64 {
    if secs <= 0.0 {
        0
    } else {
        libm::round(secs * MICROS_PER_SECOND as f64) as u64
    }
}

pub fn micros_to_secs(micros: u64) -> f64 {
    micros as f64 / MICROS_PER_SECOND as f64
}

/// `Mon DD HH:MM:SS.ffffff`, as printed by the SONiC syslog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SyslogTimestamp {
    /// 1-based month.
    pub month: u8,
    pub day: u8,
    pub micros_of_day: u64,
}

impl SyslogTimestamp {
    pub fn new(month: u8, day: u8, micros_of_day: u64) -> Result<Self, TimestampError> {
        if !(1..=12).contains(&month)
            || day == 0
            || day as u16 > DAYS_IN_MONTH[month as usize - 1]
            || micros_of_day >= MICROS_PER_DAY
        {
            return Err(TimestampError);
        }
        Ok(SyslogTimestamp { month, day, micros_of_day })
    }

    fn day_of_year(&self) -> u64 {
        let before: u16 = DAYS_IN_MONTH[..self.month as usize - 1].iter().sum();
        (before + self.day as u16 - 1) as u64
    }

    /// Position within the (year-less) capture, in microseconds.
    pub fn micros_of_year(&self) -> u64 {
        self.day_of_year() * MICROS_PER_DAY + self.micros_of_day
    }

    /// Signed distance `self - earlier` in microseconds.
    pub fn micros_since(&self, earlier: &SyslogTimestamp) -> i64 {
        self.micros_of_year() as i64 - earlier.micros_of_year() as i64
    }

    /// Render a simulated instant relative to an epoch at midnight of `epoch_month/epoch_day`.
    pub fn from_sim(epoch_month: u8, epoch_day: u8, t: SimTime) -> SyslogTimestamp {
        let epoch = SyslogTimestamp { month: epoch_month, day: epoch_day, micros_of_day: 0 };
        let total = epoch.micros_of_year() + t.0;
        let mut day_of_year = (total / MICROS_PER_DAY) % 365;
        let micros_of_day = total % MICROS_PER_DAY;
        let mut month = 0;
        while day_of_year >= DAYS_IN_MONTH[month] as u64 {
            day_of_year -= DAYS_IN_MONTH[month] as u64;
            month += 1;
        }
        SyslogTimestamp { month: month as u8 + 1, day: day_of_year as u8 + 1, micros_of_day }
    }
}

impl fmt::Display for SyslogTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let secs = self.micros_of_day / MICROS_PER_SECOND;
        write!(
            f,
            "{} {:>2} {:02}:{:02}:{:02}.{:06}",
            MONTHS[self.month as usize - 1],
            self.day,
            secs / 3600,
            (secs / 60) % 60,
            secs % 60,
            self.micros_of_day % MICROS_PER_SECOND
        )
    }
}

impl FromStr for SyslogTimestamp {
    type Err = TimestampError;

    /// Parses `Mon DD HH:MM:SS[.ffffff]`; the day may be space padded.
    fn from_str(s: &str) -> Result<Self, TimestampError> {
        let mut fields = s.split_whitespace();
        let (Some(mon), Some(day), Some(clock), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(TimestampError);
        };
        let month = MONTHS.iter().position(|m| *m == mon).ok_or(TimestampError)? as u8 + 1;
        let day: u8 = parse_digits(day)?;

        let (hms, frac) = match clock.split_once('.') {
            Some((hms, frac)) => (hms, Some(frac)),
            None => (clock, None),
        };
        let mut parts = hms.split(':');
        let (Some(h), Some(m), Some(sec), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(TimestampError);
        };
        let (h, m, sec): (u64, u64, u64) = (parse_digits(h)?, parse_digits(m)?, parse_digits(sec)?);
        if h > 23 || m > 59 || sec > 59 {
            return Err(TimestampError);
        }
        let micros = match frac {
            None => 0,
            Some(frac) if !frac.is_empty() && frac.len() <= 6 => {
                let value: u64 = parse_digits(frac)?;
                value * 10u64.pow(6 - frac.len() as u32)
            }
            Some(_) => return Err(TimestampError),
        };
        SyslogTimestamp::new(month, day, ((h * 60 + m) * 60 + sec) * MICROS_PER_SECOND + micros)
    }
}

fn parse_digits<T: FromStr>(s: &str) -> Result<T, TimestampError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(TimestampError);
    }
    s.parse().map_err(|_| TimestampError)
}
