//! Integer nanosecond time types.
//!
//! All analysis recurrences and the simulator operate on exact integer
//! nanoseconds. Ceilings in arrival bounds are exact integer ceilings;
//! there is no floating-point time anywhere in the hot path.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A non-negative span of time in nanoseconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Duration(u64);

/// A point in simulated time, nanoseconds since simulation start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Instant(u64);

impl Duration {
    pub const ZERO: Duration = Duration(0);

    pub const fn from_ns(ns: u64) -> Self {
        Duration(ns)
    }

    pub const fn from_us(us: u64) -> Self {
        Duration(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        Duration(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        Duration(s * 1_000_000_000)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Exact integer ceiling of `self / divisor`.
    ///
    /// Panics if `divisor` is zero; callers validate periods up front.
    pub fn div_ceil(self, divisor: Duration) -> u64 {
        assert!(divisor.0 > 0, "division by zero duration");
        self.0.div_ceil(divisor.0)
    }

    pub fn saturating_sub(self, rhs: Duration) -> Duration {
        Duration(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_mul(self, rhs: u64) -> Option<Duration> {
        self.0.checked_mul(rhs).map(Duration)
    }

    /// Scales by a non-negative factor, rounding to the nearest nanosecond.
    pub fn scale(self, factor: f64) -> Duration {
        debug_assert!(factor >= 0.0);
        Duration((self.0 as f64 * factor).round() as u64)
    }
}

impl Instant {
    pub const ZERO: Instant = Instant(0);

    pub const fn from_ns(ns: u64) -> Self {
        Instant(ns)
    }

    pub const fn as_ns(self) -> u64 {
        self.0
    }

    pub fn elapsed_since(self, earlier: Instant) -> Duration {
        debug_assert!(self.0 >= earlier.0, "instants out of order");
        Duration(self.0 - earlier.0)
    }
}

impl Add<Duration> for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0.checked_add(rhs.0).expect("duration overflow"))
    }
}

impl AddAssign<Duration> for Duration {
    fn add_assign(&mut self, rhs: Duration) {
        *self = *self + rhs;
    }
}

impl Sub<Duration> for Duration {
    type Output = Duration;
    fn sub(self, rhs: Duration) -> Duration {
        Duration(self.0.checked_sub(rhs.0).expect("duration underflow"))
    }
}

impl SubAssign<Duration> for Duration {
    fn sub_assign(&mut self, rhs: Duration) {
        *self = *self - rhs;
    }
}

impl Mul<u64> for Duration {
    type Output = Duration;
    fn mul(self, rhs: u64) -> Duration {
        Duration(self.0.checked_mul(rhs).expect("duration overflow"))
    }
}

impl Add<Duration> for Instant {
    type Output = Instant;
    fn add(self, rhs: Duration) -> Instant {
        Instant(self.0.checked_add(rhs.as_ns()).expect("instant overflow"))
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ns = self.0;
        if ns == 0 {
            return write!(f, "0ns");
        }
        if ns % 1_000_000_000 == 0 {
            write!(f, "{}s", ns / 1_000_000_000)
        } else if ns % 1_000_000 == 0 {
            write!(f, "{}ms", ns / 1_000_000)
        } else if ns % 1_000 == 0 {
            write!(f, "{}us", ns / 1_000)
        } else {
            write!(f, "{}ns", ns)
        }
    }
}

impl fmt::Display for Instant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Parses a duration literal with an `ns`/`us`/`ms`/`s` suffix.
/// A bare integer is taken as nanoseconds.
pub fn parse_duration(s: &str) -> Result<Duration, String> {
    let s = s.trim();
    let (digits, mult) = if let Some(v) = s.strip_suffix("ns") {
        (v, 1)
    } else if let Some(v) = s.strip_suffix("us") {
        (v, 1_000)
    } else if let Some(v) = s.strip_suffix("ms") {
        (v, 1_000_000)
    } else if let Some(v) = s.strip_suffix('s') {
        (v, 1_000_000_000)
    } else {
        (s, 1)
    };
    let n: u64 = digits
        .trim()
        .parse()
        .map_err(|_| format!("invalid duration literal: {s:?}"))?;
    n.checked_mul(mult)
        .map(Duration::from_ns)
        .ok_or_else(|| format!("duration out of range: {s:?}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_division_is_exact() {
        assert_eq!(Duration::ZERO.div_ceil(Duration::from_ms(10)), 0);
        assert_eq!(Duration::from_ms(10).div_ceil(Duration::from_ms(10)), 1);
        assert_eq!(Duration::from_ms(15).div_ceil(Duration::from_ms(10)), 2);
        assert_eq!(Duration::from_ns(1).div_ceil(Duration::from_ms(10)), 1);
    }

    #[test]
    fn parses_unit_suffixes() {
        assert_eq!(parse_duration("20ms").unwrap(), Duration::from_ms(20));
        assert_eq!(parse_duration("391us").unwrap(), Duration::from_us(391));
        assert_eq!(parse_duration("2s").unwrap(), Duration::from_secs(2));
        assert_eq!(parse_duration("17").unwrap(), Duration::from_ns(17));
        assert!(parse_duration("three ms").is_err());
    }

    #[test]
    fn display_picks_largest_exact_unit() {
        assert_eq!(Duration::from_ms(20).to_string(), "20ms");
        assert_eq!(Duration::from_us(391).to_string(), "391us");
        assert_eq!(Duration::from_ns(1_000_000_001).to_string(), "1000000001ns");
    }
}
