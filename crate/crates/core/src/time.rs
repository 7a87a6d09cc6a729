//! Simulation clock. Times are whole deci-minutes since midnight of day zero.

pub type Tick = i64;

pub const TICKS_PER_MIN: i64 = 10;
pub const TICKS_PER_HOUR: i64 = 60 * TICKS_PER_MIN;
pub const DAY_TICKS: Tick = 24 * TICKS_PER_HOUR;

pub fn from_minutes(minutes: f64) -> Tick {
    (minutes * TICKS_PER_MIN as f64).round() as Tick
}

/// Rounds up, ignoring float noise just above a whole tick.
pub fn from_minutes_ceil(minutes: f64) -> Tick {
    ((minutes * TICKS_PER_MIN as f64) - 1e-9).ceil().max(0.0) as Tick
}

pub fn to_minutes(t: Tick) -> f64 {
    t as f64 / TICKS_PER_MIN as f64
}

/// Hour of day (0..24) for a tick, wrapping past midnight.
pub fn hour_of(t: Tick) -> usize {
    (t.div_euclid(TICKS_PER_HOUR)).rem_euclid(24) as usize
}

/// Splits `[start, end)` clipped to `[0, DAY_TICKS)` across the 24 hours.
pub fn split_by_hour(start: Tick, end: Tick, buckets: &mut [i64; 24]) {
    let (mut a, b) = (start.max(0), end.min(DAY_TICKS));
    while a < b {
        let h = a / TICKS_PER_HOUR;
        let edge = ((h + 1) * TICKS_PER_HOUR).min(b);
        buckets[h as usize] += edge - a;
        a = edge;
    }
}
