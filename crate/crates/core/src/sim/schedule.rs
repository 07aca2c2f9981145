//! Integer tick scheduling of the sensor and control streams on the physics
//! clock.

/// A stream running at `rate_hz` on a `physics_hz` clock. Tick `k` fires when
/// `floor(k * rate / physics)` increments, plus tick 0. Over any window of
/// `physics_hz` consecutive ticks exactly `rate_hz` ticks fire, and when one
/// rate is an integer multiple of another the slower stream only fires on
/// ticks of the faster one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RateSchedule {
    rate_hz: u32,
    physics_hz: u32,
}

impl RateSchedule {
    /// `rate_hz` must lie in `1..=physics_hz`; checked by scenario validation.
    pub fn new(rate_hz: u32, physics_hz: u32) -> Self {
        debug_assert!(rate_hz >= 1 && rate_hz <= physics_hz);
        Self { rate_hz, physics_hz }
    }

    pub fn rate_hz(&self) -> u32 {
        self.rate_hz
    }

    fn count_through(&self, tick: u64) -> u64 {
        tick * u64::from(self.rate_hz) / u64::from(self.physics_hz)
    }

    pub fn fires(&self, tick: u64) -> bool {
        tick == 0 || self.count_through(tick) != self.count_through(tick - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TickFlags {
    pub detect: bool,
    pub pose: bool,
    pub face: bool,
    pub control: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scheduler {
    pub detect: RateSchedule,
    pub pose: RateSchedule,
    pub face: RateSchedule,
    pub control: RateSchedule,
}

impl Scheduler {
    pub fn flags(&self, tick: u64) -> TickFlags {
        TickFlags {
            detect: self.detect.fires(tick),
            pose: self.pose.fires(tick),
            face: self.face.fires(tick),
            control: self.control.fires(tick),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn thirty_on_hundred() {
        let s = RateSchedule::new(30, 100);
        let fired: Vec<u64> = (0..20).filter(|&k| s.fires(k)).collect();
        assert_eq!(fired, vec![0, 4, 7, 10, 14, 17]);
        assert_eq!((0..100).filter(|&k| s.fires(k)).count(), 30);
    }

    proptest! {
        #[test]
        fn exact_counts_per_second(rate in 1u32..=100, start in 0u64..10_000) {
            let s = RateSchedule::new(rate, 100);
            let n = (start..start + 100).filter(|&k| s.fires(k)).count();
            prop_assert_eq!(n as u32, rate);
        }

        #[test]
        fn nested_rates_share_ticks(slow in 1u32..=20, mult in 1u32..=5, k in 0u64..100_000) {
            let fast = slow * mult;
            prop_assume!(fast <= 100);
            let (a, b) = (RateSchedule::new(slow, 100), RateSchedule::new(fast, 100));
            if a.fires(k) {
                prop_assert!(b.fires(k));
            }
        }
    }
}
