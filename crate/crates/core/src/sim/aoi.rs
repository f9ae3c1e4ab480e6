//! Exact accounting of the piecewise-linear AoI process.

/// Area under an AoI segment that starts at `start_age` and grows with slope 1
/// for `duration` time units.
#[inline]
pub fn aoi_integral_segment(start_age: f64, duration: f64) -> f64 {
    start_age * duration + duration * duration / 2.0
}

/// Running integral of one source's AoI.
///
/// The integral is only touched at deliveries and when closed at the horizon,
/// so a replay of the delivery log through [`aoi_integral_segment`] in the same
/// order reproduces it bit for bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoiAccumulator {
    pub integral: f64,
    pub last_update_time: f64,
    /// Age right after the last update.
    pub current_age: f64,
    /// Generation time of the freshest delivered packet.
    pub latest_delivered_generation: f64,
}

impl Default for AoiAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl AoiAccumulator {
    /// AoI is zero at time zero.
    pub fn new() -> Self {
        AoiAccumulator {
            integral: 0.0,
            last_update_time: 0.0,
            current_age: 0.0,
            latest_delivered_generation: 0.0,
        }
    }

    #[inline]
    pub fn age_at(&self, t: f64) -> f64 {
        t - self.latest_delivered_generation
    }

    /// Closes the elapsed segment, then lowers the age to
    /// `delivery_time - max(generation_time, latest delivered)`. Returns the new age.
    pub fn deliver(&mut self, generation_time: f64, delivery_time: f64) -> f64 {
        debug_assert!(generation_time <= delivery_time);
        debug_assert!(delivery_time >= self.last_update_time);
        self.integral += aoi_integral_segment(self.current_age, delivery_time - self.last_update_time);
        if generation_time > self.latest_delivered_generation {
            self.latest_delivered_generation = generation_time;
            self.current_age = delivery_time - generation_time;
        } else {
            // stale: no drop
            self.current_age += delivery_time - self.last_update_time;
        }
        self.last_update_time = delivery_time;
        self.current_age
    }

    /// Extends the integral to `t` and returns the time average over `[0, t]`.
    pub fn close(&mut self, t: f64) -> f64 {
        self.integral += aoi_integral_segment(self.current_age, t - self.last_update_time);
        self.current_age += t - self.last_update_time;
        self.last_update_time = t;
        self.integral / t
    }
}
