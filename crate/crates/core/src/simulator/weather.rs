//! Synthetic outdoor temperature and its imperfect forecast.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, TAG_WEATHER};

pub const MINUTES_PER_DAY: f64 = 1440.0;

/// Piecewise-constant offset. Segment `k` starts at `starts[k]` (minutes) and
/// runs until the next start; the last segment extends indefinitely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSchedule {
    segments: Vec<BiasSegment>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasSegment {
    /// Start of the segment in minutes.
    pub start: f64,
    pub offset: f64,
}

impl BiasSchedule {
    pub fn new(segments: Vec<BiasSegment>) -> Result<Self> {
        match segments.first() {
            None => return Err(Error::Config("bias schedule needs at least one segment".into())),
            Some(s) if s.start != 0.0 => return Err(Error::Config("bias schedule must start at time 0".into())),
            _ => {}
        }
        if segments.windows(2).any(|w| !(w[1].start > w[0].start)) {
            return Err(Error::Config("bias segment starts must be strictly increasing".into()));
        }
        if segments.iter().any(|s| !s.offset.is_finite()) {
            return Err(Error::Config("bias offsets must be finite".into()));
        }
        Ok(Self { segments })
    }

    pub fn constant(offset: f64) -> Self {
        Self { segments: vec![BiasSegment { start: 0.0, offset }] }
    }

    /// One offset per day, starting at midnight of day 0.
    pub fn daily(offsets: &[f64]) -> Result<Self> {
        Self::new(
            offsets
                .iter()
                .enumerate()
                .map(|(d, &offset)| BiasSegment { start: d as f64 * MINUTES_PER_DAY, offset })
                .collect(),
        )
    }

    pub fn segments(&self) -> &[BiasSegment] {
        &self.segments
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = self.segments.partition_point(|s| s.start <= t);
        self.segments[k.saturating_sub(1)].offset
    }
}

impl Default for BiasSchedule {
    fn default() -> Self {
        Self::constant(0.0)
    }
}

/// Two sinusoids plus bias plus noise. Amplitudes are peak-to-peak, periods
/// and times are in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherModel {
    pub mean_temp: f64,
    pub daily_amp: f64,
    pub daily_period: f64,
    pub fast_amp: f64,
    pub fast_period: f64,
    pub bias: BiasSchedule,
    pub noise_std: f64,
    pub seed: u64,
    /// Phase of the daily sinusoid. π puts the daily minimum at 06:00.
    pub daily_phase: f64,
    pub fast_phase: f64,
}

impl Default for WeatherModel {
    fn default() -> Self {
        Self {
            mean_temp: 20.0,
            daily_amp: 20.0,
            daily_period: MINUTES_PER_DAY,
            fast_amp: 5.0,
            fast_period: 240.0,
            bias: BiasSchedule::default(),
            noise_std: 0.5,
            seed: 0,
            daily_phase: std::f64::consts::PI,
            fast_phase: std::f64::consts::PI,
        }
    }
}

impl WeatherModel {
    /// A weather model that always returns `temp`.
    pub fn constant(temp: f64) -> Self {
        Self { mean_temp: temp, daily_amp: 0.0, fast_amp: 0.0, noise_std: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.mean_temp, self.daily_amp, self.fast_amp, self.noise_std, self.daily_phase, self.fast_phase];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("weather parameters must be finite".into()));
        }
        if self.daily_amp < 0.0 || self.fast_amp < 0.0 {
            return Err(Error::Config("weather amplitudes must be non-negative".into()));
        }
        if self.noise_std < 0.0 {
            return Err(Error::Config("weather noise_std must be non-negative".into()));
        }
        if !(self.daily_period > 0.0 && self.fast_period > 0.0) {
            return Err(Error::Config("weather periods must be positive".into()));
        }
        Ok(())
    }

    fn daily(&self, t: f64) -> f64 {
        use std::f64::consts::TAU;
        0.5 * self.daily_amp * (TAU * t / self.daily_period + self.daily_phase).sin()
    }

    fn fast(&self, t: f64) -> f64 {
        use std::f64::consts::TAU;
        0.5 * self.fast_amp * (TAU * t / self.fast_period + self.fast_phase).sin()
    }

    /// Noise is drawn once per whole minute and keyed by the minute index,
    /// so it is a pure function of `t`.
    fn noise(&self, t: f64) -> f64 {
        if self.noise_std == 0.0 {
            return 0.0;
        }
        let minute = t.floor() as i64 as u64;
        let z: f64 = stream(self.seed, TAG_WEATHER, minute).sample(StandardNormal);
        self.noise_std * z
    }
}

pub fn external_temperature(w: &WeatherModel, t: f64) -> f64 {
    w.mean_temp + w.daily(t) + w.fast(t) + w.bias.at(t) + w.noise(t)
}

/// Forecast at `t0 + k·dt` for `k = 0..horizon`: daily sinusoid and bias only.
pub fn weather_forecast(w: &WeatherModel, t0: f64, horizon: usize, dt: f64) -> Vec<f64> {
    (0..horizon)
        .map(|k| {
            let t = t0 + k as f64 * dt;
            w.mean_temp + w.daily(t) + w.bias.at(t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noiseless() -> WeatherModel {
        WeatherModel { noise_std: 0.0, ..WeatherModel::default() }
    }

    #[test]
    fn degenerate_weather_is_constant() {
        let w = WeatherModel::constant(42.0);
        for t in [0.0, 13.0, 700.5, 5000.0] {
            assert_eq!(external_temperature(&w, t), 42.0);
        }
    }

    #[test]
    fn initial_external_temperature() {
        assert!((external_temperature(&noiseless(), 0.0) - 20.0).abs() < 1e-12);
    }

    #[test]
    fn daily_swing_is_bounded() {
        let w = noiseless();
        let temps: Vec<f64> = (0..1440).map(|m| external_temperature(&w, m as f64)).collect();
        let max = temps.iter().cloned().fold(f64::MIN, f64::max);
        let min = temps.iter().cloned().fold(f64::MAX, f64::min);
        let swing = max - min;
        assert!((15.0..=25.0).contains(&swing), "swing {swing}");
    }

    #[test]
    fn daily_minimum_at_six() {
        let w = WeatherModel { fast_amp: 0.0, ..noiseless() };
        let argmin = (0..1440)
            .min_by(|&a, &b| external_temperature(&w, a as f64).total_cmp(&external_temperature(&w, b as f64)))
            .unwrap();
        assert_eq!(argmin, 360);
    }

    #[test]
    fn forecast_error_bounded_by_fast_amplitude() {
        let w = WeatherModel { bias: BiasSchedule::daily(&[3.0, -4.0]).unwrap(), ..noiseless() };
        let fc = weather_forecast(&w, 0.0, 192, 15.0);
        for (k, f) in fc.iter().enumerate() {
            let real = external_temperature(&w, k as f64 * 15.0);
            assert!((f - real).abs() <= 2.5 + 1e-12);
        }
        let exact = WeatherModel { fast_amp: 0.0, ..w };
        let fc = weather_forecast(&exact, 30.0, 10, 15.0);
        for (k, f) in fc.iter().enumerate() {
            assert_eq!(*f, external_temperature(&exact, 30.0 + k as f64 * 15.0));
        }
        assert_eq!(weather_forecast(&exact, 0.0, 1, 15.0).len(), 1);
    }

    #[test]
    fn noise_is_reproducible() {
        let w = WeatherModel::default();
        assert_eq!(w.noise(100.25), w.noise(100.75));
        assert_ne!(w.noise(100.0), w.noise(101.0));
        let other = WeatherModel { seed: 1, ..w.clone() };
        assert_ne!(w.noise(100.0), other.noise(100.0));
        assert_eq!(external_temperature(&w, 100.0), external_temperature(&w.clone(), 100.0));
    }

    #[test]
    fn bias_lookup() {
        let b = BiasSchedule::daily(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(b.at(0.0), 1.0);
        assert_eq!(b.at(1439.9), 1.0);
        assert_eq!(b.at(1440.0), 2.0);
        assert_eq!(b.at(1e6), 3.0);
        assert!(BiasSchedule::new(vec![BiasSegment { start: 5.0, offset: 0.0 }]).is_err());
    }
}
