//! Seeded generator of PeMS-style hourly freeway occupancy.
//!
//! Each location gets a weekday profile with morning and evening peaks of
//! location-specific size and timing, a flatter weekend shape, day-to-day
//! amplitude variation, autocorrelated noise, occasional incident spikes and
//! occasional detector dropouts (runs of zeros). Values are fractions in [0, 1].

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};

use crate::data::RawDataset;
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub locations: usize,
    pub hours: usize,
    pub seed: u64,
    pub start: NaiveDateTime,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            locations: 861,
            hours: 17_544,
            seed: 0,
            start: NaiveDate::from_ymd_opt(2016, 7, 1)
                .unwrap()
                .and_hms_opt(2, 0, 0)
                .unwrap(),
        }
    }
}

#[derive(Debug, Clone)]
struct LocationProfile {
    night: f64,
    morning_amp: f64,
    morning_center: f64,
    morning_width: f64,
    evening_amp: f64,
    evening_center: f64,
    evening_width: f64,
    midday_amp: f64,
    weekend_peak_scale: f64,
    noise_sd: f64,
    incident_rate: f64,
    dropout_rate: f64,
}

impl LocationProfile {
    fn sample(rng: &mut impl Rng) -> Self {
        let jitter = Normal::new(0.0, 1.0).unwrap();
        LocationProfile {
            night: rng.gen_range(0.004..0.02),
            morning_amp: rng.gen_range(0.015..0.13),
            morning_center: 7.8 + 0.6 * jitter.sample(rng),
            morning_width: rng.gen_range(1.0..2.0),
            evening_amp: rng.gen_range(0.015..0.13),
            evening_center: 17.3 + 0.7 * jitter.sample(rng),
            evening_width: rng.gen_range(1.4..2.6),
            midday_amp: rng.gen_range(0.01..0.045),
            weekend_peak_scale: rng.gen_range(0.15..0.5),
            noise_sd: rng.gen_range(0.04..0.12),
            incident_rate: rng.gen_range(0.0005..0.004),
            dropout_rate: rng.gen_range(0.0..0.0008),
        }
    }
}

fn bump(hour: f64, center: f64, width: f64) -> f64 {
    let d = hour - center;
    (-0.5 * d * d / (width * width)).exp()
}

/// Occupancy series for one location.
fn location_series(profile: &LocationProfile, cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<f64> {
    let day_scale = LogNormal::new(0.0, 0.08).unwrap();
    let regime_shock = Normal::new(0.0, 0.15).unwrap();
    let drift_shock = Normal::new(0.0, 0.03).unwrap();
    let timing = Normal::new(0.0, 0.35).unwrap();
    let shock = Normal::new(0.0, profile.noise_sd).unwrap();

    let mut out = Vec::with_capacity(cfg.hours);
    let mut day_key = None;
    let (mut amp_m, mut amp_e, mut shift_m, mut shift_e) = (1.0, 1.0, 0.0, 0.0);
    let mut noise = 0.0;
    // Log-amplitude carried from day to day, and a slow multiplicative drift.
    let (mut regime_m, mut regime_e) = (0.0f64, 0.0f64);
    let mut drift = 0.0f64;
    let mut incident = 0.0;
    let mut dropout_left = 0usize;

    for i in 0..cfg.hours {
        let ts = cfg.start + chrono::Duration::hours(i as i64);
        let date = ts.date();
        if day_key != Some(date) {
            day_key = Some(date);
            regime_m = 0.8 * regime_m + regime_shock.sample(rng);
            regime_e = 0.8 * regime_e + regime_shock.sample(rng);
            amp_m = regime_m.exp() * day_scale.sample(rng);
            amp_e = regime_e.exp() * day_scale.sample(rng);
            shift_m = timing.sample(rng);
            shift_e = timing.sample(rng);
        }
        let hour = ts.hour() as f64;
        let weekend = matches!(date.weekday(), Weekday::Sat | Weekday::Sun);
        let season = 1.0 + 0.05 * (2.0 * std::f64::consts::PI * i as f64 / (24.0 * 365.0)).sin();

        let clean = if weekend {
            profile.night
                + profile.weekend_peak_scale
                    * (profile.morning_amp + profile.evening_amp)
                    * 0.5
                    * amp_m
                    * bump(hour, 14.0 + shift_m, 3.5)
                + profile.midday_amp * bump(hour, 13.5, 3.5)
        } else {
            profile.night
                + profile.morning_amp * amp_m * bump(hour, profile.morning_center + shift_m, profile.morning_width)
                + profile.evening_amp * amp_e * bump(hour, profile.evening_center + shift_e, profile.evening_width)
                + profile.midday_amp * bump(hour, 13.0, 3.0)
        } * season;

        noise = 0.7 * noise + shock.sample(rng);
        drift = 0.98 * drift + drift_shock.sample(rng);
        if rng.gen_bool(profile.incident_rate) {
            incident += rng.gen_range(0.04..0.25);
        }
        let mut v = clean * drift.exp() * (1.0 + noise) + incident;
        incident *= 0.55;

        if dropout_left == 0 && rng.gen_bool(profile.dropout_rate) {
            dropout_left = rng.gen_range(1..=12);
        }
        if dropout_left > 0 {
            dropout_left -= 1;
            v = 0.0;
        }
        // Detector output is quantized to 1e-4 like the public PeMS extracts.
        out.push((v.clamp(0.0, 1.0) * 1e4).round() / 1e4);
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<RawDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut series = Vec::with_capacity(cfg.locations);
    for _ in 0..cfg.locations {
        let profile = LocationProfile::sample(&mut rng);
        let mut loc_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        series.push(location_series(&profile, cfg, &mut loc_rng));
    }
    let ids = (0..cfg.locations).map(|l| l.to_string()).collect();
    let timestamps = (0..cfg.hours)
        .map(|i| cfg.start + chrono::Duration::hours(i as i64))
        .collect();
    RawDataset::new(ids, timestamps, series)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            locations: 4,
            hours: 24 * 28,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_bounded() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        assert!(a.series.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(a.len(), 24 * 28);
    }

    #[test]
    fn realistic_magnitude_and_rush_hours() {
        let ds = generate(&SynthConfig {
            locations: 20,
            ..small()
        })
        .unwrap();
        let all: Vec<f64> = ds.series.iter().flatten().copied().collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!(mean > 0.02 && mean < 0.12, "mean occupancy {mean}");

        // Weekday 08:00 should beat 03:00 on average.
        let first_hour = ds.first_hour() as usize;
        let avg_at = |h: usize| {
            let mut s = 0.0;
            let mut n = 0;
            for series in &ds.series {
                for (i, v) in series.iter().enumerate() {
                    if (first_hour + i) % 24 == h {
                        s += v;
                        n += 1;
                    }
                }
            }
            s / n as f64
        };
        assert!(avg_at(8) > 2.0 * avg_at(3));
        assert!(avg_at(17) > 2.0 * avg_at(3));
    }
}
