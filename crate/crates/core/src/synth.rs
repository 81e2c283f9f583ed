//! Deterministic synthetic drive cycles and ridership data.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use crate::error::{EmsError, Result};
use crate::predict::{LoadRecord, WeatherRecord};
use crate::vehicle::DriveCycle;

/// Largest acceleration and deceleration of the synthetic cycle (m/s²).
pub const MAX_ACCEL: f64 = 1.5;
pub const MAX_DECEL: f64 = 2.5;

/// First and last service hour of the synthetic ridership data.
pub const SERVICE_HOURS: (u8, u8) = (6, 21);

/// Stop-and-go urban bus cycle sampled at 1 Hz: dwell at a stop, pull
/// away, cruise, brake to the next stop. Starts and ends at rest.
pub fn synth_cycle(seed: u64, duration: usize, max_speed: f64) -> Result<DriveCycle> {
    if duration < 60 {
        return Err(EmsError::domain(format!(
            "cycle duration must be >= 60 s, got {duration}"
        )));
    }
    if !(max_speed >= 3.0 && max_speed.is_finite()) {
        return Err(EmsError::domain(format!("max speed must be >= 3 m/s, got {max_speed}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vec::with_capacity(duration);
    while v.len() < duration {
        let dwell = rng.gen_range(10..=40).min(duration - v.len());
        v.extend(std::iter::repeat(0.0).take(dwell));
        let remaining = duration - v.len();
        let target = rng.gen_range(0.45 * max_speed..=max_speed);
        let accel = rng.gen_range(0.6..=MAX_ACCEL);
        let decel = rng.gen_range(0.8..=MAX_DECEL);
        let ramp = (target / accel).ceil() as usize + (target / decel).ceil() as usize + 1;
        if remaining < ramp + 1 + 10 {
            // Not enough room for another trip followed by a stop.
            v.extend(std::iter::repeat(0.0).take(remaining));
            break;
        }
        let cruise = rng.gen_range(5..=45).min(remaining - ramp - 10);
        let mut s: f64 = 0.0;
        while s < target {
            s = (s + accel).min(target);
            v.push(s);
        }
        for _ in 0..cruise {
            s = (s + rng.gen_range(-0.3..=0.3)).clamp(0.8 * target, target);
            v.push(s);
        }
        while s > 0.0 {
            s = (s - decel).max(0.0);
            v.push(s);
        }
    }
    v.truncate(duration);
    if let Some(last) = v.last_mut() {
        *last = 0.0;
    }
    DriveCycle::from_speeds(format!("synth-{seed}"), &v, 1.0)
}

fn is_holiday(d: NaiveDate) -> bool {
    let (m, day) = (d.month(), d.day());
    (m == 10 && day <= 7) || (m == 9 && day == 8) || (m == 1 && day == 1) || (m == 12 && day == 25)
}

/// Daily weather with seasonal temperatures and persistent conditions.
fn weather_series(rng: &mut ChaCha8Rng, start: NaiveDate, days: usize) -> Vec<WeatherRecord> {
    let mut code: u8 = 0;
    let mut out = Vec::with_capacity(days);
    for k in 0..days {
        let date = start + Duration::days(k as i64);
        // Persist yesterday's weather half the time.
        if rng.gen_bool(0.5) {
            code = match rng.gen_range(0..100) {
                0..=44 => 0,
                45..=74 => 1,
                75..=92 => 2,
                _ => 3,
            };
        }
        let season = f64::from(date.ordinal0()) / 365.0 * std::f64::consts::TAU;
        let high = 25.0 + 8.0 * (season - 1.9).cos() + rng.gen_range(-2.5..2.5) - if code >= 2 { 2.0 } else { 0.0 };
        let low = high - rng.gen_range(5.0..9.0);
        let wind = (rng.gen_range(0..4) + if code == 3 { 3 } else { 0 }) as u8;
        out.push(WeatherRecord {
            date,
            weather_code: code,
            temp_high: (high * 10.0).round() / 10.0,
            temp_low: (low * 10.0).round() / 10.0,
            wind_level: wind,
            is_holiday: is_holiday(date),
        });
    }
    out
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-((h - centre) / width).powi(2)).exp()
}

/// Expected riders per service hour before weather and noise.
fn base_count(weekday: bool, h: f64) -> f64 {
    if weekday {
        28.0 + 95.0 * bump(h, 8.0, 1.1) + 80.0 * bump(h, 18.0, 1.4) + 12.0 * bump(h, 12.5, 2.0)
    } else {
        30.0 + 38.0 * bump(h, 14.0, 3.0)
    }
}

fn weather_factor(w: &WeatherRecord) -> f64 {
    let code = [1.0, 0.96, 0.86, 0.72][usize::from(w.weather_code.min(3))];
    let heat = if w.temp_high > 33.0 { 0.93 } else { 1.0 };
    let cold = if w.temp_high < 12.0 { 0.94 } else { 1.0 };
    let wind = if w.wind_level >= 5 { 0.9 } else { 1.0 };
    code * heat * cold * wind
}

/// Hourly passenger counts and daily weather for every date in
/// `[start, end]`: weekday morning and evening peaks, flatter weekends,
/// weather and holiday suppression, multiplicative noise.
pub fn synth_passengers(seed: u64, start: NaiveDate, end: NaiveDate) -> Result<(Vec<LoadRecord>, Vec<WeatherRecord>)> {
    let days = (end - start).num_days() + 1;
    if days < 14 {
        return Err(EmsError::domain(format!(
            "date range must cover >= 14 days, got {days}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weather = weather_series(&mut rng, start, days as usize);
    let noise = LogNormal::new(0.0, 0.07).expect("valid lognormal");
    let mut records = Vec::new();
    for w in &weather {
        let weekday = !matches!(w.date.weekday(), Weekday::Sat | Weekday::Sun) && !w.is_holiday;
        let holiday = if w.is_holiday { 0.85 } else { 1.0 };
        for hour in SERVICE_HOURS.0..=SERVICE_HOURS.1 {
            let mean = base_count(weekday, f64::from(hour)) * weather_factor(w) * holiday;
            let count = (mean * noise.sample(&mut rng)).round().max(0.0);
            records.push(LoadRecord {
                date: w.date,
                hour,
                passenger_count: count as u32,
            });
        }
    }
    Ok((records, weather))
}
