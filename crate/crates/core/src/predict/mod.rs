//! Passenger-load prediction from calendar and weather features.
//!
//! Four predictors share one interface: an hourly average table, a CART
//! regression tree, gradient-boosted trees and a small ReLU perceptron.
//! Targets are load factors, passenger counts divided by the largest
//! training count.

mod average;
mod format;
mod nn;
mod tree;

use std::collections::BTreeMap;

use chrono::{Datelike, NaiveDate};

pub use average::{train_average, AverageModel};
pub use format::{load_model, save_model};
pub use nn::{encode_features, train_nn, Activation, Layer, NnModel, NnParams};
pub use tree::{train_gbdt, train_regression_tree, GbdtModel, GbdtParams, TreeModel, TreeNode, TreeParams};

use crate::error::{EmsError, Result};

/// Number of raw numeric features seen by the tree models.
pub const N_RAW_FEATURES: usize = 7;

/// Upper clamp applied to predicted load factors before the EMS uses them.
pub const MAX_LOAD_FACTOR: f64 = 1.2;

/// Hourly passenger count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadRecord {
    pub date: NaiveDate,
    pub hour: u8,
    pub passenger_count: u32,
}

/// Daily weather covariates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherRecord {
    pub date: NaiveDate,
    pub weather_code: u8,
    pub temp_high: f64,
    pub temp_low: f64,
    pub wind_level: u8,
    pub is_holiday: bool,
}

/// Model inputs for one hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    /// Monday = 0 ... Sunday = 6.
    pub day_of_week: u8,
    pub hour: u8,
    pub weather_code: u8,
    /// Daily high and low temperature (°C).
    pub temp_high: f64,
    pub temp_low: f64,
    pub wind_level: u8,
    pub is_holiday: bool,
}

impl FeatureVector {
    pub fn new(date: NaiveDate, hour: u8, weather: &WeatherRecord) -> Self {
        Self {
            day_of_week: date.weekday().num_days_from_monday() as u8,
            hour,
            weather_code: weather.weather_code,
            temp_high: weather.temp_high,
            temp_low: weather.temp_low,
            wind_level: weather.wind_level,
            is_holiday: weather.is_holiday,
        }
    }

    /// Checks categorical ranges; `weather_classes` is the number of
    /// weather categories.
    pub fn validate(&self, weather_classes: usize) -> Result<()> {
        if self.day_of_week > 6 {
            return Err(EmsError::domain(format!(
                "day_of_week {} outside 0..=6",
                self.day_of_week
            )));
        }
        if self.hour > 23 {
            return Err(EmsError::domain(format!("hour {} outside 0..=23", self.hour)));
        }
        if usize::from(self.weather_code) >= weather_classes {
            return Err(EmsError::domain(format!(
                "weather_code {} outside 0..{weather_classes}",
                self.weather_code
            )));
        }
        if !self.temp_high.is_finite() || !self.temp_low.is_finite() || self.temp_high < self.temp_low {
            return Err(EmsError::domain(format!(
                "temperatures must be finite with high >= low, got {} / {}",
                self.temp_high, self.temp_low
            )));
        }
        Ok(())
    }

    /// Ordinal encoding used by the tree models: day, hour, weather,
    /// high, low, wind, holiday.
    pub fn raw(&self) -> [f64; N_RAW_FEATURES] {
        [
            f64::from(self.day_of_week),
            f64::from(self.hour),
            f64::from(self.weather_code),
            self.temp_high,
            self.temp_low,
            f64::from(self.wind_level),
            if self.is_holiday { 1.0 } else { 0.0 },
        ]
    }
}

/// One training or test example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadRow {
    pub date: NaiveDate,
    pub features: FeatureVector,
    pub load_factor: f64,
}

/// Examples plus the count that maps load factors back to passengers.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadDataset {
    pub rows: Vec<LoadRow>,
    pub normalization_max: f64,
}

impl LoadDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.load_factor).collect()
    }

    /// Splits into rows dated before `first_test_day` and the rest.
    pub fn split_at_date(&self, first_test_day: NaiveDate) -> (LoadDataset, LoadDataset) {
        let (train, test): (Vec<LoadRow>, Vec<LoadRow>) = self.rows.iter().partition(|r| r.date < first_test_day);
        (
            LoadDataset {
                rows: train,
                normalization_max: self.normalization_max,
            },
            LoadDataset {
                rows: test,
                normalization_max: self.normalization_max,
            },
        )
    }
}

/// Max-normalises passenger counts: each load factor is the count divided
/// by the largest count in `records`. Every record's date must have a
/// weather entry.
pub fn normalize(records: &[LoadRecord], weather: &[WeatherRecord]) -> Result<LoadDataset> {
    if records.is_empty() {
        return Err(EmsError::domain("no passenger records to normalise"));
    }
    let max = records.iter().map(|r| r.passenger_count).max().unwrap_or(0);
    if max == 0 {
        return Err(EmsError::domain("largest passenger count is zero"));
    }
    normalize_with_max(records, weather, f64::from(max))
}

/// Like [`normalize`] with an externally fixed denominator, e.g. the
/// training maximum applied to held-out data. Factors may then exceed 1.
pub fn normalize_with_max(records: &[LoadRecord], weather: &[WeatherRecord], max: f64) -> Result<LoadDataset> {
    if !(max > 0.0 && max.is_finite()) {
        return Err(EmsError::domain(format!(
            "normalisation maximum must be positive, got {max}"
        )));
    }
    let by_date: BTreeMap<NaiveDate, &WeatherRecord> = weather.iter().map(|w| (w.date, w)).collect();
    let mut rows = Vec::with_capacity(records.len());
    for r in records {
        let w = by_date
            .get(&r.date)
            .ok_or_else(|| EmsError::domain(format!("no weather record for {}", r.date)))?;
        let features = FeatureVector::new(r.date, r.hour, w);
        if features.hour > 23 {
            return Err(EmsError::domain(format!(
                "hour {} outside 0..=23 on {}",
                r.hour, r.date
            )));
        }
        rows.push(LoadRow {
            date: r.date,
            features,
            load_factor: f64::from(r.passenger_count) / max,
        });
    }
    Ok(LoadDataset {
        rows,
        normalization_max: max,
    })
}

/// Names of the four model kinds, in reporting order.
pub const PREDICTOR_KINDS: [&str; 4] = ["average", "tree", "gbdt", "nn"];

/// A trained load-factor model.
#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Average(AverageModel),
    Tree(TreeModel),
    Gbdt(GbdtModel),
    Nn(NnModel),
}

impl Predictor {
    pub fn kind(&self) -> &'static str {
        match self {
            Predictor::Average(_) => "average",
            Predictor::Tree(_) => "tree",
            Predictor::Gbdt(_) => "gbdt",
            Predictor::Nn(_) => "nn",
        }
    }
}

/// Predicted load factor for `x` (unclamped).
pub fn predict(model: &Predictor, x: &FeatureVector) -> Result<f64> {
    if x.day_of_week > 6 || x.hour > 23 {
        return Err(EmsError::domain(format!(
            "day_of_week {} / hour {} out of range",
            x.day_of_week, x.hour
        )));
    }
    Ok(match model {
        Predictor::Average(m) => m.predict(x),
        Predictor::Tree(m) => m.predict(&x.raw()),
        Predictor::Gbdt(m) => m.predict(&x.raw()),
        Predictor::Nn(m) => m.predict(x)?,
    })
}

/// Prediction clamped to `[0, MAX_LOAD_FACTOR]` for use as a bus load.
pub fn predict_load_factor(model: &Predictor, x: &FeatureVector) -> Result<f64> {
    Ok(predict(model, x)?.clamp(0.0, MAX_LOAD_FACTOR))
}

/// Root mean squared error.
pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(EmsError::domain(format!(
            "length mismatch: {} targets vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(EmsError::domain("rmse of empty sequences"));
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y_true.len() as f64).sqrt())
}

/// Unbiased sample variance (divisor N - 1) of per-day errors.
pub fn rmse_variance(daily_rmse: &[f64]) -> Result<f64> {
    let n = daily_rmse.len();
    if n < 2 {
        return Err(EmsError::domain("variance needs at least two values"));
    }
    let mean = daily_rmse.iter().sum::<f64>() / n as f64;
    Ok(daily_rmse.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
}

/// Per-day and overall error of a model on a held-out set, in passengers.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub daily: Vec<(NaiveDate, f64)>,
    pub total: f64,
    pub variance: f64,
}

/// Evaluates `model` on `test`, converting load factors back to passenger
/// counts with the dataset's normalisation maximum.
pub fn evaluate(model: &Predictor, test: &LoadDataset) -> Result<Evaluation> {
    let scale = test.normalization_max;
    let mut per_day: BTreeMap<NaiveDate, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let (mut all_t, mut all_p) = (Vec::with_capacity(test.len()), Vec::with_capacity(test.len()));
    for r in &test.rows {
        let p = predict(model, &r.features)? * scale;
        let t = r.load_factor * scale;
        let e = per_day.entry(r.date).or_default();
        e.0.push(t);
        e.1.push(p);
        all_t.push(t);
        all_p.push(p);
    }
    let daily = per_day
        .into_iter()
        .map(|(d, (t, p))| rmse(&t, &p).map(|e| (d, e)))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = daily.iter().map(|&(_, e)| e).collect();
    Ok(Evaluation {
        total: rmse(&all_t, &all_p)?,
        variance: rmse_variance(&values)?,
        daily,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2014, 12, d).unwrap()
    }

    fn weather(date: NaiveDate) -> WeatherRecord {
        WeatherRecord {
            date,
            weather_code: 1,
            temp_high: 20.0,
            temp_low: 12.0,
            wind_level: 2,
            is_holiday: false,
        }
    }

    fn records(counts: &[u32]) -> Vec<LoadRecord> {
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| LoadRecord {
                date: day(1),
                hour: i as u8,
                passenger_count: c,
            })
            .collect()
    }

    #[test]
    fn normalize_examples() {
        let w = [weather(day(1))];
        let f = |c: &[u32]| normalize(&records(c), &w).unwrap().targets();
        assert_eq!(f(&[50, 100]), vec![0.5, 1.0]);
        assert_eq!(f(&[7, 7, 7]), vec![1.0, 1.0, 1.0]);
        assert_eq!(f(&[30, 90, 60]), vec![30.0 / 90.0, 1.0, 60.0 / 90.0]);
        assert_eq!(normalize(&records(&[30, 90]), &w).unwrap().normalization_max, 90.0);
    }

    #[test]
    fn normalize_rejects_bad_input() {
        let w = [weather(day(1))];
        assert!(normalize(&[], &w).is_err());
        assert!(normalize(&records(&[0, 0]), &w).is_err());
        assert!(normalize(&records(&[5]), &[]).is_err());
    }

    #[test]
    fn feature_vector_from_calendar() {
        // 2014-12-22 is a Monday.
        let f = FeatureVector::new(day(22), 8, &weather(day(22)));
        assert_eq!(f.day_of_week, 0);
        assert_eq!(f.raw(), [0.0, 8.0, 1.0, 20.0, 12.0, 2.0, 0.0]);
        assert!(f.validate(4).is_ok());
        assert!(FeatureVector { weather_code: 4, ..f }.validate(4).is_err());
        assert!(FeatureVector { temp_low: 25.0, ..f }.validate(4).is_err());
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse(&[1.0], &[3.0]).unwrap(), 2.0);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn variance_examples() {
        assert_eq!(rmse_variance(&[2.5; 7]).unwrap(), 0.0);
        assert_eq!(rmse_variance(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(rmse_variance(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0]).unwrap(), 7.0);
        assert!(rmse_variance(&[1.0]).is_err());
    }

    #[test]
    fn evaluate_groups_by_day_in_passengers() {
        let rows = vec![
            LoadRow {
                date: day(1),
                features: FeatureVector::new(day(1), 8, &weather(day(1))),
                load_factor: 0.5,
            },
            LoadRow {
                date: day(2),
                features: FeatureVector::new(day(2), 8, &weather(day(2))),
                load_factor: 0.7,
            },
        ];
        let test = LoadDataset {
            rows,
            normalization_max: 100.0,
        };
        let model = Predictor::Gbdt(GbdtModel::constant(0.6));
        let ev = evaluate(&model, &test).unwrap();
        assert_eq!(ev.daily.len(), 2);
        assert!((ev.daily[0].1 - 10.0).abs() < 1e-9 && (ev.daily[1].1 - 10.0).abs() < 1e-9);
        assert!((ev.total - 10.0).abs() < 1e-9);
        assert!(ev.variance.abs() < 1e-12);
    }

    #[test]
    fn predict_rejects_out_of_range() {
        let model = Predictor::Gbdt(GbdtModel::constant(0.6));
        let mut f = FeatureVector::new(day(1), 8, &weather(day(1)));
        f.hour = 24;
        assert!(predict(&model, &f).is_err());
    }

    proptest! {
        #[test]
        fn rmse_zero_on_self_and_permutation_invariant(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..20), rot in 0usize..20) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.iter().cloned().unzip();
            prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
            let k = rot % a.len();
            let (mut ra, mut rb) = (a.clone(), b.clone());
            ra.rotate_left(k);
            rb.rotate_left(k);
            let (x, y) = (rmse(&a, &b).unwrap(), rmse(&ra, &rb).unwrap());
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
    }
}
