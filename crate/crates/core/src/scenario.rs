//! End-to-end experiment layout: load or synthesise the data, train the
//! load predictors on all but the final week, and compare the strategies
//! at a peak and an off-peak hour of a held-out day.

use chrono::NaiveDate;

use crate::config::Config;
use crate::control::{compare_strategies, ComparisonReport, LoadForecast};
use crate::error::{EmsError, Result};
use crate::hess::{q_loss_from_soh, HessState};
use crate::io;
use crate::predict::{
    evaluate, normalize_with_max, predict_load_factor, train_average, train_gbdt, train_nn, train_regression_tree,
    Evaluation, FeatureVector, LoadDataset, LoadRecord, Predictor, WeatherRecord,
};
use crate::synth::{synth_cycle, synth_passengers};
use crate::vehicle::DriveCycle;

/// Drive cycle plus ridership and weather history.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioData {
    pub cycle: DriveCycle,
    pub passengers: Vec<LoadRecord>,
    pub weather: Vec<WeatherRecord>,
}

impl ScenarioData {
    /// Reads the configured files, generating synthetic data from the
    /// seed for anything not given.
    pub fn load(config: &Config) -> Result<Self> {
        let s = &config.scenario;
        let cycle = match &s.cycle_file {
            Some(path) => io::load_cycle(path)?,
            None => synth_cycle(config.seed, s.cycle_duration_s, s.max_speed)?,
        };
        let (passengers, weather) = match (&s.passengers_file, &s.weather_file) {
            (Some(p), Some(w)) => (io::load_passengers(p)?, io::load_weather(w)?),
            (None, None) => synth_passengers(config.seed, s.data_start, s.data_end)?,
            _ => {
                return Err(EmsError::config(
                    "scenario.passengers_file/weather_file",
                    "give both ridership files or neither",
                ))
            }
        };
        Ok(Self {
            cycle,
            passengers,
            weather,
        })
    }
}

/// Training history and held-out week, both normalised by the largest
/// training count.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSplit {
    pub train: LoadDataset,
    pub test: LoadDataset,
}

/// Restricts records to `[data_start, data_end]` and splits at
/// `test_start`. Held-out factors may exceed 1 when a test hour is busier
/// than anything in training.
pub fn split_dataset(config: &Config, data: &ScenarioData) -> Result<LoadSplit> {
    let s = &config.scenario;
    let in_range: Vec<LoadRecord> = data
        .passengers
        .iter()
        .filter(|r| r.date >= s.data_start && r.date <= s.data_end)
        .copied()
        .collect();
    let (train, test): (Vec<LoadRecord>, Vec<LoadRecord>) = in_range.iter().partition(|r| r.date < s.test_start);
    if train.is_empty() || test.is_empty() {
        return Err(EmsError::config(
            "scenario.test_start",
            format!("split leaves {} training and {} test records", train.len(), test.len()),
        ));
    }
    let max = train.iter().map(|r| r.passenger_count).max().unwrap_or(0);
    if max == 0 {
        return Err(EmsError::domain("largest training passenger count is zero"));
    }
    Ok(LoadSplit {
        train: normalize_with_max(&train, &data.weather, f64::from(max))?,
        test: normalize_with_max(&test, &data.weather, f64::from(max))?,
    })
}

/// Trains the four predictors, in reporting order.
pub fn train_predictors(config: &Config, train: &LoadDataset) -> Result<Vec<Predictor>> {
    Ok(vec![
        Predictor::Average(train_average(train)?),
        Predictor::Tree(train_regression_tree(train, &config.tree)?),
        Predictor::Gbdt(train_gbdt(train, &config.gbdt)?),
        Predictor::Nn(train_nn(train, &config.nn)?),
    ])
}

/// Per-model held-out errors, in passengers.
pub fn prediction_report(models: &[Predictor], test: &LoadDataset) -> Result<Vec<(String, Evaluation)>> {
    models
        .iter()
        .map(|m| Ok((m.kind().to_string(), evaluate(m, test)?)))
        .collect()
}

/// The model named by `scenario.predictor`.
pub fn forecast_model<'m>(config: &Config, models: &'m [Predictor]) -> Result<&'m Predictor> {
    models
        .iter()
        .find(|m| m.kind() == config.scenario.predictor)
        .ok_or_else(|| {
            EmsError::config(
                "scenario.predictor",
                format!("no trained `{}` model", config.scenario.predictor),
            )
        })
}

/// Forecast for a run starting at a given hour: each simulated second
/// uses the predicted load factor of the hour containing it.
#[derive(Debug, Clone)]
pub struct HourlyForecast<'m> {
    pub model: &'m Predictor,
    pub date: NaiveDate,
    pub start_hour: u8,
    pub weather: WeatherRecord,
}

impl HourlyForecast<'_> {
    pub fn features(&self, hour: u8) -> FeatureVector {
        FeatureVector::new(self.date, hour, &self.weather)
    }
}

impl LoadForecast for HourlyForecast<'_> {
    fn load_at(&self, t: f64) -> Result<f64> {
        let hour = (f64::from(self.start_hour) + (t / 3600.0).floor()).min(23.0) as u8;
        predict_load_factor(self.model, &self.features(hour))
    }
}

/// One evaluated hour of a held-out day.
#[derive(Debug, Clone, PartialEq)]
pub struct HourScenario {
    pub date: NaiveDate,
    pub hour: u8,
    /// Observed load factor, clamped to the vehicle's [0, 1] range.
    pub true_load: f64,
    /// Forecast for the hour, clamped likewise.
    pub predicted_load: f64,
    pub report: ComparisonReport,
}

impl HourScenario {
    /// Relative error of the load forecast.
    pub fn prediction_error(&self) -> f64 {
        if self.true_load > 0.0 {
            (self.predicted_load - self.true_load).abs() / self.true_load
        } else {
            self.predicted_load.abs()
        }
    }
}

/// Initial storage state from the scenario settings.
pub fn initial_state(config: &Config) -> HessState {
    let s = &config.scenario;
    HessState::new(s.init_soc_bat, s.init_soc_sc).with_q_loss(q_loss_from_soh(s.init_soh))
}

/// Observed load factor at `date`/`hour` in `data`, if recorded.
pub fn observed_load(data: &LoadDataset, date: NaiveDate, hour: u8) -> Option<f64> {
    data.rows
        .iter()
        .find(|r| r.date == date && r.features.hour == hour)
        .map(|r| r.load_factor)
}

/// Runs the three strategies on the drive cycle at `hour` of
/// `scenario.eval_date`, with the cloud planner fed by `model`.
pub fn run_hour(
    config: &Config,
    data: &ScenarioData,
    split: &LoadSplit,
    model: &Predictor,
    hour: u8,
) -> Result<HourScenario> {
    let date = config.scenario.eval_date;
    let observed = observed_load(&split.test, date, hour)
        .or_else(|| observed_load(&split.train, date, hour))
        .ok_or_else(|| {
            EmsError::config(
                "scenario.eval_date",
                format!("no passenger record for {date} {hour}:00"),
            )
        })?;
    let weather = *data
        .weather
        .iter()
        .find(|w| w.date == date)
        .ok_or_else(|| EmsError::config("scenario.eval_date", format!("no weather record for {date}")))?;
    let forecast = HourlyForecast {
        model,
        date,
        start_hour: hour,
        weather,
    };
    let true_load = observed.clamp(0.0, 1.0);
    let predicted_load = forecast.load_at(0.0)?.clamp(0.0, 1.0);
    let setup = config.ems_setup()?;
    let report = compare_strategies(
        &data.cycle,
        true_load,
        &forecast,
        &initial_state(config),
        &config.ems,
        &setup,
    )?;
    Ok(HourScenario {
        date,
        hour,
        true_load,
        predicted_load,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::PREDICTOR_KINDS;

    fn small_config() -> Config {
        let mut c = Config::default();
        c.scenario.data_start = NaiveDate::from_ymd_opt(2014, 11, 1).unwrap();
        c.nn.epochs = 5;
        c.gbdt.n_trees = 10;
        c
    }

    #[test]
    fn split_normalises_by_training_max() {
        let c = small_config();
        let data = ScenarioData::load(&c).unwrap();
        let split = split_dataset(&c, &data).unwrap();
        assert!(split.train.rows.iter().all(|r| r.date < c.scenario.test_start));
        assert!(split.test.rows.iter().all(|r| r.date >= c.scenario.test_start));
        assert_eq!(split.test.rows.len(), 7 * 16);
        let max = split.train.targets().into_iter().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
        assert_eq!(split.train.normalization_max, split.test.normalization_max);
    }

    #[test]
    fn predictors_train_and_report_in_order() {
        let c = small_config();
        let data = ScenarioData::load(&c).unwrap();
        let split = split_dataset(&c, &data).unwrap();
        let models = train_predictors(&c, &split.train).unwrap();
        let report = prediction_report(&models, &split.test).unwrap();
        let names: Vec<&str> = report.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, PREDICTOR_KINDS);
        assert!(report.iter().all(|(_, e)| e.daily.len() == 7 && e.total.is_finite()));
        assert_eq!(forecast_model(&c, &models).unwrap().kind(), "gbdt");
    }

    #[test]
    fn forecast_follows_hours() {
        let c = small_config();
        let data = ScenarioData::load(&c).unwrap();
        let split = split_dataset(&c, &data).unwrap();
        let model = Predictor::Average(train_average(&split.train).unwrap());
        let date = c.scenario.eval_date;
        let weather = *data.weather.iter().find(|w| w.date == date).unwrap();
        let f = HourlyForecast {
            model: &model,
            date,
            start_hour: 7,
            weather,
        };
        let at = |h: u8| predict_load_factor(&model, &f.features(h)).unwrap();
        assert_eq!(f.load_at(0.0).unwrap(), at(7));
        assert_eq!(f.load_at(3599.0).unwrap(), at(7));
        assert_eq!(f.load_at(3600.0).unwrap(), at(8));
    }

    #[test]
    fn mismatched_ridership_files_rejected() {
        let mut c = Config::default();
        c.scenario.passengers_file = Some("p.csv".into());
        assert!(matches!(ScenarioData::load(&c), Err(EmsError::Config { .. })));
    }
}
