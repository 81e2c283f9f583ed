//! Flat `key = value` configuration with dotted section prefixes.
//!
//! ```text
//! # comments start with '#'
//! seed = 2014
//! battery.capacity_ah = 60
//! ems.replan_period_s = 60
//! ```
//!
//! Every key has a default; unknown keys and out-of-range values are
//! rejected with a message naming the key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::control::{EmsConfig, EmsSetup, Strategy};
use crate::dpcore::{CostParams, Grid, StorageModel};
use crate::error::{EmsError, Result};
use crate::hess::{AgingParams, BatteryParams, SocTable, SupercapParams};
use crate::predict::{GbdtParams, NnParams, TreeParams, PREDICTOR_KINDS};
use crate::vehicle::VehicleParams;

/// Discretisation of the DP state and control axes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub bat_range: (f64, f64),
    pub bat_step: f64,
    pub sc_range: (f64, f64),
    pub sc_step: f64,
    pub n_controls: usize,
    /// Largest |p_sc| on the control axis (W); the pack limit if unset.
    pub power_limit: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            bat_range: (0.08, 0.92),
            bat_step: 0.005,
            sc_range: (0.45, 1.0),
            sc_step: 0.01,
            n_controls: 101,
            power_limit: None,
        }
    }
}

impl GridConfig {
    pub fn build(&self, supercap: &SupercapParams) -> Result<Grid> {
        for (key, (lo, hi)) in [
            ("grid.bat_min/bat_max", self.bat_range),
            ("grid.sc_min/sc_max", self.sc_range),
        ] {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(EmsError::config(
                    key,
                    format!("axis must satisfy 0 <= min < max <= 1, got [{lo}, {hi}]"),
                ));
            }
        }
        if !(self.bat_step > 0.0) {
            return Err(EmsError::config("grid.bat_step", "must be positive"));
        }
        if !(self.sc_step > 0.0) {
            return Err(EmsError::config("grid.sc_step", "must be positive"));
        }
        if self.n_controls < 2 {
            return Err(EmsError::config("grid.controls", "need at least 2 control levels"));
        }
        let limit = self.power_limit.unwrap_or_else(|| supercap.pack_power_limit());
        if !(limit > 0.0) {
            return Err(EmsError::config("grid.power_limit_w", "must be positive"));
        }
        Grid::uniform(
            self.bat_range,
            self.bat_step,
            self.sc_range,
            self.sc_step,
            self.n_controls,
            limit,
        )
    }
}

/// Where scenario data comes from and which hours are evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Drive-cycle CSV; a synthetic cycle is generated when unset.
    pub cycle_file: Option<PathBuf>,
    pub cycle_duration_s: usize,
    pub max_speed: f64,
    /// Passenger and weather CSVs; synthetic data when unset.
    pub passengers_file: Option<PathBuf>,
    pub weather_file: Option<PathBuf>,
    pub data_start: NaiveDate,
    pub data_end: NaiveDate,
    /// First held-out day; rows from here on form the test week.
    pub test_start: NaiveDate,
    /// Day and hours of the strategy comparison.
    pub eval_date: NaiveDate,
    pub peak_hour: u8,
    pub offpeak_hour: u8,
    /// Model whose forecast drives the cloud planner: average, tree,
    /// gbdt or nn.
    pub predictor: String,
    pub init_soc_bat: f64,
    pub init_soc_sc: f64,
    /// Battery state of health at the start of the run.
    pub init_soh: f64,
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid default date")
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cycle_file: None,
            cycle_duration_s: 1200,
            max_speed: 15.0,
            passengers_file: None,
            weather_file: None,
            data_start: date(2014, 8, 1),
            data_end: date(2014, 12, 28),
            test_start: date(2014, 12, 22),
            eval_date: date(2014, 12, 22),
            peak_hour: 8,
            offpeak_hour: 12,
            predictor: "gbdt".to_string(),
            init_soc_bat: 0.6,
            init_soc_sc: 0.75,
            init_soh: 0.9,
        }
    }
}

/// Complete configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub vehicle: VehicleParams,
    pub battery: BatteryParams,
    /// Optional `soc,ocv_v,r_ohm` CSV replacing the affine curve.
    pub battery_curve_file: Option<PathBuf>,
    pub supercap: SupercapParams,
    pub aging: AgingParams,
    pub cost: CostParams,
    pub grid: GridConfig,
    pub tree: TreeParams,
    pub gbdt: GbdtParams,
    pub nn: NnParams,
    pub ems: EmsConfig,
    pub scenario: ScenarioConfig,
}

impl Default for Config {
    fn default() -> Self {
        let seed = 2014;
        Self {
            seed,
            vehicle: VehicleParams::default(),
            battery: BatteryParams::default(),
            battery_curve_file: None,
            supercap: SupercapParams::default(),
            aging: AgingParams::default(),
            cost: CostParams::default(),
            grid: GridConfig::default(),
            tree: TreeParams::default(),
            gbdt: GbdtParams::default(),
            nn: NnParams {
                seed,
                ..NnParams::default()
            },
            ems: EmsConfig::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

/// Affine battery curve parameters kept until the table is built.
struct CurveDraft {
    ocv_empty: f64,
    ocv_full: f64,
    resistance: f64,
}

struct Entry {
    value: String,
    line: usize,
}

struct Reader<'a> {
    path: &'a Path,
    entries: BTreeMap<String, Entry>,
}

impl Reader<'_> {
    fn err(&self, key: &str, message: impl Into<String>) -> EmsError {
        let line = self.entries.get(key).map_or(0, |e| e.line);
        EmsError::Parse {
            path: self.path.to_path_buf(),
            line,
            message: format!("`{key}`: {}", message.into()),
        }
    }

    fn take<T: std::str::FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        if let Some(e) = self.entries.get(key) {
            *slot = e
                .value
                .parse()
                .map_err(|_| self.err(key, format!("cannot parse `{}`", e.value)))?;
            self.entries.remove(key);
        }
        Ok(())
    }

    fn take_opt<T: std::str::FromStr>(&mut self, key: &str, slot: &mut Option<T>) -> Result<()> {
        if let Some(e) = self.entries.get(key) {
            let v = e
                .value
                .parse()
                .map_err(|_| self.err(key, format!("cannot parse `{}`", e.value)))?;
            *slot = Some(v);
            self.entries.remove(key);
        }
        Ok(())
    }

    fn take_path(&mut self, key: &str, slot: &mut Option<PathBuf>) -> Result<()> {
        if let Some(e) = self.entries.remove(key) {
            let p = PathBuf::from(e.value);
            let base = self.path.parent().unwrap_or(Path::new(""));
            *slot = Some(if p.is_absolute() { p } else { base.join(p) });
        }
        Ok(())
    }

    fn take_date(&mut self, key: &str, slot: &mut NaiveDate) -> Result<()> {
        if let Some(e) = self.entries.get(key) {
            *slot = NaiveDate::parse_from_str(&e.value, "%Y-%m-%d")
                .map_err(|_| self.err(key, format!("expected YYYY-MM-DD, got `{}`", e.value)))?;
            self.entries.remove(key);
        }
        Ok(())
    }
}

impl Config {
    /// Parses configuration text; `origin` is used for messages and to
    /// resolve relative file paths.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(EmsError::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let key = k.trim().to_string();
            if entries.contains_key(&key) {
                return Err(EmsError::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
            entries.insert(
                key,
                Entry {
                    value: v.trim().to_string(),
                    line: i + 1,
                },
            );
        }
        let mut r = Reader { path: origin, entries };
        let mut c = Config::default();
        r.take("seed", &mut c.seed)?;
        c.nn.seed = c.seed;

        let v = &mut c.vehicle;
        r.take("vehicle.empty_mass", &mut v.empty_mass)?;
        r.take("vehicle.person_mass", &mut v.person_mass)?;
        r.take("vehicle.max_passengers", &mut v.max_passengers)?;
        r.take("vehicle.gravity", &mut v.gravity)?;
        r.take("vehicle.frontal_area", &mut v.frontal_area)?;
        r.take("vehicle.rolling_coeff", &mut v.rolling_coeff)?;
        r.take("vehicle.drag_coeff", &mut v.drag_coeff)?;
        r.take("vehicle.air_density", &mut v.air_density)?;
        r.take("vehicle.eta_transmission", &mut v.eta_transmission)?;
        r.take("vehicle.eta_machine", &mut v.eta_machine)?;
        r.take("vehicle.eta_regen", &mut v.eta_regen)?;

        let b = &mut c.battery;
        r.take("battery.capacity_ah", &mut b.capacity_cell)?;
        r.take("battery.stored_energy_kwh", &mut b.stored_energy_cell)?;
        r.take("battery.soc_min", &mut b.soc_window.0)?;
        r.take("battery.soc_max", &mut b.soc_window.1)?;
        r.take("battery.series", &mut b.series_count)?;
        r.take("battery.parallel", &mut b.parallel_count)?;
        r.take("battery.current_min", &mut b.current_bounds_cell.0)?;
        r.take("battery.current_max", &mut b.current_bounds_cell.1)?;
        let mut curve = CurveDraft {
            ocv_empty: b.curve.ocv(0.0),
            ocv_full: b.curve.ocv(1.0),
            resistance: b.curve.resistance(0.5),
        };
        let mut curve_set = false;
        for (key, slot) in [
            ("battery.ocv_empty_v", &mut curve.ocv_empty),
            ("battery.ocv_full_v", &mut curve.ocv_full),
            ("battery.resistance_ohm", &mut curve.resistance),
        ] {
            curve_set |= r.entries.contains_key(key);
            r.take(key, slot)?;
        }
        r.take_path("battery.curve_file", &mut c.battery_curve_file)?;
        if let Some(path) = &c.battery_curve_file {
            if curve_set {
                return Err(EmsError::config(
                    "battery.curve_file",
                    "give either a curve file or ocv_empty_v/ocv_full_v/resistance_ohm, not both",
                ));
            }
            c.battery.curve = crate::io::load_soc_table(path)?;
        } else if curve_set {
            if !(curve.resistance > 0.0) {
                return Err(EmsError::config(
                    "battery.resistance_ohm",
                    format!("must be positive, got {}", curve.resistance),
                ));
            }
            c.battery.curve = SocTable::affine(curve.ocv_empty, curve.ocv_full, curve.resistance)
                .map_err(|e| EmsError::config("battery.ocv_empty_v/ocv_full_v", e.to_string()))?;
        }

        let s = &mut c.supercap;
        r.take("supercap.max_voltage_v", &mut s.max_voltage_cell)?;
        r.take("supercap.capacitance_f", &mut s.capacitance_cell)?;
        r.take("supercap.stored_energy_kwh", &mut s.stored_energy_cell)?;
        r.take("supercap.soc_min", &mut s.soc_window.0)?;
        r.take("supercap.soc_max", &mut s.soc_window.1)?;
        r.take("supercap.resistance_ohm", &mut s.resistance_cell)?;
        r.take("supercap.series", &mut s.series_count)?;
        r.take("supercap.parallel", &mut s.parallel_count)?;
        r.take("supercap.current_min", &mut s.current_bounds_cell.0)?;
        r.take("supercap.current_max", &mut s.current_bounds_cell.1)?;

        let a = &mut c.aging;
        r.take("aging.prefactor", &mut a.prefactor)?;
        r.take("aging.activation_base", &mut a.activation_base)?;
        r.take("aging.crate_coeff", &mut a.crate_coeff)?;
        r.take("aging.gas_constant", &mut a.gas_constant)?;
        r.take("aging.z", &mut a.power_exponent_z)?;
        r.take("aging.temperature_k", &mut a.temperature)?;

        let k = &mut c.cost;
        r.take("cost.price_capacity_loss", &mut k.price_capacity_loss)?;
        r.take("cost.price_electricity", &mut k.price_electricity)?;
        r.take("cost.slack_weight_bat", &mut k.slack_weight_bat)?;
        r.take("cost.slack_weight_sc", &mut k.slack_weight_sc)?;
        r.take("cost.sample_period_s", &mut k.sample_period)?;
        r.take("cost.bat_soc_min", &mut k.bat_window.0)?;
        r.take("cost.bat_soc_max", &mut k.bat_window.1)?;
        r.take("cost.sc_soc_min", &mut k.sc_window.0)?;
        r.take("cost.sc_soc_max", &mut k.sc_window.1)?;
        r.take("cost.min_frozen_q_loss", &mut k.min_frozen_q_loss)?;

        let g = &mut c.grid;
        r.take("grid.bat_min", &mut g.bat_range.0)?;
        r.take("grid.bat_max", &mut g.bat_range.1)?;
        r.take("grid.bat_step", &mut g.bat_step)?;
        r.take("grid.sc_min", &mut g.sc_range.0)?;
        r.take("grid.sc_max", &mut g.sc_range.1)?;
        r.take("grid.sc_step", &mut g.sc_step)?;
        r.take("grid.controls", &mut g.n_controls)?;
        r.take_opt("grid.power_limit_w", &mut g.power_limit)?;

        r.take("predict.tree.max_depth", &mut c.tree.max_depth)?;
        r.take("predict.tree.min_leaf", &mut c.tree.min_leaf)?;
        r.take("predict.tree.min_impurity_decrease", &mut c.tree.min_impurity_decrease)?;
        r.take("predict.gbdt.n_trees", &mut c.gbdt.n_trees)?;
        r.take("predict.gbdt.learning_rate", &mut c.gbdt.learning_rate)?;
        r.take("predict.gbdt.max_depth", &mut c.gbdt.tree.max_depth)?;
        r.take("predict.gbdt.min_leaf", &mut c.gbdt.tree.min_leaf)?;
        r.take("predict.nn.hidden1", &mut c.nn.hidden.0)?;
        r.take("predict.nn.hidden2", &mut c.nn.hidden.1)?;
        r.take("predict.nn.epochs", &mut c.nn.epochs)?;
        r.take("predict.nn.learning_rate", &mut c.nn.learning_rate)?;
        r.take("predict.weather_classes", &mut c.nn.weather_classes)?;

        let mut strategy = c.ems.strategy.name().to_string();
        r.take("ems.strategy", &mut strategy)?;
        c.ems.strategy = Strategy::parse(&strategy)?;
        r.take("ems.horizon_s", &mut c.ems.horizon)?;
        r.take("ems.replan_period_s", &mut c.ems.replan_period)?;
        r.take("ems.apply_fraction", &mut c.ems.apply_fraction)?;
        r.take("ems.sc_buffer", &mut c.ems.sc_buffer)?;
        r.take("ems.rule_load_factor", &mut c.ems.rule_load_factor)?;
        r.take_opt("ems.planner_q_loss", &mut c.ems.planner_q_loss)?;

        let sc = &mut c.scenario;
        r.take_path("scenario.cycle_file", &mut sc.cycle_file)?;
        r.take("scenario.cycle_duration_s", &mut sc.cycle_duration_s)?;
        r.take("scenario.max_speed", &mut sc.max_speed)?;
        r.take_path("scenario.passengers_file", &mut sc.passengers_file)?;
        r.take_path("scenario.weather_file", &mut sc.weather_file)?;
        r.take_date("scenario.data_start", &mut sc.data_start)?;
        r.take_date("scenario.data_end", &mut sc.data_end)?;
        r.take_date("scenario.test_start", &mut sc.test_start)?;
        r.take_date("scenario.eval_date", &mut sc.eval_date)?;
        r.take("scenario.peak_hour", &mut sc.peak_hour)?;
        r.take("scenario.offpeak_hour", &mut sc.offpeak_hour)?;
        r.take("scenario.predictor", &mut sc.predictor)?;
        r.take("scenario.init_soc_bat", &mut sc.init_soc_bat)?;
        r.take("scenario.init_soc_sc", &mut sc.init_soc_sc)?;
        r.take("scenario.init_soh", &mut sc.init_soh)?;

        if let Some((key, e)) = r.entries.iter().next() {
            return Err(EmsError::Parse {
                path: origin.to_path_buf(),
                line: e.line,
                message: format!("unknown key `{key}`"),
            });
        }
        c.validate()?;
        Ok(c)
    }

    /// Reads and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EmsError::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Checks every section; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.battery.validate()?;
        self.supercap.validate()?;
        self.aging.validate()?;
        self.cost.validate()?;
        self.grid.build(&self.supercap)?;
        self.tree.validate()?;
        self.gbdt.validate()?;
        if self.nn.hidden.0 == 0 || self.nn.hidden.1 == 0 {
            return Err(EmsError::config("predict.nn.hidden1/hidden2", "widths must be >= 1"));
        }
        if !(self.nn.learning_rate > 0.0) {
            return Err(EmsError::config("predict.nn.learning_rate", "must be positive"));
        }
        if self.nn.weather_classes == 0 {
            return Err(EmsError::config("predict.weather_classes", "must be >= 1"));
        }
        self.ems.validate()?;
        let s = &self.scenario;
        if s.cycle_duration_s < 60 {
            return Err(EmsError::config("scenario.cycle_duration_s", "must be >= 60"));
        }
        if !(s.max_speed > 0.0) {
            return Err(EmsError::config("scenario.max_speed", "must be positive"));
        }
        if s.data_start > s.data_end || s.test_start <= s.data_start || s.test_start > s.data_end {
            return Err(EmsError::config(
                "scenario.test_start",
                "must fall after data_start and no later than data_end",
            ));
        }
        for (key, h) in [
            ("scenario.peak_hour", s.peak_hour),
            ("scenario.offpeak_hour", s.offpeak_hour),
        ] {
            if h > 23 {
                return Err(EmsError::config(key, "hour must lie in 0..=23"));
            }
        }
        if !PREDICTOR_KINDS.contains(&s.predictor.as_str()) {
            return Err(EmsError::config(
                "scenario.predictor",
                format!("expected one of {}, got `{}`", PREDICTOR_KINDS.join(", "), s.predictor),
            ));
        }
        for (key, v) in [
            ("scenario.init_soc_bat", s.init_soc_bat),
            ("scenario.init_soc_sc", s.init_soc_sc),
            ("scenario.init_soh", s.init_soh),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EmsError::config(key, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }

    pub fn storage_model(&self) -> StorageModel {
        StorageModel {
            battery: self.battery.clone(),
            supercap: self.supercap.clone(),
            aging: self.aging.clone(),
        }
    }

    /// Vehicle, storage, cost and grid bundled for the strategies.
    pub fn ems_setup(&self) -> Result<EmsSetup> {
        Ok(EmsSetup {
            vehicle: self.vehicle.clone(),
            model: self.storage_model(),
            cost: self.cost.clone(),
            grid: self.grid.build(&self.supercap)?,
        })
    }

    /// Every key with its current value, one `key = value` per line.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut lines: Vec<(String, String)> = vec![("seed".into(), self.seed.to_string())];
        let v = &self.vehicle;
        for (k, x) in [
            ("empty_mass", v.empty_mass),
            ("person_mass", v.person_mass),
            ("max_passengers", v.max_passengers),
            ("gravity", v.gravity),
            ("frontal_area", v.frontal_area),
            ("rolling_coeff", v.rolling_coeff),
            ("drag_coeff", v.drag_coeff),
            ("air_density", v.air_density),
            ("eta_transmission", v.eta_transmission),
            ("eta_machine", v.eta_machine),
            ("eta_regen", v.eta_regen),
        ] {
            lines.push((format!("vehicle.{k}"), x.to_string()));
        }
        let b = &self.battery;
        for (k, x) in [
            ("capacity_ah", b.capacity_cell),
            ("stored_energy_kwh", b.stored_energy_cell),
            ("soc_min", b.soc_window.0),
            ("soc_max", b.soc_window.1),
            ("current_min", b.current_bounds_cell.0),
            ("current_max", b.current_bounds_cell.1),
        ] {
            lines.push((format!("battery.{k}"), x.to_string()));
        }
        lines.push(("battery.series".into(), b.series_count.to_string()));
        lines.push(("battery.parallel".into(), b.parallel_count.to_string()));
        if let Some(p) = opt(&self.battery_curve_file) {
            lines.push(("battery.curve_file".into(), p));
        } else {
            lines.push(("battery.ocv_empty_v".into(), b.curve.ocv(0.0).to_string()));
            lines.push(("battery.ocv_full_v".into(), b.curve.ocv(1.0).to_string()));
            lines.push(("battery.resistance_ohm".into(), b.curve.resistance(0.5).to_string()));
        }
        let s = &self.supercap;
        for (k, x) in [
            ("max_voltage_v", s.max_voltage_cell),
            ("capacitance_f", s.capacitance_cell),
            ("stored_energy_kwh", s.stored_energy_cell),
            ("soc_min", s.soc_window.0),
            ("soc_max", s.soc_window.1),
            ("resistance_ohm", s.resistance_cell),
            ("current_min", s.current_bounds_cell.0),
            ("current_max", s.current_bounds_cell.1),
        ] {
            lines.push((format!("supercap.{k}"), x.to_string()));
        }
        lines.push(("supercap.series".into(), s.series_count.to_string()));
        lines.push(("supercap.parallel".into(), s.parallel_count.to_string()));
        let a = &self.aging;
        for (k, x) in [
            ("prefactor", a.prefactor),
            ("activation_base", a.activation_base),
            ("crate_coeff", a.crate_coeff),
            ("gas_constant", a.gas_constant),
            ("z", a.power_exponent_z),
            ("temperature_k", a.temperature),
        ] {
            lines.push((format!("aging.{k}"), x.to_string()));
        }
        let c = &self.cost;
        for (k, x) in [
            ("price_capacity_loss", c.price_capacity_loss),
            ("price_electricity", c.price_electricity),
            ("slack_weight_bat", c.slack_weight_bat),
            ("slack_weight_sc", c.slack_weight_sc),
            ("sample_period_s", c.sample_period),
            ("bat_soc_min", c.bat_window.0),
            ("bat_soc_max", c.bat_window.1),
            ("sc_soc_min", c.sc_window.0),
            ("sc_soc_max", c.sc_window.1),
            ("min_frozen_q_loss", c.min_frozen_q_loss),
        ] {
            lines.push((format!("cost.{k}"), x.to_string()));
        }
        let g = &self.grid;
        for (k, x) in [
            ("bat_min", g.bat_range.0),
            ("bat_max", g.bat_range.1),
            ("bat_step", g.bat_step),
            ("sc_min", g.sc_range.0),
            ("sc_max", g.sc_range.1),
            ("sc_step", g.sc_step),
        ] {
            lines.push((format!("grid.{k}"), x.to_string()));
        }
        lines.push(("grid.controls".into(), g.n_controls.to_string()));
        if let Some(p) = g.power_limit {
            lines.push(("grid.power_limit_w".into(), p.to_string()));
        }
        lines.push(("predict.tree.max_depth".into(), self.tree.max_depth.to_string()));
        lines.push(("predict.tree.min_leaf".into(), self.tree.min_leaf.to_string()));
        lines.push((
            "predict.tree.min_impurity_decrease".into(),
            self.tree.min_impurity_decrease.to_string(),
        ));
        lines.push(("predict.gbdt.n_trees".into(), self.gbdt.n_trees.to_string()));
        lines.push(("predict.gbdt.learning_rate".into(), self.gbdt.learning_rate.to_string()));
        lines.push(("predict.gbdt.max_depth".into(), self.gbdt.tree.max_depth.to_string()));
        lines.push(("predict.gbdt.min_leaf".into(), self.gbdt.tree.min_leaf.to_string()));
        lines.push(("predict.nn.hidden1".into(), self.nn.hidden.0.to_string()));
        lines.push(("predict.nn.hidden2".into(), self.nn.hidden.1.to_string()));
        lines.push(("predict.nn.epochs".into(), self.nn.epochs.to_string()));
        lines.push(("predict.nn.learning_rate".into(), self.nn.learning_rate.to_string()));
        lines.push(("predict.weather_classes".into(), self.nn.weather_classes.to_string()));
        let e = &self.ems;
        lines.push(("ems.strategy".into(), e.strategy.name().into()));
        lines.push(("ems.horizon_s".into(), e.horizon.to_string()));
        lines.push(("ems.replan_period_s".into(), e.replan_period.to_string()));
        lines.push(("ems.apply_fraction".into(), e.apply_fraction.to_string()));
        lines.push(("ems.sc_buffer".into(), e.sc_buffer.to_string()));
        lines.push(("ems.rule_load_factor".into(), e.rule_load_factor.to_string()));
        if let Some(q) = e.planner_q_loss {
            lines.push(("ems.planner_q_loss".into(), q.to_string()));
        }
        let sc = &self.scenario;
        for (k, p) in [
            ("cycle_file", &sc.cycle_file),
            ("passengers_file", &sc.passengers_file),
            ("weather_file", &sc.weather_file),
        ] {
            if let Some(p) = opt(p) {
                lines.push((format!("scenario.{k}"), p));
            }
        }
        lines.push(("scenario.cycle_duration_s".into(), sc.cycle_duration_s.to_string()));
        lines.push(("scenario.max_speed".into(), sc.max_speed.to_string()));
        for (k, d) in [
            ("data_start", sc.data_start),
            ("data_end", sc.data_end),
            ("test_start", sc.test_start),
            ("eval_date", sc.eval_date),
        ] {
            lines.push((format!("scenario.{k}"), d.format("%Y-%m-%d").to_string()));
        }
        lines.push(("scenario.peak_hour".into(), sc.peak_hour.to_string()));
        lines.push(("scenario.offpeak_hour".into(), sc.offpeak_hour.to_string()));
        lines.push(("scenario.predictor".into(), sc.predictor.clone()));
        lines.push(("scenario.init_soc_bat".into(), sc.init_soc_bat.to_string()));
        lines.push(("scenario.init_soc_sc".into(), sc.init_soc_sc.to_string()));
        lines.push(("scenario.init_soh".into(), sc.init_soh.to_string()));
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
