//! Battery and supercapacitor models: SOC dynamics, terminal power to
//! current inversion, resistive losses and the semi-empirical capacity-fade
//! law.
//!
//! Sign convention: positive current and positive power discharge the
//! device.

use crate::error::{EmsError, Result};

/// Capacity loss at end of life. SOH reaches zero here.
pub const END_OF_LIFE_Q_LOSS: f64 = 0.20;

/// Piecewise-linear SOC lookup table for open-circuit voltage and internal
/// resistance. Lookups clamp at the end points.
#[derive(Debug, Clone, PartialEq)]
pub struct SocTable {
    soc: Vec<f64>,
    ocv: Vec<f64>,
    resistance: Vec<f64>,
}

impl SocTable {
    pub fn new(soc: Vec<f64>, ocv: Vec<f64>, resistance: Vec<f64>) -> Result<Self> {
        if soc.len() < 2 || soc.len() != ocv.len() || soc.len() != resistance.len() {
            return Err(EmsError::domain("SOC table needs >= 2 rows of equal length"));
        }
        for w in soc.windows(2) {
            if !(w[1] > w[0]) {
                return Err(EmsError::domain("SOC table: soc must be strictly increasing"));
            }
        }
        if soc[0] < 0.0 || soc[soc.len() - 1] > 1.0 {
            return Err(EmsError::domain("SOC table: soc must lie in [0, 1]"));
        }
        for w in ocv.windows(2) {
            if !(w[1] > w[0]) {
                return Err(EmsError::domain("SOC table: ocv must be strictly increasing in soc"));
            }
        }
        if resistance.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(EmsError::domain("SOC table: resistance must be positive"));
        }
        Ok(Self { soc, ocv, resistance })
    }

    /// Affine OCV between two end points with constant resistance.
    pub fn affine(ocv_empty: f64, ocv_full: f64, resistance: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![ocv_empty, ocv_full], vec![resistance, resistance])
    }

    pub fn soc(&self) -> &[f64] {
        &self.soc
    }

    pub fn ocv_values(&self) -> &[f64] {
        &self.ocv
    }

    pub fn resistance_values(&self) -> &[f64] {
        &self.resistance
    }

    fn lookup(&self, ys: &[f64], x: f64) -> f64 {
        let xs = &self.soc;
        let n = xs.len();
        if x <= xs[0] {
            return ys[0];
        }
        if x >= xs[n - 1] {
            return ys[n - 1];
        }
        let hi = xs.partition_point(|&v| v <= x).min(n - 1);
        let lo = hi - 1;
        let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
        ys[lo] + t * (ys[hi] - ys[lo])
    }

    pub fn ocv(&self, soc: f64) -> f64 {
        self.lookup(&self.ocv, soc)
    }

    pub fn resistance(&self, soc: f64) -> f64 {
        self.lookup(&self.resistance, soc)
    }
}

/// Cell and pack description of the lithium-ion battery.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryParams {
    /// Nominal cell capacity (Ah).
    pub capacity_cell: f64,
    /// Nominal stored energy per cell (kWh).
    pub stored_energy_cell: f64,
    pub soc_window: (f64, f64),
    pub curve: SocTable,
    pub series_count: u32,
    pub parallel_count: u32,
    /// Cell current bounds (A), `(min, max)`.
    pub current_bounds_cell: (f64, f64),
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity_cell: 60.0,
            stored_energy_cell: 0.192,
            soc_window: (0.10, 0.90),
            curve: SocTable::affine(3.0, 3.4, 1.5e-3).expect("valid default curve"),
            series_count: 217,
            parallel_count: 7,
            current_bounds_cell: (-180.0, 180.0),
        }
    }
}

impl BatteryParams {
    pub fn cell_count(&self) -> f64 {
        f64::from(self.series_count) * f64::from(self.parallel_count)
    }

    /// Pack capacity (Ah): parallel strings add capacity.
    pub fn pack_capacity_ah(&self) -> f64 {
        self.capacity_cell * f64::from(self.parallel_count)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_cell > 0.0) {
            return Err(EmsError::config("battery.capacity_ah", "must be positive"));
        }
        if !(self.stored_energy_cell > 0.0) {
            return Err(EmsError::config("battery.stored_energy_kwh", "must be positive"));
        }
        check_window("battery.soc_min/soc_max", self.soc_window)?;
        if self.series_count == 0 || self.parallel_count == 0 {
            return Err(EmsError::config("battery.series/parallel", "counts must be >= 1"));
        }
        check_bounds("battery.current_min/current_max", self.current_bounds_cell)
    }
}

/// Cell and pack description of the supercapacitor.
#[derive(Debug, Clone, PartialEq)]
pub struct SupercapParams {
    pub max_voltage_cell: f64,
    /// Cell capacitance (F).
    pub capacitance_cell: f64,
    pub stored_energy_cell: f64,
    pub soc_window: (f64, f64),
    /// Cell resistance (Ω).
    pub resistance_cell: f64,
    pub series_count: u32,
    pub parallel_count: u32,
    pub current_bounds_cell: (f64, f64),
}

impl Default for SupercapParams {
    fn default() -> Self {
        Self {
            max_voltage_cell: 27.0,
            capacitance_cell: 140.0,
            stored_energy_cell: 0.0142,
            soc_window: (0.50, 1.00),
            resistance_cell: 15e-3,
            series_count: 20,
            parallel_count: 6,
            current_bounds_cell: (-150.0, 150.0),
        }
    }
}

impl SupercapParams {
    pub fn cell_count(&self) -> f64 {
        f64::from(self.series_count) * f64::from(self.parallel_count)
    }

    /// Largest pack power magnitude the current bounds allow at full
    /// voltage (W).
    pub fn pack_power_limit(&self) -> f64 {
        let i = self.current_bounds_cell.0.abs().max(self.current_bounds_cell.1.abs());
        let cell = self.max_voltage_cell * i - i * i * self.resistance_cell;
        cell.max(0.0) * self.cell_count()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_voltage_cell > 0.0) {
            return Err(EmsError::config("supercap.max_voltage_v", "must be positive"));
        }
        if !(self.capacitance_cell > 0.0) {
            return Err(EmsError::config("supercap.capacitance_f", "must be positive"));
        }
        if !(self.resistance_cell > 0.0) {
            return Err(EmsError::config("supercap.resistance_ohm", "must be positive"));
        }
        check_window("supercap.soc_min/soc_max", self.soc_window)?;
        if self.series_count == 0 || self.parallel_count == 0 {
            return Err(EmsError::config("supercap.series/parallel", "counts must be >= 1"));
        }
        check_bounds("supercap.current_min/current_max", self.current_bounds_cell)
    }
}

fn check_window(key: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(EmsError::config(
            key,
            format!("SOC window must satisfy 0 <= min < max <= 1, got [{lo}, {hi}]"),
        ));
    }
    Ok(())
}

fn check_bounds(key: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo < 0.0 && hi > 0.0) {
        return Err(EmsError::config(
            key,
            format!("current bounds must straddle zero, got [{lo}, {hi}]"),
        ));
    }
    Ok(())
}

/// Parameters of the Ah-throughput capacity-fade law.
#[derive(Debug, Clone, PartialEq)]
pub struct AgingParams {
    pub prefactor: f64,
    /// Activation energy at zero C-rate (J/mol).
    pub activation_base: f64,
    /// Activation-energy reduction per unit C-rate (J/mol).
    pub crate_coeff: f64,
    pub gas_constant: f64,
    pub power_exponent_z: f64,
    /// Battery temperature (K).
    pub temperature: f64,
}

impl Default for AgingParams {
    fn default() -> Self {
        Self {
            prefactor: 0.0032,
            activation_base: 15162.0,
            crate_coeff: 1516.0,
            gas_constant: 8.3145,
            power_exponent_z: 0.824,
            temperature: 298.15,
        }
    }
}

impl AgingParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("aging.prefactor", self.prefactor),
            ("aging.activation_base", self.activation_base),
            ("aging.crate_coeff", self.crate_coeff),
            ("aging.gas_constant", self.gas_constant),
            ("aging.temperature_k", self.temperature),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EmsError::config(key, "must be positive"));
            }
        }
        if !(self.power_exponent_z > 0.0 && self.power_exponent_z < 1.0) {
            return Err(EmsError::config("aging.z", "exponent must lie in (0, 1)"));
        }
        Ok(())
    }

    /// `M * exp(-(Ea - b * C) / (R * T))`.
    fn rate_factor(&self, c_rate: f64) -> f64 {
        let ea = self.activation_base - self.crate_coeff * c_rate;
        self.prefactor * (-ea / (self.gas_constant * self.temperature)).exp()
    }
}

/// Storage state tracked by the optimizer and the plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessState {
    pub soc_bat: f64,
    pub soc_sc: f64,
    /// Capacity loss as a fraction of nominal capacity.
    pub q_loss: f64,
    /// Cumulative cell-level Ah throughput.
    pub ah_throughput: f64,
}

impl HessState {
    pub fn new(soc_bat: f64, soc_sc: f64) -> Self {
        Self {
            soc_bat,
            soc_sc,
            q_loss: 0.0,
            ah_throughput: 0.0,
        }
    }

    pub fn with_q_loss(mut self, q_loss: f64) -> Self {
        self.q_loss = q_loss;
        self
    }
}

fn check_soc(soc: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&soc) {
        return Err(EmsError::domain(format!("SOC must lie in [0, 1], got {soc}")));
    }
    Ok(())
}

/// Cell open-circuit voltage from the configured curve.
pub fn battery_ocv(params: &BatteryParams, soc: f64) -> Result<f64> {
    check_soc(soc)?;
    Ok(params.curve.ocv(soc))
}

/// Cell internal resistance from the configured curve.
pub fn battery_resistance(params: &BatteryParams, soc: f64) -> Result<f64> {
    check_soc(soc)?;
    Ok(params.curve.resistance(soc))
}

/// Cell open-circuit voltage of the supercapacitor, linear in SOC.
pub fn supercap_ocv(params: &SupercapParams, soc: f64) -> Result<f64> {
    check_soc(soc)?;
    Ok(soc * params.max_voltage_cell)
}

/// Solves `P = OCV * I - R * I^2` for the smaller-magnitude root.
///
/// Uses the rationalised form `2P / (OCV + sqrt(OCV^2 - 4RP))`, which is
/// algebraically the same root but has no cancellation at small power.
pub fn current_for_terminal_power(ocv: f64, resistance: f64, power: f64) -> Result<f64> {
    if !(resistance > 0.0) {
        return Err(EmsError::domain(format!(
            "resistance must be positive, got {resistance}"
        )));
    }
    if power == 0.0 {
        return Ok(0.0);
    }
    let disc = ocv * ocv - 4.0 * resistance * power;
    if disc < 0.0 || !disc.is_finite() {
        return Err(EmsError::InfeasiblePower {
            power,
            max: ocv * ocv / (4.0 * resistance),
        });
    }
    let denom = ocv + disc.sqrt();
    if !(denom > 0.0) {
        return Err(EmsError::InfeasiblePower {
            power,
            max: ocv * ocv / (4.0 * resistance),
        });
    }
    Ok(2.0 * power / denom)
}

/// Coulomb counting for the battery; also accumulates Ah throughput.
pub fn step_battery(state: HessState, params: &BatteryParams, current_cell: f64, dt: f64) -> HessState {
    HessState {
        soc_bat: state.soc_bat - current_cell * dt / (3600.0 * params.capacity_cell),
        ah_throughput: state.ah_throughput + current_cell.abs() * dt / 3600.0,
        ..state
    }
}

/// Charge balance for the supercapacitor.
pub fn step_supercap(state: HessState, params: &SupercapParams, current_cell: f64, dt: f64) -> HessState {
    HessState {
        soc_sc: state.soc_sc - current_cell * dt / (params.capacitance_cell * params.max_voltage_cell),
        ..state
    }
}

/// Joule loss over one step (J) for one battery string and one
/// supercapacitor string. Callers multiply by the number of parallel
/// strings.
pub fn electric_loss_energy(i_bat_string: f64, r_bat_series: f64, i_sc_string: f64, r_sc_series: f64, dt: f64) -> f64 {
    (i_bat_string * i_bat_string * r_bat_series + i_sc_string * i_sc_string * r_sc_series) * dt
}

/// Capacity loss after `ah_throughput` Ah at a constant C-rate.
pub fn closed_form_q_loss(ah_throughput: f64, c_rate: f64, params: &AgingParams) -> f64 {
    if ah_throughput <= 0.0 {
        return 0.0;
    }
    params.rate_factor(c_rate) * ah_throughput.powf(params.power_exponent_z)
}

/// Incremental capacity loss over one step at the current damage state.
///
/// This is the derivative of the closed-form law re-expressed in terms of
/// the accumulated loss, so it decreases as the battery ages. At zero
/// accumulated loss the derivative is unbounded; the step is then seeded
/// with the closed form over its own throughput.
pub fn delta_q_loss(q_loss: f64, current_cell: f64, params: &AgingParams, capacity: f64, dt: f64) -> f64 {
    if current_cell == 0.0 {
        return 0.0;
    }
    let c_rate = current_cell.abs() / capacity;
    let dah = current_cell.abs() * dt / 3600.0;
    if q_loss <= 0.0 {
        return closed_form_q_loss(dah, c_rate, params);
    }
    // rate^(1/z) * q^((z-1)/z), evaluated in log space with one exp.
    let z = params.power_exponent_z;
    let ln_rate = params.prefactor.ln()
        - (params.activation_base - params.crate_coeff * c_rate) / (params.gas_constant * params.temperature);
    ((ln_rate + (z - 1.0) * q_loss.ln()) / z).exp() * z * dah
}

/// State of health: 1 for a new battery, 0 at end of life.
pub fn soh_from_q_loss(q_loss: f64) -> f64 {
    (1.0 - q_loss / END_OF_LIFE_Q_LOSS).max(0.0)
}

/// Inverse of [`soh_from_q_loss`] on `[0, 1]`.
pub fn q_loss_from_soh(soh: f64) -> f64 {
    (1.0 - soh.clamp(0.0, 1.0)) * END_OF_LIFE_Q_LOSS
}
