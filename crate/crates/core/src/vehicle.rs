//! Longitudinal vehicle dynamics: drive cycles to power demand at the
//! storage bus bar.

use crate::error::{EmsError, Result};

/// Bus body and driveline parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleParams {
    /// Empty vehicle mass (kg).
    pub empty_mass: f64,
    /// Average mass of one passenger (kg).
    pub person_mass: f64,
    /// Rated passenger capacity.
    pub max_passengers: f64,
    pub gravity: f64,
    /// Frontal area (m²).
    pub frontal_area: f64,
    pub rolling_coeff: f64,
    pub drag_coeff: f64,
    /// Air density (kg/m³).
    pub air_density: f64,
    pub eta_transmission: f64,
    pub eta_machine: f64,
    pub eta_regen: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            empty_mass: 13500.0,
            person_mass: 70.0,
            max_passengers: 145.0,
            gravity: 9.8,
            frontal_area: 7.5,
            rolling_coeff: 0.018,
            drag_coeff: 0.7,
            air_density: 1.29,
            eta_transmission: 0.90,
            eta_machine: 0.85,
            eta_regen: 0.65,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("vehicle.empty_mass", self.empty_mass),
            ("vehicle.person_mass", self.person_mass),
            ("vehicle.max_passengers", self.max_passengers),
            ("vehicle.gravity", self.gravity),
            ("vehicle.frontal_area", self.frontal_area),
            ("vehicle.rolling_coeff", self.rolling_coeff),
            ("vehicle.drag_coeff", self.drag_coeff),
            ("vehicle.air_density", self.air_density),
        ];
        for (key, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(EmsError::config(key, format!("must be positive, got {v}")));
            }
        }
        let efficiencies = [
            ("vehicle.eta_transmission", self.eta_transmission),
            ("vehicle.eta_machine", self.eta_machine),
            ("vehicle.eta_regen", self.eta_regen),
        ];
        for (key, v) in efficiencies {
            if !(v > 0.0 && v <= 1.0) {
                return Err(EmsError::config(key, format!("efficiency must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// One drive-cycle sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSample {
    pub time: f64,
    pub speed: f64,
    pub grade: f64,
}

/// A speed/grade trace sampled at a fixed period.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveCycle {
    id: String,
    samples: Vec<CycleSample>,
    sample_period: f64,
}

impl DriveCycle {
    /// Builds a cycle, checking non-negative speeds and a fixed, strictly
    /// increasing time base.
    pub fn new(id: impl Into<String>, samples: Vec<CycleSample>, sample_period: f64) -> Result<Self> {
        if !(sample_period.is_finite() && sample_period > 0.0) {
            return Err(EmsError::domain(format!(
                "sample period must be positive, got {sample_period}"
            )));
        }
        for (k, s) in samples.iter().enumerate() {
            if !(s.speed.is_finite() && s.speed >= 0.0) {
                return Err(EmsError::domain(format!(
                    "sample {k}: speed must be >= 0, got {}",
                    s.speed
                )));
            }
            if !s.grade.is_finite() {
                return Err(EmsError::domain(format!("sample {k}: grade is not finite")));
            }
            if k > 0 {
                let dt = s.time - samples[k - 1].time;
                if !(dt > 0.0) || (dt - sample_period).abs() > 1e-6 * sample_period.max(1.0) {
                    return Err(EmsError::domain(format!(
                        "sample {k}: time step {dt} s does not match period {sample_period} s"
                    )));
                }
            }
        }
        Ok(Self {
            id: id.into(),
            samples,
            sample_period,
        })
    }

    /// Convenience constructor for a flat cycle starting at t = 0.
    pub fn from_speeds(id: impl Into<String>, speeds: &[f64], sample_period: f64) -> Result<Self> {
        let samples = speeds
            .iter()
            .enumerate()
            .map(|(k, &v)| CycleSample {
                time: k as f64 * sample_period,
                speed: v,
                grade: 0.0,
            })
            .collect();
        Self::new(id, samples, sample_period)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &[CycleSample] {
        &self.samples
    }

    pub fn sample_period(&self) -> f64 {
        self.sample_period
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn max_speed(&self) -> f64 {
        self.samples.iter().map(|s| s.speed).fold(0.0, f64::max)
    }
}

/// Power demand at the storage bus bar, one value per cycle sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    pub demands: Vec<f64>,
    pub load_factor: f64,
    pub source_cycle_id: String,
    pub sample_period: f64,
}

impl PowerProfile {
    pub fn new(demands: Vec<f64>, load_factor: f64, source_cycle_id: impl Into<String>, sample_period: f64) -> Self {
        Self {
            demands,
            load_factor,
            source_cycle_id: source_cycle_id.into(),
            sample_period,
        }
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    /// A stable identifier combining the cycle id and the load factor.
    pub fn id(&self) -> String {
        format!("{}@{:.4}", self.source_cycle_id, self.load_factor)
    }
}

fn check_load(load_factor: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&load_factor) {
        return Err(EmsError::domain(format!(
            "load factor must lie in [0, 1], got {load_factor}"
        )));
    }
    Ok(())
}

/// Empty mass plus the passenger mass at the given load factor.
pub fn effective_mass(params: &VehicleParams, load_factor: f64) -> Result<f64> {
    check_load(load_factor)?;
    Ok(params.empty_mass + params.person_mass * params.max_passengers * load_factor)
}

/// Road-load power at the wheels (W): rolling, aerodynamic, inertial and
/// grade terms.
pub fn wheel_power(params: &VehicleParams, mass: f64, speed: f64, accel: f64, grade: f64) -> f64 {
    let rolling = mass * params.gravity * params.rolling_coeff * speed * grade.cos();
    let aero = 0.5 * params.drag_coeff * params.frontal_area * params.air_density * speed.powi(3);
    let inertial = mass * speed * accel;
    let climbing = mass * params.gravity * speed * grade.sin();
    rolling + aero + inertial + climbing
}

/// Power the storage system must deliver (positive) or may absorb
/// (negative) for one operating point.
///
/// Traction divides the wheel power by the driveline efficiencies; braking
/// recovers only the regenerative fraction.
pub fn power_demand(params: &VehicleParams, speed: f64, accel: f64, grade: f64, load_factor: f64) -> Result<f64> {
    if !(speed >= 0.0) {
        return Err(EmsError::domain(format!("speed must be >= 0, got {speed}")));
    }
    let mass = effective_mass(params, load_factor)?;
    Ok(bus_power(params, wheel_power(params, mass, speed, accel, grade)))
}

fn bus_power(params: &VehicleParams, wheel: f64) -> f64 {
    if wheel > 0.0 {
        wheel / (params.eta_transmission * params.eta_machine)
    } else {
        wheel * params.eta_regen
    }
}

/// Converts a drive cycle into a demand profile. Acceleration is the
/// backward difference over the sample period; the first sample uses zero.
pub fn cycle_to_profile(cycle: &DriveCycle, params: &VehicleParams, load_factor: f64) -> Result<PowerProfile> {
    if cycle.is_empty() {
        return Err(EmsError::domain("drive cycle is empty"));
    }
    let mass = effective_mass(params, load_factor)?;
    let dt = cycle.sample_period();
    let samples = cycle.samples();
    let demands = samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let accel = if k == 0 {
                0.0
            } else {
                (s.speed - samples[k - 1].speed) / dt
            };
            bus_power(params, wheel_power(params, mass, s.speed, accel, s.grade))
        })
        .collect();
    Ok(PowerProfile::new(demands, load_factor, cycle.id(), dt))
}
