//! Backward dynamic programming over the (battery SOC, supercapacitor SOC)
//! grid, with softened window constraints, a forward rollout and an
//! exhaustive oracle for tiny instances.

mod oracle;
mod solve;
mod stage;

pub use oracle::{exhaustive_oracle, OracleResult, ORACLE_SEQUENCE_LIMIT};
pub use solve::{rollout, simulate_schedule, solve_backward, DpSolution, NO_CONTROL};
pub use stage::{quantize_power, stage_cost, stage_cost_with_aging, StageCost, StageOutcome};

use crate::error::{EmsError, Result};
use crate::hess::{AgingParams, BatteryParams, SupercapParams};

/// Prices, slack weights and constraint windows of the DP objective.
#[derive(Debug, Clone, PartialEq)]
pub struct CostParams {
    /// Price of battery capacity loss (USD per pack Ah).
    pub price_capacity_loss: f64,
    /// Electricity price (USD/kWh).
    pub price_electricity: f64,
    /// USD per unit SOC violation per step.
    pub slack_weight_bat: f64,
    pub slack_weight_sc: f64,
    /// Step length (s).
    pub sample_period: f64,
    pub bat_window: (f64, f64),
    pub sc_window: (f64, f64),
    /// Smallest accumulated capacity loss used when the aging state is
    /// frozen for a solve. The incremental fade law is unbounded at zero.
    pub min_frozen_q_loss: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            price_capacity_loss: 694.4,
            price_electricity: 0.1685,
            slack_weight_bat: 1e4,
            slack_weight_sc: 1e4,
            sample_period: 1.0,
            bat_window: (0.10, 0.90),
            sc_window: (0.50, 0.99),
            min_frozen_q_loss: 1e-4,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.price_capacity_loss >= 0.0) {
            return Err(EmsError::config("cost.price_capacity_loss", "must be >= 0"));
        }
        if !(self.price_electricity >= 0.0) {
            return Err(EmsError::config("cost.price_electricity", "must be >= 0"));
        }
        if !(self.slack_weight_bat > 0.0) {
            return Err(EmsError::config("cost.slack_weight_bat", "must be positive"));
        }
        if !(self.slack_weight_sc > 0.0) {
            return Err(EmsError::config("cost.slack_weight_sc", "must be positive"));
        }
        if !(self.sample_period > 0.0) {
            return Err(EmsError::config("cost.sample_period_s", "must be positive"));
        }
        for (key, (lo, hi)) in [("cost.bat_window", self.bat_window), ("cost.sc_window", self.sc_window)] {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
                return Err(EmsError::config(
                    key,
                    format!("window must satisfy 0 <= min < max <= 1, got [{lo}, {hi}]"),
                ));
            }
        }
        if !(self.min_frozen_q_loss > 0.0) {
            return Err(EmsError::config("cost.min_frozen_q_loss", "must be positive"));
        }
        Ok(())
    }

    /// Aging state used for a frozen solve starting from `q_loss`.
    pub fn frozen_q_loss(&self, q_loss: f64) -> f64 {
        q_loss.max(self.min_frozen_q_loss)
    }
}

/// Battery, supercapacitor and fade-law parameters together.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StorageModel {
    pub battery: BatteryParams,
    pub supercap: SupercapParams,
    pub aging: AgingParams,
}

/// Discretisation of the state and control spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    soc_bat: Vec<f64>,
    soc_sc: Vec<f64>,
    controls: Vec<f64>,
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.len() < 2 {
        return Err(EmsError::config(name, "axis needs at least 2 points"));
    }
    if axis.iter().any(|v| !v.is_finite()) || axis.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(EmsError::config(name, "axis must be finite and strictly ascending"));
    }
    Ok(())
}

/// `n` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Points from `lo` to `hi` with spacing as close to `step` as the span
/// allows; both end points are included.
pub fn stepped_axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round().max(1.0) as usize + 1;
    linspace(lo, hi, n)
}

impl Grid {
    /// Builds a grid; control values are quantised to the power-split
    /// resolution.
    pub fn new(soc_bat: Vec<f64>, soc_sc: Vec<f64>, controls: Vec<f64>) -> Result<Self> {
        let controls: Vec<f64> = controls.into_iter().map(quantize_power).collect();
        check_axis("grid.soc_bat", &soc_bat)?;
        check_axis("grid.soc_sc", &soc_sc)?;
        check_axis("grid.controls", &controls)?;
        if controls.len() > usize::from(u16::MAX) {
            return Err(EmsError::config("grid.controls", "too many control levels"));
        }
        Ok(Self {
            soc_bat,
            soc_sc,
            controls,
        })
    }

    /// Uniform grid: battery axis with `bat_step` over `bat_range`,
    /// supercapacitor axis with `sc_step` over `sc_range`, and
    /// `n_controls` levels symmetric about zero up to `power_limit`.
    pub fn uniform(
        bat_range: (f64, f64),
        bat_step: f64,
        sc_range: (f64, f64),
        sc_step: f64,
        n_controls: usize,
        power_limit: f64,
    ) -> Result<Self> {
        if !(bat_step > 0.0 && sc_step > 0.0) {
            return Err(EmsError::config("grid.step", "steps must be positive"));
        }
        Self::new(
            stepped_axis(bat_range.0, bat_range.1, bat_step),
            stepped_axis(sc_range.0, sc_range.1, sc_step),
            linspace(-power_limit, power_limit, n_controls),
        )
    }

    pub fn soc_bat(&self) -> &[f64] {
        &self.soc_bat
    }

    pub fn soc_sc(&self) -> &[f64] {
        &self.soc_sc
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    /// Control indices ordered by |p_sc|, negative first on equal
    /// magnitude. Scanning in this order with a strict `<` breaks ties
    /// toward the smallest supercapacitor power.
    pub(crate) fn control_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.controls.len()).collect();
        idx.sort_by(|&a, &b| {
            let (pa, pb) = (self.controls[a], self.controls[b]);
            pa.abs().total_cmp(&pb.abs()).then(pa.total_cmp(&pb))
        });
        idx
    }
}

/// Position of `x` on `axis` as a lower index and the weight of the upper
/// neighbour; values beyond the ends clamp to the boundary node.
#[inline]
pub(crate) fn locate(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    if !(x > axis[0]) {
        return (0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let hi = axis.partition_point(|&v| v <= x);
    let lo = hi - 1;
    (lo, (x - axis[lo]) / (axis[lo + 1] - axis[lo]))
}

/// Bilinear interpolation on a row-major `nb x ns` table. A corner with
/// zero weight is ignored so that infinite neighbours do not leak in.
#[inline]
pub(crate) fn bilinear(table: &[f64], ns: usize, ib: usize, wb: f64, is: usize, ws: f64) -> f64 {
    let base = ib * ns + is;
    let mut acc = 0.0;
    let corners = [
        ((1.0 - wb) * (1.0 - ws), base),
        ((1.0 - wb) * ws, base + 1),
        (wb * (1.0 - ws), base + ns),
        (wb * ws, base + ns + 1),
    ];
    for (w, i) in corners {
        if w != 0.0 {
            acc += w * table[i];
        }
    }
    acc
}

/// Cost components of a trajectory (USD).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostBreakdown {
    pub aging_cost: f64,
    pub electric_cost: f64,
    pub penalty_cost: f64,
    pub total: f64,
}

impl CostBreakdown {
    pub fn from_parts(aging_cost: f64, electric_cost: f64, penalty_cost: f64) -> Self {
        Self {
            aging_cost,
            electric_cost,
            penalty_cost,
            total: aging_cost + electric_cost + penalty_cost,
        }
    }
}

/// One simulated step. SOC values are taken at the start of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub time: f64,
    pub p_demand: f64,
    pub p_bat: f64,
    pub p_sc: f64,
    /// Battery pack current (A).
    pub i_bat: f64,
    /// Supercapacitor pack current (A).
    pub i_sc: f64,
    pub soc_bat: f64,
    pub soc_sc: f64,
    pub dq_loss: f64,
    pub de_loss: f64,
    pub step_cost: f64,
}

/// A simulated run with its accumulated cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<StepRecord>,
    pub totals: CostBreakdown,
    pub final_state: crate::hess::HessState,
}

impl Trajectory {
    /// Accumulates records into a trajectory, summing each cost component.
    pub(crate) fn from_steps(
        steps: Vec<StepRecord>,
        parts: Vec<StageCost>,
        final_state: crate::hess::HessState,
    ) -> Self {
        let (mut a, mut e, mut p) = (0.0, 0.0, 0.0);
        for c in &parts {
            a += c.aging;
            e += c.electric;
            p += c.penalty;
        }
        Self {
            steps,
            totals: CostBreakdown::from_parts(a, e, p),
            final_state,
        }
    }

    pub fn sc_powers(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.p_sc).collect()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_dimensions() {
        let sc = SupercapParams::default();
        let g = Grid::uniform((0.08, 0.92), 0.005, (0.45, 1.0), 0.01, 101, sc.pack_power_limit()).unwrap();
        assert_eq!(g.soc_bat().len(), 169);
        assert_eq!(g.soc_sc().len(), 56);
        assert_eq!(g.controls().len(), 101);
        assert_eq!(g.controls()[50], 0.0);
    }

    #[test]
    fn grid_rejects_degenerate_axes() {
        assert!(Grid::new(vec![0.5], vec![0.5, 0.6], vec![-1.0, 1.0]).is_err());
        assert!(Grid::new(vec![0.5, 0.4], vec![0.5, 0.6], vec![-1.0, 1.0]).is_err());
    }

    #[test]
    fn control_order_prefers_small_magnitude() {
        let g = Grid::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(g.control_order(), vec![2, 1, 3, 0, 4]);
    }

    #[test]
    fn locate_clamps_and_interpolates() {
        let axis = [0.0, 1.0, 3.0];
        assert_eq!(locate(&axis, -1.0), (0, 0.0));
        assert_eq!(locate(&axis, 0.0), (0, 0.0));
        assert_eq!(locate(&axis, 2.0), (1, 0.5));
        assert_eq!(locate(&axis, 3.0), (1, 1.0));
        assert_eq!(locate(&axis, 7.0), (1, 1.0));
    }

    #[test]
    fn bilinear_skips_zero_weight_infinities() {
        let t = [1.0, f64::INFINITY, 3.0, f64::INFINITY];
        assert_eq!(bilinear(&t, 2, 0, 0.5, 0, 0.0), 2.0);
        assert!(bilinear(&t, 2, 0, 0.5, 0, 0.5).is_infinite());
    }
}
