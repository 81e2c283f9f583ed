use super::{CostParams, StorageModel};
use crate::hess::{
    current_for_terminal_power, delta_q_loss, electric_loss_energy, step_battery, step_supercap, HessState,
};

/// Power quantum (W). Demands and supercapacitor powers are rounded to
/// multiples of 2^-16 W so that `p_bat = p_demand - p_sc` and
/// `p_bat + p_sc` are both exact in f64.
const POWER_QUANTUM_INV: f64 = 65536.0;

#[inline]
pub fn quantize_power(w: f64) -> f64 {
    (w * POWER_QUANTUM_INV).round() / POWER_QUANTUM_INV
}

/// Cost of one step, split by component (USD).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageCost {
    pub aging: f64,
    pub electric: f64,
    pub penalty: f64,
    pub total: f64,
}

/// Everything a feasible step produces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageOutcome {
    pub cost: StageCost,
    pub next: HessState,
    pub p_demand: f64,
    pub p_bat: f64,
    pub p_sc: f64,
    /// Pack currents (A).
    pub i_bat: f64,
    pub i_sc: f64,
    pub dq_loss: f64,
    /// Joule loss of both packs over the step (J).
    pub de_loss: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BatterySide {
    pub i_cell: f64,
    pub next_soc: f64,
    pub dq: f64,
    pub aging_usd: f64,
    pub loss_j: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ScSide {
    pub i_cell: f64,
    pub next_soc: f64,
    pub loss_j: f64,
    pub penalty: f64,
}

#[inline]
fn violation(soc: f64, (lo, hi): (f64, f64)) -> f64 {
    (lo - soc).max(0.0) + (soc - hi).max(0.0)
}

/// Battery half of a step at pack power `p_bat`; `None` when the power or
/// the cell current bounds are infeasible.
pub(crate) fn battery_side(
    model: &StorageModel,
    cost: &CostParams,
    soc: f64,
    p_bat: f64,
    q_aging: f64,
) -> Option<BatterySide> {
    let b = &model.battery;
    let dt = cost.sample_period;
    let ocv = b.curve.ocv(soc);
    let r = b.curve.resistance(soc);
    let i = current_for_terminal_power(ocv, r, p_bat / b.cell_count()).ok()?;
    if i < b.current_bounds_cell.0 || i > b.current_bounds_cell.1 {
        return None;
    }
    let next_soc = soc - i * dt / (3600.0 * b.capacity_cell);
    let dq = delta_q_loss(q_aging, i, &model.aging, b.capacity_cell, dt);
    Some(BatterySide {
        i_cell: i,
        next_soc,
        dq,
        aging_usd: dq * b.pack_capacity_ah() * cost.price_capacity_loss,
        loss_j: f64::from(b.parallel_count) * electric_loss_energy(i, f64::from(b.series_count) * r, 0.0, 0.0, dt),
        penalty: cost.slack_weight_bat * violation(next_soc, cost.bat_window),
    })
}

/// Supercapacitor half of a step at pack power `p_sc`.
pub(crate) fn sc_side(model: &StorageModel, cost: &CostParams, soc: f64, p_sc: f64) -> Option<ScSide> {
    let s = &model.supercap;
    let dt = cost.sample_period;
    let ocv = soc * s.max_voltage_cell;
    let i = current_for_terminal_power(ocv, s.resistance_cell, p_sc / s.cell_count()).ok()?;
    if i < s.current_bounds_cell.0 || i > s.current_bounds_cell.1 {
        return None;
    }
    let next_soc = soc - i * dt / (s.capacitance_cell * s.max_voltage_cell);
    Some(ScSide {
        i_cell: i,
        next_soc,
        loss_j: f64::from(s.parallel_count)
            * electric_loss_energy(0.0, 0.0, i, f64::from(s.series_count) * s.resistance_cell, dt),
        penalty: cost.slack_weight_sc * violation(next_soc, cost.sc_window),
    })
}

#[inline]
pub(crate) fn combine(cost: &CostParams, bat: &BatterySide, sc: &ScSide) -> StageCost {
    let aging = bat.aging_usd;
    let electric = (bat.loss_j + sc.loss_j) * (cost.price_electricity / 3.6e6);
    let penalty = bat.penalty + sc.penalty;
    StageCost {
        aging,
        electric,
        penalty,
        total: aging + electric + penalty,
    }
}

/// Like [`stage_cost`], but prices aging at the damage state `q_aging`
/// instead of `state.q_loss`. The optimizer uses this with a frozen aging
/// state; the next state's `q_loss` advances by the increment priced here.
pub fn stage_cost_with_aging(
    state: &HessState,
    q_aging: f64,
    p_sc: f64,
    p_demand: f64,
    cost: &CostParams,
    model: &StorageModel,
) -> Option<StageOutcome> {
    let p_demand = quantize_power(p_demand);
    let p_sc = quantize_power(p_sc);
    let p_bat = p_demand - p_sc;
    let bat = battery_side(model, cost, state.soc_bat, p_bat, q_aging)?;
    let sc = sc_side(model, cost, state.soc_sc, p_sc)?;
    let stage = combine(cost, &bat, &sc);
    let dt = cost.sample_period;
    let mut next = step_battery(*state, &model.battery, bat.i_cell, dt);
    next = step_supercap(next, &model.supercap, sc.i_cell, dt);
    next.q_loss = state.q_loss + bat.dq;
    Some(StageOutcome {
        cost: stage,
        next,
        p_demand,
        p_bat,
        p_sc,
        i_bat: bat.i_cell * f64::from(model.battery.parallel_count),
        i_sc: sc.i_cell * f64::from(model.supercap.parallel_count),
        dq_loss: bat.dq,
        de_loss: bat.loss_j + sc.loss_j,
    })
}

/// Cost and successor state of applying supercapacitor power `p_sc` with
/// the battery supplying the rest of `p_demand`.
///
/// Returns `None` (the infinite-cost marker) when either pack cannot
/// deliver its share within its current bounds.
pub fn stage_cost(
    state: &HessState,
    p_sc: f64,
    p_demand: f64,
    cost: &CostParams,
    model: &StorageModel,
) -> Option<StageOutcome> {
    stage_cost_with_aging(state, state.q_loss, p_sc, p_demand, cost, model)
}
