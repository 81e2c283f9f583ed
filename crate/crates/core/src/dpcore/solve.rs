use std::io::Write;

use super::stage::{battery_side, sc_side, stage_cost, stage_cost_with_aging, StageCost};
use super::{bilinear, locate, CostParams, Grid, StepRecord, StorageModel, Trajectory};
use crate::error::{EmsError, Result};
use crate::hess::HessState;
use crate::vehicle::PowerProfile;

/// Policy entry for nodes where no control is feasible.
pub const NO_CONTROL: u16 = u16::MAX;

/// Cost-to-go and optimal control tables of one backward solve.
#[derive(Debug, Clone)]
pub struct DpSolution {
    grid: Grid,
    /// `horizon x |soc_bat| x |soc_sc|`, row-major. The terminal stage is
    /// implicitly zero.
    value: Vec<f64>,
    policy: Vec<u16>,
    horizon: usize,
    profile_id: String,
    frozen_q_loss: f64,
    demands: Vec<f64>,
    cost: CostParams,
    model: StorageModel,
}

impl DpSolution {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn profile_id(&self) -> &str {
        &self.profile_id
    }

    pub fn frozen_q_loss(&self) -> f64 {
        self.frozen_q_loss
    }

    fn stage_len(&self) -> usize {
        self.grid.soc_bat().len() * self.grid.soc_sc().len()
    }

    /// Cost-to-go table of `stage` (`stage == horizon` is all zeros).
    pub fn stage_values(&self, stage: usize) -> &[f64] {
        let n = self.stage_len();
        &self.value[stage * n..(stage + 1) * n]
    }

    pub fn value_at(&self, stage: usize, ib: usize, is: usize) -> f64 {
        if stage >= self.horizon {
            return 0.0;
        }
        self.value[stage * self.stage_len() + ib * self.grid.soc_sc().len() + is]
    }

    pub fn policy_at(&self, stage: usize, ib: usize, is: usize) -> u16 {
        self.policy[stage * self.stage_len() + ib * self.grid.soc_sc().len() + is]
    }

    /// Bilinearly interpolated cost-to-go at an arbitrary state.
    pub fn cost_to_go(&self, stage: usize, state: &HessState) -> f64 {
        if stage >= self.horizon {
            return 0.0;
        }
        let (ib, wb) = locate(self.grid.soc_bat(), state.soc_bat);
        let (is, ws) = locate(self.grid.soc_sc(), state.soc_sc);
        bilinear(self.stage_values(stage), self.grid.soc_sc().len(), ib, wb, is, ws)
    }

    /// Writes `stage,soc_bat,soc_sc,value,p_sc` rows for every node.
    pub fn write_debug_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "stage,soc_bat,soc_sc,value_usd,p_sc_w")?;
        for k in 0..self.horizon {
            for (ib, &sb) in self.grid.soc_bat().iter().enumerate() {
                for (is, &ss) in self.grid.soc_sc().iter().enumerate() {
                    let u = self.policy_at(k, ib, is);
                    let p = if u == NO_CONTROL {
                        f64::NAN
                    } else {
                        self.grid.controls()[usize::from(u)]
                    };
                    writeln!(out, "{k},{sb},{ss},{},{p}", self.value_at(k, ib, is))?;
                }
            }
        }
        Ok(())
    }
}

/// One half of a transition: stage-cost share (infinite when
/// infeasible) and the bracketing cell of the next SOC on its axis.
#[derive(Debug, Clone, Copy)]
struct Edge {
    cost: f64,
    w: f64,
    j: u32,
}

/// Finite stand-in for an infinite cost-to-go inside the solve loop.
const UNREACHABLE: f64 = f64::MAX / 4.0;
/// Any interpolant touching an unreachable corner with non-zero weight
/// lands far above this; genuine costs stay far below it.
const UNREACHABLE_THRESHOLD: f64 = 1e250;

const INFEASIBLE: Edge = Edge {
    cost: f64::INFINITY,
    w: 0.0,
    j: 0,
};

fn edge(axis: &[f64], cost: f64, next_soc: f64) -> Edge {
    let (j, w) = locate(axis, next_soc);
    Edge { cost, w, j: j as u32 }
}

/// Supercapacitor edges for every (SOC node, control), independent of the
/// stage.
fn sc_edges(grid: &Grid, model: &StorageModel, cost: &CostParams) -> Vec<Edge> {
    let price = cost.price_electricity / 3.6e6;
    let mut out = Vec::with_capacity(grid.soc_sc().len() * grid.controls().len());
    for &s in grid.soc_sc() {
        for &u in grid.controls() {
            out.push(sc_side(model, cost, s, u).map_or(INFEASIBLE, |x| {
                edge(grid.soc_sc(), x.loss_j * price + x.penalty, x.next_soc)
            }));
        }
    }
    out
}

/// Solves the finite-horizon problem backward from a zero terminal cost.
///
/// The aging state is frozen at `init.q_loss` (floored by
/// `cost.min_frozen_q_loss`) for every stage. Each node minimises stage
/// cost plus bilinearly interpolated cost-to-go over the control axis,
/// breaking ties toward the smallest |p_sc|.
pub fn solve_backward(
    profile: &PowerProfile,
    grid: &Grid,
    init: &HessState,
    cost: &CostParams,
    model: &StorageModel,
) -> Result<DpSolution> {
    if profile.is_empty() {
        return Err(EmsError::domain("power profile is empty"));
    }
    if !init.q_loss.is_finite() || init.q_loss < 0.0 {
        return Err(EmsError::domain(format!(
            "initial q_loss must be finite and >= 0, got {}",
            init.q_loss
        )));
    }
    let horizon = profile.len();
    let (nb, ns, nu) = (grid.soc_bat().len(), grid.soc_sc().len(), grid.controls().len());
    let per_stage = nb * ns;
    let q_frozen = cost.frozen_q_loss(init.q_loss);
    // Controls sorted by |p_sc|; scanning in this order with a strict
    // comparison breaks ties toward the smallest magnitude.
    let order = grid.control_order();
    let controls: Vec<f64> = order.iter().map(|&iu| grid.controls()[iu]).collect();
    let sc = {
        let natural = sc_edges(grid, model, cost);
        let mut sorted = Vec::with_capacity(natural.len());
        for is in 0..ns {
            sorted.extend(order.iter().map(|&iu| natural[is * nu + iu]));
        }
        sorted
    };
    let demands: Vec<f64> = profile.demands.iter().map(|&d| super::quantize_power(d)).collect();
    let price = cost.price_electricity / 3.6e6;

    let mut value: Vec<f64> = vec![0.0; horizon * per_stage];
    let mut policy = vec![NO_CONTROL; horizon * per_stage];
    // Battery edges laid out control-major so the inner loop over battery
    // nodes is contiguous.
    let mut bat = vec![INFEASIBLE; nu * nb];
    // Next-stage values, transposed to `[is][ib]`, with unreachable nodes
    // replaced by a huge finite stand-in so interpolation needs no
    // branches: a zero weight then contributes exactly zero.
    let mut next_t = vec![0.0; per_stage];
    let mut column = vec![0.0; nb];
    let mut best = vec![0.0; nb];
    let mut best_r = vec![usize::MAX; nb];

    for k in (0..horizon).rev() {
        let d = demands[k];
        // Battery edges depend on the stage only through its demand;
        // stops and cruising repeat demands often.
        let reuse = k + 1 < horizon && demands[k + 1].to_bits() == d.to_bits();
        for (r, &u) in controls.iter().enumerate().filter(|_| !reuse) {
            for (ib, &sb) in grid.soc_bat().iter().enumerate() {
                bat[r * nb + ib] = battery_side(model, cost, sb, d - u, q_frozen).map_or(INFEASIBLE, |x| {
                    edge(grid.soc_bat(), x.aging_usd + x.loss_j * price + x.penalty, x.next_soc)
                });
            }
        }
        if k + 1 < horizon {
            let next = &value[(k + 1) * per_stage..(k + 2) * per_stage];
            for ib in 0..nb {
                for is in 0..ns {
                    let v = next[ib * ns + is];
                    next_t[is * nb + ib] = if v.is_finite() { v } else { UNREACHABLE };
                }
            }
        }
        let cur = &mut value[k * per_stage..(k + 1) * per_stage];
        let pol = &mut policy[k * per_stage..(k + 1) * per_stage];
        for is in 0..ns {
            best.fill(f64::INFINITY);
            best_r.fill(usize::MAX);
            for r in 0..nu {
                let s = sc[is * nu + r];
                if !s.cost.is_finite() {
                    continue;
                }
                let js = s.j as usize;
                let (lo, hi) = (&next_t[js * nb..(js + 1) * nb], &next_t[(js + 1) * nb..(js + 2) * nb]);
                for ((c, &v0), &v1) in column.iter_mut().zip(lo).zip(hi) {
                    *c = (1.0 - s.w) * v0 + s.w * v1;
                }
                let edges = &bat[r * nb..(r + 1) * nb];
                for (ib, e) in edges.iter().enumerate() {
                    let jb = e.j as usize;
                    let total = (e.cost + s.cost) + ((1.0 - e.w) * column[jb] + e.w * column[jb + 1]);
                    if total < best[ib] {
                        best[ib] = total;
                        best_r[ib] = r;
                    }
                }
            }
            for ib in 0..nb {
                let reachable = best[ib] < UNREACHABLE_THRESHOLD;
                cur[ib * ns + is] = if reachable { best[ib] } else { f64::INFINITY };
                pol[ib * ns + is] = if reachable {
                    order[best_r[ib]] as u16
                } else {
                    NO_CONTROL
                };
            }
        }
    }

    let solution = DpSolution {
        grid: grid.clone(),
        value,
        policy,
        horizon,
        profile_id: profile.id(),
        frozen_q_loss: q_frozen,
        demands,
        cost: cost.clone(),
        model: model.clone(),
    };
    let v0 = solution.cost_to_go(0, init);
    if !v0.is_finite() {
        return Err(EmsError::InfeasibleProblem(format!(
            "no feasible control sequence from soc_bat={}, soc_sc={}",
            init.soc_bat, init.soc_sc
        )));
    }
    Ok(solution)
}

fn record(k: usize, dt: f64, state: &HessState, out: &super::StageOutcome) -> StepRecord {
    StepRecord {
        time: k as f64 * dt,
        p_demand: out.p_demand,
        p_bat: out.p_bat,
        p_sc: out.p_sc,
        i_bat: out.i_bat,
        i_sc: out.i_sc,
        soc_bat: state.soc_bat,
        soc_sc: state.soc_sc,
        dq_loss: out.dq_loss,
        de_loss: out.de_loss,
        step_cost: out.cost.total,
    }
}

/// Best control at `stage` from an arbitrary state: stage cost at the
/// solve's frozen aging state plus interpolated cost-to-go.
pub(crate) fn greedy_control(
    solution: &DpSolution,
    stage: usize,
    state: &HessState,
    demand: f64,
    order: &[usize],
) -> Option<usize> {
    let mut best = f64::INFINITY;
    let mut best_u = None;
    for &iu in order {
        let u = solution.grid.controls()[iu];
        let Some(out) = stage_cost_with_aging(
            state,
            solution.frozen_q_loss,
            u,
            demand,
            &solution.cost,
            &solution.model,
        ) else {
            continue;
        };
        let total = out.cost.total + solution.cost_to_go(stage + 1, &out.next);
        if total < best {
            best = total;
            best_u = Some(iu);
        }
    }
    best_u
}

/// Simulates the solved policy forward from the actual state.
///
/// Controls are chosen against the solve's frozen aging state; realised
/// costs integrate the capacity loss dynamically from `init.q_loss`.
pub fn rollout(solution: &DpSolution, profile: &PowerProfile, init: &HessState) -> Result<Trajectory> {
    if profile.len() != solution.horizon {
        return Err(EmsError::domain(format!(
            "profile length {} does not match solved horizon {}",
            profile.len(),
            solution.horizon
        )));
    }
    let order = solution.grid.control_order();
    let dt = solution.cost.sample_period;
    let mut state = *init;
    let mut steps = Vec::with_capacity(profile.len());
    let mut parts = Vec::with_capacity(profile.len());
    for (k, &d) in profile.demands.iter().enumerate() {
        let iu = greedy_control(solution, k, &state, d, &order).ok_or_else(|| EmsError::InfeasibleStep {
            step: k,
            reason: format!(
                "no feasible control at soc_bat={}, soc_sc={}",
                state.soc_bat, state.soc_sc
            ),
        })?;
        let out = stage_cost(&state, solution.grid.controls()[iu], d, &solution.cost, &solution.model)
            .expect("feasibility does not depend on the aging state");
        steps.push(record(k, dt, &state, &out));
        parts.push(out.cost);
        state = out.next;
    }
    Ok(Trajectory::from_steps(steps, parts, state))
}

/// Applies a fixed supercapacitor power schedule to a plant profile, the
/// battery covering the remainder. Used to test a strategy planned under
/// one condition on a plant operating under another.
pub fn simulate_schedule(
    profile: &PowerProfile,
    p_sc: &[f64],
    init: &HessState,
    cost: &CostParams,
    model: &StorageModel,
) -> Result<Trajectory> {
    if p_sc.len() != profile.len() {
        return Err(EmsError::domain("schedule length does not match profile"));
    }
    let dt = cost.sample_period;
    let mut state = *init;
    let mut steps = Vec::with_capacity(profile.len());
    let mut parts: Vec<StageCost> = Vec::with_capacity(profile.len());
    for (k, (&d, &u)) in profile.demands.iter().zip(p_sc).enumerate() {
        let out = stage_cost(&state, u, d, cost, model).ok_or_else(|| EmsError::InfeasibleStep {
            step: k,
            reason: format!("schedule p_sc={u} W infeasible at demand {d} W"),
        })?;
        steps.push(record(k, dt, &state, &out));
        parts.push(out.cost);
        state = out.next;
    }
    Ok(Trajectory::from_steps(steps, parts, state))
}

impl DpSolution {
    /// Demand profile (quantised) the solve was built for.
    pub fn demands(&self) -> &[f64] {
        &self.demands
    }
}
