use super::stage::stage_cost;
use super::{CostParams, Grid, StorageModel};
use crate::error::{EmsError, Result};
use crate::hess::HessState;
use crate::vehicle::PowerProfile;

/// Largest number of control sequences the oracle will enumerate.
pub const ORACLE_SEQUENCE_LIMIT: f64 = 1e7;

/// Best sequence found by exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub cost: f64,
    /// Control values (W) of the best sequence.
    pub controls: Vec<f64>,
}

struct Search<'a> {
    demands: &'a [f64],
    controls: &'a [f64],
    order: Vec<usize>,
    cost: &'a CostParams,
    model: &'a StorageModel,
    path: Vec<usize>,
    best: f64,
    best_path: Vec<usize>,
}

impl Search<'_> {
    fn descend(&mut self, k: usize, state: HessState, acc: f64) {
        if k == self.demands.len() {
            if acc < self.best {
                self.best = acc;
                self.best_path.clone_from(&self.path);
            }
            return;
        }
        for j in 0..self.order.len() {
            let iu = self.order[j];
            let Some(out) = stage_cost(&state, self.controls[iu], self.demands[k], self.cost, self.model) else {
                continue;
            };
            self.path.push(iu);
            self.descend(k + 1, out.next, acc + out.cost.total);
            self.path.pop();
        }
    }
}

/// Enumerates every control sequence from `init` and returns the cheapest.
///
/// Costs are the realised per-step costs with the aging state advanced
/// dynamically, the same accounting [`super::rollout`] reports. Used as
/// ground truth for the DP on tiny instances.
pub fn exhaustive_oracle(
    profile: &PowerProfile,
    grid: &Grid,
    init: &HessState,
    cost: &CostParams,
    model: &StorageModel,
) -> Result<OracleResult> {
    let sequences = (grid.controls().len() as f64).powi(profile.len() as i32);
    if sequences > ORACLE_SEQUENCE_LIMIT {
        return Err(EmsError::TooLarge {
            sequences,
            limit: ORACLE_SEQUENCE_LIMIT,
        });
    }
    let mut search = Search {
        demands: &profile.demands,
        controls: grid.controls(),
        order: grid.control_order(),
        cost,
        model,
        path: Vec::with_capacity(profile.len()),
        best: f64::INFINITY,
        best_path: Vec::new(),
    };
    search.descend(0, *init, 0.0);
    if !search.best.is_finite() {
        return Err(EmsError::InfeasibleProblem(format!(
            "every one of {sequences} control sequences is infeasible"
        )));
    }
    Ok(OracleResult {
        cost: search.best,
        controls: search.best_path.iter().map(|&i| grid.controls()[i]).collect(),
    })
}
