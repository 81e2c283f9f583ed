use super::{clamp_to_window, correction_step, extract_rule, rule_step, EmsConfig, LinearRule};
use crate::dpcore::{
    rollout, solve_backward, stage_cost, CostBreakdown, CostParams, Grid, StepRecord, StorageModel, Trajectory,
};
use crate::error::{EmsError, Result};
use crate::hess::HessState;
use crate::vehicle::{cycle_to_profile, DriveCycle, PowerProfile, VehicleParams};

/// The three energy-management strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// One full-horizon DP solve with the true load.
    DpOracle,
    /// A fixed linear rule extracted offline.
    PureRule,
    /// Receding-horizon DP on a predicted load with per-step correction.
    Cloud,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::DpOracle, Strategy::Cloud, Strategy::PureRule];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::DpOracle => "dp_oracle",
            Strategy::PureRule => "pure_rule",
            Strategy::Cloud => "cloud",
        }
    }

    /// Accepts both the report names and the command-line spellings.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dp_oracle" | "dp-oracle" => Ok(Strategy::DpOracle),
            "pure_rule" | "pure-rule" | "rule" => Ok(Strategy::PureRule),
            "cloud" => Ok(Strategy::Cloud),
            other => Err(EmsError::config(
                "ems.strategy",
                format!("unknown strategy `{other}` (expected dp-oracle, rule or cloud)"),
            )),
        }
    }
}

/// Everything a strategy run needs besides the cycle and loads.
#[derive(Debug, Clone, PartialEq)]
pub struct EmsSetup {
    pub vehicle: VehicleParams,
    pub model: StorageModel,
    pub cost: CostParams,
    pub grid: Grid,
}

/// Source of predicted load factors for the planner.
pub trait LoadForecast {
    /// Predicted load factor for the block starting `t` seconds into the
    /// run.
    fn load_at(&self, t: f64) -> Result<f64>;
}

/// A forecast that always returns the same load factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantLoad(pub f64);

impl LoadForecast for ConstantLoad {
    fn load_at(&self, _t: f64) -> Result<f64> {
        Ok(self.0)
    }
}

/// Outcome of one strategy on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub trajectory: Trajectory,
    pub totals: CostBreakdown,
    /// Mean relative error of the planner's load forecasts (cloud only).
    pub load_prediction_error: Option<f64>,
    /// Indices of planning blocks that fell back to the last rule.
    pub fallback_blocks: Vec<usize>,
    /// The rule applied (pure rule) or extracted from the last plan
    /// (cloud).
    pub rule: Option<LinearRule>,
}

impl StrategyResult {
    fn new(strategy: Strategy, trajectory: Trajectory) -> Self {
        Self {
            strategy,
            totals: trajectory.totals,
            trajectory,
            load_prediction_error: None,
            fallback_blocks: Vec::new(),
            rule: None,
        }
    }
}

fn record(k: usize, dt: f64, state: &HessState, out: &crate::dpcore::StageOutcome) -> StepRecord {
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

/// Accumulates plant steps into a trajectory.
struct Plant<'a> {
    setup: &'a EmsSetup,
    state: HessState,
    steps: Vec<StepRecord>,
    parts: Vec<crate::dpcore::StageCost>,
}

impl<'a> Plant<'a> {
    fn new(setup: &'a EmsSetup, init: &HessState, n: usize) -> Self {
        Self {
            setup,
            state: *init,
            steps: Vec::with_capacity(n),
            parts: Vec::with_capacity(n),
        }
    }

    fn apply(&mut self, k: usize, p_sc: f64, p_demand: f64) -> Result<()> {
        let s = self.setup;
        let out =
            stage_cost(&self.state, p_sc, p_demand, &s.cost, &s.model).ok_or_else(|| EmsError::InfeasibleStep {
                step: k,
                reason: format!("p_sc={p_sc} W at demand {p_demand} W exceeds the pack limits"),
            })?;
        self.steps.push(record(k, s.cost.sample_period, &self.state, &out));
        self.parts.push(out.cost);
        self.state = out.next;
        Ok(())
    }

    fn finish(self) -> Trajectory {
        Trajectory::from_steps(self.steps, self.parts, self.state)
    }
}

fn check_period(cycle: &DriveCycle, cost: &CostParams) -> Result<()> {
    if (cycle.sample_period() - cost.sample_period).abs() > 1e-12 {
        return Err(EmsError::domain(format!(
            "cycle sample period {} s differs from the cost step {} s",
            cycle.sample_period(),
            cost.sample_period
        )));
    }
    Ok(())
}

/// Full-horizon DP with the true load, followed by a rollout.
pub fn run_dp_oracle(cycle: &DriveCycle, true_load: f64, init: &HessState, setup: &EmsSetup) -> Result<StrategyResult> {
    check_period(cycle, &setup.cost)?;
    let profile = cycle_to_profile(cycle, &setup.vehicle, true_load)?;
    let solution = solve_backward(&profile, &setup.grid, init, &setup.cost, &setup.model)?;
    let trajectory = rollout(&solution, &profile, init)?;
    Ok(StrategyResult::new(Strategy::DpOracle, trajectory))
}

/// Applies a fixed rule with buffer zones at every step.
pub fn run_pure_rule(
    cycle: &DriveCycle,
    true_load: f64,
    rule: &LinearRule,
    init: &HessState,
    config: &EmsConfig,
    setup: &EmsSetup,
) -> Result<StrategyResult> {
    check_period(cycle, &setup.cost)?;
    let profile = cycle_to_profile(cycle, &setup.vehicle, true_load)?;
    let mut plant = Plant::new(setup, init, profile.len());
    for (k, &d) in profile.demands.iter().enumerate() {
        let (p_sc, _) = rule_step(rule, d, plant.state.soc_sc, config, &setup.model, &setup.cost);
        plant.apply(k, p_sc, d)?;
    }
    let mut result = StrategyResult::new(Strategy::PureRule, plant.finish());
    result.rule = Some(*rule);
    Ok(result)
}

/// Plan for one block: reference demands and supercapacitor powers plus
/// the rule fitted to the whole plan.
struct Plan {
    demands: Vec<f64>,
    p_sc: Vec<f64>,
    rule: Option<LinearRule>,
}

fn plan_block(profile: &PowerProfile, start: &HessState, setup: &EmsSetup) -> Result<Plan> {
    let solution = solve_backward(profile, &setup.grid, start, &setup.cost, &setup.model)?;
    let planned = rollout(&solution, profile, start)?;
    Ok(Plan {
        demands: planned.steps.iter().map(|s| s.p_demand).collect(),
        p_sc: planned.sc_powers(),
        rule: extract_rule(&planned, profile.load_factor).ok(),
    })
}

/// Receding-horizon planning on predicted load.
///
/// Every `replan_period` the planner reads the plant state, predicts the
/// load factor, solves the DP over the next `horizon` seconds (truncated
/// at the end of the cycle) and fits a rule to the plan. The plant then
/// runs the first block with the true load; each step shifts the planned
/// supercapacitor power by the rule's response to the demand error and
/// clamps it to the hard SOC window. A block whose plan fails falls back
/// to the last valid rule.
pub fn run_cloud(
    cycle: &DriveCycle,
    true_load: f64,
    forecast: &dyn LoadForecast,
    init: &HessState,
    config: &EmsConfig,
    setup: &EmsSetup,
) -> Result<StrategyResult> {
    config.validate()?;
    check_period(cycle, &setup.cost)?;
    let dt = setup.cost.sample_period;
    let block = ((config.replan_period / dt).round() as usize).max(1);
    let horizon = ((config.horizon / dt).round() as usize).max(block);
    let truth = cycle_to_profile(cycle, &setup.vehicle, true_load)?;
    let n = truth.len();
    let mut plant = Plant::new(setup, init, n);
    let mut last_rule: Option<LinearRule> = None;
    let mut fallback_blocks = Vec::new();
    let mut errors = Vec::new();

    for (b, b0) in (0..n).step_by(block).enumerate() {
        let predicted_load = forecast.load_at(b0 as f64 * dt)?.clamp(0.0, 1.0);
        if true_load > 0.0 {
            errors.push((predicted_load - true_load).abs() / true_load);
        }
        let end = (b0 + horizon).min(n);
        let predicted = cycle_to_profile(cycle, &setup.vehicle, predicted_load)?;
        let slice = PowerProfile::new(predicted.demands[b0..end].to_vec(), predicted_load, cycle.id(), dt);
        let mut start = plant.state;
        if let Some(q) = config.planner_q_loss {
            start.q_loss = q;
        }
        let block_end = (b0 + block).min(n);
        match plan_block(&slice, &start, setup) {
            Ok(plan) => {
                if let Some(rule) = plan.rule {
                    last_rule = Some(rule);
                }
                let rule = last_rule.unwrap_or(LinearRule::new(0.0, 0.0));
                for k in b0..block_end {
                    let (d, d_ref, p_ref) = (truth.demands[k], plan.demands[k - b0], plan.p_sc[k - b0]);
                    let (p, _) = correction_step(&rule, d, d_ref, p_ref);
                    let (p_sc, _) = clamp_to_window(d, p, plant.state.soc_sc, &setup.model, &setup.cost);
                    plant.apply(k, p_sc, d)?;
                }
            }
            Err(_) => {
                fallback_blocks.push(b);
                let rule = last_rule.unwrap_or(LinearRule::new(0.0, 0.0));
                for k in b0..block_end {
                    let d = truth.demands[k];
                    let (p_sc, _) = rule_step(&rule, d, plant.state.soc_sc, config, &setup.model, &setup.cost);
                    plant.apply(k, p_sc, d)?;
                }
            }
        }
    }
    let mut result = StrategyResult::new(Strategy::Cloud, plant.finish());
    result.load_prediction_error = (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64);
    result.fallback_blocks = fallback_blocks;
    result.rule = last_rule;
    Ok(result)
}

/// One line of the strategy comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: Strategy,
    pub totals: CostBreakdown,
    /// Cost above the DP oracle, in percent.
    pub pct_vs_oracle: f64,
}

/// All three strategies on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub results: Vec<StrategyResult>,
    /// Rule used by the pure-rule baseline.
    pub baseline_rule: LinearRule,
}

/// Runs the DP oracle, the cloud planner and the pure-rule baseline on
/// the same cycle. The baseline's rule is extracted from a DP solve at
/// `config.rule_load_factor`.
pub fn compare_strategies(
    cycle: &DriveCycle,
    true_load: f64,
    forecast: &dyn LoadForecast,
    init: &HessState,
    config: &EmsConfig,
    setup: &EmsSetup,
) -> Result<ComparisonReport> {
    config.validate()?;
    let oracle = run_dp_oracle(cycle, true_load, init, setup)?;
    let reference = if config.rule_load_factor == true_load {
        oracle.trajectory.clone()
    } else {
        run_dp_oracle(cycle, config.rule_load_factor, init, setup)?.trajectory
    };
    let baseline_rule = extract_rule(&reference, config.rule_load_factor)?;
    let cloud = run_cloud(cycle, true_load, forecast, init, config, setup)?;
    let rule = run_pure_rule(cycle, true_load, &baseline_rule, init, config, setup)?;
    let base = oracle.totals.total;
    let results = vec![oracle, cloud, rule];
    let rows = results
        .iter()
        .map(|r| ComparisonRow {
            strategy: r.strategy,
            totals: r.totals,
            pct_vs_oracle: if base > 0.0 {
                100.0 * (r.totals.total - base) / base
            } else {
                0.0
            },
        })
        .collect();
    Ok(ComparisonReport {
        rows,
        results,
        baseline_rule,
    })
}
