//! Cross-checks of the backward solver against brute-force enumeration.

use hess_ems::dpcore::{
    exhaustive_oracle, linspace, rollout, solve_backward, stage_cost_with_aging, CostParams, Grid, StorageModel,
};
use hess_ems::hess::HessState;
use hess_ems::vehicle::PowerProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lower neighbour and upper weight by linear scan, clamped at the ends.
fn bracket(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    if x <= axis[0] {
        return (0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let mut lo = 0;
    while axis[lo + 1] <= x {
        lo += 1;
    }
    (lo, (x - axis[lo]) / (axis[lo + 1] - axis[lo]))
}

/// Cost-to-go of the discretised problem at grid node `(ib, is)` by plain
/// recursion: no tables, every control and every interpolation corner is
/// expanded.
fn recursive_value(
    k: usize,
    ib: usize,
    is: usize,
    demands: &[f64],
    grid: &Grid,
    q: f64,
    cost: &CostParams,
    model: &StorageModel,
) -> f64 {
    if k == demands.len() {
        return 0.0;
    }
    let state = HessState::new(grid.soc_bat()[ib], grid.soc_sc()[is]);
    let mut best = f64::INFINITY;
    for &u in grid.controls() {
        let Some(out) = stage_cost_with_aging(&state, q, u, demands[k], cost, model) else {
            continue;
        };
        let (jb, wb) = bracket(grid.soc_bat(), out.next.soc_bat);
        let (js, ws) = bracket(grid.soc_sc(), out.next.soc_sc);
        let mut future = 0.0;
        for (w, b, s) in [
            ((1.0 - wb) * (1.0 - ws), jb, js),
            ((1.0 - wb) * ws, jb, js + 1),
            (wb * (1.0 - ws), jb + 1, js),
            (wb * ws, jb + 1, js + 1),
        ] {
            if w != 0.0 {
                future += w * recursive_value(k + 1, b, s, demands, grid, q, cost, model);
            }
        }
        best = best.min(out.cost.total + future);
    }
    best
}

struct Instance {
    grid: Grid,
    profile: PowerProfile,
    init: HessState,
}

fn random_instance(rng: &mut ChaCha8Rng, max_horizon: usize) -> Instance {
    let h = rng.gen_range(1..=max_horizon);
    let nb = rng.gen_range(2..=7);
    let ns = rng.gen_range(2..=7);
    let nu = rng.gen_range(3..=9);
    let plim = rng.gen_range(50e3..400e3);
    let grid = Grid::new(
        linspace(0.3, 0.8, nb),
        linspace(0.5, 0.99, ns),
        linspace(-plim, plim, nu),
    )
    .unwrap();
    let demands = (0..h).map(|_| rng.gen_range(-150e3..250e3)).collect();
    let ib = rng.gen_range(0..nb);
    let is = rng.gen_range(0..ns);
    let init = HessState::new(grid.soc_bat()[ib], grid.soc_sc()[is]).with_q_loss(rng.gen_range(0.01..0.2));
    Instance {
        profile: PowerProfile::new(demands, 0.5, "tiny", 1.0),
        grid,
        init,
    }
}

#[test]
fn node_values_equal_recursive_enumeration() {
    let (cost, model) = (CostParams::default(), StorageModel::default());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 4);
        let sol = solve_backward(&inst.profile, &inst.grid, &inst.init, &cost, &model).unwrap();
        let q = cost.frozen_q_loss(inst.init.q_loss);
        for ib in 0..inst.grid.soc_bat().len() {
            for is in 0..inst.grid.soc_sc().len() {
                let expected = recursive_value(0, ib, is, &inst.profile.demands, &inst.grid, q, &cost, &model);
                let got = sol.value_at(0, ib, is);
                if expected.is_infinite() {
                    assert!(got.is_infinite());
                } else {
                    assert!(
                        (got - expected).abs() <= 1e-12 * expected.abs().max(1e-300),
                        "node ({ib},{is}): dp {got} vs enumeration {expected}"
                    );
                }
            }
        }
    }
}

#[test]
fn rollout_is_never_cheaper_than_oracle() {
    let (cost, model) = (CostParams::default(), StorageModel::default());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 5);
        let sol = solve_backward(&inst.profile, &inst.grid, &inst.init, &cost, &model).unwrap();
        let traj = rollout(&sol, &inst.profile, &inst.init).unwrap();
        let best = exhaustive_oracle(&inst.profile, &inst.grid, &inst.init, &cost, &model).unwrap();
        assert!(traj.totals.total >= best.cost * (1.0 - 1e-12));
    }
}

#[test]
fn three_step_example_matches_oracle() {
    let (cost, model) = (CostParams::default(), StorageModel::default());
    let grid = Grid::new(
        linspace(0.4, 0.8, 5),
        linspace(0.5, 0.98, 5),
        linspace(-150e3, 150e3, 7),
    )
    .unwrap();
    let profile = PowerProfile::new(vec![120e3, -60e3, 80e3], 0.5, "three", 1.0);
    let init = HessState::new(0.6, 0.74).with_q_loss(0.02);
    let sol = solve_backward(&profile, &grid, &init, &cost, &model).unwrap();
    let traj = rollout(&sol, &profile, &init).unwrap();
    let best = exhaustive_oracle(&profile, &grid, &init, &cost, &model).unwrap();
    assert!((traj.totals.total - best.cost).abs() <= 1e-9 * best.cost);
    assert_eq!(traj.sc_powers(), best.controls);
}
