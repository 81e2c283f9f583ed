//! Command-line front end: synthetic data, predictor evaluation, DP
//! solves, rule extraction and strategy comparisons.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use hess_ems::config::Config;
use hess_ems::control::{
    extract_rule, run_cloud, run_dp_oracle, run_pure_rule, ComparisonReport, Strategy, StrategyResult,
};
use hess_ems::dpcore::{rollout, solve_backward, CostBreakdown};
use hess_ems::io;
use hess_ems::predict::save_model;
use hess_ems::scenario::{
    forecast_model, initial_state, observed_load, prediction_report, run_hour, split_dataset, train_predictors,
    HourScenario, HourlyForecast, ScenarioData,
};
use hess_ems::synth::{synth_cycle, synth_passengers};
use hess_ems::vehicle::cycle_to_profile;

/// Load factors of the rule-extraction sweep.
const RULE_SWEEP: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Parser)]
#[command(
    name = "hess-ems",
    version,
    about = "Battery/supercapacitor energy management for electric city buses",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines); defaults apply otherwise.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Random seed for synthetic data and network initialisation.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Directory for output files; created if missing.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EmsOverrides {
    /// Planning horizon (s).
    #[arg(long, value_name = "S")]
    horizon: Option<f64>,
    /// Replanning period (s).
    #[arg(long, value_name = "S")]
    replan: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stop-and-go drive cycle (cycle.csv).
    SynthCycle {
        #[command(flatten)]
        common: Common,
        /// Duration in seconds.
        #[arg(long, value_name = "S")]
        duration: Option<usize>,
        /// Largest speed (m/s).
        #[arg(long, value_name = "V")]
        max_speed: Option<f64>,
    },
    /// Generate hourly ridership and daily weather (passengers.csv, weather.csv).
    SynthPassengers {
        #[command(flatten)]
        common: Common,
        /// First day, YYYY-MM-DD.
        #[arg(long, value_name = "DATE")]
        start: Option<NaiveDate>,
        /// Last day, YYYY-MM-DD.
        #[arg(long, value_name = "DATE")]
        end: Option<NaiveDate>,
    },
    /// Train the four load predictors and report held-out RMSE per day.
    Predict {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the DP problem for one load factor and roll out the policy.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "X", default_value_t = 0.5)]
        load_factor: f64,
        /// Also write every stage's value and policy table.
        #[arg(long)]
        dump_solution: bool,
    },
    /// Extract linear split rules over a sweep of load factors.
    ExtractRule {
        #[command(flatten)]
        common: Common,
    },
    /// Run one strategy on the drive cycle.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ems: EmsOverrides,
        /// dp-oracle, rule or cloud.
        #[arg(long, value_name = "NAME")]
        strategy: Option<String>,
        /// True load factor; the observed load at --hour otherwise.
        #[arg(long, value_name = "X")]
        load_factor: Option<f64>,
        /// Hour of the evaluation day (default: the peak hour).
        #[arg(long, value_name = "H")]
        hour: Option<u8>,
    },
    /// Compare all strategies at the peak and off-peak hours.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        ems: EmsOverrides,
        /// Evaluate only this hour.
        #[arg(long, value_name = "H")]
        hour: Option<u8>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(common: &Common) -> Result<Config> {
    let mut config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.nn.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn apply_overrides(config: &mut Config, ems: &EmsOverrides) -> Result<()> {
    if let Some(h) = ems.horizon {
        config.ems.horizon = h;
    }
    if let Some(r) = ems.replan {
        config.ems.replan_period = r;
    }
    if ems.horizon.is_some() || ems.replan.is_some() {
        config.ems.apply_fraction = config.ems.replan_period / config.ems.horizon;
    }
    config.ems.validate()?;
    Ok(())
}

fn out_dir(common: &Common) -> Result<Option<&Path>> {
    match &common.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            Ok(Some(dir))
        }
        None => Ok(None),
    }
}

fn required_out(common: &Common) -> Result<&Path> {
    match out_dir(common)? {
        Some(dir) => Ok(dir),
        None => bail!("--out DIR is required for this command"),
    }
}

fn run(command: Command) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match command {
        Command::SynthCycle {
            common,
            duration,
            max_speed,
        } => {
            let config = load_config(&common)?;
            let dir = required_out(&common)?;
            let duration = duration.unwrap_or(config.scenario.cycle_duration_s);
            let max_speed = max_speed.unwrap_or(config.scenario.max_speed);
            let cycle = synth_cycle(config.seed, duration, max_speed)?;
            let path = dir.join("cycle.csv");
            io::save_cycle(&path, &cycle)?;
            writeln!(
                out,
                "wrote {} ({} samples, max {:.2} m/s)",
                path.display(),
                cycle.len(),
                cycle.max_speed()
            )?;
        }
        Command::SynthPassengers { common, start, end } => {
            let config = load_config(&common)?;
            let dir = required_out(&common)?;
            let start = start.unwrap_or(config.scenario.data_start);
            let end = end.unwrap_or(config.scenario.data_end);
            let (records, weather) = synth_passengers(config.seed, start, end)?;
            io::save_passengers(&dir.join("passengers.csv"), &records)?;
            io::save_weather(&dir.join("weather.csv"), &weather)?;
            writeln!(
                out,
                "wrote {} hourly records over {} days to {}",
                records.len(),
                weather.len(),
                dir.display()
            )?;
        }
        Command::Predict { common } => {
            let config = load_config(&common)?;
            let data = ScenarioData::load(&config)?;
            let split = split_dataset(&config, &data)?;
            let models = train_predictors(&config, &split.train)?;
            let report = prediction_report(&models, &split.test)?;
            writeln!(
                out,
                "held-out RMSE (passengers per hour), {} training rows",
                split.train.len()
            )?;
            io::write_rmse_table(&mut out, &report)?;
            if let Some(dir) = out_dir(&common)? {
                let mut f = fs::File::create(dir.join("rmse.csv"))?;
                io::write_rmse_table(&mut f, &report)?;
                for m in &models {
                    save_model(m, &dir.join(format!("model_{}.txt", m.kind())))?;
                }
            }
        }
        Command::Solve {
            common,
            load_factor,
            dump_solution,
        } => {
            let config = load_config(&common)?;
            let data = ScenarioData::load(&config)?;
            let setup = config.ems_setup()?;
            let init = initial_state(&config);
            let profile = cycle_to_profile(&data.cycle, &setup.vehicle, load_factor)?;
            let solution = solve_backward(&profile, &setup.grid, &init, &setup.cost, &setup.model)?;
            let trajectory = rollout(&solution, &profile, &init)?;
            writeln!(out, "dp solve: {} steps at load factor {load_factor}", trajectory.len())?;
            print_totals(&mut out, "dp_oracle", &trajectory.totals)?;
            if let Some(dir) = out_dir(&common)? {
                io::save_trajectory(&dir.join("trajectory_dp_oracle.csv"), &trajectory.steps)?;
                if dump_solution {
                    let f = fs::File::create(dir.join("solution.csv"))?;
                    solution.write_debug_csv(BufWriter::new(f))?;
                }
            } else if dump_solution {
                bail!("--dump-solution needs --out DIR");
            }
        }
        Command::ExtractRule { common } => {
            let config = load_config(&common)?;
            let data = ScenarioData::load(&config)?;
            let setup = config.ems_setup()?;
            let init = initial_state(&config);
            let mut rules = Vec::new();
            for load in RULE_SWEEP {
                let run = run_dp_oracle(&data.cycle, load, &init, &setup)?;
                rules.push(extract_rule(&run.trajectory, load)?);
            }
            io::write_rule_table(&mut out, &rules)?;
            if let Some(dir) = out_dir(&common)? {
                let mut f = fs::File::create(dir.join("rules.csv"))?;
                io::write_rule_table(&mut f, &rules)?;
            }
        }
        Command::Simulate {
            common,
            ems,
            strategy,
            load_factor,
            hour,
        } => {
            let mut config = load_config(&common)?;
            apply_overrides(&mut config, &ems)?;
            if let Some(name) = strategy {
                config.ems.strategy = Strategy::parse(&name)?;
            }
            let result = simulate(&config, load_factor, hour)?;
            print_totals(&mut out, result.strategy.name(), &result.totals)?;
            if let Some(e) = result.load_prediction_error {
                writeln!(out, "load prediction error: {:.2}%", 100.0 * e)?;
            }
            if !result.fallback_blocks.is_empty() {
                writeln!(
                    out,
                    "planner fell back to the rule in blocks {:?}",
                    result.fallback_blocks
                )?;
            }
            if let Some(dir) = out_dir(&common)? {
                io::save_trajectory(
                    &dir.join(format!("trajectory_{}.csv", result.strategy.name())),
                    &result.trajectory.steps,
                )?;
            }
        }
        Command::Compare { common, ems, hour } => {
            let mut config = load_config(&common)?;
            apply_overrides(&mut config, &ems)?;
            let data = ScenarioData::load(&config)?;
            let split = split_dataset(&config, &data)?;
            let models = train_predictors(&config, &split.train)?;
            let model = forecast_model(&config, &models)?;
            let hours = match hour {
                Some(h) => vec![("hour", h)],
                None => vec![
                    ("peak", config.scenario.peak_hour),
                    ("off-peak", config.scenario.offpeak_hour),
                ],
            };
            let dir = out_dir(&common)?;
            for (label, h) in hours {
                let scenario = run_hour(&config, &data, &split, model, h)?;
                print_scenario(&mut out, label, &scenario)?;
                if let Some(dir) = dir {
                    save_report(dir, &format!("{:02}h", h), &scenario.report)?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn simulate(config: &Config, load_factor: Option<f64>, hour: Option<u8>) -> Result<StrategyResult> {
    let data = ScenarioData::load(config)?;
    let setup = config.ems_setup()?;
    let init = initial_state(config);
    let hour = hour.unwrap_or(config.scenario.peak_hour);
    let needs_data = load_factor.is_none() || config.ems.strategy == Strategy::Cloud;
    let split = if needs_data {
        Some(split_dataset(config, &data)?)
    } else {
        None
    };
    let true_load = match load_factor {
        Some(x) => x,
        None => {
            let split = split.as_ref().expect("split loaded");
            let date = config.scenario.eval_date;
            observed_load(&split.test, date, hour)
                .or_else(|| observed_load(&split.train, date, hour))
                .with_context(|| format!("no passenger record for {date} {hour}:00"))?
                .clamp(0.0, 1.0)
        }
    };
    Ok(match config.ems.strategy {
        Strategy::DpOracle => run_dp_oracle(&data.cycle, true_load, &init, &setup)?,
        Strategy::PureRule => {
            let reference = run_dp_oracle(&data.cycle, config.ems.rule_load_factor, &init, &setup)?;
            let rule = extract_rule(&reference.trajectory, config.ems.rule_load_factor)?;
            run_pure_rule(&data.cycle, true_load, &rule, &init, &config.ems, &setup)?
        }
        Strategy::Cloud => {
            let split = split.as_ref().expect("split loaded");
            let models = train_predictors(config, &split.train)?;
            let model = forecast_model(config, &models)?;
            let date = config.scenario.eval_date;
            let weather = *data
                .weather
                .iter()
                .find(|w| w.date == date)
                .with_context(|| format!("no weather record for {date}"))?;
            let forecast = HourlyForecast {
                model,
                date,
                start_hour: hour,
                weather,
            };
            run_cloud(&data.cycle, true_load, &forecast, &init, &config.ems, &setup)?
        }
    })
}

fn print_totals(out: &mut impl Write, name: &str, t: &CostBreakdown) -> Result<()> {
    writeln!(
        out,
        "{name:<10} total {:.6} USD (aging {:.6}, electric {:.6}, penalty {:.6})",
        t.total, t.aging_cost, t.electric_cost, t.penalty_cost
    )?;
    Ok(())
}

fn print_scenario(out: &mut impl Write, label: &str, s: &HourScenario) -> Result<()> {
    writeln!(
        out,
        "{label} {} {:02}:00  true load {:.3}, predicted {:.3} (error {:.2}%)",
        s.date,
        s.hour,
        s.true_load,
        s.predicted_load,
        100.0 * s.prediction_error()
    )?;
    writeln!(
        out,
        "{:<10} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "strategy", "total_usd", "aging_usd", "electric_usd", "penalty_usd", "vs_oracle"
    )?;
    for r in &s.report.rows {
        let t = &r.totals;
        writeln!(
            out,
            "{:<10} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>9.3}%",
            r.strategy.name(),
            t.total,
            t.aging_cost,
            t.electric_cost,
            t.penalty_cost,
            r.pct_vs_oracle
        )?;
    }
    let rule = &s.report.baseline_rule;
    writeln!(
        out,
        "baseline rule at load {:.2}: p_sc = {:.4} * p_demand + {:.1} W\n",
        rule.source_load_factor, rule.slope, rule.intercept
    )?;
    Ok(())
}

fn save_report(dir: &Path, tag: &str, report: &ComparisonReport) -> Result<()> {
    io::save_comparison(&dir.join(format!("comparison_{tag}.csv")), &report.rows)?;
    for r in &report.results {
        io::save_trajectory(
            &dir.join(format!("trajectory_{tag}_{}.csv", r.strategy.name())),
            &r.trajectory.steps,
        )?;
    }
    Ok(())
}
