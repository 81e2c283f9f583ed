//! CSV readers and writers for cycles, battery curves, ridership data,
//! trajectories and strategy reports.
//!
//! Writers emit exactly the header the matching reader expects. Inputs
//! and ridership data are written at full precision; trajectories and
//! reports use nine significant digits, so re-reading and re-writing
//! them reproduces the same file.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use crate::control::{ComparisonRow, LinearRule, Strategy};
use crate::dpcore::{CostBreakdown, StepRecord};
use crate::error::{EmsError, Result};
use crate::hess::SocTable;
use crate::predict::{Evaluation, LoadRecord, WeatherRecord};
use crate::vehicle::{CycleSample, DriveCycle};

pub const CYCLE_HEADER: [&str; 3] = ["t_s", "v_mps", "grade_rad"];
pub const CURVE_HEADER: [&str; 3] = ["soc", "ocv_v", "r_ohm"];
pub const PASSENGER_HEADER: [&str; 3] = ["date", "hour", "passenger_count"];
pub const WEATHER_HEADER: [&str; 6] = [
    "date",
    "weather_code",
    "temp_high_c",
    "temp_low_c",
    "wind_level",
    "is_holiday",
];
pub const TRAJECTORY_HEADER: [&str; 11] = [
    "t_s",
    "p_demand_w",
    "p_bat_w",
    "p_sc_w",
    "i_bat_a",
    "i_sc_a",
    "soc_bat",
    "soc_sc",
    "dq_loss",
    "de_loss_j",
    "step_cost_usd",
];
pub const COMPARISON_HEADER: [&str; 6] = [
    "strategy",
    "total_usd",
    "aging_usd",
    "electric_usd",
    "penalty_usd",
    "pct_vs_oracle",
];

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Formats `x` rounded to nine significant digits, in the shortest form
/// that reads back as the rounded value.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    rounded.to_string()
}

/// CSV cursor that checks the header and reports errors with line numbers.
struct Table<'a> {
    origin: &'a Path,
    reader: csv::Reader<Box<dyn Read + 'a>>,
    columns: usize,
}

impl<'a> Table<'a> {
    /// Accepts the header `expected[..n]` for any `n >= required`.
    fn open(source: Box<dyn Read + 'a>, origin: &'a Path, expected: &[&str], required: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let n = header.len();
        if n < required || n > expected.len() || header.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(EmsError::Parse {
                path: origin.to_path_buf(),
                line: 1,
                message: format!(
                    "expected header `{}`, got `{}`",
                    expected[..required.max(n.min(expected.len()))].join(","),
                    header.join(",")
                ),
            });
        }
        Ok(Self {
            origin,
            reader,
            columns: n,
        })
    }

    /// Runs `parse` on every record, wrapping failures with the line.
    fn rows<T>(mut self, mut parse: impl FnMut(&Row) -> std::result::Result<T, String>) -> Result<Vec<T>> {
        let mut out = Vec::new();
        for record in self.reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let row = Row { record: &record };
            out.push(parse(&row).map_err(|message| EmsError::Parse {
                path: self.origin.to_path_buf(),
                line,
                message,
            })?);
        }
        Ok(out)
    }
}

struct Row<'r> {
    record: &'r csv::StringRecord,
}

impl Row<'_> {
    fn field<T: std::str::FromStr>(&self, i: usize, name: &str) -> std::result::Result<T, String> {
        let raw = self.record.get(i).ok_or_else(|| format!("missing column `{name}`"))?;
        raw.parse()
            .map_err(|_| format!("column `{name}`: cannot parse `{raw}`"))
    }

    fn float(&self, i: usize, name: &str) -> std::result::Result<f64, String> {
        let v: f64 = self.field(i, name)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("column `{name}`: value must be finite"))
        }
    }

    fn date(&self, i: usize) -> std::result::Result<NaiveDate, String> {
        let raw = self.record.get(i).ok_or("missing column `date`")?;
        NaiveDate::parse_from_str(raw, DATE_FORMAT)
            .map_err(|_| format!("column `date`: expected YYYY-MM-DD, got `{raw}`"))
    }

    fn flag(&self, i: usize, name: &str) -> std::result::Result<bool, String> {
        match self.record.get(i) {
            Some("1") | Some("true") => Ok(true),
            Some("0") | Some("false") => Ok(false),
            other => Err(format!(
                "column `{name}`: expected 0 or 1, got `{}`",
                other.unwrap_or("")
            )),
        }
    }
}

fn open_file(path: &Path) -> Result<Box<dyn Read>> {
    Ok(Box::new(File::open(path).map_err(|e| EmsError::io(path, e))?))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| EmsError::io(path, e))?))
}

fn finish<W: Write>(mut w: W, path: &Path) -> Result<()> {
    w.flush().map_err(|e| EmsError::io(path, e))
}

fn io_err(e: std::io::Error) -> EmsError {
    EmsError::io("<output>", e)
}

// ---------------------------------------------------------------- cycles

/// Reads a drive cycle; the grade column is optional. The sample period is
/// the first time step and the cycle id is the file stem of `origin`.
pub fn read_cycle<R: Read>(source: R, origin: &Path) -> Result<DriveCycle> {
    let table = Table::open(Box::new(source), origin, &CYCLE_HEADER, 2)?;
    let with_grade = table.columns == 3;
    let samples = table.rows(|r| {
        Ok(CycleSample {
            time: r.float(0, "t_s")?,
            speed: r.float(1, "v_mps")?,
            grade: if with_grade { r.float(2, "grade_rad")? } else { 0.0 },
        })
    })?;
    if samples.len() < 2 {
        return Err(EmsError::Parse {
            path: origin.to_path_buf(),
            line: 0,
            message: "a drive cycle needs at least 2 samples".into(),
        });
    }
    let period = samples[1].time - samples[0].time;
    let id = origin
        .file_stem()
        .map_or_else(|| "cycle".to_string(), |s| s.to_string_lossy().into_owned());
    DriveCycle::new(id, samples, period)
}

pub fn write_cycle<W: Write>(out: W, cycle: &DriveCycle) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CYCLE_HEADER)?;
    for s in cycle.samples() {
        w.write_record([s.time.to_string(), s.speed.to_string(), s.grade.to_string()])?;
    }
    w.flush().map_err(io_err)
}

pub fn load_cycle(path: &Path) -> Result<DriveCycle> {
    read_cycle(open_file(path)?, path)
}

pub fn save_cycle(path: &Path, cycle: &DriveCycle) -> Result<()> {
    let mut f = create_file(path)?;
    write_cycle(&mut f, cycle)?;
    finish(f, path)
}

// ------------------------------------------------------- battery curve

/// Reads an `soc,ocv_v,r_ohm` table for one battery cell.
pub fn read_soc_table<R: Read>(source: R, origin: &Path) -> Result<SocTable> {
    let table = Table::open(Box::new(source), origin, &CURVE_HEADER, 3)?;
    let rows = table.rows(|r| Ok((r.float(0, "soc")?, r.float(1, "ocv_v")?, r.float(2, "r_ohm")?)))?;
    let (soc, rest): (Vec<f64>, Vec<(f64, f64)>) = rows.into_iter().map(|(s, o, r)| (s, (o, r))).unzip();
    let (ocv, res) = rest.into_iter().unzip();
    SocTable::new(soc, ocv, res).map_err(|e| EmsError::Parse {
        path: origin.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}

pub fn write_soc_table<W: Write>(out: W, table: &SocTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for ((s, o), r) in table
        .soc()
        .iter()
        .zip(table.ocv_values())
        .zip(table.resistance_values())
    {
        w.write_record([s.to_string(), o.to_string(), r.to_string()])?;
    }
    w.flush().map_err(io_err)
}

pub fn load_soc_table(path: &Path) -> Result<SocTable> {
    read_soc_table(open_file(path)?, path)
}

// ---------------------------------------------------- ridership data

pub fn read_passengers<R: Read>(source: R, origin: &Path) -> Result<Vec<LoadRecord>> {
    Table::open(Box::new(source), origin, &PASSENGER_HEADER, 3)?.rows(|r| {
        let hour: u8 = r.field(1, "hour")?;
        if hour > 23 {
            return Err(format!("column `hour`: {hour} is not in 0..=23"));
        }
        Ok(LoadRecord {
            date: r.date(0)?,
            hour,
            passenger_count: r.field(2, "passenger_count")?,
        })
    })
}

pub fn write_passengers<W: Write>(out: W, records: &[LoadRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PASSENGER_HEADER)?;
    for r in records {
        w.write_record([
            r.date.format(DATE_FORMAT).to_string(),
            r.hour.to_string(),
            r.passenger_count.to_string(),
        ])?;
    }
    w.flush().map_err(io_err)
}

pub fn load_passengers(path: &Path) -> Result<Vec<LoadRecord>> {
    read_passengers(open_file(path)?, path)
}

pub fn save_passengers(path: &Path, records: &[LoadRecord]) -> Result<()> {
    let mut f = create_file(path)?;
    write_passengers(&mut f, records)?;
    finish(f, path)
}

pub fn read_weather<R: Read>(source: R, origin: &Path) -> Result<Vec<WeatherRecord>> {
    Table::open(Box::new(source), origin, &WEATHER_HEADER, 6)?.rows(|r| {
        Ok(WeatherRecord {
            date: r.date(0)?,
            weather_code: r.field(1, "weather_code")?,
            temp_high: r.float(2, "temp_high_c")?,
            temp_low: r.float(3, "temp_low_c")?,
            wind_level: r.field(4, "wind_level")?,
            is_holiday: r.flag(5, "is_holiday")?,
        })
    })
}

pub fn write_weather<W: Write>(out: W, records: &[WeatherRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WEATHER_HEADER)?;
    for r in records {
        w.write_record([
            r.date.format(DATE_FORMAT).to_string(),
            r.weather_code.to_string(),
            r.temp_high.to_string(),
            r.temp_low.to_string(),
            r.wind_level.to_string(),
            u8::from(r.is_holiday).to_string(),
        ])?;
    }
    w.flush().map_err(io_err)
}

pub fn load_weather(path: &Path) -> Result<Vec<WeatherRecord>> {
    read_weather(open_file(path)?, path)
}

pub fn save_weather(path: &Path, records: &[WeatherRecord]) -> Result<()> {
    let mut f = create_file(path)?;
    write_weather(&mut f, records)?;
    finish(f, path)
}

// ------------------------------------------------------- trajectories

pub fn write_trajectory<W: Write>(out: W, steps: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for s in steps {
        w.write_record(
            [
                s.time,
                s.p_demand,
                s.p_bat,
                s.p_sc,
                s.i_bat,
                s.i_sc,
                s.soc_bat,
                s.soc_sc,
                s.dq_loss,
                s.de_loss,
                s.step_cost,
            ]
            .map(sig9),
        )?;
    }
    w.flush().map_err(io_err)
}

pub fn read_trajectory<R: Read>(source: R, origin: &Path) -> Result<Vec<StepRecord>> {
    Table::open(Box::new(source), origin, &TRAJECTORY_HEADER, 11)?.rows(|r| {
        let mut v = [0.0; 11];
        for (i, (slot, name)) in v.iter_mut().zip(TRAJECTORY_HEADER).enumerate() {
            *slot = r.float(i, name)?;
        }
        Ok(StepRecord {
            time: v[0],
            p_demand: v[1],
            p_bat: v[2],
            p_sc: v[3],
            i_bat: v[4],
            i_sc: v[5],
            soc_bat: v[6],
            soc_sc: v[7],
            dq_loss: v[8],
            de_loss: v[9],
            step_cost: v[10],
        })
    })
}

pub fn save_trajectory(path: &Path, steps: &[StepRecord]) -> Result<()> {
    let mut f = create_file(path)?;
    write_trajectory(&mut f, steps)?;
    finish(f, path)
}

pub fn load_trajectory(path: &Path) -> Result<Vec<StepRecord>> {
    read_trajectory(open_file(path)?, path)
}

// ------------------------------------------------------------ reports

pub fn write_comparison<W: Write>(out: W, rows: &[ComparisonRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COMPARISON_HEADER)?;
    for r in rows {
        let t = &r.totals;
        w.write_record([
            r.strategy.name().to_string(),
            sig9(t.total),
            sig9(t.aging_cost),
            sig9(t.electric_cost),
            sig9(t.penalty_cost),
            sig9(r.pct_vs_oracle),
        ])?;
    }
    w.flush().map_err(io_err)
}

pub fn read_comparison<R: Read>(source: R, origin: &Path) -> Result<Vec<ComparisonRow>> {
    Table::open(Box::new(source), origin, &COMPARISON_HEADER, 6)?.rows(|r| {
        let name: String = r.field(0, "strategy")?;
        let strategy = Strategy::parse(&name).map_err(|e| e.to_string())?;
        Ok(ComparisonRow {
            strategy,
            totals: CostBreakdown {
                total: r.float(1, "total_usd")?,
                aging_cost: r.float(2, "aging_usd")?,
                electric_cost: r.float(3, "electric_usd")?,
                penalty_cost: r.float(4, "penalty_usd")?,
            },
            pct_vs_oracle: r.float(5, "pct_vs_oracle")?,
        })
    })
}

pub fn save_comparison(path: &Path, rows: &[ComparisonRow]) -> Result<()> {
    let mut f = create_file(path)?;
    write_comparison(&mut f, rows)?;
    finish(f, path)
}

/// Held-out errors, one row per model: the per-day RMSE columns, the
/// whole-week RMSE and the variance of the daily values.
pub fn write_rmse_table<W: Write>(out: W, rows: &[(String, Evaluation)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let days: Vec<NaiveDate> = rows
        .first()
        .map(|(_, e)| e.daily.iter().map(|&(d, _)| d).collect())
        .unwrap_or_default();
    let mut header = vec!["model".to_string()];
    header.extend(days.iter().map(|d| d.format(DATE_FORMAT).to_string()));
    header.extend(["total".to_string(), "variance".to_string()]);
    w.write_record(&header)?;
    for (name, e) in rows {
        if e.daily.iter().map(|&(d, _)| d).ne(days.iter().copied()) {
            return Err(EmsError::domain("models were evaluated on different days"));
        }
        let mut record = vec![name.clone()];
        record.extend(e.daily.iter().map(|&(_, v)| sig9(v)));
        record.extend([sig9(e.total), sig9(e.variance)]);
        w.write_record(&record)?;
    }
    w.flush().map_err(io_err)
}

/// Extracted rules, one row per source load factor.
pub fn write_rule_table<W: Write>(out: W, rules: &[LinearRule]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["load_factor", "slope", "intercept_w", "r2"])?;
    for r in rules {
        w.write_record([
            sig9(r.source_load_factor),
            sig9(r.slope),
            sig9(r.intercept),
            sig9(r.fit_r2),
        ])?;
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_cycle, synth_passengers};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn origin() -> &'static Path {
        Path::new("data/test.csv")
    }

    fn to_string(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn sig9_rounds_to_nine_digits() {
        assert_eq!(sig9(123456.789012), "123456.789");
        assert_eq!(sig9(-0.000123456789012), "-0.000123456789");
        assert_eq!(sig9(0.0), "0");
        assert_eq!(sig9(1.0), "1");
        assert_eq!(sig9(2.5e-12), "0.0000000000025");
    }

    #[test]
    fn cycle_round_trip_is_exact() {
        let cycle = synth_cycle(5, 300, 14.0).unwrap();
        let text = to_string(|b| write_cycle(b, &cycle));
        assert!(text.starts_with("t_s,v_mps,grade_rad\n"));
        let back = read_cycle(text.as_bytes(), Path::new("x/synth-5.csv")).unwrap();
        assert_eq!(back, cycle);
    }

    #[test]
    fn cycle_grade_column_is_optional() {
        let c = read_cycle("t_s,v_mps\n0,0\n1,1.5\n2,2\n".as_bytes(), origin()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.sample_period(), 1.0);
        assert!(c.samples().iter().all(|s| s.grade == 0.0));
        assert_eq!(c.id(), "test");
    }

    #[test]
    fn cycle_errors() {
        let bad_header = read_cycle("time,v\n0,0\n1,1\n".as_bytes(), origin());
        assert!(matches!(bad_header, Err(EmsError::Parse { line: 1, .. })));
        let bad_value = read_cycle("t_s,v_mps\n0,0\n1,fast\n".as_bytes(), origin());
        assert!(matches!(bad_value, Err(EmsError::Parse { line: 3, .. })));
        assert!(read_cycle("t_s,v_mps\n0,0\n1,1\n3,1\n".as_bytes(), origin()).is_err());
        assert!(read_cycle("t_s,v_mps\n0,0\n1,-1\n".as_bytes(), origin()).is_err());
    }

    #[test]
    fn soc_table_round_trip_and_validation() {
        let t = SocTable::new(vec![0.0, 0.5, 1.0], vec![3.0, 3.25, 3.4], vec![1.6e-3, 1.5e-3, 1.4e-3]).unwrap();
        let text = to_string(|b| write_soc_table(b, &t));
        assert_eq!(read_soc_table(text.as_bytes(), origin()).unwrap(), t);
        assert!(read_soc_table("soc,ocv_v,r_ohm\n0,3,0.001\n0,3.1,0.001\n".as_bytes(), origin()).is_err());
        assert!(read_soc_table("soc,ocv_v,r_ohm\n0,3,-0.001\n1,3.1,0.001\n".as_bytes(), origin()).is_err());
    }

    #[test]
    fn ridership_round_trip_is_exact() {
        let start = NaiveDate::from_ymd_opt(2014, 9, 1).unwrap();
        let (rec, weather) = synth_passengers(3, start, start + chrono::Duration::days(20)).unwrap();
        let text = to_string(|b| write_passengers(b, &rec));
        assert_eq!(read_passengers(text.as_bytes(), origin()).unwrap(), rec);
        let text = to_string(|b| write_weather(b, &weather));
        assert_eq!(read_weather(text.as_bytes(), origin()).unwrap(), weather);
    }

    #[test]
    fn ridership_errors_carry_lines() {
        let e = read_passengers(
            "date,hour,passenger_count\n2014-09-01,8,10\n2014-09-01,25,3\n".as_bytes(),
            origin(),
        );
        assert!(matches!(e, Err(EmsError::Parse { line: 3, .. })));
        let e = read_weather(
            "date,weather_code,temp_high_c,temp_low_c,wind_level,is_holiday\n2014-09-01,0,30,22,2,maybe\n".as_bytes(),
            origin(),
        );
        assert!(matches!(e, Err(EmsError::Parse { line: 2, .. })));
    }

    fn step(x: f64) -> StepRecord {
        StepRecord {
            time: x,
            p_demand: x * 1234.567890123,
            p_bat: -x * 98765.4321,
            p_sc: x / 3.0,
            i_bat: x * 1.1,
            i_sc: -x * 2.2,
            soc_bat: 0.6 + x * 1e-7,
            soc_sc: 0.75 - x * 1e-5,
            dq_loss: x * 1.234e-9,
            de_loss: x * 321.0,
            step_cost: x * 4.2e-5,
        }
    }

    #[test]
    fn trajectory_header_and_nine_digits() {
        let text = to_string(|b| write_trajectory(b, &[step(1.0)]));
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TRAJECTORY_HEADER.join(","));
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields[1], "1234.56789");
        assert_eq!(fields[3], "0.333333333");
    }

    #[test]
    fn comparison_round_trip() {
        let rows = vec![
            ComparisonRow {
                strategy: Strategy::DpOracle,
                totals: CostBreakdown::from_parts(1.0, 0.1, 0.0),
                pct_vs_oracle: 0.0,
            },
            ComparisonRow {
                strategy: Strategy::PureRule,
                totals: CostBreakdown::from_parts(1.2, 0.15, 0.0),
                pct_vs_oracle: 22.7272727,
            },
        ];
        let text = to_string(|b| write_comparison(b, &rows));
        assert!(text.starts_with("strategy,total_usd,aging_usd,electric_usd,penalty_usd,pct_vs_oracle\ndp_oracle,"));
        let back = read_comparison(text.as_bytes(), origin()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].strategy, Strategy::PureRule);
        assert_eq!(to_string(|b| write_comparison(b, &back)), text);
    }

    #[test]
    fn rmse_table_layout() {
        let d = |n| NaiveDate::from_ymd_opt(2014, 12, n).unwrap();
        let eval = Evaluation {
            daily: vec![(d(22), 1.5), (d(23), 2.25)],
            total: 1.9,
            variance: 0.28125,
        };
        let text = to_string(|b| write_rmse_table(b, &[("average".into(), eval.clone()), ("gbdt".into(), eval)]));
        assert_eq!(
            text,
            "model,2014-12-22,2014-12-23,total,variance\naverage,1.5,2.25,1.9,0.28125\ngbdt,1.5,2.25,1.9,0.28125\n"
        );
    }

    #[test]
    fn rule_table_layout() {
        let mut rule = LinearRule::new(0.8391, -11803.0);
        rule.source_load_factor = 1.0;
        rule.fit_r2 = 0.97;
        let text = to_string(|b| write_rule_table(b, &[rule]));
        assert_eq!(text, "load_factor,slope,intercept_w,r2\n1,0.8391,-11803,0.97\n");
    }

    proptest! {
        #[test]
        fn trajectory_rewrite_is_idempotent(xs in proptest::collection::vec(-1e6f64..1e6, 1..20)) {
            let steps: Vec<StepRecord> = xs.iter().map(|&x| step(x)).collect();
            let first = to_string(|b| write_trajectory(b, &steps));
            let back = read_trajectory(first.as_bytes(), origin()).unwrap();
            prop_assert_eq!(back.len(), steps.len());
            for (a, b) in back.iter().zip(&steps) {
                prop_assert!((a.p_bat - b.p_bat).abs() <= 5e-9 * b.p_bat.abs());
            }
            let second = to_string(|b| write_trajectory(b, &back));
            prop_assert_eq!(first, second);
        }

        #[test]
        fn sig9_reads_back_within_half_unit(x in -1e12f64..1e12) {
            let y: f64 = sig9(x).parse().unwrap();
            prop_assert!((x - y).abs() <= 5e-9 * x.abs());
            prop_assert_eq!(sig9(y), sig9(x));
        }
    }
}
