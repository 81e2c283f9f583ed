//! Self-describing text format for trained predictors.
//!
//! The first line names the format and version, the second the model
//! kind; parameter blocks follow. Floats are written in Rust's shortest
//! round-trip form, so saving and loading is lossless.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::{AverageModel, GbdtModel, Layer, NnModel, Predictor, TreeModel, TreeNode};
use crate::error::{EmsError, Result};

const MAGIC: &str = "hess-ems-predictor";
const VERSION: u32 = 1;

fn write_tree(out: &mut String, t: &TreeModel) {
    let _ = writeln!(out, "nodes {}", t.nodes.len());
    for n in &t.nodes {
        let _ = match *n {
            TreeNode::Leaf { value } => writeln!(out, "leaf {value}"),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => writeln!(out, "split {feature} {threshold} {left} {right}"),
        };
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

/// Serialises a model to text.
pub fn to_text(model: &Predictor) -> String {
    let mut out = format!("{MAGIC} {VERSION}\nkind {}\n", model.kind());
    match model {
        Predictor::Average(m) => {
            let _ = writeln!(out, "global_mean {}", m.global_mean);
            for (d, row) in m.table.iter().enumerate() {
                let cells: Vec<String> = row
                    .iter()
                    .map(|c| c.map_or("-".to_string(), |v| v.to_string()))
                    .collect();
                let _ = writeln!(out, "day {d} {}", cells.join(" "));
            }
        }
        Predictor::Tree(t) => write_tree(&mut out, t),
        Predictor::Gbdt(m) => {
            let _ = writeln!(out, "baseline {}", m.baseline);
            let _ = writeln!(out, "learning_rate {}", m.learning_rate);
            let _ = writeln!(out, "trees {}", m.trees.len());
            for t in &m.trees {
                write_tree(&mut out, t);
            }
        }
        Predictor::Nn(m) => {
            let _ = writeln!(out, "weather_classes {}", m.weather_classes);
            let _ = writeln!(out, "layers {}", m.layers.len());
            for l in &m.layers {
                let _ = writeln!(out, "layer {} {} {}", l.inputs, l.outputs, l.activation.name());
                let _ = writeln!(out, "weights {}", join(&l.weights));
                let _ = writeln!(out, "biases {}", join(&l.biases));
            }
        }
    }
    out
}

struct Lines<'a> {
    path: PathBuf,
    iter: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> EmsError {
        EmsError::Parse {
            path: self.path.clone(),
            line: self.line,
            message: message.into(),
        }
    }

    /// Next non-blank line split into tokens, which must start with `key`.
    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        loop {
            let Some((i, text)) = self.iter.next() else {
                return Err(self.err(format!("unexpected end of file, expected `{key}`")));
            };
            self.line = i + 1;
            let mut tokens = text.split_whitespace();
            match tokens.next() {
                None => continue,
                Some(k) if k == key => return Ok(tokens.collect()),
                Some(k) => return Err(self.err(format!("expected `{key}`, found `{k}`"))),
            }
        }
    }

    fn parse<T: FromStr>(&self, token: &str) -> Result<T> {
        token.parse().map_err(|_| self.err(format!("invalid number `{token}`")))
    }

    fn single<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let t = self.expect(key)?;
        if t.len() != 1 {
            return Err(self.err(format!("`{key}` takes one value")));
        }
        self.parse(t[0])
    }

    fn floats(&mut self, key: &str, n: usize) -> Result<Vec<f64>> {
        let t = self.expect(key)?;
        if t.len() != n {
            return Err(self.err(format!("`{key}` needs {n} values, found {}", t.len())));
        }
        t.iter().map(|s| self.parse(s)).collect()
    }

    fn tree(&mut self) -> Result<TreeModel> {
        let n: usize = self.single("nodes")?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let Some((i, text)) = self.iter.next() else {
                return Err(self.err("unexpected end of tree"));
            };
            self.line = i + 1;
            let t: Vec<&str> = text.split_whitespace().collect();
            nodes.push(match t.as_slice() {
                ["leaf", v] => TreeNode::Leaf { value: self.parse(v)? },
                ["split", k, th, l, r] => TreeNode::Split {
                    feature: self.parse(k)?,
                    threshold: self.parse(th)?,
                    left: self.parse(l)?,
                    right: self.parse(r)?,
                },
                _ => return Err(self.err("expected `leaf` or `split` node")),
            });
        }
        TreeModel::from_nodes(nodes).map_err(|e| self.err(e.to_string()))
    }
}

/// Parses a model written by [`to_text`]; `origin` labels error messages.
pub fn from_text(text: &str, origin: &Path) -> Result<Predictor> {
    let mut p = Lines {
        path: origin.to_path_buf(),
        iter: text.lines().enumerate().peekable(),
        line: 0,
    };
    let header = p.expect(MAGIC)?;
    if header != [VERSION.to_string().as_str()] {
        return Err(p.err(format!("unsupported version {header:?}")));
    }
    let kind = p.expect("kind")?;
    let model = match kind.as_slice() {
        ["average"] => {
            let global_mean = p.single("global_mean")?;
            let mut table = [[None; 24]; 7];
            for (d, row) in table.iter_mut().enumerate() {
                let t = p.expect("day")?;
                if t.len() != 25 || t[0] != d.to_string() {
                    return Err(p.err(format!("expected day {d} followed by 24 cells")));
                }
                for (cell, tok) in row.iter_mut().zip(&t[1..]) {
                    *cell = if *tok == "-" { None } else { Some(p.parse(tok)?) };
                }
            }
            Predictor::Average(AverageModel { table, global_mean })
        }
        ["tree"] => Predictor::Tree(p.tree()?),
        ["gbdt"] => {
            let baseline = p.single("baseline")?;
            let learning_rate = p.single("learning_rate")?;
            let n: usize = p.single("trees")?;
            let trees = (0..n).map(|_| p.tree()).collect::<Result<Vec<_>>>()?;
            Predictor::Gbdt(GbdtModel::new(baseline, learning_rate, trees))
        }
        ["nn"] => {
            let weather_classes: usize = p.single("weather_classes")?;
            let n: usize = p.single("layers")?;
            let mut layers = Vec::with_capacity(n);
            for _ in 0..n {
                let t = p.expect("layer")?;
                let [inputs, outputs, act] = t.as_slice() else {
                    return Err(p.err("`layer` takes inputs, outputs and activation"));
                };
                let (inputs, outputs): (usize, usize) = (p.parse(inputs)?, p.parse(outputs)?);
                let activation =
                    super::Activation::from_name(act).ok_or_else(|| p.err(format!("unknown activation `{act}`")))?;
                let weights = p.floats("weights", inputs * outputs)?;
                let biases = p.floats("biases", outputs)?;
                layers.push(Layer {
                    inputs,
                    outputs,
                    weights,
                    biases,
                    activation,
                });
            }
            Predictor::Nn(NnModel::new(weather_classes, layers).map_err(|e| p.err(e.to_string()))?)
        }
        other => return Err(p.err(format!("unknown model kind {other:?}"))),
    };
    Ok(model)
}

/// Writes a model to `path`.
pub fn save_model(model: &Predictor, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(model)).map_err(|e| EmsError::io(path, e))
}

/// Reads a model from `path`.
pub fn load_model(path: &Path) -> Result<Predictor> {
    let text = std::fs::read_to_string(path).map_err(|e| EmsError::io(path, e))?;
    from_text(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::{
        train_average, train_gbdt, train_regression_tree, FeatureVector, GbdtParams, LoadDataset, LoadRow, NnModel,
        TreeParams,
    };
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data() -> LoadDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = (0..120)
            .map(|_| LoadRow {
                date: NaiveDate::from_ymd_opt(2014, 11, 3).unwrap(),
                features: FeatureVector {
                    day_of_week: rng.gen_range(0..5),
                    hour: rng.gen_range(6..22),
                    weather_code: rng.gen_range(0..4),
                    temp_high: rng.gen_range(15.0..25.0),
                    temp_low: rng.gen_range(5.0..15.0),
                    wind_level: rng.gen_range(0..6),
                    is_holiday: false,
                },
                load_factor: rng.gen_range(0.0..1.0),
            })
            .collect();
        LoadDataset {
            rows,
            normalization_max: 80.0,
        }
    }

    fn round_trip(m: Predictor) {
        let text = to_text(&m);
        let back = from_text(&text, Path::new("mem")).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_text(&back), text);
    }

    #[test]
    fn all_kinds_round_trip() {
        let d = data();
        round_trip(Predictor::Average(train_average(&d).unwrap()));
        round_trip(Predictor::Tree(
            train_regression_tree(&d, &TreeParams::default()).unwrap(),
        ));
        round_trip(Predictor::Gbdt(
            train_gbdt(
                &d,
                &GbdtParams {
                    n_trees: 5,
                    ..GbdtParams::default()
                },
            )
            .unwrap(),
        ));
        round_trip(Predictor::Nn(NnModel::init(4, (6, 3), 2)));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let m = Predictor::Nn(NnModel::init(4, (3, 2), 5));
        save_model(&m, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), m);
        assert!(matches!(
            load_model(&dir.path().join("missing")),
            Err(EmsError::Io { .. })
        ));
    }

    #[test]
    fn malformed_input_reports_line() {
        let err = from_text("hess-ems-predictor 1\nkind tree\nnodes 1\nleaf abc\n", Path::new("m")).unwrap_err();
        assert!(matches!(err, EmsError::Parse { line: 4, .. }), "{err}");
        assert!(from_text("hess-ems-predictor 2\nkind tree\n", Path::new("m")).is_err());
        assert!(from_text("hess-ems-predictor 1\nkind forest\n", Path::new("m")).is_err());
    }
}
