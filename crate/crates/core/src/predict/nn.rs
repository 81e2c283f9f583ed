use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{FeatureVector, LoadDataset};
use crate::error::{EmsError, Result};

/// Per-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn forward(&self, x: &[f64], z: &mut [f64], a: &mut [f64]) {
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let s: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            z[o] = s + self.biases[o];
            a[o] = self.activation.apply(z[o]);
        }
    }
}

/// Perceptron with two ReLU hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct NnModel {
    pub(crate) weather_classes: usize,
    pub(crate) layers: Vec<Layer>,
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnParams {
    pub hidden: (usize, usize),
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub weather_classes: usize,
}

impl Default for NnParams {
    fn default() -> Self {
        Self {
            hidden: (32, 16),
            epochs: 200,
            learning_rate: 0.01,
            seed: 42,
            weather_classes: 4,
        }
    }
}

/// Network input: one-hot day (7), hour / 23, one-hot weather, high and
/// low temperature / 40, wind / 10, holiday flag.
pub fn encode_features(x: &FeatureVector, weather_classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; 7 + 1 + weather_classes + 4];
    v[usize::from(x.day_of_week)] = 1.0;
    v[7] = f64::from(x.hour) / 23.0;
    v[8 + usize::from(x.weather_code)] = 1.0;
    let o = 8 + weather_classes;
    v[o] = x.temp_high / 40.0;
    v[o + 1] = x.temp_low / 40.0;
    v[o + 2] = f64::from(x.wind_level) / 10.0;
    v[o + 3] = if x.is_holiday { 1.0 } else { 0.0 };
    v
}

pub(crate) fn input_width(weather_classes: usize) -> usize {
    12 + weather_classes
}

impl NnModel {
    /// Assembles a network, checking that layer dimensions chain.
    pub fn new(weather_classes: usize, layers: Vec<Layer>) -> Result<Self> {
        if weather_classes == 0 || layers.is_empty() {
            return Err(EmsError::domain("network needs weather classes and at least one layer"));
        }
        let mut width = input_width(weather_classes);
        for (i, l) in layers.iter().enumerate() {
            if l.inputs != width || l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(EmsError::domain(format!("layer {i} dimensions do not chain")));
            }
            width = l.outputs;
        }
        if width != 1 {
            return Err(EmsError::domain("network must end in a single output"));
        }
        Ok(Self {
            weather_classes,
            layers,
        })
    }

    /// He-initialised network with zero biases.
    pub fn init(weather_classes: usize, hidden: (usize, usize), seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [input_width(weather_classes), hidden.0, hidden.1, 1];
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let dist = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
                Layer {
                    inputs: w[0],
                    outputs: w[1],
                    weights: (0..w[0] * w[1]).map(|_| dist.sample(&mut rng)).collect(),
                    biases: vec![0.0; w[1]],
                    activation: if i + 2 < dims.len() {
                        Activation::Relu
                    } else {
                        Activation::Identity
                    },
                }
            })
            .collect();
        Self {
            weather_classes,
            layers,
        }
    }

    pub fn weather_classes(&self) -> usize {
        self.weather_classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, input: &[f64]) -> f64 {
        let mut a = input.to_vec();
        for l in &self.layers {
            let mut z = vec![0.0; l.outputs];
            let mut next = vec![0.0; l.outputs];
            l.forward(&a, &mut z, &mut next);
            a = next;
        }
        a[0]
    }

    pub(crate) fn predict(&self, x: &FeatureVector) -> Result<f64> {
        x.validate(self.weather_classes)?;
        Ok(self.forward(&encode_features(x, self.weather_classes)))
    }

    /// All weights and biases, layer by layer (weights before biases).
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
    }

    /// Mean squared error over a batch and its gradient with respect to
    /// [`Self::parameters`], by backpropagation.
    pub fn loss_and_gradient(&self, inputs: &[Vec<f64>], targets: &[f64]) -> (f64, Vec<f64>) {
        let n = inputs.len() as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        let mut zs: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        let mut acts: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.outputs]).collect();
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(targets) {
            for (li, l) in self.layers.iter().enumerate() {
                let (prev, rest) = acts.split_at_mut(li);
                let input: &[f64] = if li == 0 { x } else { &prev[li - 1] };
                l.forward(input, &mut zs[li], &mut rest[0]);
            }
            let out = acts[self.layers.len() - 1][0];
            let err = out - y;
            loss += err * err;
            // dL/da at the output for L = mean (out - y)^2.
            let mut delta = vec![2.0 * err / n];
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                for (o, d) in delta.iter_mut().enumerate() {
                    *d *= l.activation.derivative(zs[li][o]);
                }
                let input: &[f64] = if li == 0 { x } else { &acts[li - 1] };
                let (gw, gb) = &mut grads[li];
                for o in 0..l.outputs {
                    gb[o] += delta[o];
                    let row = &mut gw[o * l.inputs..(o + 1) * l.inputs];
                    for (g, v) in row.iter_mut().zip(input) {
                        *g += delta[o] * v;
                    }
                }
                if li > 0 {
                    let mut back = vec![0.0; l.inputs];
                    for o in 0..l.outputs {
                        let row = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                        for (b, w) in back.iter_mut().zip(row) {
                            *b += delta[o] * w;
                        }
                    }
                    delta = back;
                }
            }
        }
        let flat = grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).collect();
        (loss / n, flat)
    }
}

/// Trains the perceptron with full-batch gradient descent on mean squared
/// error. Deterministic for a given seed.
pub fn train_nn(data: &LoadDataset, params: &NnParams) -> Result<NnModel> {
    if data.is_empty() {
        return Err(EmsError::domain("cannot train on an empty dataset"));
    }
    if !(params.learning_rate > 0.0) || params.hidden.0 == 0 || params.hidden.1 == 0 {
        return Err(EmsError::config(
            "predict.nn",
            "learning rate and hidden widths must be positive",
        ));
    }
    let inputs = data
        .rows
        .iter()
        .map(|r| {
            r.features.validate(params.weather_classes)?;
            Ok(encode_features(&r.features, params.weather_classes))
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = data.targets();
    let mut model = NnModel::init(params.weather_classes, params.hidden, params.seed);
    let mut p = model.parameters();
    for epoch in 0..params.epochs {
        let (loss, g) = model.loss_and_gradient(&inputs, &targets);
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(EmsError::TrainingDiverged { epoch, loss });
        }
        for (w, d) in p.iter_mut().zip(&g) {
            *w -= params.learning_rate * d;
        }
        model.set_parameters(&p);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::LoadRow;
    use chrono::NaiveDate;

    fn features(dow: u8, hour: u8) -> FeatureVector {
        FeatureVector {
            day_of_week: dow,
            hour,
            weather_code: 2,
            temp_high: 18.0,
            temp_low: 9.0,
            wind_level: 3,
            is_holiday: dow == 6,
        }
    }

    fn dataset(rows: &[(u8, u8, f64)]) -> LoadDataset {
        LoadDataset {
            rows: rows
                .iter()
                .map(|&(d, h, y)| LoadRow {
                    date: NaiveDate::from_ymd_opt(2014, 12, 1).unwrap(),
                    features: features(d, h),
                    load_factor: y,
                })
                .collect(),
            normalization_max: 100.0,
        }
    }

    #[test]
    fn encoding_layout() {
        let v = encode_features(&features(6, 23), 4);
        assert_eq!(v.len(), 16);
        assert_eq!(&v[..7], &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(v[7], 1.0);
        assert_eq!(&v[8..12], &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(&v[12..], &[18.0 / 40.0, 9.0 / 40.0, 0.3, 1.0]);
    }

    #[test]
    fn zero_epochs_equals_seeded_init() {
        let data = dataset(&[(0, 8, 0.7)]);
        let params = NnParams {
            epochs: 0,
            ..NnParams::default()
        };
        let m = train_nn(&data, &params).unwrap();
        assert_eq!(m, NnModel::init(4, (32, 16), params.seed));
    }

    #[test]
    fn single_row_is_fitted() {
        let data = dataset(&[(2, 17, 0.65)]);
        let m = train_nn(&data, &NnParams::default()).unwrap();
        let inputs = vec![encode_features(&data.rows[0].features, 4)];
        let (mse, _) = m.loss_and_gradient(&inputs, &[0.65]);
        assert!(mse < 1e-4, "mse {mse}");
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = dataset(&[(0, 8, 0.7), (3, 12, 0.4), (5, 18, 0.5), (6, 9, 0.2)]);
        let params = NnParams {
            epochs: 30,
            ..NnParams::default()
        };
        let a = train_nn(&data, &params).unwrap();
        let b = train_nn(&data, &params).unwrap();
        let bits = |m: &NnModel| m.parameters().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut m = NnModel::init(4, (5, 3), 9);
        // Shift biases so no ReLU sits at its kink.
        let mut p = m.parameters();
        for (i, v) in p.iter_mut().enumerate() {
            *v += 0.01 * ((i % 7) as f64 - 3.0);
        }
        m.set_parameters(&p);
        let inputs: Vec<Vec<f64>> = [(0, 8), (4, 17), (6, 11)]
            .iter()
            .map(|&(d, h)| encode_features(&features(d, h), 4))
            .collect();
        let targets = [0.3, 0.8, 0.1];
        let (_, g) = m.loss_and_gradient(&inputs, &targets);
        let h = 1e-6;
        for i in 0..p.len() {
            let mut plus = m.clone();
            let mut q = p.clone();
            q[i] += h;
            plus.set_parameters(&q);
            let mut minus = m.clone();
            q[i] -= 2.0 * h;
            minus.set_parameters(&q);
            let fd = (plus.loss_and_gradient(&inputs, &targets).0 - minus.loss_and_gradient(&inputs, &targets).0)
                / (2.0 * h);
            let scale = g[i].abs().max(fd.abs());
            if scale > 1e-8 {
                assert!(
                    (g[i] - fd).abs() <= 1e-5 * scale,
                    "param {i}: backprop {} vs fd {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let data = dataset(&[(0, 8, 0.7), (3, 12, 0.4)]);
        let params = NnParams {
            learning_rate: 1e6,
            ..NnParams::default()
        };
        assert!(matches!(
            train_nn(&data, &params),
            Err(EmsError::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn new_checks_dimensions() {
        let m = NnModel::init(4, (4, 2), 1);
        assert!(NnModel::new(4, m.layers().to_vec()).is_ok());
        assert!(NnModel::new(3, m.layers().to_vec()).is_err());
    }

    #[test]
    fn predict_rejects_unknown_weather() {
        let m = NnModel::init(4, (4, 2), 1);
        let mut f = features(0, 8);
        f.weather_code = 7;
        assert!(m.predict(&f).is_err());
    }
}
