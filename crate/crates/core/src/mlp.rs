//! Two-hidden-layer perceptron trained full-batch with AdamW, with the number
//! of epochs picked by expanding-window early stopping.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elasticnet::{expanding_window_folds, FitError};
use crate::featurize::Standardizer;

pub const HIDDEN_SIZES: [usize; 2] = [16, 8];
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MlpError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Split(#[from] FitError),
}

pub type Result<T, E = MlpError> = std::result::Result<T, E>;

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Fully connected layer, `weights` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(z + self.biases[o]);
        }
    }
}

/// Layers are applied as affine → leaky ReLU for every hidden layer and a
/// plain affine map at the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub slope: f64,
}

impl Network {
    /// Glorot-uniform weights from a seeded generator, zero biases.
    pub fn with_sizes(sizes: &[usize], slope: f64, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(MlpError::InvalidParameter(format!("layer sizes {sizes:?}")));
        }
        if !(slope > 0.0 && slope < 1.0) {
            return Err(MlpError::InvalidParameter(format!("slope {slope}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|pair| {
                let (inputs, outputs) = (pair[0], pair[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.random_range(-limit..=limit))
                        .collect(),
                    biases: vec![0.0; outputs],
                }
            })
            .collect();
        Ok(Network { layers, slope })
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_size()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flattened parameters: per layer, weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(MlpError::ShapeMismatch(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.parameter_count()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_size() {
            return Err(MlpError::ShapeMismatch(format!(
                "input has {} values, network expects {}",
                x.len(),
                self.input_size()
            )));
        }
        let mut act = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.affine(&act, &mut next);
            if k < last {
                next.iter_mut().for_each(|z| *z = leaky_relu(*z, self.slope));
            }
            std::mem::swap(&mut act, &mut next);
        }
        Ok(act[0])
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        x.rows()
            .into_iter()
            .map(|r| self.forward(&r.to_vec()))
            .collect()
    }

    /// Full-batch mean squared error and its gradient, flattened like
    /// [`Network::parameters`].
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<(f64, Vec<f64>)> {
        if x.nrows() != y.len() || x.ncols() != self.input_size() || y.is_empty() {
            return Err(MlpError::ShapeMismatch(format!(
                "X is {}x{}, y has {} values, network expects {} inputs",
                x.nrows(),
                x.ncols(),
                y.len(),
                self.input_size()
            )));
        }
        let n = y.len() as f64;
        let last = self.layers.len() - 1;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = self
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        let mut loss = 0.0;
        // activations per layer input, pre-activations per layer output
        let mut inputs: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        let mut pre: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        for (row, &target) in x.rows().into_iter().zip(y.iter()) {
            inputs[0].clear();
            inputs[0].extend(row.iter());
            for k in 0..self.layers.len() {
                self.layers[k].affine(&inputs[k], &mut pre[k]);
                if k < last {
                    let act: Vec<f64> = pre[k].iter().map(|&z| leaky_relu(z, self.slope)).collect();
                    inputs[k + 1] = act;
                }
            }
            let err = pre[last][0] - target;
            loss += err * err;
            let mut delta = vec![2.0 * err / n];
            for k in (0..self.layers.len()).rev() {
                let layer = &self.layers[k];
                let (gw, gb) = &mut grads[k];
                for o in 0..layer.outputs {
                    gb[o] += delta[o];
                    let base = o * layer.inputs;
                    for (i, a) in inputs[k].iter().enumerate() {
                        gw[base + i] += delta[o] * a;
                    }
                }
                if k > 0 {
                    let mut back = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let base = o * layer.inputs;
                        for (i, b) in back.iter_mut().enumerate() {
                            *b += layer.weights[base + i] * delta[o];
                        }
                    }
                    for (b, &z) in back.iter_mut().zip(&pre[k - 1]) {
                        if z < 0.0 {
                            *b *= self.slope;
                        }
                    }
                    delta = back;
                }
            }
        }
        let flat = grads.into_iter().flat_map(|(w, b)| w.into_iter().chain(b)).collect();
        Ok((loss / n, flat))
    }

    pub fn mse(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<f64> {
        let pred = self.predict(x)?;
        Ok(pred.iter().zip(y.iter()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64)
    }
}

/// The `[d_in, 16, 8, 1]` network with leaky slope 0.01.
pub fn init_network(d_in: usize, seed: u64) -> Result<Network> {
    Network::with_sizes(&[d_in, HIDDEN_SIZES[0], HIDDEN_SIZES[1], 1], LEAKY_SLOPE, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamW {
    pub fn new(n_params: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// `p ← p − lr·m̂/(√v̂ + ε) − lr·wd·p`, decay applied to every parameter.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(MlpError::ShapeMismatch(format!(
                "optimizer holds {} moments, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            let p = params[i];
            params[i] = p - self.lr * m_hat / (v_hat.sqrt() + self.eps) - self.lr * self.weight_decay * p;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 5000,
            patience: 500,
            learning_rate: 1e-4,
            weight_decay: 1.0,
            folds: 5,
            seed: 0,
        }
    }
}

/// Mean train and validation MSE across folds after `epoch` updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_mse,validation_mse\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.epoch, p.train_mse, p.validation_mse));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    pub chosen_epochs: usize,
    pub curve: TrainingCurve,
}

/// Runs `epochs` full-batch AdamW updates from `net`.
pub fn train_epochs(
    mut net: Network,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    epochs: usize,
    config: &TrainConfig,
) -> Result<Network> {
    let mut opt = AdamW::new(net.parameter_count(), config.learning_rate, config.weight_decay);
    let mut params = net.parameters();
    for _ in 0..epochs {
        let (_, grads) = net.loss_and_gradients(x, y)?;
        opt.update(&mut params, &grads)?;
        net.set_parameters(&params)?;
    }
    Ok(net)
}

struct FoldState {
    net: Network,
    params: Vec<f64>,
    opt: AdamW,
}

/// Trains one network per expanding-window fold in lockstep and tracks the
/// mean validation MSE after every epoch. Scanning stops at `max_epochs` or
/// once `patience` epochs pass without a new minimum. The returned network
/// is trained from the same initialization on all rows for the epoch count
/// with the lowest mean validation MSE.
pub fn train_early_stopping(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if x.nrows() != y.len() {
        return Err(MlpError::ShapeMismatch(format!(
            "X has {} rows, y has {}",
            x.nrows(),
            y.len()
        )));
    }
    if config.patience == 0 {
        return Err(MlpError::InvalidParameter("patience must be positive".into()));
    }
    let folds = expanding_window_folds(x.nrows(), config.folds)?;
    let init = init_network(x.ncols(), config.seed)?;
    let mut states: Vec<FoldState> = folds
        .iter()
        .map(|_| FoldState {
            net: init.clone(),
            params: init.parameters(),
            opt: AdamW::new(init.parameter_count(), config.learning_rate, config.weight_decay),
        })
        .collect();
    let views: Vec<_> = folds
        .iter()
        .map(|f| {
            (
                x.slice_axis(Axis(0), f.train.clone().into()),
                y.slice_axis(Axis(0), f.train.clone().into()),
                x.slice_axis(Axis(0), f.validation.clone().into()),
                y.slice_axis(Axis(0), f.validation.clone().into()),
            )
        })
        .collect();

    let mut curve = TrainingCurve::default();
    let mut best = (0usize, f64::INFINITY);
    for epoch in 0..=config.max_epochs {
        let last = epoch == config.max_epochs;
        let losses = states
            .par_iter_mut()
            .zip(views.par_iter())
            .map(|(s, (xt, yt, xv, yv))| -> Result<(f64, f64)> {
                let val = s.net.mse(*xv, *yv)?;
                let (train, grads) = s.net.loss_and_gradients(*xt, *yt)?;
                if !last {
                    s.opt.update(&mut s.params, &grads)?;
                    s.net.set_parameters(&s.params)?;
                }
                Ok((train, val))
            })
            .collect::<Result<Vec<_>>>()?;
        let k = losses.len() as f64;
        let point = CurvePoint {
            epoch,
            train_mse: losses.iter().map(|l| l.0).sum::<f64>() / k,
            validation_mse: losses.iter().map(|l| l.1).sum::<f64>() / k,
        };
        curve.points.push(point);
        if point.validation_mse < best.1 {
            best = (epoch, point.validation_mse);
        } else if epoch - best.0 >= config.patience {
            break;
        }
    }
    let network = train_epochs(init, x, y, best.0, config)?;
    Ok(TrainOutcome {
        network,
        chosen_epochs: best.0,
        curve,
    })
}

/// A trained network with the feature layout and scaling it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub target: String,
    pub feature_names: Vec<String>,
    pub network: Network,
    pub chosen_epochs: usize,
    pub standardizer: Standardizer,
}

impl MlpModel {
    /// Prediction on the original target scale for a standardized row.
    pub fn predict_original(&self, x_row: &[f64]) -> Result<f64> {
        let z = self.network.forward(x_row)?;
        self.standardizer
            .inverse(&self.target, z)
            .ok_or_else(|| MlpError::InvalidParameter(format!("no statistics for {}", self.target)))
    }
}
