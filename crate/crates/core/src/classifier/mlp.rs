use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rfe::LogisticOptions;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    /// Learning rate multiplier per epoch.
    pub decay: f64,
    pub hidden_layers: usize,
    pub width: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Train, validation, test fractions.
    pub split: [f64; 3],
    pub k_features: usize,
    pub logistic: LogisticOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr0: 0.001,
            decay: 0.99,
            hidden_layers: 4,
            width: 128,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            split: [0.8, 0.1, 0.1],
            k_features: 7,
            logistic: LogisticOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.split.iter().sum();
        if self.epochs == 0
            || !(self.lr0 > 0.0)
            || !(self.decay > 0.0)
            || self.width == 0
            || self.k_features == 0
            || self.split.iter().any(|s| !(*s >= 0.0))
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::InvalidParams(format!("invalid training configuration: {self:?}")));
        }
        Ok(())
    }
}

/// Per-feature z-scoring statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    /// Population standard deviations; 1 for constant columns.
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.mean_axis(Axis(0)).map(|m| m.to_vec()).unwrap_or_default();
        let std = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `(out, in)`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// ReLU hidden layers and a single sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit.
fn bce_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

impl Mlp {
    /// He-initialised network with the given layer sizes (input first,
    /// output of size 1 appended).
    pub fn new(input: usize, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|s| {
                let d = Normal::new(0.0, (2.0 / s[0] as f64).sqrt()).expect("positive std");
                Layer {
                    w: Array2::from_shape_fn((s[1], s[0]), |_| d.sample(rng)),
                    b: Array1::zeros(s[1]),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    /// Pre-activations of every layer; the last holds the output logits.
    fn forward_all(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut zs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = if l == 0 {
                x.dot(&layer.w.t()) + &layer.b
            } else {
                zs[l - 1].mapv(|v| v.max(0.0)).dot(&layer.w.t()) + &layer.b
            };
            zs.push(z);
        }
        zs
    }

    pub fn logits(&self, x: &Array2<f64>) -> Array1<f64> {
        let zs = self.forward_all(x);
        zs.last().expect("at least one layer").column(0).to_owned()
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Array1<f64> {
        self.logits(x).mapv(sigmoid)
    }

    /// Mean cross-entropy.
    pub fn loss(&self, x: &Array2<f64>, y: &[f64]) -> f64 {
        let z = self.logits(x);
        z.iter().zip(y).map(|(&zi, &yi)| bce_logit(zi, yi)).sum::<f64>() / y.len() as f64
    }

    /// Mean cross-entropy and its gradient per layer `(dW, db)`.
    pub fn loss_and_grad(&self, x: &Array2<f64>, y: &[f64]) -> (f64, Vec<(Array2<f64>, Array1<f64>)>) {
        let n = y.len() as f64;
        let zs = self.forward_all(x);
        let out = zs.last().expect("at least one layer");
        let loss = out.column(0).iter().zip(y).map(|(&z, &yi)| bce_logit(z, yi)).sum::<f64>() / n;
        let mut dz: Array2<f64> = Array2::from_shape_fn((y.len(), 1), |(i, _)| (sigmoid(out[(i, 0)]) - y[i]) / n);
        let mut grads = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let input = if l == 0 { x.clone() } else { zs[l - 1].mapv(|v| v.max(0.0)) };
            let gw = dz.t().dot(&input);
            let gb = dz.sum_axis(Axis(0));
            grads.push((gw, gb));
            if l > 0 {
                let da = dz.dot(&self.layers[l].w);
                dz = da * zs[l - 1].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            }
        }
        grads.reverse();
        (loss, grads)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Epoch whose weights were kept (0-based, after its update).
    pub best_epoch: usize,
}

/// Full-batch Adam with exponentially decaying learning rate. Returns the
/// weights with the lowest validation loss (training loss when there is no
/// validation data).
pub fn train_mlp(
    x_train: &Array2<f64>,
    y_train: &[u8],
    x_val: &Array2<f64>,
    y_val: &[u8],
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainHistory)> {
    cfg.validate()?;
    if x_train.nrows() == 0 || x_train.nrows() != y_train.len() || x_val.nrows() != y_val.len() {
        return Err(Error::InvalidInput("training data and labels do not line up".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Mlp::new(x_train.ncols(), &vec![cfg.width; cfg.hidden_layers], &mut rng);
    let yt: Vec<f64> = y_train.iter().map(|&v| f64::from(v)).collect();
    let yv: Vec<f64> = y_val.iter().map(|&v| f64::from(v)).collect();

    let mut m: Vec<(Array2<f64>, Array1<f64>)> = net
        .layers
        .iter()
        .map(|l| (Array2::zeros(l.w.raw_dim()), Array1::zeros(l.b.len())))
        .collect();
    let mut v = m.clone();
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
    };
    let mut best: Option<(f64, Mlp)> = None;

    for epoch in 0..cfg.epochs {
        let (loss, grads) = net.loss_and_grad(x_train, &yt);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let lr = cfg.lr0 * cfg.decay.powi(epoch as i32);
        let t = (epoch + 1) as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for ((layer, (gw, gb)), ((mw, mb), (vw, vb))) in net
            .layers
            .iter_mut()
            .zip(&grads)
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            ndarray::Zip::from(&mut layer.w)
                .and(gw)
                .and(mw)
                .and(vw)
                .for_each(|p, &g, mi, vi| {
                    *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
                    *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
                    *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + cfg.eps);
                });
            ndarray::Zip::from(&mut layer.b)
                .and(gb)
                .and(mb)
                .and(vb)
                .for_each(|p, &g, mi, vi| {
                    *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
                    *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
                    *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + cfg.eps);
                });
        }
        let train_loss = net.loss(x_train, &yt);
        let val_loss = if yv.is_empty() { train_loss } else { net.loss(x_val, &yv) };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            history.best_epoch = epoch;
        }
    }
    let (_, best_net) = best.expect("at least one epoch");
    Ok((best_net, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDoc {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// Trained classifier with everything needed to score new rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub config: TrainConfig,
    pub selected_features: Vec<String>,
    pub normalization: Normalization,
    pub layers: Vec<LayerDoc>,
}

impl MlpModel {
    pub fn new(config: TrainConfig, selected_features: Vec<String>, normalization: Normalization, net: &Mlp) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| LayerDoc {
                w: l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
                b: l.b.to_vec(),
            })
            .collect();
        Self {
            config,
            selected_features,
            normalization,
            layers,
        }
    }

    pub fn network(&self) -> Result<Mlp> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let rows = l.w.len();
                let cols = l.w.first().map_or(0, Vec::len);
                if l.w.iter().any(|r| r.len() != cols) || l.b.len() != rows {
                    return Err(Error::InvalidInput("ragged layer in model".into()));
                }
                let w = Array2::from_shape_vec((rows, cols), l.w.concat())
                    .map_err(|e| Error::InvalidInput(e.to_string()))?;
                Ok(Layer {
                    w,
                    b: Array1::from(l.b.clone()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if layers.is_empty() {
            return Err(Error::InvalidInput("model has no layers".into()));
        }
        Ok(Mlp { layers })
    }

    /// Probability for one row given as `(name, value)` pairs.
    pub fn predict(&self, row: &[(String, f64)]) -> Result<f64> {
        let values = self
            .selected_features
            .iter()
            .map(|name| {
                row.iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| *v)
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::MissingFeature(name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let x = Array2::from_shape_vec((1, values.len()), values).expect("one row");
        Ok(self.predict_matrix(&x)?[0])
    }

    /// Probabilities for raw (unnormalised) rows in selected-feature order.
    pub fn predict_matrix(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        let net = self.network()?;
        if x.ncols() != net.input_dim() {
            return Err(Error::InvalidInput(format!(
                "model expects {} features, got {}",
                net.input_dim(),
                x.ncols()
            )));
        }
        Ok(net.predict_proba(&self.normalization.apply(x)))
    }
}
