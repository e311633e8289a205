//! Two-hidden-layer perceptron over raw pixels, with analytic input
//! gradients for the attacks and deterministic mini-batch training.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::imagecore::Image;

pub const MAGIC: &[u8; 4] = b"CDLM";
const VERSION: u32 = 1;
/// Inputs are scaled by this before the first layer.
pub const INPUT_SCALE: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl Architecture {
    pub fn inputs(&self) -> usize {
        self.width * self.height * self.channels
    }

    /// `(inputs, outputs)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![self.inputs()];
        sizes.extend(&self.hidden);
        sizes.push(self.classes);
        sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Parameter(format!(
                "need >= 2 classes, got {}",
                self.classes
            )));
        }
        if self.inputs() == 0 || self.hidden.contains(&0) {
            return Err(Error::Parameter("zero-sized layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: Architecture,
    /// `outputs x inputs` per layer.
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Per-layer activations of one forward pass.
struct Trace {
    /// Input to each layer (after normalization or activation).
    inputs: Vec<Array1<f64>>,
    logits: Array1<f64>,
}

impl Model {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let dims = arch.layer_dims();
        Ok(Model {
            weights: dims.iter().map(|&(i, o)| Array2::zeros((o, i))).collect(),
            biases: dims.iter().map(|&(_, o)| Array1::zeros(o)).collect(),
            arch,
        })
    }

    /// He-normal weights drawn layer by layer in row-major order, zero biases.
    pub fn init(arch: Architecture, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut m = Model::zeros(arch)?;
        for w in &mut m.weights {
            let normal = Normal::new(0.0, (2.0 / w.ncols() as f64).sqrt()).unwrap();
            w.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        Ok(m)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    fn check(&self, img: &Image) -> Result<()> {
        let a = &self.arch;
        if (img.width(), img.height(), img.channels()) != (a.width, a.height, a.channels) {
            return Err(Error::Shape(format!(
                "model expects {}x{}x{}, got {}x{}x{}",
                a.width,
                a.height,
                a.channels,
                img.width(),
                img.height(),
                img.channels()
            )));
        }
        Ok(())
    }

    fn trace(&self, img: &Image) -> Result<Trace> {
        self.check(img)?;
        let mut x: Array1<f64> = img.data().iter().map(|v| v * INPUT_SCALE).collect();
        let mut inputs = Vec::with_capacity(self.weights.len());
        let last = self.weights.len() - 1;
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w.dot(&x) + b;
            if k < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut x, z));
        }
        Ok(Trace { inputs, logits: x })
    }

    pub fn logits(&self, img: &Image) -> Result<Vec<f64>> {
        Ok(self.trace(img)?.logits.to_vec())
    }

    /// Class probabilities.
    pub fn forward(&self, img: &Image) -> Result<Vec<f64>> {
        Ok(softmax(self.trace(img)?.logits.view()).to_vec())
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, img: &Image) -> Result<usize> {
        Ok(argmax(&self.logits(img)?))
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.arch.classes {
            return Err(Error::Parameter(format!(
                "label {label} out of range for {} classes",
                self.arch.classes
            )));
        }
        Ok(())
    }

    /// Gradient of the cross-entropy with respect to the logits.
    pub fn logit_grad(&self, img: &Image, label: usize) -> Result<Vec<f64>> {
        self.check_label(label)?;
        let mut g = softmax(self.trace(img)?.logits.view());
        g[label] -= 1.0;
        Ok(g.to_vec())
    }

    /// Cross-entropy `-log p_label` and its gradient with respect to the raw
    /// `[0, 255]` samples, in the image's plane-major layout.
    pub fn loss_and_input_grad(&self, img: &Image, label: usize) -> Result<(f64, Vec<f64>)> {
        self.check_label(label)?;
        let t = self.trace(img)?;
        let loss = cross_entropy(t.logits.view(), label);
        let mut delta = softmax(t.logits.view());
        delta[label] -= 1.0;
        for k in (0..self.weights.len()).rev() {
            delta = self.weights[k].t().dot(&delta);
            if k > 0 {
                // inputs[k] is the ReLU output of layer k - 1
                delta.zip_mut_with(&t.inputs[k], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
        }
        Ok((loss, delta.iter().map(|d| d * INPUT_SCALE).collect()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let a = &self.arch;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let mut head = vec![VERSION, a.width as u32, a.height as u32, a.channels as u32];
        head.push(a.classes as u32);
        head.push(a.hidden.len() as u32);
        head.extend(a.hidden.iter().map(|&h| h as u32));
        for v in head {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for v in w.iter().chain(b.iter()) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing CDLM magic".into()));
        }
        let mut pos = 4;
        let mut u32_next = |what: &str| -> Result<usize> {
            let b = bytes
                .get(pos..pos + 4)
                .ok_or_else(|| Error::Format(format!("model header truncated at {what}")))?;
            pos += 4;
            Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
        };
        let version = u32_next("version")?;
        if version != VERSION as usize {
            return Err(Error::Format(format!(
                "unsupported model version {version}"
            )));
        }
        let (width, height, channels) = (
            u32_next("width")?,
            u32_next("height")?,
            u32_next("channels")?,
        );
        let classes = u32_next("classes")?;
        let n_hidden = u32_next("layers")?;
        if n_hidden > 64 {
            return Err(Error::Format(format!("{n_hidden} hidden layers")));
        }
        let hidden = (0..n_hidden)
            .map(|_| u32_next("hidden"))
            .collect::<Result<Vec<_>>>()?;
        let arch = Architecture {
            width,
            height,
            channels,
            hidden,
            classes,
        };
        arch.validate().map_err(|e| Error::Format(e.to_string()))?;
        let params: usize = arch.layer_dims().iter().map(|&(i, o)| (i + 1) * o).sum();
        let body = &bytes[pos..];
        if body.len() != params * 8 {
            return Err(Error::Format(format!(
                "expected {} parameter bytes, found {}",
                params * 8,
                body.len()
            )));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut model = Model::zeros(arch)?;
        for (w, b) in model.weights.iter_mut().zip(&mut model.biases) {
            for v in w.iter_mut().chain(b.iter_mut()) {
                *v = values.next().unwrap();
                if !v.is_finite() {
                    return Err(Error::Format("non-finite parameter".into()));
                }
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        Model::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// SHA-256 of the serialized model.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn softmax(z: ArrayView1<f64>) -> Array1<f64> {
    let max = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let e = z.mapv(|v| (v - max).exp());
    let s = e.sum();
    e / s
}

fn cross_entropy(z: ArrayView1<f64>, label: usize) -> f64 {
    let max = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - z[label]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
            hidden: vec![128, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
    pub train_accuracy: f64,
}

/// Mini-batch SGD on mean cross-entropy. One generator seeded from
/// `cfg.seed` draws the initial weights, then one shuffle per epoch.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainReport)> {
    if data.is_empty() {
        return Err(Error::Parameter("empty training set".into()));
    }
    if cfg.epochs == 0
        || cfg.batch_size == 0
        || cfg.learning_rate.is_nan()
        || cfg.learning_rate < 0.0
    {
        return Err(Error::Parameter(format!("invalid training config {cfg:?}")));
    }
    let first = &data.images[0];
    let arch = Architecture {
        width: first.width(),
        height: first.height(),
        channels: first.channels(),
        hidden: cfg.hidden.clone(),
        classes: data.classes,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(arch, &mut rng)?;
    let n_in = model.arch.inputs();
    let mut inputs = Array2::<f64>::zeros((data.len(), n_in));
    for (mut row, img) in inputs.rows_mut().into_iter().zip(&data.images) {
        row.iter_mut()
            .zip(img.data())
            .for_each(|(r, v)| *r = v * INPUT_SCALE);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = inputs.select(Axis(0), batch);
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            total += model.sgd_step(x, &labels, cfg.learning_rate);
        }
        epoch_loss.push(total / data.len() as f64);
    }
    let correct = data
        .images
        .iter()
        .zip(&data.labels)
        .map(|(img, &l)| model.predict(img).map(|p| usize::from(p == l)))
        .sum::<Result<usize>>()?;
    Ok((
        model,
        TrainReport {
            epoch_loss,
            train_accuracy: correct as f64 / data.len() as f64,
        },
    ))
}

impl Model {
    /// One step on a batch (rows = samples); returns the summed loss.
    fn sgd_step(&mut self, x: Array2<f64>, labels: &[usize], lr: f64) -> f64 {
        let layers = self.weights.len();
        let mut acts = vec![x];
        for k in 0..layers {
            let mut z = acts[k].dot(&self.weights[k].t()) + &self.biases[k];
            if k + 1 < layers {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        let logits = acts.pop().unwrap();
        let mut loss = 0.0;
        let mut delta = logits.clone();
        for (mut row, &l) in delta.rows_mut().into_iter().zip(labels) {
            loss += cross_entropy(row.view(), l);
            let p = softmax(row.view());
            row.assign(&p);
            row[l] -= 1.0;
        }
        let scale = lr / labels.len() as f64;
        for k in (0..layers).rev() {
            let grad_w = delta.t().dot(&acts[k]);
            let grad_b = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut next = delta.dot(&self.weights[k]);
                next.zip_mut_with(&acts[k], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
            self.weights[k].scaled_add(-scale, &grad_w);
            self.biases[k].scaled_add(-scale, &grad_b);
        }
        loss
    }
}
