//! Dense pruning classifier: tanh hidden layers, sigmoid output, trained
//! with Adam on class-weighted binary cross-entropy. Double precision
//! throughout.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::textio::{self, fmt_f64};

/// Hidden widths of the pruning classifier.
pub const HIDDEN_LAYERS: [usize; 4] = [256, 256, 256, 256];

/// Probabilities are clamped to this range before taking logs.
pub const LOSS_CLAMP: f64 = 1e-12;

pub fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// `sigmoid(a)` kept strictly inside `(0, 1)`.
fn probability(a: f64) -> f64 {
    sigmoid(a).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Weighted cross-entropy of one prediction; `w` multiplies the positive term.
pub fn loss(y_hat: f64, label: bool, w: f64) -> f64 {
    let p = y_hat.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP);
    if label {
        -w * p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) || *dims.last().unwrap() != 1 {
        return Err(Error::Dimension(format!(
            "layer dims must be >= 2 positive widths ending in 1, got {dims:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// `{m, 256, 256, 256, 256, 1}` with seeded Glorot-uniform weights.
    pub fn pruning_classifier(input_dim: usize, seed: u64) -> Result<Self> {
        let mut dims = vec![input_dim];
        dims.extend(HIDDEN_LAYERS);
        dims.push(1);
        Self::new(&dims, seed)
    }

    /// Weights uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        check_dims(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-r..r))
            })
            .collect();
        let biases = dims[1..].iter().map(|&d| Array1::zeros(d)).collect();
        Ok(Self {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            weights: dims.windows(2).map(|w| Array2::zeros((w[1], w[0]))).collect(),
            biases: dims[1..].iter().map(|&d| Array1::zeros(d)).collect(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }
    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }
    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }
    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }
    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }
    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }
    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn check_input(&self, width: usize) -> Result<()> {
        if width != self.input_dim() {
            return Err(Error::Dimension(format!(
                "model expects {} features, got {width}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Hidden activations (input first) and the output logits.
    fn activations(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let last = self.weights.len() - 1;
        let mut hs = vec![x.to_owned()];
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut a = hs[i].dot(&w.t());
            a += b;
            if i == last {
                return (hs, a.column(0).to_owned());
            }
            a.mapv_inplace(f64::tanh);
            hs.push(a);
        }
        unreachable!("at least one layer")
    }

    /// Output for one feature vector, strictly inside `(0, 1)`.
    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        self.check_input(features.len())?;
        let x = ArrayView2::from_shape((1, features.len()), features).expect("row view");
        let (_, logits) = self.activations(x);
        Ok(probability(logits[0]))
    }

    /// Outputs for a batch of rows.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.activations(x).1.mapv(probability))
    }

    pub fn mean_loss(&self, x: ArrayView2<f64>, labels: &[bool], w: f64) -> Result<f64> {
        let y = self.forward_batch(x)?;
        let total: f64 = y.iter().zip(labels).map(|(&p, &l)| loss(p, l, w)).sum();
        Ok(total / labels.len() as f64)
    }

    /// Exact gradient of the mean weighted cross-entropy over the batch.
    pub fn backward(&self, x: ArrayView2<f64>, labels: &[bool], w: f64) -> Result<Gradients> {
        self.loss_and_backward(x, labels, w).map(|(_, g)| g)
    }

    /// Mean loss and its gradient from a single forward pass.
    pub fn loss_and_backward(&self, x: ArrayView2<f64>, labels: &[bool], w: f64) -> Result<(f64, Gradients)> {
        self.check_input(x.ncols())?;
        if x.nrows() == 0 || x.nrows() != labels.len() {
            return Err(Error::Dimension(format!(
                "batch of {} rows with {} labels",
                x.nrows(),
                labels.len()
            )));
        }
        let n = x.nrows() as f64;
        let (hs, logits) = self.activations(x);
        let total: f64 = logits.iter().zip(labels).map(|(&a, &l)| loss(probability(a), l, w)).sum();
        let mut delta = Array2::from_shape_fn((labels.len(), 1), |(r, _)| {
            let y = if labels[r] { 1.0 } else { 0.0 };
            (sigmoid(logits[r]) * (w * y + 1.0 - y) - w * y) / n
        });
        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        for i in (0..layers).rev() {
            gw.push(delta.t().dot(&hs[i]));
            gb.push(delta.sum_axis(Axis(0)));
            if i > 0 {
                let mut dh = delta.dot(&self.weights[i]);
                dh.zip_mut_with(&hs[i], |d, &h| *d *= 1.0 - h * h);
                delta = dh;
            }
        }
        gw.reverse();
        gb.reverse();
        let grads = Gradients {
            weights: gw,
            biases: gb,
        };
        Ok((total / n, grads))
    }

    pub fn to_text(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let mut out = format!("# mlp-v1 dims={}\n", dims.join(","));
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let _ = writeln!(out, "# layer {} weights {}x{}", i + 1, w.nrows(), w.ncols());
            for row in w.rows() {
                let line: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
            let _ = writeln!(out, "# layer {} bias {}", i + 1, b.len());
            let line: Vec<String> = b.iter().map(|v| fmt_f64(*v)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out.push_str("# end\n");
        out
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, head) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty model file"))?;
        let dims_str = head
            .strip_prefix("# mlp-v1 dims=")
            .ok_or_else(|| Error::parse(path, 1, "missing `# mlp-v1 dims=` header (wrong format version?)"))?;
        let dims = dims_str
            .trim()
            .split(',')
            .map(|d| textio::parse_usize(path, 1, d))
            .collect::<Result<Vec<_>>>()?;
        check_dims(&dims).map_err(|e| Error::parse(path, 1, e.to_string()))?;
        let mut model = Self::zeros(&dims)?;
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines
                .next()
                .ok_or_else(|| Error::parse(path, text.lines().count(), format!("truncated model: missing {what}")))
        };
        let parse_row = |line_no: usize, line: &str, width: usize| -> Result<Vec<f64>> {
            let vals = line
                .split(',')
                .map(|v| textio::parse_f64(path, line_no, v))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != width {
                return Err(Error::parse(path, line_no, format!("expected {width} values, got {}", vals.len())));
            }
            Ok(vals)
        };
        for i in 0..dims.len() - 1 {
            let (rows, cols) = (dims[i + 1], dims[i]);
            let (ln, h) = next("weights header")?;
            if h != format!("# layer {} weights {rows}x{cols}", i + 1) {
                return Err(Error::parse(path, ln, format!("expected layer {} weights {rows}x{cols}", i + 1)));
            }
            for r in 0..rows {
                let (ln, line) = next("weight row")?;
                let vals = parse_row(ln, line, cols)?;
                model.weights[i].row_mut(r).assign(&Array1::from(vals));
            }
            let (ln, h) = next("bias header")?;
            if h != format!("# layer {} bias {rows}", i + 1) {
                return Err(Error::parse(path, ln, format!("expected layer {} bias {rows}", i + 1)));
            }
            let (ln, line) = next("bias row")?;
            model.biases[i] = Array1::from(parse_row(ln, line, rows)?);
        }
        match next("end marker")? {
            (_, "# end") => {}
            (ln, _) => return Err(Error::parse(path, ln, "expected `# end`")),
        }
        if model.weights.iter().any(|w| w.iter().any(|v| !v.is_finite()))
            || model.biases.iter().any(|b| b.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::parse(path, 1, "non-finite parameter"));
        }
        Ok(model)
    }

    /// Short content hash of the serialized model.
    pub fn model_id(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    textio::write_atomic(path, model.to_text().as_bytes())
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::from_text(&textio::read_to_string(path)?, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the positive term; `None` uses negatives / positives of the
    /// training split.
    pub positive_class_weight: Option<f64>,
    pub validation_fraction: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 100,
            batch_size: 128,
            positive_class_weight: None,
            validation_fraction: 0.1,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.validation_fraction)
            && self.positive_class_weight.is_none_or(|w| w > 0.0 && w.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean over the epoch's mini-batches, each taken before its update.
    pub train_loss: f64,
    /// `None` with an empty validation split.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub positive_class_weight: f64,
    pub train_size: usize,
    pub val_size: usize,
}

impl TrainHistory {
    /// `epoch,train_loss,val_loss` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# positive_class_weight={} train_size={} val_size={}\nepoch,train_loss,val_loss\n",
            fmt_f64(self.positive_class_weight),
            self.train_size,
            self.val_size
        );
        for e in &self.epochs {
            let val = e.val_loss.map(fmt_f64).unwrap_or_default();
            let _ = writeln!(out, "{},{},{val}", e.epoch, fmt_f64(e.train_loss));
        }
        out
    }
}

/// Feature matrix and labels of `ds` in sample order.
pub fn dataset_matrix(ds: &Dataset) -> (Array2<f64>, Vec<bool>) {
    let m = ds.feature_len();
    let mut x = Array2::zeros((ds.samples.len(), m));
    for (mut row, s) in x.rows_mut().into_iter().zip(&ds.samples) {
        row.assign(&ndarray::ArrayView1::from(&s.features[..]));
    }
    (x, ds.samples.iter().map(|s| s.label).collect())
}

/// Fraction of rows classified correctly at a 0.5 cut.
pub fn accuracy(model: &MlpModel, x: ArrayView2<f64>, labels: &[bool]) -> Result<f64> {
    let y = model.forward_batch(x)?;
    let hits = y.iter().zip(labels).filter(|(&p, &l)| (p > 0.5) == l).count();
    Ok(hits as f64 / labels.len().max(1) as f64)
}

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let zw: Vec<Array2<f64>> = model.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect();
        let zb: Vec<Array1<f64>> = model.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect();
        Self {
            m_w: zw.clone(),
            v_w: zw,
            m_b: zb.clone(),
            v_b: zb,
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, g: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1, cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (lr, eps) = (cfg.learning_rate, cfg.epsilon);
        let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for i in 0..model.weights.len() {
            ndarray::Zip::from(&mut model.weights[i])
                .and(&mut self.m_w[i])
                .and(&mut self.v_w[i])
                .and(&g.weights[i])
                .for_each(|p, m, v, &g| update(p, m, v, g));
            ndarray::Zip::from(&mut model.biases[i])
                .and(&mut self.m_b[i])
                .and(&mut self.v_b[i])
                .and(&g.biases[i])
                .for_each(|p, m, v, &g| update(p, m, v, g));
        }
    }
}

/// Trains a copy of `model` on `ds`. Deterministic in `cfg.rng_seed`.
pub fn train(model: &MlpModel, ds: &Dataset, cfg: &TrainConfig) -> Result<(MlpModel, TrainHistory)> {
    cfg.validate()?;
    model.check_input(ds.feature_len())?;
    if ds.positives() == 0 || ds.negatives() == 0 {
        return Err(Error::SingleClass(ds.samples.len()));
    }
    let (x_all, y_all) = dataset_matrix(ds);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..y_all.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (cfg.validation_fraction * y_all.len() as f64).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let x_train = x_all.select(Axis(0), train_idx);
    let y_train: Vec<bool> = train_idx.iter().map(|&i| y_all[i]).collect();
    let x_val = x_all.select(Axis(0), val_idx);
    let y_val: Vec<bool> = val_idx.iter().map(|&i| y_all[i]).collect();
    let pos = y_train.iter().filter(|&&l| l).count();
    if pos == 0 || pos == y_train.len() {
        return Err(Error::SingleClass(y_train.len()));
    }
    let w = cfg
        .positive_class_weight
        .unwrap_or((y_train.len() - pos) as f64 / pos as f64);

    let mut model = model.clone();
    let mut adam = Adam::new(&model);
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut perm: Vec<usize> = (0..y_train.len()).collect();
    for epoch in 0..cfg.epochs {
        perm.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in perm.chunks(cfg.batch_size) {
            let xb = x_train.select(Axis(0), batch);
            let yb: Vec<bool> = batch.iter().map(|&i| y_train[i]).collect();
            let (batch_loss, g) = model.loss_and_backward(xb.view(), &yb, w)?;
            loss_sum += batch_loss * batch.len() as f64;
            adam.step(&mut model, &g, cfg);
        }
        let train_loss = loss_sum / y_train.len() as f64;
        let val_loss = if y_val.is_empty() {
            None
        } else {
            Some(model.mean_loss(x_val.view(), &y_val, w)?)
        };
        epochs.push(EpochStats {
            epoch: epoch + 1,
            train_loss,
            val_loss,
        });
    }
    Ok((
        model,
        TrainHistory {
            epochs,
            positive_class_weight: w,
            train_size: y_train.len(),
            val_size: y_val.len(),
        },
    ))
}
