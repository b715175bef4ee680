//! A small, dependency-free f64 encoder–decoder network.
//!
//! The model maps a 1×64×64 bark-shell view to a 1×64×64 density view: three
//! stride-2 conv blocks down to 8×8, three nearest-upsample conv blocks back
//! up, and a final 1×1 projection. Every layer has a hand-written backward
//! pass validated by central finite differences, so the whole stack is exact
//! to rounding error and fully deterministic for a given seed.

pub mod layers;
pub mod tensor;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainingConfig;
use crate::{Error, Result};
use layers::{Conv2d, Dropout, Layer, PRelu, ParamVisitor, Upsample2x};
use tensor::Tensor4;

/// Architecture description; everything the constructor needs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelSpec {
    /// Input feature planes. The pipeline encoding is 4: patch values, the
    /// two normalized grid coordinates (without which a convolutional stack
    /// cannot express position-dependent output), and the signed offset
    /// between each cell's radial coordinate and the row's bark radius.
    #[serde(default = "default_in_channels")]
    pub in_channels: usize,
    /// Encoder channel widths, shallow to deep. The decoder mirrors them.
    pub channels: Vec<usize>,
    pub dropout: f64,
    pub prelu_init: f64,
}

fn default_in_channels() -> usize {
    4
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            in_channels: 4,
            channels: vec![16, 32, 64],
            dropout: 0.1,
            prelu_init: 0.25,
        }
    }
}

impl ModelSpec {
    pub fn from_training(cfg: &TrainingConfig) -> Self {
        ModelSpec {
            in_channels: 4,
            channels: cfg.channels.clone(),
            dropout: cfg.dropout,
            prelu_init: 0.25,
        }
    }
}

/// The encoder–decoder network.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
}

impl Model {
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        if spec.channels.is_empty() {
            return Err(Error::config("channels", "must list at least one width"));
        }
        if !(0.0..1.0).contains(&spec.dropout) {
            return Err(Error::config("dropout", "must be in [0, 1)"));
        }
        if spec.in_channels == 0 {
            return Err(Error::config("in_channels", "must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut prev = spec.in_channels;
        for &c in &spec.channels {
            layers.push(Layer::Conv(Conv2d::new(prev, c, 3, 2, 1, &mut rng)));
            layers.push(Layer::PRelu(PRelu::new(c, spec.prelu_init)));
            layers.push(Layer::Dropout(Dropout::new(spec.dropout)));
            prev = c;
        }
        for &c in spec
            .channels
            .iter()
            .rev()
            .skip(1)
            .chain([&spec.channels[0]])
        {
            layers.push(Layer::Upsample(Upsample2x::default()));
            layers.push(Layer::Conv(Conv2d::new(prev, c, 3, 1, 1, &mut rng)));
            layers.push(Layer::PRelu(PRelu::new(c, spec.prelu_init)));
            layers.push(Layer::Dropout(Dropout::new(spec.dropout)));
            prev = c;
        }
        layers.push(Layer::Conv(Conv2d::new(prev, 1, 1, 1, 0, &mut rng)));
        Ok(Model {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn forward(&mut self, input: &Tensor4, training: bool, rng: &mut ChaCha8Rng) -> Tensor4 {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x, training, rng);
        }
        x
    }

    /// Backpropagate the loss gradient, accumulating parameter gradients.
    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_params(&format!("layer{i}"), f);
        }
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, _, g| g.iter_mut().for_each(|v| *v = 0.0));
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, p, _| n += p.len());
        n
    }

    /// Freeze (or release) every dropout mask; used by gradient checks.
    pub fn set_dropout_frozen(&mut self, frozen: bool) {
        for layer in &mut self.layers {
            layer.set_dropout_frozen(frozen);
        }
    }

    /// Concatenated PReLU input signs from the most recent forward pass.
    /// Two evaluations with identical patterns saw no activation-kink
    /// crossing between them, so finite differences are valid there.
    pub fn activation_signs(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::PRelu(p) = layer {
                if let Some(mut s) = p.cached_signs() {
                    out.append(&mut s);
                }
            }
        }
        out
    }

    pub fn export_weights(&mut self) -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, p, _| out.push((name, p.clone())));
        out
    }

    pub fn import_weights(&mut self, weights: &[(String, Vec<f64>)]) -> Result<()> {
        let mut idx = 0;
        let mut err = None;
        self.visit_params(&mut |name, p, _| {
            if err.is_some() {
                return;
            }
            match weights.get(idx) {
                Some((wname, w)) if *wname == name && w.len() == p.len() => {
                    p.copy_from_slice(w);
                }
                Some((wname, w)) => {
                    err = Some(format!(
                        "checkpoint mismatch at `{name}`: got `{wname}` with {} values, need {}",
                        w.len(),
                        p.len()
                    ));
                }
                None => err = Some(format!("checkpoint ends before `{name}`")),
            }
            idx += 1;
        });
        if let Some(msg) = err {
            return Err(Error::State(msg));
        }
        if idx != weights.len() {
            return Err(Error::State(format!(
                "checkpoint has {} extra parameter arrays",
                weights.len() - idx
            )));
        }
        Ok(())
    }
}

/// Mean squared error over all elements.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::dimension("mse: prediction/target shape mismatch"));
    }
    let n = pred.data.len() as f64;
    Ok(pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Gradient of [`mse_loss`] with respect to the prediction.
pub fn mse_grad(pred: &Tensor4, target: &Tensor4) -> Result<Tensor4> {
    if !pred.same_shape(target) {
        return Err(Error::dimension("mse: prediction/target shape mismatch"));
    }
    let scale = 2.0 / pred.data.len() as f64;
    let mut g = pred.clone();
    for (v, t) in g.data.iter_mut().zip(&target.data) {
        *v = scale * (*v - t);
    }
    Ok(g)
}

/// Adam moment buffers, one pair per parameter array.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &mut Model) -> Self {
        let mut m = Vec::new();
        model.visit_params(&mut |_, p, _| m.push(vec![0.0; p.len()]));
        let v = m.clone();
        AdamState { step: 0, m, v }
    }
}

/// Learning rate for a given epoch under the step schedule.
pub fn lr_for_epoch(cfg: &TrainingConfig, epoch: usize) -> f64 {
    if epoch >= cfg.lr_drop_epoch {
        cfg.lr_after_drop
    } else {
        cfg.lr_initial
    }
}

/// One Adam update from the model's accumulated gradients.
pub fn adam_step(
    model: &mut Model,
    state: &mut AdamState,
    cfg: &TrainingConfig,
    lr: f64,
) -> Result<()> {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    let mut idx = 0;
    let mut err = None;
    model.visit_params(&mut |name, p, g| {
        if err.is_some() {
            return;
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            err = Some(Error::Training(format!(
                "non-finite gradient {bad} in `{name}` at step {t}"
            )));
            return;
        }
        let (m, v) = (&mut state.m[idx], &mut state.v[idx]);
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            p[i] -= lr * mhat / (vhat.sqrt() + cfg.epsilon);
        }
        idx += 1;
    });
    match err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// One (input, target) pair; both are single-channel square views.
#[derive(Debug, Clone)]
pub struct SamplePair {
    pub input: Tensor4,
    pub target: Tensor4,
}

/// Build one training pair from a log: the bark-surface patch at `theta0`
/// as input, the half-plane density grid at the same azimuth as target.
///
/// The input carries four planes: patch radii normalized by the render
/// extent; the normalized column and row coordinates of each cell, so the
/// translation-equivariant conv stack can produce position-dependent
/// structure; and the signed offset between the cell's radial coordinate and
/// the row's bark radius at the patch center, which crosses zero exactly at
/// the target's bark edge.
pub fn sample_pair_from_log(
    spec: &crate::synthesis::LogSpec,
    theta0: f64,
    cfg: &crate::config::RasterConfig,
) -> SamplePair {
    let extent = crate::raster::render_extent(spec, cfg);
    let patch = crate::raster::render_surface_patch(spec, theta0, cfg);
    let target = crate::raster::render_half_plane(spec, theta0, cfg);
    let n = cfg.grid;
    let mut input_t = Tensor4::zeros(1, 4, n, n);
    for (dst, src) in input_t.data[..n * n].iter_mut().zip(&patch.grid) {
        *dst = src / extent;
    }
    let mid = n / 2;
    for row in 0..n {
        let edge = patch.grid[row * n + mid] / extent;
        for col in 0..n {
            let rc = (col as f64 + 0.5) / n as f64;
            input_t.set(0, 1, row, col, rc);
            input_t.set(0, 2, row, col, (row as f64 + 0.5) / n as f64);
            input_t.set(0, 3, row, col, rc - edge);
        }
    }
    let mut target_t = Tensor4::zeros(1, 1, n, n);
    target_t.data.copy_from_slice(&target.grid);
    SamplePair {
        input: input_t,
        target: target_t,
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Result of [`train`]: best-validation weights plus the full history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn stack(samples: &[&SamplePair]) -> (Tensor4, Tensor4) {
    let i0 = &samples[0].input;
    let t0 = &samples[0].target;
    let mut input = Tensor4::zeros(samples.len(), i0.c, i0.h, i0.w);
    let mut target = Tensor4::zeros(samples.len(), t0.c, t0.h, t0.w);
    let in_len = input.sample_len();
    let tg_len = target.sample_len();
    for (i, s) in samples.iter().enumerate() {
        input.data[i * in_len..(i + 1) * in_len].copy_from_slice(&s.input.data);
        target.data[i * tg_len..(i + 1) * tg_len].copy_from_slice(&s.target.data);
    }
    (input, target)
}

/// Mean loss over a dataset with dropout disabled.
pub fn evaluate(model: &mut Model, data: &[SamplePair], batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("evaluate: empty dataset"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for chunk in data.chunks(batch_size.max(1)) {
        let refs: Vec<&SamplePair> = chunk.iter().collect();
        let (input, target) = stack(&refs);
        let pred = model.forward(&input, false, &mut rng);
        total += mse_loss(&pred, &target)? * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Full training loop: shuffled minibatches, Adam with the step schedule,
/// per-epoch validation, and a checkpoint of the best-validation weights.
pub fn train(
    spec: &ModelSpec,
    cfg: &TrainingConfig,
    train_data: &[SamplePair],
    val_data: &[SamplePair],
    seed: u64,
) -> Result<TrainOutcome> {
    if train_data.is_empty() || val_data.is_empty() {
        return Err(Error::domain("train: empty train or validation set"));
    }
    let mut model = Model::new(spec, seed)?;
    let mut adam = AdamState::new(&mut model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_weights = model.export_weights();
    let mut best_epoch = 0;
    let mut best_val = f64::INFINITY;

    let mut order: Vec<usize> = (0..train_data.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = lr_for_epoch(cfg, epoch);
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let refs: Vec<&SamplePair> = chunk.iter().map(|&i| &train_data[i]).collect();
            let (input, target) = stack(&refs);
            model.zero_grads();
            let pred = model.forward(&input, true, &mut rng);
            train_loss += mse_loss(&pred, &target)? * chunk.len() as f64;
            let grad = mse_grad(&pred, &target)?;
            model.backward(&grad)?;
            adam_step(&mut model, &mut adam, cfg, lr)?;
        }
        train_loss /= train_data.len() as f64;
        let val_loss = evaluate(&mut model, val_data, cfg.batch_size)?;
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_weights = model.export_weights();
        }
        history.push(EpochStats {
            epoch,
            lr,
            train_loss,
            val_loss,
        });
    }

    model.import_weights(&best_weights)?;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_val_loss: best_val,
    })
}

/// The constant-predictor baseline: the element-wise mean target.
pub fn baseline_mean(train_data: &[SamplePair]) -> Result<Tensor4> {
    let first = train_data
        .first()
        .ok_or_else(|| Error::domain("baseline: empty dataset"))?;
    let mut mean = Tensor4::zeros(1, first.target.c, first.target.h, first.target.w);
    for s in train_data {
        if s.target.sample_len() != mean.sample_len() {
            return Err(Error::dimension("baseline: inconsistent target shapes"));
        }
        for (a, b) in mean.data.iter_mut().zip(&s.target.data) {
            *a += b;
        }
    }
    let n = train_data.len() as f64;
    mean.data.iter_mut().for_each(|v| *v /= n);
    Ok(mean)
}

/// RMSE of the constant baseline prediction over a dataset.
pub fn baseline_rmse(mean: &Tensor4, data: &[SamplePair]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in data {
        if s.target.sample_len() != mean.sample_len() {
            return Err(Error::dimension("baseline: inconsistent target shapes"));
        }
        total += s
            .target
            .data
            .iter()
            .zip(&mean.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += s.target.data.len();
    }
    Ok((total / count as f64).sqrt())
}

/// RMSE of the model (dropout off) over a dataset.
pub fn model_rmse(model: &mut Model, data: &[SamplePair], batch_size: usize) -> Result<f64> {
    Ok(evaluate(model, data, batch_size)?.sqrt())
}

/// Serializable snapshot of trained weights.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub weights: Vec<(String, Vec<f64>)>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl Checkpoint {
    pub fn from_outcome(outcome: &TrainOutcome) -> Self {
        let mut model = outcome.model.clone();
        Checkpoint {
            spec: model.spec.clone(),
            weights: model.export_weights(),
            history: outcome.history.clone(),
            best_epoch: outcome.best_epoch,
        }
    }

    pub fn restore(&self) -> Result<Model> {
        let mut model = Model::new(&self.spec, 0)?;
        model.import_weights(&self.weights)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests;
