use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{interleave, window_scale, ModelKind, NnBank, NnModel, STD_FLOOR};
use crate::error::{Error, Result};
use crate::reconstruct::two_way;
use crate::sim::{derive_seed, rng_from, sample_sv_channel, synthesize_iq, SvParams, ToneGrid};

/// Data generation and optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    /// Largest gap width T; models are trained for 1..=T.
    pub max_width: usize,
    pub hidden: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Also train one-sided models for gaps at the band edges.
    pub edge_models: bool,
    pub snr_db: (f64, f64),
    pub tau0_s: (f64, f64),
    pub ray_rate_inv_s: (f64, f64),
    pub rician_db: (f64, f64),
    pub rms_delay_spread_s: f64,
    pub grid: ToneGrid,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_width: 10,
            hidden: 20,
            train_size: 100_000,
            validation_size: 10_000,
            epochs: 50,
            batch_size: 1000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            edge_models: true,
            snr_db: (20.0, 30.0),
            tau0_s: (1e-9, 30e-9),
            ray_rate_inv_s: (4e-9, 10e-9),
            rician_db: (-15.0, 15.0),
            rms_delay_spread_s: 22e-9,
            grid: ToneGrid::ble(),
        }
    }
}

impl TrainingConfig {
    /// Set sizes of the original protocol.
    pub fn full_scale() -> Self {
        Self {
            train_size: 900_000,
            validation_size: 100_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.max_width == 0 || self.hidden == 0 {
            return bad("max_width and hidden must be at least 1".into());
        }
        if 3 * self.max_width > self.grid.num_tones {
            return bad(format!(
                "width {} needs {} tones of context, grid has {}",
                self.max_width,
                3 * self.max_width,
                self.grid.num_tones
            ));
        }
        if self.train_size == 0 || self.batch_size == 0 || self.epochs == 0 {
            return bad("train_size, batch_size and epochs must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("learning rate must be positive and betas in [0, 1)".into());
        }
        for (name, (lo, hi)) in [
            ("snr_db", self.snr_db),
            ("tau0_s", self.tau0_s),
            ("ray_rate_inv_s", self.ray_rate_inv_s),
            ("rician_db", self.rician_db),
        ] {
            if !(lo <= hi) {
                return bad(format!("{name} range ({lo}, {hi}) is empty"));
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Feature/target pairs, row-major, each divided by its window scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    /// Per-example window scale; multiply back for h² units.
    pub scales: Vec<Complex64>,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len() / self.input_dim
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * self.output_dim..(i + 1) * self.output_dim]
    }
}

/// Noisy and clean h² over a window of consecutive tones of one random channel.
fn sample_window(cfg: &TrainingConfig, start: usize, len: usize, seed: u64) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut rng = rng_from(seed);
    let params = SvParams {
        tau0_s: uniform(&mut rng, cfg.tau0_s),
        ray_rate_inv_s: uniform(&mut rng, cfg.ray_rate_inv_s),
        rician_db: uniform(&mut rng, cfg.rician_db),
        rms_delay_spread_s: cfg.rms_delay_spread_s,
        ..SvParams::default()
    };
    let snr = uniform(&mut rng, cfg.snr_db);
    let channel = sample_sv_channel(&params, rng.random())?;
    let sub = ToneGrid {
        f0_hz: cfg.grid.frequency(start),
        delta_f_hz: cfg.grid.delta_f_hz,
        num_tones: len,
    };
    let noisy = two_way(&synthesize_iq(&channel, &sub, snr, rng.random())?)?.h_sq;
    let clean = channel.frequency_response(&sub).iter().map(|h| h * h).collect();
    Ok((noisy, clean))
}

fn mirror(v: &mut [Complex64]) {
    v.reverse();
    v.iter_mut().for_each(|z| *z = z.conj());
}

type Example = (Vec<f64>, Vec<f64>, Complex64);

fn scaled(kind: ModelKind, x: &[Complex64], y: &[Complex64]) -> Example {
    let alpha = window_scale(kind, x);
    let x: Vec<Complex64> = x.iter().map(|v| v / alpha).collect();
    let y: Vec<Complex64> = y.iter().map(|v| v / alpha).collect();
    (interleave(x.iter()), interleave(y.iter()), alpha)
}

/// One example: features from noisy neighbours of the first `gap` tones of a
/// `region`-wide block, targets the clean values of those `gap` tones.
/// For interior layouts the model sees `region` tones on each side.
fn example(
    cfg: &TrainingConfig,
    kind: ModelKind,
    region: usize,
    gap: usize,
    seed: u64,
) -> Result<Example> {
    let k = cfg.grid.num_tones;
    let mut rng = rng_from(seed);
    let len = 3 * region;
    match kind {
        ModelKind::Interior => {
            let start = rng.random_range(0..=k - len);
            let (noisy, clean) = sample_window(cfg, start, len, rng.random())?;
            let x: Vec<Complex64> = noisy[..region].iter().chain(&noisy[2 * region..]).copied().collect();
            Ok(scaled(kind, &x, &clean[region..region + gap]))
        }
        ModelKind::Edge => {
            // Upper-edge gaps as they are, lower-edge gaps mirrored.
            let upper = rng.random_bool(0.5);
            let start = if upper { k - len } else { 0 };
            let (mut noisy, mut clean) = sample_window(cfg, start, len, rng.random())?;
            if !upper {
                mirror(&mut noisy);
                mirror(&mut clean);
            }
            Ok(scaled(kind, &noisy[..2 * region], &clean[2 * region..2 * region + gap]))
        }
    }
}

/// `n` examples for a width-`width` model, generated in parallel but
/// deterministic in `seed`.
pub fn generate_dataset(cfg: &TrainingConfig, kind: ModelKind, width: usize, n: usize, seed: u64) -> Result<Dataset> {
    gap_dataset(cfg, kind, width, width, n, seed)
}

fn gap_dataset(cfg: &TrainingConfig, kind: ModelKind, region: usize, gap: usize, n: usize, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    if gap == 0 || gap > region || 3 * region > cfg.grid.num_tones {
        return Err(Error::InvalidParameter(format!(
            "gap width {gap} in a {region}-tone model window does not fit {} tones",
            cfg.grid.num_tones
        )));
    }
    let pairs: Vec<Example> = (0..n as u64)
        .into_par_iter()
        .map(|i| example(cfg, kind, region, gap, derive_seed(seed, i)))
        .collect::<Result<_>>()?;
    let mut inputs = Vec::with_capacity(n * 4 * region);
    let mut targets = Vec::with_capacity(n * 2 * gap);
    let mut scales = Vec::with_capacity(n);
    for (x, y, a) in pairs {
        inputs.extend(x);
        targets.extend(y);
        scales.push(a);
    }
    Ok(Dataset {
        inputs,
        targets,
        scales,
        input_dim: 4 * region,
        output_dim: 2 * gap,
    })
}

fn column_stats(data: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let n = (data.len() / dim) as f64;
    let mut mean = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for row in data.chunks_exact(dim) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
    (mean, std)
}

/// Gradient of the training loss with respect to the trainable parameters,
/// laid out like [`NnModel::trainable`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl NnModel {
    /// w_in, b_hidden, w_out, b_out concatenated.
    pub fn trainable(&self) -> Vec<f64> {
        [&self.w_in, &self.b_hidden, &self.w_out, &self.b_out]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    pub fn set_trainable(&mut self, p: &[f64]) {
        let mut off = 0;
        for v in [&mut self.w_in, &mut self.b_hidden, &mut self.w_out, &mut self.b_out] {
            let n = v.len();
            v.copy_from_slice(&p[off..off + n]);
            off += n;
        }
    }
}

/// Mean squared error over standardized outputs for the rows `batch` of
/// (already standardized) `x` and `y`, and its gradient.
pub fn loss_and_gradient(model: &NnModel, x: &[f64], y: &[f64], batch: &[usize]) -> (f64, Gradient) {
    let (i_dim, o_dim, h_dim) = (model.input_dim(), model.output_dim(), model.hidden);
    let mut g_w_in = vec![0.0; h_dim * i_dim];
    let mut g_b_h = vec![0.0; h_dim];
    let mut g_w_out = vec![0.0; o_dim * h_dim];
    let mut g_b_out = vec![0.0; o_dim];
    let norm = 1.0 / (batch.len() * o_dim) as f64;
    let mut loss = 0.0;
    let mut d_hidden = vec![0.0; h_dim];

    for &row in batch {
        let xr = &x[row * i_dim..(row + 1) * i_dim];
        let yr = &y[row * o_dim..(row + 1) * o_dim];
        let (pre, out) = model.forward_standardized(xr);
        d_hidden.iter_mut().for_each(|d| *d = 0.0);
        for o in 0..o_dim {
            let diff = out[o] - yr[o];
            loss += diff * diff;
            let d_out = 2.0 * diff * norm;
            g_b_out[o] += d_out;
            let w_row = &model.w_out[o * h_dim..(o + 1) * h_dim];
            let g_row = &mut g_w_out[o * h_dim..(o + 1) * h_dim];
            for h in 0..h_dim {
                g_row[h] += d_out * pre[h].max(0.0);
                d_hidden[h] += d_out * w_row[h];
            }
        }
        for h in 0..h_dim {
            if pre[h] <= 0.0 {
                continue;
            }
            let d = d_hidden[h];
            g_b_h[h] += d;
            let g_row = &mut g_w_in[h * i_dim..(h + 1) * i_dim];
            for (g, v) in g_row.iter_mut().zip(xr) {
                *g += d * v;
            }
        }
    }
    let grad = [g_w_in, g_b_h, g_w_out, g_b_out].concat();
    (loss * norm, Gradient(grad))
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainingConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub kind: ModelKind,
    pub width: usize,
    /// Mean standardized training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Normalized MSE on the validation set, in h² units.
    pub validation_nmse: f64,
}

/// Σ‖ŷ − y‖² / Σ‖y‖² of the predictions, back in h² units.
pub fn normalized_mse(model: &NnModel, data: &Dataset) -> Result<f64> {
    let mut err = 0.0;
    let mut energy = 0.0;
    for i in 0..data.len() {
        let pred = model.forward_features(data.input(i))?;
        let w = data.scales[i].norm_sqr();
        // Wider models may predict past the gap; only its first tones count.
        for (p, t) in pred.iter().zip(data.target(i)) {
            err += w * (p - t) * (p - t);
            energy += w * t * t;
        }
    }
    Ok(if energy > 0.0 { err / energy } else { err })
}

/// Fits standardization on the training set and runs minibatch Adam.
pub fn train_on(model: &mut NnModel, train: &Dataset, cfg: &TrainingConfig, seed: u64) -> Result<Vec<f64>> {
    if train.input_dim != model.input_dim() || train.output_dim != model.output_dim() {
        return Err(Error::Dimension(format!(
            "dataset {}→{} for a {}→{} model",
            train.input_dim,
            train.output_dim,
            model.input_dim(),
            model.output_dim()
        )));
    }
    if train.is_empty() {
        return Err(Error::NoData);
    }
    let (in_mean, in_std) = column_stats(&train.inputs, train.input_dim);
    let (out_mean, out_std) = column_stats(&train.targets, train.output_dim);
    model.in_mean = in_mean;
    model.in_std = in_std;
    model.out_mean = out_mean;
    model.out_std = out_std;
    let x: Vec<f64> = train
        .inputs
        .chunks_exact(train.input_dim)
        .flat_map(|r| model.standardize_input(r))
        .collect();
    let y: Vec<f64> = train
        .targets
        .chunks_exact(train.output_dim)
        .flat_map(|r| model.standardize_output(r))
        .collect();

    let mut rng = rng_from(seed);
    let mut params = model.trainable();
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            model.set_trainable(&params);
            let (loss, grad) = loss_and_gradient(model, &x, &y, batch);
            adam.update(&mut params, &grad.0, cfg);
            total += loss;
            batches += 1;
        }
        model.set_trainable(&params);
        losses.push(total / batches as f64);
    }
    Ok(losses)
}

/// Trains one model from freshly generated data.
pub fn train_model(cfg: &TrainingConfig, kind: ModelKind, width: usize, seed: u64) -> Result<(NnModel, TrainReport)> {
    cfg.validate()?;
    let train = generate_dataset(cfg, kind, width, cfg.train_size, derive_seed(seed, 1))?;
    let valid = generate_dataset(cfg, kind, width, cfg.validation_size.max(1), derive_seed(seed, 2))?;
    let mut model = NnModel::xavier(kind, width, cfg.hidden, &mut rng_from(derive_seed(seed, 3)))?;
    let epoch_losses = train_on(&mut model, &train, cfg, derive_seed(seed, 4))?;
    let validation_nmse = normalized_mse(&model, &valid)?;
    Ok((
        model,
        TrainReport {
            kind,
            width,
            epoch_losses,
            validation_nmse,
        },
    ))
}

fn model_seed(seed: u64, kind: ModelKind, width: usize) -> u64 {
    let tag = match kind {
        ModelKind::Interior => 0,
        ModelKind::Edge => 1 << 32,
    };
    derive_seed(seed, tag + width as u64)
}

/// Trains widths 1..=T (and edge variants if configured).
pub fn train_bank(cfg: &TrainingConfig, seed: u64) -> Result<(NnBank, Vec<TrainReport>)> {
    cfg.validate()?;
    let mut jobs: Vec<(ModelKind, usize)> = (1..=cfg.max_width).map(|w| (ModelKind::Interior, w)).collect();
    if cfg.edge_models {
        jobs.extend((1..=cfg.max_width).map(|w| (ModelKind::Edge, w)));
    }
    let trained: Vec<(NnModel, TrainReport)> = jobs
        .iter()
        .map(|&(kind, w)| train_model(cfg, kind, w, model_seed(seed, kind, w)))
        .collect::<Result<_>>()?;
    let mut interior = Vec::new();
    let mut edge = Vec::new();
    let mut reports = Vec::new();
    for (model, report) in trained {
        match model.kind {
            ModelKind::Interior => interior.push(model),
            ModelKind::Edge => edge.push(model),
        }
        reports.push(report);
    }
    Ok((NnBank::new(interior, edge)?, reports))
}

/// Normalized MSE of each interior model on the same held-out gaps of width
/// `gap_width`. Models wider than the gap fill a block that starts with the
/// gap and are scored on the gap tones only.
pub fn gap_nmse(cfg: &TrainingConfig, models: &[&NnModel], gap_width: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    models
        .iter()
        .map(|m| {
            if m.kind != ModelKind::Interior || m.width < gap_width {
                return Err(Error::InvalidParameter(format!(
                    "width-{} {} model cannot fill a width-{gap_width} gap",
                    m.width,
                    m.kind.name()
                )));
            }
            // Same seed for every model, so channel draws line up.
            let data = gap_dataset(cfg, ModelKind::Interior, m.width, gap_width, n, seed)?;
            normalized_mse(m, &data)
        })
        .collect()
}
