//! Laplacian negative log-likelihood, Adam, the plateau learning-rate
//! schedule, datasets built from the encoder, and the training loop.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::{read_wav, AudioBuffer, SAMPLE_RATE};
use crate::codec::{analyze, encode_audio, DecodedStream, EncodeOptions};
use crate::error::{Error, Result};
use crate::mdctnet::{
    backward, expand_frame, forward_with_cache, init_params, prepare_conditioning, read_checkpoint, save_checkpoint,
    write_checkpoint, ConditioningContext, LaplacianParams, ModelConfig, ModelParams,
};
use crate::transform::{MdctFrame, HOP, LONG_LINES};

/// Rate at which training bitstreams are encoded.
pub const TRAINING_KBPS: f64 = 24.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub crop_seconds: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub plateau_epochs: usize,
    pub lr_factor: f64,
    pub max_epochs: usize,
    /// Optimizer steps per epoch; 0 derives it from the training set size.
    pub steps_per_epoch: usize,
    /// Hard cap on the total number of steps; 0 means no cap.
    pub max_steps: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            crop_seconds: 1.0,
            lr: 0.0002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            plateau_epochs: 3,
            lr_factor: 0.5,
            max_epochs: 50,
            steps_per_epoch: 0,
            max_steps: 0,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size >= 1
            && self.crop_seconds > 0.0
            && self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.plateau_epochs >= 1
            && self.lr_factor > 0.0
            && self.lr_factor <= 1.0
            && self.max_epochs >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config {self:?}")))
        }
    }

    /// Crop length in frames (1 s is 62 frames).
    pub fn crop_frames(&self) -> usize {
        ((self.crop_seconds * SAMPLE_RATE as f64 / HOP as f64).floor() as usize).max(1)
    }
}

pub fn nll_loss(mu: f64, s: f64, y: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::NonPositiveScale(s));
    }
    Ok((2.0 * s).ln() + (mu - y).abs() / s)
}

/// (∂/∂mu, ∂/∂s) of [`nll_loss`]; the mu derivative is 0 at mu = y.
pub fn nll_gradients(mu: f64, s: f64, y: f64) -> (f64, f64) {
    let r = mu - y;
    let sign = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    (sign / s, 1.0 / s - r.abs() / (s * s))
}

/// Compensated (Neumaier) running sum. Loss totals run over thousands of
/// terms and finite-difference checks need them accurate to a few ulps.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub fn mean_nll(out: &LaplacianParams, targets: &[f64]) -> Result<f64> {
    if out.mu.len() != targets.len() || targets.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} targets", out.mu.len(), targets.len())));
    }
    let mut sum = CompensatedSum::default();
    for ((&m, &s), &y) in out.mu.iter().zip(&out.scale).zip(targets) {
        sum.add(nll_loss(m, s, y)?);
    }
    Ok(sum.value() / targets.len() as f64)
}

/// Ground-truth perceptual frames and the matching decoder-side
/// conditioning, both on the 768-line grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingItem {
    pub targets: Vec<f64>,
    pub cond: ConditioningContext,
}

impl TrainingItem {
    pub fn frames(&self) -> usize {
        self.cond.frames()
    }

    pub fn from_stream(perceptual: &[MdctFrame], stream: &DecodedStream) -> Result<Self> {
        if perceptual.len() != stream.records.len() {
            return Err(Error::Dataset(format!(
                "{} analysed frames but the bitstream holds {}",
                perceptual.len(),
                stream.records.len()
            )));
        }
        for (i, (f, w)) in perceptual.iter().zip(stream.sequence.frames()).enumerate() {
            if f.window_type != *w {
                return Err(Error::Dataset(format!("window type differs from the bitstream at frame {i}")));
            }
        }
        let cond = prepare_conditioning(&stream.quantized(), &stream.envelopes(), &stream.sequence)?;
        let targets = perceptual.iter().flat_map(|f| expand_frame(&f.lines)).collect();
        Ok(Self { targets, cond })
    }

    /// Encodes `audio` at the training rate and pairs the result with the
    /// encoder's unquantized perceptual spectrum.
    pub fn from_audio(audio: &AudioBuffer) -> Result<Self> {
        let enc = encode_audio(audio, &EncodeOptions::at_kbps(TRAINING_KBPS))?;
        let stream = DecodedStream::parse(&enc.bytes)?;
        Self::from_stream(&enc.perceptual, &stream)
    }

    pub fn crop(&self, start: usize, len: usize) -> Self {
        Self {
            targets: self.targets[start * LONG_LINES..(start + len) * LONG_LINES].to_vec(),
            cond: self.cond.crop(start, len),
        }
    }
}

/// Summed NLL of one item and the gradient of `weight × summed NLL`.
pub fn item_gradients(params: &ModelParams, item: &TrainingItem, weight: f64) -> Result<(f64, ModelParams)> {
    let fwd = forward_with_cache(params, &item.targets, &item.cond)?;
    let n = item.targets.len();
    let mut dmu = vec![0.0; n];
    let mut ds = vec![0.0; n];
    let mut acc = CompensatedSum::default();
    for i in 0..n {
        let (m, s, y) = (fwd.output.mu[i], fwd.output.scale[i], item.targets[i]);
        acc.add(nll_loss(m, s, y)?);
        let (gm, gs) = nll_gradients(m, s, y);
        dmu[i] = weight * gm;
        ds[i] = weight * gs;
    }
    let sum = acc.value();
    if !sum.is_finite() {
        return Err(Error::NonFiniteGradient("loss".into()));
    }
    let grads = backward(params, &fwd, &dmu, &ds)?;
    Ok((sum, grads))
}

/// Mean NLL over every line of every item and its gradient. Items run in
/// parallel; the reduction is in item order.
pub fn batch_gradients(params: &ModelParams, batch: &[TrainingItem]) -> Result<(f64, ModelParams)> {
    let total: usize = batch.iter().map(|b| b.targets.len()).sum();
    if total == 0 {
        return Err(Error::Dataset("empty batch".into()));
    }
    let weight = 1.0 / total as f64;
    let parts = batch
        .par_iter()
        .map(|item| item_gradients(params, item, weight))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = ModelParams::zeros(params.config)?;
    let mut sum = CompensatedSum::default();
    for (s, g) in parts {
        sum.add(s);
        for (a, b) in grads.iter_mut().zip(g.iter()) {
            *a += b;
        }
    }
    Ok((sum.value() * weight, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

fn adam_update<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    state: &mut AdamState,
    cfg: &TrainingConfig,
    lr: f64,
) {
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (((p, &g), m), v) in params.zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        *p -= lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.epsilon);
    }
}

pub fn adam_update_slice(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainingConfig, lr: f64) {
    adam_update(params.iter_mut(), grads.iter(), state, cfg, lr);
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, cfg: &TrainingConfig, lr: f64) {
    adam_update(params.iter_mut(), grads.iter(), state, cfg, lr);
}

/// Halves the learning rate once the best validation loss has stood for
/// `plateau_epochs` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub best: f64,
    pub bad_epochs: usize,
    pub patience: usize,
    pub factor: f64,
}

impl PlateauSchedule {
    pub fn new(cfg: &TrainingConfig) -> Self {
        Self {
            lr: cfg.lr,
            best: f64::INFINITY,
            bad_epochs: 0,
            patience: cfg.plateau_epochs,
            factor: cfg.lr_factor,
        }
    }

    /// Records one epoch; returns true when it set a new best.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.bad_epochs = 0;
            return true;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
        }
        false
    }
}

/// Learning rate in effect after replaying `history` from `initial_lr`.
pub fn lr_schedule_update(history: &[f64], initial_lr: f64, cfg: &TrainingConfig) -> f64 {
    let mut s = PlateauSchedule { lr: initial_lr, ..PlateauSchedule::new(cfg) };
    for &v in history {
        s.observe(v);
    }
    s.lr
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub line: usize,
    pub wav: PathBuf,
    pub bitstream: Option<PathBuf>,
    pub split: Option<Split>,
}

/// Manifest of training audio. One entry per line:
/// `<wav> [<bitstream>] [train|val]`, paths relative to the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub entries: Vec<DatasetEntry>,
}

impl DatasetSpec {
    pub fn parse_manifest(text: &str, base: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut tokens: Vec<&str> = body.split_whitespace().collect();
            let split = match tokens.last().copied() {
                Some("train") => Some(Split::Train),
                Some("val") => Some(Split::Validation),
                _ => None,
            };
            if split.is_some() {
                tokens.pop();
            }
            if tokens.is_empty() || tokens.len() > 2 {
                return Err(Error::Dataset(format!("manifest line {line}: expected <wav> [<bitstream>] [train|val]")));
            }
            let wav = base.join(tokens[0]);
            if !wav.is_file() {
                return Err(Error::Dataset(format!("manifest line {line}: {} not found", wav.display())));
            }
            entries.push(DatasetEntry {
                line,
                wav,
                bitstream: tokens.get(1).map(|b| base.join(b)),
                split,
            });
        }
        if entries.is_empty() {
            return Err(Error::Dataset("manifest lists no audio".into()));
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Encodes every entry that lacks a bitstream into `bitstream_dir`,
    /// then pairs each bitstream with the encoder's analysis of its WAV.
    pub fn prepare(&self, bitstream_dir: &Path) -> Result<Dataset> {
        fs::create_dir_all(bitstream_dir)?;
        let mut labelled = Vec::with_capacity(self.entries.len());
        for e in &self.entries {
            let context = |err: Error| Error::Dataset(format!("manifest line {}: {err}", e.line));
            let audio = read_wav(&e.wav).map_err(context)?;
            let bytes = match &e.bitstream {
                Some(p) if p.is_file() => fs::read(p)?,
                other => {
                    let enc = encode_audio(&audio, &EncodeOptions::at_kbps(TRAINING_KBPS)).map_err(context)?;
                    let out = other.clone().unwrap_or_else(|| {
                        let stem = e.wav.file_stem().and_then(|s| s.to_str()).unwrap_or("item");
                        bitstream_dir.join(format!("{:04}-{stem}.mdcn", e.line))
                    });
                    fs::write(&out, &enc.bytes)?;
                    enc.bytes
                }
            };
            let stream = DecodedStream::parse(&bytes).map_err(context)?;
            let analysis = analyze(&audio).map_err(context)?;
            let item = TrainingItem::from_stream(&analysis.perceptual, &stream).map_err(context)?;
            labelled.push((item, e.split));
        }
        Dataset::from_labelled(labelled)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<TrainingItem>,
    pub validation: Vec<TrainingItem>,
}

impl Dataset {
    /// Unlabelled items train. Without a `val` label the last item is held
    /// out when there are at least two items; a single item validates on
    /// itself.
    pub fn from_labelled(items: Vec<(TrainingItem, Option<Split>)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Dataset("empty dataset".into()));
        }
        let any_val = items.iter().any(|(_, s)| *s == Some(Split::Validation));
        let n = items.len();
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for (i, (item, split)) in items.into_iter().enumerate() {
            let is_val = if any_val {
                split == Some(Split::Validation)
            } else {
                n >= 2 && i == n - 1
            };
            if is_val {
                validation.push(item);
            } else {
                train.push(item);
            }
        }
        if train.is_empty() {
            return Err(Error::Dataset("no training items".into()));
        }
        if validation.is_empty() {
            validation = train.clone();
        }
        Ok(Self { train, validation })
    }

    pub fn single(item: TrainingItem) -> Self {
        Self {
            train: vec![item.clone()],
            validation: vec![item],
        }
    }
}

/// The crops used by optimizer step `step` (1-based). Depends only on the
/// seed and the step, so a resumed run draws the same batches.
pub fn sample_batch(train: &[TrainingItem], cfg: &TrainingConfig, step: u64) -> Vec<TrainingItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(step);
    let crop = cfg.crop_frames();
    (0..cfg.batch_size)
        .map(|_| {
            let item = &train[rng.gen_range(0..train.len())];
            let len = crop.min(item.frames());
            let start = rng.gen_range(0..=item.frames() - len);
            item.crop(start, len)
        })
        .collect()
}

/// Mean NLL over every frame of `items`, evaluated in consecutive crops.
pub fn validation_loss(params: &ModelParams, items: &[TrainingItem], crop_frames: usize) -> Result<f64> {
    let mut chunks = Vec::new();
    for item in items {
        let mut start = 0;
        while start < item.frames() {
            let len = crop_frames.min(item.frames() - start);
            chunks.push(item.crop(start, len));
            start += len;
        }
    }
    let parts = chunks
        .par_iter()
        .map(|c| {
            let out = crate::mdctnet::teacher_forced_forward(params, &c.targets, &c.cond)?;
            Ok(mean_nll(&out, &c.targets)? * c.targets.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let total: usize = chunks.iter().map(|c| c.targets.len()).sum();
    let mut sum = CompensatedSum::default();
    parts.iter().for_each(|&p| sum.add(p));
    Ok(sum.value() / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub train_nll: f64,
    pub val_nll: Option<f64>,
    pub lr: f64,
}

impl StepRecord {
    fn csv(&self) -> String {
        let val = self.val_nll.map(|v| format!("{v:.9}")).unwrap_or_default();
        format!("{},{:.9},{},{:e}", self.step, self.train_nll, val, self.lr)
    }
}

pub const LOSS_CSV_HEADER: &str = "step,train_nll,val_nll,lr";

#[derive(Debug, Clone)]
pub struct TrainOutputs {
    /// Best-validation checkpoint.
    pub checkpoint: PathBuf,
    pub loss_csv: PathBuf,
}

impl TrainOutputs {
    /// Sidecar holding the latest weights and optimizer state.
    pub fn state_path(&self) -> PathBuf {
        let mut s = self.checkpoint.clone().into_os_string();
        s.push(".state");
        PathBuf::from(s)
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Steps run in this invocation.
    pub history: Vec<StepRecord>,
    pub best_val: f64,
    pub params: ModelParams,
    pub steps_per_epoch: usize,
}

const STATE_MAGIC: [u8; 4] = *b"MDNS";
const STATE_VERSION: u32 = 1;

struct TrainState {
    params: ModelParams,
    adam: AdamState,
    schedule: PlateauSchedule,
    step: u64,
}

fn write_state(path: &Path, s: &TrainState) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(&STATE_MAGIC)?;
        w.write_all(&STATE_VERSION.to_le_bytes())?;
        let mut ckpt = Vec::new();
        write_checkpoint(&mut ckpt, &s.params)?;
        w.write_all(&(ckpt.len() as u64).to_le_bytes())?;
        w.write_all(&ckpt)?;
        w.write_all(&s.step.to_le_bytes())?;
        w.write_all(&s.adam.t.to_le_bytes())?;
        w.write_all(&s.schedule.lr.to_le_bytes())?;
        w.write_all(&s.schedule.best.to_le_bytes())?;
        w.write_all(&(s.schedule.bad_epochs as u64).to_le_bytes())?;
        for v in s.adam.m.iter().chain(&s.adam.v) {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

fn read_state(path: &Path, cfg: &TrainingConfig) -> Result<TrainState> {
    let mut r = BufReader::new(File::open(path)?);
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    if b4 != STATE_MAGIC {
        return Err(bad("not a training state file"));
    }
    r.read_exact(&mut b4)?;
    if u32::from_le_bytes(b4) != STATE_VERSION {
        return Err(bad("unsupported state version"));
    }
    let mut u64_field = |r: &mut BufReader<File>| -> Result<u64> {
        r.read_exact(&mut b8)?;
        Ok(u64::from_le_bytes(b8))
    };
    let len = u64_field(&mut r)? as usize;
    let mut ckpt = vec![0u8; len];
    r.read_exact(&mut ckpt)?;
    let params = read_checkpoint(&ckpt[..])?;
    let step = u64_field(&mut r)?;
    let t = u64_field(&mut r)?;
    let lr = f64::from_bits(u64_field(&mut r)?);
    let best = f64::from_bits(u64_field(&mut r)?);
    let bad_epochs = u64_field(&mut r)? as usize;
    let n = params.param_count();
    let mut mv = Vec::with_capacity(2 * n);
    for _ in 0..2 * n {
        mv.push(f64::from_bits(u64_field(&mut r)?));
    }
    let v = mv.split_off(n);
    Ok(TrainState {
        params,
        adam: AdamState { m: mv, v, t },
        schedule: PlateauSchedule {
            lr,
            best,
            bad_epochs,
            ..PlateauSchedule::new(cfg)
        },
        step,
    })
}

/// Rewrites the loss CSV keeping only rows up to `step`.
fn trim_csv(path: &Path, step: u64) -> Result<()> {
    let text = fs::read_to_string(path).unwrap_or_default();
    let mut out = String::from(LOSS_CSV_HEADER);
    out.push('\n');
    for line in text.lines().skip(1) {
        match line.split(',').next().and_then(|s| s.parse::<u64>().ok()) {
            Some(s) if s <= step => {
                out.push_str(line);
                out.push('\n');
            }
            _ => {}
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn train_loop(
    dataset: &Dataset,
    model: &ModelConfig,
    cfg: &TrainingConfig,
    out: &TrainOutputs,
    resume: bool,
) -> Result<TrainReport> {
    cfg.validate()?;
    model.validate()?;
    if dataset.train.is_empty() || dataset.validation.is_empty() {
        return Err(Error::Dataset("empty dataset".into()));
    }
    let crop = cfg.crop_frames();
    let steps_per_epoch = if cfg.steps_per_epoch > 0 {
        cfg.steps_per_epoch
    } else {
        let frames: usize = dataset.train.iter().map(TrainingItem::frames).sum();
        frames.div_ceil(cfg.batch_size * crop).max(1)
    };
    let mut total_steps = (cfg.max_epochs * steps_per_epoch) as u64;
    if cfg.max_steps > 0 {
        total_steps = total_steps.min(cfg.max_steps as u64);
    }

    let state_path = out.state_path();
    let mut state = if resume {
        let s = read_state(&state_path, cfg)?;
        if s.params.config != *model {
            return Err(Error::Checkpoint("saved state was trained with a different model config".into()));
        }
        trim_csv(&out.loss_csv, s.step)?;
        s
    } else {
        let params = init_params(model, cfg.seed)?;
        let n = params.param_count();
        fs::write(&out.loss_csv, format!("{LOSS_CSV_HEADER}\n"))?;
        TrainState {
            params,
            adam: AdamState::new(n),
            schedule: PlateauSchedule::new(cfg),
            step: 0,
        }
    };
    let mut csv = OpenOptions::new().append(true).open(&out.loss_csv)?;
    let mut history = Vec::new();

    while state.step < total_steps {
        let step = state.step + 1;
        let batch = sample_batch(&dataset.train, cfg, step);
        let (loss, grads) = batch_gradients(&state.params, &batch)?;
        let lr = state.schedule.lr;
        adam_step(&mut state.params, &grads, &mut state.adam, cfg, lr);
        state.params.round_to_f32();
        state.params.check_finite()?;
        state.step = step;

        let mut val_nll = None;
        if step % steps_per_epoch as u64 == 0 || step == total_steps {
            let v = validation_loss(&state.params, &dataset.validation, crop)?;
            if state.schedule.observe(v) {
                save_checkpoint(&out.checkpoint, &state.params)?;
            }
            val_nll = Some(v);
        }
        let record = StepRecord {
            step,
            train_nll: loss,
            val_nll,
            lr,
        };
        writeln!(csv, "{}", record.csv())?;
        history.push(record);
        if val_nll.is_some() {
            csv.flush()?;
            write_state(&state_path, &state)?;
        }
    }
    Ok(TrainReport {
        history,
        best_val: state.schedule.best,
        params: state.params,
        steps_per_epoch,
    })
}
