//! Adam fine-tuning on serialized strategy targets, single-stage and two-stage.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Image, Vocab, VqaSample};
use crate::error::{Error, Result};
use crate::model::{Example, Graph, MedThinkModel};
use crate::numerics::{NamedTensors, Tape, Tensor};
use crate::scalar::Scalar;
use crate::strategies::{self, Strategy};

/// Epoch presets for the three benchmark datasets.
pub const EPOCH_PRESETS: [(&str, usize); 3] = [("R-RAD", 300), ("R-SLAKE", 150), ("R-Path", 50)];

pub fn epoch_preset(dataset: &str) -> Option<usize> {
    EPOCH_PRESETS.iter().find(|(d, _)| *d == dataset).map(|&(_, e)| e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub stage2_learning_rate: f64,
    pub stage2_epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; off unless set.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            epochs: 60,
            batch_size: 32,
            stage2_learning_rate: 5e-5,
            stage2_epochs: 20,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("learning_rate", self.learning_rate)?;
        positive("stage2_learning_rate", self.stage2_learning_rate)?;
        positive("epsilon", self.epsilon)?;
        if let Some(c) = self.clip_norm {
            positive("clip_norm", c)?;
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 || self.stage2_epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The configuration used for the stage-2 model.
    pub fn stage2(&self) -> Self {
        Self {
            learning_rate: self.stage2_learning_rate,
            epochs: self.stage2_epochs,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub strategy: Strategy,
    pub epoch_losses: Vec<f64>,
    pub checkpoint: Option<PathBuf>,
    pub seconds: f64,
    pub seed: u64,
    pub config: TrainConfig,
}

/// Which sequences a model is trained to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Single(Strategy),
    Stage1,
    Stage2,
}

impl Phase {
    pub fn strategy(self) -> Strategy {
        match self {
            Phase::Single(s) => s,
            Phase::Stage1 | Phase::Stage2 => Strategy::TwoStageReasoning,
        }
    }
}

fn rationale_of(sample: &VqaSample) -> Result<&str> {
    match sample.rationale.as_deref() {
        Some(r) if !r.trim().is_empty() => Ok(r),
        _ => Err(Error::Dataset(format!("sample {} has no rationale", sample.id))),
    }
}

/// Encoder text and decoder target text for one sample. `rationale`
/// overrides the sample's own rationale (used by the stage-2 ablation).
pub fn phase_texts(phase: Phase, sample: &VqaSample, rationale: Option<&str>) -> Result<(String, String)> {
    let r = || rationale.map_or_else(|| rationale_of(sample), Ok);
    Ok(match phase {
        Phase::Single(Strategy::TwoStageReasoning) => {
            return Err(Error::contract("two-stage reasoning trains two models; use fit_two_stage"))
        }
        Phase::Single(Strategy::NoRationale) => (
            sample.question.clone(),
            strategies::make_target(Strategy::NoRationale, &sample.answer, "")?,
        ),
        Phase::Single(s) => (sample.question.clone(), strategies::make_target(s, &sample.answer, r()?)?),
        Phase::Stage1 => (sample.question.clone(), strategies::stage1_target(r()?)?),
        Phase::Stage2 => (
            strategies::stage2_input(&sample.question, r()?),
            strategies::stage2_target(&sample.answer)?,
        ),
    })
}

/// Teacher-forced examples for `phase`. `images[i]` belongs to `samples[i]`.
pub fn prepare_examples<S: Scalar>(
    model: &MedThinkModel<S>,
    vocab: &Vocab,
    phase: Phase,
    samples: &[VqaSample],
    images: &[Image],
) -> Result<Vec<Example<S>>> {
    if samples.len() != images.len() {
        return Err(Error::contract("one image per sample required"));
    }
    let n_max = model.config().n_max;
    samples
        .iter()
        .zip(images)
        .map(|(sample, image)| {
            if phase == Phase::Stage2 {
                strategies::check_stage2_fits(&sample.question, n_max)?;
            }
            let (input, target) = phase_texts(phase, sample, None)?;
            Ok(Example {
                input: vocab.encode(&input, n_max)?.unpadded().to_vec(),
                patches: model.patches(image)?,
                target: vocab.encode(&target, n_max)?.unpadded().to_vec(),
            })
        })
        .collect()
}

/// Adaptive moment estimation state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub step: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &[Tensor<S>]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected update with learning rate `lr`.
    pub fn update(&mut self, params: &mut [Tensor<S>], grads: &[Vec<S>], lr: f64, config: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (S::of(config.beta1), S::of(config.beta2));
        let c1 = S::one() - b1.powi(self.step as i32);
        let c2 = S::one() - b2.powi(self.step as i32);
        let (lr, eps) = (S::of(lr), S::of(config.epsilon));
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (S::one() - b1) * g[i];
                v[i] = b2 * v[i] + (S::one() - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Loss sum, token count and per-parameter gradient for one example.
type ExampleGrad<S> = (S, usize, Vec<Vec<S>>);

/// Sum of token NLL over `batch` and its gradient, reduced in index order.
pub fn batch_gradient<S: Scalar>(model: &MedThinkModel<S>, batch: &[&Example<S>]) -> Result<(f64, usize, Vec<Vec<S>>)> {
    let per_example: Vec<Result<ExampleGrad<S>>> = batch
        .par_iter()
        .map(|ex| {
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let graph = Graph::new(model, &vars)?;
            let (sum, count) = graph.example_loss(&mut tape, ex)?;
            let value = tape.value(sum).data()[0];
            tape.backward(sum)?;
            let grads = vars
                .iter()
                .zip(model.params())
                .map(|(&v, p)| tape.take_grad(v).unwrap_or_else(|| vec![S::zero(); p.len()]))
                .collect();
            Ok((value, count, grads))
        })
        .collect();
    let mut total = 0.0;
    let mut count = 0;
    let mut grads: Vec<Vec<S>> = model.params().iter().map(|p| vec![S::zero(); p.len()]).collect();
    for r in per_example {
        let (value, n, g) = r?;
        total += value.as_f64();
        count += n;
        for (acc, part) in grads.iter_mut().zip(g) {
            for (a, x) in acc.iter_mut().zip(part) {
                *a += x;
            }
        }
    }
    Ok((total, count, grads))
}

fn clip<S: Scalar>(grads: &mut [Vec<S>], max_norm: f64) {
    let norm = grads.iter().flatten().map(|g| g.as_f64() * g.as_f64()).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = S::of(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g *= k);
    }
}

/// Optimizer state that survives a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainer<S> {
    pub config: TrainConfig,
    pub adam: Adam<S>,
    pub epoch_losses: Vec<f64>,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: &MedThinkModel<S>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            adam: Adam::new(model.params()),
            epoch_losses: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch_losses.len()
    }

    /// Visiting order for `epoch` (0-based); a pure function of seed and epoch.
    pub fn order(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx
    }

    /// One Adam step on the token-weighted mean loss of `batch`; returns the
    /// summed loss and token count before the step.
    pub fn step(&mut self, model: &mut MedThinkModel<S>, batch: &[&Example<S>]) -> Result<(f64, usize)> {
        let (total, count, mut grads) = batch_gradient(model, batch)?;
        if count == 0 {
            return Err(Error::DegenerateBatch);
        }
        let scale = S::of(1.0 / count as f64);
        grads.iter_mut().flatten().for_each(|g| *g *= scale);
        if let Some(c) = self.config.clip_norm {
            clip(&mut grads, c);
        }
        self.adam.update(model.params_mut(), &grads, self.config.learning_rate, &self.config);
        Ok((total, count))
    }

    /// Runs the next epoch and records its token-weighted mean loss.
    pub fn run_epoch(&mut self, model: &mut MedThinkModel<S>, examples: &[Example<S>]) -> Result<f64> {
        if examples.is_empty() {
            return Err(Error::Dataset("training set is empty".into()));
        }
        let epoch = self.epochs_done();
        let order = self.order(epoch, examples.len());
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            let batch: Vec<&Example<S>> = chunk.iter().map(|&i| &examples[i]).collect();
            let (t, c) = self.step(model, &batch)?;
            if !t.is_finite() {
                return Err(Error::Divergence { epoch: epoch + 1, loss: t });
            }
            total += t;
            count += c;
        }
        let mean = total / count as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { epoch: epoch + 1, loss: mean });
        }
        self.epoch_losses.push(mean);
        Ok(mean)
    }

    /// Trains until `config.epochs` epochs are recorded.
    pub fn run(&mut self, model: &mut MedThinkModel<S>, examples: &[Example<S>], mut on_epoch: impl FnMut(usize, f64)) -> Result<()> {
        while self.epochs_done() < self.config.epochs {
            let loss = self.run_epoch(model, examples)?;
            on_epoch(self.epochs_done(), loss);
        }
        Ok(())
    }
}

/// Trains `model` in place for `config.epochs` epochs.
pub fn fit<S: Scalar>(
    model: &mut MedThinkModel<S>,
    examples: &[Example<S>],
    strategy: Strategy,
    config: &TrainConfig,
) -> Result<TrainReport> {
    if strategy == Strategy::TwoStageReasoning {
        return Err(Error::contract("two-stage reasoning trains two models; use fit_two_stage"));
    }
    if config.epochs == 0 {
        return Err(Error::contract("epochs must be at least 1"));
    }
    train(model, examples, strategy, config)
}

fn train<S: Scalar>(
    model: &mut MedThinkModel<S>,
    examples: &[Example<S>],
    strategy: Strategy,
    config: &TrainConfig,
) -> Result<TrainReport> {
    let start = Instant::now();
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.run(model, examples, |_, _| {})?;
    Ok(TrainReport {
        strategy,
        epoch_losses: trainer.epoch_losses,
        checkpoint: None,
        seconds: start.elapsed().as_secs_f64(),
        seed: config.seed,
        config: config.clone(),
    })
}

/// Trains the rationale model on `Rationale: {R}` targets with `config`,
/// then the answer model on gold-rationale stage-2 inputs with
/// `config.stage2()`. The models share nothing.
pub fn fit_two_stage<S: Scalar>(
    stage1: &mut MedThinkModel<S>,
    stage2: &mut MedThinkModel<S>,
    vocab: &Vocab,
    samples: &[VqaSample],
    images: &[Image],
    config: &TrainConfig,
) -> Result<(TrainReport, TrainReport)> {
    for s in samples {
        rationale_of(s)?;
    }
    let first = prepare_examples(stage1, vocab, Phase::Stage1, samples, images)?;
    let second = prepare_examples(stage2, vocab, Phase::Stage2, samples, images)?;
    let r1 = train(stage1, &first, Strategy::TwoStageReasoning, config)?;
    let r2 = train(stage2, &second, Strategy::TwoStageReasoning, &config.stage2())?;
    Ok((r1, r2))
}

/// A model with its tokenizer, the phase it was trained for, and optionally
/// the optimizer state needed to resume.
#[derive(Debug, Clone)]
pub struct Checkpoint<S> {
    pub model: MedThinkModel<S>,
    pub vocab: Vocab,
    pub phase: Phase,
    pub trainer: Option<Trainer<S>>,
}

const ADAM_M: &str = "aux.adam.m.";
const ADAM_V: &str = "aux.adam.v.";

impl<S: Scalar> Checkpoint<S> {
    pub fn to_named_tensors(&self) -> Result<NamedTensors<S>> {
        let mut c = self.model.to_named_tensors();
        c.push_meta("vocab", self.vocab.to_json())?;
        c.push_meta("phase", serde_json::to_string(&self.phase).expect("phase serializes"))?;
        if let Some(t) = &self.trainer {
            c.push_meta("train_config", serde_json::to_string(&t.config).expect("config serializes"))?;
            c.push_meta("epoch_losses", serde_json::to_string(&t.epoch_losses).expect("losses serialize"))?;
            c.push_meta("adam_step", t.adam.step.to_string())?;
            let names: Vec<String> = self.model.param_names().map(str::to_string).collect();
            for (name, m) in names.iter().zip(&t.adam.m) {
                c.push(&format!("{ADAM_M}{name}"), m.clone())?;
            }
            for (name, v) in names.iter().zip(&t.adam.v) {
                c.push(&format!("{ADAM_V}{name}"), v.clone())?;
            }
        }
        Ok(c)
    }

    pub fn from_named_tensors(c: &NamedTensors<S>) -> Result<Self> {
        let model = MedThinkModel::from_named_tensors(c)?;
        let meta = |key: &str| c.meta(key).ok_or_else(|| Error::Checkpoint(format!("missing metadata {key:?}")));
        let json_err = |key: &str, e: serde_json::Error| Error::Checkpoint(format!("{key}: {e}"));
        let vocab = Vocab::from_json(meta("vocab")?)?;
        if vocab.len() != model.config().vocab_size {
            return Err(Error::Checkpoint(format!(
                "vocabulary has {} entries, model expects {}",
                vocab.len(),
                model.config().vocab_size
            )));
        }
        let phase = serde_json::from_str(meta("phase")?).map_err(|e| json_err("phase", e))?;
        let trainer = match c.meta("train_config") {
            None => None,
            Some(text) => {
                let config: TrainConfig = serde_json::from_str(text).map_err(|e| json_err("train_config", e))?;
                let epoch_losses = serde_json::from_str(meta("epoch_losses")?).map_err(|e| json_err("epoch_losses", e))?;
                let step = meta("adam_step")?
                    .parse()
                    .map_err(|_| Error::Checkpoint("adam_step is not an integer".into()))?;
                let mut adam = Adam::new(model.params());
                for (i, name) in model.param_names().enumerate() {
                    for (prefix, slot) in [(ADAM_M, &mut adam.m[i]), (ADAM_V, &mut adam.v[i])] {
                        let t = c
                            .get(&format!("{prefix}{name}"))
                            .ok_or_else(|| Error::Checkpoint(format!("missing optimizer tensor {prefix}{name}")))?;
                        if t.shape() != slot.shape() {
                            return Err(Error::Checkpoint(format!("optimizer tensor {prefix}{name} has wrong shape")));
                        }
                        *slot = t.clone();
                    }
                }
                adam.step = step;
                Some(Trainer { config, adam, epoch_losses })
            }
        };
        Ok(Self { model, vocab, phase, trainer })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_named_tensors()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_named_tensors(&NamedTensors::load(path)?)
    }
}
