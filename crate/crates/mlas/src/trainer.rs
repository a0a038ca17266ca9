//! Optimization loop: plain SGD with staircase learning-rate decay, L2
//! penalty, delayed transient Gaussian weight noise, gradient-norm
//! clipping and validation-driven checkpoint selection.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{stack_frames, Corpus, FeatureSequence, Utterance};
use crate::error::{Error, Result};
use crate::langpack::{build_union, UnionVocab};
use crate::model::{
    bind_parts, save_checkpoint, training_loss, Checkpoint, LasParams, ModelConfig, Variant,
};
use crate::numerics::{Graph, NamedTensors};
use crate::rng::Rng;

/// Default stacking window (consecutive frames concatenated).
pub const STACK_WINDOW: usize = 8;
/// Default stacking stride.
pub const STACK_STRIDE: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Multiplier applied once per `decay_interval` steps (staircase).
    pub decay_rate: f64,
    pub decay_interval: usize,
    pub l2_coefficient: f64,
    /// Stddev of the transient Gaussian weight noise; the full-scale
    /// recipe uses 0.01 (monolingual) / 0.0075 (multilingual).
    pub noise_stddev: f64,
    pub noise_start_step: usize,
    pub max_steps: usize,
    pub batch_size: usize,
    pub eval_interval: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1.0,
            decay_rate: 0.96,
            decay_interval: 500,
            l2_coefficient: 1e-6,
            noise_stddev: 0.0075,
            noise_start_step: 1000,
            max_steps: 12000,
            batch_size: 8,
            eval_interval: 500,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_lr <= 0.0 {
            return Err(Error::InvalidConfig("initial_lr must be positive".into()));
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decay_rate {} outside (0, 1]",
                self.decay_rate
            )));
        }
        if self.decay_interval == 0 || self.batch_size == 0 || self.eval_interval == 0 {
            return Err(Error::InvalidConfig(
                "decay_interval, batch_size and eval_interval must be positive".into(),
            ));
        }
        if self.l2_coefficient < 0.0 || self.noise_stddev < 0.0 {
            return Err(Error::InvalidConfig(
                "l2_coefficient and noise_stddev must be nonnegative".into(),
            ));
        }
        if self.clip_norm <= 0.0 {
            return Err(Error::InvalidConfig("clip_norm must be positive".into()));
        }
        Ok(())
    }

    /// Staircase decay: `initial_lr * decay_rate^(step / decay_interval)`.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.initial_lr * self.decay_rate.powi((step / self.decay_interval) as i32)
    }
}

/// Mutable optimizer state.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub step: usize,
    pub tensors: NamedTensors,
    pub best_validation_loss: f64,
    pub rng: Rng,
}

impl TrainState {
    pub fn new(tensors: NamedTensors, cfg: &TrainConfig) -> Self {
        TrainState {
            step: 0,
            tensors,
            best_validation_loss: f64::INFINITY,
            rng: Rng::for_label(cfg.seed, "weight-noise"),
        }
    }
}

/// One SGD step.
///
/// When weight noise is active (`step >= noise_start_step`), the loss and
/// gradients are evaluated at `params + eps` with `eps ~ N(0, stddev^2)`
/// drawn per component, but the update applies to the clean parameters:
/// the noise is transient and never persisted. The update is
/// `-lr(step) * (grad + 2 * l2 * param)` after clipping the data gradient
/// to `clip_norm` (global norm). The returned loss is the evaluated data
/// loss plus the exact penalty `l2 * sum of squared parameters`.
pub fn train_step<F>(state: &mut TrainState, cfg: &TrainConfig, eval: F) -> Result<f64>
where
    F: FnOnce(&NamedTensors) -> Result<(f64, Vec<Vec<f64>>)>,
{
    let noisy = cfg.noise_stddev > 0.0 && state.step >= cfg.noise_start_step;
    let (data_loss, mut grads) = if noisy {
        let mut perturbed = state.tensors.clone();
        for i in 0..perturbed.len() {
            let (_, t) = perturbed.at_mut(i);
            for v in t.data.iter_mut() {
                *v += cfg.noise_stddev * state.rng.normal();
            }
        }
        eval(&perturbed)?
    } else {
        eval(&state.tensors)?
    };
    if !data_loss.is_finite() {
        return Err(Error::Diverged {
            step: state.step,
            loss: data_loss,
        });
    }
    if grads.len() != state.tensors.len() {
        return Err(Error::Shape(format!(
            "train_step: {} gradients for {} tensors",
            grads.len(),
            state.tensors.len()
        )));
    }
    let reported = data_loss + cfg.l2_coefficient * state.tensors.squared_norm();

    let norm: f64 = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > cfg.clip_norm {
        let scale = cfg.clip_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }

    let lr = cfg.lr_at(state.step);
    let l2 = cfg.l2_coefficient;
    for (i, grad) in grads.iter().enumerate() {
        let (name, tensor) = state.tensors.at_mut(i);
        if grad.len() != tensor.len() {
            return Err(Error::Shape(format!(
                "train_step: gradient length {} for parameter {name:?} of {}",
                grad.len(),
                tensor.len()
            )));
        }
        for (p, g) in tensor.data.iter_mut().zip(grad) {
            *p -= lr * (g + 2.0 * l2 * *p);
        }
    }
    state.step += 1;
    Ok(reported)
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Loss components per eval point, kept for the multitask variant.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentEntry {
    pub step: usize,
    pub las_loss: f64,
    pub lid_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the best validation loss seen (the initial
    /// parameters when no evaluation ever ran).
    pub best: Checkpoint,
    pub final_params: LasParams,
    pub log: Vec<LogEntry>,
    pub components: Vec<ComponentEntry>,
}

struct PreparedUtterance {
    stacked: FeatureSequence,
    targets: Vec<usize>,
    lang: usize,
}

fn prepare(
    utts: &[Utterance],
    vocab: &UnionVocab,
    window: usize,
    stride: usize,
) -> Result<Vec<PreparedUtterance>> {
    utts.iter()
        .map(|u| {
            let lang = vocab.language_index(&u.language).ok_or_else(|| {
                Error::Registry(format!(
                    "utterance {} has unregistered language {:?}",
                    u.id, u.language
                ))
            })?;
            Ok(PreparedUtterance {
                stacked: stack_frames(&u.features, window, stride)?,
                targets: vocab.encode_transcript(&u.transcript)?,
                lang,
            })
        })
        .collect()
}

fn batch_eval(
    model: &ModelConfig,
    prepared: &[PreparedUtterance],
    batch: &[usize],
    tensors: &NamedTensors,
) -> Result<(f64, Vec<Vec<f64>>, f64, f64)> {
    let mut g = Graph::new();
    let bound = bind_parts(&mut g, model, tensors)?;
    let mut terms = Vec::with_capacity(batch.len());
    let mut las_sum = 0.0;
    let mut lid_sum = 0.0;
    for &ix in batch {
        let pu = &prepared[ix];
        let breakdown = training_loss(&mut g, &bound, model, &pu.stacked, &pu.targets, pu.lang)?;
        las_sum += g.scalar(breakdown.las);
        if let Some(lid) = breakdown.lid {
            lid_sum += g.scalar(lid);
        }
        terms.push(breakdown.total);
    }
    let sum = g.add_n(&terms)?;
    let mean = g.scale(sum, 1.0 / batch.len() as f64);
    g.backward(mean)?;
    let grads = bound.leaf_ids.iter().map(|&id| g.grad(id).to_vec()).collect();
    let n = batch.len() as f64;
    Ok((g.scalar(mean), grads, las_sum / n, lid_sum / n))
}

fn mean_data_loss(
    model: &ModelConfig,
    prepared: &[PreparedUtterance],
    tensors: &NamedTensors,
) -> Result<f64> {
    let mut total = 0.0;
    for pu in prepared {
        let mut g = Graph::new();
        let bound = bind_parts(&mut g, model, tensors)?;
        let breakdown = training_loss(&mut g, &bound, model, &pu.stacked, &pu.targets, pu.lang)?;
        total += g.scalar(breakdown.total);
    }
    Ok(total / prepared.len().max(1) as f64)
}

/// A full training run over one corpus and vocabulary.
pub struct TrainSession<'a> {
    pub corpus: &'a Corpus,
    pub vocab: &'a UnionVocab,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub stack_window: usize,
    pub stack_stride: usize,
    /// Checkpoint written whenever validation improves.
    pub checkpoint_path: Option<PathBuf>,
    pub log_path: Option<PathBuf>,
    /// Per-component loss log (written for the multitask variant).
    pub components_path: Option<PathBuf>,
    pub resume_from: Option<Checkpoint>,
}

impl<'a> TrainSession<'a> {
    pub fn new(
        corpus: &'a Corpus,
        vocab: &'a UnionVocab,
        model: ModelConfig,
        train: TrainConfig,
    ) -> Self {
        TrainSession {
            corpus,
            vocab,
            model,
            train,
            stack_window: STACK_WINDOW,
            stack_stride: STACK_STRIDE,
            checkpoint_path: None,
            log_path: None,
            components_path: None,
            resume_from: None,
        }
    }

    /// Run the loop: evaluate validation loss every `eval_interval` steps,
    /// persist a checkpoint whenever it improves, and log
    /// `(step, train loss, validation loss, lr)` per evaluation.
    pub fn run(&self) -> Result<TrainOutcome> {
        self.train.validate()?;
        self.model.validate()?;
        let cfg = &self.train;
        let fingerprint = self.vocab.fingerprint();

        let prepared_train = prepare(
            &self.corpus.train,
            self.vocab,
            self.stack_window,
            self.stack_stride,
        )?;
        if prepared_train.is_empty() {
            return Err(Error::InvalidConfig("empty training split".into()));
        }
        let prepared_val = prepare(
            &self.corpus.validation,
            self.vocab,
            self.stack_window,
            self.stack_stride,
        )?;

        let (init_params, start_step) = match &self.resume_from {
            Some(ckpt) => {
                if ckpt.params.vocab_fingerprint != fingerprint {
                    return Err(Error::Fingerprint {
                        checkpoint: ckpt.params.vocab_fingerprint,
                        registry: fingerprint,
                    });
                }
                (ckpt.params.clone(), ckpt.step as usize)
            }
            None => (
                LasParams::init(self.model.clone(), fingerprint, cfg.seed)?,
                0,
            ),
        };

        let mut state = TrainState::new(init_params.tensors.clone(), cfg);
        state.step = start_step;
        let mut best = Checkpoint {
            params: init_params.clone(),
            seed: cfg.seed,
            step: start_step as u64,
        };
        let mut log = Vec::new();
        let mut components = Vec::new();

        let mut order: Vec<usize> = Vec::new();
        let mut shuffle_rng = Rng::for_label(cfg.seed, "batching");
        // The first pass over the data runs shortest-first: attention has
        // to lock onto the alignment before long utterances are useful.
        let mut first_epoch = start_step == 0;
        let mut running_loss = 0.0;
        let mut running_las = 0.0;
        let mut running_lid = 0.0;
        let mut since_eval = 0usize;

        while state.step < cfg.max_steps {
            let mut batch = Vec::with_capacity(cfg.batch_size);
            while batch.len() < cfg.batch_size {
                if order.is_empty() {
                    order = (0..prepared_train.len()).collect();
                    if first_epoch {
                        // Consumed from the back, so sort descending.
                        order.sort_by_key(|&i| {
                            std::cmp::Reverse(prepared_train[i].stacked.num_frames())
                        });
                        first_epoch = false;
                    } else {
                        shuffle_rng.shuffle(&mut order);
                    }
                }
                batch.push(order.pop().unwrap());
            }
            let mut las_mean = 0.0;
            let mut lid_mean = 0.0;
            let loss = train_step(&mut state, cfg, |tensors| {
                let (loss, grads, las, lid) =
                    batch_eval(&self.model, &prepared_train, &batch, tensors)?;
                las_mean = las;
                lid_mean = lid;
                Ok((loss, grads))
            })?;
            running_loss += loss;
            running_las += las_mean;
            running_lid += lid_mean;
            since_eval += 1;

            let completed = state.step;
            if completed % cfg.eval_interval == 0 || completed == cfg.max_steps {
                let val_loss = if prepared_val.is_empty() {
                    f64::NAN
                } else {
                    mean_data_loss(&self.model, &prepared_val, &state.tensors)?
                };
                log.push(LogEntry {
                    step: completed,
                    train_loss: running_loss / since_eval as f64,
                    val_loss,
                    lr: cfg.lr_at(completed - 1),
                });
                if self.model.variant.has_lid_head() {
                    components.push(ComponentEntry {
                        step: completed,
                        las_loss: running_las / since_eval as f64,
                        lid_loss: running_lid / since_eval as f64,
                    });
                }
                running_loss = 0.0;
                running_las = 0.0;
                running_lid = 0.0;
                since_eval = 0;
                if val_loss.is_finite() && val_loss < state.best_validation_loss {
                    state.best_validation_loss = val_loss;
                    best = Checkpoint {
                        params: LasParams {
                            config: self.model.clone(),
                            tensors: state.tensors.clone(),
                            vocab_fingerprint: fingerprint,
                        },
                        seed: cfg.seed,
                        step: completed as u64,
                    };
                    if let Some(path) = &self.checkpoint_path {
                        save_checkpoint(path, &best)?;
                    }
                }
            }
        }

        if let Some(path) = &self.log_path {
            write_log(path, &log)?;
        }
        if let Some(path) = &self.components_path {
            if self.model.variant.has_lid_head() {
                write_components(path, &components)?;
            }
        }

        Ok(TrainOutcome {
            best,
            final_params: LasParams {
                config: self.model.clone(),
                tensors: state.tensors,
                vocab_fingerprint: fingerprint,
            },
            log,
            components,
        })
    }
}

pub fn write_log(path: &Path, log: &[LogEntry]) -> Result<()> {
    let mut text = String::from("step,train_loss,val_loss,lr\n");
    for e in log {
        text.push_str(&format!("{},{},{},{}\n", e.step, e.train_loss, e.val_loss, e.lr));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_components(path: &Path, components: &[ComponentEntry]) -> Result<()> {
    let mut text = String::from("step,las_loss,lid_loss\n");
    for e in components {
        text.push_str(&format!("{},{},{}\n", e.step, e.las_loss, e.lid_loss));
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Outcome of one monolingual training run.
#[derive(Debug)]
pub struct MonolingualOutcome {
    pub language: String,
    pub vocab: UnionVocab,
    pub outcome: TrainOutcome,
}

/// Train one model per language, each on that language's subset only,
/// with a per-language vocabulary (that language's charset plus the
/// specials) and shared hyperparameters.
pub fn train_monolingual_suite(
    corpus: &Corpus,
    languages: Option<&[String]>,
    template: &ModelConfig,
    train: &TrainConfig,
    stack_window: usize,
    stack_stride: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<MonolingualOutcome>> {
    let selected: Vec<String> = match languages {
        Some(list) => list.to_vec(),
        None => corpus
            .specs
            .iter()
            .map(|s| s.id.clone())
            .filter(|id| corpus.train.iter().any(|u| &u.language == id))
            .collect(),
    };
    if selected.is_empty() {
        return Err(Error::InvalidConfig("no languages to train on".into()));
    }
    let mut outcomes = Vec::with_capacity(selected.len());
    for lang in &selected {
        let spec = corpus
            .specs
            .iter()
            .find(|s| &s.id == lang)
            .ok_or_else(|| Error::Registry(format!("unknown language {lang:?}")))?;
        let sub = Corpus {
            specs: vec![spec.clone()],
            train: corpus.language_subset(&corpus.train, lang),
            validation: corpus.language_subset(&corpus.validation, lang),
            test: corpus.language_subset(&corpus.test, lang),
            seed: corpus.seed,
        };
        if sub.train.is_empty() {
            return Err(Error::InvalidConfig(format!(
                "language {lang:?} has no training utterances"
            )));
        }
        let vocab = build_union(&sub.specs)?;
        let mut model = template.clone();
        model.variant = Variant::Joint;
        model.vocab_size = vocab.size();
        model.num_languages = 1;
        let mut session = TrainSession::new(&sub, &vocab, model, train.clone());
        session.stack_window = stack_window;
        session.stack_stride = stack_stride;
        if let Some(dir) = out_dir {
            session.checkpoint_path = Some(dir.join(format!("ckpt-monolingual-{lang}.bin")));
            session.log_path = Some(dir.join(format!("train-monolingual-{lang}.csv")));
        }
        let outcome = session.run()?;
        outcomes.push(MonolingualOutcome {
            language: lang.clone(),
            vocab,
            outcome,
        });
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusConfig, CorpusGenerator};
    use crate::numerics::Tensor;

    fn single_tensor_state(data: Vec<f64>, cfg: &TrainConfig) -> TrainState {
        let mut t = NamedTensors::new();
        t.insert("w", Tensor::vector(data)).unwrap();
        TrainState::new(t, cfg)
    }

    #[test]
    fn zero_gradient_zero_l2_leaves_params_unchanged() {
        let cfg = TrainConfig {
            l2_coefficient: 0.0,
            noise_stddev: 0.0,
            ..TrainConfig::default()
        };
        let mut state = single_tensor_state(vec![0.5, -1.5], &cfg);
        let before = state.tensors.clone();
        train_step(&mut state, &cfg, |_| Ok((1.0, vec![vec![0.0, 0.0]]))).unwrap();
        assert_eq!(state.tensors, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn quadratic_bowl_descends_strictly() {
        // loss = |w|^2 with lr under the 1/L stability bound: strict
        // monotone contraction for 100 steps.
        let cfg = TrainConfig {
            initial_lr: 0.1,
            decay_rate: 1.0,
            l2_coefficient: 0.0,
            noise_stddev: 0.0,
            clip_norm: 1e9,
            ..TrainConfig::default()
        };
        let mut state = single_tensor_state(vec![2.0, -3.0], &cfg);
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let loss = train_step(&mut state, &cfg, |t| {
                let w = &t.get("w").unwrap().data;
                let loss = w.iter().map(|v| v * v).sum::<f64>();
                let grad = w.iter().map(|v| 2.0 * v).collect();
                Ok((loss, vec![grad]))
            })
            .unwrap();
            assert!(loss < last, "loss {loss} did not decrease from {last}");
            last = loss;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn weight_noise_is_never_persisted() {
        // Gradient forced to zero: despite active noise, the clean
        // parameters must come through unchanged.
        let cfg = TrainConfig {
            l2_coefficient: 0.0,
            noise_stddev: 0.05,
            noise_start_step: 0,
            ..TrainConfig::default()
        };
        let mut state = single_tensor_state(vec![1.0, 2.0, 3.0], &cfg);
        let before = state.tensors.clone();
        for _ in 0..5 {
            let mut saw_noise = false;
            train_step(&mut state, &cfg, |t| {
                let w = &t.get("w").unwrap().data;
                saw_noise = w != &[1.0, 2.0, 3.0];
                Ok((0.5, vec![vec![0.0; 3]]))
            })
            .unwrap();
            assert!(saw_noise, "evaluation should see perturbed parameters");
        }
        assert_eq!(state.tensors, before);
    }

    #[test]
    fn lr_schedule_is_nonincreasing() {
        let cfg = TrainConfig::default();
        let mut last = f64::INFINITY;
        for step in 0..5000 {
            let lr = cfg.lr_at(step);
            assert!(lr <= last);
            last = lr;
        }
        assert!((cfg.lr_at(0) - 1.0).abs() < 1e-15);
        assert!((cfg.lr_at(500) - 0.96).abs() < 1e-15);
    }

    #[test]
    fn l2_term_is_reported_exactly() {
        let cfg = TrainConfig {
            l2_coefficient: 0.01,
            noise_stddev: 0.0,
            ..TrainConfig::default()
        };
        let mut state = single_tensor_state(vec![3.0, 4.0], &cfg);
        let reported = train_step(&mut state, &cfg, |_| Ok((2.0, vec![vec![0.0, 0.0]]))).unwrap();
        // data 2.0 + 0.01 * (9 + 16)
        assert!((reported - 2.25).abs() < 1e-15);
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let cfg = TrainConfig::default();
        let mut state = single_tensor_state(vec![1.0], &cfg);
        state.step = 7;
        let err = train_step(&mut state, &cfg, |_| Ok((f64::NAN, vec![vec![0.0]]))).unwrap_err();
        match err {
            Error::Diverged { step, .. } => assert_eq!(step, 7),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    fn tiny_corpus(utts_per_lang: usize) -> (Corpus, UnionVocab) {
        let config = CorpusConfig {
            train_per_language: utts_per_lang,
            validation_per_language: 1,
            test_per_language: 1,
            words_per_utterance: (1, 2),
            word_length: (2, 3),
            lexicon_size: 6,
            ..CorpusConfig::default()
        };
        let corpus = CorpusGenerator::new(config, 33).unwrap().generate_corpus().unwrap();
        let vocab = build_union(&corpus.specs).unwrap();
        (corpus, vocab)
    }

    fn tiny_model(vocab: &UnionVocab) -> ModelConfig {
        ModelConfig {
            variant: Variant::Joint,
            input_dim: 8 * STACK_WINDOW,
            encoder_layers: 1,
            encoder_width: 8,
            decoder_layers: 1,
            decoder_width: 12,
            attention_width: 8,
            char_embedding_dim: 8,
            lang_embedding_dim: 5,
            lambda: 0.01,
            vocab_size: vocab.size(),
            num_languages: vocab.num_languages(),
        }
    }

    #[test]
    fn max_steps_zero_returns_initial_params_and_empty_log() {
        let (corpus, vocab) = tiny_corpus(2);
        let model = tiny_model(&vocab);
        let train = TrainConfig {
            max_steps: 0,
            ..TrainConfig::default()
        };
        let session = TrainSession::new(&corpus, &vocab, model.clone(), train.clone());
        let outcome = session.run().unwrap();
        assert!(outcome.log.is_empty());
        let init = LasParams::init(model, vocab.fingerprint(), train.seed).unwrap();
        assert_eq!(outcome.final_params, init);
        assert_eq!(outcome.best.params, init);
    }

    #[test]
    fn training_is_reproducible_with_noise_disabled() {
        let (corpus, vocab) = tiny_corpus(3);
        let model = tiny_model(&vocab);
        let train = TrainConfig {
            max_steps: 12,
            batch_size: 2,
            eval_interval: 6,
            noise_stddev: 0.0,
            seed: 5,
            ..TrainConfig::default()
        };
        let run = || {
            TrainSession::new(&corpus, &vocab, model.clone(), train.clone())
                .run()
                .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.final_params, b.final_params);
        assert_eq!(a.log, b.log);
    }

    #[test]
    fn overfits_single_utterance() {
        let (mut corpus, vocab) = tiny_corpus(1);
        corpus.train.truncate(1);
        corpus.validation = corpus.train.clone();
        let model = tiny_model(&vocab);
        let train = TrainConfig {
            initial_lr: 0.8,
            max_steps: 500,
            batch_size: 1,
            eval_interval: 100,
            noise_stddev: 0.0,
            l2_coefficient: 0.0,
            seed: 2,
            ..TrainConfig::default()
        };
        let outcome = TrainSession::new(&corpus, &vocab, model.clone(), train)
            .run()
            .unwrap();
        // Check the final parameters' loss on the memorized utterance.
        let pu = prepare(&corpus.train, &vocab, STACK_WINDOW, STACK_STRIDE).unwrap();
        let final_loss =
            mean_data_loss(&model, &pu, &outcome.final_params.tensors).unwrap();
        assert!(final_loss < 0.01, "memorization failed: loss {final_loss}");
    }

    #[test]
    fn monolingual_suite_builds_per_language_vocabs() {
        let (corpus, _) = tiny_corpus(2);
        let template = tiny_model(&build_union(&corpus.specs).unwrap());
        let train = TrainConfig {
            max_steps: 2,
            batch_size: 2,
            eval_interval: 1,
            ..TrainConfig::default()
        };
        let outcomes = train_monolingual_suite(
            &corpus,
            None,
            &template,
            &train,
            STACK_WINDOW,
            STACK_STRIDE,
            None,
        )
        .unwrap();
        assert_eq!(outcomes.len(), 3);
        for mono in &outcomes {
            // Specials plus exactly this language's 12 graphemes.
            assert_eq!(mono.vocab.size(), 16);
            assert_eq!(mono.vocab.num_languages(), 1);
            // Other languages' graphemes are not encodable.
            let other = corpus
                .specs
                .iter()
                .find(|s| s.id != mono.language)
                .unwrap();
            assert!(mono
                .vocab
                .encode_transcript(&other.graphemes[0])
                .is_err());
        }
    }

    #[test]
    fn empty_language_subset_is_invalid() {
        let (corpus, _) = tiny_corpus(2);
        let template = tiny_model(&build_union(&corpus.specs).unwrap());
        let train = TrainConfig::default();
        let err = train_monolingual_suite(
            &corpus,
            Some(&["nope".to_string()]),
            &template,
            &train,
            STACK_WINDOW,
            STACK_STRIDE,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Registry(_) | Error::InvalidConfig(_)));
    }
}
