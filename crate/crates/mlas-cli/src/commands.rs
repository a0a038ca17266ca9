//! Command implementations.

use std::collections::BTreeMap;
use std::path::Path;

use mlas::corpus::{build_corpus, load_corpus, Corpus, CorpusGenerator, Utterance};
use mlas::error::{Error, Result};
use mlas::evalkit::{
    code_switch_probe, confusion_matrix, mismatched_id_probe, score_corpus, ErrorRateReport,
    ProbeReport,
};
use mlas::inference::{greedy_decode, BeamConfig, DecodeSession, TokenSemantics};
use mlas::langpack::{build_union, UnionVocab};
use mlas::model::{load_checkpoint, Checkpoint, LasParams, Variant};
use mlas::trainer::{train_monolingual_suite, TrainConfig, TrainSession};

use crate::config::ExperimentConfig;

pub fn gen_corpus(cfg: &ExperimentConfig) -> Result<()> {
    // Validate the whole configuration before touching the disk, then
    // build into a scratch directory and swap it in atomically, so a
    // failed run leaves no partial corpus behind.
    let generator = CorpusGenerator::new(cfg.corpus.clone(), cfg.seed)?;
    drop(generator);
    let tmp = cfg
        .output_dir
        .join(format!("corpus.tmp-{}", std::process::id()));
    let corpus = match build_corpus(&cfg.corpus, cfg.seed, &tmp) {
        Ok(c) => c,
        Err(e) => {
            let _ = std::fs::remove_dir_all(&tmp);
            return Err(e);
        }
    };
    let dir = cfg.corpus_dir();
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::rename(&tmp, &dir)?;

    println!("corpus written to {} (seed {})", dir.display(), cfg.seed);
    println!(
        "{:<12} {:>12} {:>12} {:>12}",
        "language", "# train utts.", "# val utts.", "# test utts."
    );
    for spec in &corpus.specs {
        let count = |split: &[Utterance]| split.iter().filter(|u| u.language == spec.id).count();
        println!(
            "{:<12} {:>12} {:>12} {:>12}",
            spec.id,
            count(&corpus.train),
            count(&corpus.validation),
            count(&corpus.test)
        );
    }
    println!(
        "{:<12} {:>12} {:>12} {:>12}",
        "total",
        corpus.train.len(),
        corpus.validation.len(),
        corpus.test.len()
    );
    Ok(())
}

fn load_experiment_corpus(cfg: &ExperimentConfig) -> Result<(Corpus, UnionVocab)> {
    let dir = cfg.corpus_dir();
    if !dir.exists() {
        return Err(Error::InvalidConfig(format!(
            "no corpus at {} (run gen-corpus first)",
            dir.display()
        )));
    }
    let corpus = load_corpus(&dir)?;
    let vocab = build_union(&corpus.specs)?;
    Ok((corpus, vocab))
}

pub fn train(
    cfg: &ExperimentConfig,
    variant: &str,
    language: &str,
    lambda: Option<f64>,
    max_steps: Option<usize>,
    resume: bool,
) -> Result<()> {
    let (corpus, vocab) = load_experiment_corpus(cfg)?;
    let mut train_cfg: TrainConfig = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    if let Some(steps) = max_steps {
        train_cfg.max_steps = steps;
    }

    if variant == "monolingual" {
        let selected: Option<Vec<String>> = if language == "all" {
            None
        } else {
            Some(vec![language.to_string()])
        };
        let template = cfg.model.to_model_config(Variant::Joint, cfg.input_dim(), 1, 1);
        let outcomes = train_monolingual_suite(
            &corpus,
            selected.as_deref(),
            &template,
            &train_cfg,
            cfg.frontend.stack_window,
            cfg.frontend.stack_stride,
            Some(&cfg.output_dir),
        )?;
        for mono in &outcomes {
            let last = mono.outcome.log.last();
            println!(
                "monolingual {}: best val loss {:.4} (checkpoint step {}), final train loss {}",
                mono.language,
                mono.outcome
                    .log
                    .iter()
                    .map(|e| e.val_loss)
                    .fold(f64::INFINITY, f64::min),
                mono.outcome.best.step,
                last.map(|e| format!("{:.4}", e.train_loss)).unwrap_or_default()
            );
        }
        return Ok(());
    }

    let parsed: Variant = variant.parse()?;
    let mut model = cfg.model.to_model_config(
        parsed,
        cfg.input_dim(),
        vocab.size(),
        vocab.num_languages(),
    );
    if let Some(l) = lambda {
        model.lambda = l;
    }
    let checkpoint_path = cfg.output_dir.join(format!("ckpt-{parsed}.bin"));
    let mut session = TrainSession::new(&corpus, &vocab, model, train_cfg);
    session.stack_window = cfg.frontend.stack_window;
    session.stack_stride = cfg.frontend.stack_stride;
    session.checkpoint_path = Some(checkpoint_path.clone());
    session.log_path = Some(cfg.output_dir.join(format!("train-{parsed}.csv")));
    if parsed.has_lid_head() {
        session.components_path =
            Some(cfg.output_dir.join(format!("train-{parsed}-components.csv")));
    }
    if resume {
        if !checkpoint_path.exists() {
            return Err(Error::InvalidConfig(format!(
                "cannot resume: {} does not exist",
                checkpoint_path.display()
            )));
        }
        session.resume_from = Some(load_checkpoint(&checkpoint_path)?);
    }
    let steps = session.train.max_steps;
    let outcome = session.run()?;
    let best_val = outcome
        .log
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    println!(
        "trained {parsed}: {steps} steps, best val loss {best_val:.4} at checkpoint step {}",
        outcome.best.step
    );
    println!("checkpoint: {}", checkpoint_path.display());
    Ok(())
}

/// Work out which vocabulary a checkpoint belongs to: the full union, or
/// one language's monolingual vocabulary.
fn resolve_vocab(corpus: &Corpus, ckpt: &Checkpoint) -> Result<(UnionVocab, Option<String>)> {
    let union = build_union(&corpus.specs)?;
    if union.fingerprint() == ckpt.params.vocab_fingerprint {
        return Ok((union, None));
    }
    for spec in &corpus.specs {
        let single = build_union(std::slice::from_ref(spec))?;
        if single.fingerprint() == ckpt.params.vocab_fingerprint {
            return Ok((single, Some(spec.id.clone())));
        }
    }
    Err(Error::Fingerprint {
        checkpoint: ckpt.params.vocab_fingerprint,
        registry: union.fingerprint(),
    })
}

struct DecodedSplit {
    hypotheses: BTreeMap<String, String>,
    dump: String,
}

fn decode_split(
    params: &LasParams,
    vocab: &UnionVocab,
    split: &[Utterance],
    cfg: &ExperimentConfig,
    beam_width: usize,
) -> Result<DecodedSplit> {
    let mut session = DecodeSession::new(params, vocab);
    session.stack_window = cfg.frontend.stack_window;
    session.stack_stride = cfg.frontend.stack_stride;
    session.beam = BeamConfig {
        beam_width,
        max_decode_length: cfg.decode.max_decode_length,
        retain_alignment: false,
    };
    let conditioned = params.config.variant.is_conditioned();
    let mut hypotheses = BTreeMap::new();
    let mut dump = String::from("utterance_id\ttext\tlog_prob\treached_max_length\n");
    for utt in split {
        let lang = conditioned.then_some(utt.language.as_str());
        let (text, hyp) = session.decode_utterance(utt, lang)?;
        dump.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            utt.id, text, hyp.log_prob, hyp.reached_max_length
        ));
        hypotheses.insert(utt.id.clone(), text);
    }
    Ok(DecodedSplit { hypotheses, dump })
}

fn eval_one(
    cfg: &ExperimentConfig,
    params: &LasParams,
    vocab: &UnionVocab,
    split: &[Utterance],
    beam_width: usize,
    out_dir: &Path,
    tag: &str,
) -> Result<ErrorRateReport> {
    let decoded = decode_split(params, vocab, split, cfg, beam_width)?;
    let report = score_corpus(split, &decoded.hypotheses)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(format!("hypotheses-{tag}.tsv")), &decoded.dump)?;
    std::fs::write(
        out_dir.join(format!("report-{tag}.txt")),
        format!("seed {}\nbeam width {beam_width}\n\n{}", cfg.seed, report.to_text()),
    )?;
    std::fs::write(out_dir.join(format!("report-{tag}.csv")), report.to_csv())?;
    // Script confusion is only meaningful against the full registry.
    if vocab.num_languages() > 1 {
        let matrix = confusion_matrix(split, &decoded.hypotheses, vocab)?;
        std::fs::write(out_dir.join(format!("confusion-{tag}.txt")), matrix.to_grid())?;
    }
    Ok(report)
}

pub fn eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    beam_width: Option<usize>,
    beam_sweep: Option<Vec<usize>>,
    compare_monolingual: bool,
) -> Result<()> {
    let (corpus, _) = load_experiment_corpus(cfg)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let (vocab, language) = resolve_vocab(&corpus, &ckpt)?;
    let split: Vec<Utterance> = match &language {
        Some(lang) => corpus.language_subset(&corpus.test, lang),
        None => corpus.test.clone(),
    };
    let out_dir = cfg
        .output_dir
        .join(format!("eval-{}", ckpt.params.config.variant));
    let widths = beam_sweep.unwrap_or_else(|| vec![beam_width.unwrap_or(cfg.decode.beam_width)]);

    let mut primary: Option<ErrorRateReport> = None;
    for width in &widths {
        let tag = format!("beam{width}");
        let report = eval_one(cfg, &ckpt.params, &vocab, &split, *width, &out_dir, &tag)?;
        println!(
            "beam {width}: weighted WER {:.2}%  CER {:.2}%",
            100.0 * report.weighted_average_wer,
            100.0 * report.weighted_average_cer
        );
        if primary.is_none() {
            primary = Some(report);
        }
    }
    let report = primary.unwrap();
    println!("\n{}", report.to_text());

    if compare_monolingual {
        let mut rows = Vec::new();
        for spec in &corpus.specs {
            let path = cfg.output_dir.join(format!("ckpt-monolingual-{}.bin", spec.id));
            if !path.exists() {
                continue;
            }
            let mono = load_checkpoint(&path)?;
            let (mono_vocab, _) = resolve_vocab(&corpus, &mono)?;
            let subset = corpus.language_subset(&corpus.test, &spec.id);
            let tag = format!("monolingual-{}", spec.id);
            let mono_report = eval_one(
                cfg,
                &mono.params,
                &mono_vocab,
                &subset,
                widths[0],
                &out_dir,
                &tag,
            )?;
            rows.push((spec.id.clone(), mono_report));
        }
        if rows.is_empty() {
            return Err(Error::InvalidConfig(
                "no ckpt-monolingual-<language>.bin checkpoints found".into(),
            ));
        }
        println!(
            "{:<12} {:>18} {:>12}",
            "language", "monolingual WER%", "this WER%"
        );
        let mut mono_weighted = 0.0;
        let mut words = 0usize;
        for (lang, mono_report) in &rows {
            let mono_rates = &mono_report.per_language[0].1;
            let joint_rates = report
                .per_language
                .iter()
                .find(|(l, _)| l == lang)
                .map(|(_, t)| t.wer);
            println!(
                "{:<12} {:>18.2} {:>12}",
                lang,
                100.0 * mono_rates.wer,
                joint_rates
                    .map(|w| format!("{:.2}", 100.0 * w))
                    .unwrap_or_else(|| "-".into())
            );
            mono_weighted += mono_rates.wer * mono_rates.word_count as f64;
            words += mono_rates.word_count;
        }
        println!(
            "{:<12} {:>18.2} {:>12.2}",
            "weighted avg.",
            100.0 * mono_weighted / words.max(1) as f64,
            100.0 * report.weighted_average_wer
        );
    }
    Ok(())
}

fn write_probe(cfg: &ExperimentConfig, report: &ProbeReport) -> Result<()> {
    let dir = cfg.output_dir.join("probes");
    std::fs::create_dir_all(&dir)?;
    std::fs::write(
        dir.join(format!("probe-{}.txt", report.kind)),
        format!("seed {}\n{}", cfg.seed, report.to_text()),
    )?;
    std::fs::write(dir.join(format!("probe-{}.csv", report.kind)), report.to_csv())?;
    Ok(())
}

pub fn probe(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    kind: &str,
    pair: (&str, &str),
    count: usize,
    gap_ms: f64,
) -> Result<()> {
    let (corpus, _) = load_experiment_corpus(cfg)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let (vocab, language) = resolve_vocab(&corpus, &ckpt)?;
    if language.is_some() {
        return Err(Error::Config(
            "probes need a checkpoint trained on the full multilingual registry".into(),
        ));
    }
    let mut session = DecodeSession::new(&ckpt.params, &vocab);
    session.stack_window = cfg.frontend.stack_window;
    session.stack_stride = cfg.frontend.stack_stride;
    session.beam = BeamConfig {
        beam_width: cfg.decode.beam_width,
        max_decode_length: cfg.decode.max_decode_length,
        retain_alignment: false,
    };
    let report = match kind {
        "code-switch" => code_switch_probe(&session, &corpus, pair, count, gap_ms)?,
        "mismatched-id" => mismatched_id_probe(&session, &corpus, pair.0, pair.1, count)?,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown probe kind {other:?} (code-switch | mismatched-id)"
            )))
        }
    };
    write_probe(cfg, &report)?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn inspect(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    utterance_id: &str,
    out: Option<&Path>,
) -> Result<()> {
    let (corpus, _) = load_experiment_corpus(cfg)?;
    let ckpt = load_checkpoint(checkpoint)?;
    let (vocab, _) = resolve_vocab(&corpus, &ckpt)?;
    let utt = corpus
        .train
        .iter()
        .chain(&corpus.validation)
        .chain(&corpus.test)
        .find(|u| u.id == utterance_id)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("utterance {utterance_id:?} not in the corpus"))
        })?;

    let stacked = mlas::corpus::stack_frames(
        &utt.features,
        cfg.frontend.stack_window,
        cfg.frontend.stack_stride,
    )?;
    let lang = ckpt
        .params
        .config
        .variant
        .is_conditioned()
        .then(|| vocab.language_index(&utt.language))
        .flatten();
    let hyp = greedy_decode(
        &ckpt.params,
        &stacked,
        lang,
        &TokenSemantics::default(),
        &BeamConfig {
            beam_width: 1,
            max_decode_length: cfg.decode.max_decode_length,
            retain_alignment: true,
        },
    )?;
    let text = vocab.decode_tokens(&hyp.tokens)?;
    println!("utterance: {utterance_id}");
    println!("reference: {}", utt.transcript);
    println!("decoded:   {text}");
    println!("log-prob:  {:.4}", hyp.log_prob);

    let alignment = hyp.alignment.expect("alignment retained");
    let mut grid = String::from("token");
    for i in 0..stacked.num_frames() {
        grid.push_str(&format!("\tframe{i}"));
    }
    grid.push('\n');
    for (step, alpha) in alignment.iter().enumerate() {
        let token = vocab.token(hyp.tokens[step]).unwrap_or("?");
        let label = if token == " " { "<space>" } else { token };
        grid.push_str(label);
        for v in alpha {
            grid.push_str(&format!("\t{v:.6}"));
        }
        grid.push('\n');
    }
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => {
            let dir = cfg.output_dir.join("inspect");
            std::fs::create_dir_all(&dir)?;
            dir.join(format!("attention-{utterance_id}.tsv"))
        }
    };
    std::fs::write(&path, grid)?;
    println!("attention matrix written to {}", path.display());
    Ok(())
}
