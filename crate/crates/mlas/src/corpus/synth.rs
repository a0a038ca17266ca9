//! Synthetic corpus generation.
//!
//! Languages share one phone inventory (phonetic similarity) while writing
//! in disjoint scripts. Each language maps its k-th grapheme (codepoint
//! order) onto phone k, so any two languages are transliteration-compatible
//! by index, and languages in the same lexicon group share their word
//! inventory at the phone level (same speech, different script).

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{io, Corpus, FeatureSequence, Utterance};
use crate::error::{Error, Result};
use crate::langpack::LanguageSpec;
use crate::rng::Rng;

/// One synthetic phone: a Gaussian cloud around a fixed mean.
#[derive(Clone, Debug)]
pub struct PhoneModel {
    pub id: String,
    pub mean: Vec<f64>,
    pub duration_frames: (usize, usize),
    pub noise_stddev: f64,
}

/// The shared phone inventory: mapped phones on a circle in the first two
/// feature dimensions, one spare circle slot, and silence at the origin.
#[derive(Clone, Debug)]
pub struct PhoneInventory {
    pub phones: Vec<PhoneModel>,
    pub num_mapped: usize,
    pub silence: usize,
}

impl PhoneInventory {
    pub fn shared(
        num_mapped: usize,
        dim: usize,
        radius: f64,
        duration_frames: (usize, usize),
        noise_stddev: f64,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "feature dim {dim} too small for the phone layout"
            )));
        }
        if num_mapped == 0 {
            return Err(Error::InvalidConfig("no mapped phones".into()));
        }
        let slots = num_mapped + 1; // mapped plus one spare
        let mut phones = Vec::with_capacity(slots + 1);
        for k in 0..slots {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / slots as f64;
            let mut mean = vec![0.0; dim];
            mean[0] = radius * theta.cos();
            mean[1] = radius * theta.sin();
            let id = if k < num_mapped {
                format!("p{k:02}")
            } else {
                "spare".to_string()
            };
            phones.push(PhoneModel {
                id,
                mean,
                duration_frames,
                noise_stddev,
            });
        }
        phones.push(PhoneModel {
            id: "sil".to_string(),
            mean: vec![0.0; dim],
            duration_frames,
            noise_stddev,
        });
        let silence = phones.len() - 1;
        let inventory = PhoneInventory {
            phones,
            num_mapped,
            silence,
        };
        inventory.validate_separability()?;
        Ok(inventory)
    }

    /// Means of distinct phones must be at least 4 sigma apart so that a
    /// nearest-mean classifier recovers phone labels reliably.
    pub fn validate_separability(&self) -> Result<()> {
        let sigma = self
            .phones
            .iter()
            .map(|p| p.noise_stddev)
            .fold(0.0f64, f64::max);
        for i in 0..self.phones.len() {
            for j in i + 1..self.phones.len() {
                let dist: f64 = self.phones[i]
                    .mean
                    .iter()
                    .zip(&self.phones[j].mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if dist < 4.0 * sigma {
                    return Err(Error::InvalidConfig(format!(
                        "phones {} and {} separated by {dist:.3} < 4 sigma = {:.3}",
                        self.phones[i].id,
                        self.phones[j].id,
                        4.0 * sigma
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nearest phone to a frame, by Euclidean distance to the means.
    pub fn nearest(&self, frame: &[f64]) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (k, phone) in self.phones.iter().enumerate() {
            let d: f64 = phone
                .mean
                .iter()
                .zip(frame)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_dist {
                best_dist = d;
                best = k;
            }
        }
        best
    }
}

/// A language plus its grapheme-to-phone mapping.
#[derive(Clone, Debug)]
pub struct SyntheticLanguage {
    pub spec: LanguageSpec,
    /// Phone index per grapheme, aligned with `spec.graphemes`.
    pub grapheme_to_phone: Vec<usize>,
}

impl SyntheticLanguage {
    pub fn phone_of(&self, grapheme: &str) -> Result<usize> {
        self.spec
            .graphemes
            .iter()
            .position(|g| g == grapheme)
            .map(|k| self.grapheme_to_phone[k])
            .ok_or_else(|| {
                Error::Generator(format!(
                    "grapheme {grapheme:?} has no phone mapping in {:?}",
                    self.spec.id
                ))
            })
    }

    /// Phone sequence of a transcript, skipping spaces.
    pub fn phone_sequence(&self, transcript: &str) -> Result<Vec<usize>> {
        transcript
            .chars()
            .filter(|c| *c != ' ')
            .map(|c| self.phone_of(&c.to_string()))
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LanguageConfig {
    pub id: String,
    pub display_name: String,
    /// Grapheme inventory as a string of single codepoints.
    pub graphemes: String,
}

/// A small fraction of words rendered in a common extra script, mixed into
/// every language's utterances. Off unless configured.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BorrowedWords {
    pub language: LanguageConfig,
    pub fraction: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub languages: Vec<LanguageConfig>,
    /// Language pairs whose speech is mutually transliterable: they share
    /// `shared_lexicon_words` phone-level words; the rest of each lexicon
    /// is private, which keeps the pair acoustically distinguishable.
    pub transliteration_pairs: Vec<(String, String)>,
    pub shared_lexicon_words: usize,
    pub train_per_language: usize,
    pub validation_per_language: usize,
    pub test_per_language: usize,
    pub feature_dim: usize,
    pub frame_period_ms: f64,
    pub words_per_utterance: (usize, usize),
    pub word_length: (usize, usize),
    pub lexicon_size: usize,
    pub phone_noise_stddev: f64,
    pub phone_duration_frames: (usize, usize),
    pub phone_radius: f64,
    pub borrowed: Option<BorrowedWords>,
}

impl Default for CorpusConfig {
    /// The default trio: three 12-grapheme languages over a shared
    /// 14-phone inventory (12 mapped + spare + silence); the first two
    /// form a transliteration pair.
    fn default() -> Self {
        CorpusConfig {
            languages: vec![
                LanguageConfig {
                    id: "alpha".into(),
                    display_name: "Alphean".into(),
                    graphemes: "abcdefghijkl".into(),
                },
                LanguageConfig {
                    id: "beta".into(),
                    display_name: "Betic".into(),
                    graphemes: "αβγδεζηθικλμ".into(),
                },
                LanguageConfig {
                    id: "gamma".into(),
                    display_name: "Gammarese".into(),
                    graphemes: "абвгдежзиклм".into(),
                },
            ],
            transliteration_pairs: vec![],
            shared_lexicon_words: 2,
            train_per_language: 400,
            validation_per_language: 40,
            test_per_language: 40,
            feature_dim: 8,
            frame_period_ms: 10.0,
            words_per_utterance: (1, 3),
            word_length: (2, 4),
            lexicon_size: 24,
            phone_noise_stddev: 0.25,
            phone_duration_frames: (4, 7),
            phone_radius: 3.0,
            borrowed: None,
        }
    }
}

impl CorpusConfig {
    fn validate(&self) -> Result<()> {
        if self.languages.is_empty() {
            return Err(Error::InvalidConfig("no languages configured".into()));
        }
        let mut ids = HashSet::new();
        for lang in &self.languages {
            if !ids.insert(&lang.id) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate language id {:?}",
                    lang.id
                )));
            }
        }
        for (name, count) in [
            ("train", self.train_per_language),
            ("validation", self.validation_per_language),
            ("test", self.test_per_language),
        ] {
            if count < 1 {
                return Err(Error::InvalidConfig(format!(
                    "{name} split count must be at least 1"
                )));
            }
        }
        for (name, (lo, hi)) in [
            ("words_per_utterance", self.words_per_utterance),
            ("word_length", self.word_length),
            ("phone_duration_frames", self.phone_duration_frames),
        ] {
            if lo < 1 || lo > hi {
                return Err(Error::InvalidConfig(format!("bad range for {name}: ({lo}, {hi})")));
            }
        }
        if self.lexicon_size < 1 {
            return Err(Error::InvalidConfig("lexicon_size must be at least 1".into()));
        }
        if self.phone_noise_stddev < 0.0 {
            return Err(Error::InvalidConfig("negative phone_noise_stddev".into()));
        }
        if let Some(b) = &self.borrowed {
            if !(0.0..=1.0).contains(&b.fraction) {
                return Err(Error::InvalidConfig(format!(
                    "borrowed fraction {} outside [0, 1]",
                    b.fraction
                )));
            }
        }
        for (a, b) in &self.transliteration_pairs {
            if a == b {
                return Err(Error::InvalidConfig(format!(
                    "transliteration pair ({a}, {b}) must name two languages"
                )));
            }
            for id in [a, b] {
                let lang = self
                    .languages
                    .iter()
                    .find(|l| &l.id == id)
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!("transliteration pair names unknown language {id:?}"))
                    })?;
                let other = if id == a { b } else { a };
                let other_len = self
                    .languages
                    .iter()
                    .find(|l| &l.id == other)
                    .map(|l| l.graphemes.chars().count())
                    .unwrap_or(0);
                if lang.graphemes.chars().count() != other_len {
                    return Err(Error::InvalidConfig(format!(
                        "transliteration pair ({a}, {b}) needs equal grapheme counts"
                    )));
                }
            }
            if self.shared_lexicon_words == 0 || self.shared_lexicon_words > self.lexicon_size {
                return Err(Error::InvalidConfig(format!(
                    "shared_lexicon_words {} outside 1..={}",
                    self.shared_lexicon_words, self.lexicon_size
                )));
            }
        }
        Ok(())
    }
}

fn synthetic_language(cfg: &LanguageConfig) -> Result<SyntheticLanguage> {
    // Graphemes are sorted by codepoint so the grapheme<->phone index
    // convention is stable across config orderings.
    let mut chars: Vec<char> = cfg.graphemes.chars().collect();
    chars.sort_unstable();
    let sorted: String = chars.iter().collect();
    let spec = LanguageSpec::new(&cfg.id, &cfg.display_name, &sorted)?;
    let grapheme_to_phone = (0..spec.graphemes.len()).collect();
    Ok(SyntheticLanguage {
        spec,
        grapheme_to_phone,
    })
}

/// Deterministic corpus generator. Every utterance derives its own RNG
/// stream from `(seed, utterance id)`, so generation order is irrelevant.
#[derive(Clone, Debug)]
pub struct CorpusGenerator {
    config: CorpusConfig,
    seed: u64,
    inventory: PhoneInventory,
    languages: Vec<SyntheticLanguage>,
    borrowed_language: Option<SyntheticLanguage>,
    /// Per-language phone-level lexicon; words shared through a
    /// transliteration pair come first.
    lexicons: BTreeMap<String, Vec<Vec<usize>>>,
    /// Shared word lists per pair, keyed by the sorted id pair.
    shared: BTreeMap<(String, String), Vec<Vec<usize>>>,
}

impl CorpusGenerator {
    pub fn new(config: CorpusConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let languages: Vec<SyntheticLanguage> = config
            .languages
            .iter()
            .map(synthetic_language)
            .collect::<Result<_>>()?;
        let borrowed_language = config
            .borrowed
            .as_ref()
            .map(|b| synthetic_language(&b.language))
            .transpose()?;

        let num_mapped = languages
            .iter()
            .chain(borrowed_language.iter())
            .map(|l| l.spec.graphemes.len())
            .max()
            .unwrap();
        let inventory = PhoneInventory::shared(
            num_mapped,
            config.feature_dim,
            config.phone_radius,
            config.phone_duration_frames,
            config.phone_noise_stddev,
        )?;

        // Shared word lists per pair first, then each language fills its
        // lexicon with private words that collide with nothing drawn so
        // far. Everything is keyed by sorted ids so config order never
        // changes the corpus.
        let mut shared: BTreeMap<(String, String), Vec<Vec<usize>>> = BTreeMap::new();
        let mut shared_by_lang: BTreeMap<String, Vec<Vec<usize>>> = BTreeMap::new();
        for (a, b) in &config.transliteration_pairs {
            let key = if a < b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            };
            let mapped = languages
                .iter()
                .find(|l| &l.spec.id == a)
                .map(|l| l.spec.graphemes.len())
                .unwrap();
            let mut rng = Rng::for_label(seed, &format!("lexicon-shared/{}+{}", key.0, key.1));
            let words = sample_words(
                &config,
                &mut rng,
                config.shared_lexicon_words,
                mapped,
                &mut HashSet::new(),
            )?;
            for id in [a, b] {
                shared_by_lang
                    .entry(id.clone())
                    .or_default()
                    .extend(words.iter().cloned());
            }
            shared.insert(key, words);
        }
        // Private words are unique across the whole corpus, so two
        // languages never collide on a phone sequence unless a pair
        // explicitly shares it.
        let mut global_taken: HashSet<Vec<usize>> =
            shared.values().flatten().cloned().collect();
        let mut lexicons = BTreeMap::new();
        for lang in &languages {
            let id = &lang.spec.id;
            let mut words = shared_by_lang.get(id).cloned().unwrap_or_default();
            if words.len() > config.lexicon_size {
                return Err(Error::InvalidConfig(format!(
                    "language {id:?} has more shared words than its lexicon holds"
                )));
            }
            let mut rng = Rng::for_label(seed, &format!("lexicon/{id}"));
            let private = sample_words(
                &config,
                &mut rng,
                config.lexicon_size - words.len(),
                lang.spec.graphemes.len(),
                &mut global_taken,
            )?;
            words.extend(private);
            lexicons.insert(id.clone(), words);
        }
        Ok(CorpusGenerator {
            config,
            seed,
            inventory,
            languages,
            borrowed_language,
            lexicons,
            shared,
        })
    }

    pub fn config(&self) -> &CorpusConfig {
        &self.config
    }

    pub fn inventory(&self) -> &PhoneInventory {
        &self.inventory
    }

    pub fn languages(&self) -> &[SyntheticLanguage] {
        &self.languages
    }

    pub fn language(&self, id: &str) -> Result<&SyntheticLanguage> {
        self.languages
            .iter()
            .find(|l| l.spec.id == id)
            .ok_or_else(|| Error::Registry(format!("unknown language {id:?}")))
    }

    /// The registry backing this corpus: the configured languages plus the
    /// borrowed script, when one is configured.
    pub fn registry(&self) -> Vec<LanguageSpec> {
        let mut specs: Vec<LanguageSpec> = self.languages.iter().map(|l| l.spec.clone()).collect();
        if let Some(b) = &self.borrowed_language {
            specs.push(b.spec.clone());
        }
        specs
    }

    /// A language's phone-level lexicon.
    pub fn lexicon(&self, language_id: &str) -> Option<&[Vec<usize>]> {
        self.lexicons.get(language_id).map(|v| v.as_slice())
    }

    /// Words shared between a configured transliteration pair.
    pub fn shared_words(&self, a: &str, b: &str) -> Option<&[Vec<usize>]> {
        let key = if a < b {
            (a.to_string(), b.to_string())
        } else {
            (b.to_string(), a.to_string())
        };
        self.shared.get(&key).map(|v| v.as_slice())
    }

    pub fn render_word(&self, phones: &[usize], language: &SyntheticLanguage) -> Result<String> {
        phones
            .iter()
            .map(|&p| {
                language
                    .grapheme_to_phone
                    .iter()
                    .position(|&q| q == p)
                    .map(|k| language.spec.graphemes[k].clone())
                    .ok_or_else(|| {
                        Error::Generator(format!(
                            "phone {p} has no grapheme in {:?}",
                            language.spec.id
                        ))
                    })
            })
            .collect()
    }

    pub fn generate_utterance(
        &self,
        language_id: &str,
        word_count: usize,
        utt_id: &str,
    ) -> Result<Utterance> {
        Ok(self.generate_aligned(language_id, word_count, utt_id)?.0)
    }

    /// Generate an utterance together with its frame-level phone
    /// alignment (phone index per frame).
    pub fn generate_aligned(
        &self,
        language_id: &str,
        word_count: usize,
        utt_id: &str,
    ) -> Result<(Utterance, Vec<usize>)> {
        if word_count < 1 {
            return Err(Error::InvalidArgument("word_count must be at least 1".into()));
        }
        let language = self.language(language_id)?;
        let lexicon = self
            .lexicons
            .get(language_id)
            .ok_or_else(|| Error::Generator(format!("no lexicon for {language_id:?}")))?;
        let mut rng = Rng::for_label(self.seed, utt_id);
        let dim = self.config.feature_dim;
        let mut frames: Vec<f64> = Vec::new();
        let mut alignment: Vec<usize> = Vec::new();
        let mut words: Vec<String> = Vec::with_capacity(word_count);

        let emit = |phone_idx: usize, rng: &mut Rng, frames: &mut Vec<f64>, alignment: &mut Vec<usize>| {
            let phone = &self.inventory.phones[phone_idx];
            let (lo, hi) = phone.duration_frames;
            let duration = rng.int_in(lo, hi);
            for _ in 0..duration {
                for d in 0..dim {
                    let v = phone.mean[d] + phone.noise_stddev * rng.normal();
                    // Quantize to what the on-disk format holds, so memory
                    // and files agree bit-for-bit.
                    frames.push(v as f32 as f64);
                }
                alignment.push(phone_idx);
            }
        };

        // Utterances carry boundary silence on both edges, the way real
        // recordings do; the trailing stretch anchors end-of-sequence.
        emit(self.inventory.silence, &mut rng, &mut frames, &mut alignment);
        for w in 0..word_count {
            if w > 0 {
                emit(self.inventory.silence, &mut rng, &mut frames, &mut alignment);
            }
            let phones = &lexicon[rng.int_in(0, lexicon.len() - 1)];
            let render_in = match &self.borrowed_language {
                Some(b)
                    if self
                        .config
                        .borrowed
                        .as_ref()
                        .map(|cfg| rng.uniform() < cfg.fraction)
                        .unwrap_or(false) =>
                {
                    b
                }
                _ => language,
            };
            words.push(self.render_word(phones, render_in)?);
            for &p in phones {
                emit(p, &mut rng, &mut frames, &mut alignment);
            }
        }
        emit(self.inventory.silence, &mut rng, &mut frames, &mut alignment);

        let num_frames = alignment.len();
        let features =
            FeatureSequence::new(num_frames, dim, frames, self.config.frame_period_ms)?;
        Ok((
            Utterance {
                id: utt_id.to_string(),
                language: language_id.to_string(),
                transcript: words.join(" "),
                features,
            },
            alignment,
        ))
    }

    /// Generate a parallel utterance pair: the same shared-lexicon phone
    /// word sequence realized once, rendered in both scripts of a
    /// transliteration pair. Features are identical; transcripts differ
    /// in every grapheme.
    pub fn generate_parallel(
        &self,
        lang_a: &str,
        lang_b: &str,
        word_count: usize,
        utt_id: &str,
    ) -> Result<(Utterance, Utterance)> {
        let shared = self.shared_words(lang_a, lang_b).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "({lang_a}, {lang_b}) is not a configured transliteration pair"
            ))
        })?;
        let a = self.language(lang_a)?;
        let b = self.language(lang_b)?;
        let mut rng = Rng::for_label(self.seed, &format!("parallel/{utt_id}"));
        let dim = self.config.feature_dim;
        let mut frames: Vec<f64> = Vec::new();
        let mut words: Vec<&Vec<usize>> = Vec::new();
        self.emit_phone(self.inventory.silence, &mut rng, &mut frames, &mut Vec::new());
        for w in 0..word_count.max(1) {
            if w > 0 {
                self.emit_phone(self.inventory.silence, &mut rng, &mut frames, &mut Vec::new());
            }
            let word = &shared[rng.int_in(0, shared.len() - 1)];
            words.push(word);
            for &p in word {
                self.emit_phone(p, &mut rng, &mut frames, &mut Vec::new());
            }
        }
        self.emit_phone(self.inventory.silence, &mut rng, &mut frames, &mut Vec::new());
        let num_frames = frames.len() / dim;
        let make = |lang: &SyntheticLanguage, suffix: &str| -> Result<Utterance> {
            let transcript = words
                .iter()
                .map(|w| self.render_word(w, lang))
                .collect::<Result<Vec<String>>>()?
                .join(" ");
            Ok(Utterance {
                id: format!("{utt_id}-{suffix}"),
                language: lang.spec.id.clone(),
                transcript,
                features: FeatureSequence::new(
                    num_frames,
                    dim,
                    frames.clone(),
                    self.config.frame_period_ms,
                )?,
            })
        };
        Ok((make(a, lang_a)?, make(b, lang_b)?))
    }

    fn emit_phone(
        &self,
        phone_idx: usize,
        rng: &mut Rng,
        frames: &mut Vec<f64>,
        alignment: &mut Vec<usize>,
    ) {
        let phone = &self.inventory.phones[phone_idx];
        let (lo, hi) = phone.duration_frames;
        let duration = rng.int_in(lo, hi);
        for _ in 0..duration {
            for d in 0..self.config.feature_dim {
                let v = phone.mean[d] + phone.noise_stddev * rng.normal();
                frames.push(v as f32 as f64);
            }
            alignment.push(phone_idx);
        }
    }

    /// Generate the full train/validation/test corpus in memory.
    pub fn generate_corpus(&self) -> Result<Corpus> {
        let mut corpus = Corpus {
            specs: self.registry(),
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            seed: self.seed,
        };
        let splits: [(&str, usize); 3] = [
            ("train", self.config.train_per_language),
            ("validation", self.config.validation_per_language),
            ("test", self.config.test_per_language),
        ];
        for (split, count) in splits {
            for lang in &self.languages {
                for n in 0..count {
                    let utt_id = format!("{}-{split}-{n:04}", lang.spec.id);
                    let mut plan = Rng::for_label(self.seed, &format!("plan/{utt_id}"));
                    let (lo, hi) = self.config.words_per_utterance;
                    let word_count = plan.int_in(lo, hi);
                    let utt = self.generate_utterance(&lang.spec.id, word_count, &utt_id)?;
                    match split {
                        "train" => corpus.train.push(utt),
                        "validation" => corpus.validation.push(utt),
                        _ => corpus.test.push(utt),
                    }
                }
            }
        }
        Ok(corpus)
    }
}

fn sample_words(
    config: &CorpusConfig,
    rng: &mut Rng,
    count: usize,
    num_phones: usize,
    taken: &mut HashSet<Vec<usize>>,
) -> Result<Vec<Vec<usize>>> {
    let (lo, hi) = config.word_length;
    let mut words = Vec::with_capacity(count);
    let mut attempts = 0;
    while words.len() < count {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::InvalidConfig(format!(
                "cannot sample {count} distinct words of length {lo}..={hi} from {num_phones} phones"
            )));
        }
        let len = rng.int_in(lo, hi);
        // No immediately repeated phone within a word: a doubled phone is
        // indistinguishable from a single long one under random durations.
        let mut word: Vec<usize> = Vec::with_capacity(len);
        for _ in 0..len {
            loop {
                let p = rng.int_in(0, num_phones - 1);
                if word.last() != Some(&p) {
                    word.push(p);
                    break;
                }
            }
        }
        if taken.insert(word.clone()) {
            words.push(word);
        }
    }
    Ok(words)
}

/// Generate the corpus and persist it (registry, manifest, one feature
/// file per utterance) under `out_dir`.
pub fn build_corpus(config: &CorpusConfig, seed: u64, out_dir: &Path) -> Result<Corpus> {
    let generator = CorpusGenerator::new(config.clone(), seed)?;
    let corpus = generator.generate_corpus()?;
    io::write_corpus(&corpus, out_dir)?;
    Ok(corpus)
}

/// Re-render a transcript from one language's script into another's via
/// the shared grapheme-index convention (grapheme k maps onto phone k in
/// every language). Spaces pass through.
pub fn transliterate(text: &str, from: &LanguageSpec, to: &LanguageSpec) -> Result<String> {
    let mut out = String::new();
    for (pos, ch) in text.chars().enumerate() {
        if ch == ' ' {
            out.push(' ');
            continue;
        }
        let key = ch.to_string();
        let k = from
            .graphemes
            .iter()
            .position(|g| *g == key)
            .ok_or_else(|| Error::Oov {
                codepoint: key.clone(),
                position: pos,
            })?;
        let target = to.graphemes.get(k).ok_or_else(|| {
            Error::Generator(format!(
                "grapheme index {k} out of range for {:?}",
                to.id
            ))
        })?;
        out.push_str(target);
    }
    Ok(out)
}
