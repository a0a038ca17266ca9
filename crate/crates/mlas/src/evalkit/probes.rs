//! Behavioral probes: code-switching over concatenated cross-language
//! utterances, and decoding speech of one language under another
//! language's ID (transliteration).

use std::collections::HashMap;

use crate::corpus::{concat_utterances, transliterate, Corpus, Utterance};
use crate::error::{Error, Result};
use crate::evalkit::edit_distance;
use crate::inference::DecodeSession;

/// One probed utterance.
#[derive(Clone, Debug)]
pub struct ProbeRecord {
    pub utterance_id: String,
    pub output: String,
    /// Dominant script label of the output words.
    pub chosen_label: String,
    pub values: Vec<(String, f64)>,
}

#[derive(Clone, Debug)]
pub struct ProbeReport {
    pub kind: String,
    pub records: Vec<ProbeRecord>,
    pub aggregates: Vec<(String, f64)>,
}

impl ProbeReport {
    pub fn aggregate(&self, name: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("probe: {}\n", self.kind);
        for (name, value) in &self.aggregates {
            out.push_str(&format!("{name}: {value:.4}\n"));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut columns: Vec<String> = Vec::new();
        for rec in &self.records {
            for (name, _) in &rec.values {
                if !columns.contains(name) {
                    columns.push(name.clone());
                }
            }
        }
        let mut out = String::from("utterance_id,chosen_label");
        for c in &columns {
            out.push_str(&format!(",{c}"));
        }
        out.push_str(",output\n");
        for rec in &self.records {
            out.push_str(&format!("{},{}", rec.utterance_id, rec.chosen_label));
            for c in &columns {
                let v = rec
                    .values
                    .iter()
                    .find(|(n, _)| n == c)
                    .map(|(_, v)| *v)
                    .unwrap_or(f64::NAN);
                out.push_str(&format!(",{v}"));
            }
            out.push_str(&format!(",{}\n", rec.output));
        }
        out
    }
}

fn multiset_coverage(segment: &str, output: &str) -> f64 {
    let mut want: HashMap<char, usize> = HashMap::new();
    for ch in segment.chars().filter(|c| *c != ' ') {
        *want.entry(ch).or_default() += 1;
    }
    let total: usize = want.values().sum();
    if total == 0 {
        return 0.0;
    }
    let mut have: HashMap<char, usize> = HashMap::new();
    for ch in output.chars().filter(|c| *c != ' ') {
        *have.entry(ch).or_default() += 1;
    }
    let covered: usize = want
        .iter()
        .map(|(ch, &w)| w.min(have.get(ch).copied().unwrap_or(0)))
        .sum();
    covered as f64 / total as f64
}

fn take_subset<'a>(
    corpus: &'a Corpus,
    language: &str,
    count: usize,
    what: &str,
) -> Result<Vec<&'a Utterance>> {
    let subset: Vec<&Utterance> = corpus
        .test
        .iter()
        .filter(|u| u.language == language)
        .collect();
    if subset.len() < count {
        return Err(Error::InvalidConfig(format!(
            "{what}: requested {count} utterances of {language:?}, corpus has {}",
            subset.len()
        )));
    }
    Ok(subset.into_iter().take(count).collect())
}

/// Build `count` concatenated A+B probes with a silent gap, decode them,
/// and measure whether the model sticks to a single script. Words are
/// classified against the first segment's language as ground truth; the
/// headline statistic is the fraction of outputs whose words are at least
/// 95% one single script.
pub fn code_switch_probe(
    session: &DecodeSession,
    corpus: &Corpus,
    pair: (&str, &str),
    count: usize,
    gap_ms: f64,
) -> Result<ProbeReport> {
    if session.params.config.variant.is_conditioned() {
        return Err(Error::Config(
            "code-switch probe runs on models without language conditioning".into(),
        ));
    }
    let (lang_a, lang_b) = pair;
    let a_utts = take_subset(corpus, lang_a, count, "code_switch_probe")?;
    let b_utts = take_subset(corpus, lang_b, count, "code_switch_probe")?;

    let mut records = Vec::with_capacity(count);
    let mut single_script = 0usize;
    let mut chose_a = 0usize;
    let mut chose_b = 0usize;
    let mut coverage_a_sum = 0.0;
    let mut coverage_b_sum = 0.0;
    for (a, b) in a_utts.iter().zip(&b_utts) {
        let probe = concat_utterances(a, b, gap_ms)?;
        let (output, _) = session.decode_utterance(&probe, None)?;
        let words: Vec<&str> = output.split(' ').filter(|w| !w.is_empty()).collect();
        let mut label_counts: HashMap<String, usize> = HashMap::new();
        for word in &words {
            let label = session.vocab.classify_word(word, lang_a)?;
            *label_counts.entry(label.to_string()).or_default() += 1;
        }
        let total_words = words.len().max(1);
        let dominant_language = session
            .vocab
            .languages()
            .map(|l| (l.to_string(), label_counts.get(l).copied().unwrap_or(0)))
            .max_by(|x, y| x.1.cmp(&y.1))
            .unwrap_or(("none".into(), 0));
        let fraction = dominant_language.1 as f64 / total_words as f64;
        if fraction >= 0.95 {
            single_script += 1;
        }
        if dominant_language.1 > 0 {
            if dominant_language.0 == lang_a {
                chose_a += 1;
            } else if dominant_language.0 == lang_b {
                chose_b += 1;
            }
        }
        let cov_a = multiset_coverage(&a.transcript, &output);
        let cov_b = multiset_coverage(&b.transcript, &output);
        coverage_a_sum += cov_a;
        coverage_b_sum += cov_b;
        records.push(ProbeRecord {
            utterance_id: probe.id.clone(),
            output,
            chosen_label: dominant_language.0,
            values: vec![
                ("single_script_fraction".into(), fraction),
                ("coverage_first_segment".into(), cov_a),
                ("coverage_second_segment".into(), cov_b),
            ],
        });
    }

    let n = count as f64;
    Ok(ProbeReport {
        kind: "code-switch".into(),
        records,
        aggregates: vec![
            ("single_script_fraction".into(), single_script as f64 / n),
            ("chose_first_language".into(), chose_a as f64 / n),
            ("chose_second_language".into(), chose_b as f64 / n),
            ("mean_coverage_first_segment".into(), coverage_a_sum / n),
            ("mean_coverage_second_segment".into(), coverage_b_sum / n),
        ],
    })
}

/// Decode `count` utterances spoken in `speech_language` while claiming
/// `claimed_language` to an encoder-conditioned model. Reports (i) the
/// fraction of output graphemes drawn from the claimed language's charset
/// (ID faithfulness) and (ii) the character error rate of the output
/// against the claimed-script rendering of the reference (transliteration
/// accuracy). Any two languages with equal-sized grapheme inventories are
/// transliteration-compatible here (all languages voice the same shared
/// phones); with matched ids this reduces to ordinary decoding.
pub fn mismatched_id_probe(
    session: &DecodeSession,
    corpus: &Corpus,
    speech_language: &str,
    claimed_language: &str,
    count: usize,
) -> Result<ProbeReport> {
    if !session.params.config.variant.conditions_encoder() {
        return Err(Error::Config(
            "mismatched-id probe requires an encoder-conditioned model".into(),
        ));
    }
    let from_spec = corpus
        .specs
        .iter()
        .find(|s| s.id == speech_language)
        .ok_or_else(|| Error::Registry(format!("unknown language {speech_language:?}")))?;
    let to_spec = corpus
        .specs
        .iter()
        .find(|s| s.id == claimed_language)
        .ok_or_else(|| Error::Registry(format!("unknown language {claimed_language:?}")))?;
    let claimed_charset: std::collections::HashSet<char> = to_spec
        .graphemes
        .iter()
        .map(|g| g.chars().next().unwrap())
        .collect();
    let utts = take_subset(corpus, speech_language, count, "mismatched_id_probe")?;

    let mut records = Vec::with_capacity(count);
    let mut faithful_chars = 0usize;
    let mut output_chars = 0usize;
    let mut cer_edits = 0usize;
    let mut cer_len = 0usize;
    for utt in utts {
        let rendering = transliterate(&utt.transcript, from_spec, to_spec)?;
        let (output, _) = session.decode_utterance(utt, Some(claimed_language))?;
        let out_non_space: Vec<char> = output.chars().filter(|c| *c != ' ').collect();
        let in_claimed = out_non_space
            .iter()
            .filter(|c| claimed_charset.contains(c))
            .count();
        faithful_chars += in_claimed;
        output_chars += out_non_space.len();
        let ref_chars: Vec<char> = rendering.chars().collect();
        let hyp_chars: Vec<char> = output.chars().collect();
        let edits = edit_distance(&ref_chars, &hyp_chars);
        cer_edits += edits;
        cer_len += ref_chars.len();
        let faithfulness = if out_non_space.is_empty() {
            0.0
        } else {
            in_claimed as f64 / out_non_space.len() as f64
        };
        records.push(ProbeRecord {
            utterance_id: utt.id.clone(),
            output,
            chosen_label: claimed_language.to_string(),
            values: vec![
                ("faithfulness".into(), faithfulness),
                (
                    "transliteration_cer".into(),
                    edits as f64 / ref_chars.len().max(1) as f64,
                ),
            ],
        });
    }

    Ok(ProbeReport {
        kind: "mismatched-id".into(),
        records,
        aggregates: vec![
            (
                "faithfulness".into(),
                faithful_chars as f64 / output_chars.max(1) as f64,
            ),
            (
                "transliteration_cer".into(),
                cer_edits as f64 / cer_len.max(1) as f64,
            ),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusConfig, CorpusGenerator};
    use crate::langpack::build_union;
    use crate::model::{LasParams, ModelConfig, Variant};

    fn probe_corpus() -> Corpus {
        let config = CorpusConfig {
            train_per_language: 1,
            validation_per_language: 1,
            test_per_language: 4,
            words_per_utterance: (1, 2),
            word_length: (2, 3),
            lexicon_size: 8,
            ..CorpusConfig::default()
        };
        CorpusGenerator::new(config, 7).unwrap().generate_corpus().unwrap()
    }

    #[test]
    fn code_switch_probe_is_total_on_untrained_models() {
        let corpus = probe_corpus();
        let vocab = build_union(&corpus.specs).unwrap();
        let params = LasParams::init(
            ModelConfig::desk_default(Variant::Joint, 64, vocab.size(), 3),
            vocab.fingerprint(),
            1,
        )
        .unwrap();
        let session = DecodeSession::new(&params, &vocab);
        let report = code_switch_probe(&session, &corpus, ("alpha", "beta"), 2, 50.0).unwrap();
        assert_eq!(report.records.len(), 2);
        for (_, v) in &report.aggregates {
            assert!((0.0..=1.0).contains(v) || v.is_nan());
        }
        // Probe transcripts are the two segments joined by a space.
        assert!(report.records[0].utterance_id.contains('+'));
    }

    #[test]
    fn code_switch_probe_rejects_conditioned_models_and_overdraw() {
        let corpus = probe_corpus();
        let vocab = build_union(&corpus.specs).unwrap();
        let cond = LasParams::init(
            ModelConfig::desk_default(Variant::CondEnc, 64, vocab.size(), 3),
            vocab.fingerprint(),
            1,
        )
        .unwrap();
        let session = DecodeSession::new(&cond, &vocab);
        assert!(matches!(
            code_switch_probe(&session, &corpus, ("alpha", "beta"), 2, 50.0),
            Err(Error::Config(_))
        ));
        let joint = LasParams::init(
            ModelConfig::desk_default(Variant::Joint, 64, vocab.size(), 3),
            vocab.fingerprint(),
            1,
        )
        .unwrap();
        let session = DecodeSession::new(&joint, &vocab);
        assert!(matches!(
            code_switch_probe(&session, &corpus, ("alpha", "beta"), 99, 50.0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn mismatched_probe_requires_encoder_conditioning() {
        let corpus = probe_corpus();
        let vocab = build_union(&corpus.specs).unwrap();
        for variant in [Variant::Joint, Variant::Mtl, Variant::CondDec] {
            let params = LasParams::init(
                ModelConfig::desk_default(variant, 64, vocab.size(), 3),
                vocab.fingerprint(),
                1,
            )
            .unwrap();
            let session = DecodeSession::new(&params, &vocab);
            assert!(matches!(
                mismatched_id_probe(&session, &corpus, "alpha", "beta", 2),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn mismatched_probe_is_well_formed_on_untrained_models() {
        let corpus = probe_corpus();
        let vocab = build_union(&corpus.specs).unwrap();
        let params = LasParams::init(
            ModelConfig::desk_default(Variant::CondEnc, 64, vocab.size(), 3),
            vocab.fingerprint(),
            1,
        )
        .unwrap();
        let session = DecodeSession::new(&params, &vocab);
        let report = mismatched_id_probe(&session, &corpus, "alpha", "beta", 3).unwrap();
        assert_eq!(report.records.len(), 3);
        let f = report.aggregate("faithfulness").unwrap();
        assert!((0.0..=1.0).contains(&f));
        assert!(report.aggregate("transliteration_cer").unwrap() >= 0.0);
        // Matched ids reduce to ordinary decoding and stay well-formed.
        let matched = mismatched_id_probe(&session, &corpus, "alpha", "alpha", 3).unwrap();
        assert_eq!(matched.records.len(), 3);
    }

    #[test]
    fn multiset_coverage_counts_repeats() {
        assert_eq!(multiset_coverage("aab", "ab"), 2.0 / 3.0);
        assert_eq!(multiset_coverage("ab cd", "abcd"), 1.0);
        assert_eq!(multiset_coverage("ab", "xy"), 0.0);
    }
}
