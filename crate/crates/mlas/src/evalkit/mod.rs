//! Metrics and analyses: WER/CER with word-count-weighted averages, the
//! script confusion matrix, and the code-switching / mismatched-language-ID
//! probes.

mod probes;

pub use probes::{code_switch_probe, mismatched_id_probe, ProbeRecord, ProbeReport};

use std::collections::BTreeMap;

use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::langpack::{ScriptLabel, UnionVocab};

/// Minimum edits (insertions + deletions + substitutions) turning one
/// sequence into the other. Symmetric; empty sequences allowed.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    if reference.is_empty() {
        return hypothesis.len();
    }
    if hypothesis.is_empty() {
        return reference.len();
    }
    let n = hypothesis.len();
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut curr = vec![0usize; n + 1];
    for (i, r) in reference.iter().enumerate() {
        curr[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let cost = usize::from(r != h);
            curr[j + 1] = (prev[j + 1] + 1).min(curr[j] + 1).min(prev[j] + cost);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[n]
}

/// Per-language error tallies.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageErrorRates {
    pub wer: f64,
    pub cer: f64,
    pub word_count: usize,
    pub char_count: usize,
    pub word_edits: usize,
    pub char_edits: usize,
}

/// Corpus-level error report with word-count-weighted averages.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRateReport {
    pub per_language: Vec<(String, LanguageErrorRates)>,
    pub weighted_average_wer: f64,
    pub weighted_average_cer: f64,
}

fn words_of(text: &str) -> Vec<&str> {
    text.split(' ').filter(|w| !w.is_empty()).collect()
}

/// Score hypotheses against a reference split: WER over space-separated
/// words, CER over graphemes with spaces included. The weighted averages
/// weight each language by its reference word (resp. character) count.
pub fn score_corpus(
    references: &[Utterance],
    hypotheses: &BTreeMap<String, String>,
) -> Result<ErrorRateReport> {
    let missing: Vec<String> = references
        .iter()
        .filter(|u| !hypotheses.contains_key(&u.id))
        .map(|u| u.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(missing));
    }

    let mut order: Vec<String> = Vec::new();
    let mut tallies: BTreeMap<String, LanguageErrorRates> = BTreeMap::new();
    for utt in references {
        let hyp = &hypotheses[&utt.id];
        let ref_words = words_of(&utt.transcript);
        let hyp_words = words_of(hyp);
        let ref_chars: Vec<char> = utt.transcript.chars().collect();
        let hyp_chars: Vec<char> = hyp.chars().collect();
        let entry = tallies.entry(utt.language.clone()).or_insert_with(|| {
            order.push(utt.language.clone());
            LanguageErrorRates {
                wer: 0.0,
                cer: 0.0,
                word_count: 0,
                char_count: 0,
                word_edits: 0,
                char_edits: 0,
            }
        });
        entry.word_edits += edit_distance(&ref_words, &hyp_words);
        entry.word_count += ref_words.len();
        entry.char_edits += edit_distance(&ref_chars, &hyp_chars);
        entry.char_count += ref_chars.len();
    }

    let mut per_language = Vec::with_capacity(order.len());
    for lang in order {
        let mut t = tallies.remove(&lang).unwrap();
        t.wer = t.word_edits as f64 / t.word_count.max(1) as f64;
        t.cer = t.char_edits as f64 / t.char_count.max(1) as f64;
        per_language.push((lang, t));
    }

    let total_words: usize = per_language.iter().map(|(_, t)| t.word_count).sum();
    let total_chars: usize = per_language.iter().map(|(_, t)| t.char_count).sum();
    let weighted_average_wer = per_language
        .iter()
        .map(|(_, t)| t.wer * t.word_count as f64)
        .sum::<f64>()
        / total_words.max(1) as f64;
    let weighted_average_cer = per_language
        .iter()
        .map(|(_, t)| t.cer * t.char_count as f64)
        .sum::<f64>()
        / total_chars.max(1) as f64;

    Ok(ErrorRateReport {
        per_language,
        weighted_average_wer,
        weighted_average_cer,
    })
}

impl ErrorRateReport {
    /// Human-readable table, one language per row plus the weighted
    /// average.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<14} {:>8} {:>8} {:>8} {:>8}\n",
            "language", "wer%", "cer%", "words", "chars"
        ));
        for (lang, t) in &self.per_language {
            out.push_str(&format!(
                "{:<14} {:>8.2} {:>8.2} {:>8} {:>8}\n",
                lang,
                100.0 * t.wer,
                100.0 * t.cer,
                t.word_count,
                t.char_count
            ));
        }
        out.push_str(&format!(
            "{:<14} {:>8.2} {:>8.2}\n",
            "weighted avg.",
            100.0 * self.weighted_average_wer,
            100.0 * self.weighted_average_cer
        ));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("language,wer,cer,word_count,char_count\n");
        for (lang, t) in &self.per_language {
            out.push_str(&format!(
                "{lang},{},{},{},{}\n",
                t.wer, t.cer, t.word_count, t.char_count
            ));
        }
        out.push_str(&format!(
            "weighted_avg,{},{},,\n",
            self.weighted_average_wer, self.weighted_average_cer
        ));
        out
    }
}

/// Word-script confusion: rows are truth languages, columns are predicted
/// script labels (every language, then `mixed`, then `oov`); each row is
/// a distribution over labels. Stored at full precision; truncation to
/// 1e-3 happens only in the rendered grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn confusion_matrix(
    references: &[Utterance],
    hypotheses: &BTreeMap<String, String>,
    vocab: &UnionVocab,
) -> Result<ConfusionMatrix> {
    let mut labels: Vec<String> = vocab.languages().map(|s| s.to_string()).collect();
    labels.push("mixed".into());
    labels.push("oov".into());
    let label_index = |label: &ScriptLabel| -> usize {
        match label {
            ScriptLabel::Language(id) => vocab.language_index(id).unwrap(),
            ScriptLabel::Mixed => labels.len() - 2,
            ScriptLabel::OutOfVocabulary => labels.len() - 1,
        }
    };

    let mut row_order: Vec<String> = Vec::new();
    let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for utt in references {
        if vocab.language_index(&utt.language).is_none() {
            return Err(Error::Registry(format!(
                "utterance {} has unregistered truth language {:?}",
                utt.id, utt.language
            )));
        }
        let Some(hyp) = hypotheses.get(&utt.id) else {
            return Err(Error::Coverage(vec![utt.id.clone()]));
        };
        let row = counts.entry(utt.language.clone()).or_insert_with(|| {
            row_order.push(utt.language.clone());
            vec![0; labels.len()]
        });
        for word in words_of(hyp) {
            let label = vocab.classify_word(word, &utt.language)?;
            row[label_index(&label)] += 1;
        }
    }

    let rows = row_order
        .into_iter()
        .map(|lang| {
            let raw = &counts[&lang];
            let total: usize = raw.iter().sum();
            let norm: Vec<f64> = raw
                .iter()
                .map(|&c| if total > 0 { c as f64 / total as f64 } else { 0.0 })
                .collect();
            (lang, norm)
        })
        .collect();

    Ok(ConfusionMatrix { labels, rows })
}

impl ConfusionMatrix {
    pub fn diagonal_mass(&self, truth: &str) -> Option<f64> {
        let col = self.labels.iter().position(|l| l == truth)?;
        self.rows
            .iter()
            .find(|(lang, _)| lang == truth)
            .map(|(_, row)| row[col])
    }

    /// Grid rendering, entries truncated to a precision of 1e-3.
    pub fn to_grid(&self) -> String {
        let mut out = String::from("truth");
        for label in &self.labels {
            out.push_str(&format!("\t{label}"));
        }
        out.push('\n');
        for (lang, row) in &self.rows {
            out.push_str(lang);
            for v in row {
                out.push_str(&format!("\t{:.3}", (v * 1000.0).trunc() / 1000.0));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FeatureSequence;
    use crate::langpack::{build_union, LanguageSpec};

    fn utt(id: &str, language: &str, transcript: &str) -> Utterance {
        Utterance {
            id: id.into(),
            language: language.into(),
            transcript: transcript.into(),
            features: FeatureSequence::new(1, 1, vec![0.0], 10.0).unwrap(),
        }
    }

    #[test]
    fn edit_distance_basics() {
        let a: Vec<char> = "abc".chars().collect();
        assert_eq!(edit_distance(&a, &a), 0);
        assert_eq!(edit_distance(&a, &[]), 3);
        assert_eq!(edit_distance::<char>(&[], &[]), 0);
        let kitten: Vec<char> = "kitten".chars().collect();
        let sitting: Vec<char> = "sitting".chars().collect();
        assert_eq!(edit_distance(&kitten, &sitting), 3);
        assert_eq!(edit_distance(&sitting, &kitten), 3);
    }

    #[test]
    fn perfect_hypotheses_score_zero() {
        let refs = vec![utt("u1", "aa", "ab cd"), utt("u2", "bb", "xy")];
        let hyps: BTreeMap<String, String> = refs
            .iter()
            .map(|u| (u.id.clone(), u.transcript.clone()))
            .collect();
        let report = score_corpus(&refs, &hyps).unwrap();
        assert_eq!(report.weighted_average_wer, 0.0);
        assert_eq!(report.weighted_average_cer, 0.0);
        for (_, t) in &report.per_language {
            assert_eq!(t.wer, 0.0);
            assert_eq!(t.cer, 0.0);
        }
    }

    #[test]
    fn weighted_average_is_word_count_weighted() {
        // One error in 10 words for aa, none in 30 for bb: average 1/40.
        let refs = vec![
            utt("u1", "aa", "w w w w w w w w w w"),
            utt("u2", "bb", &"v ".repeat(30).trim_end()),
        ];
        let mut hyps = BTreeMap::new();
        hyps.insert("u1".to_string(), "w w w w w w w w w x".to_string());
        hyps.insert("u2".to_string(), refs[1].transcript.clone());
        let report = score_corpus(&refs, &hyps).unwrap();
        let aa = &report.per_language.iter().find(|(l, _)| l == "aa").unwrap().1;
        assert!((aa.wer - 0.1).abs() < 1e-12);
        assert!((report.weighted_average_wer - 1.0 / 40.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_average_matches_recomputation() {
        let refs = vec![
            utt("u1", "aa", "ab cd ef"),
            utt("u2", "bb", "gh ij"),
            utt("u3", "aa", "kl"),
        ];
        let mut hyps = BTreeMap::new();
        hyps.insert("u1".into(), "ab xx ef".into());
        hyps.insert("u2".into(), "gh".into());
        hyps.insert("u3".into(), "kl".into());
        let report = score_corpus(&refs, &hyps).unwrap();
        let num: f64 = report
            .per_language
            .iter()
            .map(|(_, t)| t.wer * t.word_count as f64)
            .sum();
        let den: f64 = report
            .per_language
            .iter()
            .map(|(_, t)| t.word_count as f64)
            .sum();
        assert_eq!(report.weighted_average_wer, num / den);
    }

    #[test]
    fn missing_hypotheses_are_reported() {
        let refs = vec![utt("u1", "aa", "ab"), utt("u2", "aa", "cd")];
        let mut hyps = BTreeMap::new();
        hyps.insert("u1".to_string(), "ab".to_string());
        match score_corpus(&refs, &hyps) {
            Err(Error::Coverage(ids)) => assert_eq!(ids, vec!["u2".to_string()]),
            other => panic!("expected coverage error, got {other:?}"),
        }
    }

    fn toy_vocab() -> UnionVocab {
        build_union(&[
            LanguageSpec::new("aa", "A", "abc").unwrap(),
            LanguageSpec::new("bb", "B", "xyz").unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn clean_hypotheses_give_identity_confusion() {
        let vocab = toy_vocab();
        let refs = vec![utt("u1", "aa", "ab ba"), utt("u2", "bb", "xy yx")];
        let hyps: BTreeMap<String, String> = refs
            .iter()
            .map(|u| (u.id.clone(), u.transcript.clone()))
            .collect();
        let m = confusion_matrix(&refs, &hyps, &vocab).unwrap();
        assert_eq!(m.diagonal_mass("aa"), Some(1.0));
        assert_eq!(m.diagonal_mass("bb"), Some(1.0));
        for (_, row) in &m.rows {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_mixed_word_among_many() {
        let vocab = toy_vocab();
        // 999 clean words plus one mixing both scripts.
        let clean = vec!["ab"; 999].join(" ");
        let refs = vec![utt("u1", "aa", &format!("{clean} ax"))];
        let mut hyps = BTreeMap::new();
        hyps.insert("u1".to_string(), format!("{clean} ax"));
        let m = confusion_matrix(&refs, &hyps, &vocab).unwrap();
        let row = &m.rows[0].1;
        let mixed_col = m.labels.iter().position(|l| l == "mixed").unwrap();
        assert!((row[mixed_col] - 0.001).abs() < 1e-12);
        // Grid truncation shows exactly 0.001.
        assert!(m.to_grid().contains("0.001"));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn triangle_inequality_and_identity(
                a in proptest::collection::vec(0u8..4, 0..12),
                b in proptest::collection::vec(0u8..4, 0..12),
                c in proptest::collection::vec(0u8..4, 0..12),
            ) {
                let ab = edit_distance(&a, &b);
                let bc = edit_distance(&b, &c);
                let ac = edit_distance(&a, &c);
                prop_assert!(ac <= ab + bc);
                prop_assert_eq!(edit_distance(&a, &a), 0);
                prop_assert_eq!(ab == 0, a == b);
                prop_assert_eq!(ab, edit_distance(&b, &a));
            }
        }
    }
}
