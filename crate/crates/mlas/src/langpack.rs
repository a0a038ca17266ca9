//! Language registry: per-language grapheme inventories, union vocabulary
//! construction, token/index mapping, and word-level script classification.
//!
//! The registry file format is a line-based text document:
//!
//! ```text
//! registry-version 1
//! language <id>
//! display-name <free text>
//! graphemes <single-codepoint graphemes, concatenated>
//! ```
//!
//! One `language`/`display-name`/`graphemes` triple per language, in
//! registry order. Serialization is deterministic, so a parse/serialize
//! round trip is byte-identical.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

/// Index of the padding token in every vocabulary.
pub const PAD: usize = 0;
/// Index of the start-of-sequence token.
pub const SOS: usize = 1;
/// Index of the end-of-sequence token.
pub const EOS: usize = 2;
/// Index of the space token; space is a first-class output token so that
/// decoded text segments into words.
pub const SPACE: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const SOS_TOKEN: &str = "<sos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const SPACE_TOKEN: &str = " ";

/// One language: a stable id, a display name, and its grapheme inventory.
/// Graphemes are single unicode codepoints; no combining-mark
/// normalization is applied.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LanguageSpec {
    pub id: String,
    pub display_name: String,
    pub graphemes: Vec<String>,
}

impl LanguageSpec {
    pub fn new(id: &str, display_name: &str, graphemes: &str) -> Result<Self> {
        let graphemes: Vec<String> = graphemes.chars().map(|c| c.to_string()).collect();
        let spec = LanguageSpec {
            id: id.to_string(),
            display_name: display_name.to_string(),
            graphemes,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.graphemes.is_empty() {
            return Err(Error::InvalidSpec(format!(
                "language {:?} has an empty grapheme set",
                self.id
            )));
        }
        let mut seen = HashSet::new();
        for gr in &self.graphemes {
            if gr.chars().count() != 1 {
                return Err(Error::InvalidSpec(format!(
                    "grapheme {gr:?} in {:?} is not a single codepoint",
                    self.id
                )));
            }
            if !seen.insert(gr) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate grapheme {gr:?} in {:?}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Script classification of one word against a registry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScriptLabel {
    Language(String),
    Mixed,
    OutOfVocabulary,
}

impl fmt::Display for ScriptLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptLabel::Language(id) => write!(f, "{id}"),
            ScriptLabel::Mixed => write!(f, "mixed"),
            ScriptLabel::OutOfVocabulary => write!(f, "oov"),
        }
    }
}

/// Union vocabulary over a language registry: the four specials followed
/// by the codepoint-sorted union of all grapheme inventories. Immutable
/// after construction.
#[derive(Clone, Debug)]
pub struct UnionVocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    specs: Vec<LanguageSpec>,
    charsets: Vec<HashSet<String>>,
    /// Language membership per token index (empty for specials).
    membership: Vec<Vec<usize>>,
}

/// Build the union vocabulary for a registry of language specs.
///
/// Overlapping graphemes appear once with multi-language membership;
/// token ordering is the codepoint sort so identical registries always
/// produce identical vocabularies.
pub fn build_union(specs: &[LanguageSpec]) -> Result<UnionVocab> {
    if specs.is_empty() {
        return Err(Error::Registry("no languages registered".into()));
    }
    let mut ids = HashSet::new();
    for spec in specs {
        spec.validate()?;
        if !ids.insert(&spec.id) {
            return Err(Error::Registry(format!(
                "duplicate language id {:?}",
                spec.id
            )));
        }
    }

    let mut union: Vec<String> = specs
        .iter()
        .flat_map(|s| s.graphemes.iter().cloned())
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    union.sort();

    let mut tokens = vec![
        PAD_TOKEN.to_string(),
        SOS_TOKEN.to_string(),
        EOS_TOKEN.to_string(),
        SPACE_TOKEN.to_string(),
    ];
    tokens.extend(union);

    let index: HashMap<String, usize> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();

    let charsets: Vec<HashSet<String>> = specs
        .iter()
        .map(|s| s.graphemes.iter().cloned().collect())
        .collect();

    let membership: Vec<Vec<usize>> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if i < 4 {
                Vec::new()
            } else {
                charsets
                    .iter()
                    .enumerate()
                    .filter(|(_, cs)| cs.contains(t))
                    .map(|(l, _)| l)
                    .collect()
            }
        })
        .collect();

    Ok(UnionVocab {
        tokens,
        index,
        specs: specs.to_vec(),
        charsets,
        membership,
    })
}

impl UnionVocab {
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(|s| s.as_str())
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.specs.iter().map(|s| s.id.as_str())
    }

    pub fn num_languages(&self) -> usize {
        self.specs.len()
    }

    pub fn specs(&self) -> &[LanguageSpec] {
        &self.specs
    }

    pub fn language_index(&self, id: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.id == id)
    }

    /// Language memberships of a token index (empty for the specials).
    pub fn membership(&self, index: usize) -> &[usize] {
        &self.membership[index]
    }

    /// Stable fingerprint over tokens and language ids, stored in
    /// checkpoints to detect registry/corpus mismatches.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for t in &self.tokens {
            eat(t.as_bytes());
            eat(b"\x1f");
        }
        for s in &self.specs {
            eat(s.id.as_bytes());
            eat(b"\x1e");
        }
        h
    }

    /// Encode a transcript into token indices. Space maps to the space
    /// token; sos/eos are the caller's responsibility.
    pub fn encode_transcript(&self, text: &str) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(text.chars().count());
        for (pos, ch) in text.chars().enumerate() {
            let key = ch.to_string();
            match self.index.get(key.as_str()) {
                Some(&i) => out.push(i),
                None => {
                    return Err(Error::Oov {
                        codepoint: key,
                        position: pos,
                    })
                }
            }
        }
        Ok(out)
    }

    /// Decode token indices back to text. Pad, sos and eos contribute
    /// nothing; space decodes to a literal space.
    pub fn decode_tokens(&self, indices: &[usize]) -> Result<String> {
        let mut out = String::new();
        for &i in indices {
            match i {
                PAD | SOS | EOS => continue,
                _ => {
                    let token = self.tokens.get(i).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "token index {i} out of range for vocab of {}",
                            self.tokens.len()
                        ))
                    })?;
                    out.push_str(token);
                }
            }
        }
        Ok(out)
    }

    /// Classify a word's script. The ground-truth language is tested
    /// first; on failure the other languages are tried in registry order;
    /// a word whose graphemes are all known but not covered by any single
    /// language is `mixed`; an unknown grapheme makes it
    /// `out-of-vocabulary`.
    pub fn classify_word(&self, word: &str, truth_language: &str) -> Result<ScriptLabel> {
        if word.is_empty() {
            return Err(Error::InvalidArgument("classify_word: empty word".into()));
        }
        let truth = self.language_index(truth_language).ok_or_else(|| {
            Error::Registry(format!("unknown truth language {truth_language:?}"))
        })?;
        let graphemes: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        for gr in &graphemes {
            if !self.index.contains_key(gr.as_str()) || self.membership(self.index[gr.as_str()]).is_empty() {
                return Ok(ScriptLabel::OutOfVocabulary);
            }
        }
        let covers = |lang: usize| graphemes.iter().all(|gr| self.charsets[lang].contains(gr));
        if covers(truth) {
            return Ok(ScriptLabel::Language(self.specs[truth].id.clone()));
        }
        for lang in 0..self.specs.len() {
            if lang != truth && covers(lang) {
                return Ok(ScriptLabel::Language(self.specs[lang].id.clone()));
            }
        }
        Ok(ScriptLabel::Mixed)
    }
}

/// Serialize a registry to the line-based text format.
pub fn registry_to_string(specs: &[LanguageSpec]) -> String {
    let mut out = String::from("registry-version 1\n");
    for spec in specs {
        out.push_str(&format!("language {}\n", spec.id));
        out.push_str(&format!("display-name {}\n", spec.display_name));
        out.push_str(&format!("graphemes {}\n", spec.graphemes.concat()));
    }
    out
}

/// Parse the registry text format.
pub fn registry_from_string(text: &str) -> Result<Vec<LanguageSpec>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "registry-version 1")) => {}
        other => {
            return Err(Error::Format(format!(
                "registry: missing version header, got {:?}",
                other.map(|(_, l)| l)
            )))
        }
    }
    let mut specs = Vec::new();
    let mut pending: Option<(String, Option<String>)> = None;
    for (lineno, line) in lines {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| Error::Format(format!("registry line {}: {line:?}", lineno + 1)))?;
        match key {
            "language" => {
                if pending.is_some() {
                    return Err(Error::Format(format!(
                        "registry line {}: incomplete language block",
                        lineno + 1
                    )));
                }
                pending = Some((value.to_string(), None));
            }
            "display-name" => match pending.as_mut() {
                Some((_, dn @ None)) => *dn = Some(value.to_string()),
                _ => {
                    return Err(Error::Format(format!(
                        "registry line {}: display-name out of order",
                        lineno + 1
                    )))
                }
            },
            "graphemes" => match pending.take() {
                Some((id, Some(display_name))) => {
                    specs.push(LanguageSpec::new(&id, &display_name, value)?);
                }
                _ => {
                    return Err(Error::Format(format!(
                        "registry line {}: graphemes out of order",
                        lineno + 1
                    )))
                }
            },
            other => {
                return Err(Error::Format(format!(
                    "registry line {}: unknown key {other:?}",
                    lineno + 1
                )))
            }
        }
    }
    if pending.is_some() {
        return Err(Error::Format("registry: trailing incomplete block".into()));
    }
    if specs.is_empty() {
        return Err(Error::Format("registry: no languages".into()));
    }
    Ok(specs)
}

pub fn write_registry(path: &Path, specs: &[LanguageSpec]) -> Result<()> {
    std::fs::write(path, registry_to_string(specs))?;
    Ok(())
}

pub fn read_registry(path: &Path) -> Result<Vec<LanguageSpec>> {
    registry_from_string(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_specs() -> Vec<LanguageSpec> {
        vec![
            LanguageSpec::new("aa", "Language A", "abc").unwrap(),
            LanguageSpec::new("bb", "Language B", "cdef").unwrap(),
            LanguageSpec::new("cc", "Language C", "xyz").unwrap(),
        ]
    }

    #[test]
    fn union_of_disjoint_sets() {
        let specs = vec![
            LanguageSpec::new("aa", "A", "abc").unwrap(),
            LanguageSpec::new("bb", "B", "defg").unwrap(),
        ];
        let vocab = build_union(&specs).unwrap();
        assert_eq!(vocab.size(), 4 + 7);
    }

    #[test]
    fn union_of_identical_sets_is_idempotent() {
        let specs = vec![
            LanguageSpec::new("aa", "A", "abcde").unwrap(),
            LanguageSpec::new("bb", "B", "abcde").unwrap(),
        ];
        let vocab = build_union(&specs).unwrap();
        assert_eq!(vocab.size(), 4 + 5);
        for i in 4..vocab.size() {
            assert_eq!(vocab.membership(i).len(), 2);
        }
    }

    #[test]
    fn union_rejects_duplicate_ids_and_empty_sets() {
        let dup = vec![
            LanguageSpec::new("aa", "A", "ab").unwrap(),
            LanguageSpec::new("aa", "A2", "cd").unwrap(),
        ];
        assert!(matches!(build_union(&dup), Err(Error::Registry(_))));
        assert!(matches!(
            LanguageSpec::new("aa", "A", ""),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn union_is_order_insensitive() {
        let specs = toy_specs();
        let a = build_union(&specs).unwrap();
        let permuted = vec![specs[2].clone(), specs[0].clone(), specs[1].clone()];
        let b = build_union(&permuted).unwrap();
        assert_eq!(a.tokens(), b.tokens());
        for (i, t) in a.tokens().iter().enumerate() {
            let mem_a: Vec<&str> = a.membership(i).iter().map(|&l| a.specs()[l].id.as_str()).collect();
            let mut mem_a = mem_a;
            mem_a.sort_unstable();
            let j = b.index_of(t).unwrap();
            let mut mem_b: Vec<&str> =
                b.membership(j).iter().map(|&l| b.specs()[l].id.as_str()).collect();
            mem_b.sort_unstable();
            assert_eq!(mem_a, mem_b, "membership mismatch for {t:?}");
        }
    }

    #[test]
    fn every_non_special_token_has_membership() {
        let vocab = build_union(&toy_specs()).unwrap();
        for i in 4..vocab.size() {
            assert!(!vocab.membership(i).is_empty());
        }
    }

    #[test]
    fn classify_unique_script() {
        let vocab = build_union(&toy_specs()).unwrap();
        assert_eq!(
            vocab.classify_word("ab", "aa").unwrap(),
            ScriptLabel::Language("aa".into())
        );
    }

    #[test]
    fn classify_mixed_word() {
        let vocab = build_union(&toy_specs()).unwrap();
        // One grapheme unique to aa, one unique to cc.
        assert_eq!(vocab.classify_word("ax", "aa").unwrap(), ScriptLabel::Mixed);
    }

    #[test]
    fn classify_prefers_truth_language_on_overlap() {
        // "c" belongs to both aa and bb; truth wins regardless of registry order.
        let vocab = build_union(&toy_specs()).unwrap();
        assert_eq!(
            vocab.classify_word("c", "bb").unwrap(),
            ScriptLabel::Language("bb".into())
        );
        assert_eq!(
            vocab.classify_word("c", "aa").unwrap(),
            ScriptLabel::Language("aa".into())
        );
        // Not coverable by the truth language: first covering language in
        // registry order wins.
        assert_eq!(
            vocab.classify_word("cd", "aa").unwrap(),
            ScriptLabel::Language("bb".into())
        );
    }

    #[test]
    fn classify_flags_oov_and_rejects_unknown_truth() {
        let vocab = build_union(&toy_specs()).unwrap();
        assert_eq!(
            vocab.classify_word("aq", "aa").unwrap(),
            ScriptLabel::OutOfVocabulary
        );
        assert!(matches!(
            vocab.classify_word("ab", "zz"),
            Err(Error::Registry(_))
        ));
    }

    #[test]
    fn classify_never_mixed_when_one_charset_covers() {
        let vocab = build_union(&toy_specs()).unwrap();
        for spec in vocab.specs().to_vec() {
            for gr in &spec.graphemes {
                let word = format!("{gr}{gr}");
                let label = vocab.classify_word(&word, &spec.id).unwrap();
                assert_ne!(label, ScriptLabel::Mixed);
            }
        }
    }

    #[test]
    fn encode_decode_round_trip_basics() {
        let vocab = build_union(&toy_specs()).unwrap();
        assert_eq!(vocab.encode_transcript("").unwrap(), Vec::<usize>::new());
        assert_eq!(vocab.decode_tokens(&[]).unwrap(), "");
        let ids = vocab.encode_transcript("a").unwrap();
        assert_eq!(ids.len(), 1);
        assert_eq!(vocab.token(ids[0]).unwrap(), "a");
        let text = "ab cde xyz";
        let ids = vocab.encode_transcript(text).unwrap();
        assert_eq!(vocab.decode_tokens(&ids).unwrap(), text);
    }

    #[test]
    fn encode_reports_offending_codepoint_and_position() {
        let vocab = build_union(&toy_specs()).unwrap();
        match vocab.encode_transcript("ab!c") {
            Err(Error::Oov {
                codepoint,
                position,
            }) => {
                assert_eq!(codepoint, "!");
                assert_eq!(position, 2);
            }
            other => panic!("expected oov error, got {other:?}"),
        }
    }

    #[test]
    fn registry_round_trip_bytes() {
        let specs = toy_specs();
        let text = registry_to_string(&specs);
        let parsed = registry_from_string(&text).unwrap();
        assert_eq!(parsed, specs);
        assert_eq!(registry_to_string(&parsed), text);
    }

    #[test]
    fn registry_rejects_malformed_input() {
        assert!(registry_from_string("registry-version 2\n").is_err());
        assert!(registry_from_string("registry-version 1\nlanguage aa\n").is_err());
        assert!(registry_from_string(
            "registry-version 1\nlanguage aa\ngraphemes abc\n"
        )
        .is_err());
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = build_union(&toy_specs()).unwrap();
        let b = build_union(&toy_specs()).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let other = build_union(&[LanguageSpec::new("aa", "A", "abc").unwrap()]).unwrap();
        assert_ne!(a.fingerprint(), other.fingerprint());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_random_union_strings(indices in proptest::collection::vec(0usize..10, 0..20)) {
                let vocab = build_union(&toy_specs()).unwrap();
                // Map random picks onto in-vocabulary graphemes plus space.
                let pool: Vec<String> = vocab.tokens()[3..].to_vec();
                let text: String = indices.iter().map(|&i| pool[i % pool.len()].clone()).collect();
                let ids = vocab.encode_transcript(&text).unwrap();
                prop_assert_eq!(vocab.decode_tokens(&ids).unwrap(), text);
            }
        }
    }
}
