//! Feature frontend (frame stacking/striding) and a synthetic multilingual
//! corpus generator: phonetically shared languages with disjoint scripts,
//! small enough that every experiment runs on one desktop core.

mod io;
mod synth;

pub use io::{load_corpus, read_feature_file, write_corpus, write_feature_file, Manifest, ManifestEntry};
pub use synth::{
    build_corpus, transliterate, BorrowedWords, CorpusConfig, CorpusGenerator, LanguageConfig,
    PhoneInventory, PhoneModel, SyntheticLanguage,
};

use crate::error::{Error, Result};

/// A time-major matrix of acoustic feature frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f64>,
    num_frames: usize,
    dim: usize,
    pub frame_period_ms: f64,
}

impl FeatureSequence {
    pub fn new(num_frames: usize, dim: usize, data: Vec<f64>, frame_period_ms: f64) -> Result<Self> {
        if num_frames == 0 {
            return Err(Error::InvalidArgument(
                "feature sequence needs at least one frame".into(),
            ));
        }
        if data.len() != num_frames * dim {
            return Err(Error::Shape(format!(
                "feature sequence {num_frames}x{dim} requires {} values, got {}",
                num_frames * dim,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("feature sequence".into()));
        }
        Ok(FeatureSequence {
            data,
            num_frames,
            dim,
            frame_period_ms,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim)
    }

    pub fn raw(&self) -> &[f64] {
        &self.data
    }
}

/// One training/evaluation example: features plus grapheme transcript and
/// language label. Probe constructions may carry a sentinel language of
/// the form `code-switched:a+b`.
#[derive(Clone, Debug)]
pub struct Utterance {
    pub id: String,
    pub language: String,
    pub transcript: String,
    pub features: FeatureSequence,
}

/// Train/validation/test splits plus the registry they were generated
/// against.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub specs: Vec<crate::langpack::LanguageSpec>,
    pub train: Vec<Utterance>,
    pub validation: Vec<Utterance>,
    pub test: Vec<Utterance>,
    pub seed: u64,
}

impl Corpus {
    pub fn split(&self, name: &str) -> Option<&[Utterance]> {
        match name {
            "train" => Some(&self.train),
            "validation" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn language_subset(&self, split: &[Utterance], language: &str) -> Vec<Utterance> {
        split
            .iter()
            .filter(|u| u.language == language)
            .cloned()
            .collect()
    }
}

/// Stack `window` consecutive frames and stride by `stride`.
///
/// The output length is `floor((max(T, window) - window) / stride) + 1`;
/// when `T < window` (or a window overruns the tail) the missing frames
/// are filled by repeating the final frame, so no input is discarded and
/// no index beyond `T - 1` is ever read.
pub fn stack_frames(
    features: &FeatureSequence,
    window: usize,
    stride: usize,
) -> Result<FeatureSequence> {
    if window == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "stack_frames: window {window}, stride {stride}"
        )));
    }
    let t = features.num_frames();
    let dim = features.dim();
    let out_len = (t.max(window) - window) / stride + 1;
    let mut data = Vec::with_capacity(out_len * window * dim);
    for k in 0..out_len {
        for offset in 0..window {
            let idx = (k * stride + offset).min(t - 1);
            data.extend_from_slice(features.frame(idx));
        }
    }
    FeatureSequence::new(
        out_len,
        window * dim,
        data,
        features.frame_period_ms * stride as f64,
    )
}

/// Concatenate two utterances with a silent gap, producing a
/// code-switching probe input: features `a || silence(gap) || b`,
/// transcripts joined by a space, and the sentinel language
/// `code-switched:<a>+<b>`.
pub fn concat_utterances(a: &Utterance, b: &Utterance, gap_ms: f64) -> Result<Utterance> {
    if a.features.dim() != b.features.dim() {
        return Err(Error::Shape(format!(
            "concat_utterances: feature dims {} vs {}",
            a.features.dim(),
            b.features.dim()
        )));
    }
    if a.features.frame_period_ms != b.features.frame_period_ms {
        return Err(Error::Shape(format!(
            "concat_utterances: frame periods {} vs {}",
            a.features.frame_period_ms, b.features.frame_period_ms
        )));
    }
    if a.transcript.is_empty() || b.transcript.is_empty() {
        return Err(Error::InvalidArgument(
            "concat_utterances: empty utterance".into(),
        ));
    }
    let dim = a.features.dim();
    let gap_frames = (gap_ms / a.features.frame_period_ms).round() as usize;
    let total = a.features.num_frames() + gap_frames + b.features.num_frames();
    let mut data = Vec::with_capacity(total * dim);
    data.extend_from_slice(a.features.raw());
    data.extend(std::iter::repeat(0.0).take(gap_frames * dim));
    data.extend_from_slice(b.features.raw());
    Ok(Utterance {
        id: format!("{}+{}", a.id, b.id),
        language: format!("code-switched:{}+{}", a.language, b.language),
        transcript: format!("{} {}", a.transcript, b.transcript),
        features: FeatureSequence::new(total, dim, data, a.features.frame_period_ms)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(t: usize, dim: usize) -> FeatureSequence {
        let data: Vec<f64> = (0..t * dim).map(|i| i as f64).collect();
        FeatureSequence::new(t, dim, data, 10.0).unwrap()
    }

    /// Index-enumeration oracle for stacking: lists, per output frame, the
    /// input indices that should be concatenated.
    fn stacking_oracle(t: usize, window: usize, stride: usize) -> Vec<Vec<usize>> {
        let out_len = (t.max(window) - window) / stride + 1;
        (0..out_len)
            .map(|k| {
                (0..window)
                    .map(|o| std::cmp::min(k * stride + o, t - 1))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn stack_exactly_one_window() {
        let f = ramp(8, 2);
        let s = stack_frames(&f, 8, 3).unwrap();
        assert_eq!(s.num_frames(), 1);
        assert_eq!(s.dim(), 16);
        assert_eq!(s.frame(0), f.raw());
    }

    #[test]
    fn stack_length_formula() {
        let f = ramp(26, 2);
        let s = stack_frames(&f, 8, 3).unwrap();
        assert_eq!(s.num_frames(), 7);
    }

    #[test]
    fn stack_pads_short_input_by_repeating_final_frame() {
        let f = ramp(5, 2);
        let s = stack_frames(&f, 8, 3).unwrap();
        assert_eq!(s.num_frames(), 1);
        let expect = stacking_oracle(5, 8, 3);
        let got = s.frame(0);
        for (slot, &src) in expect[0].iter().enumerate() {
            assert_eq!(&got[slot * 2..slot * 2 + 2], f.frame(src));
        }
        // Last three positions are repeats of frame 4.
        assert_eq!(&got[10..12], f.frame(4));
        assert_eq!(&got[12..14], f.frame(4));
        assert_eq!(&got[14..16], f.frame(4));
    }

    #[test]
    fn stack_never_references_out_of_range_inputs() {
        for t in 1..=100 {
            let f = ramp(t, 1);
            let s = stack_frames(&f, 8, 3).unwrap();
            let oracle = stacking_oracle(t, 8, 3);
            assert_eq!(s.num_frames(), oracle.len(), "t = {t}");
            for (k, indices) in oracle.iter().enumerate() {
                assert!(indices.iter().all(|&i| i < t));
                let frame = s.frame(k);
                for (slot, &src) in indices.iter().enumerate() {
                    assert_eq!(frame[slot], f.frame(src)[0], "t={t} k={k} slot={slot}");
                }
            }
        }
    }

    #[test]
    fn stack_rejects_bad_window_or_stride() {
        let f = ramp(4, 1);
        assert!(stack_frames(&f, 0, 3).is_err());
        assert!(stack_frames(&f, 8, 0).is_err());
    }

    fn utt(id: &str, t: usize, transcript: &str) -> Utterance {
        Utterance {
            id: id.into(),
            language: "aa".into(),
            transcript: transcript.into(),
            features: ramp(t, 3),
        }
    }

    #[test]
    fn concat_inserts_exact_gap_frames() {
        let a = utt("a", 7, "ab");
        let b = utt("b", 9, "cd");
        let joined = concat_utterances(&a, &b, 50.0).unwrap();
        assert_eq!(joined.features.num_frames(), 7 + 5 + 9);
        assert_eq!(joined.transcript, "ab cd");
        assert_eq!(joined.language, "code-switched:aa+aa");
        // Gap frames are silent.
        for t in 7..12 {
            assert!(joined.features.frame(t).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn concat_rejects_empty_and_mismatched() {
        let a = utt("a", 4, "ab");
        let empty = utt("e", 4, "");
        assert!(concat_utterances(&a, &empty, 50.0).is_err());
        let mut b = utt("b", 4, "cd");
        b.features = FeatureSequence::new(4, 2, vec![0.0; 8], 10.0).unwrap();
        assert!(matches!(
            concat_utterances(&a, &b, 50.0),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn feature_sequence_rejects_empty_and_nonfinite() {
        assert!(FeatureSequence::new(0, 2, vec![], 10.0).is_err());
        assert!(FeatureSequence::new(1, 2, vec![1.0, f64::NAN], 10.0).is_err());
    }
}
