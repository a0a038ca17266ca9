//! Corpus persistence.
//!
//! A corpus directory holds:
//!
//! ```text
//! registry.txt        language registry (see langpack)
//! manifest.txt        one line of metadata per utterance
//! features/<id>.feat  flat binary feature file per utterance
//! ```
//!
//! Feature file layout: `T` then `F` as little-endian u32, followed by
//! `T*F` little-endian f32 values, row-major. The manifest is
//! tab-separated text:
//!
//! ```text
//! corpus-manifest-version 1
//! seed <u64>
//! frame-period-ms <f64>
//! feature-dim <usize>
//! utterance <id>\t<language>\t<split>\t<relative path>\t<transcript>
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::corpus::{Corpus, FeatureSequence, Utterance};
use crate::error::{Error, Result};
use crate::langpack;

pub fn write_feature_file(path: &Path, features: &FeatureSequence) -> Result<()> {
    let mut buf: Vec<u8> =
        Vec::with_capacity(8 + features.num_frames() * features.dim() * 4);
    buf.extend_from_slice(&(features.num_frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(features.dim() as u32).to_le_bytes());
    for v in features.raw() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn read_feature_file(path: &Path, frame_period_ms: f64) -> Result<FeatureSequence> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 {
        return Err(Error::Format(format!("feature file {path:?} truncated header")));
    }
    let t = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let f = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = 8 + t * f * 4;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "feature file {path:?}: expected {expected} bytes for {t}x{f}, got {}",
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(t * f);
    for chunk in bytes[8..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    FeatureSequence::new(t, f, data, frame_period_ms)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub language: String,
    pub split: String,
    pub path: String,
    pub transcript: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub seed: u64,
    pub frame_period_ms: f64,
    pub feature_dim: usize,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = String::from("corpus-manifest-version 1\n");
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("frame-period-ms {}\n", self.frame_period_ms));
        out.push_str(&format!("feature-dim {}\n", self.feature_dim));
        for e in &self.entries {
            out.push_str(&format!(
                "utterance {}\t{}\t{}\t{}\t{}\n",
                e.id, e.language, e.split, e.path, e.transcript
            ));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("corpus-manifest-version 1") {
            return Err(Error::Format("manifest: missing version header".into()));
        }
        let mut header = |key: &str| -> Result<String> {
            match lines.next().and_then(|l| l.split_once(' ')) {
                Some((k, v)) if k == key => Ok(v.to_string()),
                other => Err(Error::Format(format!(
                    "manifest: expected {key}, got {other:?}"
                ))),
            }
        };
        let seed: u64 = header("seed")?
            .parse()
            .map_err(|e| Error::Format(format!("manifest seed: {e}")))?;
        let frame_period_ms: f64 = header("frame-period-ms")?
            .parse()
            .map_err(|e| Error::Format(format!("manifest frame-period-ms: {e}")))?;
        let feature_dim: usize = header("feature-dim")?
            .parse()
            .map_err(|e| Error::Format(format!("manifest feature-dim: {e}")))?;
        let mut entries = Vec::new();
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let payload = line
                .strip_prefix("utterance ")
                .ok_or_else(|| Error::Format(format!("manifest line: {line:?}")))?;
            let fields: Vec<&str> = payload.splitn(5, '\t').collect();
            if fields.len() != 5 {
                return Err(Error::Format(format!(
                    "manifest utterance line needs 5 fields: {line:?}"
                )));
            }
            entries.push(ManifestEntry {
                id: fields[0].to_string(),
                language: fields[1].to_string(),
                split: fields[2].to_string(),
                path: fields[3].to_string(),
                transcript: fields[4].to_string(),
            });
        }
        Ok(Manifest {
            seed,
            frame_period_ms,
            feature_dim,
            entries,
        })
    }
}

/// Persist a corpus: registry, manifest and per-utterance feature files.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    let features_dir = dir.join("features");
    std::fs::create_dir_all(&features_dir)?;
    langpack::write_registry(&dir.join("registry.txt"), &corpus.specs)?;

    let mut entries = Vec::new();
    let mut dims = None;
    for (split, utts) in [
        ("train", &corpus.train),
        ("validation", &corpus.validation),
        ("test", &corpus.test),
    ] {
        for utt in utts.iter() {
            let rel = format!("features/{}.feat", utt.id);
            write_feature_file(&dir.join(&rel), &utt.features)?;
            dims = Some((utt.features.frame_period_ms, utt.features.dim()));
            entries.push(ManifestEntry {
                id: utt.id.clone(),
                language: utt.language.clone(),
                split: split.to_string(),
                path: rel,
                transcript: utt.transcript.clone(),
            });
        }
    }
    let (frame_period_ms, feature_dim) =
        dims.ok_or_else(|| Error::InvalidArgument("empty corpus".into()))?;
    let manifest = Manifest {
        seed: corpus.seed,
        frame_period_ms,
        feature_dim,
        entries,
    };
    std::fs::write(dir.join("manifest.txt"), manifest.to_text())?;
    Ok(())
}

/// Load a corpus directory written by `write_corpus`.
pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let specs = langpack::read_registry(&dir.join("registry.txt"))?;
    let manifest = Manifest::from_text(&std::fs::read_to_string(dir.join("manifest.txt"))?)?;
    let mut corpus = Corpus {
        specs,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        seed: manifest.seed,
    };
    for entry in &manifest.entries {
        let features = read_feature_file(&dir.join(&entry.path), manifest.frame_period_ms)?;
        let utt = Utterance {
            id: entry.id.clone(),
            language: entry.language.clone(),
            transcript: entry.transcript.clone(),
            features,
        };
        match entry.split.as_str() {
            "train" => corpus.train.push(utt),
            "validation" => corpus.validation.push(utt),
            "test" => corpus.test.push(utt),
            other => {
                return Err(Error::Format(format!(
                    "manifest: unknown split {other:?} for {}",
                    entry.id
                )))
            }
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CorpusConfig, CorpusGenerator};

    fn tmp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("mlas-io-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn feature_file_round_trip_is_byte_identical() {
        let dir = tmp_dir("feat");
        let generator = CorpusGenerator::new(CorpusConfig::default(), 8).unwrap();
        let utt = generator.generate_utterance("alpha", 2, "rt-1").unwrap();
        let path = dir.join("x.feat");
        write_feature_file(&path, &utt.features).unwrap();
        let loaded = read_feature_file(&path, utt.features.frame_period_ms).unwrap();
        assert_eq!(loaded, utt.features);
        let second = dir.join("y.feat");
        write_feature_file(&second, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&second).unwrap());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn manifest_round_trip_is_byte_identical() {
        let manifest = Manifest {
            seed: 99,
            frame_period_ms: 10.0,
            feature_dim: 8,
            entries: vec![ManifestEntry {
                id: "alpha-train-0000".into(),
                language: "alpha".into(),
                split: "train".into(),
                path: "features/alpha-train-0000.feat".into(),
                transcript: "ab cd ef".into(),
            }],
        };
        let text = manifest.to_text();
        let parsed = Manifest::from_text(&text).unwrap();
        assert_eq!(parsed, manifest);
        assert_eq!(parsed.to_text(), text);
    }

    #[test]
    fn corpus_round_trip_through_disk() {
        let dir = tmp_dir("corpus");
        let config = CorpusConfig {
            train_per_language: 2,
            validation_per_language: 1,
            test_per_language: 1,
            ..CorpusConfig::default()
        };
        let generator = CorpusGenerator::new(config, 12).unwrap();
        let corpus = generator.generate_corpus().unwrap();
        write_corpus(&corpus, &dir).unwrap();
        let loaded = load_corpus(&dir).unwrap();
        assert_eq!(loaded.specs, corpus.specs);
        assert_eq!(loaded.train.len(), corpus.train.len());
        for (a, b) in loaded.train.iter().zip(&corpus.train) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.transcript, b.transcript);
            assert_eq!(a.features, b.features);
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn malformed_feature_file_is_rejected() {
        let dir = tmp_dir("bad");
        let path = dir.join("bad.feat");
        std::fs::write(&path, [1, 2, 3]).unwrap();
        assert!(matches!(
            read_feature_file(&path, 10.0),
            Err(Error::Format(_))
        ));
        std::fs::write(&path, 5u32.to_le_bytes()).unwrap();
        assert!(read_feature_file(&path, 10.0).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
