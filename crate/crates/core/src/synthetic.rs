//! A planted corpus with known class-exclusive words, for end-to-end checks.
//!
//! Each class owns a Gaussian cluster of words; a further cluster of common
//! words is shared by every class. Cluster centers sit on orthogonal axes so
//! that every pair is `separation * sigma` apart.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::fmt::Write;

use crate::data::{Corpus, Document, WordVectorTable};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub classes: usize,
    pub dim: usize,
    pub sigma: f64,
    /// Distance between cluster centers in units of `sigma`.
    pub separation: f64,
    pub words_per_class: usize,
    pub common_words: usize,
    pub train_docs_per_class: usize,
    pub test_docs_per_class: usize,
    pub tokens_per_doc: usize,
    /// Probability that a token is drawn from the document's own class words.
    pub class_token_share: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            classes: 2,
            dim: 10,
            sigma: 1.0,
            separation: 5.0,
            words_per_class: 10,
            common_words: 10,
            train_docs_per_class: 100,
            test_docs_per_class: 100,
            tokens_per_doc: 20,
            class_token_share: 0.5,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus<T> {
    pub vectors: WordVectorTable<T>,
    pub train: Corpus,
    pub test: Corpus,
    /// The exclusive words of each class.
    pub planted: Vec<Vec<String>>,
    pub common: Vec<String>,
}

pub fn class_word(class: usize, j: usize) -> String {
    format!("class{class}word{j}")
}

pub fn common_word(j: usize) -> String {
    format!("commonword{j}")
}

pub fn planted_corpus<T: Scalar>(cfg: &PlantedConfig) -> Result<PlantedCorpus<T>> {
    if cfg.classes < 2 || cfg.dim < cfg.classes + 1 {
        return Err(Error::invalid(
            "planted corpus needs at least 2 classes and dim > classes",
        ));
    }
    if cfg.words_per_class == 0 || cfg.tokens_per_doc == 0 || cfg.train_docs_per_class == 0 {
        return Err(Error::invalid("planted corpus sizes must be positive"));
    }
    if !(0.0..=1.0).contains(&cfg.class_token_share)
        || (cfg.common_words == 0 && cfg.class_token_share < 1.0)
    {
        return Err(Error::invalid(
            "class_token_share must be in [0, 1]; below 1 needs common words",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let offset = cfg.separation * cfg.sigma / std::f64::consts::SQRT_2;

    let mut entries = Vec::new();
    let draw = |axis: usize, rng: &mut ChaCha8Rng| -> Vec<T> {
        (0..cfg.dim)
            .map(|k| {
                let noise: f64 = rng.sample(StandardNormal);
                let center = if k == axis { offset } else { 0.0 };
                T::of(center + cfg.sigma * noise)
            })
            .collect()
    };
    let planted: Vec<Vec<String>> = (0..cfg.classes)
        .map(|c| (0..cfg.words_per_class).map(|j| class_word(c, j)).collect())
        .collect();
    let common: Vec<String> = (0..cfg.common_words).map(common_word).collect();
    for (c, words) in planted.iter().enumerate() {
        for w in words {
            entries.push((w.clone(), draw(c, &mut rng)));
        }
    }
    for w in &common {
        entries.push((w.clone(), draw(cfg.classes, &mut rng)));
    }
    let vectors = WordVectorTable::from_entries(entries)?;

    let class_names: Vec<String> = (0..cfg.classes).map(|c| format!("class{c}")).collect();
    let make = |per_class: usize, rng: &mut ChaCha8Rng| -> Result<Corpus> {
        let mut docs = Vec::with_capacity(per_class * cfg.classes);
        for _ in 0..per_class {
            for (c, words) in planted.iter().enumerate() {
                let mut counts: BTreeMap<String, u32> = BTreeMap::new();
                for _ in 0..cfg.tokens_per_doc {
                    let pool = if rng.gen_bool(cfg.class_token_share) {
                        words
                    } else {
                        &common
                    };
                    *counts.entry(pool.choose(rng).unwrap().clone()).or_default() += 1;
                }
                docs.push(Document { label: c, counts });
            }
        }
        Corpus::new(docs, class_names.clone())
    };
    let train = make(cfg.train_docs_per_class, &mut rng)?;
    let test = make(cfg.test_docs_per_class, &mut rng)?;
    Ok(PlantedCorpus {
        vectors,
        train,
        test,
        planted,
        common,
    })
}

/// Renders a corpus in the `<label>\t<text>` format read by `load_corpus`.
pub fn label_tab_text(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in corpus.documents() {
        out.push_str(&corpus.class_names()[doc.label]);
        out.push('\t');
        let mut first = true;
        for (w, &c) in &doc.counts {
            for _ in 0..c {
                if !first {
                    out.push(' ');
                }
                out.push_str(w);
                first = false;
            }
        }
        out.push('\n');
    }
    out
}

/// Renders vectors in the textual GloVe format read by `load_word_vectors`.
pub fn vectors_text<T: Scalar>(table: &WordVectorTable<T>) -> String {
    let mut out = String::new();
    for id in 0..table.len() {
        out.push_str(table.token(id));
        for v in table.vector(id) {
            write!(out, " {}", v.as_f64()).unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{load_corpus, load_word_vectors, CorpusFormat, Tokenizer};

    #[test]
    fn shapes_and_exclusivity() {
        let cfg = PlantedConfig::default();
        let p = planted_corpus::<f64>(&cfg).unwrap();
        assert_eq!(p.vectors.len(), 30);
        assert_eq!(p.train.len(), 200);
        assert_eq!(p.test.class_sizes(), vec![100, 100]);
        for doc in p.train.documents() {
            assert_eq!(doc.token_count(), 20);
            for w in doc.counts.keys() {
                assert!(p.common.contains(w) || p.planted[doc.label].contains(w));
            }
        }
    }

    #[test]
    fn cluster_means_are_separated() {
        let cfg = PlantedConfig {
            words_per_class: 400,
            common_words: 400,
            ..PlantedConfig::default()
        };
        let p = planted_corpus::<f64>(&cfg).unwrap();
        let mean = |words: &[String]| -> Vec<f64> {
            let mut m = vec![0.0; cfg.dim];
            for w in words {
                for (a, v) in m.iter_mut().zip(p.vectors.get(w).unwrap()) {
                    *a += v / words.len() as f64;
                }
            }
            m
        };
        let centers = [mean(&p.planted[0]), mean(&p.planted[1]), mean(&p.common)];
        for i in 0..3 {
            for j in (i + 1)..3 {
                let dist: f64 = centers[i]
                    .iter()
                    .zip(&centers[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                // Sample-mean noise is about sigma * sqrt(2 * dim / 400).
                assert!((dist - 5.0).abs() < 0.5, "{dist}");
            }
        }
    }

    #[test]
    fn seeded_and_round_trips() {
        let cfg = PlantedConfig {
            train_docs_per_class: 5,
            test_docs_per_class: 3,
            ..PlantedConfig::default()
        };
        let a = planted_corpus::<f64>(&cfg).unwrap();
        let b = planted_corpus::<f64>(&cfg).unwrap();
        assert_eq!(a.vectors, b.vectors);
        assert_eq!(a.train, b.train);

        let dir = tempfile::tempdir().unwrap();
        let corpus_path = dir.path().join("train.tsv");
        let vec_path = dir.path().join("vectors.txt");
        std::fs::write(&corpus_path, label_tab_text(&a.train)).unwrap();
        std::fs::write(&vec_path, vectors_text(&a.vectors)).unwrap();
        let corpus =
            load_corpus(&corpus_path, CorpusFormat::LabelTab, &Tokenizer::default()).unwrap();
        assert_eq!(corpus, a.train);
        let vectors = load_word_vectors::<f64>(&vec_path).unwrap();
        assert_eq!(vectors.content_hash(), a.vectors.content_hash());
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = PlantedConfig {
            classes: 1,
            ..PlantedConfig::default()
        };
        assert!(planted_corpus::<f64>(&bad).is_err());
        let bad = PlantedConfig {
            class_token_share: 1.5,
            ..PlantedConfig::default()
        };
        assert!(planted_corpus::<f64>(&bad).is_err());
    }
}
