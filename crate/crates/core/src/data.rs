//! Corpus ingestion, word vectors and bag-of-words measures.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::DocumentMeasure;
use crate::ot::Histogram;
use crate::scalar::Scalar;

/// One labelled document as token counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub label: usize,
    pub counts: BTreeMap<String, u32>,
}

impl Document {
    pub fn token_count(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    class_names: Vec<String>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>, class_names: Vec<String>) -> Result<Self> {
        for (i, doc) in documents.iter().enumerate() {
            if doc.label >= class_names.len() {
                return Err(Error::invalid(format!(
                    "document {i} has label {} but only {} classes exist",
                    doc.label,
                    class_names.len()
                )));
            }
            if doc.counts.is_empty() || doc.counts.values().any(|&c| c == 0) {
                return Err(Error::invalid(format!(
                    "document {i} must have at least one token and only positive counts"
                )));
            }
        }
        Ok(Corpus {
            documents,
            class_names,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_names.len()];
        for doc in &self.documents {
            sizes[doc.label] += 1;
        }
        sizes
    }

    /// Union of the per-document token sets.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        self.documents
            .iter()
            .flat_map(|d| d.counts.keys().cloned())
            .collect()
    }

    /// Relabels documents so that class ids index into `class_names`.
    pub fn align_to(&self, class_names: &[String]) -> Result<Corpus> {
        let lookup: HashMap<&str, usize> = class_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let documents = self
            .documents
            .iter()
            .map(|d| {
                let name = &self.class_names[d.label];
                lookup
                    .get(name.as_str())
                    .map(|&label| Document {
                        label,
                        counts: d.counts.clone(),
                    })
                    .ok_or_else(|| Error::invalid(format!("unknown class label '{name}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(documents, class_names.to_vec())
    }
}

/// Lowercasing tokenizer splitting on non-alphanumeric characters.
#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
}

impl Tokenizer {
    pub fn with_stopwords(words: impl IntoIterator<Item = String>) -> Self {
        Tokenizer {
            stopwords: words.into_iter().map(|w| w.to_lowercase()).collect(),
        }
    }

    pub fn load_stopwords(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::with_stopwords(
            text.split_whitespace().map(str::to_string),
        ))
    }

    pub fn tokens<'a>(&'a self, text: &'a str) -> impl Iterator<Item = String> + 'a {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| t.chars().count() >= 2)
            .filter(|t| !t.chars().all(char::is_numeric))
            .map(str::to_lowercase)
            .filter(|t| !self.stopwords.contains(t))
    }

    pub fn count(&self, text: &str) -> BTreeMap<String, u32> {
        let mut counts = BTreeMap::new();
        for token in self.tokens(text) {
            *counts.entry(token).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// `<label>\t<raw text>` per line.
    LabelTab,
    /// `<root>/<class_name>/<doc>.txt`.
    DirectoryPerClass,
}

pub fn load_corpus(path: &Path, format: CorpusFormat, tokenizer: &Tokenizer) -> Result<Corpus> {
    let raw: Vec<(String, String, String)> = match format {
        CorpusFormat::LabelTab => read_label_tab(path)?,
        CorpusFormat::DirectoryPerClass => read_class_dirs(path)?,
    };
    let class_names: Vec<String> = raw
        .iter()
        .map(|(label, _, _)| label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let lookup: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut documents = Vec::with_capacity(raw.len());
    for (label, origin, text) in &raw {
        let counts = tokenizer.count(text);
        if counts.is_empty() {
            warn!("{origin}: document is empty after tokenization, dropped");
            continue;
        }
        documents.push(Document {
            label: lookup[label.as_str()],
            counts,
        });
    }
    Corpus::new(documents, class_names)
}

fn read_label_tab(path: &Path) -> Result<Vec<(String, String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (label, body) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message: "expected '<label>\\t<text>'".into(),
        })?;
        let label = label.trim();
        if label.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: "empty label".into(),
            });
        }
        out.push((
            label.to_string(),
            format!("{}:{}", path.display(), idx + 1),
            body.to_string(),
        ));
    }
    Ok(out)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    entries.retain(|p| {
        !p.file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.starts_with('.'))
    });
    entries.sort();
    Ok(entries)
}

fn read_class_dirs(root: &Path) -> Result<Vec<(String, String, String)>> {
    let mut out = Vec::new();
    for class_dir in sorted_entries(root)? {
        if !class_dir.is_dir() {
            return Err(Error::Parse {
                path: class_dir,
                line: 0,
                message: "expected a class directory".into(),
            });
        }
        let label = class_dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Parse {
                path: class_dir.clone(),
                line: 0,
                message: "class directory name is not valid UTF-8".into(),
            })?
            .to_string();
        for doc in sorted_entries(&class_dir)? {
            if doc.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let text = fs::read_to_string(&doc).map_err(|e| Error::io(&doc, e))?;
            out.push((label.clone(), doc.display().to_string(), text));
        }
    }
    Ok(out)
}

/// Pre-trained word vectors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable<T> {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<T>,
    dim: Option<usize>,
}

impl<T: Scalar> WordVectorTable<T> {
    pub fn from_entries(entries: impl IntoIterator<Item = (String, Vec<T>)>) -> Result<Self> {
        let mut table = WordVectorTable {
            tokens: Vec::new(),
            index: HashMap::new(),
            values: Vec::new(),
            dim: None,
        };
        for (token, vector) in entries {
            if let Some(d) = table.dim {
                if vector.len() != d {
                    return Err(Error::invalid(format!(
                        "vector for '{token}' has dimension {}, expected {d}",
                        vector.len()
                    )));
                }
            }
            table.push(token, vector);
        }
        Ok(table)
    }

    fn push(&mut self, token: String, vector: Vec<T>) -> bool {
        if self.index.contains_key(&token) {
            return false;
        }
        self.dim = Some(vector.len());
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.values.extend(vector);
        true
    }

    /// Vector dimension; errors on an empty table.
    pub fn dim(&self) -> Result<usize> {
        self.dim
            .ok_or_else(|| Error::invalid("word vector table is empty"))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn vector(&self, id: usize) -> ArrayView1<'_, T> {
        let d = self.dim.unwrap_or(0);
        ArrayView1::from(&self.values[id * d..(id + 1) * d])
    }

    pub fn get(&self, token: &str) -> Option<ArrayView1<'_, T>> {
        self.id_of(token).map(|id| self.vector(id))
    }

    /// Stacks the vectors of `ids` as columns of a `d x ids.len()` matrix.
    pub fn columns(&self, ids: &[usize]) -> Array2<T> {
        let d = self.dim.unwrap_or(0);
        Array2::from_shape_fn((d, ids.len()), |(k, j)| self.values[ids[j] * d + k])
    }

    /// SHA-256 over all tokens (sorted) and their vectors.
    pub fn content_hash(&self) -> String {
        let mut order: Vec<usize> = (0..self.tokens.len()).collect();
        order.sort_by(|&a, &b| self.tokens[a].cmp(&self.tokens[b]));
        let mut hasher = Sha256::new();
        hasher.update((self.dim.unwrap_or(0) as u64).to_le_bytes());
        for id in order {
            hasher.update(self.tokens[id].as_bytes());
            hasher.update([0u8]);
            for v in self.vector(id) {
                hasher.update(v.as_f64().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

/// Reads textual GloVe vectors: one `token v1 ... vd` record per line.
pub fn load_word_vectors<T: Scalar>(path: &Path) -> Result<WordVectorTable<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = WordVectorTable::from_entries(std::iter::empty())?;
    for (idx, line) in text.lines().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .map(T::of)
                    .map_err(|e| parse_err(format!("bad number '{f}': {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if vector.is_empty() {
            return Err(parse_err(format!("token '{token}' has no vector")));
        }
        if let Some(d) = table.dim {
            if vector.len() != d {
                return Err(parse_err(format!(
                    "dimension {} differs from {d} seen earlier",
                    vector.len()
                )));
            }
        }
        if !table.push(token.to_string(), vector) {
            warn!(
                "{}:{}: duplicate token '{token}', keeping first occurrence",
                path.display(),
                idx + 1
            );
        }
    }
    Ok(table)
}

/// Normalized bag-of-words measure over the in-vocabulary tokens of `doc`,
/// in sorted token order with raw word vectors as support.
pub fn to_measure<T: Scalar>(
    doc: &Document,
    vectors: &WordVectorTable<T>,
) -> Result<DocumentMeasure<T>> {
    vectors.dim()?;
    let kept: Vec<(usize, u32)> = doc
        .counts
        .iter()
        .filter_map(|(tok, &c)| vectors.id_of(tok).map(|id| (id, c)))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyDocument);
    }
    let total: u64 = kept.iter().map(|&(_, c)| u64::from(c)).sum();
    let total = T::from_u64(total).expect("token total fits the scalar type");
    let mut weights: Vec<T> = kept
        .iter()
        .map(|&(_, c)| T::from_u32(c).expect("count fits the scalar type") / total)
        .collect();
    let residual = T::one() - weights.iter().copied().sum::<T>();
    let largest = (0..weights.len())
        .max_by(|&a, &b| weights[a].partial_cmp(&weights[b]).unwrap().then(b.cmp(&a)))
        .unwrap();
    weights[largest] += residual;
    let word_ids: Vec<usize> = kept.iter().map(|&(id, _)| id).collect();
    let support = vectors.columns(&word_ids);
    DocumentMeasure::new(
        word_ids,
        support,
        Histogram::from_vec(weights)?,
        Some(doc.label),
    )
}

/// Measures for every document with at least one in-vocabulary token;
/// the rest are skipped with a warning. Returns the kept measures and the
/// indices of the kept documents.
pub fn corpus_measures<T: Scalar>(
    corpus: &Corpus,
    vectors: &WordVectorTable<T>,
) -> Result<(Vec<DocumentMeasure<T>>, Vec<usize>)> {
    let mut measures = Vec::with_capacity(corpus.len());
    let mut kept = Vec::with_capacity(corpus.len());
    for (i, doc) in corpus.documents().iter().enumerate() {
        match to_measure(doc, vectors) {
            Ok(m) => {
                measures.push(m);
                kept.push(i);
            }
            Err(Error::EmptyDocument) => {
                warn!("document {i} has no tokens with word vectors, skipped");
            }
            Err(e) => return Err(e),
        }
    }
    Ok((measures, kept))
}

#[derive(Debug, Clone)]
pub enum SplitSpec {
    /// Seeded stratified split.
    Fraction { train_fraction: f64, seed: u64 },
    /// The corpus being split is the training set; `test` is used as given.
    Explicit { test: Corpus },
}

pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    match spec {
        SplitSpec::Explicit { test } => Ok((corpus.clone(), test.align_to(corpus.class_names())?)),
        SplitSpec::Fraction {
            train_fraction,
            seed,
        } => {
            if !(*train_fraction > 0.0 && *train_fraction < 1.0) {
                return Err(Error::invalid(format!(
                    "train fraction must be in (0, 1), got {train_fraction}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut train_idx = Vec::new();
            let mut test_idx = Vec::new();
            for class in 0..corpus.num_classes() {
                let mut members: Vec<usize> = corpus
                    .documents()
                    .iter()
                    .enumerate()
                    .filter(|(_, d)| d.label == class)
                    .map(|(i, _)| i)
                    .collect();
                if members.len() < 2 {
                    return Err(Error::invalid(format!(
                        "class '{}' has {} documents; at least 2 are needed to split",
                        corpus.class_names()[class],
                        members.len()
                    )));
                }
                members.shuffle(&mut rng);
                let n_train = ((members.len() as f64) * train_fraction).round() as usize;
                let n_train = n_train.clamp(1, members.len() - 1);
                train_idx.extend_from_slice(&members[..n_train]);
                test_idx.extend_from_slice(&members[n_train..]);
            }
            train_idx.sort_unstable();
            test_idx.sort_unstable();
            let pick = |idx: &[usize]| {
                Corpus::new(
                    idx.iter().map(|&i| corpus.documents()[i].clone()).collect(),
                    corpus.class_names().to_vec(),
                )
            };
            Ok((pick(&train_idx)?, pick(&test_idx)?))
        }
    }
}
