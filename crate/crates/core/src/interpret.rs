//! Word importance with respect to learned anchors, a TF-IDF baseline and a
//! 2-D projection for plotting.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use ndarray::{Array2, ArrayView1, Axis};

use crate::data::{Corpus, WordVectorTable};
use crate::error::{Error, Result};
use crate::linalg::pca_2d;
use crate::model::Model;
use crate::scalar::Scalar;

/// Words that have an embedding, in sorted order, with their vectors as
/// columns of a `d x V` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary<T> {
    words: Vec<String>,
    vectors: Array2<T>,
}

impl<T: Scalar> Vocabulary<T> {
    /// The corpus vocabulary restricted to words present in `table`.
    pub fn from_corpus(corpus: &Corpus, table: &WordVectorTable<T>) -> Result<Self> {
        Self::from_words(corpus.vocabulary(), table)
    }

    pub fn from_words(
        words: impl IntoIterator<Item = String>,
        table: &WordVectorTable<T>,
    ) -> Result<Self> {
        let sorted: BTreeSet<String> = words.into_iter().collect();
        let (words, ids): (Vec<String>, Vec<usize>) = sorted
            .into_iter()
            .filter_map(|w| table.id_of(&w).map(|id| (w, id)))
            .unzip();
        if words.is_empty() {
            return Err(Error::invalid("no vocabulary word has an embedding"));
        }
        Ok(Vocabulary {
            vectors: table.columns(&ids),
            words,
        })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vectors(&self) -> &Array2<T> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Smallest squared distance from `z` to a column of `anchor` (`d x p`).
pub fn word_anchor_distance<T: Scalar>(z: ArrayView1<T>, anchor: &Array2<T>) -> T {
    anchor
        .axis_iter(Axis(1))
        .map(|col| {
            col.iter()
                .zip(z.iter())
                .map(|(a, b)| (*a - *b) * (*a - *b))
                .sum::<T>()
        })
        .fold(T::infinity(), T::min)
}

/// Importance of a word for `class` given its distances to every anchor:
/// how much closer it is to its own anchor than to the others, summed.
pub fn importance<T: Scalar>(distances: &[T], class: usize) -> T {
    let own = distances[class];
    distances
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != class)
        .map(|(_, &d)| d - own)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceRow<T> {
    pub word: String,
    /// Squared distance from the transformed word to each class anchor.
    pub distances: Vec<T>,
    /// Importance for each class.
    pub importance: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable<T> {
    pub class_names: Vec<String>,
    pub rows: Vec<ImportanceRow<T>>,
}

impl<T: Scalar> ImportanceTable<T> {
    pub fn compute(model: &Model<T>, vocab: &Vocabulary<T>) -> Result<Self> {
        if vocab.vectors().nrows() != model.dim() {
            return Err(Error::invalid(format!(
                "vocabulary dimension {} does not match model dimension {}",
                vocab.vectors().nrows(),
                model.dim()
            )));
        }
        let z = model.transform.apply(vocab.vectors().view())?;
        let rows = vocab
            .words()
            .iter()
            .zip(z.axis_iter(Axis(1)))
            .map(|(word, col)| {
                let distances: Vec<T> = model
                    .anchors
                    .anchors()
                    .iter()
                    .map(|a| word_anchor_distance(col, a))
                    .collect();
                let importance = (0..distances.len())
                    .map(|y| importance(&distances, y))
                    .collect();
                ImportanceRow {
                    word: word.clone(),
                    distances,
                    importance,
                }
            })
            .collect();
        Ok(ImportanceTable {
            class_names: model.class_names().to_vec(),
            rows,
        })
    }

    /// The `k` most important words for `class`, descending; ties broken
    /// alphabetically.
    pub fn top_k(&self, class: usize, k: usize) -> Result<Vec<(String, T)>> {
        if class >= self.class_names.len() {
            return Err(Error::invalid(format!("no class {class}")));
        }
        if k > self.rows.len() {
            warn!(
                "asked for {k} words but the vocabulary has {}; returning all",
                self.rows.len()
            );
        }
        let mut ranked: Vec<(String, T)> = self
            .rows
            .iter()
            .map(|r| (r.word.clone(), r.importance[class]))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(k);
        Ok(ranked)
    }

    /// `word,class,importance,D_0,...` with one line per (word, class).
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("word\tclass\timportance");
        for y in 0..self.class_names.len() {
            out.push_str(&format!("\tD_{y}"));
        }
        out.push('\n');
        for row in &self.rows {
            for (y, name) in self.class_names.iter().enumerate() {
                out.push_str(&format!(
                    "{}\t{name}\t{}",
                    row.word,
                    row.importance[y].as_f64()
                ));
                for d in &row.distances {
                    out.push_str(&format!("\t{}", d.as_f64()));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// `rank,word,importance`, ranks starting at 1.
pub fn top_words_tsv<S: Scalar>(words: &[(String, S)]) -> String {
    let mut out = String::from("rank\tword\timportance\n");
    for (i, (w, s)) in words.iter().enumerate() {
        out.push_str(&format!("{}\t{w}\t{}\n", i + 1, s.as_f64()));
    }
    out
}

/// Top `k` terms of `class` by TF-IDF, where each class is treated as one
/// document: tf is the term's share of the class's tokens and
/// idf = ln(Y / (1 + df)) + 1 with df the number of classes using the term.
pub fn tfidf_top_words(corpus: &Corpus, class: usize, k: usize) -> Result<Vec<(String, f64)>> {
    let classes = corpus.num_classes();
    if class >= classes {
        return Err(Error::invalid(format!("no class {class}")));
    }
    let mut per_class: Vec<BTreeMap<&str, u64>> = vec![BTreeMap::new(); classes];
    for doc in corpus.documents() {
        for (w, &c) in &doc.counts {
            *per_class[doc.label].entry(w.as_str()).or_default() += u64::from(c);
        }
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for counts in &per_class {
        for w in counts.keys() {
            *df.entry(w).or_default() += 1;
        }
    }
    let total: u64 = per_class[class].values().sum();
    let mut scored: Vec<(String, f64)> = df
        .iter()
        .map(|(w, &n)| {
            let tf = if total == 0 {
                0.0
            } else {
                *per_class[class].get(w).unwrap_or(&0) as f64 / total as f64
            };
            let idf = (classes as f64 / (1 + n) as f64).ln() + 1.0;
            (w.to_string(), tf * idf)
        })
        .collect();
    if k > scored.len() {
        warn!(
            "asked for {k} words but the corpus has {}; returning all",
            scored.len()
        );
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointKind {
    Word,
    Anchor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionRow {
    pub kind: PointKind,
    pub class: String,
    /// The word, or `anchor_<j>` for anchor points.
    pub label: String,
    pub pc1: f64,
    pub pc2: f64,
    /// Importance for `class`; empty for anchors.
    pub importance: Option<f64>,
}

/// Projects the transformed top words of every class together with all
/// anchor points onto the first two principal components of that set.
pub fn export_projection<T: Scalar>(
    model: &Model<T>,
    table: &ImportanceTable<T>,
    vocab: &Vocabulary<T>,
    top_n: usize,
) -> Result<Vec<ProjectionRow>> {
    let z = model.transform.apply(vocab.vectors().view())?;
    let index: BTreeMap<&str, usize> = vocab
        .words()
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();

    let mut meta = Vec::new();
    let mut columns = Vec::new();
    for (y, name) in model.class_names().iter().enumerate() {
        for (word, imp) in table.top_k(y, top_n)? {
            let i = *index
                .get(word.as_str())
                .ok_or_else(|| Error::invalid(format!("'{word}' is not in the vocabulary")))?;
            columns.push(z.column(i).to_owned());
            meta.push((PointKind::Word, name.clone(), word, Some(imp.as_f64())));
        }
        for (j, col) in model.anchors.anchor(y).axis_iter(Axis(1)).enumerate() {
            columns.push(col.to_owned());
            meta.push((PointKind::Anchor, name.clone(), format!("anchor_{j}"), None));
        }
    }
    let views: Vec<_> = columns.iter().map(|c| c.view()).collect();
    let points = ndarray::stack(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))?;
    let (coords, rank) = pca_2d(&points)?;
    if rank < 2 {
        warn!("projected points span {rank} dimension(s); missing coordinates are zero");
    }
    Ok(meta
        .into_iter()
        .zip(coords.outer_iter())
        .map(|((kind, class, label, importance), c)| ProjectionRow {
            kind,
            class,
            label,
            pc1: c[0].as_f64(),
            pc2: c[1].as_f64(),
            importance,
        })
        .collect())
}

/// `kind,class,label,pc1,pc2,importance`
pub fn projection_tsv(rows: &[ProjectionRow]) -> String {
    let mut out = String::from("kind\tclass\tlabel\tpc1\tpc2\timportance\n");
    for r in rows {
        let kind = match r.kind {
            PointKind::Word => "word",
            PointKind::Anchor => "anchor",
        };
        let imp = r.importance.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{kind}\t{}\t{}\t{}\t{}\t{imp}\n",
            r.class, r.label, r.pc1, r.pc2
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Document;
    use crate::model::{AnchorSet, TransformMatrix};
    use ndarray::array;
    use proptest::prelude::*;

    fn model(anchors: Vec<Array2<f64>>) -> Model<f64> {
        let names = (0..anchors.len()).map(|i| format!("c{i}")).collect();
        let d = anchors[0].nrows();
        Model::new(
            TransformMatrix::identity(d),
            AnchorSet::new(anchors, names).unwrap(),
        )
        .unwrap()
    }

    fn table(entries: &[(&str, Vec<f64>)]) -> WordVectorTable<f64> {
        WordVectorTable::from_entries(entries.iter().map(|(w, v)| (w.to_string(), v.clone())))
            .unwrap()
    }

    #[test]
    fn nearest_anchor_point_counts() {
        let anchor: Array2<f64> = array![[0.0, 10.0], [0.0, 0.0]];
        assert_eq!(word_anchor_distance(array![9.0, 1.0].view(), &anchor), 2.0);
    }

    #[test]
    fn importance_example() {
        // Distances 1, 4, 9: own-class advantage summed over rivals.
        assert_eq!(importance(&[1.0, 4.0, 9.0], 0), 11.0);
        assert_eq!(importance(&[1.0, 4.0, 9.0], 2), -13.0);
    }

    #[test]
    fn table_ranks_and_formats() {
        let m = model(vec![array![[0.0]], array![[10.0]]]);
        let t = table(&[
            ("near", vec![1.0]),
            ("far", vec![9.0]),
            ("mid", vec![5.0]),
            ("oov_never", vec![0.0]),
        ]);
        let words = ["near", "far", "mid", "missing"].map(String::from);
        let vocab = Vocabulary::from_words(words, &t).unwrap();
        assert_eq!(vocab.words(), ["far", "mid", "near"]);
        let imp = ImportanceTable::compute(&m, &vocab).unwrap();
        let top = imp.top_k(0, 2).unwrap();
        assert_eq!(top[0], ("near".to_string(), 81.0 - 1.0));
        assert_eq!(top[1], ("mid".to_string(), 0.0));
        assert_eq!(imp.top_k(1, 1).unwrap()[0].0, "far");
        assert_eq!(imp.top_k(0, 10).unwrap().len(), 3);
        let tsv = imp.to_tsv();
        assert!(tsv.starts_with("word\tclass\timportance\tD_0\tD_1\n"));
        assert!(tsv.contains("near\tc0\t80\t1\t81\n"));
        assert_eq!(
            top_words_tsv(&top[..1]),
            "rank\tword\timportance\n1\tnear\t80\n"
        );
    }

    #[test]
    fn ties_break_alphabetically() {
        let m = model(vec![array![[0.0]], array![[4.0]]]);
        let t = table(&[("b", vec![2.0]), ("a", vec![2.0])]);
        let vocab = Vocabulary::from_words(["b", "a"].map(String::from), &t).unwrap();
        let imp = ImportanceTable::compute(&m, &vocab).unwrap();
        assert_eq!(imp.top_k(0, 2).unwrap()[0].0, "a");
    }

    proptest! {
        #[test]
        fn importances_sum_to_zero(d in prop::collection::vec(0.0f64..100.0, 2..8)) {
            let total: f64 = (0..d.len()).map(|y| importance(&d, y)).sum();
            let scale: f64 = d.iter().sum::<f64>() * d.len() as f64;
            prop_assert!(total.abs() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn tfidf_prefers_exclusive_words() {
        let doc = |label, words: &[(&str, u32)]| Document {
            label,
            counts: words.iter().map(|(w, c)| (w.to_string(), *c)).collect(),
        };
        let corpus = Corpus::new(
            vec![
                doc(0, &[("goal", 3), ("the", 5)]),
                doc(0, &[("match", 2), ("the", 2)]),
                doc(1, &[("vote", 4), ("the", 6)]),
            ],
            vec!["sport".into(), "politics".into()],
        )
        .unwrap();
        let top = tfidf_top_words(&corpus, 0, 3).unwrap();
        // "goal": tf 3/12, idf ln(2/2)+1 = 1; "the": tf 7/12, idf ln(2/3)+1.
        assert_eq!(top[0].0, "the");
        assert!((top[0].1 - 7.0 / 12.0 * ((2.0f64 / 3.0).ln() + 1.0)).abs() < 1e-12);
        assert_eq!(top[1], ("goal".to_string(), 0.25));
        assert_eq!(top[2].0, "match");
        assert_eq!(tfidf_top_words(&corpus, 0, 10).unwrap().len(), 4);
        assert_eq!(
            tfidf_top_words(&corpus, 1, 4).unwrap()[3],
            ("match".to_string(), 0.0)
        );
    }

    #[test]
    fn projection_covers_words_and_anchors() {
        let m = model(vec![
            array![[0.0, 1.0], [0.0, 0.0]],
            array![[8.0, 9.0], [3.0, 3.0]],
        ]);
        let t = table(&[
            ("x", vec![0.5, 0.0]),
            ("y", vec![8.5, 3.0]),
            ("z", vec![4.0, 1.0]),
        ]);
        let vocab = Vocabulary::from_words(["x", "y", "z"].map(String::from), &t).unwrap();
        let imp = ImportanceTable::compute(&m, &vocab).unwrap();
        let rows = export_projection(&m, &imp, &vocab, 2).unwrap();
        assert_eq!(rows.len(), 2 * 2 + 2 * 2);
        assert_eq!(
            rows.iter().filter(|r| r.kind == PointKind::Anchor).count(),
            4
        );
        let mean1: f64 = rows.iter().map(|r| r.pc1).sum::<f64>() / rows.len() as f64;
        assert!(mean1.abs() < 1e-12);
        let tsv = projection_tsv(&rows);
        assert!(tsv.starts_with("kind\tclass\tlabel\tpc1\tpc2\timportance\nword\tc0\tx\t"));
        assert!(tsv.contains("anchor\tc1\tanchor_1\t"));
    }
}
