//! Learnable parameters: a linear word transform and one anchor point cloud per class.

use ndarray::{Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kmeans::weighted_kmeans;
use crate::ot::{ground_cost_matrix, sinkhorn, Histogram, SinkhornConfig, SinkhornResult};
use crate::scalar::Scalar;

const KMEANS_MAX_ITERS: usize = 50;

/// A document as an empirical measure over (possibly transformed) word vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentMeasure<T> {
    word_ids: Vec<usize>,
    /// `d x n`, one column per word.
    support: Array2<T>,
    weights: Histogram<T>,
    label: Option<usize>,
}

impl<T: Scalar> DocumentMeasure<T> {
    pub fn new(
        word_ids: Vec<usize>,
        support: Array2<T>,
        weights: Histogram<T>,
        label: Option<usize>,
    ) -> Result<Self> {
        if support.ncols() != weights.len() || word_ids.len() != weights.len() {
            return Err(Error::invalid(format!(
                "document has {} ids, {} support columns and {} weights",
                word_ids.len(),
                support.ncols(),
                weights.len()
            )));
        }
        Ok(DocumentMeasure {
            word_ids,
            support,
            weights,
            label,
        })
    }

    pub fn word_ids(&self) -> &[usize] {
        &self.word_ids
    }

    pub fn support(&self) -> &Array2<T> {
        &self.support
    }

    pub fn weights(&self) -> &Histogram<T> {
        &self.weights
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn len(&self) -> usize {
        self.word_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.nrows()
    }
}

/// Square map applied to every word vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformMatrix<T>(Array2<T>);

impl<T: Scalar> TransformMatrix<T> {
    pub fn new(matrix: Array2<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::invalid(format!(
                "transform must be square, got {:?}",
                matrix.dim()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("transform has non-finite entries"));
        }
        Ok(TransformMatrix(matrix))
    }

    pub fn identity(dim: usize) -> Self {
        TransformMatrix(Array2::eye(dim))
    }

    pub fn matrix(&self) -> &Array2<T> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `A · X` for a `d x n` point set.
    pub fn apply(&self, points: ArrayView2<T>) -> Result<Array2<T>> {
        if points.nrows() != self.dim() {
            return Err(Error::invalid(format!(
                "points have dimension {} but transform is {}x{}",
                points.nrows(),
                self.dim(),
                self.dim()
            )));
        }
        Ok(self.0.dot(&points))
    }
}

/// One `d x p` support-point cloud per class, each with uniform weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet<T> {
    anchors: Vec<Array2<T>>,
    class_names: Vec<String>,
}

impl<T: Scalar> AnchorSet<T> {
    pub fn new(anchors: Vec<Array2<T>>, class_names: Vec<String>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::invalid("anchor set needs at least one class"));
        }
        if anchors.len() != class_names.len() {
            return Err(Error::invalid(format!(
                "{} anchors but {} class names",
                anchors.len(),
                class_names.len()
            )));
        }
        let shape = anchors[0].dim();
        if shape.1 == 0 {
            return Err(Error::invalid("anchors need at least one support point"));
        }
        if anchors.iter().any(|a| a.dim() != shape) {
            return Err(Error::invalid("all anchors must share dimensions d x p"));
        }
        if anchors
            .iter()
            .flat_map(|a| a.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("anchor has non-finite entries"));
        }
        Ok(AnchorSet {
            anchors,
            class_names,
        })
    }

    pub fn anchor(&self, class: usize) -> &Array2<T> {
        &self.anchors[class]
    }

    pub fn anchors(&self) -> &[Array2<T>] {
        &self.anchors
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.anchors.len()
    }

    pub fn dim(&self) -> usize {
        self.anchors[0].nrows()
    }

    pub fn points_per_anchor(&self) -> usize {
        self.anchors[0].ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub transform: TransformMatrix<T>,
    pub anchors: AnchorSet<T>,
}

impl<T: Scalar> Model<T> {
    pub fn new(transform: TransformMatrix<T>, anchors: AnchorSet<T>) -> Result<Self> {
        if transform.dim() != anchors.dim() {
            return Err(Error::invalid(format!(
                "transform is {}-dimensional but anchors are {}-dimensional",
                transform.dim(),
                anchors.dim()
            )));
        }
        Ok(Model { transform, anchors })
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    pub fn num_classes(&self) -> usize {
        self.anchors.num_classes()
    }

    pub fn class_names(&self) -> &[String] {
        self.anchors.class_names()
    }

    pub fn num_params(&self) -> usize {
        let d = self.dim();
        d * d + self.num_classes() * d * self.anchors.points_per_anchor()
    }

    /// Transform entries (row-major) followed by each anchor (row-major).
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend(self.transform.matrix().iter().copied());
        for a in self.anchors.anchors() {
            out.extend(a.iter().copied());
        }
        out
    }

    pub fn set_flat(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let d = self.dim();
        let (head, mut rest) = params.split_at(d * d);
        self.transform.0 = Array2::from_shape_vec((d, d), head.to_vec()).expect("d x d");
        let p = self.anchors.points_per_anchor();
        for anchor in &mut self.anchors.anchors {
            let (chunk, tail) = rest.split_at(d * p);
            *anchor = Array2::from_shape_vec((d, p), chunk.to_vec()).expect("d x p");
            rest = tail;
        }
        Ok(())
    }
}

/// Applies the transform column-wise to the document's support.
pub fn embed_document<T: Scalar>(
    doc: &DocumentMeasure<T>,
    transform: &TransformMatrix<T>,
) -> Result<DocumentMeasure<T>> {
    Ok(DocumentMeasure {
        word_ids: doc.word_ids.clone(),
        support: transform.apply(doc.support.view())?,
        weights: doc.weights.clone(),
        label: doc.label,
    })
}

/// Entropic Wasserstein distance from an embedded document to one anchor
/// (uniform weights over its columns).
pub fn doc_anchor_distance<T: Scalar>(
    doc: &DocumentMeasure<T>,
    anchor: &Array2<T>,
    config: &SinkhornConfig,
) -> Result<SinkhornResult<T>> {
    let cost = ground_cost_matrix(doc.support.view(), anchor.view())?;
    let target = Histogram::uniform(anchor.ncols())?;
    sinkhorn(&cost, &doc.weights, &target, config)
}

/// Solves against every anchor, in class order.
pub fn doc_anchor_distances<T: Scalar>(
    doc: &DocumentMeasure<T>,
    anchors: &AnchorSet<T>,
    config: &SinkhornConfig,
) -> Result<Vec<SinkhornResult<T>>> {
    anchors
        .anchors()
        .iter()
        .map(|a| doc_anchor_distance(doc, a, config))
        .collect()
}

/// Seeds each class anchor with `p` weighted k-means centroids of the word
/// vectors of that class's documents. Each document contributes total mass one.
pub fn init_anchors<T: Scalar>(
    corpus: &[DocumentMeasure<T>],
    class_names: &[String],
    p: usize,
    seed: u64,
) -> Result<AnchorSet<T>> {
    if p == 0 {
        return Err(Error::invalid("anchors need p >= 1 support points"));
    }
    let dim = corpus
        .first()
        .map(|d| d.dim())
        .ok_or_else(|| Error::invalid("cannot initialize anchors from an empty corpus"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anchors = Vec::with_capacity(class_names.len());
    for (class, name) in class_names.iter().enumerate() {
        let docs: Vec<&DocumentMeasure<T>> =
            corpus.iter().filter(|d| d.label == Some(class)).collect();
        if docs.is_empty() {
            return Err(Error::invalid(format!("class '{name}' has no documents")));
        }
        if docs.iter().any(|d| d.dim() != dim) {
            return Err(Error::invalid("documents have inconsistent dimensions"));
        }
        let views: Vec<_> = docs.iter().map(|d| d.support.t()).collect();
        let points = ndarray::concatenate(Axis(0), &views).expect("shared dimension");
        let weights: Vec<T> = docs
            .iter()
            .flat_map(|d| d.weights.weights().iter().copied())
            .collect();
        let centroids = weighted_kmeans(&points, &weights, p, KMEANS_MAX_ITERS, &mut rng);
        anchors.push(centroids.t().to_owned());
    }
    AnchorSet::new(anchors, class_names.to_vec())
}
