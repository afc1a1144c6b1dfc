//! Nearest-anchor classification, the WMD k-NN baseline and error rates.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{doc_anchor_distances, embed_document, DocumentMeasure, Model};
use crate::ot::{ground_cost_matrix, sinkhorn, SinkhornConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub predicted_class: usize,
    /// Transport cost to each class anchor, in class order.
    pub anchor_distances: Vec<T>,
}

/// Index of the smallest value; the first one wins on exact ties.
pub fn argmin_first<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

pub fn anchor_nn_classify<T: Scalar>(
    doc: &DocumentMeasure<T>,
    model: &Model<T>,
    config: &SinkhornConfig,
) -> Result<Prediction<T>> {
    if doc.is_empty() {
        return Err(Error::ClassificationRefused(
            "document has no in-vocabulary words".into(),
        ));
    }
    let embedded = embed_document(doc, &model.transform)?;
    let anchor_distances: Vec<T> = doc_anchor_distances(&embedded, &model.anchors, config)?
        .into_iter()
        .map(|r| r.distance)
        .collect();
    Ok(Prediction {
        predicted_class: argmin_first(&anchor_distances),
        anchor_distances,
    })
}

/// Classifies every document; order of the output follows `docs`.
pub fn classify_all<T: Scalar>(
    docs: &[DocumentMeasure<T>],
    model: &Model<T>,
    config: &SinkhornConfig,
) -> Result<Vec<Prediction<T>>> {
    docs.par_iter()
        .map(|d| anchor_nn_classify(d, model, config))
        .collect()
}

/// Transport distances from `query` to every training document, as
/// `(distance, label)` sorted by distance then training index.
pub fn knn_neighbors<T: Scalar>(
    query: &DocumentMeasure<T>,
    train: &[DocumentMeasure<T>],
    config: &SinkhornConfig,
) -> Result<Vec<(T, usize)>> {
    if train.is_empty() {
        return Err(Error::invalid("k-NN needs a non-empty training corpus"));
    }
    if query.is_empty() {
        return Err(Error::ClassificationRefused(
            "document has no in-vocabulary words".into(),
        ));
    }
    let mut scored = Vec::with_capacity(train.len());
    for (idx, doc) in train.iter().enumerate() {
        let label = doc
            .label()
            .ok_or_else(|| Error::invalid("k-NN training documents must be labelled"))?;
        let cost = ground_cost_matrix(query.support().view(), doc.support().view())?;
        let r = sinkhorn(&cost, query.weights(), doc.weights(), config)?;
        scored.push((r.distance, idx, label));
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().map(|(d, _, y)| (d, y)).collect())
}

/// Majority vote among the `k` nearest; ties go to the smaller mean distance,
/// then to the smaller class id.
pub fn knn_vote<T: Scalar>(neighbors: &[(T, usize)], k: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let top = &neighbors[..k.min(neighbors.len())];
    let classes = top.iter().map(|&(_, y)| y).max().map_or(0, |m| m + 1);
    let mut votes = vec![0usize; classes];
    let mut dist_sum = vec![T::zero(); classes];
    for &(d, y) in top {
        votes[y] += 1;
        dist_sum[y] += d;
    }
    let mut best: Option<usize> = None;
    for y in 0..classes {
        if votes[y] == 0 {
            continue;
        }
        best = match best {
            None => Some(y),
            Some(b) => {
                let mean_y = dist_sum[y] / T::of_usize(votes[y]);
                let mean_b = dist_sum[b] / T::of_usize(votes[b]);
                if votes[y] > votes[b] || (votes[y] == votes[b] && mean_y < mean_b) {
                    Some(y)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or_else(|| Error::invalid("no neighbors to vote"))
}

/// k-NN under the transport distance in the untransformed word space.
pub fn wmd_knn_classify<T: Scalar>(
    test_doc: &DocumentMeasure<T>,
    train: &[DocumentMeasure<T>],
    k: usize,
    config: &SinkhornConfig,
) -> Result<usize> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    knn_vote(&knn_neighbors(test_doc, train, config)?, k)
}

pub fn error_rate(predictions: &[usize], truths: &[usize]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("error rate of an empty set"));
    }
    let wrong = predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p != t)
        .count();
    Ok(wrong as f64 / predictions.len() as f64)
}

/// `doc_id,true_label,predicted_label,dist_class_0,...`
pub fn predictions_csv<T: Scalar>(
    doc_ids: &[usize],
    truths: &[usize],
    predictions: &[Prediction<T>],
    class_names: &[String],
) -> String {
    let mut out = String::from("doc_id,true_label,predicted_label");
    for y in 0..class_names.len() {
        out.push_str(&format!(",dist_class_{y}"));
    }
    out.push('\n');
    for ((id, truth), pred) in doc_ids.iter().zip(truths).zip(predictions) {
        out.push_str(&format!(
            "{id},{},{}",
            class_names[*truth], class_names[pred.predicted_class]
        ));
        for d in &pred.anchor_distances {
            out.push_str(&format!(",{}", d.as_f64()));
        }
        out.push('\n');
    }
    out
}
