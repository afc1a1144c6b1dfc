//! Contrastive training of the transform and the class anchors.
//!
//! Each document is embedded, compared against every anchor with entropic OT,
//! and scored by a triplet or InfoNCE loss on those distances. Gradients flow
//! back through the transport plans (envelope rule) and the squared Euclidean
//! ground cost:
//!
//! * `d cost(i,j) / d A   =  2 (A x_i - q_j) x_i^T`
//! * `d cost(i,j) / d q_j = -2 (A x_i - q_j)`

mod adam;
mod loss;

use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use log::{debug, warn};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamState};
pub use loss::{infonce_eval, infonce_loss, triplet_eval, triplet_loss, LossEval, LossKind};

use crate::error::{Error, Result};
use crate::model::{
    doc_anchor_distances, embed_document, init_anchors, DocumentMeasure, Model, TransformMatrix,
};
use crate::ot::{sinkhorn_cost_gradient, SinkhornConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub margin: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub l2_coeff: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Support points per class anchor.
    pub anchor_points: usize,
    pub sinkhorn: SinkhornConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Triplet,
            margin: 10.0,
            temperature: 30.0,
            learning_rate: 0.1,
            l2_coeff: 0.001,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            anchor_points: 16,
            sinkhorn: SinkhornConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if !(self.l2_coeff.is_finite() && self.l2_coeff >= 0.0) {
            return bad(format!(
                "l2 coefficient must be non-negative, got {}",
                self.l2_coeff
            ));
        }
        if !self.margin.is_finite() {
            return bad("margin must be finite".into());
        }
        if self.epochs == 0 || self.batch_size == 0 || self.anchor_points == 0 {
            return bad("epochs, batch size and anchor points must be at least 1".into());
        }
        self.sinkhorn.validate()
    }
}

/// Aggregate diagnostics over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub documents: usize,
    /// Active hinges (triplet) or summed softmax entropy (InfoNCE).
    pub diagnostic_sum: f64,
    pub sinkhorn_nonconverged: usize,
}

#[derive(Debug, Clone)]
pub struct GradientBundle<T> {
    pub grad_transform: Array2<T>,
    pub grad_anchors: Vec<Array2<T>>,
    /// Mean contrastive loss over the batch plus the l2 penalty on the transform.
    pub loss_value: T,
    pub stats: BatchStats,
}

struct DocGrad<T> {
    loss: T,
    grad_transform: Array2<T>,
    grad_anchors: Vec<Option<Array2<T>>>,
    diagnostic: T,
    nonconverged: usize,
}

fn label_of<T: Scalar>(doc: &DocumentMeasure<T>, num_classes: usize) -> Result<usize> {
    match doc.label() {
        Some(y) if y < num_classes => Ok(y),
        Some(y) => Err(Error::invalid(format!(
            "label {y} out of range for {num_classes} classes"
        ))),
        None => Err(Error::invalid("training documents must be labelled")),
    }
}

fn evaluate_loss<T: Scalar>(dists: &[T], label: usize, cfg: &TrainConfig) -> LossEval<T> {
    match cfg.loss {
        LossKind::Triplet => triplet_eval(dists, label, T::of(cfg.margin)),
        LossKind::InfoNce => infonce_eval(dists, label, T::of(cfg.temperature)),
    }
}

fn doc_gradient<T: Scalar>(
    model: &Model<T>,
    doc: &DocumentMeasure<T>,
    cfg: &TrainConfig,
) -> Result<DocGrad<T>> {
    let label = label_of(doc, model.num_classes())?;
    if doc.is_empty() {
        return Err(Error::invalid("cannot train on an empty document"));
    }
    let embedded = embed_document(doc, &model.transform)?;
    let results = doc_anchor_distances(&embedded, &model.anchors, &cfg.sinkhorn)?;
    let nonconverged = results.iter().filter(|r| !r.converged).count();
    let dists: Vec<T> = results.iter().map(|r| r.regularized_cost).collect();
    let eval = evaluate_loss(&dists, label, cfg);

    let z = embedded.support();
    let (d, n) = z.dim();
    let two = T::of(2.0);
    // Sum over classes of (Z diag(rowsum G) - Q G^T); multiplied by X^T at the end.
    let mut left = Array2::<T>::zeros((d, n));
    let mut grad_anchors = Vec::with_capacity(results.len());
    for (k, result) in results.iter().enumerate() {
        let scale = eval.grad[k];
        if scale == T::zero() {
            grad_anchors.push(None);
            continue;
        }
        let g = sinkhorn_cost_gradient(result).gradient * scale;
        let q = model.anchors.anchor(k);
        let row_mass: Array1<T> = g.sum_axis(Axis(1));
        let col_mass: Array1<T> = g.sum_axis(Axis(0));
        left = left + &(z * &row_mass) - q.dot(&g.t());
        let grad_q = (z.dot(&g) - &(q * &col_mass)) * (-two);
        grad_anchors.push(Some(grad_q));
    }
    let grad_transform = left.dot(&doc.support().t()) * two;
    Ok(DocGrad {
        loss: eval.value,
        grad_transform,
        grad_anchors,
        diagnostic: eval.diagnostic,
        nonconverged,
    })
}

/// Mean loss and gradients over a batch of raw (untransformed) documents.
///
/// Per-document solves run in parallel; accumulation follows document order so
/// the result does not depend on the thread count.
pub fn batch_gradients<T: Scalar>(
    model: &Model<T>,
    batch: &[DocumentMeasure<T>],
    cfg: &TrainConfig,
) -> Result<GradientBundle<T>> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    let per_doc: Vec<DocGrad<T>> = batch
        .par_iter()
        .map(|doc| doc_gradient(model, doc, cfg))
        .collect::<Result<_>>()?;

    let d = model.dim();
    let p = model.anchors.points_per_anchor();
    let mut grad_transform = Array2::<T>::zeros((d, d));
    let mut grad_anchors = vec![Array2::<T>::zeros((d, p)); model.num_classes()];
    let mut loss = T::zero();
    let mut stats = BatchStats {
        documents: batch.len(),
        ..Default::default()
    };
    for g in &per_doc {
        loss += g.loss;
        grad_transform += &g.grad_transform;
        for (acc, ga) in grad_anchors.iter_mut().zip(&g.grad_anchors) {
            if let Some(ga) = ga {
                *acc += ga;
            }
        }
        stats.diagnostic_sum += g.diagnostic.as_f64();
        stats.sinkhorn_nonconverged += g.nonconverged;
    }
    if stats.sinkhorn_nonconverged > 0 {
        debug!(
            "{} sinkhorn solves hit the iteration cap in this batch",
            stats.sinkhorn_nonconverged
        );
    }
    let inv = T::one() / T::of_usize(batch.len());
    grad_transform.mapv_inplace(|v| v * inv);
    for ga in &mut grad_anchors {
        ga.mapv_inplace(|v| v * inv);
    }
    let l2 = T::of(cfg.l2_coeff);
    let a = model.transform.matrix();
    grad_transform.scaled_add(T::of(2.0) * l2, a);
    let penalty = l2 * a.iter().map(|v| *v * *v).sum::<T>();
    Ok(GradientBundle {
        grad_transform,
        grad_anchors,
        loss_value: loss * inv + penalty,
        stats,
    })
}

/// Forward pass only: the objective `batch_gradients` differentiates.
pub fn batch_loss<T: Scalar>(
    model: &Model<T>,
    batch: &[DocumentMeasure<T>],
    cfg: &TrainConfig,
) -> Result<T> {
    if batch.is_empty() {
        return Err(Error::invalid("batch is empty"));
    }
    let losses: Vec<T> = batch
        .par_iter()
        .map(|doc| {
            let label = label_of(doc, model.num_classes())?;
            let embedded = embed_document(doc, &model.transform)?;
            let dists: Vec<T> = doc_anchor_distances(&embedded, &model.anchors, &cfg.sinkhorn)?
                .iter()
                .map(|r| r.regularized_cost)
                .collect();
            Ok(evaluate_loss(&dists, label, cfg).value)
        })
        .collect::<Result<_>>()?;
    let mean = losses.iter().copied().sum::<T>() / T::of_usize(batch.len());
    let a = model.transform.matrix();
    Ok(mean + T::of(cfg.l2_coeff) * a.iter().map(|v| *v * *v).sum::<T>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Fraction of active hinges (triplet) or mean softmax entropy (InfoNCE).
    pub diagnostic: f64,
    pub sinkhorn_nonconverged: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: Model<T>,
    pub history: Vec<EpochRecord>,
}

/// Identity transform plus k-means anchors.
pub fn initial_model<T: Scalar>(
    docs: &[DocumentMeasure<T>],
    class_names: &[String],
    cfg: &TrainConfig,
) -> Result<Model<T>> {
    let anchors = init_anchors(docs, class_names, cfg.anchor_points, cfg.seed)?;
    Model::new(TransformMatrix::identity(anchors.dim()), anchors)
}

pub fn train<T: Scalar>(
    docs: &[DocumentMeasure<T>],
    class_names: &[String],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with_hook(docs, class_names, cfg, |_, _| ControlFlow::Continue(()))
}

/// Like [`train`], calling `hook` after every epoch; `Break` stops early.
pub fn train_with_hook<T: Scalar>(
    docs: &[DocumentMeasure<T>],
    class_names: &[String],
    cfg: &TrainConfig,
    mut hook: impl FnMut(&EpochRecord, &Model<T>) -> ControlFlow<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if class_names.len() < 2 {
        return Err(Error::invalid("training needs at least two classes"));
    }
    for doc in docs {
        label_of(doc, class_names.len())?;
    }
    let mut model = initial_model(docs, class_names, cfg)?;
    let mut params = model.to_flat();
    let mut adam = AdamState::new(params.len());
    let lr = T::of(cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let hinges_per_doc = (class_names.len() - 1) as f64;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut diag_sum = 0.0;
        let mut nonconverged = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<DocumentMeasure<T>> = chunk.iter().map(|&i| docs[i].clone()).collect();
            let bundle = batch_gradients(&model, &batch, cfg)?;
            loss_sum += bundle.loss_value.as_f64() * chunk.len() as f64;
            diag_sum += bundle.stats.diagnostic_sum;
            nonconverged += bundle.stats.sinkhorn_nonconverged;

            let mut grads = Vec::with_capacity(params.len());
            grads.extend(bundle.grad_transform.iter().copied());
            for ga in &bundle.grad_anchors {
                grads.extend(ga.iter().copied());
            }
            adam_step(&mut params, &grads, &mut adam, lr)?;
            model.set_flat(&params)?;
        }
        let n = docs.len() as f64;
        let diagnostic = match cfg.loss {
            LossKind::Triplet => diag_sum / (n * hinges_per_doc),
            LossKind::InfoNce => diag_sum / n,
        };
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / n,
            diagnostic,
            sinkhorn_nonconverged: nonconverged,
        };
        if nonconverged > 0 {
            warn!("epoch {epoch}: {nonconverged} sinkhorn solves did not converge");
        }
        debug!("epoch {epoch}: mean loss {:.6}", record.mean_loss);
        let flow = hook(&record, &model);
        history.push(record);
        if flow.is_break() {
            break;
        }
    }
    Ok(TrainOutcome { model, history })
}

/// `epoch,mean_loss,<diagnostic>,sinkhorn_nonconverged_count` with the
/// diagnostic column named after the loss kind.
pub fn history_csv(history: &[EpochRecord], loss: LossKind) -> String {
    let diag = match loss {
        LossKind::Triplet => "hinge_active_fraction",
        LossKind::InfoNce => "softmax_entropy",
    };
    let mut out = format!("epoch,mean_loss,{diag},sinkhorn_nonconverged_count\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.epoch, r.mean_loss, r.diagnostic, r.sinkhorn_nonconverged
        ));
    }
    out
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord], loss: LossKind) -> Result<()> {
    fs::write(path, history_csv(history, loss)).map_err(|e| Error::io(path, e))
}
