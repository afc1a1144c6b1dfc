//! JSON model checkpoints.

use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnchorSet, Model, TransformMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dim: usize,
    pub num_classes: usize,
    pub p: usize,
    /// Row-major `dim x dim`.
    pub transform: Vec<Vec<f64>>,
    /// One row-major `dim x p` matrix per class.
    pub anchors: Vec<Vec<Vec<f64>>>,
    pub class_names: Vec<String>,
    /// Content hash of the word vectors the model was trained against.
    pub vocab_hash: String,
}

fn rows<T: Scalar>(m: &Array2<T>) -> Vec<Vec<f64>> {
    m.outer_iter()
        .map(|r| r.iter().map(|v| v.as_f64()).collect())
        .collect()
}

fn matrix<T: Scalar>(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<Array2<T>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::invalid(format!(
            "checkpoint {what} is not {}x{}",
            shape.0, shape.1
        )));
    }
    Ok(Array2::from_shape_fn(shape, |(i, j)| T::of(rows[i][j])))
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &Model<T>, vocab_hash: impl Into<String>) -> Self {
        Checkpoint {
            dim: model.dim(),
            num_classes: model.num_classes(),
            p: model.anchors.points_per_anchor(),
            transform: rows(model.transform.matrix()),
            anchors: model.anchors.anchors().iter().map(rows).collect(),
            class_names: model.class_names().to_vec(),
            vocab_hash: vocab_hash.into(),
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<Model<T>> {
        if self.anchors.len() != self.num_classes || self.class_names.len() != self.num_classes {
            return Err(Error::invalid("checkpoint class count is inconsistent"));
        }
        let transform =
            TransformMatrix::new(matrix(&self.transform, (self.dim, self.dim), "transform")?)?;
        let anchors = self
            .anchors
            .iter()
            .map(|a| matrix(a, (self.dim, self.p), "anchor"))
            .collect::<Result<Vec<_>>>()?;
        Model::new(
            transform,
            AnchorSet::new(anchors, self.class_names.clone())?,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes to a temporary file next to `path`, then renames over it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        write_atomic(path, json.as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}
