use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};
use wmanchor::data::CorpusFormat;
use wmanchor::ot::Epsilon;
use wmanchor::training::{LossKind, TrainConfig};

/// Everything a run needs. Read from JSON; absent keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub vectors: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// Explicit test corpus; otherwise `corpus` is split by `train_fraction`.
    pub test_corpus: Option<PathBuf>,
    pub corpus_format: CorpusFormat,
    pub stopwords: Option<PathBuf>,
    pub train_fraction: f64,
    pub split_seed: u64,
    /// Defaults to `<output_dir>/checkpoint.json`.
    pub checkpoint: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub train: TrainConfig,
    pub knn_k: usize,
    pub knn_sweep: Vec<usize>,
    pub top_k: usize,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            vectors: None,
            corpus: None,
            test_corpus: None,
            corpus_format: CorpusFormat::LabelTab,
            stopwords: None,
            train_fraction: 0.7,
            split_seed: 0,
            checkpoint: None,
            output_dir: PathBuf::from("output"),
            train: TrainConfig::default(),
            knn_k: 7,
            knn_sweep: vec![1, 3, 5, 7, 9, 11, 13, 15, 17, 19],
            top_k: 30,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint
            .clone()
            .unwrap_or_else(|| self.output_dir.join("checkpoint.json"))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.train.validate()?;
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            bail!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            );
        }
        if self.knn_k == 0 || self.knn_sweep.contains(&0) {
            bail!("k-NN k values must be at least 1");
        }
        if self.top_k == 0 {
            bail!("top_k must be at least 1");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }

    /// Layers `flags` over this config: set flags win.
    pub fn apply(&mut self, flags: &Overrides) -> anyhow::Result<()> {
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = &$flag {
                    $field = v.clone().into();
                }
            };
        }
        set!(flags.vectors, self.vectors);
        set!(flags.corpus, self.corpus);
        set!(flags.test_corpus, self.test_corpus);
        set!(flags.stopwords, self.stopwords);
        set!(flags.train_fraction, self.train_fraction);
        set!(flags.split_seed, self.split_seed);
        set!(flags.checkpoint, self.checkpoint);
        set!(flags.out, self.output_dir);
        set!(flags.margin, self.train.margin);
        set!(flags.tau, self.train.temperature);
        set!(flags.lr, self.train.learning_rate);
        set!(flags.l2, self.train.l2_coeff);
        set!(flags.epochs, self.train.epochs);
        set!(flags.batch_size, self.train.batch_size);
        set!(flags.seed, self.train.seed);
        set!(flags.p, self.train.anchor_points);
        set!(flags.sinkhorn_iters, self.train.sinkhorn.max_iters);
        set!(flags.sinkhorn_tol, self.train.sinkhorn.tolerance);
        set!(flags.k, self.knn_k);
        set!(flags.knn_sweep, self.knn_sweep);
        set!(flags.top_k, self.top_k);
        set!(flags.threads, self.threads);
        if let Some(f) = &flags.format {
            self.corpus_format = match f.as_str() {
                "label-tab" => CorpusFormat::LabelTab,
                "directory-per-class" => CorpusFormat::DirectoryPerClass,
                other => bail!("unknown corpus format '{other}' (label-tab | directory-per-class)"),
            };
        }
        if let Some(l) = &flags.loss {
            self.train.loss = l.parse::<LossKind>().map_err(anyhow::Error::msg)?;
        }
        match (flags.epsilon, flags.epsilon_abs) {
            (Some(_), Some(_)) => bail!("--epsilon and --epsilon-abs are mutually exclusive"),
            (Some(f), None) => self.train.sinkhorn.epsilon = Epsilon::Relative(f),
            (None, Some(v)) => self.train.sinkhorn.epsilon = Epsilon::Absolute(v),
            (None, None) => {}
        }
        Ok(())
    }

    /// Defaults, then the config file named in `flags`, then the flags.
    pub fn resolve(flags: &Overrides) -> anyhow::Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(flags)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Command-line overrides; each one replaces the config-file value.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Word vectors in textual GloVe format.
    #[arg(long, global = true)]
    pub vectors: Option<PathBuf>,
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test_corpus: Option<PathBuf>,
    /// label-tab | directory-per-class
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub stopwords: Option<PathBuf>,
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    #[arg(long, global = true)]
    pub split_seed: Option<u64>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// triplet | infonce
    #[arg(long, global = true)]
    pub loss: Option<String>,
    #[arg(long, global = true)]
    pub margin: Option<f64>,
    /// InfoNCE temperature.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true)]
    pub l2: Option<f64>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Support points per class anchor.
    #[arg(long, global = true)]
    pub p: Option<usize>,
    /// Entropic regularization as a multiple of the mean cost.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Entropic regularization in absolute cost units.
    #[arg(long, global = true)]
    pub epsilon_abs: Option<f64>,
    #[arg(long, global = true)]
    pub sinkhorn_iters: Option<usize>,
    #[arg(long, global = true)]
    pub sinkhorn_tol: Option<f64>,
    /// k for the k-NN baseline.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Comma-separated k values for the baseline sweep.
    #[arg(long, global = true, value_delimiter = ',')]
    pub knn_sweep: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// Worker threads for Sinkhorn solves.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(
            &path,
            r#"{"train": {"margin": 3.0, "epochs": 7}, "top_k": 5, "knn_k": 9}"#,
        )
        .unwrap();
        let flags = Overrides {
            config: Some(path),
            margin: Some(4.0),
            epsilon_abs: Some(0.2),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&flags).unwrap();
        assert_eq!(cfg.train.margin, 4.0);
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.top_k, 5);
        assert_eq!(cfg.knn_k, 9);
        assert_eq!(cfg.train.learning_rate, 0.1);
        assert_eq!(cfg.train.sinkhorn.epsilon, Epsilon::Absolute(0.2));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let flags = Overrides {
            lr: Some(-1.0),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&flags).is_err());
        let flags = Overrides {
            loss: Some("hinge".into()),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&flags).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"tpo_k": 5}"#).unwrap();
        let flags = Overrides {
            config: Some(path),
            ..Default::default()
        };
        assert!(RunConfig::resolve(&flags).is_err());
    }
}
