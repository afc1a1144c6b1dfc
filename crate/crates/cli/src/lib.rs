//! Pipeline commands behind the `wmanchor` binary.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use log::info;
use rayon::prelude::*;
use wmanchor::checkpoint::{write_atomic, Checkpoint};
use wmanchor::classify::{
    classify_all, error_rate, knn_neighbors, knn_vote, predictions_csv, Prediction,
};
use wmanchor::data::{
    corpus_measures, load_corpus, load_word_vectors, split, Corpus, SplitSpec, Tokenizer,
    WordVectorTable,
};
use wmanchor::interpret::{
    export_projection, projection_tsv, tfidf_top_words, top_words_tsv, ImportanceTable, Vocabulary,
};
use wmanchor::training::{history_csv, train, EpochRecord};
use wmanchor::{DocumentMeasure64, Model64};

pub use config::{Overrides, RunConfig};

pub const HISTORY_FILE: &str = "loss_history.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const IMPORTANCE_FILE: &str = "importance.tsv";
pub const PROJECTION_FILE: &str = "projection.tsv";
pub const KNN_SWEEP_FILE: &str = "knn_sweep.csv";

/// Formats a rate in [0, 1] as a percentage with one decimal.
pub fn percent(rate: f64) -> String {
    format!("{:.1}", rate * 100.0)
}

/// Runs `f` on a pool of `threads` workers, or the global pool.
pub fn with_threads<R: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> anyhow::Result<R> + Send,
) -> anyhow::Result<R> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(f),
    }
}

fn require(path: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    let p = path
        .clone()
        .with_context(|| format!("missing {what} path (flag or config)"))?;
    ensure!(p.exists(), "{what} '{}' does not exist", p.display());
    Ok(p)
}

fn check_optional(path: &Option<PathBuf>, what: &str) -> anyhow::Result<()> {
    if let Some(p) = path {
        ensure!(p.exists(), "{what} '{}' does not exist", p.display());
    }
    Ok(())
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    write_atomic(path, contents.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn echo_config(cfg: &RunConfig, command: &str) -> anyhow::Result<()> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let mut json = serde_json::to_string_pretty(cfg)?;
    json.push('\n');
    write(
        &cfg.output_dir
            .join(format!("effective_config.{command}.json")),
        &json,
    )
}

/// Safe file stem for a class: its index plus the name with unusual
/// characters replaced.
fn class_file(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:02}_{clean}.tsv")
}

struct Dataset {
    vectors: WordVectorTable<f64>,
    train: Corpus,
    test: Corpus,
}

struct Inputs {
    vectors: PathBuf,
    corpus: PathBuf,
}

fn check_data_paths(cfg: &RunConfig) -> anyhow::Result<Inputs> {
    let inputs = Inputs {
        vectors: require(&cfg.vectors, "vectors")?,
        corpus: require(&cfg.corpus, "corpus")?,
    };
    check_optional(&cfg.test_corpus, "test corpus")?;
    check_optional(&cfg.stopwords, "stopwords")?;
    Ok(inputs)
}

fn load_dataset(cfg: &RunConfig, inputs: &Inputs) -> anyhow::Result<Dataset> {
    let tokenizer = match &cfg.stopwords {
        Some(p) => Tokenizer::load_stopwords(p)?,
        None => Tokenizer::default(),
    };
    let vectors = load_word_vectors::<f64>(&inputs.vectors)?;
    vectors.dim()?;
    let corpus = load_corpus(&inputs.corpus, cfg.corpus_format, &tokenizer)?;
    let spec = match &cfg.test_corpus {
        Some(p) => SplitSpec::Explicit {
            test: load_corpus(p, cfg.corpus_format, &tokenizer)?,
        },
        None => SplitSpec::Fraction {
            train_fraction: cfg.train_fraction,
            seed: cfg.split_seed,
        },
    };
    let (train, test) = split(&corpus, &spec)?;
    info!(
        "{} vectors, {} training and {} test documents, {} classes",
        vectors.len(),
        train.len(),
        test.len(),
        train.num_classes()
    );
    Ok(Dataset {
        vectors,
        train,
        test,
    })
}

fn labels(docs: &[DocumentMeasure64]) -> Vec<usize> {
    docs.iter()
        .map(|d| d.label().expect("corpus documents are labelled"))
        .collect()
}

fn predicted(preds: &[Prediction<f64>]) -> Vec<usize> {
    preds.iter().map(|p| p.predicted_class).collect()
}

fn load_model(cfg: &RunConfig, vectors: &WordVectorTable<f64>) -> anyhow::Result<Model64> {
    let path = cfg.checkpoint_path();
    let ckpt = Checkpoint::load(&path)?;
    let hash = vectors.content_hash();
    if ckpt.vocab_hash != hash {
        bail!(
            "checkpoint {} was trained with different word vectors (hash {} vs {})",
            path.display(),
            ckpt.vocab_hash,
            hash
        );
    }
    Ok(ckpt.to_model()?)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub history: Vec<EpochRecord>,
    pub train_error: f64,
    pub checkpoint: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig) -> anyhow::Result<TrainSummary> {
    let inputs = check_data_paths(cfg)?;
    echo_config(cfg, "train")?;
    with_threads(cfg.threads, || {
        let data = load_dataset(cfg, &inputs)?;
        let (docs, _) = corpus_measures(&data.train, &data.vectors)?;
        let outcome = train(&docs, data.train.class_names(), &cfg.train)?;

        let checkpoint = cfg.checkpoint_path();
        if let Some(parent) = checkpoint.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        Checkpoint::from_model(&outcome.model, data.vectors.content_hash()).save(&checkpoint)?;
        write(
            &cfg.output_dir.join(HISTORY_FILE),
            &history_csv(&outcome.history, cfg.train.loss),
        )?;

        let preds = classify_all(&docs, &outcome.model, &cfg.train.sinkhorn)?;
        let train_error = error_rate(&predicted(&preds), &labels(&docs))?;
        let final_loss = outcome.history.last().map_or(f64::NAN, |r| r.mean_loss);
        println!("final train loss: {final_loss:.6}");
        println!("train error rate: {}%", percent(train_error));
        println!("checkpoint: {}", checkpoint.display());
        Ok(TrainSummary {
            history: outcome.history,
            train_error,
            checkpoint,
        })
    })
}

#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub error_rate: f64,
    pub predictions: PathBuf,
}

pub fn cmd_eval(cfg: &RunConfig) -> anyhow::Result<EvalSummary> {
    let inputs = check_data_paths(cfg)?;
    require(&Some(cfg.checkpoint_path()), "checkpoint")?;
    echo_config(cfg, "eval")?;
    with_threads(cfg.threads, || {
        let data = load_dataset(cfg, &inputs)?;
        let model = load_model(cfg, &data.vectors)?;
        let test = data.test.align_to(model.class_names())?;
        let (docs, kept) = corpus_measures(&test, &data.vectors)?;
        ensure!(
            !docs.is_empty(),
            "no test document has an in-vocabulary word"
        );
        let preds = classify_all(&docs, &model, &cfg.train.sinkhorn)?;
        let truths = labels(&docs);
        let rate = error_rate(&predicted(&preds), &truths)?;
        let path = cfg.output_dir.join(PREDICTIONS_FILE);
        write(
            &path,
            &predictions_csv(&kept, &truths, &preds, model.class_names()),
        )?;
        println!(
            "test error rate: {}% ({} documents)",
            percent(rate),
            docs.len()
        );
        Ok(EvalSummary {
            error_rate: rate,
            predictions: path,
        })
    })
}

#[derive(Debug, Clone)]
pub struct InterpretSummary {
    /// Top words per class, most important first.
    pub top_words: Vec<Vec<(String, f64)>>,
    pub importance: ImportanceTable<f64>,
}

/// Corpus frequency of every token, and per class.
fn frequencies(corpus: &Corpus) -> (BTreeMap<&str, u64>, Vec<BTreeMap<&str, u64>>) {
    let mut total = BTreeMap::new();
    let mut per_class = vec![BTreeMap::new(); corpus.num_classes()];
    for doc in corpus.documents() {
        for (w, &c) in &doc.counts {
            *total.entry(w.as_str()).or_insert(0) += u64::from(c);
            *per_class[doc.label].entry(w.as_str()).or_insert(0) += u64::from(c);
        }
    }
    (total, per_class)
}

pub fn cmd_interpret(cfg: &RunConfig) -> anyhow::Result<InterpretSummary> {
    let inputs = check_data_paths(cfg)?;
    require(&Some(cfg.checkpoint_path()), "checkpoint")?;
    echo_config(cfg, "interpret")?;
    with_threads(cfg.threads, || {
        let data = load_dataset(cfg, &inputs)?;
        let model = load_model(cfg, &data.vectors)?;
        let train = data.train.align_to(model.class_names())?;
        let vocab = Vocabulary::from_corpus(&train, &data.vectors)?;
        let table = ImportanceTable::compute(&model, &vocab)?;
        write(&cfg.output_dir.join(IMPORTANCE_FILE), &table.to_tsv())?;

        let top_dir = cfg.output_dir.join("top_words");
        fs::create_dir_all(&top_dir)?;
        let (total, per_class) = frequencies(&train);
        let mut top_words = Vec::new();
        for (y, name) in model.class_names().iter().enumerate() {
            let top = table.top_k(y, cfg.top_k)?;
            write(&top_dir.join(class_file(y, name)), &top_words_tsv(&top))?;
            println!("class {name}: top {} words", top.len());
            for (rank, (w, imp)) in top.iter().enumerate() {
                let n = total.get(w.as_str()).copied().unwrap_or(0);
                let inside = per_class[y].get(w.as_str()).copied().unwrap_or(0);
                let share = if n == 0 {
                    0.0
                } else {
                    inside as f64 / n as f64
                };
                println!(
                    "  {:>3}. {w:<20} importance {imp:>12.4}  shown {n} times, {inside} in class ({}%)",
                    rank + 1,
                    percent(share)
                );
            }
            top_words.push(top);
        }

        let rows = export_projection(&model, &table, &vocab, cfg.top_k)?;
        write(
            &cfg.output_dir.join(PROJECTION_FILE),
            &projection_tsv(&rows),
        )?;
        Ok(InterpretSummary {
            top_words,
            importance: table,
        })
    })
}

pub fn cmd_export_viz(cfg: &RunConfig) -> anyhow::Result<PathBuf> {
    let inputs = check_data_paths(cfg)?;
    require(&Some(cfg.checkpoint_path()), "checkpoint")?;
    echo_config(cfg, "export-viz")?;
    with_threads(cfg.threads, || {
        let data = load_dataset(cfg, &inputs)?;
        let model = load_model(cfg, &data.vectors)?;
        let train = data.train.align_to(model.class_names())?;
        let vocab = Vocabulary::from_corpus(&train, &data.vectors)?;
        let table = ImportanceTable::compute(&model, &vocab)?;
        let rows = export_projection(&model, &table, &vocab, cfg.top_k)?;
        let path = cfg.output_dir.join(PROJECTION_FILE);
        write(&path, &projection_tsv(&rows))?;
        println!("projection of {} points: {}", rows.len(), path.display());
        Ok(path)
    })
}

#[derive(Debug, Clone)]
pub struct BaselineSummary {
    /// `(k, error rate)` in increasing k.
    pub knn_sweep: Vec<(usize, f64)>,
    pub knn_error: f64,
    pub tfidf: Vec<Vec<(String, f64)>>,
}

pub fn cmd_baseline(cfg: &RunConfig) -> anyhow::Result<BaselineSummary> {
    let inputs = check_data_paths(cfg)?;
    echo_config(cfg, "baseline")?;
    with_threads(cfg.threads, || {
        let data = load_dataset(cfg, &inputs)?;
        let (train_docs, _) = corpus_measures(&data.train, &data.vectors)?;
        let (test_docs, _) = corpus_measures(&data.test, &data.vectors)?;
        ensure!(
            !test_docs.is_empty(),
            "no test document has an in-vocabulary word"
        );

        let neighbors: Vec<Vec<(f64, usize)>> = test_docs
            .par_iter()
            .map(|d| knn_neighbors(d, &train_docs, &cfg.train.sinkhorn))
            .collect::<wmanchor::Result<_>>()?;
        let truths = labels(&test_docs);
        let mut ks = cfg.knn_sweep.clone();
        ks.push(cfg.knn_k);
        ks.sort_unstable();
        ks.dedup();
        let mut sweep = Vec::with_capacity(ks.len());
        let mut csv = String::from("k,error_rate\n");
        for &k in &ks {
            let preds = neighbors
                .iter()
                .map(|n| knn_vote(n, k))
                .collect::<wmanchor::Result<Vec<_>>>()?;
            let rate = error_rate(&preds, &truths)?;
            csv.push_str(&format!("{k},{rate}\n"));
            sweep.push((k, rate));
        }
        write(&cfg.output_dir.join(KNN_SWEEP_FILE), &csv)?;
        let knn_error = sweep.iter().find(|(k, _)| *k == cfg.knn_k).unwrap().1;
        println!(
            "WMD k-NN (k = {}) test error rate: {}%",
            cfg.knn_k,
            percent(knn_error)
        );

        let tfidf_dir = cfg.output_dir.join("tfidf_top_words");
        fs::create_dir_all(&tfidf_dir)?;
        let mut tfidf = Vec::new();
        for (y, name) in data.train.class_names().iter().enumerate() {
            let top = tfidf_top_words(&data.train, y, cfg.top_k)?;
            write(&tfidf_dir.join(class_file(y, name)), &top_words_tsv(&top))?;
            let preview: Vec<&str> = top.iter().take(10).map(|(w, _)| w.as_str()).collect();
            println!("TF-IDF {name}: {}", preview.join(" "));
            tfidf.push(top);
        }
        Ok(BaselineSummary {
            knn_sweep: sweep,
            knn_error,
            tfidf,
        })
    })
}
