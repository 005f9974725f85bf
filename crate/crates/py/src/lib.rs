//! Python bindings. Structured results (metrics, ablation rows, configs) come
//! back as plain dicts/lists decoded from their JSON form.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::Serialize;

use taxembed::eval::{export_projection, pca_2d};
use taxembed::model::{self, load_checkpoint, save_checkpoint, ModelParams};
use taxembed::pipeline::{Experiment as CoreExperiment, RunConfig, Split};
use taxembed::synth::generate;
use taxembed::triplet::{mine, MineMode, MinerConfig, Relation};
use taxembed::{Dataset, EncoderConfig, HashedTfEncoder, TextEncoder};

create_exception!(taxembed_py, TaxembedError, PyException);

fn err(e: taxembed::Error) -> PyErr {
    TaxembedError::new_err(format!("[{}] {e}", e.kind()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| TaxembedError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_split(name: &str) -> PyResult<Split> {
    name.parse().map_err(err)
}

fn load_dataset(dir: &str) -> PyResult<Dataset> {
    let dir = PathBuf::from(dir);
    Dataset::load(dir.join("jobs.jsonl"), dir.join("taxonomy.json"), dir.join("graph.csv")).map_err(err)
}

/// Defaults, then a config file (TOML, or JSON by extension) or inline TOML
/// text, then `seed`.
fn parse_config(path: Option<&str>, text: Option<&str>, seed: Option<u64>) -> PyResult<RunConfig> {
    let mut cfg = match (path, text) {
        (Some(_), Some(_)) => return Err(TaxembedError::new_err("pass either config or config_text, not both")),
        (Some(path), None) => RunConfig::load(path).map_err(err)?,
        (None, Some(text)) => RunConfig::parse(text, false).map_err(TaxembedError::new_err)?,
        (None, None) => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// Hashed sublinear-TF encoder with a fixed random projection to `q` dims.
#[pyclass(frozen)]
struct Encoder {
    inner: HashedTfEncoder,
}

#[pymethods]
impl Encoder {
    #[new]
    #[pyo3(signature = (q=64, vocab_hash_buckets=32768, seed=0))]
    fn new(q: usize, vocab_hash_buckets: usize, seed: u64) -> PyResult<Self> {
        let inner = HashedTfEncoder::new(EncoderConfig {
            q,
            vocab_hash_buckets,
            seed,
        })
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        self.inner.encode(text)
    }
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    taxembed::cosine(&a, &b).map_err(err)
}

#[pyfunction]
fn softmax(logits: Vec<f64>) -> Vec<f64> {
    model::softmax(&logits)
}

#[pyfunction]
fn ce_loss(probs: Vec<f64>, true_index: usize) -> PyResult<f64> {
    model::ce_loss(&probs, true_index).map_err(err)
}

#[pyfunction]
fn margin_triplet_loss(anchor: Vec<f64>, pos: Vec<f64>, neg: Vec<f64>, margin: f64) -> PyResult<f64> {
    model::margin_triplet_loss(&anchor, &pos, &neg, margin).map_err(err)
}

#[pyfunction]
fn contrastive_loss_nomargin(anchor: Vec<f64>, pos: Vec<f64>, negatives: Vec<Vec<f64>>) -> PyResult<f64> {
    model::contrastive_loss_nomargin(&anchor, &pos, &negatives).map_err(err)
}

/// Top-2 PCA coordinates of the given rows.
#[pyfunction]
fn pca(rows: Vec<Vec<f64>>) -> PyResult<Vec<[f64; 2]>> {
    let n = rows.len();
    let q = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != q) {
        return Err(TaxembedError::new_err("rows must have equal length"));
    }
    let arr = ndarray::Array2::from_shape_vec((n, q), rows.concat()).expect("checked shape");
    let out = pca_2d(&arr).map_err(err)?;
    Ok(out.rows().into_iter().map(|r| [r[0], r[1]]).collect())
}

/// Writes a synthetic corpus (taxonomy.json, jobs.jsonl, graph.csv) into
/// `out_dir` and returns its sizes.
#[pyfunction]
#[pyo3(signature = (out_dir, config=None, config_text=None, seed=None))]
fn generate_dataset<'py>(
    py: Python<'py>,
    out_dir: &str,
    config: Option<&str>,
    config_text: Option<&str>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = parse_config(config, config_text, seed)?.resolved();
    let dataset = py.detach(|| generate(&cfg.synth)).map_err(err)?;
    let dir = PathBuf::from(out_dir);
    std::fs::create_dir_all(&dir).map_err(|e| TaxembedError::new_err(e.to_string()))?;
    dataset
        .save(dir.join("jobs.jsonl"), dir.join("taxonomy.json"), dir.join("graph.csv"))
        .map_err(err)?;
    let stats = taxembed::taxonomy::degree_stats(&dataset.taxonomy, &dataset.graph);
    #[derive(Serialize)]
    struct Summary {
        jobs: usize,
        socs: usize,
        carotenes: usize,
        edges: usize,
    }
    to_py(
        py,
        &Summary {
            jobs: dataset.jobs.len(),
            socs: stats.num_socs,
            carotenes: stats.num_carotenes,
            edges: dataset.graph.num_edges(),
        },
    )
}

/// Mines one relation over a dataset directory; returns
/// `(triplets as (anchor, positive, negative) tuples, warnings)`.
#[pyfunction]
#[pyo3(signature = (data_dir, relation, mode="soft", n_neg=10, seed=0, q=64))]
fn mine_triplets(
    py: Python<'_>,
    data_dir: &str,
    relation: &str,
    mode: &str,
    n_neg: usize,
    seed: u64,
    q: usize,
) -> PyResult<(Vec<(String, String, String)>, usize)> {
    let dataset = load_dataset(data_dir)?;
    let relation: Relation = relation.parse().map_err(err)?;
    let mode: MineMode = mode.parse().map_err(err)?;
    let encoder = HashedTfEncoder::new(EncoderConfig {
        q,
        ..Default::default()
    })
    .map_err(err)?;
    let config = MinerConfig { n_neg, mode, seed };
    let out = py
        .detach(|| mine(relation, &dataset.jobs, &dataset.taxonomy, &dataset.graph, &config, Some(&encoder)))
        .map_err(err)?;
    Ok((
        out.triplets
            .into_iter()
            .map(|t| (t.anchor, t.positive, t.negative))
            .collect(),
        out.warnings,
    ))
}

/// A prepared run: dataset, splits, encoded jobs, mined triplets and the
/// initial parameters. `config` is a file path, `config_text` inline TOML.
#[pyclass(frozen)]
struct Experiment {
    inner: CoreExperiment,
    trained: std::sync::Mutex<Option<ModelParams>>,
}

impl Experiment {
    fn params(&self) -> ModelParams {
        self.trained
            .lock()
            .expect("not poisoned")
            .clone()
            .unwrap_or_else(|| self.inner.init.clone())
    }
}

#[pymethods]
impl Experiment {
    #[new]
    #[pyo3(signature = (config=None, config_text=None, data_dir=None, seed=None))]
    fn new(
        py: Python<'_>,
        config: Option<&str>,
        config_text: Option<&str>,
        data_dir: Option<&str>,
        seed: Option<u64>,
    ) -> PyResult<Self> {
        let cfg = parse_config(config, config_text, seed)?;
        let dataset = match data_dir {
            Some(dir) => load_dataset(dir)?,
            None => generate(&cfg.resolved().synth).map_err(err)?,
        };
        let inner = py.detach(|| CoreExperiment::prepare(&cfg, dataset)).map_err(err)?;
        Ok(Self {
            inner,
            trained: std::sync::Mutex::new(None),
        })
    }

    #[getter]
    fn num_jobs(&self) -> usize {
        self.inner.dataset.jobs.len()
    }

    /// `(train, val, test)` job counts.
    fn split_sizes(&self) -> (usize, usize, usize) {
        let s = &self.inner.splits;
        (s.train.len(), s.val.len(), s.test.len())
    }

    /// Mined triplet count per relation.
    fn triplet_counts(&self) -> Vec<(String, usize)> {
        self.inner
            .mined
            .iter()
            .map(|(r, out)| (r.to_string(), out.triplets.len()))
            .collect()
    }

    /// Trains from the initial parameters; returns the per-epoch history.
    fn train<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let outcome = py.detach(|| self.inner.train()).map_err(err)?;
        *self.trained.lock().expect("not poisoned") = Some(outcome.state.params);
        to_py(py, &outcome.history)
    }

    /// Metrics of the current parameters (initial ones before `train`).
    #[pyo3(signature = (split="val"))]
    fn evaluate<'py>(&self, py: Python<'py>, split: &str) -> PyResult<Bound<'py, PyAny>> {
        let split = parse_split(split)?;
        let params = self.params();
        let report = py.detach(|| self.inner.evaluate(&params, split)).map_err(err)?;
        to_py(py, &report)
    }

    /// One row for the full config plus one per zeroed λ (1-based).
    #[pyo3(signature = (zero=vec![1, 2, 3, 4, 5, 6], split="val"))]
    fn ablate<'py>(&self, py: Python<'py>, zero: Vec<usize>, split: &str) -> PyResult<Bound<'py, PyAny>> {
        let split = parse_split(split)?;
        let rows = py.detach(|| self.inner.ablate(&zero, split)).map_err(err)?;
        to_py(py, &rows)
    }

    /// `(id, level, parent, x, y)` for every SOC and Carotene embedding.
    fn projection(&self) -> PyResult<Vec<(String, String, String, f64, f64)>> {
        let points = export_projection(&self.params(), &self.inner.dataset.taxonomy).map_err(err)?;
        Ok(points
            .into_iter()
            .map(|p| (p.id, p.level.to_string(), p.parent, p.x, p.y))
            .collect())
    }

    fn save_checkpoint(&self, path: &str) -> PyResult<()> {
        save_checkpoint(path, &self.params(), &self.inner.dataset.taxonomy).map_err(err)
    }

    fn load_checkpoint(&self, path: &str) -> PyResult<()> {
        let params = load_checkpoint(path, &self.inner.dataset.taxonomy).map_err(err)?;
        *self.trained.lock().expect("not poisoned") = Some(params);
        Ok(())
    }
}

#[pymodule]
fn taxembed_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TaxembedError", m.py().get_type::<TaxembedError>())?;
    m.add_class::<Encoder>()?;
    m.add_class::<Experiment>()?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(softmax, m)?)?;
    m.add_function(wrap_pyfunction!(ce_loss, m)?)?;
    m.add_function(wrap_pyfunction!(margin_triplet_loss, m)?)?;
    m.add_function(wrap_pyfunction!(contrastive_loss_nomargin, m)?)?;
    m.add_function(wrap_pyfunction!(pca, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(mine_triplets, m)?)?;
    Ok(())
}
