//! End-to-end wiring: one root seed and a layered [`RunConfig`] drive
//! splitting, encoding, mining, initialization, training and evaluation.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{concat_features, fnv1a, splitmix64, EncoderConfig, HashedTfEncoder, JobVector, TextEncoder};
use crate::error::{Error, Result};
use crate::eval::{evaluate, Decoding, MetricsReport};
use crate::model::{init_params, InitMode, JobMatrix, ModelParams};
use crate::synth::{stratified_split, Splits, SynthConfig};
use crate::taxonomy::Dataset;
use crate::trainer::{run_ablation, train, AblationRow, TrainConfig, TrainData, TrainOutcome};
use crate::triplet::{mine, MineOutput, MinerConfig, PerRelation, Relation, Triplet, TripletContext, TripletStores};

/// Every knob of a run. The per-stage `seed` fields are ignored: each stage
/// gets `derive_seed(seed, <stage>)` so the root seed is the only source of
/// randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub synth: SynthConfig,
    pub encoder: EncoderConfig,
    pub miner: MinerConfig,
    pub train: TrainConfig,
    pub init: InitMode,
    pub decoding: Decoding,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthConfig::default(),
            encoder: EncoderConfig::default(),
            miner: MinerConfig::default(),
            train: TrainConfig::default(),
            init: InitMode::Random,
            decoding: Decoding::Unconstrained,
        }
    }
}

impl RunConfig {
    /// Copy with every stage seed derived from the root seed.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.synth.seed = derive_seed(self.seed, "synth");
        c.encoder.seed = derive_seed(self.seed, "encoder");
        c.miner.seed = derive_seed(self.seed, "miner");
        c.train.seed = derive_seed(self.seed, "train");
        c
    }

    /// Reads a TOML file, or JSON when the extension is `.json`. Missing
    /// fields keep their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.extension().is_some_and(|e| e == "json"))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str, json: bool) -> std::result::Result<Self, String> {
        if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.message().to_string())
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.encoder.validate()?;
        self.train.validate()?;
        if self.miner.n_neg == 0 {
            return Err(Error::Config("n_neg must be >= 1".into()));
        }
        Ok(())
    }
}

/// Stable per-stage seed.
pub fn derive_seed(root: u64, tag: &str) -> u64 {
    splitmix64(root ^ fnv1a(tag.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!("unknown split '{s}'"))),
        }
    }
}

impl Splits {
    pub fn rows(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Encodes every job's concatenated fields.
pub fn encode_jobs(dataset: &Dataset, encoder: &dyn TextEncoder) -> JobMatrix {
    let rows: Vec<Vec<f64>> = dataset
        .jobs
        .par_iter()
        .map(|j| encoder.encode(&concat_features(j)))
        .collect();
    build_matrix(dataset, encoder.dim(), rows)
}

/// Uses externally produced vectors; every job needs exactly one.
pub fn job_matrix_from_vectors(dataset: &Dataset, vectors: &[JobVector]) -> Result<JobMatrix> {
    let q = vectors
        .first()
        .map(|v| v.vec.len())
        .ok_or_else(|| Error::Config("no precomputed vectors".into()))?;
    let mut by_id: HashMap<&str, &[f64]> = HashMap::with_capacity(vectors.len());
    for v in vectors {
        if v.vec.len() != q {
            return Err(Error::Dimension { expected: q, got: v.vec.len() });
        }
        by_id.insert(&v.id, &v.vec);
    }
    let rows = dataset
        .jobs
        .iter()
        .map(|j| {
            by_id.get(j.id.as_str()).map(|v| v.to_vec()).ok_or_else(|| Error::UnknownId {
                at: "precomputed vectors".into(),
                kind: "job",
                id: j.id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(build_matrix(dataset, q, rows))
}

fn build_matrix(dataset: &Dataset, q: usize, rows: Vec<Vec<f64>>) -> JobMatrix {
    let n = rows.len();
    let vectors = Array2::from_shape_vec((n, q), rows.concat()).expect("rows have length q");
    let (soc, carotene) = (0..n).map(|i| dataset.labels(i)).unzip();
    JobMatrix {
        ids: dataset.jobs.iter().map(|j| j.id.clone()).collect(),
        vectors,
        soc,
        carotene,
    }
}

/// Mines all four relations over the whole dataset.
pub fn mine_all(
    dataset: &Dataset,
    config: &MinerConfig,
    encoder: Option<&dyn TextEncoder>,
) -> Result<PerRelation<MineOutput>> {
    let mut out = PerRelation::<MineOutput>::default();
    for r in Relation::ALL {
        out[r] = mine(r, &dataset.jobs, &dataset.taxonomy, &dataset.graph, config, encoder)?;
        if out[r].warnings > 0 {
            log::warn!("{r}: {} links skipped with empty complements", out[r].warnings);
        }
    }
    Ok(out)
}

/// Resolves mined triplets, keeping job-anchored ones only when the job is in
/// `rows`. Taxonomy-level relations are shared by all splits.
pub fn split_stores(dataset: &Dataset, mined: &PerRelation<MineOutput>, rows: &[usize]) -> Result<TripletStores> {
    let ctx = TripletContext::new(&dataset.taxonomy, &dataset.graph, &dataset.jobs);
    let keep: BTreeSet<usize> = rows.iter().copied().collect();
    let mut stores = TripletStores::default();
    for r in Relation::ALL {
        let mut resolved = ctx.resolve_all(&mined[r].triplets)?;
        if matches!(r, Relation::JobSoc | Relation::JobCar) {
            resolved.retain(|t| keep.contains(&t.anchor));
        }
        stores[r] = Some(resolved);
    }
    Ok(stores)
}

/// A dataset with everything derived from it that training needs.
pub struct Experiment {
    pub config: RunConfig,
    pub dataset: Dataset,
    pub splits: Splits,
    pub encoder: HashedTfEncoder,
    pub jobs: JobMatrix,
    pub mined: PerRelation<MineOutput>,
    /// Per split: taxonomy triplets plus the split's job-anchored triplets.
    pub train_stores: TripletStores,
    pub val_stores: TripletStores,
    pub test_stores: TripletStores,
    pub init: ModelParams,
}

impl Experiment {
    /// Encodes and mines everything from scratch. `config` is resolved
    /// internally; pass the user-facing one.
    pub fn prepare(config: &RunConfig, dataset: Dataset) -> Result<Self> {
        Self::prepare_with(config, dataset, None, None)
    }

    /// Like [`Experiment::prepare`] but with externally produced job vectors
    /// and/or previously mined triplets (re-validated against the dataset).
    pub fn prepare_with(
        config: &RunConfig,
        dataset: Dataset,
        vectors: Option<&[JobVector]>,
        triplets: Option<PerRelation<Vec<Triplet>>>,
    ) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        let splits = stratified_split(&dataset, config.synth.split, derive_seed(config.seed, "split"));
        let encoder = HashedTfEncoder::new(config.encoder.clone())?;
        let jobs = match vectors {
            Some(v) => job_matrix_from_vectors(&dataset, v)?,
            None => encode_jobs(&dataset, &encoder),
        };
        if jobs.dim() != config.encoder.q {
            return Err(Error::Dimension { expected: config.encoder.q, got: jobs.dim() });
        }
        let mined = match triplets {
            Some(t) => PerRelation::from_fn(|r| MineOutput {
                triplets: t[r].clone(),
                warnings: 0,
            }),
            None => mine_all(&dataset, &config.miner, Some(&encoder))?,
        };
        let train_stores = split_stores(&dataset, &mined, &splits.train)?;
        let val_stores = split_stores(&dataset, &mined, &splits.val)?;
        let test_stores = split_stores(&dataset, &mined, &splits.test)?;
        let init = init_params(
            &dataset.taxonomy,
            config.encoder.q,
            config.init,
            derive_seed(config.seed, "init"),
            Some(&encoder),
        )?;
        Ok(Self {
            config,
            dataset,
            splits,
            encoder,
            jobs,
            mined,
            train_stores,
            val_stores,
            test_stores,
            init,
        })
    }

    pub fn stores(&self, split: Split) -> &TripletStores {
        match split {
            Split::Train => &self.train_stores,
            Split::Val => &self.val_stores,
            Split::Test => &self.test_stores,
        }
    }

    pub fn train_data(&self) -> TrainData<'_> {
        TrainData {
            jobs: &self.jobs,
            train_rows: &self.splits.train,
            val_rows: &self.splits.val,
            taxonomy: &self.dataset.taxonomy,
            stores: self.stores(Split::Train),
            val_stores: self.stores(Split::Val),
        }
    }

    pub fn train(&self) -> Result<TrainOutcome> {
        self.train_with(&self.config.train)
    }

    /// Trains with `config` in place of the run's train config.
    pub fn train_with(&self, config: &TrainConfig) -> Result<TrainOutcome> {
        train(&self.train_data(), self.init.clone(), config)
    }

    pub fn evaluate(&self, params: &ModelParams, split: Split) -> Result<MetricsReport> {
        evaluate(
            params,
            &self.jobs,
            self.splits.rows(split),
            &self.dataset.taxonomy,
            self.stores(split),
            self.config.decoding,
        )
    }

    /// Full config plus one row per zeroed λ (1-based), scored on `split`.
    pub fn ablate(&self, zero_lambdas: &[usize], split: Split) -> Result<Vec<AblationRow>> {
        run_ablation(
            &self.config.train,
            &self.train_data(),
            &self.init,
            self.splits.rows(split),
            self.stores(split),
            zero_lambdas,
        )
    }
}
