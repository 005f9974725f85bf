//! Frozen text encoder and the cosine primitive.
//!
//! The built-in [`HashedTfEncoder`] hashes lowercase alphanumeric tokens into
//! `buckets` term-frequency slots, projects them to `q` dimensions with a
//! seeded random ±1/√q matrix and L2-normalizes the result. Projection rows
//! are regenerated per bucket from `(seed, bucket)`, so the full
//! `buckets × q` matrix is never materialized.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::JobRecord;

/// Added to cosine denominators.
pub const COSINE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub q: usize,
    pub vocab_hash_buckets: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            q: 64,
            vocab_hash_buckets: 1 << 15,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::Config(format!("encoder q must be >= 2, got {}", self.q)));
        }
        if self.vocab_hash_buckets < self.q {
            return Err(Error::Config(format!(
                "vocab_hash_buckets ({}) must be >= q ({})",
                self.vocab_hash_buckets, self.q
            )));
        }
        Ok(())
    }
}

/// Anything that turns text into a fixed-width vector.
pub trait TextEncoder: Send + Sync {
    fn dim(&self) -> usize;
    fn encode(&self, text: &str) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub struct HashedTfEncoder {
    config: EncoderConfig,
}

impl HashedTfEncoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.config.vocab_hash_buckets as u64) as usize
    }

    fn projection_row(&self, bucket: usize, out: &mut [f64], weight: f64) {
        let seed = splitmix64(self.config.seed ^ splitmix64(bucket as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = weight / (self.config.q as f64).sqrt();
        for o in out.iter_mut() {
            if rng.random::<bool>() {
                *o += scale;
            } else {
                *o -= scale;
            }
        }
    }
}

impl TextEncoder for HashedTfEncoder {
    fn dim(&self) -> usize {
        self.config.q
    }

    fn encode(&self, text: &str) -> Vec<f64> {
        let mut tf: BTreeMap<usize, u32> = BTreeMap::new();
        for tok in tokenize(text) {
            *tf.entry(self.bucket(&tok)).or_insert(0) += 1;
        }
        let mut v = vec![0.0; self.config.q];
        for (&bucket, &count) in &tf {
            // sublinear term frequency
            self.projection_row(bucket, &mut v, 1.0 + f64::from(count).ln());
        }
        let norm = l2_norm(&v);
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

/// Lowercases and splits on any non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Joins title, description, location and salary with single spaces,
/// skipping empty fields.
pub fn concat_features(job: &JobRecord) -> String {
    [
        job.title.as_str(),
        job.description.as_str(),
        job.location.as_deref().unwrap_or(""),
        job.salary.as_deref().unwrap_or(""),
    ]
    .iter()
    .map(|s| s.trim())
    .filter(|s| !s.is_empty())
    .collect::<Vec<_>>()
    .join(" ")
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine without length checks; 0 when either side is all-zero.
pub(crate) fn cosine_unchecked(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb + COSINE_EPS)
}

/// `<a,b> / (|a||b| + 1e-12)`, or 0 if either vector is all-zero.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(cosine_unchecked(a, b).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobVector {
    pub id: String,
    pub vec: Vec<f64>,
}

/// Reads `id<TAB>f1<TAB>...<TAB>fq` lines. With `expected_dim = None` the
/// first line fixes `q`.
pub fn load_precomputed(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<Vec<JobVector>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display();
    let mut dim = expected_dim;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("{origin}:{}", lineno + 1);
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::Parse { at, msg: "missing id".into() });
        }
        let vec = fields
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Parse {
                    at: at.clone(),
                    msg: format!("bad float '{f}': {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let q = *dim.get_or_insert(vec.len());
        if vec.len() != q {
            return Err(Error::Parse {
                at,
                msg: Error::Dimension { expected: q, got: vec.len() }.to_string(),
            });
        }
        if vec.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("vector '{id}' at {at}")));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::invariant(at, format!("duplicate id '{id}'")));
        }
        out.push(JobVector { id, vec });
    }
    Ok(out)
}

/// Writes vectors in the precomputed format. Floats use Rust's shortest
/// round-trip formatting, so a reload is bit-exact.
pub fn save_precomputed(path: impl AsRef<Path>, vectors: &[JobVector]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for v in vectors {
        write!(w, "{}", v.id).map_err(|e| Error::io(path, e))?;
        for x in &v.vec {
            write!(w, "\t{x:?}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
