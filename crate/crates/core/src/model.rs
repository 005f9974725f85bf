//! Trainable parameters, the six loss components and their analytic gradients.
//!
//! Embedding rows live in `soc_emb` (m×q) and `car_emb` (n×q); the two
//! classifier heads map a q-dimensional job vector to SOC (q×m) and Carotene
//! (q×n) logits. Job vectors come from a frozen encoder and never receive
//! gradient.
//!
//! Margin terms use `max(0, α − cos(a, p) + cos(a, n))`, i.e. a triplet is
//! satisfied once the positive is more similar than the negative by `α`.
//! Each component is the mean over its batch items.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{dot, l2_norm, TextEncoder, COSINE_EPS};
use crate::error::{Error, Result};
use crate::taxonomy::Taxonomy;
use crate::triplet::{IndexedTriplet, PerRelation, Relation};

/// Added to the true-class probability inside the CE log.
pub const CE_EPS: f64 = 1e-12;

/// Half-width of the uniform range used by [`InitMode::Random`].
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// m×q
    pub soc_emb: Array2<f64>,
    /// n×q
    pub car_emb: Array2<f64>,
    /// q×m
    pub soc_head: Array2<f64>,
    /// q×n
    pub car_head: Array2<f64>,
}

pub const BLOCK_NAMES: [&str; 4] = ["soc_emb", "car_emb", "soc_head", "car_head"];

impl ModelParams {
    pub fn zeros(m: usize, n: usize, q: usize) -> Self {
        Self {
            soc_emb: Array2::zeros((m, q)),
            car_emb: Array2::zeros((n, q)),
            soc_head: Array2::zeros((q, m)),
            car_head: Array2::zeros((q, n)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.num_socs(), self.num_carotenes(), self.dim())
    }

    pub fn num_socs(&self) -> usize {
        self.soc_emb.nrows()
    }

    pub fn num_carotenes(&self) -> usize {
        self.car_emb.nrows()
    }

    pub fn dim(&self) -> usize {
        self.soc_emb.ncols()
    }

    pub fn blocks(&self) -> [&Array2<f64>; 4] {
        [&self.soc_emb, &self.car_emb, &self.soc_head, &self.car_head]
    }

    pub fn blocks_mut(&mut self) -> [&mut Array2<f64>; 4] {
        [
            &mut self.soc_emb,
            &mut self.car_emb,
            &mut self.soc_head,
            &mut self.car_head,
        ]
    }

    /// Name of the first block holding a non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.blocks()
            .iter()
            .zip(BLOCK_NAMES)
            .find(|(b, _)| b.iter().any(|x| !x.is_finite()))
            .map(|(_, name)| name)
    }

    fn check_shapes(&self) -> Result<()> {
        let (m, n, q) = (self.num_socs(), self.num_carotenes(), self.dim());
        let ok = self.car_emb.ncols() == q
            && self.soc_head.dim() == (q, m)
            && self.car_head.dim() == (q, n);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "inconsistent parameter shapes: soc_emb {:?}, car_emb {:?}, soc_head {:?}, car_head {:?}",
                self.soc_emb.dim(),
                self.car_emb.dim(),
                self.soc_head.dim(),
                self.car_head.dim()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Random,
    /// Embedding rows start at the encoded signature texts.
    FromSignatureText,
}

/// Uniform `[-0.05, 0.05]` entries drawn in block order; with
/// `FromSignatureText` the embedding rows are then overwritten by the encoded
/// signatures (heads stay random).
pub fn init_params(
    taxonomy: &Taxonomy,
    q: usize,
    mode: InitMode,
    seed: u64,
    encoder: Option<&dyn TextEncoder>,
) -> Result<ModelParams> {
    let (m, n) = (taxonomy.num_socs(), taxonomy.num_carotenes());
    let mut params = ModelParams::zeros(m, n, q);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for block in params.blocks_mut() {
        block.mapv_inplace(|_| rng.random_range(-INIT_SCALE..=INIT_SCALE));
    }
    if mode == InitMode::FromSignatureText {
        let encoder = encoder
            .ok_or_else(|| Error::Config("signature-text init needs an encoder".into()))?;
        if encoder.dim() != q {
            return Err(Error::Dimension {
                expected: q,
                got: encoder.dim(),
            });
        }
        for (s, node) in taxonomy.socs().iter().enumerate() {
            let v = encoder.encode(&node.signature);
            params.soc_emb.row_mut(s).assign(&ArrayView1::from(&v[..]));
        }
        for (c, node) in taxonomy.carotenes().iter().enumerate() {
            let v = encoder.encode(&node.signature);
            params.car_emb.row_mut(c).assign(&ArrayView1::from(&v[..]));
        }
    }
    Ok(params)
}

/// λ1..λ6 and the margin α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// soc CE, carotene CE, soc-car, car-car, job-soc, job-car
    pub lambdas: [f64; 6],
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambdas: [0.3, 0.7, 0.3, 0.3, 0.3, 0.3],
            margin: 0.4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (i, l) in self.lambdas.iter().enumerate() {
            if !(0.0..=1.0).contains(l) {
                return Err(Error::Config(format!("lambda{} = {l} is outside [0, 1]", i + 1)));
            }
        }
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return Err(Error::Config(format!("margin must be >= 0, got {}", self.margin)));
        }
        Ok(())
    }

    /// Weight of a margin relation (λ3..λ6).
    pub fn relation(&self, r: Relation) -> f64 {
        self.lambdas[2 + r.slot()]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_soc: f64,
    pub l_carotene: f64,
    pub l_soc_car: f64,
    pub l_car_car: f64,
    pub l_job_soc: f64,
    pub l_job_car: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn components(&self) -> [f64; 6] {
        [
            self.l_soc,
            self.l_carotene,
            self.l_soc_car,
            self.l_car_car,
            self.l_job_soc,
            self.l_job_car,
        ]
    }

    fn from_components(c: [f64; 6], weights: &LossWeights) -> Self {
        Self {
            l_soc: c[0],
            l_carotene: c[1],
            l_soc_car: c[2],
            l_car_car: c[3],
            l_job_soc: c[4],
            l_job_car: c[5],
            total: c.iter().zip(weights.lambdas).map(|(x, l)| x * l).sum(),
        }
    }

    pub fn relation(&self, r: Relation) -> f64 {
        self.components()[2 + r.slot()]
    }

    /// Elementwise mean of several breakdowns.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        if items.is_empty() {
            return LossBreakdown::default();
        }
        let k = items.len() as f64;
        let mut c = [0.0; 6];
        let mut total = 0.0;
        for b in items {
            for (acc, x) in c.iter_mut().zip(b.components()) {
                *acc += x;
            }
            total += b.total;
        }
        LossBreakdown {
            l_soc: c[0] / k,
            l_carotene: c[1] / k,
            l_soc_car: c[2] / k,
            l_car_car: c[3] / k,
            l_job_soc: c[4] / k,
            l_job_car: c[5] / k,
            total: total / k,
        }
    }
}

/// Encoded jobs with resolved label indices. Row `i` is job `ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JobMatrix {
    pub ids: Vec<String>,
    /// N×q
    pub vectors: Array2<f64>,
    pub soc: Vec<usize>,
    pub carotene: Vec<usize>,
}

impl JobMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.vectors.row(i).to_slice().expect("standard layout")
    }
}

/// Job rows for the CE terms plus sampled triplets for the margin terms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub jobs: Vec<usize>,
    pub triplets: PerRelation<Vec<IndexedTriplet>>,
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn logits(x: &[f64], head: &Array2<f64>) -> Vec<f64> {
    ArrayView1::from(x).dot(head).to_vec()
}

/// SOC and Carotene class probabilities for one job vector.
pub fn classify(params: &ModelParams, job_vec: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if job_vec.len() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            got: job_vec.len(),
        });
    }
    Ok((
        softmax(&logits(job_vec, &params.soc_head)),
        softmax(&logits(job_vec, &params.car_head)),
    ))
}

/// `-ln(p[true] + 1e-12)`.
pub fn ce_loss(probs: &[f64], true_index: usize) -> Result<f64> {
    let p = probs.get(true_index).ok_or_else(|| Error::Dimension {
        expected: true_index + 1,
        got: probs.len(),
    })?;
    Ok(-(p + CE_EPS).ln())
}

fn check_dims(a: &[f64], others: &[&[f64]]) -> Result<()> {
    for o in others {
        if o.len() != a.len() {
            return Err(Error::Dimension {
                expected: a.len(),
                got: o.len(),
            });
        }
    }
    Ok(())
}

/// `max(0, α − cos(a, p) + cos(a, n))`.
pub fn margin_triplet_loss(anchor: &[f64], pos: &[f64], neg: &[f64], margin: f64) -> Result<f64> {
    check_dims(anchor, &[pos, neg])?;
    let inside = margin - CosTerm::new(anchor, pos).cos + CosTerm::new(anchor, neg).cos;
    Ok(inside.max(0.0))
}

/// Softmax-over-dot-products contrastive loss (no margin):
/// `-ln(exp<a,p> / (exp<a,p> + Σ exp<a,nᵢ>))`.
pub fn contrastive_loss_nomargin(anchor: &[f64], pos: &[f64], negatives: &[Vec<f64>]) -> Result<f64> {
    if negatives.is_empty() {
        return Err(Error::Config("contrastive loss needs at least one negative".into()));
    }
    check_dims(anchor, &[pos])?;
    for n in negatives {
        check_dims(anchor, &[n])?;
    }
    let sp = dot(anchor, pos);
    let scores: Vec<f64> = std::iter::once(sp)
        .chain(negatives.iter().map(|n| dot(anchor, n)))
        .collect();
    let (arg, max) = scores
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
    // logsumexp(scores) - sp, with ln_1p to keep precision when the positive dominates
    let rest: f64 = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, s)| (s - max).exp())
        .sum();
    Ok(((max - sp) + rest.ln_1p()).max(0.0))
}

/// Cosine with the pieces needed for its gradient.
struct CosTerm {
    cos: f64,
    dot: f64,
    na: f64,
    nb: f64,
}

impl CosTerm {
    fn new(a: &[f64], b: &[f64]) -> Self {
        let (na, nb) = (l2_norm(a), l2_norm(b));
        let d = dot(a, b);
        let cos = if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            d / (na * nb + COSINE_EPS)
        };
        Self { cos, dot: d, na, nb }
    }

    /// Adds `scale * ∂cos/∂a` to `out`; `∂cos/∂b` is obtained by swapping roles.
    fn add_grad_a(&self, a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) {
        if self.na == 0.0 || self.nb == 0.0 {
            return;
        }
        let denom = self.na * self.nb + COSINE_EPS;
        let k = self.dot * self.nb / (self.na * denom * denom);
        for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
            *o += scale * (bi / denom - k * ai);
        }
    }

    fn add_grad_b(&self, a: &[f64], b: &[f64], scale: f64, out: &mut [f64]) {
        let swapped = CosTerm {
            na: self.nb,
            nb: self.na,
            ..*self
        };
        swapped.add_grad_a(b, a, scale, out);
    }
}

#[derive(Clone, Copy)]
enum Row {
    Job(usize),
    Soc(usize),
    Car(usize),
}

fn triplet_rows(r: Relation, t: &IndexedTriplet) -> [Row; 3] {
    match r {
        Relation::SocCar => [Row::Soc(t.anchor), Row::Car(t.positive), Row::Car(t.negative)],
        Relation::CarCar => [Row::Car(t.anchor), Row::Car(t.positive), Row::Car(t.negative)],
        Relation::JobSoc => [Row::Job(t.anchor), Row::Soc(t.positive), Row::Soc(t.negative)],
        Relation::JobCar => [Row::Job(t.anchor), Row::Car(t.positive), Row::Car(t.negative)],
    }
}

fn row_of<'a>(params: &'a ModelParams, jobs: &'a JobMatrix, row: Row) -> &'a [f64] {
    match row {
        Row::Job(i) => jobs.row(i),
        Row::Soc(i) => params.soc_emb.row(i).to_slice().expect("standard layout"),
        Row::Car(i) => params.car_emb.row(i).to_slice().expect("standard layout"),
    }
}

fn grad_row(grads: &mut ModelParams, row: Row) -> Option<&mut [f64]> {
    match row {
        Row::Job(_) => None,
        Row::Soc(i) => grads.soc_emb.row_mut(i).into_slice(),
        Row::Car(i) => grads.car_emb.row_mut(i).into_slice(),
    }
}

fn check_batch(params: &ModelParams, jobs: &JobMatrix, batch: &Batch) -> Result<()> {
    params.check_shapes()?;
    if jobs.dim() != params.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            got: jobs.dim(),
        });
    }
    let (m, n, nj) = (params.num_socs(), params.num_carotenes(), jobs.len());
    let oob = |what: &str, i: usize, len: usize| {
        Error::Config(format!("{what} index {i} out of range (len {len})"))
    };
    for &j in &batch.jobs {
        if j >= nj {
            return Err(oob("job", j, nj));
        }
        if jobs.soc[j] >= m || jobs.carotene[j] >= n {
            return Err(Error::Config(format!("job row {j} has out-of-range labels")));
        }
    }
    for (r, ts) in batch.triplets.iter() {
        for t in ts {
            for row in triplet_rows(r, t) {
                let (i, len, what) = match row {
                    Row::Job(i) => (i, nj, "job"),
                    Row::Soc(i) => (i, m, "soc"),
                    Row::Car(i) => (i, n, "carotene"),
                };
                if i >= len {
                    return Err(oob(what, i, len));
                }
            }
        }
    }
    Ok(())
}

/// Shared forward pass; accumulates gradients when `grads` is given.
fn forward(
    params: &ModelParams,
    jobs: &JobMatrix,
    batch: &Batch,
    weights: &LossWeights,
    mut grads: Option<&mut ModelParams>,
) -> LossBreakdown {
    let mut comp = [0.0; 6];
    let nb = batch.jobs.len();
    if nb == 0 && (weights.lambdas[0] > 0.0 || weights.lambdas[1] > 0.0) {
        log::warn!("empty job batch; CE components reported as 0");
    }

    // CE terms
    for (slot, head, labels) in [
        (0usize, &params.soc_head, &jobs.soc),
        (1usize, &params.car_head, &jobs.carotene),
    ] {
        if nb == 0 {
            continue;
        }
        let scale = weights.lambdas[slot] / nb as f64;
        let mut sum = 0.0;
        for &j in &batch.jobs {
            let x = jobs.row(j);
            let probs = softmax(&logits(x, head));
            let t = labels[j];
            sum += -(probs[t] + CE_EPS).ln();
            if let Some(g) = grads.as_deref_mut() {
                if scale == 0.0 {
                    continue;
                }
                let ghead = if slot == 0 { &mut g.soc_head } else { &mut g.car_head };
                // d/dz_k of -ln(p_t + eps) = -(p_t / (p_t + eps)) (δ_tk - p_k)
                let f = probs[t] / (probs[t] + CE_EPS);
                for (k, &pk) in probs.iter().enumerate() {
                    let dz = f * (pk - if k == t { 1.0 } else { 0.0 }) * scale;
                    if dz == 0.0 {
                        continue;
                    }
                    for (d, &xd) in x.iter().enumerate() {
                        ghead[[d, k]] += xd * dz;
                    }
                }
            }
        }
        comp[slot] = sum / nb as f64;
    }

    // margin terms
    let q = params.dim();
    let mut ga = vec![0.0; q];
    let mut gp = vec![0.0; q];
    let mut gn = vec![0.0; q];
    for (r, ts) in batch.triplets.iter() {
        let slot = 2 + r.slot();
        if ts.is_empty() {
            if weights.lambdas[slot] > 0.0 {
                log::warn!("no {r} triplets in batch; component reported as 0");
            }
            continue;
        }
        let scale = weights.lambdas[slot] / ts.len() as f64;
        let mut sum = 0.0;
        for t in ts {
            let rows = triplet_rows(r, t);
            let [a, p, n] = rows.map(|row| row_of(params, jobs, row));
            let cp = CosTerm::new(a, p);
            let cn = CosTerm::new(a, n);
            let inside = weights.margin - cp.cos + cn.cos;
            // subgradient 0 at the kink
            if inside <= 0.0 {
                continue;
            }
            sum += inside;
            let Some(g) = grads.as_deref_mut() else { continue };
            if scale == 0.0 {
                continue;
            }
            ga.fill(0.0);
            gp.fill(0.0);
            gn.fill(0.0);
            cp.add_grad_a(a, p, -scale, &mut ga);
            cn.add_grad_a(a, n, scale, &mut ga);
            cp.add_grad_b(a, p, -scale, &mut gp);
            cn.add_grad_b(a, n, scale, &mut gn);
            for (row, delta) in rows.into_iter().zip([&ga, &gp, &gn]) {
                if let Some(dst) = grad_row(g, row) {
                    dst.iter_mut().zip(delta.iter()).for_each(|(d, x)| *d += x);
                }
            }
        }
        comp[slot] = sum / ts.len() as f64;
    }

    LossBreakdown::from_components(comp, weights)
}

/// Per-component batch means and their λ-weighted total.
pub fn total_loss(
    params: &ModelParams,
    jobs: &JobMatrix,
    batch: &Batch,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    check_batch(params, jobs, batch)?;
    Ok(forward(params, jobs, batch, weights, None))
}

/// Loss breakdown plus the gradient of `total` w.r.t. every parameter block.
/// Entries untouched by the batch are exactly zero.
pub fn grad_total_loss(
    params: &ModelParams,
    jobs: &JobMatrix,
    batch: &Batch,
    weights: &LossWeights,
) -> Result<(LossBreakdown, ModelParams)> {
    check_batch(params, jobs, batch)?;
    let mut grads = params.zeros_like();
    let loss = forward(params, jobs, batch, weights, Some(&mut grads));
    Ok((loss, grads))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"TXEMB\x00\x00\x01";

/// Writes the header (magic, m, n, q, taxonomy id-order digest) followed by
/// the four blocks as row-major little-endian f64.
pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams, taxonomy: &Taxonomy) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(64 + 8 * params.blocks().iter().map(|b| b.len()).sum::<usize>());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for d in [params.num_socs(), params.num_carotenes(), params.dim()] {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    buf.extend_from_slice(&taxonomy.id_order_digest());
    for block in params.blocks() {
        for x in block.iter() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint, rejecting it if it was written for another taxonomy.
pub fn load_checkpoint(path: impl AsRef<Path>, taxonomy: &Taxonomy) -> Result<ModelParams> {
    let path = path.as_ref();
    let at = path.display().to_string();
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse {
        at: at.clone(),
        msg: msg.to_string(),
    };
    if buf.len() < 64 || &buf[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let u = |i: usize| u64::from_le_bytes(buf[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
    let (m, n, q) = (u(0), u(1), u(2));
    if m != taxonomy.num_socs() || n != taxonomy.num_carotenes() {
        return Err(bad(&format!(
            "checkpoint shape m={m}, n={n} does not match taxonomy m={}, n={}",
            taxonomy.num_socs(),
            taxonomy.num_carotenes()
        )));
    }
    if buf[32..64] != taxonomy.id_order_digest() {
        return Err(bad("checkpoint was written for a different taxonomy id order"));
    }
    let mut params = ModelParams::zeros(m, n, q);
    let expected = 64 + 8 * params.blocks().iter().map(|b| b.len()).sum::<usize>();
    if buf.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", buf.len())));
    }
    let mut floats = buf[64..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for block in params.blocks_mut() {
        for x in block.iter_mut() {
            *x = floats.next().expect("length checked");
        }
    }
    if let Some(name) = params.first_non_finite() {
        return Err(Error::NonFinite(format!("checkpoint block {name}")));
    }
    Ok(params)
}
