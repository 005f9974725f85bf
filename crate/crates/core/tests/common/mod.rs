//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taxembed::model::{total_loss, Batch, JobMatrix, LossWeights, ModelParams};
use taxembed::pipeline::RunConfig;
use taxembed::triplet::{IndexedTriplet, PerRelation, Relation};

pub fn desk_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml")
}

pub fn desk_config() -> RunConfig {
    RunConfig::load(desk_config_path()).expect("configs/desk.toml parses")
}

/// Plain-loop cosine with the same guard as the library: `dot / (|a||b| + 1e-12)`,
/// 0 for a zero vector.
pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..a.len() {
        ab += a[i] * b[i];
    }
    for x in a {
        aa += x * x;
    }
    for x in b {
        bb += x * x;
    }
    let (na, nb) = (aa.sqrt(), bb.sqrt());
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    ab / (na * nb + 1e-12)
}

/// Random parameters, two jobs and one triplet per relation with
/// (m, n, q) = (3, 6, 5).
pub struct GradInstance {
    pub params: ModelParams,
    pub jobs: JobMatrix,
    pub batch: Batch,
    pub weights: LossWeights,
}

pub fn random_instance(seed: u64) -> GradInstance {
    let (m, n, q, nj) = (3, 6, 5, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mat = |r: usize, c: usize, rng: &mut ChaCha8Rng| {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    };
    let params = ModelParams {
        soc_emb: mat(m, q, &mut rng),
        car_emb: mat(n, q, &mut rng),
        soc_head: mat(q, m, &mut rng),
        car_head: mat(q, n, &mut rng),
    };
    let vectors = mat(nj, q, &mut rng);
    let jobs = JobMatrix {
        ids: (0..nj).map(|i| format!("j{i}")).collect(),
        vectors,
        soc: (0..nj).map(|_| rng.random_range(0..m)).collect(),
        carotene: (0..nj).map(|_| rng.random_range(0..n)).collect(),
    };
    let distinct = |rng: &mut ChaCha8Rng, size: usize| -> (usize, usize) {
        let a = rng.random_range(0..size);
        let mut b = rng.random_range(0..size - 1);
        if b >= a {
            b += 1;
        }
        (a, b)
    };
    let triplets = PerRelation::from_fn(|r| {
        let t = match r {
            Relation::SocCar => {
                let (p, neg) = distinct(&mut rng, n);
                IndexedTriplet { anchor: rng.random_range(0..m), positive: p, negative: neg }
            }
            Relation::CarCar => {
                let a = rng.random_range(0..n);
                let (p, neg) = distinct(&mut rng, n);
                IndexedTriplet { anchor: a, positive: p, negative: neg }
            }
            Relation::JobSoc => {
                let (p, neg) = distinct(&mut rng, m);
                IndexedTriplet { anchor: rng.random_range(0..nj), positive: p, negative: neg }
            }
            Relation::JobCar => {
                let (p, neg) = distinct(&mut rng, n);
                IndexedTriplet { anchor: rng.random_range(0..nj), positive: p, negative: neg }
            }
        };
        vec![t]
    });
    let lambdas = std::array::from_fn(|_| rng.random_range(0.1..1.0));
    let margin = rng.random_range(0.1..0.6);
    GradInstance {
        params,
        jobs,
        batch: Batch { jobs: (0..nj).collect(), triplets },
        weights: LossWeights { lambdas, margin },
    }
}

/// Smallest |hinge argument| over the instance's triplets; finite differences
/// are only valid away from the kink.
pub fn min_hinge_distance(inst: &GradInstance) -> f64 {
    let p = &inst.params;
    let row = |a: &Array2<f64>, i: usize| a.row(i).to_vec();
    let mut best = f64::INFINITY;
    for (r, ts) in inst.batch.triplets.iter() {
        for t in ts {
            let (a, pos, neg) = match r {
                Relation::SocCar => (row(&p.soc_emb, t.anchor), row(&p.car_emb, t.positive), row(&p.car_emb, t.negative)),
                Relation::CarCar => (row(&p.car_emb, t.anchor), row(&p.car_emb, t.positive), row(&p.car_emb, t.negative)),
                Relation::JobSoc => (row(&inst.jobs.vectors, t.anchor), row(&p.soc_emb, t.positive), row(&p.soc_emb, t.negative)),
                Relation::JobCar => (row(&inst.jobs.vectors, t.anchor), row(&p.car_emb, t.positive), row(&p.car_emb, t.negative)),
            };
            let arg = inst.weights.margin - oracle_cosine(&a, &pos) + oracle_cosine(&a, &neg);
            best = best.min(arg.abs());
        }
    }
    best
}

/// Largest per-entry relative error between `analytic` and central finite
/// differences of `total_loss`. The denominator is floored at `floor`.
pub fn finite_difference_error(inst: &GradInstance, analytic: &ModelParams, step: f64, floor: f64) -> f64 {
    let eval = |p: &ModelParams| total_loss(p, &inst.jobs, &inst.batch, &inst.weights).unwrap().total;
    let mut worst: f64 = 0.0;
    for block in 0..4 {
        let shape = inst.params.blocks()[block].dim();
        for i in 0..shape.0 {
            for j in 0..shape.1 {
                let mut plus = inst.params.clone();
                plus.blocks_mut()[block][[i, j]] += step;
                let mut minus = inst.params.clone();
                minus.blocks_mut()[block][[i, j]] -= step;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
                let an = analytic.blocks()[block][[i, j]];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(floor);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix. Returns
/// eigenvalues and the matching eigenvectors as columns.
pub fn jacobi_eigen(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[[i, i]]).collect(), v)
}

/// Top-two principal coordinates via an explicit covariance matrix and
/// [`jacobi_eigen`], with each axis signed so its largest-magnitude loading
/// is positive.
pub fn oracle_pca(x: &Array2<f64>) -> Array2<f64> {
    let (n, q) = x.dim();
    let mut mean = vec![0.0; q];
    for i in 0..n {
        for j in 0..q {
            mean[j] += x[[i, j]] / n as f64;
        }
    }
    let centered = Array2::from_shape_fn((n, q), |(i, j)| x[[i, j]] - mean[j]);
    let mut cov = Array2::<f64>::zeros((q, q));
    for a in 0..q {
        for b in 0..q {
            let mut s = 0.0;
            for i in 0..n {
                s += centered[[i, a]] * centered[[i, b]];
            }
            cov[[a, b]] = s / (n as f64 - 1.0);
        }
    }
    let (vals, vecs) = jacobi_eigen(&cov);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let mut out = Array2::zeros((n, 2));
    for (k, &col) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = (0..q).map(|r| vecs[[r, col]]).collect();
        let mut lead = 0;
        for r in 0..q {
            if v[r].abs() > v[lead].abs() {
                lead = r;
            }
        }
        if v[lead] < 0.0 {
            for x in &mut v {
                *x = -*x;
            }
        }
        for i in 0..n {
            out[[i, k]] = (0..q).map(|j| centered[[i, j]] * v[j]).sum();
        }
    }
    out
}
