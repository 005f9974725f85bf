mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use taxembed::eval::pca_2d;
use taxembed::model::grad_total_loss;
use taxembed::pipeline::{encode_jobs, mine_all, Experiment};
use taxembed::synth::stratified_split;
use taxembed::taxonomy::TaxonomyNode;
use taxembed::triplet::mine_soft;
use taxembed::{
    generate, Dataset, EncoderConfig, HashedTfEncoder, JobRecord, MineMode, MinerConfig, Relation, SimilarityGraph,
    SynthConfig, Taxonomy, TextEncoder,
};

#[test]
fn gradients_match_central_differences() {
    let mut checked = 0;
    for seed in 100..200 {
        let inst = random_instance(seed);
        if min_hinge_distance(&inst) < 1e-3 {
            continue;
        }
        let (_, grads) = grad_total_loss(&inst.params, &inst.jobs, &inst.batch, &inst.weights).unwrap();
        let err = finite_difference_error(&inst, &grads, 1e-5, 1e-6);
        assert!(err < 1e-4, "seed {seed}: rel err {err:e}");
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn jacobi_oracle_reconstructs_its_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = Array2::from_shape_fn((5, 5), |_| rng.random_range(-1.0..1.0));
    let a = b.t().dot(&b);
    let (vals, vecs) = jacobi_eigen(&a);
    let recon = vecs.dot(&Array2::from_diag(&ndarray::Array1::from(vals))).dot(&vecs.t());
    for (x, y) in recon.iter().zip(a.iter()) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn pca_matches_oracle_on_wide_and_degenerate_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (n, q) in [(10, 5), (4, 8), (25, 3)] {
        let x = Array2::from_shape_fn((n, q), |_| rng.random_range(-1.0..1.0));
        let got = pca_2d(&x).unwrap();
        let want = oracle_pca(&x);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-8, "{n}x{q}: {g} vs {w}");
        }
    }
}

/// Leave-one-out nearest-centroid accuracy of encoded job texts against
/// their Carotene labels.
fn nearest_centroid_accuracy(ds: &Dataset, encoder: &dyn TextEncoder) -> f64 {
    let n = ds.taxonomy.num_carotenes();
    let vecs: Vec<Vec<f64>> = ds.jobs.iter().map(|j| encoder.encode(&taxembed::concat_features(j))).collect();
    let labels: Vec<usize> = (0..ds.jobs.len()).map(|i| ds.labels(i).1).collect();
    let q = encoder.dim();
    let mut correct = 0;
    for i in 0..vecs.len() {
        let mut sums = vec![vec![0.0; q]; n];
        for (j, v) in vecs.iter().enumerate() {
            if j != i {
                for k in 0..q {
                    sums[labels[j]][k] += v[k];
                }
            }
        }
        let best = (0..n)
            .max_by(|&a, &b| oracle_cosine(&vecs[i], &sums[a]).partial_cmp(&oracle_cosine(&vecs[i], &sums[b])).unwrap())
            .unwrap();
        if best == labels[i] {
            correct += 1;
        }
    }
    correct as f64 / vecs.len() as f64
}

#[test]
fn noiseless_corpus_is_separable_by_nearest_centroid() {
    let cfg = SynthConfig {
        m: 2,
        n: 4,
        min_branching: 2,
        max_branching: 2,
        jobs_per_carotene: 5,
        noise_rate: 0.0,
        sim_out_degree: 1,
        ..Default::default()
    };
    let ds = generate(&cfg).unwrap();
    assert_eq!(ds.jobs.len(), 20);
    let enc = HashedTfEncoder::new(EncoderConfig { q: 32, ..Default::default() }).unwrap();
    assert_eq!(nearest_centroid_accuracy(&ds, &enc), 1.0);
}

#[test]
fn separability_falls_with_noise() {
    let enc = HashedTfEncoder::new(EncoderConfig { q: 32, ..Default::default() }).unwrap();
    let mean_acc = |noise: f64| -> f64 {
        (0..5)
            .map(|seed| {
                let ds = generate(&SynthConfig { noise_rate: noise, seed, ..Default::default() }).unwrap();
                nearest_centroid_accuracy(&ds, &enc)
            })
            .sum::<f64>()
            / 5.0
    };
    let (clean, noisy, chaos) = (mean_acc(0.0), mean_acc(0.5), mean_acc(0.95));
    assert!(clean >= noisy && noisy >= chaos, "{clean} {noisy} {chaos}");
    assert!(clean > chaos + 0.3);
}

fn node(id: &str, sig: &str) -> TaxonomyNode {
    TaxonomyNode { id: id.into(), signature: sig.into() }
}

/// 2 SOCs x 3 Carotenes, 10 jobs, 4 similarity edges.
fn small_corpus() -> Dataset {
    let cars = [
        ("C1", "S1", "nurse ward care"),
        ("C2", "S1", "nurse theatre surgery"),
        ("C3", "S1", "midwife birth care"),
        ("C4", "S2", "rust compiler code"),
        ("C5", "S2", "python data code"),
        ("C6", "S2", "network router cable"),
    ]
    .iter()
    .map(|&(id, parent, sig)| (node(id, sig), parent.to_string()))
    .collect();
    let taxonomy = Taxonomy::new(vec![node("S1", "health care"), node("S2", "software code")], cars).unwrap();
    let graph = SimilarityGraph::from_edges(6, [(0, 1), (0, 2), (3, 4), (4, 3)]).unwrap();
    let jobs = (0..10)
        .map(|i| {
            let c = i % 6;
            JobRecord {
                id: format!("J{i}"),
                title: format!("title {}", taxonomy.carotenes()[c].signature),
                description: "ordinary work".into(),
                location: (i % 2 == 0).then(|| "Leeds".into()),
                salary: None,
                soc_label: if c < 3 { "S1" } else { "S2" }.into(),
                carotene_label: taxonomy.carotenes()[c].id.clone(),
            }
        })
        .collect();
    Dataset::new(jobs, taxonomy, graph).unwrap()
}

#[test]
fn small_corpus_round_trips_through_files() {
    let ds = small_corpus();
    let dir = tempfile::tempdir().unwrap();
    let p = |f: &str| dir.path().join(f);
    ds.save(p("jobs.jsonl"), p("taxonomy.json"), p("graph.csv")).unwrap();
    let back = Dataset::load(p("jobs.jsonl"), p("taxonomy.json"), p("graph.csv")).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn soft_mining_counts_on_small_corpus() {
    let ds = small_corpus();
    let cfg = MinerConfig { n_neg: 10, mode: MineMode::Soft, seed: 1 };
    let count = |r| mine_soft(r, &ds.jobs, &ds.taxonomy, &ds.graph, &cfg).unwrap().triplets.len();
    // Each SOC: 3 children x 3 complement Carotenes.
    assert_eq!(count(Relation::SocCar), 18);
    // 4 edges; complement excludes the anchor and its neighbours.
    assert_eq!(count(Relation::CarCar), 2 * 3 + 4 + 4);
    assert_eq!(count(Relation::JobSoc), 10);
    assert_eq!(count(Relation::JobCar), 10 * 5);
}

#[test]
fn same_seed_gives_identical_pipeline_state() {
    let cfg = desk_config();
    let run = || {
        let ds = generate(&cfg.resolved().synth).unwrap();
        let exp = Experiment::prepare(&cfg, ds).unwrap();
        let out = exp.train().unwrap();
        (exp.mined.0.map(|m| m.triplets), out.state.params)
    };
    let (t1, p1) = run();
    let (t2, p2) = run();
    assert_eq!(t1, t2);
    assert_eq!(p1, p2);
}

#[test]
fn different_seeds_give_different_corpora() {
    let a = generate(&SynthConfig { seed: 1, ..Default::default() }).unwrap();
    let b = generate(&SynthConfig { seed: 2, ..Default::default() }).unwrap();
    assert_ne!(a.jobs, b.jobs);
}

#[test]
fn split_is_stratified_and_disjoint() {
    let ds = generate(&SynthConfig::default()).unwrap();
    let s = stratified_split(&ds, [0.6, 0.2, 0.2], 5);
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort();
    assert_eq!(all, (0..ds.jobs.len()).collect::<Vec<_>>());
    for c in 0..ds.taxonomy.num_carotenes() {
        let in_val = s.val.iter().filter(|&&i| ds.labels(i).1 == c).count();
        assert_eq!(in_val, 2);
    }
}

#[test]
fn hard_mining_needs_an_encoder_and_is_deterministic() {
    let ds = small_corpus();
    let cfg = MinerConfig { n_neg: 2, mode: MineMode::Hard, seed: 0 };
    assert!(mine_all(&ds, &cfg, None).is_err());
    let enc = HashedTfEncoder::new(EncoderConfig { q: 16, ..Default::default() }).unwrap();
    let a = mine_all(&ds, &cfg, Some(&enc)).unwrap();
    let b = mine_all(&ds, &cfg, Some(&enc)).unwrap();
    assert_eq!(a.0.map(|m| m.triplets), b.0.map(|m| m.triplets));
    assert_eq!(encode_jobs(&ds, &enc).vectors, encode_jobs(&ds, &enc).vectors);
}

proptest! {
    #[test]
    fn cosine_ignores_positive_scale(v in prop::collection::vec(-5.0f64..5.0, 6), w in prop::collection::vec(-5.0f64..5.0, 6), s in 0.1f64..10.0) {
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        let a = taxembed::cosine(&v, &w).unwrap();
        let b = taxembed::cosine(&scaled, &w).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = taxembed::model::softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }
}
