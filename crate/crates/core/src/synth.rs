//! Seeded synthetic corpora with controllable separability.
//!
//! Every Carotene owns a disjoint block of `topic_vocab` pseudo-words. Its
//! signature and its jobs' titles/descriptions draw each token from that block
//! with probability `1 - noise_rate` and otherwise uniformly from all other
//! tokens (other topics plus a shared filler vocabulary). Similarity edges go
//! to the Carotenes sharing the most distinct tokens, capped at
//! `sim_out_degree`.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{Dataset, JobRecord, SimilarityGraph, Taxonomy, TaxonomyNode, MAX_OUT_DEGREE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of SOCs.
    pub m: usize,
    /// Number of Carotenes.
    pub n: usize,
    pub jobs_per_carotene: usize,
    pub min_branching: usize,
    pub max_branching: usize,
    pub sim_out_degree: usize,
    /// Pseudo-words owned by each Carotene.
    pub topic_vocab: usize,
    /// Extra off-topic words shared by everyone.
    pub filler_vocab: usize,
    pub title_len: usize,
    pub description_len: usize,
    pub signature_len: usize,
    pub noise_rate: f64,
    /// train / validation / test fractions
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            m: 5,
            n: 20,
            jobs_per_carotene: 10,
            min_branching: 2,
            max_branching: 6,
            sim_out_degree: 3,
            topic_vocab: 8,
            filler_vocab: 50,
            title_len: 3,
            description_len: 12,
            signature_len: 6,
            noise_rate: 0.1,
            split: [0.6, 0.2, 0.2],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m == 0 || self.n == 0 {
            return bad("m and n must be >= 1".into());
        }
        if self.min_branching > self.max_branching
            || self.m * self.min_branching > self.n
            || self.m * self.max_branching < self.n
        {
            return bad(format!(
                "infeasible branching [{}, {}] for m={} SOCs and n={} Carotenes",
                self.min_branching, self.max_branching, self.m, self.n
            ));
        }
        if self.sim_out_degree > MAX_OUT_DEGREE {
            return bad(format!("sim_out_degree must be <= {MAX_OUT_DEGREE}"));
        }
        if self.topic_vocab == 0 {
            return bad("topic_vocab must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return bad(format!("noise_rate must be in [0, 1], got {}", self.noise_rate));
        }
        if self.split.iter().any(|r| !(0.0..=1.0).contains(r))
            || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!("split ratios must be in [0, 1] and sum to 1, got {:?}", self.split));
        }
        Ok(())
    }
}

const SYLLABLES: [&str; 16] = [
    "ba", "ce", "di", "fo", "gu", "ka", "le", "mi", "no", "pu", "ra", "se", "ti", "vo", "zu", "ha",
];
const CITIES: [&str; 8] = [
    "Austin", "Boston", "Chicago", "Denver", "Houston", "Miami", "Phoenix", "Seattle",
];

/// Distinct pseudo-word for every index (at least three syllables).
fn word(mut i: usize) -> String {
    let mut parts = Vec::new();
    while parts.len() < 3 || i > 0 {
        parts.push(SYLLABLES[i % 16]);
        i /= 16;
    }
    parts.concat()
}

fn padded(prefix: char, i: usize, count: usize) -> String {
    let width = count.to_string().len();
    format!("{prefix}{:0width$}", i + 1)
}

struct Vocab {
    topic_vocab: usize,
    size: usize,
}

impl Vocab {
    /// A token for Carotene `c`: on-topic with probability `1 - noise`.
    fn draw(&self, c: usize, noise: f64, rng: &mut ChaCha8Rng) -> usize {
        let own = c * self.topic_vocab;
        if rng.random::<f64>() >= noise {
            own + rng.random_range(0..self.topic_vocab)
        } else {
            // uniform over everything outside [own, own + topic_vocab)
            let k = rng.random_range(0..self.size - self.topic_vocab);
            if k < own {
                k
            } else {
                k + self.topic_vocab
            }
        }
    }

    fn text(&self, c: usize, len: usize, noise: f64, rng: &mut ChaCha8Rng, seen: &mut BTreeSet<usize>) -> String {
        (0..len)
            .map(|_| {
                let t = self.draw(c, noise, rng);
                seen.insert(t);
                word(t)
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Builds a taxonomy, similarity graph and job corpus from `config`.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (m, n) = (config.m, config.n);

    // branching: everyone gets the minimum, the remainder goes to random SOCs with room
    let mut counts = vec![config.min_branching; m];
    for _ in 0..n - m * config.min_branching {
        let open: Vec<usize> = (0..m).filter(|&s| counts[s] < config.max_branching).collect();
        counts[*open.choose(&mut rng).expect("feasibility checked")] += 1;
    }
    let parent: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(s, &k)| std::iter::repeat_n(s, k))
        .collect();

    let soc_ids: Vec<String> = (0..m).map(|s| padded('S', s, m)).collect();
    let car_ids: Vec<String> = (0..n).map(|c| padded('C', c, n)).collect();
    let vocab = Vocab {
        topic_vocab: config.topic_vocab,
        size: n * config.topic_vocab + config.filler_vocab,
    };
    let noise = config.noise_rate;
    let mut tokens_of: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];

    let car_signatures: Vec<String> = (0..n)
        .map(|c| vocab.text(c, config.signature_len, noise, &mut rng, &mut tokens_of[c]))
        .collect();
    let soc_signatures: Vec<String> = (0..m)
        .map(|s| {
            let mut scratch = BTreeSet::new();
            (0..n)
                .filter(|&c| parent[c] == s)
                .map(|c| vocab.text(c, 2, noise, &mut rng, &mut scratch))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();

    let total_jobs = n * config.jobs_per_carotene;
    let mut jobs = Vec::with_capacity(total_jobs);
    for c in 0..n {
        for _ in 0..config.jobs_per_carotene {
            let title = vocab.text(c, config.title_len, noise, &mut rng, &mut tokens_of[c]);
            let description = vocab.text(c, config.description_len, noise, &mut rng, &mut tokens_of[c]);
            let location = CITIES[rng.random_range(0..CITIES.len())].to_string();
            let salary = (30_000 + 1_000 * rng.random_range(0..120u32)).to_string();
            jobs.push(JobRecord {
                id: padded('J', jobs.len(), total_jobs),
                title,
                description,
                location: Some(location),
                salary: Some(salary),
                soc_label: soc_ids[parent[c]].clone(),
                carotene_label: car_ids[c].clone(),
            });
        }
    }

    // similarity edges: most shared distinct tokens, ties by a seeded random priority
    let priority: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    let mut edges = Vec::new();
    if config.sim_out_degree > 0 {
        for c in 0..n {
            let mut cands: Vec<(usize, usize)> = (0..n)
                .filter(|&d| d != c)
                .map(|d| (tokens_of[c].intersection(&tokens_of[d]).count(), d))
                .filter(|&(overlap, _)| overlap > 0)
                .collect();
            cands.sort_by(|a, b| b.0.cmp(&a.0).then(priority[a.1].cmp(&priority[b.1])));
            edges.extend(cands.into_iter().take(config.sim_out_degree).map(|(_, d)| (c, d)));
        }
    }

    let taxonomy = Taxonomy::new(
        soc_ids
            .iter()
            .zip(soc_signatures)
            .map(|(id, signature)| TaxonomyNode { id: id.clone(), signature })
            .collect(),
        car_ids
            .iter()
            .zip(car_signatures)
            .zip(&parent)
            .map(|((id, signature), &p)| (TaxonomyNode { id: id.clone(), signature }, soc_ids[p].clone()))
            .collect(),
    )?;
    // ids are zero-padded, so generation order is sorted-id order
    let graph = SimilarityGraph::from_edges(n, edges)?;
    Dataset::new(jobs, taxonomy, graph)
}

/// Train / validation / test job indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random split stratified by Carotene: within each Carotene the jobs are
/// shuffled and cut at `round(k * ratio)`. Indices are returned ascending.
pub fn stratified_split(dataset: &Dataset, ratios: [f64; 3], seed: u64) -> Splits {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); dataset.taxonomy.num_carotenes()];
    for i in 0..dataset.jobs.len() {
        groups[dataset.labels(i).1].push(i);
    }
    let mut splits = Splits::default();
    for mut g in groups {
        g.shuffle(&mut rng);
        let k = g.len() as f64;
        let n_train = (k * ratios[0]).round() as usize;
        let n_val = ((k * ratios[1]).round() as usize).min(g.len() - n_train.min(g.len()));
        let n_train = n_train.min(g.len());
        splits.train.extend(&g[..n_train]);
        splits.val.extend(&g[n_train..n_train + n_val]);
        splits.test.extend(&g[n_train + n_val..]);
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    splits
}
