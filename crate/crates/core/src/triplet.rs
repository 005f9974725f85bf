//! Triplet families, soft/hard negative mining, persistence and sampling.
//!
//! Every positive link (SOC→child, Carotene→out-neighbour, job→its SOC,
//! job→its Carotene) yields `min(n_neg, |complement|)` triplets. Soft mode
//! draws the negatives uniformly without replacement; hard mode takes the
//! complement items whose signature is most cosine-similar to the anchor's
//! text, ties going to the smaller id.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::{Index, IndexMut};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{concat_features, cosine_unchecked, splitmix64, TextEncoder};
use crate::error::{Error, Result};
use crate::taxonomy::{JobRecord, SimilarityGraph, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    SocCar,
    CarCar,
    JobSoc,
    JobCar,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::SocCar,
        Relation::CarCar,
        Relation::JobSoc,
        Relation::JobCar,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::SocCar => "soc-car",
            Relation::CarCar => "car-car",
            Relation::JobSoc => "job-soc",
            Relation::JobCar => "job-car",
        }
    }

    /// Position of this relation's weight among λ3..λ6 (0-based, within the margin terms).
    pub fn slot(self) -> usize {
        self as usize
    }

    /// Whether positives and negatives are SOCs (otherwise Carotenes).
    fn targets_socs(self) -> bool {
        self == Relation::JobSoc
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown relation '{s}'")))
    }
}

/// One value per relation, indexable by [`Relation`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerRelation<T>(pub [T; 4]);

impl<T> PerRelation<T> {
    pub fn from_fn(mut f: impl FnMut(Relation) -> T) -> Self {
        PerRelation(Relation::ALL.map(&mut f))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Relation, &T)> {
        Relation::ALL.into_iter().zip(self.0.iter())
    }
}

impl<T> Index<Relation> for PerRelation<T> {
    type Output = T;
    fn index(&self, r: Relation) -> &T {
        &self.0[r.slot()]
    }
}

impl<T> IndexMut<Relation> for PerRelation<T> {
    fn index_mut(&mut self, r: Relation) -> &mut T {
        &mut self.0[r.slot()]
    }
}

/// Resolved triplets per relation; `None` means no store was provided.
pub type TripletStores = PerRelation<Option<Vec<IndexedTriplet>>>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub relation: Relation,
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

/// Triplet with ids resolved to row indices: job rows for job anchors, SOC or
/// Carotene ordinals otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexedTriplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MineMode {
    #[default]
    Soft,
    Hard,
}

impl FromStr for MineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(MineMode::Soft),
            "hard" => Ok(MineMode::Hard),
            _ => Err(Error::Config(format!("unknown mining mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinerConfig {
    pub n_neg: usize,
    pub mode: MineMode,
    pub seed: u64,
}

impl Default for MinerConfig {
    fn default() -> Self {
        Self {
            n_neg: 10,
            mode: MineMode::Soft,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MineOutput {
    /// Sorted by (anchor, positive, negative).
    pub triplets: Vec<Triplet>,
    /// Links skipped because their complement set was empty.
    pub warnings: usize,
}

struct Anchor {
    id: String,
    /// Text used as the hard-mode query.
    query: String,
    positives: Vec<usize>,
    /// Candidate indices eligible as negatives, ascending.
    complement: Vec<usize>,
}

fn anchors(
    relation: Relation,
    jobs: &[JobRecord],
    taxonomy: &Taxonomy,
    graph: &SimilarityGraph,
) -> Result<Vec<Anchor>> {
    let universe = |excluded: &dyn Fn(usize) -> bool, size: usize| -> Vec<usize> {
        (0..size).filter(|&i| !excluded(i)).collect()
    };
    let n = taxonomy.num_carotenes();
    let m = taxonomy.num_socs();
    let out = match relation {
        Relation::SocCar => (0..m)
            .map(|s| Anchor {
                id: taxonomy.socs()[s].id.clone(),
                query: taxonomy.socs()[s].signature.clone(),
                positives: taxonomy.children_of(s).to_vec(),
                complement: universe(&|c| taxonomy.parent_of(c) == s, n),
            })
            .collect(),
        Relation::CarCar => (0..n)
            .map(|p| Anchor {
                id: taxonomy.carotenes()[p].id.clone(),
                query: taxonomy.carotenes()[p].signature.clone(),
                positives: graph.neighbors(p).to_vec(),
                complement: universe(&|c| c == p || graph.has_edge(p, c), n),
            })
            .collect(),
        Relation::JobSoc | Relation::JobCar => jobs
            .iter()
            .map(|job| {
                let label = if relation.targets_socs() {
                    taxonomy.soc_index(&job.soc_label)
                } else {
                    taxonomy.carotene_index(&job.carotene_label)
                };
                let label = label.ok_or_else(|| Error::UnknownId {
                    at: format!("job '{}'", job.id),
                    kind: if relation.targets_socs() { "soc" } else { "carotene" },
                    id: if relation.targets_socs() {
                        job.soc_label.clone()
                    } else {
                        job.carotene_label.clone()
                    },
                })?;
                let size = if relation.targets_socs() { m } else { n };
                Ok(Anchor {
                    id: job.id.clone(),
                    query: concat_features(job),
                    positives: vec![label],
                    complement: universe(&|c| c == label, size),
                })
            })
            .collect::<Result<_>>()?,
    };
    Ok(out)
}

fn candidate_ids(relation: Relation, taxonomy: &Taxonomy) -> Vec<&str> {
    if relation.targets_socs() {
        taxonomy.socs().iter().map(|s| s.id.as_str()).collect()
    } else {
        taxonomy.carotenes().iter().map(|c| c.id.as_str()).collect()
    }
}

fn link_seed(seed: u64, relation: Relation, anchor: &str, positive: &str) -> u64 {
    let mut h = splitmix64(seed ^ relation as u64);
    for b in anchor.bytes().chain([0xff]).chain(positive.bytes()) {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

fn finish(relation: Relation, per_anchor: Vec<(Vec<Triplet>, usize)>) -> MineOutput {
    let mut warnings = 0;
    let mut triplets = Vec::new();
    for (ts, w) in per_anchor {
        triplets.extend(ts);
        warnings += w;
    }
    triplets.sort();
    if warnings > 0 {
        log::warn!("{relation}: skipped {warnings} link(s) with no eligible negatives");
    }
    MineOutput { triplets, warnings }
}

/// Uniformly sampled negatives from each link's complement set.
pub fn mine_soft(
    relation: Relation,
    jobs: &[JobRecord],
    taxonomy: &Taxonomy,
    graph: &SimilarityGraph,
    config: &MinerConfig,
) -> Result<MineOutput> {
    validate_config(config)?;
    let ids = candidate_ids(relation, taxonomy);
    let per_anchor = anchors(relation, jobs, taxonomy, graph)?
        .into_par_iter()
        .map(|a| {
            let mut out = Vec::new();
            let mut warnings = 0;
            for &p in &a.positives {
                if a.complement.is_empty() {
                    warnings += 1;
                    continue;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(link_seed(config.seed, relation, &a.id, ids[p]));
                let k = config.n_neg.min(a.complement.len());
                for i in index::sample(&mut rng, a.complement.len(), k) {
                    out.push(Triplet {
                        relation,
                        anchor: a.id.clone(),
                        positive: ids[p].to_string(),
                        negative: ids[a.complement[i]].to_string(),
                    });
                }
            }
            (out, warnings)
        })
        .collect();
    Ok(finish(relation, per_anchor))
}

/// Negatives are the top-`n_neg` complement items by cosine between the
/// encoded anchor text (signature, or job text for job anchors) and each
/// candidate's encoded signature.
pub fn mine_hard(
    relation: Relation,
    jobs: &[JobRecord],
    taxonomy: &Taxonomy,
    graph: &SimilarityGraph,
    config: &MinerConfig,
    encoder: &dyn TextEncoder,
) -> Result<MineOutput> {
    validate_config(config)?;
    let ids = candidate_ids(relation, taxonomy);
    let signatures: Vec<Vec<f64>> = if relation.targets_socs() {
        taxonomy.socs().par_iter().map(|s| encoder.encode(&s.signature)).collect()
    } else {
        taxonomy
            .carotenes()
            .par_iter()
            .map(|c| encoder.encode(&c.signature))
            .collect()
    };
    let per_anchor = anchors(relation, jobs, taxonomy, graph)?
        .into_par_iter()
        .map(|a| {
            if a.complement.is_empty() {
                return (Vec::new(), a.positives.len());
            }
            let query = encoder.encode(&a.query);
            let mut ranked: Vec<(f64, usize)> = a
                .complement
                .iter()
                .map(|&c| (cosine_unchecked(&query, &signatures[c]), c))
                .collect();
            ranked.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| ids[x.1].cmp(ids[y.1])));
            ranked.truncate(config.n_neg);
            let out = a
                .positives
                .iter()
                .flat_map(|&p| {
                    ranked.iter().map(move |&(_, c)| (p, c))
                })
                .map(|(p, c)| Triplet {
                    relation,
                    anchor: a.id.clone(),
                    positive: ids[p].to_string(),
                    negative: ids[c].to_string(),
                })
                .collect();
            (out, 0)
        })
        .collect();
    Ok(finish(relation, per_anchor))
}

/// Dispatches on `config.mode`. Hard mode requires an encoder.
pub fn mine(
    relation: Relation,
    jobs: &[JobRecord],
    taxonomy: &Taxonomy,
    graph: &SimilarityGraph,
    config: &MinerConfig,
    encoder: Option<&dyn TextEncoder>,
) -> Result<MineOutput> {
    match (config.mode, encoder) {
        (MineMode::Soft, _) => mine_soft(relation, jobs, taxonomy, graph, config),
        (MineMode::Hard, Some(e)) => mine_hard(relation, jobs, taxonomy, graph, config, e),
        (MineMode::Hard, None) => Err(Error::Config("hard mining needs an encoder".into())),
    }
}

fn validate_config(config: &MinerConfig) -> Result<()> {
    if config.n_neg == 0 {
        return Err(Error::Config("n_neg must be >= 1".into()));
    }
    Ok(())
}

/// Resolves and validates triplets against a taxonomy, graph and job set.
pub struct TripletContext<'a> {
    taxonomy: &'a Taxonomy,
    graph: &'a SimilarityGraph,
    jobs: HashMap<&'a str, (usize, usize, usize)>,
}

impl<'a> TripletContext<'a> {
    /// Job anchors resolve to their position in `jobs`.
    pub fn new(taxonomy: &'a Taxonomy, graph: &'a SimilarityGraph, jobs: &'a [JobRecord]) -> Self {
        let jobs = jobs
            .iter()
            .enumerate()
            .filter_map(|(row, j)| {
                Some((
                    j.id.as_str(),
                    (
                        row,
                        taxonomy.soc_index(&j.soc_label)?,
                        taxonomy.carotene_index(&j.carotene_label)?,
                    ),
                ))
            })
            .collect();
        Self { taxonomy, graph, jobs }
    }

    /// Checks the relation's invariant and returns row indices.
    pub fn resolve(&self, t: &Triplet) -> Result<IndexedTriplet> {
        let at = format!("{} triplet ({}, {}, {})", t.relation, t.anchor, t.positive, t.negative);
        let unknown = |kind: &'static str, id: &str| Error::UnknownId {
            at: at.clone(),
            kind,
            id: id.to_string(),
        };
        let soc = |id: &str| self.taxonomy.soc_index(id).ok_or_else(|| unknown("soc", id));
        let car = |id: &str| self.taxonomy.carotene_index(id).ok_or_else(|| unknown("carotene", id));
        let job = |id: &str| self.jobs.get(id).copied().ok_or_else(|| unknown("job", id));
        let bad = |msg: &str| Error::invariant(at.clone(), msg);

        let resolved = match t.relation {
            Relation::SocCar => {
                let (a, p, n) = (soc(&t.anchor)?, car(&t.positive)?, car(&t.negative)?);
                if self.taxonomy.parent_of(p) != a {
                    return Err(bad("positive is not a child of the anchor"));
                }
                if self.taxonomy.parent_of(n) == a {
                    return Err(bad("negative is a child of the anchor"));
                }
                IndexedTriplet { anchor: a, positive: p, negative: n }
            }
            Relation::CarCar => {
                let (a, p, n) = (car(&t.anchor)?, car(&t.positive)?, car(&t.negative)?);
                if !self.graph.has_edge(a, p) {
                    return Err(bad("(anchor, positive) is not an edge"));
                }
                if n == a || self.graph.has_edge(a, n) {
                    return Err(bad("negative is the anchor or one of its out-neighbours"));
                }
                IndexedTriplet { anchor: a, positive: p, negative: n }
            }
            Relation::JobSoc => {
                let (row, label, _) = job(&t.anchor)?;
                let (p, n) = (soc(&t.positive)?, soc(&t.negative)?);
                if p != label {
                    return Err(bad("positive is not the job's SOC"));
                }
                if n == p {
                    return Err(bad("negative equals positive"));
                }
                IndexedTriplet { anchor: row, positive: p, negative: n }
            }
            Relation::JobCar => {
                let (row, _, label) = job(&t.anchor)?;
                let (p, n) = (car(&t.positive)?, car(&t.negative)?);
                if p != label {
                    return Err(bad("positive is not the job's Carotene"));
                }
                if n == p {
                    return Err(bad("negative equals positive"));
                }
                IndexedTriplet { anchor: row, positive: p, negative: n }
            }
        };
        Ok(resolved)
    }

    pub fn resolve_all(&self, triplets: &[Triplet]) -> Result<Vec<IndexedTriplet>> {
        triplets.iter().map(|t| self.resolve(t)).collect()
    }
}

pub fn save_triplets(path: impl AsRef<Path>, triplets: &[Triplet]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in triplets {
        writeln!(w, "{}\t{}\t{}\t{}", t.relation, t.anchor, t.positive, t.negative)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a triplet file and re-validates every line against `ctx`.
pub fn load_triplets(path: impl AsRef<Path>, ctx: &TripletContext<'_>) -> Result<Vec<Triplet>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display();
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("{origin}:{}", lineno + 1);
        let fields: Vec<&str> = line.split('\t').collect();
        let [rel, anchor, positive, negative] = fields[..] else {
            return Err(Error::Parse {
                at,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        };
        let relation = rel.parse::<Relation>().map_err(|e| Error::Parse {
            at: at.clone(),
            msg: e.to_string(),
        })?;
        let t = Triplet {
            relation,
            anchor: anchor.to_string(),
            positive: positive.to_string(),
            negative: negative.to_string(),
        };
        ctx.resolve(&t).map_err(|e| Error::invariant(at, e.to_string()))?;
        out.push(t);
    }
    Ok(out)
}

/// Uniform sample of `min(n_sample, store.len())` items without replacement.
pub fn sample_batch<T: Clone, R: Rng + ?Sized>(store: &[T], n_sample: usize, rng: &mut R) -> Vec<T> {
    if store.is_empty() {
        log::warn!("sampling from an empty triplet store");
        return Vec::new();
    }
    let k = n_sample.min(store.len());
    index::sample(rng, store.len(), k)
        .into_iter()
        .map(|i| store[i].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{EncoderConfig, HashedTfEncoder};
    use crate::taxonomy::TaxonomyNode;

    fn node(id: &str, sig: &str) -> TaxonomyNode {
        TaxonomyNode { id: id.into(), signature: sig.into() }
    }

    fn fixture() -> (Taxonomy, SimilarityGraph, Vec<JobRecord>) {
        let cars = (1..=6)
            .map(|i| (node(&format!("C{i}"), &format!("carotene {i}")), if i <= 3 { "S1" } else { "S2" }.into()))
            .collect();
        let t = Taxonomy::new(vec![node("S1", "first"), node("S2", "second")], cars).unwrap();
        let g = SimilarityGraph::from_edges(6, [(0, 3), (0, 1), (2, 5), (4, 0)]).unwrap();
        let jobs = [("J0", "S1", "C1"), ("J1", "S1", "C2"), ("J2", "S2", "C4"), ("J3", "S2", "C5")]
            .iter()
            .map(|&(id, soc, car)| JobRecord {
                id: id.into(),
                title: "t".into(),
                description: "d".into(),
                location: None,
                salary: None,
                soc_label: soc.into(),
                carotene_label: car.into(),
            })
            .collect();
        (t, g, jobs)
    }

    #[test]
    fn soc_car_soft_count() {
        let (t, g, _) = fixture();
        let cfg = MinerConfig { n_neg: 2, mode: MineMode::Soft, seed: 7 };
        let out = mine_soft(Relation::SocCar, &[], &t, &g, &cfg).unwrap();
        assert_eq!(out.triplets.len(), 12);
        assert_eq!(out.warnings, 0);
        let ctx = TripletContext::new(&t, &g, &[]);
        ctx.resolve_all(&out.triplets).unwrap();
        let again = mine_soft(Relation::SocCar, &[], &t, &g, &cfg).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn single_soc_job_soc_warns() {
        let t = Taxonomy::new(vec![node("S", "")], vec![(node("C", ""), "S".into())]).unwrap();
        let g = SimilarityGraph::empty(1);
        let jobs: Vec<JobRecord> = (0..3)
            .map(|i| JobRecord {
                id: format!("J{i}"),
                title: String::new(),
                description: String::new(),
                location: None,
                salary: None,
                soc_label: "S".into(),
                carotene_label: "C".into(),
            })
            .collect();
        let out = mine_soft(Relation::JobSoc, &jobs, &t, &g, &MinerConfig::default()).unwrap();
        assert!(out.triplets.is_empty());
        assert_eq!(out.warnings, 3);
    }

    #[test]
    fn car_car_respects_direction() {
        let (t, g, _) = fixture();
        let cfg = MinerConfig { n_neg: 100, ..Default::default() };
        let out = mine_soft(Relation::CarCar, &[], &t, &g, &cfg).unwrap();
        // C1 has out-edges to C2, C4: complement = {C3, C5, C6}
        let c1: Vec<_> = out.triplets.iter().filter(|t| t.anchor == "C1").collect();
        assert_eq!(c1.len(), 6);
        // C5 -> C1 is an edge, so C1 is never a negative for C5
        assert!(out.triplets.iter().all(|t| !(t.anchor == "C5" && t.negative == "C1")));
        // C1 -> C4 is an edge but C4 -> C1 is not; C4 has no out-edges, so no anchors
        assert!(out.triplets.iter().all(|t| t.anchor != "C4"));
        // C3 -> C6: C1 is a legal negative even though C1 has edges of its own
        assert!(out.triplets.iter().any(|t| t.anchor == "C3" && t.negative == "C1"));
    }

    #[test]
    fn hard_mode_full_complement_when_n_neg_large() {
        let (t, g, _) = fixture();
        let enc = HashedTfEncoder::new(EncoderConfig { q: 16, vocab_hash_buckets: 256, seed: 1 }).unwrap();
        let cfg = MinerConfig { n_neg: 50, mode: MineMode::Hard, seed: 0 };
        let out = mine_hard(Relation::SocCar, &[], &t, &g, &cfg, &enc).unwrap();
        let mut negs: Vec<_> = out
            .triplets
            .iter()
            .filter(|x| x.anchor == "S1" && x.positive == "C1")
            .map(|x| x.negative.as_str())
            .collect();
        negs.sort();
        assert_eq!(negs, ["C4", "C5", "C6"]);
    }

    #[test]
    fn hard_mode_tie_breaks_by_id() {
        let cars = vec![
            (node("C1", "alpha"), "S1".into()),
            (node("Cb", "beta gamma"), "S2".into()),
            (node("Ca", "beta gamma"), "S2".into()),
            (node("Cz", "zeta"), "S2".into()),
        ];
        let t = Taxonomy::new(vec![node("S1", "beta gamma"), node("S2", "x")], cars).unwrap();
        let g = SimilarityGraph::empty(4);
        let enc = HashedTfEncoder::new(EncoderConfig::default()).unwrap();
        let cfg = MinerConfig { n_neg: 1, mode: MineMode::Hard, seed: 0 };
        let out = mine_hard(Relation::SocCar, &[], &t, &g, &cfg, &enc).unwrap();
        let s1: Vec<_> = out.triplets.iter().filter(|x| x.anchor == "S1").collect();
        assert_eq!(s1.len(), 1);
        assert_eq!(s1[0].negative, "Ca");
    }

    #[test]
    fn triplet_file_round_trip_and_validation() {
        let (t, g, jobs) = fixture();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tsv");
        let ctx = TripletContext::new(&t, &g, &jobs);

        save_triplets(&path, &[]).unwrap();
        assert!(load_triplets(&path, &ctx).unwrap().is_empty());

        let cfg = MinerConfig { n_neg: 2, mode: MineMode::Soft, seed: 3 };
        let out = mine_soft(Relation::SocCar, &jobs, &t, &g, &cfg).unwrap();
        save_triplets(&path, &out.triplets).unwrap();
        let mut back = load_triplets(&path, &ctx).unwrap();
        back.sort();
        assert_eq!(back, out.triplets);

        fs::write(&path, "soc-car\tS1\tC1\tC2\n").unwrap();
        assert!(load_triplets(&path, &ctx).is_err());
        fs::write(&path, "soc-car\tS1\tC1\n").unwrap();
        assert!(matches!(load_triplets(&path, &ctx), Err(Error::Parse { .. })));
    }

    #[test]
    fn sample_batch_basics() {
        let store = vec![1, 2, 3, 4];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut all = sample_batch(&store, 10, &mut rng);
        all.sort();
        assert_eq!(all, store);
        assert!(sample_batch::<i32, _>(&[], 3, &mut rng).is_empty());

        let mut a = ChaCha8Rng::seed_from_u64(5);
        let mut b = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            assert_eq!(sample_batch(&store, 2, &mut a), sample_batch(&store, 2, &mut b));
        }
    }

    #[test]
    fn sample_batch_is_uniform() {
        let store = vec![0usize, 1, 2, 3];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut freq = [0usize; 4];
        for _ in 0..1000 {
            freq[sample_batch(&store, 1, &mut rng)[0]] += 1;
        }
        for f in freq {
            assert!((190..=310).contains(&f), "{freq:?}");
        }
    }
}
