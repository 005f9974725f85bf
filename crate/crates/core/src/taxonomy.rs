//! Jobs, the two-level SOC/Carotene taxonomy and the Carotene similarity graph.
//!
//! Ids are opaque strings. At load time every level is sorted by id and each
//! node gets an ordinal index in that order; matrix rows in [`crate::model`]
//! follow the same order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum out-degree of a Carotene in the similarity graph.
pub const MAX_OUT_DEGREE: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, deserialize_with = "opt_text", skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
    #[serde(default, deserialize_with = "opt_text", skip_serializing_if = "Option::is_none")]
    pub salary: Option<String>,
    #[serde(rename = "soc")]
    pub soc_label: String,
    #[serde(rename = "carotene")]
    pub carotene_label: String,
}

/// Accepts a string, a number or null; numbers are cast to their text form.
fn opt_text<'de, D>(de: D) -> std::result::Result<Option<String>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Number(serde_json::Number),
    }
    Ok(Option::<Raw>::deserialize(de)?.map(|raw| match raw {
        Raw::Text(s) => s,
        Raw::Number(n) => n.to_string(),
    }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyNode {
    pub id: String,
    #[serde(default)]
    pub signature: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawCarotene {
    id: String,
    #[serde(default)]
    parent: Option<String>,
    #[serde(default)]
    signature: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawTaxonomy {
    socs: Vec<TaxonomyNode>,
    carotenes: Vec<RawCarotene>,
}

/// Two-level taxonomy. Every Carotene has exactly one parent SOC.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    socs: Vec<TaxonomyNode>,
    carotenes: Vec<TaxonomyNode>,
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    soc_index: HashMap<String, usize>,
    carotene_index: HashMap<String, usize>,
}

impl Taxonomy {
    /// Builds a taxonomy from `(soc id, signature)` and
    /// `(carotene id, parent soc id, signature)` entries.
    pub fn new(
        socs: Vec<TaxonomyNode>,
        carotenes: Vec<(TaxonomyNode, String)>,
    ) -> Result<Self> {
        let raw = RawTaxonomy {
            socs,
            carotenes: carotenes
                .into_iter()
                .map(|(node, parent)| RawCarotene {
                    id: node.id,
                    parent: Some(parent),
                    signature: node.signature,
                })
                .collect(),
        };
        Self::from_raw(raw, "taxonomy")
    }

    fn from_raw(raw: RawTaxonomy, origin: &str) -> Result<Self> {
        if raw.socs.is_empty() {
            return Err(Error::invariant(origin, "taxonomy has no SOCs"));
        }
        if raw.carotenes.is_empty() {
            return Err(Error::invariant(origin, "taxonomy has no Carotenes"));
        }

        let mut socs = raw.socs;
        let mut seen = BTreeSet::new();
        for (i, s) in socs.iter().enumerate() {
            if s.id.is_empty() {
                return Err(Error::invariant(format!("{origin}:socs[{i}]"), "empty SOC id"));
            }
            if !seen.insert(s.id.clone()) {
                return Err(Error::invariant(
                    format!("{origin}:socs[{i}]"),
                    format!("duplicate SOC id '{}'", s.id),
                ));
            }
        }
        socs.sort_by(|a, b| a.id.cmp(&b.id));
        let soc_index: HashMap<String, usize> =
            socs.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();

        let mut parents: BTreeMap<String, (usize, String, String)> = BTreeMap::new();
        for (i, c) in raw.carotenes.into_iter().enumerate() {
            let at = format!("{origin}:carotenes[{i}]");
            if c.id.is_empty() {
                return Err(Error::invariant(at, "empty Carotene id"));
            }
            let parent = match c.parent {
                Some(p) if !p.is_empty() => p,
                _ => {
                    return Err(Error::invariant(
                        at,
                        format!("Carotene '{}' has no parent SOC", c.id),
                    ))
                }
            };
            if !soc_index.contains_key(&parent) {
                return Err(Error::UnknownId {
                    at,
                    kind: "soc",
                    id: parent,
                });
            }
            if let Some((_, prev_parent, _)) = parents.get(&c.id) {
                let msg = if *prev_parent != parent {
                    format!("Carotene '{}' has multiple parents", c.id)
                } else {
                    format!("duplicate Carotene id '{}'", c.id)
                };
                return Err(Error::invariant(at, msg));
            }
            parents.insert(c.id, (i, parent, c.signature));
        }

        // BTreeMap iteration is already in sorted-id order.
        let mut carotenes = Vec::with_capacity(parents.len());
        let mut parent = Vec::with_capacity(parents.len());
        let mut children = vec![Vec::new(); socs.len()];
        for (k, (id, (_, p, signature))) in parents.into_iter().enumerate() {
            let s = soc_index[&p];
            parent.push(s);
            children[s].push(k);
            carotenes.push(TaxonomyNode { id, signature });
        }
        let carotene_index = carotenes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.clone(), i))
            .collect();

        Ok(Self {
            socs,
            carotenes,
            parent,
            children,
            soc_index,
            carotene_index,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let origin = path.display().to_string();
        let raw: RawTaxonomy = serde_json::from_str(&text).map_err(|e| Error::Parse {
            at: format!("{origin}:{}", e.line()),
            msg: e.to_string(),
        })?;
        Self::from_raw(raw, &origin)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw = RawTaxonomy {
            socs: self.socs.clone(),
            carotenes: self
                .carotenes
                .iter()
                .zip(&self.parent)
                .map(|(c, &p)| RawCarotene {
                    id: c.id.clone(),
                    parent: Some(self.socs[p].id.clone()),
                    signature: c.signature.clone(),
                })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&raw).expect("taxonomy serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Number of SOCs (`m`).
    pub fn num_socs(&self) -> usize {
        self.socs.len()
    }

    /// Number of Carotenes (`n`).
    pub fn num_carotenes(&self) -> usize {
        self.carotenes.len()
    }

    pub fn socs(&self) -> &[TaxonomyNode] {
        &self.socs
    }

    pub fn carotenes(&self) -> &[TaxonomyNode] {
        &self.carotenes
    }

    pub fn soc_index(&self, id: &str) -> Option<usize> {
        self.soc_index.get(id).copied()
    }

    pub fn carotene_index(&self, id: &str) -> Option<usize> {
        self.carotene_index.get(id).copied()
    }

    /// Parent SOC index of Carotene `carotene`.
    pub fn parent_of(&self, carotene: usize) -> usize {
        self.parent[carotene]
    }

    /// Carotene indices under SOC index `soc`, ascending.
    pub fn children_of(&self, soc: usize) -> &[usize] {
        &self.children[soc]
    }

    /// Ids of the Carotenes whose parent is `soc`.
    pub fn children(&self, soc: &str) -> Result<BTreeSet<String>> {
        let s = self.soc_index(soc).ok_or_else(|| Error::UnknownId {
            at: "children".into(),
            kind: "soc",
            id: soc.to_string(),
        })?;
        Ok(self.children[s]
            .iter()
            .map(|&c| self.carotenes[c].id.clone())
            .collect())
    }

    /// Digest of the id order of both levels; stored in checkpoints so a
    /// parameter file cannot be paired with a different taxonomy.
    pub fn id_order_digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for s in &self.socs {
            h.update(s.id.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        for c in &self.carotenes {
            h.update(c.id.as_bytes());
            h.update([0u8]);
        }
        h.finalize().into()
    }
}

/// Directed Carotene -> Carotene similarity edges (set semantics).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimilarityGraph {
    out: Vec<Vec<usize>>,
}

impl SimilarityGraph {
    pub fn empty(num_carotenes: usize) -> Self {
        Self {
            out: vec![Vec::new(); num_carotenes],
        }
    }

    /// Builds a graph from index pairs, enforcing the graph invariants.
    pub fn from_edges(
        num_carotenes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut sets = vec![BTreeSet::new(); num_carotenes];
        for (src, dst) in edges {
            if src >= num_carotenes || dst >= num_carotenes {
                return Err(Error::invariant(
                    "graph",
                    format!("edge ({src},{dst}) out of range"),
                ));
            }
            if src == dst {
                return Err(Error::invariant("graph", format!("self-loop on node {src}")));
            }
            sets[src].insert(dst);
        }
        for (src, s) in sets.iter().enumerate() {
            if s.len() > MAX_OUT_DEGREE {
                return Err(Error::invariant(
                    "graph",
                    format!("out-degree of node {src} is {} (max {MAX_OUT_DEGREE})", s.len()),
                ));
            }
        }
        Ok(Self {
            out: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    /// Parses `src,dst[,weight]` lines. Weights are ignored; blank lines are skipped.
    pub fn load(path: impl AsRef<Path>, taxonomy: &Taxonomy) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let origin = path.display();
        let mut sets = vec![BTreeSet::new(); taxonomy.num_carotenes()];
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let at = format!("{origin}:{}", lineno + 1);
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let (src, dst) = match (fields.next(), fields.next()) {
                (Some(s), Some(d)) if !s.is_empty() && !d.is_empty() => (s, d),
                _ => {
                    return Err(Error::Parse {
                        at,
                        msg: format!("expected 'src,dst', got '{line}'"),
                    })
                }
            };
            let lookup = |id: &str| {
                taxonomy.carotene_index(id).ok_or_else(|| Error::UnknownId {
                    at: at.clone(),
                    kind: "carotene",
                    id: id.to_string(),
                })
            };
            let (s, d) = (lookup(src)?, lookup(dst)?);
            if s == d {
                return Err(Error::invariant(at, format!("self-loop on '{src}'")));
            }
            sets[s].insert(d);
            if sets[s].len() > MAX_OUT_DEGREE {
                return Err(Error::invariant(
                    at,
                    format!("out-degree of '{src}' exceeds {MAX_OUT_DEGREE}"),
                ));
            }
        }
        Ok(Self {
            out: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>, taxonomy: &Taxonomy) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let ids = taxonomy.carotenes();
        for (src, dst) in self.edges() {
            writeln!(w, "{},{}", ids[src].id, ids[dst].id).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn num_nodes(&self) -> usize {
        self.out.len()
    }

    /// Out-neighbours of `src`, ascending.
    pub fn neighbors(&self, src: usize) -> &[usize] {
        &self.out[src]
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.out[src].binary_search(&dst).is_ok()
    }

    pub fn num_edges(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// All edges in (src, dst) order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(s, ds)| ds.iter().map(move |&d| (s, d)))
    }
}

/// Jobs plus the taxonomy and similarity graph they are labelled against.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub jobs: Vec<JobRecord>,
    pub taxonomy: Taxonomy,
    pub graph: SimilarityGraph,
}

impl Dataset {
    /// Validates job labels against the taxonomy.
    pub fn new(jobs: Vec<JobRecord>, taxonomy: Taxonomy, graph: SimilarityGraph) -> Result<Self> {
        if graph.num_nodes() != taxonomy.num_carotenes() {
            return Err(Error::invariant(
                "graph",
                format!(
                    "graph has {} nodes, taxonomy has {} Carotenes",
                    graph.num_nodes(),
                    taxonomy.num_carotenes()
                ),
            ));
        }
        let mut ids = BTreeSet::new();
        for (i, job) in jobs.iter().enumerate() {
            validate_job(job, &taxonomy, &format!("jobs[{i}]"))?;
            if !ids.insert(job.id.as_str()) {
                return Err(Error::invariant(
                    format!("jobs[{i}]"),
                    format!("duplicate job id '{}'", job.id),
                ));
            }
        }
        Ok(Self {
            jobs,
            taxonomy,
            graph,
        })
    }

    /// Loads and validates the three input files.
    pub fn load(
        jobs_path: impl AsRef<Path>,
        taxonomy_path: impl AsRef<Path>,
        graph_path: impl AsRef<Path>,
    ) -> Result<Self> {
        let taxonomy = Taxonomy::load(taxonomy_path)?;
        let graph = SimilarityGraph::load(graph_path, &taxonomy)?;
        let jobs = load_jobs(jobs_path, &taxonomy)?;
        Ok(Self {
            jobs,
            taxonomy,
            graph,
        })
    }

    pub fn save(
        &self,
        jobs_path: impl AsRef<Path>,
        taxonomy_path: impl AsRef<Path>,
        graph_path: impl AsRef<Path>,
    ) -> Result<()> {
        save_jobs(jobs_path, &self.jobs)?;
        self.taxonomy.save(taxonomy_path)?;
        self.graph.save(graph_path, &self.taxonomy)
    }

    /// `(soc index, carotene index)` labels of job `i`.
    pub fn labels(&self, i: usize) -> (usize, usize) {
        let job = &self.jobs[i];
        (
            self.taxonomy.soc_index(&job.soc_label).expect("validated"),
            self.taxonomy
                .carotene_index(&job.carotene_label)
                .expect("validated"),
        )
    }
}

fn validate_job(job: &JobRecord, taxonomy: &Taxonomy, at: &str) -> Result<()> {
    if job.id.is_empty() {
        return Err(Error::invariant(at, "empty job id"));
    }
    let soc = taxonomy
        .soc_index(&job.soc_label)
        .ok_or_else(|| Error::UnknownId {
            at: at.to_string(),
            kind: "soc",
            id: job.soc_label.clone(),
        })?;
    let car = taxonomy
        .carotene_index(&job.carotene_label)
        .ok_or_else(|| Error::UnknownId {
            at: at.to_string(),
            kind: "carotene",
            id: job.carotene_label.clone(),
        })?;
    if taxonomy.parent_of(car) != soc {
        return Err(Error::LabelInconsistency {
            at: at.to_string(),
            soc: job.soc_label.clone(),
            carotene: job.carotene_label.clone(),
        });
    }
    Ok(())
}

/// Reads a JSON-lines job file, validating each record against `taxonomy`.
pub fn load_jobs(path: impl AsRef<Path>, taxonomy: &Taxonomy) -> Result<Vec<JobRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display();
    let mut jobs = Vec::new();
    let mut ids = BTreeSet::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = format!("{origin}:{}", lineno + 1);
        let job: JobRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            at: at.clone(),
            msg: e.to_string(),
        })?;
        validate_job(&job, taxonomy, &at)?;
        if !ids.insert(job.id.clone()) {
            return Err(Error::invariant(at, format!("duplicate job id '{}'", job.id)));
        }
        jobs.push(job);
    }
    Ok(jobs)
}

pub fn save_jobs(path: impl AsRef<Path>, jobs: &[JobRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for job in jobs {
        serde_json::to_writer(&mut w, job).expect("job serializes");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeStats {
    pub num_socs: usize,
    pub num_carotenes: usize,
    pub min_branching: usize,
    pub max_branching: usize,
    pub avg_branching: f64,
    /// out-degree -> number of Carotenes with that out-degree
    pub out_degree_histogram: BTreeMap<usize, usize>,
}

pub fn degree_stats(taxonomy: &Taxonomy, graph: &SimilarityGraph) -> DegreeStats {
    let branching: Vec<usize> = (0..taxonomy.num_socs())
        .map(|s| taxonomy.children_of(s).len())
        .collect();
    let mut out_degree_histogram = BTreeMap::new();
    for c in 0..graph.num_nodes() {
        *out_degree_histogram.entry(graph.neighbors(c).len()).or_insert(0) += 1;
    }
    DegreeStats {
        num_socs: taxonomy.num_socs(),
        num_carotenes: taxonomy.num_carotenes(),
        min_branching: branching.iter().copied().min().unwrap_or(0),
        max_branching: branching.iter().copied().max().unwrap_or(0),
        avg_branching: taxonomy.num_carotenes() as f64 / taxonomy.num_socs() as f64,
        out_degree_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str) -> TaxonomyNode {
        TaxonomyNode {
            id: id.into(),
            signature: format!("{id} signature"),
        }
    }

    fn two_by_three() -> Taxonomy {
        let cars = ["C1", "C2", "C3", "C4", "C5", "C6"]
            .iter()
            .enumerate()
            .map(|(i, c)| (node(c), if i < 3 { "S1" } else { "S2" }.to_string()))
            .collect();
        Taxonomy::new(vec![node("S2"), node("S1")], cars).unwrap()
    }

    #[test]
    fn ordinals_follow_sorted_ids() {
        let t = two_by_three();
        assert_eq!(t.soc_index("S1"), Some(0));
        assert_eq!(t.soc_index("S2"), Some(1));
        assert_eq!(t.children_of(1), &[3, 4, 5]);
    }

    #[test]
    fn children_and_partition() {
        let t = two_by_three();
        let c1 = t.children("S1").unwrap();
        assert_eq!(c1, ["C1", "C2", "C3"].iter().map(|s| s.to_string()).collect());
        let total: usize = t.socs().iter().map(|s| t.children(&s.id).unwrap().len()).sum();
        assert_eq!(total, t.num_carotenes());
        assert!(matches!(t.children("S9"), Err(Error::UnknownId { .. })));
    }

    #[test]
    fn childless_soc_has_empty_children() {
        let t = Taxonomy::new(
            vec![node("A"), node("B")],
            vec![(node("C1"), "A".into())],
        )
        .unwrap();
        assert!(t.children("B").unwrap().is_empty());
    }

    #[test]
    fn duplicate_carotene_with_other_parent_is_rejected() {
        let err = Taxonomy::new(
            vec![node("A"), node("B")],
            vec![(node("C1"), "A".into()), (node("C1"), "B".into())],
        )
        .unwrap_err();
        assert!(err.to_string().contains("multiple parents"), "{err}");
    }

    #[test]
    fn degree_stats_single_soc() {
        let t = Taxonomy::new(
            vec![node("A")],
            vec![
                (node("C1"), "A".into()),
                (node("C2"), "A".into()),
                (node("C3"), "A".into()),
            ],
        )
        .unwrap();
        let g = SimilarityGraph::from_edges(3, [(0, 1), (1, 0), (1, 2)]).unwrap();
        let st = degree_stats(&t, &g);
        assert_eq!((st.min_branching, st.max_branching), (3, 3));
        assert_eq!(st.avg_branching, 3.0);
        assert_eq!(st.out_degree_histogram, BTreeMap::from([(0, 1), (1, 1), (2, 1)]));
    }

    #[test]
    fn graph_rejects_self_loop_and_degree() {
        assert!(SimilarityGraph::from_edges(3, [(1, 1)]).is_err());
        let edges = (1..7).map(|d| (0, d));
        assert!(SimilarityGraph::from_edges(7, edges).is_err());
    }

    #[test]
    fn salary_number_is_cast_to_text() {
        let job: JobRecord = serde_json::from_str(
            r#"{"id":"j","title":"t","description":"d","salary":55000,"soc":"S1","carotene":"C1"}"#,
        )
        .unwrap();
        assert_eq!(job.salary.as_deref(), Some("55000"));
        assert_eq!(job.location, None);
    }
}
