//! Classification metrics, triplet ranking accuracy and 2-D PCA export.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::cosine_unchecked;
use crate::error::{Error, Result};
use crate::model::{classify, JobMatrix, ModelParams};
use crate::taxonomy::Taxonomy;
use crate::triplet::{IndexedTriplet, Relation, TripletStores};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    /// Both heads take their own argmax.
    #[default]
    Unconstrained,
    /// The Carotene argmax is restricted to children of the predicted SOC.
    Constrained,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub soc_accuracy: f64,
    pub carotene_accuracy: f64,
    pub carotene_macro_precision: f64,
    pub carotene_macro_recall: f64,
    /// Fraction of jobs whose predicted Carotene sits under the predicted SOC.
    pub hierarchy_consistency: f64,
    /// Only relations with a non-empty triplet set appear.
    pub tra: BTreeMap<Relation, f64>,
    pub averaging: String,
    pub decoding: Decoding,
}

fn argmax(xs: &[f64]) -> usize {
    // first index wins ties
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Predicted `(soc, carotene)` for one job vector.
pub fn predict(
    params: &ModelParams,
    job_vec: &[f64],
    taxonomy: &Taxonomy,
    decoding: Decoding,
) -> Result<(usize, usize)> {
    let (soc_p, car_p) = classify(params, job_vec)?;
    let soc = argmax(&soc_p);
    let car = match decoding {
        Decoding::Unconstrained => argmax(&car_p),
        Decoding::Constrained => {
            let kids = taxonomy.children_of(soc);
            if kids.is_empty() {
                argmax(&car_p)
            } else {
                let mut best = kids[0];
                for &c in kids {
                    if car_p[c] > car_p[best] {
                        best = c;
                    }
                }
                best
            }
        }
    };
    Ok((soc, car))
}

/// Macro precision and recall over the classes present in `truth`. A class
/// that is never predicted has precision 0.
pub fn macro_precision_recall(truth: &[usize], pred: &[usize], num_classes: usize) -> (f64, f64) {
    let mut tp = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut actual = vec![0usize; num_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        actual[t] += 1;
        predicted[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let present: Vec<usize> = (0..num_classes).filter(|&c| actual[c] > 0).collect();
    if present.is_empty() {
        return (0.0, 0.0);
    }
    let k = present.len() as f64;
    let precision = present
        .iter()
        .map(|&c| {
            if predicted[c] == 0 {
                0.0
            } else {
                tp[c] as f64 / predicted[c] as f64
            }
        })
        .sum::<f64>()
        / k;
    let recall = present
        .iter()
        .map(|&c| tp[c] as f64 / actual[c] as f64)
        .sum::<f64>()
        / k;
    (precision, recall)
}

/// Classification fields of a [`MetricsReport`] over `rows` of `jobs`.
pub fn evaluate_classification(
    params: &ModelParams,
    jobs: &JobMatrix,
    rows: &[usize],
    taxonomy: &Taxonomy,
    decoding: Decoding,
) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::Config("cannot evaluate an empty job set".into()));
    }
    let preds = rows
        .iter()
        .map(|&r| predict(params, jobs.row(r), taxonomy, decoding))
        .collect::<Result<Vec<_>>>()?;
    let total = rows.len() as f64;
    let mut soc_ok = 0usize;
    let mut car_ok = 0usize;
    let mut consistent = 0usize;
    for (&r, &(s, c)) in rows.iter().zip(&preds) {
        soc_ok += usize::from(jobs.soc[r] == s);
        car_ok += usize::from(jobs.carotene[r] == c);
        consistent += usize::from(taxonomy.parent_of(c) == s);
    }
    let truth: Vec<usize> = rows.iter().map(|&r| jobs.carotene[r]).collect();
    let pred: Vec<usize> = preds.iter().map(|p| p.1).collect();
    let (precision, recall) = macro_precision_recall(&truth, &pred, taxonomy.num_carotenes());
    Ok(MetricsReport {
        soc_accuracy: soc_ok as f64 / total,
        carotene_accuracy: car_ok as f64 / total,
        carotene_macro_precision: precision,
        carotene_macro_recall: recall,
        hierarchy_consistency: consistent as f64 / total,
        tra: BTreeMap::new(),
        averaging: "macro".into(),
        decoding,
    })
}

fn triplet_vectors<'a>(
    params: &'a ModelParams,
    jobs: &'a JobMatrix,
    relation: Relation,
    t: &IndexedTriplet,
) -> [&'a [f64]; 3] {
    let soc = |i: usize| params.soc_emb.row(i).to_slice().expect("standard layout");
    let car = |i: usize| params.car_emb.row(i).to_slice().expect("standard layout");
    match relation {
        Relation::SocCar => [soc(t.anchor), car(t.positive), car(t.negative)],
        Relation::CarCar => [car(t.anchor), car(t.positive), car(t.negative)],
        Relation::JobSoc => [jobs.row(t.anchor), soc(t.positive), soc(t.negative)],
        Relation::JobCar => [jobs.row(t.anchor), car(t.positive), car(t.negative)],
    }
}

/// Fraction of triplets with `cos(anchor, positive) > cos(anchor, negative)`;
/// ties count as failures.
pub fn tra(
    params: &ModelParams,
    jobs: &JobMatrix,
    relation: Relation,
    triplets: &[IndexedTriplet],
) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::Config(format!("TRA over an empty {relation} triplet set")));
    }
    let correct: usize = triplets
        .par_chunks(1024)
        .map(|chunk| {
            chunk
                .iter()
                .filter(|t| {
                    let [a, p, n] = triplet_vectors(params, jobs, relation, t);
                    cosine_unchecked(a, p) > cosine_unchecked(a, n)
                })
                .count()
        })
        .sum();
    Ok(correct as f64 / triplets.len() as f64)
}

/// Classification metrics over `rows` plus TRA for every non-empty store.
pub fn evaluate(
    params: &ModelParams,
    jobs: &JobMatrix,
    rows: &[usize],
    taxonomy: &Taxonomy,
    stores: &TripletStores,
    decoding: Decoding,
) -> Result<MetricsReport> {
    let mut report = evaluate_classification(params, jobs, rows, taxonomy, decoding)?;
    for (r, store) in stores.iter() {
        if let Some(ts) = store.as_ref().filter(|ts| !ts.is_empty()) {
            report.tra.insert(r, tra(params, jobs, r, ts)?);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionPoint {
    pub id: String,
    /// `SOC` or `CAR`
    pub level: &'static str,
    /// Parent SOC id for Carotenes, empty for SOCs.
    pub parent: String,
    pub x: f64,
    pub y: f64,
}

/// Projects mean-centred rows onto the top two principal components. Each
/// component is sign-fixed so its largest-magnitude loading is positive.
pub fn pca_2d(rows: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, q) = rows.dim();
    if q < 2 {
        return Err(Error::Config(format!("PCA to 2-D needs q >= 2, got {q}")));
    }
    if n == 0 {
        return Ok(Array2::zeros((0, 2)));
    }
    let mean = rows.mean_axis(Axis(0)).expect("non-empty");
    let centered = rows - &mean;
    let x = DMatrix::from_row_iterator(n, q, centered.iter().copied());
    let cov = x.transpose() * &x / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut out = Array2::zeros((n, 2));
    for (k, &idx) in order.iter().take(2).enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for (i, row) in centered.rows().into_iter().enumerate() {
            out[[i, k]] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
        }
    }
    Ok(out)
}

/// PCA of the stacked SOC and Carotene embedding rows.
pub fn export_projection(params: &ModelParams, taxonomy: &Taxonomy) -> Result<Vec<ProjectionPoint>> {
    let stacked = concatenate(Axis(0), &[params.soc_emb.view(), params.car_emb.view()])
        .expect("same width");
    let coords = pca_2d(&stacked)?;
    let socs = taxonomy.socs().iter().map(|s| (s.id.clone(), "SOC", String::new()));
    let cars = taxonomy.carotenes().iter().enumerate().map(|(c, node)| {
        (
            node.id.clone(),
            "CAR",
            taxonomy.socs()[taxonomy.parent_of(c)].id.clone(),
        )
    });
    Ok(socs
        .chain(cars)
        .zip(coords.rows())
        .map(|((id, level, parent), xy)| ProjectionPoint {
            id,
            level,
            parent,
            x: xy[0],
            y: xy[1],
        })
        .collect())
}

/// Tab-separated `id level v1 .. vq` for every SOC then every Carotene row.
pub fn save_embeddings(path: impl AsRef<Path>, params: &ModelParams, taxonomy: &Taxonomy) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let levels = [
        ("SOC", taxonomy.socs(), &params.soc_emb),
        ("CAR", taxonomy.carotenes(), &params.car_emb),
    ];
    for (level, nodes, emb) in levels {
        for (node, row) in nodes.iter().zip(emb.rows()) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}\t{level}\t{}", node.id, vals.join("\t")).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Tab-separated `id level parent x y`, one point per line.
pub fn save_projection(path: impl AsRef<Path>, points: &[ProjectionPoint]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in points {
        writeln!(w, "{}\t{}\t{}\t{:?}\t{:?}", p.id, p.level, p.parent, p.x, p.y)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::TaxonomyNode;
    use ndarray::array;

    fn taxonomy() -> Taxonomy {
        let node = |id: &str| TaxonomyNode { id: id.into(), signature: String::new() };
        Taxonomy::new(
            vec![node("A"), node("B")],
            vec![(node("a1"), "A".into()), (node("b1"), "B".into())],
        )
        .unwrap()
    }

    #[test]
    fn confusion_matrix_fixture() {
        // truth rows / predicted columns: [[1,1],[0,2]]
        let truth = [0, 0, 1, 1];
        let pred = [0, 1, 1, 1];
        let (p, r) = macro_precision_recall(&truth, &pred, 2);
        assert!((p - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((r - 0.75).abs() < 1e-12);
    }

    #[test]
    fn never_predicted_class_has_zero_precision() {
        let (p, r) = macro_precision_recall(&[0, 1], &[1, 1], 3);
        assert!((p - 0.25).abs() < 1e-12);
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let t = taxonomy();
        let mut params = ModelParams::zeros(2, 2, 2);
        params.soc_head = array![[1.0, 0.0], [0.0, 1.0]];
        params.car_head = array![[1.0, 0.0], [0.0, 1.0]];
        let jobs = JobMatrix {
            ids: vec!["x".into(), "y".into()],
            vectors: array![[1.0, 0.0], [0.0, 1.0]],
            soc: vec![0, 1],
            carotene: vec![0, 1],
        };
        let r = evaluate_classification(&params, &jobs, &[0, 1], &t, Decoding::Unconstrained).unwrap();
        assert_eq!(r.soc_accuracy, 1.0);
        assert_eq!(r.carotene_accuracy, 1.0);
        assert_eq!(r.carotene_macro_precision, 1.0);
        assert_eq!(r.hierarchy_consistency, 1.0);
        assert!(evaluate_classification(&params, &jobs, &[], &t, Decoding::Unconstrained).is_err());
    }

    #[test]
    fn constrained_decoding_is_consistent() {
        let t = taxonomy();
        let mut params = ModelParams::zeros(2, 2, 2);
        // SOC head prefers A, Carotene head prefers b1
        params.soc_head = array![[1.0, 0.0], [1.0, 0.0]];
        params.car_head = array![[0.0, 1.0], [0.0, 1.0]];
        let x = [0.5, 0.5];
        assert_eq!(predict(&params, &x, &t, Decoding::Unconstrained).unwrap(), (0, 1));
        assert_eq!(predict(&params, &x, &t, Decoding::Constrained).unwrap(), (0, 0));
    }

    #[test]
    fn tra_examples() {
        let mut params = ModelParams::zeros(1, 4, 2);
        params.soc_emb.row_mut(0).assign(&array![1.0, 0.0]);
        params.car_emb.row_mut(0).assign(&array![1.0, 0.0]);
        params.car_emb.row_mut(1).assign(&array![0.0, 1.0]);
        params.car_emb.row_mut(2).assign(&array![1.0, 0.2]);
        params.car_emb.row_mut(3).assign(&array![1.0, 0.0]);
        let jobs = JobMatrix { ids: vec![], vectors: Array2::zeros((0, 2)), soc: vec![], carotene: vec![] };
        let t = |p, n| IndexedTriplet { anchor: 0, positive: p, negative: n };
        let r = Relation::SocCar;
        assert_eq!(tra(&params, &jobs, r, &[t(0, 1)]).unwrap(), 1.0);
        // 2 of 3 correctly ordered
        let v = tra(&params, &jobs, r, &[t(0, 1), t(2, 0), t(0, 2)]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9);
        // identical positive and negative vectors: a tie, counted as wrong
        assert_eq!(tra(&params, &jobs, r, &[t(0, 3)]).unwrap(), 0.0);
        assert!(tra(&params, &jobs, r, &[]).is_err());
    }

    #[test]
    fn pca_degenerate_cases() {
        let same = Array2::from_shape_fn((4, 3), |(_, j)| j as f64);
        assert!(pca_2d(&same).unwrap().iter().all(|&x| x.abs() < 1e-12));
        assert!(pca_2d(&Array2::zeros((3, 1))).is_err());

        // rows in a 2-D subspace are reconstructed exactly
        let basis = array![[1.0, 2.0, 0.0, -1.0], [0.0, 1.0, 1.0, 3.0]];
        let coef = array![[1.0, 0.5], [-2.0, 1.0], [0.3, -0.7], [4.0, 2.0], [0.0, 0.0]];
        let rows = coef.dot(&basis);
        let xy = pca_2d(&rows).unwrap();
        let centered = &rows - &rows.mean_axis(Axis(0)).unwrap();
        // recover the orthonormal components by least squares: P = pinv(xy) * centered
        let xtx = xy.t().dot(&xy);
        let det = xtx[[0, 0]] * xtx[[1, 1]] - xtx[[0, 1]] * xtx[[1, 0]];
        let inv = array![[xtx[[1, 1]], -xtx[[0, 1]]], [-xtx[[1, 0]], xtx[[0, 0]]]] / det;
        let comps = inv.dot(&xy.t()).dot(&centered);
        let recon = xy.dot(&comps);
        for (a, b) in recon.iter().zip(centered.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_labels() {
        let t = taxonomy();
        let mut params = ModelParams::zeros(2, 2, 3);
        params.car_emb[[1, 2]] = 1.0;
        params.soc_emb[[0, 0]] = 1.0;
        let pts = export_projection(&params, &t).unwrap();
        assert_eq!(pts.len(), 4);
        assert_eq!((pts[0].level, pts[0].parent.as_str()), ("SOC", ""));
        assert_eq!((pts[3].id.as_str(), pts[3].level, pts[3].parent.as_str()), ("b1", "CAR", "B"));
    }
}
