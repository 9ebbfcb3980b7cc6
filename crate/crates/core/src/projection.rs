//! 2-D coordinates per embedding space for the scatter canvas.
//!
//! Precomputed coordinates (UMAP or otherwise) are passed through untouched.
//! When none exist, [`project_pca`] projects onto the top two principal
//! components. [`trustworthiness`] scores any projection against the
//! high-dimensional neighborhoods.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, IngestReport, Rejection};
use crate::embedding::SpaceVectors;

/// Covariance (d x d) or Gram (n x n) eigendecomposition is used when either
/// side is at most this size; beyond it, subspace iteration.
const DENSE_EIGEN_LIMIT: usize = 512;
const SUBSPACE_BLOCK: usize = 8;
const SUBSPACE_MAX_ITERS: usize = 500;
const SUBSPACE_TOL: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error("insufficient data: PCA needs at least 3 vectors, got {0}")]
    InsufficientData(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("paper {0} has no vector in this space")]
    MissingVector(String),
    #[error("unreadable projection source: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionPoint {
    #[serde(rename = "id")]
    pub paper_id: String,
    pub x: f64,
    pub y: f64,
}

/// At most one point per paper for one space.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectionTable {
    points: Vec<ProjectionPoint>,
    by_id: HashMap<String, usize>,
}

impl ProjectionTable {
    pub fn from_points(points: Vec<ProjectionPoint>) -> Self {
        let mut t = Self::default();
        for p in points {
            t.push(p);
        }
        t
    }

    fn push(&mut self, p: ProjectionPoint) -> bool {
        if self.by_id.contains_key(&p.paper_id) {
            return false;
        }
        self.by_id.insert(p.paper_id.clone(), self.points.len());
        self.points.push(p);
        true
    }

    pub fn points(&self) -> &[ProjectionPoint] {
        &self.points
    }

    pub fn get(&self, id: &str) -> Option<&ProjectionPoint> {
        self.by_id.get(id).map(|&i| &self.points[i])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn write_jsonl(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        for p in &self.points {
            serde_json::to_writer(&mut out, p)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Loads `{"id", "x", "y"}` rows. Unknown ids, non-finite coordinates and
/// repeated ids are rejected with reasons.
pub fn load_precomputed_projection(
    mut source: impl BufRead,
    corpus: &Corpus,
) -> Result<(ProjectionTable, IngestReport), ProjectionError> {
    let mut contents = String::new();
    source.read_to_string(&mut contents)?;
    let mut table = ProjectionTable::default();
    let mut report = IngestReport::default();
    for (i, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<ProjectionPoint>(line)
            .map_err(|e| format!("parse error: {e}"))
            .and_then(|p| {
                if !p.x.is_finite() || !p.y.is_finite() {
                    Err("non-finite coordinates".to_string())
                } else if !corpus.contains(&p.paper_id) {
                    Err(format!("unknown paper id {}", p.paper_id))
                } else if !table.push(p.clone()) {
                    Err(format!("duplicate id {}", p.paper_id))
                } else {
                    Ok(())
                }
            });
        match outcome {
            Ok(()) => report.accepted += 1,
            Err(reason) => report.rejected.push(Rejection { line: i + 1, reason }),
        }
    }
    Ok((table, report))
}

/// Projects every vector of the space onto its top two principal components.
///
/// Rows are processed in id order, so the output does not depend on the order
/// the vectors were registered in. Each axis's sign is fixed by making its
/// largest-magnitude loading positive.
pub fn project_pca(vectors: &SpaceVectors) -> Result<Vec<ProjectionPoint>, ProjectionError> {
    let n = vectors.len();
    if n < 3 {
        return Err(ProjectionError::InsufficientData(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vectors.ids()[a].cmp(&vectors.ids()[b]));
    let rows: Vec<&[f32]> = order.iter().map(|&i| vectors.row(i)).collect();
    let coords = pca_2d(&rows);
    Ok(order
        .iter()
        .zip(coords)
        .map(|(&i, (x, y))| ProjectionPoint { paper_id: vectors.ids()[i].clone(), x, y })
        .collect())
}

/// Top-2 principal-component scores of `rows`, in input order.
pub fn pca_2d(rows: &[&[f32]]) -> Vec<(f64, f64)> {
    let n = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    let mut mean = vec![0.0f64; d];
    for r in rows {
        for (m, &c) in mean.iter_mut().zip(r.iter()) {
            *m += f64::from(c);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> =
        crate::parallel::map_slice(rows, |r| r.iter().zip(&mean).map(|(&c, m)| f64::from(c) - m).collect());

    let axes = if d <= DENSE_EIGEN_LIMIT {
        covariance_axes(&centered, d)
    } else if n <= DENSE_EIGEN_LIMIT {
        gram_axes(&centered, d)
    } else {
        subspace_axes(&centered, d)
    };
    let axes: Vec<Vec<f64>> = axes.into_iter().map(fix_sign).collect();
    crate::parallel::map_slice(&centered, |c| (dot64(c, &axes[0]), dot64(c, &axes[1])))
}

fn dot64(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fix_sign(mut axis: Vec<f64>) -> Vec<f64> {
    let mut best = 0usize;
    for (i, v) in axis.iter().enumerate() {
        if v.abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis[best] < 0.0 {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
    axis
}

/// Eigenvectors of `m` for its two largest eigenvalues, largest first.
fn top_two(m: DMatrix<f64>) -> Vec<(f64, Vec<f64>)> {
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    idx.into_iter()
        .take(2)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors.column(i).iter().copied().collect()))
        .collect()
}

fn covariance_axes(centered: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    // Partial sums per chunk, combined in chunk order for a deterministic total.
    let partials = crate::parallel::map_chunks(centered, 256, |chunk| {
        let mut acc = vec![0.0f64; d * d];
        for c in chunk {
            for i in 0..d {
                let ci = c[i];
                if ci == 0.0 {
                    continue;
                }
                let row = &mut acc[i * d..(i + 1) * d];
                for (j, cj) in c.iter().enumerate().skip(i) {
                    row[j] += ci * cj;
                }
            }
        }
        acc
    });
    let mut cov = vec![0.0f64; d * d];
    for p in partials {
        cov.iter_mut().zip(p).for_each(|(c, v)| *c += v);
    }
    let m = DMatrix::from_fn(d, d, |i, j| if i <= j { cov[i * d + j] } else { cov[j * d + i] });
    pad_to_two(top_two(m).into_iter().map(|(_, v)| v).collect(), d)
}

fn gram_axes(centered: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let n = centered.len();
    let gram_rows = crate::parallel::map_range(n, |i| (0..n).map(|j| dot64(&centered[i], &centered[j])).collect::<Vec<_>>());
    let g = DMatrix::from_fn(n, n, |i, j| gram_rows[i][j]);
    let axes = top_two(g)
        .into_iter()
        .filter(|(lambda, _)| *lambda > 0.0)
        .map(|(lambda, u)| {
            let mut v = vec![0.0f64; d];
            for (ui, c) in u.iter().zip(centered) {
                for (vj, cj) in v.iter_mut().zip(c) {
                    *vj += ui * cj;
                }
            }
            let s = lambda.sqrt();
            v.iter_mut().for_each(|x| *x /= s);
            v
        })
        .collect();
    pad_to_two(axes, d)
}

fn subspace_axes(centered: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let b = SUBSPACE_BLOCK.min(d);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9ca);
    let mut q = DMatrix::from_fn(d, b, |_, _| rng.random_range(-1.0..1.0));
    q = q.qr().q();
    let mut prev = [f64::NAN; 2];
    let mut ritz = Vec::new();
    for _ in 0..SUBSPACE_MAX_ITERS {
        // Y = X Q (n x b), then Z = X^T Y (d x b).
        let y: Vec<Vec<f64>> = crate::parallel::map_slice(centered, |c| {
            (0..b).map(|k| c.iter().enumerate().map(|(j, x)| x * q[(j, k)]).sum()).collect()
        });
        let t = DMatrix::from_fn(b, b, |i, j| y.iter().map(|r| r[i] * r[j]).sum());
        let partials = crate::parallel::map_chunks(&(0..centered.len()).collect::<Vec<_>>(), 512, |idx| {
            let mut z = vec![0.0f64; d * b];
            for &r in idx {
                for (j, x) in centered[r].iter().enumerate() {
                    for k in 0..b {
                        z[j * b + k] += x * y[r][k];
                    }
                }
            }
            z
        });
        let mut z = vec![0.0f64; d * b];
        for p in partials {
            z.iter_mut().zip(p).for_each(|(a, v)| *a += v);
        }
        let eig = top_two(t);
        ritz = eig.iter().map(|(_, w)| (&q * DMatrix::from_column_slice(b, 1, w)).iter().copied().collect()).collect();
        let now = [eig[0].0, eig.get(1).map_or(0.0, |e| e.0)];
        let converged = (0..2).all(|i| (now[i] - prev[i]).abs() <= SUBSPACE_TOL * now[0].abs().max(1e-300));
        prev = now;
        q = DMatrix::from_row_slice(d, b, &z).qr().q();
        if converged {
            break;
        }
    }
    pad_to_two(ritz, d)
}

/// Degenerate data (all points identical) has no principal axes; use
/// coordinate axes so the output still has two finite columns.
fn pad_to_two(mut axes: Vec<Vec<f64>>, d: usize) -> Vec<Vec<f64>> {
    let mut basis = 0;
    while axes.len() < 2 {
        let mut e = vec![0.0; d];
        if basis < d {
            e[basis] = 1.0;
        }
        basis += 1;
        axes.push(e);
    }
    axes
}

/// Trustworthiness of `points` with respect to the space's vectors: 1 minus
/// the normalized rank penalty of low-dimensional neighbors that are not
/// high-dimensional neighbors. Needs `1 <= k < n / 2`.
pub fn trustworthiness(vectors: &SpaceVectors, points: &[ProjectionPoint], k: usize) -> Result<f64, ProjectionError> {
    let n = points.len();
    if k == 0 || 2 * k >= n {
        return Err(ProjectionError::InvalidParameter(format!("k = {k} must satisfy 1 <= k < n/2 with n = {n}")));
    }
    let mut seen = HashSet::new();
    let rows: Vec<&[f32]> = points
        .iter()
        .map(|p| {
            if !seen.insert(p.paper_id.as_str()) {
                return Err(ProjectionError::InvalidParameter(format!("duplicate point {}", p.paper_id)));
            }
            vectors.row_of(&p.paper_id).map(|r| vectors.row(r)).ok_or_else(|| ProjectionError::MissingVector(p.paper_id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let penalties = crate::parallel::map_range(n, |i| {
        let high: Vec<f64> = (0..n).map(|j| sq_dist(rows[i], rows[j])).collect();
        let mut by_high: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        by_high.sort_by(|&a, &b| high[a].total_cmp(&high[b]).then(a.cmp(&b)));
        let mut rank = vec![0usize; n];
        for (r, &j) in by_high.iter().enumerate() {
            rank[j] = r + 1;
        }
        let low: Vec<f64> = (0..n)
            .map(|j| {
                let (dx, dy) = (points[i].x - points[j].x, points[i].y - points[j].y);
                dx * dx + dy * dy
            })
            .collect();
        let mut by_low: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        by_low.sort_by(|&a, &b| low[a].total_cmp(&low[b]).then(a.cmp(&b)));
        by_low[..k].iter().map(|&j| rank[j].saturating_sub(k) as f64).sum::<f64>()
    });
    let total: f64 = penalties.iter().sum();
    let (nf, kf) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * total)
}

fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{embed_mock, EmbeddingSpace, Provenance};
    use rand::seq::{IndexedRandom, SliceRandom};
    use std::io::Cursor;

    fn corpus(ids: &[&str]) -> Corpus {
        let src: Vec<String> = ids.iter().map(|id| format!(r#"{{"id":"{id}","title":"T {id}"}}"#)).collect();
        Corpus::new().ingested(Cursor::new(src.join("\n"))).unwrap().0
    }

    #[test]
    fn load_valid_and_nan_rows() {
        let c = corpus(&["p1", "p2", "p3"]);
        let src = "{\"id\":\"p1\",\"x\":0.5,\"y\":1}\n{\"id\":\"p2\",\"x\":-2,\"y\":3}\n{\"id\":\"p3\",\"x\":0,\"y\":0}\n";
        let (t, r) = load_precomputed_projection(Cursor::new(src), &c).unwrap();
        assert_eq!(r.accepted, 3);
        assert_eq!(t.get("p2").unwrap().x, -2.0);
        let (t2, _) = load_precomputed_projection(Cursor::new(src), &c).unwrap();
        assert_eq!(t, t2);
        let bad = "{\"id\":\"p1\",\"x\":NaN,\"y\":1}\n{\"id\":\"zz\",\"x\":1,\"y\":1}\n{\"id\":\"p2\",\"x\":1e999,\"y\":1}\n";
        let (t, r) = load_precomputed_projection(Cursor::new(bad), &c).unwrap();
        assert!(t.is_empty());
        assert_eq!(r.rejected.len(), 3);
    }

    fn space_from(rows: &[Vec<f32>]) -> SpaceVectors {
        let mut s = SpaceVectors::new(EmbeddingSpace::new("s", rows[0].len(), Provenance::PrecomputedFile));
        for (i, r) in rows.iter().enumerate() {
            s.insert(format!("p{i:03}"), r).unwrap();
        }
        s
    }

    #[test]
    fn too_few_vectors() {
        let s = space_from(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(project_pca(&s), Err(ProjectionError::InsufficientData(2))));
    }

    fn rank2_rows(n: usize, d: usize) -> Vec<Vec<f32>> {
        // Two orthonormal directions in R^d.
        let mut u = vec![0.0f32; d];
        let mut v = vec![0.0f32; d];
        u[0] = 0.6;
        u[3] = 0.8;
        v[1] = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..n)
            .map(|_| {
                let (a, b): (f32, f32) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                (0..d).map(|j| a * u[j] + b * v[j]).collect()
            })
            .collect()
    }

    fn max_distance_error(s: &SpaceVectors, pts: &[ProjectionPoint]) -> f64 {
        let mut worst = 0.0f64;
        for a in pts {
            for b in pts {
                let (ra, rb) = (s.row(s.row_of(&a.paper_id).unwrap()), s.row(s.row_of(&b.paper_id).unwrap()));
                let high = sq_dist(ra, rb).sqrt();
                let low = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                worst = worst.max((high - low).abs());
            }
        }
        worst
    }

    #[test]
    fn rank_two_distances_preserved() {
        let s = space_from(&rank2_rows(40, 5));
        let pts = project_pca(&s).unwrap();
        assert_eq!(pts.len(), 40);
        assert!(max_distance_error(&s, &pts) < 1e-6);
    }

    #[test]
    fn all_three_solvers_agree_on_rank_two() {
        // Same data through the covariance, Gram, and subspace paths.
        let rows = rank2_rows(30, 5);
        let mut refs: Vec<Vec<f32>> = rows.clone();
        let cov = pca_2d(&refs.iter().map(|r| r.as_slice()).collect::<Vec<_>>());
        let centered: Vec<Vec<f64>> = {
            let d = 5;
            let mut mean = vec![0.0; d];
            for r in &rows {
                for j in 0..d {
                    mean[j] += f64::from(r[j]) / rows.len() as f64;
                }
            }
            rows.iter().map(|r| (0..d).map(|j| f64::from(r[j]) - mean[j]).collect()).collect()
        };
        for axes in [gram_axes(&centered, 5), subspace_axes(&centered, 5)] {
            let axes: Vec<Vec<f64>> = axes.into_iter().map(fix_sign).collect();
            for (c, (x, y)) in centered.iter().zip(&cov) {
                assert!((dot64(c, &axes[0]) - x).abs() < 1e-6);
                assert!((dot64(c, &axes[1]) - y).abs() < 1e-6);
            }
        }
        refs.reverse();
        assert_eq!(pca_2d(&refs.iter().map(|r| r.as_slice()).collect::<Vec<_>>()).len(), 30);
    }

    #[test]
    fn invariant_under_input_reordering() {
        let rows = rank2_rows(25, 6);
        let s = space_from(&rows);
        let mut shuffled = SpaceVectors::new(s.space().clone());
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        for i in order {
            shuffled.insert(format!("p{i:03}"), &rows[i]).unwrap();
        }
        assert_eq!(project_pca(&s).unwrap(), project_pca(&shuffled).unwrap());
    }

    #[test]
    fn invariant_under_rotation_outside_data_subspace() {
        // Data spans coordinates 0..3 of 6; rotate only in the (4, 5) plane.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f32>> = (0..20)
            .map(|_| {
                let mut r = vec![0.0f32; 6];
                for x in r.iter_mut().take(3) {
                    *x = rng.random_range(-1.0..1.0);
                }
                r
            })
            .collect();
        let theta = 0.7f32;
        let rotated: Vec<Vec<f32>> = rows
            .iter()
            .map(|r| {
                let mut o = r.clone();
                o[4] = theta.cos() * r[4] - theta.sin() * r[5];
                o[5] = theta.sin() * r[4] + theta.cos() * r[5];
                o
            })
            .collect();
        let (a, b) = (project_pca(&space_from(&rows)).unwrap(), project_pca(&space_from(&rotated)).unwrap());
        for (p, q) in a.iter().zip(&b) {
            assert!((p.x - q.x).abs() < 1e-9 && (p.y - q.y).abs() < 1e-9);
        }
    }

    #[test]
    fn trustworthiness_identity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f32>> = (0..30).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let s = space_from(&rows);
        let pts: Vec<ProjectionPoint> = (0..s.len())
            .map(|i| ProjectionPoint { paper_id: s.ids()[i].clone(), x: f64::from(s.row(i)[0]), y: f64::from(s.row(i)[1]) })
            .collect();
        assert_eq!(trustworthiness(&s, &pts, 5).unwrap(), 1.0);
        assert!(matches!(trustworthiness(&s, &pts, 30), Err(ProjectionError::InvalidParameter(_))));
        assert!(matches!(trustworthiness(&s, &pts, 0), Err(ProjectionError::InvalidParameter(_))));
    }

    /// Brute-force oracle: trustworthiness straight from the definition with
    /// explicit neighbor sets, compared against the implementation.
    #[test]
    fn trustworthiness_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f32>> = (0..12).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let s = space_from(&rows);
        let pts: Vec<ProjectionPoint> = (0..12)
            .map(|i| ProjectionPoint { paper_id: s.ids()[i].clone(), x: rng.random_range(-1.0..1.0), y: rng.random_range(-1.0..1.0) })
            .collect();
        let k = 3;
        let n = 12usize;
        let mut sum = 0.0;
        for i in 0..n {
            let hd = |j: usize| sq_dist(s.row(i), s.row(j));
            let ld = |j: usize| (pts[i].x - pts[j].x).powi(2) + (pts[i].y - pts[j].y).powi(2);
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            for &j in &others {
                let low_rank = others.iter().filter(|&&m| ld(m) < ld(j)).count() + 1;
                let high_rank = others.iter().filter(|&&m| hd(m) < hd(j)).count() + 1;
                if low_rank <= k && high_rank > k {
                    sum += (high_rank - k) as f64;
                }
            }
        }
        let expected = 1.0 - 2.0 / ((n * k * (2 * n - 3 * k - 1)) as f64) * sum;
        assert!((trustworthiness(&s, &pts, k).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn clustered_mock_pca_beats_shuffle() {
        let space = EmbeddingSpace::mock("mock", 128);
        let mut s = SpaceVectors::new(space.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for i in 0..100 {
            let c = i % 3;
            let vocab: Vec<String> = (0..30).map(|w| format!("c{c}w{w}")).collect();
            let words: Vec<&String> = vocab.choose_multiple(&mut rng, 15).collect();
            let text = words.iter().map(|w| w.as_str()).collect::<Vec<_>>().join(" ");
            s.insert_vector(format!("p{i:03}"), &embed_mock(&text, &space)).unwrap();
        }
        let pts = project_pca(&s).unwrap();
        let t_pca = trustworthiness(&s, &pts, 10).unwrap();
        let mut coords: Vec<(f64, f64)> = pts.iter().map(|p| (p.x, p.y)).collect();
        coords.shuffle(&mut rng);
        let shuffled: Vec<ProjectionPoint> = pts
            .iter()
            .zip(coords)
            .map(|(p, (x, y))| ProjectionPoint { paper_id: p.paper_id.clone(), x, y })
            .collect();
        let t_shuf = trustworthiness(&s, &shuffled, 10).unwrap();
        assert!(t_pca >= 0.8, "pca trustworthiness {t_pca}");
        assert!(t_pca > t_shuf, "{t_pca} vs {t_shuf}");
    }
}
