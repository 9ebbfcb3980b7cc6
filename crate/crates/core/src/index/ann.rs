//! Single-layer navigable proximity graph with beam search.
//!
//! Construction inserts rows in order, in batches. Every row of a batch is
//! searched against the graph as it stood before the batch (in parallel),
//! candidates are merged with the other rows of the same batch, and links are
//! then applied sequentially in row order. The resulting graph depends only on
//! the row order, the config and the seed, never on thread scheduling.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};
use std::io::{Read, Write};
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_seed, score, IndexError, SearchHit, VectorSearch};
use crate::embedding::{EmbeddingVector, SpaceVectors};

pub const ANN_FORMAT_VERSION: u32 = 1;
const ANN_FORMAT_NAME: &str = "paperscope-ann";
const QUERY_ENTRY_POINTS: usize = 8;
const BUILD_ENTRY_POINTS: usize = 8;
const MAX_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnIndexConfig {
    pub neighbors_per_node: usize,
    pub build_beam: usize,
    pub query_beam: usize,
    pub seed: u64,
}

impl Default for AnnIndexConfig {
    fn default() -> Self {
        Self { neighbors_per_node: 16, build_beam: 128, query_beam: 64, seed: 0x5eed }
    }
}

impl AnnIndexConfig {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.neighbors_per_node == 0 || self.build_beam == 0 || self.query_beam == 0 {
            return Err(IndexError::InvalidParameter("ANN parameters must all be at least 1".into()));
        }
        Ok(())
    }

    fn max_degree(&self) -> usize {
        self.neighbors_per_node * 2
    }
}

#[derive(Clone, Copy)]
struct Scored {
    sim: f32,
    node: u32,
}

impl PartialEq for Scored {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scored {}
impl PartialOrd for Scored {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scored {
    // Higher similarity is "greater"; ties favour the lower node index.
    fn cmp(&self, other: &Self) -> Ordering {
        self.sim.total_cmp(&other.sim).then_with(|| other.node.cmp(&self.node))
    }
}

pub struct AnnIndex {
    vectors: Arc<SpaceVectors>,
    config: AnnIndexConfig,
    adjacency: Vec<Vec<u32>>,
    entry_points: Vec<u32>,
}

impl std::fmt::Debug for AnnIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnIndex")
            .field("space", &self.vectors.name())
            .field("nodes", &self.adjacency.len())
            .field("config", &self.config)
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct AnnFile {
    format: String,
    version: u32,
    space: String,
    dimension: usize,
    config: AnnIndexConfig,
    ids: Vec<String>,
    entry_points: Vec<u32>,
    adjacency: Vec<Vec<u32>>,
}

impl AnnIndex {
    pub fn build(vectors: Arc<SpaceVectors>, config: AnnIndexConfig) -> Result<Self, IndexError> {
        config.validate()?;
        let n = vectors.len();
        let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut inserted = 0usize;
        while inserted < n {
            let batch = (inserted / 16).clamp(1, MAX_BATCH).min(n - inserted);
            let rows: Vec<usize> = (inserted..inserted + batch).collect();
            let entries = spread(inserted, BUILD_ENTRY_POINTS);
            let graph = &adjacency;
            let vecs = &*vectors;
            let found = crate::parallel::map_slice(&rows, |&r| {
                let q = vecs.row(r);
                let mut cands = if inserted == 0 {
                    Vec::new()
                } else {
                    beam_search(vecs, graph, q, &entries, config.build_beam, &|_| false)
                };
                for &other in &rows {
                    if other != r {
                        cands.push(Scored { sim: score(q, vecs.row(other)), node: other as u32 });
                    }
                }
                cands.sort_by(|a, b| b.cmp(a));
                select_neighbors(vecs, &cands, config.neighbors_per_node)
            });
            for (&r, neighbors) in rows.iter().zip(found) {
                for &nb in &neighbors {
                    link(&mut adjacency, &vectors, nb as usize, r as u32, config.max_degree());
                }
                // Links added by earlier rows of this batch stay; the fresh selection is merged in.
                let mut own = std::mem::take(&mut adjacency[r]);
                for nb in neighbors {
                    if !own.contains(&nb) {
                        own.push(nb);
                    }
                }
                adjacency[r] = own;
                if adjacency[r].len() > config.max_degree() {
                    prune(&mut adjacency, &vectors, r, config.max_degree());
                }
            }
            inserted += batch;
        }
        let entry_points = query_entries(n, config.seed);
        Ok(Self { vectors, config, adjacency, entry_points })
    }

    pub fn config(&self) -> &AnnIndexConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, row: usize) -> &[u32] {
        &self.adjacency[row]
    }

    pub fn search_ann(
        &self,
        seed: &EmbeddingVector,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<SearchHit>, IndexError> {
        check_seed(&self.vectors, seed, k)?;
        if self.config.query_beam < k {
            return Err(IndexError::InvalidParameter(format!(
                "query_beam {} is smaller than k {k}",
                self.config.query_beam
            )));
        }
        if self.is_empty() {
            return Ok(Vec::new());
        }
        let ids = self.vectors.ids();
        let excluded = |node: u32| exclude.contains(&ids[node as usize]);
        let found = beam_search(
            &self.vectors,
            &self.adjacency,
            &seed.components,
            &self.entry_points,
            self.config.query_beam,
            &excluded,
        );
        let mut hits: Vec<SearchHit> = found
            .into_iter()
            .map(|s| SearchHit { paper_id: ids[s.node as usize].clone(), score: s.sim })
            .collect();
        super::top_k(&mut hits, k);
        Ok(hits)
    }

    /// Writes the versioned index file: space, config, id table, entry points
    /// and adjacency. Vectors are not included; they are re-bound on load.
    pub fn save(&self, out: impl Write) -> Result<(), IndexError> {
        let file = AnnFile {
            format: ANN_FORMAT_NAME.into(),
            version: ANN_FORMAT_VERSION,
            space: self.vectors.name().to_string(),
            dimension: self.vectors.dimension(),
            config: self.config,
            ids: self.vectors.ids().to_vec(),
            entry_points: self.entry_points.clone(),
            adjacency: self.adjacency.clone(),
        };
        serde_json::to_writer(out, &file).map_err(|e| IndexError::Format(e.to_string()))
    }

    /// Reads an index file and binds it to `vectors`, which must hold the
    /// same ids in the same order.
    pub fn load(input: impl Read, vectors: Arc<SpaceVectors>) -> Result<Self, IndexError> {
        let file: AnnFile = serde_json::from_reader(input).map_err(|e| IndexError::Format(e.to_string()))?;
        if file.format != ANN_FORMAT_NAME {
            return Err(IndexError::Format(format!("not an ANN index file: {}", file.format)));
        }
        if file.version != ANN_FORMAT_VERSION {
            return Err(IndexError::Format(format!("unsupported index version {}", file.version)));
        }
        if file.space != vectors.name() || file.dimension != vectors.dimension() {
            return Err(IndexError::Format(format!(
                "index is for {}/{}d, vectors are {}/{}d",
                file.space,
                file.dimension,
                vectors.name(),
                vectors.dimension()
            )));
        }
        if file.ids != vectors.ids() {
            return Err(IndexError::Format("index id table does not match the loaded vectors".into()));
        }
        let n = file.ids.len() as u32;
        let in_range = |v: &u32| *v < n;
        if file.adjacency.len() != file.ids.len()
            || !file.adjacency.iter().flatten().all(in_range)
            || !file.entry_points.iter().all(in_range)
        {
            return Err(IndexError::Format("adjacency references rows outside the id table".into()));
        }
        file.config.validate()?;
        Ok(Self { vectors, config: file.config, adjacency: file.adjacency, entry_points: file.entry_points })
    }
}

impl VectorSearch for AnnIndex {
    fn vectors(&self) -> &SpaceVectors {
        &self.vectors
    }

    fn search(&self, seed: &EmbeddingVector, k: usize, exclude: &HashSet<String>) -> Result<Vec<SearchHit>, IndexError> {
        self.search_ann(seed, k, exclude)
    }
}

/// Evenly spaced rows among the first `inserted`.
fn spread(inserted: usize, count: usize) -> Vec<u32> {
    if inserted == 0 {
        return Vec::new();
    }
    let mut v: Vec<u32> = (0..count.min(inserted)).map(|j| (j * inserted / count.min(inserted)) as u32).collect();
    v.dedup();
    v
}

fn query_entries(n: usize, seed: u64) -> Vec<u32> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<u32> = sample(&mut rng, n, QUERY_ENTRY_POINTS.min(n)).into_iter().map(|i| i as u32).collect();
    v.sort_unstable();
    v
}

/// Greedy best-first search keeping the `beam` best non-excluded nodes.
/// Excluded nodes are still traversed so they never cut off a region.
fn beam_search(
    vectors: &SpaceVectors,
    graph: &[Vec<u32>],
    query: &[f32],
    entries: &[u32],
    beam: usize,
    excluded: &dyn Fn(u32) -> bool,
) -> Vec<Scored> {
    let mut visited = vec![false; graph.len()];
    let mut frontier: BinaryHeap<Scored> = BinaryHeap::new();
    // Min-heap over the current results.
    let mut best: BinaryHeap<Reverse<Scored>> = BinaryHeap::new();

    let visit = |node: u32, frontier: &mut BinaryHeap<Scored>, best: &mut BinaryHeap<Reverse<Scored>>| {
        let s = Scored { sim: score(query, vectors.row(node as usize)), node };
        if best.len() >= beam && s <= best.peek().expect("full beam").0 {
            return;
        }
        frontier.push(s);
        if !excluded(node) {
            best.push(Reverse(s));
            if best.len() > beam {
                best.pop();
            }
        }
    };

    for &e in entries {
        if !std::mem::replace(&mut visited[e as usize], true) {
            visit(e, &mut frontier, &mut best);
        }
    }
    while let Some(cur) = frontier.pop() {
        if best.len() >= beam && cur < best.peek().expect("full beam").0 {
            break;
        }
        for &nb in &graph[cur.node as usize] {
            if !std::mem::replace(&mut visited[nb as usize], true) {
                visit(nb, &mut frontier, &mut best);
            }
        }
    }
    let mut out: Vec<Scored> = best.into_iter().map(|r| r.0).collect();
    out.sort_by(|a, b| b.cmp(a));
    out
}

/// Diversity heuristic: keep a candidate only if it is closer to the query
/// than to every neighbor already kept, then top up with the best leftovers.
fn select_neighbors(vectors: &SpaceVectors, sorted: &[Scored], m: usize) -> Vec<u32> {
    let mut kept: Vec<Scored> = Vec::with_capacity(m);
    let mut leftover: Vec<u32> = Vec::new();
    for &c in sorted {
        if kept.len() >= m {
            break;
        }
        let row = vectors.row(c.node as usize);
        let diverse = kept.iter().all(|k| score(row, vectors.row(k.node as usize)) < c.sim);
        if diverse {
            kept.push(c);
        } else {
            leftover.push(c.node);
        }
    }
    let mut out: Vec<u32> = kept.into_iter().map(|s| s.node).collect();
    for node in leftover {
        if out.len() >= m {
            break;
        }
        out.push(node);
    }
    out
}

fn link(adjacency: &mut [Vec<u32>], vectors: &SpaceVectors, from: usize, to: u32, max_degree: usize) {
    if adjacency[from].contains(&to) {
        return;
    }
    adjacency[from].push(to);
    if adjacency[from].len() > max_degree {
        prune(adjacency, vectors, from, max_degree);
    }
}

fn prune(adjacency: &mut [Vec<u32>], vectors: &SpaceVectors, node: usize, max_degree: usize) {
    let row = vectors.row(node);
    let mut cands: Vec<Scored> = adjacency[node]
        .iter()
        .map(|&nb| Scored { sim: score(row, vectors.row(nb as usize)), node: nb })
        .collect();
    cands.sort_by(|a, b| b.cmp(a));
    adjacency[node] = select_neighbors(vectors, &cands, max_degree);
}

/// Mean recall@k of `approx` against `exact` result lists.
pub fn mean_recall(exact: &[Vec<SearchHit>], approx: &[Vec<SearchHit>]) -> f64 {
    let total: f64 = exact
        .iter()
        .zip(approx)
        .map(|(e, a)| {
            if e.is_empty() {
                return 1.0;
            }
            let truth: HashSet<&str> = e.iter().map(|h| h.paper_id.as_str()).collect();
            a.iter().filter(|h| truth.contains(h.paper_id.as_str())).count() as f64 / e.len() as f64
        })
        .sum();
    total / exact.len().max(1) as f64
}
