//! Cluster analysis of one environment view: union-find labeling, the
//! giant-cluster proxy for the infinite cluster, and regularized points.

use crate::env::EnvironmentView;
use crate::lattice::{BoxLattice, Edge, Vertex};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("no giant cluster in this view")]
    NoGiantCluster,
}

struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let gp = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = gp;
            x = gp;
        }
        x
    }

    fn unite(&mut self, x: u32, y: u32) {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return;
        }
        if self.rank[rx as usize] < self.rank[ry as usize] {
            self.parent[rx as usize] = ry;
        } else if self.rank[rx as usize] > self.rank[ry as usize] {
            self.parent[ry as usize] = rx;
        } else {
            self.parent[ry as usize] = rx;
            self.rank[rx as usize] += 1;
        }
    }
}

/// Connected components of the open subgraph of one view.
#[derive(Debug, Clone)]
pub struct ClusterLabeling {
    /// Per-vertex cluster id in `0..n_clusters`.
    pub label: Vec<u32>,
    pub sizes: Vec<u32>,
    /// Minimal (lexicographically smallest) vertex of each cluster.
    pub min_vertex: Vec<Vertex>,
    /// Per-cluster bitmask of axes the cluster crosses (touches both faces).
    pub crossing_axes: Vec<u32>,
    /// The selected giant cluster, when one exists.
    pub giant: Option<u32>,
    d: usize,
}

impl ClusterLabeling {
    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn crosses_all_axes(&self, cluster: u32) -> bool {
        self.crossing_axes[cluster as usize] == (1 << self.d) - 1
    }

    pub fn in_giant(&self, v: Vertex) -> bool {
        match self.giant {
            Some(g) => self.label[v] == g,
            None => false,
        }
    }

    /// Vertices grouped by cluster id.
    pub fn cluster_vertices(&self) -> Vec<Vec<Vertex>> {
        let mut out = vec![Vec::new(); self.n_clusters()];
        for (v, &c) in self.label.iter().enumerate() {
            out[c as usize].push(v);
        }
        out
    }
}

/// Exact connected components of the open subgraph. The giant proxy is the
/// unique cluster crossing all axes when there is exactly one such cluster,
/// otherwise the maximum-size cluster (ties to the smallest minimal vertex).
/// A view with no open edge has no giant.
pub fn label_clusters(lattice: &BoxLattice, view: &EnvironmentView) -> ClusterLabeling {
    let n = lattice.n_vertices();
    let mut ds = DisjointSet::new(n);
    for e in 0..lattice.n_edges() {
        if view.is_open(e) {
            let (u, v) = lattice.endpoints(e);
            ds.unite(u as u32, v as u32);
        }
    }
    // Renumber roots in order of first appearance (ascending min vertex).
    let mut label = vec![u32::MAX; n];
    let mut root_id = vec![u32::MAX; n];
    let mut sizes: Vec<u32> = Vec::new();
    let mut min_vertex: Vec<Vertex> = Vec::new();
    for v in 0..n {
        let r = ds.find(v as u32) as usize;
        if root_id[r] == u32::MAX {
            root_id[r] = sizes.len() as u32;
            sizes.push(0);
            min_vertex.push(v);
        }
        let c = root_id[r];
        label[v] = c;
        sizes[c as usize] += 1;
    }
    let mut crossing_axes = vec![0u32; sizes.len()];
    let d = lattice.d;
    let mut lo = vec![vec![i64::MAX; sizes.len()]; d];
    let mut hi = vec![vec![i64::MIN; sizes.len()]; d];
    for v in 0..n {
        let c = label[v] as usize;
        for a in 0..d {
            let coord = lattice.coord(v, a);
            lo[a][c] = lo[a][c].min(coord);
            hi[a][c] = hi[a][c].max(coord);
        }
    }
    for c in 0..sizes.len() {
        for a in 0..d {
            if lo[a][c] == -lattice.side && hi[a][c] == lattice.side {
                crossing_axes[c] |= 1 << a;
            }
        }
    }
    let all_axes = (1u32 << d) - 1;
    let crossers: Vec<u32> = (0..sizes.len() as u32)
        .filter(|&c| crossing_axes[c as usize] == all_axes && sizes[c as usize] > 1)
        .collect();
    let giant = if sizes.iter().all(|&s| s == 1) {
        None
    } else if crossers.len() == 1 {
        Some(crossers[0])
    } else {
        // Max size; ids are already ordered by minimal vertex, so the first
        // maximum wins the tie.
        let mut best = 0u32;
        for c in 1..sizes.len() as u32 {
            if sizes[c as usize] > sizes[best as usize] {
                best = c;
            }
        }
        Some(best)
    };
    ClusterLabeling {
        label,
        sizes,
        min_vertex,
        crossing_axes,
        giant,
        d,
    }
}

/// The regularized point of a source vertex: closest giant-cluster vertex in
/// l-infinity distance, lexicographically smallest among minimizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegularizedPoint {
    pub source: Vertex,
    pub target: Vertex,
    pub displacement: i64,
}

pub fn regularize(
    lattice: &BoxLattice,
    labeling: &ClusterLabeling,
    z: Vertex,
) -> Result<RegularizedPoint, ClusterError> {
    let giant = labeling.giant.ok_or(ClusterError::NoGiantCluster)?;
    for r in 0..=2 * lattice.side {
        // window_vertices returns ascending ids = ascending lex order, so the
        // first hit on the shell is the deterministic choice.
        for v in lattice.window_vertices(z, r) {
            if lattice.linf(v, z) == r && labeling.label[v] == giant {
                return Ok(RegularizedPoint {
                    source: z,
                    target: v,
                    displacement: r,
                });
            }
        }
    }
    unreachable!("giant cluster is nonempty")
}

/// Regularized point in the view with edge `e` forced closed.
pub fn regularize_with_edge_closed(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    e: Edge,
    z: Vertex,
) -> Result<RegularizedPoint, ClusterError> {
    let closed = view.with_override(e, crate::env::OverrideState::Closed);
    let labeling = label_clusters(lattice, &closed);
    regularize(lattice, &labeling, z)
}

/// Bridges of the open subgraph: open edges whose removal disconnects their
/// cluster. Closed edges are reported as non-bridges.
pub fn open_bridges(lattice: &BoxLattice, view: &EnvironmentView) -> Vec<bool> {
    let n = lattice.n_vertices();
    let mut bridge = vec![false; lattice.n_edges()];
    let mut disc = vec![u32::MAX; n];
    let mut low = vec![0u32; n];
    let mut timer = 0u32;
    let mut incident = Vec::with_capacity(2 * lattice.d);
    // Iterative DFS; each frame remembers the edge used to enter the vertex.
    let mut stack: Vec<(Vertex, Edge, usize)> = Vec::new();
    let mut adj_cache: Vec<Vec<(Edge, Vertex)>> = Vec::new();
    for start in 0..n {
        if disc[start] != u32::MAX {
            continue;
        }
        disc[start] = timer;
        low[start] = timer;
        timer += 1;
        adj_cache.clear();
        lattice.incident(start, &mut incident);
        adj_cache.push(incident.iter().filter(|(e, _)| view.is_open(*e)).cloned().collect());
        stack.push((start, usize::MAX, 0));
        while let Some(&(v, enter_edge, i)) = stack.last() {
            let depth = stack.len() - 1;
            if i < adj_cache[depth].len() {
                let (e, w) = adj_cache[depth][i];
                stack[depth].2 += 1;
                if e == enter_edge {
                    continue;
                }
                if disc[w] == u32::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    lattice.incident(w, &mut incident);
                    let adj: Vec<(Edge, Vertex)> = incident
                        .iter()
                        .filter(|(e2, _)| view.is_open(*e2))
                        .cloned()
                        .collect();
                    if adj_cache.len() > depth + 1 {
                        adj_cache[depth + 1] = adj;
                    } else {
                        adj_cache.push(adj);
                    }
                    stack.push((w, e, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if let Some(&(parent, _, _)) = stack.last() {
                    low[parent] = low[parent].min(low[v]);
                    if low[v] > disc[parent] {
                        bridge[enter_edge] = true;
                    }
                }
            }
        }
    }
    bridge
}
