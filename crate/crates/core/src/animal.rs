//! Greedy lattice animals over dependent Bernoulli edge fields.
//!
//! A lattice animal here is a self-avoiding path from the origin of at most L
//! edges; its weight is the number of marked edges it covers. The maximal
//! weight controls the total resampling cost when the marks are radius-level
//! indicators, so we verify the linear-in-L bound empirically.

use crate::env::CoupledEnvironment;
use crate::geodesic::{distance_field, GeodesicError};
use crate::env::{view_at, Mode};
use crate::lattice::{stream, BoxLattice, Edge, SimulationParams, StreamDomain, Vertex};
use crate::radius::radius;
use rand::Rng;

/// Per-edge Bernoulli indicators at a fixed level N.
#[derive(Debug, Clone)]
pub struct AnimalField {
    pub level: u32,
    pub indicators: Vec<bool>,
    /// Fraction of marked edges in this field.
    pub density: f64,
}

impl AnimalField {
    fn from_indicators(level: u32, indicators: Vec<bool>) -> Self {
        let density = indicators.iter().filter(|&&b| b).count() as f64 / indicators.len() as f64;
        AnimalField {
            level,
            indicators,
            density,
        }
    }
}

/// Synthetic AN-dependent field: vertices are tiled into cubes of side A*N
/// and every edge inherits the Bernoulli mark of its representative's cube.
/// Edges in distinct cubes are independent; edges sharing a cube sit within
/// distance A*N of each other, so the dependence range is exactly A*N.
pub fn synthetic_field(
    lattice: &BoxLattice,
    a: u32,
    level: u32,
    q: f64,
    seed: u64,
    sample_index: u64,
) -> AnimalField {
    let block = (a * level) as i64;
    assert!(block >= 1);
    let width = 2 * lattice.side + 1;
    let blocks_per_axis = width.div_euclid(block) + 1;
    let n_blocks = (blocks_per_axis as usize).pow(lattice.d as u32);
    let mut rng = stream(seed, StreamDomain::AnimalField, sample_index, level as u64);
    let marks: Vec<bool> = (0..n_blocks).map(|_| rng.random::<f64>() < q).collect();
    let block_of = |v: Vertex| -> usize {
        let mut idx = 0usize;
        for axis in 0..lattice.d {
            let c = lattice.coord(v, axis) + lattice.side;
            idx = idx * blocks_per_axis as usize + c.div_euclid(block) as usize;
        }
        idx
    };
    let indicators = (0..lattice.n_edges())
        .map(|e| marks[block_of(lattice.edge_rep(e))])
        .collect();
    AnimalField::from_indicators(level, indicators)
}

/// Field derived from the truncated radius: an edge is marked at level N when
/// its truncated radius equals N-1, so the levels partition the edges.
pub fn derived_field(
    lattice: &BoxLattice,
    params: &SimulationParams,
    env: &CoupledEnvironment,
    t: f64,
    level: u32,
) -> AnimalField {
    let indicators = (0..lattice.n_edges())
        .map(|e| radius(lattice, params, env, e, t).hat_r == level - 1)
        .collect();
    AnimalField::from_indicators(level, indicators)
}

/// Max over edges of the per-edge mark frequency across fields.
pub fn empirical_q(lattice: &BoxLattice, fields: &[AnimalField]) -> f64 {
    assert!(!fields.is_empty());
    let mut best = 0usize;
    for e in 0..lattice.n_edges() {
        let hits = fields.iter().filter(|f| f.indicators[e]).count();
        best = best.max(hits);
    }
    best as f64 / fields.len() as f64
}

#[derive(Debug, Clone)]
pub struct AnimalResult {
    pub l: usize,
    pub level: u32,
    pub gamma: u32,
    /// Vertex sequence starting at the origin.
    pub witness: Vec<Vertex>,
    pub exact: bool,
}

pub const EXACT_LIMIT: usize = 14;
const BEAM_WIDTH: usize = 128;

/// Maximal number of marked edges over self-avoiding paths of at most `l`
/// edges from the origin. Exact depth-first search with a remaining-steps
/// bound for small `l`; beam-search lower bound, flagged inexact, beyond.
pub fn greedy_animal(lattice: &BoxLattice, field: &AnimalField, l: usize) -> AnimalResult {
    let origin = lattice
        .vertex_index(&vec![0; lattice.d])
        .expect("origin is in the box");
    if l <= EXACT_LIMIT {
        let mut best = 0u32;
        let mut best_path = vec![origin];
        let mut path = vec![origin];
        let mut on_path = vec![false; lattice.n_vertices()];
        on_path[origin] = true;
        dfs(
            lattice, field, l, origin, 0, &mut path, &mut on_path, &mut best, &mut best_path,
        );
        AnimalResult {
            l,
            level: field.level,
            gamma: best,
            witness: best_path,
            exact: true,
        }
    } else {
        beam(lattice, field, l, origin)
    }
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    lattice: &BoxLattice,
    field: &AnimalField,
    l: usize,
    v: Vertex,
    gamma: u32,
    path: &mut Vec<Vertex>,
    on_path: &mut [bool],
    best: &mut u32,
    best_path: &mut Vec<Vertex>,
) {
    if gamma > *best {
        *best = gamma;
        best_path.clone_from(path);
    }
    let steps_left = l - (path.len() - 1);
    // Even marking every remaining step cannot beat the incumbent.
    if steps_left == 0 || gamma + steps_left as u32 <= *best {
        return;
    }
    let mut inc = Vec::with_capacity(2 * lattice.d);
    lattice.incident(v, &mut inc);
    for &(e, w) in &inc {
        if on_path[w] {
            continue;
        }
        on_path[w] = true;
        path.push(w);
        dfs(
            lattice,
            field,
            l,
            w,
            gamma + field.indicators[e] as u32,
            path,
            on_path,
            best,
            best_path,
        );
        path.pop();
        on_path[w] = false;
    }
}

fn beam(lattice: &BoxLattice, field: &AnimalField, l: usize, origin: Vertex) -> AnimalResult {
    #[derive(Clone)]
    struct State {
        gamma: u32,
        path: Vec<Vertex>,
    }
    let mut frontier = vec![State {
        gamma: 0,
        path: vec![origin],
    }];
    let mut best = frontier[0].clone();
    let mut inc = Vec::with_capacity(2 * lattice.d);
    for _ in 0..l {
        let mut next: Vec<State> = Vec::new();
        for state in &frontier {
            let v = *state.path.last().unwrap();
            lattice.incident(v, &mut inc);
            for &(e, w) in &inc {
                if state.path.contains(&w) {
                    continue;
                }
                let mut path = state.path.clone();
                path.push(w);
                next.push(State {
                    gamma: state.gamma + field.indicators[e] as u32,
                    path,
                });
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_by(|a, b| b.gamma.cmp(&a.gamma).then(a.path.cmp(&b.path)));
        next.truncate(BEAM_WIDTH);
        if next[0].gamma > best.gamma {
            best = next[0].clone();
        }
        frontier = next;
    }
    AnimalResult {
        l,
        level: field.level,
        gamma: best.gamma,
        witness: best.path,
        exact: false,
    }
}

#[derive(Debug, Clone)]
pub struct BoundRow {
    pub l: usize,
    pub level: u32,
    pub mean_gamma: f64,
    pub q: f64,
    /// mean_gamma / (L * N^d * q^(1/d)); zero when q is zero.
    pub ratio: f64,
}

/// Empirical check of the linear greedy-animal bound on synthetic
/// AN-dependent fields across (L, N) cells.
pub fn animal_bound_check(
    lattice: &BoxLattice,
    a: u32,
    q: f64,
    seed: u64,
    samples: u64,
    levels: &[u32],
    lengths: &[usize],
) -> Vec<BoundRow> {
    let mut rows = Vec::new();
    for &level in levels {
        let fields: Vec<AnimalField> = (0..samples)
            .map(|s| synthetic_field(lattice, a, level, q, seed, s))
            .collect();
        let q_emp = empirical_q(lattice, &fields);
        for &l in lengths {
            let mean_gamma = fields
                .iter()
                .map(|f| greedy_animal(lattice, f, l).gamma as f64)
                .sum::<f64>()
                / samples as f64;
            let denom = l as f64 * (level as f64).powi(lattice.d as i32) * q_emp.powf(1.0 / lattice.d as f64);
            let ratio = if q_emp == 0.0 { 0.0 } else { mean_gamma / denom };
            rows.push(BoundRow {
                l,
                level,
                mean_gamma,
                q: q_emp,
                ratio,
            });
        }
    }
    rows
}

/// One realized geodesic between the given vertices: walk back from `b`
/// along tight edges, smallest neighbor id first for determinism.
pub fn extract_path(
    lattice: &BoxLattice,
    env: &CoupledEnvironment,
    t: f64,
    mode: Mode,
    a: Vertex,
    b: Vertex,
) -> Result<Vec<Edge>, GeodesicError> {
    let view = view_at(env, t, mode);
    let field = distance_field(lattice, &view, a);
    if field.dist[b] == u32::MAX {
        return Err(GeodesicError::Unreachable);
    }
    let mut edges = Vec::new();
    let mut cur = b;
    let mut inc = Vec::with_capacity(2 * lattice.d);
    while cur != a {
        lattice.incident(cur, &mut inc);
        let mut step = None;
        for &(e, w) in &inc {
            if field.dist[w] != u32::MAX
                && field.dist[w] + view.cost(e) == field.dist[cur]
                && step.map_or(true, |(_, best)| w < best)
            {
                step = Some((e, w));
            }
        }
        let (e, w) = step.expect("finite distance implies a tight predecessor");
        edges.push(e);
        cur = w;
    }
    edges.reverse();
    Ok(edges)
}

/// Second moment of the squared-radius sum along a realized geodesic,
/// normalized by the squared path length.
pub fn geodesic_second_moment(
    lattice: &BoxLattice,
    params: &SimulationParams,
    envs: &[(CoupledEnvironment, Vertex, Vertex)],
    t: f64,
) -> f64 {
    let mut total = 0.0;
    let mut used = 0usize;
    for (env, a, b) in envs {
        let Ok(path) = extract_path(lattice, env, t, Mode::Truncated(params.m), *a, *b) else {
            continue;
        };
        if path.is_empty() {
            continue;
        }
        let sum: f64 = path
            .iter()
            .map(|&e| {
                let r = radius(lattice, params, env, e, t).hat_r as f64;
                r * r
            })
            .sum();
        total += (sum * sum) / (path.len() as f64 * path.len() as f64);
        used += 1;
    }
    assert!(used > 0, "no usable geodesic in the environment set");
    total / used as f64
}
