//! Shortest paths on environment views and exact geodesic-set computation.
//!
//! Chemical mode is plain breadth-first search on the open subgraph.
//! Truncated mode gives every edge a finite cost in {1, M}, so distances are
//! always finite inside the box; the solver is a bucket queue keyed on
//! distance mod (M+1), which is exact for this two-valued cost structure.

use crate::cluster::{label_clusters, regularize, ClusterError};
use crate::env::{view_at, CoupledEnvironment, EnvironmentView, GenerationTag, Mode};
use crate::lattice::{BoxLattice, Edge, SimulationParams, Vertex};
use std::collections::VecDeque;
use thiserror::Error;

pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeodesicError {
    #[error("endpoints are not connected in this view")]
    Unreachable,
    #[error("summaries come from different environments")]
    MismatchedEnvironments,
}

/// Single-source distances in one view.
#[derive(Debug, Clone)]
pub struct DistanceField {
    pub source: Vertex,
    pub mode: Mode,
    pub dist: Vec<u32>,
    pub tag: GenerationTag,
}

fn bfs(lattice: &BoxLattice, view: &EnvironmentView, sources: &[Vertex], forbid: Option<Edge>) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; lattice.n_vertices()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    let mut inc = Vec::with_capacity(2 * lattice.d);
    while let Some(v) = queue.pop_front() {
        let dv = dist[v];
        lattice.incident(v, &mut inc);
        for &(e, w) in &inc {
            if Some(e) == forbid || !view.is_open(e) {
                continue;
            }
            if dist[w] == UNREACHABLE {
                dist[w] = dv + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

fn dial(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    m: u32,
    sources: &[Vertex],
    forbid: Option<Edge>,
) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; lattice.n_vertices()];
    let ring = (m + 1) as usize;
    let mut buckets: Vec<Vec<Vertex>> = vec![Vec::new(); ring];
    let mut pending = 0usize;
    for &s in sources {
        dist[s] = 0;
        buckets[0].push(s);
        pending += 1;
    }
    let mut cur = 0u32;
    let mut inc = Vec::with_capacity(2 * lattice.d);
    while pending > 0 {
        let slot = (cur as usize) % ring;
        while let Some(v) = buckets[slot].pop() {
            pending -= 1;
            if dist[v] != cur {
                continue; // stale entry, vertex already settled cheaper
            }
            lattice.incident(v, &mut inc);
            for &(e, w) in &inc {
                if Some(e) == forbid {
                    continue;
                }
                let nd = cur + view.cost(e);
                if nd < dist[w] {
                    dist[w] = nd;
                    buckets[(nd as usize) % ring].push(w);
                    pending += 1;
                }
            }
        }
        cur += 1;
    }
    dist
}

fn shortest(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    sources: &[Vertex],
    forbid: Option<Edge>,
) -> Vec<u32> {
    match view.mode {
        Mode::Chemical => bfs(lattice, view, sources, forbid),
        Mode::Truncated(m) => dial(lattice, view, m, sources, forbid),
    }
}

pub fn distance_field(lattice: &BoxLattice, view: &EnvironmentView, source: Vertex) -> DistanceField {
    DistanceField {
        source,
        mode: view.mode,
        dist: shortest(lattice, view, &[source], None),
        tag: view.env.tag(),
    }
}

/// Multi-source variant; dist(v) = min over sources.
pub fn multi_source_field(lattice: &BoxLattice, view: &EnvironmentView, sources: &[Vertex]) -> Vec<u32> {
    shortest(lattice, view, sources, None)
}

/// Point-to-point distance with one edge removed from the graph.
pub fn distance_avoiding(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    a: Vertex,
    b: Vertex,
    forbidden: Edge,
) -> u32 {
    shortest(lattice, view, &[a], Some(forbidden))[b]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllMethod {
    /// Recompute the distance with each candidate edge removed. Exact.
    Deletion,
    /// Count geodesics through each edge modulo two 61-bit primes along the
    /// tight-edge DAG; fall back to deletion when the moduli disagree or a
    /// count hits zero mod a prime.
    Counting,
}

/// Geodesic structure between two (already regularized) endpoints.
#[derive(Debug, Clone)]
pub struct GeodesicSummary {
    pub a: Vertex,
    pub b: Vertex,
    pub distance: u32,
    /// Edges on at least one geodesic, sorted ascending.
    pub some: Vec<Edge>,
    /// Edges on every geodesic, sorted ascending.
    pub all: Vec<Edge>,
    /// Fewest and most edges over all geodesics (they differ in truncated
    /// mode, where hop count is not the objective).
    pub min_edges: u32,
    pub max_edges: u32,
    pub mode: Mode,
    pub t: f64,
    pub tag: GenerationTag,
}

const P1: u64 = 2305843009213693951; // 2^61 - 1
const P2: u64 = 2305843009213693921; // 2^61 - 31

fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn edge_weight(view: &EnvironmentView, e: Edge) -> Option<u32> {
    match view.mode {
        Mode::Chemical => view.is_open(e).then_some(1),
        Mode::Truncated(_) => Some(view.cost(e)),
    }
}

pub fn geodesic_summary(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    a: Vertex,
    b: Vertex,
) -> Result<GeodesicSummary, GeodesicError> {
    geodesic_summary_with_method(lattice, view, a, b, AllMethod::Deletion)
}

pub fn geodesic_summary_with_method(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    a: Vertex,
    b: Vertex,
    method: AllMethod,
) -> Result<GeodesicSummary, GeodesicError> {
    let df = shortest(lattice, view, &[a], None);
    if df[b] == UNREACHABLE {
        return Err(GeodesicError::Unreachable);
    }
    let db = shortest(lattice, view, &[b], None);
    let dist = df[b];
    debug_assert_eq!(db[a], dist);

    // Tight directed edges: (tail, head, edge) with df[tail] + w + db[head]
    // hitting the optimum. At most one orientation can be tight since w >= 1.
    let mut tight: Vec<(Vertex, Vertex, Edge)> = Vec::new();
    let mut some: Vec<Edge> = Vec::new();
    for e in 0..lattice.n_edges() {
        let Some(w) = edge_weight(view, e) else { continue };
        let (u, v) = lattice.endpoints(e);
        if df[u] != UNREACHABLE && db[v] != UNREACHABLE && df[u] + w + db[v] == dist {
            tight.push((u, v, e));
            some.push(e);
        } else if df[v] != UNREACHABLE && db[u] != UNREACHABLE && df[v] + w + db[u] == dist {
            tight.push((v, u, e));
            some.push(e);
        }
    }
    // Process heads in increasing forward distance; tails settle first.
    tight.sort_by_key(|&(_, head, _)| df[head]);

    // Hop-count extremes over geodesics, DP along the tight DAG.
    let n = lattice.n_vertices();
    let mut min_e = vec![u32::MAX; n];
    let mut max_e = vec![u32::MAX; n];
    min_e[a] = 0;
    max_e[a] = 0;
    for &(tail, head, _) in &tight {
        if min_e[tail] == u32::MAX {
            continue;
        }
        let (lo, hi) = (min_e[tail] + 1, max_e[tail] + 1);
        if min_e[head] == u32::MAX {
            min_e[head] = lo;
            max_e[head] = hi;
        } else {
            min_e[head] = min_e[head].min(lo);
            max_e[head] = max_e[head].max(hi);
        }
    }
    let (min_edges, max_edges) = (min_e[b], max_e[b]);

    let all = match method {
        AllMethod::Deletion => some
            .iter()
            .copied()
            .filter(|&e| distance_avoiding(lattice, view, a, b, e) > dist)
            .collect(),
        AllMethod::Counting => all_by_counting(lattice, view, a, b, dist, &tight, &some),
    };

    Ok(GeodesicSummary {
        a,
        b,
        distance: dist,
        some,
        all,
        min_edges,
        max_edges,
        mode: view.mode,
        t: view.t,
        tag: view.env.tag(),
    })
}

#[allow(clippy::too_many_arguments)]
fn all_by_counting(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    a: Vertex,
    b: Vertex,
    dist: u32,
    tight: &[(Vertex, Vertex, Edge)],
    some: &[Edge],
) -> Vec<Edge> {
    let n = lattice.n_vertices();
    let mut cf = vec![[0u64; 2]; n];
    let mut cb = vec![[0u64; 2]; n];
    cf[a] = [1, 1];
    cb[b] = [1, 1];
    // Forward counts in increasing df order (tight is pre-sorted by df[head]).
    for &(tail, head, _) in tight {
        cf[head][0] = (cf[head][0] + cf[tail][0]) % P1;
        cf[head][1] = (cf[head][1] + cf[tail][1]) % P2;
    }
    for &(tail, head, _) in tight.iter().rev() {
        cb[tail][0] = (cb[tail][0] + cb[head][0]) % P1;
        cb[tail][1] = (cb[tail][1] + cb[head][1]) % P2;
    }
    let total = cf[b];
    let mut through: std::collections::HashMap<Edge, [u64; 2]> = std::collections::HashMap::new();
    for &(tail, head, e) in tight {
        through.insert(
            e,
            [mulmod(cf[tail][0], cb[head][0], P1), mulmod(cf[tail][1], cb[head][1], P2)],
        );
    }
    some.iter()
        .copied()
        .filter(|e| {
            let th = through[e];
            let verdict = [th[0] == total[0], th[1] == total[1]];
            let zeroish = th[0] == 0 || th[1] == 0 || total[0] == 0 || total[1] == 0;
            if verdict[0] != verdict[1] || zeroish {
                distance_avoiding(lattice, view, a, b, *e) > dist
            } else {
                verdict[0]
            }
        })
        .collect()
}

/// Size of the intersection of the two all-geodesic sets. Both summaries must
/// come from the same coupled environment.
pub fn overlap(s: &GeodesicSummary, t: &GeodesicSummary) -> Result<usize, GeodesicError> {
    if s.tag != t.tag {
        return Err(GeodesicError::MismatchedEnvironments);
    }
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < s.all.len() && j < t.all.len() {
        match s.all[i].cmp(&t.all[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Ok(count)
}

/// Regularized endpoints of the standard observable at noise level t: the
/// giant-cluster points closest to -n*x and +n*x.
pub fn regularized_endpoints(
    lattice: &BoxLattice,
    params: &SimulationParams,
    env: &CoupledEnvironment,
    t: f64,
) -> Result<(Vertex, Vertex), ClusterError> {
    let view = view_at(env, t, Mode::Chemical);
    let labeling = label_clusters(lattice, &view);
    let a = lattice
        .vertex_index(&params.endpoint_a())
        .expect("endpoint inside box");
    let b = lattice
        .vertex_index(&params.endpoint_b())
        .expect("endpoint inside box");
    let ra = regularize(lattice, &labeling, a)?;
    let rb = regularize(lattice, &labeling, b)?;
    Ok((ra.target, rb.target))
}

/// True when the chemical-distance geodesic structure and the truncated one
/// coincide at noise level t: equal distance, equal SOME, equal ALL.
pub fn compare_geodesic_sets(
    lattice: &BoxLattice,
    params: &SimulationParams,
    env: &CoupledEnvironment,
    t: f64,
) -> Result<bool, ClusterError> {
    let (a, b) = regularized_endpoints(lattice, params, env, t)?;
    let chem_view = view_at(env, t, Mode::Chemical);
    let chem = geodesic_summary(lattice, &chem_view, a, b)
        .expect("regularized endpoints share the giant cluster");
    let trunc_view = view_at(env, t, Mode::Truncated(params.m));
    let trunc = geodesic_summary(lattice, &trunc_view, a, b).expect("finite costs");
    Ok(chem.distance == trunc.distance && chem.some == trunc.some && chem.all == trunc.all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::sample_environment;
    use proptest::prelude::*;

    fn open_env(lat: &BoxLattice, params: &SimulationParams, sample: u64) -> CoupledEnvironment {
        sample_environment(lat, params, sample)
    }

    fn all_open(env: &mut CoupledEnvironment) {
        env.open_0.iter_mut().for_each(|b| *b = true);
    }

    fn all_closed(env: &mut CoupledEnvironment) {
        env.open_0.iter_mut().for_each(|b| *b = false);
    }

    /// Exhaustive simple-path shortest distance, the independent oracle.
    fn brute_distance(lattice: &BoxLattice, view: &EnvironmentView, a: Vertex, b: Vertex) -> u32 {
        fn rec(
            lattice: &BoxLattice,
            view: &EnvironmentView,
            v: Vertex,
            b: Vertex,
            cost: u32,
            best: &mut u32,
            visited: &mut Vec<bool>,
        ) {
            if cost >= *best {
                return;
            }
            if v == b {
                *best = cost;
                return;
            }
            visited[v] = true;
            let mut inc = Vec::new();
            lattice.incident(v, &mut inc);
            for (e, w) in inc {
                if visited[w] {
                    continue;
                }
                let step = match view.mode {
                    Mode::Chemical => {
                        if !view.is_open(e) {
                            continue;
                        }
                        1
                    }
                    Mode::Truncated(_) => view.cost(e),
                };
                rec(lattice, view, w, b, cost + step, best, visited);
            }
            visited[v] = false;
        }
        let mut best = UNREACHABLE;
        let mut visited = vec![false; lattice.n_vertices()];
        rec(lattice, view, a, b, 0, &mut best, &mut visited);
        best
    }

    /// ALL via brute force: enumerate every minimum-cost simple path and
    /// intersect their edge sets.
    fn brute_all(lattice: &BoxLattice, view: &EnvironmentView, a: Vertex, b: Vertex) -> Vec<Edge> {
        let dist = brute_distance(lattice, view, a, b);
        assert_ne!(dist, UNREACHABLE);
        fn rec(
            lattice: &BoxLattice,
            view: &EnvironmentView,
            v: Vertex,
            b: Vertex,
            cost: u32,
            dist: u32,
            path: &mut Vec<Edge>,
            inter: &mut Option<Vec<Edge>>,
            visited: &mut Vec<bool>,
        ) {
            if cost > dist {
                return;
            }
            if v == b {
                if cost == dist {
                    let mut p = path.clone();
                    p.sort_unstable();
                    *inter = Some(match inter.take() {
                        None => p,
                        Some(cur) => cur.into_iter().filter(|e| p.binary_search(e).is_ok()).collect(),
                    });
                }
                return;
            }
            visited[v] = true;
            let mut inc = Vec::new();
            lattice.incident(v, &mut inc);
            for (e, w) in inc {
                if visited[w] {
                    continue;
                }
                let step = match view.mode {
                    Mode::Chemical => {
                        if !view.is_open(e) {
                            continue;
                        }
                        1
                    }
                    Mode::Truncated(_) => view.cost(e),
                };
                path.push(e);
                rec(lattice, view, w, b, cost + step, dist, path, inter, visited);
                path.pop();
            }
            visited[v] = false;
        }
        let mut inter = None;
        let mut visited = vec![false; lattice.n_vertices()];
        rec(lattice, view, a, b, 0, dist, &mut Vec::new(), &mut inter, &mut visited);
        inter.unwrap()
    }

    #[test]
    fn all_open_distance_is_l1() {
        let params = SimulationParams::new(2, 3, 0.6, 1);
        let lat = BoxLattice::from_params(&params).unwrap().0;
        let mut env = open_env(&lat, &params, 0);
        all_open(&mut env);
        let view = view_at(&env, 0.0, Mode::Chemical);
        let o = lat.vertex_index(&[0, 0]).unwrap();
        let field = distance_field(&lat, &view, o);
        for k in 0..=3 {
            let v = lat.vertex_index(&[k, 0]).unwrap();
            assert_eq!(field.dist[v], k as u32);
        }
        assert_eq!(field.dist[o], 0);
    }

    #[test]
    fn all_closed_truncated_pays_m_per_step() {
        let params = SimulationParams::new(2, 3, 0.6, 1);
        let lat = BoxLattice::from_params(&params).unwrap().0;
        let mut env = open_env(&lat, &params, 0);
        all_closed(&mut env);
        let view = view_at(&env, 0.0, Mode::Truncated(7));
        let o = lat.vertex_index(&[0, 0]).unwrap();
        let field = distance_field(&lat, &view, o);
        for k in 0..=3 {
            let v = lat.vertex_index(&[k, 0]).unwrap();
            assert_eq!(field.dist[v], 7 * k as u32);
        }
    }

    #[test]
    fn field_matches_brute_force_on_small_box() {
        // Random views on a 5x5 box, both modes, checked vertex by vertex.
        let mut params = SimulationParams::new(2, 1, 0.6, 9);
        params.side = 2;
        let lat = BoxLattice::new(2, 2);
        let o = lat.vertex_index(&[0, 0]).unwrap();
        for s in 0..6 {
            let env = open_env(&lat, &params, s);
            for mode in [Mode::Chemical, Mode::Truncated(5)] {
                let view = view_at(&env, 0.0, mode);
                let field = distance_field(&lat, &view, o);
                for v in 0..lat.n_vertices() {
                    assert_eq!(field.dist[v], brute_distance(&lat, &view, o, v), "sample {s} vertex {v}");
                }
            }
        }
    }

    #[test]
    fn corridor_has_all_equal_some() {
        // Only the straight line y=0 is open: unique geodesic.
        let params = SimulationParams::new(2, 3, 0.6, 1);
        let lat = BoxLattice::from_params(&params).unwrap().0;
        let mut env = open_env(&lat, &params, 0);
        all_closed(&mut env);
        let mut path = Vec::new();
        for x in -3..3 {
            let v = lat.vertex_index(&[x, 0]).unwrap();
            let e = lat.edge_index(v, 0);
            env.open_0[e] = true;
            path.push(e);
        }
        path.sort_unstable();
        let view = view_at(&env, 0.0, Mode::Chemical);
        let a = lat.vertex_index(&[-3, 0]).unwrap();
        let b = lat.vertex_index(&[3, 0]).unwrap();
        let s = geodesic_summary(&lat, &view, a, b).unwrap();
        assert_eq!(s.distance, 6);
        assert_eq!(s.some, path);
        assert_eq!(s.all, path);
        assert_eq!((s.min_edges, s.max_edges), (6, 6));
    }

    #[test]
    fn open_square_has_empty_all() {
        // Opposite corners of a unit square: two geodesics, no shared edge.
        let params = SimulationParams::new(2, 1, 0.6, 1);
        let mut p2 = params.clone();
        p2.side = 1;
        let lat = BoxLattice::new(2, 1);
        let mut env = open_env(&lat, &p2, 0);
        all_open(&mut env);
        let view = view_at(&env, 0.0, Mode::Chemical);
        let a = lat.vertex_index(&[0, 0]).unwrap();
        let b = lat.vertex_index(&[1, 1]).unwrap();
        let s = geodesic_summary(&lat, &view, a, b).unwrap();
        assert_eq!(s.distance, 2);
        assert_eq!(s.some.len(), 4);
        assert!(s.all.is_empty());
    }

    #[test]
    fn unreachable_is_an_error() {
        let params = SimulationParams::new(2, 1, 0.6, 1);
        let mut p2 = params.clone();
        p2.side = 1;
        let lat = BoxLattice::new(2, 1);
        let mut env = open_env(&lat, &p2, 0);
        all_closed(&mut env);
        let view = view_at(&env, 0.0, Mode::Chemical);
        let a = lat.vertex_index(&[0, 0]).unwrap();
        let b = lat.vertex_index(&[1, 0]).unwrap();
        assert!(matches!(
            geodesic_summary(&lat, &view, a, b),
            Err(GeodesicError::Unreachable)
        ));
    }

    #[test]
    fn all_matches_brute_force_both_modes() {
        let mut params = SimulationParams::new(2, 1, 0.55, 33);
        params.side = 2;
        let lat = BoxLattice::new(2, 2);
        let a = lat.vertex_index(&[-2, -2]).unwrap();
        let b = lat.vertex_index(&[2, 2]).unwrap();
        for s in 0..8 {
            let env = open_env(&lat, &params, s);
            for mode in [Mode::Chemical, Mode::Truncated(4)] {
                let view = view_at(&env, 0.0, mode);
                let summary = match geodesic_summary(&lat, &view, a, b) {
                    Ok(x) => x,
                    Err(GeodesicError::Unreachable) => continue,
                    Err(e) => panic!("{e}"),
                };
                assert_eq!(summary.all, brute_all(&lat, &view, a, b), "sample {s}");
                // ALL is a subset of SOME by construction; check anyway.
                assert!(summary.all.iter().all(|e| summary.some.binary_search(e).is_ok()));
            }
        }
    }

    #[test]
    fn counting_matches_deletion() {
        let mut params = SimulationParams::new(2, 1, 0.6, 77);
        params.side = 6;
        let lat = BoxLattice::new(2, 6);
        let a = lat.vertex_index(&[-5, 0]).unwrap();
        let b = lat.vertex_index(&[5, 0]).unwrap();
        let mut checked = 0;
        for s in 0..20 {
            let env = open_env(&lat, &params, s);
            for mode in [Mode::Chemical, Mode::Truncated(9)] {
                let view = view_at(&env, 0.0, mode);
                let del = match geodesic_summary_with_method(&lat, &view, a, b, AllMethod::Deletion) {
                    Ok(x) => x,
                    Err(_) => continue,
                };
                let cnt =
                    geodesic_summary_with_method(&lat, &view, a, b, AllMethod::Counting).unwrap();
                assert_eq!(del.all, cnt.all, "sample {s}");
                checked += 1;
            }
        }
        assert!(checked >= 20);
    }

    #[test]
    fn truncated_never_exceeds_chemical() {
        let mut params = SimulationParams::new(2, 1, 0.6, 5);
        params.side = 8;
        let lat = BoxLattice::new(2, 8);
        let a = lat.vertex_index(&[-7, 0]).unwrap();
        let b = lat.vertex_index(&[7, 0]).unwrap();
        for s in 0..20 {
            let env = open_env(&lat, &params, s);
            let chem = view_at(&env, 0.0, Mode::Chemical);
            let d_chem = shortest(&lat, &chem, &[a], None)[b];
            if d_chem == UNREACHABLE {
                continue;
            }
            let trunc = view_at(&env, 0.0, Mode::Truncated(11));
            let d_trunc = shortest(&lat, &trunc, &[a], None)[b];
            assert!(d_trunc <= d_chem, "sample {s}: {d_trunc} > {d_chem}");
        }
    }

    #[test]
    fn overlap_with_self_is_all_size() {
        let mut params = SimulationParams::new(2, 1, 0.6, 2);
        params.side = 5;
        let lat = BoxLattice::new(2, 5);
        let env = open_env(&lat, &params, 0);
        let view = view_at(&env, 0.0, Mode::Truncated(6));
        let a = lat.vertex_index(&[-4, 0]).unwrap();
        let b = lat.vertex_index(&[4, 0]).unwrap();
        let s = geodesic_summary(&lat, &view, a, b).unwrap();
        assert_eq!(overlap(&s, &s).unwrap(), s.all.len());
    }

    #[test]
    fn overlap_rejects_foreign_environment() {
        let mut params = SimulationParams::new(2, 1, 0.6, 2);
        params.side = 4;
        let lat = BoxLattice::new(2, 4);
        let env0 = open_env(&lat, &params, 0);
        let env1 = open_env(&lat, &params, 1);
        let a = lat.vertex_index(&[-3, 0]).unwrap();
        let b = lat.vertex_index(&[3, 0]).unwrap();
        let s0 = geodesic_summary(&lat, &view_at(&env0, 0.0, Mode::Truncated(5)), a, b).unwrap();
        let s1 = geodesic_summary(&lat, &view_at(&env1, 0.0, Mode::Truncated(5)), a, b).unwrap();
        assert_eq!(overlap(&s0, &s1), Err(GeodesicError::MismatchedEnvironments));
    }

    #[test]
    fn compare_modes_all_open_coincide() {
        let params = SimulationParams::new(2, 4, 0.6, 3);
        let lat = BoxLattice::from_params(&params).unwrap().0;
        let mut env = open_env(&lat, &params, 0);
        all_open(&mut env);
        env.open_prime.iter_mut().for_each(|b| *b = true);
        assert!(compare_geodesic_sets(&lat, &params, &env, 0.0).unwrap());
    }

    #[test]
    fn short_truncation_breaks_coincidence() {
        // A wall of closed edges with a long way around: with M=2 the
        // truncated geodesic pays M through the wall while the chemical one
        // detours, so the structures disagree.
        let mut params = SimulationParams::new(2, 2, 0.6, 3);
        params.side = 4;
        params.m = 2;
        let lat = BoxLattice::new(2, 4);
        let mut env = open_env(&lat, &params, 0);
        all_open(&mut env);
        env.open_prime.iter_mut().for_each(|b| *b = true);
        // Close vertical wall at x between 0 and 1, all y except the very top.
        for y in -4..4 {
            let v = lat.vertex_index(&[0, y]).unwrap();
            let e = lat.edge_index(v, 0);
            env.open_0[e] = false;
            env.open_prime[e] = false;
        }
        assert!(!compare_geodesic_sets(&lat, &params, &env, 0.0).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn opening_an_edge_never_increases_distance(seed in 0u64..500, edge_pick in 0usize..84) {
            let mut params = SimulationParams::new(2, 1, 0.5, seed);
            params.side = 3;
            let lat = BoxLattice::new(2, 3);
            let env = sample_environment(&lat, &params, 0);
            let view = view_at(&env, 0.0, Mode::Truncated(5));
            let e = edge_pick % lat.n_edges();
            let opened = view.with_override(e, crate::env::OverrideState::Open);
            let o = lat.vertex_index(&[0, 0]).unwrap();
            let base = shortest(&lat, &view, &[o], None);
            let better = shortest(&lat, &opened, &[o], None);
            for v in 0..lat.n_vertices() {
                prop_assert!(better[v] <= base[v]);
            }
        }

        #[test]
        fn field_satisfies_edge_relaxation(seed in 0u64..200) {
            let mut params = SimulationParams::new(2, 1, 0.55, seed);
            params.side = 3;
            let lat = BoxLattice::new(2, 3);
            let env = sample_environment(&lat, &params, 0);
            let view = view_at(&env, 0.0, Mode::Truncated(4));
            let o = lat.vertex_index(&[0, 0]).unwrap();
            let field = distance_field(&lat, &view, o);
            prop_assert_eq!(field.dist[o], 0);
            for e in 0..lat.n_edges() {
                let (u, v) = lat.endpoints(e);
                let w = view.cost(e);
                prop_assert!(field.dist[u].abs_diff(field.dist[v]) <= w);
            }
        }
    }
}
