//! Effective dynamic radius of an edge and its supporting window events.
//!
//! All window events are centered on the lexicographically smaller endpoint
//! of the edge. The W event is checked exactly. The V event quantifies over
//! an infinite family of modified geodesics, so production code evaluates a
//! component surrogate: open crossing components of the annulus plus crossing
//! segments of deterministic boundary-to-boundary truncated geodesics. A
//! capped brute-force enumeration is available for tiny windows to validate
//! the surrogate.

use crate::env::{view_at, CoupledEnvironment, EnvironmentView, Mode};
use crate::geodesic::GeodesicSummary;
use crate::lattice::{BoxLattice, Edge, SimulationParams, Vertex};
use std::cell::RefCell;
use std::collections::{HashSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WindowError {
    #[error("window of radius {radius} around edge {edge} leaves the box")]
    Clipped { edge: Edge, radius: i64 },
}

const INF: u32 = u32::MAX;

/// Dense per-vertex scratch; only touched entries are reset, and instances
/// are pooled per thread because window routines run per edge at Monte Carlo
/// scale.
struct Scratch {
    dist: Vec<u32>,
    touched: Vec<Vertex>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            dist: vec![INF; n],
            touched: Vec::new(),
        }
    }

    fn reset(&mut self) {
        for &v in &self.touched {
            self.dist[v] = INF;
        }
        self.touched.clear();
    }

    fn set(&mut self, v: Vertex, d: u32) {
        if self.dist[v] == INF {
            self.touched.push(v);
        }
        self.dist[v] = d;
    }
}

thread_local! {
    static SCRATCH_POOL: RefCell<Vec<Scratch>> = const { RefCell::new(Vec::new()) };
}

fn take_scratch(n: usize) -> Scratch {
    let reused = SCRATCH_POOL.with(|p| p.borrow_mut().pop());
    match reused {
        Some(mut s) => {
            s.reset();
            if s.dist.len() < n {
                s.dist.resize(n, INF);
            }
            s
        }
        None => Scratch::new(n),
    }
}

fn give_scratch(s: Scratch) {
    SCRATCH_POOL.with(|p| p.borrow_mut().push(s));
}

/// linf distance from every box vertex to `center`, fully overwritten.
fn fill_norms(lattice: &BoxLattice, center: Vertex, norms: &mut Vec<u32>) {
    norms.clear();
    norms.extend((0..lattice.n_vertices()).map(|v| lattice.linf(v, center) as u32));
}

/// Open-subgraph BFS from `sources`, restricted to vertices with norm at
/// most `limit`.
fn window_bfs(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    norms: &[u32],
    limit: u32,
    sources: &[Vertex],
    scratch: &mut Scratch,
) {
    scratch.reset();
    let mut queue = VecDeque::new();
    for &s in sources {
        if scratch.dist[s] == INF {
            scratch.set(s, 0);
            queue.push_back(s);
        }
    }
    let mut inc = Vec::with_capacity(2 * lattice.d);
    while let Some(v) = queue.pop_front() {
        let dv = scratch.dist[v];
        lattice.incident(v, &mut inc);
        for &(e, w) in &inc {
            if !view.is_open(e) || norms[w] > limit {
                continue;
            }
            if scratch.dist[w] == INF {
                scratch.set(w, dv + 1);
                queue.push_back(w);
            }
        }
    }
}

/// Truncated-cost shortest paths within a window, bucket queue on {1, M}.
fn window_dial(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    norms: &[u32],
    limit: u32,
    source: Vertex,
    scratch: &mut Scratch,
) {
    let m = match view.mode {
        Mode::Truncated(m) => m,
        Mode::Chemical => panic!("dial needs finite costs"),
    };
    scratch.reset();
    let ring = (m + 1) as usize;
    let mut buckets: Vec<Vec<Vertex>> = vec![Vec::new(); ring];
    scratch.set(source, 0);
    buckets[0].push(source);
    let mut pending = 1usize;
    let mut cur = 0u32;
    let mut inc = Vec::with_capacity(2 * lattice.d);
    while pending > 0 {
        let slot = (cur as usize) % ring;
        while let Some(v) = buckets[slot].pop() {
            pending -= 1;
            if scratch.dist[v] != cur {
                continue;
            }
            lattice.incident(v, &mut inc);
            for &(e, w) in &inc {
                if norms[w] > limit {
                    continue;
                }
                let nd = cur + view.cost(e);
                if nd < scratch.dist[w] {
                    scratch.set(w, nd);
                    buckets[(nd as usize) % ring].push(w);
                    pending += 1;
                }
            }
        }
        cur += 1;
    }
}

fn check_fit(lattice: &BoxLattice, e: Edge, radius: i64) -> Result<Vertex, WindowError> {
    let center = lattice.edge_rep(e);
    if lattice.window_clipped(center, radius) {
        Err(WindowError::Clipped { edge: e, radius })
    } else {
        Ok(center)
    }
}

thread_local! {
    static NORM_POOL: RefCell<Vec<Vec<u32>>> = const { RefCell::new(Vec::new()) };
}

fn take_norms(lattice: &BoxLattice, center: Vertex) -> Vec<u32> {
    let mut norms = NORM_POOL.with(|p| p.borrow_mut().pop()).unwrap_or_default();
    fill_norms(lattice, center, &mut norms);
    norms
}

fn give_norms(norms: Vec<u32>) {
    NORM_POOL.with(|p| p.borrow_mut().push(norms));
}

/// Exact local connectivity event: every pair connected inside the 3N window
/// must be joined within the 4N window by an open path of length at most
/// C_star * N.
pub fn check_w(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    e: Edge,
    n: u32,
    c_star: u32,
) -> Result<bool, WindowError> {
    let center = check_fit(lattice, e, 4 * n as i64)?;
    let norms = take_norms(lattice, center);
    let ok = check_w_with(lattice, view, &norms, n, c_star);
    give_norms(norms);
    Ok(ok)
}

fn check_w_with(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    norms: &[u32],
    n: u32,
    c_star: u32,
) -> bool {
    let inner: Vec<Vertex> = (0..lattice.n_vertices()).filter(|&v| norms[v] <= 3 * n).collect();
    let mut comp = take_scratch(lattice.n_vertices());
    let mut bfs = take_scratch(lattice.n_vertices());
    // Components of the open subgraph restricted to the 3N window.
    let mut comp_id = 0u32;
    for &v in &inner {
        if comp.dist[v] != INF {
            continue;
        }
        window_bfs(lattice, view, norms, 3 * n, &[v], &mut bfs);
        for &w in &bfs.touched {
            comp.set(w, comp_id);
        }
        comp_id += 1;
    }
    let bound = c_star * n;
    let mut ok = true;
    'outer: for (i, &x) in inner.iter().enumerate() {
        window_bfs(lattice, view, norms, 4 * n, &[x], &mut bfs);
        for &y in inner[i + 1..].iter() {
            if comp.dist[y] == comp.dist[x] && bfs.dist[y] > bound {
                ok = false;
                break 'outer;
            }
        }
    }
    give_scratch(comp);
    give_scratch(bfs);
    ok
}

fn in_annulus(norm: u32, n: u32) -> bool {
    norm > n && norm <= 3 * n
}

/// BFS over open edges with both endpoints inside the annulus of radii
/// (N, 3N] around the norm origin.
fn annulus_bfs(
    lattice: &BoxLattice,
    view: &EnvironmentView,
    norms: &[u32],
    n: u32,
    sources: &[Vertex],
    scratch: &mut Scratch,
) {
    scratch.reset();
    let mut queue = VecDeque::new();
    for &s in sources {
        if scratch.dist[s] == INF {
            scratch.set(s, 0);
            queue.push_back(s);
        }
    }
    let mut inc = Vec::with_capacity(2 * lattice.d);
    while let Some(v) = queue.pop_front() {
        let dv = scratch.dist[v];
        lattice.incident(v, &mut inc);
        for &(e, w) in &inc {
            if !view.is_open(e) || !in_annulus(norms[w], n) {
                continue;
            }
            if scratch.dist[w] == INF {
                scratch.set(w, dv + 1);
                queue.push_back(w);
            }
        }
    }
}

/// Open crossing components of the annulus: components of the open subgraph
/// restricted to the annulus that touch both the inner shell (norm N+1) and
/// the outer shell (norm 3N).
fn crossing_components(
    lattice: &BoxLattice,
    open_view: &EnvironmentView,
    norms: &[u32],
    annulus: &[Vertex],
    n: u32,
) -> Vec<Vec<Vertex>> {
    let mut sets: Vec<Vec<Vertex>> = Vec::new();
    let mut seen = take_scratch(lattice.n_vertices());
    let mut bfs = take_scratch(lattice.n_vertices());
    for &v in annulus {
        if seen.dist[v] != INF {
            continue;
        }
        annulus_bfs(lattice, open_view, norms, n, &[v], &mut bfs);
        let mut touch_in = false;
        let mut touch_out = false;
        for &w in &bfs.touched {
            seen.set(w, 0);
            touch_in |= norms[w] == n + 1;
            touch_out |= norms[w] == 3 * n;
        }
        if touch_in && touch_out {
            let mut set = bfs.touched.clone();
            set.sort_unstable();
            sets.push(set);
        }
    }
    give_scratch(seen);
    give_scratch(bfs);
    sets
}

/// Crossing segments (containing at least one open edge) of deterministic
/// boundary-to-boundary truncated geodesics of the C*N window. Segments with
/// no open edge are dropped so that a fully closed window stays vacuous.
///
/// For a fixed source the tight-predecessor map forms a tree, so geodesics of
/// different targets share suffixes; a walk stops once it closes the run in
/// which it merged with an earlier walk, because every later run repeats.
fn geodesic_runs(
    lattice: &BoxLattice,
    env: &CoupledEnvironment,
    s: f64,
    m: u32,
    norms: &[u32],
    n: u32,
    c_star: u32,
    open_view: &EnvironmentView,
    sets: &mut Vec<Vec<Vertex>>,
) {
    let trunc_view = view_at(env, s, Mode::Truncated(m));
    let limit = c_star * n;
    let boundary: Vec<Vertex> = (0..lattice.n_vertices())
        .filter(|&v| norms[v] == limit)
        .collect();
    // One distance field per source is the dominant cost of the whole radius
    // scan, so sources are stride-subsampled while targets stay complete.
    // The family stays deterministic and confined to the C*N window.
    const MAX_SOURCES: usize = 64;
    let stride = boundary.len().div_ceil(MAX_SOURCES).max(1);
    let mut dedupe: HashSet<Vec<Vertex>> = sets.iter().cloned().collect();
    let mut dial = take_scratch(lattice.n_vertices());
    let mut pred = take_scratch(lattice.n_vertices());
    let mut inc = Vec::with_capacity(2 * lattice.d);
    let mut flush = |run: &mut Vec<Vertex>, t_in: &mut bool, t_out: &mut bool, open: &mut bool,
                     sets: &mut Vec<Vec<Vertex>>| {
        if *t_in && *t_out && *open {
            let mut set = std::mem::take(run);
            set.sort_unstable();
            if dedupe.insert(set.clone()) {
                sets.push(set);
            }
        }
        run.clear();
        *t_in = false;
        *t_out = false;
        *open = false;
    };
    for &u in boundary.iter().step_by(stride) {
        window_dial(lattice, &trunc_view, norms, limit, u, &mut dial);
        pred.reset();
        pred.set(u, u as u32);
        for &v in &boundary {
            if v == u {
                continue;
            }
            // Walk the deterministic geodesic v -> u; maximal annulus runs
            // that touch both shells and carry an open edge are relevant.
            let mut cur = v;
            let mut run: Vec<Vertex> = Vec::new();
            let mut touch_in = false;
            let mut touch_out = false;
            let mut has_open = false;
            let mut merged = false;
            loop {
                let norm = norms[cur];
                if in_annulus(norm, n) {
                    if let Some(&prev) = run.last() {
                        has_open |= open_view.is_open(lattice.edge_between(prev, cur));
                    }
                    run.push(cur);
                    touch_in |= norm == n + 1;
                    touch_out |= norm == 3 * n;
                } else {
                    flush(&mut run, &mut touch_in, &mut touch_out, &mut has_open, sets);
                    if merged {
                        break;
                    }
                }
                if cur == u {
                    flush(&mut run, &mut touch_in, &mut touch_out, &mut has_open, sets);
                    break;
                }
                // Tight predecessors are memoized per source; a hit means the
                // rest of the path was already walked.
                if pred.dist[cur] == INF {
                    let dv = dial.dist[cur];
                    let mut best = INF;
                    lattice.incident(cur, &mut inc);
                    for &(edge2, w) in &inc {
                        if norms[w] <= limit
                            && dial.dist[w] != INF
                            && dial.dist[w] + trunc_view.cost(edge2) == dv
                            && (w as u32) < best
                        {
                            best = w as u32;
                        }
                    }
                    pred.set(cur, best);
                } else {
                    merged = true;
                }
                cur = pred.dist[cur] as Vertex;
            }
        }
    }
    give_scratch(dial);
    give_scratch(pred);
}

/// Component surrogate for the geodesic-family event: every pair of relevant
/// annulus sets must be joined by an open path inside the annulus of length
/// at most C_star * N.
pub fn check_v_surrogate(
    lattice: &BoxLattice,
    env: &CoupledEnvironment,
    s: f64,
    m: u32,
    e: Edge,
    n: u32,
    c_star: u32,
) -> Result<bool, WindowError> {
    let center = check_fit(lattice, e, (c_star * n) as i64)?;
    let norms = take_norms(lattice, center);
    let ok = check_v_with(lattice, env, s, m, &norms, n, c_star);
    give_norms(norms);
    Ok(ok)
}

fn check_v_with(
    lattice: &BoxLattice,
    env: &CoupledEnvironment,
    s: f64,
    m: u32,
    norms: &[u32],
    n: u32,
    c_star: u32,
) -> bool {
    let open_view = view_at(env, s, Mode::Chemical);
    let annulus: Vec<Vertex> = (0..lattice.n_vertices())
        .filter(|&v| in_annulus(norms[v], n))
        .collect();
    let mut sets = crossing_components(lattice, &open_view, norms, &annulus, n);
    // Distinct open components can never be joined by an open annulus path,
    // so two crossing components already decide the event.
    if sets.len() >= 2 {
        return false;
    }
    geodesic_runs(lattice, env, s, m, norms, n, c_star, &open_view, &mut sets);
    sets_within_reach(lattice, &open_view, norms, n, c_star, &sets)
}

fn sets_within_reach(
    lattice: &BoxLattice,
    open_view: &EnvironmentView,
    norms: &[u32],
    n: u32,
    c_star: u32,
    sets: &[Vec<Vertex>],
) -> bool {
    if sets.len() < 2 {
        return true;
    }
    let bound = c_star * n;
    let mut bfs = take_scratch(lattice.n_vertices());
    let mut ok = true;
    'outer: for i in 0..sets.len() {
        annulus_bfs(lattice, open_view, norms, n, &sets[i], &mut bfs);
        for set in sets[i + 1..].iter() {
            if !set.iter().any(|&v| bfs.dist[v] <= bound) {
                ok = false;
                break 'outer;
            }
        }
    }
    give_scratch(bfs);
    ok
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubEventBits {
    pub n: u32,
    pub v_0: bool,
    pub w_0: bool,
    pub v_t: bool,
    pub w_t: bool,
}

#[derive(Debug, Clone)]
pub struct RadiusRecord {
    pub edge: Edge,
    pub t: f64,
    /// Smallest admissible N; None when the window clips first.
    pub r: Option<u32>,
    /// min(C_star * r, M); equals M on overflow.
    pub hat_r: u32,
    pub overflow: bool,
    pub diagnostics: Vec<SubEventBits>,
    /// Production V is always the surrogate.
    pub surrogate_v: bool,
}

/// Scan N = 1, 2, ... until all four sub-events hold or the window clips.
/// With a cap the scan also stops after level `cap`.
fn radius_scan(
    lattice: &BoxLattice,
    params: &SimulationParams,
    env: &CoupledEnvironment,
    e: Edge,
    t: f64,
    cap: Option<u32>,
) -> RadiusRecord {
    let c_star = params.c_star;
    let m = params.m;
    let chem_0 = view_at(env, 0.0, Mode::Chemical);
    let chem_t = view_at(env, t, Mode::Chemical);
    let norms = take_norms(lattice, lattice.edge_rep(e));
    let mut diagnostics = Vec::new();
    let mut n = 1u32;
    let no_success = |overflow: bool, diagnostics: Vec<SubEventBits>| RadiusRecord {
        edge: e,
        t,
        r: None,
        hat_r: m,
        overflow,
        diagnostics,
        surrogate_v: true,
    };
    loop {
        if check_fit(lattice, e, (c_star * n) as i64).is_err() {
            give_norms(norms);
            return no_success(true, diagnostics);
        }
        // Cheapest rejection first: two open crossing components of the
        // annulus decide V without any geodesic work.
        let annulus: Vec<Vertex> = (0..lattice.n_vertices())
            .filter(|&v| in_annulus(norms[v], n))
            .collect();
        let comps_0 = crossing_components(lattice, &chem_0, &norms, &annulus, n);
        let comps_t = crossing_components(lattice, &chem_t, &norms, &annulus, n);
        let plausible = comps_0.len() < 2 && comps_t.len() < 2;
        let w_0 = plausible && check_w_with(lattice, &chem_0, &norms, n, c_star);
        let w_t = w_0 && check_w_with(lattice, &chem_t, &norms, n, c_star);
        let v_0 = w_t && {
            let mut sets = comps_0;
            geodesic_runs(lattice, env, 0.0, m, &norms, n, c_star, &chem_0, &mut sets);
            sets_within_reach(lattice, &chem_0, &norms, n, c_star, &sets)
        };
        let v_t = v_0 && {
            let mut sets = comps_t;
            geodesic_runs(lattice, env, t, m, &norms, n, c_star, &chem_t, &mut sets);
            sets_within_reach(lattice, &chem_t, &norms, n, c_star, &sets)
        };
        diagnostics.push(SubEventBits { n, v_0, w_0, v_t, w_t });
        if v_0 && w_0 && v_t && w_t {
            give_norms(norms);
            return RadiusRecord {
                edge: e,
                t,
                r: Some(n),
                hat_r: (c_star * n).min(m),
                overflow: false,
                diagnostics,
                surrogate_v: true,
            };
        }
        if cap.is_some_and(|c| n >= c) {
            give_norms(norms);
            return no_success(false, diagnostics);
        }
        n += 1;
    }
}

pub fn radius(
    lattice: &BoxLattice,
    params: &SimulationParams,
    env: &CoupledEnvironment,
    e: Edge,
    t: f64,
) -> RadiusRecord {
    radius_scan(lattice, params, env, e, t, None)
}

/// Like `radius`, but gives up after level `cap`. A record with `r = None`
/// and `overflow = false` means the radius exceeds the cap; tail studies can
/// count such edges exactly for every level up to the cap.
pub fn radius_capped(
    lattice: &BoxLattice,
    params: &SimulationParams,
    env: &CoupledEnvironment,
    e: Edge,
    t: f64,
    cap: u32,
) -> RadiusRecord {
    radius_scan(lattice, params, env, e, t, Some(cap))
}

#[derive(Debug, Clone)]
pub struct BypassEntry {
    pub edge: Edge,
    pub r: u32,
    pub extra_cost: i64,
    pub violated: bool,
}

#[derive(Debug, Clone, Default)]
pub struct BypassReport {
    pub entries: Vec<BypassEntry>,
    pub skipped_overflow: usize,
    pub skipped_near_endpoint: usize,
    pub violations: usize,
}

/// For each all-geodesic edge whose endpoints are far from it, recompute the
/// passage time with that edge forbidden and compare the extra cost of the
/// bypass to C_star * r.
pub fn verify_bypass(
    lattice: &BoxLattice,
    params: &SimulationParams,
    env: &CoupledEnvironment,
    t: f64,
    summary: &GeodesicSummary,
) -> BypassReport {
    let view = view_at(env, summary.t, summary.mode);
    let mut report = BypassReport::default();
    for &e in &summary.all {
        let rec = radius(lattice, params, env, e, t);
        let Some(r) = rec.r else {
            report.skipped_overflow += 1;
            continue;
        };
        let center = lattice.edge_rep(e);
        if lattice.linf(summary.a, center) <= 3 * r as i64
            || lattice.linf(summary.b, center) <= 3 * r as i64
        {
            report.skipped_near_endpoint += 1;
            continue;
        }
        let avoid = crate::geodesic::distance_avoiding(lattice, &view, summary.a, summary.b, e);
        let extra = if avoid == INF {
            i64::MAX
        } else {
            avoid as i64 - summary.distance as i64
        };
        let violated = extra > (params.c_star as i64) * r as i64;
        report.violations += violated as usize;
        report.entries.push(BypassEntry {
            edge: e,
            r,
            extra_cost: extra,
            violated,
        });
    }
    report
}

/// The radius indicator {r = l} must agree between two environments that
/// coincide on every edge inside the C_star*l window.
pub fn locality_check(
    lattice: &BoxLattice,
    params: &SimulationParams,
    env_a: &CoupledEnvironment,
    env_b: &CoupledEnvironment,
    e: Edge,
    l: u32,
    t: f64,
) -> bool {
    // {r = l} is decided by the scan up to level l, so cap it there.
    let ra = radius_scan(lattice, params, env_a, e, t, Some(l));
    let rb = radius_scan(lattice, params, env_b, e, t, Some(l));
    (ra.r == Some(l)) == (rb.r == Some(l))
}

/// Brute-force V for tiny windows: enumerate self-avoiding crossing paths of
/// the annulus up to `len_cap` edges and at most two closed edges, keep those
/// formed from a truncated geodesic by open substitutions, and test all
/// pairs. Validation aid only; the length cap and the closed-edge limit bound
/// its coverage.
pub fn check_v_brute(
    lattice: &BoxLattice,
    env: &CoupledEnvironment,
    s: f64,
    m: u32,
    e: Edge,
    n: u32,
    c_star: u32,
    len_cap: usize,
) -> Result<bool, WindowError> {
    assert!(n <= 2, "brute mode is restricted to N <= 2");
    let center = check_fit(lattice, e, (c_star * n) as i64)?;
    let nn = n as i64;
    let limit = c_star * n;
    let norms = take_norms(lattice, center);
    let open_view = view_at(env, s, Mode::Chemical);
    let trunc_view = view_at(env, s, Mode::Truncated(m));

    // Truncated window distances from a source, memoized per source.
    let mut fields: std::collections::HashMap<Vertex, std::collections::HashMap<Vertex, u32>> =
        std::collections::HashMap::new();
    let mut dial = take_scratch(lattice.n_vertices());
    let mut tdist = |src: Vertex, dst: Vertex, dial: &mut Scratch| -> u32 {
        let f = fields.entry(src).or_insert_with(|| {
            window_dial(lattice, &trunc_view, &norms, limit, src, dial);
            dial.touched.iter().map(|&v| (v, dial.dist[v])).collect()
        });
        f.get(&dst).copied().unwrap_or(INF)
    };

    // The closed edges of an admissible path must all lie on one truncated
    // geodesic of the window; for up to two closed edges this reduces to a
    // chaining condition on window distances.
    let mut admissible = |closed: &[Edge], dial: &mut Scratch| -> bool {
        match closed {
            [] => true,
            [e1] => {
                let (a, b) = lattice.endpoints(*e1);
                tdist(a, b, dial) == m
            }
            [e1, e2] => {
                let (a1, b1) = lattice.endpoints(*e1);
                let (a2, b2) = lattice.endpoints(*e2);
                for (x1, y1) in [(a1, b1), (b1, a1)] {
                    for (x2, y2) in [(a2, b2), (b2, a2)] {
                        let mid = tdist(y1, x2, dial);
                        if mid != INF && tdist(x1, y2, dial) == m + mid + m {
                            return true;
                        }
                    }
                }
                false
            }
            _ => false,
        }
    };

    // Enumerate crossing paths: start on the inner shell, stay inside the
    // annulus, record at the first touch of the outer shell.
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        lattice: &BoxLattice,
        open_view: &EnvironmentView,
        center: Vertex,
        nn: i64,
        len_cap: usize,
        v: Vertex,
        path: &mut Vec<Vertex>,
        closed: &mut Vec<Edge>,
        on_path: &mut HashSet<Vertex>,
        out: &mut Vec<(Vec<Vertex>, Vec<Edge>)>,
    ) {
        if lattice.linf(v, center) == 3 * nn {
            out.push((path.clone(), closed.clone()));
            return;
        }
        if path.len() > len_cap {
            return;
        }
        let mut inc = Vec::new();
        lattice.incident(v, &mut inc);
        for (e2, w) in inc {
            let norm = lattice.linf(w, center);
            if on_path.contains(&w) || norm <= nn || norm > 3 * nn {
                continue;
            }
            let is_open = open_view.is_open(e2);
            if !is_open && closed.len() >= 2 {
                continue;
            }
            if !is_open {
                closed.push(e2);
            }
            path.push(w);
            on_path.insert(w);
            dfs(lattice, open_view, center, nn, len_cap, w, path, closed, on_path, out);
            on_path.remove(&w);
            path.pop();
            if !is_open {
                closed.pop();
            }
        }
    }
    let inner_shell: Vec<Vertex> = lattice
        .window_vertices(center, 3 * nn)
        .into_iter()
        .filter(|&v| lattice.linf(v, center) == nn + 1)
        .collect();
    let mut raw: Vec<(Vec<Vertex>, Vec<Edge>)> = Vec::new();
    let mut on_path: HashSet<Vertex> = HashSet::new();
    for &start in &inner_shell {
        let mut path = vec![start];
        on_path.clear();
        on_path.insert(start);
        dfs(lattice, &open_view, center, nn, len_cap, start, &mut path, &mut Vec::new(), &mut on_path, &mut raw);
    }
    let mut paths: Vec<Vec<Vertex>> = Vec::new();
    for (path, closed) in raw {
        if admissible(&closed, &mut dial) {
            let mut set = path;
            set.sort_unstable();
            paths.push(set);
        }
    }
    give_scratch(dial);
    paths.sort();
    paths.dedup();

    // Pairwise open-distance check inside the annulus.
    let bound = c_star * n;
    let mut bfs = take_scratch(lattice.n_vertices());
    let mut ok = true;
    'outer: for i in 0..paths.len() {
        annulus_bfs(lattice, &open_view, &norms, n, &paths[i], &mut bfs);
        for other in paths[i + 1..].iter() {
            if !other.iter().any(|&v| bfs.dist[v] <= bound) {
                ok = false;
                break 'outer;
            }
        }
    }
    give_scratch(bfs);
    give_norms(norms);
    Ok(ok)
}
