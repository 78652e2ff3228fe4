//! Finite-box lattice geometry, edge indexing, and deterministic RNG streams.
//!
//! The infinite lattice is approximated by the box `[-side, side]^d`. Vertices
//! and edges carry dense integer ids so per-edge state lives in flat arrays.
//! Vertex ids are ordered so that ascending id equals ascending lexicographic
//! order of coordinates, which is the deterministic tie-breaking rule used
//! everywhere else.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub type Vertex = usize;
pub type Edge = usize;

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter `{key}`: {message}")]
    Invalid { key: String, message: String },
}

/// Non-fatal finding from parameter validation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamWarning {
    pub key: String,
    pub message: String,
}

/// All knobs of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    pub d: usize,
    /// Box half-width; the box is `[-side, side]^d`.
    pub side: i64,
    /// Open probability.
    pub p: f64,
    /// Endpoint separation; endpoints are `0` and `n * x_dir`.
    pub n: i64,
    pub x_dir: Vec<i64>,
    /// Truncation level for the truncated passage time.
    pub m: u32,
    /// Radius constant used by the bypass events.
    pub c_star: u32,
    pub seed: u64,
    pub samples: usize,
    /// Sorted noise levels in `[0, 1]`.
    pub t_grid: Vec<f64>,
}

/// Default truncation level: floor((ln n)^2), clamped to at least 2.
pub fn default_m(n: i64) -> u32 {
    let m = (n.max(2) as f64).ln().powi(2).floor() as u32;
    m.max(2)
}

/// Default box margin beyond the endpoint span: ceil(sqrt(n)).
pub fn default_margin(n: i64) -> i64 {
    (n.max(0) as f64).sqrt().ceil() as i64
}

impl SimulationParams {
    /// Parameters with the documented defaults for everything not given:
    /// direction `e_1`, `M = floor((ln n)^2)`, `C_* = 8d`, margin `ceil(sqrt n)`.
    pub fn new(d: usize, n: i64, p: f64, seed: u64) -> Self {
        let mut x_dir = vec![0i64; d.max(1)];
        if !x_dir.is_empty() {
            x_dir[0] = 1;
        }
        let span = n; // |n * e_1|_inf
        SimulationParams {
            d,
            side: span + default_margin(n),
            p,
            n,
            x_dir,
            m: default_m(n),
            c_star: 8 * d as u32,
            seed,
            samples: 100,
            t_grid: vec![0.0, 0.001, 0.005, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
        }
    }

    pub fn endpoint_a(&self) -> Vec<i64> {
        vec![0; self.d]
    }

    pub fn endpoint_b(&self) -> Vec<i64> {
        self.x_dir.iter().map(|&c| c * self.n).collect()
    }

    pub fn validate(&self) -> Result<Vec<ParamWarning>, ParamError> {
        let err = |key: &str, message: String| {
            Err(ParamError::Invalid {
                key: key.to_string(),
                message,
            })
        };
        if self.d < 2 {
            return err("d", format!("dimension must be >= 2, got {}", self.d));
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return err("p", format!("open probability must be in (0,1), got {}", self.p));
        }
        if self.m < 2 {
            return err("m", format!("truncation level must be >= 2, got {}", self.m));
        }
        if self.n < 1 {
            return err("n", format!("endpoint separation must be >= 1, got {}", self.n));
        }
        if self.x_dir.len() != self.d {
            return err("x_dir", format!("expected {} components, got {}", self.d, self.x_dir.len()));
        }
        if self.x_dir.iter().all(|&c| c == 0) {
            return err("x_dir", "direction vector must be nonzero".to_string());
        }
        let span = self.x_dir.iter().map(|c| c.abs()).max().unwrap() * self.n;
        let margin = default_margin(self.n);
        if self.side < span + margin {
            return err(
                "side",
                format!(
                    "box half-width {} too small: endpoints need span {} plus margin {}",
                    self.side, span, margin
                ),
            );
        }
        if self.t_grid.windows(2).any(|w| w[0] > w[1]) {
            return err("t_grid", "noise levels must be sorted ascending".to_string());
        }
        if self.t_grid.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return err("t_grid", "noise levels must lie in [0,1]".to_string());
        }
        let mut warnings = Vec::new();
        if (self.c_star as usize) < 6 * self.d {
            warnings.push(ParamWarning {
                key: "c_star".to_string(),
                message: format!(
                    "c_star = {} is below 6d = {}; the bypass event W_N is unsatisfiable \
                     even in the all-open configuration",
                    self.c_star,
                    6 * self.d
                ),
            });
        }
        Ok(warnings)
    }
}

/// The box `[-side, side]^d` with dense vertex and edge ids.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxLattice {
    pub d: usize,
    pub side: i64,
    width: usize,
    /// width^(d-1-a) for axis a; also the vertex-id stride of a unit step.
    strides: Vec<usize>,
    n_vertices: usize,
    /// Edges per axis: (width-1) * width^(d-1).
    per_axis: usize,
}

impl BoxLattice {
    pub fn new(d: usize, side: i64) -> Self {
        assert!(d >= 2 && side >= 1);
        let width = (2 * side + 1) as usize;
        let strides: Vec<usize> = (0..d).map(|a| width.pow((d - 1 - a) as u32)).collect();
        let n_vertices = width.pow(d as u32);
        let per_axis = (width - 1) * width.pow((d - 1) as u32);
        BoxLattice {
            d,
            side,
            width,
            strides,
            n_vertices,
            per_axis,
        }
    }

    /// Checks params and builds the lattice they describe.
    pub fn from_params(params: &SimulationParams) -> Result<(Self, Vec<ParamWarning>), ParamError> {
        let warnings = params.validate()?;
        Ok((BoxLattice::new(params.d, params.side), warnings))
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_edges(&self) -> usize {
        self.d * self.per_axis
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn vertex_index(&self, point: &[i64]) -> Option<Vertex> {
        debug_assert_eq!(point.len(), self.d);
        let mut idx = 0usize;
        for (a, &c) in point.iter().enumerate() {
            if c < -self.side || c > self.side {
                return None;
            }
            idx += (c + self.side) as usize * self.strides[a];
        }
        Some(idx)
    }

    pub fn point(&self, v: Vertex) -> Vec<i64> {
        (0..self.d).map(|a| self.coord(v, a)).collect()
    }

    #[inline]
    pub fn coord(&self, v: Vertex, axis: usize) -> i64 {
        ((v / self.strides[axis]) % self.width) as i64 - self.side
    }

    /// Edge id for the edge from `u` one step along `axis`; requires
    /// `coord(u, axis) < side`.
    #[inline]
    pub fn edge_index(&self, u: Vertex, axis: usize) -> Edge {
        debug_assert!(self.coord(u, axis) < self.side);
        // Pack with axis-coordinate width reduced by one.
        let mut packed = 0usize;
        let mut mul = 1usize;
        for a in (0..self.d).rev() {
            let c = (u / self.strides[a]) % self.width;
            packed += c * mul;
            mul *= if a == axis { self.width - 1 } else { self.width };
        }
        axis * self.per_axis + packed
    }

    /// Edge id for two adjacent vertices; panics if they are not neighbors.
    pub fn edge_between(&self, u: Vertex, v: Vertex) -> Edge {
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        for a in 0..self.d {
            if self.coord(lo, a) + 1 == self.coord(hi, a) && hi - lo == self.strides[a] {
                return self.edge_index(lo, a);
            }
        }
        panic!("vertices are not adjacent");
    }

    /// Endpoints of an edge, lexicographically smaller vertex first. The
    /// smaller endpoint is the fixed representative `x_e`.
    #[inline]
    pub fn endpoints(&self, e: Edge) -> (Vertex, Vertex) {
        let (u, axis) = self.edge_base(e);
        (u, u + self.strides[axis])
    }

    /// Decodes an edge id into (lower endpoint, axis).
    #[inline]
    pub fn edge_base(&self, e: Edge) -> (Vertex, usize) {
        let axis = e / self.per_axis;
        let mut packed = e % self.per_axis;
        let mut u = 0usize;
        for a in 0..self.d {
            let mut div = 1usize;
            for a2 in a + 1..self.d {
                div *= if a2 == axis { self.width - 1 } else { self.width };
            }
            let c = packed / div;
            packed %= div;
            u += c * self.strides[a];
        }
        (u, axis)
    }

    /// The fixed endpoint representative `x_e` (lexicographically smaller).
    #[inline]
    pub fn edge_rep(&self, e: Edge) -> Vertex {
        self.endpoints(e).0
    }

    pub fn axis_stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Up to `2d` incident (edge, neighbor) pairs of `v`.
    pub fn incident(&self, v: Vertex, out: &mut Vec<(Edge, Vertex)>) {
        out.clear();
        for a in 0..self.d {
            let c = (v / self.strides[a]) % self.width;
            if c + 1 < self.width {
                out.push((self.edge_index(v, a), v + self.strides[a]));
            }
            if c > 0 {
                let u = v - self.strides[a];
                out.push((self.edge_index(u, a), u));
            }
        }
    }

    pub fn is_boundary(&self, v: Vertex) -> bool {
        (0..self.d).any(|a| {
            let c = (v / self.strides[a]) % self.width;
            c == 0 || c + 1 == self.width
        })
    }

    /// l-infinity distance between two vertices.
    pub fn linf(&self, u: Vertex, v: Vertex) -> i64 {
        (0..self.d)
            .map(|a| (self.coord(u, a) - self.coord(v, a)).abs())
            .max()
            .unwrap()
    }

    /// l1 distance between two vertices.
    pub fn l1(&self, u: Vertex, v: Vertex) -> i64 {
        (0..self.d)
            .map(|a| (self.coord(u, a) - self.coord(v, a)).abs())
            .sum()
    }

    /// All vertices of the window `Lambda_radius(center) ∩ box`, ascending id.
    pub fn window_vertices(&self, center: Vertex, radius: i64) -> Vec<Vertex> {
        let mut lo = vec![0i64; self.d];
        let mut hi = vec![0i64; self.d];
        for a in 0..self.d {
            let c = self.coord(center, a);
            lo[a] = (c - radius).max(-self.side);
            hi[a] = (c + radius).min(self.side);
        }
        let mut cur = lo.clone();
        let mut out = Vec::new();
        loop {
            out.push(self.vertex_index(&cur).unwrap());
            let mut a = self.d;
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                if cur[a] < hi[a] {
                    cur[a] += 1;
                    break;
                }
                cur[a] = lo[a];
            }
        }
    }

    /// True when `Lambda_radius(center)` sticks out of the box.
    pub fn window_clipped(&self, center: Vertex, radius: i64) -> bool {
        (0..self.d).any(|a| {
            let c = self.coord(center, a);
            c - radius < -self.side || c + radius > self.side
        })
    }

    /// Edges with both endpoints in `Lambda_radius(x_e) ∩ box`, plus a flag
    /// set when the window was clipped at the box boundary.
    pub fn edge_window(&self, e: Edge, radius: i64) -> (Vec<Edge>, bool) {
        assert!(radius >= 1);
        let center = self.edge_rep(e);
        let clipped = self.window_clipped(center, radius);
        let verts = self.window_vertices(center, radius);
        let inside = |v: Vertex| self.linf(v, center) <= radius;
        let mut edges = Vec::new();
        for &v in &verts {
            for a in 0..self.d {
                let c = (v / self.strides[a]) % self.width;
                if c + 1 < self.width {
                    let w = v + self.strides[a];
                    if inside(w) {
                        edges.push(self.edge_index(v, a));
                    }
                }
            }
        }
        edges.sort_unstable();
        (edges, clipped)
    }
}

/// Substream domains; each (seed, domain, a, b) tuple names one independent
/// byte stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamDomain {
    Environment = 1,
    EdgeCopies = 2,
    AnimalField = 3,
    OracleFunction = 4,
    Perturbation = 5,
}

/// Deterministic RNG keyed by (master seed, domain, a, b). The full tuple is
/// the ChaCha seed, so distinct labels give independent streams regardless of
/// execution order or thread count.
pub fn stream(seed: u64, domain: StreamDomain, a: u64, b: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    key[16..24].copy_from_slice(&a.to_le_bytes());
    key[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::RngCore;

    #[test]
    fn small_box_counts() {
        let lat = BoxLattice::new(2, 1);
        assert_eq!(lat.n_vertices(), 9);
        assert_eq!(lat.n_edges(), 12);
    }

    #[test]
    fn d1_rejected() {
        let params = SimulationParams::new(1, 4, 0.5, 0);
        assert!(matches!(params.validate(), Err(ParamError::Invalid { key, .. }) if key == "d"));
    }

    #[test]
    fn d3_edge_count_by_enumeration() {
        let lat = BoxLattice::new(3, 2);
        // Exhaustive oracle: count nearest-neighbor pairs directly.
        let mut count = 0usize;
        for v in 0..lat.n_vertices() {
            for a in 0..3 {
                if lat.coord(v, a) < lat.side {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 300);
        assert_eq!(lat.n_edges(), 300);
    }

    #[test]
    fn edge_index_bijection() {
        for (d, side) in [(2usize, 3i64), (3, 2)] {
            let lat = BoxLattice::new(d, side);
            let mut seen = vec![false; lat.n_edges()];
            for v in 0..lat.n_vertices() {
                for a in 0..d {
                    if lat.coord(v, a) < side {
                        let e = lat.edge_index(v, a);
                        assert!(!seen[e], "edge id {e} hit twice");
                        seen[e] = true;
                        let (u, axis) = lat.edge_base(e);
                        assert_eq!((u, axis), (v, a));
                        let (lo, hi) = lat.endpoints(e);
                        assert_eq!(lo, v);
                        assert_eq!(hi, v + lat.axis_stride(a));
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
    }

    #[test]
    fn vertex_order_is_lexicographic() {
        let lat = BoxLattice::new(2, 2);
        let mut prev: Option<Vec<i64>> = None;
        for v in 0..lat.n_vertices() {
            let pt = lat.point(v);
            if let Some(p) = prev {
                assert!(p < pt);
            }
            prev = Some(pt);
        }
    }

    #[test]
    fn full_window_covers_box() {
        let lat = BoxLattice::new(2, 2);
        let e = lat.edge_index(lat.vertex_index(&[0, 0]).unwrap(), 0);
        let (edges, clipped) = lat.edge_window(e, 2 * lat.side);
        assert_eq!(edges.len(), lat.n_edges());
        assert!(clipped);
    }

    #[test]
    fn interior_unit_window() {
        let lat = BoxLattice::new(2, 4);
        let e = lat.edge_index(lat.vertex_index(&[0, 0]).unwrap(), 0);
        let (edges, clipped) = lat.edge_window(e, 1);
        // 3x3 sub-grid has 12 edges.
        assert_eq!(edges.len(), 12);
        assert!(!clipped);
    }

    #[test]
    fn boundary_window_flagged() {
        let lat = BoxLattice::new(2, 2);
        let corner = lat.vertex_index(&[-2, -2]).unwrap();
        let e = lat.edge_index(corner, 0);
        let (_, clipped) = lat.edge_window(e, 1);
        assert!(clipped);
    }

    #[test]
    fn streams_reproducible_and_distinct() {
        let mut a1 = stream(7, StreamDomain::Environment, 3, 0);
        let mut a2 = stream(7, StreamDomain::Environment, 3, 0);
        let mut b = stream(7, StreamDomain::Environment, 4, 0);
        let xs1: Vec<u64> = (0..8).map(|_| a1.next_u64()).collect();
        let xs2: Vec<u64> = (0..8).map(|_| a2.next_u64()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.next_u64()).collect();
        assert_eq!(xs1, xs2);
        assert_ne!(xs1, ys);
    }

    #[test]
    fn default_m_matches_convention() {
        assert_eq!(default_m(64), 17);
    }

    #[test]
    fn c_star_warning_below_threshold() {
        let mut params = SimulationParams::new(2, 8, 0.6, 0);
        params.c_star = 4;
        let warnings = params.validate().unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(warnings[0].key, "c_star");
    }
}
