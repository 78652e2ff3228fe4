//! Coupled dynamical edge-weight environments.
//!
//! One sample carries three independent per-edge fields: the original open
//! bits, an independent copy, and the resampling uniforms that couple every
//! noise level. All t-views and truncations are read-only projections of the
//! same sample.

use crate::lattice::{stream, BoxLattice, Edge, SimulationParams, StreamDomain};
use rand::Rng;

/// Per-edge triple (omega, omega', U) for one Monte Carlo sample.
#[derive(Debug, Clone)]
pub struct CoupledEnvironment {
    pub open_0: Vec<bool>,
    pub open_prime: Vec<bool>,
    pub uniforms: Vec<f64>,
    pub sample_index: u64,
    pub seed: u64,
    pub p: f64,
}

/// Identifies the sample a derived object came from, so results from
/// different environments are never mixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenerationTag {
    pub seed: u64,
    pub sample_index: u64,
}

impl CoupledEnvironment {
    pub fn tag(&self) -> GenerationTag {
        GenerationTag {
            seed: self.seed,
            sample_index: self.sample_index,
        }
    }
}

/// Samples the three independent fields for one sample index. Deterministic
/// given (seed, sample_index).
pub fn sample_environment(
    lattice: &BoxLattice,
    params: &SimulationParams,
    sample_index: u64,
) -> CoupledEnvironment {
    let mut rng = stream(params.seed, StreamDomain::Environment, sample_index, 0);
    let n = lattice.n_edges();
    let p = params.p;
    let open_0: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < p).collect();
    let open_prime: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < p).collect();
    let uniforms: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    CoupledEnvironment {
        open_0,
        open_prime,
        uniforms,
        sample_index,
        seed: params.seed,
        p,
    }
}

/// Weight convention of a view: closed edges are absent (chemical) or cost M
/// (truncated).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Chemical,
    Truncated(u32),
}

impl Mode {
    /// Cost of a closed edge in truncated mode.
    pub fn closed_cost(self) -> Option<u32> {
        match self {
            Mode::Chemical => None,
            Mode::Truncated(m) => Some(m),
        }
    }
}

/// Single-edge override value, the sigma_e^a operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverrideState {
    Open,
    Closed,
}

/// A read-only weight view of one environment at noise level t, optionally
/// with one edge overridden.
#[derive(Debug, Clone, Copy)]
pub struct EnvironmentView<'a> {
    pub env: &'a CoupledEnvironment,
    pub t: f64,
    pub mode: Mode,
    pub override_edge: Option<(Edge, OverrideState)>,
}

impl<'a> EnvironmentView<'a> {
    /// Open/closed state of edge `e` at noise level t: the original bit when
    /// `U_e >= t`, the resampled bit when `U_e < t`.
    #[inline]
    pub fn is_open(&self, e: Edge) -> bool {
        if let Some((oe, st)) = self.override_edge {
            if oe == e {
                return st == OverrideState::Open;
            }
        }
        if self.env.uniforms[e] < self.t {
            self.env.open_prime[e]
        } else {
            self.env.open_0[e]
        }
    }

    /// Cost of traversing `e` in truncated mode (1 or M).
    #[inline]
    pub fn cost(&self, e: Edge) -> u32 {
        if self.is_open(e) {
            1
        } else {
            match self.mode {
                Mode::Truncated(m) => m,
                Mode::Chemical => panic!("cost() queried on a chemical-mode view"),
            }
        }
    }

    /// The same view with edge `e` forced to `state`. Stacking a second
    /// override replaces the first, so callers needing two distinct edges
    /// overridden must apply them to distinct edges through `with_override`
    /// twice only when the edges coincide in effect.
    pub fn with_override(&self, e: Edge, state: OverrideState) -> EnvironmentView<'a> {
        EnvironmentView {
            override_edge: Some((e, state)),
            ..*self
        }
    }
}

/// The t-view of an environment.
pub fn view_at(env: &CoupledEnvironment, t: f64, mode: Mode) -> EnvironmentView<'_> {
    assert!((0.0..=1.0).contains(&t), "noise level out of range: {t}");
    EnvironmentView {
        env,
        t,
        mode,
        override_edge: None,
    }
}
