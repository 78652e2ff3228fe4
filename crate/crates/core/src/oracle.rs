//! Exact enumeration oracle for the resampling-covariance identities.
//!
//! Everything here works on a finite index set of two-valued coordinates with
//! an explicitly tabulated function, so every identity (the covariance
//! representation, the Margulis-Russo derivative formula, single-coordinate
//! monotonicity, nesting consistency) can be checked as an exact polynomial
//! identity in rational arithmetic.

use crate::lattice::{stream, StreamDomain};
use crate::poly::Poly;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("identity mismatch at degree {degree}: lhs {lhs}, rhs {rhs}")]
    Mismatch {
        degree: usize,
        lhs: BigRational,
        rhs: BigRational,
    },
    #[error("slope {0} is positive")]
    PositiveSlope(BigRational),
}

/// A finite two-valued product space with a tabulated function. Configuration
/// masks use bit e set for the high value.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub n: usize,
    pub p: BigRational,
    pub lo: BigRational,
    pub hi: BigRational,
    /// Table of length 2^n indexed by configuration mask.
    pub f: Vec<BigRational>,
}

pub const MAX_COORDS: usize = 12;

impl OracleInstance {
    pub fn new(
        n: usize,
        p: BigRational,
        lo: BigRational,
        hi: BigRational,
        f: Vec<BigRational>,
    ) -> Result<Self, OracleError> {
        if n == 0 || n > MAX_COORDS {
            return Err(OracleError::Invalid(format!("n = {n} out of range")));
        }
        if p <= BigRational::zero() || p >= BigRational::one() {
            return Err(OracleError::Invalid(format!("p = {p} not in (0,1)")));
        }
        if lo > hi {
            return Err(OracleError::Invalid("lo exceeds hi".into()));
        }
        if f.len() != 1 << n {
            return Err(OracleError::Invalid(format!(
                "table length {} != 2^{n}",
                f.len()
            )));
        }
        Ok(OracleInstance { n, p, lo, hi, f })
    }

    /// Probability of a configuration: low coordinates carry p, high 1-p.
    fn prob(&self, mask: usize) -> BigRational {
        let q = BigRational::one() - &self.p;
        let ones = mask.count_ones() as usize;
        let mut acc = BigRational::one();
        for _ in 0..ones {
            acc *= &q;
        }
        for _ in 0..self.n - ones {
            acc *= &self.p;
        }
        acc
    }

    fn mean(&self) -> BigRational {
        (0..1usize << self.n)
            .map(|x| self.prob(x) * &self.f[x])
            .sum()
    }
}

/// Pseudorandom instance with small integer table values.
pub fn random_instance(n: usize, seed: u64, index: u64) -> OracleInstance {
    let mut rng = stream(seed, StreamDomain::OracleFunction, index, 0);
    let f = (0..1usize << n)
        .map(|_| BigRational::from(BigInt::from(rng.random_range(-8i64..=8))))
        .collect();
    OracleInstance::new(
        n,
        BigRational::new(BigInt::from(3), BigInt::from(5)),
        BigRational::one(),
        BigRational::from(BigInt::from(7)),
        f,
    )
    .expect("generated instance is valid")
}

/// Resample-mask weights t^k (1-t)^(n-k) by resampled-coordinate count.
fn mask_weights(n: usize) -> Vec<Poly> {
    let t = Poly::var();
    let one_minus_t = Poly::constant(BigRational::one()).sub(&t);
    (0..=n)
        .map(|k| t.pow(k).mul(&one_minus_t.pow(n - k)))
        .collect()
}

/// E[g(X, X(t))] as a polynomial in t, enumerating the configuration, the
/// resample mask, and the resampled values.
fn joint_moment(
    inst: &OracleInstance,
    g: &dyn Fn(usize, usize) -> BigRational,
) -> Poly {
    let n = inst.n;
    let full = (1usize << n) - 1;
    let weights = mask_weights(n);
    let mut out = Poly::zero();
    for s in 0..=full {
        let mut acc = BigRational::zero();
        for x in 0..=full {
            let px = inst.prob(x);
            // Average of g over resampled values on the mask s.
            let mut inner = BigRational::zero();
            let mut y = s;
            loop {
                // Probability of the resampled bits: within s, set bits carry
                // 1-p and clear bits p; bits off s contribute factor 1.
                let mut py = BigRational::one();
                let q = BigRational::one() - &inst.p;
                let mut bits = s;
                while bits != 0 {
                    let b = bits & bits.wrapping_neg();
                    py *= if y & b != 0 { &q } else { &inst.p };
                    bits ^= b;
                }
                let xs = (x & !s) | y;
                inner += py * g(x, xs);
                if y == 0 {
                    break;
                }
                y = (y - 1) & s;
            }
            acc += px * inner;
        }
        out = out.add(&weights[s.count_ones() as usize].scale(&acc));
    }
    out
}

/// Exact Cov(f(X), f(X(t))) as a polynomial in t.
pub fn covariance_poly(inst: &OracleInstance) -> Poly {
    let f = &inst.f;
    let joint = joint_moment(inst, &|x, xs| &f[x] * &f[xs]);
    let mean = inst.mean();
    joint.sub(&Poly::constant(&mean * &mean))
}

fn assert_poly_eq(lhs: &Poly, rhs: &Poly) -> Result<(), OracleError> {
    let n = lhs.coeffs.len().max(rhs.coeffs.len());
    for k in 0..n {
        let (a, b) = (lhs.coeff(k), rhs.coeff(k));
        if a != b {
            return Err(OracleError::Mismatch {
                degree: k,
                lhs: a,
                rhs: b,
            });
        }
    }
    Ok(())
}

/// High-to-low discrete derivative table at coordinate e; independent of the
/// e-th bit of the argument.
fn deriv_table(inst: &OracleInstance, e: usize) -> Vec<BigRational> {
    let bit = 1usize << e;
    (0..inst.f.len())
        .map(|x| &inst.f[x | bit] - &inst.f[x & !bit])
        .collect()
}

#[derive(Debug, Clone)]
pub struct RepresentationReport {
    pub covariance: Poly,
    pub rhs: Poly,
    /// Per-coordinate co-influence E[df(X) df(X(s))] as polynomials in s.
    pub per_edge: Vec<Poly>,
}

/// Checks, exactly in t:
///   Cov(f(X), f(X(t))) = p(1-p) * sum_e int_t^1 E[df_e(X) df_e(X(s))] ds
/// and, per coordinate and exactly in s, the resampled-value identity
///   E[grad_e^{X,X1} f(X) grad_e^{X,X2} f(X(s))] = p(1-p) E[df_e(X) df_e(X(s))].
pub fn verify_representation(inst: &OracleInstance) -> Result<RepresentationReport, OracleError> {
    let pq = &inst.p * (BigRational::one() - &inst.p);
    let mut rhs = Poly::zero();
    let mut per_edge = Vec::with_capacity(inst.n);
    for e in 0..inst.n {
        let df = deriv_table(inst, e);
        let g = joint_moment(inst, &|x, xs| &df[x] * &df[xs]);

        // Resampled-value form of the same co-influence.
        let bit = 1usize << e;
        let f = &inst.f;
        let q = BigRational::one() - &inst.p;
        let mut lhs_poly = Poly::zero();
        for (v1, p1) in [(0usize, &inst.p), (bit, &q)] {
            for (v2, p2) in [(0usize, &inst.p), (bit, &q)] {
                let term = joint_moment(inst, &|x, xs| {
                    let a = &f[x] - &f[(x & !bit) | v1];
                    let b = &f[(xs & !bit) | (x & bit)] - &f[(xs & !bit) | v2];
                    a * b
                });
                lhs_poly = lhs_poly.add(&term.scale(&(p1 * p2)));
            }
        }
        assert_poly_eq(&lhs_poly, &g.scale(&pq))?;

        // int_t^1 g(s) ds as a polynomial in t.
        let anti = g.antiderivative();
        let at_one = Poly::constant(anti.eval(&BigRational::one()));
        rhs = rhs.add(&at_one.sub(&anti));
        per_edge.push(g);
    }
    let rhs = rhs.scale(&pq);
    let covariance = covariance_poly(inst);
    assert_poly_eq(&covariance, &rhs)?;
    Ok(RepresentationReport {
        covariance,
        rhs,
        per_edge,
    })
}

#[derive(Debug, Clone)]
pub struct DerivativeReport {
    /// E[f(X)] as a polynomial in p.
    pub mean_in_p: Poly,
    pub derivative: Poly,
    pub influence_sum: Poly,
}

/// Margulis-Russo formula: d/dp E[f(X)] equals the summed low-to-high
/// discrete derivatives, exactly as polynomials in p.
pub fn verify_russo(inst: &OracleInstance) -> Result<DerivativeReport, OracleError> {
    let n = inst.n;
    let full = (1usize << n) - 1;
    let p = Poly::var();
    let q = Poly::constant(BigRational::one()).sub(&p);
    // P(x) = p^{#low} (1-p)^{#high} as a polynomial in p.
    let prob_poly = |x: usize| -> Poly {
        let ones = x.count_ones() as usize;
        p.pow(n - ones).mul(&q.pow(ones))
    };
    let mut mean_in_p = Poly::zero();
    for x in 0..=full {
        mean_in_p = mean_in_p.add(&prob_poly(x).scale(&inst.f[x]));
    }
    let derivative = mean_in_p.derivative();
    let mut influence_sum = Poly::zero();
    for e in 0..n {
        let bit = 1usize << e;
        for x in 0..=full {
            // Low-to-high derivative f(sigma^lo) - f(sigma^hi).
            let d = &inst.f[x & !bit] - &inst.f[x | bit];
            influence_sum = influence_sum.add(&prob_poly(x).scale(&d));
        }
    }
    assert_poly_eq(&derivative, &influence_sum)?;
    Ok(DerivativeReport {
        mean_in_p,
        derivative,
        influence_sum,
    })
}

#[derive(Debug, Clone)]
pub struct MonotonicityReport {
    /// E[h(X) h(X with coordinate e resampled at rate t)], degree <= 1.
    pub phi: Poly,
    pub slope: BigRational,
}

/// Single-coordinate resampling can only decrease the product moment: the
/// slope of phi equals minus the squared-mean of the coordinate derivative.
pub fn verify_monotonicity(inst: &OracleInstance, e: usize) -> Result<MonotonicityReport, OracleError> {
    let bit = 1usize << e;
    let full = (1usize << inst.n) - 1;
    let h = &inst.f;
    let q = BigRational::one() - &inst.p;
    let mut same = BigRational::zero();
    let mut resampled = BigRational::zero();
    let mut expected_slope = BigRational::zero();
    for x in 0..=full {
        let px = inst.prob(x);
        same += &px * (&h[x] * &h[x]);
        let avg = &inst.p * &h[x & !bit] + &q * &h[x | bit];
        resampled += &px * (&h[x] * &avg);
        // -E[(h(x) - h(x with e:=v1)) (h(x) - h(x with e:=v2))]
        for (v1, p1) in [(0usize, &inst.p), (bit, &q)] {
            for (v2, p2) in [(0usize, &inst.p), (bit, &q)] {
                let a = &h[x] - &h[(x & !bit) | v1];
                let b = &h[x] - &h[(x & !bit) | v2];
                expected_slope -= &px * p1 * p2 * a * b;
            }
        }
    }
    // phi(t) = (1-t) E[h^2-ish same term] + t E[resampled term].
    let slope = &resampled - &same;
    let phi = Poly::from_coeffs(vec![same, slope.clone()]);
    if slope != expected_slope {
        return Err(OracleError::Mismatch {
            degree: 1,
            lhs: slope,
            rhs: expected_slope,
        });
    }
    if slope > BigRational::zero() {
        return Err(OracleError::PositiveSlope(slope));
    }
    Ok(MonotonicityReport { phi, slope })
}

/// True when the table ignores every coordinate outside `keep` (bitmask).
pub fn depends_only_on(inst: &OracleInstance, keep: usize) -> bool {
    (0..inst.f.len()).all(|x| inst.f[x] == inst.f[x & keep])
}

/// Restriction of an instance to the coordinates of `keep`; requires the
/// table to ignore the dropped coordinates.
pub fn restrict_instance(inst: &OracleInstance, keep: usize) -> Result<OracleInstance, OracleError> {
    if !depends_only_on(inst, keep) {
        return Err(OracleError::Invalid(
            "table depends on dropped coordinates".into(),
        ));
    }
    let coords: Vec<usize> = (0..inst.n).filter(|&e| keep & (1 << e) != 0).collect();
    if coords.is_empty() {
        return Err(OracleError::Invalid("empty restriction".into()));
    }
    let expand = |m: usize| -> usize {
        coords
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &e)| acc | (((m >> i) & 1) << e))
    };
    let f = (0..1usize << coords.len()).map(|m| inst.f[expand(m)].clone()).collect();
    OracleInstance::new(
        coords.len(),
        inst.p.clone(),
        inst.lo.clone(),
        inst.hi.clone(),
        f,
    )
}

/// Dropping coordinates the table ignores must not change the covariance
/// polynomial.
pub fn verify_nested_consistency(
    inst: &OracleInstance,
    keep: usize,
) -> Result<Poly, OracleError> {
    let sub = restrict_instance(inst, keep)?;
    let full_poly = covariance_poly(inst);
    let sub_poly = covariance_poly(&sub);
    assert_poly_eq(&full_poly, &sub_poly)?;
    Ok(full_poly)
}
