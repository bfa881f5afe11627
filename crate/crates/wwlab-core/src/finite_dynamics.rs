//! Finite measure-preserving systems and observables on them.
//!
//! A [`FiniteSystem`] is a permutation `T` of `{0, .., M-1}` together with
//! probability weights that are constant along `T`-orbits. The orbit
//! decomposition is computed once, so `T^n` costs `O(1)` for any integer
//! `n`.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::{abs, gcd, pow};
use crate::sum::{sum, sum_complex, ComplexNeumaier, Neumaier};
use crate::{Error, Result};

/// Largest number of points a system may have.
pub const MAX_POINTS: usize = 1 << 20;

/// Largest seminorm order accepted by [`ghk_seminorm`].
pub const MAX_GHK_ORDER: usize = 4;

const WEIGHT_TOL: f64 = 1e-12;

/// Declarative description of a finite system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    /// `x -> x + 1 (mod p)`.
    CyclicShift { p: usize },
    /// `x -> x + j (mod p)` with `gcd(j, p) = 1`, a rational rotation by
    /// `j / p`.
    RotationApprox { p: usize, j: usize },
    /// `(x, y) -> (x + 1, y + x)` on `Z_p x Z_p`, indexed as `x * p + y`.
    SkewProduct { p: usize },
    /// A uniformly random permutation drawn from a seeded ChaCha stream.
    RandomPermutation { size: usize, seed: u64 },
    /// The identity map.
    Identity { size: usize },
    /// Direct product, indexed as `a * |B| + b`.
    Product { a: Box<SystemSpec>, b: Box<SystemSpec> },
}

impl SystemSpec {
    /// Number of points the system will have, or an error if it would
    /// exceed [`MAX_POINTS`].
    pub fn size(&self) -> Result<usize> {
        let n = match self {
            SystemSpec::CyclicShift { p } | SystemSpec::RotationApprox { p, .. } => *p,
            SystemSpec::SkewProduct { p } => p
                .checked_mul(*p)
                .ok_or_else(|| Error::InvalidSystem(String::from("skew product too large")))?,
            SystemSpec::RandomPermutation { size, .. } | SystemSpec::Identity { size } => *size,
            SystemSpec::Product { a, b } => a
                .size()?
                .checked_mul(b.size()?)
                .ok_or_else(|| Error::InvalidSystem(String::from("product too large")))?,
        };
        if n == 0 {
            return Err(Error::InvalidSystem(String::from("system has no points")));
        }
        if n > MAX_POINTS {
            return Err(Error::InvalidSystem(format!(
                "{n} points exceeds the limit of {MAX_POINTS}"
            )));
        }
        Ok(n)
    }

    fn forward_map(&self) -> Result<Vec<u32>> {
        let m = self.size()?;
        let map = match self {
            SystemSpec::CyclicShift { p } => (0..*p).map(|x| ((x + 1) % p) as u32).collect(),
            SystemSpec::RotationApprox { p, j } => {
                if gcd(*j as u64, *p as u64) != 1 {
                    return Err(Error::InvalidSystem(format!(
                        "rotation step {j} is not coprime to {p}"
                    )));
                }
                (0..*p).map(|x| ((x + j) % p) as u32).collect()
            }
            SystemSpec::SkewProduct { p } => {
                let p = *p;
                let mut map = vec![0u32; m];
                for x in 0..p {
                    for y in 0..p {
                        map[x * p + y] = (((x + 1) % p) * p + (y + x) % p) as u32;
                    }
                }
                map
            }
            SystemSpec::RandomPermutation { size, seed } => {
                let mut map: Vec<u32> = (0..*size as u32).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                map.shuffle(&mut rng);
                map
            }
            SystemSpec::Identity { size } => (0..*size as u32).collect(),
            SystemSpec::Product { a, b } => {
                let fa = a.forward_map()?;
                let fb = b.forward_map()?;
                let nb = fb.len();
                let mut map = Vec::with_capacity(m);
                for &ia in &fa {
                    for &ib in &fb {
                        map.push((ia as usize * nb + ib as usize) as u32);
                    }
                }
                map
            }
        };
        Ok(map)
    }

    /// Orbit-constant weights for products of weighted systems are not
    /// expressible in a spec, so specs always carry uniform weights.
    fn uniform_weights(m: usize) -> Vec<f64> {
        vec![1.0 / m as f64; m]
    }
}

/// A permutation of `{0, .., M-1}` with invariant probability weights.
#[derive(Debug, Clone)]
pub struct FiniteSystem {
    spec: SystemSpec,
    weights: Vec<f64>,
    forward: Vec<u32>,
    orbit_of: Vec<u32>,
    position: Vec<u32>,
    orbits: Vec<Vec<u32>>,
    uniform: bool,
}

impl FiniteSystem {
    /// Builds the system described by `spec` with uniform weights.
    pub fn build(spec: &SystemSpec) -> Result<Self> {
        let m = spec.size()?;
        Self::assemble(spec.clone(), spec.forward_map()?, SystemSpec::uniform_weights(m), true)
    }

    /// Builds `spec` with explicit weights, which must be positive, sum to
    /// one and be constant on orbits.
    pub fn with_weights(spec: &SystemSpec, weights: Vec<f64>) -> Result<Self> {
        let m = spec.size()?;
        if weights.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidSystem(String::from(
                "weights must be finite and positive",
            )));
        }
        let total = sum(weights.iter().copied());
        if libm::fabs(total - 1.0) > WEIGHT_TOL * m as f64 {
            return Err(Error::InvalidSystem(format!("weights sum to {total}, not 1")));
        }
        Self::assemble(spec.clone(), spec.forward_map()?, weights, false)
    }

    fn assemble(spec: SystemSpec, forward: Vec<u32>, weights: Vec<f64>, uniform: bool) -> Result<Self> {
        let m = forward.len();
        let mut seen = vec![false; m];
        for &t in &forward {
            let t = t as usize;
            if t >= m || seen[t] {
                return Err(Error::InvalidSystem(String::from("forward map is not a permutation")));
            }
            seen[t] = true;
        }
        for i in 0..m {
            let wi = weights[i];
            let wt = weights[forward[i] as usize];
            if libm::fabs(wi - wt) > WEIGHT_TOL * libm::fmax(wi, wt) {
                return Err(Error::InvalidSystem(format!(
                    "weight is not invariant at point {i}"
                )));
            }
        }
        let mut orbit_of = vec![u32::MAX; m];
        let mut position = vec![0u32; m];
        let mut orbits = Vec::new();
        for start in 0..m {
            if orbit_of[start] != u32::MAX {
                continue;
            }
            let id = orbits.len() as u32;
            let mut cycle = Vec::new();
            let mut x = start;
            loop {
                orbit_of[x] = id;
                position[x] = cycle.len() as u32;
                cycle.push(x as u32);
                x = forward[x] as usize;
                if x == start {
                    break;
                }
            }
            orbits.push(cycle);
        }
        Ok(Self {
            spec,
            weights,
            forward,
            orbit_of,
            position,
            orbits,
            uniform,
        })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn size(&self) -> usize {
        self.forward.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn forward(&self, i: usize) -> usize {
        self.forward[i] as usize
    }

    /// The cycles of `T`, each listed in the order `x, Tx, T^2 x, ..`.
    pub fn orbits(&self) -> &[Vec<u32>] {
        &self.orbits
    }

    /// `T^n(i)` for any integer `n`, negative included.
    #[inline]
    pub fn iterate(&self, i: usize, n: i64) -> usize {
        self.iterate_wide(i, n as i128)
    }

    /// `T^n(i)` for exponents that may exceed `i64`, such as polynomial
    /// values.
    #[inline]
    pub fn iterate_wide(&self, i: usize, n: i128) -> usize {
        let cycle = &self.orbits[self.orbit_of[i] as usize];
        let len = cycle.len() as i128;
        let pos = (self.position[i] as i128 + n).rem_euclid(len);
        cycle[pos as usize] as usize
    }

    fn check_len(&self, f: &Observable) -> Result<()> {
        if f.len() != self.size() {
            return Err(Error::DimensionMismatch {
                expected: self.size(),
                found: f.len(),
            });
        }
        Ok(())
    }
}

/// A complex function on the points of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct Observable {
    values: Vec<Complex64>,
    sup_norm: f64,
}

impl TryFrom<Vec<Complex64>> for Observable {
    type Error = Error;
    fn try_from(values: Vec<Complex64>) -> Result<Self> {
        Observable::new(values)
    }
}

impl From<Observable> for Vec<Complex64> {
    fn from(f: Observable) -> Self {
        f.values
    }
}

impl Observable {
    pub fn new(values: Vec<Complex64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidObservable(String::from("no values")));
        }
        if let Some(i) = values.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidObservable(format!("non-finite value at point {i}")));
        }
        Ok(Self::from_values_unchecked(values))
    }

    fn from_values_unchecked(values: Vec<Complex64>) -> Self {
        let sup_norm = values.iter().map(|z| abs(*z)).fold(0.0, f64::max);
        Self { values, sup_norm }
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn constant(len: usize, c: Complex64) -> Result<Self> {
        Self::new(vec![c; len])
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    #[inline]
    pub fn get(&self, i: usize) -> Complex64 {
        self.values[i]
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|z| z.im == 0.0)
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, op: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_values_unchecked(self.values.iter().map(|&z| op(z)).collect())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|z| z * c)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    /// Pointwise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    fn zip(&self, other: &Self, op: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: other.len(),
            });
        }
        Ok(Self::from_values_unchecked(
            self.values.iter().zip(&other.values).map(|(&a, &b)| op(a, b)).collect(),
        ))
    }
}

/// `f o T^a`.
pub fn shift_observable(sys: &FiniteSystem, f: &Observable, a: i64) -> Result<Observable> {
    sys.check_len(f)?;
    Ok(Observable::from_values_unchecked(
        (0..sys.size()).map(|i| f.get(sys.iterate(i, a))).collect(),
    ))
}

/// `f (x) g` on the product of the systems carrying `f` and `g`, indexed
/// as `a * |B| + b`.
pub fn tensor(f: &Observable, g: &Observable) -> Observable {
    let mut out = Vec::with_capacity(f.len() * g.len());
    for &a in f.values() {
        for &b in g.values() {
            out.push(a * b);
        }
    }
    Observable::from_values_unchecked(out)
}

/// Which integral functional to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integral {
    /// `integral of f`.
    Mean,
    /// `(integral of |f|^p)^(1/p)` for finite `p > 0`.
    Lp(f64),
    /// Essential supremum; on a finite system with positive weights this
    /// is the maximum modulus.
    Sup,
}

/// Evaluates an integral functional. The mean is complex; norms are
/// returned with zero imaginary part.
pub fn integrate(sys: &FiniteSystem, f: &Observable, kind: Integral) -> Result<Complex64> {
    sys.check_len(f)?;
    match kind {
        Integral::Mean => Ok(mean_unchecked(sys, f.values())),
        Integral::Lp(p) => {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::InvalidParameter(format!("norm exponent {p}")));
            }
            Ok(Complex64::new(lp_unchecked(sys, f.values(), p), 0.0))
        }
        Integral::Sup => Ok(Complex64::new(f.sup_norm(), 0.0)),
    }
}

/// `integral of f`.
pub fn mean(sys: &FiniteSystem, f: &Observable) -> Result<Complex64> {
    integrate(sys, f, Integral::Mean)
}

/// `||f||_p` for finite `p > 0`.
pub fn lp_norm(sys: &FiniteSystem, f: &Observable, p: f64) -> Result<f64> {
    integrate(sys, f, Integral::Lp(p)).map(|z| z.re)
}

pub(crate) fn mean_unchecked(sys: &FiniteSystem, values: &[Complex64]) -> Complex64 {
    sum_complex(values.iter().zip(sys.weights()).map(|(&z, &w)| z * w))
}

pub(crate) fn lp_unchecked(sys: &FiniteSystem, values: &[Complex64], p: f64) -> f64 {
    if p == 2.0 {
        let s = sum(values.iter().zip(sys.weights()).map(|(z, &w)| w * z.norm_sqr()));
        return libm::sqrt(s);
    }
    let s = sum(values.iter().zip(sys.weights()).map(|(&z, &w)| w * pow(abs(z), p)));
    pow(s, 1.0 / p)
}

/// Weighted `L^2` norm of nonnegative pointwise values.
pub(crate) fn l2_of_values(sys: &FiniteSystem, values: &[f64]) -> f64 {
    libm::sqrt(sum(values.iter().zip(sys.weights()).map(|(&v, &w)| w * v * v)))
}

/// Weighted `L^1` norm of nonnegative pointwise values.
pub(crate) fn l1_of_values(sys: &FiniteSystem, values: &[f64]) -> f64 {
    sum(values.iter().zip(sys.weights()).map(|(&v, &w)| w * v))
}

/// `integral of f * conj(g)`.
pub fn inner(sys: &FiniteSystem, f: &Observable, g: &Observable) -> Result<Complex64> {
    sys.check_len(f)?;
    sys.check_len(g)?;
    Ok(sum_complex(
        (0..sys.size()).map(|i| f.get(i) * g.get(i).conj() * sys.weight(i)),
    ))
}

/// `sigma_f(n) = integral of f * conj(f o T^n)`.
pub fn spectral_coefficient(sys: &FiniteSystem, f: &Observable, n: i64) -> Result<Complex64> {
    sys.check_len(f)?;
    Ok(spectral_unchecked(sys, f.values(), n))
}

pub(crate) fn spectral_unchecked(sys: &FiniteSystem, f: &[Complex64], n: i64) -> Complex64 {
    let mut acc = ComplexNeumaier::new();
    for i in 0..f.len() {
        acc.add(f[i] * f[sys.iterate(i, n)].conj() * sys.weight(i));
    }
    acc.value()
}

/// A partition of the points into labelled cells `0 .. cell_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    labels: Vec<u32>,
    cell_count: usize,
}

impl Partition {
    /// Labels need not be contiguous; they are compacted in order of first
    /// appearance.
    pub fn new(labels: &[u32]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidParameter(String::from("empty partition")));
        }
        let mut map: Vec<(u32, u32)> = Vec::new();
        let mut out = Vec::with_capacity(labels.len());
        for &l in labels {
            let id = match map.iter().find(|(k, _)| *k == l) {
                Some(&(_, v)) => v,
                None => {
                    let v = map.len() as u32;
                    map.push((l, v));
                    v
                }
            };
            out.push(id);
        }
        Ok(Self {
            labels: out,
            cell_count: map.len(),
        })
    }

    /// The partition of `Z_m`-indexed points by residue modulo `r`.
    pub fn residues(m: usize, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidParameter(String::from("zero modulus")));
        }
        Self::new(&(0..m).map(|x| (x % r) as u32).collect::<Vec<_>>())
    }

    pub fn cell(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Checks that `T` maps every cell onto a single cell, so that the
    /// generated sigma-algebra is `T`-invariant.
    pub fn check_invariant(&self, sys: &FiniteSystem) -> Result<()> {
        if self.len() != sys.size() {
            return Err(Error::DimensionMismatch {
                expected: sys.size(),
                found: self.len(),
            });
        }
        let mut image = vec![u32::MAX; self.cell_count];
        for i in 0..sys.size() {
            let c = self.cell(i);
            let target = self.labels[sys.forward(i)];
            if image[c] == u32::MAX {
                image[c] = target;
            } else if image[c] != target {
                return Err(Error::NotInvariant(format!(
                    "cell {c} is split by the transformation"
                )));
            }
        }
        Ok(())
    }
}

/// `E(f | B)` for the sigma-algebra generated by a `T`-invariant partition.
pub fn conditional_expectation(
    sys: &FiniteSystem,
    f: &Observable,
    partition: &Partition,
) -> Result<Observable> {
    sys.check_len(f)?;
    partition.check_invariant(sys)?;
    let cells = partition.cell_count();
    let mut mass = vec![Neumaier::new(); cells];
    let mut total = vec![ComplexNeumaier::new(); cells];
    for i in 0..sys.size() {
        let c = partition.cell(i);
        mass[c].add(sys.weight(i));
        total[c].add(f.get(i) * sys.weight(i));
    }
    let avg: Vec<Complex64> = (0..cells).map(|c| total[c].value() / mass[c].value()).collect();
    Ok(Observable::from_values_unchecked(
        (0..sys.size()).map(|i| avg[partition.cell(i)]).collect(),
    ))
}

/// The finite-horizon Gowers-Host-Kra seminorm `|||f|||_k` with shifts
/// `h = 1 ..= H`.
///
/// `|||f|||_1^2 = |integral f|^2`, and for `k >= 2`
/// `|||f|||_k^(2^k) = (1/H) sum_h |||f * conj(f o T^h)|||_(k-1)^(2^(k-1))`.
pub fn ghk_seminorm(sys: &FiniteSystem, f: &Observable, k: usize, h_max: usize) -> Result<f64> {
    sys.check_len(f)?;
    if k == 0 || k > MAX_GHK_ORDER {
        return Err(Error::InvalidParameter(format!(
            "seminorm order {k} outside 1..={MAX_GHK_ORDER}"
        )));
    }
    if h_max == 0 {
        return Err(Error::InvalidParameter(String::from("H must be positive")));
    }
    let power = ghk_power(sys, f.values(), k, h_max);
    Ok(pow(power.max(0.0), 1.0 / (1u64 << k) as f64))
}

fn ghk_power(sys: &FiniteSystem, f: &[Complex64], k: usize, h_max: usize) -> f64 {
    if k == 1 {
        return mean_unchecked(sys, f).norm_sqr();
    }
    if k == 2 {
        let terms = (1..=h_max).map(|h| spectral_unchecked(sys, f, h as i64).norm_sqr());
        return sum(terms) / h_max as f64;
    }
    let mut acc = Neumaier::new();
    let mut derivative = vec![Complex64::new(0.0, 0.0); f.len()];
    for h in 1..=h_max {
        for i in 0..f.len() {
            derivative[i] = f[i] * f[sys.iterate(i, h as i64)].conj();
        }
        acc.add(ghk_power(sys, &derivative, k - 1, h_max));
    }
    acc.value() / h_max as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::e;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cyclic(p: usize) -> FiniteSystem {
        FiniteSystem::build(&SystemSpec::CyclicShift { p }).unwrap()
    }

    fn phases(seed: u64, m: usize) -> Observable {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Observable::new((0..m).map(|_| e(rng.gen::<f64>())).collect()).unwrap()
    }

    #[test]
    fn cyclic_iteration_wraps_both_ways() {
        let sys = cyclic(7);
        assert_eq!(sys.iterate(3, 5), 1);
        assert_eq!(sys.iterate(3, -5), 5);
        assert_eq!(sys.iterate(0, -1), 6);
        assert_eq!(sys.iterate_wide(2, 7 * (1i128 << 80) + 3), 5);
    }

    #[test]
    fn spec_sizes_and_limits() {
        let prod = SystemSpec::Product {
            a: Box::new(SystemSpec::CyclicShift { p: 5 }),
            b: Box::new(SystemSpec::CyclicShift { p: 7 }),
        };
        let sys = FiniteSystem::build(&prod).unwrap();
        assert_eq!(sys.size(), 35);
        assert_eq!(sys.orbits().len(), 1);
        let same = SystemSpec::Product {
            a: Box::new(SystemSpec::CyclicShift { p: 5 }),
            b: Box::new(SystemSpec::CyclicShift { p: 5 }),
        };
        assert_eq!(FiniteSystem::build(&same).unwrap().orbits().len(), 5);
        let huge = SystemSpec::Product {
            a: Box::new(SystemSpec::Identity { size: 1 << 11 }),
            b: Box::new(SystemSpec::Identity { size: 1 << 10 }),
        };
        assert!(matches!(FiniteSystem::build(&huge), Err(Error::InvalidSystem(_))));
        assert!(FiniteSystem::build(&SystemSpec::RotationApprox { p: 12, j: 4 }).is_err());
        assert!(FiniteSystem::build(&SystemSpec::CyclicShift { p: 0 }).is_err());
    }

    #[test]
    fn weights_must_be_orbit_constant() {
        let spec = SystemSpec::Identity { size: 3 };
        assert!(FiniteSystem::with_weights(&spec, vec![0.5, 0.25, 0.25]).is_ok());
        let shift = SystemSpec::CyclicShift { p: 3 };
        let err = FiniteSystem::with_weights(&shift, vec![0.5, 0.25, 0.25]).unwrap_err();
        assert!(matches!(err, Error::InvalidSystem(_)));
        assert!(FiniteSystem::with_weights(&spec, vec![0.5, 0.25, 0.2]).is_err());
    }

    #[test]
    fn cyclic_sigma_of_character() {
        let sys = cyclic(11);
        let f = Observable::new((0..11).map(|x| e(3.0 * x as f64 / 11.0)).collect()).unwrap();
        for n in -5..5 {
            let s = spectral_coefficient(&sys, &f, n).unwrap();
            let expected = e(-3.0 * n as f64 / 11.0);
            assert!((s - expected).norm() < 1e-13);
        }
    }

    #[test]
    fn integrals_on_small_example() {
        let sys = FiniteSystem::with_weights(&SystemSpec::Identity { size: 2 }, vec![0.25, 0.75]).unwrap();
        let f = Observable::new(vec![c(2.0, 0.0), c(0.0, -2.0)]).unwrap();
        assert_eq!(mean(&sys, &f).unwrap(), c(0.5, -1.5));
        assert!((lp_norm(&sys, &f, 2.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((lp_norm(&sys, &f, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(integrate(&sys, &f, Integral::Sup).unwrap().re, 2.0);
        assert!(integrate(&sys, &f, Integral::Lp(0.0)).is_err());
    }

    #[test]
    fn conditional_expectation_on_parity_cells() {
        let sys = cyclic(6);
        let f = Observable::from_real(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let parity = Partition::residues(6, 2).unwrap();
        let ef = conditional_expectation(&sys, &f, &parity).unwrap();
        let expect = [3.0, 4.0, 3.0, 4.0, 3.0, 4.0];
        for (i, v) in expect.iter().enumerate() {
            assert!((ef.get(i).re - v).abs() < 1e-15);
        }
        let split = Partition::new(&[0, 0, 1, 1, 1, 1]).unwrap();
        assert!(matches!(
            conditional_expectation(&sys, &f, &split),
            Err(Error::NotInvariant(_))
        ));
    }

    /// `|||f|||_2^4 = sum_j |f^(j)|^4` on `Z_p` with `H = p`.
    fn fourier_oracle(f: &Observable) -> f64 {
        let p = f.len();
        let mut total = 0.0;
        for j in 0..p {
            let mut acc = c(0.0, 0.0);
            for x in 0..p {
                acc += f.get(x) * e(-((j * x) as f64) / p as f64);
            }
            total += (acc / p as f64).norm_sqr().powi(2);
        }
        total.powf(0.25)
    }

    #[test]
    fn ghk_matches_fourier_oracle() {
        for &p in &[5usize, 13, 31] {
            let sys = cyclic(p);
            for seed in 0..5 {
                let f = phases(seed, p);
                let got = ghk_seminorm(&sys, &f, 2, p).unwrap();
                assert!((got - fourier_oracle(&f)).abs() < 1e-12, "p={p} seed={seed}");
            }
        }
    }

    #[test]
    fn ghk_rejects_large_order() {
        let sys = cyclic(5);
        let f = phases(1, 5);
        assert!(ghk_seminorm(&sys, &f, 5, 3).is_err());
        assert!(ghk_seminorm(&sys, &f, 0, 3).is_err());
        assert!(ghk_seminorm(&sys, &f, 4, 3).is_ok());
    }

    proptest! {
        #[test]
        fn iterate_is_a_group_action(p in 1usize..40, i in 0usize..40, a in -200i64..200, b in -200i64..200) {
            let sys = cyclic(p);
            let i = i % p;
            prop_assert_eq!(sys.iterate(sys.iterate(i, a), b), sys.iterate(i, a + b));
        }

        #[test]
        fn random_permutation_preserves_integrals(size in 1usize..64, seed in any::<u64>(), shift in -50i64..50) {
            let sys = FiniteSystem::build(&SystemSpec::RandomPermutation { size, seed }).unwrap();
            let f = phases(seed ^ 0x5a, size);
            let g = shift_observable(&sys, &f, shift).unwrap();
            let a = mean(&sys, &f).unwrap();
            let b = mean(&sys, &g).unwrap();
            prop_assert!((a - b).norm() < 1e-12);
        }

        #[test]
        fn skew_product_is_measure_preserving(p in 1usize..12, shift in -30i64..30) {
            let sys = FiniteSystem::build(&SystemSpec::SkewProduct { p }).unwrap();
            let f = phases(p as u64, p * p);
            let g = shift_observable(&sys, &f, shift).unwrap();
            prop_assert!((lp_norm(&sys, &f, 1.5).unwrap() - lp_norm(&sys, &g, 1.5).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn conditional_expectation_preserves_mean(m in 1usize..20, seed in any::<u64>()) {
            let p = 2 * m;
            let sys = cyclic(p);
            let f = phases(seed, p);
            let cells = Partition::residues(p, 2).unwrap();
            let ef = conditional_expectation(&sys, &f, &cells).unwrap();
            prop_assert!((mean(&sys, &f).unwrap() - mean(&sys, &ef).unwrap()).norm() < 1e-12);
            let again = conditional_expectation(&sys, &ef, &cells).unwrap();
            for i in 0..p {
                prop_assert!((again.get(i) - ef.get(i)).norm() < 1e-12);
            }
        }

        #[test]
        fn ghk_is_at_most_sup_norm(p in 2usize..20, k in 1usize..4, seed in any::<u64>()) {
            let sys = cyclic(p);
            let f = phases(seed, p);
            let v = ghk_seminorm(&sys, &f, k, p.min(6)).unwrap();
            prop_assert!(v <= f.sup_norm() + 1e-12);
        }
    }
}
