//! Uniform Wiener-Wintner averages.
//!
//! For `h in [1, S]^(k-1)` with `S = floor(sqrt N)` the cube product is
//! `prod_eta c^{|eta|} f o T^{eta . h}`, where `c` is complex conjugation and
//! `eta` runs over `{0,1}^(k-1)`. The strong average is
//!
//! `W_N^k(f) = S^{-(k-1)} sum_h || sup_t |(1/N) sum_{n=1}^N e(nt) (cube product)(T^n x)| ||_2^{2/3}`
//!
//! and the weak average moves the supremum outside the norm. Every entry
//! point returns a [`Bracket`]; the `2/3` power and the average over `h`
//! are applied to each endpoint separately.
//!
//! The pointwise supremum is evaluated along each orbit by a sliding
//! update of the grid values: moving from `x` to `Tx` drops the first
//! term, appends one term and rotates the phase, at a cost of `O(K)` per
//! point instead of `O(K N)`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::finite_dynamics::{l1_of_values, l2_of_values, FiniteSystem, Observable};
use crate::math::{floor_pow, isqrt};
use crate::par::try_map_indexed;
use crate::sum::{ComplexNeumaier, Neumaier};
use crate::trig_sup::{
    argmax, certificate_eps, check_oversample, modulus_inflation, sup_norm_trig, twiddles, Bracket,
};
use crate::{Error, Result, DEFAULT_BUDGET, DEFAULT_OVERSAMPLE};

/// Largest cube dimension `k` accepted by the averages.
pub const MAX_K: usize = 6;

/// A vertex `eta` of the discrete cube `{0,1}^dim`, bit `i` standing for
/// coordinate `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CubeVertex {
    bits: u32,
    dim: u8,
}

impl CubeVertex {
    pub fn new(bits: u32, dim: usize) -> Result<Self> {
        if dim > 31 || (dim < 32 && bits >> dim != 0) {
            return Err(Error::InvalidParameter(format!(
                "vertex {bits:#b} does not fit in dimension {dim}"
            )));
        }
        Ok(Self { bits, dim: dim as u8 })
    }

    pub fn from_coords(coords: &[bool]) -> Result<Self> {
        let bits = coords
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &b)| acc | ((b as u32) << i));
        Self::new(bits, coords.len())
    }

    /// All `2^dim` vertices in increasing bit order.
    pub fn all(dim: usize) -> impl Iterator<Item = CubeVertex> {
        (0..1u32 << dim).map(move |bits| CubeVertex { bits, dim: dim as u8 })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn dim(self) -> usize {
        self.dim as usize
    }

    pub fn coord(self, i: usize) -> bool {
        (self.bits >> i) & 1 == 1
    }

    /// `|eta|`.
    pub fn popcount(self) -> u32 {
        self.bits.count_ones()
    }

    /// `eta . h`.
    pub fn dot(self, h: &[i64]) -> i64 {
        h.iter()
            .enumerate()
            .filter(|(i, _)| self.coord(*i))
            .map(|(_, &x)| x)
            .sum()
    }

    /// `1 - eta`.
    pub fn complement(self) -> Self {
        let mask = if self.dim == 0 { 0 } else { u32::MAX >> (32 - self.dim as u32) };
        Self {
            bits: !self.bits & mask,
            dim: self.dim,
        }
    }

    /// `eta cap zeta`.
    pub fn intersection(self, other: Self) -> Self {
        Self {
            bits: self.bits & other.bits,
            dim: self.dim,
        }
    }

    /// `eta xor zeta`.
    pub fn symmetric_difference(self, other: Self) -> Self {
        Self {
            bits: self.bits ^ other.bits,
            dim: self.dim,
        }
    }
}

/// Functions `g_eta` indexed by the vertices of `{0,1}^(k-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CubeAssignment {
    k: usize,
    functions: Vec<Observable>,
}

impl CubeAssignment {
    /// `functions[eta.bits()]` is `g_eta`; the length must be `2^(k-1)`.
    pub fn new(k: usize, functions: Vec<Observable>) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidParameter(format!("k = {k} outside 1..={MAX_K}")));
        }
        let expected = 1usize << (k - 1);
        if functions.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: functions.len(),
            });
        }
        let len = functions[0].len();
        if let Some(bad) = functions.iter().find(|g| g.len() != len) {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: bad.len(),
            });
        }
        Ok(Self { k, functions })
    }

    /// Every vertex carries the same function.
    pub fn constant(k: usize, f: &Observable) -> Result<Self> {
        if k == 0 || k > MAX_K {
            return Err(Error::InvalidParameter(format!("k = {k} outside 1..={MAX_K}")));
        }
        Self::new(k, vec![f.clone(); 1 << (k - 1)])
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, eta: CubeVertex) -> &Observable {
        &self.functions[eta.bits() as usize]
    }

    pub fn functions(&self) -> &[Observable] {
        &self.functions
    }

    /// The assignment produced by reflecting `h_i -> S + 1 - h_i` for every
    /// coordinate outside `zeta` and shifting the base point. Its
    /// off-diagonal average equals that of `self` and its all-ones slot
    /// holds `g_zeta` up to conjugation.
    pub fn reflected(&self, sys: &FiniteSystem, zeta: CubeVertex, s: usize) -> Result<Self> {
        let dim = self.k - 1;
        if zeta.dim() != dim {
            return Err(Error::InvalidParameter(format!(
                "zeta has dimension {}, expected {dim}",
                zeta.dim()
            )));
        }
        let flip = zeta.complement();
        let mut out = Vec::with_capacity(self.functions.len());
        for target in CubeVertex::all(dim) {
            let source = target.symmetric_difference(flip);
            let g = self.get(source);
            let shift = (source.intersection(flip).popcount() as i64) * (s as i64 + 1);
            let mut moved = crate::finite_dynamics::shift_observable(sys, g, shift)?;
            if (source.popcount() + target.popcount()) % 2 == 1 {
                moved = moved.conj();
            }
            out.push(moved);
        }
        Self::new(self.k, out)
    }
}

/// `prod_eta c^{|eta|} g_eta o T^{eta . h}`.
pub fn cube_product(sys: &FiniteSystem, assignment: &CubeAssignment, h: &[i64]) -> Result<Observable> {
    let dim = assignment.k() - 1;
    if h.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: h.len(),
        });
    }
    if assignment.functions()[0].len() != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: assignment.functions()[0].len(),
        });
    }
    Observable::new(cube_values(sys, assignment, h))
}

fn cube_values(sys: &FiniteSystem, assignment: &CubeAssignment, h: &[i64]) -> Vec<Complex64> {
    let dim = assignment.k() - 1;
    let mut out = vec![Complex64::new(1.0, 0.0); sys.size()];
    for eta in CubeVertex::all(dim) {
        let g = assignment.get(eta);
        let shift = eta.dot(h);
        let conj = eta.popcount() % 2 == 1;
        for (x, slot) in out.iter_mut().enumerate() {
            let v = g.get(sys.iterate(x, shift));
            *slot *= if conj { v.conj() } else { v };
        }
    }
    out
}

/// Norm taken over the base point after the supremum in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PointNorm {
    L1,
    #[default]
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WwOptions {
    pub oversample: usize,
    pub norm: PointNorm,
    pub budget: u64,
}

impl Default for WwOptions {
    fn default() -> Self {
        Self {
            oversample: DEFAULT_OVERSAMPLE,
            norm: PointNorm::L2,
            budget: DEFAULT_BUDGET,
        }
    }
}

/// Schedule `r(N)` for the range of one cube coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleR {
    /// `floor(sqrt N)`.
    Sqrt,
    /// `floor(N^delta)`.
    Power { delta: f64 },
    /// `N`.
    Linear,
    /// Explicit `(N, r)` pairs.
    Table { values: Vec<(u64, u64)> },
}

impl ScheduleR {
    pub fn eval(&self, n: u64) -> Result<usize> {
        let r = match self {
            ScheduleR::Sqrt => isqrt(n),
            ScheduleR::Power { delta } => {
                if !(*delta > 0.0) {
                    return Err(Error::InvalidParameter(format!("schedule exponent {delta}")));
                }
                floor_pow(n, *delta)
            }
            ScheduleR::Linear => n,
            ScheduleR::Table { values } => values
                .iter()
                .find(|(key, _)| *key == n)
                .map(|(_, r)| *r)
                .ok_or(Error::Coverage { missing: n })?,
        };
        if r == 0 {
            return Err(Error::InvalidParameter(format!("schedule gives r({n}) = 0")));
        }
        Ok(r as usize)
    }
}

/// Cost model: one unit per grid point per sliding step, plus the direct
/// evaluations that start each orbit segment, for every cube tuple.
pub fn estimate_cost(sys: &FiniteSystem, tuples: u64, n: usize, oversample: usize) -> u64 {
    let k = (oversample * n) as u64;
    let mut per_tuple: u64 = 0;
    for orbit in sys.orbits() {
        let len = orbit.len();
        let seg = segment_length(len, n);
        let segments = len.div_ceil(seg) as u64;
        per_tuple = per_tuple
            .saturating_add(segments.saturating_mul(k).saturating_mul(len.min(n) as u64))
            .saturating_add((len as u64).saturating_mul(k));
    }
    per_tuple.saturating_mul(tuples)
}

fn segment_length(orbit_len: usize, n: usize) -> usize {
    4 * orbit_len.min(n) + 64
}

fn check_budget(sys: &FiniteSystem, tuples: u64, n: usize, opts: &WwOptions) -> Result<()> {
    let cost = estimate_cost(sys, tuples, n, opts.oversample);
    if cost > opts.budget {
        return Err(Error::BudgetExceeded {
            estimated: cost,
            budget: opts.budget,
        });
    }
    Ok(())
}

/// Precomputed data for evaluating `sum_{n=1}^N G(T^n x) e(m n / K)` on a
/// grid of `K` phases.
struct SlidingGrid {
    n: usize,
    tw: Vec<Complex64>,
    tw_next: Vec<Complex64>,
}

impl SlidingGrid {
    fn new(n: usize, oversample: usize) -> Self {
        let k = oversample * n;
        let tw = twiddles(k);
        let step = ((n as u64 + 1) % k as u64) as usize;
        let tw_next = (0..k).map(|m| tw[(m * step) % k]).collect();
        Self { n, tw, tw_next }
    }

    fn k(&self) -> usize {
        self.tw.len()
    }

    /// Direct evaluation at orbit position `start`, folding the `N` terms
    /// onto one period when the orbit is shorter than `N`.
    fn direct(&self, cycle_values: &[Complex64], start: usize, out: &mut [Complex64]) {
        let len = cycle_values.len();
        let k = self.k();
        let n = self.n;
        let reps = n.min(len);
        for (m, slot) in out.iter_mut().enumerate() {
            let step = (len * m) % k;
            let full = n.div_ceil(len).max(1);
            let geo = |q: usize| -> Complex64 {
                if q <= 1 {
                    return Complex64::new(q as f64, 0.0);
                }
                if step == 0 {
                    Complex64::new(q as f64, 0.0)
                } else {
                    let num = Complex64::new(1.0, 0.0) - self.tw[(step * q) % k];
                    let den = Complex64::new(1.0, 0.0) - self.tw[step];
                    num / den
                }
            };
            let d_full = geo(full);
            let d_short = if full >= 1 { geo(full - 1) } else { Complex64::new(0.0, 0.0) };
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = m % k;
            for r in 0..reps {
                let q = (n - 1 - r) / len + 1;
                let d = if q == full { d_full } else { d_short };
                acc += cycle_values[(start + 1 + r) % len] * self.tw[idx] * d;
                idx += m;
                if idx >= k {
                    idx -= k;
                }
            }
            *slot = acc;
        }
    }

    /// Moves the grid values from orbit position `i` to `i + 1`.
    fn slide(&self, cycle_values: &[Complex64], i: usize, f: &mut [Complex64]) {
        let len = cycle_values.len();
        let leaving = cycle_values[(i + 1) % len];
        let entering = cycle_values[(i + self.n + 1) % len];
        for m in 0..f.len() {
            let t = self.tw[m];
            f[m] = t.conj() * (f[m] - leaving * t + entering * self.tw_next[m]);
        }
    }
}

/// Grid maximum of `|(1/N) sum_{n=1}^N e(nt) g(T^n x)|` at every point `x`,
/// with `K = oversample * N` phases.
pub fn pointwise_grid_sup(sys: &FiniteSystem, g: &[Complex64], n: usize, oversample: usize) -> Result<Vec<f64>> {
    check_oversample(oversample)?;
    if n == 0 {
        return Err(Error::InvalidParameter(String::from("N must be positive")));
    }
    if g.len() != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: g.len(),
        });
    }
    let grid = SlidingGrid::new(n, oversample);
    let mut jobs: Vec<(usize, usize, usize)> = Vec::new();
    for (o, orbit) in sys.orbits().iter().enumerate() {
        let seg = segment_length(orbit.len(), n);
        let mut s = 0;
        while s < orbit.len() {
            jobs.push((o, s, (s + seg).min(orbit.len())));
            s += seg;
        }
    }
    let results = try_map_indexed(jobs.len(), |j| -> Result<Vec<f64>> {
        let (o, start, end) = jobs[j];
        let orbit = &sys.orbits()[o];
        let values: Vec<Complex64> = orbit.iter().map(|&x| g[x as usize]).collect();
        let mut f = vec![Complex64::new(0.0, 0.0); grid.k()];
        grid.direct(&values, start, &mut f);
        let mut out = Vec::with_capacity(end - start);
        for i in start..end {
            if i > start {
                grid.slide(&values, i - 1, &mut f);
            }
            let best = f.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
            out.push(libm::sqrt(best) / n as f64);
        }
        Ok(out)
    })?;
    let mut sup = vec![0.0; sys.size()];
    for (j, vals) in results.into_iter().enumerate() {
        let (o, start, _) = jobs[j];
        let orbit = &sys.orbits()[o];
        for (offset, v) in vals.into_iter().enumerate() {
            sup[orbit[start + offset] as usize] = v;
        }
    }
    Ok(sup)
}

/// Relative inflation turning a grid maximum of a modulated average of
/// length `n` into a certified upper bound.
pub fn modulated_inflation(n: usize, oversample: usize) -> f64 {
    if n <= 1 {
        1.0
    } else {
        modulus_inflation(certificate_eps(&[(n - 1, oversample * n)]))
    }
}

fn tuple_count(ranges: &[usize]) -> Result<u64> {
    ranges.iter().try_fold(1u64, |acc, &r| {
        acc.checked_mul(r as u64)
            .ok_or_else(|| Error::InvalidParameter(String::from("too many cube tuples")))
    })
}

fn decode_tuple(mut index: u64, ranges: &[usize]) -> Vec<i64> {
    let mut h = Vec::with_capacity(ranges.len());
    for &r in ranges {
        h.push((index % r as u64) as i64 + 1);
        index /= r as u64;
    }
    h
}

fn average_brackets(parts: &[(f64, f64)]) -> Bracket {
    let mut lo = Neumaier::new();
    let mut hi = Neumaier::new();
    for &(l, u) in parts {
        lo.add(l);
        hi.add(u);
    }
    let count = parts.len() as f64;
    Bracket::new(lo.value() / count, hi.value() / count)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter(String::from("N must be positive")));
    }
    Ok(())
}

/// Strong average with cube coordinate `h_m` ranging over `1..=ranges[m]`.
///
/// This is the common engine of [`ww_average`], [`off_diagonal_average`]
/// and [`ww_average_alt`].
pub fn box_average(
    sys: &FiniteSystem,
    assignment: &CubeAssignment,
    ranges: &[usize],
    n: usize,
    opts: &WwOptions,
) -> Result<Bracket> {
    check_n(n)?;
    check_oversample(opts.oversample)?;
    if ranges.len() + 1 != assignment.k() {
        return Err(Error::DimensionMismatch {
            expected: assignment.k() - 1,
            found: ranges.len(),
        });
    }
    if ranges.contains(&0) {
        return Err(Error::InvalidParameter(String::from("empty cube range")));
    }
    if assignment.functions()[0].len() != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: assignment.functions()[0].len(),
        });
    }
    let tuples = tuple_count(ranges)?;
    check_budget(sys, tuples, n, opts)?;
    let inflation = modulated_inflation(n, opts.oversample);
    let parts = try_map_indexed(tuples as usize, |t| -> Result<(f64, f64)> {
        let h = decode_tuple(t as u64, ranges);
        let g = cube_values(sys, assignment, &h);
        let sup = pointwise_grid_sup(sys, &g, n, opts.oversample)?;
        let v = match opts.norm {
            PointNorm::L2 => l2_of_values(sys, &sup),
            PointNorm::L1 => l1_of_values(sys, &sup),
        };
        Ok((libm::pow(v, 2.0 / 3.0), libm::pow(v * inflation, 2.0 / 3.0)))
    })?;
    Ok(average_brackets(&parts))
}

/// `W_N^k(f)`.
pub fn ww_average(sys: &FiniteSystem, f: &Observable, k: usize, n: usize, opts: &WwOptions) -> Result<Bracket> {
    check_n(n)?;
    let assignment = CubeAssignment::constant(k, f)?;
    let s = isqrt(n as u64) as usize;
    box_average(sys, &assignment, &vec![s; k - 1], n, opts)
}

/// Off-diagonal average: the strong average with an arbitrary assignment.
pub fn off_diagonal_average(
    sys: &FiniteSystem,
    assignment: &CubeAssignment,
    n: usize,
    opts: &WwOptions,
) -> Result<Bracket> {
    check_n(n)?;
    let s = isqrt(n as u64) as usize;
    box_average(sys, assignment, &vec![s; assignment.k() - 1], n, opts)
}

/// Strong average with coordinate ranges `r_m(N)`. A single schedule is
/// applied to every coordinate; otherwise one schedule per coordinate is
/// required.
pub fn ww_average_alt(
    sys: &FiniteSystem,
    f: &Observable,
    k: usize,
    n: usize,
    schedules: &[ScheduleR],
    opts: &WwOptions,
) -> Result<Bracket> {
    check_n(n)?;
    let assignment = CubeAssignment::constant(k, f)?;
    let ranges = schedule_ranges(schedules, k, n)?;
    box_average(sys, &assignment, &ranges, n, opts)
}

/// `[r_1(N), .., r_{k-1}(N)]`.
pub fn schedule_ranges(schedules: &[ScheduleR], k: usize, n: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidParameter(String::from("k must be positive")));
    }
    let dim = k - 1;
    if dim == 0 {
        return Ok(Vec::new());
    }
    match schedules.len() {
        0 => Err(Error::InvalidParameter(String::from("no schedule given"))),
        1 => Ok(vec![schedules[0].eval(n as u64)?; dim]),
        len if len == dim => schedules.iter().map(|s| s.eval(n as u64)).collect(),
        len => Err(Error::DimensionMismatch { expected: dim, found: len }),
    }
}

/// `w_N^k(f)`: the supremum over `t` is taken outside the `L^2` norm.
///
/// For each cube tuple the squared norm is the trigonometric polynomial
/// `P(t) = sum_{|d| < N} c_d e(dt)` with
/// `c_d = (N - |d|) / N^2 * integral g o T^d conj(g)`, bracketed by
/// [`sup_norm_trig`].
pub fn weak_ww_average(sys: &FiniteSystem, f: &Observable, k: usize, n: usize, opts: &WwOptions) -> Result<Bracket> {
    check_n(n)?;
    check_oversample(opts.oversample)?;
    let assignment = CubeAssignment::constant(k, f)?;
    if f.len() != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: f.len(),
        });
    }
    let s = isqrt(n as u64) as usize;
    let ranges = vec![s; k - 1];
    let tuples = tuple_count(&ranges)?;
    let cost = tuples.saturating_mul((sys.size() * n + opts.oversample * 2 * n * n) as u64);
    if cost > opts.budget {
        return Err(Error::BudgetExceeded {
            estimated: cost,
            budget: opts.budget,
        });
    }
    let parts = try_map_indexed(tuples as usize, |t| -> Result<(f64, f64)> {
        let h = decode_tuple(t as u64, &ranges);
        let g = cube_values(sys, &assignment, &h);
        let b = weak_sup_bracket(sys, &g, n, opts.oversample)?;
        Ok((libm::pow(b.lower, 2.0 / 3.0), libm::pow(b.upper, 2.0 / 3.0)))
    })?;
    Ok(average_brackets(&parts))
}

/// Bracket for `sup_t ||(1/N) sum_{n=1}^N e(nt) g o T^n||_2`.
pub fn weak_sup_bracket(sys: &FiniteSystem, g: &[Complex64], n: usize, oversample: usize) -> Result<Bracket> {
    let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
    for d in 0..n {
        let mut acc = ComplexNeumaier::new();
        for x in 0..g.len() {
            acc.add(g[x] * g[sys.iterate(x, d as i64)].conj() * sys.weight(x));
        }
        let sigma = acc.value();
        let scale = (n - d) as f64 / (n as f64 * n as f64);
        coeffs[n - 1 + d] = sigma.conj() * scale;
        coeffs[n - 1 - d] = sigma * scale;
    }
    coeffs[n - 1] = Complex64::new(coeffs[n - 1].re, 0.0);
    let p = sup_norm_trig(&coeffs, oversample)?;
    let mut b = Bracket::new(libm::sqrt(p.lower.max(0.0)), libm::sqrt(p.upper.max(0.0)));
    b.argmax_hint = p.argmax_hint;
    Ok(b)
}

/// Grid values of the modulated average at a single point, for callers
/// that need the sequence rather than the orbit structure.
pub fn modulated_grid_max(u: &[Complex64], oversample: usize) -> (usize, f64) {
    let tw = twiddles(oversample * u.len());
    let power = crate::trig_sup::grid_power(u, &tw);
    let (m, p) = argmax(&power);
    (m, libm::sqrt(p) / u.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_dynamics::SystemSpec;
    use crate::math::e;
    use crate::trig_sup::sup_modulated_average;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sys(spec: SystemSpec) -> FiniteSystem {
        FiniteSystem::build(&spec).unwrap()
    }

    fn cyclic(p: usize) -> FiniteSystem {
        sys(SystemSpec::CyclicShift { p })
    }

    fn phases(seed: u64, m: usize) -> Observable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Observable::new((0..m).map(|_| e(rng.gen::<f64>())).collect()).unwrap()
    }

    fn one(m: usize) -> Observable {
        Observable::constant(m, Complex64::new(1.0, 0.0)).unwrap()
    }

    /// Direct double loop over cube tuples and points, evaluating each
    /// pointwise sequence with the plain grid routine.
    fn oracle(sys: &FiniteSystem, f: &Observable, ranges: &[usize], n: usize) -> f64 {
        let dim = ranges.len();
        let total: usize = ranges.iter().product();
        let mut acc = 0.0;
        for t in 0..total {
            let h = decode_tuple(t as u64, ranges);
            let mut norm_sq = 0.0;
            for x in 0..sys.size() {
                let seq: Vec<Complex64> = (1..=n as i64)
                    .map(|m| {
                        let mut v = Complex64::new(1.0, 0.0);
                        for eta in CubeVertex::all(dim) {
                            let y = sys.iterate(x, eta.dot(&h) + m);
                            let z = f.get(y);
                            v *= if eta.popcount() % 2 == 1 { z.conj() } else { z };
                        }
                        v
                    })
                    .collect();
                let b = sup_modulated_average(&seq, 16).unwrap();
                norm_sq += sys.weight(x) * b.lower * b.lower;
            }
            acc += norm_sq.sqrt().powf(2.0 / 3.0);
        }
        acc / total as f64
    }

    #[test]
    fn cube_vertex_operations() {
        let eta = CubeVertex::from_coords(&[true, false, true]).unwrap();
        assert_eq!(eta.popcount(), 2);
        assert_eq!(eta.dot(&[3, 5, 7]), 10);
        assert_eq!(eta.complement().bits(), 0b010);
        let zeta = CubeVertex::new(0b011, 3).unwrap();
        assert_eq!(eta.intersection(zeta).bits(), 0b001);
        assert!(CubeVertex::new(0b1000, 3).is_err());
        assert_eq!(CubeVertex::all(0).count(), 1);
        assert_eq!(CubeVertex::new(0, 0).unwrap().complement().bits(), 0);
    }

    #[test]
    fn constant_one_gives_one() {
        let s = sys(SystemSpec::Identity { size: 1 });
        for k in 1..=3 {
            let b = ww_average(&s, &one(1), k, 16, &WwOptions::default()).unwrap();
            assert_eq!(b.lower, 1.0);
            assert!(b.upper >= 1.0);
        }
        let c = cyclic(7);
        let b = ww_average(&c, &one(7), 2, 20, &WwOptions::default()).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-14);
    }

    #[test]
    fn character_on_cyclic_shift() {
        let p = 7;
        let c = cyclic(p);
        let f = Observable::new((0..p).map(|x| e(x as f64 / p as f64)).collect()).unwrap();
        let b = ww_average(&c, &f, 1, 35, &WwOptions::default()).unwrap();
        assert!(b.contains(1.0, 1e-12), "{b:?}");
        let w = weak_ww_average(&c, &f, 1, 35, &WwOptions::default()).unwrap();
        assert!(w.contains(1.0, 1e-12), "{w:?}");
    }

    #[test]
    fn sliding_matches_direct_oracle() {
        let c = cyclic(13);
        let f = phases(3, 13);
        for &(k, n) in &[(1usize, 9usize), (1, 40), (2, 16), (3, 9)] {
            let s = isqrt(n as u64) as usize;
            let got = ww_average(&c, &f, k, n, &WwOptions::default()).unwrap();
            let want = oracle(&c, &f, &vec![s; k - 1], n);
            assert!((got.lower - want).abs() < 1e-12, "k={k} n={n}: {} vs {want}", got.lower);
        }
    }

    #[test]
    fn short_orbits_fold_correctly() {
        let s = sys(SystemSpec::Product {
            a: alloc::boxed::Box::new(SystemSpec::CyclicShift { p: 3 }),
            b: alloc::boxed::Box::new(SystemSpec::RandomPermutation { size: 10, seed: 4 }),
        });
        let f = phases(8, s.size());
        for &n in &[1usize, 2, 5, 17, 64] {
            let got = ww_average(&s, &f, 1, n, &WwOptions::default()).unwrap();
            let want = oracle(&s, &f, &[], n);
            assert!((got.lower - want).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn linear_schedule_matches_oracle() {
        let c = cyclic(5);
        let f = phases(11, 5);
        let n = 12;
        let got = ww_average_alt(&c, &f, 2, n, &[ScheduleR::Linear], &WwOptions::default()).unwrap();
        assert!((got.lower - oracle(&c, &f, &[n], n)).abs() < 1e-10);
    }

    #[test]
    fn sqrt_schedule_is_bit_identical() {
        let c = cyclic(11);
        let f = phases(5, 11);
        for k in 1..=3 {
            let a = ww_average(&c, &f, k, 30, &WwOptions::default()).unwrap();
            let b = ww_average_alt(&c, &f, k, 30, &[ScheduleR::Sqrt], &WwOptions::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn diagonal_assignment_is_the_strong_average() {
        let c = cyclic(9);
        let f = phases(2, 9);
        let a = ww_average(&c, &f, 3, 20, &WwOptions::default()).unwrap();
        let assignment = CubeAssignment::constant(3, &f).unwrap();
        let b = off_diagonal_average(&c, &assignment, 20, &WwOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inductive_identity() {
        let c = cyclic(11);
        let f = phases(9, 11);
        let n = 25;
        let s = isqrt(n as u64) as i64;
        for k in 2..=3 {
            let whole = ww_average(&c, &f, k, n, &WwOptions::default()).unwrap();
            let mut acc = 0.0;
            for h in 1..=s {
                let shifted = crate::finite_dynamics::shift_observable(&c, &f, h).unwrap();
                let derivative = f.mul(&shifted.conj()).unwrap();
                acc += ww_average(&c, &derivative, k - 1, n, &WwOptions::default()).unwrap().lower;
            }
            assert!((whole.lower - acc / s as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn conjugation_symmetry() {
        let c = cyclic(13);
        let f = phases(21, 13);
        for k in 1..=2 {
            let a = ww_average(&c, &f, k, 20, &WwOptions::default()).unwrap();
            let b = ww_average(&c, &f.conj(), k, 20, &WwOptions::default()).unwrap();
            assert!(a.contains(b.lower, 0.0) || b.contains(a.lower, 0.0));
            assert!((a.lower - b.lower).abs() <= a.width().max(b.width()));
        }
    }

    #[test]
    fn reflected_assignment_preserves_average() {
        let c = cyclic(11);
        let n = 16;
        let s = isqrt(n as u64) as usize;
        for k in 2..=3 {
            let fs: Vec<Observable> = (0..1u64 << (k - 1)).map(|i| phases(40 + i, 11)).collect();
            let a = CubeAssignment::new(k, fs).unwrap();
            for zeta in CubeVertex::all(k - 1) {
                let r = a.reflected(&c, zeta, s).unwrap();
                let lhs = off_diagonal_average(&c, &a, n, &WwOptions::default()).unwrap();
                let rhs = off_diagonal_average(&c, &r, n, &WwOptions::default()).unwrap();
                assert!((lhs.lower - rhs.lower).abs() < 1e-12 * lhs.lower.max(1.0));
                let top = CubeVertex::new((1 << (k - 1)) - 1, k - 1).unwrap();
                let g = r.get(top);
                let expect = a.get(zeta);
                let same = (0..11).all(|x| (g.get(x) - expect.get(x)).norm() < 1e-15)
                    || (0..11).all(|x| (g.get(x) - expect.get(x).conj()).norm() < 1e-15);
                assert!(same);
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        let c = cyclic(101);
        let f = phases(1, 101);
        let opts = WwOptions {
            budget: 1000,
            ..WwOptions::default()
        };
        assert!(matches!(ww_average(&c, &f, 2, 64, &opts), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn schedule_table_lookup() {
        let t = ScheduleR::Table { values: vec![(10, 3), (20, 4)] };
        assert_eq!(t.eval(20).unwrap(), 4);
        assert!(matches!(t.eval(15), Err(Error::Coverage { missing: 15 })));
        assert_eq!(ScheduleR::Power { delta: 0.5 }.eval(49).unwrap(), 7);
    }

    proptest! {
        #[test]
        fn values_stay_in_unit_interval(p in 2usize..30, seed in any::<u64>(), n in 1usize..40, k in 1usize..3) {
            let c = cyclic(p);
            let f = phases(seed, p);
            let b = ww_average(&c, &f, k, n, &WwOptions::default()).unwrap();
            prop_assert!(b.lower >= 0.0 && b.lower <= 1.0 + 1e-12);
            let w = weak_ww_average(&c, &f, k, n, &WwOptions::default()).unwrap();
            prop_assert!(w.lower <= b.upper + 1e-12);
        }

        #[test]
        fn weak_on_random_permutation_is_below_strong(size in 2usize..40, seed in any::<u64>(), n in 2usize..30) {
            let s = sys(SystemSpec::RandomPermutation { size, seed });
            let f = phases(seed.wrapping_add(1), size);
            let b = ww_average(&s, &f, 1, n, &WwOptions::default()).unwrap();
            let w = weak_ww_average(&s, &f, 1, n, &WwOptions::default()).unwrap();
            prop_assert!(w.lower <= b.upper + 1e-12);
        }
    }
}
