//! Certified brackets for suprema of trigonometric and polyphase sums.
//!
//! All suprema are computed on uniform grids anchored at `t = 0`. The
//! grid maximum is a valid lower bound. The upper bound uses a
//! second-order certificate: if `g = |F|^2` is a trigonometric polynomial
//! of degree `D_j` in the variable `t_j`, sampled with `K_j` points per
//! unit, then at the true maximiser the gradient of `g` vanishes, and
//! Bernstein's inequality bounds every second derivative by
//! `4 pi^2 D_i D_j sup g`. The nearest grid point is within `1 / (2 K_j)` in
//! each coordinate, hence
//!
//! `sup g <= grid_max(g) / (1 - eps)`, with `eps = (pi^2 / 2) (sum_j D_j / K_j)^2`.
//!
//! For oversampling 16 this gives a relative width just under one percent.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::math::{e, PI};
use crate::{Error, Result, DEFAULT_BUDGET};

/// Smallest oversampling factor accepted. Below this the certificate is
/// either invalid or too loose to be useful.
pub const MIN_OVERSAMPLE: usize = 4;

/// Tolerance for the Hermitian symmetry test in [`sup_norm_trig`].
pub const HERMITIAN_TOL: f64 = 1e-10;

/// An interval `[lower, upper]` known to contain a supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    /// Grid point where the lower bound was attained, one entry per phase
    /// variable. Empty for aggregated quantities.
    #[serde(default)]
    pub argmax_hint: Vec<f64>,
}

impl Bracket {
    pub fn new(lower: f64, upper: f64) -> Self {
        debug_assert!(lower <= upper, "bracket [{lower}, {upper}]");
        Self {
            lower,
            upper,
            argmax_hint: Vec::new(),
        }
    }

    pub fn exact(value: f64) -> Self {
        Self::new(value, value)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// `(upper - lower) / upper`, or `0` when both ends vanish.
    pub fn relative_width(&self) -> f64 {
        if self.upper == 0.0 {
            0.0
        } else {
            self.width() / self.upper
        }
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        value >= self.lower - tol && value <= self.upper + tol
    }

    /// Applies a nondecreasing map to both endpoints.
    pub fn map_monotone(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            lower: f(self.lower),
            upper: f(self.upper),
            argmax_hint: self.argmax_hint.clone(),
        }
    }

    /// Both endpoints raised to `p > 0`.
    pub fn powf(&self, p: f64) -> Self {
        self.map_monotone(|x| libm::pow(x, p))
    }
}

/// Result of a polyphase supremum: certified for degree at most two,
/// lower bound only beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolySup {
    Certified(Bracket),
    LowerOnly { lower: f64, argmax_hint: Vec<f64> },
}

impl PolySup {
    pub fn lower(&self) -> f64 {
        match self {
            PolySup::Certified(b) => b.lower,
            PolySup::LowerOnly { lower, .. } => *lower,
        }
    }

    pub fn bracket(&self) -> Option<&Bracket> {
        match self {
            PolySup::Certified(b) => Some(b),
            PolySup::LowerOnly { .. } => None,
        }
    }
}

pub(crate) fn check_oversample(oversample: usize) -> Result<()> {
    if oversample < MIN_OVERSAMPLE {
        return Err(Error::InvalidParameter(format!(
            "oversample {oversample} is below the minimum {MIN_OVERSAMPLE}"
        )));
    }
    Ok(())
}

/// `eps` of the module-level certificate for degree/grid pairs.
pub fn certificate_eps(ratios: &[(usize, usize)]) -> f64 {
    let s: f64 = ratios.iter().map(|&(d, k)| d as f64 / k as f64).sum();
    0.5 * PI * PI * s * s
}

/// Factor by which a grid maximum of `|F|` must be inflated.
pub(crate) fn modulus_inflation(eps: f64) -> f64 {
    1.0 / libm::sqrt(1.0 - eps)
}

/// `tw[m] = e(m / K)` for `m` in `0..K`.
pub(crate) fn twiddles(k: usize) -> Vec<Complex64> {
    (0..k).map(|m| e(m as f64 / k as f64)).collect()
}

/// `|sum_{n=1}^{N} u_n e(m n / K)|^2` for every grid index `m`.
pub(crate) fn grid_power(u: &[Complex64], tw: &[Complex64]) -> Vec<f64> {
    let k = tw.len();
    let mut out = Vec::with_capacity(k);
    for m in 0..k {
        out.push(grid_sum(u, tw, m).norm_sqr());
    }
    out
}

#[inline]
pub(crate) fn grid_sum(u: &[Complex64], tw: &[Complex64], m: usize) -> Complex64 {
    let k = tw.len();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut idx = m % k;
    for &v in u {
        acc += v * tw[idx];
        idx += m;
        if idx >= k {
            idx -= k;
        }
    }
    acc
}

/// First index of the maximum; ties resolve to the smallest index.
pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Bracket for `sup_t |(1/N) sum_{n=1}^{N} u_n e(n t)|`.
///
/// The grid has `K = oversample * N` points. A single-term sum is exact.
pub fn sup_modulated_average(u: &[Complex64], oversample: usize) -> Result<Bracket> {
    check_oversample(oversample)?;
    let n = u.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty sequence".to_string()));
    }
    if n == 1 {
        let mut b = Bracket::exact(crate::math::abs(u[0]));
        b.argmax_hint = vec![0.0];
        return Ok(b);
    }
    let k = oversample * n;
    let tw = twiddles(k);
    let power = grid_power(u, &tw);
    let (m, best) = argmax(&power);
    let lower = libm::sqrt(best) / n as f64;
    let eps = certificate_eps(&[(n - 1, k)]);
    let mut b = Bracket::new(lower, lower * modulus_inflation(eps));
    b.argmax_hint = vec![m as f64 / k as f64];
    Ok(b)
}

/// Bracket for `sup_t P(t)` with `P(t) = sum_{|d| < N} c_d e(d t)`.
///
/// `c` holds `c_{-(N-1)}, .., c_{N-1}` and must satisfy
/// `c_{-d} = conj(c_d)` to within [`HERMITIAN_TOL`] (scaled by the largest
/// coefficient). The grid has `oversample * (2N - 1)` points, one block of
/// `oversample` per coefficient. The polynomial must attain a nonnegative
/// value on the grid.
pub fn sup_norm_trig(c: &[Complex64], oversample: usize) -> Result<Bracket> {
    check_oversample(oversample)?;
    if c.len().is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "coefficient vector has even length {}",
            c.len()
        )));
    }
    let n = c.len().div_ceil(2);
    let scale = c.iter().map(|z| crate::math::abs(*z)).fold(1.0, f64::max);
    for d in 0..n {
        let defect = crate::math::abs(c[n - 1 - d] - c[n - 1 + d].conj());
        if defect > HERMITIAN_TOL * scale {
            return Err(Error::NonHermitian {
                index: d as i64,
                defect,
            });
        }
    }
    let c0 = c[n - 1].re;
    // Average each Hermitian pair so small asymmetries cannot bias P.
    let half: Vec<Complex64> = (1..n)
        .map(|d| (c[n - 1 + d] + c[n - 1 - d].conj()) * 0.5)
        .collect();
    let k = oversample * (2 * n - 1);
    let tw = twiddles(k);
    let mut values = Vec::with_capacity(k);
    for m in 0..k {
        let s = if half.is_empty() {
            Complex64::new(0.0, 0.0)
        } else {
            grid_sum(&half, &tw, m)
        };
        values.push(c0 + 2.0 * s.re);
    }
    let (m, gmax) = argmax(&values);
    let gmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    if gmax < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "polynomial is negative on the whole grid (max {gmax:e})"
        )));
    }
    if n == 1 {
        let mut b = Bracket::exact(gmax);
        b.argmax_hint = vec![0.0];
        return Ok(b);
    }
    let eps = certificate_eps(&[(n - 1, k)]);
    let abs_bound = gmax.max(-gmin) / (1.0 - eps);
    let mut b = Bracket::new(gmax, gmax + eps * abs_bound);
    b.argmax_hint = vec![m as f64 / k as f64];
    Ok(b)
}

/// `|(1/N) sum_{n=1}^{N} u_n e(t_1 n + .. + t_k n^k)|` at a fixed phase.
pub fn polyphase_value(u: &[Complex64], t: &[f64]) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &v) in u.iter().enumerate() {
        let n = (i + 1) as f64;
        let mut phase = 0.0;
        let mut np = 1.0;
        for &tj in t {
            np *= n;
            let x = tj * np;
            phase += x - libm::floor(x);
        }
        acc += v * e(phase);
    }
    crate::math::abs(acc) / u.len() as f64
}

/// Supremum over `t in [0,1)^k` of `|(1/N) sum_{n=1}^{N} u_n e(sum_j t_j n^j)|`.
///
/// For `k <= 2` the grid in `t_j` has `oversample * k * N^j` points, so
/// that `sum_j D_j / K_j < 1 / oversample` and the certificate matches the
/// one-variable case. For `k >= 3` a coarser grid of `oversample * N`
/// points per variable is scanned and only the lower bound is returned.
/// `max_cost` caps the number of grid-times-term evaluations.
pub fn sup_polyphase(u: &[Complex64], k: usize, oversample: usize, max_cost: u64) -> Result<PolySup> {
    check_oversample(oversample)?;
    let n = u.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty sequence".to_string()));
    }
    match k {
        0 => {
            let s: Complex64 = u.iter().sum();
            let mut b = Bracket::exact(crate::math::abs(s) / n as f64);
            b.argmax_hint = Vec::new();
            Ok(PolySup::Certified(b))
        }
        1 => sup_modulated_average(u, oversample).map(PolySup::Certified),
        2 => {
            let k1 = 2 * oversample * n;
            let k2 = 2 * oversample * n * n;
            let cost = (k1 as u64) * (k2 as u64) * n as u64;
            if cost > max_cost {
                return Err(Error::BudgetExceeded {
                    estimated: cost,
                    budget: max_cost,
                });
            }
            let (m1, m2, best) = scan_quadratic(u, k1, k2);
            let lower = libm::sqrt(best) / n as f64;
            if n == 1 {
                let mut b = Bracket::exact(lower);
                b.argmax_hint = vec![0.0, 0.0];
                return Ok(PolySup::Certified(b));
            }
            let eps = certificate_eps(&[(n - 1, k1), (n * n - 1, k2)]);
            let mut b = Bracket::new(lower, lower * modulus_inflation(eps));
            b.argmax_hint = vec![m1 as f64 / k1 as f64, m2 as f64 / k2 as f64];
            Ok(PolySup::Certified(b))
        }
        _ => {
            let per = oversample * n;
            let cost = (per as u64)
                .checked_pow(k as u32)
                .and_then(|c| c.checked_mul(n as u64))
                .unwrap_or(u64::MAX);
            if cost > max_cost {
                return Err(Error::BudgetExceeded {
                    estimated: cost,
                    budget: max_cost,
                });
            }
            let mut idx = vec![0usize; k];
            let mut t = vec![0.0; k];
            let mut best = (f64::NEG_INFINITY, vec![0.0; k]);
            loop {
                for j in 0..k {
                    t[j] = idx[j] as f64 / per as f64;
                }
                let v = polyphase_value(u, &t);
                if v > best.0 {
                    best = (v, t.clone());
                }
                let mut j = 0;
                while j < k {
                    idx[j] += 1;
                    if idx[j] < per {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if j == k {
                    break;
                }
            }
            Ok(PolySup::LowerOnly {
                lower: best.0,
                argmax_hint: best.1,
            })
        }
    }
}

/// Default cap for [`sup_polyphase`].
pub const DEFAULT_POLY_COST: u64 = DEFAULT_BUDGET / 8;

/// Grid maximum of `|sum u_n e(m1 n / K1 + m2 n^2 / K2)|^2`.
pub(crate) fn scan_quadratic(u: &[Complex64], k1: usize, k2: usize) -> (usize, usize, f64) {
    let n = u.len();
    let tw1 = twiddles(k1);
    let tw2 = twiddles(k2);
    let squares: Vec<u64> = (1..=n as u64).map(|x| (x * x) % k2 as u64).collect();
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    let mut best = (0, 0, f64::NEG_INFINITY);
    for m2 in 0..k2 {
        for i in 0..n {
            let idx = ((m2 as u64 * squares[i]) % k2 as u64) as usize;
            v[i] = u[i] * tw2[idx];
        }
        for m1 in 0..k1 {
            let p = grid_sum(&v, &tw1, m1).norm_sqr();
            if p > best.2 {
                best = (m1, m2, p);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Direct evaluation without twiddle tables.
    fn naive_modulus(u: &[Complex64], t: f64) -> f64 {
        let mut acc = c(0.0, 0.0);
        for (i, v) in u.iter().enumerate() {
            let a = core::f64::consts::TAU * t * (i + 1) as f64;
            acc += v * c(a.cos(), a.sin());
        }
        acc.norm() / u.len() as f64
    }

    fn dense_sup(u: &[Complex64], points: usize) -> f64 {
        (0..points).map(|m| naive_modulus(u, m as f64 / points as f64)).fold(0.0, f64::max)
    }

    #[test]
    fn constant_sequence_peaks_at_zero() {
        let u = vec![c(1.0, 0.0); 8];
        let b = sup_modulated_average(&u, 16).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-15);
        assert_eq!(b.argmax_hint, vec![0.0]);
        assert!(b.upper >= 1.0 && b.relative_width() < 0.01);
    }

    #[test]
    fn alternating_sequence_peaks_at_half() {
        let u: Vec<_> = (1..=6).map(|n| c(if n % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        let b = sup_modulated_average(&u, 16).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-14);
        assert!((b.argmax_hint[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rejects_small_oversample() {
        let u = vec![c(1.0, 0.0); 4];
        assert!(sup_modulated_average(&u, 3).is_err());
        assert!(sup_modulated_average(&u, 4).is_ok());
        assert!(sup_modulated_average(&[], 16).is_err());
    }

    #[test]
    fn trig_rejects_non_hermitian() {
        let coeffs = vec![c(0.1, 0.0), c(1.0, 0.0), c(0.3, 0.0)];
        assert!(matches!(sup_norm_trig(&coeffs, 16), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn trig_cosine_polynomial() {
        // 1 + cos(2 pi t) has maximum 2 at t = 0.
        let coeffs = vec![c(0.5, 0.0), c(1.0, 0.0), c(0.5, 0.0)];
        let b = sup_norm_trig(&coeffs, 16).unwrap();
        assert!((b.lower - 2.0).abs() < 1e-15);
        assert!(b.upper >= 2.0);
    }

    #[test]
    fn polyphase_fixed_phase_value() {
        let u = vec![c(1.0, 0.0); 4];
        let v = polyphase_value(&u, &[0.0, 0.25]);
        assert!((v - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(polyphase_value(&u, &[0.0, 0.5]).abs() < 1e-15);
    }

    #[test]
    fn polyphase_degree_zero_is_exact() {
        let u = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let PolySup::Certified(b) = sup_polyphase(&u, 0, 16, u64::MAX).unwrap() else {
            panic!("degree zero must be certified");
        };
        assert_eq!(b.lower, b.upper);
        assert!((b.lower - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn polyphase_degree_two_recovers_quadratic_phase() {
        let u: Vec<_> = (1..=5).map(|n| e(-0.3 * (n * n) as f64)).collect();
        let PolySup::Certified(b) = sup_polyphase(&u, 2, 16, u64::MAX).unwrap() else {
            panic!();
        };
        assert!(b.contains(1.0, 1e-12));
        assert!(b.relative_width() <= 0.01);
    }

    #[test]
    fn polyphase_high_degree_is_flagged() {
        let u = vec![c(1.0, 0.0); 3];
        let r = sup_polyphase(&u, 3, 4, u64::MAX).unwrap();
        assert!(matches!(r, PolySup::LowerOnly { .. }));
        assert!((r.lower() - 1.0).abs() < 1e-15);
        assert!(sup_polyphase(&u, 2, 16, 10).is_err());
    }

    fn seq(raw: &[(f64, f64)]) -> Vec<Complex64> {
        raw.iter().map(|&(a, b)| c(a, b)).collect()
    }

    proptest! {
        #[test]
        fn modulated_bracket_contains_dense_reference(raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..24)) {
            let u = seq(&raw);
            let b = sup_modulated_average(&u, 16).unwrap();
            let reference = dense_sup(&u, 64 * u.len());
            prop_assert!(b.lower <= reference + 1e-12);
            prop_assert!(reference <= b.upper + 1e-12);
            prop_assert!(b.relative_width() <= 0.01);
        }

        #[test]
        fn autocorrelation_polynomial_bracket(raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..16)) {
            let u = seq(&raw);
            let n = u.len();
            let mut coeffs = vec![c(0.0, 0.0); 2 * n - 1];
            for d in -(n as i64 - 1)..n as i64 {
                let mut acc = c(0.0, 0.0);
                for m in 0..n as i64 {
                    let j = m + d;
                    if (0..n as i64).contains(&j) {
                        acc += u[j as usize] * u[m as usize].conj();
                    }
                }
                coeffs[(d + n as i64 - 1) as usize] = acc;
            }
            let b = sup_norm_trig(&coeffs, 16).unwrap();
            let reference = dense_sup(&u, 64 * (2 * n - 1)).powi(2) * (n * n) as f64;
            prop_assert!(b.lower <= reference * (1.0 + 1e-12) + 1e-12);
            prop_assert!(reference <= b.upper * (1.0 + 1e-12) + 1e-12);
        }
    }
}
