//! One-sided weighted ergodic Hilbert transforms and a finite-window test
//! of the summation criterion for their convergence.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{least_squares, SeriesReport};
use crate::finite_dynamics::{FiniteSystem, Observable};
use crate::math::{abs, e};
use crate::sum::ComplexNeumaier;
use crate::{Error, Result};

/// The weight sequence `w_n` multiplying the recurrence product.
#[derive(Debug, Clone, Copy)]
pub enum HilbertWeight<'a> {
    /// `e(t_1 n + .. + t_k n^k)`.
    Phase { t: &'a [f64] },
    /// `prod_i g_i(S^{b_i n} y)`.
    ReturnTimes {
        sys: &'a FiniteSystem,
        y: usize,
        gs: &'a [Observable],
        b: &'a [i64],
    },
    /// `g(S^{P(n)} y)` for an integer polynomial with coefficients
    /// `poly[i]` of `n^i`.
    PolyReturnTimes {
        sys: &'a FiniteSystem,
        y: usize,
        g: &'a Observable,
        poly: &'a [i64],
    },
}

impl HilbertWeight<'_> {
    fn validate(&self) -> Result<()> {
        match self {
            HilbertWeight::Phase { t } => {
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(String::from("phase coefficients must be finite")));
                }
            }
            HilbertWeight::ReturnTimes { sys, y, gs, b } => {
                check_point(sys, *y)?;
                if gs.len() != b.len() {
                    return Err(Error::Arity(format!("{} weight functions, {} exponents", gs.len(), b.len())));
                }
                for g in gs.iter() {
                    check_len(sys, g)?;
                }
            }
            HilbertWeight::PolyReturnTimes { sys, y, g, .. } => {
                check_point(sys, *y)?;
                check_len(sys, g)?;
            }
        }
        Ok(())
    }

    fn at(&self, n: i64) -> Result<Complex64> {
        Ok(match self {
            HilbertWeight::Phase { t } => {
                let nf = n as f64;
                let mut phase = 0.0;
                let mut power = 1.0;
                for &ti in t.iter() {
                    power *= nf;
                    phase += libm::fmod(ti * power, 1.0);
                }
                e(phase)
            }
            HilbertWeight::ReturnTimes { sys, y, gs, b } => gs
                .iter()
                .zip(b.iter())
                .fold(Complex64::new(1.0, 0.0), |acc, (g, &bi)| acc * g.get(sys.iterate(*y, bi * n))),
            HilbertWeight::PolyReturnTimes { sys, y, g, poly } => {
                let mut p: i128 = 0;
                for &c in poly.iter().rev() {
                    p = p
                        .checked_mul(n as i128)
                        .and_then(|v| v.checked_add(c as i128))
                        .ok_or_else(|| Error::InvalidParameter(String::from("polynomial overflow")))?;
                }
                g.get(sys.iterate_wide(*y, p))
            }
        })
    }
}

fn check_point(sys: &FiniteSystem, x: usize) -> Result<()> {
    if x >= sys.size() {
        return Err(Error::InvalidParameter(format!("point {x} outside the system")));
    }
    Ok(())
}

fn check_len(sys: &FiniteSystem, f: &Observable) -> Result<()> {
    if f.len() != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: f.len(),
        });
    }
    Ok(())
}

/// Partial sums `S_N = sum_{n <= N} a_n / n^sigma` and Cesaro averages
/// `A_N = (1/N) sum_{n <= N} a_n` for `N = 1..=N_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialSums {
    pub sigma: f64,
    pub sums: Vec<Complex64>,
    pub averages: Vec<Complex64>,
}

impl PartialSums {
    /// `S_N`, one-based.
    pub fn sum(&self, n: usize) -> Complex64 {
        self.sums[n - 1]
    }

    /// `A_N`, one-based.
    pub fn average(&self, n: usize) -> Complex64 {
        self.averages[n - 1]
    }

    /// `|A_N|` for every `N`, ready for [`hilbert_criterion`].
    pub fn average_report(&self, label: &str) -> Result<SeriesReport> {
        SeriesReport::from_values(
            label,
            self.averages.iter().enumerate().map(|(i, a)| (i as u64 + 1, abs(*a))),
        )
    }

    /// `|S_N|` for every `N`.
    pub fn modulus_report(&self, label: &str) -> Result<SeriesReport> {
        SeriesReport::from_values(
            label,
            self.sums.iter().enumerate().map(|(i, s)| (i as u64 + 1, abs(*s))),
        )
    }

    /// `sup_{N <= M' < M <= N_max} |S_M - S_M'|` for `M' >= from`.
    pub fn oscillation_from(&self, from: usize) -> f64 {
        let tail = &self.sums[from - 1..];
        let mut sup = 0.0f64;
        for (i, si) in tail.iter().enumerate() {
            for sj in &tail[i + 1..] {
                sup = sup.max(abs(sj - si));
            }
        }
        sup
    }
}

/// Raw partial sums of an arbitrary sequence `a_1, a_2, ..`.
pub fn partial_sums_of(a: &[Complex64], sigma: f64) -> Result<PartialSums> {
    check_sigma(sigma)?;
    let mut sums = Vec::with_capacity(a.len());
    let mut averages = Vec::with_capacity(a.len());
    let mut s = ComplexNeumaier::new();
    let mut plain = ComplexNeumaier::new();
    for (i, &v) in a.iter().enumerate() {
        let n = (i + 1) as f64;
        s.add(v / libm::pow(n, sigma));
        plain.add(v);
        sums.push(s.value());
        averages.push(plain.value() / n);
    }
    Ok(PartialSums { sigma, sums, averages })
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::InvalidParameter(format!("sigma = {sigma} outside (0, 1]")));
    }
    Ok(())
}

/// `S_N = sum_{n=1}^N w_n prod_j f_j(T^{a_j n} x) / n^sigma` for `N <= n_max`.
#[allow(clippy::too_many_arguments)]
pub fn hilbert_partial_sums(
    sys: &FiniteSystem,
    x: usize,
    fs: &[Observable],
    a: &[i64],
    weight: &HilbertWeight<'_>,
    sigma: f64,
    n_max: usize,
) -> Result<PartialSums> {
    check_sigma(sigma)?;
    check_point(sys, x)?;
    if fs.len() != a.len() {
        return Err(Error::Arity(format!("{} functions, {} exponents", fs.len(), a.len())));
    }
    for f in fs {
        check_len(sys, f)?;
    }
    weight.validate()?;
    let seq = (1..=n_max as i64)
        .map(|n| {
            let w = weight.at(n)?;
            Ok(fs
                .iter()
                .zip(a)
                .fold(w, |acc, (f, &aj)| acc * f.get(sys.iterate(x, aj * n))))
        })
        .collect::<Result<Vec<_>>>()?;
    partial_sums_of(&seq, sigma)
}

/// Minimum number of window points for [`hilbert_criterion`].
pub const HILBERT_MIN_POINTS: usize = 16;
/// Tolerance for the Cauchy oscillation of the scaled sequence.
pub const HILBERT_TOL: f64 = 1e-6;
/// Required excess of the fitted exponents over the critical values.
pub const HILBERT_MARGIN: f64 = 0.05;

/// Finite-window diagnostics for the two hypotheses of the summation
/// criterion: summability of `|A_N| / N^sigma` and convergence of
/// `N^{1-sigma} A_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HilbertVerdict {
    pub sigma: f64,
    pub window: (u64, u64),
    /// Decay exponent of the upper envelope of `|A_N| / N^sigma`.
    pub summand_exponent: f64,
    /// `sum_{N >= N_mid} |A_N| / N^sigma` over the window plus the fitted
    /// power-law tail beyond it; infinite when the exponent is at most one.
    pub tail_sum: f64,
    /// `(N, N^{1-sigma} |A_N|)` over the window.
    pub scaled_sequence: Vec<(u64, f64)>,
    /// Decay exponent of the upper envelope of the scaled sequence.
    pub scaled_exponent: f64,
    /// `sup_{M > N >= N_mid} | M^{1-sigma}|A_M| - N^{1-sigma}|A_N| |`.
    pub scaled_oscillation: f64,
    /// Bound on `sup_{M > N >= N_mid} |S_M - S_N|` given by the criterion:
    /// the tail sum plus the scaled oscillation.
    pub cauchy_sup: f64,
    pub summable: bool,
    pub scaled_cauchy: bool,
    pub accept: bool,
}

/// Upper envelope `max_{M >= N} v_M` and the log-log slope fitted to it.
fn envelope_exponent(points: &[(u64, f64)]) -> (f64, f64) {
    let mut env = Vec::with_capacity(points.len());
    let mut running = 0.0f64;
    for &(n, v) in points.iter().rev() {
        running = running.max(v);
        env.push((n, running));
    }
    env.reverse();
    if env.iter().any(|&(_, v)| v == 0.0) {
        return (f64::INFINITY, 0.0);
    }
    let xs: Vec<f64> = env.iter().map(|&(n, _)| libm::log(n as f64)).collect();
    let ys: Vec<f64> = env.iter().map(|&(_, v)| libm::log(v)).collect();
    let (slope, intercept, _) = least_squares(&xs, &ys);
    (-slope, libm::exp(intercept))
}

/// Evaluates both hypotheses on `A` restricted to `window`.
///
/// Sums over sparse windows weight each sample by the gap to its
/// predecessor. The summability decision uses the fitted envelope
/// exponent: a window cannot certify convergence, so an exponent above
/// `1 + HILBERT_MARGIN` is taken as evidence of summability. The scaled
/// sequence is accepted when its oscillation on the back half is at most
/// [`HILBERT_TOL`] or its envelope decays with exponent above the margin.
pub fn hilbert_criterion(a: &SeriesReport, sigma: f64, window: (u64, u64)) -> Result<HilbertVerdict> {
    check_sigma(sigma)?;
    let pts: Vec<(u64, f64)> = a
        .entries
        .iter()
        .filter(|e| e.n >= window.0 && e.n <= window.1)
        .map(|e| (e.n, e.value))
        .collect();
    if pts.len() < HILBERT_MIN_POINTS {
        return Err(Error::InvalidParameter(format!(
            "{} points in window, need {HILBERT_MIN_POINTS}",
            pts.len()
        )));
    }
    let summands: Vec<(u64, f64)> = pts
        .iter()
        .map(|&(n, v)| (n, v / libm::pow(n as f64, sigma)))
        .collect();
    let scaled: Vec<(u64, f64)> = pts
        .iter()
        .map(|&(n, v)| (n, v * libm::pow(n as f64, 1.0 - sigma)))
        .collect();
    let mid = pts.len() / 2;

    let (rho, c_env) = envelope_exponent(&summands);
    let mut partial = 0.0;
    for i in mid..summands.len() {
        let gap = if i == 0 { 1 } else { summands[i].0 - summands[i - 1].0 };
        partial += gap as f64 * summands[i].1;
    }
    let last = summands[summands.len() - 1].0 as f64;
    let tail_sum = if rho == f64::INFINITY {
        partial
    } else if rho > 1.0 {
        partial + c_env * libm::pow(last, 1.0 - rho) / (rho - 1.0)
    } else {
        f64::INFINITY
    };
    let summable = rho > 1.0 + HILBERT_MARGIN;

    let (scaled_rho, _) = envelope_exponent(&scaled);
    let back = &scaled[mid..];
    let hi = back.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = back.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let scaled_oscillation = hi - lo;
    let scaled_cauchy = scaled_oscillation <= HILBERT_TOL || scaled_rho > HILBERT_MARGIN;

    Ok(HilbertVerdict {
        sigma,
        window: (pts[0].0, pts[pts.len() - 1].0),
        summand_exponent: rho,
        tail_sum,
        scaled_sequence: scaled,
        scaled_exponent: scaled_rho,
        scaled_oscillation,
        cauchy_sup: tail_sum + scaled_oscillation,
        summable,
        scaled_cauchy,
        accept: summable && scaled_cauchy,
    })
}
