//! Both sides of the elementary inequalities the averages are built on,
//! evaluated on raw data.

use alloc::format;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::finite_dynamics::{FiniteSystem, Observable};
use crate::math::abs;
use crate::sum::{ComplexNeumaier, Neumaier};
use crate::trig_sup::{sup_modulated_average, Bracket};
use crate::{Error, Result};

fn check_h(n: usize, h: usize, max: usize) -> Result<()> {
    if n == 0 || h == 0 || h > max {
        return Err(Error::InvalidParameter(format!("H = {h} outside [1, {max}] for N = {n}")));
    }
    Ok(())
}

/// `sum_{n=0}^{N-h-1} conj(v_{n+h}) v_n`.
fn lag_correlation(v: &[Complex64], h: usize) -> Complex64 {
    let mut acc = ComplexNeumaier::new();
    for n in 0..v.len().saturating_sub(h) {
        acc.add(v[n + h].conj() * v[n]);
    }
    acc.value()
}

fn energy(v: &[Complex64]) -> f64 {
    crate::sum::sum(v.iter().map(|z| z.norm_sqr()))
}

/// `(|avg v|^2, RHS)` of the van der Corput estimate with `1 <= H <= N`.
pub fn vdc(v: &[Complex64], h: usize) -> Result<(f64, f64)> {
    let n = v.len();
    check_h(n, h, n)?;
    let nf = n as f64;
    let hf = h as f64;
    let mean = crate::sum::sum_complex(v.iter().copied()) / nf;
    let lhs = mean.norm_sqr();
    let mut lags = Neumaier::new();
    for lag in 1..=h {
        lags.add((hf + 1.0 - lag as f64) * lag_correlation(v, lag).re);
    }
    let rhs = (nf + hf) / (nf * nf * (hf + 1.0)) * energy(v)
        + 2.0 * (nf + hf) / (nf * nf * (hf + 1.0) * (hf + 1.0)) * lags.value();
    Ok((lhs, rhs))
}

/// `(sup_t |avg u_n e(nt)|^2, RHS)` of the supremum variant, `1 <= H <= N - 1`.
/// The left side is a certified bracket.
pub fn vdc_sup(u: &[Complex64], h: usize, oversample: usize) -> Result<(Bracket, f64)> {
    let n = u.len();
    check_h(n, h, n.saturating_sub(1))?;
    let nf = n as f64;
    let hf = h as f64;
    let lhs = sup_modulated_average(u, oversample)?.powf(2.0);
    let mut lags = Neumaier::new();
    for lag in 1..=h {
        lags.add(abs(lag_correlation(u, lag) / nf));
    }
    let rhs = 2.0 / (nf * (hf + 1.0)) * energy(u) + 4.0 / (hf + 1.0) * lags.value();
    Ok((lhs, rhs))
}

/// The supremum side once, with the right side for every `1 <= H <= N - 1`.
pub fn vdc_sup_all(u: &[Complex64], oversample: usize) -> Result<(Bracket, Vec<(usize, f64)>)> {
    let n = u.len();
    check_h(n, 1, n.saturating_sub(1))?;
    let nf = n as f64;
    let lhs = sup_modulated_average(u, oversample)?.powf(2.0);
    let e = energy(u);
    let mut lags = Neumaier::new();
    let mut out = Vec::with_capacity(n - 1);
    for h in 1..n {
        lags.add(abs(lag_correlation(u, h) / nf));
        let hf = h as f64;
        out.push((h, 2.0 / (nf * (hf + 1.0)) * e + 4.0 / (hf + 1.0) * lags.value()));
    }
    Ok((lhs, out))
}

/// `(int |(1/N) sum_{n=1}^N f o T^n|^2, (2/N) sum_{n<N} (N-n)/N Re int f conj(f o T^n))`.
pub fn vdc_systems(sys: &FiniteSystem, f: &Observable, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidParameter(format!("N = {n}")));
    }
    if f.len() != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: f.len(),
        });
    }
    let nf = n as f64;
    let mut lhs = Neumaier::new();
    for x in 0..sys.size() {
        let mut acc = ComplexNeumaier::new();
        for m in 1..=n as i64 {
            acc.add(f.get(sys.iterate(x, m)));
        }
        lhs.add(sys.weight(x) * (acc.value() / nf).norm_sqr());
    }
    let mut rhs = Neumaier::new();
    for lag in 0..n {
        let mut corr = Neumaier::new();
        for x in 0..sys.size() {
            corr.add(sys.weight(x) * (f.get(x) * f.get(sys.iterate(x, lag as i64)).conj()).re);
        }
        rhs.add((nf - lag as f64) / nf * corr.value());
    }
    Ok((lhs.value(), 2.0 / nf * rhs.value()))
}

/// Power mean `((1/N) sum a_n^p)^{1/p}` of a nonnegative sequence.
pub fn power_mean(a: &[f64], p: f64) -> Result<f64> {
    if a.is_empty() || !(p > 0.0) || a.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidParameter(format!(
            "power mean needs a nonempty nonnegative sequence and p > 0 (p = {p})"
        )));
    }
    let s = crate::sum::sum(a.iter().map(|&x| libm::pow(x, p))) / a.len() as f64;
    Ok(libm::pow(s, 1.0 / p))
}

/// `(||sup_{N <= N_max} (1/N) sum_{n=1}^N f o T^n||_p, p/(p-1) ||f||_p)` for
/// real `f`, `p > 1`.
pub fn maximal(sys: &FiniteSystem, f: &Observable, p: f64, n_max: usize) -> Result<(f64, f64)> {
    if !(p > 1.0) || n_max == 0 {
        return Err(Error::InvalidParameter(format!("maximal inequality needs p > 1, N >= 1 (p = {p})")));
    }
    if !f.is_real() {
        return Err(Error::InvalidObservable(alloc::string::String::from("maximal inequality needs a real function")));
    }
    if f.len() != sys.size() {
        return Err(Error::DimensionMismatch {
            expected: sys.size(),
            found: f.len(),
        });
    }
    let mut lhs = Neumaier::new();
    let mut norm = Neumaier::new();
    for x in 0..sys.size() {
        let mut acc = Neumaier::new();
        let mut sup = f64::NEG_INFINITY;
        for m in 1..=n_max {
            acc.add(f.get(sys.iterate(x, m as i64)).re);
            sup = sup.max(acc.value() / m as f64);
        }
        lhs.add(sys.weight(x) * libm::pow(libm::fabs(sup), p));
        norm.add(sys.weight(x) * libm::pow(libm::fabs(f.get(x).re), p));
    }
    Ok((
        libm::pow(lhs.value(), 1.0 / p),
        p / (p - 1.0) * libm::pow(norm.value(), 1.0 / p),
    ))
}

/// `(|S_M - S_N|, sum_{n=N}^{M-1} |A_n| / n^sigma + |M^{1-sigma} A_M - N^{1-sigma} A_N|)`
/// for the sequence `a_1, .., a_len` and `1 <= N < M <= len`.
pub fn hilbert_cauchy(a: &[Complex64], sigma: f64, n: usize, m: usize) -> Result<(f64, f64)> {
    if !(n >= 1 && n < m && m <= a.len()) {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= N < M <= {} (N = {n}, M = {m})",
            a.len()
        )));
    }
    let ps = super::hilbert::partial_sums_of(&a[..m], sigma)?;
    let lhs = abs(ps.sum(m) - ps.sum(n));
    let mut tail = Neumaier::new();
    for k in n..m {
        tail.add(abs(ps.average(k)) / libm::pow(k as f64, sigma));
    }
    let scaled = |k: usize| ps.average(k) * libm::pow(k as f64, 1.0 - sigma);
    Ok((lhs, tail.value() + abs(scaled(m) - scaled(n))))
}

/// Both sides for every valid `H`, as `(H, lhs, rhs)`.
pub fn vdc_all(v: &[Complex64]) -> Result<Vec<(usize, f64, f64)>> {
    (1..=v.len())
        .map(|h| vdc(v, h).map(|(l, r)| (h, l, r)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_dynamics::SystemSpec;
    use alloc::vec;
    use proptest::prelude::*;

    fn ones(n: usize) -> Vec<Complex64> {
        vec![Complex64::new(1.0, 0.0); n]
    }

    #[test]
    fn vdc_worked_example() {
        let (lhs, rhs) = vdc(&ones(4), 1).unwrap();
        assert_eq!(lhs, 1.0);
        assert!((rhs - 1.09375).abs() < 1e-15);
    }

    #[test]
    fn vdc_sup_constant_sequence() {
        let (lhs, rhs) = vdc_sup(&ones(8), 7, 16).unwrap();
        assert!(lhs.contains(1.0, 1e-12));
        assert!((rhs - (2.0 / 8.0 + 4.0 / 8.0 * 3.5)).abs() < 1e-12);
        assert!(vdc_sup(&ones(8), 8, 16).is_err());
    }

    #[test]
    fn holder_on_constants_is_flat() {
        for p in [0.5, 1.0, 2.0, 4.0] {
            assert!((power_mean(&[3.0; 5], p).unwrap() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn maximal_for_constant_function() {
        let sys = FiniteSystem::build(&SystemSpec::CyclicShift { p: 5 }).unwrap();
        let f = Observable::from_real(&[-1.0; 5]).unwrap();
        let (lhs, rhs) = maximal(&sys, &f, 2.0, 10).unwrap();
        assert!((lhs - 1.0).abs() < 1e-12 && (rhs - 2.0).abs() < 1e-12);
    }

    #[test]
    fn hilbert_cauchy_on_harmonic_tail() {
        let (lhs, rhs) = hilbert_cauchy(&ones(20), 1.0, 5, 20).unwrap();
        let exact: f64 = (6..=20).map(|n| 1.0 / n as f64).sum();
        assert!((lhs - exact).abs() < 1e-12);
        assert!(rhs >= lhs);
    }

    fn complex_seq(max: usize) -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..max)
            .prop_map(|v| v.into_iter().map(|(a, b)| Complex64::new(a, b)).collect())
    }

    proptest! {
        #[test]
        fn vdc_holds(v in complex_seq(40)) {
            for (_, lhs, rhs) in vdc_all(&v).unwrap() {
                prop_assert!(rhs - lhs >= -1e-9);
            }
        }

        #[test]
        fn vdc_sup_holds(v in complex_seq(24)) {
            for h in 1..v.len() {
                let (lhs, rhs) = vdc_sup(&v, h, 16).unwrap();
                prop_assert!(rhs - lhs.upper >= -1e-9);
            }
        }

        #[test]
        fn batched_sup_matches_single(v in complex_seq(20)) {
            let (lhs, all) = vdc_sup_all(&v, 8).unwrap();
            for (h, rhs) in all {
                let (l, r) = vdc_sup(&v, h, 8).unwrap();
                prop_assert_eq!(l.upper, lhs.upper);
                prop_assert!((r - rhs).abs() <= 1e-12 * r.max(1.0));
            }
        }

        #[test]
        fn vdc_systems_holds(vals in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 13), n in 1usize..40) {
            let sys = FiniteSystem::build(&SystemSpec::CyclicShift { p: 13 }).unwrap();
            let f = Observable::new(vals.into_iter().map(|(a, b)| Complex64::new(a, b)).collect()).unwrap();
            let (lhs, rhs) = vdc_systems(&sys, &f, n).unwrap();
            prop_assert!(rhs - lhs >= -1e-10);
        }

        #[test]
        fn power_means_increase(a in prop::collection::vec(0.0f64..10.0, 1..30)) {
            let ps = [0.5, 1.0, 2.0, 4.0];
            for w in ps.windows(2) {
                prop_assert!(power_mean(&a, w[1]).unwrap() - power_mean(&a, w[0]).unwrap() >= -1e-9);
            }
        }

        #[test]
        fn hilbert_cauchy_holds(a in complex_seq(64), sigma in prop::sample::select(vec![0.5, 0.9, 1.0])) {
            let m = a.len();
            for n in 1..m {
                let (lhs, rhs) = hilbert_cauchy(&a, sigma, n, m).unwrap();
                prop_assert!(rhs - lhs >= -1e-9);
            }
        }
    }
}
