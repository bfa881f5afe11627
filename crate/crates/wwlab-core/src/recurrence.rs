//! Multiple recurrence averages and the uniform maximum `M_N^k`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::finite_dynamics::{l2_of_values, lp_unchecked, FiniteSystem, Observable};
use crate::math::{e, isqrt, phase};
use crate::par::try_map_indexed;
use crate::sum::{sum, ComplexNeumaier};
use crate::trig_sup::{sup_modulated_average, sup_polyphase, Bracket, PolySup, DEFAULT_POLY_COST};
use crate::ww_core::CubeVertex;
use crate::{Error, Result};

/// Largest system on which the exhaustive sign search is allowed.
pub const BRUTE_FORCE_MAX_POINTS: usize = 10;

/// Relative gain below which the alternating ascent stops.
pub const ASCENT_TOL: f64 = 1e-7;

const MAX_SWEEPS: usize = 100;

fn check_functions(sys: &FiniteSystem, fs: &[Observable]) -> Result<()> {
    for f in fs {
        if f.len() != sys.size() {
            return Err(Error::DimensionMismatch {
                expected: sys.size(),
                found: f.len(),
            });
        }
    }
    Ok(())
}

fn check_exponents(a: &[i64], count: usize) -> Result<()> {
    if a.len() != count {
        return Err(Error::DimensionMismatch {
            expected: count,
            found: a.len(),
        });
    }
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            return Err(Error::InvalidParameter(String::from("exponents must be nonzero")));
        }
        if a[..i].contains(&x) {
            return Err(Error::InvalidParameter(format!("exponent {x} is repeated")));
        }
    }
    Ok(())
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter(String::from("N must be positive")));
    }
    Ok(())
}

/// The recurrence sequence `u_n = prod_j f_j(T^{a_j n} x)` for `n = 1..=N`.
fn recurrence_sequence(sys: &FiniteSystem, fs: &[Observable], a: &[i64], x: usize, n: usize) -> Vec<Complex64> {
    (1..=n as i64)
        .map(|m| {
            fs.iter()
                .zip(a)
                .fold(Complex64::new(1.0, 0.0), |acc, (f, &aj)| acc * f.get(sys.iterate(x, aj * m)))
        })
        .collect()
}

/// `x -> (1/N) sum_{n=1}^N prod_j f_j(T^{a_j n} x)`.
pub fn multiple_recurrence_average(
    sys: &FiniteSystem,
    fs: &[Observable],
    a: &[i64],
    n: usize,
) -> Result<Observable> {
    check_n(n)?;
    check_functions(sys, fs)?;
    check_exponents(a, fs.len())?;
    let values = (0..sys.size())
        .map(|x| {
            let mut acc = ComplexNeumaier::new();
            for v in recurrence_sequence(sys, fs, a, x, n) {
                acc.add(v);
            }
            acc.value() / n as f64
        })
        .collect();
    Observable::new(values)
}

/// How [`uniform_mrec_bracket`] searches the unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MrecStrategy {
    /// Exhaustive search over real signs `g in {-1, 1}^M`; only for `k = 1`
    /// and at most [`BRUTE_FORCE_MAX_POINTS`] points.
    BruteForce,
    /// Alternating ascent. Each step replaces one `g_j` by the unimodular
    /// (or sign) function maximising the linearised objective, which never
    /// decreases the convex objective. The start `g = 1` is always tried,
    /// followed by `restarts` seeded random starts.
    Alternating {
        restarts: usize,
        seed: u64,
        #[serde(default)]
        real_signs: bool,
    },
}

impl Default for MrecStrategy {
    fn default() -> Self {
        MrecStrategy::Alternating {
            restarts: 4,
            seed: 0,
            real_signs: false,
        }
    }
}

/// Result of the `M_N^k` search.
#[derive(Debug, Clone, PartialEq)]
pub struct MrecBracket {
    /// Value attained by the witness.
    pub lower: f64,
    /// `||f||_2` for the ascent. For the exhaustive search this equals
    /// `lower`, the exact maximum over the searched sign class.
    pub upper: f64,
    pub witness: Vec<Observable>,
    /// `true` when the searched class was covered exhaustively.
    pub exact: bool,
    /// Objective after each accepted update of the winning start.
    pub trace: Vec<f64>,
}

/// Evaluation tables for `A(x) = (1/N) sum_n prod_j g_j(T^{jn} x) f(T^{(k+1)n} x)`.
struct MrecProblem<'a> {
    sys: &'a FiniteSystem,
    f: &'a Observable,
    k: usize,
    n: usize,
    /// `orbit[j][x * n + (m-1)] = T^{(j+1) m} x` for `j < k`, and the `f`
    /// index at `j = k`.
    orbit: Vec<Vec<u32>>,
}

impl<'a> MrecProblem<'a> {
    fn new(sys: &'a FiniteSystem, f: &'a Observable, k: usize, n: usize) -> Self {
        let m = sys.size();
        let orbit = (1..=k + 1)
            .map(|j| {
                let mut t = Vec::with_capacity(m * n);
                for x in 0..m {
                    for step in 1..=n as i64 {
                        t.push(sys.iterate(x, j as i64 * step) as u32);
                    }
                }
                t
            })
            .collect();
        Self { sys, f, k, n, orbit }
    }

    fn average(&self, g: &[Vec<Complex64>]) -> Vec<Complex64> {
        let m = self.sys.size();
        let n = self.n;
        (0..m)
            .map(|x| {
                let mut acc = ComplexNeumaier::new();
                for s in 0..n {
                    let mut v = self.f.get(self.orbit[self.k][x * n + s] as usize);
                    for (j, gj) in g.iter().enumerate() {
                        v *= gj[self.orbit[j][x * n + s] as usize];
                    }
                    acc.add(v);
                }
                acc.value() / n as f64
            })
            .collect()
    }

    fn objective(&self, avg: &[Complex64]) -> f64 {
        let s = sum(avg.iter().zip(self.sys.weights()).map(|(z, &w)| w * z.norm_sqr()));
        libm::sqrt(s)
    }

    /// Coefficients `Z(y)` of the linearisation in `g_j` around the current
    /// average.
    fn gradient(&self, g: &[Vec<Complex64>], avg: &[Complex64], j: usize) -> Vec<Complex64> {
        let m = self.sys.size();
        let n = self.n;
        let mut z = vec![Complex64::new(0.0, 0.0); m];
        for x in 0..m {
            let base = avg[x].conj() * self.sys.weight(x) / n as f64;
            for s in 0..n {
                let mut r = self.f.get(self.orbit[self.k][x * n + s] as usize);
                for (i, gi) in g.iter().enumerate() {
                    if i != j {
                        r *= gi[self.orbit[i][x * n + s] as usize];
                    }
                }
                z[self.orbit[j][x * n + s] as usize] += base * r;
            }
        }
        z
    }

    fn ascend(&self, mut g: Vec<Vec<Complex64>>, real_signs: bool) -> (f64, Vec<Vec<Complex64>>, Vec<f64>) {
        let mut avg = self.average(&g);
        let mut value = self.objective(&avg);
        let mut trace = vec![value];
        for _ in 0..MAX_SWEEPS {
            let before = value;
            for j in 0..self.k {
                let z = self.gradient(&g, &avg, j);
                let candidate: Vec<Complex64> = z
                    .iter()
                    .zip(&g[j])
                    .map(|(zy, &old)| {
                        if real_signs {
                            if zy.re > 0.0 {
                                Complex64::new(1.0, 0.0)
                            } else if zy.re < 0.0 {
                                Complex64::new(-1.0, 0.0)
                            } else {
                                old
                            }
                        } else if zy.norm_sqr() == 0.0 {
                            old
                        } else {
                            phase(zy.conj())
                        }
                    })
                    .collect();
                let old = core::mem::replace(&mut g[j], candidate);
                let new_avg = self.average(&g);
                let new_value = self.objective(&new_avg);
                if new_value >= value {
                    avg = new_avg;
                    value = new_value;
                    trace.push(value);
                } else {
                    g[j] = old;
                }
            }
            if value - before <= ASCENT_TOL * value.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        (value, g, trace)
    }
}

/// Bracket for `M_N^k(f) = sup ||(1/N) sum_{n=1}^N prod_{j=1}^k g_j o T^{jn} * f o T^{(k+1)n}||_2`
/// over `||g_j||_inf <= 1`.
pub fn uniform_mrec_bracket(
    sys: &FiniteSystem,
    f: &Observable,
    k: usize,
    n: usize,
    strategy: &MrecStrategy,
) -> Result<MrecBracket> {
    check_n(n)?;
    check_functions(sys, core::slice::from_ref(f))?;
    if k == 0 {
        return Err(Error::InvalidParameter(String::from("k must be positive")));
    }
    let m = sys.size();
    let problem = MrecProblem::new(sys, f, k, n);
    let to_obs = |g: Vec<Vec<Complex64>>| -> Result<Vec<Observable>> {
        g.into_iter().map(Observable::new).collect()
    };
    match strategy {
        MrecStrategy::BruteForce => {
            if k != 1 || m > BRUTE_FORCE_MAX_POINTS {
                return Err(Error::InvalidParameter(format!(
                    "exhaustive search needs k = 1 and at most {BRUTE_FORCE_MAX_POINTS} points"
                )));
            }
            let mut best = (f64::NEG_INFINITY, 0u32);
            for mask in 0..1u32 << m {
                let g: Vec<Complex64> = (0..m)
                    .map(|y| Complex64::new(if (mask >> y) & 1 == 1 { -1.0 } else { 1.0 }, 0.0))
                    .collect();
                let v = problem.objective(&problem.average(core::slice::from_ref(&g)));
                if v > best.0 {
                    best = (v, mask);
                }
            }
            let g: Vec<Complex64> = (0..m)
                .map(|y| Complex64::new(if (best.1 >> y) & 1 == 1 { -1.0 } else { 1.0 }, 0.0))
                .collect();
            Ok(MrecBracket {
                lower: best.0,
                upper: best.0,
                witness: to_obs(vec![g])?,
                exact: true,
                trace: vec![best.0],
            })
        }
        MrecStrategy::Alternating {
            restarts,
            seed,
            real_signs,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut starts = vec![vec![vec![Complex64::new(1.0, 0.0); m]; k]];
            for _ in 0..*restarts {
                let start = (0..k)
                    .map(|_| {
                        (0..m)
                            .map(|_| {
                                if *real_signs {
                                    Complex64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0)
                                } else {
                                    e(rng.gen::<f64>())
                                }
                            })
                            .collect()
                    })
                    .collect();
                starts.push(start);
            }
            let runs = try_map_indexed(starts.len(), |i| -> Result<_> {
                Ok(problem.ascend(starts[i].clone(), *real_signs))
            })?;
            let mut best = None::<(f64, Vec<Vec<Complex64>>, Vec<f64>)>;
            for run in runs {
                if best.as_ref().is_none_or(|b| run.0 > b.0) {
                    best = Some(run);
                }
            }
            let (value, g, trace) = best.expect("at least one start");
            let upper = lp_unchecked(sys, f.values(), 2.0).max(value);
            Ok(MrecBracket {
                lower: value,
                upper,
                witness: to_obs(g)?,
                exact: false,
                trace,
            })
        }
    }
}

/// `|| sup_{t in [0,1)^k} |(1/N) sum_{n=1}^N e(t_1 n + .. + t_k n^k) prod_j f_j(T^{a_j n} x)| ||_2`.
///
/// Certified for `k <= 2`; higher degrees are rejected because only a lower
/// bound is available pointwise.
pub fn polyphase_mrec_sup(
    sys: &FiniteSystem,
    fs: &[Observable],
    a: &[i64],
    k: usize,
    n: usize,
    oversample: usize,
) -> Result<Bracket> {
    check_n(n)?;
    check_functions(sys, fs)?;
    check_exponents(a, fs.len())?;
    if k > 2 {
        return Err(Error::InvalidParameter(format!(
            "polyphase degree {k} has no certified upper bound"
        )));
    }
    let per_point = try_map_indexed(sys.size(), |x| -> Result<(f64, f64)> {
        let u = recurrence_sequence(sys, fs, a, x, n);
        match sup_polyphase(&u, k, oversample, DEFAULT_POLY_COST)? {
            PolySup::Certified(b) => Ok((b.lower, b.upper)),
            PolySup::LowerOnly { .. } => unreachable!("degree at most two is certified"),
        }
    })?;
    let lows: Vec<f64> = per_point.iter().map(|p| p.0).collect();
    let highs: Vec<f64> = per_point.iter().map(|p| p.1).collect();
    Ok(Bracket::new(l2_of_values(sys, &lows), l2_of_values(sys, &highs)))
}

/// Integer polynomial `P(n) = sum_i coeffs[i] n^i`.
fn poly_eval(coeffs: &[i64], n: i64) -> Result<i128> {
    let mut acc: i128 = 0;
    for &c in coeffs.iter().rev() {
        acc = acc
            .checked_mul(n as i128)
            .and_then(|v| v.checked_add(c as i128))
            .ok_or_else(|| Error::InvalidParameter(String::from("polynomial overflow")))?;
    }
    Ok(acc)
}

fn check_point(sys: &FiniteSystem, x: usize) -> Result<()> {
    if x >= sys.size() {
        return Err(Error::InvalidParameter(format!("point {x} outside the system")));
    }
    Ok(())
}

/// `y -> (1/N) sum_{n=1}^N g(S^{P(n)} y) prod_j f_j(T^{a_j n} x)` on the
/// second system, for a fixed base point `x`.
#[allow(clippy::too_many_arguments)]
pub fn return_times_average(
    sys_x: &FiniteSystem,
    x: usize,
    fs: &[Observable],
    a: &[i64],
    sys_y: &FiniteSystem,
    g: &Observable,
    poly: &[i64],
    n: usize,
) -> Result<Observable> {
    check_n(n)?;
    check_point(sys_x, x)?;
    check_functions(sys_x, fs)?;
    check_exponents(a, fs.len())?;
    check_functions(sys_y, core::slice::from_ref(g))?;
    let weights = recurrence_sequence(sys_x, fs, a, x, n);
    let powers: Vec<i128> = (1..=n as i64).map(|m| poly_eval(poly, m)).collect::<Result<_>>()?;
    let values = (0..sys_y.size())
        .map(|y| {
            let mut acc = ComplexNeumaier::new();
            for (w, &p) in weights.iter().zip(&powers) {
                acc.add(g.get(sys_y.iterate_wide(y, p)) * w);
            }
            acc.value() / n as f64
        })
        .collect();
    Observable::new(values)
}

/// `y -> (1/N) sum_{n=1}^N prod_i g_i(S^{b_i n} y) prod_j f_j(T^{a_j n} x)`.
#[allow(clippy::too_many_arguments)]
pub fn multilinear_return_times_average(
    sys_x: &FiniteSystem,
    x: usize,
    fs: &[Observable],
    a: &[i64],
    sys_y: &FiniteSystem,
    gs: &[Observable],
    b: &[i64],
    n: usize,
) -> Result<Observable> {
    check_n(n)?;
    check_point(sys_x, x)?;
    check_functions(sys_x, fs)?;
    check_exponents(a, fs.len())?;
    check_functions(sys_y, gs)?;
    check_exponents(b, gs.len())?;
    let weights = recurrence_sequence(sys_x, fs, a, x, n);
    let values = (0..sys_y.size())
        .map(|y| {
            let seq = recurrence_sequence(sys_y, gs, b, y, n);
            let mut acc = ComplexNeumaier::new();
            for (w, v) in weights.iter().zip(seq) {
                acc.add(v * w);
            }
            acc.value() / n as f64
        })
        .collect();
    Observable::new(values)
}

/// The intermediate function
///
/// `F(x) = S^{-1/2^{K-1}} + (avg_{h in [H]^{K-1}} sup_t |(1/N) sum_n e(nt) prod_j [prod_eta c^{|eta|} f_j o T^{a_j (h . eta)}](T^{a_j n} x)|)^{1/2^{K-1}}`
///
/// with `S = floor(sqrt N)` and `H = floor(sqrt N / |a_1|)`, which requires
/// `N > a_1^2`.
#[allow(clippy::too_many_arguments)]
pub fn intermediate_f(
    sys: &FiniteSystem,
    x: usize,
    fs: &[Observable],
    a: &[i64],
    cube_k: usize,
    n: usize,
    oversample: usize,
) -> Result<Bracket> {
    check_n(n)?;
    check_point(sys, x)?;
    check_functions(sys, fs)?;
    check_exponents(a, fs.len())?;
    if fs.is_empty() || cube_k == 0 {
        return Err(Error::InvalidParameter(String::from("need at least one function and K >= 1")));
    }
    let a1 = a[0].unsigned_abs();
    if (n as u128) <= (a1 as u128) * (a1 as u128) {
        return Err(Error::InvalidParameter(format!("N = {n} must exceed a_1^2 = {}", a1 * a1)));
    }
    let s = isqrt(n as u64);
    let h_range = (s / a1) as usize;
    let dim = cube_k - 1;
    let tuples = h_range.pow(dim as u32);
    let exponent = 1.0 / (1u64 << dim) as f64;
    let parts = try_map_indexed(tuples, |t| -> Result<(f64, f64)> {
        let mut h = Vec::with_capacity(dim);
        let mut rest = t;
        for _ in 0..dim {
            h.push((rest % h_range) as i64 + 1);
            rest /= h_range;
        }
        let u: Vec<Complex64> = (1..=n as i64)
            .map(|m| {
                let mut v = Complex64::new(1.0, 0.0);
                for (f, &aj) in fs.iter().zip(a) {
                    for eta in CubeVertex::all(dim) {
                        let z = f.get(sys.iterate(x, aj * (eta.dot(&h) + m)));
                        v *= if eta.popcount() % 2 == 1 { z.conj() } else { z };
                    }
                }
                v
            })
            .collect();
        let b = sup_modulated_average(&u, oversample)?;
        Ok((b.lower, b.upper))
    })?;
    let count = parts.len() as f64;
    let lo = sum(parts.iter().map(|p| p.0)) / count;
    let hi = sum(parts.iter().map(|p| p.1)) / count;
    let floor = libm::pow(s as f64, -exponent);
    Ok(Bracket::new(floor + libm::pow(lo, exponent), floor + libm::pow(hi, exponent)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_dynamics::{shift_observable, SystemSpec};
    use proptest::prelude::*;
    use rand::Rng;

    fn build(spec: SystemSpec) -> FiniteSystem {
        FiniteSystem::build(&spec).unwrap()
    }

    fn phases(seed: u64, m: usize) -> Observable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Observable::new((0..m).map(|_| e(rng.gen::<f64>())).collect()).unwrap()
    }

    fn real_signs(seed: u64, m: usize) -> Observable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Observable::from_real(&(0..m).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap()
    }

    fn one(m: usize) -> Observable {
        Observable::constant(m, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn recurrence_average_of_constants() {
        let s = build(SystemSpec::CyclicShift { p: 7 });
        let avg = multiple_recurrence_average(&s, &[one(7), one(7)], &[1, 2], 10).unwrap();
        assert!(avg.values().iter().all(|z| (z - 1.0).norm() < 1e-15));
        assert!(multiple_recurrence_average(&s, &[one(7), one(7)], &[1, 1], 10).is_err());
        assert!(multiple_recurrence_average(&s, &[one(7)], &[0], 10).is_err());
    }

    #[test]
    fn single_function_recurrence_is_ergodic_average() {
        let s = build(SystemSpec::CyclicShift { p: 9 });
        let f = phases(3, 9);
        let avg = multiple_recurrence_average(&s, std::slice::from_ref(&f), &[1], 20).unwrap();
        for x in 0..9 {
            let direct: Complex64 = (1..=20).map(|m| f.get(s.iterate(x, m))).sum::<Complex64>() / 20.0;
            assert!((avg.get(x) - direct).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_function_witness() {
        let s = build(SystemSpec::CyclicShift { p: 6 });
        let b = uniform_mrec_bracket(&s, &one(6), 1, 8, &MrecStrategy::default()).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-14);
        assert!((b.upper - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_system_gives_l2_norm() {
        let s = build(SystemSpec::Identity { size: 5 });
        let f = real_signs(2, 5);
        let norm = lp_unchecked(&s, f.values(), 2.0);
        for k in 1..=3 {
            let b = uniform_mrec_bracket(&s, &f, k, 6, &MrecStrategy::default()).unwrap();
            assert!((b.lower - norm).abs() < 1e-12);
        }
    }

    #[test]
    fn ascent_is_monotone() {
        let s = build(SystemSpec::CyclicShift { p: 17 });
        let f = phases(5, 17);
        let b = uniform_mrec_bracket(
            &s,
            &f,
            2,
            12,
            &MrecStrategy::Alternating {
                restarts: 3,
                seed: 1,
                real_signs: false,
            },
        )
        .unwrap();
        assert!(b.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(b.lower <= b.upper);
    }

    #[test]
    fn ascent_with_signs_matches_exhaustive_search() {
        let s = build(SystemSpec::CyclicShift { p: 6 });
        for seed in 0..6 {
            let f = real_signs(seed, 6);
            let exact = uniform_mrec_bracket(&s, &f, 1, 5, &MrecStrategy::BruteForce).unwrap();
            let ascent = uniform_mrec_bracket(
                &s,
                &f,
                1,
                5,
                &MrecStrategy::Alternating {
                    restarts: 64,
                    seed,
                    real_signs: true,
                },
            )
            .unwrap();
            assert!(exact.exact && exact.lower == exact.upper);
            assert!((ascent.lower - exact.lower).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn brute_force_limits() {
        let s = build(SystemSpec::CyclicShift { p: 11 });
        assert!(uniform_mrec_bracket(&s, &one(11), 1, 4, &MrecStrategy::BruteForce).is_err());
        let s = build(SystemSpec::CyclicShift { p: 4 });
        assert!(uniform_mrec_bracket(&s, &one(4), 2, 4, &MrecStrategy::BruteForce).is_err());
    }

    #[test]
    fn return_times_with_trivial_weight() {
        let x_sys = build(SystemSpec::CyclicShift { p: 7 });
        let y_sys = build(SystemSpec::RandomPermutation { size: 5, seed: 2 });
        let f = phases(1, 7);
        let g = phases(2, 5);
        let one_y = one(5);
        let rt = return_times_average(&x_sys, 3, std::slice::from_ref(&f), &[2], &y_sys, &one_y, &[0, 0, 1], 30).unwrap();
        let plain = multiple_recurrence_average(&x_sys, std::slice::from_ref(&f), &[2], 30).unwrap();
        for y in 0..5 {
            assert_eq!(rt.get(y), plain.get(3));
        }
        let lin = return_times_average(&x_sys, 3, std::slice::from_ref(&f), &[2], &y_sys, &g, &[0, 3], 30).unwrap();
        let multi = multilinear_return_times_average(&x_sys, 3, &[f], &[2], &y_sys, &[g], &[3], 30).unwrap();
        for y in 0..5 {
            assert!((lin.get(y) - multi.get(y)).norm() < 1e-15);
        }
    }

    #[test]
    fn intermediate_function_requires_large_n() {
        let s = build(SystemSpec::CyclicShift { p: 11 });
        let f = phases(4, 11);
        assert!(intermediate_f(&s, 0, std::slice::from_ref(&f), &[3], 1, 9, 16).is_err());
        let b = intermediate_f(&s, 0, std::slice::from_ref(&f), &[3], 2, 40, 16).unwrap();
        assert!(b.lower >= 1.0 / 6f64.sqrt());
        assert!(b.lower <= b.upper);
    }

    #[test]
    fn intermediate_function_of_one() {
        let s = build(SystemSpec::CyclicShift { p: 5 });
        let b = intermediate_f(&s, 2, &[one(5)], &[1], 1, 16, 16).unwrap();
        assert!((b.lower - 1.25).abs() < 1e-14);
    }

    #[test]
    fn polyphase_of_character_is_one() {
        let p = 7;
        let s = build(SystemSpec::CyclicShift { p });
        let f = Observable::new((0..p).map(|x| e(2.0 * x as f64 / p as f64)).collect()).unwrap();
        let b = polyphase_mrec_sup(&s, &[f], &[1], 1, 7, 16).unwrap();
        assert!(b.contains(1.0, 1e-12));
    }

    proptest! {
        #[test]
        fn recurrence_average_commutes_with_shift(p in 2usize..20, seed in any::<u64>(), n in 1usize..20, s in -10i64..10) {
            let sys = build(SystemSpec::CyclicShift { p });
            let f = phases(seed, p);
            let g = phases(seed ^ 1, p);
            let a = multiple_recurrence_average(&sys, &[f.clone(), g.clone()], &[1, 3], n).unwrap();
            let fs = shift_observable(&sys, &f, s).unwrap();
            let gs = shift_observable(&sys, &g, s).unwrap();
            let b = multiple_recurrence_average(&sys, &[fs, gs], &[1, 3], n).unwrap();
            let a_shift = shift_observable(&sys, &a, s).unwrap();
            for x in 0..p {
                prop_assert!((a_shift.get(x) - b.get(x)).norm() < 1e-13);
            }
        }

        #[test]
        fn mrec_lower_is_at_most_l2(p in 2usize..12, seed in any::<u64>(), n in 1usize..12, k in 1usize..3) {
            let sys = build(SystemSpec::CyclicShift { p });
            let f = phases(seed, p);
            let b = uniform_mrec_bracket(&sys, &f, k, n, &MrecStrategy::Alternating { restarts: 1, seed, real_signs: false }).unwrap();
            prop_assert!(b.lower <= lp_unchecked(&sys, f.values(), 2.0) + 1e-12);
        }
    }
}
