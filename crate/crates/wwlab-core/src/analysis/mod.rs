//! Decay fits, dominance search, the inequality registry and Hilbert
//! transform diagnostics.

mod checks;
mod hilbert;
pub mod inequalities;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::trig_sup::Bracket;
use crate::{Error, Result};

pub use checks::{product_system, run_named_check, CheckName, CheckRow, InequalityCheck, Scenario};
pub use hilbert::{
    hilbert_criterion, hilbert_partial_sums, partial_sums_of, HilbertVerdict, HilbertWeight, PartialSums,
    HILBERT_MIN_POINTS,
};

/// One value of an `N`-indexed family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub n: u64,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<Bracket>,
}

/// A nonnegative sequence sampled at strictly increasing `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub label: String,
    pub entries: Vec<SeriesEntry>,
    /// Hash of the configuration that produced the data, if any.
    #[serde(default)]
    pub provenance: String,
}

impl SeriesReport {
    pub fn new(label: &str, entries: Vec<SeriesEntry>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[1].n <= w[0].n {
                return Err(Error::InvalidParameter(format!(
                    "N must increase strictly ({} then {})",
                    w[0].n, w[1].n
                )));
            }
        }
        if let Some(e) = entries.iter().find(|e| !e.value.is_finite() || e.value < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "value {} at N = {} is not finite and nonnegative",
                e.value, e.n
            )));
        }
        Ok(Self {
            label: String::from(label),
            entries,
            provenance: String::new(),
        })
    }

    /// Builds a report from `(N, value)` pairs.
    pub fn from_values(label: &str, points: impl IntoIterator<Item = (u64, f64)>) -> Result<Self> {
        Self::new(
            label,
            points
                .into_iter()
                .map(|(n, value)| SeriesEntry { n, value, bracket: None })
                .collect(),
        )
    }

    /// Builds a report from brackets, keeping the lower endpoints as values.
    pub fn from_brackets(label: &str, points: impl IntoIterator<Item = (u64, Bracket)>) -> Result<Self> {
        Self::new(
            label,
            points
                .into_iter()
                .map(|(n, b)| SeriesEntry {
                    n,
                    value: b.lower,
                    bracket: Some(b),
                })
                .collect(),
        )
    }

    pub fn value_at(&self, n: u64) -> Option<f64> {
        self.entries
            .binary_search_by_key(&n, |e| e.n)
            .ok()
            .map(|i| self.entries[i].value)
    }

    fn window(&self, lo: u64, hi: u64) -> Vec<&SeriesEntry> {
        self.entries.iter().filter(|e| e.n >= lo && e.n <= hi).collect()
    }
}

/// Least-squares power law `value ~ C N^{-alpha}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    pub r_squared: f64,
    pub window: (u64, u64),
    pub points: usize,
}

/// Minimum number of entries for a decay fit.
pub const MIN_FIT_POINTS: usize = 4;

/// Fits `log value = log C - alpha log N` over the entries with
/// `lo <= N <= hi`. A zero value in the window gives `alpha = +inf`.
pub fn decay_fit(s: &SeriesReport, window: (u64, u64)) -> Result<DecayFit> {
    let pts = s.window(window.0, window.1);
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidParameter(format!(
            "{} points in window [{}, {}], need {MIN_FIT_POINTS}",
            pts.len(),
            window.0,
            window.1
        )));
    }
    if pts.iter().any(|e| e.value == 0.0) {
        return Ok(DecayFit {
            alpha_hat: f64::INFINITY,
            c_hat: 0.0,
            r_squared: 1.0,
            window,
            points: pts.len(),
        });
    }
    let xs: Vec<f64> = pts.iter().map(|e| libm::log(e.n as f64)).collect();
    let ys: Vec<f64> = pts.iter().map(|e| libm::log(e.value)).collect();
    let (slope, intercept, r2) = least_squares(&xs, &ys);
    Ok(DecayFit {
        alpha_hat: -slope,
        c_hat: libm::exp(intercept),
        r_squared: r2,
        window,
        points: pts.len(),
    })
}

/// `(slope, intercept, r^2)` of the ordinary least-squares line.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = crate::sum::sum(xs.iter().copied()) / n;
    let my = crate::sum::sum(ys.iter().copied()) / n;
    let sxx = crate::sum::sum(xs.iter().map(|x| (x - mx) * (x - mx)));
    let sxy = crate::sum::sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let syy = crate::sum::sum(ys.iter().map(|y| (y - my) * (y - my)));
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

/// Reparametrisation of the comparison sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phi {
    Identity,
    /// `floor(N^beta)`.
    Power { beta: f64 },
}

impl Phi {
    pub fn apply(&self, n: u64) -> u64 {
        match self {
            Phi::Identity => n,
            Phi::Power { beta } => crate::math::floor_pow(n, *beta).max(1),
        }
    }
}

/// Search space for [`precsim_fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecsimGrid {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub phis: Vec<Phi>,
    pub c_max: f64,
    /// Minimum number of window points beyond `N_0`.
    pub min_tail: usize,
}

impl Default for PrecsimGrid {
    fn default() -> Self {
        let twelfths: Vec<f64> = (1..=12).map(|i| i as f64 / 12.0).collect();
        let mut phis = alloc::vec![Phi::Identity];
        phis.extend(twelfths.iter().map(|&beta| Phi::Power { beta }));
        Self {
            alphas: twelfths.clone(),
            gammas: twelfths,
            phis,
            c_max: 1e6,
            min_tail: MIN_FIT_POINTS,
        }
    }
}

/// A witness for `f(N) <= C (N^{-alpha} + g(phi(N))^gamma)` for `N > N_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecsimWitness {
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub phi: Phi,
    pub n0: u64,
    /// `max_N f(N) - C (..)` over the window beyond `N_0`; at most zero.
    pub residual: f64,
}

/// Grid search for a dominance witness.
///
/// For each `(alpha, gamma, phi)` the ratios
/// `c_N = f(N) / (N^{-alpha} + g(phi(N))^gamma)` are formed. A finite window
/// cannot certify "for all large `N`", so a triple is accepted only when
/// the ratios beyond `N_0` attain their maximum at the first point, with at
/// least `min_tail` points left; `N_0` is the smallest such cut and `C` the
/// maximum ratio. Among accepted triples the witness with the largest
/// `alpha`, then the smallest `C`, then the largest `gamma` is returned.
pub fn precsim_fit(
    f: &SeriesReport,
    g: &dyn Fn(u64) -> Option<f64>,
    grid: &PrecsimGrid,
) -> Result<Option<PrecsimWitness>> {
    let entries = &f.entries;
    if entries.len() < grid.min_tail {
        return Err(Error::InvalidParameter(format!(
            "series has {} points, need {}",
            entries.len(),
            grid.min_tail
        )));
    }
    let mut best: Option<PrecsimWitness> = None;
    for phi in &grid.phis {
        let gv: Vec<f64> = entries
            .iter()
            .map(|e| {
                let m = phi.apply(e.n);
                match g(m) {
                    Some(v) if v.is_finite() && v >= 0.0 => Ok(v),
                    Some(v) => Err(Error::InvalidParameter(format!("g({m}) = {v}"))),
                    None => Err(Error::Coverage { missing: m }),
                }
            })
            .collect::<Result<_>>()?;
        for &alpha in &grid.alphas {
            for &gamma in &grid.gammas {
                let ratios: Vec<f64> = entries
                    .iter()
                    .zip(&gv)
                    .map(|(e, &gn)| {
                        let denom = libm::pow(e.n as f64, -alpha) + libm::pow(gn, gamma);
                        e.value / denom
                    })
                    .collect();
                let Some((start, c)) = stable_cut(&ratios, grid.min_tail) else {
                    continue;
                };
                if !(c <= grid.c_max) {
                    continue;
                }
                let residual = entries[start..]
                    .iter()
                    .zip(&gv[start..])
                    .map(|(e, &gn)| e.value - c * (libm::pow(e.n as f64, -alpha) + libm::pow(gn, gamma)))
                    .fold(f64::NEG_INFINITY, f64::max);
                let candidate = PrecsimWitness {
                    c,
                    alpha,
                    gamma,
                    phi: *phi,
                    n0: if start == 0 { 0 } else { entries[start - 1].n },
                    residual: residual.min(0.0),
                };
                if better(&candidate, best.as_ref()) {
                    best = Some(candidate);
                }
            }
        }
    }
    Ok(best)
}

const RATIO_TIE: f64 = 1e-9;

/// Smallest index from which the remaining ratios peak at their first
/// element, together with that peak.
fn stable_cut(ratios: &[f64], min_tail: usize) -> Option<(usize, f64)> {
    if ratios.iter().any(|r| !r.is_finite()) {
        return None;
    }
    let len = ratios.len();
    let mut suffix_max = alloc::vec![0.0; len];
    let mut running = f64::NEG_INFINITY;
    for i in (0..len).rev() {
        running = running.max(ratios[i]);
        suffix_max[i] = running;
    }
    (0..=len.saturating_sub(min_tail))
        .find(|&s| suffix_max[s] <= ratios[s] * (1.0 + RATIO_TIE))
        .map(|s| (s, suffix_max[s]))
}

fn better(a: &PrecsimWitness, b: Option<&PrecsimWitness>) -> bool {
    let Some(b) = b else { return true };
    if a.alpha != b.alpha {
        return a.alpha > b.alpha;
    }
    if a.c != b.c {
        return a.c < b.c;
    }
    a.gamma > b.gamma
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn series(points: &[(u64, f64)]) -> SeriesReport {
        SeriesReport::from_values("s", points.iter().copied()).unwrap()
    }

    fn geometric(f: impl Fn(f64) -> f64) -> SeriesReport {
        series(&(4..=12).map(|e| (1u64 << e, f((1u64 << e) as f64))).collect::<Vec<_>>())
    }

    #[test]
    fn report_invariants() {
        assert!(SeriesReport::from_values("x", [(2, 1.0), (2, 1.0)]).is_err());
        assert!(SeriesReport::from_values("x", [(2, -1.0)]).is_err());
        assert!(SeriesReport::from_values("x", [(2, f64::NAN)]).is_err());
        let s = series(&[(2, 1.0), (5, 3.0)]);
        assert_eq!(s.value_at(5), Some(3.0));
        assert_eq!(s.value_at(4), None);
    }

    #[test]
    fn planted_power_law() {
        let s = geometric(|n| 10.0 * n.powf(-0.5));
        let fit = decay_fit(&s, (16, 4096)).unwrap();
        assert!((fit.alpha_hat - 0.5).abs() < 1e-6);
        assert!((fit.c_hat - 10.0).abs() < 1e-4);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_series_has_zero_exponent() {
        let fit = decay_fit(&geometric(|_| 0.3), (1, 1 << 20)).unwrap();
        assert!(fit.alpha_hat.abs() < 1e-9);
    }

    #[test]
    fn zero_values_and_short_windows() {
        let mut pts: Vec<(u64, f64)> = (1..=5).map(|n| (n, 1.0)).collect();
        pts[2].1 = 0.0;
        assert_eq!(decay_fit(&series(&pts), (1, 5)).unwrap().alpha_hat, f64::INFINITY);
        assert!(decay_fit(&series(&pts), (1, 3)).is_err());
    }

    #[test]
    fn decaying_series_dominated_by_zero() {
        let f = geometric(|n| n.powf(-0.5));
        let w = precsim_fit(&f, &|_| Some(0.0), &PrecsimGrid::default()).unwrap().unwrap();
        assert_eq!(w.alpha, 0.5);
        assert!((w.c - 1.0).abs() < 1e-12);
        assert!(w.residual <= 0.0);
    }

    #[test]
    fn reflexivity() {
        let f = geometric(|n| 1.0 / (1.0 + n.ln()));
        let g = f.clone();
        let grid = PrecsimGrid {
            gammas: vec![1.0],
            phis: vec![Phi::Identity],
            ..PrecsimGrid::default()
        };
        let w = precsim_fit(&f, &|n| g.value_at(n), &grid).unwrap().unwrap();
        assert!(w.c <= 1.0 && w.residual <= 0.0);
    }

    #[test]
    fn constant_is_not_dominated_by_decay() {
        let f = geometric(|_| 1.0);
        let w = precsim_fit(&f, &|n| Some(1.0 / n as f64), &PrecsimGrid::default()).unwrap();
        assert!(w.is_none());
    }

    #[test]
    fn coverage_gap_names_index() {
        let f = geometric(|n| 1.0 / n);
        let g = f.clone();
        let grid = PrecsimGrid {
            phis: vec![Phi::Power { beta: 0.5 }],
            ..PrecsimGrid::default()
        };
        let err = precsim_fit(&f, &|n| g.value_at(n), &grid).unwrap_err();
        assert_eq!(err, Error::Coverage { missing: 4 });
    }
}
