//! Level counts for shifted lattice boxes.
//!
//! For side lengths `H_1, .., H_k` and `n in [0, q]` the box
//! `Box_n = { h in Z^k : 1 - n <= h_m <= H_m - n }` slides diagonally. Every
//! lattice point `h` lies in `Box_n` exactly for `n` in an interval
//! `[L_h, U_h]`, and the level `p` collects the points with
//! `U_h - L_h + 1 = p`. Counts use `i128`, which covers every family whose
//! bounding region fits in memory.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sides `H_1..H_k` and horizon `q`, with `q > min H_m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxFamily {
    sides: Vec<i64>,
    q: i64,
}

impl BoxFamily {
    pub fn new(sides: Vec<i64>, q: i64) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::InvalidParameter(String::from("need at least one side")));
        }
        if sides.iter().any(|&h| h < 1) {
            return Err(Error::InvalidParameter(String::from("sides must be at least 1")));
        }
        let fam = Self { sides, q };
        if q <= fam.smallest() {
            return Err(Error::InvalidParameter(format!(
                "q = {q} must exceed the smallest side {}",
                fam.smallest()
            )));
        }
        Ok(fam)
    }

    pub fn sides(&self) -> &[i64] {
        &self.sides
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn q(&self) -> i64 {
        self.q
    }

    /// `H_(1)`, the smallest side.
    pub fn smallest(&self) -> i64 {
        *self.sides.iter().min().expect("nonempty")
    }

    /// `H_(2)`, the second smallest side. A single side is its own second
    /// smallest.
    pub fn second_smallest(&self) -> i64 {
        let mut s = self.sides.clone();
        s.sort_unstable();
        if s.len() >= 2 {
            s[1]
        } else {
            s[0]
        }
    }

    /// `prod_m H_m`.
    pub fn volume(&self) -> i128 {
        self.sides.iter().map(|&h| h as i128).product()
    }

    /// `P(s) = prod_m max(H_m - s, 0)`, the size of `Box_a cap Box_{a+s}`.
    pub fn overlap(&self, s: i64) -> i128 {
        self.sides.iter().map(|&h| (h - s).max(0) as i128).product()
    }

    pub fn contains(&self, n: i64, h: &[i64]) -> bool {
        (0..=self.q).contains(&n)
            && h.iter()
                .zip(&self.sides)
                .all(|(&x, &side)| 1 - n <= x && x <= side - n)
    }

    /// `[L_h, U_h]`, or `None` if `h` lies in no box.
    pub fn residence_interval(&self, h: &[i64]) -> Option<(i64, i64)> {
        let mut lo = 0;
        let mut hi = self.q;
        for (&x, &side) in h.iter().zip(&self.sides) {
            lo = lo.max(1 - x);
            hi = hi.min(side - x);
        }
        (lo <= hi).then_some((lo, hi))
    }

    /// Bounding region `Gamma_q = prod_m [1 - q, H_m]` of the union of boxes.
    pub fn bounding_region(&self) -> Vec<(i64, i64)> {
        self.sides.iter().map(|&h| (1 - self.q, h)).collect()
    }

    /// Calls `visit` on every lattice point of the bounding region.
    pub fn for_each_point(&self, mut visit: impl FnMut(&[i64])) {
        let region = self.bounding_region();
        let mut h: Vec<i64> = region.iter().map(|r| r.0).collect();
        loop {
            visit(&h);
            let mut i = 0;
            while i < h.len() {
                h[i] += 1;
                if h[i] <= region[i].1 {
                    break;
                }
                h[i] = region[i].0;
                i += 1;
            }
            if i == h.len() {
                return;
            }
        }
    }
}

fn check_level(fam: &BoxFamily, p: i64) -> Result<()> {
    if p < 1 || p > fam.smallest() {
        return Err(Error::InvalidParameter(format!(
            "level {p} outside 1..={}",
            fam.smallest()
        )));
    }
    Ok(())
}

/// `#{h : U_h - L_h + 1 = p}` by
/// `2 [P(p-1) - P(p)] + (q - p) [P(p-1) - 2 P(p) + P(p+1)]`.
pub fn level_count_exact(fam: &BoxFamily, p: i64) -> Result<i128> {
    check_level(fam, p)?;
    let (a, b, c) = (fam.overlap(p - 1), fam.overlap(p), fam.overlap(p + 1));
    Ok(2 * (a - b) + (fam.q - p) as i128 * (a - 2 * b + c))
}

/// Counts level `p` by scanning every point of the bounding region.
pub fn level_count_bruteforce(fam: &BoxFamily, p: i64) -> Result<i128> {
    check_level(fam, p)?;
    let mut count = 0i128;
    fam.for_each_point(|h| {
        if let Some((lo, hi)) = fam.residence_interval(h) {
            if hi - lo + 1 == p {
                count += 1;
            }
        }
    });
    Ok(count)
}

/// Outcome of [`level_bound_check`]: `lhs <= rhs` is the claim.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelBound {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// `true` for the regime `p = H_(1)`.
    pub top_level: bool,
}

/// Normalised level size `count / (N prod H)` against
/// `2^{k+1} (1/(N H_(1)) + 1/(H_(1) H_(2)))` for `p < H_(1)`, or
/// `2 (H_(2) - H_(1) + 1) / (H_(1) H_(2))` for `p = H_(1)`.
pub fn level_bound_check(fam: &BoxFamily, n: i64, p: i64) -> Result<LevelBound> {
    if n < 1 {
        return Err(Error::InvalidParameter(String::from("N must be positive")));
    }
    let count = level_count_exact(fam, p)?;
    let h1 = fam.smallest() as f64;
    let h2 = fam.second_smallest() as f64;
    let lhs = count as f64 / (n as f64 * fam.volume() as f64);
    let top_level = p == fam.smallest();
    let rhs = if top_level {
        2.0 * (h2 - h1 + 1.0) / (h1 * h2)
    } else {
        let k = fam.dim() as i32;
        libm::pow(2.0, (k + 1) as f64) * (1.0 / (n as f64 * h1) + 1.0 / (h1 * h2))
    };
    Ok(LevelBound {
        lhs,
        rhs,
        slack: rhs - lhs,
        top_level,
    })
}

/// `(lhs, rhs)` of the finite telescoping identity
/// `prod (x_i + 1) - prod x_i = sum_{eta != 1} prod_{eta_i = 1} x_i`.
pub fn first_difference_identity(x: &[f64]) -> (f64, f64) {
    let k = x.len();
    let lhs = x.iter().map(|v| v + 1.0).product::<f64>() - x.iter().product::<f64>();
    let full = if k == 0 { 0 } else { (1u64 << k) - 1 };
    let mut rhs = 0.0;
    for eta in 0..full {
        rhs += subset_product(x, eta);
    }
    (lhs, rhs)
}

/// `(lhs, rhs)` of
/// `prod (x_i + 1) - 2 prod x_i + prod (x_i - 1) = 2 sum_{eta != 1, k - |eta| even} prod_{eta_i = 1} x_i`.
pub fn second_difference_identity(x: &[f64]) -> (f64, f64) {
    let k = x.len() as u32;
    let lhs = x.iter().map(|v| v + 1.0).product::<f64>() - 2.0 * x.iter().product::<f64>()
        + x.iter().map(|v| v - 1.0).product::<f64>();
    let full = if k == 0 { 0 } else { (1u64 << k) - 1 };
    let mut rhs = 0.0;
    for eta in 0..full {
        if (k - eta.count_ones()).is_multiple_of(2) {
            rhs += 2.0 * subset_product(x, eta);
        }
    }
    (lhs, rhs)
}

fn subset_product(x: &[f64], eta: u64) -> f64 {
    x.iter()
        .enumerate()
        .filter(|(i, _)| (eta >> i) & 1 == 1)
        .map(|(_, v)| *v)
        .product()
}

/// Both sides of
/// `sum_{n=0}^q sum_{h in Box_n} T(n, h) = sum_{h in Gamma_q} sum_{n=L_h}^{U_h} T(n, h)`.
pub fn interchange_check<T, F>(fam: &BoxFamily, integrand: F) -> (T, T)
where
    T: Copy + Default + core::ops::Add<Output = T>,
    F: Fn(i64, &[i64]) -> T,
{
    let mut by_n = T::default();
    for n in 0..=fam.q {
        let ranges: Vec<(i64, i64)> = fam.sides.iter().map(|&s| (1 - n, s - n)).collect();
        let mut h: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            by_n = by_n + integrand(n, &h);
            let mut i = 0;
            loop {
                if i == h.len() {
                    break 'outer;
                }
                h[i] += 1;
                if h[i] <= ranges[i].1 {
                    break;
                }
                h[i] = ranges[i].0;
                i += 1;
            }
        }
    }
    let mut by_h = T::default();
    fam.for_each_point(|h| {
        if let Some((lo, hi)) = fam.residence_interval(h) {
            for n in lo..=hi {
                by_h = by_h + integrand(n, h);
            }
        }
    });
    (by_n, by_h)
}

/// One row of a box sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sides: Vec<i64>,
    pub q: i64,
    pub p: i64,
    pub exact: i128,
    pub brute: i128,
    pub bound: LevelBound,
}

/// Every family with `dim <= max_dim`, sides in `1..=max_side` and
/// `q` from `H_(1) + 1` to `max_q`, with `N = q + 1`.
pub fn sweep(max_dim: usize, max_side: i64, max_q: i64) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for dim in 1..=max_dim {
        let mut sides = alloc::vec![1i64; dim];
        loop {
            let h1 = *sides.iter().min().expect("nonempty");
            for q in h1 + 1..=max_q {
                let fam = BoxFamily::new(sides.clone(), q)?;
                for p in 1..=h1 {
                    rows.push(SweepRow {
                        sides: sides.clone(),
                        q,
                        p,
                        exact: level_count_exact(&fam, p)?,
                        brute: level_count_bruteforce(&fam, p)?,
                        bound: level_bound_check(&fam, q + 1, p)?,
                    });
                }
            }
            let mut i = 0;
            while i < dim {
                sides[i] += 1;
                if sides[i] <= max_side {
                    break;
                }
                sides[i] = 1;
                i += 1;
            }
            if i == dim {
                break;
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn fam(sides: &[i64], q: i64) -> BoxFamily {
        BoxFamily::new(sides.to_vec(), q).unwrap()
    }

    #[test]
    fn worked_levels() {
        let f = fam(&[3], 5);
        assert_eq!(level_count_exact(&f, 3).unwrap(), 4);
        assert_eq!(level_count_exact(&f, 1).unwrap(), 2);
        assert_eq!(level_count_bruteforce(&f, 3).unwrap(), 4);
        assert_eq!(level_count_bruteforce(&f, 1).unwrap(), 2);
        // Only the diagonal points (a, a) with a in [-2, 1] stay for two steps.
        let g = fam(&[2, 2], 4);
        assert_eq!(level_count_exact(&g, 2).unwrap(), 4);
        assert_eq!(level_count_bruteforce(&g, 2).unwrap(), 4);
    }

    #[test]
    fn tight_top_level_bound() {
        let b = level_bound_check(&fam(&[3], 5), 6, 3).unwrap();
        assert!((b.lhs - 4.0 / 18.0).abs() < 1e-15);
        assert!((b.rhs - 2.0 / 9.0).abs() < 1e-15);
        assert!(b.slack.abs() < 1e-15);
        assert!(b.top_level);
    }

    /// With one side the second-smallest side is the side itself, and the
    /// top-level estimate stops holding once `q` grows past the tight case.
    #[test]
    fn single_side_top_level_bound_fails_for_long_horizons() {
        let b = level_bound_check(&fam(&[3], 15), 16, 3).unwrap();
        assert_eq!(level_count_exact(&fam(&[3], 15), 3).unwrap(), 14);
        assert!(b.slack < 0.0);
    }

    #[test]
    fn rejects_bad_families() {
        assert!(BoxFamily::new(vec![3, 4], 3).is_err());
        assert!(BoxFamily::new(vec![0], 3).is_err());
        assert!(BoxFamily::new(vec![], 3).is_err());
        assert!(level_count_exact(&fam(&[3], 5), 4).is_err());
        assert!(level_count_exact(&fam(&[3], 5), 0).is_err());
    }

    #[test]
    fn exact_matches_brute_force_on_small_sweep() {
        for row in sweep(2, 4, 9).unwrap() {
            assert_eq!(row.exact, row.brute, "{row:?}");
        }
    }

    #[test]
    fn multi_dimensional_bounds_hold_on_sweep() {
        for row in sweep(3, 4, 10).unwrap() {
            // The one-dimensional top-level bound can fail for long q.
            if row.sides.len() >= 2 || !row.bound.top_level {
                assert!(row.bound.slack >= -1e-12, "{row:?}");
            }
        }
    }

    #[test]
    fn identities_for_small_dimensions() {
        let (a, b) = first_difference_identity(&[2.0]);
        assert_eq!(a, 1.0);
        assert_eq!(b, 1.0);
        let (a, b) = second_difference_identity(&[2.0, 3.0]);
        assert_eq!(a, 2.0);
        assert_eq!(b, 2.0);
    }

    #[test]
    fn interchange_with_weighted_integrand() {
        let f = fam(&[2, 3], 5);
        let (l, r) = interchange_check(&f, |n, h| n * 7 + h[0] * 3 - h[1] * h[1]);
        assert_eq!(l, r);
    }

    fn index_set(fam: &BoxFamily, n: i64) -> Vec<Vec<i64>> {
        let mut pts = Vec::new();
        fam.for_each_point(|h| {
            if fam.contains(n, h) {
                pts.push(h.to_vec());
            }
        });
        pts
    }

    proptest! {
        #[test]
        fn intersection_sizes(sides in prop::collection::vec(1i64..5, 1..4), a in 0i64..6, b in 0i64..6) {
            let h1 = *sides.iter().min().unwrap();
            let f = BoxFamily::new(sides, 6.max(h1 + 1)).unwrap();
            let (a, b) = (a.min(b), a.max(b));
            let sa = index_set(&f, a);
            let sb = index_set(&f, b);
            let shared = sa.iter().filter(|h| sb.contains(h)).count() as i128;
            prop_assert_eq!(shared, f.overlap(b - a));
        }

        #[test]
        fn residence_interval_matches_membership(sides in prop::collection::vec(1i64..5, 1..4), q in 5i64..9) {
            let f = BoxFamily::new(sides, q).unwrap();
            let mut ok = true;
            f.for_each_point(|h| {
                let members: Vec<i64> = (0..=q).filter(|&n| f.contains(n, h)).collect();
                match f.residence_interval(h) {
                    None => ok &= members.is_empty(),
                    Some((lo, hi)) => ok &= members == (lo..=hi).collect::<Vec<_>>(),
                }
            });
            prop_assert!(ok);
        }

        #[test]
        fn identities_hold(x in prop::collection::vec(-3.0f64..3.0, 1..8)) {
            let (a, b) = first_difference_identity(&x);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            let (a, b) = second_difference_identity(&x);
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }
}
