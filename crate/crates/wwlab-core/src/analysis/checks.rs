//! Registry of named inequalities evaluated on concrete scenarios.
//!
//! Every check yields one [`CheckRow`] per evaluation point. Brackets enter
//! conservatively: the left side at its upper endpoint and the right side at
//! its lower endpoint, unless [`InequalityCheck::endpoint_policy`] records
//! otherwise. Fitted checks carry an unspecified constant, so they record
//! `c_N = lhs / rhs` and pass when the maximum is finite and attained at the
//! smallest `N`. Exact checks pass when every slack `rhs - lhs` is at least
//! `-tolerance`.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::inequalities;
use crate::finite_dynamics::{
    conditional_expectation, lp_norm, spectral_coefficient, tensor, FiniteSystem, Observable, Partition,
    SystemSpec,
};
use crate::math::{iroot, isqrt, pow};
use crate::par::try_map_indexed;
use crate::recurrence::{
    intermediate_f, multilinear_return_times_average, polyphase_mrec_sup, uniform_mrec_bracket, MrecStrategy,
};
use crate::sum::Neumaier;
use crate::trig_sup::Bracket;
use crate::ww_core::{
    box_average, off_diagonal_average, schedule_ranges, weak_sup_bracket, weak_ww_average, ww_average,
    ww_average_alt, CubeAssignment, CubeVertex, PointNorm, ScheduleR, WwOptions,
};
use crate::{Error, Result};

macro_rules! check_names {
    ($($variant:ident => $text:literal),* $(,)?) => {
        /// Names of the registered checks.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum CheckName {
            $($variant),*
        }

        impl CheckName {
            pub const ALL: &'static [CheckName] = &[$(CheckName::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(CheckName::$variant => $text),*
                }
            }
        }

        impl FromStr for CheckName {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(CheckName::$variant),)*
                    other => Err(Error::UnknownCheck(other.to_owned())),
                }
            }
        }
    };
}

check_names! {
    Vdc => "vdc",
    VdcSup => "vdc_sup",
    VdcSystems => "vdc_systems",
    HolderAverages => "holder_averages",
    Maximal => "maximal",
    Bourgain => "bourgain",
    ReverseBourgain => "reverse_bourgain",
    Sublinearity => "sublinearity",
    OffdiagControl => "offdiag_control",
    OffdiagPermute => "offdiag_permute",
    CondExp => "cond_exp",
    WeakStrong => "weak_strong",
    SpectralWeak => "spectral_weak",
    WeakProduct => "weak_product",
    StrongProduct => "strong_product",
    AltUpper => "alt_upper",
    AltBb => "alt_bb",
    Shrinking => "shrinking",
    PolyWw => "poly_ww",
    IntermediateFPtwise => "intermediate_F_ptwise",
    IntermediateFIntegral => "intermediate_F_integral",
    GeneralRbb => "general_rbb",
    HilbertCauchy => "hilbert_cauchy",
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl CheckName {
    /// Whether the check carries an unspecified multiplicative constant.
    pub fn is_fitted(self) -> bool {
        use CheckName::*;
        matches!(
            self,
            Bourgain
                | ReverseBourgain
                | Sublinearity
                | OffdiagControl
                | CondExp
                | StrongProduct
                | AltUpper
                | AltBb
                | PolyWw
                | IntermediateFPtwise
                | IntermediateFIntegral
                | GeneralRbb
        )
    }
}

/// Inputs for a check. Each check reads the fields it needs and reports
/// [`Error::Arity`] for missing ones.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: Option<FiniteSystem>,
    pub functions: Vec<Observable>,
    /// The second factor for product checks, or the return-times system.
    pub second_system: Option<FiniteSystem>,
    pub second_functions: Vec<Observable>,
    /// Raw sequences for the checks that do not involve a system.
    pub sequences: Vec<Vec<Complex64>>,
    pub n_values: Vec<usize>,
    pub k: usize,
    /// Polynomial degree for `poly_ww`.
    pub degree: usize,
    /// Cube order `K` for `intermediate_F_integral`.
    pub cube_k: usize,
    /// A single van der Corput `H`; `None` runs every admissible value.
    pub h: Option<usize>,
    /// Exponents `a_j`; empty means `1, 2, ..`.
    pub exponents: Vec<i64>,
    /// Exponents `b_j` of the return-times weight; empty means `1, 2, ..`.
    pub weight_exponents: Vec<i64>,
    pub point: usize,
    pub partition: Option<Partition>,
    pub schedules: Vec<ScheduleR>,
    pub beta: u32,
    /// Slot moved into the all-ones position; `None` is the all-ones vertex.
    pub zeta: Option<CubeVertex>,
    pub sigma: f64,
    pub p_exponents: Vec<f64>,
    /// Use the `k = 1` reverse Bourgain bound with inner length `floor(sqrt N)`.
    pub improved: bool,
    pub mrec: MrecStrategy,
    pub options: WwOptions,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            system: None,
            functions: Vec::new(),
            second_system: None,
            second_functions: Vec::new(),
            sequences: Vec::new(),
            n_values: Vec::new(),
            k: 1,
            degree: 1,
            cube_k: 2,
            h: None,
            exponents: Vec::new(),
            weight_exponents: Vec::new(),
            point: 0,
            partition: None,
            schedules: Vec::new(),
            beta: 2,
            zeta: None,
            sigma: 1.0,
            p_exponents: vec![0.5, 1.0, 2.0, 4.0],
            improved: false,
            mrec: MrecStrategy::default(),
            options: WwOptions::default(),
        }
    }
}

mod lenient_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// One evaluation of both sides. `part` separates the sub-inequalities of
/// checks with more than one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub n: u64,
    #[serde(default)]
    pub part: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<u64>,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; infinite when only the right side vanishes.
    #[serde(with = "lenient_f64")]
    pub c_n: f64,
    pub slack: f64,
    pub tolerance: f64,
    /// Largest relative width among the brackets that fed this row.
    #[serde(default)]
    pub rel_width: f64,
}

impl CheckRow {
    fn new(n: usize, part: u32, h: Option<usize>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let c_n = if lhs == 0.0 {
            0.0
        } else if rhs == 0.0 {
            f64::INFINITY
        } else {
            lhs / rhs
        };
        Self {
            n: n as u64,
            part,
            h: h.map(|h| h as u64),
            lhs,
            rhs,
            c_n,
            slack: rhs - lhs,
            tolerance,
            rel_width: 0.0,
        }
    }

    fn widths(mut self, brackets: &[&Bracket]) -> Self {
        self.rel_width = brackets.iter().map(|b| b.relative_width()).fold(0.0, f64::max);
        self
    }

    pub fn holds(&self) -> bool {
        self.slack >= -self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: CheckName,
    pub fitted: bool,
    /// Which bracket endpoints fed each side.
    pub endpoint_policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub rows: Vec<CheckRow>,
    #[serde(with = "lenient_f64")]
    pub c_max: f64,
    /// `c_N` is maximal at the smallest `N`, up to a relative `1e-9`.
    pub stable: bool,
    pub verdict: bool,
}

const STABLE_TOL: f64 = 1e-9;
const CONSERVATIVE: &str = "lhs upper, rhs lower";
const RAW: &str = "exact values on both sides";

impl InequalityCheck {
    fn finish(name: CheckName, policy: &str, label: Option<String>, rows: Vec<CheckRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Arity(format!("{name} produced no rows")));
        }
        let fitted = name.is_fitted();
        let c_max = rows.iter().map(|r| r.c_n).fold(0.0, f64::max);
        let first_n = rows.iter().map(|r| r.n).min().expect("nonempty");
        let first_c = rows
            .iter()
            .filter(|r| r.n == first_n)
            .map(|r| r.c_n)
            .fold(0.0, f64::max);
        let stable = c_max.is_finite() && first_c >= c_max * (1.0 - STABLE_TOL);
        let verdict = if fitted {
            c_max.is_finite() && stable
        } else {
            rows.iter().all(CheckRow::holds)
        };
        Ok(Self {
            name,
            fitted,
            endpoint_policy: policy.to_owned(),
            label,
            rows,
            c_max,
            stable,
            verdict,
        })
    }

    /// Smallest slack over all rows.
    pub fn worst_slack(&self) -> f64 {
        self.rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min)
    }
}

fn arity(what: &str) -> Error {
    Error::Arity(String::from(what))
}

impl Scenario {
    fn sys(&self) -> Result<&FiniteSystem> {
        self.system.as_ref().ok_or_else(|| arity("a system"))
    }

    fn second_sys(&self) -> Result<&FiniteSystem> {
        self.second_system.as_ref().ok_or_else(|| arity("a second system"))
    }

    fn function(&self, i: usize) -> Result<&Observable> {
        self.functions
            .get(i)
            .ok_or_else(|| Error::Arity(format!("at least {} functions", i + 1)))
    }

    fn second_function(&self, i: usize) -> Result<&Observable> {
        self.second_functions
            .get(i)
            .ok_or_else(|| Error::Arity(format!("at least {} functions on the second system", i + 1)))
    }

    fn sequences(&self) -> Result<&[Vec<Complex64>]> {
        if self.sequences.is_empty() {
            return Err(arity("raw sequences"));
        }
        Ok(&self.sequences)
    }

    fn ns(&self) -> Result<Vec<usize>> {
        let mut ns = self.n_values.clone();
        ns.sort_unstable();
        ns.dedup();
        if ns.is_empty() {
            return Err(arity("N values"));
        }
        if ns[0] == 0 {
            return Err(Error::InvalidParameter(String::from("N must be positive")));
        }
        Ok(ns)
    }

    fn exponents_or_default(given: &[i64], count: usize) -> Vec<i64> {
        if given.is_empty() {
            (1..=count as i64).collect()
        } else {
            given.to_vec()
        }
    }

    fn w(&self, f: &Observable, k: usize, n: usize) -> Result<Bracket> {
        ww_average(self.sys()?, f, k, n, &self.options)
    }

    fn m_lower(&self, f: &Observable, k: usize, n: usize) -> Result<f64> {
        Ok(uniform_mrec_bracket(self.sys()?, f, k, n, &self.mrec)?.lower)
    }
}

/// One fitted row per `N`, computed in parallel and kept in `N` order.
fn per_n<F>(sc: &Scenario, eval: F) -> Result<Vec<CheckRow>>
where
    F: Fn(usize) -> Result<(f64, f64)> + Sync + Send,
{
    let ns = sc.ns()?;
    try_map_indexed(ns.len(), |i| {
        let (lhs, rhs) = eval(ns[i])?;
        Ok(CheckRow::new(ns[i], 0, None, lhs, rhs, 0.0))
    })
}

fn quarter(n: usize) -> usize {
    iroot(n as u64, 4) as usize
}

fn root(n: usize) -> usize {
    isqrt(n as u64) as usize
}

fn inv_pow(n: usize, e: f64) -> f64 {
    pow(n as f64, -e)
}

/// `2^e` for a possibly negative integer exponent.
fn two_pow(e: i32) -> f64 {
    libm::ldexp(1.0, e)
}

/// Evaluates the named check on `scenario`.
pub fn run_named_check(name: CheckName, sc: &Scenario) -> Result<InequalityCheck> {
    use CheckName::*;
    match name {
        Vdc => vdc(sc),
        VdcSup => vdc_sup(sc),
        VdcSystems => vdc_systems(sc),
        HolderAverages => holder_averages(sc),
        Maximal => maximal(sc),
        Bourgain => bourgain(sc),
        ReverseBourgain => reverse_bourgain(sc),
        Sublinearity => sublinearity(sc),
        OffdiagControl => offdiag_control(sc),
        OffdiagPermute => offdiag_permute(sc),
        CondExp => cond_exp(sc),
        WeakStrong => weak_strong(sc),
        SpectralWeak => spectral_weak(sc),
        WeakProduct => weak_product(sc),
        StrongProduct => strong_product(sc),
        AltUpper => alt_upper(sc),
        AltBb => alt_bb(sc),
        Shrinking => shrinking(sc),
        PolyWw => poly_ww(sc),
        IntermediateFPtwise => intermediate_ptwise(sc),
        IntermediateFIntegral => intermediate_integral(sc),
        GeneralRbb => general_rbb(sc),
        HilbertCauchy => hilbert_cauchy(sc),
    }
}

fn h_values(sc: &Scenario, max: usize) -> Vec<usize> {
    match sc.h {
        Some(h) => vec![h],
        None => (1..=max).collect(),
    }
}

fn vdc(sc: &Scenario) -> Result<InequalityCheck> {
    let mut rows = Vec::new();
    for v in sc.sequences()? {
        for h in h_values(sc, v.len()) {
            let (lhs, rhs) = inequalities::vdc(v, h)?;
            rows.push(CheckRow::new(v.len(), 0, Some(h), lhs, rhs, 1e-9));
        }
    }
    InequalityCheck::finish(CheckName::Vdc, RAW, None, rows)
}

fn vdc_sup(sc: &Scenario) -> Result<InequalityCheck> {
    let mut rows = Vec::new();
    // A single term admits no H in 1..=N-1.
    for u in sc.sequences()?.iter().filter(|u| u.len() >= 2) {
        let (lhs, all) = inequalities::vdc_sup_all(u, sc.options.oversample)?;
        for (h, rhs) in all {
            if sc.h.is_none_or(|only| only == h) {
                rows.push(CheckRow::new(u.len(), 0, Some(h), lhs.upper, rhs, 1e-9).widths(&[&lhs]));
            }
        }
    }
    InequalityCheck::finish(CheckName::VdcSup, "lhs upper, rhs exact", None, rows)
}

fn vdc_systems(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    let mut rows = Vec::new();
    for f in &sc.functions {
        for n in sc.ns()? {
            let (lhs, rhs) = inequalities::vdc_systems(sys, f, n)?;
            rows.push(CheckRow::new(n, 0, None, lhs, rhs, 1e-10));
        }
    }
    if sc.functions.is_empty() {
        return Err(arity("at least 1 function"));
    }
    InequalityCheck::finish(CheckName::VdcSystems, RAW, None, rows)
}

fn holder_averages(sc: &Scenario) -> Result<InequalityCheck> {
    let mut ps = sc.p_exponents.clone();
    ps.sort_by(f64::total_cmp);
    if ps.len() < 2 {
        return Err(arity("at least two exponents p"));
    }
    let mut rows = Vec::new();
    for v in sc.sequences()? {
        let a: Vec<f64> = v.iter().map(|z| crate::math::abs(*z)).collect();
        for (i, pair) in ps.windows(2).enumerate() {
            let lhs = inequalities::power_mean(&a, pair[0])?;
            let rhs = inequalities::power_mean(&a, pair[1])?;
            rows.push(CheckRow::new(a.len(), i as u32, None, lhs, rhs, 1e-9));
        }
    }
    InequalityCheck::finish(CheckName::HolderAverages, RAW, None, rows)
}

fn maximal(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    if sc.functions.is_empty() {
        return Err(arity("at least 1 function"));
    }
    let ps: Vec<f64> = sc.p_exponents.iter().copied().filter(|&p| p > 1.0).collect();
    if ps.is_empty() {
        return Err(arity("an exponent p > 1"));
    }
    let mut rows = Vec::new();
    for f in &sc.functions {
        for n in sc.ns()? {
            for (i, &p) in ps.iter().enumerate() {
                let (lhs, rhs) = inequalities::maximal(sys, f, p, n)?;
                rows.push(CheckRow::new(n, i as u32, None, lhs, rhs, 1e-9));
            }
        }
    }
    InequalityCheck::finish(CheckName::Maximal, RAW, None, rows)
}

fn bourgain(sc: &Scenario) -> Result<InequalityCheck> {
    let f = sc.function(0)?;
    let k = sc.k;
    let rows = per_n(sc, |n| {
        let lhs = sc.m_lower(f, k, n)?;
        let w = sc.w(f, k, n)?.lower;
        let rhs = inv_pow(n, 1.0 / two_pow(k as i32)) + pow(w, 1.0 / two_pow(k as i32 - 1));
        Ok((lhs, rhs))
    })?;
    InequalityCheck::finish(
        CheckName::Bourgain,
        "lhs uses the optimisation lower bound of M, rhs lower",
        None,
        rows,
    )
}

fn reverse_bourgain(sc: &Scenario) -> Result<InequalityCheck> {
    let f = sc.function(0)?;
    let k = sc.k;
    if sc.improved && k != 1 {
        return Err(Error::InvalidParameter(String::from("the improved form needs k = 1")));
    }
    let rows = per_n(sc, |n| {
        let lhs = sc.w(f, k, n)?.upper;
        let rhs = if sc.improved {
            inv_pow(n, 1.0 / 6.0) + pow(sc.m_lower(f, 1, root(n))?, 1.0 / 6.0)
        } else {
            inv_pow(n, 1.0 / 24.0) + pow(sc.m_lower(f, k, quarter(n))?, 1.0 / 6.0)
        };
        Ok((lhs, rhs))
    })?;
    let (policy, label) = match sc.mrec {
        MrecStrategy::BruteForce => ("lhs upper, rhs exact M over real signs", None),
        _ => (
            "lhs upper, rhs uses the optimisation lower bound of M",
            Some(String::from("lower-bound RHS; fitted constant may be inflated")),
        ),
    };
    InequalityCheck::finish(CheckName::ReverseBourgain, policy, label, rows)
}

fn sublinearity(sc: &Scenario) -> Result<InequalityCheck> {
    let (f1, f2) = (sc.function(0)?, sc.function(1)?);
    let sum = f1.add(f2)?;
    let k = sc.k;
    let outer = 1.0 / (3.0 * two_pow(k as i32 + 3));
    let inner = 1.0 / (3.0 * two_pow(k as i32));
    let rows = per_n(sc, |n| {
        let lhs = sc.w(&sum, k, n)?.upper;
        let q = quarter(n);
        let rhs = inv_pow(n, outer) + pow(sc.w(f1, k, q)?.lower, inner) + pow(sc.w(f2, k, q)?.lower, inner);
        Ok((lhs, rhs))
    })?;
    InequalityCheck::finish(CheckName::Sublinearity, CONSERVATIVE, None, rows)
}

fn assignment(sc: &Scenario) -> Result<(CubeAssignment, CubeVertex)> {
    let k = sc.k;
    if k < 2 {
        return Err(Error::InvalidParameter(String::from("off-diagonal checks need k >= 2")));
    }
    let dim = k - 1;
    let count = 1usize << dim;
    if sc.functions.len() < count {
        return Err(Error::Arity(format!("{count} functions for the cube of order {k}")));
    }
    let assign = CubeAssignment::new(k, sc.functions[..count].to_vec())?;
    let zeta = match sc.zeta {
        Some(z) => z,
        None => CubeVertex::new((1u32 << dim) - 1, dim)?,
    };
    Ok((assign, zeta))
}

fn offdiag_control(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    let (assign, zeta) = assignment(sc)?;
    let k = sc.k;
    let g = assign.get(zeta).clone();
    let outer = 1.0 / (3.0 * two_pow(k as i32 + 3));
    let inner = 1.0 / (3.0 * two_pow(k as i32));
    let rows = per_n(sc, |n| {
        let lhs = off_diagonal_average(sys, &assign, n, &sc.options)?.upper;
        let rhs = inv_pow(n, outer) + pow(sc.w(&g, k, quarter(n))?.lower, inner);
        Ok((lhs, rhs))
    })?;
    InequalityCheck::finish(CheckName::OffdiagControl, CONSERVATIVE, None, rows)
}

fn offdiag_permute(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    let (assign, zeta) = assignment(sc)?;
    let ns = sc.ns()?;
    let rows = try_map_indexed(ns.len(), |i| -> Result<CheckRow> {
        let n = ns[i];
        let original = off_diagonal_average(sys, &assign, n, &sc.options)?;
        let moved = assign.reflected(sys, zeta, root(n))?;
        let reflected = off_diagonal_average(sys, &moved, n, &sc.options)?;
        let scale = original.lower.abs().max(1.0);
        let lhs = (original.lower - reflected.lower).abs();
        Ok(CheckRow::new(n, 0, None, lhs, 0.0, 1e-9 * scale))
    })?;
    InequalityCheck::finish(
        CheckName::OffdiagPermute,
        "lower endpoints of the same grid on both sides",
        None,
        rows,
    )
}

fn cond_exp(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    let f = sc.function(0)?;
    let partition = sc.partition.as_ref().ok_or_else(|| arity("an invariant partition"))?;
    let conditioned = conditional_expectation(sys, f, partition)?;
    let k = sc.k;
    let outer = 1.0 / (3.0 * two_pow(k as i32 + 1));
    let inner = 1.0 / (3.0 * two_pow(k as i32));
    let rows = per_n(sc, |n| {
        let lhs = sc.w(&conditioned, k, n)?.upper;
        let rhs = inv_pow(n, outer) + pow(sc.w(f, k, quarter(n))?.lower, inner);
        Ok((lhs, rhs))
    })?;
    InequalityCheck::finish(CheckName::CondExp, CONSERVATIVE, None, rows)
}

/// Part 0 is `w_N^k <= W_N^k` with the combined bracket width as
/// tolerance. Part 1 is the explicit bound
/// `W_N^k <= 2^{1/3} N^{-1/6} + 2^{5/6} (w_N^{k+1})^{1/8}` for `|f| <= 1`,
/// with no tolerance.
fn weak_strong(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    let f = sc.function(0)?;
    if f.sup_norm() > 1.0 + 1e-12 {
        return Err(Error::InvalidObservable(String::from(
            "the explicit weak bound needs a function bounded by 1",
        )));
    }
    let k = sc.k;
    let ns = sc.ns()?;
    let pairs = try_map_indexed(ns.len(), |i| -> Result<[CheckRow; 2]> {
        let n = ns[i];
        let weak = weak_ww_average(sys, f, k, n, &sc.options)?;
        let strong = sc.w(f, k, n)?;
        let order = weak_ww_average(sys, f, k + 1, n, &sc.options)?;
        let explicit = pow(2.0, 1.0 / 3.0) * inv_pow(n, 1.0 / 6.0) + pow(2.0, 5.0 / 6.0) * pow(order.lower, 0.125);
        Ok([
            CheckRow::new(n, 0, None, weak.upper, strong.lower, weak.width() + strong.width())
                .widths(&[&weak, &strong]),
            CheckRow::new(n, 1, None, strong.upper, explicit, 0.0).widths(&[&strong, &order]),
        ])
    })?;
    let rows = pairs.into_iter().flatten().collect();
    InequalityCheck::finish(CheckName::WeakStrong, CONSERVATIVE, None, rows)
}

fn spectral_weak(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    let f = sc.function(0)?;
    let energy = pow(lp_norm(sys, f, 2.0)?, 2.0);
    if energy == 0.0 {
        return Err(Error::InvalidObservable(String::from("f vanishes")));
    }
    let ns = sc.ns()?;
    let rows = try_map_indexed(ns.len(), |i| -> Result<CheckRow> {
        let n = ns[i];
        let mut acc = Neumaier::new();
        for m in 0..n {
            acc.add(spectral_coefficient(sys, f, m as i64)?.norm_sqr());
        }
        let lhs = acc.value() / (n as f64 * energy);
        let rhs = weak_sup_bracket(sys, f.values(), n, sc.options.oversample)?.lower;
        Ok(CheckRow::new(n, 0, None, lhs, rhs, 1e-12))
    })?;
    InequalityCheck::finish(CheckName::SpectralWeak, "lhs exact, rhs lower", None, rows)
}

/// `X x Y` with product weights.
pub fn product_system(a: &FiniteSystem, b: &FiniteSystem) -> Result<FiniteSystem> {
    let spec = SystemSpec::Product {
        a: alloc::boxed::Box::new(a.spec().clone()),
        b: alloc::boxed::Box::new(b.spec().clone()),
    };
    let mut weights = Vec::with_capacity(a.size() * b.size());
    for i in 0..a.size() {
        for j in 0..b.size() {
            weights.push(a.weight(i) * b.weight(j));
        }
    }
    FiniteSystem::with_weights(&spec, weights)
}

fn weak_product(sc: &Scenario) -> Result<InequalityCheck> {
    let (a, b) = (sc.sys()?, sc.second_sys()?);
    let (f, g) = (sc.function(0)?, sc.second_function(0)?);
    let prod = product_system(a, b)?;
    let fg = tensor(f, g);
    let k = sc.k;
    let ns = sc.ns()?;
    let rows = try_map_indexed(ns.len(), |i| -> Result<CheckRow> {
        let n = ns[i];
        let joint = weak_ww_average(&prod, &fg, k, n, &sc.options)?;
        let wf = weak_ww_average(a, f, k, n, &sc.options)?;
        let wg = weak_ww_average(b, g, k, n, &sc.options)?;
        let smaller = if wf.lower <= wg.lower { wf } else { wg };
        Ok(
            CheckRow::new(n, 0, None, joint.upper, smaller.lower, joint.width() + smaller.width())
                .widths(&[&joint, &smaller]),
        )
    })?;
    InequalityCheck::finish(CheckName::WeakProduct, CONSERVATIVE, None, rows)
}

fn strong_product(sc: &Scenario) -> Result<InequalityCheck> {
    let (a, b) = (sc.sys()?, sc.second_sys()?);
    let (f, g) = (sc.function(0)?, sc.second_function(0)?);
    let prod = product_system(a, b)?;
    let fg = tensor(f, g);
    let k = sc.k;
    let rows = per_n(sc, |n| {
        let lhs = ww_average(&prod, &fg, k, n, &sc.options)?.upper;
        let wf = ww_average(a, f, k + 1, n, &sc.options)?.lower;
        let wg = ww_average(b, g, k + 1, n, &sc.options)?.lower;
        Ok((lhs, inv_pow(n, 1.0 / 6.0) + pow(wf.min(wg), 0.125)))
    })?;
    InequalityCheck::finish(CheckName::StrongProduct, CONSERVATIVE, None, rows)
}

fn schedules(sc: &Scenario) -> Result<&[ScheduleR]> {
    if sc.k > 1 && sc.schedules.is_empty() {
        return Err(arity("range schedules r_m"));
    }
    Ok(&sc.schedules)
}

/// `floor(min(r_1(N), .., r_{k-1}(N), N)^{1/2})`.
fn alt_radius(sc: &Scenario, n: usize) -> Result<usize> {
    let ranges = if sc.k > 1 {
        schedule_ranges(schedules(sc)?, sc.k, n)?
    } else {
        Vec::new()
    };
    let m = ranges.into_iter().fold(n, usize::min);
    Ok(root(m))
}

fn alt_upper(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    let f = sc.function(0)?;
    let k = sc.k;
    let sched = schedules(sc)?;
    let outer = 1.0 / (3.0 * two_pow(k as i32 + 1));
    let inner = 1.0 / (3.0 * two_pow(k as i32));
    let rows = per_n(sc, |n| {
        let lhs = ww_average_alt(sys, f, k, n, sched, &sc.options)?.upper;
        let r = alt_radius(sc, n)?;
        if r == 0 {
            return Err(Error::InvalidParameter(format!("R(N) = 0 at N = {n}")));
        }
        Ok((lhs, inv_pow(r, outer) + pow(sc.w(f, k, r)?.lower, inner)))
    })?;
    InequalityCheck::finish(CheckName::AltUpper, CONSERVATIVE, None, rows)
}

fn check_beta(beta: u32) -> Result<()> {
    if beta < 1 {
        return Err(Error::InvalidParameter(String::from("beta must be a positive integer")));
    }
    Ok(())
}

fn alt_bb(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    let f = sc.function(0)?;
    let k = sc.k;
    let beta = sc.beta;
    check_beta(beta)?;
    let sched = schedules(sc)?;
    let power = 1.0 / two_pow(k as i32 - 1);
    let decay = 1.0 / (3.0 * beta as f64 * two_pow(k as i32 - 2));
    let rows = per_n(sc, |n| {
        let lhs = sc.m_lower(f, k, n)?;
        let nb = iroot(n as u64, beta) as usize;
        let mut rhs = Neumaier::new();
        if k > 1 {
            for r in schedule_ranges(sched, k, nb)? {
                let r = r as f64;
                rhs.add(pow(1.0 / r + r / n as f64, power));
            }
        }
        rhs.add(inv_pow(n, decay));
        rhs.add(pow(ww_average_alt(sys, f, k, nb, sched, &sc.options)?.lower, power));
        Ok((lhs, rhs.value()))
    })?;
    InequalityCheck::finish(
        CheckName::AltBb,
        "lhs uses the optimisation lower bound of M, rhs lower",
        None,
        rows,
    )
}

fn shrinking(sc: &Scenario) -> Result<InequalityCheck> {
    let f = sc.function(0)?;
    let beta = sc.beta;
    if beta < 2 {
        return Err(Error::InvalidParameter(String::from("shrinking needs an integer beta >= 2")));
    }
    let ns = sc.ns()?;
    let rows = try_map_indexed(ns.len(), |i| -> Result<CheckRow> {
        let n = ns[i];
        let lhs = sc.w(f, 1, n)?.upper;
        let small = iroot(n as u64, beta) as usize;
        let remainder = pow(beta as f64 / pow(n as f64, 1.0 / beta as f64), 2.0 / 3.0);
        Ok(CheckRow::new(n, 0, None, lhs, sc.w(f, 1, small)?.lower + remainder, 0.0))
    })?;
    InequalityCheck::finish(CheckName::Shrinking, CONSERVATIVE, None, rows)
}

fn poly_ww(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    if sc.functions.is_empty() {
        return Err(arity("at least 1 function"));
    }
    let j = sc.functions.len();
    let a = Scenario::exponents_or_default(&sc.exponents, j);
    let deg = sc.degree;
    if deg == 0 {
        return Err(Error::InvalidParameter(String::from("degree must be positive")));
    }
    let level = deg + j - 1;
    let power = 1.0 / two_pow(level as i32 - 1);
    let rows = per_n(sc, |n| {
        let lhs = polyphase_mrec_sup(sys, &sc.functions, &a, deg, n, sc.options.oversample)?.upper;
        let w = sc.w(&sc.functions[0], level, n)?.lower;
        Ok((lhs, pow(root(n) as f64, -power) + pow(w, power)))
    })?;
    InequalityCheck::finish(CheckName::PolyWw, CONSERVATIVE, None, rows)
}

fn intermediate_ptwise(sc: &Scenario) -> Result<InequalityCheck> {
    let (sx, sy) = (sc.sys()?, sc.second_sys()?);
    if sc.functions.is_empty() || sc.second_functions.is_empty() {
        return Err(arity("functions on both systems"));
    }
    let a = Scenario::exponents_or_default(&sc.exponents, sc.functions.len());
    let b = Scenario::exponents_or_default(&sc.weight_exponents, sc.second_functions.len());
    let cube = sc.second_functions.len();
    let rows = per_n(sc, |n| {
        let avg = multilinear_return_times_average(sx, sc.point, &sc.functions, &a, sy, &sc.second_functions, &b, n)?;
        let lhs = lp_norm(sy, &avg, 2.0)?;
        let rhs = intermediate_f(sx, sc.point, &sc.functions, &a, cube, n, sc.options.oversample)?.lower;
        Ok((lhs, rhs))
    })?;
    InequalityCheck::finish(CheckName::IntermediateFPtwise, "lhs exact, rhs lower", None, rows)
}

fn intermediate_integral(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    if sc.functions.is_empty() {
        return Err(arity("at least 1 function"));
    }
    let j = sc.functions.len();
    let a = Scenario::exponents_or_default(&sc.exponents, j);
    let cube = sc.cube_k;
    let level = j + cube - 1;
    let power = 1.0 / two_pow(level as i32 - 1);
    let rows = per_n(sc, |n| {
        let mut lhs = Neumaier::new();
        for x in 0..sys.size() {
            let fx = intermediate_f(sys, x, &sc.functions, &a, cube, n, sc.options.oversample)?;
            lhs.add(sys.weight(x) * fx.upper);
        }
        let w = sc.w(&sc.functions[0], level, n)?.lower;
        Ok((lhs.value(), pow(root(n) as f64, -power) + pow(w, power)))
    })?;
    InequalityCheck::finish(CheckName::IntermediateFIntegral, CONSERVATIVE, None, rows)
}

/// `H_1..H_k`: one schedule per coordinate, or `floor(sqrt N)` for the
/// first `k - 1` and `floor(N^{1/4})` for the last.
fn rbb_ranges(sc: &Scenario, n: usize) -> Result<Vec<usize>> {
    let k = sc.k;
    if sc.schedules.len() == k {
        return sc.schedules.iter().map(|s| s.eval(n as u64)).collect();
    }
    if !sc.schedules.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: k,
            found: sc.schedules.len(),
        });
    }
    let mut h = vec![root(n); k - 1];
    h.push(quarter(n).max(1));
    Ok(h)
}

fn general_rbb(sc: &Scenario) -> Result<InequalityCheck> {
    let sys = sc.sys()?;
    let f = sc.function(0)?;
    let k = sc.k;
    let assign = CubeAssignment::constant(k, f)?;
    let g1 = assign.get(CubeVertex::new((1u32 << (k - 1)) - 1, k - 1)?).clone();
    let opts = WwOptions {
        norm: PointNorm::L1,
        ..sc.options
    };
    let rows = per_n(sc, |n| {
        let h = rbb_ranges(sc, n)?;
        let lhs = box_average(sys, &assign, &h[..k - 1], n, &opts)?.upper;
        let mut sorted = h.clone();
        sorted.sort_unstable();
        let h1 = sorted[0];
        let h2 = if sorted.len() > 1 { sorted[1] } else { sorted[0] };
        let hk = h[k - 1];
        let mut partial = Neumaier::new();
        for p in 1..=h1 {
            partial.add(sc.m_lower(&g1, k, p)?);
        }
        let m_top = sc.m_lower(&g1, k, h1)?;
        let rhs = inv_pow(hk, 1.0 / 3.0)
            + pow(h1 as f64 / n as f64, 1.0 / 6.0)
            + pow(partial.value() / h2 as f64, 1.0 / 6.0)
            + pow((h2 - h1 + 1) as f64 / h2 as f64, 1.0 / 6.0) * pow(m_top, 1.0 / 6.0);
        Ok((lhs, rhs))
    })?;
    InequalityCheck::finish(
        CheckName::GeneralRbb,
        "lhs upper, rhs uses the optimisation lower bound of M",
        Some(String::from("lower-bound RHS; fitted constant may be inflated")),
        rows,
    )
}

fn hilbert_cauchy(sc: &Scenario) -> Result<InequalityCheck> {
    let ns = sc.ns()?;
    let mut rows = Vec::new();
    for a in sc.sequences()? {
        let m = a.len();
        for &n in ns.iter().filter(|&&n| n < m) {
            let (lhs, rhs) = inequalities::hilbert_cauchy(a, sc.sigma, n, m)?;
            rows.push(CheckRow::new(n, 0, Some(m), lhs, rhs, 1e-9));
        }
    }
    InequalityCheck::finish(CheckName::HilbertCauchy, RAW, None, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::e;

    fn cyclic(p: usize) -> FiniteSystem {
        FiniteSystem::build(&SystemSpec::CyclicShift { p }).unwrap()
    }

    fn character(p: usize, j: usize) -> Observable {
        Observable::new((0..p).map(|x| e((j * x) as f64 / p as f64)).collect()).unwrap()
    }

    fn ones(n: usize) -> Observable {
        Observable::constant(n, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn names_round_trip() {
        assert_eq!(CheckName::ALL.len(), 23);
        for &name in CheckName::ALL {
            assert_eq!(name.as_str().parse::<CheckName>().unwrap(), name);
        }
        assert!(matches!("nope".parse::<CheckName>(), Err(Error::UnknownCheck(_))));
    }

    #[test]
    fn vdc_example_row() {
        let sc = Scenario {
            sequences: vec![vec![Complex64::new(1.0, 0.0); 4]],
            h: Some(1),
            ..Scenario::default()
        };
        let c = run_named_check(CheckName::Vdc, &sc).unwrap();
        assert_eq!(c.rows.len(), 1);
        assert_eq!(c.rows[0].lhs, 1.0);
        assert!((c.rows[0].slack - 0.09375).abs() < 1e-15);
        assert!(c.verdict && !c.fitted);
    }

    #[test]
    fn missing_inputs_are_arity_errors() {
        let sc = Scenario::default();
        for &name in CheckName::ALL {
            assert!(matches!(run_named_check(name, &sc), Err(Error::Arity(_))), "{name}");
        }
    }

    #[test]
    fn reverse_bourgain_on_constants() {
        let sc = Scenario {
            system: Some(FiniteSystem::build(&SystemSpec::Identity { size: 3 }).unwrap()),
            functions: vec![ones(3)],
            n_values: vec![16, 64, 256],
            ..Scenario::default()
        };
        let c = run_named_check(CheckName::ReverseBourgain, &sc).unwrap();
        for row in &c.rows {
            assert!(row.c_n <= 1.0 + 1e-12, "{row:?}");
        }
        assert!(c.label.is_some());
    }

    #[test]
    fn weak_product_with_unit_factor_is_tight() {
        let sc = Scenario {
            system: Some(cyclic(5)),
            functions: vec![character(5, 2)],
            second_system: Some(cyclic(7)),
            second_functions: vec![ones(7)],
            n_values: vec![8, 16, 32],
            ..Scenario::default()
        };
        let c = run_named_check(CheckName::WeakProduct, &sc).unwrap();
        assert!(c.verdict);
        for row in &c.rows {
            assert!(row.slack.abs() <= row.tolerance + 1e-12, "{row:?}");
        }
    }

    #[test]
    fn offdiag_permutation_is_an_identity() {
        let p = 11;
        let fs: Vec<Observable> = (1..=4).map(|j| character(p, j)).collect();
        for bits in 0..4 {
            let sc = Scenario {
                system: Some(cyclic(p)),
                functions: fs.clone(),
                k: 3,
                zeta: Some(CubeVertex::new(bits, 2).unwrap()),
                n_values: vec![9, 16],
                ..Scenario::default()
            };
            let c = run_named_check(CheckName::OffdiagPermute, &sc).unwrap();
            assert!(c.verdict, "{c:?}");
        }
    }

    #[test]
    fn weak_strong_on_a_character() {
        let sc = Scenario {
            system: Some(cyclic(13)),
            functions: vec![character(13, 3)],
            n_values: vec![16, 25, 64],
            ..Scenario::default()
        };
        let c = run_named_check(CheckName::WeakStrong, &sc).unwrap();
        assert_eq!(c.rows.len(), 6);
        assert!(c.rows.iter().filter(|r| r.part == 0).all(CheckRow::holds));
    }

    #[test]
    fn stability_requires_the_first_row_to_peak() {
        let rows = vec![
            CheckRow::new(16, 0, None, 2.0, 1.0, 0.0),
            CheckRow::new(32, 0, None, 1.0, 1.0, 0.0),
        ];
        let c = InequalityCheck::finish(CheckName::Bourgain, CONSERVATIVE, None, rows).unwrap();
        assert!(c.stable && c.verdict && c.c_max == 2.0);
        let rows = vec![
            CheckRow::new(16, 0, None, 1.0, 1.0, 0.0),
            CheckRow::new(32, 0, None, 2.0, 1.0, 0.0),
        ];
        let c = InequalityCheck::finish(CheckName::Bourgain, CONSERVATIVE, None, rows).unwrap();
        assert!(!c.stable && !c.verdict);
    }

    #[test]
    fn c_n_conventions() {
        assert_eq!(CheckRow::new(1, 0, None, 0.0, 0.0, 0.0).c_n, 0.0);
        assert!(CheckRow::new(1, 0, None, 1.0, 0.0, 0.0).c_n.is_infinite());
    }

    #[test]
    fn hilbert_cauchy_rows_hold() {
        let seq: Vec<Complex64> = (1..=64).map(|n| e(n as f64 * 0.618)).collect();
        let sc = Scenario {
            sequences: vec![seq],
            n_values: vec![1, 8, 32],
            sigma: 0.9,
            ..Scenario::default()
        };
        assert!(run_named_check(CheckName::HilbertCauchy, &sc).unwrap().verdict);
    }
}
