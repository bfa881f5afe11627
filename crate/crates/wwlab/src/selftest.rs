//! The acceptance suite: thirteen criteria, each reported as a set of named
//! parts plus the summary values that the determinism criterion compares
//! bit for bit.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wwlab_core::analysis::{
    decay_fit, hilbert_criterion, hilbert_partial_sums, partial_sums_of, product_system, run_named_check, CheckName,
    HilbertWeight, InequalityCheck, Scenario, SeriesReport,
};
use wwlab_core::box_lattice::{
    first_difference_identity, interchange_check, second_difference_identity, sweep, BoxFamily,
};
use wwlab_core::finite_dynamics::{ghk_seminorm, tensor, FiniteSystem, Observable, Partition, SystemSpec};
use wwlab_core::math::e;
use wwlab_core::recurrence::MrecStrategy;
use wwlab_core::trig_sup::{sup_modulated_average, sup_norm_trig, sup_polyphase, PolySup, DEFAULT_POLY_COST};
use wwlab_core::ww_core::{ww_average, ww_average_alt, ScheduleR, WwOptions};
use wwlab_core::Complex64;

use crate::config::mean_zero;
use crate::error::{LabError, LabResult};

/// Sub-parts that are known to fail; see the project notes.
pub const KNOWN_RED: &[(u32, &str)] = &[(11, "cond_exp")];

#[derive(Debug, Clone)]
pub struct Part {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub parts: Vec<Part>,
    /// Deterministic summary values.
    pub values: Vec<f64>,
    pub seconds: f64,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.parts.iter().all(|p| p.pass)
    }

    /// Parts that failed and are not listed in [`KNOWN_RED`].
    pub fn unexpected_failures(&self) -> Vec<&Part> {
        self.parts
            .iter()
            .filter(|p| !p.pass && !KNOWN_RED.contains(&(self.id, p.name.as_str())))
            .collect()
    }

    /// One line: id, verdict, title and the part summaries.
    pub fn line(&self) -> String {
        let parts: Vec<String> = self
            .parts
            .iter()
            .map(|p| format!("{}{}: {}", if p.pass { "" } else { "FAILED " }, p.name, p.detail))
            .collect();
        format!(
            "criterion {:>2} {} {} [{:.1} s] {}",
            self.id,
            if self.pass() { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            parts.join("; ")
        )
    }
}

struct Builder {
    parts: Vec<Part>,
    values: Vec<f64>,
}

impl Builder {
    fn new() -> Self {
        Self {
            parts: Vec::new(),
            values: Vec::new(),
        }
    }

    fn part(&mut self, name: &str, pass: bool, detail: String) {
        self.parts.push(Part {
            name: name.to_owned(),
            pass,
            detail,
        });
    }

    fn values(&mut self, v: impl IntoIterator<Item = f64>) {
        self.values.extend(v);
    }

    fn check(&mut self, c: &InequalityCheck) {
        self.values
            .extend(c.rows.iter().flat_map(|r| [r.lhs, r.rhs, r.slack, r.c_n]));
    }

    fn finish(self, id: u32, title: &'static str, start: Instant) -> Outcome {
        Outcome {
            id,
            title,
            parts: self.parts,
            values: self.values,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_complex(r: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)))
        .collect()
}

fn system(spec: SystemSpec) -> LabResult<FiniteSystem> {
    Ok(FiniteSystem::build(&spec)?)
}

fn cyclic(p: usize) -> LabResult<FiniteSystem> {
    system(SystemSpec::CyclicShift { p })
}

fn worst(c: &InequalityCheck) -> f64 {
    c.worst_slack()
}

pub const TITLES: [&str; 13] = [
    "level counts match brute force",
    "level partition identities",
    "cancellation identities",
    "sum interchange identity",
    "van der Corput inequalities",
    "power means and maximal inequality",
    "supremum bracket soundness",
    "weak, strong and product bounds",
    "Gowers-Host-Kra Fourier oracle",
    "decay window",
    "fitted-constant stability",
    "Hilbert transform suite",
    "determinism across runs and thread counts",
];

/// Runs criterion `id` in `1..=12`.
pub fn criterion(id: u32) -> LabResult<Outcome> {
    match id {
        1 => c1(),
        2 => c2(),
        3 => c3(),
        4 => c4(),
        5 => c5(),
        6 => c6(),
        7 => c7(),
        8 => c8(),
        9 => c9(),
        10 => c10(),
        11 => c11(),
        12 => c12(),
        _ => Err(LabError::config(format!("criterion {id} is not in 1..=12"))),
    }
}

fn c1() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let rows = sweep(3, 5, 15)?;
    let seconds = start.elapsed().as_secs_f64();
    let mismatches = rows.iter().filter(|r| r.exact != r.brute).count();
    b.part(
        "exact_vs_brute",
        mismatches == 0,
        format!("{} rows, {mismatches} mismatches", rows.len()),
    );
    b.part("runtime", seconds < 10.0, format!("{seconds:.2} s, limit 10 s"));
    b.values([rows.len() as f64, rows.iter().map(|r| r.exact as f64).sum()]);
    Ok(b.finish(1, TITLES[0], start))
}

fn c2() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let mut by_family: BTreeMap<(Vec<i64>, i64), Vec<(i64, i128)>> = BTreeMap::new();
    for r in sweep(3, 5, 15)? {
        by_family.entry((r.sides.clone(), r.q)).or_default().push((r.p, r.exact));
    }
    let (mut bad_count, mut bad_weight) = (0usize, 0usize);
    for ((sides, q), levels) in &by_family {
        let fam = BoxFamily::new(sides.clone(), *q)?;
        let mut union = 0i128;
        fam.for_each_point(|h| {
            if fam.residence_interval(h).is_some() {
                union += 1;
            }
        });
        let total: i128 = levels.iter().map(|&(_, c)| c).sum();
        let weighted: i128 = levels.iter().map(|&(p, c)| p as i128 * c).sum();
        if total != union {
            bad_count += 1;
        }
        if weighted != (*q as i128 + 1) * fam.volume() {
            bad_weight += 1;
        }
    }
    b.part(
        "count_sum",
        bad_count == 0,
        format!("{} families, {bad_count} violations", by_family.len()),
    );
    b.part("weighted_sum", bad_weight == 0, format!("{bad_weight} violations"));
    b.values([by_family.len() as f64]);
    Ok(b.finish(2, TITLES[1], start))
}

/// Relative error with the denominator floored at one, so that results
/// near zero are compared absolutely.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn c3() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let mut r = rng(3);
    let (mut first, mut second) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let k = r.gen_range(1..=8);
        let x: Vec<f64> = (0..k).map(|_| r.gen_range(-3.0..3.0)).collect();
        let (l, rr) = first_difference_identity(&x);
        first = first.max(rel_err(l, rr));
        let (l, rr) = second_difference_identity(&x);
        second = second.max(rel_err(l, rr));
    }
    b.part("first_difference", first <= 1e-9, format!("max rel err {first:.1e}"));
    b.part("second_difference", second <= 1e-9, format!("max rel err {second:.1e}"));
    b.values([first, second]);
    Ok(b.finish(3, TITLES[2], start))
}

fn c4() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let mut r = rng(4);
    let (mut families, mut failures) = (0usize, 0usize);
    let mut checksum = 0i64;
    for dim in 1..=3usize {
        let combos = 3usize.pow(dim as u32);
        for code in 0..combos {
            let sides: Vec<i64> = (0..dim).map(|i| (code / 3usize.pow(i as u32) % 3) as i64 + 1).collect();
            let h1 = *sides.iter().min().expect("nonempty");
            for q in h1 + 1..=6 {
                let fam = BoxFamily::new(sides.clone(), q)?;
                let region = fam.bounding_region();
                let mut strides = Vec::with_capacity(dim);
                let mut size = 1usize;
                for &(lo, hi) in &region {
                    strides.push(size);
                    size *= (hi - lo + 1) as usize;
                }
                families += 1;
                for _ in 0..100 {
                    let table: Vec<i64> = (0..(q as usize + 1) * size).map(|_| r.gen_range(-1000..=1000)).collect();
                    let (lhs, rhs) = interchange_check(&fam, |n, h| {
                        let idx: usize = h
                            .iter()
                            .zip(&region)
                            .zip(&strides)
                            .map(|((&v, &(lo, _)), &s)| (v - lo) as usize * s)
                            .sum();
                        table[n as usize * size + idx]
                    });
                    if lhs != rhs {
                        failures += 1;
                    }
                    checksum = checksum.wrapping_add(lhs);
                }
            }
        }
    }
    b.part(
        "interchange",
        failures == 0,
        format!("{families} families x 100 tables, {failures} mismatches"),
    );
    b.values([families as f64, checksum as f64]);
    Ok(b.finish(4, TITLES[3], start))
}

fn c5() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let mut r = rng(5);
    let sequences: Vec<Vec<Complex64>> = (0..10_000)
        .map(|_| {
            let n = r.gen_range(1..=64);
            random_complex(&mut r, n)
        })
        .collect();
    let sc = Scenario {
        sequences,
        ..Scenario::default()
    };
    let vdc = run_named_check(CheckName::Vdc, &sc)?;
    b.part("vdc", vdc.verdict, format!("{} rows, worst slack {:.2e}", vdc.rows.len(), worst(&vdc)));
    let vdc_sup = run_named_check(CheckName::VdcSup, &sc)?;
    b.part(
        "vdc_sup",
        vdc_sup.verdict,
        format!("{} rows, worst slack {:.2e}", vdc_sup.rows.len(), worst(&vdc_sup)),
    );
    b.values([worst(&vdc), worst(&vdc_sup)]);
    let mut systems_ok = true;
    let mut worst_sys = f64::INFINITY;
    let mut count = 0;
    for (i, p) in [5usize, 13, 31].into_iter().enumerate() {
        let functions = (0..if i == 0 { 334 } else { 333 })
            .map(|_| Observable::new(random_complex(&mut r, p)))
            .collect::<Result<Vec<_>, _>>()?;
        count += functions.len();
        let sc = Scenario {
            system: Some(cyclic(p)?),
            functions,
            n_values: vec![3, 8, 21, 64],
            ..Scenario::default()
        };
        let c = run_named_check(CheckName::VdcSystems, &sc)?;
        systems_ok &= c.verdict;
        worst_sys = worst_sys.min(worst(&c));
    }
    b.part(
        "vdc_systems",
        systems_ok,
        format!("{count} observables, worst slack {worst_sys:.2e}"),
    );
    b.values([worst_sys]);
    Ok(b.finish(5, TITLES[4], start))
}

fn c6() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let mut r = rng(6);
    let sequences: Vec<Vec<Complex64>> = (0..1000)
        .map(|_| {
            let n = r.gen_range(1..=64);
            random_complex(&mut r, n)
        })
        .collect();
    let holder = run_named_check(
        CheckName::HolderAverages,
        &Scenario {
            sequences,
            p_exponents: vec![0.5, 1.0, 2.0, 4.0],
            ..Scenario::default()
        },
    )?;
    b.part(
        "holder_averages",
        holder.verdict,
        format!("{} rows, worst slack {:.2e}", holder.rows.len(), worst(&holder)),
    );
    let mut maximal_ok = true;
    let mut worst_max = f64::INFINITY;
    for chunk in 0..10u64 {
        let spec = match chunk % 4 {
            0 => SystemSpec::CyclicShift { p: 13 },
            1 => SystemSpec::CyclicShift { p: 31 },
            2 => SystemSpec::RandomPermutation { size: 24, seed: chunk },
            _ => SystemSpec::SkewProduct { p: 5 },
        };
        let sys = system(spec)?;
        let functions = (0..100)
            .map(|_| {
                let v: Vec<f64> = (0..sys.size()).map(|_| r.gen_range(-1.0..1.0)).collect();
                Observable::from_real(&v)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let c = run_named_check(
            CheckName::Maximal,
            &Scenario {
                system: Some(sys),
                functions,
                n_values: vec![r.gen_range(1..=64)],
                p_exponents: vec![2.0],
                ..Scenario::default()
            },
        )?;
        maximal_ok &= c.verdict;
        worst_max = worst_max.min(worst(&c));
    }
    b.part("maximal", maximal_ok, format!("1000 fixtures, worst slack {worst_max:.2e}"));
    b.values([worst(&holder), worst_max]);
    Ok(b.finish(6, TITLES[5], start))
}

/// `e(m / k)` for `m` in `0..k`.
fn twiddles(k: usize) -> Vec<Complex64> {
    (0..k).map(|m| e(m as f64 / k as f64)).collect()
}

/// `max_m |(1/N) sum_n u_n e(m n / K)|` on the grid with `K = factor * N`.
fn reference_modulated(u: &[Complex64], factor: usize) -> f64 {
    let k = factor * u.len();
    let tw = twiddles(k);
    let mut best = 0.0f64;
    for m in 0..k {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, &v) in u.iter().enumerate() {
            acc += v * tw[(m * (i + 1)) % k];
        }
        best = best.max(acc.norm());
    }
    best / u.len() as f64
}

fn reference_quadratic(u: &[Complex64], factor: usize) -> f64 {
    let n = u.len();
    let (k1, k2) = (2 * factor * n, 2 * factor * n * n);
    let (tw1, tw2) = (twiddles(k1), twiddles(k2));
    let mut best = 0.0f64;
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for m2 in 0..k2 {
        for (i, slot) in v.iter_mut().enumerate() {
            let j = i + 1;
            *slot = u[i] * tw2[(m2 * j * j) % k2];
        }
        for m1 in 0..k1 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &x) in v.iter().enumerate() {
                acc += x * tw1[(m1 * (i + 1)) % k1];
            }
            best = best.max(acc.norm());
        }
    }
    best / n as f64
}

struct SupStats {
    outside: usize,
    max_width: f64,
}

impl SupStats {
    fn new() -> Self {
        Self {
            outside: 0,
            max_width: 0.0,
        }
    }

    fn add(&mut self, b: &wwlab_core::trig_sup::Bracket, reference: f64) {
        if !b.contains(reference, 1e-12 * reference.abs().max(1e-300)) {
            self.outside += 1;
        }
        self.max_width = self.max_width.max(b.relative_width());
    }

    fn pass(&self) -> bool {
        self.outside == 0 && self.max_width <= 0.01
    }

    fn detail(&self) -> String {
        format!("{} outside, max rel width {:.3}%", self.outside, 100.0 * self.max_width)
    }
}

fn c7() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let mut r = rng(7);
    let mut modulated = SupStats::new();
    let mut trig = SupStats::new();
    let mut poly = SupStats::new();
    for _ in 0..1000 {
        let n = r.gen_range(2..=64);
        let u = random_complex(&mut r, n);
        let br = sup_modulated_average(&u, 16)?;
        modulated.add(&br, reference_modulated(&u, 64));
        b.values([br.lower, br.upper]);
    }
    for _ in 0..1000 {
        let n = r.gen_range(2..=32);
        let v = random_complex(&mut r, n);
        let mut c = vec![Complex64::new(0.0, 0.0); 2 * n - 1];
        for d in -(n as i64 - 1)..=(n as i64 - 1) {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..n as i64 {
                if (0..n as i64).contains(&(j + d)) {
                    acc += v[(j + d) as usize] * v[j as usize].conj();
                }
            }
            c[(d + n as i64 - 1) as usize] = acc / n as f64;
        }
        let br = sup_norm_trig(&c, 16)?;
        trig.add(&br, direct_trig_max(&v, 64 * (2 * n - 1)));
        b.values([br.lower, br.upper]);
    }
    for _ in 0..1000 {
        let n = r.gen_range(2..=3);
        let u = random_complex(&mut r, n);
        let br = match sup_polyphase(&u, 2, 16, DEFAULT_POLY_COST)? {
            PolySup::Certified(br) => br,
            PolySup::LowerOnly { .. } => {
                return Err(LabError::config("quadratic polyphase supremum is always certified"));
            }
        };
        poly.add(&br, reference_quadratic(&u, 64));
        b.values([br.lower, br.upper]);
    }
    b.part("sup_modulated_average", modulated.pass(), modulated.detail());
    b.part("sup_norm_trig", trig.pass(), trig.detail());
    b.part("sup_polyphase_deg2", poly.pass(), poly.detail());
    Ok(b.finish(7, TITLES[6], start))
}

/// `max_m (1/n) |sum_l v_l e(l m / K)|^2` over a grid of `k` points.
fn direct_trig_max(v: &[Complex64], k: usize) -> f64 {
    let tw = twiddles(k);
    let mut best = f64::NEG_INFINITY;
    for m in 0..k {
        let mut acc = Complex64::new(0.0, 0.0);
        for (l, &x) in v.iter().enumerate() {
            acc += x * tw[(m * l) % k];
        }
        best = best.max(acc.norm_sqr());
    }
    best / v.len() as f64
}

fn c8() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let mut r = rng(8);
    let sizes = [5usize, 7, 11];
    let ns = [16usize, 32, 64, 128, 256];
    let (mut weak_le_strong, mut product_ok, mut explicit_ok) = (true, true, true);
    let (mut explicit_rows, mut worst_product) = (0usize, f64::INFINITY);
    for s in 0..100u64 {
        let p = sizes[r.gen_range(0..3)];
        let q = sizes[r.gen_range(0..3)];
        let k = r.gen_range(1..=2);
        let n = ns[r.gen_range(0..ns.len())];
        let (a, bsys) = (cyclic(p)?, cyclic(q)?);
        let f = mean_zero(p, 2 * s)?;
        let g = mean_zero(q, 2 * s + 1)?;
        let product = run_named_check(
            CheckName::WeakProduct,
            &Scenario {
                system: Some(a.clone()),
                second_system: Some(bsys.clone()),
                functions: vec![f.clone()],
                second_functions: vec![g.clone()],
                n_values: vec![n],
                k,
                ..Scenario::default()
            },
        )?;
        product_ok &= product.verdict;
        worst_product = worst_product.min(worst(&product));
        b.check(&product);
        let ws = run_named_check(
            CheckName::WeakStrong,
            &Scenario {
                system: Some(product_system(&a, &bsys)?),
                functions: vec![tensor(&f, &g)],
                n_values: vec![n],
                k,
                ..Scenario::default()
            },
        )?;
        for row in &ws.rows {
            match row.part {
                0 => weak_le_strong &= row.holds(),
                _ if row.rel_width < 0.01 => {
                    explicit_rows += 1;
                    explicit_ok &= row.holds();
                }
                _ => {}
            }
        }
        b.check(&ws);
    }
    b.part("weak_le_strong", weak_le_strong, "100 scenarios".into());
    b.part(
        "weak_product",
        product_ok,
        format!("worst slack {worst_product:.2e} against bracket widths"),
    );
    b.part(
        "weak_strong_explicit",
        explicit_ok && explicit_rows > 0,
        format!("{explicit_rows} rows with bracket width < 1%"),
    );
    Ok(b.finish(8, TITLES[7], start))
}

fn c9() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let mut r = rng(9);
    let mut max_err = 0.0f64;
    for p in [5usize, 13, 31] {
        let sys = cyclic(p)?;
        for _ in 0..100 {
            let f = Observable::new(random_complex(&mut r, p))?;
            let got = ghk_seminorm(&sys, &f, 2, p)?;
            let mut fourth = 0.0;
            for j in 0..p {
                let mut acc = Complex64::new(0.0, 0.0);
                for x in 0..p {
                    acc += f.get(x) * e(-(((j * x) % p) as f64) / p as f64);
                }
                fourth += (acc / p as f64).norm_sqr().powi(2);
            }
            let want = f64::powf(fourth, 0.25);
            max_err = max_err.max((got - want).abs());
            b.values([got]);
        }
    }
    b.part("fourier_identity", max_err <= 1e-8, format!("300 functions, max error {max_err:.1e}"));
    Ok(b.finish(9, TITLES[8], start))
}

fn c10() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let sys = cyclic(521)?;
    let f = mean_zero(521, 10)?;
    let opts = WwOptions::default();
    let ns = [16usize, 24, 32, 48, 64, 96, 128];
    let mut classic1 = Vec::new();
    let mut worst_ratio = 1.0f64;
    for &n in &ns {
        classic1.push((n as u64, ww_average(&sys, &f, 1, n, &opts)?));
        let alt = ww_average_alt(&sys, &f, 2, n, &[ScheduleR::Linear], &opts)?;
        let classic = ww_average(&sys, &f, 2, n, &opts)?;
        let ratio = (alt.upper / classic.lower).max(classic.upper / alt.lower);
        worst_ratio = worst_ratio.max(ratio);
        b.values([alt.lower, alt.upper, classic.lower, classic.upper]);
    }
    let report = SeriesReport::from_brackets("W", classic1)?;
    let fit = decay_fit(&report, (16, 128))?;
    let seconds = start.elapsed().as_secs_f64();
    b.part(
        "decay_exponent",
        fit.alpha_hat >= 0.15,
        format!("alpha = {:.3}, r^2 = {:.4}", fit.alpha_hat, fit.r_squared),
    );
    b.part("alt_tracks_classic", worst_ratio <= 3.0, format!("worst ratio {worst_ratio:.3}"));
    b.part("runtime", seconds < 60.0, format!("{seconds:.1} s, limit 60 s"));
    b.values([fit.alpha_hat, fit.c_hat]);
    Ok(b.finish(10, TITLES[9], start))
}

fn stability_part(b: &mut Builder, name: &str, c: &InequalityCheck) {
    let pass = c.stable && c.c_max < 1e3;
    let cs: Vec<String> = c.rows.iter().map(|r| format!("{:.3}", r.c_n)).collect();
    b.part(name, pass, format!("c_N = [{}], c_max {:.3}", cs.join(", "), c.c_max));
    b.check(c);
}

fn c11() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let ns = vec![64, 128, 256, 512, 1024];
    let search = MrecStrategy::Alternating {
        restarts: 1,
        seed: 11,
        real_signs: false,
    };
    let base = Scenario {
        system: Some(cyclic(521)?),
        functions: vec![mean_zero(521, 7)?, mean_zero(521, 8)?],
        n_values: ns.clone(),
        mrec: search,
        ..Scenario::default()
    };
    for k in [1, 2] {
        let c = run_named_check(CheckName::Bourgain, &Scenario { k, ..base.clone() })?;
        stability_part(&mut b, &format!("bourgain_k{k}"), &c);
    }
    let rb = run_named_check(
        CheckName::ReverseBourgain,
        &Scenario {
            improved: true,
            ..base.clone()
        },
    )?;
    stability_part(&mut b, "reverse_bourgain", &rb);
    let sub = run_named_check(CheckName::Sublinearity, &base)?;
    stability_part(&mut b, "sublinearity", &sub);
    let ce = run_named_check(
        CheckName::CondExp,
        &Scenario {
            system: Some(cyclic(520)?),
            functions: vec![mean_zero(520, 7)?],
            partition: Some(Partition::residues(520, 2)?),
            ..base.clone()
        },
    )?;
    stability_part(&mut b, "cond_exp", &ce);

    // The exact maximum over real signs can only lower c_N relative to
    // the search's lower bound for M.
    let mut r = rng(11);
    let values: Vec<f64> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
    let small = Scenario {
        system: Some(system(SystemSpec::RandomPermutation { size: 8, seed: 11 })?),
        functions: vec![Observable::from_real(&values)?],
        n_values: ns,
        improved: true,
        mrec: MrecStrategy::BruteForce,
        ..Scenario::default()
    };
    let exact = run_named_check(CheckName::ReverseBourgain, &small)?;
    let searched = run_named_check(
        CheckName::ReverseBourgain,
        &Scenario {
            mrec: MrecStrategy::Alternating {
                restarts: 1,
                seed: 11,
                real_signs: true,
            },
            ..small
        },
    )?;
    let dominated = exact
        .rows
        .iter()
        .zip(&searched.rows)
        .all(|(x, s)| x.c_n <= s.c_n * (1.0 + 1e-12));
    b.part(
        "reverse_bourgain_exact_m",
        exact.c_max.is_finite() && exact.c_max < 1e3 && dominated,
        format!(
            "8 points, c_max {:.3} exact vs {:.3} searched, stable = {}",
            exact.c_max, searched.c_max, exact.stable
        ),
    );
    b.check(&exact);
    Ok(b.finish(11, TITLES[10], start))
}

fn c12() -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    let n_max = 4096u64;
    let series = |f: &dyn Fn(f64) -> f64| SeriesReport::from_values("A", (1..=n_max).map(|n| (n, f(n as f64))));
    let window = (16, n_max);
    let p_series = hilbert_criterion(&series(&|n| n.powf(-0.5))?, 0.9, window)?;
    let harmonic = hilbert_criterion(&series(&|_| 1.0)?, 1.0, window)?;
    let theta = (5f64.sqrt() - 1.0) / 2.0;
    let point = system(SystemSpec::Identity { size: 1 })?;
    let one = Observable::constant(1, Complex64::new(1.0, 0.0))?;
    let t = [theta];
    let golden_sums = hilbert_partial_sums(
        &point,
        0,
        std::slice::from_ref(&one),
        &[1],
        &HilbertWeight::Phase { t: &t },
        0.9,
        n_max as usize,
    )?;
    let golden = hilbert_criterion(&golden_sums.average_report("A")?, 0.9, window)?;
    let oscillation = golden_sums.oscillation_from(n_max as usize / 2);
    b.part(
        "criterion_examples",
        p_series.accept && !harmonic.accept && golden.accept,
        format!(
            "p-series {}, harmonic {}, golden {}",
            p_series.accept, harmonic.accept, golden.accept
        ),
    );
    b.part(
        "golden_sums_cauchy",
        oscillation <= golden.cauchy_sup,
        format!("sup |S_M - S_N| = {oscillation:.2e} within bound {:.2e}", golden.cauchy_sup),
    );
    b.values([p_series.cauchy_sup, golden.cauchy_sup, oscillation]);

    let half = [0.5];
    let alternating = hilbert_partial_sums(
        &point,
        0,
        std::slice::from_ref(&one),
        &[1],
        &HilbertWeight::Phase { t: &half },
        1.0,
        1024,
    )?;
    let s = alternating.sum(1024);
    let err = (s - Complex64::new(-std::f64::consts::LN_2, 0.0)).norm();
    b.part("alternating_harmonic", err <= 1e-3, format!("|S_1024 + ln 2| = {err:.2e}"));
    b.values([s.re, s.im]);

    let mut r = rng(12);
    let mut cauchy_ok = true;
    let mut worst_cauchy = f64::INFINITY;
    for _ in 0..1000 {
        let m = r.gen_range(2..=512);
        let n = r.gen_range(1..m.min(257));
        let sigma = [0.5, 0.9, 1.0][r.gen_range(0..3)];
        let c = run_named_check(
            CheckName::HilbertCauchy,
            &Scenario {
                sequences: vec![random_complex(&mut r, m)],
                n_values: vec![n],
                sigma,
                ..Scenario::default()
            },
        )?;
        cauchy_ok &= c.verdict;
        worst_cauchy = worst_cauchy.min(worst(&c));
    }
    b.part(
        "hilbert_cauchy",
        cauchy_ok,
        format!("1000 sequences, worst slack {worst_cauchy:.2e}"),
    );
    b.values([worst_cauchy]);

    let sx = cyclic(13)?;
    let sy = cyclic(7)?;
    let f = mean_zero(13, 12)?;
    let ones = Observable::constant(7, Complex64::new(1.0, 0.0))?;
    let mut identical = true;
    for sigma in [0.5, 0.9, 1.0] {
        let weighted = hilbert_partial_sums(
            &sx,
            3,
            std::slice::from_ref(&f),
            &[2],
            &HilbertWeight::ReturnTimes {
                sys: &sy,
                y: 4,
                gs: std::slice::from_ref(&ones),
                b: &[1],
            },
            sigma,
            512,
        )?;
        let plain = hilbert_partial_sums(&sx, 3, std::slice::from_ref(&f), &[2], &HilbertWeight::Phase { t: &[] }, sigma, 512)?;
        let raw: Vec<Complex64> = (1..=512i64).map(|n| f.get(sx.iterate(3, 2 * n))).collect();
        let direct = partial_sums_of(&raw, sigma)?;
        identical &= weighted == plain && plain == direct;
        b.values(weighted.sums.iter().flat_map(|z| [z.re, z.im]));
    }
    b.part("return_times_unit_weight", identical, "bitwise equal to the unweighted sums".into());
    Ok(b.finish(12, TITLES[11], start))
}

/// Criteria 1 to 12 on the current rayon pool.
pub fn run_criteria(mut progress: impl FnMut(&Outcome)) -> LabResult<Vec<Outcome>> {
    let mut out = Vec::with_capacity(12);
    for id in 1..=12 {
        let o = criterion(id)?;
        progress(&o);
        out.push(o);
    }
    Ok(out)
}

fn values_equal(a: &[Outcome], b: &[Outcome]) -> Vec<u32> {
    a.iter()
        .zip(b)
        .filter(|(x, y)| {
            x.values.len() != y.values.len()
                || x.values.iter().zip(&y.values).any(|(p, q)| p.to_bits() != q.to_bits())
        })
        .map(|(x, _)| x.id)
        .collect()
}

fn on_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> LabResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Criterion 13: reruns 1 to 12 on pools of one and eight threads and
/// compares every summary value with `first` bit for bit.
pub fn determinism(first: &[Outcome]) -> LabResult<Outcome> {
    let start = Instant::now();
    let mut b = Builder::new();
    for threads in [1usize, 8] {
        let again = on_pool(threads, || run_criteria(|_| {}))??;
        let differing = values_equal(first, &again);
        let compared: usize = first.iter().map(|o| o.values.len()).sum();
        b.part(
            &format!("threads_{threads}"),
            differing.is_empty(),
            if differing.is_empty() {
                format!("{compared} values identical")
            } else {
                format!("criteria {differing:?} differ")
            },
        );
    }
    Ok(b.finish(13, TITLES[12], start))
}

/// The full suite; `progress` sees each criterion as it completes.
pub fn selftest(mut progress: impl FnMut(&Outcome)) -> LabResult<Vec<Outcome>> {
    let mut all = run_criteria(&mut progress)?;
    let det = determinism(&all)?;
    progress(&det);
    all.push(det);
    Ok(all)
}
