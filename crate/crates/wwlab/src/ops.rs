//! Dispatch from an [`ExperimentConfig`] to the numerical core.

use std::cell::RefCell;
use std::collections::HashMap;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use wwlab_core::analysis::{
    decay_fit, hilbert_criterion, hilbert_partial_sums, precsim_fit, run_named_check, CheckName, DecayFit,
    HilbertVerdict, HilbertWeight, InequalityCheck, PrecsimWitness, Scenario, SeriesReport,
    HILBERT_MIN_POINTS,
};
use wwlab_core::box_lattice::{sweep, SweepRow};
use wwlab_core::finite_dynamics::{lp_norm, FiniteSystem, Observable, Partition};
use wwlab_core::math::isqrt;
use wwlab_core::recurrence::{
    multilinear_return_times_average, multiple_recurrence_average, polyphase_mrec_sup, uniform_mrec_bracket,
};
use wwlab_core::trig_sup::Bracket;
use wwlab_core::ww_core::{
    estimate_cost, off_diagonal_average, schedule_ranges, weak_ww_average, ww_average, ww_average_alt,
    CubeAssignment, CubeVertex, PointNorm, WwOptions,
};
use wwlab_core::{Complex64, DEFAULT_BUDGET};

use crate::config::{CheckParams, ExperimentConfig, Operation};
use crate::error::{LabError, LabResult};

/// Version stamped on every record; cached records from other versions are
/// recomputed.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable overriding the cost budget.
pub const BUDGET_ENV: &str = "WWLAB_BUDGET";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRow {
    #[serde(rename = "N")]
    pub n: u64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HilbertPoint {
    #[serde(rename = "N")]
    pub n: u64,
    pub re: f64,
    pub im: f64,
}

/// Operation-specific results beyond the per-`N` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Summary {
    Series,
    Check { check: InequalityCheck },
    Decay { fit: DecayFit },
    Precsim { witness: Option<PrecsimWitness> },
    Hilbert {
        sums: Vec<HilbertPoint>,
        verdict: Option<HilbertVerdict>,
    },
    BoxSweep { rows: Vec<SweepRow> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub version: String,
    /// Seconds spent computing; not part of the reproducible content.
    pub wall_time: f64,
    pub outputs: Vec<OutputRow>,
    pub summary: Summary,
}

impl ResultRecord {
    /// `false` for a failed check verdict or a box sweep whose exact and
    /// brute-force counts disagree.
    pub fn passed(&self) -> bool {
        match &self.summary {
            Summary::Check { check } => check.verdict,
            Summary::BoxSweep { rows } => rows.iter().all(|r| r.exact == r.brute),
            _ => true,
        }
    }

    /// Everything except the wall time, for reproducibility comparisons.
    pub fn content_eq(&self, other: &Self) -> bool {
        self.config_hash == other.config_hash
            && self.config == other.config
            && self.version == other.version
            && bits_eq(&self.outputs, &other.outputs)
            && serde_json::to_string(&self.summary).ok() == serde_json::to_string(&other.summary).ok()
    }
}

fn bits_eq(a: &[OutputRow], b: &[OutputRow]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.n == y.n && x.lower.to_bits() == y.lower.to_bits() && x.upper.to_bits() == y.upper.to_bits()
        })
}

/// The budget in force: `WWLAB_BUDGET`, then the config, then the default.
pub fn effective_budget(cfg: &ExperimentConfig) -> LabResult<u64> {
    if let Ok(v) = std::env::var(BUDGET_ENV) {
        return v
            .trim()
            .parse()
            .map_err(|_| LabError::config(format!("{BUDGET_ENV}='{v}' is not an integer")));
    }
    Ok(cfg.budget.unwrap_or(DEFAULT_BUDGET))
}

struct Inputs {
    system: Option<FiniteSystem>,
    second_system: Option<FiniteSystem>,
    functions: Vec<Observable>,
    second_functions: Vec<Observable>,
    ns: Vec<usize>,
    opts: WwOptions,
}

impl Inputs {
    fn sys(&self) -> LabResult<&FiniteSystem> {
        self.system
            .as_ref()
            .ok_or_else(|| LabError::config("this operation needs a system"))
    }

    fn second_sys(&self) -> LabResult<&FiniteSystem> {
        self.second_system
            .as_ref()
            .ok_or_else(|| LabError::config("this operation needs second_system"))
    }

    fn first(&self) -> LabResult<&Observable> {
        self.functions
            .first()
            .ok_or_else(|| LabError::config("this operation needs at least one function"))
    }

    fn exponents(given: &[i64], count: usize) -> Vec<i64> {
        if given.is_empty() {
            (1..=count as i64).collect()
        } else {
            given.to_vec()
        }
    }
}

/// Up-front cost estimate for the operations built on modulated sups.
fn estimated_cost(cfg: &ExperimentConfig, inp: &Inputs) -> LabResult<u64> {
    let Some(sys) = inp.system.as_ref() else {
        return Ok(0);
    };
    let o = cfg.oversample;
    let tuples = |k: usize, n: usize| -> LabResult<u64> {
        let s = isqrt(n as u64);
        Ok(s.saturating_pow(k.saturating_sub(1) as u32))
    };
    let mut total: u64 = 0;
    for &n in &inp.ns {
        let cost = match &cfg.operation {
            Operation::Ww { k, schedules, .. } if !schedules.is_empty() => {
                let ranges = schedule_ranges(schedules, *k, n)?;
                let t = ranges.iter().fold(1u64, |acc, &r| acc.saturating_mul(r as u64));
                estimate_cost(sys, t, n, o)
            }
            Operation::Ww { k, .. } | Operation::Decay { k, .. } => estimate_cost(sys, tuples(*k, n)?, n, o),
            Operation::WeakWw { k } => estimate_cost(sys, tuples(*k, n)?, n, o),
            Operation::Offdiag { k } => estimate_cost(sys, tuples(*k, n)?, n, o),
            Operation::Precsim { k, rhs_k, .. } => {
                estimate_cost(sys, tuples(*k, n)?, n, o).saturating_add(estimate_cost(sys, tuples(*rhs_k, n)?, n, o))
            }
            _ => 0,
        };
        total = total.saturating_add(cost);
    }
    Ok(total)
}

fn series_rows(ns: &[usize], brackets: &[Bracket]) -> Vec<OutputRow> {
    ns.iter()
        .zip(brackets)
        .map(|(&n, b)| OutputRow {
            n: n as u64,
            lower: b.lower,
            upper: b.upper,
        })
        .collect()
}

fn exact_rows(ns: &[usize], values: &[f64]) -> Vec<OutputRow> {
    ns.iter()
        .zip(values)
        .map(|(&n, &v)| OutputRow {
            n: n as u64,
            lower: v,
            upper: v,
        })
        .collect()
}

fn per_n<T>(ns: &[usize], f: impl Fn(usize) -> wwlab_core::Result<T>) -> LabResult<Vec<T>> {
    ns.iter().map(|&n| f(n).map_err(LabError::from)).collect()
}

/// Whether a check reads raw sequences instead of a system.
fn uses_sequences(name: CheckName) -> bool {
    matches!(
        name,
        CheckName::Vdc | CheckName::VdcSup | CheckName::HolderAverages | CheckName::HilbertCauchy
    )
}

/// Builds the core scenario for a named check.
///
/// Sequence checks take, for every scheduled `N`, the first `N` values of
/// each function; `hilbert_cauchy` takes each function whole and uses the
/// schedule for its split points.
pub fn build_scenario(name: CheckName, params: &CheckParams, cfg: &ExperimentConfig) -> LabResult<Scenario> {
    let inp = inputs(cfg)?;
    scenario_from(name, params, inp)
}

fn scenario_from(name: CheckName, params: &CheckParams, inp: Inputs) -> LabResult<Scenario> {
    let mut sequences = Vec::new();
    if uses_sequences(name) {
        for f in &inp.functions {
            if name == CheckName::HilbertCauchy {
                sequences.push(f.values().to_vec());
                continue;
            }
            for &n in &inp.ns {
                let prefix: &[Complex64] = f.values().get(..n).ok_or_else(|| {
                    LabError::config(format!("function has {} values, schedule asks for N = {n}", f.len()))
                })?;
                sequences.push(prefix.to_vec());
            }
        }
    }
    let partition = match params.partition_modulus {
        Some(r) => {
            let size = inp.sys()?.size();
            Some(Partition::residues(size, r)?)
        }
        None => None,
    };
    let zeta = match params.zeta {
        Some(bits) => Some(CubeVertex::new(bits, params.k.saturating_sub(1))?),
        None => None,
    };
    Ok(Scenario {
        system: inp.system,
        functions: inp.functions,
        second_system: inp.second_system,
        second_functions: inp.second_functions,
        sequences,
        n_values: inp.ns,
        k: params.k,
        degree: params.degree,
        cube_k: params.cube_k,
        h: params.h,
        exponents: params.exponents.clone(),
        weight_exponents: params.weight_exponents.clone(),
        point: params.point,
        partition,
        schedules: params.schedules.clone(),
        beta: params.beta,
        zeta,
        sigma: params.sigma,
        p_exponents: params.p_exponents.clone(),
        improved: params.improved,
        mrec: params.mrec.clone(),
        options: inp.opts,
    })
}

fn inputs(cfg: &ExperimentConfig) -> LabResult<Inputs> {
    cfg.validate()?;
    Ok(Inputs {
        system: cfg.build_system()?,
        second_system: cfg.build_second_system()?,
        functions: cfg.build_functions()?,
        second_functions: cfg.build_second_functions()?,
        ns: cfg.n_values()?,
        opts: WwOptions {
            oversample: cfg.oversample,
            norm: PointNorm::L2,
            budget: effective_budget(cfg)?,
        },
    })
}

/// Runs one experiment. Caching is the caller's business; see
/// [`crate::cache`].
pub fn run_experiment(cfg: &ExperimentConfig) -> LabResult<ResultRecord> {
    let start = Instant::now();
    let mut inp = inputs(cfg)?;
    let estimate = estimated_cost(cfg, &inp)?;
    if estimate > inp.opts.budget {
        return Err(wwlab_core::Error::BudgetExceeded {
            estimated: estimate,
            budget: inp.opts.budget,
        }
        .into());
    }
    info!("{}: estimated cost {estimate}", cfg.operation.label());
    let ns = inp.ns.clone();
    let (outputs, summary) = match &cfg.operation {
        Operation::Ww { k, schedules, norm } => {
            inp.opts.norm = *norm;
            let (sys, f) = (inp.sys()?, inp.first()?);
            let b = per_n(&ns, |n| {
                if schedules.is_empty() {
                    ww_average(sys, f, *k, n, &inp.opts)
                } else {
                    ww_average_alt(sys, f, *k, n, schedules, &inp.opts)
                }
            })?;
            (series_rows(&ns, &b), Summary::Series)
        }
        Operation::WeakWw { k } => {
            let (sys, f) = (inp.sys()?, inp.first()?);
            let b = per_n(&ns, |n| weak_ww_average(sys, f, *k, n, &inp.opts))?;
            (series_rows(&ns, &b), Summary::Series)
        }
        Operation::Offdiag { k } => {
            let sys = inp.sys()?;
            let assign = CubeAssignment::new(*k, inp.functions.clone())?;
            let b = per_n(&ns, |n| off_diagonal_average(sys, &assign, n, &inp.opts))?;
            (series_rows(&ns, &b), Summary::Series)
        }
        Operation::Mrec { exponents } => {
            let sys = inp.sys()?;
            let a = Inputs::exponents(exponents, inp.functions.len());
            let v = per_n(&ns, |n| {
                let avg = multiple_recurrence_average(sys, &inp.functions, &a, n)?;
                lp_norm(sys, &avg, 2.0)
            })?;
            (exact_rows(&ns, &v), Summary::Series)
        }
        Operation::MrecSup { k, strategy } => {
            let (sys, f) = (inp.sys()?, inp.first()?);
            let b = per_n(&ns, |n| {
                let m = uniform_mrec_bracket(sys, f, *k, n, strategy)?;
                Ok(Bracket::new(m.lower, m.upper))
            })?;
            (series_rows(&ns, &b), Summary::Series)
        }
        Operation::Polyphase { degree, exponents } => {
            let sys = inp.sys()?;
            let a = Inputs::exponents(exponents, inp.functions.len());
            let b = per_n(&ns, |n| polyphase_mrec_sup(sys, &inp.functions, &a, *degree, n, cfg.oversample))?;
            (series_rows(&ns, &b), Summary::Series)
        }
        Operation::ReturnTimes {
            point,
            exponents,
            weight_exponents,
        } => {
            let (sx, sy) = (inp.sys()?, inp.second_sys()?);
            let a = Inputs::exponents(exponents, inp.functions.len());
            let b = Inputs::exponents(weight_exponents, inp.second_functions.len());
            let v = per_n(&ns, |n| {
                let avg = multilinear_return_times_average(sx, *point, &inp.functions, &a, sy, &inp.second_functions, &b, n)?;
                lp_norm(sy, &avg, 2.0)
            })?;
            (exact_rows(&ns, &v), Summary::Series)
        }
        Operation::Hilbert {
            sigma,
            point,
            exponents,
            phase,
        } => run_hilbert(&inp, *sigma, *point, exponents, phase)?,
        Operation::Check { name, params } => {
            let sc = scenario_from(*name, params, inp)?;
            let check = run_named_check(*name, &sc)?;
            (Vec::new(), Summary::Check { check })
        }
        Operation::Boxsweep {
            max_dim,
            max_side,
            max_q,
        } => (Vec::new(), Summary::BoxSweep {
            rows: sweep(*max_dim, *max_side, *max_q)?,
        }),
        Operation::Decay { k, window } => {
            let (sys, f) = (inp.sys()?, inp.first()?);
            let b = per_n(&ns, |n| ww_average(sys, f, *k, n, &inp.opts))?;
            let report = SeriesReport::from_brackets(
                "W",
                ns.iter().zip(&b).map(|(&n, b)| (n as u64, b.clone())),
            )?;
            let p = sys.size() as u64;
            let window = window.unwrap_or((16, (p / 4).max(16)));
            if window.1 > p / 2 {
                warn!(
                    "decay window ends at N = {} beyond half the system size {p}; finite systems plateau there",
                    window.1
                );
            }
            let fit = decay_fit(&report, window)?;
            (series_rows(&ns, &b), Summary::Decay { fit })
        }
        Operation::Precsim { k, rhs_k, grid } => {
            let sys = inp.sys()?;
            let f1 = inp.first()?;
            let f2 = inp
                .functions
                .get(1)
                .ok_or_else(|| LabError::config("precsim needs two functions"))?;
            let b = per_n(&ns, |n| ww_average(sys, f1, *k, n, &inp.opts))?;
            let report = SeriesReport::from_brackets(
                "W",
                ns.iter().zip(&b).map(|(&n, b)| (n as u64, b.clone())),
            )?;
            let memo: RefCell<HashMap<u64, Option<f64>>> = RefCell::new(HashMap::new());
            let g = |n: u64| -> Option<f64> {
                if let Some(v) = memo.borrow().get(&n) {
                    return *v;
                }
                let v = ww_average(sys, f2, *rhs_k, n as usize, &inp.opts).ok().map(|b| b.upper);
                memo.borrow_mut().insert(n, v);
                v
            };
            let grid = grid.clone().unwrap_or_default();
            let witness = precsim_fit(&report, &g, &grid)?;
            (series_rows(&ns, &b), Summary::Precsim { witness })
        }
    };
    let wall_time = start.elapsed().as_secs_f64();
    Ok(ResultRecord {
        config_hash: cfg.hash(),
        config: cfg.clone(),
        version: VERSION.to_owned(),
        wall_time,
        outputs,
        summary,
    })
}

fn run_hilbert(
    inp: &Inputs,
    sigma: f64,
    point: usize,
    exponents: &[i64],
    phase: &[f64],
) -> LabResult<(Vec<OutputRow>, Summary)> {
    let sys = inp.sys()?;
    let a = Inputs::exponents(exponents, inp.functions.len());
    let n_max = *inp.ns.last().expect("validated schedule is nonempty");
    let ps = hilbert_partial_sums(sys, point, &inp.functions, &a, &HilbertWeight::Phase { t: phase }, sigma, n_max)?;
    let mut outputs = Vec::with_capacity(inp.ns.len());
    let mut sums = Vec::with_capacity(inp.ns.len());
    for &n in &inp.ns {
        let s = ps.sum(n);
        outputs.push(OutputRow {
            n: n as u64,
            lower: s.norm(),
            upper: s.norm(),
        });
        sums.push(HilbertPoint {
            n: n as u64,
            re: s.re,
            im: s.im,
        });
    }
    let averages = ps.average_report("A")?;
    let verdict = if n_max >= HILBERT_MIN_POINTS {
        Some(hilbert_criterion(&averages, sigma, (1, n_max as u64))?)
    } else {
        None
    };
    Ok((outputs, Summary::Hilbert { sums, verdict }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{FunctionSpec, NSchedule};
    use wwlab_core::finite_dynamics::SystemSpec;

    fn cfg(op: Operation, system: Option<SystemSpec>, functions: Vec<FunctionSpec>, ns: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            system,
            second_system: None,
            functions,
            second_functions: Vec::new(),
            operation: op,
            schedule: Some(NSchedule::List(ns)),
            oversample: 16,
            seed: 0,
            budget: None,
        }
    }

    #[test]
    fn ww_on_a_point_is_one() {
        let c = cfg(
            Operation::Ww {
                k: 1,
                schedules: Vec::new(),
                norm: PointNorm::L2,
            },
            Some(SystemSpec::Identity { size: 1 }),
            vec![FunctionSpec::Table {
                values: vec![1.0],
                imag: Vec::new(),
            }],
            vec![4, 8],
        );
        let r = run_experiment(&c).unwrap();
        assert_eq!(r.outputs.len(), 2);
        for row in &r.outputs {
            assert!((row.lower - 1.0).abs() < 1e-12, "{row:?}");
            assert!(row.upper >= 1.0 && row.upper < 1.01, "{row:?}");
        }
    }

    #[test]
    fn vdc_check_row() {
        let c = cfg(
            Operation::Check {
                name: CheckName::Vdc,
                params: CheckParams {
                    h: Some(1),
                    ..CheckParams::default()
                },
            },
            None,
            vec![FunctionSpec::Table {
                values: vec![1.0; 4],
                imag: Vec::new(),
            }],
            vec![4],
        );
        let r = run_experiment(&c).unwrap();
        let Summary::Check { check } = &r.summary else {
            panic!("not a check")
        };
        assert!((check.rows[0].slack - 0.09375).abs() < 1e-15);
        assert!(r.passed());
    }

    #[test]
    fn budget_refusal_reports_the_estimate() {
        let mut c = cfg(
            Operation::Ww {
                k: 2,
                schedules: Vec::new(),
                norm: PointNorm::L2,
            },
            Some(SystemSpec::CyclicShift { p: 101 }),
            vec![FunctionSpec::MeanZero { seed: 1 }],
            vec![64],
        );
        c.budget = Some(10);
        if std::env::var(BUDGET_ENV).is_err() {
            match run_experiment(&c) {
                Err(LabError::Core(wwlab_core::Error::BudgetExceeded { estimated, budget })) => {
                    assert_eq!(budget, 10);
                    assert!(estimated > 10);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn decay_needs_enough_points() {
        let c = cfg(
            Operation::Decay { k: 1, window: None },
            Some(SystemSpec::CyclicShift { p: 61 }),
            vec![FunctionSpec::MeanZero { seed: 2 }],
            vec![16, 20],
        );
        assert!(run_experiment(&c).is_err());
    }
}
