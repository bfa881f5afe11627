//! Experiment configuration: systems, function fixtures, the operation and
//! the `N` schedule. Configurations are read from JSON or assembled from
//! command-line flags, and hashed for the result cache.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wwlab_core::analysis::{CheckName, PrecsimGrid};
use wwlab_core::finite_dynamics::{tensor, FiniteSystem, Observable, SystemSpec};
use wwlab_core::math::e;
use wwlab_core::recurrence::MrecStrategy;
use wwlab_core::ww_core::{PointNorm, ScheduleR};
use wwlab_core::{Complex64, DEFAULT_OVERSAMPLE};

use crate::error::{LabError, LabResult};

/// A function on the points of a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    /// Random unimodular phases, minus their mean, scaled to sup-norm 1.
    MeanZero { seed: u64 },
    /// Random signs, minus their mean, scaled to sup-norm 1. Real valued.
    SignMeanZero { seed: u64 },
    /// `x -> e(j x / |X|)`.
    Character { j: i64 },
    /// Explicit values; `imag` may be omitted for real tables.
    Table {
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        imag: Vec<f64>,
    },
    /// `(x, y) -> a(x) b(y)` on a product system.
    Tensor { a: Box<FunctionSpec>, b: Box<FunctionSpec> },
}

/// Seeded mean-zero fixture of the given size.
pub fn mean_zero(size: usize, seed: u64) -> LabResult<Observable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<Complex64> = (0..size).map(|_| e(rng.gen::<f64>())).collect();
    centre_and_scale(raw)
}

/// Seeded real mean-zero fixture of the given size.
pub fn sign_mean_zero(size: usize, seed: u64) -> LabResult<Observable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<Complex64> = (0..size)
        .map(|_| Complex64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0))
        .collect();
    centre_and_scale(raw)
}

fn centre_and_scale(raw: Vec<Complex64>) -> LabResult<Observable> {
    if raw.is_empty() {
        return Err(LabError::config("fixture on an empty system"));
    }
    let mean = wwlab_core::sum::sum_complex(raw.iter().copied()) / raw.len() as f64;
    let centred: Vec<Complex64> = raw.iter().map(|z| z - mean).collect();
    let sup = centred.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scaled = if sup > 0.0 {
        centred.iter().map(|z| z / sup).collect()
    } else {
        centred
    };
    Ok(Observable::new(scaled)?)
}

impl FunctionSpec {
    /// Values on `system`; tables carry their own size and need no system.
    pub fn build(&self, system: Option<&SystemSpec>) -> LabResult<Observable> {
        let size = || -> LabResult<usize> {
            system
                .ok_or_else(|| LabError::config("this function needs a system to fix its size"))?
                .size()
                .map_err(LabError::from)
        };
        match self {
            FunctionSpec::MeanZero { seed } => mean_zero(size()?, *seed),
            FunctionSpec::SignMeanZero { seed } => sign_mean_zero(size()?, *seed),
            FunctionSpec::Character { j } => {
                let p = size()?;
                let values = (0..p as i64)
                    .map(|x| e((j * x).rem_euclid(p as i64) as f64 / p as f64))
                    .collect();
                Ok(Observable::new(values)?)
            }
            FunctionSpec::Table { values, imag } => {
                if !imag.is_empty() && imag.len() != values.len() {
                    return Err(LabError::config("table: values and imag differ in length"));
                }
                let obs = Observable::new(
                    values
                        .iter()
                        .enumerate()
                        .map(|(i, &re)| Complex64::new(re, imag.get(i).copied().unwrap_or(0.0)))
                        .collect(),
                )?;
                if let Some(spec) = system {
                    let size = spec.size()?;
                    if size != obs.len() {
                        return Err(LabError::config(format!(
                            "table has {} values but the system has {size} points",
                            obs.len()
                        )));
                    }
                }
                Ok(obs)
            }
            FunctionSpec::Tensor { a, b } => match system {
                Some(SystemSpec::Product { a: sa, b: sb }) => Ok(tensor(&a.build(Some(sa))?, &b.build(Some(sb))?)),
                _ => Err(LabError::config("tensor functions need a product system")),
            },
        }
    }

    /// Parses `mean-zero:SEED`, `sign:SEED`, `char:J` or `table:V1,V2,..`.
    pub fn parse_flag(s: &str) -> LabResult<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| LabError::config(format!("function '{s}': expected KIND:ARG")))?;
        let int = |v: &str| -> LabResult<i64> {
            v.trim()
                .parse()
                .map_err(|_| LabError::config(format!("function '{s}': '{v}' is not an integer")))
        };
        match kind {
            "mean-zero" => Ok(FunctionSpec::MeanZero { seed: int(arg)? as u64 }),
            "sign" => Ok(FunctionSpec::SignMeanZero { seed: int(arg)? as u64 }),
            "char" => Ok(FunctionSpec::Character { j: int(arg)? }),
            "table" => {
                let values = arg
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| LabError::config(format!("function '{s}': '{v}' is not a number")))
                    })
                    .collect::<LabResult<Vec<_>>>()?;
                Ok(FunctionSpec::Table { values, imag: Vec::new() })
            }
            other => Err(LabError::config(format!("unknown function kind '{other}'"))),
        }
    }
}

/// Parses `cyclic:P`, `rotation:P:J`, `skew:P`, `perm:SIZE:SEED`,
/// `identity:SIZE`, or `A*B` for a product.
pub fn parse_system(s: &str) -> LabResult<SystemSpec> {
    if let Some((a, b)) = s.split_once('*') {
        return Ok(SystemSpec::Product {
            a: Box::new(parse_system(a)?),
            b: Box::new(parse_system(b)?),
        });
    }
    let parts: Vec<&str> = s.trim().split(':').collect();
    let num = |i: usize| -> LabResult<u64> {
        parts
            .get(i)
            .ok_or_else(|| LabError::config(format!("system '{s}': missing argument {i}")))?
            .parse()
            .map_err(|_| LabError::config(format!("system '{s}': argument {i} is not an integer")))
    };
    let arity = |n: usize| -> LabResult<()> {
        if parts.len() != n + 1 {
            return Err(LabError::config(format!("system '{s}': expected {n} arguments")));
        }
        Ok(())
    };
    let spec = match parts[0] {
        "cyclic" => {
            arity(1)?;
            SystemSpec::CyclicShift { p: num(1)? as usize }
        }
        "rotation" => {
            arity(2)?;
            SystemSpec::RotationApprox {
                p: num(1)? as usize,
                j: num(2)? as usize,
            }
        }
        "skew" => {
            arity(1)?;
            SystemSpec::SkewProduct { p: num(1)? as usize }
        }
        "perm" => {
            arity(2)?;
            SystemSpec::RandomPermutation {
                size: num(1)? as usize,
                seed: num(2)?,
            }
        }
        "identity" => {
            arity(1)?;
            SystemSpec::Identity { size: num(1)? as usize }
        }
        other => return Err(LabError::config(format!("unknown system kind '{other}'"))),
    };
    Ok(spec)
}

/// The `N` values an experiment visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NSchedule {
    List(Vec<u64>),
    /// `floor(start * ratio^i)` for `i < count`, with repeats removed.
    Geometric { start: u64, ratio: f64, count: usize },
}

impl NSchedule {
    pub fn values(&self) -> LabResult<Vec<usize>> {
        let out: Vec<u64> = match self {
            NSchedule::List(v) => v.clone(),
            NSchedule::Geometric { start, ratio, count } => {
                if *start == 0 || !(*ratio > 1.0) || *count == 0 {
                    return Err(LabError::config("geometric schedule needs start >= 1, ratio > 1, count >= 1"));
                }
                let mut v: Vec<u64> = (0..*count)
                    .map(|i| (*start as f64 * ratio.powi(i as i32)).floor() as u64)
                    .collect();
                v.dedup();
                v
            }
        };
        if out.is_empty() {
            return Err(LabError::config("schedule is empty"));
        }
        if out[0] == 0 || out.windows(2).any(|w| w[0] >= w[1]) {
            return Err(LabError::config("schedule must be positive and strictly increasing"));
        }
        Ok(out.into_iter().map(|n| n as usize).collect())
    }

    /// Parses `16..256x2` (geometric up to the bound), `4,8,16` or `64`.
    pub fn parse_flag(s: &str) -> LabResult<Self> {
        let bad = || LabError::config(format!("schedule '{s}': expected A..BxR or a comma list"));
        if let Some((range, ratio)) = s.split_once('x') {
            let (a, b) = range.split_once("..").ok_or_else(bad)?;
            let start: u64 = a.parse().map_err(|_| bad())?;
            let stop: u64 = b.parse().map_err(|_| bad())?;
            let ratio: f64 = ratio.parse().map_err(|_| bad())?;
            if start == 0 || stop < start || !(ratio > 1.0) {
                return Err(bad());
            }
            let mut count = 0;
            while (start as f64 * ratio.powi(count as i32)).floor() as u64 <= stop {
                count += 1;
            }
            return Ok(NSchedule::Geometric { start, ratio, count });
        }
        let list = s
            .split(',')
            .map(|v| v.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<LabResult<Vec<_>>>()?;
        Ok(NSchedule::List(list))
    }
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn two_u32() -> u32 {
    2
}

fn unit_sigma() -> f64 {
    1.0
}

fn default_p() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}

fn default_oversample() -> usize {
    DEFAULT_OVERSAMPLE
}

/// Inputs specific to named checks; see the registry in `wwlab-core`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckParams {
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default = "one")]
    pub degree: usize,
    #[serde(default = "two")]
    pub cube_k: usize,
    #[serde(default, rename = "H")]
    pub h: Option<usize>,
    #[serde(default)]
    pub exponents: Vec<i64>,
    #[serde(default)]
    pub weight_exponents: Vec<i64>,
    #[serde(default)]
    pub point: usize,
    /// Cells are the residues modulo this number.
    #[serde(default)]
    pub partition_modulus: Option<usize>,
    #[serde(default)]
    pub schedules: Vec<ScheduleR>,
    #[serde(default = "two_u32")]
    pub beta: u32,
    /// Bits of the vertex moved to the all-ones slot.
    #[serde(default)]
    pub zeta: Option<u32>,
    #[serde(default = "unit_sigma")]
    pub sigma: f64,
    #[serde(default = "default_p")]
    pub p_exponents: Vec<f64>,
    #[serde(default)]
    pub improved: bool,
    #[serde(default)]
    pub mrec: MrecStrategy,
}

impl Default for CheckParams {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Operation {
    /// `W_N^k`, or the alternative-schedule average when `schedules` is set.
    Ww {
        #[serde(default = "one")]
        k: usize,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        schedules: Vec<ScheduleR>,
        #[serde(default)]
        norm: PointNorm,
    },
    WeakWw {
        #[serde(default = "one")]
        k: usize,
    },
    /// Off-diagonal average with the configured functions on the cube.
    Offdiag {
        #[serde(default = "two")]
        k: usize,
    },
    /// `||(1/N) sum_n prod_j f_j o T^{a_j n}||_2`.
    Mrec {
        #[serde(default)]
        exponents: Vec<i64>,
    },
    /// Bracket for `M_N^k` of the first function.
    MrecSup {
        #[serde(default = "one")]
        k: usize,
        #[serde(default)]
        strategy: MrecStrategy,
    },
    /// Polynomial-phase supremum of the recurrence average.
    Polyphase {
        #[serde(default = "one")]
        degree: usize,
        #[serde(default)]
        exponents: Vec<i64>,
    },
    /// `L^2` norm over the second system of the multilinear return-times
    /// average at `point`.
    ReturnTimes {
        #[serde(default)]
        point: usize,
        #[serde(default)]
        exponents: Vec<i64>,
        #[serde(default)]
        weight_exponents: Vec<i64>,
    },
    /// Partial sums `S_N` with a fixed polynomial phase.
    Hilbert {
        #[serde(default = "unit_sigma")]
        sigma: f64,
        #[serde(default)]
        point: usize,
        #[serde(default)]
        exponents: Vec<i64>,
        #[serde(default)]
        phase: Vec<f64>,
    },
    Check {
        name: CheckName,
        #[serde(default)]
        params: CheckParams,
    },
    Boxsweep {
        max_dim: usize,
        max_side: i64,
        max_q: i64,
    },
    /// `W_N^k` followed by a power-law fit over `window`.
    Decay {
        #[serde(default = "one")]
        k: usize,
        #[serde(default)]
        window: Option<(u64, u64)>,
    },
    /// Dominance search of `W^k(f_1)` by `W^{rhs_k}(f_2)`, with `f_2`
    /// evaluated on demand.
    Precsim {
        #[serde(default = "one")]
        k: usize,
        #[serde(default = "one")]
        rhs_k: usize,
        #[serde(default)]
        grid: Option<PrecsimGrid>,
    },
}

impl Operation {
    pub fn label(&self) -> String {
        match self {
            Operation::Ww { .. } => "ww".into(),
            Operation::WeakWw { .. } => "weak_ww".into(),
            Operation::Offdiag { .. } => "offdiag".into(),
            Operation::Mrec { .. } => "mrec".into(),
            Operation::MrecSup { .. } => "mrec_sup".into(),
            Operation::Polyphase { .. } => "polyphase".into(),
            Operation::ReturnTimes { .. } => "return_times".into(),
            Operation::Hilbert { .. } => "hilbert".into(),
            Operation::Check { name, .. } => format!("check({name})"),
            Operation::Boxsweep { .. } => "boxsweep".into(),
            Operation::Decay { .. } => "decay".into(),
            Operation::Precsim { .. } => "precsim".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_system: Option<SystemSpec>,
    #[serde(default)]
    pub functions: Vec<FunctionSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub second_functions: Vec<FunctionSpec>,
    #[serde(flatten)]
    pub operation: Operation,
    /// Required by every operation except `boxsweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<NSchedule>,
    #[serde(default = "default_oversample")]
    pub oversample: usize,
    /// Seed for randomised searches.
    #[serde(default)]
    pub seed: u64,
    /// Cost cap; `WWLAB_BUDGET` overrides it. Not part of the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> LabResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| LabError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs always serialise")
    }

    pub fn validate(&self) -> LabResult<()> {
        match (&self.schedule, &self.operation) {
            (Some(s), _) => {
                s.values()?;
            }
            (None, Operation::Boxsweep { .. }) => {}
            (None, op) => return Err(LabError::config(format!("operation {} needs a schedule", op.label()))),
        }
        if self.oversample < wwlab_core::trig_sup::MIN_OVERSAMPLE {
            return Err(LabError::config(format!(
                "oversample {} is below {}",
                self.oversample,
                wwlab_core::trig_sup::MIN_OVERSAMPLE
            )));
        }
        Ok(())
    }

    /// The validated `N` values; empty for `boxsweep` without a schedule.
    pub fn n_values(&self) -> LabResult<Vec<usize>> {
        match &self.schedule {
            Some(s) => s.values(),
            None => Ok(Vec::new()),
        }
    }

    /// SHA-256 of the canonical JSON form with the budget removed.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.budget = None;
        let bytes = serde_json::to_vec(&canonical).expect("configs always serialise");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build_system(&self) -> LabResult<Option<FiniteSystem>> {
        self.system
            .as_ref()
            .map(|s| FiniteSystem::build(s).map_err(LabError::from))
            .transpose()
    }

    pub fn build_second_system(&self) -> LabResult<Option<FiniteSystem>> {
        self.second_system
            .as_ref()
            .map(|s| FiniteSystem::build(s).map_err(LabError::from))
            .transpose()
    }

    pub fn build_functions(&self) -> LabResult<Vec<Observable>> {
        self.functions.iter().map(|f| f.build(self.system.as_ref())).collect()
    }

    pub fn build_second_functions(&self) -> LabResult<Vec<Observable>> {
        self.second_functions
            .iter()
            .map(|f| f.build(self.second_system.as_ref()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ExperimentConfig {
        ExperimentConfig {
            system: Some(SystemSpec::CyclicShift { p: 11 }),
            second_system: None,
            functions: vec![FunctionSpec::MeanZero { seed: 3 }],
            second_functions: Vec::new(),
            operation: Operation::Ww {
                k: 2,
                schedules: Vec::new(),
                norm: PointNorm::L2,
            },
            schedule: Some(NSchedule::List(vec![4, 8])),
            oversample: 16,
            seed: 0,
            budget: None,
        }
    }

    #[test]
    fn schedule_flags() {
        assert_eq!(
            NSchedule::parse_flag("16..256x2").unwrap().values().unwrap(),
            vec![16, 32, 64, 128, 256]
        );
        assert_eq!(NSchedule::parse_flag("4,8").unwrap().values().unwrap(), vec![4, 8]);
        assert!(NSchedule::List(vec![8, 4]).values().is_err());
        assert!(NSchedule::List(vec![]).values().is_err());
        assert!(NSchedule::parse_flag("a..b").is_err());
    }

    #[test]
    fn system_flags() {
        assert_eq!(parse_system("cyclic:521").unwrap(), SystemSpec::CyclicShift { p: 521 });
        assert!(matches!(parse_system("cyclic:5*cyclic:7").unwrap(), SystemSpec::Product { .. }));
        assert!(parse_system("torus:3").is_err());
        assert!(parse_system("cyclic").is_err());
    }

    #[test]
    fn mean_zero_fixture() {
        let f = mean_zero(97, 5).unwrap();
        let mean: Complex64 = f.values().iter().sum::<Complex64>() / 97.0;
        assert!(mean.norm() < 1e-12);
        assert!((f.sup_norm() - 1.0).abs() < 1e-12);
        assert_eq!(f, mean_zero(97, 5).unwrap());
        assert!(sign_mean_zero(10, 1).unwrap().is_real());
    }

    #[test]
    fn hash_ignores_budget_only() {
        let a = sample();
        let mut b = a.clone();
        b.budget = Some(5);
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn json_shape() {
        let cfg = ExperimentConfig::from_json(
            r#"{"op":"check","name":"vdc","params":{"H":1},"functions":[{"kind":"table","values":[1,1,1,1]}],"schedule":{"list":[4]},"seed":1}"#,
        )
        .unwrap();
        match &cfg.operation {
            Operation::Check { name, params } => {
                assert_eq!(*name, CheckName::Vdc);
                assert_eq!(params.h, Some(1));
                assert_eq!(params.k, 1);
            }
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::from_json(r#"{"op":"ww","schedule":{"list":[]}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"op":"ww"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"op":"boxsweep","max_dim":1,"max_side":2,"max_q":3}"#).is_ok());
    }
}
