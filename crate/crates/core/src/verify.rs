//! Self-certification suite: closed form against the brute-force oracle,
//! generalized-metric axioms and gradient checks on random instances.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, SmwError};
use crate::exec::{map_with_scratch, Execution};
use crate::gradients::{finite_diff_check, min_projected_gap, smw_grad, sw_grad, PairWrt, FD_STEP};
use crate::measures::{uniform_measure, DiscreteMeasure, MeasureSet, SimplexWeights};
use crate::ot1d::{mw_squared_1d, mw_squared_1d_oracle, w2_squared_1d};
use crate::rng::{derive_seed, substream};
use crate::slicing::{sample_directions, smw_squared, sw_squared, ProjectionSet};

const TAG_ORACLE: u64 = 1;
const TAG_AXIOMS: u64 = 2;
const TAG_GRADIENTS: u64 = 3;
const TAG_PAIRWISE: u64 = 4;

/// Directions shared by every evaluation of one sliced axiom trial.
pub const AXIOM_PROJECTIONS: usize = 64;
/// Directions used by the sliced gradient checks.
const GRADIENT_PROJECTIONS: usize = 8;
/// Instances whose projected atoms come closer than this are redrawn.
const MIN_GAP: f64 = 1e-3;
const GRADIENT_REDRAWS: usize = 100;

/// `Exact` checks hold for every instance by construction; `Statistical`
/// ones hold with overwhelming probability over the random directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Exact,
    Statistical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub trials: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new(name: impl Into<String>, kind: CheckKind, violations: &[f64], tolerance: f64) -> Self {
        let max_violation = violations.iter().copied().fold(0.0, f64::max);
        Self {
            name: name.into(),
            kind,
            trials: violations.len(),
            max_violation,
            tolerance,
            passed: max_violation <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub seed: u64,
    pub elapsed_s: f64,
}

#[derive(Serialize)]
struct SummaryRecord {
    seed: u64,
    checks: usize,
    failed: usize,
    passed: bool,
    elapsed_s: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One record per check followed by a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out += &serde_json::to_string(c).expect("plain record");
            out.push('\n');
        }
        let summary = SummaryRecord {
            seed: self.seed,
            checks: self.checks.len(),
            failed: self.checks.iter().filter(|c| !c.passed).count(),
            passed: self.passed(),
            elapsed_s: self.elapsed_s,
        };
        out += &serde_json::to_string(&summary).expect("plain record");
        out.push('\n');
        out
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{} {:<32} {:>5} trials  max violation {:.3e} (tol {:.0e}, {})",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.trials,
                c.max_violation,
                c.tolerance,
                match c.kind {
                    CheckKind::Exact => "exact",
                    CheckKind::Statistical => "statistical",
                }
            )?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(
            f,
            "{} of {} checks passed in {:.2}s (seed {})",
            self.checks.len() - failed,
            self.checks.len(),
            self.elapsed_s,
            self.seed
        )
    }
}

/// The two distances whose metric axioms are checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricSpace {
    Mw1d,
    Smw,
}

impl MetricSpace {
    fn label(self) -> &'static str {
        match self {
            MetricSpace::Mw1d => "mw1d",
            MetricSpace::Smw => "smw",
        }
    }
}

impl FromStr for MetricSpace {
    type Err = SmwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mw1d" => Ok(MetricSpace::Mw1d),
            "smw" => Ok(MetricSpace::Smw),
            _ => Err(SmwError::invalid(format!(
                "unknown space {s:?}, expected mw1d or smw"
            ))),
        }
    }
}

fn random_weights(rng: &mut ChaCha8Rng, p: usize) -> Result<SimplexWeights> {
    let raw: Vec<f64> = (0..p).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut beta: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // put the rounding residue on the last weight
    let head: f64 = beta[..p - 1].iter().sum();
    beta[p - 1] = 1.0 - head;
    SimplexWeights::new(beta)
}

/// Atoms on a 5-point grid so that ties within and across measures are common.
fn tied_measure(rng: &mut ChaCha8Rng, n: usize) -> Result<DiscreteMeasure> {
    let points: Vec<f64> = (0..n)
        .map(|_| rng.random_range(-2..=2) as f64 * 0.5)
        .collect();
    DiscreteMeasure::from_points_1d(&points)
}

fn random_set(rng: &mut ChaCha8Rng, p: usize, n: usize, d: usize) -> Result<MeasureSet> {
    MeasureSet::new((0..p).map(|_| uniform_measure(rng, n, d)).collect())
}

fn run_trials<F>(trials: usize, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    map_with_scratch(Execution::default(), trials, || (), |_, i| f(i))
        .into_iter()
        .collect()
}

/// Closed form against the oracle on random 1D instances with `N ≤ max_n`
/// and `2 ≤ P ≤ max_p`. Even trials use uniform weights and odd ones random
/// weights; every fifth trial draws atoms from a coarse grid to force ties.
pub fn check_oracle_equivalence(
    trials: usize,
    max_n: usize,
    max_p: usize,
    seed: u64,
    tol: f64,
) -> Result<CheckResult> {
    if !(1..=6).contains(&max_n) || !(2..=4).contains(&max_p) {
        return Err(SmwError::invalid(
            "oracle checks need 1 <= max_n <= 6 and 2 <= max_p <= 4",
        ));
    }
    let violations = run_trials(trials, |i| {
        let mut rng = substream(derive_seed(seed, TAG_ORACLE, i as u64), 0);
        let n = rng.random_range(1..=max_n);
        let p = rng.random_range(2..=max_p);
        let beta = if i % 2 == 0 {
            SimplexWeights::uniform(p)
        } else {
            random_weights(&mut rng, p)?
        };
        let measures = if i % 5 == 4 {
            (0..p)
                .map(|_| tied_measure(&mut rng, n))
                .collect::<Result<_>>()?
        } else {
            (0..p).map(|_| uniform_measure(&mut rng, n, 1)).collect()
        };
        let set = MeasureSet::new(measures)?;
        Ok((mw_squared_1d(&set, &beta)? - mw_squared_1d_oracle(&set, &beta)?).abs())
    })?;
    Ok(CheckResult::new(
        "oracle_equivalence",
        CheckKind::Exact,
        &violations,
        tol,
    ))
}

/// `|MW² − W₂²/4| / (W₂²/4)` for two measures with uniform weights.
pub fn check_pairwise_reduction(trials: usize, seed: u64, tol: f64) -> Result<CheckResult> {
    let violations = run_trials(trials, |i| {
        let mut rng = substream(derive_seed(seed, TAG_PAIRWISE, i as u64), 0);
        let n = rng.random_range(1..=50);
        let set = random_set(&mut rng, 2, n, 1)?;
        let mw = mw_squared_1d(&set, &SimplexWeights::uniform(2))?;
        let quarter = 0.25 * w2_squared_1d(set.get(0), set.get(1))?;
        Ok((mw - quarter).abs() / quarter.max(f64::MIN_POSITIVE))
    })?;
    Ok(CheckResult::new(
        "pairwise_reduction",
        CheckKind::Exact,
        &violations,
        tol,
    ))
}

/// Worst deviation from each axiom on one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomViolations {
    /// `max(0, −D)`.
    pub nonnegativity: f64,
    /// `D` on `P` copies of the first measure.
    pub identity_equal: f64,
    /// 1 when the (distinct) inputs give `D = 0`, else 0.
    pub identity_distinct: f64,
    /// Largest `|D(σ·μ) − D(μ)|` over the cyclic shifts and the reversal.
    pub symmetry: f64,
    /// `max(0, √D(μ₁..μ_P) − Σ_p √D(μ without μ_p, μ_{P+1}))`.
    pub triangle: f64,
}

/// Evaluates the four axioms on `set` with `extra` as the `(P+1)`-th
/// measure. Sliced evaluations all use `projections`. Only uniform weights
/// make the distance a generalized metric, so other weights are refused.
pub fn axiom_violations(
    space: MetricSpace,
    set: &MeasureSet,
    extra: &DiscreteMeasure,
    beta: &SimplexWeights,
    projections: Option<&ProjectionSet>,
) -> Result<AxiomViolations> {
    if !beta.is_uniform() {
        return Err(SmwError::InvalidWeights(
            "the metric axioms only hold for uniform weights".into(),
        ));
    }
    let p = set.p_count();
    let eval = |measures: Vec<DiscreteMeasure>| -> Result<f64> {
        let s = MeasureSet::new(measures)?;
        match space {
            MetricSpace::Mw1d => mw_squared_1d(&s, beta),
            MetricSpace::Smw => {
                let proj = projections
                    .ok_or_else(|| SmwError::invalid("sliced axioms need shared projections"))?;
                Ok(smw_squared(&s, beta, proj)?.estimate)
            }
        }
    };
    let base = eval(set.measures().to_vec())?;

    let mut symmetry = 0.0f64;
    let mut perms: Vec<Vec<usize>> = (1..p)
        .map(|s| (0..p).map(|i| (i + s) % p).collect())
        .collect();
    perms.push((0..p).rev().collect());
    for perm in perms {
        let value = eval(perm.iter().map(|&i| set.get(i).clone()).collect())?;
        symmetry = symmetry.max((value - base).abs());
    }

    let identity_equal = eval(vec![set.get(0).clone(); p])?.abs();
    let distinct = set.measures().windows(2).any(|w| w[0] != w[1]);

    let mut bound = 0.0;
    for drop in 0..p {
        let mut measures: Vec<DiscreteMeasure> = set
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != drop)
            .map(|(_, m)| m.clone())
            .collect();
        measures.push(extra.clone());
        bound += eval(measures)?.sqrt();
    }

    Ok(AxiomViolations {
        nonnegativity: (-base).max(0.0),
        identity_equal,
        identity_distinct: if distinct && base <= 0.0 { 1.0 } else { 0.0 },
        symmetry,
        triangle: (base.sqrt() - bound).max(0.0),
    })
}

/// The four axioms on `trials` random instances with uniform weights,
/// `P ∈ {2,3,4}` and `N ∈ {2..6}`. Sliced trials use `d ∈ {2..5}` and
/// [`AXIOM_PROJECTIONS`] directions shared within the trial. The triangle
/// check uses `tol`; symmetry and the identity on equal inputs use 1e-12.
pub fn check_metric_axioms(
    space: MetricSpace,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<CheckResult>> {
    let tag = derive_seed(TAG_AXIOMS, space as u64, 0);
    let rows = map_with_scratch(
        Execution::default(),
        trials,
        || (),
        |_, i| {
            let mut rng = substream(derive_seed(seed, tag, i as u64), 0);
            let p = rng.random_range(2..=4);
            let n = rng.random_range(2..=6);
            let d = match space {
                MetricSpace::Mw1d => 1,
                MetricSpace::Smw => rng.random_range(2..=5),
            };
            let set = random_set(&mut rng, p, n, d)?;
            let extra = uniform_measure(&mut rng, n, d);
            let proj = match space {
                MetricSpace::Mw1d => None,
                MetricSpace::Smw => Some(sample_directions(d, AXIOM_PROJECTIONS, rng.random())?),
            };
            axiom_violations(
                space,
                &set,
                &extra,
                &SimplexWeights::uniform(p),
                proj.as_ref(),
            )
        },
    )
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let column = |f: fn(&AxiomViolations) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let label = space.label();
    let distinct_kind = match space {
        MetricSpace::Mw1d => CheckKind::Exact,
        MetricSpace::Smw => CheckKind::Statistical,
    };
    Ok(vec![
        CheckResult::new(
            format!("{label}/nonnegativity"),
            CheckKind::Exact,
            &column(|r| r.nonnegativity),
            0.0,
        ),
        CheckResult::new(
            format!("{label}/identity_equal"),
            CheckKind::Exact,
            &column(|r| r.identity_equal),
            1e-12,
        ),
        CheckResult::new(
            format!("{label}/identity_distinct"),
            distinct_kind,
            &column(|r| r.identity_distinct),
            0.0,
        ),
        CheckResult::new(
            format!("{label}/symmetry"),
            CheckKind::Exact,
            &column(|r| r.symmetry),
            1e-12,
        ),
        CheckResult::new(
            format!("{label}/triangle"),
            CheckKind::Exact,
            &column(|r| r.triangle),
            tol,
        ),
    ])
}

fn tie_free_set(
    rng: &mut ChaCha8Rng,
    p: usize,
    n: usize,
    d: usize,
    proj: &ProjectionSet,
) -> Result<MeasureSet> {
    for _ in 0..GRADIENT_REDRAWS {
        let set = random_set(rng, p, n, d)?;
        if min_projected_gap(&set, proj) >= MIN_GAP {
            return Ok(set);
        }
    }
    Err(SmwError::invalid("could not draw a tie-free instance"))
}

/// Analytic gradients of SMW² (odd trials: SW²) against central differences
/// with step [`FD_STEP`], on random instances whose projected atoms are at
/// least 1e-3 apart so no perturbation crosses a sorting tie.
pub fn check_gradients(trials: usize, seed: u64, tol: f64) -> Result<CheckResult> {
    let violations = run_trials(trials, |i| {
        let mut rng = substream(derive_seed(seed, TAG_GRADIENTS, i as u64), 0);
        let d = rng.random_range(1..=4);
        let n = rng.random_range(2..=6);
        let proj = sample_directions(d, GRADIENT_PROJECTIONS, rng.random())?;
        let check = if i % 2 == 0 {
            let p = rng.random_range(2..=4);
            let set = tie_free_set(&mut rng, p, n, d, &proj)?;
            let beta = random_weights(&mut rng, p)?;
            let all: Vec<usize> = (0..p).collect();
            let (_, grad) = smw_grad(&set, &beta, &proj, &all)?;
            finite_diff_check(
                |s| {
                    smw_squared(s, &beta, &proj)
                        .expect("valid instance")
                        .estimate
                },
                &set,
                &grad,
                FD_STEP,
            )
        } else {
            let set = tie_free_set(&mut rng, 2, n, d, &proj)?;
            let (_, grad) = sw_grad(set.get(0), set.get(1), &proj, PairWrt::Both)?;
            finite_diff_check(
                |s| {
                    sw_squared(s.get(0), s.get(1), &proj)
                        .expect("valid instance")
                        .estimate
                },
                &set,
                &grad,
                FD_STEP,
            )
        };
        Ok(check.max_rel_error)
    })?;
    Ok(CheckResult::new(
        "gradients",
        CheckKind::Exact,
        &violations,
        tol,
    ))
}

/// Parameters of [`run_suite`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteConfig {
    pub trials: usize,
    pub max_n: usize,
    pub max_p: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            trials: 500,
            max_n: 6,
            max_p: 4,
            seed: 0,
        }
    }
}

/// Every check with its default tolerance.
pub fn run_suite(config: SuiteConfig) -> Result<VerifyReport> {
    let start = Instant::now();
    let SuiteConfig {
        trials,
        max_n,
        max_p,
        seed,
    } = config;
    let mut checks = vec![
        check_oracle_equivalence(trials, max_n, max_p, seed, 1e-9)?,
        check_pairwise_reduction(trials, seed, 1e-12)?,
    ];
    checks.extend(check_metric_axioms(MetricSpace::Mw1d, trials, seed, 1e-9)?);
    checks.extend(check_metric_axioms(MetricSpace::Smw, trials, seed, 1e-9)?);
    checks.push(check_gradients(trials, seed, 1e-5)?);
    Ok(VerifyReport {
        checks,
        seed,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
