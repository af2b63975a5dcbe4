//! Stochastic gradient solvers on free-atom measures.
//!
//! Learned measures are parametrized directly by their atoms. Each update
//! moves every atom against its mass-normalized gradient, `x -= lr * B * ∂F/∂x`
//! where `B` is the number of atoms in the evaluated batch, so the step size
//! does not depend on the atom count.

mod barycenter;
mod ellipses;
mod mtde;

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use barycenter::{
    barycenter_gradient, barycenter_solve, barycenter_solve_from, pairwise_barycenter_solve,
    pairwise_barycenter_solve_from, BarycenterObjective,
};
pub use ellipses::{
    generate_corrupted_ellipses, generate_corrupted_ellipses_with, EllipseShape, EllipseTasks,
};
pub use mtde::{mtde_fit, mtde_init, multitask_score};

use crate::error::{Result, SmwError};
use crate::exec::Execution;
use crate::io::{save_measure, Format};
use crate::measures::DiscreteMeasure;
use crate::rng::derive_seed;
use crate::slicing::{sample_directions, ProjectionSet};

const TAG_PROJECTIONS: u64 = 0x5052_4f4a;
const TAG_BATCH: u64 = 0x4241_5443;
const TAG_INIT: u64 = 0x494e_4954;

/// Hyperparameters shared by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub iters: usize,
    /// Step applied to the mass-normalized gradient.
    pub step_size: f64,
    /// Directions drawn per iteration when `fixed_projections` is `None`.
    pub k_per_step: usize,
    /// Minibatch atom count; `None` uses every atom when counts agree.
    pub batch: Option<usize>,
    pub seed: u64,
    pub log_every: usize,
    /// Cosine decay of the step from `step_size` to zero over `iters`.
    pub cosine_decay: bool,
    /// Use these directions at every iteration instead of resampling.
    pub fixed_projections: Option<ProjectionSet>,
    pub exec: Execution,
}

impl SolverConfig {
    /// Barycenter defaults: 50 directions per step.
    pub fn barycenter_defaults() -> Self {
        Self {
            iters: 500,
            step_size: 0.5,
            k_per_step: 50,
            batch: None,
            seed: 0,
            log_every: 10,
            cosine_decay: true,
            fixed_projections: None,
            exec: Execution::default(),
        }
    }

    /// Multi-task density estimation defaults: 20 directions, batches of 150.
    pub fn mtde_defaults() -> Self {
        Self {
            iters: 1000,
            step_size: 0.3,
            k_per_step: 20,
            batch: Some(150),
            seed: 0,
            log_every: 10,
            cosine_decay: true,
            fixed_projections: None,
            exec: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(SmwError::invalid("iters must be at least 1"));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(SmwError::invalid("step_size must be positive"));
        }
        if self.k_per_step == 0 {
            return Err(SmwError::invalid("k_per_step must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(SmwError::invalid("log_every must be at least 1"));
        }
        if self.batch == Some(0) {
            return Err(SmwError::invalid("batch must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn step_at(&self, iter: usize) -> f64 {
        if self.cosine_decay {
            self.step_size * 0.5 * (1.0 + (PI * iter as f64 / self.iters as f64).cos())
        } else {
            self.step_size
        }
    }

    pub(crate) fn projections_at(&self, dim: usize, iter: usize) -> Result<ProjectionSet> {
        match &self.fixed_projections {
            Some(ps) => {
                ps.check_dim(dim)?;
                Ok(ps.clone())
            }
            None => sample_directions(
                dim,
                self.k_per_step,
                derive_seed(self.seed, TAG_PROJECTIONS, iter as u64),
            ),
        }
    }

    /// Batch size for measures with `a` and `b` atoms.
    pub(crate) fn batch_for(&self, a: usize, b: usize) -> Result<usize> {
        let limit = a.min(b);
        match self.batch {
            Some(bs) if bs > limit => Err(SmwError::invalid(format!(
                "batch {bs} exceeds the smallest atom count {limit}"
            ))),
            Some(bs) => Ok(bs),
            None => Ok(limit),
        }
    }

    pub(crate) fn should_log(&self, iter: usize) -> bool {
        iter.is_multiple_of(self.log_every)
    }
}

/// Objective history and final learned measures.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub logged_iters: Vec<usize>,
    pub objective_history: Vec<f64>,
    pub final_measures: Vec<DiscreteMeasure>,
}

#[derive(Serialize)]
struct TraceRecord {
    iteration: usize,
    objective: f64,
}

impl SolveTrace {
    pub(crate) fn new() -> Self {
        Self {
            logged_iters: Vec::new(),
            objective_history: Vec::new(),
            final_measures: Vec::new(),
        }
    }

    pub(crate) fn log(&mut self, iter: usize, objective: f64) {
        self.logged_iters.push(iter);
        self.objective_history.push(objective);
    }

    /// Line-delimited `{"iteration", "objective"}` records.
    pub fn records_jsonl(&self) -> String {
        self.logged_iters
            .iter()
            .zip(&self.objective_history)
            .map(|(&iteration, &objective)| {
                serde_json::to_string(&TraceRecord {
                    iteration,
                    objective,
                })
                .expect("plain record")
                    + "\n"
            })
            .collect()
    }

    /// Writes `trace.jsonl` and `final_<p>.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| SmwError::io(dir, e))?;
        let trace = dir.join("trace.jsonl");
        fs::write(&trace, self.records_jsonl()).map_err(|e| SmwError::io(&trace, e))?;
        for (p, m) in self.final_measures.iter().enumerate() {
            save_measure(m, dir.join(format!("final_{p}.csv")), Format::Csv)?;
        }
        Ok(())
    }

    /// Median of the first and last 10% (at least one entry) of the history.
    pub fn head_tail_medians(&self) -> (f64, f64) {
        let h = &self.objective_history;
        let w = (h.len() / 10).max(1);
        (median(&h[..w]), median(&h[h.len() - w..]))
    }
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Indices of a minibatch of `size` out of `len` (all of them, in order,
/// when `size == len`).
pub(crate) fn batch_indices(rng: &mut ChaCha8Rng, len: usize, size: usize) -> Vec<usize> {
    if size >= len {
        (0..len).collect()
    } else {
        index::sample(rng, len, size).into_vec()
    }
}

pub(crate) fn gather(atoms: &[f64], dim: usize, idx: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        out.extend_from_slice(&atoms[i * dim..(i + 1) * dim]);
    }
    out
}

/// `atoms[idx[j]] -= scale * grad[j]` row-wise.
pub(crate) fn scatter_step(atoms: &mut [f64], dim: usize, idx: &[usize], grad: &[f64], scale: f64) {
    for (j, &i) in idx.iter().enumerate() {
        let row = &mut atoms[i * dim..(i + 1) * dim];
        row.iter_mut()
            .zip(&grad[j * dim..(j + 1) * dim])
            .for_each(|(x, g)| *x -= scale * g);
    }
}

/// Standard deviation of all coordinates, used to size initial jitter.
pub(crate) fn coordinate_spread(atoms: &[f64]) -> f64 {
    let n = atoms.len() as f64;
    let mean = atoms.iter().sum::<f64>() / n;
    (atoms.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

pub(crate) fn jitter(rng: &mut impl Rng, scale: f64) -> f64 {
    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
    scale * z
}
