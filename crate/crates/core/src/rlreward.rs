//! Multi-task reward shaping from recorded trajectories.
//!
//! Each agent's trajectory is treated as a uniform measure over its `T`
//! states. Under direction `θ_k`, agent `p`'s state at time `t` is aligned
//! with the state of agent `j` holding the same sorted rank, `η_{p,j,k}(t)`.
//! The per-step multi-task reward is
//!
//! ```text
//! r_{t,p} = 1/(P K) Σ_k | <x_t^(p) − (1/P) Σ_j x^(j)_{η_{p,j,k}(t)}, θ_k> |²
//! ```
//!
//! and the shaped reward is `R_p(x_t) = r_p(x_t) + γ f(r_{t,p})`.
//! Summing `r_{t,p}` over agents and time gives `T` times the SMW² estimate
//! of the trajectory measures under the same directions.

use std::path::Path;

use crate::error::{Result, SmwError};
use crate::exec::{chunked_fold, Execution};
use crate::io::load_measure_auto;
use crate::measures::{dot, project_into, validate_set, DiscreteMeasure};
use crate::ot1d::argsort_into;
use crate::slicing::ProjectionSet;

/// State trajectories of `P` agents, each `T x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    states: Vec<DiscreteMeasure>,
}

impl TrajectoryBatch {
    pub fn new(states: Vec<DiscreteMeasure>) -> Result<Self> {
        if states.is_empty() {
            return Err(SmwError::invalid("a batch needs at least one agent"));
        }
        validate_set(&states)?;
        Ok(Self { states })
    }

    /// One measure file per agent, `T` rows of `d` columns.
    pub fn load<P: AsRef<Path>>(paths: &[P]) -> Result<Self> {
        Self::new(paths.iter().map(load_measure_auto).collect::<Result<_>>()?)
    }

    pub fn p_count(&self) -> usize {
        self.states.len()
    }

    pub fn horizon(&self) -> usize {
        self.states[0].n_atoms()
    }

    pub fn dim(&self) -> usize {
        self.states[0].dim()
    }

    pub fn agent(&self, p: usize) -> &DiscreteMeasure {
        &self.states[p]
    }

    pub fn agents(&self) -> &[DiscreteMeasure] {
        &self.states
    }

    /// Agents reordered so that new agent `i` is old agent `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            states: perm.iter().map(|&i| self.states[i].clone()).collect(),
        }
    }

    /// Same batch with every trajectory reversed in time.
    pub fn time_reversed(&self) -> Self {
        let states = self
            .states
            .iter()
            .map(|m| {
                let rows: Vec<&[f64]> = m.rows().rev().collect();
                DiscreteMeasure::from_rows(&rows).expect("same shape")
            })
            .collect();
        Self { states }
    }
}

/// Shaping function applied to the multi-task reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardScale {
    /// `f(y) = −y`.
    Neg,
    /// `f(y) = exp(−rate · y)`; the usual rate is 5.
    Exp { rate: f64 },
}

impl RewardScale {
    pub const DEFAULT_EXP_RATE: f64 = 5.0;

    pub fn exp() -> Self {
        RewardScale::Exp {
            rate: Self::DEFAULT_EXP_RATE,
        }
    }

    pub fn apply(self, y: f64) -> f64 {
        match self {
            RewardScale::Neg => -y,
            RewardScale::Exp { rate } => (-rate * y).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub gamma: f64,
    pub scale: RewardScale,
    pub projections: ProjectionSet,
}

/// Alignment indices, `K x P x P x T`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaIndices {
    k_count: usize,
    p_count: usize,
    horizon: usize,
    data: Vec<usize>,
}

impl EtaIndices {
    /// Time index of agent `j`'s state aligned with agent `p`'s state at
    /// time `t` under direction `k`.
    pub fn get(&self, k: usize, p: usize, j: usize, t: usize) -> usize {
        self.data[((k * self.p_count + p) * self.p_count + j) * self.horizon + t]
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.k_count, self.p_count, self.p_count, self.horizon)
    }
}

/// Projected trajectories, their stable sort orders and the inverse ranks
/// for one direction.
struct Aligned {
    projected: Vec<Vec<f64>>,
    order: Vec<Vec<usize>>,
    ranks: Vec<Vec<usize>>,
}

impl Aligned {
    fn new(p: usize) -> Self {
        Self {
            projected: vec![Vec::new(); p],
            order: vec![Vec::new(); p],
            ranks: vec![Vec::new(); p],
        }
    }

    fn fill(&mut self, batch: &TrajectoryBatch, theta: &[f64]) {
        let dim = batch.dim();
        for (p, m) in batch.states.iter().enumerate() {
            project_into(m.atoms(), dim, theta, &mut self.projected[p]);
            argsort_into(&self.projected[p], &mut self.order[p]);
            let ranks = &mut self.ranks[p];
            ranks.clear();
            ranks.resize(self.order[p].len(), 0);
            for (r, &t) in self.order[p].iter().enumerate() {
                ranks[t] = r;
            }
        }
    }
}

fn check_projections(batch: &TrajectoryBatch, projections: &ProjectionSet) -> Result<()> {
    projections.check_dim(batch.dim())
}

/// Alignment indices for every direction, agent pair and time step.
pub fn eta_indices(batch: &TrajectoryBatch, projections: &ProjectionSet) -> Result<EtaIndices> {
    check_projections(batch, projections)?;
    let (p_count, horizon) = (batch.p_count(), batch.horizon());
    let mut data = Vec::with_capacity(projections.k_count() * p_count * p_count * horizon);
    let mut aligned = Aligned::new(p_count);
    for theta in projections.directions() {
        aligned.fill(batch, theta);
        for p in 0..p_count {
            for j in 0..p_count {
                data.extend(aligned.ranks[p].iter().map(|&rank| aligned.order[j][rank]));
            }
        }
    }
    Ok(EtaIndices {
        k_count: projections.k_count(),
        p_count,
        horizon,
        data,
    })
}

/// `r_{t,p}` for one agent and time step, evaluated literally from the
/// alignment indices and the state difference vectors.
pub fn multitask_reward(
    batch: &TrajectoryBatch,
    p: usize,
    t: usize,
    projections: &ProjectionSet,
) -> Result<f64> {
    if p >= batch.p_count() || t >= batch.horizon() {
        return Err(SmwError::IndexOutOfRange(format!(
            "agent {p}, time {t} in a batch of {} agents, horizon {}",
            batch.p_count(),
            batch.horizon()
        )));
    }
    let eta = eta_indices(batch, projections)?;
    Ok(reward_from_eta(batch, &eta, p, t, projections))
}

fn reward_from_eta(
    batch: &TrajectoryBatch,
    eta: &EtaIndices,
    p: usize,
    t: usize,
    projections: &ProjectionSet,
) -> f64 {
    let p_count = batch.p_count();
    let dim = batch.dim();
    let x = batch.agent(p).atom(t);
    let mut diff = vec![0.0; dim];
    let mut total = 0.0;
    for (k, theta) in projections.directions().enumerate() {
        diff.copy_from_slice(x);
        for j in 0..p_count {
            let y = batch.agent(j).atom(eta.get(k, p, j, t));
            diff.iter_mut()
                .zip(y)
                .for_each(|(d, v)| *d -= v / p_count as f64);
        }
        let ip = dot(&diff, theta);
        total += ip * ip;
    }
    total / (p_count * projections.k_count()) as f64
}

/// All `r_{t,p}` as a `P x T` matrix, computed per direction from the
/// rank-wise means of the sorted projections.
pub fn multitask_rewards(
    batch: &TrajectoryBatch,
    projections: &ProjectionSet,
) -> Result<Vec<Vec<f64>>> {
    multitask_rewards_with(batch, projections, Execution::default())
}

pub fn multitask_rewards_with(
    batch: &TrajectoryBatch,
    projections: &ProjectionSet,
    exec: Execution,
) -> Result<Vec<Vec<f64>>> {
    check_projections(batch, projections)?;
    let (p_count, horizon) = (batch.p_count(), batch.horizon());
    let norm = 1.0 / (p_count * projections.k_count()) as f64;
    let out = chunked_fold(
        exec,
        projections.k_count(),
        || vec![vec![0.0; horizon]; p_count],
        || (Aligned::new(p_count), vec![0.0; horizon]),
        |acc, (aligned, center), k| {
            aligned.fill(batch, projections.direction(k));
            for (r, c) in center.iter_mut().enumerate() {
                *c = (0..p_count)
                    .map(|j| aligned.projected[j][aligned.order[j][r]])
                    .sum::<f64>()
                    / p_count as f64;
            }
            for (p, row) in acc.iter_mut().enumerate() {
                for (t, v) in row.iter_mut().enumerate() {
                    let dev = aligned.projected[p][t] - center[aligned.ranks[p][t]];
                    *v += norm * dev * dev;
                }
            }
        },
        |acc, part| {
            for (a, b) in acc.iter_mut().zip(part) {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        },
    );
    Ok(out)
}

/// Shaped rewards `R = r_canonical + γ f(r_{t,p})`, `P x T`.
pub fn composite_reward(
    batch: &TrajectoryBatch,
    canonical: &[Vec<f64>],
    config: &RewardConfig,
) -> Result<Vec<Vec<f64>>> {
    if canonical.len() != batch.p_count() {
        return Err(SmwError::Shape {
            row: canonical.len(),
            expected: batch.p_count(),
            found: canonical.len(),
        });
    }
    if let Some((row, r)) = canonical
        .iter()
        .enumerate()
        .find(|(_, r)| r.len() != batch.horizon())
    {
        return Err(SmwError::Shape {
            row,
            expected: batch.horizon(),
            found: r.len(),
        });
    }
    if !(config.gamma.is_finite() && config.gamma >= 0.0) {
        return Err(SmwError::invalid("gamma must be finite and non-negative"));
    }
    check_projections(batch, &config.projections)?;
    if config.gamma == 0.0 {
        return Ok(canonical.to_vec());
    }
    let shaped = multitask_rewards(batch, &config.projections)?;
    Ok(canonical
        .iter()
        .zip(shaped)
        .map(|(base, mt)| {
            base.iter()
                .zip(mt)
                .map(|(r, y)| r + config.gamma * config.scale.apply(y))
                .collect()
        })
        .collect())
}
