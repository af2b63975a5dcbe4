use rand::Rng;

use super::{
    batch_indices, coordinate_spread, gather, jitter, scatter_step, SolveTrace, SolverConfig,
    TAG_BATCH, TAG_INIT,
};
use crate::error::{Result, SmwError};
use crate::exec::Execution;
use crate::gradients::{smw_value_grad_raw, sw_value_grad_raw};
use crate::measures::{DiscreteMeasure, MeasureSet};
use crate::rng::{derive_seed, substream};
use crate::slicing::ProjectionSet;

/// Objective minimized over the free measure `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarycenterObjective {
    /// `SMW²(μ, μ₁, .., μ_P)` with uniform weights over the `P + 1` arguments.
    MultiMarginal,
    /// `(1/P) Σ_p SW²(μ, μ_p)`.
    Pairwise,
}

/// Objective value and mass-unnormalized gradient with respect to `mu` on
/// raw buffers of equal atom count.
fn value_grad(
    mu: &[f64],
    targets: &[&[f64]],
    dim: usize,
    projections: &ProjectionSet,
    objective: BarycenterObjective,
    exec: Execution,
) -> (f64, Vec<f64>) {
    match objective {
        BarycenterObjective::MultiMarginal => {
            let mut atoms = Vec::with_capacity(targets.len() + 1);
            atoms.push(mu);
            atoms.extend_from_slice(targets);
            let beta = vec![1.0 / atoms.len() as f64; atoms.len()];
            let mut wrt = vec![false; atoms.len()];
            wrt[0] = true;
            let (values, grad) = smw_value_grad_raw(&atoms, dim, &beta, projections, &wrt, exec);
            let value = values.iter().sum::<f64>() / values.len() as f64;
            (
                value,
                grad.per_measure.into_iter().next().expect("free measure"),
            )
        }
        BarycenterObjective::Pairwise => {
            let p = targets.len() as f64;
            let mut total = 0.0;
            let mut grad = vec![0.0; mu.len()];
            for t in targets {
                let (values, g) = sw_value_grad_raw(mu, t, dim, projections, &[true, false], exec);
                total += values.iter().sum::<f64>() / values.len() as f64;
                grad.iter_mut()
                    .zip(&g.per_measure[0])
                    .for_each(|(a, b)| *a += b / p);
            }
            (total / p, grad)
        }
    }
}

/// Objective value and gradient with respect to `mu` for a fixed projection
/// set. `mu` must have as many atoms as the targets.
pub fn barycenter_gradient(
    mu: &DiscreteMeasure,
    targets: &MeasureSet,
    projections: &ProjectionSet,
    objective: BarycenterObjective,
) -> Result<(f64, Vec<f64>)> {
    if mu.dim() != targets.dim() {
        return Err(SmwError::DimensionMismatch {
            expected: targets.dim(),
            found: mu.dim(),
        });
    }
    if mu.n_atoms() != targets.n_atoms() {
        return Err(SmwError::AtomCountMismatch {
            expected: targets.n_atoms(),
            found: mu.n_atoms(),
        });
    }
    projections.check_dim(mu.dim())?;
    Ok(value_grad(
        mu.atoms(),
        &targets.atom_slices(),
        mu.dim(),
        projections,
        objective,
        Execution::default(),
    ))
}

/// Atoms drawn from the pooled target atoms plus Gaussian jitter of 1% of
/// the coordinate spread.
fn pooled_init(targets: &MeasureSet, n_atoms: usize, seed: u64) -> Result<DiscreteMeasure> {
    if n_atoms == 0 {
        return Err(SmwError::invalid("n_atoms must be positive"));
    }
    let dim = targets.dim();
    let pooled: Vec<f64> = targets
        .iter()
        .flat_map(|m| m.atoms().iter().copied())
        .collect();
    let total = pooled.len() / dim;
    let mut spread = coordinate_spread(&pooled);
    if spread == 0.0 {
        spread = 1.0;
    }
    let mut rng = substream(derive_seed(seed, TAG_INIT, 0), 0);
    let picks: Vec<usize> = if n_atoms <= total {
        batch_indices(&mut rng, total, n_atoms)
    } else {
        (0..n_atoms).map(|_| rng.random_range(0..total)).collect()
    };
    let mut atoms = gather(&pooled, dim, &picks);
    for x in atoms.iter_mut() {
        *x += jitter(&mut rng, 1e-2 * spread);
    }
    DiscreteMeasure::new(atoms, dim)
}

fn solve(
    targets: &MeasureSet,
    init: DiscreteMeasure,
    config: &SolverConfig,
    objective: BarycenterObjective,
) -> Result<SolveTrace> {
    config.validate()?;
    let dim = targets.dim();
    if init.dim() != dim {
        return Err(SmwError::DimensionMismatch {
            expected: dim,
            found: init.dim(),
        });
    }
    let n_mu = init.n_atoms();
    let n_t = targets.n_atoms();
    let batch = config.batch_for(n_mu, n_t)?;
    let full = batch == n_mu && batch == n_t;
    let target_atoms = targets.atom_slices();
    let mut mu = init.into_atoms();
    let mut trace = SolveTrace::new();

    for iter in 0..config.iters {
        let projections = config.projections_at(dim, iter)?;
        let (value, grad, mu_idx) = if full {
            let (v, g) = value_grad(
                &mu,
                &target_atoms,
                dim,
                &projections,
                objective,
                config.exec,
            );
            (v, g, (0..n_mu).collect::<Vec<_>>())
        } else {
            let mut rng = substream(derive_seed(config.seed, TAG_BATCH, iter as u64), 0);
            let mu_idx = batch_indices(&mut rng, n_mu, batch);
            let mu_b = gather(&mu, dim, &mu_idx);
            let t_b: Vec<Vec<f64>> = target_atoms
                .iter()
                .map(|t| gather(t, dim, &batch_indices(&mut rng, n_t, batch)))
                .collect();
            let t_refs: Vec<&[f64]> = t_b.iter().map(Vec::as_slice).collect();
            let (v, g) = value_grad(&mu_b, &t_refs, dim, &projections, objective, config.exec);
            (v, g, mu_idx)
        };
        if config.should_log(iter) {
            trace.log(iter, value);
        }
        scatter_step(
            &mut mu,
            dim,
            &mu_idx,
            &grad,
            config.step_at(iter) * batch as f64,
        );
    }
    trace.final_measures = vec![DiscreteMeasure::new(mu, dim)?];
    Ok(trace)
}

/// Free-support barycenter by minimizing `SMW²(μ, μ₁, .., μ_P)` over `μ`.
pub fn barycenter_solve(
    targets: &MeasureSet,
    n_atoms: usize,
    config: &SolverConfig,
) -> Result<SolveTrace> {
    let init = pooled_init(targets, n_atoms, config.seed)?;
    solve(targets, init, config, BarycenterObjective::MultiMarginal)
}

/// [`barycenter_solve`] from a given initial measure.
pub fn barycenter_solve_from(
    targets: &MeasureSet,
    init: DiscreteMeasure,
    config: &SolverConfig,
) -> Result<SolveTrace> {
    solve(targets, init, config, BarycenterObjective::MultiMarginal)
}

/// Free-support barycenter of the pairwise objective `(1/P) Σ_p SW²(μ, μ_p)`.
pub fn pairwise_barycenter_solve(
    targets: &MeasureSet,
    n_atoms: usize,
    config: &SolverConfig,
) -> Result<SolveTrace> {
    let init = pooled_init(targets, n_atoms, config.seed)?;
    solve(targets, init, config, BarycenterObjective::Pairwise)
}

pub fn pairwise_barycenter_solve_from(
    targets: &MeasureSet,
    init: DiscreteMeasure,
    config: &SolverConfig,
) -> Result<SolveTrace> {
    solve(targets, init, config, BarycenterObjective::Pairwise)
}
