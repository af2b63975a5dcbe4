use super::{
    batch_indices, gather, jitter, scatter_step, SolveTrace, SolverConfig, TAG_BATCH, TAG_INIT,
};
use crate::error::{Result, SmwError};
use crate::gradients::{smw_value_grad_raw, sw_value_grad_raw};
use crate::measures::{DiscreteMeasure, MeasureSet};
use crate::rng::{derive_seed, substream};
use crate::slicing::{sw_squared, ProjectionSet};

/// Initial model for each task: Gaussian atoms matching the task's
/// per-axis mean and standard deviation. Task `p` only reads `targets[p]`.
pub fn mtde_init(
    targets: &MeasureSet,
    model_atoms: usize,
    seed: u64,
) -> Result<Vec<DiscreteMeasure>> {
    if model_atoms == 0 {
        return Err(SmwError::invalid("model_atoms must be positive"));
    }
    let dim = targets.dim();
    targets
        .iter()
        .enumerate()
        .map(|(p, m)| {
            let mean = m.mean();
            let mut std = vec![0.0; dim];
            for row in m.rows() {
                for ((s, x), mu) in std.iter_mut().zip(row).zip(&mean) {
                    *s += (x - mu) * (x - mu);
                }
            }
            std.iter_mut()
                .for_each(|s| *s = (*s / m.n_atoms() as f64).sqrt().max(1e-3));
            let mut rng = substream(derive_seed(seed, TAG_INIT, p as u64), 0);
            let atoms = (0..model_atoms)
                .flat_map(|_| {
                    mean.iter()
                        .zip(&std)
                        .map(|(m, s)| m + jitter(&mut rng, *s))
                        .collect::<Vec<_>>()
                })
                .collect();
            DiscreteMeasure::new(atoms, dim)
        })
        .collect()
}

/// Multi-task density estimation: learns `ν₁..ν_P` minimizing
/// `Σ_p SW²(μ_p, ν_p) + γ SMW²(ν₁, .., ν_P)` (uniform weights) by joint
/// stochastic gradient steps. When atom counts differ, every step uses
/// equal-size minibatches of target and model atoms.
pub fn mtde_fit(
    targets: &MeasureSet,
    model_atoms: usize,
    gamma: f64,
    config: &SolverConfig,
) -> Result<SolveTrace> {
    let init = mtde_init(targets, model_atoms, config.seed)?;
    mtde_fit_from(targets, init, gamma, config)
}

/// [`mtde_fit`] from explicit initial models.
pub fn mtde_fit_from(
    targets: &MeasureSet,
    init: Vec<DiscreteMeasure>,
    gamma: f64,
    config: &SolverConfig,
) -> Result<SolveTrace> {
    config.validate()?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(SmwError::invalid("gamma must be finite and non-negative"));
    }
    if init.len() != targets.p_count() {
        return Err(SmwError::invalid(format!(
            "{} initial models for {} tasks",
            init.len(),
            targets.p_count()
        )));
    }
    let dim = targets.dim();
    let n_t = targets.n_atoms();
    let n_m = init[0].n_atoms();
    for m in &init {
        if m.dim() != dim {
            return Err(SmwError::DimensionMismatch {
                expected: dim,
                found: m.dim(),
            });
        }
        if m.n_atoms() != n_m {
            return Err(SmwError::AtomCountMismatch {
                expected: n_m,
                found: m.n_atoms(),
            });
        }
    }
    let batch = config.batch_for(n_m, n_t)?;
    let p_count = targets.p_count();
    let beta = vec![1.0 / p_count as f64; p_count];
    let all = vec![true; p_count];
    let target_atoms = targets.atom_slices();
    let mut models: Vec<Vec<f64>> = init.into_iter().map(DiscreteMeasure::into_atoms).collect();
    let mut trace = SolveTrace::new();

    for iter in 0..config.iters {
        let projections = config.projections_at(dim, iter)?;
        let batch_seed = derive_seed(config.seed, TAG_BATCH, iter as u64);
        let mut model_idx = Vec::with_capacity(p_count);
        let mut model_b = Vec::with_capacity(p_count);
        let mut grads = Vec::with_capacity(p_count);
        let mut objective = 0.0;
        for p in 0..p_count {
            let mut rng = substream(batch_seed, p as u64);
            let t_idx = batch_indices(&mut rng, n_t, batch);
            let m_idx = batch_indices(&mut rng, n_m, batch);
            let t_b = gather(target_atoms[p], dim, &t_idx);
            let m_b = gather(&models[p], dim, &m_idx);
            let (values, g) =
                sw_value_grad_raw(&t_b, &m_b, dim, &projections, &[false, true], config.exec);
            objective += values.iter().sum::<f64>() / values.len() as f64;
            grads.push(g.per_measure.into_iter().nth(1).expect("model gradient"));
            model_idx.push(m_idx);
            model_b.push(m_b);
        }
        if gamma > 0.0 {
            let refs: Vec<&[f64]> = model_b.iter().map(Vec::as_slice).collect();
            let (values, g) =
                smw_value_grad_raw(&refs, dim, &beta, &projections, &all, config.exec);
            objective += gamma * values.iter().sum::<f64>() / values.len() as f64;
            for (acc, extra) in grads.iter_mut().zip(g.per_measure) {
                acc.iter_mut().zip(extra).for_each(|(a, b)| *a += gamma * b);
            }
        }
        if config.should_log(iter) {
            trace.log(iter, objective);
        }
        let scale = config.step_at(iter) * batch as f64;
        for p in 0..p_count {
            scatter_step(&mut models[p], dim, &model_idx[p], &grads[p], scale);
        }
    }
    trace.final_measures = models
        .into_iter()
        .map(|m| DiscreteMeasure::new(m, dim))
        .collect::<Result<_>>()?;
    Ok(trace)
}

/// `Σ_p SW(μ_p, ν_p)`, the sum of (unsquared) sliced distances between each
/// learned measure and its reference.
pub fn multitask_score(
    learned: &[DiscreteMeasure],
    uncorrupted: &MeasureSet,
    projections: &ProjectionSet,
) -> Result<f64> {
    if learned.len() != uncorrupted.p_count() {
        return Err(SmwError::invalid(format!(
            "{} learned measures for {} references",
            learned.len(),
            uncorrupted.p_count()
        )));
    }
    learned
        .iter()
        .zip(uncorrupted)
        .map(|(nu, mu)| Ok(sw_squared(mu, nu, projections)?.estimate.sqrt()))
        .sum()
}
