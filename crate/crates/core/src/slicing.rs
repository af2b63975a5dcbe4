//! Monte-Carlo slicing: random directions on the sphere and the sliced
//! estimators
//!
//! ```text
//! SMW²_K = (1/K) Σ_k MW²(θ_k# μ₁, .., θ_k# μ_P)      SW²_K = (1/K) Σ_k W₂²(θ_k# μ, θ_k# ν)
//! ```
//!
//! The spherical volume factor is absorbed by the mean over directions.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Result, SmwError};
use crate::exec::{map_with_scratch, Execution};
use crate::measures::{check_unit, project_into, DiscreteMeasure, MeasureSet, SimplexWeights};
use crate::ot1d::{mw_sorted, sort_values, w2_sorted};
use crate::rng::{derive_seed, substream};

/// `K` unit directions in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    directions: Vec<f64>,
    k_count: usize,
    dim: usize,
    seed: Option<u64>,
}

impl ProjectionSet {
    /// Wraps explicit directions (row-major, `K * d` values). Each row must
    /// have unit norm.
    pub fn from_directions(directions: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || directions.is_empty() || !directions.len().is_multiple_of(dim) {
            return Err(SmwError::invalid(
                "directions must be a non-empty K x d row-major buffer",
            ));
        }
        for row in directions.chunks_exact(dim) {
            check_unit(row)?;
        }
        Ok(Self {
            k_count: directions.len() / dim,
            directions,
            dim,
            seed: None,
        })
    }

    pub fn k_count(&self) -> usize {
        self.k_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Seed the set was sampled from, `None` for explicit directions.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn direction(&self, k: usize) -> &[f64] {
        &self.directions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn directions(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.directions.chunks_exact(self.dim)
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim != dim {
            return Err(SmwError::DimensionMismatch {
                expected: dim,
                found: self.dim,
            });
        }
        Ok(())
    }
}

/// Mean of per-projection values with its Monte-Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceEstimate {
    pub estimate: f64,
    pub per_projection: Vec<f64>,
    /// Sample standard deviation over projections divided by `sqrt(K)`;
    /// zero when `K = 1`.
    pub std_error: f64,
    pub k_count: usize,
}

impl DistanceEstimate {
    pub fn from_per_projection(per_projection: Vec<f64>) -> Self {
        let k = per_projection.len();
        let estimate = per_projection.iter().sum::<f64>() / k as f64;
        let std_error = if k > 1 {
            let var = per_projection
                .iter()
                .map(|v| (v - estimate) * (v - estimate))
                .sum::<f64>()
                / (k - 1) as f64;
            (var / k as f64).sqrt()
        } else {
            0.0
        };
        Self {
            estimate,
            per_projection,
            std_error,
            k_count: k,
        }
    }
}

/// One uniform direction on `S^{d-1}` from stream `k` of `seed`.
fn sample_direction(dim: usize, seed: u64, k: u64, out: &mut Vec<f64>) {
    let mut rng = substream(seed, k);
    loop {
        out.clear();
        out.extend((0..dim).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        // A zero draw has probability zero; redraw from the same stream.
        if norm > 1e-300 {
            out.iter_mut().for_each(|x| *x /= norm);
            return;
        }
    }
}

/// `K` iid uniform directions on `S^{d-1}` by normalizing Gaussian draws.
/// Direction `k` depends only on `(seed, k)`.
pub fn sample_directions(dim: usize, k_count: usize, seed: u64) -> Result<ProjectionSet> {
    if dim == 0 || k_count == 0 {
        return Err(SmwError::invalid("dim and k_count must be positive"));
    }
    let mut directions = Vec::with_capacity(dim * k_count);
    let mut row = Vec::with_capacity(dim);
    for k in 0..k_count {
        sample_direction(dim, seed, k as u64, &mut row);
        directions.extend_from_slice(&row);
    }
    Ok(ProjectionSet {
        directions,
        k_count,
        dim,
        seed: Some(seed),
    })
}

/// Projects and sorts every measure along `θ`, filling `buffers`.
pub(crate) fn project_sorted(
    atoms: &[&[f64]],
    dim: usize,
    theta: &[f64],
    buffers: &mut [Vec<f64>],
) {
    for (buf, a) in buffers.iter_mut().zip(atoms) {
        project_into(a, dim, theta, buf);
        sort_values(buf);
    }
}

/// Per-projection MW² values for raw atom buffers of equal shape.
pub(crate) fn smw_per_projection(
    atoms: &[&[f64]],
    dim: usize,
    beta: &[f64],
    projections: &ProjectionSet,
    exec: Execution,
) -> Vec<f64> {
    let p = atoms.len();
    map_with_scratch(
        exec,
        projections.k_count(),
        || vec![Vec::new(); p],
        |buffers, k| {
            project_sorted(atoms, dim, projections.direction(k), buffers);
            let refs: Vec<&[f64]> = buffers.iter().map(Vec::as_slice).collect();
            mw_sorted(&refs, beta)
        },
    )
}

/// Monte-Carlo estimate of the squared sliced multi-marginal distance.
pub fn smw_squared(
    set: &MeasureSet,
    beta: &SimplexWeights,
    projections: &ProjectionSet,
) -> Result<DistanceEstimate> {
    smw_squared_with(set, beta, projections, Execution::default())
}

pub fn smw_squared_with(
    set: &MeasureSet,
    beta: &SimplexWeights,
    projections: &ProjectionSet,
    exec: Execution,
) -> Result<DistanceEstimate> {
    projections.check_dim(set.dim())?;
    beta.check_len(set.p_count())?;
    let atoms = set.atom_slices();
    let per = smw_per_projection(&atoms, set.dim(), beta.as_slice(), projections, exec);
    Ok(DistanceEstimate::from_per_projection(per))
}

/// Monte-Carlo estimate of the squared sliced Wasserstein distance.
pub fn sw_squared(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    projections: &ProjectionSet,
) -> Result<DistanceEstimate> {
    sw_squared_with(mu, nu, projections, Execution::default())
}

pub fn sw_squared_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    projections: &ProjectionSet,
    exec: Execution,
) -> Result<DistanceEstimate> {
    check_pair(mu, nu, projections)?;
    let atoms = [mu.atoms(), nu.atoms()];
    let dim = mu.dim();
    let per = map_with_scratch(
        exec,
        projections.k_count(),
        || vec![Vec::new(); 2],
        |buffers, k| {
            project_sorted(&atoms, dim, projections.direction(k), buffers);
            w2_sorted(&buffers[0], &buffers[1])
        },
    );
    Ok(DistanceEstimate::from_per_projection(per))
}

pub(crate) fn check_pair(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    projections: &ProjectionSet,
) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(SmwError::DimensionMismatch {
            expected: mu.dim(),
            found: nu.dim(),
        });
    }
    if mu.n_atoms() != nu.n_atoms() {
        return Err(SmwError::AtomCountMismatch {
            expected: mu.n_atoms(),
            found: nu.n_atoms(),
        });
    }
    projections.check_dim(mu.dim())
}

/// Spread of the SMW² estimator at one projection count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceRow {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
}

/// For each `K`, draws `repeats` independent projection sets and reports the
/// mean and sample standard deviation of the resulting estimates.
pub fn variance_profile(
    set: &MeasureSet,
    beta: &SimplexWeights,
    k_values: &[usize],
    repeats: usize,
    seed: u64,
) -> Result<Vec<VarianceRow>> {
    variance_profile_with(set, beta, k_values, repeats, seed, Execution::default())
}

pub fn variance_profile_with(
    set: &MeasureSet,
    beta: &SimplexWeights,
    k_values: &[usize],
    repeats: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<VarianceRow>> {
    if k_values.is_empty() || repeats < 2 || k_values.contains(&0) {
        return Err(SmwError::invalid(
            "need non-empty positive k_values and at least 2 repeats",
        ));
    }
    k_values
        .iter()
        .map(|&k| {
            let estimates = (0..repeats)
                .map(|r| {
                    let proj =
                        sample_directions(set.dim(), k, derive_seed(seed, k as u64, r as u64))?;
                    Ok(smw_squared_with(set, beta, &proj, exec)?.estimate)
                })
                .collect::<Result<Vec<f64>>>()?;
            let mean = estimates.iter().sum::<f64>() / repeats as f64;
            let var = estimates
                .iter()
                .map(|e| (e - mean) * (e - mean))
                .sum::<f64>()
                / (repeats - 1) as f64;
            Ok(VarianceRow {
                k,
                mean,
                std: var.sqrt(),
            })
        })
        .collect()
}
