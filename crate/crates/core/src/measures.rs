//! Uniform discrete measures on R^d.
//!
//! A [`DiscreteMeasure`] holds `N` atoms of dimension `d`, each carrying mass
//! `1/N`. Weights are never stored. A [`MeasureSet`] groups `P >= 2` measures
//! with a common `N` and `d`, which is what the multi-marginal kernels need.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Result, SmwError};
use crate::rng::substream;

/// Tolerance on `|θ| = 1` accepted by [`project`].
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Tolerance on `Σβ = 1` accepted by [`SimplexWeights::new`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Uniform discrete probability measure with `N` atoms in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    n_atoms: usize,
    dim: usize,
}

impl DiscreteMeasure {
    /// Builds a measure from row-major atom coordinates.
    pub fn new(atoms: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(SmwError::invalid("dimension must be at least 1"));
        }
        if atoms.is_empty() {
            return Err(SmwError::invalid("a measure needs at least one atom"));
        }
        if !atoms.len().is_multiple_of(dim) {
            return Err(SmwError::Shape {
                row: atoms.len() / dim,
                expected: dim,
                found: atoms.len() % dim,
            });
        }
        if let Some(pos) = atoms.iter().position(|x| !x.is_finite()) {
            return Err(SmwError::NonFinite {
                atom: pos / dim,
                axis: pos % dim,
            });
        }
        let n_atoms = atoms.len() / dim;
        Ok(Self {
            atoms,
            n_atoms,
            dim,
        })
    }

    /// One-dimensional measure from a list of points.
    pub fn from_points_1d(points: &[f64]) -> Result<Self> {
        Self::new(points.to_vec(), 1)
    }

    /// Builds a measure from a list of equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows
            .first()
            .map(|r| r.as_ref().len())
            .ok_or_else(|| SmwError::invalid("a measure needs at least one atom"))?;
        let mut atoms = Vec::with_capacity(rows.len() * dim);
        for (row, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(SmwError::Shape {
                    row,
                    expected: dim,
                    found: r.len(),
                });
            }
            atoms.extend_from_slice(r);
        }
        Self::new(atoms, dim)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major coordinates, `N * d` values.
    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[f64]> + ExactSizeIterator + '_ {
        self.atoms.chunks_exact(self.dim)
    }

    pub fn into_atoms(self) -> Vec<f64> {
        self.atoms
    }

    /// Same measure with every coordinate mapped through `f`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.atoms.iter().map(|&x| f(x)).collect(), self.dim)
    }

    /// Coordinate-wise mean of the atoms.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for row in self.rows() {
            for (acc, x) in m.iter_mut().zip(row) {
                *acc += x;
            }
        }
        let n = self.n_atoms as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }
}

/// Ordered collection of `P >= 2` measures sharing `N` and `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSet {
    measures: Vec<DiscreteMeasure>,
}

impl MeasureSet {
    pub fn new(measures: Vec<DiscreteMeasure>) -> Result<Self> {
        if measures.len() < 2 {
            return Err(SmwError::invalid(format!(
                "a measure set needs at least 2 measures, got {}",
                measures.len()
            )));
        }
        validate_set(&measures)?;
        Ok(Self { measures })
    }

    pub fn p_count(&self) -> usize {
        self.measures.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.measures[0].n_atoms
    }

    pub fn dim(&self) -> usize {
        self.measures[0].dim
    }

    pub fn measures(&self) -> &[DiscreteMeasure] {
        &self.measures
    }

    pub fn get(&self, p: usize) -> &DiscreteMeasure {
        &self.measures[p]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DiscreteMeasure> {
        self.measures.iter()
    }

    pub fn into_measures(self) -> Vec<DiscreteMeasure> {
        self.measures
    }

    pub(crate) fn atom_slices(&self) -> Vec<&[f64]> {
        self.measures.iter().map(|m| m.atoms()).collect()
    }
}

impl<'a> IntoIterator for &'a MeasureSet {
    type Item = &'a DiscreteMeasure;
    type IntoIter = std::slice::Iter<'a, DiscreteMeasure>;

    fn into_iter(self) -> Self::IntoIter {
        self.measures.iter()
    }
}

/// Checks that measures share dimension and atom count and hold only
/// finite coordinates.
pub fn validate_set(measures: &[DiscreteMeasure]) -> Result<()> {
    let Some(first) = measures.first() else {
        return Ok(());
    };
    for m in measures {
        if m.dim != first.dim {
            return Err(SmwError::DimensionMismatch {
                expected: first.dim,
                found: m.dim,
            });
        }
        if m.n_atoms != first.n_atoms {
            return Err(SmwError::AtomCountMismatch {
                expected: first.n_atoms,
                found: m.n_atoms,
            });
        }
        if let Some(pos) = m.atoms.iter().position(|x| !x.is_finite()) {
            return Err(SmwError::NonFinite {
                atom: pos / m.dim,
                axis: pos % m.dim,
            });
        }
    }
    Ok(())
}

/// Barycentric weights `β` on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexWeights {
    beta: Vec<f64>,
}

impl SimplexWeights {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(SmwError::InvalidWeights("empty weight vector".into()));
        }
        if let Some(b) = beta.iter().find(|b| !b.is_finite() || **b < 0.0) {
            return Err(SmwError::InvalidWeights(format!(
                "weights must be finite and non-negative, found {b}"
            )));
        }
        let total: f64 = beta.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(SmwError::InvalidWeights(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { beta })
    }

    pub fn uniform(p_count: usize) -> Self {
        assert!(p_count > 0, "uniform weights need at least one entry");
        Self {
            beta: vec![1.0 / p_count as f64; p_count],
        }
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.beta
    }

    /// True when every weight equals `1/P` up to rounding.
    pub fn is_uniform(&self) -> bool {
        let target = 1.0 / self.beta.len() as f64;
        self.beta.iter().all(|b| (b - target).abs() <= 1e-15)
    }

    /// Weights reordered by `perm`, i.e. entry `i` becomes `beta[perm[i]]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            beta: perm.iter().map(|&i| self.beta[i]).collect(),
        }
    }

    pub(crate) fn check_len(&self, p_count: usize) -> Result<()> {
        if self.beta.len() != p_count {
            return Err(SmwError::InvalidWeights(format!(
                "{} weights for {} measures",
                self.beta.len(),
                p_count
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_unit(direction: &[f64]) -> Result<()> {
    let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(SmwError::NonUnitDirection { norm });
    }
    Ok(())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Writes `<x_i, θ>` for every atom of a row-major buffer into `out`.
#[inline]
pub(crate) fn project_into(atoms: &[f64], dim: usize, direction: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend(atoms.chunks_exact(dim).map(|row| dot(row, direction)));
}

/// Pushes a measure forward along `θ`: atom `i` of the result is `<x_i, θ>`.
/// Atom order is preserved.
pub fn project(measure: &DiscreteMeasure, direction: &[f64]) -> Result<DiscreteMeasure> {
    if direction.len() != measure.dim {
        return Err(SmwError::DimensionMismatch {
            expected: measure.dim,
            found: direction.len(),
        });
    }
    check_unit(direction)?;
    let mut out = Vec::with_capacity(measure.n_atoms);
    project_into(&measure.atoms, measure.dim, direction, &mut out);
    DiscreteMeasure::new(out, 1)
}

/// `P` isotropic Gaussian clouds of `N` atoms in `R^d`. Each mean is drawn
/// uniformly from `[-mean_spread, mean_spread]^d`. Measure `p` uses its own
/// substream of `seed`.
pub fn generate_gaussians(
    p_count: usize,
    n_atoms: usize,
    dim: usize,
    mean_spread: f64,
    sigma: f64,
    seed: u64,
) -> Result<MeasureSet> {
    if p_count < 2 || n_atoms == 0 || dim == 0 {
        return Err(SmwError::invalid(format!(
            "need p_count >= 2 and positive n_atoms, dim (got {p_count}, {n_atoms}, {dim})"
        )));
    }
    if !(mean_spread.is_finite() && mean_spread >= 0.0 && sigma.is_finite() && sigma >= 0.0) {
        return Err(SmwError::invalid(
            "mean_spread and sigma must be finite and non-negative",
        ));
    }
    let measures = (0..p_count)
        .map(|p| {
            let mut rng = substream(seed, p as u64);
            let mean: Vec<f64> = if mean_spread > 0.0 {
                let u = Uniform::new_inclusive(-mean_spread, mean_spread)
                    .expect("finite non-empty range");
                (0..dim).map(|_| u.sample(&mut rng)).collect()
            } else {
                vec![0.0; dim]
            };
            let mut atoms = Vec::with_capacity(n_atoms * dim);
            for _ in 0..n_atoms {
                for m in &mean {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    atoms.push(m + sigma * z);
                }
            }
            DiscreteMeasure::new(atoms, dim)
        })
        .collect::<Result<Vec<_>>>()?;
    MeasureSet::new(measures)
}

/// Uniform draws from `[-1, 1]^d`, handy for tests and verification trials.
pub fn uniform_measure(rng: &mut impl Rng, n_atoms: usize, dim: usize) -> DiscreteMeasure {
    let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let atoms = (0..n_atoms * dim).map(|_| u.sample(rng)).collect();
    DiscreteMeasure::new(atoms, dim).expect("finite atoms")
}
