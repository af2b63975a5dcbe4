//! Analytic gradients of the sliced estimators with respect to atom
//! coordinates, and a central finite-difference checker.
//!
//! With ranks fixed by the (stable) sort along `θ_k`, the SMW² estimator is a
//! quadratic in the atoms. Atom `n` of measure `p` sitting at rank `i` gets
//!
//! ```text
//! ∂/∂x_n  +=  2 β_p / (N K) · (<x_n, θ_k> − b_i) · θ_k,      b_i = Σ_j β_j x̃_i^(j)
//! ```
//!
//! At sorting ties this is the subgradient selected by the stable order.

use crate::error::{Result, SmwError};
use crate::exec::{chunked_fold, Execution};
use crate::measures::{project_into, DiscreteMeasure, MeasureSet, SimplexWeights};
use crate::ot1d::argsort_into;
use crate::slicing::{check_pair, DistanceEstimate, ProjectionSet};

/// Per-measure gradients, each `N x d` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub per_measure: Vec<Vec<f64>>,
    /// Measures the gradient was taken with respect to. Entries of the
    /// others are zero.
    pub wrt: Vec<bool>,
    pub n_atoms: usize,
    pub dim: usize,
}

impl GradientField {
    pub fn zeros(p_count: usize, n_atoms: usize, dim: usize, wrt: Vec<bool>) -> Self {
        Self {
            per_measure: vec![vec![0.0; n_atoms * dim]; p_count],
            wrt,
            n_atoms,
            dim,
        }
    }

    pub fn get(&self, p: usize) -> &[f64] {
        &self.per_measure[p]
    }

    pub fn max_abs(&self) -> f64 {
        self.per_measure
            .iter()
            .flatten()
            .fold(0.0f64, |m, g| m.max(g.abs()))
    }

    /// Sum of the gradient over every atom of every measure, per axis.
    pub fn total(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.dim];
        for g in &self.per_measure {
            for row in g.chunks_exact(self.dim) {
                t.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
        }
        t
    }

    pub fn is_finite(&self) -> bool {
        self.per_measure.iter().flatten().all(|g| g.is_finite())
    }

    fn add(&mut self, other: GradientField) {
        for (a, b) in self.per_measure.iter_mut().zip(other.per_measure) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// Which arguments of the pairwise SW² to differentiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairWrt {
    First,
    Second,
    Both,
}

impl PairWrt {
    fn mask(self) -> Vec<bool> {
        match self {
            PairWrt::First => vec![true, false],
            PairWrt::Second => vec![false, true],
            PairWrt::Both => vec![true, true],
        }
    }
}

struct Scratch {
    projected: Vec<Vec<f64>>,
    order: Vec<Vec<usize>>,
}

impl Scratch {
    fn new(p: usize) -> Self {
        Self {
            projected: vec![Vec::new(); p],
            order: vec![Vec::new(); p],
        }
    }

    fn fill(&mut self, atoms: &[&[f64]], dim: usize, theta: &[f64]) {
        for ((buf, ord), a) in self.projected.iter_mut().zip(&mut self.order).zip(atoms) {
            project_into(a, dim, theta, buf);
            argsort_into(buf, ord);
        }
    }
}

struct Partial {
    values: Vec<f64>,
    grad: GradientField,
}

/// Value and gradient of the SMW² estimator on raw row-major buffers of
/// equal shape. Returns per-projection values and the gradient.
pub(crate) fn smw_value_grad_raw(
    atoms: &[&[f64]],
    dim: usize,
    beta: &[f64],
    projections: &ProjectionSet,
    wrt: &[bool],
    exec: Execution,
) -> (Vec<f64>, GradientField) {
    let p = atoms.len();
    let n = atoms[0].len() / dim;
    let k_count = projections.k_count();
    let scale = 2.0 / (n as f64 * k_count as f64);
    let out = chunked_fold(
        exec,
        k_count,
        || Partial {
            values: Vec::new(),
            grad: GradientField::zeros(p, n, dim, wrt.to_vec()),
        },
        || Scratch::new(p),
        |acc, s, k| {
            let theta = projections.direction(k);
            s.fill(atoms, dim, theta);
            let mut total = 0.0;
            for i in 0..n {
                let anchor = s.projected[0][s.order[0][i]];
                let b: f64 = (0..p)
                    .map(|q| beta[q] * (s.projected[q][s.order[q][i]] - anchor))
                    .sum();
                let mut rank_sum = 0.0;
                for q in 0..p {
                    let idx = s.order[q][i];
                    let dev = (s.projected[q][idx] - anchor) - b;
                    rank_sum += beta[q] * dev * dev;
                    if wrt[q] {
                        let c = scale * beta[q] * dev;
                        let row = &mut acc.grad.per_measure[q][idx * dim..(idx + 1) * dim];
                        row.iter_mut().zip(theta).for_each(|(g, t)| *g += c * t);
                    }
                }
                total += rank_sum;
            }
            acc.values.push(total / n as f64);
        },
        |acc, part| {
            acc.values.extend(part.values);
            acc.grad.add(part.grad);
        },
    );
    (out.values, out.grad)
}

/// Value and gradient of the pairwise SW² estimator on raw buffers.
pub(crate) fn sw_value_grad_raw(
    mu: &[f64],
    nu: &[f64],
    dim: usize,
    projections: &ProjectionSet,
    wrt: &[bool],
    exec: Execution,
) -> (Vec<f64>, GradientField) {
    let n = mu.len() / dim;
    let k_count = projections.k_count();
    let scale = 2.0 / (n as f64 * k_count as f64);
    let atoms = [mu, nu];
    let out = chunked_fold(
        exec,
        k_count,
        || Partial {
            values: Vec::new(),
            grad: GradientField::zeros(2, n, dim, wrt.to_vec()),
        },
        || Scratch::new(2),
        |acc, s, k| {
            let theta = projections.direction(k);
            s.fill(&atoms, dim, theta);
            let mut total = 0.0;
            for i in 0..n {
                let (a, b) = (s.order[0][i], s.order[1][i]);
                let diff = s.projected[0][a] - s.projected[1][b];
                total += diff * diff;
                let c = scale * diff;
                if wrt[0] {
                    let row = &mut acc.grad.per_measure[0][a * dim..(a + 1) * dim];
                    row.iter_mut().zip(theta).for_each(|(g, t)| *g += c * t);
                }
                if wrt[1] {
                    let row = &mut acc.grad.per_measure[1][b * dim..(b + 1) * dim];
                    row.iter_mut().zip(theta).for_each(|(g, t)| *g -= c * t);
                }
            }
            acc.values.push(total / n as f64);
        },
        |acc, part| {
            acc.values.extend(part.values);
            acc.grad.add(part.grad);
        },
    );
    (out.values, out.grad)
}

/// SMW² estimate and its gradient with respect to the measures listed in
/// `wrt` (0-based indices).
pub fn smw_grad(
    set: &MeasureSet,
    beta: &SimplexWeights,
    projections: &ProjectionSet,
    wrt: &[usize],
) -> Result<(DistanceEstimate, GradientField)> {
    smw_grad_with(set, beta, projections, wrt, Execution::default())
}

pub fn smw_grad_with(
    set: &MeasureSet,
    beta: &SimplexWeights,
    projections: &ProjectionSet,
    wrt: &[usize],
    exec: Execution,
) -> Result<(DistanceEstimate, GradientField)> {
    projections.check_dim(set.dim())?;
    beta.check_len(set.p_count())?;
    let mut mask = vec![false; set.p_count()];
    for &p in wrt {
        *mask.get_mut(p).ok_or_else(|| {
            SmwError::IndexOutOfRange(format!("measure {p} of {}", set.p_count()))
        })? = true;
    }
    let atoms = set.atom_slices();
    let (values, grad) =
        smw_value_grad_raw(&atoms, set.dim(), beta.as_slice(), projections, &mask, exec);
    Ok((DistanceEstimate::from_per_projection(values), grad))
}

/// SW² estimate and its gradient with respect to `mu`, `nu` or both.
pub fn sw_grad(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    projections: &ProjectionSet,
    wrt: PairWrt,
) -> Result<(DistanceEstimate, GradientField)> {
    sw_grad_with(mu, nu, projections, wrt, Execution::default())
}

pub fn sw_grad_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    projections: &ProjectionSet,
    wrt: PairWrt,
    exec: Execution,
) -> Result<(DistanceEstimate, GradientField)> {
    check_pair(mu, nu, projections)?;
    let (values, grad) = sw_value_grad_raw(
        mu.atoms(),
        nu.atoms(),
        mu.dim(),
        projections,
        &wrt.mask(),
        exec,
    );
    Ok((DistanceEstimate::from_per_projection(values), grad))
}

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Floor of the relative-error denominator.
pub const FD_DENOM_FLOOR: f64 = 1e-8;
/// Second differences above `TIE_CURVATURE_BOUND * h² * (1 + |f|)` are
/// reported as a probable sorting tie (a kink inside `[x − h, x + h]`).
pub const TIE_CURVATURE_BOUND: f64 = 1e3;

/// Outcome of [`finite_diff_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct FdCheck {
    pub max_rel_error: f64,
    /// `(measure, atom, axis)` of the worst coordinate.
    pub worst: Option<(usize, usize, usize)>,
    /// Set when a perturbation appears to cross a sorting tie.
    pub tie_warning: bool,
}

/// Compares `grad` with central differences `(f(x+h) − f(x−h)) / 2h` of
/// `objective`, coordinate by coordinate, over the measures flagged in
/// `grad.wrt`. Relative error uses `max(|analytic|, |numeric|, 1e-8)` as
/// denominator.
pub fn finite_diff_check<F>(objective: F, set: &MeasureSet, grad: &GradientField, h: f64) -> FdCheck
where
    F: Fn(&MeasureSet) -> f64,
{
    let f0 = objective(set);
    let mut measures = set.measures().to_vec();
    let mut report = FdCheck {
        max_rel_error: 0.0,
        worst: None,
        tie_warning: false,
    };
    let dim = set.dim();
    for p in 0..set.p_count() {
        if !grad.wrt.get(p).copied().unwrap_or(false) {
            continue;
        }
        let base = set.get(p).atoms().to_vec();
        for c in 0..base.len() {
            let eval = |delta: f64, measures: &mut Vec<DiscreteMeasure>| {
                let mut atoms = base.clone();
                atoms[c] += delta;
                measures[p] = DiscreteMeasure::new(atoms, dim).expect("finite perturbation");
                objective(&MeasureSet::new(measures.clone()).expect("shape preserved"))
            };
            let plus = eval(h, &mut measures);
            let minus = eval(-h, &mut measures);
            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grad.per_measure[p][c];
            let denom = analytic.abs().max(numeric.abs()).max(FD_DENOM_FLOOR);
            let err = (analytic - numeric).abs() / denom;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((p, c / dim, c % dim));
            }
            if (plus - 2.0 * f0 + minus).abs() > TIE_CURVATURE_BOUND * h * h * (1.0 + f0.abs()) {
                report.tie_warning = true;
            }
        }
        measures[p] = set.get(p).clone();
    }
    report
}

/// Smallest gap between projected atoms of the same measure over all
/// directions. Perturbations smaller than half of it cannot reorder atoms.
pub fn min_projected_gap(set: &MeasureSet, projections: &ProjectionSet) -> f64 {
    let mut gap = f64::INFINITY;
    let mut buf = Vec::new();
    for theta in projections.directions() {
        for m in set {
            project_into(m.atoms(), m.dim(), theta, &mut buf);
            buf.sort_unstable_by(f64::total_cmp);
            for w in buf.windows(2) {
                gap = gap.min(w[1] - w[0]);
            }
        }
    }
    gap
}
