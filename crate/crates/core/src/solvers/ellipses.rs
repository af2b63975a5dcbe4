//! Synthetic nested-ellipse tasks with missing arcs.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Result, SmwError};
use crate::measures::{DiscreteMeasure, MeasureSet};
use crate::rng::substream;

/// Corrupted tasks together with their clean versions.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseTasks {
    pub corrupted: MeasureSet,
    pub clean: MeasureSet,
}

/// Ranges the per-task shape parameters are drawn from (uniformly).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseShape {
    /// Rotations lie in `[-max_rotation, max_rotation]`, radians.
    pub max_rotation: f64,
    pub major_axis: (f64, f64),
    pub minor_axis: (f64, f64),
    /// Inner ellipse axes relative to the outer ones.
    pub inner_scale: f64,
    /// Task centers lie in `[-center_spread, center_spread]²`.
    pub center_spread: f64,
}

impl Default for EllipseShape {
    fn default() -> Self {
        Self {
            max_rotation: PI / 8.0,
            major_axis: (0.8, 1.2),
            minor_axis: (0.4, 0.7),
            inner_scale: 0.5,
            center_spread: 1.0,
        }
    }
}

/// `P` tasks of two concentric ellipses in the plane, each with its own
/// center, rotation and axis lengths. The corrupted copy of a task drops a contiguous
/// angular arc holding `ceil(removal_fraction * N)` points and refills the
/// same number by resampling (with replacement) points outside the arc, so
/// every task keeps `N` atoms.
pub fn generate_corrupted_ellipses(
    p_count: usize,
    n_atoms: usize,
    removal_fraction: f64,
    seed: u64,
) -> Result<EllipseTasks> {
    generate_corrupted_ellipses_with(
        EllipseShape::default(),
        p_count,
        n_atoms,
        removal_fraction,
        seed,
    )
}

/// [`generate_corrupted_ellipses`] with explicit shape ranges.
pub fn generate_corrupted_ellipses_with(
    shape: EllipseShape,
    p_count: usize,
    n_atoms: usize,
    removal_fraction: f64,
    seed: u64,
) -> Result<EllipseTasks> {
    if p_count < 2 || n_atoms < 2 {
        return Err(SmwError::invalid("need at least 2 tasks and 2 atoms"));
    }
    if !(0.0..1.0).contains(&removal_fraction) {
        return Err(SmwError::invalid("removal_fraction must lie in [0, 1)"));
    }
    let removed = (removal_fraction * n_atoms as f64).ceil() as usize;
    if removed >= n_atoms {
        return Err(SmwError::invalid("removal leaves no points to resample"));
    }
    let mut clean = Vec::with_capacity(p_count);
    let mut corrupted = Vec::with_capacity(p_count);
    for p in 0..p_count {
        let mut rng = substream(seed, p as u64);
        let rotation = rng.random_range(-shape.max_rotation..=shape.max_rotation);
        let a = rng.random_range(shape.major_axis.0..=shape.major_axis.1);
        let b = rng.random_range(shape.minor_axis.0..=shape.minor_axis.1);
        let center = [
            rng.random_range(-shape.center_spread..=shape.center_spread),
            rng.random_range(-shape.center_spread..=shape.center_spread),
        ];
        let (s, c) = rotation.sin_cos();
        let n_outer = n_atoms.div_ceil(2);
        let mut angles = Vec::with_capacity(n_atoms);
        let mut atoms = Vec::with_capacity(2 * n_atoms);
        for i in 0..n_atoms {
            let t = rng.random_range(0.0..2.0 * PI);
            let scale = if i < n_outer { 1.0 } else { shape.inner_scale };
            let (x, y) = (scale * a * t.cos(), scale * b * t.sin());
            atoms.push(center[0] + c * x - s * y);
            atoms.push(center[1] + s * x + c * y);
            angles.push(t);
        }

        let mut corrupt = atoms.clone();
        if removed > 0 {
            let mut by_angle: Vec<usize> = (0..n_atoms).collect();
            by_angle.sort_unstable_by(|&i, &j| angles[i].total_cmp(&angles[j]).then(i.cmp(&j)));
            let start = rng.random_range(0..n_atoms);
            let mut gone = vec![false; n_atoms];
            for r in 0..removed {
                gone[by_angle[(start + r) % n_atoms]] = true;
            }
            let kept: Vec<usize> = (0..n_atoms).filter(|&i| !gone[i]).collect();
            for i in (0..n_atoms).filter(|&i| gone[i]) {
                let src = kept[rng.random_range(0..kept.len())];
                corrupt[2 * i] = atoms[2 * src];
                corrupt[2 * i + 1] = atoms[2 * src + 1];
            }
        }
        clean.push(DiscreteMeasure::new(atoms, 2)?);
        corrupted.push(DiscreteMeasure::new(corrupt, 2)?);
    }
    Ok(EllipseTasks {
        corrupted: MeasureSet::new(corrupted)?,
        clean: MeasureSet::new(clean)?,
    })
}
