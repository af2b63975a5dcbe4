//! Timing and variance harnesses for SMW² over sample count, measure count
//! and projection count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Result, SmwError};
use crate::exec::Execution;
use crate::measures::{generate_gaussians, SimplexWeights};
use crate::slicing::{sample_directions, smw_squared_with, variance_profile_with, VarianceRow};

/// Spread of the Gaussian means used for benchmark measures.
const MEAN_SPREAD: f64 = 5.0;
const SIGMA: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    /// Grid values are atom counts `N`.
    Samples,
    /// Grid values are measure counts `P`.
    Measures,
    /// Grid values are projection counts `K`; reports estimator spread.
    Projections,
}

impl FromStr for BenchMode {
    type Err = SmwError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "samples" => Ok(BenchMode::Samples),
            "measures" => Ok(BenchMode::Measures),
            "projections" => Ok(BenchMode::Projections),
            _ => Err(SmwError::invalid(format!(
                "unknown mode {s:?}, expected samples, measures or projections"
            ))),
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Samples => "samples",
            BenchMode::Measures => "measures",
            BenchMode::Projections => "projections",
        })
    }
}

/// Fixed sizes; the one selected by the mode is replaced by each grid value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub p_count: usize,
    pub n_atoms: usize,
    pub dim: usize,
    pub k_count: usize,
    pub repeats: usize,
    pub seed: u64,
    pub exec: Execution,
}

/// Wall-clock seconds of `smw_squared` at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub axis: usize,
    pub median_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    pub p: usize,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub repeats: usize,
}

impl BenchRecord {
    pub const CSV_HEADER: &'static str = "axis,median_s,min_s,max_s,p,n,d,k,repeats";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{},{},{},{},{}",
            self.axis,
            self.median_s,
            self.min_s,
            self.max_s,
            self.p,
            self.n,
            self.d,
            self.k,
            self.repeats
        )
    }
}

pub const VARIANCE_CSV_HEADER: &str = "k,mean,std";

pub fn variance_csv_row(row: &VarianceRow) -> String {
    format!("{},{:e},{:e}", row.k, row.mean, row.std)
}

/// Times `smw_squared` once for warm-up, then `repeats` more times, on
/// Gaussian measures of the given sizes.
pub fn time_smw(
    p: usize,
    n: usize,
    d: usize,
    k: usize,
    repeats: usize,
    seed: u64,
    exec: Execution,
) -> Result<BenchRecord> {
    if repeats < 3 {
        return Err(SmwError::invalid("timing needs at least 3 repeats"));
    }
    let set = generate_gaussians(p, n, d, MEAN_SPREAD, SIGMA, seed)?;
    let beta = SimplexWeights::uniform(p);
    let proj = sample_directions(d, k, seed)?;
    smw_squared_with(&set, &beta, &proj, exec)?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        std::hint::black_box(smw_squared_with(&set, &beta, &proj, exec)?);
        times.push(start.elapsed().as_secs_f64());
    }
    times.sort_unstable_by(f64::total_cmp);
    let median_s = if repeats % 2 == 1 {
        times[repeats / 2]
    } else {
        0.5 * (times[repeats / 2 - 1] + times[repeats / 2])
    };
    Ok(BenchRecord {
        axis: 0,
        median_s,
        min_s: times[0],
        max_s: times[repeats - 1],
        p,
        n,
        d,
        k,
        repeats,
    })
}

/// Timing records along `grid` for the samples or measures mode.
pub fn scaling_sweep(
    mode: BenchMode,
    grid: &[usize],
    config: &BenchConfig,
) -> Result<Vec<BenchRecord>> {
    grid.iter()
        .map(|&v| {
            let (p, n) = match mode {
                BenchMode::Samples => (config.p_count, v),
                BenchMode::Measures => (v, config.n_atoms),
                BenchMode::Projections => {
                    return Err(SmwError::invalid(
                        "projections mode reports variance, not time",
                    ))
                }
            };
            let mut r = time_smw(
                p,
                n,
                config.dim,
                config.k_count,
                config.repeats,
                config.seed,
                config.exec,
            )?;
            r.axis = v;
            Ok(r)
        })
        .collect()
}

/// Mean and spread of the SMW² estimate over `config.repeats` independent
/// projection sets for each `K` in `grid`.
pub fn variance_sweep(grid: &[usize], config: &BenchConfig) -> Result<Vec<VarianceRow>> {
    let set = generate_gaussians(
        config.p_count,
        config.n_atoms,
        config.dim,
        MEAN_SPREAD,
        SIGMA,
        config.seed,
    )?;
    variance_profile_with(
        &set,
        &SimplexWeights::uniform(config.p_count),
        grid,
        config.repeats,
        config.seed,
        config.exec,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> BenchConfig {
        BenchConfig {
            p_count: 3,
            n_atoms: 64,
            dim: 2,
            k_count: 4,
            repeats: 3,
            seed: 1,
            exec: Execution::Sequential,
        }
    }

    #[test]
    fn sweep_records_each_grid_value() {
        let rows = scaling_sweep(BenchMode::Samples, &[16, 32], &config()).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.axis).collect::<Vec<_>>(),
            vec![16, 32]
        );
        assert!(rows
            .iter()
            .all(|r| r.min_s <= r.median_s && r.median_s <= r.max_s && r.min_s >= 0.0));
        assert_eq!(rows[1].n, 32);
        let rows = scaling_sweep(BenchMode::Measures, &[2, 4], &config()).unwrap();
        assert_eq!(rows[1].p, 4);
        assert_eq!(
            rows[1].csv_row().split(',').count(),
            BenchRecord::CSV_HEADER.split(',').count()
        );
    }

    #[test]
    fn too_few_repeats() {
        let c = BenchConfig {
            repeats: 2,
            ..config()
        };
        assert!(scaling_sweep(BenchMode::Samples, &[8], &c).is_err());
        assert!(scaling_sweep(BenchMode::Projections, &[8], &config()).is_err());
    }

    #[test]
    fn variance_shrinks_with_k() {
        let c = BenchConfig {
            repeats: 20,
            ..config()
        };
        let rows = variance_sweep(&[4, 64], &c).unwrap();
        assert!(rows[1].std < rows[0].std);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!(
            "measures".parse::<BenchMode>().unwrap(),
            BenchMode::Measures
        );
        assert!("bogus".parse::<BenchMode>().is_err());
        assert_eq!(BenchMode::Projections.to_string(), "projections");
    }
}
