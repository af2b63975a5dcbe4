//! Exact one-dimensional transport kernels.
//!
//! On uniform measures with equal atom counts the optimal multi-marginal
//! Monge maps are the permutations that sort each measure, so the squared
//! multi-marginal distance is a rank-wise weighted variance:
//!
//! ```text
//! MW²(μ₁..μ_P) = (1/N) Σ_i Σ_p β_p (x̃_i^(p) − b_i)²,   b_i = Σ_j β_j x̃_i^(j)
//! ```
//!
//! where `x̃^(p)` are the sorted atoms of `μ_p`. [`mw_squared_1d_oracle`]
//! recomputes the same quantity by minimizing over every coupling of atoms
//! and is used to certify the closed form.

use std::cmp::Ordering;

use crate::error::{Result, SmwError};
use crate::measures::{DiscreteMeasure, MeasureSet, SimplexWeights};

/// Sort permutation and sorted atoms of a 1D measure.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedView {
    /// `order[r]` is the original index of the atom at sorted rank `r`.
    pub order: Vec<usize>,
    pub sorted_atoms: Vec<f64>,
}

impl SortedView {
    /// Inverse of `order`: `ranks[i]` is the sorted rank of original atom `i`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut ranks = vec![0; self.order.len()];
        for (r, &i) in self.order.iter().enumerate() {
            ranks[i] = r;
        }
        ranks
    }
}

/// Indices sorting `values` ascending; ties keep their original order.
pub(crate) fn stable_argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    argsort_into(values, &mut idx);
    idx
}

/// Like [`stable_argsort`] but reuses `idx`.
pub(crate) fn argsort_into(values: &[f64], idx: &mut Vec<usize>) {
    idx.clear();
    idx.extend(0..values.len());
    // Comparing (value, index) makes the unstable sort produce the stable order.
    idx.sort_unstable_by(|&a, &b| match values[a].total_cmp(&values[b]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
}

#[inline]
pub(crate) fn sort_values(values: &mut [f64]) {
    values.sort_unstable_by(f64::total_cmp);
}

/// Stable ascending sort of a 1D measure.
pub fn sorted_view(measure: &DiscreteMeasure) -> Result<SortedView> {
    require_1d(measure)?;
    let order = stable_argsort(measure.atoms());
    let sorted_atoms = order.iter().map(|&i| measure.atoms()[i]).collect();
    Ok(SortedView {
        order,
        sorted_atoms,
    })
}

fn require_1d(measure: &DiscreteMeasure) -> Result<()> {
    if measure.dim() != 1 {
        return Err(SmwError::DimensionMismatch {
            expected: 1,
            found: measure.dim(),
        });
    }
    Ok(())
}

/// `(1/N) Σ_i (x̃_i − ỹ_i)²` over two sorted sequences of equal length.
pub(crate) fn w2_sorted(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let total: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    total / x.len() as f64
}

/// Closed-form MW² on already sorted sequences of equal length.
///
/// Deviations are taken relative to the first sequence so identical inputs
/// give exactly zero and large common offsets do not cost precision.
pub(crate) fn mw_sorted(sorted: &[&[f64]], beta: &[f64]) -> f64 {
    debug_assert_eq!(sorted.len(), beta.len());
    let n = sorted[0].len();
    let mut total = 0.0;
    for i in 0..n {
        let anchor = sorted[0][i];
        let b = rank_center(sorted, beta, i, anchor);
        total += sorted
            .iter()
            .zip(beta)
            .map(|(s, w)| {
                let dev = (s[i] - anchor) - b;
                w * dev * dev
            })
            .sum::<f64>();
    }
    total / n as f64
}

/// Rank-wise barycenter `Σ_j β_j x̃_i^(j)` expressed relative to `anchor`.
#[inline]
pub(crate) fn rank_center(sorted: &[&[f64]], beta: &[f64], i: usize, anchor: f64) -> f64 {
    sorted
        .iter()
        .zip(beta)
        .map(|(s, w)| w * (s[i] - anchor))
        .sum()
}

/// Squared 2-Wasserstein distance between two uniform 1D measures with the
/// same atom count. `O(N log N)`.
pub fn w2_squared_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    require_1d(mu)?;
    require_1d(nu)?;
    if mu.n_atoms() != nu.n_atoms() {
        return Err(SmwError::AtomCountMismatch {
            expected: mu.n_atoms(),
            found: nu.n_atoms(),
        });
    }
    let mut x = mu.atoms().to_vec();
    let mut y = nu.atoms().to_vec();
    sort_values(&mut x);
    sort_values(&mut y);
    Ok(w2_sorted(&x, &y))
}

/// Closed-form squared multi-marginal Monge-Wasserstein distance of 1D
/// measures. Any `β` on the simplex is accepted. `O(P N log N)`.
pub fn mw_squared_1d(set: &MeasureSet, beta: &SimplexWeights) -> Result<f64> {
    if set.dim() != 1 {
        return Err(SmwError::DimensionMismatch {
            expected: 1,
            found: set.dim(),
        });
    }
    beta.check_len(set.p_count())?;
    let sorted: Vec<Vec<f64>> = set
        .iter()
        .map(|m| {
            let mut v = m.atoms().to_vec();
            sort_values(&mut v);
            v
        })
        .collect();
    let refs: Vec<&[f64]> = sorted.iter().map(Vec::as_slice).collect();
    Ok(mw_sorted(&refs, beta.as_slice()))
}

/// Largest instance accepted by [`mw_squared_1d_oracle`].
pub const ORACLE_MAX_ATOMS: usize = 8;
pub const ORACLE_MAX_MEASURES: usize = 5;

/// Above this many state bits the oracle enumerates permutation tuples
/// directly instead of running the subset recursion.
const SUBSET_STATE_BITS: usize = 24;

/// Coupling cost of one tuple `(x^(1), .., x^(P))`:
/// `Σ_p β_p (x^(p) − Σ_j β_j x^(j))²`.
#[inline]
fn tuple_cost(values: &[f64], beta: &[f64]) -> f64 {
    let b: f64 = values.iter().zip(beta).map(|(x, w)| w * x).sum();
    values
        .iter()
        .zip(beta)
        .map(|(x, w)| w * (x - b) * (x - b))
        .sum()
}

/// Exact MW² by minimizing the coupling cost over all permutation tuples
/// `(σ₂, .., σ_P)` with `σ₁` the identity. No sorting is used anywhere.
///
/// Small instances are solved by an exact recursion over sets of already
/// matched atoms (every tuple is covered, equal cost), larger ones by
/// literal enumeration of `(N!)^(P−1)` tuples.
pub fn mw_squared_1d_oracle(set: &MeasureSet, beta: &SimplexWeights) -> Result<f64> {
    if set.dim() != 1 {
        return Err(SmwError::DimensionMismatch {
            expected: 1,
            found: set.dim(),
        });
    }
    beta.check_len(set.p_count())?;
    let n = set.n_atoms();
    let p = set.p_count();
    if n > ORACLE_MAX_ATOMS || p > ORACLE_MAX_MEASURES {
        return Err(SmwError::InstanceTooLarge {
            n_atoms: n,
            p_count: p,
        });
    }
    let atoms = set.atom_slices();
    let total = if (p - 1) * n <= SUBSET_STATE_BITS {
        min_cost_subsets(&atoms, beta.as_slice())
    } else {
        min_cost_enumerate(&atoms, beta.as_slice())
    };
    Ok(total / n as f64)
}

/// Minimum total coupling cost, forward recursion over the masks of atoms
/// already used in measures `2..P`. Atom `i` of measure 1 is coupled at
/// step `i`.
fn min_cost_subsets(atoms: &[&[f64]], beta: &[f64]) -> f64 {
    let n = atoms[0].len();
    let others = atoms.len() - 1;
    let field = (1u64 << n) - 1;
    let n_states = 1usize << (others * n);
    let mut best = vec![f64::INFINITY; n_states];
    best[0] = 0.0;
    let mut values = vec![0.0; atoms.len()];
    let mut choice = vec![0usize; others];

    for state in 0..n_states {
        let here = best[state];
        if !here.is_finite() {
            continue;
        }
        let masks: Vec<u64> = (0..others)
            .map(|q| ((state as u64) >> (q * n)) & field)
            .collect();
        let i = masks[0].count_ones() as usize;
        if i == n || masks.iter().any(|m| m.count_ones() as usize != i) {
            continue;
        }
        values[0] = atoms[0][i];
        // Odometer over one free atom per remaining measure.
        let free: Vec<Vec<usize>> = masks
            .iter()
            .map(|m| (0..n).filter(|j| m & (1 << j) == 0).collect())
            .collect();
        choice.iter_mut().for_each(|c| *c = 0);
        loop {
            let mut next = state;
            for q in 0..others {
                let j = free[q][choice[q]];
                values[q + 1] = atoms[q + 1][j];
                next |= 1usize << (q * n + j);
            }
            let cand = here + tuple_cost(&values, beta);
            if cand < best[next] {
                best[next] = cand;
            }
            let mut q = 0;
            while q < others {
                choice[q] += 1;
                if choice[q] < free[q].len() {
                    break;
                }
                choice[q] = 0;
                q += 1;
            }
            if q == others {
                break;
            }
        }
    }
    best[n_states - 1]
}

/// All permutations of `0..n` (Heap's algorithm).
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![perm.clone()];
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            out.push(perm.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Minimum total coupling cost by visiting every permutation tuple.
fn min_cost_enumerate(atoms: &[&[f64]], beta: &[f64]) -> f64 {
    let n = atoms[0].len();
    let others = atoms.len() - 1;
    let perms = permutations(n);
    let mut idx = vec![0usize; others];
    let mut values = vec![0.0; atoms.len()];
    let mut best = f64::INFINITY;
    loop {
        let mut total = 0.0;
        for i in 0..n {
            values[0] = atoms[0][i];
            for q in 0..others {
                values[q + 1] = atoms[q + 1][perms[idx[q]][i]];
            }
            total += tuple_cost(&values, beta);
        }
        best = best.min(total);
        let mut q = 0;
        while q < others {
            idx[q] += 1;
            if idx[q] < perms.len() {
                break;
            }
            idx[q] = 0;
            q += 1;
        }
        if q == others {
            return best;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::uniform_measure;
    use crate::rng::substream;
    use proptest::prelude::*;

    fn line(points: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_points_1d(points).unwrap()
    }

    fn set(points: &[&[f64]]) -> MeasureSet {
        MeasureSet::new(points.iter().map(|p| line(p)).collect()).unwrap()
    }

    #[test]
    fn sorted_view_examples() {
        let v = sorted_view(&line(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(v.sorted_atoms, vec![1.0, 2.0, 3.0]);
        assert_eq!(v.order, vec![1, 2, 0]);
        assert_eq!(v.ranks(), vec![2, 0, 1]);

        let ties = sorted_view(&line(&[5.0, 5.0, 1.0])).unwrap();
        assert_eq!(ties.sorted_atoms, vec![1.0, 5.0, 5.0]);
        assert_eq!(ties.order, vec![2, 0, 1]);

        let id = sorted_view(&line(&[-1.0, 0.0, 4.0])).unwrap();
        assert_eq!(id.order, vec![0, 1, 2]);
    }

    #[test]
    fn sorted_view_rejects_higher_dimensions() {
        let m = DiscreteMeasure::new(vec![0.0, 1.0], 2).unwrap();
        assert!(sorted_view(&m).is_err());
    }

    #[test]
    fn w2_examples() {
        assert_eq!(
            w2_squared_1d(&line(&[0.0, 1.0]), &line(&[0.0, 1.0])).unwrap(),
            0.0
        );
        assert_eq!(w2_squared_1d(&line(&[0.0]), &line(&[3.0])).unwrap(), 9.0);
        assert_eq!(
            w2_squared_1d(&line(&[1.0, 0.0]), &line(&[5.0, 2.0])).unwrap(),
            10.0
        );
        assert!(matches!(
            w2_squared_1d(&line(&[0.0]), &line(&[0.0, 1.0])),
            Err(SmwError::AtomCountMismatch { .. })
        ));
    }

    #[test]
    fn mw_examples() {
        let u3 = SimplexWeights::uniform(3);
        let s = set(&[&[0.0, 1.0], &[2.0, 3.0], &[4.0, 5.0]]);
        assert!((mw_squared_1d(&s, &u3).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert!((mw_squared_1d_oracle(&s, &u3).unwrap() - 8.0 / 3.0).abs() < 1e-15);

        let same = set(&[&[1.0, -2.0], &[-2.0, 1.0], &[1.0, -2.0]]);
        assert_eq!(mw_squared_1d(&same, &u3).unwrap(), 0.0);
        assert_eq!(mw_squared_1d_oracle(&same, &u3).unwrap(), 0.0);

        let pair = set(&[&[0.0], &[2.0]]);
        assert_eq!(
            mw_squared_1d(&pair, &SimplexWeights::uniform(2)).unwrap(),
            1.0
        );
    }

    #[test]
    fn mw_requires_one_dimension() {
        let a = DiscreteMeasure::new(vec![0.0, 0.0], 2).unwrap();
        let s = MeasureSet::new(vec![a.clone(), a]).unwrap();
        assert!(matches!(
            mw_squared_1d(&s, &SimplexWeights::uniform(2)),
            Err(SmwError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn oracle_guard() {
        let big: Vec<f64> = (0..9).map(f64::from).collect();
        let s = set(&[&big, &big]);
        assert!(matches!(
            mw_squared_1d_oracle(&s, &SimplexWeights::uniform(2)),
            Err(SmwError::InstanceTooLarge { .. })
        ));
        let six: Vec<&[f64]> = vec![&[0.0]; 6];
        assert!(matches!(
            mw_squared_1d_oracle(&set(&six), &SimplexWeights::uniform(6)),
            Err(SmwError::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn oracle_pair_matches_quarter_w2() {
        let mut rng = substream(21, 0);
        let a = uniform_measure(&mut rng, 4, 1);
        let b = uniform_measure(&mut rng, 4, 1);
        let w2 = w2_squared_1d(&a, &b).unwrap();
        let s = MeasureSet::new(vec![a, b]).unwrap();
        let oracle = mw_squared_1d_oracle(&s, &SimplexWeights::uniform(2)).unwrap();
        assert!((oracle - 0.25 * w2).abs() < 1e-12);
    }

    #[test]
    fn permutation_generator_counts() {
        assert_eq!(permutations(1).len(), 1);
        assert_eq!(permutations(4).len(), 24);
        let mut p5 = permutations(5);
        p5.sort();
        p5.dedup();
        assert_eq!(p5.len(), 120);
    }

    #[test]
    fn both_oracle_routes_agree() {
        let mut rng = substream(5, 0);
        for n in 1..=4 {
            for p in 2..=3 {
                let ms: Vec<_> = (0..p).map(|_| uniform_measure(&mut rng, n, 1)).collect();
                let atoms: Vec<&[f64]> = ms.iter().map(|m| m.atoms()).collect();
                let beta = SimplexWeights::uniform(p);
                let a = min_cost_subsets(&atoms, beta.as_slice());
                let b = min_cost_enumerate(&atoms, beta.as_slice());
                assert!((a - b).abs() < 1e-12, "n={n} p={p}: {a} vs {b}");
            }
        }
    }

    fn instance(max_n: usize, max_p: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1..=max_n, 2..=max_p).prop_flat_map(|(n, p)| {
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, n), p)
        })
    }

    fn to_set(v: &[Vec<f64>]) -> MeasureSet {
        MeasureSet::new(v.iter().map(|p| line(p)).collect()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn closed_form_matches_oracle(v in instance(5, 4)) {
            let s = to_set(&v);
            let beta = SimplexWeights::uniform(s.p_count());
            let closed = mw_squared_1d(&s, &beta).unwrap();
            let oracle = mw_squared_1d_oracle(&s, &beta).unwrap();
            prop_assert!((closed - oracle).abs() <= 1e-9);
        }

        #[test]
        fn pairwise_reduction(v in instance(8, 2)) {
            let s = to_set(&v);
            let mw = mw_squared_1d(&s, &SimplexWeights::uniform(2)).unwrap();
            let w2 = w2_squared_1d(s.get(0), s.get(1)).unwrap();
            prop_assert!((mw - 0.25 * w2).abs() <= 1e-12 * w2.max(1e-300));
        }

        #[test]
        fn translation_and_negation(v in instance(8, 5), c in -10.0f64..10.0) {
            let s = to_set(&v);
            let beta = SimplexWeights::uniform(s.p_count());
            let base = mw_squared_1d(&s, &beta).unwrap();
            let shifted = MeasureSet::new(s.iter().map(|m| m.map(|x| x + c).unwrap()).collect()).unwrap();
            let negated = MeasureSet::new(s.iter().map(|m| m.map(|x| -x).unwrap()).collect()).unwrap();
            prop_assert!((mw_squared_1d(&shifted, &beta).unwrap() - base).abs() <= 1e-9);
            prop_assert!((mw_squared_1d(&negated, &beta).unwrap() - base).abs() <= 1e-12);
        }

        #[test]
        fn argument_order_is_irrelevant(v in instance(8, 5)) {
            let s = to_set(&v);
            let beta = SimplexWeights::uniform(s.p_count());
            let base = mw_squared_1d(&s, &beta).unwrap();
            let mut rev: Vec<_> = s.measures().to_vec();
            rev.reverse();
            let r = mw_squared_1d(&MeasureSet::new(rev).unwrap(), &beta).unwrap();
            prop_assert!((r - base).abs() <= 1e-12);
            prop_assert!(base >= 0.0);
        }
    }
}
