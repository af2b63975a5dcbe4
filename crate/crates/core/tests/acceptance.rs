//! Acceptance criteria, one line per criterion. Runs as a plain binary so the
//! report is printed even when every criterion passes.
//!
//! `ACCEPTANCE_ONLY=5,7` restricts the run to the listed criteria.

use std::process::ExitCode;
use std::time::Instant;

use smw::bench::time_smw;
use smw::measures::{generate_gaussians, uniform_measure};
use smw::rlreward::{
    composite_reward, multitask_rewards, RewardConfig, RewardScale, TrajectoryBatch,
};
use smw::rng::substream;
use smw::slicing::{sample_directions, smw_squared, sw_squared, variance_profile};
use smw::solvers::{
    barycenter_gradient, barycenter_solve, barycenter_solve_from, generate_corrupted_ellipses,
    mtde_fit, multitask_score, pairwise_barycenter_solve, pairwise_barycenter_solve_from,
    BarycenterObjective, SolverConfig,
};
use smw::verify::{
    check_gradients, check_metric_axioms, check_oracle_equivalence, check_pairwise_reduction,
    CheckResult, MetricSpace,
};
use smw::{DiscreteMeasure, Execution, MeasureSet, SimplexWeights};

const SEED: u64 = 20240611;

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn checks(results: &[CheckResult]) -> Outcome {
    let detail = results
        .iter()
        .map(|c| {
            format!(
                "{} max {:.2e} (tol {:.0e})",
                c.name, c.max_violation, c.tolerance
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(results.iter().all(|c| c.passed), detail)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let c = check_oracle_equivalence(500, 6, 4, SEED, 1e-9).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut o = checks(&[c]);
    o.passed &= secs < 60.0;
    o.detail += &format!("; {secs:.2}s (limit 60s)");
    o
}

fn metric_axioms() -> Outcome {
    let mut all = check_metric_axioms(MetricSpace::Mw1d, 200, SEED, 1e-9).unwrap();
    all.extend(check_metric_axioms(MetricSpace::Smw, 200, SEED, 1e-9).unwrap());
    checks(&all)
}

fn gradient_certification() -> Outcome {
    checks(&[check_gradients(100, SEED, 1e-5).unwrap()])
}

fn pairwise_reduction() -> Outcome {
    checks(&[check_pairwise_reduction(100, SEED, 1e-12).unwrap()])
}

fn scaling_samples() -> Outcome {
    let seq = Execution::Sequential;
    let small = time_smw(10, 1 << 20, 10, 10, 3, SEED, seq).unwrap();
    let large = time_smw(10, 1 << 21, 10, 10, 3, SEED, seq).unwrap();
    let ratio = large.median_s / small.median_s;

    let set = generate_gaussians(20, 1_000_000, 10, 5.0, 1.0, SEED).unwrap();
    let proj = sample_directions(10, 10, SEED).unwrap();
    let start = Instant::now();
    smw_squared(&set, &SimplexWeights::uniform(20), &proj).unwrap();
    let full = start.elapsed().as_secs_f64();
    drop(set);

    // 10^7 atoms per measure once, sized to fit a few GB of memory
    let set = generate_gaussians(4, 10_000_000, 4, 5.0, 1.0, SEED).unwrap();
    let proj = sample_directions(4, 1, SEED).unwrap();
    let start = Instant::now();
    let smoke = smw_squared(&set, &SimplexWeights::uniform(4), &proj)
        .unwrap()
        .estimate;
    let smoke_s = start.elapsed().as_secs_f64();

    outcome(
        ratio <= 2.6 && full <= 120.0 && smoke.is_finite(),
        format!(
            "N=2^20 {:.2}s, N=2^21 {:.2}s, ratio {ratio:.3} (limit 2.6); \
             P=20 N=1e6 K=10 {full:.1}s (limit 120s); N=1e7 P=4 d=4 K=1 {smoke_s:.1}s",
            small.median_s, large.median_s
        ),
    )
}

fn scaling_measures() -> Outcome {
    let exec = Execution::default();
    let ten = time_smw(10, 100_000, 10, 10, 5, SEED, exec).unwrap();
    let twenty = time_smw(20, 100_000, 10, 10, 5, SEED, exec).unwrap();
    let ratio = twenty.median_s / ten.median_s;
    outcome(
        ratio <= 2.4,
        format!(
            "P=10 {:.3}s, P=20 {:.3}s, ratio {ratio:.3} (limit 2.4)",
            ten.median_s, twenty.median_s
        ),
    )
}

fn monte_carlo_rate() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for d in [2, 5, 20] {
        let set = generate_gaussians(5, 250, d, 5.0, 1.0, SEED + d as u64).unwrap();
        let rows =
            variance_profile(&set, &SimplexWeights::uniform(5), &[100, 400], 50, SEED).unwrap();
        let ratio = rows[0].std / rows[1].std;
        passed &= (1.6..=2.5).contains(&ratio);
        parts.push(format!("d={d} ratio {ratio:.3}"));
    }
    outcome(passed, parts.join(", ") + " (range [1.6, 2.5])")
}

fn barycenter_equivalence() -> Outcome {
    let targets = generate_gaussians(4, 30, 2, 2.0, 1.0, SEED).unwrap();
    let proj = sample_directions(2, 200, SEED).unwrap();
    let init = generate_gaussians(2, 30, 2, 0.5, 1.0, SEED + 1)
        .unwrap()
        .get(0)
        .clone();
    // both runs share one small constant step; the multi-marginal gradient is
    // 4/25 of the pairwise one, so larger steps send the two discrete paths
    // to different stationary points of this non-convex objective
    let config = SolverConfig {
        iters: 12_000,
        step_size: 0.05,
        cosine_decay: false,
        log_every: 100,
        fixed_projections: Some(proj.clone()),
        seed: SEED,
        ..SolverConfig::barycenter_defaults()
    };
    let a = barycenter_solve_from(&targets, init.clone(), &config).unwrap();
    let b = pairwise_barycenter_solve_from(&targets, init, &config).unwrap();
    let mutual = sw_squared(&a.final_measures[0], &b.final_measures[0], &proj)
        .unwrap()
        .estimate;

    let expected = 4.0 / 25.0;
    let mut worst = 0.0f64;
    for i in 0..10 {
        let mut rng = substream(SEED, 100 + i);
        let mu = uniform_measure(&mut rng, 30, 2).map(|x| 3.0 * x).unwrap();
        let (_, smw_g) =
            barycenter_gradient(&mu, &targets, &proj, BarycenterObjective::MultiMarginal).unwrap();
        let (_, pair_g) =
            barycenter_gradient(&mu, &targets, &proj, BarycenterObjective::Pairwise).unwrap();
        for (x, y) in smw_g.iter().zip(&pair_g) {
            if y.abs() > 1e-300 {
                worst = worst.max((x / y - expected).abs() / expected);
            }
        }
    }
    outcome(
        mutual <= 1e-3 && worst <= 1e-9,
        format!("mutual SW² {mutual:.2e} (limit 1e-3); gradient ratio rel. error {worst:.2e} (limit 1e-9)"),
    )
}

fn analytic_barycenters() -> Outcome {
    let points = [[0.5, -1.0], [2.0, 3.0], [-1.5, 0.0], [4.0, 1.0]];
    let singles = MeasureSet::new(
        points
            .iter()
            .map(|p| DiscreteMeasure::from_rows(&[*p]).unwrap())
            .collect(),
    )
    .unwrap();
    let mean = [1.25, 0.75];
    let config = SolverConfig {
        seed: SEED,
        ..SolverConfig::barycenter_defaults()
    };
    let mut mean_err = 0.0f64;
    for trace in [
        barycenter_solve(&singles, 1, &config).unwrap(),
        pairwise_barycenter_solve(&singles, 1, &config).unwrap(),
    ] {
        for (a, m) in trace.final_measures[0].atom(0).iter().zip(mean) {
            mean_err = mean_err.max((a - m).abs());
        }
    }

    let mut rng = substream(SEED, 7);
    let lines = MeasureSet::new(
        (0..3)
            .map(|_| uniform_measure(&mut rng, 12, 1).map(|x| 4.0 * x).unwrap())
            .collect(),
    )
    .unwrap();
    let sorted: Vec<Vec<f64>> = lines
        .iter()
        .map(|m| {
            let mut v = m.atoms().to_vec();
            v.sort_by(f64::total_cmp);
            v
        })
        .collect();
    let rank_means: Vec<f64> = (0..12)
        .map(|i| sorted.iter().map(|s| s[i]).sum::<f64>() / 3.0)
        .collect();
    let mut rank_err = 0.0f64;
    for trace in [
        barycenter_solve(&lines, 12, &config).unwrap(),
        pairwise_barycenter_solve(&lines, 12, &config).unwrap(),
    ] {
        let mut got = trace.final_measures[0].atoms().to_vec();
        got.sort_by(f64::total_cmp);
        for (g, m) in got.iter().zip(&rank_means) {
            rank_err = rank_err.max((g - m).abs());
        }
    }
    outcome(
        mean_err <= 1e-3 && rank_err <= 1e-3,
        format!(
            "singleton mean error {mean_err:.2e}, 1D rank-wise error {rank_err:.2e} (limit 1e-3)"
        ),
    )
}

fn mtde_u_shape() -> Outcome {
    let eval = sample_directions(2, 300, 12345).unwrap();
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let tasks = generate_corrupted_ellipses(20, 150, 0.25, seed).unwrap();
        let config = SolverConfig {
            iters: 300,
            batch: None,
            seed,
            ..SolverConfig::mtde_defaults()
        };
        let score = |gamma: f64| {
            let trace = mtde_fit(&tasks.corrupted, 150, gamma, &config).unwrap();
            multitask_score(&trace.final_measures, &tasks.clean, &eval).unwrap()
        };
        let (s0, s03, s25) = (score(0.0), score(0.3), score(25.0));
        if s03 < s0 && s03 < s25 {
            wins += 1;
        }
        parts.push(format!("seed {seed}: {s0:.4} / {s03:.4} / {s25:.4}"));
    }
    outcome(
        wins >= 2,
        format!(
            "score at gamma 0 / 0.3 / 25: {}; {wins} of 3 seeds U-shaped",
            parts.join(", ")
        ),
    )
}

fn reward_identity() -> Outcome {
    let mut rng = substream(SEED, 11);
    let batch =
        TrajectoryBatch::new((0..5).map(|_| uniform_measure(&mut rng, 50, 3)).collect()).unwrap();
    let proj = sample_directions(3, 64, SEED).unwrap();
    let rewards = multitask_rewards(&batch, &proj).unwrap();
    let total: f64 = rewards.iter().flatten().sum();
    let set = MeasureSet::new(batch.agents().to_vec()).unwrap();
    let smw2 = smw_squared(&set, &SimplexWeights::uniform(5), &proj)
        .unwrap()
        .estimate;
    let gap = (total - 50.0 * smw2).abs();

    let canonical: Vec<Vec<f64>> = (0..5)
        .map(|p| (0..50).map(|t| ((p * 50 + t) as f64).sin() - 0.5).collect())
        .collect();
    let mut bitwise = true;
    for scale in [RewardScale::Neg, RewardScale::exp()] {
        let config = RewardConfig {
            gamma: 0.0,
            scale,
            projections: proj.clone(),
        };
        let shaped = composite_reward(&batch, &canonical, &config).unwrap();
        bitwise &= shaped
            .iter()
            .flatten()
            .zip(canonical.iter().flatten())
            .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    outcome(
        gap <= 1e-9 && bitwise,
        format!("|sum r - T SMW²| {gap:.2e} (limit 1e-9); gamma=0 bitwise equal: {bitwise}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (1, "oracle equivalence", oracle_equivalence),
        (2, "generalized metric axioms", metric_axioms),
        (3, "gradient certification", gradient_certification),
        (4, "pairwise reduction", pairwise_reduction),
        (5, "scaling in samples", scaling_samples),
        (6, "scaling in measures", scaling_measures),
        (7, "Monte-Carlo rate", monte_carlo_rate),
        (8, "barycenter equivalence", barycenter_equivalence),
        (9, "analytic barycenters", analytic_barycenters),
        (10, "multi-task U-shape", mtde_u_shape),
        (11, "reward-sum identity", reward_identity),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    // libtest flags such as --list or a name filter are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        println!(
            "criterion {id:>2} {:<27} {} [{:.1}s] {}",
            name,
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
