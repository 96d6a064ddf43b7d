//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured margin. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use quartz::analysis::{
    complexity_bound, iterations_to_gap, practical_speedup, sandwich_check, speedup_tau_nice,
};
use quartz::eso::{
    eso_lhs_by_enumeration, eso_rhs, exact_eso_lhs, importance_probs, theta, v_distributed,
    v_for_scheme, v_product, v_serial, v_tau_nice,
};
use quartz::loss::{LossKind, LossModel, Regularizer};
use quartz::matrix::DataMatrix;
use quartz::problem::ProblemInstance;
use quartz::sampling::{detect_product_partition, SamplingScheme};
use quartz::solver::{
    option1_closed_form, option1_numeric, SolveOutcome, SolveStatus, Solver, SolverConfig,
};
use quartz::synth::{synth_instance, OmegaProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The worked 4x5 example matrix; squared column norms (1, 73, 45, 16, 82).
fn example_matrix() -> DataMatrix {
    DataMatrix::from_rows(&[
        &[0.0, 0.0, 6.0, 4.0, 9.0],
        &[0.0, 3.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 3.0, 0.0, 1.0],
        &[1.0, 8.0, 0.0, 0.0, 0.0],
    ])
    .unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize, n: usize, density: f64) -> DataMatrix {
    loop {
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut col = Vec::new();
            for j in 0..d {
                if rng.random_bool(density) {
                    col.push((j, rng.random_range(-2.0..2.0)));
                }
            }
            cols.push(col);
        }
        if cols.iter().any(|c| !c.is_empty()) {
            return DataMatrix::from_columns(d, cols).unwrap();
        }
    }
}

/// All samplings the certification sweep exercises for one instance.
fn sweep_schemes(
    matrix: &DataMatrix,
    lambda: f64,
    gamma: f64,
) -> Vec<(SamplingScheme, Vec<f64>)> {
    let n = matrix.n();
    let vs = v_serial(matrix);
    let mut schemes = vec![
        SamplingScheme::serial_uniform(n).unwrap(),
        SamplingScheme::serial(importance_probs(&vs, lambda, gamma, n)).unwrap(),
    ];
    for tau in [2, 3, n] {
        if tau <= n {
            schemes.push(SamplingScheme::tau_nice(n, tau).unwrap());
        }
    }
    if let Some(groups) = detect_product_partition(matrix) {
        schemes.push(SamplingScheme::product(n, groups).unwrap());
    }
    if n.is_multiple_of(2) {
        for tau in [1, 2] {
            if tau <= n / 2 {
                schemes.push(SamplingScheme::distributed(n, 2, tau, None).unwrap());
            }
        }
    }
    schemes
        .into_iter()
        .map(|s| {
            let v = v_for_scheme(matrix, &s).unwrap();
            (s, v)
        })
        .collect()
}

#[test]
fn acceptance_01_eso_certification() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_slack = f64::NEG_INFINITY;
    for trial in 0..200 {
        let n = rng.random_range(3..=10);
        let d = rng.random_range(2..=8);
        let density = 0.1 + 0.1 * (trial % 10) as f64;
        let matrix = random_matrix(&mut rng, d, n, density);
        let lambda = rng.random_range(0.01..1.0);
        let gamma = rng.random_range(0.25..4.0);
        for (scheme, v) in sweep_schemes(&matrix, lambda, gamma) {
            let probs = scheme.inclusion_probs();
            for _ in 0..50 {
                let h: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let lhs = exact_eso_lhs(&matrix, &scheme, &h);
                let rhs = eso_rhs(&probs, &v, &h);
                worst_slack = worst_slack.max(lhs - rhs);
            }
        }
    }
    assert!(
        worst_slack <= 1e-10,
        "overapproximation violated by {worst_slack:.3e}"
    );
    println!("criterion 1 (ESO certification): PASS, worst slack {worst_slack:.3e}");
}

#[test]
fn acceptance_02_hadamard_vs_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0_f64;
    for trial in 0..200 {
        let n = rng.random_range(3..=10);
        let d = rng.random_range(2..=8);
        let density = 0.1 + 0.1 * (trial % 10) as f64;
        let matrix = random_matrix(&mut rng, d, n, density);
        let lambda = rng.random_range(0.01..1.0);
        let gamma = rng.random_range(0.25..4.0);
        for (scheme, _) in sweep_schemes(&matrix, lambda, gamma) {
            for _ in 0..5 {
                let h: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                let a = exact_eso_lhs(&matrix, &scheme, &h);
                let b = eso_lhs_by_enumeration(&matrix, &scheme, &h).unwrap();
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
    }
    assert!(worst <= 1e-12, "oracle mismatch {worst:.3e}");
    println!("criterion 2 (pairwise vs enumeration oracle): PASS, worst relative mismatch {worst:.3e}");
}

#[test]
fn acceptance_03_closed_form_vs_numeric() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst = 0.0_f64;
    for kind in [LossKind::SmoothedHinge, LossKind::SquaredHinge] {
        for _ in 0..10_000 {
            let gamma = rng.random_range(0.25..4.0);
            let loss = LossModel::new(kind, gamma).unwrap();
            let (lo, hi) = loss.dual_box();
            let alpha = rng.random_range(lo..hi.min(2.0));
            let abar_dot = rng.random_range(-3.0..3.0);
            let v = rng.random_range(0.0..10.0);
            let lambda = rng.random_range(0.1..2.0);
            let n = rng.random_range(1..50);
            let cf = option1_closed_form(&loss, alpha, abar_dot, v, lambda, n);
            let num = option1_numeric(&loss, alpha, abar_dot, v, lambda, n);
            worst = worst.max((cf - num).abs());
        }
    }
    assert!(worst < 1e-8, "closed form deviates from oracle by {worst:.3e}");
    println!("criterion 3 (closed-form dual updates): PASS, worst deviation {worst:.3e}");
}

/// The 30-feature, 100-example reference instance for the rate criteria.
fn rate_instance() -> ProblemInstance {
    let mut matrix = synth_instance(100, 30, 0.2, OmegaProfile::Uniform, 4242).unwrap();
    matrix.normalize_columns();
    let loss = LossModel::smoothed_hinge(1.0).unwrap();
    let lambda = 1.0 / (100.0_f64).sqrt();
    ProblemInstance::new(matrix, loss, Regularizer::L2, lambda).unwrap()
}

#[test]
fn acceptance_04_rate_reproduction() {
    let problem = rate_instance();
    let n = problem.n();
    let scheme = SamplingScheme::serial_uniform(n).unwrap();
    let checkpoints = [n, 2 * n, 4 * n];
    let seeds = 200u64;
    let mut sums = [0.0_f64; 3];
    let mut theta_run = 0.0;
    let mut gap0 = 0.0;
    for seed in 0..seeds {
        let config = SolverConfig::new(scheme.clone())
            .with_epsilon(1e-14)
            .with_max_epochs(4)
            .with_gap_check_every(n)
            .with_seed(seed);
        let solver = Solver::new(&problem, config).unwrap();
        let out = solver.solve();
        theta_run = out.theta;
        gap0 = out.trace[0].gap;
        for (slot, &t) in checkpoints.iter().enumerate() {
            let rec = out
                .trace
                .iter()
                .find(|r| r.iteration == t)
                .expect("checkpoint gap recorded");
            sums[slot] += rec.gap;
        }
    }
    for (slot, &t) in checkpoints.iter().enumerate() {
        let mean = sums[slot] / seeds as f64;
        let bound = 1.1 * (1.0 - theta_run).powi(t as i32) * gap0;
        assert!(
            mean <= bound,
            "mean gap {mean:.4e} over bound {bound:.4e} at t = {t}"
        );
        println!(
            "criterion 4 (rate reproduction): PASS at t={t}, mean gap {mean:.4e} <= {bound:.4e}"
        );
    }
}

#[test]
fn acceptance_05_iteration_bound() {
    let problem = rate_instance();
    let n = problem.n();
    let epsilon = 1e-6;
    let scheme = SamplingScheme::serial_uniform(n).unwrap();
    let mut iterations: Vec<f64> = Vec::new();
    let mut gap0 = 0.0;
    let mut v = Vec::new();
    for seed in 0..21u64 {
        let config = SolverConfig::new(scheme.clone())
            .with_epsilon(epsilon)
            .with_max_epochs(200)
            .with_gap_check_every(n)
            .with_seed(seed);
        let solver = Solver::new(&problem, config).unwrap();
        let out = solver.solve();
        assert_eq!(out.status, SolveStatus::Converged);
        gap0 = out.trace[0].gap;
        v = out.eso.v.clone();
        iterations.push(iterations_to_gap(&out.trace, epsilon).unwrap() as f64);
    }
    iterations.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = iterations[iterations.len() / 2];
    let probs = vec![1.0 / n as f64; n];
    let bound = complexity_bound(&probs, &v, problem.lambda, 1.0, n, gap0, epsilon)
        .unwrap()
        .t_total;
    assert!(
        median <= bound,
        "median iterations {median} exceed the bound {bound}"
    );
    println!("criterion 5 (iteration bound): PASS, median {median} <= bound {bound:.1}");
}

#[test]
fn acceptance_06_importance_sampling_benefit() {
    // column norms log-spaced over [0.1, 10]
    let n = 64;
    let d = 32;
    let mut matrix = synth_instance(n, d, 0.3, OmegaProfile::Uniform, 777).unwrap();
    matrix.normalize_columns();
    let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for i in 0..n {
        let target = 10.0_f64.powf(-1.0 + 2.0 * i as f64 / (n - 1) as f64);
        cols.push(
            matrix
                .column(i)
                .iter()
                .map(|&(row, val)| (row as usize, val * target))
                .collect(),
        );
    }
    let matrix = DataMatrix::from_columns(d, cols).unwrap();
    let lambda = 1.0 / (n as f64).sqrt();
    let gamma = 1.0;
    let loss = LossModel::smoothed_hinge(gamma).unwrap();
    let problem = ProblemInstance::new(matrix, loss, Regularizer::L2, lambda).unwrap();

    let v = v_serial(&problem.matrix);
    let uniform = vec![1.0 / n as f64; n];
    let optimal = importance_probs(&v, lambda, gamma, n);
    let theta_uniform = theta(&uniform, &v, lambda, gamma, n);
    let theta_optimal = theta(&optimal, &v, lambda, gamma, n);
    assert!(theta_optimal >= theta_uniform);

    let epsilon = 1e-6;
    let run = |scheme: SamplingScheme, seed: u64| -> f64 {
        let config = SolverConfig::new(scheme)
            .with_epsilon(epsilon)
            .with_max_epochs(5_000)
            .with_seed(seed);
        let solver = Solver::new(&problem, config).unwrap();
        let out = solver.solve();
        assert_eq!(out.status, SolveStatus::Converged);
        iterations_to_gap(&out.trace, epsilon).unwrap() as f64
    };
    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };
    let uniform_iters = median(
        (0..21)
            .map(|s| run(SamplingScheme::serial_uniform(n).unwrap(), s))
            .collect(),
    );
    let importance_iters = median(
        (0..21)
            .map(|s| run(SamplingScheme::serial(optimal.clone()).unwrap(), s))
            .collect(),
    );
    assert!(
        importance_iters <= uniform_iters,
        "importance {importance_iters} vs uniform {uniform_iters}"
    );
    println!(
        "criterion 6 (importance benefit): PASS, theta {theta_optimal:.3e} >= {theta_uniform:.3e}, median iterations {importance_iters} <= {uniform_iters}"
    );
}

#[test]
fn acceptance_07_speedup_prediction() {
    // fully sparse data: one nonzero per example, unit norms after rescaling
    let n = 2048;
    let mut matrix = synth_instance(n, n, 1.0 / n as f64, OmegaProfile::FullySparse, 99).unwrap();
    matrix.normalize_columns();
    let gamma = 1.0;
    let lambda = 64.0 / n as f64; // lambda * gamma * n = 64
    let loss = LossModel::smoothed_hinge(gamma).unwrap();
    let problem = ProblemInstance::new(matrix, loss, Regularizer::L2, lambda).unwrap();
    let epsilon = 1e-8;
    let seeds: Vec<u64> = (1..=5).collect();

    let run_all = |scheme: &SamplingScheme| -> Vec<SolveOutcome> {
        seeds
            .iter()
            .map(|&seed| {
                let config = SolverConfig::new(scheme.clone())
                    .with_epsilon(epsilon)
                    .with_max_epochs(500)
                    .with_seed(seed);
                let solver = Solver::new(&problem, config).unwrap();
                let out = solver.solve();
                assert_eq!(out.status, SolveStatus::Converged);
                out
            })
            .collect()
    };
    let serial_runs = run_all(&SamplingScheme::serial_uniform(n).unwrap());
    let serial_traces: Vec<&[_]> = serial_runs.iter().map(|o| o.trace.as_slice()).collect();

    let vs = v_serial(&problem.matrix);
    for tau in [2usize, 8, 32] {
        let vt = v_tau_nice(&problem.matrix, tau).unwrap();
        assert_eq!(vt, vs, "fully sparse weights must not grow with tau");
        let theoretical = speedup_tau_nice(n, lambda, gamma, 1.0, tau).unwrap();
        assert_eq!(theoretical, tau as f64);

        let runs = run_all(&SamplingScheme::tau_nice(n, tau).unwrap());
        let traces: Vec<&[_]> = runs.iter().map(|o| o.trace.as_slice()).collect();
        let practical = practical_speedup(&serial_traces, &traces, epsilon).unwrap();
        let ratio = practical / theoretical;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "tau {tau}: practical {practical:.2} vs theoretical {theoretical} (ratio {ratio:.3})"
        );
        println!(
            "criterion 7 (speedup prediction): PASS at tau={tau}, practical {practical:.2} within 2x of {theoretical}"
        );
    }
}

#[test]
fn acceptance_08_exact_reductions() {
    let m = example_matrix();
    let expected = vec![1.0, 73.0, 45.0, 16.0, 82.0];
    let vs = v_serial(&m);
    assert_eq!(vs, expected);
    // tau = 1 reduces to serial bitwise
    assert_eq!(v_tau_nice(&m, 1).unwrap(), vs);
    // single-node distributed reduces to tau-nice bitwise
    let all: Vec<Vec<usize>> = vec![(0..5).collect()];
    for tau in 1..=5 {
        assert_eq!(
            v_distributed(&m, 1, tau, &all).unwrap(),
            v_tau_nice(&m, tau).unwrap()
        );
    }
    // product weights equal serial weights on the worked example
    let groups = vec![vec![0, 1], vec![2, 3, 4]];
    assert_eq!(v_product(&m, &groups).unwrap(), vs);
    println!("criterion 8 (exact reductions): PASS, bitwise equality on all three chains");
}

#[test]
fn acceptance_09_sandwich_property() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    for _ in 0..10_000 {
        let n = rng.random_range(1.0..1e7);
        let omega_tilde = rng.random_range(1.0..n);
        let tau = rng.random_range(1.0..n);
        let (a, b, c) = sandwich_check(omega_tilde, tau, n);
        assert!(
            a && b && c,
            "sandwich failed at omega_tilde={omega_tilde} tau={tau} n={n}"
        );
    }
    println!("criterion 9 (sandwich inequalities): PASS on 10000 fuzzed triples");
}

#[test]
fn acceptance_10_weak_duality_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let mut worst = f64::INFINITY;
    for kind in [LossKind::SmoothedHinge, LossKind::SquaredHinge] {
        for _ in 0..500 {
            let d = rng.random_range(2..8);
            let n = rng.random_range(2..12);
            let matrix = random_matrix(&mut rng, d, n, 0.6);
            let loss = LossModel::new(kind, rng.random_range(0.3..3.0)).unwrap();
            let lambda = rng.random_range(0.01..2.0);
            let problem = ProblemInstance::new(matrix, loss, Regularizer::L2, lambda).unwrap();
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (lo, hi) = loss.dual_box();
            let alpha: Vec<f64> = (0..n)
                .map(|_| rng.random_range(lo..hi.min(3.0)))
                .collect();
            let gap = problem.duality_gap(&w, &alpha).unwrap();
            worst = worst.min(gap);
            assert!(gap >= -1e-9, "weak duality violated: gap {gap:.3e}");
        }
    }
    println!("criterion 10 (weak duality fuzz): PASS, smallest gap seen {worst:.3e}");
}
