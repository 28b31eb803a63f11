//! Acceptance suite: one test per criterion, each printing a pass/fail
//! line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! Quantitative targets not checkable in closed form were frozen from
//! independent oracles before the build: the five-node spectrum from a
//! separate symmetric eigendecomposition, the norm-equivalence constants
//! from randomized maximization, the two-agent consensus time from the
//! closed-form gap dynamics.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use signum_consensus::analysis::{
    classify, convergence_time_bound, d1_constant, disagreement, edge_lyapunov, lyapunov_max_norm,
    necessity_witness, Classification,
};
use signum_consensus::batch::run_batch;
use signum_consensus::cli::{
    cmd_reproduce, run_matrix, Expectation, GlobalOpts, MatrixRow, MATRIX_FIVE_NODE_CONFIG,
};
use signum_consensus::config::{parse_json, MatrixConfig};
use signum_consensus::filippov::{
    consensus_drift_interval, lie_derivative_samples, triangle_consensus_set, LyapunovId,
};
use signum_consensus::graph::{build_graph, laplacian, random_connected, schur_complement, Graph};
use signum_consensus::protocol::{
    lipschitz_law, neighbor_sum, sample_state_in_ball, AgentLaw, LipschitzKind, Mode, NormIndex,
    ProtocolSpec, StateVector,
};
use signum_consensus::simulate::{ball_norm_index, simulate, spread, IntegratorConfig};

/// lambda_2 of the five-node topology, frozen from an independent
/// symmetric eigendecomposition of the explicit 5x5 Laplacian.
const FIVE_NODE_LAMBDA2: f64 = 0.6972243622680055;

fn five_node() -> Graph {
    build_graph(
        5,
        &[
            (1, 2, 1.0),
            (2, 3, 1.0),
            (2, 4, 1.0),
            (3, 4, 1.0),
            (4, 5, 1.0),
        ],
    )
    .unwrap()
}

fn path2() -> Graph {
    build_graph(2, &[(1, 2, 1.0)]).unwrap()
}

fn triangle() -> Graph {
    build_graph(3, &[(1, 2, 1.0), (2, 3, 1.0), (1, 3, 1.0)]).unwrap()
}

/// Protocol with the last `cardinality` agents running the Identity law.
fn spec_with_tail(
    n: usize,
    k: usize,
    p: NormIndex,
    mode: Mode,
    cardinality: usize,
) -> ProtocolSpec {
    let mut agents = vec![AgentLaw::Signum; n];
    for law in agents.iter_mut().skip(n - cardinality) {
        *law = lipschitz_law(LipschitzKind::Identity, 1.0).unwrap();
    }
    ProtocolSpec::new(k, p, mode, agents)
}

fn five_node_integrator() -> IntegratorConfig {
    IntegratorConfig {
        h: 2.5e-4,
        epsilon: 1e-3,
        t_max: 20.0,
        consensus_tol: 1e-6,
        record_stride: 40,
    }
}

/// The theorem matrix is computed once and shared between criteria 3 and 6.
fn matrix_rows() -> &'static (Vec<MatrixRow>, Duration) {
    static ROWS: OnceLock<(Vec<MatrixRow>, Duration)> = OnceLock::new();
    ROWS.get_or_init(|| {
        let cfg: MatrixConfig = parse_json(MATRIX_FIVE_NODE_CONFIG).expect("bundled config parses");
        let start = Instant::now();
        let rows = run_matrix(&cfg).expect("matrix runs");
        (rows, start.elapsed())
    })
}

/// The criteria carry wall-clock budgets, so they must not contend with
/// each other inside the harness; every test serializes on this lock and
/// times only its own work.
fn serial() -> std::sync::MutexGuard<'static, ()> {
    static LOCK: std::sync::Mutex<()> = std::sync::Mutex::new(());
    LOCK.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

#[test]
fn criterion_1_two_agent_analytic_convergence_time() {
    let _serial = serial();
    let start = Instant::now();
    let g = path2();
    let cfg = IntegratorConfig {
        t_max: 1.5,
        ..IntegratorConfig::default()
    };
    let tol = (5.0 * cfg.epsilon).max(10.0 * cfg.h);

    struct Job {
        p: NormIndex,
        k: usize,
        d: f64,
    }
    let mut jobs = Vec::new();
    for p in [NormIndex::ONE, NormIndex::TWO, NormIndex::INF] {
        for k in [1usize, 2, 3] {
            for d in [0.2, 1.0] {
                jobs.push(Job { p, k, d });
            }
        }
    }
    let results = run_batch(&jobs, |job| {
        // Gap along a non-axis direction with unit p-norm, scaled to d.
        let raw = DVector::from_fn(job.k, |r, _| [1.0, -0.7, 0.4][r]);
        let gap = &raw * (job.d / job.p.norm(&raw));
        let mut x0 = StateVector::zeros(2, job.k);
        x0.set_block(0, &(-&gap * 0.5));
        x0.set_block(1, &(&gap * 0.5));
        let spec = ProtocolSpec::new(
            job.k,
            job.p,
            Mode::DirectionPreserving,
            vec![AgentLaw::Signum; 2],
        );
        let traj = simulate(&g, &spec, &x0, &cfg).unwrap();
        traj.consensus_event().map(|e| e.t)
    });
    for (job, t_star) in jobs.iter().zip(results) {
        let t_star = t_star.unwrap_or_else(|| {
            panic!(
                "no consensus for p = {:?}, k = {}, d = {}",
                job.p, job.k, job.d
            )
        });
        let expect = job.d / 2.0;
        assert!(
            (t_star - expect).abs() <= tol,
            "p = {:?}, k = {}, d = {}: t* = {t_star}, closed form = {expect}, tol = {tol}",
            job.p,
            job.k,
            job.d
        );
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed < Duration::from_secs(5),
        "runtime budget: {elapsed:?}"
    );
    println!("criterion 1 (two-agent analytic convergence time, 18 cells): PASS in {elapsed:?}");
}

#[test]
fn criterion_2_example1_drift_interval() {
    let _serial = serial();
    let start = Instant::now();
    let interval = consensus_drift_interval(&triangle()).unwrap();
    assert!(
        (interval.hi - 1.0 / 3.0).abs() <= 1e-6,
        "drift bound {} differs from 1/3",
        interval.hi
    );
    assert!((interval.lo + 1.0 / 3.0).abs() <= 1e-6);

    let set = triangle_consensus_set();
    let third = DVector::from_element(3, 1.0 / 3.0);
    let beyond = DVector::from_element(3, 0.34);
    assert!(
        set.contains(&third, 1e-9).unwrap(),
        "(1/3)*1 must be contained"
    );
    assert!(
        !set.contains(&beyond, 1e-9).unwrap(),
        "0.34*1 must not be contained"
    );

    let elapsed = start.elapsed();
    assert!(
        elapsed < Duration::from_secs(1),
        "runtime budget: {elapsed:?}"
    );

    // The bundled reproduction exercises the same checks end to end.
    let tmp = tempfile::tempdir().unwrap();
    let opts = GlobalOpts {
        out: Some(tmp.path().to_path_buf()),
        seed: None,
        quiet: true,
    };
    cmd_reproduce("example1", &opts).expect("example1 self-checks pass");

    println!("criterion 2 (Example 1 drift interval = 1/3 +- 1e-6): PASS in {elapsed:?}");
}

#[test]
fn criterion_3_theorem_iff_matrix() {
    let _serial = serial();
    let (rows, compute_time) = matrix_rows();
    assert_eq!(rows.len(), 80, "2 modes x (3 cells + two-agent) x 10 seeds");

    let count = |mode: &str, cardinality: usize, finite: bool| {
        rows.iter()
            .filter(|r| r.mode == mode && r.cardinality == cardinality)
            .filter(|r| {
                matches!(r.observed, Classification::FiniteTime { .. }) == finite
                    && (finite || matches!(r.observed, Classification::Asymptotic { .. }))
            })
            .count()
    };
    for mode in ["dp", "cw"] {
        assert_eq!(
            count(mode, 1, true),
            10,
            "{mode}: |I_c| = 1 must be 10/10 FiniteTime"
        );
        assert_eq!(
            count(mode, 2, false),
            10,
            "{mode}: |I_c| = 2 witnesses must be 10/10 Asymptotic"
        );
        assert_eq!(
            count(mode, 5, false),
            10,
            "{mode}: |I_c| = 5 must be 10/10 Asymptotic"
        );
        assert_eq!(
            count(mode, 0, true),
            10,
            "{mode}: two-agent |I_c| = 0 must be 10/10 FiniteTime"
        );
    }
    for row in rows {
        let pass = match row.expected {
            Expectation::FiniteTime => matches!(row.observed, Classification::FiniteTime { .. }),
            Expectation::Asymptotic => matches!(row.observed, Classification::Asymptotic { .. }),
            Expectation::Caveat => !matches!(row.observed, Classification::Asymptotic { .. }),
        };
        assert!(pass, "{} deviates from the theorem pattern", row.job_desc);
    }
    assert!(
        *compute_time < Duration::from_secs(60),
        "runtime budget: {compute_time:?}"
    );
    println!(
        "criterion 3 (theorem iff matrix, 80 cells incl. component-wise): PASS in {compute_time:?}"
    );
}

#[test]
fn criterion_4_ball_invariance() {
    let _serial = serial();
    let start = Instant::now();
    let g5 = five_node();
    let g2 = path2();

    struct Job {
        mode: Mode,
        p: NormIndex,
        seed: u64,
        variant: usize,
    }
    let mut jobs = Vec::new();
    let mut seed = 1000u64;
    for (mode, p) in [
        (Mode::DirectionPreserving, NormIndex::ONE),
        (Mode::DirectionPreserving, NormIndex::TWO),
        (Mode::DirectionPreserving, NormIndex::INF),
        (Mode::ComponentWise, NormIndex::TWO),
    ] {
        for variant in 0..25 {
            seed += 1;
            jobs.push(Job {
                mode,
                p,
                seed,
                variant,
            });
        }
    }
    assert_eq!(jobs.len(), 100);

    let violations = run_batch(&jobs, |job| {
        // Cycle through lemma-condition specs: condition (ii) on the
        // five-node graph with |I_c| in {1, 2, 5} (mixing the two Lipschitz
        // kinds), condition (i) on the two-agent path.
        let (g, spec, cfg) = match job.variant % 4 {
            0 => (
                &g5,
                spec_with_tail(5, 2, job.p, job.mode, 1),
                five_node_integrator(),
            ),
            1 => {
                let mut spec = spec_with_tail(5, 2, job.p, job.mode, 2);
                spec.agents[3] = lipschitz_law(LipschitzKind::SaturatedRadial, 1.2).unwrap();
                (&g5, spec, five_node_integrator())
            }
            2 => (
                &g5,
                spec_with_tail(5, 2, job.p, job.mode, 5),
                five_node_integrator(),
            ),
            _ => (
                &g2,
                spec_with_tail(2, 2, job.p, job.mode, 0),
                IntegratorConfig::default(),
            ),
        };
        let cfg = IntegratorConfig { t_max: 3.0, ..cfg };
        let ball = ball_norm_index(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
        let x0 = sample_state_in_ball(g.n(), 2, ball, 1.0, &mut rng);
        let traj = simulate(g, &spec, &x0, &cfg).unwrap();
        let limit = 1.0 + 5.0 * cfg.epsilon;
        let mut worst = 0.0_f64;
        for s in &traj.states {
            for i in 0..s.n() {
                worst = worst.max(ball.norm(&s.block(i)));
            }
        }
        (worst > limit).then_some((job.seed, worst))
    });
    let violations: Vec<_> = violations.into_iter().flatten().collect();
    assert!(
        violations.is_empty(),
        "ball invariance violations: {violations:?}"
    );
    let elapsed = start.elapsed();
    println!("criterion 4 (ball invariance, 100 runs, zero violations): PASS in {elapsed:?}");
}

#[test]
fn criterion_5_lie_derivative_decay_bound() {
    let _serial = serial();
    let start = Instant::now();
    let g = five_node();
    let lap = laplacian(&g);
    let threshold = -d1_constant(NormIndex::TWO, 2) * FIVE_NODE_LAMBDA2.sqrt() / 2.0;

    // Exact set-valued path: the max of the Lie-derivative interval at
    // random off-consensus states.
    let spec = spec_with_tail(5, 2, NormIndex::TWO, Mode::DirectionPreserving, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut checked = 0;
    while checked < 100 {
        let x = sample_state_in_ball(5, 2, NormIndex::TWO, 1.0, &mut rng);
        match lie_derivative_samples(&g, &spec, &x, LyapunovId::Disagreement) {
            Ok(interval) => {
                assert!(
                    interval.hi <= threshold + 1e-9,
                    "Lie derivative max {} exceeds {threshold}",
                    interval.hi
                );
                checked += 1;
            }
            Err(_) => continue, // on-consensus draw; practically unreachable
        }
    }

    // Discrete path: the slope of the disagreement function between
    // consecutive recorded samples, on the segments where the regularized
    // field coincides with the exact one (no signum argument inside the
    // boundary layer at either endpoint) before the consensus snap.
    let cfg = five_node_integrator();
    let slack = 10.0 * (cfg.h + cfg.epsilon);
    for mode in [Mode::DirectionPreserving, Mode::ComponentWise] {
        let spec = spec_with_tail(5, 2, NormIndex::TWO, mode, 1);
        let unsaturated = |s: &StateVector| {
            (0..4).all(|i| {
                let w = neighbor_sum(&g, s, i).unwrap();
                match mode {
                    Mode::DirectionPreserving => spec.p.norm(&w) >= cfg.epsilon,
                    Mode::ComponentWise => w.iter().all(|c| c.abs() >= cfg.epsilon),
                }
            })
        };
        let mut pairs = 0;
        for seed in 101..=110u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = sample_state_in_ball(5, 2, NormIndex::TWO, 1.0, &mut rng);
            let traj = simulate(&g, &spec, &x0, &cfg).unwrap();
            let t_star = traj.consensus_event().map(|e| e.t).unwrap_or(f64::INFINITY);
            let values: Vec<f64> = traj.states.iter().map(|s| disagreement(s, &lap)).collect();
            for m in 0..values.len() - 1 {
                if traj.times[m + 1] >= t_star {
                    break;
                }
                if !unsaturated(&traj.states[m]) || !unsaturated(&traj.states[m + 1]) {
                    continue;
                }
                let slope = (values[m + 1] - values[m]) / (traj.times[m + 1] - traj.times[m]);
                assert!(
                    slope <= threshold + slack,
                    "mode {mode:?} seed {seed} t {}: slope {slope} vs {threshold} + {slack}",
                    traj.times[m]
                );
                pairs += 1;
            }
        }
        // Component-wise runs saturate single components early, leaving
        // fewer fully off-layer pairs; the floor only guards vacuity.
        assert!(
            pairs > 50,
            "mode {mode:?}: only {pairs} off-layer sample pairs across seeds"
        );
    }
    let elapsed = start.elapsed();
    println!("criterion 5 (Lie-derivative decay bound, exact + discrete): PASS in {elapsed:?}");
}

#[test]
fn criterion_6_convergence_time_bound() {
    let _serial = serial();
    let start = Instant::now();

    // Every FiniteTime matrix run with the |I_c| = 1 bound attached.
    let (rows, _) = matrix_rows();
    let mut from_matrix = 0;
    for row in rows {
        if let (Some(t_star), Some(bound)) = (row.t_star, row.bound_t_star) {
            assert!(
                t_star <= bound,
                "{}: t* = {t_star} exceeds bound {bound}",
                row.job_desc
            );
            from_matrix += 1;
        }
    }
    assert!(
        from_matrix >= 20,
        "matrix must contribute the |I_c| = 1 cells, got {from_matrix}"
    );

    // Dedicated sweep on the five-node graph, |I_c| = 1, both modes.
    let g = five_node();
    let lap = laplacian(&g);
    let cfg = five_node_integrator();
    let jobs: Vec<(Mode, u64)> = [Mode::DirectionPreserving, Mode::ComponentWise]
        .into_iter()
        .flat_map(|mode| (201..=220u64).map(move |seed| (mode, seed)))
        .collect();
    let results = run_batch(&jobs, |&(mode, seed)| {
        let spec = spec_with_tail(5, 2, NormIndex::TWO, mode, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = sample_state_in_ball(5, 2, NormIndex::TWO, 1.0, &mut rng);
        let bound = convergence_time_bound(&lap, &x0, spec.p).unwrap();
        let traj = simulate(&g, &spec, &x0, &cfg).unwrap();
        (traj.consensus_event().map(|e| e.t), bound)
    });
    for ((mode, seed), (t_star, bound)) in jobs.iter().zip(&results) {
        let t_star = t_star.unwrap_or_else(|| panic!("mode {mode:?} seed {seed}: no consensus"));
        assert!(
            t_star <= *bound,
            "mode {mode:?} seed {seed}: t* = {t_star} exceeds bound {bound}"
        );
    }
    let total = from_matrix + results.len();
    assert!(total >= 50, "need 50+ bounded runs, got {total}");
    let elapsed = start.elapsed();
    println!("criterion 6 (t* <= convergence-time bound on {total} runs): PASS in {elapsed:?}");
}

#[test]
fn criterion_7_schur_laplacian_properties() {
    let _serial = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7000);
    let tol = 1e-9;
    let mut graphs = 0;
    let mut partitions = 0;
    while graphs < 200 {
        let n = rng.gen_range(2..=6);
        let g = random_connected(n, 0.4, &mut rng);
        let lap = laplacian(&g);
        graphs += 1;
        for mask in 1u32..(1 << n) - 1 {
            let keep: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let s = schur_complement(&lap, &keep).unwrap();
            partitions += 1;
            let m = s.nrows();
            for r in 0..m {
                if m >= 2 {
                    assert!(s[(r, r)] > tol, "diagonal must be positive: {s}");
                } else {
                    // Zero row sums force the 1x1 complement to vanish.
                    assert!(s[(r, r)].abs() <= tol);
                }
                let mut row_sum = 0.0;
                let mut col_sum = 0.0;
                for c in 0..m {
                    assert!((s[(r, c)] - s[(c, r)]).abs() <= tol, "symmetry: {s}");
                    if r != c {
                        assert!(s[(r, c)] <= tol, "off-diagonal must be <= 0: {s}");
                    }
                    row_sum += s[(r, c)];
                    col_sum += s[(c, r)];
                }
                assert!(row_sum.abs() <= tol, "row sums must vanish: {s}");
                assert!(col_sum.abs() <= tol, "column sums must vanish: {s}");
            }
            let eigs = s.clone().symmetric_eigen().eigenvalues;
            assert!(eigs.iter().all(|&e| e >= -tol), "PSD: {eigs:?}");
        }
    }
    let elapsed = start.elapsed();
    println!(
        "criterion 7 (Schur Laplacian properties, {graphs} graphs / {partitions} partitions): PASS in {elapsed:?}"
    );
}

#[test]
fn criterion_8_necessity_witness_persistence() {
    let _serial = serial();
    let start = Instant::now();
    let g = five_node();
    let lap = laplacian(&g);
    let cfg = IntegratorConfig {
        h: 2.5e-4,
        epsilon: 1e-3,
        t_max: 4.0,
        consensus_tol: 1e-8,
        record_stride: 40,
    };
    let limit = 10.0 * (cfg.h + cfg.epsilon);
    for mode in [Mode::DirectionPreserving, Mode::ComponentWise] {
        let spec = spec_with_tail(5, 2, NormIndex::TWO, mode, 2); // I_c = {4, 5}
        for seed in 101..=110u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = necessity_witness(&g, &spec, &mut rng).unwrap();
            let traj = simulate(&g, &spec, &x0, &cfg).unwrap();
            assert!(
                traj.consensus_event().is_none(),
                "mode {mode:?} seed {seed}: witness must not reach static consensus"
            );
            for (t, s) in traj.times.iter().zip(&traj.states) {
                for i in 0..3 {
                    let v = edge_lyapunov(s, &lap, i, spec.p).unwrap();
                    assert!(
                        v <= limit,
                        "mode {mode:?} seed {seed} t {t}: edge Lyapunov {v} exceeds {limit}"
                    );
                }
                assert!(
                    spread(s, spec.p) > 0.0,
                    "mode {mode:?} seed {seed} t {t}: spread hit zero"
                );
            }
        }
    }
    let elapsed = start.elapsed();
    println!("criterion 8 (necessity witness persistence, 20 runs): PASS in {elapsed:?}");
}

#[test]
fn criterion_9_rk4_order_sanity() {
    let _serial = serial();
    let start = Instant::now();
    let g = five_node();
    let lap = laplacian(&g);
    let spec = spec_with_tail(5, 2, NormIndex::TWO, Mode::DirectionPreserving, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let x0 = sample_state_in_ball(5, 2, NormIndex::TWO, 1.0, &mut rng);

    // Spectral solution of x' = -Lbar x, independent of the integrator.
    let eig = lap.matrix().clone().symmetric_eigen();
    let exact_at = |t: f64| {
        let mut out = StateVector::zeros(5, 2);
        for l in 0..2 {
            let column = DVector::from_fn(5, |i, _| x0.component(i, l));
            let coords = eig.eigenvectors.transpose() * column;
            let decayed = DVector::from_fn(5, |r, _| coords[r] * (-eig.eigenvalues[r] * t).exp());
            let back = &eig.eigenvectors * decayed;
            for i in 0..5 {
                out.flat_mut()[i * 2 + l] = back[i];
            }
        }
        out
    };

    let error_at = |h: f64| {
        let cfg = IntegratorConfig {
            h,
            epsilon: 1e-3,
            t_max: 1.0,
            consensus_tol: 1e-9,
            record_stride: (1.0 / h).round() as usize,
        };
        let traj = simulate(&g, &spec, &x0, &cfg).unwrap();
        let t_end = *traj.times.last().unwrap();
        assert!((t_end - 1.0).abs() < 1e-12);
        (traj.states.last().unwrap().flat() - exact_at(t_end).flat()).norm()
    };

    let e1 = error_at(0.02);
    let e2 = error_at(0.01);
    assert!(
        e1 / e2 >= 8.0,
        "halving h must shrink the error at least 8x: e(0.02) = {e1:.3e}, e(0.01) = {e2:.3e}"
    );
    let elapsed = start.elapsed();
    println!(
        "criterion 9 (RK4 order sanity, ratio {:.1} >= 8): PASS in {elapsed:?}",
        e1 / e2
    );
}

/// Scripted classify-iff check on the triangle: the remaining corner of the
/// theorem table, including the |I_c| = 0 caveat cell cross-checked against
/// the positive drift interval.
#[test]
fn theorem_pattern_on_triangle_including_caveat_cell() {
    let _serial = serial();
    let g = triangle();
    // The triangle's witness dynamics decay at rate 3 (Schur complement
    // eigenvalue), so the horizon stays short enough that the asymptotic
    // tail never crosses the snap threshold.
    let cfg = IntegratorConfig {
        h: 2.5e-4,
        epsilon: 1e-3,
        t_max: 4.0,
        consensus_tol: 1e-9,
        record_stride: 40,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(321);
    for cardinality in 0..=3usize {
        let spec = spec_with_tail(3, 1, NormIndex::TWO, Mode::DirectionPreserving, cardinality);
        let x0 = if cardinality >= 2 {
            necessity_witness(&g, &spec, &mut rng).unwrap()
        } else {
            sample_state_in_ball(3, 1, NormIndex::TWO, 1.0, &mut rng)
        };
        let traj = simulate(&g, &spec, &x0, &cfg).unwrap();
        let report = classify(&traj, &g, &spec).unwrap();
        match cardinality {
            1 => assert!(
                matches!(report.classification, Classification::FiniteTime { .. }),
                "|I_c| = 1 must be FiniteTime, got {:?}",
                report.classification
            ),
            2 | 3 => assert!(
                matches!(report.classification, Classification::Asymptotic { .. }),
                "|I_c| = {cardinality} must be Asymptotic, got {:?}",
                report.classification
            ),
            _ => {
                // All-signum: the regularized selection freezes at consensus,
                // but the exact Filippov set admits nonzero drift, so static
                // finite-time consensus is not a theorem here.
                assert!(!matches!(
                    report.classification,
                    Classification::Asymptotic { .. }
                ));
                let interval = consensus_drift_interval(&g).unwrap();
                assert!(interval.hi > 0.0);
            }
        }
        // Lemma conditions hold in every cell with |I| = 3, |I_c| >= 1; the
        // max-norm function must be monotone up to regularization slack.
        if cardinality >= 1 {
            assert!(
                report.lyapunov_monotone,
                "|I_c| = {cardinality}: max-norm Lyapunov not monotone"
            );
        }
    }
    println!("theorem pattern on the triangle (incl. |I_c| = 0 caveat cell): PASS");
}

/// Gradient elements of the max-norm Lyapunov function pair non-positively
/// with the (regularized) field along lemma-condition trajectories: the
/// discrete analog of the invariance-lemma derivative computation.
#[test]
fn max_norm_gradient_elements_certify_descent() {
    let _serial = serial();
    use signum_consensus::filippov::max_norm_gradient;
    use signum_consensus::simulate::regularized_field;
    let g = five_node();
    let cfg = IntegratorConfig {
        t_max: 2.0,
        ..five_node_integrator()
    };
    for (mode, p) in [
        (Mode::DirectionPreserving, NormIndex::TWO),
        (Mode::DirectionPreserving, NormIndex::Finite(3.0)),
        (Mode::ComponentWise, NormIndex::TWO),
    ] {
        let spec = spec_with_tail(5, 2, p, mode, 1);
        let ball = ball_norm_index(&spec);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let x0 = sample_state_in_ball(5, 2, ball, 1.0, &mut rng);
        let traj = simulate(&g, &spec, &x0, &cfg).unwrap();
        for s in traj.states.iter().step_by(10) {
            let field = regularized_field(&g, &spec, s, cfg.epsilon);
            for elem in max_norm_gradient(s, ball) {
                let pairing = elem.vector.dot(field.flat());
                assert!(
                    pairing <= 1e-9,
                    "mode {mode:?} p {p:?}: gradient element of agent {} pairs positively: {pairing}",
                    elem.agent
                );
            }
        }
    }
    println!("max-norm gradient elements certify descent: PASS");
}

/// The lemma-condition monotonicity invariant across the full spec matrix:
/// max-norm Lyapunov non-increase (5 eps slack) on every recorded pair.
#[test]
fn lyapunov_monotone_along_lemma_condition_trajectories() {
    let _serial = serial();
    let g5 = five_node();
    let g2 = path2();
    let jobs: Vec<u64> = (1..=20).collect();
    let failures = run_batch(&jobs, |&seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, n) = if seed % 4 == 0 { (&g2, 2) } else { (&g5, 5) };
        let cardinality = if n == 2 { 0 } else { 1 + (seed as usize % 3) };
        let mode = if seed % 2 == 0 {
            Mode::DirectionPreserving
        } else {
            Mode::ComponentWise
        };
        let p = [NormIndex::ONE, NormIndex::TWO, NormIndex::INF][(seed as usize / 2) % 3];
        let spec = spec_with_tail(n, 2, p, mode, cardinality);
        let ball = ball_norm_index(&spec);
        let x0 = sample_state_in_ball(n, 2, ball, 1.0, &mut rng);
        let cfg = IntegratorConfig {
            t_max: 2.0,
            ..five_node_integrator()
        };
        let traj = simulate(g, &spec, &x0, &cfg).unwrap();
        let values: Vec<f64> = traj
            .states
            .iter()
            .map(|s| lyapunov_max_norm(s, ball).value)
            .collect();
        values
            .windows(2)
            .any(|w| w[1] > w[0] + 5.0 * cfg.epsilon)
            .then_some(seed)
    });
    let failures: Vec<_> = failures.into_iter().flatten().collect();
    assert!(
        failures.is_empty(),
        "monotonicity violated for seeds {failures:?}"
    );
    println!("max-norm Lyapunov monotone along lemma-condition trajectories: PASS");
}
