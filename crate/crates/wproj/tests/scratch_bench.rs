// Scratch timings; run with:
//   cargo test --release -p wproj --test scratch_bench -- --ignored --nocapture
use std::time::Instant;

use wproj::measures::DiscreteMeasure;
use wproj::ot::{sinkhorn_potentials, solve_exact, ExactOptions, SinkhornParams};
use wproj::projection::{project, ProjectOptions, SolverKind};
use wproj::sim::{sample_gaussian, stream_rng, Equicorrelated, GaussianDesign};

fn gaussian_pair(n: usize, d: usize, mu0: f64, mu1: f64, seed: u64) -> (DiscreteMeasure, DiscreteMeasure) {
    let cov = Equicorrelated { rho: 0.8 };
    let mut r0 = stream_rng(seed, 0);
    let mut r1 = stream_rng(seed, 1);
    let a = DiscreteMeasure::from_samples(sample_gaussian(n, d, mu0, cov, &mut r0).unwrap()).unwrap();
    let b = DiscreteMeasure::from_samples(sample_gaussian(n, d, mu1, cov, &mut r1).unwrap()).unwrap();
    (a, b)
}

#[test]
#[ignore]
fn bench_exact_sizes() {
    for n in [500usize, 1000, 2000] {
        let (a, b) = gaussian_pair(n, 10, 10.0, 50.0, 7);
        let t = Instant::now();
        let plan = solve_exact(&a, &b, &ExactOptions::default()).unwrap();
        println!(
            "exact n={n}: {:.2}s cost={:.3} residual={:.2e}",
            t.elapsed().as_secs_f64(),
            plan.cost(),
            plan.marginal_residual()
        );
    }
}

#[test]
#[ignore]
fn bench_exact_rect() {
    let (a, _) = gaussian_pair(2000, 3, 10.0, 50.0, 7);
    let (b, _) = gaussian_pair(4000, 3, 10.2, 50.0, 8);
    let t = Instant::now();
    let plan = solve_exact(&a, &b, &ExactOptions::default()).unwrap();
    println!(
        "exact 2000x4000 d=3: {:.2}s cost={:.3}",
        t.elapsed().as_secs_f64(),
        plan.cost()
    );
}

#[test]
#[ignore]
fn bench_sinkhorn_sizes() {
    for (n, tol) in [(4000usize, 1e-5), (10_000, 1e-5), (16_000, 1e-5)] {
        let (a, b) = gaussian_pair(n, 10, 10.0, 50.0, 7);
        let t = Instant::now();
        let pots = sinkhorn_potentials(
            &a,
            &b,
            &SinkhornParams {
                tol,
                max_iter: 2000,
                ..Default::default()
            },
        )
        .unwrap();
        println!(
            "sinkhorn n={n}: {:.2}s iters={} converged={} residual={:.2e}",
            t.elapsed().as_secs_f64(),
            pots.iterations,
            pots.converged,
            pots.marginal_residual
        );
    }
}

#[test]
#[ignore]
fn bench_project_gaussian_paper() {
    // The headline run: d=10, three controls.
    for (n, solver) in [
        (2000usize, SolverKind::Exact),
        (10_000, SolverKind::Entropic),
    ] {
        let (target, controls) = GaussianDesign::standard().sample(n, 42).unwrap();
        let t = Instant::now();
        let opts = ProjectOptions {
            solver,
            sinkhorn: SinkhornParams {
                tol: 1e-5,
                max_iter: 2000,
                ..Default::default()
            },
            ..Default::default()
        };
        let res = project(&target, &controls, &opts).unwrap();
        println!(
            "project n={n} {:?}: {:.2}s lambda={:?} objective={:.4} kkt={:.2e} unique={}",
            solver,
            t.elapsed().as_secs_f64(),
            res.lambda,
            res.objective,
            res.kkt_gap,
            res.unique
        );
    }
}
