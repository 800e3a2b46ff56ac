mod common;

use common::random_spd;
use hybrid_spmv::{
    cg_solve, cg_solve_observed, create_context, create_fabric, gen_extruded_laplacian,
    spmv_serial, CsrMatrix, ExecConfig, ExecModel, LatencyModel, MultContext,
    DEFAULT_MAX_ITERATIONS,
};

fn context(a: &CsrMatrix, model: ExecModel, nranks: usize, threads: usize) -> MultContext {
    create_context(
        a,
        ExecConfig::new(model, nranks, threads),
        create_fabric(nranks, LatencyModel::zero()),
    )
    .unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn true_relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = spmv_serial(a, x).unwrap();
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    norm(&r) / norm(b)
}

/// Textbook Jacobi-PCG on plain slices, sharing nothing with the library
/// beyond the matrix accessors.
fn reference_pcg(a: &CsrMatrix, b: &[f64], rtol: f64, max_it: usize) -> (Vec<f64>, usize) {
    let n = a.nrows();
    let mul = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let (cols, vals) = a.row(i);
                cols.iter().zip(vals).map(|(&c, &w)| w * v[c]).sum()
            })
            .collect()
    };
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let d: Vec<f64> = (0..n).map(|i| a.get(i, i).unwrap_or(0.0)).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&d).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let bn = norm(b);
    for it in 1..=max_it {
        let q = mul(&p);
        let alpha = rz / dot(&p, &q);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if norm(&r) / bn <= rtol {
            return (x, it);
        }
        z = r.iter().zip(&d).map(|(r, d)| r / d).collect();
        let next = dot(&r, &z);
        for i in 0..n {
            p[i] = z[i] + next / rz * p[i];
        }
        rz = next;
    }
    (x, max_it)
}

/// Dense Cholesky solve.
fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let m = a.to_dense();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (m[i][i] - s).sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    x
}

#[test]
fn laplacian_converges_like_reference() {
    let a = gen_extruded_laplacian(8, 8, 16).unwrap();
    let b = vec![1.0; a.nrows()];
    let (x_ref, it_ref) = reference_pcg(&a, &b, 1e-6, 1000);
    let mut ctx = context(&a, ExecModel::Task, 2, 3);
    let (x, rep) = cg_solve(&mut ctx, &b, 1e-6, DEFAULT_MAX_ITERATIONS).unwrap();
    assert!(rep.converged);
    assert!(rep.iterations < 200);
    assert!(
        rep.iterations.abs_diff(it_ref) <= 2,
        "{} vs {it_ref}",
        rep.iterations
    );
    assert!(true_relative_residual(&a, &x, &b) <= 1e-6);
    let diff: Vec<f64> = x.iter().zip(&x_ref).map(|(a, b)| a - b).collect();
    assert!(norm(&diff) <= 1e-5 * norm(&x_ref));
}

#[test]
fn models_agree_bitwise_at_fixed_rank_count() {
    let a = random_spd(150, 0.05, 9);
    let b: Vec<f64> = (0..150).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    for nranks in [1, 3] {
        let mut outcomes = Vec::new();
        for model in ExecModel::ALL {
            if model == ExecModel::Serial && nranks > 1 {
                continue;
            }
            let mut ctx = context(&a, model, nranks, 3);
            let (x, rep) = cg_solve(&mut ctx, &b, 1e-9, DEFAULT_MAX_ITERATIONS).unwrap();
            outcomes.push((model, x, rep.iterations));
        }
        for (model, x, it) in &outcomes[1..] {
            assert_eq!(*it, outcomes[0].2, "{model}");
            assert_eq!(x, &outcomes[0].1, "{model}");
        }
    }
}

#[test]
fn rank_count_changes_iterations_by_at_most_two() {
    let a = gen_extruded_laplacian(6, 6, 10).unwrap();
    let b: Vec<f64> = (0..a.nrows()).map(|i| (i as f64 * 0.37).sin()).collect();
    let rtol = 1e-8;
    let mut counts = Vec::new();
    for nranks in 1..=4 {
        let mut ctx = context(&a, ExecModel::Vector, nranks, 2);
        let (x, rep) = cg_solve(&mut ctx, &b, rtol, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(rep.converged);
        assert!(rep.final_relative_residual <= rtol);
        assert!(true_relative_residual(&a, &x, &b) <= 10.0 * rtol);
        counts.push(rep.iterations);
    }
    let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
    assert!(hi - lo <= 2, "{counts:?}");
}

#[test]
fn energy_norm_error_never_increases() {
    for (seed, n) in [(1u64, 40usize), (2, 120), (3, 200)] {
        let a = random_spd(n, 0.08, seed);
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64).collect();
        let x_star = dense_solve(&a, &b);
        let energy = |x: &[f64]| {
            let e: Vec<f64> = x.iter().zip(&x_star).map(|(x, s)| x - s).collect();
            let ae = spmv_serial(&a, &e).unwrap();
            e.iter().zip(&ae).map(|(e, ae)| e * ae).sum::<f64>().sqrt()
        };
        let mut history = vec![energy(&vec![0.0; n])];
        let mut ctx = context(&a, ExecModel::TaskBalanced, 2, 3);
        cg_solve_observed(&mut ctx, &b, 1e-12, DEFAULT_MAX_ITERATIONS, |_, x, _| {
            history.push(energy(x))
        })
        .unwrap();
        for w in history.windows(2) {
            // Rounding in the error itself is the only allowed growth.
            assert!(
                w[1] <= w[0] * (1.0 + 1e-9) + 1e-12,
                "n={n}: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn unreachable_tolerance_runs_to_the_cap() {
    assert_eq!(DEFAULT_MAX_ITERATIONS, 10_000);
    let a = gen_extruded_laplacian(2, 2, 3).unwrap();
    let b: Vec<f64> = (0..a.nrows()).map(|i| 1.0 / (i + 1) as f64).collect();
    let mut ctx = context(&a, ExecModel::Vector, 2, 2);
    let (_, rep) = cg_solve(&mut ctx, &b, 1e-300, 9).unwrap();
    assert!(!rep.converged);
    assert_eq!(rep.iterations, 9);
    assert_eq!(rep.spmv_count, 10);
}
