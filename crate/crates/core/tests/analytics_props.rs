//! Oracle checks for the analytics kernels: LOESS against an
//! independent weighted-least-squares oracle, aggregation against a
//! naive two-pass oracle, and minimum search against a linear scan.

use cxrpipe::analytics::{
    aggregate_runs, find_global_min, loess_smooth, CurveStats, LoessConfig, MetricKind,
};
use cxrpipe::trainer::{LogPoint, RunLog};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Independent LOESS oracle: k nearest neighbors found by sorting
// distances, tricube weights, and the weighted normal equations solved
// in closed form (Cramer) in the centered coordinate.
// ---------------------------------------------------------------------------

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        (1.0 - u.powi(3)).powi(3)
    }
}

fn oracle_loess(xs: &[f64], ys: &[f64], span: f64, degree: usize) -> Vec<f64> {
    let n = xs.len();
    let k = (degree + 2).max((span * n as f64).ceil() as usize).min(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // k nearest by distance, ties toward the earlier index.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let da = (xs[a] - xs[i]).abs();
            let db = (xs[b] - xs[i]).abs();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        });
        let window: Vec<usize> = order[..k].to_vec();
        let dmax = window
            .iter()
            .map(|&j| (xs[j] - xs[i]).abs())
            .fold(0.0f64, f64::max);
        assert!(dmax > 0.0, "degenerate oracle window");

        // Weighted moments in t = x - x_i.
        let mut s = [0.0f64; 5]; // sum w t^p, p = 0..4
        let mut b = [0.0f64; 3]; // sum w t^p y, p = 0..2
        for &j in &window {
            let t = xs[j] - xs[i];
            let w = tricube(t.abs() / dmax);
            let mut tp = 1.0;
            for p in 0..=2 * degree {
                s[p] += w * tp;
                if p <= degree {
                    b[p] += w * tp * ys[j];
                }
                tp *= t;
            }
        }
        let value = match degree {
            1 => {
                // [s0 s1; s1 s2] [a0 a1]^T = [b0 b1]^T
                let det = s[0] * s[2] - s[1] * s[1];
                (b[0] * s[2] - s[1] * b[1]) / det
            }
            2 => {
                // 3x3 Cramer for the intercept.
                let det = s[0] * (s[2] * s[4] - s[3] * s[3]) - s[1] * (s[1] * s[4] - s[3] * s[2])
                    + s[2] * (s[1] * s[3] - s[2] * s[2]);
                let det0 = b[0] * (s[2] * s[4] - s[3] * s[3])
                    - s[1] * (b[1] * s[4] - b[2] * s[3])
                    + s[2] * (b[1] * s[3] - b[2] * s[2]);
                det0 / det
            }
            other => panic!("oracle supports degree 1 or 2, got {other}"),
        };
        out.push(value);
    }
    out
}

#[test]
fn loess_matches_oracle_on_uniform_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(501);
    let n = 50;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 * 10.0).collect();
    for case in 0..20 {
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for span in [0.2, 0.3, 0.5] {
            for degree in [1usize, 2] {
                let cfg = LoessConfig { span, degree };
                let ours = loess_smooth(&xs, &ys, &cfg).unwrap();
                let oracle = oracle_loess(&xs, &ys, span, degree);
                for (i, (a, b)) in ours.iter().zip(&oracle).enumerate() {
                    assert!(
                        (a - b).abs() < 1e-9,
                        "case {case} span {span} degree {degree} point {i}: {a} vs {b}"
                    );
                }
            }
        }
    }
}

#[test]
fn loess_matches_oracle_on_irregular_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(733);
    for case in 0..10 {
        let n = rng.gen_range(10..60);
        let mut xs: Vec<f64> = Vec::with_capacity(n);
        let mut x = 0.0;
        for _ in 0..n {
            x += rng.gen_range(0.1..3.0);
            xs.push(x);
        }
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let span = [0.25, 0.4, 0.8][case % 3];
        let degree = 1 + case % 2;
        let cfg = LoessConfig { span, degree };
        let ours = loess_smooth(&xs, &ys, &cfg).unwrap();
        let oracle = oracle_loess(&xs, &ys, span, degree);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn loess_polynomial_reproduction() {
    // Degree-d polynomials are reproduced exactly when the fit degree
    // is >= d.
    let xs: Vec<f64> = (0..50).map(|i| i as f64).collect();
    for (coeffs, degree) in [
        (vec![2.5], 1usize),               // constant, degree 1
        (vec![-1.0, 0.5], 1),              // linear, degree 1
        (vec![2.5], 2),                    // constant, degree 2
        (vec![-1.0, 0.5], 2),              // linear, degree 2
        (vec![1.0, -0.3, 0.02], 2),        // quadratic, degree 2
    ] {
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c))
            .collect();
        for span in [0.2, 0.5, 1.0] {
            let cfg = LoessConfig { span, degree };
            let smoothed = loess_smooth(&xs, &ys, &cfg).unwrap();
            for (s, y) in smoothed.iter().zip(&ys) {
                assert!(
                    (s - y).abs() < 1e-9,
                    "degree {degree} span {span}: {s} vs {y}"
                );
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Aggregation and minimum search against naive oracles.
// ---------------------------------------------------------------------------

fn random_runs(rng: &mut ChaCha8Rng, n_runs: usize, n_steps: usize) -> Vec<RunLog> {
    (0..n_runs)
        .map(|r| {
            let points = (1..=n_steps)
                .map(|i| LogPoint {
                    step: i as u64 * 10,
                    epoch: i as u64,
                    train_loss: rng.gen_range(0.0..2.0),
                    train_acc: rng.gen_range(0.0..1.0),
                    val_loss: rng.gen_range(0.0..2.0),
                    val_acc: rng.gen_range(0.0..1.0),
                })
                .collect();
            RunLog {
                points,
                run_id: format!("r{r}"),
                config_hash: String::new(),
            }
        })
        .collect()
}

#[test]
fn aggregate_matches_two_pass_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..20 {
        let n_runs = rng.gen_range(1..6);
        let n_steps = rng.gen_range(3..12);
        let runs = random_runs(&mut rng, n_runs, n_steps);
        let stats = aggregate_runs(&runs, MetricKind::ValLoss).unwrap();
        for (idx, &step) in stats.grid.iter().enumerate() {
            let values: Vec<f64> = runs
                .iter()
                .map(|r| {
                    r.points
                        .iter()
                        .find(|p| p.step == step)
                        .unwrap()
                        .val_loss
                })
                .collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let std = if values.len() < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (values.len() - 1) as f64)
                    .sqrt()
            };
            assert!((stats.mean[idx] - mean).abs() < 1e-12);
            assert!((stats.std[idx] - std).abs() < 1e-12);
        }
    }
}

#[test]
fn global_min_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..50 {
        let n = rng.gen_range(1..30);
        let grid: Vec<u64> = (1..=n as u64).map(|i| i * 5).collect();
        // Coarse values make ties likely, exercising the tie-break.
        let mean: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
        let stats = CurveStats {
            metric: MetricKind::ValLoss,
            grid: grid.clone(),
            mean: mean.clone(),
            std: vec![0.0; n],
            smoothed: Vec::new(),
        };
        let (step, value) = find_global_min(&stats, false).unwrap();
        let oracle_value = mean.iter().cloned().fold(f64::INFINITY, f64::min);
        let oracle_step = grid[mean.iter().position(|&v| v == oracle_value).unwrap()];
        assert_eq!(value, oracle_value);
        assert_eq!(step, oracle_step);
        assert!(mean.iter().all(|&v| value <= v));
    }
}
