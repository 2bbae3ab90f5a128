//! Exact-GP flow models against an independent dense Gauss-Jordan solve.

use handover_core::dataset::{ReceiverPose, Trajectory};
use handover_core::spgp::{finite_difference_velocities, FlowModel, KernelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn se(k: &KernelParams, a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = (a[0] - b[0]) / k.lengthscale[0];
    let dy = (a[1] - b[1]) / k.lengthscale[1];
    k.signal_variance * (-0.5 * (dx * dx + dy * dy)).exp()
}

/// Solve `A X = B` by Gauss-Jordan elimination with partial pivoting.
fn gauss_jordan(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for v in b[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row][col];
                if f != 0.0 {
                    for c in 0..n {
                        a[row][c] -= f * a[col][c];
                    }
                    for c in 0..b[row].len() {
                        b[row][c] -= f * b[col][c];
                    }
                }
            }
        }
    }
    b
}

fn random_walk(rng: &mut ChaCha8Rng) -> Trajectory<ReceiverPose> {
    let n = rng.random_range(10..120);
    let mut p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
    let mut heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let speed = rng.random_range(0.2..1.5);
    let poses = (0..n).map(|_| {
        heading += rng.random_range(-0.2..0.2);
        p[0] += speed / 30.0 * heading.cos();
        p[1] += speed / 30.0 * heading.sin();
        ReceiverPose::new(p[0], p[1])
    });
    Trajectory::from_poses(poses.collect::<Vec<_>>(), 30.0, 0.0).unwrap()
}

#[test]
fn exact_model_matches_dense_solve_on_random_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let traj = random_walk(&mut rng);
        let kernel = KernelParams {
            lengthscale: [rng.random_range(0.1..1.0), rng.random_range(0.1..1.0)],
            signal_variance: rng.random_range(0.1..2.0),
            noise_variance: rng.random_range(1e-4..1e-1),
        };
        let model = FlowModel::fit(&traj, 1.0, kernel).unwrap();
        assert!(model.is_exact());

        let x: Vec<[f64; 2]> = traj.poses().map(|p| [p.x, p.y]).collect();
        let y = finite_difference_velocities(&traj).unwrap();
        let n = x.len();
        let queries: Vec<[f64; 2]> = (0..20)
            .map(|q| {
                if q % 4 == 0 {
                    x[rng.random_range(0..n)]
                } else {
                    let c = x[rng.random_range(0..n)];
                    [c[0] + rng.random_range(-1.0..1.0), c[1] + rng.random_range(-1.0..1.0)]
                }
            })
            .collect();
        let gram: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| se(&kernel, x[i], x[j]) + if i == j { kernel.noise_variance } else { 0.0 }).collect())
            .collect();
        // right-hand sides: both velocity components, then one column per query
        let rhs: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = vec![y[i][0], y[i][1]];
                row.extend(queries.iter().map(|q| se(&kernel, x[i], *q)));
                row
            })
            .collect();
        let sol = gauss_jordan(gram, rhs);
        for (qi, q) in queries.iter().enumerate() {
            let kq: Vec<f64> = x.iter().map(|xi| se(&kernel, *xi, *q)).collect();
            let mean = [
                (0..n).map(|i| kq[i] * sol[i][0]).sum::<f64>(),
                (0..n).map(|i| kq[i] * sol[i][1]).sum::<f64>(),
            ];
            let var = (kernel.signal_variance - (0..n).map(|i| kq[i] * sol[i][2 + qi]).sum::<f64>()).max(0.0);
            let got = model.predict(ReceiverPose::new(q[0], q[1])).unwrap();
            for d in 0..2 {
                let dev = (got.mean[d] - mean[d]).abs() / (1.0 + mean[d].abs());
                worst = worst.max(dev);
            }
            worst = worst.max((got.variance - var).abs() / (1.0 + var));
        }
    }
    assert!(worst <= 1e-8, "max relative deviation {worst:e}");
}
