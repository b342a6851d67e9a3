//! Test-side reference implementations, independent of the library code paths.

#![allow(dead_code)]

use std::f64::consts::PI;

use mothscan_core::hcs::HcsParams;
use mothscan_core::imaging::CurvinessField;
use mothscan_core::svm::KernelSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Q_ij = y_i y_j k(x_i, x_j)` by direct power evaluation.
pub fn q_matrix(x: &[Vec<f64>], y: &[i8], spec: &KernelSpec) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
            let mut k = 1.0;
            for _ in 0..spec.degree {
                k *= dot + spec.offset;
            }
            q[i][j] = (y[i] * y[j]) as f64 * k;
        }
    }
    q
}

pub fn dual_value(q: &[Vec<f64>], a: &[f64]) -> f64 {
    let n = a.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * q[i][j];
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, y.a = 0}` by bisection on the multiplier.
fn project(v: &[f64], y: &[i8], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| (vi - lam * yi as f64).clamp(0.0, c))
            .collect()
    };
    let g = |lam: f64| -> f64 { at(lam).iter().zip(y).map(|(a, &yi)| a * yi as f64).sum() };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Accelerated projected gradient on the SVM dual; returns the best objective value.
pub fn projected_gradient_dual(q: &[Vec<f64>], y: &[i8], c: f64, iterations: usize) -> f64 {
    let n = q.len();
    // power iteration for the Lipschitz constant
    let mut v = vec![1.0; n];
    let mut lip = 0.0;
    for _ in 0..500 {
        let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * v[j]).sum()).collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lip = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
    }
    let step = 1.0 / (1.01 * lip.max(1e-12));
    let mut a = vec![0.0; n];
    let mut z = a.clone();
    let mut t = 1.0f64;
    let mut best = dual_value(q, &a);
    for _ in 0..iterations {
        let g: Vec<f64> = (0..n).map(|i| (0..n).map(|j| q[i][j] * z[j]).sum::<f64>() - 1.0).collect();
        let next = project(&z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect::<Vec<_>>(), y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next
            .iter()
            .zip(&a)
            .map(|(n1, a0)| n1 + (t - 1.0) / t_next * (n1 - a0))
            .collect();
        a = next;
        t = t_next;
        best = best.max(dual_value(q, &a));
    }
    best
}

/// Largest KKT residual of a trained multiplier vector, measured through decision values.
pub fn kkt_residual(alphas: &[f64], y: &[i8], c: f64, margins: &[f64]) -> f64 {
    let amax = alphas.iter().copied().fold(0.0, f64::max);
    let zero = 1e-8 * amax;
    let mut worst = 0.0f64;
    for ((&a, &yi), &f) in alphas.iter().zip(y).zip(margins) {
        let m = yi as f64 * f;
        let r = if a <= zero {
            (1.0 - m).max(0.0)
        } else if a >= c * (1.0 - 1e-9) {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(r);
    }
    worst
}

/// XOR layout: 3 jittered points around each of the four diagonal corners.
pub fn xor_points() -> (Vec<Vec<f64>>, Vec<i8>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, &(cx, cy)) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)].iter().enumerate() {
        for k in 0..3 {
            let j = 0.15 * k as f64;
            x.push(vec![cx * (0.8 + j), cy * (1.0 - 0.5 * j)]);
            y.push(if i < 2 { 1 } else { -1 });
        }
    }
    (x, y)
}

/// Two uniform square blobs at `(+-gap, 0)`.
pub fn blobs(n: usize, gap: f64, spread: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<i8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        x.push(vec![
            s * gap + rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
        ]);
        y.push(s as i8);
    }
    (x, y)
}

/// Overlapping random labelled points, for soft-margin problems.
pub fn noisy_points(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<i8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let label: i8 = if i % 2 == 0 { 1 } else { -1 };
        let shift = 0.3 * label as f64;
        x.push(vec![shift + rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)]);
        y.push(label);
    }
    (x, y)
}

/// Naive HCS over a magnitude/orientation field: blocks, cells, pixels and
/// every bin centre visited explicitly with triangular weights.
pub fn naive_hcs(cs: &CurvinessField, p: &HcsParams) -> Vec<f64> {
    let width = PI / p.bins as f64;
    let bx = (p.window.0 - p.block.0) / p.stride.0 + 1;
    let by = (p.window.1 - p.block.1) / p.stride.1 + 1;
    let (ncx, ncy) = (p.block.0 / p.cell.0, p.block.1 / p.cell.1);
    let mut out = Vec::new();
    for j in 0..by {
        for i in 0..bx {
            let mut block = Vec::new();
            for cy in 0..ncy {
                for cx in 0..ncx {
                    let mut hist = vec![0.0; p.bins];
                    for y in 0..p.cell.1 {
                        for x in 0..p.cell.0 {
                            let px = i * p.stride.0 + cx * p.cell.0 + x;
                            let py = j * p.stride.1 + cy * p.cell.1 + y;
                            let t = cs.orientation.get(px, py);
                            let m = cs.magnitude.get(px, py);
                            for (k, h) in hist.iter_mut().enumerate() {
                                let centre = PI / (2 * p.bins) as f64 * (2 * k + 1) as f64;
                                let d = (t - centre).abs();
                                let d = d.min(PI - d);
                                if d < width {
                                    *h += m * (1.0 - d / width);
                                }
                            }
                        }
                    }
                    block.extend(hist);
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + 1e-6).sqrt();
            out.extend(block.iter().map(|v| v / norm));
        }
    }
    out
}

/// Smallest eigenvalue and trace of a symmetric row-major matrix.
pub fn min_eigenvalue(k: &[f64], n: usize) -> (f64, f64) {
    let m = nalgebra::DMatrix::from_row_slice(n, n, k);
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    (min, m.trace())
}
