mod common;

use common::*;
use mothscan_core::svm::{gram_matrix, train, KernelSpec, SvmConfig, TrainingSet};

struct Toy {
    name: &'static str,
    x: Vec<Vec<f64>>,
    y: Vec<i8>,
    cfg: SvmConfig,
}

fn toys() -> Vec<Toy> {
    let deg6 = KernelSpec::default();
    let deg2 = KernelSpec { degree: 2, offset: 1.0 };
    let (xx, xy) = xor_points();
    let (bx, by) = blobs(16, 1.0, 0.5, 4);
    let (nx, ny) = noisy_points(20, 9);
    let (sx, sy) = noisy_points(14, 21);
    vec![
        Toy { name: "xor-deg6-c10", x: xx, y: xy, cfg: SvmConfig { c: 10.0, kernel: deg6, ..SvmConfig::default() } },
        Toy { name: "blobs-deg2-c1", x: bx, y: by, cfg: SvmConfig { c: 1.0, kernel: deg2, ..SvmConfig::default() } },
        Toy { name: "noisy-deg6-c0.1", x: nx, y: ny, cfg: SvmConfig { c: 0.1, kernel: deg6, ..SvmConfig::default() } },
        Toy { name: "noisy-deg2-c5", x: sx, y: sy, cfg: SvmConfig { c: 5.0, kernel: deg2, ..SvmConfig::default() } },
    ]
}

#[test]
fn smo_matches_projected_gradient_on_toys() {
    for t in toys() {
        let data = TrainingSet::new(t.x.clone(), t.y.clone()).unwrap();
        let out = train(&data, &t.cfg, 1).unwrap();
        assert!(out.converged, "{}", t.name);
        let q = q_matrix(&t.x, &t.y, &t.cfg.kernel);
        let reference = projected_gradient_dual(&q, &t.y, t.cfg.c, 20_000);
        let smo = dual_value(&q, &out.alphas);
        assert!((smo - reference).abs() <= 1e-3, "{}: smo {smo} reference {reference}", t.name);

        let margins: Vec<f64> = t.x.iter().map(|x| out.model.score(x).unwrap()).collect();
        let kkt = kkt_residual(&out.alphas, &t.y, t.cfg.c, &margins);
        assert!(kkt <= 1e-2, "{}: kkt {kkt}", t.name);
        let balance: f64 = out.alphas.iter().zip(&t.y).map(|(a, &y)| a * y as f64).sum();
        assert!(balance.abs() <= 1e-6);
        assert!(out.alphas.iter().all(|&a| a >= 0.0 && a <= t.cfg.c));
    }
}

#[test]
fn gram_matrices_are_psd() {
    for t in toys() {
        let k = gram_matrix(&t.x, &t.cfg.kernel).unwrap();
        let n = t.x.len();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(k[i * n + j], k[j * n + i]);
            }
        }
        let (min, trace) = min_eigenvalue(&k, n);
        assert!(min >= -1e-8 * trace, "{}: {min}", t.name);
    }
}

#[test]
fn separable_blobs_are_learned_exactly() {
    let (x, y) = blobs(200, 1.5, 1.0, 2);
    let data = TrainingSet::new(x.clone(), y.clone()).unwrap();
    let cfg = SvmConfig { c: 10.0, ..SvmConfig::default() };
    let out = train(&data, &cfg, 0).unwrap();
    let errors = x.iter().zip(&y).filter(|(v, &l)| out.model.predict(v).unwrap().0 != l).count();
    assert_eq!(errors, 0);
    let balance: f64 = out.alphas.iter().zip(&y).map(|(a, &l)| a * l as f64).sum();
    assert!(balance.abs() <= 1e-6);
}

#[test]
fn margin_support_vectors_sit_on_the_margin() {
    let (x, y) = xor_points();
    let data = TrainingSet::new(x.clone(), y.clone()).unwrap();
    let cfg = SvmConfig { c: 10.0, ..SvmConfig::default() };
    let out = train(&data, &cfg, 0).unwrap();
    let amax = out.alphas.iter().copied().fold(0.0, f64::max);
    let mut checked = 0;
    for ((v, &l), &a) in x.iter().zip(&y).zip(&out.alphas) {
        if a > 1e-8 * amax && a < cfg.c {
            let s = out.model.score(v).unwrap();
            assert!((l as f64 * s - 1.0).abs() <= 5e-2);
            checked += 1;
        }
    }
    assert!(checked > 0);
}
