//! Soft-margin SVM with a polynomial kernel, trained by SMO on the dual.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub degree: u32,
    pub offset: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            degree: 6,
            offset: 1.0,
        }
    }
}

/// Largest `|x.y + offset|` accepted before raising to the degree.
pub const KERNEL_BASE_LIMIT: f64 = 1e3;

pub fn poly_kernel(a: &[f64], b: &[f64], spec: &KernelSpec) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!(
            "kernel arguments have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if spec.degree < 1 {
        return Err(Error::param("kernel degree must be at least 1"));
    }
    let base = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() + spec.offset;
    if base.abs() > KERNEL_BASE_LIMIT {
        return Err(Error::Data(format!(
            "kernel base {base:.3e} exceeds {KERNEL_BASE_LIMIT:e}; inputs are not normalised"
        )));
    }
    Ok(base.powi(spec.degree as i32))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingSet {
    pub x: Vec<Vec<f64>>,
    /// +1 or -1.
    pub y: Vec<i8>,
}

impl TrainingSet {
    pub fn new(x: Vec<Vec<f64>>, y: Vec<i8>) -> Result<Self> {
        let set = Self { x, y };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.len() != self.y.len() {
            return Err(Error::dim("sample and label counts differ"));
        }
        let p = self.dim();
        if self.x.iter().any(|v| v.len() != p) {
            return Err(Error::dim("samples differ in dimension"));
        }
        if self.y.iter().any(|&l| l != 1 && l != -1) {
            return Err(Error::Data("labels must be +1 or -1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel: KernelSpec,
    /// Stop when the maximal KKT violation falls below this.
    pub tolerance: f64,
    pub max_updates: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 0.1,
            kernel: KernelSpec::default(),
            tolerance: 1e-3,
            max_updates: 100_000,
        }
    }
}

pub const FORMAT_VERSION: u32 = 1;

/// Multipliers at or below this fraction of the largest one are treated as zero.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format_version: u32,
    pub kernel: KernelSpec,
    pub c: f64,
    pub bias: f64,
    pub sv_dim: usize,
    pub svs: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub signed_alphas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: SvmModel,
    /// Multipliers for every training point, in input order.
    pub alphas: Vec<f64>,
    pub converged: bool,
    pub updates: usize,
    /// Dual objective `sum a - 1/2 a^T Q a`.
    pub objective: f64,
}

/// Kernel Gram matrix, row-major.
pub fn gram_matrix(x: &[Vec<f64>], spec: &KernelSpec) -> Result<Vec<f64>> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = poly_kernel(&x[i], &x[j], spec)?;
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    Ok(k)
}

/// Dual objective for multipliers `alpha` over Gram matrix `k`.
pub fn dual_objective(k: &[f64], y: &[i8], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * (y[i] * y[j]) as f64 * k[i * n + j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

pub fn train(data: &TrainingSet, cfg: &SvmConfig, seed: u64) -> Result<TrainOutcome> {
    data.validate()?;
    let n = data.len();
    if n < 2 {
        return Err(Error::Data("training needs at least two samples".into()));
    }
    if !data.y.contains(&1) || !data.y.contains(&-1) {
        return Err(Error::Data("training data must contain both classes".into()));
    }
    if !(cfg.c > 0.0) {
        return Err(Error::param("C must be positive"));
    }
    let c = cfg.c;
    let k = gram_matrix(&data.x, &cfg.kernel)?;
    let y: Vec<f64> = data.y.iter().map(|&l| l as f64).collect();
    let q = |i: usize, j: usize| y[i] * y[j] * k[i * n + j];

    // seeded scan order decides ties in working-set selection
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut alpha = vec![0.0; n];
    // gradient of 1/2 a^T Q a - e^T a
    let mut grad = vec![-1.0; n];
    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut updates = 0;
    let mut converged = false;
    while updates < cfg.max_updates {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for &t in &order {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < cfg.tolerance {
            converged = true;
            break;
        }

        let (ai_old, aj_old) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let quad = (q(i, i) + q(j, j) + 2.0 * q(i, j)).max(1e-12 * (q(i, i) + q(j, j)).max(1e-300));
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai_old - aj_old;
            let (mut ai, mut aj) = (ai_old + delta, aj_old + delta);
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
            alpha[i] = ai;
            alpha[j] = aj;
        } else {
            let quad = (q(i, i) + q(j, j) - 2.0 * q(i, j)).max(1e-12 * (q(i, i) + q(j, j)).max(1e-300));
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai_old + aj_old;
            let (mut ai, mut aj) = (ai_old - delta, aj_old + delta);
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
            alpha[i] = ai;
            alpha[j] = aj;
        }
        let (di, dj) = (alpha[i] - ai_old, alpha[j] - aj_old);
        for t in 0..n {
            grad[t] += q(t, i) * di + q(t, j) * dj;
        }
        updates += 1;
    }

    // bias from free multipliers, else the midpoint of the feasible interval
    let mut free_sum = 0.0;
    let mut free_count = 0usize;
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..n {
        let v = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += v;
            free_count += 1;
        } else if (alpha[t] >= c && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(v);
        } else {
            lb = lb.max(v);
        }
    }
    let bias = if free_count > 0 {
        free_sum / free_count as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };

    let amax = alpha.iter().copied().fold(0.0, f64::max);
    let cut = SUPPORT_THRESHOLD * amax;
    let mut svs = Vec::new();
    let mut signed_alphas = Vec::new();
    for t in 0..n {
        if alpha[t] > cut {
            svs.push(data.x[t].clone());
            signed_alphas.push(alpha[t] * y[t]);
        }
    }
    let objective = dual_objective(&k, &data.y, &alpha);
    Ok(TrainOutcome {
        model: SvmModel {
            format_version: FORMAT_VERSION,
            kernel: cfg.kernel,
            c,
            bias,
            sv_dim: data.dim(),
            svs,
            signed_alphas,
        },
        alphas: alpha,
        converged,
        updates,
        objective,
    })
}

impl SvmModel {
    /// Raw decision value.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.sv_dim {
            return Err(Error::dim(format!(
                "descriptor has {} values, model expects {}",
                x.len(),
                self.sv_dim
            )));
        }
        let mut s = self.bias;
        for (sv, a) in self.svs.iter().zip(&self.signed_alphas) {
            s += a * poly_kernel(sv, x, &self.kernel)?;
        }
        Ok(s)
    }

    /// Label (`+1` when the score is 0) and score.
    pub fn predict(&self, x: &[f64]) -> Result<(i8, f64)> {
        let s = self.score(x)?;
        Ok((if s >= 0.0 { 1 } else { -1 }, s))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Json {
            path: "<model>".into(),
            source: e,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Json {
            path: "<model>".into(),
            source: e,
        })?;
        let version = v.get("format_version").and_then(|f| f.as_u64()).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::ModelVersion(version));
        }
        let m: SvmModel = serde_json::from_value(v).map_err(|e| Error::Json {
            path: "<model>".into(),
            source: e,
        })?;
        if m.svs.len() != m.signed_alphas.len() || m.svs.iter().any(|s| s.len() != m.sv_dim) {
            return Err(Error::Data("model support vectors are inconsistent".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json { source, .. } => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn linear() -> KernelSpec {
        KernelSpec {
            degree: 1,
            offset: 1.0,
        }
    }

    #[test]
    fn kernel_values() {
        let spec = KernelSpec::default();
        assert_eq!(poly_kernel(&[0.0, 0.0], &[0.0, 0.0], &spec).unwrap(), 1.0);
        assert_eq!(poly_kernel(&[1.0, 0.0], &[1.0, 5.0], &spec).unwrap(), 64.0);
        assert!(poly_kernel(&[1.0], &[1.0, 2.0], &spec).is_err());
        assert!(poly_kernel(&[40.0], &[40.0], &spec).is_err());
    }

    #[test]
    fn kernel_matches_repeated_multiplication() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = KernelSpec::default();
        for _ in 0..200 {
            let a: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let base: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() + 1.0;
            let mut expect = 1.0;
            for _ in 0..6 {
                expect *= base;
            }
            let got = poly_kernel(&a, &b, &spec).unwrap();
            assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1e-300));
        }
    }

    #[test]
    fn symmetric_two_point_problem() {
        let data = TrainingSet::new(vec![vec![1.0], vec![-1.0]], vec![1, -1]).unwrap();
        let cfg = SvmConfig {
            c: 1e3,
            kernel: linear(),
            ..SvmConfig::default()
        };
        let out = train(&data, &cfg, 0).unwrap();
        assert!(out.converged);
        assert!((out.alphas[0] - out.alphas[1]).abs() < 1e-9);
        assert_eq!(out.model.predict(&[0.5]).unwrap().0, 1);
        assert_eq!(out.model.predict(&[-0.5]).unwrap().0, -1);
    }

    #[test]
    fn single_class_rejected() {
        let data = TrainingSet::new(vec![vec![1.0], vec![2.0]], vec![1, 1]).unwrap();
        assert!(matches!(train(&data, &SvmConfig::default(), 0), Err(Error::Data(_))));
        let one = TrainingSet::new(vec![vec![1.0]], vec![1]).unwrap();
        assert!(train(&one, &SvmConfig::default(), 0).is_err());
    }

    #[test]
    fn bad_labels_rejected() {
        assert!(TrainingSet::new(vec![vec![1.0], vec![2.0]], vec![1, 0]).is_err());
    }

    #[test]
    fn zero_score_predicts_positive() {
        let m = SvmModel {
            format_version: FORMAT_VERSION,
            kernel: linear(),
            c: 1.0,
            bias: 0.0,
            sv_dim: 1,
            svs: vec![vec![1.0]],
            signed_alphas: vec![0.0],
        };
        assert_eq!(m.predict(&[3.0]).unwrap(), (1, 0.0));
        assert!(m.predict(&[1.0, 2.0]).is_err());
    }

    fn xor_set() -> TrainingSet {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (i, &(cx, cy)) in [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)].iter().enumerate() {
            for k in 0..3 {
                let j = 0.15 * k as f64;
                x.push(vec![cx * (0.8 + j), cy * (1.0 - 0.5 * j)]);
                y.push(if i < 2 { 1 } else { -1 });
            }
        }
        TrainingSet::new(x, y).unwrap()
    }

    #[test]
    fn xor_is_learned_exactly() {
        let data = xor_set();
        let cfg = SvmConfig {
            c: 10.0,
            ..SvmConfig::default()
        };
        let out = train(&data, &cfg, 7).unwrap();
        assert!(out.converged);
        for (x, &y) in data.x.iter().zip(&data.y) {
            assert_eq!(out.model.predict(x).unwrap().0, y);
        }
        let s: f64 = out.alphas.iter().zip(&data.y).map(|(a, &y)| a * y as f64).sum();
        assert!(s.abs() <= 1e-6);
        assert!(out.alphas.iter().all(|&a| (0.0..=cfg.c).contains(&a)));
    }

    #[test]
    fn fixed_seed_gives_identical_model() {
        let data = xor_set();
        let cfg = SvmConfig {
            c: 10.0,
            ..SvmConfig::default()
        };
        assert_eq!(train(&data, &cfg, 3).unwrap().model, train(&data, &cfg, 3).unwrap().model);
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let data = xor_set();
        let m = train(&data, &SvmConfig { c: 10.0, ..SvmConfig::default() }, 0).unwrap().model;
        let back = SvmModel::from_json(&m.to_json().unwrap()).unwrap();
        for x in &data.x {
            let (a, b) = (m.score(x).unwrap(), back.score(x).unwrap());
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn unknown_format_version_rejected() {
        let data = xor_set();
        let m = train(&data, &SvmConfig::default(), 0).unwrap().model;
        let text = m.to_json().unwrap().replace("\"format_version\":1", "\"format_version\":9");
        assert!(matches!(SvmModel::from_json(&text), Err(Error::ModelVersion(9))));
    }

    #[test]
    fn missing_model_file_names_path() {
        let err = SvmModel::load("/nonexistent/model.json").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.json"));
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let data = xor_set();
        let cfg = SvmConfig {
            c: 10.0,
            max_updates: 1,
            ..SvmConfig::default()
        };
        let out = train(&data, &cfg, 0).unwrap();
        assert!(!out.converged);
        assert_eq!(out.updates, 1);
    }
}
