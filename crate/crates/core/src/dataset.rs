//! Labelled patches, seeded augmentation, parent-grouped folds and
//! cross-validated accuracy.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hcs::{compute_hcs, HcsParams};
use crate::imaging::gaussian_smooth;
use crate::raster::GrayImage;
use crate::svm::{train, SvmConfig, TrainingSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentOp {
    Rotation,
    Translation,
    Blur,
    Noise,
    Aspect,
}

impl AugmentOp {
    pub const ALL: [AugmentOp; 5] = [
        AugmentOp::Rotation,
        AugmentOp::Translation,
        AugmentOp::Blur,
        AugmentOp::Noise,
        AugmentOp::Aspect,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Original,
    Augmented {
        op: AugmentOp,
        seed: u64,
        parent_id: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    pub id: String,
    pub image: GrayImage,
    /// +1 moth, -1 anything else.
    pub label: i8,
    pub provenance: Provenance,
}

impl PatchRecord {
    pub fn original(id: impl Into<String>, image: GrayImage, label: i8) -> Self {
        Self {
            id: id.into(),
            image,
            label,
            provenance: Provenance::Original,
        }
    }

    pub fn is_original(&self) -> bool {
        matches!(self.provenance, Provenance::Original)
    }

    /// Own id for originals, the parent's for augmented copies.
    pub fn parent_id(&self) -> &str {
        match &self.provenance {
            Provenance::Original => &self.id,
            Provenance::Augmented { parent_id, .. } => parent_id,
        }
    }
}

/// Sample `img` through the inverse map `f(x, y) -> (sx, sy)`, replicating edges.
fn warp(img: &GrayImage, f: impl Fn(f64, f64) -> (f64, f64)) -> GrayImage {
    GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let (sx, sy) = f(x as f64, y as f64);
        img.sample_bilinear(sx, sy)
    })
}

/// Apply one augmentation with parameters drawn from `rng`.
pub fn apply_op(img: &GrayImage, op: AugmentOp, rng: &mut impl Rng) -> Result<GrayImage> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let mut out = match op {
        AugmentOp::Rotation => {
            let t = rng.random_range(-30.0f64..=30.0).to_radians();
            let (s, c) = t.sin_cos();
            warp(img, |x, y| {
                let (dx, dy) = (x - cx, y - cy);
                (cx + c * dx + s * dy, cy - s * dx + c * dy)
            })
        }
        AugmentOp::Translation => {
            let tx = rng.random_range(-0.1..=0.1) * w;
            let ty = rng.random_range(-0.1..=0.1) * h;
            warp(img, |x, y| (x - tx, y - ty))
        }
        AugmentOp::Blur => gaussian_smooth(img, rng.random_range(0.5..=1.5))?,
        AugmentOp::Noise => {
            let (lo, hi) = img.min_max();
            let std = rng.random_range(0.01..=0.05) * (hi - lo).max(f64::EPSILON);
            let normal = Normal::new(0.0, std).map_err(|e| Error::param(e.to_string()))?;
            let mut o = img.clone();
            for v in o.data_mut() {
                *v += normal.sample(rng);
            }
            o
        }
        AugmentOp::Aspect => {
            let f = rng.random_range(0.8..=1.25);
            warp(img, |x, y| (cx + (x - cx) / f, y))
        }
    };
    out.clamp01();
    Ok(out)
}

/// Seed of the `i`-th copy.
fn copy_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn augment(p: &PatchRecord, n_copies: usize, seed: u64) -> Result<Vec<PatchRecord>> {
    if !p.is_original() {
        return Err(Error::Contract(format!("{} is already an augmented copy", p.id)));
    }
    (0..n_copies)
        .map(|i| {
            let s = copy_seed(seed, i);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let op = AugmentOp::ALL[rng.random_range(0..AugmentOp::ALL.len())];
            Ok(PatchRecord {
                id: format!("{}~aug{i}", p.id),
                image: apply_op(&p.image, op, &mut rng)?,
                label: p.label,
                provenance: Provenance::Augmented {
                    op,
                    seed: s,
                    parent_id: p.id.clone(),
                },
            })
        })
        .collect()
}

/// Copies per original so that originals plus copies total `target`.
///
/// Every original gets `floor(ratio) - 1` copies plus one more with the
/// fractional probability; the count is then corrected to the exact target
/// by moving extras between randomly chosen originals.
pub fn augmentation_quota(n_originals: usize, target: usize, seed: u64) -> Result<Vec<usize>> {
    if n_originals == 0 {
        return Err(Error::param("no originals to augment"));
    }
    if target < n_originals {
        return Err(Error::param(format!(
            "target {target} is below the {n_originals} originals"
        )));
    }
    let ratio = target as f64 / n_originals as f64;
    let base = ratio.floor() as usize - 1;
    let p = ratio - ratio.floor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut copies: Vec<usize> = (0..n_originals)
        .map(|_| base + usize::from(rng.random_bool(p.clamp(0.0, 1.0))))
        .collect();
    let total = |c: &Vec<usize>| n_originals + c.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..n_originals).collect();
    order.shuffle(&mut rng);
    let mut cursor = order.iter().cycle();
    while total(&copies) > target {
        let &i = cursor.next().expect("cycle");
        if copies[i] > base {
            copies[i] -= 1;
        }
    }
    while total(&copies) < target {
        let &i = cursor.next().expect("cycle");
        if copies[i] == base {
            copies[i] += 1;
        }
    }
    Ok(copies)
}

/// Originals followed by their copies, `target` records in total.
pub fn augment_to(originals: &[PatchRecord], target: usize, seed: u64) -> Result<Vec<PatchRecord>> {
    let quota = augmentation_quota(originals.len(), target, seed)?;
    let mut out = originals.to_vec();
    for (i, (p, &n)) in originals.iter().zip(&quota).enumerate() {
        out.extend(augment(p, n, copy_seed(seed, i))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignment.get(id).copied()
    }
}

pub fn make_folds(records: &[PatchRecord], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::param("need at least 2 folds"));
    }
    let mut parents: Vec<&str> = records
        .iter()
        .filter(|r| r.is_original())
        .map(|r| r.id.as_str())
        .collect();
    if parents.len() < k {
        return Err(Error::Data(format!(
            "{} originals cannot fill {k} folds",
            parents.len()
        )));
    }
    parents.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment: BTreeMap<String, usize> = parents
        .iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), i % k))
        .collect();
    for r in records.iter().filter(|r| !r.is_original()) {
        let fold = *assignment
            .get(r.parent_id())
            .ok_or_else(|| Error::Data(format!("{}: parent {} missing", r.id, r.parent_id())))?;
        assignment.insert(r.id.clone(), fold);
    }
    Ok(FoldPlan { k, assignment })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    /// Score only original records in each validation fold.
    pub originals_only_eval: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            originals_only_eval: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub per_fold: Vec<f64>,
    /// Correct over total across folds, i.e. fold accuracies weighted by size.
    pub mean: f64,
    pub n_train: Vec<usize>,
    pub n_test: Vec<usize>,
    pub config_hash: String,
}

/// Hex SHA-256 of a value's JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serialises");
    hex::encode(Sha256::digest(bytes))
}

/// Bring a patch to the window size.
pub fn fit_window(img: &GrayImage, window: (usize, usize)) -> GrayImage {
    if img.dims() == window {
        img.clone()
    } else {
        img.resize_bilinear(window.0, window.1)
    }
}

pub fn descriptors(records: &[PatchRecord], hcs: &HcsParams) -> Result<Vec<Vec<f64>>> {
    records
        .iter()
        .map(|r| Ok(compute_hcs(&fit_window(&r.image, hcs.window), hcs)?.values))
        .collect()
}

pub fn cross_validate(
    records: &[PatchRecord],
    hcs: &HcsParams,
    svm: &SvmConfig,
    cv: &CvConfig,
) -> Result<CvReport> {
    let plan = make_folds(records, cv.folds, cv.seed)?;
    let x = descriptors(records, hcs)?;
    let folds: Vec<usize> = records
        .iter()
        .map(|r| plan.fold_of(&r.id).expect("every record planned"))
        .collect();
    let mut per_fold = Vec::with_capacity(cv.folds);
    let mut n_train = Vec::with_capacity(cv.folds);
    let mut n_test = Vec::with_capacity(cv.folds);
    let (mut correct, mut tested) = (0usize, 0usize);
    for fold in 0..cv.folds {
        let mut set = TrainingSet::default();
        for ((xi, r), &f) in x.iter().zip(records).zip(&folds) {
            if f != fold {
                set.x.push(xi.clone());
                set.y.push(r.label);
            }
        }
        let wrap = |e| Error::Fold {
            fold,
            source: Box::new(e),
        };
        let model = train(&set, svm, cv.seed.wrapping_add(fold as u64)).map_err(wrap)?.model;
        let (mut ok, mut total) = (0usize, 0usize);
        for ((xi, r), &f) in x.iter().zip(records).zip(&folds) {
            if f != fold || (cv.originals_only_eval && !r.is_original()) {
                continue;
            }
            total += 1;
            if model.predict(xi).map_err(wrap)?.0 == r.label {
                ok += 1;
            }
        }
        per_fold.push(if total > 0 { ok as f64 / total as f64 } else { 0.0 });
        n_train.push(set.len());
        n_test.push(total);
        correct += ok;
        tested += total;
    }
    #[derive(Serialize)]
    struct Hashed<'a> {
        hcs: &'a HcsParams,
        svm: &'a SvmConfig,
        cv: &'a CvConfig,
    }
    Ok(CvReport {
        per_fold,
        mean: if tested > 0 { correct as f64 / tested as f64 } else { 0.0 },
        n_train,
        n_test,
        config_hash: config_hash(&Hashed { hcs, svm, cv }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the dataset root.
    pub path: PathBuf,
    pub label: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn is_raster(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "pgm" | "pnm" | "ppm"))
        .unwrap_or(false)
}

fn list_rasters(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_raster(&path) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Load `positive/` and `negative/` patches, or exactly the manifest's
/// records when `manifest.json` exists at the root.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<Vec<PatchRecord>> {
    let root = root.as_ref();
    let manifest_path = root.join(MANIFEST_FILE);
    if manifest_path.is_file() {
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: manifest_path.clone(),
            source: e,
        })?;
        return manifest
            .records
            .into_iter()
            .map(|m| {
                if m.label != 1 && m.label != -1 {
                    return Err(Error::Data(format!("{}: label must be +1 or -1", m.id)));
                }
                Ok(PatchRecord::original(m.id, GrayImage::load(root.join(&m.path))?, m.label))
            })
            .collect();
    }
    let mut records = Vec::new();
    for (sub, label) in [("positive", 1i8), ("negative", -1i8)] {
        let dir = root.join(sub);
        if !dir.is_dir() {
            return Err(Error::Data(format!("{} is missing", dir.display())));
        }
        for path in list_rasters(&dir)? {
            let name = path.file_name().expect("file").to_string_lossy();
            records.push(PatchRecord::original(format!("{sub}/{name}"), GrayImage::load(&path)?, label));
        }
    }
    if records.is_empty() {
        return Err(Error::Data(format!("no patches under {}", root.display())));
    }
    Ok(records)
}

/// Write records as PNGs under `positive/` and `negative/`, plus a manifest.
pub fn write_dataset(root: impl AsRef<Path>, records: &[PatchRecord]) -> Result<()> {
    let root = root.as_ref();
    let mut entries = Vec::with_capacity(records.len());
    let mut used: HashMap<String, usize> = HashMap::new();
    for r in records {
        let sub = if r.label > 0 { "positive" } else { "negative" };
        let dir = root.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let stem: String = r
            .id
            .rsplit('/')
            .next()
            .unwrap_or(&r.id)
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let n = used.entry(format!("{sub}/{stem}")).or_insert(0);
        let file = if *n == 0 { format!("{stem}.png") } else { format!("{stem}_{n}.png") };
        *n += 1;
        r.image.save_png(dir.join(&file))?;
        entries.push(ManifestEntry {
            id: r.id.clone(),
            path: PathBuf::from(sub).join(file),
            label: r.label,
        });
    }
    let path = root.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&Manifest { records: entries }).expect("manifest serialises");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// One `label,v1,...` line per record.
pub fn export_descriptors(records: &[PatchRecord], hcs: &HcsParams, out: &mut impl Write) -> Result<()> {
    for r in records {
        let d = compute_hcs(&fit_window(&r.image, hcs.window), hcs)?;
        writeln!(out, "{}", d.to_csv_line(r.label)).map_err(|e| Error::io("<descriptor output>", e))?;
    }
    Ok(())
}
