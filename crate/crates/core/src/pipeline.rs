//! End-to-end detection: contours, shape triage, separation of touching
//! groups and moth classification, plus the annotated overlay.

use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::clustering::{triage, Category, DEFAULT_K_MAX};
use crate::dataset::{augment_to, config_hash, descriptors, CvConfig, PatchRecord};
use crate::error::{Error, Result};
use crate::hcs::{compute_hcs, descriptor_len, normalize_patch, HcsParams, MIN_PATCH_SIDE};
use crate::imaging::{extract_linked_contours, multiscale_cs, Contour, DEFAULT_LINK_RADIUS};
use crate::raster::{BoundingBox, GrayImage, Mask};
use crate::separation::{separate_touching, Region, SeparationParams};
use crate::svm::{train, SvmConfig, SvmModel, TrainOutcome, TrainingSet};

pub const CONFIG_VERSION: u32 = 1;

/// Every tunable of the pipeline, with its defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub format_version: u32,
    /// Gaussian scales of the contour-detection saliency.
    pub scales: Vec<f64>,
    pub alpha: f64,
    pub threshold_quantile: f64,
    pub link_radius: usize,
    pub k_max: usize,
    pub cluster_seed: u64,
    pub separation: SeparationParams,
    pub hcs: HcsParams,
    pub svm: SvmConfig,
    pub train_seed: u64,
    /// Total positives after augmentation over the original positives; 1 disables it.
    pub positive_augment_ratio: f64,
    pub augment_seed: u64,
    pub cv: CvConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            format_version: CONFIG_VERSION,
            scales: vec![1.0, 2.0, 4.0],
            alpha: 1.0,
            threshold_quantile: 0.9,
            link_radius: DEFAULT_LINK_RADIUS,
            k_max: DEFAULT_K_MAX,
            cluster_seed: 0,
            separation: SeparationParams::default(),
            hcs: HcsParams::default(),
            svm: SvmConfig::default(),
            train_seed: 0,
            positive_augment_ratio: 1.0,
            augment_seed: 0,
            cv: CvConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != CONFIG_VERSION {
            return Err(Error::param(format!(
                "config format_version {} is not supported (expected {CONFIG_VERSION})",
                self.format_version
            )));
        }
        if !(self.positive_augment_ratio >= 1.0) {
            return Err(Error::param("positive_augment_ratio must be at least 1"));
        }
        self.hcs.validate()
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Json {
            path: "<config>".into(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionCategory {
    Noise,
    TouchingGroup,
    OtherInsect,
    Moth,
}

impl DetectionCategory {
    /// Overlay colour.
    pub fn colour(self) -> Rgb<u8> {
        match self {
            DetectionCategory::Noise => Rgb([0, 0, 255]),
            DetectionCategory::TouchingGroup => Rgb([255, 0, 0]),
            DetectionCategory::OtherInsect => Rgb([0, 0, 0]),
            DetectionCategory::Moth => Rgb([0, 255, 0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub category: DetectionCategory,
    pub bbox: BoundingBox,
    pub area: usize,
    /// Raw SVM score; only classified regions carry one.
    pub score: Option<f64>,
    /// Split members of a touching group.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<Detection>,
    /// Bounding-box-sized region mask.
    #[serde(skip)]
    pub mask: Option<Mask>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub moths: usize,
    pub other_insects: usize,
    pub noise: usize,
    pub touching_groups_split: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub width: usize,
    pub height: usize,
    pub detections: Vec<Detection>,
    pub counts: Counts,
    pub config_hash: String,
}

impl DetectionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Top-level detections and touching-group members, in report order.
    pub fn flattened(&self) -> Vec<&Detection> {
        let mut out = Vec::new();
        for d in &self.detections {
            out.push(d);
            out.extend(d.members.iter());
        }
        out
    }
}

fn region_of_contour(c: &Contour, width: usize, height: usize) -> Option<Region> {
    Region::from_global(&c.fill(width, height))
}

fn outline_detection(c: &Contour, category: DetectionCategory, width: usize, height: usize) -> Detection {
    let region = region_of_contour(c, width, height);
    Detection {
        category,
        bbox: c.bounding_box(),
        area: region.as_ref().map_or(c.len(), Region::area),
        score: None,
        members: Vec::new(),
        mask: region.map(|r| r.mask),
    }
}

fn classify(img: &GrayImage, region: Region, model: &SvmModel, hcs: &HcsParams) -> Result<Detection> {
    let (w, h) = img.dims();
    let global = region.to_global(w, h);
    let patch = normalize_patch(img, &global, hcs.window)?;
    let d = compute_hcs(&patch, hcs)?;
    let (label, score) = model.predict(&d.values)?;
    Ok(Detection {
        category: if label > 0 {
            DetectionCategory::Moth
        } else {
            DetectionCategory::OtherInsect
        },
        bbox: region.bbox,
        area: region.area(),
        score: Some(score),
        members: Vec::new(),
        mask: Some(region.mask),
    })
}

/// Regions too small to normalise are reported as noise instead of classified.
fn classify_or_noise(img: &GrayImage, region: Region, model: &SvmModel, hcs: &HcsParams) -> Result<Detection> {
    if region.bbox.width() < MIN_PATCH_SIDE || region.bbox.height() < MIN_PATCH_SIDE {
        return Ok(Detection {
            category: DetectionCategory::Noise,
            bbox: region.bbox,
            area: region.area(),
            score: None,
            members: Vec::new(),
            mask: Some(region.mask),
        });
    }
    classify(img, region, model, hcs)
}

/// Check that the model can score descriptors produced under `cfg`.
pub fn check_model(model: &SvmModel, cfg: &PipelineConfig) -> Result<()> {
    cfg.validate()?;
    let expected = descriptor_len(&cfg.hcs)?;
    if model.sv_dim != expected {
        return Err(Error::Dimension(format!(
            "model expects {}-dimensional descriptors, config produces {expected}",
            model.sv_dim
        )));
    }
    Ok(())
}

pub fn detect_image(img: &GrayImage, model: &SvmModel, cfg: &PipelineConfig) -> Result<DetectionReport> {
    check_model(model, cfg)?;
    let (w, h) = img.dims();
    let cs = multiscale_cs(img, &cfg.scales, cfg.alpha)?;
    let contours = extract_linked_contours(&cs, cfg.threshold_quantile, cfg.link_radius)?;
    // open fragments and outlines cut by the frame are not shapes to triage
    let on_frame = |c: &Contour| {
        let b = c.bounding_box();
        b.x0 == 0 || b.y0 == 0 || b.x1 + 1 == w || b.y1 + 1 == h
    };
    let (closed, open): (Vec<Contour>, Vec<Contour>) =
        contours.into_iter().partition(|c| c.closed && !on_frame(c));
    let tri = triage(&closed, cfg.k_max, cfg.cluster_seed)?;

    let mut detections = Vec::new();
    let mut counts = Counts::default();
    for c in &open {
        detections.push(outline_detection(c, DetectionCategory::Noise, w, h));
    }
    for (i, c) in closed.iter().enumerate() {
        match tri.category_of(i) {
            Category::Noise => detections.push(outline_detection(c, DetectionCategory::Noise, w, h)),
            Category::Individual => match region_of_contour(c, w, h) {
                Some(region) => detections.push(classify_or_noise(img, region, model, &cfg.hcs)?),
                None => detections.push(outline_detection(c, DetectionCategory::Noise, w, h)),
            },
            Category::Touching => {
                let regions = separate_touching(img, c, &cfg.separation)?;
                if regions.len() > 1 {
                    counts.touching_groups_split += 1;
                }
                let mut group = outline_detection(c, DetectionCategory::TouchingGroup, w, h);
                for r in regions {
                    group.members.push(classify_or_noise(img, r, model, &cfg.hcs)?);
                }
                detections.push(group);
            }
        }
    }
    for d in detections.iter().flat_map(|d| std::iter::once(d).chain(d.members.iter())) {
        match d.category {
            DetectionCategory::Moth => counts.moths += 1,
            DetectionCategory::OtherInsect => counts.other_insects += 1,
            DetectionCategory::Noise => counts.noise += 1,
            DetectionCategory::TouchingGroup => {}
        }
    }
    Ok(DetectionReport {
        width: w,
        height: h,
        detections,
        counts,
        config_hash: cfg.hash(),
    })
}

/// Gray raster promoted to RGB with every detection boxed in its colour.
/// Later categories in the order Noise, TouchingGroup, OtherInsect, Moth
/// are drawn on top.
pub fn render_overlay(img: &GrayImage, detections: &[Detection]) -> RgbImage {
    let (w, h) = img.dims();
    let mut out = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = (img.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    });
    let mut all: Vec<&Detection> = detections
        .iter()
        .flat_map(|d| std::iter::once(d).chain(d.members.iter()))
        .collect();
    all.sort_by_key(|d| d.category);
    for d in all {
        draw_box(&mut out, &d.bbox, d.category.colour());
    }
    out
}

/// Two-pixel rectangle on the inside of `bb`.
fn draw_box(out: &mut RgbImage, bb: &BoundingBox, colour: Rgb<u8>) {
    let (w, h) = (out.width() as usize, out.height() as usize);
    if bb.x0 >= w || bb.y0 >= h {
        return;
    }
    let (x1, y1) = (bb.x1.min(w - 1), bb.y1.min(h - 1));
    for y in bb.y0..=y1 {
        for x in bb.x0..=x1 {
            let edge = x < bb.x0 + 2 || x + 2 > x1 || y < bb.y0 + 2 || y + 2 > y1;
            if edge {
                out.put_pixel(x as u32, y as u32, colour);
            }
        }
    }
}

/// Training records after the configured positive augmentation.
pub fn training_records(records: &[PatchRecord], cfg: &PipelineConfig) -> Result<Vec<PatchRecord>> {
    if cfg.positive_augment_ratio <= 1.0 {
        return Ok(records.to_vec());
    }
    let (pos, neg): (Vec<PatchRecord>, Vec<PatchRecord>) =
        records.iter().filter(|r| r.is_original()).cloned().partition(|r| r.label > 0);
    let target = (pos.len() as f64 * cfg.positive_augment_ratio).round() as usize;
    let mut out = augment_to(&pos, target, cfg.augment_seed)?;
    out.extend(neg);
    Ok(out)
}

pub fn train_model(records: &[PatchRecord], cfg: &PipelineConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let records = training_records(records, cfg)?;
    let x = descriptors(&records, &cfg.hcs)?;
    let set = TrainingSet::new(x, records.iter().map(|r| r.label).collect())?;
    train(&set, &cfg.svm, cfg.train_seed)
}
