//! Synthetic trap scenes and labelled patch sets.
//!
//! Scenes imitate a sticky trap: a bright, slightly uneven background with
//! dark insects. Moths are elongated ellipses carrying a lattice of bright
//! cross marks on the wings; other insects are smooth dark discs; noise is
//! small specks. Every generator is a pure function of its seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::raster::{BoundingBox, GrayImage, Mask};

const SUPERSAMPLE: usize = 4;

/// Object families rendered by the generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Family {
    Moth,
    Other,
    Speck,
}

/// Ground truth for one rendered object.
#[derive(Debug, Clone)]
pub struct TruthObject {
    pub family: Family,
    pub center: (f64, f64),
    pub mask: Mask,
    /// Index of the touching group this object belongs to, if any.
    pub group: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub image: GrayImage,
    pub objects: Vec<TruthObject>,
}

/// Expected counts for a scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SceneTruth {
    pub moths: usize,
    pub others: usize,
    pub specks: usize,
    pub touching_groups: usize,
}

impl Scene {
    pub fn truth(&self) -> SceneTruth {
        let count = |f| self.objects.iter().filter(|o| o.family == f).count();
        let mut groups: Vec<usize> = self.objects.iter().filter_map(|o| o.group).collect();
        groups.sort_unstable();
        groups.dedup();
        SceneTruth {
            moths: count(Family::Moth),
            others: count(Family::Other),
            specks: count(Family::Speck),
            touching_groups: groups.len(),
        }
    }
}

/// Rotated ellipse with semi-axes `a` (along `angle`) and `b`.
#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub angle: f64,
}

impl Ellipse {
    pub fn disc(cx: f64, cy: f64, r: f64) -> Self {
        Self {
            cx,
            cy,
            a: r,
            b: r,
            angle: 0.0,
        }
    }

    /// Body-frame coordinates of an image point.
    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        (c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = self.local(x, y);
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    fn bbox(&self, width: usize, height: usize) -> Option<BoundingBox> {
        let r = self.a.max(self.b) + 2.0;
        let x0 = (self.cx - r).floor().max(0.0) as usize;
        let y0 = (self.cy - r).floor().max(0.0) as usize;
        let x1 = ((self.cx + r).ceil() as usize).min(width - 1);
        let y1 = ((self.cy + r).ceil() as usize).min(height - 1);
        (x0 <= x1 && y0 <= y1).then(|| BoundingBox::new(x0, y0, x1, y1))
    }

    /// Pixel-centre rasterisation.
    pub fn mask(&self, width: usize, height: usize) -> Mask {
        Mask::from_fn(width, height, |x, y| self.contains(x as f64, y as f64))
    }
}

/// Composite `shape` over `img` with anti-aliased coverage; `shade` gives the
/// foreground intensity at body-frame coordinates.
pub fn paint(img: &mut GrayImage, shape: &Ellipse, shade: impl Fn(f64, f64) -> f64) {
    let (w, h) = img.dims();
    let Some(bb) = shape.bbox(w, h) else {
        return;
    };
    let step = 1.0 / SUPERSAMPLE as f64;
    for y in bb.y0..=bb.y1 {
        for x in bb.x0..=bb.x1 {
            let mut cover = 0.0;
            let mut fg = 0.0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = x as f64 - 0.5 + (sx as f64 + 0.5) * step;
                    let py = y as f64 - 0.5 + (sy as f64 + 0.5) * step;
                    if shape.contains(px, py) {
                        let (u, v) = shape.local(px, py);
                        cover += 1.0;
                        fg += shade(u, v);
                    }
                }
            }
            if cover > 0.0 {
                let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
                let old = img.get(x, y);
                img.set(x, y, old * (1.0 - cover / n) + fg / n);
            }
        }
    }
}

/// Wing pattern: bright crosses on a dark body, lattice period `period` px.
pub fn moth_shade(base: f64, contrast: f64, period: f64) -> impl Fn(f64, f64) -> f64 {
    move |u, v| {
        let fu = (u / period).rem_euclid(1.0) - 0.5;
        let fv = (v / period).rem_euclid(1.0) - 0.5;
        let arm = 0.12;
        let len = 0.36;
        let on = (fu.abs() < arm && fv.abs() < len) || (fv.abs() < arm && fu.abs() < len);
        if on {
            base + contrast
        } else {
            base
        }
    }
}

pub fn smooth_shade(base: f64) -> impl Fn(f64, f64) -> f64 {
    move |_, _| base
}

/// Trap-like background with a gentle illumination ramp.
pub fn background(width: usize, height: usize, rng: &mut impl Rng) -> GrayImage {
    let level = rng.random_range(0.78..0.9);
    let gx = rng.random_range(-0.05..0.05) / width as f64;
    let gy = rng.random_range(-0.05..0.05) / height as f64;
    GrayImage::from_fn(width, height, |x, y| level + gx * x as f64 + gy * y as f64)
}

pub fn add_noise(img: &mut GrayImage, std: f64, rng: &mut impl Rng) {
    if std <= 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("positive std");
    for v in img.data_mut() {
        *v += normal.sample(rng);
    }
    img.clamp01();
}

/// Random moth body of the standard size range.
pub fn random_moth(cx: f64, cy: f64, rng: &mut impl Rng) -> Ellipse {
    Ellipse {
        cx,
        cy,
        a: rng.random_range(17.0..21.0),
        b: rng.random_range(10.0..12.5),
        angle: rng.random_range(0.0..std::f64::consts::PI),
    }
}

pub fn paint_moth(img: &mut GrayImage, e: &Ellipse, rng: &mut impl Rng) {
    let base = rng.random_range(0.22..0.32);
    let contrast = rng.random_range(0.22..0.3);
    let period = rng.random_range(5.5..6.5);
    paint(img, e, moth_shade(base, contrast, period));
}

pub fn paint_other(img: &mut GrayImage, e: &Ellipse, rng: &mut impl Rng) {
    let base = rng.random_range(0.22..0.32);
    paint(img, e, smooth_shade(base));
}

/// Two uniform dark discs whose rims overlap by `overlap` pixels.
#[derive(Debug, Clone)]
pub struct DoubleDisc {
    pub image: GrayImage,
    pub discs: [Ellipse; 2],
}

/// Fused double-disc blob with seeded radius, spacing, orientation and noise.
pub fn double_disc(size: usize, seed: u64) -> DoubleDisc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.random_range(12.0..15.0);
    let overlap = rng.random_range(1.5..3.5);
    let d = 2.0 * r - overlap;
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let c = size as f64 / 2.0 + rng.random_range(-1.0..1.0);
    let (dx, dy) = (0.5 * d * theta.cos(), 0.5 * d * theta.sin());
    let discs = [
        Ellipse::disc(c - dx, c - dy, r),
        Ellipse::disc(c + dx, c + dy, r),
    ];
    let mut image = GrayImage::filled(size, size, rng.random_range(0.8..0.9));
    let base = rng.random_range(0.25..0.35);
    for e in &discs {
        paint(&mut image, e, smooth_shade(base));
    }
    add_noise(&mut image, 0.02, &mut rng);
    DoubleDisc { image, discs }
}

/// Single uniform ellipse blob and its pixel-centre ground truth.
pub fn single_ellipse(size: usize, seed: u64) -> (GrayImage, Ellipse) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = size as f64 / 2.0;
    let e = Ellipse {
        cx: c + rng.random_range(-1.0..1.0),
        cy: c + rng.random_range(-1.0..1.0),
        a: rng.random_range(17.0..21.0),
        b: rng.random_range(10.0..12.5),
        angle: rng.random_range(0.0..std::f64::consts::PI),
    };
    let mut image = GrayImage::filled(size, size, rng.random_range(0.8..0.9));
    paint(&mut image, &e, smooth_shade(rng.random_range(0.25..0.35)));
    add_noise(&mut image, 0.02, &mut rng);
    (image, e)
}

/// Chain of `count` uniform discs, each fused to the next.
pub fn disc_chain(width: usize, height: usize, count: usize, seed: u64) -> (GrayImage, Vec<Ellipse>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = rng.random_range(12.0..14.0);
    let mut discs = Vec::with_capacity(count);
    let mut cx = width as f64 / 2.0 - (count as f64 - 1.0) * (r - 1.25);
    let mut cy = height as f64 / 2.0;
    for _ in 0..count {
        discs.push(Ellipse::disc(cx, cy, r));
        let overlap = rng.random_range(1.5..3.5);
        let turn: f64 = rng.random_range(-0.35..0.35);
        cx += (2.0 * r - overlap) * turn.cos();
        cy += (2.0 * r - overlap) * turn.sin();
    }
    let mut image = GrayImage::filled(width, height, rng.random_range(0.8..0.9));
    let base = rng.random_range(0.25..0.35);
    for e in &discs {
        paint(&mut image, e, smooth_shade(base));
    }
    add_noise(&mut image, 0.02, &mut rng);
    (image, discs)
}

/// Canvas side used to render single-object training patches.
pub const PATCH_CANVAS: (usize, usize) = (96, 80);

/// One object on its own canvas with its exact mask.
pub fn render_object(family: Family, seed: u64) -> (GrayImage, Mask) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = PATCH_CANVAS;
    let mut img = background(w, h, &mut rng);
    let (cx, cy) = (
        w as f64 / 2.0 + rng.random_range(-2.0..2.0),
        h as f64 / 2.0 + rng.random_range(-2.0..2.0),
    );
    let shape = match family {
        Family::Moth => {
            let e = random_moth(cx, cy, &mut rng);
            paint_moth(&mut img, &e, &mut rng);
            e
        }
        Family::Other => {
            let e = random_other(cx, cy, &mut rng);
            paint_other(&mut img, &e, &mut rng);
            e
        }
        Family::Speck => {
            let e = Ellipse::disc(cx, cy, rng.random_range(1.5..3.0));
            paint(&mut img, &e, smooth_shade(rng.random_range(0.2..0.4)));
            e
        }
    };
    add_noise(&mut img, 0.02, &mut rng);
    (img, shape.mask(w, h))
}

/// Random smooth insect body.
pub fn random_other(cx: f64, cy: f64, rng: &mut impl Rng) -> Ellipse {
    let r = rng.random_range(12.0..15.0);
    Ellipse {
        cx,
        cy,
        a: r * rng.random_range(1.0..1.15),
        b: r,
        angle: rng.random_range(0.0..std::f64::consts::PI),
    }
}

/// Labelled training patches: moths are `+1`, smooth insects `-1`. Each
/// object is cut out through its mask grown by 0 to 8 pixels, the way
/// detected regions overshoot the true outline.
pub fn patch_set(positives: usize, negatives: usize, window: (usize, usize), seed: u64) -> Vec<(GrayImage, i8)> {
    let mut out = Vec::with_capacity(positives + negatives);
    let jobs = (0..positives)
        .map(|i| (Family::Moth, 1i8, i))
        .chain((0..negatives).map(|i| (Family::Other, -1i8, positives + i)));
    for (family, label, i) in jobs {
        let s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i as u64);
        let (img, mask) = render_object(family, s);
        let grow = (s % 9) as usize;
        let region = crate::components::dilate_disc(&mask, grow);
        let patch = crate::hcs::normalize_patch(&img, &region, window).expect("object larger than 8 px");
        out.push((patch, label));
    }
    out
}

/// Trap scene with the given object counts and one fused moth pair when
/// `fused_pair` is set. Objects keep at least `gap` pixels apart and
/// `FRAME_MARGIN` pixels clear of the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub moths: usize,
    pub others: usize,
    pub specks: usize,
    pub fused_pair: bool,
    pub gap: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 480,
            height: 360,
            moths: 5,
            others: 3,
            specks: 10,
            fused_pair: true,
            gap: 18.0,
        }
    }
}

/// Two moths joined tip to tip.
fn fused_moths(cx: f64, cy: f64, rng: &mut impl Rng) -> [Ellipse; 2] {
    let mut first = random_moth(0.0, 0.0, rng);
    let mut second = random_moth(0.0, 0.0, rng);
    second.angle = first.angle + rng.random_range(-0.5..0.5);
    let overlap = rng.random_range(2.0..4.0);
    let (u1, u2) = (first.angle.sin_cos(), second.angle.sin_cos());
    let tip = (first.a * u1.1, first.a * u1.0);
    let c2 = (
        tip.0 + (second.a - overlap) * u2.1,
        tip.1 + (second.a - overlap) * u2.0,
    );
    // centre the pair on (cx, cy)
    let (mx, my) = (0.5 * c2.0, 0.5 * c2.1);
    first.cx = cx - mx;
    first.cy = cy - my;
    second.cx = cx + c2.0 - mx;
    second.cy = cy + c2.1 - my;
    [first, second]
}

/// Clearance between an object and the frame, wide enough for the blur
/// halo of the coarsest saliency scale.
pub const FRAME_MARGIN: f64 = 12.0;

pub fn scene(spec: &SceneSpec, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width, spec.height);
    let mut image = background(w, h, &mut rng);
    let mut placed: Vec<(f64, f64, f64)> = Vec::new();
    let mut place = |radius: f64, rng: &mut ChaCha8Rng| -> Option<(f64, f64)> {
        let margin = radius + FRAME_MARGIN;
        for _ in 0..2000 {
            let x = rng.random_range(margin..w as f64 - margin);
            let y = rng.random_range(margin..h as f64 - margin);
            if placed
                .iter()
                .all(|&(px, py, pr)| ((px - x).powi(2) + (py - y).powi(2)).sqrt() > pr + radius + spec.gap)
            {
                placed.push((x, y, radius));
                return Some((x, y));
            }
        }
        None
    };

    let mut objects = Vec::new();
    if spec.fused_pair {
        if let Some((x, y)) = place(44.0, &mut rng) {
            for e in fused_moths(x, y, &mut rng) {
                paint_moth(&mut image, &e, &mut rng);
                objects.push(TruthObject {
                    family: Family::Moth,
                    center: (e.cx, e.cy),
                    mask: e.mask(w, h),
                    group: Some(0),
                });
            }
        }
    }
    for _ in 0..spec.moths {
        if let Some((x, y)) = place(22.0, &mut rng) {
            let e = random_moth(x, y, &mut rng);
            paint_moth(&mut image, &e, &mut rng);
            objects.push(TruthObject {
                family: Family::Moth,
                center: (x, y),
                mask: e.mask(w, h),
                group: None,
            });
        }
    }
    for _ in 0..spec.others {
        if let Some((x, y)) = place(18.0, &mut rng) {
            let e = random_other(x, y, &mut rng);
            paint_other(&mut image, &e, &mut rng);
            objects.push(TruthObject {
                family: Family::Other,
                center: (x, y),
                mask: e.mask(w, h),
                group: None,
            });
        }
    }
    for _ in 0..spec.specks {
        if let Some((x, y)) = place(3.0, &mut rng) {
            let e = Ellipse::disc(x, y, rng.random_range(1.5..3.0));
            paint(&mut image, &e, smooth_shade(rng.random_range(0.2..0.4)));
            objects.push(TruthObject {
                family: Family::Speck,
                center: (x, y),
                mask: e.mask(w, h),
                group: None,
            });
        }
    }
    add_noise(&mut image, 0.02, &mut rng);
    Scene { image, objects }
}
