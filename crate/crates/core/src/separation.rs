//! Splitting touching insects: contour dilation, seed regions, Meyer
//! flooding and merging of small catchments.
//!
//! Regions use 4-connectivity throughout; contours are 8-connected.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::components::{dilate_disc, label_components, Connectivity};
use crate::error::{Error, Result};
use crate::imaging::{gaussian_smooth, Contour};
use crate::raster::{BoundingBox, GrayImage, Mask};

/// Per-pixel region ids; 0 is background or watershed line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn region_count(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0; self.region_count() + 1];
        for &l in &self.labels {
            areas[l as usize] += 1;
        }
        areas
    }

    pub fn mask_of(&self, label: u32) -> Mask {
        Mask::from_fn(self.width, self.height, |x, y| self.get(x, y) == label)
    }

    /// Renumber to `1..=R` in order of first appearance, keeping 0.
    pub fn compacted(&self) -> LabelMap {
        let mut map = HashMap::new();
        let mut next = 0u32;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if l == 0 {
                    0
                } else {
                    *map.entry(l).or_insert_with(|| {
                        next += 1;
                        next
                    })
                }
            })
            .collect();
        LabelMap {
            width: self.width,
            height: self.height,
            labels,
        }
    }

    /// Every region is one 4-connected component.
    pub fn regions_connected(&self) -> bool {
        (1..=self.region_count() as u32).all(|l| {
            let m = self.mask_of(l);
            m.is_empty() || label_components(&m, Connectivity::Four).count == 1
        })
    }
}

/// Morphological dilation by a disc of the given radius.
pub fn dilate_contours(mask: &Mask, radius: usize) -> Result<Mask> {
    if radius < 1 {
        return Err(Error::param("dilation radius must be >= 1"));
    }
    Ok(dilate_disc(mask, radius))
}

/// Interior components of the complement of `dilated`, i.e. those not
/// touching the frame. `None` when no interior component exists.
pub fn initial_regions(dilated: &Mask) -> Option<LabelMap> {
    let comps = label_components(&dilated.not(), Connectivity::Four);
    let border = comps.touching_border();
    let mut remap = vec![0u32; comps.count + 1];
    let mut next = 0u32;
    for l in 1..=comps.count {
        if !border[l] {
            next += 1;
            remap[l] = next;
        }
    }
    if next == 0 {
        return None;
    }
    Some(LabelMap {
        width: comps.width,
        height: comps.height,
        labels: comps.labels.iter().map(|&l| remap[l as usize]).collect(),
    })
}

/// Count of 4-adjacent pixel pairs between each pair of distinct non-zero labels.
fn shared_boundaries(lm: &LabelMap) -> HashMap<(u32, u32), usize> {
    let mut shared = HashMap::new();
    let (w, h) = (lm.width, lm.height);
    for y in 0..h {
        for x in 0..w {
            let a = lm.get(x, y);
            if a == 0 {
                continue;
            }
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx < w && ny < h {
                    let b = lm.get(nx, ny);
                    if b != 0 && b != a {
                        *shared.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                    }
                }
            }
        }
    }
    shared
}

/// Merge every region smaller than `min_area` into the 4-adjacent region
/// sharing the longest boundary with it, smallest first, until no small
/// region with a neighbour remains. Labels are re-compacted.
pub fn merge_regions(lm: &LabelMap, min_area: usize) -> LabelMap {
    let mut cur = lm.compacted();
    loop {
        let areas = cur.areas();
        let shared = shared_boundaries(&cur);
        let mut candidates: Vec<u32> = (1..areas.len() as u32)
            .filter(|&l| areas[l as usize] > 0 && areas[l as usize] < min_area)
            .collect();
        candidates.sort_by_key(|&l| (areas[l as usize], l));
        let mut merged = false;
        for small in candidates {
            let best = shared
                .iter()
                .filter_map(|(&(a, b), &n)| {
                    if a == small {
                        Some((b, n))
                    } else if b == small {
                        Some((a, n))
                    } else {
                        None
                    }
                })
                .max_by(|x, y| x.1.cmp(&y.1).then(y.0.cmp(&x.0)));
            if let Some((target, _)) = best {
                for l in cur.labels.iter_mut() {
                    if *l == small {
                        *l = target;
                    }
                }
                cur = cur.compacted();
                merged = true;
                break;
            }
        }
        if !merged {
            return cur;
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
struct QueueEntry {
    level: u64,
    order: u64,
    index: usize,
}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (level, insertion order)
        other
            .level
            .cmp(&self.level)
            .then_with(|| other.order.cmp(&self.order))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Relief values to a totally ordered key; equal reliefs flood first-in first-out.
fn relief_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if v.is_sign_negative() {
        !bits
    } else {
        bits | (1 << 63)
    }
}

/// Meyer flooding from `seeds` over `relief`.
///
/// Every non-seed pixel ends up labelled with exactly one seed region, or 0
/// where two different floods meet.
pub fn watershed(relief: &GrayImage, seeds: &LabelMap) -> Result<LabelMap> {
    let (w, h) = relief.dims();
    if (seeds.width, seeds.height) != (w, h) {
        return Err(Error::dim(format!(
            "seed map {}x{} does not match relief {w}x{h}",
            seeds.width, seeds.height
        )));
    }
    if seeds.labels.iter().all(|&l| l == 0) {
        return Err(Error::Contract("watershed needs at least one seed".into()));
    }

    const UNSET: u32 = u32::MAX;
    const LINE: u32 = u32::MAX - 1;
    let mut labels: Vec<u32> = seeds
        .labels
        .iter()
        .map(|&l| if l == 0 { UNSET } else { l })
        .collect();
    let mut queued = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    let mut order = 0u64;
    let neighbours = |i: usize| {
        let (x, y) = (i % w, i / w);
        let mut n = [usize::MAX; 4];
        if x > 0 {
            n[0] = i - 1;
        }
        if x + 1 < w {
            n[1] = i + 1;
        }
        if y > 0 {
            n[2] = i - w;
        }
        if y + 1 < h {
            n[3] = i + w;
        }
        n
    };

    for i in 0..w * h {
        if labels[i] == UNSET {
            continue;
        }
        for j in neighbours(i) {
            if j != usize::MAX && labels[j] == UNSET && !queued[j] {
                queued[j] = true;
                heap.push(QueueEntry {
                    level: relief_key(relief.data()[j]),
                    order,
                    index: j,
                });
                order += 1;
            }
        }
    }

    while let Some(QueueEntry { index: i, .. }) = heap.pop() {
        let mut found = None;
        let mut conflict = false;
        for j in neighbours(i) {
            if j == usize::MAX {
                continue;
            }
            let l = labels[j];
            if l == UNSET || l == LINE {
                continue;
            }
            match found {
                None => found = Some(l),
                Some(f) if f != l => conflict = true,
                _ => {}
            }
        }
        let Some(label) = found else { continue };
        if conflict {
            labels[i] = LINE;
            continue;
        }
        labels[i] = label;
        for j in neighbours(i) {
            if j != usize::MAX && labels[j] == UNSET && !queued[j] {
                queued[j] = true;
                heap.push(QueueEntry {
                    level: relief_key(relief.data()[j]),
                    order,
                    index: j,
                });
                order += 1;
            }
        }
    }

    Ok(LabelMap {
        width: w,
        height: h,
        labels: labels
            .into_iter()
            .map(|l| if l == UNSET || l == LINE { 0 } else { l })
            .collect(),
    })
}

/// Give every 0 pixel inside `domain` to the neighbouring region of lowest
/// relief, repeating until no assignable pixel remains.
pub fn absorb_lines(lm: &LabelMap, relief: &GrayImage, domain: &Mask) -> LabelMap {
    let mut out = lm.clone();
    let (w, h) = (lm.width, lm.height);
    loop {
        let mut changes = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if out.get(x, y) != 0 || !domain.get(x, y) {
                    continue;
                }
                let mut best: Option<(f64, u32)> = None;
                for (dx, dy) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    let l = out.get(nx, ny);
                    if l == 0 {
                        continue;
                    }
                    let r = relief.get(nx, ny);
                    if best.is_none_or(|(br, bl)| r < br || (r == br && l < bl)) {
                        best = Some((r, l));
                    }
                }
                if let Some((_, l)) = best {
                    changes.push((y * w + x, l));
                }
            }
        }
        if changes.is_empty() {
            return out;
        }
        for (i, l) in changes {
            out.labels[i] = l;
        }
    }
}

/// Tunables for splitting touching insects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationParams {
    /// Smallest dilation tried when searching for seed cores.
    pub dilation_radius: usize,
    /// Catchments below this fraction of the bounding-box area are merged.
    pub min_area_fraction: f64,
    /// Smoothing of the gradient-magnitude relief.
    pub relief_sigma: f64,
    /// Seed cores smaller than this many pixels are ignored while searching.
    pub min_seed_area: usize,
}

impl Default for SeparationParams {
    fn default() -> Self {
        Self {
            dilation_radius: 2,
            min_area_fraction: 0.10,
            relief_sigma: 1.0,
            min_seed_area: 6,
        }
    }
}

/// One insect's pixels, stored inside its bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub bbox: BoundingBox,
    /// Bounding-box-sized mask.
    pub mask: Mask,
}

impl Region {
    pub fn from_global(mask: &Mask) -> Option<Region> {
        let bbox = mask.bounding_box()?;
        Some(Region {
            bbox,
            mask: mask.crop(&bbox),
        })
    }

    pub fn area(&self) -> usize {
        self.mask.count()
    }

    pub fn to_global(&self, width: usize, height: usize) -> Mask {
        Mask::paste(width, height, &self.mask, &self.bbox)
    }

    pub fn centroid(&self) -> (f64, f64) {
        let (cx, cy) = self.mask.centroid().unwrap_or((0.0, 0.0));
        (cx + self.bbox.x0 as f64, cy + self.bbox.y0 as f64)
    }
}

/// Relief quantisation; coarse levels let flat interiors flood evenly from every seed.
pub const RELIEF_LEVELS: usize = 32;

/// Gaussian-smoothed gradient magnitude, quantised to [`RELIEF_LEVELS`] levels.
pub fn gradient_relief(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let s = gaussian_smooth(img, sigma)?;
    let (w, h) = s.dims();
    let mut g = GrayImage::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        let gx = 0.5 * (s.get_clamped(xi + 1, yi) - s.get_clamped(xi - 1, yi));
        let gy = 0.5 * (s.get_clamped(xi, yi + 1) - s.get_clamped(xi, yi - 1));
        (gx * gx + gy * gy).sqrt()
    });
    let (_, hi) = g.min_max();
    if hi > 0.0 {
        for v in g.data_mut() {
            *v = (*v / hi * (RELIEF_LEVELS - 1) as f64).round();
        }
    }
    Ok(g)
}

/// Seed cores: interior components of at least `params.min_seed_area`
/// pixels left by dilating the contour. Radii grow from
/// `params.dilation_radius`; the first run of radii giving the most cores is
/// taken at its middle.
fn seed_cores(contour_mask: &Mask, params: &SeparationParams) -> Option<LabelMap> {
    let (w, h) = (contour_mask.width(), contour_mask.height());
    let points: Vec<(isize, isize)> = contour_mask
        .pixels()
        .map(|(x, y)| (x as isize, y as isize))
        .collect();
    // squared distance to the nearest contour pixel; dilation by r keeps d2 <= r^2
    let d2: Vec<isize> = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            points
                .iter()
                .map(|&(px, py)| (px - x).pow(2) + (py - y).pow(2))
                .min()
                .unwrap_or(isize::MAX)
        })
        .collect();

    let cores_at = |radius: usize| -> Option<LabelMap> {
        let r2 = (radius * radius) as isize;
        let dilated = Mask::from_fn(w, h, |x, y| d2[y * w + x] <= r2);
        let regions = initial_regions(&dilated)?;
        let areas = regions.areas();
        let labels = regions
            .labels
            .iter()
            .map(|&l| if areas[l as usize] >= params.min_seed_area { l } else { 0 })
            .collect();
        let lm = LabelMap {
            width: w,
            height: h,
            labels,
        }
        .compacted();
        (lm.region_count() > 0).then_some(lm)
    };

    let first = params.dilation_radius.max(1);
    let mut counts = Vec::new();
    while let Some(lm) = cores_at(first + counts.len()) {
        counts.push(lm.region_count());
    }
    let best = *counts.iter().max()?;
    let start = counts.iter().position(|&c| c == best)?;
    let run = counts[start..].iter().take_while(|&&c| c == best).count();
    cores_at(first + start + (run - 1) / 2)
}

/// Split the blob enclosed by `contour` into insect regions.
///
/// One region back means the blob holds a single insect whose outline has
/// been refined; two or more means the touching insects were separated.
pub fn separate_touching(
    img: &GrayImage,
    contour: &Contour,
    params: &SeparationParams,
) -> Result<Vec<Region>> {
    if !contour.closed {
        return Err(Error::Contract("separate_touching needs a closed contour".into()));
    }
    let (w, h) = img.dims();
    let bb = contour.bounding_box().padded(2, w, h);
    let fill = contour.fill(w, h).crop(&bb);
    let boundary = {
        let mut m = Mask::new(bb.width(), bb.height());
        for &(x, y) in &contour.points {
            m.set(x - bb.x0, y - bb.y0, true);
        }
        m
    };

    let whole = || -> Vec<Region> {
        Region::from_global(&Mask::paste(w, h, &fill, &bb))
            .into_iter()
            .collect()
    };
    let Some(cores) = seed_cores(&boundary, params) else {
        return Ok(whole());
    };

    let roi = img.crop(bb.x0, bb.y0, bb.width(), bb.height())?;
    let relief = gradient_relief(&roi, params.relief_sigma)?;

    // background marker: everything outside the traced outline
    let background = cores.region_count() as u32 + 1;
    let mut markers = cores.clone();
    for (i, l) in markers.labels.iter_mut().enumerate() {
        if !fill.data()[i] {
            *l = background;
        }
    }
    let flooded = watershed(&relief, &markers)?;
    let everything = Mask::from_fn(bb.width(), bb.height(), |_, _| true);
    let tiled = absorb_lines(&flooded, &relief, &everything);
    let insects = LabelMap {
        width: tiled.width,
        height: tiled.height,
        labels: tiled
            .labels
            .iter()
            .map(|&l| if l == background { 0 } else { l })
            .collect(),
    };
    let min_area = (params.min_area_fraction * bb.area() as f64).round() as usize;
    let merged = merge_regions(&insects, min_area);

    let mut regions = Vec::new();
    for l in 1..=merged.region_count() as u32 {
        let local = merged.mask_of(l);
        if let Some(r) = Region::from_global(&Mask::paste(w, h, &local, &bb)) {
            regions.push(r);
        }
    }
    if regions.is_empty() {
        return Ok(whole());
    }
    Ok(regions)
}
