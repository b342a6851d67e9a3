//! Histogram of Curviness Saliency: HOG-style binning of curvature
//! orientation weighted by curvature magnitude.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{multiscale_cs, CurvinessField};
use crate::raster::{GrayImage, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcsParams {
    /// (width, height) in pixels.
    pub window: (usize, usize),
    pub block: (usize, usize),
    pub stride: (usize, usize),
    pub cell: (usize, usize),
    pub bins: usize,
    pub alpha: f64,
    pub scales: Vec<f64>,
}

impl Default for HcsParams {
    fn default() -> Self {
        Self {
            window: (64, 48),
            block: (8, 8),
            stride: (4, 4),
            cell: (4, 4),
            bins: 9,
            alpha: 1.0,
            scales: vec![1.0, 2.0, 4.0],
        }
    }
}

/// Block-normalisation regulariser.
pub const BLOCK_EPSILON: f64 = 1e-3;

impl HcsParams {
    fn blocks_along(win: usize, block: usize, stride: usize, axis: &str) -> Result<usize> {
        if (win - block) % stride != 0 {
            return Err(Error::param(format!(
                "{axis}: window {win} minus block {block} is not a multiple of stride {stride}"
            )));
        }
        Ok((win - block) / stride + 1)
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = [self.window, self.block, self.stride, self.cell];
        if pairs.iter().any(|&(w, h)| w == 0 || h == 0) || self.bins == 0 {
            return Err(Error::param("HCS sizes and bin count must be positive"));
        }
        if self.block.0 % self.cell.0 != 0 || self.block.1 % self.cell.1 != 0 {
            return Err(Error::param("block size must be a multiple of the cell size"));
        }
        if self.window.0 < self.block.0 || self.window.1 < self.block.1 {
            return Err(Error::param("window smaller than block"));
        }
        if self.stride.0 > self.block.0 || self.stride.1 > self.block.1 {
            return Err(Error::param("stride larger than block"));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::param("alpha must be positive"));
        }
        Ok(())
    }

    /// Number of blocks across and down.
    pub fn block_grid(&self) -> Result<(usize, usize)> {
        self.validate()?;
        Ok((
            Self::blocks_along(self.window.0, self.block.0, self.stride.0, "x")?,
            Self::blocks_along(self.window.1, self.block.1, self.stride.1, "y")?,
        ))
    }

    pub fn cells_per_block(&self) -> (usize, usize) {
        (self.block.0 / self.cell.0, self.block.1 / self.cell.1)
    }

    pub fn block_len(&self) -> usize {
        let (cx, cy) = self.cells_per_block();
        cx * cy * self.bins
    }

    fn sorted_scales(&self) -> Vec<f64> {
        let mut s = self.scales.clone();
        s.sort_by(f64::total_cmp);
        s
    }
}

pub fn descriptor_len(p: &HcsParams) -> Result<usize> {
    let (bx, by) = p.block_grid()?;
    Ok(bx * by * p.block_len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcsDescriptor {
    pub values: Vec<f64>,
    pub params: HcsParams,
}

impl HcsDescriptor {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `label,v1,v2,...` with round-trippable decimals.
    pub fn to_csv_line(&self, label: i8) -> String {
        let mut s = label.to_string();
        for v in &self.values {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s
    }
}

/// Parse one `label,v1,v2,...` line.
pub fn parse_csv_line(line: &str) -> Result<(i8, Vec<f64>)> {
    let mut fields = line.trim().split(',');
    let label: i8 = fields
        .next()
        .and_then(|f| f.trim().parse().ok())
        .filter(|l| *l == 1 || *l == -1)
        .ok_or_else(|| Error::Data(format!("bad label in descriptor line: {line:.40}")))?;
    let values = fields
        .map(|f| f.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Data(format!("bad descriptor value: {e}")))?;
    Ok((label, values))
}

/// Smallest region side accepted by [`normalize_patch`].
pub const MIN_PATCH_SIDE: usize = 8;

/// Crop the region's bounding box, replace pixels outside the region with
/// the crop's mean, resize to the window and stretch to `[0, 1]`.
pub fn normalize_patch(img: &GrayImage, region: &Mask, window: (usize, usize)) -> Result<GrayImage> {
    if region.width() != img.width() || region.height() != img.height() {
        return Err(Error::dim("region mask and image differ in size"));
    }
    let bb = region
        .bounding_box()
        .ok_or_else(|| Error::dim("empty region"))?;
    if bb.width() < MIN_PATCH_SIDE || bb.height() < MIN_PATCH_SIDE {
        return Err(Error::dim(format!(
            "region {}x{} is smaller than {MIN_PATCH_SIDE}x{MIN_PATCH_SIDE}",
            bb.width(),
            bb.height()
        )));
    }
    let mut crop = img.crop(bb.x0, bb.y0, bb.width(), bb.height())?;
    let mean = crop.mean();
    for y in 0..bb.height() {
        for x in 0..bb.width() {
            if !region.get(bb.x0 + x, bb.y0 + y) {
                crop.set(x, y, mean);
            }
        }
    }
    let mut out = crop.resize_bilinear(window.0, window.1);
    let (lo, hi) = out.min_max();
    let span = hi - lo;
    for v in out.data_mut() {
        *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
    }
    Ok(out)
}

/// Lower bin and weight of an orientation; the rest goes to the next bin (cyclic).
#[inline]
fn bin_split(theta: f64, bins: usize) -> (usize, f64) {
    let pos = theta / (PI / bins as f64) - 0.5;
    let lo = pos.floor();
    let frac = pos - lo;
    ((lo as isize).rem_euclid(bins as isize) as usize, 1.0 - frac)
}

fn normalize_block(v: &mut [f64]) {
    let n = (v.iter().map(|x| x * x).sum::<f64>() + BLOCK_EPSILON * BLOCK_EPSILON).sqrt();
    for x in v {
        *x /= n;
    }
}

/// Descriptor from a precomputed saliency field of window size.
pub fn hcs_from_field(cs: &CurvinessField, p: &HcsParams) -> Result<HcsDescriptor> {
    let (bx, by) = p.block_grid()?;
    let (w, h) = cs.dims();
    if (w, h) != p.window {
        return Err(Error::dim(format!(
            "field is {w}x{h}, window is {}x{}",
            p.window.0, p.window.1
        )));
    }
    let bins = p.bins;
    let (cw, ch) = p.cell;
    let (ncx, ncy) = p.cells_per_block();

    // histograms of every cell origin that any block uses
    let cell_x: Vec<usize> = (0..bx).flat_map(|i| (0..ncx).map(move |c| i * p.stride.0 + c * cw)).collect();
    let cell_y: Vec<usize> = (0..by).flat_map(|j| (0..ncy).map(move |c| j * p.stride.1 + c * ch)).collect();
    let mut xs = cell_x.clone();
    xs.sort_unstable();
    xs.dedup();
    let mut ys = cell_y.clone();
    ys.sort_unstable();
    ys.dedup();
    let mut cells = vec![0.0; xs.len() * ys.len() * bins];
    for (iy, &y0) in ys.iter().enumerate() {
        for (ix, &x0) in xs.iter().enumerate() {
            let hist = &mut cells[(iy * xs.len() + ix) * bins..][..bins];
            for y in y0..y0 + ch {
                for x in x0..x0 + cw {
                    let m = cs.magnitude.get(x, y);
                    if m == 0.0 {
                        continue;
                    }
                    let (lo, wlo) = bin_split(cs.orientation.get(x, y), bins);
                    hist[lo] += m * wlo;
                    hist[(lo + 1) % bins] += m * (1.0 - wlo);
                }
            }
        }
    }

    let x_index = |x: usize| xs.binary_search(&x).expect("cell origin");
    let y_index = |y: usize| ys.binary_search(&y).expect("cell origin");
    let mut values = Vec::with_capacity(bx * by * p.block_len());
    for j in 0..by {
        for i in 0..bx {
            let start = values.len();
            for cy in 0..ncy {
                for cx in 0..ncx {
                    let ix = x_index(i * p.stride.0 + cx * cw);
                    let iy = y_index(j * p.stride.1 + cy * ch);
                    values.extend_from_slice(&cells[(iy * xs.len() + ix) * bins..][..bins]);
                }
            }
            normalize_block(&mut values[start..]);
        }
    }
    Ok(HcsDescriptor {
        values,
        params: p.clone(),
    })
}

pub fn compute_hcs(patch: &GrayImage, p: &HcsParams) -> Result<HcsDescriptor> {
    p.validate()?;
    if patch.dims() != p.window {
        return Err(Error::dim(format!(
            "patch is {}x{}, window is {}x{}",
            patch.width(),
            patch.height(),
            p.window.0,
            p.window.1
        )));
    }
    let cs = multiscale_cs(patch, &p.sorted_scales(), p.alpha)?;
    hcs_from_field(&cs, p)
}
