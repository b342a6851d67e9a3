//! Second derivatives and curviness saliency.
//!
//! The saliency of a pixel is `alpha * ((Ixx - Iyy)^2 + 4 Ixy^2)`, the squared
//! gap between the two Hessian eigenvalues. It vanishes on flat and on
//! isotropically curved patches and peaks where curvature is strongly
//! directional. The orientation attached to each pixel is that of the
//! eigenvector whose eigenvalue has the larger magnitude, folded into `[0, pi)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::imaging::smooth::gaussian_smooth;
use crate::raster::GrayImage;

/// Per-pixel second derivatives of a (possibly smoothed) image.
#[derive(Debug, Clone)]
pub struct HessianField {
    pub ixx: GrayImage,
    pub iyy: GrayImage,
    /// Single mixed derivative, used for both off-diagonal entries.
    pub ixy: GrayImage,
    pub sigma: f64,
}

impl HessianField {
    pub fn dims(&self) -> (usize, usize) {
        self.ixx.dims()
    }
}

/// Saliency magnitude, principal orientation and the scales that produced them.
#[derive(Debug, Clone)]
pub struct CurvinessField {
    pub magnitude: GrayImage,
    /// Radians in `[0, pi)`.
    pub orientation: GrayImage,
    pub alpha: f64,
    pub scales: Vec<f64>,
    /// Index into `scales` of the winning scale per pixel.
    pub scale_index: Vec<u8>,
}

impl CurvinessField {
    pub fn dims(&self) -> (usize, usize) {
        self.magnitude.dims()
    }
}

pub const MIN_HESSIAN_SIDE: usize = 5;

/// Stencil second derivatives after optional Gaussian smoothing.
///
/// `sigma == 0` uses the raw image. Pure derivatives use `[1, -2, 1]`, the
/// mixed derivative the centred four-point cross; borders replicate.
pub fn hessian(img: &GrayImage, sigma: f64) -> Result<HessianField> {
    let (w, h) = img.dims();
    if w < MIN_HESSIAN_SIDE || h < MIN_HESSIAN_SIDE {
        return Err(Error::dim(format!(
            "hessian needs at least {MIN_HESSIAN_SIDE}x{MIN_HESSIAN_SIDE}, got {w}x{h}"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("hessian sigma must be >= 0, got {sigma}")));
    }
    let smoothed;
    let src = if sigma > 0.0 {
        smoothed = gaussian_smooth(img, sigma)?;
        &smoothed
    } else {
        img
    };

    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 0..h {
        let yi = y as isize;
        for x in 0..w {
            let xi = x as isize;
            let c = src.get(x, y);
            let i = y * w + x;
            ixx[i] = src.get_clamped(xi + 1, yi) - 2.0 * c + src.get_clamped(xi - 1, yi);
            iyy[i] = src.get_clamped(xi, yi + 1) - 2.0 * c + src.get_clamped(xi, yi - 1);
            ixy[i] = (src.get_clamped(xi + 1, yi + 1) - src.get_clamped(xi + 1, yi - 1)
                - src.get_clamped(xi - 1, yi + 1)
                + src.get_clamped(xi - 1, yi - 1))
                / 4.0;
        }
    }
    Ok(HessianField {
        ixx: GrayImage::new(w, h, ixx)?,
        iyy: GrayImage::new(w, h, iyy)?,
        ixy: GrayImage::new(w, h, ixy)?,
        sigma,
    })
}

#[inline]
fn saliency_at(ixx: f64, iyy: f64, ixy: f64) -> f64 {
    let d = ixx - iyy;
    d * d + 4.0 * ixy * ixy
}

/// Orientation of the dominant eigenvector of `[[ixx, ixy], [ixy, iyy]]`.
///
/// Equal-magnitude eigenvalues of opposite sign resolve to the positive one.
#[inline]
pub fn principal_angle(ixx: f64, iyy: f64, ixy: f64) -> f64 {
    if ixx == iyy && ixy == 0.0 {
        return 0.0;
    }
    // direction of the eigenvector belonging to the larger eigenvalue
    let upper = 0.5 * (2.0 * ixy).atan2(ixx - iyy);
    let theta = if ixx + iyy >= 0.0 { upper } else { upper + PI / 2.0 };
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

pub fn principal_direction(h: &HessianField) -> GrayImage {
    let (w, ht) = h.dims();
    let data = h
        .ixx
        .data()
        .iter()
        .zip(h.iyy.data())
        .zip(h.ixy.data())
        .map(|((&a, &c), &b)| principal_angle(a, c, b))
        .collect();
    GrayImage::new(w, ht, data).expect("same dimensions")
}

pub fn curviness_saliency(h: &HessianField, alpha: f64) -> Result<CurvinessField> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::param(format!("alpha must be > 0, got {alpha}")));
    }
    let (w, ht) = h.dims();
    let magnitude = h
        .ixx
        .data()
        .iter()
        .zip(h.iyy.data())
        .zip(h.ixy.data())
        .map(|((&a, &c), &b)| alpha * saliency_at(a, c, b))
        .collect();
    Ok(CurvinessField {
        magnitude: GrayImage::new(w, ht, magnitude)?,
        orientation: principal_direction(h),
        alpha,
        scales: vec![h.sigma],
        scale_index: vec![0; w * ht],
    })
}

/// Per-pixel maximum over scales of `sigma^4`-normalised saliency.
///
/// The orientation comes from the winning scale; ties keep the smaller scale.
pub fn multiscale_cs(img: &GrayImage, scales: &[f64], alpha: f64) -> Result<CurvinessField> {
    if scales.is_empty() {
        return Err(Error::param("scale list is empty"));
    }
    if scales.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::param(format!(
            "scales must be strictly increasing, got {scales:?}"
        )));
    }
    if scales.len() > u8::MAX as usize {
        return Err(Error::param("too many scales"));
    }
    if let Some(&s) = scales.iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::param(format!("scales must be > 0, got {s}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::param(format!("alpha must be > 0, got {alpha}")));
    }

    let (w, ht) = img.dims();
    let mut magnitude = vec![f64::NEG_INFINITY; w * ht];
    let mut orientation = vec![0.0; w * ht];
    let mut scale_index = vec![0u8; w * ht];
    for (si, &sigma) in scales.iter().enumerate() {
        let h = hessian(img, sigma)?;
        let norm = alpha * sigma.powi(4);
        let (a, c, b) = (h.ixx.data(), h.iyy.data(), h.ixy.data());
        for i in 0..w * ht {
            let m = norm * saliency_at(a[i], c[i], b[i]);
            if m > magnitude[i] {
                magnitude[i] = m;
                orientation[i] = principal_angle(a[i], c[i], b[i]);
                scale_index[i] = si as u8;
            }
        }
    }
    Ok(CurvinessField {
        magnitude: GrayImage::new(w, ht, magnitude)?,
        orientation: GrayImage::new(w, ht, orientation)?,
        alpha,
        scales: scales.to_vec(),
        scale_index,
    })
}
