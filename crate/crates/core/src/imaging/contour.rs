//! Thin-edge extraction and boundary tracing.

use crate::components::{dilate_disc, label_components, Connectivity};
use crate::error::{Error, Result};
use crate::imaging::saliency::CurvinessField;
use crate::raster::{BoundingBox, Mask};

/// Fragments with fewer pixels are discarded, and nothing shorter is handed downstream.
pub const MIN_CONTOUR_POINTS: usize = 8;

/// Ordered boundary pixels of one edge component.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub points: Vec<(usize, usize)>,
    /// The boundary encloses interior pixels; first and last points are 8-neighbours.
    pub closed: bool,
}

impl Contour {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let (x, y) = self.points[0];
        self.points
            .iter()
            .fold(BoundingBox::new(x, y, x, y), |b, &(x, y)| b.include(x, y))
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.points.len() as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
        (sx / n, sy / n)
    }

    /// Boundary pixels plus everything they enclose, as a mask of the given size.
    pub fn fill(&self, width: usize, height: usize) -> Mask {
        let bb = self.bounding_box();
        let (local, origin) = self.local_fill(&bb);
        let mut out = Mask::new(width, height);
        for (x, y) in local.pixels() {
            let (gx, gy) = (x + origin.0, y + origin.1);
            if gx >= 1 && gy >= 1 && gx - 1 < width && gy - 1 < height {
                out.set(gx - 1, gy - 1, true);
            }
        }
        out
    }

    /// Fill inside the bounding box padded by one pixel; returns the local
    /// mask and the global coordinate (plus one) of its origin.
    fn local_fill(&self, bb: &BoundingBox) -> (Mask, (usize, usize)) {
        let (w, h) = (bb.width() + 2, bb.height() + 2);
        let mut boundary = Mask::new(w, h);
        for &(x, y) in &self.points {
            boundary.set(x - bb.x0 + 1, y - bb.y0 + 1, true);
        }
        (crate::components::fill_holes(&boundary), (bb.x0, bb.y0))
    }

    pub fn filled_area(&self) -> usize {
        let bb = self.bounding_box();
        self.local_fill(&bb).0.count()
    }
}

/// 8-neighbourhood in clockwise order (y grows downwards), starting west.
const MOORE: [(isize, isize); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

fn direction_index(from: (isize, isize), to: (isize, isize)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    MOORE.iter().position(|&m| m == d).expect("8-neighbour")
}

/// Moore-neighbour trace of the outer boundary of the component containing
/// `start`, which must be its first pixel in raster order.
pub fn trace_boundary(mask: &Mask, start: (usize, usize)) -> Vec<(usize, usize)> {
    let s = (start.0 as isize, start.1 as isize);
    let on = |p: (isize, isize)| mask.get_signed(p.0, p.1);
    let next = |p: (isize, isize), back: (isize, isize)| -> Option<((isize, isize), (isize, isize))> {
        let k0 = direction_index(p, back);
        let mut prev = back;
        for step in 1..=8 {
            let d = MOORE[(k0 + step) % 8];
            let c = (p.0 + d.0, p.1 + d.1);
            if on(c) {
                return Some((c, prev));
            }
            prev = c;
        }
        None
    };

    let mut points = vec![start];
    let Some((first, mut back)) = next(s, (s.0 - 1, s.1)) else {
        return points;
    };
    let mut p = first;
    let limit = 4 * mask.width() * mask.height() + 8;
    while points.len() < limit {
        if p == s {
            let (c, b) = next(p, back).expect("start has a neighbour");
            if c == first {
                break;
            }
            points.push((p.0 as usize, p.1 as usize));
            p = c;
            back = b;
            continue;
        }
        points.push((p.0 as usize, p.1 as usize));
        let (c, b) = next(p, back).expect("traced pixel has a neighbour");
        p = c;
        back = b;
    }
    points
}

/// Value at quantile `q` of the data (nearest rank, lower).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let idx = ((v.len() - 1) as f64 * q).floor() as usize;
    v[idx.min(v.len() - 1)]
}

/// Pixels that are maximal along their principal orientation.
pub fn non_maximum_suppression(cs: &CurvinessField) -> Mask {
    let m = &cs.magnitude;
    let (w, h) = m.dims();
    Mask::from_fn(w, h, |x, y| {
        let v = m.get(x, y);
        if !(v > 0.0) {
            return false;
        }
        let t = cs.orientation.get(x, y);
        let (dx, dy) = (t.cos(), t.sin());
        let (xf, yf) = (x as f64, y as f64);
        let a = m.sample_bilinear(xf + dx, yf + dy);
        let b = m.sample_bilinear(xf - dx, yf - dy);
        v >= a && v >= b
    })
}

/// Thin-edge map: NMS survivors whose magnitude exceeds the `q` quantile
/// of the magnitude raster.
pub fn edge_map(cs: &CurvinessField, threshold_quantile: f64) -> Result<Mask> {
    if !(threshold_quantile > 0.0 && threshold_quantile < 1.0) {
        return Err(Error::param(format!(
            "threshold quantile must lie in (0, 1), got {threshold_quantile}"
        )));
    }
    let t = quantile(cs.magnitude.data(), threshold_quantile);
    let thin = non_maximum_suppression(cs);
    let (w, h) = cs.dims();
    Ok(Mask::from_fn(w, h, |x, y| thin.get(x, y) && cs.magnitude.get(x, y) > t))
}

/// Outer contours of the 8-connected components of an edge mask.
///
/// Components shorter than [`MIN_CONTOUR_POINTS`] are dropped, as is any
/// contour lying inside the filled region of another closed contour.
pub fn contours_from_edges(edges: &Mask) -> Vec<Contour> {
    let (w, h) = (edges.width(), edges.height());
    let comps = label_components(edges, Connectivity::Eight);
    let sizes = comps.sizes();
    let mut starts = vec![None; comps.count + 1];
    for (i, &l) in comps.labels.iter().enumerate() {
        if l != 0 && starts[l as usize].is_none() {
            starts[l as usize] = Some((i % w, i / w));
        }
    }

    let mut candidates = Vec::new();
    for label in 1..=comps.count {
        if sizes[label] < MIN_CONTOUR_POINTS {
            continue;
        }
        let start = starts[label].expect("non-empty component");
        let points = trace_boundary(edges, start);
        let mut c = Contour {
            points,
            closed: false,
        };
        let distinct = {
            let mut p = c.points.clone();
            p.sort_unstable();
            p.dedup();
            p.len()
        };
        c.closed = c.filled_area() > distinct;
        candidates.push(c);
    }

    // cover count per pixel over closed fills; nested contours start inside a second fill
    let mut cover = vec![0u16; w * h];
    for c in candidates.iter().filter(|c| c.closed) {
        for (x, y) in c.fill(w, h).pixels() {
            cover[y * w + x] = cover[y * w + x].saturating_add(1);
        }
    }
    candidates
        .into_iter()
        .filter(|c| {
            let (x, y) = c.points[0];
            let own = c.closed as u16;
            cover[y * w + x] <= own
        })
        .collect()
}

/// Gap bridged between edge fragments before tracing.
pub const DEFAULT_LINK_RADIUS: usize = 3;

/// Contours of the thin-edge map after bridging gaps of up to
/// [`DEFAULT_LINK_RADIUS`] pixels.
pub fn extract_contours(cs: &CurvinessField, threshold_quantile: f64) -> Result<Vec<Contour>> {
    extract_linked_contours(cs, threshold_quantile, DEFAULT_LINK_RADIUS)
}

/// As [`extract_contours`] with an explicit link radius; 0 traces the raw thin edges.
pub fn extract_linked_contours(
    cs: &CurvinessField,
    threshold_quantile: f64,
    link_radius: usize,
) -> Result<Vec<Contour>> {
    let edges = edge_map(cs, threshold_quantile)?;
    Ok(contours_from_edges(&dilate_disc(&edges, link_radius)))
}
