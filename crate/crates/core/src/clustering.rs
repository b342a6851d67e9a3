//! Shape features of closed contours and their k-means triage into noise,
//! single insects and touching groups.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Contour, MIN_CONTOUR_POINTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeFeatures {
    pub area: f64,
    pub perimeter: f64,
    /// `4 pi A / P^2`.
    pub compactness: f64,
    /// Area over convex-hull area.
    pub solidity: f64,
    /// From the second-order moments of the enclosed pixels.
    pub eccentricity: f64,
}

impl ShapeFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![
            self.area,
            self.perimeter,
            self.compactness,
            self.solidity,
            self.eccentricity,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Noise,
    Individual,
    Touching,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourCategory {
    pub tag: Category,
    pub cluster_id: usize,
}

fn shoelace(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    let mut s = 0.0;
    for i in 0..n {
        let (x0, y0) = points[i];
        let (x1, y1) = points[(i + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    0.5 * s.abs()
}

/// Convex hull by monotone chain, counter-clockwise, without repeated points.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p: Vec<(f64, f64)> = points.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * p.len());
    for &pt in p.iter().chain(p.iter().rev().skip(1)) {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], pt) <= 0.0 {
            hull.pop();
        }
        hull.push(pt);
    }
    hull.pop();
    hull
}

/// Douglas-Peucker tolerance applied before measuring perimeters, in pixels.
pub const STAIRCASE_TOLERANCE: f64 = 0.5;

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return ((p.0 - a.0).powi(2) + (p.1 - a.1).powi(2)).sqrt();
    }
    let t = (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0);
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

fn douglas_peucker(pts: &[(f64, f64)], tol: f64, keep: &mut [bool]) {
    let mut stack = vec![(0, pts.len() - 1)];
    while let Some((i, j)) = stack.pop() {
        if j <= i + 1 {
            continue;
        }
        let (mut far, mut dist) = (i, 0.0);
        for k in i + 1..j {
            let d = point_segment_distance(pts[k], pts[i], pts[j]);
            if d > dist {
                far = k;
                dist = d;
            }
        }
        if dist > tol {
            keep[far] = true;
            stack.push((i, far));
            stack.push((far, j));
        }
    }
}

/// Closed-polygon simplification, anchored at the first point and the point
/// farthest from it.
pub fn simplify_closed(pts: &[(f64, f64)], tol: f64) -> Vec<(f64, f64)> {
    if pts.len() < 4 {
        return pts.to_vec();
    }
    let d0 = |p: &(f64, f64)| (p.0 - pts[0].0).powi(2) + (p.1 - pts[0].1).powi(2);
    let far = (1..pts.len())
        .max_by(|&a, &b| d0(&pts[a]).total_cmp(&d0(&pts[b])).then(b.cmp(&a)))
        .expect("non-empty");
    let mut ring: Vec<(f64, f64)> = pts.to_vec();
    ring.push(pts[0]);
    let mut keep = vec![false; ring.len()];
    keep[0] = true;
    keep[far] = true;
    douglas_peucker(&ring[..=far], tol, &mut keep[..=far]);
    douglas_peucker(&ring[far..], tol, &mut keep[far..]);
    ring.pop();
    keep.pop();
    ring.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect()
}

pub fn shape_features(c: &Contour) -> Result<ShapeFeatures> {
    if !c.closed {
        return Err(Error::Contract("shape features need a closed contour".into()));
    }
    if c.len() < MIN_CONTOUR_POINTS {
        return Err(Error::Contract(format!(
            "contour has {} points, need at least {MIN_CONTOUR_POINTS}",
            c.len()
        )));
    }
    let pts: Vec<(f64, f64)> = c.points.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
    let area = shoelace(&pts);
    let outline = simplify_closed(&pts, STAIRCASE_TOLERANCE);
    let perimeter: f64 = (0..outline.len())
        .map(|i| {
            let (a, b) = (outline[i], outline[(i + 1) % outline.len()]);
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        })
        .sum();
    if !(area > 0.0) {
        return Err(Error::Contract("contour encloses no area".into()));
    }
    let hull_area = shoelace(&convex_hull(&pts));
    let solidity = if hull_area > 0.0 { (area / hull_area).min(1.0) } else { 1.0 };

    let bb = c.bounding_box();
    let fill = c.fill(bb.x1 + 1, bb.y1 + 1);
    let (mut n, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (x, y) in fill.pixels() {
        n += 1.0;
        sx += x as f64;
        sy += y as f64;
    }
    let (mx, my) = (sx / n, sy / n);
    let (mut cxx, mut cyy, mut cxy) = (0.0, 0.0, 0.0);
    for (x, y) in fill.pixels() {
        let (dx, dy) = (x as f64 - mx, y as f64 - my);
        cxx += dx * dx;
        cyy += dy * dy;
        cxy += dx * dy;
    }
    let (cxx, cyy, cxy) = (cxx / n, cyy / n, cxy / n);
    let half_tr = 0.5 * (cxx + cyy);
    let disc = (0.25 * (cxx - cyy).powi(2) + cxy * cxy).sqrt();
    let (l1, l2) = (half_tr + disc, (half_tr - disc).max(0.0));
    let eccentricity = if l1 > 0.0 { (1.0 - l2 / l1).max(0.0).sqrt() } else { 0.0 };

    Ok(ShapeFeatures {
        area,
        perimeter,
        compactness: 4.0 * std::f64::consts::PI * area / (perimeter * perimeter),
        solidity,
        eccentricity,
    })
}

/// Per-dimension z-scores; constant dimensions map to 0.
pub fn zscore(features: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let Some(first) = features.first() else {
        return Vec::new();
    };
    let n = features.len() as f64;
    let d = first.len();
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; d];
    for f in features {
        for ((s, v), m) in sd.iter_mut().zip(f).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    features
        .iter()
        .map(|f| {
            f.iter()
                .zip(&mean)
                .zip(&sd)
                .map(|((v, m), s)| if *s > 0.0 { (v - m) / s.sqrt() } else { 0.0 })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: f64,
    /// WCSS after each Lloyd iteration.
    pub history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, sq_dist(point, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

pub const MAX_LLOYD_ITERATIONS: usize = 100;

fn check_input(features: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::param("k must be at least 1"));
    }
    if k > features.len() {
        return Err(Error::param(format!(
            "k = {k} exceeds the {} samples",
            features.len()
        )));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::dim("feature vectors differ in length"));
    }
    Ok(())
}

/// Lloyd iterations from given centroids until assignments are stable.
pub fn lloyd(features: &[Vec<f64>], init: Vec<Vec<f64>>) -> Result<KMeans> {
    check_input(features, init.len())?;
    let k = init.len();
    let d = features[0].len();
    let mut centroids = init;
    let mut assignments: Vec<usize> = features.iter().map(|f| nearest(f, &centroids).0).collect();
    let mut history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (f, &a) in features.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(f) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let wcss: f64 = features
            .iter()
            .zip(&assignments)
            .map(|(f, &a)| sq_dist(f, &centroids[a]))
            .sum();
        history.push(wcss);
        let next: Vec<usize> = features.iter().map(|f| nearest(f, &centroids).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let wcss = *history.last().expect("at least one iteration");
    Ok(KMeans {
        assignments,
        centroids,
        wcss,
        history,
    })
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(features: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeans> {
    check_input(features, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = features.len();
    let mut centroids = vec![features[rng.random_range(0..n)].clone()];
    while centroids.len() < k {
        let d2: Vec<f64> = features.iter().map(|f| nearest(f, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.push(features[pick].clone());
    }
    lloyd(features, centroids)
}

/// Best of `restarts` runs seeded `seed + i`; ties keep the lowest index.
pub fn kmeans_restarts(features: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeans> {
    let mut best: Option<KMeans> = None;
    for i in 0..restarts.max(1) {
        let run = kmeans(features, k, seed.wrapping_add(i as u64))?;
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub const ELBOW_RESTARTS: usize = 10;
pub const DEFAULT_K_MAX: usize = 6;

/// WCSS for `k = 1..=k_max`, each the best of [`ELBOW_RESTARTS`] runs.
pub fn wcss_curve(features: &[Vec<f64>], k_max: usize, seed: u64) -> Result<Vec<f64>> {
    (1..=k_max)
        .map(|k| kmeans_restarts(features, k, seed, ELBOW_RESTARTS).map(|r| r.wcss))
        .collect()
}

/// The `k` farthest from the chord between the curve's end points, both
/// axes scaled to `[0, 1]`.
pub fn elbow_of(wcss: &[f64]) -> usize {
    let m = wcss.len();
    if m < 3 || !(wcss[0] > 0.0) {
        return 1;
    }
    let pts: Vec<(f64, f64)> = wcss
        .iter()
        .enumerate()
        .map(|(i, &w)| (i as f64 / (m - 1) as f64, w / wcss[0]))
        .collect();
    let (a, b) = (pts[0], pts[m - 1]);
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let norm = (dx * dx + dy * dy).sqrt();
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &(x, y)) in pts.iter().enumerate() {
        let dist = (dy * (x - a.0) - dx * (y - a.1)).abs() / norm;
        if dist > best.1 {
            best = (i, dist);
        }
    }
    best.0 + 1
}

pub fn elbow_select_k(features: &[Vec<f64>], k_max: usize, seed: u64) -> Result<usize> {
    if k_max < 2 {
        return Err(Error::param("k_max must be at least 2"));
    }
    if features.len() < 3 {
        return Ok(1);
    }
    let k_max = k_max.min(features.len());
    Ok(elbow_of(&wcss_curve(features, k_max, seed)?))
}

/// Tag clusters by ascending mean area: smallest is noise, next individual
/// insects, the rest touching groups. A single cluster is individual.
/// Area ties go to the lower cluster id. Returned in cluster-id order.
pub fn categorize(assignments: &[usize], areas: &[f64], k: usize) -> Vec<ContourCategory> {
    let mut sum = vec![0.0; k];
    let mut count = vec![0usize; k];
    for (&a, &area) in assignments.iter().zip(areas) {
        sum[a] += area;
        count[a] += 1;
    }
    let mean: Vec<f64> = (0..k)
        .map(|c| if count[c] > 0 { sum[c] / count[c] as f64 } else { 0.0 })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| mean[a].total_cmp(&mean[b]).then(a.cmp(&b)));
    let mut tags = vec![Category::Individual; k];
    if k >= 2 {
        for (rank, &c) in order.iter().enumerate() {
            tags[c] = match rank {
                0 => Category::Noise,
                1 => Category::Individual,
                _ => Category::Touching,
            };
        }
    }
    (0..k)
        .map(|c| ContourCategory {
            tag: tags[c],
            cluster_id: c,
        })
        .collect()
}

/// Full triage: features, z-scores, elbow k, clustering and tags, one per contour.
#[derive(Debug, Clone)]
pub struct Triage {
    pub features: Vec<ShapeFeatures>,
    pub k: usize,
    pub assignments: Vec<usize>,
    pub categories: Vec<ContourCategory>,
}

impl Triage {
    pub fn category_of(&self, index: usize) -> Category {
        self.categories[self.assignments[index]].tag
    }
}

pub fn triage(contours: &[Contour], k_max: usize, seed: u64) -> Result<Triage> {
    let features = contours.iter().map(shape_features).collect::<Result<Vec<_>>>()?;
    if features.is_empty() {
        return Ok(Triage {
            features,
            k: 0,
            assignments: Vec::new(),
            categories: Vec::new(),
        });
    }
    let z = zscore(&features.iter().map(ShapeFeatures::to_vec).collect::<Vec<_>>());
    let k = elbow_select_k(&z, k_max, seed)?;
    let run = kmeans_restarts(&z, k, seed, ELBOW_RESTARTS)?;
    let areas: Vec<f64> = features.iter().map(|f| f.area).collect();
    let categories = categorize(&run.assignments, &areas, k);
    Ok(Triage {
        features,
        k,
        assignments: run.assignments,
        categories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::{label_components, Connectivity};
    use crate::imaging::contour::trace_boundary;
    use crate::raster::Mask;

    fn contour_of(mask: &Mask) -> Contour {
        let comps = label_components(mask, Connectivity::Eight);
        assert_eq!(comps.count, 1);
        let start = mask.pixels().next().unwrap();
        Contour {
            points: trace_boundary(mask, start),
            closed: true,
        }
    }

    #[test]
    fn square_side_ten() {
        let m = Mask::from_fn(20, 20, |x, y| (3..=13).contains(&x) && (4..=14).contains(&y));
        let f = shape_features(&contour_of(&m)).unwrap();
        assert!((f.area - 100.0).abs() < 1e-9);
        assert!((f.perimeter - 40.0).abs() < 1e-9);
        assert!((f.compactness - std::f64::consts::FRAC_PI_4).abs() < 0.05);
        assert!((f.solidity - 1.0).abs() < 1e-9);
        assert!(f.eccentricity < 0.05);
    }

    #[test]
    fn disc_is_compact_and_solid() {
        let m = Mask::from_fn(40, 40, |x, y| {
            (x as f64 - 20.0).powi(2) + (y as f64 - 20.0).powi(2) <= 225.0
        });
        let f = shape_features(&contour_of(&m)).unwrap();
        assert!(f.compactness >= 0.9, "{}", f.compactness);
        assert!(f.solidity >= 0.95, "{}", f.solidity);
        assert!(f.compactness <= 1.05 && f.solidity <= 1.05);
    }

    #[test]
    fn two_to_one_ellipse_eccentricity() {
        let m = Mask::from_fn(60, 40, |x, y| {
            ((x as f64 - 30.0) / 24.0).powi(2) + ((y as f64 - 20.0) / 12.0).powi(2) <= 1.0
        });
        let f = shape_features(&contour_of(&m)).unwrap();
        assert!((f.eccentricity - 0.75f64.sqrt()).abs() < 0.05, "{}", f.eccentricity);
    }

    #[test]
    fn rotation_by_quarter_turn_barely_moves_ratios() {
        let m = Mask::from_fn(60, 60, |x, y| {
            let (u, v) = (x as f64 - 30.0, y as f64 - 28.0);
            let (a, b) = (0.8 * u + 0.6 * v, -0.6 * u + 0.8 * v);
            (a / 20.0).powi(2) + (b / 9.0).powi(2) <= 1.0
        });
        let r = Mask::from_fn(60, 60, |x, y| m.get(y, 59 - x));
        let (f, g) = (
            shape_features(&contour_of(&m)).unwrap(),
            shape_features(&contour_of(&r)).unwrap(),
        );
        assert!((f.compactness - g.compactness).abs() < 0.05);
        assert!((f.solidity - g.solidity).abs() < 0.05);
        assert!((f.eccentricity - g.eccentricity).abs() < 0.05);
    }

    #[test]
    fn translation_leaves_features_unchanged() {
        let shape = |ox: usize, oy: usize| {
            Mask::from_fn(50, 50, move |x, y| {
                let (u, v) = (x as f64 - 12.0 - ox as f64, y as f64 - 10.0 - oy as f64);
                (u / 9.0).powi(2) + (v / 5.0).powi(2) <= 1.0 || (u >= 0.0 && u < 4.0 && v.abs() < 8.0)
            })
        };
        let f = shape_features(&contour_of(&shape(0, 0))).unwrap();
        let g = shape_features(&contour_of(&shape(17, 23))).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn open_contour_rejected() {
        let c = Contour {
            points: (0..10).map(|x| (x, 0)).collect(),
            closed: false,
        };
        assert!(matches!(shape_features(&c), Err(Error::Contract(_))));
    }

    fn blobs_1d() -> Vec<Vec<f64>> {
        (0..20)
            .map(|i| {
                let jitter = (i % 5) as f64 * 0.05 - 0.1;
                vec![if i < 10 { jitter } else { 10.0 + jitter }]
            })
            .collect()
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let f = blobs_1d();
        let r = kmeans(&f, 1, 3).unwrap();
        let mean = f.iter().map(|v| v[0]).sum::<f64>() / 20.0;
        assert!((r.centroids[0][0] - mean).abs() < 1e-12);
        let var: f64 = f.iter().map(|v| (v[0] - mean).powi(2)).sum();
        assert!((r.wcss - var).abs() < 1e-9);
    }

    #[test]
    fn two_blobs_split_exactly_for_every_seed() {
        let f = blobs_1d();
        for seed in 0..50 {
            let r = kmeans(&f, 2, seed).unwrap();
            let left = r.assignments[0];
            assert!(r.assignments[..10].iter().all(|&a| a == left));
            assert!(r.assignments[10..].iter().all(|&a| a != left));
        }
    }

    #[test]
    fn one_cluster_per_point_has_zero_wcss() {
        let f: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        assert_eq!(kmeans(&f, 6, 1).unwrap().wcss, 0.0);
    }

    #[test]
    fn too_many_clusters_rejected() {
        let f = blobs_1d();
        assert!(matches!(kmeans(&f, 21, 0), Err(Error::Parameter(_))));
        assert!(kmeans(&f, 0, 0).is_err());
    }

    fn three_blobs(seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centres = [(0.0, 0.0), (10.0, 0.0), (5.0, 9.0)];
        (0..30)
            .map(|i| {
                let (cx, cy) = centres[i % 3];
                vec![cx + rng.random_range(-1.0..1.0), cy + rng.random_range(-1.0..1.0)]
            })
            .collect()
    }

    #[test]
    fn elbow_finds_three_blobs() {
        for seed in 0..10 {
            assert_eq!(elbow_select_k(&three_blobs(seed), 8, seed).unwrap(), 3);
        }
    }

    // Two close blobs and a far third: the first WCSS drop dominates and the
    // geometric elbow settles on the coarse two-cluster split.
    #[test]
    fn elbow_prefers_coarse_split_of_nested_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let centres = [(0.0, 0.0), (9.0, 9.0), (30.0, 34.0)];
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|i| {
                let (cx, cy) = centres[i % 3];
                vec![cx + rng.random_range(-1.0..1.0), cy + rng.random_range(-1.0..1.0)]
            })
            .collect();
        assert_eq!(elbow_select_k(&zscore(&pts), 8, 0).unwrap(), 2);
    }

    #[test]
    fn elbow_on_single_blob_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let k = elbow_select_k(&f, 8, 0).unwrap();
        assert!(k <= 3, "k = {k}");
    }

    #[test]
    fn elbow_degenerate_inputs() {
        assert_eq!(elbow_select_k(&[vec![0.0], vec![1.0]], 6, 0).unwrap(), 1);
        assert!(elbow_select_k(&three_blobs(0), 1, 0).is_err());
    }

    #[test]
    fn categories_follow_mean_area() {
        let assignments = [0, 1, 2, 0, 1, 2];
        let areas = [300.0, 650.0, 12.0, 300.0, 650.0, 12.0];
        let cats = categorize(&assignments, &areas, 3);
        assert_eq!(cats[2].tag, Category::Noise);
        assert_eq!(cats[0].tag, Category::Individual);
        assert_eq!(cats[1].tag, Category::Touching);
        assert_eq!(categorize(&[0, 0], &[5.0, 9.0], 1)[0].tag, Category::Individual);
        let two = categorize(&[0, 1], &[50.0, 9.0], 2);
        assert_eq!((two[0].tag, two[1].tag), (Category::Individual, Category::Noise));
    }

    #[test]
    fn category_ties_go_to_lower_id() {
        let cats = categorize(&[0, 1, 2], &[5.0, 5.0, 5.0], 3);
        assert_eq!(cats[0].tag, Category::Noise);
        assert_eq!(cats[1].tag, Category::Individual);
        assert_eq!(cats[2].tag, Category::Touching);
    }

    #[test]
    fn synthetic_blob_scene_triage() {
        // specks, discs and fused disc pairs on a flat background
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (w, h) = (360, 300);
        let mut img = crate::raster::GrayImage::filled(w, h, 0.85);
        let mut truth = Vec::new();
        let mut shapes = Vec::new();
        for gy in 0..5 {
            for gx in 0..6 {
                let (cx, cy) = (30.0 + 60.0 * gx as f64, 30.0 + 60.0 * gy as f64);
                let kind = (gx + gy * 6) % 3;
                match kind {
                    0 => shapes.push(crate::synth::Ellipse::disc(cx, cy, rng.random_range(1.5..2.5))),
                    1 => shapes.push(crate::synth::Ellipse::disc(cx, cy, rng.random_range(13.0..16.0))),
                    _ => {
                        let r = rng.random_range(11.0..13.0);
                        shapes.push(crate::synth::Ellipse::disc(cx - r + 1.0, cy, r));
                        shapes.push(crate::synth::Ellipse::disc(cx + r - 1.0, cy, r));
                    }
                }
                truth.push(((cx, cy), [Category::Noise, Category::Individual, Category::Touching][kind]));
            }
        }
        for s in &shapes {
            crate::synth::paint(&mut img, s, crate::synth::smooth_shade(0.3));
        }
        crate::synth::add_noise(&mut img, 0.02, &mut rng);
        let cs = crate::imaging::multiscale_cs(&img, &[1.0, 2.0, 4.0], 1.0).unwrap();
        let contours: Vec<Contour> = crate::imaging::extract_contours(&cs, 0.9)
            .unwrap()
            .into_iter()
            .filter(|c| c.closed)
            .collect();
        let t = triage(&contours, DEFAULT_K_MAX, 0).unwrap();
        let mut correct = 0;
        for ((cx, cy), cat) in &truth {
            let hit = contours.iter().enumerate().find(|(_, c)| {
                let (x, y) = c.centroid();
                (x - cx).abs() < 12.0 && (y - cy).abs() < 12.0
            });
            if let Some((i, _)) = hit {
                if t.category_of(i) == *cat {
                    correct += 1;
                }
            }
        }
        assert!(correct as f64 >= 0.9 * truth.len() as f64, "{correct}/{} k={}", truth.len(), t.k);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn points() -> impl Strategy<Value = Vec<Vec<f64>>> {
            proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 2), 4..30)
        }

        proptest! {
            #[test]
            fn ratios_stay_in_range(
                a in 4.0f64..25.0,
                ratio in 0.3f64..1.0,
                angle in 0.0f64..3.2,
                cx in 30.0f64..31.0,
            ) {
                let b = (a * ratio).max(3.0);
                let (s, c) = angle.sin_cos();
                let m = Mask::from_fn(62, 62, |x, y| {
                    let (u, v) = (x as f64 - cx, y as f64 - 31.0);
                    let (p, q) = (c * u + s * v, -s * u + c * v);
                    (p / a).powi(2) + (q / b).powi(2) <= 1.0
                });
                let f = shape_features(&contour_of(&m)).unwrap();
                prop_assert!(f.area > 0.0 && f.perimeter > 0.0);
                prop_assert!(f.compactness <= 1.05, "compactness {}", f.compactness);
                prop_assert!(f.solidity <= 1.05 && f.solidity > 0.0);
                prop_assert!((0.0..1.0).contains(&f.eccentricity));
            }

            #[test]
            fn lloyd_wcss_never_increases(f in points(), seed in 0u64..1000) {
                let k = 1 + (seed as usize % 3).min(f.len() - 1);
                let r = kmeans(&f, k, seed).unwrap();
                for w in r.history.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-9);
                }
            }

            #[test]
            fn adding_worst_point_as_centroid_cannot_hurt(f in points(), seed in 0u64..1000) {
                let base = kmeans(&f, 2, seed).unwrap();
                let worst = f
                    .iter()
                    .zip(&base.assignments)
                    .map(|(p, &a)| sq_dist(p, &base.centroids[a]))
                    .enumerate()
                    .fold((0, -1.0), |b, (i, d)| if d > b.1 { (i, d) } else { b })
                    .0;
                let mut init = base.centroids.clone();
                init.push(f[worst].clone());
                let grown = lloyd(&f, init).unwrap();
                prop_assert!(grown.wcss <= base.wcss + 1e-9);
            }

            #[test]
            fn categories_ignore_cluster_relabelling(
                areas in proptest::collection::vec(1.0f64..1000.0, 6),
                perm in Just(vec![2usize, 0, 1]).prop_shuffle(),
            ) {
                let assignments: Vec<usize> = (0..6).map(|i| i % 3).collect();
                let relabelled: Vec<usize> = assignments.iter().map(|&a| perm[a]).collect();
                let a = categorize(&assignments, &areas, 3);
                let b = categorize(&relabelled, &areas, 3);
                for c in 0..3 {
                    prop_assert_eq!(a[c].tag, b[perm[c]].tag);
                }
            }
        }
    }
}
