//! Heatmap enhancement: Gaussian blur, two-way k-means, centroid
//! reassignment, mean-threshold binarization and morphological closing,
//! followed by gating the original map with the closed mask.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::math;
use crate::radar_dsp::TimeVelocityHeatmap;
use crate::rng;

pub type BinaryHeatmap = Grid<bool>;

/// Binary structuring element with its origin at the center cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuringElement {
    cells: Grid<bool>,
}

impl StructuringElement {
    pub fn new(cells: Grid<bool>) -> Result<Self> {
        let (r, c) = cells.dims();
        if r == 0 || c == 0 || r % 2 == 0 || c % 2 == 0 {
            return Err(Error::Config(format!("structuring element must have odd dims, got {r}x{c}")));
        }
        if !cells.get(r / 2, c / 2) {
            return Err(Error::Config("structuring element center must be set".into()));
        }
        Ok(Self { cells })
    }

    pub fn square(size: usize) -> Result<Self> {
        Self::new(Grid::filled(size, size, true))
    }

    /// Offsets `(dy, dx)` of the set cells relative to the center.
    pub fn offsets(&self) -> Vec<(isize, isize)> {
        let (r, c) = self.cells.dims();
        let mut v = Vec::new();
        for y in 0..r {
            for x in 0..c {
                if self.cells.get(y, x) {
                    v.push((y as isize - (r / 2) as isize, x as isize - (c / 2) as isize));
                }
            }
        }
        v
    }

    /// Largest reach of the element along rows and columns.
    pub fn radius(&self) -> (usize, usize) {
        (self.cells.rows() / 2, self.cells.cols() / 2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementConfig {
    pub blur_sigma: f64,
    pub blur_kernel: usize,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
    pub structuring_element: StructuringElement,
}

impl Default for EnhancementConfig {
    fn default() -> Self {
        Self {
            blur_sigma: 1.0,
            blur_kernel: 5,
            kmeans_seed: 0,
            kmeans_max_iter: 100,
            structuring_element: StructuringElement::square(3).expect("3x3 square is valid"),
        }
    }
}

impl EnhancementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blur_kernel < 3 || self.blur_kernel % 2 == 0 {
            return Err(Error::Config(format!("blur kernel must be odd and >= 3, got {}", self.blur_kernel)));
        }
        if !(self.blur_sigma > 0.0) {
            return Err(Error::Config("blur sigma must be positive".into()));
        }
        if self.kmeans_max_iter == 0 {
            return Err(Error::Config("k-means needs at least one iteration".into()));
        }
        Ok(())
    }
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let h = (size / 2) as f64;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - h;
            math::exp(-x * x / (2.0 * sigma * sigma))
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(map: &Grid<f64>, sigma: f64, size: usize) -> Grid<f64> {
    let k = gaussian_kernel(size, sigma);
    let h = (size / 2) as isize;
    let (rows, cols) = map.dims();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let horiz = Grid::from_fn(rows, cols, |r, c| {
        k.iter()
            .enumerate()
            .map(|(i, w)| w * map.get(r, clamp(c as isize + i as isize - h, cols)))
            .sum::<f64>()
    });
    Grid::from_fn(rows, cols, |r, c| {
        k.iter()
            .enumerate()
            .map(|(i, w)| w * horiz.get(clamp(r as isize + i as isize - h, rows), c))
            .sum::<f64>()
    })
}

/// Outcome of two-way k-means.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans2 {
    /// 1 = cluster with the higher mean intensity.
    pub labels: Vec<u8>,
    pub centroids: [Vec<f64>; 2],
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss_history: Vec<f64>,
}

impl KMeans2 {
    pub fn wcss(&self) -> f64 {
        self.wcss_history.last().copied().unwrap_or(0.0)
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Two-way k-means on `n` points of dimension `dim` stored row-major.
///
/// Scalar data starts from the best split of the sorted values (the global
/// optimum in one dimension); higher dimensions start from the points with the
/// smallest and largest coordinate sum. `seed` only matters when a cluster
/// empties and has to be reseeded.
pub fn kmeans2(points: &[f64], dim: usize, seed: u64, max_iter: usize) -> Result<KMeans2> {
    check_points(points, dim)?;
    let init = if dim == 1 { best_sorted_split(points) } else { extreme_pair(points, dim) };
    lloyd(points, dim, init, seed, max_iter)
}

/// Lloyd iterations from explicit initial centroids.
pub fn kmeans2_from(points: &[f64], dim: usize, init: [Vec<f64>; 2], seed: u64, max_iter: usize) -> Result<KMeans2> {
    check_points(points, dim)?;
    if init[0].len() != dim || init[1].len() != dim {
        return Err(Error::Shape("initial centroid dimension mismatch".into()));
    }
    lloyd(points, dim, init, seed, max_iter)
}

fn check_points(points: &[f64], dim: usize) -> Result<()> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::Shape(format!("{} values do not form points of dimension {dim}", points.len())));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("k-means input".into()));
    }
    let first = points.get(..dim).unwrap_or(&[]);
    if points.len() < 2 * dim || points.chunks(dim).all(|p| p == first) {
        return Err(Error::Degenerate("k-means needs at least two distinct points".into()));
    }
    Ok(())
}

fn best_sorted_split(points: &[f64]) -> [Vec<f64>; 2] {
    let mut v = points.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let total: f64 = v.iter().sum();
    let total_sq: f64 = v.iter().map(|x| x * x).sum();
    let (mut s, mut sq) = (0.0, 0.0);
    let mut best = (f64::INFINITY, 1);
    for k in 1..n {
        s += v[k - 1];
        sq += v[k - 1] * v[k - 1];
        if v[k] == v[k - 1] {
            continue;
        }
        let (l, r) = (k as f64, (n - k) as f64);
        let w = (sq - s * s / l) + ((total_sq - sq) - (total - s) * (total - s) / r);
        if w < best.0 {
            best = (w, k);
        }
    }
    let k = best.1;
    let lo = v[..k].iter().sum::<f64>() / k as f64;
    let hi = v[k..].iter().sum::<f64>() / (n - k) as f64;
    [vec![lo], vec![hi]]
}

fn extreme_pair(points: &[f64], dim: usize) -> [Vec<f64>; 2] {
    let key = |p: &[f64]| p.iter().sum::<f64>();
    let mut lo = &points[..dim];
    let mut hi = lo;
    for p in points.chunks(dim) {
        if key(p) < key(lo) {
            lo = p;
        }
        if key(p) > key(hi) {
            hi = p;
        }
    }
    if lo == hi {
        // equal sums but distinct points exist
        hi = points.chunks(dim).find(|p| *p != lo).expect("checked distinct");
    }
    [lo.to_vec(), hi.to_vec()]
}

fn lloyd(points: &[f64], dim: usize, init: [Vec<f64>; 2], seed: u64, max_iter: usize) -> Result<KMeans2> {
    let n = points.len() / dim;
    let mut centroids = init;
    let mut labels = vec![u8::MAX; n];
    let mut history = Vec::new();
    let mut r = rng::rng(seed);
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        let mut wcss = 0.0;
        for (i, p) in points.chunks(dim).enumerate() {
            let d0 = dist2(p, &centroids[0]);
            let d1 = dist2(p, &centroids[1]);
            let l = u8::from(d1 < d0);
            wcss += d0.min(d1);
            if labels[i] != l {
                labels[i] = l;
                changed = true;
            }
        }
        history.push(wcss);
        let mut sums = [vec![0.0; dim], vec![0.0; dim]];
        let mut counts = [0usize; 2];
        for (p, &l) in points.chunks(dim).zip(&labels) {
            counts[l as usize] += 1;
            for (s, v) in sums[l as usize].iter_mut().zip(p) {
                *s += v;
            }
        }
        for k in 0..2 {
            if counts[k] == 0 {
                let pick = rng::uniform_int(&mut r, 0, n - 1);
                centroids[k] = points[pick * dim..(pick + 1) * dim].to_vec();
                changed = true;
            } else {
                centroids[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    // final assignment against the converged centroids
    let mut wcss = 0.0;
    for (i, p) in points.chunks(dim).enumerate() {
        let d0 = dist2(p, &centroids[0]);
        let d1 = dist2(p, &centroids[1]);
        labels[i] = u8::from(d1 < d0);
        wcss += d0.min(d1);
    }
    if history.last() != Some(&wcss) {
        history.push(wcss);
    }
    let mean = |c: &Vec<f64>| c.iter().sum::<f64>() / dim as f64;
    if mean(&centroids[0]) > mean(&centroids[1]) {
        centroids.swap(0, 1);
        for l in &mut labels {
            *l = 1 - *l;
        }
    }
    Ok(KMeans2 { labels, centroids, iterations, wcss_history: history })
}

/// Dilation on the zero-extended plane, cropped back to the input size.
pub fn dilate(map: &BinaryHeatmap, se: &StructuringElement) -> BinaryHeatmap {
    let offs = se.offsets();
    let (rows, cols) = map.dims();
    Grid::from_fn(rows, cols, |r, c| {
        offs.iter().any(|&(dy, dx)| at(map, r as isize - dy, c as isize - dx))
    })
}

/// Erosion with out-of-bounds pixels read as zero.
pub fn erode(map: &BinaryHeatmap, se: &StructuringElement) -> BinaryHeatmap {
    let offs = se.offsets();
    let (rows, cols) = map.dims();
    Grid::from_fn(rows, cols, |r, c| {
        offs.iter().all(|&(dy, dx)| at(map, r as isize + dy, c as isize + dx))
    })
}

fn at(map: &BinaryHeatmap, r: isize, c: isize) -> bool {
    r >= 0 && c >= 0 && (r as usize) < map.rows() && (c as usize) < map.cols() && map.get(r as usize, c as usize)
}

/// Closing (dilation then erosion) evaluated on a canvas padded by the element
/// radius, so pixels near the border see the dilated zero background rather
/// than a hard edge. The result is extensive and idempotent.
pub fn morph_close(map: &BinaryHeatmap, se: &StructuringElement) -> BinaryHeatmap {
    let (pr, pc) = se.radius();
    let (rows, cols) = map.dims();
    let padded = Grid::from_fn(rows + 2 * pr, cols + 2 * pc, |r, c| {
        r >= pr && c >= pc && r < rows + pr && c < cols + pc && map.get(r - pr, c - pc)
    });
    let closed = erode(&dilate(&padded, se), se);
    Grid::from_fn(rows, cols, |r, c| closed.get(r + pr, c + pc))
}

/// Intermediate products of [`enhance`], kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct Enhancement {
    pub enhanced: TimeVelocityHeatmap,
    pub mask: BinaryHeatmap,
    pub blurred: Grid<f64>,
    pub reassigned: Grid<f64>,
    pub binarized: BinaryHeatmap,
}

pub fn enhance(heatmap: &TimeVelocityHeatmap, cfg: &EnhancementConfig) -> Result<Enhancement> {
    cfg.validate()?;
    let map = &heatmap.map;
    let (rows, cols) = map.dims();
    if map.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("heatmap".into()));
    }
    let (lo, hi) = map.min_max();
    if rows == 0 || cols == 0 || lo == hi {
        let empty = Grid::filled(rows, cols, false);
        return Ok(Enhancement {
            enhanced: heatmap.clone(),
            mask: empty.clone(),
            blurred: map.clone(),
            reassigned: map.clone(),
            binarized: empty,
        });
    }
    let blurred = gaussian_blur(map, cfg.blur_sigma, cfg.blur_kernel);
    let km = kmeans2(blurred.as_slice(), 1, cfg.kmeans_seed, cfg.kmeans_max_iter)?;
    let values: Vec<f64> = km.labels.iter().map(|&l| km.centroids[l as usize][0]).collect();
    let reassigned = Grid::from_vec(rows, cols, values)?;
    let threshold = reassigned.mean();
    let binarized = reassigned.map(|&v| v > threshold);
    let mask = morph_close(&binarized, &cfg.structuring_element);
    let gated = Grid::from_fn(rows, cols, |r, c| if mask.get(r, c) { map.get(r, c) } else { 0.0 });
    Ok(Enhancement {
        enhanced: TimeVelocityHeatmap { map: gated, norm: heatmap.norm },
        mask,
        blurred,
        reassigned,
        binarized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn se3() -> StructuringElement {
        StructuringElement::square(3).unwrap()
    }

    fn brute_close(map: &BinaryHeatmap, se: &StructuringElement) -> BinaryHeatmap {
        // set definitions on the infinite plane: p in close(X) iff every
        // translate of B covering p hits X
        let offs = se.offsets();
        Grid::from_fn(map.rows(), map.cols(), |r, c| {
            offs.iter().all(|&(ay, ax)| {
                let (qy, qx) = (r as isize + ay, c as isize + ax);
                offs.iter().any(|&(by, bx)| at(map, qy - by, qx - bx))
            })
        })
    }

    #[test]
    fn scalar_example_partition() {
        let km = kmeans2(&[0.0, 0.0, 0.0, 10.0, 10.0], 1, 0, 100).unwrap();
        assert_eq!(km.labels, alloc::vec![0, 0, 0, 1, 1]);
        assert_eq!(km.centroids, [alloc::vec![0.0], alloc::vec![10.0]]);
    }

    #[test]
    fn identical_values_are_degenerate() {
        assert!(matches!(kmeans2(&[2.0; 6], 1, 0, 10), Err(Error::Degenerate(_))));
    }

    #[test]
    fn swapped_init_same_partition() {
        let pts = [0.1, 0.3, 0.2, 5.0, 5.5, 4.9, 0.0];
        let a = kmeans2_from(&pts, 1, [alloc::vec![0.0], alloc::vec![5.5]], 0, 100).unwrap();
        let b = kmeans2_from(&pts, 1, [alloc::vec![5.5], alloc::vec![0.0]], 0, 100).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn blobs_match_midpoint_threshold() {
        let mut r = rng::rng(11);
        let mut pts = Vec::new();
        for i in 0..200 {
            let mu = if i % 2 == 0 { [0.0, 0.0] } else { [12.0, -3.0] };
            pts.push(mu[0] + rng::gaussian(&mut r));
            pts.push(mu[1] + rng::gaussian(&mut r));
        }
        let km = kmeans2(&pts, 2, 1, 100).unwrap();
        // the separation axis is (12, -3); project and split at the midpoint
        for (p, &l) in pts.chunks(2).zip(&km.labels) {
            let proj = (p[0] * 12.0 - p[1] * 3.0) / 153.0;
            assert_eq!(l, u8::from(proj > 0.5));
        }
    }

    #[test]
    fn gap_is_filled() {
        let mut m = Grid::filled(8, 8, false);
        for c in 1..7 {
            if c != 4 {
                m.set(3, c, true);
            }
        }
        let closed = morph_close(&m, &se3());
        assert_eq!(closed, brute_close(&m, &se3()));
        assert!(closed.get(3, 4));
    }

    #[test]
    fn closing_of_empty_map_is_empty() {
        let m = Grid::filled(6, 5, false);
        assert_eq!(morph_close(&m, &se3()), m);
    }

    #[test]
    fn exhaustive_4x4_closing() {
        for bits in 0u32..1 << 16 {
            let m = Grid::from_fn(4, 4, |r, c| bits >> (r * 4 + c) & 1 == 1);
            let closed = morph_close(&m, &se3());
            assert_eq!(closed, brute_close(&m, &se3()), "bits {bits:#x}");
        }
    }

    fn ridge_fixture(salt: f64, seed: u64) -> (TimeVelocityHeatmap, Grid<bool>) {
        let (rows, cols) = (64, 64);
        let support = Grid::from_fn(rows, cols, |r, c| {
            let centre = 32.0 + 14.0 * math::sin(r as f64 / 10.0);
            (c as f64 - centre).abs() <= 2.0
        });
        let mut r = rng::rng(seed);
        let map = Grid::from_fn(rows, cols, |y, x| {
            if support.get(y, x) {
                0.8 + 0.2 * rng::uniform(&mut r)
            } else if rng::uniform(&mut r) < salt {
                rng::uniform(&mut r)
            } else {
                0.0
            }
        });
        (TimeVelocityHeatmap { map, norm: (0.0, 1.0) }, support)
    }

    fn split_energy(map: &Grid<f64>, support: &Grid<bool>) -> (f64, f64) {
        let mut on = 0.0;
        let mut off = 0.0;
        for (v, &s) in map.as_slice().iter().zip(support.as_slice()) {
            if s {
                on += v * v;
            } else {
                off += v * v;
            }
        }
        (on, off)
    }

    #[test]
    fn salt_noise_is_suppressed() {
        let (h, support) = ridge_fixture(0.05, 4);
        let e = enhance(&h, &EnhancementConfig::default()).unwrap();
        let (on_in, off_in) = split_energy(&h.map, &support);
        let (on_out, off_out) = split_energy(&e.enhanced.map, &support);
        assert!(off_out <= 0.1 * off_in, "off-ridge {off_out} vs {off_in}");
        assert!(on_out >= 0.9 * on_in, "ridge {on_out} vs {on_in}");
    }

    #[test]
    fn clean_binary_ridge_is_a_fixed_point() {
        // constant-velocity ridge
        let support = Grid::from_fn(64, 64, |_, c| (30..35).contains(&c));
        let map = support.map(|&s| if s { 1.0 } else { 0.0 });
        let h = TimeVelocityHeatmap { map: map.clone(), norm: (0.0, 1.0) };
        let e = enhance(&h, &EnhancementConfig::default()).unwrap();
        assert_eq!(e.mask, support);
        assert_eq!(e.enhanced.map, map);
    }

    #[test]
    fn constant_heatmap_is_a_no_op() {
        let h = TimeVelocityHeatmap { map: Grid::filled(8, 8, 0.3), norm: (0.0, 1.0) };
        let e = enhance(&h, &EnhancementConfig::default()).unwrap();
        assert_eq!(e.enhanced, h);
        assert!(e.mask.as_slice().iter().all(|&b| !b));
    }

    #[test]
    fn enhance_is_deterministic() {
        let (h, _) = ridge_fixture(0.05, 9);
        let cfg = EnhancementConfig::default();
        assert_eq!(enhance(&h, &cfg).unwrap(), enhance(&h, &cfg).unwrap());
    }

    #[test]
    fn bad_config_is_rejected() {
        let cfg = EnhancementConfig { blur_kernel: 4, ..EnhancementConfig::default() };
        assert!(cfg.validate().is_err());
        assert!(StructuringElement::new(Grid::from_fn(3, 3, |r, c| !(r == 1 && c == 1))).is_err());
    }

    proptest! {
        #[test]
        fn closing_is_extensive_and_idempotent(bits in proptest::collection::vec(any::<bool>(), 256)) {
            let m = Grid::from_vec(16, 16, bits).unwrap();
            let c = morph_close(&m, &se3());
            for (a, b) in m.as_slice().iter().zip(c.as_slice()) {
                prop_assert!(!*a || *b);
            }
            prop_assert_eq!(morph_close(&c, &se3()), c);
        }

        #[test]
        fn kmeans_objective_never_increases(vals in proptest::collection::vec(-50.0f64..50.0, 2..40)) {
            prop_assume!(vals.iter().any(|&v| v != vals[0]));
            let km = kmeans2(&vals, 1, 3, 100).unwrap();
            for w in km.wcss_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9);
            }
            for (v, &l) in vals.iter().zip(&km.labels) {
                let own = (v - km.centroids[l as usize][0]).abs();
                let other = (v - km.centroids[1 - l as usize][0]).abs();
                prop_assert!(own <= other);
            }
        }

        #[test]
        fn enhance_never_raises_pixels(vals in proptest::collection::vec(0.0f64..1.0, 144)) {
            let h = TimeVelocityHeatmap { map: Grid::from_vec(12, 12, vals).unwrap(), norm: (0.0, 1.0) };
            let e = enhance(&h, &EnhancementConfig::default()).unwrap();
            for (a, b) in h.map.as_slice().iter().zip(e.enhanced.map.as_slice()) {
                prop_assert!(b <= a);
            }
        }
    }
}
