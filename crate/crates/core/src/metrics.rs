//! SSIM, Pearson correlation and top-k accuracy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    /// Side of the square sliding window.
    pub window: usize,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range.
    pub range: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self { window: 8, k1: 0.01, k2: 0.03, range: 1.0 }
    }
}

impl SsimConfig {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.range) * (self.k1 * self.range)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.range) * (self.k2 * self.range)
    }
}

/// Mean SSIM over every `window x window` placement (stride 1), uniform
/// weights, population statistics.
pub fn ssim(a: &Grid<f64>, b: &Grid<f64>, cfg: &SsimConfig) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("ssim: {:?} vs {:?}", a.dims(), b.dims())));
    }
    let (h, w) = a.dims();
    let k = cfg.window;
    if k == 0 || k > h || k > w {
        return Err(Error::Shape(format!("ssim window {k} does not fit {h}x{w}")));
    }
    let (c1, c2) = (cfg.c1(), cfg.c2());
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::Config("SSIM constants must be positive".into()));
    }
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - k {
        for c0 in 0..=w - k {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in r0..r0 + k {
                for (&x, &y) in a.row(r)[c0..c0 + k].iter().zip(&b.row(r)[c0..c0 + k]) {
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let (ma, mb) = (sa / n, sb / n);
            let va = (saa / n - ma * ma).max(0.0);
            let vb = (sbb / n - mb * mb).max(0.0);
            let cov = sab / n - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Shape(format!("pearson needs equal lengths >= 2, got {} and {}", a.len(), b.len())));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok((sab / sqrt(saa * sbb)).clamp(-1.0, 1.0))
}

/// Fraction of samples whose label is among the first `k` predictions.
pub fn topk_accuracy(predictions: &[Vec<usize>], labels: &[usize], k: usize) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if let Some(p) = predictions.iter().find(|p| p.len() < k) {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds a prediction list of length {}", p.len())));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions.iter().zip(labels).filter(|(p, l)| p[..k].contains(l)).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Top-1/2/3 accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TopK {
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics; `None` when `v` is empty.
    pub fn of(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self { mean, std: sqrt(var) })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub samples: usize,
    pub overall: TopK,
    /// `(class, sample count, accuracies)`, ascending class.
    pub per_class: Vec<(usize, usize, TopK)>,
    pub ssim: Option<MeanStd>,
    pub pearson: Option<f64>,
}

fn topk_triplet(preds: &[Vec<usize>], labels: &[usize]) -> Result<TopK> {
    let at = |k: usize| -> Result<f64> {
        // lists shorter than k cannot contain more hits; treat them as full
        let kk = preds.iter().map(Vec::len).min().unwrap_or(k).min(k);
        topk_accuracy(preds, labels, kk.max(1))
    };
    Ok(TopK { top1: at(1)?, top2: at(2)?, top3: at(3)? })
}

impl EvalReport {
    /// Aggregate ranked predictions (and optional per-sample SSIM and
    /// Pearson scores) into a report.
    pub fn build(preds: &[Vec<usize>], labels: &[usize], ssim: &[f64], pearson: &[f64]) -> Result<Self> {
        let overall = topk_triplet(preds, labels)?;
        let mut classes: Vec<usize> = labels.to_vec();
        classes.sort_unstable();
        classes.dedup();
        let mut per_class = Vec::with_capacity(classes.len());
        for c in classes {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            let p: Vec<Vec<usize>> = idx.iter().map(|&i| preds[i].clone()).collect();
            let l = vec![c; idx.len()];
            per_class.push((c, idx.len(), topk_triplet(&p, &l)?));
        }
        Ok(Self {
            samples: labels.len(),
            overall,
            per_class,
            ssim: MeanStd::of(ssim),
            pearson: MeanStd::of(pearson).map(|m| m.mean),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_follow_k_and_range() {
        let c = SsimConfig::default();
        assert!((c.c1() - 1e-4).abs() < 1e-18);
        assert!((c.c2() - 9e-4).abs() < 1e-18);
    }

    #[test]
    fn window_larger_than_image_is_rejected() {
        let a = Grid::filled(4, 4, 0.0);
        assert!(ssim(&a, &a, &SsimConfig::default()).is_err());
    }

    #[test]
    fn mean_std_population() {
        let m = MeanStd::of(&[1.0, 3.0]).unwrap();
        assert_eq!((m.mean, m.std), (2.0, 1.0));
        assert!(MeanStd::of(&[]).is_none());
    }
}
