use imuwave_core::metrics::{pearson, ssim, topk_accuracy, EvalReport, SsimConfig};
use imuwave_core::{rng, Error, Grid};
use proptest::prelude::*;

fn random_map(seed: u64, h: usize, w: usize) -> Grid<f64> {
    let mut r = rng::rng(seed);
    Grid::from_fn(h, w, |_, _| rng::uniform(&mut r))
}

#[test]
fn ssim_of_identical_maps_is_one() {
    for seed in 0..5 {
        let x = random_map(seed, 20, 17);
        assert!((ssim(&x, &x, &SsimConfig::default()).unwrap() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn constant_maps_follow_the_luminance_term() {
    let a = Grid::filled(16, 16, 0.5);
    let b = Grid::filled(16, 16, 0.25);
    let want = (2.0 * 0.5 * 0.25 + 1e-4) / (0.25f64.powi(2) + 0.5f64.powi(2) + 1e-4);
    let got = ssim(&a, &b, &SsimConfig::default()).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    assert!((got - 0.8001).abs() < 5e-5);
}

#[test]
fn single_window_matches_hand_formula() {
    // 8x8 image, one window: compute the product directly
    let a = random_map(1, 8, 8);
    let b = random_map(2, 8, 8);
    let n = 64.0;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let va = a.as_slice().iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb = b.as_slice().iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let cov = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let (c1, c2) = (1e-4, 9e-4);
    let want = (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    assert!((ssim(&a, &b, &SsimConfig::default()).unwrap() - want).abs() < 1e-12);
}

#[test]
fn ssim_is_symmetric() {
    for i in 0..50 {
        let a = random_map(2 * i, 12, 12);
        let b = random_map(2 * i + 1, 12, 12);
        let cfg = SsimConfig::default();
        assert!((ssim(&a, &b, &cfg).unwrap() - ssim(&b, &a, &cfg).unwrap()).abs() < 1e-14);
    }
}

#[test]
fn ssim_rejects_mismatched_dims() {
    let a = Grid::filled(8, 8, 0.0);
    let b = Grid::filled(8, 9, 0.0);
    assert!(matches!(ssim(&a, &b, &SsimConfig::default()), Err(Error::Shape(_))));
}

#[test]
fn pearson_examples() {
    let x = [0.3, -1.0, 2.5, 4.0];
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
    assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
    // sums of centered products by hand: 27/6 over sqrt(2 * 366/36)
    let want = 27.0 / 732f64.sqrt();
    assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]).unwrap() - want).abs() < 1e-14);
}

#[test]
fn pearson_errors() {
    assert!(matches!(pearson(&[1.0, 1.0], &[0.0, 2.0]), Err(Error::UndefinedCorrelation(_))));
    assert!(pearson(&[1.0], &[1.0]).is_err());
    assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn topk_examples() {
    // label ranks 1, 2 and 4
    let preds = vec![vec![0, 1, 2, 3], vec![1, 0, 2, 3], vec![1, 2, 3, 0]];
    let labels = [0, 0, 0];
    assert!((topk_accuracy(&preds, &labels, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!((topk_accuracy(&preds, &labels, 2).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((topk_accuracy(&preds, &labels, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(topk_accuracy(&preds, &labels, 4).unwrap(), 1.0);
    assert_eq!(topk_accuracy(&preds, &[5, 5, 5], 4).unwrap(), 0.0);
    assert!(matches!(topk_accuracy(&preds, &labels, 5), Err(Error::InvalidArgument(_))));
    assert!(topk_accuracy(&preds, &labels, 0).is_err());
}

#[test]
fn report_aggregates_per_class() {
    let preds = vec![vec![0, 1, 2], vec![1, 0, 2], vec![2, 1, 0], vec![0, 1, 2]];
    let labels = [0, 0, 1, 2];
    let r = EvalReport::build(&preds, &labels, &[0.5, 0.7], &[0.2, 0.4]).unwrap();
    assert_eq!(r.samples, 4);
    assert_eq!(r.overall.top1, 0.25);
    assert_eq!(r.overall.top2, 0.75);
    assert_eq!(r.overall.top3, 1.0);
    assert_eq!(r.per_class.len(), 3);
    assert_eq!(r.per_class[0].1, 2);
    assert_eq!(r.per_class[0].2.top1, 0.5);
    let s = r.ssim.unwrap();
    assert!((s.mean - 0.6).abs() < 1e-12 && (s.std - 0.1).abs() < 1e-12);
    assert!((r.pearson.unwrap() - 0.3).abs() < 1e-15);
}

proptest! {
    #[test]
    fn topk_is_monotone_and_order_free(
        rows in proptest::collection::vec((proptest::sample::subsequence(vec![0usize, 1, 2, 3, 4], 5), 0usize..5), 1..40),
        rot in 0usize..40,
    ) {
        let mut preds: Vec<Vec<usize>> = Vec::new();
        let mut labels = Vec::new();
        for (p, l) in &rows {
            preds.push(p.clone());
            labels.push(*l);
        }
        let mut prev = 0.0;
        for k in 1..=5 {
            let a = topk_accuracy(&preds, &labels, k).unwrap();
            prop_assert!(a >= prev && (0.0..=1.0).contains(&a));
            prev = a;
        }
        let r = rot % preds.len();
        preds.rotate_left(r);
        labels.rotate_left(r);
        let b = topk_accuracy(&preds, &labels, 2).unwrap();
        preds.rotate_right(r);
        labels.rotate_right(r);
        prop_assert_eq!(b, topk_accuracy(&preds, &labels, 2).unwrap());
    }

    #[test]
    fn pearson_is_affine_invariant(v in proptest::collection::vec(-10.0f64..10.0, 3..30), s in 0.1f64..10.0, o in -5.0f64..5.0) {
        let w: Vec<f64> = v.iter().enumerate().map(|(i, x)| x * x + i as f64).collect();
        if let Ok(p) = pearson(&v, &w) {
            let v2: Vec<f64> = v.iter().map(|x| s * x + o).collect();
            prop_assert!((pearson(&v2, &w).unwrap() - p).abs() < 1e-9);
        }
    }

    #[test]
    fn ssim_is_at_most_one(seed in 0u64..1000) {
        let a = random_map(seed, 10, 10);
        let b = random_map(seed + 1000, 10, 10);
        let s = ssim(&a, &b, &SsimConfig::default()).unwrap();
        prop_assert!(s < 1.0 && s >= -1.0);
    }
}
