use imuwave_core::kinematics::GestureClass;
use imuwave_core::pipeline::{paired_sample, PipelineConfig};
use imuwave_core::Error;

#[test]
fn default_sample_has_the_documented_shapes() {
    let cfg = PipelineConfig::default();
    let s = paired_sample(GestureClass::Push, 11, &cfg).unwrap();
    assert_eq!(s.heatmap.map.dims(), (64, 64));
    assert_eq!(s.enhancement.enhanced.map.dims(), (64, 64));
    assert_eq!(s.enhancement.mask.dims(), (64, 64));
    assert_eq!(s.triplet.dims(), (17, 45));
    assert_eq!(s.imu.len(), cfg.imu_samples());
    assert_eq!(s.cube.as_slice().len(), 64 * 255 * 256);
    let (lo, hi) = s.heatmap.map.min_max();
    assert!(lo >= 0.0 && hi <= 1.0 && hi > lo);
    for a in &s.triplet.axes {
        assert!(a.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    // enhancement only ever removes energy, and removes it outside the mask
    for ((e, m), h) in s.enhancement.enhanced.map.as_slice().iter().zip(s.enhancement.mask.as_slice()).zip(s.heatmap.map.as_slice()) {
        assert!(*e <= *h + 1e-12);
        if !m {
            assert_eq!(*e, 0.0);
        }
    }
}

#[test]
fn same_seed_same_sample() {
    let cfg = PipelineConfig::default();
    let a = paired_sample(GestureClass::SwipeLeft, 3, &cfg).unwrap();
    let b = paired_sample(GestureClass::SwipeLeft, 3, &cfg).unwrap();
    assert_eq!(a.cube.as_slice(), b.cube.as_slice());
    assert_eq!(a.enhancement.enhanced, b.enhancement.enhanced);
    assert_eq!(a.triplet, b.triplet);
    let c = paired_sample(GestureClass::SwipeLeft, 4, &cfg).unwrap();
    assert_ne!(a.triplet, c.triplet);
}

#[test]
fn misaligned_duration_is_a_config_error() {
    let cfg = PipelineConfig { duration: 3.0, ..PipelineConfig::default() };
    assert!(matches!(paired_sample(GestureClass::Push, 0, &cfg), Err(Error::Config(_))));
    let cfg = PipelineConfig { duration: 1.9, ..PipelineConfig::default() };
    assert!(cfg.check_alignment().is_err());
}
