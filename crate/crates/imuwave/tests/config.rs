use imuwave::config::Settings;
use imuwave::error::Error;
use imuwave::import::parse_imu_csv;
use imuwave::pgm::encode_pgm;
use imuwave_core::Grid;
use proptest::prelude::*;

#[test]
fn unknown_key_reports_its_line() {
    let text = "# comment\n[radar]\nchirps = 128\n\nbogus = 3\n";
    match Settings::parse(text) {
        Err(Error::Config { line, msg }) => {
            assert_eq!(line, 5);
            assert!(msg.contains("radar.bogus"), "{msg}");
        }
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn malformed_lines_are_config_errors() {
    for text in ["[radar\nchirps = 1", "[nosuch]\n", "chirps = 3", "[radar]\nchirps 3", "[radar]\nchirps = -1", "[radar]\nwindow = maybe"] {
        assert!(matches!(Settings::parse(text), Err(Error::Config { .. })), "{text:?}");
    }
}

#[test]
fn digest_tracks_effective_settings_only() {
    let base = Settings::default();
    let same = Settings::parse("[radar]\nchirps = 255   # the default\n[diffusion]\nlr = 1e-3\n").unwrap();
    assert_eq!(base.digest(), same.digest());
    let mut changed = base.clone();
    changed.set_override("diffusion.eta=0.5").unwrap();
    assert_ne!(base.digest(), changed.digest());
    changed.set_override("diffusion.eta=0").unwrap();
    assert_eq!(base.digest(), changed.digest());
    assert_eq!(base.digest().len(), 64);
}

#[test]
fn overrides_are_validated() {
    let mut s = Settings::default();
    assert!(matches!(s.set_override("diffusion.eta"), Err(Error::Usage(_))));
    assert!(matches!(s.set_override("nope.key=1"), Err(Error::Usage(_))));
    assert!(matches!(s.set_override("dataset.classes=push,wave"), Err(Error::Usage(_))));
    s.set_override("diffusion.stride=7").unwrap();
    assert!(s.resolve().is_err());
    let mut s = Settings::default();
    s.set_override("radar.frames=80").unwrap();
    assert!(s.resolve().is_err(), "radar span no longer matches the gesture");
}

#[test]
fn resolved_values_reach_the_pipeline() {
    let s = Settings::parse("[radar]\nsnr_db = none\n[dataset]\nper_class = 4\nclasses = push,swipe_left\n[diffusion]\nsteps = 50\nstride = 5\n").unwrap();
    let r = s.resolve().unwrap();
    assert_eq!(r.pipeline.noise_snr_db, None);
    assert_eq!(r.per_class, 4);
    assert_eq!(r.classes.len(), 2);
    assert_eq!(r.classifier.classes, 2);
    assert_eq!(r.i2r.steps, 50);
    assert_eq!(r.sampling.stride, 5);
}

#[test]
fn imu_csv_import() {
    let mut text = String::from("t,ax,ay,az\n");
    for i in 0..100 {
        text.push_str(&format!("{},{},{},{}\n", i as f64 * 0.01, i, -i, 0.5));
    }
    let imu = parse_imu_csv(text.as_bytes()).unwrap();
    assert_eq!(imu.len(), 100);
    assert!((imu.sample_rate() - 100.0).abs() < 1e-6);
    assert_eq!(imu.axis(1)[3], -3.0);
    assert!(parse_imu_csv("t,x,y,z\n0,1,2,3\n".as_bytes()).is_err());
    assert!(parse_imu_csv("t,ax,ay,az\n0,1,2,3\n0.01,1,2\n".as_bytes()).is_err());
    assert!(parse_imu_csv("t,ax,ay,az\n0,1,1,1\n0.01,1,1,1\n0.05,1,1,1\n".as_bytes()).is_err());
}

#[test]
fn pgm_header_and_scaling() {
    let g = Grid::from_vec(2, 3, vec![0.0, 0.5, 1.0, 2.0, 1.0, 0.0]).unwrap();
    let bytes = encode_pgm(&g);
    let header = b"P5\n3 2\n255\n";
    assert_eq!(&bytes[..header.len()], header);
    assert_eq!(&bytes[header.len()..], &[0, 64, 128, 255, 128, 0]);
    let flat = encode_pgm(&Grid::filled(2, 2, 0.7));
    assert!(flat[flat.len() - 4..].iter().all(|&b| b == 0));
}

proptest! {
    #[test]
    fn override_spelling_does_not_change_the_digest(v in 0.0f64..10.0) {
        let mut a = Settings::default();
        let mut b = Settings::default();
        a.set_override(&format!("diffusion.eta={v}")).unwrap();
        b.set_override(&format!("diffusion.eta = {v:e} ")).unwrap();
        prop_assert_eq!(a.digest(), b.digest());
    }
}
