use imuwave_core::nn::{Graph, Tensor};
use imuwave_core::transformer::{patch_matrix, rank_classes, DopplerClassifier, DopplerNet, PatchEmbedConfig, TransformerConfig};
use imuwave_core::{rng, Grid};
use proptest::prelude::*;

fn tiny() -> TransformerConfig {
    TransformerConfig {
        heatmap: (16, 16),
        embed: PatchEmbedConfig::diagonal(4, 8),
        layers: 1,
        chunk: 4,
        classes: 3,
        ff_dim: 16,
        batch: 5,
        lr: 3e-3,
        ..TransformerConfig::default()
    }
}

/// Ridge at a class-dependent velocity column plus noise.
fn toy_set(n: usize, seed: u64) -> Vec<(Grid<f64>, usize)> {
    let mut r = rng::rng(seed);
    (0..n)
        .map(|i| {
            let label = i % 3;
            let col = 3 + 5 * label;
            let map = Grid::from_fn(16, 16, |_, c| {
                let base = if c.abs_diff(col) <= 1 { 0.8 } else { 0.0 };
                base + 0.1 * rng::uniform(&mut r)
            });
            (map, label)
        })
        .collect()
}

#[test]
fn token_count_and_width_follow_the_patch_arithmetic() {
    let cfg = TransformerConfig::default();
    let map = Grid::filled(64, 64, 0.3);
    let (p, time) = patch_matrix::<f64>(&map, &cfg.embed).unwrap();
    assert_eq!(p.shape(), &[64, 5 * 8 * 8]);
    assert_eq!(cfg.tokens(), 64);
    assert_eq!(time.len(), 64);
    let clf = DopplerClassifier::new(cfg, 0).unwrap();
    assert_eq!(clf.embed(&map).unwrap().tokens.dims(), (64, 64));
}

#[test]
fn empty_shift_set_is_plain_patching() {
    let mut r = rng::rng(1);
    let map = Grid::from_fn(8, 12, |_, _| rng::uniform(&mut r));
    let cfg = PatchEmbedConfig { patch: 4, dim: 3, shifts: vec![], include_original: true };
    let (p, _) = patch_matrix::<f64>(&map, &cfg).unwrap();
    let mut want = Vec::new();
    for pr in 0..2 {
        for pc in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    want.push(map.get(4 * pr + y, 4 * pc + x));
                }
            }
        }
    }
    assert_eq!(p.data(), &want[..]);
}

#[test]
fn zero_map_tokens_equal_positional_code() {
    let cfg = tiny();
    let (net, store) = DopplerNet::init(cfg.clone(), 2).unwrap();
    let (patches, _) = patch_matrix::<f64>(&Grid::filled(16, 16, 0.0), &cfg.embed).unwrap();
    let mut g = Graph::new();
    let t = net.embed(&mut g, &store, &patches).unwrap();
    let pos = store.iter().find(|(n, _)| *n == "embed.pos").unwrap().1;
    assert_eq!(g.value(t).data(), pos.data());
}

#[test]
fn chunk_attention_stays_inside_its_chunk() {
    let cfg = tiny();
    let (net, store) = DopplerNet::init(cfg.clone(), 3).unwrap();
    let n = cfg.tokens();
    let d = cfg.embed.dim;
    let mut r = rng::rng(4);
    let base: Vec<f64> = (0..n * d).map(|_| rng::gaussian(&mut r)).collect();
    let run = |tokens: &[f64]| {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(&[n, d], tokens.to_vec()).unwrap()).unwrap();
        let (_, attn) = net.head_forward(&mut g, &store, x).unwrap();
        g.value(attn[0]).data().to_vec()
    };
    let a = run(&base);
    let mut changed = base.clone();
    // perturb the second chunk only
    for v in &mut changed[cfg.chunk * d..2 * cfg.chunk * d] {
        *v += 1.0;
    }
    let b = run(&changed);
    let chunk_rows = cfg.chunk * d;
    assert_eq!(a[..chunk_rows], b[..chunk_rows]);
    assert_ne!(a[chunk_rows..2 * chunk_rows], b[chunk_rows..2 * chunk_rows]);
    assert_eq!(a[2 * chunk_rows..], b[2 * chunk_rows..]);
}

#[test]
fn single_chunk_gives_finite_logits() {
    let cfg = TransformerConfig { chunk: 64, ..tiny() };
    let clf = DopplerClassifier::new(cfg, 0).unwrap();
    let l = clf.logits(&toy_set(1, 0)[0].0).unwrap();
    assert_eq!(l.len(), 3);
    assert!(l.iter().all(|v| v.is_finite()));
}

#[test]
fn separable_toy_set_is_memorized() {
    let data = toy_set(30, 5);
    let mut clf = DopplerClassifier::new(tiny(), 1).unwrap();
    let hist = clf.train(&data, 60, 2, |_| {}).unwrap();
    assert!(hist.last().unwrap().loss < hist[0].loss);
    let correct = data.iter().filter(|(m, l)| clf.predict_topk(m, 1).unwrap()[0] == *l).count();
    assert_eq!(correct, 30);
}

#[test]
fn same_seed_same_checkpoint() {
    let data = toy_set(9, 0);
    let run = || {
        let mut c = DopplerClassifier::new(tiny(), 6).unwrap();
        let h = c.train(&data, 3, 7, |_| {}).unwrap();
        (h, c.named_tensors())
    };
    assert_eq!(run(), run());
}

#[test]
fn permuted_labels_give_the_same_loss_trajectory() {
    let data = toy_set(12, 3);
    let perm = [2usize, 0, 1];
    let permuted: Vec<(Grid<f64>, usize)> = data.iter().map(|(m, l)| (m.clone(), perm[*l])).collect();
    let mut a = DopplerClassifier::new(tiny(), 0).unwrap();
    let mut b = DopplerClassifier::new(tiny(), 0).unwrap();
    let ha = a.train(&data, 5, 1, |_| {}).unwrap();
    let hb = b.train(&permuted, 5, 1, |_| {}).unwrap();
    for (x, y) in ha.iter().zip(&hb) {
        assert!((x.loss - y.loss).abs() < 1e-4, "{} vs {}", x.loss, y.loss);
        assert_eq!(x.accuracy, y.accuracy);
    }
    for (m, l) in &data {
        assert_eq!(b.predict_topk(m, 1).unwrap()[0] == perm[*l], a.predict_topk(m, 1).unwrap()[0] == *l);
    }
}

#[test]
fn ranking_contract() {
    assert_eq!(rank_classes(&[2.0, 0.5, 0.1], 2).unwrap(), vec![0, 1]);
    assert_eq!(rank_classes(&[0.0, 1.0, 1.0], 3).unwrap(), vec![1, 2, 0]);
    assert!(rank_classes(&[1.0], 2).is_err());
    assert!(rank_classes(&[1.0], 0).is_err());
}

#[test]
fn checkpoint_roundtrip_preserves_predictions() {
    let data = toy_set(6, 1);
    let mut c = DopplerClassifier::new(tiny(), 0).unwrap();
    c.train(&data, 2, 0, |_| {}).unwrap();
    let back = DopplerClassifier::from_named_tensors(&c.named_tensors()).unwrap();
    assert_eq!(back.net.config(), c.net.config());
    assert_eq!(back.logits(&data[0].0).unwrap(), c.logits(&data[0].0).unwrap());
}

#[test]
fn bad_inputs_are_rejected() {
    let mut c = DopplerClassifier::new(tiny(), 0).unwrap();
    assert!(c.logits(&Grid::filled(8, 8, 0.0)).is_err());
    let one_class: Vec<(Grid<f64>, usize)> = toy_set(3, 0).into_iter().map(|(m, _)| (m, 0)).collect();
    assert!(c.train(&one_class, 1, 0, |_| {}).is_err());
    let bad_label = vec![(Grid::filled(16, 16, 0.0), 0), (Grid::filled(16, 16, 0.0), 7)];
    assert!(c.train(&bad_label, 1, 0, |_| {}).is_err());
    assert!(DopplerClassifier::new(TransformerConfig { heads: 2, ..tiny() }, 0).is_err());
    assert!(DopplerClassifier::new(TransformerConfig { heatmap: (18, 16), ..tiny() }, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn token_count_formula(pr in 1usize..6, pc in 1usize..6, p in 1usize..5) {
        let map = Grid::filled(pr * p, pc * p, 0.5);
        let cfg = PatchEmbedConfig::diagonal(p, 4);
        let (t, time) = patch_matrix::<f64>(&map, &cfg).unwrap();
        prop_assert_eq!(t.shape(), &[pr * pc, cfg.channels() * p * p]);
        prop_assert!(time.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn topk_lists_are_prefixes(logits in proptest::collection::vec(-5.0f64..5.0, 3..8)) {
        let all = rank_classes(&logits, logits.len()).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..logits.len()).collect::<Vec<_>>());
        for k in 1..=logits.len() {
            prop_assert_eq!(&rank_classes(&logits, k).unwrap()[..], &all[..k]);
        }
    }
}
