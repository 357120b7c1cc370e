mod common;

use common::*;
use eif_core::harness::collect_dataset;
use eif_core::localizer::*;
use eif_core::mapper::SemanticMap;
use eif_core::tensor::{AdamWConfig, Tensor};
use eif_core::world::{generate_scene, Category, Cell, RoomType, SubgoalAction};
use proptest::prelude::*;
use rand::Rng;

fn random_matrix(rng: &mut rand_chacha::ChaCha8Rng, r: usize, c: usize) -> Tensor<f64> {
    Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn naive_matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i * m + j] += a[i * k + t] * b[t * m + j];
            }
        }
    }
    out
}

fn sample(map: SemanticMap, text: &str, gt: Vec<Cell>) -> TrainSample {
    TrainSample {
        map,
        instruction: text.to_string(),
        action: SubgoalAction::OpenObject,
        target: Category::Fridge,
        gt_mask: gt,
        agent: Cell::new(0, 0),
        scene_seed: 0,
        hard: false,
    }
}

fn full_loss(model: &LocalizerModel<f64>, seed: u64) -> impl Fn() -> Tensor<f64> + '_ {
    let mut r = rng(seed);
    let map = random_map(&mut r, 5, 6);
    let gt = vec![random_cell(&mut r, 5, 6)];
    let input = model.prepare(&map, "open the fridge").unwrap();
    move || model.loss(&input, &gt).unwrap()
}

#[test]
fn gradients_match_finite_differences_on_twenty_seeds() {
    for seed in 0..20 {
        let model = small_model(seed, true, AttentionRoles::Prose);
        let params = model.named_params();
        let rep = grad_check(&params, full_loss(&model, seed), 1e-4);
        assert!(rep.max_rel < 1e-3, "seed {seed}: {rep:?}");
    }
}

#[test]
fn gradients_match_for_other_wirings() {
    for seed in 0..4 {
        for (graph, roles) in [(false, AttentionRoles::Prose), (true, AttentionRoles::Eq2)] {
            let model = small_model(seed, graph, roles);
            let params = model.named_params();
            let rep = grad_check(&params, full_loss(&model, seed), 1e-4);
            assert!(rep.max_rel < 1e-3, "seed {seed} graph {graph} {roles:?}: {rep:?}");
        }
    }
}

#[test]
fn zero_message_weights_leave_features_unchanged() {
    let mut r = rng(3);
    let x = random_matrix(&mut r, 48, 8);
    let e = correlation_graph(&x, &random_matrix(&mut r, 8, 48)).unwrap();
    let out = graph_enhance(&x, &e, &[Tensor::zeros(&[8, 8])]).unwrap();
    assert_eq!(out.values(), x.values());
    let out = graph_enhance(&x, &Tensor::zeros(&[48, 48]), &[random_matrix(&mut r, 8, 8)]).unwrap();
    assert_eq!(out.values(), x.values());
}

#[test]
fn graph_enhance_matches_loop_oracle() {
    let mut r = rng(11);
    let (c, d) = (7, 5);
    let x = random_matrix(&mut r, c, d);
    let e = random_matrix(&mut r, c, c);
    let w = random_matrix(&mut r, d, d);
    let got = graph_enhance(&x, &e, std::slice::from_ref(&w)).unwrap().values();
    let ex = naive_matmul(&e.values(), &x.values(), c, c, d);
    let exw = naive_matmul(&ex, &w.values(), c, d, d);
    for (i, g) in got.iter().enumerate() {
        assert!((g - (x.values()[i] + exw[i])).abs() < 1e-12);
    }
}

#[test]
fn correlation_graph_range() {
    let mut r = rng(5);
    let x = random_matrix(&mut r, 48, 6);
    let e = correlation_graph(&x, &Tensor::zeros(&[6, 48])).unwrap();
    assert!(e.values().iter().all(|&v| v == 0.5));
    let e = correlation_graph(&x, &random_matrix(&mut r, 6, 48)).unwrap();
    assert_eq!(e.shape(), &[48, 48]);
    assert!(e.values().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn attention_special_cases() {
    let mut r = rng(9);
    let q = random_matrix(&mut r, 6, 4);
    let k = random_matrix(&mut r, 1, 4);
    let v = random_matrix(&mut r, 1, 4);
    let (w, out) = scaled_dot_attention(&q, &k, &v).unwrap();
    assert!(w.values().iter().all(|&x| x == 1.0));
    for row in out.values().chunks(4) {
        assert_eq!(row, v.values().as_slice());
    }

    // Identical keys give equal logits, so the output is the value mean.
    let k = Tensor::matrix(3, 4, [k.values(), k.values(), k.values()].concat()).unwrap();
    let v = random_matrix(&mut r, 3, 4);
    let (_, out) = scaled_dot_attention(&q, &k, &v).unwrap();
    let vv = v.values();
    for row in out.values().chunks(4) {
        for j in 0..4 {
            let mean = (vv[j] + vv[4 + j] + vv[8 + j]) / 3.0;
            assert!((row[j] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_matches_naive_oracle() {
    let mut r = rng(21);
    let (n, m, d) = (5, 7, 3);
    let q = random_matrix(&mut r, n, d);
    let k = random_matrix(&mut r, m, d);
    let v = random_matrix(&mut r, m, d);
    let (w, out) = scaled_dot_attention(&q, &k, &v).unwrap();
    let (qv, kv, vv) = (q.values(), k.values(), v.values());
    for i in 0..n {
        let logits: Vec<f64> = (0..m)
            .map(|j| (0..d).map(|t| qv[i * d + t] * kv[j * d + t]).sum::<f64>() / (d as f64).sqrt())
            .collect();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let row_sum: f64 = w.values()[i * m..(i + 1) * m].iter().sum();
        assert!((row_sum - 1.0).abs() < 1e-6);
        for t in 0..d {
            let want: f64 = (0..m).map(|j| logits[j].exp() / z * vv[j * d + t]).sum();
            assert!((out.values()[i * d + t] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_trace_invariants() {
    let model = small_model(2, true, AttentionRoles::Prose);
    let map = random_map(&mut rng(2), 5, 6);
    let t = model.forward(&model.prepare(&map, "take the mug").unwrap()).unwrap();
    let (rows, cols) = (t.weights.shape()[0], t.weights.shape()[1]);
    for r in 0..rows {
        let s: f64 = t.weights.values()[r * cols..(r + 1) * cols].iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
    assert!(t.e.unwrap().values().iter().all(|&v| v > 0.0 && v < 1.0));
    assert_eq!(t.probs.shape(), &[30, 1]);
    assert!(t.probs.values().iter().all(|&p| p > 0.0 && p < 1.0 && p.is_finite()));
}

#[test]
fn empty_map_features_are_bias_embeddings() {
    let model = small_model(1, true, AttentionRoles::Prose);
    let input = model.prepare(&SemanticMap::new(5, 6), "open the fridge").unwrap();
    let (x_prime, _) = model.encode_map(&input).unwrap();
    assert_eq!(x_prime.values(), model.params.cat_emb.values());
}

#[test]
fn translation_moves_tokens_and_keeps_pooled_features() {
    let mut model = small_model(4, false, AttentionRoles::Prose);
    // Without positional weights the tokens depend on content and flags only.
    model.params.w_pos = Tensor::zeros(&[POS_FEATURES, 4]);
    let explored = |m: &mut SemanticMap| m.channels[SemanticMap::explored_channel()].fill(1);
    let (mut a, mut b) = (SemanticMap::new(5, 6), SemanticMap::new(5, 6));
    explored(&mut a);
    explored(&mut b);
    let mug = Category::Mug.index();
    let i = a.index(Cell::new(2, 2));
    a.channels[mug][i] = 1;
    let i = b.index(Cell::new(3, 2));
    b.channels[mug][i] = 1;
    let (xa, ta) = model.encode_map(&model.prepare(&a, "mug").unwrap()).unwrap();
    let (xb, tb) = model.encode_map(&model.prepare(&b, "mug").unwrap()).unwrap();
    assert_eq!(xa.values(), xb.values());
    let (ta, tb) = (ta.values(), tb.values());
    let d = 4;
    for r in 0..4 {
        for c in 0..6 {
            let i = r * 6 + c;
            let j = (r + 1) * 6 + c;
            assert_eq!(&ta[i * d..(i + 1) * d], &tb[j * d..(j + 1) * d], "cell ({r},{c})");
        }
    }
}

#[test]
fn single_cell_change_only_touches_related_tokens() {
    let model = small_model(6, true, AttentionRoles::Prose);
    let mut a = random_map(&mut rng(6), 5, 6);
    a.channels[SemanticMap::explored_channel()].fill(1);
    let mut b = a.clone();
    let spot = Cell::new(1, 4);
    let mug = Category::Mug.index();
    let i = b.index(spot);
    b.channels[mug][i] ^= 1;
    let (_, ta) = model.encode_map(&model.prepare(&a, "x").unwrap()).unwrap();
    let (_, tb) = model.encode_map(&model.prepare(&b, "x").unwrap()).unwrap();
    for i in 0..30 {
        let c = a.cell_at(i);
        let related = c == spot || a.channels[mug][i] != 0 || b.channels[mug][i] != 0;
        let same = ta.values()[i * 4..(i + 1) * 4] == tb.values()[i * 4..(i + 1) * 4];
        assert_eq!(same, !related, "cell {c}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn unexplored_cells_do_not_affect_heatmap(seed in 0u64..1000, idx in 0usize..30, cat in 0usize..48) {
        let model = small_model(seed % 5, true, AttentionRoles::Prose);
        let mut map = random_map(&mut rng(seed), 5, 6);
        map.channels[SemanticMap::explored_channel()][idx] = 0;
        let before = model.heatmap(&map, "take the mug").unwrap();
        map.channels[cat][idx] ^= 1;
        map.channels[SemanticMap::obstacle_channel()][idx] ^= 1;
        let after = model.heatmap(&map, "take the mug").unwrap();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn heatmap_probabilities_bounded(seed in 0u64..1000) {
        let model = small_model(seed, seed % 2 == 0, AttentionRoles::Prose);
        let map = random_map(&mut rng(seed), 5, 6);
        let h = model.heatmap(&map, "put the apple in the fridge").unwrap();
        prop_assert!(h.probs.iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn instruction_encoding() {
    let model = small_model(8, true, AttentionRoles::Prose);
    let enc = |s: &str| model.encode_instruction(&model.vocab.encode(s)).unwrap().values();
    assert_eq!(enc("open fridge"), enc("open fridge"));
    assert_ne!(enc("open fridge"), enc("open cabinet"));
    let unk = model.params.tok_emb.values()[..4].to_vec();
    assert_eq!(enc("zebra quokka"), unk);
}

#[test]
fn zero_decoder_gives_half_everywhere() {
    let mut model = small_model(0, true, AttentionRoles::Prose);
    model.params.w_dec = Tensor::zeros(&[4, 1]);
    model.params.b_dec = Tensor::zeros(&[1, 1]);
    let h = model.heatmap(&random_map(&mut rng(0), 5, 6), "mug").unwrap();
    assert!(h.probs.iter().all(|&p| p == 0.5));
}

#[test]
fn wrong_map_size_is_rejected() {
    let model = small_model(0, true, AttentionRoles::Prose);
    assert!(matches!(
        model.prepare(&SemanticMap::new(4, 6), "mug"),
        Err(LocalizerError::DimensionMismatch { .. })
    ));
}

#[test]
fn empty_dataset_is_rejected() {
    let mut model = small_model(0, true, AttentionRoles::Prose);
    assert!(matches!(
        train(&mut model, &[], &TrainConfig::default(), |_, _| {}),
        Err(LocalizerError::EmptyDataset)
    ));
}

fn overfit_setup() -> (LocalizerModel<f64>, TrainSample) {
    let cfg = LocalizerConfig {
        d: 16,
        ..small_config(0, true, AttentionRoles::Prose)
    };
    let model = LocalizerModel::new(cfg, Vocab::build([WORDS]));
    let mut map = random_map(&mut rng(1), 5, 6);
    let gt = Cell::new(3, 1);
    let i = map.index(gt);
    map.channels[SemanticMap::explored_channel()][i] = 1;
    let i = map.index(gt);
    map.channels[Category::Fridge.index()][i] = 1;
    (model, sample(map, "OpenObject Fridge open the fridge", vec![gt]))
}

fn overfit_config() -> TrainConfig {
    TrainConfig {
        epochs: 500,
        batch_size: 1,
        seed: 0,
        optimizer: AdamWConfig {
            lr: 1e-2,
            ..AdamWConfig::default()
        },
    }
}

#[test]
fn overfits_a_single_sample() {
    let (mut model, s) = overfit_setup();
    let report = train(&mut model, std::slice::from_ref(&s), &overfit_config(), |_, _| {}).unwrap();
    assert_eq!(report.steps, 500);
    assert!(
        *report.epoch_losses.last().unwrap() < 0.01,
        "{:?}",
        report.epoch_losses.last()
    );
    let h = model.heatmap(&s.map, &s.instruction).unwrap();
    assert!(h.get(s.gt_mask[0]) > 0.9, "{}", h.get(s.gt_mask[0]));
    assert_eq!(h.argmax(), s.gt_mask[0]);
}

#[test]
fn training_is_deterministic_and_checkpoints_round_trip() {
    let run = || {
        let (mut model, s) = overfit_setup();
        let cfg = TrainConfig {
            epochs: 20,
            ..overfit_config()
        };
        train(&mut model, &[s.clone(), s], &cfg, |_, _| {}).unwrap();
        model
    };
    let (a, b) = (run(), run());
    assert_eq!(a.to_checkpoint(), b.to_checkpoint());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loc.json");
    eif_core::tensor::save_checkpoint(&path, &a.to_checkpoint()).unwrap();
    let back = LocalizerModel::<f64>::from_checkpoint(&eif_core::tensor::load_checkpoint(&path).unwrap()).unwrap();
    let map = random_map(&mut rng(77), 5, 6);
    assert_eq!(
        a.heatmap(&map, "open the fridge").unwrap(),
        back.heatmap(&map, "open the fridge").unwrap()
    );
}

#[test]
fn loss_curve_is_non_increasing_on_fifty_samples() {
    let scenes: Vec<_> = (0..16)
        .map(|s| generate_scene(300 + s, RoomType::ALL[s as usize % 4], s % 2 == 0))
        .collect();
    let mut data = collect_dataset(&scenes).unwrap();
    data.truncate(50);
    assert_eq!(data.len(), 50);
    let vocab = Vocab::build(data.iter().map(|s| s.instruction.as_str()));
    let mut model = LocalizerModel::<f64>::new(LocalizerConfig::default(), vocab);
    let report = train(
        &mut model,
        &data,
        &TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        },
        |_, _| {},
    )
    .unwrap();
    // Rises are tolerated up to 5% of the starting loss.
    let jitter = 0.05 * report.epoch_losses[0];
    for w in report.epoch_losses.windows(2) {
        assert!(w[1] <= w[0] + jitter, "{:?}", report.epoch_losses);
    }
    assert!(report.epoch_losses.last().unwrap() < &report.epoch_losses[0]);
}

#[test]
fn loss_csv_has_header_and_rows() {
    let r = TrainReport {
        epoch_losses: vec![0.5, 0.25],
        steps: 2,
    };
    let mut out = Vec::new();
    write_loss_csv(&mut out, &r).unwrap();
    assert_eq!(
        String::from_utf8(out).unwrap(),
        "epoch,loss\n1,0.50000000\n2,0.25000000\n"
    );
}

#[test]
fn single_precision_model_runs() {
    let model = LocalizerModel::<f32>::new(small_config(0, true, AttentionRoles::Prose), Vocab::build([WORDS]));
    let map = random_map(&mut rng(0), 5, 6);
    let h = model.heatmap(&map, "open the fridge").unwrap();
    let h64 = small_model(0, true, AttentionRoles::Prose)
        .heatmap(&map, "open the fridge")
        .unwrap();
    for (a, b) in h.probs.iter().zip(&h64.probs) {
        assert!((a - b).abs() < 1e-4);
    }
}

#[test]
fn nearest_instance_baseline_counts_hits() {
    let mut map = SemanticMap::new(5, 6);
    let i = map.index(Cell::new(4, 5));
    map.channels[Category::Fridge.index()][i] = 1;
    let i = map.index(Cell::new(0, 1));
    map.channels[Category::Fridge.index()][i] = 1;
    let s = sample(map, "open the fridge", vec![Cell::new(4, 5)]);
    assert_eq!(nearest_instance_accuracy(std::slice::from_ref(&s)).hits, 0);
    let far = TrainSample {
        agent: Cell::new(4, 4),
        ..s
    };
    assert_eq!(nearest_instance_accuracy(&[far]).hits, 1);
}
