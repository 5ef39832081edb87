//! Transformer backprop against finite differences, sampling statistics and
//! checkpoint persistence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spingqe::model::{
    average_checkpoints, load_checkpoint, sample_circuits, sample_from_logits, save_checkpoint, ModelConfig,
    Params, TransformerModel,
};
use spingqe::pool::{build_vocabulary, PoolConfig, BOS};

fn loss_and_grad(model: &TransformerModel, seq: &[usize], targets: &[f64]) -> (f64, Params) {
    let (sel, cache) = model.selected_logits(seq).unwrap();
    let mut l = 0.0;
    let mut cum = Vec::new();
    for s in &sel {
        l += s;
        cum.push(l);
    }
    let loss: f64 = cum.iter().zip(targets).map(|(a, b)| (a - b).powi(2)).sum();
    let dcum: Vec<f64> = cum.iter().zip(targets).map(|(a, b)| 2.0 * (a - b)).collect();
    let dsel: Vec<f64> = (0..dcum.len()).map(|s| dcum[s..].iter().sum()).collect();
    (loss, model.backward_selected(&cache, seq, &dsel))
}

fn loss_only(model: &TransformerModel, seq: &[usize], targets: &[f64]) -> f64 {
    let cum = model.cumulative_logits_for(seq).unwrap();
    cum.iter().zip(targets).map(|(a, b)| (a - b).powi(2)).sum()
}

#[test]
fn backprop_matches_finite_differences() {
    let cfg = ModelConfig {
        seed: 17,
        ..ModelConfig::tiny(13)
    };
    let mut model = TransformerModel::new(cfg).unwrap();
    // Larger weights than the default init so every path carries signal.
    model.params_mut().scale(10.0);
    let seq = [3, 7, 1, 12, 5, 5, 9];
    let targets = [1.0, -2.0, 0.5, 3.0, -1.0, 2.0, 0.0];
    let (_, grads) = loss_and_grad(&model, &seq, &targets);

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let layout = model.params().layout();
    let h = 1e-4;
    let mut checked = 0;
    let mut attempts = 0;
    while checked < 20 {
        attempts += 1;
        assert!(attempts < 10_000);
        let ti = rng.random_range(0..layout.len());
        let len = model.params().slices()[ti].len();
        let k = rng.random_range(0..len);
        let analytic = grads.slices()[ti][k];
        if analytic.abs() < 1e-6 {
            continue;
        }
        let orig = model.params().slices()[ti][k];
        model.params_mut().slices_mut()[ti][k] = orig + h;
        let plus = loss_only(&model, &seq, &targets);
        model.params_mut().slices_mut()[ti][k] = orig - h;
        let minus = loss_only(&model, &seq, &targets);
        model.params_mut().slices_mut()[ti][k] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        assert!(rel < 1e-3, "{}[{k}]: analytic {analytic} numeric {numeric}", layout[ti].0);
        checked += 1;
    }
}

#[test]
fn every_tensor_receives_gradient() {
    let mut model = TransformerModel::new(ModelConfig::tiny(13)).unwrap();
    model.params_mut().scale(5.0);
    let (_, grads) = loss_and_grad(&model, &[1, 2, 3, 4], &[1.0, 2.0, 3.0, 4.0]);
    for ((name, _), g) in grads.layout().iter().zip(grads.slices()) {
        assert!(g.iter().any(|&x| x != 0.0), "{name} has zero gradient");
    }
}

#[test]
fn uniform_logits_give_uniform_tokens() {
    let logits = vec![0.0; 131];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 100_000;
    let mut counts = vec![0usize; 131];
    for _ in 0..draws {
        counts[sample_from_logits(&logits, 0.5, &mut rng)] += 1;
    }
    assert_eq!(counts[BOS], 0);
    let p = 1.0 / 130.0;
    let mean = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate().skip(1) {
        assert!((c as f64 - mean).abs() < 4.0 * sigma, "token {i}: {c}");
    }
}

#[test]
fn near_zero_temperature_picks_argmin() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let logits: Vec<f64> = (0..20).map(|i| ((i * 7919) % 23) as f64 * 0.01 + 0.5).collect();
    let argmin = (1..20).min_by(|&a, &b| logits[a].total_cmp(&logits[b])).unwrap();
    let hits = (0..10_000)
        .filter(|_| sample_from_logits(&logits, 1e-6, &mut rng) == argmin)
        .count();
    assert!(hits as f64 / 10_000.0 > 0.999);
}

#[test]
fn model_level_uniform_sampling() {
    let vocab = build_vocabulary(&PoolConfig::standard(4)).unwrap();
    let mut model = TransformerModel::new(ModelConfig::tiny(vocab.len())).unwrap();
    model.zero_output_projection();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seqs = sample_circuits(&model, &vocab, 50, 12, 0.5, &mut rng).unwrap();
    let mut seen = std::collections::HashSet::new();
    for s in &seqs {
        assert!(s.cumulative_logits.iter().all(|&l| l == 0.0));
        seen.extend(s.token_ids.iter().copied());
    }
    // 600 uniform draws over 130 tokens cover almost all of them.
    assert!(seen.len() > 110, "{}", seen.len());
}

#[test]
fn sampling_is_seed_deterministic() {
    let vocab = build_vocabulary(&PoolConfig::standard(4)).unwrap();
    let model = TransformerModel::new(ModelConfig::tiny(vocab.len())).unwrap();
    let a = sample_circuits(&model, &vocab, 5, 12, 0.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let b = sample_circuits(&model, &vocab, 5, 12, 0.5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn forward_is_reproducible_from_seed() {
    let cfg = ModelConfig::tiny(20);
    let a = TransformerModel::new(cfg).unwrap();
    let b = TransformerModel::new(cfg).unwrap();
    assert_eq!(a.forward(&[0, 4, 9]).unwrap(), b.forward(&[0, 4, 9]).unwrap());
}

#[test]
fn average_of_three_is_scalar_mean() {
    let models: Vec<TransformerModel> = (0..3)
        .map(|seed| TransformerModel::new(ModelConfig { seed, ..ModelConfig::tiny(9) }).unwrap())
        .collect();
    let avg = average_checkpoints(&models).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n_tensors = avg.params().slices().len();
    for _ in 0..100 {
        let t = rng.random_range(0..n_tensors);
        let k = rng.random_range(0..avg.params().slices()[t].len());
        let expect = models.iter().map(|m| m.params().slices()[t][k]).sum::<f64>() / 3.0;
        assert!((avg.params().slices()[t][k] - expect).abs() < 1e-15);
    }
}

#[test]
fn averaging_identical_checkpoints_is_identity() {
    let m = TransformerModel::new(ModelConfig::tiny(9)).unwrap();
    let avg = average_checkpoints(&[m.clone(), m.clone(), m.clone()]).unwrap();
    for (a, b) in avg.params().slices().iter().zip(m.params().slices()) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
        }
    }
}

#[test]
fn save_load_forward_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.bin");
    let vocab = build_vocabulary(&PoolConfig::standard(4)).unwrap();
    let m = TransformerModel::new(ModelConfig::desk(vocab.len())).unwrap();
    save_checkpoint(&m, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    let ids = [0, 5, 77, 130];
    assert_eq!(m.forward(&ids).unwrap(), back.forward(&ids).unwrap());
    assert_eq!(back.config(), m.config());
}
