use rand::Rng;
use rayon::prelude::*;

use super::transformer::cumulative_sum;
use super::{ModelError, TransformerModel};
use crate::pool::{Vocabulary, BOS};

/// One autoregressively generated gate sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSequence {
    /// Generated tokens, BOS excluded.
    pub token_ids: Vec<usize>,
    /// Raw logit of the chosen token at each step.
    pub per_step_logits: Vec<f64>,
    /// Running sums of `per_step_logits`.
    pub cumulative_logits: Vec<f64>,
}

/// Draws one non-BOS token with probability `∝ exp(-logit / tau)`.
pub fn sample_from_logits<R: Rng + ?Sized>(logits: &[f64], tau: f64, rng: &mut R) -> usize {
    let min = logits[1..].iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(i, &l)| if i == BOS { 0.0 } else { (-(l - min) / tau).exp() })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 && u < w {
            return i;
        }
        u -= w;
    }
    // Rounding left `u` past the last bucket.
    weights.iter().rposition(|&w| w > 0.0).expect("at least one gate token")
}

/// Samples `m` sequences of `t` gates at temperature `tau`.
///
/// Model evaluations for the `m` sequences run in parallel; random draws are
/// taken sequentially so results depend only on the rng state.
pub fn sample_circuits<R: Rng + ?Sized>(
    model: &TransformerModel,
    vocab: &Vocabulary,
    m: usize,
    t: usize,
    tau: f64,
    rng: &mut R,
) -> Result<Vec<SampledSequence>, ModelError> {
    if m == 0 || t == 0 {
        return Err(ModelError::BadSampling(format!("need m ≥ 1 and t ≥ 1, got m={m}, t={t}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(ModelError::BadSampling(format!("temperature must be positive, got {tau}")));
    }
    let cfg = model.config();
    if vocab.len() != cfg.vocab_size {
        return Err(ModelError::ConfigMismatch(format!(
            "vocabulary has {} tokens but the model expects {}",
            vocab.len(),
            cfg.vocab_size
        )));
    }
    if t > cfg.max_seq_len {
        return Err(ModelError::OverLength {
            len: t,
            max: cfg.max_seq_len,
        });
    }

    let mut prefixes: Vec<Vec<usize>> = vec![vec![BOS]; m];
    let mut step_logits: Vec<Vec<f64>> = vec![Vec::with_capacity(t); m];
    for _ in 0..t {
        let last_rows: Vec<Vec<f64>> = prefixes
            .par_iter()
            .map(|p| {
                let logits = model.forward(p)?;
                Ok(logits.row(p.len() - 1).to_vec())
            })
            .collect::<Result<_, ModelError>>()?;
        for ((prefix, logits), steps) in prefixes.iter_mut().zip(&last_rows).zip(&mut step_logits) {
            let tok = sample_from_logits(logits, tau, rng);
            prefix.push(tok);
            steps.push(logits[tok]);
        }
    }
    Ok(prefixes
        .into_iter()
        .zip(step_logits)
        .map(|(p, per_step)| SampledSequence {
            token_ids: p[1..].to_vec(),
            cumulative_logits: cumulative_sum(&per_step),
            per_step_logits: per_step,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::pool::{build_vocabulary, PoolConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn never_samples_bos() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = [-1e9, 0.0, 0.0];
        for _ in 0..1000 {
            assert_ne!(sample_from_logits(&logits, 1.0, &mut rng), BOS);
        }
    }

    #[test]
    fn two_to_one_ratio() {
        // logits (a, a + τ ln 2): lower logit twice as likely.
        let tau = 0.5;
        let logits = [0.0, 1.0, 1.0 + tau * 2f64.ln()];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 60_000;
        let low = (0..n).filter(|_| sample_from_logits(&logits, tau, &mut rng) == 1).count();
        let p = 2.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((low as f64 - n as f64 * p).abs() < 4.0 * sigma, "{low}");
    }

    #[test]
    fn sequences_are_consistent() {
        let vocab = build_vocabulary(&PoolConfig::standard(2)).unwrap();
        let model = TransformerModel::new(ModelConfig::tiny(vocab.len())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let seqs = sample_circuits(&model, &vocab, 4, 6, 0.5, &mut rng).unwrap();
        assert_eq!(seqs.len(), 4);
        for s in &seqs {
            assert_eq!(s.token_ids.len(), 6);
            assert!(s.token_ids.iter().all(|&t| t != BOS && t < vocab.len()));
            let mut acc = 0.0;
            for (l, c) in s.per_step_logits.iter().zip(&s.cumulative_logits) {
                acc += l;
                assert_eq!(acc, *c);
            }
            let replay = model.cumulative_logits_for(&s.token_ids).unwrap();
            for (a, b) in replay.iter().zip(&s.cumulative_logits) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_requests() {
        let vocab = build_vocabulary(&PoolConfig::standard(2)).unwrap();
        let model = TransformerModel::new(ModelConfig::tiny(vocab.len())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(sample_circuits(&model, &vocab, 0, 3, 0.5, &mut rng).is_err());
        assert!(sample_circuits(&model, &vocab, 1, 3, 0.0, &mut rng).is_err());
        assert!(sample_circuits(&model, &vocab, 1, 17, 0.5, &mut rng).is_err());
        let other = build_vocabulary(&PoolConfig::standard(3)).unwrap();
        assert!(matches!(
            sample_circuits(&model, &other, 1, 3, 0.5, &mut rng),
            Err(ModelError::ConfigMismatch(_))
        ));
    }
}
