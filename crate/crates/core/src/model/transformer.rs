use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{LayerParams, Params};
use super::{ModelConfig, ModelError};
use crate::pool::BOS;

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerModel {
    config: ModelConfig,
    params: Params,
}

struct NormCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct LayerCache {
    ln1: NormCache,
    a: Array2<f64>,
    qkv: Array2<f64>,
    /// Attention probabilities per head, each `T × T`.
    probs: Vec<Array2<f64>>,
    attn: Array2<f64>,
    ln2: NormCache,
    b: Array2<f64>,
    u: Array2<f64>,
    g: Array2<f64>,
}

/// Activations saved by [`TransformerModel::forward_cached`] for the backward pass.
pub struct ForwardCache {
    ids: Vec<usize>,
    layers: Vec<LayerCache>,
    lnf: NormCache,
    f: Array2<f64>,
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let n = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| (v - mean) * rs);
    }
    let y = &xhat * g + b;
    (y, NormCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let dxhat = dy * g;
    let n = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dxh = dxhat.row(i);
        let xh = cache.xhat.row(i);
        let m1 = dxh.sum() / n;
        let m2 = dxh.dot(&xh) / n;
        let r = cache.rstd[i];
        Zip::from(dx.row_mut(i))
            .and(&dxh)
            .and(&xh)
            .for_each(|o, &a, &b| *o = r * (a - m1 - b * m2));
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let inner = GELU_C * (x + 0.044715 * x * x * x);
    let t = inner.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl TransformerModel {
    /// Randomly initialized model, seeded from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = Params::init(&config, &mut rng);
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Params) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = Params::zeros(&config).layout();
        if params.layout() != expected {
            return Err(ModelError::ConfigMismatch(
                "parameter shapes do not match the config".into(),
            ));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Zeroes the output projection so every logit is 0.
    pub fn zero_output_projection(&mut self) {
        self.params.head_w.fill(0.0);
        self.params.head_b.fill(0.0);
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), ModelError> {
        if ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if ids.len() > self.config.max_seq_len {
            return Err(ModelError::OverLength {
                len: ids.len(),
                max: self.config.max_seq_len,
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(ModelError::UnknownToken {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Next-token logits for every position of `ids` (BOS already prepended):
    /// shape `(ids.len(), vocab_size)`.
    pub fn forward(&self, ids: &[usize]) -> Result<Array2<f64>, ModelError> {
        Ok(self.forward_cached(ids)?.0)
    }

    pub fn forward_cached(&self, ids: &[usize]) -> Result<(Array2<f64>, ForwardCache), ModelError> {
        self.check_ids(ids)?;
        let p = &self.params;
        let t = ids.len();
        let mut h = Array2::zeros((t, self.config.d_model));
        for (i, &id) in ids.iter().enumerate() {
            h.row_mut(i).assign(&(&p.tok_emb.row(id) + &p.pos_emb.row(i)));
        }
        let mut layers = Vec::with_capacity(p.layers.len());
        for lp in &p.layers {
            let (next, cache) = self.block_forward(lp, h);
            h = next;
            layers.push(cache);
        }
        let (f, lnf) = layer_norm(&h, &p.lnf_g, &p.lnf_b);
        let logits = f.dot(&p.head_w) + &p.head_b;
        Ok((
            logits,
            ForwardCache {
                ids: ids.to_vec(),
                layers,
                lnf,
                f,
            },
        ))
    }

    fn block_forward(&self, lp: &LayerParams, x: Array2<f64>) -> (Array2<f64>, LayerCache) {
        let (d, nh) = (self.config.d_model, self.config.n_heads);
        let hd = d / nh;
        let scale = 1.0 / (hd as f64).sqrt();
        let t = x.nrows();

        let (a, ln1) = layer_norm(&x, &lp.ln1_g, &lp.ln1_b);
        let qkv = a.dot(&lp.w_qkv) + &lp.b_qkv;
        let mut attn = Array2::zeros((t, d));
        let mut probs = Vec::with_capacity(nh);
        for head in 0..nh {
            let q = qkv.slice(s![.., head * hd..(head + 1) * hd]);
            let k = qkv.slice(s![.., d + head * hd..d + (head + 1) * hd]);
            let v = qkv.slice(s![.., 2 * d + head * hd..2 * d + (head + 1) * hd]);
            let mut sc = q.dot(&k.t()) * scale;
            for i in 0..t {
                let mut row = sc.row_mut(i);
                let max = row.slice(s![..=i]).fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let mut sum = 0.0;
                for j in 0..t {
                    if j <= i {
                        row[j] = (row[j] - max).exp();
                        sum += row[j];
                    } else {
                        row[j] = 0.0;
                    }
                }
                row.mapv_inplace(|v| v / sum);
            }
            attn.slice_mut(s![.., head * hd..(head + 1) * hd]).assign(&sc.dot(&v));
            probs.push(sc);
        }
        let h1 = &x + &(attn.dot(&lp.w_o) + &lp.b_o);
        let (b, ln2) = layer_norm(&h1, &lp.ln2_g, &lp.ln2_b);
        let u = b.dot(&lp.w_1) + &lp.b_1;
        let g = u.mapv(gelu);
        let out = &h1 + &(g.dot(&lp.w_2) + &lp.b_2);
        (
            out,
            LayerCache {
                ln1,
                a,
                qkv,
                probs,
                attn,
                ln2,
                b,
                u,
                g,
            },
        )
    }

    /// Gradient of a scalar loss with respect to every parameter, given
    /// `dlogits = ∂loss/∂logits` for the cached forward pass.
    pub fn backward(&self, cache: &ForwardCache, dlogits: ArrayView2<f64>) -> Params {
        let p = &self.params;
        let mut grads = Params::zeros(&self.config);

        grads.head_w = cache.f.t().dot(&dlogits);
        grads.head_b = dlogits.sum_axis(Axis(0));
        let df = dlogits.dot(&p.head_w.t());
        let mut dh = layer_norm_backward(&df, &cache.lnf, &p.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);

        for (li, (lp, lc)) in p.layers.iter().zip(&cache.layers).enumerate().rev() {
            dh = self.block_backward(lp, lc, dh, &mut grads.layers[li]);
        }
        for (i, &id) in cache.ids.iter().enumerate() {
            let row = dh.row(i);
            let mut te = grads.tok_emb.row_mut(id);
            te += &row;
            let mut pe = grads.pos_emb.row_mut(i);
            pe += &row;
        }
        grads
    }

    fn block_backward(
        &self,
        lp: &LayerParams,
        lc: &LayerCache,
        dout: Array2<f64>,
        gl: &mut LayerParams,
    ) -> Array2<f64> {
        let (d, nh) = (self.config.d_model, self.config.n_heads);
        let hd = d / nh;
        let scale = 1.0 / (hd as f64).sqrt();
        let t = dout.nrows();

        // Feed-forward branch.
        gl.w_2 = lc.g.t().dot(&dout);
        gl.b_2 = dout.sum_axis(Axis(0));
        let dg = dout.dot(&lp.w_2.t());
        let mut du = dg;
        Zip::from(&mut du).and(&lc.u).for_each(|d, &u| *d *= gelu_grad(u));
        gl.w_1 = lc.b.t().dot(&du);
        gl.b_1 = du.sum_axis(Axis(0));
        let db = du.dot(&lp.w_1.t());
        let dh1 = dout + layer_norm_backward(&db, &lc.ln2, &lp.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);

        // Attention branch.
        gl.w_o = lc.attn.t().dot(&dh1);
        gl.b_o = dh1.sum_axis(Axis(0));
        let dattn = dh1.dot(&lp.w_o.t());
        let mut dqkv = Array2::zeros((t, 3 * d));
        for head in 0..nh {
            let (qs, ks, vs) = (
                head * hd..(head + 1) * hd,
                d + head * hd..d + (head + 1) * hd,
                2 * d + head * hd..2 * d + (head + 1) * hd,
            );
            let q = lc.qkv.slice(s![.., qs.clone()]);
            let k = lc.qkv.slice(s![.., ks.clone()]);
            let v = lc.qkv.slice(s![.., vs.clone()]);
            let pr = &lc.probs[head];
            let dout_h = dattn.slice(s![.., qs.clone()]);
            let dprobs = dout_h.dot(&v.t());
            let dv = pr.t().dot(&dout_h);
            let mut dsc = Array2::zeros((t, t));
            for i in 0..t {
                let dot: f64 = (0..=i).map(|j| dprobs[[i, j]] * pr[[i, j]]).sum();
                for j in 0..=i {
                    dsc[[i, j]] = pr[[i, j]] * (dprobs[[i, j]] - dot) * scale;
                }
            }
            dqkv.slice_mut(s![.., qs]).assign(&dsc.dot(&k));
            dqkv.slice_mut(s![.., ks]).assign(&dsc.t().dot(&q));
            dqkv.slice_mut(s![.., vs]).assign(&dv);
        }
        gl.w_qkv = lc.a.t().dot(&dqkv);
        gl.b_qkv = dqkv.sum_axis(Axis(0));
        let da = dqkv.dot(&lp.w_qkv.t());
        dh1 + layer_norm_backward(&da, &lc.ln1, &lp.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b)
    }

    /// Teacher-forced pass over `BOS + sequence[..T-1]`; returns the logit of
    /// each token actually at position `s` together with the cache.
    pub fn selected_logits(&self, sequence: &[usize]) -> Result<(Vec<f64>, ForwardCache), ModelError> {
        if sequence.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        if let Some(&id) = sequence.iter().find(|&&id| id >= self.config.vocab_size || id == BOS) {
            return Err(ModelError::UnknownToken {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        let mut input = Vec::with_capacity(sequence.len());
        input.push(BOS);
        input.extend_from_slice(&sequence[..sequence.len() - 1]);
        let (logits, cache) = self.forward_cached(&input)?;
        let sel = sequence.iter().enumerate().map(|(s, &tok)| logits[[s, tok]]).collect();
        Ok((sel, cache))
    }

    /// Backward pass for a loss that depends on the selected logits only;
    /// `d_selected[s] = ∂loss/∂(logit of sequence[s] at step s)`.
    pub fn backward_selected(&self, cache: &ForwardCache, sequence: &[usize], d_selected: &[f64]) -> Params {
        let mut dlogits = Array2::zeros((cache.ids.len(), self.config.vocab_size));
        for (s, (&tok, &g)) in sequence.iter().zip(d_selected).enumerate() {
            dlogits[[s, tok]] = g;
        }
        self.backward(cache, dlogits.view())
    }

    /// Cumulative logits `l_t = Σ_{s≤t} logit(token_s | prefix_{<s})`.
    pub fn cumulative_logits_for(&self, sequence: &[usize]) -> Result<Vec<f64>, ModelError> {
        let (sel, _) = self.selected_logits(sequence)?;
        Ok(cumulative_sum(&sel))
    }
}

pub(crate) fn cumulative_sum(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Elementwise mean of the parameters of models sharing one config.
pub fn average_checkpoints(checkpoints: &[TransformerModel]) -> Result<TransformerModel, ModelError> {
    let first = checkpoints.first().ok_or(ModelError::NoCheckpoints)?;
    if let Some((i, m)) = checkpoints.iter().enumerate().find(|(_, m)| !m.config.same_architecture(&first.config)) {
        return Err(ModelError::ConfigMismatch(format!(
            "checkpoint {i} has config {:?}, expected {:?}",
            m.config, first.config
        )));
    }
    if checkpoints.len() == 1 {
        return Ok(first.clone());
    }
    let mut params = Params::zeros(&first.config);
    for m in checkpoints {
        params.add_scaled(&m.params, 1.0);
    }
    params.scale(1.0 / checkpoints.len() as f64);
    Ok(TransformerModel {
        config: first.config,
        params,
    })
}
