use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub w_qkv: Array2<f64>,
    pub b_qkv: Array1<f64>,
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w_1: Array2<f64>,
    pub b_1: Array1<f64>,
    pub w_2: Array2<f64>,
    pub b_2: Array1<f64>,
}

/// Every trainable tensor. Gradients and optimizer moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

impl LayerParams {
    fn zeros(d: usize, f: usize) -> Self {
        Self {
            ln1_g: Array1::zeros(d),
            ln1_b: Array1::zeros(d),
            w_qkv: Array2::zeros((d, 3 * d)),
            b_qkv: Array1::zeros(3 * d),
            w_o: Array2::zeros((d, d)),
            b_o: Array1::zeros(d),
            ln2_g: Array1::zeros(d),
            ln2_b: Array1::zeros(d),
            w_1: Array2::zeros((d, f)),
            b_1: Array1::zeros(f),
            w_2: Array2::zeros((f, d)),
            b_2: Array1::zeros(d),
        }
    }
}

impl Params {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
        Self {
            tok_emb: Array2::zeros((v, d)),
            pos_emb: Array2::zeros((cfg.max_seq_len, d)),
            layers: (0..cfg.n_layers).map(|_| LayerParams::zeros(d, f)).collect(),
            lnf_g: Array1::zeros(d),
            lnf_b: Array1::zeros(d),
            head_w: Array2::zeros((d, v)),
            head_b: Array1::zeros(v),
        }
    }

    /// Normal(0, 0.02) weights and embeddings, zero biases, unit norm gains,
    /// except for the readout when `readout_gain` is set.
    pub fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut p = Self::zeros(cfg);
        let mut fill = |a: &mut [f64]| a.iter_mut().for_each(|x| *x = normal.sample(rng));
        fill(slice_mut2(&mut p.tok_emb));
        fill(slice_mut2(&mut p.pos_emb));
        for l in &mut p.layers {
            l.ln1_g.fill(1.0);
            l.ln2_g.fill(1.0);
            fill(slice_mut2(&mut l.w_qkv));
            fill(slice_mut2(&mut l.w_o));
            fill(slice_mut2(&mut l.w_1));
            fill(slice_mut2(&mut l.w_2));
        }
        fill(slice_mut2(&mut p.head_w));
        match cfg.readout_gain {
            Some(g) => {
                p.lnf_g.fill(g);
                p.head_w.fill(0.0);
            }
            None => p.lnf_g.fill(1.0),
        }
        p
    }

    /// `(name, shape)` for every tensor, in the canonical order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = vec![
            ("tok_emb".to_string(), self.tok_emb.shape().to_vec()),
            ("pos_emb".to_string(), self.pos_emb.shape().to_vec()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let entries: [(&str, &[usize]); 12] = [
                ("ln1_g", l.ln1_g.shape()),
                ("ln1_b", l.ln1_b.shape()),
                ("w_qkv", l.w_qkv.shape()),
                ("b_qkv", l.b_qkv.shape()),
                ("w_o", l.w_o.shape()),
                ("b_o", l.b_o.shape()),
                ("ln2_g", l.ln2_g.shape()),
                ("ln2_b", l.ln2_b.shape()),
                ("w_1", l.w_1.shape()),
                ("b_1", l.b_1.shape()),
                ("w_2", l.w_2.shape()),
                ("b_2", l.b_2.shape()),
            ];
            out.extend(entries.iter().map(|(n, s)| (format!("layers.{i}.{n}"), s.to_vec())));
        }
        out.push(("lnf_g".to_string(), self.lnf_g.shape().to_vec()));
        out.push(("lnf_b".to_string(), self.lnf_b.shape().to_vec()));
        out.push(("head_w".to_string(), self.head_w.shape().to_vec()));
        out.push(("head_b".to_string(), self.head_b.shape().to_vec()));
        out
    }

    /// Flat views of every tensor, same order as [`Params::layout`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![slice2(&self.tok_emb), slice2(&self.pos_emb)];
        for l in &self.layers {
            out.extend([
                slice1(&l.ln1_g),
                slice1(&l.ln1_b),
                slice2(&l.w_qkv),
                slice1(&l.b_qkv),
                slice2(&l.w_o),
                slice1(&l.b_o),
                slice1(&l.ln2_g),
                slice1(&l.ln2_b),
                slice2(&l.w_1),
                slice1(&l.b_1),
                slice2(&l.w_2),
                slice1(&l.b_2),
            ]);
        }
        out.extend([
            slice1(&self.lnf_g),
            slice1(&self.lnf_b),
            slice2(&self.head_w),
            slice1(&self.head_b),
        ]);
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            slice_mut2(&mut self.tok_emb),
            slice_mut2(&mut self.pos_emb),
        ];
        for l in &mut self.layers {
            out.push(slice_mut1(&mut l.ln1_g));
            out.push(slice_mut1(&mut l.ln1_b));
            out.push(slice_mut2(&mut l.w_qkv));
            out.push(slice_mut1(&mut l.b_qkv));
            out.push(slice_mut2(&mut l.w_o));
            out.push(slice_mut1(&mut l.b_o));
            out.push(slice_mut1(&mut l.ln2_g));
            out.push(slice_mut1(&mut l.ln2_b));
            out.push(slice_mut2(&mut l.w_1));
            out.push(slice_mut1(&mut l.b_1));
            out.push(slice_mut2(&mut l.w_2));
            out.push(slice_mut1(&mut l.b_2));
        }
        out.push(slice_mut1(&mut self.lnf_g));
        out.push(slice_mut1(&mut self.lnf_b));
        out.push(slice_mut2(&mut self.head_w));
        out.push(slice_mut1(&mut self.head_b));
        out
    }

    pub fn count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in self.slices_mut() {
            a.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

fn slice1(a: &Array1<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}

fn slice2(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}

fn slice_mut1(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous")
}

fn slice_mut2(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("contiguous")
}
