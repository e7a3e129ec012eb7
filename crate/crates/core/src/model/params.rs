//! Parameter tensors, their initialisation and a uniform named view used by
//! the optimiser, checkpointing and gradient checks.

use ndarray::{s, Array1, Array2, Array3, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use sha2::{Digest, Sha256};

use super::ModelConfig;

/// Named views over every tensor, in a fixed order.
pub trait Tensors {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>);
    fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>);

    fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        self.collect("", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, f64>)> {
        let mut out = Vec::new();
        self.collect_mut("", &mut out);
        out
    }
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

macro_rules! impl_tensors {
    ($ty:ty { $($leaf:ident),* $(,)? } $(nested { $($child:ident),* $(,)? })? $(optional { $($opt:ident),* $(,)? })?) => {
        impl Tensors for $ty {
            fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, ArrayViewD<'a, f64>)>) {
                $(out.push((join(prefix, stringify!($leaf)), self.$leaf.view().into_dyn()));)*
                $($(self.$child.collect(&join(prefix, stringify!($child)), out);)*)?
                $($(if let Some(p) = &self.$opt { p.collect(&join(prefix, stringify!($opt)), out); })*)?
            }
            fn collect_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, ArrayViewMutD<'a, f64>)>) {
                $(out.push((join(prefix, stringify!($leaf)), self.$leaf.view_mut().into_dyn()));)*
                $($(self.$child.collect_mut(&join(prefix, stringify!($child)), out);)*)?
                $($(if let Some(p) = &mut self.$opt { p.collect_mut(&join(prefix, stringify!($opt)), out); })*)?
            }
        }
    };
}

/// One GRU direction. Gate blocks are stacked row-wise in the order
/// update, reset, candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Gru {
    /// `3h × d`.
    pub w_x: Array2<f64>,
    /// `3h × h`.
    pub w_h: Array2<f64>,
    /// `3h`.
    pub b: Array1<f64>,
}
impl_tensors!(Gru { w_x, w_h, b });

impl Gru {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Gru {
            w_x: Array2::zeros((3 * hidden, input)),
            w_h: Array2::zeros((3 * hidden, hidden)),
            b: Array1::zeros(3 * hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }
}

/// Bidirectional GRU plus additive attention pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub fwd: Gru,
    pub bwd: Gru,
    /// `2h × 2h`.
    pub att_w: Array2<f64>,
    pub att_b: Array1<f64>,
    /// Context vector scoring each position.
    pub att_ctx: Array1<f64>,
}
impl_tensors!(Encoder { att_w, att_b, att_ctx } nested { fwd, bwd });

impl Encoder {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Encoder {
            fwd: Gru::zeros(input, hidden),
            bwd: Gru::zeros(input, hidden),
            att_w: Array2::zeros((2 * hidden, 2 * hidden)),
            att_b: Array1::zeros(2 * hidden),
            att_ctx: Array1::zeros(2 * hidden),
        }
    }
}

/// Learnable part of one comparison block.
#[derive(Clone, Debug, PartialEq)]
pub struct Compare {
    /// `k × 2D` over the concatenated pair.
    pub nn_w: Array2<f64>,
    pub nn_b: Array1<f64>,
    /// `k × D × D` bilinear slices.
    pub nt_w: Array3<f64>,
    pub nt_b: Array1<f64>,
}
impl_tensors!(Compare { nn_w, nn_b, nt_w, nt_b });

impl Compare {
    pub fn zeros(dim: usize, k: usize) -> Self {
        Compare {
            nn_w: Array2::zeros((k, 2 * dim)),
            nn_b: Array1::zeros(k),
            nt_w: Array3::zeros((k, dim, dim)),
            nt_b: Array1::zeros(k),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `out × in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}
impl_tensors!(Linear { w, b });

impl Linear {
    pub fn zeros(input: usize, output: usize) -> Self {
        Linear {
            w: Array2::zeros((output, input)),
            b: Array1::zeros(output),
        }
    }
}

/// Every learnable tensor of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub emb_names: Array2<f64>,
    pub emb_code: Array2<f64>,
    pub enc_names: Encoder,
    pub enc_code: Encoder,
    pub cmp_ts: Compare,
    pub cmp_ba: Option<Compare>,
    pub red_ts: Linear,
    pub red_ba: Option<Linear>,
    pub red_l: Linear,
    pub out: Linear,
}
impl_tensors!(Params { emb_names, emb_code }
    nested { enc_names, enc_code, cmp_ts, red_ts, red_l, out }
    optional { cmp_ba, red_ba });

impl Params {
    /// All-zero parameters with the shapes implied by the configuration and
    /// vocabulary sizes.
    pub fn zeros(config: &ModelConfig, names_vocab: usize, code_vocab: usize) -> Self {
        let (d, h) = (config.embed_dim, config.hidden_dim);
        let enc = config.encoded_dim();
        let k = config.compare_dim;
        let f = config.fusion_dim;
        let cmp_out = config.compare_out_dim();
        Params {
            emb_names: Array2::zeros((names_vocab, d)),
            emb_code: Array2::zeros((code_vocab, d)),
            enc_names: Encoder::zeros(d, h),
            enc_code: Encoder::zeros(d, h),
            cmp_ts: Compare::zeros(enc, k),
            cmp_ba: config.use_before_after.then(|| Compare::zeros(enc, k)),
            red_ts: Linear::zeros(cmp_out, f),
            red_ba: config.use_before_after.then(|| Linear::zeros(cmp_out, f)),
            red_l: Linear::zeros(enc, f),
            out: Linear::zeros(config.fusion_width(), 2),
        }
    }

    /// Seeded initialisation: uniform embeddings, orthogonal recurrent
    /// blocks, Glorot-uniform projections and zero biases.
    pub fn init(config: &ModelConfig, names_vocab: usize, code_vocab: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(config, names_vocab, code_vocab);
        uniform(p.emb_names.as_slice_mut().unwrap(), 0.1, rng);
        uniform(p.emb_code.as_slice_mut().unwrap(), 0.1, rng);
        for enc in [&mut p.enc_names, &mut p.enc_code] {
            for gru in [&mut enc.fwd, &mut enc.bwd] {
                let h = gru.hidden();
                for g in 0..3 {
                    glorot(gru.w_x.slice_mut(s![g * h..(g + 1) * h, ..]).as_slice_mut().unwrap(), h, config.embed_dim, rng);
                    let q = orthogonal(h, rng);
                    gru.w_h.slice_mut(s![g * h..(g + 1) * h, ..]).assign(&q);
                }
            }
            let n = enc.att_w.nrows();
            glorot(enc.att_w.as_slice_mut().unwrap(), n, n, rng);
            uniform(enc.att_ctx.as_slice_mut().unwrap(), 0.1, rng);
        }
        let cmps: Vec<&mut Compare> = std::iter::once(&mut p.cmp_ts).chain(p.cmp_ba.as_mut()).collect();
        for c in cmps {
            let (k, two_d) = c.nn_w.dim();
            glorot(c.nn_w.as_slice_mut().unwrap(), k, two_d, rng);
            let d = two_d / 2;
            glorot(c.nt_w.as_slice_mut().unwrap(), d, d, rng);
        }
        let lins: Vec<&mut Linear> = [&mut p.red_ts, &mut p.red_l, &mut p.out]
            .into_iter()
            .chain(p.red_ba.as_mut())
            .collect();
        for l in lins {
            let (o, i) = l.w.dim();
            glorot(l.w.as_slice_mut().unwrap(), o, i, rng);
        }
        p
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, mut t) in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// Adds `other` elementwise.
    pub fn add_assign(&mut self, other: &Params) {
        for ((_, mut a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a += &b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, mut t) in self.tensors_mut() {
            t *= factor;
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|(_, t)| t.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// SHA-256 over tensor names, shapes and little-endian values.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, t) in self.tensors() {
            hasher.update(name.as_bytes());
            for &d in t.shape() {
                hasher.update((d as u64).to_le_bytes());
            }
            for &x in t.iter() {
                hasher.update(x.to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }
}

fn uniform(xs: &mut [f64], limit: f64, rng: &mut impl Rng) {
    for x in xs {
        *x = rng.random_range(-limit..limit);
    }
}

fn glorot(xs: &mut [f64], fan_out: usize, fan_in: usize, rng: &mut impl Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(xs, limit, rng);
}

/// Random `n × n` orthogonal matrix by Gram-Schmidt on uniform rows.
fn orthogonal(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    loop {
        let mut m = Array2::<f64>::zeros((n, n));
        uniform(m.as_slice_mut().unwrap(), 1.0, rng);
        let mut ok = true;
        for i in 0..n {
            for j in 0..i {
                let proj = m.row(i).dot(&m.row(j));
                let rj = m.row(j).to_owned();
                m.row_mut(i).scaled_add(-proj, &rj);
            }
            let norm = m.row(i).dot(&m.row(i)).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            m.row_mut(i).mapv_inplace(|x| x / norm);
        }
        if ok {
            return m;
        }
    }
}

/// Row sums, as a column reduction helper shared by the backward passes.
pub(crate) fn sum_rows(m: &Array2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(0))
}
