//! Sequence encoder: embedding lookup, bidirectional GRU and attention
//! pooling, with the matching backward pass.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::params::{sum_rows, Encoder, Gru};

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations of one GRU pass, in processing order.
#[derive(Clone, Debug)]
pub(crate) struct GruTrace {
    x: Array2<f64>,
    /// `(n + 1) × h`; row 0 is the zero initial state.
    hs: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    cand: Array2<f64>,
}

pub(crate) fn gru_forward(g: &Gru, x: Array2<f64>) -> GruTrace {
    let n = x.nrows();
    let h = g.hidden();
    let ax = x.dot(&g.w_x.t()) + &g.b;
    let w_zr = g.w_h.slice(s![..2 * h, ..]);
    let w_n = g.w_h.slice(s![2 * h.., ..]);
    let mut hs = Array2::zeros((n + 1, h));
    let mut z = Array2::zeros((n, h));
    let mut r = Array2::zeros((n, h));
    let mut cand = Array2::zeros((n, h));
    for t in 0..n {
        let hp = hs.row(t).to_owned();
        let azr = w_zr.dot(&hp);
        for j in 0..h {
            z[[t, j]] = sigmoid(ax[[t, j]] + azr[j]);
            r[[t, j]] = sigmoid(ax[[t, h + j]] + azr[h + j]);
        }
        let rh = &r.row(t) * &hp;
        let an = w_n.dot(&rh);
        for j in 0..h {
            let c = (ax[[t, 2 * h + j]] + an[j]).tanh();
            cand[[t, j]] = c;
            let zj = z[[t, j]];
            hs[[t + 1, j]] = zj * hp[j] + (1.0 - zj) * c;
        }
    }
    GruTrace { x, hs, z, r, cand }
}

/// Backpropagates `dh_out` (gradient on every output state, processing
/// order) through one GRU pass. Accumulates into `grad` and returns the
/// gradient on the inputs.
pub(crate) fn gru_backward(g: &Gru, tr: &GruTrace, dh_out: ArrayView2<f64>, grad: &mut Gru) -> Array2<f64> {
    let n = tr.x.nrows();
    let h = g.hidden();
    let w_zr = g.w_h.slice(s![..2 * h, ..]);
    let w_n = g.w_h.slice(s![2 * h.., ..]);
    let mut da = Array2::<f64>::zeros((n, 3 * h));
    let mut dh_next = Array1::<f64>::zeros(h);
    let mut dzr = Array1::<f64>::zeros(2 * h);
    let mut dan = Array1::<f64>::zeros(h);
    for t in (0..n).rev() {
        let hp = tr.hs.row(t);
        let (z, r, c) = (tr.z.row(t), tr.r.row(t), tr.cand.row(t));
        let dh = &dh_out.row(t) + &dh_next;
        let mut dhp = &dh * &z;
        for j in 0..h {
            dan[j] = dh[j] * (1.0 - z[j]) * (1.0 - c[j] * c[j]);
        }
        let drh = w_n.t().dot(&dan);
        for j in 0..h {
            let dz = dh[j] * (hp[j] - c[j]);
            dzr[j] = dz * z[j] * (1.0 - z[j]);
            let dr = drh[j] * hp[j];
            dzr[h + j] = dr * r[j] * (1.0 - r[j]);
            dhp[j] += drh[j] * r[j];
        }
        dhp += &w_zr.t().dot(&dzr);
        da.slice_mut(s![t, ..2 * h]).assign(&dzr);
        da.slice_mut(s![t, 2 * h..]).assign(&dan);
        dh_next = dhp;
    }
    grad.w_x += &da.t().dot(&tr.x);
    grad.b += &sum_rows(&da);
    let hprev = tr.hs.slice(s![..n, ..]);
    grad.w_h
        .slice_mut(s![..2 * h, ..])
        .scaled_add(1.0, &da.slice(s![.., ..2 * h]).t().dot(&hprev));
    let rh = &tr.r * &hprev;
    grad.w_h
        .slice_mut(s![2 * h.., ..])
        .scaled_add(1.0, &da.slice(s![.., 2 * h..]).t().dot(&rh));
    da.dot(&g.w_x)
}

/// Everything the backward pass of one encoded sequence needs.
#[derive(Clone, Debug)]
pub(crate) struct EncoderTrace {
    indices: Vec<u32>,
    fwd: GruTrace,
    bwd: GruTrace,
    states: Array2<f64>,
    scores: Array2<f64>,
    pub alpha: Array1<f64>,
    pub v: Array1<f64>,
}

fn gather(emb: &Array2<f64>, indices: &[u32]) -> Array2<f64> {
    let idx: Vec<usize> = indices.iter().map(|&i| i as usize).collect();
    emb.select(Axis(0), &idx)
}

fn reversed(x: &Array2<f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

/// Encodes a non-empty index sequence. Indices must be in range of `emb`.
pub(crate) fn encode_trace(enc: &Encoder, emb: &Array2<f64>, indices: &[u32]) -> EncoderTrace {
    debug_assert!(!indices.is_empty());
    let x = gather(emb, indices);
    let n = x.nrows();
    let h = enc.fwd.hidden();
    let xr = reversed(&x);
    let fwd = gru_forward(&enc.fwd, x);
    let bwd = gru_forward(&enc.bwd, xr);
    let mut states = Array2::zeros((n, 2 * h));
    states.slice_mut(s![.., ..h]).assign(&fwd.hs.slice(s![1.., ..]));
    states.slice_mut(s![.., h..]).assign(&bwd.hs.slice(s![1..;-1, ..]));
    let scores = (states.dot(&enc.att_w.t()) + &enc.att_b).mapv(f64::tanh);
    let logits = scores.dot(&enc.att_ctx);
    let alpha = softmax(logits.view());
    let v = alpha.dot(&states);
    EncoderTrace {
        indices: indices.to_vec(),
        fwd,
        bwd,
        states,
        scores,
        alpha,
        v,
    }
}

pub(crate) fn softmax(x: ArrayView1<f64>) -> Array1<f64> {
    let max = x.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = x.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e / sum
}

/// Backpropagates `dv` through one encoding, accumulating into the encoder
/// gradient and the embedding-table gradient.
pub(crate) fn encode_backward(
    enc: &Encoder,
    tr: &EncoderTrace,
    dv: ArrayView1<f64>,
    grad: &mut Encoder,
    grad_emb: &mut Array2<f64>,
) {
    let n = tr.states.nrows();
    let h = enc.fwd.hidden();
    let alpha = &tr.alpha;
    let mut dstates = Array2::zeros((n, 2 * h));
    Zip::from(dstates.rows_mut()).and(alpha).for_each(|mut row, &a| row.assign(&(&dv * a)));
    let dalpha = tr.states.dot(&dv);
    let mean = alpha.dot(&dalpha);
    let dlogits = alpha * &(dalpha - mean);
    grad.att_ctx += &tr.scores.t().dot(&dlogits);
    let mut dpre = Array2::zeros((n, 2 * h));
    for i in 0..n {
        for j in 0..2 * h {
            let u = tr.scores[[i, j]];
            dpre[[i, j]] = dlogits[i] * enc.att_ctx[j] * (1.0 - u * u);
        }
    }
    grad.att_w += &dpre.t().dot(&tr.states);
    grad.att_b += &sum_rows(&dpre);
    dstates += &dpre.dot(&enc.att_w);

    let dh_fwd = dstates.slice(s![.., ..h]);
    let dh_bwd = dstates.slice(s![..;-1, h..]);
    let dx_fwd = gru_backward(&enc.fwd, &tr.fwd, dh_fwd, &mut grad.fwd);
    let dx_bwd = gru_backward(&enc.bwd, &tr.bwd, dh_bwd, &mut grad.bwd);
    for (i, &tok) in tr.indices.iter().enumerate() {
        let mut row = grad_emb.row_mut(tok as usize);
        row += &dx_fwd.row(i);
        row += &dx_bwd.row(n - 1 - i);
    }
}

/// An encoded sequence with its attention distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub vector: Array1<f64>,
    /// Empty for an empty input.
    pub attention: Array1<f64>,
}

/// Encodes an index sequence. Empty input yields the zero vector.
pub(crate) fn encode(enc: &Encoder, emb: &Array2<f64>, indices: &[u32]) -> Encoded {
    if indices.is_empty() {
        return Encoded {
            vector: Array1::zeros(2 * enc.fwd.hidden()),
            attention: Array1::zeros(0),
        };
    }
    let tr = encode_trace(enc, emb, indices);
    Encoded {
        vector: tr.v,
        attention: tr.alpha,
    }
}
