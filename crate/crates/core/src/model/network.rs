//! Batched forward and backward passes of the whole network.
//!
//! A batch first collects the distinct token sequences of each channel so
//! that a sequence shared by many pairs (a test name, a mutated line) is
//! encoded once. The head then runs as dense matrix operations over pairs.

use std::collections::HashMap;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::compare::{compare_backward, compare_forward, CompareTrace};
use super::encoder::{encode_backward, encode_trace, EncoderTrace};
use super::params::{sum_rows, Encoder, Params, Tensors};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::preprocess::PairDataset;

/// Sequences per unit of parallel encoder backward work. Fixed so that
/// gradient summation order does not depend on the thread count.
const BACKWARD_CHUNK: usize = 16;

#[derive(Default)]
struct Interner<'a> {
    seqs: Vec<&'a [u32]>,
    slots: HashMap<&'a [u32], usize>,
}

impl<'a> Interner<'a> {
    fn slot(&mut self, seq: &'a [u32]) -> usize {
        *self.slots.entry(seq).or_insert_with(|| {
            self.seqs.push(seq);
            self.seqs.len() - 1
        })
    }
}

/// Pairs of one batch expressed as slots into per-channel sequence lists.
pub(crate) struct Batch<'a> {
    names: Vec<&'a [u32]>,
    code: Vec<&'a [u32]>,
    test: Vec<usize>,
    source: Vec<usize>,
    line: Vec<usize>,
    before: Vec<usize>,
    after: Vec<usize>,
    ops: Vec<Option<usize>>,
    labels: Vec<Option<bool>>,
}

impl<'a> Batch<'a> {
    pub(crate) fn assemble(ds: &'a PairDataset, pairs: &[usize], config: &ModelConfig) -> Result<Self> {
        let mut names = Interner::default();
        let mut code = Interner::default();
        let n = pairs.len();
        let mut b = Batch {
            names: Vec::new(),
            code: Vec::new(),
            test: Vec::with_capacity(n),
            source: Vec::with_capacity(n),
            line: Vec::with_capacity(n),
            before: Vec::new(),
            after: Vec::new(),
            ops: Vec::with_capacity(n),
            labels: Vec::with_capacity(n),
        };
        for &i in pairs {
            let f = ds.features(i);
            b.test.push(names.slot(&f.test.name));
            b.source.push(names.slot(&f.mutant.source_name));
            b.line.push(code.slot(&f.mutant.line));
            if config.use_before_after {
                let (before, after) = f.mutant.before_after.as_ref().ok_or_else(|| {
                    Error::validation(format!(
                        "mutant {} lacks before/after fragments required by the model",
                        f.mutant.mutant_id
                    ))
                })?;
                b.before.push(code.slot(before));
                b.after.push(code.slot(after));
            }
            if let Some(op) = f.mutant.operator {
                if op >= config.operator_count {
                    return Err(Error::validation(format!(
                        "operator index {op} out of range for {} operators",
                        config.operator_count
                    )));
                }
            }
            b.ops.push(f.mutant.operator);
            b.labels.push(f.label);
        }
        b.names = names.seqs;
        b.code = code.seqs;
        Ok(b)
    }

    pub(crate) fn len(&self) -> usize {
        self.test.len()
    }
}

fn check_range(seqs: &[&[u32]], vocab: usize, channel: &str) -> Result<()> {
    for s in seqs {
        if let Some(&bad) = s.iter().find(|&&i| i as usize >= vocab) {
            return Err(Error::validation(format!(
                "{channel} index {bad} outside vocabulary of size {vocab}"
            )));
        }
    }
    Ok(())
}

struct ChannelEncoding {
    traces: Vec<Option<EncoderTrace>>,
    vectors: Array2<f64>,
}

fn encode_channel(enc: &Encoder, emb: &Array2<f64>, seqs: &[&[u32]]) -> ChannelEncoding {
    let traces: Vec<Option<EncoderTrace>> = seqs
        .par_iter()
        .map(|s| (!s.is_empty()).then(|| encode_trace(enc, emb, s)))
        .collect();
    let mut vectors = Array2::zeros((seqs.len(), 2 * enc.fwd.hidden()));
    for (i, t) in traces.iter().enumerate() {
        if let Some(t) = t {
            vectors.row_mut(i).assign(&t.v);
        }
    }
    ChannelEncoding { traces, vectors }
}

fn backward_channel(
    enc: &Encoder,
    emb: &Array2<f64>,
    ce: &ChannelEncoding,
    dvec: &Array2<f64>,
    grad_enc: &mut Encoder,
    grad_emb: &mut Array2<f64>,
) {
    let n = ce.traces.len();
    let (d, h) = (emb.ncols(), enc.fwd.hidden());
    let partials: Vec<(Encoder, Array2<f64>)> = (0..n.div_ceil(BACKWARD_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut ge = Encoder::zeros(d, h);
            let mut gemb = Array2::zeros(emb.raw_dim());
            for i in c * BACKWARD_CHUNK..((c + 1) * BACKWARD_CHUNK).min(n) {
                if let Some(tr) = &ce.traces[i] {
                    encode_backward(enc, tr, dvec.row(i), &mut ge, &mut gemb);
                }
            }
            (ge, gemb)
        })
        .collect();
    for (ge, gemb) in partials {
        for ((_, mut a), (_, b)) in grad_enc.tensors_mut().into_iter().zip(ge.tensors()) {
            a += &b;
        }
        *grad_emb += &gemb;
    }
}

struct HeadTrace {
    ts: CompareTrace,
    ba: Option<CompareTrace>,
    fused: Array2<f64>,
    mask: Option<Array2<f64>>,
    logits: Array2<f64>,
    probs: Array2<f64>,
}

struct HeadInput {
    vt: Array2<f64>,
    vs: Array2<f64>,
    vl: Array2<f64>,
    vb: Option<Array2<f64>>,
    va: Option<Array2<f64>>,
}

fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(&w.t()) + b
}

fn head_forward(p: &Params, config: &ModelConfig, inp: &HeadInput, ops: &[Option<usize>], mask: Option<Array2<f64>>) -> HeadTrace {
    let n = inp.vt.nrows();
    let f = config.fusion_dim;
    let ts = compare_forward(&p.cmp_ts, inp.vt.clone(), inp.vs.clone());
    let ba = match (&p.cmp_ba, &inp.vb, &inp.va) {
        (Some(c), Some(vb), Some(va)) => Some(compare_forward(c, vb.clone(), va.clone())),
        _ => None,
    };
    let mut fusion = Array2::zeros((n, config.fusion_width()));
    fusion.slice_mut(s![.., ..f]).assign(&linear(&ts.out, &p.red_ts.w, &p.red_ts.b));
    let mut col = f;
    if let (Some(tr), Some(red)) = (&ba, &p.red_ba) {
        fusion.slice_mut(s![.., col..col + f]).assign(&linear(&tr.out, &red.w, &red.b));
        col += f;
    }
    fusion.slice_mut(s![.., col..col + f]).assign(&linear(&inp.vl, &p.red_l.w, &p.red_l.b));
    col += f;
    for (i, op) in ops.iter().enumerate() {
        if let Some(op) = op {
            fusion[[i, col + op]] = 1.0;
        }
    }
    let fused = match &mask {
        Some(m) => fusion * m,
        None => fusion,
    };
    let logits = linear(&fused, &p.out.w, &p.out.b);
    let mut probs = logits.clone();
    for mut row in probs.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    HeadTrace {
        ts,
        ba,
        fused,
        mask,
        logits,
        probs,
    }
}

struct HeadGrads {
    dvt: Array2<f64>,
    dvs: Array2<f64>,
    dvl: Array2<f64>,
    dvb: Option<Array2<f64>>,
    dva: Option<Array2<f64>>,
}

fn head_backward(p: &Params, config: &ModelConfig, inp: &HeadInput, tr: &HeadTrace, dlogits: ArrayView2<f64>, g: &mut Params) -> HeadGrads {
    let f = config.fusion_dim;
    g.out.w += &dlogits.t().dot(&tr.fused);
    g.out.b += &dlogits.sum_axis(Axis(0));
    let mut dfusion = dlogits.dot(&p.out.w);
    if let Some(m) = &tr.mask {
        dfusion *= m;
    }
    let d_ts = dfusion.slice(s![.., ..f]).to_owned();
    g.red_ts.w += &d_ts.t().dot(&tr.ts.out);
    g.red_ts.b += &sum_rows(&d_ts);
    let dc_ts = d_ts.dot(&p.red_ts.w);
    let (dvt, dvs) = compare_backward(&p.cmp_ts, &tr.ts, dc_ts.view(), &mut g.cmp_ts);
    let mut col = f;
    let (mut dvb, mut dva) = (None, None);
    if let (Some(trba), Some(red), Some(cmp), Some(gred), Some(gcmp)) =
        (&tr.ba, &p.red_ba, &p.cmp_ba, g.red_ba.as_mut(), g.cmp_ba.as_mut())
    {
        let d_ba = dfusion.slice(s![.., col..col + f]).to_owned();
        gred.w += &d_ba.t().dot(&trba.out);
        gred.b += &sum_rows(&d_ba);
        let dc_ba = d_ba.dot(&red.w);
        let (b, a) = compare_backward(cmp, trba, dc_ba.view(), gcmp);
        dvb = Some(b);
        dva = Some(a);
        col += f;
    }
    let d_l = dfusion.slice(s![.., col..col + f]).to_owned();
    g.red_l.w += &d_l.t().dot(&inp.vl);
    g.red_l.b += &sum_rows(&d_l);
    let dvl = d_l.dot(&p.red_l.w);
    HeadGrads { dvt, dvs, dvl, dvb, dva }
}

fn gather(v: &Array2<f64>, slots: &[usize]) -> Array2<f64> {
    v.select(Axis(0), slots)
}

fn scatter(into: &mut Array2<f64>, slots: &[usize], rows: &Array2<f64>) {
    for (r, &s) in slots.iter().enumerate() {
        let mut dst = into.row_mut(s);
        dst += &rows.row(r);
    }
}

/// Class probabilities `[p_survive, p_kill]` of every pair in `pairs`.
pub(crate) fn predict_batch(p: &Params, config: &ModelConfig, ds: &PairDataset, pairs: &[usize]) -> Result<Array2<f64>> {
    let batch = Batch::assemble(ds, pairs, config)?;
    check_range(&batch.names, p.emb_names.nrows(), "names")?;
    check_range(&batch.code, p.emb_code.nrows(), "code")?;
    let names = encode_channel(&p.enc_names, &p.emb_names, &batch.names);
    let code = encode_channel(&p.enc_code, &p.emb_code, &batch.code);
    let inp = head_input(&batch, &names, &code, config);
    Ok(head_forward(p, config, &inp, &batch.ops, None).probs)
}

fn head_input(batch: &Batch, names: &ChannelEncoding, code: &ChannelEncoding, config: &ModelConfig) -> HeadInput {
    HeadInput {
        vt: gather(&names.vectors, &batch.test),
        vs: gather(&names.vectors, &batch.source),
        vl: gather(&code.vectors, &batch.line),
        vb: config.use_before_after.then(|| gather(&code.vectors, &batch.before)),
        va: config.use_before_after.then(|| gather(&code.vectors, &batch.after)),
    }
}

/// Mean cross-entropy over the batch and its gradient. `mask` is the
/// (already scaled) dropout mask over the fusion vector, if any.
pub(crate) fn loss_and_grad(
    p: &Params,
    config: &ModelConfig,
    ds: &PairDataset,
    pairs: &[usize],
    mask: Option<Array2<f64>>,
) -> Result<(f64, Params)> {
    let batch = Batch::assemble(ds, pairs, config)?;
    check_range(&batch.names, p.emb_names.nrows(), "names")?;
    check_range(&batch.code, p.emb_code.nrows(), "code")?;
    let labels: Vec<usize> = batch
        .labels
        .iter()
        .map(|l| l.map(usize::from).ok_or_else(|| Error::validation("training pair without a label")))
        .collect::<Result<_>>()?;
    let names = encode_channel(&p.enc_names, &p.emb_names, &batch.names);
    let code = encode_channel(&p.enc_code, &p.emb_code, &batch.code);
    let inp = head_input(&batch, &names, &code, config);
    let tr = head_forward(p, config, &inp, &batch.ops, mask);

    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut dlogits = tr.probs.clone();
    for (i, &y) in labels.iter().enumerate() {
        let row = tr.logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.mapv(|v| (v - max).exp()).sum().ln();
        loss += lse - row[y];
        dlogits[[i, y]] -= 1.0;
    }
    loss /= n;
    dlogits /= n;

    let mut g = p.zeros_like();
    let hg = head_backward(p, config, &inp, &tr, dlogits.view(), &mut g);
    let mut d_names = Array2::zeros(names.vectors.raw_dim());
    scatter(&mut d_names, &batch.test, &hg.dvt);
    scatter(&mut d_names, &batch.source, &hg.dvs);
    let mut d_code = Array2::zeros(code.vectors.raw_dim());
    scatter(&mut d_code, &batch.line, &hg.dvl);
    if let (Some(dvb), Some(dva)) = (&hg.dvb, &hg.dva) {
        scatter(&mut d_code, &batch.before, dvb);
        scatter(&mut d_code, &batch.after, dva);
    }
    backward_channel(&p.enc_names, &p.emb_names, &names, &d_names, &mut g.enc_names, &mut g.emb_names);
    backward_channel(&p.enc_code, &p.emb_code, &code, &d_code, &mut g.enc_code, &mut g.emb_code);
    Ok((loss, g))
}
