//! Comparison block over batches of vector pairs.
//!
//! Output layout per row: linear units, bilinear units, cosine, Euclidean
//! distance, difference, elementwise product.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::params::{sum_rows, Compare};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub(crate) struct CompareTrace {
    v1: Array2<f64>,
    v2: Array2<f64>,
    nn_pre: Array2<f64>,
    nt_pre: Array2<f64>,
    /// `v1 · W_k` for every bilinear slice.
    v1_w: Vec<Array2<f64>>,
    n1: Array1<f64>,
    n2: Array1<f64>,
    cos: Array1<f64>,
    euc: Array1<f64>,
    pub out: Array2<f64>,
}

pub(crate) fn compare_forward(p: &Compare, v1: Array2<f64>, v2: Array2<f64>) -> CompareTrace {
    let (b, d) = v1.dim();
    let k = p.nn_b.len();
    let nn_pre = v1.dot(&p.nn_w.slice(s![.., ..d]).t()) + v2.dot(&p.nn_w.slice(s![.., d..]).t()) + &p.nn_b;
    let mut nt_pre = Array2::zeros((b, k));
    let mut v1_w = Vec::with_capacity(k);
    for slice in 0..k {
        let pw = v1.dot(&p.nt_w.index_axis(Axis(0), slice));
        let col = (&pw * &v2).sum_axis(Axis(1)) + p.nt_b[slice];
        nt_pre.column_mut(slice).assign(&col);
        v1_w.push(pw);
    }
    let n1 = v1.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let n2 = v2.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let dots = (&v1 * &v2).sum_axis(Axis(1));
    let cos = Array1::from_shape_fn(b, |i| {
        if n1[i] > 0.0 && n2[i] > 0.0 {
            dots[i] / (n1[i] * n2[i])
        } else {
            0.0
        }
    });
    let diff = &v1 - &v2;
    let euc = diff.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let mut out = Array2::zeros((b, 2 * k + 2 + 2 * d));
    out.slice_mut(s![.., ..k]).assign(&nn_pre.mapv(relu));
    out.slice_mut(s![.., k..2 * k]).assign(&nt_pre.mapv(relu));
    out.column_mut(2 * k).assign(&cos);
    out.column_mut(2 * k + 1).assign(&euc);
    out.slice_mut(s![.., 2 * k + 2..2 * k + 2 + d]).assign(&diff);
    out.slice_mut(s![.., 2 * k + 2 + d..]).assign(&(&v1 * &v2));
    CompareTrace {
        v1,
        v2,
        nn_pre,
        nt_pre,
        v1_w,
        n1,
        n2,
        cos,
        euc,
        out,
    }
}

fn relu(x: f64) -> f64 {
    x.max(0.0)
}

fn relu_grad(pre: f64, g: f64) -> f64 {
    if pre > 0.0 {
        g
    } else {
        0.0
    }
}

/// Returns gradients on both inputs and accumulates parameter gradients.
pub(crate) fn compare_backward(
    p: &Compare,
    tr: &CompareTrace,
    dout: ArrayView2<f64>,
    grad: &mut Compare,
) -> (Array2<f64>, Array2<f64>) {
    let (b, d) = tr.v1.dim();
    let k = p.nn_b.len();
    let g_nn = ndarray::Zip::from(&tr.nn_pre)
        .and(dout.slice(s![.., ..k]))
        .map_collect(|&pre, &g| relu_grad(pre, g));
    grad.nn_w.slice_mut(s![.., ..d]).scaled_add(1.0, &g_nn.t().dot(&tr.v1));
    grad.nn_w.slice_mut(s![.., d..]).scaled_add(1.0, &g_nn.t().dot(&tr.v2));
    grad.nn_b += &sum_rows(&g_nn);
    let mut dv1 = g_nn.dot(&p.nn_w.slice(s![.., ..d]));
    let mut dv2 = g_nn.dot(&p.nn_w.slice(s![.., d..]));

    let g_nt = ndarray::Zip::from(&tr.nt_pre)
        .and(dout.slice(s![.., k..2 * k]))
        .map_collect(|&pre, &g| relu_grad(pre, g));
    grad.nt_b += &sum_rows(&g_nt);
    for slice in 0..k {
        let gk = g_nt.column(slice);
        if gk.iter().all(|&x| x == 0.0) {
            continue;
        }
        let gk_col = gk.insert_axis(Axis(1));
        let weighted_v1 = &tr.v1 * &gk_col;
        let w = p.nt_w.index_axis(Axis(0), slice);
        grad.nt_w
            .index_axis_mut(Axis(0), slice)
            .scaled_add(1.0, &weighted_v1.t().dot(&tr.v2));
        dv1 += &(&tr.v2.dot(&w.t()) * &gk_col);
        dv2 += &(&tr.v1_w[slice] * &gk_col);
    }

    for i in 0..b {
        let dc = dout[[i, 2 * k]];
        let (n1, n2) = (tr.n1[i], tr.n2[i]);
        if dc != 0.0 && n1 > 0.0 && n2 > 0.0 {
            let c = tr.cos[i];
            for j in 0..d {
                let (a, bb) = (tr.v1[[i, j]], tr.v2[[i, j]]);
                dv1[[i, j]] += dc * (bb / (n1 * n2) - c * a / (n1 * n1));
                dv2[[i, j]] += dc * (a / (n1 * n2) - c * bb / (n2 * n2));
            }
        }
        let de = dout[[i, 2 * k + 1]];
        if de != 0.0 && tr.euc[i] > 0.0 {
            for j in 0..d {
                let g = de * (tr.v1[[i, j]] - tr.v2[[i, j]]) / tr.euc[i];
                dv1[[i, j]] += g;
                dv2[[i, j]] -= g;
            }
        }
    }
    let dsub = dout.slice(s![.., 2 * k + 2..2 * k + 2 + d]);
    dv1 += &dsub;
    dv2 -= &dsub;
    let dmul = dout.slice(s![.., 2 * k + 2 + d..]);
    dv1 += &(&dmul * &tr.v2);
    dv2 += &(&dmul * &tr.v1);
    (dv1, dv2)
}

/// Compares two vectors of equal length.
pub fn compare(v1: ArrayView1<f64>, v2: ArrayView1<f64>, params: &Compare) -> Result<Array1<f64>> {
    let d = params.nt_w.dim().1;
    if v1.len() != v2.len() || v1.len() != d {
        return Err(Error::validation(format!(
            "compare expects two vectors of length {d}, got {} and {}",
            v1.len(),
            v2.len()
        )));
    }
    let tr = compare_forward(
        params,
        v1.to_owned().insert_axis(Axis(0)),
        v2.to_owned().insert_axis(Axis(0)),
    );
    Ok(tr.out.row(0).to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn params(d: usize, k: usize) -> Compare {
        let mut p = Compare::zeros(d, k);
        p.nn_w.iter_mut().enumerate().for_each(|(i, w)| *w = 0.1 * (i as f64 + 1.0));
        p.nt_w.iter_mut().enumerate().for_each(|(i, w)| *w = 0.05 * i as f64 - 0.1);
        p.nn_b.fill(0.01);
        p.nt_b.fill(0.02);
        p
    }

    #[test]
    fn identical_vectors() {
        let p = params(3, 2);
        let v = array![0.5, -1.0, 2.0];
        let out = compare(v.view(), v.view(), &p).unwrap();
        assert!((out[4] - 1.0).abs() < 1e-12);
        assert_eq!(out[5], 0.0);
        assert!(out.slice(s![6..9]).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn antipodal_vectors() {
        let p = params(3, 2);
        let v = array![0.5, -1.0, 2.0];
        let out = compare(v.view(), (-&v).view(), &p).unwrap();
        assert!((out[4] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_has_zero_cosine() {
        let p = params(2, 1);
        let out = compare(array![0.0, 0.0].view(), array![1.0, 2.0].view(), &p).unwrap();
        assert_eq!(out[2], 0.0);
    }

    #[test]
    fn dimension_mismatch_is_validation_error() {
        let p = params(3, 2);
        assert!(matches!(
            compare(array![1.0, 2.0].view(), array![1.0, 2.0, 3.0].view(), &p),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let p = params(3, 2);
        let v1 = array![[0.3, -0.7, 0.9], [0.2, 0.4, -0.1]];
        let v2 = array![[-0.5, 0.8, 0.1], [0.6, -0.3, 0.7]];
        let w = Array2::from_shape_fn((2, 2 * 2 + 2 + 6), |(i, j)| ((i * 13 + j * 7) % 5) as f64 * 0.3 - 0.6);
        let loss = |a: &Array2<f64>, b: &Array2<f64>, p: &Compare| (&compare_forward(p, a.clone(), b.clone()).out * &w).sum();
        let tr = compare_forward(&p, v1.clone(), v2.clone());
        let mut g = Compare::zeros(3, 2);
        let (d1, d2) = compare_backward(&p, &tr, w.view(), &mut g);
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..3 {
                let mut a = v1.clone();
                a[[i, j]] += eps;
                let mut b = v1.clone();
                b[[i, j]] -= eps;
                let fd = (loss(&a, &v2, &p) - loss(&b, &v2, &p)) / (2.0 * eps);
                assert!((fd - d1[[i, j]]).abs() < 1e-7);
                let mut a = v2.clone();
                a[[i, j]] += eps;
                let mut b = v2.clone();
                b[[i, j]] -= eps;
                let fd = (loss(&v1, &a, &p) - loss(&v1, &b, &p)) / (2.0 * eps);
                assert!((fd - d2[[i, j]]).abs() < 1e-7);
            }
        }
        let mut pp = p.clone();
        pp.nt_w[[1, 2, 0]] += eps;
        let mut pm = p.clone();
        pm.nt_w[[1, 2, 0]] -= eps;
        let fd = (loss(&v1, &v2, &pp) - loss(&v1, &v2, &pm)) / (2.0 * eps);
        assert!((fd - g.nt_w[[1, 2, 0]]).abs() < 1e-7);
    }
}
