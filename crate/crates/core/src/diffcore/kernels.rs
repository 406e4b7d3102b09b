//! Forward kernels on row-major matrices, shared by the graph engine and the
//! inference paths of the model.

use super::Tensor;

/// Floor applied inside every logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

pub fn guarded_ln(v: f64) -> f64 {
    v.max(LOG_FLOOR).ln()
}

/// `a (n×m) · b (m×p)`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m, p) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(m, b.rows());
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        let orow = &mut out[i * p..(i + 1) * p];
        for (k, &aik) in ad[i * m..(i + 1) * m].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in orow.iter_mut().zip(&bd[k * p..(k + 1) * p]) {
                *o += aik * bkj;
            }
        }
    }
    Tensor::from_parts(vec![n, p], out)
}

/// `aᵀ (m×n) · b (n×p)` without materializing the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, m, p) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(n, b.rows());
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * p];
    for i in 0..n {
        let brow = &bd[i * p..(i + 1) * p];
        for (k, &aik) in ad[i * m..(i + 1) * m].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bij) in out[k * p..(k + 1) * p].iter_mut().zip(brow) {
                *o += aik * bij;
            }
        }
    }
    Tensor::from_parts(vec![m, p], out)
}

/// `a (n×p) · bᵀ (p×m)`.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, p, m) = (a.rows(), a.cols(), b.rows());
    debug_assert_eq!(p, b.cols());
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        let ar = a.row(i);
        for j in 0..m {
            out.push(ar.iter().zip(b.row(j)).map(|(x, y)| x * y).sum());
        }
    }
    Tensor::from_parts(vec![n, m], out)
}

/// Adds `bias` (length m) to every row of `x` (n×m).
pub fn add_row(x: &Tensor, bias: &Tensor) -> Tensor {
    let m = x.cols();
    let b = bias.data();
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v + b[i % m])
        .collect();
    Tensor::from_parts(vec![x.rows(), m], data)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let c = x.cols();
    let mut out = Vec::with_capacity(x.len());
    for r in x.row_iter() {
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in r {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for o in &mut out[start..start + c] {
            *o /= total;
        }
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

/// Pairwise squared distances between rows of `a` (n×d) and rows of `b` (k×d).
pub fn sq_dists(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.rows(), b.rows());
    let mut out = Vec::with_capacity(n * k);
    for i in 0..n {
        let ar = a.row(i);
        for j in 0..k {
            out.push(sq_dist(ar, b.row(j)));
        }
    }
    Tensor::from_parts(vec![n, k], out)
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Column sums of a matrix.
pub fn col_sums(x: &Tensor) -> Vec<f64> {
    let mut s = vec![0.0; x.cols()];
    for r in x.row_iter() {
        for (acc, v) in s.iter_mut().zip(r) {
            *acc += v;
        }
    }
    s
}
