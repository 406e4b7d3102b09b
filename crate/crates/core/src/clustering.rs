//! Non-gradient cluster machinery: the closed-form auxiliary distribution,
//! Lloyd's K-means, center (re)initialization and source sample weights.

use serde::{Deserialize, Serialize};

use crate::diffcore::{kernels, Tensor};
use crate::error::{Error, Result};

/// Per-epoch clustering state carried by the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryState {
    /// Auxiliary distribution over classifier outputs, `n_t × K`.
    pub q_out: Tensor,
    /// Auxiliary distribution over feature-space soft assignments, `n_t × K`.
    pub q_feat: Tensor,
    /// Target K-means centers, `K × d_z`.
    pub target_centers: Tensor,
    /// One weight in `[0, 1]` per source sample.
    pub source_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centers: Tensor,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

/// Closed-form auxiliary update: reweight each column by the inverse square
/// root of its total mass, then renormalize rows.
pub fn update_auxiliary(p: &Tensor) -> Result<Tensor> {
    update_auxiliary_with_mass(p, &kernels::col_sums(p))
}

/// As [`update_auxiliary`], with column masses supplied by the caller (for
/// example computed over the whole target set rather than one batch).
pub fn update_auxiliary_with_mass(p: &Tensor, mass: &[f64]) -> Result<Tensor> {
    if mass.len() != p.cols() {
        return Err(Error::Shape {
            op: "update_auxiliary",
            expected: vec![p.cols()],
            found: vec![mass.len()],
        });
    }
    if let Some(column) = mass.iter().position(|&m| m <= 0.0) {
        return Err(Error::DegenerateCluster { column });
    }
    // any common factor cancels in the row normalization; scaling relative
    // to the first column makes equal masses an exact fixed point
    let scale: Vec<f64> = mass.iter().map(|m| (mass[0] / m).sqrt()).collect();
    let k = p.cols();
    let mut out = Vec::with_capacity(p.len());
    for r in p.row_iter() {
        let start = out.len();
        out.extend(r.iter().zip(&scale).map(|(v, s)| v * s));
        let total: f64 = out[start..].iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("probability row with zero mass"));
        }
        for v in &mut out[start..start + k] {
            *v /= total;
        }
    }
    Tensor::new(p.shape().to_vec(), out)
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest(point: &[f64], centers: &Tensor) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.row_iter().enumerate() {
        let d = kernels::sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Lloyd's algorithm from fixed initial centers.
///
/// Iterates until no center moves more than `tol` (Euclidean) or
/// `max_iters` updates have run. A cluster left empty by an assignment step
/// is reseeded with the point farthest from its own assigned center; empty
/// clusters are processed in index order and ties pick the lowest point
/// index. The returned assignments are recomputed against the final centers.
pub fn kmeans(z: &Tensor, k: usize, init_centers: &Tensor, max_iters: usize, tol: f64) -> Result<KMeansResult> {
    let (n, d) = (z.rows(), z.cols());
    if init_centers.shape() != [k, d] {
        return Err(Error::Shape {
            op: "kmeans",
            expected: vec![k, d],
            found: init_centers.shape().to_vec(),
        });
    }
    if n < k {
        return Err(Error::invalid(format!("kmeans needs n >= K (n = {n}, K = {k})")));
    }
    if !init_centers.is_finite() || !z.is_finite() {
        return Err(Error::NonFinite { op: "kmeans".into() });
    }

    let mut centers = init_centers.clone();
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut assign: Vec<(usize, f64)> = z.row_iter().map(|p| nearest(p, &centers)).collect();
        reseed_empty(&mut assign, k);

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(z.row(i)) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let cnt = counts[c] as f64;
            for s in &mut sums[c * d..(c + 1) * d] {
                *s /= cnt;
            }
            shift = shift.max(kernels::sq_dist(&sums[c * d..(c + 1) * d], centers.row(c)).sqrt());
        }
        centers = Tensor::from_parts(vec![k, d], sums);
        if shift < tol {
            break;
        }
    }

    let (assignments, inertia) = assign_all(z, &centers);
    Ok(KMeansResult {
        centers,
        assignments,
        inertia,
        iterations,
    })
}

/// Nearest-center assignment of every row plus the total squared distance.
pub fn assign_all(z: &Tensor, centers: &Tensor) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignments = z
        .row_iter()
        .map(|p| {
            let (c, d) = nearest(p, centers);
            inertia += d;
            c
        })
        .collect();
    (assignments, inertia)
}

fn reseed_empty(assign: &mut [(usize, f64)], k: usize) {
    let mut counts = vec![0usize; k];
    for &(c, _) in assign.iter() {
        counts[c] += 1;
    }
    for empty in 0..k {
        if counts[empty] > 0 {
            continue;
        }
        let mut far = None;
        for (i, &(c, dist)) in assign.iter().enumerate() {
            if counts[c] < 2 {
                continue;
            }
            if far.is_none_or(|(_, best)| dist > best) {
                far = Some((i, dist));
            }
        }
        // n >= k guarantees some cluster holds two points
        let (i, _) = far.expect("a cluster with at least two points");
        counts[assign[i].0] -= 1;
        counts[empty] += 1;
        assign[i] = (empty, 0.0);
    }
}

/// Mean feature of each class. Every class in `0..k` needs a sample.
pub fn class_centroids(z: &Tensor, labels: &[usize], k: usize) -> Result<Tensor> {
    if labels.len() != z.rows() {
        return Err(Error::Shape {
            op: "class_centroids",
            expected: vec![z.rows()],
            found: vec![labels.len()],
        });
    }
    let d = z.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (row, &y) in z.row_iter().zip(labels) {
        if y >= k {
            return Err(Error::LabelOutOfRange {
                label: y as i64,
                classes: k,
            });
        }
        counts[y] += 1;
        for (s, v) in sums[y * d..(y + 1) * d].iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    for (c, &cnt) in counts.iter().enumerate() {
        for s in &mut sums[c * d..(c + 1) * d] {
            *s /= cnt as f64;
        }
    }
    Tensor::matrix(k, d, sums)
}

/// Re-initializes the learnable centers from the union of labeled source
/// features and target features grouped by `argmax` of `q_feat`. A class with
/// no target member falls back to its source centroid.
pub fn reinit_centers(zs: &Tensor, ys: &[usize], zt: &Tensor, q_feat: &Tensor) -> Result<Tensor> {
    let k = q_feat.cols();
    let d = zs.cols();
    if zt.cols() != d || q_feat.rows() != zt.rows() {
        return Err(Error::Shape {
            op: "reinit_centers",
            expected: vec![zt.rows(), k],
            found: q_feat.shape().to_vec(),
        });
    }
    let source = class_centroids(zs, ys, k)?;
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    let mut target_counts = vec![0usize; k];
    for (row, &y) in zs.row_iter().zip(ys) {
        counts[y] += 1;
        for (s, v) in sums[y * d..(y + 1) * d].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (row, c) in zt.row_iter().zip(q_feat.argmax_rows()) {
        counts[c] += 1;
        target_counts[c] += 1;
        for (s, v) in sums[c * d..(c + 1) * d].iter_mut().zip(row) {
            *s += v;
        }
    }
    for c in 0..k {
        let slot = &mut sums[c * d..(c + 1) * d];
        if target_counts[c] == 0 {
            slot.copy_from_slice(source.row(c));
        } else {
            for s in slot {
                *s /= counts[c] as f64;
            }
        }
    }
    Tensor::matrix(k, d, sums)
}

pub const KMEANS_MAX_ITERS: usize = 100;
pub const KMEANS_TOL: f64 = 1e-6;

/// Target K-means centers, seeded from source class centroids so that
/// center `k` corresponds to class `k`.
pub fn target_centers(zt: &Tensor, source_centroids: &Tensor) -> Result<KMeansResult> {
    kmeans(zt, source_centroids.rows(), source_centroids, KMEANS_MAX_ITERS, KMEANS_TOL)
}

/// `w_j = (1 + cos(c_{y_j}, z_j)) / 2`, clamped into `[0, 1]`.
pub fn source_weights(zs: &Tensor, ys: &[usize], centers: &Tensor) -> Result<Vec<f64>> {
    if zs.cols() != centers.cols() || ys.len() != zs.rows() {
        return Err(Error::Shape {
            op: "source_weights",
            expected: vec![zs.rows(), centers.cols()],
            found: vec![ys.len(), zs.cols()],
        });
    }
    let norms: Vec<f64> = centers.row_iter().map(norm).collect();
    if let Some(row) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroNorm { row });
    }
    zs.row_iter()
        .zip(ys)
        .enumerate()
        .map(|(j, (z, &y))| {
            if y >= centers.rows() {
                return Err(Error::LabelOutOfRange {
                    label: y as i64,
                    classes: centers.rows(),
                });
            }
            let nz = norm(z);
            if nz == 0.0 {
                return Err(Error::ZeroNorm { row: j });
            }
            let dot: f64 = z.iter().zip(centers.row(y)).map(|(a, b)| a * b).sum();
            let cos = (dot / (nz * norms[y])).clamp(-1.0, 1.0);
            Ok(0.5 * (1.0 + cos))
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
