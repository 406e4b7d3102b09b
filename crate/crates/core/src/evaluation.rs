//! Accuracy, confusion matrix, NMI and a 2-D PCA projection for embedding plots.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<u64>>,
    pub nmi: f64,
    pub support: usize,
}

/// Scores predictions against labels; unlabeled rows are skipped.
pub fn report(predictions: &[usize], labels: &[Option<usize>], classes: usize) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape {
            op: "report",
            expected: vec![labels.len()],
            found: vec![predictions.len()],
        });
    }
    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut pred_l = Vec::new();
    let mut true_l = Vec::new();
    for (&p, l) in predictions.iter().zip(labels) {
        let Some(l) = *l else { continue };
        if l >= classes || p >= classes {
            return Err(Error::LabelOutOfRange {
                label: l.max(p) as i64 + 1,
                classes,
            });
        }
        confusion[l][p] += 1;
        pred_l.push(p);
        true_l.push(l);
    }
    let support = true_l.len();
    if support == 0 {
        return Err(Error::MissingLabels("no labeled rows to evaluate".into()));
    }
    let correct: u64 = (0..classes).map(|k| confusion[k][k]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let n: u64 = row.iter().sum();
            if n == 0 {
                0.0
            } else {
                row[k] as f64 / n as f64
            }
        })
        .collect();
    Ok(EvalReport {
        accuracy: correct as f64 / support as f64,
        per_class_accuracy,
        confusion,
        nmi: nmi(&pred_l, &true_l),
        support,
    })
}

/// Predicts with `params` and scores against the dataset's labels.
pub fn evaluate(params: &ModelParams, dataset: &Dataset) -> Result<EvalReport> {
    let labels = dataset
        .eval_labels()
        .filter(|l| l.raw().iter().any(Option::is_some))
        .ok_or_else(|| Error::MissingLabels(format!("cannot evaluate unlabeled dataset `{}`", dataset.name)))?;
    let predictions = params.predict(dataset.features())?;
    report(&predictions, labels.raw(), params.spec().classes)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information, `I(a; b) / sqrt(H(a) H(b))`, natural logs.
/// Zero when either partition is constant.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0usize; ka * kb];
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        joint[x * kb + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    let nf = n as f64;
    let (ha, hb) = (entropy(&ca, nf), entropy(&cb, nf));
    if ha <= 0.0 || hb <= 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / nf;
            mi += pxy * (pxy * nf * nf / (ca[x] as f64 * cb[y] as f64)).ln();
        }
    }
    (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
}

const POWER_ITERS: usize = 1000;
const POWER_TOL: f64 = 1e-14;

/// Projects rows of `z` onto its top principal components.
///
/// Components come from power iteration with deflation on the covariance
/// matrix; each is signed so its largest-magnitude loading is positive.
/// Zero-variance directions project to zero.
pub fn pca_project(z: &Tensor, dims: usize) -> Result<Tensor> {
    let (n, d) = (z.rows(), z.cols());
    if n < dims {
        return Err(Error::invalid(format!("pca needs at least {dims} rows, got {n}")));
    }
    let components = principal_components(z, dims);
    let mean = column_means(z);
    let mut out = Vec::with_capacity(n * dims);
    for row in z.row_iter() {
        for comp in &components {
            out.push((0..d).map(|j| (row[j] - mean[j]) * comp[j]).sum());
        }
    }
    Tensor::matrix(n, dims, out)
}

fn column_means(z: &Tensor) -> Vec<f64> {
    let n = z.rows() as f64;
    crate::diffcore::kernels::col_sums(z).into_iter().map(|s| s / n).collect()
}

/// Top `dims` unit eigenvectors of the covariance of `z` (zero vectors where
/// the remaining variance vanishes).
pub fn principal_components(z: &Tensor, dims: usize) -> Vec<Vec<f64>> {
    let (n, d) = (z.rows(), z.cols());
    let mean = column_means(z);
    let mut cov = vec![0.0; d * d];
    for row in z.row_iter() {
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in 0..d {
                cov[a * d + b] += da * (row[b] - mean[b]);
            }
        }
    }
    for c in &mut cov {
        *c /= n as f64;
    }
    let scale = cov.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut comps = Vec::with_capacity(dims);
    for _ in 0..dims {
        let (eigval, mut v) = power_iteration(&cov, d);
        if eigval <= scale * 1e-12 || scale == 0.0 {
            comps.push(vec![0.0; d]);
            continue;
        }
        let lead = v.iter().enumerate().fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] -= eigval * v[a] * v[b];
            }
        }
        comps.push(v);
    }
    comps
}

fn power_iteration(m: &[f64], d: usize) -> (f64, Vec<f64>) {
    // start away from any axis so a component is not missed by symmetry
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + 0.1 * i as f64).collect();
    normalize(&mut v);
    let mut eig = 0.0;
    for _ in 0..POWER_ITERS {
        let mut w: Vec<f64> = (0..d).map(|a| (0..d).map(|b| m[a * d + b] * v[b]).sum()).collect();
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return (0.0, v);
        }
        let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        eig = norm;
        if delta < POWER_TOL {
            break;
        }
    }
    (eig, v)
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}
