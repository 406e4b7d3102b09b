//! Datasets, synthetic domain-shift generators, CSV feature files and the
//! stratified train/test split.
//!
//! Labels are stored zero-based in memory. CSV files use `1..=K` with `-1`
//! for an unlabeled row.

use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Source => f.write_str("source"),
            Domain::Target => f.write_str("target"),
        }
    }
}

/// Feature matrix with optional per-row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub domain: Domain,
    features: Tensor,
    labels: Option<Vec<Option<usize>>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, domain: Domain, features: Tensor, labels: Option<Vec<Option<usize>>>) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() == 0 {
            return Err(Error::invalid("dataset needs a non-empty n × D feature matrix"));
        }
        if let Some(l) = &labels {
            if l.len() != features.rows() {
                return Err(Error::Shape {
                    op: "dataset labels",
                    expected: vec![features.rows()],
                    found: vec![l.len()],
                });
            }
        }
        Ok(Self {
            name: name.into(),
            domain,
            features,
            labels,
        })
    }

    /// Fully labeled dataset.
    pub fn labeled(name: impl Into<String>, domain: Domain, features: Tensor, labels: Vec<usize>) -> Result<Self> {
        Self::new(name, domain, features, Some(labels.into_iter().map(Some).collect()))
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.as_ref().is_some_and(|l| l.iter().any(Option::is_some))
    }

    /// Labels of a fully labeled dataset.
    pub fn full_labels(&self) -> Result<Vec<usize>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::MissingLabels(format!("dataset `{}` has no labels", self.name)))?;
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or_else(|| Error::MissingLabels(format!("row {i} of `{}` is unlabeled", self.name))))
            .collect()
    }

    /// Largest label + 1, or `None` when unlabeled.
    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref()?.iter().flatten().max().map(|m| m + 1)
    }

    pub fn check_labels(&self, classes: usize) -> Result<()> {
        for &l in self.labels.iter().flatten().flatten() {
            if l >= classes {
                return Err(Error::LabelOutOfRange {
                    label: l as i64 + 1,
                    classes,
                });
            }
        }
        Ok(())
    }

    /// Copy with labels removed.
    pub fn without_labels(&self) -> Self {
        Self {
            labels: None,
            ..self.clone()
        }
    }

    /// The evaluation-only view of this dataset's labels.
    pub fn eval_labels(&self) -> Option<EvalLabels> {
        self.labels.clone().map(EvalLabels)
    }

    pub fn select(&self, idx: &[usize], name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            domain: self.domain,
            features: self.features.select_rows(idx),
            labels: self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Labels that can score predictions but cannot be read back by training code.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalLabels(Vec<Option<usize>>);

impl EvalLabels {
    /// Fraction of labeled rows predicted correctly.
    pub fn accuracy(&self, predictions: &[usize]) -> f64 {
        let mut hit = 0usize;
        let mut total = 0usize;
        for (p, l) in predictions.iter().zip(&self.0) {
            if let Some(l) = l {
                total += 1;
                hit += usize::from(p == l);
            }
        }
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn raw(&self) -> &[Option<usize>] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Blobs,
    Moons,
}

/// Parameters of a synthetic source/target pair.
///
/// For blobs, class means sit evenly on a circle of radius
/// `separation · noise_std` around the origin. The target is drawn from the
/// same class-conditional distributions, then rotated about the origin (blobs)
/// or about the moons' midpoint, then translated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpec {
    pub generator: Generator,
    pub classes: usize,
    pub samples_per_class: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub rotation_deg: f64,
    #[serde(default = "default_translation")]
    pub translation: [f64; 2],
    /// Per-class multipliers on the target sample count; empty means balanced.
    #[serde(default)]
    pub class_imbalance: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_separation() -> f64 {
    4.0
}
fn default_noise() -> f64 {
    0.5
}
fn default_translation() -> [f64; 2] {
    [0.0, 0.0]
}

impl ShiftSpec {
    /// The desk-scale default benchmark: 3 classes, 200 samples per class and
    /// domain, 30° rotation and a (1, 0) translation.
    pub fn blobs_3x30(seed: u64) -> Self {
        Self {
            generator: Generator::Blobs,
            classes: 3,
            samples_per_class: 200,
            separation: default_separation(),
            noise_std: default_noise(),
            rotation_deg: 30.0,
            translation: [1.0, 0.0],
            class_imbalance: Vec::new(),
            seed,
        }
    }

    /// Same benchmark with no shift at all.
    pub fn blobs_no_shift(seed: u64) -> Self {
        Self {
            rotation_deg: 0.0,
            translation: [0.0, 0.0],
            ..Self::blobs_3x30(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config("generator needs at least 2 classes".into()));
        }
        if self.generator == Generator::Moons && self.classes != 2 {
            return Err(Error::Config("moons generator requires exactly 2 classes".into()));
        }
        if !(0.0..360.0).contains(&self.rotation_deg) {
            return Err(Error::Config(format!("rotation {} outside [0, 360)", self.rotation_deg)));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("samples_per_class must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.separation.is_finite() && self.noise_std.is_finite()) {
            return Err(Error::Config("noise_std and separation must be finite, noise_std >= 0".into()));
        }
        if !self.class_imbalance.is_empty() {
            if self.class_imbalance.len() != self.classes {
                return Err(Error::Config("class_imbalance needs one ratio per class".into()));
            }
            if self.class_imbalance.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
                return Err(Error::Config("class_imbalance ratios must lie in (0, 1]".into()));
            }
        }
        if self.target_counts().iter().sum::<usize>() < self.classes {
            return Err(Error::Config("fewer target samples than classes".into()));
        }
        Ok(())
    }

    fn target_counts(&self) -> Vec<usize> {
        (0..self.classes)
            .map(|k| {
                let r = self.class_imbalance.get(k).copied().unwrap_or(1.0);
                ((self.samples_per_class as f64 * r).round() as usize).max(1)
            })
            .collect()
    }

    /// Class means of the blobs generator.
    pub fn blob_means(&self) -> Vec<[f64; 2]> {
        let radius = self.separation * self.noise_std;
        (0..self.classes)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / self.classes as f64;
                [radius * a.cos(), radius * a.sin()]
            })
            .collect()
    }

    /// Maps a source-space point to its target-space position.
    pub fn transform(&self, p: [f64; 2]) -> [f64; 2] {
        let pivot = match self.generator {
            Generator::Blobs => [0.0, 0.0],
            Generator::Moons => MOONS_MIDPOINT,
        };
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let (x, y) = (p[0] - pivot[0], p[1] - pivot[1]);
        [
            c * x - s * y + pivot[0] + self.translation[0],
            s * x + c * y + pivot[1] + self.translation[1],
        ]
    }

    /// Generates the (source, target) pair; both carry labels, and the
    /// target's are meant only for evaluation.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        match self.generator {
            Generator::Blobs => gen_blobs(self),
            Generator::Moons => gen_moons(self),
        }
    }
}

const MOONS_MIDPOINT: [f64; 2] = [0.5, 0.25];

type Sampler<'a> = dyn FnMut(usize, &mut ChaCha8Rng) -> [f64; 2] + 'a;

fn assemble(
    spec: &ShiftSpec,
    rng: &mut ChaCha8Rng,
    counts: &[usize],
    domain: Domain,
    sample: &mut Sampler<'_>,
) -> Result<Dataset> {
    let mut rows: Vec<([f64; 2], usize)> = Vec::new();
    for (k, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let p = sample(k, rng);
            let p = if domain == Domain::Target { spec.transform(p) } else { p };
            rows.push((p, k));
        }
    }
    rows.shuffle(rng);
    let features = Tensor::from_rows(&rows.iter().map(|(p, _)| *p).collect::<Vec<_>>())?;
    let labels = rows.iter().map(|(_, k)| *k).collect();
    let name = format!("{:?}-{domain}", spec.generator).to_lowercase();
    Dataset::labeled(name, domain, features, labels)
}

/// Isotropic Gaussian blobs; see [`ShiftSpec`].
pub fn gen_blobs(spec: &ShiftSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let means = spec.blob_means();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sample = |k: usize, rng: &mut ChaCha8Rng| [means[k][0] + noise.sample(rng), means[k][1] + noise.sample(rng)];
    let source_counts = vec![spec.samples_per_class; spec.classes];
    let source = assemble(spec, &mut rng, &source_counts, Domain::Source, &mut sample)?;
    let target = assemble(spec, &mut rng, &spec.target_counts(), Domain::Target, &mut sample)?;
    Ok((source, target))
}

/// Point on the noise-free moon of class `k` at arc parameter `t ∈ [0, π]`.
pub fn moon_point(k: usize, t: f64) -> [f64; 2] {
    if k == 0 {
        [t.cos(), t.sin()]
    } else {
        [1.0 - t.cos(), 0.5 - t.sin()]
    }
}

/// Two interleaved half circles; see [`ShiftSpec`].
pub fn gen_moons(spec: &ShiftSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    if spec.classes != 2 {
        return Err(Error::Config("moons generator requires exactly 2 classes".into()));
    }
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let arc = Uniform::new_inclusive(0.0, std::f64::consts::PI).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sample = |k: usize, rng: &mut ChaCha8Rng| {
        let p = moon_point(k, arc.sample(rng));
        [p[0] + noise.sample(rng), p[1] + noise.sample(rng)]
    };
    let source_counts = vec![spec.samples_per_class; 2];
    let source = assemble(spec, &mut rng, &source_counts, Domain::Source, &mut sample)?;
    let target = assemble(spec, &mut rng, &spec.target_counts(), Domain::Target, &mut sample)?;
    Ok((source, target))
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads `f0,...,f{D-1}[,label]`. Labels are `1..=K` or `-1` for unlabeled;
/// `classes`, when given, bounds the label range.
pub fn load_csv(path: &Path, domain: Domain, classes: Option<usize>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers().map_err(|e| parse_err(path, e.to_string()))?.clone();
    let mut dim = 0;
    let mut has_label = false;
    for (i, h) in headers.iter().enumerate() {
        if h == format!("f{i}") && !has_label {
            dim += 1;
        } else if h == "label" && i == headers.len() - 1 {
            has_label = true;
        } else {
            return Err(parse_err(path, format!("unexpected header column `{h}` at position {i}")));
        }
    }
    if dim == 0 {
        return Err(parse_err(path, "no feature columns"));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let row = line + 2;
        for cell in record.iter().take(dim) {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(path, format!("line {row}: non-numeric cell `{cell}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, format!("line {row}: non-finite cell `{cell}`")));
            }
            data.push(v);
        }
        if has_label {
            let cell = record[dim].trim();
            let l: i64 = cell
                .parse()
                .map_err(|_| parse_err(path, format!("line {row}: label `{cell}` is not an integer")))?;
            let label = match l {
                -1 => None,
                l if l >= 1 && classes.is_none_or(|k| l as usize <= k) => Some(l as usize - 1),
                l => {
                    return Err(Error::LabelOutOfRange {
                        label: l,
                        classes: classes.unwrap_or(0),
                    })
                }
            };
            labels.push(label);
        }
    }
    let n = data.len() / dim;
    if n == 0 {
        return Err(parse_err(path, "no data rows"));
    }
    let name = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    Dataset::new(name, domain, Tensor::matrix(n, dim, data)?, has_label.then_some(labels))
}

/// Writes the format read by [`load_csv`]. Floats use the shortest
/// representation that parses back to the identical value.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let header: Vec<String> = (0..dataset.dim()).map(|i| format!("f{i}")).collect();
    out.push_str(&header.join(","));
    if dataset.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in dataset.features.row_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&cells.join(","));
        if let Some(labels) = &dataset.labels {
            match labels[i] {
                Some(l) => out.push_str(&format!(",{}", l + 1)),
                None => out.push_str(",-1"),
            }
        }
        out.push('\n');
    }
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Splits into disjoint (train, test) parts. Stratified by label when the
/// dataset is labeled (unlabeled rows form their own stratum); each labeled
/// class needs at least two rows so both sides receive one.
pub fn split(dataset: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let n = dataset.len();
    let mut strata: Vec<(Option<usize>, Vec<usize>)> = Vec::new();
    match &dataset.labels {
        Some(labels) => {
            let k = dataset.num_classes().unwrap_or(0);
            for class in (0..k).map(Some).chain(std::iter::once(None)) {
                let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                if !idx.is_empty() {
                    strata.push((class, idx));
                }
            }
        }
        None => strata.push((None, (0..n).collect())),
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in strata {
        if idx.len() < 2 {
            return Err(match class {
                Some(c) => Error::invalid(format!("class {} has fewer than 2 samples to split", c + 1)),
                None => Error::invalid("fewer than 2 samples to split"),
            });
        }
        idx.shuffle(&mut rng);
        let take = ((idx.len() as f64 * ratio).round() as usize).clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..take]);
        test.extend_from_slice(&idx[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((
        dataset.select(&train, format!("{}-train", dataset.name)),
        dataset.select(&test, format!("{}-test", dataset.name)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_are_deterministic_and_sized() {
        let spec = ShiftSpec::blobs_3x30(0);
        let (s1, t1) = spec.generate().unwrap();
        let (s2, t2) = spec.generate().unwrap();
        assert_eq!(s1, s2);
        assert_eq!(t1, t2);
        assert_eq!(s1.len(), 600);
        assert_eq!(t1.len(), 600);
        assert_eq!(s1.dim(), 2);
        assert_eq!(s1.num_classes(), Some(3));
    }

    #[test]
    fn imbalance_changes_target_counts() {
        let spec = ShiftSpec {
            class_imbalance: vec![1.0, 0.5, 0.25],
            ..ShiftSpec::blobs_3x30(1)
        };
        let (_, t) = spec.generate().unwrap();
        let labels = t.full_labels().unwrap();
        let counts: Vec<usize> = (0..3).map(|k| labels.iter().filter(|&&l| l == k).count()).collect();
        assert_eq!(counts, vec![200, 100, 50]);
    }

    #[test]
    fn half_turn_swaps_symmetric_pair() {
        let spec = ShiftSpec {
            classes: 2,
            rotation_deg: 180.0,
            translation: [0.0, 0.0],
            ..ShiftSpec::blobs_3x30(0)
        };
        let means = spec.blob_means();
        let moved = spec.transform(means[0]);
        assert!((moved[0] - means[1][0]).abs() < 1e-12);
        assert!((moved[1] - means[1][1]).abs() < 1e-12);
    }

    #[test]
    fn moons_without_noise_lie_on_arcs() {
        let spec = ShiftSpec {
            generator: Generator::Moons,
            classes: 2,
            samples_per_class: 50,
            noise_std: 0.0,
            rotation_deg: 0.0,
            translation: [0.0, 0.0],
            ..ShiftSpec::blobs_3x30(3)
        };
        let (s, _) = spec.generate().unwrap();
        let labels = s.full_labels().unwrap();
        for (row, &k) in s.features().row_iter().zip(&labels) {
            let (cx, cy) = if k == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((row[0] - cx).powi(2) + (row[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-12);
            if k == 0 {
                assert!(row[1] >= -1e-12);
            } else {
                assert!(row[1] <= 0.5 + 1e-12);
            }
        }
    }

    #[test]
    fn moons_rotate_about_midpoint() {
        let spec = ShiftSpec {
            generator: Generator::Moons,
            classes: 2,
            samples_per_class: 20,
            noise_std: 0.0,
            rotation_deg: 30.0,
            translation: [0.0, 0.0],
            ..ShiftSpec::blobs_3x30(4)
        };
        let (_, t) = spec.generate().unwrap();
        let (s, c) = (-30f64).to_radians().sin_cos();
        let labels = t.full_labels().unwrap();
        for (row, &k) in t.features().row_iter().zip(&labels) {
            let (x, y) = (row[0] - 0.5, row[1] - 0.25);
            let back = [c * x - s * y + 0.5, s * x + c * y + 0.25];
            let (cx, cy) = if k == 0 { (0.0, 0.0) } else { (1.0, 0.5) };
            let r = ((back[0] - cx).powi(2) + (back[1] - cy).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn spec_validation() {
        let bad = ShiftSpec {
            generator: Generator::Moons,
            ..ShiftSpec::blobs_3x30(0)
        };
        assert!(bad.generate().is_err());
        let bad = ShiftSpec {
            rotation_deg: 360.0,
            ..ShiftSpec::blobs_3x30(0)
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_round_trip_and_partial_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = Dataset::new(
            "d",
            Domain::Target,
            Tensor::from_rows(&[[0.1, -2.5], [1e-17, 3.0], [0.3333333333333333, 7.0]]).unwrap(),
            Some(vec![Some(0), None, Some(2)]),
        )
        .unwrap();
        save_csv(&ds, &path).unwrap();
        let back = load_csv(&path, Domain::Target, Some(3)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_without_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "f0,f1\n1,2\n3,4\n5,6\n").unwrap();
        let ds = load_csv(&path, Domain::Source, None).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(ds.labels().is_none());
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f0,f1\n1,2\n3\n").unwrap();
        assert!(matches!(load_csv(&path, Domain::Source, None), Err(Error::Parse { .. })));
        std::fs::write(&path, "f0,f1\n1,x\n").unwrap();
        assert!(matches!(load_csv(&path, Domain::Source, None), Err(Error::Parse { .. })));
        std::fs::write(&path, "f0,label\n1,4\n").unwrap();
        assert!(matches!(load_csv(&path, Domain::Source, Some(3)), Err(Error::LabelOutOfRange { label: 4, .. })));
        std::fs::write(&path, "f0,label\n1,0\n").unwrap();
        assert!(load_csv(&path, Domain::Source, None).is_err());
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(load_csv(&path, Domain::Source, None).is_err());
    }

    #[test]
    fn split_is_stratified_partition() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let x = Tensor::matrix(100, 1, (0..100).map(f64::from).collect()).unwrap();
        let ds = Dataset::labeled("b", Domain::Target, x, labels).unwrap();
        let (a, b) = split(&ds, 0.5, 9).unwrap();
        assert_eq!((a.len(), b.len()), (50, 50));
        let la = a.full_labels().unwrap();
        assert_eq!(la.iter().filter(|&&l| l == 0).count(), 25);
        let mut all: Vec<f64> = a.features().data().iter().chain(b.features().data()).copied().collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..100).map(f64::from).collect::<Vec<_>>());
        assert_eq!(split(&ds, 0.5, 9).unwrap(), (a, b));
    }

    #[test]
    fn split_errors() {
        let ds = Dataset::labeled("s", Domain::Target, Tensor::zeros(&[3, 1]), vec![0, 0, 1]).unwrap();
        assert!(split(&ds, 0.5, 0).is_err());
        assert!(split(&ds, 1.0, 0).is_err());
        let unl = ds.without_labels();
        let (a, b) = split(&unl, 0.5, 0).unwrap();
        assert_eq!(a.len() + b.len(), 3);
    }

    #[test]
    fn eval_labels_score_only_labeled_rows() {
        let ds = Dataset::new("e", Domain::Target, Tensor::zeros(&[3, 1]), Some(vec![Some(0), None, Some(1)])).unwrap();
        let ev = ds.eval_labels().unwrap();
        assert_eq!(ev.accuracy(&[0, 1, 0]), 0.5);
    }
}
