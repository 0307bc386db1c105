//! Datasets normalized so that `||x||_2 <= 1` and `|y| <= C_y <= 1`.

use std::f64::consts::PI;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset must contain at least one sample")]
    Empty,
    #[error("sample {index}: ||x||_2 = {norm} exceeds 1")]
    InputNorm { index: usize, norm: f64 },
    #[error("sample {index}: |y| = {value} exceeds C_y = {c_y}")]
    TargetRange { index: usize, value: f64, c_y: f64 },
    #[error("C_y must lie in (0, 1], got {0}")]
    BadCy(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated IDX file: {0}")]
    Truncated(String),
    #[error("label noise needs exactly two target values, found {0}")]
    NotBinary(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Inputs (one row per sample), targets and the target bound `C_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    targets: Array1<f64>,
    c_y: f64,
    split: Split,
}

impl Dataset {
    /// Validates every invariant before constructing.
    pub fn new(inputs: Array2<f64>, targets: Array1<f64>, c_y: f64, split: Split) -> Result<Self, DataError> {
        if inputs.nrows() == 0 {
            return Err(DataError::Empty);
        }
        if inputs.nrows() != targets.len() {
            return Err(DataError::Shape(format!("{} inputs, {} targets", inputs.nrows(), targets.len())));
        }
        if !(c_y > 0.0 && c_y <= 1.0) {
            return Err(DataError::BadCy(c_y));
        }
        for (index, row) in inputs.axis_iter(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if !(norm <= 1.0 + NORM_TOL) {
                return Err(DataError::InputNorm { index, norm });
            }
        }
        for (index, &value) in targets.iter().enumerate() {
            if !(value.abs() <= c_y) {
                return Err(DataError::TargetRange { index, value, c_y });
            }
        }
        Ok(Dataset { inputs, targets, c_y, split })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn c_y(&self) -> f64 {
        self.c_y
    }

    pub fn split_tag(&self) -> Split {
        self.split
    }

    pub fn inputs(&self) -> ArrayView2<'_, f64> {
        self.inputs.view()
    }

    pub fn targets(&self) -> ArrayView1<'_, f64> {
        self.targets.view()
    }

    pub fn input(&self, i: usize) -> Vec<f64> {
        self.inputs.row(i).to_vec()
    }

    /// Copies the rows named by `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Array1<f64>) {
        (self.inputs.select(Axis(0), indices), self.targets.select(Axis(0), indices))
    }

    fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Writes one row per sample: `d` input columns then the target.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (row, y) in self.inputs.axis_iter(Axis(0)).zip(self.targets.iter()) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(y.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the layout written by [`Dataset::write_csv`].
    pub fn read_csv<R: Read>(reader: R, c_y: f64, split: Split) -> Result<Self, DataError> {
        let mut r = csv::Reader::from_reader(reader);
        let d = r
            .headers()?
            .len()
            .checked_sub(1)
            .filter(|&d| d > 0)
            .ok_or_else(|| DataError::Shape("dataset CSV needs at least one input column and a target".into()))?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(DataError::Shape(format!("row has {} fields, expected {}", rec.len(), d + 1)));
            }
            for field in rec.iter().take(d) {
                xs.push(parse_f64(field)?);
            }
            ys.push(parse_f64(&rec[d])?);
        }
        let n = ys.len();
        let inputs = Array2::from_shape_vec((n, d), xs).map_err(|e| DataError::Shape(e.to_string()))?;
        Dataset::new(inputs, Array1::from(ys), c_y, split)
    }
}

fn parse_f64(s: &str) -> Result<f64, DataError> {
    s.trim().parse::<f64>().map_err(|e| DataError::Invalid(format!("bad number {s:?}: {e}")))
}

/// Target function of the regression benchmark, normalized by `1.25 + pi^2/4`.
pub fn regression_target(x: &[f64]) -> f64 {
    (x[0] + x[1] * x[1] + (PI * x[2]).sin()) / (1.25 + PI * PI / 4.0)
}

/// Half side of the input cube `[-1/sqrt(3), 1/sqrt(3)]^3`.
pub fn cube_half_side() -> f64 {
    1.0 / 3f64.sqrt()
}

/// Exact `sup |f*|` on the cube. The supremum sits at `x1 = x2 = 1/sqrt(3)`,
/// `x3 = 1/2` (where `sin(pi x3) = 1`, and `1/2 < 1/sqrt(3)`).
pub fn regression_sup() -> f64 {
    let h = cube_half_side();
    (h + h * h + 1.0) / (1.25 + PI * PI / 4.0)
}

/// `n` points uniform on the cube with `y = f*(x)`. `C_y` is the analytic sup.
pub fn synth_regression(n: usize, seed: u64) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = cube_half_side();
    let mut inputs = Array2::zeros((n, 3));
    let mut targets = Array1::zeros(n);
    for i in 0..n {
        let x: [f64; 3] = std::array::from_fn(|_| rng.random_range(-h..=h));
        inputs.row_mut(i).assign(&ArrayView1::from(&x));
        targets[i] = regression_target(&x);
    }
    Dataset::new(inputs, targets, regression_sup(), Split::Train)
}

/// Binary toy classification on the same cube: label `C_y` where
/// `f*(x) > 0`, else `0`.
pub fn synth_classification(n: usize, c_y: f64, seed: u64) -> Result<Dataset, DataError> {
    let reg = synth_regression(n, seed)?;
    let targets = reg.targets.mapv(|v| if v > 0.0 { c_y } else { 0.0 });
    Dataset::new(reg.inputs, targets, c_y, Split::Train)
}

/// Resamples the labels of a uniformly chosen `floor(fraction * n)` subset
/// uniformly from the two label values.
pub fn inject_label_noise(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(DataError::Invalid(format!("noise fraction must be in [0,1], got {fraction}")));
    }
    let mut values: Vec<f64> = ds.targets.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    if values.len() != 2 {
        return Err(DataError::NotBinary(values.len()));
    }
    let n = ds.len();
    let k = (fraction * n as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, n, k);
    let mut targets = ds.targets.clone();
    for i in chosen.iter() {
        targets[i] = values[rng.random_range(0..2)];
    }
    Dataset::new(ds.inputs.clone(), targets, ds.c_y, ds.split)
}

/// Number of samples whose label would be resampled at `fraction`.
pub fn noise_set_size(n: usize, fraction: f64) -> usize {
    (fraction * n as f64).floor() as usize
}

/// Uniform disjoint split. Returns `(train, test)`.
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let (tr, te) = split_indices(ds.len(), train_fraction, seed)?;
    let (xa, ya) = ds.select(&tr);
    let (xb, yb) = ds.select(&te);
    Ok((Dataset::new(xa, ya, ds.c_y, Split::Train)?, Dataset::new(xb, yb, ds.c_y, Split::Test)?))
}

/// Index sets used by [`split`]; their concatenation is a permutation of `0..n`.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::Invalid(format!("train fraction must be in (0,1), got {train_fraction}")));
    }
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(DataError::Invalid(format!("split of {n} samples at {train_fraction} leaves one side empty")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = perm.split_off(n_train);
    Ok((perm, test))
}

/// Relabels a dataset as a test split.
pub fn as_test(ds: Dataset) -> Dataset {
    ds.with_split(Split::Test)
}

/// Raw contents of an IDX image/label pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        self.labels.len()
    }
}

fn read_u32_be(buf: &[u8], at: usize, what: &str) -> Result<u32, DataError> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated(format!("missing {what}")))
}

/// Parses big-endian IDX image (`0x00000803`) and label (`0x00000801`) files.
pub fn read_idx(images: &Path, labels: &Path) -> Result<IdxImages, DataError> {
    parse_idx(&fs::read(images)?, &fs::read(labels)?)
}

pub fn parse_idx(img: &[u8], lab: &[u8]) -> Result<IdxImages, DataError> {
    let magic = read_u32_be(img, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic { found: magic, expected: IDX_IMAGES_MAGIC });
    }
    let count = read_u32_be(img, 4, "image count")? as usize;
    let rows = read_u32_be(img, 8, "row count")? as usize;
    let cols = read_u32_be(img, 12, "column count")? as usize;
    let need = count * rows * cols;
    let pixels = img
        .get(16..16 + need)
        .ok_or_else(|| {
            DataError::Truncated(format!("expected {need} pixel bytes, found {}", img.len().saturating_sub(16)))
        })?
        .to_vec();

    let magic = read_u32_be(lab, 0, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic { found: magic, expected: IDX_LABELS_MAGIC });
    }
    let n_labels = read_u32_be(lab, 4, "label count")? as usize;
    if n_labels != count {
        return Err(DataError::Shape(format!("{count} images but {n_labels} labels")));
    }
    let labels =
        lab.get(8..8 + count).ok_or_else(|| DataError::Truncated(format!("expected {count} label bytes")))?.to_vec();
    Ok(IdxImages { rows, cols, pixels, labels })
}

/// Serializes an image/label pair in IDX format.
pub fn encode_idx(data: &IdxImages) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::with_capacity(16 + data.pixels.len());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(data.count() as u32).to_be_bytes());
    img.extend_from_slice(&(data.rows as u32).to_be_bytes());
    img.extend_from_slice(&(data.cols as u32).to_be_bytes());
    img.extend_from_slice(&data.pixels);
    let mut lab = Vec::with_capacity(8 + data.labels.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(data.count() as u32).to_be_bytes());
    lab.extend_from_slice(&data.labels);
    (img, lab)
}

pub fn write_idx(data: &IdxImages, images: &Path, labels: &Path) -> Result<(), DataError> {
    let (img, lab) = encode_idx(data);
    fs::write(images, img)?;
    fs::write(labels, lab)?;
    Ok(())
}

/// Loads an IDX pair, keeps the two labels in `keep` (smaller -> 0, larger ->
/// `C_y`), scales pixels to `[0,1]` and divides each image by
/// `max(1, ||x||_2)`. Images are vectorized row-major.
pub fn load_idx(images: &Path, labels: &Path, keep: [u8; 2], c_y: f64) -> Result<Dataset, DataError> {
    idx_to_dataset(&read_idx(images, labels)?, keep, c_y)
}

pub fn idx_to_dataset(raw: &IdxImages, keep: [u8; 2], c_y: f64) -> Result<Dataset, DataError> {
    if keep[0] == keep[1] {
        return Err(DataError::Invalid("keep set needs two distinct labels".into()));
    }
    let (lo, hi) = (keep[0].min(keep[1]), keep[0].max(keep[1]));
    let d = raw.rows * raw.cols;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &label) in raw.labels.iter().enumerate() {
        let y = if label == lo {
            0.0
        } else if label == hi {
            c_y
        } else {
            continue;
        };
        let img: Vec<f64> = raw.pixels[i * d..(i + 1) * d].iter().map(|&p| p as f64 / 255.0).collect();
        let norm = img.iter().map(|v| v * v).sum::<f64>().sqrt();
        let div = norm.max(1.0);
        xs.extend(img.into_iter().map(|v| v / div));
        ys.push(y);
    }
    if ys.is_empty() {
        return Err(DataError::Empty);
    }
    let inputs = Array2::from_shape_vec((ys.len(), d), xs).map_err(|e| DataError::Shape(e.to_string()))?;
    Dataset::new(inputs, Array1::from(ys), c_y, Split::Train)
}
