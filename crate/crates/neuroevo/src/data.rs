//! Benchmark datasets: generation, digits file ingestion, normalization and
//! train/validation/test splitting.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{contract, Error, Result};
use crate::mat::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Regression,
    Autoencode,
    Classification,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Mat,
    pub targets: Mat,
    pub kind: DataKind,
    pub class_count: Option<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            targets: self.targets.select_rows(idx),
            kind: self.kind,
            class_count: self.class_count,
        }
    }

    /// Writes `x1..xd,y1..yq` rows as comma-separated text.
    pub fn write_delimited<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let d = self.inputs.cols();
        let q = self.targets.cols();
        let header: Vec<String> = (1..=d)
            .map(|i| format!("x{i}"))
            .chain((1..=q).map(|i| format!("y{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = self
                .inputs
                .row(k)
                .iter()
                .chain(self.targets.row(k))
                .map(|v| format!("{v}"))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// The benchmark problem catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemId {
    Syn5,
    Sinc,
    IncSinc,
    Sinc2d,
    Sinc3d,
    AutoencCircle,
    AutoencSpiral,
    AutoencSphere,
    TwoCircles,
    TwoSpirals,
    Digits,
}

impl ProblemId {
    pub fn all() -> &'static [ProblemId] {
        use ProblemId::*;
        &[
            Syn5,
            Sinc,
            IncSinc,
            Sinc2d,
            Sinc3d,
            AutoencCircle,
            AutoencSpiral,
            AutoencSphere,
            TwoCircles,
            TwoSpirals,
            Digits,
        ]
    }

    pub fn name(&self) -> &'static str {
        use ProblemId::*;
        match self {
            Syn5 => "syn5",
            Sinc => "sinc",
            IncSinc => "inc-sinc",
            Sinc2d => "sinc2d",
            Sinc3d => "sinc3d",
            AutoencCircle => "autoenc-circle",
            AutoencSpiral => "autoenc-spiral",
            AutoencSphere => "autoenc-sphere",
            TwoCircles => "two-circles",
            TwoSpirals => "two-spirals",
            Digits => "digits",
        }
    }

    pub fn kind(&self) -> DataKind {
        use ProblemId::*;
        match self {
            Syn5 | Sinc | IncSinc | Sinc2d | Sinc3d => DataKind::Regression,
            AutoencCircle | AutoencSpiral | AutoencSphere => DataKind::Autoencode,
            TwoCircles | TwoSpirals | Digits => DataKind::Classification,
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::all()
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Contract(format!("unknown problem {s:?}")))
    }
}

fn sinc10(x: f64) -> f64 {
    let t = 10.0 * x;
    if t == 0.0 {
        1.0
    } else {
        t.sin() / t
    }
}

/// sin(5r)/(15r) with its removable singularity: the limit at r = 0 is 1/3.
fn sinc_radial(r: f64) -> f64 {
    if r == 0.0 {
        1.0 / 3.0
    } else {
        (5.0 * r).sin() / (15.0 * r)
    }
}

const TWO_CIRCLES_RADIUS: f64 = 0.39894;

fn inside_two_circles(x: &[f64]) -> bool {
    let d2 = |cx: f64, cy: f64| (x[0] - cx).powi(2) + (x[1] - cy).powi(2);
    let r2 = TWO_CIRCLES_RADIUS * TWO_CIRCLES_RADIUS;
    d2(0.5, 0.5) <= r2 || d2(-0.5, -0.5) <= r2
}

fn one_hot(class: usize, q: usize) -> Vec<f64> {
    let mut v = vec![0.0; q];
    v[class] = 1.0;
    v
}

/// Generates one dataset from the catalog. Regression targets receive
/// additive N(0, noise_sd^2) noise; autoencode targets stay equal to the
/// noiseless inputs; classification labels are exact.
pub fn generate<R: Rng>(
    problem: ProblemId,
    sample_count: usize,
    noise_sd: f64,
    rng: &mut R,
) -> Result<Dataset> {
    contract!(sample_count >= 1, "sample_count must be at least 1");
    contract!(noise_sd >= 0.0, "noise_sd must be nonnegative");
    let noise = Normal::new(0.0, noise_sd.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Contract(format!("bad noise sd: {e}")))?;
    let draw_noise = |rng: &mut R| if noise_sd == 0.0 { 0.0 } else { noise.sample(rng) };

    let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(sample_count);
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(sample_count);
    let mut class_count = None;

    use ProblemId::*;
    match problem {
        Syn5 => {
            for _ in 0..sample_count {
                let x = rng.gen_range(-1.0..1.0);
                let y = (x - 0.5) * (x - 0.5) * (0.1 + (x + 0.65) * (x + 0.65));
                inputs.push(vec![x]);
                targets.push(vec![y + draw_noise(rng)]);
            }
        }
        Sinc => {
            for _ in 0..sample_count {
                let x = rng.gen_range(-1.0..1.0);
                inputs.push(vec![x]);
                targets.push(vec![sinc10(x) + draw_noise(rng)]);
            }
        }
        IncSinc => {
            for _ in 0..sample_count {
                let x = rng.gen_range(-1.0..1.0);
                inputs.push(vec![x]);
                targets.push(vec![x / 2.0 + sinc10(x) + draw_noise(rng)]);
            }
        }
        Sinc2d | Sinc3d => {
            let d = if problem == Sinc2d { 2 } else { 3 };
            for _ in 0..sample_count {
                let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                inputs.push(x);
                targets.push(vec![sinc_radial(r) + draw_noise(rng)]);
            }
        }
        AutoencCircle => {
            for _ in 0..sample_count {
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let x = vec![phi.cos(), phi.sin()];
                targets.push(x.clone());
                inputs.push(x);
            }
        }
        AutoencSpiral => {
            for _ in 0..sample_count {
                let phi = rng.gen_range(0.0..6.0 * std::f64::consts::PI);
                let x = vec![phi.cos(), phi.sin(), phi];
                targets.push(x.clone());
                inputs.push(x);
            }
        }
        AutoencSphere => {
            for _ in 0..sample_count {
                // Uniform on the unit sphere: uniform z and angle.
                let z: f64 = rng.gen_range(-1.0..1.0);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                let x = vec![r * phi.cos(), r * phi.sin(), z];
                targets.push(x.clone());
                inputs.push(x);
            }
        }
        TwoCircles => {
            class_count = Some(2);
            for _ in 0..sample_count {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let class = if inside_two_circles(&x) { 0 } else { 1 };
                inputs.push(x);
                targets.push(one_hot(class, 2));
            }
        }
        TwoSpirals => {
            class_count = Some(2);
            // Two interleaved three-turn spirals starting at the origin,
            // sampled uniformly in the arc parameter; the second spiral is
            // the first rotated by half a turn.
            let n0 = sample_count - sample_count / 2;
            for class in 0..2 {
                let n = if class == 0 { n0 } else { sample_count / 2 };
                for j in 0..n {
                    let t = (j + 1) as f64 / n as f64;
                    let phi = 6.0 * std::f64::consts::PI * t;
                    let sign = if class == 0 { 1.0 } else { -1.0 };
                    inputs.push(vec![sign * t * phi.cos(), sign * t * phi.sin()]);
                    targets.push(one_hot(class, 2));
                }
            }
        }
        Digits => {
            return Err(Error::Contract(
                "digits is file-based; use load_digits with the data file path".into(),
            ));
        }
    }

    Ok(Dataset {
        inputs: Mat::from_rows(&inputs)?,
        targets: Mat::from_rows(&targets)?,
        kind: problem.kind(),
        class_count,
    })
}

/// Loads the handwritten-digits file (per line: 16 comma-separated numeric
/// features, then an integer label 0-9) and splits it 1000/1000/1000.
pub fn load_digits<R: Rng>(path: &Path, rng: &mut R) -> Result<SplitDataset> {
    let file = std::fs::File::open(path)?;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 17 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 17 comma-separated fields, got {}", fields.len()),
            });
        }
        let mut feat = Vec::with_capacity(16);
        for f in &fields[..16] {
            feat.push(f.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad feature value {f:?}"),
            })?);
        }
        let label: usize = fields[16].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad label {:?}", fields[16]),
        })?;
        if label > 9 {
            return Err(Error::Parse { line: lineno, msg: format!("label {label} out of 0-9") });
        }
        inputs.push(feat);
        targets.push(one_hot(label, 10));
    }
    contract!(
        inputs.len() >= 3000,
        "digits file has {} samples, need at least 3000",
        inputs.len()
    );
    let full = Dataset {
        inputs: Mat::from_rows(&inputs)?,
        targets: Mat::from_rows(&targets)?,
        kind: DataKind::Classification,
        class_count: Some(10),
    };
    split(&full, (1000, 1000, 1000), rng)
}

/// Draws disjoint random train/validation/test subsets of the given sizes.
pub fn split<R: Rng>(
    data: &Dataset,
    sizes: (usize, usize, usize),
    rng: &mut R,
) -> Result<SplitDataset> {
    let (a, b, c) = sizes;
    contract!(
        a + b + c <= data.len(),
        "split sizes {a}+{b}+{c} exceed {} samples",
        data.len()
    );
    let mut idx: Vec<usize> = (0..data.len()).collect();
    // Fisher-Yates keeps the draw order independent of sample count layout.
    for i in (1..idx.len()).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    Ok(SplitDataset {
        train: data.take_rows(&idx[..a]),
        validation: data.take_rows(&idx[a..a + b]),
        test: data.take_rows(&idx[a + b..a + b + c]),
    })
}

/// Per-dimension shift/scale fitted on a training set.
#[derive(Debug, Clone)]
pub struct NormStats {
    pub input_mean: Vec<f64>,
    pub input_sd: Vec<f64>,
    /// Present for regression and autoencode targets; classification targets
    /// stay one-hot.
    pub target_mean: Option<Vec<f64>>,
    pub target_sd: Option<Vec<f64>>,
    /// True when some dimension had zero variance and was left unscaled.
    pub degenerate: bool,
}

fn column_stats(m: &Mat) -> (Vec<f64>, Vec<f64>, bool) {
    let (k, c) = (m.rows(), m.cols());
    let mut mean = vec![0.0; c];
    for r in 0..k {
        for (j, v) in m.row(r).iter().enumerate() {
            mean[j] += v;
        }
    }
    for v in &mut mean {
        *v /= k as f64;
    }
    let mut var = vec![0.0; c];
    for r in 0..k {
        for (j, v) in m.row(r).iter().enumerate() {
            let d = v - mean[j];
            var[j] += d * d;
        }
    }
    let mut degenerate = false;
    let sd: Vec<f64> = var
        .iter()
        .map(|&v| {
            let s = (v / k as f64).sqrt();
            if s < 1e-15 {
                degenerate = true;
                1.0
            } else {
                s
            }
        })
        .collect();
    (mean, sd, degenerate)
}

fn apply_stats(m: &Mat, mean: &[f64], sd: &[f64]) -> Mat {
    let mut out = m.clone();
    for r in 0..out.rows() {
        for (j, v) in out.row_mut(r).iter_mut().enumerate() {
            *v = (*v - mean[j]) / sd[j];
        }
    }
    out
}

/// Normalizes inputs (and non-classification targets) to zero mean and unit
/// variance per dimension; returns the stats for held-out sets.
pub fn fit_normalize(data: &Dataset) -> Result<(Dataset, NormStats)> {
    contract!(data.len() >= 2, "normalization needs at least 2 samples");
    let (im, isd, d1) = column_stats(&data.inputs);
    let inputs = apply_stats(&data.inputs, &im, &isd);
    let (targets, tm, tsd, d2) = match data.kind {
        DataKind::Classification => (data.targets.clone(), None, None, false),
        _ => {
            let (tm, tsd, d2) = column_stats(&data.targets);
            (apply_stats(&data.targets, &tm, &tsd), Some(tm), Some(tsd), d2)
        }
    };
    let stats = NormStats {
        input_mean: im,
        input_sd: isd,
        target_mean: tm,
        target_sd: tsd,
        degenerate: d1 || d2,
    };
    Ok((
        Dataset { inputs, targets, kind: data.kind, class_count: data.class_count },
        stats,
    ))
}

impl NormStats {
    /// Applies fitted stats to a held-out set.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        contract!(
            data.inputs.cols() == self.input_mean.len(),
            "input dim {} != fitted dim {}",
            data.inputs.cols(),
            self.input_mean.len()
        );
        let inputs = apply_stats(&data.inputs, &self.input_mean, &self.input_sd);
        let targets = match (&self.target_mean, &self.target_sd) {
            (Some(tm), Some(tsd)) => {
                contract!(data.targets.cols() == tm.len(), "target dim mismatch");
                apply_stats(&data.targets, tm, tsd)
            }
            _ => data.targets.clone(),
        };
        Ok(Dataset { inputs, targets, kind: data.kind, class_count: data.class_count })
    }
}
