//! Datasets: the synthetic oval-track generator, chunked subsampling, CSV
//! ingestion and export, and standardization.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dist::{standard_normal_matrix, standard_normal_vector};
use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::Sequence;
use crate::SeedRng;

pub const NASCAR_GENERATOR_VERSION: &str = "nascar-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Nascar {
        generator_version: String,
        seed: u64,
        runs: usize,
        length: usize,
        obs_dim: usize,
        noise_scale: f64,
    },
    Csv {
        path: String,
    },
}

/// Where chunks are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleScope {
    /// `round(fraction · S)` chunks from every sequence.
    #[default]
    PerRun,
    /// `round(fraction · S)` chunks in total, from all sequences' chunks.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub splits: usize,
    pub fraction: f64,
    #[serde(default)]
    pub scope: SampleScope,
    pub seed: u64,
    pub chunk_len: usize,
    /// `(source sequence, chunk index)` of every kept chunk, in output order.
    pub kept: Vec<(usize, usize)>,
}

/// `standardized = (raw − mean) / scale`, per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: DataSource,
    #[serde(default)]
    pub split: Option<SplitRecord>,
    #[serde(default)]
    pub standardization: Option<Standardization>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub sequences: Vec<Sequence>,
    pub labels: Option<Vec<Vec<usize>>>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn obs_dim(&self) -> usize {
        self.sequences.first().and_then(|s| s.first()).map_or(0, |y| y.len())
    }

    pub fn total_len(&self) -> usize {
        self.sequences.iter().map(|s| s.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.sequences.len() {
            return Err(Error::Data("sequence ids and sequences differ in number".into()));
        }
        let n = self.obs_dim();
        if self.sequences.iter().flatten().any(|y| y.len() != n) {
            return Err(Error::Data("observations have inconsistent dimensions".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.sequences.len() {
                return Err(Error::Data("labels and sequences differ in number".into()));
            }
            for (i, (l, s)) in labels.iter().zip(&self.sequences).enumerate() {
                if l.len() != s.len() {
                    return Err(Error::Data(format!(
                        "sequence {} has {} labels for {} observations",
                        self.ids[i],
                        l.len(),
                        s.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NascarConfig {
    pub runs: usize,
    pub length: usize,
    pub obs_dim: usize,
    pub noise_scale: f64,
}

impl Default for NascarConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            length: 12_000,
            obs_dim: 10,
            noise_scale: 0.1,
        }
    }
}

/// Geometry of the oval: turn centers at `(±FOCUS, 0)`, straights at `y = ±RADIUS`.
const FOCUS: f64 = 10.0;
const RADIUS: f64 = 5.0;
const TURN_RATE: f64 = 0.05;
const STRAIGHT_SPEED: f64 = RADIUS * TURN_RATE;
const STRAIGHT_PULL: f64 = 0.9;
const DYNAMICS_STD: f64 = 0.01;

/// Largest latent norm the generator is designed to stay under.
pub const NASCAR_LATENT_BOUND: f64 = FOCUS + 2.0 * RADIUS;

/// The four regimes, 0-based: right turn, top straight, left turn, bottom straight.
fn nascar_mode(x: &Vector) -> usize {
    if x[0] > FOCUS {
        0
    } else if x[0] < -FOCUS {
        2
    } else if x[1] > 0.0 {
        1
    } else {
        3
    }
}

/// `(A, a)` of each regime. Turns rotate counter-clockwise about their
/// center; straights translate and pull the cross-track coordinate back to
/// the track line.
pub fn nascar_dynamics() -> Vec<(Mat, Vector)> {
    let (c, s) = (TURN_RATE.cos(), TURN_RATE.sin());
    let rot = Mat::from_row_slice(2, 2, &[c, -s, s, c]);
    let turn = |cx: f64| {
        let center = Vector::from_vec(vec![cx, 0.0]);
        let bias = (Mat::identity(2, 2) - &rot) * &center;
        (rot.clone(), bias)
    };
    let straight = |dir: f64, line: f64| {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, STRAIGHT_PULL]);
        let bias = Vector::from_vec(vec![dir * STRAIGHT_SPEED, (1.0 - STRAIGHT_PULL) * line]);
        (a, bias)
    };
    vec![turn(FOCUS), straight(-1.0, RADIUS), turn(-FOCUS), straight(1.0, -RADIUS)]
}

fn point_on_track(u: f64) -> Vector {
    let straight = 2.0 * FOCUS;
    let arc = PI * RADIUS;
    let mut u = u.rem_euclid(2.0 * (straight + arc));
    if u < straight {
        return Vector::from_vec(vec![-FOCUS + u, -RADIUS]);
    }
    u -= straight;
    if u < arc {
        let phi = -PI / 2.0 + u / RADIUS;
        return Vector::from_vec(vec![FOCUS + RADIUS * phi.cos(), RADIUS * phi.sin()]);
    }
    u -= arc;
    if u < straight {
        return Vector::from_vec(vec![FOCUS - u, RADIUS]);
    }
    u -= straight;
    let phi = PI / 2.0 + u / RADIUS;
    Vector::from_vec(vec![-FOCUS + RADIUS * phi.cos(), RADIUS * phi.sin()])
}

/// Latent paths and labels of one run.
pub fn nascar_latents<R: Rng + ?Sized>(length: usize, rng: &mut R) -> (Vec<Vector>, Vec<usize>) {
    let dynamics = nascar_dynamics();
    let perimeter = 4.0 * FOCUS + 2.0 * PI * RADIUS;
    let mut x = point_on_track(rng.random::<f64>() * perimeter);
    let mut xs = Vec::with_capacity(length);
    let mut labels = Vec::with_capacity(length);
    for _ in 0..length {
        let k = nascar_mode(&x);
        let (a, b) = &dynamics[k];
        x = a * &x + b + standard_normal_vector(2, rng) * DYNAMICS_STD;
        xs.push(x.clone());
        labels.push(k);
    }
    (xs, labels)
}

/// Simulate `runs` laps of the oval track projected to `obs_dim` dimensions.
pub fn generate_nascar(config: &NascarConfig, seed: u64) -> Result<Dataset> {
    if config.length < 100 {
        return Err(Error::Config(format!("generator length must be at least 100, got {}", config.length)));
    }
    if config.obs_dim < 2 {
        return Err(Error::Config(format!("generator needs obs_dim >= 2, got {}", config.obs_dim)));
    }
    if config.runs == 0 || !(config.noise_scale >= 0.0) || !config.noise_scale.is_finite() {
        return Err(Error::Config("generator needs at least one run and a finite noise scale >= 0".into()));
    }
    let mut rng = SeedRng::seed_from_u64(seed);
    let projection = standard_normal_matrix(config.obs_dim, 2, &mut rng);
    let mut sequences = Vec::with_capacity(config.runs);
    let mut labels = Vec::with_capacity(config.runs);
    for _ in 0..config.runs {
        let (xs, ls) = nascar_latents(config.length, &mut rng);
        let ys = xs
            .iter()
            .map(|x| &projection * x + standard_normal_vector(config.obs_dim, &mut rng) * config.noise_scale)
            .collect();
        sequences.push(ys);
        labels.push(ls);
    }
    Ok(Dataset {
        ids: (0..config.runs).map(|i| format!("run{i}")).collect(),
        sequences,
        labels: Some(labels),
        manifest: Manifest {
            source: DataSource::Nascar {
                generator_version: NASCAR_GENERATOR_VERSION.into(),
                seed,
                runs: config.runs,
                length: config.length,
                obs_dim: config.obs_dim,
                noise_scale: config.noise_scale,
            },
            split: None,
            standardization: None,
        },
    })
}

/// Cut every sequence into `splits` equal chunks (dropping the remainder)
/// and keep `round(fraction · splits)` of them, chosen uniformly without
/// replacement per sequence or from the pooled chunks, as separate sequences.
pub fn chunk_and_sample(data: &Dataset, splits: usize, fraction: f64, scope: SampleScope, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("sample fraction must lie in (0, 1], got {fraction}")));
    }
    if splits == 0 {
        return Err(Error::Config("number of splits must be positive".into()));
    }
    let keep = (fraction * splits as f64).round() as usize;
    if keep == 0 {
        return Err(Error::Config(format!("fraction {fraction} of {splits} splits keeps no chunks")));
    }
    let min_len = data.sequences.iter().map(|s| s.len()).min().unwrap_or(0);
    if splits > min_len {
        return Err(Error::Config(format!(
            "S = {splits} splits exceed sequence length T = {min_len}"
        )));
    }
    let mut rng = SeedRng::seed_from_u64(seed);
    let kept: Vec<(usize, usize)> = match scope {
        SampleScope::PerRun => (0..data.sequences.len())
            .flat_map(|i| {
                let mut picks = index::sample(&mut rng, splits, keep).into_vec();
                picks.sort_unstable();
                picks.into_iter().map(move |j| (i, j))
            })
            .collect(),
        SampleScope::Pooled => {
            let mut picks = index::sample(&mut rng, splits * data.sequences.len(), keep).into_vec();
            picks.sort_unstable();
            picks.into_iter().map(|p| (p / splits, p % splits)).collect()
        }
    };
    let mut out = Dataset {
        ids: Vec::new(),
        sequences: Vec::new(),
        labels: data.labels.as_ref().map(|_| Vec::new()),
        manifest: data.manifest.clone(),
    };
    for &(i, j) in &kept {
        let own_len = data.sequences[i].len() / splits;
        let range = j * own_len..(j + 1) * own_len;
        out.ids.push(format!("{}_c{j}", data.ids[i]));
        out.sequences.push(data.sequences[i][range.clone()].to_vec());
        if let (Some(dst), Some(src)) = (&mut out.labels, &data.labels) {
            dst.push(src[i][range].to_vec());
        }
    }
    out.manifest.split = Some(SplitRecord {
        splits,
        fraction,
        scope,
        seed,
        chunk_len: min_len / splits,
        kept,
    });
    Ok(out)
}

/// Zero-mean, unit-variance features over all pooled time steps.
pub fn standardize(data: &Dataset) -> Result<Dataset> {
    let n = data.obs_dim();
    let count = data.total_len() as f64;
    if count < 2.0 {
        return Err(Error::Data("need at least two observations to standardize".into()));
    }
    let mean = data.sequences.iter().flatten().fold(Vector::zeros(n), |acc, y| acc + y) / count;
    let mut var = Vector::zeros(n);
    for y in data.sequences.iter().flatten() {
        var += (y - &mean).map(|v| v * v);
    }
    var /= count;
    let mut scale = Vec::with_capacity(n);
    for (j, v) in var.iter().enumerate() {
        if !(*v > 1e-300) {
            return Err(Error::Data(format!("feature {j} has zero variance")));
        }
        scale.push(v.sqrt());
    }
    let scale_v = Vector::from_vec(scale.clone());
    let mut out = data.clone();
    for y in out.sequences.iter_mut().flatten() {
        *y = (&*y - &mean).component_div(&scale_v);
    }
    let step = Standardization {
        mean: mean.iter().copied().collect(),
        scale,
    };
    out.manifest.standardization = Some(match &data.manifest.standardization {
        None => step,
        Some(prev) => Standardization {
            mean: (0..n).map(|j| prev.mean[j] + prev.scale[j] * step.mean[j]).collect(),
            scale: (0..n).map(|j| prev.scale[j] * step.scale[j]).collect(),
        },
    });
    Ok(out)
}

/// Undo the recorded standardization.
pub fn destandardize(data: &Dataset) -> Result<Dataset> {
    let Some(st) = &data.manifest.standardization else {
        return Ok(data.clone());
    };
    let mean = Vector::from_vec(st.mean.clone());
    let scale = Vector::from_vec(st.scale.clone());
    let mut out = data.clone();
    for y in out.sequences.iter_mut().flatten() {
        *y = y.component_mul(&scale) + &mean;
    }
    out.manifest.standardization = None;
    Ok(out)
}

/// Which columns of a CSV file hold features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureLayout {
    /// Named columns in the given order; `None` means every column other
    /// than the id and label columns, in file order.
    Columns { names: Option<Vec<String>> },
    /// Raw position and heading; features become `(cos θ, sin θ, x, y)`.
    Bee { x: String, y: String, theta: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub seq_column: String,
    /// Used when present in the header; required if `require_labels`.
    pub label_column: String,
    pub require_labels: bool,
    pub features: FeatureLayout,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            seq_column: "seq".into(),
            label_column: "label".into(),
            require_labels: false,
            features: FeatureLayout::Columns { names: None },
        }
    }
}

/// Features of one honeybee observation.
pub fn bee_features(x: f64, y: f64, theta: f64) -> [f64; 4] {
    [theta.cos(), theta.sin(), x, y]
}

fn column(header: &csv::StringRecord, name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::DataRow {
            row: 1,
            message: format!("missing column {name:?}"),
        })
}

fn cell_f64(record: &csv::StringRecord, idx: usize, row: usize) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("");
    raw.trim().parse::<f64>().map_err(|_| Error::DataRow {
        row,
        message: format!("non-numeric cell {raw:?} in column {}", idx + 1),
    })
}

/// Read sequences grouped by id, in order of first appearance.
pub fn read_csv<Rd: std::io::Read>(reader: Rd, schema: &CsvSchema) -> Result<(Vec<String>, Vec<Sequence>, Option<Vec<Vec<usize>>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Data(format!("cannot read header: {e}")))?
        .clone();
    let seq_idx = column(&header, &schema.seq_column)?;
    let label_idx = header.iter().position(|h| h == schema.label_column);
    if schema.require_labels && label_idx.is_none() {
        return Err(Error::DataRow {
            row: 1,
            message: format!("missing column {:?}", schema.label_column),
        });
    }
    enum Extract {
        Cols(Vec<usize>),
        Bee(usize, usize, usize),
    }
    let extract = match &schema.features {
        FeatureLayout::Columns { names: Some(names) } => {
            Extract::Cols(names.iter().map(|n| column(&header, n)).collect::<Result<_>>()?)
        }
        FeatureLayout::Columns { names: None } => Extract::Cols(
            (0..header.len())
                .filter(|&i| i != seq_idx && Some(i) != label_idx)
                .collect(),
        ),
        FeatureLayout::Bee { x, y, theta } => {
            Extract::Bee(column(&header, x)?, column(&header, y)?, column(&header, theta)?)
        }
    };
    if let Extract::Cols(cols) = &extract {
        if cols.is_empty() {
            return Err(Error::Data("no feature columns".into()));
        }
    }
    let mut order: Vec<String> = Vec::new();
    let mut index_of: HashMap<String, usize> = HashMap::new();
    let mut sequences: Vec<Sequence> = Vec::new();
    let mut labels: Vec<Vec<usize>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Line 1 is the header.
        let row = i + 2;
        let rec = rec.map_err(|e| Error::DataRow {
            row,
            message: format!("malformed row: {e}"),
        })?;
        let id = rec.get(seq_idx).unwrap_or("").to_string();
        let features: Vec<f64> = match &extract {
            Extract::Cols(cols) => cols.iter().map(|&c| cell_f64(&rec, c, row)).collect::<Result<_>>()?,
            Extract::Bee(xi, yi, ti) => {
                bee_features(cell_f64(&rec, *xi, row)?, cell_f64(&rec, *yi, row)?, cell_f64(&rec, *ti, row)?).to_vec()
            }
        };
        let slot = *index_of.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            sequences.push(Vec::new());
            labels.push(Vec::new());
            sequences.len() - 1
        });
        sequences[slot].push(Vector::from_vec(features));
        if let Some(li) = label_idx {
            let raw = rec.get(li).unwrap_or("");
            let label = raw.trim().parse::<usize>().map_err(|_| Error::DataRow {
                row,
                message: format!("label {raw:?} is not a non-negative integer"),
            })?;
            labels[slot].push(label);
        }
    }
    if sequences.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok((order, sequences, label_idx.map(|_| labels)))
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let (ids, sequences, labels) = read_csv(file, schema)?;
    let data = Dataset {
        ids,
        sequences,
        labels,
        manifest: Manifest {
            source: DataSource::Csv {
                path: path.display().to_string(),
            },
            split: None,
            standardization: None,
        },
    };
    data.validate()?;
    Ok(data)
}

/// Full-precision float text used in every CSV the crate writes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write `seq,y0..y{N−1}[,label]`.
pub fn write_csv<W: std::io::Write>(data: &Dataset, writer: W) -> Result<()> {
    let n = data.obs_dim();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["seq".to_string()];
    header.extend((0..n).map(|j| format!("y{j}")));
    if data.labels.is_some() {
        header.push("label".into());
    }
    let csv_err = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (i, seq) in data.sequences.iter().enumerate() {
        for (t, y) in seq.iter().enumerate() {
            let mut rec = vec![data.ids[i].clone()];
            rec.extend(y.iter().map(|v| fmt_f64(*v)));
            if let Some(labels) = &data.labels {
                rec.push(labels[i][t].to_string());
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Data(format!("csv write failed: {e}")))?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(data, std::io::BufWriter::new(file))
}

/// Sidecar path of a data file: `data.csv` → `data.manifest.json`.
pub fn manifest_path(data_path: &Path) -> std::path::PathBuf {
    data_path.with_extension("manifest.json")
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
