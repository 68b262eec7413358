//! The `generate`, `fit` and `evaluate` commands.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};

use crate::config::{RunConfig, SourceBlock};
use crate::data::{
    chunk_and_sample, fmt_f64, generate_nascar, load_csv, load_manifest, manifest_path, save_csv, save_manifest,
    standardize, CsvSchema, Dataset,
};
use crate::error::{Error, Result};
use crate::gibbs::{chain_seed, Chain, Priors};
use crate::metrics::{report, score_sequences, FitReport, SegmentationScore};
use crate::model::ModelConfig;
use crate::SeedRng;

const SPLIT_STREAM: u64 = u64::MAX;

pub const DATA_FILE: &str = "data.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SEGMENTATION_FILE: &str = "segmentation.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

pub fn checkpoint_name(chain: usize) -> String {
    format!("checkpoint_chain{chain}.json")
}

fn split_seed(seed: u64) -> u64 {
    let mut rng = SeedRng::seed_from_u64(seed);
    rng.set_stream(SPLIT_STREAM);
    rng.random()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The dataset a config describes: generated or loaded, then chunked and
/// standardized as configured.
pub fn build_dataset(config: &RunConfig) -> Result<Dataset> {
    let seed = config.data_seed();
    let mut data = match &config.data.source {
        SourceBlock::Nascar(generator) => generate_nascar(generator, seed)?,
        SourceBlock::Csv(source) => load_csv(&source.path, &source.schema)?,
    };
    if let Some(splits) = config.data.splits {
        data = chunk_and_sample(&data, splits, config.data.fraction, config.data.scope, split_seed(seed))?;
    }
    if config.data.standardize {
        data = standardize(&data)?;
    }
    Ok(data)
}

pub fn cmd_generate(config: &RunConfig, out: &Path) -> Result<PathBuf> {
    if !matches!(config.data.source, SourceBlock::Nascar(_)) {
        return Err(Error::Config("generate needs a nascar data source".into()));
    }
    let data = build_dataset(config)?;
    create_dir(out)?;
    let path = out.join(DATA_FILE);
    save_csv(&data, &path)?;
    save_manifest(&data.manifest, &manifest_path(&path))?;
    info!(
        "wrote {} sequences, {} points to {}",
        data.sequences.len(),
        data.total_len(),
        path.display()
    );
    Ok(path)
}

/// Load a data file for fitting, picking up its manifest when present.
pub fn load_fit_data(config: &RunConfig, path: Option<&Path>) -> Result<Dataset> {
    let Some(path) = path else {
        return build_dataset(config);
    };
    let schema = match &config.data.source {
        SourceBlock::Csv(source) => source.schema.clone(),
        SourceBlock::Nascar(_) => CsvSchema::default(),
    };
    let mut data = load_csv(path, &schema)?;
    let sidecar = manifest_path(path);
    if sidecar.exists() {
        data.manifest = load_manifest(&sidecar)?;
    }
    Ok(data)
}

fn resume_chain(dir: &Path, index: usize, config: &RunConfig, model: &ModelConfig) -> Result<Chain> {
    let path = dir.join(checkpoint_name(index));
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut chain = Chain::from_json(&text)?;
    if chain.state.config != *model || chain.prior != config.prior {
        return Err(Error::Config(format!(
            "checkpoint {} was written for a different model or prior",
            path.display()
        )));
    }
    let options = config.run.fit_options();
    if chain.options.scheme != options.scheme || chain.options.burn_in_fraction != options.burn_in_fraction {
        return Err(Error::Config(format!(
            "checkpoint {} was written with different run settings",
            path.display()
        )));
    }
    let old_burn = chain.options.burn_in();
    chain.options.iterations = options.iterations;
    if chain.options.burn_in() != old_burn && chain.state.iteration > old_burn.min(chain.options.burn_in()) {
        return Err(Error::Config(format!(
            "checkpoint {} is past burn-in; changing iterations would move the burn-in boundary",
            path.display()
        )));
    }
    Ok(chain)
}

struct ChainOutcome {
    chain: Chain,
    error: Option<Error>,
}

fn run_chain(
    mut chain: Chain,
    index: usize,
    data: &Dataset,
    priors: &Priors,
    checkpoint_every: usize,
    checkpoint_dir: &Path,
) -> ChainOutcome {
    let result = chain.run(&data.sequences, priors, |c| {
        let it = c.state.iteration;
        if it % 100 == 0 {
            info!(
                "chain {index}: iteration {it}, joint log-density {:.3}",
                c.diagnostics.last().map_or(f64::NAN, |d| d.joint_log_density)
            );
        }
        if checkpoint_every > 0 && it % checkpoint_every == 0 && !c.is_finished() {
            write_file(&checkpoint_dir.join(checkpoint_name(index)), &c.to_json()?)?;
        }
        Ok(())
    });
    ChainOutcome {
        chain,
        error: result.err(),
    }
}

fn diagnostics_csv(chains: &[Chain]) -> String {
    let k = chains.first().map_or(0, |c| c.state.config.num_modes);
    let mut out = String::from("chain,iteration,joint_log_density,evidence_proxy,jitter_retries");
    for j in 0..k {
        out += &format!(",occupancy_{j}");
    }
    out.push('\n');
    for (c, chain) in chains.iter().enumerate() {
        for r in &chain.diagnostics {
            out += &format!(
                "{c},{},{},{},{}",
                r.iteration,
                fmt_f64(r.joint_log_density),
                fmt_f64(r.evidence_proxy),
                r.jitter_retries
            );
            for o in &r.occupancy {
                out += &format!(",{o}");
            }
            out.push('\n');
        }
    }
    out
}

fn segmentation_csv(chains: &[Chain], data: &Dataset) -> String {
    let mut out = String::from("chain,seq,t,s,d\n");
    for (c, chain) in chains.iter().enumerate() {
        for (id, traj) in data.ids.iter().zip(&chain.state.trajectories) {
            for (t, (s, d)) in traj.states.iter().zip(&traj.durations).enumerate() {
                out += &format!("{c},{id},{t},{s},{d}\n");
            }
        }
    }
    out
}

/// Fit every configured chain and write checkpoints, diagnostics, the
/// segmentation and the report into `out`. When a chain fails, the outputs
/// of the last good states are still written before the error is returned.
pub fn cmd_fit(config: &RunConfig, data: &Dataset, out: &Path, resume: Option<&Path>) -> Result<FitReport> {
    data.validate()?;
    if data.sequences.is_empty() {
        return Err(Error::Data("no sequences to fit".into()));
    }
    let model = config.model.model_config(data.obs_dim());
    model.validate()?;
    create_dir(out)?;
    let checkpoint_dir = config.run.checkpoint_dir.clone().unwrap_or_else(|| out.to_path_buf());
    create_dir(&checkpoint_dir)?;
    let options = config.run.fit_options();

    let mut starts = Vec::with_capacity(config.run.chains);
    for i in 0..config.run.chains {
        let chain = match resume {
            Some(dir) => resume_chain(dir, i, config, &model)?,
            None => {
                let seed = chain_seed(config.run.seed, i);
                Chain::start(&data.sequences, &model, &config.prior, &options, seed)?.0
            }
        };
        starts.push(chain);
    }
    let priors = starts[0].priors(&data.sequences)?;

    let outcomes: Vec<ChainOutcome> = std::thread::scope(|scope| {
        let handles: Vec<_> = starts
            .into_iter()
            .enumerate()
            .map(|(i, chain)| {
                let (priors, dir) = (&priors, &checkpoint_dir);
                scope.spawn(move || run_chain(chain, i, data, priors, config.run.checkpoint_every, dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain worker panicked"))
            .collect()
    });

    let mut chains = Vec::with_capacity(outcomes.len());
    let mut failure = None;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        if let Some(e) = outcome.error {
            warn!("chain {i} stopped at iteration {}: {e}", outcome.chain.state.iteration);
            failure.get_or_insert(e);
        }
        write_file(&checkpoint_dir.join(checkpoint_name(i)), &outcome.chain.to_json()?)?;
        chains.push(outcome.chain);
    }
    write_file(&out.join(DIAGNOSTICS_FILE), &diagnostics_csv(&chains))?;
    write_file(&out.join(SEGMENTATION_FILE), &segmentation_csv(&chains, data))?;
    if let Some(e) = failure {
        return Err(e);
    }
    let fit_report = report(&chains, data.labels.as_deref(), config.run.estimate)?;
    write_file(&out.join(REPORT_JSON), &fit_report.to_json()?)?;
    write_file(&out.join(REPORT_TEXT), &fit_report.to_table())?;
    Ok(fit_report)
}

/// Label sequences from a CSV: `seq` plus the first present of `columns`,
/// keeping only rows of `chain` when the file has a chain column.
pub fn read_labels(path: &Path, columns: &[&str], chain: Option<usize>) -> Result<(Vec<String>, Vec<Vec<usize>>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| Error::Data(format!("{}: cannot read header: {e}", path.display())))?
        .clone();
    let find = |name: &str| header.iter().position(|h| h == name);
    let missing = |what: &str| Error::DataRow {
        row: 1,
        message: format!("{}: missing column {what}", path.display()),
    };
    let seq_idx = find("seq").ok_or_else(|| missing("\"seq\""))?;
    let label_idx = columns
        .iter()
        .find_map(|c| find(c))
        .ok_or_else(|| missing(&format!("{columns:?}")))?;
    let chain_idx = find("chain");
    let wanted = chain.unwrap_or(0).to_string();
    let mut ids: Vec<String> = Vec::new();
    let mut slots: HashMap<String, usize> = HashMap::new();
    let mut labels: Vec<Vec<usize>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::DataRow {
            row,
            message: format!("{}: malformed row: {e}", path.display()),
        })?;
        if let Some(ci) = chain_idx {
            if rec.get(ci).map(str::trim) != Some(wanted.as_str()) {
                continue;
            }
        }
        let raw = rec.get(label_idx).unwrap_or("").trim();
        let label = raw.parse::<usize>().map_err(|_| Error::DataRow {
            row,
            message: format!("{}: label {raw:?} is not a non-negative integer", path.display()),
        })?;
        let id = rec.get(seq_idx).unwrap_or("").to_string();
        let slot = *slots.entry(id.clone()).or_insert_with(|| {
            ids.push(id);
            labels.push(Vec::new());
            labels.len() - 1
        });
        labels[slot].push(label);
    }
    if ids.is_empty() {
        return Err(Error::Data(format!("{}: no label rows", path.display())));
    }
    Ok((ids, labels))
}

/// Score a predicted segmentation against ground truth, matching sequences
/// by id.
pub fn cmd_evaluate(pred: &Path, truth: &Path, chain: Option<usize>) -> Result<SegmentationScore> {
    let (pred_ids, pred_labels) = read_labels(pred, &["s", "label"], chain)?;
    let (true_ids, true_labels) = read_labels(truth, &["label"], None)?;
    let index: HashMap<&str, usize> = pred_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if pred_ids.len() != true_ids.len() {
        return Err(Error::Data(format!(
            "prediction has {} sequences, truth has {}",
            pred_ids.len(),
            true_ids.len()
        )));
    }
    let mut aligned = Vec::with_capacity(true_ids.len());
    for (id, t) in true_ids.iter().zip(&true_labels) {
        let p = index
            .get(id.as_str())
            .map(|&i| &pred_labels[i])
            .ok_or_else(|| Error::Data(format!("sequence {id} has no prediction")))?;
        if p.len() != t.len() {
            return Err(Error::Data(format!(
                "sequence {id}: {} predicted labels for {} true labels",
                p.len(),
                t.len()
            )));
        }
        aligned.push(p.clone());
    }
    score_sequences(&aligned, &true_labels)
}

pub fn write_json_to(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}
