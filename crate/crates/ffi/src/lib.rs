//! C interface to the redslds library.
//!
//! Every object is an opaque handle created by a `*_new`/`*_from_*`
//! function and released with the matching `*_free`. Functions return a
//! [`RedsldsStatus`]; on failure, [`redslds_last_error`] describes the most
//! recent error on the calling thread. Strings returned through `char **`
//! are owned by the caller and released with [`redslds_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use redslds::config::ModelBlock;
use redslds::gibbs::{Chain, FitOptions, InitScheme, PriorConfig, Priors};
use redslds::linalg::Vector;
use redslds::metrics::score_sequences;
use redslds::model::{joint_log_density, simulate, LatentTrajectory, ModelDocument, Sequence};
use redslds::{Error, SeedRng};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedsldsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Numerical = 5,
    Io = 6,
    Panic = 7,
}

impl From<&Error> for RedsldsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Config(_) | Error::Json(_) => RedsldsStatus::Config,
            Error::InvalidParameter(_) | Error::DimensionMismatch(_) => RedsldsStatus::InvalidArgument,
            Error::Data(_) | Error::DataRow { .. } => RedsldsStatus::Data,
            Error::NotPositiveDefinite { .. } | Error::Numerical { .. } => RedsldsStatus::Numerical,
            Error::Io { .. } => RedsldsStatus::Io,
        }
    }
}

/// Initialization scheme of a chain.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RedsldsScheme {
    /// ARHMM start plus parameter-only sweeps.
    I = 0,
    /// ARHMM start only.
    II = 1,
}

/// A model configuration with its parameters.
pub struct RedsldsModel {
    doc: ModelDocument,
}

/// A collection of observation sequences of equal dimension.
pub struct RedsldsDataset {
    sequences: Vec<Sequence>,
}

/// A Gibbs chain bound to a copy of its data.
pub struct RedsldsChain {
    chain: Chain,
    priors: Priors,
    data: Vec<Sequence>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(RedsldsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(RedsldsStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(RedsldsStatus::InvalidArgument, msg.into())
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> RedsldsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RedsldsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RedsldsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn out_ptr<T>(p: *mut T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(null(what))
    } else {
        Ok(())
    }
}

unsafe fn write_string(out: *mut *mut c_char, text: String) -> Result<(), Failure> {
    out_ptr(out, "output string")?;
    let c = CString::new(text).map_err(|_| invalid("string contains a NUL byte"))?;
    *out = c.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn redslds_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn redslds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn redslds_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a model document (configuration plus parameters) from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn redslds_model_from_json(json: *const c_char, out: *mut *mut RedsldsModel) -> RedsldsStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let doc = ModelDocument::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(RedsldsModel { doc }));
        Ok(())
    })
}

/// Serialize a model document to JSON.
///
/// # Safety
/// `model` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn redslds_model_to_json(model: *const RedsldsModel, out: *mut *mut c_char) -> RedsldsStatus {
    guard(|| {
        let model = handle(model, "model")?;
        write_string(out, model.doc.to_json()?)
    })
}

/// # Safety
/// `model` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn redslds_model_free(model: *mut RedsldsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of modes, latent dimension, observation dimension and maximum
/// duration of a model. Any output may be NULL.
///
/// # Safety
/// `model` must be a live handle; non-NULL outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn redslds_model_dims(
    model: *const RedsldsModel,
    num_modes: *mut usize,
    latent_dim: *mut usize,
    obs_dim: *mut usize,
    max_duration: *mut usize,
) -> RedsldsStatus {
    guard(|| {
        let c = &handle(model, "model")?.doc.config;
        for (p, v) in [
            (num_modes, c.num_modes),
            (latent_dim, c.latent_dim),
            (obs_dim, c.obs_dim),
            (max_duration, c.durations()),
        ] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Draw a sequence of length `len` from the model. `y` receives `len × N`
/// values row by row; `x` (`len × M`), `states` and `durations` (`len`
/// each, durations 1-based) may be NULL.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn redslds_model_simulate(
    model: *const RedsldsModel,
    len: usize,
    seed: u64,
    y: *mut f64,
    x: *mut f64,
    states: *mut usize,
    durations: *mut usize,
) -> RedsldsStatus {
    guard(|| {
        let doc = &handle(model, "model")?.doc;
        out_ptr(y, "y")?;
        let mut rng = SeedRng::seed_from_u64(seed);
        let (obs, traj) = simulate(&doc.params, &doc.config, len, &mut rng)?;
        let (n, m) = (doc.config.obs_dim, doc.config.latent_dim);
        let y = std::slice::from_raw_parts_mut(y, len * n);
        for (t, v) in obs.iter().enumerate() {
            y[t * n..(t + 1) * n].copy_from_slice(v.as_slice());
        }
        if !x.is_null() {
            let x = std::slice::from_raw_parts_mut(x, len * m);
            for (t, v) in traj.latents.iter().enumerate() {
                x[t * m..(t + 1) * m].copy_from_slice(v.as_slice());
            }
        }
        if !states.is_null() {
            std::slice::from_raw_parts_mut(states, len).copy_from_slice(&traj.states);
        }
        if !durations.is_null() {
            std::slice::from_raw_parts_mut(durations, len).copy_from_slice(&traj.durations);
        }
        Ok(())
    })
}

unsafe fn rows(p: *const f64, len: usize, dim: usize, what: &str) -> Result<Vec<Vector>, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let flat = std::slice::from_raw_parts(p, len * dim);
    Ok(flat.chunks(dim.max(1)).take(len).map(Vector::from_column_slice).collect())
}

/// `log p(y, x, s, d)` of one complete trajectory; `-inf` when the
/// durations break the countdown.
///
/// # Safety
/// `y` holds `len × N`, `x` holds `len × M`, `states` and `durations` hold
/// `len` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn redslds_model_joint_log_density(
    model: *const RedsldsModel,
    len: usize,
    y: *const f64,
    x: *const f64,
    states: *const usize,
    durations: *const usize,
    out: *mut f64,
) -> RedsldsStatus {
    guard(|| {
        let doc = &handle(model, "model")?.doc;
        out_ptr(out, "out")?;
        if states.is_null() || durations.is_null() {
            return Err(null("states or durations"));
        }
        let obs = rows(y, len, doc.config.obs_dim, "y")?;
        let traj = LatentTrajectory {
            states: std::slice::from_raw_parts(states, len).to_vec(),
            durations: std::slice::from_raw_parts(durations, len).to_vec(),
            latents: rows(x, len, doc.config.latent_dim, "x")?,
        };
        *out = joint_log_density(&doc.params, &doc.config, &obs, &traj)?;
        Ok(())
    })
}

/// Create an empty dataset.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn redslds_dataset_new(out: *mut *mut RedsldsDataset) -> RedsldsStatus {
    guard(|| {
        out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(RedsldsDataset { sequences: Vec::new() }));
        Ok(())
    })
}

/// Append a `len × obs_dim` row-major sequence.
///
/// # Safety
/// `dataset` must be a live handle and `y` hold `len × obs_dim` values.
#[no_mangle]
pub unsafe extern "C" fn redslds_dataset_push(
    dataset: *mut RedsldsDataset,
    y: *const f64,
    len: usize,
    obs_dim: usize,
) -> RedsldsStatus {
    guard(|| {
        let ds = handle_mut(dataset, "dataset")?;
        if len == 0 || obs_dim == 0 {
            return Err(invalid("sequences need at least one step and one dimension"));
        }
        if let Some(first) = ds.sequences.first() {
            if first[0].len() != obs_dim {
                return Err(invalid(format!(
                    "sequence has dimension {obs_dim}, dataset has {}",
                    first[0].len()
                )));
            }
        }
        let seq = rows(y, len, obs_dim, "y")?;
        if seq.iter().any(|v| v.iter().any(|e| !e.is_finite())) {
            return Err(Failure(RedsldsStatus::Data, "observations must be finite".into()));
        }
        ds.sequences.push(seq);
        Ok(())
    })
}

/// Number of sequences held.
///
/// # Safety
/// `dataset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn redslds_dataset_len(dataset: *const RedsldsDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.sequences.len())
}

/// # Safety
/// `dataset` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn redslds_dataset_free(dataset: *mut RedsldsDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Initialize a chain on a copy of `dataset`. `model_json` is a model block
/// (`variant`, `num_modes`, `latent_dim`, optional `max_duration` and
/// `shared_emission`); `prior_json` is a prior block or NULL for defaults.
///
/// # Safety
/// Strings must be NUL-terminated, handles live, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn redslds_chain_new(
    dataset: *const RedsldsDataset,
    model_json: *const c_char,
    prior_json: *const c_char,
    iterations: usize,
    burn_in_fraction: f64,
    scheme: RedsldsScheme,
    seed: u64,
    out: *mut *mut RedsldsChain,
) -> RedsldsStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let ds = handle(dataset, "dataset")?;
        let block: ModelBlock =
            serde_json::from_str(str_arg(model_json, "model_json")?).map_err(|e| Failure(RedsldsStatus::Config, e.to_string()))?;
        let prior: PriorConfig = if prior_json.is_null() {
            PriorConfig::default()
        } else {
            serde_json::from_str(str_arg(prior_json, "prior_json")?).map_err(|e| Failure(RedsldsStatus::Config, e.to_string()))?
        };
        prior.validate()?;
        let first = ds
            .sequences
            .first()
            .ok_or_else(|| Failure(RedsldsStatus::Data, "dataset is empty".into()))?;
        let config = block.model_config(first[0].len());
        let options = FitOptions {
            iterations,
            burn_in_fraction,
            scheme: match scheme {
                RedsldsScheme::I => InitScheme::I,
                RedsldsScheme::II => InitScheme::II,
            },
        };
        let (chain, priors) = Chain::start(&ds.sequences, &config, &prior, &options, seed)?;
        *out = Box::into_raw(Box::new(RedsldsChain {
            chain,
            priors,
            data: ds.sequences.clone(),
        }));
        Ok(())
    })
}

/// Restore a chain from checkpoint JSON; `dataset` must be the data it was
/// started on.
///
/// # Safety
/// As for [`redslds_chain_new`].
#[no_mangle]
pub unsafe extern "C" fn redslds_chain_from_json(
    dataset: *const RedsldsDataset,
    json: *const c_char,
    out: *mut *mut RedsldsChain,
) -> RedsldsStatus {
    guard(|| {
        out_ptr(out, "out")?;
        let ds = handle(dataset, "dataset")?;
        let chain = Chain::from_json(str_arg(json, "json")?)?;
        if chain.state.trajectories.len() != ds.sequences.len()
            || chain.state.trajectories.iter().zip(&ds.sequences).any(|(t, s)| t.len() != s.len())
        {
            return Err(Failure(RedsldsStatus::Data, "checkpoint does not match the dataset".into()));
        }
        let priors = chain.priors(&ds.sequences)?;
        *out = Box::into_raw(Box::new(RedsldsChain {
            chain,
            priors,
            data: ds.sequences.clone(),
        }));
        Ok(())
    })
}

/// Serialize the full chain state as checkpoint JSON.
///
/// # Safety
/// `chain` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn redslds_chain_to_json(chain: *const RedsldsChain, out: *mut *mut c_char) -> RedsldsStatus {
    guard(|| write_string(out, handle(chain, "chain")?.chain.to_json()?))
}

/// Run `sweeps` Gibbs sweeps. On failure the chain keeps its last good state.
///
/// # Safety
/// `chain` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn redslds_chain_step(chain: *mut RedsldsChain, sweeps: usize) -> RedsldsStatus {
    guard(|| {
        let c = handle_mut(chain, "chain")?;
        for _ in 0..sweeps {
            c.chain.step(&c.data, &c.priors)?;
        }
        Ok(())
    })
}

/// Sweeps completed so far.
///
/// # Safety
/// `chain` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn redslds_chain_iteration(chain: *const RedsldsChain) -> usize {
    chain.as_ref().map_or(0, |c| c.chain.state.iteration)
}

/// Joint log-density and evidence proxy after the last sweep.
///
/// # Safety
/// `chain` must be live; non-NULL outputs valid.
#[no_mangle]
pub unsafe extern "C" fn redslds_chain_log_density(
    chain: *const RedsldsChain,
    joint: *mut f64,
    evidence: *mut f64,
) -> RedsldsStatus {
    guard(|| {
        let c = handle(chain, "chain")?;
        let last = c
            .chain
            .diagnostics
            .last()
            .ok_or_else(|| invalid("chain has not run any sweeps"))?;
        if !joint.is_null() {
            *joint = last.joint_log_density;
        }
        if !evidence.is_null() {
            *evidence = last.evidence_proxy;
        }
        Ok(())
    })
}

/// Copy the states of sequence `index` into `out` (`len` elements). With
/// `majority` nonzero, the per-step majority over post-burn-in sweeps is
/// returned instead of the current sample.
///
/// # Safety
/// `chain` must be live and `out` hold `len` elements.
#[no_mangle]
pub unsafe extern "C" fn redslds_chain_states(
    chain: *const RedsldsChain,
    index: usize,
    majority: i32,
    out: *mut usize,
    len: usize,
) -> RedsldsStatus {
    guard(|| {
        let c = handle(chain, "chain")?;
        out_ptr(out, "out")?;
        let all = if majority != 0 {
            c.chain.majority_states()
        } else {
            c.chain.final_states()
        };
        let states = all
            .get(index)
            .ok_or_else(|| invalid(format!("sequence {index} out of range")))?;
        if states.len() != len {
            return Err(invalid(format!("sequence {index} has length {}, buffer {len}", states.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(states);
        Ok(())
    })
}

/// Current parameters as a new model handle.
///
/// # Safety
/// `chain` must be live and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn redslds_chain_model(chain: *const RedsldsChain, out: *mut *mut RedsldsModel) -> RedsldsStatus {
    guard(|| {
        let c = handle(chain, "chain")?;
        out_ptr(out, "out")?;
        let doc = ModelDocument::new(c.chain.state.config.clone(), c.chain.params().clone());
        *out = Box::into_raw(Box::new(RedsldsModel { doc }));
        Ok(())
    })
}

/// # Safety
/// `chain` must be NULL or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn redslds_chain_free(chain: *mut RedsldsChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

/// Segmentation scores of `pred` against `truth` after optimal relabelling.
/// Any output may be NULL.
///
/// # Safety
/// `pred` and `truth` hold `len` elements; non-NULL outputs valid.
#[no_mangle]
pub unsafe extern "C" fn redslds_score(
    pred: *const usize,
    truth: *const usize,
    len: usize,
    accuracy: *mut f64,
    weighted_f1: *mut f64,
    macro_f1: *mut f64,
) -> RedsldsStatus {
    guard(|| {
        if pred.is_null() || truth.is_null() {
            return Err(null("pred or truth"));
        }
        let p = std::slice::from_raw_parts(pred, len).to_vec();
        let t = std::slice::from_raw_parts(truth, len).to_vec();
        let s = score_sequences(&[p], &[t])?;
        for (ptr, v) in [(accuracy, s.accuracy), (weighted_f1, s.weighted_f1), (macro_f1, s.macro_f1)] {
            if !ptr.is_null() {
                *ptr = v;
            }
        }
        Ok(())
    })
}
