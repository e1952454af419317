//! Batch front end: simulate record files, run tomography sweeps with
//! confidence intervals, and run the validation suites.
//!
//! Output is deterministic for a given configuration and seed: every
//! trajectory draws from its own ChaCha stream and parallel results are
//! collected in input order.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{build_r_with, variance_with, ObservableInterval};
use crate::continuous::{backward_continuous_at, simulate_sme_with, ContinuousRecord};
use crate::error::{Error, Result};
use crate::filter::{backward_at, simulate_discrete, AdjointResult, DiscreteRecord};
use crate::linalg::CMatrix;
use crate::maxlike::{solve_maxlike, EffectSet, MaxLikeOptions, TomographyResult};
use crate::models::{inject_photon, photon_number};
use crate::operators::{pauli, DensityMatrix, HermitianOperator};
use crate::tolerances::Tolerances;

pub mod files;
mod validate;

pub use files::{
    matrix_from_data, matrix_to_data, read_records, sha256_hex, write_records, LoadedModel, MatrixData,
    Measurement, ModelFile, ModelSpec, QndScenario, Records, RecordsHeader, StateSpec, RECORDS_SCHEMA,
};
pub use validate::{cmd_validate, run_validation, Check, ValidationReport};

pub const RESULTS_SCHEMA: &str = "trajtomo-results/1";

#[derive(Debug, Clone, PartialEq)]
pub enum ObservableSpec {
    PauliX,
    PauliY,
    PauliZ,
    PhotonNumber,
    Custom { name: String, matrix: CMatrix },
}

impl ObservableSpec {
    /// `pauli-x`, `pauli-y`, `pauli-z`, `photon-number`, or `NAME=PATH` with a
    /// JSON matrix file.
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "pauli-x" => Ok(Self::PauliX),
            "pauli-y" => Ok(Self::PauliY),
            "pauli-z" => Ok(Self::PauliZ),
            "photon-number" => Ok(Self::PhotonNumber),
            other => {
                let (name, path) = other
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("unknown observable `{other}`")))?;
                let data: MatrixData = serde_json::from_slice(&std::fs::read(path)?)?;
                Ok(Self::Custom {
                    name: name.to_string(),
                    matrix: matrix_from_data(&data)?,
                })
            }
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Self::PauliX => "pauli-x",
            Self::PauliY => "pauli-y",
            Self::PauliZ => "pauli-z",
            Self::PhotonNumber => "photon-number",
            Self::Custom { name, .. } => name,
        }
    }

    pub fn operator(&self, dim: usize) -> Result<HermitianOperator> {
        let op = match self {
            Self::PauliX => pauli::x(),
            Self::PauliY => pauli::y(),
            Self::PauliZ => pauli::z(),
            Self::PhotonNumber => photon_number(dim - 1),
            Self::Custom { matrix, .. } => HermitianOperator::new(matrix.clone())?,
        };
        if op.dim() != dim {
            return Err(Error::Config(format!(
                "observable `{}` has dimension {}, the model has {dim}",
                self.name(),
                op.dim()
            )));
        }
        Ok(op)
    }
}

/// Comma-separated observable names; an empty string gives no observables.
pub fn parse_observables(list: &str) -> Result<Vec<ObservableSpec>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(ObservableSpec::parse)
        .collect()
}

/// Comma-separated times in seconds, or `start:stop:step` (inclusive).
pub fn parse_start_times(s: &str) -> Result<Vec<f64>> {
    let bad = |what: &str| Error::Config(format!("cannot parse start time `{what}`"));
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(v));
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (a, b, h) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if !(h > 0.0) || !(b >= a) {
            return Err(bad(s));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| a + k as f64 * h).collect());
    }
    s.split(',').map(parse).collect()
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model_path: Option<PathBuf>,
    pub records_path: Option<PathBuf>,
    pub output_path: Option<PathBuf>,
    pub start_times: Vec<f64>,
    pub observables: Vec<ObservableSpec>,
    pub rng_seed: u64,
    pub n_trajectories: usize,
    pub tolerances: Tolerances,
    pub report_ensemble_average: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model_path: None,
            records_path: None,
            output_path: None,
            start_times: vec![0.0],
            observables: Vec::new(),
            rng_seed: 1,
            n_trajectories: 100,
            tolerances: Tolerances::DEFAULT,
            report_ensemble_average: false,
        }
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("missing {what} path")))
}

fn rng_for(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Simulates `n` trajectories of a model file's scenario.
pub fn simulate_records(model: &LoadedModel, n: usize, seed: u64) -> Result<Records> {
    let rho0 = model.initial_state()?;
    match &model.measurement {
        Measurement::Discrete { family, .. } => {
            let injection = model.injection_step()?;
            let total = family.len();
            let records = (0..n as u64)
                .into_par_iter()
                .map(|id| {
                    let mut rng = rng_for(seed, id);
                    let outcomes = match injection {
                        Some(k) => {
                            let (mut before, rho) = simulate_discrete(family, &rho0, 0, k, &mut rng)?;
                            let (after, _) =
                                simulate_discrete(family, &inject_photon(&rho), k, total - k, &mut rng)?;
                            before.extend(after);
                            before
                        }
                        None => simulate_discrete(family, &rho0, 0, total, &mut rng)?.0,
                    };
                    Ok(DiscreteRecord::new(id, outcomes))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Records::Discrete(records))
        }
        Measurement::Continuous { model: sme, dt, n_steps } => {
            let records = (0..n as u64)
                .into_par_iter()
                .map(|id| {
                    let mut rng = rng_for(seed, id);
                    let (increments, _) = simulate_sme_with(sme, &rho0, *dt, *n_steps, &mut rng, false)?;
                    Ok(ContinuousRecord { id, dt: *dt, increments })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Records::Continuous(records))
        }
    }
}

fn labels(model: &LoadedModel) -> Result<Vec<String>> {
    Ok(match &model.measurement {
        Measurement::Discrete { family, .. } => family.step(0)?.labels().to_vec(),
        Measurement::Continuous { .. } => Vec::new(),
    })
}

/// Writes a record file; returns its metadata.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<RecordsHeader> {
    let model = LoadedModel::load(required(&cfg.model_path, "model")?)?;
    let out = required(&cfg.output_path, "output")?;
    let records = simulate_records(&model, cfg.n_trajectories, cfg.rng_seed)?;
    let (t0, dt) = model.time_axis();
    let header = RecordsHeader {
        schema: RECORDS_SCHEMA.to_string(),
        kind: match records {
            Records::Discrete(_) => "discrete",
            Records::Continuous(_) => "continuous",
        }
        .to_string(),
        model_sha256: model.sha256.clone(),
        model: model.file.clone(),
        seed: cfg.rng_seed,
        n_trajectories: cfg.n_trajectories,
        t0,
        dt,
        n_steps: model.n_steps(),
        labels: labels(&model)?,
    };
    write_records(out, &header, &records, &header.labels)?;
    log::info!("wrote {} trajectories to {}", records.len(), out.display());
    Ok(header)
}

/// Effects of every record at the requested steps, grouped by step.
pub fn effects_at(model: &LoadedModel, records: &Records, steps: &[usize]) -> Result<Vec<Vec<AdjointResult>>> {
    let per_record: Vec<Vec<AdjointResult>> = match (&model.measurement, records) {
        (Measurement::Discrete { family, .. }, Records::Discrete(list)) => list
            .par_iter()
            .map(|r| backward_at(family, r, steps))
            .collect::<Result<_>>()?,
        (Measurement::Continuous { model: sme, .. }, Records::Continuous(list)) => list
            .par_iter()
            .map(|r| backward_continuous_at(sme, r, steps))
            .collect::<Result<_>>()?,
        _ => return Err(Error::Config("record kind does not match the model".into())),
    };
    let mut by_step: Vec<Vec<AdjointResult>> = vec![Vec::with_capacity(per_record.len()); steps.len()];
    for effects in per_record {
        for (slot, e) in by_step.iter_mut().zip(effects) {
            slot.push(e);
        }
    }
    Ok(by_step)
}

/// `tr(ρ_ML A)` and its interval, or the reason no interval exists.
#[derive(Debug, Clone)]
pub struct ObservableEstimate {
    pub name: String,
    pub mean: f64,
    pub interval: Result<ObservableInterval, String>,
}

/// Estimate of `ρ̄(t)` and the requested intervals.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub t: f64,
    pub step: usize,
    pub result: TomographyResult,
    pub observables: Vec<ObservableEstimate>,
}

pub fn maxlike_options(tol: &Tolerances) -> MaxLikeOptions {
    MaxLikeOptions {
        kkt_tol: tol.kkt,
        max_iterations: tol.max_iterations,
        rank_tol: tol.rank,
        record_history: false,
    }
}

/// Solves one effect set and evaluates the observables. An uncertified
/// optimum is kept (with a warning); its rows are flagged. A flat likelihood
/// gives `I/n` with every traceless observable unidentifiable.
pub fn estimate(
    effects: &EffectSet,
    observables: &[(String, HermitianOperator)],
    tol: &Tolerances,
) -> Result<(TomographyResult, Vec<ObservableEstimate>)> {
    let n = effects.dim();
    // a flat likelihood is evaluated on exactly flat effects, so that roundoff
    // in the effects is not mistaken for information
    let flat;
    let (result, effects) = match solve_maxlike(effects, &maxlike_options(tol)) {
        Ok(r) => (r, effects),
        Err(Error::MaxIterations(r)) => {
            log::warn!(
                "optimizer not certified after {} iterations (KKT residual {:e})",
                r.iterations,
                r.kkt_residual
            );
            (*r, effects)
        }
        Err(Error::DegenerateLikelihood) => {
            log::warn!("flat likelihood; reporting the maximally mixed state");
            flat = EffectSet::from_counts(&[(HermitianOperator::identity(n).scale(1.0 / n as f64), effects.total_weight())])?;
            (TomographyResult::evaluate(&DensityMatrix::maximally_mixed(n), &flat)?, &flat)
        }
        Err(e) => return Err(e),
    };
    let r = build_r_with(&result, effects, tol);
    let estimates = observables
        .iter()
        .map(|(name, a)| {
            let interval = match variance_with(a, &r, &result, tol) {
                Ok(v) => Ok(v),
                Err(Error::Unidentifiable(_)) => Err("unidentifiable".to_string()),
                Err(e) => return Err(e),
            };
            Ok(ObservableEstimate {
                name: name.clone(),
                mean: result.rho_ml.expectation(a),
                interval,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((result, estimates))
}

/// Tomography of `ρ̄(t)` at every start time from the records truncated to
/// `[t, end]`. Each point reports the sample time it was evaluated at.
pub fn tomography_sweep(
    model: &LoadedModel,
    records: &Records,
    start_times: &[f64],
    observables: &[ObservableSpec],
    tol: &Tolerances,
) -> Result<Vec<SweepPoint>> {
    let steps = start_times
        .iter()
        .map(|&t| model.time_to_step(t))
        .collect::<Result<Vec<_>>>()?;
    let ops = observables
        .iter()
        .map(|o| Ok((o.name().to_string(), o.operator(model.dim())?)))
        .collect::<Result<Vec<_>>>()?;
    let by_step = effects_at(model, records, &steps)?;
    by_step
        .par_iter()
        .zip(steps.par_iter())
        .map(|(effects, &step)| {
            let set = EffectSet::from_adjoint(effects)?;
            let (result, observables) = estimate(&set, &ops, tol)?;
            Ok(SweepPoint {
                t: model.step_time(step),
                step,
                result,
                observables,
            })
        })
        .collect()
}

/// One line of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub t: f64,
    pub observable: String,
    pub mean: Option<f64>,
    pub sigma: Option<f64>,
    pub lo95: Option<f64>,
    pub hi95: Option<f64>,
    pub rank: usize,
    pub lambda: f64,
    pub kkt_residual: f64,
    pub status: String,
}

pub fn result_rows(points: &[SweepPoint]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for p in points {
        let base = |observable: &str, status: &str| ResultRow {
            t: p.t,
            observable: observable.to_string(),
            mean: None,
            sigma: None,
            lo95: None,
            hi95: None,
            rank: p.result.rank,
            lambda: p.result.lambda_ml,
            kkt_residual: p.result.kkt_residual,
            status: status.to_string(),
        };
        let certified = if p.result.certified { "ok" } else { "uncertified" };
        if p.observables.is_empty() {
            rows.push(base("", certified));
        }
        for o in &p.observables {
            rows.push(match &o.interval {
                Ok(iv) => ResultRow {
                    mean: Some(o.mean),
                    sigma: Some(iv.sigma()),
                    lo95: Some(iv.lo95()),
                    hi95: Some(iv.hi95()),
                    ..base(&o.name, certified)
                },
                Err(msg) => ResultRow {
                    mean: Some(o.mean),
                    ..base(&o.name, msg)
                },
            });
        }
    }
    rows
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    writeln!(file, "# {RESULTS_SCHEMA}")?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SidecarEntry<'a> {
    t: f64,
    step: usize,
    rank: usize,
    lambda: f64,
    kkt_residual: f64,
    certified: bool,
    iterations: usize,
    log_likelihood: f64,
    n_effects: f64,
    observables: Vec<&'a str>,
    rho_ml: MatrixData,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    schema: &'static str,
    model_sha256: &'a str,
    records_seed: u64,
    n_trajectories: usize,
    estimates: Vec<SidecarEntry<'a>>,
}

fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

fn ensemble_path(out: &Path) -> PathBuf {
    out.with_extension("ensemble.csv")
}

/// Mean normalized signal per bin and monitored channel, with its standard
/// error. Fluorescence signals use `√(2T₁/η)·dy/dt`; other models `dy/(√η dt)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleRow {
    pub t: f64,
    pub channel: usize,
    pub mean: f64,
    pub stderr: f64,
}

pub fn ensemble_average(model: &LoadedModel, records: &[ContinuousRecord]) -> Result<Vec<EnsembleRow>> {
    let Measurement::Continuous { model: sme, dt, n_steps } = &model.measurement else {
        return Err(Error::Config("ensemble averages need continuous records".into()));
    };
    let channels = sme.monitored_channels();
    let scales: Vec<f64> = channels
        .iter()
        .map(|&k| match &model.file.spec {
            ModelSpec::Fluorescence(p) => p.signal_scale(),
            _ => 1.0 / (sme.channels()[k].eta.sqrt() * dt),
        })
        .collect();
    let n = records.len() as f64;
    let mut rows = Vec::new();
    for step in 0..*n_steps {
        for (c, &scale) in scales.iter().enumerate() {
            let (s, s2) = records.iter().fold((0.0, 0.0), |(a, b), r| {
                let v = r.increments[step][c] * scale;
                (a + v, b + v * v)
            });
            let mean = s / n;
            let var = if n > 1.0 { (s2 - n * mean * mean) / (n - 1.0) } else { 0.0 };
            rows.push(EnsembleRow {
                t: model.step_time(step),
                channel: channels[c],
                mean,
                stderr: (var.max(0.0) / n).sqrt(),
            });
        }
    }
    Ok(rows)
}

/// Runs the sweep and writes the CSV table and the JSON sidecar.
pub fn cmd_tomography(cfg: &RunConfig) -> Result<Vec<ResultRow>> {
    let model = LoadedModel::load(required(&cfg.model_path, "model")?)?;
    let out = required(&cfg.output_path, "output")?;
    // validate every start time before touching the records
    for &t in &cfg.start_times {
        model.time_to_step(t)?;
    }
    for o in &cfg.observables {
        o.operator(model.dim())?;
    }
    if cfg.start_times.is_empty() {
        return Err(Error::Config("no start times".into()));
    }
    let (header, records) = read_records(required(&cfg.records_path, "records")?, &model)?;
    let points = tomography_sweep(&model, &records, &cfg.start_times, &cfg.observables, &cfg.tolerances)?;
    let rows = result_rows(&points);
    write_results_csv(out, &rows)?;

    let names: Vec<&str> = cfg.observables.iter().map(|o| o.name()).collect();
    let sidecar = Sidecar {
        schema: RESULTS_SCHEMA,
        model_sha256: &model.sha256,
        records_seed: header.seed,
        n_trajectories: records.len(),
        estimates: points
            .iter()
            .map(|p| SidecarEntry {
                t: p.t,
                step: p.step,
                rank: p.result.rank,
                lambda: p.result.lambda_ml,
                kkt_residual: p.result.kkt_residual,
                certified: p.result.certified,
                iterations: p.result.iterations,
                log_likelihood: p.result.log_likelihood,
                n_effects: p.result.n_effects,
                observables: names.clone(),
                rho_ml: matrix_to_data(p.result.rho_ml.matrix()),
            })
            .collect(),
    };
    let mut f = BufWriter::new(File::create(sidecar_path(out))?);
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n")?;
    f.flush()?;

    if cfg.report_ensemble_average {
        match &records {
            Records::Continuous(list) => {
                let rows = ensemble_average(&model, list)?;
                let mut file = BufWriter::new(File::create(ensemble_path(out))?);
                writeln!(file, "# trajtomo-ensemble/1")?;
                let mut w = csv::Writer::from_writer(file);
                for row in &rows {
                    w.serialize(row).map_err(|e| Error::Config(e.to_string()))?;
                }
                w.flush()?;
            }
            Records::Discrete(_) => log::warn!("ensemble averages are only defined for continuous records"),
        }
    }
    Ok(rows)
}
