//! Model, record and result file formats.
//!
//! Model files are JSON objects tagged by `kind`. Complex matrices are arrays
//! of rows of `[re, im]` pairs. Record files are line-delimited JSON: one
//! metadata line, then one trajectory per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::continuous::{Channel, ContinuousRecord, SmeModel};
use crate::error::{Error, Result};
use crate::filter::DiscreteRecord;
use crate::linalg::CMatrix;
use crate::models::{
    build_fluorescence_model, build_qnd_family, povm_family, FluorescenceParams, QndCavityModel,
};
use crate::operators::{DensityMatrix, HermitianOperator, KrausFamily};
use crate::qubit::BlochVector;

pub const RECORDS_SCHEMA: &str = "trajtomo-records/1";

/// Rows of `[re, im]` pairs.
pub type MatrixData = Vec<Vec<[f64; 2]>>;

pub fn matrix_from_data(data: &MatrixData) -> Result<CMatrix> {
    let n = data.len();
    if n == 0 || data.iter().any(|row| row.len() != n) {
        return Err(Error::Config("matrix must be square and non-empty".into()));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        let [re, im] = data[i][j];
        Complex64::new(re, im)
    }))
}

pub fn matrix_to_data(m: &CMatrix) -> MatrixData {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateSpec {
    Bloch([f64; 3]),
    Diagonal(Vec<f64>),
    Matrix(MatrixData),
    MaximallyMixed,
    /// Steady state of the unread cavity dynamics.
    Stationary,
}

/// Cavity model plus the time axis of its records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QndScenario {
    #[serde(flatten)]
    pub cavity: QndCavityModel,
    #[serde(default = "default_t_start")]
    pub t_start: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// One photon is added to every trajectory at this time.
    #[serde(default)]
    pub injection_time: Option<f64>,
}

fn default_t_start() -> f64 {
    -172e-3
}

fn default_t_end() -> f64 {
    172e-3
}

impl Default for QndScenario {
    fn default() -> Self {
        Self {
            cavity: QndCavityModel::default(),
            t_start: default_t_start(),
            t_end: default_t_end(),
            injection_time: Some(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelData {
    pub l: MatrixData,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmeSpec {
    pub hamiltonian: MatrixData,
    pub channels: Vec<ChannelData>,
    pub dt: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmSpec {
    pub elements: Vec<MatrixData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Fluorescence(FluorescenceParams),
    Qnd(QndScenario),
    Sme(SmeSpec),
    Povm(PovmSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(flatten)]
    pub spec: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<StateSpec>,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// The measurement side of a model file.
#[derive(Debug, Clone)]
pub enum Measurement {
    Discrete {
        family: KrausFamily,
        t0: f64,
        step: f64,
    },
    Continuous {
        model: SmeModel,
        dt: f64,
        n_steps: usize,
    },
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub file: ModelFile,
    pub sha256: String,
    pub measurement: Measurement,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn integral_steps(span: f64, step: f64) -> Result<usize> {
    let ratio = span / step;
    let n = ratio.round();
    if !(n >= 1.0) || (ratio - n).abs() > 1e-6 {
        return Err(Error::Config(format!(
            "span {span:e} s is not a whole number of steps of {step:e} s"
        )));
    }
    Ok(n as usize)
}

impl LoadedModel {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(bytes)?;
        let measurement = match &file.spec {
            ModelSpec::Fluorescence(p) => Measurement::Continuous {
                model: build_fluorescence_model(p)?,
                dt: p.dt,
                n_steps: integral_steps(p.duration, p.dt)?,
            },
            ModelSpec::Sme(s) => {
                let h = HermitianOperator::new(matrix_from_data(&s.hamiltonian)?)?;
                let channels = s
                    .channels
                    .iter()
                    .map(|c| Ok(Channel { l: matrix_from_data(&c.l)?, eta: c.eta }))
                    .collect::<Result<Vec<_>>>()?;
                Measurement::Continuous {
                    model: SmeModel::new(h, channels)?,
                    dt: s.dt,
                    n_steps: integral_steps(s.duration, s.dt)?,
                }
            }
            ModelSpec::Qnd(q) => {
                let n = integral_steps(q.t_end - q.t_start, q.cavity.step)?;
                Measurement::Discrete {
                    family: build_qnd_family(&q.cavity, n)?,
                    t0: q.t_start,
                    step: q.cavity.step,
                }
            }
            ModelSpec::Povm(p) => {
                let elements = p
                    .elements
                    .iter()
                    .map(|m| HermitianOperator::new(matrix_from_data(m)?))
                    .collect::<Result<Vec<_>>>()?;
                Measurement::Discrete {
                    family: povm_family(&elements)?,
                    t0: 0.0,
                    step: 1.0,
                }
            }
        };
        Ok(Self {
            file,
            sha256: sha256_hex(bytes),
            measurement,
        })
    }

    pub fn dim(&self) -> usize {
        match &self.measurement {
            Measurement::Discrete { family, .. } => family.dim(),
            Measurement::Continuous { model, .. } => model.dim(),
        }
    }

    pub fn n_steps(&self) -> usize {
        match &self.measurement {
            Measurement::Discrete { family, .. } => family.len(),
            Measurement::Continuous { n_steps, .. } => *n_steps,
        }
    }

    /// `(t0, step)` of the record time axis.
    pub fn time_axis(&self) -> (f64, f64) {
        match &self.measurement {
            Measurement::Discrete { t0, step, .. } => (*t0, *step),
            Measurement::Continuous { dt, .. } => (0.0, *dt),
        }
    }

    pub fn step_time(&self, k: usize) -> f64 {
        let (t0, step) = self.time_axis();
        t0 + k as f64 * step
    }

    /// First step at or after `t` (within 1e-6 of a step); at least one step
    /// of record must remain.
    pub fn time_to_step(&self, t: f64) -> Result<usize> {
        let (t0, step) = self.time_axis();
        let x = (t - t0) / step;
        let k = (x - 1e-6).ceil().max(0.0);
        if !x.is_finite() || x < -1e-6 || k >= self.n_steps() as f64 {
            return Err(Error::Config(format!(
                "start time {t:e} s is outside the record span [{t0:e}, {:e}) s",
                self.step_time(self.n_steps())
            )));
        }
        let k = k as usize;
        if (x - k as f64).abs() > 1e-6 {
            log::info!("start time {t:e} s moved to the next sample at {:e} s", self.step_time(k));
        }
        Ok(k)
    }

    pub fn injection_step(&self) -> Result<Option<usize>> {
        match &self.file.spec {
            ModelSpec::Qnd(QndScenario {
                injection_time: Some(t),
                ..
            }) => self.time_to_step(*t).map(Some),
            _ => Ok(None),
        }
    }

    pub fn initial_state(&self) -> Result<DensityMatrix> {
        let default = match &self.file.spec {
            ModelSpec::Fluorescence(_) => StateSpec::Bloch([1.0, 0.0, 0.0]),
            ModelSpec::Qnd(_) => StateSpec::Stationary,
            _ => StateSpec::MaximallyMixed,
        };
        let spec = self.file.initial_state.clone().unwrap_or(default);
        let n = self.dim();
        let rho = match spec {
            StateSpec::Bloch([x, y, z]) => {
                if n != 2 {
                    return Err(Error::Config("Bloch initial state needs a qubit model".into()));
                }
                BlochVector::new(x, y, z)?.to_density()
            }
            StateSpec::Diagonal(p) => DensityMatrix::diagonal(&p)?,
            StateSpec::Matrix(m) => DensityMatrix::from_matrix(matrix_from_data(&m)?)?,
            StateSpec::MaximallyMixed => DensityMatrix::maximally_mixed(n),
            StateSpec::Stationary => match &self.file.spec {
                ModelSpec::Qnd(q) => q.cavity.stationary_state()?,
                _ => return Err(Error::Config("stationary initial state needs a cavity model".into())),
            },
        };
        if rho.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rho.dim(),
            });
        }
        Ok(rho)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordsHeader {
    pub schema: String,
    pub kind: String,
    pub model_sha256: String,
    pub model: ModelFile,
    pub seed: u64,
    pub n_trajectories: usize,
    pub t0: f64,
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Records {
    Discrete(Vec<DiscreteRecord>),
    Continuous(Vec<ContinuousRecord>),
}

impl Records {
    pub fn len(&self) -> usize {
        match self {
            Records::Discrete(r) => r.len(),
            Records::Continuous(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Serialize, Deserialize)]
struct LabeledRecord {
    id: u64,
    outcomes: Vec<String>,
}

pub fn write_records(path: &Path, header: &RecordsHeader, records: &Records, labels: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    match records {
        Records::Discrete(list) => {
            for r in list {
                let line = LabeledRecord {
                    id: r.id,
                    outcomes: r.outcomes.iter().map(|&y| labels[y].clone()).collect(),
                };
                serde_json::to_writer(&mut w, &line)?;
                w.write_all(b"\n")?;
            }
        }
        Records::Continuous(list) => {
            for r in list {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a record file and checks it against `model`.
pub fn read_records(path: &Path, model: &LoadedModel) -> Result<(RecordsHeader, Records)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))??;
    let header: RecordsHeader = serde_json::from_str(&first)?;
    if header.schema != RECORDS_SCHEMA {
        return Err(Error::Config(format!("unsupported record schema `{}`", header.schema)));
    }
    if header.model_sha256 != model.sha256 {
        log::warn!("records were generated from a model file with a different hash");
    }
    let records = match &model.measurement {
        Measurement::Discrete { family, .. } => {
            let mut out = Vec::new();
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: LabeledRecord = serde_json::from_str(&line)?;
                let record = DiscreteRecord::from_labels(family, r.id, 0, &r.outcomes)?;
                if record.len() != family.len() {
                    return Err(Error::Config(format!(
                        "record {} has {} steps, the model has {}",
                        r.id,
                        record.len(),
                        family.len()
                    )));
                }
                out.push(record);
            }
            Records::Discrete(out)
        }
        Measurement::Continuous { model: sme, dt, n_steps } => {
            let mut out = Vec::new();
            for line in lines {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: ContinuousRecord = serde_json::from_str(&line)?;
                if (r.dt - dt).abs() > 1e-9 * dt || r.len() != *n_steps {
                    return Err(Error::Config(format!(
                        "record {} does not match the model time grid",
                        r.id
                    )));
                }
                if r.increments.iter().any(|row| row.len() != sme.n_monitored()) {
                    return Err(Error::DimensionMismatch {
                        expected: sme.n_monitored(),
                        found: r.increments[0].len(),
                    });
                }
                out.push(r);
            }
            Records::Continuous(out)
        }
    };
    if records.is_empty() {
        return Err(Error::Config(format!("{} holds no records", path.display())));
    }
    Ok((header, records))
}
