//! JSON run configuration. Every section rejects unknown keys, and a parsed
//! configuration serializes back to an equivalent document.
//!
//! ```json
//! {
//!   "model": {"type": "two_qubit_ising", "j": {"fixed": 1.0}, "h1": 0.1, "h2": 0.2, "z": 10.0},
//!   "schedule": {"kind": "log", "a": 0.001, "b": 0.1, "t0": 10.1, "t1": 100.0},
//!   "noise": {"kind": "wiener", "sigma": 0.05},
//!   "seed": 42
//! }
//! ```

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::integrator::{IntegratorOptions, RunMetadata, Simulation};
use crate::levels::{DenominatorMode, Denominators};
use crate::linalg::{c64, CMatrix, HermitianOperator};
use crate::master::{CouplingSign, DensityMatrix, MasterOptions, WindowSpec};
use crate::models::{build_two_qubit_ising, uniform_rho0, HamiltonianSpec, LogBase, Schedule, ScheduleKind};
use crate::noise::{stream_rng, NoiseKind, NoiseProcess};
use crate::oracle::Tolerances;

/// A complex matrix as rows of `[re, im]` pairs.
pub type ComplexRows = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingConfig {
    Fixed(f64),
    Gaussian { mean: f64, std: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    TwoQubitIsing { j: CouplingConfig, h1: f64, h2: f64, z: f64 },
    Generic { h0: ComplexRows, hb: ComplexRows, z: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default)]
    pub kind: ScheduleKind,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    pub t0: f64,
    pub t1: f64,
    #[serde(default)]
    pub log_base: LogBase,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenominatorConfig {
    pub mode: DenominatorMode,
    pub floor: f64,
}

impl Default for DenominatorConfig {
    fn default() -> Self {
        let d = Denominators::default();
        DenominatorConfig {
            mode: d.mode,
            floor: d.floor,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rho0Config {
    #[default]
    Uniform,
    Explicit(ComplexRows),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub integrator: IntegratorOptions,
    #[serde(default)]
    pub denominators: DenominatorConfig,
    #[serde(default)]
    pub sign: CouplingSign,
    #[serde(default)]
    pub rho0: Rho0Config,
    #[serde(default)]
    pub window: WindowSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn matrix_from_rows(rows: &ComplexRows, what: &str) -> Result<CMatrix> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Config(format!("{what} is empty")));
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::NotSquare {
            rows: n,
            cols: bad.len(),
        });
    }
    Ok(CMatrix::from_fn(n, n, |i, j| c64(rows[i][j][0], rows[i][j][1])))
}

fn hermitian_from_rows(rows: &ComplexRows, what: &str) -> Result<HermitianOperator> {
    HermitianOperator::new(matrix_from_rows(rows, what)?)
}

fn check_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be finite, got {value}")))
    }
}

impl RunConfig {
    /// The fixed-coupling Ising setup on the standard logarithmic protocol.
    pub fn ising_default() -> Self {
        RunConfig {
            model: ModelConfig::TwoQubitIsing {
                j: CouplingConfig::Fixed(1.0),
                h1: 0.1,
                h2: 0.2,
                z: 10.0,
            },
            schedule: ScheduleConfig {
                kind: ScheduleKind::Log,
                a: 1e-3,
                b: 0.1,
                t0: 10.1,
                t1: 100.0,
                log_base: LogBase::Natural,
            },
            noise: NoiseConfig::default(),
            integrator: IntegratorOptions::default(),
            denominators: DenominatorConfig::default(),
            sign: CouplingSign::Positive,
            rho0: Rho0Config::Uniform,
            window: WindowSpec::Unbounded,
            seed: 0,
            outputs: OutputConfig::default(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("configuration serializes");
        Sha256::digest(compact.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Checks everything a run would reject, without running.
    pub fn validate(&self) -> Result<()> {
        let spec = self.spec_with(self.nominal_j())?;
        self.schedule()?;
        self.integrator.validate()?;
        let n = self.noise;
        if !(n.sigma >= 0.0 && n.sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {}", n.sigma)));
        }
        if !(n.gamma >= 0.0 && n.gamma.is_finite()) {
            return Err(Error::Config(format!("noise gamma must be >= 0, got {}", n.gamma)));
        }
        if !(self.denominators.floor > 0.0 && self.denominators.floor.is_finite()) {
            return Err(Error::Config(format!(
                "denominator floor must be positive, got {}",
                self.denominators.floor
            )));
        }
        if let WindowSpec::Energy { radius } = self.window {
            if !(radius >= 0.0) {
                return Err(Error::Config(format!("window radius must be >= 0, got {radius}")));
            }
        }
        let t = self.tolerances;
        if !(t.entry >= 0.0 && t.level >= 0.0 && t.anticrossing_gap >= 0.0) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        if let ModelConfig::TwoQubitIsing {
            j: CouplingConfig::Gaussian { mean, std },
            ..
        } = self.model
        {
            check_finite(mean, "coupling mean")?;
            if !(std >= 0.0 && std.is_finite()) {
                return Err(Error::Config(format!("coupling std must be >= 0, got {std}")));
            }
        }
        let rho0 = self.rho0()?;
        if rho0.dim() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                found: rho0.dim(),
            });
        }
        Ok(())
    }

    fn nominal_j(&self) -> f64 {
        match self.model {
            ModelConfig::TwoQubitIsing {
                j: CouplingConfig::Fixed(j),
                ..
            } => j,
            ModelConfig::TwoQubitIsing {
                j: CouplingConfig::Gaussian { mean, .. },
                ..
            } => mean,
            ModelConfig::Generic { .. } => 0.0,
        }
    }

    fn spec_with(&self, j: f64) -> Result<HamiltonianSpec> {
        match &self.model {
            ModelConfig::TwoQubitIsing { h1, h2, z, .. } => {
                for (v, what) in [(j, "j"), (*h1, "h1"), (*h2, "h2"), (*z, "z")] {
                    check_finite(v, what)?;
                }
                Ok(build_two_qubit_ising(j, *h1, *h2, *z))
            }
            ModelConfig::Generic { h0, hb, z } => {
                HamiltonianSpec::new(hermitian_from_rows(h0, "h0")?, hermitian_from_rows(hb, "hb")?, *z)
            }
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let s = self.schedule;
        Schedule::with_base(s.kind, s.a, s.b, s.t0, s.t1, s.log_base)
    }

    pub fn rho0(&self) -> Result<DensityMatrix> {
        match &self.rho0 {
            Rho0Config::Uniform => Ok(uniform_rho0(self.dim())),
            Rho0Config::Explicit(rows) => DensityMatrix::new(matrix_from_rows(rows, "rho0")?),
        }
    }

    pub fn dim(&self) -> usize {
        match &self.model {
            ModelConfig::TwoQubitIsing { .. } => 4,
            ModelConfig::Generic { h0, .. } => h0.len(),
        }
    }

    pub fn master_options(&self) -> MasterOptions {
        MasterOptions {
            sign: self.sign,
            denominators: Denominators {
                mode: self.denominators.mode,
                floor: self.denominators.floor,
            },
        }
    }

    /// Realization `index` draws its coupling from stream `2 index` and its
    /// noise from stream `2 index + 1` of the seed, so realizations never
    /// share random numbers and do not depend on scheduling order.
    pub fn resolve(&self, seed: u64, index: u64) -> Result<Simulation> {
        let coupling_j = match self.model {
            ModelConfig::TwoQubitIsing {
                j: CouplingConfig::Gaussian { mean, std },
                ..
            } => {
                let normal = Normal::new(mean, std).map_err(|e| Error::Config(e.to_string()))?;
                Some(normal.sample(&mut stream_rng(seed, 2 * index)))
            }
            _ => None,
        };
        let spec = self.spec_with(coupling_j.unwrap_or_else(|| self.nominal_j()))?;
        let n = spec.dim();
        let noise = NoiseProcess::from_kind(
            self.noise.kind,
            n,
            self.noise.gamma,
            self.noise.sigma,
            stream_rng(seed, 2 * index + 1),
        )?;
        let metadata = RunMetadata {
            config_hash: self.hash(),
            config: serde_json::to_string(self)?,
            seed,
            realization: index,
            coupling_j,
            sign: self.sign.as_str().into(),
            method: self.integrator.method.as_str().into(),
            dt: self.integrator.dt,
            stride: self.integrator.stride,
        };
        Ok(Simulation {
            spec,
            schedule: self.schedule()?,
            rho0: self.rho0()?,
            noise,
            integrator: self.integrator,
            window: self.window,
            master: self.master_options(),
            record_noise: false,
            metadata,
        })
    }

    /// The single-run problem: realization 0 of the configured seed.
    pub fn simulation(&self) -> Result<Simulation> {
        self.resolve(self.seed, 0)
    }

    /// Recovers the configuration a trajectory was produced from.
    pub fn from_metadata(meta: &RunMetadata) -> Result<Self> {
        let cfg = Self::from_json(&meta.config)?;
        if cfg.hash() != meta.config_hash {
            return Err(Error::Config("configuration does not match its recorded hash".into()));
        }
        Ok(cfg)
    }
}
