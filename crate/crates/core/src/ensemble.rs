//! Many realizations of one configuration, differing only in the random
//! streams they draw the coupling and the noise from.
//!
//! Realizations run in parallel chunks; their samples are folded into the
//! statistics strictly in realization order, so the thread count never
//! changes a single bit of the result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::integrator::{simulate, Trajectory};
use crate::linalg::{purity, CMatrix};

const CHUNK: usize = 32;

/// A realization that aborted, kept so that dropping it is visible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub realization: u64,
    pub coupling_j: Option<f64>,
    pub t: Option<f64>,
    pub category: String,
    pub message: String,
}

/// Per-time statistics over the realizations that completed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub master_seed: u64,
    pub requested: usize,
    pub completed: usize,
    pub times: Vec<f64>,
    pub mean_occupations: Vec<Vec<f64>>,
    /// Population standard deviation; zero for a single realization.
    pub std_occupations: Vec<Vec<f64>>,
    /// Mean and spread of each realization's own `tr(rho^2)`.
    pub mean_purity: Vec<f64>,
    pub std_purity: Vec<f64>,
    /// `tr(rho_bar^2)` of the ensemble-averaged density matrix.
    pub ensemble_purity: Vec<f64>,
    /// Per realization, the largest `|tr(rho^2)(t) - tr(rho^2)(t0)|`.
    pub purity_drift: Vec<f64>,
    pub failures: Vec<Failure>,
}

/// Welford accumulator, fed in a fixed order.
#[derive(Clone, Copy, Debug, Default)]
struct Running {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        if self.count > 0.0 {
            (self.m2 / self.count).max(0.0).sqrt()
        } else {
            0.0
        }
    }
}

struct Accumulator {
    times: Vec<f64>,
    occupations: Vec<Vec<Running>>,
    purity: Vec<Running>,
    rho_sum: Vec<CMatrix>,
    completed: usize,
}

impl Accumulator {
    fn new(first: &Trajectory) -> Self {
        let n = first.samples[0].x.len();
        let len = first.samples.len();
        Accumulator {
            times: first.samples.iter().map(|s| s.t).collect(),
            occupations: vec![vec![Running::default(); n]; len],
            purity: vec![Running::default(); len],
            rho_sum: vec![CMatrix::zeros(n, n); len],
            completed: 0,
        }
    }

    fn add(&mut self, traj: &Trajectory) -> Result<()> {
        if traj.samples.len() != self.times.len() {
            return Err(Error::GridMismatch(format!(
                "realization {} has {} samples, expected {}",
                traj.metadata.realization,
                traj.samples.len(),
                self.times.len()
            )));
        }
        for (k, s) in traj.samples.iter().enumerate() {
            for (acc, &o) in self.occupations[k].iter_mut().zip(&s.occupations()) {
                acc.push(o);
            }
            self.purity[k].push(s.purity);
            self.rho_sum[k] += &s.rho;
        }
        self.completed += 1;
        Ok(())
    }
}

fn drift(traj: &Trajectory) -> f64 {
    let p0 = traj.samples[0].purity;
    traj.samples.iter().map(|s| (s.purity - p0).abs()).fold(0.0, f64::max)
}

/// Runs realizations `0..r` of `config` under `master_seed`.
pub fn run_ensemble(config: &RunConfig, r: usize, master_seed: u64) -> Result<EnsembleStats> {
    if r == 0 {
        return Err(Error::Config("ensemble size must be at least 1".into()));
    }
    config.validate()?;
    let mut acc: Option<Accumulator> = None;
    let mut stats = EnsembleStats {
        master_seed,
        requested: r,
        ..Default::default()
    };
    let indices: Vec<u64> = (0..r as u64).collect();
    for chunk in indices.chunks(CHUNK) {
        let results: Vec<(u64, Option<f64>, Result<Trajectory>)> = chunk
            .par_iter()
            .map(|&i| match config.resolve(master_seed, i) {
                Ok(sim) => {
                    let j = sim.metadata.coupling_j;
                    (i, j, simulate(&sim))
                }
                Err(e) => (i, None, Err(e)),
            })
            .collect();
        for (i, coupling_j, result) in results {
            match result {
                Ok(traj) => {
                    stats.purity_drift.push(drift(&traj));
                    acc.get_or_insert_with(|| Accumulator::new(&traj)).add(&traj)?;
                }
                Err(e) => {
                    let t = match e {
                        Error::DegenerateLevels { t, .. } => t,
                        Error::StepCollapse { t, .. } => Some(t),
                        _ => None,
                    };
                    if e.category() != crate::error::ErrorCategory::Degeneracy {
                        return Err(e);
                    }
                    stats.failures.push(Failure {
                        realization: i,
                        coupling_j,
                        t,
                        category: e.category().as_str().into(),
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    let Some(acc) = acc else {
        return Err(Error::Config(format!("all {r} realizations failed")));
    };
    let c = acc.completed as f64;
    stats.completed = acc.completed;
    stats.times = acc.times;
    stats.mean_occupations = acc.occupations.iter().map(|row| row.iter().map(|a| a.mean).collect()).collect();
    stats.std_occupations = acc.occupations.iter().map(|row| row.iter().map(Running::std).collect()).collect();
    stats.mean_purity = acc.purity.iter().map(|a| a.mean).collect();
    stats.std_purity = acc.purity.iter().map(Running::std).collect();
    stats.ensemble_purity = acc.rho_sum.iter().map(|m| purity(&(m / crate::linalg::c64(c, 0.0)))).collect();
    Ok(stats)
}
