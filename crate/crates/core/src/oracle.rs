//! Ground truth that shares no derivation with the gas picture: the von
//! Neumann equation `drho/dt = -i[H(t), rho]` integrated in the fixed
//! computational basis, then rotated into the instantaneous eigenbasis with
//! gauge-aligned eigenvectors, plus exact eigenvalue curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{simulate, NoisePath, Simulation, TimeGrid, Trajectory};
use crate::linalg::{c64, eigh, gauge_align, hermitize, CMatrix, EigenSystem, GaugeFrame, HermitianOperator};
use crate::master::DensityMatrix;
use crate::models::{HamiltonianSpec, Schedule};

/// Tracked eigenvectors must keep at least this overlap with their previous
/// selves; otherwise the oracle halves the interval and tracks through it.
pub const TRACKING_OVERLAP: f64 = 0.99;
const MAX_TRACKING_DEPTH: u32 = 48;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSample {
    pub t: f64,
    pub lambda: f64,
    /// Ascending eigenvalues of the full Hamiltonian.
    pub levels: Vec<f64>,
    pub rho_fixed: CMatrix,
    /// `rho` in the gauge-aligned instantaneous eigenbasis.
    pub rho_eigen: CMatrix,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OracleTrajectory {
    pub samples: Vec<OracleSample>,
}

/// Noise in the laboratory basis, linear in `lambda` over the current step.
struct NoiseSegment {
    start: CMatrix,
    rate: CMatrix,
    lambda0: f64,
}

impl NoiseSegment {
    fn at(&self, lambda: f64) -> CMatrix {
        &self.start + &self.rate * c64(lambda - self.lambda0, 0.0)
    }
}

fn hamiltonian(spec: &HamiltonianSpec, lambda: f64, noise: Option<&NoiseSegment>) -> Result<HermitianOperator> {
    match noise {
        Some(seg) => spec.hamiltonian_at(lambda, Some(&hermitize(&seg.at(lambda)))),
        None => spec.hamiltonian_at(lambda, None),
    }
}

fn von_neumann(h: &HermitianOperator, rho: &CMatrix) -> CMatrix {
    let hm = h.matrix();
    (hm * rho - rho * hm) * c64(0.0, -1.0)
}

fn smallest_overlap(frame: &GaugeFrame, aligned: &EigenSystem) -> f64 {
    let o = frame.reference().adjoint() * &aligned.vectors;
    (0..o.nrows()).map(|k| o[(k, k)].re).fold(f64::INFINITY, f64::min)
}

/// Carries the eigenframe from `a` to `b`, subdividing where eigenvectors
/// turn quickly.
fn track_frame(
    frame: &GaugeFrame,
    h_at: &dyn Fn(f64) -> Result<HermitianOperator>,
    a: f64,
    b: f64,
    depth: u32,
) -> Result<EigenSystem> {
    let attempt = gauge_align(frame, &eigh(&h_at(b)?));
    match attempt {
        Ok(aligned) if smallest_overlap(frame, &aligned) >= TRACKING_OVERLAP => Ok(aligned),
        other if depth >= MAX_TRACKING_DEPTH => other,
        _ => {
            let mid = 0.5 * (a + b);
            let half = track_frame(frame, h_at, a, mid, depth + 1)?;
            track_frame(&GaugeFrame::from(&half), h_at, mid, b, depth + 1)
        }
    }
}

/// Integrates `drho/dt = -i[H, rho]` with RK4 on `grid` and records every
/// `stride`-th point. The eigenframe starts from `eigh(H(lambda(t0)))`, the
/// same basis the gas picture starts in. A `noise_path` recorded by the gas
/// picture is replayed: each step's increment, given in the eigenbasis at the
/// step start, is rotated into the laboratory basis and spread linearly in
/// `lambda` over the step.
pub fn direct_evolve(
    spec: &HamiltonianSpec,
    schedule: &Schedule,
    rho0_fixed: &DensityMatrix,
    grid: &TimeGrid,
    stride: usize,
    noise_path: Option<&NoisePath>,
) -> Result<OracleTrajectory> {
    let n = spec.dim();
    if rho0_fixed.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rho0_fixed.dim(),
        });
    }
    if let Some(p) = noise_path {
        if p.steps.len() != grid.steps() {
            return Err(Error::GridMismatch(format!(
                "noise path has {} steps, grid has {}",
                p.steps.len(),
                grid.steps()
            )));
        }
    }
    let stride = stride.max(1);
    let mut t = grid.time(0);
    let mut lambda = schedule.lambda(t)?;
    let mut basis = eigh(&spec.hamiltonian_at(lambda, None)?);
    let mut dh = CMatrix::zeros(n, n);
    let mut rho = rho0_fixed.matrix().clone();
    let mut samples = Vec::with_capacity(grid.steps() / stride + 2);

    let record = |t: f64, lambda: f64, basis: &EigenSystem, rho: &CMatrix| {
        let mut levels = basis.values.clone();
        levels.sort_by(f64::total_cmp);
        OracleSample {
            t,
            lambda,
            levels,
            rho_fixed: rho.clone(),
            rho_eigen: hermitize(&(basis.vectors.adjoint() * rho * &basis.vectors)).into_matrix(),
        }
    };
    samples.push(record(t, lambda, &basis, &rho));

    for k in 1..=grid.steps() {
        let t_next = grid.time(k);
        let lambda_next = schedule.lambda(t_next)?;
        let segment = match noise_path.and_then(|p| p.steps[k - 1].as_ref()) {
            Some(step) => {
                let fixed = &basis.vectors * &step.d_dh * basis.vectors.adjoint();
                Some(NoiseSegment {
                    start: dh.clone(),
                    rate: fixed / c64(step.d_lambda, 0.0),
                    lambda0: lambda,
                })
            }
            None if noise_path.is_some() => Some(NoiseSegment {
                start: dh.clone(),
                rate: CMatrix::zeros(n, n),
                lambda0: lambda,
            }),
            None => None,
        };
        let h_at = |tau: f64| -> Result<HermitianOperator> { hamiltonian(spec, schedule.lambda(tau)?, segment.as_ref()) };

        let h = t_next - t;
        let mid = t + 0.5 * h;
        let h0 = h_at(t)?;
        let hm = h_at(mid)?;
        let h1 = h_at(t_next)?;
        let k1 = von_neumann(&h0, &rho);
        let k2 = von_neumann(&hm, &(&rho + &k1 * c64(0.5 * h, 0.0)));
        let k3 = von_neumann(&hm, &(&rho + &k2 * c64(0.5 * h, 0.0)));
        let k4 = von_neumann(&h1, &(&rho + &k3 * c64(h, 0.0)));
        rho += (k1 + (k2 + k3) * c64(2.0, 0.0) + k4) * c64(h / 6.0, 0.0);
        rho = hermitize(&rho).into_matrix();

        basis = track_frame(&GaugeFrame::from(&basis), &h_at, t, t_next, 0).map_err(|e| match e {
            Error::AmbiguousAlignment { level, overlap } => {
                Error::GridMismatch(format!("eigenframe lost at t = {t_next}: level {level}, overlap {overlap:.3}"))
            }
            other => other,
        })?;
        if let Some(seg) = &segment {
            dh = seg.at(lambda_next);
        }
        t = t_next;
        lambda = lambda_next;
        if k % stride == 0 || k == grid.steps() {
            samples.push(record(t, lambda, &basis, &rho));
        }
    }
    Ok(OracleTrajectory { samples })
}

/// Ascending eigenvalues of the noiseless `H(lambda(t))` at each time.
pub fn eigen_levels(spec: &HamiltonianSpec, schedule: &Schedule, times: &[f64]) -> Result<Vec<Vec<f64>>> {
    times
        .par_iter()
        .map(|&t| Ok(eigh(&spec.hamiltonian_at(schedule.lambda(t)?, None)?).values))
        .collect()
}

/// Pass/fail thresholds for [`ComparisonReport::within`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub entry: f64,
    pub level: f64,
    /// Samples whose smallest exact gap is below this are reported apart
    /// and not held to `entry`.
    pub anticrossing_gap: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            entry: 1e-4,
            level: 1e-5,
            anticrossing_gap: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryLocation {
    pub t: f64,
    pub u: usize,
    pub w: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelLocation {
    pub t: f64,
    pub n: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub samples: usize,
    pub max_abs_entry_diff: f64,
    pub rms_diff: f64,
    pub max_level_diff: f64,
    pub worst_entry: Option<EntryLocation>,
    pub worst_level: Option<LevelLocation>,
    pub excluded_samples: usize,
    pub excluded_max_abs_entry_diff: f64,
}

impl ComparisonReport {
    pub fn within(&self, tol: &Tolerances) -> bool {
        self.max_abs_entry_diff <= tol.entry && self.max_level_diff <= tol.level
    }
}

/// Entrywise and levelwise deviations of a gas-picture trajectory from the
/// oracle on their shared sample times.
pub fn compare(a: &Trajectory, b: &OracleTrajectory, anticrossing_gap: f64) -> Result<ComparisonReport> {
    if a.samples.len() != b.samples.len() {
        return Err(Error::GridMismatch(format!(
            "{} samples against {}",
            a.samples.len(),
            b.samples.len()
        )));
    }
    let mut report = ComparisonReport {
        samples: a.samples.len(),
        ..Default::default()
    };
    let mut sum_sq = 0.0;
    let mut count = 0usize;
    for (sa, sb) in a.samples.iter().zip(&b.samples) {
        if sa.t != sb.t || sa.x.len() != sb.levels.len() {
            return Err(Error::GridMismatch(format!("sample at t = {} against t = {}", sa.t, sb.t)));
        }
        let n = sa.x.len();
        for i in 0..n {
            let diff = (sa.x[i] - sb.levels[i]).abs();
            if !(diff <= report.max_level_diff) {
                report.max_level_diff = diff;
                report.worst_level = Some(LevelLocation { t: sa.t, n: i });
            }
        }
        let min_gap = sb.levels.windows(2).map(|p| p[1] - p[0]).fold(f64::INFINITY, f64::min);
        let excluded = min_gap < anticrossing_gap;
        if excluded {
            report.excluded_samples += 1;
        }
        for u in 0..n {
            for w in 0..n {
                let diff = (sa.rho[(u, w)] - sb.rho_eigen[(u, w)]).norm();
                if excluded {
                    report.excluded_max_abs_entry_diff = report.excluded_max_abs_entry_diff.max(diff);
                    continue;
                }
                sum_sq += diff * diff;
                count += 1;
                if !(diff <= report.max_abs_entry_diff) {
                    report.max_abs_entry_diff = diff;
                    report.worst_entry = Some(EntryLocation { t: sa.t, u, w });
                }
            }
        }
    }
    report.rms_diff = if count > 0 { (sum_sq / count as f64).sqrt() } else { 0.0 };
    Ok(report)
}

/// Both pipelines on the grid of `sim`, the oracle replaying the gas
/// picture's noise path.
pub fn run_both(sim: &Simulation) -> Result<(Trajectory, OracleTrajectory)> {
    let mut sim = sim.clone();
    sim.record_noise = true;
    let traj = simulate(&sim)?;
    let rho0 = DensityMatrix::new(sim.rho0.to_fixed_basis(&traj.initial_basis.vectors))?;
    let grid = TimeGrid::new(sim.schedule.t0(), sim.schedule.t1(), sim.integrator.dt)?;
    let oracle = direct_evolve(&sim.spec, &sim.schedule, &rho0, &grid, sim.integrator.stride, traj.noise_path.as_ref())?;
    Ok((traj, oracle))
}

/// The oracle view of a gas-picture trajectory: its own levels and `rho`,
/// with no laboratory-basis data.
pub fn as_oracle(traj: &Trajectory) -> OracleTrajectory {
    OracleTrajectory {
        samples: traj
            .samples
            .iter()
            .map(|s| OracleSample {
                t: s.t,
                lambda: s.lambda,
                levels: s.x.clone(),
                rho_fixed: CMatrix::zeros(0, 0),
                rho_eigen: s.rho.clone(),
            })
            .collect(),
    }
}
