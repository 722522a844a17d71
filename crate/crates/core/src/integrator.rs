//! Time stepping of the coupled system: the gas coordinates evolve in
//! `lambda` and are carried onto the `t` grid by the chain rule, the density
//! matrix evolves directly in `t`.
//!
//! The noise is drawn once per grid step, in the instantaneous eigenbasis at
//! the step start, and held fixed in the laboratory basis over that step as
//! the rate `d_dh / d_lambda`; both right-hand sides see the same rate. The
//! RK4 step then integrates the exact moving-frame dynamics of a Hamiltonian
//! whose noise part is piecewise linear in `lambda`, which is what keeps every
//! realization unitary.
//!
//! RK4 steps split themselves into substeps when the frame rotates too fast
//! for the grid spacing. This only happens when noise couples levels that are
//! much closer together than the noise increment; noiseless runs on sensible
//! grids never substep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{gas_hamiltonian, init_levels_with_basis, interaction_terms, stochastic_terms, LevelDerivative, LevelState};
use crate::linalg::{add_scaled, c64, CMatrix, EigenSystem};
use crate::master::{commutator, coupling_from, evolve_with, DensityMatrix, MasterOptions, WindowSpec};
use crate::models::{HamiltonianSpec, Schedule};
use crate::noise::NoiseProcess;

/// Hard cap on RK4 substeps within one grid step.
pub const MAX_SUBSTEPS: usize = 1 << 20;

/// A substep may shrink a gap by `max_stage_rotation / GAP_RATE_WEIGHT` of
/// itself.
const GAP_RATE_WEIGHT: f64 = 0.1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
    EulerMaruyama,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::EulerMaruyama => "euler_maruyama",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorOptions {
    pub method: Method,
    pub dt: f64,
    pub stride: usize,
    /// Largest frame rotation (radians) an RK4 substep may take.
    pub max_stage_rotation: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            method: Method::Rk4,
            dt: 1e-3,
            stride: 100,
            max_stage_rotation: 0.01,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(self.max_stage_rotation > 0.0 && self.max_stage_rotation.is_finite()) {
            return Err(Error::Config(format!(
                "max_stage_rotation must be positive, got {}",
                self.max_stage_rotation
            )));
        }
        Ok(())
    }
}

/// `t_k = t0 + k dt` for `k < steps`, with the last point pinned to `t1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::NonPositiveStep(dt));
        }
        if !(t1 > t0) {
            return Err(Error::InvalidSchedule(format!("t1 = {t1} must exceed t0 = {t0}")));
        }
        let ratio = (t1 - t0) / dt;
        let nearest = ratio.round();
        let steps = if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            nearest
        } else {
            ratio.ceil()
        };
        let steps = (steps as usize).max(1);
        Ok(TimeGrid { t0, t1, dt, steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt
        }
    }

    /// Step indices that get recorded: every `stride`-th plus the last.
    pub fn sample_indices(&self, stride: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..=self.steps).step_by(stride.max(1)).collect();
        if out.last() != Some(&self.steps) {
            out.push(self.steps);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CoupledState {
    pub t: f64,
    pub levels: LevelState,
    pub rho: DensityMatrix,
    pub noise: NoiseProcess,
}

/// Everything that stays fixed while a trajectory is stepped.
#[derive(Clone, Debug)]
pub struct StepContext {
    pub schedule: Schedule,
    pub window: WindowSpec,
    pub master: MasterOptions,
    pub max_stage_rotation: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub substeps: usize,
    pub hermitize_change: f64,
}

/// The noise drawn for one grid step, in the eigenbasis at the step start.
#[derive(Clone, Debug, PartialEq)]
pub struct StepNoise {
    pub d_lambda: f64,
    pub d_dh: CMatrix,
}

fn draw_step_noise(noise: &mut NoiseProcess, d_lambda: f64) -> Result<Option<StepNoise>> {
    if noise.kind() == crate::noise::NoiseKind::None || d_lambda == 0.0 {
        return Ok(None);
    }
    let inc = noise.step(d_lambda.abs())?;
    Ok(Some(StepNoise {
        d_lambda,
        d_dh: inc.d_dh.into_matrix(),
    }))
}

struct Deriv {
    levels: LevelDerivative,
    rho: CMatrix,
    noise: Option<CMatrix>,
}

/// Derivatives of the gas, of `rho`, and of the noise rate `d` as seen from
/// the moving frame. `d` is constant in the fixed basis, so in the eigenbasis
/// it turns with the frame: `dD/dlambda = [G, D]`.
fn coupled_rhs(
    ctx: &StepContext,
    tau: f64,
    s: &LevelState,
    rho: &DensityMatrix,
    d: Option<&CMatrix>,
) -> Result<Deriv> {
    let (_, lambda_dot) = ctx.schedule.eval(tau)?;
    let sep = ctx.master.denominators.separations(&s.x)?;
    let levels = match d {
        Some(d) => stochastic_terms(s, d, &sep),
        None => interaction_terms(s, &sep),
    }
    .scaled(lambda_dot);
    let full = coupling_from(s, d, WindowSpec::Unbounded, &sep);
    let noise = d.map(|d| {
        let mut k = commutator(&full, d);
        k.scale_mut(lambda_dot);
        k
    });
    let rho = if ctx.window == WindowSpec::Unbounded {
        evolve_with(s, rho, lambda_dot, &full, ctx.master.sign)
    } else {
        let g = coupling_from(s, d, ctx.window, &sep);
        evolve_with(s, rho, lambda_dot, &g, ctx.master.sign)
    };
    Ok(Deriv { levels, rho, noise })
}

/// Rate that limits an RK4 substep: the rotation rate of the moving frame
/// and (scaled down, since RK4 tolerates it) the relative rate at which any
/// gap between levels changes.
fn stiffness(ctx: &StepContext, t: f64, s: &LevelState, d: Option<&CMatrix>) -> Result<f64> {
    let (_, lambda_dot) = ctx.schedule.eval(t)?;
    let sep = ctx.master.denominators.separations(&s.x)?;
    let n = s.dim();
    let speed = |m: usize| s.v[m] + d.map_or(0.0, |d| d[(m, m)].re);
    let mut rate = 0.0f64;
    for m in 0..n {
        for k in (m + 1)..n {
            let gap = sep[(m, k)].abs();
            let mut g = s.l[(m, k)].norm() / (gap * gap);
            if let Some(d) = d {
                g += d[(m, k)].norm() / gap;
            }
            let closing = GAP_RATE_WEIGHT * (speed(m) - speed(k)).abs() / gap;
            rate = rate.max(g).max(closing);
        }
    }
    Ok(lambda_dot.abs() * rate)
}

type Stage = (LevelState, DensityMatrix, Option<CMatrix>);

fn stage(base: &Stage, k: &Deriv, h: f64) -> Stage {
    (
        base.0.advanced(&k.levels, h),
        base.1.advanced(&k.rho, h),
        base.2.as_ref().map(|d| {
            let mut out = d.clone();
            add_scaled(&mut out, h, k.noise.as_ref().expect("noise derivative"));
            out
        }),
    )
}

fn rk4_substep(ctx: &StepContext, t: f64, h: f64, t_end: f64, y: &Stage) -> Result<Stage> {
    let mid = (t + 0.5 * h).min(t_end);
    let end = (t + h).min(t_end);
    let rhs = |tau: f64, y: &Stage| coupled_rhs(ctx, tau, &y.0, &y.1, y.2.as_ref());
    let k1 = rhs(t, y)?;
    let k2 = rhs(mid, &stage(y, &k1, 0.5 * h))?;
    let k3 = rhs(mid, &stage(y, &k2, 0.5 * h))?;
    let k4 = rhs(end, &stage(y, &k3, h))?;
    let dl = LevelDerivative::combine(&[
        (1.0 / 6.0, &k1.levels),
        (1.0 / 3.0, &k2.levels),
        (1.0 / 3.0, &k3.levels),
        (1.0 / 6.0, &k4.levels),
    ]);
    // (a + 2b + 2c + d) / 6, accumulated in place
    let weigh = |a: &CMatrix, b: &CMatrix, c: &CMatrix, d: &CMatrix| {
        let mut out = a.clone();
        add_scaled(&mut out, 2.0, b);
        add_scaled(&mut out, 2.0, c);
        out.zip_apply(d, |a, b| *a = (*a + b) / 6.0);
        out
    };
    let drho = weigh(&k1.rho, &k2.rho, &k3.rho, &k4.rho);
    let noise = match (&y.2, &k1.noise, &k2.noise, &k3.noise, &k4.noise) {
        (Some(d), Some(a), Some(b), Some(c), Some(e)) => {
            let mut out = d.clone();
            add_scaled(&mut out, h, &weigh(a, b, c, e));
            Some(out)
        }
        _ => None,
    };
    Ok((y.0.advanced(&dl, h), y.1.advanced(&drho, h), noise))
}

/// One grid step of classical RK4 from `state.t` to `t_next`. The noise (if
/// any) is drawn once and held fixed in the laboratory basis over the step.
pub fn rk4_step(state: &mut CoupledState, t_next: f64, ctx: &StepContext) -> Result<(StepReport, Option<StepNoise>)> {
    let t0 = state.t;
    let dt = t_next - t0;
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    let d_lambda = ctx.schedule.lambda(t_next)? - ctx.schedule.lambda(t0)?;
    let noise = draw_step_noise(&mut state.noise, d_lambda)?;
    let rate = noise.as_ref().map(|n| &n.d_dh / c64(n.d_lambda, 0.0));

    let mut y: Stage = (state.levels.clone(), state.rho.clone(), rate);
    let mut t = t0;
    let mut substeps = 0;
    while t < t_next {
        let remaining = t_next - t;
        let r = stiffness(ctx, t, &y.0, y.2.as_ref()).map_err(|e| e.at(t))?;
        let mut h = remaining;
        if r * h > ctx.max_stage_rotation {
            h = ctx.max_stage_rotation / r;
            // Avoid a sliver at the end of the step.
            if remaining - h < 0.25 * h {
                h = 0.5 * remaining;
            }
        }
        substeps += 1;
        if substeps > MAX_SUBSTEPS {
            return Err(Error::StepCollapse { t, substeps });
        }
        y = rk4_substep(ctx, t, h, t_next, &y).map_err(|e| e.at(t))?;
        t = if h == remaining { t_next } else { t + h };
    }
    state.levels = y.0;
    state.rho = y.1;
    state.t = t_next;
    let hermitize_change = state.rho.hermitize_in_place();
    Ok((
        StepReport {
            substeps,
            hermitize_change,
        },
        noise,
    ))
}

/// First-order step. The noise enters as the increment itself, scaled so
/// that `lambda_dot * dt * D` equals the drawn `d_dh`.
pub fn euler_maruyama_step(
    state: &mut CoupledState,
    t_next: f64,
    ctx: &StepContext,
) -> Result<(StepReport, Option<StepNoise>)> {
    let t = state.t;
    let dt = t_next - t;
    if !(dt > 0.0) {
        return Err(Error::NonPositiveStep(dt));
    }
    let d_lambda = ctx.schedule.lambda(t_next)? - ctx.schedule.lambda(t)?;
    let noise = draw_step_noise(&mut state.noise, d_lambda)?;
    let (_, lambda_dot) = ctx.schedule.eval(t)?;
    let rate = match &noise {
        Some(n) if lambda_dot != 0.0 => Some(&n.d_dh / c64(lambda_dot * dt, 0.0)),
        _ => None,
    };
    let k = coupled_rhs(ctx, t, &state.levels, &state.rho, rate.as_ref()).map_err(|e| e.at(t))?;
    state.levels = state.levels.advanced(&k.levels, dt);
    state.rho = state.rho.advanced(&k.rho, dt);
    state.t = t_next;
    let hermitize_change = state.rho.hermitize_in_place();
    Ok((
        StepReport {
            substeps: 1,
            hermitize_change,
        },
        noise,
    ))
}

/// One recorded point of a trajectory. `rho` is in the instantaneous
/// eigenbasis.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub lambda: f64,
    pub x: Vec<f64>,
    pub rho: CMatrix,
    pub purity: f64,
    pub trace_error: f64,
    pub hermiticity_error: f64,
    pub gas_energy: f64,
    pub momentum: f64,
}

impl Sample {
    pub fn occupations(&self) -> Vec<f64> {
        (0..self.x.len()).map(|i| self.rho[(i, i)].re).collect()
    }
}

/// Facts needed to reproduce a trajectory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    /// The resolved configuration as JSON; rerunning it reproduces the run.
    pub config: String,
    pub seed: u64,
    pub realization: u64,
    /// The Ising coupling actually used, when it was drawn at random.
    pub coupling_j: Option<f64>,
    pub sign: String,
    pub method: String,
    pub dt: f64,
    pub stride: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub steps: usize,
    /// Substeps beyond one per grid step.
    pub extra_substeps: usize,
    pub max_substeps_in_step: usize,
    pub max_hermitize_change: f64,
}

/// Per-step noise increments, eigenbasis of the step start.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoisePath {
    pub steps: Vec<Option<StepNoise>>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub stride: usize,
    pub metadata: RunMetadata,
    pub diagnostics: RunDiagnostics,
    pub noise_path: Option<NoisePath>,
    /// Eigenbasis of `H(lambda(t0))` the run started in.
    pub initial_basis: EigenSystem,
}

/// A fully resolved single-realization problem.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub spec: HamiltonianSpec,
    pub schedule: Schedule,
    pub rho0: DensityMatrix,
    pub noise: NoiseProcess,
    pub integrator: IntegratorOptions,
    pub window: WindowSpec,
    pub master: MasterOptions,
    pub record_noise: bool,
    pub metadata: RunMetadata,
}

fn sample(state: &CoupledState, schedule: &Schedule, master: &MasterOptions) -> Result<Sample> {
    let lambda = schedule.lambda(state.t)?;
    let gas_energy = gas_hamiltonian(&state.levels, &master.denominators).unwrap_or(f64::NAN);
    Ok(Sample {
        t: state.t,
        lambda,
        x: state.levels.x.clone(),
        rho: state.rho.matrix().clone(),
        purity: state.rho.purity(),
        trace_error: state.rho.trace_error(),
        hermiticity_error: state.rho.hermiticity_error(),
        gas_energy,
        momentum: state.levels.total_momentum(),
    })
}

/// Initializes the gas at `lambda(t0)` and steps to `t1`.
pub fn simulate(sim: &Simulation) -> Result<Trajectory> {
    let opts = sim.integrator;
    opts.validate()?;
    if sim.rho0.dim() != sim.spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: sim.spec.dim(),
            found: sim.rho0.dim(),
        });
    }
    let schedule = sim.schedule;
    let grid = TimeGrid::new(schedule.t0(), schedule.t1(), opts.dt)?;
    let (levels, basis) = init_levels_with_basis(&sim.spec, schedule.lambda(schedule.t0())?)
        .map_err(|e| e.at(schedule.t0()))?;
    let mut state = CoupledState {
        t: schedule.t0(),
        levels,
        rho: sim.rho0.clone(),
        noise: sim.noise.clone(),
    };
    let ctx = StepContext {
        schedule,
        window: sim.window,
        master: sim.master,
        max_stage_rotation: opts.max_stage_rotation,
    };
    let mut diagnostics = RunDiagnostics::default();
    let mut path = sim.record_noise.then(NoisePath::default);
    let mut samples = Vec::with_capacity(grid.steps() / opts.stride + 2);
    samples.push(sample(&state, &schedule, &sim.master)?);
    for k in 1..=grid.steps() {
        let t_next = grid.time(k);
        let (report, noise) = match opts.method {
            Method::Rk4 => rk4_step(&mut state, t_next, &ctx)?,
            Method::EulerMaruyama => euler_maruyama_step(&mut state, t_next, &ctx)?,
        };
        diagnostics.steps += 1;
        diagnostics.extra_substeps += report.substeps - 1;
        diagnostics.max_substeps_in_step = diagnostics.max_substeps_in_step.max(report.substeps);
        diagnostics.max_hermitize_change = diagnostics.max_hermitize_change.max(report.hermitize_change);
        if let Some(p) = path.as_mut() {
            p.steps.push(noise);
        }
        if k % opts.stride == 0 || k == grid.steps() {
            samples.push(sample(&state, &schedule, &sim.master)?);
        }
    }
    Ok(Trajectory {
        samples,
        stride: opts.stride,
        metadata: sim.metadata.clone(),
        diagnostics,
        noise_path: path,
        initial_basis: basis,
    })
}
