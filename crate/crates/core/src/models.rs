//! Hamiltonian specifications `H(lambda) = H0 + lambda * Z * Hb (+ dh)`, the
//! two-qubit Ising instance, initial density matrices and driving schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, HermitianOperator};
use crate::master::DensityMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec {
    h0: HermitianOperator,
    hb: HermitianOperator,
    z: f64,
}

impl HamiltonianSpec {
    pub fn new(h0: HermitianOperator, hb: HermitianOperator, z: f64) -> Result<Self> {
        if h0.dim() != hb.dim() {
            return Err(Error::DimensionMismatch {
                expected: h0.dim(),
                found: hb.dim(),
            });
        }
        if !z.is_finite() {
            return Err(Error::Config(format!("bias scale must be finite, got {z}")));
        }
        Ok(HamiltonianSpec { h0, hb, z })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn h0(&self) -> &HermitianOperator {
        &self.h0
    }

    pub fn hb(&self) -> &HermitianOperator {
        &self.hb
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// The scaled perturbation `Z * Hb`, i.e. `dH/dlambda` without noise.
    pub fn bias(&self) -> HermitianOperator {
        self.hb.scale(self.z)
    }

    pub fn hamiltonian_at(
        &self,
        lambda: f64,
        dh: Option<&HermitianOperator>,
    ) -> Result<HermitianOperator> {
        let mut m: CMatrix = self.h0.matrix() + self.hb.matrix() * c64(lambda * self.z, 0.0);
        if let Some(dh) = dh {
            if dh.dim() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: dh.dim(),
                });
            }
            m += dh.matrix();
        }
        Ok(HermitianOperator::from_matrix_unchecked(m))
    }
}

/// `J sz1 sz2 + lambda Z (h1 sx1 + h2 sx2)` in the computational basis
/// `|00>, |01>, |10>, |11>`.
pub fn build_two_qubit_ising(j: f64, h1: f64, h2: f64, z: f64) -> HamiltonianSpec {
    let h0 = HermitianOperator::from_diagonal(&[j, -j, -j, j]);
    #[rustfmt::skip]
    let hb = HermitianOperator::from_real_rows(4, &[
        0.0, h2,  h1,  0.0,
        h2,  0.0, 0.0, h1,
        h1,  0.0, 0.0, h2,
        0.0, h1,  h2,  0.0,
    ])
    .expect("Ising bias is symmetric");
    HamiltonianSpec { h0, hb, z }
}

/// The pure equal-weight superposition `|psi><psi|` with every entry `1/n`.
pub fn uniform_rho0(n: usize) -> DensityMatrix {
    assert!(n >= 1, "density matrix needs at least one level");
    DensityMatrix::from_matrix_unchecked(CMatrix::from_element(n, n, c64(1.0 / n as f64, 0.0)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    /// `lambda = A log(B t)`
    #[default]
    Log,
    /// `lambda = A t`
    Linear,
    /// `lambda = A`
    Constant,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

/// The driving protocol `lambda(t)` on `[t0, t1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    kind: ScheduleKind,
    a: f64,
    b: f64,
    t0: f64,
    t1: f64,
    base: LogBase,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, a: f64, b: f64, t0: f64, t1: f64) -> Result<Self> {
        Self::with_base(kind, a, b, t0, t1, LogBase::Natural)
    }

    pub fn with_base(
        kind: ScheduleKind,
        a: f64,
        b: f64,
        t0: f64,
        t1: f64,
        base: LogBase,
    ) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && t0.is_finite() && t1.is_finite()) {
            return Err(Error::InvalidSchedule("non-finite parameter".into()));
        }
        if !(t0 < t1) {
            return Err(Error::InvalidSchedule(format!("t0 = {t0} must be below t1 = {t1}")));
        }
        if kind == ScheduleKind::Log && !(b * t0 > 0.0 && b * t1 > 0.0) {
            return Err(Error::InvalidSchedule(format!(
                "log schedule needs B*t > 0 on [{t0}, {t1}], B = {b}"
            )));
        }
        Ok(Schedule {
            kind,
            a,
            b,
            t0,
            t1,
            base,
        })
    }

    /// The standard protocol `lambda = 1e-3 ln(0.1 t)` on `[t0, t1]`.
    pub fn logarithmic(t0: f64, t1: f64) -> Result<Self> {
        Self::new(ScheduleKind::Log, 1e-3, 0.1, t0, t1)
    }

    pub fn constant(value: f64, t0: f64, t1: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, value, 0.0, t0, t1)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn base(&self) -> LogBase {
        self.base
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    /// `(lambda, dlambda/dt)` at `t`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        if !(t >= self.t0 && t <= self.t1) {
            return Err(Error::OutOfRange {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        match self.kind {
            ScheduleKind::Log => {
                let arg = self.b * t;
                if !(arg > 0.0) {
                    return Err(Error::InvalidSchedule(format!("log argument B*t = {arg} <= 0")));
                }
                let (log, scale) = match self.base {
                    LogBase::Natural => (arg.ln(), 1.0),
                    LogBase::Ten => (arg.log10(), std::f64::consts::LN_10),
                };
                Ok((self.a * log, self.a / (t * scale)))
            }
            ScheduleKind::Linear => Ok((self.a * t, self.a)),
            ScheduleKind::Constant => Ok((self.a, 0.0)),
        }
    }

    pub fn lambda(&self, t: f64) -> Result<f64> {
        self.eval(t).map(|(l, _)| l)
    }
}
