//! Hermitian noise processes `dh(lambda)` indexed by the driving parameter.
//!
//! Increments follow the rotation-invariant Gaussian convention: diagonal
//! entries are real `N(0, sigma^2 dlambda)`, off-diagonal entries are
//! `(x + iy)/sqrt(2)` with `x, y ~ N(0, sigma^2 dlambda)`, mirrored by
//! conjugation. Because the law is invariant under unitary changes of basis,
//! an increment may be read in whichever basis the consumer works in; the
//! level dynamics read it in the instantaneous eigenbasis.
//!
//! Random numbers are drawn in a fixed order (diagonal first, then the upper
//! triangle row by row, real part before imaginary), so a seed fixes the path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c64, CMatrix, HermitianOperator};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    None,
    Wiener,
    OrnsteinUhlenbeck,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Wiener => "wiener",
            NoiseKind::OrnsteinUhlenbeck => "ornstein_uhlenbeck",
        }
    }
}

/// Generator for stream `stream` of `seed`. Streams of one seed are
/// independent, which lets ensembles hand each realization its own stream
/// regardless of scheduling order.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One step of a noise process.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseIncrement {
    pub d_lambda: f64,
    /// The increment of `dh` over the step.
    pub d_dh: HermitianOperator,
    /// `d_dh / d_lambda`, the rate that stands in for `d(dh)/dlambda`.
    pub dh_dot: HermitianOperator,
}

impl NoiseIncrement {
    fn zero(n: usize, d_lambda: f64) -> Self {
        NoiseIncrement {
            d_lambda,
            d_dh: HermitianOperator::zeros(n),
            dh_dot: HermitianOperator::zeros(n),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NoiseProcess {
    kind: NoiseKind,
    dim: usize,
    gamma: f64,
    sigma: f64,
    current: HermitianOperator,
    rng: ChaCha8Rng,
}

/// A process that never moves.
pub fn zero_noise(n: usize) -> NoiseProcess {
    NoiseProcess {
        kind: NoiseKind::None,
        dim: n,
        gamma: 0.0,
        sigma: 0.0,
        current: HermitianOperator::zeros(n),
        rng: ChaCha8Rng::seed_from_u64(0),
    }
}

impl NoiseProcess {
    pub fn wiener(n: usize, sigma: f64, rng: ChaCha8Rng) -> Result<Self> {
        Self::build(NoiseKind::Wiener, n, 0.0, sigma, rng)
    }

    pub fn ornstein_uhlenbeck(n: usize, gamma: f64, sigma: f64, rng: ChaCha8Rng) -> Result<Self> {
        Self::build(NoiseKind::OrnsteinUhlenbeck, n, gamma, sigma, rng)
    }

    pub fn from_kind(kind: NoiseKind, n: usize, gamma: f64, sigma: f64, rng: ChaCha8Rng) -> Result<Self> {
        match kind {
            NoiseKind::None => Ok(zero_noise(n)),
            _ => Self::build(kind, n, gamma, sigma, rng),
        }
    }

    fn build(kind: NoiseKind, n: usize, gamma: f64, sigma: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("noise gamma must be >= 0, got {gamma}")));
        }
        Ok(NoiseProcess {
            kind,
            dim: n,
            gamma,
            sigma,
            current: HermitianOperator::zeros(n),
            rng,
        })
    }

    /// Starts the process from `dh0` instead of zero.
    pub fn with_current(mut self, dh0: HermitianOperator) -> Result<Self> {
        if dh0.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: dh0.dim(),
            });
        }
        if self.kind != NoiseKind::None {
            self.current = dh0;
        }
        Ok(self)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Accumulated `dh`.
    pub fn current(&self) -> &HermitianOperator {
        &self.current
    }

    /// Advances whichever process this is by `d_lambda`.
    pub fn step(&mut self, d_lambda: f64) -> Result<NoiseIncrement> {
        match self.kind {
            NoiseKind::None => {
                check_step(d_lambda)?;
                Ok(NoiseIncrement::zero(self.dim, d_lambda))
            }
            NoiseKind::Wiener => self.sample_wiener_increment(d_lambda),
            NoiseKind::OrnsteinUhlenbeck => self.ou_step(d_lambda),
        }
    }

    pub fn sample_wiener_increment(&mut self, d_lambda: f64) -> Result<NoiseIncrement> {
        self.expect_kind(NoiseKind::Wiener)?;
        check_step(d_lambda)?;
        let d_dh = self.gaussian_hermitian(d_lambda);
        Ok(self.advance(d_dh, d_lambda))
    }

    /// Euler-Maruyama step of `d(dh) = -gamma dh dlambda + sigma dW`.
    pub fn ou_step(&mut self, d_lambda: f64) -> Result<NoiseIncrement> {
        self.expect_kind(NoiseKind::OrnsteinUhlenbeck)?;
        check_step(d_lambda)?;
        let kick = self.gaussian_hermitian(d_lambda);
        let d_dh = if self.gamma == 0.0 {
            kick
        } else {
            kick - self.current.matrix() * c64(self.gamma * d_lambda, 0.0)
        };
        Ok(self.advance(d_dh, d_lambda))
    }

    fn advance(&mut self, d_dh: CMatrix, d_lambda: f64) -> NoiseIncrement {
        let d_dh = HermitianOperator::from_matrix_unchecked(d_dh);
        let dh_dot = d_dh.scale(1.0 / d_lambda);
        self.current = HermitianOperator::from_matrix_unchecked(self.current.matrix() + d_dh.matrix());
        NoiseIncrement {
            d_lambda,
            d_dh,
            dh_dot,
        }
    }

    /// `sigma * dW` for a step of `d_lambda`, exactly Hermitian.
    fn gaussian_hermitian(&mut self, d_lambda: f64) -> CMatrix {
        let n = self.dim;
        let scale = self.sigma * d_lambda.sqrt();
        let off_scale = scale * std::f64::consts::FRAC_1_SQRT_2;
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            let g: f64 = self.rng.sample(StandardNormal);
            m[(i, i)] = c64(scale * g, 0.0);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let re: f64 = self.rng.sample(StandardNormal);
                let im: f64 = self.rng.sample(StandardNormal);
                let z = c64(off_scale * re, off_scale * im);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    fn expect_kind(&self, expected: NoiseKind) -> Result<()> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(Error::WrongNoiseKind {
                expected: expected.as_str(),
                actual: self.kind.as_str(),
            })
        }
    }
}

fn check_step(d_lambda: f64) -> Result<()> {
    if d_lambda > 0.0 && d_lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveStep(d_lambda))
    }
}
