//! Density-matrix evolution in the instantaneous eigenbasis `{|n(lambda)>}`.
//!
//! In the moving frame the von Neumann equation becomes
//!
//! ```text
//! drho_uw/dt = s * lambda_dot * sum_n (G_un rho_nw - rho_un G_nw) - i (x_u - x_w) rho_uw
//! G_un = l_un / (x_u - x_n)^2 + D_un / (x_u - x_n),   G_uu = 0
//! ```
//!
//! where `D` is `d(dh)/dlambda` in the eigenbasis and `s` is the coupling
//! sign. `G` is anti-Hermitian, so the coupling part is a commutator: the
//! output is Hermitian, traceless, and preserves `tr(rho^2)`.
//!
//! The frozen sign is [`CouplingSign::Positive`]; the negative sign is kept
//! only so the sign audit against the direct von Neumann oracle can show that
//! it fails.
//!
//! Windowing keeps only couplings `G_un` between nearby levels, either by
//! index (`|u - n| <= epsilon`) or by energy (`|x_u - x_n| <= radius`). On the
//! diagonal this is the nearest-neighbour occupation law; off the diagonal it
//! keeps the commutator structure intact.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levels::{Denominators, LevelState};
use crate::linalg::{add_scaled, c64, eigh, hermitize, max_hermitian_deviation, purity, CMatrix, HermitianOperator, C64};

/// Trace tolerance for [`DensityMatrix::new`].
pub const TRACE_TOLERANCE: f64 = 1e-9;
/// Most negative eigenvalue accepted by [`DensityMatrix::new`].
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

/// A density matrix, expressed in the instantaneous eigenbasis when used by
/// the level dynamics.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: CMatrix) -> Result<Self> {
        let h = HermitianOperator::new(m).map_err(|e| Error::InvalidDensityMatrix(e.to_string()))?;
        let trace = h.matrix().trace().re;
        if !((trace - 1.0).abs() <= TRACE_TOLERANCE) {
            return Err(Error::InvalidDensityMatrix(format!("trace {trace} != 1")));
        }
        let lowest = eigh(&h).values.first().copied().unwrap_or(0.0);
        if lowest < -POSITIVITY_TOLERANCE {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {lowest:e}")));
        }
        Ok(DensityMatrix(h.into_matrix()))
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        DensityMatrix(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Diagonal entries, the level occupation numbers.
    pub fn occupations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn trace_error(&self) -> f64 {
        (self.trace() - c64(1.0, 0.0)).norm()
    }

    pub fn purity(&self) -> f64 {
        purity(&self.0)
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_hermitian_deviation(&self.0)
    }

    /// Replaces `rho` by `(rho + rho^H)/2` and returns the largest entry
    /// change.
    pub fn hermitize_in_place(&mut self) -> f64 {
        let h = hermitize(&self.0).into_matrix();
        let change = crate::linalg::max_abs_diff(&h, &self.0);
        self.0 = h;
        change
    }

    /// `V rho V^H`: from the basis held in the columns of `v` to the fixed one.
    pub fn to_fixed_basis(&self, v: &CMatrix) -> CMatrix {
        hermitize(&(v * &self.0 * v.adjoint())).into_matrix()
    }

    /// `V^H rho V`: from the fixed basis into the basis of `v`.
    pub fn from_fixed_basis(rho_fixed: &CMatrix, v: &CMatrix) -> DensityMatrix {
        DensityMatrix(hermitize(&(v.adjoint() * rho_fixed * v)).into_matrix())
    }

    pub(crate) fn advanced(&self, d: &CMatrix, h: f64) -> DensityMatrix {
        let mut out = self.0.clone();
        add_scaled(&mut out, h, d);
        DensityMatrix(out)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSign {
    #[default]
    Positive,
    Negative,
}

impl CouplingSign {
    pub fn factor(self) -> f64 {
        match self {
            CouplingSign::Positive => 1.0,
            CouplingSign::Negative => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CouplingSign::Positive => "positive",
            CouplingSign::Negative => "negative",
        }
    }
}

/// Which level couplings take part in the evolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowSpec {
    #[default]
    Unbounded,
    /// Couple level `u` only to levels `n` with `|u - n| <= epsilon`.
    Index { epsilon: usize },
    /// Couple level `u` only to levels `n` with `|x_u - x_n| <= radius`.
    Energy { radius: f64 },
}

impl WindowSpec {
    fn admits(&self, x: &[f64], u: usize, n: usize) -> bool {
        match *self {
            WindowSpec::Unbounded => true,
            WindowSpec::Index { epsilon } => u.abs_diff(n) <= epsilon,
            WindowSpec::Energy { radius } => (x[u] - x[n]).abs() <= radius,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MasterOptions {
    pub sign: CouplingSign,
    pub denominators: Denominators,
}

/// The anti-Hermitian coupling matrix `G` restricted to `window`.
pub fn coupling_matrix(
    s: &LevelState,
    dh_dot: Option<&CMatrix>,
    window: WindowSpec,
    den: &Denominators,
) -> Result<CMatrix> {
    let d = den.separations(&s.x)?;
    Ok(coupling_from(s, dh_dot, window, &d))
}

pub(crate) fn coupling_from(s: &LevelState, dh_dot: Option<&CMatrix>, window: WindowSpec, d: &DMatrix<f64>) -> CMatrix {
    let n = s.dim();
    let mut g = CMatrix::zeros(n, n);
    for u in 0..n {
        for k in (u + 1)..n {
            if !window.admits(&s.x, u, k) {
                continue;
            }
            let gap = d[(u, k)];
            let mut guk = s.l[(u, k)] / (gap * gap);
            if let Some(dd) = dh_dot {
                guk += dd[(u, k)] / gap;
            }
            g[(u, k)] = guk;
            g[(k, u)] = -guk.conj();
        }
    }
    g
}

/// `[G, A]` for anti-Hermitian `g` and Hermitian `a`. The result is
/// Hermitian, so only the upper triangle is computed. With `g_u`, `a_u` the
/// columns, entry `(u, w)` is `-(<g_u, a_w> + <a_u, g_w>)`, which keeps every
/// access contiguous.
pub(crate) fn commutator(g: &CMatrix, a: &CMatrix) -> CMatrix {
    let n = g.nrows();
    let dot = |x: &[C64], y: &[C64]| x.iter().zip(y).fold(c64(0.0, 0.0), |acc, (p, q)| acc + p.conj() * q);
    let mut out = CMatrix::zeros(n, n);
    for w in 0..n {
        let (gw, aw) = (g.column(w), a.column(w));
        let (gw, aw) = (gw.as_slice(), aw.as_slice());
        for u in 0..=w {
            let (gu, au) = (g.column(u), a.column(u));
            let z = -(dot(gu.as_slice(), aw) + dot(au.as_slice(), gw));
            out[(u, w)] = z;
            out[(w, u)] = z.conj();
        }
    }
    out
}

/// `drho/dt` given the coupling matrix for the chosen window.
pub(crate) fn evolve_with(s: &LevelState, rho: &DensityMatrix, lambda_dot: f64, g: &CMatrix, sign: CouplingSign) -> CMatrix {
    let n = s.dim();
    let r = rho.matrix();
    let factor = c64(sign.factor() * lambda_dot, 0.0);
    let mut out = commutator(g, r);
    for u in 0..n {
        for w in 0..n {
            out[(u, w)] = out[(u, w)] * factor + c64(0.0, -(s.x[u] - s.x[w])) * r[(u, w)];
        }
    }
    out
}

fn check_dims(s: &LevelState, rho: &DensityMatrix, dh: Option<&CMatrix>) -> Result<()> {
    let n = s.dim();
    if rho.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rho.dim(),
        });
    }
    if let Some(dh) = dh {
        if dh.nrows() != n || dh.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: dh.nrows(),
            });
        }
    }
    Ok(())
}

fn evolve(
    s: &LevelState,
    rho: &DensityMatrix,
    lambda_dot: f64,
    dh_dot: Option<&CMatrix>,
    window: WindowSpec,
    opts: &MasterOptions,
) -> Result<CMatrix> {
    check_dims(s, rho, dh_dot)?;
    let g = coupling_matrix(s, dh_dot, window, &opts.denominators)?;
    Ok(evolve_with(s, rho, lambda_dot, &g, opts.sign))
}

/// Closed-system `drho/dt`.
pub fn rho_rhs(s: &LevelState, rho: &DensityMatrix, lambda_dot: f64, opts: &MasterOptions) -> Result<CMatrix> {
    evolve(s, rho, lambda_dot, None, WindowSpec::Unbounded, opts)
}

/// `drho/dt` with the noise rate `dh_dot = d(dh)/dlambda` (eigenbasis).
pub fn rho_rhs_noisy(
    s: &LevelState,
    rho: &DensityMatrix,
    lambda_dot: f64,
    dh_dot: &CMatrix,
    opts: &MasterOptions,
) -> Result<CMatrix> {
    evolve(s, rho, lambda_dot, Some(dh_dot), WindowSpec::Unbounded, opts)
}

pub fn rho_rhs_windowed(
    s: &LevelState,
    rho: &DensityMatrix,
    lambda_dot: f64,
    dh_dot: &CMatrix,
    window: WindowSpec,
    opts: &MasterOptions,
) -> Result<CMatrix> {
    evolve(s, rho, lambda_dot, Some(dh_dot), window, opts)
}

/// `drho_ww/dt` computed term by term from the occupation law; equal to the
/// real diagonal of [`rho_rhs_windowed`].
pub fn occupation_rhs(
    s: &LevelState,
    rho: &DensityMatrix,
    lambda_dot: f64,
    dh_dot: &CMatrix,
    window: WindowSpec,
    opts: &MasterOptions,
) -> Result<Vec<f64>> {
    check_dims(s, rho, Some(dh_dot))?;
    let n = s.dim();
    let d = opts.denominators.separations(&s.x)?;
    let r = rho.matrix();
    let factor = opts.sign.factor() * lambda_dot;
    let mut out = vec![0.0; n];
    for (w, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..n {
            if k == w || !window.admits(&s.x, w, k) {
                continue;
            }
            let gap = d[(w, k)];
            let l_part = (s.l[(w, k)] * r[(k, w)] - r[(w, k)] * s.l[(k, w)]) / (gap * gap);
            let noise_part = (dh_dot[(w, k)] * r[(k, w)] + r[(w, k)] * dh_dot[(k, w)]) / gap;
            acc += (l_part + noise_part).re;
        }
        *slot = factor * acc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::models::uniform_rho0;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut impl Rng, n: usize) -> LevelState {
        let mut x: Vec<f64> = (0..n).map(|i| i as f64 + rng.random_range(0.1..0.6)).collect();
        x.sort_by(f64::total_cmp);
        let v = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut l = CMatrix::zeros(n, n);
        for m in 0..n {
            for k in (m + 1)..n {
                let z = c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                l[(m, k)] = z;
                l[(k, m)] = -z.conj();
            }
        }
        LevelState { x, v, l }
    }

    fn random_rho(rng: &mut impl Rng, n: usize) -> DensityMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let mut m = &a * a.adjoint();
        let tr = m.trace();
        m /= tr;
        DensityMatrix::new(hermitize(&m).into_matrix()).unwrap()
    }

    fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
        hermitize(&CMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))).into_matrix()
    }

    #[test]
    fn pure_dephasing() {
        let s = LevelState {
            x: vec![0.0, 1.0],
            v: vec![0.0, 0.0],
            l: CMatrix::zeros(2, 2),
        };
        let rho = uniform_rho0(2);
        let out = rho_rhs(&s, &rho, 0.0, &MasterOptions::default()).unwrap();
        assert!((out[(0, 1)] - c64(0.0, 0.5)).norm() < 1e-15);
        assert_eq!(out[(0, 0)], c64(0.0, 0.0));
        assert_eq!(out[(1, 1)], c64(0.0, 0.0));
    }

    #[test]
    fn no_coupling_freezes_occupations() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_state(&mut rng, 4);
        s.l = CMatrix::zeros(4, 4);
        let rho = random_rho(&mut rng, 4);
        let out = rho_rhs(&s, &rho, 3.7, &MasterOptions::default()).unwrap();
        for u in 0..4 {
            assert_eq!(out[(u, u)], c64(0.0, 0.0));
            for w in 0..4 {
                if u != w {
                    let expected = c64(0.0, -(s.x[u] - s.x[w])) * rho.matrix()[(u, w)];
                    assert!((out[(u, w)] - expected).norm() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn zero_noise_matches_closed_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let s = random_state(&mut rng, 4);
            let rho = random_rho(&mut rng, 4);
            let opts = MasterOptions::default();
            let closed = rho_rhs(&s, &rho, 0.4, &opts).unwrap();
            let zero = rho_rhs_noisy(&s, &rho, 0.4, &CMatrix::zeros(4, 4), &opts).unwrap();
            assert_eq!(closed, zero);
            let shift = CMatrix::identity(4, 4) * c64(0.3, 0.0);
            let shifted = rho_rhs_noisy(&s, &rho, 0.4, &shift, &opts).unwrap();
            assert_eq!(closed, shifted);
        }
    }

    #[test]
    fn noisy_output_traceless_and_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = random_state(&mut rng, 4);
            let rho = random_rho(&mut rng, 4);
            let dh = random_hermitian(&mut rng, 4);
            let out = rho_rhs_noisy(&s, &rho, 0.9, &dh, &MasterOptions::default()).unwrap();
            assert!(out.trace().norm() < 1e-12);
            assert!(max_hermitian_deviation(&out) < 1e-12);
        }
    }

    #[test]
    fn full_window_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(&mut rng, 5);
        let rho = random_rho(&mut rng, 5);
        let dh = random_hermitian(&mut rng, 5);
        let opts = MasterOptions::default();
        let full = rho_rhs_noisy(&s, &rho, 0.7, &dh, &opts).unwrap();
        for eps in [4, 5, 100] {
            let w = rho_rhs_windowed(&s, &rho, 0.7, &dh, WindowSpec::Index { epsilon: eps }, &opts).unwrap();
            assert_eq!(w, full);
        }
    }

    #[test]
    fn empty_window_leaves_dephasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = random_state(&mut rng, 4);
        let rho = random_rho(&mut rng, 4);
        let dh = random_hermitian(&mut rng, 4);
        let w = rho_rhs_windowed(&s, &rho, 0.7, &dh, WindowSpec::Index { epsilon: 0 }, &MasterOptions::default()).unwrap();
        for u in 0..4 {
            for v in 0..4 {
                let expected = c64(0.0, -(s.x[u] - s.x[v])) * rho.matrix()[(u, v)];
                assert!((w[(u, v)] - expected).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn occupation_law_matches_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let opts = MasterOptions::default();
        for trial in 0..60 {
            let n = 2 + trial % 5;
            let s = random_state(&mut rng, n);
            let rho = random_rho(&mut rng, n);
            let dh = random_hermitian(&mut rng, n);
            let window = match trial % 3 {
                0 => WindowSpec::Unbounded,
                1 => WindowSpec::Index { epsilon: 1 },
                _ => WindowSpec::Energy { radius: 1.5 },
            };
            let full = rho_rhs_windowed(&s, &rho, 1.3, &dh, window, &opts).unwrap();
            let occ = occupation_rhs(&s, &rho, 1.3, &dh, window, &opts).unwrap();
            for w in 0..n {
                assert!((occ[w] - full[(w, w)].re).abs() < 1e-12);
                assert!(full[(w, w)].im.abs() < 1e-12);
            }
            assert!(occ.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_state_with_real_coupling_has_static_occupations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = random_state(&mut rng, 4);
        for m in 0..4 {
            for k in 0..4 {
                s.l[(m, k)] = c64(s.l[(m, k)].re, 0.0);
            }
        }
        let rho = DensityMatrix::new(HermitianOperator::from_diagonal(&[0.1, 0.2, 0.3, 0.4]).into_matrix()).unwrap();
        let occ = occupation_rhs(&s, &rho, 1.0, &CMatrix::zeros(4, 4), WindowSpec::Unbounded, &MasterOptions::default()).unwrap();
        assert!(occ.iter().all(|&o| o == 0.0));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(CMatrix::identity(2, 2)).is_err());
        assert!(DensityMatrix::new(HermitianOperator::from_diagonal(&[1.5, -0.5]).into_matrix()).is_err());
        assert!(DensityMatrix::new(uniform_rho0(3).into_matrix()).is_ok());
    }

    #[test]
    fn basis_change_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rho = random_rho(&mut rng, 4);
        let u = eigh(&HermitianOperator::from_matrix_unchecked(random_hermitian(&mut rng, 4))).vectors;
        let fixed = rho.to_fixed_basis(&u);
        let back = DensityMatrix::from_fixed_basis(&fixed, &u);
        assert!(max_abs_diff(back.matrix(), rho.matrix()) < 1e-14);
    }
}
