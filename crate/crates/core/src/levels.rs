//! The Pechukas gas: eigenvalues as particle positions `x`, diagonal bias
//! matrix elements as velocities `v`, and the "relative angular momenta"
//! `l_mn = (x_m - x_n) <m|Z Hb|n>`, all evolving in `lambda`.
//!
//! Noiseless flow:
//!
//! ```text
//! dx_m = v_m
//! dv_m = 2 sum_{n != m} |l_mn|^2 / (x_m - x_n)^3
//! dl_mn = sum_{k != m,n} l_mk l_kn (1/(x_m - x_k)^2 - 1/(x_k - x_n)^2)
//! ```
//!
//! With a noise term `dh(lambda)` added to the Hamiltonian the flow picks up
//! terms linear in `D = d(dh)/dlambda`, expressed in the instantaneous
//! eigenbasis:
//!
//! ```text
//! dx_m += D_mm
//! dv_m += sum_{n != m} (l_mn D_nm - D_mn l_nm) / (x_m - x_n)^2
//! dl_mn += sum_{k != m,n} (x_m - x_n)(l_mk D_kn - D_mk l_kn) / ((x_m - x_k)(x_n - x_k))
//!          - D_mn (v_m - v_n) + l_mn (D_mm - D_nn) / (x_m - x_n)
//! ```
//!
//! These follow from first-order perturbation theory of `H0 + lambda Z Hb + dh`
//! and are the unique reading that keeps `l` anti-Hermitian and makes `x` track
//! the eigenvalues of the noisy Hamiltonian; the module tests check them
//! against finite differences of exact eigendecompositions.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{add_scaled, eigh, CMatrix, EigenSystem, C64};
use crate::models::HamiltonianSpec;

/// Relative gap below which `init_levels` refuses to start.
pub const INIT_GAP_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorMode {
    /// Fail on separations below the floor.
    #[default]
    Strict,
    /// Clamp separations to the floor, keeping their sign.
    Regularized,
}

/// Policy for the `1/(x_m - x_n)^k` factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Denominators {
    pub mode: DenominatorMode,
    pub floor: f64,
}

impl Default for Denominators {
    fn default() -> Self {
        Denominators {
            mode: DenominatorMode::Strict,
            floor: 1e-12,
        }
    }
}

impl Denominators {
    pub fn strict(floor: f64) -> Self {
        Denominators {
            mode: DenominatorMode::Strict,
            floor,
        }
    }

    pub fn regularized(floor: f64) -> Self {
        Denominators {
            mode: DenominatorMode::Regularized,
            floor,
        }
    }

    /// Antisymmetric matrix of separations `x_m - x_n` after applying the
    /// policy. The diagonal is zero and never used as a divisor.
    pub fn separations(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = x.len();
        let mut d = DMatrix::zeros(n, n);
        for m in 0..n {
            for k in (m + 1)..n {
                let mut gap = x[m] - x[k];
                if !(gap.abs() >= self.floor) {
                    match self.mode {
                        DenominatorMode::Strict => {
                            return Err(Error::DegenerateLevels {
                                m,
                                n: k,
                                gap,
                                t: None,
                            })
                        }
                        DenominatorMode::Regularized => {
                            // NaN separations stay NaN and surface downstream
                            gap = if gap < 0.0 { -self.floor } else { self.floor };
                        }
                    }
                }
                d[(m, k)] = gap;
                d[(k, m)] = -gap;
            }
        }
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub l: CMatrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelDerivative {
    pub dx: Vec<f64>,
    pub dv: Vec<f64>,
    pub dl: CMatrix,
}

impl LevelState {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// `self + h * d`, keeping the diagonal of `l` at zero.
    pub fn advanced(&self, d: &LevelDerivative, h: f64) -> LevelState {
        let n = self.dim();
        let x = self.x.iter().zip(&d.dx).map(|(a, b)| a + h * b).collect();
        let v = self.v.iter().zip(&d.dv).map(|(a, b)| a + h * b).collect();
        let mut l = self.l.clone();
        for m in 0..n {
            for k in 0..n {
                if m != k {
                    l[(m, k)] += d.dl[(m, k)] * h;
                }
            }
        }
        LevelState { x, v, l }
    }

    /// Largest `|l_mn + conj(l_nm)|`, zero for a valid state.
    pub fn antisymmetry_error(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for m in 0..n {
            worst = worst.max(self.l[(m, m)].norm());
            for k in (m + 1)..n {
                worst = worst.max((self.l[(m, k)] + self.l[(k, m)].conj()).norm());
            }
        }
        worst
    }

    pub fn total_momentum(&self) -> f64 {
        self.v.iter().sum()
    }
}

impl LevelDerivative {
    pub fn zeros(n: usize) -> Self {
        LevelDerivative {
            dx: vec![0.0; n],
            dv: vec![0.0; n],
            dl: CMatrix::zeros(n, n),
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.dx.iter_mut().for_each(|a| *a *= factor);
        self.dv.iter_mut().for_each(|a| *a *= factor);
        self.dl.iter_mut().for_each(|a| *a *= factor);
        self
    }

    /// `sum_i w_i d_i`.
    pub fn combine(parts: &[(f64, &LevelDerivative)]) -> LevelDerivative {
        let n = parts[0].1.dx.len();
        let mut out = LevelDerivative::zeros(n);
        for (w, d) in parts {
            for i in 0..n {
                out.dx[i] += w * d.dx[i];
                out.dv[i] += w * d.dv[i];
            }
            add_scaled(&mut out.dl, *w, &d.dl);
        }
        out
    }
}

/// Gas coordinates of `H(lambda0)` together with the eigenbasis they were
/// read in.
pub fn init_levels_with_basis(spec: &HamiltonianSpec, lambda0: f64) -> Result<(LevelState, EigenSystem)> {
    let h = spec.hamiltonian_at(lambda0, None)?;
    let eig = eigh(&h);
    if let Some((m, k, gap)) = eig.min_gap() {
        if !(gap > INIT_GAP_FLOOR * eig.spectral_radius()) {
            return Err(Error::DegenerateLevels { m, n: k, gap, t: None });
        }
    }
    let bias = spec.bias().in_basis(&eig.vectors);
    let n = spec.dim();
    let x = eig.values.clone();
    let v = (0..n).map(|m| bias.matrix()[(m, m)].re).collect();
    let mut l = CMatrix::zeros(n, n);
    for m in 0..n {
        for k in (m + 1)..n {
            let lmk = bias.matrix()[(m, k)] * (x[m] - x[k]);
            l[(m, k)] = lmk;
            l[(k, m)] = -lmk.conj();
        }
    }
    Ok((LevelState { x, v, l }, eig))
}

pub fn init_levels(spec: &HamiltonianSpec, lambda0: f64) -> Result<LevelState> {
    init_levels_with_basis(spec, lambda0).map(|(s, _)| s)
}

/// Noiseless right-hand side, derivatives with respect to `lambda`.
pub fn pechukas_rhs(s: &LevelState, den: &Denominators) -> Result<LevelDerivative> {
    let d = den.separations(&s.x)?;
    Ok(interaction_terms(s, &d))
}

pub(crate) fn interaction_terms(s: &LevelState, d: &DMatrix<f64>) -> LevelDerivative {
    interaction_with(s, &inverse_separations(d))
}

/// Elementwise `1 / d` off the diagonal, zero on it.
fn inverse_separations(d: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(d.nrows(), d.ncols(), |m, k| if m == k { 0.0 } else { 1.0 / d[(m, k)] })
}

fn interaction_with(s: &LevelState, inv: &DMatrix<f64>) -> LevelDerivative {
    let n = s.dim();
    let inv_sq = inv.component_mul(inv);
    let dx = s.v.clone();
    let mut dv = vec![0.0; n];
    for m in 0..n {
        let mut acc = 0.0;
        for k in 0..n {
            acc += s.l[(m, k)].norm_sqr() * inv_sq[(m, k)] * inv[(m, k)];
        }
        dv[m] = 2.0 * acc;
    }
    let mut dl = CMatrix::zeros(n, n);
    for m in 0..n {
        for k in (m + 1)..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != m && j != k {
                    acc += s.l[(m, j)] * s.l[(j, k)] * (inv_sq[(m, j)] - inv_sq[(j, k)]);
                }
            }
            dl[(m, k)] = acc;
            dl[(k, m)] = -acc.conj();
        }
    }
    LevelDerivative { dx, dv, dl }
}

/// Right-hand side with noise. `dh_dot` is `d(dh)/dlambda` in the
/// instantaneous eigenbasis. A zero `dh_dot` reproduces [`pechukas_rhs`].
pub fn stochastic_pechukas_rhs(s: &LevelState, dh_dot: &CMatrix, den: &Denominators) -> Result<LevelDerivative> {
    let n = s.dim();
    if dh_dot.nrows() != n || dh_dot.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: dh_dot.nrows(),
        });
    }
    let d = den.separations(&s.x)?;
    Ok(stochastic_terms(s, dh_dot, &d))
}

/// [`stochastic_pechukas_rhs`] with the separations already in hand.
pub(crate) fn stochastic_terms(s: &LevelState, dd: &CMatrix, d: &DMatrix<f64>) -> LevelDerivative {
    let n = s.dim();
    let inv = inverse_separations(d);
    let mut out = interaction_with(s, &inv);
    for m in 0..n {
        out.dx[m] += dd[(m, m)].re;
        let mut acc = 0.0;
        for k in 0..n {
            acc += (s.l[(m, k)] * dd[(k, m)] - dd[(m, k)] * s.l[(k, m)]).re * inv[(m, k)] * inv[(m, k)];
        }
        out.dv[m] += acc;
    }
    for m in 0..n {
        for k in (m + 1)..n {
            let gap = d[(m, k)];
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != m && j != k {
                    acc += (s.l[(m, j)] * dd[(j, k)] - dd[(m, j)] * s.l[(j, k)]) * (gap * inv[(m, j)] * inv[(k, j)]);
                }
            }
            acc -= dd[(m, k)] * (s.v[m] - s.v[k]);
            acc += s.l[(m, k)] * ((dd[(m, m)].re - dd[(k, k)].re) * inv[(m, k)]);
            let total = out.dl[(m, k)] + acc;
            out.dl[(m, k)] = total;
            out.dl[(k, m)] = -total.conj();
        }
    }
    out
}

/// `1/2 sum v^2 + 1/2 sum_{m != n} |l_mn|^2 / (x_m - x_n)^2`, which equals
/// `tr((Z Hb)^2) / 2` and is conserved by the noiseless flow.
pub fn gas_hamiltonian(s: &LevelState, den: &Denominators) -> Result<f64> {
    let d = den.separations(&s.x)?;
    let n = s.dim();
    let kinetic: f64 = s.v.iter().map(|v| v * v).sum();
    let mut potential = 0.0;
    for m in 0..n {
        for k in 0..n {
            if m != k {
                potential += s.l[(m, k)].norm_sqr() / (d[(m, k)] * d[(m, k)]);
            }
        }
    }
    Ok(0.5 * kinetic + 0.5 * potential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, gauge_align, hermitize, GaugeFrame, HermitianOperator};
    use crate::models::build_two_qubit_ising;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

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

    fn two_level() -> LevelState {
        let mut l = CMatrix::zeros(2, 2);
        l[(0, 1)] = c64(0.0, 1.0);
        l[(1, 0)] = c64(0.0, 1.0); // -conj(i) = i
        LevelState {
            x: vec![0.0, 1.0],
            v: vec![0.3, -0.3],
            l,
        }
    }

    #[test]
    fn two_level_substitution() {
        let s = two_level();
        assert_eq!(s.antisymmetry_error(), 0.0);
        let d = pechukas_rhs(&s, &Denominators::default()).unwrap();
        assert_eq!(d.dx, vec![0.3, -0.3]);
        assert_eq!(d.dv, vec![-2.0, 2.0]);
        assert_eq!(d.dl[(0, 1)], c64(0.0, 0.0));
    }

    #[test]
    fn free_streaming_without_coupling() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_state(&mut rng, 5);
        s.l = CMatrix::zeros(5, 5);
        let d = pechukas_rhs(&s, &Denominators::default()).unwrap();
        assert_eq!(d.dx, s.v);
        assert!(d.dv.iter().all(|&a| a == 0.0));
        assert!(d.dl.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn forces_sum_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let s = random_state(&mut rng, 6);
            let d = pechukas_rhs(&s, &Denominators::default()).unwrap();
            let scale: f64 = d.dv.iter().map(|a| a.abs()).sum();
            assert!(d.dv.iter().sum::<f64>().abs() <= 1e-13 * scale.max(1.0));
        }
    }

    #[test]
    fn zero_noise_reduces_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s = random_state(&mut rng, 4);
            let plain = pechukas_rhs(&s, &Denominators::default()).unwrap();
            let noisy = stochastic_pechukas_rhs(&s, &CMatrix::zeros(4, 4), &Denominators::default()).unwrap();
            assert_eq!(plain, noisy);
        }
    }

    #[test]
    fn identity_noise_only_shifts_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(&mut rng, 4);
        let eps = 0.37;
        let plain = pechukas_rhs(&s, &Denominators::default()).unwrap();
        let shifted = stochastic_pechukas_rhs(&s, &(CMatrix::identity(4, 4) * c64(eps, 0.0)), &Denominators::default()).unwrap();
        for m in 0..4 {
            assert!((shifted.dx[m] - plain.dx[m] - eps).abs() < 1e-15);
            assert_eq!(shifted.dv[m], plain.dv[m]);
        }
        assert!(crate::linalg::max_abs_diff(&shifted.dl, &plain.dl) < 1e-15);
    }

    #[test]
    fn noisy_rhs_keeps_antisymmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s = random_state(&mut rng, 4);
            let dd = hermitize(&random_matrix(&mut rng, 4));
            let d = stochastic_pechukas_rhs(&s, dd.matrix(), &Denominators::default()).unwrap();
            let as_state = LevelState {
                x: s.x.clone(),
                v: s.v.clone(),
                l: d.dl.clone(),
            };
            assert_eq!(as_state.antisymmetry_error(), 0.0);
        }
    }

    #[test]
    fn ising_initialization() {
        let spec = build_two_qubit_ising(1.0, 0.1, 0.2, 10.0);
        let s = init_levels(&spec, 0.5).unwrap();
        let x = [-1.802776, -1.118034, 1.118034, 1.802776];
        let v = [-2.496151, -0.447214, 0.447214, 2.496151];
        for m in 0..4 {
            assert!((s.x[m] - x[m]).abs() < 1e-6);
            assert!((s.v[m] - v[m]).abs() < 1e-6);
        }
        // Hellmann-Feynman: v matches the lambda-derivative of the spectrum
        let h = 1e-6;
        let up = init_levels(&spec, 0.5 + h).unwrap();
        let down = init_levels(&spec, 0.5 - h).unwrap();
        for m in 0..4 {
            let fd = (up.x[m] - down.x[m]) / (2.0 * h);
            assert!((fd - s.v[m]).abs() < 1e-7);
        }
        for m in 0..4 {
            assert_eq!(s.l[(m, m)], c64(0.0, 0.0));
        }
        assert_eq!(s.antisymmetry_error(), 0.0);
    }

    #[test]
    fn flat_bias_has_no_dynamics() {
        let spec = HamiltonianSpec::new(
            HermitianOperator::from_diagonal(&[0.0, 1.0, 3.0]),
            HermitianOperator::zeros(3),
            10.0,
        )
        .unwrap();
        let s = init_levels(&spec, 0.2).unwrap();
        assert!(s.v.iter().all(|&v| v == 0.0));
        assert!(s.l.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn degenerate_start_rejected() {
        let spec = build_two_qubit_ising(1.0, 0.1, 0.2, 10.0);
        assert!(matches!(init_levels(&spec, 0.0), Err(Error::DegenerateLevels { .. })));
    }

    #[test]
    fn strict_and_regularized_denominators() {
        let mut s = two_level();
        s.x = vec![0.0, 1e-14];
        assert!(matches!(pechukas_rhs(&s, &Denominators::strict(1e-12)), Err(Error::DegenerateLevels { .. })));
        let d = pechukas_rhs(&s, &Denominators::regularized(1e-3)).unwrap();
        // separation clamped to -1e-3 for (0,1)
        assert!((d.dv[0] - 2.0 / (-1e-3f64).powi(3)).abs() < 1e-3 * d.dv[0].abs());
    }

    #[test]
    fn gas_hamiltonian_examples() {
        let mut s = two_level();
        s.v = vec![0.0, 0.0];
        assert!((gas_hamiltonian(&s, &Denominators::default()).unwrap() - 1.0).abs() < 1e-15);
        s.l = CMatrix::zeros(2, 2);
        s.v = vec![1.0, 2.0];
        assert!((gas_hamiltonian(&s, &Denominators::default()).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn gas_hamiltonian_is_half_trace_of_bias_squared() {
        let spec = build_two_qubit_ising(0.8, 0.1, 0.2, 10.0);
        let b = spec.bias();
        let tr = (b.matrix() * b.matrix()).trace().re;
        for lambda in [0.05, 0.3, 1.1] {
            let s = init_levels(&spec, lambda).unwrap();
            let e = gas_hamiltonian(&s, &Denominators::default()).unwrap();
            assert!((e - 0.5 * tr).abs() < 1e-12);
        }
    }

    /// Gauge-fixed `(x, v, l)` read off an exact eigendecomposition of
    /// `H(lambda) = H0 + lambda V + lambda D` with `D` fixed.
    fn exact_coordinates(h0: &CMatrix, v: &CMatrix, dd: &CMatrix, lambda: f64, frame: Option<&GaugeFrame>) -> (LevelState, EigenSystem) {
        let h = hermitize(&(h0 + (v + dd) * c64(lambda, 0.0)));
        let mut e = eigh(&h);
        if let Some(f) = frame {
            e = gauge_align(f, &e).unwrap();
        }
        let vb = HermitianOperator::from_matrix_unchecked(v.clone()).in_basis(&e.vectors);
        let n = e.dim();
        let mut l = CMatrix::zeros(n, n);
        for m in 0..n {
            for k in 0..n {
                if m != k {
                    l[(m, k)] = vb.matrix()[(m, k)] * (e.values[m] - e.values[k]);
                }
            }
        }
        let vel = (0..n).map(|m| vb.matrix()[(m, m)].re).collect();
        (LevelState { x: e.values.clone(), v: vel, l }, e)
    }

    /// Central differences of exactly diagonalized coordinates against the
    /// right-hand sides, with and without noise.
    #[test]
    fn rhs_matches_finite_differences_of_eigendecomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..12 {
            let n = 3 + trial % 3;
            let h0 = hermitize(&(random_matrix(&mut rng, n) * c64(3.0, 0.0))).into_matrix();
            let v = hermitize(&random_matrix(&mut rng, n)).into_matrix();
            let noisy = trial % 2 == 1;
            let dd = if noisy {
                hermitize(&(random_matrix(&mut rng, n) * c64(0.5, 0.0))).into_matrix()
            } else {
                CMatrix::zeros(n, n)
            };
            let lambda = 0.3;
            let h = 1e-5;
            let (s, e) = exact_coordinates(&h0, &v, &dd, lambda, None);
            let frame = GaugeFrame::from(&e);
            let (up, _) = exact_coordinates(&h0, &v, &dd, lambda + h, Some(&frame));
            let (down, _) = exact_coordinates(&h0, &v, &dd, lambda - h, Some(&frame));
            let d_eig = HermitianOperator::from_matrix_unchecked(dd.clone()).in_basis(&e.vectors);
            let rhs = stochastic_pechukas_rhs(&s, d_eig.matrix(), &Denominators::default()).unwrap();
            let scale = 1.0 + rhs.dl.iter().map(|z| z.norm()).fold(0.0, f64::max);
            for m in 0..n {
                let fx = (up.x[m] - down.x[m]) / (2.0 * h);
                let fv = (up.v[m] - down.v[m]) / (2.0 * h);
                assert!((fx - rhs.dx[m]).abs() < 1e-6 * scale, "trial {trial} dx[{m}]: {fx} vs {}", rhs.dx[m]);
                assert!((fv - rhs.dv[m]).abs() < 1e-5 * scale, "trial {trial} dv[{m}]: {fv} vs {}", rhs.dv[m]);
                for k in 0..n {
                    if m != k {
                        let fl = (up.l[(m, k)] - down.l[(m, k)]) / (2.0 * h);
                        assert!((fl - rhs.dl[(m, k)]).norm() < 1e-5 * scale, "trial {trial} dl[{m},{k}]: {fl} vs {}", rhs.dl[(m, k)]);
                    }
                }
            }
        }
    }
}
