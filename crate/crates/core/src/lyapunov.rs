//! Proxy matrices of the propagated action error.
//!
//! For `x_{t+1} = A x_t + B ξ_t` started at `x_0 = 0` with independent
//! sub-Gaussian `ξ_t` of proxy `Σ`, the state at step `t` is sub-Gaussian with
//! proxy `S_t = Σ_{s<t} A^s B Σ Bᵀ (Aᵀ)^s`; the position error has proxy
//! `X_t = C S_t Cᵀ`. For a Schur-stable `A` these converge to the solution of
//! the discrete Lyapunov equation `S = A S Aᵀ + B Σ Bᵀ`.
//!
//! Both Lyapunov solvers vectorize the equation and solve the dense
//! Kronecker system directly; state dimensions here stay below ~24.

use nalgebra::DMatrix;

use crate::dynamics::{DiscreteClosedLoop, DEFAULT_STABILITY_MARGIN};
use crate::error::{Error, Result};
use crate::linalg;

/// Relative Lyapunov residual tolerance, `‖res‖_F ≤ tol·(1 + ‖Q‖_F)`.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Relative eigenvalue slack for PSD checks and clamping.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyResult {
    /// State proxy `S_t` (or `S_∞`).
    pub s: DMatrix<f64>,
    /// Position proxy `C S Cᵀ`.
    pub x: DMatrix<f64>,
    pub horizon: Horizon,
    /// Frobenius residual of the Lyapunov equation; zero for finite horizons.
    pub residual: f64,
}

/// `S_t` by the recursion `S_{k+1} = A S_k Aᵀ + B Σ Bᵀ`, `S_0 = 0`.
pub fn finite_horizon_proxy(
    lp: &DiscreteClosedLoop,
    sigma_roll: &DMatrix<f64>,
    t: usize,
) -> Result<ProxyResult> {
    if t == 0 {
        return Err(Error::Invalid("finite horizon must be at least 1".into()));
    }
    let w = injection(lp, sigma_roll)?;
    let a = lp.a();
    let at = a.transpose();
    let mut s = w.clone();
    for _ in 1..t {
        s = a * &s * &at + &w;
        s = linalg::symmetrize(&s);
    }
    let x = lp.c() * &s * lp.c().transpose();
    Ok(ProxyResult {
        s,
        x,
        horizon: Horizon::Finite(t),
        residual: 0.0,
    })
}

/// `S_∞` from the discrete Lyapunov equation.
pub fn stationary_proxy(lp: &DiscreteClosedLoop, sigma_roll: &DMatrix<f64>) -> Result<ProxyResult> {
    let w = injection(lp, sigma_roll)?;
    let s = solve_discrete_lyapunov(lp.a(), &w)?;
    let residual = (&s - lp.a() * &s * lp.a().transpose() - &w).norm();
    let x = lp.c() * &s * lp.c().transpose();
    Ok(ProxyResult {
        s,
        x,
        horizon: Horizon::Infinite,
        residual,
    })
}

/// `B Σ Bᵀ`, after validating `Σ`.
fn injection(lp: &DiscreteClosedLoop, sigma_roll: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if sigma_roll.nrows() != lp.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "sigma_roll",
            expected: lp.input_dim(),
            found: sigma_roll.nrows(),
        });
    }
    linalg::check_psd(sigma_roll, "sigma_roll", PSD_TOL)?;
    Ok(linalg::symmetrize(
        &(lp.b() * sigma_roll * lp.b().transpose()),
    ))
}

/// Solve `S = A S Aᵀ + Q` for Schur-stable `A` via
/// `(I - A⊗A) vec(S) = vec(Q)`.
pub fn solve_discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = square_pair(a, q)?;
    linalg::check_psd(q, "q", PSD_TOL)?;
    let rho = linalg::spectral_radius(a)?;
    if rho >= 1.0 - DEFAULT_STABILITY_MARGIN {
        return Err(Error::UnstableLoop {
            rho,
            margin: DEFAULT_STABILITY_MARGIN,
        });
    }
    let op = DMatrix::<f64>::identity(n * n, n * n) - linalg::kron(a, a);
    let s = solve_vectorized(op, q, 1.0)?;
    let residual = (&s - a * &s * a.transpose() - q).norm();
    finish(s, residual, q)
}

/// Solve `A P + P Aᵀ + Q = 0` for Hurwitz `A` via
/// `(I⊗A + A⊗I) vec(P) = -vec(Q)`.
pub fn solve_continuous_lyapunov(a_c: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = square_pair(a_c, q)?;
    linalg::check_psd(q, "q", PSD_TOL)?;
    let max_real = linalg::eigenvalues(a_c)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_real >= 0.0 {
        return Err(Error::NotHurwitz { max_real });
    }
    let ident = DMatrix::<f64>::identity(n, n);
    let op = linalg::kron(&ident, a_c) + linalg::kron(a_c, &ident);
    let p = solve_vectorized(op, q, -1.0)?;
    let residual = (a_c * &p + &p * a_c.transpose() + q).norm();
    finish(p, residual, q)
}

fn square_pair(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "Lyapunov matrix columns",
            expected: n,
            found: a.ncols(),
        });
    }
    if q.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            context: "Lyapunov right-hand side",
            expected: n,
            found: q.nrows(),
        });
    }
    Ok(n)
}

fn solve_vectorized(op: DMatrix<f64>, q: &DMatrix<f64>, sign: f64) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    // column-major storage makes `as_slice` exactly vec(Q)
    let rhs = nalgebra::DVector::from_column_slice(q.as_slice()) * sign;
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("singular Kronecker operator".into()))?;
    Ok(linalg::symmetrize(&DMatrix::from_column_slice(
        n,
        n,
        sol.as_slice(),
    )))
}

fn finish(s: DMatrix<f64>, residual: f64, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let tolerance = RESIDUAL_TOL * (1.0 + q.norm());
    if !(residual <= tolerance) {
        return Err(Error::Residual {
            residual,
            tolerance,
        });
    }
    let min = linalg::min_eigenvalue(&s);
    let scale = linalg::max_eigenvalue(&s).abs();
    if min < -PSD_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd {
            name: "Lyapunov solution",
            min_eigenvalue: min,
        });
    }
    Ok(linalg::clamp_psd(s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_error_dynamics, discretize, GainSetting, PlantModel};

    fn scalar_loop(kp: f64, kd: f64, dt: f64) -> DiscreteClosedLoop {
        discretize(
            &PlantModel::scalar(1.0, dt).unwrap(),
            &GainSetting::scalar(kp, kd).unwrap(),
        )
        .unwrap()
    }

    fn one() -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0)
    }

    #[test]
    fn single_step_proxy_is_injection() {
        let lp = scalar_loop(50.0, 40.0, 0.02);
        let p = finite_horizon_proxy(&lp, &one(), 1).unwrap();
        let want = lp.b() * lp.b().transpose();
        assert!((p.s - &want).norm() < 1e-18);
        assert_eq!(p.x[(0, 0)], want[(0, 0)]);
        assert!(finite_horizon_proxy(&lp, &one(), 0).is_err());
    }

    #[test]
    fn co_proxy_after_500_steps() {
        let lp = scalar_loop(50.0, 40.0, 0.02);
        let p = finite_horizon_proxy(&lp, &one(), 500).unwrap();
        // Frozen from an independent brute-force power sum; the rounded
        // tabulated value is 0.012.
        assert!((p.x[(0, 0)] - 0.012_480_435).abs() < 1e-8);
        assert!((p.x[(0, 0)] - 0.012).abs() < 5e-4);
    }

    #[test]
    fn discrete_lyapunov_trivial_cases() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = solve_discrete_lyapunov(&DMatrix::zeros(2, 2), &q).unwrap();
        assert!((s - &q).norm() < 1e-15);

        let s = solve_discrete_lyapunov(&DMatrix::from_element(1, 1, 0.5), &one()).unwrap();
        assert!((s[(0, 0)] - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn discrete_lyapunov_su_regime() {
        let lp = scalar_loop(100.0, 20.0, 0.02);
        let q = lp.b() * lp.b().transpose();
        let s = solve_discrete_lyapunov(lp.a(), &q).unwrap();
        let x = (lp.c() * s * lp.c().transpose())[(0, 0)];
        assert!((x - 0.050).abs() < 5e-4);
    }

    #[test]
    fn discrete_lyapunov_rejects_unstable() {
        let a = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(
            solve_discrete_lyapunov(&a, &one()),
            Err(Error::UnstableLoop { .. })
        ));
    }

    #[test]
    fn continuous_lyapunov_co_closed_form() {
        let sys = build_error_dynamics(
            &PlantModel::scalar(1.0, 0.02).unwrap(),
            &GainSetting::scalar(50.0, 40.0).unwrap(),
        )
        .unwrap();
        let q = &sys.b_c * sys.b_c.transpose();
        let p = solve_continuous_lyapunov(&sys.a_c, &q).unwrap();
        assert!((p[(0, 0)] - 0.625).abs() < 1e-12);
        assert!((p[(1, 1)] - 31.25).abs() < 1e-9);
        assert!(p[(0, 1)].abs() < 1e-10);
    }

    #[test]
    fn continuous_lyapunov_scalar_and_mass_two() {
        let p = solve_continuous_lyapunov(
            &DMatrix::from_element(1, 1, -1.0),
            &DMatrix::from_element(1, 1, 2.0),
        )
        .unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-15);

        let sys = build_error_dynamics(
            &PlantModel::scalar(2.0, 0.02).unwrap(),
            &GainSetting::scalar(8.0, 4.0).unwrap(),
        )
        .unwrap();
        let q = &sys.b_c * sys.b_c.transpose();
        let p = solve_continuous_lyapunov(&sys.a_c, &q).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((p[(1, 1)] - 4.0).abs() < 1e-12);
        assert!(p[(0, 1)].abs() < 1e-12);
        let residual = (&sys.a_c * &p + &p * sys.a_c.transpose() + &q).norm();
        assert!(residual < 1e-10);
    }

    #[test]
    fn continuous_lyapunov_rejects_non_hurwitz() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(matches!(
            solve_continuous_lyapunov(&a, &DMatrix::identity(2, 2)),
            Err(Error::NotHurwitz { .. })
        ));
    }

    #[test]
    fn stationary_proxy_carries_small_residual() {
        let lp = scalar_loop(100.0, 40.0, 0.02);
        let p = stationary_proxy(&lp, &one()).unwrap();
        assert_eq!(p.horizon, Horizon::Infinite);
        assert!(p.residual <= RESIDUAL_TOL);
        assert!((p.x[(0, 0)] - 0.025).abs() < 5e-4);
    }

    #[test]
    fn rejects_indefinite_sigma() {
        let lp = scalar_loop(50.0, 40.0, 0.02);
        let bad = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(
            finite_horizon_proxy(&lp, &bad, 3),
            Err(Error::NotPsd { .. })
        ));
    }
}
