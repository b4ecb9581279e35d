//! Linearized PD error dynamics and their exact zero-order-hold sampling.
//!
//! With position error `e = q - q*` and action error `ξ`, the linearized
//! closed loop is `M ë = -Kp e - Kd ė + Kp ξ`. Stacking `x = [e; ė]` gives the
//! continuous system `ẋ = A_c x + B_c ξ`, `e = C x`, which is sampled with the
//! action held constant over each control period.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg;

/// Spectral radii at or above `1 - DEFAULT_STABILITY_MARGIN` are rejected.
pub const DEFAULT_STABILITY_MARGIN: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-12;

/// Joint-space inertia and control period.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "PlantSpec")]
pub struct PlantModel {
    mass: DMatrix<f64>,
    dt: f64,
}

impl PlantModel {
    pub fn new(mass: DMatrix<f64>, dt: f64) -> Result<Self> {
        positive("dt", dt)?;
        let n = mass.nrows();
        if n == 0 {
            return Err(Error::Invalid("plant must have at least one joint".into()));
        }
        if !mass.is_square() {
            return Err(Error::DimensionMismatch {
                context: "mass matrix columns",
                expected: n,
                found: mass.ncols(),
            });
        }
        if let Some(&bad) = mass.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                name: "mass",
                value: bad,
            });
        }
        let asymmetry = (&mass - mass.transpose()).norm() / mass.norm().max(f64::MIN_POSITIVE);
        if asymmetry > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let min_eigenvalue = linalg::min_eigenvalue(&mass);
        if min_eigenvalue <= 0.0 || mass.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(Self { mass, dt })
    }

    /// Single joint with scalar mass `m`.
    pub fn scalar(m: f64, dt: f64) -> Result<Self> {
        Self::diagonal(&[m], dt)
    }

    pub fn diagonal(masses: &[f64], dt: f64) -> Result<Self> {
        for &m in masses {
            positive("mass", m)?;
        }
        Self::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(masses)),
            dt,
        )
    }

    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Diagonal entries when the mass matrix is exactly diagonal.
    pub fn diagonal_masses(&self) -> Option<Vec<f64>> {
        let n = self.n();
        let off_diagonal = (0..n).any(|i| (0..n).any(|j| i != j && self.mass[(i, j)] != 0.0));
        (!off_diagonal).then(|| self.mass.diagonal().iter().copied().collect())
    }
}

/// Diagonal PD gains: stiffness `kp` and damping `kd` per joint.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "GainSpec")]
pub struct GainSetting {
    kp: Vec<f64>,
    kd: Vec<f64>,
}

impl GainSetting {
    pub fn new(kp: Vec<f64>, kd: Vec<f64>) -> Result<Self> {
        if kp.is_empty() {
            return Err(Error::Invalid("gain vectors must be non-empty".into()));
        }
        if kp.len() != kd.len() {
            return Err(Error::DimensionMismatch {
                context: "kd length",
                expected: kp.len(),
                found: kd.len(),
            });
        }
        for &v in &kp {
            positive("kp", v)?;
        }
        for &v in &kd {
            positive("kd", v)?;
        }
        Ok(Self { kp, kd })
    }

    pub fn scalar(kp: f64, kd: f64) -> Result<Self> {
        Self::new(vec![kp], vec![kd])
    }

    pub fn n(&self) -> usize {
        self.kp.len()
    }

    pub fn kp(&self) -> &[f64] {
        &self.kp
    }

    pub fn kd(&self) -> &[f64] {
        &self.kd
    }
}

/// `ẋ = a_c x + b_c ξ`, `e = c x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousErrorSystem {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl ContinuousErrorSystem {
    pub fn n(&self) -> usize {
        self.c.nrows()
    }
}

/// Sampled closed loop `x_{t+1} = a x_t + b ξ_t`, `e_t = c x_t`, certified
/// Schur stable at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteClosedLoop {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    spectral_radius: f64,
    dt: f64,
}

impl DiscreteClosedLoop {
    /// Wrap raw matrices, checking shapes and Schur stability with the
    /// default margin.
    pub fn from_matrices(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        dt: f64,
    ) -> Result<Self> {
        Self::with_margin(a, b, c, dt, DEFAULT_STABILITY_MARGIN)
    }

    pub fn with_margin(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        dt: f64,
        margin: f64,
    ) -> Result<Self> {
        positive("dt", dt)?;
        let state = a.nrows();
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                context: "A columns",
                expected: state,
                found: a.ncols(),
            });
        }
        if b.nrows() != state {
            return Err(Error::DimensionMismatch {
                context: "B rows",
                expected: state,
                found: b.nrows(),
            });
        }
        if c.ncols() != state {
            return Err(Error::DimensionMismatch {
                context: "C columns",
                expected: state,
                found: c.ncols(),
            });
        }
        let rho = linalg::spectral_radius(&a)?;
        if rho >= 1.0 - margin {
            return Err(Error::UnstableLoop { rho, margin });
        }
        Ok(Self {
            a,
            b,
            c,
            spectral_radius: rho,
            dt,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Number of noise inputs.
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Number of position outputs.
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }
}

/// Assemble `A_c = [[0, I], [-M⁻¹Kp, -M⁻¹Kd]]`, `B_c = [[0], [M⁻¹Kp]]`,
/// `C = [I, 0]`.
pub fn build_error_dynamics(
    plant: &PlantModel,
    gains: &GainSetting,
) -> Result<ContinuousErrorSystem> {
    let n = plant.n();
    if gains.n() != n {
        return Err(Error::DimensionMismatch {
            context: "gain vector length",
            expected: n,
            found: gains.n(),
        });
    }
    let chol = plant
        .mass()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: linalg::min_eigenvalue(plant.mass()),
        })?;
    let kp = DMatrix::from_diagonal(&DVector::from_column_slice(gains.kp()));
    let kd = DMatrix::from_diagonal(&DVector::from_column_slice(gains.kd()));
    let minv_kp = chol.solve(&kp);
    let minv_kd = chol.solve(&kd);

    let mut a_c = DMatrix::zeros(2 * n, 2 * n);
    a_c.view_mut((0, n), (n, n)).fill_with_identity();
    a_c.view_mut((n, 0), (n, n)).copy_from(&(-&minv_kp));
    a_c.view_mut((n, n), (n, n)).copy_from(&(-&minv_kd));

    let mut b_c = DMatrix::zeros(2 * n, n);
    b_c.view_mut((n, 0), (n, n)).copy_from(&minv_kp);

    Ok(ContinuousErrorSystem {
        a_c,
        b_c,
        c: position_selector(n),
    })
}

/// `C = [I_n, 0]`.
pub fn position_selector(n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(n, 2 * n);
    c.view_mut((0, 0), (n, n)).fill_with_identity();
    c
}

/// Exact ZOH sampling with the default stability margin.
pub fn zoh_discretize(sys: &ContinuousErrorSystem, dt: f64) -> Result<DiscreteClosedLoop> {
    zoh_discretize_with_margin(sys, dt, DEFAULT_STABILITY_MARGIN)
}

/// Exact ZOH sampling. Both `A = exp(A_c dt)` and
/// `B = (∫₀^dt exp(A_c s) ds) B_c` come out of one exponential of the
/// augmented block `[[A_c, B_c], [0, 0]]·dt`.
pub fn zoh_discretize_with_margin(
    sys: &ContinuousErrorSystem,
    dt: f64,
    margin: f64,
) -> Result<DiscreteClosedLoop> {
    positive("dt", dt)?;
    let (a, b) = zoh_matrices(&sys.a_c, &sys.b_c, dt);
    DiscreteClosedLoop::with_margin(a, b, sys.c.clone(), dt, margin)
}

/// Van Loan block exponential, without any stability check.
pub fn zoh_matrices(
    a_c: &DMatrix<f64>,
    b_c: &DMatrix<f64>,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let s = a_c.nrows();
    let m = b_c.ncols();
    let mut aug = DMatrix::zeros(s + m, s + m);
    aug.view_mut((0, 0), (s, s)).copy_from(a_c);
    aug.view_mut((0, s), (s, m)).copy_from(b_c);
    let e = linalg::expm(&(aug * dt));
    (
        e.view((0, 0), (s, s)).into_owned(),
        e.view((0, s), (s, m)).into_owned(),
    )
}

/// Build and sample the closed loop for a plant and gain setting in one go.
pub fn discretize(plant: &PlantModel, gains: &GainSetting) -> Result<DiscreteClosedLoop> {
    zoh_discretize(&build_error_dynamics(plant, gains)?, plant.dt())
}

/// Closed-form ZOH eigenvalues of the single-joint loop,
/// `exp(dt·(-β ± √(β² - 4mα)) / 2m)`.
pub fn canonical_zoh_eigenvalues(alpha: f64, beta: f64, m: f64, dt: f64) -> Result<[Complex64; 2]> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    positive("m", m)?;
    positive("dt", dt)?;
    let disc = Complex64::new(beta * beta - 4.0 * m * alpha, 0.0).sqrt();
    let root = |sign: f64| ((Complex64::new(-beta, 0.0) + sign * disc) / (2.0 * m) * dt).exp();
    Ok([root(1.0), root(-1.0)])
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    linalg::spectral_radius(a)
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite { name, value });
    }
    if value <= 0.0 {
        return Err(Error::NonPositive { name, value });
    }
    Ok(())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub(crate) enum ScalarOrVec {
    Scalar(f64),
    Vec(Vec<f64>),
}

impl ScalarOrVec {
    pub(crate) fn into_vec(self) -> Vec<f64> {
        match self {
            ScalarOrVec::Scalar(v) => vec![v],
            ScalarOrVec::Vec(v) => v,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MassSpec {
    Scalar(f64),
    Full(Vec<Vec<f64>>),
    Diagonal(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantSpec {
    mass: MassSpec,
    dt: f64,
}

impl TryFrom<PlantSpec> for PlantModel {
    type Error = Error;

    fn try_from(spec: PlantSpec) -> Result<Self> {
        match spec.mass {
            MassSpec::Scalar(m) => PlantModel::scalar(m, spec.dt),
            MassSpec::Diagonal(d) => PlantModel::diagonal(&d, spec.dt),
            MassSpec::Full(rows) => {
                let n = rows.len();
                if let Some(bad) = rows.iter().find(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch {
                        context: "mass matrix row",
                        expected: n,
                        found: bad.len(),
                    });
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                PlantModel::new(DMatrix::from_row_slice(n, n, &flat), spec.dt)
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct GainSpec {
    kp: ScalarOrVec,
    kd: ScalarOrVec,
}

impl TryFrom<GainSpec> for GainSetting {
    type Error = Error;

    fn try_from(spec: GainSpec) -> Result<Self> {
        GainSetting::new(spec.kp.into_vec(), spec.kd.into_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_loop(m: f64, kp: f64, kd: f64, dt: f64) -> DiscreteClosedLoop {
        discretize(
            &PlantModel::scalar(m, dt).unwrap(),
            &GainSetting::scalar(kp, kd).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn error_dynamics_co_gains() {
        let sys = build_error_dynamics(
            &PlantModel::scalar(1.0, 0.02).unwrap(),
            &GainSetting::scalar(50.0, 40.0).unwrap(),
        )
        .unwrap();
        assert_eq!(
            sys.a_c,
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -50.0, -40.0])
        );
        assert_eq!(sys.b_c, DMatrix::from_row_slice(2, 1, &[0.0, 50.0]));
        assert_eq!(sys.c, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn error_dynamics_unit_parameters() {
        let sys = build_error_dynamics(
            &PlantModel::scalar(1.0, 0.1).unwrap(),
            &GainSetting::scalar(1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(
            sys.a_c,
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0])
        );
        assert_eq!(sys.b_c, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
    }

    #[test]
    fn error_dynamics_two_joint_blocks() {
        let plant = PlantModel::diagonal(&[2.0, 1.0], 0.01).unwrap();
        let gains = GainSetting::new(vec![4.0, 9.0], vec![2.0, 3.0]).unwrap();
        let sys = build_error_dynamics(&plant, &gains).unwrap();
        let lower_left = sys.a_c.view((2, 0), (2, 2)).into_owned();
        let lower_right = sys.a_c.view((2, 2), (2, 2)).into_owned();
        let want_ll = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -9.0]);
        let want_lr = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -3.0]);
        assert!((lower_left - want_ll).norm() < 1e-15);
        assert!((lower_right - want_lr).norm() < 1e-15);
        // structural blocks
        assert_eq!(
            sys.a_c.view((0, 0), (2, 2)).into_owned(),
            DMatrix::<f64>::zeros(2, 2)
        );
        assert_eq!(
            sys.a_c.view((0, 2), (2, 2)).into_owned(),
            DMatrix::<f64>::identity(2, 2)
        );
        assert_eq!(
            sys.b_c.view((0, 0), (2, 2)).into_owned(),
            DMatrix::<f64>::zeros(2, 2)
        );
    }

    #[test]
    fn rejects_bad_plants_and_gains() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            PlantModel::new(asym, 0.02),
            Err(Error::NotSymmetric { .. })
        ));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            PlantModel::new(indefinite, 0.02),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(PlantModel::scalar(1.0, 0.0).is_err());
        assert!(GainSetting::scalar(0.0, 1.0).is_err());
        assert!(GainSetting::new(vec![1.0, 2.0], vec![1.0]).is_err());

        let plant = PlantModel::diagonal(&[1.0, 1.0], 0.02).unwrap();
        let gains = GainSetting::scalar(1.0, 1.0).unwrap();
        assert!(matches!(
            build_error_dynamics(&plant, &gains),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn table_one_spectral_radii() {
        assert!((scalar_loop(1.0, 100.0, 20.0, 0.02).spectral_radius() - 0.819).abs() < 1e-3);
        assert!((scalar_loop(1.0, 50.0, 40.0, 0.02).spectral_radius() - 0.974).abs() < 1e-3);
    }

    #[test]
    fn small_dt_matches_first_order_expansion() {
        let dt = 1e-6;
        let sys = build_error_dynamics(
            &PlantModel::scalar(1.3, dt).unwrap(),
            &GainSetting::scalar(70.0, 12.0).unwrap(),
        )
        .unwrap();
        let lp = zoh_discretize(&sys, dt).unwrap();
        let n = sys.a_c.nrows();
        let a_lin = DMatrix::<f64>::identity(n, n) + &sys.a_c * dt;
        let b_lin = &sys.b_c * dt;
        assert!((lp.a() - &a_lin).norm() / a_lin.norm() <= 1e-5);
        assert!((lp.b() - &b_lin).norm() / b_lin.norm() <= 1e-5);
    }

    #[test]
    fn canonical_eigenvalues_match_hand_values() {
        let [l1, l2] = canonical_zoh_eigenvalues(100.0, 20.0, 1.0, 0.02).unwrap();
        assert!((l1.norm() - (-0.2f64).exp()).abs() < 1e-12);
        assert!((l2.norm() - (-0.2f64).exp()).abs() < 1e-12);

        let [l1, l2] = canonical_zoh_eigenvalues(50.0, 40.0, 1.0, 0.02).unwrap();
        // real roots -20 ± sqrt(350)
        let slow = (-20.0 + 350f64.sqrt()) * 0.02;
        assert!((l1.norm().max(l2.norm()) - slow.exp()).abs() < 1e-12);
        assert!((slow.exp() - 0.9745).abs() < 1e-4);

        assert!(canonical_zoh_eigenvalues(1.0, 0.0, 1.0, 0.02).is_err());
    }

    #[test]
    fn canonical_eigenvalues_agree_with_general_solver() {
        for &(a, b, m) in &[
            (50.0, 40.0, 1.0),
            (100.0, 20.0, 1.0),
            (300.0, 3.0, 0.7),
            (5.0, 200.0, 2.0),
        ] {
            let lp = scalar_loop(m, a, b, 0.02);
            let pair = canonical_zoh_eigenvalues(a, b, m, 0.02).unwrap();
            let closed = pair[0].norm().max(pair[1].norm());
            assert!(
                (lp.spectral_radius() - closed).abs() < 1e-10,
                "({a},{b},{m})"
            );
        }
    }

    #[test]
    fn unstable_loop_is_rejected() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DMatrix::from_row_slice(1, 1, &[1.0]);
        let c = DMatrix::from_row_slice(1, 1, &[1.0]);
        match DiscreteClosedLoop::from_matrices(a, b, c, 0.1) {
            Err(Error::UnstableLoop { rho, .. }) => assert_eq!(rho, 1.0),
            other => panic!("expected UnstableLoop, got {other:?}"),
        }
    }

    #[test]
    fn plant_and_gains_from_json() {
        let plant: PlantModel =
            serde_json::from_str(r#"{"mass": [[2.0, 0.1], [0.1, 1.0]], "dt": 0.01}"#).unwrap();
        assert_eq!(plant.n(), 2);
        assert!(plant.diagonal_masses().is_none());
        let plant: PlantModel = serde_json::from_str(r#"{"mass": 1.0, "dt": 0.02}"#).unwrap();
        assert_eq!(plant.diagonal_masses(), Some(vec![1.0]));
        let plant: PlantModel =
            serde_json::from_str(r#"{"mass": [1.0, 3.0], "dt": 0.02}"#).unwrap();
        assert_eq!(plant.diagonal_masses(), Some(vec![1.0, 3.0]));
        let gains: GainSetting = serde_json::from_str(r#"{"kp": [50, 60], "kd": [4, 5]}"#).unwrap();
        assert_eq!(gains.kd(), &[4.0, 5.0]);
        assert!(serde_json::from_str::<GainSetting>(r#"{"kp": -1, "kd": 1}"#).is_err());
        assert!(
            serde_json::from_str::<PlantModel>(r#"{"mass": [[1.0, 2.0]], "dt": 0.1}"#).is_err()
        );
    }
}
