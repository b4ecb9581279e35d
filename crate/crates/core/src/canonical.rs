//! Closed forms for the single-joint PD loop, the scalar ordering index and
//! the four-regime comparison.
//!
//! The canonical system is `m ë = -α e - β ė + α ξ` with white forcing of
//! intensity `σ²`. Its stationary position variance is `σ²α/(2β)`, which is
//! strictly increasing in stiffness and strictly decreasing in damping over
//! the whole stable orthant `α, β > 0`.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::TailBound;
use crate::dynamics::{GainSetting, PlantModel};
use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance for declaring `Ψ(SO) = Ψ(CU)`.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "CO")]
    CompliantOverdamped,
    #[serde(rename = "SO")]
    StiffOverdamped,
    #[serde(rename = "CU")]
    CompliantUnderdamped,
    #[serde(rename = "SU")]
    StiffUnderdamped,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::CompliantOverdamped,
        Regime::StiffOverdamped,
        Regime::CompliantUnderdamped,
        Regime::StiffUnderdamped,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Regime::CompliantOverdamped => "CO",
            Regime::StiffOverdamped => "SO",
            Regime::CompliantUnderdamped => "CU",
            Regime::StiffUnderdamped => "SU",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.label().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Two stiffness and two damping levels, combined into the four corners
/// CO = (α_L, β_H), SO = (α_H, β_H), CU = (α_L, β_L), SU = (α_H, β_L).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeQuad {
    pub alpha_l: f64,
    pub alpha_h: f64,
    pub beta_l: f64,
    pub beta_h: f64,
}

impl RegimeQuad {
    pub fn new(alpha_l: f64, alpha_h: f64, beta_l: f64, beta_h: f64) -> Result<Self> {
        for (name, v) in [
            ("alpha_l", alpha_l),
            ("alpha_h", alpha_h),
            ("beta_l", beta_l),
            ("beta_h", beta_h),
        ] {
            positive(name, v)?;
        }
        if alpha_l >= alpha_h {
            return Err(Error::Invalid(format!(
                "stiffness levels must satisfy alpha_l < alpha_h, got {alpha_l} >= {alpha_h}"
            )));
        }
        if beta_l >= beta_h {
            return Err(Error::Invalid(format!(
                "damping levels must satisfy beta_l < beta_h, got {beta_l} >= {beta_h}"
            )));
        }
        Ok(Self {
            alpha_l,
            alpha_h,
            beta_l,
            beta_h,
        })
    }

    /// The gain levels used in the reference experiments: α ∈ {50, 100},
    /// β ∈ {20, 40}.
    pub fn reference() -> Self {
        Self::new(50.0, 100.0, 20.0, 40.0).expect("reference quad is valid")
    }

    /// `(α, β)` for one corner.
    pub fn gains(&self, regime: Regime) -> (f64, f64) {
        match regime {
            Regime::CompliantOverdamped => (self.alpha_l, self.beta_h),
            Regime::StiffOverdamped => (self.alpha_h, self.beta_h),
            Regime::CompliantUnderdamped => (self.alpha_l, self.beta_l),
            Regime::StiffUnderdamped => (self.alpha_h, self.beta_l),
        }
    }

    pub fn gain_setting(&self, regime: Regime) -> GainSetting {
        let (a, b) = self.gains(regime);
        GainSetting::scalar(a, b).expect("quad levels are positive")
    }

    pub fn co(&self) -> GainSetting {
        self.gain_setting(Regime::CompliantOverdamped)
    }

    pub fn so(&self) -> GainSetting {
        self.gain_setting(Regime::StiffOverdamped)
    }

    pub fn cu(&self) -> GainSetting {
        self.gain_setting(Regime::CompliantUnderdamped)
    }

    pub fn su(&self) -> GainSetting {
        self.gain_setting(Regime::StiffUnderdamped)
    }
}

/// Scalars `(l, b, ρ*)` and reference `X̄` of a shape-preserving upper-bound
/// certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeStructure {
    /// Label difficulty.
    pub l: f64,
    /// Injection.
    pub b: f64,
    /// Contraction rate.
    pub rho_star: f64,
    pub x_bar: DMatrix<f64>,
}

impl ShapeStructure {
    pub fn new(l: f64, b: f64, rho_star: f64, x_bar: DMatrix<f64>) -> Result<Self> {
        if !(l >= 0.0 && l.is_finite()) {
            return Err(Error::Invalid(format!(
                "label difficulty must be >= 0, got {l}"
            )));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::Invalid(format!("injection must be >= 0, got {b}")));
        }
        if !(0.0..1.0).contains(&rho_star) {
            return Err(Error::Invalid(format!(
                "contraction must lie in [0, 1), got {rho_star}"
            )));
        }
        linalg::check_psd(&x_bar, "x_bar", 1e-10)?;
        Ok(Self {
            l,
            b,
            rho_star,
            x_bar,
        })
    }
}

/// Stationary covariance `diag(σ²α/(2β), σ²α²/(2βm))` of `[e; ė]`.
pub fn continuous_stationary_covariance(
    alpha: f64,
    beta: f64,
    m: f64,
    sigma2: f64,
) -> Result<DMatrix<f64>> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    positive("m", m)?;
    non_negative("sigma2", sigma2)?;
    Ok(DMatrix::from_row_slice(
        2,
        2,
        &[
            sigma2 * alpha / (2.0 * beta),
            0.0,
            0.0,
            sigma2 * alpha * alpha / (2.0 * beta * m),
        ],
    ))
}

/// `σ²α/(2β)`; independent of the mass.
pub fn continuous_position_variance(alpha: f64, beta: f64, sigma2: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    non_negative("sigma2", sigma2)?;
    Ok(sigma2 * alpha / (2.0 * beta))
}

/// Squared H₂ norm of `(α/m)/(s² + (β/m)s + α/m)`, evaluated through the
/// natural frequency and damping ratio: `(α/m)²/(4ζω_n³) = α/(2β)`.
pub fn h2_norm_squared(alpha: f64, beta: f64) -> Result<f64> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    // any positive mass gives the same value; use m = 1
    let m = 1.0;
    let omega_n = (alpha / m).sqrt();
    let zeta = beta / (2.0 * (m * alpha).sqrt());
    let k = alpha / m;
    Ok(k * k / (4.0 * zeta * omega_n.powi(3)))
}

/// Leading-order canonical failure bound
/// `min(1, 2(T+1) exp(-r²β/(αΔt L_roll)))`. The `o(Δt)` remainder is not
/// included.
pub fn canonical_failure_bound(
    alpha: f64,
    beta: f64,
    dt: f64,
    r: f64,
    t_horizon: usize,
    l_roll: f64,
) -> Result<TailBound> {
    positive("alpha", alpha)?;
    positive("beta", beta)?;
    positive("dt", dt)?;
    positive("r", r)?;
    positive("l_roll", l_roll)?;
    let prefactor = 2.0 * (t_horizon as f64 + 1.0);
    let exponent = -r * r * beta / (alpha * dt * l_roll);
    let raw = prefactor * exponent.exp();
    Ok(TailBound {
        probability: raw.min(1.0),
        raw,
        prefactor,
        exponent,
        degenerate: false,
    })
}

/// `Ψ = b·l/(1 - ρ*²)`.
pub fn ordering_index(structure: &ShapeStructure) -> f64 {
    structure.b * structure.l / (1.0 - structure.rho_star * structure.rho_star)
}

/// Smallest eigenvalue of `Ψ·X̄ - X_∞`; non-negative when the certificate
/// dominates the stationary proxy.
pub fn dominance_margin(structure: &ShapeStructure, x_inf: &DMatrix<f64>) -> f64 {
    linalg::min_eigenvalue(&(&structure.x_bar * ordering_index(structure) - x_inf))
}

/// Edge of the regime Hasse diagram; `lower ≤ upper` is expected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HasseEdge {
    pub lower: Regime,
    pub upper: Regime,
}

impl fmt::Display for HasseEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <= {}", self.lower, self.upper)
    }
}

pub const HASSE_EDGES: [HasseEdge; 4] = [
    HasseEdge {
        lower: Regime::CompliantOverdamped,
        upper: Regime::StiffOverdamped,
    },
    HasseEdge {
        lower: Regime::CompliantOverdamped,
        upper: Regime::CompliantUnderdamped,
    },
    HasseEdge {
        lower: Regime::StiffOverdamped,
        upper: Regime::StiffUnderdamped,
    },
    HasseEdge {
        lower: Regime::CompliantUnderdamped,
        upper: Regime::StiffUnderdamped,
    },
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    /// Ψ in CO, SO, CU, SU order.
    pub values: [f64; 4],
    /// Hasse edges whose inequality failed.
    pub violations: Vec<HasseEdge>,
    /// `Ψ(SO) - Ψ(CU)`; its sign is system-dependent.
    pub so_minus_cu: f64,
    /// `|Ψ(SO) - Ψ(CU)| ≤ TIE_TOL·max(1, |Ψ(SO)|)`.
    pub so_cu_tie: bool,
}

impl OrderingReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn value(&self, regime: Regime) -> f64 {
        self.values[Regime::ALL.iter().position(|&r| r == regime).unwrap()]
    }

    /// Values divided by the CO value.
    pub fn normalized(&self) -> [f64; 4] {
        let co = self.values[0];
        self.values.map(|v| v / co)
    }
}

/// Evaluate `psi_fn(α, β)` at the four corners and check
/// `Ψ(CO) ≤ min(Ψ(SO), Ψ(CU))` and `Ψ(SU) ≥ max(Ψ(SO), Ψ(CU))`.
pub fn regime_ordering<F>(quad: &RegimeQuad, psi_fn: F) -> OrderingReport
where
    F: Fn(f64, f64) -> f64,
{
    let values = Regime::ALL.map(|r| {
        let (a, b) = quad.gains(r);
        psi_fn(a, b)
    });
    let at = |r: Regime| values[Regime::ALL.iter().position(|&x| x == r).unwrap()];
    let violations = HASSE_EDGES
        .iter()
        .copied()
        .filter(|e| !(at(e.lower) <= at(e.upper)))
        .collect();
    let so = at(Regime::StiffOverdamped);
    let cu = at(Regime::CompliantUnderdamped);
    let so_minus_cu = so - cu;
    OrderingReport {
        values,
        violations,
        so_minus_cu,
        so_cu_tie: so_minus_cu.abs() <= TIE_TOL * so.abs().max(1.0),
    }
}

/// Decoupled multi-joint certificate with `W̄ = I_{2n}`, `Σ̄ = I_n`:
/// `l = λ_max(Σ)`, `b = max α_i²Δt²/(4m_i²)`, `ρ* = max exp(-β_iΔt/(2m_i))`,
/// `X̄ = I_n`.
pub fn multijoint_structure(
    plant: &PlantModel,
    gains: &GainSetting,
    sigma_roll: &DMatrix<f64>,
) -> Result<ShapeStructure> {
    let masses = plant.diagonal_masses().ok_or_else(|| {
        Error::Invalid("multi-joint reduction requires a diagonal mass matrix".into())
    })?;
    let n = masses.len();
    if gains.n() != n {
        return Err(Error::DimensionMismatch {
            context: "gain vector length",
            expected: n,
            found: gains.n(),
        });
    }
    if sigma_roll.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            context: "sigma_roll",
            expected: n,
            found: sigma_roll.nrows(),
        });
    }
    linalg::check_psd(sigma_roll, "sigma_roll", 1e-10)?;
    let dt = plant.dt();
    let l = linalg::max_eigenvalue(sigma_roll).max(0.0);
    let per_joint = masses.iter().zip(gains.kp()).zip(gains.kd());
    let b = per_joint
        .clone()
        .map(|((m, a), _)| a * a * dt * dt / (4.0 * m * m))
        .fold(0.0, f64::max);
    let rho_star = per_joint
        .map(|((m, _), beta)| (-beta * dt / (2.0 * m)).exp())
        .fold(0.0, f64::max);
    ShapeStructure::new(l, b, rho_star, DMatrix::identity(n, n))
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_nan() || v <= 0.0 || v.is_infinite() {
        return Err(Error::NonPositive { name, value: v });
    }
    Ok(())
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if !(v >= 0.0) || v.is_infinite() {
        return Err(Error::Invalid(format!(
            "{name} must be non-negative, got {v}"
        )));
    }
    Ok(())
}
