//! Amplification index and sub-Gaussian tail / failure bounds.
//!
//! All probability outputs are clipped to `[0, 1]`; the unclipped value and
//! the exponent travel with them in [`TailBound`] so callers can see when the
//! clip is active.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::DiscreteClosedLoop;
use crate::error::{Error, Result};
use crate::linalg;

/// `ln 40`, the quantile factor that puts a two-sided sub-Gaussian tail at 5%.
pub const LN_40: f64 = 3.688_879_454_113_936_3;

/// A clipped tail probability with its ingredients,
/// `probability = min(1, prefactor·exp(exponent))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailBound {
    pub probability: f64,
    pub raw: f64,
    pub prefactor: f64,
    pub exponent: f64,
    /// The proxy along the queried direction is zero.
    pub degenerate: bool,
}

impl TailBound {
    fn new(prefactor: f64, exponent: f64) -> Self {
        let raw = prefactor * exponent.exp();
        Self {
            probability: raw.min(1.0),
            raw,
            prefactor,
            exponent,
            degenerate: false,
        }
    }

    fn degenerate(prefactor: f64) -> Self {
        Self {
            probability: 0.0,
            raw: 0.0,
            prefactor,
            exponent: f64::NEG_INFINITY,
            degenerate: true,
        }
    }

    pub fn is_clipped(&self) -> bool {
        self.raw > 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplificationResult {
    /// `Γ_T = max_{t ≤ T} Σ_{s<t} ‖C A^s B‖²`.
    pub gamma: f64,
    /// `‖C A^s B‖²` for `s = 0..T`.
    pub per_step_gains: Vec<f64>,
    /// Prefix length attaining the max; always `T` since the terms are
    /// non-negative.
    pub argmax_t: usize,
}

/// Finite-horizon amplification index.
pub fn amplification_index(lp: &DiscreteClosedLoop, t_horizon: usize) -> AmplificationResult {
    let mut per_step_gains = Vec::with_capacity(t_horizon);
    let mut impulse = lp.b().clone();
    for _ in 0..t_horizon {
        let g = linalg::op_norm(&(lp.c() * &impulse));
        per_step_gains.push(g * g);
        impulse = lp.a() * impulse;
    }
    let mut best = 0.0;
    let mut argmax_t = 0;
    let mut prefix = 0.0;
    for (s, g) in per_step_gains.iter().enumerate() {
        prefix += g;
        if prefix >= best {
            best = prefix;
            argmax_t = s + 1;
        }
    }
    AmplificationResult {
        gamma: best,
        per_step_gains,
        argmax_t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricBound {
    /// `‖B‖²/(1 - ρ²)·(1 - ρ^{2T})`.
    pub value: f64,
    /// Whether `‖C A^s B‖ ≤ ‖B‖ ρ^s` held for every `s < T`. When it fails
    /// (non-normal `A`) the value is not guaranteed to dominate `Γ_T`.
    pub per_step_holds: bool,
}

/// Geometric-series upper bound on the amplification index.
pub fn amplification_geometric_bound(lp: &DiscreteClosedLoop, t_horizon: usize) -> GeometricBound {
    let rho = lp.spectral_radius();
    let b_norm = linalg::op_norm(lp.b());
    let rho2 = rho * rho;
    let value = b_norm * b_norm / (1.0 - rho2) * (1.0 - rho2.powi(t_horizon as i32));

    let mut per_step_holds = true;
    let mut impulse = lp.b().clone();
    let mut rho_s = 1.0;
    for _ in 0..t_horizon {
        let lhs = linalg::op_norm(&(lp.c() * &impulse));
        if lhs > b_norm * rho_s * (1.0 + 1e-12) {
            per_step_holds = false;
            break;
        }
        impulse = lp.a() * impulse;
        rho_s *= rho;
    }
    GeometricBound {
        value,
        per_step_holds,
    }
}

/// `P(|uᵀe| ≥ r) ≤ min(1, 2 exp(-r²/(2 uᵀXu)))`.
pub fn directional_tail(x: &DMatrix<f64>, u: &DVector<f64>, r: f64) -> Result<TailBound> {
    positive("r", r)?;
    if x.nrows() != u.len() || !x.is_square() {
        return Err(Error::DimensionMismatch {
            context: "direction length",
            expected: x.nrows(),
            found: u.len(),
        });
    }
    let var = (u.transpose() * x * u)[(0, 0)];
    if var < 0.0 && var.abs() > 1e-12 * x.norm() {
        return Err(Error::NotPsd {
            name: "x",
            min_eigenvalue: linalg::min_eigenvalue(x),
        });
    }
    if var <= 0.0 {
        return Ok(TailBound::degenerate(2.0));
    }
    Ok(TailBound::new(2.0, -r * r / (2.0 * var)))
}

/// `P(‖e‖ ≥ r) ≤ min(1, 2n exp(-r²/(2n λ_max(X))))`.
pub fn euclidean_tail(x: &DMatrix<f64>, n: usize, r: f64) -> Result<TailBound> {
    positive("r", r)?;
    if x.nrows() != n || !x.is_square() {
        return Err(Error::DimensionMismatch {
            context: "position proxy",
            expected: n,
            found: x.nrows(),
        });
    }
    let nf = n as f64;
    let lambda = linalg::max_eigenvalue(x);
    if lambda <= 0.0 {
        return Ok(TailBound::degenerate(2.0 * nf));
    }
    Ok(TailBound::new(2.0 * nf, -r * r / (2.0 * nf * lambda)))
}

/// Inputs of the horizon-`T` failure bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FailureBoundQuery {
    /// Success-tube radius.
    pub r: f64,
    pub t_horizon: usize,
    /// Empirical validation loss.
    pub l_va: f64,
    /// Generalization slack at the chosen confidence.
    pub eps_gen: f64,
    /// Joint count.
    pub n: usize,
}

impl FailureBoundQuery {
    pub fn new(r: f64, t_horizon: usize, l_va: f64, eps_gen: f64, n: usize) -> Result<Self> {
        positive("r", r)?;
        non_negative("l_va", l_va)?;
        non_negative("eps_gen", eps_gen)?;
        if n == 0 {
            return Err(Error::Invalid("joint count must be at least 1".into()));
        }
        Ok(Self {
            r,
            t_horizon,
            l_va,
            eps_gen,
            n,
        })
    }
}

/// `min(1, 2n(T+1) exp(-r²/(2n Γ_T (L̂_va + ε_gen))))`.
pub fn failure_bound(query: &FailureBoundQuery, gamma: f64) -> Result<TailBound> {
    non_negative("gamma", gamma)?;
    let nf = query.n as f64;
    let prefactor = 2.0 * nf * (query.t_horizon as f64 + 1.0);
    let scale = gamma * (query.l_va + query.eps_gen);
    if scale <= 0.0 {
        return Ok(TailBound::degenerate(prefactor));
    }
    Ok(TailBound::new(
        prefactor,
        -query.r * query.r / (2.0 * nf * scale),
    ))
}

/// How the rollout loss is obtained from a known noise proxy `Σ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossReduction {
    /// `L_roll = tr(Σ)`, the population MSE.
    #[default]
    Trace,
    /// `λ_max(Σ)`. Sharper, but not the population MSE.
    MaxEigenvalue,
}

/// Failure bound for a known noise proxy rather than a validation loss.
pub fn failure_bound_from_proxy(
    gamma: f64,
    sigma_roll: &DMatrix<f64>,
    r: f64,
    t_horizon: usize,
    reduction: LossReduction,
) -> Result<TailBound> {
    linalg::check_psd(sigma_roll, "sigma_roll", 1e-10)?;
    let loss = match reduction {
        LossReduction::Trace => sigma_roll.trace(),
        LossReduction::MaxEigenvalue => linalg::max_eigenvalue(sigma_roll).max(0.0),
    };
    let query = FailureBoundQuery::new(r, t_horizon, loss, 0.0, sigma_roll.nrows())?;
    failure_bound(&query, gamma)
}

/// `sqrt(2 λ_max(X) ln 40)`: radius whose two-sided tail bound is 5%.
pub fn r95_threshold(x_inf: &DMatrix<f64>) -> Result<f64> {
    let lambda = linalg::max_eigenvalue(x_inf);
    if !(lambda > 0.0) {
        return Err(Error::NonPositive {
            name: "lambda_max(x_inf)",
            value: lambda,
        });
    }
    Ok((2.0 * lambda * LN_40).sqrt())
}

/// `ρ*^{2t} Ψ ‖X̄‖`.
pub fn truncation_bound(psi: f64, rho_star: f64, t: usize, x_bar_norm: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho_star) {
        return Err(Error::Invalid(format!(
            "rho_star must lie in [0, 1), got {rho_star}"
        )));
    }
    non_negative("psi", psi)?;
    non_negative("x_bar_norm", x_bar_norm)?;
    if t == 0 {
        return Ok(psi * x_bar_norm);
    }
    Ok(rho_star.powf(2.0 * t as f64) * psi * x_bar_norm)
}

fn positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_nan() {
        return Err(Error::NonFinite { name, value });
    }
    if value <= 0.0 {
        return Err(Error::NonPositive { name, value });
    }
    Ok(())
}

fn non_negative(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite { name, value });
    }
    if value < 0.0 {
        return Err(Error::Invalid(format!(
            "{name} must be non-negative, got {value}"
        )));
    }
    Ok(())
}
