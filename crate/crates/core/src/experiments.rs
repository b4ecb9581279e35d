//! End-to-end reproductions: the regime table, error envelopes, the gain
//! heatmap, failure-versus-radius curves and the sampling-period study.
//!
//! Each experiment returns plain data rows and has a matching `*_table`
//! function producing the CSV payload; nothing here draws plots.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, amplification_index, FailureBoundQuery};
use crate::canonical::{continuous_position_variance, Regime, RegimeQuad};
use crate::dynamics::{discretize, GainSetting, PlantModel};
use crate::error::{Error, Result};
use crate::lyapunov::stationary_proxy;
use crate::montecarlo::{EnsembleConfig, Envelopes, NoiseModel, NormEnsemble};
use crate::output::{sig17, Table};

/// Settings shared by the single-joint regime experiments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeStudyConfig {
    pub m: f64,
    pub dt: f64,
    pub alpha_l: f64,
    pub alpha_h: f64,
    pub beta_l: f64,
    pub beta_h: f64,
    /// Gaussian action-error variance.
    pub sigma2: f64,
    pub n_rollouts: usize,
    pub horizon: usize,
    /// Success-tube radius for the failure-rate column.
    pub radius: f64,
    pub seed: u64,
    pub parallel_width: usize,
}

impl Default for RegimeStudyConfig {
    /// Unit mass at 50 Hz, α ∈ {50, 100}, β ∈ {20, 40}, 50 000 rollouts of
    /// 50 steps, tube radius 0.3.
    fn default() -> Self {
        Self {
            m: 1.0,
            dt: 0.02,
            alpha_l: 50.0,
            alpha_h: 100.0,
            beta_l: 20.0,
            beta_h: 40.0,
            sigma2: 1.0,
            n_rollouts: 50_000,
            horizon: 50,
            radius: 0.3,
            seed: 42,
            parallel_width: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

impl RegimeStudyConfig {
    pub fn quad(&self) -> Result<RegimeQuad> {
        RegimeQuad::new(self.alpha_l, self.alpha_h, self.beta_l, self.beta_h)
    }

    pub fn plant(&self) -> Result<PlantModel> {
        PlantModel::scalar(self.m, self.dt)
    }

    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            n_rollouts: self.n_rollouts,
            horizon: self.horizon,
            seed: self.seed,
            parallel_width: self.parallel_width.max(1),
        }
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::gaussian(DMatrix::from_element(1, 1, self.sigma2))
    }
}

fn with_regime<T>(regime: Regime, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Invalid(msg) => Error::Invalid(format!("{regime}: {msg}")),
        Error::Solver(msg) => Error::Solver(format!("{regime}: {msg}")),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Table1Row {
    pub regime: Regime,
    pub kp: f64,
    pub kd: f64,
    /// Spectral radius of the sampled loop.
    pub rho: f64,
    /// Continuous stationary position variance `σ²α/(2β)`.
    pub x_c: f64,
    /// Discrete stationary position proxy.
    pub x_d: f64,
    /// `x_d / x_d(CO)`.
    pub x_d_ratio: f64,
    /// Empirical failure rate; `NaN` when no rollouts were requested.
    pub fail_hat: f64,
    /// 95% half-width of `fail_hat`.
    pub fail_ci: f64,
}

/// System quantities and empirical failure rates for the four regimes.
///
/// All regimes share the same rollout seed so their noise realizations are
/// common. With `n_rollouts = 0` the failure columns are `NaN`.
pub fn reproduce_table1(cfg: &RegimeStudyConfig) -> Result<Vec<Table1Row>> {
    let quad = cfg.quad()?;
    let plant = cfg.plant()?;
    let noise = cfg.noise()?;
    let mut rows = Vec::with_capacity(4);
    for regime in Regime::ALL {
        let (kp, kd) = quad.gains(regime);
        let row = with_regime(
            regime,
            (|| {
                let lp = discretize(&plant, &GainSetting::scalar(kp, kd)?)?;
                let x_d = stationary_proxy(&lp, noise.sigma_roll())?.x[(0, 0)];
                let x_c = continuous_position_variance(kp, kd, cfg.sigma2)?;
                let (fail_hat, fail_ci) = if cfg.n_rollouts == 0 {
                    (f64::NAN, f64::NAN)
                } else {
                    NormEnsemble::simulate(&lp, &noise, cfg.horizon, &cfg.ensemble())?
                        .failure_rate(cfg.radius)
                };
                Ok(Table1Row {
                    regime,
                    kp,
                    kd,
                    rho: lp.spectral_radius(),
                    x_c,
                    x_d,
                    x_d_ratio: f64::NAN,
                    fail_hat,
                    fail_ci,
                })
            })(),
        )?;
        rows.push(row);
    }
    let co = rows[0].x_d;
    for row in &mut rows {
        row.x_d_ratio = row.x_d / co;
    }
    Ok(rows)
}

const TABLE1_QUANTITIES: [&str; 8] = [
    "kp",
    "kd",
    "rho",
    "x_c",
    "x_d",
    "x_d_ratio",
    "fail_hat",
    "fail_ci",
];

/// Table layout: one row per quantity, one column per regime.
pub fn table1_table(rows: &[Table1Row]) -> Table {
    let mut table = Table::new(
        std::iter::once("quantity".to_owned()).chain(rows.iter().map(|r| r.regime.to_string())),
    );
    let fields = |r: &Table1Row| {
        [
            r.kp,
            r.kd,
            r.rho,
            r.x_c,
            r.x_d,
            r.x_d_ratio,
            r.fail_hat,
            r.fail_ci,
        ]
    };
    for (k, name) in TABLE1_QUANTITIES.iter().enumerate() {
        let mut line = vec![(*name).to_owned()];
        line.extend(rows.iter().map(|r| sig17(fields(r)[k])));
        table.push(line);
    }
    table
}

/// Inverse of [`table1_table`].
pub fn parse_table1(table: &Table) -> Result<Vec<Table1Row>> {
    let bad = |msg: String| Error::Invalid(format!("table1 csv: {msg}"));
    let regimes = table.header[1..]
        .iter()
        .map(|h| Regime::from_label(h).ok_or_else(|| bad(format!("unknown regime column {h}"))))
        .collect::<Result<Vec<_>>>()?;
    let value = |quantity: &str, col: usize| -> Result<f64> {
        let row = table
            .rows
            .iter()
            .find(|r| r[0] == quantity)
            .ok_or_else(|| bad(format!("missing row {quantity}")))?;
        row[col + 1]
            .parse::<f64>()
            .map_err(|e| bad(format!("{quantity}: {e}")))
    };
    regimes
        .iter()
        .enumerate()
        .map(|(i, &regime)| {
            Ok(Table1Row {
                regime,
                kp: value("kp", i)?,
                kd: value("kd", i)?,
                rho: value("rho", i)?,
                x_c: value("x_c", i)?,
                x_d: value("x_d", i)?,
                x_d_ratio: value("x_d_ratio", i)?,
                fail_hat: value("fail_hat", i)?,
                fail_ci: value("fail_ci", i)?,
            })
        })
        .collect()
}

/// Per-regime envelopes of `‖e_t‖` at the requested percentile levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeEnvelopes {
    pub regime: Regime,
    pub envelopes: Envelopes,
}

/// Envelope data for every regime, with the steady-state r95 overlay.
pub fn envelope_study(cfg: &RegimeStudyConfig, levels: &[f64]) -> Result<Vec<RegimeEnvelopes>> {
    let quad = cfg.quad()?;
    let plant = cfg.plant()?;
    let noise = cfg.noise()?;
    Regime::ALL
        .into_iter()
        .map(|regime| {
            with_regime(
                regime,
                (|| {
                    let lp = discretize(&plant, &quad.gain_setting(regime))?;
                    let ens = NormEnsemble::simulate(&lp, &noise, cfg.horizon, &cfg.ensemble())?;
                    let mut envelopes = ens.envelopes(levels)?;
                    let x_inf = stationary_proxy(&lp, noise.sigma_roll())?.x;
                    envelopes.r95_theory = Some(bounds::r95_threshold(&x_inf)?);
                    Ok(RegimeEnvelopes { regime, envelopes })
                })(),
            )
        })
        .collect()
}

/// Columns `t, p<level>…, r95_theory`.
pub fn envelope_table(env: &Envelopes) -> Table {
    let mut header = vec!["t".to_owned()];
    header.extend(env.levels.iter().map(|p| format!("p{p}")));
    header.push("r95_theory".to_owned());
    let mut table = Table::new(header);
    let r95 = env.r95_theory.unwrap_or(f64::NAN);
    for row in &env.rows {
        let mut line = vec![row.t.to_string()];
        line.extend(row.values.iter().map(|&v| sig17(v)));
        line.push(sig17(r95));
        table.push(line);
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AxisSpacing {
    #[default]
    Log,
    Linear,
}

/// Gain grid for the stationary-proxy heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kp_min: f64,
    pub kp_max: f64,
    pub kd_min: f64,
    pub kd_max: f64,
    pub resolution: usize,
    #[serde(default)]
    pub spacing: AxisSpacing,
    pub m: f64,
    pub dt: f64,
    pub sigma2: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            kp_min: 5.0,
            kp_max: 200.0,
            kd_min: 5.0,
            kd_max: 200.0,
            resolution: 50,
            spacing: AxisSpacing::Log,
            m: 1.0,
            dt: 0.02,
            sigma2: 1.0,
        }
    }
}

impl SweepSpec {
    fn axis(&self, lo: f64, hi: f64) -> Result<Vec<f64>> {
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::Invalid(format!(
                "gain range must satisfy 0 < min < max, got [{lo}, {hi}]"
            )));
        }
        let k = self.resolution;
        if k < 2 {
            return Err(Error::Invalid("sweep resolution must be at least 2".into()));
        }
        Ok((0..k)
            .map(|i| {
                let f = i as f64 / (k - 1) as f64;
                match self.spacing {
                    AxisSpacing::Linear => lo + f * (hi - lo),
                    AxisSpacing::Log => (lo.ln() + f * (hi.ln() - lo.ln())).exp(),
                }
            })
            .collect())
    }

    pub fn kp_axis(&self) -> Result<Vec<f64>> {
        self.axis(self.kp_min, self.kp_max)
    }

    pub fn kd_axis(&self) -> Result<Vec<f64>> {
        self.axis(self.kd_min, self.kd_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepCell {
    pub kp: f64,
    pub kd: f64,
    /// Discrete stationary position proxy; `NaN` when the cell failed the
    /// stability margin.
    pub x_inf_d: f64,
    pub x_inf_normalized: f64,
    pub log10_normalized: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Heatmap {
    /// Row-major over `(kp index, kd index)`.
    pub cells: Vec<SweepCell>,
    pub kp_axis: Vec<f64>,
    pub kd_axis: Vec<f64>,
    /// The four regime points, normalized the same way.
    pub markers: Vec<(Regime, SweepCell)>,
    /// Normalization constant (the CO proxy).
    pub reference: f64,
}

impl Heatmap {
    pub fn cell(&self, i_kp: usize, i_kd: usize) -> &SweepCell {
        &self.cells[i_kp * self.kd_axis.len() + i_kd]
    }

    pub fn marker(&self, regime: Regime) -> &SweepCell {
        &self
            .markers
            .iter()
            .find(|(r, _)| *r == regime)
            .expect("all regimes present")
            .1
    }
}

fn proxy_at(plant: &PlantModel, sigma: &DMatrix<f64>, kp: f64, kd: f64) -> Result<f64> {
    let lp = discretize(plant, &GainSetting::scalar(kp, kd)?)?;
    Ok(stationary_proxy(&lp, sigma)?.x[(0, 0)])
}

/// Discrete stationary proxy over a `(Kp, Kd)` grid, normalized by the CO
/// regime of `quad`. Cells that fail the stability check stay in the output
/// with `stable = false` and `NaN` values.
pub fn sweep_heatmap(spec: &SweepSpec, quad: &RegimeQuad) -> Result<Heatmap> {
    let plant = PlantModel::scalar(spec.m, spec.dt)?;
    let sigma = DMatrix::from_element(1, 1, spec.sigma2);
    let kp_axis = spec.kp_axis()?;
    let kd_axis = spec.kd_axis()?;
    let (co_kp, co_kd) = quad.gains(Regime::CompliantOverdamped);
    let reference = proxy_at(&plant, &sigma, co_kp, co_kd)?;

    let make = |kp: f64, kd: f64| -> Result<SweepCell> {
        match proxy_at(&plant, &sigma, kp, kd) {
            Ok(x) => Ok(SweepCell {
                kp,
                kd,
                x_inf_d: x,
                x_inf_normalized: x / reference,
                log10_normalized: (x / reference).log10(),
                stable: true,
            }),
            Err(e) if e.is_numerical() => Ok(SweepCell {
                kp,
                kd,
                x_inf_d: f64::NAN,
                x_inf_normalized: f64::NAN,
                log10_normalized: f64::NAN,
                stable: false,
            }),
            Err(e) => Err(e),
        }
    };

    let points: Vec<(f64, f64)> = kp_axis
        .iter()
        .flat_map(|&kp| kd_axis.iter().map(move |&kd| (kp, kd)))
        .collect();
    let cells = points
        .par_iter()
        .map(|&(kp, kd)| make(kp, kd))
        .collect::<Result<Vec<_>>>()?;
    let markers = Regime::ALL
        .into_iter()
        .map(|r| {
            let (kp, kd) = quad.gains(r);
            make(kp, kd).map(|c| (r, c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Heatmap {
        cells,
        kp_axis,
        kd_axis,
        markers,
        reference,
    })
}

pub fn heatmap_table(map: &Heatmap) -> Table {
    let mut table = Table::new([
        "kp",
        "kd",
        "x_inf_d",
        "x_inf_normalized",
        "log10_normalized",
        "stable",
    ]);
    for c in &map.cells {
        table.push(vec![
            sig17(c.kp),
            sig17(c.kd),
            sig17(c.x_inf_d),
            sig17(c.x_inf_normalized),
            sig17(c.log10_normalized),
            u8::from(c.stable).to_string(),
        ]);
    }
    table
}

/// Inverse of [`heatmap_table`] (cells only).
pub fn parse_heatmap_cells(table: &Table) -> Result<Vec<SweepCell>> {
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::Invalid(format!("heatmap csv: {e}")))
    };
    table
        .rows
        .iter()
        .map(|r| {
            Ok(SweepCell {
                kp: num(&r[0])?,
                kd: num(&r[1])?,
                x_inf_d: num(&r[2])?,
                x_inf_normalized: num(&r[3])?,
                log10_normalized: num(&r[4])?,
                stable: r[5] == "1",
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub r: f64,
    pub empirical: f64,
    pub ci_halfwidth: f64,
    /// `min{1, 2(T+1) exp(-r²/(2 Γ_T L_roll))}`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureCurve {
    pub regime: Regime,
    pub gamma: f64,
    pub points: Vec<CurvePoint>,
}

/// Empirical failure rate and the single-joint failure bound across tube
/// radii. One ensemble per regime is reused for every radius.
pub fn failure_curve(
    cfg: &RegimeStudyConfig,
    r_grid: &[f64],
    l_roll: f64,
) -> Result<Vec<FailureCurve>> {
    let quad = cfg.quad()?;
    let plant = cfg.plant()?;
    let noise = cfg.noise()?;
    Regime::ALL
        .into_iter()
        .map(|regime| {
            with_regime(
                regime,
                (|| {
                    let lp = discretize(&plant, &quad.gain_setting(regime))?;
                    let gamma = amplification_index(&lp, cfg.horizon).gamma;
                    let ens = NormEnsemble::simulate(&lp, &noise, cfg.horizon, &cfg.ensemble())?;
                    let points = r_grid
                        .iter()
                        .map(|&r| {
                            let (empirical, ci_halfwidth) = ens.failure_rate(r);
                            let query = FailureBoundQuery::new(r, cfg.horizon, l_roll, 0.0, 1)?;
                            let bound = bounds::failure_bound(&query, gamma)?.probability;
                            Ok(CurvePoint {
                                r,
                                empirical,
                                ci_halfwidth,
                                bound,
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(FailureCurve {
                        regime,
                        gamma,
                        points,
                    })
                })(),
            )
        })
        .collect()
}

/// Long format: `regime, r, empirical, ci_halfwidth, bound, gamma`.
pub fn failure_curve_table(curves: &[FailureCurve]) -> Table {
    let mut table = Table::new(["regime", "r", "empirical", "ci_halfwidth", "bound", "gamma"]);
    for c in curves {
        for p in &c.points {
            table.push(vec![
                c.regime.to_string(),
                sig17(p.r),
                sig17(p.empirical),
                sig17(p.ci_halfwidth),
                sig17(p.bound),
                sig17(c.gamma),
            ]);
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InheritanceRecord {
    pub dt: f64,
    pub x_d_over_dt: f64,
    pub x_c: f64,
    pub rel_error: f64,
}

/// `X_∞^d(dt)/dt` against `X_∞^c` for a decreasing sequence of sampling
/// periods.
pub fn zoh_inheritance_study(
    alpha: f64,
    beta: f64,
    m: f64,
    sigma2: f64,
    dts: &[f64],
) -> Result<Vec<InheritanceRecord>> {
    if dts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Invalid(
            "sampling periods must be strictly decreasing".into(),
        ));
    }
    let x_c = continuous_position_variance(alpha, beta, sigma2)?;
    let sigma = DMatrix::from_element(1, 1, sigma2);
    dts.iter()
        .map(|&dt| {
            let x_d = proxy_at(&PlantModel::scalar(m, dt)?, &sigma, alpha, beta)?;
            let ratio = x_d / dt;
            Ok(InheritanceRecord {
                dt,
                x_d_over_dt: ratio,
                x_c,
                rel_error: (ratio - x_c).abs() / x_c,
            })
        })
        .collect()
}

/// Least-squares slope of `ln(rel_error)` against `ln(dt)`.
pub fn convergence_order(records: &[InheritanceRecord]) -> f64 {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.dt.ln(), r.rel_error.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

pub fn inheritance_table(regime: Option<Regime>, records: &[InheritanceRecord]) -> Table {
    let mut table = Table::new(["regime", "dt", "x_d_over_dt", "x_c", "rel_error"]);
    let label = regime.map_or_else(|| "-".to_owned(), |r| r.to_string());
    for r in records {
        table.push(vec![
            label.clone(),
            sig17(r.dt),
            sig17(r.x_d_over_dt),
            sig17(r.x_c),
            sig17(r.rel_error),
        ]);
    }
    table
}
