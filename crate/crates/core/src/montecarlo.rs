//! Seeded ensemble simulation of the sampled error dynamics.
//!
//! Every rollout owns an independent ChaCha8 stream selected by
//! `(seed, rollout index)`, and draws for step `t` are taken in step order
//! from that stream. Rollouts can therefore run on any number of threads
//! and still produce bit-identical ensembles; results are always merged in
//! rollout-index order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::dynamics::{DiscreteClosedLoop, ScalarOrVec};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// `N(0, Σ)`; the proxy equals the covariance.
    Gaussian,
    /// Independent `U[-a_i, a_i]` coordinates; proxy `diag(a_i²)`.
    BoundedUniform { half_width: Vec<f64> },
    /// Independent `±a_i` coordinates; proxy `diag(a_i²)`.
    RademacherScaled { scale: Vec<f64> },
}

/// Mean-zero sub-Gaussian action-error model and its proxy matrix.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(try_from = "NoiseSpec")]
pub struct NoiseModel {
    kind: NoiseKind,
    sigma_roll: DMatrix<f64>,
    /// Symmetric square root of `sigma_roll`, used by the Gaussian sampler.
    factor: DMatrix<f64>,
}

impl NoiseModel {
    pub fn gaussian(sigma_roll: DMatrix<f64>) -> Result<Self> {
        linalg::check_psd(&sigma_roll, "sigma_roll", 1e-10)?;
        let factor = linalg::psd_sqrt(&sigma_roll);
        Ok(Self {
            kind: NoiseKind::Gaussian,
            sigma_roll,
            factor,
        })
    }

    /// Independent standard normal coordinates.
    pub fn standard_normal(n: usize) -> Self {
        Self::gaussian(DMatrix::identity(n, n)).expect("identity is PSD")
    }

    /// No noise at all.
    pub fn zero(n: usize) -> Self {
        Self::gaussian(DMatrix::zeros(n, n)).expect("zero is PSD")
    }

    pub fn bounded_uniform(half_width: Vec<f64>) -> Result<Self> {
        let sigma_roll = diagonal_proxy(&half_width, "half_width")?;
        Ok(Self {
            factor: DMatrix::zeros(half_width.len(), half_width.len()),
            kind: NoiseKind::BoundedUniform { half_width },
            sigma_roll,
        })
    }

    pub fn rademacher_scaled(scale: Vec<f64>) -> Result<Self> {
        let sigma_roll = diagonal_proxy(&scale, "scale")?;
        Ok(Self {
            factor: DMatrix::zeros(scale.len(), scale.len()),
            kind: NoiseKind::RademacherScaled { scale },
            sigma_roll,
        })
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn sigma_roll(&self) -> &DMatrix<f64> {
        &self.sigma_roll
    }

    pub fn dim(&self) -> usize {
        self.sigma_roll.nrows()
    }

    /// Fill `out` with one draw.
    pub fn sample_into(&self, rng: &mut impl Rng, scratch: &mut [f64], out: &mut [f64]) {
        match &self.kind {
            NoiseKind::Gaussian => {
                for z in scratch.iter_mut() {
                    *z = rng.sample(StandardNormal);
                }
                let m = out.len();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..m).map(|j| self.factor[(i, j)] * scratch[j]).sum();
                }
            }
            NoiseKind::BoundedUniform { half_width } => {
                for (o, a) in out.iter_mut().zip(half_width) {
                    *o = a * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
            NoiseKind::RademacherScaled { scale } => {
                for (o, a) in out.iter_mut().zip(scale) {
                    *o = if rng.random::<bool>() { *a } else { -*a };
                }
            }
        }
    }
}

fn diagonal_proxy(widths: &[f64], name: &'static str) -> Result<DMatrix<f64>> {
    if widths.is_empty() {
        return Err(Error::Invalid(format!("{name} must be non-empty")));
    }
    for &a in widths {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::Invalid(format!(
                "{name} entries must be finite and >= 0, got {a}"
            )));
        }
    }
    let sq: Vec<f64> = widths.iter().map(|a| a * a).collect();
    Ok(DMatrix::from_diagonal(&DVector::from_vec(sq)))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum NoiseSpec {
    Gaussian {
        #[serde(default)]
        sigma_roll: Option<SigmaSpec>,
    },
    BoundedUniform {
        half_width: ScalarOrVec,
    },
    RademacherScaled {
        scale: ScalarOrVec,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum SigmaSpec {
    Scalar(f64),
    Full(Vec<Vec<f64>>),
}

impl TryFrom<NoiseSpec> for NoiseModel {
    type Error = Error;

    fn try_from(spec: NoiseSpec) -> Result<Self> {
        match spec {
            NoiseSpec::Gaussian { sigma_roll } => match sigma_roll {
                None => Ok(NoiseModel::standard_normal(1)),
                Some(SigmaSpec::Scalar(v)) => NoiseModel::gaussian(DMatrix::from_element(1, 1, v)),
                Some(SigmaSpec::Full(rows)) => {
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(Error::Invalid("sigma_roll must be square".into()));
                    }
                    let flat: Vec<f64> = rows.into_iter().flatten().collect();
                    NoiseModel::gaussian(DMatrix::from_row_slice(n, n, &flat))
                }
            },
            NoiseSpec::BoundedUniform { half_width } => {
                NoiseModel::bounded_uniform(half_width.into_vec())
            }
            NoiseSpec::RademacherScaled { scale } => {
                NoiseModel::rademacher_scaled(scale.into_vec())
            }
        }
    }
}

/// Ensemble size, horizon, seed and thread count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_rollouts: usize,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default = "default_width")]
    pub parallel_width: usize,
}

fn default_width() -> usize {
    1
}

impl EnsembleConfig {
    pub fn new(n_rollouts: usize, horizon: usize, seed: u64) -> Self {
        Self {
            n_rollouts,
            horizon,
            seed,
            parallel_width: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }

    pub fn with_width(mut self, parallel_width: usize) -> Self {
        self.parallel_width = parallel_width;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_rollouts == 0 {
            return Err(Error::Invalid("n_rollouts must be at least 1".into()));
        }
        if self.parallel_width == 0 {
            return Err(Error::Invalid("parallel_width must be at least 1".into()));
        }
        Ok(())
    }
}

/// Random stream of one rollout.
pub fn rollout_stream(seed: u64, rollout_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rollout_index);
    rng
}

/// Flat row-major copies of the loop matrices for the inner simulation loop.
struct Kernel {
    s: usize,
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl Kernel {
    fn new(lp: &DiscreteClosedLoop, noise: &NoiseModel) -> Result<Self> {
        if noise.dim() != lp.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "noise dimension",
                expected: lp.input_dim(),
                found: noise.dim(),
            });
        }
        let row_major = |m: &DMatrix<f64>| m.transpose().as_slice().to_vec();
        Ok(Self {
            s: lp.state_dim(),
            m: lp.input_dim(),
            n: lp.output_dim(),
            a: row_major(lp.a()),
            b: row_major(lp.b()),
            c: row_major(lp.c()),
        })
    }

    /// Simulate `e_0..=e_T` into `traj` (length `(T+1)·n`).
    fn run(&self, noise: &NoiseModel, rng: &mut ChaCha8Rng, horizon: usize, traj: &mut [f64]) {
        let (s, m, n) = (self.s, self.m, self.n);
        let mut x = vec![0.0; s];
        let mut next = vec![0.0; s];
        let mut xi = vec![0.0; m];
        let mut scratch = vec![0.0; m];
        traj[..n].fill(0.0);
        for t in 1..=horizon {
            noise.sample_into(rng, &mut scratch, &mut xi);
            for i in 0..s {
                let ar = &self.a[i * s..(i + 1) * s];
                let br = &self.b[i * m..(i + 1) * m];
                let mut acc = 0.0;
                for j in 0..s {
                    acc += ar[j] * x[j];
                }
                for j in 0..m {
                    acc += br[j] * xi[j];
                }
                next[i] = acc;
            }
            std::mem::swap(&mut x, &mut next);
            let out = &mut traj[t * n..(t + 1) * n];
            for (i, o) in out.iter_mut().enumerate() {
                let cr = &self.c[i * s..(i + 1) * s];
                *o = cr.iter().zip(&x).map(|(c, v)| c * v).sum();
            }
        }
    }
}

/// One trajectory `e_0, …, e_T` from `x_0 = 0`.
pub fn rollout(
    lp: &DiscreteClosedLoop,
    noise: &NoiseModel,
    horizon: usize,
    stream: &mut ChaCha8Rng,
) -> Result<Vec<DVector<f64>>> {
    let kernel = Kernel::new(lp, noise)?;
    let n = kernel.n;
    let mut traj = vec![0.0; (horizon + 1) * n];
    kernel.run(noise, stream, horizon, &mut traj);
    Ok(traj.chunks(n).map(DVector::from_column_slice).collect())
}

/// Run every rollout, reduce each trajectory with `reduce`, and return the
/// results in rollout order.
fn map_rollouts<R, F>(
    lp: &DiscreteClosedLoop,
    noise: &NoiseModel,
    horizon: usize,
    cfg: &EnsembleConfig,
    reduce: F,
) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&[f64]) -> R + Sync,
{
    cfg.validate()?;
    let kernel = Kernel::new(lp, noise)?;
    let n = kernel.n;
    let work = |i: usize| {
        let mut rng = rollout_stream(cfg.seed, i as u64);
        let mut traj = vec![0.0; (horizon + 1) * n];
        kernel.run(noise, &mut rng, horizon, &mut traj);
        reduce(&traj)
    };
    if cfg.parallel_width == 1 {
        return Ok((0..cfg.n_rollouts).map(work).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel_width)
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..cfg.n_rollouts).into_par_iter().map(work).collect()))
}

/// `‖e_t‖` for every rollout and step, kept in full so the same ensemble can
/// be queried at many radii and percentile levels.
#[derive(Debug, Clone, PartialEq)]
pub struct NormEnsemble {
    n_rollouts: usize,
    horizon: usize,
    /// Row-major `n_rollouts × (horizon + 1)`.
    norms: Vec<f64>,
}

impl NormEnsemble {
    pub fn simulate(
        lp: &DiscreteClosedLoop,
        noise: &NoiseModel,
        horizon: usize,
        cfg: &EnsembleConfig,
    ) -> Result<Self> {
        let n = lp.output_dim();
        let rows = map_rollouts(lp, noise, horizon, cfg, |traj| {
            traj.chunks(n)
                .map(|e| e.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect::<Vec<f64>>()
        })?;
        Ok(Self {
            n_rollouts: cfg.n_rollouts,
            horizon,
            norms: rows.concat(),
        })
    }

    pub fn n_rollouts(&self) -> usize {
        self.n_rollouts
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `‖e_t‖` of one rollout, `t = 0..=T`.
    pub fn rollout_norms(&self, i: usize) -> &[f64] {
        let w = self.horizon + 1;
        &self.norms[i * w..(i + 1) * w]
    }

    /// Fraction of rollouts with `max_{t≤T} ‖e_t‖ ≥ r`, and the 95% normal
    /// half-width.
    pub fn failure_rate(&self, r: f64) -> (f64, f64) {
        let failures = (0..self.n_rollouts)
            .filter(|&i| self.rollout_norms(i).iter().any(|&v| v >= r))
            .count();
        rate_with_ci(failures, self.n_rollouts)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }

    /// Nearest-rank percentiles of `‖e_t‖` at every step.
    pub fn envelopes(&self, levels: &[f64]) -> Result<Envelopes> {
        for &p in levels {
            if !(p > 0.0 && p < 100.0) {
                return Err(Error::Invalid(format!(
                    "percentile level {p} outside (0, 100)"
                )));
            }
        }
        let w = self.horizon + 1;
        let mut column = vec![0.0; self.n_rollouts];
        let mut rows = Vec::with_capacity(w);
        for t in 0..w {
            for (i, slot) in column.iter_mut().enumerate() {
                *slot = self.norms[i * w + t];
            }
            column.sort_by(f64::total_cmp);
            let values = levels.iter().map(|&p| nearest_rank(&column, p)).collect();
            rows.push(EnvelopeRow { t, values });
        }
        Ok(Envelopes {
            levels: levels.to_vec(),
            rows,
            r95_theory: None,
        })
    }

    pub fn stats(&self, radius: Option<f64>, levels: &[f64]) -> Result<EnsembleStats> {
        let (failure_rate, ci_halfwidth) = match radius {
            Some(r) => {
                let (p, ci) = self.failure_rate(r);
                (Some(p), Some(ci))
            }
            None => (None, None),
        };
        let envelopes = if levels.is_empty() {
            None
        } else {
            Some(self.envelopes(levels)?)
        };
        Ok(EnsembleStats {
            n_rollouts: self.n_rollouts,
            horizon: self.horizon,
            radius,
            failure_rate,
            ci_halfwidth,
            envelopes,
            max_abs_error: self.max_abs_error(),
        })
    }
}

/// Sample `p` and `1.96·sqrt(p(1-p)/N)`.
pub fn rate_with_ci(successes: usize, n: usize) -> (f64, f64) {
    let p = successes as f64 / n as f64;
    (p, 1.96 * (p * (1.0 - p) / n as f64).sqrt())
}

/// Value at rank `ceil(p/100·N)` of an ascending sample.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeRow {
    pub t: usize,
    /// One value per requested level.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelopes {
    pub levels: Vec<f64>,
    pub rows: Vec<EnvelopeRow>,
    /// Steady-state 95% radius `sqrt(2 λ_max(X_∞) ln 40)` for overlay.
    pub r95_theory: Option<f64>,
}

impl Envelopes {
    /// Series for one level across all steps.
    pub fn level(&self, p: f64) -> Option<Vec<f64>> {
        let k = self.levels.iter().position(|&l| l == p)?;
        Some(self.rows.iter().map(|r| r.values[k]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n_rollouts: usize,
    pub horizon: usize,
    pub radius: Option<f64>,
    pub failure_rate: Option<f64>,
    pub ci_halfwidth: Option<f64>,
    pub envelopes: Option<Envelopes>,
    pub max_abs_error: f64,
}

/// Empirical `P(Fail_T)` at tube radius `r`.
pub fn failure_rate(
    lp: &DiscreteClosedLoop,
    noise: &NoiseModel,
    horizon: usize,
    r: f64,
    cfg: &EnsembleConfig,
) -> Result<EnsembleStats> {
    if !(r >= 0.0) {
        return Err(Error::Invalid(format!("tube radius must be >= 0, got {r}")));
    }
    NormEnsemble::simulate(lp, noise, horizon, cfg)?.stats(Some(r), &[])
}

/// Per-step percentile envelopes of `‖e_t‖` with the theoretical r95
/// overlay.
pub fn percentile_envelopes(
    lp: &DiscreteClosedLoop,
    noise: &NoiseModel,
    horizon: usize,
    cfg: &EnsembleConfig,
    levels: &[f64],
) -> Result<EnsembleStats> {
    let mut stats = NormEnsemble::simulate(lp, noise, horizon, cfg)?.stats(None, levels)?;
    let x_inf = crate::lyapunov::stationary_proxy(lp, noise.sigma_roll())?.x;
    let r95 = bounds::r95_threshold(&x_inf).ok();
    if let Some(env) = stats.envelopes.as_mut() {
        env.r95_theory = r95;
    }
    Ok(stats)
}

/// `e_t` of every rollout as rows of an `N × n` matrix.
pub fn positions_at(
    lp: &DiscreteClosedLoop,
    noise: &NoiseModel,
    t: usize,
    cfg: &EnsembleConfig,
) -> Result<DMatrix<f64>> {
    let n = lp.output_dim();
    let rows = map_rollouts(lp, noise, t, cfg, |traj| traj[t * n..(t + 1) * n].to_vec())?;
    Ok(DMatrix::from_row_slice(cfg.n_rollouts, n, &rows.concat()))
}

/// Unbiased sample covariance of `e_t` over the ensemble.
pub fn empirical_position_covariance(
    lp: &DiscreteClosedLoop,
    noise: &NoiseModel,
    t: usize,
    cfg: &EnsembleConfig,
) -> Result<DMatrix<f64>> {
    if t == 0 {
        return Err(Error::Invalid("covariance time must be at least 1".into()));
    }
    if cfg.n_rollouts < 2 {
        return Err(Error::Invalid(
            "sample covariance needs at least 2 rollouts".into(),
        ));
    }
    let samples = positions_at(lp, noise, t, cfg)?;
    let mean = samples.row_mean();
    let mut centered = samples;
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    Ok(centered.transpose() * &centered / (cfg.n_rollouts as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{discretize, GainSetting, PlantModel};
    use crate::lyapunov::finite_horizon_proxy;

    fn regime(kp: f64, kd: f64) -> DiscreteClosedLoop {
        discretize(
            &PlantModel::scalar(1.0, 0.02).unwrap(),
            &GainSetting::scalar(kp, kd).unwrap(),
        )
        .unwrap()
    }

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_noise_rollout_stays_at_zero() {
        let lp = regime(50.0, 40.0);
        let traj = rollout(&lp, &NoiseModel::zero(1), 20, &mut rollout_stream(1, 0)).unwrap();
        assert_eq!(traj.len(), 21);
        assert!(traj.iter().all(|e| e[0] == 0.0));
    }

    #[test]
    fn memoryless_system_echoes_noise() {
        let lp =
            DiscreteClosedLoop::from_matrices(scalar(0.0), scalar(1.0), scalar(1.0), 1.0).unwrap();
        let noise = NoiseModel::standard_normal(1);
        let traj = rollout(&lp, &noise, 5, &mut rollout_stream(7, 3)).unwrap();
        let mut rng = rollout_stream(7, 3);
        let mut scratch = [0.0];
        assert_eq!(traj[0][0], 0.0);
        for e in &traj[1..] {
            let mut xi = [0.0];
            noise.sample_into(&mut rng, &mut scratch, &mut xi);
            assert_eq!(e[0], xi[0]);
        }
    }

    #[test]
    fn zero_radius_always_fails() {
        let cfg = EnsembleConfig::new(100, 5, 3);
        let stats = failure_rate(
            &regime(50.0, 40.0),
            &NoiseModel::standard_normal(1),
            5,
            0.0,
            &cfg,
        )
        .unwrap();
        assert_eq!(stats.failure_rate, Some(1.0));
        assert_eq!(stats.ci_halfwidth, Some(0.0));
    }

    #[test]
    fn zero_noise_envelopes_vanish() {
        let lp = regime(100.0, 20.0);
        let ens = NormEnsemble::simulate(
            &lp,
            &NoiseModel::zero(1),
            10,
            &EnsembleConfig::new(50, 10, 9),
        )
        .unwrap();
        let env = ens.envelopes(&[50.0, 95.0, 99.0]).unwrap();
        assert!(env.rows.iter().all(|r| r.values.iter().all(|&v| v == 0.0)));
        assert!(ens.envelopes(&[100.0]).is_err());
    }

    #[test]
    fn nearest_rank_rule() {
        let data: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(nearest_rank(&data, 50.0), 5.0);
        assert_eq!(nearest_rank(&data, 95.0), 10.0);
        assert_eq!(nearest_rank(&data, 1.0), 1.0);
        assert_eq!(nearest_rank(&data, 11.0), 2.0);
    }

    #[test]
    fn bit_identical_across_widths() {
        let lp = regime(100.0, 40.0);
        let noise = NoiseModel::standard_normal(1);
        let base = NormEnsemble::simulate(
            &lp,
            &noise,
            30,
            &EnsembleConfig::new(2_000, 30, 42).with_width(1),
        )
        .unwrap();
        for w in [2, 3, 8] {
            let other = NormEnsemble::simulate(
                &lp,
                &noise,
                30,
                &EnsembleConfig::new(2_000, 30, 42).with_width(w),
            )
            .unwrap();
            assert_eq!(base, other, "width {w}");
        }
        let reseeded =
            NormEnsemble::simulate(&lp, &noise, 30, &EnsembleConfig::new(2_000, 30, 43)).unwrap();
        assert_ne!(base, reseeded);
    }

    #[test]
    fn gaussian_covariance_matches_proxy() {
        let lp = regime(50.0, 40.0);
        let cfg = EnsembleConfig::new(40_000, 50, 11);
        let cov =
            empirical_position_covariance(&lp, &NoiseModel::standard_normal(1), 50, &cfg).unwrap();
        let x50 = finite_horizon_proxy(&lp, &scalar(1.0), 50).unwrap().x;
        let rel = (&cov - &x50).norm() / x50.norm();
        assert!(rel <= 4.0 / (cfg.n_rollouts as f64).sqrt(), "rel {rel}");
    }

    #[test]
    fn uniform_proxy_dominates_sample_covariance() {
        let lp = regime(50.0, 20.0);
        let a = 0.8;
        let noise = NoiseModel::bounded_uniform(vec![a]).unwrap();
        assert_eq!(noise.sigma_roll()[(0, 0)], a * a);
        let cfg = EnsembleConfig::new(20_000, 40, 5);
        let cov = empirical_position_covariance(&lp, &noise, 40, &cfg).unwrap()[(0, 0)];
        let x = finite_horizon_proxy(&lp, noise.sigma_roll(), 40).unwrap().x[(0, 0)];
        let se = cov * (2.0 / cfg.n_rollouts as f64).sqrt();
        assert!(cov <= x + 3.0 * se);
        // true variance is a²/3 of the proxy
        assert!((cov / x - 1.0 / 3.0).abs() < 0.03);
    }

    #[test]
    fn rademacher_draws_are_plus_minus_scale() {
        let noise = NoiseModel::rademacher_scaled(vec![0.5, 2.0]).unwrap();
        let mut rng = rollout_stream(0, 0);
        let mut out = [0.0; 2];
        let mut scratch = [0.0; 2];
        for _ in 0..50 {
            noise.sample_into(&mut rng, &mut scratch, &mut out);
            assert_eq!(out[0].abs(), 0.5);
            assert_eq!(out[1].abs(), 2.0);
        }
    }

    #[test]
    fn noise_from_json() {
        let g: NoiseModel =
            serde_json::from_str(r#"{"kind": "gaussian", "sigma_roll": [[1.0, 0.2], [0.2, 0.5]]}"#)
                .unwrap();
        assert_eq!(g.dim(), 2);
        let u: NoiseModel =
            serde_json::from_str(r#"{"kind": "bounded_uniform", "half_width": 0.3}"#).unwrap();
        assert!(matches!(u.kind(), NoiseKind::BoundedUniform { .. }));
        let d: NoiseModel = serde_json::from_str(r#"{"kind": "gaussian"}"#).unwrap();
        assert_eq!(d.sigma_roll(), &DMatrix::identity(1, 1));
        assert!(serde_json::from_str::<NoiseModel>(r#"{"kind": "cauchy"}"#).is_err());
    }

    #[test]
    fn noise_dimension_must_match_loop() {
        let lp = regime(50.0, 40.0);
        let cfg = EnsembleConfig::new(10, 5, 0);
        assert!(NormEnsemble::simulate(&lp, &NoiseModel::standard_normal(2), 5, &cfg).is_err());
    }
}
