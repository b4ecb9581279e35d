//! Acceptance criteria, one test each. Every test writes a single
//! `[PASS]` / `[FAIL]` line to stderr (uncaptured) before asserting.

use std::cmp::Ordering;
use std::io::Write;
use std::time::{Duration, Instant};

use gainbound::bounds::{
    amplification_geometric_bound, amplification_index, failure_bound, FailureBoundQuery,
};
use gainbound::canonical::{
    continuous_position_variance, dominance_margin, multijoint_structure, Regime, RegimeQuad,
};
use gainbound::dynamics::{
    build_error_dynamics, discretize, DiscreteClosedLoop, GainSetting, PlantModel,
};
use gainbound::experiments::{
    convergence_order, envelope_study, failure_curve, reproduce_table1, sweep_heatmap,
    table1_table, zoh_inheritance_study, RegimeStudyConfig, SweepSpec,
};
use gainbound::lyapunov::{finite_horizon_proxy, solve_continuous_lyapunov, stationary_proxy};
use gainbound::montecarlo::{empirical_position_covariance, EnsembleConfig, NoiseModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const RHO: [f64; 4] = [0.974, 0.948, 0.943, 0.819];
const X_C: [f64; 4] = [0.625, 1.25, 1.25, 2.5];
const X_D: [f64; 4] = [0.012, 0.025, 0.025, 0.050];
const RATIO: [f64; 4] = [1.0, 2.0, 2.0, 4.0];
const FAIL: [(f64, f64); 4] = [(0.01, 0.01), (0.26, 0.02), (0.22, 0.02), (0.75, 0.02)];

fn report(k: usize, what: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "[{tag}] criterion {k}: {what} ({detail})"
    );
    assert!(pass, "criterion {k} failed: {what}: {detail}");
}

fn reference_loop(regime: Regime) -> DiscreteClosedLoop {
    let plant = PlantModel::scalar(1.0, 0.02).unwrap();
    discretize(&plant, &RegimeQuad::reference().gain_setting(regime)).unwrap()
}

fn reference_config() -> RegimeStudyConfig {
    RegimeStudyConfig::default()
}

#[test]
fn criterion_01_spectral_radii() {
    let start = Instant::now();
    let rho: Vec<f64> = Regime::ALL
        .iter()
        .map(|&r| reference_loop(r).spectral_radius())
        .collect();
    let elapsed = start.elapsed();
    let within = rho
        .iter()
        .zip(RHO)
        .all(|(got, want)| (got - want).abs() <= 1e-3);
    report(
        1,
        "spectral radii within 1e-3, runtime < 1 s",
        within && elapsed < Duration::from_secs(1),
        format!("rho = {rho:.5?}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_continuous_variances() {
    let quad = RegimeQuad::reference();
    let mut worst_closed = 0.0_f64;
    let mut worst_solver = 0.0_f64;
    for (k, regime) in Regime::ALL.into_iter().enumerate() {
        let (alpha, beta) = quad.gains(regime);
        let x = continuous_position_variance(alpha, beta, 1.0).unwrap();
        worst_closed = worst_closed.max((x - X_C[k]).abs());
        let sys = build_error_dynamics(
            &PlantModel::scalar(1.0, 0.02).unwrap(),
            &GainSetting::scalar(alpha, beta).unwrap(),
        )
        .unwrap();
        let q = &sys.b_c * sys.b_c.transpose();
        let p = solve_continuous_lyapunov(&sys.a_c, &q).unwrap();
        worst_solver = worst_solver.max((p[(0, 0)] - X_C[k]).abs());
    }
    report(
        2,
        "continuous variances exact to 1e-12, solver within 1e-9",
        worst_closed <= 1e-12 && worst_solver <= 1e-9,
        format!("closed-form err {worst_closed:.2e}, solver err {worst_solver:.2e}"),
    );
}

#[test]
fn criterion_03_discrete_proxies() {
    let x: Vec<f64> = Regime::ALL
        .iter()
        .map(|&r| {
            stationary_proxy(&reference_loop(r), &DMatrix::identity(1, 1))
                .unwrap()
                .x[(0, 0)]
        })
        .collect();
    let ratio: Vec<f64> = x.iter().map(|v| v / x[0]).collect();
    let ok_x = x
        .iter()
        .zip(X_D)
        .all(|(got, want)| (got - want).abs() <= 5e-4);
    let ok_ratio = ratio
        .iter()
        .zip(RATIO)
        .all(|(got, want)| (got / want - 1.0).abs() <= 0.01);
    report(
        3,
        "discrete proxies within 5e-4, ratios within 1%",
        ok_x && ok_ratio,
        format!("x_d = {x:.5?}, ratio = {ratio:.4?}"),
    );
}

#[test]
fn criterion_04_failure_rates() {
    let start = Instant::now();
    let rows = reproduce_table1(&reference_config()).unwrap();
    let elapsed = start.elapsed();
    let rates: Vec<f64> = rows.iter().map(|r| r.fail_hat).collect();
    let within = rates
        .iter()
        .zip(FAIL)
        .all(|(got, (want, tol))| (got - want).abs() <= tol);
    report(
        4,
        "failure rates at N=50000, T=50, r=0.3; runtime < 60 s",
        within && elapsed < Duration::from_secs(60),
        format!("fail = {rates:.4?}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_05_percentile_below_r95() {
    let data = envelope_study(&reference_config(), &[95.0]).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut all = true;
    for d in &data {
        let r95 = d.envelopes.r95_theory.unwrap();
        for row in &d.envelopes.rows {
            worst = worst.max(row.values[0] / r95);
            all &= row.values[0] <= r95;
        }
    }
    report(
        5,
        "empirical p95 of |e_t| <= r95 at every t, all regimes",
        all && data.len() == 4,
        format!("max p95/r95 = {worst:.4}"),
    );
}

#[test]
fn criterion_06_heatmap_monotone() {
    let map = sweep_heatmap(&SweepSpec::default(), &RegimeQuad::reference()).unwrap();
    let k = map.kp_axis.len();
    assert_eq!(k, 50);
    assert_eq!(map.kd_axis.len(), 50);
    let mut violations = 0;
    let mut unstable = 0;
    for i in 0..k {
        for j in 0..k {
            let c = map.cell(i, j);
            if !c.stable {
                unstable += 1;
            }
            if i + 1 < k
                && map.cell(i + 1, j).x_inf_d.partial_cmp(&c.x_inf_d) != Some(Ordering::Greater)
            {
                violations += 1;
            }
            if j + 1 < k
                && map.cell(i, j + 1).x_inf_d.partial_cmp(&c.x_inf_d) != Some(Ordering::Less)
            {
                violations += 1;
            }
        }
    }
    report(
        6,
        "stationary proxy strictly increasing in Kp, decreasing in Kd on 50x50 grid",
        violations == 0 && unstable == 0,
        format!("{violations} violating pairs, {unstable} unstable cells"),
    );
}

#[test]
fn criterion_07_failure_bound_dominates() {
    let grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let curves = failure_curve(&reference_config(), &grid, 1.0).unwrap();
    let mut dominated = true;
    for c in &curves {
        for p in &c.points {
            dominated &= p.bound >= p.empirical;
        }
    }
    let n = reference_config().n_rollouts as f64;
    let se = |p: f64| (p * (1.0 - p) / n).sqrt();
    let pairs = [
        (Regime::CompliantOverdamped, Regime::StiffOverdamped),
        (Regime::CompliantOverdamped, Regime::CompliantUnderdamped),
        (Regime::StiffOverdamped, Regime::StiffUnderdamped),
        (Regime::CompliantUnderdamped, Regime::StiffUnderdamped),
    ];
    let curve = |r: Regime| curves.iter().find(|c| c.regime == r).unwrap();
    let mut inversions = Vec::new();
    for (lo, hi) in pairs {
        for (a, b) in curve(lo).points.iter().zip(&curve(hi).points) {
            let gap = a.empirical - b.empirical;
            if gap > 3.0 * (se(a.empirical).powi(2) + se(b.empirical).powi(2)).sqrt() {
                inversions.push(format!("{lo}>{hi} at r={}", a.r));
            }
        }
    }
    report(
        7,
        "bound >= empirical for r in 0.1..1.0, ordering CO < {SO,CU} < SU",
        dominated && inversions.is_empty(),
        format!("dominated = {dominated}, inversions = {inversions:?}"),
    );
}

#[test]
fn criterion_08_inheritance_order() {
    let dts = [0.02, 0.01, 0.005, 0.0025];
    let quad = RegimeQuad::reference();
    let slopes: Vec<f64> = Regime::ALL
        .iter()
        .map(|&r| {
            let (alpha, beta) = quad.gains(r);
            convergence_order(&zoh_inheritance_study(alpha, beta, 1.0, 1.0, &dts).unwrap())
        })
        .collect();
    report(
        8,
        "order of convergence of X_d/dt -> X_c in [0.8, 1.2]",
        slopes.iter().all(|s| (0.8..=1.2).contains(s)),
        format!("slopes = {slopes:.4?}"),
    );
}

#[test]
fn criterion_09_amplification_asymptote() {
    let quad = RegimeQuad::reference();
    let mut normalized = Vec::new();
    let mut geometric_ok = true;
    for regime in Regime::ALL {
        let (alpha, beta) = quad.gains(regime);
        let lp = reference_loop(regime);
        let gamma = amplification_index(&lp, 2000).gamma;
        normalized.push(gamma * 2.0 * beta / (alpha * 0.02));
        geometric_ok &=
            amplification_geometric_bound(&lp, 50).value >= amplification_index(&lp, 50).gamma;
    }
    report(
        9,
        "Gamma_2000 * 2 beta/(alpha dt) in [0.98, 1.02]; geometric bound >= Gamma_50",
        normalized.iter().all(|v| (0.98..=1.02).contains(v)) && geometric_ok,
        format!("normalized = {normalized:.4?}, geometric ok = {geometric_ok}"),
    );
}

#[test]
fn criterion_10_multijoint_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = f64::INFINITY;
    for _ in 0..20 {
        let n = rng.random_range(1..=6);
        let masses: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let kp: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..200.0)).collect();
        let kd: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..80.0)).collect();
        let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
            rng.random_range(0.5..2.0)
        }));
        let plant = PlantModel::diagonal(&masses, 0.02).unwrap();
        let gains = GainSetting::new(kp, kd).unwrap();
        let structure = multijoint_structure(&plant, &gains, &sigma).unwrap();
        let x_inf = stationary_proxy(&discretize(&plant, &gains).unwrap(), &sigma)
            .unwrap()
            .x;
        worst = worst.min(dominance_margin(&structure, &x_inf));
    }
    report(
        10,
        "Psi * Xbar - X_inf PSD on 20 random diagonal systems",
        worst >= -1e-10,
        format!("smallest eigenvalue {worst:.3e}"),
    );
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.random_range(-0.3..0.3));
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
        rng.random_range(lo..hi)
    }));
    let m = &g * g.transpose() + d;
    (&m + m.transpose()) * 0.5
}

#[test]
fn criterion_11_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n_mc = 200_000;
    let tol_mc = 4.0 / (n_mc as f64).sqrt();
    let mut worst_sum = 0.0_f64;
    let mut worst_mc = 0.0_f64;
    for k in 0..20 {
        let n = rng.random_range(1..=4);
        let plant = PlantModel::new(random_spd(&mut rng, n, 0.5, 2.0), 0.02).unwrap();
        let kp: Vec<f64> = (0..n).map(|_| rng.random_range(20.0..200.0)).collect();
        let kd: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..80.0)).collect();
        let lp = discretize(&plant, &GainSetting::new(kp, kd).unwrap()).unwrap();
        let sigma = random_spd(&mut rng, n, 0.2, 1.5);

        let mut sum = DMatrix::zeros(2 * n, 2 * n);
        let mut power = DMatrix::identity(2 * n, 2 * n);
        for _ in 0..6 {
            let term = &power * lp.b();
            sum += &term * &sigma * term.transpose();
            power = lp.a() * power;
        }
        let x_sum = lp.c() * &sum * lp.c().transpose();
        let s6 = finite_horizon_proxy(&lp, &sigma, 6).unwrap();
        let scale = 1.0_f64.max(sum.norm());
        worst_sum = worst_sum
            .max((&s6.s - &sum).amax() / scale)
            .max((&s6.x - &x_sum).amax() / scale);

        let x50 = finite_horizon_proxy(&lp, &sigma, 50).unwrap().x;
        let noise = NoiseModel::gaussian(sigma).unwrap();
        let cfg = EnsembleConfig::new(n_mc, 50, 1000 + k);
        let emp = empirical_position_covariance(&lp, &noise, 50, &cfg).unwrap();
        worst_mc = worst_mc.max((&emp - &x50).norm() / x50.norm());
    }
    report(
        11,
        "six-term sum to 1e-12; MC covariance at t=50 within 4/sqrt(N) (N=200000)",
        worst_sum <= 1e-12 && worst_mc <= tol_mc,
        format!("sum err {worst_sum:.2e}, MC rel err {worst_mc:.2e} (tol {tol_mc:.2e})"),
    );
}

#[test]
fn criterion_12_determinism() {
    let base = RegimeStudyConfig {
        seed: 42,
        ..reference_config()
    };
    let a = table1_table(
        &reproduce_table1(&RegimeStudyConfig {
            parallel_width: 1,
            ..base
        })
        .unwrap(),
    )
    .to_csv();
    let b = table1_table(
        &reproduce_table1(&RegimeStudyConfig {
            parallel_width: 1,
            ..base
        })
        .unwrap(),
    )
    .to_csv();
    let c = table1_table(
        &reproduce_table1(&RegimeStudyConfig {
            parallel_width: 4,
            ..base
        })
        .unwrap(),
    )
    .to_csv();
    report(
        12,
        "table CSV byte-identical across runs and parallel widths (seed 42)",
        a == b && a == c,
        format!("{} bytes", a.len()),
    );
}

#[test]
fn failure_bound_is_clipped_at_reference_scale() {
    let lp = reference_loop(Regime::CompliantOverdamped);
    let gamma = amplification_index(&lp, 50).gamma;
    let b = failure_bound(
        &FailureBoundQuery::new(0.3, 50, 1.0, 0.0, 1).unwrap(),
        gamma,
    )
    .unwrap();
    assert!(b.is_clipped());
    assert_eq!(b.probability, 1.0);
}
