//! The `gainbound` command line.
//!
//! Every subcommand reads an optional JSON config (`--config`), applies flag
//! overrides on top of it and prints its main result on stdout. Artifact
//! commands (`simulate`, `regimes`, `sweep`, `reproduce`) also write CSV/JSON
//! files plus a manifest into the output directory, which is `--out`, else
//! the config's `output_dir`, else `$GAINBOUND_OUT`, else `./out`.
//! `discretize`, `lyapunov` and `bound` write files only when one of the
//! first three is set.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure,
//! 64 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bounds::{self, amplification_index, FailureBoundQuery};
use crate::canonical::{Regime, RegimeQuad};
use crate::dynamics::{discretize, DiscreteClosedLoop, GainSetting, PlantModel};
use crate::error::Error;
use crate::experiments::{self, AxisSpacing, RegimeStudyConfig, SweepSpec};
use crate::lyapunov::{finite_horizon_proxy, stationary_proxy, Horizon};
use crate::montecarlo::{EnsembleConfig, NoiseKind, NoiseModel, NormEnsemble};
use crate::output::{self, to_json, Manifest, Table};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GAINBOUND_OUT";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "gainbound",
    version,
    about = "PD gain error propagation, failure bounds and Monte Carlo checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exact zero-order-hold discretization of the PD error dynamics.
    Discretize {
        #[command(flatten)]
        io: IoFlags,
        #[command(flatten)]
        plant: PlantFlags,
        #[command(flatten)]
        gains: GainFlags,
        /// Print A, B, C as row-major JSON arrays.
        #[arg(long)]
        emit_json: bool,
    },
    /// Stationary (or finite-horizon) proxy matrices.
    Lyapunov {
        #[command(flatten)]
        io: IoFlags,
        #[command(flatten)]
        plant: PlantFlags,
        #[command(flatten)]
        gains: GainFlags,
        #[command(flatten)]
        noise: NoiseFlags,
        /// Finite horizon t; omit for the stationary solution.
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Amplification index and the horizon-T failure bound.
    Bound {
        #[command(flatten)]
        io: IoFlags,
        #[command(flatten)]
        plant: PlantFlags,
        #[command(flatten)]
        gains: GainFlags,
        #[command(flatten)]
        query: QueryFlags,
        /// Use this amplification index instead of computing it.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Monte Carlo envelopes and failure rate for one gain setting.
    Simulate {
        #[command(flatten)]
        io: IoFlags,
        #[command(flatten)]
        plant: PlantFlags,
        #[command(flatten)]
        gains: GainFlags,
        #[command(flatten)]
        noise: NoiseFlags,
        #[command(flatten)]
        mc: McFlags,
        #[arg(long)]
        radius: Option<f64>,
        /// Comma-separated percentile levels.
        #[arg(long, default_value = "50,95,99")]
        percentiles: String,
    },
    /// System quantities for the four regimes in table layout.
    Regimes {
        #[command(flatten)]
        io: IoFlags,
        #[command(flatten)]
        quad: QuadFlags,
        #[command(flatten)]
        plant: PlantFlags,
        #[command(flatten)]
        noise: NoiseFlags,
        #[command(flatten)]
        mc: McFlags,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Stationary-proxy heatmap over a (Kp, Kd) grid.
    Sweep {
        #[command(flatten)]
        io: IoFlags,
        #[command(flatten)]
        quad: QuadFlags,
        #[command(flatten)]
        plant: PlantFlags,
        #[command(flatten)]
        noise: NoiseFlags,
        #[command(flatten)]
        grid: GridFlags,
    },
    /// Regenerate a table or figure data set.
    Reproduce {
        target: Target,
        #[command(flatten)]
        io: IoFlags,
        #[command(flatten)]
        mc: McFlags,
        #[command(flatten)]
        grid: GridFlags,
        /// Comma-separated sampling periods for `inheritance`.
        #[arg(long)]
        dts: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    Table1,
    Fig2,
    Fig3,
    Fig4,
    Inheritance,
}

impl Target {
    fn name(self) -> &'static str {
        match self {
            Target::Table1 => "table1",
            Target::Fig2 => "fig2",
            Target::Fig3 => "fig3",
            Target::Fig4 => "fig4",
            Target::Inheritance => "inheritance",
        }
    }
}

#[derive(Debug, Args)]
struct IoFlags {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlantFlags {
    /// Mass: one value, or comma-separated diagonal masses.
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Debug, Args)]
struct GainFlags {
    /// Stiffness per joint, comma separated.
    #[arg(long)]
    kp: Option<String>,
    /// Damping per joint, comma separated.
    #[arg(long)]
    kd: Option<String>,
}

#[derive(Debug, Args)]
struct NoiseFlags {
    /// Gaussian action-error variance (isotropic).
    #[arg(long)]
    sigma2: Option<f64>,
}

#[derive(Debug, Args)]
struct McFlags {
    /// Rollout count (`regimes` skips Monte Carlo when unset).
    #[arg(long)]
    rollouts: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    width: Option<usize>,
}

#[derive(Debug, Args)]
struct QuadFlags {
    /// Two stiffness levels `low,high`.
    #[arg(long)]
    alpha: Option<String>,
    /// Two damping levels `low,high`.
    #[arg(long)]
    beta: Option<String>,
}

#[derive(Debug, Args)]
struct QueryFlags {
    #[arg(long)]
    r: Option<f64>,
    #[arg(long = "T")]
    t_horizon: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    lva: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
}

#[derive(Debug, Args)]
struct GridFlags {
    /// `min,max` stiffness range.
    #[arg(long)]
    kp_range: Option<String>,
    /// `min,max` damping range.
    #[arg(long)]
    kd_range: Option<String>,
    #[arg(long)]
    resolution: Option<usize>,
    /// Linear instead of log-spaced axes.
    #[arg(long)]
    linear: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    plant: Option<PlantModel>,
    gains: Option<GainSetting>,
    quad: Option<QuadSpec>,
    grid: Option<GridSpec>,
    noise: Option<NoiseModel>,
    mc: McSpec,
    query: QuerySpec,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadSpec {
    alpha_l: f64,
    alpha_h: f64,
    beta_l: f64,
    beta_h: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GridSpec {
    kp_min: f64,
    kp_max: f64,
    kd_min: f64,
    kd_max: f64,
    resolution: usize,
    spacing: AxisSpacing,
}

impl Default for GridSpec {
    fn default() -> Self {
        let d = SweepSpec::default();
        Self {
            kp_min: d.kp_min,
            kp_max: d.kp_max,
            kd_min: d.kd_min,
            kd_max: d.kd_max,
            resolution: d.resolution,
            spacing: d.spacing,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct McSpec {
    n_rollouts: Option<usize>,
    horizon: Option<usize>,
    seed: Option<u64>,
    parallel_width: Option<usize>,
    radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct QuerySpec {
    r: Option<f64>,
    t_horizon: Option<usize>,
    l_va: Option<f64>,
    eps_gen: Option<f64>,
    n: Option<usize>,
    gamma: Option<f64>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Self {
                code: EXIT_NUMERICAL,
                message: format!("numerical failure: {e}"),
            }
        } else {
            Self::config(format!("invalid configuration: {e}"))
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Parse `argv` (program name first), run the subcommand and return the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Discretize {
            io,
            plant,
            gains,
            emit_json,
        } => {
            let mut inputs = Inputs::load(&io)?;
            inputs.plant(&plant)?;
            inputs.gains(&gains)?;
            cmd_discretize(inputs, emit_json)
        }
        Command::Lyapunov {
            io,
            plant,
            gains,
            noise,
            horizon,
        } => {
            let mut inputs = Inputs::load(&io)?;
            inputs.plant(&plant)?;
            inputs.gains(&gains)?;
            inputs.noise(&noise);
            cmd_lyapunov(inputs, horizon)
        }
        Command::Bound {
            io,
            plant,
            gains,
            query,
            gamma,
        } => {
            let mut inputs = Inputs::load(&io)?;
            inputs.plant(&plant)?;
            inputs.gains(&gains)?;
            inputs.query(&query, gamma);
            cmd_bound(inputs)
        }
        Command::Simulate {
            io,
            plant,
            gains,
            noise,
            mc,
            radius,
            percentiles,
        } => {
            let mut inputs = Inputs::load(&io)?;
            inputs.plant(&plant)?;
            inputs.gains(&gains)?;
            inputs.noise(&noise);
            inputs.mc(&mc, radius);
            let levels = parse_list(&percentiles, "--percentiles")?;
            cmd_simulate(inputs, &levels)
        }
        Command::Regimes {
            io,
            quad,
            plant,
            noise,
            mc,
            radius,
        } => {
            let mut inputs = Inputs::load(&io)?;
            inputs.quad(&quad)?;
            inputs.plant(&plant)?;
            inputs.noise(&noise);
            inputs.mc(&mc, radius);
            cmd_regimes(inputs)
        }
        Command::Sweep {
            io,
            quad,
            plant,
            noise,
            grid,
        } => {
            let mut inputs = Inputs::load(&io)?;
            inputs.quad(&quad)?;
            inputs.plant(&plant)?;
            inputs.noise(&noise);
            inputs.grid(&grid)?;
            cmd_sweep(inputs)
        }
        Command::Reproduce {
            target,
            io,
            mc,
            grid,
            dts,
        } => {
            let mut inputs = Inputs::load(&io)?;
            inputs.mc(&mc, None);
            inputs.grid(&grid)?;
            let dts = dts.map(|s| parse_list(&s, "--dts")).transpose()?;
            cmd_reproduce(inputs, target, dts)
        }
    }
}

/// Merged file and flag configuration.
struct Inputs {
    value: Value,
    out_flag: Option<PathBuf>,
}

impl Inputs {
    fn load(io: &IoFlags) -> CliResult<Self> {
        let value = match &io.config {
            None => Value::Object(Map::new()),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    Failure::config(format!("cannot read config file {}: {e}", path.display()))
                })?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
                if !v.is_object() {
                    return Err(Failure::config(format!(
                        "{}: top level must be an object",
                        path.display()
                    )));
                }
                v
            }
        };
        Ok(Self {
            value,
            out_flag: io.out.clone(),
        })
    }

    fn set(&mut self, path: &[&str], v: Value) {
        let mut node = &mut self.value;
        for key in &path[..path.len() - 1] {
            let map = node.as_object_mut().expect("config nodes are objects");
            let entry = map.entry(*key).or_insert_with(|| Value::Object(Map::new()));
            if !entry.is_object() {
                *entry = Value::Object(Map::new());
            }
            node = entry;
        }
        node.as_object_mut()
            .expect("config nodes are objects")
            .insert(path[path.len() - 1].to_owned(), v);
    }

    fn set_opt<T: Serialize>(&mut self, path: &[&str], v: Option<T>) {
        if let Some(v) = v {
            self.set(path, json!(v));
        }
    }

    fn plant(&mut self, f: &PlantFlags) -> CliResult<()> {
        if let Some(m) = &f.m {
            let v = parse_list(m, "--m")?;
            self.set(&["plant", "mass"], scalar_or_list(v));
        }
        self.set_opt(&["plant", "dt"], f.dt);
        Ok(())
    }

    fn gains(&mut self, f: &GainFlags) -> CliResult<()> {
        if let Some(kp) = &f.kp {
            let v = parse_list(kp, "--kp")?;
            self.set(&["gains", "kp"], scalar_or_list(v));
        }
        if let Some(kd) = &f.kd {
            let v = parse_list(kd, "--kd")?;
            self.set(&["gains", "kd"], scalar_or_list(v));
        }
        Ok(())
    }

    fn noise(&mut self, f: &NoiseFlags) {
        if let Some(s) = f.sigma2 {
            self.set(&["noise"], json!({"kind": "gaussian", "sigma_roll": s}));
        }
    }

    fn mc(&mut self, f: &McFlags, radius: Option<f64>) {
        self.set_opt(&["mc", "n_rollouts"], f.rollouts);
        self.set_opt(&["mc", "horizon"], f.horizon);
        self.set_opt(&["mc", "seed"], f.seed);
        self.set_opt(&["mc", "parallel_width"], f.width);
        self.set_opt(&["mc", "radius"], radius);
    }

    fn quad(&mut self, f: &QuadFlags) -> CliResult<()> {
        if let Some(a) = &f.alpha {
            let [lo, hi] = pair(a, "--alpha")?;
            self.set(&["quad", "alpha_l"], json!(lo));
            self.set(&["quad", "alpha_h"], json!(hi));
        }
        if let Some(b) = &f.beta {
            let [lo, hi] = pair(b, "--beta")?;
            self.set(&["quad", "beta_l"], json!(lo));
            self.set(&["quad", "beta_h"], json!(hi));
        }
        Ok(())
    }

    fn query(&mut self, f: &QueryFlags, gamma: Option<f64>) {
        self.set_opt(&["query", "r"], f.r);
        self.set_opt(&["query", "t_horizon"], f.t_horizon);
        self.set_opt(&["query", "n"], f.n);
        self.set_opt(&["query", "l_va"], f.lva);
        self.set_opt(&["query", "eps_gen"], f.eps);
        self.set_opt(&["query", "gamma"], gamma);
    }

    fn grid(&mut self, f: &GridFlags) -> CliResult<()> {
        if let Some(s) = &f.kp_range {
            let [lo, hi] = pair(s, "--kp-range")?;
            self.set(&["grid", "kp_min"], json!(lo));
            self.set(&["grid", "kp_max"], json!(hi));
        }
        if let Some(s) = &f.kd_range {
            let [lo, hi] = pair(s, "--kd-range")?;
            self.set(&["grid", "kd_min"], json!(lo));
            self.set(&["grid", "kd_max"], json!(hi));
        }
        self.set_opt(&["grid", "resolution"], f.resolution);
        if f.linear {
            self.set(&["grid", "spacing"], json!("linear"));
        }
        Ok(())
    }

    fn resolve(&self) -> CliResult<RunConfig> {
        let cfg: RunConfig = serde_path_to_error::deserialize(&self.value).map_err(|e| {
            let path = e.path().to_string();
            Failure::config(format!("config field `{path}`: {}", e.into_inner()))
        })?;
        // a grid is normalized by a quad, so the two may appear together
        if cfg.gains.is_some() && (cfg.quad.is_some() || cfg.grid.is_some()) {
            return Err(Failure::config(
                "`gains` cannot be combined with `quad` or `grid`; pick one gain mode",
            ));
        }
        Ok(cfg)
    }

    /// `--out`, then `output_dir`, then the environment.
    fn explicit_out(&self, cfg: &RunConfig) -> Option<PathBuf> {
        self.out_flag
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .or_else(|| {
                std::env::var_os(OUT_DIR_ENV)
                    .filter(|v| !v.is_empty())
                    .map(PathBuf::from)
            })
    }

    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.explicit_out(cfg)
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn parse_list(s: &str, flag: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Failure::config(format!("{flag}: cannot parse `{t}`: {e}")))
        })
        .collect()
}

fn pair(s: &str, flag: &str) -> CliResult<[f64; 2]> {
    let v = parse_list(s, flag)?;
    <[f64; 2]>::try_from(v.as_slice()).map_err(|_| {
        Failure::config(format!(
            "{flag} expects exactly two comma-separated values, got `{s}`"
        ))
    })
}

fn scalar_or_list(v: Vec<f64>) -> Value {
    if v.len() == 1 {
        json!(v[0])
    } else {
        json!(v)
    }
}

fn require<T>(v: Option<T>, what: &str) -> CliResult<T> {
    v.ok_or_else(|| {
        Failure::config(format!(
            "missing `{what}` (set it in the config file or by flag)"
        ))
    })
}

fn reference_plant() -> PlantModel {
    PlantModel::scalar(1.0, 0.02).expect("reference plant is valid")
}

fn resolve_quad(cfg: &RunConfig) -> CliResult<RegimeQuad> {
    match &cfg.quad {
        None => Ok(RegimeQuad::reference()),
        Some(q) => Ok(RegimeQuad::new(q.alpha_l, q.alpha_h, q.beta_l, q.beta_h)?),
    }
}

/// The configured noise, defaulting to a standard normal; a scalar Gaussian
/// proxy is expanded to `σ² I` on multi-joint plants.
fn resolve_noise(cfg: &RunConfig, n: usize) -> CliResult<NoiseModel> {
    let Some(noise) = cfg.noise.clone() else {
        return Ok(NoiseModel::standard_normal(n));
    };
    if noise.dim() == n {
        return Ok(noise);
    }
    if noise.dim() == 1 && *noise.kind() == NoiseKind::Gaussian {
        let s = noise.sigma_roll()[(0, 0)];
        return Ok(NoiseModel::gaussian(DMatrix::identity(n, n) * s)?);
    }
    Err(Failure::config(format!(
        "noise has dimension {}, plant has {n} joints",
        noise.dim()
    )))
}

fn scalar_sigma2(noise: &NoiseModel) -> CliResult<f64> {
    if *noise.kind() != NoiseKind::Gaussian || noise.dim() != 1 {
        return Err(Failure::config(
            "regime experiments need a scalar Gaussian noise",
        ));
    }
    Ok(noise.sigma_roll()[(0, 0)])
}

fn ensemble(cfg: &RunConfig, default_rollouts: usize, default_horizon: usize) -> EnsembleConfig {
    let d = EnsembleConfig::new(
        cfg.mc.n_rollouts.unwrap_or(default_rollouts),
        cfg.mc.horizon.unwrap_or(default_horizon),
        cfg.mc.seed.unwrap_or(42),
    );
    match cfg.mc.parallel_width {
        Some(w) => d.with_width(w),
        None => d,
    }
}

fn study_config(cfg: &RunConfig, default_rollouts: usize) -> CliResult<RegimeStudyConfig> {
    let quad = resolve_quad(cfg)?;
    let plant = cfg.plant.clone().unwrap_or_else(reference_plant);
    if plant.n() != 1 {
        return Err(Failure::config(
            "regime experiments need a single-joint plant",
        ));
    }
    let sigma2 = scalar_sigma2(&resolve_noise(cfg, 1)?)?;
    let d = RegimeStudyConfig::default();
    let mc = ensemble(cfg, default_rollouts, d.horizon);
    Ok(RegimeStudyConfig {
        m: plant.mass()[(0, 0)],
        dt: plant.dt(),
        alpha_l: quad.alpha_l,
        alpha_h: quad.alpha_h,
        beta_l: quad.beta_l,
        beta_h: quad.beta_h,
        sigma2,
        n_rollouts: mc.n_rollouts,
        horizon: mc.horizon,
        radius: cfg.mc.radius.unwrap_or(d.radius),
        seed: mc.seed,
        parallel_width: mc.parallel_width,
    })
}

fn sweep_spec(cfg: &RunConfig) -> CliResult<SweepSpec> {
    let plant = cfg.plant.clone().unwrap_or_else(reference_plant);
    if plant.n() != 1 {
        return Err(Failure::config("the gain sweep needs a single-joint plant"));
    }
    let sigma2 = scalar_sigma2(&resolve_noise(cfg, 1)?)?;
    let g = cfg.grid.unwrap_or_default();
    Ok(SweepSpec {
        kp_min: g.kp_min,
        kp_max: g.kp_max,
        kd_min: g.kd_min,
        kd_max: g.kd_max,
        resolution: g.resolution,
        spacing: g.spacing,
        m: plant.mass()[(0, 0)],
        dt: plant.dt(),
        sigma2,
    })
}

fn closed_loop(cfg: &RunConfig) -> CliResult<(PlantModel, DiscreteClosedLoop)> {
    let plant = require(cfg.plant.clone(), "plant")?;
    let gains = require(cfg.gains.clone(), "gains")?;
    let lp = discretize(&plant, &gains)?;
    Ok((plant, lp))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Collects artifacts and writes them together with a manifest.
struct Artifacts {
    dir: PathBuf,
    manifest: Manifest,
}

impl Artifacts {
    fn new<C: Serialize>(
        dir: PathBuf,
        name: &str,
        inputs: &Inputs,
        resolved: &C,
        seed: Option<u64>,
    ) -> Self {
        let config = json!({"input": inputs.value, "resolved": resolved});
        Self {
            dir,
            manifest: Manifest::new(name, &config, seed),
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> CliResult<()> {
        output::write_file(&self.dir, name, contents).map_err(|e| {
            Failure::config(format!(
                "cannot write {}: {e}",
                self.dir.join(name).display()
            ))
        })?;
        self.manifest.files.push(name.to_owned());
        Ok(())
    }

    fn finish(self) -> CliResult<PathBuf> {
        let name = format!("{}.manifest.json", self.manifest.command);
        let text = to_json(&self.manifest).expect("manifest serializes");
        output::write_file(&self.dir, &name, &text).map_err(|e| {
            Failure::config(format!(
                "cannot write {}: {e}",
                self.dir.join(&name).display()
            ))
        })?;
        Ok(self.dir.join(name))
    }
}

fn json_text<T: Serialize>(v: &T) -> String {
    to_json(v).expect("results serialize")
}

fn print_written(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn cmd_discretize(inputs: Inputs, emit_json: bool) -> CliResult<()> {
    let cfg = inputs.resolve()?;
    let (plant, lp) = closed_loop(&cfg)?;
    let body = json!({
        "n": plant.n(),
        "dt": lp.dt(),
        "spectral_radius": lp.spectral_radius(),
        "a": rows(lp.a()),
        "b": rows(lp.b()),
        "c": rows(lp.c()),
    });
    let text = json_text(&body);
    if emit_json {
        print!("{text}");
    } else {
        println!(
            "{} joint(s), dt = {}, spectral radius = {}",
            plant.n(),
            output::sig17(lp.dt()),
            output::sig17(lp.spectral_radius())
        );
    }
    if let Some(dir) = inputs.explicit_out(&cfg) {
        let mut art = Artifacts::new(dir, "discretize", &inputs, &body, None);
        art.write("discretize.json", &text)?;
        print_written(&art.finish()?);
    }
    Ok(())
}

fn cmd_lyapunov(inputs: Inputs, horizon: Option<usize>) -> CliResult<()> {
    let cfg = inputs.resolve()?;
    let (plant, lp) = closed_loop(&cfg)?;
    let noise = resolve_noise(&cfg, plant.n())?;
    let proxy = match horizon {
        Some(t) => finite_horizon_proxy(&lp, noise.sigma_roll(), t)?,
        None => stationary_proxy(&lp, noise.sigma_roll())?,
    };
    let horizon = match proxy.horizon {
        Horizon::Finite(t) => json!(t),
        Horizon::Infinite => json!("infinite"),
    };
    let body = json!({
        "horizon": horizon,
        "spectral_radius": lp.spectral_radius(),
        "residual": proxy.residual,
        "x": rows(&proxy.x),
        "s": rows(&proxy.s),
        "r95": bounds::r95_threshold(&proxy.x).ok(),
    });
    let text = json_text(&body);
    print!("{text}");
    if let Some(dir) = inputs.explicit_out(&cfg) {
        let mut art = Artifacts::new(dir, "lyapunov", &inputs, &body, None);
        art.write("lyapunov.json", &text)?;
        print_written(&art.finish()?);
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundReport {
    gamma: f64,
    exponent: f64,
    bound_raw: f64,
    bound_clipped: f64,
    prefactor: f64,
    query: FailureBoundQuery,
}

fn cmd_bound(inputs: Inputs) -> CliResult<()> {
    let cfg = inputs.resolve()?;
    let q = &cfg.query;
    let t_horizon = require(q.t_horizon, "query.t_horizon (--T)")?;
    let n = match (q.n, &cfg.plant) {
        (Some(n), _) => n,
        (None, Some(p)) => p.n(),
        (None, None) => 1,
    };
    let query = FailureBoundQuery::new(
        require(q.r, "query.r (--r)")?,
        t_horizon,
        q.l_va.unwrap_or(1.0),
        q.eps_gen.unwrap_or(0.0),
        n,
    )?;
    let gamma = match q.gamma {
        Some(g) => g,
        None => amplification_index(&closed_loop(&cfg)?.1, t_horizon).gamma,
    };
    let b = bounds::failure_bound(&query, gamma)?;
    let report = BoundReport {
        gamma,
        exponent: b.exponent,
        bound_raw: b.raw,
        bound_clipped: b.probability,
        prefactor: b.prefactor,
        query,
    };
    let text = json_text(&report);
    print!("{text}");
    if let Some(dir) = inputs.explicit_out(&cfg) {
        let mut art = Artifacts::new(dir, "bound", &inputs, &report.query, None);
        art.write("bound.json", &text)?;
        print_written(&art.finish()?);
    }
    Ok(())
}

fn cmd_simulate(inputs: Inputs, levels: &[f64]) -> CliResult<()> {
    let cfg = inputs.resolve()?;
    let (plant, lp) = closed_loop(&cfg)?;
    let noise = resolve_noise(&cfg, plant.n())?;
    let ens_cfg = ensemble(&cfg, 10_000, 50);
    let ens = NormEnsemble::simulate(&lp, &noise, ens_cfg.horizon, &ens_cfg)?;
    let mut stats = ens.stats(cfg.mc.radius, levels)?;
    let x_inf = stationary_proxy(&lp, noise.sigma_roll())?.x;
    let r95 = bounds::r95_threshold(&x_inf).ok();
    let env = stats.envelopes.as_mut().expect("levels are non-empty");
    env.r95_theory = r95;
    let csv = experiments::envelope_table(env).to_csv();

    let summary = json!({
        "n_rollouts": stats.n_rollouts,
        "horizon": stats.horizon,
        "radius": stats.radius,
        "failure_rate": stats.failure_rate,
        "ci_halfwidth": stats.ci_halfwidth,
        "max_abs_error": stats.max_abs_error,
        "r95_theory": r95,
        "spectral_radius": lp.spectral_radius(),
    });
    let text = json_text(&summary);
    print!("{text}");
    let mut art = Artifacts::new(
        inputs.out_dir(&cfg),
        "simulate",
        &inputs,
        &ens_cfg,
        Some(ens_cfg.seed),
    );
    art.write("envelopes.csv", &csv)?;
    art.write("stats.json", &text)?;
    print_written(&art.finish()?);
    Ok(())
}

fn cmd_regimes(inputs: Inputs) -> CliResult<()> {
    let cfg = inputs.resolve()?;
    let study = study_config(&cfg, 0)?;
    let rows = experiments::reproduce_table1(&study)?;
    let csv = experiments::table1_table(&rows).to_csv();
    print!("{csv}");
    let seed = (study.n_rollouts > 0).then_some(study.seed);
    let mut art = Artifacts::new(inputs.out_dir(&cfg), "regimes", &inputs, &study, seed);
    art.write("regimes.csv", &csv)?;
    art.write("regimes.json", &json_text(&rows))?;
    print_written(&art.finish()?);
    Ok(())
}

fn write_heatmap(
    art: &mut Artifacts,
    prefix: &str,
    spec: &SweepSpec,
    quad: &RegimeQuad,
) -> CliResult<()> {
    let map = experiments::sweep_heatmap(spec, quad)?;
    art.write(
        &format!("{prefix}.csv"),
        &experiments::heatmap_table(&map).to_csv(),
    )?;
    let mut markers = Table::new([
        "regime",
        "kp",
        "kd",
        "x_inf_d",
        "x_inf_normalized",
        "log10_normalized",
    ]);
    for (r, c) in &map.markers {
        markers.push(vec![
            r.to_string(),
            output::sig17(c.kp),
            output::sig17(c.kd),
            output::sig17(c.x_inf_d),
            output::sig17(c.x_inf_normalized),
            output::sig17(c.log10_normalized),
        ]);
    }
    art.write(&format!("{prefix}_markers.csv"), &markers.to_csv())?;
    let unstable = map.cells.iter().filter(|c| !c.stable).count();
    eprintln!(
        "{}x{} grid, {unstable} unstable cell(s), reference proxy {}",
        map.kp_axis.len(),
        map.kd_axis.len(),
        output::sig17(map.reference)
    );
    Ok(())
}

fn cmd_sweep(inputs: Inputs) -> CliResult<()> {
    let cfg = inputs.resolve()?;
    let quad = resolve_quad(&cfg)?;
    let spec = sweep_spec(&cfg)?;
    let mut art = Artifacts::new(inputs.out_dir(&cfg), "sweep", &inputs, &(spec, quad), None);
    write_heatmap(&mut art, "heatmap", &spec, &quad)?;
    print_written(&art.finish()?);
    Ok(())
}

/// Sampling periods of the inheritance study.
pub const DEFAULT_INHERITANCE_DTS: [f64; 4] = [0.02, 0.01, 0.005, 0.0025];

fn cmd_reproduce(inputs: Inputs, target: Target, dts: Option<Vec<f64>>) -> CliResult<()> {
    let cfg = inputs.resolve()?;
    let dir = inputs.out_dir(&cfg);
    let name = target.name();
    let path = match target {
        Target::Table1 => {
            let study = study_config(&cfg, 50_000)?;
            let rows = experiments::reproduce_table1(&study)?;
            let csv = experiments::table1_table(&rows).to_csv();
            print!("{csv}");
            let mut art = Artifacts::new(dir, name, &inputs, &study, Some(study.seed));
            art.write("table1.csv", &csv)?;
            art.write("table1.json", &json_text(&rows))?;
            art.finish()?
        }
        Target::Fig2 => {
            let study = study_config(&cfg, 50_000)?;
            let levels = [50.0, 95.0, 99.0];
            let data = experiments::envelope_study(&study, &levels)?;
            let mut art = Artifacts::new(dir, name, &inputs, &study, Some(study.seed));
            for d in &data {
                let file = format!("fig2_{}.csv", d.regime);
                art.write(&file, &experiments::envelope_table(&d.envelopes).to_csv())?;
            }
            art.finish()?
        }
        Target::Fig3 => {
            let quad = resolve_quad(&cfg)?;
            let spec = sweep_spec(&cfg)?;
            let mut art = Artifacts::new(dir, name, &inputs, &(spec, quad), None);
            write_heatmap(&mut art, "fig3_heatmap", &spec, &quad)?;
            art.finish()?
        }
        Target::Fig4 => {
            let study = study_config(&cfg, 50_000)?;
            let l_roll = cfg.query.l_va.unwrap_or(study.sigma2);
            let grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
            let curves = experiments::failure_curve(&study, &grid, l_roll)?;
            let csv = experiments::failure_curve_table(&curves).to_csv();
            print!("{csv}");
            let mut art = Artifacts::new(dir, name, &inputs, &(study, l_roll), Some(study.seed));
            art.write("fig4.csv", &csv)?;
            art.finish()?
        }
        Target::Inheritance => {
            let quad = resolve_quad(&cfg)?;
            let plant = cfg.plant.clone().unwrap_or_else(reference_plant);
            let sigma2 = scalar_sigma2(&resolve_noise(&cfg, 1)?)?;
            let dts = dts.unwrap_or_else(|| DEFAULT_INHERITANCE_DTS.to_vec());
            let m = plant.mass()[(0, 0)];
            let mut table = Table::new(["regime", "dt", "x_d_over_dt", "x_c", "rel_error"]);
            let mut orders = Map::new();
            for regime in Regime::ALL {
                let (alpha, beta) = quad.gains(regime);
                let recs = experiments::zoh_inheritance_study(alpha, beta, m, sigma2, &dts)?;
                table
                    .rows
                    .extend(experiments::inheritance_table(Some(regime), &recs).rows);
                orders.insert(
                    regime.to_string(),
                    json!(experiments::convergence_order(&recs)),
                );
            }
            let csv = table.to_csv();
            print!("{csv}");
            let resolved = json!({"quad": quad, "m": m, "sigma2": sigma2, "dts": dts});
            let mut art = Artifacts::new(dir, name, &inputs, &resolved, None);
            art.write("inheritance.csv", &csv)?;
            art.write("inheritance_order.json", &json_text(&orders))?;
            art.finish()?
        }
    };
    print_written(&path);
    Ok(())
}
