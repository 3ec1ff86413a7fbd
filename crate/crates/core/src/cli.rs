//! Batch command runner: `solve`, `gevrey`, `verify-lemma`, `norms`, `radius`.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 when the fixed
//! point is not reached (divergence, iteration cap, smallness or bound failure).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analyticity::{radius_profile, RadiusProfile};
use crate::error::Error;
use crate::field::{
    make_exponential_divfree, make_random_divfree, make_single_mode, make_taylor_green, CVec3,
    FieldFlags, SpectralField, Trajectory,
};
use crate::io::{
    fmt_f64, read_field, read_trajectory, sha256_file, to_json_pretty, write_trajectory, Csv,
};
use crate::lattice::{shell_count, LatticeSpec, WaveVector};
use crate::lemma_oracle::{estimate_constant_with_regions, RadiusPolicy};
use crate::norms::{pm_norm, st_pm_norm, z_norm, NormReport, Quadrature};
use crate::operators::{gevrey_weight_trajectory, ConvPath, WeightDirection, WeightKind};
use crate::solver::{ConvergenceReport, GridConfig, Solver, SolverConfig, StopReason};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "pmns",
    version,
    about = "Mild Navier-Stokes solutions in pseudomeasure spaces on the 3-torus"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// JSON run configuration (solve, gevrey).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Convolution path, overriding the config.
    #[arg(long = "conv-path", global = true)]
    pub conv_path: Option<String>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Picard solve of the mild formulation.
    Solve,
    /// Picard solve for the Gevrey-weighted unknown.
    Gevrey,
    /// Lattice convolution bound certificate.
    VerifyLemma {
        #[arg(long = "K")]
        k: u32,
        #[arg(long, default_value = "16x")]
        policy: String,
    },
    /// Norms of a stored trajectory.
    Norms {
        #[arg(long)]
        traj: PathBuf,
        /// Exponents for the PM, 𝒫ℳ and 𝒵 columns.
        #[arg(long = "a", value_delimiter = ',', default_value = "2,4")]
        a: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value = "trapezoid")]
        quadrature: String,
        #[arg(long = "ck-a", default_value_t = 2.5)]
        ck_a: f64,
    },
    /// Decay-radius profile of a stored trajectory.
    Radius {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        kappa: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Gevrey => "gevrey",
            Command::VerifyLemma { .. } => "verify-lemma",
            Command::Norms { .. } => "norms",
            Command::Radius { .. } => "radius",
        }
    }
}

/// Initial datum of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Zero {},
    TaylorGreen {
        eps: f64,
    },
    SingleMode {
        k: [i32; 3],
        /// `[re1, im1, re2, im2, re3, im3]`
        amplitude: [f64; 6],
        #[serde(default = "yes")]
        realify: bool,
    },
    Random {
        eps: f64,
        #[serde(default = "two")]
        decay: f64,
        seed: Option<u64>,
    },
    Exponential {
        amplitude: f64,
        rho0: f64,
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

fn yes() -> bool {
    true
}
fn two() -> f64 {
    2.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightName {
    #[default]
    None,
    SqrtT,
    AlphaT,
}

/// The JSON run configuration. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub n: u32,
    pub mu: f64,
    pub data: DataSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub weight: WeightName,
    /// `α` of the `αt` weight and of the radius bound `μαt`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default)]
    pub conv_path: ConvPath,
    #[serde(default = "default_eta_samples")]
    pub eta_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_inadmissible: bool,
    #[serde(default = "default_ck_a")]
    pub ck_a: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "yes")]
    pub write_trajectory: bool,
}

fn default_max_iter() -> usize {
    50
}
fn default_tol() -> f64 {
    1e-10
}
fn default_alpha() -> f64 {
    0.5
}
fn default_eta_samples() -> usize {
    4
}
fn default_ck_a() -> f64 {
    2.5
}
fn default_kappa() -> f64 {
    2.0
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn spec(&self) -> Result<LatticeSpec, CliError> {
        Ok(LatticeSpec::new(self.n)?)
    }

    pub fn weight_kind(&self) -> WeightKind {
        match self.weight {
            WeightName::None => WeightKind::None,
            WeightName::SqrtT => WeightKind::SqrtT,
            WeightName::AlphaT => WeightKind::AlphaT { alpha: self.alpha },
        }
    }

    pub fn solver_config(&self) -> Result<SolverConfig, CliError> {
        let mut c = SolverConfig::new(self.spec()?, self.mu);
        c.grid = self.grid;
        c.eta = self.eta;
        c.max_iter = self.max_iter;
        c.tol = self.tol;
        c.weight = self.weight_kind();
        c.quadrature = self.quadrature;
        c.conv_path = self.conv_path;
        c.eta_samples = self.eta_samples;
        c.seed = self.seed;
        c.allow_inadmissible = self.allow_inadmissible;
        c.validate()?;
        Ok(c)
    }

    /// Builds the datum; relative file paths resolve against `base`.
    pub fn initial_datum(&self, base: &Path) -> Result<(SpectralField, Option<PathBuf>), CliError> {
        let spec = self.spec()?;
        let f = match &self.data {
            DataSpec::Zero {} => SpectralField::zeros(spec, FieldFlags::REAL_DIV_FREE),
            DataSpec::TaylorGreen { eps } => make_taylor_green(spec, *eps),
            DataSpec::SingleMode {
                k,
                amplitude: a,
                realify,
            } => {
                let amp = CVec3::new(
                    Complex64::new(a[0], a[1]),
                    Complex64::new(a[2], a[3]),
                    Complex64::new(a[4], a[5]),
                );
                make_single_mode(spec, WaveVector(*k), amp, *realify, true)?
            }
            DataSpec::Random { eps, decay, seed } => {
                make_random_divfree(spec, *eps, *decay, seed.unwrap_or(self.seed))?
            }
            DataSpec::Exponential {
                amplitude,
                rho0,
                seed,
            } => make_exponential_divfree(spec, *amplitude, *rho0, seed.unwrap_or(self.seed)),
            DataSpec::File { path } => {
                let p = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let f = read_field(&p)?;
                if f.spec() != spec {
                    return Err(CliError::config(format!(
                        "datum file has N={}, config has N={}",
                        f.spec().n(),
                        self.n
                    )));
                }
                if !f.flags().div_free {
                    return Err(CliError::config(
                        "datum file is not flagged divergence-free",
                    ));
                }
                return Ok((f, Some(p)));
            }
        };
        Ok((f, None))
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: msg.into(),
        }
    }

    pub fn not_converged(msg: impl Into<String>) -> Self {
        CliError {
            code: EXIT_NOT_CONVERGED,
            message: msg.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged(_) | Error::Inadmissible(_) | Error::BoundViolated(_) => {
                EXIT_NOT_CONVERGED
            }
            _ => EXIT_CONFIG,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::config(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance record written last by every command. `outputs` lists every other
/// file written, with paths relative to the output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub exit_code: i32,
    pub message: Option<String>,
    pub started_unix: u64,
    pub elapsed_seconds: f64,
}

pub const MANIFEST_NAME: &str = "run_manifest.json";

impl RunManifest {
    pub fn read(out_dir: &Path) -> crate::Result<RunManifest> {
        Ok(serde_json::from_str(&fs::read_to_string(
            out_dir.join(MANIFEST_NAME),
        )?)?)
    }
}

/// Collects the files a command writes.
struct OutDir {
    root: PathBuf,
    written: Vec<PathBuf>,
    inputs: Vec<PathBuf>,
}

impl OutDir {
    fn new(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root)
            .map_err(|e| CliError::config(format!("{}: {e}", root.display())))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
            inputs: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        let p = self.root.join(rel);
        fs::write(&p, contents)?;
        self.written.push(p);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.write(rel, &to_json_pretty(value)?)
    }

    fn trajectory(&mut self, stem: &str, traj: &Trajectory) -> Result<(), CliError> {
        self.written
            .extend(write_trajectory(&self.root, stem, traj)?);
        Ok(())
    }

    fn digests(&self, paths: &[PathBuf], relative: bool) -> Result<Vec<FileDigest>, CliError> {
        let mut out = paths
            .iter()
            .map(|p| {
                let shown = if relative {
                    p.strip_prefix(&self.root).unwrap_or(p)
                } else {
                    p.as_path()
                };
                Ok(FileDigest {
                    path: shown.to_string_lossy().replace('\\', "/"),
                    bytes: fs::metadata(p)?.len(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }
}

struct Context {
    command: String,
    config_echo: serde_json::Value,
    started: Instant,
    started_unix: u64,
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("pmns: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        // A pool may already exist when called twice in one process; the cap then stays as first set.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let conv_path = cli
        .global
        .conv_path
        .as_deref()
        .map(str::parse::<ConvPath>)
        .transpose();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut ctx = Context {
        command: String::new(),
        config_echo: serde_json::Value::Null,
        started: Instant::now(),
        started_unix,
    };
    let mut out = OutDir::new(&cli.global.out)?;

    let result = match conv_path.map_err(CliError::from) {
        Err(e) => {
            ctx.command = cli.command.name().into();
            Err(e)
        }
        Ok(conv_path) => match &cli.command {
            Command::Solve | Command::Gevrey => {
                let weighted = matches!(cli.command, Command::Gevrey);
                ctx.command = if weighted { "gevrey" } else { "solve" }.into();
                load_and_solve(&cli.global, conv_path, weighted, &mut ctx, &mut out)
            }
            Command::VerifyLemma { k, policy } => {
                ctx.command = "verify-lemma".into();
                ctx.config_echo = serde_json::json!({ "K": k, "policy": policy });
                cmd_verify_lemma(*k, policy, &mut out)
            }
            Command::Norms {
                traj,
                a,
                mu,
                quadrature,
                ck_a,
            } => {
                ctx.command = "norms".into();
                ctx.config_echo = serde_json::json!({ "traj": traj, "a": a, "mu": mu, "quadrature": quadrature, "ck_a": ck_a });
                cmd_norms(traj, a, *mu, quadrature, *ck_a, &mut out)
            }
            Command::Radius {
                traj,
                mu,
                alpha,
                kappa,
            } => {
                ctx.command = "radius".into();
                ctx.config_echo =
                    serde_json::json!({ "traj": traj, "mu": mu, "alpha": alpha, "kappa": kappa });
                cmd_radius(traj, *mu, *alpha, *kappa, &mut out)
            }
        },
    };
    let (code, message) = match &result {
        Ok(()) => (EXIT_OK, None),
        Err(e) => (e.code, Some(e.message.clone())),
    };
    let manifest = RunManifest {
        tool: "pmns".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: ctx.command,
        config: ctx.config_echo,
        inputs: out.digests(&out.inputs.clone(), false).unwrap_or_default(),
        outputs: out.digests(&out.written.clone(), true)?,
        exit_code: code,
        message,
        started_unix: ctx.started_unix,
        elapsed_seconds: ctx.started.elapsed().as_secs_f64(),
    };
    fs::write(out.root.join(MANIFEST_NAME), to_json_pretty(&manifest)?)?;
    result
}

fn load_and_solve(
    global: &GlobalOpts,
    conv_path: Option<ConvPath>,
    weighted: bool,
    ctx: &mut Context,
    out: &mut OutDir,
) -> Result<(), CliError> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config is required"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    out.inputs.push(path.clone());
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(p) = conv_path {
        cfg.conv_path = p;
    }
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    ctx.config_echo = serde_json::to_value(&cfg).map_err(Error::from)?;
    let base = path.parent().unwrap_or(Path::new("."));
    cmd_solve(&cfg, weighted, base, out)
}

/// Scalar outcome of `solve` / `gevrey`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub command: String,
    pub stop: StopReason,
    pub iterations: usize,
    pub residual: f64,
    pub x0_triple: f64,
    pub final_triple: f64,
    pub eta: f64,
    pub eta_measured: bool,
    pub admissible: bool,
    pub margin: f64,
    pub within_double_x0: bool,
    pub within_ball: bool,
    pub truncated_fraction: f64,
    pub nonlinearity_truncated: bool,
    /// Weighted runs: `‖V‖_{𝒫ℳ²}`.
    pub weighted_st_pm2: Option<f64>,
    /// Weighted runs: whether every judged radius node passed.
    pub radius_all_pass: Option<bool>,
}

fn convergence_csv(r: &ConvergenceReport) -> String {
    let mut c = Csv::new(&["iteration", "triple", "diff", "ratio"]);
    for (i, rec) in r.records.iter().enumerate() {
        c.row(vec![
            (i + 1).to_string(),
            fmt_f64(rec.triple),
            fmt_f64(rec.diff),
            rec.ratio.map(fmt_f64).unwrap_or_default(),
        ]);
    }
    c.into_string()
}

fn norm_report_csv(r: &NormReport) -> String {
    let mut c = Csv::new(&["quantity", "value"]);
    let mut put = |k: &str, v: f64| c.row(vec![k.into(), fmt_f64(v)]);
    put("pm2", r.pm2);
    put("pm4", r.pm4);
    put("st_pm2", r.st_pm2);
    put("z4", r.z4);
    put("z4_tail", r.z4_tail);
    put("triple", r.triple);
    if let (Some(ck), Some(a)) = (r.ck, r.ck_a) {
        put("ck_a", a);
        put("ck", ck);
    }
    c.into_string()
}

fn node_norms_csv(traj: &Trajectory) -> Result<String, CliError> {
    let mut c = Csv::new(&["t", "pm2", "pm4"]);
    for (t, f) in traj.times().iter().zip(traj.fields()) {
        c.row(vec![
            fmt_f64(*t),
            fmt_f64(pm_norm(f, 2.0)?),
            fmt_f64(pm_norm(f, 4.0)?),
        ]);
    }
    Ok(c.into_string())
}

fn radius_csv(p: &RadiusProfile) -> String {
    let mut c = Csv::new(&[
        "t",
        "rho",
        "bound_sqrt",
        "bound_alpha",
        "k_min",
        "k_max",
        "tol",
        "slope_rho",
        "status",
    ]);
    for r in &p.rows {
        c.row(vec![
            fmt_f64(r.t),
            fmt_f64(r.rho),
            fmt_f64(r.bound_sqrt),
            fmt_f64(r.bound_alpha),
            fmt_f64(r.k_min),
            fmt_f64(r.k_max),
            fmt_f64(r.tol),
            r.slope_rho.map(fmt_f64).unwrap_or_default(),
            r.status.to_string(),
        ]);
    }
    c.into_string()
}

fn cmd_solve(
    cfg: &RunConfig,
    weighted: bool,
    base: &Path,
    out: &mut OutDir,
) -> Result<(), CliError> {
    if weighted && cfg.weight == WeightName::None {
        return Err(CliError::config(
            "gevrey needs \"weight\": \"sqrt_t\" or \"alpha_t\"",
        ));
    }
    if !weighted && cfg.weight != WeightName::None {
        return Err(CliError::config(
            "solve runs unweighted; use the gevrey command for a weight",
        ));
    }
    let scfg = cfg.solver_config()?;
    let (v0, datum_path) = cfg.initial_datum(base)?;
    if let Some(p) = datum_path {
        out.inputs.push(p);
    }
    out.json("config.json", cfg)?;
    let solver = Solver::new(&scfg)?;
    let (x, report) = match solver.solve(&v0) {
        Ok(r) => r,
        Err(Error::Diverged(report)) => {
            out.json("convergence.json", &report)?;
            out.write("convergence.csv", &convergence_csv(&report))?;
            return Err(Error::Diverged(report).into());
        }
        Err(e) => return Err(e.into()),
    };
    out.json("convergence.json", &report)?;
    out.write("convergence.csv", &convergence_csv(&report))?;
    let residual = solver.residual(&x, &v0)?;

    // `x` is the weighted unknown V in the gevrey frame; `v` is always the velocity.
    let sched = scfg.schedule()?;
    let v = if weighted {
        gevrey_weight_trajectory(&x, &sched, WeightDirection::Invert)?
    } else {
        x.clone()
    };
    let norms = NormReport::compute(&v, cfg.quadrature, cfg.mu, Some(cfg.ck_a))?;
    out.json("norms.json", &norms)?;
    out.write("norms.csv", &norm_report_csv(&norms))?;
    out.write("node_norms.csv", &node_norms_csv(&v)?)?;
    if cfg.write_trajectory {
        out.trajectory("trajectory", &v)?;
    }

    let (mut weighted_st_pm2, mut radius_all_pass) = (None, None);
    if weighted {
        let wn = NormReport::compute(&x, cfg.quadrature, cfg.mu, None)?;
        weighted_st_pm2 = Some(wn.st_pm2);
        out.json("norms_weighted.json", &wn)?;
        if cfg.write_trajectory {
            out.trajectory("weighted", &x)?;
        }
        let prof = radius_profile(&v, cfg.mu, cfg.alpha, cfg.kappa)?;
        radius_all_pass = Some(prof.all_pass());
        out.json("radius.json", &prof)?;
        out.write("radius.csv", &radius_csv(&prof))?;
    }

    let summary = SolveSummary {
        command: if weighted { "gevrey" } else { "solve" }.into(),
        stop: report.stop,
        iterations: report.iterations(),
        residual,
        x0_triple: report.x0_triple,
        final_triple: report.final_triple(),
        eta: report.eta,
        eta_measured: report.eta_measured,
        admissible: report.admissible,
        margin: report.margin,
        within_double_x0: report.within_double_x0,
        within_ball: report.within_ball,
        truncated_fraction: report.truncated_fraction,
        nonlinearity_truncated: report.nonlinearity_truncated(),
        weighted_st_pm2,
        radius_all_pass,
    };
    out.json("summary.json", &summary)?;
    if report.nonlinearity_truncated() {
        eprintln!("pmns: nonlinearity truncated at 100%");
    }
    if report.stop != StopReason::Converged {
        return Err(CliError::not_converged(format!(
            "no convergence after {} iterations",
            report.iterations()
        )));
    }
    Ok(())
}

/// Summary of `verify-lemma`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaSummary {
    #[serde(rename = "K")]
    pub k_max: u32,
    pub policy: RadiusPolicy,
    pub c_est: f64,
    pub argmax: WaveVector,
    /// `(K', c_est(K'))` for every `K' ≤ K`.
    pub prefix_maxima: Vec<(u32, f64)>,
    pub q2_q3_max_rel_diff: f64,
    /// `l ↦ 24l² + 2` confirmed by enumeration for `l ≤ K`.
    pub shell_counts_ok: bool,
}

fn cmd_verify_lemma(k_max: u32, policy: &str, out: &mut OutDir) -> Result<(), CliError> {
    let policy: RadiusPolicy = policy.parse()?;
    if k_max == 0 {
        return Err(CliError::config("--K must be at least 1"));
    }
    let est = estimate_constant_with_regions(k_max, policy)?;
    let mut c = Csv::new(&[
        "k1", "k2", "k3", "orbit", "R", "S_R", "tail", "scaled", "q1", "q2", "q3", "q4",
    ]);
    let mut q_rel = 0.0f64;
    for r in &est.rows {
        let q = r.regions.expect("requested");
        q_rel = q_rel.max((q.q2 - q.q3).abs() / q.q2.abs().max(q.q3.abs()).max(f64::MIN_POSITIVE));
        let [a, b, cc] = r.k.0;
        c.row(vec![
            a.to_string(),
            b.to_string(),
            cc.to_string(),
            r.orbit.to_string(),
            r.r.to_string(),
            fmt_f64(r.s_r),
            fmt_f64(r.tail),
            fmt_f64(r.scaled),
            fmt_f64(q.q1),
            fmt_f64(q.q2),
            fmt_f64(q.q3),
            fmt_f64(q.q4),
        ]);
    }
    out.write("lemma.csv", c.as_str())?;
    let prefix_maxima = (1..=k_max)
        .filter_map(|kk| est.restricted(kk).map(|(c, _)| (kk, c)))
        .collect();
    let shell_counts_ok = (1..=k_max).all(|l| {
        let enumerated = crate::lattice::shell_points(l)
            .map(|p| p.len() as u64)
            .unwrap_or(0);
        enumerated == shell_count(l) && shell_count(l) == 24 * (l as u64).pow(2) + 2
    });
    let summary = LemmaSummary {
        k_max,
        policy,
        c_est: est.c_est,
        argmax: est.argmax,
        prefix_maxima,
        q2_q3_max_rel_diff: q_rel,
        shell_counts_ok,
    };
    out.json("lemma_summary.json", &summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormsOutput {
    pub report: NormReport,
    pub rows: Vec<NormRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub a: f64,
    /// `‖v(0)‖_{PM^a}`
    pub pm_initial: f64,
    /// `‖v‖_{𝒫ℳ^a}`
    pub st_pm: f64,
    /// `‖v‖_{𝒵^a}` on the grid
    pub z: f64,
    /// grid value plus the heat-decay tail beyond the last node
    pub z_with_tail: f64,
}

fn cmd_norms(
    traj: &Path,
    a_list: &[f64],
    mu: f64,
    quadrature: &str,
    ck_a: f64,
    out: &mut OutDir,
) -> Result<(), CliError> {
    let rule: Quadrature = quadrature.parse()?;
    if a_list.is_empty() {
        return Err(CliError::config("--a needs at least one exponent"));
    }
    out.inputs.push(traj.to_path_buf());
    let t = read_trajectory(traj)?;
    let report = NormReport::compute(&t, rule, mu, Some(ck_a))?;
    let mut rows = Vec::new();
    let mut c = Csv::new(&["a", "pm_initial", "st_pm", "z", "z_with_tail"]);
    for &a in a_list {
        let z = z_norm(&t, a, rule, mu)?;
        let row = NormRow {
            a,
            pm_initial: pm_norm(t.node(0), a)?,
            st_pm: st_pm_norm(&t, a)?,
            z: z.value,
            z_with_tail: z.with_tail,
        };
        c.row(vec![
            fmt_f64(a),
            fmt_f64(row.pm_initial),
            fmt_f64(row.st_pm),
            fmt_f64(row.z),
            fmt_f64(row.z_with_tail),
        ]);
        rows.push(row);
    }
    out.json("norms.json", &NormsOutput { report, rows })?;
    out.write("norms.csv", c.as_str())
}

fn cmd_radius(
    traj: &Path,
    mu: f64,
    alpha: f64,
    kappa: f64,
    out: &mut OutDir,
) -> Result<(), CliError> {
    if !(kappa > 1.0) {
        return Err(CliError::config(format!(
            "--kappa must exceed 1, got {kappa}"
        )));
    }
    out.inputs.push(traj.to_path_buf());
    let t = read_trajectory(traj)?;
    let prof = radius_profile(&t, mu, alpha, kappa)?;
    out.json("radius.json", &prof)?;
    out.write("radius.csv", &radius_csv(&prof))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_in(dir: &Path, args: &[&str]) -> i32 {
        let mut v = vec![
            "pmns".to_string(),
            "--out".into(),
            dir.to_string_lossy().into_owned(),
        ];
        v.extend(args.iter().map(|s| s.to_string()));
        main_with_args(v)
    }

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("config.in.json");
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn config_defaults_and_unknown_keys() {
        let c = RunConfig::parse(
            r#"{"N": 4, "mu": 1.0, "data": {"kind": "taylor_green", "eps": 0.001}}"#,
        )
        .unwrap();
        assert_eq!(c.grid, GridConfig::default());
        assert_eq!(c.tol, 1e-10);
        assert_eq!(c.conv_path, ConvPath::Fast);
        assert!(
            RunConfig::parse(r#"{"N": 4, "mu": 1.0, "data": {"kind": "zero"}, "bogus": 1}"#)
                .is_err()
        );
        assert!(
            RunConfig::parse(r#"{"N": 4, "mu": 1.0, "data": {"kind": "zero", "eps": 1}}"#).is_err()
        );
        assert!(RunConfig::parse(
            r#"{"N": 4, "mu": 1.0, "data": {"kind": "taylor_green", "eps": 1, "x": 2}}"#
        )
        .is_err());
    }

    #[test]
    fn malformed_json_reports_position() {
        let e = RunConfig::parse("{\"N\": 4,\n \"mu\": }").unwrap_err();
        assert_eq!(e.code, EXIT_CONFIG);
        assert!(e.message.contains("line 2"), "{}", e.message);
    }

    #[test]
    fn zero_data_solve() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_config(
            dir.path(),
            r#"{"N": 2, "mu": 1.0, "data": {"kind": "zero"}, "grid": {"t_min": 0.01, "t_max": 1.0, "nodes": 16}}"#,
        );
        let out = dir.path().join("out");
        let code = run_in(&out, &["--config", cfg.to_str().unwrap(), "solve"]);
        assert_eq!(code, EXIT_OK);
        let s: SolveSummary =
            serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(s.stop, StopReason::Converged);
        assert_eq!(s.final_triple, 0.0);
        let traj = read_trajectory(&out.join("trajectory.json")).unwrap();
        assert!(traj.is_zero());
        let m = RunManifest::read(&out).unwrap();
        assert_eq!(m.exit_code, 0);
        assert!(m
            .outputs
            .iter()
            .any(|d| d.path == "trajectory/node_0000.json"));
        assert_eq!(m.inputs.len(), 1);
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let bad = write_config(dir.path(), "{ not json");
        assert_eq!(
            run_in(&out, &["--config", bad.to_str().unwrap(), "solve"]),
            EXIT_CONFIG
        );
        assert_eq!(run_in(&out, &["solve"]), EXIT_CONFIG);
        assert_eq!(
            run_in(&out, &["verify-lemma", "--K", "1", "--policy", "banana"]),
            EXIT_CONFIG
        );
        assert_eq!(
            run_in(&out, &["verify-lemma", "--K", "1", "--policy", "2x"]),
            EXIT_CONFIG
        );
        assert_eq!(
            run_in(&out, &["norms", "--traj", "/nonexistent/traj.json"]),
            EXIT_CONFIG
        );
        assert_eq!(
            run_in(&out, &["--conv-path", "slow", "verify-lemma", "--K", "1"]),
            EXIT_CONFIG
        );
        assert_eq!(run_in(&out, &["no-such-command"]), EXIT_CONFIG);
        let m = RunManifest::read(&out).unwrap();
        assert_eq!(m.exit_code, EXIT_CONFIG);

        let big = write_config(
            dir.path(),
            r#"{"N": 2, "mu": 1.0, "data": {"kind": "taylor_green", "eps": 400.0}, "grid": {"t_min": 0.01, "t_max": 1.0, "nodes": 16}}"#,
        );
        assert_eq!(
            run_in(&out, &["--config", big.to_str().unwrap(), "solve"]),
            EXIT_NOT_CONVERGED
        );
        let huge = write_config(
            dir.path(),
            r#"{"N": 8, "mu": 4.0, "weight": "alpha_t", "data": {"kind": "taylor_green", "eps": 0.001}, "grid": {"t_min": 0.01, "t_max": 1000.0, "nodes": 16}}"#,
        );
        assert_eq!(
            run_in(&out, &["--config", huge.to_str().unwrap(), "gevrey"]),
            EXIT_CONFIG
        );
        let m = RunManifest::read(&out).unwrap();
        assert!(m.message.unwrap().contains("exceeds"));
    }

    #[test]
    fn verify_lemma_small() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("lemma");
        assert_eq!(
            run_in(&out, &["verify-lemma", "--K", "1", "--policy", "8x"]),
            EXIT_OK
        );
        let csv = fs::read_to_string(out.join("lemma.csv")).unwrap();
        // (1,0,0), (1,1,0), (1,1,1) plus the header
        assert_eq!(csv.lines().count(), 4);
        let s: LemmaSummary =
            serde_json::from_str(&fs::read_to_string(out.join("lemma_summary.json")).unwrap())
                .unwrap();
        assert!(s.shell_counts_ok);
        assert!(s.q2_q3_max_rel_diff <= 1e-12);
        assert_eq!(s.prefix_maxima.len(), 1);
    }
}
