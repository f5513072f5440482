//! Batch driver behind the `boltzinv` binary.
//!
//! Every run is described by an [`ExperimentConfig`] (TOML). Named presets
//! are embedded; `--config` is merged on top of the preset, key by key.
//! Exit codes: 0 ok, 1 a check failed, 2 configuration error, 3 numerical
//! divergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{CauchyData, KineticField, RayData, ScalarField};
use crate::io;
use crate::lattice::{next_smooth, Lattice, TimeAxis};
use crate::lightray::{fourier_slice_error, lray_adjoint, lray_with, normal_compose, WeightFunction};
use crate::norm::{l2_inner, rel_l2, L2Inner};
use crate::quadrature::{build_direction_quadrature, DirectionQuadrature};
use crate::reconstruct::{
    backproject, kappa_time, recover_spacelike, stability_report, support_mask, window_error,
    ReconstructionConfig, ReconstructionMode, ReconstructionSummary,
};
use crate::scalar::C64;
use crate::spectral::{ConeClassifier, Spectral, DEFAULT_C_CONV};
use crate::transport::{
    boltzmann_measure, boltzmann_solve, default_chi0, mass_history, measure_ut, scattering_adjoint,
    scattering_apply, AbsorptionField, PhaseFunction, ScatteringKernelField, SolveReport, SourceTerm,
};
use crate::waves::{
    bardeen_solve, cgls, cmb_source, wave_adjoint_solve, wave_solve_periodic, BardeenCoefficients,
    CmbForm, ForwardChain, HyperbolicOperatorSpec, LaplacianSign, PseudoDiffSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "boltzinv", version, about = "Linear Boltzmann forward and inverse source problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment config, merged over the preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub preset: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesise f, solve the transport problem, write u and u_T.
    Forward,
    /// Light ray transform of f plus the Fourier slice check.
    Transform,
    /// Filtered backprojection Q phi(D) L* of u_T.
    Backproject,
    /// Recover the space-like part of kappa f from u_T.
    Reconstruct,
    /// Bardeen solve, CMB source, forward, Cauchy data recovery.
    CmbDemo,
    /// Run the invariant suite and print a pass/fail table.
    Selfcheck {
        /// Multiply the calibration constant (fault injection).
        #[arg(long)]
        fault_c_conv: Option<f64>,
        /// Override the quadrature degree of the degree-dependent checks.
        #[arg(long)]
        degree: Option<usize>,
        /// Run only these checks.
        #[arg(long = "check")]
        checks: Vec<String>,
    },
    /// List the embedded presets.
    Presets,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeConfig {
    pub t_final: f64,
    pub n_t: usize,
    pub box_len: f64,
    pub n_x: usize,
    pub margin: f64,
    /// Padded time length as a multiple of the minimum.
    pub pad_mult: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            t_final: 1.0,
            n_t: 9,
            box_len: 4.0,
            n_x: 16,
            margin: 1.0,
            pad_mult: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub degree: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { degree: 6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Bump,
    File,
}

/// `sin^2(pi t/T) (1 + time_amp cos(omega t)) cos(k_x (x_0 - c_0)) exp(-a r^2/(1-r^2))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub offset: [f64; 3],
    pub radius: f64,
    pub sharpness: f64,
    pub time_amp: f64,
    pub omega: f64,
    pub k_x: f64,
    pub path: Option<PathBuf>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            kind: SourceKind::Bump,
            offset: [0.0; 3],
            radius: 0.9,
            sharpness: 1.5,
            time_amp: 0.0,
            omega: 0.0,
            k_x: 0.0,
            path: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbsorptionKind {
    Zero,
    Constant,
    /// Column sums of the scattering kernel (conservative pair).
    ColumnSums,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbsorptionConfig {
    pub kind: AbsorptionKind,
    pub value: f64,
}

impl Default for AbsorptionConfig {
    fn default() -> Self {
        AbsorptionConfig {
            kind: AbsorptionKind::Zero,
            value: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScatteringKind {
    Zero,
    Isotropic,
    HenyeyGreenstein,
    Linear,
}

/// Kernel `lambda c(x) p(theta . theta')` with `c = amplitude (1 - r^2)^2`,
/// `r = |x - center| / radius`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScatteringConfig {
    pub kind: ScatteringKind,
    pub amplitude: f64,
    pub radius: f64,
    pub g: f64,
    pub lambda: f64,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        ScatteringConfig {
            kind: ScatteringKind::Zero,
            amplitude: 1.0,
            radius: 1.0,
            g: 0.0,
            lambda: 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfigToml {
    pub mode: ReconstructionMode,
    pub tol: f64,
    pub max_iter: usize,
    pub eta: f64,
    pub c_conv: f64,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
}

impl Default for ReconstructConfigToml {
    fn default() -> Self {
        let d = ReconstructionConfig::default();
        ReconstructConfigToml {
            mode: d.mode,
            tol: d.tol,
            max_iter: d.max_iter,
            eta: d.eta,
            c_conv: d.c_conv,
            solver_tol: d.solver_tol,
            solver_max_iter: d.solver_max_iter,
        }
    }
}

impl ReconstructConfigToml {
    fn to_config(&self) -> ReconstructionConfig {
        ReconstructionConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            mode: self.mode,
            eta: self.eta,
            c_conv: self.c_conv,
            solver_tol: self.solver_tol,
            solver_max_iter: self.solver_max_iter,
        }
    }
}

/// Randomised bump family for the stability constant (`samples = 0` is off).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaveData {
    Bump,
    Zero,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveConfig {
    pub data: WaveData,
    /// Radius of the Cauchy data bumps.
    pub radius: f64,
    pub a0: f64,
    pub b0: f64,
    pub laplacian: LaplacianSign,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Compare CG against a dense least-squares solve (micro grids only).
    pub dense_oracle: bool,
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig {
            data: WaveData::Bump,
            radius: 1.0,
            a0: 0.0,
            b0: 0.0,
            laplacian: LaplacianSign::Minus,
            c: 1.0,
            tol: 1e-6,
            max_iter: 500,
            dense_oracle: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksConfig {
    /// Empty means the default suite.
    pub names: Vec<String>,
    pub c_conv_scale: f64,
    pub degree: Option<usize>,
}

impl Default for ChecksConfig {
    fn default() -> Self {
        ChecksConfig {
            names: Vec::new(),
            c_conv_scale: 1.0,
            degree: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub lattice: LatticeConfig,
    pub quadrature: QuadratureConfig,
    pub source: SourceConfig,
    pub absorption: AbsorptionConfig,
    pub scattering: ScatteringConfig,
    pub solver: SolverConfig,
    pub reconstruct: ReconstructConfigToml,
    pub stability: StabilityConfig,
    pub wave: WaveConfig,
    pub checks: ChecksConfig,
}

fn bad(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{key}: {msg}"))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let l = &self.lattice;
        if !(l.t_final > 0.0) {
            return Err(bad("lattice.t_final", "must be > 0"));
        }
        if l.n_t < 2 {
            return Err(bad("lattice.n_t", "must be >= 2"));
        }
        if l.n_x < 4 {
            return Err(bad("lattice.n_x", "must be >= 4"));
        }
        if !(l.box_len > 0.0) {
            return Err(bad("lattice.box_len", "must be > 0"));
        }
        if l.margin < l.t_final {
            return Err(bad("lattice.margin", "must be >= lattice.t_final"));
        }
        if l.pad_mult == 0 {
            return Err(bad("lattice.pad_mult", "must be >= 1"));
        }
        if self.quadrature.degree == 0 {
            return Err(bad("quadrature.degree", "must be >= 1"));
        }
        if !(self.source.radius > 0.0) {
            return Err(bad("source.radius", "must be > 0"));
        }
        if self.source.kind == SourceKind::File && self.source.path.is_none() {
            return Err(bad("source.path", "required when source.kind = \"file\""));
        }
        if !(self.scattering.radius > 0.0) {
            return Err(bad("scattering.radius", "must be > 0"));
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(bad("solver", "need tol > 0 and max_iter >= 1"));
        }
        self.reconstruct
            .to_config()
            .validate()
            .map_err(|e| bad("reconstruct", e))?;
        if !(self.wave.tol > 0.0) || self.wave.max_iter == 0 {
            return Err(bad("wave", "need tol > 0 and max_iter >= 1"));
        }
        if self.wave.c == 0.0 || !self.wave.c.is_finite() {
            return Err(bad("wave.c", "must be finite and non-zero"));
        }
        if !(self.checks.c_conv_scale > 0.0) {
            return Err(bad("checks.c_conv_scale", "must be > 0"));
        }
        for n in &self.checks.names {
            if !CHECKS.contains(&n.as_str()) {
                return Err(bad("checks.names", format!("unknown check `{n}`")));
            }
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<Arc<Lattice>> {
        let l = &self.lattice;
        let base = Lattice::new(l.t_final, l.n_t, l.box_len, l.n_x, l.margin)?;
        if l.pad_mult <= 1 {
            return Ok(Arc::new(base));
        }
        let n = next_smooth(base.n_total() * l.pad_mult);
        Ok(Arc::new(Lattice::with_t_pad(l.t_final, l.n_t, n - l.n_t, l.box_len, l.n_x, l.margin)?))
    }

    pub fn quadrature(&self) -> Result<Arc<DirectionQuadrature>> {
        Ok(Arc::new(build_direction_quadrature(self.quadrature.degree)?))
    }
}

pub const PRESETS: &[(&str, &str)] = &[
    ("pure-transport", include_str!("presets/pure-transport.toml")),
    ("absorbing", include_str!("presets/absorbing.toml")),
    ("scattering", include_str!("presets/scattering.toml")),
    ("free-wave", include_str!("presets/free-wave.toml")),
    ("zero-data", include_str!("presets/zero-data.toml")),
    ("cmb-micro", include_str!("presets/cmb-micro.toml")),
    ("criterion-1", include_str!("presets/criterion-1.toml")),
    ("criterion-2", include_str!("presets/criterion-2.toml")),
    ("criterion-3", include_str!("presets/criterion-3.toml")),
    ("criterion-4", include_str!("presets/criterion-4.toml")),
    ("criterion-5", include_str!("presets/criterion-5.toml")),
    ("criterion-6", include_str!("presets/criterion-6.toml")),
    ("criterion-7", include_str!("presets/criterion-7.toml")),
    ("criterion-8", include_str!("presets/criterion-8.toml")),
    ("criterion-9", include_str!("presets/criterion-9.toml")),
    ("criterion-10", include_str!("presets/criterion-10.toml")),
    ("criterion-11", include_str!("presets/criterion-11.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Preset (if any), then the config file, then `--seed`.
pub fn load_config(preset_name: Option<&str>, path: Option<&Path>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut table = toml::Table::new();
    if let Some(name) = preset_name {
        let text = preset(name).ok_or_else(|| bad("--preset", format!("unknown preset `{name}`")))?;
        let t: toml::Table = toml::from_str(text).map_err(|e| Error::Format(format!("preset {name}: {e}")))?;
        merge(&mut table, t);
    }
    if let Some(p) = path {
        let text = fs::read_to_string(p)?;
        let t: toml::Table = toml::from_str(&text).map_err(|e| bad(&p.display().to_string(), e))?;
        merge(&mut table, t);
    }
    let mut cfg: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| bad("config", e.message()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::Format(_) | Error::SupportViolation(_) | Error::Cfl { .. } => EXIT_CONFIG,
        Error::Divergence { .. } | Error::Stagnation { .. } | Error::NonFinite(_) => EXIT_DIVERGENCE,
        _ => EXIT_CHECK_FAILED,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // a second call in one process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    if let Command::Presets = cli.command {
        for (n, _) in PRESETS {
            println!("{n}");
        }
        return Ok(EXIT_OK);
    }
    let mut cfg = load_config(cli.preset.as_deref(), cli.config.as_deref(), cli.seed)?;
    fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Forward => cmd_forward(&cfg, out).map(|_| EXIT_OK),
        Command::Transform => cmd_transform(&cfg, out).map(|_| EXIT_OK),
        Command::Backproject => cmd_backproject(&cfg, out).map(|_| EXIT_OK),
        Command::Reconstruct => cmd_reconstruct(&cfg, out).map(|_| EXIT_OK),
        Command::CmbDemo => cmd_cmb_demo(&cfg, out).map(|_| EXIT_OK),
        Command::Selfcheck {
            fault_c_conv,
            degree,
            checks,
        } => {
            if let Some(s) = fault_c_conv {
                cfg.checks.c_conv_scale = *s;
            }
            if degree.is_some() {
                cfg.checks.degree = *degree;
            }
            if !checks.is_empty() {
                cfg.checks.names = checks.clone();
            }
            cfg.validate()?;
            let rows = cmd_selfcheck(&cfg, out)?;
            Ok(if rows.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Presets => unreachable!(),
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, s + "\n")?;
    Ok(())
}

fn euclid(x: [f64; 3], c: [f64; 3]) -> f64 {
    ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt()
}

/// `exp(-a r^2 / (1 - r^2))` for `r < 1`, else 0.
fn bump_profile(r: f64, a: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else {
        (-a * r * r / (1.0 - r * r)).exp()
    }
}

pub fn synth_source(cfg: &ExperimentConfig, lat: &Arc<Lattice>) -> Result<ScalarField<f64>> {
    let s = &cfg.source;
    let f = match s.kind {
        SourceKind::File => {
            let f: ScalarField<f64> = io::read_scalar(s.path.as_deref().unwrap())?;
            if *f.lattice != **lat {
                return Err(bad("source.path", "field lattice differs from [lattice]"));
            }
            f.window()
        }
        SourceKind::Bump => {
            let c0 = lat.center();
            let c = [c0[0] + s.offset[0], c0[1] + s.offset[1], c0[2] + s.offset[2]];
            let tf = lat.t_final;
            let s = s.clone();
            ScalarField::from_fn(lat.clone(), TimeAxis::Window, move |t, x| {
                let b = bump_profile(euclid(x, c) / s.radius, s.sharpness);
                if b == 0.0 {
                    return 0.0;
                }
                let st = (std::f64::consts::PI * t / tf).sin();
                st * st * (1.0 + s.time_amp * (s.omega * t).cos()) * (s.k_x * (x[0] - c[0])).cos() * b
            })
        }
    };
    f.check_support()
        .map_err(|e| bad("source", format!("{e} (shrink source.radius or grow lattice.box_len)")))?;
    Ok(f)
}

pub fn synth_absorption(cfg: &ExperimentConfig, lat: &Arc<Lattice>, k: &ScatteringKernelField) -> Result<AbsorptionField> {
    match cfg.absorption.kind {
        AbsorptionKind::Zero => Ok(AbsorptionField::zero(lat.clone())),
        AbsorptionKind::Constant => AbsorptionField::constant(lat.clone(), cfg.absorption.value),
        AbsorptionKind::ColumnSums => k.column_sums(),
    }
}

pub fn synth_scattering(
    cfg: &ExperimentConfig,
    lat: &Arc<Lattice>,
    q: &Arc<DirectionQuadrature>,
) -> Result<ScatteringKernelField> {
    let s = &cfg.scattering;
    let phase = match s.kind {
        ScatteringKind::Zero => return Ok(ScatteringKernelField::zero(lat.clone(), q.clone())),
        ScatteringKind::Isotropic => PhaseFunction::Isotropic,
        ScatteringKind::HenyeyGreenstein => PhaseFunction::HenyeyGreenstein { g: s.g },
        ScatteringKind::Linear => PhaseFunction::Linear { b: s.g },
    };
    let c0 = lat.center();
    let (amp, rad) = (s.amplitude, s.radius);
    let c = ScalarField::from_fn(lat.clone(), TimeAxis::Window, move |_, x| {
        let r = euclid(x, c0) / rad;
        if r >= 1.0 {
            0.0
        } else {
            amp * (1.0 - r * r).powi(2)
        }
    });
    Ok(ScatteringKernelField::factorized(c, phase, q.clone())?.with_lambda(C64::new(s.lambda, 0.0)))
}

struct Setup {
    lat: Arc<Lattice>,
    q: Arc<DirectionQuadrature>,
    f: ScalarField<f64>,
    sigma: AbsorptionField,
    k: ScatteringKernelField,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    let lat = cfg.lattice()?;
    let q = cfg.quadrature()?;
    let f = synth_source(cfg, &lat)?;
    let k = synth_scattering(cfg, &lat, &q)?;
    let sigma = synth_absorption(cfg, &lat, &k)?;
    Ok(Setup { lat, q, f, sigma, k })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ForwardReport {
    pub solve: SolveReport,
    /// Which identity was checked in-run, if any.
    pub identity: Option<String>,
    pub identity_error: Option<f64>,
    pub identity_pass: Option<bool>,
}

pub fn cmd_forward(cfg: &ExperimentConfig, out: &Path) -> Result<ForwardReport> {
    let s = setup(cfg)?;
    let src = SourceTerm::scalar(s.f.clone(), s.q.clone())?;
    let (u, solve) = boltzmann_solve(&src, &s.sigma, &s.k, cfg.solver.tol, cfg.solver.max_iter)?;
    let ut = measure_ut(&u);
    let tf = s.lat.t_final;
    let check = if !s.k.is_zero() {
        None
    } else if s.sigma.is_zero() {
        let lf = lray_with(&s.f, &WeightFunction::Unit, tf, s.q.clone())?;
        Some(("u_T = L f", rel_l2(&ut.values, &lf.values)))
    } else if s.sigma.is_time_only() {
        let w = WeightFunction::measurement(s.sigma.clone());
        let lf = lray_with(&s.f, &w, w.natural_base(&s.lat), s.q.clone())?;
        Some(("u_T = L(kappa f)", rel_l2(&ut.values, &lf.values)))
    } else {
        None
    };
    io::write_scalar(&out.join("f"), &s.f)?;
    io::write_kinetic(&out.join("u"), &u)?;
    io::write_ray(&out.join("u_T"), &ut)?;
    let rep = ForwardReport {
        solve,
        identity: check.map(|c| c.0.to_string()),
        identity_error: check.map(|c| c.1),
        identity_pass: check.map(|c| c.1 <= 1e-10),
    };
    write_json(&out.join("forward.json"), &rep)?;
    println!("forward: {} iterations, converged {}", rep.solve.iterations, rep.solve.converged);
    if let (Some(name), Some(e)) = (&rep.identity, rep.identity_error) {
        println!("check {name}: rel error {e:.3e} ({})", if e <= 1e-10 { "pass" } else { "FAIL" });
    }
    Ok(rep)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TransformReport {
    pub fourier_slice_error: f64,
}

pub fn cmd_transform(cfg: &ExperimentConfig, out: &Path) -> Result<TransformReport> {
    let lat = cfg.lattice()?;
    let q = cfg.quadrature()?;
    let f = synth_source(cfg, &lat)?;
    let lf = lray_with(&f, &WeightFunction::Unit, 0.0, q.clone())?;
    let e = fourier_slice_error(&f, q)?;
    io::write_scalar(&out.join("f"), &f)?;
    io::write_ray(&out.join("lf"), &lf)?;
    let rep = TransformReport { fourier_slice_error: e };
    write_json(&out.join("transform.json"), &rep)?;
    println!("transform: Fourier slice rel error {e:.3e}");
    Ok(rep)
}

/// `u_T` from the output directory, or from a fresh forward run.
fn measurement(cfg: &ExperimentConfig, s: &Setup, out: &Path) -> Result<RayData<f64>> {
    let stem = out.join("u_T");
    if stem.with_extension("json").exists() {
        let ut: RayData<f64> = io::read_ray(&stem)?;
        if *ut.lattice != *s.lat || ut.quadrature.len() != s.q.len() {
            return Err(bad("u_T", "stored measurement does not match [lattice]/[quadrature]"));
        }
        return Ok(ut);
    }
    let src = SourceTerm::scalar(s.f.clone(), s.q.clone())?;
    let (ut, _) = boltzmann_measure(&src, &s.sigma, &s.k, cfg.solver.tol, cfg.solver.max_iter)?;
    io::write_ray(&stem, &ut)?;
    Ok(ut)
}

pub fn cmd_backproject(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let s = setup(cfg)?;
    let ut = measurement(cfg, &s, out)?;
    let m = backproject(&ut, &s.sigma, &cfg.reconstruct.to_config())?;
    io::write_scalar(&out.join("backprojection"), &m)?;
    println!("backproject: wrote {}", out.join("backprojection.bin").display());
    Ok(())
}

/// `phi(D)(kappa f)` for time-only absorption.
fn spacelike_truth(cfg: &ReconstructionConfig, f: &ScalarField<f64>, sigma: &AbsorptionField) -> Result<Option<ScalarField<f64>>> {
    if !sigma.is_time_only() {
        return Ok(None);
    }
    let kappa = kappa_time(sigma)?;
    let dt = f.lattice.dt();
    let mut kf = f.window();
    kf.mul_time(|t| kappa[((t / dt).round() as usize).min(kappa.len() - 1)]);
    let sp = Spectral::new(f.lattice.clone(), ConeClassifier::new(cfg.eta)?).with_c_conv(cfg.c_conv);
    Ok(Some(sp.phi_apply(&kf)?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StabilitySweep {
    pub ratios: Vec<f64>,
    pub max: f64,
    pub min: f64,
}

pub fn cmd_reconstruct(cfg: &ExperimentConfig, out: &Path) -> Result<ReconstructionSummary> {
    let s = setup(cfg)?;
    let rc = cfg.reconstruct.to_config();
    let ut = measurement(cfg, &s, out)?;
    let res = recover_spacelike(&ut, &s.sigma, &s.k, &rc)?;
    let truth = spacelike_truth(&rc, &s.f, &s.sigma)?;
    let err = truth.as_ref().map(|t| window_error(&res.recovered, t));
    io::write_scalar(&out.join("recovered"), &res.recovered)?;
    let summary = ReconstructionSummary {
        mode: rc.mode,
        iterations: res.iterations,
        converged: res.converged,
        residual_history: res.residual_history.clone(),
        stability_ratio: res.stability_ratio,
        error_vs_truth: err,
    };
    write_json(&out.join("reconstruct.json"), &summary)?;
    let mut csv = String::from("iteration,residual\n");
    for (i, r) in res.residual_history.iter().enumerate() {
        let _ = writeln!(csv, "{},{:e}", i + 1, r);
    }
    fs::write(out.join("residuals.csv"), csv)?;
    println!(
        "reconstruct ({:?}): {} iterations, converged {}, stability ratio {:.4e}",
        rc.mode, res.iterations, res.converged, res.stability_ratio
    );
    if let Some(e) = err {
        println!("error vs phi(D)(kappa f): {e:.3e}");
    }
    if cfg.stability.samples > 0 {
        let sweep = stability_sweep(cfg, &s, &rc)?;
        println!(
            "stability over {} samples: max {:.4e}, min {:.4e}",
            sweep.ratios.len(),
            sweep.max,
            sweep.min
        );
        let mut csv = String::from("sample,ratio\n");
        for (i, r) in sweep.ratios.iter().enumerate() {
            let _ = writeln!(csv, "{i},{r:e}");
        }
        fs::write(out.join("stability.csv"), csv)?;
        write_json(&out.join("stability.json"), &sweep)?;
    }
    Ok(summary)
}

fn stability_sweep(cfg: &ExperimentConfig, s: &Setup, rc: &ReconstructionConfig) -> Result<StabilitySweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c0 = s.lat.center();
    let tf = s.lat.t_final;
    let reach = (s.lat.support_radius() - 1.0).clamp(0.0, 0.4);
    let mut ratios = Vec::with_capacity(cfg.stability.samples);
    for _ in 0..cfg.stability.samples {
        let cen = [
            c0[0] + rng.gen_range(-reach..=reach),
            c0[1] + rng.gen_range(-reach..=reach),
            c0[2] + rng.gen_range(-reach..=reach),
        ];
        let r0 = rng.gen_range(0.5..1.0);
        let a = rng.gen_range(0.5..2.0);
        let w = rng.gen_range(0.0..6.0);
        let f = ScalarField::from_fn(s.lat.clone(), TimeAxis::Window, move |t, x| {
            let b = bump_profile(euclid(x, cen) / r0, a);
            let st = (std::f64::consts::PI * t / tf).sin();
            st * st * (1.0 + 0.5 * (w * t).cos()) * b
        });
        let src = SourceTerm::scalar(f.clone(), s.q.clone())?;
        let (ut, _) = boltzmann_measure(&src, &s.sigma, &s.k, cfg.solver.tol, cfg.solver.max_iter)?;
        ratios.push(stability_report(&f, &ut, &s.sigma, rc)?);
    }
    let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(StabilitySweep { ratios, max, min })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CmbReport {
    pub unknowns: usize,
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub recovery_error: f64,
    /// CG vs dense least squares, when requested.
    pub dense_gap: Option<f64>,
}

pub fn cmd_cmb_demo(cfg: &ExperimentConfig, out: &Path) -> Result<CmbReport> {
    let lat = cfg.lattice()?;
    let q = cfg.quadrature()?;
    let w = &cfg.wave;
    let c = lat.center();
    let truth = match w.data {
        WaveData::Zero => CauchyData::zeros(lat.clone()),
        WaveData::Bump => {
            let r = w.radius;
            CauchyData::from_fn(
                lat.clone(),
                |x| C64::new(bump_profile(euclid(x, c) / r, 1.0), 0.0),
                |x| C64::new(0.5 * (x[0] - c[0]) * bump_profile(euclid(x, c) / r, 2.0), 0.0),
            )
        }
    };
    let coeffs = BardeenCoefficients::constant(&lat, w.a0, w.b0);
    let k = synth_scattering(cfg, &lat, &q)?;
    let sigma = synth_absorption(cfg, &lat, &k)?;
    let chi0 = default_chi0(&lat);

    // Psi = Phi, no B term: the scalar source is C d_t Psi
    let mut psi = bardeen_solve(&coeffs, &truth, w.laplacian)?;
    // spectral Laplacian tails leak past the support ball; the recovery
    // chain drops them the same way
    let mask = support_mask(&lat);
    let ns = lat.n_space();
    for (i, v) in psi.values.iter_mut().enumerate() {
        *v *= mask[i % ns];
    }
    let src = cmb_source(&psi, &psi, None, CmbForm::Boltz4, w.c, q.clone())?.with_cutoff(chi0.clone())?;
    let (mut ut, _) = boltzmann_measure(&src, &sigma, &k, cfg.solver.tol, cfg.solver.max_iter)?;
    ut.values.iter_mut().for_each(|v| *v *= 1.0 / w.c);

    let spec = coeffs.to_spec::<C64>(w.laplacian);
    let ad = PseudoDiffSpec::dt();
    let chain = ForwardChain::new(
        lat.clone(),
        &spec,
        &ad,
        &sigma,
        &k,
        chi0,
        q.clone(),
        cfg.solver.tol,
        cfg.solver.max_iter,
    )?;
    let (d, rep) = cgls(&chain, &ut, w.tol, w.max_iter)?;
    let mut masked = truth.clone();
    chain.restrict_data(&mut masked);
    let err = crate::waves::cauchy_rel_error(&d, &masked);
    let gap = if w.dense_oracle {
        Some(dense_gap(&chain, &ut, &d, &q)?)
    } else {
        None
    };
    io::write_cauchy(&out.join("cauchy_true"), &truth)?;
    io::write_cauchy(&out.join("cauchy_recovered"), &d)?;
    let report = CmbReport {
        unknowns: chain.n_unknowns(),
        iterations: rep.iterations,
        converged: rep.converged,
        residual_history: rep.residual_history,
        recovery_error: err,
        dense_gap: gap,
    };
    let mut csv = String::from("iteration,residual\n");
    for (i, r) in report.residual_history.iter().enumerate() {
        let _ = writeln!(csv, "{},{:e}", i + 1, r);
    }
    fs::write(out.join("cmb_residuals.csv"), csv)?;
    write_json(&out.join("cmb.json"), &report)?;
    println!(
        "cmb-demo: {} unknowns, CG {} iterations, Cauchy data rel error {:.3e}",
        report.unknowns, report.iterations, report.recovery_error
    );
    if let Some(g) = gap {
        println!("dense least-squares gap {g:.3e}");
    }
    Ok(report)
}

/// Relative gap between `d` and the dense least-squares solution of the
/// chain restricted to the data ball, in the weighted pairing of the data.
fn dense_gap(chain: &ForwardChain<'_>, ut: &RayData<C64>, d: &CauchyData<C64>, q: &DirectionQuadrature) -> Result<f64> {
    let lat = &chain.lattice;
    let ns = lat.n_space();
    let cols: Vec<usize> = (0..2 * ns).filter(|&c| chain.data_mask()[c % ns]).collect();
    if cols.len() > 2000 {
        return Err(bad("wave.dense_oracle", format!("{} unknowns is too many for a dense solve", cols.len())));
    }
    let rows = q.len() * ns;
    let dv = lat.dx().powi(3);
    let wts: Vec<f64> = q.weights.iter().map(|w| (w * dv).sqrt()).collect();
    let mut a = DMatrix::<C64>::zeros(rows, cols.len());
    for (ci, &c) in cols.iter().enumerate() {
        let mut e = CauchyData::zeros(lat.clone());
        if c < ns {
            e.f1[c] = C64::new(1.0, 0.0);
        } else {
            e.f2[c - ns] = C64::new(1.0, 0.0);
        }
        let g = chain.apply(&e)?;
        for (j, w) in wts.iter().enumerate() {
            for s in 0..ns {
                a[(j * ns + s, ci)] = g.dir(j)[s] * *w;
            }
        }
    }
    let mut b = DVector::<C64>::zeros(rows);
    for (j, w) in wts.iter().enumerate() {
        for s in 0..ns {
            b[j * ns + s] = ut.dir(j)[s] * *w;
        }
    }
    let x = a
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|e| Error::NonFinite(e.to_string()))?;
    let (mut num, mut den) = (0.0, 0.0);
    for (ci, &c) in cols.iter().enumerate() {
        let got = if c < ns { d.f1[c] } else { d.f2[c - ns] };
        num += (got - x[ci]).norm_sqr();
        den += x[ci].norm_sqr();
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

pub const CHECKS: &[&str] = &[
    "adjoint",
    "fourier-slice",
    "projector-idempotence",
    "qn-phi",
    "multiplier-vs-composition",
    "mass-balance",
    "scattering-moments",
    "kappa-transform",
    "timelike-invisibility",
];

/// Run when no names are given.
pub const DEFAULT_CHECKS: &[&str] = &[
    "adjoint",
    "fourier-slice",
    "projector-idempotence",
    "qn-phi",
    "multiplier-vs-composition",
    "scattering-moments",
    "mass-balance",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
    pub detail: String,
}

fn row(name: &str, value: f64, tol: f64, detail: String) -> CheckRow {
    CheckRow {
        name: name.into(),
        value,
        tol,
        pass: value.is_finite() && value <= tol,
        detail,
    }
}

fn lat(tf: f64, nt: usize, nx: usize, margin: f64, mult: usize) -> Result<Arc<Lattice>> {
    let base = Lattice::new(tf, nt, 4.0, nx, margin)?;
    if mult <= 1 {
        return Ok(Arc::new(base));
    }
    let n = next_smooth(base.n_total() * mult);
    Ok(Arc::new(Lattice::with_t_pad(tf, nt, n - nt, 4.0, nx, margin)?))
}

fn centered_bump(lat: &Arc<Lattice>, r0: f64, a: f64) -> ScalarField<f64> {
    let c = lat.center();
    let tf = lat.t_final;
    ScalarField::from_fn(lat.clone(), TimeAxis::Window, move |t, x| {
        let st = (std::f64::consts::PI * t / tf).sin();
        st * st * bump_profile(euclid(x, c) / r0, a)
    })
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn check_adjoint(seed: u64, degree: usize) -> Result<Vec<CheckRow>> {
    let lat = lat(1.0, 24, 24, 1.0, 1)?;
    let q = Arc::new(build_direction_quadrature(degree)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = lat.n_space();
    let mask = support_mask(&lat);
    let f = ScalarField::from_values(
        lat.clone(),
        TimeAxis::Window,
        (0..ns * lat.n_t).map(|i| mask[i % ns] * rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let g = RayData::from_values(lat.clone(), q.clone(), 0.0, (0..ns * q.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let e_l = rel_gap(
        l2_inner(&lray_with(&f, &WeightFunction::Unit, 0.0, q.clone())?, &g)?,
        l2_inner(&f, &lray_adjoint(&g, &WeightFunction::Unit, TimeAxis::Window)?)?,
    );
    let c0 = lat.center();
    let c = ScalarField::from_fn(lat.clone(), TimeAxis::Window, move |_, x| {
        let r = euclid(x, c0);
        if r < 1.0 {
            1.0 - r * r
        } else {
            0.0
        }
    });
    let k = ScatteringKernelField::factorized(c, PhaseFunction::HenyeyGreenstein { g: 0.3 }, q.clone())?;
    let n = ns * lat.n_t * q.len();
    let u = KineticField::from_values(lat.clone(), q.clone(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let v = KineticField::from_values(lat.clone(), q.clone(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let ku = l2_inner(&scattering_apply(&k, &u)?, &v)?;
    let e_k = rel_gap(ku, l2_inner(&u, &scattering_adjoint(&k, &v)?)?);
    drop((u, v));
    let d = CauchyData::new(
        lat.clone(),
        (0..ns).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        (0..ns).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )?;
    let spec = HyperbolicOperatorSpec::<f64>::free();
    let e_w = rel_gap(
        l2_inner(&wave_solve_periodic(&spec, &d)?, &f)?,
        l2_inner(&d, &wave_adjoint_solve(&spec, &f)?)?,
    );
    let det = format!("n_x=24, n_t=24, degree {degree}");
    Ok(vec![
        row("adjoint-lray", e_l, 1e-8, det.clone()),
        row("adjoint-scattering", e_k, 1e-8, det.clone()),
        row("adjoint-wave", e_w, 1e-8, det),
    ])
}

fn check_slice(degree: usize) -> Result<CheckRow> {
    let lat = lat(0.25, 17, 32, 0.25, 1)?;
    let q = Arc::new(build_direction_quadrature(degree)?);
    let f = centered_bump(&lat, 1.75, 1.5);
    let e = fourier_slice_error(&f, q)?;
    Ok(row("fourier-slice", e, 1e-2, format!("n_x=32, degree {degree}")))
}

fn check_spectral(seed: u64) -> Result<(CheckRow, CheckRow)> {
    let lat = lat(1.0, 9, 12, 1.0, 1)?;
    let sp = Spectral::new(lat.clone(), ConeClassifier::default());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = lat.n_total() * lat.n_space();
    let f = ScalarField::from_values(lat.clone(), TimeAxis::Padded, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let f = sp.remove_spatial_mean(&f);
    let pf = sp.phi_apply(&f)?;
    let idem = rel_l2(&sp.phi_apply(&pf)?.values, &pf.values);
    let qn = rel_l2(&sp.q_apply(&sp.n_multiplier_apply(&pf)?)?.values, &pf.values);
    let det = "random mean-free field, n_x=12".to_string();
    Ok((row("projector-idempotence", idem, 1e-12, det.clone()), row("qn-phi", qn, 1e-12, det)))
}

fn check_composition(degree: usize, scale: f64) -> Result<CheckRow> {
    let lat = lat(0.5, 17, 32, 0.5, 2)?;
    let q = Arc::new(build_direction_quadrature(degree)?);
    let f = centered_bump(&lat, 1.5, 1.0);
    let sp = Spectral::new(lat.clone(), ConeClassifier::default()).with_c_conv(DEFAULT_C_CONV * scale);
    let mean_free = |g: &ScalarField<f64>| sp.remove_spatial_mean(&g.padded()).window();
    let nf = mean_free(&normal_compose(&f, &WeightFunction::Unit, q)?);
    let m = mean_free(&sp.n_multiplier_apply(&f)?);
    let e = rel_l2(&m.values, &nf.values);
    Ok(row(
        "multiplier-vs-composition",
        e,
        0.05,
        format!("n_x=32, degree {degree}, c_conv = {scale} x 4pi^2"),
    ))
}

fn check_mass(degree: usize) -> Result<CheckRow> {
    let lat = lat(1.0, 17, 16, 1.0, 1)?;
    let q = Arc::new(build_direction_quadrature(degree)?);
    let f = centered_bump(&lat, 0.9, 1.0);
    let c0 = lat.center();
    let c = ScalarField::from_fn(lat.clone(), TimeAxis::Window, move |_, x| {
        let r = euclid(x, c0);
        if r >= 1.0 {
            0.0
        } else {
            (1.0 - r * r).powi(2)
        }
    });
    let k = ScatteringKernelField::factorized(c, PhaseFunction::Isotropic, q.clone())?;
    let sigma = k.column_sums()?;
    let (u, _) = boltzmann_solve(&SourceTerm::scalar(f.clone(), q)?, &sigma, &k, 1e-13, 200)?;
    let mass = mass_history(&u);
    let (dt, dv) = (lat.dt(), lat.dx().powi(3));
    let rate: Vec<f64> = (0..lat.n_t)
        .map(|t| 4.0 * std::f64::consts::PI * f.slice(t).iter().sum::<f64>() * dv)
        .collect();
    let scale = mass.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let drift = (0..lat.n_t - 1)
        .map(|t| ((mass[t + 1] - mass[t]) - 0.5 * dt * (rate[t] + rate[t + 1])).abs() / scale)
        .fold(0.0f64, f64::max);
    Ok(row("mass-balance", drift, 1e-6, format!("sigma = column sums, n_x=16, n_t=17, degree {degree}")))
}

/// Henyey-Greenstein moments: `K (1 + theta_z) = c (1 + g theta_z)` exactly,
/// so the gap is pure sphere quadrature error (it decays like `g^degree`).
fn check_moments(degree: usize) -> Result<CheckRow> {
    let lat = lat(1.0, 2, 8, 1.0, 1)?;
    let q = Arc::new(build_direction_quadrature(degree)?);
    let g = 0.3;
    let c0 = lat.center();
    let c = ScalarField::from_fn(lat.clone(), TimeAxis::Window, move |_, x| {
        let r = euclid(x, c0);
        if r < 1.0 {
            1.0 - r * r
        } else {
            0.0
        }
    });
    let k = ScatteringKernelField::factorized(c.clone(), PhaseFunction::HenyeyGreenstein { g }, q.clone())?;
    let u = KineticField::from_fn(lat.clone(), q.clone(), |_, _, th| 1.0 + th[2]);
    let want = KineticField::from_fn(lat.clone(), q.clone(), |_, _, th| 1.0 + g * th[2]);
    let got = scattering_apply(&k, &u)?;
    let ns = lat.n_space();
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..q.len() {
        for t in 0..lat.n_t {
            let (a, b, cs) = (got.slice(j, t), want.slice(j, t), c.slice(t));
            for s in 0..ns {
                num += q.weights[j] * (a[s] - cs[s] * b[s]).powi(2);
                den += q.weights[j] * (cs[s] * b[s]).powi(2);
            }
        }
    }
    Ok(row(
        "scattering-moments",
        (num / den).sqrt(),
        1e-10,
        format!("Henyey-Greenstein g = {g}, degree {degree}"),
    ))
}

fn check_kappa_transform(degree: usize) -> Result<CheckRow> {
    let lat = lat(1.0, 17, 32, 1.0, 1)?;
    let q = Arc::new(build_direction_quadrature(degree)?);
    let mut kf = centered_bump(&lat, 0.9, 1.5);
    kf.mul_time(|t| (-0.5 * (1.0 - t)).exp());
    let fp = kf.padded();
    let sp = Spectral::new(lat.clone(), ConeClassifier::new(0.4)?);
    let a = lray_with(&fp, &WeightFunction::Unit, 0.0, q.clone())?;
    let b = lray_with(&sp.phi_apply(&fp)?, &WeightFunction::Unit, 0.0, q)?;
    Ok(row(
        "kappa-transform",
        rel_l2(&b.values, &a.values),
        1e-2,
        format!("L(kappa f) vs L(phi(D) kappa f), sigma = 0.5, eta = 0.4, degree {degree}"),
    ))
}

/// Ratio of backprojected norms, time-like over space-like source.
fn check_timelike(degree: usize) -> Result<CheckRow> {
    let lat = lat(1.0, 33, 24, 1.0, 1)?;
    let q = Arc::new(build_direction_quadrature(degree)?);
    let c = lat.center();
    let sigma = AbsorptionField::zero(lat.clone());
    let k = ScatteringKernelField::zero(lat.clone(), q.clone());
    let mut ratio = [0.0; 2];
    for (i, spacelike) in [false, true].into_iter().enumerate() {
        let f = ScalarField::from_fn(lat.clone(), TimeAxis::Window, move |t, x| {
            let st = (std::f64::consts::PI * t).sin();
            let b = st * st * bump_profile(euclid(x, c) / 0.95, 1.0);
            if spacelike {
                b * (10.0 * (x[0] - c[0])).cos()
            } else {
                b * (30.0 * t).cos()
            }
        });
        let (ut, _) = boltzmann_measure(&SourceTerm::scalar(f.clone(), q.clone())?, &sigma, &k, 1e-10, 10)?;
        ratio[i] = lray_adjoint(&ut, &WeightFunction::Unit, TimeAxis::Window)?.l2_norm() / f.l2_norm();
    }
    Ok(row(
        "timelike-invisibility",
        ratio[0] / ratio[1],
        0.1,
        format!("timelike {:.3e} vs spacelike {:.3e}, degree {degree}", ratio[0], ratio[1]),
    ))
}

pub fn cmd_selfcheck(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CheckRow>> {
    let names: Vec<&str> = if cfg.checks.names.is_empty() {
        DEFAULT_CHECKS.to_vec()
    } else {
        cfg.checks.names.iter().map(String::as_str).collect()
    };
    let deg = |d: usize| cfg.checks.degree.unwrap_or(d);
    let mut rows = Vec::new();
    let mut spectral = None;
    for name in names {
        match name {
            "adjoint" => rows.extend(check_adjoint(cfg.seed, deg(12))?),
            "fourier-slice" => rows.push(check_slice(deg(8))?),
            "projector-idempotence" | "qn-phi" => {
                if spectral.is_none() {
                    spectral = Some(check_spectral(cfg.seed)?);
                }
                let (a, b) = spectral.clone().unwrap();
                rows.push(if name == "qn-phi" { b } else { a });
            }
            "multiplier-vs-composition" => rows.push(check_composition(deg(16), cfg.checks.c_conv_scale)?),
            "mass-balance" => rows.push(check_mass(deg(4))?),
            "scattering-moments" => rows.push(check_moments(deg(12))?),
            "kappa-transform" => rows.push(check_kappa_transform(deg(8))?),
            "timelike-invisibility" => rows.push(check_timelike(deg(8))?),
            other => return Err(bad("checks.names", format!("unknown check `{other}`"))),
        }
    }
    println!("{:<28} {:>10} {:>10}  {:<6} detail", "check", "value", "tol", "result");
    let mut csv = String::from("check,value,tol,pass\n");
    for r in &rows {
        println!(
            "{:<28} {:>10.3e} {:>10.1e}  {:<6} {}",
            r.name,
            r.value,
            r.tol,
            if r.pass { "pass" } else { "FAIL" },
            r.detail
        );
        let _ = writeln!(csv, "{},{:e},{:e},{}", r.name, r.value, r.tol, r.pass);
    }
    fs::write(out.join("selfcheck.csv"), csv)?;
    write_json(&out.join("selfcheck.json"), &rows)?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        println!("all {} checks pass", rows.len());
    } else {
        println!("failed: {}", failed.join(", "));
    }
    Ok(rows)
}
