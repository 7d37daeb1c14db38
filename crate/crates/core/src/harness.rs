//! Command-line harness: reproducible end-to-end experiments over JSON
//! configs, emitting JSON/CSV artifacts that embed their full config.
//!
//! Exit codes: 0 success, 1 config error, 2 resonance abort (a build or a
//! scan that hit near-resonant multisets), 3 blow-up guard.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::basis::{StateRecord, StateVector};
use crate::error::{CoreError, Result};
use crate::family::{build_pseudonorm, drift_rate, pseudonorm_eval, DEFAULT_RES_TOL};
use crate::fitting::{fit_loglog, fixed_slope_constant, LogLogFit};
use crate::flow::{integrate, FlowStatus, IntegrateOptions};
use crate::jsonio::{family_from_json, family_to_json, model_to_json, FamilyJson, ScanJson};
use crate::lie::time_derivative_value;
use crate::models::{
    build_coupled_nls_model, build_nls_model, scan_nonresonance, CoupledTerm, ModelSpec,
    NonlinearitySpec, OmegaConvention, Potential,
};
use crate::selftest;

#[derive(Parser, Debug)]
#[command(
    name = "revnorm",
    about = "Almost-invariant pseudo norms for truncated reversible spectral systems",
    version
)]
pub struct Cli {
    /// JSON experiment config (see docs/config.schema.json).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory for emitted files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Override the model seed(s) from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for the resonance scan (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compile the configured model and write model.json.
    Model,
    /// Build the pseudo-norm family and write family.json.
    Build,
    /// Scan the frequency map for near-resonances; write report + CSV.
    Scan,
    /// Evaluate a stored family at a stored state.
    Eval {
        /// family.json written by `build`.
        #[arg(long)]
        family: PathBuf,
        /// State vector JSON (array of {a, delta, species, re, im}).
        #[arg(long)]
        state: PathBuf,
    },
    /// Scaling scan of |drift| and |N - eps^2| over a geometric eps grid.
    DriftScan,
    /// Long-horizon integration tracking ||z||_s and N(z).
    Stability,
    /// Run the built-in oracle and invariant checks.
    Selftest {
        /// Corrupt one solved coefficient first (detection fixture).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub build: Option<BuildConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_scan: Option<DriftScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Nls {
        d: usize,
        k: i32,
        potential: Potential,
        nonlinearity: NonlinearitySpec,
        #[serde(default)]
        omega_convention: OmegaConvention,
    },
    CoupledNls {
        d: usize,
        k: i32,
        potentials: Vec<Potential>,
        g1: Vec<CoupledTerm>,
        g2: Vec<CoupledTerm>,
        #[serde(default)]
        omega_convention: OmegaConvention,
    },
}

fn default_res_tol() -> f64 {
    DEFAULT_RES_TOL
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildConfig {
    pub s: f64,
    pub r: usize,
    #[serde(default = "default_res_tol")]
    pub res_tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub r: usize,
    pub threshold: f64,
}

fn default_points() -> usize {
    8
}

fn default_ratio() -> f64 {
    std::f64::consts::SQRT_2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftScanConfig {
    pub eps_min: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    pub direction_seed: u64,
}

fn default_stride() -> usize {
    2000
}

fn default_ceiling_factor() -> f64 {
    10.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub eps: f64,
    /// Horizon exponent: `T = min(eps^-r_eff, t_max)`. Defaults to the
    /// build order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_eff: Option<usize>,
    pub t_max: f64,
    pub dt: f64,
    pub z0_seed: u64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    #[serde(default = "default_ceiling_factor")]
    pub ceiling_factor: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_estimate_prefix: Option<f64>,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Config = serde_json::from_str(&text)
            .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// `--seed N` replaces uniform-potential seeds (N for the first
    /// species, N+1 for the second).
    pub fn apply_seed_override(&mut self, seed: u64) {
        match &mut self.model {
            ModelConfig::Nls { potential, .. } => {
                if let Potential::Uniform { seed: s } = potential {
                    *s = seed;
                }
            }
            ModelConfig::CoupledNls { potentials, .. } => {
                for (i, p) in potentials.iter_mut().enumerate() {
                    if let Potential::Uniform { seed: s } = p {
                        *s = seed + i as u64;
                    }
                }
            }
        }
    }

    pub fn build_model(&self) -> Result<ModelSpec> {
        match &self.model {
            ModelConfig::Nls {
                d,
                k,
                potential,
                nonlinearity,
                omega_convention,
            } => build_nls_model(*d, *k, potential.clone(), nonlinearity, *omega_convention),
            ModelConfig::CoupledNls {
                d,
                k,
                potentials,
                g1,
                g2,
                omega_convention,
            } => {
                if potentials.len() != 2 {
                    return Err(CoreError::Config(format!(
                        "coupled model needs exactly 2 potentials, got {}",
                        potentials.len()
                    )));
                }
                build_coupled_nls_model(
                    *d,
                    *k,
                    (potentials[0].clone(), potentials[1].clone()),
                    g1,
                    g2,
                    *omega_convention,
                )
            }
        }
    }

    pub fn build_section(&self) -> Result<&BuildConfig> {
        self.build
            .as_ref()
            .ok_or_else(|| CoreError::Config("missing config section `build`".into()))
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn config_comment(config: &Config) -> String {
    format!("# config: {}\n", serde_json::to_string(config).unwrap())
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    config: &'a Config,
    #[serde(flatten)]
    payload: T,
}

#[derive(Serialize)]
struct ModelEnvelope {
    model: crate::jsonio::ModelJson,
}

#[derive(Serialize)]
struct FamilyEnvelope {
    family: FamilyJson,
}

#[derive(Deserialize)]
struct FamilyEnvelopeIn {
    family: FamilyJson,
}

#[derive(Serialize)]
struct ScanEnvelope {
    scan: ScanJson,
}

#[derive(Serialize)]
struct ResonanceAbortEnvelope {
    order: usize,
    report: crate::family::ResonanceReport,
}

#[derive(Serialize)]
struct DriftFits {
    r: usize,
    drift: Option<LogLogFit>,
    norm_gap: Option<LogLogFit>,
    /// Constant of the pinned power law `|drift| = C eps^{r+1}`.
    drift_constant_pinned: Option<f64>,
}

#[derive(Serialize)]
struct StabilitySummary {
    t_end: f64,
    eps: f64,
    sup_norm_ratio: f64,
    n_initial: f64,
    n_final: f64,
    delta_n: f64,
    error_estimate: Option<f64>,
    /// Median over samples of |d/dt ||z||_s^2| / |d/dt N| (how much better
    /// an invariant the pseudo norm is than the bare norm).
    plain_vs_pseudo_rate_ratio: Option<f64>,
    completed: bool,
}

pub fn run(cli: Cli) -> i32 {
    if let Some(threads) = cli.threads {
        // ignore failure when a pool already exists (tests call run twice)
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CoreError::Resonance { .. } => 2,
                CoreError::BlowUp { .. } => 3,
                _ => 1,
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CoreError::Config("--config is required for this command".into()))?;
    let mut cfg = Config::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.apply_seed_override(seed);
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Model => {
            let cfg = load_config(cli)?;
            let model = cfg.build_model()?;
            let path = write_json(
                &cli.out,
                "model.json",
                &Wrapped {
                    config: &cfg,
                    payload: ModelEnvelope {
                        model: model_to_json(&model),
                    },
                },
            )?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Build => {
            let cfg = load_config(cli)?;
            let model = cfg.build_model()?;
            let build = cfg.build_section()?;
            match build_pseudonorm(
                model.fields(),
                model.omega(),
                build.s,
                build.r,
                build.res_tol,
            ) {
                Ok(fam) => {
                    let path = write_json(
                        &cli.out,
                        "family.json",
                        &Wrapped {
                            config: &cfg,
                            payload: FamilyEnvelope {
                                family: family_to_json(&fam),
                            },
                        },
                    )?;
                    println!("wrote {}", path.display());
                    Ok(0)
                }
                Err(CoreError::Resonance { order, report }) => {
                    let path = write_json(
                        &cli.out,
                        "resonance_report.json",
                        &Wrapped {
                            config: &cfg,
                            payload: ResonanceAbortEnvelope {
                                order,
                                report: report.clone(),
                            },
                        },
                    )?;
                    eprintln!(
                        "resonance abort at order {order}: {} multisets below {:.1e} \
                         (report: {})",
                        report.total_found,
                        report.threshold,
                        path.display()
                    );
                    for entry in report.violations.iter().take(8) {
                        let modes: Vec<String> =
                            entry.modes.iter().map(|m| m.to_string()).collect();
                        eprintln!(
                            "  {{{}}}  Omega = {:.3e}",
                            modes.join(", "),
                            entry.omega_sum
                        );
                    }
                    Ok(2)
                }
                Err(e) => Err(e),
            }
        }
        Command::Scan => {
            let cfg = load_config(cli)?;
            let model = cfg.build_model()?;
            let scan_cfg = cfg
                .scan
                .as_ref()
                .ok_or_else(|| CoreError::Config("missing config section `scan`".into()))?;
            let outcome = scan_nonresonance(model.omega(), scan_cfg.r, scan_cfg.threshold);
            let mut csv = config_comment(&cfg);
            csv.push_str("mu_sq,min_abs_omega,count\n");
            for b in &outcome.buckets {
                let _ = writeln!(csv, "{},{},{}", b.mu_sq, b.min_abs, b.count);
            }
            write_text(&cli.out, "resonance_buckets.csv", &csv)?;
            let path = write_json(
                &cli.out,
                "resonance_report.json",
                &Wrapped {
                    config: &cfg,
                    payload: ScanEnvelope {
                        scan: ScanJson {
                            r: scan_cfg.r,
                            threshold: scan_cfg.threshold,
                            report: outcome.report.clone(),
                            fit: outcome.fit,
                            buckets: outcome.buckets.clone(),
                        },
                    },
                },
            )?;
            println!(
                "wrote {} (min |Omega| = {:.3e}, gamma = {:.3e}, alpha = {}, {} resonant)",
                path.display(),
                outcome.report.min_divisor,
                outcome.fit.gamma,
                outcome.fit.alpha,
                outcome.report.total_found
            );
            Ok(if outcome.report.total_found > 0 { 2 } else { 0 })
        }
        Command::Eval { family, state } => {
            let text = std::fs::read_to_string(family)?;
            let envelope: FamilyEnvelopeIn = serde_json::from_str(&text)
                .map_err(|e| CoreError::Config(format!("{}: {e}", family.display())))?;
            let fam = family_from_json(&envelope.family)?;
            let records: Vec<StateRecord> = serde_json::from_str(&std::fs::read_to_string(state)?)
                .map_err(|e| CoreError::Config(format!("{}: {e}", state.display())))?;
            let z = StateVector::from_records(fam.basis().clone(), &records)?;
            let value = pseudonorm_eval(&fam, &z)?;
            let norm = z.sobolev_norm(fam.s());
            println!(
                "{}",
                serde_json::json!({
                    "pseudo_norm": value,
                    "sobolev_norm_sq": norm * norm,
                })
            );
            Ok(0)
        }
        Command::DriftScan => {
            let cfg = load_config(cli)?;
            let model = cfg.build_model()?;
            let build = cfg.build_section()?;
            let scan_cfg = cfg
                .drift_scan
                .as_ref()
                .ok_or_else(|| CoreError::Config("missing config section `drift_scan`".into()))?;
            let fam = build_pseudonorm(
                model.fields(),
                model.omega(),
                build.s,
                build.r,
                build.res_tol,
            )?;
            let zhat = StateVector::random_real(
                model.basis().clone(),
                build.s,
                1.0,
                scan_cfg.direction_seed,
            );
            let mut eps_col = Vec::new();
            let mut drift_col = Vec::new();
            let mut gap_col = Vec::new();
            let mut eps = scan_cfg.eps_min;
            for _ in 0..scan_cfg.points {
                let z = zhat.scaled(eps);
                drift_col.push(drift_rate(&fam, model.omega(), model.fields(), &z)?.abs());
                gap_col.push((pseudonorm_eval(&fam, &z)? - eps * eps).abs());
                eps_col.push(eps);
                eps *= scan_cfg.ratio;
            }
            let mut csv = config_comment(&cfg);
            csv.push_str("eps,abs_drift,abs_norm_gap\n");
            for i in 0..eps_col.len() {
                let _ = writeln!(csv, "{},{},{}", eps_col[i], drift_col[i], gap_col[i]);
            }
            write_text(&cli.out, "drift_scan.csv", &csv)?;
            let fits = DriftFits {
                r: build.r,
                drift: fit_loglog(&eps_col, &drift_col, true),
                norm_gap: fit_loglog(&eps_col, &gap_col, true),
                drift_constant_pinned: fixed_slope_constant(
                    &eps_col,
                    &drift_col,
                    (build.r + 1) as f64,
                ),
            };
            let path = write_json(
                &cli.out,
                "drift_scan.json",
                &Wrapped {
                    config: &cfg,
                    payload: fits,
                },
            )?;
            let fits_text = std::fs::read_to_string(&path)?;
            println!("{fits_text}");
            Ok(0)
        }
        Command::Stability => {
            let cfg = load_config(cli)?;
            let model = cfg.build_model()?;
            let build = cfg.build_section()?;
            let st = cfg
                .stability
                .as_ref()
                .ok_or_else(|| CoreError::Config("missing config section `stability`".into()))?;
            let fam = build_pseudonorm(
                model.fields(),
                model.omega(),
                build.s,
                build.r,
                build.res_tol,
            )?;
            let z0 = StateVector::random_real(model.basis().clone(), build.s, st.eps, st.z0_seed);
            let r_eff = st.r_eff.unwrap_or(build.r);
            let t_end = st.eps.powi(-(r_eff as i32)).min(st.t_max);
            let opts = IntegrateOptions {
                sample_stride: st.sample_stride,
                s: build.s,
                ceiling: st.ceiling_factor * st.eps,
                estimate_prefix: st.error_estimate_prefix,
            };
            let traj = integrate(&model, &z0, t_end, st.dt, &opts)?;

            let basis = model.basis();
            let mut csv = config_comment(&cfg);
            csv.push('t');
            for m in basis.modes() {
                let _ = write!(csv, ",re{m},im{m}");
            }
            csv.push_str(",sobolev_norm,pseudo_norm\n");
            let mut pseudo_values = Vec::with_capacity(traj.states.len());
            for (t, z) in traj.times.iter().zip(&traj.states) {
                let _ = write!(csv, "{t}");
                for a in z.amps() {
                    let _ = write!(csv, ",{},{}", a.re, a.im);
                }
                let n = pseudonorm_eval(&fam, z)?;
                pseudo_values.push(n);
                let _ = writeln!(csv, ",{},{}", z.sobolev_norm(build.s), n);
            }
            write_text(&cli.out, "stability.csv", &csv)?;

            let mut ratios: Vec<f64> = Vec::new();
            for z in &traj.states {
                let plain =
                    time_derivative_value(&fam.parts()[0], model.omega(), model.fields(), z)?
                        .re
                        .abs();
                let pseudo = drift_rate(&fam, model.omega(), model.fields(), z)?.abs();
                if pseudo > 0.0 {
                    ratios.push(plain / pseudo);
                }
            }
            ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median_ratio = if ratios.is_empty() {
                None
            } else {
                Some(ratios[ratios.len() / 2])
            };

            let summary = StabilitySummary {
                t_end: traj.final_time(),
                eps: st.eps,
                sup_norm_ratio: traj.sup_norm / st.eps,
                n_initial: pseudo_values[0],
                n_final: *pseudo_values.last().unwrap(),
                delta_n: (pseudo_values.last().unwrap() - pseudo_values[0]).abs(),
                error_estimate: traj.error_estimate,
                plain_vs_pseudo_rate_ratio: median_ratio,
                completed: traj.status == FlowStatus::Completed,
            };
            let path = write_json(
                &cli.out,
                "stability_summary.json",
                &Wrapped {
                    config: &cfg,
                    payload: summary,
                },
            )?;
            println!("{}", std::fs::read_to_string(&path)?);
            if let FlowStatus::BlownUp { t, norm } = traj.status {
                eprintln!(
                    "blow-up guard: ||z||_s = {norm:.3e} at t = {t} exceeded {:.3e}",
                    opts.ceiling
                );
                return Ok(3);
            }
            Ok(0)
        }
        Command::Selftest { corrupt } => {
            let report = selftest::run_selftest(*corrupt);
            for check in &report.checks {
                match &check.failure {
                    None => println!("ok   {}", check.name),
                    Some(msg) => println!("FAIL {}: {msg}", check.name),
                }
            }
            println!(
                "selftest: {} passed, {} failed ({} checks)",
                report.passed(),
                report.failed(),
                report.checks.len()
            );
            Ok(if report.failed() == 0 { 0 } else { 1 })
        }
    }
}
