//! Browser bindings: three interactive entry points over JSON strings, so
//! the page needs no typed glue. Every function returns a JSON object; on
//! failure it carries a single `error` key.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use revnorm::basis::StateVector;
use revnorm::family::{build_pseudonorm, drift_rate, pseudonorm_eval, PseudoNormFamily};
use revnorm::fitting::fit_loglog;
use revnorm::flow::{integrate, IntegrateOptions};
use revnorm::models::{
    build_nls_model, ModelSpec, ModulusTerm, NonlinearitySpec, OmegaConvention, Potential,
    SymmetricOddTerm,
};

/// Knobs exposed to the page; one-dimensional NLS only, sized so every
/// interaction stays well under a second.
#[derive(Deserialize)]
struct DemoConfig {
    k: i32,
    s: f64,
    r: usize,
    seed: u64,
    /// Gauge-invariant quartic strength `lambda (psi conj psi)^2`.
    lambda: f64,
    /// Symmetric cubic strength (makes the cubic correction nonzero).
    nu: f64,
    #[serde(default)]
    eps: Option<f64>,
    #[serde(default)]
    t_max: Option<f64>,
    #[serde(default)]
    dt: Option<f64>,
}

fn parse(config: &str) -> Result<DemoConfig, String> {
    let cfg: DemoConfig = serde_json::from_str(config).map_err(|e| e.to_string())?;
    if !(1..=6).contains(&cfg.k) {
        return Err("k must be between 1 and 6".into());
    }
    if !(2..=5).contains(&cfg.r) {
        return Err("r must be between 2 and 5".into());
    }
    if !(0.0..=4.0).contains(&cfg.s) {
        return Err("s must be between 0 and 4".into());
    }
    Ok(cfg)
}

fn make_model(cfg: &DemoConfig) -> Result<ModelSpec, String> {
    let mut nl = NonlinearitySpec::default();
    if cfg.lambda != 0.0 {
        nl.modulus.push(ModulusTerm {
            p: 2,
            lambda: cfg.lambda,
        });
    }
    if cfg.nu != 0.0 {
        nl.symmetric_odd
            .push(SymmetricOddTerm { q: 2, coef: cfg.nu });
    }
    if nl.is_empty() {
        return Err("at least one of lambda, nu must be nonzero".into());
    }
    build_nls_model(
        1,
        cfg.k,
        Potential::Uniform { seed: cfg.seed },
        &nl,
        OmegaConvention::Eigenvalue,
    )
    .map_err(|e| e.to_string())
}

fn make_family(cfg: &DemoConfig, model: &ModelSpec) -> Result<PseudoNormFamily, String> {
    build_pseudonorm(model.fields(), model.omega(), cfg.s, cfg.r, 1e-10).map_err(|e| e.to_string())
}

fn or_error(result: Result<String, String>) -> String {
    result.unwrap_or_else(|e| serde_json::json!({ "error": e }).to_string())
}

#[derive(Serialize)]
struct OrderRow {
    order: usize,
    terms: usize,
    min_divisor: Option<f64>,
    max_abs_coeff: f64,
    gamma0_constant: f64,
}

#[derive(Serialize)]
struct BuildOut {
    orders: Vec<OrderRow>,
    field_degrees: Vec<usize>,
    field_terms: Vec<usize>,
    dim: usize,
}

/// Build the pseudo-norm family and report its per-order statistics.
#[wasm_bindgen]
pub fn demo_build(config: &str) -> String {
    or_error((|| {
        let cfg = parse(config)?;
        let model = make_model(&cfg)?;
        let fam = make_family(&cfg, &model)?;
        let out = BuildOut {
            orders: fam
                .divisor_stats()
                .iter()
                .map(|st| OrderRow {
                    order: st.order,
                    terms: st.terms,
                    min_divisor: st.min_divisor,
                    max_abs_coeff: st.max_abs_coeff,
                    gamma0_constant: st.gamma0_constant,
                })
                .collect(),
            field_degrees: model.fields().iter().map(|f| f.degree()).collect(),
            field_terms: model.fields().iter().map(|f| f.len()).collect(),
            dim: model.basis().dim(),
        };
        serde_json::to_string(&out).map_err(|e| e.to_string())
    })())
}

#[derive(Serialize)]
struct ScanOut {
    eps: Vec<f64>,
    drift: Vec<f64>,
    gap: Vec<f64>,
    drift_slope: Option<f64>,
    gap_slope: Option<f64>,
}

/// Scaling scan: |drift| and |N - eps^2| over a geometric eps grid.
#[wasm_bindgen]
pub fn demo_drift_scan(config: &str) -> String {
    or_error((|| {
        let cfg = parse(config)?;
        let model = make_model(&cfg)?;
        let fam = make_family(&cfg, &model)?;
        let zhat = StateVector::random_real(model.basis().clone(), cfg.s, 1.0, 11);
        let mut eps = 0.0125f64;
        let (mut xs, mut drift, mut gap) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..9 {
            let z = zhat.scaled(eps);
            drift.push(
                drift_rate(&fam, model.omega(), model.fields(), &z)
                    .map_err(|e| e.to_string())?
                    .abs(),
            );
            gap.push((pseudonorm_eval(&fam, &z).map_err(|e| e.to_string())? - eps * eps).abs());
            xs.push(eps);
            eps *= std::f64::consts::SQRT_2;
        }
        let out = ScanOut {
            drift_slope: fit_loglog(&xs, &drift, true).map(|f| f.slope),
            gap_slope: fit_loglog(&xs, &gap, true).map(|f| f.slope),
            eps: xs,
            drift,
            gap,
        };
        serde_json::to_string(&out).map_err(|e| e.to_string())
    })())
}

#[derive(Serialize)]
struct TrajectoryOut {
    t: Vec<f64>,
    /// Relative excursion of the squared Sobolev norm.
    norm_rel: Vec<f64>,
    /// Relative excursion of the pseudo norm.
    pseudo_rel: Vec<f64>,
    sup_ratio: f64,
    delta_n_rel: f64,
}

/// Integrate and compare the bare squared norm against the pseudo norm.
#[wasm_bindgen]
pub fn demo_trajectory(config: &str) -> String {
    or_error((|| {
        let cfg = parse(config)?;
        let eps = cfg.eps.unwrap_or(0.1).clamp(1e-3, 0.5);
        let t_max = cfg.t_max.unwrap_or(200.0).clamp(1.0, 2000.0);
        let dt = cfg.dt.unwrap_or(0.01).clamp(1e-3, 0.1);
        let model = make_model(&cfg)?;
        let fam = make_family(&cfg, &model)?;
        let z0 = StateVector::random_real(model.basis().clone(), cfg.s, eps, 13);
        let stride = ((t_max / dt) as usize / 400).max(1);
        let traj = integrate(
            &model,
            &z0,
            t_max,
            dt,
            &IntegrateOptions {
                sample_stride: stride,
                s: cfg.s,
                ceiling: 10.0 * eps,
                estimate_prefix: None,
            },
        )
        .map_err(|e| e.to_string())?;
        let n0 = pseudonorm_eval(&fam, &z0).map_err(|e| e.to_string())?;
        let sq0 = z0.sobolev_norm(cfg.s).powi(2);
        let mut norm_rel = Vec::with_capacity(traj.states.len());
        let mut pseudo_rel = Vec::with_capacity(traj.states.len());
        for z in &traj.states {
            norm_rel.push(z.sobolev_norm(cfg.s).powi(2) / sq0 - 1.0);
            pseudo_rel.push(pseudonorm_eval(&fam, z).map_err(|e| e.to_string())? / n0 - 1.0);
        }
        let out = TrajectoryOut {
            t: traj.times.clone(),
            sup_ratio: traj.sup_norm / eps,
            delta_n_rel: (pseudo_rel.last().copied().unwrap_or(0.0)).abs(),
            norm_rel,
            pseudo_rel,
        };
        serde_json::to_string(&out).map_err(|e| e.to_string())
    })())
}
