//! The analysis subcommands. Each one resolves its settings against the
//! config, runs, writes its files and a manifest.

use std::collections::BTreeMap;
use std::path::Path;

use atlas_lab::capcurve::{convexity_criterion, expected_curve_mc, expected_slope};
use atlas_lab::export::{write_curve_csv, write_curve_dat, write_occupation_csv, write_trajectory_csv, format_sig, CSV_DIGITS};
use atlas_lab::invariant::{chamber_weights, chamber_weights_mcmc, default_burn_in, equilibrium_residual, lambda_vector};
use atlas_lab::portfolio::{
    asymptotic_target, growth_optimal, longrun_rates, market_wealth, terminal_rate_stats, target_portfolio,
    universal_portfolio, wealth_constant,
};
use atlas_lab::sde::{growth_rates, mean_gaps, occupation_estimate, simulate, Tracked};
use atlas_lab::stats::mean_se;
use atlas_lab::{validate, Error, Measure, Params, Permutation, SimSettings, Wealth, Weights};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Loaded;
use crate::manifest::{sha256_hex, unix_now, OutDir, OutputFile, RunManifest};
use crate::Failure;

/// Chamber lists are written in full only up to this `n`.
pub const FULL_CHAMBER_LIST_MAX_N: usize = 8;
pub const TOP_CHAMBERS: usize = 1000;

const DEFAULT_HORIZON: f64 = 1e3;
const DEFAULT_DT: f64 = 1e-3;
const DEFAULT_MCMC_ITERS: u64 = 1_000_000;
const DEFAULT_CURVE_SAMPLES: usize = 100_000;
const DEFAULT_MC_SIMPLEX: usize = 10_000;
/// Portfolio runs store about this many points per path.
const PORTFOLIO_POINTS: u64 = 1000;

/// Resolved settings of one run, as stored in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Run {
    Validate,
    Invariant(InvariantRun),
    Simulate(SimulateRun),
    Capcurve(CapcurveRun),
    Portfolio(PortfolioRun),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Exact,
    Mcmc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InvariantRun {
    pub mode: Mode,
    pub iters: u64,
    pub burn_in: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateRun {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub stride: usize,
    pub store_paths: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapcurveRun {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortfolioRun {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub stride: usize,
    pub mc_simplex: usize,
}

impl Run {
    pub fn name(&self) -> &'static str {
        match self {
            Run::Validate => "validate",
            Run::Invariant(_) => "invariant",
            Run::Simulate(_) => "simulate",
            Run::Capcurve(_) => "capcurve",
            Run::Portfolio(_) => "portfolio",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Run::Validate => None,
            Run::Invariant(r) => (r.mode == Mode::Mcmc).then_some(r.seed),
            Run::Simulate(r) => Some(r.seed),
            Run::Capcurve(r) => Some(r.seed),
            Run::Portfolio(r) => Some(r.seed),
        }
    }

    /// Execute and write the outputs and the manifest into `out_dir`.
    pub fn execute(&self, cfg: &Loaded, out_dir: &Path) -> Result<Vec<OutputFile>, Failure> {
        let started = unix_now();
        let mut out = OutDir::create(out_dir)?;
        let result = match self {
            Run::Validate => run_validate(cfg, &mut out),
            Run::Invariant(r) => run_invariant(r, &cfg.params, &mut out),
            Run::Simulate(r) => run_simulate(r, &cfg.params, &mut out),
            Run::Capcurve(r) => run_capcurve(r, &cfg.params, &mut out),
            Run::Portfolio(r) => run_portfolio(r, &cfg.params, &mut out),
        };
        // a failed check still leaves its report and manifest behind
        let deferred = match result {
            Ok(()) => None,
            Err(f) if f.deferred => Some(f),
            Err(f) => return Err(f),
        };
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.name().into(),
            settings: serde_json::to_value(self).expect("settings serialize"),
            seed: self.seed(),
            config_sha256: sha256_hex(cfg.text.as_bytes()),
            config: cfg.text.clone(),
            params: cfg.params.clone(),
            started_unix: started,
            finished_unix: started,
            outputs: Vec::new(),
        };
        let files = out.finish(manifest)?;
        match deferred {
            Some(f) => Err(f),
            None => Ok(files),
        }
    }
}

pub fn resolve_invariant(cfg: &Loaded, mode: Option<Mode>, iters: Option<u64>, burn_in: Option<u64>, seed: Option<u64>) -> Result<Run, Failure> {
    let a = &cfg.file.analysis;
    let mode = match (mode, a.mode.as_deref()) {
        (Some(m), _) => m,
        (None, None | Some("exact")) => Mode::Exact,
        (None, Some("mcmc")) => Mode::Mcmc,
        (None, Some(other)) => {
            return Err(Failure::input(format!("[analysis] mode must be \"exact\" or \"mcmc\", got \"{other}\"")));
        }
    };
    Ok(Run::Invariant(InvariantRun {
        mode,
        iters: iters.or(a.iters).unwrap_or(DEFAULT_MCMC_ITERS),
        burn_in: burn_in.or(a.burn_in).unwrap_or_else(|| default_burn_in(cfg.params.n)),
        seed: seed.or(a.seed).unwrap_or(0),
    }))
}

pub fn resolve_simulate(
    cfg: &Loaded,
    horizon: Option<f64>,
    dt: Option<f64>,
    paths: Option<usize>,
    seed: Option<u64>,
    stride: Option<usize>,
    store_paths: bool,
) -> Run {
    let s = &cfg.file.sim;
    Run::Simulate(SimulateRun {
        horizon: horizon.or(s.horizon).unwrap_or(DEFAULT_HORIZON),
        dt: dt.or(s.dt).unwrap_or(DEFAULT_DT),
        paths: paths.or(s.paths).unwrap_or(1),
        seed: seed.or(s.seed).unwrap_or(0),
        stride: stride.or(s.stride).unwrap_or(atlas_lab::sde::DEFAULT_STRIDE),
        store_paths: store_paths || s.store_paths.unwrap_or(false),
    })
}

pub fn resolve_capcurve(cfg: &Loaded, samples: Option<usize>, seed: Option<u64>) -> Run {
    let a = &cfg.file.analysis;
    Run::Capcurve(CapcurveRun {
        samples: samples.or(a.samples).unwrap_or(DEFAULT_CURVE_SAMPLES),
        seed: seed.or(a.seed).unwrap_or(0),
    })
}

pub fn resolve_portfolio(
    cfg: &Loaded,
    horizon: Option<f64>,
    dt: Option<f64>,
    paths: Option<usize>,
    mc_simplex: Option<usize>,
    seed: Option<u64>,
    stride: Option<usize>,
) -> Run {
    let s = &cfg.file.sim;
    let horizon = horizon.or(s.horizon).unwrap_or(DEFAULT_HORIZON);
    let dt = dt.or(s.dt).unwrap_or(DEFAULT_DT);
    let steps = (horizon / dt).round().max(1.0) as u64;
    Run::Portfolio(PortfolioRun {
        horizon,
        dt,
        paths: paths.or(s.paths).unwrap_or(1),
        seed: seed.or(s.seed).unwrap_or(0),
        stride: stride.unwrap_or_else(|| steps.div_ceil(PORTFOLIO_POINTS).max(1) as usize),
        mc_simplex: mc_simplex.or(cfg.file.analysis.mc_simplex).unwrap_or(DEFAULT_MC_SIMPLEX),
    })
}

fn run_validate(cfg: &Loaded, out: &mut OutDir) -> Result<(), Failure> {
    let report = validate(&cfg.params)?;
    println!("{report}");
    let json = atlas_lab::export::to_json_string(&report)?;
    print!("{json}");
    out.write("validation.json", json.as_bytes())?;
    let failures = report.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::deferred(1, failures.join("\n")))
    }
}

fn run_invariant(r: &InvariantRun, params: &Params, out: &mut OutDir) -> Result<(), Failure> {
    let measure = match r.mode {
        Mode::Exact => chamber_weights(params)?,
        Mode::Mcmc => chamber_weights_mcmc(params, r.iters, r.burn_in, r.seed)?,
    };
    let occ = measure.occupation();
    out.render("theta_matrix.csv", |w| write_occupation_csv(occ, w))?;

    let n = params.n;
    if measure.is_exact() {
        let full = n <= FULL_CHAMBER_LIST_MAX_N;
        let chambers = if full {
            let mut all: Vec<_> = measure.chambers()?.collect();
            all.sort_by(|a, b| b.theta.total_cmp(&a.theta));
            all
        } else {
            measure.top_chambers(TOP_CHAMBERS)?
        };
        let listed: Vec<_> = chambers
            .iter()
            .map(|c| {
                json!({
                    "rank_to_name": c.perm.rank_to_name(),
                    "theta": c.theta,
                    "log_weight": c.log_weight,
                    "lambda": c.lambda,
                })
            })
            .collect();
        out.json(
            "chamber_weights.json",
            &json!({
                "n": n,
                "log_norm": measure.log_norm()?,
                "permutations": atlas_lab::ranks::factorial(n),
                "listed": listed.len(),
                "truncated": !full,
                "chambers": listed,
            }),
        )?;
    }

    let (lambda_min, lambda_max) = if measure.is_exact() {
        let mut lo = vec![f64::INFINITY; n - 1];
        let mut hi = vec![f64::NEG_INFINITY; n - 1];
        for c in measure.chambers()? {
            for (k, &l) in c.lambda.iter().enumerate() {
                lo[k] = lo[k].min(l);
                hi[k] = hi[k].max(l);
            }
        }
        (Some(lo), Some(hi))
    } else {
        (None, None)
    };
    out.json(
        "lambda_summary.json",
        &json!({
            "measure": measure.mode(),
            "lambda_identity": lambda_vector(params, &Permutation::identity(n))?,
            "lambda_min": lambda_min,
            "lambda_max": lambda_max,
            "mean_gaps": measure.mean_gaps(),
            "mean_gaps_se": measure.mean_gaps_se(),
        }),
    )?;

    let residual = equilibrium_residual(params, occ)?;
    let max_abs = residual.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    out.json(
        "equilibrium_residual.json",
        &json!({
            "residual": residual,
            "max_abs_residual": max_abs,
            "row_sums": occ.row_sums(),
            "col_sums": occ.col_sums(),
            "doubly_stochastic_error": occ.doubly_stochastic_error(),
        }),
    )
}

fn warn_if_invalid(params: &Params) -> Result<(), Failure> {
    let report = validate(params)?;
    for f in report.failures() {
        eprintln!("warning: {f}; simulating anyway");
    }
    Ok(())
}

fn run_simulate(r: &SimulateRun, params: &Params, out: &mut OutDir) -> Result<(), Failure> {
    warn_if_invalid(params)?;
    let mut cfg = SimSettings::new(r.horizon, r.dt, r.paths, r.seed).with_stride(r.stride);
    if !r.store_paths {
        cfg = cfg.summaries_only();
    }
    let sim = simulate(params, &cfg)?;
    out.render("occupation_estimate.csv", |w| write_occupation_csv(&occupation_estimate(&sim), w))?;
    let identity = sim.paths.iter().map(|p| p.market_identity_error).fold(0.0, f64::max);
    out.json(
        "growth_rates.json",
        &json!({
            "horizon": sim.horizon(),
            "dt": r.dt,
            "steps": sim.steps,
            "paths": r.paths,
            "rates": growth_rates(&sim),
            "mean_gaps": mean_gaps(&sim),
            "max_market_identity_error": identity,
        }),
    )?;
    if r.store_paths {
        out.render("gaps.csv", |w| write_trajectory_csv(&sim, w))?;
    }
    Ok(())
}

fn run_capcurve(r: &CapcurveRun, params: &Params, out: &mut OutDir) -> Result<(), Failure> {
    let criterion = convexity_criterion(params)?;
    let measure = chamber_weights(params)?;
    let curve = expected_curve_mc(&measure, r.samples, r.seed)?;
    out.render("curve.csv", |w| write_curve_csv(&curve, w))?;
    out.render("curve.dat", |w| write_curve_dat(&curve, w))?;

    let mut slopes = String::from("k,slope,slope_mc\n");
    for k in 1..params.n {
        let step = (1.0 + 1.0 / k as f64).ln();
        let mc = (curve.log_weight[k] - curve.log_weight[k - 1]) / step;
        slopes += &format!(
            "{k},{},{}\n",
            format_sig(expected_slope(&measure, k)?, CSV_DIGITS),
            format_sig(mc, CSV_DIGITS)
        );
    }
    out.write("slopes.csv", slopes.as_bytes())?;
    out.json(
        "convexity.json",
        &json!({
            "overall": criterion.overall(),
            "decay_ratios": criterion.decay_ratios(),
            "criterion": criterion,
        }),
    )
}

#[derive(Serialize)]
struct StrategySummary {
    terminal_rate: f64,
    terminal_rate_se: f64,
    terminal_rates: Vec<f64>,
}

fn summarize(tracks: &[Wealth]) -> StrategySummary {
    let (terminal_rate, terminal_rate_se) = terminal_rate_stats(tracks);
    StrategySummary {
        terminal_rate,
        terminal_rate_se,
        terminal_rates: tracks.iter().map(Wealth::terminal_rate).collect(),
    }
}

/// Exact measure when enumeration is feasible, MCMC otherwise.
fn long_run_measure(params: &Params, seed: u64) -> atlas_lab::Result<Measure> {
    match chamber_weights(params) {
        Err(Error::Capacity { .. }) => {
            chamber_weights_mcmc(params, DEFAULT_MCMC_ITERS, default_burn_in(params.n), seed)
        }
        r => r,
    }
}

fn run_portfolio(r: &PortfolioRun, params: &Params, out: &mut OutDir) -> Result<(), Failure> {
    warn_if_invalid(params)?;
    let mut notices = Vec::new();
    let mut cfg = SimSettings::new(r.horizon, r.dt, r.paths, r.seed).with_stride(r.stride);
    let track_go = params.rho_is_zero();
    if track_go {
        cfg = cfg.with_track(Tracked::GrowthOptimal);
    } else {
        notices.push("growth_optimal omitted: name-based correlations are nonzero".to_string());
    }
    let sim = simulate(params, &cfg)?;

    let mut tracks: BTreeMap<&str, Vec<Wealth>> = BTreeMap::new();
    tracks.insert("market", market_wealth(&sim)?);
    tracks.insert("equal", wealth_constant(&Weights::equal(params.n), &sim)?);
    let star = (0..sim.paths.len())
        .map(|p| {
            let log_value = (0..sim.times.len())
                .map(|j| if j == 0 { Ok(0.0) } else { target_portfolio(&sim, p, j).map(|t| t.log_value) })
                .collect::<atlas_lab::Result<Vec<f64>>>()?;
            Ok(Wealth {
                times: sim.times.clone(),
                log_value,
            })
        })
        .collect::<atlas_lab::Result<Vec<_>>>()?;
    tracks.insert("target_star", star);

    let measure = match long_run_measure(params, r.seed) {
        Ok(m) => Some(m),
        Err(e @ (Error::SkewSymmetry(_) | Error::Stability(_))) => {
            notices.push(format!("asym_target omitted: {e}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    let analytic = match &measure {
        Some(m) => {
            tracks.insert("asym_target", wealth_constant(&asymptotic_target(m, params)?, &sim)?);
            Some(longrun_rates(params, m)?)
        }
        None => None,
    };
    tracks.insert("universal", universal_portfolio(&sim, r.mc_simplex, r.seed)?.tracks);
    if track_go {
        tracks.insert("growth_optimal", growth_optimal(params, &sim)?.tracks);
    }

    for (name, t) in &tracks {
        out.render(&format!("wealth_{name}.csv"), |w| atlas_lab::export::write_wealth_csv(t, w))?;
    }

    let mut differences = serde_json::Map::new();
    if let (Some(go), Some(u)) = (tracks.get("growth_optimal"), tracks.get("universal")) {
        let d: Vec<f64> = go.iter().zip(u).map(|(a, b)| a.terminal_rate() - b.terminal_rate()).collect();
        let (mean, se) = mean_se(&d);
        differences.insert("growth_optimal_minus_universal".into(), json!({ "mean": mean, "se": se }));
    }
    if let (Some(u), Some(a)) = (tracks.get("universal"), tracks.get("asym_target")) {
        let ((mu, su), (ma, sa)) = (terminal_rate_stats(u), terminal_rate_stats(a));
        let pooled = su.hypot(sa);
        differences.insert(
            "universal_minus_asym_target".into(),
            json!({ "mean": mu - ma, "pooled_se": pooled, "within_3se": (mu - ma).abs() <= 3.0 * pooled }),
        );
    }
    let strategies: BTreeMap<_, _> = tracks.iter().map(|(k, t)| (*k, summarize(t))).collect();
    out.json(
        "comparison.json",
        &json!({
            "horizon": sim.horizon(),
            "paths": r.paths,
            "strategies": strategies,
            "differences": differences,
            "analytic": analytic,
            "notices": notices,
        }),
    )?;
    for n in &notices {
        eprintln!("notice: {n}");
    }
    Ok(())
}
