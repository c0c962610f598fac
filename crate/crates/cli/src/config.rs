//! Run configuration: a TOML file with `[model]`, `[sim]` and `[analysis]`.
//!
//! ```toml
//! [model]
//! n = 10
//! atlas = { g = 1.0 }
//! sigma_linear = { base = 1.0, slope = 1.0 }
//! gamma_linear = { scale = 1.0 }
//!
//! [sim]
//! T = 1e4
//! dt = 1e-3
//! paths = 4
//! seed = 7
//! ```

use std::path::Path;

use atlas_lab::{ModelParams, Params};
use serde::Deserialize;

use crate::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

/// Every family of constants may be given explicitly or through a shorthand
/// generator; giving both is an error.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: Option<usize>,
    /// Common drift `γ`.
    pub gamma: Option<f64>,
    /// Name-based drifts `γ_i`.
    pub gamma_name: Option<Vec<f64>>,
    /// `γ_i = scale (1 − 2i/(n+1))`.
    pub gamma_linear: Option<GammaLinear>,
    /// Rank-based drifts `g_k`.
    pub g: Option<Vec<f64>>,
    /// `g_k = −g` for `k < n`, `g_n = (n−1) g`.
    pub atlas: Option<AtlasShorthand>,
    /// Rank-based volatilities `σ_k`.
    pub sigma: Option<Vec<f64>>,
    /// Rank-based variances `σ_k²`.
    pub sigma2: Option<Vec<f64>>,
    /// `σ_k² = base + slope k`.
    pub sigma_linear: Option<SigmaLinear>,
    /// `"zero"` or dense rows `ρ_ij`.
    pub rho: Option<Rho>,
    /// Initial log-capitalizations.
    pub y0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaLinear {
    pub scale: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtlasShorthand {
    pub g: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaLinear {
    pub base: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Rho {
    Keyword(String),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub stride: Option<usize>,
    pub store_paths: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub mode: Option<String>,
    pub iters: Option<u64>,
    pub burn_in: Option<u64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub mc_simplex: Option<usize>,
}

/// Raw text and its parsed form. The text is kept so that a manifest can
/// embed it and replay the run without the original file.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub text: String,
    pub file: ConfigFile,
    pub params: Params,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(text, &path.display().to_string())
    }

    pub fn parse(text: String, origin: &str) -> Result<Self, Failure> {
        let file: ConfigFile =
            toml::from_str(&text).map_err(|e| Failure::input(format!("{origin}: {e}")))?;
        let params = file
            .model
            .resolve()
            .map_err(|e| Failure::input(format!("{origin}: [model] {e}")))?;
        Ok(Self { text, file, params })
    }
}

fn pick<T>(field: &str, explicit: Option<T>, short: Option<T>, short_name: &str) -> Result<Option<T>, String> {
    match (explicit, short) {
        (Some(_), Some(_)) => Err(format!("`{field}` and `{short_name}` are mutually exclusive")),
        (a, b) => Ok(a.or(b)),
    }
}

impl ModelSection {
    /// Infer `n`, expand shorthands and build the parameter set.
    pub fn resolve(&self) -> Result<Params, String> {
        let lens = [
            ("gamma_name", self.gamma_name.as_ref().map(Vec::len)),
            ("g", self.g.as_ref().map(Vec::len)),
            ("sigma", self.sigma.as_ref().map(Vec::len)),
            ("sigma2", self.sigma2.as_ref().map(Vec::len)),
            ("y0", self.y0.as_ref().map(Vec::len)),
        ];
        let mut n = self.n;
        for (field, len) in lens {
            match (n, len) {
                (Some(m), Some(l)) if m != l => {
                    return Err(format!("`{field}` has length {l}, expected n = {m}"));
                }
                (None, Some(l)) => n = Some(l),
                _ => {}
            }
        }
        let n = n.ok_or("`n` is missing and no array fixes it")?;
        if n < 2 {
            return Err(format!("n = {n}, need at least 2"));
        }
        let nf = n as f64;

        let gamma_name = pick(
            "gamma_name",
            self.gamma_name.clone(),
            self.gamma_linear
                .as_ref()
                .map(|s| (1..=n).map(|i| s.scale * (1.0 - 2.0 * i as f64 / (nf + 1.0))).collect()),
            "gamma_linear",
        )?
        .unwrap_or_else(|| vec![0.0; n]);

        let g = pick(
            "g",
            self.g.clone(),
            self.atlas.as_ref().map(|a| ModelParams::atlas_drifts(n, a.g)),
            "atlas",
        )?
        .ok_or("rank drifts missing: give `g` or `atlas`")?;

        let sigma2 = pick(
            "sigma2",
            self.sigma2.clone(),
            self.sigma_linear
                .as_ref()
                .map(|s| (1..=n).map(|k| s.base + s.slope * k as f64).collect()),
            "sigma_linear",
        )?;
        let sigma = match (self.sigma.clone(), sigma2) {
            (Some(_), Some(_)) => return Err("give only one of `sigma`, `sigma2`, `sigma_linear`".into()),
            (Some(s), None) => s,
            (None, Some(s2)) => {
                if let Some(v) = s2.iter().find(|v| !(**v > 0.0)) {
                    return Err(format!("variances must be positive, found {v}"));
                }
                s2.iter().map(|v| v.sqrt()).collect()
            }
            (None, None) => return Err("volatilities missing: give `sigma`, `sigma2` or `sigma_linear`".into()),
        };

        let mut params = ModelParams::new(gamma_name, g, sigma)
            .map_err(|e| e.to_string())?
            .with_gamma(self.gamma.unwrap_or(0.0));
        match &self.rho {
            None => {}
            Some(Rho::Keyword(k)) if k == "zero" => {}
            Some(Rho::Keyword(k)) => return Err(format!("`rho` must be \"zero\" or rows of numbers, got \"{k}\"")),
            Some(Rho::Rows(rows)) => params = params.with_rho(rows.clone()).map_err(|e| format!("`rho`: {e}"))?,
        }
        if let Some(y0) = &self.y0 {
            params = params.with_y0(y0.clone()).map_err(|e| format!("`y0`: {e}"))?;
        }
        Ok(params)
    }
}
