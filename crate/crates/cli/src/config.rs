//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Keys not
//! listed in [`KEYS`] are rejected so a typo can never silently fall back to a
//! default.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use mpfc_core::experiments::{DEFAULT_BETAS, DEFAULT_SAMPLE_TIMES};
use mpfc_core::model::default_k_split;
use mpfc_core::{ModelParams, Nonlinearity};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Simulate,
    Decompose,
    BetaSweep,
    Dissipativity,
    Convergence,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Decompose => "decompose",
            Experiment::BetaSweep => "beta_sweep",
            Experiment::Dissipativity => "dissipativity",
            Experiment::Convergence => "convergence",
        }
    }
}

impl FromStr for Experiment {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "simulate" => Experiment::Simulate,
            "decompose" => Experiment::Decompose,
            "beta_sweep" => Experiment::BetaSweep,
            "dissipativity" => Experiment::Dissipativity,
            "convergence" => Experiment::Convergence,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Pass/fail thresholds. Each one can be overridden from the config file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Drift of the conserved charge and of the mean velocity law.
    pub charge_tol: f64,
    /// Largest energy increase allowed per PFC step.
    pub energy_tol: f64,
    /// Relative reconstruction error of the decomposition.
    pub reconstruction_tol: f64,
    /// Minimum log-log slope of the distance to the PFC run at the first
    /// sample time.
    pub slope_min: f64,
    /// Minimum R² of the decay fit.
    pub r2_min: f64,
    /// Samples with `t` below this are dropped from the decay fit.
    pub decay_discard: f64,
    /// Largest relative spread of the terminal dissipativity values.
    pub spread_max: f64,
    /// Target order and half-width for the convergence study.
    pub order: f64,
    pub order_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            charge_tol: 1e-12,
            energy_tol: 1e-10,
            reconstruction_tol: 1e-8,
            slope_min: 0.45,
            r2_min: 0.99,
            decay_discard: 0.2,
            spread_max: 0.1,
            order: 1.0,
            order_tol: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub params: ModelParams,
    /// Whether `k_split` was taken from the default rule.
    pub k_split_defaulted: bool,
    pub dim: usize,
    pub n_points: usize,
    pub dt: f64,
    pub horizon: f64,
    pub sample_stride: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub mean_phi0: f64,
    pub mean_phi1: f64,
    pub amplitude: f64,
    pub max_mode: usize,
    pub beta_values: Vec<f64>,
    pub sample_times: Vec<f64>,
    /// Ratio between the perturbation sizes of the two dissipativity runs.
    pub family_scale: f64,
    /// Number of step sizes, each half the previous, in the convergence study.
    pub dt_levels: usize,
    pub tolerances: Tolerances,
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "experiment",
    "beta",
    "epsilon",
    "k_split",
    "beta0",
    "nonlinearity",
    "dim",
    "n_points",
    "dt",
    "horizon",
    "sample_stride",
    "seed",
    "output_dir",
    "mean_phi0",
    "mean_phi1",
    "amplitude",
    "max_mode",
    "beta_values",
    "sample_times",
    "family_scale",
    "dt_levels",
    "charge_tol",
    "energy_tol",
    "reconstruction_tol",
    "slope_min",
    "r2_min",
    "decay_discard",
    "spread_max",
    "order",
    "order_tol",
];

struct Pairs(Vec<(String, String, usize)>);

impl Pairs {
    fn get(&self, key: &str) -> Option<&str> {
        self.0
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, _)| v.as_str())
    }

    fn required<T: FromStr>(
        &self,
        key: &'static str,
        expected: &'static str,
    ) -> Result<T, ConfigError> {
        let raw = self.get(key).ok_or(ConfigError::Missing(key))?;
        parse_value(key, raw, expected)
    }

    fn optional<T: FromStr>(
        &self,
        key: &'static str,
        expected: &'static str,
    ) -> Result<Option<T>, ConfigError> {
        self.get(key)
            .map(|raw| parse_value(key, raw, expected))
            .transpose()
    }

    fn list(&self, key: &'static str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(raw) = self.get(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(|item| parse_value(key, item.trim(), "comma-separated reals"))
            .collect::<Result<Vec<f64>, _>>()
            .map(Some)
    }
}

fn parse_value<T: FromStr>(
    key: &'static str,
    raw: &str,
    expected: &'static str,
) -> Result<T, ConfigError> {
    raw.parse().map_err(|_| ConfigError::Type {
        key,
        value: raw.to_string(),
        expected,
    })
}

fn constraint(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Constraint {
        key,
        reason: reason.into(),
    }
}

fn tokenize(text: &str) -> Result<Pairs, ConfigError> {
    let mut pairs: Vec<(String, String, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: line_no,
                text: line.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::Unknown {
                key: key.to_string(),
                line: line_no,
            });
        }
        if let Some((_, _, first)) = pairs.iter().find(|(k, _, _)| k == key) {
            return Err(ConfigError::Duplicate {
                key: key.to_string(),
                first: *first,
                line: line_no,
            });
        }
        pairs.push((key.to_string(), value.to_string(), line_no));
    }
    Ok(Pairs(pairs))
}

fn is_multiple(t: f64, dt: f64) -> bool {
    let n = (t / dt).round();
    (n * dt - t).abs() <= 1e-9 * t.max(1.0)
}

/// Parses and fully validates a configuration file.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let p = tokenize(text)?;
    let experiment_raw: String = p.required("experiment", "experiment name")?;
    let experiment: Experiment = experiment_raw.parse().map_err(|_| ConfigError::Type {
        key: "experiment",
        value: experiment_raw.clone(),
        expected: "one of simulate, decompose, beta_sweep, dissipativity, convergence",
    })?;

    let beta: f64 = p.required("beta", "real")?;
    let epsilon: f64 = p.required("epsilon", "real")?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(constraint("beta", format!("{beta} must be >= 0")));
    }
    if !epsilon.is_finite() {
        return Err(constraint("epsilon", "must be finite"));
    }
    let k_split: Option<f64> = p.optional("k_split", "real")?;
    let beta0: Option<f64> = p.optional("beta0", "real")?;
    let nonlinearity = match p.get("nonlinearity") {
        None | Some("cubic") => Nonlinearity::Cubic,
        Some("linear") => Nonlinearity::Linear,
        Some(other) => {
            return Err(ConfigError::Type {
                key: "nonlinearity",
                value: other.to_string(),
                expected: "cubic or linear",
            })
        }
    };
    let k_min = 0f64.max(epsilon - 1.0);
    if let Some(k) = k_split {
        if !(k.is_finite() && k >= k_min) {
            return Err(constraint(
                "k_split",
                format!("{k} is below max(0, epsilon - 1) = {k_min}"),
            ));
        }
    }
    if let Some(b0) = beta0 {
        if !(b0.is_finite() && b0 > 0.0 && b0 >= beta) {
            return Err(constraint("beta0", format!("{b0} must be > 0 and >= beta")));
        }
    }
    let mut params = ModelParams::new(beta, epsilon)
        .and_then(|m| m.with_nonlinearity(nonlinearity))
        .map_err(|e| constraint("beta", e.to_string()))?;
    if let Some(b0) = beta0 {
        params = params
            .with_beta0(b0)
            .map_err(|e| constraint("beta0", e.to_string()))?;
    }
    if let Some(k) = k_split {
        params = params
            .with_k_split(k)
            .map_err(|e| constraint("k_split", e.to_string()))?;
    }

    let dim: usize = p.optional("dim", "integer")?.unwrap_or(1);
    if !(1..=3).contains(&dim) {
        return Err(constraint("dim", format!("{dim} must be 1, 2 or 3")));
    }
    let n_points: usize = p.optional("n_points", "integer")?.unwrap_or(128);
    if n_points < 4 || !n_points.is_power_of_two() {
        return Err(constraint(
            "n_points",
            format!("{n_points} must be a power of two >= 4"),
        ));
    }
    let dt: f64 = p.optional("dt", "real")?.unwrap_or(1e-3);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(constraint("dt", format!("{dt} must be > 0")));
    }
    let horizon: f64 = p.optional("horizon", "real")?.unwrap_or(1.0);
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(constraint("horizon", format!("{horizon} must be > 0")));
    }
    if !is_multiple(horizon, dt) {
        return Err(constraint(
            "horizon",
            format!("{horizon} is not a multiple of dt = {dt}"),
        ));
    }
    let sample_stride: usize = p.optional("sample_stride", "integer")?.unwrap_or(100);
    if sample_stride == 0 {
        return Err(constraint("sample_stride", "must be >= 1"));
    }
    let seed: u64 = p.optional("seed", "unsigned integer")?.unwrap_or(0);
    let output_dir = PathBuf::from(p.get("output_dir").unwrap_or("mpfc-out"));

    let mean_phi0: f64 = p.optional("mean_phi0", "real")?.unwrap_or(0.1);
    let mean_phi1: f64 = p.optional("mean_phi1", "real")?.unwrap_or(0.05);
    for (key, v) in [("mean_phi0", mean_phi0), ("mean_phi1", mean_phi1)] {
        if !v.is_finite() {
            return Err(constraint(key, "must be finite"));
        }
    }
    let amplitude: f64 = p.optional("amplitude", "real")?.unwrap_or(0.1);
    if !(amplitude.is_finite() && amplitude >= 0.0) {
        return Err(constraint("amplitude", format!("{amplitude} must be >= 0")));
    }
    let max_mode: usize = p.optional("max_mode", "integer")?.unwrap_or(8);
    if max_mode == 0 || 3 * max_mode > n_points {
        return Err(constraint(
            "max_mode",
            format!("{max_mode} must lie in 1..={}", n_points / 3),
        ));
    }

    let beta_values = p
        .list("beta_values")?
        .unwrap_or_else(|| DEFAULT_BETAS.to_vec());
    if experiment == Experiment::BetaSweep {
        let descending = beta_values.windows(2).all(|w| w[0] > w[1]);
        if beta_values.len() < 2 || !descending || *beta_values.last().unwrap() != 0.0 {
            return Err(constraint(
                "beta_values",
                "must be strictly descending and end at 0",
            ));
        }
        if beta_values[0] > params.beta0() {
            return Err(constraint(
                "beta_values",
                format!("{} exceeds beta0 = {}", beta_values[0], params.beta0()),
            ));
        }
    }
    let sample_times = match p.list("sample_times")? {
        Some(t) => t,
        None if experiment == Experiment::BetaSweep => DEFAULT_SAMPLE_TIMES
            .iter()
            .copied()
            .filter(|&t| t <= horizon)
            .collect(),
        None => vec![horizon],
    };
    if sample_times.is_empty() || !sample_times.windows(2).all(|w| w[0] < w[1]) {
        return Err(constraint(
            "sample_times",
            "must be strictly increasing and nonempty",
        ));
    }
    for &t in &sample_times {
        if !(t > 0.0 && t <= horizon) {
            return Err(constraint(
                "sample_times",
                format!("{t} is outside (0, {horizon}]"),
            ));
        }
        if !is_multiple(t, dt) {
            return Err(constraint(
                "sample_times",
                format!("{t} is not a multiple of dt = {dt}"),
            ));
        }
    }
    let family_scale: f64 = p.optional("family_scale", "real")?.unwrap_or(10.0);
    if !(family_scale.is_finite() && family_scale > 0.0) {
        return Err(constraint(
            "family_scale",
            format!("{family_scale} must be > 0"),
        ));
    }
    let dt_levels: usize = p.optional("dt_levels", "integer")?.unwrap_or(6);
    if dt_levels < 2 {
        return Err(constraint("dt_levels", "need at least two step sizes"));
    }

    let d = Tolerances::default();
    let tol = |key: &'static str, default: f64| -> Result<f64, ConfigError> {
        let v: f64 = p.optional(key, "real")?.unwrap_or(default);
        if v.is_nan() {
            return Err(constraint(key, "must not be NaN"));
        }
        Ok(v)
    };
    let tolerances = Tolerances {
        charge_tol: tol("charge_tol", d.charge_tol)?,
        energy_tol: tol("energy_tol", d.energy_tol)?,
        reconstruction_tol: tol("reconstruction_tol", d.reconstruction_tol)?,
        slope_min: tol("slope_min", d.slope_min)?,
        r2_min: tol("r2_min", d.r2_min)?,
        decay_discard: tol("decay_discard", d.decay_discard)?,
        spread_max: tol("spread_max", d.spread_max)?,
        order: tol("order", d.order)?,
        order_tol: tol("order_tol", d.order_tol)?,
    };

    Ok(RunConfig {
        experiment,
        params,
        k_split_defaulted: k_split.is_none(),
        dim,
        n_points,
        dt,
        horizon,
        sample_stride,
        seed,
        output_dir,
        mean_phi0,
        mean_phi1,
        amplitude,
        max_mode,
        beta_values,
        sample_times,
        family_scale,
        dt_levels,
        tolerances,
    })
}

impl RunConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// The resolved configuration, one `key = value` per line, with defaulted
    /// values marked. Parsing the output gives back the same configuration.
    pub fn echo(&self) -> String {
        let p = &self.params;
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let t = &self.tolerances;
        let nonlinearity = match p.nonlinearity() {
            Nonlinearity::Cubic => "cubic",
            Nonlinearity::Linear => "linear",
        };
        let k_note = if self.k_split_defaulted {
            format!(
                "  # default max(1, epsilon - 1 + 0.1) = {:?}",
                default_k_split(p.epsilon())
            )
        } else {
            String::new()
        };
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("experiment", self.experiment.to_string());
        line("beta", format!("{:?}", p.beta()));
        line("epsilon", format!("{:?}", p.epsilon()));
        line("k_split", format!("{:?}{k_note}", p.k_split()));
        line("beta0", format!("{:?}", p.beta0()));
        line("nonlinearity", nonlinearity.to_string());
        line("dim", self.dim.to_string());
        line("n_points", self.n_points.to_string());
        line("dt", format!("{:?}", self.dt));
        line("horizon", format!("{:?}", self.horizon));
        line("sample_stride", self.sample_stride.to_string());
        line("seed", self.seed.to_string());
        line("output_dir", self.output_dir.display().to_string());
        line("mean_phi0", format!("{:?}", self.mean_phi0));
        line("mean_phi1", format!("{:?}", self.mean_phi1));
        line("amplitude", format!("{:?}", self.amplitude));
        line("max_mode", self.max_mode.to_string());
        line("beta_values", list(&self.beta_values));
        line("sample_times", list(&self.sample_times));
        line("family_scale", format!("{:?}", self.family_scale));
        line("dt_levels", self.dt_levels.to_string());
        line("charge_tol", format!("{:?}", t.charge_tol));
        line("energy_tol", format!("{:?}", t.energy_tol));
        line("reconstruction_tol", format!("{:?}", t.reconstruction_tol));
        line("slope_min", format!("{:?}", t.slope_min));
        line("r2_min", format!("{:?}", t.r2_min));
        line("decay_discard", format!("{:?}", t.decay_discard));
        line("spread_max", format!("{:?}", t.spread_max));
        line("order", format!("{:?}", t.order));
        line("order_tol", format!("{:?}", t.order_tol));
        out
    }
}
