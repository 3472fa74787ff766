//! Numerical experiments across the relaxation time β: distances between
//! MPFC and PFC trajectories in a common rescaled space, the initial boundary
//! layer in `φ_t`, and long-time dissipativity.
//!
//! States with different β are compared after the rescaling
//! `T_β(u, v) = (u, √(β/β₀) v)`, which maps `𝕏_i^β` isometrically onto
//! `𝕏_i^{β₀}`. A PFC state `u` enters the common space as `(u, 0)`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrators::integrate;
use crate::model::{ModelParams, State};
use crate::spectral::{
    hm_norm, hm_norm_sq, random_band_limited, x_norm, zero_mean, Field, Grid, SobolevLevel,
};

/// Relaxation times of the default sweep.
pub const DEFAULT_BETAS: [f64; 7] = [1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.0];
pub const DEFAULT_SAMPLE_TIMES: [f64; 3] = [1.0, 2.0, 4.0];
pub const DEFAULT_HORIZON: f64 = 4.0;
pub const DEFAULT_DT: f64 = 1e-3;

/// Environment variable capping the number of sweep workers.
pub const THREADS_ENV: &str = "MPFC_THREADS";

/// Relative slack allowed when checking measured distances against the
/// Hölder envelope; covers rounding in the envelope itself.
pub const HOLDER_SLACK: f64 = 1e-12;

/// Multiplier on the largest-β late maximum in the boundary-layer check.
pub const BOUNDARY_LAYER_SLACK: f64 = 2.0;

/// Recipe for seeded initial data `φ = mean + band-limited perturbation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialDataSpec {
    pub mean_phi0: f64,
    pub mean_phi1: f64,
    pub max_mode: usize,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for InitialDataSpec {
    fn default() -> Self {
        InitialDataSpec {
            mean_phi0: 0.1,
            mean_phi1: 0.05,
            max_mode: 8,
            amplitude: 0.1,
            seed: 0,
        }
    }
}

/// `(φ₀, φ₁)`; `φ₁` is drawn from `seed + 1` so the two are independent.
pub fn initial_data(grid: &Arc<Grid>, spec: &InitialDataSpec) -> Result<(Field, Field)> {
    let draw = |mean: f64, seed: u64| -> Result<Field> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bump = random_band_limited(grid, spec.max_mode, spec.amplitude, &mut rng)?;
        bump.add(&Field::constant(grid, mean))
    };
    Ok((
        draw(spec.mean_phi0, spec.seed)?,
        draw(spec.mean_phi1, spec.seed.wrapping_add(1))?,
    ))
}

/// `T_β(u, v) = (u, √(β/β₀) v)`, tagged with `β₀`.
pub fn rescale(state: &State, beta0: f64) -> Result<State> {
    let beta = state.beta();
    if beta == 0.0 {
        return Err(Error::param(
            "beta",
            "rescaling is defined for beta > 0; PFC states enter as (u, 0)",
        ));
    }
    if !(beta0 >= beta) {
        return Err(Error::param(
            "beta0",
            format!("{beta0} is below the state's beta {beta}"),
        ));
    }
    let v = state.phi_t().scale((beta / beta0).sqrt());
    State::new(state.phi().clone(), v, beta0, state.time())
}

/// Inverse of [`rescale`]: maps a `β₀`-tagged state back to relaxation time
/// `beta`.
pub fn unrescale(state: &State, beta: f64) -> Result<State> {
    let beta0 = state.beta();
    if !(beta > 0.0 && beta <= beta0) {
        return Err(Error::param(
            "beta",
            format!("{beta} must lie in (0, {beta0}]"),
        ));
    }
    let v = state.phi_t().scale((beta0 / beta).sqrt());
    State::new(state.phi().clone(), v, beta, state.time())
}

/// Image of `state` in the common space: [`rescale`] for β > 0, `(u, 0)` for
/// PFC.
pub fn to_common_space(state: &State, beta0: f64) -> Result<State> {
    if state.beta() == 0.0 {
        State::new(
            state.phi().clone(),
            Field::zeros(state.phi().grid()),
            beta0,
            state.time(),
        )
    } else {
        rescale(state, beta0)
    }
}

/// `‖a - b‖_{𝕏₀^{β₀}}` for two states already in the common space.
pub fn common_distance(a: &State, b: &State, beta0: f64) -> Result<f64> {
    let du = a.phi().sub(b.phi())?;
    let dv = a.phi_t().sub(b.phi_t())?;
    x_norm(&du, &dv, beta0, 0)
}

#[derive(Debug, Clone)]
pub struct BetaSweep {
    beta_values: Vec<f64>,
    beta0: f64,
    phi0: Field,
    phi1: Field,
    horizon: f64,
    dt: f64,
    sample_times: Vec<f64>,
}

impl BetaSweep {
    pub fn new(
        beta_values: Vec<f64>,
        beta0: f64,
        phi0: Field,
        phi1: Field,
        horizon: f64,
        dt: f64,
        sample_times: Vec<f64>,
    ) -> Result<BetaSweep> {
        phi0.ensure_same_grid(&phi1)?;
        if !(beta0 > 0.0 && beta0.is_finite()) {
            return Err(Error::param("beta0", format!("{beta0} must be > 0")));
        }
        let descending = beta_values.windows(2).all(|w| w[0] > w[1]);
        if beta_values.len() < 2 || !descending || *beta_values.last().unwrap() != 0.0 {
            return Err(Error::UnsortedSweep);
        }
        if beta_values[0] > beta0 {
            return Err(Error::param(
                "beta_values",
                format!("{} exceeds beta0 = {beta0}", beta_values[0]),
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("{dt} must be > 0")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::param("horizon", format!("{horizon} must be > 0")));
        }
        step_index(horizon, dt)?;
        if sample_times.is_empty() || !sample_times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::param(
                "sample_times",
                "must be a nonempty strictly increasing list",
            ));
        }
        for &t in &sample_times {
            if !(t > 0.0 && t <= horizon) {
                return Err(Error::param(
                    "sample_times",
                    format!("{t} is outside (0, {horizon}]"),
                ));
            }
            step_index(t, dt)?;
        }
        Ok(BetaSweep {
            beta_values,
            beta0,
            phi0,
            phi1,
            horizon,
            dt,
            sample_times,
        })
    }

    /// Default sweep on `phi0`, `phi1`: β₀ = 1, the β ladder of
    /// [`DEFAULT_BETAS`], T = 4, samples at 1, 2, 4.
    pub fn with_defaults(phi0: Field, phi1: Field) -> Result<BetaSweep> {
        BetaSweep::new(
            DEFAULT_BETAS.to_vec(),
            1.0,
            phi0,
            phi1,
            DEFAULT_HORIZON,
            DEFAULT_DT,
            DEFAULT_SAMPLE_TIMES.to_vec(),
        )
    }

    pub fn beta_values(&self) -> &[f64] {
        &self.beta_values
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn phi0(&self) -> &Field {
        &self.phi0
    }

    pub fn phi1(&self) -> &Field {
        &self.phi1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.sample_times
    }

    pub fn steps(&self) -> usize {
        step_index(self.horizon, self.dt).expect("validated")
    }
}

/// `t / dt` as an integer, or [`Error::MisalignedSample`].
fn step_index(t: f64, dt: f64) -> Result<usize> {
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::MisalignedSample(t));
    }
    Ok(n as usize)
}

/// How `φ₁` enters the run at relaxation time β.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocityScaling {
    /// `√(β₀/β)·φ₁`, so that the rescaled initial data coincide across β.
    Rescaled,
    /// `φ₁` as given for every β.
    Fixed,
}

/// Initial state of the sweep member with relaxation time `beta`.
pub fn sweep_initial_state(
    sweep: &BetaSweep,
    beta: f64,
    scaling: VelocityScaling,
) -> Result<State> {
    if beta == 0.0 {
        return State::pfc(sweep.phi0.clone(), 0.0);
    }
    let v = match scaling {
        VelocityScaling::Rescaled => sweep.phi1.scale((sweep.beta0 / beta).sqrt()),
        VelocityScaling::Fixed => sweep.phi1.clone(),
    };
    State::new(sweep.phi0.clone(), v, beta, 0.0)
}

/// One sweep member: its states at the sample times, mapped into the common
/// space, and the series `‖φ_t(t)‖₋₁` at every step.
#[derive(Debug, Clone)]
pub struct SweepRun {
    pub beta: f64,
    pub samples: Vec<State>,
    pub phi_t_series: Vec<(f64, f64)>,
}

pub fn run_sweep_member(
    sweep: &BetaSweep,
    beta: f64,
    params: &ModelParams,
    scaling: VelocityScaling,
) -> Result<SweepRun> {
    let params = params.with_beta0(sweep.beta0)?.with_beta(beta)?;
    let initial = sweep_initial_state(sweep, beta, scaling)?;
    let sample_steps: Vec<usize> = sweep
        .sample_times
        .iter()
        .map(|&t| step_index(t, sweep.dt))
        .collect::<Result<_>>()?;
    let mut raw = Vec::with_capacity(sample_steps.len());
    let mut series = Vec::with_capacity(sweep.steps() + 1);
    integrate(&initial, sweep.dt, &params, sweep.steps(), |n, s| {
        series.push((
            n as f64 * sweep.dt,
            hm_norm(s.phi_t(), SobolevLevel::H_MINUS_1),
        ));
        if sample_steps.contains(&n) {
            raw.push(s.clone());
        }
    })?;
    let samples = raw
        .iter()
        .map(|s| to_common_space(s, sweep.beta0))
        .collect::<Result<_>>()?;
    Ok(SweepRun {
        beta,
        samples,
        phi_t_series: series,
    })
}

/// Worker cap from [`THREADS_ENV`], if set to a positive integer.
pub fn worker_cap() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs every sweep member, concurrently, in sweep order.
pub fn run_sweep(
    sweep: &BetaSweep,
    params: &ModelParams,
    scaling: VelocityScaling,
) -> Result<Vec<SweepRun>> {
    let job = || {
        sweep
            .beta_values
            .par_iter()
            .map(|&beta| run_sweep_member(sweep, beta, params, scaling))
            .collect::<Result<Vec<_>>>()
    };
    match worker_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::param("MPFC_THREADS", e.to_string()))?
            .install(job),
        None => job(),
    }
}

/// `‖Ŝ_{β₁}(t)u₀ - Ŝ_{β₂}(t)u₀‖_{𝕏₀^{β₀}}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceRecord {
    pub t: f64,
    pub beta_pair: (f64, f64),
    pub dist: f64,
}

/// Scaling summary of the records at one sample time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeSummary {
    pub t: f64,
    /// Least-squares slope of `log dist(β, 0)` against `log β`.
    pub slope_vs_pfc: f64,
    /// Least-squares slope of `log dist` against `log(β₁ - β₂)` over all pairs.
    pub slope_all_pairs: f64,
    /// `dist / Δβ^{1/6}` at the pair with the largest `Δβ`.
    pub holder_k: f64,
    /// Pairs with `dist > K Δβ^{1/6}`.
    pub holder_violations: usize,
    /// Whether `dist(β, 0)` is nonincreasing as β decreases, up to 1e-9.
    pub monotone_vs_pfc: bool,
}

#[derive(Debug, Clone)]
pub struct DistanceScan {
    pub records: Vec<DistanceRecord>,
    pub slopes: Vec<SlopeSummary>,
}

impl DistanceScan {
    pub fn slope_at(&self, t: f64) -> Option<&SlopeSummary> {
        self.slopes.iter().find(|s| s.t == t)
    }
}

/// Distances between all pairs of sweep members at each sample time, ordered
/// by `(t, β₁, β₂)` with `β₁ > β₂` in sweep order.
pub fn beta_distance_scan(sweep: &BetaSweep, params: &ModelParams) -> Result<DistanceScan> {
    let runs = run_sweep(sweep, params, VelocityScaling::Rescaled)?;
    distance_scan_from_runs(sweep, &runs)
}

pub fn distance_scan_from_runs(sweep: &BetaSweep, runs: &[SweepRun]) -> Result<DistanceScan> {
    let mut records = Vec::new();
    let mut slopes = Vec::new();
    for (ti, &t) in sweep.sample_times.iter().enumerate() {
        let first = records.len();
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                let dist =
                    common_distance(&runs[i].samples[ti], &runs[j].samples[ti], sweep.beta0)?;
                records.push(DistanceRecord {
                    t,
                    beta_pair: (runs[i].beta, runs[j].beta),
                    dist,
                });
            }
        }
        slopes.push(summarize(t, &records[first..]));
    }
    Ok(DistanceScan { records, slopes })
}

fn summarize(t: f64, records: &[DistanceRecord]) -> SlopeSummary {
    let vs_pfc: Vec<&DistanceRecord> = records.iter().filter(|r| r.beta_pair.1 == 0.0).collect();
    let slope_vs_pfc = log_log_slope(vs_pfc.iter().map(|r| (r.beta_pair.0, r.dist)));
    let slope_all_pairs = log_log_slope(
        records
            .iter()
            .map(|r| (r.beta_pair.0 - r.beta_pair.1, r.dist)),
    );
    let coarsest = records
        .iter()
        .max_by(|a, b| gap(a).total_cmp(&gap(b)))
        .expect("a sweep has at least one pair");
    let holder_k = coarsest.dist / gap(coarsest).powf(1.0 / 6.0);
    let holder_violations = records
        .iter()
        .filter(|r| r.dist > holder_k * gap(r).powf(1.0 / 6.0) * (1.0 + HOLDER_SLACK))
        .count();
    // vs_pfc is ordered by descending β
    let monotone_vs_pfc = vs_pfc.windows(2).all(|w| w[1].dist <= w[0].dist + 1e-9);
    SlopeSummary {
        t,
        slope_vs_pfc,
        slope_all_pairs,
        holder_k,
        holder_violations,
        monotone_vs_pfc,
    }
}

fn gap(r: &DistanceRecord) -> f64 {
    r.beta_pair.0 - r.beta_pair.1
}

/// Least-squares slope of `log y` on `log x`, over points with both positive.
/// NaN if fewer than two such points.
pub fn log_log_slope(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|&(x, y)| x > 0.0 && y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// The series `‖φ_t(t)‖₋₁` along a trajectory of an MPFC run.
pub fn boundary_layer_metric(trajectory: &[State], beta: f64) -> Result<Vec<(f64, f64)>> {
    if !(beta > 0.0) {
        return Err(Error::param("beta", format!("{beta} must be > 0")));
    }
    Ok(trajectory
        .iter()
        .map(|s| (s.time(), hm_norm(s.phi_t(), SobolevLevel::H_MINUS_1)))
        .collect())
}

fn window_max(series: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    // tolerate the rounding in n·dt at the window edges
    let eps = 1e-9;
    series
        .iter()
        .filter(|&&(t, _)| t >= lo - eps && t <= hi + eps)
        .map(|&(_, v)| v)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryLayerRow {
    pub beta: f64,
    /// `max ‖φ_t‖₋₁` over `t ∈ [0, early_end]`.
    pub early_max: f64,
    /// `max ‖φ_t‖₋₁` over `t ∈ [late_start, T]`.
    pub late_max: f64,
}

#[derive(Debug, Clone)]
pub struct BoundaryLayerReport {
    pub scaling: VelocityScaling,
    pub rows: Vec<BoundaryLayerRow>,
    /// Slack times the late maximum of the largest-β run.
    pub envelope: f64,
    /// Every late maximum stays at or below the envelope.
    pub late_within_envelope: bool,
    /// Early maxima strictly increase as β decreases.
    pub early_grows: bool,
}

/// Boundary-layer windows over the positive members of the sweep.
pub fn boundary_layer_scan(
    sweep: &BetaSweep,
    params: &ModelParams,
    scaling: VelocityScaling,
    early_end: f64,
    late_start: f64,
) -> Result<BoundaryLayerReport> {
    let runs = run_sweep(sweep, params, scaling)?;
    Ok(boundary_layer_report(
        &runs,
        scaling,
        early_end,
        late_start,
        sweep.horizon,
    ))
}

pub fn boundary_layer_report(
    runs: &[SweepRun],
    scaling: VelocityScaling,
    early_end: f64,
    late_start: f64,
    horizon: f64,
) -> BoundaryLayerReport {
    let rows: Vec<BoundaryLayerRow> = runs
        .iter()
        .filter(|r| r.beta > 0.0)
        .map(|r| BoundaryLayerRow {
            beta: r.beta,
            early_max: window_max(&r.phi_t_series, 0.0, early_end),
            late_max: window_max(&r.phi_t_series, late_start, horizon),
        })
        .collect();
    let envelope = rows.first().map_or(0.0, |r| r.late_max) * BOUNDARY_LAYER_SLACK;
    let late_within_envelope = rows.iter().all(|r| r.late_max <= envelope);
    let early_grows = rows.windows(2).all(|w| w[1].early_max > w[0].early_max);
    BoundaryLayerReport {
        scaling,
        rows,
        envelope,
        late_within_envelope,
        early_grows,
    }
}

/// `‖φ‖₂² + β‖φ̄_t‖²₋₁`.
pub fn dissipation_functional(state: &State) -> f64 {
    let kinetic = if state.beta() == 0.0 {
        0.0
    } else {
        state.beta() * hm_norm_sq(&zero_mean(state.phi_t()), SobolevLevel::H_MINUS_1)
    };
    hm_norm_sq(state.phi(), SobolevLevel::H2) + kinetic
}

#[derive(Debug, Clone)]
pub struct DissipativityReport {
    pub initial: Vec<f64>,
    pub terminal: Vec<f64>,
    /// `[min, max]` of the terminal values.
    pub band: (f64, f64),
    /// `(max - min) / max` of the terminal values.
    pub spread: f64,
    /// First sample time from which each run stays within
    /// `band.1 · (1 + entry_slack)`; `None` if it never settles.
    pub entry_times: Vec<Option<f64>>,
    /// `(t, value)` every `stride` steps, per member.
    pub series: Vec<Vec<(f64, f64)>>,
}

pub const DISSIPATIVITY_ENTRY_SLACK: f64 = 0.1;

/// Integrates each member of `family` to `horizon` and compares the long-time
/// values of `‖φ‖₂² + β‖φ̄_t‖²₋₁`.
pub fn dissipativity_scan(
    family: &[State],
    params: &ModelParams,
    horizon: f64,
    dt: f64,
    stride: usize,
) -> Result<DissipativityReport> {
    if family.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if stride == 0 {
        return Err(Error::param("sample_stride", "must be >= 1"));
    }
    let steps = step_index(horizon, dt)?;
    let series: Vec<Vec<(f64, f64)>> = family
        .par_iter()
        .map(|initial| {
            let p = params.with_beta0(params.beta0().max(initial.beta()))?;
            let p = p.with_beta(initial.beta())?;
            let mut out = Vec::with_capacity(steps / stride + 2);
            integrate(initial, dt, &p, steps, |n, s| {
                if n % stride == 0 || n == steps {
                    out.push((s.time(), dissipation_functional(s)));
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let initial: Vec<f64> = series.iter().map(|s| s[0].1).collect();
    let terminal: Vec<f64> = series.iter().map(|s| s.last().unwrap().1).collect();
    let lo = terminal.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = terminal.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    let ceiling = hi * (1.0 + DISSIPATIVITY_ENTRY_SLACK);
    let entry_times = series
        .iter()
        .map(|s| {
            let last_out = s.iter().rposition(|&(_, v)| v > ceiling);
            match last_out {
                None => Some(s[0].0),
                Some(i) if i + 1 < s.len() => Some(s[i + 1].0),
                Some(_) => None,
            }
        })
        .collect();
    Ok(DissipativityReport {
        initial,
        terminal,
        band: (lo, hi),
        spread,
        entry_times,
        series,
    })
}
