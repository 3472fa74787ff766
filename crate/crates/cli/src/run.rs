//! Experiment dispatch. Every experiment writes its artifacts into the
//! configured output directory and returns a list of named checks; the run
//! passes when all of them do.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mpfc_core::decomposition::{fit_decay_rate, split_integrate, Reconstruction};
use mpfc_core::experiments::{
    boundary_layer_report, dissipativity_scan, distance_scan_from_runs, initial_data,
    log_log_slope, run_sweep, BetaSweep, InitialDataSpec, VelocityScaling,
};
use mpfc_core::integrators::linear_oracle_state;
use mpfc_core::{
    energy, full_energy, hm_norm, mean_mode_exact, rhs_pfc, step, x_norm, EnergyIdentity, Field,
    Grid, ModelParams, Nonlinearity, SobolevLevel, State,
};

use crate::config::{Experiment, RunConfig};
use crate::error::{LabError, Result};
use crate::output::{write_table, write_timeseries, LogRow, RunLog, Snapshot};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Check {
        Check {
            name,
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub checks: Vec<Check>,
    /// `(name, value)` pairs reported in the summary.
    pub metrics: Vec<(String, f64)>,
    /// Informational lines that do not affect the status.
    pub notes: Vec<String>,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Process exit status: 0 iff every check passed.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn summary(&self, config: &RunConfig) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", config.experiment);
        for (name, value) in &self.metrics {
            let _ = writeln!(s, "metric {name} = {value:.16e}");
        }
        for note in &self.notes {
            let _ = writeln!(s, "note {note}");
        }
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(s, "check {} {verdict}: {}", c.name, c.detail);
        }
        let _ = writeln!(
            s,
            "status = {}",
            if self.passed() { "PASS" } else { "FAIL" }
        );
        s
    }
}

struct Ctx<'a> {
    config: &'a RunConfig,
    dir: &'a Path,
}

impl Ctx<'_> {
    /// Wraps a solver error with the key chain that produced it.
    fn err<'k>(&self, keys: &'k str) -> impl FnOnce(mpfc_core::Error) -> LabError + 'k {
        let experiment = self.config.experiment;
        move |source| {
            let mut chain = format!("experiment={experiment} > {keys}");
            if let mpfc_core::Error::InvalidParameter { name, .. } = &source {
                if !keys.split(", ").any(|k| k == *name) {
                    chain.push_str(&format!(" > {name}"));
                }
            }
            LabError::Run { chain, source }
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// Runs the configured experiment and writes `run.log`, `summary.txt` and the
/// experiment's data files into `config.output_dir`.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let dir = config.output_dir.as_path();
    fs::create_dir_all(dir).map_err(LabError::io(dir))?;
    let log = format!("# resolved configuration\n{}", config.echo());
    fs::write(dir.join("run.log"), log).map_err(LabError::io(dir.join("run.log")))?;
    let ctx = Ctx { config, dir };
    let mut outcome = RunOutcome {
        checks: Vec::new(),
        metrics: Vec::new(),
        notes: Vec::new(),
        output_dir: dir.to_path_buf(),
    };
    match config.experiment {
        Experiment::Simulate => simulate(&ctx, &mut outcome)?,
        Experiment::Decompose => decompose(&ctx, &mut outcome)?,
        Experiment::BetaSweep => beta_sweep(&ctx, &mut outcome)?,
        Experiment::Dissipativity => dissipativity(&ctx, &mut outcome)?,
        Experiment::Convergence => convergence(&ctx, &mut outcome)?,
    }
    let summary_path = dir.join("summary.txt");
    fs::write(&summary_path, outcome.summary(config)).map_err(LabError::io(&summary_path))?;
    Ok(outcome)
}

fn grid(ctx: &Ctx) -> Result<Arc<Grid>> {
    let c = ctx.config;
    Grid::with_shape(&vec![c.n_points; c.dim]).map_err(ctx.err("dim, n_points"))
}

fn seeded_data(ctx: &Ctx, grid: &Arc<Grid>) -> Result<(Field, Field)> {
    let c = ctx.config;
    let spec = InitialDataSpec {
        mean_phi0: c.mean_phi0,
        mean_phi1: c.mean_phi1,
        max_mode: c.max_mode,
        amplitude: c.amplitude,
        seed: c.seed,
    };
    initial_data(grid, &spec).map_err(ctx.err("seed, max_mode, amplitude"))
}

fn initial_state(ctx: &Ctx, grid: &Arc<Grid>) -> Result<State> {
    let (phi0, phi1) = seeded_data(ctx, grid)?;
    let beta = ctx.config.params.beta();
    let state = if beta == 0.0 {
        State::pfc(phi0, 0.0)
    } else {
        State::new(phi0, phi1, beta, 0.0)
    };
    state.map_err(ctx.err("beta"))
}

fn log_row(state: &State, params: &ModelParams, identity: &EnergyIdentity) -> LogRow {
    let phit_norm = if state.beta() == 0.0 {
        hm_norm(&rhs_pfc(state.phi(), params), SobolevLevel::H_MINUS_1)
    } else {
        hm_norm(state.phi_t(), SobolevLevel::H_MINUS_1)
    };
    LogRow {
        t: state.time(),
        mean_phi: state.phi().spectrum()[0].re,
        mean_phit: state.phi_t().spectrum()[0].re,
        charge: state.charge().value,
        energy: energy(state.phi(), params),
        full_energy: full_energy(state, params),
        hminus1_phit: phit_norm,
        h2_phi: hm_norm(state.phi(), SobolevLevel::H2),
        identity_residual: identity.signed_residual(),
    }
}

fn snapshot(ctx: &Ctx, state: &State, n: usize) -> Result<()> {
    let dir = ctx.path("snapshots");
    fs::create_dir_all(&dir).map_err(LabError::io(&dir))?;
    Snapshot::from_state(state, ctx.config.params.epsilon())
        .save(&dir.join(format!("step_{n:08}.bin")))
}

fn finite(state: &State) -> bool {
    state.phi().is_finite() && state.phi_t().is_finite()
}

fn simulate(ctx: &Ctx, out: &mut RunOutcome) -> Result<()> {
    let c = ctx.config;
    let params = &c.params;
    let grid = grid(ctx)?;
    let mut state = initial_state(ctx, &grid)?;
    let beta = state.beta();
    let charge0 = state.charge().value;
    let (m0, m1) = (state.phi().spectrum()[0].re, state.phi_t().spectrum()[0].re);
    let mut identity = EnergyIdentity::new(&state, params);
    let mut log = RunLog::default();
    let (mut charge_drift, mut mean_law_drift, mut energy_rise) = (0.0f64, 0.0f64, f64::MIN);
    let mut all_finite = finite(&state);
    let mut energy_prev = energy(state.phi(), params);
    log.rows.push(log_row(&state, params, &identity));
    snapshot(ctx, &state, 0)?;
    let steps = c.steps();
    for n in 1..=steps {
        state = step(&state, c.dt, params).map_err(ctx.err("dt, beta, k_split"))?;
        identity.push(&state).map_err(ctx.err("dt"))?;
        all_finite &= finite(&state);
        charge_drift = charge_drift.max((state.charge().value - charge0).abs());
        if beta > 0.0 {
            let t = n as f64 * c.dt;
            let (_, exact) = mean_mode_exact(beta, m0, m1, t).map_err(ctx.err("dt"))?;
            mean_law_drift = mean_law_drift.max((state.phi_t().spectrum()[0].re - exact).abs());
        } else {
            let e = energy(state.phi(), params);
            energy_rise = energy_rise.max(e - energy_prev);
            energy_prev = e;
        }
        if n % c.sample_stride == 0 || n == steps {
            log.rows.push(log_row(&state, params, &identity));
            snapshot(ctx, &state, n)?;
        }
    }
    write_timeseries(&log, &ctx.path("timeseries.csv"))?;

    let tol = &c.tolerances;
    out.metrics.push(("charge_drift".into(), charge_drift));
    out.metrics
        .push(("identity_residual".into(), identity.residual()));
    out.checks.push(Check::new(
        "finite",
        all_finite,
        "all samples finite".into(),
    ));
    out.checks.push(Check::new(
        "charge",
        charge_drift <= tol.charge_tol,
        format!(
            "max drift {charge_drift:e} vs charge_tol {:e}",
            tol.charge_tol
        ),
    ));
    if beta > 0.0 {
        out.metrics
            .push(("mean_velocity_drift".into(), mean_law_drift));
        out.checks.push(Check::new(
            "mean_velocity",
            mean_law_drift <= tol.charge_tol,
            format!(
                "max |<phi_t> - <phi_1> exp(-t/beta)| {mean_law_drift:e} vs charge_tol {:e}",
                tol.charge_tol
            ),
        ));
    } else {
        out.metrics
            .push(("max_energy_increase".into(), energy_rise));
        out.checks.push(Check::new(
            "energy_monotone",
            energy_rise <= tol.energy_tol,
            format!(
                "largest per-step increase {energy_rise:e} vs energy_tol {:e}",
                tol.energy_tol
            ),
        ));
    }
    Ok(())
}

fn decompose(ctx: &Ctx, out: &mut RunOutcome) -> Result<()> {
    let c = ctx.config;
    let params = &c.params;
    let grid = grid(ctx)?;
    let initial = initial_state(ctx, &grid)?;
    let steps = c.steps();
    let mut identity = EnergyIdentity::new(&initial, params);
    let mut log = RunLog::default();
    let mut table: Vec<[f64; 6]> = Vec::new();
    let mut d_series = Vec::new();
    let (mut worst, mut d_mean, mut fk_monotone) = (0.0f64, 0.0f64, true);
    let mut failure: Option<LabError> = None;
    let k = params.k_split();
    split_integrate(&initial, c.dt, params, steps, |n, full, d, cpart| {
        if failure.is_some() {
            return;
        }
        let r = match Reconstruction::measure(full, d, cpart) {
            Ok(r) => r,
            Err(e) => {
                failure = Some(ctx.err("dim, n_points")(e));
                return;
            }
        };
        worst = worst.max(r.relative());
        d_mean = d_mean
            .max(d.phi().spectrum()[0].re.abs())
            .max(d.phi_t().spectrum()[0].re.abs());
        // f_k' = 3s² + 1 - ε + k must stay nonnegative on the realized range
        if params.nonlinearity() == Nonlinearity::Cubic {
            fk_monotone &= d
                .phi()
                .values()
                .iter()
                .all(|&s| 3.0 * s * s + 1.0 - params.epsilon() + k >= 0.0);
        }
        if n > 0 {
            if let Err(e) = identity.push(full) {
                failure = Some(ctx.err("dt")(e));
                return;
            }
        }
        if n % c.sample_stride == 0 || n == steps {
            let (dn, cn) = match (d.x_norm(0), cpart.x_norm(1)) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    failure = Some(ctx.err("beta")(e));
                    return;
                }
            };
            d_series.push((full.time(), dn));
            table.push([r.t, dn, cn, r.phi_error, r.phi_t_error, r.relative()]);
            log.rows.push(log_row(full, params, &identity));
            if let Err(e) = snapshot(ctx, full, n) {
                failure = Some(e);
            }
        }
    })
    .map_err(ctx.err("dt, beta, k_split"))?;
    if let Some(e) = failure {
        return Err(e);
    }
    write_timeseries(&log, &ctx.path("timeseries.csv"))?;
    write_table(
        &ctx.path("decomposition.csv"),
        &[
            "t",
            "d_norm_x0",
            "c_norm_x1",
            "phi_error_h2",
            "phit_error_hminus1",
            "relative_error",
        ],
        table.iter().map(|r| r.as_slice()),
    )?;

    let tol = &c.tolerances;
    let tail: Vec<(f64, f64)> = d_series
        .into_iter()
        .filter(|&(t, _)| t >= tol.decay_discard)
        .collect();
    let fit = fit_decay_rate(&tail).map_err(ctx.err("sample_stride, decay_discard"))?;
    out.metrics
        .push(("max_relative_reconstruction_error".into(), worst));
    out.metrics.push(("decay_rate".into(), fit.rate));
    out.metrics.push(("decay_prefactor".into(), fit.prefactor));
    out.metrics.push(("decay_r_squared".into(), fit.r_squared));
    out.checks.push(Check::new(
        "reconstruction",
        worst <= tol.reconstruction_tol,
        format!(
            "max relative error {worst:e} vs reconstruction_tol {:e}",
            tol.reconstruction_tol
        ),
    ));
    out.checks.push(Check::new(
        "d_zero_mean",
        d_mean <= 1e-13,
        format!("largest mean of the decaying part {d_mean:e}"),
    ));
    out.checks.push(Check::new(
        "fk_monotone",
        fk_monotone,
        "f_k nondecreasing on the realized range".into(),
    ));
    out.checks.push(Check::new(
        "decay_rate",
        fit.rate > 0.0,
        format!("fitted rate {:e} from {} samples", fit.rate, tail.len()),
    ));
    out.checks.push(Check::new(
        "decay_fit",
        fit.r_squared >= tol.r2_min,
        format!("R^2 {} vs r2_min {}", fit.r_squared, tol.r2_min),
    ));
    Ok(())
}

fn beta_sweep(ctx: &Ctx, out: &mut RunOutcome) -> Result<()> {
    let c = ctx.config;
    let grid = grid(ctx)?;
    let (phi0, phi1) = seeded_data(ctx, &grid)?;
    let sweep = BetaSweep::new(
        c.beta_values.clone(),
        c.params.beta0(),
        phi0,
        phi1,
        c.horizon,
        c.dt,
        c.sample_times.clone(),
    )
    .map_err(ctx.err("beta_values, beta0, horizon, dt, sample_times"))?;
    let runs = run_sweep(&sweep, &c.params, VelocityScaling::Rescaled)
        .map_err(ctx.err("beta_values, dt, k_split"))?;
    let scan = distance_scan_from_runs(&sweep, &runs).map_err(ctx.err("beta_values"))?;
    let rows: Vec<[f64; 4]> = scan
        .records
        .iter()
        .map(|r| [r.t, r.beta_pair.0, r.beta_pair.1, r.dist])
        .collect();
    write_table(
        &ctx.path("distances.csv"),
        &["t", "beta1", "beta2", "dist"],
        rows.iter().map(|r| r.as_slice()),
    )?;
    let slope_rows: Vec<[f64; 6]> = scan
        .slopes
        .iter()
        .map(|s| {
            [
                s.t,
                s.slope_vs_pfc,
                s.slope_all_pairs,
                s.holder_k,
                s.holder_violations as f64,
                if s.monotone_vs_pfc { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    write_table(
        &ctx.path("slopes.csv"),
        &[
            "t",
            "slope_vs_pfc",
            "slope_all_pairs",
            "holder_k",
            "holder_violations",
            "monotone_vs_pfc",
        ],
        slope_rows.iter().map(|r| r.as_slice()),
    )?;

    let tol = &c.tolerances;
    let first = &scan.slopes[0];
    out.metrics
        .push((format!("slope_vs_pfc_t{}", first.t), first.slope_vs_pfc));
    for s in &scan.slopes {
        if !s.monotone_vs_pfc {
            out.notes.push(format!(
                "distance to the PFC run is not monotone in beta at t={}",
                s.t
            ));
        }
    }
    out.checks.push(Check::new(
        "slope_vs_pfc",
        first.slope_vs_pfc >= tol.slope_min,
        format!(
            "log-log slope {} at t={} vs slope_min {}",
            first.slope_vs_pfc, first.t, tol.slope_min
        ),
    ));
    let violations: usize = scan.slopes.iter().map(|s| s.holder_violations).sum();
    out.checks.push(Check::new(
        "holder",
        violations == 0,
        format!("{violations} pairs above K (b1-b2)^(1/6)"),
    ));

    if c.horizon >= 1.0 {
        let fixed = run_sweep(&sweep, &c.params, VelocityScaling::Fixed)
            .map_err(ctx.err("beta_values, dt, k_split"))?;
        let late = boundary_layer_report(&fixed, VelocityScaling::Fixed, 0.1, 1.0, c.horizon);
        let early = boundary_layer_report(&runs, VelocityScaling::Rescaled, 0.1, 1.0, c.horizon);
        let mut rows = Vec::new();
        for (code, rep) in [(0.0, &late), (1.0, &early)] {
            rows.extend(
                rep.rows
                    .iter()
                    .map(|r| [code, r.beta, r.early_max, r.late_max]),
            );
        }
        write_table(
            &ctx.path("boundary_layer.csv"),
            &["rescaled", "beta", "early_max", "late_max"],
            rows.iter().map(|r| r.as_slice()),
        )?;
        out.checks.push(Check::new(
            "boundary_layer_late",
            late.late_within_envelope,
            format!("late maxima within envelope {:e}", late.envelope),
        ));
        out.checks.push(Check::new(
            "boundary_layer_early",
            early.early_grows,
            "early maxima grow as beta decreases".into(),
        ));
    } else {
        out.notes
            .push("horizon < 1: boundary-layer windows skipped".to_string());
    }
    Ok(())
}

fn dissipativity(ctx: &Ctx, out: &mut RunOutcome) -> Result<()> {
    let c = ctx.config;
    let grid = grid(ctx)?;
    let base = initial_state(ctx, &grid)?;
    let widen = |u: &Field| -> Result<Field> {
        let m = u.spectrum()[0].re;
        u.lin_comb(
            c.family_scale,
            &Field::constant(&grid, m),
            1.0 - c.family_scale,
        )
        .map_err(ctx.err("family_scale"))
    };
    let phi_t = if base.beta() == 0.0 {
        base.phi_t().clone()
    } else {
        widen(base.phi_t())?
    };
    let wide =
        State::new(widen(base.phi())?, phi_t, base.beta(), 0.0).map_err(ctx.err("family_scale"))?;
    let n0 = base.x_norm(0).map_err(ctx.err("beta"))?;
    let n1 = wide.x_norm(0).map_err(ctx.err("beta"))?;
    let report = dissipativity_scan(&[base, wide], &c.params, c.horizon, c.dt, c.sample_stride)
        .map_err(ctx.err("horizon, dt, sample_stride"))?;
    let rows: Vec<[f64; 3]> = report.series[0]
        .iter()
        .zip(&report.series[1])
        .map(|(a, b)| [a.0, a.1, b.1])
        .collect();
    write_table(
        &ctx.path("dissipativity.csv"),
        &["t", "value_base", "value_wide"],
        rows.iter().map(|r| r.as_slice()),
    )?;
    out.metrics.push(("initial_norm_ratio".into(), n1 / n0));
    out.metrics.push(("terminal_spread".into(), report.spread));
    out.metrics.push(("band_low".into(), report.band.0));
    out.metrics.push(("band_high".into(), report.band.1));
    out.checks.push(Check::new(
        "terminal_spread",
        report.spread <= c.tolerances.spread_max,
        format!(
            "relative spread {:e} vs spread_max {}",
            report.spread, c.tolerances.spread_max
        ),
    ));
    out.checks.push(Check::new(
        "absorbed",
        report.entry_times.iter().all(Option::is_some),
        format!("entry times {:?}", report.entry_times),
    ));
    Ok(())
}

/// Error at `horizon` against the exact linear solution, for each step size.
pub fn linear_convergence(
    initial: &State,
    params: &ModelParams,
    dts: &[f64],
    horizon: f64,
) -> mpfc_core::Result<Vec<(f64, f64)>> {
    let params = params.with_nonlinearity(Nonlinearity::Linear)?;
    let exact = linear_oracle_state(initial, params.epsilon(), horizon)?;
    dts.iter()
        .map(|&dt| {
            let steps = (horizon / dt).round() as usize;
            let mut s = initial.clone();
            for _ in 0..steps {
                s = step(&s, dt, &params)?;
            }
            let du = s.phi().sub(exact.phi())?;
            let dv = s.phi_t().sub(exact.phi_t())?;
            Ok((dt, x_norm(&du, &dv, initial.beta(), 0)?))
        })
        .collect()
}

fn convergence(ctx: &Ctx, out: &mut RunOutcome) -> Result<()> {
    let c = ctx.config;
    let grid = grid(ctx)?;
    let initial = initial_state(ctx, &grid)?;
    if c.params.nonlinearity() != Nonlinearity::Linear {
        out.notes
            .push("convergence runs with the cubic term switched off".to_string());
    }
    let dts: Vec<f64> = (0..c.dt_levels)
        .map(|i| c.dt / f64::powi(2.0, i as i32))
        .collect();
    let errors = linear_convergence(&initial, &c.params, &dts, c.horizon)
        .map_err(ctx.err("dt, dt_levels, horizon"))?;
    let rows: Vec<[f64; 2]> = errors.iter().map(|&(a, b)| [a, b]).collect();
    write_table(
        &ctx.path("convergence.csv"),
        &["dt", "error"],
        rows.iter().map(|r| r.as_slice()),
    )?;
    let slope = log_log_slope(errors.iter().copied());
    let tol = &c.tolerances;
    out.metrics.push(("order".into(), slope));
    out.checks.push(Check::new(
        "order",
        (slope - tol.order).abs() <= tol.order_tol,
        format!(
            "observed order {slope} vs {} +/- {}",
            tol.order, tol.order_tol
        ),
    ));
    Ok(())
}
