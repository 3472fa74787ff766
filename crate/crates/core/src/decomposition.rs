//! Splitting of a trajectory into a decaying part `φ^d` and a compact part
//! `φ^c`, integrated in lockstep with the full solution.
//!
//! Both subsystems use the same implicit operator as the full scheme. The
//! decaying part carries the monotone nonlinearity `f_k` with zero-mean data,
//! so with `I(λ)` already containing `k` its explicit term is plain `f(φ^d)`.
//! The compact part takes the remainder `f_k(φ) - f_k(φ - φ^c) - kφ - kφ^c`,
//! evaluated at the previous time level. The two explicit terms add up to the
//! full scheme's `f(φ) - kφ`, so `φ^d + φ^c` reproduces `φ` up to rounding.

use crate::error::{Error, Result};
use crate::integrators::{check_implicit_symbol, imex_mpfc, imex_pfc, step, MeanRule, StepScheme};
use crate::model::{f_eval, fk_eval, nonlinear_spectrum, ModelParams, State};
use crate::spectral::{hm_norm, zero_mean, Field, SobolevLevel};

/// Largest mean tolerated on input to [`step_d`].
pub const MEAN_CONTRACT: f64 = 1e-12;

/// One step of the decaying subsystem. Both components must be zero-mean.
pub fn step_d(state_d: &State, scheme: &StepScheme, params: &ModelParams) -> Result<State> {
    for m in [
        state_d.phi().spectrum()[0].re,
        state_d.phi_t().spectrum()[0].re,
    ] {
        if !(m.abs() <= MEAN_CONTRACT) {
            return Err(Error::NonZeroMean(m));
        }
    }
    let explicit = nonlinear_spectrum(state_d.phi(), |s| f_eval(s, params));
    // drop whatever rounding put into the mean so it stays exactly zero
    let phi = zero_mean(state_d.phi());
    let phi_t = zero_mean(state_d.phi_t());
    advance(
        &phi,
        &phi_t,
        &explicit,
        state_d,
        scheme,
        params,
        MeanRule::Zero,
    )
}

/// One step of the compact subsystem, coupled explicitly to the full solution
/// `phi_full` at the same time level.
pub fn step_c(
    state_c: &State,
    phi_full: &Field,
    scheme: &StepScheme,
    params: &ModelParams,
) -> Result<State> {
    state_c.phi().ensure_same_grid(phi_full)?;
    let k = params.k_split();
    let phi_c = state_c.phi().values();
    let coupled: Vec<f64> = phi_full
        .values()
        .iter()
        .zip(phi_c)
        .map(|(&u, &c)| fk_eval(u, params) - fk_eval(u - c, params) - k * u - k * c)
        .collect();
    let coupled = Field::from_values(phi_full.grid(), coupled)?;
    let explicit = nonlinear_spectrum(&coupled, |s| s);
    advance(
        state_c.phi(),
        state_c.phi_t(),
        &explicit,
        state_c,
        scheme,
        params,
        MeanRule::Exact,
    )
}

fn advance(
    phi: &Field,
    phi_t: &Field,
    explicit: &Field,
    state: &State,
    scheme: &StepScheme,
    params: &ModelParams,
    mean: MeanRule,
) -> Result<State> {
    let (dt, k, beta) = (scheme.dt(), params.k_split(), state.beta());
    let time = state.time() + dt;
    if beta == 0.0 {
        check_implicit_symbol(phi.grid(), dt, k)?;
        let next = imex_pfc(phi, explicit, dt, k);
        return State::new(next, Field::zeros(phi.grid()), 0.0, time);
    }
    let (next, next_t) = imex_mpfc(phi, phi_t, explicit, dt, beta, k, mean)?;
    Ok(State::from_parts(next, next_t, beta, time))
}

/// Initial data of the two subsystems: `(φ̄₀, φ̄₁)` and `(⟨φ₀⟩, ⟨φ₁⟩)`.
pub fn split_initial(initial: &State) -> (State, State) {
    let grid = initial.phi().grid();
    let (beta, t) = (initial.beta(), initial.time());
    let d = State::from_parts(
        zero_mean(initial.phi()),
        zero_mean(initial.phi_t()),
        beta,
        t,
    );
    let c = State::from_parts(
        Field::constant(grid, initial.phi().spectrum()[0].re),
        Field::constant(grid, initial.phi_t().spectrum()[0].re),
        beta,
        t,
    );
    (d, c)
}

/// Discrepancy between the full state and `φ^d + φ^c` at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction {
    pub t: f64,
    /// `‖φ - (φ^d + φ^c)‖₂`
    pub phi_error: f64,
    /// `‖φ_t - (φ^d_t + φ^c_t)‖₋₁`
    pub phi_t_error: f64,
    /// `‖φ‖₂`
    pub phi_norm: f64,
    /// `‖φ_t‖₋₁`
    pub phi_t_norm: f64,
}

impl Reconstruction {
    pub fn measure(full: &State, d: &State, c: &State) -> Result<Reconstruction> {
        let phi_err = full.phi().sub(&d.phi().add(c.phi())?)?;
        let phi_t_err = full.phi_t().sub(&d.phi_t().add(c.phi_t())?)?;
        Ok(Reconstruction {
            t: full.time(),
            phi_error: hm_norm(&phi_err, SobolevLevel::H2),
            phi_t_error: hm_norm(&phi_t_err, SobolevLevel::H_MINUS_1),
            phi_norm: hm_norm(full.phi(), SobolevLevel::H2),
            phi_t_norm: hm_norm(full.phi_t(), SobolevLevel::H_MINUS_1),
        })
    }

    /// Both errors below `tol · (1 + norm)`.
    pub fn within(&self, tol: f64) -> bool {
        self.phi_error <= tol * (1.0 + self.phi_norm)
            && self.phi_t_error <= tol * (1.0 + self.phi_t_norm)
    }

    /// Larger of the two relative errors `error / (1 + norm)`.
    pub fn relative(&self) -> f64 {
        (self.phi_error / (1.0 + self.phi_norm)).max(self.phi_t_error / (1.0 + self.phi_t_norm))
    }
}

/// Advances the full solution and both parts in one loop. `observe` sees step
/// `0` and every step after, as `(n, full, d, c)`.
pub fn split_integrate(
    initial: &State,
    dt: f64,
    params: &ModelParams,
    steps: usize,
    mut observe: impl FnMut(usize, &State, &State, &State),
) -> Result<(State, State, State)> {
    let scheme = StepScheme::for_beta(initial.beta(), dt)?;
    let mut full = initial.clone();
    let (mut d, mut c) = split_initial(initial);
    observe(0, &full, &d, &c);
    for n in 1..=steps {
        let c_next = step_c(&c, full.phi(), &scheme, params)?;
        let d_next = step_d(&d, &scheme, params)?;
        full = step(&full, dt, params)?;
        c = c_next;
        d = d_next;
        observe(n, &full, &d, &c);
    }
    Ok((full, d, c))
}

/// Stored output of [`run_split`].
#[derive(Debug, Clone)]
pub struct SplitRun {
    /// States every `stride` steps, plus the final one.
    pub full: Vec<State>,
    pub d_part: Vec<State>,
    pub c_part: Vec<State>,
    pub k_split: f64,
    /// One entry per step, including step 0.
    pub reconstruction: Vec<Reconstruction>,
}

impl SplitRun {
    pub fn max_relative_error(&self) -> f64 {
        self.reconstruction
            .iter()
            .map(Reconstruction::relative)
            .fold(0.0, f64::max)
    }

    /// `(t, ‖(φ^d, φ^d_t)‖_{𝕏₀^β})` over the stored states.
    pub fn d_norm_series(&self) -> Result<Vec<(f64, f64)>> {
        self.d_part
            .iter()
            .map(|s| Ok((s.time(), s.x_norm(0)?)))
            .collect()
    }
}

pub fn run_split(
    initial: &State,
    dt: f64,
    params: &ModelParams,
    steps: usize,
    stride: usize,
) -> Result<SplitRun> {
    if stride == 0 {
        return Err(Error::param("sample_stride", "must be >= 1"));
    }
    let mut run = SplitRun {
        full: Vec::new(),
        d_part: Vec::new(),
        c_part: Vec::new(),
        k_split: params.k_split(),
        reconstruction: Vec::with_capacity(steps + 1),
    };
    let mut failure = None;
    split_integrate(initial, dt, params, steps, |n, full, d, c| {
        match Reconstruction::measure(full, d, c) {
            Ok(r) => run.reconstruction.push(r),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
        if n % stride == 0 || n == steps {
            run.full.push(full.clone());
            run.d_part.push(d.clone());
            run.c_part.push(c.clone());
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(run),
    }
}

/// Least-squares fit of `log(value) = log(prefactor) - rate·t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Decay rate; negative if the series grows.
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

pub const MIN_FIT_SAMPLES: usize = 10;

pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<DecayFit> {
    if series.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: series.len(),
        });
    }
    if let Some(&(t, value)) = series.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositiveValue { t, value });
    }
    let n = series.len() as f64;
    let t_mean = series.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = series.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(t, v) in series {
        let (dx, dy) = (t - t_mean, v.ln() - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::param("series", "all sample times coincide"));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let ss_res = syy - slope * sxy;
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(DecayFit {
        rate: -slope,
        prefactor: intercept.exp(),
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{mean, random_band_limited, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn perturbed(grid: &Arc<Grid>, beta: f64, seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phi = random_band_limited(grid, 8, 0.3, &mut rng)
            .unwrap()
            .add(&Field::constant(grid, 0.1))
            .unwrap();
        let v = if beta == 0.0 {
            Field::zeros(grid)
        } else {
            random_band_limited(grid, 8, 0.3, &mut rng)
                .unwrap()
                .add(&Field::constant(grid, 0.05))
                .unwrap()
        };
        State::new(phi, v, beta, 0.0).unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = Grid::new(1, 32).unwrap();
        let params = ModelParams::new(0.1, 0.5).unwrap();
        let scheme = StepScheme::for_beta(0.1, 1e-3).unwrap();
        let mut s = State::new(Field::zeros(&grid), Field::zeros(&grid), 0.1, 0.0).unwrap();
        for _ in 0..50 {
            s = step_d(&s, &scheme, &params).unwrap();
        }
        assert!(s.phi().values().iter().all(|&v| v == 0.0));
        assert!(s.phi_t().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn step_d_rejects_nonzero_mean() {
        let grid = Grid::new(1, 16).unwrap();
        let params = ModelParams::new(0.1, 0.5).unwrap();
        let scheme = StepScheme::for_beta(0.1, 1e-3).unwrap();
        let s = State::new(Field::constant(&grid, 1e-6), Field::zeros(&grid), 0.1, 0.0).unwrap();
        assert!(matches!(
            step_d(&s, &scheme, &params),
            Err(Error::NonZeroMean(_))
        ));
        let s = State::new(Field::zeros(&grid), Field::constant(&grid, -1e-9), 0.1, 0.0).unwrap();
        assert!(step_d(&s, &scheme, &params).is_err());
    }

    #[test]
    fn step_c_rejects_foreign_grid() {
        let grid = Grid::new(1, 16).unwrap();
        let other = Grid::new(1, 32).unwrap();
        let params = ModelParams::new(0.1, 0.5).unwrap();
        let scheme = StepScheme::for_beta(0.1, 1e-3).unwrap();
        let s = State::new(Field::zeros(&grid), Field::zeros(&grid), 0.1, 0.0).unwrap();
        assert_eq!(
            step_c(&s, &Field::zeros(&other), &scheme, &params).unwrap_err(),
            Error::GridMismatch
        );
    }

    #[test]
    fn d_part_keeps_zero_mean() {
        let grid = Grid::new(1, 32).unwrap();
        let params = ModelParams::new(0.1, 0.5).unwrap();
        let (mut d, _) = split_initial(&perturbed(&grid, 0.1, 1));
        let scheme = StepScheme::for_beta(0.1, 1e-3).unwrap();
        for _ in 0..10_000 {
            d = step_d(&d, &scheme, &params).unwrap();
            assert!(mean(d.phi()).unwrap().abs() <= 1e-13);
            assert!(mean(d.phi_t()).unwrap().abs() <= 1e-13);
        }
    }

    #[test]
    fn parts_reconstruct_the_full_solution() {
        let grid = Grid::new(1, 64).unwrap();
        for beta in [0.1, 0.0] {
            let params = ModelParams::new(beta, 0.5).unwrap();
            let run = run_split(&perturbed(&grid, beta, 2), 1e-3, &params, 500, 50).unwrap();
            assert_eq!(run.reconstruction.len(), 501);
            assert_eq!(run.full.len(), 11);
            assert!(run.reconstruction.iter().all(|r| r.within(1e-8)));
            assert!(
                run.max_relative_error() < 1e-11,
                "{}",
                run.max_relative_error()
            );
        }
    }

    #[test]
    fn c_part_starts_from_the_means() {
        let grid = Grid::new(1, 32).unwrap();
        let s = perturbed(&grid, 0.5, 3);
        let (d, c) = split_initial(&s);
        let m0 = s.phi().spectrum()[0].re;
        assert!(c.phi().values().iter().all(|&v| (v - m0).abs() < 1e-15));
        assert!(d.phi().spectrum()[0].re.abs() < 1e-15);
        let r = Reconstruction::measure(&s, &d, &c).unwrap();
        assert!(r.relative() < 1e-14);
    }

    #[test]
    fn d_part_decays_and_c_part_stays_bounded() {
        let grid = Grid::new(1, 64).unwrap();
        let params = ModelParams::new(0.1, 0.5).unwrap();
        let run = run_split(&perturbed(&grid, 0.1, 4), 1e-3, &params, 2000, 20).unwrap();
        let series: Vec<_> = run
            .d_norm_series()
            .unwrap()
            .into_iter()
            .filter(|&(t, _)| t >= 0.2)
            .collect();
        let fit = fit_decay_rate(&series).unwrap();
        assert!(fit.rate > 0.0, "{fit:?}");
        assert!(fit.r_squared >= 0.99, "{fit:?}");

        let c_sup = run
            .c_part
            .iter()
            .map(|s| s.x_norm(1).unwrap())
            .fold(0.0, f64::max);
        assert!(c_sup.is_finite() && c_sup < 1e3, "{c_sup}");
    }

    #[test]
    fn splitting_is_monotone_on_realized_range() {
        let grid = Grid::new(1, 64).unwrap();
        let params = ModelParams::new(0.1, 0.5).unwrap();
        let run = run_split(&perturbed(&grid, 0.1, 5), 1e-3, &params, 300, 10).unwrap();
        let (lo, hi) = run
            .d_part
            .iter()
            .flat_map(|s| s.phi().values().iter().copied())
            .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(v), b.max(v)));
        let samples: Vec<f64> = (0..=1000)
            .map(|i| fk_eval(lo + (hi - lo) * i as f64 / 1000.0, &params))
            .collect();
        assert!(samples.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let series: Vec<_> = (0..20)
            .map(|i| {
                let t = 0.1 * i as f64;
                (t, 3.5 * (-1.7 * t).exp())
            })
            .collect();
        let fit = fit_decay_rate(&series).unwrap();
        assert!((fit.rate - 1.7).abs() < 1e-10);
        assert!((fit.prefactor - 3.5).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let flat: Vec<_> = (0..12).map(|i| (i as f64, 2.0)).collect();
        let fit = fit_decay_rate(&flat).unwrap();
        assert_eq!(fit.rate, 0.0);
        assert!((fit.prefactor - 2.0).abs() < 1e-14);
    }

    #[test]
    fn fit_rejects_bad_series() {
        let short: Vec<_> = (0..9).map(|i| (i as f64, 1.0)).collect();
        assert_eq!(
            fit_decay_rate(&short).unwrap_err(),
            Error::TooFewSamples { needed: 10, got: 9 }
        );
        let mut bad: Vec<_> = (0..10).map(|i| (i as f64, 1.0)).collect();
        bad[4].1 = 0.0;
        assert_eq!(
            fit_decay_rate(&bad).unwrap_err(),
            Error::NonPositiveValue { t: 4.0, value: 0.0 }
        );
    }
}
