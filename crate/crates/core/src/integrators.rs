//! First-order implicit-explicit time stepping for PFC and MPFC.
//!
//! Every nonzero Fourier mode is advanced with the stiff linear operator
//! `Δ(Δ² + 2Δ + k)` taken implicitly and `Δ(f(φ) - kφ)` taken explicitly.
//! With `λ = |2πκ|²` and `I(λ) = λ(λ² - 2λ + k)` the PFC update is
//!
//! ```text
//! (1 + dt I) φ̂ⁿ⁺¹ = φ̂ⁿ - dt λ ĝ(φⁿ),           g = f - k·id
//! ```
//!
//! and the MPFC update, with `v = φ_t`, is
//!
//! ```text
//! (β/dt + 1 + dt I) v̂ⁿ⁺¹ = (β/dt) v̂ⁿ - I φ̂ⁿ - λ ĝ(φⁿ),   φ̂ⁿ⁺¹ = φ̂ⁿ + dt v̂ⁿ⁺¹
//! ```
//!
//! The mean mode obeys `βm'' + m' = 0` and is advanced with its exact
//! propagator, so the charge `β⟨φ_t⟩ + ⟨φ⟩` is conserved to rounding.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{
    energy, f_eval, full_energy, mean_mode_exact, nonlinear_spectrum, rhs_pfc, ModelParams, State,
};
use crate::spectral::{hm_norm_sq, zero_mean, Field, Grid, SobolevLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    PfcImex1,
    MpfcImex1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepScheme {
    kind: SchemeKind,
    dt: f64,
}

impl StepScheme {
    pub fn new(kind: SchemeKind, dt: f64) -> Result<StepScheme> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("{dt} must be > 0")));
        }
        Ok(StepScheme { kind, dt })
    }

    /// PFC scheme for `β = 0`, MPFC otherwise.
    pub fn for_beta(beta: f64, dt: f64) -> Result<StepScheme> {
        let kind = if beta == 0.0 {
            SchemeKind::PfcImex1
        } else {
            SchemeKind::MpfcImex1
        };
        StepScheme::new(kind, dt)
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

/// Checks that the implicit diagonal `1 + dt λ(λ² - 2λ + k)` is positive on
/// every mode of `grid`.
pub fn check_implicit_symbol(grid: &Grid, dt: f64, k: f64) -> Result<()> {
    for (idx, &l) in grid.lambda().iter().enumerate() {
        let symbol = l * (l * l - 2.0 * l + k);
        let diag = 1.0 + dt * symbol;
        if !(diag > 0.0) || symbol < 0.0 {
            return Err(Error::NonPositiveSymbol {
                mode: grid.kappa(idx).to_vec(),
                value: symbol,
            });
        }
    }
    Ok(())
}

#[inline]
fn implicit_symbol(l: f64, k: f64) -> f64 {
    l * (l * l - 2.0 * l + k)
}

/// Treatment of the `κ = 0` mode in [`imex_mpfc`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum MeanRule {
    /// Exact propagator of `βm'' + m' = 0`.
    Exact,
    /// Mean forced to zero in both components.
    Zero,
}

/// One PFC step given the dealiased explicit field `g`.
pub(crate) fn imex_pfc(phi: &Field, explicit: &Field, dt: f64, k: f64) -> Field {
    let lambda = phi.grid().lambda();
    let spectrum: Vec<Complex64> = phi
        .spectrum()
        .iter()
        .zip(explicit.spectrum())
        .zip(lambda)
        .enumerate()
        .map(|(i, ((&p, &g), &l))| {
            if i == 0 {
                p
            } else {
                (p - g * (dt * l)) / (1.0 + dt * implicit_symbol(l, k))
            }
        })
        .collect();
    Field::from_spectrum(phi.grid(), spectrum).expect("length matches grid")
}

/// One MPFC step given the dealiased explicit field `g`. Returns `(φⁿ⁺¹, vⁿ⁺¹)`.
pub(crate) fn imex_mpfc(
    phi: &Field,
    v: &Field,
    explicit: &Field,
    dt: f64,
    beta: f64,
    k: f64,
    mean: MeanRule,
) -> Result<(Field, Field)> {
    let lambda = phi.grid().lambda();
    let n = lambda.len();
    let (phi_hat, v_hat, g_hat) = (phi.spectrum(), v.spectrum(), explicit.spectrum());
    let mut phi_new = vec![Complex64::default(); n];
    let mut v_new = vec![Complex64::default(); n];
    let inertia = beta / dt;
    for i in 1..n {
        let l = lambda[i];
        let stiff = implicit_symbol(l, k);
        let denom = inertia + 1.0 + dt * stiff;
        assert!(denom > 0.0, "singular mode solve at index {i}");
        let v_next = (v_hat[i] * inertia - phi_hat[i] * stiff - g_hat[i] * l) / denom;
        v_new[i] = v_next;
        phi_new[i] = phi_hat[i] + v_next * dt;
    }
    match mean {
        MeanRule::Exact => {
            let (m, mv) = mean_mode_exact(beta, phi_hat[0].re, v_hat[0].re, dt)?;
            phi_new[0] = Complex64::new(m, 0.0);
            v_new[0] = Complex64::new(mv, 0.0);
        }
        MeanRule::Zero => {}
    }
    Ok((
        Field::from_spectrum(phi.grid(), phi_new)?,
        Field::from_spectrum(phi.grid(), v_new)?,
    ))
}

/// Explicit part `f(φ) - kφ` of the splitting, dealiased.
fn split_explicit(phi: &Field, params: &ModelParams) -> Field {
    let k = params.k_split();
    nonlinear_spectrum(phi, |s| f_eval(s, params) - k * s)
}

/// One PFC step. The mean of `φ` is left untouched.
pub fn step_pfc(state: &State, scheme: &StepScheme, params: &ModelParams) -> Result<State> {
    if state.beta() != 0.0 {
        return Err(Error::InvalidState(format!(
            "PFC step needs beta = 0, state has {}",
            state.beta()
        )));
    }
    let dt = scheme.dt();
    check_implicit_symbol(state.phi().grid(), dt, params.k_split())?;
    let explicit = split_explicit(state.phi(), params);
    let phi = imex_pfc(state.phi(), &explicit, dt, params.k_split());
    let zero = Field::zeros(phi.grid());
    Ok(State::from_parts(phi, zero, 0.0, state.time() + dt))
}

/// One MPFC step with the exact mean-mode propagator.
pub fn step_mpfc(state: &State, scheme: &StepScheme, params: &ModelParams) -> Result<State> {
    let beta = state.beta();
    if !(beta > 0.0) {
        return Err(Error::InvalidState(
            "MPFC step needs beta > 0; use step_pfc for beta = 0".into(),
        ));
    }
    let dt = scheme.dt();
    let explicit = split_explicit(state.phi(), params);
    let (phi, v) = imex_mpfc(
        state.phi(),
        state.phi_t(),
        &explicit,
        dt,
        beta,
        params.k_split(),
        MeanRule::Exact,
    )?;
    Ok(State::from_parts(phi, v, beta, state.time() + dt))
}

/// Dispatches on `state.beta()`: PFC for `β = 0`, MPFC otherwise.
pub fn step(state: &State, dt: f64, params: &ModelParams) -> Result<State> {
    let scheme = StepScheme::for_beta(state.beta(), dt)?;
    match scheme.kind() {
        SchemeKind::PfcImex1 => step_pfc(state, &scheme, params),
        SchemeKind::MpfcImex1 => step_mpfc(state, &scheme, params),
    }
}

/// Advances `steps` times, calling `observe` on the initial state and after
/// every step. Returns the final state.
pub fn integrate(
    initial: &State,
    dt: f64,
    params: &ModelParams,
    steps: usize,
    mut observe: impl FnMut(usize, &State),
) -> Result<State> {
    let scheme = StepScheme::for_beta(initial.beta(), dt)?;
    if scheme.kind() == SchemeKind::PfcImex1 {
        check_implicit_symbol(initial.phi().grid(), dt, params.k_split())?;
    }
    let mut state = initial.clone();
    observe(0, &state);
    for n in 1..=steps {
        state = match scheme.kind() {
            SchemeKind::PfcImex1 => step_pfc(&state, &scheme, params)?,
            SchemeKind::MpfcImex1 => step_mpfc(&state, &scheme, params)?,
        };
        observe(n, &state);
    }
    Ok(state)
}

/// Exact solution of the linearised single-mode equation
/// `βc'' + c' + σc = 0`, `σ = λ(λ² - 2λ + 1 - ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModeOracle {
    lambda: f64,
    beta: f64,
    epsilon: f64,
}

impl LinearModeOracle {
    pub fn new(lambda: f64, beta: f64, epsilon: f64) -> Result<LinearModeOracle> {
        if !(lambda >= 0.0) {
            return Err(Error::param("lambda", format!("{lambda} must be >= 0")));
        }
        if !(beta >= 0.0) {
            return Err(Error::param("beta", format!("{beta} must be >= 0")));
        }
        Ok(LinearModeOracle {
            lambda,
            beta,
            epsilon,
        })
    }

    /// Decay coefficient `σ`.
    pub fn sigma(&self) -> f64 {
        let l = self.lambda;
        l * (l * l - 2.0 * l + 1.0 - self.epsilon)
    }

    pub fn solve(&self, c0: f64, c1: f64, t: f64) -> Result<(f64, f64)> {
        oracle_solve(self, c0, c1, t)
    }
}

/// `(c(t), c'(t))` for [`LinearModeOracle`] with `c(0) = c0`, `c'(0) = c1`.
/// For `β = 0` the equation is first order and `c1` is ignored.
pub fn oracle_solve(oracle: &LinearModeOracle, c0: f64, c1: f64, t: f64) -> Result<(f64, f64)> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    let sigma = oracle.sigma();
    let beta = oracle.beta;
    if beta == 0.0 {
        let c = c0 * (-sigma * t).exp();
        return Ok((c, -sigma * c));
    }
    let disc = 1.0 - 4.0 * beta * sigma;
    let alpha = -0.5 / beta;
    if disc < 0.0 {
        let omega = (-disc).sqrt() / (2.0 * beta);
        let (s, c) = (omega * t).sin_cos();
        let b = (c1 - alpha * c0) / omega;
        let envelope = (alpha * t).exp();
        let value = envelope * (c0 * c + b * s);
        let rate = envelope * (alpha * (c0 * c + b * s) + omega * (b * c - c0 * s));
        return Ok((value, rate));
    }
    let gamma = disc.sqrt() / (2.0 * beta);
    if gamma * t < 1e-6 {
        // near-critical damping: expand sinh(γt)/γ and cosh(γt) in γt
        let g2t2 = (gamma * t).powi(2);
        let cosh = 1.0 + g2t2 / 2.0;
        let sinhc = t * (1.0 + g2t2 / 6.0);
        let b = c1 - alpha * c0;
        let envelope = (alpha * t).exp();
        let value = envelope * (c0 * cosh + b * sinhc);
        // d/dt[cosh] = γ² sinhc, d/dt[sinhc] = cosh
        let rate = alpha * value + envelope * (c0 * gamma * gamma * sinhc + b * cosh);
        return Ok((value, rate));
    }
    // distinct real roots, computed without cancellation
    let root_slow = -2.0 * sigma / (1.0 + disc.sqrt());
    let root_fast = (-1.0 - disc.sqrt()) / (2.0 * beta);
    let a_slow = (c1 - root_fast * c0) / (root_slow - root_fast);
    let a_fast = c0 - a_slow;
    let e_slow = (root_slow * t).exp();
    let e_fast = (root_fast * t).exp();
    Ok((
        a_slow * e_slow + a_fast * e_fast,
        a_slow * root_slow * e_slow + a_fast * root_fast * e_fast,
    ))
}

/// Applies the linear oracle mode by mode to `initial`, returning the exact
/// linearised state at time `initial.time() + t`.
pub fn linear_oracle_state(initial: &State, epsilon: f64, t: f64) -> Result<State> {
    let grid = initial.phi().grid();
    let beta = initial.beta();
    let (p0, v0) = (initial.phi().spectrum(), initial.phi_t().spectrum());
    let mut phi = Vec::with_capacity(grid.len());
    let mut v = Vec::with_capacity(grid.len());
    for (i, &l) in grid.lambda().iter().enumerate() {
        let oracle = LinearModeOracle::new(l, beta, epsilon)?;
        let (re, re_t) = oracle.solve(p0[i].re, v0[i].re, t)?;
        let (im, im_t) = oracle.solve(p0[i].im, v0[i].im, t)?;
        phi.push(Complex64::new(re, im));
        v.push(if beta == 0.0 {
            Complex64::default()
        } else {
            Complex64::new(re_t, im_t)
        });
    }
    Ok(State::from_parts(
        Field::from_spectrum(grid, phi)?,
        Field::from_spectrum(grid, v)?,
        beta,
        initial.time() + t,
    ))
}

/// Running evaluation of
/// `ℰ(t) - ℰ(s) + ∫‖φ̄_t‖²₋₁ dτ - ∫⟨φ_t⟩ ∫_Q f(φ) dx dτ`
/// with trapezoidal time integrals over the pushed states.
///
/// `ℰ = (β/2)‖φ̄_t‖²₋₁ + E(φ)`. For `β = 0` the velocity is taken from the
/// PFC right-hand side and the forcing term vanishes.
#[derive(Debug, Clone)]
pub struct EnergyIdentity {
    params: ModelParams,
    beta: f64,
    initial_energy: f64,
    current_energy: f64,
    last_time: f64,
    last_dissipation: f64,
    last_forcing: f64,
    dissipated: f64,
    forced: f64,
    samples: usize,
}

impl EnergyIdentity {
    pub fn new(state: &State, params: &ModelParams) -> EnergyIdentity {
        let (energy, dissipation, forcing) = Self::terms(state, params);
        EnergyIdentity {
            params: *params,
            beta: state.beta(),
            initial_energy: energy,
            current_energy: energy,
            last_time: state.time(),
            last_dissipation: dissipation,
            last_forcing: forcing,
            dissipated: 0.0,
            forced: 0.0,
            samples: 1,
        }
    }

    fn terms(state: &State, params: &ModelParams) -> (f64, f64, f64) {
        if state.beta() == 0.0 {
            let velocity = rhs_pfc(state.phi(), params);
            let dissipation = hm_norm_sq(&zero_mean(&velocity), SobolevLevel::H_MINUS_1);
            return (energy(state.phi(), params), dissipation, 0.0);
        }
        let dissipation = hm_norm_sq(&zero_mean(state.phi_t()), SobolevLevel::H_MINUS_1);
        let mean_velocity = state.phi_t().spectrum()[0].re;
        let values = state.phi().values();
        let f_integral =
            values.iter().map(|&s| f_eval(s, params)).sum::<f64>() / values.len() as f64;
        (
            full_energy(state, params),
            dissipation,
            mean_velocity * f_integral,
        )
    }

    pub fn push(&mut self, state: &State) -> Result<()> {
        if state.beta() != self.beta {
            return Err(Error::InvalidState("trajectory changes beta".into()));
        }
        let (energy, dissipation, forcing) = Self::terms(state, &self.params);
        let h = state.time() - self.last_time;
        self.dissipated += 0.5 * h * (dissipation + self.last_dissipation);
        self.forced += 0.5 * h * (forcing + self.last_forcing);
        self.current_energy = energy;
        self.last_time = state.time();
        self.last_dissipation = dissipation;
        self.last_forcing = forcing;
        self.samples += 1;
        Ok(())
    }

    /// Signed residual; zero for an exact solution.
    pub fn signed_residual(&self) -> f64 {
        self.current_energy - self.initial_energy + self.dissipated - self.forced
    }

    pub fn residual(&self) -> f64 {
        self.signed_residual().abs()
    }

    pub fn samples(&self) -> usize {
        self.samples
    }
}

/// Absolute energy-identity residual between the first and last state.
pub fn energy_identity_residual(trajectory: &[State], params: &ModelParams) -> Result<f64> {
    if trajectory.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: trajectory.len(),
        });
    }
    let mut ledger = EnergyIdentity::new(&trajectory[0], params);
    for state in &trajectory[1..] {
        ledger.push(state)?;
    }
    Ok(ledger.residual())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Nonlinearity;
    use crate::spectral::{mean, random_band_limited, Grid};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn rk4_second_order(
        beta: f64,
        sigma: f64,
        c0: f64,
        c1: f64,
        t: f64,
        steps: usize,
    ) -> (f64, f64) {
        let h = t / steps as f64;
        let rhs = |c: f64, v: f64| (v, (-v - sigma * c) / beta);
        let (mut c, mut v) = (c0, c1);
        for _ in 0..steps {
            let k1 = rhs(c, v);
            let k2 = rhs(c + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = rhs(c + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = rhs(c + h * k3.0, v + h * k3.1);
            c += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (c, v)
    }

    #[test]
    fn scheme_requires_positive_dt() {
        assert!(StepScheme::new(SchemeKind::PfcImex1, 0.0).is_err());
        assert!(StepScheme::new(SchemeKind::MpfcImex1, -1e-3).is_err());
        assert_eq!(
            StepScheme::for_beta(0.0, 0.1).unwrap().kind(),
            SchemeKind::PfcImex1
        );
    }

    #[test]
    fn symbol_check_names_offending_mode() {
        let grid = Grid::new(1, 16).unwrap();
        assert!(check_implicit_symbol(&grid, 1e-3, 1.0).is_ok());
        match check_implicit_symbol(&grid, 1e-3, -2000.0) {
            Err(Error::NonPositiveSymbol { mode, .. }) => assert_eq!(mode.len(), 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_is_pfc_fixed_point() {
        let grid = Grid::new(1, 64).unwrap();
        let params = ModelParams::new(0.0, 0.5).unwrap();
        let s = State::pfc(Field::constant(&grid, 0.2), 0.0).unwrap();
        let scheme = StepScheme::new(SchemeKind::PfcImex1, 0.1).unwrap();
        let next = step_pfc(&s, &scheme, &params).unwrap();
        for v in next.phi().values() {
            assert!((v - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn pfc_preserves_mean_exactly() {
        let grid = Grid::new(1, 64).unwrap();
        let params = ModelParams::new(0.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = random_band_limited(&grid, 8, 0.2, &mut rng)
            .unwrap()
            .add(&Field::constant(&grid, 0.15))
            .unwrap();
        let m0 = mean(&phi).unwrap();
        let s = State::pfc(phi, 0.0).unwrap();
        let end = integrate(&s, 1e-3, &params, 50, |_, st| {
            assert_eq!(mean(st.phi()).unwrap(), m0);
        })
        .unwrap();
        assert!((end.time() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn pfc_rejects_inertial_state() {
        let grid = Grid::new(1, 16).unwrap();
        let params = ModelParams::new(0.5, 0.5).unwrap();
        let s = State::new(Field::zeros(&grid), Field::zeros(&grid), 0.5, 0.0).unwrap();
        let scheme = StepScheme::new(SchemeKind::PfcImex1, 0.1).unwrap();
        assert!(step_pfc(&s, &scheme, &params).is_err());
        let p = State::pfc(Field::zeros(&grid), 0.0).unwrap();
        let scheme = StepScheme::new(SchemeKind::MpfcImex1, 0.1).unwrap();
        assert!(step_mpfc(&p, &scheme, &params).is_err());
    }

    #[test]
    fn mpfc_mean_modes_follow_exact_law() {
        let grid = Grid::new(1, 32).unwrap();
        let params = ModelParams::new(0.5, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = random_band_limited(&grid, 5, 0.1, &mut rng)
            .unwrap()
            .add(&Field::constant(&grid, 0.1))
            .unwrap();
        let v = random_band_limited(&grid, 5, 0.1, &mut rng)
            .unwrap()
            .add(&Field::constant(&grid, 0.05))
            .unwrap();
        let s = State::new(phi, v, 0.5, 0.0).unwrap();
        let q0 = s.charge().value;
        integrate(&s, 1e-3, &params, 2000, |n, st| {
            let expected = 0.05 * (-(n as f64) * 1e-3 / 0.5).exp();
            assert!((mean(st.phi_t()).unwrap() - expected).abs() <= 1e-13);
            assert!((st.charge().value - q0).abs() <= 1e-13);
        })
        .unwrap();
    }

    #[test]
    fn small_beta_mpfc_step_approaches_pfc_step() {
        let grid = Grid::new(1, 64).unwrap();
        let params = ModelParams::new(0.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = random_band_limited(&grid, 8, 0.1, &mut rng).unwrap();
        let pfc = step_pfc(
            &State::pfc(phi.clone(), 0.0).unwrap(),
            &StepScheme::new(SchemeKind::PfcImex1, 1e-3).unwrap(),
            &params,
        )
        .unwrap();
        let mpfc = step_mpfc(
            &State::new(phi, Field::zeros(&grid), 1e-12, 0.0).unwrap(),
            &StepScheme::new(SchemeKind::MpfcImex1, 1e-3).unwrap(),
            &params,
        )
        .unwrap();
        for (a, b) in pfc.phi().values().iter().zip(mpfc.phi().values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_zero_lambda_reduces_to_mean_law() {
        let oracle = LinearModeOracle::new(0.0, 0.7, 0.3).unwrap();
        for &t in &[0.0, 0.5, 3.0] {
            let (c, v) = oracle.solve(0.2, 0.4, t).unwrap();
            let (m, mv) = mean_mode_exact(0.7, 0.2, 0.4, t).unwrap();
            assert!((c - m).abs() < 1e-14 && (v - mv).abs() < 1e-14);
        }
        let first = LinearModeOracle::new(0.0, 0.0, 0.3).unwrap();
        assert_eq!(first.solve(0.2, 9.0, 1.0).unwrap(), (0.2, 0.0));
        assert!(oracle.solve(1.0, 0.0, -1.0).is_err());
        assert!(LinearModeOracle::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn oracle_first_order_matches_quadrature() {
        let l = 4.0 * PI * PI;
        let oracle = LinearModeOracle::new(l, 0.0, 0.0).unwrap();
        assert!((oracle.sigma() - l * (l - 1.0).powi(2)).abs() < 1e-9 * oracle.sigma());
        let t = 1e-4;
        // RK4 on c' = -σc
        let sigma = oracle.sigma();
        let steps = 20_000;
        let h = t / steps as f64;
        let mut c = 1.0f64;
        for _ in 0..steps {
            let k1 = -sigma * c;
            let k2 = -sigma * (c + 0.5 * h * k1);
            let k3 = -sigma * (c + 0.5 * h * k2);
            let k4 = -sigma * (c + h * k3);
            c += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let (exact, _) = oracle.solve(1.0, 0.0, t).unwrap();
        assert!((exact - c).abs() < 1e-10);
    }

    #[test]
    fn oracle_regimes_match_rk4() {
        // underdamped, overdamped, and near-critical
        let cases = [(0.5, 58.0), (0.01, 10.0), (0.25, 1.0 - 1e-13), (0.3, -2.0)];
        for &(beta, sigma) in &cases {
            // choose λ = 1 and solve for ε so that σ(λ=1) = 1 - 2 + 1 - ε = -ε
            let oracle = LinearModeOracle::new(1.0, beta, -sigma).unwrap();
            assert!((oracle.sigma() - sigma).abs() < 1e-12);
            let (c, v) = oracle.solve(0.3, -0.7, 1.3).unwrap();
            let (cr, vr) = rk4_second_order(beta, sigma, 0.3, -0.7, 1.3, 200_000);
            assert!(
                (c - cr).abs() < 1e-9,
                "beta={beta} sigma={sigma}: {c} vs {cr}"
            );
            assert!(
                (v - vr).abs() < 1e-8,
                "beta={beta} sigma={sigma}: {v} vs {vr}"
            );
        }
    }

    #[test]
    fn oracle_singular_limit() {
        let l = 1.0;
        let eps = -2.0; // σ = 2
        let limit = LinearModeOracle::new(l, 0.0, eps)
            .unwrap()
            .solve(1.0, 0.5, 1.0)
            .unwrap()
            .0;
        let mut gaps = Vec::new();
        for &beta in &[1e-2, 1e-3, 1e-4, 1e-5] {
            let c = LinearModeOracle::new(l, beta, eps)
                .unwrap()
                .solve(1.0, 0.5, 1.0)
                .unwrap()
                .0;
            gaps.push((c - limit).abs());
        }
        for w in gaps.windows(2) {
            let ratio = w[0] / w[1];
            assert!(
                ratio > 8.0 && ratio < 12.0,
                "first-order approach in beta, got {ratio}"
            );
        }
    }

    #[test]
    fn mpfc_linear_mode_tracks_oracle() {
        // slow single mode: large β keeps √(σ/β) moderate
        let grid = Grid::new(1, 32).unwrap();
        let beta = 1e5;
        let params = ModelParams::new(beta, 0.5)
            .unwrap()
            .with_nonlinearity(Nonlinearity::Linear)
            .unwrap();
        let phi = Field::from_fn(&grid, |x| 0.1 * (2.0 * PI * x[0]).cos());
        let s = State::new(phi, Field::zeros(&grid), beta, 0.0).unwrap();
        let mut errors = Vec::new();
        for &dt in &[1.0 / 64.0, 1.0 / 128.0] {
            let steps = (1.0 / dt) as usize;
            let end = integrate(&s, dt, &params, steps, |_, _| {}).unwrap();
            let exact = linear_oracle_state(&s, 0.5, 1.0).unwrap();
            let err = end.phi().sub(exact.phi()).unwrap();
            errors.push(hm_norm_sq(&err, SobolevLevel::L2).sqrt());
        }
        let ratio = errors[0] / errors[1];
        assert!((ratio - 2.0).abs() < 0.2, "{errors:?}");
    }

    #[test]
    fn energy_identity_vanishes_on_stationary_state() {
        let grid = Grid::new(1, 32).unwrap();
        let params = ModelParams::new(0.5, 0.5).unwrap();
        let s = State::new(Field::constant(&grid, 0.3), Field::zeros(&grid), 0.5, 0.0).unwrap();
        let traj: Vec<State> = (0..5)
            .map(|i| State::from_parts(s.phi().clone(), s.phi_t().clone(), 0.5, i as f64 * 0.1))
            .collect();
        assert_eq!(energy_identity_residual(&traj, &params).unwrap(), 0.0);
        assert!(energy_identity_residual(&traj[..1], &params).is_err());
    }

    fn identity_residual(grid: &Arc<Grid>, beta: f64, mean_v: f64, dt: f64) -> f64 {
        let params = ModelParams::new(beta, 0.5).unwrap();
        let phi = Field::from_fn(grid, |x| 0.1 + 0.05 * (2.0 * PI * x[0]).cos());
        let v = if beta == 0.0 {
            Field::zeros(grid)
        } else {
            Field::from_fn(grid, |x| mean_v + 0.05 * (2.0 * PI * x[0]).sin())
        };
        let s = State::new(phi, v, beta, 0.0).unwrap();
        let mut ledger = EnergyIdentity::new(&s, &params);
        let steps = (0.02 / dt).round() as usize;
        integrate(&s, dt, &params, steps, |n, st| {
            if n > 0 {
                ledger.push(st).unwrap();
            }
        })
        .unwrap();
        ledger.residual()
    }

    #[test]
    fn energy_identity_residual_is_first_order() {
        let grid = Grid::new(1, 32).unwrap();
        for &(beta, mean_v) in &[(1.0, 0.0), (0.0, 0.0)] {
            let coarse = identity_residual(&grid, beta, mean_v, 2e-5);
            let fine = identity_residual(&grid, beta, mean_v, 1e-5);
            let slope = (coarse / fine).log2();
            assert!(
                slope >= 0.9,
                "beta={beta}: slope {slope} ({coarse} -> {fine})"
            );
        }
    }
}
