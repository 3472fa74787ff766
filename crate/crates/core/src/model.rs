//! Model parameters, the cubic nonlinearity with its monotone splitting, the
//! free energy, and the closed-form evolution of the spatial means.

use crate::error::{Error, Result};
use crate::spectral::{self, dealias, hm_norm_sq, zero_mean, Field, SobolevLevel};

/// Which nonlinearity enters the chemical potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Nonlinearity {
    /// `f(s) = s³ + (1-ε)s`
    #[default]
    Cubic,
    /// `f(s) = (1-ε)s`; the cubic term is switched off. Used for linear
    /// convergence studies against [`crate::integrators::LinearModeOracle`].
    Linear,
}

/// Splitting constant used when none is given: `max(1, ε - 1 + 0.1)`.
pub fn default_k_split(epsilon: f64) -> f64 {
    1f64.max(epsilon - 1.0 + 0.1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    beta: f64,
    epsilon: f64,
    k_split: f64,
    beta0: f64,
    nonlinearity: Nonlinearity,
}

impl ModelParams {
    /// Parameters with the default splitting constant and `β₀ = max(β, 1)`.
    pub fn new(beta: f64, epsilon: f64) -> Result<ModelParams> {
        ModelParams {
            beta,
            epsilon,
            k_split: default_k_split(epsilon),
            beta0: beta.max(1.0),
            nonlinearity: Nonlinearity::Cubic,
        }
        .validated()
    }

    pub fn with_k_split(self, k_split: f64) -> Result<ModelParams> {
        ModelParams { k_split, ..self }.validated()
    }

    pub fn with_beta0(self, beta0: f64) -> Result<ModelParams> {
        ModelParams { beta0, ..self }.validated()
    }

    pub fn with_beta(self, beta: f64) -> Result<ModelParams> {
        ModelParams { beta, ..self }.validated()
    }

    pub fn with_nonlinearity(self, nonlinearity: Nonlinearity) -> Result<ModelParams> {
        ModelParams {
            nonlinearity,
            ..self
        }
        .validated()
    }

    fn validated(self) -> Result<ModelParams> {
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::param("beta", format!("{} must be >= 0", self.beta)));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::param("epsilon", "must be finite"));
        }
        if !self.beta0.is_finite() || self.beta0 <= 0.0 {
            return Err(Error::param("beta0", format!("{} must be > 0", self.beta0)));
        }
        if self.beta > self.beta0 {
            return Err(Error::param(
                "beta",
                format!("{} exceeds beta0 = {}", self.beta, self.beta0),
            ));
        }
        let k_min = 0f64.max(self.epsilon - 1.0);
        if !self.k_split.is_finite() || self.k_split < k_min {
            return Err(Error::param(
                "k_split",
                format!("{} is below max(0, epsilon - 1) = {k_min}", self.k_split),
            ));
        }
        Ok(self)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn k_split(&self) -> f64 {
        self.k_split
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }
}

/// `f(s)`.
pub fn f_eval(s: f64, params: &ModelParams) -> f64 {
    let linear = (1.0 - params.epsilon) * s;
    match params.nonlinearity {
        Nonlinearity::Cubic => s * s * s + linear,
        Nonlinearity::Linear => linear,
    }
}

/// `f_k(s) = f(s) + k s`, nondecreasing whenever `k ≥ max(0, ε-1)`.
pub fn fk_eval(s: f64, params: &ModelParams) -> f64 {
    f_eval(s, params) + params.k_split * s
}

/// Double-well density `F(s) = (1-ε)s²/2 + s⁴/4`, bounded below by `-(1-ε)²/4`.
pub fn free_energy_density(s: f64, params: &ModelParams) -> f64 {
    let quadratic = 0.5 * (1.0 - params.epsilon) * s * s;
    match params.nonlinearity {
        Nonlinearity::Cubic => quadratic + 0.25 * s * s * s * s,
        Nonlinearity::Linear => quadratic,
    }
}

/// `E(φ) = ∫ ½|Δφ|² - |∇φ|² + F(φ)`. Quadratic terms are summed exactly in
/// Fourier space; the `F` term uses the equal-weight grid rule.
pub fn energy(phi: &Field, params: &ModelParams) -> f64 {
    let lambda = phi.grid().lambda();
    let quadratic: f64 = phi
        .spectrum()
        .iter()
        .zip(lambda)
        .map(|(c, &l)| (0.5 * l * l - l) * c.norm_sqr())
        .sum();
    let values = phi.values();
    let potential = values
        .iter()
        .map(|&s| free_energy_density(s, params))
        .sum::<f64>()
        / values.len() as f64;
    quadratic + potential
}

/// Point `(φ, φ_t)` of the phase space `𝕏₀^β` at time `time`.
#[derive(Debug, Clone)]
pub struct State {
    phi: Field,
    phi_t: Field,
    beta: f64,
    time: f64,
}

impl State {
    pub fn new(phi: Field, phi_t: Field, beta: f64, time: f64) -> Result<State> {
        phi.ensure_same_grid(&phi_t)?;
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::param("beta", format!("{beta} must be >= 0")));
        }
        if !time.is_finite() || time < 0.0 {
            return Err(Error::NegativeTime(time));
        }
        if beta == 0.0 && phi_t.values().iter().any(|&v| v != 0.0) {
            return Err(Error::InvalidState(
                "a beta = 0 state must carry phi_t = 0".into(),
            ));
        }
        Ok(State {
            phi,
            phi_t,
            beta,
            time,
        })
    }

    /// PFC state `(φ, 0)`.
    pub fn pfc(phi: Field, time: f64) -> Result<State> {
        let zero = Field::zeros(phi.grid());
        State::new(phi, zero, 0.0, time)
    }

    pub fn phi(&self) -> &Field {
        &self.phi
    }

    pub fn phi_t(&self) -> &Field {
        &self.phi_t
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn x_norm(&self, level: u32) -> Result<f64> {
        spectral::x_norm(&self.phi, &self.phi_t, self.beta, level)
    }

    pub fn charge(&self) -> ConservedCharge {
        ConservedCharge::of(self)
    }

    pub(crate) fn from_parts(phi: Field, phi_t: Field, beta: f64, time: f64) -> State {
        State {
            phi,
            phi_t,
            beta,
            time,
        }
    }
}

/// `β⟨φ_t⟩ + ⟨φ⟩`, invariant along MPFC trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConservedCharge {
    pub value: f64,
}

impl ConservedCharge {
    pub fn of(state: &State) -> ConservedCharge {
        let m_phi = state.phi.spectrum()[0].re;
        let m_phit = state.phi_t.spectrum()[0].re;
        ConservedCharge {
            value: state.beta * m_phit + m_phi,
        }
    }
}

/// `(β/2)‖φ̄_t‖²₋₁ + E(φ)`.
pub fn full_energy(state: &State, params: &ModelParams) -> f64 {
    let kinetic = if state.beta == 0.0 {
        0.0
    } else {
        0.5 * state.beta * hm_norm_sq(&zero_mean(&state.phi_t), SobolevLevel::H_MINUS_1)
    };
    kinetic + energy(&state.phi, params)
}

/// Exact solution of `βm'' + m' = 0` with `m(0) = mean_phi0`,
/// `m'(0) = mean_phi1`, returned as `(m(t), m'(t))`. For `β = 0` the mass is
/// conserved and the velocity is zero.
pub fn mean_mode_exact(beta: f64, mean_phi0: f64, mean_phi1: f64, t: f64) -> Result<(f64, f64)> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::NegativeTime(t));
    }
    if beta < 0.0 || beta.is_nan() {
        return Err(Error::param("beta", format!("{beta} must be >= 0")));
    }
    if beta == 0.0 {
        return Ok((mean_phi0, 0.0));
    }
    let decay = (-t / beta).exp();
    // β(1 - e^{-t/β}) without cancellation for small t/β
    let gain = -beta * (-t / beta).exp_m1();
    Ok((mean_phi0 + mean_phi1 * gain, mean_phi1 * decay))
}

/// Dealiased spectrum of `g(φ)` for a pointwise map `g`.
pub(crate) fn nonlinear_spectrum(phi: &Field, g: impl Fn(f64) -> f64) -> Field {
    dealias(&phi.map(g))
}

/// `Δ[Δ²φ + 2Δφ + f(φ)]`, with the nonlinear product dealiased.
pub fn rhs_pfc(phi: &Field, params: &ModelParams) -> Field {
    let nonlinear = nonlinear_spectrum(phi, |s| f_eval(s, params));
    let lambda = phi.grid().lambda();
    let spectrum = phi
        .spectrum()
        .iter()
        .zip(nonlinear.spectrum())
        .zip(lambda)
        .map(|((c, n), &l)| -(c * ((l * l - 2.0 * l) * l)) - n * l)
        .collect();
    Field::from_spectrum(phi.grid(), spectrum).expect("length matches grid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{mean, Grid};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn params(beta: f64, eps: f64) -> ModelParams {
        ModelParams::new(beta, eps).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(ModelParams::new(-1.0, 0.5).is_err());
        assert!(ModelParams::new(0.5, f64::NAN).is_err());
        let p = params(0.5, 3.0);
        assert_relative_eq!(p.k_split(), 2.1);
        assert!(p.with_k_split(1.5).is_err());
        assert!(p.with_beta0(0.1).is_err());
        assert_eq!(params(0.0, 0.5).k_split(), 1.0);
        match ModelParams::new(-1.0, 0.0) {
            Err(Error::InvalidParameter { name, .. }) => assert_eq!(name, "beta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn f_examples() {
        assert_eq!(f_eval(0.0, &params(0.0, 0.0)), 0.0);
        assert_eq!(f_eval(1.0, &params(0.0, 0.0)), 2.0);
        assert_eq!(f_eval(2.0, &params(0.0, 0.25)), 9.5);
    }

    #[test]
    fn fk_examples() {
        let p = params(0.0, 0.5).with_k_split(0.0).unwrap();
        assert_eq!(fk_eval(0.7, &p), f_eval(0.7, &p));
        assert_eq!(fk_eval(0.0, &params(0.0, 0.5)), 0.0);
        let p = params(0.0, 2.0).with_k_split(1.0).unwrap();
        assert_eq!(fk_eval(1.0, &p), 1.0);
        let mut prev = f64::NEG_INFINITY;
        for i in -400..=400 {
            let v = fk_eval(i as f64 * 0.01, &p);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn free_energy_examples() {
        assert_eq!(free_energy_density(0.0, &params(0.0, 0.3)), 0.0);
        // ε = 0: F ≥ 0 with its minimum at s = 0
        let p = params(0.0, 0.0);
        let min = (-2000..=2000)
            .map(|i| free_energy_density(i as f64 * 1e-3, &p))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min, 0.0);
        // ε = 2: F = -s²/2 + s⁴/4 has minimum -1/4 at s = ±1
        let p = params(0.0, 2.0);
        assert_relative_eq!(free_energy_density(1.0, &p), -0.25);
        assert_relative_eq!(free_energy_density(-1.0, &p), -0.25);
    }

    #[test]
    fn free_energy_lower_bound_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1_000_000 {
            let s: f64 = rng.gen_range(-10.0..10.0);
            let eps: f64 = rng.gen_range(-2.0..2.0);
            let p = params(0.0, eps);
            let bound = -(1.0 - eps).powi(2) / 4.0;
            assert!(free_energy_density(s, &p) >= bound - 1e-12);
        }
    }

    #[test]
    fn energy_examples() {
        let grid = Grid::new(1, 64).unwrap();
        let p = params(0.0, 0.3);
        assert_eq!(energy(&Field::zeros(&grid), &p), 0.0);
        let c = 0.4;
        assert_relative_eq!(
            energy(&Field::constant(&grid, c), &p),
            free_energy_density(c, &p),
            max_relative = 1e-14
        );
        let a = 0.2;
        let phi = Field::from_fn(&grid, |x| a * (2.0 * PI * x[0]).cos());
        let l = 4.0 * PI * PI;
        let expected = a * a * l * l / 4.0 - a * a * l / 2.0
            + (1.0 - 0.3) * a * a / 4.0
            + 3.0 * a.powi(4) / 32.0;
        assert_relative_eq!(energy(&phi, &p), expected, max_relative = 1e-13);
    }

    #[test]
    fn full_energy_examples() {
        let grid = Grid::new(1, 64).unwrap();
        let p = params(0.0, 0.5);
        let phi = Field::from_fn(&grid, |x| 0.1 * (2.0 * PI * x[0]).sin());
        let s = State::pfc(phi.clone(), 0.0).unwrap();
        assert_eq!(full_energy(&s, &p), energy(&phi, &p));
        let s = State::new(phi.clone(), Field::constant(&grid, 0.3), 0.5, 0.0).unwrap();
        assert_relative_eq!(full_energy(&s, &p), energy(&phi, &p), max_relative = 1e-15);
        let v = Field::from_fn(&grid, |x| (2.0 * PI * x[0]).cos());
        let s = State::new(Field::zeros(&grid), v, 2.0, 0.0).unwrap();
        assert_relative_eq!(
            full_energy(&s, &p),
            1.0 / (8.0 * PI * PI),
            max_relative = 1e-13
        );
    }

    #[test]
    fn state_invariants() {
        let grid = Grid::new(1, 16).unwrap();
        let other = Grid::new(1, 32).unwrap();
        let one = Field::constant(&grid, 1.0);
        assert!(State::new(one.clone(), one.clone(), 0.0, 0.0).is_err());
        assert!(State::new(one.clone(), Field::zeros(&other), 0.5, 0.0).is_err());
        assert!(State::new(one.clone(), one.clone(), 0.5, -1.0).is_err());
        assert!(State::new(one.clone(), one, 0.5, 0.0).is_ok());
    }

    #[test]
    fn mean_mode_examples() {
        for &t in &[0.0, 0.3, 2.0, 50.0] {
            assert_eq!(mean_mode_exact(0.7, 0.2, 0.0, t).unwrap(), (0.2, 0.0));
        }
        let (m, v) = mean_mode_exact(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(m, 1.0 - (-1f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(v, (-1f64).exp(), max_relative = 1e-15);
        let (m, v) = mean_mode_exact(0.5, 0.1, 0.3, 1e3).unwrap();
        assert_relative_eq!(m, 0.5 * 0.3 + 0.1, max_relative = 1e-15);
        assert_eq!(v, 0.0);
        assert_eq!(mean_mode_exact(0.0, 0.4, 0.9, 3.0).unwrap(), (0.4, 0.0));
        assert!(matches!(
            mean_mode_exact(1.0, 0.0, 0.0, -0.1),
            Err(Error::NegativeTime(_))
        ));
    }

    #[test]
    fn mean_mode_matches_scalar_integrator() {
        // RK4 on m' = v, v' = -v/β
        let (beta, mut m, mut v) = (1.0, 0.0, 1.0);
        let h = 1e-4;
        for _ in 0..10_000 {
            let k1 = (v, -v / beta);
            let k2 = (v + 0.5 * h * k1.1, -(v + 0.5 * h * k1.1) / beta);
            let k3 = (v + 0.5 * h * k2.1, -(v + 0.5 * h * k2.1) / beta);
            let k4 = (v + h * k3.1, -(v + h * k3.1) / beta);
            m += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        let (me, ve) = mean_mode_exact(beta, 0.0, 1.0, 1.0).unwrap();
        assert!((m - me).abs() < 1e-12);
        assert!((v - ve).abs() < 1e-12);
    }

    #[test]
    fn mean_mode_conserves_charge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let beta: f64 = rng.gen_range(1e-3..5.0);
            let m0: f64 = rng.gen_range(-1.0..1.0);
            let m1: f64 = rng.gen_range(-1.0..1.0);
            let t: f64 = rng.gen_range(0.0..20.0);
            let (m, v) = mean_mode_exact(beta, m0, m1, t).unwrap();
            assert!((beta * v + m - (beta * m1 + m0)).abs() <= 1e-14);
        }
    }

    #[test]
    fn rhs_examples() {
        let grid = Grid::new(1, 64).unwrap();
        let p = params(0.0, 0.5);
        let r = rhs_pfc(&Field::constant(&grid, 0.3), &p);
        assert!(r.values().iter().all(|v| v.abs() < 1e-12));

        let lin = p.with_nonlinearity(Nonlinearity::Linear).unwrap();
        for k in 1..=3 {
            let phi = Field::from_fn(&grid, |x| (2.0 * PI * k as f64 * x[0]).cos());
            let l = (2.0 * PI * k as f64).powi(2);
            let rate = -l * (l * l - 2.0 * l + 1.0 - 0.5);
            let r = rhs_pfc(&phi, &lin);
            // compare in Fourier space: rounding noise in the top modes is
            // amplified by λ³ and would swamp a pointwise comparison
            let idx = k as usize;
            let got = r.spectrum()[idx];
            assert!(
                (got.re - rate * 0.5).abs() <= 1e-12 * rate.abs(),
                "{k}: {got} vs {}",
                rate * 0.5
            );
            assert!(got.im.abs() <= 1e-12 * rate.abs());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u =
            Field::from_values(&grid, (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        assert_eq!(mean(&rhs_pfc(&u, &p)).unwrap(), 0.0);
    }

    #[test]
    fn energy_gradient_matches_chemical_potential() {
        let grid = Grid::new(1, 64).unwrap();
        let p = params(0.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let phi = crate::spectral::random_band_limited(&grid, 8, 0.3, &mut rng)
                .unwrap()
                .add(&Field::constant(&grid, 0.1))
                .unwrap();
            let v = crate::spectral::random_band_limited(&grid, 8, 1.0, &mut rng).unwrap();
            let h = 1e-5;
            let plus = energy(&phi.lin_comb(1.0, &v, h).unwrap(), &p);
            let minus = energy(&phi.lin_comb(1.0, &v, -h).unwrap(), &p);
            let fd = (plus - minus) / (2.0 * h);
            // μ = Δ²φ + 2Δφ + f(φ), paired with v by the grid rule
            let lambda = grid.lambda();
            let linear = phi.apply_symbol(|i| lambda[i] * lambda[i] - 2.0 * lambda[i]);
            let mu: Vec<f64> = linear
                .values()
                .iter()
                .zip(phi.values())
                .map(|(l, &s)| l + f_eval(s, &p))
                .collect();
            let exact = mu.iter().zip(v.values()).map(|(a, b)| a * b).sum::<f64>() / 64.0;
            assert!((fd - exact).abs() <= 1e-6 * exact.abs(), "{fd} vs {exact}");
        }
    }
}
