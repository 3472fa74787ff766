//! Periodic grids on the unit box, real fields with a cached Fourier
//! representation, and the Sobolev-scale norms built from them.
//!
//! Spectral coefficients are normalised so that the `κ = 0` coefficient is
//! the spatial mean:
//!
//! ```text
//! û(κ) = N⁻¹ Σ_j u(x_j) e^{-2πi κ·x_j},      u(x_j) = Σ_κ û(κ) e^{2πi κ·x_j}
//! ```
//!
//! With this convention `Σ_κ |û(κ)|²` equals the mean of `u²`, which is the
//! squared L² norm on the unit box.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Highest Sobolev index for which multi-index weights are tabulated.
pub const MAX_SOBOLEV: usize = 5;

/// Uniform periodic lattice on `(0,1)^dim` with its wavenumber tables.
pub struct Grid {
    shape: Vec<usize>,
    len: usize,
    kappa: Vec<i64>,
    lambda: Vec<f64>,
    dealias: Vec<bool>,
    // hm_weights[m][idx] = Σ_{|α|≤m} Π_j (2πκ_j)^{2α_j}
    hm_weights: Vec<Vec<f64>>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("shape", &self.shape).finish()
    }
}

impl Grid {
    /// Cubic grid with `n` points along each of `dim` axes.
    pub fn new(dim: usize, n: usize) -> Result<Arc<Grid>> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        Grid::with_shape(&vec![n; dim])
    }

    pub fn with_shape(shape: &[usize]) -> Result<Arc<Grid>> {
        let dim = shape.len();
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        for &n in shape {
            if n < 4 || !n.is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "axis length {n} is not a power of two >= 4"
                )));
            }
        }
        let len: usize = shape.iter().product();
        let mut kappa = vec![0i64; len * dim];
        let mut lambda = vec![0.0; len];
        let mut dealias = vec![true; len];
        let mut hm_weights = vec![vec![0.0; len]; MAX_SOBOLEV + 1];
        let two_pi = 2.0 * std::f64::consts::PI;

        let mut index = vec![0usize; dim];
        for idx in 0..len {
            let mut h = [0.0f64; MAX_SOBOLEV + 1];
            h[0] = 1.0;
            for axis in 0..dim {
                let n = shape[axis];
                let i = index[axis];
                let k = if i < n / 2 {
                    i as i64
                } else {
                    i as i64 - n as i64
                };
                kappa[idx * dim + axis] = k;
                if 3 * k.unsigned_abs() as usize > n {
                    dealias[idx] = false;
                }
                let x = (two_pi * k as f64).powi(2);
                lambda[idx] += x;
                // fold one more variable into the complete homogeneous sums
                let mut next = [0.0f64; MAX_SOBOLEV + 1];
                for (j, slot) in next.iter_mut().enumerate() {
                    let mut p = 1.0;
                    for a in 0..=j {
                        *slot += p * h[j - a];
                        p *= x;
                    }
                }
                h = next;
            }
            let mut acc = 0.0;
            for (m, weights) in hm_weights.iter_mut().enumerate() {
                acc += h[m];
                weights[idx] = acc;
            }
            // advance the row-major multi-index, last axis fastest
            for axis in (0..dim).rev() {
                index[axis] += 1;
                if index[axis] < shape[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }

        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();

        Ok(Arc::new(Grid {
            shape: shape.to_vec(),
            len,
            kappa,
            lambda,
            dealias,
            hm_weights,
            forward,
            inverse,
        }))
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Total number of grid points (and of Fourier modes).
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Integer frequency vector of mode `idx`.
    pub fn kappa(&self, idx: usize) -> &[i64] {
        let d = self.dim();
        &self.kappa[idx * d..(idx + 1) * d]
    }

    /// `|2πκ|²` per mode, i.e. the symbol of `-Δ`.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// `true` for modes that survive the two-thirds rule.
    pub fn dealias_mask(&self) -> &[bool] {
        &self.dealias
    }

    pub(crate) fn hm_weights(&self, m: usize) -> &[f64] {
        &self.hm_weights[m]
    }

    /// Physical coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut rem = idx;
        let mut x = vec![0.0; self.dim()];
        for axis in (0..self.dim()).rev() {
            let n = self.shape[axis];
            x[axis] = (rem % n) as f64 / n as f64;
            rem /= n;
        }
        x
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other) || self.shape == other.shape
    }

    fn transform(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        let mut stride = self.len;
        let mut scratch = Vec::new();
        let mut line = Vec::new();
        for (axis, plan) in plans.iter().enumerate() {
            let n = self.shape[axis];
            stride /= n;
            scratch.resize(plan.get_inplace_scratch_len(), Complex64::default());
            if stride == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    plan.process_with_scratch(chunk, &mut scratch);
                }
                continue;
            }
            line.resize(n, Complex64::default());
            let block = n * stride;
            for base in (0..self.len).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (i, c) in line.iter_mut().enumerate() {
                        *c = data[start + i * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (i, c) in line.iter().enumerate() {
                        data[start + i * stride] = *c;
                    }
                }
            }
        }
    }

    pub(crate) fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.forward);
        let scale = 1.0 / self.len as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        data
    }

    pub(crate) fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        let mut data = spectrum.to_vec();
        self.transform(&mut data, &self.inverse);
        data.into_iter().map(|c| c.re).collect()
    }
}

/// Real scalar samples on a [`Grid`] together with their Fourier
/// coefficients. At least one representation is always present; the other is
/// computed on first access and cached.
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: OnceLock<Vec<f64>>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("mean", &self.spectrum()[0].re)
            .finish()
    }
}

impl Field {
    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        let values_cell = OnceLock::new();
        let _ = values_cell.set(values);
        Ok(Field {
            grid: Arc::clone(grid),
            values: values_cell,
            spectrum: OnceLock::new(),
        })
    }

    /// Builds a field from Fourier coefficients. The coefficients are taken
    /// as given; callers are responsible for conjugate symmetry.
    pub fn from_spectrum(grid: &Arc<Grid>, spectrum: Vec<Complex64>) -> Result<Field> {
        if spectrum.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                spectrum.len()
            )));
        }
        let cell = OnceLock::new();
        let _ = cell.set(spectrum);
        Ok(Field {
            grid: Arc::clone(grid),
            values: OnceLock::new(),
            spectrum: cell,
        })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Field {
        Field::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Field {
        let mut spectrum = vec![Complex64::default(); grid.len()];
        spectrum[0] = Complex64::new(c, 0.0);
        let field = Field::from_spectrum(grid, spectrum).expect("length matches grid");
        let _ = field.values.set(vec![c; grid.len()]);
        field
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(&[f64]) -> f64) -> Field {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Field::from_values(grid, values).expect("length matches grid")
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        self.values.get_or_init(|| {
            let spectrum = self.spectrum.get().expect("field has no representation");
            self.grid.inverse(spectrum)
        })
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| {
            let values = self.values.get().expect("field has no representation");
            self.grid.forward(values)
        })
    }

    pub fn ensure_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        match (self.values.get(), self.spectrum.get()) {
            (Some(v), _) => v.iter().all(|x| x.is_finite()),
            (None, Some(s)) => s.iter().all(|c| c.re.is_finite() && c.im.is_finite()),
            (None, None) => unreachable!("field has no representation"),
        }
    }

    /// Pointwise map in physical space.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let values = self.values().iter().map(|&v| f(v)).collect();
        Field::from_values(&self.grid, values).expect("length matches grid")
    }

    /// Multiplies every Fourier coefficient by a real symbol of the mode index.
    pub fn apply_symbol(&self, symbol: impl Fn(usize) -> f64) -> Field {
        let spectrum = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(i, c)| c * symbol(i))
            .collect();
        Field::from_spectrum(&self.grid, spectrum).expect("length matches grid")
    }

    /// `a·self + b·other`, evaluated in whichever representation both share.
    pub fn lin_comb(&self, a: f64, other: &Field, b: f64) -> Result<Field> {
        self.ensure_same_grid(other)?;
        if let (Some(x), Some(y)) = (self.values.get(), other.values.get()) {
            let values = x.iter().zip(y).map(|(x, y)| a * x + b * y).collect();
            return Field::from_values(&self.grid, values);
        }
        let spectrum = self
            .spectrum()
            .iter()
            .zip(other.spectrum())
            .map(|(x, y)| x * a + y * b)
            .collect();
        Field::from_spectrum(&self.grid, spectrum)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn scale(&self, a: f64) -> Field {
        if let Some(v) = self.values.get() {
            let values = v.iter().map(|x| a * x).collect();
            Field::from_values(&self.grid, values).expect("length matches grid")
        } else {
            self.apply_symbol(|_| a)
        }
    }
}

/// Index `m` of the periodic Sobolev space `H^m_p`, restricted to `-1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SobolevLevel(i32);

impl SobolevLevel {
    pub const H_MINUS_1: SobolevLevel = SobolevLevel(-1);
    pub const L2: SobolevLevel = SobolevLevel(0);
    pub const H1: SobolevLevel = SobolevLevel(1);
    pub const H2: SobolevLevel = SobolevLevel(2);

    pub fn new(m: i32) -> Result<SobolevLevel> {
        if (-1..=MAX_SOBOLEV as i32).contains(&m) {
            Ok(SobolevLevel(m))
        } else {
            Err(Error::UnsupportedLevel(m))
        }
    }

    pub fn get(self) -> i32 {
        self.0
    }
}

impl TryFrom<i32> for SobolevLevel {
    type Error = Error;

    fn try_from(m: i32) -> Result<Self> {
        SobolevLevel::new(m)
    }
}

/// Spatial mean `⟨u⟩`, read off the zero mode.
pub fn mean(u: &Field) -> Result<f64> {
    if !u.is_finite() {
        return Err(Error::InvalidField);
    }
    Ok(u.spectrum()[0].re)
}

/// `u - ⟨u⟩`.
pub fn zero_mean(u: &Field) -> Field {
    u.apply_symbol(|i| if i == 0 { 0.0 } else { 1.0 })
}

/// `A₀^s` with `A₀ = -Δ` on zero-mean functions: mode `κ ≠ 0` is scaled by
/// `|2πκ|^{2s}` and the mean is dropped.
pub fn inv_laplacian_pow(u: &Field, s: f64) -> Field {
    let lambda = u.grid().lambda();
    u.apply_symbol(|i| if i == 0 { 0.0 } else { lambda[i].powf(s) })
}

/// `Δu`.
pub fn laplacian(u: &Field) -> Field {
    let lambda = u.grid().lambda();
    u.apply_symbol(|i| -lambda[i])
}

/// Two-thirds-rule projection.
pub fn dealias(u: &Field) -> Field {
    let mask = u.grid().dealias_mask();
    u.apply_symbol(|i| if mask[i] { 1.0 } else { 0.0 })
}

/// Norm of `H^m_p(Q)`. For `m ≥ 0` this is the full multi-index sum
/// `Σ_{|α|≤m} ‖D^α u‖²`; for `m = -1` it is `(‖∇ψ_u‖² + ⟨u⟩²)^{1/2}` where
/// `-Δψ_u = u - ⟨u⟩`.
pub fn hm_norm(u: &Field, m: SobolevLevel) -> f64 {
    let scale = spectral_scale(u);
    if scale == 0.0 {
        return 0.0;
    }
    scale * scaled_norm_sq(u, m, scale).sqrt()
}

pub fn hm_norm_sq(u: &Field, m: SobolevLevel) -> f64 {
    scaled_norm_sq(u, m, 1.0)
}

/// Largest coefficient magnitude; used to keep norms of tiny fields from
/// underflowing when squared.
fn spectral_scale(u: &Field) -> f64 {
    u.spectrum()
        .iter()
        .map(|c| c.re.abs().max(c.im.abs()))
        .fold(0.0, f64::max)
}

/// `‖u / scale‖²_m`.
fn scaled_norm_sq(u: &Field, m: SobolevLevel, scale: f64) -> f64 {
    let spectrum = u.spectrum();
    if m.0 < 0 {
        let lambda = u.grid().lambda();
        let tail: f64 = spectrum
            .iter()
            .zip(lambda)
            .skip(1)
            .map(|(c, l)| (c / scale).norm_sqr() / l)
            .sum();
        return tail + (spectrum[0] / scale).norm_sqr();
    }
    let weights = u.grid().hm_weights(m.0 as usize);
    spectrum
        .iter()
        .zip(weights)
        .map(|(c, w)| (c / scale).norm_sqr() * w)
        .sum()
}

/// Norm of the product space `𝕏_level^β = H^{level+2} × √β H^{level-1}`.
/// For `β = 0` the second component does not contribute.
pub fn x_norm(u: &Field, v: &Field, beta: f64, level: u32) -> Result<f64> {
    if level > 3 {
        return Err(Error::LevelOutOfRange(level));
    }
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::param("beta", format!("{beta} is negative")));
    }
    u.ensure_same_grid(v)?;
    let scale = if beta == 0.0 {
        spectral_scale(u)
    } else {
        spectral_scale(u).max(spectral_scale(v))
    };
    if scale == 0.0 {
        return Ok(0.0);
    }
    let first = scaled_norm_sq(u, SobolevLevel(level as i32 + 2), scale);
    let second = if beta == 0.0 {
        0.0
    } else {
        beta * scaled_norm_sq(v, SobolevLevel(level as i32 - 1), scale)
    };
    Ok(scale * (first + second).sqrt())
}

/// Zero-mean random field built from the modes with every `|κ_j| ≤ max_mode`,
/// rescaled so that its largest absolute sample equals `amplitude`.
pub fn random_band_limited<R: rand::Rng + ?Sized>(
    grid: &Arc<Grid>,
    max_mode: usize,
    amplitude: f64,
    rng: &mut R,
) -> Result<Field> {
    if max_mode == 0 || grid.shape().iter().any(|&n| 3 * max_mode > n) {
        return Err(Error::param(
            "max_mode",
            format!("{max_mode} must lie in 1..=n/3 for every axis"),
        ));
    }
    let dim = grid.dim();
    let mut spectrum = vec![Complex64::default(); grid.len()];
    let mut partner = vec![0i64; dim];
    for idx in 1..grid.len() {
        let k = grid.kappa(idx);
        if k.iter().any(|&c| c.unsigned_abs() as usize > max_mode) {
            continue;
        }
        // draw once per ±κ pair: keep the representative whose first nonzero
        // component is positive
        let first = k.iter().find(|&&c| c != 0).copied().unwrap_or(0);
        if first < 0 {
            continue;
        }
        let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        spectrum[idx] = c;
        for (p, &kc) in partner.iter_mut().zip(k) {
            *p = -kc;
        }
        let mirror = mode_index(grid, &partner);
        spectrum[mirror] = c.conj();
    }
    let field = Field::from_spectrum(grid, spectrum)?;
    let peak = field.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(field);
    }
    Ok(field.scale(amplitude / peak))
}

/// Row-major index of integer frequency `kappa`.
pub fn mode_index(grid: &Grid, kappa: &[i64]) -> usize {
    let mut idx = 0usize;
    for (axis, &k) in kappa.iter().enumerate() {
        let n = grid.shape()[axis] as i64;
        idx = idx * n as usize + k.rem_euclid(n) as usize;
    }
    idx
}
